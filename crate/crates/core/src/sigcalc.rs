//! Signature and scale bookkeeping for components, products and norms, and
//! the per-term balance audit of registered equations.
//!
//! All arithmetic is exact: signatures are multiples of 1/2, norm exponents
//! are rationals with small denominators.

use std::fmt;
use std::ops::{Add, Neg, Sub};

use serde::{Serialize, Serializer};

use crate::null_state::{Comp, Family};

/// Exact rational number in lowest terms with a positive denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rational {
    num: i64,
    den: i64,
}

fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

impl Rational {
    pub fn new(num: i64, den: i64) -> Rational {
        assert!(den != 0, "zero denominator");
        let g = gcd(num, den);
        let s = if den < 0 { -1 } else { 1 };
        Rational { num: s * num / g, den: s * den / g }
    }

    pub const fn int(n: i64) -> Rational {
        Rational { num: n, den: 1 }
    }

    pub fn half(n: i64) -> Rational {
        Rational::new(n, 2)
    }

    pub const ZERO: Rational = Rational { num: 0, den: 1 };

    pub fn num(self) -> i64 {
        self.num
    }

    pub fn den(self) -> i64 {
        self.den
    }

    pub fn is_zero(self) -> bool {
        self.num == 0
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn mul_int(self, k: i64) -> Rational {
        Rational::new(self.num * k, self.den)
    }
}

impl Add for Rational {
    type Output = Rational;
    fn add(self, o: Rational) -> Rational {
        Rational::new(self.num * o.den + o.num * self.den, self.den * o.den)
    }
}

impl Sub for Rational {
    type Output = Rational;
    fn sub(self, o: Rational) -> Rational {
        self + (-o)
    }
}

impl Neg for Rational {
    type Output = Rational;
    fn neg(self) -> Rational {
        Rational { num: -self.num, den: self.den }
    }
}

impl PartialOrd for Rational {
    fn partial_cmp(&self, o: &Rational) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}

impl Ord for Rational {
    fn cmp(&self, o: &Rational) -> std::cmp::Ordering {
        (self.num * o.den).cmp(&(o.num * self.den))
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl Serialize for Rational {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

/// Offset subtracted from the slot count of Maxwell components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// Maxwell components use offset 1/2 (sgn(alpha_F) = 1).
    Half,
    /// The generic offset 1 for every component.
    One,
}

impl Baseline {
    pub fn parse(s: &str) -> Option<Baseline> {
        match s {
            "half" => Some(Baseline::Half),
            "one" => Some(Baseline::One),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Baseline::Half => "half",
            Baseline::One => "one",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Geometric,
    Maxwell,
}

/// Frame-slot and derivative counts of a component or decorated factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SignatureTag {
    pub n4: u32,
    pub n3: u32,
    pub na: u32,
    pub d4: u32,
    pub d3: u32,
    pub da: u32,
    pub kind: Kind,
}

impl SignatureTag {
    const fn geo(n4: u32, n3: u32, na: u32) -> Self {
        SignatureTag { n4, n3, na, d4: 0, d3: 0, da: 0, kind: Kind::Geometric }
    }

    const fn mx(n4: u32, n3: u32, na: u32) -> Self {
        SignatureTag { n4, n3, na, d4: 0, d3: 0, da: 0, kind: Kind::Maxwell }
    }

    pub fn with_derivs(mut self, d4: u32, d3: u32, da: u32) -> Self {
        self.d4 += d4;
        self.d3 += d3;
        self.da += da;
        self
    }
}

/// Slot counts of every component, read off its frame definition.
pub fn tag_of(c: Comp) -> SignatureTag {
    use Comp::*;
    match c {
        TrChi | ChiHat => SignatureTag::geo(1, 0, 2),
        TrChibTilde | ChibHat => SignatureTag::geo(0, 1, 2),
        Eta | Etab | Zeta => SignatureTag::geo(1, 1, 1),
        Omega | OmegaDag => SignatureTag::geo(2, 1, 0),
        Omegab | OmegabDag => SignatureTag::geo(1, 2, 0),
        Alpha => SignatureTag::geo(2, 0, 2),
        Beta => SignatureTag::geo(2, 1, 1),
        Rho | Sigma => SignatureTag::geo(2, 2, 0),
        Betab => SignatureTag::geo(1, 2, 1),
        Alphab => SignatureTag::geo(0, 2, 2),
        AlphaF => SignatureTag::mx(1, 0, 1),
        RhoF => SignatureTag::mx(1, 1, 0),
        SigmaF => SignatureTag::mx(0, 0, 2),
        AlphabF => SignatureTag::mx(0, 1, 1),
        Lapse => SignatureTag::geo(1, 1, 0),
        GaussK => SignatureTag::geo(0, 0, 2).with_derivs(0, 0, 2),
        // weight fixed by sgn(grad O) = 1/2
        RotO => SignatureTag::geo(0, 0, 2),
    }
}

/// sgn = N4 + Na/2 - b + d4 + dA/2 (d3 contributes nothing).
pub fn signature(tag: &SignatureTag, baseline: Baseline) -> Rational {
    let b = match (tag.kind, baseline) {
        (Kind::Geometric, _) | (Kind::Maxwell, Baseline::One) => Rational::int(1),
        (Kind::Maxwell, Baseline::Half) => Rational::half(1),
    };
    Rational::int((tag.n4 + tag.d4) as i64) + Rational::half((tag.na + tag.da) as i64) - b
}

/// sc = -sgn + 1/2.
pub fn scale(tag: &SignatureTag, baseline: Baseline) -> Rational {
    -signature(tag, baseline) + Rational::half(1)
}

/// One factor of a product term, with derivative decorations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Factor {
    pub comp: Comp,
    pub d4: u32,
    pub d3: u32,
    pub da: u32,
}

impl Factor {
    pub fn of(comp: Comp) -> Factor {
        Factor { comp, d4: 0, d3: 0, da: 0 }
    }

    pub fn d4(mut self) -> Factor {
        self.d4 += 1;
        self
    }

    pub fn d3(mut self) -> Factor {
        self.d3 += 1;
        self
    }

    pub fn da(mut self) -> Factor {
        self.da += 1;
        self
    }

    pub fn tag(&self) -> SignatureTag {
        tag_of(self.comp).with_derivs(self.d4, self.d3, self.da)
    }

    pub fn is_maxwell(&self) -> bool {
        self.comp.family() == Family::Maxwell
    }
}

/// Product of decorated factors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TermSpec {
    pub factors: Vec<Factor>,
}

impl TermSpec {
    pub fn new(factors: Vec<Factor>) -> TermSpec {
        assert!(!factors.is_empty(), "a term needs at least one factor");
        TermSpec { factors }
    }

    pub fn maxwell_count(&self) -> usize {
        self.factors.iter().filter(|f| f.is_maxwell()).count()
    }
}

/// Signature of a product: the sum of its factors' signatures.
pub fn term_signature(term: &TermSpec, baseline: Baseline) -> Rational {
    term.factors
        .iter()
        .fold(Rational::ZERO, |acc, f| acc + signature(&f.tag(), baseline))
}

/// Scale of a product of `n` factors: sum of scales minus (n-1)/2.
pub fn term_scale(term: &TermSpec, baseline: Baseline) -> Rational {
    -term_signature(term, baseline) + Rational::half(1)
}

/// Norms whose delta weight is tabulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    LpS(u32),
    L2H,
    L2Hb,
    Linf,
    TraceH,
    TraceHb,
}

impl NormKind {
    pub fn name(self) -> String {
        match self {
            NormKind::LpS(p) => format!("L{p}(S)"),
            NormKind::L2H => "L2(H)".into(),
            NormKind::L2Hb => "L2(Hb)".into(),
            NormKind::Linf => "Linf(S)".into(),
            NormKind::TraceH => "trace(H)".into(),
            NormKind::TraceHb => "trace(Hb)".into(),
        }
    }
}

/// Exponent of delta multiplying the raw norm of a quantity of scale `sc`.
pub fn norm_weight(sc: Rational, kind: NormKind) -> Rational {
    match kind {
        NormKind::LpS(p) => -sc - Rational::new(1, p as i64),
        NormKind::L2H => -sc - Rational::int(1),
        NormKind::L2Hb => -sc - Rational::half(1),
        NormKind::Linf => -sc,
        NormKind::TraceH => -sc - Rational::half(1),
        NormKind::TraceHb => -sc,
    }
}

/// Deficit of one right-hand-side term.
#[derive(Debug, Clone, Serialize)]
pub struct TermDeficit {
    pub label: String,
    pub signature: Rational,
    pub deficit: Rational,
    pub maxwell_factors: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct BalanceReport {
    pub equation: String,
    pub baseline: Baseline,
    pub lhs_signature: Rational,
    pub lhs_maxwell_factors: usize,
    pub terms: Vec<TermDeficit>,
}

impl BalanceReport {
    pub fn nonzero(&self) -> impl Iterator<Item = &TermDeficit> {
        self.terms.iter().filter(|t| !t.deficit.is_zero())
    }

    pub fn balanced(&self) -> bool {
        self.nonzero().next().is_none()
    }
}

/// Compare each term's signature with the left-hand side.
pub fn check_balance<'a>(
    equation: &str,
    lhs: &TermSpec,
    terms: impl IntoIterator<Item = (&'a str, &'a TermSpec)>,
    baseline: Baseline,
) -> BalanceReport {
    let lhs_sgn = term_signature(lhs, baseline);
    BalanceReport {
        equation: equation.to_string(),
        baseline,
        lhs_signature: lhs_sgn,
        lhs_maxwell_factors: lhs.maxwell_count(),
        terms: terms
            .into_iter()
            .map(|(label, t)| {
                let s = term_signature(t, baseline);
                TermDeficit {
                    label: label.to_string(),
                    signature: s,
                    deficit: lhs_sgn - s,
                    maxwell_factors: t.maxwell_count(),
                }
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_reduces() {
        assert_eq!(Rational::new(2, 4), Rational::half(1));
        assert_eq!(Rational::new(3, -6), Rational::half(-1));
        assert_eq!(Rational::half(3).to_string(), "3/2");
        assert_eq!(Rational::int(2).to_string(), "2");
    }

    #[test]
    fn slot_counts() {
        let h = Baseline::Half;
        assert_eq!(signature(&tag_of(Comp::TrChi), h), Rational::int(1));
        assert_eq!(signature(&tag_of(Comp::Alpha), h), Rational::int(2));
        assert_eq!(scale(&tag_of(Comp::Alpha), h), Rational::half(-3));
        assert_eq!(signature(&tag_of(Comp::AlphaF), h), Rational::int(1));
        assert_eq!(scale(&tag_of(Comp::AlphaF), h), Rational::half(-1));
        assert_eq!(signature(&tag_of(Comp::RhoF), h), Rational::half(1));
        assert_eq!(signature(&tag_of(Comp::SigmaF), h), Rational::half(1));
        assert_eq!(signature(&tag_of(Comp::AlphabF), h), Rational::ZERO);
        assert_eq!(signature(&tag_of(Comp::AlphaF), Baseline::One), Rational::half(1));
    }

    #[test]
    fn norm_weights() {
        assert_eq!(norm_weight(Rational::half(-1), NormKind::L2H), Rational::half(-1));
        assert_eq!(norm_weight(Rational::ZERO, NormKind::LpS(4)), Rational::new(-1, 4));
        assert_eq!(norm_weight(Rational::half(-3), NormKind::Linf), Rational::half(3));
    }
}
