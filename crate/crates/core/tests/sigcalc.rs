use nullpulse::eqreg::registry;
use nullpulse::null_state::{Comp, STORED};
use nullpulse::sigcalc::{
    norm_weight, scale, signature, tag_of, term_scale, term_signature, Baseline, Factor, NormKind, Rational, TermSpec,
};
use proptest::prelude::*;

#[test]
fn table_values() {
    let h = Baseline::Half;
    let sgn = |c| signature(&tag_of(c), h);
    assert_eq!(sgn(Comp::Alpha), Rational::int(2));
    assert_eq!(sgn(Comp::Beta), Rational::new(3, 2));
    assert_eq!(sgn(Comp::Rho), Rational::int(1));
    assert_eq!(sgn(Comp::Betab), Rational::half(1));
    assert_eq!(sgn(Comp::Alphab), Rational::int(0));
    assert_eq!(sgn(Comp::ChiHat), Rational::int(1));
    assert_eq!(sgn(Comp::ChibHat), Rational::int(0));
    assert_eq!(sgn(Comp::AlphaF), Rational::int(1));
    assert_eq!(sgn(Comp::RhoF), Rational::half(1));
    assert_eq!(sgn(Comp::SigmaF), Rational::half(1));
    assert_eq!(sgn(Comp::AlphabF), Rational::int(0));
    // the generic offset shifts every Maxwell component down by 1/2
    for c in STORED {
        let d = signature(&tag_of(c), h) - signature(&tag_of(c), Baseline::One);
        let mx = c.family() == nullpulse::null_state::Family::Maxwell;
        assert_eq!(d, if mx { Rational::half(1) } else { Rational::ZERO }, "{}", c.name());
    }
    // alpha_F and chihat share a scale
    assert_eq!(scale(&tag_of(Comp::AlphaF), h), scale(&tag_of(Comp::ChiHat), h));
    assert_eq!(scale(&tag_of(Comp::ChiHat), h), Rational::half(-1));
}

#[test]
fn norm_weights() {
    let sc = Rational::half(-1);
    assert_eq!(norm_weight(sc, NormKind::LpS(2)), Rational::int(0));
    assert_eq!(norm_weight(sc, NormKind::LpS(4)), Rational::new(1, 4));
    assert_eq!(norm_weight(sc, NormKind::Linf), Rational::half(1));
    assert_eq!(norm_weight(sc, NormKind::L2H), Rational::half(-1));
    assert_eq!(norm_weight(sc, NormKind::L2Hb), Rational::int(0));
    assert_eq!(norm_weight(sc, NormKind::TraceH), Rational::int(0));
    assert_eq!(norm_weight(sc, NormKind::TraceHb), Rational::half(1));
}

#[test]
fn registry_balances_with_half_offset() {
    let mut n = 0;
    for eq in registry() {
        let rep = eq.balance(Baseline::Half);
        let bad: Vec<_> = rep.nonzero().map(|t| (t.label.clone(), t.deficit)).collect();
        assert!(bad.is_empty(), "{}: {bad:?}", eq.id);
        n += rep.terms.len();
    }
    assert!(n > 150);
}

#[test]
fn generic_offset_deficits_track_maxwell_factors() {
    let mut nonzero_eqs = 0;
    for eq in registry() {
        let rep = eq.balance(Baseline::One);
        for t in &rep.terms {
            let want = Rational::half(t.maxwell_factors as i64 - rep.lhs_maxwell_factors as i64);
            assert_eq!(t.deficit, want, "{} / {}", eq.id, t.label);
        }
        if !rep.balanced() {
            nonzero_eqs += 1;
        }
    }
    assert!(nonzero_eqs > 0);
}

fn comp_strategy() -> impl Strategy<Value = Comp> {
    (0..STORED.len()).prop_map(|i| STORED[i])
}

fn factor_strategy() -> impl Strategy<Value = Factor> {
    (comp_strategy(), 0u32..3, 0u32..3, 0u32..3).prop_map(|(c, a, b, d)| {
        let mut f = Factor::of(c);
        f.d4 = a;
        f.d3 = b;
        f.da = d;
        f
    })
}

proptest! {
    #[test]
    fn scale_of_product_is_holder_sum(a in factor_strategy(), b in factor_strategy(), half in any::<bool>()) {
        let bl = if half { Baseline::Half } else { Baseline::One };
        let s1 = term_scale(&TermSpec::new(vec![a]), bl);
        let s2 = term_scale(&TermSpec::new(vec![b]), bl);
        let prod = TermSpec::new(vec![a, b]);
        prop_assert_eq!(term_scale(&prod, bl), s1 + s2 - Rational::half(1));
        prop_assert_eq!(term_signature(&prod, bl), signature(&a.tag(), bl) + signature(&b.tag(), bl));
    }

    #[test]
    fn derivatives_shift_signature(f in factor_strategy()) {
        let bl = Baseline::Half;
        let s = signature(&f.tag(), bl);
        prop_assert_eq!(signature(&f.d4().tag(), bl), s + Rational::int(1));
        prop_assert_eq!(signature(&f.d3().tag(), bl), s);
        prop_assert_eq!(signature(&f.da().tag(), bl), s + Rational::half(1));
    }

    #[test]
    fn rational_arithmetic(a in -50i64..50, b in 1i64..20, c in -50i64..50, d in 1i64..20) {
        let x = Rational::new(a, b) + Rational::new(c, d);
        prop_assert!((x.to_f64() - (a as f64 / b as f64 + c as f64 / d as f64)).abs() < 1e-12);
        prop_assert!(x.den() > 0);
    }
}
