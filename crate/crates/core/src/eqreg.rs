//! The equation registry: one executable evaluator per null structure, null
//! Bianchi and null Maxwell equation, the rotation-field transport, slab
//! residuals and the mass-aspect diagnostics.
//!
//! Each entry stores the left-hand side (the differentiated quantity plus any
//! further terms written on the left) and the right-hand side as a list of
//! terms with exact coefficients. `eval_rhs` returns the right-hand side minus
//! the extra left-hand terms, so that for a transport equation
//! `nabla_{3,4} q = eval_rhs`.

use std::sync::OnceLock;

use serde::Serialize;
use thiserror::Error;

use crate::currents::{fd_weights, stencil, StressContext, StressView};
use crate::null_state::{Comp, FieldSnapshot, MaxwellComponents, Slab, StateError};
use crate::sigcalc::{check_balance, Baseline, BalanceReport, Factor, Rational, TermSpec};
use crate::sphere_ops::{self as so, HorizontalField, Rank, SphereError, SphereGrid};

#[derive(Debug, Error)]
pub enum EqError {
    #[error("unknown equation `{0}`")]
    UnknownEquation(String),
    #[error("{eq}: missing input {what}")]
    Missing { eq: String, what: String },
    #[error("{eq}: residual needs at least {needed} snapshots along the derivative direction, got {got}")]
    TooFewSnapshots { eq: String, needed: usize, got: usize },
    #[error(transparent)]
    Sphere(#[from] SphereError),
    #[error(transparent)]
    State(#[from] StateError),
}

type Res<T> = Result<T, EqError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Direction {
    /// nabla_4 = Omega^-1 d/dubar.
    L,
    /// nabla_3 = Omega^-1 d/du.
    Lb,
    /// Elliptic or algebraic relation on a single sphere.
    Sphere,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Family {
    Structure,
    Bianchi,
    Maxwell,
    Rotation,
}

/// Inputs to a term evaluator.
pub struct Ctx<'a> {
    pub snap: &'a FieldSnapshot,
    pub stress: Option<&'a StressContext>,
    /// Which rotation field (0, 1, 2) the rotation transport acts on.
    pub rot: usize,
    eq: &'static str,
}

impl<'a> Ctx<'a> {
    pub fn new(snap: &'a FieldSnapshot, stress: Option<&'a StressContext>) -> Self {
        Ctx { snap, stress, rot: 0, eq: "" }
    }

    fn missing(&self, what: &str) -> EqError {
        EqError::Missing { eq: self.eq.to_string(), what: what.to_string() }
    }

    fn t(&self) -> Res<&StressView> {
        self.stress.map(|s| &s.view).ok_or_else(|| self.missing("stress tensor"))
    }

    fn d4(&self, pick: fn(&crate::currents::StressRate) -> &Option<HorizontalField>, what: &str) -> Res<HorizontalField> {
        self.stress
            .and_then(|s| pick(&s.d4).clone())
            .ok_or_else(|| self.missing(what))
    }

    fn d3(&self, pick: fn(&crate::currents::StressRate) -> &Option<HorizontalField>, what: &str) -> Res<HorizontalField> {
        self.stress
            .and_then(|s| pick(&s.d3).clone())
            .ok_or_else(|| self.missing(what))
    }

    fn sphere(&self) -> &SphereGrid {
        &self.snap.sphere
    }

    fn trchib(&self) -> HorizontalField {
        self.snap.trchib()
    }

    fn zeta(&self) -> HorizontalField {
        self.snap.coeffs.zeta()
    }
}

pub type Eval = fn(&Ctx) -> Res<HorizontalField>;

/// One product term with its exact coefficient.
#[derive(Clone)]
pub struct Term {
    pub label: &'static str,
    pub coeff: Rational,
    pub spec: TermSpec,
    pub eval: Eval,
}

impl std::fmt::Debug for Term {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} * {}", self.coeff, self.label)
    }
}

/// Differentiated quantity of a transport equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Lhs {
    Stored(Comp),
    /// trchib itself (stored as trchib + 2/r).
    TrChib,
    RotO,
}

#[derive(Debug, Clone)]
pub struct EquationDef {
    pub id: &'static str,
    pub family: Family,
    pub direction: Direction,
    pub lhs: Lhs,
    pub lhs_rank: Rank,
    /// Signature spec of the leading left-hand term.
    pub lhs_spec: TermSpec,
    /// Operator of a sphere equation (div chihat, curl eta, K).
    pub lhs_op: Option<Eval>,
    /// Further left-hand terms, e.g. (1/2)(trchi)^2.
    pub lhs_terms: Vec<Term>,
    pub rhs: Vec<Term>,
    /// Audit-only alternate right-hand side.
    pub alternate_rhs: Option<Vec<Term>>,
    /// Human-readable form.
    pub display: &'static str,
}

impl EquationDef {
    pub fn all_terms(&self) -> impl Iterator<Item = &Term> {
        self.lhs_terms.iter().chain(self.rhs.iter())
    }

    pub fn balance(&self, baseline: Baseline) -> BalanceReport {
        check_balance(self.id, &self.lhs_spec, self.all_terms().map(|t| (t.label, &t.spec)), baseline)
    }
}

fn r(n: i64, d: i64) -> Rational {
    Rational::new(n, d)
}

fn f(c: Comp) -> Factor {
    Factor::of(c)
}

fn spec(fs: &[Factor]) -> TermSpec {
    TermSpec::new(fs.to_vec())
}

fn term(label: &'static str, coeff: Rational, fs: &[Factor], eval: Eval) -> Term {
    Term { label, coeff, spec: spec(fs), eval }
}

/// chi . v with chi = chihat + (1/2) trchi delta.
fn chi_dot(hat: &HorizontalField, tr: &HorizontalField, v: &HorizontalField) -> HorizontalField {
    let mut o = hat.contract(v);
    o.add_scaled(&v.mul_scalar(tr), 0.5);
    o
}

fn zero(ctx: &Ctx, rank: Rank) -> HorizontalField {
    HorizontalField::zeros(rank, ctx.sphere())
}

use Comp::*;

fn build_registry() -> Vec<EquationDef> {
    let half = r(1, 2);
    let one = r(1, 1);
    let mut v = Vec::new();

    let transport = |id, family, dir, lhs: Lhs, lhs_comp: Comp, lhs_terms, rhs, display| {
        let lf = match dir {
            Direction::L => f(lhs_comp).d4(),
            Direction::Lb => f(lhs_comp).d3(),
            Direction::Sphere => f(lhs_comp),
        };
        EquationDef {
            id,
            family,
            direction: dir,
            lhs,
            lhs_rank: lhs_comp.rank(),
            lhs_spec: spec(&[lf]),
            lhs_op: None,
            lhs_terms,
            rhs,
            alternate_rhs: None,
            display,
        }
    };
    let sphere_eq = |id, family, lhs_comp: Comp, lhs_spec: TermSpec, op: Eval, rank: Rank, rhs, display| EquationDef {
        id,
        family,
        direction: Direction::Sphere,
        lhs: Lhs::Stored(lhs_comp),
        lhs_rank: rank,
        lhs_spec,
        lhs_op: Some(op),
        lhs_terms: vec![],
        rhs,
        alternate_rhs: None,
        display,
    };

    // ---- null structure equations ----
    v.push(transport(
        "NSE_L_tr_chi",
        Family::Structure,
        Direction::L,
        Lhs::Stored(TrChi),
        TrChi,
        vec![term("(trchi)^2", half, &[f(TrChi), f(TrChi)], |c| {
            Ok(c.snap.coeffs.trchi.mul_scalar(&c.snap.coeffs.trchi))
        })],
        vec![
            term("|chihat|^2", -one, &[f(ChiHat), f(ChiHat)], |c| Ok(c.snap.coeffs.chihat.norm_sq())),
            term("omega trchi", r(-2, 1), &[f(Omega), f(TrChi)], |c| {
                Ok(c.snap.coeffs.omega.mul_scalar(&c.snap.coeffs.trchi))
            }),
            term("T44", -one, &[f(AlphaF), f(AlphaF)], |c| Ok(c.t()?.t44.clone())),
        ],
        "nabla_4 trchi + 1/2 (trchi)^2 = -|chihat|^2 - 2 omega trchi - T44",
    ));
    v.push(transport(
        "NSE_L_chih",
        Family::Structure,
        Direction::L,
        Lhs::Stored(ChiHat),
        ChiHat,
        vec![term("trchi chihat", one, &[f(TrChi), f(ChiHat)], |c| {
            Ok(c.snap.coeffs.chihat.mul_scalar(&c.snap.coeffs.trchi))
        })],
        vec![
            term("omega chihat", r(-2, 1), &[f(Omega), f(ChiHat)], |c| {
                Ok(c.snap.coeffs.chihat.mul_scalar(&c.snap.coeffs.omega))
            }),
            term("alpha", -one, &[f(Alpha)], |c| Ok(c.snap.weyl.alpha.clone())),
        ],
        "nabla_4 chihat + trchi chihat = -2 omega chihat - alpha",
    ));
    v.push(transport(
        "NSE_Lb_tr_chib",
        Family::Structure,
        Direction::Lb,
        Lhs::TrChib,
        TrChibTilde,
        vec![term("(trchib)^2", half, &[f(TrChibTilde), f(TrChibTilde)], |c| {
            let t = c.trchib();
            Ok(t.mul_scalar(&t))
        })],
        vec![
            term("|chibhat|^2", -one, &[f(ChibHat), f(ChibHat)], |c| Ok(c.snap.coeffs.chibhat.norm_sq())),
            term("omegab trchib", r(-2, 1), &[f(Omegab), f(TrChibTilde)], |c| {
                Ok(c.snap.coeffs.omegab.mul_scalar(&c.trchib()))
            }),
            term("T33", -one, &[f(AlphabF), f(AlphabF)], |c| Ok(c.t()?.t33.clone())),
        ],
        "nabla_3 trchib + 1/2 (trchib)^2 = -|chibhat|^2 - 2 omegab trchib - T33",
    ));
    v.push(transport(
        "NSE_Lb_chibh",
        Family::Structure,
        Direction::Lb,
        Lhs::Stored(ChibHat),
        ChibHat,
        vec![term("trchib chibhat", one, &[f(TrChibTilde), f(ChibHat)], |c| {
            Ok(c.snap.coeffs.chibhat.mul_scalar(&c.trchib()))
        })],
        vec![
            term("omegab chibhat", r(-2, 1), &[f(Omegab), f(ChibHat)], |c| {
                Ok(c.snap.coeffs.chibhat.mul_scalar(&c.snap.coeffs.omegab))
            }),
            term("alphab", -one, &[f(Alphab)], |c| Ok(c.snap.weyl.alphab.clone())),
        ],
        "nabla_3 chibhat + trchib chibhat = -2 omegab chibhat - alphab",
    ));
    v.push(transport(
        "NSE_L_eta",
        Family::Structure,
        Direction::L,
        Lhs::Stored(Eta),
        Eta,
        vec![],
        vec![
            term("chi.(eta - etab)", -one, &[f(ChiHat), f(Eta)], |c| {
                let k = &c.snap.coeffs;
                Ok(chi_dot(&k.chihat, &k.trchi, &(&k.eta - &k.etab)))
            }),
            term("beta", -one, &[f(Beta)], |c| Ok(c.snap.weyl.beta.clone())),
            term("T_b4", -half, &[f(RhoF), f(AlphaF)], |c| Ok(c.t()?.t4a.clone())),
        ],
        "nabla_4 eta = -chi.(eta - etab) - beta - 1/2 T_b4",
    ));
    v.push(transport(
        "NSE_Lb_etab",
        Family::Structure,
        Direction::Lb,
        Lhs::Stored(Etab),
        Etab,
        vec![],
        vec![
            term("chib.(etab - eta)", -one, &[f(ChibHat), f(Etab)], |c| {
                let k = &c.snap.coeffs;
                Ok(chi_dot(&k.chibhat, &c.trchib(), &(&k.etab - &k.eta)))
            }),
            term("betab", one, &[f(Betab)], |c| Ok(c.snap.weyl.betab.clone())),
            term("T_b3", half, &[f(RhoF), f(AlphabF)], |c| Ok(c.t()?.t3a.clone())),
        ],
        "nabla_3 etab = -chib.(etab - eta) + betab + 1/2 T_b3",
    ));
    for (id, dir, lhs, other, mixed_sign, tcomp, display) in [
        (
            "NSE_L_omegab",
            Direction::L,
            Omegab,
            Omega,
            -1i64,
            "T43",
            "nabla_4 omegab = 2 omega omegab + 3/4 |eta - etab|^2 - 1/4 (eta - etab).(eta + etab) - 1/8 |eta + etab|^2 + 1/2 rho + 1/4 T43",
        ),
        (
            "NSE_Lb_omega",
            Direction::Lb,
            Omega,
            Omegab,
            1,
            "T34",
            "nabla_3 omega = 2 omegab omega + 3/4 |eta - etab|^2 + 1/4 (eta - etab).(eta + etab) - 1/8 |eta + etab|^2 + 1/2 rho + 1/4 T34",
        ),
    ] {
        let _ = other;
        v.push(transport(
            id,
            Family::Structure,
            dir,
            Lhs::Stored(lhs),
            lhs,
            vec![],
            vec![
                term("omega omegab", r(2, 1), &[f(Omega), f(Omegab)], |c| {
                    Ok(c.snap.coeffs.omega.mul_scalar(&c.snap.coeffs.omegab))
                }),
                term("|eta - etab|^2", r(3, 4), &[f(Eta), f(Etab)], |c| {
                    Ok((&c.snap.coeffs.eta - &c.snap.coeffs.etab).norm_sq())
                }),
                term("(eta - etab).(eta + etab)", r(mixed_sign, 4), &[f(Eta), f(Etab)], |c| {
                    let k = &c.snap.coeffs;
                    Ok((&k.eta - &k.etab).dot(&(&k.eta + &k.etab)))
                }),
                term("|eta + etab|^2", r(-1, 8), &[f(Eta), f(Etab)], |c| {
                    Ok((&c.snap.coeffs.eta + &c.snap.coeffs.etab).norm_sq())
                }),
                term("rho", half, &[f(Rho)], |c| Ok(c.snap.weyl.rho.clone())),
                term(tcomp, r(1, 4), &[f(RhoF), f(RhoF)], |c| Ok(c.t()?.t34.clone())),
            ],
            display,
        ));
    }
    v.push(transport(
        "NSE_L_tr_chib",
        Family::Structure,
        Direction::L,
        Lhs::TrChib,
        TrChibTilde,
        vec![term("trchi trchib", half, &[f(TrChi), f(TrChibTilde)], |c| {
            Ok(c.snap.coeffs.trchi.mul_scalar(&c.trchib()))
        })],
        vec![
            term("omega trchib", r(2, 1), &[f(Omega), f(TrChibTilde)], |c| {
                Ok(c.snap.coeffs.omega.mul_scalar(&c.trchib()))
            }),
            term("div etab", r(2, 1), &[f(Etab).da()], |c| Ok(so::div(&c.snap.coeffs.etab)?)),
            term("|etab|^2", r(2, 1), &[f(Etab), f(Etab)], |c| Ok(c.snap.coeffs.etab.norm_sq())),
            term("rho", r(2, 1), &[f(Rho)], |c| Ok(c.snap.weyl.rho.clone())),
            term("chihat.chibhat", -one, &[f(ChiHat), f(ChibHat)], |c| {
                Ok(c.snap.coeffs.chihat.dot(&c.snap.coeffs.chibhat))
            }),
        ],
        "nabla_4 trchib + 1/2 trchi trchib = 2 omega trchib + 2 div etab + 2 |etab|^2 + 2 rho - chihat.chibhat",
    ));
    v.push(transport(
        "NSE_Lb_tr_chi",
        Family::Structure,
        Direction::Lb,
        Lhs::Stored(TrChi),
        TrChi,
        vec![term("trchib trchi", half, &[f(TrChibTilde), f(TrChi)], |c| {
            Ok(c.snap.coeffs.trchi.mul_scalar(&c.trchib()))
        })],
        vec![
            term("omegab trchi", r(2, 1), &[f(Omegab), f(TrChi)], |c| {
                Ok(c.snap.coeffs.omegab.mul_scalar(&c.snap.coeffs.trchi))
            }),
            term("div eta", r(2, 1), &[f(Eta).da()], |c| Ok(so::div(&c.snap.coeffs.eta)?)),
            term("|eta|^2", r(2, 1), &[f(Eta), f(Eta)], |c| Ok(c.snap.coeffs.eta.norm_sq())),
            term("rho", r(2, 1), &[f(Rho)], |c| Ok(c.snap.weyl.rho.clone())),
            term("chihat.chibhat", -one, &[f(ChiHat), f(ChibHat)], |c| {
                Ok(c.snap.coeffs.chihat.dot(&c.snap.coeffs.chibhat))
            }),
        ],
        "nabla_3 trchi + 1/2 trchib trchi = 2 omegab trchi + 2 div eta + 2 |eta|^2 + 2 rho - chihat.chibhat",
    ));
    v.push(transport(
        "NSE_L_chibh",
        Family::Structure,
        Direction::L,
        Lhs::Stored(ChibHat),
        ChibHat,
        vec![term("trchi chibhat", half, &[f(TrChi), f(ChibHat)], |c| {
            Ok(c.snap.coeffs.chibhat.mul_scalar(&c.snap.coeffs.trchi))
        })],
        vec![
            term("grad (x^) etab", one, &[f(Etab).da()], |c| Ok(so::hat_grad(&c.snap.coeffs.etab)?)),
            term("omega chibhat", r(2, 1), &[f(Omega), f(ChibHat)], |c| {
                Ok(c.snap.coeffs.chibhat.mul_scalar(&c.snap.coeffs.omega))
            }),
            term("trchib chihat", -half, &[f(TrChibTilde), f(ChiHat)], |c| {
                Ok(c.snap.coeffs.chihat.mul_scalar(&c.trchib()))
            }),
            term("etab (x^) etab", one, &[f(Etab), f(Etab)], |c| {
                Ok(c.snap.coeffs.etab.hat_product(&c.snap.coeffs.etab))
            }),
            term("That_ab", one, &[f(AlphaF), f(AlphabF)], |c| Ok(c.t()?.that())),
        ],
        "nabla_4 chibhat + 1/2 trchi chibhat = grad (x^) etab + 2 omega chibhat - 1/2 trchib chihat + etab (x^) etab + That",
    ));
    v.push(transport(
        "NSE_Lb_chih",
        Family::Structure,
        Direction::Lb,
        Lhs::Stored(ChiHat),
        ChiHat,
        vec![term("trchib chihat", half, &[f(TrChibTilde), f(ChiHat)], |c| {
            Ok(c.snap.coeffs.chihat.mul_scalar(&c.trchib()))
        })],
        vec![
            term("grad (x^) eta", one, &[f(Eta).da()], |c| Ok(so::hat_grad(&c.snap.coeffs.eta)?)),
            term("omegab chihat", r(2, 1), &[f(Omegab), f(ChiHat)], |c| {
                Ok(c.snap.coeffs.chihat.mul_scalar(&c.snap.coeffs.omegab))
            }),
            term("trchi chibhat", -half, &[f(TrChi), f(ChibHat)], |c| {
                Ok(c.snap.coeffs.chibhat.mul_scalar(&c.snap.coeffs.trchi))
            }),
            term("eta (x^) eta", one, &[f(Eta), f(Eta)], |c| Ok(c.snap.coeffs.eta.hat_product(&c.snap.coeffs.eta))),
            term("That_ab", one, &[f(AlphaF), f(AlphabF)], |c| Ok(c.t()?.that())),
        ],
        "nabla_3 chihat + 1/2 trchib chihat = grad (x^) eta + 2 omegab chihat - 1/2 trchi chibhat + eta (x^) eta + That",
    ));
    v.push(sphere_eq(
        "NSE_div_chih",
        Family::Structure,
        ChiHat,
        spec(&[f(ChiHat).da()]),
        |c| Ok(so::div(&c.snap.coeffs.chihat)?),
        Rank::OneForm,
        vec![
            term("grad trchi", half, &[f(TrChi).da()], |c| Ok(so::grad(&c.snap.coeffs.trchi)?)),
            term("(eta - etab).(chihat - 1/2 trchi delta)", -half, &[f(Eta), f(ChiHat)], |c| {
                let k = &c.snap.coeffs;
                let d = &k.eta - &k.etab;
                let mut o = k.chihat.contract(&d);
                o.add_scaled(&d.mul_scalar(&k.trchi), -0.5);
                Ok(o)
            }),
            term("beta", -one, &[f(Beta)], |c| Ok(c.snap.weyl.beta.clone())),
            term("T_4b", half, &[f(RhoF), f(AlphaF)], |c| Ok(c.t()?.t4a.clone())),
        ],
        "div chihat = 1/2 grad trchi - 1/2 (eta - etab).(chihat - 1/2 trchi delta) - beta + 1/2 T_4b",
    ));
    v.push(sphere_eq(
        "NSE_div_chibh",
        Family::Structure,
        ChibHat,
        spec(&[f(ChibHat).da()]),
        |c| Ok(so::div(&c.snap.coeffs.chibhat)?),
        Rank::OneForm,
        vec![
            term("grad trchib", half, &[f(TrChibTilde).da()], |c| Ok(so::grad(&c.snap.coeffs.trchib_tilde)?)),
            term("(etab - eta).(chibhat - 1/2 trchib delta)", -half, &[f(Etab), f(ChibHat)], |c| {
                let k = &c.snap.coeffs;
                let d = &k.etab - &k.eta;
                let mut o = k.chibhat.contract(&d);
                o.add_scaled(&d.mul_scalar(&c.trchib()), -0.5);
                Ok(o)
            }),
            term("betab", one, &[f(Betab)], |c| Ok(c.snap.weyl.betab.clone())),
            term("T_3b", half, &[f(RhoF), f(AlphabF)], |c| Ok(c.t()?.t3a.clone())),
        ],
        "div chibhat = 1/2 grad trchib - 1/2 (etab - eta).(chibhat - 1/2 trchib delta) + betab + 1/2 T_3b",
    ));
    v.push(sphere_eq(
        "NSE_curl_eta",
        Family::Structure,
        Eta,
        spec(&[f(Eta).da()]),
        |c| Ok(so::curl(&c.snap.coeffs.eta)?),
        Rank::Scalar,
        vec![
            term("chibhat ^ chihat", one, &[f(ChibHat), f(ChiHat)], |c| {
                Ok(c.snap.coeffs.chibhat.wedge(&c.snap.coeffs.chihat))
            }),
            term("sigma", one, &[f(Sigma)], |c| Ok(c.snap.weyl.sigma.clone())),
        ],
        "curl eta = chibhat ^ chihat + sigma",
    ));
    v.push(sphere_eq(
        "NSE_curl_etab",
        Family::Structure,
        Etab,
        spec(&[f(Etab).da()]),
        |c| Ok(so::curl(&c.snap.coeffs.etab)?),
        Rank::Scalar,
        vec![
            term("chibhat ^ chihat", -one, &[f(ChibHat), f(ChiHat)], |c| {
                Ok(c.snap.coeffs.chibhat.wedge(&c.snap.coeffs.chihat))
            }),
            term("sigma", -one, &[f(Sigma)], |c| Ok(c.snap.weyl.sigma.clone())),
        ],
        "curl etab = -chibhat ^ chihat - sigma",
    ));
    v.push(sphere_eq(
        "NSE_gauss",
        Family::Structure,
        GaussK,
        spec(&[f(GaussK)]),
        |c| Ok(c.snap.gauss_k.clone()),
        Rank::Scalar,
        vec![
            term("trchi trchib", r(-1, 4), &[f(TrChi), f(TrChibTilde)], |c| {
                Ok(c.snap.coeffs.trchi.mul_scalar(&c.trchib()))
            }),
            term("chihat.chibhat", half, &[f(ChiHat), f(ChibHat)], |c| {
                Ok(c.snap.coeffs.chihat.dot(&c.snap.coeffs.chibhat))
            }),
            term("rho", -one, &[f(Rho)], |c| Ok(c.snap.weyl.rho.clone())),
            term("T43", r(1, 4), &[f(RhoF), f(RhoF)], |c| Ok(c.t()?.t34.clone())),
        ],
        "K = -1/4 trchi trchib + 1/2 chihat.chibhat - rho + 1/4 T43",
    ));

    // ---- null Bianchi equations ----
    let mut lb_alpha = transport(
        "NBE_Lb_alpha",
        Family::Bianchi,
        Direction::Lb,
        Lhs::Stored(Alpha),
        Alpha,
        vec![term("trchib alpha", half, &[f(TrChibTilde), f(Alpha)], |c| {
            Ok(c.snap.weyl.alpha.mul_scalar(&c.trchib()))
        })],
        vec![
            term("grad (x^) beta", one, &[f(Beta).da()], |c| Ok(so::hat_grad(&c.snap.weyl.beta)?)),
            term("omegab alpha", r(4, 1), &[f(Omegab), f(Alpha)], |c| {
                Ok(c.snap.weyl.alpha.mul_scalar(&c.snap.coeffs.omegab))
            }),
            term("chihat rho", r(-3, 1), &[f(ChiHat), f(Rho)], |c| {
                Ok(c.snap.coeffs.chihat.mul_scalar(&c.snap.weyl.rho))
            }),
            term("*chihat sigma", r(-3, 1), &[f(ChiHat), f(Sigma)], |c| {
                Ok(c.snap.coeffs.chihat.star().mul_scalar(&c.snap.weyl.sigma))
            }),
            term("(9/2 eta - 1/2 etab) (x^) beta", one, &[f(Eta), f(Beta)], |c| {
                let k = &c.snap.coeffs;
                let mut w = k.eta.scale(4.5);
                w.add_scaled(&k.etab, -0.5);
                Ok(w.hat_product(&c.snap.weyl.beta))
            }),
            // delta_ab parts vanish on a traceless equation
            term("D3 R44 delta", half, &[f(AlphaF).d3(), f(AlphaF)], |c| Ok(zero(c, Rank::Sym2Traceless))),
            term("D4 R43 delta", -half, &[f(RhoF).d4(), f(RhoF)], |c| Ok(zero(c, Rank::Sym2Traceless))),
        ],
        "nabla_3 alpha + 1/2 trchib alpha = grad (x^) beta + 4 omegab alpha - 3 (chihat rho + *chihat sigma) + (zeta + 4 eta) (x^) beta + 1/2 (D3 R44 - D4 R43) delta",
    );
    let mut alt = lb_alpha.rhs.clone();
    alt.retain(|t| !t.label.starts_with("(9/2"));
    alt.push(term("zeta (x^) beta", one, &[f(Zeta), f(Beta)], |c| {
        Ok(c.zeta().hat_product(&c.snap.weyl.beta))
    }));
    alt.push(term("eta (x^) beta", r(4, 1), &[f(Eta), f(Beta)], |c| {
        Ok(c.snap.coeffs.eta.hat_product(&c.snap.weyl.beta))
    }));
    lb_alpha.alternate_rhs = Some(alt);
    v.push(lb_alpha);

    v.push(transport(
        "NBE_L_beta",
        Family::Bianchi,
        Direction::L,
        Lhs::Stored(Beta),
        Beta,
        vec![term("trchi beta", r(2, 1), &[f(TrChi), f(Beta)], |c| {
            Ok(c.snap.weyl.beta.mul_scalar(&c.snap.coeffs.trchi))
        })],
        vec![
            term("div alpha", one, &[f(Alpha).da()], |c| Ok(so::div(&c.snap.weyl.alpha)?)),
            term("omega beta", r(-2, 1), &[f(Omega), f(Beta)], |c| {
                Ok(c.snap.weyl.beta.mul_scalar(&c.snap.coeffs.omega))
            }),
            term("eta.alpha", one, &[f(Eta), f(Alpha)], |c| Ok(c.snap.weyl.alpha.contract(&c.snap.coeffs.eta))),
            term("D_b R44", -half, &[f(AlphaF).da(), f(AlphaF)], |c| Ok(so::grad(&c.t()?.t44)?)),
            term("D4 R4b", half, &[f(RhoF).d4(), f(AlphaF)], |c| c.d4(|s| &s.t4a, "D4 R4b")),
        ],
        "nabla_4 beta + 2 trchi beta = div alpha - 2 omega beta + eta.alpha - 1/2 (D_b R44 - D4 R4b)",
    ));
    v.push(transport(
        "NBE_Lb_beta",
        Family::Bianchi,
        Direction::Lb,
        Lhs::Stored(Beta),
        Beta,
        vec![term("trchib beta", one, &[f(TrChibTilde), f(Beta)], |c| {
            Ok(c.snap.weyl.beta.mul_scalar(&c.trchib()))
        })],
        vec![
            term("grad rho", one, &[f(Rho).da()], |c| Ok(so::grad(&c.snap.weyl.rho)?)),
            term("*grad sigma", one, &[f(Sigma).da()], |c| Ok(so::star_grad(&c.snap.weyl.sigma)?)),
            term("omegab beta", r(2, 1), &[f(Omegab), f(Beta)], |c| {
                Ok(c.snap.weyl.beta.mul_scalar(&c.snap.coeffs.omegab))
            }),
            term("chihat.betab", r(2, 1), &[f(ChiHat), f(Betab)], |c| {
                Ok(c.snap.coeffs.chihat.contract(&c.snap.weyl.betab))
            }),
            term("eta rho", r(3, 1), &[f(Eta), f(Rho)], |c| Ok(c.snap.coeffs.eta.mul_scalar(&c.snap.weyl.rho))),
            term("*eta sigma", r(3, 1), &[f(Eta), f(Sigma)], |c| {
                Ok(c.snap.coeffs.eta.star().mul_scalar(&c.snap.weyl.sigma))
            }),
            term("D_b R34", half, &[f(RhoF).da(), f(RhoF)], |c| Ok(so::grad(&c.t()?.t34)?)),
            term("D4 R3b", -half, &[f(RhoF).d4(), f(AlphabF)], |c| c.d4(|s| &s.t3a, "D4 R3b")),
        ],
        "nabla_3 beta + trchib beta = grad rho + *grad sigma + 2 omegab beta + 2 chihat.betab + 3 (eta rho + *eta sigma) + 1/2 (D_b R34 - D4 R3b)",
    ));
    v.push(transport(
        "NBE_L_sigma",
        Family::Bianchi,
        Direction::L,
        Lhs::Stored(Sigma),
        Sigma,
        vec![term("trchi sigma", r(3, 2), &[f(TrChi), f(Sigma)], |c| {
            Ok(c.snap.weyl.sigma.mul_scalar(&c.snap.coeffs.trchi))
        })],
        vec![
            term("div *beta", -one, &[f(Beta).da()], |c| Ok(so::div(&c.snap.weyl.beta.star())?)),
            term("chibhat.*alpha", half, &[f(ChibHat), f(Alpha)], |c| {
                Ok(c.snap.coeffs.chibhat.dot(&c.snap.weyl.alpha.star()))
            }),
            term("zeta.*beta", -one, &[f(Zeta), f(Beta)], |c| Ok(c.zeta().dot(&c.snap.weyl.beta.star()))),
            term("etab.*beta", r(-2, 1), &[f(Etab), f(Beta)], |c| {
                Ok(c.snap.coeffs.etab.dot(&c.snap.weyl.beta.star()))
            }),
            // eps_ab34 = 2 eps_ab, so the contraction is 4 curl T_4.
            term("(D_mu R_4nu - D_nu R_4mu) eps^{mu nu}_34", r(-1, 4), &[f(RhoF).da(), f(AlphaF)], |c| {
                Ok(so::curl(&c.t()?.t4a)?.scale(4.0))
            }),
        ],
        "nabla_4 sigma + 3/2 trchi sigma = -div *beta + 1/2 chibhat.*alpha - zeta.*beta - 2 etab.*beta - 1/4 (D_mu R_4nu - D_nu R_4mu) eps^{mu nu}_34",
    ));
    v.push(transport(
        "NBE_Lb_sigma",
        Family::Bianchi,
        Direction::Lb,
        Lhs::Stored(Sigma),
        Sigma,
        vec![term("trchib sigma", r(3, 2), &[f(TrChibTilde), f(Sigma)], |c| {
            Ok(c.snap.weyl.sigma.mul_scalar(&c.trchib()))
        })],
        vec![
            term("div *betab", -one, &[f(Betab).da()], |c| Ok(so::div(&c.snap.weyl.betab.star())?)),
            term("chihat.*alphab", half, &[f(ChiHat), f(Alphab)], |c| {
                Ok(c.snap.coeffs.chihat.dot(&c.snap.weyl.alphab.star()))
            }),
            term("zeta.*betab", -one, &[f(Zeta), f(Betab)], |c| Ok(c.zeta().dot(&c.snap.weyl.betab.star()))),
            term("eta.*betab", r(-2, 1), &[f(Eta), f(Betab)], |c| {
                Ok(c.snap.coeffs.eta.dot(&c.snap.weyl.betab.star()))
            }),
            term("(D_mu R_3nu - D_nu R_3mu) eps^{mu nu}_34", r(1, 4), &[f(RhoF).da(), f(AlphabF)], |c| {
                Ok(so::curl(&c.t()?.t3a)?.scale(4.0))
            }),
        ],
        "nabla_3 sigma + 3/2 trchib sigma = -div *betab + 1/2 chihat.*alphab - zeta.*betab - 2 eta.*betab + 1/4 (D_mu R_3nu - D_nu R_3mu) eps^{mu nu}_34",
    ));
    v.push(transport(
        "NBE_L_rho",
        Family::Bianchi,
        Direction::L,
        Lhs::Stored(Rho),
        Rho,
        vec![term("trchi rho", r(3, 2), &[f(TrChi), f(Rho)], |c| {
            Ok(c.snap.weyl.rho.mul_scalar(&c.snap.coeffs.trchi))
        })],
        vec![
            term("div beta", one, &[f(Beta).da()], |c| Ok(so::div(&c.snap.weyl.beta)?)),
            term("chibhat.alpha", -half, &[f(ChibHat), f(Alpha)], |c| {
                Ok(c.snap.coeffs.chibhat.dot(&c.snap.weyl.alpha))
            }),
            term("zeta.beta", one, &[f(Zeta), f(Beta)], |c| Ok(c.zeta().dot(&c.snap.weyl.beta))),
            term("etab.beta", r(2, 1), &[f(Etab), f(Beta)], |c| Ok(c.snap.coeffs.etab.dot(&c.snap.weyl.beta))),
            term("D3 R44", r(-1, 4), &[f(AlphaF).d3(), f(AlphaF)], |c| c.d3(|s| &s.t44, "D3 R44")),
            term("D4 R34", r(1, 4), &[f(RhoF).d4(), f(RhoF)], |c| c.d4(|s| &s.t34, "D4 R34")),
        ],
        "nabla_4 rho + 3/2 trchi rho = div beta - 1/2 chibhat.alpha + zeta.beta + 2 etab.beta - 1/4 (D3 R44 - D4 R34)",
    ));
    v.push(transport(
        "NBE_Lb_rho",
        Family::Bianchi,
        Direction::Lb,
        Lhs::Stored(Rho),
        Rho,
        vec![term("trchib rho", r(3, 2), &[f(TrChibTilde), f(Rho)], |c| {
            Ok(c.snap.weyl.rho.mul_scalar(&c.trchib()))
        })],
        vec![
            term("div betab", -one, &[f(Betab).da()], |c| Ok(so::div(&c.snap.weyl.betab)?)),
            term("chihat.alphab", -half, &[f(ChiHat), f(Alphab)], |c| {
                Ok(c.snap.coeffs.chihat.dot(&c.snap.weyl.alphab))
            }),
            term("zeta.betab", one, &[f(Zeta), f(Betab)], |c| Ok(c.zeta().dot(&c.snap.weyl.betab))),
            term("eta.betab", r(-2, 1), &[f(Eta), f(Betab)], |c| Ok(c.snap.coeffs.eta.dot(&c.snap.weyl.betab))),
            term("D3 R34", r(1, 4), &[f(RhoF).d3(), f(RhoF)], |c| c.d3(|s| &s.t34, "D3 R34")),
            term("D4 R33", r(-1, 4), &[f(AlphabF).d4(), f(AlphabF)], |c| c.d4(|s| &s.t33, "D4 R33")),
        ],
        "nabla_3 rho + 3/2 trchib rho = -div betab - 1/2 chihat.alphab + zeta.betab - 2 eta.betab + 1/4 (D3 R34 - D4 R33)",
    ));
    v.push(transport(
        "NBE_L_betab",
        Family::Bianchi,
        Direction::L,
        Lhs::Stored(Betab),
        Betab,
        vec![term("trchi betab", one, &[f(TrChi), f(Betab)], |c| {
            Ok(c.snap.weyl.betab.mul_scalar(&c.snap.coeffs.trchi))
        })],
        vec![
            term("grad rho", -one, &[f(Rho).da()], |c| Ok(so::grad(&c.snap.weyl.rho)?)),
            term("*grad sigma", one, &[f(Sigma).da()], |c| Ok(so::star_grad(&c.snap.weyl.sigma)?)),
            term("omega betab", r(2, 1), &[f(Omega), f(Betab)], |c| {
                Ok(c.snap.weyl.betab.mul_scalar(&c.snap.coeffs.omega))
            }),
            term("chibhat.beta", r(2, 1), &[f(ChibHat), f(Beta)], |c| {
                Ok(c.snap.coeffs.chibhat.contract(&c.snap.weyl.beta))
            }),
            term("etab rho", r(-3, 1), &[f(Etab), f(Rho)], |c| {
                Ok(c.snap.coeffs.etab.mul_scalar(&c.snap.weyl.rho))
            }),
            term("*etab sigma", r(3, 1), &[f(Etab), f(Sigma)], |c| {
                Ok(c.snap.coeffs.etab.star().mul_scalar(&c.snap.weyl.sigma))
            }),
            term("D_b R43", -half, &[f(RhoF).da(), f(RhoF)], |c| Ok(so::grad(&c.t()?.t34)?)),
            term("D3 R4b", half, &[f(RhoF).d3(), f(AlphaF)], |c| c.d3(|s| &s.t4a, "D3 R4b")),
        ],
        "nabla_4 betab + trchi betab = -grad rho + *grad sigma + 2 omega betab + 2 chibhat.beta - 3 (etab rho - *etab sigma) - 1/2 (D_b R43 - D3 R4b)",
    ));
    v.push(transport(
        "NBE_Lb_betab",
        Family::Bianchi,
        Direction::Lb,
        Lhs::Stored(Betab),
        Betab,
        vec![term("trchib betab", r(2, 1), &[f(TrChibTilde), f(Betab)], |c| {
            Ok(c.snap.weyl.betab.mul_scalar(&c.trchib()))
        })],
        vec![
            term("div alphab", -one, &[f(Alphab).da()], |c| Ok(so::div(&c.snap.weyl.alphab)?)),
            term("omegab betab", r(-2, 1), &[f(Omegab), f(Betab)], |c| {
                Ok(c.snap.weyl.betab.mul_scalar(&c.snap.coeffs.omegab))
            }),
            term("etab.alphab", one, &[f(Etab), f(Alphab)], |c| {
                Ok(c.snap.weyl.alphab.contract(&c.snap.coeffs.etab))
            }),
            term("D_b R33", half, &[f(AlphabF).da(), f(AlphabF)], |c| Ok(so::grad(&c.t()?.t33)?)),
            term("D3 R3b", -half, &[f(RhoF).d3(), f(AlphabF)], |c| c.d3(|s| &s.t3a, "D3 R3b")),
        ],
        "nabla_3 betab + 2 trchib betab = -div alphab - 2 omegab betab + etab.alphab + 1/2 (D_b R33 - D3 R3b)",
    ));
    v.push(transport(
        "NBE_L_alphab",
        Family::Bianchi,
        Direction::L,
        Lhs::Stored(Alphab),
        Alphab,
        vec![term("trchi alphab", half, &[f(TrChi), f(Alphab)], |c| {
            Ok(c.snap.weyl.alphab.mul_scalar(&c.snap.coeffs.trchi))
        })],
        vec![
            term("grad (x^) betab", -one, &[f(Betab).da()], |c| Ok(so::hat_grad(&c.snap.weyl.betab)?)),
            term("omega alphab", r(4, 1), &[f(Omega), f(Alphab)], |c| {
                Ok(c.snap.weyl.alphab.mul_scalar(&c.snap.coeffs.omega))
            }),
            term("chibhat rho", r(-3, 1), &[f(ChibHat), f(Rho)], |c| {
                Ok(c.snap.coeffs.chibhat.mul_scalar(&c.snap.weyl.rho))
            }),
            term("*chibhat sigma", r(3, 1), &[f(ChibHat), f(Sigma)], |c| {
                Ok(c.snap.coeffs.chibhat.star().mul_scalar(&c.snap.weyl.sigma))
            }),
            term("(zeta - 4 etab) (x^) betab", one, &[f(Etab), f(Betab)], |c| {
                let mut w = c.zeta();
                w.add_scaled(&c.snap.coeffs.etab, -4.0);
                Ok(w.hat_product(&c.snap.weyl.betab))
            }),
            term("D4 R33 delta", half, &[f(AlphabF).d4(), f(AlphabF)], |c| Ok(zero(c, Rank::Sym2Traceless))),
            term("D3 R34 delta", -half, &[f(RhoF).d3(), f(RhoF)], |c| Ok(zero(c, Rank::Sym2Traceless))),
        ],
        "nabla_4 alphab + 1/2 trchi alphab = -grad (x^) betab + 4 omega alphab - 3 (chibhat rho - *chibhat sigma) + (zeta - 4 etab) (x^) betab + 1/2 (D4 R33 - D3 R34) delta",
    ));

    // ---- null Maxwell equations ----
    v.push(transport(
        "NM_L_alphab",
        Family::Maxwell,
        Direction::L,
        Lhs::Stored(AlphabF),
        AlphabF,
        vec![term("trchi alphab_F", half, &[f(TrChi), f(AlphabF)], |c| {
            Ok(c.snap.maxwell.alphab_f.mul_scalar(&c.snap.coeffs.trchi))
        })],
        vec![
            term("grad rho_F", -one, &[f(RhoF).da()], |c| Ok(so::grad(&c.snap.maxwell.rho_f)?)),
            term("*grad sigma_F", -one, &[f(SigmaF).da()], |c| Ok(so::star_grad(&c.snap.maxwell.sigma_f)?)),
            term("*etab sigma_F", r(-2, 1), &[f(Etab), f(SigmaF)], |c| {
                Ok(c.snap.coeffs.etab.star().mul_scalar(&c.snap.maxwell.sigma_f))
            }),
            term("etab rho_F", r(-2, 1), &[f(Etab), f(RhoF)], |c| {
                Ok(c.snap.coeffs.etab.mul_scalar(&c.snap.maxwell.rho_f))
            }),
            term("omega alphab_F", r(2, 1), &[f(Omega), f(AlphabF)], |c| {
                Ok(c.snap.maxwell.alphab_f.mul_scalar(&c.snap.coeffs.omega))
            }),
            term("chibhat.alpha_F", -one, &[f(ChibHat), f(AlphaF)], |c| {
                Ok(c.snap.coeffs.chibhat.contract(&c.snap.maxwell.alpha_f))
            }),
        ],
        "nabla_4 alphab_F + 1/2 trchi alphab_F = -grad rho_F - *grad sigma_F - 2 *etab sigma_F - 2 etab rho_F + 2 omega alphab_F - chibhat.alpha_F",
    ));
    v.push(transport(
        "NM_Lb_alpha",
        Family::Maxwell,
        Direction::Lb,
        Lhs::Stored(AlphaF),
        AlphaF,
        vec![term("trchib alpha_F", half, &[f(TrChibTilde), f(AlphaF)], |c| {
            Ok(c.snap.maxwell.alpha_f.mul_scalar(&c.trchib()))
        })],
        vec![
            term("grad rho_F", -one, &[f(RhoF).da()], |c| Ok(so::grad(&c.snap.maxwell.rho_f)?)),
            term("*grad sigma_F", one, &[f(SigmaF).da()], |c| Ok(so::star_grad(&c.snap.maxwell.sigma_f)?)),
            term("*etab sigma_F", r(-2, 1), &[f(Etab), f(SigmaF)], |c| {
                Ok(c.snap.coeffs.etab.star().mul_scalar(&c.snap.maxwell.sigma_f))
            }),
            term("etab rho_F", r(2, 1), &[f(Etab), f(RhoF)], |c| {
                Ok(c.snap.coeffs.etab.mul_scalar(&c.snap.maxwell.rho_f))
            }),
            term("omegab alpha_F", r(2, 1), &[f(Omegab), f(AlphaF)], |c| {
                Ok(c.snap.maxwell.alpha_f.mul_scalar(&c.snap.coeffs.omegab))
            }),
            term("chihat.alphab_F", -one, &[f(ChiHat), f(AlphabF)], |c| {
                Ok(c.snap.coeffs.chihat.contract(&c.snap.maxwell.alphab_f))
            }),
        ],
        "nabla_3 alpha_F + 1/2 trchib alpha_F = -grad rho_F + *grad sigma_F - 2 *etab sigma_F + 2 etab rho_F + 2 omegab alpha_F - chihat.alphab_F",
    ));
    v.push(transport(
        "NM_L_rho",
        Family::Maxwell,
        Direction::L,
        Lhs::Stored(RhoF),
        RhoF,
        vec![],
        vec![
            term("div alpha_F", -one, &[f(AlphaF).da()], |c| Ok(so::div(&c.snap.maxwell.alpha_f)?)),
            term("trchi rho_F", -one, &[f(TrChi), f(RhoF)], |c| {
                Ok(c.snap.maxwell.rho_f.mul_scalar(&c.snap.coeffs.trchi))
            }),
            term("(eta - etab).alpha_F", -one, &[f(Eta), f(AlphaF)], |c| {
                Ok((&c.snap.coeffs.eta - &c.snap.coeffs.etab).dot(&c.snap.maxwell.alpha_f))
            }),
        ],
        "nabla_4 rho_F = -div alpha_F - trchi rho_F - (eta - etab).alpha_F",
    ));
    v.push(transport(
        "NM_L_sigma",
        Family::Maxwell,
        Direction::L,
        Lhs::Stored(SigmaF),
        SigmaF,
        vec![],
        vec![
            term("curl alpha_F", -one, &[f(AlphaF).da()], |c| Ok(so::curl(&c.snap.maxwell.alpha_f)?)),
            term("trchi sigma_F", -one, &[f(TrChi), f(SigmaF)], |c| {
                Ok(c.snap.maxwell.sigma_f.mul_scalar(&c.snap.coeffs.trchi))
            }),
            term("(eta - etab).*alpha_F", one, &[f(Eta), f(AlphaF)], |c| {
                Ok((&c.snap.coeffs.eta - &c.snap.coeffs.etab).dot(&c.snap.maxwell.alpha_f.star()))
            }),
        ],
        "nabla_4 sigma_F = -curl alpha_F - trchi sigma_F + (eta - etab).*alpha_F",
    ));
    v.push(transport(
        "NM_Lb_rho",
        Family::Maxwell,
        Direction::Lb,
        Lhs::Stored(RhoF),
        RhoF,
        vec![],
        vec![
            term("div alphab_F", one, &[f(AlphabF).da()], |c| Ok(so::div(&c.snap.maxwell.alphab_f)?)),
            term("trchib rho_F", one, &[f(TrChibTilde), f(RhoF)], |c| {
                Ok(c.snap.maxwell.rho_f.mul_scalar(&c.trchib()))
            }),
            term("(eta - etab).alphab_F", one, &[f(Eta), f(AlphabF)], |c| {
                Ok((&c.snap.coeffs.eta - &c.snap.coeffs.etab).dot(&c.snap.maxwell.alphab_f))
            }),
        ],
        "nabla_3 rho_F = div alphab_F + trchib rho_F + (eta - etab).alphab_F",
    ));
    v.push(transport(
        "NM_Lb_sigma",
        Family::Maxwell,
        Direction::Lb,
        Lhs::Stored(SigmaF),
        SigmaF,
        vec![],
        vec![
            term("curl alphab_F", -one, &[f(AlphabF).da()], |c| Ok(so::curl(&c.snap.maxwell.alphab_f)?)),
            term("trchib sigma_F", -one, &[f(TrChibTilde), f(SigmaF)], |c| {
                Ok(c.snap.maxwell.sigma_f.mul_scalar(&c.trchib()))
            }),
            term("(eta - etab).*alphab_F", one, &[f(Eta), f(AlphabF)], |c| {
                Ok((&c.snap.coeffs.eta - &c.snap.coeffs.etab).dot(&c.snap.maxwell.alphab_f.star()))
            }),
        ],
        "nabla_3 sigma_F = -curl alphab_F - trchib sigma_F + (eta - etab).*alphab_F",
    ));

    // ---- rotation fields ----
    v.push(transport(
        "ROT_O",
        Family::Rotation,
        Direction::L,
        Lhs::RotO,
        RotO,
        vec![],
        vec![term("chi.O", one, &[f(ChiHat), f(RotO)], |c| {
            let o = rotation_field(c.sphere(), c.rot);
            Ok(chi_dot(&c.snap.coeffs.chihat, &c.snap.coeffs.trchi, &o))
        })],
        "nabla_4 O_b = chi_b^a O_a",
    ));
    v
}

/// The registry, in a fixed order.
pub fn registry() -> &'static [EquationDef] {
    static REG: OnceLock<Vec<EquationDef>> = OnceLock::new();
    REG.get_or_init(build_registry)
}

pub fn find(id: &str) -> Res<&'static EquationDef> {
    registry().iter().find(|e| e.id == id).ok_or_else(|| EqError::UnknownEquation(id.to_string()))
}

/// The field equations (everything except the rotation transport).
pub fn field_equations() -> impl Iterator<Item = &'static EquationDef> {
    registry().iter().filter(|e| e.family != Family::Rotation)
}

fn sum_terms(eq: &EquationDef, terms: &[Term], ctx: &Ctx, sign: f64, acc: &mut Option<HorizontalField>) -> Res<()> {
    for t in terms {
        let val = (t.eval)(ctx)?;
        if val.rank != eq.lhs_rank {
            return Err(EqError::Sphere(SphereError::Rank { expected: eq.lhs_rank, got: val.rank }));
        }
        let c = sign * t.coeff.to_f64();
        match acc {
            Some(a) => a.add_scaled(&val, c),
            None => *acc = Some(val.scale(c)),
        }
    }
    Ok(())
}

fn rhs_of(eq: &'static EquationDef, terms: &[Term], snap: &FieldSnapshot, stress: Option<&StressContext>, rot: usize) -> Res<HorizontalField> {
    let ctx = Ctx { snap, stress, rot, eq: eq.id };
    let mut acc = None;
    sum_terms(eq, terms, &ctx, 1.0, &mut acc)?;
    sum_terms(eq, &eq.lhs_terms, &ctx, -1.0, &mut acc)?;
    Ok(acc.unwrap_or_else(|| HorizontalField::zeros(eq.lhs_rank, &snap.sphere)))
}

/// Right-hand side minus the extra left-hand terms.
pub fn eval_rhs(id: &str, snap: &FieldSnapshot, stress: Option<&StressContext>) -> Res<HorizontalField> {
    let eq = find(id)?;
    rhs_of(eq, &eq.rhs, snap, stress, 0)
}

/// Same as [`eval_rhs`] with the audit-only alternate right-hand side.
pub fn eval_rhs_alternate(id: &str, snap: &FieldSnapshot, stress: Option<&StressContext>) -> Res<Option<HorizontalField>> {
    let eq = find(id)?;
    match &eq.alternate_rhs {
        Some(alt) => Ok(Some(rhs_of(eq, alt, snap, stress, 0)?)),
        None => Ok(None),
    }
}

/// Rotation-transport right-hand side for generator `i`.
pub fn eval_rot_rhs(i: usize, snap: &FieldSnapshot) -> Res<HorizontalField> {
    let eq = find("ROT_O")?;
    rhs_of(eq, &eq.rhs, snap, None, i)
}

/// Value of the left-hand operator of a sphere equation.
pub fn eval_lhs_op(id: &str, snap: &FieldSnapshot) -> Res<HorizontalField> {
    let eq = find(id)?;
    let op = eq.lhs_op.ok_or_else(|| EqError::Missing { eq: id.into(), what: "sphere operator".into() })?;
    op(&Ctx { snap, stress: None, rot: 0, eq: eq.id })
}

/// Rotation generator i (0, 1, 2) on a sphere of radius r, as a one-form:
/// O = x (x) e_i scaled so that [O_i, O_j] = eps_ijk O_k.
pub fn rotation_field(sphere: &SphereGrid, i: usize) -> HorizontalField {
    let r = sphere.radius;
    HorizontalField::one_form_from_ambient(sphere, move |x| {
        let mut e = [0.0; 3];
        e[i] = 1.0;
        // x cross e_i
        [
            r * (x[1] * e[2] - x[2] * e[1]),
            r * (x[2] * e[0] - x[0] * e[2]),
            r * (x[0] * e[1] - x[1] * e[0]),
        ]
    })
}

/// Largest pointwise defect of [O_i, O_j] - eps_ijk O_k over all pairs.
pub fn so3_defect(sphere: &SphereGrid) -> Res<f64> {
    let o: Vec<HorizontalField> = (0..3).map(|i| rotation_field(sphere, i)).collect();
    let mut worst: f64 = 0.0;
    for (i, j, k) in [(0, 1, 2), (1, 2, 0), (2, 0, 1)] {
        let br = so::lie_bracket(&o[i], &o[j])?;
        worst = worst.max((&br - &o[k]).max_abs());
    }
    Ok(worst)
}

/// nabla_3 of (alpha_F, rho_F, sigma_F) from the null Maxwell equations; the
/// alphab_F slot is zero (no equation determines it).
pub fn maxwell_e3_rates(snap: &FieldSnapshot) -> Res<MaxwellComponents> {
    Ok(MaxwellComponents {
        alpha_f: eval_rhs("NM_Lb_alpha", snap, None)?,
        rho_f: eval_rhs("NM_Lb_rho", snap, None)?,
        sigma_f: eval_rhs("NM_Lb_sigma", snap, None)?,
        alphab_f: HorizontalField::zeros(Rank::OneForm, &snap.sphere),
    })
}

/// Flat-cone value of a differentiated quantity and its r-derivative.
fn flat_background(lhs: Lhs, r: f64) -> (f64, f64) {
    match lhs {
        Lhs::Stored(Comp::TrChi) => (2.0 / r, -2.0 / (r * r)),
        Lhs::TrChib => (-2.0 / r, 2.0 / (r * r)),
        _ => (0.0, 0.0),
    }
}

fn lhs_value(lhs: Lhs, snap: &FieldSnapshot) -> HorizontalField {
    match lhs {
        Lhs::Stored(c) => snap.field(c).expect("stored"),
        Lhs::TrChib => snap.trchib(),
        Lhs::RotO => unreachable!("rotation fields are not stored"),
    }
}

/// Residual of one equation at one slab node.
#[derive(Debug, Clone)]
pub struct NodeResidual {
    pub iu: usize,
    pub jub: usize,
    pub u: f64,
    pub ubar: f64,
    pub field: HorizontalField,
}

impl NodeResidual {
    pub fn max_norm(&self) -> f64 {
        self.field.magnitude().into_iter().fold(0.0, f64::max)
    }

    pub fn l2_norm(&self) -> f64 {
        so::lp_norm(&self.field, 2.0).unwrap_or(f64::NAN)
    }
}

/// Residual LHS - RHS at every interior node along the equation's direction
/// (every node for sphere equations). Transported quantities are differenced
/// as deviations from their flat values, whose derivative is added exactly.
pub fn residual(id: &str, slab: &Slab) -> Res<Vec<NodeResidual>> {
    let stress = crate::currents::stress_derivatives(slab);
    residual_with(id, slab, &stress)
}

/// [`residual`] with precomputed stress contexts (one per snapshot).
pub fn residual_with(id: &str, slab: &Slab, stress: &[StressContext]) -> Res<Vec<NodeResidual>> {
    let eq = find(id)?;
    let g = &slab.grid;
    let (n_u, n_ub) = (g.n_u(), g.n_ubar());
    let mut nodes = Vec::new();
    match eq.direction {
        Direction::Sphere => {
            for iu in 0..n_u {
                for j in 0..n_ub {
                    nodes.push((iu, j));
                }
            }
        }
        Direction::L => {
            if n_ub < 3 {
                return Err(EqError::TooFewSnapshots { eq: id.into(), needed: 3, got: n_ub });
            }
            for iu in 0..n_u {
                for j in 1..n_ub - 1 {
                    nodes.push((iu, j));
                }
            }
        }
        Direction::Lb => {
            if n_u < 3 {
                return Err(EqError::TooFewSnapshots { eq: id.into(), needed: 3, got: n_u });
            }
            for iu in 1..n_u - 1 {
                for j in 0..n_ub {
                    nodes.push((iu, j));
                }
            }
        }
    }
    use rayon::prelude::*;
    nodes
        .into_par_iter()
        .map(|(iu, j)| {
            let snap = slab.at(iu, j);
            let st = &stress[iu * n_ub + j];
            let field = match eq.direction {
                Direction::Sphere => {
                    let lhs = (eq.lhs_op.expect("sphere equation has an operator"))(&Ctx {
                        snap,
                        stress: Some(st),
                        rot: 0,
                        eq: eq.id,
                    })?;
                    &lhs - &rhs_of(eq, &eq.rhs, snap, Some(st), 0)?
                }
                _ if eq.lhs == Lhs::RotO => rot_residual(snap)?,
                dir => {
                    let along_u = dir == Direction::Lb;
                    let (x, n, k) = if along_u { (&g.u_nodes, n_u, iu) } else { (&g.ubar_nodes, n_ub, j) };
                    let (k0, _) = stencil(n, k);
                    let w = fd_weights(x, k0, k);
                    let mut d = HorizontalField::zeros(eq.lhs_rank, &snap.sphere);
                    for (m, wm) in w.iter().enumerate() {
                        let s = if along_u { slab.at(k0 + m, j) } else { slab.at(iu, k0 + m) };
                        let (q0, _) = flat_background(eq.lhs, s.radius());
                        let dev = lhs_value(eq.lhs, s).map_if_scalar(|v| v - q0);
                        d.add_scaled(&dev.on_sphere(&snap.sphere), *wm);
                    }
                    let (_, dq0) = flat_background(eq.lhs, snap.radius());
                    // dr/dubar = 1, dr/du = -1
                    let dflat = if along_u { -dq0 } else { dq0 };
                    let d = d.map_if_scalar(|v| v + dflat);
                    let lhs = d.mul_scalar(&snap.lapse.map(|o| 1.0 / o));
                    &lhs - &rhs_of(eq, &eq.rhs, snap, Some(st), 0)?
                }
            };
            Ok(NodeResidual { iu, jub: j, u: snap.u, ubar: snap.ubar, field })
        })
        .collect()
}

/// Rotation-transport residual on a sphere: O = r O_unit is extended with
/// d/dubar O = O_unit, and the pointwise magnitudes of the three generator
/// residuals are combined in quadrature.
fn rot_residual(snap: &FieldSnapshot) -> Res<HorizontalField> {
    let r = snap.radius();
    let inv = snap.lapse.map(|o| 1.0 / o);
    let mut acc = vec![0.0; snap.sphere.n_nodes()];
    for i in 0..3 {
        let dot = rotation_field(&snap.sphere, i).scale(1.0 / r).mul_scalar(&inv);
        let res = &dot - &eval_rot_rhs(i, snap)?;
        for (a, v) in acc.iter_mut().zip(res.norm_sq().data()) {
            *a += v;
        }
    }
    Ok(HorizontalField::from_data(Rank::Scalar, &snap.sphere, acc.into_iter().map(f64::sqrt).collect())?)
}

trait MapScalar {
    fn map_if_scalar(&self, f: impl Fn(f64) -> f64) -> HorizontalField;
}

impl MapScalar for HorizontalField {
    fn map_if_scalar(&self, f: impl Fn(f64) -> f64) -> HorizontalField {
        if self.rank == Rank::Scalar {
            self.map(f)
        } else {
            self.clone()
        }
    }
}

/// Mass aspect functions and the Gauss curvature from the Gauss equation.
#[derive(Debug, Clone)]
pub struct Diagnostics {
    pub mu: HorizontalField,
    pub mub: HorizontalField,
    pub kappa: HorizontalField,
    pub kappab: HorizontalField,
    pub k_gauss: HorizontalField,
}

/// mu = -div eta - rho, mub = -div etab - rho,
/// kappa = *D1(-omega, omega_dag) - beta/2, kappab = *D1(omegab, omegab_dag) - betab/2,
/// K from the Gauss equation.
pub fn diagnostics(snap: &FieldSnapshot) -> Res<Diagnostics> {
    let k = &snap.coeffs;
    let w = &snap.weyl;
    let mu = &so::div(&k.eta)?.scale(-1.0) - &w.rho;
    let mub = &so::div(&k.etab)?.scale(-1.0) - &w.rho;
    let mut kappa = so::hodge_d1_star(&k.omega.scale(-1.0), &k.omega_dag)?;
    kappa.add_scaled(&w.beta, -0.5);
    let mut kappab = so::hodge_d1_star(&k.omegab, &k.omegab_dag)?;
    kappab.add_scaled(&w.betab, -0.5);
    let st = StressContext::static_only(snap);
    let k_gauss = eval_rhs("NSE_gauss", snap, Some(&st))?;
    Ok(Diagnostics { mu, mub, kappa, kappab, k_gauss })
}
