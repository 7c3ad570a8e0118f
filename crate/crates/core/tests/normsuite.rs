use nullpulse::idata::{build_h0, ChaseOptions, PulseKind, ShortPulseConfig};
use nullpulse::normsuite::{
    evaluate, loglog_slope, sc_norm, sc_norm_field, scaling_study, total_norms, Decorated, Extent, FitStatus, NormSpec, NormValue,
};
use nullpulse::null_state::{Comp, DoubleNullGrid, Slab, STORED};
use nullpulse::sigcalc::{norm_weight, scale, tag_of, Baseline, NormKind, Rational};
use nullpulse::sphere_ops::{self as so, HorizontalField, Rank, SphereGrid};
use proptest::prelude::*;

fn small(kind: PulseKind, mass: f64, delta: f64) -> ShortPulseConfig {
    let mut c = ShortPulseConfig::new(delta, 10.0, kind, mass);
    c.l_max = 6;
    c.n_pulse = 16;
    c
}

/// Minkowski slab with every stored component pushed off its flat value.
fn perturbed_slab() -> Slab {
    let g = DoubleNullGrid::uniform(10.0, 0.05, 0.2, 3, 6, 2).unwrap();
    let s = SphereGrid::new(6, 10.0).unwrap();
    let mut slab = Slab::minkowski(&g, &s).unwrap();
    for snap in slab.snaps.iter_mut() {
        let amp = 1e-3 * (1.0 + snap.u + 10.0 * snap.ubar.max(0.0));
        let sph = snap.sphere.clone();
        for c in STORED {
            let mut f = snap.field(c).unwrap();
            let bump = match c.rank() {
                Rank::Scalar => HorizontalField::scalar_from_fn(&sph, |x| x[0] + 0.5 * x[2] * x[2]),
                Rank::OneForm => HorizontalField::one_form_from_ambient(&sph, |x| [x[1], 1.0 + x[2], x[0] * x[1]]),
                _ => so::hat_grad(&HorizontalField::one_form_from_ambient(&sph, |x| [x[2], x[0], x[1] * x[1]])).unwrap(),
            };
            f.add_scaled(&bump, amp);
            snap.set(c, f).unwrap();
        }
    }
    slab
}

#[test]
fn applied_exponent_is_the_tabulated_weight() {
    let slab = perturbed_slab();
    let delta = slab.grid.delta;
    let mut checked = 0;
    for c in STORED {
        for d in [Decorated::plain(c), Decorated::plain(c).grad(), Decorated::plain(c).nabla4(), Decorated::plain(c).nabla3()] {
            for (kind, extent) in [
                (NormKind::LpS(2), Extent::Sphere { iu: 1, jub: 4 }),
                (NormKind::LpS(4), Extent::Sphere { iu: 1, jub: 4 }),
                (NormKind::Linf, Extent::Sphere { iu: 2, jub: 7 }),
                (NormKind::L2H, Extent::Outgoing { iu: 1, j_end: 7 }),
                (NormKind::TraceH, Extent::Outgoing { iu: 1, j_end: 7 }),
                (NormKind::L2Hb, Extent::Incoming { jub: 5, i_end: 2 }),
                (NormKind::TraceHb, Extent::Incoming { jub: 5, i_end: 2 }),
            ] {
                for bl in [Baseline::Half, Baseline::One] {
                    let spec = NormSpec::new(d, kind, extent, delta, bl);
                    let want = norm_weight(scale(&tag_of(c).with_derivs(d.d4, d.d3, d.da), bl), kind);
                    let ev = evaluate(&spec, &slab).unwrap().unwrap();
                    assert_eq!(ev.exponent, want, "{} {}", d.label(), kind.name());
                    assert!(ev.raw > 0.0, "{} {}", d.label(), kind.name());
                    let v = ev.raw * delta.powf(want.to_f64());
                    assert!((ev.value - v).abs() <= 1e-14 * v);
                    checked += 1;
                }
            }
        }
    }
    assert_eq!(checked, STORED.len() * 4 * 7 * 2);
}

#[test]
fn tabulated_weights_of_named_norms() {
    let w = |c: Comp, kind| norm_weight(scale(&tag_of(c), Baseline::Half), kind);
    // delta^{-sc-1} ||phi||_{L2(H)} with sc(alpha_F) = -1/2
    assert_eq!(w(Comp::AlphaF, NormKind::L2H), Rational::half(-1));
    assert_eq!(w(Comp::Alpha, NormKind::LpS(2)), Rational::int(1));
    assert_eq!(w(Comp::Alphab, NormKind::L2Hb), Rational::int(-1));
    assert_eq!(w(Comp::Rho, NormKind::Linf), Rational::half(1));
}

#[test]
fn constant_field_on_unit_area_sphere() {
    let s = SphereGrid::new(4, 0.5 / std::f64::consts::PI.sqrt()).unwrap();
    let f = HorizontalField::constant_scalar(-3.0, &s);
    for d in [1e-2, 1e-4] {
        let v = sc_norm_field(&f, Rational::half(-1), NormKind::LpS(2), d).unwrap();
        assert!((v - 3.0).abs() < 1e-12);
    }
    let z = HorizontalField::zeros(Rank::Scalar, &s);
    assert_eq!(sc_norm_field(&z, Rational::half(-1), NormKind::LpS(4), 1e-3).unwrap(), 0.0);
}

proptest! {
    #[test]
    fn holder_equality_for_constants(
        a in 0.1f64..5.0, b in 0.1f64..5.0, n1 in -4i64..4, n2 in -4i64..4,
        ps in prop::sample::select(vec![(2u32, 4u32, 4u32), (4, 8, 8), (2, 4, 4)]),
        ld in -4.0f64..-1.0,
    ) {
        let delta = 10f64.powf(ld);
        let s = SphereGrid::new(4, 0.5 / std::f64::consts::PI.sqrt()).unwrap();
        let (sc1, sc2) = (Rational::half(n1), Rational::half(n2));
        let sc = sc1 + sc2 - Rational::half(1);
        let (p, p1, p2) = ps;
        let f1 = HorizontalField::constant_scalar(a, &s);
        let f2 = HorizontalField::constant_scalar(b, &s);
        let lhs = sc_norm_field(&HorizontalField::constant_scalar(a * b, &s), sc, NormKind::LpS(p), delta).unwrap();
        let rhs = delta.sqrt()
            * sc_norm_field(&f1, sc1, NormKind::LpS(p1), delta).unwrap()
            * sc_norm_field(&f2, sc2, NormKind::LpS(p2), delta).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-10 * rhs);
    }
}

#[test]
fn flat_data_has_zero_totals() {
    let g = DoubleNullGrid::uniform(10.0, 0.05, 0.2, 3, 6, 2).unwrap();
    let slab = Slab::minkowski(&g, &SphereGrid::new(4, 10.0).unwrap()).unwrap();
    let t = total_norms(&slab, Baseline::Half).unwrap();
    for n in t.norms.iter().chain(&t.terms) {
        assert_eq!(n.value, NormValue::Value(0.0), "{}", n.name);
    }
    assert!(t.localized.iter().all(|l| l.local == 0.0 && l.global == 0.0));
}

#[test]
fn localized_norms_do_not_exceed_global() {
    let h = build_h0(&small(PulseKind::Mixed, 0.19, 1e-3), ChaseOptions::default()).unwrap();
    let t = total_norms(&h.slab, Baseline::Half).unwrap();
    assert!(t.localized.len() >= 4);
    for l in &t.localized {
        assert!(l.local > 0.0 && l.local <= l.global * (1.0 + 1e-12), "{}: {} > {}", l.name, l.local, l.global);
    }
    let p = perturbed_slab();
    for l in total_norms(&p, Baseline::Half).unwrap().localized {
        assert!(l.local <= l.global * (1.0 + 1e-12), "{}", l.name);
    }
}

#[test]
fn maxwell_only_pulse() {
    let h = build_h0(&small(PulseKind::MaxwellOnly, 0.19, 1e-3), ChaseOptions::default()).unwrap();
    let t = total_norms(&h.slab, Baseline::Half).unwrap();
    let j_end = h.slab.grid.n_ubar() - 1;
    for kind in [NormKind::LpS(2), NormKind::LpS(4), NormKind::Linf] {
        let spec = NormSpec::new(Decorated::plain(Comp::ChiHat), kind, Extent::Sphere { iu: 0, jub: j_end }, 1e-3, Baseline::Half);
        assert_eq!(sc_norm(&spec, &h.slab).unwrap(), NormValue::Value(0.0));
    }
    let loc = t.localized.iter().find(|l| l.name.contains("chihat]")).unwrap();
    assert_eq!(loc.local, 0.0);
    assert!(t.get("R_0").unwrap().value().unwrap() > 0.0);
    assert!(t.get("F_0").unwrap().value().unwrap() > 0.0);
    // alpha is sourced only through chihat
    assert_eq!(t.get("R_0[alpha]").unwrap().value().unwrap(), 0.0);
}

#[test]
fn missing_derivatives_are_unavailable() {
    let h = build_h0(&small(PulseKind::Mixed, 0.19, 1e-3), ChaseOptions::default()).unwrap();
    let t = total_norms(&h.slab, Baseline::Half).unwrap();
    for name in ["O_Hb", "Rb_0", "Rb_1", "Fb_0", "Fb_1", "Fb_2"] {
        assert!(!t.get(name).unwrap().is_available(), "{name}");
    }
    let spec = NormSpec::new(
        Decorated::plain(Comp::AlphaF).nabla3(),
        NormKind::LpS(2),
        Extent::Sphere { iu: 0, jub: 10 },
        1e-3,
        Baseline::Half,
    );
    let v = sc_norm(&spec, &h.slab).unwrap();
    assert!(!v.is_available());
    assert_eq!(serde_json::to_value(&v).unwrap(), serde_json::json!("unavailable"));
    assert_eq!(v.to_string(), "unavailable");
}

#[test]
fn bad_specs_are_rejected() {
    let slab = perturbed_slab();
    let d = Decorated::plain(Comp::Rho);
    let bad = [
        NormSpec::new(d, NormKind::LpS(2), Extent::Sphere { iu: 9, jub: 0 }, 0.05, Baseline::Half),
        NormSpec::new(d, NormKind::L2H, Extent::Sphere { iu: 0, jub: 0 }, 0.05, Baseline::Half),
        NormSpec::new(d, NormKind::LpS(2), Extent::Sphere { iu: 0, jub: 0 }, 0.01, Baseline::Half),
    ];
    for s in bad {
        assert!(evaluate(&s, &slab).is_err(), "{s:?}");
    }
}

#[test]
fn zero_pulse_fits_are_degenerate() {
    let st = scaling_study(&small(PulseKind::Mixed, 0.0, 1e-3), &[1e-2, 1e-3, 1e-4], ChaseOptions::default(), Baseline::Half)
        .unwrap();
    for name in ["I_0", "O_0_2", "R_0", "F_0", "raw_linf_alpha_f"] {
        assert_eq!(st.fit(name).unwrap().status, FitStatus::Degenerate, "{name}");
    }
    assert!(scaling_study(&small(PulseKind::Mixed, 0.0, 1e-3), &[1e-2, 1e-3], ChaseOptions::default(), Baseline::Half).is_err());
}

#[test]
fn slope_fit() {
    let x = [1e-2, 1e-3, 1e-4];
    let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-0.5)).collect();
    assert!((loglog_slope(&x, &y).unwrap() + 0.5).abs() < 1e-12);
    assert!(loglog_slope(&x, &[1.0, 0.0, 1.0]).is_none());
}
