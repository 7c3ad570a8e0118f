use nullpulse::formation::{
    amplification, criterion_window, evolve_focusing, evolve_trchi, smallness_monitors, verdict, FieldSource, FormationMode,
    FormationSettings, Verdict,
};
use nullpulse::idata::{build_h0, ChaseOptions, ConstraintSolution, PulseKind, ShortPulseConfig};
use nullpulse::sphere_ops::SphereGrid;

fn h0(kind: PulseKind, mass: f64, delta: f64) -> ConstraintSolution {
    let mut c = ShortPulseConfig::new(delta, 10.0, kind, mass);
    c.l_max = 6;
    c.n_pulse = 16;
    build_h0(&c, ChaseOptions::default()).unwrap()
}

fn settings(mode: FormationMode) -> FormationSettings {
    FormationSettings { mode, n_u: 21, u_max: 1.0, u_target: 1.0, ..Default::default() }
}

fn trchi(h: &ConstraintSolution, s: &FormationSettings) -> Vec<f64> {
    let f = evolve_focusing(h, s).unwrap();
    evolve_trchi(h, &f, s).unwrap().0
}

#[test]
fn amplification_law() {
    assert!((amplification(1.0, 0.0, 10.0).unwrap() - (10.0f64 / 9.0).powi(2)).abs() < 1e-15);
    assert_eq!(amplification(0.0, 1e-3, 10.0).unwrap(), 1.0);
}

#[test]
fn window_examples() {
    let w = criterion_window(1.0, 10.0, 1e-12, 0.0).unwrap();
    assert!((w.lower - 0.18).abs() < 1e-9 && (w.upper - 0.2).abs() < 1e-9);
    let w = criterion_window(1.0, 10.0, 1e-3, 0.0).unwrap();
    assert!((w.upper - 0.19998).abs() < 1e-12);
    let w = criterion_window(0.0, 10.0, 1e-3, 0.0).unwrap();
    assert!((w.lower - 0.2).abs() < 1e-15 && w.empty);
    // a positive C0 only narrows the window
    let w1 = criterion_window(1.0, 10.0, 1e-3, 2.0).unwrap();
    assert!(w1.lower > 0.18);
}

#[test]
fn bound_mode_value() {
    let h = h0(PulseKind::Mixed, 0.19, 1e-3);
    let s = settings(FormationMode::Bound);
    let t = trchi(&h, &s);
    let n = t.len() / s.n_u;
    let want = 2.0 / 9.0 - 100.0 / 81.0 * 0.19;
    for v in &t[(s.n_u - 1) * n..] {
        assert!((v - want).abs() < 1e-6, "{v} vs {want}");
    }
    assert!(want < 0.0);
}

#[test]
fn zero_pulse_is_the_flat_cone() {
    let h = h0(PulseKind::Mixed, 0.0, 1e-3);
    let s = settings(FormationMode::Model);
    let t = trchi(&h, &s);
    let n = t.len() / s.n_u;
    for (k, u) in s.u_nodes().iter().enumerate() {
        for v in &t[k * n..(k + 1) * n] {
            assert!((v - 2.0 / (10.0 + 1e-3 - u)).abs() < 1e-10);
        }
    }
    let rep = verdict(&h, &s).unwrap();
    assert_eq!(rep.verdict, Verdict::NotTrapped);
    assert_eq!(rep.monitors.g1_int + rep.monitors.g2_int + rep.monitors.h1 + rep.monitors.h2, 0.0);
}

#[test]
fn model_lies_below_bound() {
    for (kind, m) in [(PulseKind::Mixed, 0.19), (PulseKind::MaxwellOnly, 0.1), (PulseKind::ShearOnly, 0.15)] {
        let h = h0(kind, m, 1e-3);
        let a = trchi(&h, &settings(FormationMode::Model));
        let b = trchi(&h, &settings(FormationMode::Bound));
        for (x, y) in a.iter().zip(&b) {
            assert!(*x <= y + 1e-6, "{kind:?}: {x} > {y}");
        }
    }
}

#[test]
fn monotone_in_mass() {
    let s = settings(FormationMode::Model);
    let ts: Vec<Vec<f64>> = [0.1, 0.15, 0.19].iter().map(|m| trchi(&h0(PulseKind::Mixed, *m, 1e-3), &s)).collect();
    for w in ts.windows(2) {
        assert!(w[0].iter().zip(&w[1]).all(|(a, b)| b < a));
    }
}

#[test]
fn maxwell_and_shear_pulses_focus_alike() {
    let s = settings(FormationMode::Model);
    let a = trchi(&h0(PulseKind::MaxwellOnly, 0.19, 1e-3), &s);
    let b = trchi(&h0(PulseKind::ShearOnly, 0.19, 1e-3), &s);
    assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-12));
}

#[test]
fn verdict_examples() {
    let s = settings(FormationMode::Model);
    let rep = verdict(&h0(PulseKind::Mixed, 0.19, 1e-3), &s).unwrap();
    assert_eq!(rep.verdict, Verdict::Trapped);
    assert!(rep.h0.condition_holds && !rep.h0.trapped_on_h0);
    assert!(rep.rows.iter().all(|r| !r.trapped || r.trchi_max < 0.0 && r.trchib_max < 0.0));
    assert_eq!(rep.rows[0].trapped, false);
    // margin-free consistency; the model ODE keeps the -trchi^2/2 focusing
    // term and traps earlier than the window, so check it on the bound
    let bound = verdict(&h0(PulseKind::Mixed, 0.19, 1e-3), &settings(FormationMode::Bound)).unwrap();
    assert_eq!(bound.verdict, Verdict::Trapped);
    for r in bound.rows.iter().filter(|r| r.trapped) {
        assert!(r.window_lower.unwrap() < bound.h0.integral_max, "u = {}", r.u);
    }
    let first_model = rep.first_trapped_u.unwrap();
    assert!(first_model <= bound.first_trapped_u.unwrap());

    let rep = verdict(&h0(PulseKind::Mixed, 0.10, 1e-3), &s).unwrap();
    assert_eq!(rep.verdict, Verdict::NotTrapped);
    assert!(rep.first_trapped_u.is_none());

    let rep = verdict(&h0(PulseKind::Mixed, 0.25, 1e-3), &s).unwrap();
    assert_eq!(rep.verdict, Verdict::AnsatzViolated);
    assert!(!rep.h0.condition_holds);
}

#[test]
fn extended_mode_with_zero_fields_is_exact() {
    let h = h0(PulseKind::Mixed, 0.19, 1e-3);
    let model = evolve_focusing(&h, &settings(FormationMode::Model)).unwrap();
    let mut s = settings(FormationMode::Extended);
    // a closure forces the integrator path
    s.errors.trchib_tilde = FieldSource::custom(|_, _, _| 0.0);
    let ext = evolve_focusing(&h, &s).unwrap();
    let scale = model.alphaf_sq.iter().fold(0.0f64, |m, v| m.max(*v));
    for (a, b) in model.alphaf_sq.iter().zip(&ext.alphaf_sq).chain(model.chihat_sq.iter().zip(&ext.chihat_sq)) {
        assert!((a - b).abs() <= 1e-10 * scale);
    }
}

fn g2_int(h: &ConstraintSolution, s: &FormationSettings) -> f64 {
    let f = evolve_focusing(h, s).unwrap();
    let unit = SphereGrid::new(6, 1.0).unwrap();
    smallness_monitors(&f, s, &unit).g2_int
}

#[test]
fn g2_is_linear_in_the_error_amplitude() {
    let h = h0(PulseKind::MaxwellOnly, 0.19, 1e-3);
    let run = |c: f64, source: bool| {
        let mut s = settings(FormationMode::Extended);
        if source {
            s.errors.e2_alphaf = FieldSource::Constant(c);
        } else {
            s.errors.trchib_tilde = FieldSource::Constant(c * 1e-3f64.powf(-0.5));
        }
        g2_int(&h, &s)
    };
    // additive source: exactly linear
    let (a, b) = (run(0.01, true), run(0.03, true));
    assert!(a > 0.0 && (b / a - 3.0).abs() < 1e-9);
    // trchib enters the transport multiplicatively: linear to first order
    let (a, b) = (run(1e-6, false), run(2e-6, false));
    assert!(a > 0.0 && (b / a - 2.0).abs() < 1e-3, "{}", b / a);
}

#[test]
fn monitors_shrink_like_sqrt_delta() {
    // fixed scale-invariant amplitude: delta^{-1/2} ||trchib_tilde||_inf = 0.05
    let mut vals = Vec::new();
    for d in [1e-2, 1e-3, 1e-4] {
        let h = h0(PulseKind::Mixed, 0.19, d);
        let mut s = settings(FormationMode::Extended);
        s.errors.trchib_tilde = FieldSource::Constant(0.05 * d.sqrt());
        let f = evolve_focusing(&h, &s).unwrap();
        let unit = SphereGrid::new(6, 1.0).unwrap();
        let m = smallness_monitors(&f, &s, &unit);
        vals.push((d, m.g1_int, m.g2_int));
    }
    for w in vals.windows(2) {
        for (x, y) in [(w[0].1, w[1].1), (w[0].2, w[1].2)] {
            let r = x / y / 10f64.sqrt();
            assert!(r > 0.5 && r < 2.0, "{vals:?}");
        }
    }
}
