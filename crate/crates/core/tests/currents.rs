use nullpulse::currents::{
    self as cu, bel_robinson, dual2, dual4, flux_t, inverse_metric, ix, maxwell_tensor, stress_tensor, trace2, weyl_components,
    weyl_tensor, Multiplier, E3, E4,
};
use nullpulse::idata::{build_h0, ChaseOptions, PulseKind, ShortPulseConfig};
use nullpulse::normsuite::{evaluate, Decorated, Extent, NormSpec};
use nullpulse::null_state::Comp;
use nullpulse::sigcalc::{Baseline, NormKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_maxwell(rng: &mut ChaCha8Rng) -> [[f64; 4]; 4] {
    let mut v = || rng.gen_range(-1.0..1.0);
    maxwell_tensor([v(), v()], [v(), v()], v(), v())
}

fn rand_weyl(rng: &mut ChaCha8Rng) -> [f64; 10] {
    std::array::from_fn(|_| rng.gen_range(-1.0..1.0))
}

#[test]
fn stress_tensor_algebra() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let f = rand_maxwell(&mut rng);
        let t = stress_tensor(&f);
        let (al, ab, _, _) = cu::maxwell_components(&f);
        assert!(trace2(&t).abs() < 1e-13);
        for a in 0..4 {
            for b in 0..4 {
                assert!((t[a][b] - t[b][a]).abs() < 1e-14);
            }
        }
        // T[*F] = T[F]
        let td = stress_tensor(&dual2(&f));
        for a in 0..4 {
            for b in 0..4 {
                assert!((td[a][b] - t[a][b]).abs() < 1e-12);
            }
        }
        assert!((t[E4][E4] - (al[0] * al[0] + al[1] * al[1])).abs() < 1e-13);
        assert!((t[E3][E3] - (ab[0] * ab[0] + ab[1] * ab[1])).abs() < 1e-13);
        assert!(t[E4][E4] >= 0.0 && t[E3][E3] >= 0.0 && t[E3][E4] >= -1e-14);
    }
}

fn q_trace(q: &[f64; 256], c: usize, d: usize) -> f64 {
    let gi = inverse_metric();
    let mut s = 0.0;
    for a in 0..4 {
        for b in 0..4 {
            s += gi[a][b] * q[ix(a, b, c, d)];
        }
    }
    s
}

#[test]
fn bel_robinson_algebra() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let c = rand_weyl(&mut rng);
        let w = weyl_tensor(&c);
        let back = weyl_components(&w);
        assert!(back.iter().zip(&c).all(|(x, y)| (x - y).abs() < 1e-12));
        let q = bel_robinson(&w);
        let scale = q.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for a in 0..4 {
            for b in 0..4 {
                for cc in 0..4 {
                    for d in 0..4 {
                        let v = q[ix(a, b, cc, d)];
                        for p in [ix(b, a, cc, d), ix(a, b, d, cc), ix(cc, d, a, b), ix(a, cc, b, d)] {
                            assert!((v - q[p]).abs() < 1e-11 * scale);
                        }
                    }
                }
                assert!(q_trace(&q, a, b).abs() < 1e-11 * scale);
            }
        }
        assert!(q[ix(E4, E4, E4, E4)] >= 0.0);
        assert!(q[ix(E3, E3, E3, E3)] >= 0.0);
        // Q[*W] = Q[W]
        let qd = bel_robinson(&dual4(&w));
        assert!(q.iter().zip(&qd).all(|(x, y)| (x - y).abs() < 1e-10 * scale));
        // Q4444 sees only alpha
        let mut only = [0.0; 10];
        only[0] = c[0];
        only[1] = c[1];
        let q_alpha = bel_robinson(&weyl_tensor(&only));
        assert!((q[ix(E4, E4, E4, E4)] - q_alpha[ix(E4, E4, E4, E4)]).abs() < 1e-11 * scale);
    }
}

#[test]
fn flux_matches_hypersurface_norm() {
    let mut cfg = ShortPulseConfig::new(1e-2, 10.0, PulseKind::Mixed, 0.19);
    cfg.l_max = 6;
    cfg.n_pulse = 16;
    let h0 = build_h0(&cfg, ChaseOptions::default()).unwrap();
    let rows = flux_t(&h0.slab, Multiplier::L);
    let flux = rows.iter().find(|r| r.cone == "H").unwrap().flux;
    let j_end = h0.slab.grid.n_ubar() - 1;
    let spec = NormSpec::new(
        Decorated::plain(Comp::AlphaF),
        NormKind::L2H,
        Extent::Outgoing { iu: 0, j_end },
        cfg.delta,
        Baseline::Half,
    );
    let raw = evaluate(&spec, &h0.slab).unwrap().unwrap().raw;
    assert!(flux > 0.0);
    assert!((flux - raw * raw).abs() < 1e-10 * flux.max(1.0), "{flux} vs {}", raw * raw);
    // single cone: no incoming rows
    assert!(rows.iter().all(|r| r.cone == "H"));
}

#[test]
fn deformation_of_l_on_flat_data() {
    let s = nullpulse::sphere_ops::SphereGrid::new(4, 8.0).unwrap();
    let snap = nullpulse::null_state::minkowski_snapshot(0.0, 0.0, 8.0, &s).unwrap();
    let pi = cu::deformation(Multiplier::L, &snap);
    // pi_ab = chi / Omega = (1/r) delta_ab on the flat cone
    let tr = pi.pi_ab.trace();
    assert!(tr.data().iter().all(|v| (v - 2.0 / 8.0).abs() < 1e-14));
    assert_eq!(pi.pi33.max_abs(), 0.0);
    assert_eq!(pi.pi3a.max_abs(), 0.0);
}
