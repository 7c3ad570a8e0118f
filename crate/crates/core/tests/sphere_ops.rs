use nullpulse::sphere_ops::{self as so, lm_index, HorizontalField, Rank, SphereGrid, SpinCoeffs};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const L: usize = 8;

fn random_scalar(s: &SphereGrid, rng: &mut impl Rng, l_top: usize) -> HorizontalField {
    let mut f = HorizontalField::zeros(Rank::Scalar, s);
    for l in 0..=l_top {
        for m in -(l as i64)..=(l as i64) {
            f.add_scaled(&so::real_harmonic(s, l, m), rng.gen_range(-1.0..1.0));
        }
    }
    f
}

fn random_spin(s: &SphereGrid, rank: Rank, rng: &mut impl Rng, l_top: usize) -> HorizontalField {
    let spin = rank.spin().unwrap();
    let mut data = vec![Complex64::new(0.0, 0.0); (L + 1) * (L + 1)];
    for l in spin as usize..=l_top {
        for m in -(l as i64)..=(l as i64) {
            data[lm_index(l, m)] = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
    }
    so::from_coeffs(rank, s, &SpinCoeffs { spin, data }).unwrap()
}

fn rel_err(a: &HorizontalField, b: &HorizontalField) -> f64 {
    let d = (a - b).max_abs();
    d / b.max_abs().max(1e-300)
}

#[test]
fn hodge_bochner_identities_on_random_fields() {
    let s = SphereGrid::new(L, 3.7).unwrap();
    let k = 1.0 / (s.radius * s.radius);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let f = random_spin(&s, Rank::OneForm, &mut rng, L - 1);
        // *D1 D1 F = -lap F + K F
        let (d, c) = so::hodge_d1(&f).unwrap();
        let lhs = so::hodge_d1_star(&d, &c).unwrap();
        let mut rhs = so::laplacian(&f).unwrap().scale(-1.0);
        rhs.add_scaled(&f, k);
        worst = worst.max(rel_err(&lhs, &rhs));

        // D1 *D1 (f1, f2) = (-lap f1, -lap f2)
        let (f1, f2) = (random_scalar(&s, &mut rng, L - 1), random_scalar(&s, &mut rng, L - 1));
        let (a, b) = so::hodge_d1(&so::hodge_d1_star(&f1, &f2).unwrap()).unwrap();
        worst = worst.max(rel_err(&a, &so::laplacian(&f1).unwrap().scale(-1.0)));
        worst = worst.max(rel_err(&b, &so::laplacian(&f2).unwrap().scale(-1.0)));

        // D2 *D2 F = -1/2 (lap F + K F)
        let lhs = so::hodge_d2(&so::hodge_d2_star(&f).unwrap()).unwrap();
        let mut rhs = so::laplacian(&f).unwrap();
        rhs.add_scaled(&f, k);
        worst = worst.max(rel_err(&lhs, &rhs.scale(-0.5)));

        // *D2 D2 A = -1/2 lap A + K A
        let a = random_spin(&s, Rank::Sym2Traceless, &mut rng, L - 1);
        let lhs = so::hodge_d2_star(&so::hodge_d2(&a).unwrap()).unwrap();
        let mut rhs = so::laplacian(&a).unwrap().scale(-0.5);
        rhs.add_scaled(&a, k);
        worst = worst.max(rel_err(&lhs, &rhs));
    }
    assert!(worst < 1e-8, "worst relative error {worst:e}");
}

#[test]
fn scalar_laplacian_eigenvalues() {
    let r = 2.5;
    let s = SphereGrid::new(L, r).unwrap();
    for l in 0..=L - 2 {
        for m in -(l as i64)..=(l as i64) {
            let y = so::real_harmonic(&s, l, m);
            let got = so::laplacian(&y).unwrap();
            let want = y.scale(-((l * (l + 1)) as f64) / (r * r));
            assert!((&got - &want).max_abs() < 1e-10, "l={l} m={m}");
        }
    }
}

#[test]
fn laplacian_matches_div_grad() {
    // independent route: div(grad f) for scalars
    let s = SphereGrid::new(L, 1.3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let f = random_scalar(&s, &mut rng, L);
    let a = so::div(&so::grad(&f).unwrap()).unwrap();
    let b = so::laplacian(&f).unwrap();
    assert!(rel_err(&a, &b) < 1e-11);
}

#[test]
fn quadrature_and_area() {
    let s = SphereGrid::new(L, 2.0).unwrap();
    assert_eq!(s.n_nodes(), (L + 2) * (2 * L + 4));
    assert!((s.area() - 16.0 * std::f64::consts::PI).abs() < 1e-12);
    // x^2 + y^2 + z^2 = 1 and int z^2 = area / 3
    let z2 = HorizontalField::scalar_from_fn(&s, |p| p[2] * p[2]);
    assert!((s.integrate(z2.data()) - s.area() / 3.0).abs() < 1e-12);
}

#[test]
fn real_harmonics_are_orthonormal() {
    let s = SphereGrid::new(L, 1.0).unwrap();
    let ys: Vec<HorizontalField> =
        (0..=L).flat_map(|l| (-(l as i64)..=(l as i64)).map(move |m| (l, m))).map(|(l, m)| so::real_harmonic(&s, l, m)).collect();
    for (i, a) in ys.iter().enumerate() {
        for (j, b) in ys.iter().enumerate().skip(i) {
            let ip = s.integrate(a.dot(b).data());
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((ip - want).abs() < 1e-12, "{i} {j} {ip}");
        }
    }
}

#[test]
fn spectral_round_trip_and_projection() {
    let s = SphereGrid::new(L, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for rank in [Rank::OneForm, Rank::Sym2Traceless] {
        let f = random_spin(&s, rank, &mut rng, L);
        let p = so::project(&f).unwrap();
        assert!((&p - &f).max_abs() < 1e-12);
    }
}

#[test]
fn gradient_norm_matches_explicit_gradient() {
    // |grad f|^2 two ways: explicit one-form vs the edth-word sum
    let s = SphereGrid::new(L, 1.7).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let f = random_scalar(&s, &mut rng, L - 1);
    let g = so::grad(&f).unwrap();
    let a = g.norm_sq();
    let b = so::grad_power_norm_sq(&f, 1).unwrap();
    assert!((&a - &b).max_abs() < 1e-10 * a.max_abs());
    // Hessian: traceless part is hat_grad(grad f) / 2, trace is lap f
    let h = so::hat_grad(&g).unwrap();
    let lap = so::laplacian(&f).unwrap();
    let want = &h.norm_sq().scale(0.25) + &lap.norm_sq().scale(0.5);
    let got = so::grad_power_norm_sq(&f, 2).unwrap();
    assert!((&got - &want).max_abs() < 1e-9 * want.max_abs());
}

#[test]
fn lp_norms_of_constants() {
    let r = 0.5 / std::f64::consts::PI.sqrt();
    let s = SphereGrid::new(4, r).unwrap();
    let f = HorizontalField::constant_scalar(-2.0, &s);
    for p in [1.0, 2.0, 4.0, f64::INFINITY] {
        assert!((so::lp_norm(&f, p).unwrap() - 2.0).abs() < 1e-12);
    }
    assert!(so::lp_norm(&f, 0.5).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn grad_of_harmonic_is_eigen_consistent(l in 1usize..=6, m_off in 0usize..13, r in 0.5f64..20.0) {
        // int |grad Y|^2 = l(l+1)/r^2 int Y^2
        let m = (m_off % (2 * l + 1)) as i64 - l as i64;
        let s = SphereGrid::new(L, r).unwrap();
        let y = so::real_harmonic(&s, l, m);
        let g = so::grad(&y).unwrap();
        let lhs = s.integrate(g.norm_sq().data());
        let rhs = (l * (l + 1)) as f64 / (r * r) * s.integrate(y.norm_sq().data());
        prop_assert!((lhs - rhs).abs() < 1e-10 * rhs);
    }

    #[test]
    fn star_is_an_isometry(seed in 0u64..1000) {
        let s = SphereGrid::new(6, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut d = vec![0.0; 2 * s.n_nodes()];
        d.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        let f = HorizontalField::from_data(Rank::OneForm, &s, d).unwrap();
        let st = f.star();
        prop_assert!((&st.norm_sq() - &f.norm_sq()).max_abs() < 1e-14);
        prop_assert!((&st.star() + &f).max_abs() < 1e-15);
    }
}
