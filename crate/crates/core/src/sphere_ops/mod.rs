//! Round-sphere geometry and the intrinsic differential and Hodge operators
//! acting on horizontal fields.
//!
//! Derivatives go through spin-weighted harmonics. With the complex
//! combinations F_c = F1 + i F2 (spin 1) and A_c = A11 + i A12 (spin 2):
//!
//! * grad f          -> -edth f / r
//! * div F + i curl F -> -edth_bar F_c / r
//! * div A           -> -edth_bar A_c / r
//! * grad (x^) F     -> -edth F_c / r
//! * rough Laplacian -> (edth edth_bar + edth_bar edth) / (2 r^2)

pub mod field;
pub mod grid;

use num_complex::Complex64;
use thiserror::Error;

pub use field::{HorizontalField, Rank};
pub use grid::{gauss_legendre, lm_index, swsh_lambda, AngularGrid, SphereGrid, SpinCoeffs};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SphereError {
    #[error("band limit {0} is below 2")]
    BandLimitTooLow(usize),
    #[error("sphere radius must be positive and finite, got {0}")]
    BadRadius(f64),
    #[error("spin weight {0} outside the tabulated range")]
    SpinOutOfRange(i32),
    #[error("expected a {expected:?} field, got {got:?}")]
    Rank { expected: Rank, got: Rank },
    #[error("data length {got} does not match grid ({expected})")]
    Length { expected: usize, got: usize },
    #[error("unsupported norm exponent {0}")]
    NormExponent(f64),
}

type Result<T> = std::result::Result<T, SphereError>;

fn coeffs(f: &HorizontalField) -> Result<SpinCoeffs> {
    let s = f.rank.spin().ok_or(SphereError::Rank { expected: Rank::Sym2Traceless, got: f.rank })?;
    f.sphere.angular.analyze(s, &f.to_complex())
}

fn synth(c: &SpinCoeffs, f: &HorizontalField) -> Result<Vec<Complex64>> {
    f.sphere.angular.synthesize(c)
}

/// Spectral coefficients of a field's complex combination.
pub fn spectral_coeffs(f: &HorizontalField) -> Result<SpinCoeffs> {
    coeffs(f)
}

/// Field of the given rank from spin coefficients.
pub fn from_coeffs(rank: Rank, sphere: &SphereGrid, c: &SpinCoeffs) -> Result<HorizontalField> {
    let vals = sphere.angular.synthesize(c)?;
    Ok(HorizontalField::from_complex(rank, sphere, &vals))
}

/// Band-limit projection (analysis followed by synthesis).
pub fn project(f: &HorizontalField) -> Result<HorizontalField> {
    if f.rank == Rank::Sym2 {
        let tr = project(&f.trace())?;
        let tl = project(&f.traceless_part())?;
        return Ok(tl.with_trace(&tr));
    }
    let c = coeffs(f)?;
    Ok(HorizontalField::from_complex(f.rank, &f.sphere, &synth(&c, f)?))
}

/// Gradient of a scalar.
pub fn grad(f: &HorizontalField) -> Result<HorizontalField> {
    f.expect(Rank::Scalar)?;
    let l = f.sphere.l_max();
    let c = coeffs(f)?.edth(l).scale(-1.0 / f.sphere.radius);
    Ok(HorizontalField::from_complex(Rank::OneForm, &f.sphere, &synth(&c, f)?))
}

/// Rotated gradient *grad f, (*grad f)_a = eps_ab grad_b f.
pub fn star_grad(f: &HorizontalField) -> Result<HorizontalField> {
    Ok(grad(f)?.star())
}

/// (div F, curl F) of a one-form.
pub fn div_curl(f: &HorizontalField) -> Result<(HorizontalField, HorizontalField)> {
    f.expect(Rank::OneForm)?;
    let l = f.sphere.l_max();
    let c = coeffs(f)?.edth_bar(l).scale(-1.0 / f.sphere.radius);
    let v = synth(&c, f)?;
    let div = v.iter().map(|z| z.re).collect();
    let curl = v.iter().map(|z| z.im).collect();
    Ok((
        HorizontalField::from_data(Rank::Scalar, &f.sphere, div)?,
        HorizontalField::from_data(Rank::Scalar, &f.sphere, curl)?,
    ))
}

/// Divergence: scalar for a one-form, one-form for a symmetric 2-tensor.
pub fn div(f: &HorizontalField) -> Result<HorizontalField> {
    match f.rank {
        Rank::OneForm => Ok(div_curl(f)?.0),
        Rank::Sym2Traceless => {
            let l = f.sphere.l_max();
            let c = coeffs(f)?.edth_bar(l).scale(-1.0 / f.sphere.radius);
            Ok(HorizontalField::from_complex(Rank::OneForm, &f.sphere, &synth(&c, f)?))
        }
        Rank::Sym2 => {
            let tl = div(&f.traceless_part())?;
            let g = grad(&f.trace())?;
            Ok(&tl + &g.scale(0.5))
        }
        Rank::Scalar => Err(SphereError::Rank { expected: Rank::OneForm, got: Rank::Scalar }),
    }
}

/// Curl of a one-form, eps^ab grad_a F_b.
pub fn curl(f: &HorizontalField) -> Result<HorizontalField> {
    Ok(div_curl(f)?.1)
}

/// Symmetrized traceless gradient grad_a F_b + grad_b F_a - delta_ab div F.
pub fn hat_grad(f: &HorizontalField) -> Result<HorizontalField> {
    f.expect(Rank::OneForm)?;
    let l = f.sphere.l_max();
    let c = coeffs(f)?.edth(l).scale(-1.0 / f.sphere.radius);
    Ok(HorizontalField::from_complex(Rank::Sym2Traceless, &f.sphere, &synth(&c, f)?))
}

/// D1 F = (div F, curl F).
pub fn hodge_d1(f: &HorizontalField) -> Result<(HorizontalField, HorizontalField)> {
    div_curl(f)
}

/// *D1 (f1, f2) = -grad f1 + *grad f2.
pub fn hodge_d1_star(f1: &HorizontalField, f2: &HorizontalField) -> Result<HorizontalField> {
    f1.expect(Rank::Scalar)?;
    f2.expect(Rank::Scalar)?;
    Ok(&star_grad(f2)? - &grad(f1)?)
}

/// D2 A = div A for a traceless symmetric A.
pub fn hodge_d2(f: &HorizontalField) -> Result<HorizontalField> {
    f.expect(Rank::Sym2Traceless)?;
    div(f)
}

/// *D2 F = -1/2 (grad_a F_b + grad_b F_a - delta_ab div F).
pub fn hodge_d2_star(f: &HorizontalField) -> Result<HorizontalField> {
    Ok(hat_grad(f)?.scale(-0.5))
}

/// Rough (connection) Laplacian, same rank as the input.
pub fn laplacian(f: &HorizontalField) -> Result<HorizontalField> {
    if f.rank == Rank::Sym2 {
        let tr = laplacian(&f.trace())?;
        let tl = laplacian(&f.traceless_part())?;
        return Ok(tl.with_trace(&tr));
    }
    let l = f.sphere.l_max();
    let s = f.rank.spin().unwrap_or(0) as f64;
    let r2 = f.sphere.radius * f.sphere.radius;
    let mut c = coeffs(f)?;
    for ll in 0..=l {
        let lf = ll as f64;
        let ev = if (ll as f64) < s.abs() { 0.0 } else { -(lf * (lf + 1.0) - s * s) / r2 };
        for m in -(ll as i64)..=(ll as i64) {
            c.data[lm_index(ll, m)] *= ev;
        }
    }
    Ok(HorizontalField::from_complex(f.rank, &f.sphere, &synth(&c, f)?))
}

/// Pointwise |grad^k F|^2 (full tensor norm of the k-th covariant derivative).
pub fn grad_power_norm_sq(f: &HorizontalField, k: usize) -> Result<HorizontalField> {
    let n = f.n_nodes();
    let l = f.sphere.l_max();
    let factor = f.rank.complex_norm_factor();
    if f.rank == Rank::Sym2 {
        let a = grad_power_norm_sq(&f.trace(), k)?;
        let b = grad_power_norm_sq(&f.traceless_part(), k)?;
        return Ok(&a.scale(0.5) + &b);
    }
    let mut words = vec![coeffs(f)?];
    for _ in 0..k {
        let mut next = Vec::with_capacity(2 * words.len());
        for w in &words {
            next.push(w.edth(l));
            next.push(w.edth_bar(l));
        }
        words = next;
    }
    let mut acc = vec![0.0; n];
    for w in &words {
        let v = f.sphere.angular.synthesize(w)?;
        for (a, z) in acc.iter_mut().zip(&v) {
            *a += z.norm_sqr();
        }
    }
    let scale = factor * 0.5f64.powi(k as i32) / f.sphere.radius.powi(2 * k as i32);
    acc.iter_mut().for_each(|a| *a *= scale);
    HorizontalField::from_data(Rank::Scalar, &f.sphere, acc)
}

/// Covariant derivative of a one-form Y along the vector X, (grad_X Y)_b.
pub fn covariant_along(x: &HorizontalField, y: &HorizontalField) -> Result<HorizontalField> {
    x.expect(Rank::OneForm)?;
    let (d, c) = div_curl(y)?;
    let s = hat_grad(y)?;
    let mut out = x.mul_scalar(&d).scale(0.5);
    out.add_scaled(&x.star().mul_scalar(&c), -0.5);
    out.add_scaled(&s.contract(x), 0.5);
    Ok(out)
}

/// Lie bracket [X, Y] of two vector fields (identified with one-forms).
pub fn lie_bracket(x: &HorizontalField, y: &HorizontalField) -> Result<HorizontalField> {
    Ok(&covariant_along(x, y)? - &covariant_along(y, x)?)
}

/// Quadrature L^p norm of the pointwise tensor magnitude; p = infinity gives
/// the maximum over nodes.
pub fn lp_norm(f: &HorizontalField, p: f64) -> Result<f64> {
    let mag = f.magnitude();
    if p.is_infinite() {
        return Ok(mag.iter().fold(0.0, |m, v| m.max(*v)));
    }
    if !(p >= 1.0) {
        return Err(SphereError::NormExponent(p));
    }
    let vals: Vec<f64> = mag.iter().map(|v| v.powf(p)).collect();
    Ok(f.sphere.integrate(&vals).max(0.0).powf(1.0 / p))
}

/// Real scalar spherical-harmonic-like basis function: the real or imaginary
/// part of the unit-normalized Y_lm scaled to unit L^2 norm on the unit sphere.
pub fn real_harmonic(sphere: &SphereGrid, l: usize, m: i64) -> HorizontalField {
    let ang = &sphere.angular;
    let n = ang.n_nodes();
    let mut d = vec![0.0; n];
    for i in 0..n {
        let (j, k) = (i / ang.n_phi, i % ang.n_phi);
        let lam = swsh_lambda(0, l, m.abs(), ang.theta[j]);
        let ph = m.abs() as f64 * ang.phi[k];
        d[i] = if m == 0 {
            lam
        } else if m > 0 {
            std::f64::consts::SQRT_2 * lam * ph.cos()
        } else {
            std::f64::consts::SQRT_2 * lam * ph.sin()
        };
    }
    HorizontalField::from_data(Rank::Scalar, sphere, d).expect("grid-sized data")
}
