//! Gauss-Legendre x uniform-longitude grid and spin-weighted harmonic transforms.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;

use super::SphereError;

/// Largest spin weight for which harmonic tables are built. Spin-2 fields
/// need a few extra raisings for high-order angular derivative norms.
pub const MAX_SPIN: i32 = 8;

/// Angular part of the grid, shared by every sphere of a slab.
#[derive(Debug)]
pub struct AngularGrid {
    pub l_max: usize,
    pub n_theta: usize,
    pub n_phi: usize,
    pub theta: Vec<f64>,
    pub cos_theta: Vec<f64>,
    pub sin_theta: Vec<f64>,
    pub phi: Vec<f64>,
    /// Gauss-Legendre weights in cos(theta); they sum to 2.
    pub gl_weights: Vec<f64>,
    /// Unit-sphere solid-angle weight per node; they sum to 4 pi.
    pub solid_weights: Vec<f64>,
    // lambda[spin_index][ring][lm] with sYlm(theta, phi) = lambda * exp(i m phi)
    lambda: Vec<Vec<Vec<f64>>>,
    // exp(i m phi_k), stored [k][m + l_max]
    phase: Vec<Vec<Complex64>>,
}

/// A round sphere of radius `radius` sampled on a shared angular grid.
#[derive(Debug, Clone)]
pub struct SphereGrid {
    pub angular: Arc<AngularGrid>,
    pub radius: f64,
}

/// Spectral coefficients of a spin-weighted function, indexed by `lm_index`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinCoeffs {
    pub spin: i32,
    pub data: Vec<Complex64>,
}

#[inline]
pub fn lm_index(l: usize, m: i64) -> usize {
    (l * l) as usize + (l as i64 + m) as usize
}

fn factorial(n: i64) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

fn binomial(n: i64, k: i64) -> f64 {
    if k < 0 || k > n || n < 0 {
        return 0.0;
    }
    factorial(n) / (factorial(k) * factorial(n - k))
}

/// Real polar factor of the spin-weighted harmonic sYlm, Goldberg et al. form,
/// with the convention edth sYlm = +sqrt((l-s)(l+s+1)) s+1Ylm.
pub fn swsh_lambda(s: i32, l: usize, m: i64, theta: f64) -> f64 {
    let (s, l) = (s as i64, l as i64);
    if l < s.abs() || m.abs() > l {
        return 0.0;
    }
    let pref = (factorial(l + m) * factorial(l - m) * (2 * l + 1) as f64
        / (4.0 * PI * factorial(l + s) * factorial(l - s)))
        .sqrt();
    let sign_m = if m.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    let (sh, ch) = ((0.5 * theta).sin(), (0.5 * theta).cos());
    let mut sum = 0.0;
    for r in 0..=(l - s) {
        let j = r + s - m;
        if j < 0 || j > l + s {
            continue;
        }
        let k = 2 * r + s - m;
        let sign = if (l - r - s).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        sum += sign
            * binomial(l - s, r)
            * binomial(l + s, j)
            * sh.powi((2 * l - k) as i32)
            * ch.powi(k as i32);
    }
    sign_m * pref * sum
}

/// Gauss-Legendre nodes and weights on [-1, 1], ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { z } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pnm1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[n - 1 - i] = z;
        w[n - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

impl AngularGrid {
    /// Grid resolving band limit `l_max`: (l_max + 2) latitude rings and
    /// (2 l_max + 4) longitudes, no nodes on the poles.
    pub fn new(l_max: usize) -> Result<Self, SphereError> {
        if l_max < 2 {
            return Err(SphereError::BandLimitTooLow(l_max));
        }
        let n_theta = l_max + 2;
        let n_phi = 2 * l_max + 4;
        let (x, gl_weights) = gauss_legendre(n_theta);
        // theta ascending from north pole: cos(theta) descending
        let cos_theta: Vec<f64> = x.iter().rev().copied().collect();
        let gl_weights: Vec<f64> = gl_weights.iter().rev().copied().collect();
        let theta: Vec<f64> = cos_theta.iter().map(|c| c.acos()).collect();
        let sin_theta: Vec<f64> = theta.iter().map(|t| t.sin()).collect();
        let phi: Vec<f64> = (0..n_phi).map(|k| 2.0 * PI * k as f64 / n_phi as f64).collect();
        let dphi = 2.0 * PI / n_phi as f64;
        let mut solid_weights = Vec::with_capacity(n_theta * n_phi);
        for w in &gl_weights {
            for _ in 0..n_phi {
                solid_weights.push(w * dphi);
            }
        }
        let nlm = (l_max + 1) * (l_max + 1);
        let mut lambda = Vec::new();
        for s in -MAX_SPIN..=MAX_SPIN {
            let mut rings = Vec::with_capacity(n_theta);
            for &t in &theta {
                let mut row = vec![0.0; nlm];
                for l in 0..=l_max {
                    for m in -(l as i64)..=(l as i64) {
                        row[lm_index(l, m)] = swsh_lambda(s, l, m, t);
                    }
                }
                rings.push(row);
            }
            lambda.push(rings);
        }
        let phase = phi
            .iter()
            .map(|&p| {
                (-(l_max as i64)..=(l_max as i64))
                    .map(|m| Complex64::from_polar(1.0, m as f64 * p))
                    .collect()
            })
            .collect();
        Ok(AngularGrid {
            l_max,
            n_theta,
            n_phi,
            theta,
            cos_theta,
            sin_theta,
            phi,
            gl_weights,
            solid_weights,
            lambda,
            phase,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_theta * self.n_phi
    }

    pub fn n_coeffs(&self) -> usize {
        (self.l_max + 1) * (self.l_max + 1)
    }

    /// Unit position vector of node `i` in the ambient R^3.
    pub fn unit_position(&self, i: usize) -> [f64; 3] {
        let (j, k) = (i / self.n_phi, i % self.n_phi);
        let (st, ct) = (self.sin_theta[j], self.cos_theta[j]);
        [st * self.phi[k].cos(), st * self.phi[k].sin(), ct]
    }

    /// Ambient components of the dyad (e_theta, e_phi) at node `i`.
    pub fn dyad(&self, i: usize) -> ([f64; 3], [f64; 3]) {
        let (j, k) = (i / self.n_phi, i % self.n_phi);
        let (st, ct) = (self.sin_theta[j], self.cos_theta[j]);
        let (sp, cp) = (self.phi[k].sin(), self.phi[k].cos());
        ([ct * cp, ct * sp, -st], [-sp, cp, 0.0])
    }

    fn spin_tables(&self, s: i32) -> Result<&Vec<Vec<f64>>, SphereError> {
        if s.abs() > MAX_SPIN {
            return Err(SphereError::SpinOutOfRange(s));
        }
        Ok(&self.lambda[(s + MAX_SPIN) as usize])
    }

    /// Quadrature projection of node values onto sYlm, l <= l_max.
    pub fn analyze(&self, s: i32, values: &[Complex64]) -> Result<SpinCoeffs, SphereError> {
        let lam = self.spin_tables(s)?;
        let lm = self.l_max as i64;
        let dphi = 2.0 * PI / self.n_phi as f64;
        let mut data = vec![Complex64::new(0.0, 0.0); self.n_coeffs()];
        let mut g = vec![Complex64::new(0.0, 0.0); (2 * self.l_max + 1) as usize];
        for j in 0..self.n_theta {
            g.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
            let row = &values[j * self.n_phi..(j + 1) * self.n_phi];
            for (k, v) in row.iter().enumerate() {
                let ph = &self.phase[k];
                for (mi, gm) in g.iter_mut().enumerate() {
                    *gm += v * ph[mi].conj();
                }
            }
            let wj = self.gl_weights[j] * dphi;
            let lam_j = &lam[j];
            for l in 0..=self.l_max {
                if (l as i32) < s.abs() {
                    continue;
                }
                for m in -(l as i64)..=(l as i64) {
                    let idx = lm_index(l, m);
                    data[idx] += g[(m + lm) as usize] * (wj * lam_j[idx]);
                }
            }
        }
        Ok(SpinCoeffs { spin: s, data })
    }

    /// Evaluate a spin-weighted expansion at the nodes.
    pub fn synthesize(&self, coeffs: &SpinCoeffs) -> Result<Vec<Complex64>, SphereError> {
        let lam = self.spin_tables(coeffs.spin)?;
        let lm = self.l_max as i64;
        let mut out = vec![Complex64::new(0.0, 0.0); self.n_nodes()];
        let mut h = vec![Complex64::new(0.0, 0.0); (2 * self.l_max + 1) as usize];
        for j in 0..self.n_theta {
            h.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
            let lam_j = &lam[j];
            for l in 0..=self.l_max {
                if (l as i32) < coeffs.spin.abs() {
                    continue;
                }
                for m in -(l as i64)..=(l as i64) {
                    let idx = lm_index(l, m);
                    h[(m + lm) as usize] += coeffs.data[idx] * lam_j[idx];
                }
            }
            for k in 0..self.n_phi {
                let ph = &self.phase[k];
                let mut acc = Complex64::new(0.0, 0.0);
                for (mi, hm) in h.iter().enumerate() {
                    acc += hm * ph[mi];
                }
                out[j * self.n_phi + k] = acc;
            }
        }
        Ok(out)
    }
}

impl SpinCoeffs {
    /// Spin raising operator on the unit sphere.
    pub fn edth(&self, l_max: usize) -> SpinCoeffs {
        let s = self.spin as f64;
        let mut data = self.data.clone();
        for l in 0..=l_max {
            let lf = l as f64;
            let f = ((lf - s) * (lf + s + 1.0)).max(0.0).sqrt();
            for m in -(l as i64)..=(l as i64) {
                data[lm_index(l, m)] *= f;
            }
        }
        SpinCoeffs { spin: self.spin + 1, data }
    }

    /// Spin lowering operator on the unit sphere.
    pub fn edth_bar(&self, l_max: usize) -> SpinCoeffs {
        let s = self.spin as f64;
        let mut data = self.data.clone();
        for l in 0..=l_max {
            let lf = l as f64;
            let f = -((lf + s) * (lf - s + 1.0)).max(0.0).sqrt();
            for m in -(l as i64)..=(l as i64) {
                data[lm_index(l, m)] *= f;
            }
        }
        SpinCoeffs { spin: self.spin - 1, data }
    }

    pub fn scale(mut self, f: f64) -> SpinCoeffs {
        self.data.iter_mut().for_each(|c| *c *= f);
        self
    }
}

impl SphereGrid {
    pub fn new(l_max: usize, radius: f64) -> Result<Self, SphereError> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(SphereError::BadRadius(radius));
        }
        Ok(SphereGrid { angular: Arc::new(AngularGrid::new(l_max)?), radius })
    }

    /// Same angular grid at a different radius.
    pub fn with_radius(&self, radius: f64) -> Result<Self, SphereError> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(SphereError::BadRadius(radius));
        }
        Ok(SphereGrid { angular: Arc::clone(&self.angular), radius })
    }

    pub fn l_max(&self) -> usize {
        self.angular.l_max
    }

    pub fn n_nodes(&self) -> usize {
        self.angular.n_nodes()
    }

    /// Area element weight of each node (sums to 4 pi r^2).
    pub fn area_weights(&self) -> Vec<f64> {
        let r2 = self.radius * self.radius;
        self.angular.solid_weights.iter().map(|w| w * r2).collect()
    }

    pub fn area(&self) -> f64 {
        4.0 * PI * self.radius * self.radius
    }

    /// Integral of node values against the area element.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        let r2 = self.radius * self.radius;
        values
            .iter()
            .zip(&self.angular.solid_weights)
            .map(|(v, w)| v * w)
            .sum::<f64>()
            * r2
    }

    /// Area mean of node values.
    pub fn mean(&self, values: &[f64]) -> f64 {
        values
            .iter()
            .zip(&self.angular.solid_weights)
            .map(|(v, w)| v * w)
            .sum::<f64>()
            / (4.0 * PI)
    }

    pub fn same_angular(&self, other: &SphereGrid) -> bool {
        Arc::ptr_eq(&self.angular, &other.angular)
            || (self.angular.l_max == other.angular.l_max)
    }
}
