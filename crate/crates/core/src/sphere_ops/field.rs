//! Horizontal tensor fields sampled on a sphere, with pointwise algebra.
//!
//! Components are taken in the orthonormal coordinate dyad
//! (e1, e2) = (e_theta, e_phi), with eps_12 = +1.

use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::grid::SphereGrid;
use super::SphereError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rank {
    Scalar,
    OneForm,
    /// Stored as (A11, A12) with A22 = -A11.
    Sym2Traceless,
    /// Stored as (A11, A12, A22).
    Sym2,
}

impl Rank {
    pub fn n_comp(self) -> usize {
        match self {
            Rank::Scalar => 1,
            Rank::OneForm | Rank::Sym2Traceless => 2,
            Rank::Sym2 => 3,
        }
    }

    /// Spin weight of the complex combination used by the spectral operators.
    pub fn spin(self) -> Option<i32> {
        match self {
            Rank::Scalar => Some(0),
            Rank::OneForm => Some(1),
            Rank::Sym2Traceless => Some(2),
            Rank::Sym2 => None,
        }
    }

    /// |T|^2 / |T_c|^2 for the complex combination T_c.
    pub fn complex_norm_factor(self) -> f64 {
        match self {
            Rank::Sym2Traceless => 2.0,
            _ => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Rank::Scalar => "scalar",
            Rank::OneForm => "one_form",
            Rank::Sym2Traceless => "sym2_traceless",
            Rank::Sym2 => "sym2_general",
        }
    }
}

#[derive(Debug, Clone)]
pub struct HorizontalField {
    pub rank: Rank,
    pub sphere: SphereGrid,
    data: Vec<f64>,
}

impl HorizontalField {
    pub fn zeros(rank: Rank, sphere: &SphereGrid) -> Self {
        let n = sphere.n_nodes() * rank.n_comp();
        HorizontalField { rank, sphere: sphere.clone(), data: vec![0.0; n] }
    }

    pub fn from_data(rank: Rank, sphere: &SphereGrid, data: Vec<f64>) -> Result<Self, SphereError> {
        let n = sphere.n_nodes() * rank.n_comp();
        if data.len() != n {
            return Err(SphereError::Length { expected: n, got: data.len() });
        }
        Ok(HorizontalField { rank, sphere: sphere.clone(), data })
    }

    pub fn constant_scalar(c: f64, sphere: &SphereGrid) -> Self {
        HorizontalField {
            rank: Rank::Scalar,
            sphere: sphere.clone(),
            data: vec![c; sphere.n_nodes()],
        }
    }

    /// Scalar field from a function of the node's unit position.
    pub fn scalar_from_fn(sphere: &SphereGrid, f: impl Fn([f64; 3]) -> f64) -> Self {
        let ang = &sphere.angular;
        let data = (0..ang.n_nodes()).map(|i| f(ang.unit_position(i))).collect();
        HorizontalField { rank: Rank::Scalar, sphere: sphere.clone(), data }
    }

    /// One-form from an ambient tangent vector field (projected onto the dyad).
    pub fn one_form_from_ambient(sphere: &SphereGrid, v: impl Fn([f64; 3]) -> [f64; 3]) -> Self {
        let ang = &sphere.angular;
        let n = ang.n_nodes();
        let mut data = vec![0.0; 2 * n];
        for i in 0..n {
            let w = v(ang.unit_position(i));
            let (e1, e2) = ang.dyad(i);
            data[i] = dot3(w, e1);
            data[n + i] = dot3(w, e2);
        }
        HorizontalField { rank: Rank::OneForm, sphere: sphere.clone(), data }
    }

    /// Ambient R^3 components of a one-form at every node.
    pub fn to_ambient(&self) -> Result<Vec<[f64; 3]>, SphereError> {
        self.expect(Rank::OneForm)?;
        let ang = &self.sphere.angular;
        let n = self.n_nodes();
        Ok((0..n)
            .map(|i| {
                let (e1, e2) = ang.dyad(i);
                let (a, b) = (self.data[i], self.data[n + i]);
                [a * e1[0] + b * e2[0], a * e1[1] + b * e2[1], a * e1[2] + b * e2[2]]
            })
            .collect())
    }

    pub fn n_nodes(&self) -> usize {
        self.sphere.n_nodes()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn comp(&self, c: usize) -> &[f64] {
        let n = self.n_nodes();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn comp_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.n_nodes();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn expect(&self, rank: Rank) -> Result<(), SphereError> {
        if self.rank == rank {
            Ok(())
        } else {
            Err(SphereError::Rank { expected: rank, got: self.rank })
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Same field on a sphere of another radius (components unchanged).
    pub fn on_sphere(&self, sphere: &SphereGrid) -> Self {
        HorizontalField { rank: self.rank, sphere: sphere.clone(), data: self.data.clone() }
    }

    /// Complex spin-weighted combination T_c (F1 + i F2, or A11 + i A12).
    pub fn to_complex(&self) -> Vec<Complex64> {
        let n = self.n_nodes();
        match self.rank {
            Rank::Scalar => self.data.iter().map(|v| Complex64::new(*v, 0.0)).collect(),
            Rank::OneForm | Rank::Sym2Traceless => {
                (0..n).map(|i| Complex64::new(self.data[i], self.data[n + i])).collect()
            }
            Rank::Sym2 => (0..n).map(|i| Complex64::new(self.data[i], self.data[n + i])).collect(),
        }
    }

    pub fn from_complex(rank: Rank, sphere: &SphereGrid, values: &[Complex64]) -> Self {
        let n = sphere.n_nodes();
        let data = match rank {
            Rank::Scalar => values.iter().map(|c| c.re).collect(),
            Rank::OneForm | Rank::Sym2Traceless => {
                let mut d = vec![0.0; 2 * n];
                for (i, c) in values.iter().enumerate() {
                    d[i] = c.re;
                    d[n + i] = c.im;
                }
                d
            }
            Rank::Sym2 => {
                let mut d = vec![0.0; 3 * n];
                for (i, c) in values.iter().enumerate() {
                    d[i] = c.re;
                    d[n + i] = c.im;
                    d[2 * n + i] = -c.re;
                }
                d
            }
        };
        HorizontalField { rank, sphere: sphere.clone(), data }
    }

    fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.rank, other.rank, "rank mismatch in pointwise operation");
        let data = self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect();
        HorizontalField { rank: self.rank, sphere: self.sphere.clone(), data }
    }

    pub fn scale(&self, f: f64) -> Self {
        HorizontalField {
            rank: self.rank,
            sphere: self.sphere.clone(),
            data: self.data.iter().map(|v| v * f).collect(),
        }
    }

    pub fn add_scaled(&mut self, other: &Self, f: f64) {
        assert_eq!(self.rank, other.rank, "rank mismatch in add_scaled");
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += f * b);
    }

    /// Multiply every component by a scalar field.
    pub fn mul_scalar(&self, s: &HorizontalField) -> Self {
        assert_eq!(s.rank, Rank::Scalar, "mul_scalar needs a scalar factor");
        let n = self.n_nodes();
        let data = self
            .data
            .iter()
            .enumerate()
            .map(|(k, v)| v * s.data[k % n])
            .collect();
        HorizontalField { rank: self.rank, sphere: self.sphere.clone(), data }
    }

    /// Pointwise map of a scalar field.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        HorizontalField {
            rank: self.rank,
            sphere: self.sphere.clone(),
            data: self.data.iter().map(|v| f(*v)).collect(),
        }
    }

    /// Full contraction of two fields of equal rank (scalar result).
    pub fn dot(&self, other: &Self) -> Self {
        assert_eq!(self.rank, other.rank, "rank mismatch in dot");
        let n = self.n_nodes();
        let mut out = vec![0.0; n];
        for i in 0..n {
            out[i] = match self.rank {
                Rank::Scalar => self.data[i] * other.data[i],
                Rank::OneForm => {
                    self.data[i] * other.data[i] + self.data[n + i] * other.data[n + i]
                }
                Rank::Sym2Traceless => {
                    2.0 * (self.data[i] * other.data[i] + self.data[n + i] * other.data[n + i])
                }
                Rank::Sym2 => {
                    self.data[i] * other.data[i]
                        + 2.0 * self.data[n + i] * other.data[n + i]
                        + self.data[2 * n + i] * other.data[2 * n + i]
                }
            };
        }
        HorizontalField { rank: Rank::Scalar, sphere: self.sphere.clone(), data: out }
    }

    pub fn norm_sq(&self) -> Self {
        self.dot(self)
    }

    /// Pointwise tensor magnitude.
    pub fn magnitude(&self) -> Vec<f64> {
        self.norm_sq().data.iter().map(|v| v.max(0.0).sqrt()).collect()
    }

    /// Left Hodge dual: (*F)_a = eps_ab F_b; (*A)_ab = eps_ac A_cb.
    pub fn star(&self) -> Self {
        let n = self.n_nodes();
        match self.rank {
            Rank::OneForm | Rank::Sym2Traceless => {
                let mut d = vec![0.0; 2 * n];
                for i in 0..n {
                    d[i] = self.data[n + i];
                    d[n + i] = -self.data[i];
                }
                HorizontalField { rank: self.rank, sphere: self.sphere.clone(), data: d }
            }
            _ => panic!("Hodge dual of a {} field", self.rank.name()),
        }
    }

    /// Contraction of a symmetric 2-tensor with a one-form: (A.V)_b = V_a A_ab.
    pub fn contract(&self, v: &HorizontalField) -> Self {
        assert_eq!(v.rank, Rank::OneForm, "contract needs a one-form");
        let n = self.n_nodes();
        let (a11, a12, a22): (&[f64], &[f64], Vec<f64>) = match self.rank {
            Rank::Sym2Traceless => {
                (self.comp(0), self.comp(1), self.comp(0).iter().map(|x| -x).collect())
            }
            Rank::Sym2 => (self.comp(0), self.comp(1), self.comp(2).to_vec()),
            _ => panic!("contract needs a symmetric 2-tensor"),
        };
        let mut d = vec![0.0; 2 * n];
        for i in 0..n {
            let (v1, v2) = (v.data[i], v.data[n + i]);
            d[i] = v1 * a11[i] + v2 * a12[i];
            d[n + i] = v1 * a12[i] + v2 * a22[i];
        }
        HorizontalField { rank: Rank::OneForm, sphere: self.sphere.clone(), data: d }
    }

    /// Symmetric traceless product F (x^) G = F_a G_b + F_b G_a - delta_ab F.G.
    pub fn hat_product(&self, other: &Self) -> Self {
        assert!(self.rank == Rank::OneForm && other.rank == Rank::OneForm);
        let n = self.n_nodes();
        let mut d = vec![0.0; 2 * n];
        for i in 0..n {
            let (f1, f2) = (self.data[i], self.data[n + i]);
            let (g1, g2) = (other.data[i], other.data[n + i]);
            d[i] = f1 * g1 - f2 * g2;
            d[n + i] = f1 * g2 + f2 * g1;
        }
        HorizontalField { rank: Rank::Sym2Traceless, sphere: self.sphere.clone(), data: d }
    }

    /// A ^ B = eps_ab A_ac B_cb for traceless symmetric A, B.
    pub fn wedge(&self, other: &Self) -> Self {
        assert!(self.rank == Rank::Sym2Traceless && other.rank == Rank::Sym2Traceless);
        let n = self.n_nodes();
        let d = (0..n)
            .map(|i| 2.0 * (self.data[i] * other.data[n + i] - self.data[n + i] * other.data[i]))
            .collect();
        HorizontalField { rank: Rank::Scalar, sphere: self.sphere.clone(), data: d }
    }

    /// Traceless part of a general symmetric 2-tensor.
    pub fn traceless_part(&self) -> Self {
        match self.rank {
            Rank::Sym2Traceless => self.clone(),
            Rank::Sym2 => {
                let n = self.n_nodes();
                let mut d = vec![0.0; 2 * n];
                for i in 0..n {
                    d[i] = 0.5 * (self.data[i] - self.data[2 * n + i]);
                    d[n + i] = self.data[n + i];
                }
                HorizontalField { rank: Rank::Sym2Traceless, sphere: self.sphere.clone(), data: d }
            }
            _ => panic!("traceless part of a {} field", self.rank.name()),
        }
    }

    /// Trace of a symmetric 2-tensor.
    pub fn trace(&self) -> Self {
        let n = self.n_nodes();
        let d = match self.rank {
            Rank::Sym2Traceless => vec![0.0; n],
            Rank::Sym2 => (0..n).map(|i| self.data[i] + self.data[2 * n + i]).collect(),
            _ => panic!("trace of a {} field", self.rank.name()),
        };
        HorizontalField { rank: Rank::Scalar, sphere: self.sphere.clone(), data: d }
    }

    /// General symmetric tensor A + (s/2) delta from a traceless A and a trace s.
    pub fn with_trace(&self, tr: &HorizontalField) -> Self {
        assert_eq!(self.rank, Rank::Sym2Traceless);
        let n = self.n_nodes();
        let mut d = vec![0.0; 3 * n];
        for i in 0..n {
            d[i] = self.data[i] + 0.5 * tr.data[i];
            d[n + i] = self.data[n + i];
            d[2 * n + i] = -self.data[i] + 0.5 * tr.data[i];
        }
        HorizontalField { rank: Rank::Sym2, sphere: self.sphere.clone(), data: d }
    }
}

impl Add for &HorizontalField {
    type Output = HorizontalField;
    fn add(self, rhs: &HorizontalField) -> HorizontalField {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl Sub for &HorizontalField {
    type Output = HorizontalField;
    fn sub(self, rhs: &HorizontalField) -> HorizontalField {
        self.zip_map(rhs, |a, b| a - b)
    }
}

impl Mul<f64> for &HorizontalField {
    type Output = HorizontalField;
    fn mul(self, rhs: f64) -> HorizontalField {
        self.scale(rhs)
    }
}

impl Neg for &HorizontalField {
    type Output = HorizontalField;
    fn neg(self) -> HorizontalField {
        self.scale(-1.0)
    }
}

pub(crate) fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}
