//! Energy machinery: Maxwell stress tensor, Bel-Robinson tensor, deformation
//! tensors of the null multipliers and hypersurface fluxes.
//!
//! Everything goes through one 4-frame contraction engine. Frame index order
//! is (e1, e2, e3, e4) -> (0, 1, 2, 3) with g_ab = delta_ab, g_34 = -2 and
//! eps_1234 = 2.

use std::sync::OnceLock;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::null_state::{FieldSnapshot, MaxwellComponents, Slab, WeylComponents};
use crate::sphere_ops::{self, HorizontalField, Rank, SphereError, SphereGrid};

pub type T2 = [[f64; 4]; 4];
pub type T4 = [f64; 256];

pub const E3: usize = 2;
pub const E4: usize = 3;

#[inline]
pub fn ix(a: usize, b: usize, c: usize, d: usize) -> usize {
    ((a * 4 + b) * 4 + c) * 4 + d
}

pub fn metric() -> T2 {
    let mut g = [[0.0; 4]; 4];
    g[0][0] = 1.0;
    g[1][1] = 1.0;
    g[E3][E4] = -2.0;
    g[E4][E3] = -2.0;
    g
}

pub fn inverse_metric() -> T2 {
    let mut g = [[0.0; 4]; 4];
    g[0][0] = 1.0;
    g[1][1] = 1.0;
    g[E3][E4] = -0.5;
    g[E4][E3] = -0.5;
    g
}

fn perm_sign(p: [usize; 4]) -> f64 {
    let mut s = 1.0;
    for i in 0..4 {
        for j in i + 1..4 {
            if p[i] == p[j] {
                return 0.0;
            }
            if p[i] > p[j] {
                s = -s;
            }
        }
    }
    s
}

/// Volume form with lowered indices.
pub fn volume_form() -> &'static T4 {
    static EPS: OnceLock<T4> = OnceLock::new();
    EPS.get_or_init(|| {
        let mut e = [0.0; 256];
        for a in 0..4 {
            for b in 0..4 {
                for c in 0..4 {
                    for d in 0..4 {
                        e[ix(a, b, c, d)] = 2.0 * perm_sign([a, b, c, d]);
                    }
                }
            }
        }
        e
    })
}

/// Raise both indices of a 2-tensor.
pub fn raise2(f: &T2) -> T2 {
    let gi = inverse_metric();
    let mut out = [[0.0; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            let mut s = 0.0;
            for m in 0..4 {
                for n in 0..4 {
                    s += gi[a][m] * gi[b][n] * f[m][n];
                }
            }
            out[a][b] = s;
        }
    }
    out
}

/// Frame 2-form from its null components: F(a,4) = alpha_F, F(a,3) =
/// alphab_F, F(3,4) = 2 rho_F, F(1,2) = sigma_F.
pub fn maxwell_tensor(alpha: [f64; 2], alphab: [f64; 2], rho: f64, sigma: f64) -> T2 {
    let mut f = [[0.0; 4]; 4];
    for a in 0..2 {
        f[a][E4] = alpha[a];
        f[E4][a] = -alpha[a];
        f[a][E3] = alphab[a];
        f[E3][a] = -alphab[a];
    }
    f[E3][E4] = 2.0 * rho;
    f[E4][E3] = -2.0 * rho;
    f[0][1] = sigma;
    f[1][0] = -sigma;
    f
}

/// Null components (alpha, alphab, rho, sigma) of a frame 2-form.
pub fn maxwell_components(f: &T2) -> ([f64; 2], [f64; 2], f64, f64) {
    ([f[0][E4], f[1][E4]], [f[0][E3], f[1][E3]], 0.5 * f[E3][E4], f[0][1])
}

/// Hodge dual (*F)_ab = 1/2 eps_abmn F^mn.
pub fn dual2(f: &T2) -> T2 {
    let eps = volume_form();
    let fu = raise2(f);
    let mut out = [[0.0; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            let mut s = 0.0;
            for m in 0..4 {
                for n in 0..4 {
                    s += eps[ix(a, b, m, n)] * fu[m][n];
                }
            }
            out[a][b] = 0.5 * s;
        }
    }
    out
}

/// T_ab = F_am F_b^m - 1/4 g_ab F.F.
pub fn stress_tensor(f: &T2) -> T2 {
    let g = metric();
    let gi = inverse_metric();
    let fu = raise2(f);
    let mut ff = 0.0;
    for m in 0..4 {
        for n in 0..4 {
            ff += f[m][n] * fu[m][n];
        }
    }
    let mut out = [[0.0; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            let mut s = 0.0;
            for m in 0..4 {
                for n in 0..4 {
                    s += f[a][m] * f[b][n] * gi[m][n];
                }
            }
            out[a][b] = s - 0.25 * g[a][b] * ff;
        }
    }
    out
}

/// g^ab T_ab.
pub fn trace2(t: &T2) -> f64 {
    let gi = inverse_metric();
    (0..4).flat_map(|a| (0..4).map(move |b| (a, b))).map(|(a, b)| gi[a][b] * t[a][b]).sum()
}

/// Null components of a Weyl tensor, ordered (alpha11, alpha12, beta1, beta2,
/// rho, sigma, betab1, betab2, alphab11, alphab12).
pub fn weyl_components(w: &T4) -> [f64; 10] {
    let sw = dual4(w);
    [
        w[ix(0, E4, 0, E4)],
        w[ix(0, E4, 1, E4)],
        0.5 * w[ix(0, E4, E3, E4)],
        0.5 * w[ix(1, E4, E3, E4)],
        0.25 * w[ix(E4, E3, E4, E3)],
        0.25 * sw[ix(E4, E3, E4, E3)],
        0.5 * w[ix(0, E3, E3, E4)],
        0.5 * w[ix(1, E3, E3, E4)],
        w[ix(0, E3, 0, E3)],
        w[ix(0, E3, 1, E3)],
    ]
}

/// Left dual (*W)_abcd = 1/2 eps_abmn W^mn_cd.
pub fn dual4(w: &T4) -> T4 {
    let eps = volume_form();
    let gi = inverse_metric();
    let mut wu = [0.0; 256];
    for m in 0..4 {
        for n in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let mut s = 0.0;
                    for p in 0..4 {
                        for q in 0..4 {
                            s += gi[m][p] * gi[n][q] * w[ix(p, q, c, d)];
                        }
                    }
                    wu[ix(m, n, c, d)] = s;
                }
            }
        }
    }
    let mut out = [0.0; 256];
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let mut s = 0.0;
                    for m in 0..4 {
                        for n in 0..4 {
                            s += eps[ix(a, b, m, n)] * wu[ix(m, n, c, d)];
                        }
                    }
                    out[ix(a, b, c, d)] = 0.5 * s;
                }
            }
        }
    }
    out
}

fn kulkarni_nomizu(h: &T2, k: &T2) -> T4 {
    let mut r = [0.0; 256];
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    r[ix(a, b, c, d)] =
                        h[a][c] * k[b][d] + h[b][d] * k[a][c] - h[a][d] * k[b][c] - h[b][c] * k[a][d];
                }
            }
        }
    }
    r
}

/// Weyl part of an algebraic curvature tensor.
pub fn weyl_part(r: &T4) -> T4 {
    let g = metric();
    let gi = inverse_metric();
    let mut ric = [[0.0; 4]; 4];
    for b in 0..4 {
        for d in 0..4 {
            let mut s = 0.0;
            for a in 0..4 {
                for c in 0..4 {
                    s += gi[a][c] * r[ix(a, b, c, d)];
                }
            }
            ric[b][d] = s;
        }
    }
    let scal: f64 = (0..4).flat_map(|b| (0..4).map(move |d| (b, d))).map(|(b, d)| gi[b][d] * ric[b][d]).sum();
    let mut w = [0.0; 256];
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    w[ix(a, b, c, d)] = r[ix(a, b, c, d)]
                        - 0.5 * (g[a][c] * ric[b][d] - g[a][d] * ric[b][c] - g[b][c] * ric[a][d]
                            + g[b][d] * ric[a][c])
                        + scal / 6.0 * (g[a][c] * g[b][d] - g[a][d] * g[b][c]);
                }
            }
        }
    }
    w
}

/// Linear map from the 10 null components to the full Weyl tensor, found by
/// inverting the component extraction on a basis of Weyl tensors.
fn reconstruction() -> &'static DMatrix<f64> {
    static MAP: OnceLock<DMatrix<f64>> = OnceLock::new();
    MAP.get_or_init(|| {
        let mut sym = Vec::new();
        for i in 0..4 {
            for j in i..4 {
                let mut h = [[0.0; 4]; 4];
                h[i][j] = 1.0;
                h[j][i] = 1.0;
                sym.push(h);
            }
        }
        let mut basis: Vec<T4> = Vec::new();
        let mut comps: Vec<[f64; 10]> = Vec::new();
        let mut ortho: Vec<[f64; 10]> = Vec::new();
        'outer: for i in 0..sym.len() {
            for j in i..sym.len() {
                let w = weyl_part(&kulkarni_nomizu(&sym[i], &sym[j]));
                let v = weyl_components(&w);
                let mut r = v;
                for o in &ortho {
                    let p: f64 = r.iter().zip(o).map(|(a, b)| a * b).sum();
                    r.iter_mut().zip(o).for_each(|(a, b)| *a -= p * b);
                }
                let nr = r.iter().map(|x| x * x).sum::<f64>().sqrt();
                if nr > 1e-8 {
                    ortho.push(r.map(|x| x / nr));
                    basis.push(w);
                    comps.push(v);
                    if basis.len() == 10 {
                        break 'outer;
                    }
                }
            }
        }
        assert_eq!(basis.len(), 10, "Weyl space must be 10-dimensional");
        let v = DMatrix::from_fn(10, 10, |r, c| comps[c][r]);
        let vinv = v.try_inverse().expect("component map is invertible on Weyl tensors");
        let b = DMatrix::from_fn(256, 10, |r, c| basis[c][r]);
        b * vinv
    })
}

/// Full Weyl tensor with the given null components.
pub fn weyl_tensor(c: &[f64; 10]) -> T4 {
    let m = reconstruction();
    let mut w = [0.0; 256];
    for (r, out) in w.iter_mut().enumerate() {
        *out = (0..10).map(|k| m[(r, k)] * c[k]).sum();
    }
    w
}

/// Q_abcd = W_a m c n W_b^m_d^n + *W_a m c n *W_b^m_d^n.
pub fn bel_robinson(w: &T4) -> T4 {
    let gi = inverse_metric();
    let sw = dual4(w);
    let mut q = [0.0; 256];
    for src in [w, &sw] {
        // raise the 2nd and 4th index
        let mut up = [0.0; 256];
        for b in 0..4 {
            for m in 0..4 {
                for d in 0..4 {
                    for n in 0..4 {
                        let mut s = 0.0;
                        for p in 0..4 {
                            if gi[m][p] == 0.0 {
                                continue;
                            }
                            for r in 0..4 {
                                s += gi[m][p] * gi[n][r] * src[ix(b, p, d, r)];
                            }
                        }
                        up[ix(b, m, d, n)] = s;
                    }
                }
            }
        }
        for a in 0..4 {
            for b in 0..4 {
                for c in 0..4 {
                    for d in 0..4 {
                        let mut s = 0.0;
                        for m in 0..4 {
                            for n in 0..4 {
                                s += src[ix(a, m, c, n)] * up[ix(b, m, d, n)];
                            }
                        }
                        q[ix(a, b, c, d)] += s;
                    }
                }
            }
        }
    }
    q
}

fn node_maxwell(m: &MaxwellComponents, i: usize) -> T2 {
    maxwell_tensor(
        [m.alpha_f.comp(0)[i], m.alpha_f.comp(1)[i]],
        [m.alphab_f.comp(0)[i], m.alphab_f.comp(1)[i]],
        m.rho_f.data()[i],
        m.sigma_f.data()[i],
    )
}

fn node_weyl(w: &WeylComponents, i: usize) -> [f64; 10] {
    [
        w.alpha.comp(0)[i],
        w.alpha.comp(1)[i],
        w.beta.comp(0)[i],
        w.beta.comp(1)[i],
        w.rho.data()[i],
        w.sigma.data()[i],
        w.betab.comp(0)[i],
        w.betab.comp(1)[i],
        w.alphab.comp(0)[i],
        w.alphab.comp(1)[i],
    ]
}

/// Null components of T[F] on a sphere.
#[derive(Debug, Clone)]
pub struct StressView {
    pub t44: HorizontalField,
    pub t33: HorizontalField,
    pub t34: HorizontalField,
    /// T(e4, e_a).
    pub t4a: HorizontalField,
    /// T(e3, e_a).
    pub t3a: HorizontalField,
    /// T(e_a, e_b), general symmetric.
    pub tab: HorizontalField,
}

impl StressView {
    pub fn zeros(sphere: &SphereGrid) -> StressView {
        StressView {
            t44: HorizontalField::zeros(Rank::Scalar, sphere),
            t33: HorizontalField::zeros(Rank::Scalar, sphere),
            t34: HorizontalField::zeros(Rank::Scalar, sphere),
            t4a: HorizontalField::zeros(Rank::OneForm, sphere),
            t3a: HorizontalField::zeros(Rank::OneForm, sphere),
            tab: HorizontalField::zeros(Rank::Sym2, sphere),
        }
    }

    /// Traceless part of T_ab.
    pub fn that(&self) -> HorizontalField {
        self.tab.traceless_part()
    }

    /// Full frame tensor at one node.
    pub fn frame_tensor(&self, i: usize) -> T2 {
        let mut t = [[0.0; 4]; 4];
        t[E4][E4] = self.t44.data()[i];
        t[E3][E3] = self.t33.data()[i];
        t[E3][E4] = self.t34.data()[i];
        t[E4][E3] = self.t34.data()[i];
        for a in 0..2 {
            t[E4][a] = self.t4a.comp(a)[i];
            t[a][E4] = t[E4][a];
            t[E3][a] = self.t3a.comp(a)[i];
            t[a][E3] = t[E3][a];
        }
        t[0][0] = self.tab.comp(0)[i];
        t[0][1] = self.tab.comp(1)[i];
        t[1][0] = t[0][1];
        t[1][1] = self.tab.comp(2)[i];
        t
    }

    pub fn lin(&self, other: &StressView, a: f64, b: f64) -> StressView {
        let f = |x: &HorizontalField, y: &HorizontalField| {
            let mut o = x.scale(a);
            o.add_scaled(y, b);
            o
        };
        StressView {
            t44: f(&self.t44, &other.t44),
            t33: f(&self.t33, &other.t33),
            t34: f(&self.t34, &other.t34),
            t4a: f(&self.t4a, &other.t4a),
            t3a: f(&self.t3a, &other.t3a),
            tab: f(&self.tab, &other.tab),
        }
    }
}

/// T[F] assembled by frame contraction at every node.
pub fn assemble_t(m: &MaxwellComponents) -> StressView {
    let sphere = &m.rho_f.sphere;
    let n = sphere.n_nodes();
    let mut v = StressView::zeros(sphere);
    for i in 0..n {
        let t = stress_tensor(&node_maxwell(m, i));
        v.t44.data_mut()[i] = t[E4][E4];
        v.t33.data_mut()[i] = t[E3][E3];
        v.t34.data_mut()[i] = t[E3][E4];
        for a in 0..2 {
            v.t4a.comp_mut(a)[i] = t[E4][a];
            v.t3a.comp_mut(a)[i] = t[E3][a];
        }
        v.tab.comp_mut(0)[i] = t[0][0];
        v.tab.comp_mut(1)[i] = t[0][1];
        v.tab.comp_mut(2)[i] = t[1][1];
    }
    v
}

/// Maxwell components of the dual field *F.
pub fn dual_maxwell(m: &MaxwellComponents) -> MaxwellComponents {
    let mut out = MaxwellComponents::zeros(&m.rho_f.sphere);
    for i in 0..m.rho_f.n_nodes() {
        let (a, ab, r, s) = maxwell_components(&dual2(&node_maxwell(m, i)));
        for k in 0..2 {
            out.alpha_f.comp_mut(k)[i] = a[k];
            out.alphab_f.comp_mut(k)[i] = ab[k];
        }
        out.rho_f.data_mut()[i] = r;
        out.sigma_f.data_mut()[i] = s;
    }
    out
}

fn maxwell_lin(a: &MaxwellComponents, b: &MaxwellComponents, s: f64) -> MaxwellComponents {
    let f = |x: &HorizontalField, y: &HorizontalField| {
        let mut o = x.clone();
        o.add_scaled(y, s);
        o
    };
    MaxwellComponents {
        alpha_f: f(&a.alpha_f, &b.alpha_f),
        rho_f: f(&a.rho_f, &b.rho_f),
        sigma_f: f(&a.sigma_f, &b.sigma_f),
        alphab_f: f(&a.alphab_f, &b.alphab_f),
    }
}

/// Directional derivative of T given the rate of change of F, by
/// polarization: dT = [T(F + dF) - T(F - dF)] / 2.
pub fn stress_rate(m: &MaxwellComponents, rate: &MaxwellComponents) -> StressView {
    let plus = assemble_t(&maxwell_lin(m, rate, 1.0));
    let minus = assemble_t(&maxwell_lin(m, rate, -1.0));
    plus.lin(&minus, 0.5, -0.5)
}

/// Null derivative of T. Components whose rate is not determined by the
/// available data are `None`.
#[derive(Debug, Clone)]
pub struct StressRate {
    pub t44: Option<HorizontalField>,
    pub t33: Option<HorizontalField>,
    pub t34: Option<HorizontalField>,
    pub t4a: Option<HorizontalField>,
    pub t3a: Option<HorizontalField>,
    /// Set when a one-sided stencil was used at a slab edge.
    pub one_sided: bool,
    /// Set when the rate came from the Maxwell equations instead of differencing.
    pub from_closure: bool,
}

impl StressRate {
    pub fn full(v: StressView, one_sided: bool) -> StressRate {
        StressRate {
            t44: Some(v.t44),
            t33: Some(v.t33),
            t34: Some(v.t34),
            t4a: Some(v.t4a),
            t3a: Some(v.t3a),
            one_sided,
            from_closure: false,
        }
    }

    pub fn unavailable() -> StressRate {
        StressRate { t44: None, t33: None, t34: None, t4a: None, t3a: None, one_sided: false, from_closure: false }
    }
}

/// Everything an equation evaluator needs from the Maxwell field at one sphere.
#[derive(Debug, Clone)]
pub struct StressContext {
    pub view: StressView,
    /// Omega^-1 d/dubar of T.
    pub d4: StressRate,
    /// Omega^-1 d/du of T.
    pub d3: StressRate,
}

impl StressContext {
    /// Stress of a single snapshot with no null-derivative information.
    pub fn static_only(snap: &FieldSnapshot) -> StressContext {
        StressContext {
            view: assemble_t(&snap.maxwell),
            d4: StressRate::unavailable(),
            d3: StressRate::unavailable(),
        }
    }
}

/// Three-point derivative weights at `x[k]` using nodes `x[k0..k0+3]`.
pub fn fd_weights(x: &[f64], k0: usize, k: usize) -> [f64; 3] {
    let (a, b, c) = (x[k0], x[k0 + 1], x[k0 + 2]);
    let t = x[k];
    [
        ((t - b) + (t - c)) / ((a - b) * (a - c)),
        ((t - a) + (t - c)) / ((b - a) * (b - c)),
        ((t - a) + (t - b)) / ((c - a) * (c - b)),
    ]
}

/// Stencil start for node `k` of `n`; the flag marks one-sided stencils.
pub fn stencil(n: usize, k: usize) -> (usize, bool) {
    if k == 0 {
        (0, true)
    } else if k + 1 == n {
        (n - 3, true)
    } else {
        (k - 1, false)
    }
}

fn weighted_sum(fields: [&HorizontalField; 3], w: [f64; 3], scale: &HorizontalField) -> HorizontalField {
    let mut out = fields[0].scale(w[0]);
    out.add_scaled(fields[1], w[1]);
    out.add_scaled(fields[2], w[2]);
    let inv = scale.map(|o| 1.0 / o);
    out.mul_scalar(&inv).on_sphere(&scale.sphere)
}

/// Omega^-1 times the finite-difference rate of the Maxwell components along
/// u (`along_u`) or ubar at node (iu, jub). `None` if fewer than 3 nodes.
pub fn maxwell_rate_fd(slab: &Slab, iu: usize, jub: usize, along_u: bool) -> Option<(MaxwellComponents, bool)> {
    let (x, n, k) = if along_u {
        (&slab.grid.u_nodes, slab.grid.n_u(), iu)
    } else {
        (&slab.grid.ubar_nodes, slab.grid.n_ubar(), jub)
    };
    if n < 3 {
        return None;
    }
    let (k0, one_sided) = stencil(n, k);
    let w = fd_weights(x, k0, k);
    let snap = |m: usize| if along_u { slab.at(m, jub) } else { slab.at(iu, m) };
    let s = [snap(k0), snap(k0 + 1), snap(k0 + 2)];
    let here = slab.at(iu, jub);
    let lapse = &here.lapse;
    let pick = |f: fn(&MaxwellComponents) -> &HorizontalField| {
        weighted_sum([f(&s[0].maxwell), f(&s[1].maxwell), f(&s[2].maxwell)], w, lapse)
    };
    Some((
        MaxwellComponents {
            alpha_f: pick(|m| &m.alpha_f),
            rho_f: pick(|m| &m.rho_f),
            sigma_f: pick(|m| &m.sigma_f),
            alphab_f: pick(|m| &m.alphab_f),
        },
        one_sided,
    ))
}

/// The null-derivative context of T at every slab node. Directions with
/// fewer than three nodes fall back to the Maxwell equations for the e3
/// rates of (alpha_F, rho_F, sigma_F); rates that need nabla_3 alphab_F are
/// then unavailable.
pub fn stress_derivatives(slab: &Slab) -> Vec<StressContext> {
    use rayon::prelude::*;
    let n_ub = slab.grid.n_ubar();
    (0..slab.snaps.len())
        .into_par_iter()
        .map(|idx| {
            let (iu, jub) = (idx / n_ub, idx % n_ub);
            let snap = slab.at(iu, jub);
            let view = assemble_t(&snap.maxwell);
            let d4 = match maxwell_rate_fd(slab, iu, jub, false) {
                Some((rate, os)) => StressRate::full(stress_rate(&snap.maxwell, &rate), os),
                None => StressRate::unavailable(),
            };
            let d3 = match maxwell_rate_fd(slab, iu, jub, true) {
                Some((rate, os)) => StressRate::full(stress_rate(&snap.maxwell, &rate), os),
                None => closure_rate_e3(snap),
            };
            StressContext { view, d4, d3 }
        })
        .collect()
}

/// e3 rate of T from the null Maxwell equations on a single sphere.
pub fn closure_rate_e3(snap: &FieldSnapshot) -> StressRate {
    match crate::eqreg::maxwell_e3_rates(snap) {
        Ok(rate) => {
            let v = stress_rate(&snap.maxwell, &rate);
            StressRate {
                t44: Some(v.t44),
                t33: None,
                t34: Some(v.t34),
                t4a: Some(v.t4a),
                t3a: None,
                one_sided: false,
                from_closure: true,
            }
        }
        Err(_) => StressRate::unavailable(),
    }
}

/// Null components of Q[W] along the null pair, plus the full tensor per node.
#[derive(Debug, Clone)]
pub struct BelRobinsonView {
    pub q4444: HorizontalField,
    pub q4443: HorizontalField,
    pub q4433: HorizontalField,
    pub q4333: HorizontalField,
    pub q3333: HorizontalField,
    pub full: Vec<T4>,
}

pub fn assemble_q(w: &WeylComponents) -> BelRobinsonView {
    let sphere = &w.rho.sphere;
    let n = sphere.n_nodes();
    let full: Vec<T4> = (0..n).map(|i| bel_robinson(&weyl_tensor(&node_weyl(w, i)))).collect();
    let pick = |a: usize, b: usize, c: usize, d: usize| {
        HorizontalField::from_data(Rank::Scalar, sphere, full.iter().map(|q| q[ix(a, b, c, d)]).collect())
            .expect("grid-sized")
    };
    BelRobinsonView {
        q4444: pick(E4, E4, E4, E4),
        q4443: pick(E4, E4, E4, E3),
        q4433: pick(E4, E4, E3, E3),
        q4333: pick(E4, E3, E3, E3),
        q3333: pick(E3, E3, E3, E3),
        full,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Multiplier {
    L,
    Lbar,
}

impl Multiplier {
    pub fn parse(s: &str) -> Option<Multiplier> {
        match s {
            "L" | "l" => Some(Multiplier::L),
            "Lbar" | "lbar" | "Lb" => Some(Multiplier::Lbar),
            _ => None,
        }
    }
}

/// Null components of a deformation tensor.
#[derive(Debug, Clone)]
pub struct DeformationTensor {
    pub pi44: HorizontalField,
    pub pi34: HorizontalField,
    pub pi33: HorizontalField,
    pub pi4a: HorizontalField,
    pub pi3a: HorizontalField,
    /// General symmetric 2-tensor.
    pub pi_ab: HorizontalField,
}

/// Deformation tensor of L = Omega^-1 e4 or Lbar = Omega^-1 e3.
pub fn deformation(x: Multiplier, snap: &FieldSnapshot) -> DeformationTensor {
    let s = &snap.sphere;
    let k = &snap.coeffs;
    let inv = snap.lapse.map(|o| 1.0 / o);
    let zero = HorizontalField::zeros(Rank::Scalar, s);
    let zero1 = HorizontalField::zeros(Rank::OneForm, s);
    match x {
        Multiplier::L => DeformationTensor {
            pi44: zero.clone(),
            pi34: zero.clone(),
            pi33: k.omegab.mul_scalar(&inv).scale(-8.0),
            pi4a: zero1,
            pi3a: k.eta.mul_scalar(&inv).scale(2.0),
            pi_ab: k.chihat.with_trace(&k.trchi).mul_scalar(&inv),
        },
        Multiplier::Lbar => DeformationTensor {
            pi44: k.omega.mul_scalar(&inv).scale(-8.0),
            pi34: zero.clone(),
            pi33: zero,
            pi4a: k.etab.mul_scalar(&inv).scale(2.0),
            pi3a: zero1,
            pi_ab: k.chibhat.with_trace(&snap.trchib()).mul_scalar(&inv),
        },
    }
}

/// Hypersurface fluxes of T through a cone.
#[derive(Debug, Clone, Serialize)]
pub struct FluxRow {
    pub multiplier: String,
    /// "H" (outgoing cone at fixed u) or "Hb" (incoming cone at fixed ubar).
    pub cone: String,
    pub fixed: f64,
    pub flux: f64,
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2).zip(y.windows(2)).map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1])).sum()
}

/// Integrand Omega T(X, e) over a sphere.
fn sphere_flux(snap: &FieldSnapshot, x: Multiplier, along_e4: bool) -> f64 {
    let v = assemble_t(&snap.maxwell);
    let n = snap.sphere.n_nodes();
    let col = if along_e4 { E4 } else { E3 };
    let xi = match x {
        Multiplier::L => E4,
        Multiplier::Lbar => E3,
    };
    let vals: Vec<f64> = (0..n)
        .map(|i| {
            // X = Omega^-1 e_x, so Omega T(X, e) = T(e_x, e)
            v.frame_tensor(i)[xi][col]
        })
        .collect();
    snap.sphere.integrate(&vals)
}

/// Flux of T(X, .) through every outgoing cone H_u (integrated over the pulse
/// region ubar >= 0) and every incoming cone Hb_ubar (over the u range).
pub fn flux_t(slab: &Slab, x: Multiplier) -> Vec<FluxRow> {
    let g = &slab.grid;
    let name = match x {
        Multiplier::L => "L",
        Multiplier::Lbar => "Lbar",
    };
    let mut rows = Vec::new();
    let j0 = g.ubar_nodes.iter().position(|&v| v >= 0.0).unwrap_or(0);
    for iu in 0..g.n_u() {
        let xs = &g.ubar_nodes[j0..];
        let ys: Vec<f64> = (j0..g.n_ubar()).map(|j| sphere_flux(slab.at(iu, j), x, true)).collect();
        rows.push(FluxRow { multiplier: name.into(), cone: "H".into(), fixed: g.u_nodes[iu], flux: trapezoid(xs, &ys) });
    }
    if g.n_u() > 1 {
        for j in j0..g.n_ubar() {
            let ys: Vec<f64> = (0..g.n_u()).map(|iu| sphere_flux(slab.at(iu, j), x, false)).collect();
            rows.push(FluxRow {
                multiplier: name.into(),
                cone: "Hb".into(),
                fixed: g.ubar_nodes[j],
                flux: trapezoid(&g.u_nodes, &ys),
            });
        }
    }
    rows
}

/// Spectral angular gradient helper re-exported for evaluators.
pub fn grad_scalar(f: &HorizontalField) -> Result<HorizontalField, SphereError> {
    sphere_ops::grad(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_inverse() {
        let g = metric();
        let gi = inverse_metric();
        for a in 0..4 {
            for b in 0..4 {
                let s: f64 = (0..4).map(|m| g[a][m] * gi[m][b]).sum();
                assert!((s - if a == b { 1.0 } else { 0.0 }).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn sigma_is_half_dual_34() {
        let f = maxwell_tensor([0.3, -0.2], [0.1, 0.7], 0.4, -1.3);
        let sf = dual2(&f);
        assert!((0.5 * sf[E3][E4] - (-1.3)).abs() < 1e-14);
    }

    #[test]
    fn double_dual_is_minus_one() {
        let f = maxwell_tensor([0.3, -0.2], [0.1, 0.7], 0.4, -1.3);
        let ff = dual2(&dual2(&f));
        for a in 0..4 {
            for b in 0..4 {
                assert!((ff[a][b] + f[a][b]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn stress_closed_values() {
        let t = stress_tensor(&maxwell_tensor([0.0; 2], [0.0; 2], 1.0, 0.0));
        assert!((t[E3][E4] - 1.0).abs() < 1e-14);
        assert!(t[E4][E4].abs() < 1e-14 && t[E3][E3].abs() < 1e-14);
        let t = stress_tensor(&maxwell_tensor([0.6, 0.8], [0.0; 2], 0.0, 0.0));
        assert!((t[E4][E4] - 1.0).abs() < 1e-14);
        assert!(t[E3][E3].abs() < 1e-14);
    }

    #[test]
    fn weyl_round_trip() {
        let c = [0.3, -0.1, 0.7, 0.2, -0.4, 0.9, 0.05, -0.6, 1.1, 0.25];
        let back = weyl_components(&weyl_tensor(&c));
        for k in 0..10 {
            assert!((back[k] - c[k]).abs() < 1e-12, "{k}: {} vs {}", back[k], c[k]);
        }
    }
}
