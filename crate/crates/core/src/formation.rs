//! Trapped-surface formation model: focusing of |chihat|^2 + |alpha_F|^2
//! along the incoming direction, the Raychaudhuri integration in ubar, the
//! criterion window and the error monitors.
//!
//! Model mode uses the closed-form amplification
//! (ubar + r0)^2 / (ubar - u + r0)^2 of the data on H_0. Extended mode
//! integrates d/du (r^2 |psi|^2) = F with injectable error fields; with all of
//! them zero it reduces to the closed form.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::idata::ConstraintSolution;
use crate::null_state::Comp;
use crate::sphere_ops::SphereGrid;

#[derive(Debug, Error)]
pub enum FormationError {
    #[error("radius r = {r} is not positive at (u, ubar) = ({u}, {ubar})")]
    Radius { u: f64, ubar: f64, r: f64 },
    #[error("criterion window needs 0 <= u <= 1, got {0}")]
    WindowRange(f64),
    #[error("invalid formation settings: {0}")]
    Settings(String),
}

type Res<T> = Result<T, FormationError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormationMode {
    /// Closed-form amplification, Raychaudhuri ODE in ubar.
    Model,
    /// Closed-form upper bound on trchi(u, delta).
    Bound,
    /// Transport integration with error fields.
    Extended,
}

impl FormationMode {
    pub fn parse(s: &str) -> Option<FormationMode> {
        match s {
            "model" => Some(FormationMode::Model),
            "bound" => Some(FormationMode::Bound),
            "extended" => Some(FormationMode::Extended),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FormationMode::Model => "model",
            FormationMode::Bound => "bound",
            FormationMode::Extended => "extended",
        }
    }
}

/// A scalar field of (u, ubar, unit position).
#[derive(Clone, Default)]
pub enum FieldSource {
    #[default]
    Zero,
    Constant(f64),
    Custom(Arc<dyn Fn(f64, f64, [f64; 3]) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for FieldSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FieldSource::Zero => write!(f, "Zero"),
            FieldSource::Constant(c) => write!(f, "Constant({c})"),
            FieldSource::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl FieldSource {
    pub fn custom(f: impl Fn(f64, f64, [f64; 3]) -> f64 + Send + Sync + 'static) -> Self {
        FieldSource::Custom(Arc::new(f))
    }

    #[inline]
    pub fn at(&self, u: f64, ubar: f64, x: [f64; 3]) -> f64 {
        match self {
            FieldSource::Zero => 0.0,
            FieldSource::Constant(c) => *c,
            FieldSource::Custom(f) => f(u, ubar, x),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, FieldSource::Zero) || matches!(self, FieldSource::Constant(c) if *c == 0.0)
    }
}

/// Injectable error fields of the focusing model.
#[derive(Debug, Clone, Default)]
pub struct ErrorFields {
    /// trchib - trchib_0.
    pub trchib_tilde: FieldSource,
    /// Omega - 1.
    pub lapse_minus_one: FieldSource,
    /// E_1 . chihat, source of the chihat transport.
    pub e1_chihat: FieldSource,
    /// E_2 . alpha_F, source of the alpha_F transport.
    pub e2_alphaf: FieldSource,
    /// |grad (x^) eta|.
    pub grad_eta_hat: FieldSource,
    /// |grad rho_F| + |grad sigma_F|.
    pub grad_maxwell: FieldSource,
}

impl ErrorFields {
    fn transport_is_trivial(&self) -> bool {
        self.trchib_tilde.is_zero() && self.lapse_minus_one.is_zero() && self.e1_chihat.is_zero() && self.e2_alphaf.is_zero()
    }
}

#[derive(Debug, Clone)]
pub struct FormationSettings {
    pub mode: FormationMode,
    /// Window margin constant C_0 (0 = margin-free).
    pub c0: f64,
    /// Additive C delta^{1/2} term of the bound mode.
    pub c_margin: f64,
    /// Extent of the u grid, [0, u_max].
    pub u_max: f64,
    pub n_u: usize,
    /// u at which the verdict is read (a grid node).
    pub u_target: f64,
    pub errors: ErrorFields,
}

impl Default for FormationSettings {
    fn default() -> Self {
        FormationSettings {
            mode: FormationMode::Model,
            c0: 0.0,
            c_margin: 0.0,
            u_max: 2.0,
            n_u: 41,
            u_target: 1.0,
            errors: ErrorFields::default(),
        }
    }
}

impl FormationSettings {
    pub fn u_nodes(&self) -> Vec<f64> {
        if self.n_u <= 1 {
            return vec![0.0];
        }
        (0..self.n_u).map(|k| self.u_max * k as f64 / (self.n_u - 1) as f64).collect()
    }

    fn target_index(&self) -> Res<usize> {
        self.u_nodes()
            .iter()
            .position(|u| (u - self.u_target).abs() <= 1e-12 * self.u_max.max(1.0))
            .ok_or_else(|| FormationError::Settings(format!("u_target = {} is not a u grid node", self.u_target)))
    }
}

/// (ubar + r0)^2 / (ubar - u + r0)^2.
pub fn amplification(u: f64, ubar: f64, r0: f64) -> Res<f64> {
    let r = ubar - u + r0;
    if !(r > 0.0) {
        return Err(FormationError::Radius { u, ubar, r });
    }
    let a = (ubar + r0) / r;
    Ok(a * a)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Window {
    pub lower: f64,
    pub upper: f64,
    /// lower >= upper.
    pub empty: bool,
}

/// Admissible range of the H_0 integral int_0^delta (|chihat|^2 + |alpha_F|^2)
/// for trapping at u while keeping H_0 untrapped:
/// ((1 + C0 delta^{1/2}) 2 (r0 - u) / r0^2, 2 (r0 - delta) / r0^2).
pub fn criterion_window(u: f64, r0: f64, delta: f64, c0: f64) -> Res<Window> {
    if !(0.0..=1.0 + 1e-12).contains(&u) {
        return Err(FormationError::WindowRange(u));
    }
    let lower = (1.0 + c0 * delta.sqrt()) * 2.0 * (r0 - u) / (r0 * r0);
    let upper = 2.0 * (r0 - delta) / (r0 * r0);
    Ok(Window { lower, upper, empty: lower >= upper })
}

/// |chihat|^2 and |alpha_F|^2 on the (u, ubar, node) lattice. The ubar samples
/// are the pulse nodes interleaved with their midpoints.
#[derive(Debug, Clone)]
pub struct FocusingFields {
    pub u: Vec<f64>,
    pub ubar: Vec<f64>,
    pub n_nodes: usize,
    pub chihat_sq: Vec<f64>,
    pub alphaf_sq: Vec<f64>,
    /// Evolved minus closed form.
    pub g1: Vec<f64>,
    pub g2: Vec<f64>,
}

impl FocusingFields {
    #[inline]
    pub fn idx(&self, k: usize, s: usize, i: usize) -> usize {
        (k * self.ubar.len() + s) * self.n_nodes + i
    }

    pub fn energy(&self, k: usize, s: usize, i: usize) -> f64 {
        let j = self.idx(k, s, i);
        self.chihat_sq[j] + self.alphaf_sq[j]
    }
}

fn pulse_samples(h0: &ConstraintSolution) -> Vec<f64> {
    let x: Vec<f64> = h0.slab.grid.ubar_nodes.iter().copied().filter(|v| *v >= 0.0).collect();
    let mut s = Vec::with_capacity(2 * x.len() - 1);
    for j in 0..x.len() {
        s.push(x[j]);
        if j + 1 < x.len() {
            s.push(0.5 * (x[j] + x[j + 1]));
        }
    }
    s
}

fn unit_sphere(h0: &ConstraintSolution) -> Res<SphereGrid> {
    SphereGrid::new(h0.slab.sphere().l_max(), 1.0).map_err(|e| FormationError::Settings(e.to_string()))
}

/// Data on H_0: (|chihat|^2, |alpha_F|^2) at every ubar sample and node.
fn h0_energies(h0: &ConstraintSolution, samples: &[f64], unit: &SphereGrid) -> (Vec<f64>, Vec<f64>) {
    let n = unit.n_nodes();
    let mut c = vec![0.0; samples.len() * n];
    let mut a = vec![0.0; samples.len() * n];
    for (s, ub) in samples.iter().enumerate() {
        let (chi, af) = h0.free.eval(*ub, unit);
        c[s * n..(s + 1) * n].copy_from_slice(chi.norm_sq().data());
        a[s * n..(s + 1) * n].copy_from_slice(af.norm_sq().data());
    }
    (c, a)
}

/// One RK4 step of y' = f(t, y).
fn rk4(t: f64, h: f64, y: f64, f: impl Fn(f64, f64) -> f64) -> f64 {
    let k1 = f(t, y);
    let k2 = f(t + 0.5 * h, y + 0.5 * h * k1);
    let k3 = f(t + 0.5 * h, y + 0.5 * h * k2);
    let k4 = f(t + h, y + h * k3);
    y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

/// |chihat|^2 and |alpha_F|^2 off H_0.
pub fn evolve_focusing(h0: &ConstraintSolution, settings: &FormationSettings) -> Res<FocusingFields> {
    let r0 = h0.slab.grid.r0;
    let u = settings.u_nodes();
    let samples = pulse_samples(h0);
    let unit = unit_sphere(h0)?;
    let n = unit.n_nodes();
    for &uk in &u {
        for &ub in &samples {
            amplification(uk, ub, r0)?;
        }
    }
    let (c0, a0) = h0_energies(h0, &samples, &unit);
    let ns = samples.len();
    let size = u.len() * ns * n;
    let mut out = FocusingFields {
        u: u.clone(),
        ubar: samples.clone(),
        n_nodes: n,
        chihat_sq: vec![0.0; size],
        alphaf_sq: vec![0.0; size],
        g1: vec![0.0; size],
        g2: vec![0.0; size],
    };
    let extended = settings.mode == FormationMode::Extended && !settings.errors.transport_is_trivial();
    for k in 0..u.len() {
        for s in 0..ns {
            let amp = amplification(u[k], samples[s], r0)?;
            for i in 0..n {
                let j = (k * ns + s) * n + i;
                out.chihat_sq[j] = amp * c0[s * n + i];
                out.alphaf_sq[j] = amp * a0[s * n + i];
            }
        }
    }
    if !extended {
        return Ok(out);
    }
    let e = &settings.errors;
    let pos: Vec<[f64; 3]> = (0..n).map(|i| unit.angular.unit_position(i)).collect();
    // y = r^2 |psi|^2 along each incoming generator
    let rows: Vec<(usize, usize, Vec<f64>, Vec<f64>)> = (0..ns * n)
        .into_par_iter()
        .map(|si| {
            let (s, i) = (si / n, si % n);
            let ub = samples[s];
            let x = pos[i];
            let rhs = |src: &FieldSource, t: f64, y: f64| {
                let om = 1.0 + e.lapse_minus_one.at(t, ub, x);
                let r = r0 + ub - t;
                (y / om) * (-e.trchib_tilde.at(t, ub, x) + 2.0 * (om - 1.0) / r) + r * r * src.at(t, ub, x) / om
            };
            let f1 = |t: f64, y: f64| rhs(&e.e1_chihat, t, y);
            let f2 = |t: f64, y: f64| rhs(&e.e2_alphaf, t, y);
            let rr = |t: f64| (r0 + ub - t) * (r0 + ub - t);
            let mut y1 = rr(u[0]) * c0[s * n + i];
            let mut y2 = rr(u[0]) * a0[s * n + i];
            let mut v1 = vec![y1 / rr(u[0])];
            let mut v2 = vec![y2 / rr(u[0])];
            for k in 0..u.len() - 1 {
                let h = u[k + 1] - u[k];
                y1 = rk4(u[k], h, y1, &f1);
                y2 = rk4(u[k], h, y2, &f2);
                v1.push(y1 / rr(u[k + 1]));
                v2.push(y2 / rr(u[k + 1]));
            }
            (s, i, v1, v2)
        })
        .collect();
    for (s, i, v1, v2) in rows {
        for k in 0..u.len() {
            let j = (k * ns + s) * n + i;
            out.g1[j] = v1[k] - out.chihat_sq[j];
            out.g2[j] = v2[k] - out.alphaf_sq[j];
            out.chihat_sq[j] = v1[k];
            out.alphaf_sq[j] = v2[k];
        }
    }
    Ok(out)
}

/// trchi(u, delta) at every (u node, sphere node), flattened [k][i], and
/// whether the Raychaudhuri integration blew up before ubar = delta.
pub fn evolve_trchi(
    h0: &ConstraintSolution,
    focus: &FocusingFields,
    settings: &FormationSettings,
) -> Res<(Vec<f64>, bool)> {
    let r0 = h0.slab.grid.r0;
    let delta = h0.slab.grid.delta;
    let n = focus.n_nodes;
    let ns = focus.ubar.len();
    let unit = unit_sphere(h0)?;
    let pos: Vec<[f64; 3]> = (0..n).map(|i| unit.angular.unit_position(i)).collect();
    if settings.mode == FormationMode::Bound {
        let integ = h0_integral(focus);
        let mut out = Vec::with_capacity(focus.u.len() * n);
        for &u in &focus.u {
            let r = r0 - u;
            for &v in &integ {
                out.push(2.0 / r - r0 * r0 / (r * r) * v + settings.c_margin * delta.sqrt());
            }
        }
        return Ok((out, false));
    }
    let lapse = if settings.mode == FormationMode::Extended {
        settings.errors.lapse_minus_one.clone()
    } else {
        FieldSource::Zero
    };
    let vals: Vec<(f64, bool)> = (0..focus.u.len() * n)
        .into_par_iter()
        .map(|ki| {
            let (k, i) = (ki / n, ki % n);
            let u = focus.u[k];
            let mut y = 2.0 / (r0 - u);
            let mut blown = false;
            for j in 0..(ns - 1) / 2 {
                let (s0, s1, s2) = (2 * j, 2 * j + 1, 2 * j + 2);
                let (t0, t2) = (focus.ubar[s0], focus.ubar[s2]);
                let h = t2 - t0;
                let e = |s: usize| focus.energy(k, s, i);
                let om = |t: f64| 1.0 + lapse.at(u, t, pos[i]);
                let f = |t: f64, e: f64, y: f64| -(0.5 * y * y + e) / om(t);
                let tm = 0.5 * (t0 + t2);
                let k1 = f(t0, e(s0), y);
                let k2 = f(tm, e(s1), y + 0.5 * h * k1);
                let k3 = f(tm, e(s1), y + 0.5 * h * k2);
                let k4 = f(t2, e(s2), y + h * k3);
                y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                if !y.is_finite() || y < -1e12 {
                    blown = true;
                    y = f64::NEG_INFINITY;
                    break;
                }
            }
            (y, blown)
        })
        .collect();
    let blown = vals.iter().any(|v| v.1);
    Ok((vals.into_iter().map(|v| v.0).collect(), blown))
}

/// Trapezoid integral over the pulse nodes of the H_0 energy, per node.
fn h0_integral(focus: &FocusingFields) -> Vec<f64> {
    let n = focus.n_nodes;
    let ns = focus.ubar.len();
    let mut acc = vec![0.0; n];
    for s in (0..ns - 2).step_by(2) {
        let h = focus.ubar[s + 2] - focus.ubar[s];
        for (i, a) in acc.iter_mut().enumerate() {
            *a += 0.5 * h * (focus.energy(0, s, i) + focus.energy(0, s + 2, i));
        }
    }
    acc
}

/// trchib(u, delta) per (u node, sphere node). Model and bound modes start
/// from the chase value of trchib - trchib_0 at (0, delta) and transport it by
/// d/du x = -trchib_0 x - x^2 / 2 with chibhat, alphab_F inputs zero; extended
/// mode reads the injected field.
fn trchib_at_delta(h0: &ConstraintSolution, focus: &FocusingFields, settings: &FormationSettings) -> Vec<f64> {
    let r0 = h0.slab.grid.r0;
    let delta = h0.slab.grid.delta;
    let n = focus.n_nodes;
    let last = h0.slab.snaps.last().expect("non-empty slab");
    let x0 = last.get(Comp::TrChibTilde).expect("stored").data().to_vec();
    let unit = unit_sphere(h0).expect("valid band limit");
    let mut out = vec![0.0; focus.u.len() * n];
    for i in 0..n {
        let pos = unit.angular.unit_position(i);
        let mut x = x0[i];
        for k in 0..focus.u.len() {
            let u = focus.u[k];
            let r = r0 + delta - u;
            if settings.mode == FormationMode::Extended {
                x = settings.errors.trchib_tilde.at(u, delta, pos);
            } else if k > 0 {
                let h = u - focus.u[k - 1];
                x = rk4(focus.u[k - 1], h, x, |t, y| {
                    let tb0 = -2.0 / (r0 + delta - t);
                    -tb0 * y - 0.5 * y * y
                });
            }
            out[k * n + i] = -2.0 / r + x;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Trapped,
    NotTrapped,
    AnsatzViolated,
}

#[derive(Debug, Clone, Serialize)]
pub struct H0Check {
    /// sup over angles of int_0^delta (|chihat|^2 + |alpha_F|^2) dubar.
    pub integral_max: f64,
    pub integral_mean: f64,
    /// 2 (r0 - delta) / r0^2.
    pub upper_bound: f64,
    pub condition_holds: bool,
    /// Minimum of trchi over H_0 from the chase.
    pub min_trchi: f64,
    pub trapped_on_h0: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FormationRow {
    pub u: f64,
    pub r: f64,
    pub trchi_min: f64,
    pub trchi_mean: f64,
    /// Largest trchi(u, delta) over the sphere; negative means trapped margin.
    pub trchi_max: f64,
    pub trchib_max: f64,
    pub window_lower: Option<f64>,
    pub window_upper: Option<f64>,
    pub window_empty: Option<bool>,
    pub trapped: bool,
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct Monitors {
    /// sup_{u, theta} |int_0^delta G_1 dubar|
    pub g1_int: f64,
    pub g2_int: f64,
    /// sup of int_0^u |grad (x^) eta| |chihat| du'
    pub h1: f64,
    /// sup of int_0^u (|grad rho_F| + |grad sigma_F|) |alpha_F| du'
    pub h2: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FormationReport {
    pub mode: FormationMode,
    pub r0: f64,
    pub delta: f64,
    pub c0: f64,
    pub c_margin: f64,
    pub u_target: f64,
    pub h0: H0Check,
    pub rows: Vec<FormationRow>,
    pub monitors: Monitors,
    pub first_trapped_u: Option<f64>,
    /// Raychaudhuri blow-up before ubar = delta somewhere.
    pub already_trapped: bool,
    pub verdict: Verdict,
    pub verdict_text: String,
}

/// Error monitors from the focusing fields and the injected gradients.
pub fn smallness_monitors(focus: &FocusingFields, settings: &FormationSettings, unit: &SphereGrid) -> Monitors {
    let n = focus.n_nodes;
    let ns = focus.ubar.len();
    let nu = focus.u.len();
    let mut m = Monitors::default();
    for k in 0..nu {
        for i in 0..n {
            let (mut a1, mut a2) = (0.0, 0.0);
            for s in (0..ns - 2).step_by(2) {
                let h = focus.ubar[s + 2] - focus.ubar[s];
                a1 += 0.5 * h * (focus.g1[focus.idx(k, s, i)] + focus.g1[focus.idx(k, s + 2, i)]);
                a2 += 0.5 * h * (focus.g2[focus.idx(k, s, i)] + focus.g2[focus.idx(k, s + 2, i)]);
            }
            m.g1_int = m.g1_int.max(a1.abs());
            m.g2_int = m.g2_int.max(a2.abs());
        }
    }
    let e = &settings.errors;
    if e.grad_eta_hat.is_zero() && e.grad_maxwell.is_zero() {
        return m;
    }
    for s in (0..ns).step_by(2) {
        let ub = focus.ubar[s];
        for i in 0..n {
            let x = unit.angular.unit_position(i);
            let (mut h1, mut h2) = (0.0f64, 0.0f64);
            let term = |k: usize| {
                let j = focus.idx(k, s, i);
                (
                    e.grad_eta_hat.at(focus.u[k], ub, x) * focus.chihat_sq[j].max(0.0).sqrt(),
                    e.grad_maxwell.at(focus.u[k], ub, x) * focus.alphaf_sq[j].max(0.0).sqrt(),
                )
            };
            let mut prev = term(0);
            for k in 1..nu {
                let cur = term(k);
                let h = focus.u[k] - focus.u[k - 1];
                h1 += 0.5 * h * (prev.0 + cur.0);
                h2 += 0.5 * h * (prev.1 + cur.1);
                m.h1 = m.h1.max(h1);
                m.h2 = m.h2.max(h2);
                prev = cur;
            }
        }
    }
    m
}

/// Run the formation model on a solved H_0 and assemble the report.
pub fn verdict(h0: &ConstraintSolution, settings: &FormationSettings) -> Res<FormationReport> {
    if settings.n_u < 2 || !(settings.u_max > 0.0) {
        return Err(FormationError::Settings("the u grid needs at least two nodes on a positive interval".into()));
    }
    let kt = settings.target_index()?;
    let r0 = h0.slab.grid.r0;
    let delta = h0.slab.grid.delta;
    let unit = unit_sphere(h0)?;
    let focus = evolve_focusing(h0, settings)?;
    let (trchi, already_trapped) = evolve_trchi(h0, &focus, settings)?;
    let trchib = trchib_at_delta(h0, &focus, settings);
    let n = focus.n_nodes;

    let integ = h0_integral(&focus);
    let integral_max = integ.iter().fold(f64::MIN, |m, v| m.max(*v));
    let integral_mean = unit.mean(&integ);
    let upper_bound = 2.0 * (r0 - delta) / (r0 * r0);
    let min_trchi = h0
        .slab
        .snaps
        .iter()
        .filter(|s| s.ubar >= 0.0)
        .flat_map(|s| s.coeffs.trchi.data().iter().copied())
        .fold(f64::INFINITY, f64::min);
    let h0c = H0Check {
        integral_max,
        integral_mean,
        upper_bound,
        condition_holds: integral_max < upper_bound,
        min_trchi,
        trapped_on_h0: min_trchi < 0.0,
    };

    let mut rows = Vec::with_capacity(focus.u.len());
    for (k, &u) in focus.u.iter().enumerate() {
        let tc = &trchi[k * n..(k + 1) * n];
        let tb = &trchib[k * n..(k + 1) * n];
        let w = if u <= 1.0 + 1e-12 { Some(criterion_window(u, r0, delta, settings.c0)?) } else { None };
        rows.push(FormationRow {
            u,
            r: r0 + delta - u,
            trchi_min: tc.iter().copied().fold(f64::INFINITY, f64::min),
            trchi_mean: unit.mean(tc),
            trchi_max: tc.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            trchib_max: tb.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            window_lower: w.map(|w| w.lower),
            window_upper: w.map(|w| w.upper),
            window_empty: w.map(|w| w.empty),
            trapped: tc.iter().zip(tb).all(|(a, b)| *a < 0.0 && *b < 0.0),
        });
    }
    let first_trapped_u = rows.iter().find(|r| r.trapped).map(|r| r.u);
    let monitors = smallness_monitors(&focus, settings, &unit);

    let (verdict, verdict_text) = if !h0c.condition_holds || h0c.trapped_on_h0 {
        let mut why = Vec::new();
        if !h0c.condition_holds {
            why.push(format!(
                "int_0^delta (|chihat|^2 + |alpha_F|^2) dubar reaches {integral_max:.6} >= 2(r0 - delta)/r0^2 = {upper_bound:.6}"
            ));
        }
        if h0c.trapped_on_h0 {
            why.push(format!("trchi drops to {min_trchi:.6} on H_0"));
        }
        (Verdict::AnsatzViolated, format!("ansatz violated: {}", why.join("; ")))
    } else if rows[kt].trapped {
        (
            Verdict::Trapped,
            format!("H\u{2080} free of trapped surfaces; trapped surface at u = {}, \u{016b} = \u{03b4}", rows[kt].u),
        )
    } else {
        (
            Verdict::NotTrapped,
            format!("H\u{2080} free of trapped surfaces; sphere at u = {}, \u{016b} = \u{03b4} not trapped", rows[kt].u),
        )
    };

    Ok(FormationReport {
        mode: settings.mode,
        r0,
        delta,
        c0: settings.c0,
        c_margin: settings.c_margin,
        u_target: settings.u_target,
        h0: h0c,
        rows,
        monitors,
        first_trapped_u,
        already_trapped,
        verdict,
        verdict_text,
    })
}

/// CSV profile of trchi(u, delta): one row per u node.
pub fn profile_csv<W: std::io::Write>(report: &FormationReport, out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    w.write_record([
        "u", "r", "trchi_min", "trchi_mean", "trchi_max", "trchib_max", "window_lower", "window_upper", "trapped",
    ])?;
    for r in &report.rows {
        w.write_record([
            r.u.to_string(),
            r.r.to_string(),
            r.trchi_min.to_string(),
            r.trchi_mean.to_string(),
            r.trchi_max.to_string(),
            r.trchib_max.to_string(),
            opt(r.window_lower),
            opt(r.window_upper),
            r.trapped.to_string(),
        ])?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn amplification_values() {
        assert_eq!(amplification(0.0, 0.3, 10.0).unwrap(), 1.0);
        assert!((amplification(1.0, 0.0, 10.0).unwrap() - 100.0 / 81.0).abs() < 1e-15);
        assert!(amplification(11.0, 0.0, 10.0).is_err());
    }

    #[test]
    fn window_values() {
        let w = criterion_window(1.0, 10.0, 1e-3, 0.0).unwrap();
        assert!((w.lower - 0.18).abs() < 1e-15);
        assert!((w.upper - 0.19998).abs() < 1e-15);
        assert!(!w.empty);
        let w0 = criterion_window(0.0, 10.0, 1e-3, 0.0).unwrap();
        assert!(w0.empty);
        assert!(criterion_window(1.5, 10.0, 1e-3, 0.0).is_err());
    }
}
