//! Short-pulse characteristic data on the initial outgoing cone H_0: free
//! data, the constraint chase along H_0 and the data norms.
//!
//! The free data (chihat, alpha_F) live on ubar in [0, delta] and are split
//! into three consecutive windows. In window i the polarization is the unit
//! sphere gradient of the Cartesian coordinate x_i, whose squared length
//! 1 - x_i^2 sums to 2 over the three windows. With per-window normalization
//! the ubar-integrated energy is therefore the same in every direction, even
//! though any smooth one-form vanishes somewhere at each fixed ubar.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::currents::{assemble_t, closure_rate_e3, stress_rate, StressContext, StressRate, StressView};
use crate::eqreg::{self, EqError};
use crate::null_state::{minkowski_snapshot, Comp, DoubleNullGrid, FieldSnapshot, MaxwellComponents, Slab, StateError, STORED};
use crate::sphere_ops::{self as so, HorizontalField, Rank, SphereError, SphereGrid};

#[derive(Debug, Error)]
pub enum IdataError {
    #[error("invalid pulse configuration: {0}")]
    Config(String),
    #[error("constraint chase did not converge in {iterations} iterations (last residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("lapse left the admissible range at ubar = {0}")]
    LapseRange(f64),
    #[error("non-finite value in {0} at ubar = {1}")]
    NonFinite(&'static str, f64),
    #[error(transparent)]
    Eq(#[from] EqError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Sphere(#[from] SphereError),
}

type Res<T> = Result<T, IdataError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseKind {
    MaxwellOnly,
    ShearOnly,
    Mixed,
}

impl PulseKind {
    pub fn parse(s: &str) -> Option<PulseKind> {
        match s {
            "maxwell_only" => Some(PulseKind::MaxwellOnly),
            "shear_only" => Some(PulseKind::ShearOnly),
            "mixed" => Some(PulseKind::Mixed),
            _ => None,
        }
    }
}

/// Profile of each window in its local variable s' in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Envelope {
    /// sin^3(pi s'): vanishes with two derivatives at both ends.
    Bump,
    /// 1 on the open window. Not smooth; flagged by `generate_free_data`.
    Constant,
}

impl Envelope {
    /// (b, db/ds', d2b/ds'^2)
    fn eval(self, s: f64) -> (f64, f64, f64) {
        if !(0.0..=1.0).contains(&s) {
            return (0.0, 0.0, 0.0);
        }
        match self {
            Envelope::Bump => {
                let p = std::f64::consts::PI;
                let (sn, cs) = (p * s).sin_cos();
                (sn.powi(3), 3.0 * p * sn * sn * cs, 3.0 * p * p * sn * (2.0 * cs * cs - sn * sn))
            }
            Envelope::Constant => {
                if s > 0.0 && s < 1.0 {
                    (1.0, 0.0, 0.0)
                } else {
                    (0.0, 0.0, 0.0)
                }
            }
        }
    }
}

/// Optional angular modulation 1 + eps * Y_lm of the amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Modulation {
    pub l: usize,
    pub m: i64,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortPulseConfig {
    pub delta: f64,
    pub r0: f64,
    pub kind: PulseKind,
    /// Angle-averaged int_0^delta (|chihat|^2 + |alpha_F|^2) dubar.
    pub mass: f64,
    pub envelope: Envelope,
    pub modulation: Option<Modulation>,
    pub l_max: usize,
    /// Nodes across [0, delta].
    pub n_pulse: usize,
    /// Flat nodes before ubar = 0.
    pub n_flat: usize,
}

impl ShortPulseConfig {
    pub fn new(delta: f64, r0: f64, kind: PulseKind, mass: f64) -> Self {
        ShortPulseConfig {
            delta,
            r0,
            kind,
            mass,
            envelope: Envelope::Bump,
            modulation: None,
            l_max: 8,
            n_pulse: 64,
            n_flat: 4,
        }
    }

    pub fn grid(&self) -> Res<DoubleNullGrid> {
        Ok(DoubleNullGrid::uniform(self.r0, self.delta, 0.0, 1, self.n_pulse, self.n_flat)?)
    }

    fn check(&self) -> Res<()> {
        if !(self.mass >= 0.0) || !self.mass.is_finite() {
            return Err(IdataError::Config(format!("mass must be finite and non-negative, got {}", self.mass)));
        }
        if self.n_pulse < 7 {
            return Err(IdataError::Config("at least 7 nodes across the pulse".into()));
        }
        if self.n_flat < 1 {
            return Err(IdataError::Config("at least one flat node before ubar = 0".into()));
        }
        if let Some(m) = self.modulation {
            if m.l > self.l_max || m.m.unsigned_abs() as usize > m.l {
                return Err(IdataError::Config(format!("modulation (l, m) = ({}, {}) outside the band", m.l, m.m)));
            }
        }
        Ok(())
    }
}

/// Free data on H_0 as analytic functions of ubar.
#[derive(Debug, Clone)]
pub struct FreeData {
    pub cfg: ShortPulseConfig,
    /// Per-window amplitude constants.
    pub window_scale: [f64; 3],
    /// grad x_i on the unit sphere (orthonormal components), times the modulation.
    pol: [HorizontalField; 3],
    /// Spin-2 polarization with the same pointwise length as `pol`.
    pol2: [HorizontalField; 3],
    /// Smoothness and range findings.
    pub flags: Vec<String>,
}

fn spin2_partner(v: &HorizontalField) -> HorizontalField {
    let c: Vec<num_complex::Complex64> = v
        .to_complex()
        .into_iter()
        .map(|z| {
            let a = z.norm();
            if a == 0.0 {
                z * 0.0
            } else {
                z * z / (std::f64::consts::SQRT_2 * a)
            }
        })
        .collect();
    HorizontalField::from_complex(Rank::Sym2Traceless, &v.sphere, &c)
}

impl FreeData {
    /// Window index and local coordinate of ubar.
    fn window(&self, ubar: f64) -> Option<(usize, f64)> {
        let s = ubar / self.cfg.delta;
        if !(s > 0.0 && s < 1.0) {
            return None;
        }
        let i = ((3.0 * s).floor() as usize).min(2);
        Some((i, 3.0 * s - i as f64))
    }

    /// Amplitude and its first two ubar-derivatives.
    fn amplitude(&self, ubar: f64) -> Option<(usize, [f64; 3])> {
        let (i, sl) = self.window(ubar)?;
        let (b, db, d2b) = self.cfg.envelope.eval(sl);
        let d = self.cfg.delta;
        let c = self.window_scale[i] / d.sqrt();
        let k = 3.0 / d;
        Some((i, [c * b, c * db * k, c * d2b * k * k]))
    }

    /// (chihat, alpha_F) and their k-th ubar derivatives (k <= 2) on `sphere`.
    pub fn eval_deriv(&self, ubar: f64, k: usize, sphere: &SphereGrid) -> (HorizontalField, HorizontalField) {
        let zero = || {
            (
                HorizontalField::zeros(Rank::Sym2Traceless, sphere),
                HorizontalField::zeros(Rank::OneForm, sphere),
            )
        };
        let Some((i, a)) = self.amplitude(ubar) else { return zero() };
        let a = a[k.min(2)];
        let (wa, wc) = match self.cfg.kind {
            PulseKind::MaxwellOnly => (1.0, 0.0),
            PulseKind::ShearOnly => (0.0, 1.0),
            PulseKind::Mixed => (std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2),
        };
        (
            self.pol2[i].scale(a * wc).on_sphere(sphere),
            self.pol[i].scale(a * wa).on_sphere(sphere),
        )
    }

    pub fn eval(&self, ubar: f64, sphere: &SphereGrid) -> (HorizontalField, HorizontalField) {
        self.eval_deriv(ubar, 0, sphere)
    }

    /// Pointwise |chihat|^2 + |alpha_F|^2 at ubar.
    pub fn energy_density(&self, ubar: f64, sphere: &SphereGrid) -> HorizontalField {
        let (c, a) = self.eval(ubar, sphere);
        &c.norm_sq() + &a.norm_sq()
    }
}

/// Build the free data for `cfg` on the ubar nodes of `grid`. The trapezoid
/// integral of the energy over the pulse nodes equals `cfg.mass` after angle
/// averaging (and in every direction when there is no modulation).
pub fn generate_free_data(cfg: &ShortPulseConfig, grid: &DoubleNullGrid) -> Res<FreeData> {
    cfg.check()?;
    let unit = SphereGrid::new(cfg.l_max, 1.0)?;
    let modf = match cfg.modulation {
        Some(m) => {
            let y = so::real_harmonic(&unit, m.l, m.m);
            y.map(|v| 1.0 + m.eps * v)
        }
        None => HorizontalField::constant_scalar(1.0, &unit),
    };
    let mut flags = Vec::new();
    if cfg.envelope == Envelope::Constant {
        flags.push("envelope does not vanish with two derivatives at the window edges".to_string());
    }
    if modf.data().iter().any(|g| *g <= 0.0) {
        flags.push("modulation changes sign; amplitude vanishes on a curve".to_string());
    }
    let pol: [HorizontalField; 3] = std::array::from_fn(|i| {
        HorizontalField::one_form_from_ambient(&unit, |x| {
            // tangential projection of e_i
            let mut e = [0.0; 3];
            e[i] = 1.0;
            let d = x[i];
            [e[0] - d * x[0], e[1] - d * x[1], e[2] - d * x[2]]
        })
        .mul_scalar(&modf)
    });
    let pol2: [HorizontalField; 3] = std::array::from_fn(|i| spin2_partner(&pol[i]));

    let mut fd = FreeData { cfg: cfg.clone(), window_scale: [0.0; 3], pol, pol2, flags };
    if cfg.mass == 0.0 {
        return Ok(fd);
    }
    // Trapezoid weights on the pulse nodes.
    let x: Vec<f64> = grid.ubar_nodes.iter().copied().filter(|u| *u >= 0.0).collect();
    let mut w = vec![0.0; x.len()];
    for k in 0..x.len() - 1 {
        let h = x[k + 1] - x[k];
        w[k] += 0.5 * h;
        w[k + 1] += 0.5 * h;
    }
    let mut t = [0.0; 3];
    for (xk, wk) in x.iter().zip(&w) {
        if let Some((i, sl)) = fd.window(*xk) {
            let b = cfg.envelope.eval(sl).0;
            t[i] += wk * b * b / cfg.delta;
        }
    }
    if t.iter().any(|v| *v <= 0.0) {
        return Err(IdataError::Config("a pulse window contains no interior node".into()));
    }
    // Mean of g^2 |grad x_i|^2 summed over windows is 2 <g^2>.
    let g2 = unit.mean(&modf.mul_scalar(&modf).data().to_vec());
    let k = cfg.mass / (2.0 * g2);
    fd.window_scale = std::array::from_fn(|i| (k / t[i]).sqrt());

    // Remove the residual rounding of the modulated case by one global rescale.
    let e = angle_averaged_energy(&fd, &x, &w, &unit);
    let fix = (cfg.mass / e).sqrt();
    fd.window_scale.iter_mut().for_each(|c| *c *= fix);
    Ok(fd)
}

fn angle_averaged_energy(fd: &FreeData, x: &[f64], w: &[f64], unit: &SphereGrid) -> f64 {
    x.iter()
        .zip(w)
        .map(|(xk, wk)| wk * unit.mean(fd.energy_density(*xk, unit).data()))
        .sum()
}

/// Trapezoid integral over the pulse nodes of |chihat|^2 + |alpha_F|^2 at
/// every sphere node.
pub fn integrated_energy(fd: &FreeData, grid: &DoubleNullGrid) -> HorizontalField {
    let unit = fd.pol[0].sphere.clone();
    let x: Vec<f64> = grid.ubar_nodes.iter().copied().filter(|u| *u >= 0.0).collect();
    let mut acc = HorizontalField::zeros(Rank::Scalar, &unit);
    for k in 0..x.len().saturating_sub(1) {
        let h = x[k + 1] - x[k];
        acc.add_scaled(&fd.energy_density(x[k], &unit), 0.5 * h);
        acc.add_scaled(&fd.energy_density(x[k + 1], &unit), 0.5 * h);
    }
    acc
}

// ---------------------------------------------------------------------------
// constraint chase

/// Solver controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChaseOptions {
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ChaseOptions {
    fn default() -> Self {
        ChaseOptions { damping: 0.5, tol: 1e-8, max_iter: 200 }
    }
}

/// Residual of one equation over the pulse nodes.
#[derive(Debug, Clone, Serialize)]
pub struct EquationResidual {
    pub id: String,
    /// "scheme_defect", "pointwise" or "finite_difference".
    pub method: String,
    pub max_abs: f64,
    /// Whether the solver enforces this equation.
    pub enforced: bool,
}

#[derive(Debug, Clone)]
pub struct ConstraintSolution {
    /// Single-cone slab (u = 0) over all ubar nodes.
    pub slab: Slab,
    pub free: FreeData,
    pub iterations: usize,
    pub converged: bool,
    /// Max lagged-coupling change per iteration.
    pub increments: Vec<f64>,
    /// Enforced nabla_4 equations and constraints, solver-consistent.
    pub residuals: Vec<EquationResidual>,
    /// Three-point difference residuals of the registry, for information.
    pub fd_residuals: Vec<EquationResidual>,
    /// Stress contexts of the final state (exact nabla_4 rates).
    pub stress: Vec<StressContext>,
}

impl ConstraintSolution {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().filter(|r| r.enforced).fold(0.0, |m, r| m.max(r.max_abs))
    }

    pub fn snapshots(&self) -> &[FieldSnapshot] {
        &self.slab.snaps
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Rhs {
    Eq(&'static str),
    /// d/dubar omegab_dag = sigma / 2.
    OmegabDag,
}

#[derive(Debug, Clone, Copy)]
struct Target {
    comp: Comp,
    rhs: Rhs,
}

const T_TRCHI: Target = Target { comp: Comp::TrChi, rhs: Rhs::Eq("NSE_L_tr_chi") };
const T_RHOF: Target = Target { comp: Comp::RhoF, rhs: Rhs::Eq("NM_L_rho") };
const T_SIGMAF: Target = Target { comp: Comp::SigmaF, rhs: Rhs::Eq("NM_L_sigma") };
const T_ALPHABF: Target = Target { comp: Comp::AlphabF, rhs: Rhs::Eq("NM_L_alphab") };
const T_ETA: Target = Target { comp: Comp::Eta, rhs: Rhs::Eq("NSE_L_eta") };
const T_SIGMA: Target = Target { comp: Comp::Sigma, rhs: Rhs::Eq("NBE_L_sigma") };
const T_RHO: Target = Target { comp: Comp::Rho, rhs: Rhs::Eq("NBE_L_rho") };
const T_OMEGAB: Target = Target { comp: Comp::Omegab, rhs: Rhs::Eq("NSE_L_omegab") };
const T_TRCHIB: Target = Target { comp: Comp::TrChibTilde, rhs: Rhs::Eq("NSE_L_tr_chib") };
const T_CHIBH: Target = Target { comp: Comp::ChibHat, rhs: Rhs::Eq("NSE_L_chibh") };
const T_BETAB: Target = Target { comp: Comp::Betab, rhs: Rhs::Eq("NBE_L_betab") };
const T_ALPHAB: Target = Target { comp: Comp::Alphab, rhs: Rhs::Eq("NBE_L_alphab") };
const T_OMEGABDAG: Target = Target { comp: Comp::OmegabDag, rhs: Rhs::OmegabDag };

const TRANSPORTS: [Target; 13] = [
    T_TRCHI, T_RHOF, T_SIGMAF, T_ALPHABF, T_ETA, T_SIGMA, T_RHO, T_OMEGAB, T_TRCHIB, T_CHIBH, T_BETAB, T_ALPHAB,
    T_OMEGABDAG,
];

/// Fields read before they are recomputed within a sweep.
const LAGGED: [Comp; 5] = [Comp::Eta, Comp::Etab, Comp::ChibHat, Comp::TrChibTilde, Comp::Omegab];

/// Lagrange weights of the 4 nodes xs at x.
fn lagrange4(xs: &[f64], x: f64) -> [f64; 4] {
    std::array::from_fn(|i| {
        let mut w = 1.0;
        for j in 0..4 {
            if j != i {
                w *= (x - xs[j]) / (xs[i] - xs[j]);
            }
        }
        w
    })
}

fn combine(fields: [&HorizontalField; 4], w: &[f64; 4], sphere: &SphereGrid) -> HorizontalField {
    let mut out = fields[0].scale(w[0]).on_sphere(sphere);
    for k in 1..4 {
        out.add_scaled(fields[k], w[k]);
    }
    out
}

fn combine_opt(fields: [&Option<HorizontalField>; 4], w: &[f64; 4], sphere: &SphereGrid) -> Option<HorizontalField> {
    let f: Option<Vec<&HorizontalField>> = fields.iter().map(|x| x.as_ref()).collect();
    f.map(|f| combine([f[0], f[1], f[2], f[3]], w, sphere))
}

fn combine_rate(r: [&StressRate; 4], w: &[f64; 4], sphere: &SphereGrid) -> StressRate {
    StressRate {
        t44: combine_opt([&r[0].t44, &r[1].t44, &r[2].t44, &r[3].t44], w, sphere),
        t33: combine_opt([&r[0].t33, &r[1].t33, &r[2].t33, &r[3].t33], w, sphere),
        t34: combine_opt([&r[0].t34, &r[1].t34, &r[2].t34, &r[3].t34], w, sphere),
        t4a: combine_opt([&r[0].t4a, &r[1].t4a, &r[2].t4a, &r[3].t4a], w, sphere),
        t3a: combine_opt([&r[0].t3a, &r[1].t3a, &r[2].t3a, &r[3].t3a], w, sphere),
        one_sided: false,
        from_closure: r.iter().any(|x| x.from_closure),
    }
}

struct Chase<'a> {
    free: &'a FreeData,
    x: Vec<f64>,
    j0: usize,
    base: SphereGrid,
    r0: f64,
}

struct State {
    snaps: Vec<FieldSnapshot>,
    ctx: Vec<StressContext>,
}

impl<'a> Chase<'a> {
    fn stencil4(&self, x: f64) -> usize {
        let n = self.x.len();
        let j = self.x.partition_point(|v| *v <= x).saturating_sub(1);
        j.saturating_sub(1).min(n - 4)
    }

    /// Snapshot and stress context at a non-node ubar by cubic interpolation,
    /// with the free data evaluated exactly.
    fn interpolate(&self, st: &State, x: f64) -> Res<(FieldSnapshot, StressContext)> {
        let a = self.stencil4(x);
        let w = lagrange4(&self.x[a..a + 4], x);
        let sphere = self.base.with_radius(self.r0 + x)?;
        let mut snap = minkowski_snapshot(0.0, x, self.r0, &self.base)?;
        for c in STORED {
            let f = combine(
                std::array::from_fn(|k| st.snaps[a + k].get(c).expect("stored")),
                &w,
                &sphere,
            );
            *snap.get_mut(c).expect("stored") = f;
        }
        let (chi, af) = self.free.eval(x, &sphere);
        snap.coeffs.chihat = chi;
        snap.maxwell.alpha_f = af;
        let c: [&StressContext; 4] = std::array::from_fn(|k| &st.ctx[a + k]);
        let ctx = StressContext {
            view: assemble_t(&snap.maxwell),
            d4: combine_rate(std::array::from_fn(|k| &c[k].d4), &w, &sphere),
            d3: combine_rate(std::array::from_fn(|k| &c[k].d3), &w, &sphere),
        };
        Ok((snap, ctx))
    }

    fn rhs(&self, t: Target, snap: &FieldSnapshot, ctx: &StressContext) -> Res<HorizontalField> {
        Ok(match t.rhs {
            Rhs::Eq(id) => {
                let v = eqreg::eval_rhs(id, snap, Some(ctx))?;
                if t.comp == Comp::TrChibTilde {
                    // d/dubar (trchib + 2/r) = d/dubar trchib - 2/r^2
                    let r = snap.radius();
                    v.map(|y| y - 2.0 / (r * r))
                } else {
                    v
                }
            }
            Rhs::OmegabDag => snap.weyl.sigma.scale(0.5),
        })
    }

    fn with_value(&self, t: Target, base: &FieldSnapshot, q: HorizontalField) -> FieldSnapshot {
        let mut s = base.clone();
        if t.comp == Comp::Eta {
            *s.get_mut(Comp::Etab).unwrap() = q.scale(-1.0);
        }
        *s.get_mut(t.comp).unwrap() = q;
        s
    }

    /// One RK4 step of target t from node j with couplings read from `st`.
    fn rk4_step(&self, st: &State, t: Target, j: usize) -> Res<HorizontalField> {
        let (x0, x1) = (self.x[j], self.x[j + 1]);
        let h = x1 - x0;
        let q0 = st.snaps[j].get(t.comp).unwrap().clone();
        let k1 = self.rhs(t, &st.snaps[j], &st.ctx[j])?;
        let (mid, mctx) = self.interpolate(st, x0 + 0.5 * h)?;
        let stage = |k: &HorizontalField, f: f64, sphere: &SphereGrid| {
            let mut q = q0.on_sphere(sphere);
            q.add_scaled(k, f);
            q
        };
        let k2 = self.rhs(t, &self.with_value(t, &mid, stage(&k1, 0.5 * h, &mid.sphere)), &mctx)?;
        let k3 = self.rhs(t, &self.with_value(t, &mid, stage(&k2, 0.5 * h, &mid.sphere)), &mctx)?;
        let end = &st.snaps[j + 1];
        let k4 = self.rhs(t, &self.with_value(t, end, stage(&k3, h, &end.sphere)), &st.ctx[j + 1])?;
        let mut q = q0.on_sphere(&end.sphere);
        q.add_scaled(&k1, h / 6.0);
        q.add_scaled(&k2, h / 3.0);
        q.add_scaled(&k3, h / 3.0);
        q.add_scaled(&k4, h / 6.0);
        Ok(q)
    }

    fn integrate(&self, st: &mut State, t: Target) -> Res<()> {
        for j in self.j0..self.x.len() - 1 {
            let q = self.rk4_step(st, t, j)?;
            if !q.is_finite() {
                return Err(IdataError::NonFinite(t.comp.name(), self.x[j + 1]));
            }
            if t.comp == Comp::Eta {
                st.snaps[j + 1].coeffs.etab = q.scale(-1.0);
            }
            *st.snaps[j + 1].get_mut(t.comp).unwrap() = q;
        }
        Ok(())
    }

    fn pulse_nodes(&self) -> std::ops::Range<usize> {
        self.j0 + 1..self.x.len()
    }

    /// alpha from the chihat transport (algebraic given d chihat/dubar).
    fn set_alpha(&self, st: &mut State) -> Res<()> {
        for j in self.pulse_nodes() {
            let s = &st.snaps[j];
            let dchi = self.free.eval_deriv(self.x[j], 1, &s.sphere).0;
            let v = eqreg::eval_rhs("NSE_L_chih", s, Some(&st.ctx[j]))?;
            let alpha = &(&v + &s.weyl.alpha) - &dchi;
            st.snaps[j].weyl.alpha = alpha;
        }
        Ok(())
    }

    /// beta from the Codazzi equation for chihat.
    fn set_beta(&self, st: &mut State) -> Res<()> {
        for j in self.pulse_nodes() {
            let s = &st.snaps[j];
            let v = eqreg::eval_rhs("NSE_div_chih", s, Some(&st.ctx[j]))?;
            let beta = &(&v + &s.weyl.beta) - &so::div(&s.coeffs.chihat)?;
            st.snaps[j].weyl.beta = beta;
        }
        Ok(())
    }

    fn set_gauss(&self, st: &mut State) -> Res<()> {
        for j in self.pulse_nodes() {
            let k = eqreg::eval_rhs("NSE_gauss", &st.snaps[j], Some(&st.ctx[j]))?;
            st.snaps[j].gauss_k = k;
        }
        Ok(())
    }

    /// Static stress and exact nabla_4 rates from the Maxwell transports.
    fn refresh_d4(&self, st: &mut State) -> Res<()> {
        for j in self.pulse_nodes() {
            let s = &st.snaps[j];
            let rate = MaxwellComponents {
                alpha_f: self.free.eval_deriv(self.x[j], 1, &s.sphere).1,
                rho_f: eqreg::eval_rhs("NM_L_rho", s, None)?,
                sigma_f: eqreg::eval_rhs("NM_L_sigma", s, None)?,
                alphab_f: eqreg::eval_rhs("NM_L_alphab", s, None)?,
            };
            st.ctx[j].view = assemble_t(&s.maxwell);
            st.ctx[j].d4 = StressRate::full(stress_rate(&s.maxwell, &rate), false);
        }
        Ok(())
    }

    fn refresh_d3(&self, st: &mut State) {
        for j in self.pulse_nodes() {
            st.ctx[j].d3 = closure_rate_e3(&st.snaps[j]);
        }
    }

    fn sweep(&self, st: &mut State) -> Res<()> {
        self.refresh_d4(st)?;
        self.integrate(st, T_TRCHI)?;
        self.set_alpha(st)?;
        self.integrate(st, T_RHOF)?;
        self.integrate(st, T_SIGMAF)?;
        self.integrate(st, T_ALPHABF)?;
        self.refresh_d4(st)?;
        self.set_beta(st)?;
        self.integrate(st, T_ETA)?;
        self.refresh_d3(st);
        self.integrate(st, T_SIGMA)?;
        self.integrate(st, T_RHO)?;
        self.integrate(st, T_OMEGAB)?;
        self.integrate(st, T_TRCHIB)?;
        self.integrate(st, T_CHIBH)?;
        self.refresh_d3(st);
        self.integrate(st, T_BETAB)?;
        self.integrate(st, T_ALPHAB)?;
        self.integrate(st, T_OMEGABDAG)?;
        self.set_gauss(st)?;
        Ok(())
    }

    /// Max |(q_{j+1} - RK4 step from q_j)| / h for every transport, plus the
    /// pointwise and sphere equations the chase enforces.
    fn residuals(&self, st: &State) -> Res<Vec<EquationResidual>> {
        let mut out: Vec<EquationResidual> = TRANSPORTS
            .iter()
            .map(|t| {
                let mut worst: f64 = 0.0;
                for j in self.j0..self.x.len() - 1 {
                    let h = self.x[j + 1] - self.x[j];
                    let q = self.rk4_step(st, *t, j)?;
                    let d = (st.snaps[j + 1].get(t.comp).unwrap() - &q.on_sphere(&st.snaps[j + 1].sphere)).max_abs();
                    worst = worst.max(d / h);
                }
                let id = match t.rhs {
                    Rhs::Eq(id) => id.to_string(),
                    Rhs::OmegabDag => "L_omegab_dag".to_string(),
                };
                Ok(EquationResidual { id, method: "scheme_defect".into(), max_abs: worst, enforced: true })
            })
            .collect::<Res<Vec<_>>>()?;
        let mut chih: f64 = 0.0;
        let mut codazzi: f64 = 0.0;
        let mut gauss: f64 = 0.0;
        for j in self.pulse_nodes() {
            let s = &st.snaps[j];
            let dchi = self.free.eval_deriv(self.x[j], 1, &s.sphere).0;
            chih = chih.max((&dchi - &eqreg::eval_rhs("NSE_L_chih", s, Some(&st.ctx[j]))?).max_abs());
            let lhs = so::div(&s.coeffs.chihat)?;
            codazzi = codazzi.max((&lhs - &eqreg::eval_rhs("NSE_div_chih", s, Some(&st.ctx[j]))?).max_abs());
            gauss = gauss.max((&s.gauss_k - &eqreg::eval_rhs("NSE_gauss", s, Some(&st.ctx[j]))?).max_abs());
        }
        for (id, v) in [("NSE_L_chih", chih), ("NSE_div_chih", codazzi), ("NSE_gauss", gauss)] {
            out.push(EquationResidual { id: id.into(), method: "pointwise".into(), max_abs: v, enforced: true });
        }
        Ok(out)
    }
}

fn lagged_values(st: &State) -> Vec<HorizontalField> {
    st.snaps
        .iter()
        .flat_map(|s| LAGGED.iter().map(move |c| s.get(*c).unwrap().clone()))
        .collect()
}

/// Solve the nabla_4 constraint hierarchy along H_0 (u = 0, Omega = 1,
/// omega = omega_dag = 0) by a sequential chase. Fields read before they are
/// recomputed in a sweep (eta, etab, chibhat, trchib, omegab) are iterated by
/// damped Picard: the next sweep reads lag + damping * (fresh - lag).
pub fn solve_h0(free: &FreeData, grid: &DoubleNullGrid, opts: ChaseOptions) -> Res<ConstraintSolution> {
    let cfg = &free.cfg;
    let base = SphereGrid::new(cfg.l_max, cfg.r0)?;
    let cone = DoubleNullGrid::new(vec![0.0], grid.ubar_nodes.clone(), grid.r0, grid.delta)?;
    let x = cone.ubar_nodes.clone();
    let j0 = x.iter().position(|v| *v >= 0.0).ok_or_else(|| IdataError::Config("no node at ubar >= 0".into()))?;
    if x[j0] != 0.0 || j0 == 0 || x.len() - j0 < 4 {
        return Err(IdataError::Config("ubar grid needs a node at 0, a flat node before it and 3 pulse nodes".into()));
    }

    let flat = Slab::minkowski(&cone, &base)?;
    if cfg.mass == 0.0 {
        let stress = flat.snaps.iter().map(StressContext::static_only).collect();
        let mut sol = ConstraintSolution {
            slab: flat,
            free: free.clone(),
            iterations: 1,
            converged: true,
            increments: vec![0.0],
            residuals: vec![],
            fd_residuals: vec![],
            stress,
        };
        sol.residuals = TRANSPORTS
            .iter()
            .map(|t| EquationResidual {
                id: match t.rhs {
                    Rhs::Eq(id) => id.into(),
                    Rhs::OmegabDag => "L_omegab_dag".into(),
                },
                method: "scheme_defect".into(),
                max_abs: 0.0,
                enforced: true,
            })
            .collect();
        return Ok(sol);
    }

    let chase = Chase { free, x: x.clone(), j0, base: base.clone(), r0: cfg.r0 };
    let mut snaps = flat.snaps;
    for (j, s) in snaps.iter_mut().enumerate() {
        let (chi, af) = free.eval(x[j], &s.sphere);
        s.coeffs.chihat = chi;
        s.maxwell.alpha_f = af;
    }
    let ctx = snaps
        .iter()
        .map(|s| StressContext {
            view: assemble_t(&s.maxwell),
            d4: StressRate::full(StressView::zeros(&s.sphere), false),
            d3: closure_rate_e3(s),
        })
        .collect();
    let mut st = State { snaps, ctx };
    let mut lag = lagged_values(&st);
    let mut increments = Vec::new();
    let mut residuals = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        // lagged inputs for this sweep
        for (k, f) in lag.iter().enumerate() {
            let (j, c) = (k / LAGGED.len(), LAGGED[k % LAGGED.len()]);
            *st.snaps[j].get_mut(c).unwrap() = f.clone();
        }
        chase.sweep(&mut st)?;
        let fresh = lagged_values(&st);
        let inc = fresh.iter().zip(&lag).map(|(a, b)| (a - b).max_abs()).fold(0.0, f64::max);
        increments.push(inc);
        for (l, f) in lag.iter_mut().zip(&fresh) {
            let d = f - l;
            l.add_scaled(&d, opts.damping);
        }
        if inc < opts.tol {
            chase.refresh_d4(&mut st)?;
            chase.refresh_d3(&mut st);
            residuals = chase.residuals(&st)?;
            let worst = residuals.iter().fold(0.0f64, |m, r| m.max(r.max_abs));
            if worst < opts.tol {
                converged = true;
                break;
            }
        }
    }
    if !converged {
        let worst = residuals.iter().fold(f64::NAN, |m: f64, r| m.max(r.max_abs));
        return Err(IdataError::NonConvergence { iterations, residual: worst });
    }
    for s in &st.snaps {
        if s.lapse.data().iter().any(|o| !(*o > 0.0)) {
            return Err(IdataError::LapseRange(s.ubar));
        }
    }
    let slab = Slab { grid: cone, snaps: st.snaps };
    let fd_residuals = fd_residuals(&slab, &st.ctx);
    Ok(ConstraintSolution {
        slab,
        free: free.clone(),
        iterations,
        converged,
        increments,
        residuals,
        fd_residuals,
        stress: st.ctx,
    })
}

/// Three-point difference residuals of every nabla_4 registry equation on
/// the pulse nodes, using the exact stress rates.
fn fd_residuals(slab: &Slab, ctx: &[StressContext]) -> Vec<EquationResidual> {
    eqreg::registry()
        .iter()
        .filter(|e| e.direction == eqreg::Direction::L && e.lhs != eqreg::Lhs::RotO)
        .map(|e| {
            let max_abs = match eqreg::residual_with(e.id, slab, ctx) {
                Ok(nodes) => nodes.iter().filter(|n| n.ubar > 0.0).map(|n| n.field.max_abs()).fold(0.0, f64::max),
                Err(_) => f64::NAN,
            };
            EquationResidual { id: e.id.into(), method: "finite_difference".into(), max_abs, enforced: false }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// data norms

/// Terms of the initial data norm I_0.
#[derive(Debug, Clone, Serialize)]
pub struct I0Breakdown {
    /// delta^{1/2} ||psi||_{L^inf(H_0)}
    pub linf: f64,
    /// delta^{1/2} sup_ubar ||(delta nabla_4)^k psi||_{L^2(S)}, k = 0, 1, 2
    pub l4: [f64; 3],
    /// delta^{1/2} sup_ubar ||(delta^{1/2} grad)^m (delta nabla_4)^k psi||_{L^2(S)}, [k][m]
    pub mixed: [[f64; 4]; 2],
    pub total: f64,
}

fn l2_of_norm_sq(nsq: &HorizontalField) -> f64 {
    nsq.sphere.integrate(nsq.data()).max(0.0).sqrt()
}

/// psi = (chihat, alpha_F): ||psi||^2 = |chihat|^2 + |alpha_F|^2.
fn psi_grad_norm(chi: &HorizontalField, af: &HorizontalField, m: usize) -> Res<f64> {
    let a = so::grad_power_norm_sq(chi, m)?;
    let b = so::grad_power_norm_sq(af, m)?;
    Ok(l2_of_norm_sq(&(&a + &b)))
}

/// The I_0 initial data norm, with exact ubar derivatives of the free data
/// and spectral angular derivatives.
pub fn compute_i0(sol: &ConstraintSolution) -> Res<I0Breakdown> {
    let d = sol.free.cfg.delta;
    let sd = d.sqrt();
    let mut out = I0Breakdown { linf: 0.0, l4: [0.0; 3], mixed: [[0.0; 4]; 2], total: 0.0 };
    for s in sol.slab.snaps.iter().filter(|s| s.ubar >= 0.0) {
        for k in 0..3 {
            let (chi, af) = sol.free.eval_deriv(s.ubar, k, &s.sphere);
            let dk = d.powi(k as i32);
            if k == 0 {
                let e = &chi.norm_sq() + &af.norm_sq();
                let linf = e.data().iter().fold(0.0f64, |m, v| m.max(v.sqrt()));
                out.linf = out.linf.max(sd * linf);
            }
            out.l4[k] = out.l4[k].max(sd * dk * psi_grad_norm(&chi, &af, 0)?);
            if k < 2 {
                for m in 0..4 {
                    let v = sd * dk * sd.powi(m as i32) * psi_grad_norm(&chi, &af, m)?;
                    out.mixed[k][m] = out.mixed[k][m].max(v);
                }
            }
        }
    }
    out.total = out.linf + out.l4.iter().sum::<f64>() + out.mixed.iter().flatten().sum::<f64>();
    Ok(out)
}

/// sum_{k=2}^{4} delta^{1/2} sup_ubar ||(delta^{1/2} grad)^k psi||_{L^2(S)}.
pub fn compute_epsilon_norm(sol: &ConstraintSolution) -> Res<f64> {
    let l = sol.free.cfg.l_max;
    if l < 4 {
        return Err(IdataError::Config(format!("band limit {l} is too low for four angular derivatives")));
    }
    let d = sol.free.cfg.delta;
    let sd = d.sqrt();
    let mut sup = [0.0f64; 3];
    for s in sol.slab.snaps.iter().filter(|s| s.ubar >= 0.0) {
        let (chi, af) = sol.free.eval(s.ubar, &s.sphere);
        for (i, k) in (2..=4).enumerate() {
            sup[i] = sup[i].max(sd * sd.powi(k as i32) * psi_grad_norm(&chi, &af, k)?);
        }
    }
    Ok(sup.iter().sum())
}

/// Full pipeline: free data, chase.
pub fn build_h0(cfg: &ShortPulseConfig, opts: ChaseOptions) -> Res<ConstraintSolution> {
    let grid = cfg.grid()?;
    let free = generate_free_data(cfg, &grid)?;
    solve_h0(&free, &grid, opts)
}
