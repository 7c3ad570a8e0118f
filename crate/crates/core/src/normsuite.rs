//! Scale-invariant norms on spheres and null cones, the total norms of a
//! slab, localized cap norms and the delta-scaling study.
//!
//! Every norm acts on deviations from Minkowski values. Null derivatives are
//! three-point finite differences along the grid (e4 = Omega^-1 d/dubar,
//! e3 = Omega^-1 d/du); angular derivatives are spectral.

use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::currents::{fd_weights, stencil};
use crate::idata::{build_h0, compute_epsilon_norm, compute_i0, ChaseOptions, IdataError, ShortPulseConfig};
use crate::null_state::{Comp, Slab, StateError};
use crate::sigcalc::{norm_weight, scale, tag_of, Baseline, NormKind, Rational};
use crate::sphere_ops::{gauss_legendre, grad_power_norm_sq, lm_index, spectral_coeffs, swsh_lambda, AngularGrid, HorizontalField, SphereError, SphereGrid};

#[derive(Debug, Error)]
pub enum NormError {
    #[error("invalid norm spec: {0}")]
    Spec(String),
    #[error("coverage gap: {0}")]
    Coverage(String),
    #[error("scaling study: {0}")]
    Study(String),
    #[error("solver failed at delta = {delta}: {source}")]
    Solver {
        delta: f64,
        #[source]
        source: IdataError,
    },
    #[error(transparent)]
    Sphere(#[from] SphereError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

type Res<T> = Result<T, NormError>;

/// A component with null and angular derivative decorations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Decorated {
    pub comp: Comp,
    pub d4: u32,
    pub d3: u32,
    pub da: u32,
}

impl Decorated {
    pub fn plain(comp: Comp) -> Self {
        Decorated { comp, d4: 0, d3: 0, da: 0 }
    }

    pub fn nabla4(mut self) -> Self {
        self.d4 += 1;
        self
    }

    pub fn nabla3(mut self) -> Self {
        self.d3 += 1;
        self
    }

    pub fn grad(mut self) -> Self {
        self.da += 1;
        self
    }

    pub fn sc(self, baseline: Baseline) -> Rational {
        scale(&tag_of(self.comp).with_derivs(self.d4, self.d3, self.da), baseline)
    }

    pub fn label(self) -> String {
        let mut s = String::new();
        for (n, name) in [(self.d4, "nabla4"), (self.d3, "nabla3"), (self.da, "grad")] {
            match n {
                0 => {}
                1 => s.push_str(&format!("{name} ")),
                k => s.push_str(&format!("{name}^{k} ")),
            }
        }
        s.push_str(self.comp.name());
        s
    }
}

/// Where a norm is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "extent", rename_all = "snake_case")]
pub enum Extent {
    /// The sphere at grid node (iu, jub).
    Sphere { iu: usize, jub: usize },
    /// H_u from ubar = 0 up to the node `j_end`.
    Outgoing { iu: usize, j_end: usize },
    /// Hb_ubar from the first u node up to `i_end`.
    Incoming { jub: usize, i_end: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormSpec {
    pub field: Decorated,
    pub kind: NormKind,
    pub extent: Extent,
    pub delta: f64,
    pub baseline: Baseline,
}

impl NormSpec {
    pub fn new(field: Decorated, kind: NormKind, extent: Extent, delta: f64, baseline: Baseline) -> Self {
        NormSpec { field, kind, extent, delta, baseline }
    }

    /// Exponent of delta applied to the raw norm.
    pub fn exponent(&self) -> Rational {
        norm_weight(self.field.sc(self.baseline), self.kind)
    }

    fn check(&self, slab: &Slab) -> Res<()> {
        let g = &slab.grid;
        if (self.delta - g.delta).abs() > 1e-12 * g.delta {
            return Err(NormError::Spec(format!("delta {} does not match the grid's {}", self.delta, g.delta)));
        }
        if self.field.d4 > 2 || self.field.d3 > 2 || (self.field.d4 > 0 && self.field.d3 > 0) {
            return Err(NormError::Spec(format!("unsupported null derivatives on {}", self.field.label())));
        }
        if self.field.comp == Comp::RotO {
            return Err(NormError::Spec("rotation fields are not stored on slabs".into()));
        }
        let ok_kind = match self.extent {
            Extent::Sphere { .. } => matches!(self.kind, NormKind::LpS(_) | NormKind::Linf),
            Extent::Outgoing { .. } => matches!(self.kind, NormKind::L2H | NormKind::TraceH),
            Extent::Incoming { .. } => matches!(self.kind, NormKind::L2Hb | NormKind::TraceHb),
        };
        if !ok_kind {
            return Err(NormError::Spec(format!("{} is not a norm on {:?}", self.kind.name(), self.extent)));
        }
        if let NormKind::LpS(0) = self.kind {
            return Err(NormError::Spec("L^0 is not a norm".into()));
        }
        let (iu, jub) = match self.extent {
            Extent::Sphere { iu, jub } => (iu, jub),
            Extent::Outgoing { iu, j_end } => (iu, j_end),
            Extent::Incoming { jub, i_end } => (i_end, jub),
        };
        if iu >= g.n_u() || jub >= g.n_ubar() {
            return Err(NormError::Coverage(format!("node ({iu}, {jub}) outside a {}x{} slab", g.n_u(), g.n_ubar())));
        }
        if matches!(self.extent, Extent::Outgoing { .. }) && g.ubar_nodes[jub] < 0.0 {
            return Err(NormError::Coverage("outgoing extent ends before ubar = 0".into()));
        }
        Ok(())
    }
}

/// A norm value, or the reason it cannot be formed from the data at hand.
#[derive(Debug, Clone, PartialEq)]
pub enum NormValue {
    Value(f64),
    Unavailable(String),
}

impl NormValue {
    pub fn value(&self) -> Option<f64> {
        match self {
            NormValue::Value(v) => Some(*v),
            NormValue::Unavailable(_) => None,
        }
    }

    pub fn is_available(&self) -> bool {
        self.value().is_some()
    }

    fn plus(self, other: NormValue) -> NormValue {
        match (self, other) {
            (NormValue::Value(a), NormValue::Value(b)) => NormValue::Value(a + b),
            (u @ NormValue::Unavailable(_), _) | (_, u @ NormValue::Unavailable(_)) => u,
        }
    }

    fn sup(self, other: NormValue) -> NormValue {
        match (self, other) {
            (NormValue::Value(a), NormValue::Value(b)) => NormValue::Value(a.max(b)),
            (u @ NormValue::Unavailable(_), _) | (_, u @ NormValue::Unavailable(_)) => u,
        }
    }
}

impl std::fmt::Display for NormValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NormValue::Value(v) => write!(f, "{v:.12e}"),
            NormValue::Unavailable(_) => write!(f, "unavailable"),
        }
    }
}

impl Serialize for NormValue {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            NormValue::Value(v) => s.serialize_f64(*v),
            NormValue::Unavailable(_) => s.serialize_str("unavailable"),
        }
    }
}

/// Raw norm, applied exponent and weighted value of one spec.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormEval {
    pub raw: f64,
    pub exponent: Rational,
    pub value: f64,
}

fn fd2_weights(x: &[f64], k0: usize) -> [f64; 3] {
    let (a, b, c) = (x[k0], x[k0 + 1], x[k0 + 2]);
    [2.0 / ((a - b) * (a - c)), 2.0 / ((b - a) * (b - c)), 2.0 / ((c - a) * (c - b))]
}

/// Null-differentiated deviation field at a node; `None` when the slab has
/// fewer than three nodes in the derivative direction.
pub fn decorated_field(slab: &Slab, d: Decorated, iu: usize, jub: usize) -> Res<Option<HorizontalField>> {
    let snap = slab.at(iu, jub);
    let (order, along_u) = match (d.d4, d.d3) {
        (0, 0) => return Ok(Some(snap.deviation(d.comp)?)),
        (k, 0) => (k, false),
        (0, k) => (k, true),
        _ => return Err(NormError::Spec(format!("mixed null derivatives on {}", d.label()))),
    };
    let g = &slab.grid;
    let (x, n, k) = if along_u { (&g.u_nodes, g.n_u(), iu) } else { (&g.ubar_nodes, g.n_ubar(), jub) };
    if n < 3 {
        return Ok(None);
    }
    let (k0, _) = stencil(n, k);
    let w = match order {
        1 => fd_weights(x, k0, k),
        2 => fd2_weights(x, k0),
        _ => return Err(NormError::Spec(format!("derivative order {order} on {}", d.label()))),
    };
    let mut out = HorizontalField::zeros(d.comp.rank(), &snap.sphere);
    for (m, wm) in w.iter().enumerate() {
        let (i, j) = if along_u { (k0 + m, jub) } else { (iu, k0 + m) };
        out.add_scaled(&slab.at(i, j).deviation(d.comp)?.on_sphere(&snap.sphere), *wm);
    }
    let inv = snap.lapse.map(|o| o.powi(-(order as i32)));
    Ok(Some(out.mul_scalar(&inv)))
}

/// Pointwise squared magnitude of a decorated field at a node.
pub fn pointwise_sq(slab: &Slab, d: Decorated, iu: usize, jub: usize) -> Res<Option<Vec<f64>>> {
    let Some(f) = decorated_field(slab, d, iu, jub)? else {
        return Ok(None);
    };
    let m = if d.da == 0 { f.norm_sq() } else { grad_power_norm_sq(&f, d.da as usize)? };
    Ok(Some(m.into_data()))
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2).zip(y.windows(2)).map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1])).sum()
}

fn sphere_raw(sq: &[f64], sphere: &SphereGrid, kind: NormKind) -> f64 {
    match kind {
        NormKind::Linf => sq.iter().fold(0.0f64, |m, v| m.max(*v)).sqrt(),
        NormKind::LpS(p) => {
            let p = p as f64;
            let vals: Vec<f64> = sq.iter().map(|v| v.max(0.0).powf(0.5 * p)).collect();
            sphere.integrate(&vals).max(0.0).powf(1.0 / p)
        }
        _ => unreachable!("sphere norm kinds are checked by NormSpec"),
    }
}

/// Hypersurface norm from per-node squared magnitudes along one cone.
fn cone_raw(x: &[f64], sq: &[Vec<f64>], spheres: &[&SphereGrid], trace: bool) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    if trace {
        let n = sq[0].len();
        (0..n)
            .map(|i| {
                let line: Vec<f64> = sq.iter().map(|s| s[i]).collect();
                trapezoid(x, &line).max(0.0).sqrt()
            })
            .fold(0.0, f64::max)
    } else {
        let ys: Vec<f64> = sq.iter().zip(spheres).map(|(s, sp)| sp.integrate(s)).collect();
        trapezoid(x, &ys).max(0.0).sqrt()
    }
}

fn pulse_start(slab: &Slab) -> usize {
    slab.grid.ubar_nodes.iter().position(|&v| v >= 0.0).unwrap_or(0)
}

/// Raw norm over an extent, drawing node data from `get`.
fn raw_with(slab: &Slab, kind: NormKind, extent: Extent, get: &dyn Fn(usize, usize) -> Res<Option<Vec<f64>>>) -> Res<Option<f64>> {
    let g = &slab.grid;
    match extent {
        Extent::Sphere { iu, jub } => Ok(get(iu, jub)?.map(|sq| sphere_raw(&sq, &slab.at(iu, jub).sphere, kind))),
        Extent::Outgoing { iu, j_end } => {
            let j0 = pulse_start(slab);
            let mut sq = Vec::new();
            for j in j0..=j_end {
                match get(iu, j)? {
                    Some(v) => sq.push(v),
                    None => return Ok(None),
                }
            }
            let spheres: Vec<&SphereGrid> = (j0..=j_end).map(|j| &slab.at(iu, j).sphere).collect();
            Ok(Some(cone_raw(&g.ubar_nodes[j0..=j_end], &sq, &spheres, kind == NormKind::TraceH)))
        }
        Extent::Incoming { jub, i_end } => {
            let mut sq = Vec::new();
            for i in 0..=i_end {
                match get(i, jub)? {
                    Some(v) => sq.push(v),
                    None => return Ok(None),
                }
            }
            let spheres: Vec<&SphereGrid> = (0..=i_end).map(|i| &slab.at(i, jub).sphere).collect();
            Ok(Some(cone_raw(&g.u_nodes[0..=i_end], &sq, &spheres, kind == NormKind::TraceHb)))
        }
    }
}

/// Raw norm, exponent and weighted value; `None` if derivative data is missing.
pub fn evaluate(spec: &NormSpec, slab: &Slab) -> Res<Option<NormEval>> {
    spec.check(slab)?;
    let get = |i: usize, j: usize| pointwise_sq(slab, spec.field, i, j);
    let Some(raw) = raw_with(slab, spec.kind, spec.extent, &get)? else {
        return Ok(None);
    };
    let exponent = spec.exponent();
    Ok(Some(NormEval { raw, exponent, value: spec.delta.powf(exponent.to_f64()) * raw }))
}

/// delta^{norm_weight} times the raw norm.
pub fn sc_norm(spec: &NormSpec, slab: &Slab) -> Res<NormValue> {
    Ok(match evaluate(spec, slab)? {
        Some(e) => NormValue::Value(e.value),
        None => NormValue::Unavailable(format!("{} needs at least three nodes along the derivative", spec.field.label())),
    })
}

/// Scale-invariant sphere norm of a field of scale `sc` (no slab needed).
pub fn sc_norm_field(f: &HorizontalField, sc: Rational, kind: NormKind, delta: f64) -> Res<f64> {
    if !matches!(kind, NormKind::LpS(p) if p > 0) && kind != NormKind::Linf {
        return Err(NormError::Spec(format!("{} is not a sphere norm", kind.name())));
    }
    let raw = sphere_raw(f.norm_sq().data(), &f.sphere, kind);
    Ok(delta.powf(norm_weight(sc, kind).to_f64()) * raw)
}

/// Per-node squared magnitudes of decorated fields, computed once.
struct Samples<'a> {
    slab: &'a Slab,
    table: HashMap<Decorated, Vec<Option<Vec<f64>>>>,
}

impl<'a> Samples<'a> {
    fn build(slab: &'a Slab, fields: &[Decorated]) -> Res<Self> {
        let g = &slab.grid;
        let nodes: Vec<(usize, usize)> = (0..g.n_u()).flat_map(|i| (0..g.n_ubar()).map(move |j| (i, j))).collect();
        let mut table = HashMap::new();
        for d in fields {
            if table.contains_key(d) {
                continue;
            }
            let vals = nodes
                .par_iter()
                .map(|&(i, j)| if g.ubar_nodes[j] < 0.0 { Ok(None) } else { pointwise_sq(slab, *d, i, j) })
                .collect::<Res<Vec<_>>>()?;
            table.insert(*d, vals);
        }
        Ok(Samples { slab, table })
    }

    fn get(&self, d: Decorated, i: usize, j: usize) -> Res<Option<Vec<f64>>> {
        let n = self.slab.grid.n_ubar();
        Ok(self.table[&d][i * n + j].clone())
    }

    fn weighted(&self, d: Decorated, kind: NormKind, extent: Extent, baseline: Baseline) -> Res<NormValue> {
        let get = |i: usize, j: usize| self.get(d, i, j);
        let delta = self.slab.grid.delta;
        Ok(match raw_with(self.slab, kind, extent, &get)? {
            Some(raw) => NormValue::Value(delta.powf(norm_weight(d.sc(baseline), kind).to_f64()) * raw),
            None => NormValue::Unavailable(format!("{} needs at least three nodes along the derivative", d.label())),
        })
    }
}

/// One summand of a total norm: delta^{anomaly} times a scale-invariant norm.
#[derive(Debug, Clone, Copy)]
struct Term {
    anomaly: f64,
    field: Decorated,
    kind: NormKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Domain {
    Spheres,
    Outgoing,
    Incoming,
}

const PSI: [Comp; 8] = [
    Comp::TrChi,
    Comp::ChiHat,
    Comp::TrChibTilde,
    Comp::ChibHat,
    Comp::Eta,
    Comp::Etab,
    Comp::Omega,
    Comp::Omegab,
];
const PSI4: [Comp; 5] = [Comp::Alpha, Comp::Beta, Comp::Rho, Comp::Sigma, Comp::Betab];
const PSI_G: [Comp; 5] = [Comp::Beta, Comp::Rho, Comp::Sigma, Comp::Betab, Comp::Alphab];
const UPS4: [Comp; 3] = [Comp::AlphaF, Comp::RhoF, Comp::SigmaF];
const UPS_G: [Comp; 3] = [Comp::RhoF, Comp::SigmaF, Comp::AlphabF];

fn is_anomalous(c: Comp) -> bool {
    matches!(c, Comp::ChiHat | Comp::ChibHat)
}

fn plain_terms(comps: &[Comp], f: impl Fn(Decorated) -> Decorated, kind: NormKind, anomaly: f64) -> Vec<Term> {
    comps.iter().map(|c| Term { anomaly, field: f(Decorated::plain(*c)), kind }).collect()
}

/// Term lists of every total norm, keyed by name.
fn total_definitions(delta: f64) -> Vec<(&'static str, Domain, Vec<Term>)> {
    let sd = delta.sqrt();
    let id = |d: Decorated| d;
    let o0p = |p: u32| -> Vec<Term> {
        PSI.iter()
            .map(|c| Term {
                anomaly: if is_anomalous(*c) { delta.powf(1.0 / p as f64) } else { 1.0 },
                field: Decorated::plain(*c),
                kind: NormKind::LpS(p),
            })
            .collect()
    };
    let o02 = o0p(2);
    let o04 = o0p(4);
    let cat = |a: Vec<Term>, b: Vec<Term>| a.into_iter().chain(b).collect::<Vec<_>>();
    vec![
        ("O_0_inf", Domain::Spheres, plain_terms(&PSI, id, NormKind::Linf, 1.0)),
        ("O_0_2", Domain::Spheres, o02),
        ("O_0_4", Domain::Spheres, o04),
        ("O_1_2", Domain::Spheres, plain_terms(&PSI, Decorated::grad, NormKind::LpS(2), 1.0)),
        ("O_1_4", Domain::Spheres, plain_terms(&PSI, Decorated::grad, NormKind::LpS(4), 1.0)),
        ("O_H", Domain::Outgoing, plain_terms(&PSI, |d| d.grad().grad(), NormKind::L2H, 1.0)),
        ("O_Hb", Domain::Incoming, plain_terms(&PSI, |d| d.grad().grad(), NormKind::L2Hb, 1.0)),
        (
            "R_0",
            Domain::Outgoing,
            cat(plain_terms(&[Comp::Alpha], id, NormKind::L2H, sd), plain_terms(&PSI4[1..], id, NormKind::L2H, 1.0)),
        ),
        (
            "R_1",
            Domain::Outgoing,
            cat(
                plain_terms(&[Comp::Alpha], Decorated::nabla4, NormKind::L2H, sd),
                plain_terms(&PSI4, Decorated::grad, NormKind::L2H, 1.0),
            ),
        ),
        (
            "F_0",
            Domain::Outgoing,
            cat(plain_terms(&[Comp::AlphaF], id, NormKind::L2H, sd), plain_terms(&UPS4[1..], id, NormKind::L2H, 1.0)),
        ),
        (
            "F_1",
            Domain::Outgoing,
            cat(
                plain_terms(&[Comp::AlphaF], Decorated::nabla4, NormKind::L2H, sd),
                plain_terms(&UPS4, Decorated::grad, NormKind::L2H, 1.0),
            ),
        ),
        (
            "F_2",
            Domain::Outgoing,
            cat(
                plain_terms(&UPS4, |d| d.nabla4().nabla4(), NormKind::L2H, sd),
                plain_terms(&UPS4, |d| d.grad().grad(), NormKind::L2H, 1.0),
            ),
        ),
        (
            "Rb_0",
            Domain::Incoming,
            cat(plain_terms(&[Comp::Beta], id, NormKind::L2Hb, sd), plain_terms(&PSI_G[1..], id, NormKind::L2Hb, 1.0)),
        ),
        (
            "Rb_1",
            Domain::Incoming,
            cat(
                plain_terms(&[Comp::Alphab], Decorated::nabla3, NormKind::L2Hb, sd),
                plain_terms(&PSI_G, Decorated::grad, NormKind::L2Hb, 1.0),
            ),
        ),
        (
            "Fb_0",
            Domain::Incoming,
            cat(plain_terms(&UPS_G[..2], id, NormKind::L2Hb, sd), plain_terms(&[Comp::AlphabF], id, NormKind::L2Hb, 1.0)),
        ),
        (
            "Fb_1",
            Domain::Incoming,
            cat(
                plain_terms(&[Comp::AlphabF], Decorated::nabla3, NormKind::L2Hb, sd),
                plain_terms(&UPS_G, Decorated::grad, NormKind::L2Hb, 1.0),
            ),
        ),
        (
            "Fb_2",
            Domain::Incoming,
            cat(
                plain_terms(&UPS_G, |d| d.nabla3().nabla3(), NormKind::L2Hb, sd),
                plain_terms(&UPS_G, |d| d.grad().grad(), NormKind::L2Hb, 1.0),
            ),
        ),
    ]
}

/// Names of the totals on outgoing cones and spheres (available from H_0 data).
pub const OUTGOING_TOTALS: [&str; 11] =
    ["O_0_inf", "O_0_2", "O_0_4", "O_1_2", "O_1_4", "O_H", "R_0", "R_1", "F_0", "F_1", "F_2"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NamedNorm {
    pub name: String,
    pub value: NormValue,
}

/// A localized cap norm next to the same norm over whole spheres.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalizedNorm {
    pub name: String,
    pub local: f64,
    pub global: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TotalNorms {
    pub delta: f64,
    pub baseline: Baseline,
    pub norms: Vec<NamedNorm>,
    /// Each summand separately, with its sup over the domain.
    pub terms: Vec<NamedNorm>,
    pub localized: Vec<LocalizedNorm>,
}

impl TotalNorms {
    pub fn get(&self, name: &str) -> Option<&NormValue> {
        self.norms.iter().chain(&self.terms).find(|n| n.name == name).map(|n| &n.value)
    }

    /// Sum of the available outgoing totals (O + R + F on H_u).
    pub fn outgoing_sum(&self) -> f64 {
        OUTGOING_TOTALS.iter().filter_map(|n| self.get(n).and_then(NormValue::value)).sum()
    }

    /// (O + R + F) / I_0; `None` if I_0 vanishes.
    pub fn ratio_to(&self, i0: f64) -> Option<f64> {
        (i0 > 0.0).then(|| self.outgoing_sum() / i0)
    }
}

fn unavailable_incoming() -> NormValue {
    NormValue::Unavailable("needs data on at least two incoming-cone nodes".into())
}

fn domain_value(samples: &Samples, domain: Domain, terms: &[Term], baseline: Baseline) -> Res<NormValue> {
    let g = &samples.slab.grid;
    let j0 = pulse_start(samples.slab);
    let mut best: Option<NormValue> = None;
    let mut push = |v: NormValue| {
        best = Some(match best.take() {
            None => v,
            Some(b) => b.sup(v),
        })
    };
    let sum_at = |extent: Extent| -> Res<NormValue> {
        let mut acc = NormValue::Value(0.0);
        for t in terms {
            let v = samples.weighted(t.field, t.kind, extent, baseline)?;
            acc = acc.plus(match v {
                NormValue::Value(x) => NormValue::Value(t.anomaly * x),
                u => u,
            });
        }
        Ok(acc)
    };
    match domain {
        Domain::Spheres => {
            for iu in 0..g.n_u() {
                for jub in j0..g.n_ubar() {
                    push(sum_at(Extent::Sphere { iu, jub })?);
                }
            }
        }
        // the cone norms grow with the extent, so the far end carries the sup
        Domain::Outgoing => {
            for iu in 0..g.n_u() {
                push(sum_at(Extent::Outgoing { iu, j_end: g.n_ubar() - 1 })?);
            }
        }
        Domain::Incoming => {
            if g.n_u() < 2 {
                return Ok(unavailable_incoming());
            }
            for jub in j0..g.n_ubar() {
                push(sum_at(Extent::Incoming { jub, i_end: g.n_u() - 1 })?);
            }
        }
    }
    Ok(best.unwrap_or(NormValue::Value(0.0)))
}

/// Total norms O, R, F (and the barred ones where the slab supports them).
pub fn total_norms(slab: &Slab, baseline: Baseline) -> Res<TotalNorms> {
    let delta = slab.grid.delta;
    let defs = total_definitions(delta);
    let fields: Vec<Decorated> = defs
        .iter()
        .filter(|(_, d, _)| *d != Domain::Incoming || slab.grid.n_u() >= 2)
        .flat_map(|(_, _, t)| t.iter().map(|t| t.field))
        .collect();
    let samples = Samples::build(slab, &fields)?;
    let mut norms = Vec::new();
    let mut terms = Vec::new();
    for (name, domain, list) in &defs {
        if *domain == Domain::Incoming && slab.grid.n_u() < 2 {
            norms.push(NamedNorm { name: (*name).into(), value: unavailable_incoming() });
            continue;
        }
        norms.push(NamedNorm { name: (*name).into(), value: domain_value(&samples, *domain, list, baseline)? });
        for t in list {
            terms.push(NamedNorm {
                name: format!("{name}[{}]", t.field.label()),
                value: domain_value(&samples, *domain, std::slice::from_ref(t), baseline)?,
            });
        }
    }
    let localized = localized_norms(slab, &samples, baseline)?;
    Ok(TotalNorms { delta, baseline, norms, terms, localized })
}

struct CapPoint {
    weight: f64,
    // lambda rows for spins 0, 1, 2, indexed by lm, and exp(i m phi)
    lam: [Vec<f64>; 3],
    phase: Vec<num_complex::Complex64>,
}

/// A fixed covering of the sphere by geodesic caps.
pub struct CapCover {
    pub centers: Vec<[f64; 3]>,
    pub angular_radius: f64,
    l_max: usize,
    caps: Vec<Vec<CapPoint>>,
}

const CAP_ROWS: usize = 4;
const CAP_COLS: usize = 6;
const CAP_N_RHO: usize = 6;
const CAP_N_PSI: usize = 12;

impl CapCover {
    /// 24 caps centered on quadrature nodes (4 rings by 6 longitudes).
    pub fn new(angular: &AngularGrid, angular_radius: f64) -> Self {
        let a = angular_radius.min(std::f64::consts::PI);
        let mut centers = Vec::new();
        for r in 0..CAP_ROWS {
            let j = (((r as f64 + 0.5) * angular.n_theta as f64 / CAP_ROWS as f64) - 0.5).round() as usize;
            let j = j.min(angular.n_theta - 1);
            for c in 0..CAP_COLS {
                let k = ((c as f64 * angular.n_phi as f64 / CAP_COLS as f64).round() as usize) % angular.n_phi;
                let (t, p) = (angular.theta[j], angular.phi[k]);
                centers.push([t.sin() * p.cos(), t.sin() * p.sin(), t.cos()]);
            }
        }
        let (x, w) = gauss_legendre(CAP_N_RHO);
        let l_max = angular.l_max;
        let caps = centers
            .par_iter()
            .map(|n| {
                // tangent basis at the center
                let helper = if n[2].abs() < 0.9 { [0.0, 0.0, 1.0] } else { [1.0, 0.0, 0.0] };
                let t1 = normalize(cross(helper, *n));
                let t2 = cross(*n, t1);
                let mut pts = Vec::with_capacity(CAP_N_RHO * CAP_N_PSI);
                for (xi, wi) in x.iter().zip(&w) {
                    let rho = 0.5 * a * (xi + 1.0);
                    let wr = 0.5 * a * wi * rho.sin();
                    for q in 0..CAP_N_PSI {
                        let psi = 2.0 * std::f64::consts::PI * q as f64 / CAP_N_PSI as f64;
                        let (s, c) = (rho.sin(), rho.cos());
                        let p: [f64; 3] =
                            std::array::from_fn(|d| c * n[d] + s * (psi.cos() * t1[d] + psi.sin() * t2[d]));
                        let theta = p[2].clamp(-1.0, 1.0).acos();
                        let phi = p[1].atan2(p[0]);
                        let lam = std::array::from_fn(|spin| {
                            let mut row = vec![0.0; (l_max + 1) * (l_max + 1)];
                            for l in 0..=l_max {
                                for m in -(l as i64)..=(l as i64) {
                                    row[lm_index(l, m)] = swsh_lambda(spin as i32, l, m, theta);
                                }
                            }
                            row
                        });
                        let phase = (0..=2 * l_max)
                            .map(|mi| num_complex::Complex64::from_polar(1.0, (mi as f64 - l_max as f64) * phi))
                            .collect();
                        pts.push(CapPoint { weight: wr * 2.0 * std::f64::consts::PI / CAP_N_PSI as f64, lam, phase });
                    }
                }
                pts
            })
            .collect();
        CapCover { centers, angular_radius: a, l_max, caps }
    }

    pub fn n_caps(&self) -> usize {
        self.caps.len()
    }

    /// Unit-sphere solid angle of each cap by quadrature.
    pub fn solid_angles(&self) -> Vec<f64> {
        self.caps.iter().map(|c| c.iter().map(|p| p.weight).sum()).collect()
    }

    /// |f|^2 at the quadrature points of every cap.
    pub fn values_sq(&self, f: &HorizontalField) -> Res<Vec<Vec<f64>>> {
        if f.sphere.l_max() != self.l_max {
            return Err(NormError::Spec("cap cover built for another band limit".into()));
        }
        let c = spectral_coeffs(f)?;
        let spin = c.spin as usize;
        let factor = f.rank.complex_norm_factor();
        let lm = self.l_max as i64;
        Ok(self
            .caps
            .iter()
            .map(|cap| {
                cap.iter()
                    .map(|p| {
                        let mut z = num_complex::Complex64::new(0.0, 0.0);
                        for l in spin..=self.l_max {
                            for m in -(l as i64)..=(l as i64) {
                                let idx = lm_index(l, m);
                                z += c.data[idx] * p.lam[spin][idx] * p.phase[(m + lm) as usize];
                            }
                        }
                        factor * z.norm_sqr()
                    })
                    .collect()
            })
            .collect())
    }

    /// Unit-sphere integrals of g(|f|^2) over each cap.
    fn cap_integrals(&self, sq: &[Vec<f64>], g: impl Fn(f64) -> f64) -> Vec<f64> {
        self.caps
            .iter()
            .zip(sq)
            .map(|(cap, v)| cap.iter().zip(v).map(|(p, s)| p.weight * g(*s)).sum())
            .collect()
    }
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn normalize(a: [f64; 3]) -> [f64; 3] {
    let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

/// Cap L^4 norms of chi_hat, chib_hat and cap L^2(H) norms of alpha, alpha_F.
/// Discs of geodesic radius delta^{1/2} on S_{u,0} are carried along the
/// generators, so the angular radius is fixed per cone.
fn localized_norms(slab: &Slab, samples: &Samples, baseline: Baseline) -> Res<Vec<LocalizedNorm>> {
    let g = &slab.grid;
    let delta = g.delta;
    let j0 = pulse_start(slab);
    let mut out = Vec::new();
    let mut sphere_local = [(Comp::ChiHat, 0.0f64, 0.0f64), (Comp::ChibHat, 0.0, 0.0)];
    let mut cone_local = [(Comp::Alpha, 0.0f64, 0.0f64), (Comp::AlphaF, 0.0, 0.0)];
    for iu in 0..g.n_u() {
        let r_start = g.radius(g.u_nodes[iu], 0.0);
        let cover = CapCover::new(&slab.sphere().angular.clone(), delta.sqrt() / r_start);
        for entry in sphere_local.iter_mut() {
            let d = Decorated::plain(entry.0);
            let w = delta.powf(norm_weight(d.sc(baseline), NormKind::LpS(4)).to_f64());
            for jub in j0..g.n_ubar() {
                let snap = slab.at(iu, jub);
                let f = snap.deviation(entry.0)?;
                let r2 = snap.radius().powi(2);
                let caps = cover.cap_integrals(&cover.values_sq(&f)?, |s| s * s);
                let local = caps.iter().fold(0.0f64, |m, v| m.max(*v));
                entry.1 = entry.1.max(w * (r2 * local).max(0.0).powf(0.25));
                if let Some(v) = samples.weighted(d, NormKind::LpS(4), Extent::Sphere { iu, jub }, baseline)?.value() {
                    entry.2 = entry.2.max(v);
                }
            }
        }
        for entry in cone_local.iter_mut() {
            let d = Decorated::plain(entry.0);
            let w = delta.powf(norm_weight(d.sc(baseline), NormKind::L2H).to_f64());
            let mut per_node = Vec::new();
            for jub in j0..g.n_ubar() {
                let snap = slab.at(iu, jub);
                let f = snap.deviation(entry.0)?;
                let r2 = snap.radius().powi(2);
                let caps = cover.cap_integrals(&cover.values_sq(&f)?, |s| s);
                per_node.push(caps.into_iter().map(|v| r2 * v).collect::<Vec<_>>());
            }
            let x = &g.ubar_nodes[j0..];
            let local = (0..cover.n_caps())
                .map(|c| {
                    let ys: Vec<f64> = per_node.iter().map(|v| v[c]).collect();
                    trapezoid(x, &ys).max(0.0).sqrt()
                })
                .fold(0.0, f64::max);
            entry.1 = entry.1.max(w * local);
            let ext = Extent::Outgoing { iu, j_end: g.n_ubar() - 1 };
            if let Some(v) = samples.weighted(d, NormKind::L2H, ext, baseline)?.value() {
                entry.2 = entry.2.max(v);
            }
        }
    }
    for (c, local, global) in sphere_local {
        out.push(LocalizedNorm { name: format!("O_0_4^delta[{}]", c.name()), local, global });
    }
    for (c, local, global) in cone_local {
        let prefix = if c == Comp::Alpha { "R_0" } else { "F_0" };
        out.push(LocalizedNorm { name: format!("{prefix}^delta[{}]", c.name()), local, global });
    }
    Ok(out)
}

/// Raw (unweighted) sup over pulse nodes of |comp|.
pub fn raw_linf(slab: &Slab, comp: Comp) -> Res<f64> {
    let j0 = pulse_start(slab);
    let mut m = 0.0f64;
    for iu in 0..slab.grid.n_u() {
        for jub in j0..slab.grid.n_ubar() {
            m = slab.at(iu, jub).deviation(comp)?.magnitude().into_iter().fold(m, f64::max);
        }
    }
    Ok(m)
}

/// Norms of one solved cone, ready for the scaling table.
#[derive(Debug, Clone, Serialize)]
pub struct ConeNorms {
    pub delta: f64,
    pub i0: f64,
    pub epsilon: NormValue,
    pub totals: TotalNorms,
    pub raw_linf_alpha_f: f64,
    pub raw_linf_chi_hat: f64,
    pub ratio: Option<f64>,
}

impl ConeNorms {
    /// Flat (name, value) list used by the scaling study.
    pub fn entries(&self) -> Vec<(String, NormValue)> {
        let mut v = vec![("I_0".to_string(), NormValue::Value(self.i0)), ("epsilon".to_string(), self.epsilon.clone())];
        v.extend(self.totals.norms.iter().map(|n| (n.name.clone(), n.value.clone())));
        v.extend(self.totals.localized.iter().map(|n| (n.name.clone(), NormValue::Value(n.local))));
        v.push(("raw_linf_alpha_f".into(), NormValue::Value(self.raw_linf_alpha_f)));
        v.push(("raw_linf_chi_hat".into(), NormValue::Value(self.raw_linf_chi_hat)));
        v
    }
}

/// Solve H_0 for `cfg` and evaluate every norm on it.
pub fn cone_norms(cfg: &ShortPulseConfig, opts: ChaseOptions, baseline: Baseline) -> Res<ConeNorms> {
    let solver = |e: IdataError| NormError::Solver { delta: cfg.delta, source: e };
    let sol = build_h0(cfg, opts).map_err(solver)?;
    let i0 = compute_i0(&sol).map_err(solver)?.total;
    let epsilon = match compute_epsilon_norm(&sol) {
        Ok(v) => NormValue::Value(v),
        Err(IdataError::Config(m)) => NormValue::Unavailable(m),
        Err(e) => return Err(solver(e)),
    };
    let totals = total_norms(&sol.slab, baseline)?;
    let ratio = totals.ratio_to(i0);
    Ok(ConeNorms {
        delta: cfg.delta,
        i0,
        epsilon,
        raw_linf_alpha_f: raw_linf(&sol.slab, Comp::AlphaF)?,
        raw_linf_chi_hat: raw_linf(&sol.slab, Comp::ChiHat)?,
        totals,
        ratio,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Fitted,
    /// Some value is zero, so the log-log slope is undefined.
    Degenerate,
    Unavailable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub delta: f64,
    pub norm: String,
    pub value: NormValue,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingFit {
    pub norm: String,
    pub slope: Option<f64>,
    pub status: FitStatus,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingStudy {
    pub deltas: Vec<f64>,
    pub rows: Vec<ScalingRow>,
    pub fits: Vec<ScalingFit>,
    pub cones: Vec<ConeNorms>,
}

impl ScalingStudy {
    pub fn fit(&self, norm: &str) -> Option<&ScalingFit> {
        self.fits.iter().find(|f| f.norm == norm)
    }

    pub fn value(&self, delta: f64, norm: &str) -> Option<&NormValue> {
        self.rows.iter().find(|r| r.delta == delta && r.norm == norm).map(|r| &r.value)
    }
}

/// Least-squares slope of ln y against ln x.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 || x.len() != y.len() || x.iter().chain(y).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    Some(sxy / sxx)
}

/// Solve the family `base` with each delta and fit log-log slopes.
pub fn scaling_study(base: &ShortPulseConfig, deltas: &[f64], opts: ChaseOptions, baseline: Baseline) -> Res<ScalingStudy> {
    if deltas.len() < 3 {
        return Err(NormError::Study(format!("need at least 3 delta values, got {}", deltas.len())));
    }
    let cones = deltas
        .par_iter()
        .map(|&d| {
            let mut cfg = base.clone();
            cfg.delta = d;
            cone_norms(&cfg, opts, baseline)
        })
        .collect::<Res<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut names: Vec<String> = Vec::new();
    for c in &cones {
        for (name, value) in c.entries() {
            if !names.contains(&name) {
                names.push(name.clone());
            }
            rows.push(ScalingRow { delta: c.delta, norm: name, value });
        }
    }
    let fits = names
        .iter()
        .map(|name| {
            let vals: Vec<&NormValue> = rows.iter().filter(|r| &r.norm == name).map(|r| &r.value).collect();
            let nums: Option<Vec<f64>> = vals.iter().map(|v| v.value()).collect();
            let (slope, status) = match nums {
                None => (None, FitStatus::Unavailable),
                Some(ys) => match loglog_slope(deltas, &ys) {
                    Some(s) => (Some(s), FitStatus::Fitted),
                    None => (None, FitStatus::Degenerate),
                },
            };
            ScalingFit { norm: name.clone(), slope, status }
        })
        .collect();
    Ok(ScalingStudy { deltas: deltas.to_vec(), rows, fits, cones })
}

/// Long-format table: delta, norm, value.
pub fn write_scaling_csv<W: Write>(study: &ScalingStudy, out: W) -> Res<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["delta", "norm", "value"])?;
    for r in &study.rows {
        w.write_record([format!("{:e}", r.delta), r.norm.clone(), r.value.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Slope table: norm, slope, status.
pub fn write_fit_csv<W: Write>(study: &ScalingStudy, out: W) -> Res<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["norm", "slope", "status"])?;
    for f in &study.fits {
        let slope = f.slope.map(|s| format!("{s:.6}")).unwrap_or_default();
        let status = serde_json::to_value(f.status).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        w.write_record([f.norm.clone(), slope, status])?;
    }
    w.flush()?;
    Ok(())
}

/// Totals, terms and localized norms: name, value (and global for caps).
pub fn write_norms_csv<W: Write>(t: &TotalNorms, out: W) -> Res<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["norm", "value", "global"])?;
    for n in t.norms.iter().chain(&t.terms) {
        w.write_record([n.name.clone(), n.value.to_string(), String::new()])?;
    }
    for l in &t.localized {
        w.write_record([l.name.clone(), format!("{:.12e}", l.local), format!("{:.12e}", l.global)])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::null_state::DoubleNullGrid;

    fn flat_cone(delta: f64) -> Slab {
        let g = DoubleNullGrid::uniform(10.0, delta, 0.0, 1, 9, 2).unwrap();
        let s = SphereGrid::new(6, 10.0).unwrap();
        Slab::minkowski(&g, &s).unwrap()
    }

    #[test]
    fn flat_totals_vanish() {
        let slab = flat_cone(1e-2);
        let t = total_norms(&slab, Baseline::Half).unwrap();
        for n in t.norms.iter().filter(|n| OUTGOING_TOTALS.contains(&n.name.as_str())) {
            assert_eq!(n.value.value(), Some(0.0), "{}", n.name);
        }
        assert!(!t.get("Rb_0").unwrap().is_available());
        for l in &t.localized {
            assert_eq!((l.local, l.global), (0.0, 0.0));
        }
    }

    #[test]
    fn constant_field_unit_area() {
        let r = 0.5 / std::f64::consts::PI.sqrt();
        let s = SphereGrid::new(4, r).unwrap();
        let f = HorizontalField::constant_scalar(-1.7, &s);
        let v = sc_norm_field(&f, Rational::half(-1), NormKind::LpS(2), 1e-3).unwrap();
        assert!((v - 1.7).abs() < 1e-12);
    }

    #[test]
    fn cap_solid_angle_matches_area() {
        let s = SphereGrid::new(8, 1.0).unwrap();
        let a = 0.05;
        let cover = CapCover::new(&s.angular, a);
        assert_eq!(cover.n_caps(), 24);
        let exact = 2.0 * std::f64::consts::PI * (1.0 - a.cos());
        for w in cover.solid_angles() {
            assert!((w - exact).abs() < 1e-12 * exact);
        }
    }

    #[test]
    fn slope_of_power_law() {
        let x = [1e-2, 1e-3, 1e-4];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-0.5)).collect();
        assert!((loglog_slope(&x, &y).unwrap() + 0.5).abs() < 1e-12);
        assert!(loglog_slope(&x, &[1.0, 0.0, 1.0]).is_none());
    }
}
