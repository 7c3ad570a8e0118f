//! Data model for a double-null slab: the (u, ubar) grid and the complete
//! component set on each sphere.

mod io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sphere_ops::{HorizontalField, Rank, SphereError, SphereGrid};

pub use io::{csv_values, read_slab, slab_to_csv, write_slab, ComponentInfo, SlabHeader, SLAB_MAGIC};

#[derive(Debug, Error)]
pub enum StateError {
    #[error("non-positive sphere radius r = {0} at (u, ubar) = ({1}, {2})")]
    NonPositiveRadius(f64, f64, f64),
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("component {0} is derived and cannot be stored")]
    Derived(&'static str),
    #[error("unknown component `{0}`")]
    UnknownComponent(String),
    #[error(transparent)]
    Sphere(#[from] SphereError),
    #[error("slab file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Every named horizontal component known to the toolkit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comp {
    TrChi,
    ChiHat,
    TrChibTilde,
    ChibHat,
    Eta,
    Etab,
    Zeta,
    Omega,
    Omegab,
    OmegaDag,
    OmegabDag,
    Alpha,
    Beta,
    Rho,
    Sigma,
    Betab,
    Alphab,
    AlphaF,
    RhoF,
    SigmaF,
    AlphabF,
    Lapse,
    GaussK,
    /// Rotation vector fields; not part of a snapshot.
    RotO,
}

/// Stored components in canonical file order.
pub const STORED: [Comp; 22] = [
    Comp::TrChi,
    Comp::ChiHat,
    Comp::TrChibTilde,
    Comp::ChibHat,
    Comp::Eta,
    Comp::Etab,
    Comp::Omega,
    Comp::Omegab,
    Comp::OmegaDag,
    Comp::OmegabDag,
    Comp::Alpha,
    Comp::Beta,
    Comp::Rho,
    Comp::Sigma,
    Comp::Betab,
    Comp::Alphab,
    Comp::AlphaF,
    Comp::RhoF,
    Comp::SigmaF,
    Comp::AlphabF,
    Comp::Lapse,
    Comp::GaussK,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Connection,
    Weyl,
    Maxwell,
    Metric,
}

impl Comp {
    pub fn rank(self) -> Rank {
        use Comp::*;
        match self {
            TrChi | TrChibTilde | Omega | Omegab | OmegaDag | OmegabDag | Rho | Sigma | RhoF
            | SigmaF | Lapse | GaussK => Rank::Scalar,
            ChiHat | ChibHat | Alpha | Alphab => Rank::Sym2Traceless,
            Eta | Etab | Zeta | Beta | Betab | AlphaF | AlphabF | RotO => Rank::OneForm,
        }
    }

    pub fn family(self) -> Family {
        use Comp::*;
        match self {
            Alpha | Beta | Rho | Sigma | Betab | Alphab => Family::Weyl,
            AlphaF | RhoF | SigmaF | AlphabF => Family::Maxwell,
            Lapse | GaussK | RotO => Family::Metric,
            _ => Family::Connection,
        }
    }

    pub fn name(self) -> &'static str {
        use Comp::*;
        match self {
            TrChi => "trchi",
            ChiHat => "chihat",
            TrChibTilde => "trchib_tilde",
            ChibHat => "chibhat",
            Eta => "eta",
            Etab => "etab",
            Zeta => "zeta",
            Omega => "omega",
            Omegab => "omegab",
            OmegaDag => "omega_dag",
            OmegabDag => "omegab_dag",
            Alpha => "alpha",
            Beta => "beta",
            Rho => "rho",
            Sigma => "sigma",
            Betab => "betab",
            Alphab => "alphab",
            AlphaF => "alpha_f",
            RhoF => "rho_f",
            SigmaF => "sigma_f",
            AlphabF => "alphab_f",
            Lapse => "lapse",
            GaussK => "gauss_k",
            RotO => "rot_o",
        }
    }

    pub fn from_name(s: &str) -> Result<Comp, StateError> {
        STORED
            .iter()
            .chain([Comp::Zeta, Comp::RotO].iter())
            .find(|c| c.name() == s)
            .copied()
            .ok_or_else(|| StateError::UnknownComponent(s.to_string()))
    }

    /// Physical dimension in geometric units.
    pub fn units(self) -> &'static str {
        match self.family() {
            Family::Connection => "1/length",
            Family::Weyl => "1/length^2",
            Family::Maxwell => "1/length",
            Family::Metric => match self {
                Comp::GaussK => "1/length^2",
                Comp::RotO => "length",
                _ => "dimensionless",
            },
        }
    }
}

/// Grid of a double-null slab.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoubleNullGrid {
    pub u_nodes: Vec<f64>,
    pub ubar_nodes: Vec<f64>,
    pub r0: f64,
    pub delta: f64,
}

impl DoubleNullGrid {
    pub fn new(u_nodes: Vec<f64>, ubar_nodes: Vec<f64>, r0: f64, delta: f64) -> Result<Self, StateError> {
        let g = DoubleNullGrid { u_nodes, ubar_nodes, r0, delta };
        g.check()?;
        Ok(g)
    }

    /// Uniform grid: `n_u` nodes on [0, u_max], `n_pulse` nodes on [0, delta]
    /// preceded by `n_flat` flat-region nodes at the same spacing.
    pub fn uniform(r0: f64, delta: f64, u_max: f64, n_u: usize, n_pulse: usize, n_flat: usize) -> Result<Self, StateError> {
        if n_pulse < 2 {
            return Err(StateError::Grid("need at least two ubar nodes across the pulse".into()));
        }
        let h = delta / (n_pulse - 1) as f64;
        let ubar: Vec<f64> = (0..n_flat + n_pulse)
            .map(|j| (j as f64 - n_flat as f64) * h)
            .collect();
        let u: Vec<f64> = if n_u <= 1 {
            vec![0.0]
        } else {
            (0..n_u).map(|i| u_max * i as f64 / (n_u - 1) as f64).collect()
        };
        DoubleNullGrid::new(u, ubar, r0, delta)
    }

    fn check(&self) -> Result<(), StateError> {
        if !(self.delta > 0.0) {
            return Err(StateError::Grid(format!("pulse width must be positive, got {}", self.delta)));
        }
        if self.delta > 1.0f64.min(self.r0 / 10.0) + 1e-15 {
            return Err(StateError::Grid(format!(
                "pulse width {} exceeds min(1, r0/10) = {}",
                self.delta,
                1.0f64.min(self.r0 / 10.0)
            )));
        }
        for w in [&self.u_nodes, &self.ubar_nodes] {
            if w.is_empty() || w.windows(2).any(|p| !(p[1] > p[0])) {
                return Err(StateError::Grid("nodes must be strictly increasing".into()));
            }
        }
        if self.u_nodes[0] < 0.0 {
            return Err(StateError::Grid("u nodes must start at or after 0".into()));
        }
        if self.ubar_nodes[0] > 0.0 {
            return Err(StateError::Grid("ubar nodes must start at or before 0".into()));
        }
        if *self.ubar_nodes.last().unwrap() > self.delta * (1.0 + 1e-12) {
            return Err(StateError::Grid("ubar nodes extend past delta".into()));
        }
        for &u in &self.u_nodes {
            for &ub in &self.ubar_nodes {
                let r = self.radius(u, ub);
                if !(r > 0.0) {
                    return Err(StateError::NonPositiveRadius(r, u, ub));
                }
            }
        }
        Ok(())
    }

    pub fn radius(&self, u: f64, ubar: f64) -> f64 {
        self.r0 + ubar - u
    }

    pub fn is_flat(&self, ubar: f64) -> bool {
        ubar <= 0.0
    }

    pub fn n_u(&self) -> usize {
        self.u_nodes.len()
    }

    pub fn n_ubar(&self) -> usize {
        self.ubar_nodes.len()
    }
}

#[derive(Debug, Clone)]
pub struct ConnectionCoeffs {
    pub trchi: HorizontalField,
    pub chihat: HorizontalField,
    /// trchib + 2/r.
    pub trchib_tilde: HorizontalField,
    pub chibhat: HorizontalField,
    pub eta: HorizontalField,
    pub etab: HorizontalField,
    pub omega: HorizontalField,
    pub omegab: HorizontalField,
    pub omega_dag: HorizontalField,
    pub omegab_dag: HorizontalField,
}

impl ConnectionCoeffs {
    /// zeta = (eta - etab) / 2.
    pub fn zeta(&self) -> HorizontalField {
        (&self.eta - &self.etab).scale(0.5)
    }
}

#[derive(Debug, Clone)]
pub struct WeylComponents {
    pub alpha: HorizontalField,
    pub beta: HorizontalField,
    pub rho: HorizontalField,
    pub sigma: HorizontalField,
    pub betab: HorizontalField,
    pub alphab: HorizontalField,
}

#[derive(Debug, Clone)]
pub struct MaxwellComponents {
    pub alpha_f: HorizontalField,
    pub rho_f: HorizontalField,
    pub sigma_f: HorizontalField,
    pub alphab_f: HorizontalField,
}

impl MaxwellComponents {
    pub fn zeros(sphere: &SphereGrid) -> Self {
        MaxwellComponents {
            alpha_f: HorizontalField::zeros(Rank::OneForm, sphere),
            rho_f: HorizontalField::zeros(Rank::Scalar, sphere),
            sigma_f: HorizontalField::zeros(Rank::Scalar, sphere),
            alphab_f: HorizontalField::zeros(Rank::OneForm, sphere),
        }
    }
}

impl WeylComponents {
    pub fn zeros(sphere: &SphereGrid) -> Self {
        WeylComponents {
            alpha: HorizontalField::zeros(Rank::Sym2Traceless, sphere),
            beta: HorizontalField::zeros(Rank::OneForm, sphere),
            rho: HorizontalField::zeros(Rank::Scalar, sphere),
            sigma: HorizontalField::zeros(Rank::Scalar, sphere),
            betab: HorizontalField::zeros(Rank::OneForm, sphere),
            alphab: HorizontalField::zeros(Rank::Sym2Traceless, sphere),
        }
    }
}

/// The full component set on one sphere S_{u, ubar}.
#[derive(Debug, Clone)]
pub struct FieldSnapshot {
    pub u: f64,
    pub ubar: f64,
    pub sphere: SphereGrid,
    pub coeffs: ConnectionCoeffs,
    pub weyl: WeylComponents,
    pub maxwell: MaxwellComponents,
    pub lapse: HorizontalField,
    pub gauss_k: HorizontalField,
}

/// One invariant violation found by [`validate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub kind: String,
    pub component: String,
    pub detail: String,
}

impl FieldSnapshot {
    pub fn radius(&self) -> f64 {
        self.sphere.radius
    }

    /// trchib itself (stored value minus 2/r).
    pub fn trchib(&self) -> HorizontalField {
        self.coeffs.trchib_tilde.map(|v| v - 2.0 / self.sphere.radius)
    }

    pub fn get(&self, c: Comp) -> Option<&HorizontalField> {
        use Comp::*;
        let k = &self.coeffs;
        let w = &self.weyl;
        let m = &self.maxwell;
        Some(match c {
            TrChi => &k.trchi,
            ChiHat => &k.chihat,
            TrChibTilde => &k.trchib_tilde,
            ChibHat => &k.chibhat,
            Eta => &k.eta,
            Etab => &k.etab,
            Omega => &k.omega,
            Omegab => &k.omegab,
            OmegaDag => &k.omega_dag,
            OmegabDag => &k.omegab_dag,
            Alpha => &w.alpha,
            Beta => &w.beta,
            Rho => &w.rho,
            Sigma => &w.sigma,
            Betab => &w.betab,
            Alphab => &w.alphab,
            AlphaF => &m.alpha_f,
            RhoF => &m.rho_f,
            SigmaF => &m.sigma_f,
            AlphabF => &m.alphab_f,
            Lapse => &self.lapse,
            GaussK => &self.gauss_k,
            Zeta | RotO => return None,
        })
    }

    pub fn get_mut(&mut self, c: Comp) -> Option<&mut HorizontalField> {
        use Comp::*;
        let k = &mut self.coeffs;
        let w = &mut self.weyl;
        let m = &mut self.maxwell;
        Some(match c {
            TrChi => &mut k.trchi,
            ChiHat => &mut k.chihat,
            TrChibTilde => &mut k.trchib_tilde,
            ChibHat => &mut k.chibhat,
            Eta => &mut k.eta,
            Etab => &mut k.etab,
            Omega => &mut k.omega,
            Omegab => &mut k.omegab,
            OmegaDag => &mut k.omega_dag,
            OmegabDag => &mut k.omegab_dag,
            Alpha => &mut w.alpha,
            Beta => &mut w.beta,
            Rho => &mut w.rho,
            Sigma => &mut w.sigma,
            Betab => &mut w.betab,
            Alphab => &mut w.alphab,
            AlphaF => &mut m.alpha_f,
            RhoF => &mut m.rho_f,
            SigmaF => &mut m.sigma_f,
            AlphabF => &mut m.alphab_f,
            Lapse => &mut self.lapse,
            GaussK => &mut self.gauss_k,
            Zeta | RotO => return None,
        })
    }

    /// Owned copy of any component, including derived ones.
    pub fn field(&self, c: Comp) -> Result<HorizontalField, StateError> {
        match c {
            Comp::Zeta => Ok(self.coeffs.zeta()),
            Comp::RotO => Err(StateError::Derived("rot_o")),
            _ => Ok(self.get(c).expect("stored component").clone()),
        }
    }

    pub fn set(&mut self, c: Comp, f: HorizontalField) -> Result<(), StateError> {
        if f.rank != c.rank() {
            return Err(StateError::Sphere(SphereError::Rank { expected: c.rank(), got: f.rank }));
        }
        match self.get_mut(c) {
            Some(slot) => {
                *slot = f;
                Ok(())
            }
            None => Err(StateError::Derived(c.name())),
        }
    }

    /// Deviation of a component from its flat-cone value.
    pub fn deviation(&self, c: Comp) -> Result<HorizontalField, StateError> {
        let f = self.field(c)?;
        let r = self.sphere.radius;
        Ok(match c {
            Comp::TrChi => f.map(|v| v - 2.0 / r),
            Comp::Lapse => f.map(|v| v - 1.0),
            Comp::GaussK => f.map(|v| v - 1.0 / (r * r)),
            _ => f,
        })
    }
}

/// Flat value of a component on a sphere of radius r (scalars only carry a
/// nonzero background).
pub fn flat_value(c: Comp, r: f64) -> f64 {
    match c {
        Comp::TrChi => 2.0 / r,
        Comp::Lapse => 1.0,
        Comp::GaussK => 1.0 / (r * r),
        _ => 0.0,
    }
}

/// d/dr of the flat value.
pub fn flat_value_dr(c: Comp, r: f64) -> f64 {
    match c {
        Comp::TrChi => -2.0 / (r * r),
        Comp::GaussK => -2.0 / (r * r * r),
        _ => 0.0,
    }
}

/// Exact flat light-cone snapshot of Minkowski space.
pub fn minkowski_snapshot(u: f64, ubar: f64, r0: f64, sphere: &SphereGrid) -> Result<FieldSnapshot, StateError> {
    let r = r0 + ubar - u;
    if !(r > 0.0) {
        return Err(StateError::NonPositiveRadius(r, u, ubar));
    }
    let s = sphere.with_radius(r)?;
    let z = |rank| HorizontalField::zeros(rank, &s);
    Ok(FieldSnapshot {
        u,
        ubar,
        coeffs: ConnectionCoeffs {
            trchi: HorizontalField::constant_scalar(2.0 / r, &s),
            chihat: z(Rank::Sym2Traceless),
            trchib_tilde: z(Rank::Scalar),
            chibhat: z(Rank::Sym2Traceless),
            eta: z(Rank::OneForm),
            etab: z(Rank::OneForm),
            omega: z(Rank::Scalar),
            omegab: z(Rank::Scalar),
            omega_dag: z(Rank::Scalar),
            omegab_dag: z(Rank::Scalar),
        },
        weyl: WeylComponents::zeros(&s),
        maxwell: MaxwellComponents::zeros(&s),
        lapse: HorizontalField::constant_scalar(1.0, &s),
        gauss_k: HorizontalField::constant_scalar(1.0 / (r * r), &s),
        sphere: s,
    })
}

/// Check the snapshot's type invariants.
pub fn validate(snap: &FieldSnapshot) -> Vec<Violation> {
    let mut out = Vec::new();
    for c in STORED {
        let f = snap.get(c).expect("stored");
        if !f.is_finite() {
            out.push(Violation {
                kind: "non_finite".into(),
                component: c.name().into(),
                detail: "NaN or infinite value".into(),
            });
        }
        if f.rank != c.rank() {
            if c.rank() == Rank::Sym2Traceless {
                if let Some(v) = trace_violation(c, f) {
                    out.push(v);
                    continue;
                }
            }
            out.push(Violation {
                kind: "rank".into(),
                component: c.name().into(),
                detail: format!("stored as {}", f.rank.name()),
            });
        }
    }
    let (lo, hi) = snap
        .lapse
        .data()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    if lo < 0.25 || hi > 4.0 {
        out.push(Violation {
            kind: "lapse_range".into(),
            component: "lapse".into(),
            detail: format!("lapse in [{lo}, {hi}], outside [1/4, 4]"),
        });
    }
    if snap.ubar <= 0.0 {
        let mink = minkowski_snapshot(snap.u, snap.ubar, snap.u + snap.radius() - snap.ubar, &snap.sphere);
        if let Ok(m) = mink {
            for c in STORED {
                let d = (snap.get(c).unwrap() - m.get(c).unwrap()).max_abs();
                if d > 1e-12 {
                    out.push(Violation {
                        kind: "flat_region".into(),
                        component: c.name().into(),
                        detail: format!("deviates from the flat value by {d:e}"),
                    });
                }
            }
        }
    }
    out
}

/// Check that a general symmetric field is trace free to 1e-12 relative.
pub fn trace_violation(c: Comp, f: &HorizontalField) -> Option<Violation> {
    if f.rank != Rank::Sym2 {
        return None;
    }
    let tr = f.trace().max_abs();
    let mag = f.max_abs().max(f64::MIN_POSITIVE);
    (tr > 1e-12 * mag).then(|| Violation {
        kind: "trace".into(),
        component: c.name().into(),
        detail: format!("trace {tr:e} on a traceless component"),
    })
}

/// Snapshots on a double-null grid, stored row-major in (u, ubar).
#[derive(Debug, Clone)]
pub struct Slab {
    pub grid: DoubleNullGrid,
    pub snaps: Vec<FieldSnapshot>,
}

impl Slab {
    pub fn at(&self, iu: usize, jub: usize) -> &FieldSnapshot {
        &self.snaps[iu * self.grid.n_ubar() + jub]
    }

    pub fn at_mut(&mut self, iu: usize, jub: usize) -> &mut FieldSnapshot {
        let n = self.grid.n_ubar();
        &mut self.snaps[iu * n + jub]
    }

    /// Minkowski values on every node of the grid.
    pub fn minkowski(grid: &DoubleNullGrid, sphere: &SphereGrid) -> Result<Slab, StateError> {
        let mut snaps = Vec::with_capacity(grid.n_u() * grid.n_ubar());
        for &u in &grid.u_nodes {
            for &ub in &grid.ubar_nodes {
                snaps.push(minkowski_snapshot(u, ub, grid.r0, sphere)?);
            }
        }
        Ok(Slab { grid: grid.clone(), snaps })
    }

    pub fn sphere(&self) -> &SphereGrid {
        &self.snaps[0].sphere
    }
}
