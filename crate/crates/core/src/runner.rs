//! Subcommand drivers: each runs one experiment from a resolved config,
//! writes its artifacts into the output directory and returns an exit code.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::currents::{self, Multiplier};
use crate::eqreg::{self, EqError};
use crate::formation::{self, FormationError, Verdict};
use crate::idata::{self, ConstraintSolution, IdataError};
use crate::normsuite::{self, NormError};
use crate::null_state::{self, DoubleNullGrid, Slab, StateError};
use crate::sigcalc::Baseline;
use crate::sphere_ops::{SphereError, SphereGrid};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NONCONVERGENCE: i32 = 3;
pub const EXIT_INVARIANT: i32 = 4;
pub const EXIT_TRAPPED: i32 = 10;
pub const EXIT_NOT_TRAPPED: i32 = 11;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("constraint chase did not converge: {0}")]
    NonConvergence(IdataError),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Idata(IdataError),
    #[error(transparent)]
    Formation(#[from] FormationError),
    #[error(transparent)]
    Norm(#[from] NormError),
    #[error(transparent)]
    Eq(#[from] EqError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Sphere(#[from] SphereError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl From<IdataError> for RunError {
    fn from(e: IdataError) -> Self {
        match e {
            IdataError::NonConvergence { .. } => RunError::NonConvergence(e),
            IdataError::Config(_) => RunError::Config(ConfigError::Invalid(e.to_string())),
            other => RunError::Idata(other),
        }
    }
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => EXIT_CONFIG,
            RunError::NonConvergence(_) => EXIT_NONCONVERGENCE,
            RunError::Invariant(_) => EXIT_INVARIANT,
            RunError::Norm(NormError::Solver { source: IdataError::NonConvergence { .. }, .. }) => EXIT_NONCONVERGENCE,
            _ => EXIT_FAILURE,
        }
    }
}

type Res<T> = Result<T, RunError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    GenData,
    SolveH0,
    EvolveFormation,
    Norms,
    ScalingStudy,
    Residuals,
    CheckBalance,
    Report,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::GenData => "gen-data",
            Subcommand::SolveH0 => "solve-h0",
            Subcommand::EvolveFormation => "evolve-formation",
            Subcommand::Norms => "norms",
            Subcommand::ScalingStudy => "scaling-study",
            Subcommand::Residuals => "residuals",
            Subcommand::CheckBalance => "check-balance",
            Subcommand::Report => "report",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Outcome {
    pub exit_code: i32,
    pub artifacts: Vec<String>,
    pub summary: String,
}

/// Artifact writer for one run; records file names and stage timings.
struct Run<'a> {
    out: &'a Path,
    cfg: &'a RunConfig,
    artifacts: Vec<String>,
    timings: Vec<(String, f64)>,
}

impl<'a> Run<'a> {
    fn path(&mut self, name: &str) -> PathBuf {
        self.artifacts.push(name.to_string());
        self.out.join(name)
    }

    fn create(&mut self, name: &str) -> Res<BufWriter<File>> {
        let p = self.path(name);
        let f = File::create(&p).map_err(|e| RunError::Io { path: p.display().to_string(), source: e })?;
        Ok(BufWriter::new(f))
    }

    /// JSON artifact with the resolved config embedded.
    fn json<T: Serialize>(&mut self, name: &str, body: &T) -> Res<()> {
        let doc = json!({ "config": self.cfg.to_json(), "result": body });
        let mut text = serde_json::to_string_pretty(&doc)?;
        text.push('\n');
        let p = self.path(name);
        std::fs::write(&p, text).map_err(|e| RunError::Io { path: p.display().to_string(), source: e })
    }

    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let v = f();
        self.timings.push((stage.to_string(), t.elapsed().as_secs_f64()));
        v
    }
}

/// Run one subcommand; writes artifacts and `manifest.json` into `out`.
pub fn run(cmd: Subcommand, cfg: &RunConfig, out: &Path, input: Option<&Path>) -> Res<Outcome> {
    std::fs::create_dir_all(out).map_err(|e| RunError::Io { path: out.display().to_string(), source: e })?;
    let mut r = Run { out, cfg, artifacts: Vec::new(), timings: Vec::new() };
    let t0 = Instant::now();
    let result = match cmd {
        Subcommand::GenData => gen_data(&mut r),
        Subcommand::SolveH0 => solve_h0(&mut r),
        Subcommand::EvolveFormation => evolve_formation(&mut r),
        Subcommand::Norms => norms(&mut r),
        Subcommand::ScalingStudy => scaling_study(&mut r),
        Subcommand::Residuals => residuals(&mut r, input),
        Subcommand::CheckBalance => check_balance(&mut r),
        Subcommand::Report => report(&mut r),
    };
    let (exit_code, summary) = match &result {
        Ok((c, s)) => (*c, s.clone()),
        Err(e) => (e.exit_code(), e.to_string()),
    };
    let timings: serde_json::Map<String, serde_json::Value> =
        r.timings.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
    let manifest = json!({
        "tool": "nullpulse",
        "version": env!("CARGO_PKG_VERSION"),
        "subcommand": cmd.name(),
        "config_hash": cfg.hash(),
        "config": cfg.to_json(),
        "modules": {
            "sphere_ops": env!("CARGO_PKG_VERSION"),
            "eqreg": format!("{} equations", eqreg::registry().len()),
            "slab_format": String::from_utf8_lossy(null_state::SLAB_MAGIC).trim().to_string(),
        },
        "artifacts": r.artifacts,
        "timings_s": timings,
        "total_s": t0.elapsed().as_secs_f64(),
        "exit_code": exit_code,
        "summary": summary,
    });
    let mp = out.join("manifest.json");
    std::fs::write(&mp, serde_json::to_string_pretty(&manifest)? + "\n")
        .map_err(|e| RunError::Io { path: mp.display().to_string(), source: e })?;
    let (exit_code, summary) = result?;
    Ok(Outcome { exit_code, artifacts: r.artifacts, summary })
}

fn build_h0(r: &mut Run) -> Res<ConstraintSolution> {
    let pc = r.cfg.pulse_config();
    let opts = r.cfg.chase;
    Ok(r.time("solve_h0", || idata::build_h0(&pc, opts))?)
}

fn gen_data(r: &mut Run) -> Res<(i32, String)> {
    let pc = r.cfg.pulse_config();
    let grid = pc.grid()?;
    let fd = idata::generate_free_data(&pc, &grid)?;
    let unit = SphereGrid::new(pc.l_max, 1.0)?;
    let mut w = csv::Writer::from_writer(r.create("free_data.csv")?);
    w.write_record(["ubar", "node", "theta", "phi", "chihat_norm", "alphaf_norm"])?;
    for &ub in grid.ubar_nodes.iter().filter(|u| **u >= 0.0) {
        let (c, a) = fd.eval(ub, &unit);
        let (cm, am) = (c.magnitude(), a.magnitude());
        for i in 0..unit.n_nodes() {
            let (j, k) = (i / unit.angular.n_phi, i % unit.angular.n_phi);
            w.write_record([
                format!("{ub:.17e}"),
                i.to_string(),
                format!("{:.17e}", unit.angular.theta[j]),
                format!("{:.17e}", unit.angular.phi[k]),
                format!("{:.17e}", cm[i]),
                format!("{:.17e}", am[i]),
            ])?;
        }
    }
    w.flush().map_err(|e| RunError::Io { path: "free_data.csv".into(), source: e })?;
    let energy = idata::integrated_energy(&fd, &grid);
    let (lo, hi) = energy.data().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    r.json(
        "free_data.json",
        &json!({
            "window_scale": fd.window_scale,
            "flags": fd.flags,
            "integrated_energy_min": lo,
            "integrated_energy_max": hi,
            "n_ubar": grid.n_ubar(),
        }),
    )?;
    Ok((EXIT_OK, format!("free data on {} ubar nodes; integrated energy in [{lo:.6e}, {hi:.6e}]", grid.n_ubar())))
}

fn solve_h0(r: &mut Run) -> Res<(i32, String)> {
    let sol = build_h0(r)?;
    let i0 = idata::compute_i0(&sol)?;
    let eps = idata::compute_epsilon_norm(&sol).ok();
    let p = r.path("h0.slab");
    null_state::write_slab(&p, &sol.slab, &r.cfg.to_json())?;
    null_state::slab_to_csv(&sol.slab, r.create("h0.csv")?)?;
    r.json(
        "h0_report.json",
        &json!({
            "iterations": sol.iterations,
            "converged": sol.converged,
            "increments": sol.increments,
            "max_enforced_residual": sol.max_residual(),
            "residuals": sol.residuals,
            "fd_residuals": sol.fd_residuals,
            "i0": i0,
            "epsilon": eps,
            "flags": sol.free.flags,
        }),
    )?;
    Ok((EXIT_OK, format!("H0 solved in {} iterations; max residual {:.3e}; I0 = {:.6e}", sol.iterations, sol.max_residual(), i0.total)))
}

fn evolve_formation(r: &mut Run) -> Res<(i32, String)> {
    let sol = build_h0(r)?;
    let settings = r.cfg.formation_settings();
    let rep = r.time("formation", || formation::verdict(&sol, &settings))?;
    r.json("formation_report.json", &rep)?;
    formation::profile_csv(&rep, r.create("formation_profile.csv")?)
        .map_err(|e| RunError::Io { path: "formation_profile.csv".into(), source: e })?;
    let code = match rep.verdict {
        Verdict::Trapped => EXIT_TRAPPED,
        Verdict::NotTrapped => EXIT_NOT_TRAPPED,
        Verdict::AnsatzViolated => EXIT_INVARIANT,
    };
    Ok((code, rep.verdict_text.clone()))
}

fn norms(r: &mut Run) -> Res<(i32, String)> {
    let pc = r.cfg.pulse_config();
    let (opts, baseline) = (r.cfg.chase, r.cfg.norms.baseline);
    let cn = r.time("norms", || normsuite::cone_norms(&pc, opts, baseline))?;
    normsuite::write_norms_csv(&cn.totals, r.create("norms.csv")?)?;
    r.json("norms.json", &cn)?;
    let ratio = cn.ratio.map(|v| format!("{v:.4}")).unwrap_or_else(|| "undefined".into());
    Ok((EXIT_OK, format!("I0 = {:.6e}; (O+R+F)/I0 = {ratio}", cn.i0)))
}

fn scaling_study(r: &mut Run) -> Res<(i32, String)> {
    let mut pc = r.cfg.pulse_config();
    pc.kind = r.cfg.norms.sweep_kind;
    let deltas = r.cfg.norms.deltas.clone();
    let (opts, baseline) = (r.cfg.chase, r.cfg.norms.baseline);
    let study = r.time("scaling_study", || normsuite::scaling_study(&pc, &deltas, opts, baseline))?;
    normsuite::write_scaling_csv(&study, r.create("scaling.csv")?)?;
    normsuite::write_fit_csv(&study, r.create("scaling_fit.csv")?)?;
    r.json("scaling.json", &json!({ "deltas": study.deltas, "fits": study.fits }))?;
    let slope = |n: &str| study.fit(n).and_then(|f| f.slope).map(|s| format!("{s:.3}")).unwrap_or_else(|| "-".into());
    Ok((EXIT_OK, format!("slopes: I_0 {}, raw_linf_alpha_f {}", slope("I_0"), slope("raw_linf_alpha_f"))))
}

#[derive(Serialize)]
struct ResidualSummary {
    equation: String,
    nodes: usize,
    max_norm: f64,
}

fn residuals(r: &mut Run, input: Option<&Path>) -> Res<(i32, String)> {
    let source = match input {
        Some(p) => p.display().to_string(),
        None => r.cfg.residuals.source.clone(),
    };
    let (slab, stress) = match source.as_str() {
        "h0" => {
            let sol = build_h0(r)?;
            (sol.slab, Some(sol.stress))
        }
        "minkowski" => {
            let p = &r.cfg.pulse;
            let g = &r.cfg.grid;
            let grid =
                DoubleNullGrid::uniform(p.r0, p.delta, r.cfg.formation.u_max, r.cfg.residuals.minkowski_n_u, g.n_pulse, g.n_flat)?;
            (Slab::minkowski(&grid, &SphereGrid::new(g.l_max, p.r0)?)?, None)
        }
        path => (null_state::read_slab(Path::new(path))?.0, None),
    };
    let stress = stress.unwrap_or_else(|| currents::stress_derivatives(&slab));
    let mut w = csv::Writer::from_writer(r.create("residuals.csv")?);
    w.write_record(["equation", "u", "ubar", "max_norm", "l2_norm"])?;
    let mut summary = Vec::new();
    let mut skipped = Vec::new();
    for eq in eqreg::registry() {
        match eqreg::residual_with(eq.id, &slab, &stress) {
            Ok(rows) => {
                let mut m = 0.0f64;
                for row in &rows {
                    let (mx, l2) = (row.max_norm(), row.l2_norm());
                    m = m.max(mx);
                    w.write_record([eq.id.to_string(), format!("{:.17e}", row.u), format!("{:.17e}", row.ubar), format!("{mx:.6e}"), format!("{l2:.6e}")])?;
                }
                summary.push(ResidualSummary { equation: eq.id.into(), nodes: rows.len(), max_norm: m });
            }
            Err(EqError::TooFewSnapshots { .. }) => skipped.push(eq.id),
            Err(e) => return Err(e.into()),
        }
    }
    w.flush().map_err(|e| RunError::Io { path: "residuals.csv".into(), source: e })?;
    r.json("residuals.json", &json!({ "source": source, "equations": summary, "skipped": skipped }))?;
    let worst = summary.iter().fold(0.0f64, |m, s| m.max(s.max_norm));
    Ok((EXIT_OK, format!("{} equations evaluated, {} skipped; max residual {worst:.3e}", summary.len(), skipped.len())))
}

fn check_balance(r: &mut Run) -> Res<(i32, String)> {
    let baseline = r.cfg.norms.baseline;
    let reports: Vec<_> = r.time("balance", || eqreg::registry().iter().map(|e| e.balance(baseline)).collect());
    let mut w = csv::Writer::from_writer(r.create("balance.csv")?);
    w.write_record(["equation", "term", "signature", "deficit", "maxwell_factors"])?;
    for rep in &reports {
        for t in &rep.terms {
            w.write_record([rep.equation.clone(), t.label.clone(), t.signature.to_string(), t.deficit.to_string(), t.maxwell_factors.to_string()])?;
        }
    }
    w.flush().map_err(|e| RunError::Io { path: "balance.csv".into(), source: e })?;
    r.json("balance.json", &reports)?;
    let unbalanced: Vec<&str> = reports.iter().filter(|b| !b.balanced()).map(|b| b.equation.as_str()).collect();
    let text = format!("{} equations, {} with nonzero deficits (baseline {})", reports.len(), unbalanced.len(), baseline.name());
    // only the half baseline is expected to balance
    let code = if baseline == Baseline::Half && !unbalanced.is_empty() { EXIT_INVARIANT } else { EXIT_OK };
    Ok((code, text))
}

#[derive(Serialize)]
struct AlgebraChecks {
    samples: usize,
    max_stress_trace: f64,
    max_stress_duality: f64,
    max_q_asymmetry: f64,
    max_q_trace: f64,
    min_t44: f64,
    min_q4444: f64,
}

fn algebra_checks(seed: u64, n: usize) -> AlgebraChecks {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = AlgebraChecks {
        samples: n,
        max_stress_trace: 0.0,
        max_stress_duality: 0.0,
        max_q_asymmetry: 0.0,
        max_q_trace: 0.0,
        min_t44: f64::INFINITY,
        min_q4444: f64::INFINITY,
    };
    let g_inv = currents::inverse_metric();
    for _ in 0..n {
        let mut u = || rng.gen_range(-1.0..1.0);
        let f = currents::maxwell_tensor([u(), u()], [u(), u()], u(), u());
        let t = currents::stress_tensor(&f);
        let td = currents::stress_tensor(&currents::dual2(&f));
        out.max_stress_trace = out.max_stress_trace.max(currents::trace2(&t).abs());
        let dual_gap = (0..4).flat_map(|a| (0..4).map(move |b| (a, b))).fold(0.0f64, |m, (a, b)| m.max((t[a][b] - td[a][b]).abs()));
        out.max_stress_duality = out.max_stress_duality.max(dual_gap);
        let w: [f64; 10] = std::array::from_fn(|_| u());
        let q = currents::bel_robinson(&currents::weyl_tensor(&w));
        let ix = currents::ix;
        let mut asym = 0.0f64;
        let mut tr = 0.0f64;
        for a in 0..4 {
            for b in 0..4 {
                for c in 0..4 {
                    for d in 0..4 {
                        let v = q[ix(a, b, c, d)];
                        for p in [q[ix(b, a, c, d)], q[ix(c, b, a, d)], q[ix(d, b, c, a)]] {
                            asym = asym.max((v - p).abs());
                        }
                    }
                    let s: f64 = (0..4).flat_map(|x| (0..4).map(move |y| (x, y))).map(|(x, y)| g_inv[x][y] * q[ix(x, y, b, c)]).sum();
                    tr = tr.max(s.abs());
                }
            }
        }
        out.max_q_asymmetry = out.max_q_asymmetry.max(asym);
        out.max_q_trace = out.max_q_trace.max(tr);
        let e4 = currents::E4;
        out.min_t44 = out.min_t44.min(t[e4][e4]);
        out.min_q4444 = out.min_q4444.min(q[ix(e4, e4, e4, e4)]);
    }
    out
}

fn report(r: &mut Run) -> Res<(i32, String)> {
    let sol = build_h0(r)?;
    let mut w = csv::Writer::from_writer(r.create("flux.csv")?);
    w.write_record(["multiplier", "cone", "fixed", "flux"])?;
    let mut rows = currents::flux_t(&sol.slab, Multiplier::L);
    rows.extend(currents::flux_t(&sol.slab, Multiplier::Lbar));
    for row in &rows {
        w.write_record([row.multiplier.clone(), row.cone.clone(), format!("{:.17e}", row.fixed), format!("{:.17e}", row.flux)])?;
    }
    w.flush().map_err(|e| RunError::Io { path: "flux.csv".into(), source: e })?;
    let (seed, n) = (r.cfg.seed, r.cfg.report.random_fields);
    let alg = r.time("algebra", || algebra_checks(seed, n));
    let last = sol.slab.snaps.last().expect("nonempty slab");
    let diag = eqreg::diagnostics(last)?;
    let mean = |f: &crate::HorizontalField| last.sphere.mean(f.data());
    r.json(
        "report.json",
        &json!({
            "flux": rows,
            "algebra": alg,
            "mass_aspect_at_delta": {
                "mu_mean": mean(&diag.mu),
                "mub_mean": mean(&diag.mub),
                "kappa_mean": mean(&diag.kappa),
                "kappab_mean": mean(&diag.kappab),
            },
        }),
    )?;
    let bad = alg.max_stress_trace > 1e-12 || alg.max_stress_duality > 1e-12 || alg.max_q_asymmetry > 1e-12 || alg.max_q_trace > 1e-12;
    let code = if bad || alg.min_t44 < 0.0 || alg.min_q4444 < 0.0 { EXIT_INVARIANT } else { EXIT_OK };
    Ok((code, format!("{} flux rows; algebra checks on {} samples", rows.len(), alg.samples)))
}
