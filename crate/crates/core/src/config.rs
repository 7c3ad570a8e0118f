//! Run configuration: the checked-in defaults, a user TOML overlay and
//! command-line overrides, resolved into one validated structure.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::formation::{FormationMode, FormationSettings};
use crate::idata::{ChaseOptions, Envelope, Modulation, PulseKind, ShortPulseConfig};
use crate::sigcalc::Baseline;

const DEFAULT_TOML: &str = include_str!("../../../config/default.toml");

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

type Res<T> = Result<T, ConfigError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSection {
    pub kind: PulseKind,
    pub mass: f64,
    pub r0: f64,
    pub delta: f64,
    pub envelope: Envelope,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modulation: Option<Modulation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub l_max: usize,
    pub n_pulse: usize,
    pub n_flat: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormationSection {
    pub mode: FormationMode,
    pub c0: f64,
    pub c_margin: f64,
    pub u_max: f64,
    pub n_u: usize,
    pub u_target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormsSection {
    pub baseline: Baseline,
    pub deltas: Vec<f64>,
    /// Pulse kind used for the delta sweep.
    pub sweep_kind: PulseKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResidualsSection {
    /// "h0", "minkowski", or a path to a slab file.
    pub source: String,
    pub minkowski_n_u: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSection {
    pub random_fields: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    pub pulse: PulseSection,
    pub grid: GridSection,
    pub chase: ChaseOptions,
    pub formation: FormationSection,
    pub norms: NormsSection,
    pub residuals: ResidualsSection,
    pub report: ReportSection,
}

/// Command-line overrides, applied after the file overlay.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub delta: Option<f64>,
    pub mode: Option<String>,
    pub baseline: Option<String>,
    pub c0: Option<f64>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl RunConfig {
    /// The checked-in defaults.
    pub fn defaults() -> Res<RunConfig> {
        RunConfig::from_toml_str("")
    }

    /// Defaults overlaid with the keys present in `text`.
    pub fn from_toml_str(text: &str) -> Res<RunConfig> {
        let mut base: toml::Value = toml::from_str(DEFAULT_TOML)?;
        let over: toml::Value = toml::from_str(text)?;
        merge(&mut base, over);
        let cfg: RunConfig = base.try_into()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, ov: &Overrides) -> Res<RunConfig> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| ConfigError::Read { path: p.display().to_string(), source: e })?,
            None => String::new(),
        };
        let mut cfg = RunConfig::from_toml_str(&text)?;
        cfg.apply(ov)?;
        Ok(cfg)
    }

    pub fn apply(&mut self, ov: &Overrides) -> Res<()> {
        if let Some(d) = ov.delta {
            self.pulse.delta = d;
        }
        if let Some(m) = &ov.mode {
            self.formation.mode =
                FormationMode::parse(m).ok_or_else(|| ConfigError::Invalid(format!("unknown formation mode '{m}'")))?;
        }
        if let Some(b) = &ov.baseline {
            self.norms.baseline =
                Baseline::parse(b).ok_or_else(|| ConfigError::Invalid(format!("unknown baseline '{b}' (half or one)")))?;
        }
        if let Some(c) = ov.c0 {
            self.formation.c0 = c;
        }
        if let Some(s) = ov.seed {
            self.seed = s;
        }
        if let Some(t) = ov.threads {
            self.threads = Some(t);
        }
        self.validate()
    }

    pub fn validate(&self) -> Res<()> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        let p = &self.pulse;
        if !(p.r0 > 0.0) || !p.r0.is_finite() {
            return bad(format!("pulse.r0 must be positive, got {}", p.r0));
        }
        if !(p.delta > 0.0) || p.delta > 1.0f64.min(p.r0 / 10.0) {
            return bad(format!("pulse.delta must lie in (0, min(1, r0/10)], got {}", p.delta));
        }
        if !(p.mass >= 0.0) || !p.mass.is_finite() {
            return bad(format!("pulse.mass must be non-negative, got {}", p.mass));
        }
        if self.grid.n_pulse < 7 {
            return bad(format!("grid.n_pulse must be at least 7, got {}", self.grid.n_pulse));
        }
        if self.grid.l_max < 2 {
            return bad(format!("grid.l_max must be at least 2, got {}", self.grid.l_max));
        }
        let f = &self.formation;
        if !(f.u_max > 0.0) || f.n_u < 2 || !(f.u_target > 0.0 && f.u_target <= f.u_max) {
            return bad("formation needs u_max > 0, n_u >= 2 and 0 < u_target <= u_max".into());
        }
        if !(f.c0 >= 0.0) || !(f.c_margin >= 0.0) {
            return bad("formation.c0 and formation.c_margin must be non-negative".into());
        }
        if !(self.chase.damping > 0.0 && self.chase.damping <= 1.0) || !(self.chase.tol > 0.0) || self.chase.max_iter == 0 {
            return bad("chase needs 0 < damping <= 1, tol > 0, max_iter >= 1".into());
        }
        if self.norms.deltas.is_empty() || self.norms.deltas.iter().any(|d| !(*d > 0.0)) {
            return bad("norms.deltas must be a nonempty list of positive values".into());
        }
        if self.residuals.minkowski_n_u < 3 {
            return bad("residuals.minkowski_n_u must be at least 3".into());
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1".into());
        }
        Ok(())
    }

    pub fn pulse_config(&self) -> ShortPulseConfig {
        let mut c = ShortPulseConfig::new(self.pulse.delta, self.pulse.r0, self.pulse.kind, self.pulse.mass);
        c.envelope = self.pulse.envelope;
        c.modulation = self.pulse.modulation;
        c.l_max = self.grid.l_max;
        c.n_pulse = self.grid.n_pulse;
        c.n_flat = self.grid.n_flat;
        c
    }

    pub fn formation_settings(&self) -> FormationSettings {
        let f = &self.formation;
        FormationSettings {
            mode: f.mode,
            c0: f.c0,
            c_margin: f.c_margin,
            u_max: f.u_max,
            n_u: f.n_u,
            u_target: f.u_target,
            ..Default::default()
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(&self.to_json()).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse() {
        let c = RunConfig::defaults().unwrap();
        assert_eq!(c.pulse.r0, 10.0);
        assert_eq!(c.pulse.delta, 1e-3);
        assert_eq!(c.pulse.mass, 0.19);
        assert_eq!(c.formation.u_max, 2.0);
        assert_eq!(c.grid.n_pulse, 64);
    }

    #[test]
    fn overlay_and_overrides() {
        let mut c = RunConfig::from_toml_str("[pulse]\nmass = 0.1\n").unwrap();
        assert_eq!(c.pulse.mass, 0.1);
        assert_eq!(c.pulse.r0, 10.0);
        c.apply(&Overrides { mode: Some("bound".into()), ..Default::default() }).unwrap();
        assert_eq!(c.formation.mode, FormationMode::Bound);
        assert!(c.apply(&Overrides { baseline: Some("third".into()), ..Default::default() }).is_err());
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(RunConfig::from_toml_str("[pulse]\nmas = 0.1\n").is_err());
        assert!(RunConfig::from_toml_str("[pulse]\ndelta = 2.0\n").is_err());
    }

    #[test]
    fn hash_is_stable() {
        let a = RunConfig::defaults().unwrap();
        let b = RunConfig::defaults().unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = RunConfig::from_toml_str("seed = 3").unwrap();
        assert_ne!(a.hash(), c.hash());
    }
}
