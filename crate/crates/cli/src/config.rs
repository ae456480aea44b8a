use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use threshold_scope::dispersive::evolution::Absorber;
use threshold_scope::potential::PotentialSpec;
use threshold_scope::{Result, ScopeError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n: usize,
    #[serde(rename = "L")]
    pub l: f64,
}

/// A number, or the string "auto".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Setting {
    Value(f64),
    Keyword(String),
}

impl Setting {
    fn resolve(&self, name: &str) -> Result<Option<f64>> {
        match self {
            Setting::Value(x) if *x > 0.0 && x.is_finite() => Ok(Some(*x)),
            Setting::Value(x) => Err(ScopeError::Config(format!("{name} = {x} must be positive"))),
            Setting::Keyword(k) if k == "auto" => Ok(None),
            Setting::Keyword(k) => Err(ScopeError::Config(format!("{name}: expected a number or \"auto\", got {k:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticalMethod {
    /// Coupling where the grid operator A0 turns singular.
    Grid,
    /// Continuum s-wave threshold from radial shooting.
    Radial,
}

/// Rescale the potential to `fraction` of a critical coupling found in `bracket`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriticalSpec {
    pub method: CriticalMethod,
    pub bracket: [f64; 2],
    #[serde(default = "one")]
    pub fraction: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub t_min: f64,
    pub t_max: f64,
    pub samples: usize,
}

impl TimeGrid {
    /// Geometric samples from t_min to t_max.
    pub fn geometric(&self) -> Vec<f64> {
        if self.samples == 1 {
            return vec![self.t_min];
        }
        let ratio = self.t_max / self.t_min;
        (0..self.samples).map(|k| self.t_min * ratio.powf(k as f64 / (self.samples - 1) as f64)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolveSpec {
    pub sigma: f64,
    /// Sampling interval of the sup-norm series.
    pub sample_every: f64,
    pub absorber: Option<Absorber>,
}

impl Default for EvolveSpec {
    fn default() -> Self {
        Self { sigma: 1.0, sample_every: 0.25, absorber: Some(Absorber { width: 12.0, strength: 3.0 }) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TuneSpec {
    pub ell: u32,
    pub bracket: [f64; 2],
}

impl Default for TuneSpec {
    fn default() -> Self {
        Self { ell: 0, bracket: [1.0, 4.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub potential: PotentialSpec,
    pub critical: Option<CriticalSpec>,
    pub grid: GridSpec,
    pub eps_rank: Setting,
    pub lambda0: Setting,
    pub time: TimeGrid,
    pub sample_pairs: usize,
    pub out: PathBuf,
    pub seed: u64,
    pub evolve: EvolveSpec,
    pub tune: TuneSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            potential: PotentialSpec::SquareWell { depth: 1.0, radius: 1.0 },
            critical: None,
            grid: GridSpec { n: 12, l: 3.0 },
            eps_rank: Setting::Keyword("auto".into()),
            lambda0: Setting::Keyword("auto".into()),
            time: TimeGrid { t_min: 50.0, t_max: 2000.0, samples: 12 },
            sample_pairs: 50,
            out: PathBuf::from("out"),
            seed: 0,
            evolve: EvolveSpec::default(),
            tune: TuneSpec::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| ScopeError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| ScopeError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ScopeError::Config(m));
        if self.grid.n < 2 || !(self.grid.l > 0.0) || !self.grid.l.is_finite() {
            return bad(format!("grid n = {}, L = {} must be n >= 2 and L > 0", self.grid.n, self.grid.l));
        }
        self.eps_rank()?;
        self.lambda0()?;
        let t = &self.time;
        if !(t.t_min > 0.0) || !(t.t_max > t.t_min) || !t.t_max.is_finite() || t.samples < 2 {
            return bad(format!("time grid needs 0 < t_min < t_max and samples >= 2, got {t:?}"));
        }
        if self.sample_pairs == 0 {
            return bad("sample_pairs must be positive".into());
        }
        if let Some(c) = &self.critical {
            if !(c.bracket[0] < c.bracket[1]) || !(c.fraction > 0.0) {
                return bad(format!("critical: bracket must be increasing and fraction positive, got {c:?}"));
            }
        }
        let e = &self.evolve;
        if !(e.sigma > 0.0) || !(e.sample_every > 0.0) {
            return bad("evolve: sigma and sample_every must be positive".into());
        }
        if !(self.tune.bracket[0] < self.tune.bracket[1]) {
            return bad(format!("tune: bracket must be increasing, got {:?}", self.tune.bracket));
        }
        Ok(())
    }

    pub fn eps_rank(&self) -> Result<Option<f64>> {
        self.eps_rank.resolve("eps_rank")
    }

    pub fn lambda0(&self) -> Result<Option<f64>> {
        self.lambda0.resolve("lambda0")
    }

    /// SHA-256 of the canonical JSON of the resolved config. The output directory is left out
    /// so the same run written to two places carries the same hash.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(&Self { out: PathBuf::new(), ..self.clone() }).expect("config serializes");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_hash_is_stable() {
        let c = RunConfig::default();
        c.validate().unwrap();
        assert_eq!(c.hash(), RunConfig::default().hash());
        assert_eq!(c.hash().len(), 64);
        let mut d = c.clone();
        d.seed = 1;
        assert_ne!(c.hash(), d.hash());
        d.seed = 0;
        d.out = PathBuf::from("elsewhere");
        assert_eq!(c.hash(), d.hash());
    }

    #[test]
    fn parses_partial_json() {
        let c: RunConfig = serde_json::from_str(r#"{"potential": {"kind": "resonant", "R": 2.5}, "grid": {"n": 10, "L": 3}, "lambda0": 0.1}"#).unwrap();
        assert_eq!(c.potential, PotentialSpec::Resonant { r: 2.5 });
        assert_eq!(c.lambda0().unwrap(), Some(0.1));
        assert_eq!(c.eps_rank().unwrap(), None);
        assert_eq!(c.sample_pairs, 50);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"bogus": 1}"#).is_err());
        let c: RunConfig = serde_json::from_str(r#"{"eps_rank": "sometimes"}"#).unwrap();
        assert!(c.validate().is_err());
        let c: RunConfig = serde_json::from_str(r#"{"time": {"t_min": 5, "t_max": 1, "samples": 4}}"#).unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn geometric_times_hit_both_ends() {
        let t = TimeGrid { t_min: 50.0, t_max: 2000.0, samples: 12 }.geometric();
        assert_eq!(t.len(), 12);
        assert!((t[0] - 50.0).abs() < 1e-12 && (t[11] - 2000.0).abs() < 1e-9);
    }
}
