//! Flat JSON experiment configuration with `key=value` overrides.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::spectral::Field;

/// The experiment to run; doubles as the CLI verb.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verb {
    Npm,
    Qnpm,
    Subspace,
    LambdaQ,
    PrepareV1,
    Tomography,
    GpeCalibrate,
    PmfDump,
    LowerBound,
    HardInstance,
}

impl Verb {
    pub const ALL: [Verb; 10] = [
        Verb::Npm,
        Verb::Qnpm,
        Verb::Subspace,
        Verb::LambdaQ,
        Verb::PrepareV1,
        Verb::Tomography,
        Verb::GpeCalibrate,
        Verb::PmfDump,
        Verb::LowerBound,
        Verb::HardInstance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Verb::Npm => "npm",
            Verb::Qnpm => "qnpm",
            Verb::Subspace => "subspace",
            Verb::LambdaQ => "lambda-q",
            Verb::PrepareV1 => "prepare-v1",
            Verb::Tomography => "tomography",
            Verb::GpeCalibrate => "gpe-calibrate",
            Verb::PmfDump => "pmf-dump",
            Verb::LowerBound => "lower-bound",
            Verb::HardInstance => "hard-instance",
        }
    }

    pub fn parse(name: &str) -> Option<Verb> {
        Verb::ALL.into_iter().find(|v| v.name() == name)
    }

    fn default_dims(self) -> Vec<usize> {
        match self {
            Verb::Npm => vec![300],
            Verb::Qnpm => vec![128],
            Verb::Subspace => vec![64],
            Verb::LambdaQ => vec![32],
            Verb::PrepareV1 => vec![64],
            Verb::Tomography => vec![8],
            Verb::GpeCalibrate | Verb::PmfDump => vec![1],
            Verb::LowerBound => vec![250, 500, 1000, 2000],
            Verb::HardInstance => vec![1000],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum Dims {
    One(usize),
    Many(Vec<usize>),
}

/// Every key is optional except `experiment`; absent keys take
/// verb-dependent defaults through the accessor methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Verb,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    d: Option<Dims>,
    #[serde(default = "one")]
    pub q: usize,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default)]
    pub seed: u64,
    /// Output directory; not part of the config hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Verb-specific variant: tomography mode, subspace step tomography or GPE sampler.
    #[serde(default)]
    pub mode: Option<String>,
    /// none | compliant | adversarial
    #[serde(default)]
    pub noise: Option<String>,
    #[serde(default)]
    pub noise_factor: Option<f64>,
    #[serde(default)]
    pub field: Option<Field>,
    /// Prescribed eigenvalues; replaces the default instance.
    #[serde(default)]
    pub spectrum: Option<Vec<f64>>,
    #[serde(default)]
    pub c_prime: Option<f64>,
    #[serde(default)]
    pub a: Option<f64>,
    #[serde(default)]
    pub s: Option<f64>,
    #[serde(default, rename = "N")]
    pub n: Option<u64>,
    #[serde(default)]
    pub exact: bool,
    #[serde(default)]
    pub c: Option<f64>,
    #[serde(default)]
    pub l: Option<f64>,
    #[serde(default)]
    pub r: Option<f64>,
    #[serde(default)]
    pub lattice: Option<f64>,
    /// full | truncated | modular
    #[serde(default)]
    pub variant: Option<String>,
    #[serde(default)]
    pub m_grid: Option<Vec<u64>>,
    #[serde(default)]
    pub variance_factor: Option<f64>,
}

fn one() -> usize {
    1
}

fn default_trials() -> u64 {
    100
}

fn config_error(path: &str, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.to_string(),
        message: message.into(),
    }
}

/// `value` as JSON if it parses, a comma list as a JSON array, else a string.
fn override_value(raw: &str) -> serde_json::Value {
    if let Ok(v) = serde_json::from_str(raw) {
        return v;
    }
    if raw.contains(',') {
        if let Ok(v) = serde_json::from_str(&format!("[{raw}]")) {
            return v;
        }
    }
    serde_json::Value::String(raw.to_string())
}

impl ExperimentConfig {
    /// A config with every optional key at its default.
    pub fn new(experiment: Verb) -> Self {
        Self::from_value(serde_json::json!({ "experiment": experiment.name() }), &[]).expect("defaults are valid")
    }

    /// Parses `text`, applies `key=value` overrides in order, then validates.
    pub fn from_json(text: &str, overrides: &[String]) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| config_error("<root>", format!("not valid JSON: {e}")))?;
        Self::from_value(value, overrides)
    }

    pub fn from_value(mut value: serde_json::Value, overrides: &[String]) -> Result<Self> {
        let obj = value
            .as_object_mut()
            .ok_or_else(|| config_error("<root>", "config must be a JSON object"))?;
        for ov in overrides {
            let (key, raw) = ov
                .split_once('=')
                .ok_or_else(|| config_error(ov, "override must look like key=value"))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(config_error(ov, "empty override key"));
            }
            obj.insert(key.to_string(), override_value(raw.trim()));
        }
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            config_error(if path == "." { "<root>" } else { &path }, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with(mut self, overrides: &[String]) -> Result<Self> {
        let out = self.out.take();
        let mut cfg = Self::from_value(serde_json::to_value(&self)?, overrides)?;
        if cfg.out.is_none() {
            cfg.out = out;
        }
        Ok(cfg)
    }

    pub fn dims(&self) -> Vec<usize> {
        match &self.d {
            Some(Dims::One(d)) => vec![*d],
            Some(Dims::Many(ds)) => ds.clone(),
            None => match &self.spectrum {
                Some(s) => vec![s.len()],
                None => self.experiment.default_dims(),
            },
        }
    }

    pub fn eps(&self) -> f64 {
        self.eps.unwrap_or(match self.experiment {
            Verb::Qnpm | Verb::Subspace | Verb::Tomography => 0.2,
            Verb::GpeCalibrate => 0.05,
            _ => 0.1,
        })
    }

    pub fn delta(&self) -> f64 {
        self.delta.unwrap_or(match self.experiment {
            Verb::GpeCalibrate => 0.01,
            _ => 0.1,
        })
    }

    pub fn field(&self) -> Field {
        self.field.unwrap_or(Field::Real)
    }

    /// Per-verb sample budgets for the distinguishing curve.
    pub fn m_grid(&self) -> Vec<u64> {
        self.m_grid
            .clone()
            .unwrap_or_else(|| vec![0, 5, 10, 15, 20, 25, 30, 40, 50, 60, 80, 100, 120, 150, 200, 250, 300])
    }

    pub fn variance_factor(&self) -> f64 {
        self.variance_factor.unwrap_or(1.45e6)
    }

    pub fn validate(&self) -> Result<()> {
        let verb = self.experiment;
        if self.trials == 0 {
            return Err(config_error("trials", "must be at least 1"));
        }
        let dims = self.dims();
        if dims.is_empty() {
            return Err(config_error("d", "dimension list is empty"));
        }
        let min_d = match verb {
            Verb::GpeCalibrate | Verb::PmfDump => 1,
            Verb::Npm | Verb::Qnpm | Verb::PrepareV1 | Verb::HardInstance if self.spectrum.is_none() => 4,
            _ => 2,
        };
        if let Some(i) = dims.iter().position(|&d| d < min_d) {
            return Err(config_error(&format!("d[{i}]"), format!("need d >= {min_d}")));
        }
        if let Some(s) = &self.spectrum {
            if dims != [s.len()] {
                return Err(config_error(
                    "spectrum",
                    format!("has {} values but d is {:?}", s.len(), dims),
                ));
            }
            if s.iter().any(|x| !x.is_finite()) {
                return Err(config_error("spectrum", "values must be finite"));
            }
        }
        let eps = self.eps();
        if !(eps > 0.0 && eps < 1.0) {
            return Err(config_error("eps", format!("need 0 < eps < 1, got {eps}")));
        }
        let delta = self.delta();
        if !(delta > 0.0 && delta < 1.0) {
            return Err(config_error("delta", format!("need 0 < delta < 1, got {delta}")));
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return Err(config_error("gamma", "must be positive"));
            }
        }
        if self.q == 0 {
            return Err(config_error("q", "must be at least 1"));
        }
        if matches!(verb, Verb::Subspace | Verb::LambdaQ) {
            for &d in &dims {
                if self.q > d || (verb == Verb::LambdaQ && self.q >= d) {
                    return Err(config_error("q", format!("q = {} does not fit d = {d}", self.q)));
                }
            }
        }
        if let Some(mode) = &self.mode {
            let allowed: &[&str] = match verb {
                Verb::Tomography => &["basis", "unbiased", "refined"],
                Verb::Subspace => &["exact", "unbiased", "refined"],
                Verb::GpeCalibrate => &["statevector", "closed-form"],
                _ => &[],
            };
            if !allowed.contains(&mode.as_str()) {
                return Err(config_error("mode", format!("`{mode}` is not one of {allowed:?}")));
            }
        }
        if let Some(noise) = &self.noise {
            if !["none", "compliant", "adversarial"].contains(&noise.as_str()) {
                return Err(config_error(
                    "noise",
                    format!("`{noise}` is not none|compliant|adversarial"),
                ));
            }
        }
        if let Some(f) = self.noise_factor {
            if !(f > 0.0 && f.is_finite()) {
                return Err(config_error("noise_factor", "must be positive"));
            }
        }
        if let Some(c) = self.c_prime {
            if !(c > 0.0 && c.is_finite()) {
                return Err(config_error("c_prime", "must be positive"));
            }
        }
        if let Some(v) = &self.variant {
            if !["full", "truncated", "modular"].contains(&v.as_str()) {
                return Err(config_error("variant", format!("`{v}` is not full|truncated|modular")));
            }
        }
        if let Some(a) = self.a {
            if !(0.0..=1.0).contains(&a) {
                return Err(config_error("a", format!("need a in [0, 1], got {a}")));
            }
        }
        if let Some(grid) = &self.m_grid {
            if grid.is_empty() {
                return Err(config_error("m_grid", "empty grid"));
            }
        }
        if let Some(f) = self.variance_factor {
            if !(f >= 1.0 && f.is_finite()) {
                return Err(config_error("variance_factor", "must be at least 1"));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form without the output directory.
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.out = None;
        let text = serde_json::to_string(&canon).expect("config serializes");
        Sha256::digest(text.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .unwrap_or_else(|| PathBuf::from("qpower-out").join(self.experiment.name()))
    }
}
