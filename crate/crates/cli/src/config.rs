//! Experiment configuration: a single strict JSON document.

use std::fmt;
use std::path::PathBuf;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use xcov::{AspectRatios, Spike};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    TheoryBulk,
    TheoryOutliers,
    TheoryOverlaps,
    TheoryPhase,
    SimSpectrum,
    SimBbpSweep,
    PlsRun,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::TheoryBulk => "theory-bulk",
            Mode::TheoryOutliers => "theory-outliers",
            Mode::TheoryOverlaps => "theory-overlaps",
            Mode::TheoryPhase => "theory-phase",
            Mode::SimSpectrum => "sim-spectrum",
            Mode::SimBbpSweep => "sim-bbp-sweep",
            Mode::PlsRun => "pls-run",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatiosConfig {
    pub alpha_x: f64,
    pub alpha_y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpikeConfig {
    pub lambda_x: f64,
    pub lambda_y: f64,
    pub rho: f64,
}

/// Evenly spaced `points` values from `start` to `stop` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

/// Either an explicit list or an evenly spaced range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    List(Vec<f64>),
    Range(Range),
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Grid::List(v) => v.clone(),
            Grid::Range(r) if r.points == 1 => vec![r.start],
            Grid::Range(r) => {
                let step = (r.stop - r.start) / (r.points - 1) as f64;
                (0..r.points).map(|i| r.start + step * i as f64).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
}

/// Every key the tool accepts. Keys not used by the selected mode are
/// rejected by [`ExperimentConfig::validate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    pub ratios: RatiosConfig,
    #[serde(default)]
    pub spikes: Vec<SpikeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    /// theory-bulk evaluation points.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_grid: Option<Grid>,
    /// theory-bulk smoothing height.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// theory-phase correlations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rhos: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_x_grid: Option<Grid>,
    /// theory-phase overlay CSV files, passed through unchanged.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overlays: Option<Vec<PathBuf>>,
    /// sim-bbp-sweep signal strengths, applied to both channels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Grid>,
    /// sim-bbp-sweep correlation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    /// sim-spectrum histogram bins.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
    /// pls-run number of estimated components.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub components: Option<usize>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: String,
    pub reason: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config key `{}`: {}", self.key, self.reason)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_error(key: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError { key: key.into(), reason: reason.into() }
}

/// Dotted key for an unknown or missing field: the field named in the
/// message, under the path of its parent object.
fn field_key(path: &str, message: &str) -> String {
    let Some(field) = message.split('`').nth(1) else {
        return "<document>".into();
    };
    let parent = path.rsplit_once('.').map(|(p, _)| p).unwrap_or("");
    let parent = if path.ends_with(field) { parent } else { path };
    match parent {
        "" | "." => field.to_owned(),
        p => format!("{p}.{field}"),
    }
}

pub const DEFAULT_BINS: usize = 40;
pub const DEFAULT_BBP_TRIALS: usize = 10;

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let message = e.inner().to_string();
            let key = if path == "." || message.contains("unknown field") || message.contains("missing field") {
                field_key(&path, &message)
            } else {
                path
            };
            config_error(key, message)
        })
    }

    /// Fills the mode and defaults, applies the seed override and checks
    /// every precondition that can be checked before computing.
    pub fn resolve(mut self, mode: Mode, seed: Option<u64>) -> Result<Self, ConfigError> {
        match self.mode {
            Some(m) if m != mode => {
                return Err(config_error("mode", format!("config says {}, command line says {}", m.name(), mode.name())))
            }
            _ => self.mode = Some(mode),
        }
        if let Some(s) = seed {
            self.seed = s;
        }
        match mode {
            Mode::SimSpectrum | Mode::PlsRun => {
                self.trials.get_or_insert(1);
            }
            Mode::SimBbpSweep => {
                self.trials.get_or_insert(DEFAULT_BBP_TRIALS);
            }
            _ => {}
        }
        if mode == Mode::SimSpectrum {
            self.bins.get_or_insert(DEFAULT_BINS);
        }
        if mode == Mode::PlsRun {
            let r = self.spikes.len().max(1);
            self.components.get_or_insert(r);
        }
        self.validate()?;
        Ok(self)
    }

    pub fn mode(&self) -> Mode {
        self.mode.expect("resolved config carries a mode")
    }

    pub fn aspect_ratios(&self) -> Result<AspectRatios, ConfigError> {
        AspectRatios::new(self.ratios.alpha_x, self.ratios.alpha_y).map_err(|e| config_error("ratios", e.to_string()))
    }

    pub fn spike_list(&self) -> Result<Vec<Spike>, ConfigError> {
        self.spikes
            .iter()
            .enumerate()
            .map(|(i, s)| Spike::new(s.lambda_x, s.lambda_y, s.rho).map_err(|e| config_error(format!("spikes[{i}]"), e.to_string())))
            .collect()
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let mode = self.mode();
        self.aspect_ratios()?;
        self.spike_list()?;
        let allowed: &[&str] = match mode {
            Mode::TheoryBulk => &["x_grid", "epsilon"],
            Mode::TheoryOutliers | Mode::TheoryOverlaps => &[],
            Mode::TheoryPhase => &["rhos", "lambda_x_grid", "overlays"],
            Mode::SimSpectrum => &["n", "trials", "bins"],
            Mode::SimBbpSweep => &["n", "trials", "lambdas", "rho"],
            Mode::PlsRun => &["n", "trials", "components"],
        };
        let present = [
            ("n", self.n.is_some()),
            ("trials", self.trials.is_some()),
            ("x_grid", self.x_grid.is_some()),
            ("epsilon", self.epsilon.is_some()),
            ("rhos", self.rhos.is_some()),
            ("lambda_x_grid", self.lambda_x_grid.is_some()),
            ("overlays", self.overlays.is_some()),
            ("lambdas", self.lambdas.is_some()),
            ("rho", self.rho.is_some()),
            ("bins", self.bins.is_some()),
            ("components", self.components.is_some()),
        ];
        for (key, is_set) in present {
            if is_set && !allowed.contains(&key) {
                return Err(config_error(key, format!("not used by mode {}", mode.name())));
            }
        }
        for key in allowed {
            let required = !matches!(*key, "epsilon" | "overlays");
            if required && !present.iter().any(|(k, p)| k == key && *p) {
                return Err(config_error(*key, format!("required by mode {}", mode.name())));
            }
        }
        if matches!(mode, Mode::TheoryOutliers | Mode::TheoryOverlaps) && self.spikes.is_empty() {
            return Err(config_error("spikes", "at least one spike is required"));
        }
        if mode == Mode::SimBbpSweep && !self.spikes.is_empty() {
            return Err(config_error("spikes", "sim-bbp-sweep builds its spikes from `lambdas` and `rho`"));
        }
        if let Some(n) = self.n {
            if n == 0 {
                return Err(config_error("n", "must be positive"));
            }
        }
        if self.trials == Some(0) {
            return Err(config_error("trials", "must be positive"));
        }
        if self.bins == Some(0) {
            return Err(config_error("bins", "must be positive"));
        }
        if let Some(c) = self.components {
            if c == 0 {
                return Err(config_error("components", "must be positive"));
            }
        }
        if let Some(eps) = self.epsilon {
            if !(eps > 0.0 && eps <= 1e-3) {
                return Err(config_error("epsilon", "must lie in (0, 1e-3]"));
            }
        }
        if let Some(rho) = self.rho {
            if !(rho.abs() < 1.0) {
                return Err(config_error("rho", "must lie in (-1, 1)"));
            }
        }
        if let Some(rhos) = &self.rhos {
            if rhos.is_empty() || rhos.iter().any(|r| !(r.abs() < 1.0)) {
                return Err(config_error("rhos", "need a non-empty list of values in (-1, 1)"));
            }
        }
        for (key, grid) in [("x_grid", &self.x_grid), ("lambda_x_grid", &self.lambda_x_grid), ("lambdas", &self.lambdas)] {
            if let Some(g) = grid {
                check_grid(key, g)?;
            }
        }
        Ok(())
    }
}

fn check_grid(key: &str, grid: &Grid) -> Result<(), ConfigError> {
    if let Grid::Range(r) = grid {
        if r.points == 0 {
            return Err(config_error(key, "`points` must be positive"));
        }
        if r.points > 1 && !(r.stop > r.start) {
            return Err(config_error(key, "`stop` must exceed `start`"));
        }
    }
    let values = grid.values();
    if values.is_empty() {
        return Err(config_error(key, "grid is empty"));
    }
    if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(config_error(key, "grid values must be finite and > 0"));
    }
    if values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(config_error(key, "grid must be strictly ascending"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const PHASE: &str = r#"{"ratios": {"alpha_x": 1, "alpha_y": 1}, "rhos": [0, 0.5], "lambda_x_grid": {"start": 0.1, "stop": 4, "points": 40}}"#;

    #[test]
    fn unknown_key_is_named() {
        let err = ExperimentConfig::parse(r#"{"ratios": {"alpha_x": 1, "alpha_y": 1}, "nn": 3}"#).unwrap_err();
        assert_eq!(err.key, "nn");
        let err = ExperimentConfig::parse(r#"{"ratios": {"alpha_x": 1, "alpha_y": 1, "beta": 2}}"#).unwrap_err();
        assert_eq!(err.key, "ratios.beta");
        assert_eq!(ExperimentConfig::parse("{}").unwrap_err().key, "ratios");
        let err = ExperimentConfig::parse(r#"{"ratios": {"alpha_x": 1, "alpha_y": 1}, "x_grid": {"start": 1, "stop": 2, "count": 3}}"#)
            .unwrap_err();
        assert_eq!(err.key, "x_grid", "{err}");
        let err = ExperimentConfig::parse(r#"{"ratios": {"alpha_x": 1, "alpha_y": 1}, "n": "many"}"#).unwrap_err();
        assert_eq!(err.key, "n");
    }

    #[test]
    fn grids_expand_inclusively() {
        let c = ExperimentConfig::parse(PHASE).unwrap().resolve(Mode::TheoryPhase, None).unwrap();
        let g = c.lambda_x_grid.unwrap().values();
        assert_eq!(g.len(), 40);
        assert_eq!(g[0], 0.1);
        assert!((g[39] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn mode_specific_keys() {
        let c = ExperimentConfig::parse(PHASE).unwrap();
        assert_eq!(c.clone().resolve(Mode::TheoryBulk, None).unwrap_err().key, "rhos");
        let missing = ExperimentConfig::parse(r#"{"ratios": {"alpha_x": 1, "alpha_y": 1}}"#).unwrap();
        assert_eq!(missing.resolve(Mode::SimSpectrum, None).unwrap_err().key, "n");
        let mut conflicting = c;
        conflicting.mode = Some(Mode::PlsRun);
        assert_eq!(conflicting.resolve(Mode::TheoryPhase, None).unwrap_err().key, "mode");
    }

    #[test]
    fn resolved_config_round_trips() {
        let c = ExperimentConfig::parse(PHASE).unwrap().resolve(Mode::TheoryPhase, Some(9)).unwrap();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(ExperimentConfig::parse(&text).unwrap(), c);
        assert_eq!(c.seed, 9);
    }

    #[test]
    fn invalid_model_parameters_name_their_key() {
        let c = ExperimentConfig::parse(r#"{"ratios": {"alpha_x": -1, "alpha_y": 1}, "spikes": [{"lambda_x": 1, "lambda_y": 1, "rho": 0}]}"#)
            .unwrap();
        assert_eq!(c.resolve(Mode::TheoryOutliers, None).unwrap_err().key, "ratios");
        let c = ExperimentConfig::parse(r#"{"ratios": {"alpha_x": 1, "alpha_y": 1}, "spikes": [{"lambda_x": 1, "lambda_y": 1, "rho": 1}]}"#)
            .unwrap();
        assert_eq!(c.resolve(Mode::TheoryOutliers, None).unwrap_err().key, "spikes[0]");
    }
}
