//! Declarative run description. Everything a run depends on lives here, so
//! the same `RunConfig` always produces the same artifacts.

use std::path::PathBuf;

use clap::ValueEnum;
use mixed_rabi::Family;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    /// Bogoliubov frame constants and pole energies.
    Frame,
    /// Sign and log-magnitude of G(E) on an energy grid.
    Gcurve,
    /// Regular eigenvalues from the zeros of G in an energy window.
    Spectrum,
    /// Lowest levels and poles along a g2 grid.
    Sweep,
    /// Exceptional eigenvalues on one pole line along a g2 grid.
    Exceptional,
    /// Truncated-Fock diagonalization.
    Diag,
    /// Effective-model parameters and ground-state magnetization along g2.
    Effective,
    /// Fidelity of the effective and one-photon evolutions.
    Dynamics,
    /// Ground-state Wigner function.
    Wigner,
    /// Level differences against an external bias.
    Transmission,
    /// Ground-state magnetization and photon number against g1_eff/g1c_eff.
    OrderParams,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Frame => "frame",
            CommandKind::Gcurve => "gcurve",
            CommandKind::Spectrum => "spectrum",
            CommandKind::Sweep => "sweep",
            CommandKind::Exceptional => "exceptional",
            CommandKind::Diag => "diag",
            CommandKind::Effective => "effective",
            CommandKind::Dynamics => "dynamics",
            CommandKind::Wigner => "wigner",
            CommandKind::Transmission => "transmission",
            CommandKind::OrderParams => "order-params",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelChoice {
    Full,
    Effective,
}

/// Uniform grid of `points` values on [lo, hi].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Grid {
    pub fn new(lo: f64, hi: f64, points: usize) -> Self {
        Grid { lo, hi, points }
    }

    pub fn values(&self) -> Vec<f64> {
        mixed_rabi::observables::linspace(self.lo, self.hi, self.points)
    }

    fn check(&self, what: &str) -> Result<(), CliError> {
        if self.points == 0 || !self.lo.is_finite() || !self.hi.is_finite() || self.hi < self.lo {
            return Err(CliError::Config(format!(
                "{what} grid needs finite lo <= hi and at least one point"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamsConfig {
    pub delta: f64,
    pub g1: f64,
    pub g2: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NumericConfig {
    /// Series length of the G-function; adaptive when absent.
    pub n_max: Option<usize>,
    /// Starting Fock truncation for diagonalization.
    pub truncation: Option<usize>,
    /// Mantissa bits for multiple precision (0 forces doubles).
    pub precision: Option<u32>,
    /// Energy step for G-curves and root search.
    pub resolution: Option<f64>,
    pub root_tol: f64,
    /// Energy window [lo, hi].
    pub window: Option<[f64; 2]>,
    /// Number of levels.
    pub levels: Option<usize>,
    pub family: Option<Family>,
    /// Pole index of an exceptional search.
    pub m: Option<usize>,
    pub g2_grid: Option<Grid>,
    pub g2_list: Option<Vec<f64>>,
    pub ratio_grid: Option<Grid>,
    pub eps_grid: Option<Grid>,
    pub alpha_grid: Option<Grid>,
    pub t_max: Option<f64>,
    pub t_step: Option<f64>,
    pub model: Option<ModelChoice>,
}

impl Default for NumericConfig {
    fn default() -> Self {
        NumericConfig {
            n_max: None,
            truncation: None,
            precision: None,
            resolution: None,
            root_tol: 1e-12,
            window: None,
            levels: None,
            family: None,
            m: None,
            g2_grid: None,
            g2_list: None,
            ratio_grid: None,
            eps_grid: None,
            alpha_grid: None,
            t_max: None,
            t_step: None,
            model: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Directory receiving the data file, the manifest and the optional
    /// gnuplot script.
    pub dir: PathBuf,
    pub format: Format,
    pub gnuplot_stub: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            format: Format::Csv,
            gnuplot_stub: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: CommandKind,
    #[serde(default)]
    pub params: ParamsConfig,
    #[serde(default)]
    pub numeric: NumericConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn new(command: CommandKind, params: ParamsConfig) -> Self {
        RunConfig {
            command,
            params,
            numeric: NumericConfig::default(),
            output: OutputConfig::default(),
        }
    }

    /// Overlays the fields present in a JSON document on this config.
    pub fn merged_with(&self, overrides: &serde_json::Value) -> Result<RunConfig, CliError> {
        let mut base = serde_json::to_value(self).map_err(|e| CliError::Config(e.to_string()))?;
        merge(&mut base, overrides);
        serde_json::from_value(base).map_err(|e| CliError::Config(format!("config file: {e}")))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let p = &self.params;
        for (name, v) in [("delta", p.delta), ("g1", p.g1), ("g2", p.g2), ("epsilon", p.epsilon)] {
            if !v.is_finite() {
                return Err(CliError::Config(format!("{name} must be finite")));
            }
        }
        let n = &self.numeric;
        if let Some([lo, hi]) = n.window {
            if !(lo < hi) {
                return Err(CliError::Config(format!("window needs lo < hi, got [{lo}, {hi}]")));
            }
        }
        if n.resolution.is_some_and(|r| !(r > 0.0)) {
            return Err(CliError::Config("resolution must be positive".into()));
        }
        if !(n.root_tol > 0.0) {
            return Err(CliError::Config("root tolerance must be positive".into()));
        }
        for (what, grid) in [
            ("g2", n.g2_grid),
            ("ratio", n.ratio_grid),
            ("epsilon", n.eps_grid),
            ("alpha", n.alpha_grid),
        ] {
            if let Some(g) = grid {
                g.check(what)?;
            }
        }
        if n.t_step.is_some_and(|s| !(s > 0.0)) || n.t_max.is_some_and(|t| !(t >= 0.0)) {
            return Err(CliError::Config("time axis needs t_max >= 0 and t_step > 0".into()));
        }
        if self.command == CommandKind::Exceptional && (n.family.is_none() || n.m.is_none()) {
            return Err(CliError::Config("exceptional needs --family and --m".into()));
        }
        if n.truncation.is_some_and(|m| m < mixed_rabi::diag::MIN_TRUNCATION) {
            return Err(CliError::Config(format!(
                "truncation must be at least {}",
                mixed_rabi::diag::MIN_TRUNCATION
            )));
        }
        Ok(())
    }
}

fn merge(base: &mut serde_json::Value, overrides: &serde_json::Value) {
    match (base, overrides) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, o) => *b = o.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_values_override_flags() {
        let mut cfg = RunConfig::new(
            CommandKind::Spectrum,
            ParamsConfig {
                delta: 0.5,
                g1: 0.1,
                g2: 0.2,
                epsilon: 0.0,
            },
        );
        cfg.numeric.levels = Some(3);
        let file = serde_json::json!({ "params": { "g2": 0.3 }, "numeric": { "window": [-1.0, 2.0] } });
        let merged = cfg.merged_with(&file).unwrap();
        assert_eq!(merged.params.g2, 0.3);
        assert_eq!(merged.params.delta, 0.5);
        assert_eq!(merged.numeric.window, Some([-1.0, 2.0]));
        assert_eq!(merged.numeric.levels, Some(3));
    }

    #[test]
    fn round_trips_through_json() {
        let mut cfg = RunConfig::new(CommandKind::OrderParams, ParamsConfig::default());
        cfg.numeric.family = Some(Family::B);
        cfg.numeric.g2_grid = Some(Grid::new(0.0, 0.4, 5));
        let text = serde_json::to_string(&cfg).unwrap();
        assert!(text.contains("\"order-params\""));
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), cfg);
    }

    #[test]
    fn rejects_unknown_fields_and_bad_windows() {
        let cfg = RunConfig::new(CommandKind::Frame, ParamsConfig::default());
        assert!(cfg.merged_with(&serde_json::json!({ "params": { "g3": 1.0 } })).is_err());
        let mut bad = cfg.clone();
        bad.numeric.window = Some([1.0, 0.0]);
        assert!(bad.validate().is_err());
        let mut exc = cfg;
        exc.command = CommandKind::Exceptional;
        assert!(exc.validate().is_err());
    }
}
