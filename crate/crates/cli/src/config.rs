//! Run configuration: a JSON file with every field optional, overridden by
//! command-line flags.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use qgeo_core::baselines::{BaselineConfig, BaselineKind};
use qgeo_core::evaluation::nulls::DEFAULT_NULL_DRAWS;
use qgeo_core::evaluation::overlay::{DEFAULT_COOLDOWN, DEFAULT_OVERLAY_TAU};
use qgeo_core::evaluation::walkforward::{HpoGrid, Strategy, WalkForwardConfig};
use qgeo_core::evaluation::{default_crises, load_crises, CrisisWindow, EvalOptions};
use qgeo_core::observables::{ChannelConfig, ChannelId};
use qgeo_core::scoring::AdaptiveConfig;

use crate::error::{CliError, Result};

pub const OUT_DIR_ENV: &str = "QGEO_OUT_DIR";
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalScore {
    pub name: String,
    /// CSV with `date` and `z` columns.
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreOptions {
    /// Last date the preprocessing fit may see; `None` fits on the full
    /// sample.
    pub fit_end: Option<NaiveDate>,
    /// Emit an SVG chart next to each score CSV.
    pub charts: bool,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        Self {
            fit_end: None,
            charts: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationOptions {
    pub bootstrap: usize,
    pub permutations: usize,
    /// Trading days added after each crisis end.
    pub extension: usize,
    pub alpha: f64,
    /// Draws per null family; 0 skips the null models.
    pub null_draws: usize,
}

impl Default for EvaluationOptions {
    fn default() -> Self {
        let e = EvalOptions::default();
        Self {
            bootstrap: e.bootstrap,
            permutations: e.permutations,
            extension: e.extension,
            alpha: e.alpha,
            null_draws: DEFAULT_NULL_DRAWS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Fixed,
    Far,
    Adaptive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WalkForwardOptions {
    pub method: String,
    pub strategies: Vec<StrategyKind>,
    pub fixed_tau: f64,
    /// Target alarm events per year for the calibrated strategy.
    pub far_alpha: f64,
    pub adaptive: AdaptiveConfig,
    pub train_start_year: i32,
    pub first_eval_year: i32,
    pub last_eval_year: Option<i32>,
    /// Run the per-year grid search (channels only).
    pub hpo: bool,
    pub grid: HpoGrid,
}

impl Default for WalkForwardOptions {
    fn default() -> Self {
        let w = WalkForwardConfig::default();
        Self {
            method: ChannelId::BerryRate.name().into(),
            strategies: vec![StrategyKind::Fixed, StrategyKind::Far, StrategyKind::Adaptive],
            fixed_tau: 2.0,
            far_alpha: 1.0,
            adaptive: AdaptiveConfig::default(),
            train_start_year: w.train_start_year,
            first_eval_year: w.first_eval_year,
            last_eval_year: w.last_eval_year,
            hpo: false,
            grid: HpoGrid::default(),
        }
    }
}

impl WalkForwardOptions {
    pub fn strategy(&self, kind: StrategyKind) -> Strategy {
        match kind {
            StrategyKind::Fixed => Strategy::Fixed { tau: self.fixed_tau },
            StrategyKind::Far => Strategy::Far { alpha: self.far_alpha },
            StrategyKind::Adaptive => Strategy::Adaptive(self.adaptive.clone()),
        }
    }

    pub fn config(&self, kind: StrategyKind, extension: usize) -> WalkForwardConfig {
        WalkForwardConfig {
            train_start_year: self.train_start_year,
            first_eval_year: self.first_eval_year,
            last_eval_year: self.last_eval_year,
            strategy: self.strategy(kind),
            hpo: self.hpo.then(|| self.grid.clone()),
            extension,
            ..WalkForwardConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OverlayOptions {
    pub method: String,
    /// Index of the traded asset in `data`.
    pub asset: usize,
    pub tau: f64,
    pub cooldown: usize,
}

impl Default for OverlayOptions {
    fn default() -> Self {
        Self {
            method: ChannelId::BerryRate.name().into(),
            asset: 0,
            tau: DEFAULT_OVERLAY_TAU,
            cooldown: DEFAULT_COOLDOWN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateOptions {
    pub n: usize,
    pub p: usize,
    pub qfi_points: usize,
    pub bound_points: usize,
    /// Polar and azimuthal resolution of the monopole sphere.
    pub chern_grid: usize,
    pub gap_steps: usize,
    /// Random-walk step of the gap-scan feature stream.
    pub gap_step: f64,
    pub eps: f64,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        Self {
            n: 8,
            p: 8,
            qfi_points: 500,
            bound_points: 1500,
            chern_grid: 40,
            gap_steps: 5000,
            gap_step: 0.05,
            eps: qgeo_core::geometry::DEFAULT_EPS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// OHLCV CSVs; the first two assets feed the feature matrix.
    pub data: Vec<PathBuf>,
    pub min_common_dates: usize,
    pub output_dir: PathBuf,
    /// Seed of bootstrap, permutation, null-model and validation draws.
    pub seed: u64,
    /// Crisis table; the built-in table when absent.
    pub crises: Option<PathBuf>,
    pub channels: Vec<ChannelConfig>,
    pub baselines: Vec<BaselineConfig>,
    pub external_scores: Vec<ExternalScore>,
    pub score: ScoreOptions,
    pub evaluation: EvaluationOptions,
    pub walkforward: WalkForwardOptions,
    pub overlay: OverlayOptions,
    pub validate: ValidateOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: Vec::new(),
            min_common_dates: 252,
            output_dir: PathBuf::from("out"),
            seed: DEFAULT_SEED,
            crises: None,
            channels: ChannelId::ALL.into_iter().map(ChannelConfig::for_channel).collect(),
            baselines: BaselineKind::ALL.into_iter().map(BaselineConfig::for_method).collect(),
            external_scores: Vec::new(),
            score: ScoreOptions::default(),
            evaluation: EvaluationOptions::default(),
            walkforward: WalkForwardOptions::default(),
            overlay: OverlayOptions::default(),
            validate: ValidateOptions::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Checks that every referenced input file exists.
    pub fn check_paths(&self) -> Result<()> {
        let inputs = self
            .data
            .iter()
            .chain(self.crises.iter())
            .chain(self.external_scores.iter().map(|e| &e.path));
        for p in inputs {
            if !p.is_file() {
                return Err(CliError::Config(format!("input file not found: {}", p.display())));
            }
        }
        Ok(())
    }

    pub fn crisis_table(&self) -> Result<Vec<CrisisWindow>> {
        match &self.crises {
            Some(p) => Ok(load_crises(p)?),
            None => Ok(default_crises()),
        }
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            bootstrap: self.evaluation.bootstrap,
            permutations: self.evaluation.permutations,
            seed: self.seed,
            extension: self.evaluation.extension,
            alpha: self.evaluation.alpha,
        }
    }

    /// Keeps only the named channels and baselines, in the given order.
    pub fn select_methods(&mut self, names: &[String]) -> Result<()> {
        for n in names {
            let known = self.channels.iter().any(|c| c.channel.name() == n)
                || self.baselines.iter().any(|b| b.method.name() == n)
                || self.external_scores.iter().any(|e| &e.name == n)
                || n.parse::<ChannelId>().is_ok()
                || n.parse::<BaselineKind>().is_ok();
            if !known {
                return Err(CliError::Config(format!("unknown method `{n}`")));
            }
        }
        let pick_channel = |id: ChannelId, have: &[ChannelConfig]| {
            have.iter()
                .find(|c| c.channel == id)
                .cloned()
                .unwrap_or_else(|| ChannelConfig::for_channel(id))
        };
        let pick_baseline = |k: BaselineKind, have: &[BaselineConfig]| {
            have.iter()
                .find(|b| b.method == k)
                .cloned()
                .unwrap_or_else(|| BaselineConfig::for_method(k))
        };
        let channels = names
            .iter()
            .filter_map(|n| n.parse::<ChannelId>().ok())
            .map(|id| pick_channel(id, &self.channels))
            .collect();
        let baselines = names
            .iter()
            .filter_map(|n| n.parse::<BaselineKind>().ok())
            .map(|k| pick_baseline(k, &self.baselines))
            .collect();
        self.channels = channels;
        self.baselines = baselines;
        self.external_scores.retain(|e| names.contains(&e.name));
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_default() {
        let c: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.seed, 42);
        assert_eq!(c.channels.len(), 7);
        assert_eq!(c.baselines.len(), 4);
    }

    #[test]
    fn round_trip() {
        let c = RunConfig::default();
        let s = serde_json::to_string_pretty(&c).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&s).unwrap(), c);
    }

    #[test]
    fn unknown_field_is_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"sed": 1}"#).is_err());
    }

    #[test]
    fn partial_channel_config() {
        let c: RunConfig =
            serde_json::from_str(r#"{"channels": [{"channel": "ground_energy", "n": 4}]}"#).unwrap();
        assert_eq!(c.channels.len(), 1);
        assert_eq!(c.channels[0].channel, ChannelId::GroundEnergy);
        assert_eq!(c.channels[0].n, 4);
    }

    #[test]
    fn select_methods_keeps_order_and_configs() {
        let mut c = RunConfig::default();
        c.channels[1].n = 4;
        c.select_methods(&["cusum".into(), "spectral_entropy".into()]).unwrap();
        assert_eq!(c.channels.len(), 1);
        assert_eq!(c.channels[0].n, 4);
        assert_eq!(c.baselines[0].method, BaselineKind::Cusum);
        assert!(c.select_methods(&["nope".into()]).is_err());
    }

    #[test]
    fn missing_input_is_reported_with_path() {
        let c = RunConfig {
            data: vec![PathBuf::from("/nonexistent/a.csv")],
            ..RunConfig::default()
        };
        let e = c.check_paths().unwrap_err().to_string();
        assert!(e.contains("/nonexistent/a.csv"));
    }
}
