//! Command-line interface: flags, config resolution and dispatch.

use std::path::PathBuf;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

use qgeo_core::synthetic::PlantedConfig;

use crate::commands::{cmd_evaluate, cmd_features, cmd_overlay, cmd_score, cmd_synth, cmd_validate, cmd_walkforward};
use crate::config::{ExternalScore, RunConfig, StrategyKind, OUT_DIR_ENV};
use crate::error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "qgeo", version, about = "Geometric regime-shift scores and their evaluation")]
pub struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, env = OUT_DIR_ENV)]
    pub out: Option<PathBuf>,
    /// Seed of resampling, null-model and validation draws.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// OHLCV CSV file; repeat once per asset.
    #[arg(long, global = true)]
    pub data: Vec<PathBuf>,
    #[arg(long, global = true)]
    pub min_common_dates: Option<usize>,
    /// Crisis table (JSON); defaults to the built-in table.
    #[arg(long, global = true)]
    pub crises: Option<PathBuf>,
    /// Comma-separated channels/baselines/external names to keep.
    #[arg(long, global = true, value_delimiter = ',')]
    pub methods: Vec<String>,
    /// Precomputed score CSV as NAME=PATH; repeatable.
    #[arg(long = "external", global = true, value_parser = parse_external)]
    pub external: Vec<ExternalScore>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct YearArgs {
    #[arg(long)]
    pub train_start_year: Option<i32>,
    #[arg(long)]
    pub first_eval_year: Option<i32>,
    #[arg(long)]
    pub last_eval_year: Option<i32>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the raw and enriched feature matrices.
    Features,
    /// Write z-score series for every configured method.
    Score {
        /// Last date the preprocessing fit may see (default: full sample).
        #[arg(long)]
        fit_end: Option<NaiveDate>,
        #[arg(long)]
        no_charts: bool,
    },
    /// Per-crisis effect sizes, tests, ranking and null models.
    Evaluate {
        #[arg(long)]
        bootstrap: Option<usize>,
        #[arg(long)]
        permutations: Option<usize>,
        #[arg(long)]
        null_draws: Option<usize>,
    },
    /// Expanding-window out-of-sample detection.
    Walkforward {
        #[arg(long)]
        method: Option<String>,
        #[arg(long, value_enum, value_delimiter = ',')]
        strategy: Vec<StrategyKind>,
        /// Per-year grid search over n, p, operator method and window.
        #[arg(long)]
        hpo: bool,
        #[command(flatten)]
        years: YearArgs,
    },
    /// Numerical checks of the geometric identities.
    Validate {
        #[arg(long)]
        qfi_points: Option<usize>,
        #[arg(long)]
        bound_points: Option<usize>,
        #[arg(long)]
        chern_grid: Option<usize>,
        #[arg(long)]
        gap_steps: Option<usize>,
    },
    /// Long/cash de-risking backtest on out-of-sample scores.
    Overlay {
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        cooldown: Option<usize>,
        /// Index of the traded asset among the data files.
        #[arg(long)]
        asset: Option<usize>,
        #[command(flatten)]
        years: YearArgs,
    },
    /// Write a synthetic panel with planted high-variance windows.
    Synth {
        #[arg(long, default_value_t = 3000)]
        days: usize,
        #[arg(long, default_value_t = 10)]
        windows: usize,
        #[arg(long, default_value_t = 40)]
        window_len: usize,
        #[arg(long, default_value_t = 4.0)]
        multiplier: f64,
    },
    /// Print the resolved configuration as JSON.
    Config,
}

fn parse_external(s: &str) -> std::result::Result<ExternalScore, String> {
    let (name, path) = s
        .split_once('=')
        .filter(|(n, p)| !n.is_empty() && !p.is_empty())
        .ok_or_else(|| format!("expected NAME=PATH, got `{s}`"))?;
    Ok(ExternalScore {
        name: name.to_string(),
        path: PathBuf::from(path),
    })
}

fn apply_years(cfg: &mut RunConfig, y: &YearArgs) {
    let w = &mut cfg.walkforward;
    if let Some(v) = y.train_start_year {
        w.train_start_year = v;
    }
    if let Some(v) = y.first_eval_year {
        w.first_eval_year = v;
    }
    if y.last_eval_year.is_some() {
        w.last_eval_year = y.last_eval_year;
    }
}

impl Cli {
    /// The config file (or defaults) with every given flag applied.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if !self.data.is_empty() {
            cfg.data = self.data.clone();
        }
        if let Some(m) = self.min_common_dates {
            cfg.min_common_dates = m;
        }
        if self.crises.is_some() {
            cfg.crises = self.crises.clone();
        }
        for e in &self.external {
            cfg.external_scores.retain(|x| x.name != e.name);
            cfg.external_scores.push(e.clone());
        }
        if !self.methods.is_empty() {
            cfg.select_methods(&self.methods)?;
        }
        match &self.command {
            Command::Score { fit_end, no_charts } => {
                if fit_end.is_some() {
                    cfg.score.fit_end = *fit_end;
                }
                if *no_charts {
                    cfg.score.charts = false;
                }
            }
            Command::Evaluate {
                bootstrap,
                permutations,
                null_draws,
            } => {
                let e = &mut cfg.evaluation;
                e.bootstrap = bootstrap.unwrap_or(e.bootstrap);
                e.permutations = permutations.unwrap_or(e.permutations);
                e.null_draws = null_draws.unwrap_or(e.null_draws);
            }
            Command::Walkforward {
                method,
                strategy,
                hpo,
                years,
            } => {
                if let Some(m) = method {
                    cfg.walkforward.method = m.clone();
                }
                if !strategy.is_empty() {
                    cfg.walkforward.strategies = strategy.clone();
                }
                cfg.walkforward.hpo |= *hpo;
                apply_years(&mut cfg, years);
            }
            Command::Validate {
                qfi_points,
                bound_points,
                chern_grid,
                gap_steps,
            } => {
                let v = &mut cfg.validate;
                v.qfi_points = qfi_points.unwrap_or(v.qfi_points);
                v.bound_points = bound_points.unwrap_or(v.bound_points);
                v.chern_grid = chern_grid.unwrap_or(v.chern_grid);
                v.gap_steps = gap_steps.unwrap_or(v.gap_steps);
            }
            Command::Overlay {
                method,
                tau,
                cooldown,
                asset,
                years,
            } => {
                let o = &mut cfg.overlay;
                if let Some(m) = method {
                    o.method = m.clone();
                }
                o.tau = tau.unwrap_or(o.tau);
                o.cooldown = cooldown.unwrap_or(o.cooldown);
                o.asset = asset.unwrap_or(o.asset);
                apply_years(&mut cfg, years);
            }
            Command::Features | Command::Synth { .. } | Command::Config => {}
        }
        Ok(cfg)
    }
}

/// Files written and a few summary lines for the terminal.
#[derive(Debug, Default)]
pub struct Done {
    pub files: Vec<PathBuf>,
    pub summary: Vec<String>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "n/a".into())
}

pub fn run(cli: &Cli) -> Result<Done> {
    let cfg = cli.resolve()?;
    let mut done = Done::default();
    match &cli.command {
        Command::Features => {
            let o = cmd_features(&cfg)?;
            done.summary.push(format!("{} raw and {} enriched feature columns", o.value.0, o.value.1));
            done.files = o.files;
        }
        Command::Score { .. } => {
            let o = cmd_score(&cfg)?;
            done.summary.push(format!("scored {} methods", o.value.len()));
            done.files = o.files;
        }
        Command::Evaluate { .. } => {
            let o = cmd_evaluate(&cfg)?;
            for r in &o.value.ranking {
                done.summary.push(format!(
                    "{:<20} median d {:>7}  mean rank {:>6}  crises {}",
                    r.method,
                    fmt_opt(r.median_d),
                    fmt_opt(r.mean_rank),
                    r.evaluated
                ));
            }
            done.files = o.files;
        }
        Command::Walkforward { .. } => {
            let o = cmd_walkforward(&cfg)?;
            for r in &o.value {
                done.summary.push(format!(
                    "{} / {}: detection {} median delay {} mean FAR {}",
                    r.method,
                    r.strategy,
                    fmt_opt(r.detection_rate),
                    fmt_opt(r.median_delay),
                    fmt_opt(r.mean_far)
                ));
            }
            done.files = o.files;
        }
        Command::Validate { .. } => {
            let o = cmd_validate(&cfg)?;
            let r = &o.value;
            done.summary.push(format!(
                "qfi rmse {:e} r {:.9}; bound {}/{} max ratio {:.3e}; chern {:.6} reversed {:.6}; min gap {:.3e}",
                r.qfi.rmse,
                r.qfi.pearson_r,
                r.bound.satisfied,
                r.bound.points,
                r.bound.max_ratio,
                r.chern.value,
                r.chern.reversed,
                r.gap.min_gap
            ));
            let failures = r.failures();
            if !failures.is_empty() {
                return Err(CliError::ValidationFailed(format!(
                    "{} (report in {})",
                    failures.join(", "),
                    o.files[0].display()
                )));
            }
            done.files = o.files;
        }
        Command::Overlay { .. } => {
            let o = cmd_overlay(&cfg)?;
            let r = &o.value;
            done.summary.push(format!(
                "overlay return {:.4} drawdown {:.4}; buy and hold {:.4} drawdown {:.4}; {} triggers",
                r.strategy.total_return,
                r.strategy.max_drawdown,
                r.buy_and_hold.total_return,
                r.buy_and_hold.max_drawdown,
                r.triggers
            ));
            done.files = o.files;
        }
        Command::Synth {
            days,
            windows,
            window_len,
            multiplier,
        } => {
            let planted = PlantedConfig {
                n_days: *days,
                n_windows: *windows,
                window_len: *window_len,
                crisis_multiplier: *multiplier,
                seed: cfg.seed,
                ..PlantedConfig::default()
            };
            let o = cmd_synth(&cfg, &planted)?;
            done.summary.push(format!("{} planted windows", o.value.len()));
            done.files = o.files;
        }
        Command::Config => {
            done.summary.push(serde_json::to_string_pretty(&cfg)?);
        }
    }
    Ok(done)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("qgeo").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn flags_override_defaults() {
        let cli = parse(&[
            "evaluate",
            "--seed",
            "7",
            "--bootstrap",
            "100",
            "--data",
            "a.csv",
            "--data",
            "b.csv",
            "--out",
            "x",
        ]);
        let cfg = cli.resolve().unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.evaluation.bootstrap, 100);
        assert_eq!(cfg.data.len(), 2);
        assert_eq!(cfg.output_dir, PathBuf::from("x"));
        assert_eq!(cfg.eval_options().seed, 7);
    }

    #[test]
    fn walkforward_flags() {
        let cli = parse(&["walkforward", "--strategy", "far,adaptive", "--first-eval-year", "2012", "--hpo"]);
        let cfg = cli.resolve().unwrap();
        assert_eq!(cfg.walkforward.strategies, vec![StrategyKind::Far, StrategyKind::Adaptive]);
        assert_eq!(cfg.walkforward.first_eval_year, 2012);
        assert!(cfg.walkforward.hpo);
    }

    #[test]
    fn external_flag_parses() {
        let cli = parse(&["evaluate", "--external", "vix=/tmp/v.csv"]);
        assert_eq!(cli.external[0].name, "vix");
        assert!(Cli::try_parse_from(["qgeo", "evaluate", "--external", "novalue"]).is_err());
    }

    #[test]
    fn methods_filter() {
        let cli = parse(&["score", "--methods", "berry_rate,turbulence"]);
        let cfg = cli.resolve().unwrap();
        assert_eq!(cfg.channels.len(), 1);
        assert_eq!(cfg.baselines.len(), 1);
    }
}
