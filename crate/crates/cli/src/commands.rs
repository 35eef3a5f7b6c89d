//! One function per subcommand. Each reads a [`RunConfig`], writes its
//! artifacts under the output directory and returns what it computed.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate};
use serde::Serialize;

use qgeo_core::baselines::BaselineKind;
use qgeo_core::evaluation::crisis::index_windows;
use qgeo_core::evaluation::nulls::null_models;
use qgeo_core::evaluation::overlay::{overlay_backtest, performance, Performance};
use qgeo_core::evaluation::separability::{crisis_separability, EvalReport};
use qgeo_core::evaluation::walkforward::{walk_forward, WalkForwardResult};
use qgeo_core::evaluation::{CrisisWindow, NullReport};
use qgeo_core::features::{causal_cutoff, load_ohlcv};
use qgeo_core::observables::{ChannelConfig, ChannelId};
use qgeo_core::pipeline::{score_method_at, score_method_oos, Inputs, Method};
use qgeo_core::scoring::ScoreSeries;
use qgeo_core::synthetic::{planted_panel, PlantedConfig};
use qgeo_core::Error;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::svg::line_chart;
use crate::validate::{run_validation, ValidationReport};

/// A command's result and the files it wrote, in write order.
#[derive(Debug)]
pub struct Output<T> {
    pub value: T,
    pub files: Vec<PathBuf>,
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.output_dir.clone();
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    Ok(dir)
}

fn write_text(path: &Path, text: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))?;
    files.push(path.to_path_buf());
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T, files: &mut Vec<PathBuf>) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_text(path, &s, files)
}

fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>], files: &mut Vec<PathBuf>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let fail = |e: csv::Error| CliError::Config(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(fail)?;
    for r in rows {
        w.write_record(r).map_err(fail)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    files.push(path.to_path_buf());
    Ok(())
}

fn cell<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn load_inputs(cfg: &RunConfig) -> Result<Inputs> {
    if cfg.data.is_empty() {
        return Err(CliError::Config("no data files given (use --data or `data` in the config)".into()));
    }
    cfg.check_paths()?;
    let panel = load_ohlcv(&cfg.data, cfg.min_common_dates)?;
    Ok(Inputs::new(panel)?)
}

/// External z-scores placed on the panel calendar by date; dates missing
/// from the file are undefined.
fn external_method(name: &str, path: &Path, dates: &[NaiveDate]) -> Result<Method> {
    let (d, s) = ScoreSeries::read_csv(name, path)?;
    let by_date: HashMap<NaiveDate, Option<f64>> = d.into_iter().zip(s.z).collect();
    let z: Vec<Option<f64>> = dates.iter().map(|d| by_date.get(d).copied().flatten()).collect();
    if z.iter().all(|v| v.is_none()) {
        return Err(CliError::Config(format!(
            "{}: no scores on the panel calendar",
            path.display()
        )));
    }
    Ok(Method::External {
        name: name.to_string(),
        z,
    })
}

/// Channels, then baselines, then external scores, in config order.
pub fn configured_methods(cfg: &RunConfig, inputs: &Inputs) -> Result<Vec<Method>> {
    let mut out: Vec<Method> = cfg.channels.iter().cloned().map(Method::Channel).collect();
    out.extend(cfg.baselines.iter().cloned().map(Method::Baseline));
    for e in &cfg.external_scores {
        out.push(external_method(&e.name, &e.path, &inputs.panel.dates)?);
    }
    let mut seen = std::collections::HashSet::new();
    for m in &out {
        if !seen.insert(m.name()) {
            return Err(CliError::Config(format!("method `{}` is configured twice", m.name())));
        }
    }
    Ok(out)
}

/// A method by name: configured entries first, then defaults.
pub fn find_method(cfg: &RunConfig, inputs: &Inputs, name: &str) -> Result<Method> {
    if let Some(c) = cfg.channels.iter().find(|c| c.channel.name() == name) {
        return Ok(Method::Channel(c.clone()));
    }
    if let Some(b) = cfg.baselines.iter().find(|b| b.method.name() == name) {
        return Ok(Method::Baseline(b.clone()));
    }
    if let Some(e) = cfg.external_scores.iter().find(|e| e.name == name) {
        return external_method(&e.name, &e.path, &inputs.panel.dates);
    }
    if let Ok(id) = name.parse::<ChannelId>() {
        return Ok(Method::Channel(ChannelConfig::for_channel(id)));
    }
    if let Ok(k) = name.parse::<BaselineKind>() {
        return Ok(Method::Baseline(qgeo_core::baselines::BaselineConfig::for_method(k)));
    }
    Err(CliError::Config(format!("unknown method `{name}`")))
}

fn crisis_shading(dates: &[NaiveDate], crises: &[CrisisWindow]) -> Vec<(usize, usize)> {
    index_windows(dates, crises, 0).iter().map(|w| (w.start, w.end)).collect()
}

/// Raw (13-column) and enriched (52-column) feature CSVs.
pub fn cmd_features(cfg: &RunConfig) -> Result<Output<(usize, usize)>> {
    let inputs = load_inputs(cfg)?;
    let dir = out_dir(cfg)?;
    let mut files = Vec::new();
    for (name, m) in [("raw_features.csv", &inputs.raw), ("features.csv", &inputs.features)] {
        let path = dir.join(name);
        m.write_csv(&path)?;
        files.push(path);
    }
    Ok(Output {
        value: (inputs.raw.columns.len(), inputs.features.columns.len()),
        files,
    })
}

/// Last row whose date is on or before `fit_end`, or the last row.
fn fit_cutoff(dates: &[NaiveDate], fit_end: Option<NaiveDate>) -> Result<usize> {
    match fit_end {
        None => Ok(dates.len() - 1),
        Some(d) => dates
            .partition_point(|x| *x <= d)
            .checked_sub(1)
            .ok_or_else(|| CliError::Config(format!("fit_end {d} precedes the first date"))),
    }
}

/// One `scores/<method>.csv` (and chart) per configured method.
pub fn cmd_score(cfg: &RunConfig) -> Result<Output<Vec<ScoreSeries>>> {
    let inputs = load_inputs(cfg)?;
    let methods = configured_methods(cfg, &inputs)?;
    let dates = &inputs.panel.dates;
    let cutoff = fit_cutoff(dates, cfg.score.fit_end)?;
    let shade = crisis_shading(dates, &cfg.crisis_table()?);
    let dir = out_dir(cfg)?.join("scores");
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let mut files = Vec::new();
    let mut series = Vec::with_capacity(methods.len());
    for m in &methods {
        let s = score_method_at(m, &inputs, cutoff)?;
        let path = dir.join(format!("{}.csv", s.name));
        s.write_csv(dates, &path)?;
        files.push(path);
        if cfg.score.charts {
            let svg = line_chart(&format!("{} z-score", s.name), dates, &[("z", &s.z)], &shade);
            write_text(&dir.join(format!("{}.svg", s.name)), &svg, &mut files)?;
        }
        series.push(s);
    }
    Ok(Output { value: series, files })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankRow {
    pub method: String,
    pub median_d: Option<f64>,
    /// Friedman mean rank (1 = best) when the test could be run.
    pub mean_rank: Option<f64>,
    pub evaluated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NullEntry {
    pub method: String,
    /// Last date seen by the fit of the series under test.
    pub fit_cutoff: Option<NaiveDate>,
    pub nulls: Option<NullReport>,
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluateReport {
    pub separability: EvalReport,
    pub ranking: Vec<RankRow>,
    pub nulls: Vec<NullEntry>,
}

fn ranking(report: &EvalReport) -> Vec<RankRow> {
    let mut rows: Vec<RankRow> = report
        .methods
        .iter()
        .enumerate()
        .map(|(i, m)| RankRow {
            method: m.method.clone(),
            median_d: m.median_d,
            mean_rank: report.friedman.as_ref().map(|f| f.mean_ranks[i]),
            evaluated: m.evaluated,
        })
        .collect();
    let key = |r: &RankRow| match (r.mean_rank, r.median_d) {
        (Some(rank), _) => (0, rank),
        (None, Some(d)) => (1, -d),
        (None, None) => (2, 0.0),
    };
    rows.sort_by(|a, b| {
        let (ka, kb) = (key(a), key(b));
        ka.0.cmp(&kb.0).then(ka.1.total_cmp(&kb.1)).then(a.method.cmp(&b.method))
    });
    rows
}

/// Null models on one score series per method. Fitted methods use a single
/// fit ending before the earliest panel crisis that leaves enough history,
/// so the series is out of sample for every crisis.
fn method_nulls(
    inputs: &Inputs,
    method: &Method,
    crises: &[CrisisWindow],
    cfg: &RunConfig,
) -> Result<NullEntry> {
    let dates = &inputs.panel.dates;
    let ext = cfg.evaluation.extension;
    let all = index_windows(dates, crises, ext);
    let panel: Vec<_> = all.iter().filter(|w| w.include_in_panel).cloned().collect();
    let mut entry = NullEntry {
        method: method.name(),
        fit_cutoff: None,
        nulls: None,
        skipped: None,
    };
    let series = if method.needs_fit() {
        let mut starts: Vec<NaiveDate> = panel.iter().map(|w| dates[w.start]).collect();
        starts.sort();
        let mut found = None;
        for s in starts {
            let Some(cut) = causal_cutoff(dates, s) else { continue };
            match score_method_at(method, inputs, cut) {
                Ok(series) => {
                    found = Some((cut, series));
                    break;
                }
                Err(Error::InsufficientHistory(_) | Error::RankDeficient { .. }) => continue,
                Err(e) => return Err(e.into()),
            }
        }
        match found {
            Some((cut, s)) => {
                entry.fit_cutoff = Some(dates[cut]);
                s
            }
            None => {
                entry.skipped = Some("no crisis leaves enough history for a fit".into());
                return Ok(entry);
            }
        }
    } else {
        score_method_at(method, inputs, inputs.len() - 1)?
    };
    match null_models(&series.z, &panel, &all, 0, cfg.evaluation.null_draws, cfg.seed) {
        Ok(r) => entry.nulls = Some(r),
        Err(e @ (Error::InvalidInput(_) | Error::Infeasible(_))) => entry.skipped = Some(e.to_string()),
        Err(e) => return Err(e.into()),
    }
    Ok(entry)
}

/// Separability report (JSON), per-crisis and ranking tables (CSV).
pub fn cmd_evaluate(cfg: &RunConfig) -> Result<Output<EvaluateReport>> {
    let inputs = load_inputs(cfg)?;
    let methods = configured_methods(cfg, &inputs)?;
    let crises = cfg.crisis_table()?;
    let sep = crisis_separability(&inputs, &methods, &crises, &cfg.eval_options())?;
    let nulls = if cfg.evaluation.null_draws == 0 {
        Vec::new()
    } else {
        methods
            .iter()
            .map(|m| method_nulls(&inputs, m, &crises, cfg))
            .collect::<Result<_>>()?
    };
    let report = EvaluateReport {
        ranking: ranking(&sep),
        separability: sep,
        nulls,
    };

    let dir = out_dir(cfg)?;
    let mut files = Vec::new();
    write_json(&dir.join("eval_report.json"), &report, &mut files)?;
    let mut rows = Vec::new();
    for m in &report.separability.methods {
        for e in &m.entries {
            let ef = e.effect.as_ref();
            rows.push(vec![
                m.method.clone(),
                e.crisis.clone(),
                format!("{:?}", e.category).to_lowercase(),
                cell(e.cutoff),
                cell(ef.and_then(|x| x.cohens_d)),
                cell(ef.map(|x| x.cliffs_delta)),
                cell(ef.map(|x| x.ci_low)),
                cell(ef.map(|x| x.ci_high)),
                cell(ef.map(|x| x.ci_flagged)),
                cell(ef.map(|x| x.n_crisis)),
                cell(ef.map(|x| x.n_normal)),
                cell(ef.map(|x| x.p_welch)),
                cell(ef.map(|x| x.p_welch_holm)),
                cell(ef.map(|x| x.p_permutation)),
                e.skipped.clone().unwrap_or_default(),
            ]);
        }
    }
    write_table(
        &dir.join("separability.csv"),
        &[
            "method",
            "crisis",
            "category",
            "cutoff",
            "cohens_d",
            "cliffs_delta",
            "ci_low",
            "ci_high",
            "ci_flagged",
            "n_crisis",
            "n_normal",
            "p_welch",
            "p_welch_holm",
            "p_permutation",
            "skipped",
        ],
        &rows,
        &mut files,
    )?;
    let null_of = |m: &str| report.nulls.iter().find(|n| n.method == m).and_then(|n| n.nulls.as_ref());
    let rank_rows: Vec<Vec<String>> = report
        .ranking
        .iter()
        .map(|r| {
            let n = null_of(&r.method);
            vec![
                r.method.clone(),
                cell(r.median_d),
                cell(r.mean_rank),
                r.evaluated.to_string(),
                cell(n.map(|n| n.circular_shift.percentile)),
                cell(n.map(|n| n.random_windows.percentile)),
            ]
        })
        .collect();
    write_table(
        &dir.join("ranking.csv"),
        &[
            "method",
            "median_d",
            "mean_rank",
            "evaluated",
            "shift_null_percentile",
            "window_null_percentile",
        ],
        &rank_rows,
        &mut files,
    )?;
    Ok(Output { value: report, files })
}

/// Walk-forward detection for one method under each configured strategy.
pub fn cmd_walkforward(cfg: &RunConfig) -> Result<Output<Vec<WalkForwardResult>>> {
    let inputs = load_inputs(cfg)?;
    let method = find_method(cfg, &inputs, &cfg.walkforward.method)?;
    let crises = cfg.crisis_table()?;
    if cfg.walkforward.strategies.is_empty() {
        return Err(CliError::Config("no walk-forward strategy selected".into()));
    }
    let results: Vec<WalkForwardResult> = cfg
        .walkforward
        .strategies
        .iter()
        .map(|&k| walk_forward(&inputs, &method, &crises, &cfg.walkforward.config(k, cfg.evaluation.extension)))
        .collect::<qgeo_core::Result<_>>()?;

    let dir = out_dir(cfg)?;
    let mut files = Vec::new();
    write_json(&dir.join("walkforward.json"), &results, &mut files)?;
    let mut years = Vec::new();
    let mut detections = Vec::new();
    for r in &results {
        for y in &r.years {
            let c = y.config.as_ref();
            years.push(vec![
                r.strategy.clone(),
                y.year.to_string(),
                cell(y.tau),
                y.calibration_fallback.to_string(),
                y.hpo_fallback.to_string(),
                y.normal_days.to_string(),
                y.far_events_per_year.to_string(),
                y.far_exceedances_per_day.to_string(),
                cell(y.oos_d),
                cell(c.map(|c| c.n)),
                cell(c.map(|c| c.p)),
                cell(c.map(|c| format!("{:?}", c.method).to_lowercase())),
                cell(c.map(|c| c.window)),
            ]);
        }
        for d in &r.detections {
            detections.push(vec![
                r.strategy.clone(),
                d.crisis.clone(),
                d.year.to_string(),
                d.detected.to_string(),
                cell(d.delay),
                cell(d.first_alarm),
            ]);
        }
    }
    write_table(
        &dir.join("walkforward_years.csv"),
        &[
            "strategy",
            "year",
            "tau",
            "calibration_fallback",
            "hpo_fallback",
            "normal_days",
            "far_events_per_year",
            "far_exceedances_per_day",
            "oos_d",
            "n",
            "p",
            "operator_method",
            "window",
        ],
        &years,
        &mut files,
    )?;
    write_table(
        &dir.join("walkforward_detections.csv"),
        &["strategy", "crisis", "year", "detected", "delay", "first_alarm"],
        &detections,
        &mut files,
    )?;
    Ok(Output { value: results, files })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlayReport {
    pub method: String,
    pub asset: String,
    pub tau: f64,
    pub cooldown: usize,
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub strategy: Performance,
    pub buy_and_hold: Performance,
    pub time_in_cash: f64,
    pub triggers: usize,
}

/// Long/cash overlay over the walk-forward evaluation years, driven by
/// monthly-refit out-of-sample scores.
pub fn cmd_overlay(cfg: &RunConfig) -> Result<Output<OverlayReport>> {
    let inputs = load_inputs(cfg)?;
    let o = &cfg.overlay;
    let asset = inputs
        .panel
        .assets
        .get(o.asset)
        .ok_or_else(|| CliError::Config(format!("asset index {} out of range", o.asset)))?;
    let method = find_method(cfg, &inputs, &o.method)?;
    let dates = &inputs.panel.dates;
    let wf = &cfg.walkforward;
    let train_start = dates.partition_point(|d| d.year() < wf.train_start_year);
    let from = dates.partition_point(|d| d.year() < wf.first_eval_year).max(train_start + 1);
    let to = match wf.last_eval_year {
        Some(y) => dates.partition_point(|d| d.year() <= y),
        None => dates.len(),
    };
    if from + 2 > to {
        return Err(CliError::Config("overlay period has fewer than 2 days".into()));
    }
    let z = score_method_oos(&method, &inputs, train_start, from, to)?;
    let prices = &asset.adj_close[from..to];
    let r = overlay_backtest(prices, &z[from..to], o.tau, o.cooldown)?;
    let bh_returns: Vec<f64> = prices.windows(2).map(|w| w[1] / w[0] - 1.0).collect();
    let (_, bh_curve) = performance(&bh_returns);
    let report = OverlayReport {
        method: method.name(),
        asset: asset.name.clone(),
        tau: o.tau,
        cooldown: o.cooldown,
        start: dates[from],
        end: dates[to - 1],
        strategy: r.strategy,
        buy_and_hold: r.buy_and_hold,
        time_in_cash: r.time_in_cash,
        triggers: r.triggers,
    };

    let dir = out_dir(cfg)?;
    let mut files = Vec::new();
    write_json(&dir.join("overlay.json"), &report, &mut files)?;
    let mut strat = vec![Some(1.0)];
    strat.extend(r.equity.iter().map(|v| Some(*v)));
    let mut bh = vec![Some(1.0)];
    bh.extend(bh_curve.iter().map(|v| Some(*v)));
    let period = &dates[from..to];
    let rows: Vec<Vec<String>> = period
        .iter()
        .zip(strat.iter().zip(&bh))
        .map(|(d, (s, b))| vec![d.to_string(), cell(*s), cell(*b)])
        .collect();
    write_table(&dir.join("overlay_equity.csv"), &["date", "strategy", "buy_and_hold"], &rows, &mut files)?;
    let svg = line_chart(
        &format!("{} overlay on {}", report.method, report.asset),
        period,
        &[("overlay", &strat), ("buy and hold", &bh)],
        &[],
    );
    write_text(&dir.join("overlay.svg"), &svg, &mut files)?;
    Ok(Output { value: report, files })
}

/// Runs the geometric checks; a failed check is an error after the
/// report has been written.
pub fn cmd_validate(cfg: &RunConfig) -> Result<Output<ValidationReport>> {
    let report = run_validation(&cfg.validate, cfg.seed)?;
    let dir = out_dir(cfg)?;
    let mut files = Vec::new();
    write_json(&dir.join("validation.json"), &report, &mut files)?;
    Ok(Output { value: report, files })
}

/// Planted variance-regime panel: one OHLCV CSV per asset and the planted
/// windows as a crisis table.
pub fn cmd_synth(cfg: &RunConfig, planted: &PlantedConfig) -> Result<Output<Vec<(usize, usize)>>> {
    let p = planted_panel(planted)?;
    let dir = out_dir(cfg)?;
    let mut files = p.panel.write_csvs(&dir)?;
    write_json(&dir.join("crises.json"), &p.crises, &mut files)?;
    Ok(Output {
        value: p.windows,
        files,
    })
}
