//! Expanding-window walk-forward detection with optional grid search.

use std::collections::HashMap;

use chrono::{Datelike, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::crisis::{crisis_mask, index_windows, CrisisWindow, IndexedWindow, EXTENSION_DAYS};
use super::effect::cohens_d;
use crate::embedding::OperatorMethod;
use crate::error::{Error, Result};
use crate::observables::ChannelConfig;
use crate::pipeline::{fit_and_raw, score_method_at, score_method_oos, Inputs, Method};
use crate::scoring::{
    causal_zscore, events_per_year, extract_alarms, far_threshold, quantile_active, velocity_active,
    AdaptiveConfig, Mechanism, DEFAULT_GAP_DAYS,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    Fixed { tau: f64 },
    /// Threshold calibrated on past normal days to `alpha` events per year.
    Far { alpha: f64 },
    Adaptive(AdaptiveConfig),
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Fixed { .. } => "fixed",
            Strategy::Far { .. } => "far",
            Strategy::Adaptive(_) => "adaptive",
        }
    }
}

impl Default for Strategy {
    fn default() -> Self {
        Strategy::Fixed { tau: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HpoGrid {
    pub n: Vec<usize>,
    pub p: Vec<usize>,
    pub method: Vec<OperatorMethod>,
    pub window: Vec<usize>,
    /// Weight of the across-crisis standard deviation in the objective.
    pub penalty: f64,
}

impl Default for HpoGrid {
    fn default() -> Self {
        Self {
            n: vec![4, 8, 16],
            p: vec![10, 15, 20],
            method: vec![OperatorMethod::Random, OperatorMethod::PcaInspired],
            window: vec![10, 20, 30],
            penalty: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WalkForwardConfig {
    /// First calendar year of every training window.
    pub train_start_year: i32,
    pub first_eval_year: i32,
    /// Defaults to the last year on the calendar.
    pub last_eval_year: Option<i32>,
    pub strategy: Strategy,
    pub hpo: Option<HpoGrid>,
    pub extension: usize,
    pub gap_days: usize,
}

impl Default for WalkForwardConfig {
    fn default() -> Self {
        Self {
            train_start_year: 2005,
            first_eval_year: 2010,
            last_eval_year: None,
            strategy: Strategy::default(),
            hpo: None,
            extension: EXTENSION_DAYS,
            gap_days: DEFAULT_GAP_DAYS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectedConfig {
    pub n: usize,
    pub p: usize,
    pub method: OperatorMethod,
    pub window: usize,
    pub objective: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrisisDetection {
    pub crisis: String,
    pub year: i32,
    pub detected: bool,
    /// Trading days from crisis start to the first alarm in the extended
    /// window, clamped at zero.
    pub delay: Option<usize>,
    pub first_alarm: Option<NaiveDate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct YearResult {
    pub year: i32,
    pub config: Option<SelectedConfig>,
    /// Grid search had no earlier crisis and defaults were used.
    pub hpo_fallback: bool,
    /// `None` for the adaptive strategy.
    pub tau: Option<f64>,
    /// FAR calibration failed and the fixed threshold 2 was used.
    pub calibration_fallback: bool,
    pub normal_days: usize,
    /// Alarm events per year on non-crisis days.
    pub far_events_per_year: f64,
    /// Fraction of non-crisis days with an active alarm.
    pub far_exceedances_per_day: f64,
    pub oos_d: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WalkForwardResult {
    pub method: String,
    pub strategy: String,
    pub years: Vec<YearResult>,
    pub detections: Vec<CrisisDetection>,
    pub detection_rate: Option<f64>,
    pub median_delay: Option<f64>,
    pub mean_far: Option<f64>,
}

/// `(n, p, operator method)` of a grid point.
type GridKey = (usize, usize, OperatorMethod);

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// `mean - penalty * sd` of the defined values (sd = 0 for one value).
pub fn consistency_objective(ds: &[f64], penalty: f64) -> Option<f64> {
    if ds.is_empty() {
        return None;
    }
    let n = ds.len() as f64;
    let m = ds.iter().sum::<f64>() / n;
    let sd = if ds.len() > 1 {
        (ds.iter().map(|d| (d - m) * (d - m)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Some(m - penalty * sd)
}

fn year_bounds(dates: &[NaiveDate], year: i32) -> (usize, usize) {
    let s = dates.partition_point(|d| d.year() < year);
    let e = dates.partition_point(|d| d.year() <= year);
    (s, e)
}

/// d of each window fully inside `[train_start, upto)` against the normal
/// days of that range.
fn past_ds(z: &[Option<f64>], past: &[&IndexedWindow], mask: &[bool], train_start: usize, upto: usize) -> Vec<f64> {
    let normal: Vec<f64> = (train_start..upto).filter(|&t| !mask[t]).filter_map(|t| z[t]).collect();
    past.iter()
        .filter_map(|w| {
            let c: Vec<f64> = (w.ext_start..=w.ext_end).filter_map(|t| z[t]).collect();
            cohens_d(&c, &normal)
        })
        .collect()
}

/// Grid point maximizing the consistency objective over `past` windows
/// with every fit on rows `[train_start, ys)`. Raw series are shared across
/// smoothing windows.
fn grid_search(
    base: &ChannelConfig,
    grid: &HpoGrid,
    inputs: &Inputs,
    past: &[&IndexedWindow],
    mask: &[bool],
    train_start: usize,
    ys: usize,
) -> Option<SelectedConfig> {
    let keys: Vec<(usize, usize, OperatorMethod)> = grid
        .n
        .iter()
        .flat_map(|&n| grid.p.iter().flat_map(move |&p| grid.method.iter().map(move |&m| (n, p, m))))
        .collect();
    let raws: HashMap<GridKey, Option<Vec<Option<f64>>>> = keys
        .par_iter()
        .map(|&(n, p, m)| {
            let cfg = ChannelConfig { n, p, method: m, ..base.clone() };
            let raw = cfg.validate().ok().and_then(|_| fit_and_raw(&cfg, inputs, train_start, ys - 1, ys).ok());
            ((n, p, m), raw)
        })
        .collect();
    let mut best: Option<SelectedConfig> = None;
    for &(n, p, m) in &keys {
        let Some(raw) = &raws[&(n, p, m)] else { continue };
        for &w in &grid.window {
            let z = causal_zscore(raw, w, base.min_history).z;
            let Some(obj) = consistency_objective(&past_ds(&z, past, mask, train_start, ys), grid.penalty) else {
                continue;
            };
            if best.as_ref().is_none_or(|b| obj > b.objective.unwrap_or(f64::NEG_INFINITY)) {
                best = Some(SelectedConfig { n, p, method: m, window: w, objective: Some(obj) });
            }
        }
    }
    best
}

fn apply(base: &ChannelConfig, s: &SelectedConfig) -> ChannelConfig {
    ChannelConfig {
        n: s.n,
        p: s.p,
        method: s.method,
        window: s.window,
        ..base.clone()
    }
}

/// In-sample z on rows `[0, ys)` from a fit on `[train_start, ys)`, used
/// for threshold calibration and adaptive history.
fn history_z(method: &Method, inputs: &Inputs, train_start: usize, ys: usize) -> Result<Vec<Option<f64>>> {
    match method {
        Method::Channel(c) => {
            let raw = fit_and_raw(c, inputs, train_start, ys - 1, ys)?;
            Ok(causal_zscore(&raw, c.window, c.min_history).z)
        }
        _ => Ok(score_method_at(method, inputs, ys - 1)?.z[..ys].to_vec()),
    }
}

/// Walk-forward evaluation of one detector.
///
/// For each evaluation year the model is trained on rows from
/// `train_start_year` up to the year start, the year is scored with
/// monthly refits, and alarms follow the strategy with thresholds fixed
/// from past data. Detection looks for the first alarm inside each panel
/// crisis's extended window, for crises starting in an evaluation year.
pub fn walk_forward(
    inputs: &Inputs,
    method: &Method,
    crises: &[CrisisWindow],
    cfg: &WalkForwardConfig,
) -> Result<WalkForwardResult> {
    let dates = &inputs.panel.dates;
    if dates.is_empty() {
        return Err(Error::InvalidInput("empty panel".into()));
    }
    let all = index_windows(dates, crises, cfg.extension);
    let mask = crisis_mask(inputs.len(), &all);
    let train_start = dates.partition_point(|d| d.year() < cfg.train_start_year);
    let last_year = cfg.last_eval_year.unwrap_or(dates[dates.len() - 1].year());
    let base = match method {
        Method::Channel(c) => Some(c.clone()),
        _ => None,
    };

    let mut z_all: Vec<Option<f64>> = vec![None; inputs.len()];
    let mut active: Vec<bool> = vec![false; inputs.len()];
    let mut scored: Vec<bool> = vec![false; inputs.len()];
    let mut years = Vec::new();
    for year in cfg.first_eval_year..=last_year {
        let (ys, ye) = year_bounds(dates, year);
        if ys >= ye {
            continue;
        }
        if ys <= train_start {
            return Err(Error::InsufficientHistory(format!(
                "no training rows before evaluation year {year}"
            )));
        }
        let mut hpo_fallback = false;
        let (year_method, selected) = match (&base, &cfg.hpo) {
            (Some(b), Some(grid)) => {
                let past: Vec<&IndexedWindow> = all
                    .iter()
                    .filter(|w| w.include_in_panel && w.ext_start >= train_start && w.ext_end < ys)
                    .collect();
                let found = if past.is_empty() {
                    None
                } else {
                    grid_search(b, grid, inputs, &past, &mask, train_start, ys)
                };
                hpo_fallback = found.is_none();
                let sel = found.unwrap_or(SelectedConfig {
                    n: b.n,
                    p: b.p,
                    method: b.method,
                    window: b.window,
                    objective: None,
                });
                (Method::Channel(apply(b, &sel)), Some(sel))
            }
            (Some(b), None) => (
                method.clone(),
                Some(SelectedConfig { n: b.n, p: b.p, method: b.method, window: b.window, objective: None }),
            ),
            _ => (method.clone(), None),
        };

        let hist = history_z(&year_method, inputs, train_start, ys)?;
        let oos = score_method_oos(&year_method, inputs, train_start, ys, ye)?;
        let mut calibration_fallback = false;
        let tau = match &cfg.strategy {
            Strategy::Fixed { tau } => Some(*tau),
            Strategy::Far { alpha } => {
                match far_threshold(&hist[train_start..ys], &mask[train_start..ys], *alpha, cfg.gap_days) {
                    Ok(c) => Some(c.tau),
                    Err(Error::Calibration(_)) => {
                        calibration_fallback = true;
                        Some(2.0)
                    }
                    Err(e) => return Err(e),
                }
            }
            Strategy::Adaptive(_) => None,
        };
        match (&cfg.strategy, tau) {
            (Strategy::Adaptive(ac), _) => {
                let mut series = hist.clone();
                series.extend_from_slice(&oos[ys..ye]);
                let q = quantile_active(&series, ac);
                let v = velocity_active(&series, ac);
                for t in ys..ye {
                    active[t] = q[t] || v[t];
                }
            }
            (_, Some(tau)) => {
                for t in ys..ye {
                    active[t] = oos[t].is_some_and(|v| v > tau);
                }
            }
            _ => unreachable!("threshold strategies always set tau"),
        }
        z_all[ys..ye].copy_from_slice(&oos[ys..ye]);
        scored[ys..ye].iter_mut().for_each(|s| *s = true);

        let normal: Vec<usize> = (ys..ye).filter(|&t| !mask[t] && oos[t].is_some()).collect();
        let seq: Vec<Option<f64>> = normal.iter().map(|&t| Some(if active[t] { 1.0 } else { 0.0 })).collect();
        let events = extract_alarms(&seq, 0.5, cfg.gap_days, Mechanism::Fixed).len();
        let exceed = normal.iter().filter(|&&t| active[t]).count();
        let crisis_z: Vec<f64> = (ys..ye).filter(|&t| mask[t]).filter_map(|t| oos[t]).collect();
        let normal_z: Vec<f64> = normal.iter().filter_map(|&t| oos[t]).collect();
        years.push(YearResult {
            year,
            config: selected,
            hpo_fallback,
            tau,
            calibration_fallback,
            normal_days: normal.len(),
            far_events_per_year: events_per_year(events, normal.len()),
            far_exceedances_per_day: if normal.is_empty() { 0.0 } else { exceed as f64 / normal.len() as f64 },
            oos_d: cohens_d(&crisis_z, &normal_z),
        });
    }

    let detections: Vec<CrisisDetection> = all
        .iter()
        .filter(|w| w.include_in_panel)
        .filter_map(|w| {
            let year = dates[w.start].year();
            if year < cfg.first_eval_year || year > last_year {
                return None;
            }
            let hit = (w.ext_start..=w.ext_end).find(|&t| scored[t] && active[t]);
            Some(CrisisDetection {
                crisis: w.name.clone(),
                year,
                detected: hit.is_some(),
                delay: hit.map(|t| t.saturating_sub(w.start)),
                first_alarm: hit.map(|t| dates[t]),
            })
        })
        .collect();
    let detection_rate = (!detections.is_empty())
        .then(|| detections.iter().filter(|d| d.detected).count() as f64 / detections.len() as f64);
    let median_delay = median(detections.iter().filter_map(|d| d.delay.map(|v| v as f64)).collect());
    let fars: Vec<f64> = years.iter().filter(|y| y.normal_days > 0).map(|y| y.far_events_per_year).collect();
    let mean_far = (!fars.is_empty()).then(|| fars.iter().sum::<f64>() / fars.len() as f64);
    Ok(WalkForwardResult {
        method: method.name(),
        strategy: cfg.strategy.name().to_string(),
        years,
        detections,
        detection_rate,
        median_delay,
        mean_far,
    })
}
