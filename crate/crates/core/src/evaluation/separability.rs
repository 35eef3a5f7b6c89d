//! Per-crisis causal separability of each method's score.

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::crisis::{crisis_mask, index_windows, split_samples, Category, CrisisWindow, IndexedWindow, EXTENSION_DAYS};
use super::effect::{block_bootstrap_ci, cliffs_delta, cohens_d, DEFAULT_BOOTSTRAP, DEFAULT_EVAL_SEED};
use super::hypothesis::{friedman_nemenyi, holm, permutation_test, welch, FriedmanResult, DEFAULT_PERMUTATIONS};
use crate::error::{Error, Result};
use crate::features::causal_cutoff;
use crate::pipeline::{score_method_at, Inputs, Method};
use crate::scoring::ScoreSeries;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    pub bootstrap: usize,
    pub permutations: usize,
    pub seed: u64,
    pub extension: usize,
    /// Significance level of the Nemenyi critical difference.
    pub alpha: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            bootstrap: DEFAULT_BOOTSTRAP,
            permutations: DEFAULT_PERMUTATIONS,
            seed: DEFAULT_EVAL_SEED,
            extension: EXTENSION_DAYS,
            alpha: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectSizeResult {
    /// `None` when the pooled variance is zero and the means differ.
    pub cohens_d: Option<f64>,
    pub cliffs_delta: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub ci_flagged: bool,
    pub n_crisis: usize,
    pub n_normal: usize,
    pub p_welch: f64,
    /// Holm-adjusted across the crises evaluated for the same method.
    pub p_welch_holm: f64,
    pub p_permutation: f64,
}

/// Effect sizes and tests for one crisis/normal split.
pub fn effect_size(crisis: &[f64], normal: &[f64], opts: &EvalOptions) -> Result<EffectSizeResult> {
    let ci = block_bootstrap_ci(crisis, normal, opts.bootstrap, opts.seed)?;
    let p_welch = welch(crisis, normal)?.p;
    Ok(EffectSizeResult {
        cohens_d: cohens_d(crisis, normal),
        cliffs_delta: cliffs_delta(crisis, normal)?,
        ci_low: ci.lo,
        ci_high: ci.hi,
        ci_flagged: ci.flagged,
        n_crisis: crisis.len(),
        n_normal: normal.len(),
        p_welch,
        p_welch_holm: p_welch,
        p_permutation: permutation_test(crisis, normal, opts.permutations, opts.seed)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrisisEntry {
    pub crisis: String,
    pub category: Category,
    /// Last date any fit could see.
    pub cutoff: Option<NaiveDate>,
    pub effect: Option<EffectSizeResult>,
    /// Why the crisis was skipped, if it was.
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodReport {
    pub method: String,
    pub entries: Vec<CrisisEntry>,
    pub median_d: Option<f64>,
    pub evaluated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub crises: Vec<String>,
    pub methods: Vec<MethodReport>,
    /// Over crises where every method has a defined d.
    pub friedman: Option<FriedmanResult>,
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

fn first_defined(z: &[Option<f64>]) -> usize {
    z.iter().position(|v| v.is_some()).unwrap_or(z.len())
}

fn evaluate_one(
    score: Result<ScoreSeries>,
    w: &IndexedWindow,
    mask: &[bool],
    opts: &EvalOptions,
) -> Result<std::result::Result<EffectSizeResult, String>> {
    let score = match score {
        Ok(s) => s,
        Err(e @ (Error::InsufficientHistory(_) | Error::RankDeficient { .. })) => {
            return Ok(Err(e.to_string()))
        }
        Err(e) => return Err(e),
    };
    let valid_from = first_defined(&score.z);
    let (c, n) = split_samples(&score.z, w, mask, valid_from);
    if c.len() < 4 || n.len() < 4 {
        return Ok(Err(format!(
            "too few scored days ({} crisis, {} normal)",
            c.len(),
            n.len()
        )));
    }
    Ok(Ok(effect_size(&c, &n, opts)?))
}

/// Scores every method with a per-crisis fit cutoff and compares each
/// crisis's extended window to the days outside every extended window.
///
/// Only crises flagged `include_in_panel` are evaluated; all crises count as
/// non-normal days. Fit-free methods are scored once.
pub fn crisis_separability(
    inputs: &Inputs,
    methods: &[Method],
    crises: &[CrisisWindow],
    opts: &EvalOptions,
) -> Result<EvalReport> {
    if methods.is_empty() || crises.is_empty() {
        return Err(Error::InvalidInput("need at least one method and one crisis".into()));
    }
    let dates = &inputs.panel.dates;
    let all = index_windows(dates, crises, opts.extension);
    let mask = crisis_mask(inputs.len(), &all);
    let panel: Vec<(&IndexedWindow, &CrisisWindow)> = all
        .iter()
        .filter(|w| w.include_in_panel)
        .map(|w| (w, crises.iter().find(|c| c.name == w.name).expect("indexed from crises")))
        .collect();
    if panel.is_empty() {
        return Err(Error::InvalidInput("no panel crisis falls on the calendar".into()));
    }

    let fit_free: Vec<Option<ScoreSeries>> = methods
        .par_iter()
        .map(|m| {
            if m.needs_fit() {
                Ok(None)
            } else {
                score_method_at(m, inputs, inputs.len() - 1).map(Some)
            }
        })
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, usize)> = (0..methods.len())
        .flat_map(|m| (0..panel.len()).map(move |c| (m, c)))
        .collect();
    let results: Vec<CrisisEntry> = jobs
        .par_iter()
        .map(|&(mi, ci)| {
            let (w, c) = panel[ci];
            let cutoff = causal_cutoff(dates, c.start);
            let entry = |effect, skipped| CrisisEntry {
                crisis: c.name.clone(),
                category: c.category,
                cutoff: cutoff.map(|k| dates[k]),
                effect,
                skipped,
            };
            let score = match (&fit_free[mi], cutoff) {
                (Some(s), _) => Ok(s.clone()),
                (None, Some(k)) => score_method_at(&methods[mi], inputs, k),
                (None, None) => return Ok(entry(None, Some("no history before the cutoff".into()))),
            };
            Ok(match evaluate_one(score, w, &mask, opts)? {
                Ok(e) => entry(Some(e), None),
                Err(reason) => entry(None, Some(reason)),
            })
        })
        .collect::<Result<_>>()?;

    let mut reports = Vec::with_capacity(methods.len());
    for (mi, m) in methods.iter().enumerate() {
        let mut entries: Vec<CrisisEntry> = results[mi * panel.len()..(mi + 1) * panel.len()].to_vec();
        let idx: Vec<usize> = (0..entries.len()).filter(|&i| entries[i].effect.is_some()).collect();
        let adj = holm(&idx.iter().map(|&i| entries[i].effect.as_ref().unwrap().p_welch).collect::<Vec<_>>());
        for (&i, a) in idx.iter().zip(adj) {
            entries[i].effect.as_mut().unwrap().p_welch_holm = a;
        }
        let ds: Vec<f64> = entries.iter().filter_map(|e| e.effect.as_ref()?.cohens_d).collect();
        reports.push(MethodReport {
            method: m.name(),
            evaluated: idx.len(),
            median_d: median(ds),
            entries,
        });
    }

    let complete: Vec<Vec<f64>> = (0..panel.len())
        .filter_map(|ci| {
            reports
                .iter()
                .map(|r| r.entries[ci].effect.as_ref().and_then(|e| e.cohens_d))
                .collect::<Option<Vec<f64>>>()
        })
        .collect();
    let friedman = if complete.len() >= 2 && methods.len() >= 2 {
        Some(friedman_nemenyi(&complete, opts.alpha)?)
    } else {
        None
    };
    Ok(EvalReport {
        crises: panel.iter().map(|(_, c)| c.name.clone()).collect(),
        methods: reports,
        friedman,
    })
}
