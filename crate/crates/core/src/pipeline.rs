//! End-to-end scoring of a method on a panel under a causal fit cutoff.

use chrono::Datelike;
use serde::{Deserialize, Serialize};

use crate::baselines::{run_baseline, BaselineConfig};
use crate::error::{Error, Result};
use crate::features::{
    enrich, fit_preprocessor_window, raw_features, FeatureMatrix, Preprocessor, PricePanel,
    ENRICH_LOOKBACK,
};
use crate::observables::{channel_series, ChannelConfig};
use crate::scoring::{causal_zscore, causal_zscore_from, ScoreSeries};

/// A panel with its raw (13-column) and enriched feature matrices.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub panel: PricePanel,
    pub raw: FeatureMatrix,
    pub features: FeatureMatrix,
}

impl Inputs {
    pub fn new(panel: PricePanel) -> Result<Self> {
        let raw = raw_features(&panel)?;
        let features = enrich(&raw, ENRICH_LOOKBACK)?;
        Ok(Self { panel, raw, features })
    }

    pub fn len(&self) -> usize {
        self.panel.len()
    }

    pub fn is_empty(&self) -> bool {
        self.panel.is_empty()
    }
}

/// Anything that yields a causal z-score series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    Channel(ChannelConfig),
    Baseline(BaselineConfig),
    /// Precomputed scores aligned to the panel calendar.
    External { name: String, z: Vec<Option<f64>> },
}

impl Method {
    pub fn name(&self) -> String {
        match self {
            Method::Channel(c) => c.channel.name().to_string(),
            Method::Baseline(b) => b.method.name().to_string(),
            Method::External { name, .. } => name.clone(),
        }
    }

    /// Whether scoring depends on a fitted preprocessing step.
    pub fn needs_fit(&self) -> bool {
        matches!(self, Method::Channel(_))
    }
}

/// Oriented raw channel values for rows `[0, upto)` under a fitted
/// preprocessor; rows before `from` and zero-norm embeddings are left
/// undefined.
pub fn channel_raw(
    cfg: &ChannelConfig,
    features: &FeatureMatrix,
    pre: &Preprocessor,
    from: usize,
    upto: usize,
) -> Result<Vec<Option<f64>>> {
    let ops = cfg.operators(Some(&pre.eigenvalues))?;
    let mut embedded = Vec::with_capacity(upto);
    for (t, row) in features.rows[..upto].iter().enumerate() {
        let e = if t < features.valid_from.max(from) {
            None
        } else {
            match pre.transform_row(row)? {
                Some((y, false)) => Some(y),
                _ => None,
            }
        };
        embedded.push(e);
    }
    Ok(channel_series(&ops, &embedded, cfg)?.oriented())
}

/// Raw channel values for rows `[0, upto)` from a fit on rows
/// `[train_start, cutoff]`, undefined before `train_start`.
pub fn fit_and_raw(
    cfg: &ChannelConfig,
    inputs: &Inputs,
    train_start: usize,
    cutoff: usize,
    upto: usize,
) -> Result<Vec<Option<f64>>> {
    let pre = fit_preprocessor_window(&inputs.features, train_start, cutoff, cfg.p)?;
    channel_raw(cfg, &inputs.features, &pre, train_start, upto)
}

/// Scores the whole calendar with preprocessing fitted on rows up to and
/// including `cutoff`.
pub fn score_channel_at(cfg: &ChannelConfig, inputs: &Inputs, cutoff: usize) -> Result<ScoreSeries> {
    let raw = fit_and_raw(cfg, inputs, 0, cutoff, inputs.len())?;
    let mut s = causal_zscore(&raw, cfg.window, cfg.min_history);
    s.name = cfg.channel.name().to_string();
    Ok(s)
}

/// Scores `method` on the full calendar. `cutoff` is the last row any
/// fitted step may see; fit-free methods ignore it.
pub fn score_method_at(method: &Method, inputs: &Inputs, cutoff: usize) -> Result<ScoreSeries> {
    match method {
        Method::Channel(c) => score_channel_at(c, inputs, cutoff),
        Method::Baseline(b) => run_baseline(b, &inputs.panel, &inputs.raw),
        Method::External { name, z } => {
            if z.len() != inputs.len() {
                return Err(Error::DimensionMismatch {
                    expected: inputs.len(),
                    got: z.len(),
                });
            }
            Ok(ScoreSeries {
                name: name.clone(),
                raw: z.clone(),
                smoothed: z.clone(),
                z: z.clone(),
                floored: vec![false; z.len()],
                window: 1,
                min_history: 0,
            })
        }
    }
}

/// Calendar-month segments `[start, end)` covering rows `[from, to)`.
pub fn month_segments(inputs: &Inputs, from: usize, to: usize) -> Vec<(usize, usize)> {
    let dates = &inputs.panel.dates;
    let mut out = Vec::new();
    let mut s = from;
    while s < to {
        let key = (dates[s].year(), dates[s].month());
        let mut e = s + 1;
        while e < to && (dates[e].year(), dates[e].month()) == key {
            e += 1;
        }
        out.push((s, e));
        s = e;
    }
    out
}

/// z-scores for rows `[from, to)` with a monthly refit: each calendar month
/// is scored by a model fitted on rows `[train_start, month start)`, with
/// raw history starting at `train_start`. Rows outside `[from, to)` are
/// `None`.
pub fn score_channel_monthly(
    cfg: &ChannelConfig,
    inputs: &Inputs,
    train_start: usize,
    from: usize,
    to: usize,
) -> Result<Vec<Option<f64>>> {
    let mut z = vec![None; inputs.len()];
    for (ms, me) in month_segments(inputs, from, to) {
        if ms <= train_start {
            return Err(Error::InsufficientHistory("no training rows before the first month".into()));
        }
        let raw = fit_and_raw(cfg, inputs, train_start, ms - 1, me)?;
        let s = causal_zscore_from(&raw, cfg.window, cfg.min_history, ms);
        z[ms..me].copy_from_slice(&s.z[ms..me]);
    }
    Ok(z)
}

/// Out-of-sample z for rows `[from, to)`: monthly refits for channels,
/// the fit-free series otherwise.
pub fn score_method_oos(
    method: &Method,
    inputs: &Inputs,
    train_start: usize,
    from: usize,
    to: usize,
) -> Result<Vec<Option<f64>>> {
    match method {
        Method::Channel(c) => score_channel_monthly(c, inputs, train_start, from, to),
        _ => {
            let s = score_method_at(method, inputs, inputs.len() - 1)?;
            let mut z = vec![None; inputs.len()];
            z[from..to].copy_from_slice(&s.z[from..to]);
            Ok(z)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::BaselineKind;
    use crate::observables::ChannelId;
    use crate::synthetic::{planted_panel, PlantedConfig};

    fn inputs(days: usize) -> Inputs {
        let cfg = PlantedConfig {
            n_days: days,
            n_windows: 2,
            warmup: days / 2,
            ..PlantedConfig::default()
        };
        Inputs::new(planted_panel(&cfg).unwrap().panel).unwrap()
    }

    #[test]
    fn channel_scores_ignore_rows_after_cutoff() {
        let a = inputs(500);
        let mut b = a.clone();
        for r in b.features.rows.iter_mut().skip(301) {
            r.iter_mut().for_each(|v| *v += 3.0);
        }
        let cfg = ChannelConfig::for_channel(ChannelId::SpectralEntropy);
        let sa = score_channel_at(&cfg, &a, 250).unwrap();
        let sb = score_channel_at(&cfg, &b, 250).unwrap();
        assert_eq!(sa.z[..=300], sb.z[..=300]);
        assert!(sa.z.iter().flatten().count() > 300);
    }

    #[test]
    fn monthly_scores_match_single_fit_within_month() {
        let inp = inputs(420);
        let cfg = ChannelConfig::for_channel(ChannelId::GroundEnergy);
        let segs = month_segments(&inp, 300, 420);
        assert!(segs.len() >= 5);
        assert!(segs.windows(2).all(|w| w[0].1 == w[1].0));
        let z = score_channel_monthly(&cfg, &inp, 0, 300, 420).unwrap();
        assert!(z[..300].iter().all(|v| v.is_none()));
        let (ms, me) = segs[1];
        let direct = score_channel_at(&cfg, &inp, ms - 1).unwrap();
        assert_eq!(z[ms..me], direct.z[ms..me]);
    }

    #[test]
    fn monthly_scores_are_causal() {
        let a = inputs(420);
        let mut b = a.clone();
        let cut = 360;
        for r in b.features.rows.iter_mut().skip(cut) {
            r.iter_mut().for_each(|v| *v *= -2.0);
        }
        let cfg = ChannelConfig::for_channel(ChannelId::HamSensitivity);
        let za = score_channel_monthly(&cfg, &a, 0, 300, 420).unwrap();
        let zb = score_channel_monthly(&cfg, &b, 0, 300, 420).unwrap();
        assert_eq!(za[..cut], zb[..cut]);
    }

    #[test]
    fn external_and_baseline_methods() {
        let inp = inputs(400);
        let m = Method::External {
            name: "ext".into(),
            z: vec![Some(1.0); 400],
        };
        assert_eq!(score_method_at(&m, &inp, 0).unwrap().z[10], Some(1.0));
        let short = Method::External {
            name: "ext".into(),
            z: vec![None; 3],
        };
        assert!(score_method_at(&short, &inp, 0).is_err());
        let b = Method::Baseline(BaselineConfig::for_method(BaselineKind::Turbulence));
        let s = score_method_at(&b, &inp, 0).unwrap();
        assert_eq!(s.name, "turbulence");
        assert!(!b.needs_fit());
        let z = score_method_oos(&b, &inp, 0, 200, 300).unwrap();
        assert_eq!(z[200..300], s.z[200..300]);
        assert!(z[300..].iter().all(|v| v.is_none()));
    }

    #[test]
    fn method_json_round_trip() {
        let m = Method::Channel(ChannelConfig::for_channel(ChannelId::BerryRate));
        let s = serde_json::to_string(&m).unwrap();
        assert!(s.contains("\"kind\":\"channel\""));
        assert_eq!(serde_json::from_str::<Method>(&s).unwrap(), m);
    }
}
