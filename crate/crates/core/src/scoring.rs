//! Causal z-scores, false-alarm-rate calibration and alarm extraction.

use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_WINDOW: usize = 20;
pub const DEFAULT_MIN_HISTORY: usize = 60;
/// Expanding standard deviations below this are treated as zero.
pub const SIGMA_FLOOR: f64 = 1e-12;
/// Magnitude assigned to a nonzero deviation over a zero-variance history.
pub const Z_MAX: f64 = 10.0;
pub const TRADING_DAYS_PER_YEAR: f64 = 252.0;
/// Below-threshold days needed to separate two alarm events.
pub const DEFAULT_GAP_DAYS: usize = 5;

/// Raw, smoothed and z-scored values of one method on a calendar.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSeries {
    pub name: String,
    pub raw: Vec<Option<f64>>,
    pub smoothed: Vec<Option<f64>>,
    pub z: Vec<Option<f64>>,
    /// Steps where the expanding deviation hit [`SIGMA_FLOOR`].
    pub floored: Vec<bool>,
    pub window: usize,
    pub min_history: usize,
}

impl ScoreSeries {
    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    /// First index with a defined z, if any.
    pub fn valid_from(&self) -> Option<usize> {
        self.z.iter().position(|v| v.is_some())
    }

    /// `date,raw,smoothed,z,flags`; undefined cells are empty, flags are
    /// `;`-joined among `raw_missing`, `undefined` and `floored`.
    pub fn write_csv(&self, dates: &[NaiveDate], path: &Path) -> Result<()> {
        if dates.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: dates.len(),
            });
        }
        let cell = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["date", "raw", "smoothed", "z", "flags"])?;
        for t in 0..self.len() {
            let mut flags = Vec::new();
            if self.raw[t].is_none() {
                flags.push("raw_missing");
            }
            if self.z[t].is_none() {
                flags.push("undefined");
            }
            if self.floored[t] {
                flags.push("floored");
            }
            w.write_record([
                dates[t].format("%Y-%m-%d").to_string(),
                cell(self.raw[t]),
                cell(self.smoothed[t]),
                cell(self.z[t]),
                flags.join(";"),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a series written by [`ScoreSeries::write_csv`] (or any CSV with
    /// `date` and `z` columns; `raw`/`smoothed` are optional).
    pub fn read_csv(name: &str, path: &Path) -> Result<(Vec<NaiveDate>, ScoreSeries)> {
        let mut rdr = csv::Reader::from_path(path)?;
        let headers = rdr.headers()?.clone();
        let col = |n: &str| headers.iter().position(|h| h.trim() == n);
        let (Some(di), Some(zi)) = (col("date"), col("z")) else {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                msg: "score CSV needs `date` and `z` columns".into(),
            });
        };
        let (ri, si) = (col("raw"), col("smoothed"));
        let mut dates = Vec::new();
        let mut raw = Vec::new();
        let mut smoothed = Vec::new();
        let mut z = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
            let parse = |i: Option<usize>| -> Result<Option<f64>> {
                match i.and_then(|i| rec.get(i)).map(str::trim) {
                    None | Some("") => Ok(None),
                    Some(s) => s.parse::<f64>().map(Some).map_err(|_| Error::Parse {
                        path: path.to_path_buf(),
                        line,
                        msg: format!("cannot parse `{s}`"),
                    }),
                }
            };
            let d = rec.get(di).unwrap_or("").trim();
            dates.push(NaiveDate::parse_from_str(d, "%Y-%m-%d").map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line,
                msg: format!("cannot parse date `{d}`"),
            })?);
            raw.push(parse(ri)?);
            smoothed.push(parse(si)?);
            z.push(parse(Some(zi))?);
        }
        let n = z.len();
        Ok((
            dates,
            ScoreSeries {
                name: name.to_string(),
                raw,
                smoothed,
                z,
                floored: vec![false; n],
                window: 1,
                min_history: 0,
            },
        ))
    }
}

/// Mean of the defined values in the trailing window `[t-w+1, t]`
/// (shorter at the start of the series).
pub fn smooth(raw: &[Option<f64>], w: usize) -> Vec<Option<f64>> {
    (0..raw.len())
        .map(|t| {
            let lo = (t + 1).saturating_sub(w);
            let (sum, n) = raw[lo..=t]
                .iter()
                .flatten()
                .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
            (n > 0).then(|| sum / n as f64)
        })
        .collect()
}

/// z of `s` against the mean and sample standard deviation of `past`.
/// Returns the value and whether the floor rule applied.
fn standardize(s: f64, past_sum: f64, past: &[f64]) -> (f64, bool) {
    let n = past.len() as f64;
    let mu = past_sum / n;
    let var = past.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (n - 1.0);
    let sigma = var.sqrt();
    if sigma < SIGMA_FLOOR {
        let z = if s == mu { 0.0 } else { (s - mu).signum() * Z_MAX };
        (z, true)
    } else {
        ((s - mu) / sigma, false)
    }
}

/// Causal expanding-window z-score.
///
/// `s(t)` is the trailing mean of `raw` over `w` steps; `z(t)` standardizes
/// `s(t)` by the mean and sample standard deviation of the defined
/// `s(0..t-1)`. `z` is emitted for 0-based `t >= m - 1` (the `m`-th step
/// onwards) once at least two past smoothed values exist.
pub fn causal_zscore(raw: &[Option<f64>], w: usize, m: usize) -> ScoreSeries {
    causal_zscore_from(raw, w, m, 0)
}

/// As [`causal_zscore`] but only evaluates `z(t)` for `t >= from`; earlier
/// entries are `None`. Values that are computed are identical to the full run.
pub fn causal_zscore_from(raw: &[Option<f64>], w: usize, m: usize, from: usize) -> ScoreSeries {
    let w = w.max(1);
    let smoothed = smooth(raw, w);
    let n = raw.len();
    let mut z = vec![None; n];
    let mut floored = vec![false; n];
    let mut past: Vec<f64> = Vec::with_capacity(n);
    let mut past_sum = 0.0;
    for t in 0..n {
        if t + 1 >= m.max(1) && t >= from && past.len() >= 2 {
            if let Some(s) = smoothed[t] {
                let (v, f) = standardize(s, past_sum, &past);
                z[t] = Some(v);
                floored[t] = f;
            }
        }
        if let Some(s) = smoothed[t] {
            past.push(s);
            past_sum += s;
        }
    }
    ScoreSeries {
        name: String::new(),
        raw: raw.to_vec(),
        smoothed,
        z,
        floored,
        window: w,
        min_history: m,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    Fixed,
    Far,
    Quantile,
    Velocity,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlarmEvent {
    pub onset: usize,
    /// Last above-threshold day of the event.
    pub last: usize,
    pub peak_z: f64,
    /// `last - onset + 1`.
    pub duration: usize,
    pub mechanism: Mechanism,
}

/// Merges active days into events: runs separated by fewer than `gap_days`
/// inactive days belong to one event. `peak` supplies the value reported as
/// the event peak.
fn events_from_active(
    active: &[bool],
    peak: &[Option<f64>],
    gap_days: usize,
    tag: impl Fn(usize) -> Mechanism,
) -> Vec<AlarmEvent> {
    let mut out: Vec<AlarmEvent> = Vec::new();
    let mut current: Option<AlarmEvent> = None;
    for (t, &a) in active.iter().enumerate() {
        if !a {
            continue;
        }
        let v = peak[t].unwrap_or(f64::NEG_INFINITY);
        match current.as_mut() {
            Some(ev) if t - ev.last - 1 < gap_days => {
                ev.last = t;
                ev.duration = t - ev.onset + 1;
                ev.peak_z = ev.peak_z.max(v);
            }
            _ => {
                if let Some(ev) = current.take() {
                    out.push(ev);
                }
                current = Some(AlarmEvent {
                    onset: t,
                    last: t,
                    peak_z: v,
                    duration: 1,
                    mechanism: tag(t),
                });
            }
        }
    }
    out.extend(current);
    out
}

/// Events of `z > tau`, merging runs separated by fewer than `gap_days`
/// below-threshold (or undefined) days.
pub fn extract_alarms(
    z: &[Option<f64>],
    tau: f64,
    gap_days: usize,
    mechanism: Mechanism,
) -> Vec<AlarmEvent> {
    let active: Vec<bool> = z.iter().map(|v| v.is_some_and(|x| x > tau)).collect();
    events_from_active(&active, z, gap_days, |_| mechanism)
}

/// Fraction of defined days with `z > tau`.
pub fn exceedance_rate(z: &[Option<f64>], tau: f64) -> f64 {
    let defined: Vec<f64> = z.iter().flatten().copied().collect();
    if defined.is_empty() {
        return 0.0;
    }
    defined.iter().filter(|&&v| v > tau).count() as f64 / defined.len() as f64
}

/// Events per 252 trading days.
pub fn events_per_year(events: usize, days: usize) -> f64 {
    if days == 0 {
        0.0
    } else {
        events as f64 * TRADING_DAYS_PER_YEAR / days as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FarCalibration {
    pub tau: f64,
    pub alpha: f64,
    pub normal_days: usize,
    pub events: usize,
    /// Alarm events per year on the normal segment at `tau`.
    pub event_rate: f64,
    /// Exceedance days per year on the normal segment at `tau`.
    pub exceedance_rate: f64,
}

/// FAR-calibrated threshold.
///
/// Crisis days (`crisis[t]`) and undefined z are removed; on the remaining
/// normal sequence the alarm-event rate of `z > tau` is computed for every
/// candidate `tau` among the distinct normal z values. The result is the
/// smallest candidate such that it and every larger candidate keep the rate
/// at or below `alpha` events per year. Event counts need not be monotone in
/// `tau`, hence the scan from the top.
pub fn far_threshold(
    z: &[Option<f64>],
    crisis: &[bool],
    alpha: f64,
    gap_days: usize,
) -> Result<FarCalibration> {
    if crisis.len() != z.len() {
        return Err(Error::DimensionMismatch {
            expected: z.len(),
            got: crisis.len(),
        });
    }
    let normal: Vec<Option<f64>> = z
        .iter()
        .zip(crisis)
        .filter(|(v, c)| v.is_some() && !**c)
        .map(|(v, _)| *v)
        .collect();
    if normal.len() < TRADING_DAYS_PER_YEAR as usize {
        return Err(Error::Calibration(format!(
            "{} normal days, need at least 252",
            normal.len()
        )));
    }
    let mut cands: Vec<f64> = normal.iter().flatten().copied().collect();
    cands.sort_by(|a, b| a.total_cmp(b));
    cands.dedup();
    let rate = |tau: f64| {
        let n = extract_alarms(&normal, tau, gap_days, Mechanism::Far).len();
        (n, events_per_year(n, normal.len()))
    };
    let mut best = *cands.last().expect("non-empty");
    for &tau in cands.iter().rev() {
        if rate(tau).1 <= alpha {
            best = tau;
        } else {
            break;
        }
    }
    let (events, event_rate) = rate(best);
    Ok(FarCalibration {
        tau: best,
        alpha,
        normal_days: normal.len(),
        events,
        event_rate,
        exceedance_rate: exceedance_rate(&normal, best) * TRADING_DAYS_PER_YEAR,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptiveConfig {
    pub quantile: f64,
    pub lookback: usize,
    /// Most recent days excluded from the quantile window.
    pub exclusion: usize,
    pub quantile_run: usize,
    pub velocity_threshold: f64,
    pub velocity_run: usize,
    /// Past velocities required before velocity is standardized.
    pub velocity_min_history: usize,
    pub gap_days: usize,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        Self {
            quantile: 0.95,
            lookback: 252,
            exclusion: 5,
            quantile_run: 3,
            velocity_threshold: 2.0,
            velocity_run: 2,
            velocity_min_history: 20,
            gap_days: DEFAULT_GAP_DAYS,
        }
    }
}

/// Linear-interpolation sample quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Per-day activity of the rolling-quantile rule: day `t` is active when
/// `z` exceeded the trailing quantile on `t` and the preceding
/// `quantile_run - 1` days. The quantile at `t` uses `z[t-exclusion-lookback ..
/// t-exclusion)`.
pub fn quantile_active(z: &[Option<f64>], cfg: &AdaptiveConfig) -> Vec<bool> {
    let n = z.len();
    let mut exceed = vec![false; n];
    for t in cfg.lookback + cfg.exclusion..n {
        let Some(zt) = z[t] else { continue };
        let hi = t - cfg.exclusion;
        let mut win: Vec<f64> = z[hi - cfg.lookback..hi].iter().flatten().copied().collect();
        if win.len() < cfg.lookback / 2 {
            continue;
        }
        win.sort_by(|a, b| a.total_cmp(b));
        exceed[t] = zt > quantile_sorted(&win, cfg.quantile);
    }
    run_active(&exceed, cfg.quantile_run)
}

/// Per-day activity of the velocity rule: `v(t) = z(t) - z(t-1)` standardized
/// by the mean and sample deviation of earlier velocities, above the
/// threshold for `velocity_run` consecutive days.
pub fn velocity_active(z: &[Option<f64>], cfg: &AdaptiveConfig) -> Vec<bool> {
    let n = z.len();
    let mut exceed = vec![false; n];
    let (mut cnt, mut sum, mut sumsq) = (0usize, 0.0f64, 0.0f64);
    for t in 1..n {
        let (Some(a), Some(b)) = (z[t], z[t - 1]) else { continue };
        let v = a - b;
        if cnt >= cfg.velocity_min_history.max(2) {
            let mu = sum / cnt as f64;
            let var = (sumsq - cnt as f64 * mu * mu) / (cnt - 1) as f64;
            let sd = var.max(0.0).sqrt();
            if sd > SIGMA_FLOOR {
                exceed[t] = (v - mu) / sd > cfg.velocity_threshold;
            }
        }
        cnt += 1;
        sum += v;
        sumsq += v * v;
    }
    run_active(&exceed, cfg.velocity_run)
}

fn run_active(exceed: &[bool], run: usize) -> Vec<bool> {
    let mut out = vec![false; exceed.len()];
    let mut streak = 0;
    for (t, &e) in exceed.iter().enumerate() {
        streak = if e { streak + 1 } else { 0 };
        out[t] = streak >= run.max(1);
    }
    out
}

/// Union of the rolling-quantile and velocity rules. Each event is tagged
/// with the rule active at its onset (quantile when both are).
pub fn adaptive_alarms(z: &[Option<f64>], cfg: &AdaptiveConfig) -> Vec<AlarmEvent> {
    let q = quantile_active(z, cfg);
    let v = velocity_active(z, cfg);
    let active: Vec<bool> = q.iter().zip(&v).map(|(a, b)| *a || *b).collect();
    events_from_active(&active, z, cfg.gap_days, |t| {
        if q[t] {
            Mechanism::Quantile
        } else {
            Mechanism::Velocity
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use proptest::prelude::*;

    fn some(v: &[f64]) -> Vec<Option<f64>> {
        v.iter().map(|x| Some(*x)).collect()
    }

    /// Direct recomputation of every z from scratch.
    fn naive_z(raw: &[Option<f64>], w: usize, m: usize) -> Vec<Option<f64>> {
        let n = raw.len();
        let s: Vec<Option<f64>> = (0..n)
            .map(|t| {
                let lo = if t + 1 >= w { t + 1 - w } else { 0 };
                let vals: Vec<f64> = (lo..=t).filter_map(|k| raw[k]).collect();
                if vals.is_empty() {
                    None
                } else {
                    let mut acc = 0.0;
                    for v in &vals {
                        acc += v;
                    }
                    Some(acc / vals.len() as f64)
                }
            })
            .collect();
        (0..n)
            .map(|t| {
                let past: Vec<f64> = (0..t).filter_map(|k| s[k]).collect();
                if t + 1 < m || past.len() < 2 {
                    return None;
                }
                let st = s[t]?;
                let mut acc = 0.0;
                for v in &past {
                    acc += v;
                }
                let mu = acc / past.len() as f64;
                let mut ss = 0.0;
                for v in &past {
                    ss += (v - mu) * (v - mu);
                }
                let sd = (ss / (past.len() as f64 - 1.0)).sqrt();
                Some(if sd < 1e-12 {
                    if st == mu {
                        0.0
                    } else {
                        (st - mu).signum() * 10.0
                    }
                } else {
                    (st - mu) / sd
                })
            })
            .collect()
    }

    #[test]
    fn constant_series_scores_zero() {
        let s = causal_zscore(&some(&[3.0; 100]), 20, 60);
        assert!(s.z[..59].iter().all(|v| v.is_none()));
        assert!(s.z[59..].iter().all(|v| *v == Some(0.0)));
        assert!(s.floored[70]);
    }

    #[test]
    fn step_is_clamped() {
        let s = causal_zscore(&some(&[0.0, 0.0, 0.0, 0.0, 1.0]), 1, 5);
        assert_eq!(s.z[4], Some(10.0));
        assert_eq!(s.z[3], None);
    }

    #[test]
    fn matches_naive_recomputation_bitwise() {
        let mut rng = SplitMix64::new(42);
        let raw: Vec<Option<f64>> = (0..600)
            .map(|t| {
                let (a, _) = rng.normal_pair();
                if t % 37 == 5 {
                    None
                } else {
                    Some(a.exp())
                }
            })
            .collect();
        for (w, m) in [(20, 60), (1, 5), (10, 2), (30, 100)] {
            let s = causal_zscore(&raw, w, m);
            let oracle = naive_z(&raw, w, m);
            for t in 0..raw.len() {
                assert_eq!(
                    s.z[t].map(f64::to_bits),
                    oracle[t].map(f64::to_bits),
                    "w={w} m={m} t={t}"
                );
            }
        }
    }

    #[test]
    fn partial_evaluation_matches_full() {
        let mut rng = SplitMix64::new(1);
        let raw: Vec<Option<f64>> = (0..300).map(|_| Some(rng.next_f64())).collect();
        let full = causal_zscore(&raw, 10, 60);
        let part = causal_zscore_from(&raw, 10, 60, 200);
        assert!(part.z[..200].iter().all(|v| v.is_none()));
        assert_eq!(full.z[200..], part.z[200..]);
    }

    proptest! {
        #[test]
        fn zscore_prefix_is_causal(seed in any::<u64>(), cut in 61usize..199) {
            let mut rng = SplitMix64::new(seed);
            let raw: Vec<Option<f64>> = (0..200).map(|_| Some(rng.normal_pair().0)).collect();
            let mut mutated = raw.clone();
            for v in mutated.iter_mut().skip(cut + 1) {
                *v = Some(rng.normal_pair().0 * 100.0);
            }
            let a = causal_zscore(&raw, 20, 60);
            let b = causal_zscore(&mutated, 20, 60);
            prop_assert_eq!(&a.z[..=cut], &b.z[..=cut]);
        }

        #[test]
        fn alarm_count_invariant_under_monotone_maps(seed in any::<u64>(), tau in -1.0f64..2.0) {
            let mut rng = SplitMix64::new(seed);
            let z: Vec<Option<f64>> = (0..300).map(|_| Some(rng.normal_pair().0)).collect();
            let mapped: Vec<Option<f64>> = z.iter().map(|v| v.map(|x| x.exp() * 3.0 + 1.0)).collect();
            let a = extract_alarms(&z, tau, 5, Mechanism::Fixed);
            let b = extract_alarms(&mapped, tau.exp() * 3.0 + 1.0, 5, Mechanism::Fixed);
            prop_assert_eq!(a.len(), b.len());
        }

        #[test]
        fn exceedance_rate_is_monotone(seed in any::<u64>(), t1 in -2.0f64..2.0, dt in 0.0f64..2.0) {
            let mut rng = SplitMix64::new(seed);
            let z: Vec<Option<f64>> = (0..300).map(|_| Some(rng.normal_pair().0)).collect();
            prop_assert!(exceedance_rate(&z, t1 + dt) <= exceedance_rate(&z, t1));
        }
    }

    #[test]
    fn alarm_extraction_examples() {
        assert!(extract_alarms(&some(&[0.0; 10]), 1.0, 5, Mechanism::Fixed).is_empty());
        let z = some(&[0.0, 3.0, 3.0, 3.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let ev = extract_alarms(&z, 2.0, 5, Mechanism::Fixed);
        assert_eq!(ev.len(), 1);
        assert_eq!((ev[0].onset, ev[0].duration, ev[0].peak_z), (1, 3, 3.0));
        let z = some(&[3.0, 0.0, 0.0, 4.0, 0.0]);
        let ev = extract_alarms(&z, 2.0, 5, Mechanism::Fixed);
        assert_eq!(ev.len(), 1);
        assert_eq!((ev[0].onset, ev[0].last, ev[0].peak_z), (0, 3, 4.0));
        let mut v = vec![0.0; 20];
        v[0] = 3.0;
        v[6] = 3.0;
        assert_eq!(extract_alarms(&some(&v), 2.0, 5, Mechanism::Fixed).len(), 2);
    }

    fn null_z(n: usize, seed: u64) -> Vec<Option<f64>> {
        let mut rng = SplitMix64::new(seed);
        (0..n).map(|_| Some(rng.normal_pair().0)).collect()
    }

    #[test]
    fn far_threshold_small_z() {
        let z: Vec<Option<f64>> = null_z(600, 2).into_iter().map(|v| v.map(|x| x.tanh())).collect();
        let cal = far_threshold(&z, &vec![false; 600], 1.0, 5).unwrap();
        assert!(cal.tau <= 1.0);
        assert!(cal.event_rate <= 1.0);
    }

    #[test]
    fn far_threshold_matches_brute_force() {
        let z = null_z(504, 3);
        let crisis = vec![false; 504];
        let cal = far_threshold(&z, &crisis, 1.0, 5).unwrap();
        assert!(cal.events <= 2);
        // brute force: the smallest candidate from which every larger one
        // admits at most two events
        let mut cands: Vec<f64> = z.iter().flatten().copied().collect();
        cands.sort_by(|a, b| a.total_cmp(b));
        let ok: Vec<bool> = cands
            .iter()
            .map(|&t| extract_alarms(&z, t, 5, Mechanism::Far).len() <= 2)
            .collect();
        let mut first = cands.len() - 1;
        while first > 0 && ok[first - 1] {
            first -= 1;
        }
        assert_eq!(cal.tau, cands[first]);
    }

    #[test]
    fn far_threshold_alpha_zero_and_errors() {
        let z = null_z(400, 4);
        let cal = far_threshold(&z, &vec![false; 400], 0.0, 5).unwrap();
        let max = z.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!(cal.tau >= max);
        assert_eq!(cal.events, 0);
        assert!(matches!(far_threshold(&z, &vec![true; 400], 1.0, 5), Err(Error::Calibration(_))));
    }

    #[test]
    fn far_threshold_drops_crisis_days() {
        let mut z = null_z(800, 5);
        let mut crisis = vec![false; 800];
        for t in 300..340 {
            z[t] = Some(50.0);
            crisis[t] = true;
        }
        let cal = far_threshold(&z, &crisis, 1.0, 5).unwrap();
        assert!(cal.tau < 10.0);
        assert_eq!(cal.normal_days, 760);
    }

    #[test]
    fn adaptive_flat_is_silent() {
        assert!(adaptive_alarms(&some(&[1.0; 400]), &AdaptiveConfig::default()).is_empty());
    }

    #[test]
    fn adaptive_quantile_fires_on_day_three() {
        let mut v: Vec<f64> = (0..400).map(|t| ((t * 7919) % 101) as f64 / 100.0).collect();
        for x in v.iter_mut().skip(300) {
            *x = 5.0;
        }
        let cfg = AdaptiveConfig {
            velocity_threshold: 1e9,
            ..Default::default()
        };
        let ev = adaptive_alarms(&some(&v), &cfg);
        assert_eq!(ev[0].onset, 302);
        assert_eq!(ev[0].mechanism, Mechanism::Quantile);
    }

    #[test]
    fn adaptive_velocity_catches_slow_ramp() {
        // a wide slow oscillation sets a high trailing quantile; a steep ramp
        // from its midline stays below it while its velocity is extreme
        let start = 300;
        let v: Vec<f64> = (0..400)
            .map(|t| {
                if t < start {
                    10.0 * (2.0 * std::f64::consts::PI * t as f64 / 200.0).sin()
                } else {
                    1.5 * (t - start) as f64
                }
            })
            .collect();
        let z = some(&v);
        let cfg = AdaptiveConfig::default();
        let q = quantile_active(&z, &cfg);
        assert!(!q[start..start + 6].iter().any(|a| *a));
        let ev = adaptive_alarms(&z, &cfg);
        let hit = ev.iter().find(|e| e.onset >= start).unwrap();
        assert_eq!(hit.mechanism, Mechanism::Velocity);
        assert_eq!(hit.onset, start + 2);
        assert!(ev.iter().all(|e| e.onset >= start));
    }

    #[test]
    fn score_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let raw = null_z(100, 7);
        let mut s = causal_zscore(&raw, 5, 10);
        s.name = "x".into();
        let dates: Vec<NaiveDate> = (0..100)
            .map(|i| NaiveDate::from_ymd_opt(2001, 1, 1).unwrap() + chrono::Duration::days(i))
            .collect();
        let path = dir.path().join("s.csv");
        s.write_csv(&dates, &path).unwrap();
        let (d2, back) = ScoreSeries::read_csv("x", &path).unwrap();
        assert_eq!(d2, dates);
        assert_eq!(back.z, s.z);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("date,raw,smoothed,z,flags"));
    }
}
