//! Synthetic panels and feature streams with known structure.

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::crisis::{Category, CrisisWindow, EXTENSION_DAYS};
use crate::features::PricePanel;
use crate::rng::SplitMix64;

/// `n` consecutive weekdays from `start` (moved forward to a weekday).
pub fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut d = start;
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d += Duration::days(1);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantedConfig {
    pub n_days: usize,
    pub n_windows: usize,
    pub window_len: usize,
    /// Calm days before the first possible window.
    pub warmup: usize,
    /// Calm days after the last possible window.
    pub null_tail: usize,
    pub calm_sigma: f64,
    /// Crisis volatility as a multiple of `calm_sigma`.
    pub crisis_multiplier: f64,
    /// Return correlation between the two assets.
    pub correlation: f64,
    pub seed: u64,
    pub start: NaiveDate,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            n_days: 3000,
            n_windows: 10,
            window_len: 40,
            warmup: 500,
            null_tail: 0,
            calm_sigma: 0.01,
            crisis_multiplier: 4.0,
            correlation: 0.9,
            seed: 42,
            start: NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedPanel {
    pub panel: PricePanel,
    pub crises: Vec<CrisisWindow>,
    /// Inclusive row ranges of the planted windows.
    pub windows: Vec<(usize, usize)>,
}

/// Two correlated Gaussian return streams with volatility raised inside
/// evenly spaced windows after the warm-up.
pub fn planted_panel(cfg: &PlantedConfig) -> Result<PlantedPanel> {
    let rho = cfg.correlation;
    if !(-1.0..=1.0).contains(&rho) || !(cfg.calm_sigma > 0.0) || !(cfg.crisis_multiplier > 0.0) {
        return Err(Error::InvalidInput("invalid planted-panel parameters".into()));
    }
    let span = cfg.n_days.saturating_sub(cfg.warmup + cfg.null_tail);
    let mut windows = Vec::with_capacity(cfg.n_windows);
    if cfg.n_windows > 0 {
        let spacing = span / cfg.n_windows;
        if cfg.window_len == 0 || spacing < cfg.window_len + 2 * EXTENSION_DAYS + 2 {
            return Err(Error::InvalidInput(format!(
                "{} windows of {} days do not fit in {span} days",
                cfg.n_windows, cfg.window_len
            )));
        }
        for k in 0..cfg.n_windows {
            let s = cfg.warmup + k * spacing + (spacing - cfg.window_len) / 2;
            windows.push((s, s + cfg.window_len - 1));
        }
    }
    let dates = business_days(cfg.start, cfg.n_days);
    let mut rng = SplitMix64::new(cfg.seed);
    let mut la = 100f64.ln();
    let mut lb = 100f64.ln();
    let (mut pa, mut pb) = (Vec::with_capacity(cfg.n_days), Vec::with_capacity(cfg.n_days));
    let c = (1.0 - rho * rho).sqrt();
    for t in 0..cfg.n_days {
        if t > 0 {
            let inside = windows.iter().any(|&(s, e)| (s..=e).contains(&t));
            let sigma = cfg.calm_sigma * if inside { cfg.crisis_multiplier } else { 1.0 };
            let (e1, e2) = rng.normal_pair();
            la += sigma * e1;
            lb += sigma * (rho * e1 + c * e2);
        }
        pa.push(la.exp());
        pb.push(lb.exp());
    }
    let crises = windows
        .iter()
        .enumerate()
        .map(|(k, &(s, e))| CrisisWindow {
            name: format!("planted_{k}"),
            start: dates[s],
            end: dates[e],
            category: Category::Conventional,
            include_in_panel: true,
        })
        .collect();
    let panel = PricePanel::from_closes(dates, vec![("A".into(), pa), ("B".into(), pb)])?;
    Ok(PlantedPanel {
        panel,
        crises,
        windows,
    })
}

/// Unit vectors following a normalized Gaussian random walk in `R^p`.
pub fn feature_stream(p: usize, steps: usize, step: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = SplitMix64::new(seed);
    let unit = |v: &mut Vec<f64>| {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= n);
    };
    let mut x: Vec<f64> = (0..p).map(|_| rng.normal_pair().0).collect();
    unit(&mut x);
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        for v in x.iter_mut() {
            *v += step * rng.normal_pair().0;
        }
        unit(&mut x);
        out.push(x.clone());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::sample_std;

    #[test]
    fn business_days_skip_weekends() {
        let d = business_days(NaiveDate::from_ymd_opt(2024, 1, 6).unwrap(), 6);
        assert_eq!(d[0], NaiveDate::from_ymd_opt(2024, 1, 8).unwrap());
        assert_eq!(d[5], NaiveDate::from_ymd_opt(2024, 1, 15).unwrap());
    }

    #[test]
    fn planted_volatility_ratio() {
        let p = planted_panel(&PlantedConfig::default()).unwrap();
        assert_eq!(p.windows.len(), 10);
        assert_eq!(p.crises.len(), 10);
        let r = p.panel.log_returns(0);
        let inside: Vec<f64> = p
            .windows
            .iter()
            .flat_map(|&(s, e)| (s..=e).filter_map(|t| r[t]))
            .collect();
        let outside: Vec<f64> = (1..r.len())
            .filter(|t| !p.windows.iter().any(|&(s, e)| (s..=e).contains(t)))
            .filter_map(|t| r[t])
            .collect();
        let ratio = sample_std(&inside) / sample_std(&outside);
        assert!((ratio - 4.0).abs() < 0.4, "{ratio}");
        let r1 = p.panel.log_returns(1);
        let (a, b): (Vec<f64>, Vec<f64>) = (1..r.len()).map(|t| (r[t].unwrap(), r1[t].unwrap())).unzip();
        let (ma, mb) = (a.iter().sum::<f64>() / a.len() as f64, b.iter().sum::<f64>() / b.len() as f64);
        let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let corr = cov / (a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() * b.iter().map(|y| (y - mb).powi(2)).sum::<f64>()).sqrt();
        assert!((corr - 0.9).abs() < 0.03, "{corr}");
    }

    #[test]
    fn planted_windows_do_not_fit() {
        let cfg = PlantedConfig {
            n_days: 800,
            ..PlantedConfig::default()
        };
        assert!(planted_panel(&cfg).is_err());
        let none = PlantedConfig {
            n_days: 800,
            n_windows: 0,
            ..PlantedConfig::default()
        };
        assert!(planted_panel(&none).unwrap().crises.is_empty());
    }

    #[test]
    fn null_tail_extends_a_panel_with_calm_days() {
        let base = planted_panel(&PlantedConfig::default()).unwrap();
        let long = planted_panel(&PlantedConfig {
            n_days: 6000,
            null_tail: 3000,
            ..PlantedConfig::default()
        })
        .unwrap();
        assert_eq!(base.windows, long.windows);
        assert_eq!(base.panel.assets[0].close, long.panel.assets[0].close[..3000]);
        assert!(long.windows.iter().all(|&(_, e)| e < 3000));
    }

    #[test]
    fn planted_is_deterministic() {
        let a = planted_panel(&PlantedConfig::default()).unwrap();
        let b = planted_panel(&PlantedConfig::default()).unwrap();
        assert_eq!(a.panel, b.panel);
    }

    #[test]
    fn stream_is_unit_norm() {
        let s = feature_stream(8, 100, 0.05, 1);
        assert_eq!(s.len(), 100);
        for v in &s {
            assert!((v.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
