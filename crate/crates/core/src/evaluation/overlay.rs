//! Long/cash de-risking overlay driven by a causal score.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scoring::TRADING_DAYS_PER_YEAR;

pub const DEFAULT_OVERLAY_TAU: f64 = 2.0;
pub const DEFAULT_COOLDOWN: usize = 60;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Performance {
    pub total_return: f64,
    /// `None` when daily returns have zero variance.
    pub sharpe: Option<f64>,
    /// Largest peak-to-trough fall of the equity curve, as a non-positive
    /// fraction.
    pub max_drawdown: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlayResult {
    pub strategy: Performance,
    pub buy_and_hold: Performance,
    pub time_in_cash: f64,
    pub triggers: usize,
    /// Equity after each return day, starting from 1.
    pub equity: Vec<f64>,
}

/// Total return, annualized Sharpe (zero risk-free rate) and max drawdown
/// of a daily simple-return series compounded from 1.
pub fn performance(returns: &[f64]) -> (Performance, Vec<f64>) {
    let mut eq = 1.0f64;
    let mut peak = 1.0f64;
    let mut mdd = 0.0f64;
    let mut curve = Vec::with_capacity(returns.len());
    for r in returns {
        eq *= 1.0 + r;
        peak = peak.max(eq);
        mdd = mdd.min(eq / peak - 1.0);
        curve.push(eq);
    }
    let sharpe = if returns.len() >= 2 {
        let n = returns.len() as f64;
        let m = returns.iter().sum::<f64>() / n;
        let sd = (returns.iter().map(|r| (r - m) * (r - m)).sum::<f64>() / (n - 1.0)).sqrt();
        (sd > 0.0).then(|| m / sd * TRADING_DAYS_PER_YEAR.sqrt())
    } else {
        None
    };
    (
        Performance {
            total_return: eq - 1.0,
            sharpe,
            max_drawdown: mdd,
        },
        curve,
    )
}

/// Long by default; `z[t] > tau` at close `t` moves to cash for returns
/// `t+1 ..= t+cooldown`. A new signal is acted on only once the current
/// cash period has expired.
pub fn overlay_backtest(prices: &[f64], z: &[Option<f64>], tau: f64, cooldown: usize) -> Result<OverlayResult> {
    if prices.len() != z.len() {
        return Err(Error::DimensionMismatch {
            expected: prices.len(),
            got: z.len(),
        });
    }
    if prices.len() < 2 || prices.iter().any(|p| !(*p > 0.0)) {
        return Err(Error::InvalidInput(
            "overlay needs >= 2 positive prices".into(),
        ));
    }
    let asset: Vec<f64> = prices.windows(2).map(|w| w[1] / w[0] - 1.0).collect();
    let mut strat = Vec::with_capacity(asset.len());
    let mut cash_until = 0usize;
    let mut in_cash_days = 0usize;
    let mut triggers = 0usize;
    let fire = |t: usize| z[t].is_some_and(|v| v > tau);
    if fire(0) && cooldown > 0 {
        cash_until = cooldown;
        triggers += 1;
    }
    for t in 1..prices.len() {
        if t <= cash_until {
            strat.push(0.0);
            in_cash_days += 1;
        } else {
            strat.push(asset[t - 1]);
        }
        if t >= cash_until && fire(t) && cooldown > 0 {
            cash_until = t + cooldown;
            triggers += 1;
        }
    }
    let (s, equity) = performance(&strat);
    let (b, _) = performance(&asset);
    Ok(OverlayResult {
        strategy: s,
        buy_and_hold: b,
        time_in_cash: in_cash_days as f64 / asset.len() as f64,
        triggers,
        equity,
    })
}
