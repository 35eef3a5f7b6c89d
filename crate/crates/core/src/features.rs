//! OHLCV ingestion, feature matrices and causal preprocessing
//! (standardize, PCA, unit-norm rows).

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate};

use crate::error::{Error, Result};
use crate::geometry::RANK_TOL;
use crate::linalg::symmetric_eigh;

pub const MIN_COMMON_DATES: usize = 300;
pub const RAW_VALID_FROM: usize = 20;
pub const ENRICH_LOOKBACK: usize = 20;
/// Extra rows beyond `p` a preprocessor fit requires.
pub const FIT_MARGIN: usize = 30;
/// Calendar days between the causal cutoff and a crisis start.
pub const CUTOFF_CALENDAR_DAYS: i64 = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct AssetSeries {
    pub name: String,
    pub open: Vec<f64>,
    pub high: Vec<f64>,
    pub low: Vec<f64>,
    pub close: Vec<f64>,
    pub adj_close: Vec<f64>,
    pub volume: Vec<f64>,
}

/// Assets aligned on a common strictly increasing calendar.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel {
    pub dates: Vec<NaiveDate>,
    pub assets: Vec<AssetSeries>,
}

#[derive(Debug, Clone, Copy)]
struct Bar {
    open: f64,
    high: f64,
    low: f64,
    close: f64,
    adj_close: f64,
    volume: f64,
}

const COLUMNS: [&str; 7] = ["date", "open", "high", "low", "close", "adjclose", "volume"];

fn normalize_header(h: &str) -> String {
    h.trim()
        .chars()
        .filter(|c| !c.is_whitespace() && *c != '_')
        .collect::<String>()
        .to_ascii_lowercase()
}

/// `None` for an empty or null-like cell, which drops the row.
fn parse_cell(cell: &str, path: &Path, line: usize, col: &str) -> Result<Option<f64>> {
    let c = cell.trim();
    if c.is_empty() || c.eq_ignore_ascii_case("null") || c.eq_ignore_ascii_case("nan") || c == "NA" {
        return Ok(None);
    }
    let v: f64 = c.parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: format!("column {col}: cannot parse `{c}` as a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line,
            msg: format!("column {col}: non-finite value"),
        });
    }
    Ok(Some(v))
}

fn read_asset(path: &Path) -> Result<BTreeMap<NaiveDate, Bar>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(file);
    let headers = rdr.headers()?.clone();
    let names: Vec<String> = headers.iter().map(normalize_header).collect();
    let idx: Vec<usize> = COLUMNS
        .iter()
        .map(|want| {
            names.iter().position(|h| h == want).ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                msg: format!("missing column `{want}`"),
            })
        })
        .collect::<Result<_>>()?;

    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let cell = |k: usize| rec.get(idx[k]).unwrap_or("");
        let date = NaiveDate::parse_from_str(cell(0).trim(), "%Y-%m-%d").map_err(|_| {
            Error::Parse {
                path: path.to_path_buf(),
                line,
                msg: format!("cannot parse date `{}`", cell(0)),
            }
        })?;
        let mut vals = [0.0; 6];
        let mut missing = false;
        for k in 1..7 {
            match parse_cell(cell(k), path, line, COLUMNS[k])? {
                Some(v) => vals[k - 1] = v,
                None => missing = true,
            }
        }
        if missing {
            continue;
        }
        if vals[3] <= 0.0 || vals[4] <= 0.0 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                msg: "close prices must be positive".into(),
            });
        }
        let bar = Bar {
            open: vals[0],
            high: vals[1],
            low: vals[2],
            close: vals[3],
            adj_close: vals[4],
            volume: vals[5],
        };
        if out.insert(date, bar).is_some() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                msg: format!("duplicate date {date}"),
            });
        }
    }
    Ok(out)
}

fn asset_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "asset".into())
}

/// Loads one CSV per asset (`Date,Open,High,Low,Close,AdjClose,Volume`, ISO
/// dates) onto the intersection of their calendars. Rows with an empty cell
/// are dropped from that asset, and therefore from the panel.
pub fn load_ohlcv(paths: &[PathBuf], min_common_dates: usize) -> Result<PricePanel> {
    if paths.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 assets, got {}",
            paths.len()
        )));
    }
    let tables: Vec<BTreeMap<NaiveDate, Bar>> =
        paths.iter().map(|p| read_asset(p)).collect::<Result<_>>()?;
    let dates: Vec<NaiveDate> = tables[0]
        .keys()
        .filter(|d| tables[1..].iter().all(|t| t.contains_key(d)))
        .copied()
        .collect();
    if dates.len() < min_common_dates {
        return Err(Error::InsufficientHistory(format!(
            "{} common dates, need {min_common_dates}",
            dates.len()
        )));
    }
    let assets = paths
        .iter()
        .zip(&tables)
        .map(|(path, t)| {
            let bars: Vec<Bar> = dates.iter().map(|d| t[d]).collect();
            AssetSeries {
                name: asset_name(path),
                open: bars.iter().map(|b| b.open).collect(),
                high: bars.iter().map(|b| b.high).collect(),
                low: bars.iter().map(|b| b.low).collect(),
                close: bars.iter().map(|b| b.close).collect(),
                adj_close: bars.iter().map(|b| b.adj_close).collect(),
                volume: bars.iter().map(|b| b.volume).collect(),
            }
        })
        .collect();
    Ok(PricePanel { dates, assets })
}

impl PricePanel {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    /// Builds a panel where every price field equals the given adjusted close.
    pub fn from_closes(dates: Vec<NaiveDate>, assets: Vec<(String, Vec<f64>)>) -> Result<Self> {
        if assets.len() < 2 {
            return Err(Error::InvalidInput("need at least 2 assets".into()));
        }
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput("dates must be strictly increasing".into()));
        }
        let assets = assets
            .into_iter()
            .map(|(name, px)| {
                if px.len() != dates.len() {
                    return Err(Error::DimensionMismatch {
                        expected: dates.len(),
                        got: px.len(),
                    });
                }
                Ok(AssetSeries {
                    name,
                    open: px.clone(),
                    high: px.clone(),
                    low: px.clone(),
                    close: px.clone(),
                    adj_close: px,
                    volume: vec![0.0; dates.len()],
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { dates, assets })
    }

    /// Daily log returns of the adjusted close; the first entry is `None`.
    pub fn log_returns(&self, asset: usize) -> Vec<Option<f64>> {
        log_returns(&self.assets[asset].adj_close)
    }

    /// Keeps rows `0..=end`.
    pub fn truncated(&self, end: usize) -> Self {
        let cut = |v: &Vec<f64>| v[..=end].to_vec();
        Self {
            dates: self.dates[..=end].to_vec(),
            assets: self
                .assets
                .iter()
                .map(|a| AssetSeries {
                    name: a.name.clone(),
                    open: cut(&a.open),
                    high: cut(&a.high),
                    low: cut(&a.low),
                    close: cut(&a.close),
                    adj_close: cut(&a.adj_close),
                    volume: cut(&a.volume),
                })
                .collect(),
        }
    }

    /// Writes one OHLCV CSV per asset into `dir`, named `<asset>.csv`.
    pub fn write_csvs(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.assets
            .iter()
            .map(|a| {
                let path = dir.join(format!("{}.csv", a.name));
                let mut w = csv::Writer::from_path(&path)?;
                w.write_record(["Date", "Open", "High", "Low", "Close", "AdjClose", "Volume"])?;
                for (t, d) in self.dates.iter().enumerate() {
                    w.write_record([
                        d.format("%Y-%m-%d").to_string(),
                        a.open[t].to_string(),
                        a.high[t].to_string(),
                        a.low[t].to_string(),
                        a.close[t].to_string(),
                        a.adj_close[t].to_string(),
                        a.volume[t].to_string(),
                    ])?;
                }
                w.flush().map_err(|e| Error::io(&path, e))?;
                Ok(path)
            })
            .collect()
    }
}

pub fn log_returns(prices: &[f64]) -> Vec<Option<f64>> {
    let mut out = vec![None; prices.len()];
    for t in 1..prices.len() {
        out[t] = Some((prices[t] / prices[t - 1]).ln());
    }
    out
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (divisor `n - 1`), two-pass.
pub fn sample_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Sample correlation; `0` if either side has zero variance.
fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// Row-major `T x F` matrix with a calendar. Entries before `valid_from`
/// may be NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub dates: Vec<NaiveDate>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub valid_from: usize,
}

impl FeatureMatrix {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    /// `date,<columns...>`; NaN cells are written empty.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["date".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header)?;
        for (d, row) in self.dates.iter().zip(&self.rows) {
            let mut rec = vec![d.format("%Y-%m-%d").to_string()];
            rec.extend(row.iter().map(|v| {
                if v.is_finite() {
                    format!("{v:e}")
                } else {
                    String::new()
                }
            }));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// The 13 raw features from the first two assets' adjusted closes:
/// log return, 5d/20d volatility, 5d/20d momentum (per asset), 20d return
/// correlation, and 5d/20d mean absolute return spread.
pub fn raw_features(panel: &PricePanel) -> Result<FeatureMatrix> {
    let t_len = panel.len();
    if t_len < RAW_VALID_FROM + 1 {
        return Err(Error::InsufficientHistory(format!(
            "{t_len} rows, raw features need {}",
            RAW_VALID_FROM + 1
        )));
    }
    if panel.assets.len() < 2 {
        return Err(Error::InvalidInput("need at least 2 assets".into()));
    }
    let (a, b) = (&panel.assets[0], &panel.assets[1]);
    let (na, nb) = (&a.name, &b.name);
    let columns: Vec<String> = vec![
        format!("ret_{na}"),
        format!("ret_{nb}"),
        format!("vol5_{na}"),
        format!("vol5_{nb}"),
        format!("vol20_{na}"),
        format!("vol20_{nb}"),
        format!("mom5_{na}"),
        format!("mom5_{nb}"),
        format!("mom20_{na}"),
        format!("mom20_{nb}"),
        "corr20".into(),
        "disp5".into(),
        "disp20".into(),
    ];
    let px = [&a.adj_close, &b.adj_close];
    let ret: Vec<Vec<f64>> = px
        .iter()
        .map(|p| {
            log_returns(p)
                .into_iter()
                .map(|r| r.unwrap_or(f64::NAN))
                .collect()
        })
        .collect();
    let disp: Vec<f64> = (0..t_len).map(|t| (ret[0][t] - ret[1][t]).abs()).collect();

    let mut rows = vec![vec![f64::NAN; 13]; t_len];
    for t in 1..t_len {
        let row = &mut rows[t];
        for k in 0..2 {
            row[k] = ret[k][t];
            if t >= 5 {
                row[2 + k] = sample_std(&ret[k][t - 4..=t]);
                row[6 + k] = px[k][t] / px[k][t - 5] - 1.0;
            }
            if t >= 20 {
                row[4 + k] = sample_std(&ret[k][t - 19..=t]);
                row[8 + k] = px[k][t] / px[k][t - 20] - 1.0;
            }
        }
        if t >= 5 {
            row[11] = mean(&disp[t - 4..=t]);
        }
        if t >= 20 {
            row[10] = correlation(&ret[0][t - 19..=t], &ret[1][t - 19..=t]);
            row[12] = mean(&disp[t - 19..=t]);
        }
    }
    Ok(FeatureMatrix {
        dates: panel.dates.clone(),
        columns,
        rows,
        valid_from: RAW_VALID_FROM,
    })
}

/// Rolling mean, sample std, min and max of every column over `lookback`
/// rows, giving `4 F` columns ordered `c_mean, c_std, c_min, c_max` per `c`.
pub fn enrich(raw: &FeatureMatrix, lookback: usize) -> Result<FeatureMatrix> {
    if lookback < 2 {
        return Err(Error::InvalidInput("enrichment lookback must be >= 2".into()));
    }
    let f = raw.width();
    let valid_from = raw.valid_from + lookback - 1;
    let columns = raw
        .columns
        .iter()
        .flat_map(|c| ["mean", "std", "min", "max"].map(|s| format!("{c}_{s}")))
        .collect();
    let mut rows = vec![vec![f64::NAN; 4 * f]; raw.len()];
    for t in valid_from..raw.len() {
        for j in 0..f {
            let w: Vec<f64> = raw.rows[t + 1 - lookback..=t].iter().map(|r| r[j]).collect();
            rows[t][4 * j] = mean(&w);
            rows[t][4 * j + 1] = sample_std(&w);
            rows[t][4 * j + 2] = w.iter().copied().fold(f64::INFINITY, f64::min);
            rows[t][4 * j + 3] = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        }
    }
    Ok(FeatureMatrix {
        dates: raw.dates.clone(),
        columns,
        rows,
        valid_from,
    })
}

/// Raw plus enrichment: the 52-column matrix.
pub fn build_features(panel: &PricePanel) -> Result<FeatureMatrix> {
    enrich(&raw_features(panel)?, ENRICH_LOOKBACK)
}

/// Fitted standardization and PCA basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessor {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// `p` unit loading vectors, by descending eigenvalue.
    pub loadings: Vec<Vec<f64>>,
    /// Top-`p` covariance eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    pub fit_start: usize,
    /// Last row used (inclusive).
    pub fit_end: usize,
}

/// Fits on rows `[features.valid_from, cutoff]`.
pub fn fit_preprocessor(features: &FeatureMatrix, cutoff: usize, p: usize) -> Result<Preprocessor> {
    fit_preprocessor_window(features, features.valid_from, cutoff, p)
}

/// Fits on rows `[start.max(valid_from), cutoff]`. Zero-variance columns are
/// given unit scale so they standardize to zero.
pub fn fit_preprocessor_window(
    features: &FeatureMatrix,
    start: usize,
    cutoff: usize,
    p: usize,
) -> Result<Preprocessor> {
    let f = features.width();
    if p == 0 || p > f {
        return Err(Error::InvalidInput(format!("p = {p} outside 1..={f}")));
    }
    let start = start.max(features.valid_from);
    if cutoff >= features.len() {
        return Err(Error::InvalidInput(format!(
            "cutoff {cutoff} beyond {} rows",
            features.len()
        )));
    }
    let n_rows = (cutoff + 1).saturating_sub(start);
    if n_rows < p + FIT_MARGIN {
        return Err(Error::InsufficientHistory(format!(
            "{n_rows} fit rows, need {}",
            p + FIT_MARGIN
        )));
    }
    let data = &features.rows[start..=cutoff];
    if data.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite feature in fit window".into()));
    }
    let nf = n_rows as f64;
    let mean: Vec<f64> = (0..f).map(|j| data.iter().map(|r| r[j]).sum::<f64>() / nf).collect();
    let std: Vec<f64> = (0..f)
        .map(|j| {
            let s = (data.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt();
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();
    let z: Vec<Vec<f64>> = data
        .iter()
        .map(|r| (0..f).map(|j| (r[j] - mean[j]) / std[j]).collect())
        .collect();
    let zmean: Vec<f64> = (0..f).map(|j| z.iter().map(|r| r[j]).sum::<f64>() / nf).collect();
    let mut cov = vec![0.0; f * f];
    for i in 0..f {
        for j in i..f {
            let c = z
                .iter()
                .map(|r| (r[i] - zmean[i]) * (r[j] - zmean[j]))
                .sum::<f64>()
                / (nf - 1.0);
            cov[i * f + j] = c;
            cov[j * f + i] = c;
        }
    }
    let eig = symmetric_eigh(f, &cov)?;
    let lmax = eig.values.last().copied().unwrap_or(0.0);
    let achievable = eig
        .values
        .iter()
        .filter(|&&l| lmax > 0.0 && l > RANK_TOL * lmax)
        .count();
    if achievable < p {
        return Err(Error::RankDeficient {
            requested: p,
            achievable,
        });
    }
    let order: Vec<usize> = (0..f).rev().take(p).collect();
    Ok(Preprocessor {
        mean,
        std,
        loadings: order.iter().map(|&k| eig.vectors[k].clone()).collect(),
        eigenvalues: order.iter().map(|&k| eig.values[k]).collect(),
        fit_start: start,
        fit_end: cutoff,
    })
}

/// Embedded rows: `None` where the input row is not finite, otherwise a unit
/// vector (or the zero vector, flagged in `zero_rows`).
#[derive(Debug, Clone, PartialEq)]
pub struct Embedded {
    pub rows: Vec<Option<Vec<f64>>>,
    pub zero_rows: Vec<bool>,
}

impl Preprocessor {
    pub fn p(&self) -> usize {
        self.loadings.len()
    }

    /// Standardized, projected and unit-normalized row, with a zero flag.
    pub fn transform_row(&self, row: &[f64]) -> Result<Option<(Vec<f64>, bool)>> {
        if row.len() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                got: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Ok(None);
        }
        let z: Vec<f64> = row
            .iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((x, m), s)| (x - m) / s)
            .collect();
        let mut y: Vec<f64> = self
            .loadings
            .iter()
            .map(|l| l.iter().zip(&z).map(|(a, b)| a * b).sum())
            .collect();
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Ok(Some((y, true)));
        }
        y.iter_mut().for_each(|v| *v /= norm);
        Ok(Some((y, false)))
    }

    pub fn transform(&self, features: &FeatureMatrix) -> Result<Embedded> {
        let mut rows = Vec::with_capacity(features.len());
        let mut zero_rows = Vec::with_capacity(features.len());
        for (t, row) in features.rows.iter().enumerate() {
            let out = if t < features.valid_from {
                None
            } else {
                self.transform_row(row)?
            };
            zero_rows.push(matches!(out, Some((_, true))));
            rows.push(out.map(|(y, _)| y));
        }
        Ok(Embedded { rows, zero_rows })
    }
}

/// Last row dated on or before `crisis_start - 10` calendar days.
pub fn causal_cutoff(dates: &[NaiveDate], crisis_start: NaiveDate) -> Option<usize> {
    let limit = crisis_start - Duration::days(CUTOFF_CALENDAR_DAYS);
    let k = dates.partition_point(|d| *d <= limit);
    k.checked_sub(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use std::io::Write;

    fn day(i: usize) -> NaiveDate {
        NaiveDate::from_ymd_opt(2000, 1, 3).unwrap() + Duration::days(i as i64)
    }

    fn write_csv(dir: &Path, name: &str, rows: &[String]) -> PathBuf {
        let path = dir.join(name);
        let mut f = File::create(&path).unwrap();
        writeln!(f, "Date,Open,High,Low,Close,AdjClose,Volume").unwrap();
        for r in rows {
            writeln!(f, "{r}").unwrap();
        }
        path
    }

    fn rows(n: usize, skip: Option<usize>) -> Vec<String> {
        (0..n)
            .filter(|i| Some(*i) != skip)
            .map(|i| {
                let p = 100.0 + i as f64;
                format!("{},{p},{p},{p},{p},{p},1000", day(i).format("%Y-%m-%d"))
            })
            .collect()
    }

    fn panel_from(prices: Vec<Vec<f64>>) -> PricePanel {
        let t = prices[0].len();
        PricePanel::from_closes(
            (0..t).map(day).collect(),
            prices
                .into_iter()
                .enumerate()
                .map(|(k, p)| (format!("A{k}"), p))
                .collect(),
        )
        .unwrap()
    }

    fn random_prices(t: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = SplitMix64::new(seed);
        let mut a = 100.0;
        let mut b = 50.0;
        (0..t)
            .map(|_| {
                let (z1, z2) = rng.normal_pair();
                a *= (0.01 * z1).exp();
                b *= (0.007 * z1 + 0.007 * z2).exp();
                (a, b)
            })
            .fold(vec![vec![], vec![]], |mut acc, (x, y)| {
                acc[0].push(x);
                acc[1].push(y);
                acc
            })
    }

    #[test]
    fn loads_aligned_files() {
        let dir = tempfile::tempdir().unwrap();
        let a = write_csv(dir.path(), "SPY.csv", &rows(10, None));
        let b = write_csv(dir.path(), "DIA.csv", &rows(10, None));
        let p = load_ohlcv(&[a, b], 5).unwrap();
        assert_eq!(p.len(), 10);
        assert_eq!(p.assets[0].name, "SPY");
        assert_eq!(p.assets[1].adj_close[3], 103.0);
    }

    #[test]
    fn intersection_drops_missing_dates() {
        let dir = tempfile::tempdir().unwrap();
        let a = write_csv(dir.path(), "a.csv", &rows(10, None));
        let b = write_csv(dir.path(), "b.csv", &rows(10, Some(4)));
        let p = load_ohlcv(&[a, b], 5).unwrap();
        assert_eq!(p.len(), 9);
        assert!(!p.dates.contains(&day(4)));
    }

    #[test]
    fn empty_cell_drops_row() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = rows(10, None);
        r[2] = format!("{},1,1,1,,1,1", day(2).format("%Y-%m-%d"));
        let a = write_csv(dir.path(), "a.csv", &r);
        let b = write_csv(dir.path(), "b.csv", &rows(10, None));
        assert_eq!(load_ohlcv(&[a, b], 5).unwrap().len(), 9);
    }

    #[test]
    fn malformed_cell_names_file_and_line() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = rows(10, None);
        r[5] = format!("{},1,1,1,abc,1,1", day(5).format("%Y-%m-%d"));
        let a = write_csv(dir.path(), "bad.csv", &r);
        let b = write_csv(dir.path(), "b.csv", &rows(10, None));
        match load_ohlcv(&[a.clone(), b], 5) {
            Err(Error::Parse { path, line, .. }) => {
                assert_eq!(path, a);
                assert_eq!(line, 7);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn too_few_dates_or_assets() {
        let dir = tempfile::tempdir().unwrap();
        let a = write_csv(dir.path(), "a.csv", &rows(10, None));
        let b = write_csv(dir.path(), "b.csv", &rows(10, None));
        assert!(matches!(
            load_ohlcv(&[a.clone(), b], MIN_COMMON_DATES),
            Err(Error::InsufficientHistory(_))
        ));
        assert!(load_ohlcv(&[a], 1).is_err());
        assert!(matches!(
            load_ohlcv(&[dir.path().join("missing.csv"), dir.path().join("x.csv")], 1),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn constant_prices_give_zero_features() {
        let p = panel_from(vec![vec![10.0; 30], vec![20.0; 30]]);
        let f = raw_features(&p).unwrap();
        assert_eq!(f.width(), 13);
        for row in &f.rows[20..] {
            assert!(row.iter().all(|v| *v == 0.0), "{row:?}");
        }
    }

    #[test]
    fn doubling_gives_ln2() {
        let mut a = vec![10.0; 25];
        a[21] = 20.0;
        a[22..].iter_mut().for_each(|v| *v = 20.0);
        let p = panel_from(vec![a, vec![5.0; 25]]);
        let f = raw_features(&p).unwrap();
        assert!((f.rows[21][0] - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn raw_features_match_direct_recomputation() {
        let px = random_prices(60, 1);
        let p = panel_from(px.clone());
        let f = raw_features(&p).unwrap();
        let t = 45;
        let r = |k: usize, s: usize| (px[k][s] / px[k][s - 1]).ln();
        let std_of = |v: Vec<f64>| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)).sqrt()
        };
        let ra: Vec<f64> = (t - 19..=t).map(|s| r(0, s)).collect();
        let rb: Vec<f64> = (t - 19..=t).map(|s| r(1, s)).collect();
        let want = [
            r(0, t),
            r(1, t),
            std_of((t - 4..=t).map(|s| r(0, s)).collect()),
            std_of((t - 4..=t).map(|s| r(1, s)).collect()),
            std_of(ra.clone()),
            std_of(rb.clone()),
            px[0][t] / px[0][t - 5] - 1.0,
            px[1][t] / px[1][t - 5] - 1.0,
            px[0][t] / px[0][t - 20] - 1.0,
            px[1][t] / px[1][t - 20] - 1.0,
        ];
        for (j, w) in want.iter().enumerate() {
            assert!((f.rows[t][j] - w).abs() < 1e-12, "column {j}");
        }
        let (ma, mb) = (ra.iter().sum::<f64>() / 20.0, rb.iter().sum::<f64>() / 20.0);
        let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = rb.iter().map(|x| (x - mb).powi(2)).sum();
        assert!((f.rows[t][10] - cov / (va * vb).sqrt()).abs() < 1e-12);
        let d5: f64 = (t - 4..=t).map(|s| (r(0, s) - r(1, s)).abs()).sum::<f64>() / 5.0;
        assert!((f.rows[t][11] - d5).abs() < 1e-12);
        for row in &f.rows[20..] {
            assert!(row.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn enrich_examples() {
        let px = random_prices(80, 2);
        let raw = raw_features(&panel_from(px)).unwrap();
        let e = enrich(&raw, 20).unwrap();
        assert_eq!(e.width(), 52);
        assert_eq!(e.valid_from, 39);
        assert!(e.rows[38].iter().all(|v| v.is_nan()));
        let t = 60;
        for j in 0..13 {
            let w: Vec<f64> = (t - 19..=t).map(|s| raw.rows[s][j]).collect();
            let m = w.iter().sum::<f64>() / 20.0;
            let sd = (w.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 19.0).sqrt();
            assert!((e.rows[t][4 * j] - m).abs() < 1e-12);
            assert!((e.rows[t][4 * j + 1] - sd).abs() < 1e-12);
            assert_eq!(e.rows[t][4 * j + 2], w.iter().copied().fold(f64::INFINITY, f64::min));
            assert_eq!(e.rows[t][4 * j + 3], w.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        }

        // constant and ramp columns
        let n = 50;
        let ramp = FeatureMatrix {
            dates: (0..n).map(day).collect(),
            columns: vec!["c".into(), "r".into()],
            rows: (0..n).map(|t| vec![3.0, t as f64 + 1.0]).collect(),
            valid_from: 0,
        };
        let e = enrich(&ramp, 20).unwrap();
        for t in 19..n {
            assert_eq!(&e.rows[t][..4], &[3.0, 0.0, 3.0, 3.0]);
            assert_eq!(e.rows[t][7], t as f64 + 1.0);
        }
    }

    fn factor_features(t: usize, seed: u64) -> FeatureMatrix {
        // two planted factors across 8 columns plus small noise
        let mut rng = SplitMix64::new(seed);
        let load: Vec<[f64; 2]> = (0..8)
            .map(|_| [rng.normal_pair().0, rng.normal_pair().0])
            .collect();
        let rows = (0..t)
            .map(|_| {
                let (f1, f2) = rng.normal_pair();
                load.iter()
                    .map(|l| 3.0 * (l[0] * f1 + l[1] * f2) + 0.05 * rng.normal_pair().0)
                    .collect()
            })
            .collect();
        FeatureMatrix {
            dates: (0..t).map(day).collect(),
            columns: (0..8).map(|j| format!("f{j}")).collect(),
            rows,
            valid_from: 0,
        }
    }

    #[test]
    fn preprocessor_standardizes_and_finds_factors() {
        let f = factor_features(300, 3);
        let prep = fit_preprocessor(&f, 199, 3).unwrap();
        for j in 0..8 {
            let col: Vec<f64> = f.rows[..200].iter().map(|r| (r[j] - prep.mean[j]) / prep.std[j]).collect();
            let m = col.iter().sum::<f64>() / 200.0;
            assert!(m.abs() < 1e-10);
            assert!((sample_std(&col) - 1.0).abs() < 1e-10);
        }
        assert!(prep.eigenvalues[1] / prep.eigenvalues[2] > 10.0);
        for (i, a) in prep.loadings.iter().enumerate() {
            for (j, b) in prep.loadings.iter().enumerate() {
                let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                assert!((d - if i == j { 1.0 } else { 0.0 }).abs() < 1e-10);
            }
            let big = a.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
            assert!(big > 0.0);
        }
        assert_eq!(prep, fit_preprocessor(&f, 199, 3).unwrap());
    }

    #[test]
    fn preprocessor_ignores_future_rows() {
        let f = factor_features(300, 4);
        let mut g = f.clone();
        for row in g.rows.iter_mut().skip(150) {
            row.iter_mut().for_each(|v| *v = 1e6);
        }
        assert_eq!(fit_preprocessor(&f, 149, 4).unwrap(), fit_preprocessor(&g, 149, 4).unwrap());
    }

    #[test]
    fn preprocessor_errors() {
        let f = factor_features(100, 5);
        assert!(matches!(fit_preprocessor(&f, 20, 3), Err(Error::InsufficientHistory(_))));
        let mut flat = f.clone();
        for r in flat.rows.iter_mut() {
            let x = r[0];
            r.iter_mut().for_each(|v| *v = x);
        }
        assert!(matches!(
            fit_preprocessor(&flat, 99, 3),
            Err(Error::RankDeficient { requested: 3, achievable: 1 })
        ));
    }

    #[test]
    fn transform_rows() {
        let f = factor_features(200, 6);
        let prep = fit_preprocessor(&f, 149, 3).unwrap();
        let e = prep.transform(&f).unwrap();
        for row in e.rows.iter().flatten() {
            let n: f64 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-12);
        }
        let (zero, flag) = prep.transform_row(&prep.mean).unwrap().unwrap();
        assert!(flag && zero.iter().all(|v| *v == 0.0));

        // project-then-normalize oracle
        let row = &f.rows[170];
        let z: Vec<f64> = (0..8).map(|j| (row[j] - prep.mean[j]) / prep.std[j]).collect();
        let y: Vec<f64> = prep.loadings.iter().map(|l| (0..8).map(|j| l[j] * z[j]).sum()).collect();
        let n = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        for k in 0..3 {
            assert!((e.rows[170].as_ref().unwrap()[k] - y[k] / n).abs() < 1e-14);
        }
    }

    #[test]
    fn cutoff_is_ten_calendar_days_back() {
        let dates: Vec<NaiveDate> = (0..40).map(day).collect();
        let crisis = day(30);
        assert_eq!(causal_cutoff(&dates, crisis), Some(20));
        assert_eq!(causal_cutoff(&dates, day(5)), None);
    }
}
