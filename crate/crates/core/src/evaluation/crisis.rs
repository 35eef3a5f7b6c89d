//! Crisis definitions and their placement on a trading calendar.

use std::path::Path;

use chrono::{Months, NaiveDate};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Trading days added on each side of a crisis window at evaluation.
pub const EXTENSION_DAYS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Category {
    Conventional,
    Novel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrisisWindow {
    pub name: String,
    #[serde(deserialize_with = "de_start", serialize_with = "ser_date")]
    pub start: NaiveDate,
    #[serde(deserialize_with = "de_end", serialize_with = "ser_date")]
    pub end: NaiveDate,
    pub category: Category,
    /// Whether the crisis is part of the evaluation panel. Excluded crises
    /// still count as non-normal days.
    #[serde(default = "yes")]
    pub include_in_panel: bool,
}

fn yes() -> bool {
    true
}

fn ser_date<S: Serializer>(d: &NaiveDate, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&d.format("%Y-%m-%d").to_string())
}

/// `YYYY-MM-DD`, or `YYYY-MM` meaning the first (`end = false`) or last day
/// of the month.
pub fn parse_month_or_date(s: &str, end: bool) -> Result<NaiveDate> {
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(d);
    }
    let first = NaiveDate::parse_from_str(&format!("{s}-01"), "%Y-%m-%d")
        .map_err(|_| Error::InvalidInput(format!("bad crisis date `{s}`")))?;
    if end {
        Ok(first + Months::new(1) - chrono::Duration::days(1))
    } else {
        Ok(first)
    }
}

fn de_start<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<NaiveDate, D::Error> {
    let s = String::deserialize(d)?;
    parse_month_or_date(&s, false).map_err(serde::de::Error::custom)
}

fn de_end<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<NaiveDate, D::Error> {
    let s = String::deserialize(d)?;
    parse_month_or_date(&s, true).map_err(serde::de::Error::custom)
}

const DEFAULT_CRISES: &str = r#"[
  {"name": "1998 LTCM Crisis", "start": "1998-08", "end": "1998-12", "category": "Conventional", "include_in_panel": false},
  {"name": "2000 Dot-com Bust", "start": "2000-03", "end": "2000-12", "category": "Conventional"},
  {"name": "2001 September 11", "start": "2001-09", "end": "2001-10", "category": "Conventional"},
  {"name": "2007 Quant Meltdown", "start": "2007-08", "end": "2007-09", "category": "Conventional"},
  {"name": "2008 GFC", "start": "2008-09", "end": "2009-03", "category": "Conventional"},
  {"name": "2010 Flash Crash", "start": "2010-05", "end": "2010-06", "category": "Conventional"},
  {"name": "2011 Euro Crisis", "start": "2011-07", "end": "2011-10", "category": "Conventional"},
  {"name": "2013 Taper Tantrum", "start": "2013-05", "end": "2013-07", "category": "Conventional"},
  {"name": "2015 China Crash", "start": "2015-07", "end": "2015-09", "category": "Conventional"},
  {"name": "2020 COVID", "start": "2020-02", "end": "2020-04", "category": "Conventional"},
  {"name": "2016 Brexit", "start": "2016-06", "end": "2016-07", "category": "Novel"},
  {"name": "2018 Volmageddon", "start": "2018-01", "end": "2018-04", "category": "Novel"},
  {"name": "2018 Q4 Selloff", "start": "2018-10", "end": "2018-12", "category": "Novel"},
  {"name": "2019 Repo Crisis", "start": "2019-09", "end": "2019-10", "category": "Novel"},
  {"name": "2021 Meme/Archegos", "start": "2021-01", "end": "2021-04", "category": "Novel"},
  {"name": "2022 Rate Hikes", "start": "2022-01", "end": "2022-10", "category": "Novel"},
  {"name": "2023 SVB", "start": "2023-03", "end": "2023-04", "category": "Novel"},
  {"name": "2024 Carry Unwind", "start": "2024-07", "end": "2024-08", "category": "Novel"}
]"#;

/// The 18 historical crisis windows shipped as defaults.
pub fn default_crises() -> Vec<CrisisWindow> {
    parse_crises(DEFAULT_CRISES).expect("embedded crisis table parses")
}

pub fn parse_crises(json: &str) -> Result<Vec<CrisisWindow>> {
    let v: Vec<CrisisWindow> = serde_json::from_str(json)?;
    if v.is_empty() {
        return Err(Error::InvalidInput("crisis list is empty".into()));
    }
    for c in &v {
        if c.start >= c.end {
            return Err(Error::InvalidInput(format!(
                "crisis `{}` starts on or after its end",
                c.name
            )));
        }
    }
    Ok(v)
}

pub fn load_crises(path: &Path) -> Result<Vec<CrisisWindow>> {
    let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_crises(&s)
}

/// A crisis placed on a calendar: `start..=end` are the trading days inside
/// the nominal window, `ext_start..=ext_end` the extended window clipped to
/// the calendar.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndexedWindow {
    pub name: String,
    pub category: Category,
    pub include_in_panel: bool,
    pub start: usize,
    pub end: usize,
    pub ext_start: usize,
    pub ext_end: usize,
}

impl IndexedWindow {
    pub fn ext_len(&self) -> usize {
        self.ext_end - self.ext_start + 1
    }

    pub fn contains_ext(&self, t: usize) -> bool {
        (self.ext_start..=self.ext_end).contains(&t)
    }
}

/// Places each crisis with at least one trading day on the calendar.
pub fn index_windows(dates: &[NaiveDate], crises: &[CrisisWindow], extension: usize) -> Vec<IndexedWindow> {
    let mut out = Vec::new();
    for c in crises {
        let s = dates.partition_point(|d| *d < c.start);
        let e = dates.partition_point(|d| *d <= c.end);
        if s >= e {
            continue;
        }
        let end = e - 1;
        out.push(IndexedWindow {
            name: c.name.clone(),
            category: c.category,
            include_in_panel: c.include_in_panel,
            start: s,
            end,
            ext_start: s.saturating_sub(extension),
            ext_end: (end + extension).min(dates.len() - 1),
        });
    }
    out
}

/// `true` on days inside any extended window.
pub fn crisis_mask(len: usize, windows: &[IndexedWindow]) -> Vec<bool> {
    let mut m = vec![false; len];
    for w in windows {
        for v in &mut m[w.ext_start..=w.ext_end.min(len.saturating_sub(1))] {
            *v = true;
        }
    }
    m
}

/// Defined scores inside `w`'s extended window, and defined scores from
/// `valid_from` on outside every extended window.
pub fn split_samples(
    z: &[Option<f64>],
    w: &IndexedWindow,
    mask: &[bool],
    valid_from: usize,
) -> (Vec<f64>, Vec<f64>) {
    let crisis: Vec<f64> = (w.ext_start..=w.ext_end.min(z.len().saturating_sub(1)))
        .filter(|&t| t >= valid_from)
        .filter_map(|t| z[t])
        .collect();
    let normal: Vec<f64> = (valid_from..z.len())
        .filter(|&t| !mask[t])
        .filter_map(|t| z[t])
        .collect();
    (crisis, normal)
}
