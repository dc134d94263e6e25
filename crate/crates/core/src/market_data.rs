//! Daily and intraday price ingestion.
//!
//! CSV contracts:
//! - intraday: `timestamp,open,high,low,close` with ISO-8601 timestamps
//! - daily: `date,open,high,low,close`
//! - precomputed measures: `date,measure_name,value`
//!
//! Dates in the daily and measure files may also be plain positive integers
//! (simulated data is written with days numbered `1..n`).

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: {message}")]
    Validation { line: u64, message: String },
    #[error("csv header mismatch: expected `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("insufficient data: {0}")]
    Insufficient(String),
}

fn parse_err(line: u64, message: impl Into<String>) -> DataError {
    DataError::Parse { line, message: message.into() }
}

fn invalid(line: u64, message: impl Into<String>) -> DataError {
    DataError::Validation { line, message: message.into() }
}

/// Day label: a calendar date, or an ordinal for synthetic series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum DateKey {
    Index(u32),
    Date(NaiveDate),
}

impl fmt::Display for DateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DateKey::Index(i) => write!(f, "{i}"),
            DateKey::Date(d) => write!(f, "{}", d.format("%Y-%m-%d")),
        }
    }
}

impl FromStr for DateKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Ok(i) = s.parse::<u32>() {
            return Ok(DateKey::Index(i));
        }
        NaiveDate::parse_from_str(s, "%Y-%m-%d")
            .or_else(|_| NaiveDate::parse_from_str(s, "%Y%m%d"))
            .map(DateKey::Date)
            .map_err(|_| format!("unrecognized date `{s}`"))
    }
}

impl From<DateKey> for String {
    fn from(d: DateKey) -> String {
        d.to_string()
    }
}

impl TryFrom<String> for DateKey {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<NaiveDate> for DateKey {
    fn from(d: NaiveDate) -> Self {
        DateKey::Date(d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntradayBar {
    pub timestamp: NaiveDateTime,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
}

impl IntradayBar {
    fn check(&self) -> Result<(), String> {
        check_ohlc(self.open, self.high, self.low, self.close)
    }
}

fn check_ohlc(open: f64, high: f64, low: f64, close: f64) -> Result<(), String> {
    for (name, v) in [("open", open), ("high", high), ("low", low), ("close", close)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(format!("{name} price {v} is not a positive finite number"));
        }
    }
    if high < low {
        return Err(format!("high {high} below low {low}"));
    }
    if low > open.min(close) {
        return Err(format!("low {low} above min(open, close)"));
    }
    if high < open.max(close) {
        return Err(format!("high {high} below max(open, close)"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntradayDay {
    pub date: NaiveDate,
    pub bars: Vec<IntradayBar>,
}

impl IntradayDay {
    /// Price path `P_0..P_N`: the first bar's open followed by every close.
    pub fn price_path(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.bars.len() + 1);
        if let Some(first) = self.bars.first() {
            p.push(first.open);
        }
        p.extend(self.bars.iter().map(|b| b.close));
        p
    }

    pub fn closes(&self) -> Vec<f64> {
        self.bars.iter().map(|b| b.close).collect()
    }
}

/// Intraday bars grouped by trading day, at a nominal fixed interval.
#[derive(Debug, Clone, PartialEq)]
pub struct IntradaySeries {
    pub interval_minutes: u32,
    pub days: Vec<IntradayDay>,
}

impl IntradaySeries {
    pub fn bar_counts(&self) -> Vec<(NaiveDate, usize)> {
        self.days.iter().map(|d| (d.date, d.bars.len())).collect()
    }

    /// Days with fewer than two bars; realized measures are not defined there.
    pub fn flagged_days(&self) -> Vec<NaiveDate> {
        self.days.iter().filter(|d| d.bars.len() < 2).map(|d| d.date).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DailyBar {
    pub date: DateKey,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DailySeries {
    pub bars: Vec<DailyBar>,
}

impl DailySeries {
    /// Validates ordering and price invariants.
    pub fn new(bars: Vec<DailyBar>) -> Result<Self, DataError> {
        for (i, b) in bars.iter().enumerate() {
            check_ohlc(b.open, b.high, b.low, b.close).map_err(|m| invalid(i as u64 + 1, m))?;
            if i > 0 && bars[i - 1].date >= b.date {
                return Err(invalid(i as u64 + 1, format!("date {} not after {}", b.date, bars[i - 1].date)));
            }
        }
        Ok(Self { bars })
    }

    /// Synthesizes a price series whose close-to-close log returns are
    /// `returns`, starting from `start_price`. Opens equal the previous close.
    pub fn from_returns(dates: &[DateKey], returns: &[f64], start_price: f64) -> Result<Self, DataError> {
        if dates.len() != returns.len() + 1 {
            return Err(DataError::Domain(format!("need {} dates for {} returns", returns.len() + 1, returns.len())));
        }
        let mut bars = Vec::with_capacity(dates.len());
        let mut close = start_price;
        bars.push(DailyBar { date: dates[0], open: close, high: close, low: close, close });
        for (d, r) in dates[1..].iter().zip(returns) {
            let open = close;
            close = open * r.exp();
            bars.push(DailyBar { date: *d, open, high: open.max(close), low: open.min(close), close });
        }
        Self::new(bars)
    }

    pub fn len(&self) -> usize {
        self.bars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bars.is_empty()
    }

    pub fn dates(&self) -> Vec<DateKey> {
        self.bars.iter().map(|b| b.date).collect()
    }
}

/// Daily close-to-close log returns; `dates[i]` is the day the return is
/// realized on.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReturnSeries {
    pub dates: Vec<DateKey>,
    pub values: Vec<f64>,
}

impl ReturnSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn daily_log_returns(daily: &DailySeries) -> Result<ReturnSeries, DataError> {
    if daily.len() < 2 {
        return Err(DataError::Insufficient(format!("need at least 2 days for returns, got {}", daily.len())));
    }
    let mut out = ReturnSeries { dates: Vec::with_capacity(daily.len() - 1), values: Vec::with_capacity(daily.len() - 1) };
    for w in daily.bars.windows(2) {
        let (prev, cur) = (w[0].close, w[1].close);
        if !(prev > 0.0) || !(cur > 0.0) {
            return Err(DataError::Domain(format!("non-positive close near {}", w[1].date)));
        }
        out.dates.push(w[1].date);
        out.values.push(cur.ln() - prev.ln());
    }
    Ok(out)
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    const FORMATS: [&str; 4] = ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"];
    let s = s.trim();
    FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .or_else(|| chrono::DateTime::parse_from_rfc3339(s).ok().map(|d| d.naive_local()))
}

fn parse_price(field: Option<&str>, name: &str, line: u64) -> Result<f64, DataError> {
    let raw = field.ok_or_else(|| parse_err(line, format!("missing {name}")))?;
    raw.trim().parse::<f64>().map_err(|_| parse_err(line, format!("bad {name} `{raw}`")))
}

fn reader<R: Read>(src: R, expected: &[&str]) -> Result<csv::Reader<R>, DataError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).flexible(true).from_reader(src);
    let headers = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?;
    let found: Vec<String> = headers.iter().map(|h| h.to_ascii_lowercase()).collect();
    if found != expected {
        return Err(DataError::Header { expected: expected.join(","), found: found.join(",") });
    }
    Ok(rdr)
}

fn record_line(rec: &csv::StringRecord) -> u64 {
    rec.position().map(|p| p.line()).unwrap_or(0)
}

/// Parses intraday bars. Every row becomes a bar or a located error.
pub fn parse_intraday<R: Read>(src: R, interval_minutes: u32) -> Result<IntradaySeries, DataError> {
    if interval_minutes == 0 {
        return Err(DataError::Domain("interval must be positive".into()));
    }
    let mut rdr = reader(src, &["timestamp", "open", "high", "low", "close"])?;
    let mut days: Vec<IntradayDay> = Vec::new();
    let mut last: Option<NaiveDateTime> = None;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = record_line(&rec);
        if rec.len() != 5 {
            return Err(parse_err(line, format!("expected 5 fields, found {}", rec.len())));
        }
        let ts = parse_timestamp(&rec[0]).ok_or_else(|| parse_err(line, format!("bad timestamp `{}`", &rec[0])))?;
        let bar = IntradayBar {
            timestamp: ts,
            open: parse_price(rec.get(1), "open", line)?,
            high: parse_price(rec.get(2), "high", line)?,
            low: parse_price(rec.get(3), "low", line)?,
            close: parse_price(rec.get(4), "close", line)?,
        };
        bar.check().map_err(|m| invalid(line, m))?;
        if let Some(prev) = last {
            if ts <= prev {
                return Err(invalid(line, format!("timestamp {ts} not after {prev}")));
            }
            if ts.date() == prev.date() {
                let gap = (ts - prev).num_seconds();
                let step = i64::from(interval_minutes) * 60;
                if gap % step != 0 {
                    return Err(invalid(line, format!("gap of {gap}s is not a multiple of the {interval_minutes}-minute interval")));
                }
            }
        }
        last = Some(ts);
        match days.last_mut() {
            Some(d) if d.date == ts.date() => d.bars.push(bar),
            _ => days.push(IntradayDay { date: ts.date(), bars: vec![bar] }),
        }
    }
    Ok(IntradaySeries { interval_minutes, days })
}

pub fn load_intraday(path: impl AsRef<Path>, interval_minutes: u32) -> Result<IntradaySeries, DataError> {
    parse_intraday(std::fs::File::open(path)?, interval_minutes)
}

pub fn parse_daily<R: Read>(src: R) -> Result<DailySeries, DataError> {
    let mut rdr = reader(src, &["date", "open", "high", "low", "close"])?;
    let mut bars = Vec::new();
    let mut lines = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(e.position().map(|p| p.line()).unwrap_or(0), e.to_string()))?;
        let line = record_line(&rec);
        if rec.len() != 5 {
            return Err(parse_err(line, format!("expected 5 fields, found {}", rec.len())));
        }
        let date: DateKey = rec[0].parse().map_err(|m: String| parse_err(line, m))?;
        bars.push(DailyBar {
            date,
            open: parse_price(rec.get(1), "open", line)?,
            high: parse_price(rec.get(2), "high", line)?,
            low: parse_price(rec.get(3), "low", line)?,
            close: parse_price(rec.get(4), "close", line)?,
        });
        lines.push(line);
    }
    // re-map validation errors from row index to file line
    DailySeries::new(bars).map_err(|e| match e {
        DataError::Validation { line, message } => {
            DataError::Validation { line: lines.get(line as usize - 1).copied().unwrap_or(line), message }
        }
        other => other,
    })
}

pub fn load_daily(path: impl AsRef<Path>) -> Result<DailySeries, DataError> {
    parse_daily(std::fs::File::open(path)?)
}

pub fn write_daily<W: Write>(out: W, daily: &DailySeries) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| DataError::Io(std::io::Error::other(e));
    w.write_record(["date", "open", "high", "low", "close"]).map_err(io)?;
    for b in &daily.bars {
        w.write_record([
            b.date.to_string(),
            format!("{:.17e}", b.open),
            format!("{:.17e}", b.high),
            format!("{:.17e}", b.low),
            format!("{:.17e}", b.close),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn parse_returns<R: Read>(src: R) -> Result<ReturnSeries, DataError> {
    let mut rdr = reader(src, &["date", "return"])?;
    let mut out = ReturnSeries::default();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(e.position().map(|p| p.line()).unwrap_or(0), e.to_string()))?;
        let line = record_line(&rec);
        if rec.len() != 2 {
            return Err(parse_err(line, format!("expected 2 fields, found {}", rec.len())));
        }
        let date: DateKey = rec[0].parse().map_err(|m: String| parse_err(line, m))?;
        let value = parse_price(rec.get(1), "return", line)?;
        if !value.is_finite() {
            return Err(invalid(line, "return must be finite"));
        }
        if out.dates.last().is_some_and(|d| *d >= date) {
            return Err(invalid(line, format!("dates not increasing at {date}")));
        }
        out.dates.push(date);
        out.values.push(value);
    }
    if out.is_empty() {
        return Err(DataError::Insufficient("no returns".into()));
    }
    Ok(out)
}

pub fn load_returns(path: impl AsRef<Path>) -> Result<ReturnSeries, DataError> {
    parse_returns(std::fs::File::open(path)?)
}

/// CSV with header `date,return`.
pub fn write_returns<W: Write>(out: W, r: &ReturnSeries) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| DataError::Io(std::io::Error::other(e));
    w.write_record(["date", "return"]).map_err(io)?;
    for (d, v) in r.dates.iter().zip(&r.values) {
        w.write_record([d.to_string(), format!("{v:.17e}")]).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Externally computed realized measures keyed by lower-case name then date.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PrecomputedMeasures {
    pub series: BTreeMap<String, BTreeMap<DateKey, f64>>,
}

impl PrecomputedMeasures {
    pub fn get(&self, name: &str) -> Option<&BTreeMap<DateKey, f64>> {
        self.series.get(&name.to_ascii_lowercase())
    }

    pub fn insert(&mut self, name: &str, date: DateKey, value: f64) {
        self.series.entry(name.to_ascii_lowercase()).or_default().insert(date, value);
    }
}

pub fn parse_precomputed<R: Read>(src: R) -> Result<PrecomputedMeasures, DataError> {
    let mut rdr = reader(src, &["date", "measure_name", "value"])?;
    let mut out = PrecomputedMeasures::default();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(e.position().map(|p| p.line()).unwrap_or(0), e.to_string()))?;
        let line = record_line(&rec);
        if rec.len() != 3 {
            return Err(parse_err(line, format!("expected 3 fields, found {}", rec.len())));
        }
        let date: DateKey = rec[0].parse().map_err(|m: String| parse_err(line, m))?;
        let value = parse_price(rec.get(2), "value", line)?;
        if !value.is_finite() {
            return Err(invalid(line, "measure value must be finite"));
        }
        let name = rec[1].trim();
        if out.get(name).is_some_and(|s| s.contains_key(&date)) {
            return Err(invalid(line, format!("duplicate {name} value for {date}")));
        }
        out.insert(name, date, value);
    }
    Ok(out)
}

pub fn load_precomputed(path: impl AsRef<Path>) -> Result<PrecomputedMeasures, DataError> {
    parse_precomputed(std::fs::File::open(path)?)
}

pub fn write_precomputed<W: Write>(out: W, m: &PrecomputedMeasures) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| DataError::Io(std::io::Error::other(e));
    w.write_record(["date", "measure_name", "value"]).map_err(io)?;
    for (name, series) in &m.series {
        for (d, v) in series {
            w.write_record([d.to_string(), name.clone(), format!("{v:.17e}")]).map_err(io)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_day_file(bars_per_day: usize) -> String {
        let mut s = String::from("timestamp,open,high,low,close\n");
        for day in ["2016-01-04", "2016-01-05"] {
            for i in 0..bars_per_day {
                let minutes = 9 * 60 + 35 + 5 * i;
                let p = 100.0 + (i % 7) as f64 * 0.1;
                s.push_str(&format!("{day}T{:02}:{:02}:00,{p},{},{},{}\n", minutes / 60, minutes % 60, p + 0.2, p - 0.1, p + 0.05));
            }
        }
        s
    }

    #[test]
    fn parses_two_days() {
        let s = parse_intraday(two_day_file(78).as_bytes(), 5).unwrap();
        assert_eq!(s.days.len(), 2);
        assert!(s.days.iter().all(|d| d.bars.len() == 78));
        assert!(s.flagged_days().is_empty());
    }

    #[test]
    fn deterministic_parse() {
        let f = two_day_file(20);
        assert_eq!(parse_intraday(f.as_bytes(), 5).unwrap(), parse_intraday(f.as_bytes(), 5).unwrap());
    }

    #[test]
    fn high_below_low_is_located() {
        let f = "timestamp,open,high,low,close\n2016-01-04 09:35,100,101,99,100\n2016-01-04 09:40,100,98,99,100\n";
        match parse_intraday(f.as_bytes(), 5) {
            Err(DataError::Validation { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_row_is_located() {
        let f = "timestamp,open,high,low,close\n2016-01-04 09:35,100,101,99,100\n2016-01-04 09:40,abc,101,99,100\n";
        match parse_intraday(f.as_bytes(), 5) {
            Err(DataError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_monotone_timestamps() {
        let f = "timestamp,open,high,low,close\n2016-01-04 09:40,100,101,99,100\n2016-01-04 09:35,100,101,99,100\n";
        assert!(matches!(parse_intraday(f.as_bytes(), 5), Err(DataError::Validation { line: 3, .. })));
    }

    #[test]
    fn missing_bars_are_kept_as_gaps() {
        let f = "timestamp,open,high,low,close\n2016-01-04 09:35,100,101,99,100\n2016-01-04 09:50,100,101,99,100\n";
        let s = parse_intraday(f.as_bytes(), 5).unwrap();
        assert_eq!(s.days[0].bars.len(), 2);
        let bad = "timestamp,open,high,low,close\n2016-01-04 09:35,100,101,99,100\n2016-01-04 09:37,100,101,99,100\n";
        assert!(parse_intraday(bad.as_bytes(), 5).is_err());
    }

    #[test]
    fn single_bar_day_flagged() {
        let f = "timestamp,open,high,low,close\n2016-01-04 09:35,100,101,99,100\n2016-01-05 09:35,100,101,99,100\n2016-01-05 09:40,100,101,99,100\n";
        let s = parse_intraday(f.as_bytes(), 5).unwrap();
        assert_eq!(s.flagged_days(), vec![NaiveDate::from_ymd_opt(2016, 1, 4).unwrap()]);
    }

    fn daily(closes: &[f64]) -> DailySeries {
        let bars = closes
            .iter()
            .enumerate()
            .map(|(i, &c)| DailyBar { date: DateKey::Index(i as u32 + 1), open: c, high: c, low: c, close: c })
            .collect();
        DailySeries::new(bars).unwrap()
    }

    #[test]
    fn log_returns_examples() {
        assert_eq!(daily_log_returns(&daily(&[100.0, 100.0])).unwrap().values, vec![0.0]);
        let r = daily_log_returns(&daily(&[100.0, 105.0, 100.0])).unwrap();
        assert!((r.values[0] - 0.048_790_164_169_432).abs() < 1e-12);
        assert!((r.values[1] + 1.05f64.ln()).abs() < 1e-15);
        assert!(daily_log_returns(&daily(&[100.0])).is_err());
    }

    #[test]
    fn daily_rejects_unsorted_dates() {
        let f = "date,open,high,low,close\n2016-01-05,1,1,1,1\n2016-01-04,1,1,1,1\n";
        assert!(matches!(parse_daily(f.as_bytes()), Err(DataError::Validation { line: 3, .. })));
    }

    #[test]
    fn header_mismatch() {
        let f = "ts,open,high,low,close\n";
        assert!(matches!(parse_intraday(f.as_bytes(), 5), Err(DataError::Header { .. })));
    }

    #[test]
    fn returns_csv_round_trip() {
        let r = ReturnSeries { dates: vec![DateKey::Index(1), DateKey::Index(2)], values: vec![0.01, -0.0123456789] };
        let mut buf = Vec::new();
        write_returns(&mut buf, &r).unwrap();
        assert_eq!(parse_returns(buf.as_slice()).unwrap(), r);
        assert!(parse_returns("date,return\n2,0.1\n1,0.2\n".as_bytes()).is_err());
    }

    #[test]
    fn synthesized_prices_reproduce_returns() {
        let r = vec![0.01, -0.02, 0.003];
        let dates: Vec<DateKey> = (1..=4).map(DateKey::Index).collect();
        let d = DailySeries::from_returns(&dates, &r, 100.0).unwrap();
        let back = daily_log_returns(&d).unwrap();
        for (a, b) in r.iter().zip(&back.values) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn precomputed_round_trip() {
        let f = "date,measure_name,value\n2016-01-04,RK,0.0001\n2016-01-05,rk,0.0002\n";
        let m = parse_precomputed(f.as_bytes()).unwrap();
        assert_eq!(m.get("rk").unwrap().len(), 2);
        let mut buf = Vec::new();
        write_precomputed(&mut buf, &m).unwrap();
        assert_eq!(parse_precomputed(buf.as_slice()).unwrap(), m);
    }
}
