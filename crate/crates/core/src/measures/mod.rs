//! Realized volatility measures computed from intraday bars.
//!
//! All estimators work on log prices and are therefore invariant to
//! rescaling every price by a positive constant.

mod kernel;
mod panel;

pub use kernel::{realized_kernel, KernelConfig, KernelEstimate};
pub use panel::{build_measure_panel, PanelReport, PanelSpec, RealizedPanel};

use crate::market_data::IntradayBar;
use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("degenerate scaling history: {0}")]
    DegenerateHistory(String),
    #[error("alignment error: {0}")]
    Alignment(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MeasureKind {
    Rv,
    Rr,
    RvSs,
    RrSs,
    RvScaled,
    RrScaled,
    Rk,
}

impl MeasureKind {
    pub const ALL: [MeasureKind; 7] = [
        MeasureKind::Rv,
        MeasureKind::Rr,
        MeasureKind::RvSs,
        MeasureKind::RrSs,
        MeasureKind::RvScaled,
        MeasureKind::RrScaled,
        MeasureKind::Rk,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MeasureKind::Rv => "rv",
            MeasureKind::Rr => "rr",
            MeasureKind::RvSs => "rvss",
            MeasureKind::RrSs => "rrss",
            MeasureKind::RvScaled => "rvscaled",
            MeasureKind::RrScaled => "rrscaled",
            MeasureKind::Rk => "rk",
        }
    }

    /// Column label used in panel files and model ids.
    pub fn label(self) -> String {
        self.name().to_ascii_uppercase()
    }
}

impl fmt::Display for MeasureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MeasureKind {
    type Err = MeasureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        MeasureKind::ALL.into_iter().find(|k| k.name() == lower).ok_or_else(|| MeasureError::Config(format!("unknown measure `{s}`")))
    }
}

/// Parses a comma-separated measure list such as `rvss,rrss,rk`.
pub fn parse_measure_list(s: &str) -> Result<Vec<MeasureKind>, MeasureError> {
    s.split(',').filter(|p| !p.trim().is_empty()).map(str::parse).collect()
}

/// Which base estimator to sub-sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaseMeasure {
    Rv,
    Rr,
}

/// Sum of squared log-price increments over `prices`.
pub fn realized_variance(prices: &[f64]) -> Result<f64, MeasureError> {
    if prices.len() < 2 {
        return Err(MeasureError::InsufficientData(format!("realized variance needs 2 prices, got {}", prices.len())));
    }
    check_prices(prices)?;
    Ok(prices
        .windows(2)
        .map(|w| {
            let d = w[1].ln() - w[0].ln();
            d * d
        })
        .sum())
}

/// Sum of squared log ranges `(log H - log L)^2` divided by `4 log 2`.
pub fn realized_range(ranges: &[(f64, f64)]) -> Result<f64, MeasureError> {
    if ranges.is_empty() {
        return Err(MeasureError::InsufficientData("realized range needs one interval".into()));
    }
    let mut acc = 0.0;
    for &(high, low) in ranges {
        if !(low > 0.0) || !high.is_finite() {
            return Err(MeasureError::Domain(format!("non-positive price in range ({high}, {low})")));
        }
        if high < low {
            return Err(MeasureError::Domain(format!("high {high} below low {low}")));
        }
        let d = high.ln() - low.ln();
        acc += d * d;
    }
    Ok(acc / (4.0 * LN_2))
}

fn check_prices(prices: &[f64]) -> Result<(), MeasureError> {
    match prices.iter().find(|p| !(**p > 0.0) || !p.is_finite()) {
        Some(p) => Err(MeasureError::Domain(format!("non-positive price {p}"))),
        None => Ok(()),
    }
}

fn step_ratio(fine_minutes: u32, coarse_minutes: u32) -> Result<usize, MeasureError> {
    if fine_minutes == 0 || coarse_minutes == 0 || !coarse_minutes.is_multiple_of(fine_minutes) {
        return Err(MeasureError::Config(format!(
            "coarse interval {coarse_minutes} is not a positive multiple of fine interval {fine_minutes}"
        )));
    }
    Ok((coarse_minutes / fine_minutes) as usize)
}

/// Price grid `P_0..P_N` for a bar list: the first open then each close.
pub(crate) fn price_grid(bars: &[IntradayBar]) -> Vec<f64> {
    let mut p = Vec::with_capacity(bars.len() + 1);
    if let Some(b) = bars.first() {
        p.push(b.open);
    }
    p.extend(bars.iter().map(|b| b.close));
    p
}

/// Aggregates consecutive runs of `step` bars into coarse bars, starting at
/// bar `offset`. Trailing partial windows are dropped.
pub(crate) fn coarse_bars(bars: &[IntradayBar], step: usize, offset: usize) -> Vec<IntradayBar> {
    if offset >= bars.len() {
        return Vec::new();
    }
    bars[offset..]
        .chunks_exact(step)
        .map(|w| IntradayBar {
            timestamp: w[w.len() - 1].timestamp,
            open: w[0].open,
            high: w.iter().map(|b| b.high).fold(f64::NEG_INFINITY, f64::max),
            low: w.iter().map(|b| b.low).fold(f64::INFINITY, f64::min),
            close: w[w.len() - 1].close,
        })
        .collect()
}

/// Sub-sampled RV or RR: the coarse-grid estimator averaged over the
/// `coarse/fine` offset grids. Partial windows at the end of the day are
/// dropped. On short days where some offsets hold no complete window the
/// average runs over the non-empty offsets only.
pub fn subsampled_measure(kind: BaseMeasure, bars: &[IntradayBar], fine_minutes: u32, coarse_minutes: u32) -> Result<f64, MeasureError> {
    let step = step_ratio(fine_minutes, coarse_minutes)?;
    let n = bars.len();
    if n < step || n == 0 {
        return Err(MeasureError::InsufficientData(format!("{n} fine bars cannot fill one {coarse_minutes}-minute window")));
    }
    let grid = price_grid(bars);
    check_prices(&grid)?;
    let log_p: Vec<f64> = grid.iter().map(|p| p.ln()).collect();
    let offsets = step.min(n - step + 1);
    let mut total = 0.0;
    for offset in 0..offsets {
        total += match kind {
            BaseMeasure::Rv => {
                let mut s = 0.0;
                let mut i = offset;
                while i + step <= n {
                    let d = log_p[i + step] - log_p[i];
                    s += d * d;
                    i += step;
                }
                s
            }
            BaseMeasure::Rr => {
                let mut s = 0.0;
                for w in bars[offset..].chunks_exact(step) {
                    let hi = w.iter().map(|b| b.high).fold(f64::NEG_INFINITY, f64::max);
                    let lo = w.iter().map(|b| b.low).fold(f64::INFINITY, f64::min);
                    if hi < lo || !(lo > 0.0) {
                        return Err(MeasureError::Domain(format!("invalid range ({hi}, {lo})")));
                    }
                    let d = hi.ln() - lo.ln();
                    s += d * d;
                }
                s
            }
        };
    }
    Ok(match kind {
        BaseMeasure::Rv => total / offsets as f64,
        BaseMeasure::Rr => total / (4.0 * LN_2 * offsets as f64),
    })
}

/// Scales `current` by the ratio of summed daily squares to summed
/// intraday measures over the last `q` entries of each history.
pub fn scaled_measure(current: f64, daily_history: &[f64], intraday_history: &[f64], q: usize) -> Result<f64, MeasureError> {
    if q == 0 {
        return Err(MeasureError::Config("scaling window must be positive".into()));
    }
    if daily_history.len() < q || intraday_history.len() < q {
        return Err(MeasureError::InsufficientData(format!(
            "scaling needs {q} prior days, have {} daily and {} intraday",
            daily_history.len(),
            intraday_history.len()
        )));
    }
    let num: f64 = daily_history[daily_history.len() - q..].iter().sum();
    let den: f64 = intraday_history[intraday_history.len() - q..].iter().sum();
    if !(den > 0.0) || !(num > 0.0) {
        return Err(MeasureError::DegenerateHistory(format!("daily sum {num}, intraday sum {den}")));
    }
    Ok(current * num / den)
}

/// Parzen weight: `1 - 6x² + 6x³` on [0, 1/2], `2(1-x)³` on [1/2, 1], 0 beyond.
pub fn parzen_weight(x: f64) -> Result<f64, MeasureError> {
    if !(x >= 0.0) {
        return Err(MeasureError::Domain(format!("parzen weight at negative or NaN argument {x}")));
    }
    Ok(parzen_unchecked(x))
}

#[inline]
pub(crate) fn parzen_unchecked(x: f64) -> f64 {
    if x <= 0.5 {
        1.0 - 6.0 * x * x + 6.0 * x * x * x
    } else if x <= 1.0 {
        let y = 1.0 - x;
        2.0 * y * y * y
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn bars_from(closes: &[f64]) -> Vec<IntradayBar> {
        let t0 = NaiveDate::from_ymd_opt(2020, 1, 2).unwrap().and_hms_opt(9, 30, 0).unwrap();
        let mut prev = closes[0];
        closes
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let open = prev;
                prev = c;
                IntradayBar {
                    timestamp: t0 + chrono::Duration::minutes(i as i64 + 1),
                    open,
                    high: open.max(c) * 1.001,
                    low: open.min(c) * 0.999,
                    close: c,
                }
            })
            .collect()
    }

    #[test]
    fn rv_examples() {
        assert_eq!(realized_variance(&[5.0, 5.0, 5.0]).unwrap(), 0.0);
        let p = [1.0, 0.01f64.exp(), (-0.01f64).exp()];
        assert!((realized_variance(&p).unwrap() - 0.0005).abs() < 1e-15);
        let doubled: Vec<f64> = p.iter().map(|x| 2.0 * x).collect();
        assert!((realized_variance(&doubled).unwrap() - realized_variance(&p).unwrap()).abs() < 1e-16);
        assert!(realized_variance(&[1.0]).is_err());
    }

    #[test]
    fn rr_examples() {
        assert_eq!(realized_range(&[(3.0, 3.0), (2.0, 2.0)]).unwrap(), 0.0);
        let one = realized_range(&[(2.0, 1.0)]).unwrap();
        assert!((one - 0.173_286_795_139_986_3).abs() < 1e-12);
        assert_eq!(realized_range(&[(2.0, 1.0), (2.0, 1.0)]).unwrap(), 2.0 * one);
        assert!(matches!(realized_range(&[(1.0, 2.0)]), Err(MeasureError::Domain(_))));
    }

    #[test]
    fn subsampling_degenerates_to_plain() {
        let bars = bars_from(&[100.0, 100.5, 99.8, 101.2, 100.9, 101.0]);
        let plain_rv = realized_variance(&price_grid(&bars)).unwrap();
        assert_eq!(subsampled_measure(BaseMeasure::Rv, &bars, 1, 1).unwrap(), plain_rv);
        let ranges: Vec<(f64, f64)> = bars.iter().map(|b| (b.high, b.low)).collect();
        let plain_rr = realized_range(&ranges).unwrap();
        assert_eq!(subsampled_measure(BaseMeasure::Rr, &bars, 1, 1).unwrap(), plain_rr);
    }

    #[test]
    fn subsampling_rejects_bad_ratio() {
        let bars = bars_from(&[100.0; 12]);
        assert!(matches!(subsampled_measure(BaseMeasure::Rv, &bars, 2, 5), Err(MeasureError::Config(_))));
    }

    #[test]
    fn constant_prices_give_zero() {
        let bars: Vec<IntradayBar> = bars_from(&[50.0; 12])
            .into_iter()
            .map(|mut b| {
                b.high = 50.0;
                b.low = 50.0;
                b
            })
            .collect();
        assert_eq!(subsampled_measure(BaseMeasure::Rv, &bars, 1, 5).unwrap(), 0.0);
        assert_eq!(subsampled_measure(BaseMeasure::Rr, &bars, 1, 5).unwrap(), 0.0);
    }

    #[test]
    fn scaling_examples() {
        let hist = [0.5, 1.0, 1.5, 2.0];
        assert_eq!(scaled_measure(0.7, &hist, &hist, 3).unwrap(), 0.7);
        let doubled: Vec<f64> = hist.iter().map(|x| 2.0 * x).collect();
        assert!((scaled_measure(0.7, &doubled, &hist, 3).unwrap() - 1.4).abs() < 1e-15);
        assert!(matches!(scaled_measure(0.7, &hist, &[0.0; 4], 3), Err(MeasureError::DegenerateHistory(_))));
        assert!(scaled_measure(0.7, &hist, &hist, 5).is_err());
    }

    #[test]
    fn parzen_values() {
        assert_eq!(parzen_weight(0.0).unwrap(), 1.0);
        assert_eq!(parzen_weight(1.0).unwrap(), 0.0);
        assert_eq!(parzen_weight(3.0).unwrap(), 0.0);
        let left = 1.0 - 6.0 * 0.25 + 6.0 * 0.125;
        let right = 2.0 * 0.5f64.powi(3);
        assert_eq!(left, 0.25);
        assert_eq!(right, 0.25);
        assert_eq!(parzen_weight(0.5).unwrap(), 0.25);
        assert!(parzen_weight(-0.1).is_err());
    }

    #[test]
    fn measure_names_parse() {
        assert_eq!(parse_measure_list("rvss, RRSS,rk").unwrap(), vec![MeasureKind::RvSs, MeasureKind::RrSs, MeasureKind::Rk]);
        assert!(parse_measure_list("bv").is_err());
    }
}
