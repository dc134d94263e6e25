use super::{
    coarse_bars, price_grid, realized_kernel, realized_range, realized_variance, scaled_measure, subsampled_measure, BaseMeasure,
    KernelConfig, MeasureError, MeasureKind,
};
use crate::market_data::{daily_log_returns, DailySeries, DateKey, IntradayDay, IntradaySeries, PrecomputedMeasures, ReturnSeries};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::f64::consts::LN_2;
use std::io::{Read, Write};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PanelSpec {
    pub measures: Vec<MeasureKind>,
    pub coarse_minutes: u32,
    pub scaling_window: usize,
    pub kernel: KernelConfig,
    /// Adds the squared overnight log gap to every unscaled measure.
    pub include_overnight: bool,
}

impl Default for PanelSpec {
    fn default() -> Self {
        Self {
            measures: vec![MeasureKind::RvSs],
            coarse_minutes: 5,
            scaling_window: 66,
            kernel: KernelConfig::default(),
            include_overnight: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PanelReport {
    pub dropped: Vec<(DateKey, String)>,
    pub notes: Vec<(DateKey, String)>,
}

/// Per-day measure matrix with one labelled column per measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizedPanel {
    pub dates: Vec<DateKey>,
    pub labels: Vec<String>,
    /// Row-major: `values[t][k]`.
    pub values: Vec<Vec<f64>>,
}

impl RealizedPanel {
    pub fn new(dates: Vec<DateKey>, labels: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self, MeasureError> {
        if dates.len() != values.len() {
            return Err(MeasureError::Alignment(format!("{} dates but {} rows", dates.len(), values.len())));
        }
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(MeasureError::Alignment(format!("dates not increasing at {}", w[1])));
        }
        for (d, row) in dates.iter().zip(&values) {
            if row.len() != labels.len() {
                return Err(MeasureError::Alignment(format!("row {d} has {} cells", row.len())));
            }
            if let Some(v) = row.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
                return Err(MeasureError::Domain(format!("non-positive measure {v} on {d}")));
            }
        }
        Ok(Self { dates, labels, values })
    }

    pub fn n_days(&self) -> usize {
        self.dates.len()
    }

    pub fn n_measures(&self) -> usize {
        self.labels.len()
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        self.values.iter().map(|r| r[k]).collect()
    }

    pub fn column_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l.eq_ignore_ascii_case(label))
    }

    /// Restricts the panel to the named columns, in the given order.
    pub fn select(&self, labels: &[String]) -> Result<Self, MeasureError> {
        let idx: Vec<usize> = labels
            .iter()
            .map(|l| self.column_index(l).ok_or_else(|| MeasureError::Config(format!("panel has no column `{l}`"))))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            dates: self.dates.clone(),
            labels: idx.iter().map(|&i| self.labels[i].clone()).collect(),
            values: self.values.iter().map(|r| idx.iter().map(|&i| r[i]).collect()).collect(),
        })
    }

    /// Keeps only the dates present in both the panel and `returns`.
    pub fn align_returns(&self, returns: &ReturnSeries) -> Result<(ReturnSeries, RealizedPanel), MeasureError> {
        let rmap: HashMap<&DateKey, f64> = returns.dates.iter().zip(returns.values.iter().copied()).collect();
        let mut dates = Vec::new();
        let mut r = Vec::new();
        let mut rows = Vec::new();
        for (d, row) in self.dates.iter().zip(&self.values) {
            if let Some(&v) = rmap.get(d) {
                dates.push(*d);
                r.push(v);
                rows.push(row.clone());
            }
        }
        if dates.is_empty() {
            return Err(MeasureError::Alignment("returns and measures share no dates".into()));
        }
        Ok((ReturnSeries { dates: dates.clone(), values: r }, RealizedPanel { dates, labels: self.labels.clone(), values: rows }))
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["date".to_string()];
        header.extend(self.labels.iter().cloned());
        w.write_record(&header)?;
        for (d, row) in self.dates.iter().zip(&self.values) {
            let mut rec = vec![d.to_string()];
            rec.extend(row.iter().map(|v| format!("{v:.17e}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(src: R) -> Result<Self, MeasureError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(src);
        let header = rdr.headers().map_err(|e| MeasureError::Config(e.to_string()))?.clone();
        if header.get(0) != Some("date") || header.len() < 2 {
            return Err(MeasureError::Config("panel header must be `date,<measure>...`".into()));
        }
        let labels: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut dates = Vec::new();
        let mut values = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| MeasureError::Config(format!("line {line}: {e}")))?;
            if rec.len() != labels.len() + 1 {
                return Err(MeasureError::Config(format!("line {line}: expected {} fields", labels.len() + 1)));
            }
            dates.push(rec[0].parse::<DateKey>().map_err(|e| MeasureError::Config(format!("line {line}: {e}")))?);
            let row = rec
                .iter()
                .skip(1)
                .map(|s| s.parse::<f64>().map_err(|e| MeasureError::Config(format!("line {line}: {e}"))))
                .collect::<Result<Vec<_>, _>>()?;
            values.push(row);
        }
        Self::new(dates, labels, values)
    }
}

struct DayMeasures {
    date: DateKey,
    values: BTreeMap<MeasureKind, Result<f64, String>>,
    note: Option<String>,
}

fn needs_base(kind: MeasureKind) -> Option<MeasureKind> {
    match kind {
        MeasureKind::RvScaled => Some(MeasureKind::Rv),
        MeasureKind::RrScaled => Some(MeasureKind::Rr),
        _ => None,
    }
}

fn compute_day(day: &IntradayDay, interval: u32, spec: &PanelSpec, kinds: &BTreeSet<MeasureKind>) -> DayMeasures {
    let bars = &day.bars;
    let mut values = BTreeMap::new();
    let mut note = None;
    let step = (spec.coarse_minutes / interval.max(1)) as usize;
    for &kind in kinds {
        let v = match kind {
            MeasureKind::Rv | MeasureKind::Rr => {
                if interval == 0 || !spec.coarse_minutes.is_multiple_of(interval) || step == 0 {
                    Err(MeasureError::Config(format!("coarse interval {} is not a multiple of {interval}", spec.coarse_minutes)))
                } else {
                    let coarse = coarse_bars(bars, step, 0);
                    if coarse.is_empty() {
                        Err(MeasureError::InsufficientData("no complete coarse interval".into()))
                    } else if kind == MeasureKind::Rv {
                        realized_variance(&price_grid(&coarse))
                    } else {
                        realized_range(&coarse.iter().map(|b| (b.high, b.low)).collect::<Vec<_>>())
                    }
                }
            }
            MeasureKind::RvSs => subsampled_measure(BaseMeasure::Rv, bars, interval, spec.coarse_minutes),
            MeasureKind::RrSs => subsampled_measure(BaseMeasure::Rr, bars, interval, spec.coarse_minutes),
            MeasureKind::Rk => realized_kernel(&price_grid(bars), interval, &spec.kernel).map(|k| {
                note = k.note;
                k.value
            }),
            MeasureKind::RvScaled | MeasureKind::RrScaled => continue,
        };
        values.insert(kind, v.map_err(|e| e.to_string()));
    }
    DayMeasures { date: DateKey::Date(day.date), values, note }
}

/// Computes the requested measures for every intraday day and aligns them
/// into a panel. Columns found in `precomputed` (matched by measure name)
/// are taken from the file verbatim. Days lacking any requested measure
/// are dropped and listed in the report.
pub fn build_measure_panel(
    series: &IntradaySeries,
    daily: &DailySeries,
    spec: &PanelSpec,
    precomputed: Option<&PrecomputedMeasures>,
) -> Result<(RealizedPanel, PanelReport), MeasureError> {
    if spec.measures.is_empty() {
        return Err(MeasureError::Config("no measures requested".into()));
    }
    let mut seen = BTreeSet::new();
    if let Some(k) = spec.measures.iter().find(|k| !seen.insert(**k)) {
        return Err(MeasureError::Config(format!("measure {k} requested twice")));
    }
    let from_file = |k: MeasureKind| precomputed.and_then(|p| p.get(k.name()));

    let mut computed_kinds = BTreeSet::new();
    for &k in &spec.measures {
        if from_file(k).is_none() {
            computed_kinds.insert(needs_base(k).unwrap_or(k));
        }
    }

    let days: Vec<DayMeasures> = if computed_kinds.is_empty() {
        Vec::new()
    } else {
        series.days.par_iter().map(|d| compute_day(d, series.interval_minutes, spec, &computed_kinds)).collect()
    };

    let mut report = PanelReport::default();
    for d in &days {
        if let Some(n) = &d.note {
            report.notes.push((d.date, n.clone()));
        }
    }

    // Daily close-to-close squares, daily range squares and overnight gaps.
    let daily_index: HashMap<&DateKey, usize> = daily.bars.iter().enumerate().map(|(i, b)| (&b.date, i)).collect();
    let daily_ret: HashMap<DateKey, f64> = if daily.len() >= 2 {
        let r = daily_log_returns(daily).map_err(|e| MeasureError::Domain(e.to_string()))?;
        r.dates.into_iter().zip(r.values).collect()
    } else {
        HashMap::new()
    };
    let overnight = |date: &DateKey| -> Option<f64> {
        let &i = daily_index.get(date)?;
        if i == 0 {
            return None;
        }
        let g = daily.bars[i].open.ln() - daily.bars[i - 1].close.ln();
        Some(g * g)
    };

    let mut columns: Vec<BTreeMap<DateKey, Result<f64, String>>> = Vec::with_capacity(spec.measures.len());
    for &kind in &spec.measures {
        let mut col = BTreeMap::new();
        if let Some(file) = from_file(kind) {
            for (d, v) in file {
                col.insert(*d, Ok(*v));
            }
        } else if let Some(base) = needs_base(kind) {
            let q = spec.scaling_window;
            let mut daily_hist = Vec::new();
            let mut intra_hist = Vec::new();
            for d in &days {
                let base_v = d.values.get(&base).cloned().unwrap_or_else(|| Err("missing".into()));
                let daily_sq = match base {
                    MeasureKind::Rv => daily_ret.get(&d.date).map(|r| r * r),
                    _ => daily_index.get(&d.date).map(|&i| {
                        let b = &daily.bars[i];
                        (b.high.ln() - b.low.ln()).powi(2) / (4.0 * LN_2)
                    }),
                };
                let v = match (&base_v, daily_sq) {
                    (Ok(cur), Some(_)) if daily_hist.len() >= q => {
                        scaled_measure(*cur, &daily_hist, &intra_hist, q).map_err(|e| e.to_string())
                    }
                    (Ok(_), Some(_)) => Err(format!("insufficient scaling history ({} of {q} days)", daily_hist.len())),
                    (Err(e), _) => Err(e.clone()),
                    (Ok(_), None) => Err("no daily bar for scaling".into()),
                };
                if let (Ok(cur), Some(sq)) = (&base_v, daily_sq) {
                    daily_hist.push(sq);
                    intra_hist.push(*cur);
                }
                col.insert(d.date, v);
            }
        } else {
            for d in &days {
                let mut v = d.values.get(&kind).cloned().unwrap_or_else(|| Err("missing".into()));
                if spec.include_overnight {
                    v = v.and_then(|x| match overnight(&d.date) {
                        Some(g) => Ok(x + g),
                        None => Err("no previous daily close for overnight gap".into()),
                    });
                }
                col.insert(d.date, v);
            }
        }
        columns.push(col);
    }

    let all_dates: BTreeSet<DateKey> = columns.iter().flat_map(|c| c.keys().cloned()).collect();
    let mut dates = Vec::new();
    let mut rows = Vec::new();
    'day: for date in all_dates {
        let mut row = Vec::with_capacity(columns.len());
        for (col, kind) in columns.iter().zip(&spec.measures) {
            match col.get(&date) {
                Some(Ok(v)) if *v > 0.0 && v.is_finite() => row.push(*v),
                Some(Ok(v)) => {
                    report.dropped.push((date, format!("{kind}: non-positive value {v}")));
                    continue 'day;
                }
                Some(Err(e)) => {
                    report.dropped.push((date, format!("{kind}: {e}")));
                    continue 'day;
                }
                None => {
                    report.dropped.push((date, format!("{kind}: missing")));
                    continue 'day;
                }
            }
        }
        dates.push(date);
        rows.push(row);
    }
    if dates.is_empty() {
        return Err(MeasureError::Alignment("no day has every requested measure".into()));
    }
    let labels = spec.measures.iter().map(|k| k.label()).collect();
    Ok((RealizedPanel { dates, labels, values: rows }, report))
}
