use crate::commands::{load_forecasts, McsEntry};
use crate::config::RunConfig;
use crate::output::Outputs;
use crate::ReportArgs;
use anyhow::{Context, Result};
use regarch::backtest::{al_log_score, fz_joint_loss, hits, quantile_loss, vrate, BacktestReport, TestResult, TestStatus};
use regarch::forecast::ForecastRecord;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub model: String,
    pub alpha: f64,
    pub n: usize,
    pub hits: usize,
    pub vrate: f64,
    pub quantile_loss: f64,
    pub fz_loss: f64,
    pub al_score: f64,
    /// Test name to `reject` / `accept` / `n/a`.
    pub tests: Vec<(String, String)>,
    /// `MCS_<method>_<level>` to `in` / `out`.
    pub mcs: Vec<(String, String)>,
}

fn verdict(t: &TestResult) -> String {
    match t.status {
        TestStatus::Ok if t.reject => "reject".into(),
        TestStatus::Ok => "accept".into(),
        TestStatus::Degenerate => "degenerate".into(),
        TestStatus::Unavailable => "n/a".into(),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(p: &Path) -> Result<T> {
    let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
}

pub fn build_rows(records: &[ForecastRecord], backtests: &[BacktestReport], mcs: &[McsEntry]) -> Result<Vec<Row>> {
    let mut keys: Vec<(String, f64)> = Vec::new();
    for r in records {
        if !keys.iter().any(|(m, a)| *m == r.model && *a == r.alpha) {
            keys.push((r.model.clone(), r.alpha));
        }
    }
    let mut rows = Vec::new();
    for (model, alpha) in keys {
        let mine: Vec<&ForecastRecord> = records.iter().filter(|r| r.model == model && r.alpha == alpha).collect();
        let ret: Vec<f64> = mine.iter().map(|r| r.ret).collect();
        let var: Vec<f64> = mine.iter().map(|r| r.var).collect();
        let es: Vec<f64> = mine.iter().map(|r| r.es).collect();
        let h = hits(&ret, &var)?;
        let mut tests = Vec::new();
        if let Some(b) = backtests.iter().find(|b| b.model == model && b.alpha == alpha) {
            tests.push(("UC".into(), verdict(&b.uc)));
            tests.push(("CC".into(), verdict(&b.cc)));
            tests.push(("DQ".into(), verdict(&b.dq)));
            tests.push(("ESR".into(), b.esr.as_ref().map_or("n/a".into(), |e| verdict(&e.test))));
            for (name, pick) in [("MQR_J1", 0), ("MQR_J2", 1), ("MQR_I", 2), ("MQR_S", 3)] {
                let v = b.mqr.as_ref().map_or("n/a".into(), |m| verdict([&m.j1, &m.j2, &m.i, &m.s][pick]));
                tests.push((name.into(), v));
            }
        }
        let mut member = Vec::new();
        for e in mcs.iter().filter(|e| e.alpha == alpha && e.models.contains(&model)) {
            for (level, survivors) in &e.survivors {
                let tag = if survivors.contains(&model) { "in" } else { "out" };
                member.push((format!("MCS_{}_{}", e.method, level), tag.to_string()));
            }
        }
        rows.push(Row {
            n: ret.len(),
            hits: h.iter().filter(|&&x| x).count(),
            vrate: vrate(&h)?,
            quantile_loss: quantile_loss(&ret, &var, alpha)?,
            fz_loss: fz_joint_loss(&ret, &var, &es, alpha)?,
            al_score: al_log_score(&ret, &var, &es, alpha)?,
            model,
            alpha,
            tests,
            mcs: member,
        });
    }
    Ok(rows)
}

fn columns(rows: &[Row]) -> (Vec<String>, Vec<String>) {
    let mut t: Vec<String> = Vec::new();
    let mut m: Vec<String> = Vec::new();
    for r in rows {
        for (k, _) in &r.tests {
            if !t.contains(k) {
                t.push(k.clone());
            }
        }
        for (k, _) in &r.mcs {
            if !m.contains(k) {
                m.push(k.clone());
            }
        }
    }
    (t, m)
}

fn lookup<'a>(pairs: &'a [(String, String)], key: &str) -> &'a str {
    pairs.iter().find(|(k, _)| k == key).map_or("", |(_, v)| v.as_str())
}

pub fn render_csv(rows: &[Row]) -> String {
    let (tcols, mcols) = columns(rows);
    let mut s = String::from("model,alpha,n,hits,vrate,quantile_loss,fz_loss,al_score");
    for c in tcols.iter().chain(&mcols) {
        s.push(',');
        s.push_str(c);
    }
    s.push('\n');
    for r in rows {
        let _ = write!(
            s,
            "{},{},{},{},{:.17e},{:.17e},{:.17e},{:.17e}",
            r.model, r.alpha, r.n, r.hits, r.vrate, r.quantile_loss, r.fz_loss, r.al_score
        );
        for c in &tcols {
            let _ = write!(s, ",{}", lookup(&r.tests, c));
        }
        for c in &mcols {
            let _ = write!(s, ",{}", lookup(&r.mcs, c));
        }
        s.push('\n');
    }
    s
}

pub fn render_markdown(rows: &[Row]) -> String {
    let (tcols, mcols) = columns(rows);
    let mut s = String::new();
    let mut alphas: Vec<f64> = Vec::new();
    for r in rows {
        if !alphas.contains(&r.alpha) {
            alphas.push(r.alpha);
        }
    }
    for a in alphas {
        let _ = writeln!(s, "## alpha = {a}\n");
        let mut head = vec!["model", "n", "VRate", "QL", "FZ", "AL"];
        head.extend(tcols.iter().map(String::as_str));
        head.extend(mcols.iter().map(String::as_str));
        let _ = writeln!(s, "| {} |", head.join(" | "));
        let _ = writeln!(s, "|{}", "---|".repeat(head.len()));
        for r in rows.iter().filter(|r| r.alpha == a) {
            let mut cells = vec![
                r.model.clone(),
                r.n.to_string(),
                format!("{:.4}", r.vrate),
                format!("{:.4}", r.quantile_loss),
                format!("{:.4}", r.fz_loss),
                format!("{:.4}", r.al_score),
            ];
            cells.extend(tcols.iter().map(|c| lookup(&r.tests, c).to_string()));
            cells.extend(mcols.iter().map(|c| lookup(&r.mcs, c).to_string()));
            let _ = writeln!(s, "| {} |", cells.join(" | "));
        }
        s.push('\n');
    }
    s
}

pub fn report(a: ReportArgs, mut cfg: RunConfig, out: &mut Outputs) -> Result<()> {
    let records = load_forecasts(&a.forecasts, &mut cfg)?;
    let backtests: Vec<BacktestReport> = a.backtest.as_deref().map(read_json).transpose()?.unwrap_or_default();
    let mcs: Vec<McsEntry> = a.mcs.as_deref().map(read_json).transpose()?.unwrap_or_default();
    let rows = build_rows(&records, &backtests, &mcs)?;
    out.write_text("report.csv", &render_csv(&rows))?;
    out.write_text("report.md", &format!("# VaR/ES forecast evaluation\n\n{}", render_markdown(&rows)))?;
    Ok(())
}
