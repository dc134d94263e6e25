//! Model Confidence Set over a days × models loss matrix.

use crate::bootstrap::circular_block_indices;
use crate::seed::seed_for;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

const TIE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum McsError {
    #[error("need at least 2 models, got {0}")]
    TooFewModels(usize),
    #[error("row {0} has {1} cells, expected {2}")]
    Ragged(usize, usize, usize),
    #[error("non-finite loss at day {day}, model {model}")]
    NonFinite { day: usize, model: String },
    #[error("duplicate model id `{0}`")]
    DuplicateId(String),
    #[error("configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum McsMethod {
    /// Largest absolute pairwise t-statistic.
    R,
    /// Sum of squared pairwise t-statistics.
    SQ,
}

impl fmt::Display for McsMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            McsMethod::R => "R",
            McsMethod::SQ => "SQ",
        })
    }
}

impl FromStr for McsMethod {
    type Err = McsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "R" => Ok(McsMethod::R),
            "SQ" => Ok(McsMethod::SQ),
            _ => Err(McsError::Config(format!("unknown MCS method `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossMatrix {
    pub ids: Vec<String>,
    /// `losses[t][i]`.
    pub losses: Vec<Vec<f64>>,
}

impl LossMatrix {
    pub fn new(ids: Vec<String>, losses: Vec<Vec<f64>>) -> Result<Self, McsError> {
        if ids.len() < 2 {
            return Err(McsError::TooFewModels(ids.len()));
        }
        let mut sorted = ids.clone();
        sorted.sort();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(McsError::DuplicateId(w[0].clone()));
        }
        for (t, row) in losses.iter().enumerate() {
            if row.len() != ids.len() {
                return Err(McsError::Ragged(t, row.len(), ids.len()));
            }
            if let Some(i) = row.iter().position(|v| !v.is_finite()) {
                return Err(McsError::NonFinite { day: t, model: ids[i].clone() });
            }
        }
        if losses.is_empty() {
            return Err(McsError::Config("no days".into()));
        }
        Ok(Self { ids, losses })
    }

    pub fn n_days(&self) -> usize {
        self.losses.len()
    }

    pub fn n_models(&self) -> usize {
        self.ids.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McsConfig {
    pub replicates: usize,
    pub block_length: usize,
    pub seed: u64,
}

impl Default for McsConfig {
    fn default() -> Self {
        Self { replicates: 1000, block_length: 20, seed: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McsResult {
    pub method: McsMethod,
    pub level: f64,
    /// Models with MCS p-value at least `1 - level`, in input order.
    pub survivors: Vec<String>,
    /// All models, in elimination order; the last one is never eliminated.
    pub elimination_order: Vec<String>,
    /// MCS p-values aligned with `elimination_order`.
    pub p_values: Vec<f64>,
}

impl McsResult {
    pub fn p_value(&self, id: &str) -> Option<f64> {
        self.elimination_order.iter().position(|m| m == id).map(|i| self.p_values[i])
    }

    /// Survivors at another confidence level, from the same p-values.
    pub fn survivors_at(&self, level: f64, ids: &[String]) -> Vec<String> {
        ids.iter().filter(|id| self.p_value(id).is_some_and(|p| p >= 1.0 - level)).cloned().collect()
    }
}

/// Pairwise t-statistic; a zero-variance pair is 0 when the means agree
/// and infinite otherwise.
fn t_stat(diff: f64, var: f64) -> f64 {
    if var > 0.0 {
        diff / var.sqrt()
    } else if diff.abs() <= TIE {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    }
}

/// Runs the elimination to the end and reports survivors at `level`.
pub fn mcs(losses: &LossMatrix, method: McsMethod, level: f64, cfg: &McsConfig) -> Result<McsResult, McsError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(McsError::Config(format!("level {level} outside (0, 1)")));
    }
    if cfg.replicates < 2 || cfg.block_length == 0 {
        return Err(McsError::Config("replicates >= 2 and block_length >= 1 are required".into()));
    }
    let n = losses.n_days();
    let m = losses.n_models();
    if n < 100 {
        log::warn!("MCS with only {n} days");
    }
    let mean: Vec<f64> = (0..m).map(|i| losses.losses.iter().map(|r| r[i]).sum::<f64>() / n as f64).collect();
    // centred bootstrap means: boot[b][i] = mean*_i - mean_i
    let boot: Vec<Vec<f64>> = (0..cfg.replicates as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed_for(cfg.seed, "mcs", b));
            let idx = circular_block_indices(n, cfg.block_length, &mut rng);
            let mut s = vec![0.0; m];
            for &t in &idx {
                for (acc, v) in s.iter_mut().zip(&losses.losses[t]) {
                    *acc += v;
                }
            }
            s.iter().zip(&mean).map(|(a, mu)| a / n as f64 - mu).collect()
        })
        .collect();
    let nb = boot.len() as f64;
    let pair_var = |i: usize, j: usize| boot.iter().map(|z| (z[i] - z[j]).powi(2)).sum::<f64>() / nb;
    let var: Vec<Vec<f64>> = (0..m).map(|i| (0..m).map(|j| pair_var(i, j)).collect()).collect();
    let t: Vec<Vec<f64>> = (0..m).map(|i| (0..m).map(|j| t_stat(mean[i] - mean[j], var[i][j])).collect()).collect();

    let mut alive: Vec<usize> = (0..m).collect();
    let mut order = Vec::with_capacity(m);
    let mut p_values = Vec::with_capacity(m);
    let mut running = 0.0f64;
    while alive.len() > 1 {
        let pairs: Vec<(usize, usize)> = alive.iter().enumerate().flat_map(|(a, &i)| alive[a + 1..].iter().map(move |&j| (i, j))).collect();
        let stat = match method {
            McsMethod::R => pairs.iter().map(|&(i, j)| t[i][j].abs()).fold(0.0, f64::max),
            McsMethod::SQ => pairs.iter().map(|&(i, j)| t[i][j].powi(2)).sum(),
        };
        let p = if stat <= TIE {
            1.0
        } else {
            let exceed = boot
                .iter()
                .filter(|z| {
                    let centred = |i: usize, j: usize| {
                        let v = var[i][j];
                        if v > 0.0 {
                            (z[i] - z[j]) / v.sqrt()
                        } else {
                            0.0
                        }
                    };
                    let s = match method {
                        McsMethod::R => pairs.iter().map(|&(i, j)| centred(i, j).abs()).fold(0.0, f64::max),
                        McsMethod::SQ => pairs.iter().map(|&(i, j)| centred(i, j).powi(2)).sum(),
                    };
                    s >= stat
                })
                .count();
            exceed as f64 / nb
        };
        running = running.max(p);
        // worst model: largest max_j t_ij, ties broken by id
        let score = |i: usize| alive.iter().filter(|&&j| j != i).map(|&j| t[i][j]).fold(f64::NEG_INFINITY, f64::max);
        let top = alive.iter().map(|&i| score(i)).fold(f64::NEG_INFINITY, f64::max);
        let worst = *alive
            .iter()
            .filter(|&&i| {
                let s = score(i);
                s == top || (s - top).abs() <= TIE
            })
            .min_by(|&&a, &&b| losses.ids[a].cmp(&losses.ids[b]))
            .expect("at least one candidate");
        order.push(losses.ids[worst].clone());
        p_values.push(running);
        alive.retain(|&i| i != worst);
    }
    order.push(losses.ids[alive[0]].clone());
    p_values.push(1.0);

    let mut res = McsResult { method, level, survivors: Vec::new(), elimination_order: order, p_values };
    res.survivors = res.survivors_at(level, &losses.ids);
    Ok(res)
}
