//! Held-out evaluation metrics.

use std::collections::BTreeMap;

use crate::data::TaskKind;
use crate::error::{Error, Result};

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::arg(format!("length mismatch: {a} targets, {b} predictions")));
    }
    if a == 0 {
        return Err(Error::arg("metrics need at least one sample"));
    }
    Ok(())
}

pub fn mse(y: &[f64], pred: &[f64]) -> Result<f64> {
    check_lengths(y.len(), pred.len())?;
    let total: f64 = y.iter().zip(pred).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(total / y.len() as f64)
}

/// Confusion counts at a probability threshold (`p >= threshold` is positive).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn at_threshold(y: &[f64], proba: &[f64], threshold: f64) -> Result<Self> {
        check_lengths(y.len(), proba.len())?;
        let mut c = Confusion::default();
        for (&t, &p) in y.iter().zip(proba) {
            let label = match t {
                v if v == 1.0 => true,
                v if v == 0.0 => false,
                v => return Err(Error::arg(format!("binary label must be 0 or 1, got {v}"))),
            };
            match (label, p >= threshold) {
                (true, true) => c.tp += 1,
                (true, false) => c.fn_ += 1,
                (false, true) => c.fp += 1,
                (false, false) => c.tn += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total() as f64
    }

    /// True when there are no positive predictions or no positive labels,
    /// in which case precision, recall and F1 are reported as 0.
    pub fn f1_degenerate(&self) -> bool {
        self.tp + self.fp == 0 || self.tp + self.fn_ == 0
    }

    pub fn precision(&self) -> f64 {
        if self.tp + self.fp == 0 {
            0.0
        } else {
            self.tp as f64 / (self.tp + self.fp) as f64
        }
    }

    pub fn recall(&self) -> f64 {
        if self.tp + self.fn_ == 0 {
            0.0
        } else {
            self.tp as f64 / (self.tp + self.fn_) as f64
        }
    }

    pub fn f1(&self) -> f64 {
        if self.f1_degenerate() {
            return 0.0;
        }
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

pub fn accuracy(y: &[f64], proba: &[f64], threshold: f64) -> Result<f64> {
    Ok(Confusion::at_threshold(y, proba, threshold)?.accuracy())
}

pub fn f1(y: &[f64], proba: &[f64], threshold: f64) -> Result<f64> {
    Ok(Confusion::at_threshold(y, proba, threshold)?.f1())
}

/// Area under the ROC curve as the Mann–Whitney statistic
/// `P(s⁺ > s⁻) + ½ P(s⁺ = s⁻)`, via midranks.
pub fn auc(y: &[f64], scores: &[f64]) -> Result<f64> {
    check_lengths(y.len(), scores.len())?;
    if let Some(v) = y.iter().find(|v| **v != 0.0 && **v != 1.0) {
        return Err(Error::Metric(format!("binary label must be 0 or 1, got {v}")));
    }
    if let Some(v) = scores.iter().find(|v| v.is_nan()) {
        return Err(Error::Metric(format!("score {v} is not comparable")));
    }
    let n_pos = y.iter().filter(|v| **v == 1.0).count();
    let n_neg = y.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Metric("AUC needs both classes present".into()));
    }

    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of positive midranks, doubled so every term stays an integer.
    let mut twice_rank_sum: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // Ranks start + 1 ..= end share the midrank (start + 1 + end) / 2.
        let twice_mid = (start + 1 + end) as u128;
        let pos_in_tie = order[start..end].iter().filter(|&&i| y[i] == 1.0).count() as u128;
        twice_rank_sum += twice_mid * pos_in_tie;
        start = end;
    }
    let np = n_pos as u128;
    // 2U = 2·R⁺ − n⁺(n⁺ + 1); AUC = U / (n⁺ n⁻).
    let twice_u = twice_rank_sum - np * (np + 1);
    Ok((twice_u as f64 / 2.0) / (n_pos as f64 * n_neg as f64))
}

/// Metrics for one evaluated split.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub task: TaskKind,
    pub n: usize,
    pub metrics: BTreeMap<String, f64>,
    /// Set when F1 fell back to its degenerate-case convention.
    pub f1_degenerate: bool,
}

impl EvalReport {
    pub fn regression(y: &[f64], pred: &[f64]) -> Result<Self> {
        let mut metrics = BTreeMap::new();
        metrics.insert("mse".to_string(), mse(y, pred)?);
        Ok(EvalReport {
            task: TaskKind::Regression,
            n: y.len(),
            metrics,
            f1_degenerate: false,
        })
    }

    /// Accuracy and F1 at threshold ½ plus AUC on the probabilities.
    pub fn classification(y: &[f64], proba: &[f64]) -> Result<Self> {
        let c = Confusion::at_threshold(y, proba, 0.5)?;
        let mut metrics = BTreeMap::new();
        metrics.insert("accuracy".to_string(), c.accuracy());
        metrics.insert("f1".to_string(), c.f1());
        metrics.insert("auc".to_string(), auc(y, proba)?);
        Ok(EvalReport {
            task: TaskKind::Classification,
            n: y.len(),
            metrics,
            f1_degenerate: c.f1_degenerate(),
        })
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }

    /// `key=value` lines, metrics in name order.
    pub fn to_text(&self) -> String {
        let mut out = format!("task={}\nn={}\n", self.task, self.n);
        for (k, v) in &self.metrics {
            out.push_str(&format!("{k}={v}\n"));
        }
        if self.f1_degenerate {
            out.push_str("f1_degenerate=true\n");
        }
        out
    }
}
