//! External clustering metrics: accuracy under the best label matching,
//! normalized mutual information and purity.

use std::collections::BTreeMap;

use pathfinding::prelude::{kuhn_munkres, Matrix};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SglError};

/// Co-occurrence counts of true classes (rows) and predicted clusters
/// (columns). Labels are compacted to `0..k` in increasing order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    counts: Vec<Vec<u64>>,
    n: u64,
}

impl ContingencyTable {
    pub fn new(true_labels: &[usize], pred_labels: &[usize]) -> Result<Self> {
        if true_labels.len() != pred_labels.len() {
            return Err(SglError::Data(format!(
                "label length mismatch: {} true, {} predicted",
                true_labels.len(),
                pred_labels.len()
            )));
        }
        if true_labels.is_empty() {
            return Err(SglError::Data("empty labeling".into()));
        }
        let t = compact(true_labels);
        let p = compact(pred_labels);
        let kt = t.iter().max().map_or(0, |v| v + 1);
        let kp = p.iter().max().map_or(0, |v| v + 1);
        let mut counts = vec![vec![0u64; kp]; kt];
        for (&a, &b) in t.iter().zip(&p) {
            counts[a][b] += 1;
        }
        Ok(Self {
            counts,
            n: true_labels.len() as u64,
        })
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn n_true(&self) -> usize {
        self.counts.len()
    }

    pub fn n_pred(&self) -> usize {
        self.counts.first().map_or(0, Vec::len)
    }

    fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    fn col_sums(&self) -> Vec<u64> {
        (0..self.n_pred())
            .map(|j| self.counts.iter().map(|r| r[j]).sum())
            .collect()
    }
}

fn compact(labels: &[usize]) -> Vec<usize> {
    let mut ids = BTreeMap::new();
    for &l in labels {
        let next = ids.len();
        ids.entry(l).or_insert(next);
    }
    // reassign in sorted order so the table layout does not depend on first appearance
    for (i, v) in ids.values_mut().enumerate() {
        *v = i;
    }
    labels.iter().map(|l| ids[l]).collect()
}

/// Fraction of points correctly labeled under the best one-to-one matching of
/// predicted clusters to true classes.
pub fn accuracy(true_labels: &[usize], pred_labels: &[usize]) -> Result<f64> {
    let table = ContingencyTable::new(true_labels, pred_labels)?;
    let size = table.n_true().max(table.n_pred());
    let mut weights = Matrix::new(size, size, 0i64);
    for (i, row) in table.counts().iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            weights[(i, j)] = c as i64;
        }
    }
    let (matched, _) = kuhn_munkres(&weights);
    Ok(matched as f64 / table.n() as f64)
}

/// Mutual information over the geometric mean of the two entropies.
pub fn nmi(true_labels: &[usize], pred_labels: &[usize]) -> Result<f64> {
    let table = ContingencyTable::new(true_labels, pred_labels)?;
    let n = table.n() as f64;
    let rows = table.row_sums();
    let cols = table.col_sums();
    let h_t = entropy(&rows, n);
    let h_p = entropy(&cols, n);
    if h_t == 0.0 || h_p == 0.0 {
        return Ok(if h_t == 0.0 && h_p == 0.0 { 1.0 } else { 0.0 });
    }
    let mut mi = 0.0;
    for (i, row) in table.counts().iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                mi += c / n * (c * n / (rows[i] as f64 * cols[j] as f64)).ln();
            }
        }
    }
    Ok((mi / (h_t * h_p).sqrt()).clamp(0.0, 1.0))
}

fn entropy(sums: &[u64], n: f64) -> f64 {
    sums.iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Each predicted cluster counts its majority class.
pub fn purity(true_labels: &[usize], pred_labels: &[usize]) -> Result<f64> {
    let table = ContingencyTable::new(true_labels, pred_labels)?;
    let hits: u64 = (0..table.n_pred())
        .map(|j| table.counts().iter().map(|r| r[j]).max().unwrap_or(0))
        .sum();
    Ok(hits as f64 / table.n() as f64)
}

/// All three metrics at once.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub acc: f64,
    pub nmi: f64,
    pub purity: f64,
}

pub fn evaluate(true_labels: &[usize], pred_labels: &[usize]) -> Result<MetricSummary> {
    Ok(MetricSummary {
        acc: accuracy(true_labels, pred_labels)?,
        nmi: nmi(true_labels, pred_labels)?,
        purity: purity(true_labels, pred_labels)?,
    })
}
