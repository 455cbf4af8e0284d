//! Clustering quality against ground truth: accuracy under the best label
//! matching, NMI, ARI, pairwise F1 and completeness.
//!
//! Entropies use natural logarithms with `0·log 0 = 0`. Partitions that are
//! identical up to relabeling score exactly 1 on every measure.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    /// `counts[i][j] = |truth class i ∩ predicted cluster j|`
    pub counts: Vec<Vec<u64>>,
    pub row_sums: Vec<u64>,
    pub col_sums: Vec<u64>,
    pub n: u64,
}

fn compact(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut ids = BTreeMap::new();
    for &l in labels {
        let next = ids.len();
        ids.entry(l).or_insert(next);
    }
    // renumber in ascending label order so the table layout is canonical
    for (rank, v) in ids.values_mut().enumerate() {
        *v = rank;
    }
    (labels.iter().map(|l| ids[l]).collect(), ids.len())
}

impl ContingencyTable {
    pub fn new(truth: &[usize], pred: &[usize]) -> Result<Self> {
        if truth.len() != pred.len() {
            return Err(Error::LabelCount {
                got: pred.len(),
                expected: truth.len(),
            });
        }
        if truth.is_empty() {
            return Err(Error::InvalidArgument("cannot score an empty partition".into()));
        }
        let (t, kt) = compact(truth);
        let (p, kp) = compact(pred);
        let mut counts = vec![vec![0u64; kp]; kt];
        for (&i, &j) in t.iter().zip(&p) {
            counts[i][j] += 1;
        }
        let row_sums = counts.iter().map(|r| r.iter().sum()).collect();
        let col_sums = (0..kp).map(|j| counts.iter().map(|r| r[j]).sum()).collect();
        Ok(Self {
            counts,
            row_sums,
            col_sums,
            n: truth.len() as u64,
        })
    }

    /// True when both partitions agree up to a relabeling.
    pub fn is_bijective(&self) -> bool {
        self.row_sums.len() == self.col_sums.len()
            && self.counts.iter().all(|r| r.iter().filter(|&&c| c > 0).count() == 1)
    }

    fn entropy(sums: &[u64], n: u64) -> f64 {
        let n = n as f64;
        -sums
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n;
                p * p.ln()
            })
            .sum::<f64>()
    }

    fn mutual_information(&self) -> f64 {
        let n = self.n as f64;
        let mut mi = 0.0;
        for (i, row) in self.counts.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                if c > 0 {
                    let c = c as f64;
                    mi += c / n * (c * n / (self.row_sums[i] as f64 * self.col_sums[j] as f64)).ln();
                }
            }
        }
        mi
    }
}

fn pairs(c: u64) -> f64 {
    (c as f64) * (c as f64 - 1.0) / 2.0
}

/// Minimum-cost perfect matching on a square cost matrix (Kuhn–Munkres with
/// potentials). Returns `assignment[row] = column`.
pub fn hungarian(cost: &[Vec<i64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    // 1-based potentials; column 0 is a virtual start
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut j0 = 0;
        let mut min_v = vec![i64::MAX; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = i64::MAX;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < min_v[j] {
                        min_v[j] = cur;
                        way[j] = j0;
                    }
                    if min_v[j] < delta {
                        delta = min_v[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_v[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[owner[j] - 1] = j - 1;
    }
    assignment
}

/// Fraction of nodes whose predicted cluster maps to their class under the
/// best one-to-one matching of clusters to classes.
pub fn accuracy(truth: &[usize], pred: &[usize]) -> Result<f64> {
    let t = ContingencyTable::new(truth, pred)?;
    let size = t.row_sums.len().max(t.col_sums.len());
    let at = |i: usize, j: usize| t.counts.get(i).and_then(|r| r.get(j)).copied().unwrap_or(0) as i64;
    let cost: Vec<Vec<i64>> = (0..size).map(|i| (0..size).map(|j| -at(i, j)).collect()).collect();
    let matched: i64 = hungarian(&cost).iter().enumerate().map(|(i, &j)| at(i, j)).sum();
    Ok(matched as f64 / t.n as f64)
}

/// Normalized mutual information with geometric-mean normalization.
pub fn nmi(truth: &[usize], pred: &[usize]) -> Result<f64> {
    let t = ContingencyTable::new(truth, pred)?;
    if t.is_bijective() {
        return Ok(1.0);
    }
    let ht = ContingencyTable::entropy(&t.row_sums, t.n);
    let hp = ContingencyTable::entropy(&t.col_sums, t.n);
    if ht == 0.0 || hp == 0.0 {
        return Ok(0.0);
    }
    Ok((t.mutual_information() / (ht * hp).sqrt()).clamp(0.0, 1.0))
}

/// Adjusted Rand index.
pub fn ari(truth: &[usize], pred: &[usize]) -> Result<f64> {
    let t = ContingencyTable::new(truth, pred)?;
    if t.is_bijective() {
        return Ok(1.0);
    }
    // (index − a·b/N) / ((a+b)/2 − a·b/N) scaled by 2N so only one division
    // rounds; the pair counts stay exact integers
    let int_pairs = |c: u64| (c as i128) * (c as i128 - 1) / 2;
    let index: i128 = t.counts.iter().flatten().map(|&c| int_pairs(c)).sum();
    let a: i128 = t.row_sums.iter().map(|&c| int_pairs(c)).sum();
    let b: i128 = t.col_sums.iter().map(|&c| int_pairs(c)).sum();
    let total = int_pairs(t.n);
    let num = 2 * index * total - 2 * a * b;
    let den = (a + b) * total - 2 * a * b;
    if den == 0 {
        return Ok(0.0);
    }
    Ok(num as f64 / den as f64)
}

/// Harmonic mean of pairwise precision and recall over same-cluster pairs.
pub fn pairwise_f1(truth: &[usize], pred: &[usize]) -> Result<f64> {
    let t = ContingencyTable::new(truth, pred)?;
    if t.is_bijective() {
        return Ok(1.0);
    }
    let tp: f64 = t.counts.iter().flatten().map(|&c| pairs(c)).sum();
    let a: f64 = t.row_sums.iter().map(|&c| pairs(c)).sum();
    let b: f64 = t.col_sums.iter().map(|&c| pairs(c)).sum();
    Ok(2.0 * tp / (a + b))
}

/// `1 − H(truth | pred) / H(truth)`; a constant ground truth scores 1.
pub fn completeness(truth: &[usize], pred: &[usize]) -> Result<f64> {
    let t = ContingencyTable::new(truth, pred)?;
    if t.is_bijective() {
        return Ok(1.0);
    }
    let ht = ContingencyTable::entropy(&t.row_sums, t.n);
    if ht == 0.0 {
        return Ok(1.0);
    }
    let n = t.n as f64;
    let mut conditional = 0.0;
    for row in &t.counts {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                conditional -= c as f64 / n * (c as f64 / t.col_sums[j] as f64).ln();
            }
        }
    }
    Ok(1.0 - conditional / ht)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClusterMetrics {
    pub acc: f64,
    pub nmi: f64,
    pub f1: f64,
    pub ari: f64,
    pub cs: f64,
}

impl ClusterMetrics {
    pub fn evaluate(truth: &[usize], pred: &[usize]) -> Result<Self> {
        Ok(Self {
            acc: accuracy(truth, pred)?,
            nmi: nmi(truth, pred)?,
            f1: pairwise_f1(truth, pred)?,
            ari: ari(truth, pred)?,
            cs: completeness(truth, pred)?,
        })
    }

    /// Scores only the nodes with a known label.
    pub fn evaluate_partial(labels: &[Option<usize>], pred: &[usize]) -> Result<Self> {
        if labels.len() != pred.len() {
            return Err(Error::LabelCount {
                got: pred.len(),
                expected: labels.len(),
            });
        }
        let (truth, pred): (Vec<usize>, Vec<usize>) = labels
            .iter()
            .zip(pred)
            .filter_map(|(l, &p)| l.map(|l| (l, p)))
            .unzip();
        Self::evaluate(&truth, &pred)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain numbers serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const T: [usize; 4] = [0, 0, 1, 1];

    #[test]
    fn worked_examples() {
        assert_eq!(accuracy(&T, &T).unwrap(), 1.0);
        assert_eq!(accuracy(&T, &[1, 1, 0, 0]).unwrap(), 1.0);
        assert_eq!(accuracy(&T, &[0, 1, 0, 1]).unwrap(), 0.5);

        assert_eq!(nmi(&T, &T).unwrap(), 1.0);
        assert_eq!(nmi(&T, &[3, 3, 3, 3]).unwrap(), 0.0);
        assert!(nmi(&T, &[0, 1, 0, 1]).unwrap().abs() < 1e-15);

        assert_eq!(ari(&T, &T).unwrap(), 1.0);
        assert_eq!(ari(&T, &[0, 1, 0, 1]).unwrap(), -0.5);
        assert_eq!(ari(&T, &[0, 0, 0, 0]).unwrap(), 0.0);

        assert_eq!(pairwise_f1(&T, &T).unwrap(), 1.0);
        assert_eq!(pairwise_f1(&T, &[0, 1, 0, 1]).unwrap(), 0.0);
        assert_eq!(pairwise_f1(&[0, 0, 0], &[0, 0, 1]).unwrap(), 0.5);

        assert_eq!(completeness(&T, &T).unwrap(), 1.0);
        // a single predicted cluster leaves all truth entropy unexplained
        assert_eq!(completeness(&T, &[5, 5, 5, 5]).unwrap(), 0.0);
        assert_eq!(completeness(&[2, 2, 2, 2], &[0, 1, 0, 1]).unwrap(), 1.0);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(accuracy(&[0, 1], &[0]).is_err());
        assert!(ClusterMetrics::evaluate(&[], &[]).is_err());
    }

    #[test]
    fn hungarian_small_cases() {
        let cost = vec![vec![4, 1, 3], vec![2, 0, 5], vec![3, 2, 2]];
        let a = hungarian(&cost);
        let total: i64 = a.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
        assert_eq!(total, 5);
        assert_eq!(hungarian(&[vec![7]]), vec![0]);
    }

    #[test]
    fn unequal_cluster_counts() {
        // three predicted clusters against two classes
        let acc = accuracy(&[0, 0, 0, 1, 1, 1], &[0, 0, 1, 2, 2, 2]).unwrap();
        assert!((acc - 5.0 / 6.0).abs() < 1e-15);
        let acc = accuracy(&[0, 1, 2, 3], &[0, 0, 0, 0]).unwrap();
        assert_eq!(acc, 0.25);
    }

    #[test]
    fn partial_labels_skip_unknown() {
        let labels = [Some(0), None, Some(1), Some(1)];
        let m = ClusterMetrics::evaluate_partial(&labels, &[4, 0, 2, 2]).unwrap();
        assert_eq!(m.acc, 1.0);
        let json = m.to_json();
        for key in ["acc", "nmi", "f1", "ari", "cs"] {
            assert!(json.contains(&format!("\"{key}\"")));
        }
    }
}
