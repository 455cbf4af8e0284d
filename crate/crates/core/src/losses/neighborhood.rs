use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use super::{gather, log_sum_exp, scatter, SampleSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodLoss {
    pub loss: f64,
    pub grad: Array2<f64>,
    /// Nodes skipped because their walk produced no positives.
    pub empty_positive_nodes: usize,
}

/// Neighborhood contrast summed over nodes:
/// `−log Σ_P e^{h_i·h_j} / (Σ_P e^{h_i·h_j} + Σ_N e^{h_i·h_k})`.
pub fn neighborhood_loss(h: ArrayView2<'_, f64>, samples: &SampleSet) -> Result<NeighborhoodLoss> {
    let n = h.nrows();
    if samples.positives.len() != n || samples.negatives.len() != n {
        return Err(Error::Shape(format!(
            "sample set covers {} nodes, embedding has {n} rows",
            samples.positives.len()
        )));
    }
    let per_node: Vec<(f64, Vec<(usize, f64)>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let pos = &samples.positives[i];
            if pos.is_empty() {
                return (f64::NAN, Vec::new());
            }
            let neg = &samples.negatives[i];
            let hi = h.row(i);
            let scores: Vec<f64> = pos.iter().chain(neg).map(|&j| hi.dot(&h.row(j))).collect();
            let lse_pos = log_sum_exp(&scores[..pos.len()]);
            let lse_all = log_sum_exp(&scores);
            let weights = pos
                .iter()
                .chain(neg)
                .zip(&scores)
                .enumerate()
                .map(|(t, (&j, &s))| {
                    let w = (s - lse_all).exp();
                    (j, if t < pos.len() { w - (s - lse_pos).exp() } else { w })
                })
                .collect();
            (lse_all - lse_pos, weights)
        })
        .collect();

    let mut loss = 0.0;
    let mut empty = 0;
    let mut lists = Vec::with_capacity(n);
    for (l, w) in per_node {
        if l.is_nan() {
            empty += 1;
        } else {
            loss += l;
        }
        lists.push(w);
    }
    let grad = gather(&lists, h) + scatter(&lists, h, n);
    Ok(NeighborhoodLoss {
        loss,
        grad,
        empty_positive_nodes: empty,
    })
}
