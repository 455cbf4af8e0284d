//! Contrastive objectives: cross-modality margin softmax, attribute-aware
//! neighborhood contrast and hard-positive community contrast.
//!
//! Every loss returns its value together with the analytic gradient with
//! respect to its embedding arguments. Callers L2-normalize rows first.

mod community;
mod mms;
mod neighborhood;
mod sampling;

pub use community::{community_loss, hard_positive_sets, CommunityLoss};
pub use mms::{cross_modality_loss, mms_loss, mms_negatives, PairLoss};
pub use neighborhood::{neighborhood_loss, NeighborhoodLoss};
pub use sampling::{cross_modal_similarity, prune_graph, sample_neighborhoods, PrunedGraph, SampleSet};

use ndarray::{Array2, ArrayView2, Axis, Zip};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContrastConfig {
    /// Margin subtracted from the positive score in the margin softmax.
    pub delta: f64,
    pub walk_length: usize,
    pub negatives_per_node: usize,
    /// Fraction of each cluster kept as hard positives.
    pub theta: f64,
    /// Upper bound on the negatives used per row by the margin softmax.
    pub mms_negatives: usize,
}

impl Default for ContrastConfig {
    fn default() -> Self {
        Self {
            delta: 0.1,
            walk_length: 10,
            negatives_per_node: 10,
            theta: 0.3,
            mms_negatives: 256,
        }
    }
}

impl ContrastConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidArgument(format!("delta must be >= 0, got {}", self.delta)));
        }
        if self.walk_length == 0 || self.negatives_per_node == 0 || self.mms_negatives == 0 {
            return Err(Error::InvalidArgument(
                "walk_length, negatives_per_node and mms_negatives must be positive".into(),
            ));
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::InvalidArgument(format!("theta must lie in (0, 1], got {}", self.theta)));
        }
        Ok(())
    }
}

/// Sparse per-row weight lists: `lists[r]` holds `(other_row, weight)`.
type WeightLists = [Vec<(usize, f64)>];

/// `out[r] = Σ_{(k, w) ∈ lists[r]} w · src[k]`
fn gather(lists: &WeightLists, src: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = Array2::zeros((lists.len(), src.ncols()));
    Zip::from(out.axis_iter_mut(Axis(0)))
        .and(ndarray::aview1(lists))
        .par_for_each(|mut row, list| {
            for &(k, w) in list {
                row.scaled_add(w, &src.row(k));
            }
        });
    out
}

/// `out[k] = Σ_r Σ_{(k, w) ∈ lists[r]} w · src[r]`, accumulated in ascending `r`.
fn scatter(lists: &WeightLists, src: ArrayView2<'_, f64>, n_out: usize) -> Array2<f64> {
    let mut counts = vec![0usize; n_out + 1];
    for list in lists {
        for &(k, _) in list {
            counts[k + 1] += 1;
        }
    }
    for i in 0..n_out {
        counts[i + 1] += counts[i];
    }
    let mut fill = counts.clone();
    let mut entries = vec![(0usize, 0.0f64); counts[n_out]];
    for (r, list) in lists.iter().enumerate() {
        for &(k, w) in list {
            entries[fill[k]] = (r, w);
            fill[k] += 1;
        }
    }
    let mut out = Array2::zeros((n_out, src.ncols()));
    Zip::indexed(out.axis_iter_mut(Axis(0))).par_for_each(|k, mut row| {
        for &(r, w) in &entries[counts[k]..counts[k + 1]] {
            row.scaled_add(w, &src.row(r));
        }
    });
    out
}

/// `log Σ exp(v)` over a nonempty slice.
fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn check_same_shape(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!(
            "embedding shapes differ: {:?} vs {:?}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod testutil {
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub fn random(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
    }

    /// Max over entries of `|a − n| / max(1e-6, |a|, |n|)` comparing the
    /// analytic gradient against central differences of `f`.
    pub fn fd_check(x: &Array2<f64>, analytic: &Array2<f64>, h: f64, f: impl Fn(&Array2<f64>) -> f64) -> f64 {
        let mut worst = 0.0f64;
        for idx in ndarray::indices(x.dim()) {
            let mut xp = x.clone();
            xp[idx] += h;
            let mut xm = x.clone();
            xm[idx] -= h;
            let numeric = (f(&xp) - f(&xm)) / (2.0 * h);
            let a = analytic[idx];
            let scale = a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((a - numeric).abs() / scale);
        }
        worst
    }
}
