use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::kmeans::Clustering;

#[derive(Debug, Clone, PartialEq)]
pub struct CommunityLoss {
    pub loss: f64,
    pub grad: Array2<f64>,
}

fn cosine(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> f64 {
    let denom = a.dot(&a).sqrt() * b.dot(&b).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        a.dot(&b) / denom
    }
}

/// For every cluster, the `max(1, ⌊|C_k|·θ⌋)` members closest to its centroid
/// by cosine similarity (ties to the lower node id). Empty clusters yield
/// empty sets.
pub fn hard_positive_sets(h: ArrayView2<'_, f64>, clustering: &Clustering, theta: f64) -> Result<Vec<Vec<usize>>> {
    if clustering.assignments.len() != h.nrows() {
        return Err(Error::Shape(format!(
            "clustering covers {} nodes, embedding has {} rows",
            clustering.assignments.len(),
            h.nrows()
        )));
    }
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::InvalidArgument(format!("theta must lie in (0, 1], got {theta}")));
    }
    Ok(clustering
        .members()
        .into_iter()
        .enumerate()
        .map(|(k, members)| {
            if members.is_empty() {
                return members;
            }
            let c = clustering.centroids.row(k);
            let mut scored: Vec<(f64, usize)> = members.iter().map(|&j| (cosine(h.row(j), c), j)).collect();
            scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            // the epsilon keeps products like 10 × 0.3 from flooring to 2
            let take = ((members.len() as f64 * theta + 1e-9).floor() as usize).max(1);
            scored.into_iter().take(take).map(|(_, j)| j).collect()
        })
        .collect())
}

/// Community contrast
/// `−(1/n) Σ_k log( Σ_{j∈H_k} e^{h_j·c_k} / Σ_l Σ_{j∈C_l} e^{h_j·c_l} )`.
///
/// Centroids are taken as given (no gradient flows into them).
pub fn community_loss(h: ArrayView2<'_, f64>, clustering: &Clustering, hard_sets: &[Vec<usize>]) -> Result<CommunityLoss> {
    let n = h.nrows();
    if clustering.assignments.len() != n {
        return Err(Error::Shape(format!(
            "clustering covers {} nodes, embedding has {n} rows",
            clustering.assignments.len()
        )));
    }
    if hard_sets.len() != clustering.k {
        return Err(Error::Shape(format!("{} hard sets for {} clusters", hard_sets.len(), clustering.k)));
    }
    if hard_sets.iter().all(Vec::is_empty) {
        return Err(Error::InvalidArgument("all hard-positive sets are empty".into()));
    }
    let c = &clustering.centroids;
    let own: Vec<f64> = (0..n)
        .map(|j| h.row(j).dot(&c.row(clustering.assignments[j])).exp())
        .collect();
    let denom: f64 = own.iter().sum();
    let active = hard_sets.iter().filter(|s| !s.is_empty()).count() as f64;
    let inv_n = 1.0 / n as f64;

    let mut loss = 0.0;
    let mut grad = Array2::zeros(h.dim());
    for (k, set) in hard_sets.iter().enumerate() {
        if set.is_empty() {
            continue;
        }
        let terms: Vec<f64> = set.iter().map(|&j| h.row(j).dot(&c.row(k)).exp()).collect();
        let num: f64 = terms.iter().sum();
        loss -= inv_n * (num.ln() - denom.ln());
        for (&j, t) in set.iter().zip(&terms) {
            grad.row_mut(j).scaled_add(-inv_n * t / num, &c.row(k));
        }
    }
    // every log term shares the same denominator
    for j in 0..n {
        grad.row_mut(j)
            .scaled_add(inv_n * active * own[j] / denom, &c.row(clustering.assignments[j]));
    }
    Ok(CommunityLoss { loss, grad })
}
