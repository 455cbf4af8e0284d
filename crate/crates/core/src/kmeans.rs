//! Lloyd's K-Means with k-means++ seeding and best-of-`n_init` restarts.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

pub const DEFAULT_MAX_ITERS: usize = 300;
pub const DEFAULT_N_INIT: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub assignments: Vec<usize>,
    /// `k × d`; row `j` is the mean of the rows assigned to cluster `j`.
    pub centroids: Array2<f64>,
    /// Sum of squared distances to the assigned centroids.
    pub inertia: f64,
    pub k: usize,
}

impl Clustering {
    /// Member ids of each cluster, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (node, &c) in self.assignments.iter().enumerate() {
            out[c].push(node);
        }
        out
    }

    /// `node_id,cluster` CSV with a header line.
    pub fn assignments_csv(&self) -> String {
        let mut out = String::from("node_id,cluster\n");
        for (node, c) in self.assignments.iter().enumerate() {
            out.push_str(&format!("{node},{c}\n"));
        }
        out
    }
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid per row (ties to the lowest index) and the squared distance.
fn assign(x: ArrayView2<'_, f64>, centroids: &Array2<f64>) -> Vec<(usize, f64)> {
    x.axis_iter(Axis(0))
        .into_par_iter()
        .map(|row| {
            let mut best = (0, f64::INFINITY);
            for (j, c) in centroids.axis_iter(Axis(0)).enumerate() {
                let d = sq_dist(row, c);
                if d < best.1 {
                    best = (j, d);
                }
            }
            best
        })
        .collect()
}

/// Recomputes centroids as member means. An empty cluster takes over the
/// point farthest from its current centroid (among clusters with more than
/// one member), which updates `labels` in place.
fn update(x: ArrayView2<'_, f64>, labels: &mut [usize], dists: &mut [f64], k: usize) -> Array2<f64> {
    let d = x.ncols();
    loop {
        let mut counts = vec![0usize; k];
        for &c in labels.iter() {
            counts[c] += 1;
        }
        if let Some(empty) = counts.iter().position(|&c| c == 0) {
            let donor = (0..labels.len())
                .filter(|&i| counts[labels[i]] > 1)
                .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)));
            if let Some(i) = donor {
                labels[i] = empty;
                dists[i] = 0.0;
                continue;
            }
        }
        let mut sums = Array2::<f64>::zeros((k, d));
        for (row, &c) in x.axis_iter(Axis(0)).zip(labels.iter()) {
            sums.row_mut(c).scaled_add(1.0, &row);
        }
        for (mut s, &cnt) in sums.axis_iter_mut(Axis(0)).zip(&counts) {
            if cnt > 0 {
                s /= cnt as f64;
            }
        }
        return sums;
    }
}

/// Lloyd iterations from the given centroids until the assignment is a
/// fixpoint or `max_iters` updates ran. Also returns the inertia measured at
/// every assignment step, which is non-increasing.
pub fn lloyd(x: ArrayView2<'_, f64>, init: &Array2<f64>, max_iters: usize) -> (Clustering, Vec<f64>) {
    let k = init.nrows();
    let first = assign(x, init);
    let mut labels: Vec<usize> = first.iter().map(|p| p.0).collect();
    let mut dists: Vec<f64> = first.iter().map(|p| p.1).collect();
    let mut history = vec![dists.iter().sum::<f64>()];
    for _ in 0..max_iters {
        let centroids = update(x, &mut labels, &mut dists, k);
        let next = assign(x, &centroids);
        history.push(next.iter().map(|p| p.1).sum());
        let changed = next.iter().zip(&labels).any(|(p, &l)| p.0 != l);
        dists = next.iter().map(|p| p.1).collect();
        if !changed {
            break;
        }
        labels = next.iter().map(|p| p.0).collect();
    }
    // centroids must be the means of the final labels
    let centroids = update(x, &mut labels, &mut dists, k);
    let inertia = x
        .axis_iter(Axis(0))
        .zip(&labels)
        .map(|(row, &c)| sq_dist(row, centroids.row(c)))
        .sum();
    (
        Clustering {
            assignments: labels,
            centroids,
            inertia,
            k,
        },
        history,
    )
}

/// k-means++ seeding: first center uniform, later centers with probability
/// proportional to the squared distance to the nearest chosen center.
pub fn kmeans_plus_plus(x: ArrayView2<'_, f64>, k: usize, rng: &mut impl Rng) -> Array2<f64> {
    let n = x.nrows();
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..n));
    let mut nearest: Vec<f64> = x
        .axis_iter(Axis(0))
        .map(|r| sq_dist(r, x.row(chosen[0])))
        .collect();
    while chosen.len() < k {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &w) in nearest.iter().enumerate() {
                if w > 0.0 {
                    pick = Some(i);
                    if target < w {
                        break;
                    }
                    target -= w;
                }
            }
            pick.expect("positive total weight")
        } else {
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for (i, r) in x.axis_iter(Axis(0)).enumerate() {
            nearest[i] = nearest[i].min(sq_dist(r, x.row(next)));
        }
    }
    x.select(Axis(0), &chosen)
}

/// Best of `n_init` k-means++ restarts by inertia (earliest restart wins ties).
pub fn kmeans_fit(x: ArrayView2<'_, f64>, k: usize, seed: u64, max_iters: usize, n_init: usize) -> Result<Clustering> {
    let n = x.nrows();
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    if k > n {
        return Err(Error::InvalidArgument(format!("k = {k} exceeds the number of rows {n}")));
    }
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<u64> = (0..n_init.max(1)).map(|_| master.random()).collect();
    let runs: Vec<Clustering> = seeds
        .par_iter()
        .map(|&s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let init = kmeans_plus_plus(x, k, &mut rng);
            lloyd(x, &init, max_iters).0
        })
        .collect();
    Ok(runs
        .into_iter()
        .reduce(|best, c| if c.inertia < best.inertia { c } else { best })
        .expect("at least one restart"))
}
