use ndarray::ArrayView2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::Adjacency;

/// Graph after attribute-aware pruning.
#[derive(Debug, Clone, PartialEq)]
pub struct PrunedGraph {
    /// Surviving edges; every node without neighbors carries a self-loop.
    pub edges: Adjacency,
    /// `φ = μ + σ` of the sampled similarities; `None` when pruning was skipped.
    pub threshold: Option<f64>,
    pub removed_count: usize,
}

impl PrunedGraph {
    /// Wraps a graph without pruning it.
    pub fn unpruned(adj: &Adjacency) -> Self {
        Self {
            edges: adj.with_isolated_self_loops(),
            threshold: None,
            removed_count: 0,
        }
    }

    pub fn is_pruned(&self) -> bool {
        self.threshold.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleSet {
    pub positives: Vec<Vec<usize>>,
    pub negatives: Vec<Vec<usize>>,
    pub epoch_seed: u64,
}

fn directed_similarity(z_list: &[ArrayView2<'_, f64>], u: usize, v: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..z_list.len() {
        for j in i + 1..z_list.len() {
            s += z_list[i].row(u).dot(&z_list[j].row(v));
        }
    }
    s
}

/// Cross-modal similarity `Σ_{i<j} Z^(i)_u · Z^(j)_v`, averaged over both
/// orientations so that it is a symmetric edge score.
pub fn cross_modal_similarity(z_list: &[ArrayView2<'_, f64>], u: usize, v: usize) -> Result<f64> {
    let n = z_list.first().map_or(0, |z| z.nrows());
    for id in [u, v] {
        if id >= n {
            return Err(Error::NodeOutOfRange { id, n });
        }
    }
    Ok(0.5 * (directed_similarity(z_list, u, v) + directed_similarity(z_list, v, u)))
}

/// Removes edges whose cross-modal similarity falls below `φ = μ + σ`,
/// where `μ` and `σ` are the mean and population deviation of the similarity
/// over `|E|` random node pairs.
///
/// Fewer than two modalities disable pruning.
pub fn prune_graph(adj: &Adjacency, z_list: &[ArrayView2<'_, f64>], sample_seed: u64) -> Result<PrunedGraph> {
    let n = adj.n();
    for z in z_list {
        if z.nrows() != n {
            return Err(Error::Shape(format!("embedding has {} rows, graph has {n} nodes", z.nrows())));
        }
    }
    let m = adj.edges().filter(|(u, v)| u != v).count();
    if z_list.len() < 2 || n < 2 || m == 0 {
        return Ok(PrunedGraph::unpruned(adj));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
    let samples: Vec<f64> = (0..m)
        .map(|_| {
            let u = rng.random_range(0..n);
            let mut v = rng.random_range(0..n - 1);
            if v >= u {
                v += 1;
            }
            0.5 * (directed_similarity(z_list, u, v) + directed_similarity(z_list, v, u))
        })
        .collect();
    // shifted moments keep σ exactly zero when all samples agree
    let pivot = samples[0];
    let mu = pivot + samples.iter().map(|s| s - pivot).sum::<f64>() / m as f64;
    let var = samples.iter().map(|s| (s - mu) * (s - mu)).sum::<f64>() / m as f64;
    let phi = mu + var.sqrt();

    let mut removed = 0;
    let kept = adj.filter_edges(|u, v| {
        if u == v {
            return true;
        }
        let s = 0.5 * (directed_similarity(z_list, u, v) + directed_similarity(z_list, v, u));
        let keep = s >= phi;
        if !keep {
            removed += 1;
        }
        keep
    });
    Ok(PrunedGraph {
        edges: kept.with_isolated_self_loops(),
        threshold: Some(phi),
        removed_count: removed,
    })
}

/// One uniform random walk of `walk_length` steps per anchor gives its
/// positives (anchor excluded, repeats kept); negatives are
/// `negatives_per_node` uniform draws outside the positives and the anchor.
pub fn sample_neighborhoods(
    pruned: &PrunedGraph,
    walk_length: usize,
    negatives_per_node: usize,
    seed: u64,
) -> SampleSet {
    let adj = &pruned.edges;
    let n = adj.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positives = Vec::with_capacity(n);
    let mut negatives = Vec::with_capacity(n);
    let mut excluded = vec![false; n];
    for anchor in 0..n {
        let mut walk = Vec::with_capacity(walk_length);
        let mut at = anchor;
        for _ in 0..walk_length {
            let nbrs = adj.neighbors(at);
            if nbrs.is_empty() {
                break;
            }
            at = nbrs[rng.random_range(0..nbrs.len())];
            walk.push(at);
        }

        excluded[anchor] = true;
        for &p in &walk {
            excluded[p] = true;
        }
        let free = excluded.iter().filter(|&&e| !e).count();
        let mut negs = Vec::with_capacity(negatives_per_node);
        if free > 0 {
            if 2 * free >= n {
                while negs.len() < negatives_per_node {
                    let c = rng.random_range(0..n);
                    if !excluded[c] {
                        negs.push(c);
                    }
                }
            } else {
                let pool: Vec<usize> = (0..n).filter(|&c| !excluded[c]).collect();
                negs.extend((0..negatives_per_node).map(|_| pool[rng.random_range(0..pool.len())]));
            }
        }
        excluded[anchor] = false;
        for &p in &walk {
            excluded[p] = false;
        }
        positives.push(walk);
        negatives.push(negs);
    }
    SampleSet {
        positives,
        negatives,
        epoch_seed: seed,
    }
}
