use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::model::{backward, forward, forward_with_shifts, init_params, objective, LossInputs, ModelParams};
use super::{cluster_h, normalized_centroids, TrainConfig, TrainingData};
use crate::dense::normalize_rows;
use crate::error::{Error, Result};
use crate::graph::{ModalityFeatures, MultimodalGraph};
use crate::losses::{hard_positive_sets, prune_graph, sample_neighborhoods, PrunedGraph};

pub const STEP: f64 = 1e-3;
pub const TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Serialize)]
pub struct TensorCheck {
    pub name: String,
    pub entries: usize,
    /// `‖g_fd − g‖ / max(‖g_fd‖, 1e-12)` over the whole tensor.
    pub rel_error: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub n: usize,
    pub step: f64,
    pub tolerance: f64,
    pub loss: f64,
    pub tensors: Vec<TensorCheck>,
    pub max_rel_error: f64,
    pub passed: bool,
}

/// The first `n_cap` nodes with the edges among them.
pub fn induced_subgraph(g: &MultimodalGraph, n_cap: usize) -> Result<MultimodalGraph> {
    let n = g.n().min(n_cap);
    if n == 0 {
        return Err(Error::InvalidArgument("induced subgraph would be empty".into()));
    }
    let edges: Vec<(usize, usize)> = g.adjacency().edges().filter(|&(u, v)| u < n && v < n).collect();
    let modalities = g
        .modalities()
        .iter()
        .map(|m| ModalityFeatures::new(m.name.clone(), m.data.slice(s![..n, ..]).to_owned()))
        .collect();
    let labels = g.labels().map(|l| l[..n].to_vec());
    Ok(MultimodalGraph::new(n, edges, modalities, labels)?.with_num_clusters(g.num_clusters()))
}

/// Loss as a function of the parameters with every stochastic or
/// clustering-dependent input held fixed.
struct Frozen<'a> {
    data: &'a TrainingData,
    cfg: &'a TrainConfig,
    shifts: Vec<crate::filter::FeatureShift>,
    inputs: LossInputs,
}

impl Frozen<'_> {
    fn loss(&self, p: &ModelParams) -> Result<f64> {
        let cache = forward_with_shifts(self.data, p, self.cfg, Some(&self.shifts))?;
        let (parts, _) = objective(&cache, self.cfg, &self.inputs)?;
        let decay: f64 = p.w.iter().map(|w| w.iter().map(|v| v * v).sum::<f64>()).sum();
        Ok(parts.total() + self.cfg.weight_decay * decay)
    }
}

fn rel_error(fd: &[f64], analytic: &[f64]) -> f64 {
    let diff: f64 = fd.iter().zip(analytic).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = fd.iter().map(|a| a * a).sum::<f64>().sqrt();
    diff / norm.max(1e-12)
}

/// Compares the analytic parameter gradient with central differences on the
/// subgraph induced by the first `n_cap` nodes.
pub fn gradcheck(g: &MultimodalGraph, cfg: &TrainConfig, n_cap: usize) -> Result<GradCheckReport> {
    cfg.validate()?;
    let sub = induced_subgraph(g, n_cap)?;
    let data = TrainingData::new(&sub)?;
    let n = data.n();
    let k = cfg.num_clusters.or(data.num_clusters).unwrap_or(2).clamp(1, n);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let params = init_params(&data, cfg.hidden_dim, rng.random());

    let cache = forward(&data, &params, cfg)?;
    let ab = cfg.ablations;
    let samples = (!ab.no_nbr_loss).then(|| -> Result<_> {
        let pruned = if ab.no_aas {
            PrunedGraph::unpruned(&data.adjacency)
        } else {
            let normalized: Vec<Array2<f64>> = cache.z_list.iter().map(|z| normalize_rows(z.view()).0).collect();
            let views: Vec<_> = normalized.iter().map(|z| z.view()).collect();
            prune_graph(&data.adjacency, &views, rng.random())?
        };
        Ok(sample_neighborhoods(&pruned, cfg.walk_length, cfg.negatives_per_node, rng.random()))
    });
    let samples = samples.transpose()?;
    let community = if ab.no_comm_loss {
        None
    } else {
        let c = cluster_h(cache.h.view(), k, rng.random())?;
        let hard = hard_positive_sets(cache.h.view(), &c, cfg.effective_theta())?;
        Some((normalized_centroids(&c), hard))
    };
    let frozen = Frozen {
        data: &data,
        cfg,
        shifts: cache.shifts.clone(),
        inputs: LossInputs {
            mms_seed: rng.random(),
            samples,
            community,
        },
    };

    let (_, grads) = objective(&cache, cfg, &frozen.inputs)?;
    let analytic = backward(&data, &params, cfg, &cache, &grads)?;
    let loss = frozen.loss(&params)?;

    let mut tensors = Vec::new();
    for (i, name) in data.names.iter().enumerate() {
        let mut fd = Vec::with_capacity(params.w[i].len());
        let mut p = params.clone();
        for idx in 0..params.w[i].len() {
            let (r, c) = (idx / params.w[i].ncols(), idx % params.w[i].ncols());
            let orig = p.w[i][[r, c]];
            p.w[i][[r, c]] = orig + STEP;
            let up = frozen.loss(&p)?;
            p.w[i][[r, c]] = orig - STEP;
            let down = frozen.loss(&p)?;
            p.w[i][[r, c]] = orig;
            fd.push((up - down) / (2.0 * STEP));
        }
        let a: Vec<f64> = analytic.w[i].iter().copied().collect();
        tensors.push(TensorCheck {
            name: format!("W_{name}"),
            entries: fd.len(),
            rel_error: rel_error(&fd, &a),
            grad_norm: a.iter().map(|v| v * v).sum::<f64>().sqrt(),
        });
    }
    if params.w.len() > 1 {
        let mut fd = Vec::new();
        let mut p = params.clone();
        for j in 0..p.combine_logits.len() {
            let orig = p.combine_logits[j];
            p.combine_logits[j] = orig + STEP;
            let up = frozen.loss(&p)?;
            p.combine_logits[j] = orig - STEP;
            let down = frozen.loss(&p)?;
            p.combine_logits[j] = orig;
            fd.push((up - down) / (2.0 * STEP));
        }
        let a = analytic.combine_logits.to_vec();
        tensors.push(TensorCheck {
            name: "combine_logits".into(),
            entries: fd.len(),
            rel_error: rel_error(&fd, &a),
            grad_norm: a.iter().map(|v| v * v).sum::<f64>().sqrt(),
        });
    }
    let max_rel_error = tensors.iter().map(|t| t.rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        n,
        step: STEP,
        tolerance: TOLERANCE,
        loss,
        tensors,
        max_rel_error,
        passed: max_rel_error <= TOLERANCE,
    })
}
