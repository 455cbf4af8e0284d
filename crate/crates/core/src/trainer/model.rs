use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::TrainConfig;
use crate::dense::{normalize_rows, normalize_rows_backward};
use crate::error::{Error, Result};
use crate::filter::{dual_filter, feature_shift, DualFilterConfig, FeatureShift};
use crate::graph::{normalize_adjacency, Adjacency, MultimodalGraph, NormalizedOperators};
use crate::io::write_features;
use crate::kmeans::Clustering;
use crate::losses::{community_loss, cross_modality_loss, neighborhood_loss, SampleSet};

/// Graph inputs converted once for training: 64-bit features and `Â`.
#[derive(Debug, Clone)]
pub struct TrainingData {
    pub features: Vec<Array2<f64>>,
    pub names: Vec<String>,
    pub ops: NormalizedOperators,
    pub adjacency: Adjacency,
    pub labels: Option<Vec<Option<usize>>>,
    pub num_clusters: Option<usize>,
}

impl TrainingData {
    pub fn new(g: &MultimodalGraph) -> Result<Self> {
        if g.num_modalities() == 0 {
            return Err(Error::InvalidArgument("dataset has no modalities".into()));
        }
        Ok(Self {
            features: g.modalities().iter().map(|m| m.to_f64()).collect(),
            names: g.modalities().iter().map(|m| m.name.clone()).collect(),
            ops: normalize_adjacency(g),
            adjacency: g.adjacency().clone(),
            labels: g.labels().map(<[_]>::to_vec),
            num_clusters: g.num_clusters(),
        })
    }

    pub fn n(&self) -> usize {
        self.ops.n()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// One `d_i × d` projection per modality.
    pub w: Vec<Array2<f64>>,
    pub combine_logits: Array1<f64>,
}

impl ModelParams {
    pub fn combine_weights(&self) -> Array1<f64> {
        softmax(&self.combine_logits)
    }

    pub fn is_finite(&self) -> bool {
        self.w.iter().flat_map(|w| w.iter()).chain(self.combine_logits.iter()).all(|v| v.is_finite())
    }

    /// Writes `W_<name>.bin` per modality and `combine_logits.bin` (a 1×m
    /// matrix) in the feature binary format. Returns the written paths.
    pub fn save(&self, names: &[String], dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut out = Vec::new();
        for (w, name) in self.w.iter().zip(names) {
            let path = dir.join(format!("W_{name}.bin"));
            write_features(&path, &w.mapv(|v| v as f32))?;
            out.push(path);
        }
        let path = dir.join("combine_logits.bin");
        let logits = self.combine_logits.view().insert_axis(Axis(0)).mapv(|v| v as f32);
        write_features(&path, &logits)?;
        out.push(path);
        Ok(out)
    }
}

fn softmax(x: &Array1<f64>) -> Array1<f64> {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = x.mapv(|v| (v - m).exp());
    let s = e.sum();
    e / s
}

/// Uniform `±sqrt(6 / (d_i + d))` projections and equal combine weights.
pub fn init_params(data: &TrainingData, hidden_dim: usize, seed: u64) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = data
        .features
        .iter()
        .map(|x| {
            let limit = (6.0 / (x.ncols() + hidden_dim) as f64).sqrt();
            Array2::from_shape_fn((x.ncols(), hidden_dim), |_| rng.random_range(-limit..=limit))
        })
        .collect();
    ModelParams {
        w,
        combine_logits: Array1::zeros(data.features.len()),
    }
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Per-modality projections `Z^(i) = X^(i) W^(i)`.
    pub z_list: Vec<Array2<f64>>,
    /// Feature shifts; empty when the feature filter is off.
    pub shifts: Vec<FeatureShift>,
    pub weights: Array1<f64>,
    pub z: Array2<f64>,
    pub h: Array2<f64>,
}

pub(crate) fn filter_config(cfg: &TrainConfig) -> DualFilterConfig {
    DualFilterConfig {
        alpha: cfg.alpha,
        beta: cfg.effective_beta(),
        t_layers: cfg.t_layers,
    }
}

/// Projection, weighted combination and dual filtering.
pub fn forward(data: &TrainingData, params: &ModelParams, cfg: &TrainConfig) -> Result<ForwardCache> {
    forward_with_shifts(data, params, cfg, None)
}

/// Forward pass that reuses `frozen` feature shifts instead of rebuilding them.
pub fn forward_with_shifts(
    data: &TrainingData,
    params: &ModelParams,
    cfg: &TrainConfig,
    frozen: Option<&[FeatureShift]>,
) -> Result<ForwardCache> {
    if params.w.len() != data.features.len() {
        return Err(Error::Shape(format!(
            "{} projections for {} modalities",
            params.w.len(),
            data.features.len()
        )));
    }
    let z_list: Vec<Array2<f64>> = data.features.iter().zip(&params.w).map(|(x, w)| x.dot(w)).collect();
    let weights = params.combine_weights();
    let mut z = Array2::zeros(z_list[0].dim());
    for (zi, &wi) in z_list.iter().zip(&weights) {
        z.scaled_add(wi, zi);
    }
    let fcfg = filter_config(cfg);
    let shifts = match frozen {
        Some(s) => s.to_vec(),
        None if fcfg.beta > 0.0 => z_list
            .iter()
            .enumerate()
            .map(|(i, zi)| feature_shift(zi.view(), i))
            .collect::<Result<_>>()?,
        None => Vec::new(),
    };
    let h = dual_filter(&data.ops, z.view(), &shifts, &fcfg)?;
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("filtered representation".into()));
    }
    Ok(ForwardCache {
        z_list,
        shifts,
        weights,
        z,
        h,
    })
}

/// Stochastic and clustering-dependent pieces of the objective, held fixed
/// while a gradient is evaluated.
#[derive(Debug, Clone)]
pub struct LossInputs {
    pub mms_seed: u64,
    pub samples: Option<SampleSet>,
    /// Clustering whose centroids are already L2-normalized, with its hard
    /// positive sets.
    pub community: Option<(Clustering, Vec<Vec<usize>>)>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    pub modality: f64,
    pub neighborhood: f64,
    pub community: f64,
    pub empty_positive_nodes: usize,
}

impl LossParts {
    pub fn total(&self) -> f64 {
        self.modality + self.neighborhood + self.community
    }
}

/// Gradients of the objective with respect to `H` and each `Z^(i)`.
#[derive(Debug, Clone)]
pub struct LossGrads {
    pub h: Array2<f64>,
    pub z_list: Vec<Array2<f64>>,
}

/// Enabled losses on row-normalized embeddings and their gradients with
/// respect to the unnormalized `H` and `Z^(i)`.
pub fn objective(cache: &ForwardCache, cfg: &TrainConfig, inputs: &LossInputs) -> Result<(LossParts, LossGrads)> {
    let (hn, h_norms) = normalize_rows(cache.h.view());
    let mut parts = LossParts::default();
    let mut grad_hn = Array2::zeros(hn.dim());
    let mut grad_z: Vec<Array2<f64>> = cache.z_list.iter().map(|z| Array2::zeros(z.dim())).collect();

    if !cfg.ablations.no_mod_loss {
        let normalized: Vec<(Array2<f64>, Array1<f64>)> = cache.z_list.iter().map(|z| normalize_rows(z.view())).collect();
        let mut views: Vec<ArrayView2<'_, f64>> = vec![hn.view()];
        views.extend(normalized.iter().map(|(z, _)| z.view()));
        let (loss, grads) = cross_modality_loss(&views, cfg.delta, cfg.mms_negatives, inputs.mms_seed)?;
        parts.modality = loss;
        grad_hn += &grads[0];
        for ((gz, (zn, norms)), g) in grad_z.iter_mut().zip(&normalized).zip(&grads[1..]) {
            *gz = normalize_rows_backward(zn.view(), norms, g.view());
        }
    }
    if !cfg.ablations.no_nbr_loss {
        let samples = inputs
            .samples
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("neighborhood samples missing".into()))?;
        let r = neighborhood_loss(hn.view(), samples)?;
        parts.neighborhood = r.loss;
        parts.empty_positive_nodes = r.empty_positive_nodes;
        grad_hn += &r.grad;
    }
    if !cfg.ablations.no_comm_loss {
        let (clustering, hard) = inputs
            .community
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("clustering missing for the community loss".into()))?;
        let r = community_loss(hn.view(), clustering, hard)?;
        parts.community = r.loss;
        grad_hn += &r.grad;
    }
    let grad_h = normalize_rows_backward(hn.view(), &h_norms, grad_hn.view());
    Ok((parts, LossGrads { h: grad_h, z_list: grad_z }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub w: Vec<Array2<f64>>,
    pub combine_logits: Array1<f64>,
}

/// Chain rule from loss gradients to parameters. Feature shifts are treated
/// as constants; the filter is symmetric, so `∂L/∂Z` is the same filter
/// applied to `∂L/∂H`. Weight decay contributes `2·wd·W`.
pub fn backward(
    data: &TrainingData,
    params: &ModelParams,
    cfg: &TrainConfig,
    cache: &ForwardCache,
    grads: &LossGrads,
) -> Result<ParamGrads> {
    let grad_z = dual_filter(&data.ops, grads.h.view(), &cache.shifts, &filter_config(cfg))?;
    let grad_weights: Vec<f64> = cache.z_list.iter().map(|zi| (zi * &grad_z).sum()).collect();
    let mut w = Vec::with_capacity(params.w.len());
    for (i, (x, wi)) in data.features.iter().zip(&params.w).enumerate() {
        let mut gz = grads.z_list[i].clone();
        gz.scaled_add(cache.weights[i], &grad_z);
        let mut g = x.t().dot(&gz);
        if cfg.weight_decay != 0.0 {
            g.scaled_add(2.0 * cfg.weight_decay, wi);
        }
        w.push(g);
    }
    // softmax Jacobian: ∂w_j/∂l_i = w_j (δ_ij − w_i)
    let dot: f64 = cache.weights.iter().zip(&grad_weights).map(|(a, b)| a * b).sum();
    let combine_logits = cache
        .weights
        .iter()
        .zip(&grad_weights)
        .map(|(wi, gi)| wi * (gi - dot))
        .collect();
    Ok(ParamGrads { w, combine_logits })
}
