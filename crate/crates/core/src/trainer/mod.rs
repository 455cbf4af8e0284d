//! Parameters, forward and backward passes, and the training loop.

mod adam;
mod gradcheck;
mod model;

use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub use adam::Adam;
pub use gradcheck::{gradcheck, induced_subgraph, GradCheckReport, TensorCheck};
pub use model::{
    backward, forward, forward_with_shifts, init_params, objective, ForwardCache, LossGrads, LossInputs, LossParts,
    ModelParams, ParamGrads, TrainingData,
};

use crate::dense::normalize_rows;
use crate::error::{Error, Result};
use crate::io::KeyValues;
use crate::kmeans::{kmeans_fit, Clustering, DEFAULT_MAX_ITERS, DEFAULT_N_INIT};
use crate::losses::{hard_positive_sets, prune_graph, sample_neighborhoods, PrunedGraph};
use crate::metrics::nmi;

/// Component switches matching the ablation variants.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Ablations {
    /// Drop the feature-domain filter (β treated as 0).
    pub no_fdd: bool,
    pub no_mod_loss: bool,
    pub no_nbr_loss: bool,
    /// Walk on the unpruned graph.
    pub no_aas: bool,
    pub no_comm_loss: bool,
    /// Use every cluster member as a positive (θ = 1).
    pub no_hps: bool,
}

impl Ablations {
    pub const NAMES: [&'static str; 6] = ["no_fdd", "no_mod_loss", "no_nbr_loss", "no_aas", "no_comm_loss", "no_hps"];

    pub fn flag_mut(&mut self, name: &str) -> Option<&mut bool> {
        Some(match name {
            "no_fdd" => &mut self.no_fdd,
            "no_mod_loss" => &mut self.no_mod_loss,
            "no_nbr_loss" => &mut self.no_nbr_loss,
            "no_aas" => &mut self.no_aas,
            "no_comm_loss" => &mut self.no_comm_loss,
            "no_hps" => &mut self.no_hps,
            _ => return None,
        })
    }

    pub fn any_loss(&self) -> bool {
        !(self.no_mod_loss && self.no_nbr_loss && self.no_comm_loss)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainConfig {
    pub alpha: f64,
    pub beta: f64,
    pub t_layers: usize,
    pub theta: f64,
    pub delta: f64,
    pub walk_length: usize,
    pub negatives_per_node: usize,
    pub mms_negatives: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub kmeans_interval: usize,
    pub hidden_dim: usize,
    pub seed: u64,
    /// Overrides the cluster count stored with the dataset.
    pub num_clusters: Option<usize>,
    pub ablations: Ablations,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            t_layers: 10,
            theta: 0.3,
            delta: 0.1,
            walk_length: 10,
            negatives_per_node: 10,
            mms_negatives: 256,
            lr: 1e-3,
            weight_decay: 1e-5,
            epochs: 100,
            kmeans_interval: 5,
            hidden_dim: 64,
            seed: 0,
            num_clusters: None,
            ablations: Ablations::default(),
        }
    }
}

impl TrainConfig {
    /// Keys accepted by [`TrainConfig::apply_key_values`], besides the
    /// ablation flag names.
    pub const KEYS: [&'static str; 15] = [
        "alpha",
        "beta",
        "t_layers",
        "theta",
        "delta",
        "walk_length",
        "negatives_per_node",
        "mms_negatives",
        "lr",
        "weight_decay",
        "epochs",
        "kmeans_interval",
        "hidden_dim",
        "seed",
        "k",
    ];

    pub fn effective_beta(&self) -> f64 {
        if self.ablations.no_fdd {
            0.0
        } else {
            self.beta
        }
    }

    pub fn effective_theta(&self) -> f64 {
        if self.ablations.no_hps {
            1.0
        } else {
            self.theta
        }
    }

    /// Overwrites fields present in `kv`. Unknown keys are rejected.
    pub fn apply_key_values(&mut self, kv: &KeyValues) -> Result<()> {
        for (key, value) in kv.iter() {
            if let Some(flag) = self.ablations.flag_mut(key) {
                *flag = parse_bool(key, value)?;
            } else if !Self::KEYS.contains(&key) {
                return Err(Error::InvalidArgument(format!("unknown config key `{key}`")));
            }
        }
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = kv.parse_value(stringify!($field))? {
                    self.$field = v;
                }
            )*};
        }
        set!(
            alpha,
            beta,
            t_layers,
            theta,
            delta,
            walk_length,
            negatives_per_node,
            mms_negatives,
            lr,
            weight_decay,
            epochs,
            kmeans_interval,
            hidden_dim,
            seed
        );
        if let Some(k) = kv.parse_value("k")? {
            self.num_clusters = Some(k);
        }
        Ok(())
    }

    /// Every field in the grammar read by [`TrainConfig::apply_key_values`].
    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.push("alpha", self.alpha);
        kv.push("beta", self.beta);
        kv.push("t_layers", self.t_layers);
        kv.push("theta", self.theta);
        kv.push("delta", self.delta);
        kv.push("walk_length", self.walk_length);
        kv.push("negatives_per_node", self.negatives_per_node);
        kv.push("mms_negatives", self.mms_negatives);
        kv.push("lr", self.lr);
        kv.push("weight_decay", self.weight_decay);
        kv.push("epochs", self.epochs);
        kv.push("kmeans_interval", self.kmeans_interval);
        kv.push("hidden_dim", self.hidden_dim);
        kv.push("seed", self.seed);
        if let Some(k) = self.num_clusters {
            kv.push("k", k);
        }
        let mut ab = self.ablations;
        for name in Ablations::NAMES {
            kv.push(name, *ab.flag_mut(name).expect("listed flag"));
        }
        kv
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.to_string()));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if self.epochs == 0 || self.hidden_dim == 0 || self.kmeans_interval == 0 {
            return bad("epochs, hidden_dim and kmeans_interval must be positive");
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return bad("theta must lie in (0, 1]");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be nonnegative");
        }
        if self.num_clusters == Some(0) {
            return bad("k must be positive");
        }
        model::filter_config(self).validate()?;
        self.contrast().validate()
    }

    fn contrast(&self) -> crate::losses::ContrastConfig {
        crate::losses::ContrastConfig {
            delta: self.delta,
            walk_length: self.walk_length,
            negatives_per_node: self.negatives_per_node,
            theta: self.effective_theta(),
            mms_negatives: self.mms_negatives,
        }
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::InvalidArgument(format!("`{key}` expects a boolean, got `{value}`"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss_mod: f64,
    pub loss_nbr: f64,
    pub loss_comm: f64,
    pub loss_total: f64,
    pub pruned_edges: usize,
    pub empty_positive_nodes: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nmi_vs_labels: Option<f64>,
}

/// Writes one JSON object per line.
pub fn write_epoch_log(logs: &[EpochLog], path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    for log in logs {
        let line = serde_json::to_string(log).expect("epoch log serializes");
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: ModelParams,
    pub h: Array2<f64>,
    pub clustering: Clustering,
    pub logs: Vec<EpochLog>,
    pub pruned: PrunedGraph,
    /// Epoch at which a non-finite value stopped training; the returned
    /// state is the last one that evaluated cleanly.
    pub diverged_at: Option<usize>,
}

fn normalized_centroids(c: &Clustering) -> Clustering {
    Clustering {
        centroids: normalize_rows(c.centroids.view()).0,
        ..c.clone()
    }
}

fn cluster_h(h: ArrayView2<'_, f64>, k: usize, seed: u64) -> Result<Clustering> {
    kmeans_fit(h, k, seed, DEFAULT_MAX_ITERS, DEFAULT_N_INIT)
}

/// Trains on `data` and clusters the final representation.
pub fn fit(data: &TrainingData, cfg: &TrainConfig) -> Result<FitResult> {
    cfg.validate()?;
    let k = cfg
        .num_clusters
        .or(data.num_clusters)
        .ok_or_else(|| Error::InvalidArgument("cluster count missing: set k in the manifest or config".into()))?;
    if k > data.n() {
        return Err(Error::InvalidArgument(format!("k = {k} exceeds n = {}", data.n())));
    }
    let ab = cfg.ablations;
    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init_seed: u64 = master.random();
    let prune_seed: u64 = master.random();

    let mut params = init_params(data, cfg.hidden_dim, init_seed);
    let shapes: Vec<_> = params.w.iter().map(|w| w.dim()).collect();
    let mut adam = Adam::new(cfg.lr, &shapes, params.w.len());

    let pruned = if ab.no_aas || ab.no_nbr_loss {
        PrunedGraph::unpruned(&data.adjacency)
    } else {
        let cache = forward(data, &params, cfg)?;
        let normalized: Vec<Array2<f64>> = cache.z_list.iter().map(|z| normalize_rows(z.view()).0).collect();
        let views: Vec<_> = normalized.iter().map(|z| z.view()).collect();
        prune_graph(&data.adjacency, &views, prune_seed)?
    };

    let labels = data.labels.as_deref();
    let mut clustering: Option<Clustering> = None;
    let mut logs = Vec::with_capacity(cfg.epochs);
    let mut last_good = params.clone();
    let mut diverged_at = None;

    for epoch in 0..cfg.epochs {
        let walk_seed: u64 = master.random();
        let mms_seed: u64 = master.random();
        let kmeans_seed: u64 = master.random();

        let cache = match forward(data, &params, cfg) {
            Ok(c) => c,
            Err(Error::NonFinite(_)) => {
                diverged_at = Some(epoch);
                break;
            }
            Err(e) => return Err(e),
        };

        let mut nmi_vs_labels = None;
        let refresh = epoch % cfg.kmeans_interval == 0;
        if refresh && (!ab.no_comm_loss || labels.is_some()) {
            let c = cluster_h(cache.h.view(), k, kmeans_seed)?;
            if let Some(truth) = labels {
                nmi_vs_labels = Some(labeled_nmi(truth, &c.assignments)?);
            }
            clustering = Some(c);
        }

        let samples =
            (!ab.no_nbr_loss).then(|| sample_neighborhoods(&pruned, cfg.walk_length, cfg.negatives_per_node, walk_seed));
        let community = match (&clustering, ab.no_comm_loss) {
            (Some(c), false) => {
                let hard = hard_positive_sets(cache.h.view(), c, cfg.effective_theta())?;
                Some((normalized_centroids(c), hard))
            }
            _ => None,
        };
        let inputs = LossInputs {
            mms_seed,
            samples,
            community,
        };
        let (parts, grads) = match objective(&cache, cfg, &inputs) {
            Ok(r) => r,
            Err(Error::NonFinite(_)) => {
                diverged_at = Some(epoch);
                break;
            }
            Err(e) => return Err(e),
        };
        if !parts.total().is_finite() {
            diverged_at = Some(epoch);
            break;
        }
        last_good = params.clone();
        logs.push(EpochLog {
            epoch,
            loss_mod: parts.modality,
            loss_nbr: parts.neighborhood,
            loss_comm: parts.community,
            loss_total: parts.total(),
            pruned_edges: pruned.removed_count,
            empty_positive_nodes: parts.empty_positive_nodes,
            nmi_vs_labels,
        });

        if ab.any_loss() {
            let g = backward(data, &params, cfg, &cache, &grads)?;
            adam.update(&mut params.w, &g.w, &mut params.combine_logits, &g.combine_logits);
            if !params.is_finite() {
                diverged_at = Some(epoch);
                break;
            }
        }
    }
    if diverged_at.is_some() {
        params = last_good;
    }

    let final_seed: u64 = master.random();
    let cache = forward(data, &params, cfg)?;
    let clustering = cluster_h(cache.h.view(), k, final_seed)?;
    Ok(FitResult {
        params,
        h: cache.h,
        clustering,
        logs,
        pruned,
        diverged_at,
    })
}

fn labeled_nmi(truth: &[Option<usize>], pred: &[usize]) -> Result<f64> {
    let (t, p): (Vec<usize>, Vec<usize>) = truth.iter().zip(pred).filter_map(|(t, &p)| t.map(|t| (t, p))).unzip();
    if t.is_empty() {
        return Ok(0.0);
    }
    nmi(&t, &p)
}
