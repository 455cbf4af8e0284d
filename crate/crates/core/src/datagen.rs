//! Seeded synthetic multimodal graphs with a planted partition.
//!
//! Edges follow a stochastic block model. Each node's feature mean mixes a
//! code shared by all modalities, indexed by the planted cluster, with a
//! modality-specific code indexed by a latent partition drawn independently
//! per modality. The mixture is projected to the feature dimension and
//! Gaussian noise is added. A fraction of the
//! entries is then replaced by spikes ten standard deviations from the
//! column mean.

use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, Axis};
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::graph::{ModalityFeatures, MultimodalGraph};
use crate::io::{save_dataset, KeyValues};

/// Spikes sit this many population standard deviations from the column mean.
pub const SPIKE_SIGMAS: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthModality {
    pub name: String,
    pub dim: usize,
    /// Scale of the cluster signal before noise.
    pub signal_strength: f64,
    pub noise_sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n: usize,
    pub k: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub modalities: Vec<SynthModality>,
    /// Fraction of feature entries replaced by spikes.
    pub outlier_rate: f64,
    /// Weight of the shared cluster code; 1 makes all modalities project the
    /// planted partition's codes, 0 leaves each modality with codes of its own
    /// latent partition, unrelated to the labels and to the other modalities.
    pub cross_modal_correlation: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            k: 4,
            p_in: 0.05,
            p_out: 0.005,
            modalities: vec![
                SynthModality {
                    name: "text".into(),
                    dim: 32,
                    signal_strength: 1.0,
                    noise_sigma: 1.0,
                },
                SynthModality {
                    name: "image".into(),
                    dim: 32,
                    signal_strength: 1.0,
                    noise_sigma: 1.0,
                },
            ],
            outlier_rate: 0.0,
            cross_modal_correlation: 0.5,
            seed: 0,
        }
    }
}

const TOP_KEYS: [&str; 7] = ["n", "k", "p_in", "p_out", "outlier_rate", "cross_modal_correlation", "seed"];
const MODALITY_FIELDS: [&str; 3] = ["dim", "signal_strength", "noise_sigma"];

impl SynthConfig {
    /// Reads `key = value` settings. Modalities are declared as
    /// `modality.<name>.dim`, `.signal_strength` and `.noise_sigma`, in file
    /// order; unspecified scalars keep their defaults.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let mut cfg = Self::default();
        let mut modalities: Vec<SynthModality> = Vec::new();
        for (key, _) in kv.iter() {
            if let Some(rest) = key.strip_prefix("modality.") {
                let Some((name, field)) = rest.rsplit_once('.') else {
                    return Err(Error::InvalidArgument(format!("malformed modality key `{key}`")));
                };
                if !MODALITY_FIELDS.contains(&field) {
                    return Err(Error::InvalidArgument(format!("unknown modality field `{key}`")));
                }
                if !modalities.iter().any(|m| m.name == name) {
                    modalities.push(SynthModality {
                        name: name.to_string(),
                        dim: 16,
                        signal_strength: 1.0,
                        noise_sigma: 1.0,
                    });
                }
            } else if !TOP_KEYS.contains(&key) {
                return Err(Error::InvalidArgument(format!("unknown config key `{key}`")));
            }
        }
        for m in &mut modalities {
            let prefix = format!("modality.{}", m.name);
            if let Some(v) = kv.parse_value(&format!("{prefix}.dim"))? {
                m.dim = v;
            }
            if let Some(v) = kv.parse_value(&format!("{prefix}.signal_strength"))? {
                m.signal_strength = v;
            }
            if let Some(v) = kv.parse_value(&format!("{prefix}.noise_sigma"))? {
                m.noise_sigma = v;
            }
        }
        if !modalities.is_empty() {
            cfg.modalities = modalities;
        }
        macro_rules! set {
            ($field:ident) => {
                if let Some(v) = kv.parse_value(stringify!($field))? {
                    cfg.$field = v;
                }
            };
        }
        set!(n);
        set!(k);
        set!(p_in);
        set!(p_out);
        set!(outlier_rate);
        set!(cross_modal_correlation);
        set!(seed);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.push("n", self.n);
        kv.push("k", self.k);
        kv.push("p_in", self.p_in);
        kv.push("p_out", self.p_out);
        kv.push("outlier_rate", self.outlier_rate);
        kv.push("cross_modal_correlation", self.cross_modal_correlation);
        kv.push("seed", self.seed);
        for m in &self.modalities {
            kv.push(format!("modality.{}.dim", m.name), m.dim);
            kv.push(format!("modality.{}.signal_strength", m.name), m.signal_strength);
            kv.push(format!("modality.{}.noise_sigma", m.name), m.noise_sigma);
        }
        kv
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.k == 0 || self.k > self.n {
            return bad(format!("need 1 <= k <= n, got k = {} and n = {}", self.k, self.n));
        }
        for (name, p) in [
            ("p_in", self.p_in),
            ("p_out", self.p_out),
            ("outlier_rate", self.outlier_rate),
            ("cross_modal_correlation", self.cross_modal_correlation),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if self.modalities.is_empty() {
            return bad("at least one modality is required".into());
        }
        for m in &self.modalities {
            if m.dim == 0 || m.noise_sigma < 0.0 || !m.signal_strength.is_finite() {
                return bad(format!("invalid settings for modality `{}`", m.name));
            }
        }
        Ok(())
    }

    /// True when the block structure is assortative.
    pub fn is_informative(&self) -> bool {
        self.p_in > self.p_out
    }
}

#[derive(Debug, Clone)]
pub struct Synthetic {
    pub graph: MultimodalGraph,
    /// Planted cluster of every node.
    pub labels: Vec<usize>,
    /// Spiked `(row, col)` entries per modality, ascending.
    pub spikes: Vec<Vec<(usize, usize)>>,
}

fn unit_gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Array1<f64> {
    let v: Array1<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    let norm = v.dot(&v).sqrt();
    if norm > 0.0 {
        v / norm
    } else {
        v
    }
}

/// Generates a dataset from one random stream.
pub fn generate(cfg: &SynthConfig) -> Result<Synthetic> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (n, k) = (cfg.n, cfg.k);

    let mut labels: Vec<usize> = (0..n).map(|i| i * k / n).collect();
    labels.shuffle(&mut rng);

    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if labels[u] == labels[v] { cfg.p_in } else { cfg.p_out };
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }

    let code_dim = k.max(8);
    let shared: Vec<Array1<f64>> = (0..k).map(|_| unit_gaussian(&mut rng, code_dim)).collect();
    let rho = cfg.cross_modal_correlation;
    let mut modalities = Vec::with_capacity(cfg.modalities.len());
    let mut spikes = Vec::with_capacity(cfg.modalities.len());
    for m in &cfg.modalities {
        // The modality's own codes follow a latent partition drawn
        // independently of the planted one.
        let own: Vec<Array1<f64>> = (0..k).map(|_| unit_gaussian(&mut rng, code_dim)).collect();
        let mut latent = labels.clone();
        latent.shuffle(&mut rng);
        let scale = 1.0 / (code_dim as f64).sqrt();
        let projection = Array2::from_shape_fn((code_dim, m.dim), |_| {
            scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
        });
        let shared_means: Vec<Array1<f64>> =
            shared.iter().map(|c| c.dot(&projection) * (m.signal_strength * rho.sqrt())).collect();
        let own_means: Vec<Array1<f64>> =
            own.iter().map(|c| c.dot(&projection) * (m.signal_strength * (1.0 - rho).sqrt())).collect();
        let mut x = Array2::from_shape_fn((n, m.dim), |(i, j)| {
            let noise: f64 = StandardNormal.sample(&mut rng);
            shared_means[labels[i]][j] + own_means[latent[i]][j] + m.noise_sigma * noise
        });

        let total = n * m.dim;
        let count = ((cfg.outlier_rate * total as f64).round() as usize).min(total);
        let mut picked: Vec<(usize, usize)> = index::sample(&mut rng, total, count)
            .into_iter()
            .map(|e| (e / m.dim, e % m.dim))
            .collect();
        picked.sort_unstable();
        let col_stats: Vec<(f64, f64)> = x
            .axis_iter(Axis(1))
            .map(|c| {
                let mu = c.sum() / n as f64;
                let var = c.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n as f64;
                (mu, var.sqrt())
            })
            .collect();
        for &(r, c) in &picked {
            let (mu, sigma) = col_stats[c];
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            x[[r, c]] = mu + sign * SPIKE_SIGMAS * sigma;
        }
        modalities.push(ModalityFeatures::new(m.name.clone(), x.mapv(|v| v as f32)));
        spikes.push(picked);
    }

    let graph = MultimodalGraph::new(n, edges, modalities, Some(labels.iter().map(|&l| Some(l)).collect()))?
        .with_num_clusters(Some(k));
    Ok(Synthetic { graph, labels, spikes })
}

/// Generates and writes a dataset into `dir`; returns the manifest path.
pub fn generate_to(cfg: &SynthConfig, dir: &Path) -> Result<PathBuf> {
    save_dataset(&generate(cfg)?.graph, dir)
}
