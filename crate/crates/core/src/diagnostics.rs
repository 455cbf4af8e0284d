//! Dataset characterization: distance correlation between modalities and a
//! z-score outlier census per modality.

use ndarray::{ArrayView1, ArrayView2, Axis};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::MultimodalGraph;

/// Largest row count handled without subsampling.
pub const ADC_CAP: usize = 4000;

fn dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Row means of the pairwise distance matrix and its grand mean.
fn distance_means(x: ArrayView2<'_, f64>) -> (Vec<f64>, f64) {
    let n = x.nrows();
    let rows: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| (0..n).map(|j| dist(x.row(i), x.row(j))).sum::<f64>() / n as f64)
        .collect();
    let grand = rows.iter().sum::<f64>() / n as f64;
    (rows, grand)
}

/// Sample distance correlation of two views of the same `n` items.
///
/// Distance matrices are double centered on the fly, so memory stays linear
/// in `n`. Returns 0 when either view has zero distance variance.
pub fn distance_correlation(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<f64> {
    let n = x.nrows();
    if y.nrows() != n {
        return Err(Error::Shape(format!("views have {n} and {} rows", y.nrows())));
    }
    if n < 2 {
        return Err(Error::InvalidArgument("distance correlation needs at least 2 rows".into()));
    }
    if n > ADC_CAP {
        return Err(Error::TooLarge { n, cap: ADC_CAP });
    }
    let (ax, gx) = distance_means(x);
    let (ay, gy) = distance_means(y);
    let partial: Vec<(f64, f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut acc = (0.0, 0.0, 0.0);
            for j in 0..n {
                let a = dist(x.row(i), x.row(j)) - ax[i] - ax[j] + gx;
                let b = dist(y.row(i), y.row(j)) - ay[i] - ay[j] + gy;
                acc.0 += a * b;
                acc.1 += a * a;
                acc.2 += b * b;
            }
            acc
        })
        .collect();
    let (mut cov, mut var_x, mut var_y) = (0.0, 0.0, 0.0);
    for (c, vx, vy) in partial {
        cov += c;
        var_x += vx;
        var_y += vy;
    }
    if var_x <= 0.0 || var_y <= 0.0 {
        return Ok(0.0);
    }
    Ok((cov.max(0.0) / (var_x * var_y).sqrt()).sqrt())
}

/// Distance correlation on at most [`ADC_CAP`] rows drawn uniformly without
/// replacement. Returns the value and the number of rows used.
pub fn distance_correlation_sampled(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, seed: u64) -> Result<(f64, usize)> {
    let n = x.nrows();
    if n <= ADC_CAP {
        return Ok((distance_correlation(x, y)?, n));
    }
    if y.nrows() != n {
        return Err(Error::Shape(format!("views have {n} and {} rows", y.nrows())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = index::sample(&mut rng, n, ADC_CAP).into_vec();
    rows.sort_unstable();
    let xs = x.select(Axis(0), &rows);
    let ys = y.select(Axis(0), &rows);
    Ok((distance_correlation(xs.view(), ys.view())?, ADC_CAP))
}

/// Entries `(row, col)` with `|x − μ_col| / σ_col > tau`, using the
/// population deviation; constant columns contribute nothing.
pub fn outlier_entries(x: ArrayView2<'_, f64>, tau: f64) -> Vec<(usize, usize)> {
    let n = x.nrows() as f64;
    let per_col: Vec<Vec<usize>> = x
        .axis_iter(Axis(1))
        .into_par_iter()
        .map(|col| {
            // the rounded mean of a constant column need not equal its value
            if col.iter().all(|&v| v == col[0]) {
                return Vec::new();
            }
            let mu = col.sum() / n;
            let sigma = (col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n).sqrt();
            col.iter()
                .enumerate()
                .filter(|(_, v)| ((*v - mu) / sigma).abs() > tau)
                .map(|(r, _)| r)
                .collect()
        })
        .collect();
    let mut out: Vec<(usize, usize)> = per_col
        .into_iter()
        .enumerate()
        .flat_map(|(c, rows)| rows.into_iter().map(move |r| (r, c)))
        .collect();
    out.sort_unstable();
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutlierReport {
    pub modality: String,
    pub tau: f64,
    pub pct_nodes_with_outlier: f64,
    pub pct_features_with_outlier: f64,
    pub nodes_with_outlier: usize,
    pub features_with_outlier: usize,
    pub outlier_entries: usize,
    pub nodes: usize,
    pub features: usize,
}

pub fn zscore_outliers(modality: &str, x: ArrayView2<'_, f64>, tau: f64) -> OutlierReport {
    let (n, d) = x.dim();
    let entries = outlier_entries(x, tau);
    let mut row_hit = vec![false; n];
    let mut col_hit = vec![false; d];
    for &(r, c) in &entries {
        row_hit[r] = true;
        col_hit[c] = true;
    }
    let nodes = row_hit.iter().filter(|&&b| b).count();
    let feats = col_hit.iter().filter(|&&b| b).count();
    let pct = |k: usize, of: usize| if of == 0 { 0.0 } else { 100.0 * k as f64 / of as f64 };
    OutlierReport {
        modality: modality.to_string(),
        tau,
        pct_nodes_with_outlier: pct(nodes, n),
        pct_features_with_outlier: pct(feats, d),
        nodes_with_outlier: nodes,
        features_with_outlier: feats,
        outlier_entries: entries.len(),
        nodes: n,
        features: d,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairCorrelation {
    pub first: String,
    pub second: String,
    pub adc: f64,
    pub rows_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsReport {
    pub pairs: Vec<PairCorrelation>,
    /// Mean over all unordered modality pairs; absent with one modality.
    pub average_adc: Option<f64>,
    pub outliers: Vec<OutlierReport>,
}

/// Distance correlation for every modality pair plus the outlier census.
pub fn diagnose(graph: &MultimodalGraph, tau: f64, seed: u64) -> Result<DiagnosticsReport> {
    let feats: Vec<_> = graph.modalities().iter().map(|m| (m.name.clone(), m.to_f64())).collect();
    let mut pairs = Vec::new();
    for i in 0..feats.len() {
        for j in i + 1..feats.len() {
            let (adc, rows_used) = distance_correlation_sampled(feats[i].1.view(), feats[j].1.view(), seed)?;
            pairs.push(PairCorrelation {
                first: feats[i].0.clone(),
                second: feats[j].0.clone(),
                adc,
                rows_used,
            });
        }
    }
    let average_adc = (!pairs.is_empty()).then(|| pairs.iter().map(|p| p.adc).sum::<f64>() / pairs.len() as f64);
    let outliers = feats.iter().map(|(name, x)| zscore_outliers(name, x.view(), tau)).collect();
    Ok(DiagnosticsReport {
        pairs,
        average_adc,
        outliers,
    })
}
