//! Dense spectral verification of the node- and feature-domain filters.

use ndarray::{Array2, ArrayView2, Axis};
use serde::Serialize;

use super::{
    average_shift, dual_filter, exact_solution, ideal_response, node_filter, spectral_response,
    DualFilterConfig, FeatureShift, DENSE_CAP,
};
use crate::dense::{self, symmetric_eigen};
use crate::error::{Error, Result};
use crate::graph::{laplacian, NormalizedOperators};

/// Relative slack granted to floating-point comparisons against closed-form bounds.
const BOUND_SLACK: f64 = 1e-9;
/// Tolerance on the trace / spectral-energy identity.
pub const ENERGY_TOL: f64 = 1e-8;
/// Slack on the per-step truncation-error ratio.
pub const RATIO_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct ResponseRow {
    pub lambda: f64,
    pub response_exact: f64,
    pub response_truncated: f64,
    pub error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TruncationRow {
    pub t: usize,
    /// `‖(F_L^(T) − F_L) Z‖_F / ‖Z‖_F` for the scaled node filter.
    pub node_error: f64,
    /// `max_k h(λ_k) |α(1−λ_k)/(α+1)|^{T+1}`.
    pub node_bound: f64,
    /// Relative Frobenius error of the truncated dual filter against the closed form.
    pub dual_error: f64,
    /// Per-component relative bound `A + B + AB` for the dual filter.
    pub dual_bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyCheck {
    pub node_trace: f64,
    pub node_spectral: f64,
    pub node_relative_error: f64,
    pub feature_trace: f64,
    pub feature_spectral: f64,
    pub feature_relative_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Verdicts {
    pub node_lowpass_monotone: bool,
    pub feature_lowpass_monotone: bool,
    pub truncation_within_bound: bool,
    pub node_error_monotone: bool,
    pub node_error_ratio: bool,
    pub dual_error_monotone: bool,
    pub dual_error_within_bound: bool,
    pub energy_identity: bool,
}

impl Verdicts {
    pub fn all(&self) -> bool {
        self.node_lowpass_monotone
            && self.feature_lowpass_monotone
            && self.truncation_within_bound
            && self.node_error_monotone
            && self.node_error_ratio
            && self.dual_error_monotone
            && self.dual_error_within_bound
            && self.energy_identity
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectraReport {
    pub alpha: f64,
    pub beta: f64,
    pub t_layers: usize,
    pub node: Vec<ResponseRow>,
    pub feature: Vec<ResponseRow>,
    pub truncation: Vec<TruncationRow>,
    /// Largest observed `dual_error(T+1) / dual_error(T)`.
    pub max_dual_ratio: f64,
    /// Largest observed `node_error(T+1) / node_error(T)`.
    pub max_node_ratio: f64,
    pub energy: EnergyCheck,
    pub verdicts: Verdicts,
}

impl SpectraReport {
    /// CSV with columns `lambda,response_exact,response_truncated,error`.
    pub fn response_csv(rows: &[ResponseRow]) -> String {
        let mut out = String::from("lambda,response_exact,response_truncated,error\n");
        for r in rows {
            out.push_str(&format!(
                "{:.17e},{:.17e},{:.17e},{:.17e}\n",
                r.lambda, r.response_exact, r.response_truncated, r.error
            ));
        }
        out
    }

    pub fn truncation_csv(&self) -> String {
        let mut out = String::from("t,node_error,node_bound,dual_error,dual_bound\n");
        for r in &self.truncation {
            out.push_str(&format!(
                "{},{:.17e},{:.17e},{:.17e},{:.17e}\n",
                r.t, r.node_error, r.node_bound, r.dual_error, r.dual_bound
            ));
        }
        out
    }
}

fn response_rows(eigenvalues: &[f64], coef: f64, t_layers: usize) -> Vec<ResponseRow> {
    eigenvalues
        .iter()
        .map(|&lambda| {
            let exact = ideal_response(coef, lambda);
            let truncated = spectral_response(coef, t_layers, lambda);
            ResponseRow {
                lambda,
                response_exact: exact,
                response_truncated: truncated,
                error: (truncated - exact).abs(),
            }
        })
        .collect()
}

fn non_increasing(rows: &[ResponseRow]) -> bool {
    rows.windows(2)
        .all(|w| w[1].response_exact <= w[0].response_exact)
}

fn within_pointwise_bound(rows: &[ResponseRow], coef: f64, t_layers: usize) -> bool {
    let ratio = (coef / (coef + 1.0)).powi(t_layers as i32 + 1);
    rows.iter().all(|r| {
        let lambda = r.lambda.clamp(0.0, 2.0);
        let err = (spectral_response(coef, t_layers, lambda) - ideal_response(coef, lambda)).abs();
        err <= ideal_response(coef, lambda) * ratio * (1.0 + BOUND_SLACK) + f64::EPSILON
    })
}

/// `Σ_k λ_k ‖row_k(Vᵀ X)‖²`, i.e. `‖Λ^{1/2} Vᵀ X‖_F²` without taking square
/// roots of (possibly round-off negative) eigenvalues.
fn spectral_energy(eigenvalues: &[f64], vectors: &Array2<f64>, x: ArrayView2<'_, f64>) -> f64 {
    let coords = vectors.t().dot(&x);
    coords
        .axis_iter(Axis(0))
        .zip(eigenvalues)
        .map(|(row, &lambda)| lambda * row.dot(&row))
        .sum()
}

fn rel(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Runs all dense spectral checks on one instance.
///
/// Per-eigenvalue responses use `cfg.t_layers`; the truncation table sweeps
/// `T = 1..=t_max`. Requires `n ≤ 2000`.
pub fn spectra_report(
    ops: &NormalizedOperators,
    z: ArrayView2<'_, f64>,
    shifts: &[FeatureShift],
    cfg: &DualFilterConfig,
    t_max: usize,
) -> Result<SpectraReport> {
    cfg.validate()?;
    let n = ops.n();
    if n > DENSE_CAP {
        return Err(Error::TooLarge { n, cap: DENSE_CAP });
    }
    let (alpha, beta, t_layers) = (cfg.alpha, cfg.beta, cfg.t_layers);

    let l = laplacian(ops).to_dense();
    let (lambdas, v) = symmetric_eigen(&l);
    let s_bar = average_shift(shifts)?;
    let d = s_bar.nrows();
    let l_feat = Array2::eye(d) - &s_bar;
    let (omegas, u) = symmetric_eigen(&l_feat);

    let node = response_rows(&lambdas, alpha, t_layers);
    let feature = response_rows(&omegas, beta, t_layers);

    // Node-only truncation error against the dense resolvent.
    let node_exact = exact_solution(ops, z, &[], alpha, 0.0)?;
    let dual_exact = exact_solution(ops, z, shifts, alpha, beta)?;
    let z_norm = dense::frobenius(z);
    let node_ratio = cfg.node_ratio();
    let rho_node = lambdas
        .iter()
        .fold(0.0f64, |m, l| m.max((1.0 - l).abs()))
        .min(1.0);
    let rho_feat = 1.0 - omegas.first().copied().unwrap_or(0.0);
    let mut truncation = Vec::with_capacity(t_max);
    for t in 1..=t_max {
        let node_trunc = node_filter(ops, z, node_ratio, t) / (alpha + 1.0);
        let node_error = dense::frobenius((&node_trunc - &node_exact).view()) / z_norm.max(f64::MIN_POSITIVE);
        let node_bound = lambdas
            .iter()
            .map(|&lambda| {
                let lambda = lambda.clamp(0.0, 2.0);
                ideal_response(alpha, lambda) * (alpha * (1.0 - lambda) / (alpha + 1.0)).abs().powi(t as i32 + 1)
            })
            .fold(0.0f64, f64::max);
        let h = dual_filter(ops, z, shifts, &DualFilterConfig { t_layers: t, ..*cfg })?;
        let dual_error = dense::relative_error(h.view(), dual_exact.view());
        let a = (node_ratio * rho_node).powi(t as i32 + 1);
        let b = (cfg.feature_ratio() * rho_feat.clamp(0.0, 1.0)).powi(t as i32 + 1);
        truncation.push(TruncationRow {
            t,
            node_error,
            node_bound,
            dual_error,
            dual_bound: a + b + a * b,
        });
    }
    let step_ratio = |get: fn(&TruncationRow) -> f64| {
        truncation
            .windows(2)
            .filter(|w| get(&w[0]) > 0.0)
            .map(|w| get(&w[1]) / get(&w[0]))
            .fold(0.0f64, f64::max)
    };
    let max_dual_ratio = step_ratio(|r| r.dual_error);
    let max_node_ratio = step_ratio(|r| r.node_error);

    // Energy identity on the filtered output.
    let h = dual_filter(ops, z, shifts, cfg)?;
    let node_trace = alpha * (h.t().dot(&l.dot(&h))).diag().sum();
    let node_spectral = alpha * spectral_energy(&lambdas, &v, h.view());
    let feature_trace = beta * (h.dot(&l_feat).dot(&h.t())).diag().sum();
    let feature_spectral = beta * spectral_energy(&omegas, &u, h.t());
    let energy = EnergyCheck {
        node_trace,
        node_spectral,
        node_relative_error: rel(node_trace, node_spectral),
        feature_trace,
        feature_spectral,
        feature_relative_error: rel(feature_trace, feature_spectral),
    };

    let monotone = |get: fn(&TruncationRow) -> f64| {
        truncation
            .windows(2)
            .all(|w| get(&w[1]) <= get(&w[0]) * (1.0 + BOUND_SLACK) + 1e-15)
    };
    let verdicts = Verdicts {
        node_lowpass_monotone: non_increasing(&node),
        feature_lowpass_monotone: non_increasing(&feature),
        truncation_within_bound: within_pointwise_bound(&node, alpha, t_layers)
            && within_pointwise_bound(&feature, beta, t_layers)
            && truncation
                .iter()
                .all(|r| r.node_error <= r.node_bound * (1.0 + BOUND_SLACK) + 1e-15),
        node_error_monotone: monotone(|r| r.node_error),
        node_error_ratio: max_node_ratio <= node_ratio + RATIO_SLACK,
        dual_error_monotone: monotone(|r| r.dual_error),
        dual_error_within_bound: truncation
            .iter()
            .all(|r| r.dual_error <= r.dual_bound * (1.0 + BOUND_SLACK) + 1e-15),
        energy_identity: energy.node_relative_error <= ENERGY_TOL
            && energy.feature_relative_error <= ENERGY_TOL,
    };

    Ok(SpectraReport {
        alpha,
        beta,
        t_layers,
        node,
        feature,
        truncation,
        max_dual_ratio,
        max_node_ratio,
        energy,
        verdicts,
    })
}
