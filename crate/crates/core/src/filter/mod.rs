//! Feature-domain shift operators and the truncated dual graph filter.
//!
//! The node-domain factor `Σ_{t≤T} (α/(α+1) Â)^t` is applied on the left of
//! the feature matrix and the feature-domain factor `Σ_{t≤T} (β/(β+1) S̄)^t`
//! on the right, with `S̄` the mean of the per-modality shift operators. Both
//! factors are evaluated by Horner-style accumulation, so no matrix power is
//! ever formed.

mod spectra;

pub use spectra::{spectra_report, EnergyCheck, ResponseRow, SpectraReport, TruncationRow, Verdicts};

use ndarray::{Array2, ArrayView2, Axis};

use crate::dense;
use crate::error::{Error, Result};
use crate::graph::NormalizedOperators;
use crate::sparse::LinearOperator;

/// Largest node count accepted by the dense oracle paths.
pub const DENSE_CAP: usize = 2000;

/// Symmetric, positive semidefinite affinity among the `d` feature
/// dimensions of one modality.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureShift {
    pub s: Array2<f64>,
    pub modality_index: usize,
    /// Row sums `r_j = Σ_x K_{j,x}` of the exponential kernel.
    pub kernel_row_sums: Vec<f64>,
}

impl FeatureShift {
    pub fn dim(&self) -> usize {
        self.s.nrows()
    }

    /// `v_j = sqrt(r_j)`, the positive eigenvector with eigenvalue one.
    pub fn perron_vector(&self) -> Vec<f64> {
        self.kernel_row_sums.iter().map(|r| r.sqrt()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualFilterConfig {
    pub alpha: f64,
    pub beta: f64,
    pub t_layers: usize,
}

impl DualFilterConfig {
    pub fn new(alpha: f64, beta: f64, t_layers: usize) -> Result<Self> {
        let cfg = Self {
            alpha,
            beta,
            t_layers,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidArgument(format!("beta must be >= 0, got {}", self.beta)));
        }
        if self.t_layers == 0 {
            return Err(Error::InvalidArgument("t_layers must be >= 1".into()));
        }
        Ok(())
    }

    /// Overall prefactor `1 / ((α+1)(β+1))`.
    pub fn scale(&self) -> f64 {
        1.0 / ((self.alpha + 1.0) * (self.beta + 1.0))
    }

    pub fn node_ratio(&self) -> f64 {
        self.alpha / (self.alpha + 1.0)
    }

    pub fn feature_ratio(&self) -> f64 {
        self.beta / (self.beta + 1.0)
    }
}

/// Builds `S = D^{-1/2} K D^{-1/2}` with `K_{j,ℓ} = exp(z_jᵀ z_ℓ / √n)` over
/// the L2-normalized columns of `z`.
pub fn feature_shift(z: ArrayView2<'_, f64>, modality_index: usize) -> Result<FeatureShift> {
    let (n, d) = z.dim();
    if d == 0 {
        return Err(Error::InvalidArgument("feature_shift needs at least one column".into()));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("feature_shift input".into()));
    }
    let mut cols = z.to_owned();
    for mut col in cols.axis_iter_mut(Axis(1)) {
        let norm = col.dot(&col).sqrt();
        if norm > 0.0 {
            col /= norm;
        }
    }
    let scale = 1.0 / (n.max(1) as f64).sqrt();
    let kernel = cols.t().dot(&cols).mapv(|g| (g * scale).exp());
    let row_sums: Vec<f64> = kernel.rows().into_iter().map(|r| r.sum()).collect();
    if kernel.iter().any(|v| !v.is_finite()) || row_sums.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("feature kernel overflow".into()));
    }
    let inv_sqrt: Vec<f64> = row_sums.iter().map(|r| 1.0 / r.sqrt()).collect();
    let s = Array2::from_shape_fn((d, d), |(j, l)| kernel[[j, l]] * inv_sqrt[j] * inv_sqrt[l]);
    Ok(FeatureShift {
        s,
        modality_index,
        kernel_row_sums: row_sums,
    })
}

/// `S̄ = (1/m) Σ_i S^(i)`.
pub fn average_shift(shifts: &[FeatureShift]) -> Result<Array2<f64>> {
    let Some(first) = shifts.first() else {
        return Err(Error::InvalidArgument("no feature shifts given".into()));
    };
    let d = first.dim();
    let mut sum = Array2::zeros((d, d));
    for s in shifts {
        if s.dim() != d {
            return Err(Error::Shape(format!("shift {} is {}x{}, expected {d}x{d}", s.modality_index, s.dim(), s.dim())));
        }
        sum += &s.s;
    }
    Ok(sum / shifts.len() as f64)
}

/// `β/((β+1) m) Σ_i S^(i)`, the operator whose Neumann series forms the
/// feature-domain filter.
pub fn scaled_shift_sum(shifts: &[FeatureShift], beta: f64) -> Result<Array2<f64>> {
    Ok(average_shift(shifts)? * (beta / (beta + 1.0)))
}

/// `Σ_{t=0}^{T} (ratio · Â)^t · x`, evaluated as `acc ← x + ratio · Â acc`.
pub fn node_filter(a_hat: &NormalizedOperators, x: ArrayView2<'_, f64>, ratio: f64, t_layers: usize) -> Array2<f64> {
    let mut acc = x.to_owned();
    if ratio == 0.0 {
        return acc;
    }
    for _ in 0..t_layers {
        let mut next = a_hat.a_hat.matmul_dense(acc.view());
        next *= ratio;
        next += &x;
        acc = next;
    }
    acc
}

/// `x · Σ_{t=0}^{T} (ratio · S̄)^t`, evaluated as `acc ← x + ratio · acc S̄`.
pub fn feature_filter(x: ArrayView2<'_, f64>, s_bar: &Array2<f64>, ratio: f64, t_layers: usize) -> Array2<f64> {
    let mut acc = x.to_owned();
    if ratio == 0.0 {
        return acc;
    }
    let step = s_bar * ratio;
    for _ in 0..t_layers {
        let mut next = acc.dot(&step);
        next += &x;
        acc = next;
    }
    acc
}

/// Truncated dual graph filter
/// `H = 1/((α+1)(β+1)) · F_L · Z · F_R`.
///
/// `shifts` may be empty only when `β = 0`.
pub fn dual_filter(
    a_hat: &NormalizedOperators,
    z: ArrayView2<'_, f64>,
    shifts: &[FeatureShift],
    cfg: &DualFilterConfig,
) -> Result<Array2<f64>> {
    cfg.validate()?;
    if z.nrows() != a_hat.n() {
        return Err(Error::Shape(format!("z has {} rows, graph has {} nodes", z.nrows(), a_hat.n())));
    }
    let left = node_filter(a_hat, z, cfg.node_ratio(), cfg.t_layers);
    let mut h = if cfg.beta == 0.0 && shifts.is_empty() {
        left
    } else {
        let s_bar = average_shift(shifts)?;
        if s_bar.nrows() != z.ncols() {
            return Err(Error::Shape(format!("shift is {0}x{0}, z has {1} columns", s_bar.nrows(), z.ncols())));
        }
        feature_filter(left.view(), &s_bar, cfg.feature_ratio(), cfg.t_layers)
    };
    let scale = cfg.scale();
    if scale != 1.0 {
        h *= scale;
    }
    Ok(h)
}

/// Dense closed form
/// `1/((α+1)(β+1)) (I − α/(α+1) Â)^{-1} Z (I − β/((β+1)m) Σ S^(i))^{-1}`.
pub fn exact_solution(
    a_hat: &NormalizedOperators,
    z: ArrayView2<'_, f64>,
    shifts: &[FeatureShift],
    alpha: f64,
    beta: f64,
) -> Result<Array2<f64>> {
    let n = a_hat.n();
    if n > DENSE_CAP {
        return Err(Error::TooLarge { n, cap: DENSE_CAP });
    }
    if z.nrows() != n {
        return Err(Error::Shape(format!("z has {} rows, graph has {n} nodes", z.nrows())));
    }
    let left_op = Array2::eye(n) - a_hat.a_hat.to_dense() * (alpha / (alpha + 1.0));
    let left = dense::solve(&left_op, &z.to_owned())?;
    let right = if beta == 0.0 && shifts.is_empty() {
        left
    } else {
        let s_sum = scaled_shift_sum(shifts, beta)?;
        if s_sum.nrows() != z.ncols() {
            return Err(Error::Shape("shift dimension does not match z".into()));
        }
        let d = s_sum.nrows();
        let right_op = Array2::eye(d) - s_sum;
        // X M^{-1} = (M^{-T} X^T)^T
        dense::solve(&right_op.t().to_owned(), &left.t().to_owned())?.t().to_owned()
    };
    Ok(right / ((alpha + 1.0) * (beta + 1.0)))
}

/// Ideal low-pass response `h(λ) = 1 / (1 + αλ)`.
pub fn ideal_response(alpha: f64, lambda: f64) -> f64 {
    1.0 / (1.0 + alpha * lambda)
}

/// Response of the truncated node filter at Laplacian eigenvalue `λ`:
/// `h(λ) (1 − (α(1−λ)/(α+1))^{T+1})`.
pub fn spectral_response(alpha: f64, t_layers: usize, lambda: f64) -> f64 {
    let base = alpha * (1.0 - lambda) / (alpha + 1.0);
    ideal_response(alpha, lambda) * (1.0 - base.powi(t_layers as i32 + 1))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerIteration {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub const POWER_ITERS: usize = 200;
pub const POWER_TOL: f64 = 1e-8;

/// Power iteration from the all-ones vector; the estimate is the Rayleigh
/// quotient of the current iterate. Stops once successive estimates agree
/// to `tol` (relative to `max(1, |λ|)`).
pub fn dominant_eigenvalue(m: &dyn LinearOperator, iters: usize, tol: f64) -> PowerIteration {
    let dim = m.dim();
    if dim == 0 {
        return PowerIteration {
            value: 0.0,
            iterations: 0,
            converged: true,
        };
    }
    let mut x = vec![1.0 / (dim as f64).sqrt(); dim];
    let mut y = vec![0.0; dim];
    let mut prev = f64::NAN;
    for it in 1..=iters {
        m.apply(&x, &mut y);
        let value: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return PowerIteration {
                value: 0.0,
                iterations: it,
                converged: true,
            };
        }
        if (value - prev).abs() <= tol * value.abs().max(1.0) {
            return PowerIteration {
                value,
                iterations: it,
                converged: true,
            };
        }
        prev = value;
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / norm;
        }
    }
    PowerIteration {
        value: prev,
        iterations: iters,
        converged: false,
    }
}
