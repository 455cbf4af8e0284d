//! Dense linear-algebra helpers shared by the oracle paths and the trainer.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};

use crate::error::{Error, Result};

pub(crate) fn to_nalgebra(a: ArrayView2<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |r, c| a[[r, c]])
}

pub(crate) fn from_nalgebra(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(r, c)| m[(r, c)])
}

/// Eigen-decomposition of a symmetric matrix.
///
/// Returns eigenvalues in ascending order and the matching orthonormal
/// eigenvectors as columns.
pub fn symmetric_eigen(a: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    assert_eq!(a.nrows(), a.ncols(), "symmetric_eigen needs a square matrix");
    let eig = to_nalgebra(a.view()).symmetric_eigen();
    let mut order: Vec<usize> = (0..a.nrows()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = Array2::from_shape_fn(a.dim(), |(r, c)| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Solves `a · x = b` by LU with partial pivoting.
pub fn solve(a: &Array2<f64>, b: &Array2<f64>) -> Result<Array2<f64>> {
    let lu = to_nalgebra(a.view()).lu();
    lu.solve(&to_nalgebra(b.view()))
        .map(|x| from_nalgebra(&x))
        .ok_or_else(|| Error::InvalidArgument("singular system".into()))
}

pub fn frobenius(a: ArrayView2<'_, f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Relative Frobenius distance `‖a − b‖ / ‖b‖` (absolute when `b` is zero).
pub fn relative_error(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> f64 {
    let diff = frobenius((&a - &b).view());
    let base = frobenius(b);
    if base == 0.0 {
        diff
    } else {
        diff / base
    }
}

/// Row-wise L2 normalization. Returns the normalized matrix and the original
/// row norms; zero rows stay zero.
pub fn normalize_rows(x: ArrayView2<'_, f64>) -> (Array2<f64>, Array1<f64>) {
    let norms: Array1<f64> = x.axis_iter(Axis(0)).map(|r| r.dot(&r).sqrt()).collect();
    let mut out = x.to_owned();
    Zip::from(out.axis_iter_mut(Axis(0)))
        .and(&norms)
        .for_each(|mut row, &norm| {
            if norm > 0.0 {
                row /= norm;
            }
        });
    (out, norms)
}

/// Pulls a gradient with respect to L2-normalized rows back to the raw rows:
/// `dx = (dy − y (y·dy)) / ‖x‖`.
pub fn normalize_rows_backward(
    normalized: ArrayView2<'_, f64>,
    norms: &Array1<f64>,
    grad_normalized: ArrayView2<'_, f64>,
) -> Array2<f64> {
    let mut out = grad_normalized.to_owned();
    Zip::from(out.axis_iter_mut(Axis(0)))
        .and(normalized.axis_iter(Axis(0)))
        .and(norms)
        .for_each(|mut g, y, &norm| {
            if norm > 0.0 {
                let proj = y.dot(&g);
                g.scaled_add(-proj, &y);
                g /= norm;
            } else {
                g.fill(0.0);
            }
        });
    out
}
