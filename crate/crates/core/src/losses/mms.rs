use ndarray::{Array2, ArrayView2};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{check_same_shape, gather, log_sum_exp, scatter};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PairLoss {
    pub loss: f64,
    pub grad_a: Array2<f64>,
    pub grad_b: Array2<f64>,
}

/// Negative rows for each anchor: every other row when `n − 1 ≤ cap`,
/// otherwise `cap` distinct rows drawn uniformly from one seeded stream.
pub fn mms_negatives(n: usize, cap: usize, seed: u64) -> Vec<Vec<usize>> {
    if n <= cap + 1 {
        return (0..n).map(|l| (0..n).filter(|&k| k != l).collect()).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|l| {
            let mut picks: Vec<usize> = index::sample(&mut rng, n - 1, cap)
                .into_iter()
                .map(|k| if k >= l { k + 1 } else { k })
                .collect();
            picks.sort_unstable();
            picks
        })
        .collect()
}

struct RowTerms {
    loss: f64,
    /// derivative with respect to the margin-shifted positive score
    d_pos: f64,
    w_first: Vec<(usize, f64)>,
    w_second: Vec<(usize, f64)>,
}

/// Row terms from the two score lists, each holding the margin-shifted
/// positive first and then one score per negative.
fn row_terms(negs: &[usize], first: &[f64], second: &[f64], inv_n: f64) -> RowTerms {
    let p = first[0];
    let lse1 = log_sum_exp(first);
    let lse2 = log_sum_exp(second);
    let weights = |scores: &[f64], lse: f64| -> Vec<(usize, f64)> {
        negs.iter()
            .zip(&scores[1..])
            .map(|(&k, s)| (k, inv_n * (s - lse).exp()))
            .collect()
    };
    RowTerms {
        loss: (lse1 - p) + (lse2 - p),
        d_pos: inv_n * ((p - lse1).exp() - 1.0 + (p - lse2).exp() - 1.0),
        w_first: weights(first, lse1),
        w_second: weights(second, lse2),
    }
}

/// Up to this many rows the pair loss is evaluated with dense `n × n` score and
/// weight matrices; beyond it, through per-row negative lists.
pub const DENSE_ROWS: usize = 2048;

/// Margin softmax in both directions:
///
/// `−(1/n) Σ_ℓ [ log e^{p_ℓ} / (e^{p_ℓ} + Σ_k e^{a_k·b_ℓ}) + log e^{p_ℓ} / (e^{p_ℓ} + Σ_k e^{a_ℓ·b_k}) ]`
///
/// with `p_ℓ = a_ℓ·b_ℓ − δ` and `k` running over the negatives of row `ℓ`.
pub(crate) fn mms_with_negatives(
    a: ArrayView2<'_, f64>,
    b: ArrayView2<'_, f64>,
    delta: f64,
    negatives: &[Vec<usize>],
) -> PairLoss {
    if a.nrows() <= DENSE_ROWS {
        mms_dense(a, b, delta, negatives)
    } else {
        mms_sparse(a, b, delta, negatives)
    }
}

fn mms_sparse(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, delta: f64, negatives: &[Vec<usize>]) -> PairLoss {
    let n = a.nrows();
    let inv_n = 1.0 / n.max(1) as f64;
    let rows: Vec<RowTerms> = (0..n)
        .into_par_iter()
        .map(|l| {
            let (al, bl) = (a.row(l), b.row(l));
            let p = al.dot(&bl) - delta;
            let negs = &negatives[l];
            let mut first = Vec::with_capacity(negs.len() + 1);
            let mut second = Vec::with_capacity(negs.len() + 1);
            first.push(p);
            second.push(p);
            for &k in negs {
                first.push(a.row(k).dot(&bl));
                second.push(al.dot(&b.row(k)));
            }
            row_terms(negs, &first, &second, inv_n)
        })
        .collect();

    let loss = rows.iter().map(|r| r.loss).sum::<f64>() * inv_n;
    let d_pos: Vec<f64> = rows.iter().map(|r| r.d_pos).collect();
    let (first, second): (Vec<_>, Vec<_>) = rows.into_iter().map(|r| (r.w_first, r.w_second)).unzip();

    let mut grad_a = gather(&second, b) + scatter(&first, b, n);
    let mut grad_b = gather(&first, a) + scatter(&second, a, n);
    for (l, &dp) in d_pos.iter().enumerate() {
        grad_a.row_mut(l).scaled_add(dp, &b.row(l));
        grad_b.row_mut(l).scaled_add(dp, &a.row(l));
    }
    PairLoss { loss, grad_a, grad_b }
}

/// Same quantity as [`mms_sparse`], with the gradients collapsed into one
/// weight matrix `M` so that `∂/∂A = M B` and `∂/∂B = Mᵀ A`.
fn mms_dense(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, delta: f64, negatives: &[Vec<usize>]) -> PairLoss {
    let n = a.nrows();
    let inv_n = 1.0 / n.max(1) as f64;
    let scores = a.dot(&b.t());
    let rows: Vec<RowTerms> = (0..n)
        .into_par_iter()
        .map(|l| {
            let p = scores[[l, l]] - delta;
            let negs = &negatives[l];
            let mut first = Vec::with_capacity(negs.len() + 1);
            let mut second = Vec::with_capacity(negs.len() + 1);
            first.push(p);
            second.push(p);
            for &k in negs {
                first.push(scores[[k, l]]);
                second.push(scores[[l, k]]);
            }
            row_terms(negs, &first, &second, inv_n)
        })
        .collect();
    let mut m = Array2::<f64>::zeros((n, n));
    let mut loss = 0.0;
    for (l, r) in rows.iter().enumerate() {
        loss += r.loss;
        m[[l, l]] += r.d_pos;
        for &(k, w) in &r.w_second {
            m[[l, k]] += w;
        }
        for &(k, w) in &r.w_first {
            m[[k, l]] += w;
        }
    }
    PairLoss {
        loss: loss * inv_n,
        grad_a: m.dot(&b),
        grad_b: m.t().dot(&a),
    }
}

/// Margin softmax loss between two aligned embeddings of the same nodes.
pub fn mms_loss(
    z_a: ArrayView2<'_, f64>,
    z_b: ArrayView2<'_, f64>,
    delta: f64,
    negative_cap: usize,
    seed: u64,
) -> Result<PairLoss> {
    check_same_shape(z_a, z_b)?;
    let negatives = mms_negatives(z_a.nrows(), negative_cap, seed);
    Ok(mms_with_negatives(z_a, z_b, delta, &negatives))
}

/// Sum of the margin softmax loss over all ordered pairs of distinct inputs.
///
/// All pairs share one negative set. With shared negatives the loss is
/// symmetric in its two arguments, so each unordered pair is evaluated once
/// and counted twice.
pub fn cross_modality_loss(
    z_list: &[ArrayView2<'_, f64>],
    delta: f64,
    cap: usize,
    seed: u64,
) -> Result<(f64, Vec<Array2<f64>>)> {
    if z_list.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "cross-modality loss needs at least 2 embeddings, got {}",
            z_list.len()
        )));
    }
    for z in &z_list[1..] {
        check_same_shape(z_list[0], *z)?;
    }
    let negatives = mms_negatives(z_list[0].nrows(), cap, seed);
    let mut total = 0.0;
    let mut grads: Vec<Array2<f64>> = z_list.iter().map(|z| Array2::zeros(z.dim())).collect();
    for i in 0..z_list.len() {
        for j in i + 1..z_list.len() {
            let pair = mms_with_negatives(z_list[i], z_list[j], delta, &negatives);
            total += 2.0 * pair.loss;
            grads[i].scaled_add(2.0, &pair.grad_a);
            grads[j].scaled_add(2.0, &pair.grad_b);
        }
    }
    Ok((total, grads))
}

/// Reference evaluation straight from the formula, without gradients.
#[cfg(test)]
pub(crate) fn mms_reference(a: &Array2<f64>, b: &Array2<f64>, delta: f64, negatives: &[Vec<usize>]) -> f64 {
    let n = a.nrows();
    let mut total = 0.0;
    for l in 0..n {
        let pos = (a.row(l).dot(&b.row(l)) - delta).exp();
        let mut d1 = pos;
        let mut d2 = pos;
        for &k in &negatives[l] {
            d1 += a.row(k).dot(&b.row(l)).exp();
            d2 += a.row(l).dot(&b.row(k)).exp();
        }
        total += -(pos / d1).ln() - (pos / d2).ln();
    }
    total / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::normalize_rows;
    use crate::losses::testutil::{fd_check, random};
    use ndarray::array;

    #[test]
    fn single_row_has_zero_loss() {
        let a = array![[0.3, 0.4]];
        let r = mms_loss(a.view(), a.view(), 0.1, 256, 0).unwrap();
        assert_eq!(r.loss, 0.0);
        assert!(r.grad_a.iter().chain(r.grad_b.iter()).all(|&g| g == 0.0));
    }

    #[test]
    fn two_orthonormal_rows() {
        let z = array![[1.0, 0.0], [0.0, 1.0]];
        let r = mms_loss(z.view(), z.view(), 0.0, 256, 0).unwrap();
        let e = std::f64::consts::E;
        // each row: two terms of -log(e / (e + 1)), averaged over 2 rows
        let expected = 2.0 * -(e / (e + 1.0)).ln();
        assert!((r.loss - expected).abs() < 1e-12);
        assert!((r.loss - 0.62652).abs() < 1e-5);
    }

    #[test]
    fn matches_reference_and_is_nonnegative() {
        for seed in 0..5 {
            let (a, _) = normalize_rows(random(9, 4, seed).view());
            let (b, _) = normalize_rows(random(9, 4, seed + 100).view());
            for cap in [3, 256] {
                let negatives = mms_negatives(9, cap, seed);
                let r = mms_with_negatives(a.view(), b.view(), 0.1, &negatives);
                let reference = mms_reference(&a, &b, 0.1, &negatives);
                assert!((r.loss - reference).abs() < 1e-12);
                assert!(r.loss >= 0.0);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let a = random(6, 4, 1);
        let b = random(6, 4, 2);
        let negatives = mms_negatives(6, 256, 0);
        let r = mms_with_negatives(a.view(), b.view(), 0.1, &negatives);
        let err_a = fd_check(&a, &r.grad_a, 1e-4, |x| mms_reference(x, &b, 0.1, &negatives));
        let err_b = fd_check(&b, &r.grad_b, 1e-4, |x| mms_reference(&a, x, 0.1, &negatives));
        assert!(err_a <= 1e-4 && err_b <= 1e-4, "{err_a} {err_b}");

        let capped = mms_negatives(6, 2, 9);
        let r = mms_with_negatives(a.view(), b.view(), 0.1, &capped);
        let err_a = fd_check(&a, &r.grad_a, 1e-4, |x| mms_reference(x, &b, 0.1, &capped));
        assert!(err_a <= 1e-4, "{err_a}");
    }

    #[test]
    fn dense_and_sparse_paths_agree() {
        let a = random(40, 5, 3);
        let b = random(40, 5, 4);
        for cap in [6, 256] {
            let negatives = mms_negatives(40, cap, 1);
            let d = mms_dense(a.view(), b.view(), 0.2, &negatives);
            let s = mms_sparse(a.view(), b.view(), 0.2, &negatives);
            assert!((d.loss - s.loss).abs() < 1e-12);
            let diff = (&d.grad_a - &s.grad_a).mapv(f64::abs).sum() + (&d.grad_b - &s.grad_b).mapv(f64::abs).sum();
            assert!(diff < 1e-12, "{diff}");
        }
    }

    #[test]
    fn sampled_negatives_are_distinct_and_exclude_anchor() {
        let negs = mms_negatives(50, 7, 3);
        for (l, list) in negs.iter().enumerate() {
            assert_eq!(list.len(), 7);
            assert!(!list.contains(&l));
            let mut d = list.clone();
            d.dedup();
            assert_eq!(d.len(), 7);
        }
        assert_eq!(negs, mms_negatives(50, 7, 3));
    }

    #[test]
    fn cross_modality_sums_ordered_pairs() {
        let zs: Vec<Array2<f64>> = (0..3).map(|s| random(4, 3, 20 + s)).collect();
        let views: Vec<_> = zs.iter().map(|z| z.view()).collect();
        let (total, grads) = cross_modality_loss(&views, 0.1, 256, 0).unwrap();
        let negatives = mms_negatives(4, 256, 0);
        let mut expected = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    expected += mms_reference(&zs[i], &zs[j], 0.1, &negatives);
                }
            }
        }
        assert!((total - expected).abs() < 1e-12);
        for (i, g) in grads.iter().enumerate() {
            let err = fd_check(&zs[i], g, 1e-4, |x| {
                let mut all = zs.clone();
                all[i] = x.clone();
                let mut s = 0.0;
                for p in 0..3 {
                    for q in 0..3 {
                        if p != q {
                            s += mms_reference(&all[p], &all[q], 0.1, &negatives);
                        }
                    }
                }
                s
            });
            assert!(err <= 1e-4, "{err}");
        }
    }

    #[test]
    fn two_inputs_equal_both_directions() {
        let z0 = random(5, 3, 1);
        let z1 = random(5, 3, 2);
        let (total, _) = cross_modality_loss(&[z0.view(), z1.view()], 0.1, 256, 4).unwrap();
        let ab = mms_loss(z0.view(), z1.view(), 0.1, 256, 4).unwrap().loss;
        let ba = mms_loss(z1.view(), z0.view(), 0.1, 256, 4).unwrap().loss;
        assert!((total - (ab + ba)).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let z = random(3, 2, 0);
        assert!(cross_modality_loss(&[z.view()], 0.1, 8, 0).is_err());
        let w = random(3, 3, 0);
        assert!(mms_loss(z.view(), w.view(), 0.1, 8, 0).is_err());
    }
}
