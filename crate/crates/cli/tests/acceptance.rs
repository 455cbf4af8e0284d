//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Run with `cargo test -p mmag-cli --test acceptance`; pass criterion numbers
//! after `--` to run a subset.

use std::collections::HashMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use mmag_core::datagen::{generate, SynthConfig};
use mmag_core::dense::symmetric_eigen;
use mmag_core::diagnostics::{distance_correlation, outlier_entries};
use mmag_core::filter::{
    dual_filter, exact_solution, feature_shift, ideal_response, scaled_shift_sum, spectra_report, spectral_response,
    DualFilterConfig, FeatureShift,
};
use mmag_core::graph::{laplacian, normalize_adjacency, ModalityFeatures, MultimodalGraph, NormalizedOperators};
use mmag_core::kmeans::kmeans_fit;
use mmag_core::losses::{
    community_loss, cross_modality_loss, hard_positive_sets, mms_loss, neighborhood_loss, sample_neighborhoods,
    PrunedGraph,
};
use mmag_core::metrics::{accuracy, ari, completeness, nmi, pairwise_f1};
use mmag_core::trainer::{fit, gradcheck, Ablations, TrainConfig, TrainingData};
use ndarray::{concatenate, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

// Pinned tolerances.
const FILTER_ERR_T10: f64 = 1e-3;
const STEP_RATIO: f64 = 0.5 + 1e-6;
const SHIFT_EIG_TOL: f64 = 1e-6;
const SPOT_TOL: f64 = 1e-12;
const ENERGY_TOL: f64 = 1e-8;
const LOSS_GRAD_TOL: f64 = 1e-4;
const E2E_GRAD_TOL: f64 = 1e-3;
const METRIC_TOL: f64 = 1e-12;
const NMI_GAIN: f64 = 0.10;
const FDD_GAIN: f64 = 0.02;
const RAW_NMI_CAP: f64 = 0.6;
const ADC_SELF_TOL: f64 = 1e-9;
const ADC_INDEPENDENT: f64 = 0.1;
const SPIKE_RECALL: f64 = 0.95;

/// Noise level of the end-to-end instance; raw K-Means NMI is checked to stay
/// at or below the cap before the comparison counts.
const E2E_NOISE_SIGMA: f64 = 1.0;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

fn random_ops(rng: &mut ChaCha8Rng, n: usize, avg_degree: f64) -> NormalizedOperators {
    let m = (n as f64 * avg_degree / 2.0) as usize;
    let edges: Vec<(usize, usize)> = (0..m).map(|_| (rng.random_range(0..n), rng.random_range(0..n))).collect();
    let x = ModalityFeatures::new("x", Array2::zeros((n, 1)));
    normalize_adjacency(&MultimodalGraph::new(n, edges, vec![x], None).unwrap())
}

fn shifts_for(rng: &mut ChaCha8Rng, n: usize, d: usize, m: usize) -> (Array2<f64>, Vec<FeatureShift>) {
    let zs: Vec<Array2<f64>> = (0..m).map(|_| random_matrix(rng, n, d)).collect();
    let shifts = zs.iter().enumerate().map(|(i, z)| feature_shift(z.view(), i).unwrap()).collect();
    let z = zs.iter().fold(Array2::zeros((n, d)), |acc, zi| acc + zi) / m as f64;
    (z, shifts)
}

fn frob(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn rel(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    frob(&(a - b)) / frob(b).max(1e-300)
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn filter_correctness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut worst_t10, mut worst_ratio, mut node_ratio, mut monotone) = (0.0f64, 0.0f64, 0.0f64, true);
    for _ in 0..20 {
        let n = rng.random_range(20..=200);
        let d = rng.random_range(2..=32);
        let ops = random_ops(&mut rng, n, 6.0);
        let (z, shifts) = shifts_for(&mut rng, n, d, 2);
        let exact = exact_solution(&ops, z.view(), &shifts, 1.0, 1.0).unwrap();
        let errors: Vec<f64> = (1..=30)
            .map(|t| {
                let cfg = DualFilterConfig::new(1.0, 1.0, t).unwrap();
                rel(&dual_filter(&ops, z.view(), &shifts, &cfg).unwrap(), &exact)
            })
            .collect();
        worst_t10 = worst_t10.max(errors[9]);
        let node_exact = exact_solution(&ops, z.view(), &shifts, 1.0, 0.0).unwrap();
        let node_errors: Vec<f64> = (1..=30)
            .map(|t| {
                let cfg = DualFilterConfig::new(1.0, 0.0, t).unwrap();
                rel(&dual_filter(&ops, z.view(), &shifts, &cfg).unwrap(), &node_exact)
            })
            .collect();
        for w in node_errors.windows(2) {
            node_ratio = node_ratio.max(w[1] / w[0]);
        }
        for w in errors.windows(2) {
            monotone &= w[1] < w[0];
            worst_ratio = worst_ratio.max(w[1] / w[0]);
        }
    }
    let elapsed = start.elapsed();
    let passed = worst_t10 <= FILTER_ERR_T10 && monotone && worst_ratio <= STEP_RATIO && elapsed.as_secs() < 10;
    outcome(
        passed,
        format!(
            "max err(T=10) {worst_t10:.3e} (<= {FILTER_ERR_T10:e}), monotone {monotone}, max step ratio {worst_ratio:.6} (<= {STEP_RATIO}), node-only ratio {node_ratio:.6}, {:.1}s",
            secs(elapsed)
        ),
    )
}

/// `S` built from its definition, independent of `feature_shift`.
fn shift_oracle(z: &Array2<f64>) -> (Array2<f64>, Vec<f64>) {
    let n = z.nrows() as f64;
    let mut c = z.clone();
    for mut col in c.columns_mut() {
        let norm = col.dot(&col).sqrt();
        if norm > 0.0 {
            col /= norm;
        }
    }
    let k = c.t().dot(&c).mapv(|v| (v / n.sqrt()).exp());
    let r: Vec<f64> = k.rows().into_iter().map(|row| row.sum()).collect();
    let s = Array2::from_shape_fn(k.dim(), |(i, j)| k[[i, j]] / (r[i] * r[j]).sqrt());
    (s, r)
}

fn shift_spectrum() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (mut min_eig, mut top_dev, mut residual, mut scaled_excess, mut oracle_gap) =
        (f64::INFINITY, 0.0f64, 0.0f64, f64::NEG_INFINITY, 0.0f64);
    for _ in 0..50 {
        let n = rng.random_range(5..=120);
        let d = rng.random_range(2..=24);
        let zs = [random_matrix(&mut rng, n, d), random_matrix(&mut rng, n, d)];
        let shifts: Vec<FeatureShift> = zs.iter().enumerate().map(|(i, z)| feature_shift(z.view(), i).unwrap()).collect();
        for (z, s) in zs.iter().zip(&shifts) {
            let (oracle, row_sums) = shift_oracle(z);
            oracle_gap = oracle_gap.max((&oracle - &s.s).mapv(f64::abs).fold(0.0, |a, &b| a.max(b)));
            let (vals, _) = symmetric_eigen(&s.s);
            min_eig = min_eig.min(vals[0]);
            top_dev = top_dev.max((vals[d - 1] - 1.0).abs());
            let mut v = ndarray::Array1::from_iter(row_sums.iter().map(|r| r.sqrt()));
            v /= v.dot(&v).sqrt();
            residual = residual.max(frob(&(s.s.dot(&v) - &v).insert_axis(Axis(1))));
        }
        for beta in [0.1, 1.0, 10.0] {
            let (vals, _) = symmetric_eigen(&scaled_shift_sum(&shifts, beta).unwrap());
            scaled_excess = scaled_excess.max(vals[d - 1] - beta / (beta + 1.0));
        }
    }
    let elapsed = start.elapsed();
    let passed = min_eig >= -SHIFT_EIG_TOL
        && top_dev <= SHIFT_EIG_TOL
        && residual <= SHIFT_EIG_TOL
        && scaled_excess <= SHIFT_EIG_TOL
        && oracle_gap <= 1e-12
        && elapsed.as_secs() < 5;
    outcome(
        passed,
        format!(
            "min eig {min_eig:.2e}, |top-1| {top_dev:.2e}, perron residual {residual:.2e}, scaled-sum excess {scaled_excess:.2e}, oracle gap {oracle_gap:.1e}, {:.1}s",
            secs(elapsed)
        ),
    )
}

fn spectra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut verdicts_ok = true;
    for n in [60, 150, 300, 500] {
        let ops = random_ops(&mut rng, n, 8.0);
        let (z, shifts) = shifts_for(&mut rng, n, 16, 2);
        let cfg = DualFilterConfig::new(1.0, 1.0, 10).unwrap();
        let r = spectra_report(&ops, z.view(), &shifts, &cfg, 30).unwrap();
        verdicts_ok &= r.verdicts.node_lowpass_monotone && r.verdicts.feature_lowpass_monotone && r.verdicts.truncation_within_bound;
    }
    let mut grid_ok = true;
    let mut worst = 0.0f64;
    for alpha in [0.25, 1.0, 4.0] {
        let mut prev = f64::INFINITY;
        for i in 0..=2000 {
            let lambda = 2.0 * i as f64 / 2000.0;
            let h = ideal_response(alpha, lambda);
            let ht = spectral_response(alpha, 10, lambda);
            let bound = h * (alpha / (alpha + 1.0)).powi(11);
            // allow only floating-point rounding of the two evaluations
            grid_ok &= (ht - h).abs() <= bound + 4.0 * f64::EPSILON * h;
            grid_ok &= h <= prev;
            prev = h;
            worst = worst.max((ht - h).abs() / bound);
        }
    }
    let s0 = spectral_response(1.0, 10, 0.0);
    let s2 = spectral_response(1.0, 10, 2.0);
    let spots = (s0 - 0.99951171875).abs() <= SPOT_TOL && (s2 - 0.33349609375).abs() <= SPOT_TOL;
    outcome(
        verdicts_ok && grid_ok && spots,
        format!("report verdicts {verdicts_ok}, grid bound {grid_ok} (max err/bound {worst:.6}), h(0)={s0:.11}, h(2)={s2:.11}"),
    )
}

fn energy_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let n = rng.random_range(20..=150);
        let ops = random_ops(&mut rng, n, 5.0);
        let (z, shifts) = shifts_for(&mut rng, n, 8, 2);
        let alpha = rng.random_range(0.1..5.0);
        let h = dual_filter(&ops, z.view(), &shifts, &DualFilterConfig::new(alpha, 1.0, 10).unwrap()).unwrap();
        let l = laplacian(&ops);
        let trace = alpha * (&h * &l.matmul_dense(h.view())).sum();
        let (vals, vecs) = symmetric_eigen(&l.to_dense());
        let proj = vecs.t().dot(&h);
        let spectral: f64 = alpha * proj.rows().into_iter().zip(&vals).map(|(r, &lam)| lam * r.dot(&r)).sum::<f64>();
        worst = worst.max((trace - spectral).abs() / spectral.abs().max(1e-300));
    }
    outcome(worst <= ENERGY_TOL, format!("max relative gap {worst:.2e} (<= {ENERGY_TOL:e})"))
}

/// Norm-wise relative error of `grad` against central differences of `f`.
fn fd_error(x: &Array2<f64>, grad: &Array2<f64>, f: impl Fn(&Array2<f64>) -> f64) -> f64 {
    let h = 1e-5;
    let mut probe = x.clone();
    let mut fd = Array2::zeros(x.dim());
    for idx in 0..x.len() {
        let (r, c) = (idx / x.ncols(), idx % x.ncols());
        probe[[r, c]] = x[[r, c]] + h;
        let up = f(&probe);
        probe[[r, c]] = x[[r, c]] - h;
        let down = f(&probe);
        probe[[r, c]] = x[[r, c]];
        fd[[r, c]] = (up - down) / (2.0 * h);
    }
    rel(grad, &fd)
}

fn unit_rows(mut x: Array2<f64>) -> Array2<f64> {
    for mut row in x.rows_mut() {
        let norm = row.dot(&row).sqrt();
        row /= norm;
    }
    x
}

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let n = 24;
    let zs: Vec<Array2<f64>> = (0..3).map(|_| unit_rows(random_matrix(&mut rng, n, 6))).collect();

    let views: Vec<_> = zs.iter().map(|z| z.view()).collect();
    let (_, grads) = cross_modality_loss(&views, 0.1, 256, 1).unwrap();
    let mut mod_err = 0.0f64;
    for i in 0..3 {
        mod_err = mod_err.max(fd_error(&zs[i], &grads[i], |x| {
            let mut vs: Vec<_> = zs.iter().map(|z| z.view()).collect();
            vs[i] = x.view();
            cross_modality_loss(&vs, 0.1, 256, 1).unwrap().0
        }));
    }
    let capped = mms_loss(zs[0].view(), zs[1].view(), 0.1, 5, 3).unwrap();
    mod_err = mod_err.max(fd_error(&zs[0], &capped.grad_a, |x| mms_loss(x.view(), zs[1].view(), 0.1, 5, 3).unwrap().loss));
    mod_err = mod_err.max(fd_error(&zs[1], &capped.grad_b, |x| mms_loss(zs[0].view(), x.view(), 0.1, 5, 3).unwrap().loss));

    let edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).chain((0..n).map(|i| (i, (i + 5) % n))).collect();
    let g = MultimodalGraph::new(n, edges, vec![ModalityFeatures::new("x", Array2::zeros((n, 1)))], None).unwrap();
    let samples = sample_neighborhoods(&PrunedGraph::unpruned(g.adjacency()), 5, 5, 9);
    let h = &zs[0];
    let nbr = neighborhood_loss(h.view(), &samples).unwrap();
    let nbr_err = fd_error(h, &nbr.grad, |x| neighborhood_loss(x.view(), &samples).unwrap().loss);

    let mut clustering = kmeans_fit(h.view(), 3, 2, 300, 5).unwrap();
    let hard = hard_positive_sets(h.view(), &clustering, 0.3).unwrap();
    clustering.centroids = unit_rows(clustering.centroids);
    let comm = community_loss(h.view(), &clustering, &hard).unwrap();
    let comm_err = fd_error(h, &comm.grad, |x| community_loss(x.view(), &clustering, &hard).unwrap().loss);

    let synth = generate(&SynthConfig {
        n: 200,
        seed: 6,
        ..SynthConfig::default()
    })
    .unwrap();
    let report = gradcheck(&synth.graph, &TrainConfig::default(), 30).unwrap();
    let elapsed = start.elapsed();
    let passed = mod_err <= LOSS_GRAD_TOL
        && nbr_err <= LOSS_GRAD_TOL
        && comm_err <= LOSS_GRAD_TOL
        && report.max_rel_error <= E2E_GRAD_TOL
        && elapsed.as_secs() < 30;
    outcome(
        passed,
        format!(
            "L_mod {mod_err:.1e}, L_nbr {nbr_err:.1e}, L_comm {comm_err:.1e} (<= {LOSS_GRAD_TOL:e}); end-to-end {:.1e} on n={} (<= {E2E_GRAD_TOL:e}); {:.1}s",
            report.max_rel_error,
            report.n,
            secs(elapsed)
        ),
    )
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out
}

/// Metric values from pair loops and label maps only.
struct MetricOracle {
    acc: f64,
    nmi: f64,
    ari: f64,
    f1: f64,
    cs: f64,
}

fn metric_oracle(t: &[usize], p: &[usize]) -> MetricOracle {
    let n = t.len();
    let nf = n as f64;
    let acc = permutations(4)
        .iter()
        .map(|perm| t.iter().zip(p).filter(|(a, b)| perm[**b] == **a).count())
        .max()
        .unwrap() as f64
        / nf;

    let (mut both, mut only_t, mut only_p, mut neither) = (0u64, 0u64, 0u64, 0u64);
    for i in 0..n {
        for j in i + 1..n {
            match (t[i] == t[j], p[i] == p[j]) {
                (true, true) => both += 1,
                (true, false) => only_t += 1,
                (false, true) => only_p += 1,
                (false, false) => neither += 1,
            }
        }
    }
    let identical = only_t == 0 && only_p == 0;

    let mut joint: HashMap<(usize, usize), f64> = HashMap::new();
    let mut tc: HashMap<usize, f64> = HashMap::new();
    let mut pc: HashMap<usize, f64> = HashMap::new();
    for (&a, &b) in t.iter().zip(p) {
        *joint.entry((a, b)).or_default() += 1.0;
        *tc.entry(a).or_default() += 1.0;
        *pc.entry(b).or_default() += 1.0;
    }
    let entropy = |c: &HashMap<usize, f64>| -c.values().map(|&x| x / nf * (x / nf).ln()).sum::<f64>();
    let (ht, hp) = (entropy(&tc), entropy(&pc));
    let mi: f64 = joint.iter().map(|(&(a, b), &x)| x / nf * (nf * x / (tc[&a] * pc[&b])).ln()).sum();
    let h_t_given_p: f64 = -joint.iter().map(|(&(_, b), &x)| x / nf * (x / pc[&b]).ln()).sum::<f64>();

    let (a, b, c, d) = (both as f64, only_t as f64, only_p as f64, neither as f64);
    let ari_den = (a + b) * (b + d) + (a + c) * (c + d);
    MetricOracle {
        acc,
        nmi: if identical {
            1.0
        } else if ht == 0.0 || hp == 0.0 {
            0.0
        } else {
            mi / (ht * hp).sqrt()
        },
        ari: if identical {
            1.0
        } else if ari_den == 0.0 {
            0.0
        } else {
            2.0 * (a * d - b * c) / ari_den
        },
        f1: if identical { 1.0 } else { 2.0 * a / ((a + b) + (a + c)) },
        cs: if identical || ht == 0.0 { 1.0 } else { 1.0 - h_t_given_p / ht },
    }
}

fn metrics_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let (mut acc_bad, mut worst) = (0usize, 0.0f64);
    for _ in 0..500 {
        let n = rng.random_range(1..=10);
        let kt = rng.random_range(1..=4);
        let kp = rng.random_range(1..=4);
        let t: Vec<usize> = (0..n).map(|_| rng.random_range(0..kt)).collect();
        let p: Vec<usize> = (0..n).map(|_| rng.random_range(0..kp)).collect();
        let o = metric_oracle(&t, &p);
        if (accuracy(&t, &p).unwrap() - o.acc).abs() > METRIC_TOL {
            acc_bad += 1;
        }
        for (got, want) in [
            (nmi(&t, &p).unwrap(), o.nmi),
            (ari(&t, &p).unwrap(), o.ari),
            (pairwise_f1(&t, &p).unwrap(), o.f1),
            (completeness(&t, &p).unwrap(), o.cs),
        ] {
            worst = worst.max((got - want).abs());
        }
    }
    let ari_hand = ari(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap();
    let f1_hand = pairwise_f1(&[0, 0, 0], &[0, 0, 1]).unwrap();
    let passed = acc_bad == 0 && worst <= METRIC_TOL && ari_hand == -0.5 && f1_hand == 0.5;
    outcome(
        passed,
        format!("accuracy mismatches {acc_bad}/500, max oracle gap {worst:.1e}, ARI hand {ari_hand}, F1 hand {f1_hand}"),
    )
}

fn e2e_config(seed: u64, outlier_rate: f64) -> SynthConfig {
    let mut cfg = SynthConfig {
        n: 1000,
        k: 4,
        p_in: 0.05,
        p_out: 0.005,
        outlier_rate,
        seed,
        ..SynthConfig::default()
    };
    for m in &mut cfg.modalities {
        m.noise_sigma = E2E_NOISE_SIGMA;
    }
    cfg
}

fn dgf_nmi(cfg: &SynthConfig, train: &TrainConfig) -> f64 {
    let synth = generate(cfg).unwrap();
    let data = TrainingData::new(&synth.graph).unwrap();
    let result = fit(&data, train).unwrap();
    nmi(&synth.labels, &result.clustering.assignments).unwrap()
}

fn end_to_end() -> Outcome {
    let start = Instant::now();
    let seeds = 0..5u64;
    let (mut raw, mut dgf, mut fdd, mut no_fdd) = (0.0, 0.0, 0.0, 0.0);
    for seed in seeds.clone() {
        let cfg = e2e_config(100 + seed, 0.0);
        let synth = generate(&cfg).unwrap();
        let feats: Vec<Array2<f64>> = synth.graph.modalities().iter().map(|m| m.to_f64()).collect();
        let views: Vec<_> = feats.iter().map(|f| f.view()).collect();
        let x = concatenate(Axis(1), &views).unwrap();
        let km = kmeans_fit(x.view(), 4, seed, 300, 10).unwrap();
        raw += nmi(&synth.labels, &km.assignments).unwrap();

        let train = TrainConfig {
            seed,
            ..TrainConfig::default()
        };
        dgf += dgf_nmi(&cfg, &train);
        let spiked = e2e_config(100 + seed, 0.02);
        fdd += dgf_nmi(&spiked, &train);
        let ablated = TrainConfig {
            ablations: Ablations {
                no_fdd: true,
                ..Ablations::default()
            },
            ..train
        };
        no_fdd += dgf_nmi(&spiked, &ablated);
    }
    let k = seeds.count() as f64;
    let (raw, dgf, fdd, no_fdd) = (raw / k, dgf / k, fdd / k, no_fdd / k);
    let elapsed = start.elapsed();
    let passed = raw <= RAW_NMI_CAP && dgf >= raw + NMI_GAIN && fdd >= no_fdd + FDD_GAIN && elapsed.as_secs() < 300;
    outcome(
        passed,
        format!(
            "sigma {E2E_NOISE_SIGMA}: raw K-Means NMI {raw:.3} (<= {RAW_NMI_CAP}), DGF {dgf:.3} (gain {:+.3}, need {NMI_GAIN}); spiked FDD {fdd:.3} vs no-FDD {no_fdd:.3} (gain {:+.3}, need {FDD_GAIN}); {:.0}s",
            dgf - raw,
            fdd - no_fdd,
            secs(elapsed)
        ),
    )
}

fn diagnostics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let x = random_matrix(&mut rng, 300, 5);
    let self_adc = distance_correlation(x.view(), x.view()).unwrap();
    let a = Array2::from_shape_fn((2000, 1), |_| rng.sample::<f64, _>(StandardNormal));
    let b = Array2::from_shape_fn((2000, 1), |_| rng.sample::<f64, _>(StandardNormal));
    let independent = distance_correlation(a.view(), b.view()).unwrap();

    let synth = generate(&SynthConfig {
        outlier_rate: 0.02,
        seed: 8,
        ..SynthConfig::default()
    })
    .unwrap();
    let (mut planted, mut flagged) = (0usize, 0usize);
    for (m, spikes) in synth.graph.modalities().iter().zip(&synth.spikes) {
        let found = outlier_entries(m.to_f64().view(), 4.0);
        planted += spikes.len();
        flagged += spikes.iter().filter(|s| found.binary_search(s).is_ok()).count();
    }
    let recall = flagged as f64 / planted.max(1) as f64;
    let mut constant = random_matrix(&mut rng, 200, 4);
    constant.column_mut(1).fill(-1.7);
    constant.column_mut(3).fill(0.3);
    let constant_hits = outlier_entries(constant.view(), 4.0).iter().filter(|(_, c)| *c == 1 || *c == 3).count();

    let passed = (self_adc - 1.0).abs() <= ADC_SELF_TOL
        && independent <= ADC_INDEPENDENT
        && planted > 0
        && recall > SPIKE_RECALL
        && constant_hits == 0;
    outcome(
        passed,
        format!(
            "ADC(X,X) {self_adc:.12}, independent ADC {independent:.4} (<= {ADC_INDEPENDENT}), spike recall {recall:.4} of {planted} (> {SPIKE_RECALL}), constant-column hits {constant_hits}"
        ),
    )
}

fn mmag(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_mmag")).args(args).output().expect("binary runs")
}

fn synthetic_dataset(dir: &Path) -> String {
    let cfg = dir.join("gen.txt");
    std::fs::write(&cfg, "n = 400\nk = 4\np_in = 0.08\np_out = 0.008\nseed = 21\n").unwrap();
    let out = dir.join("data");
    let o = mmag(&["generate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out.join("manifest.txt").to_str().unwrap().to_string()
}

fn determinism(dir: &Path, manifest: &str) -> Outcome {
    let run = |name: &str, threads: &str| {
        let out = dir.join(name);
        let o = mmag(&[
            "--threads",
            threads,
            "cluster",
            "--data",
            manifest,
            "--seed",
            "7",
            "--epochs",
            "30",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(out.join("assignments.csv")).unwrap()
    };
    let a = run("det_a", "8");
    let b = run("det_b", "8");
    let c = run("det_c", "1");
    outcome(
        a == b && a == c && !a.is_empty(),
        format!("repeat identical {}, threads 1 vs 8 identical {}, {} bytes", a == b, a == c, a.len()),
    )
}

fn ablation_surface(dir: &Path, manifest: &str) -> Outcome {
    let mut done = Vec::new();
    for flag in Ablations::NAMES {
        let out = dir.join(flag);
        let arg = format!("--{}", flag.replace('_', "-"));
        let o = mmag(&["cluster", "--data", manifest, &arg, "--epochs", "30", "--out", out.to_str().unwrap()]);
        let json = std::fs::read_to_string(out.join("metrics.json")).ok();
        let ok = o.status.success() && json.is_some_and(|j| serde_json::from_str::<serde_json::Value>(&j).is_ok_and(|v| v["nmi"].is_number()));
        done.push((flag, ok));
    }
    let passed = done.iter().all(|(_, ok)| *ok);
    let list: Vec<String> = done.iter().map(|(f, ok)| format!("{f}:{}", if *ok { "ok" } else { "FAILED" })).collect();
    outcome(passed, list.join(" "))
}

type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synthetic_dataset(dir.path());
    let criteria: Vec<(&str, Check)> = vec![
        ("filter correctness vs dense oracle", Box::new(filter_correctness)),
        ("feature shift spectrum", Box::new(shift_spectrum)),
        ("filter spectra and truncation bounds", Box::new(spectra)),
        ("trace / spectral energy identity", Box::new(energy_identity)),
        ("gradient suite", Box::new(gradient_suite)),
        ("metrics oracle", Box::new(metrics_oracle)),
        ("end-to-end synthetic clustering", Box::new(end_to_end)),
        ("diagnostics", Box::new(diagnostics)),
        ("determinism", Box::new(|| determinism(dir.path(), &manifest))),
        ("ablation surface", Box::new(|| ablation_surface(dir.path(), &manifest))),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let (mut failed, mut ran) = (0, 0);
    for (i, (name, check)) in criteria.iter().enumerate() {
        if !only.is_empty() && !only.contains(&(i + 1)) {
            continue;
        }
        ran += 1;
        let r = check();
        if !r.passed {
            failed += 1;
        }
        println!("[{}] {:>2} {name}: {}", if r.passed { "PASS" } else { "FAIL" }, i + 1, r.detail);
    }
    println!("acceptance: {}/{ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
