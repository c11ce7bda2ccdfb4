//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use predictability::lmcore::{DistributionProvider, NgramProvider, NgramTable, Tokenizer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Exact Gaussian log-likelihood with the dense covariance `sigma2 (I + lambda Z Z')`,
/// with beta and sigma2 at their closed-form maximizers.
pub fn dense_profiled(x: &DMatrix<f64>, y: &[f64], groups: &[String], lambda: f64) -> (f64, Vec<f64>) {
    let n = y.len();
    let v = DMatrix::from_fn(n, n, |i, j| {
        let same = if groups[i] == groups[j] { lambda } else { 0.0 };
        same + if i == j { 1.0 } else { 0.0 }
    });
    let chol = v.cholesky().expect("covariance is positive definite");
    let vinv_x = chol.solve(x);
    let yv = DVector::from_column_slice(y);
    let vinv_y = chol.solve(&yv);
    let beta = (x.transpose() * &vinv_x)
        .lu()
        .solve(&(x.transpose() * &vinv_y))
        .expect("full rank");
    let r = &yv - x * &beta;
    let sigma2 = r.dot(&chol.solve(&r)) / n as f64;
    let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let ll = -0.5 * (n as f64 * (2.0 * std::f64::consts::PI * sigma2).ln() + log_det + n as f64);
    (ll, beta.iter().copied().collect())
}

/// Maximum-likelihood fit by a 200-point log-lambda grid, the boundary
/// lambda = 0, and golden-section refinement around the best grid point.
pub fn dense_fit(x: &DMatrix<f64>, y: &[f64], groups: &[String]) -> (f64, f64, Vec<f64>) {
    let (lo, hi) = ((1e-9f64).ln(), (1e9f64).ln());
    let grid: Vec<f64> = (0..200).map(|i| lo + (hi - lo) * i as f64 / 199.0).collect();
    let ll = |t: f64| dense_profiled(x, y, groups, t.exp()).0;
    let vals: Vec<f64> = grid.iter().map(|&t| ll(t)).collect();
    let best = (0..grid.len()).max_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    let mut a = grid[best.saturating_sub(1)];
    let mut b = grid[(best + 1).min(grid.len() - 1)];
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (ll(c), ll(d));
    while b - a > 1e-11 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = ll(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = ll(d);
        }
    }
    let theta = 0.5 * (a + b);
    let interior = dense_profiled(x, y, groups, theta.exp());
    let boundary = dense_profiled(x, y, groups, 0.0);
    if boundary.0 >= interior.0 {
        (boundary.0, 0.0, boundary.1)
    } else {
        (interior.0, theta.exp(), interior.1)
    }
}

/// Conditional BLUP of one group from the dense covariance.
pub fn dense_blup(resid: &[f64], lambda: f64) -> f64 {
    let n = resid.len();
    let v = DMatrix::from_fn(n, n, |i, j| lambda + if i == j { 1.0 } else { 0.0 });
    let vinv_r = v.cholesky().unwrap().solve(&DVector::from_column_slice(resid));
    lambda * vinv_r.sum()
}

/// Random-intercept dataset: intercept plus `p - 1` normal covariates.
pub struct LmeData {
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
    pub groups: Vec<String>,
}

pub fn random_lme_data(seed: u64, max_rows: usize, max_groups: usize) -> LmeData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(30..=max_rows);
    let n_groups = rng.random_range(2..=max_groups);
    let p = rng.random_range(2..=4);
    let sd_b = [0.0, 0.3, 1.0, 3.0][rng.random_range(0..4)];
    let normal = Normal::new(0.0, 1.0).unwrap();
    let offsets: Vec<f64> = (0..n_groups).map(|_| sd_b * normal.sample(&mut rng)).collect();
    let beta: Vec<f64> = (0..p).map(|_| 2.0 * normal.sample(&mut rng)).collect();
    let mut data = Vec::with_capacity(n * p);
    let mut y = Vec::with_capacity(n);
    let mut groups = Vec::with_capacity(n);
    for i in 0..n {
        let g = i % n_groups;
        let mut row = vec![1.0];
        row.extend((1..p).map(|_| normal.sample(&mut rng)));
        let mean: f64 = row.iter().zip(&beta).map(|(a, b)| a * b).sum();
        y.push(mean + offsets[g] + normal.sample(&mut rng));
        data.extend(row);
        groups.push(format!("s{g}"));
    }
    LmeData {
        x: DMatrix::from_row_slice(n, p, &data),
        y,
        groups,
    }
}

/// Brute-force two-sided sign-flip p-value over all `2^n` assignments.
pub fn brute_permutation(d: &[f64]) -> f64 {
    let n = d.len();
    let observed = (d.iter().sum::<f64>() / n as f64).abs();
    let tol = 1e-9 * d.iter().map(|v| v.abs()).sum::<f64>() / n as f64;
    let mut hits = 0u64;
    for mask in 0u64..(1 << n) {
        let s: f64 = (0..n).map(|i| if mask >> i & 1 == 1 { -d[i] } else { d[i] }).sum::<f64>() / n as f64;
        if s.abs() >= observed - tol {
            hits += 1;
        }
    }
    hits as f64 / (1u64 << n) as f64
}

pub const TOY_TOKENS: [&str; 12] = [
    "<|endoftext|>",
    ".",
    ",",
    " the",
    " cat",
    " car",
    "pet",
    " wind",
    "ow",
    "s",
    " sat",
    "ing",
];

pub fn toy_tokenizer() -> Tokenizer {
    Tokenizer::from_tokens(&TOY_TOKENS).unwrap()
}

pub fn toy_provider(seed: u64) -> NgramProvider {
    NgramProvider::new(&NgramTable::seeded(&toy_tokenizer(), seed)).unwrap()
}

/// Exact distribution of the sampled word: enumerate every path of up to
/// three word tokens and the token that decides where the word ends.
pub fn enumerate_sampled_words<P: DistributionProvider>(provider: &P, prefix: &[u32]) -> BTreeMap<String, f64> {
    let vocab = provider.tokenizer().vocab();
    let v = vocab.len() as u32;
    let text = |ids: &[u32]| -> String {
        let s: String = ids.iter().map(|&i| vocab.token(i).unwrap()).collect();
        s.trim_start_matches(' ').to_lowercase()
    };
    let mut out = BTreeMap::new();
    let d0 = provider.next_distribution(prefix).unwrap();
    for t0 in 0..v {
        let p0 = d0.prob(t0);
        let c0 = [prefix, &[t0]].concat();
        let d1 = provider.next_distribution(&c0).unwrap();
        for t1 in 0..v {
            let p1 = p0 * d1.prob(t1);
            if vocab.is_boundary(t1) {
                *out.entry(text(&[t0])).or_insert(0.0) += p1;
                continue;
            }
            let c1 = [&c0[..], &[t1]].concat();
            let d2 = provider.next_distribution(&c1).unwrap();
            for t2 in 0..v {
                let p2 = p1 * d2.prob(t2);
                let word = if vocab.is_boundary(t2) { text(&[t0, t1]) } else { text(&[t0, t1, t2]) };
                *out.entry(word).or_insert(0.0) += p2;
            }
        }
    }
    out
}

/// Synthetic reading-time table: a by-subject intercept, a word-length
/// baseline, a predictor `a` that drives the response with `effect` ms per
/// unit, and a predictor `b = a + noise_b * N(0, 1)` with no effect of its own.
pub struct SimulatedRt {
    pub table: predictability::stats::PredictorTable,
    pub row_folds: Vec<usize>,
}

pub fn simulate_rt(seed: u64, effect: f64, noise_b: f64) -> SimulatedRt {
    use predictability::corpus::{ContextId, Measure, RtObservation};
    use predictability::stats::{make_folds, PredictorTable};

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let n_subjects = 10;
    let n_items = 12;
    let words = 12;
    let word_a: Vec<Vec<f64>> = (0..n_items).map(|_| (0..words).map(|_| normal.sample(&mut rng)).collect()).collect();
    let word_b: Vec<Vec<f64>> = word_a
        .iter()
        .map(|r| r.iter().map(|a| a + noise_b * normal.sample(&mut rng)).collect())
        .collect();
    let word_len: Vec<Vec<f64>> = (0..n_items)
        .map(|_| (0..words).map(|_| rng.random_range(2..10) as f64).collect())
        .collect();
    let mut obs = Vec::new();
    let (mut rt, mut groups, mut a, mut b, mut len) = (vec![], vec![], vec![], vec![], vec![]);
    for s in 0..n_subjects {
        let offset = 30.0 * normal.sample(&mut rng);
        for i in 0..n_items {
            for w in 0..words {
                let y = 300.0 + offset + 4.0 * word_len[i][w] + effect * word_a[i][w] + 40.0 * normal.sample(&mut rng);
                obs.push(RtObservation {
                    subject_id: format!("s{s:02}"),
                    context: ContextId::new(format!("i{i:02}"), "1", w),
                    measure: Measure::Spr,
                    rt: y,
                    prev_word_fixated: None,
                    trial_correct: None,
                });
                rt.push(y);
                groups.push(format!("s{s:02}"));
                a.push(word_a[i][w]);
                b.push(word_b[i][w]);
                len.push(word_len[i][w]);
            }
        }
    }
    let mut table = PredictorTable::new(rt, groups).unwrap();
    table.add_column("word_length", len).unwrap();
    table.add_column("a", a).unwrap();
    table.add_column("b", b).unwrap();
    let plan = make_folds(&obs, 10).unwrap();
    SimulatedRt {
        row_folds: plan.row_folds(&obs).unwrap(),
        table,
    }
}
