//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use topp_hmm::DenseMatrix;

/// Half the L1 distance, summed naively.
pub fn tv(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Plain triple loop over column pairs.
pub fn gamma_oracle(t: &DenseMatrix) -> f64 {
    let n = t.n_cols();
    let mut best = 1.0f64;
    for a in 0..n {
        for b in a + 1..n {
            let overlap: f64 = (0..t.n_rows()).map(|i| t.get(i, a).min(t.get(i, b))).sum();
            best = best.min(overlap);
        }
    }
    best
}

pub fn matvec(t: &DenseMatrix, v: &[f64]) -> Vec<f64> {
    (0..t.n_rows()).map(|i| (0..t.n_cols()).map(|j| t.get(i, j) * v[j]).sum()).collect()
}

/// Random point of the simplex; each entry is zeroed with probability `zero_prob`
/// (one entry always survives).
pub fn random_distribution<R: Rng>(rng: &mut R, n: usize, zero_prob: f64) -> Vec<f64> {
    let keep = rng.random_range(0..n);
    let mut v: Vec<f64> = (0..n)
        .map(|i| if i != keep && rng.random_bool(zero_prob) { 0.0 } else { -rng.random::<f64>().max(1e-300).ln() })
        .collect();
    let total: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= total);
    v
}

pub fn random_stochastic<R: Rng>(rng: &mut R, n_rows: usize, n_cols: usize, zero_prob: f64) -> DenseMatrix {
    let columns: Vec<Vec<f64>> = (0..n_cols).map(|_| random_distribution(rng, n_rows, zero_prob)).collect();
    DenseMatrix::from_columns(&columns).unwrap()
}
