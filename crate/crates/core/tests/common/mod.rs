#![allow(dead_code)]

use lagp::synth::rng;
use lagp::{Design, Hyperparameters};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn uniform_rows(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Vec<f64> {
    (0..n * p).map(|_| rng.random::<f64>()).collect()
}

pub fn random_design(seed: u64, n: usize, p: usize) -> Design {
    let mut r = rng(seed);
    let x = uniform_rows(&mut r, n, p);
    let y = (0..n).map(|_| r.random::<f64>() * 2.0 - 1.0).collect();
    Design::new(x, p, y).unwrap()
}

/// Dense correlation matrix with the nugget on the diagonal.
pub fn dense_k(rows: &[f64], p: usize, hyper: &Hyperparameters) -> DMatrix<f64> {
    let n = rows.len() / p;
    DMatrix::from_fn(n, n, |i, j| {
        let c = hyper.corr(&rows[i * p..(i + 1) * p], &rows[j * p..(j + 1) * p]);
        if i == j {
            c + hyper.eta()
        } else {
            c
        }
    })
}

pub fn dense_kx(rows: &[f64], p: usize, x: &[f64], hyper: &Hyperparameters) -> DVector<f64> {
    DVector::from_iterator(rows.len() / p, rows.chunks(p).map(|r| hyper.corr(r, x)))
}

/// `1 + η - kᵀ K⁻¹ k` by LU solve, no stored inverse.
pub fn dense_variance(rows: &[f64], p: usize, x: &[f64], hyper: &Hyperparameters) -> f64 {
    let k = dense_k(rows, p, hyper);
    let kx = dense_kx(rows, p, x, hyper);
    let sol = k.lu().solve(&kx).expect("non-singular");
    1.0 + hyper.eta() - kx.dot(&sol)
}

pub fn frobenius_rel(a: &[f64], b: &DMatrix<f64>) -> f64 {
    let n = b.nrows();
    let mut num = 0.0;
    for i in 0..n {
        for j in 0..n {
            num += (a[i * n + j] - b[(i, j)]).powi(2);
        }
    }
    num.sqrt() / b.norm()
}

/// Neumaier-compensated sum.
pub fn compensated_sum(v: &[f64]) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for &x in v {
        let t = s + x;
        c += if s.abs() >= x.abs() { (s - t) + x } else { (x - t) + s };
        s = t;
    }
    s + c
}
