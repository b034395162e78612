//! Small dense kernels on row-major `f64` slices.
//!
//! Matrices in this crate are a few hundred rows at most, so everything here
//! is plain loops over contiguous storage.

use std::cell::Cell;

use crate::error::{LagpError, Result};

thread_local! {
    static FACTORIZATIONS: Cell<u64> = const { Cell::new(0) };
}

/// Number of O(n³) factorizations performed on the calling thread so far.
pub fn factorizations_on_this_thread() -> u64 {
    FACTORIZATIONS.with(|c| c.get())
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// In-place lower Cholesky factor of the `n × n` SPD matrix `a`.
/// The strict upper triangle is zeroed on success.
pub fn cholesky_in_place(a: &mut [f64], n: usize) -> Result<()> {
    FACTORIZATIONS.with(|c| c.set(c.get() + 1));
    for j in 0..n {
        let mut diag = a[j * n + j];
        for k in 0..j {
            diag -= a[j * n + k] * a[j * n + k];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return Err(LagpError::Singular { pivot: j, value: diag });
        }
        let ljj = diag.sqrt();
        a[j * n + j] = ljj;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / ljj;
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            a[i * n + j] = 0.0;
        }
    }
    Ok(())
}

/// `log |A|` from its lower Cholesky factor.
pub fn log_det_from_cholesky(l: &[f64], n: usize) -> f64 {
    2.0 * (0..n).map(|i| l[i * n + i].ln()).sum::<f64>()
}

/// Explicit `A⁻¹` from the lower Cholesky factor of `A`; result is exactly symmetric.
pub fn inverse_from_cholesky(l: &[f64], n: usize) -> Vec<f64> {
    // L⁻¹, lower triangular
    let mut linv = vec![0.0; n * n];
    for i in 0..n {
        linv[i * n + i] = 1.0 / l[i * n + i];
        for j in 0..i {
            let mut s = 0.0;
            for k in j..i {
                s -= l[i * n + k] * linv[k * n + j];
            }
            linv[i * n + j] = s / l[i * n + i];
        }
    }
    // A⁻¹ = L⁻ᵀ L⁻¹
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = 0.0;
            for k in i..n {
                s += linv[k * n + i] * linv[k * n + j];
            }
            inv[i * n + j] = s;
            inv[j * n + i] = s;
        }
    }
    inv
}

/// `y = A x` for a row-major `n × n` matrix.
pub fn mat_vec(a: &[f64], x: &[f64], y: &mut [f64]) {
    let n = x.len();
    for (i, yi) in y.iter_mut().enumerate() {
        *yi = dot(&a[i * n..(i + 1) * n], x);
    }
}

/// `xᵀ A x` for a row-major symmetric matrix.
pub fn quad_form(a: &[f64], x: &[f64]) -> f64 {
    let n = x.len();
    (0..n).map(|i| x[i] * dot(&a[i * n..(i + 1) * n], x)).sum()
}
