//! Test data: the borehole function, Latin hypercube designs, and GP draws.
//!
//! All randomness comes from ChaCha8 seeded with a `u64`, so a seed gives the
//! same numbers on every platform.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{LagpError, Result};
use crate::gp::Hyperparameters;
use crate::linalg;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Physical ranges of the borehole inputs, in the order
/// `(r_w, r, T_u, H_u, T_l, H_l, L, K_w)`.
pub const BOREHOLE_RANGES: [(f64, f64); 8] = [
    (0.05, 0.15),
    (100.0, 50_000.0),
    (63_070.0, 115_600.0),
    (990.0, 1_110.0),
    (63.1, 116.0),
    (700.0, 820.0),
    (1_120.0, 1_680.0),
    (9_855.0, 12_045.0),
];

/// Water flow through a borehole, with inputs given in the unit cube.
pub fn borehole(x: &[f64]) -> Result<f64> {
    if x.len() != 8 {
        return Err(LagpError::Dimension {
            expected: 8,
            got: x.len(),
        });
    }
    if let Some(bad) = x.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(LagpError::Parameter(format!(
            "borehole inputs must lie in [0, 1], got {bad}"
        )));
    }
    let mut v = [0.0; 8];
    for ((out, &u), (lo, hi)) in v.iter_mut().zip(x).zip(BOREHOLE_RANGES) {
        *out = lo + (hi - lo) * u;
    }
    let [rw, r, tu, hu, tl, hl, l, kw] = v;
    let log_ratio = (r / rw).ln();
    let denom = log_ratio * (1.0 + 2.0 * l * tu / (log_ratio * rw * rw * kw) + tu / tl);
    Ok(2.0 * PI * tu * (hu - hl) / denom)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LhsSpec {
    pub n: usize,
    pub seed: u64,
    /// One `(lo, hi)` pair per dimension.
    pub ranges: Vec<(f64, f64)>,
}

impl LhsSpec {
    pub fn unit(n: usize, p: usize, seed: u64) -> Self {
        Self {
            n,
            seed,
            ranges: vec![(0.0, 1.0); p],
        }
    }
}

/// Latin hypercube sample, row-major `n × p`: every dimension has exactly one
/// point in each of its `n` equal-width strata.
pub fn lhs_sample(spec: &LhsSpec) -> Result<Vec<f64>> {
    if spec.n == 0 || spec.ranges.is_empty() {
        return Err(LagpError::Parameter("need n >= 1 and p >= 1".into()));
    }
    if let Some((lo, hi)) = spec.ranges.iter().find(|(lo, hi)| !(lo < hi)) {
        return Err(LagpError::Parameter(format!("empty range ({lo}, {hi})")));
    }
    let (n, p) = (spec.n, spec.ranges.len());
    let mut rng = rng(spec.seed);
    let mut out = vec![0.0; n * p];
    let mut strata: Vec<usize> = (0..n).collect();
    for (d, &(lo, hi)) in spec.ranges.iter().enumerate() {
        strata.shuffle(&mut rng);
        for (i, &s) in strata.iter().enumerate() {
            let u: f64 = rng.random();
            // stay inside the stratum even when u rounds the sum up
            let t = ((s as f64 + u) / n as f64).min((s + 1) as f64 / n as f64);
            out[i * p + d] = (lo + (hi - lo) * t).min(hi);
        }
    }
    Ok(out)
}

/// One draw of `Y ~ N(0, K)` at the row-major `inputs`.
pub fn gp_sample_path(inputs: &[f64], dim: usize, hyper: &Hyperparameters, seed: u64) -> Result<Vec<f64>> {
    if dim == 0 || !inputs.len().is_multiple_of(dim) {
        return Err(LagpError::Dimension {
            expected: dim,
            got: inputs.len(),
        });
    }
    let n = inputs.len() / dim;
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        l[i * n + i] = 1.0 + hyper.eta();
        for j in 0..i {
            let c = hyper.corr(&inputs[i * dim..(i + 1) * dim], &inputs[j * dim..(j + 1) * dim]);
            l[i * n + j] = c;
            l[j * n + i] = c;
        }
    }
    linalg::cholesky_in_place(&mut l, n)?;
    let mut rng = rng(seed);
    let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    Ok((0..n)
        .map(|i| linalg::dot(&l[i * n..i * n + i + 1], &z[..=i]))
        .collect())
}
