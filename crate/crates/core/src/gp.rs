//! Exact Gaussian process machinery for small designs.
//!
//! The correlation is the isotropic Gaussian `exp(-||x - x'||² / θ)` with a
//! nugget `η` added on the diagonal only, so `K(x, x) = 1 + η`. Responses are
//! modelled with a zero mean and a profiled-out scale, which makes the
//! predictive distribution Student-t with `N` degrees of freedom.

use std::f64::consts::PI;

use crate::error::{LagpError, Result};
use crate::linalg::{self, dot, sq_dist};

/// Schur complements at or below this value are treated as singular.
pub const SCHUR_TOLERANCE: f64 = 1e-12;

/// Nugget used when the caller does not pick one.
pub const DEFAULT_NUGGET: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparameters {
    theta: f64,
    eta: f64,
}

impl Hyperparameters {
    pub fn new(theta: f64, eta: f64) -> Result<Self> {
        if !(theta > 0.0) || !theta.is_finite() {
            return Err(LagpError::Parameter(format!(
                "lengthscale must be positive and finite, got {theta}"
            )));
        }
        if !(eta >= 0.0) || !eta.is_finite() {
            return Err(LagpError::Parameter(format!(
                "nugget must be non-negative and finite, got {eta}"
            )));
        }
        Ok(Self { theta, eta })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn with_theta(&self, theta: f64) -> Result<Self> {
        Self::new(theta, self.eta)
    }

    /// Off-diagonal correlation between two points.
    #[inline]
    pub fn corr(&self, a: &[f64], b: &[f64]) -> f64 {
        (-sq_dist(a, b) / self.theta).exp()
    }
}

/// Isotropic Gaussian correlation between two points (no nugget).
pub fn correlation(x: &[f64], x2: &[f64], hyper: &Hyperparameters) -> Result<f64> {
    if x.len() != x2.len() {
        return Err(LagpError::Dimension {
            expected: x.len(),
            got: x2.len(),
        });
    }
    Ok(hyper.corr(x, x2))
}

/// Full training set: `N` input rows of dimension `p` and their responses.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    inputs: Vec<f64>,
    responses: Vec<f64>,
    dim: usize,
}

impl Design {
    /// `inputs` is row-major `N × dim`.
    pub fn new(inputs: Vec<f64>, dim: usize, responses: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(LagpError::Parameter("input dimension must be >= 1".into()));
        }
        if responses.is_empty() {
            return Err(LagpError::Parameter("design must have at least one row".into()));
        }
        if inputs.len() != responses.len() * dim {
            return Err(LagpError::Dimension {
                expected: responses.len() * dim,
                got: inputs.len(),
            });
        }
        if inputs.iter().chain(&responses).any(|v| !v.is_finite()) {
            return Err(LagpError::Parameter("design contains non-finite values".into()));
        }
        Ok(Self {
            inputs,
            responses,
            dim,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], responses: Vec<f64>) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.len());
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(LagpError::Dimension {
                expected: dim,
                got: bad.len(),
            });
        }
        Self::new(rows.concat(), dim, responses)
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn response(&self, i: usize) -> f64 {
        self.responses[i]
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    /// The rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Design {
        let mut inputs = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            inputs.extend_from_slice(self.row(i));
        }
        Design {
            inputs,
            responses: indices.iter().map(|&i| self.responses[i]).collect(),
            dim: self.dim,
        }
    }
}

/// Student-t predictive summary at one location.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub scale2: f64,
    pub dof: usize,
    /// `scale2 · dof / (dof - 2)`; `None` when `dof <= 2`.
    pub variance: Option<f64>,
}

/// A fitted GP over a (sub-)design, holding the explicit inverse correlation matrix.
#[derive(Debug, Clone)]
pub struct LocalState {
    dim: usize,
    sub_design: Vec<f64>,
    sub_responses: Vec<f64>,
    /// The correlation matrix itself, kept for refining extensions.
    k: Vec<f64>,
    k_inv: Vec<f64>,
    psi: f64,
    log_det_k: f64,
    hyper: Hyperparameters,
    chosen_indices: Vec<usize>,
}

fn correlation_matrix(rows: &[f64], dim: usize, hyper: &Hyperparameters) -> Vec<f64> {
    let n = rows.len() / dim;
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        let xi = &rows[i * dim..(i + 1) * dim];
        k[i * n + i] = 1.0 + hyper.eta;
        for j in 0..i {
            let c = hyper.corr(xi, &rows[j * dim..(j + 1) * dim]);
            k[i * n + j] = c;
            k[j * n + i] = c;
        }
    }
    k
}

impl LocalState {
    /// Fit on the rows of `design` at `indices` (global row numbers are kept).
    pub fn from_indices(
        design: &Design,
        indices: &[usize],
        hyper: Hyperparameters,
    ) -> Result<Self> {
        if indices.is_empty() {
            return Err(LagpError::Parameter("local design must be non-empty".into()));
        }
        let mut seen = std::collections::HashSet::with_capacity(indices.len());
        if let Some(&dup) = indices.iter().find(|&&i| !seen.insert(i)) {
            return Err(LagpError::Parameter(format!("row {dup} chosen twice")));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= design.len()) {
            return Err(LagpError::Parameter(format!(
                "row {bad} out of range for design of {} rows",
                design.len()
            )));
        }
        let sub = design.subset(indices);
        let n = sub.len();
        let k = correlation_matrix(&sub.inputs, sub.dim, &hyper);
        let mut l = k.clone();
        linalg::cholesky_in_place(&mut l, n)?;
        let log_det_k = linalg::log_det_from_cholesky(&l, n);
        let k_inv = linalg::inverse_from_cholesky(&l, n);
        let psi = linalg::quad_form(&k_inv, &sub.responses);
        Ok(Self {
            dim: sub.dim,
            sub_design: sub.inputs,
            sub_responses: sub.responses,
            k,
            k_inv,
            psi,
            log_det_k,
            hyper,
            chosen_indices: indices.to_vec(),
        })
    }

    pub fn size(&self) -> usize {
        self.sub_responses.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hyper(&self) -> &Hyperparameters {
        &self.hyper
    }

    /// Row-major `j × j`, exactly symmetric.
    pub fn k_inv(&self) -> &[f64] {
        &self.k_inv
    }

    pub fn psi(&self) -> f64 {
        self.psi
    }

    pub fn log_det_k(&self) -> f64 {
        self.log_det_k
    }

    pub fn chosen_indices(&self) -> &[usize] {
        &self.chosen_indices
    }

    pub fn sub_design(&self) -> &[f64] {
        &self.sub_design
    }

    pub fn sub_responses(&self) -> &[f64] {
        &self.sub_responses
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.sub_design[i * self.dim..(i + 1) * self.dim]
    }

    /// `k_j(x)`: correlations between `x` and every row of the sub-design.
    pub fn cross_correlations(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.hyper.corr(x, self.row(i));
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(LagpError::Dimension {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// `K⁻¹ b` from the stored inverse plus one step of iterative refinement
    /// against the stored `K`.
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let j = self.size();
        let mut w = vec![0.0; j];
        linalg::mat_vec(&self.k_inv, b, &mut w);
        let mut r = vec![0.0; j];
        linalg::mat_vec(&self.k, &w, &mut r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        let mut dw = vec![0.0; j];
        linalg::mat_vec(&self.k_inv, &r, &mut dw);
        for (wi, di) in w.iter_mut().zip(&dw) {
            *wi += di;
        }
        w
    }

    /// `v_j(x) = K(x,x) - k_j(x)ᵀ K_j⁻¹ k_j(x)`, the unscaled predictive variance.
    pub fn reduced_variance(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let mut k = vec![0.0; self.size()];
        self.cross_correlations(x, &mut k);
        Ok(1.0 + self.hyper.eta - dot(&k, &self.solve(&k)))
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        self.check_dim(x)?;
        let j = self.size();
        let mut k = vec![0.0; j];
        self.cross_correlations(x, &mut k);
        let kinv_k = self.solve(&k);
        let mean = dot(&kinv_k, &self.sub_responses);
        let reduced = 1.0 + self.hyper.eta - dot(&kinv_k, &k);
        let scale2 = (self.psi * reduced / j as f64).max(0.0);
        let variance = (j > 2).then(|| scale2 * j as f64 / (j as f64 - 2.0));
        Ok(Prediction {
            mean,
            scale2,
            dof: j,
            variance,
        })
    }

    /// Log of the marginal likelihood with the scale integrated out.
    pub fn log_marginal_likelihood(&self) -> Result<f64> {
        if !(self.psi > 0.0) || !self.psi.is_finite() {
            return Err(LagpError::Numerical {
                theta: self.hyper.theta,
                reason: format!("psi = {} is not positive", self.psi),
            });
        }
        let n = self.size() as f64;
        Ok(ln_gamma_half(self.size()) - 0.5 * n * (2.0 * PI).ln() - 0.5 * self.log_det_k
            - 0.5 * n * (self.psi / 2.0).ln())
    }

    /// Add one row via the partitioned inverse in O(j²).
    pub fn extend(&mut self, x_new: &[f64], y_new: f64, global_index: usize) -> Result<()> {
        self.check_dim(x_new)?;
        if self.chosen_indices.contains(&global_index) {
            return Err(LagpError::Parameter(format!(
                "row {global_index} is already in the local design"
            )));
        }
        let j = self.size();
        let mut k = vec![0.0; j];
        self.cross_correlations(x_new, &mut k);
        // refined solve: without it the bordered inverse loses accuracy
        // quickly once K is ill conditioned
        let w = self.solve(&k);
        let schur = 1.0 + self.hyper.eta - dot(&k, &w);
        if !(schur > SCHUR_TOLERANCE) {
            return Err(LagpError::NearSingularExtension { schur });
        }
        let m = 1.0 / schur;
        // g = -m K⁻¹ k; top-left block becomes K⁻¹ + g gᵀ / m.
        let g: Vec<f64> = w.iter().map(|wi| -m * wi).collect();
        let n1 = j + 1;
        let mut next = vec![0.0; n1 * n1];
        for r in 0..j {
            for c in 0..=r {
                let v = self.k_inv[r * j + c] + g[r] * g[c] * schur;
                next[r * n1 + c] = v;
                next[c * n1 + r] = v;
            }
            next[r * n1 + j] = g[r];
            next[j * n1 + r] = g[r];
        }
        next[j * n1 + j] = m;

        self.k_inv = next;
        let mut kn = vec![0.0; n1 * n1];
        for r in 0..j {
            kn[r * n1..r * n1 + j].copy_from_slice(&self.k[r * j..(r + 1) * j]);
            kn[r * n1 + j] = k[r];
            kn[j * n1 + r] = k[r];
        }
        kn[j * n1 + j] = 1.0 + self.hyper.eta;
        self.k = kn;
        self.sub_design.extend_from_slice(x_new);
        self.sub_responses.push(y_new);
        self.chosen_indices.push(global_index);
        self.log_det_k += schur.ln();
        self.psi = linalg::quad_form(&self.k_inv, &self.sub_responses);
        Ok(())
    }
}

/// Fit a GP on the whole design.
pub fn build_gp(design: &Design, hyper: Hyperparameters) -> Result<LocalState> {
    let all: Vec<usize> = (0..design.len()).collect();
    LocalState::from_indices(design, &all, hyper)
}

pub fn predict(state: &LocalState, x: &[f64]) -> Result<Prediction> {
    state.predict(x)
}

pub fn log_marginal_likelihood(state: &LocalState) -> Result<f64> {
    state.log_marginal_likelihood()
}

/// Functional form of [`LocalState::extend`].
pub fn update_gp(
    mut state: LocalState,
    x_new: &[f64],
    y_new: f64,
    global_index: usize,
) -> Result<LocalState> {
    state.extend(x_new, y_new, global_index)?;
    Ok(state)
}

/// `ln Γ(n/2)` for integer `n >= 1`, via the half-integer recurrence.
pub fn ln_gamma_half(n: usize) -> f64 {
    debug_assert!(n >= 1);
    let (mut acc, mut x) = if n.is_multiple_of(2) {
        (0.0, 1.0)
    } else {
        (0.5 * PI.ln(), 0.5)
    };
    let target = n as f64 / 2.0;
    while x < target {
        acc += x.ln();
        x += 1.0;
    }
    acc
}

/// Log likelihood and its first two derivatives in θ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LikelihoodDerivatives {
    pub loglik: f64,
    pub d_theta: f64,
    pub d2_theta: f64,
}

/// Evaluates the marginal log likelihood of `design` at `hyper` together with
/// its analytic first and second derivatives with respect to θ.
pub fn log_likelihood_derivatives(
    design: &Design,
    hyper: &Hyperparameters,
) -> Result<LikelihoodDerivatives> {
    let n = design.len();
    let theta = hyper.theta;
    let nf = n as f64;
    let mut l = correlation_matrix(design.inputs(), design.dim(), hyper);
    let kmat = l.clone();
    linalg::cholesky_in_place(&mut l, n).map_err(|e| LagpError::Numerical {
        theta,
        reason: e.to_string(),
    })?;
    let log_det = linalg::log_det_from_cholesky(&l, n);
    let kinv = linalg::inverse_from_cholesky(&l, n);

    let mut alpha = vec![0.0; n];
    linalg::mat_vec(&kinv, design.responses(), &mut alpha);
    let psi = dot(&alpha, design.responses());
    if !(psi > 0.0) || !psi.is_finite() {
        return Err(LagpError::Numerical {
            theta,
            reason: format!("psi = {psi} is not positive"),
        });
    }

    // dK/dθ = K d²/θ², d²K/dθ² = K (d⁴/θ⁴ - 2 d²/θ³); the nugget does not depend on θ.
    let mut dk = vec![0.0; n * n];
    let mut d2k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..i {
            let d2 = sq_dist(design.row(i), design.row(j));
            let kij = kmat[i * n + j];
            let a = kij * d2 / (theta * theta);
            let b = kij * (d2 * d2 / theta.powi(4) - 2.0 * d2 / theta.powi(3));
            dk[i * n + j] = a;
            dk[j * n + i] = a;
            d2k[i * n + j] = b;
            d2k[j * n + i] = b;
        }
    }

    let trace_kinv_dk: f64 = kinv.iter().zip(&dk).map(|(a, b)| a * b).sum();
    let trace_kinv_d2k: f64 = kinv.iter().zip(&d2k).map(|(a, b)| a * b).sum();
    // P = K⁻¹ K̇
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let a = kinv[i * n + k];
            if a == 0.0 {
                continue;
            }
            let row = &dk[k * n..(k + 1) * n];
            for (pij, dkj) in p[i * n..(i + 1) * n].iter_mut().zip(row) {
                *pij += a * dkj;
            }
        }
    }
    let mut trace_pp = 0.0;
    for i in 0..n {
        for j in 0..n {
            trace_pp += p[i * n + j] * p[j * n + i];
        }
    }

    let quad_dk = linalg::quad_form(&dk, &alpha);
    let quad_d2k = linalg::quad_form(&d2k, &alpha);
    let mut dk_alpha = vec![0.0; n];
    linalg::mat_vec(&dk, &alpha, &mut dk_alpha);
    let quad_dk_kinv_dk = linalg::quad_form(&kinv, &dk_alpha);

    let loglik =
        ln_gamma_half(n) - 0.5 * nf * (2.0 * PI).ln() - 0.5 * log_det - 0.5 * nf * (psi / 2.0).ln();
    let d_theta = -0.5 * trace_kinv_dk + 0.5 * nf * quad_dk / psi;
    let d_quad = -2.0 * quad_dk_kinv_dk + quad_d2k;
    let d2_theta = 0.5 * trace_pp - 0.5 * trace_kinv_d2k
        + 0.5 * nf * (d_quad / psi + (quad_dk / psi).powi(2));

    if !loglik.is_finite() || !d_theta.is_finite() {
        return Err(LagpError::Numerical {
            theta,
            reason: "non-finite likelihood".into(),
        });
    }
    Ok(LikelihoodDerivatives {
        loglik,
        d_theta,
        d2_theta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleFit {
    pub theta: f64,
    pub loglik: f64,
    pub iterations: usize,
    pub at_boundary: bool,
}

const MLE_MAX_ITER: usize = 100;
const MLE_GRAD_TOL: f64 = 1e-5;

/// Maximises the marginal likelihood over θ in `[lo, hi]`.
///
/// Safeguarded Newton on `log θ`: the bracket shrinks toward the side where
/// the gradient points, and a Newton proposal that leaves the bracket (or
/// comes from a non-concave point) is replaced by bisection, except that a
/// proposal past an untried bound tries the bound itself. Trial points where
/// the correlation matrix cannot be factorized shrink the bracket from that
/// side; only a failure at the starting point is reported as an error.
pub fn mle_theta(design: &Design, theta_init: f64, bounds: (f64, f64), eta: f64) -> Result<MleFit> {
    let (lo, hi) = bounds;
    if !(lo > 0.0) || !(lo <= hi) || !(lo <= theta_init && theta_init <= hi) {
        return Err(LagpError::Parameter(format!(
            "need 0 < lo <= theta_init <= hi, got lo={lo}, theta_init={theta_init}, hi={hi}"
        )));
    }
    let base = Hyperparameters::new(theta_init, eta)?;
    let eval = |u: f64| log_likelihood_derivatives(design, &base.with_theta(u.exp())?);

    let (u_lo, u_hi) = (lo.ln(), hi.ln());
    let (mut a, mut b) = (u_lo, u_hi);
    let mut u = theta_init.ln();
    let mut current = Some(eval(u)?);
    let mut best = (u, f64::NEG_INFINITY);
    let (mut lo_tried, mut hi_tried) = (false, false);
    let mut iterations = 0;
    let finish = |best: (f64, f64), iterations, at_boundary| MleFit {
        theta: best.0.exp().clamp(lo, hi),
        loglik: best.1,
        iterations,
        at_boundary,
    };

    while iterations < MLE_MAX_ITER {
        iterations += 1;
        lo_tried |= u == u_lo;
        hi_tried |= u == u_hi;
        let ev = match current.take().map_or_else(|| eval(u), Ok) {
            Ok(ev) => ev,
            Err(_) => {
                if u > best.0 {
                    b = u;
                } else {
                    a = u;
                }
                if b - a < 1e-10 {
                    break;
                }
                u = 0.5 * (a + b);
                continue;
            }
        };
        if ev.loglik > best.1 {
            best = (u, ev.loglik);
        }
        // a stationary point below an earlier iterate loses to that iterate
        if ev.d_theta.abs() <= MLE_GRAD_TOL * (1.0 + ev.loglik.abs()) {
            return Ok(finish(best, iterations, false));
        }
        if (u == u_hi && ev.d_theta > 0.0) || (u == u_lo && ev.d_theta < 0.0) {
            return Ok(finish(best, iterations, best.0 == u));
        }
        if ev.d_theta > 0.0 {
            a = u;
        } else {
            b = u;
        }
        if b - a < 1e-10 {
            break;
        }
        // derivatives with respect to u = log θ
        let theta = u.exp();
        let gu = theta * ev.d_theta;
        let hu = theta * theta * ev.d2_theta + gu;
        let newton = if hu < 0.0 { u - gu / hu } else { f64::NAN };
        u = if newton > a && newton < b {
            newton
        } else if newton >= b && b == u_hi && !hi_tried {
            u_hi
        } else if newton <= a && a == u_lo && !lo_tried {
            u_lo
        } else {
            0.5 * (a + b)
        };
    }

    let at_boundary = (best.0 - u_lo).abs() < 1e-9 || (best.0 - u_hi).abs() < 1e-9;
    Ok(finish(best, iterations, at_boundary))
}
