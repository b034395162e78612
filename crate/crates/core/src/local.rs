//! Greedy local designs and the multi-stage local fit.

use std::time::{Duration, Instant};

use crate::alc::{AlcBackend, CandidateSet};
use crate::error::{LagpError, Result};
use crate::gp::{mle_theta, Design, Hyperparameters, LocalState, Prediction, DEFAULT_NUGGET};
use crate::knn::nearest_neighbors;
use crate::linalg::sq_dist;

/// Largest local design size supported.
pub const MAX_LOCAL_SIZE: usize = 1023;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    #[default]
    Alc,
    Nn,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalDesignParams {
    pub n0: usize,
    pub n: usize,
    /// Size of the nearest-neighbour candidate pool.
    pub n_close: usize,
    /// Starting lengthscale; `None` derives it from the candidate pool.
    pub theta0: Option<f64>,
    pub eta: f64,
    pub stages: usize,
    pub method: Method,
    pub backend: AlcBackend,
}

impl LocalDesignParams {
    /// Defaults for a local design of size `n` drawn from `design_len` rows:
    /// `n0 = 6`, two stages, and a pool of `min(N - n, 100 n)` neighbours.
    pub fn with_defaults(n: usize, design_len: usize) -> Self {
        Self {
            n0: 6.min(n.saturating_sub(1)).max(2),
            n,
            n_close: design_len.saturating_sub(n).min(100 * n).max(n),
            theta0: None,
            eta: DEFAULT_NUGGET,
            stages: 2,
            method: Method::Alc,
            backend: AlcBackend::Serial,
        }
    }

    pub fn validate(&self, design_len: usize) -> Result<()> {
        let fail = |msg: String| Err(LagpError::Parameter(msg));
        if self.n0 < 2 || self.n0 >= self.n {
            return fail(format!("need 2 <= n0 < n, got n0={} n={}", self.n0, self.n));
        }
        if self.n > self.n_close {
            return fail(format!("need n <= n_close, got n={} n_close={}", self.n, self.n_close));
        }
        if self.n > MAX_LOCAL_SIZE {
            return fail(format!("local design size {} exceeds {MAX_LOCAL_SIZE}", self.n));
        }
        if self.n_close > design_len {
            return fail(format!(
                "candidate pool of {} exceeds design of {design_len} rows",
                self.n_close
            ));
        }
        if self.stages == 0 {
            return fail("stages must be >= 1".into());
        }
        if let Some(t) = self.theta0 {
            if !(t > 0.0) || !t.is_finite() {
                return fail(format!("theta0 must be positive, got {t}"));
            }
        }
        if !(self.eta >= 0.0) || !self.eta.is_finite() {
            return fail(format!("eta must be non-negative, got {}", self.eta));
        }
        Ok(())
    }
}

/// Unscaled predictive variance at the reference point after each greedy step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DesignTrace {
    pub variances: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseTiming {
    pub design_search: Duration,
    pub mle: Duration,
}

#[derive(Debug, Clone)]
pub struct LocalFit {
    pub state: LocalState,
    pub theta_hat: f64,
    pub x_ref: Vec<f64>,
    pub stage_count: usize,
    pub prediction: Prediction,
    /// Set when a likelihood search failed and the incoming θ was kept.
    pub mle_fallback: bool,
    pub timing: PhaseTiming,
}

/// Mean squared distance from `x_ref` to the pool rows.
pub fn pool_theta0(design: &Design, x_ref: &[f64], pool: &[usize]) -> f64 {
    pool.iter().map(|&i| sq_dist(design.row(i), x_ref)).sum::<f64>() / pool.len() as f64
}

/// Likelihood search bounds for a local design: `[1e-3 d̄, 10 d̄]` with `d̄`
/// the mean squared nearest-neighbour distance inside the design.
pub fn mle_bounds(local: &Design) -> (f64, f64) {
    let n = local.len();
    let mut total = 0.0;
    let mut counted = 0;
    for i in 0..n {
        let nearest = (0..n)
            .filter(|&k| k != i)
            .map(|k| sq_dist(local.row(i), local.row(k)))
            .filter(|&d| d > 0.0)
            .fold(f64::INFINITY, f64::min);
        if nearest.is_finite() {
            total += nearest;
            counted += 1;
        }
    }
    let dbar = if counted > 0 { total / counted as f64 } else { 1.0 };
    (1e-3 * dbar, 10.0 * dbar)
}

/// Greedy (or nearest-neighbour) local design over a fixed candidate pool,
/// which must be ordered by distance to `x_ref`.
pub fn local_design_in_pool(
    design: &Design,
    x_ref: &[f64],
    params: &LocalDesignParams,
    theta_x: f64,
    pool: &[usize],
) -> Result<(LocalState, DesignTrace)> {
    let hyper = Hyperparameters::new(theta_x, params.eta)?;
    if pool.len() < params.n {
        return Err(LagpError::Parameter(format!(
            "pool of {} rows is smaller than n = {}",
            pool.len(),
            params.n
        )));
    }
    match params.method {
        Method::Nn => {
            let state = LocalState::from_indices(design, &pool[..params.n], hyper)?;
            let trace = DesignTrace {
                variances: vec![state.reduced_variance(x_ref)?],
            };
            Ok((state, trace))
        }
        Method::Alc => {
            let mut state = LocalState::from_indices(design, &pool[..params.n0], hyper)?;
            let mut cands = CandidateSet::from_design(design, &pool[params.n0..])?;
            let mut trace = DesignTrace {
                variances: vec![state.reduced_variance(x_ref)?],
            };
            while state.size() < params.n {
                let partial = |source: LagpError, reached: usize| LagpError::PartialDesign {
                    reached,
                    target: params.n,
                    source: Box::new(source),
                };
                if cands.is_empty() {
                    return Err(partial(LagpError::ExhaustedCandidates, state.size()));
                }
                let scores = params
                    .backend
                    .scores(&state, x_ref, &cands, false)
                    .map_err(|e| partial(e, state.size()))?;
                let Some(best) = scores.best else {
                    return Err(partial(LagpError::ExhaustedCandidates, state.size()));
                };
                let global = cands.remove(best);
                match state.extend(design.row(global), design.response(global), global) {
                    Ok(()) => trace.variances.push(state.reduced_variance(x_ref)?),
                    // scored as feasible but failed the extension test: drop it
                    Err(LagpError::NearSingularExtension { .. }) => continue,
                    Err(e) => return Err(partial(e, state.size())),
                }
            }
            Ok((state, trace))
        }
    }
}

/// Local design for `x_ref` at lengthscale `theta_x`, searching the
/// `n_close` nearest neighbours of `x_ref`.
pub fn local_design(
    design: &Design,
    x_ref: &[f64],
    params: &LocalDesignParams,
    theta_x: f64,
) -> Result<LocalState> {
    params.validate(design.len())?;
    let pool = nearest_neighbors(design, x_ref, params.n_close)?;
    local_design_in_pool(design, x_ref, params, theta_x, &pool).map(|(s, _)| s)
}

/// Multi-stage fit given the candidate pool.
pub fn local_fit_in_pool(
    design: &Design,
    x_ref: &[f64],
    params: &LocalDesignParams,
    pool: &[usize],
) -> Result<LocalFit> {
    let mut theta_x = params.theta0.unwrap_or_else(|| pool_theta0(design, x_ref, pool));
    let mut timing = PhaseTiming::default();
    let mut fallback = false;
    let mut state = None;

    for _ in 0..params.stages {
        let t = Instant::now();
        let (s, _) = local_design_in_pool(design, x_ref, params, theta_x, pool)?;
        timing.design_search += t.elapsed();

        let t = Instant::now();
        let local = design.subset(s.chosen_indices());
        let (lo, hi) = mle_bounds(&local);
        let (lo, hi) = (lo.min(theta_x), hi.max(theta_x));
        match mle_theta(&local, theta_x, (lo, hi), params.eta) {
            Ok(fit) => theta_x = fit.theta,
            Err(_) => fallback = true,
        }
        timing.mle += t.elapsed();
        state = Some(s);
    }

    let chosen = state.expect("stages >= 1").chosen_indices().to_vec();
    let hyper = Hyperparameters::new(theta_x, params.eta)?;
    let state = LocalState::from_indices(design, &chosen, hyper)?;
    let prediction = state.predict(x_ref)?;
    Ok(LocalFit {
        state,
        theta_hat: theta_x,
        x_ref: x_ref.to_vec(),
        stage_count: params.stages,
        prediction,
        mle_fallback: fallback,
        timing,
    })
}

/// Local design, likelihood refit, and prediction at `x_ref`.
pub fn local_fit(design: &Design, x_ref: &[f64], params: &LocalDesignParams) -> Result<LocalFit> {
    params.validate(design.len())?;
    let pool = nearest_neighbors(design, x_ref, params.n_close)?;
    local_fit_in_pool(design, x_ref, params, &pool)
}
