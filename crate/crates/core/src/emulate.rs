//! Global emulation: many independent local fits over a worker pool.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::alc::AlcBackend;
use crate::error::{LagpError, Result};
use crate::gp::{Design, Prediction};
use crate::knn::KdTree;
use crate::local::{local_fit_in_pool, LocalDesignParams, PhaseTiming};

/// Share of locations scored with the batch evaluator when not specified.
pub const DEFAULT_BACKEND_MIX: f64 = 0.8;

#[derive(Debug, Clone)]
pub struct EmulationJob<'a> {
    pub design: &'a Design,
    /// Row-major `M × p` prediction locations.
    pub pred_locations: &'a [f64],
    pub params: LocalDesignParams,
    pub workers: usize,
    /// Fraction of locations whose design search uses the batch evaluator.
    pub backend_mix: f64,
    /// `(offset, length)` window into the prediction locations.
    pub chunk: Option<(usize, usize)>,
}

impl<'a> EmulationJob<'a> {
    pub fn new(design: &'a Design, pred_locations: &'a [f64], params: LocalDesignParams) -> Self {
        Self {
            design,
            pred_locations,
            params,
            workers: 1,
            backend_mix: DEFAULT_BACKEND_MIX,
            chunk: None,
        }
    }

    pub fn locations(&self) -> usize {
        self.pred_locations.len() / self.design.dim()
    }

    fn window(&self) -> Result<(usize, usize)> {
        let m = self.locations();
        match self.chunk {
            None => Ok((0, m)),
            Some((offset, len)) if offset.checked_add(len).is_some_and(|end| end <= m) => {
                Ok((offset, len))
            }
            Some((offset, len)) => Err(LagpError::Parameter(format!(
                "chunk ({offset}, {len}) does not fit in {m} locations"
            ))),
        }
    }
}

/// Outcome at one prediction location.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationFit {
    pub prediction: Prediction,
    pub theta_hat: f64,
    pub chosen_indices: Vec<usize>,
    pub mle_fallback: bool,
    pub backend: AlcBackend,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EmulationTiming {
    pub total: Duration,
    /// Summed over locations, so it can exceed `total` with several workers.
    pub phases: PhaseTiming,
}

#[derive(Debug, Clone)]
pub struct EmulationResult {
    /// One slot per location, in input order.
    pub outcomes: Vec<Result<LocationFit>>,
    pub timing: EmulationTiming,
    /// Locations completed by each worker thread.
    pub worker_stats: Vec<usize>,
}

impl EmulationResult {
    pub fn predictions(&self) -> impl Iterator<Item = Option<&Prediction>> {
        self.outcomes.iter().map(|o| o.as_ref().ok().map(|f| &f.prediction))
    }

    pub fn per_location_theta(&self) -> Vec<Option<f64>> {
        self.outcomes
            .iter()
            .map(|o| o.as_ref().ok().map(|f| f.theta_hat))
            .collect()
    }

    pub fn failures(&self) -> usize {
        self.outcomes.iter().filter(|o| o.is_err()).count()
    }
}

/// Spreads `mix · M` batch locations evenly over the global location index.
pub fn backend_for(location: usize, mix: f64) -> AlcBackend {
    let before = (location as f64 * mix).floor();
    let after = ((location + 1) as f64 * mix).floor();
    if after > before {
        AlcBackend::Batch
    } else {
        AlcBackend::Serial
    }
}

/// Runs [`local_fit`](crate::local::local_fit) at every location of the
/// job's window on a pool of `workers` threads. Per-location failures are
/// stored in their slot; only an invalid job is an error.
pub fn emulate(job: &EmulationJob) -> Result<EmulationResult> {
    let design = job.design;
    let p = design.dim();
    if !job.pred_locations.len().is_multiple_of(p) {
        return Err(LagpError::Dimension {
            expected: p,
            got: job.pred_locations.len() % p,
        });
    }
    if job.workers == 0 {
        return Err(LagpError::Parameter("workers must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&job.backend_mix) {
        return Err(LagpError::Parameter(format!(
            "backend mix must lie in [0, 1], got {}",
            job.backend_mix
        )));
    }
    job.params.validate(design.len())?;
    let (offset, len) = job.window()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(job.workers)
        .build()
        .map_err(|e| LagpError::Parameter(format!("cannot start worker pool: {e}")))?;
    let counters: Vec<AtomicUsize> = (0..job.workers).map(|_| AtomicUsize::new(0)).collect();

    let start = Instant::now();
    let tree = KdTree::new(design);
    let results: Vec<(Result<LocationFit>, PhaseTiming)> = pool.install(|| {
        (offset..offset + len)
            .into_par_iter()
            .with_max_len(1)
            .map(|g| {
                if let Some(w) = rayon::current_thread_index() {
                    counters[w].fetch_add(1, Ordering::Relaxed);
                }
                let x = &job.pred_locations[g * p..(g + 1) * p];
                let backend = backend_for(g, job.backend_mix);
                let params = LocalDesignParams {
                    backend,
                    ..job.params
                };
                let fit = tree
                    .nearest(x, params.n_close)
                    .and_then(|near| local_fit_in_pool(design, x, &params, &near));
                match fit {
                    Ok(fit) => {
                        let timing = fit.timing;
                        let out = LocationFit {
                            prediction: fit.prediction,
                            theta_hat: fit.theta_hat,
                            chosen_indices: fit.state.chosen_indices().to_vec(),
                            mle_fallback: fit.mle_fallback,
                            backend,
                        };
                        (Ok(out), timing)
                    }
                    Err(e) => (Err(e), PhaseTiming::default()),
                }
            })
            .collect()
    });
    let total = start.elapsed();

    let mut phases = PhaseTiming::default();
    let mut outcomes = Vec::with_capacity(results.len());
    for (outcome, t) in results {
        phases.design_search += t.design_search;
        phases.mle += t.mle;
        outcomes.push(outcome);
    }
    Ok(EmulationResult {
        outcomes,
        timing: EmulationTiming { total, phases },
        worker_stats: counters.into_iter().map(AtomicUsize::into_inner).collect(),
    })
}

/// Tabulated `(N, n, N')` fidelity settings for the borehole sweep.
pub const FIDELITY_TABLE: [(usize, usize, usize); 11] = [
    (1_000, 40, 100),
    (2_000, 42, 150),
    (4_000, 44, 225),
    (8_000, 46, 338),
    (16_000, 48, 507),
    (32_000, 50, 760),
    (64_000, 52, 1_140),
    (128_000, 54, 1_710),
    (256_000, 56, 2_565),
    (512_000, 58, 3_848),
    (1_024_000, 60, 5_772),
];

/// `(n, n_close)` for a design of `n_design` rows: two more local points and
/// half again as many candidates per doubling of the design, starting from
/// `(40, 100)` at 1000 rows. Sizes between tabulated rows use the row below;
/// sizes beyond the table keep compounding from its last row.
pub fn fidelity_schedule(n_design: usize) -> (usize, usize) {
    let mut doublings = 0usize;
    while n_design >= 1_000usize << (doublings + 1) {
        doublings += 1;
    }
    if let Some(&(_, n, close)) = FIDELITY_TABLE.get(doublings) {
        return (n, close);
    }
    let (_, mut n, mut close) = FIDELITY_TABLE[FIDELITY_TABLE.len() - 1];
    for _ in FIDELITY_TABLE.len() - 1..doublings {
        n += 2;
        // f64::round rounds half away from zero
        close = (close as f64 * 1.5).round() as usize;
    }
    (n, close)
}
