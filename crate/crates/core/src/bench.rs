//! The borehole benchmark: accuracy and wall-clock time of a global
//! emulation as the design grows.

use std::time::Duration;

use crate::alc::AlcBackend;
use crate::emulate::{emulate, fidelity_schedule, EmulationJob, DEFAULT_BACKEND_MIX};
use crate::error::Result;
use crate::gp::Design;
use crate::local::{LocalDesignParams, Method};
use crate::synth::{borehole, lhs_sample, LhsSpec};

/// Seed offset separating the prediction set from the design.
const PREDICTION_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoreholeCase {
    /// Design size `N`.
    pub size: usize,
    /// Number of prediction locations; the usual choice is `size`.
    pub locations: usize,
    pub seed: u64,
    pub workers: usize,
    pub method: Method,
    /// `(n, n_close)`; `None` uses [`fidelity_schedule`].
    pub fidelity: Option<(usize, usize)>,
    pub backend_mix: f64,
}

impl BoreholeCase {
    pub fn new(size: usize, seed: u64) -> Self {
        Self {
            size,
            locations: size,
            seed,
            workers: 1,
            method: Method::Alc,
            fidelity: None,
            backend_mix: DEFAULT_BACKEND_MIX,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchmarkRow {
    pub size: usize,
    pub n: usize,
    pub n_close: usize,
    pub workers: usize,
    pub seconds: f64,
    pub mse: f64,
    pub failures: usize,
    pub design_search: Duration,
    pub mle: Duration,
}

/// Latin hypercube design on the unit cube with borehole responses.
pub fn borehole_design(size: usize, seed: u64) -> Result<Design> {
    let x = lhs_sample(&LhsSpec::unit(size, 8, seed))?;
    let y = x.chunks(8).map(borehole).collect::<Result<Vec<_>>>()?;
    Design::new(x, 8, y)
}

/// Prediction locations for a case, drawn independently of the design.
pub fn borehole_locations(case: &BoreholeCase) -> Result<Vec<f64>> {
    lhs_sample(&LhsSpec::unit(case.locations, 8, case.seed ^ PREDICTION_STREAM))
}

/// Runs one case. Responses are centred on their sample mean before fitting
/// (the local GPs have zero mean) and the mean is added back to predictions.
/// Failed locations are counted and left out of the MSE.
pub fn run_borehole(case: &BoreholeCase) -> Result<BenchmarkRow> {
    let raw = borehole_design(case.size, case.seed)?;
    let mean = raw.responses().iter().sum::<f64>() / raw.len() as f64;
    let centred: Vec<f64> = raw.responses().iter().map(|y| y - mean).collect();
    let design = Design::new(raw.inputs().to_vec(), 8, centred)?;
    let locations = borehole_locations(case)?;

    let (n, n_close) = case.fidelity.unwrap_or_else(|| fidelity_schedule(case.size));
    let params = LocalDesignParams {
        n_close,
        method: case.method,
        backend: AlcBackend::Serial,
        ..LocalDesignParams::with_defaults(n, case.size)
    };
    let job = EmulationJob {
        workers: case.workers,
        backend_mix: case.backend_mix,
        ..EmulationJob::new(&design, &locations, params)
    };
    let result = emulate(&job)?;

    let mut sse = 0.0;
    let mut counted = 0usize;
    for (pred, x) in result.predictions().zip(locations.chunks(8)) {
        if let Some(p) = pred {
            sse += (p.mean + mean - borehole(x)?).powi(2);
            counted += 1;
        }
    }
    Ok(BenchmarkRow {
        size: case.size,
        n,
        n_close,
        workers: case.workers,
        seconds: result.timing.total.as_secs_f64(),
        mse: if counted > 0 { sse / counted as f64 } else { f64::NAN },
        failures: result.failures(),
        design_search: result.timing.phases.design_search,
        mle: result.timing.phases.mle,
    })
}
