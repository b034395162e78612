//! `lagp`: local approximate GP emulation from the command line.
//!
//! Exit codes: 0 on success, 1 when some prediction locations failed
//! numerically, 2 for usage and input errors.

mod table;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lagp::bench::{run_borehole, BoreholeCase};
use lagp::emulate::DEFAULT_BACKEND_MIX;
use lagp::gp::DEFAULT_NUGGET;
use lagp::synth::{borehole, gp_sample_path, lhs_sample, LhsSpec};
use lagp::{emulate, Design, EmulationJob, Hyperparameters, LocalDesignParams, Method};

use table::{fmt_float, output, read_design, read_locations};

#[derive(Parser, Debug)]
#[command(name = "lagp", version, about = "Local approximate Gaussian process emulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a local GP at every row of a prediction file.
    Predict(PredictArgs),
    /// Borehole accuracy and timing sweep over design sizes.
    Benchmark(BenchmarkArgs),
    /// Write a Latin hypercube design with synthetic responses.
    Gen(GenArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum MethodArg {
    Alc,
    Nn,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Alc => Method::Alc,
            MethodArg::Nn => Method::Nn,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ResponseArg {
    /// Eight-input borehole function.
    Borehole,
    /// Draw from a zero-mean GP with the given lengthscale.
    Gp,
}

#[derive(Args, Debug)]
struct LocalArgs {
    /// Local design size.
    #[arg(long, default_value_t = 50)]
    n: usize,
    /// Nearest neighbours seeding each local design.
    #[arg(long, default_value_t = 6)]
    n0: usize,
    /// Candidate pool size [default: min(N - n, 100 n)].
    #[arg(long)]
    close: Option<usize>,
    /// Starting lengthscale [default: derived from each candidate pool].
    #[arg(long)]
    theta0: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_NUGGET)]
    eta: f64,
    #[arg(long, default_value_t = 2)]
    stages: usize,
    #[arg(long, value_enum, default_value_t = MethodArg::Alc)]
    method: MethodArg,
    /// Fraction of locations scored with the batch evaluator.
    #[arg(long, default_value_t = DEFAULT_BACKEND_MIX)]
    backend_mix: f64,
}

impl LocalArgs {
    fn params(&self, design_len: usize) -> LocalDesignParams {
        let defaults = LocalDesignParams::with_defaults(self.n, design_len);
        LocalDesignParams {
            n0: self.n0,
            n_close: self.close.unwrap_or(defaults.n_close),
            theta0: self.theta0,
            eta: self.eta,
            stages: self.stages,
            method: self.method.into(),
            ..defaults
        }
    }
}

#[derive(Args, Debug)]
struct PredictArgs {
    /// Design CSV with header x1..xp,y.
    #[arg(long)]
    design: PathBuf,
    /// Prediction locations CSV with header x1..xp.
    #[arg(long)]
    pred: PathBuf,
    /// Output CSV [default: standard output].
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    local: LocalArgs,
    #[arg(long, env = "LAGP_WORKERS", default_value_t = 1)]
    workers: usize,
    /// First prediction row to process.
    #[arg(long, requires = "chunk_len")]
    chunk_offset: Option<usize>,
    /// Number of prediction rows to process.
    #[arg(long, requires = "chunk_offset")]
    chunk_len: Option<usize>,
}

#[derive(Args, Debug)]
struct BenchmarkArgs {
    /// Design sizes; the prediction set has the same size.
    #[arg(long, value_delimiter = ',', default_values_t = [1000, 2000, 4000])]
    sizes: Vec<usize>,
    /// Worker counts to time at every size.
    #[arg(long, env = "LAGP_WORKERS", value_delimiter = ',', default_values_t = [1])]
    workers: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Local design size [default: from the fidelity schedule].
    #[arg(long, requires = "close")]
    n: Option<usize>,
    /// Candidate pool size [default: from the fidelity schedule].
    #[arg(long, requires = "n")]
    close: Option<usize>,
    #[arg(long, value_enum, default_value_t = MethodArg::Alc)]
    method: MethodArg,
    #[arg(long, default_value_t = DEFAULT_BACKEND_MIX)]
    backend_mix: f64,
    /// Output CSV [default: standard output].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GenArgs {
    /// Number of rows.
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = ResponseArg::Borehole)]
    response: ResponseArg,
    /// Input dimension for GP responses (borehole is always 8).
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Lengthscale for GP responses.
    #[arg(long, default_value_t = 0.5)]
    theta: f64,
    /// Nugget for GP responses.
    #[arg(long, default_value_t = 1e-6)]
    eta: f64,
    /// Output CSV [default: standard output].
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A failure with its exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<lagp::LagpError> for Failure {
    fn from(e: lagp::LagpError) -> Self {
        Failure::input(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = match cli.command {
        Command::Predict(a) => cmd_predict(&a),
        Command::Benchmark(a) => cmd_benchmark(&a),
        Command::Gen(a) => cmd_gen(&a),
    };
    match run {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("lagp: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn cmd_predict(a: &PredictArgs) -> Result<(), Failure> {
    let design = read_design(&a.design)?;
    let locations = read_locations(&a.pred, design.dim())?;
    let params = a.local.params(design.len());
    let job = EmulationJob {
        workers: a.workers,
        backend_mix: a.local.backend_mix,
        chunk: a.chunk_offset.zip(a.chunk_len),
        ..EmulationJob::new(&design, &locations, params)
    };
    let result = emulate(&job)?;
    let p = design.dim();
    let offset = a.chunk_offset.unwrap_or(0);

    let mut header: Vec<String> = (1..=p).map(|i| format!("x{i}")).collect();
    header.extend(
        ["mean", "scale2", "dof", "variance", "theta_hat", "n_chosen"].map(String::from),
    );
    let mut w = csv::Writer::from_writer(output(a.out.as_deref())?);
    let io = |e: csv::Error| Failure::input(format!("cannot write output: {e}"));
    w.write_record(&header).map_err(io)?;
    for (k, outcome) in result.outcomes.iter().enumerate() {
        let x = &locations[(offset + k) * p..(offset + k + 1) * p];
        let mut row: Vec<String> = x.iter().map(|v| fmt_float(*v)).collect();
        match outcome {
            Ok(fit) => {
                let pr = &fit.prediction;
                row.push(fmt_float(pr.mean));
                row.push(fmt_float(pr.scale2));
                row.push(pr.dof.to_string());
                row.push(fmt_float(pr.variance.unwrap_or(f64::NAN)));
                row.push(fmt_float(fit.theta_hat));
                row.push(fit.chosen_indices.len().to_string());
            }
            Err(e) => {
                eprintln!("lagp: location {}: {e}", offset + k);
                row.extend(["NaN", "NaN", "0", "NaN", "NaN", "0"].map(String::from));
            }
        }
        w.write_record(&row).map_err(io)?;
    }
    w.flush()
        .map_err(|e| Failure::input(format!("cannot write output: {e}")))?;

    let failures = result.failures();
    let t = &result.timing;
    eprintln!(
        "lagp: {} locations, {} failed, {} workers, {:.3}s wall (design search {:.3}s, mle {:.3}s summed over locations)",
        result.outcomes.len(),
        failures,
        a.workers,
        t.total.as_secs_f64(),
        t.phases.design_search.as_secs_f64(),
        t.phases.mle.as_secs_f64()
    );
    if failures > 0 {
        return Err(Failure {
            code: 1,
            message: format!(
                "{failures} of {} locations failed ({:.2}%)",
                result.outcomes.len(),
                100.0 * failures as f64 / result.outcomes.len() as f64
            ),
        });
    }
    Ok(())
}

fn cmd_benchmark(a: &BenchmarkArgs) -> Result<(), Failure> {
    if a.sizes.is_empty() || a.workers.is_empty() {
        return Err(Failure::input("need at least one size and one worker count"));
    }
    let mut w = csv::Writer::from_writer(output(a.out.as_deref())?);
    let io = |e: csv::Error| Failure::input(format!("cannot write output: {e}"));
    w.write_record(["N", "n", "n_close", "workers", "seconds", "mse"])
        .map_err(io)?;
    let mut failures = 0;
    for &size in &a.sizes {
        for &workers in &a.workers {
            let case = BoreholeCase {
                workers,
                method: a.method.into(),
                fidelity: a.n.zip(a.close),
                backend_mix: a.backend_mix,
                ..BoreholeCase::new(size, a.seed)
            };
            let row = run_borehole(&case)?;
            failures += row.failures;
            eprintln!(
                "lagp: N={size} workers={workers}: {:.3}s, mse {:.4}, {} failed",
                row.seconds, row.mse, row.failures
            );
            w.write_record([
                row.size.to_string(),
                row.n.to_string(),
                row.n_close.to_string(),
                row.workers.to_string(),
                fmt_float(row.seconds),
                fmt_float(row.mse),
            ])
            .map_err(io)?;
            w.flush()
                .map_err(|e| Failure::input(format!("cannot write output: {e}")))?;
        }
    }
    if failures > 0 {
        return Err(Failure {
            code: 1,
            message: format!("{failures} locations failed across the sweep"),
        });
    }
    Ok(())
}

fn cmd_gen(a: &GenArgs) -> Result<(), Failure> {
    if a.n == 0 {
        return Err(Failure::input("--n must be at least 1"));
    }
    let (x, p, y) = match a.response {
        ResponseArg::Borehole => {
            let x = lhs_sample(&LhsSpec::unit(a.n, 8, a.seed))?;
            let y = x.chunks(8).map(borehole).collect::<lagp::Result<Vec<_>>>()?;
            (x, 8, y)
        }
        ResponseArg::Gp => {
            if a.dim == 0 {
                return Err(Failure::input("--dim must be at least 1"));
            }
            let x = lhs_sample(&LhsSpec::unit(a.n, a.dim, a.seed))?;
            let h = Hyperparameters::new(a.theta, a.eta)?;
            // separate stream for the path so inputs match the borehole case
            let y = gp_sample_path(&x, a.dim, &h, a.seed.wrapping_add(1))?;
            (x, a.dim, y)
        }
    };
    let design = Design::new(x, p, y)?;
    let mut out = output(a.out.as_deref())?;
    table::write_design(&mut out, &design)
        .and_then(|()| out.flush())
        .map_err(|e| Failure::input(format!("cannot write output: {e}")))?;
    Ok(())
}
