use std::fs::File;
use std::io::{BufReader, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use trunctail::asymptotics::{dn_process, gamma_process_variance, limit_moments_with, AsymptoticParams, PhiForm};
use trunctail::estimators::{EstimatorKind, EstimatorOptions, PreparedSample, TailConvention};
use trunctail::kernels::{BuiltinKernel, Kernel};
use trunctail::model::ObservedSample;
use trunctail::selftest::{self, CorruptedKernel};
use trunctail::simulation::{rt_estimate, run_grid, SimulationConfig};
use trunctail::threshold::RtConfig;
use trunctail::Error;

const EXIT_SELFTEST: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_ESTIMATOR: u8 = 3;

#[derive(Parser)]
#[command(name = "trunctail", version, about = "Tail-index estimation under random right truncation")]
struct Cli {
    /// Worker threads for simulations (0 = all cores).
    #[arg(long, global = true, env = "TRUNCTAIL_THREADS", default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the tail index of X from a CSV file with header `x,y`.
    Estimate(EstimateArgs),
    /// Run a Monte Carlo grid described by a key = value config file.
    Simulate(SimulateArgs),
    /// Limiting bias and variance of the kernel estimator.
    Asymptotics(AsymptoticsArgs),
    /// Run the built-in consistency checks.
    Selftest(SelftestArgs),
}

#[derive(Args)]
struct EstimateArgs {
    data: PathBuf,
    #[arg(long, default_value = "kernel")]
    estimator: EstimatorKind,
    #[arg(long, default_value = "biweight")]
    kernel: BuiltinKernel,
    /// Number of top order statistics.
    #[arg(long, conflicts_with = "k_auto", required_unless_present = "k_auto", allow_negative_numbers = true)]
    k: Option<i64>,
    /// Choose k with the stability criterion.
    #[arg(long)]
    k_auto: bool,
    #[arg(long, default_value_t = RtConfig::default().theta)]
    rt_theta: f64,
    #[arg(long, default_value = "partial-sum")]
    tail_convention: TailConvention,
    #[arg(long)]
    json: bool,
    /// Write the D_n diagnostic curve as CSV (`x,dn`).
    #[arg(long)]
    dn_dump: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    config: PathBuf,
    /// CSV report path.
    #[arg(long, default_value = "simulation_report.csv")]
    out: PathBuf,
    /// Override the replicate count of the config.
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct AsymptoticsArgs {
    #[arg(long)]
    gamma1: f64,
    /// Tail index of the truncating variable; omit (with --p) for complete data.
    #[arg(long, conflicts_with = "p")]
    gamma2: Option<f64>,
    /// Observed fraction `gamma2 / (gamma1 + gamma2)`.
    #[arg(long)]
    p: Option<f64>,
    #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
    tau1: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    lambda: f64,
    #[arg(long, default_value = "biweight")]
    kernel: BuiltinKernel,
    #[arg(long, default_value = "derived")]
    phi_form: PhiFormArg,
    #[arg(long, default_value_t = 10_000)]
    mc_paths: usize,
    #[arg(long, default_value_t = 4000)]
    mc_grid: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Skip the Monte Carlo check.
    #[arg(long)]
    no_mc: bool,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum PhiFormArg {
    Derived,
    Printed,
}

#[derive(Args)]
struct SelftestArgs {
    /// Add a kernel with the wrong mass, to exercise the failure path.
    #[arg(long, hide = true)]
    corrupt_kernel: bool,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidParameter { .. }
            | Error::InvalidObservation { .. }
            | Error::UnknownName { .. }
            | Error::Config { .. }
            | Error::ProbabilityOutOfRange(_) => EXIT_USAGE,
            _ => EXIT_ESTIMATOR,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        // only fails if a global pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    }
    let result = match cli.command {
        Command::Estimate(a) => estimate(a),
        Command::Simulate(a) => simulate(a),
        Command::Asymptotics(a) => asymptotics(a),
        Command::Selftest(a) => selftest(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn read_sample(path: &PathBuf) -> Result<ObservedSample, Failure> {
    let file = File::open(path).map_err(|e| Failure::usage(format!("cannot open {}: {e}", path.display())))?;
    Ok(ObservedSample::from_csv(BufReader::new(file))?)
}

fn estimate(a: EstimateArgs) -> CmdResult {
    let k_manual = match a.k {
        Some(k) if k < 2 => return Err(Failure::usage(format!("k must be ≥ 2 (got {k})"))),
        Some(k) => Some(k as usize),
        None => None,
    };
    let sample = read_sample(&a.data)?;
    let options = EstimatorOptions {
        tail: a.tail_convention,
        ..Default::default()
    };
    let prepared = PreparedSample::new(&sample, options);
    let kernel: &dyn Kernel = &a.kernel;
    let (k, gamma1_hat) = match k_manual {
        Some(k) => (k, prepared.estimate(a.estimator, k, kernel)?.gamma1_hat),
        None => {
            let rt = RtConfig {
                theta: a.rt_theta,
                ..Default::default()
            };
            rt_estimate(&prepared, a.estimator, kernel, &rt)?
        }
    };
    if a.json {
        let out = json!({
            "estimator": a.estimator.as_str(),
            "k": k,
            "gamma1_hat": gamma1_hat,
            "n": sample.len(),
        });
        println!("{out}");
    } else {
        println!("estimator   {}", a.estimator);
        if a.estimator == EstimatorKind::Kernel {
            println!("kernel      {}", a.kernel);
        }
        println!("n           {}", sample.len());
        println!("k           {k}");
        println!("gamma1_hat  {gamma1_hat}");
    }
    if let Some(path) = a.dn_dump {
        write_dn(&sample, k, kernel, &path)?;
    }
    Ok(())
}

fn write_dn(sample: &ObservedSample, k: usize, kernel: &dyn Kernel, path: &PathBuf) -> CmdResult {
    let view = PreparedSample::new(sample, EstimatorOptions::default());
    let span = view.view().top_x(1) / view.view().top_x(k + 1);
    let upper = (1.5 * span).max(1.0 + 1e-9);
    let points = 200;
    let grid: Vec<f64> = (0..points)
        .map(|i| upper.powf(i as f64 / (points - 1) as f64))
        .collect();
    let dn = dn_process(sample, k, &grid, kernel)?;
    let mut w = csv::Writer::from_path(path).map_err(|e| Failure::usage(format!("cannot write {}: {e}", path.display())))?;
    let io = |e: csv::Error| Failure::usage(format!("cannot write {}: {e}", path.display()));
    w.write_record(["x", "dn"]).map_err(io)?;
    for (x, d) in grid.iter().zip(&dn) {
        w.write_record([x.to_string(), d.to_string()]).map_err(io)?;
    }
    w.flush().map_err(|e| Failure::usage(e.to_string()))?;
    Ok(())
}

fn simulate(a: SimulateArgs) -> CmdResult {
    let text = std::fs::read_to_string(&a.config)
        .map_err(|e| Failure::usage(format!("cannot read {}: {e}", a.config.display())))?;
    let mut cfg = SimulationConfig::parse(&text)?;
    if let Some(r) = a.replicates {
        cfg.replicates = r;
    }
    let report = run_grid(&cfg)?;
    let mut file =
        File::create(&a.out).map_err(|e| Failure::usage(format!("cannot write {}: {e}", a.out.display())))?;
    file.write_all(report.to_csv().as_bytes())
        .map_err(|e| Failure::usage(format!("cannot write {}: {e}", a.out.display())))?;
    if a.json {
        let rows = serde_json::to_string(&report.rows).map_err(|e| Failure::usage(e.to_string()))?;
        println!("{rows}");
    } else {
        print!("{}", report.to_table());
        println!("report written to {}", a.out.display());
    }
    Ok(())
}

fn asymptotics(a: AsymptoticsArgs) -> CmdResult {
    let params = match (a.gamma2, a.p) {
        (_, Some(p)) => AsymptoticParams::from_observed_fraction(a.gamma1, p, a.tau1, a.lambda)?,
        (g2, None) => AsymptoticParams::new(a.gamma1, g2, a.tau1, a.lambda)?,
    };
    let form = match a.phi_form {
        PhiFormArg::Derived => PhiForm::Derived,
        PhiFormArg::Printed => PhiForm::Printed,
    };
    let moments = limit_moments_with(&params, &a.kernel, form)?;
    let (mc_sigma2, mc_stderr) = if a.no_mc {
        (None, None)
    } else {
        let mc = gamma_process_variance(&params, &a.kernel, a.mc_paths, a.mc_grid, a.seed)?;
        (Some(mc.variance), Some(mc.stderr))
    };
    let out = json!({
        "mu": moments.mu,
        "sigma2": moments.sigma2,
        "quadrature_error": moments.quadrature_error,
        "mc_sigma2": mc_sigma2,
        "mc_stderr": mc_stderr,
    });
    println!("{out}");
    Ok(())
}

fn selftest(a: SelftestArgs) -> CmdResult {
    let corrupted = CorruptedKernel;
    let extra: Vec<&dyn Kernel> = if a.corrupt_kernel { vec![&corrupted] } else { vec![] };
    let checks = selftest::run(&extra);
    for c in &checks {
        println!("{c}");
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_SELFTEST,
            message: format!("failed: {}", failed.join("; ")),
        })
    }
}
