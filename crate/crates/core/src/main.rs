use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use moreau_sgd::harness::{
    estimate_sigma_for, run_experiment, run_verification, Algorithm, DataFormat, ExperimentConfig,
    SigmaSource, Suite, VerifyOptions,
};
use moreau_sgd::optim::OutputRule;

#[derive(Parser)]
#[command(
    name = "moreau-sgd",
    version,
    about = "Stochastic envelope-majorant methods for non-convex regularized ERM"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment (or `--repeat k` seeds) and write its trace.
    Run(ExperimentArgs),
    /// Estimate the gradient-noise level used to cap the MBSGA step size.
    EstimateSigma(ExperimentArgs),
    /// Run verification suites and print a JSON report.
    Verify(VerifyArgs),
}

/// Flags override the values read from `--config`.
#[derive(Args)]
struct ExperimentArgs {
    /// JSON experiment manifest.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset path; for `idx`, the image file or `images,labels`.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, value_parser = parse_via::<DataFormat>)]
    format: Option<DataFormat>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    positive_class: Option<f64>,
    #[arg(long, value_parser = parse_via::<Algorithm>)]
    algo: Option<Algorithm>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    /// Penalty weight; defaults to 1/d.
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    nu: Option<f64>,
    /// Budget in effective passes over the data.
    #[arg(long)]
    passes: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Seed of the sigma trial run.
    #[arg(long)]
    sigma_seed: Option<u64>,
    /// `last_iterate` or `random_r`.
    #[arg(long, value_parser = parse_via::<OutputRule>)]
    output_rule: Option<OutputRule>,
    /// `estimate` or a non-negative number.
    #[arg(long, value_parser = parse_via::<SigmaSource>)]
    sigma: Option<SigmaSource>,
    /// Trace file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Record every this many iterations (0 = about 200 records).
    #[arg(long)]
    record_every: Option<usize>,
    /// Skip evaluating the majorant gradient norm at records.
    #[arg(long)]
    no_grad_norm: bool,
    /// Number of seeds to run concurrently.
    #[arg(long)]
    repeat: Option<usize>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Suite to run; repeatable. All suites when absent.
    #[arg(long = "suite", value_parser = parse_via::<Suite>)]
    suites: Vec<Suite>,
    #[arg(long)]
    seed: Option<u64>,
    /// Shrink the randomized case counts.
    #[arg(long)]
    quick: bool,
    /// Also write the report to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_via<T: std::str::FromStr<Err = moreau_sgd::Error>>(s: &str) -> Result<T, String> {
    s.parse().map_err(|e: moreau_sgd::Error| e.to_string())
}

impl ExperimentArgs {
    fn resolve(self) -> moreau_sgd::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_json_file(path)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! take {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { cfg.$field = v; })*
            };
        }
        macro_rules! take_opt {
            ($($field:ident),*) => {
                $(if self.$field.is_some() { cfg.$field = self.$field; })*
            };
        }
        take_opt!(data, dim, positive_class, alpha, theta, kappa, sigma_seed);
        take!(
            format,
            algo,
            nu,
            passes,
            seed,
            output_rule,
            sigma,
            out,
            record_every,
            repeat
        );
        if self.no_grad_norm {
            cfg.grad_norm = false;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::EstimateSigma(args) => cmd_estimate_sigma(args),
        Command::Verify(args) => cmd_verify(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn cmd_run(args: ExperimentArgs) -> moreau_sgd::Result<ExitCode> {
    let cfg = args.resolve()?;
    let summaries = run_experiment(&cfg)?;
    for s in &summaries {
        println!("seed = {}", s.seed);
        println!("kappa = {}", s.kappa);
        println!("nu = {}", s.nu);
        println!("{}", s.derived);
        if let Some(sigma) = s.sigma_estimate {
            println!("sigma_hat = {sigma}");
        }
        println!("iterations = {}", s.iterations);
        println!("grad_calls = {}", s.counters.grad_calls);
        println!("prox_calls = {}", s.counters.prox_calls);
        println!("h_initial = {}", s.initial_objective);
        println!("h_final = {}", s.final_objective);
        println!("trace = {}", s.trace_path.display());
        println!();
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_estimate_sigma(args: ExperimentArgs) -> moreau_sgd::Result<ExitCode> {
    let cfg = args.resolve()?;
    let est = estimate_sigma_for(&cfg)?;
    println!("sigma_hat = {}", est.sigma);
    println!("M = {}", est.params.batch);
    println!("lambda = {}", est.params.lambda);
    println!("gamma = {}", est.params.gamma);
    println!("k,sigma_k");
    for (k, s) in est.per_iteration.iter().enumerate() {
        println!("{},{}", k + 1, s);
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(args: VerifyArgs) -> moreau_sgd::Result<ExitCode> {
    let mut opts = if args.quick {
        VerifyOptions::quick(VerifyOptions::default().seed)
    } else {
        VerifyOptions::default()
    };
    if let Some(seed) = args.seed {
        opts.seed = seed;
    }
    let suites = if args.suites.is_empty() {
        Suite::ALL.to_vec()
    } else {
        args.suites
    };
    let mut reports = Vec::new();
    for suite in suites {
        let report = run_verification(suite, &opts)?;
        for c in &report.checks {
            eprintln!(
                "{} {}/{}: measured {:e}, tolerance {:e}",
                if c.passed { "PASS" } else { "FAIL" },
                suite.name(),
                c.name,
                c.measured,
                c.tolerance
            );
        }
        reports.push(report);
    }
    let passed = reports.iter().all(|r| r.passed);
    let json = serde_json::json!({ "passed": passed, "suites": reports });
    let text = serde_json::to_string_pretty(&json).expect("report serializes");
    println!("{text}");
    if let Some(path) = args.out {
        std::fs::write(path, format!("{text}\n"))?;
    }
    Ok(if passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}
