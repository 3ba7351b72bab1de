use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{Algorithm, ExperimentConfig, SigmaSource};
use crate::data::SparseDataset;
use crate::error::{Error, Result};
use crate::loss::ErmObjective;
use crate::optim::{
    estimate_sigma, mbsga_iterations_for_passes, mbsga_run, vrsga_iterations_for_passes, vrsga_run,
    Counters, MbsgaConfig, MbsgaParams, RunOptions, RunTrace, SigmaEstimate, VrsgaConfig,
    VrsgaParams, DEFAULT_TRIAL_ITERS,
};
use crate::regularizer::LogSumRegularizer;

/// Column order of every trace file.
pub const TRACE_HEADER: [&str; 7] = [
    "iter",
    "time_s",
    "h",
    "log_h",
    "grad_calls",
    "prox_calls",
    "grad_E_norm",
];

/// Records per run when the cadence is left at 0.
const AUTO_RECORDS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "algo", rename_all = "lowercase")]
pub enum DerivedParams {
    Mbsga {
        iterations: usize,
        smoothness: f64,
        sigma: f64,
        #[serde(flatten)]
        params: MbsgaParams,
    },
    Vrsga {
        iterations: usize,
        smoothness: f64,
        #[serde(flatten)]
        params: VrsgaParams,
    },
}

impl fmt::Display for DerivedParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DerivedParams::Mbsga {
                iterations,
                smoothness,
                sigma,
                params,
            } => {
                writeln!(f, "algo = mbsga")?;
                writeln!(f, "N = {iterations}")?;
                writeln!(f, "L = {smoothness}")?;
                writeln!(f, "M = {}", params.batch)?;
                writeln!(f, "lambda = {}", params.lambda)?;
                writeln!(f, "L_E = {}", params.l_envelope)?;
                writeln!(f, "gamma = {}", params.gamma)?;
                write!(f, "sigma = {sigma}")
            }
            DerivedParams::Vrsga {
                iterations,
                smoothness,
                params,
            } => {
                writeln!(f, "algo = vrsga")?;
                writeln!(f, "N = {iterations}")?;
                writeln!(f, "L = {smoothness}")?;
                writeln!(f, "m = {}", params.inner)?;
                writeln!(f, "b = {}", params.batch)?;
                writeln!(f, "S = {}", params.outer)?;
                writeln!(f, "lambda = {}", params.lambda)?;
                writeln!(f, "L_E = {}", params.l_envelope)?;
                write!(f, "gamma = {}", params.gamma)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub seed: u64,
    pub trace_path: PathBuf,
    pub kappa: f64,
    pub nu: f64,
    pub derived: DerivedParams,
    /// Present when `σ` was estimated rather than given.
    pub sigma_estimate: Option<f64>,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub iterations: usize,
    pub counters: Counters,
}

/// Loads the data once, then runs one experiment per seed
/// `seed, seed + 1, …, seed + repeat − 1` on separate threads.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunSummary>> {
    cfg.validate()?;
    let ds = cfg.load_dataset()?;
    run_on_dataset(cfg, &ds)
}

pub fn run_on_dataset(cfg: &ExperimentConfig, ds: &SparseDataset) -> Result<Vec<RunSummary>> {
    if cfg.repeat <= 1 {
        return Ok(vec![run_single(cfg, ds, cfg.seed)?]);
    }
    let seeds: Vec<u64> = (0..cfg.repeat as u64)
        .map(|k| cfg.seed.wrapping_add(k))
        .collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| {
                let run_cfg = ExperimentConfig {
                    seed,
                    sigma_seed: cfg
                        .sigma_seed
                        .map(|s| s.wrapping_add(seed.wrapping_sub(cfg.seed))),
                    ..cfg.clone()
                };
                let path = cfg.trace_path(seed);
                scope.spawn(move || run_to(&run_cfg, ds, seed, &path))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("experiment thread panicked"))
            .collect()
    })
}

fn run_single(cfg: &ExperimentConfig, ds: &SparseDataset, seed: u64) -> Result<RunSummary> {
    run_to(cfg, ds, seed, &cfg.trace_path(seed))
}

fn run_to(
    cfg: &ExperimentConfig,
    ds: &SparseDataset,
    seed: u64,
    path: &Path,
) -> Result<RunSummary> {
    let obj = ErmObjective::new(ds);
    let kappa = cfg.kappa_for(ds.dim());
    let g = LogSumRegularizer::new(kappa, cfg.nu, ds.dim())?;
    let (alpha, theta) = (cfg.alpha(), cfg.theta());

    let (trace, derived, sigma_estimate) = match cfg.algo {
        Algorithm::Mbsga => {
            let iterations = mbsga_iterations_for_passes(ds.n(), cfg.passes, alpha)?;
            let (sigma, estimated) = match cfg.sigma {
                SigmaSource::Value(s) => (s, None),
                SigmaSource::Estimate => {
                    let est = estimate_sigma(
                        &obj,
                        &g,
                        iterations,
                        alpha,
                        theta,
                        DEFAULT_TRIAL_ITERS,
                        cfg.sigma_seed(),
                    )?;
                    (est.sigma, Some(est.sigma))
                }
            };
            let run_cfg = MbsgaConfig {
                iterations,
                alpha,
                theta,
                sigma,
                seed,
                output_rule: cfg.output_rule,
            };
            let params = run_cfg.derive(obj.l_mean())?;
            let trace = mbsga_run(&obj, &g, &run_cfg, &run_options(cfg, iterations))?;
            let derived = DerivedParams::Mbsga {
                iterations,
                smoothness: obj.l_mean(),
                sigma,
                params,
            };
            (trace, derived, estimated)
        }
        Algorithm::Vrsga => {
            let (_, iterations) = vrsga_iterations_for_passes(ds.n(), cfg.passes, alpha)?;
            let run_cfg = VrsgaConfig {
                iterations,
                alpha,
                theta,
                seed,
                output_rule: cfg.output_rule,
            };
            let params = run_cfg.derive(ds.n(), obj.l_max())?;
            let trace = vrsga_run(&obj, &g, &run_cfg, &run_options(cfg, iterations))?;
            let derived = DerivedParams::Vrsga {
                iterations,
                smoothness: obj.l_max(),
                params,
            };
            (trace, derived, None)
        }
    };

    write_trace(path, &trace)?;
    let first = trace.records.first().map_or(f64::NAN, |r| r.objective);
    let last = trace.records.last().map_or(f64::NAN, |r| r.objective);
    Ok(RunSummary {
        seed,
        trace_path: path.to_path_buf(),
        kappa,
        nu: cfg.nu,
        derived,
        sigma_estimate,
        initial_objective: first,
        final_objective: last,
        iterations: trace.iterations,
        counters: trace.counters,
    })
}

fn run_options(cfg: &ExperimentConfig, iterations: usize) -> RunOptions {
    let every = if cfg.record_every == 0 {
        (iterations / AUTO_RECORDS).max(1)
    } else {
        cfg.record_every
    };
    RunOptions {
        initial: None,
        record_every: every,
        track_envelope_grad: cfg.grad_norm,
    }
}

/// Runs the `σ` trial for the MBSGA budget implied by `cfg`, whatever `algo` says.
pub fn estimate_sigma_for(cfg: &ExperimentConfig) -> Result<SigmaEstimate> {
    cfg.validate()?;
    let ds = cfg.load_dataset()?;
    estimate_sigma_on(cfg, &ds)
}

pub fn estimate_sigma_on(cfg: &ExperimentConfig, ds: &SparseDataset) -> Result<SigmaEstimate> {
    let cfg = ExperimentConfig {
        algo: Algorithm::Mbsga,
        ..cfg.clone()
    };
    let obj = ErmObjective::new(ds);
    let g = LogSumRegularizer::new(cfg.kappa_for(ds.dim()), cfg.nu, ds.dim())?;
    let iterations = mbsga_iterations_for_passes(ds.n(), cfg.passes, cfg.alpha())?;
    estimate_sigma(
        &obj,
        &g,
        iterations,
        cfg.alpha(),
        cfg.theta(),
        DEFAULT_TRIAL_ITERS,
        cfg.sigma_seed(),
    )
}

/// Writes `trace` as comma-separated text under [`TRACE_HEADER`].
///
/// `log_h` is the natural log, or `NA` when `h ≤ 0`; `grad_E_norm` is empty
/// for records where it was not evaluated.
pub fn write_trace(path: &Path, trace: &RunTrace) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut out = BufWriter::new(File::create(path)?);
    write_trace_to(&mut out, trace)?;
    out.flush()?;
    Ok(())
}

pub fn write_trace_to<W: Write>(out: W, trace: &RunTrace) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER).map_err(csv_error)?;
    for r in &trace.records {
        let log_h = if r.objective > 0.0 {
            r.log_objective().to_string()
        } else {
            "NA".to_string()
        };
        let grad = r
            .envelope_grad_norm
            .map(|v| v.to_string())
            .unwrap_or_default();
        w.write_record([
            r.iteration.to_string(),
            format!("{:.9}", r.elapsed_s),
            r.objective.to_string(),
            log_h,
            r.grad_calls.to_string(),
            r.prox_calls.to_string(),
            grad,
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("{other:?}")),
    }
}

/// Column values of a trace file keyed by header name.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl TraceTable {
    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let header = reader
            .headers()
            .map_err(csv_error)?
            .iter()
            .map(str::to_string)
            .collect();
        let rows = reader
            .records()
            .map(|r| {
                r.map(|rec| rec.iter().map(str::to_string).collect())
                    .map_err(csv_error)
            })
            .collect::<Result<_>>()?;
        Ok(TraceTable { header, rows })
    }

    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let idx = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[idx].as_str()).collect())
    }

    /// Numeric column; `NA` and empty cells become `None`.
    pub fn numeric(&self, name: &str) -> Option<Vec<Option<f64>>> {
        Some(
            self.column(name)?
                .into_iter()
                .map(|s| s.parse::<f64>().ok().filter(|_| s != "NA"))
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::TraceRecord;

    fn record(iteration: usize, objective: f64, grad: Option<f64>) -> TraceRecord {
        TraceRecord {
            iteration,
            elapsed_s: iteration as f64 * 1e-3,
            objective,
            envelope_grad_norm: grad,
            grad_calls: 3 * iteration as u64,
            prox_calls: iteration as u64,
        }
    }

    #[test]
    fn trace_text_layout() {
        let trace = RunTrace {
            records: vec![record(0, 1.0, Some(0.5)), record(5, 0.0, None)],
            final_iterate: vec![],
            output: vec![],
            counters: Counters::default(),
            iterations: 5,
            outer_iterations: None,
        };
        let mut buf = Vec::new();
        write_trace_to(&mut buf, &trace).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "iter,time_s,h,log_h,grad_calls,prox_calls,grad_E_norm\n\
             0,0.000000000,1,0,0,0,0.5\n\
             5,0.005000000,0,NA,15,5,\n"
        );
        let table = TraceTable::parse(&text).unwrap();
        assert_eq!(table.numeric("log_h").unwrap(), vec![Some(0.0), None]);
        assert_eq!(table.numeric("grad_E_norm").unwrap(), vec![Some(0.5), None]);
        assert!(table.column("missing").is_none());
        assert!(TraceTable::parse("a,b\n1\n").is_err());
    }
}
