use std::time::{Duration, Instant};

use serde::Serialize;

use crate::envelope::{objective, EnvelopeAnchor};
use crate::error::{Error, Result};
use crate::loss::{norm, ErmObjective};
use crate::regularizer::Regularizer;

/// Runs abort once the objective exceeds its initial value by this factor.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Counters {
    pub grad_calls: u64,
    pub prox_calls: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    /// Completed (inner) iterations; 0 is the initial point.
    pub iteration: usize,
    /// Wall-clock seconds spent in the optimizer, excluding trace bookkeeping.
    pub elapsed_s: f64,
    /// `h(w) = f(w) + g(w)` at the current iterate.
    pub objective: f64,
    /// `‖∇E(w)‖` of the majorant anchored at the current iterate.
    pub envelope_grad_norm: Option<f64>,
    pub grad_calls: u64,
    pub prox_calls: u64,
}

impl TraceRecord {
    pub fn log_objective(&self) -> f64 {
        self.objective.ln()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
    /// Last iterate the loop produced.
    pub final_iterate: Vec<f64>,
    /// The point the run returns under its output rule.
    pub output: Vec<f64>,
    pub counters: Counters,
    /// Iterations actually executed (inner iterations for VRSGA).
    pub iterations: usize,
    /// Outer iterations executed (VRSGA only).
    pub outer_iterations: Option<usize>,
}

impl RunTrace {
    pub fn min_envelope_grad_norm(&self) -> Option<f64> {
        self.records
            .iter()
            .filter_map(|r| r.envelope_grad_norm)
            .reduce(f64::min)
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Starting point; zero when absent.
    pub initial: Option<Vec<f64>>,
    /// Record every this many iterations (0 behaves like 1). The initial and
    /// final iterates are always recorded.
    pub record_every: usize,
    /// Evaluate `‖∇E‖` at each record.
    pub track_envelope_grad: bool,
}

impl RunOptions {
    pub fn every(record_every: usize) -> Self {
        RunOptions {
            record_every,
            ..Default::default()
        }
    }

    pub fn with_envelope_grad(mut self) -> Self {
        self.track_envelope_grad = true;
        self
    }

    pub fn starting_at(mut self, w: Vec<f64>) -> Self {
        self.initial = Some(w);
        self
    }

    pub(crate) fn initial_point(&self, dim: usize) -> Result<Vec<f64>> {
        match &self.initial {
            Some(w) => {
                crate::error::check_dim(dim, w.len())?;
                Ok(w.clone())
            }
            None => Ok(vec![0.0; dim]),
        }
    }
}

/// Times the optimizer and writes records, keeping evaluation cost out of
/// the reported clock.
pub(crate) struct Recorder<'o, 'a, G> {
    obj: &'o ErmObjective<'a>,
    g: &'o G,
    lambda: f64,
    every: usize,
    track_grad: bool,
    start: Instant,
    overhead: Duration,
    initial_objective: Option<f64>,
    pub records: Vec<TraceRecord>,
}

impl<'o, 'a, G: Regularizer> Recorder<'o, 'a, G> {
    pub fn new(obj: &'o ErmObjective<'a>, g: &'o G, lambda: f64, opts: &RunOptions) -> Self {
        Recorder {
            obj,
            g,
            lambda,
            every: opts.record_every.max(1),
            track_grad: opts.track_envelope_grad,
            start: Instant::now(),
            overhead: Duration::ZERO,
            initial_objective: None,
            records: Vec::new(),
        }
    }

    pub fn due(&self, iteration: usize) -> bool {
        iteration.is_multiple_of(self.every)
    }

    pub fn record(&mut self, iteration: usize, w: &[f64], counters: Counters) -> Result<()> {
        let begin = Instant::now();
        let elapsed = begin
            .duration_since(self.start)
            .saturating_sub(self.overhead);
        let h = objective(self.obj, self.g, w)?;
        match self.initial_objective {
            None => self.initial_objective = Some(h),
            Some(h0) => {
                if !h.is_finite() || (h0 > 0.0 && h > DIVERGENCE_FACTOR * h0) {
                    return Err(Error::Divergence {
                        iteration,
                        value: h,
                    });
                }
            }
        }
        let envelope_grad_norm = if self.track_grad {
            let anchor = EnvelopeAnchor::new(self.g, self.lambda, w)?;
            Some(norm(&anchor.gradient(self.obj, w)?))
        } else {
            None
        };
        self.records.push(TraceRecord {
            iteration,
            elapsed_s: elapsed.as_secs_f64(),
            objective: h,
            envelope_grad_norm,
            grad_calls: counters.grad_calls,
            prox_calls: counters.prox_calls,
        });
        self.overhead += begin.elapsed();
        Ok(())
    }

    /// Records unless `iteration` was just recorded.
    pub fn record_final(&mut self, iteration: usize, w: &[f64], counters: Counters) -> Result<()> {
        if self.records.last().map(|r| r.iteration) != Some(iteration) {
            self.record(iteration, w, counters)?;
        }
        Ok(())
    }
}

pub(crate) fn check_finite(iteration: usize, w: &[f64]) -> Result<()> {
    if w.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Divergence {
            iteration,
            value: f64::NAN,
        })
    }
}
