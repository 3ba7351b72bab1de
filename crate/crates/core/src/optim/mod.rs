//! The two stochastic methods, their parameter schedules and run tracing.

mod mbsga;
mod params;
mod sampler;
mod sigma;
mod trace;
mod vrsga;

pub use mbsga::{mbsga_run, mbsga_run_with, minibatch_direction};
pub use params::{
    ceil_power, mbsga_derive_params, mbsga_iterations_for_passes, vrsga_derive_params,
    vrsga_iterations_for_passes, MbsgaConfig, MbsgaParams, OutputRule, VrsgaConfig, VrsgaParams,
};
pub use sampler::{BatchSampler, ExhaustiveSampler, ScriptedSampler, UniformSampler};
pub use sigma::{
    estimate_sigma, estimate_sigma_with, variance_bound_check, SigmaEstimate, VarianceCheck,
    DEFAULT_TRIAL_ITERS,
};
pub use trace::{Counters, RunOptions, RunTrace, TraceRecord, DIVERGENCE_FACTOR};
pub use vrsga::{variance_reduced_direction, vrsga_run, vrsga_run_with};
