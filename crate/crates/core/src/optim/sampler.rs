use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Source of sample indices for one stochastic gradient evaluation.
pub trait BatchSampler {
    /// Replaces `out` with a batch of indices into `0..n`; `count` is the
    /// nominal batch size.
    fn sample(&mut self, n: usize, count: usize, out: &mut Vec<usize>);
}

/// Uniform draws with replacement.
#[derive(Debug, Clone)]
pub struct UniformSampler {
    rng: ChaCha8Rng,
}

impl UniformSampler {
    pub fn new(seed: u64) -> Self {
        Self::from_rng(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn from_rng(rng: ChaCha8Rng) -> Self {
        UniformSampler { rng }
    }
}

impl BatchSampler for UniformSampler {
    fn sample(&mut self, n: usize, count: usize, out: &mut Vec<usize>) {
        out.clear();
        out.extend((0..count).map(|_| self.rng.random_range(0..n)));
    }
}

/// Every sample exactly once in ascending order, whatever `count` is.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExhaustiveSampler;

impl BatchSampler for ExhaustiveSampler {
    fn sample(&mut self, n: usize, _count: usize, out: &mut Vec<usize>) {
        out.clear();
        out.extend(0..n);
    }
}

/// Replays a fixed list of batches; panics once exhausted.
#[derive(Debug, Clone, Default)]
pub struct ScriptedSampler {
    batches: VecDeque<Vec<usize>>,
}

impl ScriptedSampler {
    pub fn new(batches: impl IntoIterator<Item = Vec<usize>>) -> Self {
        ScriptedSampler {
            batches: batches.into_iter().collect(),
        }
    }
}

impl BatchSampler for ScriptedSampler {
    fn sample(&mut self, _n: usize, _count: usize, out: &mut Vec<usize>) {
        let next = self
            .batches
            .pop_front()
            .expect("scripted sampler ran out of batches");
        out.clear();
        out.extend(next);
    }
}
