//! Counter-keyed random streams.
//!
//! Every batch of standard-normal draws is addressed by `(seed, phase,
//! iteration, component)`. The key selects an independent ChaCha20 stream, so
//! a batch is the same no matter which thread draws it or in what order.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Which part of a run consumes a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Main = 0,
    Anneal = 1,
    /// Moment estimates taken once before annealing (start temperature).
    Probe = 2,
    /// Synthetic data, layouts and initial states.
    Setup = 3,
}

/// Key of one batch of draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BatchLabel {
    pub phase: Phase,
    pub iteration: u64,
    pub component: u64,
}

impl BatchLabel {
    pub fn main(iteration: usize, component: usize) -> Self {
        BatchLabel {
            phase: Phase::Main,
            iteration: iteration as u64,
            component: component as u64,
        }
    }

    fn stream(&self) -> u64 {
        debug_assert!(self.iteration < 1 << 36 && self.component < 1 << 24);
        ((self.phase as u64) << 60) | (self.iteration << 24) | self.component
    }
}

/// Independent generator for a key.
pub fn stream_rng(seed: u64, label: BatchLabel) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(label.stream());
    rng
}

/// `J` standard-normal vectors of length `d`, stored as the columns of a `d × J` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardNormalBatch {
    pub label: BatchLabel,
    pub samples: DMatrix<f64>,
}

impl StandardNormalBatch {
    pub fn len(&self) -> usize {
        self.samples.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.ncols() == 0
    }

    pub fn dim(&self) -> usize {
        self.samples.nrows()
    }
}

pub fn draw_batch(seed: u64, label: BatchLabel, j: usize, d: usize) -> Result<StandardNormalBatch> {
    if j < 2 {
        return Err(Error::InvalidConfig(format!(
            "need at least 2 samples per batch, got {j}"
        )));
    }
    let mut rng = stream_rng(seed, label);
    // from_fn fills column-major, so each sample is drawn contiguously.
    let samples = DMatrix::from_fn(d, j, |_, _| rng.sample::<f64, _>(StandardNormal));
    Ok(StandardNormalBatch { label, samples })
}
