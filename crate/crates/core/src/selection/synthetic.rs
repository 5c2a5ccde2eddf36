//! Runners with planted per-mode frame error rates, for experiments and
//! tests that do not need a channel model.

use rand::Rng;

use super::{FrameRunner, ModeIndex};
use crate::netsim::Category;
use crate::rng::{self, StreamRng};

/// A stretch of frames with fixed per-mode FERs.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedSegment {
    pub frames: usize,
    pub mode_fers: Vec<f64>,
    pub direct_fer: f64,
}

/// Independent Bernoulli frame errors whose rates change per segment.
/// Successful cooperative frames are reported as [`Category::Coop`], direct
/// ones as [`Category::Direct`].
#[derive(Debug, Clone)]
pub struct BernoulliRunner {
    segments: Vec<PlantedSegment>,
    segment: usize,
    used_in_segment: usize,
    sent: usize,
    rng: StreamRng,
}

impl BernoulliRunner {
    pub fn new(segments: Vec<PlantedSegment>, seed: u64) -> Self {
        BernoulliRunner { segments, segment: 0, used_in_segment: 0, sent: 0, rng: rng::stream(seed, 0) }
    }

    pub fn constant(mode_fers: Vec<f64>, direct_fer: f64, frames: usize, seed: u64) -> Self {
        BernoulliRunner::new(vec![PlantedSegment { frames, mode_fers, direct_fer }], seed)
    }

    pub fn sent(&self) -> usize {
        self.sent
    }
}

impl FrameRunner for BernoulliRunner {
    fn is_exhausted(&self) -> bool {
        self.segment >= self.segments.len()
    }

    fn send(&mut self, mode: Option<ModeIndex>) -> Category {
        let seg = &self.segments[self.segment];
        let fer = mode.map_or(seg.direct_fer, |m| seg.mode_fers[m]);
        let error = self.rng.random::<f64>() < fer;
        self.sent += 1;
        self.used_in_segment += 1;
        if self.used_in_segment == seg.frames {
            self.segment += 1;
            self.used_in_segment = 0;
        }
        match (error, mode) {
            (true, _) => Category::Failure,
            (false, None) => Category::Direct,
            (false, Some(_)) => Category::Coop,
        }
    }
}
