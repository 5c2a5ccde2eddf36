//! Adaptive cooperation-mode selection.
//!
//! Modes are addressed by their index into the network's mode list `M`
//! (see [`crate::netsim::enumerate_modes`]). A policy drives a
//! [`FrameRunner`], one frame at a time, and records a [`PolicyRunLog`].

mod learn;
mod policy;
pub mod synthetic;

pub use learn::{learn, weight_update, BatchRecord, LearnOutcome};
pub use policy::{run_policy, spa, Policy};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netsim::Category;

pub type ModeIndex = usize;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SelectionError {
    #[error("weight update needs at least two modes, got {0}")]
    DegenerateSet(usize),
    #[error("windowed FER needs {needed} frames, only {available} available")]
    InsufficientHistory { needed: usize, available: usize },
    #[error("unknown policy `{0}`")]
    UnknownPolicy(String),
    #[error("{block}: {message}")]
    InvalidParams { block: &'static str, message: String },
}

fn invalid(block: &'static str, message: impl Into<String>) -> SelectionError {
    SelectionError::InvalidParams { block, message: message.into() }
}

/// Parameters of one LEARN invocation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnParams {
    /// Frames per mode per batch.
    pub l: usize,
    pub eta: f64,
    pub alpha: f64,
    pub epsilon: f64,
    /// Maximum number of batches.
    pub max_batches: usize,
}

impl Default for LearnParams {
    fn default() -> Self {
        LearnParams { l: 1, eta: 3.0, alpha: 0.4, epsilon: 0.05, max_batches: 50 }
    }
}

impl LearnParams {
    /// `epsilon` may be 0 (no early reject); everything else is strict.
    pub fn validate(&self) -> Result<(), SelectionError> {
        const B: &str = "LearnParams";
        if self.l < 1 {
            return Err(invalid(B, "l must be >= 1"));
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(invalid(B, format!("eta must be > 0, got {}", self.eta)));
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(invalid(B, format!("alpha must lie in [0, 1), got {}", self.alpha)));
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(invalid(B, format!("epsilon must lie in [0, 1), got {}", self.epsilon)));
        }
        if self.max_batches < 1 {
            return Err(invalid(B, "max_batches must be >= 1"));
        }
        Ok(())
    }
}

/// Parameters of the SPA outer loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpaParams {
    /// FER trigger threshold ζ.
    pub zeta: f64,
    /// Memory size r.
    pub r: usize,
    /// FER window w.
    pub w: usize,
    /// Window step Δw.
    pub delta_w: usize,
    /// Minimum number of windows s.
    pub s: usize,
    #[serde(default)]
    pub learn: LearnParams,
}

impl Default for SpaParams {
    fn default() -> Self {
        SpaParams { zeta: 0.1, r: 3, w: 40, delta_w: 1, s: 3, learn: LearnParams::default() }
    }
}

impl SpaParams {
    pub fn validate(&self, n_modes: usize) -> Result<(), SelectionError> {
        const B: &str = "SpaParams";
        if !(self.zeta > 0.0 && self.zeta <= 1.0) {
            return Err(invalid(B, format!("zeta must lie in (0, 1], got {}", self.zeta)));
        }
        if self.r < 1 || self.r > n_modes {
            return Err(invalid(B, format!("r must lie in [1, {n_modes}], got {}", self.r)));
        }
        if self.w < 1 || self.delta_w < 1 {
            return Err(invalid(B, "w and delta_w must be >= 1"));
        }
        self.learn.validate()
    }
}

/// Everything a policy run can be configured with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyParams {
    #[serde(default)]
    pub spa: SpaParams,
    /// Frames per measured mode for BRUTE and PWR2.
    #[serde(default = "default_measure_frames")]
    pub measure_frames: usize,
}

fn default_measure_frames() -> usize {
    40
}

impl Default for PolicyParams {
    fn default() -> Self {
        PolicyParams { spa: SpaParams::default(), measure_frames: default_measure_frames() }
    }
}

impl PolicyParams {
    pub fn validate(&self, n_modes: usize) -> Result<(), SelectionError> {
        if self.measure_frames < 1 {
            return Err(invalid("PolicyParams", "measure_frames must be >= 1"));
        }
        self.spa.validate(n_modes)
    }
}

/// Ordered modes (best first) with their most recent normalized weights.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedModeList {
    pub order: Vec<ModeIndex>,
    /// `weights[k]` belongs to `order[k]`.
    pub weights: Vec<f64>,
}

impl RankedModeList {
    pub fn best(&self) -> ModeIndex {
        self.order[0]
    }
}

/// Source of frame outcomes for a policy.
pub trait FrameRunner {
    /// No more frames may be sent.
    fn is_exhausted(&self) -> bool;
    /// Send one frame using mode `mode`, or plain direct transmission for
    /// `None`, and report how it was delivered.
    fn send(&mut self, mode: Option<ModeIndex>) -> Category;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Operating,
    Learning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameLog {
    pub mode: Option<ModeIndex>,
    pub category: Category,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnCall {
    /// Frame index at which learning started.
    pub start_frame: usize,
    pub candidates: Vec<ModeIndex>,
    pub output: RankedModeList,
    pub batches: usize,
    pub frames: usize,
    /// The policy's ranked list after the output was merged in.
    pub memory: Vec<ModeIndex>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PolicyRunLog {
    pub frames: Vec<FrameLog>,
    /// Frame index (count of frames sent so far) of every trigger.
    pub triggers: Vec<usize>,
    pub learn_calls: Vec<LearnCall>,
    switches: usize,
    errors: usize,
}

impl PolicyRunLog {
    pub fn push(&mut self, mode: Option<ModeIndex>, category: Category, phase: Phase) {
        if self.frames.last().is_some_and(|f| f.mode != mode) {
            self.switches += 1;
        }
        if category.is_error() {
            self.errors += 1;
        }
        self.frames.push(FrameLog { mode, category, phase });
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Number of adjacent frame pairs using different modes.
    pub fn switches(&self) -> usize {
        self.switches
    }

    pub fn errors(&self) -> usize {
        self.errors
    }

    pub fn fer(&self) -> f64 {
        if self.frames.is_empty() {
            0.0
        } else {
            self.errors as f64 / self.frames.len() as f64
        }
    }

    pub fn learning_frames(&self) -> usize {
        self.frames.iter().filter(|f| f.phase == Phase::Learning).count()
    }

    /// Switch count after every frame.
    pub fn cumulative_switches(&self) -> Vec<usize> {
        let mut n = 0;
        self.frames
            .iter()
            .enumerate()
            .map(|(k, f)| {
                if k > 0 && self.frames[k - 1].mode != f.mode {
                    n += 1;
                }
                n
            })
            .collect()
    }
}

/// Fraction of frame errors among the last `w` outcomes.
pub fn windowed_fer(trace: &[Category], w: usize) -> Result<f64, SelectionError> {
    if w == 0 || trace.len() < w {
        return Err(SelectionError::InsufficientHistory { needed: w, available: trace.len() });
    }
    let errors = trace[trace.len() - w..].iter().filter(|c| c.is_error()).count();
    Ok(errors as f64 / w as f64)
}
