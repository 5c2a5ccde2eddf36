//! SPA and the baseline policies.
//!
//! Every adaptive policy shares one trigger mechanism: operate the current
//! mode for `w` frames, then keep extending by `Δw` frames until the FER of
//! the last `w` operating frames reaches `ζ`. What happens on a trigger is
//! policy specific.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use super::learn::learn;
use super::{
    windowed_fer, FrameRunner, LearnCall, LearnParams, ModeIndex, Phase, PolicyParams, PolicyRunLog, SelectionError,
};
use crate::netsim::Category;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Policy {
    /// Never cooperate.
    Dt,
    /// Always the same mode.
    Fixed(ModeIndex),
    /// Measure every mode, keep the empirical best.
    Brute,
    /// Jump to a uniformly random mode.
    RandPick,
    /// Measure two distinct random modes, keep the better.
    Pwr2,
    /// LEARN over all modes without early reject.
    Nrnm,
    /// LEARN over all modes with early reject.
    Wrnm,
    /// LEARN over a ranked partition of size `r`.
    Spa,
}

impl Policy {
    /// Every adaptive policy plus DT, in reporting order.
    pub const ADAPTIVE: [Policy; 7] =
        [Policy::Dt, Policy::Brute, Policy::RandPick, Policy::Pwr2, Policy::Nrnm, Policy::Wrnm, Policy::Spa];

    /// Parse a policy name; `Fixed(<label>)` resolves the label against
    /// `mode_labels` (e.g. `Fixed(R1R2)`).
    pub fn parse(s: &str, mode_labels: &[String]) -> Result<Policy, SelectionError> {
        let unknown = || SelectionError::UnknownPolicy(s.to_string());
        if let Some(inner) = s.strip_prefix("Fixed(").and_then(|r| r.strip_suffix(')')) {
            if let Some(m) = mode_labels.iter().position(|l| l == inner) {
                return Ok(Policy::Fixed(m));
            }
        }
        s.parse().map_err(|_| unknown())
    }

    pub fn label(&self, mode_labels: &[String]) -> String {
        match self {
            Policy::Fixed(m) => format!("Fixed({})", mode_labels.get(*m).cloned().unwrap_or_else(|| m.to_string())),
            other => other.to_string(),
        }
    }
}

impl FromStr for Policy {
    type Err = SelectionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.to_ascii_uppercase().as_str() {
            "DT" => Policy::Dt,
            "BRUTE" => Policy::Brute,
            "RANDPICK" => Policy::RandPick,
            "PWR2" => Policy::Pwr2,
            "NRNM" => Policy::Nrnm,
            "WRNM" => Policy::Wrnm,
            "SPA" => Policy::Spa,
            _ => {
                let idx = s
                    .strip_prefix("Fixed(")
                    .and_then(|r| r.strip_suffix(')'))
                    .and_then(|i| i.parse().ok());
                return idx.map(Policy::Fixed).ok_or_else(|| SelectionError::UnknownPolicy(s.to_string()));
            }
        })
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::Dt => f.write_str("DT"),
            Policy::Fixed(m) => write!(f, "Fixed({m})"),
            Policy::Brute => f.write_str("BRUTE"),
            Policy::RandPick => f.write_str("RandPick"),
            Policy::Pwr2 => f.write_str("PWR2"),
            Policy::Nrnm => f.write_str("NRNM"),
            Policy::Wrnm => f.write_str("WRNM"),
            Policy::Spa => f.write_str("SPA"),
        }
    }
}

struct Session<'a, R: FrameRunner> {
    runner: &'a mut R,
    log: PolicyRunLog,
}

impl<R: FrameRunner> Session<'_, R> {
    fn send(&mut self, mode: Option<ModeIndex>, phase: Phase) -> Option<Category> {
        if self.runner.is_exhausted() {
            return None;
        }
        let c = self.runner.send(mode);
        self.log.push(mode, c, phase);
        Some(c)
    }

    /// FER of up to `frames` frames on `mode`; `None` if nothing was sent.
    fn measure(&mut self, mode: ModeIndex, frames: usize) -> Option<f64> {
        let mut sent = 0;
        let mut errors = 0;
        while sent < frames {
            match self.send(Some(mode), Phase::Learning) {
                Some(c) => {
                    sent += 1;
                    errors += usize::from(c.is_error());
                }
                None => break,
            }
        }
        (sent > 0).then(|| errors as f64 / sent as f64)
    }

    /// Operate `mode` until the windowed FER reaches `zeta`. Returns the
    /// number of `Δw` extensions, or `None` if the frame budget ran out.
    fn operate_until_trigger(&mut self, mode: ModeIndex, params: &PolicyParams) -> Option<usize> {
        let spa = &params.spa;
        let mut window = Vec::with_capacity(spa.w);
        for _ in 0..spa.w {
            window.push(self.send(Some(mode), Phase::Operating)?);
        }
        let mut extensions = 0;
        while windowed_fer(&window, spa.w).expect("window holds w frames") < spa.zeta {
            for _ in 0..spa.delta_w {
                window.push(self.send(Some(mode), Phase::Operating)?);
            }
            if window.len() > 4 * spa.w {
                window.drain(..window.len() - spa.w);
            }
            extensions += 1;
        }
        self.log.triggers.push(self.log.len());
        Some(extensions)
    }

    fn learn(&mut self, candidates: &[ModeIndex], params: &LearnParams) -> LearnCall {
        let start_frame = self.log.len();
        let out = learn(|m, l| self.measure_exact(m, l), candidates, params);
        LearnCall {
            start_frame,
            candidates: candidates.to_vec(),
            output: out.ranking,
            batches: out.batches,
            frames: out.frames,
            memory: Vec::new(),
        }
    }

    /// Like `measure`, but only counts a batch that was sent completely.
    fn measure_exact(&mut self, mode: ModeIndex, frames: usize) -> Option<f64> {
        let mut errors = 0;
        for _ in 0..frames {
            errors += usize::from(self.send(Some(mode), Phase::Learning)?.is_error());
        }
        Some(errors as f64 / frames as f64)
    }
}

/// Run `policy` over `runner` until its frame budget is exhausted.
///
/// `rng` is only consumed by the randomized baselines.
pub fn run_policy<R: FrameRunner, G: Rng + ?Sized>(
    policy: Policy,
    runner: &mut R,
    n_modes: usize,
    params: &PolicyParams,
    rng: &mut G,
) -> Result<PolicyRunLog, SelectionError> {
    if n_modes == 0 {
        return Err(SelectionError::InvalidParams { block: "modes", message: "no modes to select from".into() });
    }
    let mut s = Session { runner, log: PolicyRunLog::default() };
    match policy {
        Policy::Dt => {
            while s.send(None, Phase::Operating).is_some() {}
            return Ok(s.log);
        }
        Policy::Fixed(m) => {
            if m >= n_modes {
                return Err(SelectionError::UnknownPolicy(format!("Fixed({m}) with {n_modes} modes")));
            }
            while s.send(Some(m), Phase::Operating).is_some() {}
            return Ok(s.log);
        }
        _ => {}
    }
    params.validate(n_modes)?;

    let spa = &params.spa;
    let all: Vec<ModeIndex> = (0..n_modes).collect();
    let mut ranked = all.clone();
    let mut current = 0;
    while let Some(extensions) = s.operate_until_trigger(current, params) {
        current = match policy {
            Policy::Brute => {
                let mut best: Option<(ModeIndex, f64)> = None;
                for &m in &all {
                    let Some(fer) = s.measure(m, params.measure_frames) else { break };
                    if best.is_none_or(|(_, b)| fer < b) {
                        best = Some((m, fer));
                    }
                }
                best.map_or(current, |(m, _)| m)
            }
            Policy::RandPick => rng.random_range(0..n_modes),
            Policy::Pwr2 => {
                let a = rng.random_range(0..n_modes);
                if n_modes == 1 {
                    a
                } else {
                    let mut b = rng.random_range(0..n_modes - 1);
                    if b >= a {
                        b += 1;
                    }
                    match (s.measure(a, params.measure_frames), s.measure(b, params.measure_frames)) {
                        (Some(fa), Some(fb)) if fb < fa => b,
                        _ => a,
                    }
                }
            }
            Policy::Nrnm | Policy::Wrnm => {
                let mut lp = spa.learn;
                if policy == Policy::Nrnm {
                    lp.epsilon = 0.0;
                }
                let mut call = s.learn(&all, &lp);
                call.memory = call.output.order.clone();
                let best = call.output.best();
                s.log.learn_calls.push(call);
                best
            }
            Policy::Spa => {
                if extensions <= spa.s {
                    ranked.rotate_left(spa.r);
                } else {
                    ranked.rotate_left(1);
                }
                let mut call = s.learn(&ranked[..spa.r], &spa.learn);
                ranked[..spa.r].copy_from_slice(&call.output.order);
                call.memory = ranked.clone();
                s.log.learn_calls.push(call);
                ranked[0]
            }
            Policy::Dt | Policy::Fixed(_) => unreachable!("handled above"),
        };
    }
    Ok(s.log)
}

/// SPA; it makes no random choices of its own.
pub fn spa<R: FrameRunner>(runner: &mut R, n_modes: usize, params: &PolicyParams) -> Result<PolicyRunLog, SelectionError> {
    run_policy(Policy::Spa, runner, n_modes, params, &mut crate::rng::stream(0, 0))
}
