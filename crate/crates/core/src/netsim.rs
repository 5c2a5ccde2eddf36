//! Cooperation modes and two-phase frame delivery.
//!
//! In Phase 1 the source transmits. If the destination cannot decode, the
//! mode's transmitters send again in Phase 2. Frame success is abstracted by
//! capacity thresholds on one block-fading realization:
//!
//! - Phase 1: `C(h_sd²) ≥ R`.
//! - Repetition (DT): `C(2 h_sd²) ≥ R`.
//! - A relay decodes Phase 1 iff `C(h_i²) ≥ R`.
//! - DIF, one relay `i`: relay decoded and `C(h_sd² + g_i²) ≥ R`.
//! - DIF, two relays: some relay decoded and `C(Σ_{decoded} g_j²) ≥ R`.
//! - DIQIF: DIF succeeds, or the subnetwork's approximate cut-set capacity
//!   reaches `R` (relays that cannot decode quantize and forward).
//!
//! Cooperative strategies are also credited with the repetition event, so on
//! every realization the success sets are nested `DT ⊆ DIF ⊆ DIQIF`.

use std::fmt;
use std::io;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::outage::{approx_capacity, link_capacity};
use crate::selection::{FrameRunner, ModeIndex};
use crate::topology::{ChannelRealization, FrameChannels, ScheduledNetwork, Topology};
use crate::{Error, Result};

/// A choice of one or two cooperating relays (0-based indices, `i < j`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    One(usize),
    Two(usize, usize),
}

impl Mode {
    pub fn relays(&self) -> Vec<usize> {
        match *self {
            Mode::One(i) => vec![i],
            Mode::Two(i, j) => vec![i, j],
        }
    }

    pub fn is_valid_for(&self, n_relays: usize) -> bool {
        match *self {
            Mode::One(i) => i < n_relays,
            Mode::Two(i, j) => i < j && j < n_relays,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Mode::One(i) => write!(f, "R{}", i + 1),
            Mode::Two(i, j) => write!(f, "R{}R{}", i + 1, j + 1),
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Format(format!("invalid mode `{s}`"));
        let ids: Vec<usize> = s
            .split('R')
            .skip(1)
            .map(|p| p.parse::<usize>().ok().filter(|&x| x >= 1).map(|x| x - 1))
            .collect::<Option<_>>()
            .ok_or_else(bad)?;
        if !s.starts_with('R') {
            return Err(bad());
        }
        match ids[..] {
            [i] => Ok(Mode::One(i)),
            [i, j] if i < j => Ok(Mode::Two(i, j)),
            _ => Err(bad()),
        }
    }
}

/// All one-relay modes in index order, then all relay pairs in lexicographic
/// order: `N + C(N, 2)` modes.
pub fn enumerate_modes(n_relays: usize) -> Vec<Mode> {
    let ones = (0..n_relays).map(Mode::One);
    let twos = (0..n_relays).flat_map(|i| (i + 1..n_relays).map(move |j| Mode::Two(i, j)));
    ones.chain(twos).collect()
}

/// How a frame was (or was not) delivered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Category {
    /// Received in Phase 1 over the direct link.
    Direct = 0,
    /// Received after Phase-2 cooperation.
    Coop = 1,
    /// Lost after both phases.
    Failure = 2,
}

impl Category {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Category::Direct),
            1 => Some(Category::Coop),
            2 => Some(Category::Failure),
            _ => None,
        }
    }

    pub fn is_error(self) -> bool {
        self == Category::Failure
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Strategy {
    Dt,
    Dif,
    Diqif,
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "DT" => Ok(Strategy::Dt),
            "DIF" => Ok(Strategy::Dif),
            "DIQIF" => Ok(Strategy::Diqif),
            _ => Err(Error::Format(format!("unknown strategy `{s}`"))),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Dt => "DT",
            Strategy::Dif => "DIF",
            Strategy::Diqif => "DIQIF",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameOutcome {
    pub category: Category,
    /// `None` for pure direct transmission.
    pub mode: Option<Mode>,
}

/// Label used in traces for a frame's transmission choice.
pub fn mode_label(mode: Option<Mode>) -> String {
    mode.map_or_else(|| "DT".to_string(), |m| m.to_string())
}

pub fn parse_mode_label(s: &str) -> Result<Option<Mode>> {
    if s == "DT" {
        Ok(None)
    } else {
        s.parse().map(Some)
    }
}

fn relay_forward_succeeds(c: &ChannelRealization, mode: Mode, rate: f64) -> bool {
    let decodes = |i: usize| link_capacity(c.h2[i]) >= rate;
    match mode {
        Mode::One(i) => decodes(i) && link_capacity(c.h_sd2 + c.g2[i]) >= rate,
        Mode::Two(i, j) => {
            let energy: f64 = [i, j].into_iter().filter(|&r| decodes(r)).map(|r| c.g2[r]).sum();
            (decodes(i) || decodes(j)) && link_capacity(energy) >= rate
        }
    }
}

/// Phase-2 success of `strategy` on a realization where Phase 1 failed.
pub fn phase2_succeeds(c: &ChannelRealization, mode: Option<Mode>, strategy: Strategy, rate: f64) -> bool {
    let repetition = link_capacity(2.0 * c.h_sd2) >= rate;
    let mode = match (mode, strategy) {
        (Some(m), Strategy::Dif | Strategy::Diqif) => m,
        _ => return repetition,
    };
    let dif = repetition || relay_forward_succeeds(c, mode, rate);
    match strategy {
        Strategy::Diqif => dif || approx_capacity(c, &mode.relays()) >= rate,
        _ => dif,
    }
}

/// Outcome of one frame on a given realization.
pub fn frame_outcome(c: &ChannelRealization, mode: Option<Mode>, strategy: Strategy, rate: f64) -> FrameOutcome {
    let category = if link_capacity(c.h_sd2) >= rate {
        Category::Direct
    } else if phase2_succeeds(c, mode, strategy, rate) {
        Category::Coop
    } else {
        Category::Failure
    };
    FrameOutcome { category, mode }
}

/// Draw a realization and deliver one frame.
pub fn simulate_frame<R: Rng + ?Sized>(
    t: &Topology,
    mode: Option<Mode>,
    strategy: Strategy,
    rate: f64,
    rng: &mut R,
) -> FrameOutcome {
    debug_assert!(mode.is_none_or(|m| m.is_valid_for(t.n_relays)));
    frame_outcome(&t.sample(rng), mode, strategy, rate)
}

/// Operate one fixed mode (or direct transmission when `mode` is `None`) over
/// a whole schedule. Frame `f` uses realization `channels.realization(_, f)`.
pub fn run_fixed(
    net: &ScheduledNetwork,
    mode: Option<Mode>,
    strategy: Strategy,
    rate: f64,
    channels: &FrameChannels,
) -> Result<Vec<FrameOutcome>> {
    if let Some(m) = mode {
        if !m.is_valid_for(net.n_relays()) {
            return Err(Error::Format(format!("mode {m} is invalid for {} relays", net.n_relays())));
        }
    }
    (0..net.total_frames())
        .map(|f| {
            let t = net.topology_at(f)?;
            Ok(frame_outcome(&channels.realization(t, f as u64), mode, strategy, rate))
        })
        .collect()
}

/// Frame source for a policy over a schedule: frame `f` is delivered on
/// `channels.realization(topology_at(f), f)`.
pub struct ScheduleRunner<'a> {
    net: &'a ScheduledNetwork,
    modes: Vec<Mode>,
    strategy: Strategy,
    rate: f64,
    channels: FrameChannels,
    frame: usize,
}

impl<'a> ScheduleRunner<'a> {
    pub fn new(net: &'a ScheduledNetwork, strategy: Strategy, rate: f64, channels: FrameChannels) -> Self {
        ScheduleRunner { net, modes: enumerate_modes(net.n_relays()), strategy, rate, channels, frame: 0 }
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }
}

impl FrameRunner for ScheduleRunner<'_> {
    fn is_exhausted(&self) -> bool {
        self.frame >= self.net.total_frames()
    }

    fn send(&mut self, mode: Option<ModeIndex>) -> Category {
        let t = self.net.topology_at(self.frame).expect("frame within schedule");
        let c = self.channels.realization(t, self.frame as u64);
        self.frame += 1;
        frame_outcome(&c, mode.map(|m| self.modes[m]), self.strategy, self.rate).category
    }
}

/// One row of the shared frame-trace format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub frame_index: usize,
    pub topology_id: String,
    pub mode: String,
    pub category: u8,
}

pub fn trace_records(net: &ScheduledNetwork, outcomes: &[FrameOutcome]) -> Result<Vec<TraceRecord>> {
    outcomes
        .iter()
        .enumerate()
        .map(|(f, o)| {
            Ok(TraceRecord {
                frame_index: f,
                topology_id: net.schedule.topology_at(f)?.to_string(),
                mode: mode_label(o.mode),
                category: o.category.code(),
            })
        })
        .collect()
}

pub fn write_trace<W: io::Write>(out: W, records: &[TraceRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct LooseTraceRow {
    category: u8,
    #[serde(default)]
    mode: Option<String>,
}

/// Read the `category` (and optional `mode`) columns of any frame-trace CSV,
/// e.g. a fixed-mode trace or a policy run log.
pub fn read_categories<R: io::Read>(input: R) -> Result<Vec<(Category, Option<String>)>> {
    let mut rd = csv::Reader::from_reader(input);
    rd.deserialize::<LooseTraceRow>()
        .enumerate()
        .map(|(i, row)| {
            let row = row?;
            let cat = Category::from_code(row.category)
                .ok_or_else(|| Error::Format(format!("row {}: category {} not in 0..=2", i + 1, row.category)))?;
            Ok((cat, row.mode))
        })
        .collect()
}
