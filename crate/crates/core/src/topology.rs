//! Network topologies as Rayleigh-fading link statistics.
//!
//! A topology stores, for the source-destination link and for every relay's
//! source-relay and relay-destination links, the rate parameter `λ` of the
//! exponential distribution of the squared channel magnitude. The mean link
//! SNR is `1/λ`. Relays are indexed from 0 internally and printed from 1.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{self, StreamRng};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TopologyError {
    #[error("topology `{label}`: non-positive or non-finite rate parameter in {field}")]
    NonPositiveRate { label: String, field: &'static str },
    #[error("topology `{label}`: {field} has {got} entries, expected n_relays = {expected}")]
    LengthMismatch {
        label: String,
        field: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("topology `{0}`: at least one relay is required")]
    NoRelays(String),
    #[error("frame {frame} is outside the schedule of {total} frames")]
    OutOfRange { frame: usize, total: usize },
    #[error("schedule is empty or has a zero-length segment")]
    EmptySchedule,
    #[error("schedule references unknown topology `{0}`")]
    UnknownTopology(String),
    #[error("duplicate topology label `{0}`")]
    DuplicateLabel(String),
    #[error("topology file: {0}")]
    Parse(String),
}

/// Rayleigh link statistics of an N-relay network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub label: String,
    pub n_relays: usize,
    /// Rate parameter of `h_sd²`.
    pub lambda_sd: f64,
    /// Rate parameters of `h_i²` on the source-relay links.
    pub lambda_sr: Vec<f64>,
    /// Rate parameters of `g_i²` on the relay-destination links.
    pub lambda_rd: Vec<f64>,
}

fn valid_rate(x: f64) -> bool {
    x.is_finite() && x > 0.0
}

impl Topology {
    /// Build and validate a topology from rate parameters.
    pub fn new(
        label: impl Into<String>,
        lambda_sd: f64,
        lambda_sr: Vec<f64>,
        lambda_rd: Vec<f64>,
    ) -> Result<Self, TopologyError> {
        let t = Topology {
            label: label.into(),
            n_relays: lambda_sr.len(),
            lambda_sd,
            lambda_sr,
            lambda_rd,
        };
        t.validate()?;
        Ok(t)
    }

    /// Build a topology from linear mean link SNRs; `λ = 1/SNR`.
    pub fn from_snr(
        label: impl Into<String>,
        snr_sd: f64,
        snr_sr: &[f64],
        snr_rd: &[f64],
    ) -> Result<Self, TopologyError> {
        let inv = |x: &f64| 1.0 / x;
        Topology::new(
            label,
            1.0 / snr_sd,
            snr_sr.iter().map(inv).collect(),
            snr_rd.iter().map(inv).collect(),
        )
    }

    /// Every link with the same mean SNR.
    pub fn symmetric(label: impl Into<String>, n_relays: usize, snr: f64) -> Self {
        Topology::from_snr(label, snr, &vec![snr; n_relays], &vec![snr; n_relays])
            .expect("symmetric topology with positive SNR")
    }

    pub fn validate(&self) -> Result<(), TopologyError> {
        let label = || self.label.clone();
        if self.n_relays == 0 {
            return Err(TopologyError::NoRelays(label()));
        }
        for (field, list) in [("lambda_sr", &self.lambda_sr), ("lambda_rd", &self.lambda_rd)] {
            if list.len() != self.n_relays {
                return Err(TopologyError::LengthMismatch {
                    label: label(),
                    field,
                    got: list.len(),
                    expected: self.n_relays,
                });
            }
        }
        if !valid_rate(self.lambda_sd) {
            return Err(TopologyError::NonPositiveRate { label: label(), field: "lambda_sd" });
        }
        for (field, list) in [("lambda_sr", &self.lambda_sr), ("lambda_rd", &self.lambda_rd)] {
            if !list.iter().copied().all(valid_rate) {
                return Err(TopologyError::NonPositiveRate { label: label(), field });
            }
        }
        Ok(())
    }

    /// Same relative link gains with every mean SNR multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Topology {
        Topology {
            label: self.label.clone(),
            n_relays: self.n_relays,
            lambda_sd: self.lambda_sd / factor,
            lambda_sr: self.lambda_sr.iter().map(|l| l / factor).collect(),
            lambda_rd: self.lambda_rd.iter().map(|l| l / factor).collect(),
        }
    }

    /// Draw one independent block-fading realization.
    ///
    /// Draw order is `h_sd²`, then `h_i²` for every relay, then `g_i²`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ChannelRealization {
        let draw = |lambda: f64, rng: &mut R| Exp::new(lambda).expect("validated rate").sample(rng);
        let h_sd2 = draw(self.lambda_sd, rng);
        let h2 = self.lambda_sr.iter().map(|&l| draw(l, rng)).collect();
        let g2 = self.lambda_rd.iter().map(|&l| draw(l, rng)).collect();
        ChannelRealization { h_sd2, h2, g2 }
    }
}

/// Squared channel magnitudes (linear SNR units) of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub h_sd2: f64,
    pub h2: Vec<f64>,
    pub g2: Vec<f64>,
}

impl ChannelRealization {
    pub fn n_relays(&self) -> usize {
        self.h2.len()
    }

    /// All links silent.
    pub fn zeros(n_relays: usize) -> Self {
        ChannelRealization { h_sd2: 0.0, h2: vec![0.0; n_relays], g2: vec![0.0; n_relays] }
    }
}

/// Counter-based per-frame channel source: the realization of frame `f` only
/// depends on `(seed, f)`, so policies that visit frames in different orders
/// (or different strategies evaluated side by side) see identical channels.
#[derive(Debug, Clone, Copy)]
pub struct FrameChannels {
    pub seed: u64,
}

impl FrameChannels {
    pub fn new(seed: u64) -> Self {
        FrameChannels { seed }
    }

    pub fn realization(&self, topology: &Topology, frame: u64) -> ChannelRealization {
        topology.sample(&mut self.rng(frame))
    }

    pub fn rng(&self, frame: u64) -> StreamRng {
        rng::stream(self.seed, frame)
    }
}

/// One piece of a time-varying topology schedule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub topology: String,
    pub frames: usize,
}

/// Ordered list of topology segments; segment `k` covers the half-open frame
/// range `[start_k, start_k + frames_k)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopologySchedule {
    segments: Vec<Segment>,
    starts: Vec<usize>,
    total: usize,
}

impl TopologySchedule {
    pub fn new(segments: Vec<Segment>) -> Result<Self, TopologyError> {
        if segments.is_empty() || segments.iter().any(|s| s.frames == 0) {
            return Err(TopologyError::EmptySchedule);
        }
        let mut starts = Vec::with_capacity(segments.len());
        let mut total = 0;
        for s in &segments {
            starts.push(total);
            total += s.frames;
        }
        Ok(TopologySchedule { segments, starts, total })
    }

    /// A single static segment.
    pub fn constant(topology: impl Into<String>, frames: usize) -> Result<Self, TopologyError> {
        TopologySchedule::new(vec![Segment { topology: topology.into(), frames }])
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn total_frames(&self) -> usize {
        self.total
    }

    /// Index of the segment governing `frame`.
    pub fn segment_at(&self, frame: usize) -> Result<usize, TopologyError> {
        if frame >= self.total {
            return Err(TopologyError::OutOfRange { frame, total: self.total });
        }
        Ok(self.starts.partition_point(|&s| s <= frame) - 1)
    }

    /// Label of the topology governing `frame`.
    pub fn topology_at(&self, frame: usize) -> Result<&str, TopologyError> {
        Ok(&self.segments[self.segment_at(frame)?].topology)
    }
}

/// A schedule together with the topologies it references.
#[derive(Debug, Clone)]
pub struct ScheduledNetwork {
    pub topologies: Vec<Topology>,
    pub schedule: TopologySchedule,
    resolved: Vec<usize>,
}

impl ScheduledNetwork {
    pub fn new(topologies: Vec<Topology>, schedule: TopologySchedule) -> Result<Self, TopologyError> {
        for (i, t) in topologies.iter().enumerate() {
            t.validate()?;
            if topologies[..i].iter().any(|o| o.label == t.label) {
                return Err(TopologyError::DuplicateLabel(t.label.clone()));
            }
        }
        let resolved = schedule
            .segments()
            .iter()
            .map(|s| {
                topologies
                    .iter()
                    .position(|t| t.label == s.topology)
                    .ok_or_else(|| TopologyError::UnknownTopology(s.topology.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ScheduledNetwork { topologies, schedule, resolved })
    }

    pub fn total_frames(&self) -> usize {
        self.schedule.total_frames()
    }

    pub fn n_relays(&self) -> usize {
        self.topologies[0].n_relays
    }

    pub fn topology_at(&self, frame: usize) -> Result<&Topology, TopologyError> {
        let seg = self.schedule.segment_at(frame)?;
        Ok(&self.topologies[self.resolved[seg]])
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SnrUnits {
    #[default]
    Linear,
    Db,
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// On-disk topology description in mean link SNRs.
///
/// ```toml
/// label = "clustered"
/// n_relays = 2
/// units = "db"
/// snr_sd = 0.0
/// snr_sr = [10.0, 3.0]
/// snr_rd = [10.0, 3.0]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySpec {
    pub label: String,
    pub n_relays: usize,
    pub snr_sd: f64,
    pub snr_sr: Vec<f64>,
    pub snr_rd: Vec<f64>,
    #[serde(default)]
    pub units: SnrUnits,
}

impl TopologySpec {
    pub fn to_topology(&self) -> Result<Topology, TopologyError> {
        let lin = |x: f64| match self.units {
            SnrUnits::Linear => x,
            SnrUnits::Db => db_to_linear(x),
        };
        let t = Topology {
            label: self.label.clone(),
            n_relays: self.n_relays,
            lambda_sd: 1.0 / lin(self.snr_sd),
            lambda_sr: self.snr_sr.iter().map(|&x| 1.0 / lin(x)).collect(),
            lambda_rd: self.snr_rd.iter().map(|&x| 1.0 / lin(x)).collect(),
        };
        t.validate()?;
        Ok(t)
    }

    pub fn from_topology(t: &Topology) -> Self {
        TopologySpec {
            label: t.label.clone(),
            n_relays: t.n_relays,
            snr_sd: 1.0 / t.lambda_sd,
            snr_sr: t.lambda_sr.iter().map(|l| 1.0 / l).collect(),
            snr_rd: t.lambda_rd.iter().map(|l| 1.0 / l).collect(),
            units: SnrUnits::Linear,
        }
    }
}

pub fn parse_topology(text: &str) -> Result<Topology, TopologyError> {
    let spec: TopologySpec = toml::from_str(text).map_err(|e| TopologyError::Parse(e.to_string()))?;
    spec.to_topology()
}

/// On-disk schedule: inline topologies plus ordered segments.
///
/// ```toml
/// [[topology]]
/// label = "A"
/// n_relays = 1
/// snr_sd = 1.0
/// snr_sr = [10.0]
/// snr_rd = [10.0]
///
/// [[segment]]
/// topology = "A"
/// frames = 172
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    #[serde(rename = "topology")]
    pub topologies: Vec<TopologySpec>,
    #[serde(rename = "segment")]
    pub segments: Vec<Segment>,
}

impl ScheduleSpec {
    pub fn to_network(&self) -> Result<ScheduledNetwork, TopologyError> {
        let topologies = self
            .topologies
            .iter()
            .map(TopologySpec::to_topology)
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(t) = topologies.iter().find(|t| t.n_relays != topologies[0].n_relays) {
            return Err(TopologyError::LengthMismatch {
                label: t.label.clone(),
                field: "n_relays",
                got: t.n_relays,
                expected: topologies[0].n_relays,
            });
        }
        ScheduledNetwork::new(topologies, TopologySchedule::new(self.segments.clone())?)
    }
}

pub fn parse_schedule(text: &str) -> Result<ScheduledNetwork, TopologyError> {
    let spec: ScheduleSpec = toml::from_str(text).map_err(|e| TopologyError::Parse(e.to_string()))?;
    spec.to_network()
}
