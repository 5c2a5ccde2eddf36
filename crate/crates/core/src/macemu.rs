//! Trace-driven MAC emulation.
//!
//! Cooperative delivery maps per-frame categories to delays, retransmissions
//! and drops. The genie router picks, per packet and with full knowledge of
//! future hop outcomes, the path that needs the fewest attempts.

use std::io;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netsim::{enumerate_modes, frame_outcome, mode_label, Category, Mode, Strategy};
use crate::outage::link_capacity;
use crate::selection::{run_policy, FrameRunner, ModeIndex, Policy, PolicyParams, PolicyRunLog, SelectionError};
use crate::topology::{db_to_linear, ChannelRealization, FrameChannels, Topology};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MacError {
    #[error("frame trace is empty or ends before the first packet completes")]
    TraceExhausted,
    #[error("path traces: {0}")]
    InvalidPaths(String),
    #[error("MacPolicy: {0}")]
    InvalidPolicy(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MacPolicy {
    #[serde(default = "d_retx_coop")]
    pub max_retx_coop: u32,
    #[serde(default = "d_retx_link")]
    pub max_retx_per_link: u32,
    #[serde(default = "d_air_direct")]
    pub airtime_direct_us: u64,
    #[serde(default = "d_air_coop")]
    pub airtime_coop_phase2_us: u64,
    #[serde(default = "d_payload")]
    pub payload_bits: u64,
}

fn d_retx_coop() -> u32 {
    2
}
fn d_retx_link() -> u32 {
    4
}
fn d_air_direct() -> u64 {
    180
}
fn d_air_coop() -> u64 {
    192
}
fn d_payload() -> u64 {
    7776
}

impl Default for MacPolicy {
    fn default() -> Self {
        MacPolicy {
            max_retx_coop: d_retx_coop(),
            max_retx_per_link: d_retx_link(),
            airtime_direct_us: d_air_direct(),
            airtime_coop_phase2_us: d_air_coop(),
            payload_bits: d_payload(),
        }
    }
}

impl MacPolicy {
    pub fn validate(&self) -> std::result::Result<(), MacError> {
        if self.airtime_direct_us == 0 || self.airtime_coop_phase2_us == 0 {
            return Err(MacError::InvalidPolicy("airtimes must be > 0".into()));
        }
        Ok(())
    }

    /// Airtime of a frame that needed the cooperative phase.
    pub fn airtime_two_phase_us(&self) -> u64 {
        self.airtime_direct_us + self.airtime_coop_phase2_us
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PacketResult {
    pub delivered: bool,
    pub total_delay_us: u64,
    pub attempts: u32,
    pub path_or_mode: String,
}

/// Incremental cooperative MAC: feed frame categories, collect packets.
#[derive(Debug, Clone)]
pub struct CoopMac {
    policy: MacPolicy,
    attempts: u32,
    delay: u64,
    pub packets: Vec<PacketResult>,
}

impl CoopMac {
    pub fn new(policy: MacPolicy) -> Self {
        CoopMac { policy, attempts: 0, delay: 0, packets: Vec::new() }
    }

    /// Attempt index (0-based) of the next frame within the current packet.
    pub fn attempt(&self) -> u32 {
        self.attempts
    }

    /// Account one frame. Returns true when it completed a packet.
    pub fn push(&mut self, category: Category, label: &str) -> bool {
        self.attempts += 1;
        self.delay += match category {
            Category::Direct => self.policy.airtime_direct_us,
            Category::Coop | Category::Failure => self.policy.airtime_two_phase_us(),
        };
        let delivered = !category.is_error();
        if !delivered && self.attempts <= self.policy.max_retx_coop {
            return false;
        }
        self.packets.push(PacketResult {
            delivered,
            total_delay_us: self.delay,
            attempts: self.attempts,
            path_or_mode: label.to_string(),
        });
        self.attempts = 0;
        self.delay = 0;
        true
    }
}

/// Cooperative delivery over a labelled frame trace. Each packet's result is
/// labelled with the mode of its final frame. Frames left over after the last
/// complete packet are discarded.
pub fn coop_mac_deliver_labeled<I, S>(trace: I, policy: &MacPolicy) -> std::result::Result<Vec<PacketResult>, MacError>
where
    I: IntoIterator<Item = (Category, S)>,
    S: AsRef<str>,
{
    let mut mac = CoopMac::new(*policy);
    for (c, label) in trace {
        mac.push(c, label.as_ref());
    }
    if mac.packets.is_empty() {
        return Err(MacError::TraceExhausted);
    }
    Ok(mac.packets)
}

/// [`coop_mac_deliver_labeled`] with every packet labelled `coop`.
pub fn coop_mac_deliver<I>(trace: I, policy: &MacPolicy) -> std::result::Result<Vec<PacketResult>, MacError>
where
    I: IntoIterator<Item = Category>,
{
    coop_mac_deliver_labeled(trace.into_iter().map(|c| (c, "coop")), policy)
}

/// Hop outcomes of one route, indexed `hops[hop][packet][attempt]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathTrace {
    pub label: String,
    pub hops: Vec<Vec<Vec<bool>>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathTraces {
    pub paths: Vec<PathTrace>,
}

impl PathTraces {
    /// Number of packets covered by every hop of every path.
    pub fn packets(&self) -> usize {
        self.paths.iter().flat_map(|p| p.hops.iter().map(Vec::len)).min().unwrap_or(0)
    }

    pub fn validate(&self, policy: &MacPolicy) -> std::result::Result<(), MacError> {
        if self.paths.is_empty() {
            return Err(MacError::InvalidPaths("at least one path required".into()));
        }
        let need = policy.max_retx_per_link as usize + 1;
        for p in &self.paths {
            if p.hops.is_empty() {
                return Err(MacError::InvalidPaths(format!("path {} has no hops", p.label)));
            }
            if p.hops.iter().flatten().any(|a| a.len() < need) {
                return Err(MacError::InvalidPaths(format!("path {} records fewer than {need} attempts for some hop", p.label)));
            }
        }
        if self.packets() == 0 {
            return Err(MacError::InvalidPaths("no packets".into()));
        }
        Ok(())
    }

    /// `(delivered, attempts)` for sending `packet` along `path`.
    pub fn send(&self, path: usize, packet: usize, policy: &MacPolicy) -> (bool, u32) {
        let budget = policy.max_retx_per_link as usize + 1;
        let mut attempts = 0u32;
        for hop in &self.paths[path].hops {
            match hop[packet][..budget].iter().position(|&ok| ok) {
                Some(k) => attempts += k as u32 + 1,
                None => return (false, attempts + budget as u32),
            }
        }
        (true, attempts)
    }

    pub fn write_csv<W: io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for p in &self.paths {
            for (hop, packets) in p.hops.iter().enumerate() {
                for (packet, attempts) in packets.iter().enumerate() {
                    for (attempt, &ok) in attempts.iter().enumerate() {
                        w.serialize(PathRow { path: p.label.clone(), hop, packet, attempt, success: ok as u8 })?;
                    }
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Columns `path, hop, packet, attempt, success`; paths keep their order
    /// of first appearance.
    pub fn read_csv<R: io::Read>(input: R) -> Result<Self> {
        let mut paths: Vec<PathTrace> = Vec::new();
        for row in csv::Reader::from_reader(input).deserialize::<PathRow>() {
            let row = row?;
            let k = match paths.iter().position(|p| p.label == row.path) {
                Some(k) => k,
                None => {
                    paths.push(PathTrace { label: row.path.clone(), hops: Vec::new() });
                    paths.len() - 1
                }
            };
            let hops = &mut paths[k].hops;
            if hops.len() <= row.hop {
                hops.resize(row.hop + 1, Vec::new());
            }
            let packets = &mut hops[row.hop];
            if packets.len() <= row.packet {
                packets.resize(row.packet + 1, Vec::new());
            }
            let attempts = &mut packets[row.packet];
            if attempts.len() != row.attempt {
                return Err(Error::Format(format!(
                    "path {} hop {} packet {}: attempts must be listed in order from 0",
                    row.path, row.hop, row.packet
                )));
            }
            attempts.push(row.success != 0);
        }
        Ok(PathTraces { paths })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct PathRow {
    path: String,
    hop: usize,
    packet: usize,
    attempt: usize,
    success: u8,
}

/// Per-packet genie routing. Every hop attempt costs one direct airtime.
pub fn genie_route(paths: &PathTraces, policy: &MacPolicy) -> std::result::Result<Vec<PacketResult>, MacError> {
    paths.validate(policy)?;
    Ok((0..paths.packets())
        .map(|packet| {
            let outcomes: Vec<(bool, u32)> = (0..paths.paths.len()).map(|p| paths.send(p, packet, policy)).collect();
            // delivering paths first, then fewest attempts, then lowest index
            let (best, &(delivered, attempts)) = outcomes
                .iter()
                .enumerate()
                .min_by_key(|&(i, &(ok, a))| (!ok, a, i))
                .expect("at least one path");
            PacketResult {
                delivered,
                total_delay_us: attempts as u64 * policy.airtime_direct_us,
                attempts,
                path_or_mode: paths.paths[best].label.clone(),
            }
        })
        .collect())
}

pub fn drop_rate(results: &[PacketResult]) -> f64 {
    if results.is_empty() {
        return 0.0;
    }
    results.iter().filter(|r| !r.delivered).count() as f64 / results.len() as f64
}

/// Delivered payload bits per second of emulated airtime.
pub fn throughput_proxy(results: &[PacketResult], policy: &MacPolicy) -> f64 {
    let delay: u64 = results.iter().map(|r| r.total_delay_us).sum();
    if delay == 0 {
        return 0.0;
    }
    let bits = results.iter().filter(|r| r.delivered).count() as u64 * policy.payload_bits;
    bits as f64 / (delay as f64 * 1e-6)
}

/// Paired cooperative and routing experiment on one topology.
#[derive(Debug, Clone, PartialEq)]
pub struct MacScenario {
    pub topology: Topology,
    pub rate: f64,
    pub strategy: Strategy,
    pub packets: usize,
    pub seed: u64,
}

impl MacScenario {
    /// Relay 1 decodes reliably but reaches the destination poorly, relay 2
    /// the reverse, relay 3 is weak on both hops and the direct link is
    /// nearly dead. No single route is dependable while the two-relay
    /// cooperative mode usually is.
    pub fn relay_limited(packets: usize, seed: u64) -> Self {
        let topology = Topology::from_snr(
            "relay-limited",
            db_to_linear(-10.0),
            &[30.0, 7.0, 0.0].map(db_to_linear),
            &[7.0, 30.0, 0.0].map(db_to_linear),
        )
        .expect("valid planted topology");
        MacScenario { topology, rate: 4.0, strategy: Strategy::Diqif, packets, seed }
    }

    /// Realizations reserved per packet: enough for the cooperative attempts
    /// and for every hop attempt of a two-hop route.
    pub fn block(&self, policy: &MacPolicy) -> u64 {
        let link = 2 * (policy.max_retx_per_link as u64 + 1);
        link.max(policy.max_retx_coop as u64 + 1)
    }

    /// Routes `S-D` and `S-Ri-D`. Attempt `a` of hop `h` for packet `p` uses
    /// realization `p·block + h·(max_retx_per_link+1) + a`; cooperative
    /// attempt `a` uses `p·block + a`.
    pub fn path_traces(&self, policy: &MacPolicy) -> PathTraces {
        let ch = FrameChannels::new(self.seed);
        let block = self.block(policy);
        let per_hop = policy.max_retx_per_link as u64 + 1;
        let n = self.topology.n_relays;
        let realizations: Vec<Vec<_>> = (0..self.packets as u64)
            .map(|p| (0..block).map(|k| ch.realization(&self.topology, p * block + k)).collect())
            .collect();
        let hop = |h: u64, ok: &dyn Fn(&ChannelRealization) -> bool| -> Vec<Vec<bool>> {
            realizations
                .iter()
                .map(|blk| (0..per_hop).map(|a| ok(&blk[(h * per_hop + a) as usize])).collect())
                .collect()
        };
        let r = self.rate;
        let mut paths = vec![PathTrace { label: "S-D".into(), hops: vec![hop(0, &|c| link_capacity(c.h_sd2) >= r)] }];
        for i in 0..n {
            paths.push(PathTrace {
                label: format!("S-R{}-D", i + 1),
                hops: vec![hop(0, &|c| link_capacity(c.h2[i]) >= r), hop(1, &|c| link_capacity(c.g2[i]) >= r)],
            });
        }
        PathTraces { paths }
    }
}

/// Feeds a policy's frames through the cooperative MAC on the scenario's
/// per-packet realization blocks.
pub struct CoopMacRunner<'a> {
    scenario: &'a MacScenario,
    modes: Vec<Mode>,
    labels: Vec<String>,
    channels: FrameChannels,
    block: u64,
    pub mac: CoopMac,
}

impl<'a> CoopMacRunner<'a> {
    pub fn new(scenario: &'a MacScenario, policy: &MacPolicy) -> Self {
        let modes = enumerate_modes(scenario.topology.n_relays);
        CoopMacRunner {
            scenario,
            labels: modes.iter().map(|&m| mode_label(Some(m))).collect(),
            modes,
            channels: FrameChannels::new(scenario.seed),
            block: scenario.block(policy),
            mac: CoopMac::new(*policy),
        }
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }
}

impl FrameRunner for CoopMacRunner<'_> {
    fn is_exhausted(&self) -> bool {
        self.mac.packets.len() >= self.scenario.packets
    }

    fn send(&mut self, mode: Option<ModeIndex>) -> Category {
        let p = self.mac.packets.len() as u64;
        let frame = p * self.block + self.mac.attempt() as u64;
        let c = self.channels.realization(&self.scenario.topology, frame);
        let category = frame_outcome(&c, mode.map(|m| self.modes[m]), self.scenario.strategy, self.scenario.rate).category;
        let label = mode.map_or("DT", |m| self.labels[m].as_str());
        self.mac.push(category, label);
        category
    }
}

#[derive(Debug, Clone)]
pub struct CompareReport {
    pub coop: Vec<PacketResult>,
    pub genie: Vec<PacketResult>,
    pub coop_drop_rate: f64,
    pub genie_drop_rate: f64,
    pub coop_throughput: f64,
    pub genie_throughput: f64,
    pub coop_log: PolicyRunLog,
}

/// Run `policy` with cooperative MAC delivery and the genie router on the
/// same channel realizations.
pub fn compare_coop_vs_genie<R: Rng + ?Sized>(
    scenario: &MacScenario,
    policy: Policy,
    params: &PolicyParams,
    mac: &MacPolicy,
    rng: &mut R,
) -> std::result::Result<CompareReport, Error> {
    mac.validate()?;
    if scenario.packets == 0 {
        return Err(MacError::TraceExhausted.into());
    }
    let mut runner = CoopMacRunner::new(scenario, mac);
    let n_modes = runner.n_modes();
    let coop_log = run_policy(policy, &mut runner, n_modes, params, rng).map_err(|e: SelectionError| Error::from(e))?;
    let coop = runner.mac.packets;
    let genie = genie_route(&scenario.path_traces(mac), mac)?;
    Ok(CompareReport {
        coop_drop_rate: drop_rate(&coop),
        genie_drop_rate: drop_rate(&genie),
        coop_throughput: throughput_proxy(&coop, mac),
        genie_throughput: throughput_proxy(&genie, mac),
        coop,
        genie,
        coop_log,
    })
}

#[derive(Debug, Serialize)]
pub struct PacketRow<'a> {
    pub packet_index: usize,
    pub delivered: u8,
    pub attempts: u32,
    pub delay_us: u64,
    pub path_or_mode: &'a str,
}

pub fn write_packets<W: io::Write>(out: W, results: &[PacketResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (k, r) in results.iter().enumerate() {
        w.serialize(PacketRow {
            packet_index: k,
            delivered: r.delivered as u8,
            attempts: r.attempts,
            delay_us: r.total_delay_us,
            path_or_mode: &r.path_or_mode,
        })?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use Category::*;

    fn one(trace: &[Category]) -> PacketResult {
        coop_mac_deliver(trace.iter().copied(), &MacPolicy::default()).unwrap().remove(0)
    }

    #[test]
    fn coop_delay_examples() {
        assert_eq!((one(&[Direct]).total_delay_us, one(&[Direct]).attempts), (180, 1));
        assert_eq!(one(&[Coop]).total_delay_us, 372);
        let r = one(&[Failure, Coop]);
        assert!(r.delivered);
        assert_eq!((r.total_delay_us, r.attempts), (744, 2));
        let r = one(&[Failure, Failure, Direct]);
        assert_eq!((r.total_delay_us, r.attempts), (372 * 2 + 180, 3));
    }

    #[test]
    fn drop_after_max_retx() {
        let out = coop_mac_deliver([Failure, Failure, Failure, Direct], &MacPolicy::default()).unwrap();
        assert_eq!(out.len(), 2);
        assert!(!out[0].delivered);
        assert_eq!((out[0].attempts, out[0].total_delay_us), (3, 3 * 372));
        assert!(out[1].delivered);
    }

    #[test]
    fn zero_retx_drops_on_first_error() {
        let p = MacPolicy { max_retx_coop: 0, ..Default::default() };
        let out = coop_mac_deliver([Failure, Coop], &p).unwrap();
        assert_eq!(out.len(), 2);
        assert!(!out[0].delivered && out[1].delivered);
    }

    #[test]
    fn exhausted_traces() {
        assert_eq!(coop_mac_deliver([], &MacPolicy::default()), Err(MacError::TraceExhausted));
        assert_eq!(coop_mac_deliver([Failure, Failure], &MacPolicy::default()), Err(MacError::TraceExhausted));
        // trailing partial packet discarded
        assert_eq!(coop_mac_deliver([Direct, Failure], &MacPolicy::default()).unwrap().len(), 1);
    }

    #[test]
    fn throughput_of_all_direct_trace() {
        let p = MacPolicy::default();
        let out = coop_mac_deliver([Direct; 10], &p).unwrap();
        assert_eq!(drop_rate(&out), 0.0);
        assert!((throughput_proxy(&out, &p) - 43.2e6).abs() < 1.0);
    }

    fn constant_path(label: &str, hops: usize, ok: bool, packets: usize) -> PathTrace {
        PathTrace { label: label.into(), hops: vec![vec![vec![ok; 5]; packets]; hops] }
    }

    #[test]
    fn genie_single_good_path() {
        let paths = PathTraces { paths: vec![constant_path("a", 2, true, 7)] };
        let out = genie_route(&paths, &MacPolicy::default()).unwrap();
        assert_eq!(out.len(), 7);
        assert_eq!(drop_rate(&out), 0.0);
        assert!(out.iter().all(|r| r.attempts == 2 && r.total_delay_us == 360));
    }

    #[test]
    fn genie_all_fail_picks_earliest_drop() {
        let mut two_hop = constant_path("two-hop", 2, false, 3);
        two_hop.hops[0] = vec![vec![true; 5]; 3];
        let paths = PathTraces { paths: vec![two_hop, constant_path("direct", 1, false, 3)] };
        let out = genie_route(&paths, &MacPolicy::default()).unwrap();
        assert_eq!(drop_rate(&out), 1.0);
        assert!(out.iter().all(|r| r.path_or_mode == "direct" && r.attempts == 5));
    }

    #[test]
    fn genie_prefers_fewest_attempts() {
        let mut slow = constant_path("slow", 1, false, 1);
        slow.hops[0][0][3] = true;
        let mut fast = constant_path("fast", 2, false, 1);
        fast.hops[0][0][0] = true;
        fast.hops[1][0][1] = true;
        let paths = PathTraces { paths: vec![slow, fast] };
        let out = genie_route(&paths, &MacPolicy::default()).unwrap();
        assert_eq!((out[0].path_or_mode.as_str(), out[0].attempts), ("fast", 3));
    }

    #[test]
    fn short_attempt_records_are_rejected() {
        let mut p = constant_path("a", 1, true, 2);
        p.hops[0][1].truncate(4);
        assert!(genie_route(&PathTraces { paths: vec![p] }, &MacPolicy::default()).is_err());
        assert!(genie_route(&PathTraces { paths: vec![] }, &MacPolicy::default()).is_err());
    }

    #[test]
    fn path_csv_round_trip() {
        let mut p = constant_path("S-R1-D", 2, false, 3);
        p.hops[1][2][4] = true;
        let traces = PathTraces { paths: vec![constant_path("S-D", 1, true, 3), p] };
        let mut buf = Vec::new();
        traces.write_csv(&mut buf).unwrap();
        assert_eq!(PathTraces::read_csv(&buf[..]).unwrap(), traces);
    }

    #[test]
    fn perfect_relay_path_gives_genie_no_drops() {
        let t = Topology::from_snr("perfect", 1e-3, &[1e9], &[1e9]).unwrap();
        let s = MacScenario { topology: t, rate: 1.0, strategy: Strategy::Diqif, packets: 200, seed: 3 };
        let rep = compare_coop_vs_genie(&s, Policy::Spa, &PolicyParams { spa: crate::selection::SpaParams { r: 1, ..Default::default() }, ..Default::default() }, &MacPolicy::default(), &mut crate::rng::stream(0, 0)).unwrap();
        assert_eq!(rep.genie_drop_rate, 0.0);
        assert!(rep.coop_drop_rate >= 0.0);
        assert_eq!(rep.coop.len(), 200);
    }
}
