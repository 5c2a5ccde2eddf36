//! Ensemble evaluation of selection policies.
//!
//! A [`ModeDataset`] stores, per topology, a fixed-length outcome record for
//! every mode (and for direct transmission) on shared per-frame channels.
//! Time-varying [`EnsembleSample`]s are stitched together from randomly
//! chosen topologies and randomly chosen recorded frames; a policy is replayed
//! on each sample by serving the recorded outcome of whichever mode it picks
//! at each frame position.

use std::io;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netsim::{enumerate_modes, frame_outcome, mode_label, Category, Strategy};
use crate::rng::{self, derive_seed};
use crate::selection::{run_policy, synthetic::PlantedSegment, FrameRunner, ModeIndex, Policy, PolicyParams, SelectionError};
use crate::stats::{mean, std_error};
use crate::topology::{FrameChannels, Topology};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnsembleError {
    #[error("segment length {segment_len} exceeds the {frames} recorded frames per topology")]
    SegmentTooLong { segment_len: usize, frames: usize },
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("no ensemble samples")]
    NoSamples,
}

/// Recorded outcomes, indexed `[topology][mode][frame]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeDataset {
    pub topologies: Vec<String>,
    pub modes: Vec<String>,
    pub frames: usize,
    outcomes: Vec<Vec<Vec<Category>>>,
    direct: Vec<Vec<Category>>,
}

impl ModeDataset {
    /// Assemble a dataset; every (topology, mode) record and every direct
    /// record must have exactly `frames` entries.
    pub fn new(
        topologies: Vec<String>,
        modes: Vec<String>,
        outcomes: Vec<Vec<Vec<Category>>>,
        direct: Vec<Vec<Category>>,
    ) -> std::result::Result<Self, EnsembleError> {
        let bad = |m: &str| Err(EnsembleError::Dataset(m.to_string()));
        if topologies.is_empty() || modes.is_empty() {
            return bad("needs at least one topology and one mode");
        }
        if outcomes.len() != topologies.len() || direct.len() != topologies.len() {
            return bad("one record set per topology required");
        }
        let frames = direct[0].len();
        if frames == 0 {
            return bad("records are empty");
        }
        for (per_mode, d) in outcomes.iter().zip(&direct) {
            if per_mode.len() != modes.len() || d.len() != frames || per_mode.iter().any(|r| r.len() != frames) {
                return bad("every (topology, mode) pair needs a record of equal length");
            }
        }
        Ok(ModeDataset { topologies, modes, frames, outcomes, direct })
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn outcome(&self, topology: usize, mode: Option<ModeIndex>, frame: usize) -> Category {
        match mode {
            Some(m) => self.outcomes[topology][m][frame],
            None => self.direct[topology][frame],
        }
    }

    pub fn record(&self, topology: usize, mode: ModeIndex) -> &[Category] {
        &self.outcomes[topology][mode]
    }

    /// Long-format rows in the shared trace layout
    /// (`frame_index, topology_id, mode, category`); direct transmission is
    /// mode `DT`.
    pub fn write_csv<W: io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for (t, name) in self.topologies.iter().enumerate() {
            for m in 0..=self.modes.len() {
                let (label, rec) = if m < self.modes.len() {
                    (self.modes[m].as_str(), &self.outcomes[t][m])
                } else {
                    ("DT", &self.direct[t])
                };
                for (f, c) in rec.iter().enumerate() {
                    w.serialize(DatasetRow { frame_index: f, topology_id: name.clone(), mode: label.into(), category: c.code() })?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Inverse of [`write_csv`](Self::write_csv). Topologies and modes keep
    /// their order of first appearance.
    pub fn read_csv<R: io::Read>(input: R) -> Result<Self> {
        let mut topologies: Vec<String> = Vec::new();
        let mut modes: Vec<String> = Vec::new();
        let mut rows = Vec::new();
        for row in csv::Reader::from_reader(input).deserialize::<DatasetRow>() {
            let row = row?;
            if !topologies.contains(&row.topology_id) {
                topologies.push(row.topology_id.clone());
            }
            if row.mode != "DT" && !modes.contains(&row.mode) {
                modes.push(row.mode.clone());
            }
            rows.push(row);
        }
        let frames = rows.iter().map(|r| r.frame_index + 1).max().unwrap_or(0);
        let mut outcomes = vec![vec![vec![None; frames]; modes.len()]; topologies.len()];
        let mut direct = vec![vec![None; frames]; topologies.len()];
        for r in rows {
            let t = topologies.iter().position(|x| *x == r.topology_id).expect("collected above");
            let c = Category::from_code(r.category)
                .ok_or_else(|| Error::Format(format!("category {} not in 0..=2", r.category)))?;
            let slot = if r.mode == "DT" {
                &mut direct[t][r.frame_index]
            } else {
                let m = modes.iter().position(|x| *x == r.mode).expect("collected above");
                &mut outcomes[t][m][r.frame_index]
            };
            *slot = Some(c);
        }
        let missing = || Error::Format("dataset has missing (topology, mode, frame) entries".into());
        let outcomes = outcomes
            .into_iter()
            .map(|per_mode| {
                per_mode
                    .into_iter()
                    .map(|rec| rec.into_iter().collect::<Option<Vec<_>>>().ok_or_else(missing))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let direct = direct
            .into_iter()
            .map(|rec| rec.into_iter().collect::<Option<Vec<_>>>().ok_or_else(missing))
            .collect::<Result<Vec<_>>>()?;
        Ok(ModeDataset::new(topologies, modes, outcomes, direct)?)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetRow {
    frame_index: usize,
    topology_id: String,
    mode: String,
    category: u8,
}

/// Simulate every mode of every topology on shared per-frame channels: frame
/// `f` of topology `t` uses one realization for all modes and for DT.
pub fn record_dataset(
    topologies: &[Topology],
    strategy: Strategy,
    rate: f64,
    frames_per_topology: usize,
    seed: u64,
) -> Result<ModeDataset> {
    if frames_per_topology == 0 {
        return Err(Error::Format("frames_per_topology must be >= 1".into()));
    }
    let n = topologies.first().ok_or_else(|| Error::Format("no topologies".into()))?.n_relays;
    if topologies.iter().any(|t| t.n_relays != n) {
        return Err(Error::Format("all topologies must have the same number of relays".into()));
    }
    let modes = enumerate_modes(n);
    let per_topology: Vec<(Vec<Vec<Category>>, Vec<Category>)> = topologies
        .par_iter()
        .enumerate()
        .map(|(ti, t)| {
            let channels = FrameChannels::new(derive_seed(seed, ti as u64));
            let mut per_mode = vec![Vec::with_capacity(frames_per_topology); modes.len()];
            let mut direct = Vec::with_capacity(frames_per_topology);
            for f in 0..frames_per_topology {
                let c = channels.realization(t, f as u64);
                for (m, &mode) in modes.iter().enumerate() {
                    per_mode[m].push(frame_outcome(&c, Some(mode), strategy, rate).category);
                }
                direct.push(frame_outcome(&c, None, Strategy::Dt, rate).category);
            }
            (per_mode, direct)
        })
        .collect();
    let (outcomes, direct) = per_topology.into_iter().unzip();
    Ok(ModeDataset::new(
        topologies.iter().map(|t| t.label.clone()).collect(),
        modes.iter().map(|&m| mode_label(Some(m))).collect(),
        outcomes,
        direct,
    )?)
}

/// Dataset with planted per-mode FERs: every recorded frame is an
/// independent Bernoulli error with the topology's rate for that mode.
/// Topology `t` is named `T{t+1}`; `segments[t].frames` is ignored in favour
/// of `frames`.
pub fn planted_dataset(plants: &[PlantedSegment], mode_labels: &[String], frames: usize, seed: u64) -> Result<ModeDataset> {
    if plants.iter().any(|p| p.mode_fers.len() != mode_labels.len()) {
        return Err(Error::Format("every planted topology needs one FER per mode".into()));
    }
    let mut outcomes = Vec::with_capacity(plants.len());
    let mut direct = Vec::with_capacity(plants.len());
    for (t, p) in plants.iter().enumerate() {
        let mut r = rng::stream(seed, t as u64);
        let mut draw = |fer: f64, ok: Category| -> Vec<Category> {
            (0..frames).map(|_| if r.random::<f64>() < fer { Category::Failure } else { ok }).collect()
        };
        outcomes.push(p.mode_fers.iter().map(|&f| draw(f, Category::Coop)).collect::<Vec<_>>());
        direct.push(draw(p.direct_fer, Category::Direct));
    }
    Ok(ModeDataset::new(
        (1..=plants.len()).map(|t| format!("T{t}")).collect(),
        mode_labels.to_vec(),
        outcomes,
        direct,
    )?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSegment {
    pub topology: usize,
    /// Dataset frame index served at each position of the segment.
    pub rows: Vec<usize>,
}

/// A time-varying network assembled from recorded topologies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnsembleSample {
    pub segments: Vec<SampleSegment>,
}

impl EnsembleSample {
    pub fn total_frames(&self) -> usize {
        self.segments.iter().map(|s| s.rows.len()).sum()
    }
}

/// `n_transitions + 1` segments of `segment_len` frames; topologies uniform
/// with repetition, rows uniform without replacement within a segment.
pub fn make_sample<R: Rng + ?Sized>(
    d: &ModeDataset,
    n_transitions: usize,
    segment_len: usize,
    rng: &mut R,
) -> std::result::Result<EnsembleSample, EnsembleError> {
    if segment_len > d.frames || segment_len == 0 {
        return Err(EnsembleError::SegmentTooLong { segment_len, frames: d.frames });
    }
    let segments = (0..=n_transitions)
        .map(|_| {
            let topology = rng.random_range(0..d.topologies.len());
            let rows = index::sample(rng, d.frames, segment_len).into_vec();
            SampleSegment { topology, rows }
        })
        .collect();
    Ok(EnsembleSample { segments })
}

/// `count` samples, sample `k` drawn from stream `(seed, k)`.
pub fn make_ensemble(
    d: &ModeDataset,
    count: usize,
    n_transitions: usize,
    segment_len: usize,
    seed: u64,
) -> std::result::Result<Vec<EnsembleSample>, EnsembleError> {
    (0..count)
        .map(|k| make_sample(d, n_transitions, segment_len, &mut rng::stream(seed, k as u64)))
        .collect()
}

/// Replays recorded outcomes along a sample.
pub struct ReplayRunner<'a> {
    dataset: &'a ModeDataset,
    sample: &'a EnsembleSample,
    segment: usize,
    offset: usize,
}

impl<'a> ReplayRunner<'a> {
    pub fn new(dataset: &'a ModeDataset, sample: &'a EnsembleSample) -> Self {
        ReplayRunner { dataset, sample, segment: 0, offset: 0 }
    }
}

impl FrameRunner for ReplayRunner<'_> {
    fn is_exhausted(&self) -> bool {
        self.segment >= self.sample.segments.len()
    }

    fn send(&mut self, mode: Option<ModeIndex>) -> Category {
        let seg = &self.sample.segments[self.segment];
        let c = self.dataset.outcome(seg.topology, mode, seg.rows[self.offset]);
        self.offset += 1;
        if self.offset == seg.rows.len() {
            self.segment += 1;
            self.offset = 0;
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleMetrics {
    pub sample: usize,
    pub frames: usize,
    pub errors: usize,
    pub fer: f64,
    pub switches: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub avg_fer: f64,
    pub avg_switches: f64,
    pub fer_std_error: f64,
    pub switches_std_error: f64,
    pub rows: Vec<SampleMetrics>,
}

impl EnsembleResult {
    fn from_rows(rows: Vec<SampleMetrics>) -> Self {
        let fers: Vec<f64> = rows.iter().map(|r| r.fer).collect();
        let sw: Vec<f64> = rows.iter().map(|r| r.switches as f64).collect();
        EnsembleResult {
            avg_fer: mean(&fers),
            avg_switches: mean(&sw),
            fer_std_error: std_error(&fers),
            switches_std_error: std_error(&sw),
            rows,
        }
    }
}

/// Replay `policy` on every sample. Randomized policies use stream
/// `(seed, sample index)`, so results do not depend on scheduling.
pub fn evaluate_on_ensemble(
    policy: Policy,
    samples: &[EnsembleSample],
    d: &ModeDataset,
    params: &PolicyParams,
    seed: u64,
) -> std::result::Result<EnsembleResult, Error> {
    if samples.is_empty() {
        return Err(EnsembleError::NoSamples.into());
    }
    let rows = samples
        .par_iter()
        .enumerate()
        .map(|(k, s)| {
            let mut runner = ReplayRunner::new(d, s);
            let log = run_policy(policy, &mut runner, d.n_modes(), params, &mut rng::stream(seed, k as u64))?;
            Ok(SampleMetrics { sample: k, frames: log.len(), errors: log.errors(), fer: log.fer(), switches: log.switches() })
        })
        .collect::<std::result::Result<Vec<_>, SelectionError>>()?;
    Ok(EnsembleResult::from_rows(rows))
}

/// Clairvoyant reference: in each segment, the mode with the fewest recorded
/// errors on exactly the rows served.
pub fn oracle_on_ensemble(samples: &[EnsembleSample], d: &ModeDataset) -> std::result::Result<EnsembleResult, EnsembleError> {
    if samples.is_empty() {
        return Err(EnsembleError::NoSamples);
    }
    let rows = samples
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let mut errors = 0;
            let mut switches = 0;
            let mut prev: Option<ModeIndex> = None;
            for seg in &s.segments {
                let (best, errs) = (0..d.n_modes())
                    .map(|m| (m, seg.rows.iter().filter(|&&r| d.outcome(seg.topology, Some(m), r).is_error()).count()))
                    .min_by_key(|&(m, e)| (e, m))
                    .expect("at least one mode");
                errors += errs;
                if prev.is_some_and(|p| p != best) {
                    switches += 1;
                }
                prev = Some(best);
            }
            let frames = s.total_frames();
            SampleMetrics { sample: k, frames, errors, fer: errors as f64 / frames as f64, switches }
        })
        .collect();
    Ok(EnsembleResult::from_rows(rows))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MemoryRow {
    pub r: usize,
    pub avg_fer: f64,
    pub avg_switches: f64,
}

/// SPA over the ensemble for every memory size in `rs`.
pub fn memory_sweep(
    d: &ModeDataset,
    samples: &[EnsembleSample],
    rs: &[usize],
    params: &PolicyParams,
    seed: u64,
) -> std::result::Result<Vec<MemoryRow>, Error> {
    rs.iter()
        .map(|&r| {
            let mut p = *params;
            p.spa.r = r;
            let res = evaluate_on_ensemble(Policy::Spa, samples, d, &p, seed)?;
            Ok(MemoryRow { r, avg_fer: res.avg_fer, avg_switches: res.avg_switches })
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct SampleRow {
    sample: usize,
    segment: usize,
    position: usize,
    topology_id: String,
    row: usize,
}

pub fn write_samples_csv<W: io::Write>(out: W, d: &ModeDataset, samples: &[EnsembleSample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (k, s) in samples.iter().enumerate() {
        for (g, seg) in s.segments.iter().enumerate() {
            for (position, &row) in seg.rows.iter().enumerate() {
                w.serialize(SampleRow { sample: k, segment: g, position, topology_id: d.topologies[seg.topology].clone(), row })?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModeDataset {
        use Category::*;
        ModeDataset::new(
            vec!["A".into(), "B".into()],
            vec!["R1".into(), "R2".into()],
            vec![
                vec![vec![Coop, Failure, Coop], vec![Failure, Failure, Coop]],
                vec![vec![Failure, Failure, Failure], vec![Coop, Coop, Coop]],
            ],
            vec![vec![Direct, Failure, Failure], vec![Failure, Failure, Direct]],
        )
        .unwrap()
    }

    #[test]
    fn dataset_shape_is_checked() {
        let r = ModeDataset::new(vec!["A".into()], vec!["R1".into()], vec![vec![vec![Category::Coop; 2]]], vec![vec![Category::Direct; 3]]);
        assert!(r.is_err());
    }

    #[test]
    fn dataset_csv_round_trip() {
        let d = tiny();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("frame_index,topology_id,mode,category\n"));
        assert_eq!(ModeDataset::read_csv(&buf[..]).unwrap(), d);
    }

    #[test]
    fn sample_shapes() {
        let d = tiny();
        let mut r = rng::stream(1, 0);
        let s = make_sample(&d, 4, 2, &mut r).unwrap();
        assert_eq!(s.segments.len(), 5);
        assert_eq!(s.total_frames(), 10);
        for seg in &s.segments {
            let mut rows = seg.rows.clone();
            rows.sort_unstable();
            rows.dedup();
            assert_eq!(rows.len(), 2);
            assert!(rows.iter().all(|&x| x < 3));
        }
        assert_eq!(make_sample(&d, 0, 3, &mut r).unwrap().segments.len(), 1);
        assert_eq!(make_sample(&d, 1, 4, &mut r), Err(EnsembleError::SegmentTooLong { segment_len: 4, frames: 3 }));
    }

    #[test]
    fn replay_serves_recorded_rows() {
        let d = tiny();
        let s = EnsembleSample {
            segments: vec![SampleSegment { topology: 1, rows: vec![2, 0] }, SampleSegment { topology: 0, rows: vec![1] }],
        };
        let mut run = ReplayRunner::new(&d, &s);
        assert_eq!(run.send(None), Category::Direct);
        assert_eq!(run.send(Some(0)), Category::Failure);
        assert!(!run.is_exhausted());
        assert_eq!(run.send(Some(1)), Category::Failure);
        assert!(run.is_exhausted());
    }

    #[test]
    fn oracle_picks_best_mode_per_segment() {
        let d = tiny();
        let s = EnsembleSample {
            segments: vec![SampleSegment { topology: 0, rows: vec![0, 1, 2] }, SampleSegment { topology: 1, rows: vec![0, 1, 2] }],
        };
        let res = oracle_on_ensemble(&[s], &d).unwrap();
        // A: R1 has 1 error; B: R2 has 0 errors; one switch
        assert_eq!(res.rows[0].errors, 1);
        assert_eq!(res.rows[0].switches, 1);
    }
}
