//! Outage analysis of relay subnetworks under Rayleigh fading.
//!
//! The capacity of a relay network with a direct link is approximated by the
//! minimum over all cuts `Ω` (the relays on the destination side of the cut)
//! of
//!
//! ```text
//! I_Ω = max{ C(h_sd²), max_{i∈Ω} C(h_i²) + max_{j∈Ωᶜ} C(g_j²) },   C(x) = log₂(1+x)
//! ```
//!
//! with an empty max taken as 0. The outage probability `Pr{min_Ω I_Ω < R}`
//! is upper bounded by the union over cuts; each term factors into the
//! direct-link outage times
//!
//! ```text
//! P_Ω = Pr{(1+X)(1+Y) < 2^R},   X = max_{i∈Ω} h_i²,  Y = max_{j∈Ωᶜ} g_j²,
//! ```
//!
//! which is evaluated by adaptive quadrature of `f_X(x) F_Y(2^R/(1+x) - 1)`.
//! A Monte-Carlo estimate of the true approximate-capacity outage serves as
//! the tightness oracle.

use itertools::Itertools;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature;
use crate::rng;
use crate::stats::binomial_std_error;
use crate::topology::{db_to_linear, ChannelRealization, Topology, TopologyError};

pub const DEFAULT_QUADRATURE_REL_TOL: f64 = 1e-8;
pub const DEFAULT_MC_SAMPLES: usize = 100_000;
const MAX_QUADRATURE_INTERVALS: usize = 2000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OutageError {
    #[error("relay {index} of the cut is not part of the active subset")]
    IndexOutOfSubset { index: usize },
    #[error("invalid relay subset {subset:?} for a {n_relays}-relay topology")]
    InvalidSubset { subset: Vec<usize>, n_relays: usize },
    #[error("rate must be finite and non-negative, got {0}")]
    InvalidRate(f64),
    #[error("subset size k={k} exceeds the {n_relays} available relays")]
    InvalidK { k: usize, n_relays: usize },
    #[error("quadrature did not reach tolerance (value {value}, error estimate {error})")]
    QuadratureFailure { value: f64, error: f64 },
    #[error("SNR grid must be non-empty and ascending")]
    BadGrid,
    #[error("Monte-Carlo outage needs at least 100 samples, got {0}")]
    TooFewSamples(usize),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

/// `log₂(1 + snr)`.
pub fn link_capacity(snr: f64) -> f64 {
    snr.ln_1p() / std::f64::consts::LN_2
}

/// `2^R - 1`, the SNR threshold of rate `R`.
pub fn snr_threshold(rate: f64) -> f64 {
    (rate * std::f64::consts::LN_2).exp_m1()
}

/// A cut of the active relay subnetwork: `omega` holds the relays on the
/// destination side (their source-relay links cross the cut); the remaining
/// active relays are on the source side (their relay-destination links cross).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cut {
    pub omega: Vec<usize>,
}

impl Cut {
    pub fn new(omega: Vec<usize>) -> Self {
        Cut { omega }
    }

    /// All `2^|subset|` cuts of `subset`.
    pub fn enumerate(subset: &[usize]) -> Vec<Cut> {
        (0..1usize << subset.len())
            .map(|mask| Cut {
                omega: subset
                    .iter()
                    .enumerate()
                    .filter(|(b, _)| mask >> b & 1 == 1)
                    .map(|(_, &r)| r)
                    .collect(),
            })
            .collect()
    }

    /// `Ωᶜ ∩ subset`, or an error if `Ω ⊄ subset`.
    pub fn complement(&self, subset: &[usize]) -> Result<Vec<usize>, OutageError> {
        if let Some(&index) = self.omega.iter().find(|i| !subset.contains(i)) {
            return Err(OutageError::IndexOutOfSubset { index });
        }
        Ok(subset.iter().copied().filter(|j| !self.omega.contains(j)).collect())
    }
}

/// `I_Ω` for one realization.
pub fn cut_value(c: &ChannelRealization, cut: &Cut, subset: &[usize]) -> Result<f64, OutageError> {
    let complement = cut.complement(subset)?;
    let best_in = cut.omega.iter().map(|&i| link_capacity(c.h2[i])).fold(0.0, f64::max);
    let best_out = complement.iter().map(|&j| link_capacity(c.g2[j])).fold(0.0, f64::max);
    Ok(link_capacity(c.h_sd2).max(best_in + best_out))
}

/// Approximate capacity of the subnetwork `subset`: the minimum cut value.
pub fn approx_capacity(c: &ChannelRealization, subset: &[usize]) -> f64 {
    let direct = link_capacity(c.h_sd2);
    let ch: Vec<f64> = subset.iter().map(|&i| link_capacity(c.h2[i])).collect();
    let cg: Vec<f64> = subset.iter().map(|&i| link_capacity(c.g2[i])).collect();
    let mut best = f64::INFINITY;
    for mask in 0..1usize << subset.len() {
        let (mut a, mut b) = (0.0f64, 0.0f64);
        for k in 0..subset.len() {
            if mask >> k & 1 == 1 {
                a = a.max(ch[k]);
            } else {
                b = b.max(cg[k]);
            }
        }
        best = best.min(direct.max(a + b));
        if best <= direct {
            break;
        }
    }
    best
}

/// `Pr{log₂(1+h_sd²) < R} = 1 - exp(-λ(2^R - 1))`.
pub fn direct_outage(lambda_sd: f64, rate: f64) -> f64 {
    -(-lambda_sd * snr_threshold(rate)).exp_m1()
}

/// Parameters of an outage evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct OutageQuery {
    pub rate: f64,
    /// Active relays, 0-based.
    pub subset: Vec<usize>,
    pub quadrature_rel_tol: f64,
    pub mc_samples: usize,
}

impl OutageQuery {
    pub fn new(rate: f64, subset: Vec<usize>) -> Self {
        OutageQuery {
            rate,
            subset,
            quadrature_rel_tol: DEFAULT_QUADRATURE_REL_TOL,
            mc_samples: DEFAULT_MC_SAMPLES,
        }
    }

    pub fn with_rel_tol(mut self, tol: f64) -> Self {
        self.quadrature_rel_tol = tol;
        self
    }

    pub fn with_samples(mut self, n: usize) -> Self {
        self.mc_samples = n;
        self
    }

    pub fn validate(&self, t: &Topology) -> Result<(), OutageError> {
        if !(self.rate.is_finite() && self.rate >= 0.0) {
            return Err(OutageError::InvalidRate(self.rate));
        }
        let in_range = self.subset.iter().all(|&i| i < t.n_relays);
        if !in_range || !self.subset.iter().all_unique() {
            return Err(OutageError::InvalidSubset {
                subset: self.subset.clone(),
                n_relays: t.n_relays,
            });
        }
        Ok(())
    }
}

/// CDF of the max of independent exponentials with the given rates.
fn max_exp_cdf(rates: &[f64], x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    rates.iter().map(|&l| -(-l * x).exp_m1()).product()
}

/// Density of the max of independent exponentials with the given rates.
fn max_exp_pdf(rates: &[f64], x: f64) -> f64 {
    (0..rates.len())
        .map(|i| {
            let others: f64 = rates
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != i)
                .map(|(_, &l)| -(-l * x).exp_m1())
                .product();
            rates[i] * (-rates[i] * x).exp() * others
        })
        .sum()
}

/// `P_Ω = Pr{log₂(1+X) + log₂(1+Y) < R}` for one cut.
pub fn cut_outage_analytic(t: &Topology, q: &OutageQuery, cut: &Cut) -> Result<f64, OutageError> {
    q.validate(t)?;
    let complement = cut.complement(&q.subset)?;
    let threshold = snr_threshold(q.rate);
    let rates_x: Vec<f64> = cut.omega.iter().map(|&i| t.lambda_sr[i]).collect();
    let rates_y: Vec<f64> = complement.iter().map(|&j| t.lambda_rd[j]).collect();

    // An empty max is 0, so that side contributes log₂(1) = 0.
    let p = match (rates_x.is_empty(), rates_y.is_empty()) {
        (true, true) => {
            if q.rate > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        (true, false) => max_exp_cdf(&rates_y, threshold),
        (false, true) => max_exp_cdf(&rates_x, threshold),
        (false, false) => {
            let integrand = |x: f64| {
                let y = (threshold - x) / (1.0 + x);
                max_exp_pdf(&rates_x, x) * max_exp_cdf(&rates_y, y)
            };
            let r = quadrature::integrate(
                integrand,
                0.0,
                threshold,
                q.quadrature_rel_tol,
                1e-300,
                MAX_QUADRATURE_INTERVALS,
            )
            .map_err(|f| OutageError::QuadratureFailure { value: f.value, error: f.error })?;
            r.value
        }
    };
    Ok(p.clamp(0.0, 1.0))
}

/// Union bound `min(1, P_direct · Σ_Ω P_Ω)` on the subnetwork outage.
pub fn outage_upper_bound(t: &Topology, q: &OutageQuery) -> Result<f64, OutageError> {
    q.validate(t)?;
    let direct = direct_outage(t.lambda_sd, q.rate);
    if direct == 0.0 {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for cut in Cut::enumerate(&q.subset) {
        sum += cut_outage_analytic(t, q, &cut)?;
    }
    Ok((direct * sum).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Fraction of `q.mc_samples` realizations whose approximate capacity is
/// below the rate.
pub fn outage_monte_carlo<R: Rng + ?Sized>(
    t: &Topology,
    q: &OutageQuery,
    rng: &mut R,
) -> Result<McEstimate, OutageError> {
    q.validate(t)?;
    if q.mc_samples < 100 {
        return Err(OutageError::TooFewSamples(q.mc_samples));
    }
    let outages = (0..q.mc_samples)
        .filter(|_| approx_capacity(&t.sample(rng), &q.subset) < q.rate)
        .count();
    Ok(mc_estimate(outages, q.mc_samples))
}

fn mc_estimate(outages: usize, samples: usize) -> McEstimate {
    let estimate = outages as f64 / samples as f64;
    McEstimate { estimate, std_error: binomial_std_error(estimate, samples), samples }
}

/// How subnetwork outage is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum OutageMethod {
    /// Union upper bound with quadrature.
    Analytic { rel_tol: f64 },
    /// Monte-Carlo with common random numbers: every subset is scored on the
    /// same realizations drawn from stream `seed`.
    MonteCarlo { samples: usize, seed: u64 },
}

impl OutageMethod {
    pub fn analytic() -> Self {
        OutageMethod::Analytic { rel_tol: DEFAULT_QUADRATURE_REL_TOL }
    }

    pub fn name(&self) -> &'static str {
        match self {
            OutageMethod::Analytic { .. } => "analytic",
            OutageMethod::MonteCarlo { .. } => "montecarlo",
        }
    }
}

/// Outage-optimal subset of a given size.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetOutage {
    /// 0-based relay indices, ascending.
    pub subset: Vec<usize>,
    pub outage: f64,
}

/// Dash-separated 1-based relay indices, e.g. `1-3`; empty for no relays.
pub fn subset_label(subset: &[usize]) -> String {
    subset.iter().map(|i| (i + 1).to_string()).join("-")
}

/// Exhaustively search the `C(N, k)` subsets of size `k`; ties go to the
/// lexicographically smallest subset.
pub fn best_subnetwork(
    t: &Topology,
    k: usize,
    rate: f64,
    method: &OutageMethod,
) -> Result<SubsetOutage, OutageError> {
    t.validate()?;
    if k > t.n_relays {
        return Err(OutageError::InvalidK { k, n_relays: t.n_relays });
    }
    let subsets: Vec<Vec<usize>> = (0..t.n_relays).combinations(k).collect();
    let scores: Vec<f64> = match *method {
        OutageMethod::Analytic { rel_tol } => subsets
            .par_iter()
            .map(|s| outage_upper_bound(t, &OutageQuery::new(rate, s.clone()).with_rel_tol(rel_tol)))
            .collect::<Result<_, _>>()?,
        OutageMethod::MonteCarlo { samples, seed } => {
            OutageQuery::new(rate, vec![]).validate(t)?;
            if samples < 100 {
                return Err(OutageError::TooFewSamples(samples));
            }
            let mut r = rng::stream(seed, 0);
            let draws: Vec<ChannelRealization> = (0..samples).map(|_| t.sample(&mut r)).collect();
            subsets
                .par_iter()
                .map(|s| {
                    let n = draws.iter().filter(|c| approx_capacity(c, s) < rate).count();
                    n as f64 / samples as f64
                })
                .collect()
        }
    };
    let mut best = 0;
    for (i, &v) in scores.iter().enumerate() {
        if v < scores[best] {
            best = i;
        }
    }
    Ok(SubsetOutage { subset: subsets[best].clone(), outage: scores[best] })
}

/// How the reference SNR of a sweep point is spread over the transmitters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Every node transmits at the reference SNR.
    PerNode,
    /// The reference is a total budget shared by the source and the `k`
    /// selected relays.
    TotalPower,
}

impl Normalization {
    pub fn factor(&self, snr_linear: f64, k: usize) -> f64 {
        match self {
            Normalization::PerNode => snr_linear,
            Normalization::TotalPower => snr_linear / (k as f64 + 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub snr_db: f64,
    pub k: usize,
    pub subset: Vec<usize>,
    pub outage: f64,
}

/// Best-`k` outage over an SNR grid (dB). The template's link SNRs are
/// relative gains that get multiplied by the grid value (after
/// normalization).
pub fn outage_sweep(
    template: &Topology,
    ks: &[usize],
    rate: f64,
    snr_grid_db: &[f64],
    normalization: Normalization,
    method: &OutageMethod,
) -> Result<Vec<SweepRow>, OutageError> {
    template.validate()?;
    let ascending = snr_grid_db.windows(2).all(|w| w[0] < w[1]);
    if snr_grid_db.is_empty() || !ascending || snr_grid_db.iter().any(|x| !x.is_finite()) {
        return Err(OutageError::BadGrid);
    }
    let points: Vec<(f64, usize)> = snr_grid_db
        .iter()
        .flat_map(|&s| ks.iter().map(move |&k| (s, k)))
        .collect();
    points
        .par_iter()
        .map(|&(snr_db, k)| {
            let t = template.scaled(normalization.factor(db_to_linear(snr_db), k));
            let best = best_subnetwork(&t, k, rate, method)?;
            Ok(SweepRow { snr_db, k, subset: best.subset, outage: best.outage })
        })
        .collect()
}

/// Smallest reference SNR (dB, within `tol_db`) at which the best-`k` outage
/// reaches `target`, found by bisection on `[lo_db, hi_db]`. `None` if the
/// target is not met at `hi_db`.
#[allow(clippy::too_many_arguments)]
pub fn required_snr_db(
    template: &Topology,
    k: usize,
    rate: f64,
    target: f64,
    normalization: Normalization,
    method: &OutageMethod,
    (mut lo_db, mut hi_db): (f64, f64),
    tol_db: f64,
) -> Result<Option<f64>, OutageError> {
    let outage_at = |db: f64| -> Result<f64, OutageError> {
        let t = template.scaled(normalization.factor(db_to_linear(db), k));
        Ok(best_subnetwork(&t, k, rate, method)?.outage)
    };
    if outage_at(hi_db)? > target {
        return Ok(None);
    }
    if outage_at(lo_db)? <= target {
        return Ok(Some(lo_db));
    }
    while hi_db - lo_db > tol_db {
        let mid = 0.5 * (lo_db + hi_db);
        if outage_at(mid)? <= target {
            hi_db = mid;
        } else {
            lo_db = mid;
        }
    }
    Ok(Some(hi_db))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn realization(h_sd2: f64, h2: Vec<f64>, g2: Vec<f64>) -> ChannelRealization {
        ChannelRealization { h_sd2, h2, g2 }
    }

    #[test]
    fn cut_value_examples() {
        let c = realization(3.0, vec![7.0, 0.0], vec![0.0, 1.0]);
        assert_eq!(cut_value(&c, &Cut::new(vec![0]), &[0, 1]).unwrap(), 4.0);
        let c = realization(1.0, vec![0.0], vec![3.0]);
        assert_eq!(cut_value(&c, &Cut::new(vec![]), &[0]).unwrap(), 2.0);
        let c = ChannelRealization::zeros(2);
        assert_eq!(cut_value(&c, &Cut::new(vec![1]), &[0, 1]).unwrap(), 0.0);
    }

    #[test]
    fn cut_outside_subset_rejected() {
        let c = ChannelRealization::zeros(3);
        assert_eq!(
            cut_value(&c, &Cut::new(vec![2]), &[0, 1]),
            Err(OutageError::IndexOutOfSubset { index: 2 })
        );
    }

    #[test]
    fn approx_capacity_examples() {
        let c = realization(3.0, vec![1.0, 0.0], vec![15.0, 0.0]);
        assert_eq!(approx_capacity(&c, &[]), 2.0);
        // one relay: max(C_sd, min(C_sr, C_rd))
        let c = realization(0.5, vec![7.0], vec![3.0]);
        assert_eq!(approx_capacity(&c, &[0]), link_capacity(0.5).max(2.0));
        // null relay
        let c = realization(0.5, vec![7.0, 0.0], vec![3.0, 0.0]);
        assert_eq!(approx_capacity(&c, &[0, 1]), approx_capacity(&c, &[0]));
    }

    #[test]
    fn direct_outage_values() {
        assert!((direct_outage(1.0, 1.0) - (1.0 - (-1f64).exp())).abs() < 1e-15);
        assert!((direct_outage(1.0, 1.0) - 0.632121).abs() < 1e-6);
        assert!((direct_outage(0.01, 1.0) - 0.009950166).abs() < 1e-9);
        assert!(direct_outage(3.0, 1e-12) < 1e-11);
        assert_eq!(direct_outage(3.0, 0.0), 0.0);
    }

    #[test]
    fn degenerate_cuts_use_closed_forms() {
        let t = Topology::symmetric("s", 1, 1.0);
        let q = OutageQuery::new(1.0, vec![0]);
        let expect = 1.0 - (-1f64).exp();
        let empty = cut_outage_analytic(&t, &q, &Cut::new(vec![])).unwrap();
        let full = cut_outage_analytic(&t, &q, &Cut::new(vec![0])).unwrap();
        assert!((empty - expect).abs() < 1e-15);
        assert!((full - expect).abs() < 1e-15);
    }

    #[test]
    fn empty_subset_bound_is_direct_outage() {
        let t = Topology::new("t", 0.3, vec![1.0, 2.0], vec![0.5, 4.0]).unwrap();
        let b = outage_upper_bound(&t, &OutageQuery::new(1.5, vec![])).unwrap();
        assert_eq!(b, direct_outage(0.3, 1.5));
    }

    #[test]
    fn small_rate_gives_small_outage() {
        let t = Topology::symmetric("s", 2, 1.0);
        let q = OutageQuery::new(1e-9, vec![0, 1]);
        assert!(cut_outage_analytic(&t, &q, &Cut::new(vec![0])).unwrap() < 1e-12);
        assert!(outage_upper_bound(&t, &q).unwrap() < 1e-15);
    }

    #[test]
    fn monte_carlo_zero_rate_and_scaling() {
        let t = Topology::symmetric("s", 2, 1.0);
        let mut r = stream(3, 0);
        let zero = outage_monte_carlo(&t, &OutageQuery::new(0.0, vec![0, 1]).with_samples(1000), &mut r).unwrap();
        assert_eq!(zero.estimate, 0.0);
        let a = mc_estimate(300, 1000);
        let b = mc_estimate(600, 2000);
        assert!((a.std_error / b.std_error - 2f64.sqrt()).abs() < 1e-12);
        assert!(outage_monte_carlo(&t, &OutageQuery::new(1.0, vec![0]).with_samples(10), &mut r).is_err());
    }

    #[test]
    fn best_subnetwork_symmetric_and_empty() {
        let t = Topology::symmetric("s", 4, 5.0);
        let m = OutageMethod::analytic();
        assert_eq!(best_subnetwork(&t, 1, 1.0, &m).unwrap().subset, vec![0]);
        assert_eq!(best_subnetwork(&t, 2, 1.0, &m).unwrap().subset, vec![0, 1]);
        let none = best_subnetwork(&t, 0, 1.0, &m).unwrap();
        assert!(none.subset.is_empty());
        assert_eq!(none.outage, direct_outage(t.lambda_sd, 1.0));
        assert!(matches!(best_subnetwork(&t, 5, 1.0, &m), Err(OutageError::InvalidK { .. })));
    }

    #[test]
    fn sweep_rejects_bad_grid() {
        let t = Topology::symmetric("s", 2, 1.0);
        let m = OutageMethod::analytic();
        for grid in [vec![], vec![5.0, 0.0]] {
            assert_eq!(
                outage_sweep(&t, &[1], 1.0, &grid, Normalization::PerNode, &m),
                Err(OutageError::BadGrid)
            );
        }
    }

    #[test]
    fn subset_labels_are_one_based() {
        assert_eq!(subset_label(&[0, 2]), "1-3");
        assert_eq!(subset_label(&[]), "");
    }
}
