//! Batched fixed-share expert weighting with early reject.

use super::{LearnParams, ModeIndex, RankedModeList, SelectionError};

/// One fixed-share update over the live candidate set.
///
/// First every weight is penalized, `w_i ← w_i e^{-η f_i}`, while the shared
/// pool `P = Σ (1 - (1-α)^{f_i}) w_i` is accumulated. Then each mode keeps
/// `(1-α)^{f_i}` of its weight and receives an equal `1/(n-1)` share of what
/// the *other* modes gave up. The result is not normalized.
pub fn weight_update(weights: &[f64], fers: &[f64], eta: f64, alpha: f64) -> Result<Vec<f64>, SelectionError> {
    let n = weights.len();
    if n < 2 || fers.len() != n {
        return Err(SelectionError::DegenerateSet(n.min(fers.len())));
    }
    let penalized: Vec<f64> = weights.iter().zip(fers).map(|(w, f)| w * (-eta * f).exp()).collect();
    let given_up: Vec<f64> = penalized
        .iter()
        .zip(fers)
        .map(|(w, &f)| (1.0 - (1.0 - alpha).powf(f)) * w)
        .collect();
    let pool: f64 = given_up.iter().sum();
    Ok(penalized
        .iter()
        .zip(&given_up)
        .map(|(w, g)| (w - g) + (pool - g) / (n - 1) as f64)
        .collect())
}

/// State of the candidate set after one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchRecord {
    pub candidates: Vec<ModeIndex>,
    pub fers: Vec<f64>,
    /// Normalized weights, aligned with `candidates`; they sum to 1.
    pub weights: Vec<f64>,
    pub rejected: Vec<ModeIndex>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnOutcome {
    pub ranking: RankedModeList,
    pub batches: usize,
    /// Training frames sent.
    pub frames: usize,
    pub history: Vec<BatchRecord>,
}

/// Rank `candidates` by learning over batches of `params.l` frames per mode.
///
/// `run(mode, l)` transmits `l` frames on `mode` and returns their empirical
/// FER, or `None` once no frames are left; learning then stops and ranks by
/// the weights reached so far.
///
/// Early rejected modes are ranked below all survivors, the earliest
/// rejected last. Ties in weight keep the current candidate order.
pub fn learn<F>(mut run: F, candidates: &[ModeIndex], params: &LearnParams) -> LearnOutcome
where
    F: FnMut(ModeIndex, usize) -> Option<f64>,
{
    let r = candidates.len();
    let mut live: Vec<(ModeIndex, f64)> = candidates.iter().map(|&m| (m, 1.0 / r as f64)).collect();
    let mut rejected: Vec<(ModeIndex, f64)> = Vec::new();
    let mut history = Vec::new();
    let mut batches = 0;
    let mut frames = 0;

    'batches: while live.len() > 1 && batches < params.max_batches {
        let mut fers = Vec::with_capacity(live.len());
        for &(m, _) in &live {
            match run(m, params.l) {
                Some(f) => fers.push(f),
                None => break 'batches,
            }
            frames += params.l;
        }
        let weights: Vec<f64> = live.iter().map(|&(_, w)| w).collect();
        let updated = weight_update(&weights, &fers, params.eta, params.alpha)
            .expect("live set has at least two modes");
        let total: f64 = updated.iter().sum();
        let mut scored: Vec<(ModeIndex, f64)> = live.iter().zip(&updated).map(|(&(m, _), &w)| (m, w / total)).collect();
        let record_modes = scored.iter().map(|&(m, _)| m).collect();
        let record_weights = scored.iter().map(|&(_, w)| w).collect();

        // ascending-weight scan, stable in current order
        scored.sort_by(|a, b| a.1.total_cmp(&b.1));
        let mut newly_rejected = Vec::new();
        live.clear();
        for (m, w) in scored {
            if w > params.epsilon {
                live.push((m, w));
            } else {
                rejected.push((m, w));
                newly_rejected.push(m);
            }
        }
        history.push(BatchRecord {
            candidates: record_modes,
            fers,
            weights: record_weights,
            rejected: newly_rejected,
        });
        batches += 1;
    }

    live.sort_by(|a, b| a.1.total_cmp(&b.1));
    rejected.extend(live);
    rejected.reverse();
    LearnOutcome {
        ranking: RankedModeList {
            order: rejected.iter().map(|&(m, _)| m).collect(),
            weights: rejected.iter().map(|&(_, w)| w).collect(),
        },
        batches,
        frames,
        history,
    }
}
