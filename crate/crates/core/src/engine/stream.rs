use std::collections::VecDeque;

use super::{LearningCurve, LoopConfig, LoopRun, LoopState, Oracle, SCORE};
use crate::dataset::DataPool;
use crate::error::{Error, Result};
use crate::rng;

/// Per-arrival query rule for the stream setting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamPolicy {
    /// Query when the score exceeds this quantile of recent scores.
    pub uncertainty_threshold_quantile: f64,
    /// Number of previous arrivals the quantile is computed over.
    pub window: usize,
    pub max_queries: usize,
    /// Fine-tune after this many new labels.
    pub refit_every: usize,
}

impl Default for StreamPolicy {
    fn default() -> Self {
        StreamPolicy {
            uncertainty_threshold_quantile: 0.9,
            window: 100,
            max_queries: 200,
            refit_every: 10,
        }
    }
}

impl StreamPolicy {
    pub fn validate(&self) -> Result<()> {
        let q = self.uncertainty_threshold_quantile;
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "threshold quantile must be in (0,1), got {q}"
            )));
        }
        if self.window == 0 || self.max_queries == 0 || self.refit_every == 0 {
            return Err(Error::InvalidArgument(
                "window, max_queries and refit_every must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One line of the stream decision log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamDecision {
    pub arrival: usize,
    pub id: usize,
    pub score: f64,
    /// `inf` until at least one previous score exists.
    pub threshold: f64,
    pub queried: bool,
}

#[derive(Debug, Clone)]
pub struct StreamRun {
    pub run: LoopRun,
    pub log: Vec<StreamDecision>,
}

impl StreamRun {
    pub fn queries(&self) -> usize {
        self.log.iter().filter(|d| d.queried).count()
    }

    pub fn log_csv(&self) -> String {
        let mut out = String::from("arrival,id,score,threshold,queried\n");
        for d in &self.log {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                d.arrival,
                d.id,
                super::sig6(d.score),
                super::sig6(d.threshold),
                u8::from(d.queried)
            ));
        }
        out
    }
}

/// Linearly interpolated quantile of `values` (type 7); `inf` when empty.
pub fn rolling_quantile(values: &VecDeque<f64>, q: f64) -> f64 {
    if values.is_empty() {
        return f64::INFINITY;
    }
    let mut sorted: Vec<f64> = values.iter().copied().collect();
    sorted.sort_by(f64::total_cmp);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Stream-based selective sampling over `arrivals` (ids of unlabeled pool samples).
///
/// Each arrival is scored by MC-dropout epistemic std and queried when the score
/// beats the rolling quantile of the previous `window` scores, the budget still
/// covers one label, and fewer than `max_queries` were made. The learner is
/// fine-tuned every `refit_every` labels, each refit producing one curve row.
pub fn run_stream_loop(
    cfg: &LoopConfig,
    pool: DataPool,
    arrivals: &[usize],
    oracle: &mut dyn Oracle,
    policy: &StreamPolicy,
    rng_seed: u64,
) -> Result<StreamRun> {
    policy.validate()?;
    if let Some(id) = arrivals.iter().find(|id| !pool.unlabeled().contains(id)) {
        return Err(Error::NotUnlabeled(*id));
    }
    let mut state = LoopState::new(cfg, pool, rng_seed, None)?;
    let mut curve = LearningCurve::default();
    curve.push(state.row(0)?);
    let mut queried = vec![Vec::new()];
    let mut pending: Vec<usize> = Vec::new();
    let mut history: VecDeque<f64> = VecDeque::with_capacity(policy.window);
    let mut log = Vec::with_capacity(arrivals.len());
    let mut queries = 0;
    let annotations_before = oracle.annotations();

    for (arrival, &id) in arrivals.iter().enumerate() {
        let iteration = curve.rows.len();
        let seed = rng::item_seed(state.seed(iteration, SCORE), id as u64);
        let score = state
            .learner
            .mc_predict(&state.feats[&id], cfg.mc_passes, seed)?
            .epistemic_std();
        let threshold = rolling_quantile(&history, policy.uncertainty_threshold_quantile);
        let query = score > threshold
            && queries < policy.max_queries
            && state.budget.affordable_annotations() > 0;
        if query {
            oracle.annotate(&mut state.pool, id, iteration, &mut state.budget)?;
            queries += 1;
            pending.push(id);
            if pending.len() == policy.refit_every {
                state.refit(iteration)?;
                state.audit()?;
                curve.push(state.row(iteration)?);
                queried.push(std::mem::take(&mut pending));
            }
        }
        if history.len() == policy.window {
            history.pop_front();
        }
        history.push_back(score);
        log.push(StreamDecision {
            arrival,
            id,
            score,
            threshold,
            queried: query,
        });
    }
    if !pending.is_empty() {
        let iteration = curve.rows.len();
        state.refit(iteration)?;
        state.audit()?;
        curve.push(state.row(iteration)?);
        queried.push(pending);
    }

    curve.check_invariants()?;
    let granted = oracle.annotations() - annotations_before;
    let collected = vec![Vec::new(); queried.len()];
    Ok(StreamRun {
        run: state.into_run(curve, queried, collected, granted, 0),
        log,
    })
}
