//! Query strategies and the budgeted annotate-and-collect decision.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::dataset::DataPool;
use crate::error::{Error, Result};
use crate::rng;

/// Slack for floating-point cost comparisons.
const COST_EPS: f64 = 1e-9;

/// Abstract cost accounting for annotation and collection.
#[derive(Debug, Clone, PartialEq)]
pub struct Budget {
    pub total: f64,
    pub spent: f64,
    pub annotation_cost: f64,
    pub collection_cost: f64,
}

impl Budget {
    pub fn new(total: f64, annotation_cost: f64, collection_cost: f64) -> Result<Self> {
        if !(total >= 0.0) || !(annotation_cost > 0.0) || !(collection_cost > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "budget needs total >= 0 and positive unit costs (total {total}, annotation {annotation_cost}, collection {collection_cost})"
            )));
        }
        Ok(Budget {
            total,
            spent: 0.0,
            annotation_cost,
            collection_cost,
        })
    }

    pub fn remaining(&self) -> f64 {
        (self.total - self.spent).max(0.0)
    }

    pub fn can_afford(&self, cost: f64) -> bool {
        cost <= self.remaining() + COST_EPS
    }

    /// Number of whole units of `unit_cost` that fit in `available`.
    fn units(available: f64, unit_cost: f64) -> usize {
        if available.is_infinite() {
            return usize::MAX;
        }
        ((available + COST_EPS) / unit_cost).floor().max(0.0) as usize
    }

    pub fn affordable_annotations(&self) -> usize {
        Self::units(self.remaining(), self.annotation_cost)
    }

    pub fn charge(&mut self, cost: f64) -> Result<()> {
        if cost < 0.0 || !self.can_afford(cost) {
            return Err(Error::BudgetExhausted {
                remaining: self.remaining(),
                required: cost,
            });
        }
        self.spent = (self.spent + cost).min(self.total);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    Random,
    Uncertainty,
    Qbc,
    Coreset,
    Hybrid,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Random,
        Strategy::Uncertainty,
        Strategy::Qbc,
        Strategy::Coreset,
        Strategy::Hybrid,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::Uncertainty => "uncertainty",
            Strategy::Qbc => "qbc",
            Strategy::Coreset => "coreset",
            Strategy::Hybrid => "hybrid",
        }
    }

    /// Whether the strategy consumes per-sample uncertainty scores.
    pub fn needs_scores(self) -> bool {
        matches!(self, Strategy::Uncertainty | Strategy::Qbc | Strategy::Hybrid)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| {
                format!("unknown strategy `{s}` (expected random, uncertainty, qbc, coreset or hybrid)")
            })
    }
}

/// Ball in normalized feature space where new samples should be collected.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub centroid: Vec<f64>,
    pub radius: f64,
}

impl Region {
    /// Centroid of `points` and the largest distance from it.
    pub fn enclosing(points: &[&[f64]]) -> Option<Self> {
        let first = points.first()?;
        let n = points.len() as f64;
        let mut centroid = vec![0.0; first.len()];
        for p in points {
            for (c, v) in centroid.iter_mut().zip(p.iter()) {
                *c += v / n;
            }
        }
        let radius = points
            .iter()
            .map(|p| euclidean(p, &centroid))
            .fold(0.0, f64::max);
        Some(Region { centroid, radius })
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        euclidean(x, &self.centroid) <= self.radius
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollectPolicy {
    pub enabled: bool,
    pub collect_fraction: f64,
}

impl Default for CollectPolicy {
    fn default() -> Self {
        CollectPolicy {
            enabled: false,
            collect_fraction: 0.5,
        }
    }
}

/// What to annotate, what to collect, and what it costs.
#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionDecision {
    pub annotate_ids: Vec<usize>,
    pub collect_count: usize,
    pub collect_region: Option<Region>,
    pub cost: f64,
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Ids by descending score, ties by ascending id.
pub fn rank_uncertainty(scores: &BTreeMap<usize, f64>) -> Result<Vec<usize>> {
    if scores.is_empty() {
        return Err(Error::Empty("score map"));
    }
    if let Some((id, s)) = scores.iter().find(|(_, s)| !s.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "non-finite score {s} for id {id}"
        )));
    }
    let mut ranked: Vec<(usize, f64)> = scores.iter().map(|(&id, &s)| (id, s)).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(ranked.into_iter().map(|(id, _)| id).collect())
}

/// Distance from each candidate to its nearest point in `anchors` (infinite if none).
pub fn nearest_distances(
    anchors: &[&[f64]],
    candidates: &BTreeMap<usize, Vec<f64>>,
) -> BTreeMap<usize, f64> {
    let entries: Vec<(&usize, &Vec<f64>)> = candidates.iter().collect();
    entries
        .par_iter()
        .map(|(&id, x)| {
            let d = anchors
                .iter()
                .map(|a| euclidean(x, a))
                .fold(f64::INFINITY, f64::min);
            (id, d)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

/// Greedy k-center selection against the labeled set; returns ids in selection order.
pub fn select_core_set(
    labeled: &[&[f64]],
    candidates: &BTreeMap<usize, Vec<f64>>,
    k: usize,
) -> Result<Vec<usize>> {
    if candidates.is_empty() {
        return Err(Error::Empty("candidate set"));
    }
    if k > candidates.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds {} candidates",
            candidates.len()
        )));
    }
    let ids: Vec<usize> = candidates.keys().copied().collect();
    let mut min_dist: Vec<f64> = nearest_distances(labeled, candidates)
        .into_values()
        .collect();
    let mut taken = vec![false; ids.len()];
    let mut selected = Vec::with_capacity(k);
    for _ in 0..k {
        // ids are ascending, so a strict `>` keeps the smallest id on ties.
        let mut best: Option<usize> = None;
        for i in 0..ids.len() {
            if taken[i] {
                continue;
            }
            if best.is_none_or(|b| min_dist[i] > min_dist[b]) {
                best = Some(i);
            }
        }
        let b = best.expect("k <= candidate count");
        taken[b] = true;
        selected.push(ids[b]);
        let center = &candidates[&ids[b]];
        for i in 0..ids.len() {
            if !taken[i] {
                let d = euclidean(&candidates[&ids[i]], center);
                if d < min_dist[i] {
                    min_dist[i] = d;
                }
            }
        }
    }
    Ok(selected)
}

/// `uncertainty^beta * diversity^(1 - beta)`.
pub fn hybrid_score(uncertainty: f64, diversity: f64, beta: f64) -> f64 {
    uncertainty.powf(beta) * diversity.powf(1.0 - beta)
}

/// Uniform sample of `k` ids without replacement.
pub fn random_select(candidate_ids: &[usize], k: usize, rng_seed: u64) -> Result<Vec<usize>> {
    if k > candidate_ids.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot draw {k} from {} candidates",
            candidate_ids.len()
        )));
    }
    let mut ids = candidate_ids.to_vec();
    ids.sort_unstable();
    let mut r = rng::rng(rng_seed);
    let (chosen, _) = ids.partial_shuffle(&mut r, k);
    Ok(chosen.to_vec())
}

/// Snapshot the acquisition decision is made from.
#[derive(Debug, Clone, Copy)]
pub struct AcquisitionInput<'a> {
    pub pool: &'a DataPool,
    /// Normalized features, keyed by sample id. Must cover the labeled and unlabeled sets.
    pub features: &'a BTreeMap<usize, Vec<f64>>,
    /// Per-sample uncertainty (MC std or committee std) for the unlabeled set.
    pub scores: Option<&'a BTreeMap<usize, f64>>,
    pub hybrid_beta: f64,
    pub rng_seed: u64,
}

impl AcquisitionInput<'_> {
    fn candidates(&self) -> Result<BTreeMap<usize, Vec<f64>>> {
        self.pool
            .unlabeled()
            .iter()
            .map(|id| {
                self.features
                    .get(id)
                    .map(|f| (*id, f.clone()))
                    .ok_or_else(|| {
                        Error::InvalidArgument(format!("no features cached for sample {id}"))
                    })
            })
            .collect()
    }

    fn labeled_features(&self) -> Vec<&[f64]> {
        self.pool
            .labeled()
            .iter()
            .filter_map(|id| self.features.get(id).map(Vec::as_slice))
            .collect()
    }

    fn scores(&self, strategy: Strategy) -> Result<&BTreeMap<usize, f64>> {
        self.scores.ok_or_else(|| {
            Error::InvalidArgument(format!("strategy {strategy} requires uncertainty scores"))
        })
    }
}

/// Picks the next annotation batch (truncated by budget) and, optionally, a collection request.
pub fn decide_acquisition(
    strategy: Strategy,
    input: &AcquisitionInput<'_>,
    batch_size: usize,
    budget: &Budget,
    policy: &CollectPolicy,
) -> Result<AcquisitionDecision> {
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
    }
    let affordable = budget.affordable_annotations();
    if affordable == 0 {
        return Err(Error::BudgetExhausted {
            remaining: budget.remaining(),
            required: budget.annotation_cost,
        });
    }
    let candidates = input.candidates()?;
    if candidates.is_empty() {
        return Err(Error::Empty("unlabeled set"));
    }
    let k = batch_size.min(affordable).min(candidates.len());

    let annotate_ids = match strategy {
        Strategy::Random => {
            let ids: Vec<usize> = candidates.keys().copied().collect();
            random_select(&ids, k, input.rng_seed)?
        }
        Strategy::Uncertainty | Strategy::Qbc => {
            let scores = input.scores(strategy)?;
            let restricted: BTreeMap<usize, f64> = candidates
                .keys()
                .map(|id| {
                    scores.get(id).map(|s| (*id, *s)).ok_or_else(|| {
                        Error::InvalidArgument(format!("missing score for sample {id}"))
                    })
                })
                .collect::<Result<_>>()?;
            let mut ranked = rank_uncertainty(&restricted)?;
            ranked.truncate(k);
            ranked
        }
        Strategy::Coreset => select_core_set(&input.labeled_features(), &candidates, k)?,
        Strategy::Hybrid => {
            let scores = input.scores(strategy)?;
            let diversity = nearest_distances(&input.labeled_features(), &candidates);
            let combined: BTreeMap<usize, f64> = diversity
                .iter()
                .map(|(id, d)| {
                    let u = scores.get(id).copied().ok_or_else(|| {
                        Error::InvalidArgument(format!("missing score for sample {id}"))
                    })?;
                    // No labeled anchors: fall back to uncertainty alone.
                    let d = if d.is_finite() { *d } else { 1.0 };
                    Ok((*id, hybrid_score(u, d, input.hybrid_beta)))
                })
                .collect::<Result<_>>()?;
            let mut ranked = rank_uncertainty(&combined)?;
            ranked.truncate(k);
            ranked
        }
    };

    let annotation_cost = annotate_ids.len() as f64 * budget.annotation_cost;
    let (collect_count, collect_region) = if policy.enabled {
        let wanted = (batch_size as f64 * policy.collect_fraction).floor() as usize;
        let left = budget.remaining() - annotation_cost;
        let count = wanted.min(Budget::units(left, budget.collection_cost));
        if count > 0 {
            let points: Vec<&[f64]> = annotate_ids
                .iter()
                .map(|id| candidates[id].as_slice())
                .collect();
            (count, Region::enclosing(&points))
        } else {
            (0, None)
        }
    } else {
        (0, None)
    };

    Ok(AcquisitionDecision {
        cost: annotation_cost + collect_count as f64 * budget.collection_cost,
        annotate_ids,
        collect_count,
        collect_region,
    })
}
