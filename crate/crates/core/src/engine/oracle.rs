//! Label and data sources for the loops.

use crate::acquisition::{euclidean, Budget, Region};
use crate::dataset::{DataPool, HiddenLabels, Origin, Sample};
use crate::error::{Error, Result};
use crate::rng;
use crate::synth::{twin_label, TwinWorld};

/// Reveals labels and collects new unlabeled samples, charging the budget once per call.
pub trait Oracle {
    /// Returns the label of an unlabeled sample and moves it into the labeled set.
    fn annotate(
        &mut self,
        pool: &mut DataPool,
        id: usize,
        iteration: usize,
        budget: &mut Budget,
    ) -> Result<f64>;

    /// Adds up to `count` unlabeled samples near `region` (normalized feature space).
    fn collect(
        &mut self,
        pool: &mut DataPool,
        region: &Region,
        count: usize,
        iteration: usize,
        budget: &mut Budget,
    ) -> Result<Vec<usize>>;

    /// Successful annotate calls so far.
    fn annotations(&self) -> usize;

    /// Samples delivered by collect calls so far.
    fn collected(&self) -> usize;
}

/// Where collected samples come from.
#[derive(Debug, Clone)]
pub enum CollectSource {
    /// Nothing can be collected; collect calls return no samples and cost nothing.
    None,
    /// Samples withheld from the pool at construction.
    Reserve(Vec<Sample>),
    /// Fresh scenarios drawn from the twin world; `oversample` candidates per requested sample.
    Twin {
        world: TwinWorld,
        seed: u64,
        oversample: usize,
    },
}

/// Oracle backed by withheld labels, optionally able to collect more data.
#[derive(Debug, Clone)]
pub struct PoolOracle {
    hidden: HiddenLabels,
    source: CollectSource,
    annotations: usize,
    collected: usize,
}

impl PoolOracle {
    pub fn new(hidden: HiddenLabels) -> Self {
        PoolOracle {
            hidden,
            source: CollectSource::None,
            annotations: 0,
            collected: 0,
        }
    }

    pub fn with_source(mut self, source: CollectSource) -> Self {
        // Reserve samples keep their labels hidden here, not in the sample.
        if let CollectSource::Reserve(samples) = &source {
            for s in samples {
                if let Some(l) = s.label {
                    self.hidden.insert(s.id, l);
                }
            }
        }
        self.source = match source {
            CollectSource::Reserve(samples) => CollectSource::Reserve(
                samples
                    .into_iter()
                    .map(|mut s| {
                        s.label = None;
                        s
                    })
                    .collect(),
            ),
            other => other,
        };
        self
    }
}

fn nearest_first(mut cands: Vec<(Vec<f64>, f64)>, count: usize) -> Vec<(Vec<f64>, f64)> {
    // (raw features, distance); stable sort keeps generation order on ties.
    cands.sort_by(|a, b| a.1.total_cmp(&b.1));
    cands.truncate(count);
    cands
}

impl Oracle for PoolOracle {
    fn annotate(
        &mut self,
        pool: &mut DataPool,
        id: usize,
        iteration: usize,
        budget: &mut Budget,
    ) -> Result<f64> {
        if pool.labeled().contains(&id) {
            return Err(Error::AlreadyLabeled(id));
        }
        if !pool.unlabeled().contains(&id) {
            return Err(Error::NotUnlabeled(id));
        }
        let label = self
            .hidden
            .get(id)
            .ok_or_else(|| Error::InvalidArgument(format!("oracle has no label for sample {id}")))?;
        budget.charge(budget.annotation_cost)?;
        pool.reveal_label(id, label, iteration)?;
        self.annotations += 1;
        Ok(label)
    }

    fn collect(
        &mut self,
        pool: &mut DataPool,
        region: &Region,
        count: usize,
        iteration: usize,
        budget: &mut Budget,
    ) -> Result<Vec<usize>> {
        if count == 0 {
            return Ok(Vec::new());
        }
        let normalizer = pool
            .normalizer()
            .cloned()
            .ok_or_else(|| Error::InvalidArgument("collect needs a fitted normalizer".into()))?;
        let dist = |f: &[f64]| euclidean(&normalizer.normalize(f), &region.centroid);

        // (features, label) of what will be delivered.
        let chosen: Vec<(Vec<f64>, f64)> = match &mut self.source {
            CollectSource::None => return Ok(Vec::new()),
            CollectSource::Reserve(reserve) => {
                let mut order: Vec<(usize, f64)> = reserve
                    .iter()
                    .enumerate()
                    .map(|(i, s)| (i, dist(&s.features)))
                    .collect();
                order.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
                let mut picks: Vec<usize> = order.iter().take(count).map(|(i, _)| *i).collect();
                picks.sort_unstable_by(|a, b| b.cmp(a));
                let mut out: Vec<(Vec<f64>, f64)> = picks
                    .into_iter()
                    .map(|i| {
                        let s = reserve.remove(i);
                        let label = self.hidden.get(s.id).expect("reserve label recorded");
                        (s.features, label)
                    })
                    .collect();
                out.reverse();
                out
            }
            CollectSource::Twin {
                world,
                seed,
                oversample,
            } => {
                let base = rng::iteration_seed(*seed, iteration, self.collected as u64);
                let mut r = rng::rng(base);
                let cands: Vec<(Vec<f64>, f64)> = (0..count * (*oversample).max(1))
                    .map(|_| {
                        let sc = world.sample_scenario(&mut r);
                        let f = world.render_features(&sc, &mut r);
                        let d = dist(&f);
                        (f, d)
                    })
                    .collect();
                nearest_first(cands, count)
                    .into_iter()
                    .enumerate()
                    .map(|(i, (f, _))| {
                        let label = twin_label(world, &f, rng::item_seed(base, i as u64))?;
                        Ok((f, label))
                    })
                    .collect::<Result<_>>()?
            }
        };
        if chosen.is_empty() {
            return Ok(Vec::new());
        }
        let cost = chosen.len() as f64 * budget.collection_cost;
        budget.charge(cost)?;
        let mut ids = Vec::with_capacity(chosen.len());
        for (features, label) in chosen {
            let id = pool.add_unlabeled(features, Origin::Collected, iteration)?;
            self.hidden.insert(id, label);
            ids.push(id);
        }
        self.collected += ids.len();
        Ok(ids)
    }

    fn annotations(&self) -> usize {
        self.annotations
    }

    fn collected(&self) -> usize {
        self.collected
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{fit_normalizer, split_pool};
    use crate::synth::generate_synthetic_dataset;

    fn setup() -> (DataPool, PoolOracle) {
        let samples: Vec<Sample> = (0..40)
            .map(|i| Sample::new(i, vec![i as f64, (i % 7) as f64], Some(10.0 + i as f64)))
            .collect();
        let (mut pool, hidden) = split_pool(samples, 0.25, 0.2, 2).unwrap();
        let n = fit_normalizer(&pool).unwrap();
        pool.set_normalizer(n).unwrap();
        (pool, PoolOracle::new(hidden))
    }

    #[test]
    fn annotate_charges_once_and_rejects_relabel() {
        let (mut pool, mut oracle) = setup();
        let mut budget = Budget::new(10.0, 1.0, 0.25).unwrap();
        let id = *pool.unlabeled().iter().next().unwrap();
        let label = oracle.annotate(&mut pool, id, 1, &mut budget).unwrap();
        assert_eq!(label, 10.0 + id as f64);
        assert_eq!(budget.spent, 1.0);
        assert!(matches!(
            oracle.annotate(&mut pool, id, 1, &mut budget),
            Err(Error::AlreadyLabeled(_))
        ));
        let test_id = *pool.test().iter().next().unwrap();
        assert!(oracle.annotate(&mut pool, test_id, 1, &mut budget).is_err());
        assert_eq!(budget.spent, 1.0);
        assert_eq!(oracle.annotations(), 1);
    }

    #[test]
    fn annotate_fails_without_budget() {
        let (mut pool, mut oracle) = setup();
        let mut budget = Budget::new(0.5, 1.0, 0.25).unwrap();
        let id = *pool.unlabeled().iter().next().unwrap();
        assert!(matches!(
            oracle.annotate(&mut pool, id, 1, &mut budget),
            Err(Error::BudgetExhausted { .. })
        ));
        assert!(pool.unlabeled().contains(&id));
    }

    #[test]
    fn reserve_collection_prefers_region() {
        let (mut pool, oracle) = setup();
        let reserve = pool.withdraw_reserve(6, 1);
        let target = pool.normalizer().unwrap().normalize(&reserve[3].features);
        let mut oracle = oracle.with_source(CollectSource::Reserve(reserve.clone()));
        let mut budget = Budget::new(10.0, 1.0, 0.25).unwrap();
        let region = Region { centroid: target, radius: 0.0 };
        let ids = oracle.collect(&mut pool, &region, 1, 2, &mut budget).unwrap();
        assert_eq!(ids.len(), 1);
        assert_eq!(pool.sample(ids[0]).unwrap().features, reserve[3].features);
        assert_eq!(budget.spent, 0.25);
        assert_eq!(oracle.collected(), 1);
        let label = oracle.annotate(&mut pool, ids[0], 2, &mut budget).unwrap();
        assert_eq!(label, 10.0 + reserve[3].id as f64);
    }

    #[test]
    fn empty_source_collects_nothing_for_free() {
        let (mut pool, mut oracle) = setup();
        let mut budget = Budget::new(10.0, 1.0, 0.25).unwrap();
        let region = Region { centroid: vec![0.0, 0.0], radius: 1.0 };
        assert!(oracle.collect(&mut pool, &region, 3, 1, &mut budget).unwrap().is_empty());
        assert_eq!(budget.spent, 0.0);
    }

    #[test]
    fn twin_collection_labels_new_samples() {
        let world = TwinWorld::default();
        let samples = generate_synthetic_dataset(&world, 60, 1);
        let (mut pool, hidden) = split_pool(samples, 0.2, 0.2, 1).unwrap();
        pool.set_normalizer(fit_normalizer(&pool).unwrap()).unwrap();
        let mut oracle = PoolOracle::new(hidden).with_source(CollectSource::Twin {
            world,
            seed: 3,
            oversample: 8,
        });
        let mut budget = Budget::new(10.0, 1.0, 0.25).unwrap();
        let region = Region { centroid: vec![0.0; 19], radius: 1.0 };
        let ids = oracle.collect(&mut pool, &region, 3, 1, &mut budget).unwrap();
        assert_eq!(ids.len(), 3);
        assert_eq!(budget.spent, 0.75);
        for id in ids {
            assert_eq!(pool.sample(id).unwrap().origin, Origin::Collected);
            assert!(oracle.annotate(&mut pool, id, 1, &mut budget).unwrap() >= 0.0);
        }
        pool.check_invariants().unwrap();
    }
}
