use super::{LearningCurve, LoopConfig, LoopRun, LoopState, Oracle, SELECT};
use crate::acquisition::{decide_acquisition, AcquisitionInput};
use crate::dataset::DataPool;
use crate::error::{Error, Result};

/// Pool-based active learning.
///
/// Iteration 0 trains on the seed set. Every later iteration scores the unlabeled
/// pool, takes an acquisition decision, asks the oracle for labels (and new data if
/// collection is enabled), refits, and records a curve row. The loop ends after
/// `cfg.iterations`, when the budget cannot pay for one more label, or when the
/// unlabeled pool runs dry.
pub fn run_pool_loop(
    cfg: &LoopConfig,
    pool: DataPool,
    oracle: &mut dyn Oracle,
    rng_seed: u64,
) -> Result<LoopRun> {
    let mut state = LoopState::new(cfg, pool, rng_seed, None)?;
    let mut curve = LearningCurve::default();
    curve.push(state.row(0)?);
    let mut queried = vec![Vec::new()];
    let mut collected = vec![Vec::new()];
    let annotations_before = oracle.annotations();
    let collected_before = oracle.collected();

    for iteration in 1..=cfg.iterations {
        if state.pool.unlabeled().is_empty() || state.budget.affordable_annotations() == 0 {
            break;
        }
        let scores = state.unlabeled_scores(iteration)?;
        let input = AcquisitionInput {
            pool: &state.pool,
            features: &state.feats,
            scores: scores.as_ref(),
            hybrid_beta: cfg.hybrid_beta,
            rng_seed: state.seed(iteration, SELECT),
        };
        let decision = match decide_acquisition(
            cfg.strategy,
            &input,
            cfg.batch_size,
            &state.budget,
            &cfg.collect,
        ) {
            Ok(d) => d,
            Err(Error::BudgetExhausted { .. }) | Err(Error::Empty(_)) => break,
            Err(e) => return Err(e),
        };

        for &id in &decision.annotate_ids {
            if state.pool.test().contains(&id) {
                return Err(Error::InvalidArgument(format!(
                    "test sample {id} selected for annotation"
                )));
            }
            oracle.annotate(&mut state.pool, id, iteration, &mut state.budget)?;
        }
        let new_ids = match &decision.collect_region {
            Some(region) if decision.collect_count > 0 => oracle.collect(
                &mut state.pool,
                region,
                decision.collect_count,
                iteration,
                &mut state.budget,
            )?,
            _ => Vec::new(),
        };
        state.register(&new_ids);

        state.refit(iteration)?;
        state.audit()?;
        curve.push(state.row(iteration)?);
        queried.push(decision.annotate_ids);
        collected.push(new_ids);
    }

    curve.check_invariants()?;
    let granted = oracle.annotations() - annotations_before;
    let gathered = oracle.collected() - collected_before;
    Ok(state.into_run(curve, queried, collected, granted, gathered))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acquisition::Strategy;
    use crate::dataset::{split_pool, Sample};
    use crate::engine::PoolOracle;

    fn small_problem() -> Vec<Sample> {
        (0..120)
            .map(|i| {
                let x = i as f64 / 120.0;
                let z = ((i * 7) % 13) as f64 / 13.0;
                Sample::new(i, vec![x, z], Some(100.0 + 50.0 * x + 20.0 * z))
            })
            .collect()
    }

    fn quick(strategy: Strategy) -> LoopConfig {
        LoopConfig {
            hidden_layers: vec![8],
            initial_epochs: 20,
            finetune_epochs: 5,
            train_batch_size: 16,
            mc_passes: 8,
            strategy,
            ..LoopConfig::default()
        }
    }

    #[test]
    fn labeled_count_grows_by_batch_per_iteration() {
        let (pool, hidden) = split_pool(small_problem(), 0.2, 0.2, 1).unwrap();
        let seed_size = pool.labeled().len();
        let mut oracle = PoolOracle::new(hidden);
        let run = run_pool_loop(&quick(Strategy::Uncertainty), pool, &mut oracle, 3).unwrap();
        assert_eq!(run.curve.rows[0].labeled_count, seed_size);
        assert_eq!(run.curve.rows.len(), 11);
        assert_eq!(run.curve.last().unwrap().labeled_count, seed_size + 40);
        assert_eq!(run.labels_granted, 40);
        assert_eq!(run.budget.spent, 40.0);
    }

    #[test]
    fn budget_truncates_and_stops() {
        let (pool, hidden) = split_pool(small_problem(), 0.2, 0.2, 1).unwrap();
        let seed_size = pool.labeled().len();
        let cfg = LoopConfig {
            budget_total: 2.0,
            ..quick(Strategy::Random)
        };
        let run = run_pool_loop(&cfg, pool, &mut PoolOracle::new(hidden), 3).unwrap();
        assert_eq!(run.curve.rows.len(), 2);
        assert_eq!(run.curve.rows[1].labeled_count, seed_size + 2);
        assert_eq!(run.queried[1].len(), 2);
        assert_eq!(run.budget.spent, 2.0);
    }

    #[test]
    fn every_strategy_runs_and_is_reproducible() {
        for strategy in Strategy::ALL {
            let run = |seed| {
                let (pool, hidden) = split_pool(small_problem(), 0.2, 0.2, 1).unwrap();
                let cfg = LoopConfig { iterations: 3, ..quick(strategy) };
                run_pool_loop(&cfg, pool, &mut PoolOracle::new(hidden), seed).unwrap()
            };
            let a = run(5);
            let b = run(5);
            assert_eq!(a.curve, b.curve, "{strategy}");
            assert_eq!(a.queried, b.queried, "{strategy}");
            let mut seen = std::collections::BTreeSet::new();
            for ids in &a.queried {
                for id in ids {
                    assert!(seen.insert(*id), "{strategy} re-queried {id}");
                    assert!(!a.pool.test().contains(id));
                }
            }
        }
    }

    #[test]
    fn zero_iterations_gives_baseline_only() {
        let (pool, hidden) = split_pool(small_problem(), 0.2, 0.2, 1).unwrap();
        let cfg = LoopConfig { iterations: 0, ..quick(Strategy::Random) };
        let run = run_pool_loop(&cfg, pool, &mut PoolOracle::new(hidden), 0).unwrap();
        assert_eq!(run.curve.rows.len(), 1);
        assert_eq!(run.curve.rows[0].budget_spent, 0.0);
    }
}
