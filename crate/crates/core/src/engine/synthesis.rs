use std::collections::BTreeSet;

use super::{
    LearningCurve, LoopConfig, LoopRun, LoopState, Oracle, GMM, LABEL, PROPOSE, RENDER, SCORE,
};
use crate::acquisition::{euclidean, rank_uncertainty};
use crate::dataset::{DataPool, Origin};
use crate::error::{Error, Result};
use crate::rng;
use crate::synth::{fit_gmm, sample_gmm, twin_label, Scenario, TwinWorld};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthesisConfig {
    /// Proposals drawn from the density model per iteration.
    pub candidates: usize,
    pub gmm_components: usize,
    pub em_iters: usize,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig {
            candidates: 256,
            gmm_components: 4,
            em_iters: 50,
        }
    }
}

/// Who answers synthesized queries.
pub enum SynthesisSource<'a> {
    /// The twin world renders each proposal as a full scenario and labels it.
    Twin(&'a TwinWorld),
    /// No twin: proposals snap to the nearest unlabeled pool sample, which the oracle labels.
    Snap(&'a mut dyn Oracle),
}

/// Membership query synthesis.
///
/// Each iteration fits a Gaussian mixture to the current (normalized) pool features,
/// draws `candidates` proposals, keeps the `batch_size` with the highest epistemic
/// std, has them labeled, refits, and records a row. With a twin every synthesized
/// sample costs one collection plus one annotation. `probe` (raw features) fixes the
/// points over which mean epistemic std is reported; the test set is used otherwise.
pub fn run_synthesis_loop(
    cfg: &LoopConfig,
    synth: &SynthesisConfig,
    pool: DataPool,
    mut source: SynthesisSource<'_>,
    rng_seed: u64,
    probe: Option<&[Vec<f64>]>,
) -> Result<LoopRun> {
    if synth.candidates == 0 || synth.gmm_components == 0 {
        return Err(Error::InvalidArgument(
            "synthesis needs positive candidate and component counts".into(),
        ));
    }
    let mut state = LoopState::new(cfg, pool, rng_seed, probe)?;
    let normalizer = state.pool.normalizer().expect("fitted by LoopState").clone();
    let mut curve = LearningCurve::default();
    curve.push(state.row(0)?);
    let mut queried = vec![Vec::new()];
    let mut granted = 0;
    let annotations_before = match &source {
        SynthesisSource::Snap(o) => o.annotations(),
        SynthesisSource::Twin(_) => 0,
    };

    for iteration in 1..=cfg.iterations {
        let unit_cost = match source {
            SynthesisSource::Twin(_) => state.budget.annotation_cost + state.budget.collection_cost,
            SynthesisSource::Snap(_) => state.budget.annotation_cost,
        };
        let affordable = if state.budget.remaining().is_infinite() {
            usize::MAX
        } else {
            ((state.budget.remaining() + 1e-9) / unit_cost).floor() as usize
        };
        let k = cfg.batch_size.min(affordable);
        if k == 0 {
            break;
        }
        if matches!(source, SynthesisSource::Snap(_)) && state.pool.unlabeled().is_empty() {
            break;
        }

        // Density model over everything observable (test excluded).
        let density_ids: Vec<usize> = state
            .pool
            .labeled()
            .iter()
            .chain(state.pool.unlabeled())
            .copied()
            .collect();
        let density_rows: Vec<&[f64]> = density_ids
            .iter()
            .map(|id| state.feats[id].as_slice())
            .collect();
        let components = synth.gmm_components.min(density_rows.len());
        let gmm = fit_gmm(
            &density_rows,
            components,
            synth.em_iters,
            state.seed(iteration, GMM),
        )?;
        let proposals = sample_gmm(&gmm, synth.candidates, state.seed(iteration, PROPOSE));

        // Raw features of each candidate as the oracle would realize it.
        let render_seed = state.seed(iteration, RENDER);
        let realized: Vec<Vec<f64>> = match &source {
            SynthesisSource::Twin(world) => proposals
                .iter()
                .enumerate()
                .map(|(j, z)| {
                    let sc = Scenario::from_features(&normalizer.denormalize(z))?;
                    let mut r = rng::rng(rng::item_seed(render_seed, j as u64));
                    Ok(world.render_features(&sc, &mut r))
                })
                .collect::<Result<_>>()?,
            SynthesisSource::Snap(_) => proposals.iter().map(|z| normalizer.denormalize(z)).collect(),
        };
        let realized_norm: Vec<Vec<f64>> = match &source {
            SynthesisSource::Twin(_) => realized.iter().map(|f| normalizer.normalize(f)).collect(),
            SynthesisSource::Snap(_) => proposals.clone(),
        };

        let inputs: Vec<(u64, &[f64])> = realized_norm
            .iter()
            .enumerate()
            .map(|(j, x)| (j as u64, x.as_slice()))
            .collect();
        let stds = state
            .learner
            .epistemic_stds(&inputs, cfg.mc_passes, state.seed(iteration, SCORE))?;
        let ranked = rank_uncertainty(&stds.into_iter().enumerate().collect())?;

        let mut new_ids = Vec::with_capacity(k);
        match &mut source {
            SynthesisSource::Twin(world) => {
                let label_seed = state.seed(iteration, LABEL);
                for &j in ranked.iter().take(k) {
                    let label = twin_label(world, &realized[j], rng::item_seed(label_seed, j as u64))?;
                    let cost = state.budget.annotation_cost + state.budget.collection_cost;
                    state.budget.charge(cost)?;
                    let id = state.pool.add_labeled(
                        realized[j].clone(),
                        label,
                        Origin::Synthesized,
                        iteration,
                    )?;
                    new_ids.push(id);
                }
                granted += new_ids.len();
            }
            SynthesisSource::Snap(oracle) => {
                let mut taken = BTreeSet::new();
                for &j in &ranked {
                    if new_ids.len() == k {
                        break;
                    }
                    let target = &realized_norm[j];
                    let nearest = state
                        .pool
                        .unlabeled()
                        .iter()
                        .filter(|id| !taken.contains(*id))
                        .map(|id| (*id, euclidean(&state.feats[id], target)))
                        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
                    let Some((id, _)) = nearest else { break };
                    taken.insert(id);
                    oracle.annotate(&mut state.pool, id, iteration, &mut state.budget)?;
                    new_ids.push(id);
                }
            }
        }
        state.register(&new_ids);
        state.refit(iteration)?;
        state.audit()?;
        curve.push(state.row(iteration)?);
        queried.push(new_ids);
    }

    curve.check_invariants()?;
    if let SynthesisSource::Snap(o) = &source {
        granted = o.annotations() - annotations_before;
    }
    let collected = vec![Vec::new(); queried.len()];
    Ok(state.into_run(curve, queried, collected, granted, 0))
}
