use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::config::{DataSource, ExperimentConfig, LoopMode};
use crate::acquisition::Strategy;
use crate::dataset::{load_csv, split_pool, CategoryMap, FeatureColumns, Sample};
use crate::engine::{
    run_pool_loop, run_stream_loop, run_synthesis_loop, sig6, CollectSource, LearningCurve,
    LoopConfig, LoopRun, PoolOracle, SynthesisSource,
};
use crate::error::{Error, Result};
use crate::rng;
use crate::synth::{generate_synthetic_dataset, schema};

/// Published case-study RMSEs (Mbps): baseline, then final after 10 iterations.
pub const REFERENCE_BASELINE: f64 = 389.0;
pub const REFERENCE_ACTIVE_FINAL: f64 = 365.0;
pub const REFERENCE_RANDOM_FINAL: f64 = 385.0;

const ARRIVALS: u64 = 101;
const RESERVE: u64 = 102;
const PROBE: u64 = 103;
const COLLECT: u64 = 104;

pub const SUMMARY_HEADER: &str =
    "row_type,strategy,seed,initial_rmse,final_rmse,rmse_reduction,diff_vs_random";

/// Samples plus their feature names, loaded once per experiment.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub feature_names: Vec<String>,
    pub dropped_rows: usize,
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    match cfg.data_source()? {
        DataSource::Synthetic { samples, seed } => Ok(Dataset {
            samples: generate_synthetic_dataset(&cfg.world, samples, seed),
            feature_names: schema::COLUMNS.iter().map(|c| c.to_string()).collect(),
            dropped_rows: 0,
        }),
        DataSource::Csv {
            path,
            target,
            features,
            category_map,
        } => {
            let columns = features
                .map_or(FeatureColumns::Auto, FeatureColumns::Named);
            let categories = match &category_map {
                Some(p) => CategoryMap::load(p)?,
                None => CategoryMap::new(),
            };
            let loaded = load_csv(&path, &target, &columns, &categories)?;
            Ok(Dataset {
                samples: loaded.samples,
                feature_names: loaded.feature_names,
                dropped_rows: loaded.dropped_rows,
            })
        }
    }
}

/// One finished (strategy, seed) run.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub strategy: Strategy,
    pub seed: u64,
    pub run: LoopRun,
    /// Per-arrival log, stream mode only.
    pub stream_log: Option<String>,
}

impl RunRecord {
    pub fn stem(&self) -> String {
        run_stem(self.strategy, self.seed)
    }

    pub fn initial_rmse(&self) -> f64 {
        self.run.curve.first().map_or(f64::NAN, |r| r.test_rmse)
    }

    pub fn final_rmse(&self) -> f64 {
        self.run.curve.last().map_or(f64::NAN, |r| r.test_rmse)
    }
}

pub fn run_stem(strategy: Strategy, seed: u64) -> String {
    format!("{}_seed{seed}", strategy.as_str())
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub output: PathBuf,
    pub runs: Vec<RunRecord>,
    pub summary: String,
}

/// Runs one (strategy, seed) pair of the experiment.
pub fn run_single(
    cfg: &ExperimentConfig,
    data: &Dataset,
    strategy: Strategy,
    seed: u64,
) -> Result<RunRecord> {
    let loop_cfg = LoopConfig {
        strategy,
        ..cfg.loop_cfg.clone()
    };
    let (mut pool, hidden) = split_pool(
        data.samples.clone(),
        cfg.test_fraction,
        cfg.seed_fraction,
        seed,
    )?;
    let synthetic = cfg.is_synthetic();
    let mut stream_log = None;
    let run = match cfg.mode {
        LoopMode::Pool => {
            let source = if !loop_cfg.collect.enabled {
                CollectSource::None
            } else if synthetic {
                CollectSource::Twin {
                    world: cfg.world.clone(),
                    seed: rng::iteration_seed(seed, 0, COLLECT),
                    oversample: 8,
                }
            } else {
                let n = (pool.unlabeled().len() as f64 * cfg.reserve_fraction).floor() as usize;
                CollectSource::Reserve(
                    pool.withdraw_reserve(n, rng::iteration_seed(seed, 0, RESERVE)),
                )
            };
            let mut oracle = PoolOracle::new(hidden).with_source(source);
            run_pool_loop(&loop_cfg, pool, &mut oracle, seed)?
        }
        LoopMode::Stream => {
            let mut arrivals: Vec<usize> = pool.unlabeled().iter().copied().collect();
            arrivals.shuffle(&mut rng::rng(rng::iteration_seed(seed, 0, ARRIVALS)));
            arrivals.truncate(cfg.stream_arrivals);
            let mut oracle = PoolOracle::new(hidden);
            let out = run_stream_loop(&loop_cfg, pool, &arrivals, &mut oracle, &cfg.stream, seed)?;
            stream_log = Some(out.log_csv());
            out.run
        }
        LoopMode::Synthesis => {
            if synthetic {
                let probe = cfg
                    .world
                    .probe_grid(cfg.probe_size, rng::iteration_seed(seed, 0, PROBE));
                run_synthesis_loop(
                    &loop_cfg,
                    &cfg.synthesis,
                    pool,
                    SynthesisSource::Twin(&cfg.world),
                    seed,
                    Some(&probe),
                )?
            } else {
                let mut oracle = PoolOracle::new(hidden);
                run_synthesis_loop(
                    &loop_cfg,
                    &cfg.synthesis,
                    pool,
                    SynthesisSource::Snap(&mut oracle),
                    seed,
                    None,
                )?
            }
        }
    };
    Ok(RunRecord {
        strategy,
        seed,
        run,
        stream_log,
    })
}

/// `iteration,id,kind,<features>` for every labeled or collected sample of a run.
///
/// `kind` is `seed` for the initial labeled set, `query` for labels acquired in
/// that iteration and `collected` for samples gathered unlabeled.
pub fn acquired_csv(run: &LoopRun, feature_names: &[String]) -> String {
    let mut out = String::from("iteration,id,kind");
    for n in feature_names {
        out.push(',');
        out.push_str(n);
    }
    out.push('\n');
    let queried: BTreeSet<usize> = run.queried.iter().flatten().copied().collect();
    let mut line = |iteration: usize, id: usize, kind: &str| {
        let _ = write!(out, "{iteration},{id},{kind}");
        if let Some(s) = run.pool.sample(id) {
            for v in &s.features {
                let _ = write!(out, ",{v}");
            }
        }
        out.push('\n');
    };
    for &id in run.pool.labeled() {
        if !queried.contains(&id) {
            line(0, id, "seed");
        }
    }
    for (iteration, (q, c)) in run.queried.iter().zip(&run.collected).enumerate() {
        for &id in q {
            line(iteration, id, "query");
        }
        for &id in c {
            line(iteration, id, "collected");
        }
    }
    out
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = if xs.len() < 2 {
        0.0
    } else {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    (mean, std)
}

/// Summary table: one `run` row per (strategy, seed), then `mean` and `std` rows
/// per strategy (sample std across seeds). `diff_vs_random` is the paired
/// final-RMSE difference (strategy minus random) for the same seed, empty when
/// random was not run. With `reference`, the published case-study numbers are
/// appended as `reference` rows.
pub fn summary_csv(runs: &[RunRecord], strategies: &[Strategy], reference: bool) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    let random_final = |seed: u64| {
        runs.iter()
            .find(|r| r.strategy == Strategy::Random && r.seed == seed)
            .map(RunRecord::final_rmse)
    };
    let cell = |v: Option<f64>| v.map_or_else(String::new, sig6);
    for r in runs {
        let _ = writeln!(
            out,
            "run,{},{},{},{},{},{}",
            r.strategy,
            r.seed,
            sig6(r.initial_rmse()),
            sig6(r.final_rmse()),
            sig6(r.initial_rmse() - r.final_rmse()),
            cell(random_final(r.seed).map(|f| r.final_rmse() - f))
        );
    }
    for s in strategies {
        let mine: Vec<&RunRecord> = runs.iter().filter(|r| r.strategy == *s).collect();
        if mine.is_empty() {
            continue;
        }
        let col = |f: &dyn Fn(&RunRecord) -> f64| mean_std(&mine.iter().map(|r| f(r)).collect::<Vec<_>>());
        let init = col(&|r| r.initial_rmse());
        let fin = col(&|r| r.final_rmse());
        let red = col(&|r| r.initial_rmse() - r.final_rmse());
        let diffs: Option<Vec<f64>> = mine
            .iter()
            .map(|r| random_final(r.seed).map(|f| r.final_rmse() - f))
            .collect();
        let diff = diffs.map(|d| mean_std(&d));
        let _ = writeln!(
            out,
            "mean,{s},,{},{},{},{}",
            sig6(init.0),
            sig6(fin.0),
            sig6(red.0),
            cell(diff.map(|d| d.0))
        );
        let _ = writeln!(
            out,
            "std,{s},,{},{},{},{}",
            sig6(init.1),
            sig6(fin.1),
            sig6(red.1),
            cell(diff.map(|d| d.1))
        );
    }
    if reference {
        for (s, fin) in [
            (Strategy::Uncertainty, REFERENCE_ACTIVE_FINAL),
            (Strategy::Random, REFERENCE_RANDOM_FINAL),
        ] {
            let _ = writeln!(
                out,
                "reference,{s},,{},{},{},{}",
                sig6(REFERENCE_BASELINE),
                sig6(fin),
                sig6(REFERENCE_BASELINE - fin),
                sig6(fin - REFERENCE_RANDOM_FINAL)
            );
        }
    }
    out
}

/// Writes `contents` to a temporary sibling and renames it into place.
pub(crate) fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Runs every (strategy, seed) pair and writes under `cfg.output`:
///
/// * `config.resolved` - the echoed configuration,
/// * `curves/<strategy>_seed<N>.csv` - one learning curve per run,
/// * `acquired/<strategy>_seed<N>.csv` - labeled and collected samples per iteration,
/// * `stream/<strategy>_seed<N>.csv` - the per-arrival log (stream mode),
/// * `summary.csv`.
///
/// Runs execute in parallel; each is deterministic on its own, so output bytes
/// depend only on the configuration.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let data = load_dataset(cfg)?;
    fs::create_dir_all(&cfg.output).map_err(|e| Error::io(&cfg.output, e))?;
    write_atomic(&cfg.output.join("config.resolved"), &cfg.to_text())?;

    let pairs: Vec<(Strategy, u64)> = cfg
        .strategies
        .iter()
        .flat_map(|s| cfg.seeds.iter().map(move |seed| (*s, *seed)))
        .collect();
    let runs: Vec<RunRecord> = pairs
        .par_iter()
        .map(|&(s, seed)| {
            let record = run_single(cfg, &data, s, seed).map_err(|e| {
                Error::InvalidArgument(format!("{} seed {seed}: {e}", s.as_str()))
            })?;
            let stem = record.stem();
            write_atomic(
                &cfg.output.join("curves").join(format!("{stem}.csv")),
                &record.run.curve.to_csv(),
            )?;
            write_atomic(
                &cfg.output.join("acquired").join(format!("{stem}.csv")),
                &acquired_csv(&record.run, &data.feature_names),
            )?;
            if let Some(log) = &record.stream_log {
                write_atomic(&cfg.output.join("stream").join(format!("{stem}.csv")), log)?;
            }
            Ok(record)
        })
        .collect::<Result<_>>()?;

    let summary = summary_csv(&runs, &cfg.strategies, cfg.report_reference);
    write_atomic(&cfg.output.join("summary.csv"), &summary)?;
    Ok(ExperimentReport {
        output: cfg.output.clone(),
        runs,
        summary,
    })
}

/// Reads back a curve file written by [`run_experiment`].
pub fn read_curve(path: &Path) -> Result<LearningCurve> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    LearningCurve::from_csv(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(output: &Path) -> ExperimentConfig {
        let mut cfg = ExperimentConfig {
            seeds: vec![1, 2, 3],
            output: output.to_path_buf(),
            ..ExperimentConfig::default()
        };
        cfg.data.synthetic_samples = 200;
        cfg.data.synthetic_seed = 3;
        cfg.loop_cfg.hidden_layers = vec![8];
        cfg.loop_cfg.initial_epochs = 10;
        cfg.loop_cfg.finetune_epochs = 2;
        cfg.loop_cfg.mc_passes = 5;
        cfg.loop_cfg.iterations = 2;
        cfg
    }

    #[test]
    fn two_strategies_three_seeds_make_six_curves_and_a_summary() {
        let dir = tempfile::tempdir().unwrap();
        let report = run_experiment(&tiny(dir.path())).unwrap();
        let curves = fs::read_dir(dir.path().join("curves")).unwrap().count();
        assert_eq!(curves, 6);
        assert!(dir.path().join("summary.csv").is_file());
        assert!(dir.path().join("config.resolved").is_file());
        let run_rows = report.summary.lines().filter(|l| l.starts_with("run,")).count();
        assert_eq!(run_rows, 6);
        for r in &report.runs {
            if r.strategy == Strategy::Random {
                assert!(report.summary.contains(&format!("run,random,{},", r.seed)));
            }
        }
    }

    #[test]
    fn zero_iterations_write_baseline_only() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny(dir.path());
        cfg.loop_cfg.iterations = 0;
        cfg.seeds = vec![5];
        run_experiment(&cfg).unwrap();
        let curve = read_curve(&dir.path().join("curves/uncertainty_seed5.csv")).unwrap();
        assert_eq!(curve.rows.len(), 1);
        assert_eq!(curve.rows[0].iteration, 0);
    }

    #[test]
    fn reference_rows_are_optional() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny(dir.path());
        cfg.seeds = vec![0];
        cfg.loop_cfg.iterations = 1;
        let plain = run_experiment(&cfg).unwrap().summary;
        assert!(!plain.contains("reference"));
        cfg.report_reference = true;
        let with = run_experiment(&cfg).unwrap().summary;
        assert!(with.contains("reference,uncertainty,,389,365,24,-20"));
        assert!(with.contains("reference,random,,389,385,4,0"));
    }

    #[test]
    fn sample_std_uses_n_minus_one() {
        assert_eq!(mean_std(&[1.0, 3.0]), (2.0, 2f64.sqrt()));
        assert_eq!(mean_std(&[4.0]), (4.0, 0.0));
    }
}
