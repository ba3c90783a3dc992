use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::acquisition::Strategy;
use crate::engine::{LoopConfig, StreamPolicy, SynthesisConfig};
use crate::error::{Error, Result};
use crate::neural::Activation;
use crate::synth::TwinWorld;

/// Where the samples come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// Generated by the twin world with its own seed.
    Synthetic { samples: usize, seed: u64 },
    Csv {
        path: PathBuf,
        target: String,
        /// `None` selects every numeric column.
        features: Option<Vec<String>>,
        category_map: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataKind {
    Synthetic,
    Csv,
}

/// Data keys as written in the file; resolved into a [`DataSource`] by
/// [`ExperimentConfig::data_source`].
#[derive(Debug, Clone, PartialEq)]
pub struct DataKeys {
    pub kind: DataKind,
    pub synthetic_samples: usize,
    pub synthetic_seed: u64,
    pub csv_path: Option<PathBuf>,
    pub target_column: String,
    pub feature_columns: Option<Vec<String>>,
    pub category_map: Option<PathBuf>,
}

impl Default for DataKeys {
    fn default() -> Self {
        DataKeys {
            kind: DataKind::Synthetic,
            synthetic_samples: 5000,
            synthetic_seed: 0,
            csv_path: None,
            target_column: "throughput".into(),
            feature_columns: None,
            category_map: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoopMode {
    Pool,
    Stream,
    Synthesis,
}

impl LoopMode {
    pub fn as_str(self) -> &'static str {
        match self {
            LoopMode::Pool => "pool",
            LoopMode::Stream => "stream",
            LoopMode::Synthesis => "synthesis",
        }
    }
}

impl FromStr for LoopMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "pool" => Ok(LoopMode::Pool),
            "stream" => Ok(LoopMode::Stream),
            "synthesis" => Ok(LoopMode::Synthesis),
            other => Err(format!("unknown mode `{other}` (expected pool, stream or synthesis)")),
        }
    }
}

/// A fully resolved experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataKeys,
    pub world: TwinWorld,
    pub test_fraction: f64,
    pub seed_fraction: f64,
    /// Share of the unlabeled pool withheld as collectable data (csv data with collection on).
    pub reserve_fraction: f64,
    pub mode: LoopMode,
    pub strategies: Vec<Strategy>,
    pub seeds: Vec<u64>,
    pub output: PathBuf,
    /// Add the published case-study RMSEs to the summary.
    pub report_reference: bool,
    pub loop_cfg: LoopConfig,
    pub stream: StreamPolicy,
    pub stream_arrivals: usize,
    pub synthesis: SynthesisConfig,
    pub probe_size: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            data: DataKeys::default(),
            world: TwinWorld::default(),
            test_fraction: 0.2,
            seed_fraction: 0.2,
            reserve_fraction: 0.1,
            mode: LoopMode::Pool,
            strategies: vec![Strategy::Uncertainty, Strategy::Random],
            seeds: vec![0, 1, 2],
            output: PathBuf::from("runs"),
            report_reference: false,
            loop_cfg: LoopConfig::default(),
            stream: StreamPolicy::default(),
            stream_arrivals: 1000,
            synthesis: SynthesisConfig::default(),
            probe_size: 200,
        }
    }
}

/// Every recognised key, in echo order.
pub const KEYS: &[&str] = &[
    "data",
    "synthetic_samples",
    "synthetic_seed",
    "csv_path",
    "target_column",
    "feature_columns",
    "category_map",
    "twin_peak_rate",
    "twin_range_scale",
    "twin_noise_std",
    "twin_walking_factor",
    "twin_driving_factor",
    "twin_blockage_attenuation",
    "twin_orientation_loss",
    "twin_driving_probability",
    "test_fraction",
    "seed_fraction",
    "reserve_fraction",
    "mode",
    "strategies",
    "seeds",
    "output",
    "report_reference",
    "batch_size",
    "iterations",
    "mc_passes",
    "committee_size",
    "hybrid_beta",
    "budget_total",
    "annotation_cost",
    "collection_cost",
    "collect",
    "collect_fraction",
    "hidden_layers",
    "dropout_rate",
    "activation",
    "weight_init_scale",
    "learning_rate",
    "adam_beta1",
    "adam_beta2",
    "adam_epsilon",
    "train_batch_size",
    "initial_epochs",
    "finetune_epochs",
    "refit",
    "reset_optimizer",
    "validation_fraction",
    "epistemic_probe_size",
    "stream_quantile",
    "stream_window",
    "stream_max_queries",
    "stream_refit_every",
    "stream_arrivals",
    "synthesis_candidates",
    "gmm_components",
    "em_iters",
    "probe_size",
];

type Parsed<T> = std::result::Result<T, String>;

fn parse<T: FromStr>(v: &str) -> Parsed<T> {
    v.parse::<T>().map_err(|_| format!("malformed value `{v}`"))
}

fn real(v: &str) -> Parsed<f64> {
    let x: f64 = parse(v)?;
    if x.is_nan() {
        return Err(format!("malformed value `{v}`"));
    }
    Ok(x)
}

fn positive_int(v: &str) -> Parsed<usize> {
    let n: i64 = parse(v)?;
    if n < 1 {
        return Err(format!("out of range: {n} (must be >= 1)"));
    }
    Ok(n as usize)
}

fn count(v: &str) -> Parsed<usize> {
    let n: i64 = parse(v)?;
    if n < 0 {
        return Err(format!("out of range: {n} (must be >= 0)"));
    }
    Ok(n as usize)
}

fn open_unit(v: &str) -> Parsed<f64> {
    let x = real(v)?;
    if !(x > 0.0 && x < 1.0) {
        return Err(format!("out of range: {x} (must be in (0,1))"));
    }
    Ok(x)
}

fn closed_unit(v: &str) -> Parsed<f64> {
    let x = real(v)?;
    if !(0.0..=1.0).contains(&x) {
        return Err(format!("out of range: {x} (must be in [0,1])"));
    }
    Ok(x)
}

fn non_negative(v: &str) -> Parsed<f64> {
    let x = real(v)?;
    if x < 0.0 {
        return Err(format!("out of range: {x} (must be >= 0)"));
    }
    Ok(x)
}

fn strictly_positive(v: &str) -> Parsed<f64> {
    let x = real(v)?;
    if !(x > 0.0 && x.is_finite()) {
        return Err(format!("out of range: {x} (must be > 0)"));
    }
    Ok(x)
}

fn boolean(v: &str) -> Parsed<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("malformed value `{v}` (expected true or false)")),
    }
}

fn list<T>(v: &str, item: impl Fn(&str) -> Parsed<T>) -> Parsed<Vec<T>> {
    let items: Vec<T> = v
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(item)
        .collect::<Parsed<_>>()?;
    if items.is_empty() {
        return Err("empty list".into());
    }
    Ok(items)
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    /// The data source the keys describe.
    pub fn data_source(&self) -> Result<DataSource> {
        let d = &self.data;
        match d.kind {
            DataKind::Synthetic => Ok(DataSource::Synthetic {
                samples: d.synthetic_samples,
                seed: d.synthetic_seed,
            }),
            DataKind::Csv => Ok(DataSource::Csv {
                path: d.csv_path.clone().ok_or_else(|| Error::Config {
                    line: 0,
                    message: "data = csv requires csv_path".into(),
                })?,
                target: d.target_column.clone(),
                features: d.feature_columns.clone(),
                category_map: d.category_map.clone(),
            }),
        }
    }

    pub fn is_synthetic(&self) -> bool {
        self.data.kind == DataKind::Synthetic
    }

    /// Applies one `key = value` pair. Relative paths resolve against `base`.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Parsed<()> {
        let existing = |value: &str| -> Parsed<Option<PathBuf>> {
            if value == "none" {
                return Ok(None);
            }
            let p = base.join(value);
            if !p.is_file() {
                return Err(format!("file not found: {}", p.display()));
            }
            Ok(Some(p))
        };
        let lc = &mut self.loop_cfg;
        let d = &mut self.data;
        match key {
            "data" => {
                d.kind = match value {
                    "synthetic" => DataKind::Synthetic,
                    "csv" => DataKind::Csv,
                    other => {
                        return Err(format!("unknown data source `{other}` (expected synthetic or csv)"))
                    }
                }
            }
            "synthetic_samples" => d.synthetic_samples = positive_int(value)?,
            "synthetic_seed" => d.synthetic_seed = parse(value)?,
            "csv_path" => d.csv_path = existing(value)?,
            "target_column" => d.target_column = value.to_string(),
            "feature_columns" => {
                d.feature_columns = if value == "auto" {
                    None
                } else {
                    Some(list(value, |s| Ok(s.to_string()))?)
                }
            }
            "category_map" => d.category_map = existing(value)?,
            "twin_peak_rate" => self.world.peak_rate = strictly_positive(value)?,
            "twin_range_scale" => self.world.range_scale = strictly_positive(value)?,
            "twin_noise_std" => self.world.noise_std = non_negative(value)?,
            "twin_walking_factor" => self.world.walking_factor = non_negative(value)?,
            "twin_driving_factor" => self.world.driving_factor = non_negative(value)?,
            "twin_blockage_attenuation" => {
                let a = closed_unit(value)?;
                self.world.blockages.iter_mut().for_each(|b| b.attenuation = a);
            }
            "twin_orientation_loss" => self.world.orientation_loss = closed_unit(value)?,
            "twin_driving_probability" => self.world.driving_probability = closed_unit(value)?,
            "test_fraction" => self.test_fraction = open_unit(value)?,
            "seed_fraction" => self.seed_fraction = open_unit(value)?,
            "reserve_fraction" => self.reserve_fraction = closed_unit(value)?,
            "mode" => self.mode = value.parse()?,
            "strategies" => self.strategies = list(value, |s| s.parse::<Strategy>().map_err(|e| e.to_string()))?,
            "seeds" => self.seeds = list(value, parse::<u64>)?,
            "output" => self.output = base.join(value),
            "report_reference" => self.report_reference = boolean(value)?,
            "batch_size" => lc.batch_size = positive_int(value)?,
            "iterations" => lc.iterations = count(value)?,
            "mc_passes" => lc.mc_passes = positive_int(value)?,
            "committee_size" => {
                let k = positive_int(value)?;
                if k < 2 {
                    return Err(format!("out of range: {k} (must be >= 2)"));
                }
                lc.committee_size = k;
            }
            "hybrid_beta" => lc.hybrid_beta = closed_unit(value)?,
            "budget_total" => lc.budget_total = non_negative(value)?,
            "annotation_cost" => lc.annotation_cost = strictly_positive(value)?,
            "collection_cost" => lc.collection_cost = strictly_positive(value)?,
            "collect" => lc.collect.enabled = boolean(value)?,
            "collect_fraction" => lc.collect.collect_fraction = closed_unit(value)?,
            "hidden_layers" => lc.hidden_layers = list(value, positive_int)?,
            "dropout_rate" => {
                let p = real(value)?;
                if !(0.0..1.0).contains(&p) {
                    return Err(format!("out of range: {p} (must be in [0,1))"));
                }
                lc.dropout_rate = p;
            }
            "activation" => lc.activation = value.parse::<Activation>().map_err(|e| e.to_string())?,
            "weight_init_scale" => lc.weight_init_scale = strictly_positive(value)?,
            "learning_rate" => lc.adam.lr = strictly_positive(value)?,
            "adam_beta1" => lc.adam.beta1 = closed_unit(value)?,
            "adam_beta2" => lc.adam.beta2 = closed_unit(value)?,
            "adam_epsilon" => lc.adam.eps = strictly_positive(value)?,
            "train_batch_size" => lc.train_batch_size = positive_int(value)?,
            "initial_epochs" => lc.initial_epochs = positive_int(value)?,
            "finetune_epochs" => lc.finetune_epochs = count(value)?,
            "refit" => lc.refit = value.parse()?,
            "reset_optimizer" => lc.reset_optimizer = boolean(value)?,
            "validation_fraction" => {
                let f = real(value)?;
                if !(0.0..1.0).contains(&f) {
                    return Err(format!("out of range: {f} (must be in [0,1))"));
                }
                lc.validation_fraction = f;
            }
            "epistemic_probe_size" => lc.epistemic_probe_size = count(value)?,
            "stream_quantile" => self.stream.uncertainty_threshold_quantile = open_unit(value)?,
            "stream_window" => self.stream.window = positive_int(value)?,
            "stream_max_queries" => self.stream.max_queries = positive_int(value)?,
            "stream_refit_every" => self.stream.refit_every = positive_int(value)?,
            "stream_arrivals" => self.stream_arrivals = positive_int(value)?,
            "synthesis_candidates" => self.synthesis.candidates = positive_int(value)?,
            "gmm_components" => self.synthesis.gmm_components = positive_int(value)?,
            "em_iters" => self.synthesis.em_iters = positive_int(value)?,
            "probe_size" => self.probe_size = positive_int(value)?,
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    /// Cross-key checks that a single line cannot catch.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config { line: 0, message: m });
        self.data_source()?;
        if self.mode != LoopMode::Pool && self.strategies.iter().any(|s| *s != Strategy::Uncertainty) {
            return bad(format!(
                "mode = {} only supports strategies = uncertainty",
                self.mode.as_str()
            ));
        }
        Ok(())
    }

    /// The value of `key` as it would be written in a config file.
    pub fn get(&self, key: &str) -> String {
        let lc = &self.loop_cfg;
        let d = &self.data;
        let path = |p: &Option<PathBuf>| p.as_ref().map_or_else(|| "none".into(), |p| p.display().to_string());
        match key {
            "data" => match d.kind {
                DataKind::Synthetic => "synthetic".into(),
                DataKind::Csv => "csv".into(),
            },
            "synthetic_samples" => d.synthetic_samples.to_string(),
            "synthetic_seed" => d.synthetic_seed.to_string(),
            "csv_path" => path(&d.csv_path),
            "target_column" => d.target_column.clone(),
            "feature_columns" => d
                .feature_columns
                .as_ref()
                .map_or_else(|| "auto".into(), |f| f.join(",")),
            "category_map" => path(&d.category_map),
            "twin_peak_rate" => self.world.peak_rate.to_string(),
            "twin_range_scale" => self.world.range_scale.to_string(),
            "twin_noise_std" => self.world.noise_std.to_string(),
            "twin_walking_factor" => self.world.walking_factor.to_string(),
            "twin_driving_factor" => self.world.driving_factor.to_string(),
            "twin_blockage_attenuation" => self
                .world
                .blockages
                .first()
                .map_or(1.0, |b| b.attenuation)
                .to_string(),
            "twin_orientation_loss" => self.world.orientation_loss.to_string(),
            "twin_driving_probability" => self.world.driving_probability.to_string(),
            "test_fraction" => self.test_fraction.to_string(),
            "seed_fraction" => self.seed_fraction.to_string(),
            "reserve_fraction" => self.reserve_fraction.to_string(),
            "mode" => self.mode.as_str().into(),
            "strategies" => self
                .strategies
                .iter()
                .map(|s| s.as_str())
                .collect::<Vec<_>>()
                .join(","),
            "seeds" => join(&self.seeds),
            "output" => self.output.display().to_string(),
            "report_reference" => self.report_reference.to_string(),
            "batch_size" => lc.batch_size.to_string(),
            "iterations" => lc.iterations.to_string(),
            "mc_passes" => lc.mc_passes.to_string(),
            "committee_size" => lc.committee_size.to_string(),
            "hybrid_beta" => lc.hybrid_beta.to_string(),
            "budget_total" => lc.budget_total.to_string(),
            "annotation_cost" => lc.annotation_cost.to_string(),
            "collection_cost" => lc.collection_cost.to_string(),
            "collect" => lc.collect.enabled.to_string(),
            "collect_fraction" => lc.collect.collect_fraction.to_string(),
            "hidden_layers" => join(&lc.hidden_layers),
            "dropout_rate" => lc.dropout_rate.to_string(),
            "activation" => lc.activation.as_str().into(),
            "weight_init_scale" => lc.weight_init_scale.to_string(),
            "learning_rate" => lc.adam.lr.to_string(),
            "adam_beta1" => lc.adam.beta1.to_string(),
            "adam_beta2" => lc.adam.beta2.to_string(),
            "adam_epsilon" => lc.adam.eps.to_string(),
            "train_batch_size" => lc.train_batch_size.to_string(),
            "initial_epochs" => lc.initial_epochs.to_string(),
            "finetune_epochs" => lc.finetune_epochs.to_string(),
            "refit" => lc.refit.as_str().into(),
            "reset_optimizer" => lc.reset_optimizer.to_string(),
            "validation_fraction" => lc.validation_fraction.to_string(),
            "epistemic_probe_size" => lc.epistemic_probe_size.to_string(),
            "stream_quantile" => self.stream.uncertainty_threshold_quantile.to_string(),
            "stream_window" => self.stream.window.to_string(),
            "stream_max_queries" => self.stream.max_queries.to_string(),
            "stream_refit_every" => self.stream.refit_every.to_string(),
            "stream_arrivals" => self.stream_arrivals.to_string(),
            "synthesis_candidates" => self.synthesis.candidates.to_string(),
            "gmm_components" => self.synthesis.gmm_components.to_string(),
            "em_iters" => self.synthesis.em_iters.to_string(),
            "probe_size" => self.probe_size.to_string(),
            other => panic!("no such key {other}"),
        }
    }

    /// Every key with its resolved value, one `key = value` line each.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# resolved configuration\n");
        for key in KEYS {
            let _ = writeln!(out, "{key} = {}", self.get(key));
        }
        out
    }
}

/// Parses config text. `base` anchors relative paths (usually the config's directory).
pub fn parse_config_str(text: &str, base: &Path) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    let mut seen = std::collections::BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(Error::Config {
                line,
                message: format!("expected `key = value`, got `{content}`"),
            });
        };
        let (key, value) = (key.trim(), value.trim());
        if let Some(prev) = seen.insert(key.to_string(), line) {
            return Err(Error::Config {
                line,
                message: format!("`{key}` already set on line {prev}"),
            });
        }
        cfg.set(key, value, base).map_err(|message| Error::Config {
            line,
            message: format!("{key}: {message}"),
        })?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Reads and parses a config file; relative paths inside resolve against its directory.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config_str(&text, base)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_text(text: &str) -> Result<ExperimentConfig> {
        parse_config_str(text, Path::new(""))
    }

    #[test]
    fn empty_text_gives_defaults() {
        let cfg = parse_text("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        let echo = cfg.to_text();
        for key in KEYS {
            assert!(echo.contains(&format!("\n{key} = ")), "{key}");
        }
    }

    #[test]
    fn echo_parses_back_to_same_config() {
        let cfg = parse_text("batch_size = 7\nhidden_layers = 8, 8\nstrategies = qbc,random\nbudget_total = 12.5").unwrap();
        let again = parse_text(&cfg.to_text()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn batch_size_is_read() {
        let cfg = parse_text("# case study\nbatch_size = 4   # per cycle\n").unwrap();
        assert_eq!(cfg.loop_cfg.batch_size, 4);
    }

    #[test]
    fn errors_name_the_line() {
        let line_of = |text: &str| match parse_text(text) {
            Err(Error::Config { line, .. }) => line,
            other => panic!("{other:?}"),
        };
        assert_eq!(line_of("\n\nbatch_size = -1"), 3);
        assert_eq!(line_of("iterations = 3\nbogus = 1"), 2);
        assert_eq!(line_of("dropout_rate = lots"), 1);
        assert_eq!(line_of("iterations"), 1);
        assert_eq!(line_of("seed_fraction = 1.0"), 1);
        assert_eq!(line_of("strategies = uncertainty,psychic"), 1);
        assert_eq!(line_of("iterations = 1\niterations = 2"), 2);
        assert_eq!(line_of("csv_path = /definitely/not/here.csv"), 1);
    }

    #[test]
    fn csv_source_requires_path() {
        assert!(parse_text("data = csv").is_err());
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("d.csv"), "a,throughput\n1,2\n").unwrap();
        let cfg = parse_config_str("data = csv\ncsv_path = d.csv\nfeature_columns = a", dir.path()).unwrap();
        match cfg.data_source().unwrap() {
            DataSource::Csv { path, features, .. } => {
                assert_eq!(path, dir.path().join("d.csv"));
                assert_eq!(features, Some(vec!["a".to_string()]));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_pool_modes_are_uncertainty_only() {
        assert!(parse_text("mode = stream").is_err());
        assert!(parse_text("mode = stream\nstrategies = uncertainty").is_ok());
    }
}
