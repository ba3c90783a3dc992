//! Telemetry samples, CSV ingestion and labeled / unlabeled / test partitions.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng;

/// Where a sample entered the pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Origin {
    Ingested,
    Collected,
    Synthesized,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Ingested => "ingested",
            Origin::Collected => "collected",
            Origin::Synthesized => "synthesized",
        }
    }
}

/// One telemetry record.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: usize,
    pub features: Vec<f64>,
    /// Throughput in Mbps. `None` while the label is hidden behind an oracle.
    pub label: Option<f64>,
    pub origin: Origin,
    pub iteration_acquired: Option<usize>,
}

impl Sample {
    pub fn new(id: usize, features: Vec<f64>, label: Option<f64>) -> Self {
        Sample {
            id,
            features,
            label,
            origin: Origin::Ingested,
            iteration_acquired: None,
        }
    }
}

/// Which columns `load_csv` turns into features.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FeatureColumns {
    /// Every non-target column whose first complete row is numeric (or mapped), in header order.
    Auto,
    Named(Vec<String>),
}

/// Mapping for categorical cells, e.g. `walking=0`, `driving=1`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CategoryMap(HashMap<String, f64>);

impl CategoryMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, code: i64) {
        self.0.insert(name.into(), code as f64);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.get(name).copied()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Parses one `name=integer` pair per line. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> std::result::Result<Self, (usize, String)> {
        let mut map = CategoryMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (name, code) = line
                .split_once('=')
                .ok_or_else(|| (idx + 1, format!("expected `name=integer`, got `{line}`")))?;
            let code: i64 = code
                .trim()
                .parse()
                .map_err(|_| (idx + 1, format!("`{}` is not an integer", code.trim())))?;
            map.insert(name.trim(), code);
        }
        Ok(map)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|(line, message)| Error::Config {
            line,
            message: format!("{}: {message}", path.display()),
        })
    }
}

/// Result of a CSV load: samples plus bookkeeping about what was dropped.
#[derive(Debug, Clone)]
pub struct LoadedCsv {
    pub samples: Vec<Sample>,
    pub feature_names: Vec<String>,
    /// Rows skipped because a selected cell was empty or not finite.
    pub dropped_rows: usize,
}

fn is_missing(cell: &str) -> bool {
    matches!(
        cell.trim(),
        "" | "NA" | "na" | "N/A" | "NaN" | "nan" | "null" | "NULL" | "None"
    )
}

fn parse_cell(cell: &str, categories: &CategoryMap) -> Option<f64> {
    let cell = cell.trim();
    match cell.parse::<f64>() {
        Ok(v) => Some(v),
        Err(_) => categories.get(cell),
    }
}

/// Loads a headered CSV into samples with sequential ids starting at 0.
pub fn load_csv(
    path: &Path,
    target_column: &str,
    feature_columns: &FeatureColumns,
    categories: &CategoryMap,
) -> Result<LoadedCsv> {
    let csv_err = |e: csv::Error| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let header: Vec<String> = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_owned)
        .collect();
    let column_index = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn {
                path: path.to_path_buf(),
                column: name.to_owned(),
            })
    };
    let target_idx = column_index(target_column)?;

    let records: Vec<csv::StringRecord> = reader
        .records()
        .collect::<std::result::Result<_, _>>()
        .map_err(csv_err)?;

    let feature_idx: Vec<usize> = match feature_columns {
        FeatureColumns::Named(names) => names
            .iter()
            .map(|n| column_index(n))
            .collect::<Result<_>>()?,
        FeatureColumns::Auto => {
            // Column types are judged on the first row that has every cell present.
            let probe = records
                .iter()
                .find(|r| r.iter().all(|c| !is_missing(c)));
            (0..header.len())
                .filter(|&i| i != target_idx)
                .filter(|&i| match probe {
                    Some(r) => r.get(i).and_then(|c| parse_cell(c, categories)).is_some(),
                    None => true,
                })
                .collect()
        }
    };
    if feature_idx.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{}: no feature columns selected",
            path.display()
        )));
    }

    let mut samples = Vec::with_capacity(records.len());
    let mut dropped_rows = 0;
    'rows: for (row_idx, record) in records.iter().enumerate() {
        // 1-based data row number, header excluded.
        let row = row_idx + 1;
        let mut values = Vec::with_capacity(feature_idx.len() + 1);
        for &col in feature_idx.iter().chain(std::iter::once(&target_idx)) {
            let cell = record.get(col).unwrap_or("");
            if is_missing(cell) {
                dropped_rows += 1;
                continue 'rows;
            }
            match parse_cell(cell, categories) {
                Some(v) if v.is_finite() => values.push(v),
                Some(_) => {
                    dropped_rows += 1;
                    continue 'rows;
                }
                None => {
                    return Err(Error::NonNumeric {
                        path: path.to_path_buf(),
                        row,
                        column: header[col].clone(),
                        value: cell.to_owned(),
                    })
                }
            }
        }
        let label = values.pop().expect("target value present");
        if label < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "{}: row {row}: negative throughput {label}",
                path.display()
            )));
        }
        samples.push(Sample::new(samples.len(), values, Some(label)));
    }

    Ok(LoadedCsv {
        samples,
        feature_names: feature_idx.iter().map(|&i| header[i].clone()).collect(),
        dropped_rows,
    })
}

/// Per-feature standardisation.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Normalizer {
    pub const MIN_STD: f64 = 1e-8;

    /// Population mean and standard deviation of `rows`, stds clamped at [`Self::MIN_STD`].
    pub fn fit<'a, I>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let rows: Vec<&[f64]> = rows.into_iter().collect();
        let first = rows.first().ok_or(Error::Empty("normalizer fitting set"))?;
        let dim = first.len();
        let n = rows.len() as f64;
        let mut means = vec![0.0; dim];
        for row in &rows {
            if row.len() != dim {
                return Err(Error::Shape {
                    expected: dim,
                    actual: row.len(),
                });
            }
            for (m, v) in means.iter_mut().zip(row.iter()) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n);
        let mut vars = vec![0.0; dim];
        for row in &rows {
            for ((s, v), m) in vars.iter_mut().zip(row.iter()).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        let stds = vars
            .into_iter()
            .map(|s| (s / n).sqrt().max(Self::MIN_STD))
            .collect();
        Ok(Normalizer { means, stds })
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(v, (m, s))| {
                if *s <= Self::MIN_STD {
                    0.0
                } else {
                    (v - m) / s
                }
            })
            .collect()
    }

    pub fn denormalize(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }
}

/// Labels of the unlabeled partition, withheld from the pool at split time.
///
/// Only an oracle can turn these back into labels.
#[derive(Debug, Clone, Default)]
pub struct HiddenLabels(BTreeMap<usize, f64>);

impl HiddenLabels {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub(crate) fn get(&self, id: usize) -> Option<f64> {
        self.0.get(&id).copied()
    }

    pub(crate) fn insert(&mut self, id: usize, label: f64) {
        self.0.insert(id, label);
    }
}

/// Partitioned sample store.
#[derive(Debug, Clone)]
pub struct DataPool {
    samples: BTreeMap<usize, Sample>,
    labeled: BTreeSet<usize>,
    unlabeled: BTreeSet<usize>,
    test: BTreeSet<usize>,
    normalizer: Option<Normalizer>,
    feature_dim: usize,
    /// Never reused, even for withdrawn samples.
    next_id: usize,
}

impl DataPool {
    /// Builds a pool from explicit partitions. Labeled and test samples must carry labels.
    pub fn new(
        samples: Vec<Sample>,
        labeled: BTreeSet<usize>,
        unlabeled: BTreeSet<usize>,
        test: BTreeSet<usize>,
    ) -> Result<Self> {
        let feature_dim = samples
            .first()
            .map(|s| s.features.len())
            .ok_or(Error::Empty("sample list"))?;
        let mut store = BTreeMap::new();
        for s in samples {
            if s.features.len() != feature_dim {
                return Err(Error::Shape {
                    expected: feature_dim,
                    actual: s.features.len(),
                });
            }
            if let Some(l) = s.label {
                if !l.is_finite() || l < 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "sample {} has invalid label {l}",
                        s.id
                    )));
                }
            }
            if store.insert(s.id, s).is_some() {
                return Err(Error::InvalidArgument("duplicate sample id".into()));
            }
        }
        let next_id = store.keys().next_back().map_or(0, |id| id + 1);
        let pool = DataPool {
            next_id,
            samples: store,
            labeled,
            unlabeled,
            test,
            normalizer: None,
            feature_dim,
        };
        pool.check_invariants()?;
        Ok(pool)
    }

    /// Verifies disjointness, membership, and label presence.
    pub fn check_invariants(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        for id in self.labeled.iter().chain(&self.unlabeled).chain(&self.test) {
            if !self.samples.contains_key(id) {
                return bad(format!("partition id {id} missing from store"));
            }
        }
        if !self.labeled.is_disjoint(&self.unlabeled)
            || !self.labeled.is_disjoint(&self.test)
            || !self.unlabeled.is_disjoint(&self.test)
        {
            return bad("partitions overlap".into());
        }
        for id in self.labeled.iter().chain(&self.test) {
            if self.samples[id].label.is_none() {
                return bad(format!("labeled/test sample {id} has no label"));
            }
        }
        Ok(())
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample(&self, id: usize) -> Option<&Sample> {
        self.samples.get(&id)
    }

    pub fn samples(&self) -> impl Iterator<Item = &Sample> {
        self.samples.values()
    }

    pub fn labeled(&self) -> &BTreeSet<usize> {
        &self.labeled
    }

    pub fn unlabeled(&self) -> &BTreeSet<usize> {
        &self.unlabeled
    }

    pub fn test(&self) -> &BTreeSet<usize> {
        &self.test
    }

    pub fn normalizer(&self) -> Option<&Normalizer> {
        self.normalizer.as_ref()
    }

    pub fn set_normalizer(&mut self, normalizer: Normalizer) -> Result<()> {
        if normalizer.dim() != self.feature_dim {
            return Err(Error::Shape {
                expected: self.feature_dim,
                actual: normalizer.dim(),
            });
        }
        self.normalizer = Some(normalizer);
        Ok(())
    }

    fn next_id(&mut self) -> usize {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    /// Moves an unlabeled sample into the labeled set with the revealed label.
    pub fn reveal_label(&mut self, id: usize, label: f64, iteration: usize) -> Result<()> {
        if self.labeled.contains(&id) {
            return Err(Error::AlreadyLabeled(id));
        }
        if !self.unlabeled.contains(&id) {
            return Err(Error::NotUnlabeled(id));
        }
        if !label.is_finite() || label < 0.0 {
            return Err(Error::InvalidArgument(format!("invalid label {label}")));
        }
        let sample = self.samples.get_mut(&id).expect("unlabeled id in store");
        sample.label = Some(label);
        sample.iteration_acquired = Some(iteration);
        self.unlabeled.remove(&id);
        self.labeled.insert(id);
        Ok(())
    }

    /// Appends a newly collected sample to the unlabeled set and returns its id.
    pub fn add_unlabeled(
        &mut self,
        features: Vec<f64>,
        origin: Origin,
        iteration: usize,
    ) -> Result<usize> {
        self.check_dim(&features)?;
        let id = self.next_id();
        self.samples.insert(
            id,
            Sample {
                id,
                features,
                label: None,
                origin,
                iteration_acquired: Some(iteration),
            },
        );
        self.unlabeled.insert(id);
        Ok(id)
    }

    /// Appends a sample whose label is already known (e.g. a synthesized scenario).
    pub fn add_labeled(
        &mut self,
        features: Vec<f64>,
        label: f64,
        origin: Origin,
        iteration: usize,
    ) -> Result<usize> {
        self.check_dim(&features)?;
        if !label.is_finite() || label < 0.0 {
            return Err(Error::InvalidArgument(format!("invalid label {label}")));
        }
        let id = self.next_id();
        self.samples.insert(
            id,
            Sample {
                id,
                features,
                label: Some(label),
                origin,
                iteration_acquired: Some(iteration),
            },
        );
        self.labeled.insert(id);
        Ok(id)
    }

    /// Removes up to `count` unlabeled samples (uniformly, seeded) from the pool entirely.
    ///
    /// The removed samples keep their hidden labels in `hidden`; they form a reserve
    /// that a pool oracle can hand back as newly collected data.
    pub fn withdraw_reserve(&mut self, count: usize, rng_seed: u64) -> Vec<Sample> {
        let mut ids: Vec<usize> = self.unlabeled.iter().copied().collect();
        ids.shuffle(&mut rng::rng(rng_seed));
        ids.truncate(count);
        ids.sort_unstable();
        ids.into_iter()
            .map(|id| {
                self.unlabeled.remove(&id);
                self.samples.remove(&id).expect("unlabeled id in store")
            })
            .collect()
    }

    fn check_dim(&self, features: &[f64]) -> Result<()> {
        if features.len() != self.feature_dim {
            return Err(Error::Shape {
                expected: self.feature_dim,
                actual: features.len(),
            });
        }
        Ok(())
    }

    /// (features, label) pairs of the given ids; ids without labels are skipped.
    pub fn labeled_pairs<'a>(
        &'a self,
        ids: impl IntoIterator<Item = &'a usize>,
    ) -> Vec<(&'a [f64], f64)> {
        ids.into_iter()
            .filter_map(|id| {
                let s = self.samples.get(id)?;
                Some((s.features.as_slice(), s.label?))
            })
            .collect()
    }
}

fn fraction_count(n: usize, fraction: f64) -> usize {
    // Guard against products like 0.29 * 100 = 28.999999999999996.
    (n as f64 * fraction * (1.0 + 1e-12)).floor() as usize
}

/// Shuffles and partitions samples into test / labeled seed / unlabeled.
///
/// Labels of the unlabeled part are stripped from the samples and returned
/// separately so that only an oracle can reveal them.
pub fn split_pool(
    samples: Vec<Sample>,
    test_fraction: f64,
    seed_labeled_fraction: f64,
    rng_seed: u64,
) -> Result<(DataPool, HiddenLabels)> {
    for (name, f) in [
        ("test_fraction", test_fraction),
        ("seed_labeled_fraction", seed_labeled_fraction),
    ] {
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "{name} must be in (0,1), got {f}"
            )));
        }
    }
    if samples.len() < 10 {
        return Err(Error::InvalidArgument(format!(
            "need at least 10 samples to split, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|s| s.label.is_none()) {
        return Err(Error::InvalidArgument(
            "split_pool requires every sample to carry a label".into(),
        ));
    }

    let n = samples.len();
    let mut ids: Vec<usize> = samples.iter().map(|s| s.id).collect();
    ids.shuffle(&mut rng::rng(rng_seed));

    let n_test = fraction_count(n, test_fraction);
    let n_labeled = fraction_count(n - n_test, seed_labeled_fraction);
    let n_unlabeled = n - n_test - n_labeled;
    if n_test == 0 || n_labeled == 0 || n_unlabeled == 0 {
        return Err(Error::InvalidArgument(format!(
            "fractions produce an empty partition (test {n_test}, labeled {n_labeled}, unlabeled {n_unlabeled})"
        )));
    }

    let test: BTreeSet<usize> = ids[..n_test].iter().copied().collect();
    let labeled: BTreeSet<usize> = ids[n_test..n_test + n_labeled].iter().copied().collect();
    let unlabeled: BTreeSet<usize> = ids[n_test + n_labeled..].iter().copied().collect();

    let mut hidden = HiddenLabels::default();
    let samples = samples
        .into_iter()
        .map(|mut s| {
            if unlabeled.contains(&s.id) {
                hidden.insert(s.id, s.label.take().expect("checked above"));
            } else if labeled.contains(&s.id) {
                s.iteration_acquired = Some(0);
            }
            s
        })
        .collect();
    let pool = DataPool::new(samples, labeled, unlabeled, test)?;
    Ok((pool, hidden))
}

/// Fits a normalizer on every labeled and unlabeled feature vector (test excluded).
pub fn fit_normalizer(pool: &DataPool) -> Result<Normalizer> {
    Normalizer::fit(
        pool.labeled
            .iter()
            .chain(&pool.unlabeled)
            .map(|id| pool.samples[id].features.as_slice()),
    )
}
