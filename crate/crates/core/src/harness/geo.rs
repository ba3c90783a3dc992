use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::experiment::write_atomic;
use crate::error::{Error, Result};

pub const GEO_HEADER: &str = "iteration,id,lon,lat,status";

#[derive(Debug, Clone, PartialEq)]
struct Acquired {
    iteration: usize,
    id: usize,
    kind: String,
    lon: f64,
    lat: f64,
}

fn parse_acquired(path: &Path, lon_col: usize, lat_col: usize) -> Result<Vec<Acquired>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let csv_err = |line: usize, m: String| Error::Csv {
        path: path.to_path_buf(),
        message: format!("line {line}: {m}"),
    };
    let mut lines = text.lines();
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| csv_err(1, "empty file".into()))?
        .split(',')
        .collect();
    let features = header.len().saturating_sub(3);
    for col in [lon_col, lat_col] {
        if col >= features {
            return Err(Error::InvalidArgument(format!(
                "feature index {col} out of range: runs have {features} features"
            )));
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != header.len() {
            return Err(csv_err(i + 2, format!("expected {} cells", header.len())));
        }
        let int = |c: &str| c.parse::<usize>().map_err(|_| csv_err(i + 2, format!("bad integer `{c}`")));
        let real = |c: &str| c.parse::<f64>().map_err(|_| csv_err(i + 2, format!("bad number `{c}`")));
        rows.push(Acquired {
            iteration: int(cells[0])?,
            id: int(cells[1])?,
            kind: cells[2].to_string(),
            lon: real(cells[3 + lon_col])?,
            lat: real(cells[3 + lat_col])?,
        });
    }
    Ok(rows)
}

/// Geography rows for one run.
///
/// For every curve iteration k, lists each sample labeled before k as
/// `previously_labeled` (the seed set counts as labeled before iteration 0 is
/// scored, so it appears from k = 0) and each sample queried in k as `new_query`.
fn geography(rows: &[Acquired], iterations: usize) -> String {
    let mut out = String::from(GEO_HEADER);
    out.push('\n');
    let mut labeled: BTreeMap<usize, &Acquired> = rows
        .iter()
        .filter(|r| r.kind == "seed")
        .map(|r| (r.id, r))
        .collect();
    for k in 0..iterations {
        let new: Vec<&Acquired> = rows
            .iter()
            .filter(|r| r.kind == "query" && r.iteration == k)
            .collect();
        for r in labeled.values() {
            let _ = writeln!(out, "{k},{},{},{},previously_labeled", r.id, r.lon, r.lat);
        }
        for r in &new {
            let _ = writeln!(out, "{k},{},{},{},new_query", r.id, r.lon, r.lat);
        }
        labeled.extend(new.into_iter().map(|r| (r.id, r)));
    }
    out
}

/// Writes `geo/<strategy>_seed<N>.csv` for every run under `run_dir`, using the
/// given feature indices as longitude and latitude. Returns the files written.
pub fn export_query_geography(run_dir: &Path, lon_col: usize, lat_col: usize) -> Result<Vec<PathBuf>> {
    let acquired_dir = run_dir.join("acquired");
    let mut stems: Vec<String> = fs::read_dir(&acquired_dir)
        .map_err(|e| Error::io(&acquired_dir, e))?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            name.strip_suffix(".csv").map(str::to_string)
        })
        .collect();
    stems.sort();
    if stems.is_empty() {
        return Err(Error::Empty("acquired run files"));
    }
    let mut written = Vec::with_capacity(stems.len());
    for stem in stems {
        let rows = parse_acquired(&acquired_dir.join(format!("{stem}.csv")), lon_col, lat_col)?;
        let curve_path = run_dir.join("curves").join(format!("{stem}.csv"));
        let iterations = super::experiment::read_curve(&curve_path)?.rows.len();
        let path = run_dir.join("geo").join(format!("{stem}.csv"));
        write_atomic(&path, &geography(&rows, iterations))?;
        written.push(path);
    }
    Ok(written)
}
