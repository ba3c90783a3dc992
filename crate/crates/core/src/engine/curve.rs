use std::fmt::Write as _;

use crate::error::{Error, Result};

pub const CURVE_HEADER: &str =
    "iteration,labeled_count,budget_spent,test_rmse,mean_epistemic_std,aleatoric_var";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub iteration: usize,
    pub labeled_count: usize,
    pub budget_spent: f64,
    pub test_rmse: f64,
    pub mean_epistemic_std: f64,
    pub aleatoric_var: f64,
}

/// One row per loop iteration, starting with the seed-trained baseline.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LearningCurve {
    pub rows: Vec<CurveRow>,
}

/// Formats `v` with 6 significant digits, trimming trailing zeros.
pub fn sig6(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let s = format!("{v:.5e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..15).contains(&exp) {
        let rounded: f64 = s.parse().expect("formatted float");
        let decimals = (5 - exp).max(0) as usize;
        let fixed = format!("{rounded:.decimals$}");
        if fixed.contains('.') {
            fixed.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            fixed
        }
    } else {
        let m = mantissa.trim_end_matches('0').trim_end_matches('.');
        format!("{m}e{exp}")
    }
}

impl LearningCurve {
    pub fn push(&mut self, row: CurveRow) {
        self.rows.push(row);
    }

    pub fn last(&self) -> Option<&CurveRow> {
        self.rows.last()
    }

    pub fn first(&self) -> Option<&CurveRow> {
        self.rows.first()
    }

    /// Iterations start at 0 and increase by one; labeled count and spend never decrease.
    pub fn check_invariants(&self) -> Result<()> {
        for (i, w) in self.rows.iter().enumerate() {
            if w.iteration != i {
                return Err(Error::InvalidArgument(format!(
                    "curve row {i} has iteration {}",
                    w.iteration
                )));
            }
        }
        for w in self.rows.windows(2) {
            if w[1].labeled_count < w[0].labeled_count || w[1].budget_spent < w[0].budget_spent {
                return Err(Error::InvalidArgument(format!(
                    "curve decreases at iteration {}",
                    w[1].iteration
                )));
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CURVE_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.iteration,
                r.labeled_count,
                sig6(r.budget_spent),
                sig6(r.test_rmse),
                sig6(r.mean_epistemic_std),
                sig6(r.aleatoric_var)
            );
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |line: usize, m: &str| Error::InvalidArgument(format!("curve line {line}: {m}"));
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(CURVE_HEADER) {
            return Err(bad(1, "unexpected header"));
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != 6 {
                return Err(bad(i + 2, "expected 6 columns"));
            }
            let int = |c: &str| c.parse::<usize>().map_err(|_| bad(i + 2, "bad integer"));
            let real = |c: &str| c.parse::<f64>().map_err(|_| bad(i + 2, "bad number"));
            rows.push(CurveRow {
                iteration: int(cells[0])?,
                labeled_count: int(cells[1])?,
                budget_spent: real(cells[2])?,
                test_rmse: real(cells[3])?,
                mean_epistemic_std: real(cells[4])?,
                aleatoric_var: real(cells[5])?,
            });
        }
        Ok(LearningCurve { rows })
    }
}
