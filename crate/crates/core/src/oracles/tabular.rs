//! Ranking oracle backed by a finite dataset, with local linear extrapolation
//! for points that are not in the table.

use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct TabularOracle {
    rows: DMatrix<f64>,
    rank_value: DVector<f64>,
    // per-feature offset and width, so neighbour search is unit free
    offset: Vec<f64>,
    width: Vec<f64>,
}

impl TabularOracle {
    pub fn new(rows: DMatrix<f64>, rank_value: DVector<f64>) -> Result<Self> {
        let n = rows.nrows();
        if n < 2 {
            return Err(Error::invalid("a tabular oracle needs at least two rows"));
        }
        if rank_value.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                found: rank_value.len(),
            });
        }
        if rows.iter().chain(rank_value.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tabular features or rank values".into()));
        }
        let d = rows.ncols();
        let mut offset = Vec::with_capacity(d);
        let mut width = Vec::with_capacity(d);
        for c in rows.column_iter() {
            let lo = c.min();
            let hi = c.max();
            offset.push(lo);
            width.push(if hi > lo { hi - lo } else { 1.0 });
        }
        Ok(TabularOracle {
            rows,
            rank_value,
            offset,
            width,
        })
    }

    /// Reads a CSV with feature columns `f1..fd` and a `rank_value` column.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let mut feature_cols: Vec<(usize, usize)> = Vec::new();
        let mut rank_col = None;
        for (i, h) in headers.iter().enumerate() {
            if h == "rank_value" {
                rank_col = Some(i);
            } else if let Some(k) = h.strip_prefix('f').and_then(|s| s.parse::<usize>().ok()) {
                feature_cols.push((k, i));
            } else {
                return Err(Error::invalid(format!("unexpected CSV column {h:?}")));
            }
        }
        let rank_col = rank_col.ok_or_else(|| Error::invalid("CSV has no rank_value column"))?;
        feature_cols.sort();
        if feature_cols.is_empty()
            || feature_cols.iter().enumerate().any(|(i, (k, _))| *k != i + 1)
        {
            return Err(Error::invalid("feature columns must be named f1..fd without gaps"));
        }

        let parse = |s: &str, line: usize| {
            s.parse::<f64>()
                .map_err(|_| Error::invalid(format!("line {line}: cannot parse {s:?} as a number")))
        };
        let mut feats = Vec::new();
        let mut values = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            for &(_, i) in &feature_cols {
                feats.push(parse(&rec[i], line + 2)?);
            }
            values.push(parse(&rec[rank_col], line + 2)?);
        }
        let d = feature_cols.len();
        let rows = DMatrix::from_row_slice(values.len(), d, &feats);
        Self::new(rows, DVector::from_vec(values))
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn rows(&self) -> &DMatrix<f64> {
        &self.rows
    }

    pub fn rank_values(&self) -> &DVector<f64> {
        &self.rank_value
    }

    /// Bounding box of the features, as (lower, upper).
    pub fn feature_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let upper = self
            .offset
            .iter()
            .zip(&self.width)
            .map(|(o, w)| o + w)
            .collect();
        (self.offset.clone(), upper)
    }

    fn scaled_dist2(&self, i: usize, x: &[f64]) -> f64 {
        x.iter()
            .enumerate()
            .map(|(j, v)| ((self.rows[(i, j)] - v) / self.width[j]).powi(2))
            .sum()
    }

    /// Rank value at `x` (in feature coordinates). Rows, up to rounding in
    /// the last few bits, are returned verbatim; anything else comes from a
    /// linear fit to the `d + 2` nearest rows.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let n = self.len();
        let d = self.dim();
        let mut order: Vec<(f64, usize)> = (0..n).map(|i| (self.scaled_dist2(i, x), i)).collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        if order[0].0 <= 1e-24 {
            return self.rank_value[order[0].1];
        }
        let k = (d + 2).min(n);
        let mut a = DMatrix::zeros(k, d + 1);
        let mut b = DVector::zeros(k);
        for (r, &(_, i)) in order.iter().take(k).enumerate() {
            a[(r, 0)] = 1.0;
            for j in 0..d {
                a[(r, j + 1)] = (self.rows[(i, j)] - x[j]) / self.width[j];
            }
            b[r] = self.rank_value[i];
        }
        // centred at x, so the intercept is the prediction
        match a.svd(true, true).solve(&b, 1e-10) {
            Ok(coef) => coef[0],
            Err(_) => self.rank_value[order[0].1],
        }
    }
}
