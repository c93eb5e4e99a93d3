//! Column-oriented sample store.
//!
//! A [`Dataset`] holds one `f64` column per named variable. Applications
//! declare which columns they need (e.g. `y`, `tau`, `d`, `v`) and which
//! indexed blocks (`u_1..u_k`, `x_1..x_p`). Column order is preserved so
//! CSV output is stable.

use crate::error::{Error, Result};
use indexmap::IndexMap;
use ndarray::{Array1, Array2};
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    n: usize,
    columns: IndexMap<String, Array1<f64>>,
}

impl Dataset {
    pub fn new(n: usize) -> Self {
        Dataset {
            n,
            columns: IndexMap::new(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.keys().map(|s| s.as_str()).collect()
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.columns.contains_key(name)
    }

    /// Inserts a column, replacing any existing column of the same name.
    pub fn insert(&mut self, name: impl Into<String>, values: Array1<f64>) -> Result<()> {
        let name = name.into();
        if values.len() != self.n {
            return Err(Error::Data(format!(
                "column '{}' has {} rows, dataset has {}",
                name,
                values.len(),
                self.n
            )));
        }
        self.columns.insert(name, values);
        Ok(())
    }

    pub fn column(&self, name: &str) -> Result<&Array1<f64>> {
        self.columns
            .get(name)
            .ok_or_else(|| Error::Data(format!("missing column '{name}'")))
    }

    /// Number of columns named `prefix_1 .. prefix_k` (contiguous from 1).
    pub fn block_width(&self, prefix: &str) -> usize {
        let mut k = 0;
        while self.columns.contains_key(&format!("{prefix}_{}", k + 1)) {
            k += 1;
        }
        k
    }

    /// Extracts columns `prefix_1 .. prefix_width` as an n-by-width matrix.
    pub fn block(&self, prefix: &str, width: usize) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((self.n, width));
        for j in 0..width {
            let col = self.column(&format!("{prefix}_{}", j + 1))?;
            out.column_mut(j).assign(col);
        }
        Ok(out)
    }

    /// Keeps only the rows at `indices` (in the given order).
    pub fn select_rows(&self, indices: &[usize]) -> Dataset {
        let mut out = Dataset::new(indices.len());
        for (name, col) in &self.columns {
            let picked = Array1::from_iter(indices.iter().map(|&i| col[i]));
            out.columns.insert(name.clone(), picked);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.columns.values().all(|c| c.iter().all(|v| v.is_finite()))
    }

    /// Writes the dataset as headered CSV. Floats use the shortest
    /// round-trippable representation, so read-back is bit-exact.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        let names: Vec<&str> = self.column_names();
        writeln!(file, "{}", names.join(","))?;
        for i in 0..self.n {
            let mut row = String::new();
            for (j, col) in self.columns.values().enumerate() {
                if j > 0 {
                    row.push(',');
                }
                row.push_str(&format!("{}", col[i]));
            }
            writeln!(file, "{row}")?;
        }
        Ok(())
    }

    /// Reads a headered CSV written by [`Dataset::write_csv`] (or any CSV of
    /// numeric columns).
    pub fn read_csv(path: &Path) -> Result<Dataset> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
        let headers: Vec<String> = reader.headers()?.iter().map(|s| s.to_string()).collect();
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
        for record in reader.records() {
            let record = record?;
            if record.len() != headers.len() {
                return Err(Error::Data(format!(
                    "row has {} fields, header has {}",
                    record.len(),
                    headers.len()
                )));
            }
            for (j, field) in record.iter().enumerate() {
                let v: f64 = field
                    .parse()
                    .map_err(|_| Error::Data(format!("non-numeric field '{field}' in column '{}'", headers[j])))?;
                cols[j].push(v);
            }
        }
        let n = cols.first().map_or(0, |c| c.len());
        let mut out = Dataset::new(n);
        for (name, col) in headers.into_iter().zip(cols) {
            out.insert(name, Array1::from_vec(col))?;
        }
        Ok(out)
    }
}

/// Sums a slice with sequential pairwise summation so the result does not
/// depend on thread count or iteration chunking.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
        }
    }
}

/// Mean via pairwise summation; 0 for an empty slice.
pub fn pairwise_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        pairwise_sum(values) / values.len() as f64
    }
}
