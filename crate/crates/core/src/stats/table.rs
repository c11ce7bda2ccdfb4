use std::collections::HashSet;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Regression input: one row per reading-time observation.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorTable {
    response: Vec<f64>,
    groups: Vec<String>,
    columns: Vec<(String, Vec<f64>)>,
}

impl PredictorTable {
    pub fn new(response: Vec<f64>, groups: Vec<String>) -> Result<Self> {
        if response.len() != groups.len() {
            return Err(Error::Design(format!(
                "{} responses but {} group labels",
                response.len(),
                groups.len()
            )));
        }
        if let Some(i) = response.iter().position(|v| !v.is_finite()) {
            return Err(Error::Design(format!("non-finite response at row {i}")));
        }
        Ok(Self {
            response,
            groups,
            columns: Vec::new(),
        })
    }

    pub fn add_column(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        let name = name.into();
        if self.columns.iter().any(|(n, _)| *n == name) {
            return Err(Error::Design(format!("duplicate column {name:?}")));
        }
        if values.len() != self.response.len() {
            return Err(Error::Design(format!(
                "column {name:?} has {} values for {} rows",
                values.len(),
                self.response.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Design(format!("column {name:?} has a missing value at row {i}")));
        }
        self.columns.push((name, values));
        Ok(())
    }

    /// Replaces a column, or adds it when absent.
    pub fn set_column(&mut self, name: &str, values: Vec<f64>) -> Result<()> {
        if let Some(pos) = self.columns.iter().position(|(n, _)| n == name) {
            let old = self.columns.remove(pos);
            if let Err(e) = self.add_column(name, values) {
                self.columns.insert(pos, old);
                return Err(e);
            }
            let last = self.columns.pop().expect("just added");
            self.columns.insert(pos, last);
            Ok(())
        } else {
            self.add_column(name, values)
        }
    }

    pub fn n_rows(&self) -> usize {
        self.response.len()
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    pub fn groups(&self) -> &[String] {
        &self.groups
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|(n, _)| n.as_str())
    }

    fn require(&self, name: &str) -> Result<&[f64]> {
        self.column(name)
            .ok_or_else(|| Error::Design(format!("no column named {name:?}")))
    }

    /// Keeps only the listed rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            response: rows.iter().map(|&i| self.response[i]).collect(),
            groups: rows.iter().map(|&i| self.groups[i].clone()).collect(),
            columns: self
                .columns
                .iter()
                .map(|(n, v)| (n.clone(), rows.iter().map(|&i| v[i]).collect()))
                .collect(),
        }
    }

    /// Intercept plus the named columns, for the given rows.
    pub fn design(&self, columns: &[&str], rows: &[usize]) -> Result<DMatrix<f64>> {
        let cols = columns
            .iter()
            .map(|c| self.require(c))
            .collect::<Result<Vec<_>>>()?;
        Ok(DMatrix::from_fn(rows.len(), cols.len() + 1, |r, c| {
            if c == 0 {
                1.0
            } else {
                cols[c - 1][rows[r]]
            }
        }))
    }

    /// Splits `candidates` into columns that add rank to intercept + `base`
    /// and columns that are (numerically) linear combinations of earlier ones.
    pub fn independent_columns(&self, base: &[&str], candidates: &[&str]) -> Result<(Vec<String>, Vec<String>)> {
        let n = self.n_rows();
        let mut basis: Vec<Vec<f64>> = vec![vec![1.0 / (n as f64).sqrt(); n]];
        let mut seen = HashSet::new();
        let mut kept = Vec::new();
        let mut dropped = Vec::new();
        for (i, &name) in base.iter().chain(candidates).enumerate() {
            let col = self.require(name)?;
            let is_candidate = i >= base.len();
            if !seen.insert(name) {
                if is_candidate {
                    dropped.push(name.to_string());
                }
                continue;
            }
            let mut v = col.to_vec();
            let norm0 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            // Two passes of modified Gram-Schmidt for stability.
            for _ in 0..2 {
                for q in &basis {
                    let dot: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
                    v.iter_mut().zip(q).for_each(|(a, b)| *a -= dot * b);
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm0 == 0.0 || norm <= 1e-9 * norm0 {
                if is_candidate {
                    dropped.push(name.to_string());
                } else {
                    return Err(Error::Design(format!("baseline column {name:?} is collinear")));
                }
                continue;
            }
            v.iter_mut().for_each(|a| *a /= norm);
            basis.push(v);
            if is_candidate {
                kept.push(name.to_string());
            }
        }
        Ok((kept, dropped))
    }
}
