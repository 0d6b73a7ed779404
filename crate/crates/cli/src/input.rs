//! Numeric CSV input: header row required, decimal point only.

use std::path::Path;

use cvplan::nalgebra::DMatrix;

use crate::CliError;

pub struct Table {
    pub headers: Vec<String>,
    /// Column-major values.
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Table, CliError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
        let headers: Vec<String> = rdr
            .headers()
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?
            .iter()
            .map(str::to_string)
            .collect();
        if headers.is_empty() {
            return Err(CliError::usage(format!("{}: no columns", path.display())));
        }
        let mut columns = vec![Vec::new(); headers.len()];
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
            for (j, field) in rec.iter().enumerate() {
                let v: f64 = field.parse().map_err(|_| {
                    CliError::usage(format!(
                        "{}: row {}, column '{}': '{field}' is not a number",
                        path.display(),
                        line + 2,
                        headers[j]
                    ))
                })?;
                if !v.is_finite() {
                    return Err(CliError::usage(format!(
                        "{}: row {}, column '{}' is not finite",
                        path.display(),
                        line + 2,
                        headers[j]
                    )));
                }
                columns[j].push(v);
            }
        }
        Ok(Table { headers, columns })
    }

    pub fn rows(&self) -> usize {
        self.columns[0].len()
    }

    fn index(&self, name: &str) -> Result<usize, CliError> {
        self.headers.iter().position(|h| h == name).ok_or_else(|| {
            CliError::usage(format!(
                "no column '{name}' (have: {})",
                self.headers.join(", ")
            ))
        })
    }

    /// The named column, or the only column when `name` is absent.
    pub fn column(&self, name: Option<&str>) -> Result<Vec<f64>, CliError> {
        match name {
            Some(n) => Ok(self.columns[self.index(n)?].clone()),
            None if self.headers.len() == 1 => Ok(self.columns[0].clone()),
            None => Err(CliError::usage(format!(
                "several columns present, pick one with --column ({})",
                self.headers.join(", ")
            ))),
        }
    }

    /// Response vector and design matrix of the remaining columns.
    pub fn design(
        &self,
        response: &str,
        intercept: bool,
    ) -> Result<(DMatrix<f64>, Vec<f64>, Vec<String>), CliError> {
        let r = self.index(response)?;
        let mut names = Vec::new();
        if intercept {
            names.push("(intercept)".to_string());
        }
        let covs: Vec<usize> = (0..self.headers.len()).filter(|&j| j != r).collect();
        names.extend(covs.iter().map(|&j| self.headers[j].clone()));
        let n = self.rows();
        let p = names.len();
        if p == 0 {
            return Err(CliError::usage("design has no columns".into()));
        }
        let off = usize::from(intercept);
        let x = DMatrix::from_fn(n, p, |i, j| {
            if j < off {
                1.0
            } else {
                self.columns[covs[j - off]][i]
            }
        });
        Ok((x, self.columns[r].clone(), names))
    }
}
