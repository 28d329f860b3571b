//! Datasets and their CSV representation.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    #[default]
    Regression,
    Classification,
}

/// Predictor matrix plus response. Classification responses are 0/1.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub task: Task,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, task: Task) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::SizeMismatch(format!(
                "{} predictor rows but {} responses",
                x.nrows(),
                y.len()
            )));
        }
        if task == Task::Classification {
            if let Some(i) = y.iter().position(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::Data {
                    line: i + 2,
                    msg: format!("classification response must be 0 or 1, got {}", y[i]),
                });
            }
        }
        Ok(Self { x, y, task })
    }

    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.x.ncols()
    }

    /// Copy of the given rows, in the given order.
    pub fn rows(&self, idx: &[usize]) -> Dataset {
        let p = self.n_cols();
        let x = DMatrix::from_fn(idx.len(), p, |i, j| self.x[(idx[i], j)]);
        let y = DVector::from_fn(idx.len(), |i, _| self.y[idx[i]]);
        Dataset { x, y, task: self.task }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=self.n_cols()).map(|j| format!("x{j}")).collect();
        header.push("y".to_string());
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(self.n_cols() + 1);
        for i in 0..self.n_rows() {
            record.clear();
            record.extend(self.x.row(i).iter().map(|v| v.to_string()));
            record.push(match self.task {
                Task::Classification => format!("{}", self.y[i] as u8),
                Task::Regression => self.y[i].to_string(),
            });
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a headered CSV. `response` names the response column; every other
    /// column is a predictor.
    pub fn read_csv<R: Read>(input: R, response: &str, task: Task) -> Result<Dataset> {
        let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(input);
        let header = rdr.headers().map_err(|e| csv_error(e, 1))?.clone();
        let y_col = header
            .iter()
            .position(|h| h.trim() == response)
            .ok_or_else(|| Error::MissingColumn(response.to_string()))?;
        let p = header.len() - 1;

        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let line = k + 2;
            let rec = rec.map_err(|e| csv_error(e, line))?;
            for (c, field) in rec.iter().enumerate() {
                let v: f64 = field.trim().parse().map_err(|_| Error::Data {
                    line,
                    msg: format!("column {:?}: cannot parse {:?} as a number", &header[c], field),
                })?;
                if !v.is_finite() {
                    return Err(Error::Data {
                        line,
                        msg: format!("column {:?}: non-finite value", &header[c]),
                    });
                }
                if c == y_col {
                    ys.push(v);
                } else {
                    xs.push(v);
                }
            }
        }
        let n = ys.len();
        if n == 0 {
            return Err(Error::Data { line: 2, msg: "no data rows".into() });
        }
        let x = DMatrix::from_row_slice(n, p, &xs);
        Dataset::new(x, DVector::from_vec(ys), task)
    }
}

fn csv_error(e: csv::Error, fallback_line: usize) -> Error {
    let line = e
        .position()
        .map(|p| p.line() as usize)
        .unwrap_or(fallback_line);
    Error::Data { line, msg: e.to_string() }
}

/// Sample mean.
pub fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = v.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// Sample variance with the `n - 1` denominator.
pub fn sample_variance(v: &[f64]) -> f64 {
    let m = mean(v.iter().copied());
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() as f64 - 1.0)
}
