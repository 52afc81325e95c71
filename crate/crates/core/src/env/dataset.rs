//! Classification-to-bandit adapter.
//!
//! Each row of a multiclass dataset becomes one round: the features are the
//! context, the classes are the arms, and choosing arm `a` on a row with
//! true class `c` pays `1{a = c}`. Rows are presented in a seeded shuffle
//! order.
//!
//! CSV contract: UTF-8, header row, comma-delimited, numeric feature
//! columns, one label column selected by name (default: last column), no
//! missing values. Features are standardized per column; labels are mapped
//! to `0..K` in order of first appearance.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

const VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct ClassificationEnv<F> {
    features: Matrix<F>,
    labels: Vec<usize>,
    class_names: Vec<String>,
    feature_names: Vec<String>,
    label_name: String,
    order: Vec<usize>,
}

impl<F: Scalar> ClassificationEnv<F> {
    /// Wraps an already numeric dataset; mainly for tests. Labels must be
    /// `0..K` with every class present.
    pub fn from_matrix(features: Matrix<F>, labels: Vec<usize>) -> Result<Self> {
        if features.nrows() == 0 {
            return Err(Error::EmptyDataset);
        }
        if labels.len() != features.nrows() {
            return Err(Error::DimensionMismatch {
                expected: features.nrows(),
                got: labels.len(),
            });
        }
        let k = labels.iter().copied().max().unwrap_or(0) + 1;
        let feature_names = (0..features.ncols()).map(|j| format!("x{j}")).collect();
        let class_names = (0..k).map(|c| c.to_string()).collect();
        let order = (0..features.nrows()).collect();
        Ok(Self {
            features,
            labels,
            class_names,
            feature_names,
            label_name: "label".to_string(),
            order,
        })
    }

    /// Loads, standardizes and label-encodes a CSV file.
    pub fn load_csv(path: impl AsRef<Path>, label_column: Option<&str>) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path.as_ref())?;
        let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        if headers.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let label_idx = match label_column {
            Some(name) => headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::MissingLabelColumn {
                    name: name.to_string(),
                })?,
            None => headers.len() - 1,
        };
        let feature_names: Vec<String> = headers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != label_idx)
            .map(|(_, h)| h.clone())
            .collect();

        let mut raw: Vec<Vec<f64>> = Vec::new();
        let mut class_names: Vec<String> = Vec::new();
        let mut class_ids: HashMap<String, usize> = HashMap::new();
        let mut labels: Vec<usize> = Vec::new();
        for (row_idx, record) in reader.records().enumerate() {
            let record = record?;
            let mut row = Vec::with_capacity(feature_names.len());
            for (col_idx, value) in record.iter().enumerate() {
                if col_idx == label_idx {
                    let next_id = class_names.len();
                    let id = *class_ids.entry(value.to_string()).or_insert_with(|| {
                        class_names.push(value.to_string());
                        next_id
                    });
                    labels.push(id);
                } else {
                    let parsed: f64 = value.trim().parse().map_err(|_| Error::NonNumericCell {
                        row: row_idx + 1,
                        column: headers[col_idx].clone(),
                        value: value.to_string(),
                    })?;
                    row.push(parsed);
                }
            }
            raw.push(row);
        }
        if raw.is_empty() {
            return Err(Error::EmptyDataset);
        }

        let features = standardize::<F>(&raw);
        let order = (0..features.nrows()).collect();
        Ok(Self {
            features,
            labels,
            class_names,
            feature_names,
            label_name: headers[label_idx].clone(),
            order,
        })
    }

    /// Writes the standardized features and encoded labels back out.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut writer = csv::Writer::from_path(path.as_ref())?;
        let mut header = self.feature_names.clone();
        header.push(self.label_name.clone());
        writer.write_record(&header)?;
        for i in 0..self.features.nrows() {
            let mut record: Vec<String> = self
                .features
                .row(i)
                .iter()
                .map(|v| format!("{}", v.to_f64_lossy()))
                .collect();
            record.push(self.labels[i].to_string());
            writer.write_record(&record)?;
        }
        writer.flush()?;
        Ok(())
    }

    /// Same data in a freshly seeded presentation order.
    pub fn shuffled(&self, seed: u64) -> Self {
        let mut copy = self.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        copy.order = (0..self.len()).collect();
        copy.order.shuffle(&mut rng);
        copy
    }

    /// Number of rows.
    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    /// Context dimension including the leading intercept feature.
    pub fn context_dim(&self) -> usize {
        self.features.ncols() + 1
    }

    /// Context of round `t` in the current order: `(1, standardized row)`.
    pub fn context(&self, t: usize) -> Result<Vec<F>> {
        let row = self.row_index(t)?;
        let mut out = Vec::with_capacity(self.context_dim());
        out.push(F::one());
        out.extend_from_slice(self.features.row(row));
        Ok(out)
    }

    /// True class of round `t` in the current order.
    pub fn label(&self, t: usize) -> Result<usize> {
        Ok(self.labels[self.row_index(t)?])
    }

    /// Bandit feedback for pulling `arm` at round `t`: `1` iff it names the
    /// true class.
    pub fn reward(&self, t: usize, arm: usize) -> Result<F> {
        if arm >= self.n_classes() {
            return Err(Error::UnknownArm {
                arm,
                n_arms: self.n_classes(),
            });
        }
        Ok(if self.label(t)? == arm {
            F::one()
        } else {
            F::zero()
        })
    }

    fn row_index(&self, t: usize) -> Result<usize> {
        self.order.get(t).copied().ok_or(Error::invalid(
            "t",
            format!("round {t} out of range for {} rows", self.len()),
        ))
    }
}

/// Zero mean, unit variance per column; columns with variance below the
/// floor become all zeros.
fn standardize<F: Scalar>(raw: &[Vec<f64>]) -> Matrix<F> {
    let n = raw.len();
    let d = raw[0].len();
    let mut out = Matrix::zeros(n, d);
    for j in 0..d {
        let mean = raw.iter().map(|r| r[j]).sum::<f64>() / n as f64;
        let var = raw.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n as f64;
        if var < VARIANCE_FLOOR {
            continue;
        }
        let std = var.sqrt();
        for i in 0..n {
            out[(i, j)] = F::cast((raw[i][j] - mean) / std);
        }
    }
    out
}
