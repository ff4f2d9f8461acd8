use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::schema::{ColumnKind, LabeledRecord, TableSchema, Task, Value};

/// Downstream targets: class indices or real values.
#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Classes { y: Vec<usize>, n_classes: usize },
    Values(Vec<f64>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes { y, .. } => y.len(),
            Targets::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn subset(&self, idx: &[usize]) -> Targets {
        match self {
            Targets::Classes { y, n_classes } => Targets::Classes {
                y: idx.iter().map(|&i| y[i]).collect(),
                n_classes: *n_classes,
            },
            Targets::Values(v) => Targets::Values(idx.iter().map(|&i| v[i]).collect()),
        }
    }
}

/// Model predictions, parallel to [`Targets`].
#[derive(Debug, Clone, PartialEq)]
pub enum Predictions {
    Classes(Vec<usize>),
    Values(Vec<f64>),
}

/// Maps records to a numeric design matrix: one column per continuous
/// feature, a one-hot block per categorical feature. Categories outside the
/// schema encode as an all-zero block.
#[derive(Debug, Clone)]
pub struct FeatureEncoder {
    schema: TableSchema,
    width: usize,
}

impl FeatureEncoder {
    pub fn new(schema: &TableSchema) -> Self {
        let width = schema
            .columns
            .iter()
            .map(|c| match &c.kind {
                ColumnKind::Continuous(_) => 1,
                ColumnKind::Categorical(s) => s.categories.len(),
            })
            .sum();
        Self {
            schema: schema.clone(),
            width,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Which design-matrix columns hold continuous features.
    pub fn continuous_mask(&self) -> Vec<bool> {
        let mut mask = Vec::with_capacity(self.width);
        for c in &self.schema.columns {
            match &c.kind {
                ColumnKind::Continuous(_) => mask.push(true),
                ColumnKind::Categorical(s) => mask.extend(std::iter::repeat_n(false, s.categories.len())),
            }
        }
        mask
    }

    pub fn features(&self, records: &[LabeledRecord]) -> Result<Array2<f64>> {
        let mut x = Array2::zeros((records.len(), self.width));
        for (i, r) in records.iter().enumerate() {
            if r.features.len() != self.schema.columns.len() {
                return Err(Error::Arity {
                    expected: self.schema.columns.len(),
                    got: r.features.len(),
                }
                .at_row(i));
            }
            let mut j = 0;
            for (col, v) in self.schema.columns.iter().zip(&r.features) {
                match &col.kind {
                    ColumnKind::Continuous(_) => {
                        x[[i, j]] = v.as_number().ok_or_else(|| {
                            Error::NotNumeric {
                                column: col.name.clone(),
                                value: v.render(),
                                row: i,
                            }
                        })?;
                        j += 1;
                    }
                    ColumnKind::Categorical(s) => {
                        if let Some(k) = s.index_of(&v.render()) {
                            x[[i, j + k]] = 1.0;
                        }
                        j += s.categories.len();
                    }
                }
            }
        }
        Ok(x)
    }

    pub fn targets(&self, records: &[LabeledRecord]) -> Result<Targets> {
        let target = &self.schema.target;
        match &target.task {
            Task::Classification { classes } => {
                let y = records
                    .iter()
                    .enumerate()
                    .map(|(i, r)| target.class_index(&r.label.render()).map_err(|e| e.at_row(i)))
                    .collect::<Result<_>>()?;
                Ok(Targets::Classes {
                    y,
                    n_classes: classes.len(),
                })
            }
            Task::Regression { .. } => {
                let v = records
                    .iter()
                    .enumerate()
                    .map(|(i, r)| match r.label {
                        Value::Number(v) if v.is_finite() => Ok(v),
                        _ => Err(Error::NotNumeric {
                            column: target.name.clone(),
                            value: r.label.render(),
                            row: i,
                        }),
                    })
                    .collect::<Result<_>>()?;
                Ok(Targets::Values(v))
            }
        }
    }
}

/// Z-scores the masked columns using statistics of the fitting matrix.
/// Constant columns are centred only.
#[derive(Debug, Clone)]
pub struct Standardizer {
    mean: Array1<f64>,
    scale: Array1<f64>,
}

impl Standardizer {
    pub fn fit(x: &Array2<f64>, mask: &[bool]) -> Self {
        let n = x.nrows().max(1) as f64;
        let mut mean = x.sum_axis(Axis(0)) / n;
        let mut scale = Array1::ones(x.ncols());
        for (j, col) in x.axis_iter(Axis(1)).enumerate() {
            if !mask[j] {
                mean[j] = 0.0;
                continue;
            }
            let var = col.iter().map(|v| (v - mean[j]).powi(2)).sum::<f64>() / n;
            if var > 0.0 {
                scale[j] = var.sqrt();
            }
        }
        Self { mean, scale }
    }

    pub fn transform(&self, x: &Array2<f64>) -> Array2<f64> {
        (x - &self.mean) / &self.scale
    }
}
