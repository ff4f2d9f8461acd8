//! The reversible table <-> bit-vector transformation and label conditioning.
//!
//! Continuous values are min-max normalized and stored as the IEEE-754
//! binary32 pattern of the normalized value; categorical values are stored as
//! the big-endian index of the category. Both are written most-significant
//! bit first and concatenated in schema column order.

use crate::error::{Error, Result};
use crate::schema::{
    CategoricalSpec, ColumnKind, ColumnSpec, ContinuousSpec, LabeledRecord, TableSchema,
    TargetSpec, Task, Value, CONTINUOUS_BITS,
};

/// Fixed-width bit vector: one encoded table row.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryRow(Vec<bool>);

impl BinaryRow {
    pub fn new(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    pub fn zeros(d: usize) -> Self {
        Self(vec![false; d])
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn into_bits(self) -> Vec<bool> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn hamming(&self, other: &Self) -> usize {
        self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count()
    }
}

impl From<Vec<bool>> for BinaryRow {
    fn from(bits: Vec<bool>) -> Self {
        Self(bits)
    }
}

/// Encoded label `y_e` fed to the denoiser.
#[derive(Debug, Clone, PartialEq)]
pub struct Condition(pub Vec<f32>);

fn push_uint(out: &mut Vec<bool>, value: u64, width: usize) {
    for shift in (0..width).rev() {
        out.push((value >> shift) & 1 == 1);
    }
}

fn read_uint(bits: &[bool]) -> u64 {
    bits.iter().fold(0, |acc, &b| (acc << 1) | u64::from(b))
}

fn normalize(v: f64, spec: &ContinuousSpec) -> f64 {
    if spec.max > spec.min {
        ((v - spec.min) / (spec.max - spec.min)).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

fn continuous_spec(spec: &ColumnSpec) -> Result<&ContinuousSpec> {
    match &spec.kind {
        ColumnKind::Continuous(c) => Ok(c),
        ColumnKind::Categorical(_) => Err(Error::InvalidSchema(format!(
            "column `{}` is categorical",
            spec.name
        ))),
    }
}

fn categorical_spec(spec: &ColumnSpec) -> Result<&CategoricalSpec> {
    match &spec.kind {
        ColumnKind::Categorical(c) => Ok(c),
        ColumnKind::Continuous(_) => Err(Error::InvalidSchema(format!(
            "column `{}` is continuous",
            spec.name
        ))),
    }
}

pub fn encode_continuous(v: f64, spec: &ColumnSpec) -> Result<Vec<bool>> {
    let c = continuous_spec(spec)?;
    let mut out = Vec::with_capacity(CONTINUOUS_BITS);
    push_continuous(&mut out, v, c, &spec.name)?;
    Ok(out)
}

fn push_continuous(out: &mut Vec<bool>, v: f64, c: &ContinuousSpec, name: &str) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::NonFinite {
            column: name.to_owned(),
            value: v,
        });
    }
    let n = normalize(v, c) as f32;
    push_uint(out, u64::from(n.to_bits()), CONTINUOUS_BITS);
    Ok(())
}

pub fn decode_continuous(bits: &[bool], spec: &ColumnSpec) -> Result<f64> {
    let c = continuous_spec(spec)?;
    check_len(bits, CONTINUOUS_BITS)?;
    Ok(decode_continuous_unchecked(bits, c))
}

fn decode_continuous_unchecked(bits: &[bool], c: &ContinuousSpec) -> f64 {
    let raw = f32::from_bits(read_uint(bits) as u32);
    let n = if raw.is_nan() { 0.0 } else { f64::from(raw).clamp(0.0, 1.0) };
    c.min + n * (c.max - c.min)
}

pub fn encode_categorical(value: &str, spec: &ColumnSpec) -> Result<Vec<bool>> {
    let c = categorical_spec(spec)?;
    let mut out = Vec::with_capacity(c.bit_width);
    push_categorical(&mut out, value, c, &spec.name)?;
    Ok(out)
}

fn push_categorical(out: &mut Vec<bool>, value: &str, c: &CategoricalSpec, name: &str) -> Result<()> {
    let idx = c.index_of(value).ok_or_else(|| Error::UnknownCategory {
        column: name.to_owned(),
        value: value.to_owned(),
    })?;
    push_uint(out, idx as u64, c.bit_width);
    Ok(())
}

pub fn decode_categorical(bits: &[bool], spec: &ColumnSpec) -> Result<String> {
    let c = categorical_spec(spec)?;
    check_len(bits, c.bit_width)?;
    Ok(decode_categorical_unchecked(bits, c).to_owned())
}

fn decode_categorical_unchecked<'a>(bits: &[bool], c: &'a CategoricalSpec) -> &'a str {
    let code = read_uint(bits) as usize;
    &c.categories[code.min(c.categories.len() - 1)]
}

fn check_len(bits: &[bool], expected: usize) -> Result<()> {
    if bits.len() != expected {
        return Err(Error::Length {
            expected,
            got: bits.len(),
        });
    }
    Ok(())
}

/// Concatenates the encoded feature columns in schema order.
pub fn encode_row(features: &[Value], schema: &TableSchema) -> Result<BinaryRow> {
    if features.len() != schema.columns.len() {
        return Err(Error::Arity {
            expected: schema.columns.len(),
            got: features.len(),
        });
    }
    let mut bits = Vec::with_capacity(schema.total_bits);
    for (spec, value) in schema.columns.iter().zip(features) {
        match (&spec.kind, value) {
            (ColumnKind::Continuous(c), Value::Number(v)) => push_continuous(&mut bits, *v, c, &spec.name)?,
            (ColumnKind::Categorical(c), Value::Category(s)) => push_categorical(&mut bits, s, c, &spec.name)?,
            (ColumnKind::Continuous(_), Value::Category(s)) => {
                return Err(Error::NotNumeric {
                    column: spec.name.clone(),
                    value: s.clone(),
                    row: 0,
                })
            }
            (ColumnKind::Categorical(c), Value::Number(v)) => {
                // Numeric-looking categories arrive as numbers when built by hand.
                push_categorical(&mut bits, &format!("{v}"), c, &spec.name)?
            }
        }
    }
    debug_assert_eq!(bits.len(), schema.total_bits);
    Ok(BinaryRow(bits))
}

/// Splits a row back into feature values. Total over all bit patterns.
pub fn decode_row(row: &BinaryRow, schema: &TableSchema) -> Result<Vec<Value>> {
    check_len(row.bits(), schema.total_bits)?;
    let mut offset = 0;
    let values = schema
        .columns
        .iter()
        .map(|spec| {
            let width = spec.bit_width();
            let field = &row.bits()[offset..offset + width];
            offset += width;
            match &spec.kind {
                ColumnKind::Continuous(c) => Value::Number(decode_continuous_unchecked(field, c)),
                ColumnKind::Categorical(c) => {
                    Value::Category(decode_categorical_unchecked(field, c).to_owned())
                }
            }
        })
        .collect();
    Ok(values)
}

pub fn encode_record(record: &LabeledRecord, schema: &TableSchema) -> Result<(BinaryRow, Condition)> {
    Ok((
        encode_row(&record.features, schema)?,
        encode_condition(&record.label, &schema.target)?,
    ))
}

/// `E_y`: one-hot for classification, clamped min-max value for regression.
pub fn encode_condition(label: &Value, target: &TargetSpec) -> Result<Condition> {
    match &target.task {
        Task::Classification { classes } => {
            let name = match label {
                Value::Category(s) => s.clone(),
                Value::Number(v) => format!("{v}"),
            };
            let idx = target.class_index(&name)?;
            let mut v = vec![0.0; classes.len()];
            v[idx] = 1.0;
            Ok(Condition(v))
        }
        Task::Regression { min, max } => {
            let y = match label {
                Value::Number(v) => *v,
                Value::Category(s) => target.parse_label(s)?.as_number().unwrap_or(f64::NAN),
            };
            if !y.is_finite() {
                return Err(Error::NonFinite {
                    column: target.name.clone(),
                    value: y,
                });
            }
            Ok(Condition(vec![((y - min) / (max - min)).clamp(0.0, 1.0) as f32]))
        }
    }
}

/// The "no conditioning" token: all zeros for classification, `[-1]` for regression.
pub fn null_condition(target: &TargetSpec) -> Condition {
    match &target.task {
        Task::Classification { classes } => Condition(vec![0.0; classes.len()]),
        Task::Regression { .. } => Condition(vec![-1.0]),
    }
}
