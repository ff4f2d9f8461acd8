//! Table schema: the metadata that makes the binary transformation reversible.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::RawTable;

/// Width of an encoded continuous field (one IEEE-754 binary32 value).
pub const CONTINUOUS_BITS: usize = 32;

/// A single cell value after parsing against a schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Number(f64),
    Category(String),
}

impl Value {
    pub fn as_number(&self) -> Option<f64> {
        match self {
            Value::Number(v) => Some(*v),
            Value::Category(_) => None,
        }
    }

    pub fn as_category(&self) -> Option<&str> {
        match self {
            Value::Category(s) => Some(s),
            Value::Number(_) => None,
        }
    }

    pub fn render(&self) -> String {
        match self {
            Value::Number(v) => format!("{v}"),
            Value::Category(s) => s.clone(),
        }
    }
}

/// Feature values in schema column order, plus the target value.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledRecord {
    pub features: Vec<Value>,
    pub label: Value,
}

mod f64_string {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        // `{:?}` is the shortest representation that parses back to the same f64.
        s.serialize_str(&format!("{v:?}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(D::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousSpec {
    #[serde(with = "f64_string")]
    pub min: f64,
    #[serde(with = "f64_string")]
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalSpec {
    pub categories: Vec<String>,
    pub bit_width: usize,
}

impl CategoricalSpec {
    /// Builds the spec with `bit_width = max(1, ceil(log2 K))`.
    pub fn new(categories: Vec<String>) -> Self {
        let bit_width = bit_width_for(categories.len());
        Self {
            categories,
            bit_width,
        }
    }

    pub fn index_of(&self, value: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == value)
    }
}

/// `max(1, ceil(log2 k))`.
pub fn bit_width_for(k: usize) -> usize {
    if k <= 2 {
        1
    } else {
        (usize::BITS - (k - 1).leading_zeros()) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnKind {
    Continuous(ContinuousSpec),
    Categorical(CategoricalSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: ColumnKind,
}

impl ColumnSpec {
    pub fn continuous(name: impl Into<String>, min: f64, max: f64) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Continuous(ContinuousSpec { min, max }),
        }
    }

    pub fn categorical<S: Into<String>>(
        name: impl Into<String>,
        categories: impl IntoIterator<Item = S>,
    ) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Categorical(CategoricalSpec::new(
                categories.into_iter().map(Into::into).collect(),
            )),
        }
    }

    pub fn bit_width(&self) -> usize {
        match &self.kind {
            ColumnKind::Continuous(_) => CONTINUOUS_BITS,
            ColumnKind::Categorical(c) => c.bit_width,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSchema(format!("column `{}`: {msg}", self.name)));
        match &self.kind {
            ColumnKind::Continuous(c) => {
                if !c.min.is_finite() || !c.max.is_finite() {
                    return bad("min/max must be finite".into());
                }
                if c.min > c.max {
                    return bad(format!("min {} > max {}", c.min, c.max));
                }
            }
            ColumnKind::Categorical(c) => {
                if c.categories.is_empty() {
                    return bad("no categories".into());
                }
                let mut sorted = c.categories.clone();
                sorted.sort();
                sorted.dedup();
                if sorted.len() != c.categories.len() {
                    return bad("duplicate categories".into());
                }
                if c.bit_width < 1
                    || c.bit_width >= usize::BITS as usize
                    || (1usize << c.bit_width) < c.categories.len()
                {
                    return bad(format!(
                        "bit width {} cannot hold {} categories",
                        c.bit_width,
                        c.categories.len()
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Classification,
    Regression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum Task {
    Classification {
        classes: Vec<String>,
    },
    Regression {
        #[serde(with = "f64_string")]
        min: f64,
        #[serde(with = "f64_string")]
        max: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub name: String,
    #[serde(flatten)]
    pub task: Task,
}

impl TargetSpec {
    pub fn classification<S: Into<String>>(
        name: impl Into<String>,
        classes: impl IntoIterator<Item = S>,
    ) -> Self {
        Self {
            name: name.into(),
            task: Task::Classification {
                classes: classes.into_iter().map(Into::into).collect(),
            },
        }
    }

    pub fn regression(name: impl Into<String>, min: f64, max: f64) -> Self {
        Self {
            name: name.into(),
            task: Task::Regression { min, max },
        }
    }

    pub fn kind(&self) -> TaskKind {
        match self.task {
            Task::Classification { .. } => TaskKind::Classification,
            Task::Regression { .. } => TaskKind::Regression,
        }
    }

    /// Length of the encoded condition vector.
    pub fn cond_dim(&self) -> usize {
        match &self.task {
            Task::Classification { classes } => classes.len(),
            Task::Regression { .. } => 1,
        }
    }

    pub fn class_index(&self, value: &str) -> Result<usize> {
        match &self.task {
            Task::Classification { classes } => {
                classes
                    .iter()
                    .position(|c| c == value)
                    .ok_or_else(|| Error::UnknownClass {
                        target: self.name.clone(),
                        value: value.to_owned(),
                    })
            }
            Task::Regression { .. } => Err(Error::InvalidSchema(format!(
                "target `{}` is a regression target",
                self.name
            ))),
        }
    }

    pub fn parse_label(&self, raw: &str) -> Result<Value> {
        match &self.task {
            Task::Classification { .. } => {
                self.class_index(raw)?;
                Ok(Value::Category(raw.to_owned()))
            }
            Task::Regression { .. } => {
                let v: f64 = raw.parse().map_err(|_| Error::NotNumeric {
                    column: self.name.clone(),
                    value: raw.to_owned(),
                    row: 0,
                })?;
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        column: self.name.clone(),
                        value: v,
                    });
                }
                Ok(Value::Number(v))
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.task {
            Task::Classification { classes } => {
                if classes.len() < 2 {
                    return Err(Error::InvalidSchema(format!(
                        "target `{}` needs at least 2 classes, found {}",
                        self.name,
                        classes.len()
                    )));
                }
                let mut sorted = classes.clone();
                sorted.sort();
                sorted.dedup();
                if sorted.len() != classes.len() {
                    return Err(Error::InvalidSchema(format!(
                        "target `{}` has duplicate classes",
                        self.name
                    )));
                }
            }
            Task::Regression { min, max } => {
                if !(min.is_finite() && max.is_finite() && min < max) {
                    return Err(Error::InvalidSchema(format!(
                        "target `{}` needs finite min < max, got [{min}, {max}]",
                        self.name
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Ordered column specs (target excluded), the target spec, and the total bit width `d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSchema {
    pub columns: Vec<ColumnSpec>,
    pub target: TargetSpec,
    /// Position of the target column in the original header.
    pub target_position: usize,
    pub total_bits: usize,
}

impl TableSchema {
    pub fn new(columns: Vec<ColumnSpec>, target: TargetSpec, target_position: usize) -> Result<Self> {
        let total_bits = columns.iter().map(ColumnSpec::bit_width).sum();
        let schema = Self {
            columns,
            target,
            target_position,
            total_bits,
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        for c in &self.columns {
            c.validate()?;
        }
        self.target.validate()?;
        let d: usize = self.columns.iter().map(ColumnSpec::bit_width).sum();
        if d == 0 {
            return Err(Error::InvalidSchema("schema encodes zero bits".into()));
        }
        if d != self.total_bits {
            return Err(Error::InvalidSchema(format!(
                "total_bits {} disagrees with column widths {d}",
                self.total_bits
            )));
        }
        if self.target_position > self.columns.len() {
            return Err(Error::InvalidSchema(format!(
                "target position {} beyond {} columns",
                self.target_position,
                self.columns.len()
            )));
        }
        let mut names: Vec<&str> = self.columns.iter().map(|c| c.name.as_str()).collect();
        names.push(&self.target.name);
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidSchema("duplicate column names".into()));
        }
        Ok(())
    }

    pub fn cond_dim(&self) -> usize {
        self.target.cond_dim()
    }

    /// Column names in original header order, target included.
    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = self.columns.iter().map(|c| c.name.clone()).collect();
        h.insert(self.target_position, self.target.name.clone());
        h
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let schema: Self = serde_json::from_str(json)?;
        schema.validate()?;
        Ok(schema)
    }

    /// Parses every row of `table` (matched by column name) into typed records.
    pub fn parse_table(&self, table: &RawTable) -> Result<Vec<LabeledRecord>> {
        let feature_idx = self
            .columns
            .iter()
            .map(|c| table.column_index(&c.name))
            .collect::<Result<Vec<_>>>()?;
        let target_idx = table.column_index(&self.target.name)?;
        table
            .rows
            .iter()
            .enumerate()
            .map(|(row, cells)| {
                let parse = || -> Result<LabeledRecord> {
                    let features = self
                        .columns
                        .iter()
                        .zip(&feature_idx)
                        .map(|(spec, &i)| parse_cell(spec, &cells[i]))
                        .collect::<Result<Vec<_>>>()?;
                    let raw = &cells[target_idx];
                    if raw.is_empty() {
                        return Err(Error::MissingValue {
                            column: self.target.name.clone(),
                            row,
                        });
                    }
                    let label = self.target.parse_label(raw)?;
                    Ok(LabeledRecord { features, label })
                };
                parse().map_err(|e| e.at_row(row))
            })
            .collect()
    }

    /// Renders records back into a table in original header order.
    pub fn to_raw_table(&self, records: &[LabeledRecord]) -> RawTable {
        let rows = records
            .iter()
            .map(|r| {
                let mut row: Vec<String> = r.features.iter().map(Value::render).collect();
                row.insert(self.target_position, r.label.render());
                row
            })
            .collect();
        RawTable {
            header: self.header(),
            rows,
        }
    }
}

fn parse_cell(spec: &ColumnSpec, raw: &str) -> Result<Value> {
    if raw.is_empty() {
        return Err(Error::MissingValue {
            column: spec.name.clone(),
            row: 0,
        });
    }
    match &spec.kind {
        ColumnKind::Continuous(_) => {
            let v: f64 = raw.parse().map_err(|_| Error::NotNumeric {
                column: spec.name.clone(),
                value: raw.to_owned(),
                row: 0,
            })?;
            Ok(Value::Number(v))
        }
        ColumnKind::Categorical(_) => Ok(Value::Category(raw.to_owned())),
    }
}
