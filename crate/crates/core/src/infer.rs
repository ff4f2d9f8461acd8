//! Schema inference from raw string tables.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{ColumnSpec, TableSchema, TargetSpec};
use crate::table::RawTable;

/// A numeric target with more distinct values than this is treated as regression.
pub const REGRESSION_DISTINCT_THRESHOLD: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnHint {
    Continuous,
    Categorical,
}

pub type TypeHints = BTreeMap<String, ColumnHint>;

fn parse_finite(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Infers column kinds, ranges and category lists.
///
/// A column is continuous iff every value parses as a finite number, unless a
/// hint says otherwise. Categories and classes are sorted lexicographically.
/// For the target, a `continuous` hint selects regression and a
/// `categorical` hint classification; without a hint a target is regression
/// only when it is numeric with more than [`REGRESSION_DISTINCT_THRESHOLD`]
/// distinct values.
pub fn infer_schema(table: &RawTable, target_name: &str, hints: &TypeHints) -> Result<TableSchema> {
    if table.is_empty() {
        return Err(Error::EmptyTable);
    }
    for name in hints.keys() {
        table.column_index(name)?;
    }
    let target_idx = table.column_index(target_name)?;

    let mut columns = Vec::with_capacity(table.header.len() - 1);
    let mut target = None;
    for (idx, name) in table.header.iter().enumerate() {
        let values = table
            .rows
            .iter()
            .enumerate()
            .map(|(row, r)| {
                let v = r[idx].as_str();
                if v.is_empty() {
                    Err(Error::MissingValue {
                        column: name.clone(),
                        row,
                    })
                } else {
                    Ok(v)
                }
            })
            .collect::<Result<Vec<&str>>>()?;
        let numeric = |row: usize, v: &str| {
            parse_finite(v).ok_or_else(|| Error::NotNumeric {
                column: name.clone(),
                value: v.to_owned(),
                row,
            })
        };
        let all_numeric = values.iter().all(|v| parse_finite(v).is_some());
        let distinct: BTreeSet<&str> = values.iter().copied().collect();

        if idx == target_idx {
            let regression = match hints.get(name) {
                Some(ColumnHint::Continuous) => true,
                Some(ColumnHint::Categorical) => false,
                None => {
                    all_numeric && {
                        let nums: BTreeSet<u64> = values
                            .iter()
                            .filter_map(|v| parse_finite(v))
                            .map(f64::to_bits)
                            .collect();
                        nums.len() > REGRESSION_DISTINCT_THRESHOLD
                    }
                }
            };
            target = Some(if regression {
                let nums = values
                    .iter()
                    .enumerate()
                    .map(|(row, v)| numeric(row, v))
                    .collect::<Result<Vec<f64>>>()?;
                let (min, max) = min_max(&nums);
                TargetSpec::regression(name.clone(), min, max)
            } else {
                TargetSpec::classification(name.clone(), distinct.iter().copied())
            });
            continue;
        }

        let continuous = match hints.get(name) {
            Some(ColumnHint::Continuous) => true,
            Some(ColumnHint::Categorical) => false,
            None => all_numeric,
        };
        columns.push(if continuous {
            let nums = values
                .iter()
                .enumerate()
                .map(|(row, v)| numeric(row, v))
                .collect::<Result<Vec<f64>>>()?;
            let (min, max) = min_max(&nums);
            ColumnSpec::continuous(name.clone(), min, max)
        } else {
            ColumnSpec::categorical(name.clone(), distinct.iter().copied())
        });
    }
    let target = target.expect("target index is within the header");
    TableSchema::new(columns, target, target_idx)
}

fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}
