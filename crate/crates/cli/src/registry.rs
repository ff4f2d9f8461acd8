//! Named benchmark datasets. Raw files are not shipped; place them under the
//! data directory with the listed file names.

use bindiff_core::eval::DownstreamParams;
use bindiff_core::infer::{ColumnHint, TypeHints};
use bindiff_core::schema::TaskKind;

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetPreset {
    pub name: &'static str,
    pub file: &'static str,
    pub target: &'static str,
    pub task: TaskKind,
    pub downstream: DownstreamParams,
}

impl DatasetPreset {
    /// Pins the target kind so small label sets are never mistaken for regression.
    pub fn type_hints(&self) -> TypeHints {
        let mut h = TypeHints::new();
        let target_hint = match self.task {
            TaskKind::Classification => ColumnHint::Categorical,
            TaskKind::Regression => ColumnHint::Continuous,
        };
        h.insert(self.target.to_owned(), target_hint);
        h
    }
}

const TABLE: [(&str, &str, &str, TaskKind); 6] = [
    ("travel", "travel.csv", "Target", TaskKind::Classification),
    ("sick", "sick.csv", "Class", TaskKind::Classification),
    ("heloc", "heloc.csv", "RiskPerformance", TaskKind::Classification),
    ("adult", "adult.csv", "income", TaskKind::Classification),
    ("diabetes", "diabetes.csv", "readmitted", TaskKind::Classification),
    ("california", "california.csv", "median_house_value", TaskKind::Regression),
];

pub fn names() -> Vec<&'static str> {
    TABLE.iter().map(|t| t.0).collect()
}

pub fn lookup(name: &str) -> Option<DatasetPreset> {
    let key = name.to_ascii_lowercase();
    TABLE.iter().find(|t| t.0 == key).map(|&(name, file, target, task)| DatasetPreset {
        name,
        file,
        target,
        task,
        downstream: DownstreamParams::preset(name).expect("every registry entry has downstream settings"),
    })
}
