//! Verdict blocks: one named, machine-readable entry per theorem-level
//! check, with the measured scalars and a per-alpha table.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerdictStatus {
    Pass,
    Fail,
    /// The check's hypotheses do not apply to this instance.
    Vacuous,
    /// Measured and stored without an assertion (sign not claimed).
    Recorded,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerdictBlock {
    pub name: String,
    /// The mathematical claim the finite surrogate stands in for.
    pub claim: String,
    /// Which finite measurement replaces the limit statement.
    pub surrogate: String,
    pub status: VerdictStatus,
    pub scalars: BTreeMap<String, f64>,
    /// One row per alpha (or per parameter value), keyed column -> value.
    pub table: Vec<BTreeMap<String, f64>>,
}

impl VerdictBlock {
    pub fn new(name: &str, claim: &str, surrogate: &str) -> Self {
        Self {
            name: name.to_string(),
            claim: claim.to_string(),
            surrogate: surrogate.to_string(),
            status: VerdictStatus::Recorded,
            scalars: BTreeMap::new(),
            table: Vec::new(),
        }
    }

    pub fn status(mut self, status: VerdictStatus) -> Self {
        self.status = status;
        self
    }

    pub fn pass_if(mut self, ok: bool) -> Self {
        self.status = if ok { VerdictStatus::Pass } else { VerdictStatus::Fail };
        self
    }

    pub fn scalar(mut self, key: &str, value: f64) -> Self {
        self.scalars.insert(key.to_string(), value);
        self
    }

    pub fn row(mut self, row: BTreeMap<String, f64>) -> Self {
        self.table.push(row);
        self
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct VerdictFile {
    pub config_echo: String,
    pub verdicts: Vec<VerdictBlock>,
}

impl VerdictFile {
    pub fn failures(&self) -> Vec<&VerdictBlock> {
        self.verdicts
            .iter()
            .filter(|v| v.status == VerdictStatus::Fail)
            .collect()
    }
}
