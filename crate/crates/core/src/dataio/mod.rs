//! Dataset ingestion, synthetic flows, splitting and checkpoints.

mod checkpoint;
mod csvio;
mod profile;
mod split;
pub mod synth;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, FORMAT_VERSION};
pub use csvio::{load_csv, read_csv, write_csv, write_labels, RejectedRow, RejectionSummary};
pub use profile::{ColumnSpec, Profile, ProfileName};
pub use split::{split, Split};
pub use synth::{synth, Difficulty};

/// One flow row: the profile's cells as read, keyed by canonical column name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowRecord {
    /// Zero-based data-row index in the source.
    pub row: usize,
    pub values: BTreeMap<String, String>,
    /// 0 normal, 1 attack.
    pub label: u8,
}

impl FlowRecord {
    pub fn new(row: usize, values: BTreeMap<String, String>, label: u8) -> Self {
        Self { row, values, label }
    }

    pub fn get(&self, column: &str) -> Option<&str> {
        self.values.get(column).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<FlowRecord>,
    pub profile: Profile,
    pub provenance: String,
}

impl Dataset {
    pub fn new(records: Vec<FlowRecord>, profile: Profile, provenance: impl Into<String>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Dataset("dataset has no records".into()));
        }
        if let Some(r) = records.iter().find(|r| r.label > 1) {
            return Err(Error::Data {
                row: r.row,
                msg: format!("label {} is not 0 or 1", r.label),
            });
        }
        Ok(Self {
            records,
            profile,
            provenance: provenance.into(),
        })
    }

    pub fn records(&self) -> &[FlowRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.records.iter().map(|r| r.label).collect()
    }

    /// Records at the given indices, in that order.
    pub fn select(&self, indices: &[usize]) -> Vec<FlowRecord> {
        indices.iter().map(|&i| self.records[i].clone()).collect()
    }
}
