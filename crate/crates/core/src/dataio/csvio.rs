use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;

use super::{Dataset, FlowRecord, Profile};
use crate::error::{Error, Result};
use crate::sentencing::check_cell;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RejectedRow {
    pub row: usize,
    pub column: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RejectionSummary {
    pub rows_read: usize,
    pub accepted: usize,
    pub rejected: Vec<RejectedRow>,
}

impl RejectionSummary {
    pub fn rejected_count(&self) -> usize {
        self.rejected.len()
    }
}

pub fn load_csv(path: impl AsRef<Path>, profile: &Profile) -> Result<(Dataset, RejectionSummary)> {
    let path = path.as_ref();
    let file = File::open(path)?;
    read_csv(file, profile, &path.display().to_string())
}

fn parse_label(cell: &str) -> Option<u8> {
    match cell.trim() {
        "0" | "0.0" => Some(0),
        "1" | "1.0" => Some(1),
        _ => None,
    }
}

/// Reads a headered CSV, keeping only the profile's columns. Rows with a cell
/// that does not parse for its column kind are rejected and listed in the
/// summary; the remaining rows keep file order.
pub fn read_csv<R: Read>(reader: R, profile: &Profile, source: &str) -> Result<(Dataset, RejectionSummary)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::Headers)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();

    let mut columns = Vec::with_capacity(profile.features.len());
    for spec in &profile.features {
        let idx = headers
            .iter()
            .position(|h| spec.matches(h))
            .ok_or_else(|| Error::Schema(format!("missing column `{}`", spec.name)))?;
        columns.push((spec, idx));
    }
    let label_idx = headers
        .iter()
        .position(|h| profile.label_matches(h))
        .ok_or_else(|| Error::Schema(format!("missing column `{}`", profile.label)))?;

    let mut summary = RejectionSummary::default();
    let mut records = Vec::new();
    for (row, result) in rdr.records().enumerate() {
        summary.rows_read += 1;
        let rec = match result {
            Ok(r) => r,
            Err(e) => {
                summary.rejected.push(RejectedRow {
                    row,
                    column: String::new(),
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let reject = |column: &str, reason: &str| RejectedRow {
            row,
            column: column.to_string(),
            reason: reason.to_string(),
        };
        let mut values = std::collections::BTreeMap::new();
        let mut bad = None;
        for (spec, idx) in &columns {
            let Some(cell) = rec.get(*idx) else {
                bad = Some(reject(&spec.name, "missing field"));
                break;
            };
            if let Err(reason) = check_cell(spec.kind, cell) {
                bad = Some(reject(&spec.name, &format!("{reason}: {cell:?}")));
                break;
            }
            values.insert(spec.name.clone(), cell.to_string());
        }
        let label = rec.get(label_idx).and_then(parse_label);
        match (bad, label) {
            (Some(r), _) => summary.rejected.push(r),
            (None, None) => summary.rejected.push(reject(
                &profile.label,
                &format!("label {:?} is not 0 or 1", rec.get(label_idx).unwrap_or("")),
            )),
            (None, Some(label)) => records.push(FlowRecord::new(row, values, label)),
        }
    }
    summary.accepted = records.len();
    if records.is_empty() {
        return Err(Error::Dataset(format!(
            "{source}: no valid rows ({} read, {} rejected)",
            summary.rows_read,
            summary.rejected_count()
        )));
    }
    let dataset = Dataset::new(records, profile.clone(), source)?;
    Ok((dataset, summary))
}

/// Writes a dataset with the profile's columns followed by the label.
pub fn write_csv<W: Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let profile = &dataset.profile;
    let mut header: Vec<&str> = profile.features.iter().map(|c| c.name.as_str()).collect();
    header.push(&profile.label);
    wtr.write_record(&header)?;
    for r in dataset.records() {
        let label = r.label.to_string();
        let mut row: Vec<&str> = profile
            .features
            .iter()
            .map(|c| r.get(&c.name).unwrap_or(""))
            .collect();
        row.push(&label);
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// A one-column `label` CSV.
pub fn write_labels<W: Write>(labels: &[u8], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["label"])?;
    for l in labels {
        wtr.write_record([l.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}
