//! Turning a flow record into a "sentence" of feature tokens.
//!
//! Each feature of a record is one word. [`Schema::encode`] maps the raw cells
//! to a vector `x ∈ [0, 1]^J` using encoders fitted on the training split, and
//! [`sentence`] lifts every scalar `x_j` to a `C`-dimensional token
//! `x_j · e_j + b_j + pos_j`, giving a `J × C` token matrix.

use std::collections::BTreeMap;

use chrono::{NaiveDate, NaiveDateTime, NaiveTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::dataio::{FlowRecord, Profile};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Nominal,
    Numeric,
    Timestamp,
    Boolean,
}

/// Fitted state of one feature's encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Encoder {
    /// Dense indices starting at 1; 0 is reserved for values not seen in training.
    Vocabulary { index: BTreeMap<String, u32> },
    Range { min: f64, max: f64 },
    Boolean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    pub encoder: Encoder,
}

/// Ordered, fitted feature encoders. Immutable once fitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    features: Vec<FeatureSpec>,
    label: String,
}

/// One record after sentencing: a `T × C` token matrix with `T == J`.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence {
    pub tokens: Tensor,
    pub record: usize,
}

pub fn parse_numeric(cell: &str) -> Option<f64> {
    let s = cell.trim();
    let v = if let Some(hex) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        u64::from_str_radix(hex, 16).ok()? as f64
    } else {
        s.parse::<f64>().ok()?
    };
    v.is_finite().then_some(v)
}

/// Epoch seconds for an absolute timestamp, seconds since midnight for a bare
/// time of day.
pub fn parse_timestamp(cell: &str) -> Option<f64> {
    let s = cell.trim();
    if let Some(v) = parse_numeric(s) {
        return Some(v);
    }
    if let Ok(dt) = chrono::DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp() as f64);
    }
    const DATETIME: &[&str] = &["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%d/%m/%Y %H:%M:%S"];
    for fmt in DATETIME {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt.and_utc().timestamp() as f64);
        }
    }
    const DATE: &[&str] = &["%Y-%m-%d", "%d-%b-%y", "%d-%b-%Y", "%d/%m/%Y"];
    for fmt in DATE {
        if let Ok(d) = NaiveDate::parse_from_str(s, fmt) {
            return Some(d.and_hms_opt(0, 0, 0)?.and_utc().timestamp() as f64);
        }
    }
    for fmt in ["%H:%M:%S", "%H:%M"] {
        if let Ok(t) = NaiveTime::parse_from_str(s, fmt) {
            return Some(t.num_seconds_from_midnight() as f64);
        }
    }
    None
}

pub fn parse_boolean(cell: &str) -> Option<bool> {
    match cell.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "on" | "yes" => Some(true),
        "0" | "false" | "off" | "no" => Some(false),
        _ => None,
    }
}

/// Checks that a cell parses for the given kind. Nominal cells always do.
pub(crate) fn check_cell(kind: FeatureKind, cell: &str) -> std::result::Result<(), &'static str> {
    let ok = match kind {
        FeatureKind::Nominal => true,
        FeatureKind::Numeric => parse_numeric(cell).is_some(),
        FeatureKind::Timestamp => parse_timestamp(cell).is_some(),
        FeatureKind::Boolean => parse_boolean(cell).is_some(),
    };
    if ok {
        Ok(())
    } else {
        Err(match kind {
            FeatureKind::Numeric => "not a finite number",
            FeatureKind::Timestamp => "not a recognised timestamp",
            _ => "not a boolean",
        })
    }
}

fn scalar(kind: FeatureKind, cell: &str) -> Option<f64> {
    match kind {
        FeatureKind::Numeric => parse_numeric(cell),
        FeatureKind::Timestamp => parse_timestamp(cell),
        FeatureKind::Boolean => parse_boolean(cell).map(|b| if b { 1.0 } else { 0.0 }),
        FeatureKind::Nominal => None,
    }
}

fn cell<'a>(record: &'a FlowRecord, name: &str) -> Result<&'a str> {
    record
        .get(name)
        .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))
}

/// Fits encoders on the given (training) records.
pub fn fit_schema(records: &[FlowRecord], profile: &Profile) -> Result<Schema> {
    if records.is_empty() {
        return Err(Error::Schema("cannot fit a schema on an empty record set".into()));
    }
    let mut features = Vec::with_capacity(profile.features.len());
    for col in &profile.features {
        let encoder = match col.kind {
            FeatureKind::Nominal => {
                let mut seen = std::collections::BTreeSet::new();
                for r in records {
                    seen.insert(cell(r, &col.name)?.trim().to_string());
                }
                let index = seen.into_iter().zip(1u32..).collect();
                Encoder::Vocabulary { index }
            }
            FeatureKind::Boolean => {
                for r in records {
                    cell(r, &col.name)?;
                }
                Encoder::Boolean
            }
            FeatureKind::Numeric | FeatureKind::Timestamp => {
                let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
                for r in records {
                    let raw = cell(r, &col.name)?;
                    let v = scalar(col.kind, raw).ok_or_else(|| Error::Data {
                        row: r.row,
                        msg: format!("column `{}`: cannot parse {raw:?}", col.name),
                    })?;
                    min = min.min(v);
                    max = max.max(v);
                }
                if min == max {
                    log::warn!("feature `{}` is constant ({min}) in the training split", col.name);
                }
                Encoder::Range { min, max }
            }
        };
        features.push(FeatureSpec {
            name: col.name.clone(),
            kind: col.kind,
            encoder,
        });
    }
    Ok(Schema {
        features,
        label: profile.label.clone(),
    })
}

impl Schema {
    pub fn features(&self) -> &[FeatureSpec] {
        &self.features
    }

    /// Number of features `J` (the token count `T`).
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.features.iter().map(|f| f.name.as_str()).collect()
    }

    /// Encodes one record into `[0, 1]^J`.
    pub fn encode(&self, record: &FlowRecord) -> Result<Vec<f64>> {
        self.features
            .iter()
            .map(|f| {
                let raw = cell(record, &f.name)?;
                let reject = || Error::Data {
                    row: record.row,
                    msg: format!("column `{}`: cannot parse {raw:?}", f.name),
                };
                Ok(match &f.encoder {
                    Encoder::Vocabulary { index } => index
                        .get(raw.trim())
                        .map_or(0.0, |&i| i as f64 / index.len() as f64),
                    Encoder::Boolean => scalar(FeatureKind::Boolean, raw).ok_or_else(reject)?,
                    Encoder::Range { min, max } => {
                        let v = scalar(f.kind, raw).ok_or_else(reject)?;
                        if max > min {
                            ((v - min) / (max - min)).clamp(0.0, 1.0)
                        } else {
                            0.0
                        }
                    }
                })
            })
            .collect()
    }

    pub fn encode_all(&self, records: &[FlowRecord]) -> Result<Vec<Vec<f64>>> {
        records.iter().map(|r| self.encode(r)).collect()
    }
}

/// Learned per-feature token parameters: a direction `e_j`, a bias `b_j` and a
/// position row `pos_j`, each stored as a `J × C` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingWeights<P> {
    pub weight: P,
    pub bias: P,
    pub position: P,
}

pub type EmbeddingParams = EmbeddingWeights<Tensor>;

/// Sentencing of a single encoded record.
pub fn sentence(x: &[f64], params: &EmbeddingParams, record: usize) -> Result<TokenSequence> {
    let shape = params.weight.shape();
    let (j, c) = (shape[0], shape[1]);
    if x.len() != j {
        return Err(Error::shape("sentence", &[x.len()], shape));
    }
    let (e, b, p) = (params.weight.data(), params.bias.data(), params.position.data());
    let mut data = Vec::with_capacity(j * c);
    for (row, &xj) in x.iter().enumerate() {
        for k in 0..c {
            let at = row * c + k;
            data.push(xj * e[at] + b[at] + p[at]);
        }
    }
    Ok(TokenSequence {
        tokens: Tensor::new(&[j, c], data)?,
        record,
    })
}

/// Batched sentencing on the tape: `[B, J]` → `[B, J, C]`.
pub fn embed(tape: &mut Tape, x: Var, params: &EmbeddingWeights<Var>) -> Result<Var> {
    let shape = tape.shape(x).to_vec();
    let j = tape.shape(params.weight)[0];
    if shape.len() != 2 || shape[1] != j {
        return Err(Error::shape("embed", &shape, tape.shape(params.weight)));
    }
    let column = tape.reshape(x, &[shape[0], j, 1])?;
    let scaled = tape.mul(column, params.weight)?;
    let biased = tape.add(scaled, params.bias)?;
    tape.add(biased, params.position)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{ColumnSpec, ProfileName};
    use crate::model::ParamTree;

    fn profile(cols: &[(&str, FeatureKind)]) -> Profile {
        Profile {
            name: ProfileName::Custom,
            features: cols
                .iter()
                .map(|(n, k)| ColumnSpec::new(n, *k))
                .collect(),
            label: "label".into(),
        }
    }

    fn rec(row: usize, cells: &[(&str, &str)]) -> FlowRecord {
        FlowRecord::new(
            row,
            cells.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            0,
        )
    }

    #[test]
    fn vocabulary_is_dense_from_one() {
        let p = profile(&[("proto", FeatureKind::Nominal)]);
        let rs = [
            rec(0, &[("proto", "tcp")]),
            rec(1, &[("proto", "udp")]),
            rec(2, &[("proto", "tcp")]),
        ];
        let s = fit_schema(&rs, &p).unwrap();
        let Encoder::Vocabulary { index } = &s.features()[0].encoder else {
            panic!("expected vocabulary")
        };
        assert_eq!(index.get("tcp"), Some(&1));
        assert_eq!(index.get("udp"), Some(&2));
        assert_eq!(s.encode(&rec(9, &[("proto", "sctp")])).unwrap(), vec![0.0]);
        assert_eq!(s.encode(&rec(9, &[("proto", "udp")])).unwrap(), vec![1.0]);
    }

    #[test]
    fn range_is_min_max_with_clipping() {
        let p = profile(&[("Sload", FeatureKind::Numeric)]);
        let rs: Vec<_> = ["0", "5", "10"]
            .iter()
            .enumerate()
            .map(|(i, v)| rec(i, &[("Sload", v)]))
            .collect();
        let s = fit_schema(&rs, &p).unwrap();
        assert_eq!(s.features()[0].encoder, Encoder::Range { min: 0.0, max: 10.0 });
        assert_eq!(s.encode(&rec(0, &[("Sload", "5")])).unwrap(), vec![0.5]);
        assert_eq!(s.encode(&rec(0, &[("Sload", "20")])).unwrap(), vec![1.0]);
        assert_eq!(s.encode(&rec(0, &[("Sload", "-3")])).unwrap(), vec![0.0]);
    }

    #[test]
    fn empty_and_missing_inputs_are_schema_errors() {
        let p = profile(&[("Sload", FeatureKind::Numeric)]);
        assert!(matches!(fit_schema(&[], &p), Err(Error::Schema(_))));
        let err = fit_schema(&[rec(0, &[("Dload", "1")])], &p).unwrap_err();
        assert!(err.to_string().contains("Sload"), "{err}");
    }

    #[test]
    fn unparseable_numeric_names_the_row() {
        let p = profile(&[("Sload", FeatureKind::Numeric)]);
        let s = fit_schema(&[rec(0, &[("Sload", "1")]), rec(1, &[("Sload", "2")])], &p).unwrap();
        match s.encode(&rec(17, &[("Sload", "fast")])) {
            Err(Error::Data { row, .. }) => assert_eq!(row, 17),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn constant_numeric_feature_is_recorded() {
        let p = profile(&[("sttl", FeatureKind::Numeric)]);
        let s = fit_schema(&[rec(0, &[("sttl", "31")]), rec(1, &[("sttl", "31")])], &p).unwrap();
        assert_eq!(s.features()[0].encoder, Encoder::Range { min: 31.0, max: 31.0 });
        assert_eq!(s.encode(&rec(0, &[("sttl", "31")])).unwrap(), vec![0.0]);
    }

    #[test]
    fn timestamps_and_booleans() {
        assert_eq!(parse_timestamp("1421927414"), Some(1421927414.0));
        assert_eq!(parse_timestamp("1970-01-02 00:00:00"), Some(86400.0));
        assert_eq!(parse_timestamp("01:00:05"), Some(3605.0));
        assert_eq!(parse_timestamp("02-Jan-70"), Some(86400.0));
        assert_eq!(parse_timestamp("tuesday"), None);
        assert_eq!(parse_boolean(" On "), Some(true));
        assert_eq!(parse_boolean("false"), Some(false));
        assert_eq!(parse_numeric("0x000b"), Some(11.0));
        assert_eq!(parse_numeric("nan"), None);
    }

    #[test]
    fn zero_input_isolates_bias_and_position() {
        let params = EmbeddingParams {
            weight: Tensor::new(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap(),
            bias: Tensor::new(&[2, 3], vec![0.5; 6]).unwrap(),
            position: Tensor::new(&[2, 3], vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5]).unwrap(),
        };
        let t = sentence(&[0.0, 0.0], &params, 0).unwrap();
        assert_eq!(t.tokens.data(), &[0.5, 0.6, 0.7, 0.8, 0.9, 1.0]);
        assert!(sentence(&[0.0], &params, 0).is_err());
    }

    #[test]
    fn tape_embedding_matches_single_record_path() {
        let params = EmbeddingParams {
            weight: Tensor::new(&[2, 2], vec![0.3, -1.2, 2.0, 0.7]).unwrap(),
            bias: Tensor::new(&[2, 2], vec![0.1, 0.2, 0.3, 0.4]).unwrap(),
            position: Tensor::new(&[2, 2], vec![-0.5, 0.25, 0.0, 1.5]).unwrap(),
        };
        let rows = [vec![0.2, 0.9], vec![1.0, 0.0]];
        let mut tape = Tape::new();
        let bound = params.map(&mut |t| tape.constant(t.clone()));
        let x = tape.constant(Tensor::from_rows(&rows).unwrap());
        let z = embed(&mut tape, x, &bound).unwrap();
        assert_eq!(tape.shape(z), &[2, 2, 2]);
        for (b, row) in rows.iter().enumerate() {
            let single = sentence(row, &params, b).unwrap();
            assert_eq!(&tape.value(z).data()[b * 4..(b + 1) * 4], single.tokens.data());
        }
    }
}
