use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::sentencing::FeatureKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileName {
    Unsw,
    Ton,
    Synthetic,
    Custom,
}

impl fmt::Display for ProfileName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProfileName::Unsw => "unsw",
            ProfileName::Ton => "ton",
            ProfileName::Synthetic => "synthetic",
            ProfileName::Custom => "custom",
        })
    }
}

impl FromStr for ProfileName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "unsw" | "unsw-nb15" | "unsw_nb15" => Ok(ProfileName::Unsw),
            "ton" | "ton_iot" | "ton-iot" => Ok(ProfileName::Ton),
            "synthetic" | "synth" => Ok(ProfileName::Synthetic),
            "custom" => Ok(ProfileName::Custom),
            other => Err(Error::Config(format!("unknown profile `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: FeatureKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub aliases: Vec<String>,
}

impl ColumnSpec {
    pub fn new(name: &str, kind: FeatureKind) -> Self {
        Self {
            name: name.to_string(),
            kind,
            aliases: Vec::new(),
        }
    }

    fn alias(mut self, alias: &str) -> Self {
        self.aliases.push(alias.to_string());
        self
    }

    /// Header matching ignores case and treats spaces and dashes as underscores.
    pub fn matches(&self, header: &str) -> bool {
        let h = normalize(header);
        normalize(&self.name) == h || self.aliases.iter().any(|a| normalize(a) == h)
    }
}

pub(crate) fn normalize(name: &str) -> String {
    name.trim()
        .chars()
        .map(|c| match c {
            ' ' | '-' => '_',
            c => c.to_ascii_lowercase(),
        })
        .collect()
}

/// The ordered feature columns a dataset is read with, plus its label column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Profile {
    pub name: ProfileName,
    pub features: Vec<ColumnSpec>,
    pub label: String,
}

impl Profile {
    /// Thirteen UNSW-NB15 flow features: addresses, ports, protocol, duration,
    /// TTL, loads, packet counts and start/end times.
    pub fn unsw() -> Self {
        use FeatureKind::*;
        Self {
            name: ProfileName::Unsw,
            features: vec![
                ColumnSpec::new("srcip", Nominal),
                ColumnSpec::new("sport", Numeric).alias("srcport"),
                ColumnSpec::new("dstip", Nominal),
                ColumnSpec::new("dsport", Numeric).alias("dstport"),
                ColumnSpec::new("proto", Nominal),
                ColumnSpec::new("dur", Numeric),
                ColumnSpec::new("sttl", Numeric),
                ColumnSpec::new("Sload", Numeric),
                ColumnSpec::new("Dload", Numeric),
                ColumnSpec::new("Spkts", Numeric),
                ColumnSpec::new("Dpkts", Numeric),
                ColumnSpec::new("Stime", Timestamp),
                ColumnSpec::new("Ltime", Timestamp),
            ],
            label: "label".into(),
        }
    }

    /// Eleven TON_IoT telemetry features.
    pub fn ton() -> Self {
        use FeatureKind::*;
        Self {
            name: ProfileName::Ton,
            features: vec![
                ColumnSpec::new("time", Timestamp),
                ColumnSpec::new("date", Timestamp),
                ColumnSpec::new("motion_status", Numeric),
                ColumnSpec::new("light_status", Boolean),
                ColumnSpec::new("temperature", Numeric),
                ColumnSpec::new("pressure", Numeric),
                ColumnSpec::new("humidity", Numeric),
                ColumnSpec::new("sphone_signal", Boolean),
                ColumnSpec::new("latitude", Numeric),
                ColumnSpec::new("longitude", Numeric),
                ColumnSpec::new("FC1_Read_Input_Register", Numeric),
            ],
            label: "label".into(),
        }
    }

    /// Generated data uses the UNSW column layout.
    pub fn synthetic() -> Self {
        Self {
            name: ProfileName::Synthetic,
            ..Self::unsw()
        }
    }

    pub fn by_name(name: ProfileName) -> Self {
        match name {
            ProfileName::Unsw | ProfileName::Custom => Self::unsw(),
            ProfileName::Ton => Self::ton(),
            ProfileName::Synthetic => Self::synthetic(),
        }
    }

    /// Replaces the feature columns, e.g. to pick a different 13-column
    /// subset of a UNSW file.
    pub fn with_features(mut self, features: Vec<ColumnSpec>) -> Self {
        self.features = features;
        self.name = ProfileName::Custom;
        self
    }

    pub fn feature_count(&self) -> usize {
        self.features.len()
    }

    pub fn label_matches(&self, header: &str) -> bool {
        normalize(header) == normalize(&self.label)
    }
}
