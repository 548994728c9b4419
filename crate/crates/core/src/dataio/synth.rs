//! Deterministic synthetic flows in the UNSW column layout.
//!
//! Only `Sload` depends on the label. Every other column is drawn from the
//! same distribution for both classes, so the Bayes error of the whole record
//! equals the Bayes error of `Sload` alone:
//!
//! * `separable`: normal `Sload ~ U(1e4, 4e5)`, attack `Sload ~ U(6e5, 1e6)`;
//!   the threshold `5e5` classifies perfectly with a wide margin.
//! * `noisy`: normal `Sload ~ N(5e5, 1e5²)`, attack `Sload ~ N(5e5 + 2zσ, 1e5²)`
//!   with `z = Φ⁻¹(1 − ε)`, so the optimal threshold `5e5 + zσ` errs with
//!   probability exactly `ε`.
//!
//! Labels are balanced (`⌊n/2⌋` attacks) and shuffled.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as StdNormal};

use super::{Dataset, FlowRecord, Profile};
use crate::error::{Error, Result};

pub const MIN_RECORDS: usize = 10;
pub const DEFAULT_BAYES_ERROR: f64 = 0.1;
pub const STIME_BASE: u64 = 1_421_927_377;

const SEPARABLE_NORMAL: (f64, f64) = (1e4, 4e5);
const SEPARABLE_ATTACK: (f64, f64) = (6e5, 1e6);
const NOISY_MEAN: f64 = 5e5;
const NOISY_STD: f64 = 1e5;

const DSPORTS: [f64; 6] = [22.0, 25.0, 53.0, 80.0, 111.0, 443.0];
const TTLS: [f64; 3] = [31.0, 62.0, 254.0];
const PROTOS: [(&str, f64); 3] = [("tcp", 0.6), ("udp", 0.3), ("icmp", 0.1)];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Difficulty {
    Separable,
    Noisy { bayes_error: f64 },
}

impl Difficulty {
    pub fn noisy() -> Self {
        Difficulty::Noisy { bayes_error: DEFAULT_BAYES_ERROR }
    }

    fn noisy_shift(bayes_error: f64) -> f64 {
        let z = StdNormal::standard().inverse_cdf(1.0 - bayes_error);
        z * NOISY_STD
    }

    /// Optimal `Sload` decision threshold: attack iff `Sload > threshold`.
    pub fn sload_threshold(&self) -> f64 {
        match *self {
            Difficulty::Separable => 0.5 * (SEPARABLE_NORMAL.1 + SEPARABLE_ATTACK.0),
            Difficulty::Noisy { bayes_error } => NOISY_MEAN + Self::noisy_shift(bayes_error),
        }
    }

    /// Error rate of the optimal classifier.
    pub fn bayes_error(&self) -> f64 {
        match *self {
            Difficulty::Separable => 0.0,
            Difficulty::Noisy { bayes_error } => bayes_error,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Difficulty::Noisy { bayes_error } if !(bayes_error > 0.0 && bayes_error < 0.5) => Err(
                Error::Config(format!("bayes error must lie in (0, 0.5), got {bayes_error}")),
            ),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Difficulty::Separable => f.write_str("separable"),
            Difficulty::Noisy { bayes_error } => write!(f, "noisy(bayes_error={bayes_error})"),
        }
    }
}

impl FromStr for Difficulty {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "separable" => Ok(Difficulty::Separable),
            "noisy" => Ok(Difficulty::noisy()),
            other => Err(Error::Config(format!("unknown difficulty `{other}`"))),
        }
    }
}

/// Documented mean and standard deviation of a numeric synthetic column.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub column: &'static str,
    pub mean: f64,
    pub std: f64,
}

fn uniform(column: &'static str, lo: f64, hi: f64) -> Moments {
    Moments { column, mean: 0.5 * (lo + hi), std: (hi - lo) / 12f64.sqrt() }
}

fn uniform_int(column: &'static str, lo: u32, hi: u32) -> Moments {
    let span = f64::from(hi - lo + 1);
    Moments {
        column,
        mean: 0.5 * f64::from(lo + hi),
        std: ((span * span - 1.0) / 12.0).sqrt(),
    }
}

fn choice(column: &'static str, values: &[f64]) -> Moments {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Moments { column, mean, std: var.sqrt() }
}

/// Generating moments of every numeric column for records of class `label`.
pub fn moments(difficulty: Difficulty, label: u8) -> Vec<Moments> {
    let sload = match (difficulty, label) {
        (Difficulty::Separable, 0) => uniform("Sload", SEPARABLE_NORMAL.0, SEPARABLE_NORMAL.1),
        (Difficulty::Separable, _) => uniform("Sload", SEPARABLE_ATTACK.0, SEPARABLE_ATTACK.1),
        (Difficulty::Noisy { .. }, 0) => Moments { column: "Sload", mean: NOISY_MEAN, std: NOISY_STD },
        (Difficulty::Noisy { bayes_error }, _) => Moments {
            column: "Sload",
            mean: NOISY_MEAN + 2.0 * Difficulty::noisy_shift(bayes_error),
            std: NOISY_STD,
        },
    };
    vec![
        uniform_int("sport", 1024, 65535),
        choice("dsport", &DSPORTS),
        uniform("dur", 0.0, 5.0),
        choice("sttl", &TTLS),
        sload,
        uniform("Dload", 0.0, 2e5),
        uniform_int("Spkts", 1, 100),
        uniform_int("Dpkts", 0, 100),
    ]
}

/// Generates `n` records. Identical arguments give identical datasets.
pub fn synth(n: usize, seed: u64, difficulty: Difficulty) -> Result<Dataset> {
    if n < MIN_RECORDS {
        return Err(Error::Config(format!("synth needs n >= {MIN_RECORDS}, got {n}")));
    }
    difficulty.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<u8> = (0..n).map(|i| u8::from(i < n / 2)).collect();
    labels.shuffle(&mut rng);

    let noise = Normal::new(0.0, NOISY_STD).expect("positive std");
    let records = labels
        .iter()
        .enumerate()
        .map(|(i, &label)| {
            let sload = match difficulty {
                Difficulty::Separable => {
                    let (lo, hi) = if label == 1 { SEPARABLE_ATTACK } else { SEPARABLE_NORMAL };
                    rng.random_range(lo..hi)
                }
                Difficulty::Noisy { bayes_error } => {
                    let shift = if label == 1 { 2.0 * Difficulty::noisy_shift(bayes_error) } else { 0.0 };
                    NOISY_MEAN + shift + noise.sample(&mut rng)
                }
            };
            let dur: f64 = rng.random_range(0.0..5.0);
            let stime = STIME_BASE + i as u64;
            let u: f64 = rng.random();
            let proto = if u < PROTOS[0].1 {
                PROTOS[0].0
            } else if u < PROTOS[0].1 + PROTOS[1].1 {
                PROTOS[1].0
            } else {
                PROTOS[2].0
            };
            let cells = [
                ("srcip", format!("59.166.0.{}", rng.random_range(0..10))),
                ("sport", rng.random_range(1024..=65535u32).to_string()),
                ("dstip", format!("149.171.126.{}", rng.random_range(0..10))),
                ("dsport", DSPORTS.choose(&mut rng).unwrap().to_string()),
                ("proto", proto.to_string()),
                ("dur", format!("{dur:.6}")),
                ("sttl", TTLS.choose(&mut rng).unwrap().to_string()),
                ("Sload", format!("{sload:.3}")),
                ("Dload", format!("{:.3}", rng.random_range(0.0..2e5))),
                ("Spkts", rng.random_range(1..=100u32).to_string()),
                ("Dpkts", rng.random_range(0..=100u32).to_string()),
                ("Stime", stime.to_string()),
                ("Ltime", (stime + dur as u64).to_string()),
            ];
            let values: BTreeMap<String, String> =
                cells.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
            FlowRecord::new(i, values, label)
        })
        .collect();
    Dataset::new(
        records,
        Profile::synthetic(),
        format!("synthetic n={n} seed={seed} difficulty={difficulty}"),
    )
}
