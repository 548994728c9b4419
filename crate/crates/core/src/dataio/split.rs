use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Dataset;
use crate::error::{Error, Result};

/// Disjoint index sets covering a dataset. Indices within a part are ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub parts: Vec<Vec<usize>>,
}

impl Split {
    pub fn train(&self) -> &[usize] {
        self.part(0)
    }

    pub fn validation(&self) -> &[usize] {
        self.part(1)
    }

    pub fn test(&self) -> &[usize] {
        self.part(2)
    }

    fn part(&self, k: usize) -> &[usize] {
        self.parts.get(k).map_or(&[], Vec::as_slice)
    }
}

/// Label-stratified split. Each class is shuffled with `seed` and cut at the
/// rounded cumulative fractions, so per-class counts are as close to
/// proportional as integers allow.
pub fn split(dataset: &Dataset, fractions: &[f64], seed: u64) -> Result<Split> {
    if fractions.is_empty() || fractions.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
        return Err(Error::Config(format!("split fractions must be positive, got {fractions:?}")));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split fractions must sum to 1, got {total}")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts = vec![Vec::new(); fractions.len()];
    for class in [0u8, 1] {
        let mut idx: Vec<usize> = dataset
            .records()
            .iter()
            .enumerate()
            .filter(|(_, r)| r.label == class)
            .map(|(i, _)| i)
            .collect();
        if idx.is_empty() {
            continue;
        }
        idx.shuffle(&mut rng);
        let n = idx.len();
        let mut cum = 0.0;
        let mut start = 0;
        for (k, f) in fractions.iter().enumerate() {
            cum += f;
            let end = if k + 1 == fractions.len() {
                n
            } else {
                ((cum * n as f64).round() as usize).min(n)
            };
            if end == start {
                log::warn!("split part {k} received no records of class {class}");
            }
            parts[k].extend_from_slice(&idx[start..end]);
            start = end;
        }
    }
    for p in &mut parts {
        p.sort_unstable();
    }
    Ok(Split { parts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{FlowRecord, Profile};

    fn dataset(normal: usize, attack: usize) -> Dataset {
        let records = (0..normal + attack)
            .map(|i| FlowRecord::new(i, Default::default(), u8::from(i >= normal)))
            .collect();
        Dataset::new(records, Profile::unsw(), "test").unwrap()
    }

    #[test]
    fn stratified_counts() {
        let ds = dataset(60, 40);
        let s = split(&ds, &[0.8, 0.2], 3).unwrap();
        let count = |part: &[usize], class: u8| part.iter().filter(|&&i| ds.records()[i].label == class).count();
        assert_eq!((count(s.train(), 0), count(s.train(), 1)), (48, 32));
        assert_eq!((count(s.validation(), 0), count(s.validation(), 1)), (12, 8));
        assert!(s.test().is_empty());
    }

    #[test]
    fn partition_and_determinism() {
        let ds = dataset(37, 26);
        let a = split(&ds, &[0.6, 0.2, 0.2], 11).unwrap();
        let b = split(&ds, &[0.6, 0.2, 0.2], 11).unwrap();
        assert_eq!(a, b);
        let mut all: Vec<usize> = a.parts.concat();
        all.sort_unstable();
        assert_eq!(all, (0..63).collect::<Vec<_>>());
        assert_ne!(a, split(&ds, &[0.6, 0.2, 0.2], 12).unwrap());
    }

    #[test]
    fn bad_fractions() {
        let ds = dataset(5, 5);
        assert!(split(&ds, &[0.5, 0.6], 0).is_err());
        assert!(split(&ds, &[1.0, 0.0], 0).is_err());
        assert!(split(&ds, &[], 0).is_err());
    }
}
