//! Corpus ingestion and synthetic desk-scale corpora.

pub mod babi;
pub mod csv;
pub mod synth;

pub use babi::{parse_babi_dialogs, parse_babi_str, write_babi_dialogs, candidates_path};
pub use csv::{load_csv_corpus, write_csv_corpus};
pub use synth::{generate_synthetic_classification, generate_synthetic_dialogs};

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// One classification sample; labels are 0-based internally.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledText {
    pub label: usize,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Speaker {
    User,
    System,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DialogTurn {
    pub speaker: Speaker,
    pub utterance: String,
    /// Knowledge-base lines preceding this turn in the source file.
    pub kb_facts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dialogue {
    pub id: usize,
    pub turns: Vec<DialogTurn>,
}

/// Pool of unique candidate responses for ranking.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSet {
    candidates: Vec<String>,
}

impl CandidateSet {
    /// Deduplicates and sorts for a deterministic ordering.
    pub fn new(mut candidates: Vec<String>) -> Result<Self> {
        candidates.sort();
        candidates.dedup();
        if candidates.is_empty() {
            return Err(Error::InvalidArg("candidate set is empty".into()));
        }
        Ok(CandidateSet { candidates })
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.candidates.iter().map(String::as_str)
    }

    pub fn contains(&self, s: &str) -> bool {
        self.candidates.binary_search_by(|c| c.as_str().cmp(s)).is_ok()
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn as_slice(&self) -> &[String] {
        &self.candidates
    }
}

fn check_fractions(fractions: (f64, f64, f64)) -> Result<()> {
    let sum = fractions.0 + fractions.1 + fractions.2;
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArg(format!(
            "split fractions must sum to 1, got {sum}"
        )));
    }
    if fractions.0 < 0.0 || fractions.1 < 0.0 || fractions.2 < 0.0 {
        return Err(Error::InvalidArg("split fractions must be non-negative".into()));
    }
    Ok(())
}

fn partition_counts(n: usize, fractions: (f64, f64, f64)) -> (usize, usize) {
    let n_train = (fractions.0 * n as f64).round() as usize;
    let n_val = (fractions.1 * n as f64).round() as usize;
    let n_train = n_train.min(n);
    let n_val = n_val.min(n - n_train);
    (n_train, n_val)
}

/// Seeded shuffle + partition, class-stratified.
pub fn split_dataset(
    data: &[LabeledText],
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(Vec<LabeledText>, Vec<LabeledText>, Vec<LabeledText>)> {
    check_fractions(fractions)?;
    let num_classes = data.iter().map(|s| s.label + 1).max().unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for class in 0..num_classes {
        let mut members: Vec<&LabeledText> =
            data.iter().filter(|s| s.label == class).collect();
        members.shuffle(&mut rng);
        let (n_train, n_val) = partition_counts(members.len(), fractions);
        for (i, s) in members.into_iter().enumerate() {
            if i < n_train {
                train.push(s.clone());
            } else if i < n_train + n_val {
                val.push(s.clone());
            } else {
                test.push(s.clone());
            }
        }
    }
    Ok((train, val, test))
}

/// Seeded shuffle + partition for arbitrary items (dialogs etc.).
pub fn split_unstratified<T: Clone>(
    data: &[T],
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    check_fractions(fractions)?;
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (n_train, n_val) = partition_counts(data.len(), fractions);
    let pick = |range: std::ops::Range<usize>| -> Vec<T> {
        idx[range].iter().map(|&i| data[i].clone()).collect()
    };
    Ok((
        pick(0..n_train),
        pick(n_train..n_train + n_val),
        pick(n_train + n_val..data.len()),
    ))
}
