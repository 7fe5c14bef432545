//! Synthetic desk-scale corpora.
//!
//! Classification samples carry class-specific keywords inside shared filler
//! text, so a keyword-presence classifier is 100% accurate by construction.
//! Dialogs mimic restaurant-information requests with delexicalized tokens.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::{CandidateSet, DialogTurn, Dialogue, LabeledText, Speaker};

/// Keyword vocabularies, one per class. Classes 0 and 1 double as a
/// negative/positive sentiment pair. None of these words appear in fillers.
pub const CLASS_KEYWORDS: [[&str; 4]; 10] = [
    ["terrible", "awful", "dreadful", "horrid"],
    ["excellent", "superb", "wonderful", "delightful"],
    ["stadium", "league", "athlete", "tournament"],
    ["galaxy", "telescope", "asteroid", "cosmos"],
    ["market", "invest", "profit", "dividend"],
    ["violin", "melody", "concert", "orchestra"],
    ["harvest", "tractor", "orchard", "pasture"],
    ["voltage", "circuit", "resistor", "capacitor"],
    ["glacier", "monsoon", "drought", "humidity"],
    ["senate", "ballot", "mayor", "treaty"],
];

const FILLERS: [&str; 8] = [
    "today", "again", "soon", "nearby", "often", "still", "later", "now",
];

const CONNECTORS: [&str; 6] = [
    "the review said", "people noted", "a friend wrote", "the post read",
    "someone added", "they told us",
];

/// Deterministic per seed; each sample mentions two class keywords twice.
pub fn generate_synthetic_classification(
    num_classes: usize,
    samples_per_class: usize,
    seed: u64,
) -> Result<Vec<LabeledText>> {
    if num_classes < 2 {
        return Err(Error::InvalidArg("need at least 2 classes".into()));
    }
    if num_classes > CLASS_KEYWORDS.len() {
        return Err(Error::InvalidArg(format!(
            "at most {} classes supported",
            CLASS_KEYWORDS.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(num_classes * samples_per_class);
    for class in 0..num_classes {
        let vocab = &CLASS_KEYWORDS[class];
        for _ in 0..samples_per_class {
            let a = vocab[rng.gen_range(0..vocab.len())];
            let b = loop {
                let w = vocab[rng.gen_range(0..vocab.len())];
                if w != a {
                    break w;
                }
            };
            let f1 = FILLERS[rng.gen_range(0..FILLERS.len())];
            let f2 = FILLERS[rng.gen_range(0..FILLERS.len())];
            let conn = CONNECTORS[rng.gen_range(0..CONNECTORS.len())];
            let text = format!("{a} and {b} {f1}. {conn} {a} {f2}. so {b} it is");
            out.push(LabeledText { label: class, text });
        }
    }
    Ok(out)
}

/// Classify by keyword presence; the oracle for the generator above.
pub fn keyword_oracle(text: &str, num_classes: usize) -> Option<usize> {
    (0..num_classes).find(|&c| CLASS_KEYWORDS[c].iter().any(|kw| text.contains(kw)))
}

fn phone_response(name: &str) -> String {
    format!("here is {name}_phone")
}
fn address_response(name: &str) -> String {
    format!("here is {name}_address")
}

/// Task-4-style dialogs: a KB block for one restaurant, then a request for
/// its phone or address answered with the matching delexicalized token.
pub fn generate_synthetic_dialogs(
    num_dialogs: usize,
    num_restaurants: usize,
    seed: u64,
) -> Result<(Vec<Dialogue>, CandidateSet)> {
    if num_restaurants < 2 {
        return Err(Error::InvalidArg("need at least 2 restaurants".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dialogs = Vec::with_capacity(num_dialogs);
    for id in 0..num_dialogs {
        let r = rng.gen_range(1..=num_restaurants);
        let name = format!("resto{r}");
        let rating = rng.gen_range(1..=8u32);
        let kb_facts = vec![
            format!("{name} R_phone {name}_phone"),
            format!("{name} R_address {name}_address"),
            format!("{name} R_rating {rating}"),
        ];
        let want_phone: bool = rng.gen();
        let (request, gold) = if want_phone {
            (format!("phone of {name}"), phone_response(&name))
        } else {
            (format!("address of {name}"), address_response(&name))
        };
        dialogs.push(Dialogue {
            id,
            turns: vec![
                DialogTurn {
                    speaker: Speaker::User,
                    utterance: request,
                    kb_facts,
                },
                DialogTurn {
                    speaker: Speaker::System,
                    utterance: gold,
                    kb_facts: Vec::new(),
                },
            ],
        });
    }
    let mut candidates = Vec::with_capacity(2 * num_restaurants);
    for r in 1..=num_restaurants {
        let name = format!("resto{r}");
        candidates.push(phone_response(&name));
        candidates.push(address_response(&name));
    }
    candidates.shuffle(&mut rng); // CandidateSet sorts anyway
    Ok((dialogs, CandidateSet::new(candidates)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_counts_and_determinism() {
        let a = generate_synthetic_classification(2, 100, 7).unwrap();
        assert_eq!(a.len(), 200);
        for class in 0..2 {
            assert_eq!(a.iter().filter(|s| s.label == class).count(), 100);
        }
        let b = generate_synthetic_classification(2, 100, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn keyword_oracle_scores_perfectly() {
        let corpus = generate_synthetic_classification(4, 50, 13).unwrap();
        for s in &corpus {
            assert_eq!(keyword_oracle(&s.text, 4), Some(s.label), "{:?}", s.text);
        }
    }

    #[test]
    fn keywords_never_leak_across_classes() {
        let corpus = generate_synthetic_classification(4, 50, 99).unwrap();
        for s in &corpus {
            for (c, vocab) in CLASS_KEYWORDS.iter().enumerate().take(4) {
                if c != s.label {
                    for kw in vocab {
                        assert!(!s.text.contains(kw), "{kw} leaked into {:?}", s.text);
                    }
                }
            }
        }
    }

    #[test]
    fn every_gold_response_is_a_candidate() {
        let (dialogs, candidates) = generate_synthetic_dialogs(200, 10, 5).unwrap();
        assert!(candidates.len() >= 20);
        for d in &dialogs {
            for t in &d.turns {
                if t.speaker == Speaker::System {
                    assert!(candidates.contains(&t.utterance), "{:?}", t.utterance);
                }
            }
        }
    }

    #[test]
    fn ratings_are_roughly_uniform_over_1_to_8() {
        let (dialogs, _) = generate_synthetic_dialogs(1000, 5, 11).unwrap();
        let mut counts = [0usize; 8];
        for d in &dialogs {
            let fact = &d.turns[0].kb_facts[2];
            let rating: usize = fact.rsplit(' ').next().unwrap().parse().unwrap();
            counts[rating - 1] += 1;
        }
        let expected = 1000.0 / 8.0;
        let chi2: f64 = counts
            .iter()
            .map(|&o| {
                let d = o as f64 - expected;
                d * d / expected
            })
            .sum();
        // df = 7; 24.3 is the 0.999 quantile.
        assert!(chi2 < 24.3, "chi2 = {chi2}, counts = {counts:?}");
    }

    #[test]
    fn dialog_generator_is_deterministic() {
        let a = generate_synthetic_dialogs(50, 4, 3).unwrap();
        let b = generate_synthetic_dialogs(50, 4, 3).unwrap();
        assert_eq!(a, b);
    }
}
