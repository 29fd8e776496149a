//! Seeded generators for separable synthetic corpora used by tests and
//! example pipelines.
//!
//! Both generators plant a class-identifying token in every positive example
//! (and never elsewhere), which makes the classes linearly separable under
//! the hashing embedding: the planted token contributes a signed bucket
//! pattern unique to its class.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashSet;

use crate::corpus::{SentenceDataset, SentenceExample, SentenceLabel, Taxonomy, Term};

const FILLER_VOCABULARY: [&str; 24] = [
    "market",
    "report",
    "quarterly",
    "revenue",
    "policy",
    "supply",
    "chain",
    "audit",
    "risk",
    "operations",
    "budget",
    "forecast",
    "board",
    "review",
    "disclosure",
    "capital",
    "strategy",
    "portfolio",
    "outlook",
    "filing",
    "segment",
    "guidance",
    "margin",
    "liquidity",
];

/// Sentences whose class is determined by the presence of the token "green":
/// `ceil(n/2)` sentences contain it (sustainable), the rest never do
/// (unsustainable). Filler words come from a fixed business vocabulary that
/// excludes the keyword.
pub fn keyword_sentences(n: usize, seed: u64) -> SentenceDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut examples = Vec::with_capacity(n);
    let mut seen = HashSet::new();
    for i in 0..n {
        let sustainable = i % 2 == 0;
        let text = loop {
            let words = rng.random_range(4..=7);
            let mut tokens: Vec<&str> = (0..words)
                .map(|_| {
                    *FILLER_VOCABULARY
                        .choose(&mut rng)
                        .expect("non-empty vocabulary")
                })
                .collect();
            if sustainable {
                let position = rng.random_range(0..=tokens.len());
                tokens.insert(position, "green");
            }
            let candidate = tokens.join(" ");
            if seen.insert(candidate.clone()) {
                break candidate;
            }
        };
        examples.push(SentenceExample {
            text,
            label: if sustainable {
                SentenceLabel::Sustainable
            } else {
                SentenceLabel::Unsustainable
            },
        });
    }
    SentenceDataset::new(format!("keyword-synthetic-{seed}"), examples)
        .expect("generated sentences satisfy all invariants")
}

/// Taxonomy of `concepts × terms_per` terms where every term of concept `k`
/// contains the token `key{k:02}` and no other concept's key; remaining
/// tokens are shared fillers.
pub fn keyed_taxonomy(concepts: usize, terms_per: usize, seed: u64) -> Taxonomy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<String> = (0..concepts).map(|k| format!("concept-{k:02}")).collect();
    let mut terms = Vec::with_capacity(concepts * terms_per);
    let mut seen = HashSet::new();
    for concept in 0..concepts {
        let key = format!("key{concept:02}");
        for _ in 0..terms_per {
            let text = loop {
                let fillers = rng.random_range(2..=3);
                let mut tokens = vec![key.clone()];
                for _ in 0..fillers {
                    tokens.push(
                        FILLER_VOCABULARY
                            .choose(&mut rng)
                            .expect("non-empty vocabulary")
                            .to_string(),
                    );
                }
                let candidate = tokens.join(" ");
                if seen.insert(candidate.clone()) {
                    break candidate;
                }
            };
            terms.push(Term { text, concept });
        }
    }
    Taxonomy::new(format!("keyed-synthetic-{seed}"), labels, terms)
        .expect("generated taxonomy satisfies all invariants")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keyword_sentences_have_the_requested_shape() {
        let dataset = keyword_sentences(200, 7);
        assert_eq!(dataset.len(), 200);
        assert_eq!(dataset.count(SentenceLabel::Sustainable), 100);
        assert_eq!(dataset.count(SentenceLabel::Unsustainable), 100);
    }

    #[test]
    fn keyword_decides_the_label() {
        let dataset = keyword_sentences(151, 3);
        for example in dataset.examples() {
            let has_keyword = example.text.split_whitespace().any(|t| t == "green");
            let expected = if has_keyword {
                SentenceLabel::Sustainable
            } else {
                SentenceLabel::Unsustainable
            };
            assert_eq!(example.label, expected, "text {:?}", example.text);
        }
    }

    #[test]
    fn keyword_sentences_are_deterministic_per_seed() {
        assert_eq!(
            keyword_sentences(40, 9).examples(),
            keyword_sentences(40, 9).examples()
        );
        assert_ne!(
            keyword_sentences(40, 9).examples(),
            keyword_sentences(40, 10).examples()
        );
    }

    #[test]
    fn keyed_taxonomy_has_one_key_per_concept() {
        let taxonomy = keyed_taxonomy(5, 20, 11);
        assert_eq!(taxonomy.concept_count(), 5);
        assert_eq!(taxonomy.terms().len(), 100);
        for term in taxonomy.terms() {
            let expected_key = format!("key{:02}", term.concept);
            assert!(
                term.text.split_whitespace().any(|t| t == expected_key),
                "term {:?} misses its key",
                term.text
            );
            for other in 0..5 {
                if other != term.concept {
                    let foreign = format!("key{other:02}");
                    assert!(
                        term.text.split_whitespace().all(|t| t != foreign),
                        "term {:?} contains a foreign key",
                        term.text
                    );
                }
            }
        }
    }

    #[test]
    fn keyed_taxonomy_is_deterministic_per_seed() {
        assert_eq!(
            keyed_taxonomy(3, 4, 2).terms(),
            keyed_taxonomy(3, 4, 2).terms()
        );
        assert_ne!(
            keyed_taxonomy(3, 4, 2).terms(),
            keyed_taxonomy(3, 4, 3).terms()
        );
    }
}
