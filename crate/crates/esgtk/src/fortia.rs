//! Published structure of the Fortia ESG datasets, plus deterministic
//! synthetic stand-ins with identical shape.
//!
//! The term texts and sentences of the original datasets are not
//! redistributable, so this module fabricates readable placeholder rows while
//! reproducing the published concept labels and per-class counts exactly.
//! Anything that depends only on dataset shape — split sizes, loaders,
//! end-to-end pipeline runs — exercises the real dimensions through these.

use crate::corpus::{SentenceDataset, SentenceExample, SentenceLabel, Taxonomy, Term};

/// Concept labels of the ESG taxonomy with their published term counts.
pub const TAXONOMY_TERM_COUNTS: [(&str, usize); 24] = [
    ("Audit Oversight", 7),
    ("Biodiversity", 29),
    ("Board Independence", 2),
    ("Board Make-Up", 37),
    ("Carbon factor", 19),
    ("circular economy", 47),
    ("Community", 27),
    ("Emissions", 39),
    ("Employee development", 22),
    ("Employee engagement", 23),
    ("Energy efficiency and renewable energy", 59),
    ("Executive compensation", 32),
    ("Future of work", 18),
    ("Human Rights", 10),
    ("Injury frequency rate", 2),
    ("Injury frequency rate for subcontracted labour", 35),
    ("Product Responsibility", 51),
    (
        "Recruiting and retaining employees (incl. work-life balance)",
        11,
    ),
    ("Share capital", 2),
    ("Shareholder rights", 38),
    ("Sustainable Food & Agriculture", 54),
    ("Sustainable Transport", 46),
    ("Waste management", 16),
    ("Water & waste-water management", 21),
];

/// Total term count across all concepts.
pub const TAXONOMY_TOTAL_TERMS: usize = 647;

/// Published sentence counts as (sustainable, unsustainable).
pub const SENTENCE_COUNTS: (usize, usize) = (1223, 1042);

fn slug(label: &str) -> String {
    let mut out = String::with_capacity(label.len());
    let mut pending_space = false;
    for c in label.chars() {
        if c.is_ascii_alphanumeric() {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.push(c.to_ascii_lowercase());
        } else {
            pending_space = true;
        }
    }
    out
}

const TERM_SHAPES: [&str; 5] = ["measure", "policy", "program", "metric", "initiative"];

/// Taxonomy with the published concepts and per-concept counts, filled with
/// deterministic placeholder terms.
pub fn synthetic_taxonomy() -> Taxonomy {
    let concepts: Vec<String> = TAXONOMY_TERM_COUNTS
        .iter()
        .map(|&(label, _)| label.to_string())
        .collect();
    let mut terms = Vec::with_capacity(TAXONOMY_TOTAL_TERMS);
    for (concept, &(label, count)) in TAXONOMY_TERM_COUNTS.iter().enumerate() {
        let base = slug(label);
        for i in 0..count {
            let shape = TERM_SHAPES[i % TERM_SHAPES.len()];
            terms.push(Term {
                text: format!("{base} {shape} {:02}", i / TERM_SHAPES.len() + 1),
                concept,
            });
        }
    }
    Taxonomy::new("fortia-esg-synthetic", concepts, terms)
        .expect("synthetic taxonomy satisfies all invariants")
}

/// Label multiset of [`synthetic_taxonomy`]: one concept index per term.
pub fn taxonomy_label_multiset() -> Vec<usize> {
    let mut labels = Vec::with_capacity(TAXONOMY_TOTAL_TERMS);
    for (concept, &(_, count)) in TAXONOMY_TERM_COUNTS.iter().enumerate() {
        labels.extend(std::iter::repeat_n(concept, count));
    }
    labels
}

/// Sentence dataset with the published 1223/1042 class balance, alternating
/// labels while both remain, filled with deterministic placeholder text.
pub fn synthetic_sentences() -> SentenceDataset {
    let (sustainable, unsustainable) = SENTENCE_COUNTS;
    let mut examples = Vec::with_capacity(sustainable + unsustainable);
    let mut s = 0usize;
    let mut u = 0usize;
    while s < sustainable || u < unsustainable {
        if s < sustainable && (s <= u || u >= unsustainable) {
            examples.push(SentenceExample {
                text: format!("renewable investment disclosure {s:04}"),
                label: SentenceLabel::Sustainable,
            });
            s += 1;
        } else {
            examples.push(SentenceExample {
                text: format!("regulatory breach disclosure {u:04}"),
                label: SentenceLabel::Unsustainable,
            });
            u += 1;
        }
    }
    SentenceDataset::new("fortia-sentences-synthetic", examples)
        .expect("synthetic sentences satisfy all invariants")
}

/// Stand-in for the unpublished in-house extension taxonomy: 65 terms across
/// 22 of the published concepts, disjoint from [`synthetic_taxonomy`] terms
/// so the two merge without conflicts.
pub fn synthetic_inhouse_taxonomy() -> Taxonomy {
    let shared = &TAXONOMY_TERM_COUNTS[..22];
    let concepts: Vec<String> = shared.iter().map(|&(label, _)| label.to_string()).collect();
    let mut terms = Vec::with_capacity(65);
    for (concept, &(label, _)) in shared.iter().enumerate() {
        let base = slug(label);
        let count = if concept == shared.len() - 1 { 2 } else { 3 };
        for i in 0..count {
            terms.push(Term {
                text: format!("inhouse {base} signal {:02}", i + 1),
                concept,
            });
        }
    }
    Taxonomy::new("inhouse-esg-synthetic", concepts, terms)
        .expect("synthetic in-house taxonomy satisfies all invariants")
}
