//! Metrics (accuracy, mean rank), seeded stratified splitting, and
//! evaluation reports for both classification tasks.
//!
//! Splitting apportions each class's train share by largest remainder around
//! `ratio·n_c`, then nudges allocations so the global train size is exactly
//! `floor(ratio·N)` while every class with at least two members keeps at
//! least one example on each side. Within a class, membership is decided by a
//! ChaCha8 shuffle seeded solely from `seed`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::concept::{ConceptError, ConceptModel};
use crate::corpus::{SentenceDataset, SentenceLabel};
use crate::embedding::{EmbeddingError, TextEmbedder};
use crate::sustainability::{SentenceModel, SustainabilityError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("need equal non-empty prediction and gold lists, got {predictions} and {golds}")]
    LengthMismatch { predictions: usize, golds: usize },
    #[error("cannot evaluate an empty sample list")]
    Empty,
    #[error("gold label {gold:?} missing from the ranking of sample {sample}")]
    GoldMissing { sample: usize, gold: String },
    #[error("split ratio must be strictly between 0 and 1, got {ratio}")]
    InvalidRatio { ratio: f64 },
    #[error(
        "no split satisfies the constraints: target train size {target} outside \
         the feasible range [{lower}, {upper}]"
    )]
    InfeasibleSplit {
        target: usize,
        lower: usize,
        upper: usize,
    },
    #[error("model was trained with backend {expected}, evaluation uses {actual}")]
    BackendMismatch { expected: String, actual: String },
    #[error(transparent)]
    Concept(#[from] ConceptError),
    #[error(transparent)]
    Sustainability(#[from] SustainabilityError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("failed to access {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("report file {path}: {reason}")]
    Schema { path: String, reason: String },
}

/// Fraction of samples whose prediction equals the gold label.
pub fn accuracy(predictions: &[usize], golds: &[usize]) -> Result<f64, EvalError> {
    if predictions.is_empty() || predictions.len() != golds.len() {
        if predictions.is_empty() && golds.is_empty() {
            return Err(EvalError::Empty);
        }
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            golds: golds.len(),
        });
    }
    let correct = predictions
        .iter()
        .zip(golds)
        .filter(|(p, g)| p == g)
        .count();
    Ok(correct as f64 / predictions.len() as f64)
}

/// Mean over samples of the 1-based position of the gold label in its
/// ranking; 1.0 means every gold was ranked first.
pub fn mean_rank(rankings: &[Vec<String>], golds: &[String]) -> Result<f64, EvalError> {
    if rankings.is_empty() || rankings.len() != golds.len() {
        if rankings.is_empty() && golds.is_empty() {
            return Err(EvalError::Empty);
        }
        return Err(EvalError::LengthMismatch {
            predictions: rankings.len(),
            golds: golds.len(),
        });
    }
    let mut total = 0.0;
    for (sample, (ranking, gold)) in rankings.iter().zip(golds).enumerate() {
        let position = ranking
            .iter()
            .position(|label| label == gold)
            .ok_or_else(|| EvalError::GoldMissing {
                sample,
                gold: gold.clone(),
            })?;
        total += (position + 1) as f64;
    }
    Ok(total / rankings.len() as f64)
}

/// A train/dev partition of `0..n`: disjoint, sorted index lists whose union
/// covers every index exactly once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub train_indices: Vec<usize>,
    pub dev_indices: Vec<usize>,
    pub ratio: f64,
    pub seed: u64,
}

/// Seeded stratified split with `|train| = floor(ratio·N)` exactly.
pub fn stratified_split(labels: &[usize], ratio: f64, seed: u64) -> Result<SplitResult, EvalError> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    if !(ratio.is_finite() && 0.0 < ratio && ratio < 1.0) {
        return Err(EvalError::InvalidRatio { ratio });
    }
    if labels.is_empty() {
        return Err(EvalError::Empty);
    }

    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (index, &label) in labels.iter().enumerate() {
        by_class.entry(label).or_default().push(index);
    }
    let target = (ratio * labels.len() as f64).floor() as usize;

    struct Allocation {
        members: Vec<usize>,
        exact: f64,
        train: usize,
        lower: usize,
        upper: usize,
    }
    let mut allocations: Vec<Allocation> = by_class
        .into_values()
        .map(|members| {
            let n = members.len();
            let exact = ratio * n as f64;
            let (lower, upper) = if n >= 2 { (1, n - 1) } else { (0, n) };
            let train = (exact.floor() as usize).clamp(lower, upper);
            Allocation {
                members,
                exact,
                train,
                lower,
                upper,
            }
        })
        .collect();

    let lower_sum: usize = allocations.iter().map(|a| a.lower).sum();
    let upper_sum: usize = allocations.iter().map(|a| a.upper).sum();
    if target < lower_sum || target > upper_sum {
        return Err(EvalError::InfeasibleSplit {
            target,
            lower: lower_sum,
            upper: upper_sum,
        });
    }

    // Largest-remainder adjustment toward the exact global train size: grow
    // the most under-target class (or shrink the most over-target one) until
    // the sum lands on the target, never crossing a per-class bound.
    let mut allocated: usize = allocations.iter().map(|a| a.train).sum();
    while allocated < target {
        let next = allocations
            .iter_mut()
            .filter(|a| a.train < a.upper)
            .max_by(|a, b| (a.exact - a.train as f64).total_cmp(&(b.exact - b.train as f64)))
            .expect("feasibility was checked against the bound sums");
        next.train += 1;
        allocated += 1;
    }
    while allocated > target {
        let next = allocations
            .iter_mut()
            .filter(|a| a.train > a.lower)
            .max_by(|a, b| (a.train as f64 - a.exact).total_cmp(&(b.train as f64 - b.exact)))
            .expect("feasibility was checked against the bound sums");
        next.train -= 1;
        allocated -= 1;
    }

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut train_indices = Vec::with_capacity(target);
    let mut dev_indices = Vec::with_capacity(labels.len() - target);
    for allocation in &mut allocations {
        allocation.members.shuffle(&mut rng);
        train_indices.extend_from_slice(&allocation.members[..allocation.train]);
        dev_indices.extend_from_slice(&allocation.members[allocation.train..]);
    }
    train_indices.sort_unstable();
    dev_indices.sort_unstable();
    Ok(SplitResult {
        train_indices,
        dev_indices,
        ratio,
        seed,
    })
}

/// Which task a report describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Taxonomy,
    Sustainability,
}

/// Per-class sample count and number of correct predictions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassOutcome {
    pub support: usize,
    pub correct: usize,
}

/// Evaluation results for one model on one dataset. `mean_rank` is present
/// exactly for taxonomy reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Task,
    pub accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_rank: Option<f64>,
    pub n_samples: usize,
    pub per_class: BTreeMap<String, ClassOutcome>,
    pub config_fingerprint: String,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(json: &str, origin: &str) -> Result<Self, EvalError> {
        serde_json::from_str(json).map_err(|e| EvalError::Schema {
            path: origin.to_string(),
            reason: e.to_string(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EvalError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|source| EvalError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Hex SHA-256 over the backend id and training configuration, making every
/// report attributable to the run that produced its model.
pub fn config_fingerprint(backend_id: &str, train_config: &impl Serialize) -> String {
    let payload = serde_json::json!({
        "backend_id": backend_id,
        "train_config": train_config,
    });
    let mut hasher = Sha256::new();
    hasher.update(payload.to_string().as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn per_class_outcomes<'a>(
    golds: impl Iterator<Item = &'a str>,
    hits: impl Iterator<Item = bool>,
) -> BTreeMap<String, ClassOutcome> {
    let mut per_class: BTreeMap<String, ClassOutcome> = BTreeMap::new();
    for (gold, hit) in golds.zip(hits) {
        let outcome = per_class.entry(gold.to_string()).or_insert(ClassOutcome {
            support: 0,
            correct: 0,
        });
        outcome.support += 1;
        if hit {
            outcome.correct += 1;
        }
    }
    per_class
}

/// Evaluate a concept model on labeled terms: accuracy over argmax
/// predictions, mean rank over full rankings.
pub fn evaluate_taxonomy_model(
    model: &ConceptModel,
    backend: &dyn TextEmbedder,
    terms: &[String],
    golds: &[String],
) -> Result<EvalReport, EvalError> {
    if terms.is_empty() && golds.is_empty() {
        return Err(EvalError::Empty);
    }
    if terms.len() != golds.len() {
        return Err(EvalError::LengthMismatch {
            predictions: terms.len(),
            golds: golds.len(),
        });
    }
    if backend.id() != model.backend_id() {
        return Err(EvalError::BackendMismatch {
            expected: model.backend_id().to_string(),
            actual: backend.id().to_string(),
        });
    }
    let class_index: BTreeMap<&str, usize> = model
        .concept_labels()
        .iter()
        .enumerate()
        .map(|(i, label)| (label.as_str(), i))
        .collect();
    let mut rankings = Vec::with_capacity(terms.len());
    let mut predictions = Vec::with_capacity(terms.len());
    let mut gold_indices = Vec::with_capacity(terms.len());
    for (sample, (term, gold)) in terms.iter().zip(golds).enumerate() {
        let gold_index = *class_index
            .get(gold.as_str())
            .ok_or_else(|| EvalError::GoldMissing {
                sample,
                gold: gold.clone(),
            })?;
        let embedding = backend.embed(term)?;
        let ranked = model.rank_concepts(&embedding)?;
        predictions.push(class_index[ranked[0].0.as_str()]);
        gold_indices.push(gold_index);
        rankings.push(ranked.into_iter().map(|(label, _)| label).collect());
    }
    let accuracy_value = accuracy(&predictions, &gold_indices)?;
    let mean_rank_value = mean_rank(&rankings, golds)?;
    let hits = predictions.iter().zip(&gold_indices).map(|(p, g)| p == g);
    let per_class = per_class_outcomes(golds.iter().map(|g| g.as_str()), hits);
    Ok(EvalReport {
        task: Task::Taxonomy,
        accuracy: accuracy_value,
        mean_rank: Some(mean_rank_value),
        n_samples: terms.len(),
        per_class,
        config_fingerprint: config_fingerprint(model.backend_id(), model.train_config()),
    })
}

/// Evaluate a sentence model on a labeled dataset: accuracy only.
pub fn evaluate_sentence_model(
    model: &SentenceModel,
    encoder: &dyn TextEmbedder,
    dataset: &SentenceDataset,
) -> Result<EvalReport, EvalError> {
    if dataset.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut predictions = Vec::with_capacity(dataset.len());
    let golds = dataset.label_indices();
    for example in dataset.examples() {
        let prediction = model.classify(encoder, &example.text)?;
        predictions.push(prediction.label.index());
    }
    let accuracy_value = accuracy(&predictions, &golds)?;
    let hits = predictions.iter().zip(&golds).map(|(p, g)| p == g);
    let per_class = per_class_outcomes(
        golds.iter().map(|&g| {
            SentenceLabel::from_index(g)
                .expect("dataset labels are valid")
                .as_str()
        }),
        hits,
    );
    Ok(EvalReport {
        task: Task::Sustainability,
        accuracy: accuracy_value,
        mean_rank: None,
        n_samples: dataset.len(),
        per_class,
        config_fingerprint: config_fingerprint(model.backend_id(), model.fit_config()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::concept::{fit, TrainConfig};
    use crate::corpus::SentenceExample;
    use crate::embedding::HashingEmbedder;
    use crate::fortia;
    use crate::sustainability::{FeedForwardHead, FitConfig};
    use crate::synthetic;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perfect_predictions_give_accuracy_one() {
        assert_eq!(accuracy(&[3, 1, 4, 1], &[3, 1, 4, 1]).unwrap(), 1.0);
    }

    #[test]
    fn accuracy_counts_matches_directly() {
        let value = accuracy(&[1, 0, 1], &[1, 1, 1]).unwrap();
        assert!((value - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn accuracy_rejects_mismatched_lengths() {
        assert!(matches!(
            accuracy(&[1, 2], &[1]),
            Err(EvalError::LengthMismatch { .. })
        ));
        assert!(matches!(accuracy(&[], &[]), Err(EvalError::Empty)));
    }

    /// Independent position-by-position counting oracle.
    fn accuracy_oracle(predictions: &[usize], golds: &[usize]) -> f64 {
        let mut correct = 0usize;
        for i in 0..predictions.len() {
            if predictions[i] == golds[i] {
                correct += 1;
            }
        }
        correct as f64 / predictions.len() as f64
    }

    #[test]
    fn accuracy_matches_brute_force_oracle_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(100);
        for _ in 0..1000 {
            let k = [2usize, 5, 24][rng.random_range(0..3)];
            let n = rng.random_range(1..=500);
            let predictions: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
            let golds: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
            let value = accuracy(&predictions, &golds).unwrap();
            let oracle = accuracy_oracle(&predictions, &golds);
            assert_eq!(value.to_bits(), oracle.to_bits());
        }
    }

    fn ranking_of(labels: &[&str]) -> Vec<String> {
        labels.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn all_golds_first_give_mean_rank_one() {
        let rankings = vec![ranking_of(&["a", "b"]), ranking_of(&["c", "a"])];
        let golds = vec!["a".to_string(), "c".to_string()];
        assert_eq!(mean_rank(&rankings, &golds).unwrap(), 1.0);
    }

    #[test]
    fn mean_rank_averages_positions() {
        let rankings = vec![
            ranking_of(&["a", "b", "c"]),
            ranking_of(&["a", "b", "c"]),
            ranking_of(&["a", "b", "c"]),
        ];
        let golds = vec!["a".to_string(), "c".to_string(), "b".to_string()];
        assert_eq!(mean_rank(&rankings, &golds).unwrap(), 2.0);
    }

    #[test]
    fn missing_gold_names_the_sample() {
        let rankings = vec![ranking_of(&["a", "b"]), ranking_of(&["a", "b"])];
        let golds = vec!["a".to_string(), "z".to_string()];
        let err = mean_rank(&rankings, &golds).unwrap_err();
        assert_eq!(
            err.to_string(),
            "gold label \"z\" missing from the ranking of sample 1"
        );
    }

    /// Independent rank oracle: count labels strictly before the gold.
    fn rank_oracle(ranking: &[String], gold: &str) -> Option<usize> {
        for (before, label) in ranking.iter().enumerate() {
            if label == gold {
                return Some(before + 1);
            }
        }
        None
    }

    #[test]
    fn mean_rank_matches_brute_force_oracle_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(200);
        for _ in 0..1000 {
            let k = rng.random_range(2..30);
            let n = rng.random_range(1..60);
            let labels: Vec<String> = (0..k).map(|i| format!("label-{i}")).collect();
            let mut rankings = Vec::with_capacity(n);
            let mut golds = Vec::with_capacity(n);
            for _ in 0..n {
                use rand::seq::SliceRandom;
                let mut ranking = labels.clone();
                ranking.shuffle(&mut rng);
                golds.push(labels[rng.random_range(0..k)].clone());
                rankings.push(ranking);
            }
            let value = mean_rank(&rankings, &golds).unwrap();
            let oracle_total: usize = rankings
                .iter()
                .zip(&golds)
                .map(|(ranking, gold)| rank_oracle(ranking, gold).unwrap())
                .sum();
            let oracle = oracle_total as f64 / n as f64;
            assert_eq!(value.to_bits(), oracle.to_bits());
        }
    }

    #[test]
    fn random_rankings_average_near_the_uniform_expectation() {
        let mut rng = ChaCha8Rng::seed_from_u64(300);
        let k = 24;
        let labels: Vec<String> = (0..k).map(|i| format!("label-{i}")).collect();
        let mut rankings = Vec::with_capacity(10_000);
        let mut golds = Vec::with_capacity(10_000);
        for _ in 0..10_000 {
            use rand::seq::SliceRandom;
            let mut ranking = labels.clone();
            ranking.shuffle(&mut rng);
            golds.push(labels[rng.random_range(0..k)].clone());
            rankings.push(ranking);
        }
        let value = mean_rank(&rankings, &golds).unwrap();
        assert!((value - 12.5).abs() < 0.5, "mean rank {value}");
    }

    #[test]
    fn split_reproduces_published_taxonomy_sizes_for_many_seeds() {
        let labels = fortia::taxonomy_label_multiset();
        for seed in 0..25 {
            let split = stratified_split(&labels, 0.7, seed).unwrap();
            assert_eq!(split.train_indices.len(), 452, "seed {seed}");
            assert_eq!(split.dev_indices.len(), 195, "seed {seed}");
        }
    }

    #[test]
    fn split_reproduces_published_sentence_sizes_for_many_seeds() {
        let dataset = fortia::synthetic_sentences();
        let labels = dataset.label_indices();
        for seed in 0..25 {
            let split = stratified_split(&labels, 0.7, seed).unwrap();
            assert_eq!(split.train_indices.len(), 1585, "seed {seed}");
            assert_eq!(split.dev_indices.len(), 680, "seed {seed}");
        }
    }

    #[test]
    fn two_member_classes_land_on_both_sides() {
        // Three 2-member classes plus filler, mirroring the published shape.
        let labels = [0, 0, 1, 1, 2, 2, 3, 3, 3, 3, 3, 3, 3, 3, 3, 3];
        for seed in 0..10 {
            let split = stratified_split(&labels, 0.7, seed).unwrap();
            for class in 0..3 {
                let members: Vec<usize> = labels
                    .iter()
                    .enumerate()
                    .filter(|&(_, &l)| l == class)
                    .map(|(i, _)| i)
                    .collect();
                let in_train = members
                    .iter()
                    .filter(|i| split.train_indices.binary_search(i).is_ok())
                    .count();
                assert_eq!(in_train, 1, "class {class}, seed {seed}");
            }
        }
    }

    #[test]
    fn split_partitions_the_index_set() {
        let labels = fortia::taxonomy_label_multiset();
        let split = stratified_split(&labels, 0.7, 42).unwrap();
        let mut all: Vec<usize> = split
            .train_indices
            .iter()
            .chain(&split.dev_indices)
            .copied()
            .collect();
        all.sort_unstable();
        let expected: Vec<usize> = (0..labels.len()).collect();
        assert_eq!(all, expected);
    }

    #[test]
    fn split_is_deterministic_per_seed_and_varies_across_seeds() {
        let labels = fortia::taxonomy_label_multiset();
        let a = stratified_split(&labels, 0.7, 9).unwrap();
        let b = stratified_split(&labels, 0.7, 9).unwrap();
        let c = stratified_split(&labels, 0.7, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.train_indices, c.train_indices);
    }

    #[test]
    fn split_per_class_deviation_stays_below_one_example() {
        let labels = fortia::taxonomy_label_multiset();
        let split = stratified_split(&labels, 0.7, 5).unwrap();
        let counts = fortia::TAXONOMY_TERM_COUNTS;
        for (class, &(_, n)) in counts.iter().enumerate() {
            let members: Vec<usize> = labels
                .iter()
                .enumerate()
                .filter(|&(_, &l)| l == class)
                .map(|(i, _)| i)
                .collect();
            let in_train = members
                .iter()
                .filter(|i| split.train_indices.binary_search(i).is_ok())
                .count();
            let deviation = (in_train as f64 - 0.7 * n as f64).abs();
            assert!(deviation < 1.0, "class {class}: deviation {deviation}");
        }
    }

    #[test]
    fn invalid_ratios_are_rejected() {
        for ratio in [0.0, 1.0, -0.3, 1.7, f64::NAN] {
            assert!(matches!(
                stratified_split(&[0, 0, 1, 1], ratio, 0),
                Err(EvalError::InvalidRatio { .. })
            ));
        }
    }

    #[test]
    fn unsatisfiable_constraints_are_reported() {
        // Ten 3-member classes at ratio 0.7: the target floor(0.7·30) = 21
        // exceeds the per-class maximum of 2 × 10 = 20.
        let labels: Vec<usize> = (0..10).flat_map(|c| [c, c, c]).collect();
        let err = stratified_split(&labels, 0.7, 0).unwrap_err();
        assert!(matches!(err, EvalError::InfeasibleSplit { .. }));
    }

    #[test]
    fn fingerprint_is_stable_and_input_sensitive() {
        let config = TrainConfig::default();
        let a = config_fingerprint("test:64", &config);
        let b = config_fingerprint("test:64", &config);
        let c = config_fingerprint("test:32", &config);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 64);
        assert!(a.chars().all(|ch| ch.is_ascii_hexdigit()));
    }

    fn trained_keyed_model() -> (
        crate::concept::ConceptModel,
        HashingEmbedder,
        Vec<String>,
        Vec<String>,
    ) {
        let taxonomy = synthetic::keyed_taxonomy(5, 20, 11);
        let labels: Vec<usize> = taxonomy.terms().iter().map(|t| t.concept).collect();
        let split = stratified_split(&labels, 0.7, 4).unwrap();
        let backend = HashingEmbedder::new(64, 0).unwrap();
        let train_terms: Vec<String> = split
            .train_indices
            .iter()
            .map(|&i| taxonomy.terms()[i].text.clone())
            .collect();
        let train_labels: Vec<usize> = split.train_indices.iter().map(|&i| labels[i]).collect();
        let embeddings = backend.embed_batch(&train_terms).unwrap();
        let (model, _) = fit(
            &embeddings,
            &train_labels,
            taxonomy.concepts(),
            &TrainConfig::default(),
        )
        .unwrap();
        let dev_terms: Vec<String> = split
            .dev_indices
            .iter()
            .map(|&i| taxonomy.terms()[i].text.clone())
            .collect();
        let dev_golds: Vec<String> = split
            .dev_indices
            .iter()
            .map(|&i| taxonomy.concepts()[labels[i]].clone())
            .collect();
        (model, backend, dev_terms, dev_golds)
    }

    /// Nearest-centroid check: with concept-keyed tokens the class centroids
    /// classify their own members almost perfectly, so the corpus really is
    /// separable before we assert anything about the trained model.
    #[test]
    fn keyed_corpus_is_separable_by_nearest_centroid() {
        let taxonomy = synthetic::keyed_taxonomy(5, 20, 11);
        let backend = HashingEmbedder::new(64, 0).unwrap();
        let texts: Vec<String> = taxonomy.terms().iter().map(|t| t.text.clone()).collect();
        let embeddings = backend.embed_batch(&texts).unwrap();
        let mut centroids = vec![vec![0.0; 64]; 5];
        let mut counts = vec![0usize; 5];
        for (term, row) in taxonomy.terms().iter().zip(embeddings.rows()) {
            counts[term.concept] += 1;
            for (c, v) in centroids[term.concept].iter_mut().zip(row) {
                *c += v;
            }
        }
        for (centroid, count) in centroids.iter_mut().zip(&counts) {
            for v in centroid.iter_mut() {
                *v /= *count as f64;
            }
        }
        let mut correct = 0usize;
        for (term, row) in taxonomy.terms().iter().zip(embeddings.rows()) {
            let nearest = (0..5)
                .max_by(|&a, &b| {
                    let sa: f64 = centroids[a].iter().zip(row).map(|(c, v)| c * v).sum();
                    let sb: f64 = centroids[b].iter().zip(row).map(|(c, v)| c * v).sum();
                    sa.total_cmp(&sb)
                })
                .unwrap();
            if nearest == term.concept {
                correct += 1;
            }
        }
        let fraction = correct as f64 / taxonomy.terms().len() as f64;
        assert!(fraction >= 0.9, "nearest-centroid agreement {fraction}");
    }

    #[test]
    fn keyed_corpus_evaluates_to_strong_held_out_scores() {
        let (model, backend, dev_terms, dev_golds) = trained_keyed_model();
        let report = evaluate_taxonomy_model(&model, &backend, &dev_terms, &dev_golds).unwrap();
        assert!(report.accuracy >= 0.9, "accuracy {}", report.accuracy);
        let rank = report.mean_rank.unwrap();
        assert!(rank <= 1.3, "mean rank {rank}");
        assert_eq!(report.task, Task::Taxonomy);
        assert_eq!(report.n_samples, dev_terms.len());
    }

    #[test]
    fn taxonomy_report_is_internally_consistent() {
        let (model, backend, dev_terms, dev_golds) = trained_keyed_model();
        let report = evaluate_taxonomy_model(&model, &backend, &dev_terms, &dev_golds).unwrap();
        let support: usize = report.per_class.values().map(|o| o.support).sum();
        let correct: usize = report.per_class.values().map(|o| o.correct).sum();
        assert_eq!(support, report.n_samples);
        assert!((report.accuracy - correct as f64 / support as f64).abs() < 1e-12);
    }

    #[test]
    fn taxonomy_accuracy_agrees_with_top_ranked_labels() {
        let (model, backend, dev_terms, dev_golds) = trained_keyed_model();
        let report = evaluate_taxonomy_model(&model, &backend, &dev_terms, &dev_golds).unwrap();
        let mut correct = 0usize;
        for (term, gold) in dev_terms.iter().zip(&dev_golds) {
            let embedding = backend.embed(term).unwrap();
            let ranked = model.rank_concepts(&embedding).unwrap();
            if &ranked[0].0 == gold {
                correct += 1;
            }
        }
        let recomputed = correct as f64 / dev_terms.len() as f64;
        assert_eq!(report.accuracy.to_bits(), recomputed.to_bits());
    }

    #[test]
    fn uniform_model_mean_rank_follows_the_tie_break_oracle() {
        let concepts: Vec<String> = (0..6).map(|i| format!("concept {i}")).collect();
        let model = crate::concept::ConceptModel::from_parts(
            concepts.clone(),
            8,
            vec![0.0; 6 * 8],
            vec![0.0; 6],
            "test:8".to_string(),
            TrainConfig::default(),
        )
        .unwrap();
        let backend = HashingEmbedder::new(8, 0).unwrap();
        let terms: Vec<String> = (0..12).map(|i| format!("term number {i}")).collect();
        let golds: Vec<String> = (0..12).map(|i| concepts[i % 6].clone()).collect();
        let report = evaluate_taxonomy_model(&model, &backend, &terms, &golds).unwrap();
        // Uniform probabilities rank by ascending index, so each gold's rank
        // is its concept index + 1.
        let expected: f64 = golds
            .iter()
            .map(|g| (concepts.iter().position(|c| c == g).unwrap() + 1) as f64)
            .sum::<f64>()
            / golds.len() as f64;
        assert_eq!(report.mean_rank.unwrap().to_bits(), expected.to_bits());
    }

    #[test]
    fn evaluation_with_the_wrong_backend_is_rejected() {
        let (model, _, dev_terms, dev_golds) = trained_keyed_model();
        let other = HashingEmbedder::new(64, 9).unwrap();
        let err = evaluate_taxonomy_model(&model, &other, &dev_terms, &dev_golds).unwrap_err();
        assert!(matches!(err, EvalError::BackendMismatch { .. }));
    }

    #[test]
    fn unknown_gold_label_is_rejected_with_its_sample() {
        let (model, backend, dev_terms, mut dev_golds) = trained_keyed_model();
        dev_golds[2] = "no such concept".to_string();
        let err = evaluate_taxonomy_model(&model, &backend, &dev_terms, &dev_golds).unwrap_err();
        assert!(err.to_string().contains("sample 2"), "{err}");
    }

    #[test]
    fn perfect_sentence_model_scores_one() {
        let dataset = synthetic::keyword_sentences(80, 5);
        let encoder = HashingEmbedder::new(64, 0).unwrap();
        let config = FitConfig {
            learning_rate: 0.5,
            ..FitConfig::default()
        };
        let (model, _) = crate::sustainability::train(
            &dataset,
            crate::sustainability::EncoderBinding::Frozen(&encoder),
            &config,
        )
        .unwrap();
        let report = evaluate_sentence_model(&model, &encoder, &dataset).unwrap();
        assert_eq!(report.task, Task::Sustainability);
        assert_eq!(report.mean_rank, None);
        assert!(report.accuracy >= 0.95, "accuracy {}", report.accuracy);
    }

    #[test]
    fn constant_sustainable_model_reproduces_class_balance_accuracy() {
        let dataset = fortia::synthetic_sentences();
        let encoder = HashingEmbedder::new(16, 0).unwrap();
        // Output bias pushes every sentence toward `sustainable`.
        let head = FeedForwardHead::from_parts(
            16,
            2,
            vec![0.0; 32],
            vec![0.0; 2],
            vec![0.0; 4],
            vec![0.0, 5.0],
        )
        .unwrap();
        let model = crate::sustainability::SentenceModel::from_parts(
            head,
            encoder.id().to_string(),
            FitConfig::default(),
        );
        let report = evaluate_sentence_model(&model, &encoder, &dataset).unwrap();
        assert_eq!(report.accuracy, 1223.0 / 2265.0);
        let sustainable = &report.per_class["sustainable"];
        assert_eq!(sustainable.support, 1223);
        assert_eq!(sustainable.correct, 1223);
        let unsustainable = &report.per_class["unsustainable"];
        assert_eq!(unsustainable.support, 1042);
        assert_eq!(unsustainable.correct, 0);
    }

    #[test]
    fn sentence_report_accuracy_agrees_with_the_metric() {
        let dataset = synthetic::keyword_sentences(60, 8);
        let encoder = HashingEmbedder::new(32, 0).unwrap();
        let (model, _) = crate::sustainability::train(
            &dataset,
            crate::sustainability::EncoderBinding::Frozen(&encoder),
            &FitConfig::default(),
        )
        .unwrap();
        let report = evaluate_sentence_model(&model, &encoder, &dataset).unwrap();
        let predictions: Vec<usize> = dataset
            .examples()
            .iter()
            .map(|e| model.classify(&encoder, &e.text).unwrap().label.index())
            .collect();
        let recomputed = accuracy(&predictions, &dataset.label_indices()).unwrap();
        assert_eq!(report.accuracy.to_bits(), recomputed.to_bits());
    }

    #[test]
    fn report_round_trips_through_json() {
        let (model, backend, dev_terms, dev_golds) = trained_keyed_model();
        let report = evaluate_taxonomy_model(&model, &backend, &dev_terms, &dev_golds).unwrap();
        let restored = EvalReport::from_json(&report.to_json(), "memory").unwrap();
        assert_eq!(report, restored);
    }

    #[test]
    fn sentence_example_round_trip_is_unaffected_by_report_serialization() {
        let example = SentenceExample {
            text: "solar capacity expanded".to_string(),
            label: SentenceLabel::Sustainable,
        };
        assert_eq!(example.label.index(), 1);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn label_vector() -> impl Strategy<Value = Vec<usize>> {
            // 1..6 classes with 2..30 members each, flattened.
            proptest::collection::vec(2usize..30, 1..6).prop_map(|sizes| {
                sizes
                    .iter()
                    .enumerate()
                    .flat_map(|(class, &n)| std::iter::repeat_n(class, n))
                    .collect()
            })
        }

        proptest! {
            #[test]
            fn split_always_partitions_and_hits_the_floor_size(
                labels in label_vector(),
                ratio in 0.55f64..0.75,
                seed in 0u64..1000,
            ) {
                let split = match stratified_split(&labels, ratio, seed) {
                    Ok(split) => split,
                    // Bound conflicts are possible at extreme shapes; they
                    // must surface as this error, never as a bad partition.
                    Err(EvalError::InfeasibleSplit { .. }) => return Ok(()),
                    Err(other) => return Err(TestCaseError::fail(other.to_string())),
                };
                prop_assert_eq!(
                    split.train_indices.len(),
                    (ratio * labels.len() as f64).floor() as usize
                );
                let mut all: Vec<usize> = split
                    .train_indices
                    .iter()
                    .chain(&split.dev_indices)
                    .copied()
                    .collect();
                all.sort_unstable();
                let expected: Vec<usize> = (0..labels.len()).collect();
                prop_assert_eq!(all, expected);
                // Every class with ≥ 2 members keeps one example per side.
                let classes = labels.iter().max().unwrap() + 1;
                for class in 0..classes {
                    let members: Vec<usize> = labels
                        .iter()
                        .enumerate()
                        .filter(|&(_, &l)| l == class)
                        .map(|(i, _)| i)
                        .collect();
                    if members.len() < 2 {
                        continue;
                    }
                    let in_train = members
                        .iter()
                        .filter(|i| split.train_indices.binary_search(i).is_ok())
                        .count();
                    prop_assert!(in_train >= 1 && in_train < members.len());
                }
            }
        }

        proptest! {
            #[test]
            fn accuracy_is_one_minus_normalized_hamming_distance(
                pairs in proptest::collection::vec((0usize..10, 0usize..10), 1..200)
            ) {
                let predictions: Vec<usize> = pairs.iter().map(|&(p, _)| p).collect();
                let golds: Vec<usize> = pairs.iter().map(|&(_, g)| g).collect();
                let value = accuracy(&predictions, &golds).unwrap();
                let hamming = predictions
                    .iter()
                    .zip(&golds)
                    .filter(|(p, g)| p != g)
                    .count();
                let expected = 1.0 - hamming as f64 / predictions.len() as f64;
                prop_assert!((value - expected).abs() < 1e-12);
            }
        }

        proptest! {
            #[test]
            fn mean_rank_stays_in_bounds(
                seed in 0u64..u64::MAX,
            ) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let k = rng.random_range(2..15);
                let n = rng.random_range(1..40);
                let labels: Vec<String> = (0..k).map(|i| format!("label-{i}")).collect();
                let mut rankings = Vec::with_capacity(n);
                let mut golds = Vec::with_capacity(n);
                for _ in 0..n {
                    use rand::seq::SliceRandom;
                    let mut ranking = labels.clone();
                    ranking.shuffle(&mut rng);
                    golds.push(labels[rng.random_range(0..k)].clone());
                    rankings.push(ranking);
                }
                let value = mean_rank(&rankings, &golds).unwrap();
                prop_assert!(value >= 1.0 && value <= k as f64);
            }
        }
    }
}
