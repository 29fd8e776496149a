//! Multinomial logistic regression over term embeddings, with full
//! probability ranking for mean-rank evaluation.
//!
//! The regularized objective is
//!
//! ```text
//! f(W, b) = -Σᵢ log softmax(W xᵢ + b)[yᵢ] + ‖W‖² / (2 · l2_strength)
//! ```
//!
//! following the inverse-strength convention: larger `l2_strength` means a
//! weaker penalty, and the bias column is never penalized. Fitting runs
//! deterministic full-batch gradient descent with Armijo backtracking on the
//! convex objective, so identical inputs produce bit-identical models.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::EmbeddingMatrix;
use crate::math;

#[derive(Debug, Error)]
pub enum ConceptError {
    #[error("class {index} has no training examples")]
    EmptyClass { index: usize },
    #[error("need at least as many samples as classes: {samples} samples for {classes} classes")]
    TooFewSamples { samples: usize, classes: usize },
    #[error("label {value} at position {position} is outside [0, {classes})")]
    LabelOutOfRange {
        position: usize,
        value: usize,
        classes: usize,
    },
    #[error("non-finite value in embedding row {row}")]
    NonFiniteEmbedding { row: usize },
    #[error("dimension mismatch: model expects {expected}, input has {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("embedding row count {rows} does not match label count {labels}")]
    RowLabelMismatch { rows: usize, labels: usize },
    #[error("need at least 2 concept classes, got {0}")]
    TooFewClasses(usize),
    #[error("cannot normalize a zero-norm embedding")]
    ZeroNormEmbedding,
    #[error("model file {path}: {reason}")]
    Schema { path: String, reason: String },
    #[error("failed to access {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Hyperparameters of [`fit`]. `l2_strength` is the inverse penalty weight
/// (the penalty is `‖W‖²/(2·l2_strength)`), matching the common off-the-shelf
/// default when left at 1.0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub l2_strength: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub seed: u64,
    /// L2-normalize embeddings before fitting and before every prediction.
    pub normalize_embeddings: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            l2_strength: 1.0,
            max_iterations: 500,
            tolerance: 1e-6,
            seed: 0,
            normalize_embeddings: false,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), ConceptError> {
        if !(self.l2_strength.is_finite() && self.l2_strength > 0.0) {
            return Err(ConceptError::InvalidConfig(format!(
                "l2_strength must be a positive finite number, got {}",
                self.l2_strength
            )));
        }
        if self.max_iterations == 0 {
            return Err(ConceptError::InvalidConfig(
                "max_iterations must be positive".to_string(),
            ));
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(ConceptError::InvalidConfig(format!(
                "tolerance must be a positive finite number, got {}",
                self.tolerance
            )));
        }
        Ok(())
    }
}

/// Why gradient descent stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Gradient norm fell below the tolerance.
    GradientConverged,
    /// Iteration budget exhausted first.
    MaxIterations,
    /// Backtracking could not find a descending step (already at numerical
    /// optimum).
    StepSizeUnderflow,
}

/// Fit diagnostics alongside the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub stop: StopReason,
    pub iterations: usize,
    pub final_gradient_norm: f64,
    pub final_loss: f64,
}

/// Trained multinomial logistic regression: a K×d weight matrix, K biases,
/// and the concept labels they index.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptModel {
    concept_labels: Vec<String>,
    dimension: usize,
    weights: Vec<f64>,
    biases: Vec<f64>,
    backend_id: String,
    train_config: TrainConfig,
}

impl ConceptModel {
    pub fn class_count(&self) -> usize {
        self.concept_labels.len()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn concept_labels(&self) -> &[String] {
        &self.concept_labels
    }

    pub fn backend_id(&self) -> &str {
        &self.backend_id
    }

    pub fn train_config(&self) -> &TrainConfig {
        &self.train_config
    }

    /// Row `k` of the weight matrix.
    pub fn weight_row(&self, k: usize) -> &[f64] {
        &self.weights[k * self.dimension..(k + 1) * self.dimension]
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    /// Build a model from explicit parameters (deserialization, tests).
    pub fn from_parts(
        concept_labels: Vec<String>,
        dimension: usize,
        weights: Vec<f64>,
        biases: Vec<f64>,
        backend_id: String,
        train_config: TrainConfig,
    ) -> Result<Self, ConceptError> {
        let classes = concept_labels.len();
        if classes < 2 {
            return Err(ConceptError::TooFewClasses(classes));
        }
        if weights.len() != classes * dimension {
            return Err(ConceptError::DimensionMismatch {
                expected: classes * dimension,
                actual: weights.len(),
            });
        }
        if biases.len() != classes {
            return Err(ConceptError::DimensionMismatch {
                expected: classes,
                actual: biases.len(),
            });
        }
        if let Some(row) = weights
            .chunks(dimension.max(1))
            .position(|row| row.iter().any(|v| !v.is_finite()))
        {
            return Err(ConceptError::NonFiniteEmbedding { row });
        }
        if biases.iter().any(|v| !v.is_finite()) {
            return Err(ConceptError::NonFiniteEmbedding { row: classes });
        }
        Ok(Self {
            concept_labels,
            dimension,
            weights,
            biases,
            backend_id,
            train_config,
        })
    }

    fn prepared_input(&self, embedding: &[f64]) -> Result<Vec<f64>, ConceptError> {
        if embedding.len() != self.dimension {
            return Err(ConceptError::DimensionMismatch {
                expected: self.dimension,
                actual: embedding.len(),
            });
        }
        if self.train_config.normalize_embeddings {
            let norm = math::l2_norm(embedding);
            if norm == 0.0 {
                return Err(ConceptError::ZeroNormEmbedding);
            }
            Ok(embedding.iter().map(|&v| v / norm).collect())
        } else {
            Ok(embedding.to_vec())
        }
    }

    /// `softmax(W x + b)`: strictly positive probabilities summing to 1.
    pub fn predict_proba(&self, embedding: &[f64]) -> Result<Vec<f64>, ConceptError> {
        let x = self.prepared_input(embedding)?;
        let logits: Vec<f64> = (0..self.class_count())
            .map(|k| math::dot(self.weight_row(k), &x) + self.biases[k])
            .collect();
        Ok(math::softmax(&logits))
    }

    /// Concepts sorted by descending probability; ties break toward the lower
    /// concept index, so rankings are deterministic.
    pub fn rank_concepts(&self, embedding: &[f64]) -> Result<Vec<(String, f64)>, ConceptError> {
        let probabilities = self.predict_proba(embedding)?;
        let mut order: Vec<usize> = (0..probabilities.len()).collect();
        order.sort_by(|&i, &j| {
            probabilities[j]
                .total_cmp(&probabilities[i])
                .then(i.cmp(&j))
        });
        Ok(order
            .into_iter()
            .map(|i| (self.concept_labels[i].clone(), probabilities[i]))
            .collect())
    }

    /// Argmax concept label under the ranking tie-break.
    pub fn predict(&self, embedding: &[f64]) -> Result<(String, f64), ConceptError> {
        let mut ranked = self.rank_concepts(embedding)?;
        Ok(ranked.swap_remove(0))
    }
}

/// Fit the regularized multinomial logistic regression.
///
/// Full-batch gradient descent from zero-initialized parameters with Armijo
/// backtracking line search; stops when the gradient norm drops below
/// `config.tolerance` or the iteration budget runs out, and reports which.
pub fn fit(
    embeddings: &EmbeddingMatrix,
    labels: &[usize],
    concept_labels: &[String],
    config: &TrainConfig,
) -> Result<(ConceptModel, FitSummary), ConceptError> {
    let classes = concept_labels.len();
    let dimension = embeddings.dimension();
    let rows = validated_rows(embeddings, labels, classes, config)?;

    let problem = Objective {
        rows: &rows,
        labels,
        classes,
        dimension,
        inv_l2: 1.0 / config.l2_strength,
    };

    let mut weights = vec![0.0; classes * dimension];
    let mut biases = vec![0.0; classes];
    let mut step = 1.0f64;
    let mut iterations = 0usize;
    let mut stop = StopReason::MaxIterations;
    let (mut loss, mut grad_w, mut grad_b) = problem.loss_and_gradient(&weights, &biases);
    let mut grad_norm = gradient_norm(&grad_w, &grad_b);

    for _ in 0..config.max_iterations {
        if grad_norm < config.tolerance {
            stop = StopReason::GradientConverged;
            break;
        }
        // Grow the trial step after each accepted iteration so the search can
        // recover from an early conservative step.
        let mut trial = (step * 2.0).min(1e6);
        let descent = grad_norm * grad_norm;
        loop {
            let candidate_w: Vec<f64> = weights
                .iter()
                .zip(&grad_w)
                .map(|(w, g)| w - trial * g)
                .collect();
            let candidate_b: Vec<f64> = biases
                .iter()
                .zip(&grad_b)
                .map(|(b, g)| b - trial * g)
                .collect();
            let candidate_loss = problem.loss(&candidate_w, &candidate_b);
            if candidate_loss <= loss - 1e-4 * trial * descent {
                weights = candidate_w;
                biases = candidate_b;
                step = trial;
                break;
            }
            trial *= 0.5;
            if trial < 1e-20 {
                stop = StopReason::StepSizeUnderflow;
                break;
            }
        }
        if stop == StopReason::StepSizeUnderflow {
            break;
        }
        iterations += 1;
        (loss, grad_w, grad_b) = problem.loss_and_gradient(&weights, &biases);
        grad_norm = gradient_norm(&grad_w, &grad_b);
        if grad_norm < config.tolerance {
            stop = StopReason::GradientConverged;
            break;
        }
    }

    let summary = FitSummary {
        stop,
        iterations,
        final_gradient_norm: grad_norm,
        final_loss: loss,
    };
    let model = ConceptModel::from_parts(
        concept_labels.to_vec(),
        dimension,
        weights,
        biases,
        embeddings.backend_id().to_string(),
        config.clone(),
    )?;
    Ok((model, summary))
}

/// Run the shared fitting preconditions and return the (optionally
/// normalized) embedding rows the objective works on.
fn validated_rows(
    embeddings: &EmbeddingMatrix,
    labels: &[usize],
    classes: usize,
    config: &TrainConfig,
) -> Result<Vec<Vec<f64>>, ConceptError> {
    config.validate()?;
    let samples = embeddings.len();
    if classes < 2 {
        return Err(ConceptError::TooFewClasses(classes));
    }
    if samples != labels.len() {
        return Err(ConceptError::RowLabelMismatch {
            rows: samples,
            labels: labels.len(),
        });
    }
    if samples < classes {
        return Err(ConceptError::TooFewSamples { samples, classes });
    }
    for (position, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(ConceptError::LabelOutOfRange {
                position,
                value: label,
                classes,
            });
        }
    }
    let mut seen = vec![false; classes];
    for &label in labels {
        seen[label] = true;
    }
    if let Some(index) = seen.iter().position(|present| !present) {
        return Err(ConceptError::EmptyClass { index });
    }
    for (row, values) in embeddings.rows().enumerate() {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ConceptError::NonFiniteEmbedding { row });
        }
    }

    if config.normalize_embeddings {
        embeddings
            .rows()
            .map(|row| {
                let norm = math::l2_norm(row);
                if norm == 0.0 {
                    Err(ConceptError::ZeroNormEmbedding)
                } else {
                    Ok(row.iter().map(|&v| v / norm).collect())
                }
            })
            .collect::<Result<_, _>>()
    } else {
        Ok(embeddings.rows().map(|row| row.to_vec()).collect())
    }
}

/// Evaluate the regularized training objective and its exact gradient at an
/// arbitrary parameter point: `weights` is row-major `classes × dimension`,
/// `biases` has length `classes`, and the returned gradients share those
/// shapes. This is the function [`fit`] descends; exposing it lets callers
/// verify the gradient independently or drive their own optimizer.
pub fn objective_at(
    embeddings: &EmbeddingMatrix,
    labels: &[usize],
    classes: usize,
    config: &TrainConfig,
    weights: &[f64],
    biases: &[f64],
) -> Result<(f64, Vec<f64>, Vec<f64>), ConceptError> {
    let dimension = embeddings.dimension();
    let rows = validated_rows(embeddings, labels, classes, config)?;
    if weights.len() != classes * dimension {
        return Err(ConceptError::DimensionMismatch {
            expected: classes * dimension,
            actual: weights.len(),
        });
    }
    if biases.len() != classes {
        return Err(ConceptError::DimensionMismatch {
            expected: classes,
            actual: biases.len(),
        });
    }
    let problem = Objective {
        rows: &rows,
        labels,
        classes,
        dimension,
        inv_l2: 1.0 / config.l2_strength,
    };
    Ok(problem.loss_and_gradient(weights, biases))
}

struct Objective<'a> {
    rows: &'a [Vec<f64>],
    labels: &'a [usize],
    classes: usize,
    dimension: usize,
    inv_l2: f64,
}

impl Objective<'_> {
    fn logits(&self, weights: &[f64], biases: &[f64], x: &[f64]) -> Vec<f64> {
        (0..self.classes)
            .map(|k| {
                math::dot(&weights[k * self.dimension..(k + 1) * self.dimension], x) + biases[k]
            })
            .collect()
    }

    fn loss(&self, weights: &[f64], biases: &[f64]) -> f64 {
        let mut total = 0.0;
        for (x, &y) in self.rows.iter().zip(self.labels) {
            let logits = self.logits(weights, biases, x);
            total += math::log_sum_exp(&logits) - logits[y];
        }
        total + 0.5 * self.inv_l2 * math::dot(weights, weights)
    }

    fn loss_and_gradient(&self, weights: &[f64], biases: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        let mut loss = 0.0;
        let mut grad_w = vec![0.0; weights.len()];
        let mut grad_b = vec![0.0; biases.len()];
        for (x, &y) in self.rows.iter().zip(self.labels) {
            let logits = self.logits(weights, biases, x);
            loss += math::log_sum_exp(&logits) - logits[y];
            let probabilities = math::softmax(&logits);
            for k in 0..self.classes {
                let residual = probabilities[k] - if k == y { 1.0 } else { 0.0 };
                grad_b[k] += residual;
                let row = &mut grad_w[k * self.dimension..(k + 1) * self.dimension];
                for (g, &xi) in row.iter_mut().zip(x) {
                    *g += residual * xi;
                }
            }
        }
        loss += 0.5 * self.inv_l2 * math::dot(weights, weights);
        for (g, &w) in grad_w.iter_mut().zip(weights) {
            *g += self.inv_l2 * w;
        }
        (loss, grad_w, grad_b)
    }
}

fn gradient_norm(grad_w: &[f64], grad_b: &[f64]) -> f64 {
    (math::dot(grad_w, grad_w) + math::dot(grad_b, grad_b)).sqrt()
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

pub const CONCEPT_MODEL_SCHEMA_VERSION: u32 = 1;
pub const CONCEPT_MODEL_KIND: &str = "concept_model";

#[derive(Serialize, Deserialize)]
struct ConceptModelFile {
    schema_version: u32,
    kind: String,
    concept_labels: Vec<String>,
    dimension: usize,
    /// Row-major K×d.
    weights: Vec<f64>,
    biases: Vec<f64>,
    backend_id: String,
    train_config: TrainConfig,
}

/// Serialize the model to its JSON schema. serde_json emits the shortest
/// representation that parses back to the identical f64, so save→load is
/// exact to the bit.
pub fn model_to_json(model: &ConceptModel) -> String {
    let file = ConceptModelFile {
        schema_version: CONCEPT_MODEL_SCHEMA_VERSION,
        kind: CONCEPT_MODEL_KIND.to_string(),
        concept_labels: model.concept_labels.clone(),
        dimension: model.dimension,
        weights: model.weights.clone(),
        biases: model.biases.clone(),
        backend_id: model.backend_id.clone(),
        train_config: model.train_config.clone(),
    };
    serde_json::to_string_pretty(&file).expect("concept model serializes")
}

pub fn model_from_json(json: &str, origin: &str) -> Result<ConceptModel, ConceptError> {
    let file: ConceptModelFile = serde_json::from_str(json).map_err(|e| ConceptError::Schema {
        path: origin.to_string(),
        reason: e.to_string(),
    })?;
    if file.kind != CONCEPT_MODEL_KIND {
        return Err(ConceptError::Schema {
            path: origin.to_string(),
            reason: format!(
                "expected kind {CONCEPT_MODEL_KIND:?}, found {:?}",
                file.kind
            ),
        });
    }
    if file.schema_version != CONCEPT_MODEL_SCHEMA_VERSION {
        return Err(ConceptError::Schema {
            path: origin.to_string(),
            reason: format!(
                "unsupported schema version {} (supported: {CONCEPT_MODEL_SCHEMA_VERSION})",
                file.schema_version
            ),
        });
    }
    ConceptModel::from_parts(
        file.concept_labels,
        file.dimension,
        file.weights,
        file.biases,
        file.backend_id,
        file.train_config,
    )
}

pub fn save_model(model: &ConceptModel, path: impl AsRef<Path>) -> Result<(), ConceptError> {
    let path = path.as_ref();
    std::fs::write(path, model_to_json(model)).map_err(|source| ConceptError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ConceptModel, ConceptError> {
    let path = path.as_ref();
    let json = std::fs::read_to_string(path).map_err(|source| ConceptError::Io {
        path: path.display().to_string(),
        source,
    })?;
    model_from_json(&json, &path.display().to_string())
}
