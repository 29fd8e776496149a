//! Binary sustainable/unsustainable sentence classifier: a sentence encoder
//! feeding a two-layer feed-forward head, trained by seeded mini-batch
//! gradient descent on mean cross-entropy.
//!
//! The head computes `logits = W₂·relu(W₁x + b₁) + b₂` and all gradients are
//! exact analytic derivatives (ReLU subgradient 1[z > 0]). Encoders are bound
//! either frozen — only the head trains — or through [`TrainableEncoder`],
//! which receives the loss gradient with respect to each input embedding so
//! encoder parameters can update jointly.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{SentenceDataset, SentenceLabel};
use crate::embedding::{EmbeddingError, TextEmbedder};
use crate::math;

#[derive(Debug, Error)]
pub enum SustainabilityError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dataset contains only examples labeled {label}")]
    SingleClass { label: String },
    #[error("batch is empty")]
    EmptyBatch,
    #[error("dimension mismatch: head expects {expected}, input has {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("non-finite activation while processing {context}")]
    NonFinite { context: String },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("cannot classify an empty sentence")]
    EmptySentence,
    #[error("model was trained with encoder {expected}, got {actual}")]
    EncoderMismatch { expected: String, actual: String },
    #[error("encoder error")]
    Encoder(#[from] EmbeddingError),
    #[error("model file {path}: {reason}")]
    Schema { path: String, reason: String },
    #[error("failed to access {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Two affine layers with a ReLU between: h×d hidden weights, 2×h output
/// weights, both stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedForwardHead {
    input_dim: usize,
    hidden_dim: usize,
    hidden_weights: Vec<f64>,
    hidden_bias: Vec<f64>,
    output_weights: Vec<f64>,
    output_bias: Vec<f64>,
}

impl FeedForwardHead {
    pub fn from_parts(
        input_dim: usize,
        hidden_dim: usize,
        hidden_weights: Vec<f64>,
        hidden_bias: Vec<f64>,
        output_weights: Vec<f64>,
        output_bias: Vec<f64>,
    ) -> Result<Self, SustainabilityError> {
        if hidden_dim == 0 {
            return Err(SustainabilityError::InvalidConfig(
                "hidden_dim must be positive".to_string(),
            ));
        }
        if hidden_weights.len() != hidden_dim * input_dim {
            return Err(SustainabilityError::DimensionMismatch {
                expected: hidden_dim * input_dim,
                actual: hidden_weights.len(),
            });
        }
        if hidden_bias.len() != hidden_dim {
            return Err(SustainabilityError::DimensionMismatch {
                expected: hidden_dim,
                actual: hidden_bias.len(),
            });
        }
        if output_weights.len() != 2 * hidden_dim {
            return Err(SustainabilityError::DimensionMismatch {
                expected: 2 * hidden_dim,
                actual: output_weights.len(),
            });
        }
        if output_bias.len() != 2 {
            return Err(SustainabilityError::DimensionMismatch {
                expected: 2,
                actual: output_bias.len(),
            });
        }
        let all_finite = hidden_weights
            .iter()
            .chain(&hidden_bias)
            .chain(&output_weights)
            .chain(&output_bias)
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(SustainabilityError::NonFinite {
                context: "head parameters".to_string(),
            });
        }
        Ok(Self {
            input_dim,
            hidden_dim,
            hidden_weights,
            hidden_bias,
            output_weights,
            output_bias,
        })
    }

    /// All-zero parameters: predicts (0.5, 0.5) everywhere.
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dim,
            hidden_weights: vec![0.0; hidden_dim * input_dim],
            hidden_bias: vec![0.0; hidden_dim],
            output_weights: vec![0.0; 2 * hidden_dim],
            output_bias: vec![0.0; 2],
        }
    }

    /// Seeded initialization: hidden weights uniform in ±1/√d, output weights
    /// uniform in ±1/√h (drawn row-major in that order from a ChaCha8 stream),
    /// biases zero.
    pub fn init(input_dim: usize, hidden_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let hidden_scale = 1.0 / (input_dim.max(1) as f64).sqrt();
        let output_scale = 1.0 / (hidden_dim as f64).sqrt();
        let hidden_weights = (0..hidden_dim * input_dim)
            .map(|_| rng.random_range(-hidden_scale..hidden_scale))
            .collect();
        let output_weights = (0..2 * hidden_dim)
            .map(|_| rng.random_range(-output_scale..output_scale))
            .collect();
        Self {
            input_dim,
            hidden_dim,
            hidden_weights,
            hidden_bias: vec![0.0; hidden_dim],
            output_weights,
            output_bias: vec![0.0; 2],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    fn hidden_row(&self, j: usize) -> &[f64] {
        &self.hidden_weights[j * self.input_dim..(j + 1) * self.input_dim]
    }

    fn output_row(&self, k: usize) -> &[f64] {
        &self.output_weights[k * self.hidden_dim..(k + 1) * self.hidden_dim]
    }

    fn step(&mut self, gradients: &HeadGradients, learning_rate: f64) {
        for (p, g) in self
            .hidden_weights
            .iter_mut()
            .zip(&gradients.hidden_weights)
        {
            *p -= learning_rate * g;
        }
        for (p, g) in self.hidden_bias.iter_mut().zip(&gradients.hidden_bias) {
            *p -= learning_rate * g;
        }
        for (p, g) in self
            .output_weights
            .iter_mut()
            .zip(&gradients.output_weights)
        {
            *p -= learning_rate * g;
        }
        for (p, g) in self.output_bias.iter_mut().zip(&gradients.output_bias) {
            *p -= learning_rate * g;
        }
    }
}

/// Gradient of the batch loss, one field per head parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGradients {
    pub hidden_weights: Vec<f64>,
    pub hidden_bias: Vec<f64>,
    pub output_weights: Vec<f64>,
    pub output_bias: Vec<f64>,
}

impl HeadGradients {
    fn zeros(head: &FeedForwardHead) -> Self {
        Self {
            hidden_weights: vec![0.0; head.hidden_weights.len()],
            hidden_bias: vec![0.0; head.hidden_bias.len()],
            output_weights: vec![0.0; head.output_weights.len()],
            output_bias: vec![0.0; head.output_bias.len()],
        }
    }
}

/// `(logits, probabilities)` for one embedding: `W₂·relu(W₁x + b₁) + b₂`
/// followed by softmax.
pub fn head_forward(
    head: &FeedForwardHead,
    x: &[f64],
) -> Result<([f64; 2], [f64; 2]), SustainabilityError> {
    let (_, logits) = forward_parts(head, x)?;
    let probabilities = math::softmax(&logits);
    Ok((logits, [probabilities[0], probabilities[1]]))
}

fn forward_parts(
    head: &FeedForwardHead,
    x: &[f64],
) -> Result<(Vec<f64>, [f64; 2]), SustainabilityError> {
    if x.len() != head.input_dim {
        return Err(SustainabilityError::DimensionMismatch {
            expected: head.input_dim,
            actual: x.len(),
        });
    }
    let hidden: Vec<f64> = (0..head.hidden_dim)
        .map(|j| (math::dot(head.hidden_row(j), x) + head.hidden_bias[j]).max(0.0))
        .collect();
    let logits = [
        math::dot(head.output_row(0), &hidden) + head.output_bias[0],
        math::dot(head.output_row(1), &hidden) + head.output_bias[1],
    ];
    if !(logits[0].is_finite() && logits[1].is_finite()) {
        return Err(SustainabilityError::NonFinite {
            context: "forward pass".to_string(),
        });
    }
    Ok((hidden, logits))
}

/// Mean cross-entropy over the batch and its exact gradient with respect to
/// every head parameter.
pub fn loss_and_gradients(
    head: &FeedForwardHead,
    xs: &[&[f64]],
    ys: &[usize],
) -> Result<(f64, HeadGradients), SustainabilityError> {
    let (loss, gradients, _) = backprop(head, xs, ys, false)?;
    Ok((loss, gradients))
}

/// [`loss_and_gradients`] plus the gradient with respect to each input
/// embedding, for joint encoder training.
pub fn loss_gradients_and_inputs(
    head: &FeedForwardHead,
    xs: &[&[f64]],
    ys: &[usize],
) -> Result<(f64, HeadGradients, Vec<Vec<f64>>), SustainabilityError> {
    let (loss, gradients, inputs) = backprop(head, xs, ys, true)?;
    Ok((loss, gradients, inputs))
}

fn backprop(
    head: &FeedForwardHead,
    xs: &[&[f64]],
    ys: &[usize],
    want_input_gradients: bool,
) -> Result<(f64, HeadGradients, Vec<Vec<f64>>), SustainabilityError> {
    if xs.is_empty() {
        return Err(SustainabilityError::EmptyBatch);
    }
    debug_assert_eq!(xs.len(), ys.len());
    let scale = 1.0 / xs.len() as f64;
    let mut loss = 0.0;
    let mut gradients = HeadGradients::zeros(head);
    let mut input_gradients = Vec::new();
    for (&x, &y) in xs.iter().zip(ys) {
        let (hidden, logits) = forward_parts(head, x)?;
        loss += scale * (math::log_sum_exp(&logits) - logits[y]);
        let probabilities = math::softmax(&logits);
        // d loss / d logit_k = (p_k - 1[k = y]) / batch
        let residual = [
            scale * (probabilities[0] - if y == 0 { 1.0 } else { 0.0 }),
            scale * (probabilities[1] - if y == 1 { 1.0 } else { 0.0 }),
        ];
        for (k, &r) in residual.iter().enumerate() {
            gradients.output_bias[k] += r;
            let row = &mut gradients.output_weights[k * head.hidden_dim..(k + 1) * head.hidden_dim];
            for (g, &h) in row.iter_mut().zip(&hidden) {
                *g += r * h;
            }
        }
        let mut input_gradient = if want_input_gradients {
            vec![0.0; head.input_dim]
        } else {
            Vec::new()
        };
        for (j, &h) in hidden.iter().enumerate() {
            if h <= 0.0 {
                continue;
            }
            let upstream =
                residual[0] * head.output_row(0)[j] + residual[1] * head.output_row(1)[j];
            gradients.hidden_bias[j] += upstream;
            let row = &mut gradients.hidden_weights[j * head.input_dim..(j + 1) * head.input_dim];
            for (g, &xi) in row.iter_mut().zip(x) {
                *g += upstream * xi;
            }
            if want_input_gradients {
                for (g, &w) in input_gradient.iter_mut().zip(head.hidden_row(j)) {
                    *g += upstream * w;
                }
            }
        }
        if want_input_gradients {
            input_gradients.push(input_gradient);
        }
    }
    if !loss.is_finite() {
        return Err(SustainabilityError::NonFinite {
            context: "batch loss".to_string(),
        });
    }
    Ok((loss, gradients, input_gradients))
}

/// Hyperparameters of [`train`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub hidden_dim: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 16,
            learning_rate: 1e-3,
            seed: 0,
            hidden_dim: 128,
        }
    }
}

impl FitConfig {
    /// Defaults for joint encoder + head training, where the usual head-only
    /// rate is far too aggressive for encoder parameters.
    pub fn joint_default() -> Self {
        Self {
            learning_rate: 2e-5,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<(), SustainabilityError> {
        if self.batch_size == 0 {
            return Err(SustainabilityError::InvalidConfig(
                "batch_size must be positive".to_string(),
            ));
        }
        if self.hidden_dim == 0 {
            return Err(SustainabilityError::InvalidConfig(
                "hidden_dim must be positive".to_string(),
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(SustainabilityError::InvalidConfig(format!(
                "learning_rate must be a positive finite number, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Encoder whose parameters can move during training: it embeds batches and
/// accepts the loss gradient with respect to each returned embedding.
pub trait TrainableEncoder {
    fn id(&self) -> String;

    fn dimension(&self) -> usize;

    /// Embed a batch with the encoder's current parameters.
    fn encode_batch(&mut self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbeddingError>;

    /// Take one descent step on the encoder parameters given ∂loss/∂embedding
    /// for each text of the batch just encoded.
    fn apply_gradients(
        &mut self,
        texts: &[&str],
        gradients: &[Vec<f64>],
        learning_rate: f64,
    ) -> Result<(), EmbeddingError>;
}

/// How the encoder participates in training: frozen (head-only descent) or
/// trainable (gradients flow through to the encoder each batch).
pub enum EncoderBinding<'a> {
    Frozen(&'a dyn TextEmbedder),
    Trainable(&'a mut dyn TrainableEncoder),
}

impl EncoderBinding<'_> {
    fn id(&self) -> String {
        match self {
            EncoderBinding::Frozen(encoder) => encoder.id().to_string(),
            EncoderBinding::Trainable(encoder) => encoder.id(),
        }
    }

    fn dimension(&self) -> usize {
        match self {
            EncoderBinding::Frozen(encoder) => encoder.dimension(),
            EncoderBinding::Trainable(encoder) => encoder.dimension(),
        }
    }
}

/// Per-epoch mean training loss, in visit order (parameters move between
/// batches, so this is the running training loss, not a re-evaluation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub epoch_losses: Vec<f64>,
}

/// A trained sentence classifier: head parameters plus the id of the encoder
/// they were trained against (encoder weights live behind that id, never in
/// the model file).
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceModel {
    head: FeedForwardHead,
    backend_id: String,
    fit_config: FitConfig,
}

/// One classified sentence: the chosen label and its probability (≥ 0.5 by
/// construction for two classes).
#[derive(Debug, Clone, PartialEq)]
pub struct SentencePrediction {
    pub label: SentenceLabel,
    pub probability: f64,
}

impl SentenceModel {
    pub fn backend_id(&self) -> &str {
        &self.backend_id
    }

    pub fn fit_config(&self) -> &FitConfig {
        &self.fit_config
    }

    pub fn head(&self) -> &FeedForwardHead {
        &self.head
    }

    pub fn from_parts(head: FeedForwardHead, backend_id: String, fit_config: FitConfig) -> Self {
        Self {
            head,
            backend_id,
            fit_config,
        }
    }

    fn check_encoder(&self, encoder: &dyn TextEmbedder) -> Result<(), SustainabilityError> {
        if encoder.id() != self.backend_id {
            return Err(SustainabilityError::EncoderMismatch {
                expected: self.backend_id.clone(),
                actual: encoder.id().to_string(),
            });
        }
        Ok(())
    }

    /// `(p_unsustainable, p_sustainable)` for one sentence.
    pub fn predict_proba(
        &self,
        encoder: &dyn TextEmbedder,
        sentence: &str,
    ) -> Result<[f64; 2], SustainabilityError> {
        if sentence.trim().is_empty() {
            return Err(SustainabilityError::EmptySentence);
        }
        self.check_encoder(encoder)?;
        let embedding = encoder.embed(sentence)?;
        let (_, probabilities) = head_forward(&self.head, &embedding)?;
        Ok(probabilities)
    }

    /// Argmax label with ties broken toward [`SentenceLabel::Unsustainable`];
    /// the reported probability is the chosen label's, so it is always ≥ 0.5.
    pub fn classify(
        &self,
        encoder: &dyn TextEmbedder,
        sentence: &str,
    ) -> Result<SentencePrediction, SustainabilityError> {
        let probabilities = self.predict_proba(encoder, sentence)?;
        let (label, probability) = if probabilities[1] > probabilities[0] {
            (SentenceLabel::Sustainable, probabilities[1])
        } else {
            (SentenceLabel::Unsustainable, probabilities[0])
        };
        Ok(SentencePrediction { label, probability })
    }
}

/// Train the head (and, for a trainable binding, the encoder) by seeded
/// mini-batch gradient descent on mean cross-entropy.
///
/// Initialization and the per-epoch shuffle both draw from a single ChaCha8
/// stream seeded with `config.seed`, so a frozen encoder makes the result
/// bit-identical across runs.
pub fn train(
    dataset: &SentenceDataset,
    mut encoder: EncoderBinding<'_>,
    config: &FitConfig,
) -> Result<(SentenceModel, TrainSummary), SustainabilityError> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(SustainabilityError::EmptyDataset);
    }
    let labels = dataset.label_indices();
    if let Some(&first) = labels.first() {
        if labels.iter().all(|&y| y == first) {
            let label = SentenceLabel::from_index(first).expect("dataset labels are valid");
            return Err(SustainabilityError::SingleClass {
                label: label.as_str().to_string(),
            });
        }
    }
    let texts = dataset.texts();
    let dimension = encoder.dimension();

    // Frozen encoders are deterministic, so the whole dataset embeds once.
    let frozen_embeddings: Option<Vec<Vec<f64>>> = match &encoder {
        EncoderBinding::Frozen(embedder) => Some(
            texts
                .iter()
                .map(|text| embedder.embed(text))
                .collect::<Result<_, _>>()?,
        ),
        EncoderBinding::Trainable(_) => None,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut head = FeedForwardHead::init(dimension, config.hidden_dim, &mut rng);
    let mut indices: Vec<usize> = (0..texts.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for _ in 0..config.epochs {
        indices.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in indices.chunks(config.batch_size) {
            let batch_labels: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let loss = match (&mut encoder, &frozen_embeddings) {
                (EncoderBinding::Frozen(_), Some(embeddings)) => {
                    let xs: Vec<&[f64]> = batch.iter().map(|&i| embeddings[i].as_slice()).collect();
                    let (loss, gradients) = loss_and_gradients(&head, &xs, &batch_labels)?;
                    head.step(&gradients, config.learning_rate);
                    loss
                }
                (EncoderBinding::Trainable(trainable), _) => {
                    let batch_texts: Vec<&str> = batch.iter().map(|&i| texts[i].as_str()).collect();
                    let embeddings = trainable.encode_batch(&batch_texts)?;
                    let xs: Vec<&[f64]> = embeddings.iter().map(|e| e.as_slice()).collect();
                    let (loss, gradients, input_gradients) =
                        loss_gradients_and_inputs(&head, &xs, &batch_labels)?;
                    head.step(&gradients, config.learning_rate);
                    trainable.apply_gradients(
                        &batch_texts,
                        &input_gradients,
                        config.learning_rate,
                    )?;
                    loss
                }
                (EncoderBinding::Frozen(_), None) => unreachable!(),
            };
            loss_sum += loss * batch.len() as f64;
        }
        epoch_losses.push(loss_sum / texts.len() as f64);
    }

    let model = SentenceModel {
        head,
        backend_id: encoder.id(),
        fit_config: config.clone(),
    };
    Ok((model, TrainSummary { epoch_losses }))
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

pub const SENTENCE_MODEL_SCHEMA_VERSION: u32 = 1;
pub const SENTENCE_MODEL_KIND: &str = "sentence_model";

#[derive(Serialize, Deserialize)]
struct SentenceModelFile {
    schema_version: u32,
    kind: String,
    backend_id: String,
    labels: Vec<String>,
    input_dim: usize,
    hidden_dim: usize,
    activation: String,
    /// Row-major h×d.
    hidden_weights: Vec<f64>,
    hidden_bias: Vec<f64>,
    /// Row-major 2×h.
    output_weights: Vec<f64>,
    output_bias: Vec<f64>,
    fit_config: FitConfig,
}

pub fn model_to_json(model: &SentenceModel) -> String {
    let file = SentenceModelFile {
        schema_version: SENTENCE_MODEL_SCHEMA_VERSION,
        kind: SENTENCE_MODEL_KIND.to_string(),
        backend_id: model.backend_id.clone(),
        labels: vec![
            SentenceLabel::Unsustainable.as_str().to_string(),
            SentenceLabel::Sustainable.as_str().to_string(),
        ],
        input_dim: model.head.input_dim,
        hidden_dim: model.head.hidden_dim,
        activation: "relu".to_string(),
        hidden_weights: model.head.hidden_weights.clone(),
        hidden_bias: model.head.hidden_bias.clone(),
        output_weights: model.head.output_weights.clone(),
        output_bias: model.head.output_bias.clone(),
        fit_config: model.fit_config.clone(),
    };
    serde_json::to_string_pretty(&file).expect("sentence model serializes")
}

pub fn model_from_json(json: &str, origin: &str) -> Result<SentenceModel, SustainabilityError> {
    let file: SentenceModelFile =
        serde_json::from_str(json).map_err(|e| SustainabilityError::Schema {
            path: origin.to_string(),
            reason: e.to_string(),
        })?;
    if file.kind != SENTENCE_MODEL_KIND {
        return Err(SustainabilityError::Schema {
            path: origin.to_string(),
            reason: format!(
                "expected kind {SENTENCE_MODEL_KIND:?}, found {:?}",
                file.kind
            ),
        });
    }
    if file.schema_version != SENTENCE_MODEL_SCHEMA_VERSION {
        return Err(SustainabilityError::Schema {
            path: origin.to_string(),
            reason: format!(
                "unsupported schema version {} (supported: {SENTENCE_MODEL_SCHEMA_VERSION})",
                file.schema_version
            ),
        });
    }
    if file.activation != "relu" {
        return Err(SustainabilityError::Schema {
            path: origin.to_string(),
            reason: format!("unsupported activation {:?}", file.activation),
        });
    }
    let head = FeedForwardHead::from_parts(
        file.input_dim,
        file.hidden_dim,
        file.hidden_weights,
        file.hidden_bias,
        file.output_weights,
        file.output_bias,
    )?;
    Ok(SentenceModel {
        head,
        backend_id: file.backend_id,
        fit_config: file.fit_config,
    })
}

pub fn save_model(
    model: &SentenceModel,
    path: impl AsRef<Path>,
) -> Result<(), SustainabilityError> {
    let path = path.as_ref();
    std::fs::write(path, model_to_json(model)).map_err(|source| SustainabilityError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<SentenceModel, SustainabilityError> {
    let path = path.as_ref();
    let json = std::fs::read_to_string(path).map_err(|source| SustainabilityError::Io {
        path: path.display().to_string(),
        source,
    })?;
    model_from_json(&json, &path.display().to_string())
}
