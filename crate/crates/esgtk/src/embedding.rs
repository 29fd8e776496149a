//! Pluggable sentence-embedding backends and similarity utilities.
//!
//! Terms and sentences are projected into one fixed-dimension vector space
//! through a [`TextEmbedder`]. Real pretrained encoders are reached through
//! adapters registered by id in a [`BackendRegistry`]; the built-in
//! [`HashingEmbedder`] (`test:<dim>[:<seed>]`) is a deterministic stand-in
//! that makes every downstream component testable without model downloads.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    /// The backend cannot be constructed: unknown id, missing adapter, bad
    /// parameters. Distinct from [`EmbeddingError::Runtime`], which covers
    /// failures while embedding.
    #[error("backend configuration: {0}")]
    Configuration(String),
    /// The backend exists but failed to produce a vector.
    #[error("backend runtime: {0}")]
    Runtime(String),
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("embed_batch requires at least one text")]
    EmptyBatch,
    #[error("tokens of {text:?} cancel to a zero vector")]
    ZeroVector { text: String },
    #[error("cosine similarity is undefined for a zero-norm vector")]
    ZeroNorm,
    #[error("dimension mismatch: expected {expected}, found {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("non-finite value in embedding of {text:?}")]
    NonFinite { text: String },
}

/// Contract turning text into fixed-dimension real vectors.
///
/// Implementations must be deterministic: embedding the same text twice
/// yields the identical vector, and every output has exactly
/// [`TextEmbedder::dimension`] finite components. The `Send + Sync` bound is
/// the thread-safety declaration; adapters that need exclusive access to
/// internal state wrap it in a lock.
pub trait TextEmbedder: Send + Sync {
    /// Stable backend/model identifier, recorded in trained models.
    fn id(&self) -> &str;

    fn dimension(&self) -> usize;

    /// Whether gradients can flow back into the encoder (joint fine-tuning).
    fn supports_gradients(&self) -> bool {
        false
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbeddingError>;

    /// Embed each text in order. Row `i` of the result equals
    /// `embed(texts[i])`; implementations may parallelize internally but must
    /// preserve this deterministic ordering.
    fn embed_batch(&self, texts: &[String]) -> Result<EmbeddingMatrix, EmbeddingError> {
        if texts.is_empty() {
            return Err(EmbeddingError::EmptyBatch);
        }
        let mut data = Vec::with_capacity(texts.len() * self.dimension());
        for text in texts {
            data.extend_from_slice(&self.embed(text)?);
        }
        EmbeddingMatrix::new(
            self.id().to_string(),
            self.dimension(),
            texts.to_vec(),
            data,
        )
    }
}

/// N texts embedded into an N×d row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    backend_id: String,
    dimension: usize,
    texts: Vec<String>,
    data: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn new(
        backend_id: String,
        dimension: usize,
        texts: Vec<String>,
        data: Vec<f64>,
    ) -> Result<Self, EmbeddingError> {
        if data.len() != texts.len() * dimension {
            return Err(EmbeddingError::DimensionMismatch {
                expected: texts.len() * dimension,
                actual: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite {
                text: texts[pos / dimension.max(1)].clone(),
            });
        }
        Ok(Self {
            backend_id,
            dimension,
            texts,
            data,
        })
    }

    pub fn backend_id(&self) -> &str {
        &self.backend_id
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn texts(&self) -> &[String] {
        &self.texts
    }

    pub fn len(&self) -> usize {
        self.texts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.texts.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dimension..(i + 1) * self.dimension]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dimension)
    }
}

/// Cosine of the angle between `u` and `v`, clamped to `[-1, 1]` against
/// rounding. Errors on mismatched dimensions or a zero-norm input.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64, EmbeddingError> {
    if u.len() != v.len() {
        return Err(EmbeddingError::DimensionMismatch {
            expected: u.len(),
            actual: v.len(),
        });
    }
    let nu = crate::math::l2_norm(u);
    let nv = crate::math::l2_norm(v);
    if nu == 0.0 || nv == 0.0 {
        return Err(EmbeddingError::ZeroNorm);
    }
    Ok((crate::math::dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

// ---------------------------------------------------------------------------
// Hashing backend
// ---------------------------------------------------------------------------

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
/// Salt separating the sign hash from the bucket hash.
const SIGN_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// FNV-1a over the key's little-endian bytes followed by the token bytes.
///
/// This is the repo's fixed keyed hash: platform-independent, so bucket and
/// sign assignments agree bit-for-bit everywhere.
fn fnv1a_keyed(key: u64, token: &str) -> u64 {
    let mut hash = FNV_OFFSET;
    for byte in key.to_le_bytes().into_iter().chain(token.bytes()) {
        hash ^= u64::from(byte);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// Deterministic signed-feature-hashing embedder.
///
/// Lowercases, splits on whitespace, hashes each token to a bucket in
/// `[0, dimension)` with a ±1 sign from a second keyed hash, sums the signed
/// one-hot contributions, and L2-normalizes. The construction is a bag of
/// tokens, so token order never matters, and identical text maps to an
/// identical vector across processes and platforms.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    id: String,
    dimension: usize,
    seed: u64,
}

impl HashingEmbedder {
    pub const MIN_DIMENSION: usize = 8;

    pub fn new(dimension: usize, seed: u64) -> Result<Self, EmbeddingError> {
        if dimension < Self::MIN_DIMENSION {
            return Err(EmbeddingError::Configuration(format!(
                "hashing backend needs dimension >= {}, got {dimension}",
                Self::MIN_DIMENSION
            )));
        }
        let id = if seed == 0 {
            format!("test:{dimension}")
        } else {
            format!("test:{dimension}:{seed}")
        };
        Ok(Self {
            id,
            dimension,
            seed,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Bucket and sign for one (already lowercased) token.
    fn slot(&self, token: &str) -> (usize, f64) {
        let bucket = (fnv1a_keyed(self.seed, token) % self.dimension as u64) as usize;
        let sign = if fnv1a_keyed(self.seed ^ SIGN_SALT, token) & 1 == 0 {
            1.0
        } else {
            -1.0
        };
        (bucket, sign)
    }
}

impl TextEmbedder for HashingEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbeddingError> {
        let lower = text.to_lowercase();
        let mut vector = vec![0.0; self.dimension];
        let mut tokens = 0usize;
        for token in lower.split_whitespace() {
            let (bucket, sign) = self.slot(token);
            vector[bucket] += sign;
            tokens += 1;
        }
        if tokens == 0 {
            return Err(EmbeddingError::EmptyText);
        }
        let norm = crate::math::l2_norm(&vector);
        if norm == 0.0 {
            // Opposite-signed tokens in one bucket can cancel exactly; the
            // normalized vector would be undefined, so refuse rather than
            // fabricate one.
            return Err(EmbeddingError::ZeroVector {
                text: text.to_string(),
            });
        }
        for v in &mut vector {
            *v /= norm;
        }
        Ok(vector)
    }
}

// ---------------------------------------------------------------------------
// Backend registry
// ---------------------------------------------------------------------------

/// Builds a backend from the part of the id after `scheme:` (may be empty).
pub type AdapterFactory =
    Box<dyn Fn(&str) -> Result<Box<dyn TextEmbedder>, EmbeddingError> + Send + Sync>;

/// Resolves backend ids of the form `scheme[:rest]` to embedders.
///
/// `test:<dim>[:<seed>]` is built in; real encoder adapters register their own
/// scheme at startup. Resolution fails fast with a configuration error naming
/// the known schemes when no adapter matches.
pub struct BackendRegistry {
    factories: HashMap<String, AdapterFactory>,
}

impl BackendRegistry {
    /// Registry with the built-in `test` scheme.
    pub fn with_builtins() -> Self {
        let mut registry = Self {
            factories: HashMap::new(),
        };
        registry.register("test", |rest| {
            let mut parts = rest.split(':');
            let dim_part = parts.next().unwrap_or("");
            let dimension: usize = dim_part.parse().map_err(|_| {
                EmbeddingError::Configuration(format!(
                    "test backend id must be test:<dim>[:<seed>], got dimension {dim_part:?}"
                ))
            })?;
            let seed = match parts.next() {
                None | Some("") => 0,
                Some(seed_part) => seed_part.parse().map_err(|_| {
                    EmbeddingError::Configuration(format!(
                        "test backend seed must be an integer, got {seed_part:?}"
                    ))
                })?,
            };
            if parts.next().is_some() {
                return Err(EmbeddingError::Configuration(
                    "test backend id has too many segments".to_string(),
                ));
            }
            Ok(Box::new(HashingEmbedder::new(dimension, seed)?) as Box<dyn TextEmbedder>)
        });
        registry
    }

    pub fn register(
        &mut self,
        scheme: &str,
        factory: impl Fn(&str) -> Result<Box<dyn TextEmbedder>, EmbeddingError> + Send + Sync + 'static,
    ) {
        self.factories.insert(scheme.to_string(), Box::new(factory));
    }

    pub fn resolve(&self, id: &str) -> Result<Box<dyn TextEmbedder>, EmbeddingError> {
        let (scheme, rest) = match id.split_once(':') {
            Some((scheme, rest)) => (scheme, rest),
            None => (id, ""),
        };
        match self.factories.get(scheme) {
            Some(factory) => factory(rest),
            None => {
                let mut known: Vec<&str> = self.factories.keys().map(String::as_str).collect();
                known.sort_unstable();
                Err(EmbeddingError::Configuration(format!(
                    "no adapter registered for backend {id:?} (known schemes: {})",
                    known.join(", ")
                )))
            }
        }
    }
}

impl Default for BackendRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

// ---------------------------------------------------------------------------
// On-disk vector cache
// ---------------------------------------------------------------------------

/// One file per `(backend id, content hash of text)`: a binary little-endian
/// float32 array of length `dimension`.
#[derive(Debug, Clone)]
pub struct VectorCache {
    dir: PathBuf,
}

impl VectorCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn entry_path(&self, backend_id: &str, text: &str) -> PathBuf {
        let backend_dir: String = backend_id
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
            .collect();
        let mut hasher = Sha256::new();
        hasher.update(text.as_bytes());
        let digest = hasher.finalize();
        let mut name = String::with_capacity(68);
        for byte in digest {
            name.push_str(&format!("{byte:02x}"));
        }
        name.push_str(".vec");
        self.dir.join(backend_dir).join(name)
    }

    pub fn get(&self, backend_id: &str, text: &str, dimension: usize) -> Option<Vec<f64>> {
        let bytes = std::fs::read(self.entry_path(backend_id, text)).ok()?;
        if bytes.len() != dimension * 4 {
            return None;
        }
        Some(
            bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect(),
        )
    }

    pub fn put(&self, backend_id: &str, text: &str, vector: &[f64]) -> std::io::Result<()> {
        let path = self.entry_path(backend_id, text);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut bytes = Vec::with_capacity(vector.len() * 4);
        for &v in vector {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
        std::fs::write(path, bytes)
    }
}

/// Wraps another embedder with the on-disk cache.
///
/// Fresh computations are quantized through the cache's float32 storage before
/// being returned, so a value served from disk is bit-identical to the value
/// returned when it was first computed.
pub struct CachedEmbedder {
    inner: Box<dyn TextEmbedder>,
    cache: VectorCache,
}

impl CachedEmbedder {
    pub fn new(inner: Box<dyn TextEmbedder>, cache: VectorCache) -> Self {
        Self { inner, cache }
    }
}

impl TextEmbedder for CachedEmbedder {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn supports_gradients(&self) -> bool {
        self.inner.supports_gradients()
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbeddingError> {
        if let Some(hit) = self
            .cache
            .get(self.inner.id(), text, self.inner.dimension())
        {
            return Ok(hit);
        }
        let fresh = self.inner.embed(text)?;
        let quantized: Vec<f64> = fresh.iter().map(|&v| v as f32 as f64).collect();
        self.cache
            .put(self.inner.id(), text, &quantized)
            .map_err(|e| EmbeddingError::Runtime(format!("vector cache write failed: {e}")))?;
        Ok(quantized)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn backend(dim: usize, seed: u64) -> HashingEmbedder {
        HashingEmbedder::new(dim, seed).unwrap()
    }

    #[test]
    fn identical_texts_embed_identically() {
        let b = backend(64, 0);
        let m = b
            .embed_batch(&["carbon footprint".into(), "carbon footprint".into()])
            .unwrap();
        assert_eq!(m.row(0), m.row(1));
    }

    #[test]
    fn single_text_yields_one_row_of_dimension_d() {
        let b = backend(16, 0);
        let m = b.embed_batch(&["a".into()]).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.row(0).len(), 16);
    }

    #[test]
    fn disjoint_token_sets_are_nearly_orthogonal() {
        let b = backend(64, 0);
        let m = b
            .embed_batch(&["alpha beta".into(), "gamma delta".into()])
            .unwrap();
        let cos = cosine_similarity(m.row(0), m.row(1)).unwrap();
        assert!(cos.abs() < 0.3, "|cos| = {}", cos.abs());
    }

    #[test]
    fn vectors_are_unit_norm() {
        let b = backend(32, 7);
        for text in ["one", "one two three", "Carbon Footprint Reduction"] {
            let v = b.embed(text).unwrap();
            assert!((crate::math::l2_norm(&v) - 1.0).abs() < 1e-9, "{text}");
        }
    }

    #[test]
    fn token_order_does_not_matter() {
        let b = backend(64, 0);
        assert_eq!(
            b.embed("carbon footprint").unwrap(),
            b.embed("footprint carbon").unwrap()
        );
    }

    #[test]
    fn casing_does_not_matter() {
        let b = backend(64, 0);
        assert_eq!(
            b.embed("Carbon Footprint").unwrap(),
            b.embed("carbon footprint").unwrap()
        );
    }

    #[test]
    fn keyed_hashing_is_stable_across_runs() {
        // Frozen expectation: FNV-1a bucket/sign of these tokens under seed 0,
        // dimension 16. A change here means the repo hash changed and every
        // stored model built on the test backend is invalidated.
        let b = backend(16, 0);
        let v = b.embed("carbon").unwrap();
        let bucket = v.iter().position(|&x| x != 0.0).unwrap();
        assert_eq!((bucket, v[bucket]), (4, -1.0));
        let v2 = b.embed("footprint").unwrap();
        let bucket2 = v2.iter().position(|&x| x != 0.0).unwrap();
        assert_eq!((bucket2, v2[bucket2]), (4, -1.0));
        let v3 = b.embed("emissions").unwrap();
        let bucket3 = v3.iter().position(|&x| x != 0.0).unwrap();
        assert_eq!((bucket3, v3[bucket3]), (7, 1.0));
    }

    #[test]
    fn different_seeds_give_different_spaces() {
        let va = backend(64, 1).embed("carbon").unwrap();
        let vb = backend(64, 2).embed("carbon").unwrap();
        assert_ne!(va, vb);
    }

    #[test]
    fn empty_text_is_rejected() {
        let b = backend(16, 0);
        assert!(matches!(b.embed("   "), Err(EmbeddingError::EmptyText)));
        assert!(matches!(
            b.embed_batch(&[]),
            Err(EmbeddingError::EmptyBatch)
        ));
    }

    #[test]
    fn dimension_below_minimum_is_a_configuration_error() {
        assert!(matches!(
            HashingEmbedder::new(4, 0),
            Err(EmbeddingError::Configuration(_))
        ));
    }

    #[test]
    fn cosine_of_identical_vectors_is_one() {
        let v = vec![0.3, -1.2, 2.0];
        assert_eq!(cosine_similarity(&v, &v).unwrap(), 1.0);
    }

    #[test]
    fn cosine_of_orthogonal_vectors_is_zero() {
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn cosine_matches_hand_arithmetic() {
        let cos = cosine_similarity(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((cos - 1.0 / 2.0_f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn cosine_rejects_zero_norm() {
        assert!(matches!(
            cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]),
            Err(EmbeddingError::ZeroNorm)
        ));
    }

    #[test]
    fn cosine_rejects_dimension_mismatch() {
        assert!(matches!(
            cosine_similarity(&[1.0], &[1.0, 0.0]),
            Err(EmbeddingError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn registry_resolves_test_ids() {
        let registry = BackendRegistry::with_builtins();
        let b = registry.resolve("test:64").unwrap();
        assert_eq!(b.id(), "test:64");
        assert_eq!(b.dimension(), 64);
        let b = registry.resolve("test:32:9").unwrap();
        assert_eq!(b.id(), "test:32:9");
    }

    #[test]
    fn registry_rejects_unknown_scheme_with_known_list() {
        let registry = BackendRegistry::with_builtins();
        let err = registry.resolve("mpnet-base").err().unwrap();
        let msg = err.to_string();
        assert!(msg.contains("no adapter registered"), "{msg}");
        assert!(msg.contains("test"), "{msg}");
    }

    #[test]
    fn registry_rejects_malformed_test_id() {
        let registry = BackendRegistry::with_builtins();
        assert!(registry.resolve("test:abc").is_err());
        assert!(registry.resolve("test:").is_err());
        assert!(registry.resolve("test").is_err());
    }

    #[test]
    fn registered_adapter_is_resolvable() {
        let mut registry = BackendRegistry::with_builtins();
        registry.register("fixed", |_| Ok(Box::new(HashingEmbedder::new(8, 42)?)));
        let b = registry.resolve("fixed:whatever").unwrap();
        assert_eq!(b.dimension(), 8);
    }

    #[test]
    fn cache_round_trips_and_quantizes_consistently() {
        let dir = tempfile::tempdir().unwrap();
        let cache = VectorCache::new(dir.path());
        let cached = CachedEmbedder::new(Box::new(backend(16, 0)), VectorCache::new(dir.path()));
        let first = cached.embed("solar panels").unwrap();
        assert!(cache.get("test:16", "solar panels", 16).is_some());
        let second = cached.embed("solar panels").unwrap();
        assert_eq!(first, second);
        // A raw f32 file stores exactly what embed returned.
        let stored = cache.get("test:16", "solar panels", 16).unwrap();
        assert_eq!(stored, first);
    }

    #[test]
    fn cache_ignores_entries_of_wrong_dimension() {
        let dir = tempfile::tempdir().unwrap();
        let cache = VectorCache::new(dir.path());
        cache.put("test:16", "text", &[1.0; 8]).unwrap();
        assert!(cache.get("test:16", "text", 16).is_none());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn finite_vec(len: usize) -> impl Strategy<Value = Vec<f64>> {
            proptest::collection::vec(-1e3..1e3f64, len)
        }

        proptest! {
            #[test]
            fn cosine_is_symmetric(u in finite_vec(8), v in finite_vec(8)) {
                let uv = cosine_similarity(&u, &v);
                let vu = cosine_similarity(&v, &u);
                match (uv, vu) {
                    (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
                    (Err(_), Err(_)) => {}
                    _ => prop_assert!(false, "symmetry broken by error asymmetry"),
                }
            }

            #[test]
            fn cosine_is_scale_invariant(v in finite_vec(8), alpha in 1e-3..1e3f64) {
                let u: Vec<f64> = v.iter().map(|&x| x + 1.0).collect(); // just another vector
                if let (Ok(base), Ok(scaled)) = (
                    cosine_similarity(&u, &v),
                    cosine_similarity(&u.iter().map(|&x| alpha * x).collect::<Vec<_>>(), &v),
                ) {
                    prop_assert!((base - scaled).abs() < 1e-12);
                }
            }

            #[test]
            fn batch_rows_equal_single_embeds(texts in proptest::collection::vec("[a-z]{1,8}( [a-z]{1,8}){0,3}", 1..6)) {
                let b = backend(32, 3);
                if let Ok(matrix) = b.embed_batch(&texts) {
                    for (i, text) in texts.iter().enumerate() {
                        let single = b.embed(text).unwrap();
                        prop_assert_eq!(matrix.row(i), single.as_slice());
                    }
                }
            }

            #[test]
            fn hashing_vectors_are_unit_norm_or_degenerate(text in "[a-z ]{1,40}", seed in 0u64..100) {
                let b = backend(16, seed);
                match b.embed(&text) {
                    Ok(v) => {
                        prop_assert_eq!(v.len(), 16);
                        prop_assert!((crate::math::l2_norm(&v) - 1.0).abs() < 1e-9);
                    }
                    Err(EmbeddingError::EmptyText) | Err(EmbeddingError::ZeroVector { .. }) => {}
                    Err(other) => prop_assert!(false, "unexpected error {}", other),
                }
            }
        }
    }
}
