//! Data model and ingestion for taxonomies and labeled sentence datasets.
//!
//! A [`Taxonomy`] maps concept labels to the terms that belong to them; a
//! [`SentenceDataset`] holds sentences labeled sustainable or unsustainable.
//! Both are immutable after construction and validated against their
//! invariants at every entry point, so downstream modules never re-check.
//!
//! Canonical file formats:
//! * `taxonomy.csv` — header `term,concept`, UTF-8, RFC-4180 quoting
//! * `sentences.csv` — header `sentence,label`
//! * a JSON mirror of the taxonomy for programmatic use
//!   (`{"name", "concepts", "terms": [{"term", "concept"}]}`)

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A problem with one CSV row, reported with its 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowIssue {
    pub line: u64,
    pub reason: String,
}

impl fmt::Display for RowIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.reason)
    }
}

/// A term mapped to different concepts by the two sides of a merge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConceptConflict {
    pub term: String,
    pub existing_concept: String,
    pub incoming_concept: String,
}

impl fmt::Display for ConceptConflict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:?} maps to both {:?} and {:?}",
            self.term, self.existing_concept, self.incoming_concept
        )
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    /// Structural problems: missing or garbled header, empty file, bad JSON.
    #[error("{origin}: {reason}")]
    Format { origin: String, reason: String },
    /// One or more rows violated the contract; every offending line is listed.
    #[error("{origin}: {} invalid row(s): {}", .rows.len(), join_issues(.rows))]
    InvalidRows { origin: String, rows: Vec<RowIssue> },
    /// A constructed value would violate a type invariant.
    #[error("invalid {kind}: {reason}")]
    Invariant { kind: &'static str, reason: String },
    /// Terms mapped to different concepts by the two sides of a merge.
    #[error("conflicting concept assignments for {} term(s): {}", .conflicts.len(), join_conflicts(.conflicts))]
    MergeConflict { conflicts: Vec<ConceptConflict> },
}

fn join_issues(rows: &[RowIssue]) -> String {
    rows.iter()
        .map(RowIssue::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

fn join_conflicts(conflicts: &[ConceptConflict]) -> String {
    conflicts
        .iter()
        .map(ConceptConflict::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

// ---------------------------------------------------------------------------
// Taxonomy
// ---------------------------------------------------------------------------

/// One term together with the index of its concept in the owning taxonomy.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Term {
    pub text: String,
    pub concept: usize,
}

/// A curated mapping from concept labels to the terms belonging to them.
///
/// Invariants, enforced at construction:
/// * concept labels are non-empty and unique
/// * term strings are non-empty after trimming
/// * every term's concept index refers to an existing concept
/// * no duplicate `(term, concept)` pair
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Taxonomy {
    name: String,
    concepts: Vec<String>,
    terms: Vec<Term>,
}

impl Taxonomy {
    /// Validate the invariants and build the taxonomy.
    pub fn new(
        name: impl Into<String>,
        concepts: Vec<String>,
        terms: Vec<Term>,
    ) -> Result<Self, CorpusError> {
        let name = name.into();
        let invariant = |reason: String| CorpusError::Invariant {
            kind: "taxonomy",
            reason,
        };
        let mut seen_labels = HashMap::new();
        for (i, label) in concepts.iter().enumerate() {
            if label.trim().is_empty() {
                return Err(invariant(format!("concept {i} has an empty label")));
            }
            if let Some(prev) = seen_labels.insert(label.as_str(), i) {
                return Err(invariant(format!(
                    "concept label {label:?} appears at positions {prev} and {i}"
                )));
            }
        }
        let mut seen_pairs = HashMap::new();
        for (i, term) in terms.iter().enumerate() {
            if term.text.trim() != term.text || term.text.is_empty() {
                return Err(invariant(format!(
                    "term {i} ({:?}) is empty or not trimmed",
                    term.text
                )));
            }
            if term.concept >= concepts.len() {
                return Err(invariant(format!(
                    "term {:?} references concept index {} of {}",
                    term.text,
                    term.concept,
                    concepts.len()
                )));
            }
            if let Some(prev) = seen_pairs.insert((term.text.as_str(), term.concept), i) {
                return Err(invariant(format!(
                    "duplicate pair ({:?}, {:?}) at positions {prev} and {i}",
                    term.text, concepts[term.concept]
                )));
            }
        }
        Ok(Self {
            name,
            concepts,
            terms,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Concept labels in their canonical order.
    pub fn concepts(&self) -> &[String] {
        &self.concepts
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn concept_count(&self) -> usize {
        self.concepts.len()
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    /// Number of terms attached to each concept, in concept order.
    pub fn terms_per_concept(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.concepts.len()];
        for term in &self.terms {
            counts[term.concept] += 1;
        }
        counts
    }

    /// Term texts in stored order.
    pub fn term_texts(&self) -> Vec<String> {
        self.terms.iter().map(|t| t.text.clone()).collect()
    }

    /// Concept index of each term, aligned with [`Taxonomy::terms`].
    pub fn term_labels(&self) -> Vec<usize> {
        self.terms.iter().map(|t| t.concept).collect()
    }

    /// Restrict the taxonomy to the terms at `indices`, keeping every concept.
    ///
    /// Used to materialize train/dev halves of a split; indices must be valid
    /// and free of duplicates or the result would break the pair invariant.
    pub fn select_terms(&self, indices: &[usize]) -> Result<Self, CorpusError> {
        let terms = indices
            .iter()
            .map(|&i| {
                self.terms.get(i).cloned().ok_or(CorpusError::Invariant {
                    kind: "taxonomy",
                    reason: format!("term index {i} out of range"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(self.name.clone(), self.concepts.clone(), terms)
    }
}

/// A loaded taxonomy plus ingestion metadata.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaxonomyLoad {
    pub taxonomy: Taxonomy,
    /// Identical rows dropped during loading (kept rows are unaffected).
    pub duplicates_dropped: usize,
}

/// Read a `term,concept` CSV file into a validated [`Taxonomy`].
///
/// Concept order is first-appearance order; duplicate identical rows are
/// dropped and counted in the returned metadata. The taxonomy name is the
/// file stem.
pub fn load_taxonomy(path: impl AsRef<Path>) -> Result<TaxonomyLoad, CorpusError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_taxonomy_csv(file, &origin_of(path), &stem_of(path))
}

/// Same as [`load_taxonomy`] but from any reader, with explicit origin (for
/// error messages) and taxonomy name.
pub fn read_taxonomy_csv(
    reader: impl Read,
    origin: &str,
    name: &str,
) -> Result<TaxonomyLoad, CorpusError> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    check_header(&mut csv_reader, origin, &["term", "concept"])?;

    let mut concepts: Vec<String> = Vec::new();
    let mut concept_index: HashMap<String, usize> = HashMap::new();
    let mut terms: Vec<Term> = Vec::new();
    let mut seen_pairs: HashMap<(String, usize), ()> = HashMap::new();
    let mut duplicates_dropped = 0usize;
    let mut issues: Vec<RowIssue> = Vec::new();

    for record in csv_reader.records() {
        let record = record.map_err(|e| CorpusError::Format {
            origin: origin.to_string(),
            reason: format!("malformed CSV: {e}"),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let Some((term, concept)) = two_cells(&record, line, "term", "concept", &mut issues) else {
            continue;
        };
        let index = *concept_index.entry(concept.clone()).or_insert_with(|| {
            concepts.push(concept.clone());
            concepts.len() - 1
        });
        if seen_pairs.insert((term.clone(), index), ()).is_some() {
            duplicates_dropped += 1;
            continue;
        }
        terms.push(Term {
            text: term,
            concept: index,
        });
    }
    if !issues.is_empty() {
        return Err(CorpusError::InvalidRows {
            origin: origin.to_string(),
            rows: issues,
        });
    }
    Ok(TaxonomyLoad {
        taxonomy: Taxonomy::new(name, concepts, terms)?,
        duplicates_dropped,
    })
}

/// Serialize a taxonomy back to `term,concept` CSV.
pub fn write_taxonomy_csv(taxonomy: &Taxonomy, writer: impl std::io::Write) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["term", "concept"])?;
    for term in taxonomy.terms() {
        out.write_record([term.text.as_str(), &taxonomy.concepts()[term.concept]])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct TaxonomyMirror {
    name: String,
    concepts: Vec<String>,
    terms: Vec<TermMirror>,
}

#[derive(Serialize, Deserialize)]
struct TermMirror {
    term: String,
    concept: String,
}

/// Serialize a taxonomy to the JSON mirror format.
pub fn taxonomy_to_json(taxonomy: &Taxonomy) -> String {
    let mirror = TaxonomyMirror {
        name: taxonomy.name().to_string(),
        concepts: taxonomy.concepts().to_vec(),
        terms: taxonomy
            .terms()
            .iter()
            .map(|t| TermMirror {
                term: t.text.clone(),
                concept: taxonomy.concepts()[t.concept].clone(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&mirror).expect("taxonomy mirror serializes")
}

/// Parse the JSON mirror format into a validated [`Taxonomy`].
pub fn taxonomy_from_json(json: &str, origin: &str) -> Result<Taxonomy, CorpusError> {
    let mirror: TaxonomyMirror = serde_json::from_str(json).map_err(|e| CorpusError::Format {
        origin: origin.to_string(),
        reason: format!("invalid taxonomy JSON: {e}"),
    })?;
    let index: HashMap<&str, usize> = mirror
        .concepts
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    let terms = mirror
        .terms
        .iter()
        .map(|t| {
            index
                .get(t.concept.as_str())
                .map(|&concept| Term {
                    text: t.term.clone(),
                    concept,
                })
                .ok_or_else(|| CorpusError::Format {
                    origin: origin.to_string(),
                    reason: format!(
                        "term {:?} references unknown concept {:?}",
                        t.term, t.concept
                    ),
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Taxonomy::new(mirror.name, mirror.concepts, terms)
}

/// Union of two taxonomies, matching concepts by exact label.
///
/// Identical `(term, concept)` pairs are deduplicated; a term mapped to
/// different concepts by the two sides is a conflict, and all conflicts are
/// reported together rather than resolved silently. The result keeps the base
/// taxonomy's name, so merging with an empty taxonomy is the identity and
/// `merge(t, t) == t`.
pub fn merge_taxonomies(base: &Taxonomy, extension: &Taxonomy) -> Result<Taxonomy, CorpusError> {
    let mut concepts = base.concepts().to_vec();
    let mut concept_index: HashMap<String, usize> = concepts
        .iter()
        .enumerate()
        .map(|(i, c)| (c.clone(), i))
        .collect();
    for label in extension.concepts() {
        if !concept_index.contains_key(label) {
            concept_index.insert(label.clone(), concepts.len());
            concepts.push(label.clone());
        }
    }

    let mut terms = base.terms().to_vec();
    let mut pairs: HashMap<(String, usize), ()> = HashMap::new();
    let mut by_text: HashMap<String, Vec<usize>> = HashMap::new();
    for term in &terms {
        pairs.insert((term.text.clone(), term.concept), ());
        by_text
            .entry(term.text.clone())
            .or_default()
            .push(term.concept);
    }

    let mut conflicts: Vec<ConceptConflict> = Vec::new();
    for term in extension.terms() {
        let text = &term.text;
        let concept = concept_index[&extension.concepts()[term.concept]];
        if pairs.contains_key(&(text.clone(), concept)) {
            continue; // identical pair on both sides
        }
        if let Some(existing) = by_text.get(text) {
            for &other in existing {
                conflicts.push(ConceptConflict {
                    term: text.clone(),
                    existing_concept: concepts[other].clone(),
                    incoming_concept: concepts[concept].clone(),
                });
            }
            continue;
        }
        pairs.insert((text.clone(), concept), ());
        by_text.entry(text.clone()).or_default().push(concept);
        terms.push(Term {
            text: text.clone(),
            concept,
        });
    }
    if !conflicts.is_empty() {
        return Err(CorpusError::MergeConflict { conflicts });
    }
    Taxonomy::new(base.name().to_string(), concepts, terms)
}

// ---------------------------------------------------------------------------
// Sentence dataset
// ---------------------------------------------------------------------------

/// Binary sustainability label. `Unsustainable` is class index 0, which is
/// also the tie-break side of the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SentenceLabel {
    Unsustainable,
    Sustainable,
}

impl SentenceLabel {
    pub const COUNT: usize = 2;

    /// Class index: unsustainable = 0, sustainable = 1.
    pub fn index(self) -> usize {
        match self {
            SentenceLabel::Unsustainable => 0,
            SentenceLabel::Sustainable => 1,
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        match index {
            0 => Some(SentenceLabel::Unsustainable),
            1 => Some(SentenceLabel::Sustainable),
            _ => None,
        }
    }

    /// Case-insensitive parse of the two label spellings.
    pub fn parse(value: &str) -> Option<Self> {
        match value.trim().to_ascii_lowercase().as_str() {
            "sustainable" => Some(SentenceLabel::Sustainable),
            "unsustainable" => Some(SentenceLabel::Unsustainable),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SentenceLabel::Unsustainable => "unsustainable",
            SentenceLabel::Sustainable => "sustainable",
        }
    }
}

impl fmt::Display for SentenceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One labeled sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceExample {
    pub text: String,
    pub label: SentenceLabel,
}

/// Sentences labeled sustainable or unsustainable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceDataset {
    name: String,
    examples: Vec<SentenceExample>,
}

impl SentenceDataset {
    /// Validate that every sentence is non-empty after trimming.
    pub fn new(
        name: impl Into<String>,
        examples: Vec<SentenceExample>,
    ) -> Result<Self, CorpusError> {
        for (i, example) in examples.iter().enumerate() {
            if example.text.trim() != example.text || example.text.is_empty() {
                return Err(CorpusError::Invariant {
                    kind: "sentence dataset",
                    reason: format!("sentence {i} is empty or not trimmed"),
                });
            }
        }
        Ok(Self {
            name: name.into(),
            examples,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn examples(&self) -> &[SentenceExample] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn count(&self, label: SentenceLabel) -> usize {
        self.examples.iter().filter(|e| e.label == label).count()
    }

    /// Class indices aligned with [`SentenceDataset::examples`].
    pub fn label_indices(&self) -> Vec<usize> {
        self.examples.iter().map(|e| e.label.index()).collect()
    }

    pub fn texts(&self) -> Vec<String> {
        self.examples.iter().map(|e| e.text.clone()).collect()
    }

    /// Restrict to the examples at `indices` (used for split halves).
    pub fn select(&self, indices: &[usize]) -> Result<Self, CorpusError> {
        let examples = indices
            .iter()
            .map(|&i| {
                self.examples.get(i).cloned().ok_or(CorpusError::Invariant {
                    kind: "sentence dataset",
                    reason: format!("example index {i} out of range"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(self.name.clone(), examples)
    }
}

/// Read a `sentence,label` CSV file into a validated [`SentenceDataset`].
pub fn load_sentence_dataset(path: impl AsRef<Path>) -> Result<SentenceDataset, CorpusError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_sentence_csv(file, &origin_of(path), &stem_of(path))
}

/// Same as [`load_sentence_dataset`] but from any reader.
pub fn read_sentence_csv(
    reader: impl Read,
    origin: &str,
    name: &str,
) -> Result<SentenceDataset, CorpusError> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    check_header(&mut csv_reader, origin, &["sentence", "label"])?;

    let mut examples = Vec::new();
    let mut issues = Vec::new();
    for record in csv_reader.records() {
        let record = record.map_err(|e| CorpusError::Format {
            origin: origin.to_string(),
            reason: format!("malformed CSV: {e}"),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let Some((sentence, label_cell)) =
            two_cells(&record, line, "sentence", "label", &mut issues)
        else {
            continue;
        };
        match SentenceLabel::parse(&label_cell) {
            Some(label) => examples.push(SentenceExample {
                text: sentence,
                label,
            }),
            None => issues.push(RowIssue {
                line,
                reason: format!(
                    "unknown label {label_cell:?} (expected sustainable or unsustainable)"
                ),
            }),
        }
    }
    if !issues.is_empty() {
        return Err(CorpusError::InvalidRows {
            origin: origin.to_string(),
            rows: issues,
        });
    }
    SentenceDataset::new(name, examples)
}

/// Serialize a sentence dataset back to `sentence,label` CSV.
pub fn write_sentence_csv(
    dataset: &SentenceDataset,
    writer: impl std::io::Write,
) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["sentence", "label"])?;
    for example in dataset.examples() {
        out.write_record([example.text.as_str(), example.label.as_str()])?;
    }
    out.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Shared CSV plumbing
// ---------------------------------------------------------------------------

fn check_header(
    reader: &mut csv::Reader<impl Read>,
    origin: &str,
    expected: &[&str; 2],
) -> Result<(), CorpusError> {
    let format_err = |reason: String| CorpusError::Format {
        origin: origin.to_string(),
        reason,
    };
    let headers = reader
        .headers()
        .map_err(|e| format_err(format!("cannot read header: {e}")))?;
    if headers.is_empty() || (headers.len() == 1 && headers[0].trim().is_empty()) {
        return Err(format_err("empty file".to_string()));
    }
    let cells: Vec<&str> = headers.iter().map(str::trim).collect();
    if cells.len() != 2 || cells[0] != expected[0] || cells[1] != expected[1] {
        return Err(format_err(format!(
            "expected header `{},{}`, found {:?}",
            expected[0],
            expected[1],
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    Ok(())
}

/// Extract and trim the two cells of a record, recording issues for empty
/// cells or wrong arity. Returns `None` when the row is unusable.
fn two_cells(
    record: &csv::StringRecord,
    line: u64,
    first_name: &str,
    second_name: &str,
    issues: &mut Vec<RowIssue>,
) -> Option<(String, String)> {
    if record.len() != 2 {
        issues.push(RowIssue {
            line,
            reason: format!("expected 2 cells, found {}", record.len()),
        });
        return None;
    }
    let first = record[0].trim().to_string();
    let second = record[1].trim().to_string();
    let mut bad = false;
    if first.is_empty() {
        issues.push(RowIssue {
            line,
            reason: format!("empty {first_name} cell"),
        });
        bad = true;
    }
    if second.is_empty() {
        issues.push(RowIssue {
            line,
            reason: format!("empty {second_name} cell"),
        });
        bad = true;
    }
    if bad {
        None
    } else {
        Some((first, second))
    }
}

fn origin_of(path: &Path) -> String {
    path.display().to_string()
}

fn stem_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string())
}

/// Per-class counts keyed by label, in a deterministic order.
pub fn class_counts(labels: &[usize]) -> BTreeMap<usize, usize> {
    let mut counts = BTreeMap::new();
    for &label in labels {
        *counts.entry(label).or_insert(0) += 1;
    }
    counts
}
