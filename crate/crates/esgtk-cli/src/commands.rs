//! Implementations of the nine subcommands.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use esgtk::concept::{self, TrainConfig};
use esgtk::corpus::{
    load_sentence_dataset, load_taxonomy, merge_taxonomies, write_sentence_csv, write_taxonomy_csv,
    SentenceDataset, Taxonomy,
};
use esgtk::embedding::{BackendRegistry, CachedEmbedder, TextEmbedder, VectorCache};
use esgtk::eval::{evaluate_sentence_model, evaluate_taxonomy_model, stratified_split};
use esgtk::sustainability::{self, EncoderBinding, FitConfig};
use serde::Serialize;

use crate::cli::{
    ClassifyArgs, Command, ConfigOverlay, DatasetKind, EnrichArgs, EvaluateSentencesArgs,
    EvaluateTaxonomyArgs, IngestArgs, MergeTaxonomyArgs, SplitArgs, TrainSentencesArgs,
    TrainTaxonomyArgs,
};
use crate::report::{self, say};

pub fn run(command: Command) -> anyhow::Result<()> {
    let overlay = ConfigOverlay::from_env()?;
    match command {
        Command::Ingest(args) => ingest(args),
        Command::Split(args) => split(args, &overlay),
        Command::TrainTaxonomy(args) => train_taxonomy(args, &overlay),
        Command::Enrich(args) => enrich(args, &overlay),
        Command::TrainSentences(args) => train_sentences(args, &overlay),
        Command::Classify(args) => classify(args),
        Command::EvaluateTaxonomy(args) => evaluate_taxonomy(args, &overlay),
        Command::EvaluateSentences(args) => evaluate_sentences(args, &overlay),
        Command::MergeTaxonomy(args) => merge_taxonomy(args),
    }
}

/// Resolve a backend id against the built-in registry, wrapping it in a
/// file-backed vector cache when `ESGTK_CACHE_DIR` is set.
fn resolve_backend(id: &str) -> anyhow::Result<Box<dyn TextEmbedder>> {
    let backend = BackendRegistry::with_builtins()
        .resolve(id)
        .with_context(|| format!("resolving embedding backend {id:?}"))?;
    match std::env::var_os("ESGTK_CACHE_DIR") {
        None => Ok(backend),
        Some(dir) => Ok(Box::new(CachedEmbedder::new(
            backend,
            VectorCache::new(PathBuf::from(dir)),
        ))),
    }
}

fn required_backend(flag: Option<String>, overlay: &ConfigOverlay) -> anyhow::Result<String> {
    flag.or_else(|| overlay.backend.clone())
        .context("no embedding backend: pass --backend or set one in the ESGTK_CONFIG file")
}

fn create_file(path: &Path) -> anyhow::Result<std::fs::File> {
    std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))
}

fn read_nonblank_lines(path: &Path) -> anyhow::Result<Vec<String>> {
    let content =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(content
        .lines()
        .map(str::trim)
        .filter(|line| !line.is_empty())
        .map(str::to_string)
        .collect())
}

/// Emit one JSON document per line, to `out` when given and stdout otherwise.
fn write_jsonl<T: Serialize>(rows: &[T], out: Option<&Path>) -> anyhow::Result<()> {
    let mut buffer = String::new();
    for row in rows {
        buffer.push_str(&serde_json::to_string(row).expect("output rows serialize"));
        buffer.push('\n');
    }
    match out {
        Some(path) => {
            std::fs::write(path, buffer).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            let _ = stdout.write_all(buffer.as_bytes());
            let _ = stdout.flush();
            Ok(())
        }
    }
}

fn write_taxonomy_file(taxonomy: &Taxonomy, path: &Path) -> anyhow::Result<()> {
    write_taxonomy_csv(taxonomy, create_file(path)?)
        .with_context(|| format!("writing {}", path.display()))
}

fn write_sentences_file(dataset: &SentenceDataset, path: &Path) -> anyhow::Result<()> {
    write_sentence_csv(dataset, create_file(path)?)
        .with_context(|| format!("writing {}", path.display()))
}

fn ingest(args: IngestArgs) -> anyhow::Result<()> {
    match args.kind {
        DatasetKind::Taxonomy => {
            let load = load_taxonomy(&args.input)?;
            let taxonomy = &load.taxonomy;
            report::print_pairs(&[
                ("dataset", taxonomy.name().to_string()),
                ("kind", "taxonomy".to_string()),
                ("concepts", taxonomy.concept_count().to_string()),
                ("terms", taxonomy.term_count().to_string()),
                ("duplicates_dropped", load.duplicates_dropped.to_string()),
            ]);
            if let Some(out) = &args.out {
                write_taxonomy_file(taxonomy, out)?;
                say!("wrote {}", out.display());
            }
        }
        DatasetKind::Sentences => {
            let dataset = load_sentence_dataset(&args.input)?;
            let sustainable = dataset.count(esgtk::corpus::SentenceLabel::Sustainable);
            let unsustainable = dataset.count(esgtk::corpus::SentenceLabel::Unsustainable);
            report::print_pairs(&[
                ("dataset", dataset.name().to_string()),
                ("kind", "sentences".to_string()),
                ("sentences", dataset.len().to_string()),
                ("sustainable", sustainable.to_string()),
                ("unsustainable", unsustainable.to_string()),
            ]);
            if let Some(out) = &args.out {
                write_sentences_file(&dataset, out)?;
                say!("wrote {}", out.display());
            }
        }
    }
    Ok(())
}

/// Decide which schema a CSV follows by its header row.
fn sniff_kind(path: &Path) -> anyhow::Result<DatasetKind> {
    let content =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let header = content
        .lines()
        .next()
        .unwrap_or("")
        .trim_start_matches('\u{feff}')
        .trim();
    match header.to_ascii_lowercase().as_str() {
        "term,concept" => Ok(DatasetKind::Taxonomy),
        "sentence,label" => Ok(DatasetKind::Sentences),
        other => bail!(
            "cannot determine the schema of {}: expected header \"term,concept\" or \
             \"sentence,label\", found {other:?}",
            path.display()
        ),
    }
}

fn split(args: SplitArgs, overlay: &ConfigOverlay) -> anyhow::Result<()> {
    let ratio = args.ratio.or(overlay.ratio).unwrap_or(0.7);
    let seed = args.seed.or(overlay.seed).unwrap_or(0);
    let (total, train_len, dev_len) = match sniff_kind(&args.input)? {
        DatasetKind::Taxonomy => {
            let taxonomy = load_taxonomy(&args.input)?.taxonomy;
            let result = stratified_split(&taxonomy.term_labels(), ratio, seed)?;
            write_taxonomy_file(
                &taxonomy.select_terms(&result.train_indices)?,
                &args.out_train,
            )?;
            write_taxonomy_file(&taxonomy.select_terms(&result.dev_indices)?, &args.out_dev)?;
            (
                taxonomy.term_count(),
                result.train_indices.len(),
                result.dev_indices.len(),
            )
        }
        DatasetKind::Sentences => {
            let dataset = load_sentence_dataset(&args.input)?;
            let result = stratified_split(&dataset.label_indices(), ratio, seed)?;
            write_sentences_file(&dataset.select(&result.train_indices)?, &args.out_train)?;
            write_sentences_file(&dataset.select(&result.dev_indices)?, &args.out_dev)?;
            (
                dataset.len(),
                result.train_indices.len(),
                result.dev_indices.len(),
            )
        }
    };
    report::print_pairs(&[
        ("samples", total.to_string()),
        ("train", train_len.to_string()),
        ("dev", dev_len.to_string()),
        ("ratio", format!("{ratio}")),
        ("seed", seed.to_string()),
    ]);
    say!("wrote {}", args.out_train.display());
    say!("wrote {}", args.out_dev.display());
    Ok(())
}

fn train_taxonomy(args: TrainTaxonomyArgs, overlay: &ConfigOverlay) -> anyhow::Result<()> {
    let taxonomy = load_taxonomy(&args.data)?.taxonomy;
    let backend_id = required_backend(args.backend, overlay)?;
    let backend = resolve_backend(&backend_id)?;

    let defaults = TrainConfig::default();
    let config = TrainConfig {
        l2_strength: args
            .l2_strength
            .or(overlay.l2_strength)
            .unwrap_or(defaults.l2_strength),
        max_iterations: args
            .max_iterations
            .or(overlay.max_iterations)
            .unwrap_or(defaults.max_iterations),
        tolerance: args
            .tolerance
            .or(overlay.tolerance)
            .unwrap_or(defaults.tolerance),
        seed: args.seed.or(overlay.seed).unwrap_or(defaults.seed),
        normalize_embeddings: args.normalize_embeddings
            || overlay
                .normalize_embeddings
                .unwrap_or(defaults.normalize_embeddings),
    };

    let embeddings = backend.embed_batch(&taxonomy.term_texts())?;
    let (model, summary) = concept::fit(
        &embeddings,
        &taxonomy.term_labels(),
        taxonomy.concepts(),
        &config,
    )?;
    concept::save_model(&model, &args.out)?;
    report::print_pairs(&[
        ("concepts", model.class_count().to_string()),
        ("terms", taxonomy.term_count().to_string()),
        ("backend", backend_id),
        ("stop", format!("{:?}", summary.stop)),
        ("iterations", summary.iterations.to_string()),
        ("final_loss", format!("{:.6}", summary.final_loss)),
        (
            "final_gradient_norm",
            format!("{:.3e}", summary.final_gradient_norm),
        ),
    ]);
    say!("wrote {}", args.out.display());
    Ok(())
}

#[derive(Serialize)]
struct ConceptScore {
    concept: String,
    probability: f64,
}

#[derive(Serialize)]
struct EnrichedTerm {
    term: String,
    concepts: Vec<ConceptScore>,
}

fn enrich(args: EnrichArgs, overlay: &ConfigOverlay) -> anyhow::Result<()> {
    let model = concept::load_model(&args.model)?;
    let top_k = args.top_k.or(overlay.top_k).unwrap_or(3);
    if top_k == 0 {
        bail!("--top-k must be at least 1");
    }
    let backend = resolve_backend(model.backend_id())?;
    let terms = read_nonblank_lines(&args.terms)?;
    if terms.is_empty() {
        bail!("{} contains no terms", args.terms.display());
    }
    let mut rows = Vec::with_capacity(terms.len());
    for term in terms {
        let embedding = backend.embed(&term)?;
        let ranked = model.rank_concepts(&embedding)?;
        let concepts = ranked
            .into_iter()
            .take(top_k)
            .map(|(concept, probability)| ConceptScore {
                concept,
                probability,
            })
            .collect();
        rows.push(EnrichedTerm { term, concepts });
    }
    write_jsonl(&rows, args.out.as_deref())
}

fn train_sentences(args: TrainSentencesArgs, overlay: &ConfigOverlay) -> anyhow::Result<()> {
    let dataset = load_sentence_dataset(&args.data)?;
    let backend_id = required_backend(args.backend, overlay)?;
    let backend = resolve_backend(&backend_id)?;

    let defaults = FitConfig::default();
    let config = FitConfig {
        epochs: args.epochs.or(overlay.epochs).unwrap_or(defaults.epochs),
        batch_size: args
            .batch_size
            .or(overlay.batch_size)
            .unwrap_or(defaults.batch_size),
        learning_rate: args
            .learning_rate
            .or(overlay.learning_rate)
            .unwrap_or(defaults.learning_rate),
        seed: args.seed.or(overlay.seed).unwrap_or(defaults.seed),
        hidden_dim: args
            .hidden_dim
            .or(overlay.hidden_dim)
            .unwrap_or(defaults.hidden_dim),
    };

    let (model, summary) =
        sustainability::train(&dataset, EncoderBinding::Frozen(backend.as_ref()), &config)?;
    sustainability::save_model(&model, &args.out)?;
    let final_loss = summary
        .epoch_losses
        .last()
        .map_or("-".to_string(), |loss| format!("{loss:.6}"));
    report::print_pairs(&[
        ("sentences", dataset.len().to_string()),
        ("backend", backend_id),
        ("epochs", config.epochs.to_string()),
        ("batch_size", config.batch_size.to_string()),
        ("learning_rate", format!("{}", config.learning_rate)),
        ("hidden_dim", config.hidden_dim.to_string()),
        ("final_epoch_loss", final_loss),
    ]);
    say!("wrote {}", args.out.display());
    Ok(())
}

#[derive(Serialize)]
struct ClassifiedSentence {
    sentence: String,
    label: &'static str,
    probability: f64,
}

fn classify(args: ClassifyArgs) -> anyhow::Result<()> {
    let model = sustainability::load_model(&args.model)?;
    let backend = resolve_backend(model.backend_id())?;
    let sentences = read_nonblank_lines(&args.input)?;
    if sentences.is_empty() {
        bail!("{} contains no sentences", args.input.display());
    }
    let mut rows = Vec::with_capacity(sentences.len());
    for sentence in sentences {
        let prediction = model.classify(backend.as_ref(), &sentence)?;
        rows.push(ClassifiedSentence {
            sentence,
            label: prediction.label.as_str(),
            probability: prediction.probability,
        });
    }
    write_jsonl(&rows, args.out.as_deref())
}

fn evaluate_taxonomy(args: EvaluateTaxonomyArgs, overlay: &ConfigOverlay) -> anyhow::Result<()> {
    let model = concept::load_model(&args.model)?;
    let backend_id = args
        .backend
        .or_else(|| overlay.backend.clone())
        .unwrap_or_else(|| model.backend_id().to_string());
    let backend = resolve_backend(&backend_id)?;
    let taxonomy = load_taxonomy(&args.data)?.taxonomy;
    let terms = taxonomy.term_texts();
    let golds: Vec<String> = taxonomy
        .terms()
        .iter()
        .map(|term| taxonomy.concepts()[term.concept].clone())
        .collect();
    let evaluation = evaluate_taxonomy_model(&model, backend.as_ref(), &terms, &golds)?;
    report::print_report(&evaluation);
    if let Some(path) = &args.report {
        report::save_report(
            &evaluation,
            report::RunMetadata {
                command: "evaluate-taxonomy".to_string(),
                generated_at_unix_ms: report::now_unix_ms(),
                model: args.model.display().to_string(),
                data: args.data.display().to_string(),
                backend: backend_id,
            },
            path,
        )?;
        say!("wrote {}", path.display());
    }
    Ok(())
}

fn evaluate_sentences(args: EvaluateSentencesArgs, overlay: &ConfigOverlay) -> anyhow::Result<()> {
    let model = sustainability::load_model(&args.model)?;
    let backend_id = args
        .backend
        .or_else(|| overlay.backend.clone())
        .unwrap_or_else(|| model.backend_id().to_string());
    let backend = resolve_backend(&backend_id)?;
    let dataset = load_sentence_dataset(&args.data)?;
    let evaluation = evaluate_sentence_model(&model, backend.as_ref(), &dataset)?;
    report::print_report(&evaluation);
    if let Some(path) = &args.report {
        report::save_report(
            &evaluation,
            report::RunMetadata {
                command: "evaluate-sentences".to_string(),
                generated_at_unix_ms: report::now_unix_ms(),
                model: args.model.display().to_string(),
                data: args.data.display().to_string(),
                backend: backend_id,
            },
            path,
        )?;
        say!("wrote {}", path.display());
    }
    Ok(())
}

fn merge_taxonomy(args: MergeTaxonomyArgs) -> anyhow::Result<()> {
    let base = load_taxonomy(&args.base)?.taxonomy;
    let extension = load_taxonomy(&args.extension)?.taxonomy;
    let merged = merge_taxonomies(&base, &extension)?;
    write_taxonomy_file(&merged, &args.out)?;
    report::print_pairs(&[
        (
            "base",
            format!(
                "{} concepts, {} terms",
                base.concept_count(),
                base.term_count()
            ),
        ),
        (
            "extension",
            format!(
                "{} concepts, {} terms",
                extension.concept_count(),
                extension.term_count()
            ),
        ),
        (
            "merged",
            format!(
                "{} concepts, {} terms",
                merged.concept_count(),
                merged.term_count()
            ),
        ),
    ]);
    say!("wrote {}", args.out.display());
    Ok(())
}
