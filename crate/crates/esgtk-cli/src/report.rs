//! Human-readable tables on stdout and metadata-stamped report files.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context;
use esgtk::eval::{EvalReport, Task};
use serde::Serialize;

/// Print one line to stdout, ignoring a closed pipe so downstream `head`
/// never turns into a crash. File side effects are unaffected.
macro_rules! say {
    ($($arg:tt)*) => {
        crate::report::emit(std::format_args!($($arg)*))
    };
}
pub(crate) use say;

pub fn emit(args: std::fmt::Arguments<'_>) {
    use std::io::Write as _;
    let mut stdout = std::io::stdout().lock();
    let _ = stdout.write_fmt(args);
    let _ = stdout.write_all(b"\n");
}

/// Provenance block appended to every report file. `generated_at_unix_ms` is
/// the only field anywhere in the output that varies between identical runs.
#[derive(Serialize)]
pub struct RunMetadata {
    pub command: String,
    pub generated_at_unix_ms: u64,
    pub model: String,
    pub data: String,
    pub backend: String,
}

#[derive(Serialize)]
struct ReportDocument<'a> {
    #[serde(flatten)]
    report: &'a EvalReport,
    metadata: RunMetadata,
}

pub fn now_unix_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |elapsed| elapsed.as_millis() as u64)
}

/// Write the report plus its metadata block as pretty-printed JSON.
pub fn save_report(report: &EvalReport, metadata: RunMetadata, path: &Path) -> anyhow::Result<()> {
    let document = ReportDocument { report, metadata };
    let json = serde_json::to_string_pretty(&document).expect("report serializes");
    std::fs::write(path, json).with_context(|| format!("writing {}", path.display()))
}

/// Two fixed-width tables: overall metrics, then per-class outcomes.
pub fn print_report(report: &EvalReport) {
    let task = match report.task {
        Task::Taxonomy => "taxonomy",
        Task::Sustainability => "sustainability",
    };
    let mut pairs = vec![
        ("task", task.to_string()),
        ("accuracy", format!("{:.6}", report.accuracy)),
    ];
    if let Some(mean_rank) = report.mean_rank {
        pairs.push(("mean_rank", format!("{mean_rank:.6}")));
    }
    pairs.push(("n_samples", report.n_samples.to_string()));
    pairs.push(("config_fingerprint", report.config_fingerprint.clone()));
    print_pairs(&pairs);

    say!("");
    let class_width = report
        .per_class
        .keys()
        .map(|label| label.len())
        .chain(["class".len()])
        .max()
        .unwrap_or(5);
    say!(
        "{:<class_width$}  {:>7}  {:>7}",
        "class",
        "support",
        "correct"
    );
    for (label, outcome) in &report.per_class {
        say!(
            "{label:<class_width$}  {:>7}  {:>7}",
            outcome.support,
            outcome.correct
        );
    }
}

/// Aligned `name  value` lines.
pub fn print_pairs(pairs: &[(&str, String)]) {
    let width = pairs.iter().map(|(name, _)| name.len()).max().unwrap_or(0);
    for (name, value) in pairs {
        say!("{name:<width$}  {value}");
    }
}
