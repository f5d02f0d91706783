use std::io::IsTerminal;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use ftb_core::embed::{Embedder, EmbedderConfig, EmbedderKind, HashingEmbeddingProvider};
use ftb_core::eval::{self, EvalReport, Guide, RemoteGuideMode};
use ftb_core::ingest::{self, ArtifactLibrary, ExistsJudge, FetchOptions};
use ftb_core::metrics::score_tree;
use ftb_core::provider::{
    api_key_from_env, endpoint_base_from_env, ChatProvider, HttpChatProvider, HttpEmbeddingProvider, JsonlStore,
    ProviderConfig,
};
use ftb_core::summarize::Summarizer;
use ftb_core::tree::{build_tree_with, export_tree, import_tree, render_tree, ExportFormat, SummarizerSpec, TreeError};
use serde::Serialize;

use crate::config::RunConfig;
use crate::navigate::{run_session, Navigator};
use crate::{CliError, Outcome};

/// Width of the offline stand-in embedding.
const OFFLINE_EMBEDDING_DIM: usize = 256;

pub struct IngestOptions {
    pub sources_file: Option<PathBuf>,
    /// Remote judge model; `None` uses the deterministic judge.
    pub judge_model: Option<String>,
}

pub struct BuildOptions {
    pub library: Option<PathBuf>,
    pub exports: Vec<ExportFormat>,
    pub offline_embeddings: bool,
}

pub struct MatrixOptions {
    pub library: Option<PathBuf>,
    pub offline_embeddings: bool,
}

pub struct EvalOptions {
    pub dataset: PathBuf,
    pub tree: Option<PathBuf>,
    pub library: Option<PathBuf>,
    /// Chat model for a remote guide; `None` uses the embedding mock.
    pub remote_model: Option<String>,
    pub whole_tree: bool,
    pub beam: usize,
}

fn failed(e: impl std::fmt::Display) -> CliError {
    CliError::Failed(e.to_string())
}

fn write_output(path: &Path, content: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| failed(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, content).map_err(|e| failed(format!("{}: {e}", path.display())))
}

fn to_json(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

/// Chat provider from `FTB_API_KEY` and `FTB_ENDPOINT`. A missing key is a
/// configuration error, raised before any request is made.
pub fn chat_provider(model: &str) -> Result<Arc<dyn ChatProvider>, CliError> {
    let key = api_key_from_env().map_err(|e| CliError::Config(e.to_string()))?;
    let config = ProviderConfig {
        endpoint: format!("{}/chat/completions", endpoint_base_from_env()),
        model: model.to_string(),
        ..ProviderConfig::default()
    };
    Ok(Arc::new(HttpChatProvider::new(config, key)))
}

/// Embedder for `config`. Remote models read and fill a cache under the
/// cache directory and call the API only for misses; with `offline` they are
/// served by the hashing stand-in instead, without touching the cache.
pub fn make_embedder(config: &EmbedderConfig, run: &RunConfig, offline: bool) -> Result<Embedder, CliError> {
    if config.kind == EmbedderKind::Tfidf {
        return Embedder::new(config.clone()).map_err(failed);
    }
    if offline {
        let mut c = config.clone();
        c.cache_path = None;
        let provider = HashingEmbeddingProvider::new(c.model.clone(), OFFLINE_EMBEDDING_DIM);
        return Ok(Embedder::new(c).map_err(failed)?.with_provider(Arc::new(provider)));
    }
    let mut c = config.clone();
    if c.cache_path.is_none() {
        c.cache_path = Some(run.cache_dir().join("embeddings.jsonl"));
    }
    let embedder = Embedder::new(c.clone()).map_err(failed)?;
    Ok(match api_key_from_env() {
        Ok(key) => embedder.with_provider(Arc::new(HttpEmbeddingProvider::new(
            format!("{}/embeddings", endpoint_base_from_env()),
            c.model.clone(),
            key,
            60.0,
        ))),
        Err(_) => {
            log::info!("{} is not set; {} embeddings come from the cache only", ftb_core::provider::API_KEY_ENV, c.model);
            embedder
        }
    })
}

pub fn make_summarizer(spec: &SummarizerSpec, run: &RunConfig) -> Result<Summarizer, CliError> {
    match spec {
        SummarizerSpec::Mock => Ok(Summarizer::Mock),
        SummarizerSpec::Remote { model, max_retries } => {
            let provider = chat_provider(model)?;
            let store = JsonlStore::open(run.cache_dir().join("summaries.jsonl")).map_err(failed)?;
            Ok(Summarizer::provider(provider, *max_retries).with_cache(Arc::new(store)))
        }
    }
}

fn load_library(run: &RunConfig, path: Option<&PathBuf>) -> Result<ArtifactLibrary, CliError> {
    let path = path.cloned().unwrap_or_else(|| run.output_path("library.json"));
    ArtifactLibrary::load(&path).map_err(failed)
}

#[derive(Serialize)]
struct IngestReportFile<'a> {
    library_size: usize,
    sources: &'a [ingest::SourceStats],
    failures: Vec<FailureLine<'a>>,
}

#[derive(Serialize)]
struct FailureLine<'a> {
    source: &'a str,
    error: String,
}

/// Writes `library.json` and `ingest_report.json`. Partial when some sources
/// failed; fatal when all did.
pub fn cmd_ingest(run: &RunConfig, opts: &IngestOptions) -> Result<Outcome, CliError> {
    let sources = match &opts.sources_file {
        Some(path) => ingest::load_sources(path).map_err(failed)?,
        None => run.sources.clone(),
    };
    if sources.is_empty() {
        return Err(CliError::Usage("no sources: pass --sources or list them in the config file".into()));
    }
    let judge = match &opts.judge_model {
        None => ExistsJudge::deterministic(run.similarity_threshold).map_err(|e| CliError::Config(e.to_string()))?,
        Some(model) => ExistsJudge::remote(chat_provider(model)?, 2),
    };
    let start = Instant::now();
    let report = ingest::build_library(&sources, &judge, &FetchOptions::with_timeout(run.fetch_timeout_s)).map_err(failed)?;
    for f in &report.failures {
        eprintln!("source {} failed: {}", f.source, f.error);
    }
    if report.failures.len() == sources.len() {
        return Err(failed(format!("all {} sources failed", sources.len())));
    }
    report.library.save(&run.output_path("library.json")).map_err(failed)?;
    let file = IngestReportFile {
        library_size: report.library.len(),
        sources: &report.stats,
        failures: report
            .failures
            .iter()
            .map(|f| FailureLine {
                source: &f.source,
                error: f.error.to_string(),
            })
            .collect(),
    };
    write_output(&run.output_path("ingest_report.json"), &to_json(&file))?;
    for s in &report.stats {
        println!("{:<16} parsed {:>4}  added {:>4}  matched {:>4}", s.source, s.parsed, s.added, s.matched);
    }
    println!("library: {} artifacts", report.library.len());
    eprintln!("ingest took {:.2} s", start.elapsed().as_secs_f64());
    Ok(if report.is_partial() { Outcome::Partial } else { Outcome::Success })
}

/// Writes `tree.json`, `metrics.json`, `build_trace.json` and any extra
/// exports (`tree.dot`, `tree.md`).
pub fn cmd_build(run: &RunConfig, opts: &BuildOptions) -> Result<Outcome, CliError> {
    let solution = run.resolved_solution();
    solution.validate().map_err(|e| match e {
        TreeError::IncompatibleSolution { .. } | TreeError::InvalidConfig(_) => CliError::Usage(e.to_string()),
        other => failed(other),
    })?;
    let summarizer = make_summarizer(&solution.summarizer, run)?;
    let library = load_library(run, opts.library.as_ref())?;
    let embedder = make_embedder(&solution.embedder, run, opts.offline_embeddings)?;
    let start = Instant::now();
    let outcome = build_tree_with(&library, &solution, &embedder, &summarizer).map_err(failed)?;
    let metrics = score_tree(&outcome.tree, &Embedder::tfidf()).map_err(failed)?;
    export_tree(&outcome.tree, ExportFormat::Json, &run.output_path("tree.json")).map_err(failed)?;
    write_output(&run.output_path("metrics.json"), &metrics.to_json_string())?;
    write_output(&run.output_path("build_trace.json"), &to_json(&outcome.levels))?;
    for format in &opts.exports {
        if *format != ExportFormat::Json {
            let path = run.output_path(&format!("tree.{}", format.extension()));
            export_tree(&outcome.tree, *format, &path).map_err(failed)?;
        }
    }
    let stats = outcome.tree.stats();
    println!(
        "{}: {} layers, {} nodes, {} top features, silhouette {:.3}, gvalue_surrogate {:.3}",
        solution.label(),
        stats.layers_with_leaves,
        stats.node_count,
        stats.top_count,
        metrics.silhouette,
        metrics.gvalue_surrogate
    );
    eprintln!("build took {:.2} s", start.elapsed().as_secs_f64());
    Ok(Outcome::Success)
}

/// Writes `matrix.json` and `matrix.txt`. Partial when some rows failed.
pub fn cmd_matrix(run: &RunConfig, opts: &MatrixOptions) -> Result<Outcome, CliError> {
    let base = run.resolved_solution();
    let summarizer = make_summarizer(&base.summarizer, run)?;
    let library = load_library(run, opts.library.as_ref())?;
    let options = eval::MatrixOptions::new(base);
    let factory = |c: &EmbedderConfig| {
        make_embedder(c, run, opts.offline_embeddings)
            .map_err(|e| ftb_core::embed::EmbedError::InvalidConfig(e.to_string()))
    };
    let report = eval::run_matrix_with(&library, &options, &factory, &summarizer);
    write_output(&run.output_path("matrix.json"), &report.to_json_string())?;
    let table = report.to_table();
    write_output(&run.output_path("matrix.txt"), &table)?;
    print!("{table}");
    let failed_rows = report.failed_rows();
    if failed_rows == report.rows.len() {
        return Err(failed("every solution failed"));
    }
    Ok(if failed_rows > 0 { Outcome::Partial } else { Outcome::Success })
}

#[derive(Serialize)]
struct EvalFile<'a> {
    tree: &'a EvalReport,
    flat_baseline: &'a EvalReport,
}

/// Writes `eval.json` with tree-guided and flat precision.
pub fn cmd_eval(run: &RunConfig, opts: &EvalOptions) -> Result<Outcome, CliError> {
    let guide = match &opts.remote_model {
        None => Guide::EmbeddingMock,
        Some(model) => Guide::Remote {
            provider: chat_provider(model)?,
            mode: if opts.whole_tree { RemoteGuideMode::WholeTree } else { RemoteGuideMode::Traversal },
            max_retries: 2,
        },
    };
    if opts.beam == 0 {
        return Err(CliError::Usage("--beam must be at least 1".into()));
    }
    let tree_path = opts.tree.clone().unwrap_or_else(|| run.output_path("tree.json"));
    let tree = import_tree(&tree_path).map_err(failed)?;
    let library = load_library(run, opts.library.as_ref())?;
    tree.validate_against(&library)
        .map_err(|e| failed(format!("{} does not match the library: {e}", tree_path.display())))?;
    let dataset = eval::load_artsel(&opts.dataset, &library).map_err(failed)?;
    let start = Instant::now();
    let tree_report = eval::evaluate(&dataset, &tree, &guide, opts.beam).map_err(failed)?;
    let flat_report = eval::evaluate_flat(&dataset, &library, &guide).map_err(failed)?;
    let file = EvalFile {
        tree: &tree_report,
        flat_baseline: &flat_report,
    };
    write_output(&run.output_path("eval.json"), &to_json(&file))?;
    for s in &tree_report.samples {
        println!("{:.3}  {}  -> {}", s.precision, s.requirement, s.recommended.join(", "));
    }
    println!("{}: mean precision {:.3}", tree_report.method, tree_report.mean_precision);
    println!("{}: mean precision {:.3}", flat_report.method, flat_report.mean_precision);
    eprintln!("eval took {:.2} s", start.elapsed().as_secs_f64());
    Ok(Outcome::Success)
}

/// Interactive browser on a terminal; otherwise prints the outline.
pub fn cmd_navigate(run: &RunConfig, tree: Option<PathBuf>, library: Option<PathBuf>) -> Result<Outcome, CliError> {
    let tree_path = tree.unwrap_or_else(|| run.output_path("tree.json"));
    let tree = import_tree(&tree_path).map_err(failed)?;
    let library = match library {
        Some(p) => Some(ArtifactLibrary::load(&p).map_err(failed)?),
        None => ArtifactLibrary::load(&run.output_path("library.json")).ok(),
    };
    if std::io::stdin().is_terminal() && std::io::stdout().is_terminal() {
        let mut nav = Navigator::new(&tree, library.as_ref());
        run_session(&mut nav, std::io::stdin().lock(), std::io::stdout().lock()).map_err(failed)?;
    } else {
        print!("{}", render_tree(&tree, ExportFormat::Markdown));
    }
    Ok(Outcome::Success)
}
