//! Command-line front end: `ingest`, `build`, `matrix`, `eval` and
//! `navigate`, wired to `ftb-core`.

pub mod commands;
pub mod config;
pub mod navigate;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ftb_core::cluster::{ClusterAlgo, CnKind};
use ftb_core::embed::EmbedderConfig;
use ftb_core::tree::ExportFormat;
use thiserror::Error;

pub use commands::{cmd_build, cmd_eval, cmd_ingest, cmd_matrix, cmd_navigate, BuildOptions, EvalOptions, IngestOptions, MatrixOptions};
pub use config::RunConfig;

/// Exit status: 0 success, 1 fatal, 2 partial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Partial,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Success => 0,
            Outcome::Partial => 2,
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        1
    }
}

#[derive(Debug, Parser)]
#[command(name = "ftb", version, about = "Build, score and browse feature trees over reusable artifact libraries")]
pub struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true)]
    pub cache_dir: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fetch group metadata and merge it into a deduplicated library.
    Ingest(IngestArgs),
    /// Build a feature tree and its metric report.
    Build(BuildArgs),
    /// Build and score all 24 solutions.
    Matrix(MatrixArgs),
    /// Measure recommendation precision on an ArtSel dataset.
    Eval(EvalArgs),
    /// Browse a tree interactively (prints an outline without a terminal).
    Navigate(NavigateArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Sources file: a list of repository sources, bare or under `sources`.
    #[arg(long)]
    pub sources: Option<PathBuf>,
    /// Description similarity that counts as a duplicate.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// `deterministic` or `remote:<model>`.
    #[arg(long, default_value = "deterministic")]
    pub judge: String,
    /// Per-request fetch timeout in seconds.
    #[arg(long)]
    pub timeout: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct TreeArgs {
    /// `tfidf` or `remote:<model>`.
    #[arg(long, value_parser = config::parse_embedder)]
    pub embedder: Option<EmbedderConfig>,
    #[arg(long)]
    pub algo: Option<AlgoArg>,
    #[arg(long)]
    pub cn: Option<CnArg>,
    #[arg(long)]
    pub min_top: Option<usize>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    /// `mock` or `remote:<model>`.
    #[arg(long, value_parser = config::parse_model_choice)]
    pub summarizer: Option<Option<String>>,
    /// Serve remote embedding models from a local hashing embedder.
    #[arg(long)]
    pub offline_embeddings: bool,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    /// Library JSON; defaults to `<out>/library.json`.
    #[arg(long)]
    pub library: Option<PathBuf>,
    #[command(flatten)]
    pub tree: TreeArgs,
    /// Extra export formats besides JSON.
    #[arg(long, value_enum)]
    pub export: Vec<ExportArg>,
}

#[derive(Debug, Args)]
pub struct MatrixArgs {
    #[arg(long)]
    pub library: Option<PathBuf>,
    #[command(flatten)]
    pub tree: TreeArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// ArtSel JSON dataset.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Tree JSON; defaults to `<out>/tree.json`.
    #[arg(long)]
    pub tree: Option<PathBuf>,
    /// Library the gold ids refer to; defaults to `<out>/library.json`.
    #[arg(long)]
    pub library: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = GuideArg::Mock)]
    pub guide: GuideArg,
    /// Chat model for the remote guide.
    #[arg(long, default_value = "gpt-4")]
    pub guide_model: String,
    /// Show the remote model the whole tree at once instead of one level at a time.
    #[arg(long)]
    pub whole_tree: bool,
    #[arg(long, default_value_t = 3)]
    pub beam: usize,
}

#[derive(Debug, Args)]
pub struct NavigateArgs {
    #[arg(long)]
    pub tree: Option<PathBuf>,
    /// Library for provenance at leaves.
    #[arg(long)]
    pub library: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlgoArg {
    Kmeans,
    Gmm,
    Hierarchical,
}

impl From<AlgoArg> for ClusterAlgo {
    fn from(a: AlgoArg) -> Self {
        match a {
            AlgoArg::Kmeans => ClusterAlgo::Kmeans,
            AlgoArg::Gmm => ClusterAlgo::Gmm,
            AlgoArg::Hierarchical => ClusterAlgo::Hierarchical,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CnArg {
    Elbow,
    Silhouette,
    Bic,
    None,
}

impl From<CnArg> for CnKind {
    fn from(c: CnArg) -> Self {
        match c {
            CnArg::Elbow => CnKind::Elbow,
            CnArg::Silhouette => CnKind::Silhouette,
            CnArg::Bic => CnKind::Bic,
            CnArg::None => CnKind::None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExportArg {
    Json,
    Dot,
    Markdown,
}

impl From<ExportArg> for ExportFormat {
    fn from(e: ExportArg) -> Self {
        match e {
            ExportArg::Json => ExportFormat::Json,
            ExportArg::Dot => ExportFormat::Dot,
            ExportArg::Markdown => ExportFormat::Markdown,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GuideArg {
    Mock,
    Remote,
}

fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        config.jobs = Some(jobs);
    }
    if let Some(dir) = &cli.cache_dir {
        config.cache_dir = Some(dir.clone());
    }
    if let Some(dir) = &cli.out {
        config.output_dir = dir.clone();
    }
    Ok(config)
}

/// Applies tree flags on top of the configured solution.
pub fn apply_tree_args(config: &mut RunConfig, args: &TreeArgs) {
    let s = &mut config.solution;
    if let Some(e) = &args.embedder {
        s.embedder = e.clone();
    }
    if let Some(a) = args.algo {
        s.algo = a.into();
    }
    if let Some(c) = args.cn {
        s.cn.kind = c.into();
    } else if args.algo.is_some() {
        // the configured selector may not suit the new algorithm
        let kind = s.cn.kind;
        if !ftb_core::cluster::is_compatible(s.algo, kind) {
            s.cn.kind = match s.algo {
                ClusterAlgo::Hierarchical => CnKind::None,
                _ => CnKind::Silhouette,
            };
        }
    }
    if let Some(m) = args.min_top {
        s.stop.min_top_count = m;
    }
    if let Some(d) = args.max_depth {
        s.stop.max_depth = d;
    }
    if let Some(choice) = &args.summarizer {
        s.summarizer = match choice {
            None => ftb_core::tree::SummarizerSpec::Mock,
            Some(model) => ftb_core::tree::SummarizerSpec::Remote {
                model: model.clone(),
                max_retries: 2,
            },
        };
    }
}

fn dispatch(cli: Cli) -> Result<Outcome, CliError> {
    let mut config = resolve_config(&cli)?;
    if let Some(jobs) = config.jobs {
        // fails only if a pool already exists, which is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    match cli.command {
        Command::Ingest(a) => {
            if let Some(t) = a.threshold {
                config.similarity_threshold = t;
            }
            if let Some(t) = a.timeout {
                config.fetch_timeout_s = t;
            }
            let judge_model = match a.judge.as_str() {
                "deterministic" => None,
                other => match other.split_once(':') {
                    Some(("remote", m)) if !m.trim().is_empty() => Some(m.trim().to_string()),
                    _ => return Err(CliError::Usage(format!("--judge expects `deterministic` or `remote:<model>`, got `{other}`"))),
                },
            };
            cmd_ingest(
                &config,
                &IngestOptions {
                    sources_file: a.sources,
                    judge_model,
                },
            )
        }
        Command::Build(a) => {
            apply_tree_args(&mut config, &a.tree);
            cmd_build(
                &config,
                &BuildOptions {
                    library: a.library,
                    exports: a.export.into_iter().map(Into::into).collect(),
                    offline_embeddings: a.tree.offline_embeddings,
                },
            )
        }
        Command::Matrix(a) => {
            apply_tree_args(&mut config, &a.tree);
            cmd_matrix(
                &config,
                &MatrixOptions {
                    library: a.library,
                    offline_embeddings: a.tree.offline_embeddings,
                },
            )
        }
        Command::Eval(a) => cmd_eval(
            &config,
            &EvalOptions {
                dataset: a.dataset,
                tree: a.tree,
                library: a.library,
                remote_model: (a.guide == GuideArg::Remote).then_some(a.guide_model),
                whole_tree: a.whole_tree,
                beam: a.beam,
            },
        ),
        Command::Navigate(a) => cmd_navigate(&config, a.tree, a.library),
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(outcome) => outcome.exit_code(),
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
