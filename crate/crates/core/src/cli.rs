//! Command-line front end. Exit codes: 0 success, 2 bad input or usage,
//! 3 backend failure, 1 anything else.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use crate::backend::{BackendConfig, BackendError, Cache, Embedder, Endpoint};
use crate::harness::{
    self, filter_split, load_cluster_corpus, load_csts, ClusterRecord, ClusterSettings, CstsRecord, DataFormat,
    EvalReport, HarnessError, Session, Split, Summarize, ToTsv,
};
use crate::projection::{self, ProjectedPoint, ProjectionError, TsneConfig};
use crate::prompting::{self, PromptError, PromptTemplate, DEFAULT_TEMPLATE_ID};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

fn backend_code(e: &BackendError) -> u8 {
    match e.root() {
        BackendError::Config(_) => 2,
        BackendError::Cache(_) => 1,
        _ => 3,
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Backend(e) => backend_code(e),
            Self::Harness(HarnessError::Backend(e)) => backend_code(e),
            Self::Harness(HarnessError::Report(_)) | Self::Output { .. } => 1,
            Self::Harness(_) | Self::Prompt(_) | Self::Projection(_) | Self::Usage(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ponte", version, about = "Conditional text embeddings from one-word prompts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Embed one text and print the vector and generated word as JSON.
    Embed(EmbedArgs),
    /// Correlate conditional cosine similarities with C-STS gold scores.
    CstsEval(CstsArgs),
    /// Cluster a labelled corpus under one condition and report V-measure.
    ClusterEval(ClusterArgs),
    /// Rank prompt templates by Spearman correlation on C-STS data.
    TemplateSearch(TemplateSearchArgs),
    /// Rank conditions by mean V-measure on a labelled corpus.
    ConditionSearch(ClusterArgs),
    /// Project conditional embeddings to 2-D with t-SNE (TSV and optional SVG).
    Project(ProjectArgs),
    /// Inspect or empty the embedding cache.
    Cache(CacheArgs),
}

#[derive(Debug, Clone, Args)]
pub struct BackendArgs {
    /// Sidecar base URL, or `mock[:dim[:seed]]` for the offline mock.
    #[arg(long, env = "PONTE_BACKEND_URL", default_value = "mock")]
    pub backend_url: String,
    /// Model id; required for a sidecar, derived for the mock.
    #[arg(long)]
    pub model_id: Option<String>,
    /// Hidden layer to read; negative counts from the last.
    #[arg(long, default_value_t = -1, allow_negative_numbers = true)]
    pub layer: i32,
    /// Ask the backend for the word the model would generate.
    #[arg(long)]
    pub generate_words: bool,
    #[arg(long, default_value_t = 4)]
    pub max_parallel: usize,
    /// Per-request timeout in seconds.
    #[arg(long, default_value_t = 120)]
    pub timeout: u64,
    #[arg(long, env = "PONTE_CACHE_DIR")]
    pub cache_dir: Option<PathBuf>,
}

impl BackendArgs {
    fn config(&self) -> Result<BackendConfig, CliError> {
        let endpoint = Endpoint::parse(&self.backend_url)?;
        let mut config = match (&endpoint, &self.model_id) {
            (Endpoint::Mock { dim, seed }, None) => BackendConfig::mock(*dim, *seed),
            (_, Some(id)) => BackendConfig::new(endpoint.clone(), id.clone()),
            (Endpoint::Http { .. }, None) => {
                return Err(CliError::Usage("--model-id is required with a sidecar --backend-url".into()));
            }
        };
        config.layer_index = self.layer;
        config.generate_words = self.generate_words;
        config.max_parallel_requests = self.max_parallel;
        config.request_timeout = Duration::from_secs(self.timeout);
        config.validate()?;
        Ok(config)
    }

    fn open(&self) -> Result<(Embedder, Option<Cache>), CliError> {
        let embedder = Embedder::new(self.config()?)?;
        let cache = self.cache_dir.as_ref().map(Cache::open).transpose()?;
        Ok((embedder, cache))
    }
}

#[derive(Debug, Clone, Args)]
pub struct TemplateArgs {
    /// Template id, e.g. T9 or PromptEOL.
    #[arg(long, default_value = DEFAULT_TEMPLATE_ID)]
    pub template: String,
    /// Extra templates, one `id<TAB>pattern` per line.
    #[arg(long)]
    pub templates_file: Option<PathBuf>,
}

impl TemplateArgs {
    fn all(&self) -> Result<Vec<PromptTemplate>, CliError> {
        let mut templates = prompting::registry();
        if let Some(path) = &self.templates_file {
            for t in prompting::load_templates(path)? {
                if prompting::find(&templates, t.id()).is_ok() {
                    return Err(CliError::Usage(format!("template id {} is already built in", t.id())));
                }
                templates.push(t);
            }
        }
        Ok(templates)
    }

    fn selected(&self) -> Result<PromptTemplate, CliError> {
        Ok(prompting::find(&self.all()?, &self.template)?.clone())
    }
}

#[derive(Debug, Clone, Args)]
pub struct DatasetArgs {
    /// CSV or JSON Lines file.
    #[arg(long)]
    pub dataset: PathBuf,
    /// `csv` or `jsonl`; inferred from the extension when omitted.
    #[arg(long)]
    pub format: Option<DataFormat>,
    /// Keep only rows of this split.
    #[arg(long)]
    pub split: Option<Split>,
}

impl DatasetArgs {
    fn format(&self) -> Result<DataFormat, CliError> {
        match self.format {
            Some(f) => Ok(f),
            None => Ok(DataFormat::from_path(&self.dataset)?),
        }
    }

    fn name(&self) -> String {
        self.dataset
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into())
    }

    fn csts(&self) -> Result<Vec<CstsRecord>, CliError> {
        let records = load_csts(&self.dataset, self.format()?)?;
        Ok(filter_split(&records, self.split, |r| r.split))
    }

    fn clusters(&self) -> Result<Vec<ClusterRecord>, CliError> {
        let records = load_cluster_corpus(&self.dataset, self.format()?)?;
        Ok(filter_split(&records, self.split, |r| r.split))
    }
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Directory for the JSON report; printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write a TSV flattening next to the JSON report.
    #[arg(long, requires = "out")]
    pub tsv: bool,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[command(flatten)]
    pub backend: BackendArgs,
    #[command(flatten)]
    pub templates: TemplateArgs,
    #[arg(long)]
    pub text: String,
    #[arg(long, default_value = "")]
    pub condition: String,
}

#[derive(Debug, Args)]
pub struct CstsArgs {
    #[command(flatten)]
    pub backend: BackendArgs,
    #[command(flatten)]
    pub templates: TemplateArgs,
    #[command(flatten)]
    pub data: DatasetArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[command(flatten)]
    pub backend: BackendArgs,
    #[command(flatten)]
    pub templates: TemplateArgs,
    #[command(flatten)]
    pub data: DatasetArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    /// Condition text; cluster-eval takes one, condition-search one or more.
    #[arg(long, required = true)]
    pub condition: Vec<String>,
    /// Number of clusters; defaults to the number of gold labels.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = crate::clustering::DEFAULT_SEEDS)]
    pub seeds: Vec<u64>,
    /// Cluster raw embeddings instead of L2-normalized ones.
    #[arg(long)]
    pub no_normalize: bool,
    /// k-means++ restarts per seed.
    #[arg(long, default_value_t = 10)]
    pub n_init: usize,
}

impl ClusterArgs {
    fn settings(&self) -> ClusterSettings {
        ClusterSettings {
            k: self.k,
            seeds: self.seeds.clone(),
            normalize: !self.no_normalize,
            n_init: self.n_init,
        }
    }
}

#[derive(Debug, Args)]
pub struct TemplateSearchArgs {
    #[command(flatten)]
    pub backend: BackendArgs,
    #[command(flatten)]
    pub templates: TemplateArgs,
    #[command(flatten)]
    pub data: DatasetArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    /// Template ids to compare; defaults to every known template.
    #[arg(long = "candidates", value_delimiter = ',')]
    pub candidates: Vec<String>,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    #[command(flatten)]
    pub backend: BackendArgs,
    #[command(flatten)]
    pub templates: TemplateArgs,
    #[command(flatten)]
    pub data: DatasetArgs,
    /// Condition text; repeat to overlay several conditions in one layout.
    #[arg(long, required = true)]
    pub condition: Vec<String>,
    /// TSV destination; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also render an SVG scatter here.
    #[arg(long)]
    pub svg: Option<PathBuf>,
    #[arg(long, default_value_t = 30.0)]
    pub perplexity: f64,
    #[arg(long, default_value_t = 1000)]
    pub iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct CacheArgs {
    #[arg(long, env = "PONTE_CACHE_DIR")]
    pub cache_dir: PathBuf,
    #[command(subcommand)]
    pub action: CacheAction,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum CacheAction {
    Stats,
    Clear,
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| CliError::Output {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| CliError::Output {
        path: path.to_path_buf(),
        source,
    })
}

fn print_stdout(s: &str) -> Result<(), CliError> {
    io::stdout().write_all(s.as_bytes()).map_err(|source| CliError::Output {
        path: PathBuf::from("<stdout>"),
        source,
    })
}

fn emit<I, S>(report: &EvalReport<I, S>, output: &OutputArgs) -> Result<(), CliError>
where
    I: Summarize<Summary = S> + Serialize + serde::de::DeserializeOwned,
    S: Serialize + serde::de::DeserializeOwned + PartialEq,
    EvalReport<I, S>: ToTsv,
{
    match &output.out {
        None => print_stdout(&report.to_json()),
        Some(dir) => {
            let path = report.write_to_dir(dir)?;
            eprintln!("wrote {}", path.display());
            if output.tsv {
                let tsv = path.with_extension("tsv");
                write_file(&tsv, &report.to_tsv())?;
                eprintln!("wrote {}", tsv.display());
            }
            Ok(())
        }
    }
}

fn single_condition(conditions: &[String]) -> Result<&str, CliError> {
    match conditions {
        [one] => Ok(one),
        _ => Err(CliError::Usage(format!(
            "cluster-eval takes exactly one --condition, got {}; use condition-search to compare several",
            conditions.len()
        ))),
    }
}

#[derive(Serialize)]
struct EmbedOutput<'a> {
    rendered: &'a str,
    model_id: &'a str,
    layer_index: i32,
    dim: usize,
    generated_word: Option<&'a str>,
    embedding: &'a [f32],
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Embed(a) => {
            let (embedder, cache) = a.backend.open()?;
            let template = a.templates.selected()?;
            let prompt = template.render(&a.text, &a.condition)?;
            let r = embedder.embed_batch(std::slice::from_ref(&prompt), cache.as_ref())?.remove(0);
            let out = EmbedOutput {
                rendered: prompt.rendered(),
                model_id: &r.model_id,
                layer_index: r.layer_index,
                dim: r.embedding.dim(),
                generated_word: r.generated_word.as_deref(),
                embedding: r.embedding.as_slice(),
            };
            let json = serde_json::to_string_pretty(&out).expect("plain data serializes");
            print_stdout(&(json + "\n"))
        }
        Command::CstsEval(a) => {
            let (embedder, cache) = a.backend.open()?;
            let template = a.templates.selected()?;
            let records = a.data.csts()?;
            let name = a.data.name();
            let report = harness::csts_eval(&Session::new(&embedder, cache.as_ref(), &name), &records, &template)?;
            eprintln!(
                "{} on {}: spearman {:.4}, pearson {:.4} (n = {})",
                template.id(),
                name,
                report.summary.spearman_rho,
                report.summary.pearson_r,
                report.summary.n
            );
            emit(&report, &a.output)
        }
        Command::ClusterEval(a) => {
            let condition = single_condition(&a.condition)?;
            let (embedder, cache) = a.backend.open()?;
            let template = a.templates.selected()?;
            let records = a.data.clusters()?;
            let name = a.data.name();
            let session = Session::new(&embedder, cache.as_ref(), &name);
            let report = harness::cluster_eval(&session, &records, &template, condition, &a.settings())?;
            eprintln!(
                "{} / {:?} on {}: mean V-measure {:.4} over {} seeds (k = {})",
                template.id(),
                condition,
                name,
                report.summary.mean.v_measure,
                report.summary.per_seed.len(),
                report.summary.k
            );
            emit(&report, &a.output)
        }
        Command::ConditionSearch(a) => {
            let (embedder, cache) = a.backend.open()?;
            let template = a.templates.selected()?;
            let records = a.data.clusters()?;
            let name = a.data.name();
            let session = Session::new(&embedder, cache.as_ref(), &name);
            let report = harness::condition_search(&session, &records, &template, &a.condition, &a.settings())?;
            for r in &report.summary.ranking {
                eprintln!("{:.4}\t{}{}", r.mean.v_measure, r.condition, if r.selected { "\t*" } else { "" });
            }
            emit(&report, &a.output)
        }
        Command::TemplateSearch(a) => {
            let (embedder, cache) = a.backend.open()?;
            let all = a.templates.all()?;
            let candidates = if a.candidates.is_empty() {
                all
            } else {
                a.candidates
                    .iter()
                    .map(|id| prompting::find(&all, id).cloned())
                    .collect::<Result<Vec<_>, _>>()?
            };
            let records = a.data.csts()?;
            let name = a.data.name();
            let session = Session::new(&embedder, cache.as_ref(), &name);
            let report = harness::template_search(&session, &records, &candidates)?;
            for r in &report.summary.ranking {
                eprintln!(
                    "{}\t{:.4}\t{:.4}{}",
                    r.template_id,
                    r.spearman_rho,
                    r.pearson_r,
                    if r.selected { "\t*" } else { "" }
                );
            }
            emit(&report, &a.output)
        }
        Command::Project(a) => project(a),
        Command::Cache(a) => {
            let cache = Cache::open(&a.cache_dir)?;
            match a.action {
                CacheAction::Stats => {
                    let s = cache.stats()?;
                    print_stdout(&format!("entries\t{}\nbytes\t{}\n", s.entries, s.bytes))
                }
                CacheAction::Clear => {
                    let n = cache.clear()?;
                    print_stdout(&format!("removed\t{n}\n"))
                }
            }
        }
    }
}

fn project(a: ProjectArgs) -> Result<(), CliError> {
    let (embedder, cache) = a.backend.open()?;
    let template = a.templates.selected()?;
    let records = a.data.clusters()?;
    let mut prompts = Vec::with_capacity(records.len() * a.condition.len());
    let mut meta = Vec::with_capacity(prompts.capacity());
    for condition in &a.condition {
        for r in &records {
            prompts.push(template.render(&r.text, condition)?);
            meta.push((r.label.clone(), condition.clone()));
        }
    }
    let embedded = embedder.embed_batch(&prompts, cache.as_ref())?;
    let vectors: Vec<&[f32]> = embedded.iter().map(|e| e.embedding.as_slice()).collect();
    let config = TsneConfig {
        perplexity: a.perplexity,
        iters: a.iters,
        seed: a.seed,
        ..TsneConfig::default()
    };
    let layout = projection::tsne(&vectors, &config)?;
    eprintln!(
        "t-SNE over {} points: perplexity {:.2}, KL {:.4} -> {:.4}",
        vectors.len(),
        layout.perplexity_used,
        layout.kl_initial,
        layout.kl_final
    );
    let points: Vec<ProjectedPoint> = layout
        .coords
        .iter()
        .zip(meta)
        .zip(&embedded)
        .map(|((xy, (label, condition)), e)| ProjectedPoint {
            x: xy[0],
            y: xy[1],
            label,
            generated_word: e.generated_word.clone(),
            condition,
        })
        .collect();
    let mut tsv = Vec::new();
    projection::write_tsv(&mut tsv, &points).expect("writing to memory cannot fail");
    let tsv = String::from_utf8(tsv).expect("TSV is built from UTF-8 strings");
    match &a.out {
        Some(path) => write_file(path, &tsv)?,
        None => print_stdout(&tsv)?,
    }
    if let Some(svg) = &a.svg {
        write_file(svg, &projection::render_svg(&points, 800, 600))?;
    }
    Ok(())
}

/// Parses arguments, runs the command and maps failures to exit codes.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_code())
        }
    }
}
