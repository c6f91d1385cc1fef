mod config;
mod events;
mod query;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use skg_core::graph::ExportFormat;

use config::{BackendKind, RunConfig, Settings};
use query::QueryKind;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Pipeline(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Pipeline(_) => 3,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Pipeline(_) => "pipeline",
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Pipeline(m) => m,
        }
    }
}

/// Supply-chain knowledge graphs from unstructured text.
#[derive(Debug, Parser)]
#[command(name = "skg", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Run configuration (JSON)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    backend: Option<BackendKind>,
    /// Recorded exchanges: a file, or a directory of run-k namespaces for `consistency`
    #[arg(long, global = true)]
    fixtures: Option<PathBuf>,
    #[arg(long, global = true)]
    schema: Option<PathBuf>,
    /// Corpus directory or JSON-lines manifest
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    run_id: Option<String>,
    #[arg(long, global = true)]
    parallelism: Option<usize>,
    #[arg(long, global = true)]
    model: Option<String>,
    #[arg(long, global = true)]
    chunk_budget: Option<usize>,
}

impl Common {
    fn overrides(&self) -> RunConfig {
        RunConfig {
            schema_path: self.schema.clone(),
            corpus_path: self.corpus.clone(),
            backend: self.backend,
            fixture_path: self.fixtures.clone(),
            model: self.model.clone(),
            chunk_budget: self.chunk_budget,
            parallelism: self.parallelism,
            output_dir: self.output_dir.clone(),
            run_id: self.run_id.clone(),
            ..RunConfig::default()
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load and clean the corpus, then chunk it
    Ingest,
    /// Extract entities and relationships from every chunk
    Extract {
        /// Record failed chunks and continue instead of stopping
        #[arg(long)]
        keep_going: bool,
    },
    /// Group duplicate entity names per type
    Disambiguate,
    /// Merge extractions into the canonical graph
    Build,
    /// Answer a supply-chain question over the graph
    Query {
        #[arg(long, value_enum)]
        kind: QueryKind,
        /// Focal company, or the material for `material`
        #[arg(long)]
        a: String,
        /// Second company for `shared`
        #[arg(long)]
        b: Option<String>,
        #[arg(long, default_value_t = 3)]
        depth: usize,
        /// Graph JSON-lines file instead of the run's graph
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Write the graph as Cypher, GraphML, DOT and JSON lines
    Export {
        #[arg(long)]
        graph: Option<PathBuf>,
        /// Subset of formats (repeatable); all by default
        #[arg(long = "format", value_parser = parse_format)]
        formats: Vec<ExportFormat>,
    },
    /// Score a human judgment file (task,item_id,item_type,verdict)
    Eval {
        #[arg(long)]
        judgments: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Repeat extraction and report count statistics
    Consistency {
        #[arg(long, default_value_t = skg_core::eval::DEFAULT_RUNS)]
        runs: usize,
        #[arg(long)]
        json: bool,
    },
    /// Ingest, extract, disambiguate, build and export in one go
    Pipeline {
        #[arg(long)]
        keep_going: bool,
    },
}

fn parse_format(s: &str) -> Result<ExportFormat, String> {
    s.parse()
}

fn run(cli: Cli) -> Result<(), CliError> {
    let settings = Settings::load(cli.common.config.as_deref(), cli.common.overrides())?;
    let s = &settings;
    match cli.command {
        Command::Ingest => stages::ingest(s).map(drop),
        Command::Extract { keep_going } => {
            let docs = stages::documents(s)?;
            stages::extract(s, &docs, keep_going).map(drop)
        }
        Command::Disambiguate => {
            let results = stages::extraction(s, false)?;
            stages::disambiguate(s, &results).map(drop)
        }
        Command::Build => {
            let results = stages::extraction(s, false)?;
            let a = stages::assignments(s, &results)?;
            stages::build(s, &results, &a).map(drop)
        }
        Command::Query { kind, a, b, depth, graph, json } => {
            let g = stages::graph(s, graph.as_deref())?;
            let out = query::run(&g, kind, &a, b.as_deref(), depth, json)?;
            print!("{out}");
            Ok(())
        }
        Command::Export { graph, formats } => {
            let g = stages::graph(s, graph.as_deref())?;
            let formats = if formats.is_empty() { ExportFormat::ALL.to_vec() } else { formats };
            stages::export_all(s, &g, &formats).map(drop)
        }
        Command::Eval { judgments, json } => stages::eval(s, &judgments, json).map(drop),
        Command::Consistency { runs, json } => stages::consistency(s, runs, json).map(drop),
        Command::Pipeline { keep_going } => stages::pipeline(s, keep_going).map(drop),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            events::emit("error", "failed", json!({"kind": e.kind(), "message": e.message()}));
            ExitCode::from(e.code())
        }
    }
}
