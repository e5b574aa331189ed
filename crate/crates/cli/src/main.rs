use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use frforge_cli::config::RunConfig;
use frforge_cli::pipeline::{self, Workdir};
use frforge_cli::serve::{self, TriageState};
use frforge_core::Error;

#[derive(Parser)]
#[command(name = "frforge", version, about = "False-reject detection workbench")]
struct Cli {
    /// Run configuration (JSON); built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory holding every stage's inputs and outputs.
    #[arg(long, global = true, default_value = "run")]
    workdir: PathBuf,
    /// Print the effective configuration, defaults included, and exit.
    #[arg(long)]
    print_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the corpus and the simulated traffic.
    GenCorpus,
    /// Train the production models, calibrate the reranker and route the traffic.
    Simulate,
    /// Sample the 1:N FR dataset and the evaluation set.
    BuildDataset,
    /// Pre-train the encoder and fine-tune every model kind and seed.
    Train,
    /// Score the evaluation set and mine the traffic pool for FR candidates.
    Detect,
    /// Write the comparison table, report.json and PR curves.
    Evaluate,
    /// Annotate candidates, retrain the production classifier and measure.
    Feedback,
    /// Serve the candidate queue to the annotation console.
    TriageServe {
        #[arg(long, default_value = "127.0.0.1:8765")]
        bind: SocketAddr,
        /// Defaults to `<workdir>/candidates.jsonl`.
        #[arg(long)]
        candidates: Option<PathBuf>,
        /// Defaults to `<workdir>/annotations.jsonl`.
        #[arg(long)]
        annotations: Option<PathBuf>,
        /// Directory of console assets served at `/`.
        #[arg(long)]
        static_dir: Option<PathBuf>,
    },
    /// Every batch stage in order.
    RunAll,
}

fn run(cli: Cli) -> Result<(), Error> {
    let cfg = RunConfig::load(cli.config.as_deref())?;
    if cli.print_config {
        println!("{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(Error::Config("no subcommand given (see --help)".into()));
    };
    let wd = Workdir::new(&cli.workdir)?;
    match command {
        Command::GenCorpus => pipeline::gen_corpus(&cfg, &wd),
        Command::Simulate => pipeline::simulate(&cfg, &wd).map(drop),
        Command::BuildDataset => pipeline::build_dataset(&cfg, &wd),
        Command::Train => pipeline::train_models(&cfg, &wd).map(drop),
        Command::Detect => pipeline::detect(&cfg, &wd).map(drop),
        Command::Evaluate => {
            let reports = pipeline::evaluate(&cfg, &wd)?;
            print!("{}", frforge_core::evalreport::comparison_table(&reports));
            Ok(())
        }
        Command::Feedback => pipeline::feedback(&cfg, &wd).map(drop),
        Command::TriageServe {
            bind,
            candidates,
            annotations,
            static_dir,
        } => {
            let candidates = match candidates {
                Some(p) => p,
                None => wd.require(pipeline::CANDIDATES, "detect")?,
            };
            let annotations = annotations.unwrap_or_else(|| wd.path(pipeline::ANNOTATIONS));
            let state = TriageState::open(&candidates, &annotations)?;
            let rt = tokio::runtime::Runtime::new().map_err(|e| Error::io("tokio runtime", e))?;
            rt.block_on(serve::serve(state, bind, static_dir))
                .map_err(|e| Error::io(bind.to_string(), e))
        }
        Command::RunAll => pipeline::run_all(&cfg, &wd),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 1 })
        }
    }
}
