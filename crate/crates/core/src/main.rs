use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hlmcite::pipeline::{
    cmd_embed, cmd_eval, cmd_label, cmd_oneshot_approve, cmd_oneshot_build, cmd_oneshot_list,
    cmd_report, cmd_rerank, cmd_retrieve, cmd_run, cmd_sample, ChatBackendKind, OutputLock,
    Overrides, PipelineConfig, PipelineError,
};
use hlmcite::toy::{generate, ToyConfig};

#[derive(Parser)]
#[command(name = "hlmcite", version, about = "Core-citation prediction pipeline")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Candidate set size.
    #[arg(long, global = true)]
    tq: Option<usize>,
    /// Retrieval size for every query.
    #[arg(long, global = true)]
    rq: Option<usize>,
    /// Core citations per instance and selection size.
    #[arg(long, global = true)]
    t1: Option<usize>,
    /// no-analyzer, no-guider or few-shot; repeatable.
    #[arg(long, global = true)]
    ablation: Vec<String>,
    /// mock or http.
    #[arg(long, global = true)]
    backend: Option<ChatBackendKind>,
    /// identity, oracle or failing.
    #[arg(long, global = true)]
    mock: Option<String>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the citation graph and label core citations.
    Label,
    /// Sample queries, split train/test and build candidate sets.
    Sample,
    /// Embed every paper.
    Embed,
    /// Retrieve the top r_q candidates per query.
    Retrieve,
    /// Rerank retrieval sets with the analyzer and decider agents.
    Rerank,
    /// Score every system per query.
    Eval,
    /// Aggregate metrics into report.json and report.csv.
    Report,
    /// Every stage in order.
    Run,
    /// Manage worked examples.
    Oneshot {
        #[command(subcommand)]
        action: OneshotAction,
    },
    /// Write the synthetic toy corpus.
    ToyCorpus {
        #[arg(long, default_value_t = ToyConfig::default().papers)]
        papers: usize,
        #[arg(long = "toy-seed", default_value_t = ToyConfig::default().seed)]
        toy_seed: u64,
        /// Target directory for corpus.jsonl and edges.csv.
        dir: PathBuf,
    },
}

#[derive(Subcommand)]
enum OneshotAction {
    /// Draft an example from a spec file shaped like example.json.
    Build { spec: PathBuf },
    /// Approve a reviewed draft.
    Approve { name: String },
    /// List examples with status and digest.
    List,
}

fn load_config(common: &Common) -> Result<PipelineConfig, PipelineError> {
    let mut config = match &common.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    config.apply(&Overrides {
        seed: common.seed,
        t_q: common.tq,
        r_q: common.rq,
        t1: common.t1,
        ablations: common.ablation.clone(),
        backend: common.backend,
        mock: common.mock.clone(),
        out: common.out.clone(),
    })?;
    Ok(config)
}

fn run(cli: Cli, common: Common) -> Result<(), PipelineError> {
    if let Command::ToyCorpus { papers, toy_seed, dir } = &cli.command {
        let toy = generate(&ToyConfig {
            papers: *papers,
            seed: *toy_seed,
            ..ToyConfig::default()
        });
        toy.write_dir(dir).map_err(|source| PipelineError::Io {
            path: dir.clone(),
            source,
        })?;
        println!("wrote {} papers and {} edges to {}", toy.papers.len(), toy.edges.len(), dir.display());
        return Ok(());
    }

    let config = load_config(&common)?;
    if let Command::Oneshot { action: OneshotAction::List } = &cli.command {
        println!("{:<20} {:<22} {:<9} {:>4}  {:<16} source", "name", "field", "status", "n", "digest");
        for e in cmd_oneshot_list(&config)? {
            let field = e.field.map(|f| f.name().to_string()).unwrap_or_else(|| "-".into());
            let digest: String = e.digest.chars().take(16).collect();
            let status = format!("{:?}", e.status).to_lowercase();
            println!("{:<20} {:<22} {:<9} {:>4}  {:<16} {}", e.name, field, status, e.candidates, digest, e.source);
        }
        return Ok(());
    }

    let _lock = OutputLock::acquire(config.out_dir()?)?;
    match cli.command {
        Command::Label => cmd_label(&config).map(drop),
        Command::Sample => cmd_sample(&config).map(drop),
        Command::Embed => cmd_embed(&config).map(drop),
        Command::Retrieve => cmd_retrieve(&config).map(drop),
        Command::Rerank => cmd_rerank(&config).map(|s| {
            println!(
                "reranked {} queries with {} backend calls ({} tokens)",
                s.queries, s.backend_calls, s.tokens.total_tokens
            );
        }),
        Command::Eval => cmd_eval(&config).map(drop),
        Command::Report => {
            cmd_report(&config)?;
            println!("{}", config.out_dir()?.join("report.json").display());
            Ok(())
        }
        Command::Run => {
            let result = cmd_run(&config);
            println!("{}", config.out_dir()?.join("report.json").display());
            result
        }
        Command::Oneshot { action: OneshotAction::Build { spec } } => {
            let ex = cmd_oneshot_build(&config, &spec)?;
            println!("drafted `{}`; review its files, then run `hlmcite oneshot approve {}`", ex.name, ex.name);
            Ok(())
        }
        Command::Oneshot { action: OneshotAction::Approve { name } } => {
            let ex = cmd_oneshot_approve(&config, &name)?;
            println!("approved `{}` ({})", ex.name, ex.digest);
            Ok(())
        }
        Command::Oneshot { action: OneshotAction::List } | Command::ToyCorpus { .. } => unreachable!(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let common = cli.common.clone();
    match run(cli, common) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
