use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use jobstr::config::PipelineConfig;
use jobstr::explain;
use jobstr::pipeline::{self, Pipeline};

#[derive(Parser)]
#[command(name = "jobstr", version, about = "Explainable job-title relatedness pipeline")]
struct Cli {
    /// JSON configuration file; missing fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed; every stage seed derives from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Artifact directory.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Directory holding the source CSV files.
    #[arg(long, global = true)]
    input_dir: Option<PathBuf>,
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the default configuration as JSON.
    InitConfig {
        /// Destination file; standard output when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Generate the synthetic corpus into the input directory.
    GenCorpus {
        #[arg(long, default_value_t = 200)]
        jobs: usize,
        #[arg(long, default_value_t = 120)]
        skills: usize,
    },
    /// Extractive summaries of job descriptions.
    Summarize,
    /// Embed summaries, titles and skills.
    Embed,
    /// Mine scored job pairs from summary embeddings.
    Pairs,
    /// Disjoint-title train/eval split with per-region quotas.
    Split,
    /// Knowledge-graph stages.
    Kg {
        #[command(subcommand)]
        command: KgCommand,
    },
    /// Alignment stages.
    Align {
        #[command(subcommand)]
        command: AlignCommand,
    },
    /// Score two titles, or every evaluation pair when no titles are given.
    Predict {
        #[arg(long, requires = "title_b")]
        title_a: Option<String>,
        #[arg(long, requires = "title_a")]
        title_b: Option<String>,
    },
    /// Region-stratified evaluation reports.
    Eval,
    /// Explain a job pair, or the best and worst evaluation pairs when no
    /// pair is given.
    Explain(ExplainArgs),
    /// Run every stage in order.
    RunAll,
}

#[derive(Subcommand)]
enum KgCommand {
    /// Match skills, build and prune the graph, compute specificity.
    Build,
    /// Train graph node embeddings.
    Embed,
}

#[derive(Subcommand)]
enum AlignCommand {
    /// Train the title-to-graph alignment network.
    Train,
}

#[derive(Args)]
struct ExplainArgs {
    #[arg(long, requires = "job_b", conflicts_with_all = ["title_a", "title_b"])]
    job_a: Option<String>,
    #[arg(long, requires = "job_a")]
    job_b: Option<String>,
    #[arg(long, requires = "title_b")]
    title_a: Option<String>,
    #[arg(long, requires = "title_a")]
    title_b: Option<String>,
    /// 2 adds paths through a shared skill category.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    hops: Option<u8>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Json,
    Dot,
}

fn load_config(cli: &Cli) -> anyhow::Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("config {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(d) = &cli.out_dir {
        cfg.out_dir = d.clone();
    }
    if let Some(d) = &cli.input_dir {
        cfg.input_dir = d.clone();
    }
    Ok(cfg.checked()?)
}

fn print_record(stage: &str, rec: &pipeline::StageRecord) {
    for name in rec.outputs.keys() {
        println!("{stage}: {name}");
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = load_config(&cli)?;
    match cli.command {
        Command::InitConfig { output } => {
            let text = cfg.to_json()?;
            match output {
                Some(p) => std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{text}"),
            }
        }
        Command::GenCorpus { jobs, skills } => {
            for p in pipeline::gen_corpus(&cfg.input_dir, jobs, skills, cfg.seed)? {
                println!("{}", p.display());
            }
        }
        Command::Predict {
            title_a: Some(a),
            title_b: Some(b),
        } => {
            let p = Pipeline::new(cfg)?;
            println!("{:.6}", p.predict_titles(&a, &b)?);
        }
        Command::Explain(args) if args.job_a.is_some() || args.title_a.is_some() => {
            let p = Pipeline::new(cfg)?;
            let (a, b) = match (args.job_a, args.job_b) {
                (Some(a), Some(b)) => (a, b),
                _ => (
                    p.job_for_title(args.title_a.as_deref().unwrap_or_default())?,
                    p.job_for_title(args.title_b.as_deref().unwrap_or_default())?,
                ),
            };
            let e = p.explain_jobs(&a, &b, args.hops.map(usize::from))?;
            match args.format {
                Format::Table => print!("{}", explain::render_table(&e)),
                Format::Json => print!("{}", explain::render_json(&e)?),
                Format::Dot => print!("{}", explain::render_dot(&e, &p.load_graph()?.1)),
            }
        }
        command => {
            let stage = match command {
                Command::Summarize => "summarize",
                Command::Embed => "embed",
                Command::Pairs => "pairs",
                Command::Split => "split",
                Command::Kg {
                    command: KgCommand::Build,
                } => "kg build",
                Command::Kg {
                    command: KgCommand::Embed,
                } => "kg embed",
                Command::Align {
                    command: AlignCommand::Train,
                } => "align train",
                Command::Predict { .. } => "predict",
                Command::Eval => "eval",
                Command::Explain(_) => "explain",
                Command::RunAll => {
                    let p = Pipeline::new(cfg)?;
                    for (stage, rec) in p.run_all()? {
                        print_record(&stage, &rec);
                    }
                    return Ok(());
                }
                Command::InitConfig { .. } | Command::GenCorpus { .. } => unreachable!(),
            };
            let p = Pipeline::new(cfg)?;
            print_record(stage, &p.run_stage(stage)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
