use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use radsignals::clustering::Distance;
use radsignals::pipeline::{Pipeline, ResourcePaths, RunConfig, Stage};
use radsignals::synth::{write_corpus, SynthSpec};
use radsignals::{Error, Result};

#[derive(Parser)]
#[command(name = "radsignals", version, about = "Multivariate radicalization-signal analytics over tweet corpora")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and aggregate the input corpus.
    Ingest(RunArgs),
    /// Select persistent users and validate their leaning.
    Seeds(RunArgs),
    /// Build the seed lexicon.
    Lexicon(RunArgs),
    /// Compute per-user signal vectors.
    Signals(RunArgs),
    /// Select k, cluster, and embed centroid neighbourhoods.
    Cluster(RunArgs),
    /// Correlations, cluster summaries and interaction z-scores.
    Analyze(RunArgs),
    /// Write the report (and SVG figures with --svg).
    Report(RunArgs),
    /// Run every stage.
    All(RunArgs),
    /// Generate a synthetic corpus with ground truth.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum DistanceArg {
    Euclidean,
    Cosine,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input JSONL file (optionally gzipped); repeatable.
    #[arg(long = "input")]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Inclusive k range, e.g. `2..20` or `2,20`.
    #[arg(long, value_parser = parse_k_range)]
    k_range: Option<(usize, usize)>,
    #[arg(long)]
    permutations: Option<usize>,
    #[arg(long, value_enum)]
    distance: Option<DistanceArg>,
    #[arg(long)]
    svg: bool,
    #[arg(long)]
    keywords: Option<PathBuf>,
    #[arg(long)]
    qanon_domains: Option<PathBuf>,
    #[arg(long)]
    account_status: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Population spec as JSON; defaults to the six-archetype preset.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 500)]
    users_per_population: usize,
    /// Adds a left-leaning population that discusses the keywords critically.
    #[arg(long, default_value_t = 0)]
    critics: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn parse_k_range(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s
        .split_once("..")
        .or_else(|| s.split_once(','))
        .or_else(|| s.split_once('-'))
        .ok_or_else(|| format!("expected LO..HI, got {s:?}"))?;
    let p = |x: &str| x.trim().parse::<usize>().map_err(|e| format!("{x:?}: {e}"));
    Ok((p(a)?, p(b.trim_start_matches('='))?))
}

fn build_config(a: RunArgs) -> Result<RunConfig> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if !a.inputs.is_empty() {
        cfg.inputs = a.inputs;
    }
    if let Some(o) = a.out {
        cfg.out = o;
    }
    if let Some(s) = a.seed {
        cfg.rng_seed = s;
    }
    if a.threads.is_some() {
        cfg.threads = a.threads;
    }
    if let Some(k) = a.k_range {
        cfg.k_range = k;
    }
    if let Some(r) = a.permutations {
        cfg.permutations = r;
    }
    if let Some(d) = a.distance {
        cfg.distance = match d {
            DistanceArg::Euclidean => Distance::Euclidean,
            DistanceArg::Cosine => Distance::Cosine,
        };
    }
    cfg.svg |= a.svg;
    let r = &mut cfg.resources;
    r.keywords = a.keywords.or(r.keywords.take());
    r.qanon_domains = a.qanon_domains.or(r.qanon_domains.take());
    r.account_status = a.account_status.or(r.account_status.take());
    Ok(cfg)
}

fn run(args: RunArgs, last: Stage) -> Result<()> {
    let cfg = build_config(args)?;
    let mut p = Pipeline::new(cfg)?;
    let m = p.run_until(last)?;
    for s in &m.stages {
        eprintln!("{:<9} {:<6} {:>8.2}s", s.stage.name(), s.status, s.seconds);
    }
    eprintln!("outputs in {}", p.config().out.display());
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    let mut spec = match &a.spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => SynthSpec::archetypes(a.users_per_population),
    };
    if a.critics > 0 {
        spec = spec.with_critics(a.critics);
    }
    let (files, truth) = write_corpus(&spec, a.seed, &a.out)?;
    let cfg = demo_config(&spec, &a.out, &files);
    let cfg_path = a.out.join("config.json");
    std::fs::write(&cfg_path, serde_json::to_string_pretty(&cfg)? + "\n").map_err(|e| Error::io(&cfg_path, e))?;
    eprintln!(
        "{} users, {} tweets -> {}; run config in {}",
        truth.users.len(),
        truth.tweets,
        files.corpus.display(),
        cfg_path.display()
    );
    Ok(())
}

/// A run config for a generated corpus, with paths relative to its directory.
fn demo_config(spec: &SynthSpec, dir: &Path, files: &radsignals::synth::SynthFiles) -> RunConfig {
    let rel = |p: &Path| p.strip_prefix(dir).map(Path::to_path_buf).unwrap_or_else(|_| p.to_path_buf());
    let mut cfg = RunConfig {
        inputs: vec![rel(&files.corpus)],
        out: PathBuf::from("out"),
        resources: ResourcePaths {
            bias: Some(rel(&files.bias)),
            reliable: Some(rel(&files.reliable)),
            unreliable: Some(rel(&files.unreliable)),
            account_status: Some(rel(&files.status)),
            ..ResourcePaths::default()
        },
        ..RunConfig::default()
    };
    cfg.window.start = spec.start;
    cfg.window.n_weeks = spec.n_weeks;
    cfg.window.intervention_date = spec.intervention_date;
    cfg.window.seed_weeks = spec.seed_weeks;
    cfg
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Ingest(a) => run(a, Stage::Filter),
        Command::Seeds(a) => run(a, Stage::Validate),
        Command::Lexicon(a) => run(a, Stage::Lexicon),
        Command::Signals(a) => run(a, Stage::Signals),
        Command::Cluster(a) => run(a, Stage::Cluster),
        Command::Analyze(a) => run(a, Stage::Analyze),
        Command::Report(a) | Command::All(a) => run(a, Stage::Report),
        Command::Synth(a) => synth(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
