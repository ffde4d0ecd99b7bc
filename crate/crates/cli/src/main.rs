use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use mafig_core::harness::{
    self, load_cases, run_suite, table_csv, table_text, write_artifacts, BackendChoice, Backends, RunConfig,
    RunSummary, Table, TimingMode,
};
use mafig_core::jsonl;
use mafig_core::library::{load_library, FunctionLibrary};
use mafig_core::perception::{build_localization_dataset, localization_dataset};
use mafig_core::sfl::{
    build_distill_dataset, distill_dataset, weight_vector, weighted_nll, DistillPair, SupervisionTarget, Tokenizer,
    WordPunct, DEFAULT_LAMBDA,
};
use mafig_core::simworld::{generate_cases, CaseCounts, EmergencyCase, ScenarioId};

#[derive(Parser)]
#[command(name = "mafig", version, about = "Emergency repair of scheduling function libraries")]
struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded case corpus as JSONL.
    GenCases {
        #[arg(long)]
        scenario: ScenarioId,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        /// Total cases; defaults to the scenario's test-set size.
        #[arg(long, conflicts_with = "per_category")]
        count: Option<usize>,
        #[arg(long)]
        per_category: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run cases end to end and write episodes and summaries.
    Run(RunArgs),
    /// Span-focused distillation data and loss.
    #[command(subcommand)]
    Sfl(SflCommand),
    /// Inspect a function library.
    #[command(subcommand)]
    Lib(LibCommand),
    /// Combine run summaries into one table.
    Report {
        /// Run directories holding summary.json.
        runs: Vec<PathBuf>,
        /// Add perception and decision time columns.
        #[arg(long)]
        latency: bool,
        #[arg(long)]
        csv: bool,
    },
    /// Write the localization dataset for a scenario.
    LocDataset {
        #[arg(long)]
        scenario: ScenarioId,
        /// Build from these cases instead of the shipped corpus.
        #[arg(long)]
        cases: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML file mirroring the run config; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<ScenarioId>,
    #[arg(long)]
    backend: Option<BackendChoice>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    cases: Option<PathBuf>,
    /// Start from a saved library instead of the shipped one.
    #[arg(long)]
    library: Option<PathBuf>,
    #[arg(long)]
    parallel: bool,
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    timing: Option<TimingMode>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Save the evolved library here.
    #[arg(long)]
    save_library: Option<PathBuf>,
}

#[derive(Subcommand)]
enum SflCommand {
    /// Write distillation records as JSONL.
    Build {
        #[arg(long)]
        scenario: ScenarioId,
        #[arg(long, default_value_t = DEFAULT_LAMBDA)]
        lambda: f64,
        /// Teacher pairs (JSONL) instead of the shipped rule-backend pairs.
        #[arg(long)]
        pairs: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Weighted NLL of comma-separated log-probabilities and weights.
    Loss {
        #[arg(long, allow_hyphen_values = true, value_delimiter = ',')]
        logprobs: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        weights: Vec<f64>,
    },
    /// Weight vector of a marked target text, as JSON.
    Weights {
        #[arg(long)]
        target: String,
        #[arg(long, default_value_t = DEFAULT_LAMBDA)]
        lambda: f64,
        #[arg(long)]
        padded_len: Option<usize>,
    },
}

#[derive(Subcommand)]
enum LibCommand {
    /// List functions, or print one.
    Show {
        #[arg(long)]
        scenario: ScenarioId,
        #[arg(long)]
        dir: Option<PathBuf>,
        function: Option<String>,
    },
    /// Load and check a saved library.
    Validate {
        #[arg(long)]
        scenario: ScenarioId,
        #[arg(long)]
        dir: PathBuf,
    },
    /// Write the shipped library to a directory.
    Export {
        #[arg(long)]
        scenario: ScenarioId,
        #[arg(long)]
        dir: PathBuf,
    },
}

fn library(scenario: ScenarioId, dir: Option<&PathBuf>) -> Result<FunctionLibrary> {
    match dir {
        Some(d) => load_library(scenario, d).with_context(|| format!("loading {}", d.display())),
        None => Ok(FunctionLibrary::builtin(scenario)),
    }
}

fn run(a: RunArgs) -> Result<bool> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = a.scenario {
        cfg.scenario = s;
    }
    if let Some(b) = a.backend {
        cfg.set_backend(b);
    }
    if let Some(t) = a.tau {
        cfg.tau = t;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if a.count.is_some() {
        cfg.count = a.count;
    }
    if a.cases.is_some() {
        cfg.cases = a.cases;
    }
    if a.parallel {
        cfg.parallel = true;
    }
    if let Some(p) = a.parallelism {
        cfg.parallelism = p;
    }
    if a.timing.is_some() {
        cfg.timing = a.timing;
    }
    if let Some(o) = a.out {
        cfg.output = o;
    }
    cfg.validate()?;
    let cases = load_cases(&cfg)?;
    let backends = Backends::from_config(&cfg)?;
    let mut lib = library(cfg.scenario, a.library.as_ref())?;
    let (records, summary) = run_suite(&cases, &cfg, &backends, &mut lib)?;
    write_artifacts(&cfg.output, &records, &summary)?;
    if let Some(dir) = a.save_library {
        lib.save(&dir)?;
    }
    print!("{}", table_text(&[&summary], Table::Latency));
    println!("wrote {}", cfg.output.display());
    Ok(true)
}

fn sfl(cmd: SflCommand) -> Result<bool> {
    match cmd {
        SflCommand::Build { scenario, lambda, pairs, out } => {
            let recs = match pairs {
                Some(p) => {
                    let pairs: Vec<DistillPair> = jsonl::read(&p)?;
                    let (recs, skipped) = build_distill_dataset(&pairs, &WordPunct, lambda)?;
                    if skipped > 0 {
                        eprintln!("skipped {skipped} identical pairs");
                    }
                    recs
                }
                None => distill_dataset(scenario, &WordPunct, lambda)?,
            };
            jsonl::write(&out, &recs)?;
            println!("{} records -> {}", recs.len(), out.display());
        }
        SflCommand::Loss { logprobs, weights } => {
            println!("{}", weighted_nll(&logprobs, &weights)?);
        }
        SflCommand::Weights { target, lambda, padded_len } => {
            let y = SupervisionTarget::from_marked(WordPunct.seq(&target))?;
            let w = weight_vector(&y, lambda, padded_len.unwrap_or(y.y.len()))?;
            println!("{}", serde_json::to_string(&w)?);
        }
    }
    Ok(true)
}

fn lib(cmd: LibCommand) -> Result<bool> {
    match cmd {
        LibCommand::Show { scenario, dir, function } => {
            let lib = library(scenario, dir.as_ref())?;
            match function {
                Some(name) => {
                    let Some(f) = lib.get(&name) else { bail!("no function '{name}'") };
                    print!("{}", f.source.text);
                }
                None => {
                    for f in lib.functions() {
                        let reads: Vec<&str> = f.spec.reads.iter().map(String::as_str).collect();
                        println!("{:<28} v{:<3} reads {}", f.name, f.version, reads.join(", "));
                    }
                    println!("{} functions, {} history records", lib.len(), lib.history().len());
                }
            }
        }
        LibCommand::Validate { scenario, dir } => {
            let lib = load_library(scenario, &dir)?;
            let replay = lib.replay_sources();
            let mut ok = true;
            for (name, (version, source)) in &replay {
                match lib.get(name) {
                    Some(f) if f.version == *version && &f.source.text == source => {}
                    _ => {
                        eprintln!("{name}: history does not match the current source");
                        ok = false;
                    }
                }
            }
            println!("{}: {} functions, {} history records", dir.display(), lib.len(), lib.history().len());
            return Ok(ok);
        }
        LibCommand::Export { scenario, dir } => {
            FunctionLibrary::builtin(scenario).save(&dir)?;
            println!("wrote {}", dir.display());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::GenCases { scenario, seed, count, per_category, out } => (|| {
            let counts = match per_category {
                Some(k) => CaseCounts::PerCategory(k),
                None => CaseCounts::Total(count.unwrap_or_else(|| harness::corpus_size(scenario))),
            };
            let cases = generate_cases(scenario, seed, counts)?;
            jsonl::write(&out, &cases)?;
            println!("{} cases -> {}", cases.len(), out.display());
            Ok(true)
        })(),
        Command::Run(a) => run(a),
        Command::Sfl(c) => sfl(c),
        Command::Lib(c) => lib(c),
        Command::Report { runs, latency, csv } => (|| {
            let mut summaries: Vec<RunSummary> = Vec::new();
            for d in &runs {
                let p = d.join("summary.json");
                let text = std::fs::read_to_string(&p).with_context(|| p.display().to_string())?;
                summaries.push(serde_json::from_str(&text)?);
            }
            if summaries.is_empty() {
                bail!("no run directories given");
            }
            let rows: Vec<&RunSummary> = summaries.iter().collect();
            let kind = if latency { Table::Latency } else { Table::Time };
            print!("{}", if csv { table_csv(&rows, kind) } else { table_text(&rows, kind) });
            Ok(true)
        })(),
        Command::LocDataset { scenario, cases, out } => (|| {
            let lib = FunctionLibrary::builtin(scenario);
            let recs = match cases {
                Some(p) => {
                    let cases: Vec<EmergencyCase> = jsonl::read(&p)?;
                    build_localization_dataset(&cases, &lib.specs())?
                }
                None => localization_dataset(scenario, &lib.specs())?,
            };
            jsonl::write(&out, &recs)?;
            println!("{} records -> {}", recs.len(), out.display());
            Ok(true)
        })(),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
