//! `refscore`: synthesize or check corpora, run experiments, render reports.

mod output;
mod report;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use refscore::corpus::{filter_eligible, ingest, EligibilityFilter, Format};
use refscore::pipeline::{run, RunConfig};
use refscore::synth::{generate_synthetic, SyntheticSpec};
use refscore::text::CleaningRules;

pub const OUTPUT_DIR_ENV: &str = "REFSCORE_OUTPUT_DIR";
const DEFAULT_OUTPUT_DIR: &str = "refscore-output";

#[derive(Parser)]
#[command(name = "refscore", version, about = "Predict grouped article quality scores from bibliometric and text metadata")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scored corpus as JSONL.
    Synth(SynthArgs),
    /// Parse a corpus file and report rejected records and group sizes.
    IngestCheck(IngestArgs),
    /// Run experiments, strategies and aggregation from a TOML config.
    Run(RunArgs),
    /// Verify a run directory and print its tables.
    Report(ReportArgs),
}

#[derive(clap::Args)]
struct SynthArgs {
    /// Number of articles.
    #[arg(long, default_value_t = 2000)]
    n: usize,
    /// Rank correlation between quality and the observable signals, in [0, 1].
    #[arg(long, default_value_t = 0.8, value_parser = unit_interval)]
    signal: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Number of assessment groups.
    #[arg(long, default_value_t = 1)]
    groups: usize,
    #[arg(long, default_value_t = 40)]
    institutions: usize,
    #[arg(long, default_value_t = 12)]
    fields: usize,
    #[arg(long, default_value_t = 80)]
    journals: usize,
    #[arg(long, default_value_t = 1500)]
    authors: usize,
    /// Output file.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(clap::Args)]
struct IngestArgs {
    /// JSONL or CSV corpus file.
    path: PathBuf,
    /// Also apply the eligibility filter (abstract length, zero scores, duplicates).
    #[arg(long)]
    filter: bool,
    /// Minimum cleaned abstract length for --filter.
    #[arg(long, default_value_t = 500)]
    min_abstract_chars: usize,
}

#[derive(clap::Args)]
struct RunArgs {
    /// TOML run configuration.
    config: PathBuf,
    /// Output directory; overrides the config and the environment.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(clap::Args)]
struct ReportArgs {
    /// Directory written by `run`.
    dir: PathBuf,
    /// Also write plot-ready CSVs into this directory.
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn unit_interval(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1]"))
    }
}

/// Failure classes mapped to exit codes.
enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
    Internal(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Internal(_) => 3,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Usage(e) | Failure::Data(e) | Failure::Internal(e) => e,
        }
    }
}

impl From<refscore::Error> for Failure {
    fn from(e: refscore::Error) -> Self {
        match e {
            refscore::Error::Config(_) | refscore::Error::Infeasible(_) | refscore::Error::UnknownModel(_) => {
                Failure::Usage(e.into())
            }
            e if e.is_data_error() => Failure::Data(e.into()),
            e => Failure::Internal(e.into()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::IngestCheck(a) => cmd_ingest_check(a),
        Command::Run(a) => cmd_run(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}

fn cmd_synth(a: SynthArgs) -> Result<(), Failure> {
    let spec = SyntheticSpec {
        n_articles: a.n,
        n_fields: a.fields,
        n_journals: a.journals,
        n_authors: a.authors,
        n_institutions: a.institutions,
        n_groups: a.groups,
        signal_strength: a.signal,
        seed: a.seed,
        ..Default::default()
    };
    let synth = generate_synthetic(&spec)?;
    let mut buf = Vec::new();
    synth.corpus.write_jsonl(&mut buf)?;
    output::write_atomic(&a.output, &buf).map_err(Failure::Internal)?;
    let mut counts = [0usize; 3];
    for art in synth.corpus.articles() {
        if let Some(g) = art.grouped_score() {
            counts[g.index()] += 1;
        }
    }
    println!("wrote {} articles to {}", synth.corpus.len(), a.output.display());
    println!("requested signal {:.4}", a.signal);
    println!("measured rank correlation (score vs citations) {:.4}", synth.measured_rank_correlation);
    println!("citation coupling {:.4}", synth.citation_coupling);
    println!("grouped scores 1/2/3: {}/{}/{}", counts[0], counts[1], counts[2]);
    Ok(())
}

fn cmd_ingest_check(a: IngestArgs) -> Result<(), Failure> {
    let format = Format::from_path(&a.path)
        .ok_or_else(|| Failure::Usage(anyhow!("{}: expected a .jsonl or .csv file", a.path.display())))?;
    let ingested = ingest(&a.path, format)?;
    for d in &ingested.diagnostics {
        println!("rejected {d}");
    }
    let mut corpus = ingested.corpus;
    if a.filter {
        let filter = EligibilityFilter {
            min_abstract_chars: a.min_abstract_chars,
            ..Default::default()
        };
        let (kept, report) = filter_eligible(&corpus, &filter, &CleaningRules::default())?;
        println!(
            "filter: retained {}, zero score {}, short abstract {}, duplicate {}, out of range {}",
            report.retained, report.zero_score, report.short_abstract, report.duplicate, report.out_of_range
        );
        corpus = kept;
    }
    println!("{} articles accepted, {} records rejected", corpus.len(), ingested.diagnostics.len());
    let mut per_group: BTreeMap<&str, [usize; 4]> = BTreeMap::new();
    for art in corpus.articles() {
        let e = per_group.entry(&art.group_id).or_default();
        match art.grouped_score() {
            Some(g) => e[g.index()] += 1,
            None => e[3] += 1,
        }
    }
    println!("{:<12} {:>6} {:>6} {:>6} {:>8}", "group", "1", "2", "3", "unscored");
    for (g, c) in per_group {
        println!("{:<12} {:>6} {:>6} {:>6} {:>8}", g, c[0], c[1], c[2], c[3]);
    }
    if ingested.diagnostics.is_empty() {
        Ok(())
    } else {
        Err(Failure::Data(anyhow!("{} records rejected", ingested.diagnostics.len())))
    }
}

fn load_config(path: &Path) -> Result<RunConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))
        .map_err(Failure::Usage)?;
    let mut config: RunConfig = toml::from_str(&text)
        .with_context(|| format!("parsing config {}", path.display()))
        .map_err(Failure::Usage)?;
    let base = path.parent().unwrap_or(Path::new("."));
    config.validate(base)?;
    Ok(config)
}

fn output_dir(flag: Option<PathBuf>, config: &RunConfig, base: &Path) -> PathBuf {
    flag.or_else(|| config.output_dir.as_ref().map(|p| base.join(p)))
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
}

fn cmd_run(a: RunArgs) -> Result<(), Failure> {
    let config = load_config(&a.config)?;
    let base = a.config.parent().unwrap_or(Path::new("."));
    let dir = output_dir(a.output, &config, base);
    if let Some(n) = a.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Internal(e.into()))?;
    }
    let result = run(&config)?;
    let files = result.render()?;
    output::write_run_dir(&dir, &files).map_err(Failure::Internal)?;
    for g in &result.summary.groups {
        println!(
            "{:<12} n={:<6} {:<9} best={} above_baseline={}",
            g.group_id,
            g.n_labeled,
            g.status,
            g.best_model.as_deref().unwrap_or("-"),
            g.best_above_baseline.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
        );
    }
    println!("wrote {}", dir.display());
    if result.errors.is_empty() {
        Ok(())
    } else {
        Err(Failure::Data(anyhow!(
            "{} group stage(s) failed; see {}",
            result.errors.len(),
            dir.join("errors.json").display()
        )))
    }
}

fn cmd_report(a: ReportArgs) -> Result<(), Failure> {
    if !a.dir.is_dir() {
        return Err(Failure::Usage(anyhow!("{} is not a directory", a.dir.display())));
    }
    let run = report::RunDir::open(&a.dir).map_err(Failure::Data)?;
    print!("{}", report::render_text(&run));
    if let Some(out) = a.csv {
        let written = report::write_plot_csvs(&run, &out).map_err(Failure::Internal)?;
        println!("\nwrote {} to {}", written.join(", "), out.display());
    }
    Ok(())
}
