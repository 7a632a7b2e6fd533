//! Command-line front end for the nexcv evaluation library.
//!
//! Exit codes: 0 on success, 1 when an evaluation ran but a validation or
//! threshold check failed, 2 for usage or input errors.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use nexcv::{
    class_stats, compare, generate_synthetic, load_dataset, render_json, render_markdown,
    run_nexcv, save_dataset, validate_metric, BaselineClassifier, Classifier, ClassifierFactory,
    ComparisonDocument, CsvKind, DataFormat, Dataset, EngineCommand, EvaluationDocument,
    EvaluationReport, ExternalClassifier, NexCvConfig, ReportDocument, SelectionMode, SynthSpec,
};

#[derive(Parser)]
#[command(
    name = "nexcv",
    version,
    about = "Evaluate text classifiers with cross-validation over plausible negative examples"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the evaluation and write JSON (plus optional markdown/CSV) reports
    Evaluate(EvaluateArgs),
    /// Rank the most confused class pairs for data-quality triage
    Pairs(PairsArgs),
    /// Compare engines across the three canonical settings
    Compare(CompareArgs),
    /// Check that the no-negatives setting agrees with 5-fold cross-validation
    Validate(ValidateArgs),
    /// Generate a synthetic dataset with a long tail of small classes
    Synth(SynthArgs),
    /// Print per-class counts for a dataset
    Stats(StatsArgs),
    /// Serve the bundled baseline over the engine line protocol on stdin/stdout
    Serve,
}

#[derive(Args)]
struct DataArgs {
    /// Dataset file (.csv or .jsonl)
    #[arg(long)]
    data: PathBuf,
    /// Override the format inferred from the file extension
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(ValueEnum, Clone, Copy)]
enum FormatArg {
    Csv,
    Jsonl,
}

#[derive(ValueEnum, Clone, Copy, PartialEq)]
enum ModeArg {
    /// Candidates are classes occurring fewer than K times
    Cutoff,
    /// Candidates are the least-populated classes covering fraction P
    Proportional,
}

#[derive(Args)]
struct RunKnobs {
    /// Test fraction in (0, 1)
    #[arg(long, default_value_t = 0.2, value_parser = parse_open_unit)]
    t: f64,
    /// Independent seeded evaluation cycles
    #[arg(long, default_value_t = 10)]
    retries: usize,
    /// Confidence at or above which an answer counts as given, in [0, 1]
    #[arg(long, default_value_t = 0.5, value_parser = parse_closed_unit)]
    threshold: f64,
    /// Base seed; retry i uses seed + i
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl RunKnobs {
    fn config(&self, mode: SelectionMode) -> NexCvConfig {
        NexCvConfig {
            mode,
            test_fraction: self.t,
            retries: self.retries,
            confidence_threshold: self.threshold,
            seed: self.seed,
        }
    }
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Selection rule for negative-example candidate classes
    #[arg(long, value_enum)]
    mode: ModeArg,
    /// Cutoff parameter K (requires --mode cutoff)
    #[arg(long)]
    k: Option<usize>,
    /// Proportional parameter P in [0, 1) (requires --mode proportional)
    #[arg(long, value_parser = parse_fraction_below_one)]
    p: Option<f64>,
    #[command(flatten)]
    knobs: RunKnobs,
    /// Path for the JSON report
    #[arg(long)]
    out: PathBuf,
    /// Also write a markdown report here
    #[arg(long)]
    markdown: Option<PathBuf>,
    /// Also write retries.csv, confusion.csv and pairs.csv into this directory
    #[arg(long)]
    csv_dir: Option<PathBuf>,
}

#[derive(Args)]
struct PairsArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    knobs: RunKnobs,
    /// How many top pairs to print
    #[arg(long, default_value_t = 3)]
    top: usize,
    /// Optionally write the full JSON report here
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    knobs: RunKnobs,
    /// Engine spec `name=builtin` or `name=cmd:<invocation>`; repeatable
    #[arg(long = "engine", required = true)]
    engines: Vec<String>,
    /// Path for the JSON report
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write a markdown report here
    #[arg(long)]
    markdown: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Maximum allowed |nexcv - 5-fold| mean accuracy difference
    #[arg(long, default_value_t = 0.03)]
    tolerance: f64,
    /// Base seed for both procedures
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SynthArgs {
    /// Large classes as COUNTxSIZE, e.g. 5x100
    #[arg(long)]
    large: String,
    /// Small classes as COUNTxMIN..MAX, e.g. 20x5..10
    #[arg(long, default_value = "20x5..10")]
    small: String,
    /// Tokens per class vocabulary
    #[arg(long, default_value_t = 40)]
    vocab: usize,
    /// Fraction of each vocabulary shared with the adjacent class, in [0, 1]
    #[arg(long, default_value_t = 0.0)]
    overlap: f64,
    /// Tokens per generated text as MIN..MAX
    #[arg(long, default_value = "3..12")]
    text_len: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file (.csv or .jsonl)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StatsArgs {
    #[command(flatten)]
    data: DataArgs,
}

/// A failure that should terminate with exit code 2.
struct CliError(String);

impl<E: std::fmt::Display> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError(e.to_string())
    }
}

/// Outcome of a command that ran to completion.
enum Outcome {
    Success,
    /// The evaluation ran but a validation or threshold check failed.
    CheckFailed,
}

fn main() -> ExitCode {
    // Die silently when a downstream pipe closes (e.g. `nexcv stats | head`)
    // instead of panicking on EPIPE.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::CheckFailed) => ExitCode::from(1),
        Err(CliError(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<Outcome, CliError> {
    match command {
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Pairs(args) => cmd_pairs(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Validate(args) => cmd_validate(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Stats(args) => cmd_stats(args),
        Command::Serve => cmd_serve(),
    }
}

fn parse_open_unit(raw: &str) -> Result<f64, String> {
    let v: f64 = raw.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} is not in (0, 1)"))
    }
}

fn parse_closed_unit(raw: &str) -> Result<f64, String> {
    let v: f64 = raw.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is not in [0, 1]"))
    }
}

fn parse_fraction_below_one(raw: &str) -> Result<f64, String> {
    let v: f64 = raw.parse().map_err(|e| format!("{e}"))?;
    if (0.0..1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is not in [0, 1)"))
    }
}

fn resolve_format(path: &Path, explicit: Option<FormatArg>) -> Result<DataFormat, CliError> {
    match explicit {
        Some(FormatArg::Csv) => Ok(DataFormat::Csv),
        Some(FormatArg::Jsonl) => Ok(DataFormat::Jsonl),
        None => DataFormat::from_path(path).ok_or_else(|| {
            CliError(format!(
                "cannot infer format of {}; pass --format csv|jsonl",
                path.display()
            ))
        }),
    }
}

fn load(args: &DataArgs) -> Result<Dataset, CliError> {
    let format = resolve_format(&args.data, args.format)?;
    Ok(load_dataset(&args.data, format)?)
}

fn selection_mode(mode: ModeArg, k: Option<usize>, p: Option<f64>) -> Result<SelectionMode, CliError> {
    match mode {
        ModeArg::Cutoff => {
            if p.is_some() {
                return Err(CliError(
                    "--p belongs to --mode proportional; the modes are mutually exclusive".into(),
                ));
            }
            let k = k.ok_or_else(|| CliError("--mode cutoff requires --k".into()))?;
            Ok(SelectionMode::Cutoff { k })
        }
        ModeArg::Proportional => {
            if k.is_some() {
                return Err(CliError(
                    "--k belongs to --mode cutoff; the modes are mutually exclusive".into(),
                ));
            }
            let p = p.ok_or_else(|| CliError("--mode proportional requires --p".into()))?;
            Ok(SelectionMode::Proportional { p })
        }
    }
}

fn builtin_factory() -> Box<ClassifierFactory<'static>> {
    Box::new(|| Ok(Box::new(BaselineClassifier::default()) as Box<dyn Classifier>))
}

fn write_text(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| CliError(e.to_string()))?;
        }
    }
    std::fs::write(path, contents).map_err(|e| CliError(e.to_string()))?;
    Ok(())
}

fn print_headline(report: &EvaluationReport, top: usize) {
    let agg = &report.aggregate;
    println!(
        "accuracy    {:.6} ± {:.6}",
        agg.accuracy.mean, agg.accuracy.std
    );
    println!(
        "macro F1    {:.6} ± {:.6}",
        agg.macro_f1.mean, agg.macro_f1.std
    );
    println!(
        "micro F1    {:.6} ± {:.6}",
        agg.micro_f1.mean, agg.micro_f1.std
    );
    match agg.carefulness {
        Some(c) => println!("carefulness {:.6} ± {:.6}", c.mean, c.std),
        None => println!("carefulness n/a (nothing was abstained)"),
    }
    println!();
    print_pairs(report, top);
}

fn print_pairs(report: &EvaluationReport, top: usize) {
    if report.pairs.is_empty() {
        println!("no confusions observed");
        return;
    }
    println!("top confused pairs:");
    for (rank, pair) in report.pairs.iter().take(top).enumerate() {
        println!("  {}. {} / {} — {}", rank + 1, pair.a, pair.b, pair.score);
        for example in report
            .examples
            .iter()
            .filter(|e| e.a == pair.a && e.b == pair.b)
        {
            println!(
                "     {:?} (gold {}, guessed {} at {:.3})",
                example.text, example.gold, example.guess, example.confidence
            );
        }
    }
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<Outcome, CliError> {
    let dataset = load(&args.data)?;
    let mode = selection_mode(args.mode, args.k, args.p)?;
    let config = args.knobs.config(mode);
    let report = run_nexcv(&dataset, &config, &*builtin_factory())?;
    let document = ReportDocument::Evaluation(EvaluationDocument::from_report(&report));

    write_text(&args.out, &render_json(&document)?)?;
    if let Some(path) = &args.markdown {
        write_text(path, &render_markdown(&document))?;
    }
    if let Some(dir) = &args.csv_dir {
        std::fs::create_dir_all(dir).map_err(|e| CliError(e.to_string()))?;
        for kind in CsvKind::ALL {
            write_text(&dir.join(kind.file_name()), &nexcv::emit_csv(&document, kind)?)?;
        }
    }

    println!(
        "dataset {}: {} examples, {} classes ({} negative-example candidates)",
        dataset.name,
        dataset.len(),
        report.partition.small.len() + report.partition.large.len(),
        report.partition.small.len()
    );
    print_headline(&report, 3);
    println!();
    println!("report written to {}", args.out.display());
    Ok(Outcome::Success)
}

fn cmd_pairs(args: PairsArgs) -> Result<Outcome, CliError> {
    let dataset = load(&args.data)?;
    // Triage always uses the proportional 0.15 setting; its aggregate
    // matrix is what the pair ranking is defined on.
    let config = args.knobs.config(SelectionMode::Proportional { p: 0.15 });
    let report = run_nexcv(&dataset, &config, &*builtin_factory())?;
    print_pairs(&report, args.top);
    if let Some(path) = &args.out {
        let document = ReportDocument::Evaluation(EvaluationDocument::from_report(&report));
        write_text(path, &render_json(&document)?)?;
    }
    Ok(Outcome::Success)
}

enum EngineSpec {
    Builtin { name: String },
    External { name: String, command: EngineCommand },
}

fn parse_engine_spec(raw: &str) -> Result<EngineSpec, CliError> {
    let (name, kind) = raw
        .split_once('=')
        .ok_or_else(|| CliError(format!("engine spec {raw:?} is not name=kind")))?;
    if name.is_empty() {
        return Err(CliError(format!("engine spec {raw:?} has an empty name")));
    }
    if kind == "builtin" {
        Ok(EngineSpec::Builtin { name: name.into() })
    } else if let Some(invocation) = kind.strip_prefix("cmd:") {
        Ok(EngineSpec::External {
            name: name.into(),
            command: EngineCommand::parse(invocation)?,
        })
    } else {
        Err(CliError(format!(
            "unknown engine kind {kind:?}; expected builtin or cmd:<invocation>"
        )))
    }
}

fn cmd_compare(args: CompareArgs) -> Result<Outcome, CliError> {
    let dataset = load(&args.data)?;
    let specs: Vec<EngineSpec> = args
        .engines
        .iter()
        .map(|raw| parse_engine_spec(raw))
        .collect::<Result<_, _>>()?;

    let factories: Vec<(String, Box<ClassifierFactory<'_>>)> = specs
        .iter()
        .map(|spec| match spec {
            EngineSpec::Builtin { name } => (name.clone(), builtin_factory()),
            EngineSpec::External { name, command } => {
                let command = command.clone();
                let factory: Box<ClassifierFactory<'_>> = Box::new(move || {
                    Ok(Box::new(ExternalClassifier::spawn(&command)?) as Box<dyn Classifier>)
                });
                (name.clone(), factory)
            }
        })
        .collect();
    let engines: Vec<(&str, &ClassifierFactory<'_>)> = factories
        .iter()
        .map(|(name, factory)| (name.as_str(), &**factory))
        .collect();

    let base = args.knobs.config(SelectionMode::Cutoff { k: 0 });
    let report = compare(&dataset, &base, &engines)?;
    let document = ReportDocument::Comparison(ComparisonDocument::from_report(&report, &base));
    if let Some(path) = &args.out {
        write_text(path, &render_json(&document)?)?;
    }
    if let Some(path) = &args.markdown {
        write_text(path, &render_markdown(&document))?;
    }

    println!("accuracy range across settings (min / mean / max):");
    for engine in &report.engines {
        match &engine.accuracy_range {
            Some(range) => println!(
                "  {:<16} {:.6} / {:.6} / {:.6}",
                engine.name, range.min, range.mean, range.max
            ),
            None => println!(
                "  {:<16} failed: {}",
                engine.name,
                engine.error.as_deref().unwrap_or("unknown error")
            ),
        }
    }
    if report.any_succeeded() {
        Ok(Outcome::Success)
    } else {
        Ok(Outcome::CheckFailed)
    }
}

fn cmd_validate(args: ValidateArgs) -> Result<Outcome, CliError> {
    let dataset = load(&args.data)?;
    let outcome = validate_metric(&dataset, &*builtin_factory(), args.tolerance, args.seed)?;
    println!(
        "no-negatives mean accuracy: {:.6}\n5-fold CV mean accuracy:    {:.6}\ndifference {:.6} vs tolerance {:.6} -> {}",
        outcome.nexcv_accuracy,
        outcome.kfold_accuracy,
        outcome.difference,
        outcome.tolerance,
        if outcome.passed { "PASS" } else { "FAIL" }
    );
    Ok(if outcome.passed {
        Outcome::Success
    } else {
        Outcome::CheckFailed
    })
}

fn parse_pair(raw: &str, sep: char) -> Option<(usize, usize)> {
    let (a, b) = raw.split_once(sep)?;
    Some((a.parse().ok()?, b.parse().ok()?))
}

/// `COUNTxSIZE`, e.g. `5x100`.
fn parse_class_shape(raw: &str) -> Result<(usize, usize), CliError> {
    parse_pair(raw, 'x').ok_or_else(|| CliError(format!("{raw:?} is not COUNTxSIZE, e.g. 5x100")))
}

/// `MIN..MAX` or a single number.
fn parse_range(raw: &str) -> Result<(usize, usize), CliError> {
    if let Some((min, max)) = raw.split_once("..").and_then(|(a, b)| {
        Some((a.parse().ok()?, b.parse().ok()?))
    }) {
        return Ok((min, max));
    }
    raw.parse()
        .map(|n| (n, n))
        .map_err(|_| CliError(format!("{raw:?} is not MIN..MAX or a single count")))
}

/// `COUNTxMIN..MAX`, e.g. `20x5..10`; `0` means no small classes.
fn parse_small_shape(raw: &str) -> Result<(usize, (usize, usize)), CliError> {
    if raw == "0" {
        return Ok((0, (1, 1)));
    }
    let (count, range) = raw
        .split_once('x')
        .ok_or_else(|| CliError(format!("{raw:?} is not COUNTxMIN..MAX, e.g. 20x5..10")))?;
    let count = count
        .parse()
        .map_err(|_| CliError(format!("bad class count in {raw:?}")))?;
    Ok((count, parse_range(range)?))
}

fn cmd_synth(args: SynthArgs) -> Result<Outcome, CliError> {
    let (n_large, large_size) = parse_class_shape(&args.large)?;
    let (n_small, small_size_range) = parse_small_shape(&args.small)?;
    let spec = SynthSpec {
        n_large,
        large_size,
        n_small,
        small_size_range,
        vocab_per_class: args.vocab,
        overlap_fraction: args.overlap,
        text_len_range: parse_range(&args.text_len)?,
        seed: args.seed,
    };
    let dataset = generate_synthetic(&spec)?;
    let format = resolve_format(&args.out, None)?;
    save_dataset(&dataset, &args.out, format)?;
    let stats = class_stats(&dataset);
    println!(
        "wrote {} examples over {} classes to {}",
        stats.total(),
        stats.len(),
        args.out.display()
    );
    Ok(Outcome::Success)
}

fn cmd_stats(args: StatsArgs) -> Result<Outcome, CliError> {
    let dataset = load(&args.data)?;
    let stats = class_stats(&dataset);
    let width = stats
        .counts()
        .iter()
        .map(|(l, _)| l.len())
        .max()
        .unwrap_or(5)
        .max(5);
    println!("{:<width$}  count", "label");
    for (label, count) in stats.counts() {
        println!("{label:<width$}  {count}");
    }
    println!();
    println!("total {} examples, {} classes", stats.total(), stats.len());
    if let (Some(first), Some(last)) = (stats.counts().first(), stats.counts().last()) {
        println!(
            "smallest {} ({}), largest {} ({})",
            first.0, first.1, last.0, last.1
        );
    }
    Ok(Outcome::Success)
}

fn cmd_serve() -> Result<Outcome, CliError> {
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    nexcv::serve_protocol(stdin.lock(), stdout.lock(), &*builtin_factory())?;
    std::io::stdout().flush().ok();
    Ok(Outcome::Success)
}
