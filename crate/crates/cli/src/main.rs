//! `lft`: synthesize, split, train, evaluate and predict from the shell.
//!
//! Exit codes: 0 success, 1 usage, 2 input format, 3 numerical divergence.

mod manifest;

use std::collections::HashSet;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lft_core::io::{
    load_records, write_predictions, write_records, Delimiter, IndexBase, RecordFormat,
    SplitCounts, SplitMetadata,
};
use lft_core::admm::{train_with_log, LossMode};
use lft_core::io::{synthesize, SynthSpec};
use lft_core::{eval, mae, split, Dims, Entry, Error, FactorModel, SparseTensor, SplitSpec, TrainConfig};

use manifest::RunManifest;

#[derive(Parser)]
#[command(name = "lft", version, about = "Nonnegative latent factorization of QoS tensors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic low-rank tensor with optional noise and outliers.
    Synth(SynthArgs),
    /// Partition a record file into train, validation and test files.
    Split(SplitArgs),
    /// Fit a model with early stopping on a validation set.
    Train(TrainArgs),
    /// Report MAE of a model on a record file.
    Eval(EvalArgs),
    /// Write per-entry predictions.
    Predict(PredictArgs),
}

#[derive(Args, Clone, Copy)]
struct FormatArgs {
    #[arg(long, value_enum, default_value_t = DelimiterArg::Whitespace)]
    delimiter: DelimiterArg,
    /// Indices in the files start at 1.
    #[arg(long)]
    one_based: bool,
}

#[derive(Clone, Copy, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
enum DelimiterArg {
    Whitespace,
    Comma,
}

impl FormatArgs {
    fn format(&self) -> RecordFormat {
        RecordFormat {
            delimiter: match self.delimiter {
                DelimiterArg::Whitespace => Delimiter::Whitespace,
                DelimiterArg::Comma => Delimiter::Comma,
            },
            index_base: if self.one_based { IndexBase::One } else { IndexBase::Zero },
        }
    }

    fn record(&self, m: &mut RunManifest) {
        m.param("delimiter", self.delimiter).param("one_based", self.one_based);
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Shape as `IxJxK`.
    #[arg(long, value_parser = parse_dims)]
    dims: Dims,
    #[arg(long)]
    rank: usize,
    #[arg(long)]
    density: f64,
    #[arg(long, default_value_t = 0.0)]
    noise_std: f64,
    #[arg(long, default_value_t = 0.0)]
    outlier_rate: f64,
    #[arg(long, default_value_t = 10.0)]
    outlier_scale: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory; created if missing.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    format: FormatArgs,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    m_ratio: f64,
    #[arg(long)]
    n_ratio: f64,
    #[arg(long)]
    o_ratio: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    format: FormatArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    Cauchy,
    L2,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    val: PathBuf,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = LossArg::Cauchy)]
    loss: LossArg,
    #[arg(long, default_value_t = 5)]
    rank: usize,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 0.1)]
    lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
    #[arg(long, default_value_t = 1000)]
    max_epochs: usize,
    #[arg(long, default_value_t = 20)]
    patience: usize,
    #[arg(long, default_value_t = 1e-5)]
    min_delta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long, default_value = "model.txt")]
    out_model: PathBuf,
    /// Per-epoch trace; one line per epoch.
    #[arg(long)]
    log: Option<PathBuf>,
    /// JSON training report.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Defaults to `<out-model>.manifest.json`.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[command(flatten)]
    format: FormatArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// Records whose cells are excluded from `clean_mae`.
    #[arg(long)]
    mask: Option<PathBuf>,
    #[command(flatten)]
    format: FormatArgs,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    /// Defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    format: FormatArgs,
}

fn parse_dims(s: &str) -> Result<Dims, String> {
    let parts: Vec<&str> = s.split(['x', 'X']).collect();
    if parts.len() != 3 {
        return Err(format!("expected IxJxK, got `{s}`"));
    }
    let mut d = [0usize; 3];
    for (slot, p) in d.iter_mut().zip(&parts) {
        *slot = p.trim().parse().map_err(|_| format!("invalid dimension `{p}`"))?;
    }
    Dims::new(d[0], d[1], d[2]).map_err(|e| e.to_string())
}

enum Failure {
    Usage(String),
    Input(String),
    Diverged(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_) => Failure::Usage(e.to_string()),
            Error::NonFinite { .. } => Failure::Diverged(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn load(path: &Path, bytes: &[u8], format: RecordFormat) -> Result<SparseTensor, Failure> {
    load_records(bytes, format, None).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn write_entries(path: &Path, entries: &[Entry], format: RecordFormat) -> CmdResult {
    let mut out = BufWriter::new(fs::File::create(path)?);
    write_records(&mut out, entries, format)?;
    out.flush()?;
    Ok(())
}

fn load_model(path: &Path) -> Result<FactorModel, Failure> {
    let text = String::from_utf8(read(path)?)
        .map_err(|_| Failure::Input(format!("{}: invalid UTF-8", path.display())))?;
    FactorModel::parse_text(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn cmd_synth(a: SynthArgs) -> CmdResult {
    let spec = SynthSpec {
        dims: a.dims,
        rank: a.rank,
        density: a.density,
        noise_std: a.noise_std,
        outlier_rate: a.outlier_rate,
        outlier_scale: a.outlier_scale,
        seed: a.seed,
    };
    spec.validate()?;
    let data = synthesize(&spec)?;
    fs::create_dir_all(&a.out)?;
    let format = a.format.format();
    write_entries(&a.out.join("observed.txt"), data.observed.entries(), format)?;
    write_entries(&a.out.join("outliers.txt"), &data.outlier_entries(), format)?;
    fs::write(a.out.join("truth.model"), data.truth.to_text())?;

    let mut m = RunManifest::new("synth", Some(a.seed));
    m.param("dims", a.dims.to_string())
        .param("rank", a.rank)
        .param("density", a.density)
        .param("noise_std", a.noise_std)
        .param("outlier_rate", a.outlier_rate)
        .param("outlier_scale", a.outlier_scale);
    a.format.record(&mut m);
    m.write(&a.out.join("manifest.json"))?;
    Ok(())
}

fn cmd_split(a: SplitArgs) -> CmdResult {
    let spec = SplitSpec::new(a.m_ratio, a.n_ratio, a.o_ratio, a.seed)?;
    let format = a.format.format();
    let bytes = read(&a.input)?;
    let tensor = load(&a.input, &bytes, format)?;
    let (tr, va, te) = split(&tensor, &spec)?;
    fs::create_dir_all(&a.out)?;
    write_entries(&a.out.join("train.txt"), &tr, format)?;
    write_entries(&a.out.join("validation.txt"), &va, format)?;
    write_entries(&a.out.join("test.txt"), &te, format)?;
    let counts = SplitCounts { train: tr.len(), validation: va.len(), test: te.len() };
    fs::write(a.out.join("split.json"), SplitMetadata::new(&spec, counts).to_json())?;

    let mut m = RunManifest::new("split", Some(a.seed));
    m.param("m_ratio", a.m_ratio).param("n_ratio", a.n_ratio).param("o_ratio", a.o_ratio);
    a.format.record(&mut m);
    m.input("input", &bytes);
    m.write(&a.out.join("manifest.json"))?;
    Ok(())
}

fn cmd_train(a: TrainArgs) -> CmdResult {
    let config = TrainConfig {
        rank: a.rank,
        gamma: a.gamma,
        lambda: a.lambda,
        eta: a.eta,
        loss_mode: match a.loss {
            LossArg::Cauchy => LossMode::Cauchy,
            LossArg::L2 => LossMode::L2,
        },
        max_epochs: a.max_epochs,
        patience: a.patience,
        min_delta: a.min_delta,
        seed: a.seed,
        threads: a.threads,
    };
    config.validate()?;
    let format = a.format.format();
    let train_bytes = read(&a.train)?;
    let val_bytes = read(&a.val)?;
    let train_set = load(&a.train, &train_bytes, format)?;
    let val_set = load(&a.val, &val_bytes, format)?;
    let test = match &a.test {
        Some(p) => {
            let bytes = read(p)?;
            let t = load(p, &bytes, format)?;
            Some((bytes, t))
        }
        None => None,
    };

    let mut log: Box<dyn Write> = match &a.log {
        Some(p) => Box::new(BufWriter::new(fs::File::create(p)?)),
        None => Box::new(io::sink()),
    };
    let mut outcome = train_with_log(&train_set, &val_set, &config, &mut log)?;
    log.flush()?;

    if let Some((_, t)) = &test {
        outcome.model.check_covers(t.dims())?;
        outcome.report.test_mae = Some(mae(&outcome.model, t.entries())?);
        let train_full = train_set.with_dims(outcome.model.dims())?;
        outcome.report.cold_test_entries = Some(eval::count_cold(&train_full, t.entries()));
    }

    fs::write(&a.out_model, outcome.model.to_text())?;
    if let Some(p) = &a.report {
        let mut text = serde_json::to_string_pretty(&outcome.report).expect("report serializes");
        text.push('\n');
        fs::write(p, text)?;
    }

    let mut m = RunManifest::new("train", Some(a.seed));
    m.param("config", &config);
    a.format.record(&mut m);
    m.input("train", &train_bytes).input("val", &val_bytes);
    if let Some((bytes, _)) = &test {
        m.input("test", bytes);
    }
    let manifest_path = a.manifest.clone().unwrap_or_else(|| {
        let mut p = a.out_model.clone().into_os_string();
        p.push(".manifest.json");
        PathBuf::from(p)
    });
    m.write(&manifest_path)?;

    println!("best_epoch {}", outcome.report.best_epoch);
    println!("best_val_mae {}", outcome.report.best_val_mae);
    if let Some(v) = outcome.report.test_mae {
        println!("test_mae {v}");
    }
    match outcome.divergence {
        Some(group) => Err(Failure::Diverged(format!(
            "training diverged in {group}; best model before divergence written"
        ))),
        None => Ok(()),
    }
}

fn cmd_eval(a: EvalArgs) -> CmdResult {
    let format = a.format.format();
    let model = load_model(&a.model)?;
    let bytes = read(&a.test)?;
    let test = load(&a.test, &bytes, format)?;
    model.check_covers(test.dims())?;
    println!("mae {}", mae(&model, test.entries())?);
    if let Some(p) = &a.mask {
        let mask_bytes = read(p)?;
        let flagged: HashSet<_> = load(p, &mask_bytes, format)?.entries().iter().map(|e| e.triple()).collect();
        let clean: Vec<_> = test.entries().iter().filter(|e| !flagged.contains(&e.triple())).copied().collect();
        if clean.is_empty() {
            return Err(Failure::Input("clean_mae: every test entry is masked".into()));
        }
        println!("clean_mae {}", mae(&model, &clean)?);
    }
    Ok(())
}

fn cmd_predict(a: PredictArgs) -> CmdResult {
    let format = a.format.format();
    let model = load_model(&a.model)?;
    let bytes = read(&a.input)?;
    let data = load(&a.input, &bytes, format)?;
    model.check_covers(data.dims())?;
    let sink: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(fs::File::create(p)?),
        None => Box::new(io::stdout().lock()),
    };
    let mut sink = BufWriter::new(sink);
    write_predictions(&model, data.entries(), &mut sink)?;
    sink.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Split(a) => cmd_split(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Predict(a) => cmd_predict(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Diverged(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
