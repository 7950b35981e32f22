use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use disent_core::discretize::{BinningSpec, BinningStrategy, Pooling};
use disent_core::probe::emit_accuracy_trend;
use disent_core::report::{
    self, load_inputs, read_metric_report, render_report, Inputs, ReportFormat, RunConfig, RUN_CONFIG_FILE,
};
use disent_core::synth::{write_dataset, GeneratorSpec};
use disent_core::{Error, Result, VersionTag};

/// Disentanglement metrics for sequential latent codes.
///
/// Exit status: 0 on success, 1 on invalid input or usage, 2 on I/O failure.
#[derive(Debug, Parser)]
#[command(name = "disent", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute MIG, JEMMIG, IRS and explicitness tables for each factor.
    Eval(EvalArgs),
    /// Train linear probes per code dimension and on all dimensions.
    Probe(ProbeArgs),
    /// Generate a synthetic dataset with planted structure.
    Synth(SynthArgs),
    /// Render a JSON evaluation report as markdown, CSV or JSON.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Dataset directory (or manifest file) as written by `synth`.
    #[arg(long, value_name = "DIR")]
    data: Option<String>,
    /// Factor table CSV; use together with --codes instead of --data.
    #[arg(long, value_name = "CSV", requires = "codes", conflicts_with = "data")]
    factors_csv: Option<String>,
    /// Code tensor (.dslc binary, or .csv with one value per dimension).
    #[arg(long, value_name = "PATH", requires = "factors_csv", conflicts_with = "data")]
    codes: Option<String>,
    /// Column declarations for --factors-csv.
    #[arg(long, value_name = "JSON", requires = "factors_csv")]
    schema: Option<String>,
}

impl DataArgs {
    fn inputs(&self) -> Inputs {
        Inputs {
            data: self.data.clone(),
            factors_csv: self.factors_csv.clone(),
            codes: self.codes.clone(),
            schema: self.schema.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PoolingArg {
    Mean,
    Maxabs,
    Rms,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StrategyArg {
    Uniform,
    Quantile,
}

impl From<StrategyArg> for BinningStrategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Uniform => BinningStrategy::Uniform,
            StrategyArg::Quantile => BinningStrategy::Quantile,
        }
    }
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Factor to evaluate; repeat for several. Defaults to every factor.
    #[arg(long = "factor", value_name = "NAME")]
    factors: Vec<String>,
    /// Time-axis pooling applied before binning codes.
    #[arg(long, value_enum, default_value_t = PoolingArg::Mean)]
    pooling: PoolingArg,
    /// Bin count for continuous factor columns.
    #[arg(long, default_value_t = BinningSpec::DEFAULT_FACTOR_BINS)]
    factor_bins: u32,
    /// Binning strategy for continuous factor columns.
    #[arg(long, value_enum, default_value_t = StrategyArg::Quantile)]
    factor_binning: StrategyArg,
    /// Training epochs for every linear classifier.
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    /// Mini-batch size.
    #[arg(long, default_value_t = 128)]
    batch_size: usize,
    /// Learning rate.
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    /// L2 penalty strength.
    #[arg(long, default_value_t = 1e-4)]
    l2: f64,
    /// Held-out share of every stratified split.
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
    /// Master seed; every split and initialization derives from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl ModelArgs {
    fn apply(&self, config: &mut RunConfig) -> Result<()> {
        config.factors = self.factors.clone();
        config.pooling = match self.pooling {
            PoolingArg::Mean => Pooling::Mean,
            PoolingArg::Maxabs => Pooling::MaxAbs,
            PoolingArg::Rms => Pooling::Rms,
        };
        config.factor_binning = BinningSpec::new(self.factor_binning.into(), self.factor_bins)?;
        config.hyperparameters.epochs = self.epochs;
        config.hyperparameters.batch_size = self.batch_size;
        config.hyperparameters.learning_rate = self.lr;
        config.hyperparameters.l2 = self.l2;
        config.hyperparameters.validate()?;
        config.test_fraction = self.test_fraction;
        config.seed = self.seed;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Markdown,
    Csv,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => ReportFormat::Json,
            FormatArg::Markdown => ReportFormat::Markdown,
            FormatArg::Csv => ReportFormat::Csv,
        }
    }
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Bin count for pooled code dimensions.
    #[arg(long, default_value_t = BinningSpec::DEFAULT_CODE_BINS)]
    code_bins: u32,
    /// Binning strategy for pooled code dimensions.
    #[arg(long, value_enum, default_value_t = StrategyArg::Uniform)]
    binning: StrategyArg,
    /// Smallest (target, nuisance) cell IRS will use.
    #[arg(long, default_value_t = 2)]
    irs_min_group: usize,
    /// Report format.
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,
    /// Output file (a directory for csv). JSON and markdown go to stdout when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ProbeArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Independent runs per configuration.
    #[arg(long, default_value_t = 5)]
    runs: usize,
    /// JSON output file; stdout when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Directory for per-factor accuracy-trend CSV files.
    #[arg(long, value_name = "DIR")]
    trend_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PresetArg {
    Small,
    Medium,
    Large,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Built-in dataset grid with the planted 16-dimension layout.
    #[arg(long, value_enum, required_unless_present = "spec", conflicts_with = "spec")]
    preset: Option<PresetArg>,
    /// Generator spec JSON.
    #[arg(long, value_name = "JSON")]
    spec: Option<PathBuf>,
    /// Master seed. Defaults to 0 for presets and to the seed stored in the generator file.
    #[arg(long)]
    seed: Option<u64>,
    /// Destination directory; created if missing.
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
    /// Override the sequence length (presets use 256).
    #[arg(long)]
    seq_len: Option<usize>,
    /// Override the sample count (presets cover their grid exactly once).
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// JSON report written by `eval`.
    #[arg(long, value_name = "JSON")]
    input: PathBuf,
    /// Output format.
    #[arg(long, value_enum, default_value_t = FormatArg::Markdown)]
    format: FormatArg,
    /// Output file (a directory for csv); stdout when omitted for json and markdown.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_report(report: &report::MetricReport, format: FormatArg, out: Option<&Path>) -> Result<()> {
    match (format, out) {
        (_, Some(path)) => render_report(report, format.into(), path).map(|_| ()),
        (FormatArg::Json, None) => emit(&report::to_json(report)?, None),
        (FormatArg::Markdown, None) => emit(&report::render_markdown(report)?, None),
        (FormatArg::Csv, None) => Err(Error::InvalidConfig("csv output needs --out DIR".into())),
    }
}

fn eval(args: EvalArgs) -> Result<()> {
    let mut config = RunConfig::new("eval");
    config.inputs = args.data.inputs();
    args.model.apply(&mut config)?;
    config.code_binning = BinningSpec::new(args.binning.into(), args.code_bins)?;
    config.irs_min_group_size = args.irs_min_group;
    let report = report::run_eval(&config, load_inputs(&config.inputs)?)?;
    write_report(&report, args.format, args.out.as_deref())
}

fn probe(args: ProbeArgs) -> Result<()> {
    let mut config = RunConfig::new("probe");
    config.inputs = args.data.inputs();
    args.model.apply(&mut config)?;
    config.runs = Some(args.runs);
    let result = report::run_probe(&config, load_inputs(&config.inputs)?)?;
    if let Some(dir) = &args.trend_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.clone(),
            source: e,
        })?;
        for r in &result.results {
            emit_accuracy_trend(r, dir.join(format!("{}_accuracy_trend.csv", report::file_stem(&r.factor))))?;
        }
        emit(&result.config.to_json()?, Some(&dir.join(RUN_CONFIG_FILE)))?;
    }
    emit(&report::to_json(&result)?, args.out.as_deref())
}

fn synth(args: SynthArgs) -> Result<()> {
    let mut spec = match (args.preset, &args.spec) {
        (Some(p), _) => {
            let tag = match p {
                PresetArg::Small => VersionTag::Small,
                PresetArg::Medium => VersionTag::Medium,
                PresetArg::Large => VersionTag::Large,
            };
            GeneratorSpec::preset(tag, args.seed.unwrap_or(0))?
        }
        (None, Some(path)) => GeneratorSpec::load(path)?,
        (None, None) => return Err(Error::InvalidConfig("give --preset or --spec".into())),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(t) = args.seq_len {
        spec.seq_len = t;
    }
    if let Some(n) = args.samples {
        spec.n_samples = Some(n);
    }
    let manifest = write_dataset(&spec, &args.out_dir)?;
    eprintln!(
        "wrote {} samples ({} dimensions, {} steps) to {}",
        manifest.total_utterances,
        spec.n_dims(),
        spec.seq_len,
        args.out_dir.display()
    );
    Ok(())
}

fn render(args: ReportArgs) -> Result<()> {
    let report = read_metric_report(&args.input)?;
    write_report(&report, args.format, args.out.as_deref())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match cli.command {
        Command::Eval(a) => eval(a),
        Command::Probe(a) => probe(a),
        Command::Synth(a) => synth(a),
        Command::Report(a) => render(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}
