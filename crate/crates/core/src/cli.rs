//! Command-line front end.
//!
//! Options may also come from a TOML or JSON file given with `--config`:
//! top-level keys set global options and a table named after the
//! subcommand sets that subcommand's options. Flags on the command line
//! override file values. Every artifact written carries a `provenance`
//! object holding the tool version and the fully resolved options.

use std::ffi::OsString;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::codec::{expand_vocab_map, EncodedRecord, Encoder};
use crate::error::Error;
use crate::eval::{
    corpus_stats, export_probe_dataset, run_gap_experiment, train_direction_vocab, Directions, GapConfig, GapReport,
    GridSource, LengthModelKind, ProbeOptions, ProbeSplit, TokenizerMode, DEFAULT_SMOOTHING, MANIFEST_FILE,
};
use crate::grid::{load_corpus_dir, load_grid, save_grid, GridFormat, TokenGrid};
use crate::markov::{
    entropy, gen_defn1_corpus, gen_scenario_corpus, h_infinity, joint_entropy_exact, prop2_bound,
    remark1_rate, stationary, Axis, Defn1Params, MarkovKernel,
};
use crate::trainer::{CorpusItem, CountingPolicy, TrainConfig, Trainer};
use crate::vocab::{load_vocab, OrientationPolicy, Vocabulary};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser, Serialize)]
#[command(name = "imgbpe", version, about = "2D byte-pair encoding for image-token grids", args_override_self = true)]
struct Cli {
    /// TOML or JSON file with default option values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output file or directory; `-` writes to stdout.
    #[arg(long, global = true, default_value = "-")]
    out: PathBuf,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Grid file format for written grids and extension-less inputs.
    #[arg(long, global = true, value_enum, default_value_t = GridFormat::Text)]
    format: GridFormat,
    /// Report entropies and losses in bits.
    #[arg(long, global = true, overrides_with = "nats")]
    bits: bool,
    /// Report entropies and losses in nats (default).
    #[arg(long, global = true, overrides_with = "bits")]
    nats: bool,
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[arg(short, long, global = true, action = ArgAction::Count)]
    quiet: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Learn a merge vocabulary from a directory of grids.
    Train(TrainArgs),
    /// Encode grids to token JSON lines.
    Encode(EncodeArgs),
    /// Decode token JSON lines back to grids.
    Decode(DecodeArgs),
    /// Corpus and vocabulary summary with token-usage counts.
    Stats(StatsArgs),
    /// Generate grids from the binary 2D k-th order process.
    GenMarkov(GenMarkovArgs),
    /// Generate grids of independent Markov chains along one axis.
    GenScenario(GenScenarioArgs),
    /// Entropy references for a kernel.
    Entropy(EntropyArgs),
    /// Flattened versus tokenized unigram loss experiment.
    EvalGap(EvalGapArgs),
    /// Export raw and per-direction tokenized datasets for sequence probes.
    ExportProbe(ExportProbeArgs),
    /// Global ID layout after appending image tokens to a text vocabulary.
    VocabMap(VocabMapArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Train(_) => "train",
            Command::Encode(_) => "encode",
            Command::Decode(_) => "decode",
            Command::Stats(_) => "stats",
            Command::GenMarkov(_) => "gen-markov",
            Command::GenScenario(_) => "gen-scenario",
            Command::Entropy(_) => "entropy",
            Command::EvalGap(_) => "eval-gap",
            Command::ExportProbe(_) => "export-probe",
            Command::VocabMap(_) => "vocab-map",
        }
    }
}

#[derive(Debug, Args, Serialize)]
struct TrainArgs {
    #[arg(long, value_name = "DIR")]
    corpus: PathBuf,
    #[arg(long)]
    merges: usize,
    /// Number of base IDs (defaults to the largest ID in the corpus plus one).
    #[arg(long)]
    base_vocab_size: Option<u32>,
    #[arg(long, value_enum, default_value_t = OrientationPolicy::Agnostic)]
    orientation: OrientationPolicy,
    #[arg(long, value_enum, default_value_t = CountingPolicy::Symmetrized)]
    counting: CountingPolicy,
    /// Write one JSON line per merge to this file.
    #[arg(long, value_name = "FILE")]
    log: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct EncodeArgs {
    #[arg(long, value_name = "FILE")]
    vocab: PathBuf,
    /// Grid files or directories of grid files.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Include the per-cell layout needed to decode agnostic encodings.
    #[arg(long)]
    layout: bool,
}

#[derive(Debug, Args, Serialize)]
struct DecodeArgs {
    #[arg(long, value_name = "FILE")]
    vocab: PathBuf,
    /// Token JSON lines produced by `encode`.
    input: PathBuf,
    /// Decode through the recorded layout instead of token shapes.
    #[arg(long)]
    layout: bool,
}

#[derive(Debug, Args, Serialize)]
struct StatsArgs {
    #[arg(long, value_name = "DIR")]
    corpus: PathBuf,
    #[arg(long, value_name = "FILE")]
    vocab: Option<PathBuf>,
    /// Keep only the N most used tokens in the usage table.
    #[arg(long)]
    top: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
struct Defn1Args {
    #[arg(long, default_value_t = 0.9)]
    p: f64,
    #[arg(long, default_value_t = 0.9)]
    q: f64,
    #[arg(long, default_value_t = 1)]
    k: usize,
}

impl Defn1Args {
    fn params(&self) -> crate::Result<Defn1Params> {
        Defn1Params::new(self.p, self.q, self.k)
    }
}

#[derive(Debug, Args, Serialize)]
struct KernelArgs {
    /// JSON kernel `{"alphabet_size": C, "transition": [[...]]}`; overrides --p/--q.
    #[arg(long, value_name = "FILE")]
    kernel: Option<PathBuf>,
    /// Binary kernel `P(1|0)`.
    #[arg(long, default_value_t = 0.9)]
    p: f64,
    /// Binary kernel `P(0|1)`.
    #[arg(long, default_value_t = 0.9)]
    q: f64,
}

impl KernelArgs {
    fn kernel(&self) -> crate::Result<MarkovKernel> {
        match &self.kernel {
            Some(path) => MarkovKernel::load(path),
            None => MarkovKernel::binary_flip(self.p, self.q),
        }
    }
}

#[derive(Debug, Args, Serialize)]
struct GenMarkovArgs {
    #[command(flatten)]
    params: Defn1Args,
    #[arg(long, default_value_t = 32)]
    m: usize,
    #[arg(long, default_value_t = 100)]
    count: usize,
}

#[derive(Debug, Args, Serialize)]
struct GenScenarioArgs {
    #[command(flatten)]
    kernel: KernelArgs,
    #[arg(long, value_enum, default_value_t = Axis::Column)]
    axis: Axis,
    #[arg(long, default_value_t = 64)]
    m: usize,
    #[arg(long, default_value_t = 100)]
    count: usize,
}

#[derive(Debug, Args, Serialize)]
struct EntropyArgs {
    #[command(flatten)]
    kernel: KernelArgs,
    /// Dictionary size for the tokenized-loss bound.
    #[arg(long)]
    dict_size: Option<u64>,
    /// Also report the exact joint entropy of an m x m image.
    #[arg(long)]
    m: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
enum SourceKind {
    Scenario,
    Defn1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
enum TokenizerKind {
    Grid2d,
    Rows,
    Columns,
    Both,
}

#[derive(Debug, Args, Serialize)]
struct EvalGapArgs {
    #[arg(long, value_enum, default_value_t = SourceKind::Scenario)]
    source: SourceKind,
    #[command(flatten)]
    kernel: KernelArgs,
    #[arg(long, value_enum, default_value_t = Axis::Column)]
    axis: Axis,
    /// Parent offset for the defn1 source.
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value_t = 64)]
    m: usize,
    #[arg(long, default_value_t = 200)]
    train_grids: usize,
    #[arg(long, default_value_t = 200)]
    eval_grids: usize,
    #[arg(long, default_value_t = 254)]
    merges: usize,
    /// Dictionary size for the bound (defaults to base size plus merges).
    #[arg(long)]
    dict_size: Option<u64>,
    #[arg(long, value_enum, default_value_t = TokenizerKind::Grid2d)]
    tokenizer: TokenizerKind,
    #[arg(long, value_enum, default_value_t = OrientationPolicy::Oriented)]
    orientation: OrientationPolicy,
    #[arg(long, value_enum, default_value_t = CountingPolicy::Symmetrized)]
    counting: CountingPolicy,
    #[arg(long, default_value_t = DEFAULT_SMOOTHING)]
    smoothing: f64,
    #[arg(long, value_enum, default_value_t = LengthModelKind::Uniform)]
    length_model: LengthModelKind,
    /// Monte Carlo samples for the defn1 optimal-loss reference (0 skips).
    #[arg(long, default_value_t = 0)]
    optimal_samples: usize,
    /// Append a one-line summary to this CSV file.
    #[arg(long, value_name = "FILE")]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct ExportProbeArgs {
    #[command(flatten)]
    params: Defn1Args,
    #[arg(long, default_value_t = 32)]
    m: usize,
    /// Existing 1D vocabulary; trained from fresh grids when absent.
    #[arg(long, value_name = "FILE")]
    vocab: Option<PathBuf>,
    /// Merges for a freshly trained vocabulary.
    #[arg(long, default_value_t = 8)]
    merges: usize,
    /// Grids used to train a fresh vocabulary.
    #[arg(long, default_value_t = 200)]
    vocab_grids: usize,
    /// Comma-separated `name=count` pairs.
    #[arg(long, default_value = "train=1000,eval=200")]
    splits: String,
    #[arg(long, value_enum, default_value_t = Directions::Both)]
    directions: Directions,
    #[arg(long, default_value_t = 0)]
    optimal_samples: usize,
}

#[derive(Debug, Args, Serialize)]
struct VocabMapArgs {
    #[arg(long)]
    text_vocab_size: u64,
    /// Read base size and merge count from a vocabulary file.
    #[arg(long, value_name = "FILE")]
    vocab: Option<PathBuf>,
    #[arg(long, required_unless_present = "vocab")]
    base: Option<u64>,
    #[arg(long, required_unless_present = "vocab")]
    merged: Option<u64>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> Failure + '_ {
    move |e| Failure::Data(Error::io(path, e))
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code: 0 on success, 1 on usage errors, 2 on data errors.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match parse(&argv) {
        Ok(cli) => cli,
        Err(Failure::Usage(msg)) => {
            eprint!("{msg}");
            return 1;
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    init_logging(&cli);
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn init_logging(cli: &Cli) {
    let level = match i16::from(cli.verbose) - i16::from(cli.quiet) {
        i16::MIN..=-2 => log::LevelFilter::Off,
        -1 => log::LevelFilter::Error,
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let _ = env_logger::Builder::new().filter_level(level).format_timestamp(None).try_init();
}

fn clap_failure(e: clap::Error) -> Failure {
    Failure::Usage(e.render().to_string())
}

fn parse(argv: &[OsString]) -> CliResult<Cli> {
    let first = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                std::process::exit(0);
            }
            return Err(clap_failure(e));
        }
    };
    let Some(path) = first.config.clone() else {
        return Ok(first);
    };
    let file_args = config_file_args(&path, first.command.name())?;
    let position = subcommand_position(argv).ok_or_else(|| Failure::Usage("no subcommand found\n".into()))?;
    let mut merged: Vec<OsString> = argv[..=position].to_vec();
    merged.extend(file_args.into_iter().map(OsString::from));
    merged.extend_from_slice(&argv[position + 1..]);
    Cli::try_parse_from(&merged).map_err(clap_failure)
}

/// Index of the subcommand token, skipping values of global options.
fn subcommand_position(argv: &[OsString]) -> Option<usize> {
    const TAKES_VALUE: [&str; 5] = ["--config", "--seed", "--out", "--threads", "--format"];
    let mut i = 1;
    while i < argv.len() {
        let arg = argv[i].to_string_lossy();
        if TAKES_VALUE.contains(&arg.as_ref()) {
            i += 2;
        } else if arg.starts_with('-') {
            i += 1;
        } else {
            return Some(i);
        }
    }
    None
}

fn config_file_args(path: &Path, subcommand: &str) -> CliResult<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read config {}: {e}\n", path.display())))?;
    let value: Value = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("invalid JSON config: {e}\n")))?
    } else {
        let table: toml::Table = text.parse().map_err(|e| Failure::Usage(format!("invalid TOML config: {e}\n")))?;
        serde_json::to_value(table).map_err(|e| Failure::Usage(format!("invalid TOML config: {e}\n")))?
    };
    let Value::Object(map) = value else {
        return Err(Failure::Usage("config must be a table of options\n".into()));
    };
    let mut args = Vec::new();
    let mut section = Vec::new();
    for (key, value) in &map {
        match value {
            Value::Object(table) if key == subcommand => {
                for (k, v) in table {
                    push_option(&mut section, k, v)?;
                }
            }
            Value::Object(_) => {}
            _ if key == "config" => {}
            v => push_option(&mut args, key, v)?,
        }
    }
    args.extend(section);
    Ok(args)
}

fn push_option(args: &mut Vec<String>, key: &str, value: &Value) -> CliResult<()> {
    let flag = format!("--{}", key.replace('_', "-"));
    match value {
        Value::Bool(true) => args.push(flag),
        Value::Bool(false) | Value::Null => {}
        Value::Array(items) => {
            for item in items {
                push_option(args, key, item)?;
            }
        }
        Value::String(s) => args.extend([flag, s.clone()]),
        Value::Number(n) => args.extend([flag, n.to_string()]),
        Value::Object(_) => return Err(Failure::Usage(format!("config key {key:?} cannot be a table\n"))),
    }
    Ok(())
}

fn provenance(cli: &Cli) -> Value {
    json!({
        "tool": "imgbpe",
        "version": VERSION,
        "command": cli.command.name(),
        "options": serde_json::to_value(cli).expect("options serialize"),
    })
}

fn is_stdout(path: &Path) -> bool {
    path.as_os_str() == "-"
}

fn write_output(out: &Path, bytes: &[u8]) -> CliResult<()> {
    if is_stdout(out) {
        let mut stdout = io::stdout().lock();
        stdout.write_all(bytes).and_then(|_| stdout.flush()).map_err(io_err(out))
    } else {
        if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        fs::write(out, bytes).map_err(io_err(out))
    }
}

fn write_json(out: &Path, value: &Value) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)? + "\n";
    write_output(out, text.as_bytes())
}

/// Adds `provenance` as the first key of a serialized object.
fn with_provenance<T: Serialize>(cli: &Cli, value: &T) -> CliResult<Value> {
    let mut map = serde_json::Map::new();
    map.insert("provenance".into(), provenance(cli));
    match serde_json::to_value(value).map_err(Error::from)? {
        Value::Object(body) => map.extend(body),
        other => {
            map.insert("result".into(), other);
        }
    }
    Ok(Value::Object(map))
}

fn out_dir(cli: &Cli) -> CliResult<&Path> {
    if is_stdout(&cli.out) {
        return Err(Failure::Usage(format!("{} needs --out DIR", cli.command.name())));
    }
    fs::create_dir_all(&cli.out).map_err(io_err(&cli.out))?;
    Ok(&cli.out)
}

fn load_inputs(paths: &[PathBuf], default_format: GridFormat) -> CliResult<Vec<(PathBuf, TokenGrid)>> {
    let mut grids = Vec::new();
    for path in paths {
        if path.is_dir() {
            grids.extend(load_corpus_dir(path, None)?);
        } else {
            let format = path
                .extension()
                .and_then(|e| e.to_str())
                .and_then(GridFormat::from_extension)
                .unwrap_or(default_format);
            grids.push((path.clone(), load_grid(path, format, None)?));
        }
    }
    Ok(grids)
}

fn load_corpus(dir: &Path) -> CliResult<Vec<TokenGrid>> {
    let grids: Vec<TokenGrid> = load_corpus_dir(dir, None)?.into_iter().map(|(_, g)| g).collect();
    if grids.is_empty() {
        return Err(Failure::Data(Error::EmptyCorpus));
    }
    Ok(grids)
}

fn dispatch(cli: &Cli) -> CliResult<()> {
    log::info!("imgbpe {VERSION} {}", cli.command.name());
    match &cli.command {
        Command::Train(a) => cmd_train(cli, a),
        Command::Encode(a) => cmd_encode(cli, a),
        Command::Decode(a) => cmd_decode(cli, a),
        Command::Stats(a) => cmd_stats(cli, a),
        Command::GenMarkov(a) => cmd_gen_markov(cli, a),
        Command::GenScenario(a) => cmd_gen_scenario(cli, a),
        Command::Entropy(a) => cmd_entropy(cli, a),
        Command::EvalGap(a) => cmd_eval_gap(cli, a),
        Command::ExportProbe(a) => cmd_export_probe(cli, a),
        Command::VocabMap(a) => cmd_vocab_map(cli, a),
    }
}

fn cmd_train(cli: &Cli, a: &TrainArgs) -> CliResult<()> {
    let grids = load_corpus(&a.corpus)?;
    let base = match a.base_vocab_size {
        Some(b) => b,
        None => grids.iter().map(TokenGrid::max_id).max().unwrap_or(0) + 1,
    };
    log::info!("training on {} grids, base vocabulary {base}", grids.len());
    let corpus: Vec<CorpusItem> = grids.into_iter().map(CorpusItem::Grid).collect();
    let config = TrainConfig::new(base, a.merges).with_orientation(a.orientation).with_counting(a.counting);
    let mut trainer = Trainer::new(&corpus, config)?;
    match &a.log {
        Some(path) => {
            let file = fs::File::create(path).map_err(io_err(path))?;
            let mut w = io::BufWriter::new(file);
            writeln!(w, "{}", json!({ "provenance": provenance(cli) })).map_err(io_err(path))?;
            trainer.run_logged(&mut w)?;
            w.flush().map_err(io_err(path))?;
        }
        None => trainer.run(),
    }
    if trainer.stopped_early() {
        log::warn!("stopped after {} merges: no adjacent pairs left", trainer.vocab().merges().len());
    }
    let text = trainer.vocab().to_json_with_provenance(&provenance(cli));
    write_output(&cli.out, text.as_bytes())
}

fn cmd_encode(cli: &Cli, a: &EncodeArgs) -> CliResult<()> {
    let vocab = load_vocab(&a.vocab)?;
    let encoder = Encoder::new(&vocab);
    let mut out = serde_json::to_string(&json!({ "provenance": provenance(cli) })).map_err(Error::from)? + "\n";
    for (path, grid) in load_inputs(&a.inputs, cli.format)? {
        grid.check_range(vocab.base_vocab_size())?;
        let record = if a.layout {
            let (seq, layout) = encoder.encode_with_layout(&grid)?;
            EncodedRecord::new(path.display().to_string(), &seq, Some(&layout))
        } else {
            EncodedRecord::new(path.display().to_string(), &encoder.encode(&grid)?, None)
        };
        out.push_str(&serde_json::to_string(&record).map_err(Error::from)?);
        out.push('\n');
    }
    write_output(&cli.out, out.as_bytes())
}

/// Reads `encode` output, skipping the provenance header line.
fn read_records(path: &Path) -> CliResult<Vec<EncodedRecord>> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut records = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line).map_err(Error::from)?;
        if value.get("provenance").is_some() && value.get("tokens").is_none() {
            continue;
        }
        records.push(serde_json::from_value(value).map_err(Error::from)?);
    }
    Ok(records)
}

fn cmd_decode(cli: &Cli, a: &DecodeArgs) -> CliResult<()> {
    let vocab = load_vocab(&a.vocab)?;
    let encoder = Encoder::new(&vocab);
    let records = read_records(&a.input)?;
    let mut decoded = Vec::with_capacity(records.len());
    for record in &records {
        let layout = if a.layout {
            Some(record.layout().ok_or(Error::LayoutRequired)?)
        } else {
            None
        };
        decoded.push(encoder.decode(&record.sequence(), layout.as_ref())?);
    }
    if is_stdout(&cli.out) {
        let text: String = decoded.iter().map(TokenGrid::to_text).collect();
        return write_output(&cli.out, text.as_bytes());
    }
    let dir = out_dir(cli)?;
    let mut names = Vec::with_capacity(records.len());
    for (i, (record, grid)) in records.iter().zip(&decoded).enumerate() {
        let stem = Path::new(&record.source)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| format!("grid_{i:05}"));
        let name = format!("{stem}.{}", cli.format.extension());
        save_grid(grid, &dir.join(&name), cli.format)?;
        names.push(name);
    }
    write_json(&dir.join(MANIFEST_FILE), &json!({ "provenance": provenance(cli), "grids": names }))
}

fn cmd_stats(cli: &Cli, a: &StatsArgs) -> CliResult<()> {
    let grids = load_corpus(&a.corpus)?;
    let vocab = match &a.vocab {
        Some(path) => load_vocab(path)?,
        None => Vocabulary::base(grids.iter().map(TokenGrid::max_id).max().unwrap_or(0) + 1),
    };
    let mut stats = corpus_stats(&grids, &vocab)?;
    if let Some(n) = a.top {
        stats.usage.truncate(n);
    }
    write_json(&cli.out, &with_provenance(cli, &stats)?)
}

fn write_generated(cli: &Cli, grids: &[TokenGrid], generator: Value) -> CliResult<()> {
    let dir = out_dir(cli)?;
    let mut names = Vec::with_capacity(grids.len());
    for (i, grid) in grids.iter().enumerate() {
        let name = format!("grid_{i:05}.{}", cli.format.extension());
        save_grid(grid, &dir.join(&name), cli.format)?;
        names.push(name);
    }
    let manifest = json!({ "provenance": provenance(cli), "generator": generator, "grids": names });
    write_json(&dir.join(MANIFEST_FILE), &manifest)
}

fn cmd_gen_markov(cli: &Cli, a: &GenMarkovArgs) -> CliResult<()> {
    let params = a.params.params()?;
    let grids = gen_defn1_corpus(&params, a.m, a.count, cli.seed)?;
    write_generated(cli, &grids, json!({ "kind": "defn1", "params": params, "m": a.m }))
}

fn cmd_gen_scenario(cli: &Cli, a: &GenScenarioArgs) -> CliResult<()> {
    let kernel = a.kernel.kernel()?;
    let pi = stationary(&kernel)?;
    let grids = gen_scenario_corpus(&kernel, &pi, a.m, a.axis, a.count, cli.seed)?;
    let generator = json!({ "kind": "scenario", "kernel": kernel, "stationary": pi.probs, "axis": a.axis, "m": a.m });
    write_generated(cli, &grids, generator)
}

#[derive(Serialize)]
struct EntropyOutput {
    units: &'static str,
    h_pi: f64,
    h_inf: f64,
    delta: f64,
    stationary: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    prop2_bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dictionary_size_d: Option<u64>,
    /// Bound-to-entropy-rate ratio for a symmetric binary kernel.
    #[serde(skip_serializing_if = "Option::is_none")]
    switching_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    joint_entropy: Option<f64>,
}

fn cmd_entropy(cli: &Cli, a: &EntropyArgs) -> CliResult<()> {
    let kernel = a.kernel.kernel()?;
    let pi = stationary(&kernel)?;
    let scale = if cli.bits { std::f64::consts::LN_2 } else { 1.0 };
    let bound = a.dict_size.map(|d| prop2_bound(&kernel, &pi, d)).transpose()?;
    let symmetric_binary = kernel.alphabet_size() == 2 && kernel.prob(0, 1) == kernel.prob(1, 0);
    let switching_ratio = if symmetric_binary && kernel.delta() > 0.0 && kernel.delta() < 0.5 {
        Some(remark1_rate(kernel.delta())?.ratio)
    } else {
        None
    };
    let joint = a.m.map(|m| joint_entropy_exact(&kernel, &pi, m)).transpose()?;
    let output = EntropyOutput {
        units: if cli.bits { "bits" } else { "nats" },
        h_pi: entropy(&pi) / scale,
        h_inf: h_infinity(&kernel, &pi)? / scale,
        delta: kernel.delta(),
        stationary: pi.probs.clone(),
        epsilon: bound.as_ref().map(|b| b.epsilon),
        prop2_bound: bound.as_ref().map(|b| b.prop2_bound / scale),
        dictionary_size_d: a.dict_size,
        switching_ratio,
        m: a.m,
        joint_entropy: joint.map(|j| j / scale),
    };
    write_json(&cli.out, &with_provenance(cli, &output)?)
}

fn cmd_eval_gap(cli: &Cli, a: &EvalGapArgs) -> CliResult<()> {
    let source = match a.source {
        SourceKind::Scenario => GridSource::Scenario { kernel: a.kernel.kernel()?, axis: a.axis },
        SourceKind::Defn1 => GridSource::Defn1 { params: Defn1Params::new(a.kernel.p, a.kernel.q, a.k)? },
    };
    let mut config = GapConfig::new(source, a.m, a.train_grids, a.eval_grids, a.merges);
    if let Some(d) = a.dict_size {
        config.dictionary_size_d = d;
    }
    config.seed = cli.seed;
    config.smoothing = a.smoothing;
    config.length_model = a.length_model;
    config.optimal_mc_samples = a.optimal_samples;
    config.tokenizer = match a.tokenizer {
        TokenizerKind::Grid2d => TokenizerMode::Grid2d { orientation: a.orientation, counting: a.counting },
        TokenizerKind::Rows => TokenizerMode::PerDirection { directions: Directions::Rows },
        TokenizerKind::Columns => TokenizerMode::PerDirection { directions: Directions::Columns },
        TokenizerKind::Both => TokenizerMode::PerDirection { directions: Directions::Both },
    };
    let report = run_gap_experiment(&config)?;
    let report = if cli.bits { report.in_bits() } else { report };
    if let Some(path) = &a.csv {
        let exists = path.exists();
        let mut file = fs::OpenOptions::new().create(true).append(true).open(path).map_err(io_err(path))?;
        if !exists {
            writeln!(file, "{}", GapReport::CSV_HEADER).map_err(io_err(path))?;
        }
        writeln!(file, "{}", report.csv_row()).map_err(io_err(path))?;
    }
    write_json(&cli.out, &with_provenance(cli, &report)?)
}

fn parse_splits(spec: &str) -> CliResult<Vec<ProbeSplit>> {
    spec.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|part| {
            let (name, count) = part
                .split_once('=')
                .ok_or_else(|| Failure::Usage(format!("split {part:?} is not name=count")))?;
            let count = count
                .trim()
                .parse()
                .map_err(|_| Failure::Usage(format!("split {part:?} has a non-integer count")))?;
            Ok(ProbeSplit::new(name.trim(), count))
        })
        .collect()
}

fn cmd_export_probe(cli: &Cli, a: &ExportProbeArgs) -> CliResult<()> {
    let params = a.params.params()?;
    let splits = parse_splits(&a.splits)?;
    let dir = out_dir(cli)?;
    let vocab = match &a.vocab {
        Some(path) => load_vocab(path)?,
        None => {
            // Seed stream 1 << 32 keeps vocabulary grids apart from the splits.
            let grids = gen_defn1_corpus(&params, a.m, a.vocab_grids, crate::markov::derive_seed(cli.seed, 1 << 32))?;
            train_direction_vocab(&grids, 2, a.merges, a.directions)?
        }
    };
    let vocab_path = dir.join("vocab.json");
    fs::write(&vocab_path, vocab.to_json_with_provenance(&provenance(cli))).map_err(io_err(&vocab_path))?;
    let options = ProbeOptions { m: a.m, directions: a.directions, seed: cli.seed, optimal_mc_samples: a.optimal_samples };
    let manifest = export_probe_dataset(&params, &vocab, &splits, &options, dir)?;
    write_json(&dir.join(MANIFEST_FILE), &with_provenance(cli, &manifest)?)
}

fn cmd_vocab_map(cli: &Cli, a: &VocabMapArgs) -> CliResult<()> {
    let (base, merged) = match &a.vocab {
        Some(path) => {
            let v = load_vocab(path)?;
            (u64::from(v.base_vocab_size()), v.merges().len() as u64)
        }
        None => (a.base.unwrap_or(0), a.merged.unwrap_or(0)),
    };
    let map = expand_vocab_map(a.text_vocab_size, base, merged);
    let ranges = map.ranges();
    let body = json!({
        "map": map,
        "total_size": map.total_size(),
        "ranges": {
            "text": [ranges[0].start, ranges[0].end],
            "base_image": [ranges[1].start, ranges[1].end],
            "merged_image": [ranges[2].start, ranges[2].end],
            "special": [ranges[3].start, ranges[3].end],
        },
    });
    write_json(&cli.out, &with_provenance(cli, &body)?)
}
