//! `xlsem`: validation, conversion, scoring, coreference evaluation and
//! kernel experiments over semantic representation corpora.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use xlsem::coref::{chains_from_linearized, forced_decode_eval, CorefReport, Method, Metric, ResolverSpec};
use xlsem::io::{parse_flat_corpus, parse_graph_corpus, serialize_flat_corpus, serialize_graph_corpus, GraphRecord};
use xlsem::kernel::{
    grad_check, greedy_decode, read_checkpoint, synth_dataset, train, write_checkpoint, KernelError, KernelResolver,
    ModelConfig, Splits, SynthConfig, SynthDataset, TrainConfig,
};
use xlsem::linear::{
    default_layout, delinearize_with_layout, linearize, parse_corpus, serialize_corpus, serialize_text_with, LinToken,
    LinearizedRepr, SerializeOptions,
};
use xlsem::metric::{corpus_score_aligned, MatchConfig, MetricError};
use xlsem::repr::{flat_to_graph, graph_to_flat, GraphRepr};
use xlsem::sim::{SimilaritySpec, Smoothing};

const FORMATS: &str = "\
FILE FORMATS

Linearized corpus (--format linear)
  Blocks separated by one blank line; an empty file has no blocks. The
  first line of a block is the token sequence, tokens separated by single
  spaces:
    [ ]      predicate span        ( )   argument span
    w_h      head word `w`         w     non-head word
    @b or •  bullet (a re-mention; must be a whole argument span)
  Every span has exactly one head at its top level. Each bullet is followed
  by a line `#coref <bullet> <antecedent>` with 0-based token positions; the
  antecedent is an earlier word inside some span. Example:
    [ saw_h ( the man_h ) ] [ left_h ( @b ) ]
    #coref 10 3
  Diagnostics name the 0-based block index.

Graph corpus (--format graph)
  JSON lines, one record per line; blank lines are skipped:
    {\"id\":\"s1\",
     \"vars\":[{\"id\":\"e1\",\"kind\":\"event\"},{\"id\":\"x1\",\"kind\":\"entity\"}],
     \"instances\":{\"e1\":{\"tokens\":[\"saw\"],\"head_index\":0},
                  \"x1\":{\"tokens\":[\"the\",\"man\"],\"head_index\":1}},
     \"edges\":[[\"e1\",\"ARG\",\"x1\"]]}
  `id` and `layout` are optional; `layout` records the nesting of the
  linearized text a graph came from so conversion back is exact. Unknown
  top-level fields are rejected unless --lenient is given. Diagnostics name
  the 1-based line.

Flat corpus (--format flat)
  JSON lines of predications and argument assertions:
    {\"preds\":[{\"var\":\"e1\",\"kind\":\"event\",\"tokens\":[\"saw\"],\"head_index\":0}],
     \"args\":[[\"e1\",\"x1\"]]}

Source sentences (kernel decode)
  One sentence per line, tokens separated by spaces.

EXIT CODES
  0 success, 2 input error, 3 alignment error, 4 numeric failure.

ENVIRONMENT
  XLSEM_SEED  default for every --seed flag.";

#[derive(Parser, Debug)]
#[command(name = "xlsem", version, about = "Semantic representation corpora: convert, score, resolve", after_long_help = FORMATS)]
struct Cli {
    /// Worker threads; results never depend on this.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Write a JSON run manifest to this path.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    /// Print reports as JSON.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Check that a corpus parses and every representation is well formed.
    Validate(ValidateArgs),
    /// Convert a corpus between the flat, graph and linearized forms.
    Convert(ConvertArgs),
    /// Score a system corpus against a gold corpus with S(φ, ψ).
    Score(ScoreArgs),
    /// Score coreference chains of a response corpus against a key corpus.
    CorefScore(CorefScoreArgs),
    /// Predict bullet antecedents of a gold corpus with a baseline.
    Resolve(ResolveArgs),
    /// Copy-kernel experiments.
    #[command(subcommand)]
    Kernel(KernelCommand),
    /// Replay the run recorded in a manifest.
    Rerun(RerunArgs),
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum KernelCommand {
    /// Compare analytic gradients with finite differences.
    Gradcheck(GradcheckArgs),
    /// Train on a synthetic corpus and evaluate copy, heuristic and random.
    TrainToy(TrainToyArgs),
    /// Decode source sentences with a checkpoint.
    Decode(DecodeArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Flat,
    Graph,
    Linear,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
enum Phi {
    Bleu,
    Delta,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
enum Psi {
    Delta,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
enum MetricArg {
    Muc,
    B3,
    Ceafe,
    All,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
enum MethodArg {
    Heuristic,
    Random,
}

#[derive(Args, Debug, Serialize)]
struct ValidateArgs {
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Linear)]
    format: Format,
    /// Ignore unknown top-level JSON fields.
    #[arg(long)]
    lenient: bool,
}

#[derive(Args, Debug, Serialize)]
struct ConvertArgs {
    input: PathBuf,
    #[arg(long, value_enum)]
    from: Format,
    #[arg(long, value_enum)]
    to: Format,
    /// Output file; stdout when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long)]
    lenient: bool,
    /// Write bullets as `•` instead of `@b`.
    #[arg(long)]
    utf8_bullet: bool,
}

#[derive(Args, Debug, Serialize)]
struct ScoreArgs {
    system: PathBuf,
    gold: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Graph)]
    format: Format,
    #[arg(long, value_enum, default_value_t = Phi::Bleu)]
    phi: Phi,
    #[arg(long, value_enum, default_value_t = Psi::Delta)]
    psi: Psi,
    #[arg(long, default_value_t = 4)]
    bleu_max_order: usize,
    #[arg(long, default_value = "add1")]
    bleu_smoothing: String,
    #[arg(long, default_value_t = 4)]
    restarts: usize,
    #[arg(long, env = "XLSEM_SEED", default_value_t = 0)]
    seed: u64,
    /// Cross-check pairs with at most `--oracle-limit` variables by brute force.
    #[arg(long)]
    oracle: bool,
    #[arg(long, default_value_t = 8)]
    oracle_limit: usize,
    #[arg(long)]
    lenient: bool,
}

#[derive(Args, Debug, Serialize)]
struct CorefScoreArgs {
    key: PathBuf,
    response: PathBuf,
    #[arg(long, value_enum, default_value_t = MetricArg::All)]
    metric: MetricArg,
}

#[derive(Args, Debug, Serialize)]
struct ResolveArgs {
    input: PathBuf,
    #[arg(long, value_enum)]
    method: MethodArg,
    #[arg(long, env = "XLSEM_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long)]
    utf8_bullet: bool,
}

#[derive(Args, Debug, Serialize)]
struct SynthArgs {
    #[arg(long, env = "XLSEM_SEED", default_value_t = 0)]
    seed: u64,
    /// Embedding, LSTM and feed-forward width.
    #[arg(long, default_value_t = 16)]
    dims: usize,
    #[arg(long, default_value_t = 1)]
    layers: usize,
    /// Same-head entities besides the target in each sentence.
    #[arg(long, default_value_t = 2)]
    distractors: usize,
}

impl SynthArgs {
    fn synth(&self, splits: Splits) -> SynthConfig {
        let mut c = SynthConfig { seed: self.seed, distractors: self.distractors, splits, ..SynthConfig::default() };
        c.modifiers = c.modifiers.max(self.distractors + 1);
        c
    }
}

#[derive(Args, Debug, Serialize)]
struct GradcheckArgs {
    #[command(flatten)]
    #[serde(flatten)]
    synth: SynthArgs,
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,
    /// Copy-loss weight.
    #[arg(long, default_value_t = 1.0)]
    mu: f64,
    /// Exit 4 when the maximum relative error reaches this value.
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

#[derive(Args, Debug, Serialize)]
struct TrainToyArgs {
    #[command(flatten)]
    #[serde(flatten)]
    synth: SynthArgs,
    #[arg(long, default_value_t = 1500)]
    train: usize,
    #[arg(long, default_value_t = 100)]
    validation: usize,
    #[arg(long, default_value_t = 2000)]
    test: usize,
    #[arg(long, default_value_t = 70)]
    epochs: usize,
    /// Directory for the checkpoint, corpora and predictions.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct DecodeArgs {
    #[arg(long)]
    model: PathBuf,
    /// Source sentences, one per line.
    #[arg(long)]
    source: PathBuf,
    /// Gold linearized corpus; when given, tokens are forced and only
    /// antecedents are predicted.
    #[arg(long)]
    gold: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    max_len: usize,
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long)]
    utf8_bullet: bool,
}

#[derive(Args, Debug, Serialize)]
struct RerunArgs {
    manifest_path: PathBuf,
}

/// Failure with its exit code.
#[derive(Debug)]
enum Failure {
    Input(anyhow::Error),
    Alignment(anyhow::Error),
    Numeric(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Alignment(_) => 3,
            Failure::Numeric(_) => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (Failure::Input(e) | Failure::Alignment(e) | Failure::Numeric(e)) = self;
        // Some causes already embed their source; skip repeats.
        let mut parts: Vec<String> = Vec::new();
        for cause in e.chain().map(ToString::to_string) {
            if !parts.last().is_some_and(|p| p.ends_with(&cause)) {
                parts.push(cause);
            }
        }
        f.write_str(&parts.join(": "))
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Input(e)
    }
}

impl From<KernelError> for Failure {
    fn from(e: KernelError) -> Self {
        match e {
            KernelError::NonFinite => Failure::Numeric(e.into()),
            other => Failure::Input(other.into()),
        }
    }
}

type Outcome<T = ()> = Result<T, Failure>;

#[derive(Debug, Serialize, Deserialize)]
struct RunManifest {
    tool: String,
    version: String,
    subcommand: String,
    /// Arguments after the program name, without `--manifest` and `--workers`.
    args: Vec<String>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    seed: Option<u64>,
    config: serde_json::Value,
    workers: usize,
    wall_time_ms: u128,
    exit_code: u8,
}

/// Collects what a run read and wrote, for the manifest.
#[derive(Default)]
struct Io {
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Io {
    fn read(&mut self, path: &Path) -> Outcome<String> {
        self.inputs.push(path.to_path_buf());
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(Failure::Input)
    }

    fn write(&mut self, path: &Path, text: &[u8]) -> Outcome {
        self.outputs.push(path.to_path_buf());
        fs::write(path, text).with_context(|| format!("writing {}", path.display())).map_err(Failure::Input)
    }

    /// Writes to `path`, or stdout when absent.
    fn emit(&mut self, path: Option<&Path>, text: &str) -> Outcome {
        match path {
            Some(p) => self.write(p, text.as_bytes()),
            None => stdout(text),
        }
    }
}

fn stdout(text: &str) -> Outcome {
    let mut out = io::stdout().lock();
    out.write_all(text.as_bytes()).and_then(|_| out.flush()).context("writing stdout").map_err(Failure::Input)
}

fn input<E: Into<anyhow::Error>>(what: String) -> impl FnOnce(E) -> Failure {
    move |e| Failure::Input(e.into().context(what))
}

fn strip_run_flags(args: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--manifest" || a == "--workers" {
            it.next();
        } else if !(a.starts_with("--manifest=") || a.starts_with("--workers=")) {
            out.push(a.clone());
        }
    }
    out
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::parse_from(&argv);
    let workers = cli.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build_global() {
        eprintln!("error: worker pool: {e}");
        return ExitCode::from(2);
    }

    if let Command::Rerun(r) = &cli.command {
        return match rerun(&r.manifest_path, cli.manifest.as_deref(), cli.json, workers) {
            Ok(code) => ExitCode::from(code),
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(e.code())
            }
        };
    }
    let args = strip_run_flags(&argv[1..]);
    ExitCode::from(execute(cli.command, args, cli.manifest.as_deref(), cli.json, workers))
}

fn rerun(path: &Path, manifest: Option<&Path>, json: bool, workers: usize) -> Outcome<u8> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let recorded: RunManifest =
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))?;
    if let Some(seed) = recorded.seed {
        // Pins flags that fell back to the environment in the original run.
        std::env::set_var("XLSEM_SEED", seed.to_string());
    }
    let mut argv = vec!["xlsem".to_string()];
    argv.extend(recorded.args.iter().cloned());
    let cli = Cli::try_parse_from(&argv).context("manifest arguments").map_err(Failure::Input)?;
    if matches!(cli.command, Command::Rerun(_)) {
        return Err(Failure::Input(anyhow::anyhow!("manifest records a rerun")));
    }
    Ok(execute(cli.command, recorded.args, manifest, json || cli.json, workers))
}

fn execute(command: Command, args: Vec<String>, manifest: Option<&Path>, json: bool, workers: usize) -> u8 {
    let start = Instant::now();
    let mut io = Io::default();
    let result = run(&command, json, &mut io);
    let code = match &result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    };
    if let Some(path) = manifest {
        let config = serde_json::to_value(&command).unwrap_or(serde_json::Value::Null);
        let manifest = RunManifest {
            tool: "xlsem".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            subcommand: subcommand_name(&command).into(),
            args,
            inputs: io.inputs,
            outputs: io.outputs,
            seed: seed_of(&command),
            config,
            workers,
            wall_time_ms: start.elapsed().as_millis(),
            exit_code: code,
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        if let Err(e) = fs::write(path, text) {
            eprintln!("error: writing manifest {}: {e}", path.display());
            return 2;
        }
    }
    code
}

fn subcommand_name(c: &Command) -> &'static str {
    match c {
        Command::Validate(_) => "validate",
        Command::Convert(_) => "convert",
        Command::Score(_) => "score",
        Command::CorefScore(_) => "coref-score",
        Command::Resolve(_) => "resolve",
        Command::Kernel(KernelCommand::Gradcheck(_)) => "kernel gradcheck",
        Command::Kernel(KernelCommand::TrainToy(_)) => "kernel train-toy",
        Command::Kernel(KernelCommand::Decode(_)) => "kernel decode",
        Command::Rerun(_) => "rerun",
    }
}

fn seed_of(c: &Command) -> Option<u64> {
    match c {
        Command::Score(a) => Some(a.seed),
        Command::Resolve(a) => Some(a.seed),
        Command::Kernel(KernelCommand::Gradcheck(a)) => Some(a.synth.seed),
        Command::Kernel(KernelCommand::TrainToy(a)) => Some(a.synth.seed),
        _ => None,
    }
}

fn run(command: &Command, json: bool, io: &mut Io) -> Outcome {
    match command {
        Command::Validate(a) => validate(a, json, io),
        Command::Convert(a) => convert(a, io),
        Command::Score(a) => score(a, json, io),
        Command::CorefScore(a) => coref_score(a, json, io),
        Command::Resolve(a) => resolve(a, io),
        Command::Kernel(KernelCommand::Gradcheck(a)) => gradcheck(a, json),
        Command::Kernel(KernelCommand::TrainToy(a)) => train_toy(a, json, io),
        Command::Kernel(KernelCommand::Decode(a)) => decode(a, io),
        Command::Rerun(_) => Err(Failure::Input(anyhow::anyhow!("nested rerun"))),
    }
}

fn read_linear(io: &mut Io, path: &Path) -> Outcome<Vec<LinearizedRepr>> {
    let text = io.read(path)?;
    parse_corpus(&text).map_err(input(path.display().to_string()))
}

fn read_graphs(io: &mut Io, path: &Path, lenient: bool) -> Outcome<Vec<GraphRecord>> {
    let text = io.read(path)?;
    parse_graph_corpus(&text, !lenient).map_err(input(path.display().to_string()))
}

/// Reads any corpus form as graph records.
fn read_as_graphs(io: &mut Io, path: &Path, format: Format, lenient: bool) -> Outcome<Vec<GraphRecord>> {
    let name = path.display().to_string();
    match format {
        Format::Graph => read_graphs(io, path, lenient),
        Format::Flat => {
            let text = io.read(path)?;
            let flats = parse_flat_corpus(&text, !lenient).map_err(input(name.clone()))?;
            flats
                .iter()
                .enumerate()
                .map(|(i, f)| flat_to_graph(f).map(GraphRecord::new).map_err(input(format!("{name}: record {i}"))))
                .collect()
        }
        Format::Linear => read_linear(io, path)?
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let (graph, layout) = delinearize_with_layout(l).map_err(input(format!("{name}: block {i}")))?;
                Ok(GraphRecord { layout: Some(layout), ..GraphRecord::new(graph) })
            })
            .collect(),
    }
}

fn validate(a: &ValidateArgs, json: bool, io: &mut Io) -> Outcome {
    let (count, warnings) = match a.format {
        Format::Linear => (read_linear(io, &a.input)?.len(), 0),
        Format::Graph | Format::Flat => {
            let records = read_as_graphs(io, &a.input, a.format, a.lenient)?;
            let warnings: usize = records.iter().map(|r| r.graph().warnings().len()).sum();
            (records.len(), warnings)
        }
    };
    let text = if json {
        json!({ "records": count, "warnings": warnings }).to_string() + "\n"
    } else {
        format!("ok {count} records, {warnings} warnings\n")
    };
    stdout(&text)
}

fn convert(a: &ConvertArgs, io: &mut Io) -> Outcome {
    let options = SerializeOptions { utf8_bullet: a.utf8_bullet };
    let text = if a.from == a.to && a.from == Format::Linear {
        serialize_corpus(&read_linear(io, &a.input)?, options)
    } else {
        let records = read_as_graphs(io, &a.input, a.from, a.lenient)?;
        match a.to {
            Format::Graph => serialize_graph_corpus(&records),
            Format::Flat => {
                let flats = records
                    .iter()
                    .enumerate()
                    .map(|(i, r)| graph_to_flat(&r.graph()).map_err(input(format!("record {i}"))))
                    .collect::<Outcome<Vec<_>>>()?;
                serialize_flat_corpus(&flats)
            }
            Format::Linear => {
                let reprs = records
                    .iter()
                    .enumerate()
                    .map(|(i, r)| {
                        let graph = r.graph();
                        let layout = match &r.layout {
                            Some(l) => l.clone(),
                            None => default_layout(&graph).map_err(input(format!("record {i}")))?,
                        };
                        linearize(&graph, &layout).map_err(input(format!("record {i}")))
                    })
                    .collect::<Outcome<Vec<_>>>()?;
                serialize_corpus(&reprs, options)
            }
        }
    };
    io.emit(a.output.as_deref(), &text)
}

fn similarity(a: &ScoreArgs) -> Outcome<(SimilaritySpec, SimilaritySpec)> {
    let phi = match a.phi {
        Phi::Delta => SimilaritySpec::KroneckerDelta,
        Phi::Bleu => {
            let smoothing: Smoothing = a.bleu_smoothing.parse().map_err(input("--bleu-smoothing".into()))?;
            SimilaritySpec::SentenceBleu { max_order: a.bleu_max_order, smoothing, case_sensitive: true }
        }
    };
    phi.check().map_err(input("--phi".into()))?;
    let psi = match a.psi {
        Psi::Delta => SimilaritySpec::KroneckerDelta,
    };
    Ok((phi, psi))
}

fn score(a: &ScoreArgs, json: bool, io: &mut Io) -> Outcome {
    let (phi, psi) = similarity(a)?;
    let system = read_as_graphs(io, &a.system, a.format, a.lenient)?;
    let gold = read_as_graphs(io, &a.gold, a.format, a.lenient)?;
    if system.len() != gold.len() {
        return Err(Failure::Alignment(anyhow::anyhow!(
            "system has {} records, gold has {}",
            system.len(),
            gold.len()
        )));
    }
    let ids: Vec<String> =
        system.iter().enumerate().map(|(i, r)| r.id.clone().unwrap_or_else(|| i.to_string())).collect();
    let system: Vec<GraphRepr> = system.into_iter().map(GraphRecord::into_graph).collect();
    let gold: Vec<GraphRepr> = gold.into_iter().map(GraphRecord::into_graph).collect();
    let config =
        MatchConfig { phi, psi, restarts: a.restarts, max_moves: None, seed: a.seed, oracle_limit: a.oracle_limit };
    let result = match corpus_score_aligned(&system, &gold, &config, a.oracle) {
        Ok(r) => r,
        Err(MetricError::EmptyCorpus) => return stdout(if json { "{\"pairs\":[]}\n" } else { "CORPUS - - -\n" }),
        Err(e @ MetricError::LengthMismatch { .. }) => return Err(Failure::Alignment(e.into())),
        Err(e) => return Err(Failure::Input(e.into())),
    };
    let checked: Vec<bool> = result.pairs.iter().filter_map(|p| p.climbs_to_optimum).collect();
    let hits = checked.iter().filter(|&&h| h).count();
    let text = if json {
        let pairs: Vec<_> = ids
            .iter()
            .zip(&result.pairs)
            .map(|(id, p)| json!({ "id": id, "precision": p.precision, "recall": p.recall, "f1": p.f1, "score": p.score, "climbs_to_optimum": p.climbs_to_optimum }))
            .collect();
        let mut report = json!({ "pairs": pairs, "corpus": result.prf, "total_score": result.total_score });
        if a.oracle {
            report["oracle"] = json!({ "hits": hits, "eligible": checked.len() });
        }
        report.to_string() + "\n"
    } else {
        let mut out = String::new();
        for (id, p) in ids.iter().zip(&result.pairs) {
            out.push_str(&format!("{id} {:.4} {:.4} {:.4} {:.4}\n", p.precision, p.recall, p.f1, p.score));
        }
        out.push_str(&format!("CORPUS {:.4} {:.4} {:.4}\n", result.prf.precision, result.prf.recall, result.prf.f1));
        if a.oracle {
            let rate = if checked.is_empty() { 1.0 } else { hits as f64 / checked.len() as f64 };
            out.push_str(&format!("ORACLE {hits}/{} {rate:.4}\n", checked.len()));
        }
        out
    };
    stdout(&text)
}

fn coref_score(a: &CorefScoreArgs, json: bool, io: &mut Io) -> Outcome {
    let key = read_linear(io, &a.key)?;
    let response = read_linear(io, &a.response)?;
    if key.len() != response.len() {
        return Err(Failure::Alignment(anyhow::anyhow!(
            "key has {} blocks, response has {}",
            key.len(),
            response.len()
        )));
    }
    for (i, (k, r)) in key.iter().zip(&response).enumerate() {
        if k.tokens() != r.tokens() {
            return Err(Failure::Alignment(anyhow::anyhow!(
                "block {i}: token sequences differ, so mention universes differ"
            )));
        }
    }
    let pairs: Vec<_> =
        key.iter().zip(&response).map(|(k, r)| (chains_from_linearized(k), chains_from_linearized(r))).collect();
    let report = CorefReport::evaluate(&pairs).map_err(input("scoring".into()))?;
    let metrics: Vec<Metric> = match a.metric {
        MetricArg::Muc => vec![Metric::Muc],
        MetricArg::B3 => vec![Metric::B3],
        MetricArg::Ceafe => vec![Metric::Ceafe],
        MetricArg::All => Metric::ALL.to_vec(),
    };
    let text =
        if json { serde_json::to_string(&report).expect("report serializes") + "\n" } else { report.table(&metrics) };
    stdout(&text)
}

fn resolve(a: &ResolveArgs, io: &mut Io) -> Outcome {
    let gold = read_linear(io, &a.input)?;
    let method = match a.method {
        MethodArg::Heuristic => Method::Heuristic,
        MethodArg::Random => Method::Random,
    };
    let predictions = if gold.is_empty() {
        Vec::new()
    } else {
        let out =
            forced_decode_eval(&gold, &ResolverSpec { method, seed: a.seed }).map_err(input("resolving".into()))?;
        if out.flagged > 0 {
            eprintln!("note: {} bullets had no candidate and keep the dummy antecedent", out.flagged);
        }
        out.predictions
    };
    io.emit(a.output.as_deref(), &serialize_corpus(&predictions, SerializeOptions { utf8_bullet: a.utf8_bullet }))
}

fn gradcheck(a: &GradcheckArgs, json: bool) -> Outcome {
    let data = synth_dataset(&a.synth.synth(Splits { train: 1, validation: 0, test: 0 }))?;
    let mut model =
        ModelConfig::new(data.source_vocab.len(), data.target_vocab.len(), a.synth.dims, a.synth.layers, a.synth.seed);
    model.mu = a.mu;
    let params = xlsem::kernel::ModelParams::init(&model)?;
    let check = grad_check(&params, &data.train[0].example, a.eps, a.mu)?;
    let text = if json {
        serde_json::to_string(&check).expect("check serializes") + "\n"
    } else {
        format!(
            "max_rel_err {:.3e} worst {}[{}] checked {}\n",
            check.max_rel_err, check.worst.0, check.worst.1, check.checked
        )
    };
    stdout(&text)?;
    if check.max_rel_err.is_nan() || check.max_rel_err >= a.tolerance {
        return Err(Failure::Numeric(anyhow::anyhow!(
            "max relative error {:.3e} is not below {:.1e}",
            check.max_rel_err,
            a.tolerance
        )));
    }
    Ok(())
}

fn train_toy(a: &TrainToyArgs, json: bool, io: &mut Io) -> Outcome {
    let splits = Splits { train: a.train, validation: a.validation, test: a.test };
    let data = synth_dataset(&a.synth.synth(splits))?;
    let model =
        ModelConfig::new(data.source_vocab.len(), data.target_vocab.len(), a.synth.dims, a.synth.layers, a.synth.seed);
    let config = TrainConfig { epochs: a.epochs, ..TrainConfig::default() };
    let outcome =
        train(&SynthDataset::examples(&data.train), &SynthDataset::examples(&data.validation), &model, &config)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;

    let mut checkpoint = Vec::new();
    write_checkpoint(&mut checkpoint, &outcome.params, &data.source_vocab, &data.target_vocab)?;
    io.write(&a.out.join("model.ckpt"), &checkpoint)?;
    let options = SerializeOptions::default();
    let gold = SynthDataset::targets(&data.test);
    let sources = SynthDataset::sources(&data.test);
    io.write(&a.out.join("gold.txt"), serialize_corpus(&gold, options).as_bytes())?;
    let source_text: String = sources.iter().map(|s| s.join(" ") + "\n").collect();
    io.write(&a.out.join("source.txt"), source_text.as_bytes())?;

    let mut rows = Vec::new();
    if !gold.is_empty() {
        let copy = KernelResolver {
            params: &outcome.params,
            source_vocab: &data.source_vocab,
            target_vocab: &data.target_vocab,
            sources: &sources,
        };
        let runs = [
            ("copy", forced_decode_eval(&gold, &copy)),
            ("heuristic", forced_decode_eval(&gold, &ResolverSpec { method: Method::Heuristic, seed: a.synth.seed })),
            ("random", forced_decode_eval(&gold, &ResolverSpec { method: Method::Random, seed: a.synth.seed })),
        ];
        for (name, run) in runs {
            let run = run.map_err(input(format!("{name} evaluation")))?;
            io.write(&a.out.join(format!("{name}.txt")), serialize_corpus(&run.predictions, options).as_bytes())?;
            rows.push((name, run.report));
        }
    }
    let text = if json {
        let methods: Vec<_> = rows.iter().map(|(n, r)| json!({ "method": n, "report": r })).collect();
        json!({ "switched_at": outcome.switched_at, "epochs": outcome.history.len(), "final_loss": outcome.history.last().map(|h| h.validation_loss), "methods": methods }).to_string() + "\n"
    } else {
        let mut out = format!(
            "trained {} epochs, copy loss from epoch {}\n{:<10}{:>8}{:>8}{:>8}{:>8}\n",
            outcome.history.len(),
            outcome.switched_at.map_or("-".to_string(), |e| e.to_string()),
            "Method",
            "MUC",
            "B3",
            "CEAF_e",
            "Avg. F1"
        );
        for (name, r) in &rows {
            out.push_str(&format!(
                "{name:<10}{:>8.3}{:>8.3}{:>8.3}{:>8.3}\n",
                r.muc.f1, r.b_cubed.f1, r.ceaf_e.f1, r.avg_f1
            ));
        }
        out
    };
    stdout(&text)
}

fn decode(a: &DecodeArgs, io: &mut Io) -> Outcome {
    io.inputs.push(a.model.clone());
    let file = fs::File::open(&a.model).with_context(|| format!("opening {}", a.model.display()))?;
    let (params, source_vocab, target_vocab) =
        read_checkpoint(io::BufReader::new(file)).map_err(input(a.model.display().to_string()))?;
    let sources: Vec<Vec<String>> =
        io.read(&a.source)?.lines().map(|l| l.split_whitespace().map(str::to_string).collect()).collect();
    if let Some(i) = sources.iter().position(Vec::is_empty) {
        return Err(Failure::Input(anyhow::anyhow!("{}: line {} is empty", a.source.display(), i + 1)));
    }
    let options = SerializeOptions { utf8_bullet: a.utf8_bullet };

    if let Some(gold_path) = &a.gold {
        let gold = read_linear(io, gold_path)?;
        if gold.len() != sources.len() {
            return Err(Failure::Alignment(anyhow::anyhow!(
                "{} source sentences for {} gold blocks",
                sources.len(),
                gold.len()
            )));
        }
        if gold.is_empty() {
            return io.emit(a.output.as_deref(), "");
        }
        let resolver = KernelResolver {
            params: &params,
            source_vocab: &source_vocab,
            target_vocab: &target_vocab,
            sources: &sources,
        };
        let out = forced_decode_eval(&gold, &resolver).map_err(input("forced decoding".into()))?;
        return io.emit(a.output.as_deref(), &serialize_corpus(&out.predictions, options));
    }

    let mut blocks = Vec::with_capacity(sources.len());
    for (i, s) in sources.iter().enumerate() {
        let x: Vec<usize> = s.iter().map(|t| source_vocab.id(t)).collect();
        let d = greedy_decode(&x, &params, &target_vocab, a.max_len)?;
        if d.max_norm_error > 1e-6 {
            return Err(Failure::Numeric(anyhow::anyhow!(
                "sentence {i}: distribution off by {:.3e}",
                d.max_norm_error
            )));
        }
        let tokens: Vec<LinToken> =
            d.y.iter()
                .map(|&id| LinToken::parse(target_vocab.token(id)))
                .collect::<Result<_, _>>()
                .map_err(|e| Failure::Input(anyhow::anyhow!("sentence {i}: {e}")))?;
        let block = match LinearizedRepr::new(tokens.clone(), d.a.clone()) {
            Ok(l) => serialize_text_with(&l, options),
            Err(e) => {
                eprintln!("warning: sentence {i}: decoded sequence is not well formed: {e}");
                raw_block(&tokens, &d.a, options)
            }
        };
        blocks.push(block);
    }
    io.emit(a.output.as_deref(), &xlsem::linear::join_blocks(&blocks))
}

/// Block text for a sequence that failed validation.
fn raw_block(tokens: &[LinToken], a: &[Option<usize>], options: SerializeOptions) -> String {
    let mut out = tokens.iter().map(|t| t.render(options.utf8_bullet)).collect::<Vec<_>>().join(" ");
    for (t, ante) in a.iter().enumerate() {
        if let Some(k) = ante {
            out.push_str(&format!("\n#coref {t} {k}"));
        }
    }
    out
}
