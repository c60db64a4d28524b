//! `cscprobe` command line.
//!
//! Every command that writes files also writes a run manifest: the argument
//! vector, seeds, and SHA-256 digests of every file read and written.
//! Exit codes: 0 success, 1 invalid data, 2 usage error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::cccr::{self, BaselineMode, CccrReport};
use crate::char_knowledge::{self, ToneMode, Vocabulary};
use crate::csc_metrics;
use crate::embedding_store;
use crate::error::{Error, Result};
use crate::isolation;
use crate::mlp_probe::{self, ProbeConfig, TrainReport};
use crate::probe_dataset::{self, GroundTruth, ValidationReport};

pub const THREADS_ENV: &str = "CSCPROBE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "cscprobe", version, about = "Glyph/phonetic probes, CCCR, isolation and CSC scoring")]
pub struct Cli {
    /// Report format on stdout.
    #[arg(long, value_enum, global = true, default_value_t = Format::Table)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the component-containment probe dataset.
    BuildGlyphProbe(GlyphArgs),
    /// Build the same-pronunciation probe dataset.
    BuildPhoneticProbe(PhoneticArgs),
    /// Train MLP probes on a dataset and embedding table.
    TrainProbe(TrainArgs),
    /// Score a trained probe on the test split.
    EvalProbe(EvalArgs),
    /// Write a Gaussian(0, 0.02) control embedding table.
    RandomEmbeddings(RandomArgs),
    /// MLM / Homonym / CCCR and the random-guess baseline.
    Cccr(CccrArgs),
    /// Build the isolation train/test setting.
    Isolate(IsolateArgs),
    /// Sentence-level detection/correction precision, recall and F1.
    Score(ScoreArgs),
}

#[derive(Debug, Args)]
struct GlyphArgs {
    #[arg(long)]
    decomposition: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    /// Characters to drop from the vocabulary.
    #[arg(long)]
    stoplist: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PhoneticArgs {
    #[arg(long)]
    pinyin: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    stoplist: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
    /// Require identical tones instead of matching base syllables.
    #[arg(long)]
    tone_sensitive: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// CEMB file, or TSV when the extension is `.tsv`.
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long, default_value_t = 256)]
    hidden_dim: usize,
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 128)]
    batch_size: usize,
    #[arg(long, default_value_t = 0, conflicts_with = "seeds")]
    seed: u64,
    /// Repeat training for each seed and report mean and spread.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Train every layer count from 1 to 5.
    #[arg(long)]
    sweep_layers: bool,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RandomArgs {
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long, default_value_t = 768)]
    dim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CccrArgs {
    /// Predictions file (JSON lines); repeat to compare several exports.
    #[arg(long, required = true)]
    predictions: Vec<PathBuf>,
    #[arg(long, default_value = "printed", value_parser = parse_baseline_mode)]
    baseline_mode: BaselineMode,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn parse_baseline_mode(s: &str) -> std::result::Result<BaselineMode, String> {
    s.parse()
}

#[derive(Debug, Args)]
struct IsolateArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    /// TSV `<id>\t<source>\t<gold>\t<predicted>`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub seeds: Vec<u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub toolkit_version: String,
    pub wall_time_secs: f64,
}

fn digest(path: &Path) -> Result<FileDigest> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

/// Collects what a command read and wrote, then writes the manifest.
struct Run {
    command: &'static str,
    argv: Vec<String>,
    seeds: Vec<u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    started: Instant,
}

impl Run {
    fn new(command: &'static str, argv: &[String]) -> Self {
        Self {
            command,
            argv: argv.to_vec(),
            seeds: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            started: Instant::now(),
        }
    }

    fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
        self.outputs.push(path.to_path_buf());
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, path: &Path, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).expect("serialisable");
        text.push('\n');
        self.write(path, text.as_bytes())
    }

    fn finish(self, manifest_path: &Path) -> Result<()> {
        let manifest = RunManifest {
            command: self.command.to_string(),
            argv: self.argv,
            seeds: self.seeds,
            inputs: self.inputs.iter().map(|p| digest(p)).collect::<Result<_>>()?,
            outputs: self.outputs.iter().map(|p| digest(p)).collect::<Result<_>>()?,
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_secs: self.started.elapsed().as_secs_f64(),
        };
        let text = serde_json::to_string_pretty(&manifest).expect("serialisable") + "\n";
        std::fs::write(manifest_path, text).map_err(|e| Error::io(manifest_path, e))
    }
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn emit<T: Serialize>(format: Format, value: &T, table: impl FnOnce() -> String) -> String {
    match format {
        Format::Json => serde_json::to_string_pretty(value).expect("serialisable") + "\n",
        Format::Table => table(),
    }
}

fn load_vocab(vocab: &Path, stoplist: Option<&Path>, run: &mut Run) -> Result<Vocabulary> {
    run.input(vocab);
    let v = char_knowledge::load_vocabulary(vocab)?;
    match stoplist {
        Some(stop) => {
            run.input(stop);
            Ok(v.without(&char_knowledge::load_vocabulary(stop)?))
        }
        None => Ok(v),
    }
}

fn validation_table(r: &ValidationReport) -> String {
    format!(
        "kind {}\ntrain  pos {:>7}  neg {:>7}\ntest   pos {:>7}  neg {:>7}\n\
         split violations {}  label violations {}  duplicate pairs {}  balanced {}\n\
         left characters in both splits {}\nstatus {}\n",
        r.kind,
        r.train_positive,
        r.train_negative,
        r.test_positive,
        r.test_negative,
        r.split_violations.len(),
        r.label_violations.len(),
        r.duplicate_pairs,
        r.balanced,
        r.left_chars_in_both_splits,
        if r.is_valid() { "valid" } else { "INVALID" },
    )
}

fn build_glyph(a: &GlyphArgs, argv: &[String], format: Format) -> Result<String> {
    let mut run = Run::new("build-glyph-probe", argv);
    run.seeds.push(a.seed);
    run.input(&a.decomposition);
    let decomp = char_knowledge::load_decomposition(&a.decomposition)?;
    let vocab = load_vocab(&a.vocab, a.stoplist.as_deref(), &mut run)?;
    let ds = probe_dataset::build_glyph_dataset(&decomp, &vocab, a.seed, a.test_fraction)?;
    let report = probe_dataset::validate_dataset(&ds, GroundTruth::Glyph(&decomp));
    run.write(&a.out, ds.to_text().as_bytes())?;
    run.write_json(&sidecar(&a.out, ".validation.json"), &report)?;
    run.finish(&sidecar(&a.out, ".manifest.json"))?;
    Ok(emit(format, &report, || validation_table(&report)))
}

fn build_phonetic(a: &PhoneticArgs, argv: &[String], format: Format) -> Result<String> {
    let mut run = Run::new("build-phonetic-probe", argv);
    run.seeds.push(a.seed);
    run.input(&a.pinyin);
    let pinyin = char_knowledge::load_pinyin(&a.pinyin)?;
    let vocab = load_vocab(&a.vocab, a.stoplist.as_deref(), &mut run)?;
    let mode = if a.tone_sensitive {
        ToneMode::Sensitive
    } else {
        ToneMode::Insensitive
    };
    let ds = probe_dataset::build_phonetic_dataset(&pinyin, &vocab, a.seed, a.test_fraction, mode)?;
    let report = probe_dataset::validate_dataset(&ds, GroundTruth::Phonetic(&pinyin, mode));
    run.write(&a.out, ds.to_text().as_bytes())?;
    run.write_json(&sidecar(&a.out, ".validation.json"), &report)?;
    run.finish(&sidecar(&a.out, ".manifest.json"))?;
    Ok(emit(format, &report, || validation_table(&report)))
}

fn random_embeddings(a: &RandomArgs, argv: &[String], format: Format) -> Result<String> {
    let mut run = Run::new("random-embeddings", argv);
    run.seeds.push(a.seed);
    let vocab = load_vocab(&a.vocab, None, &mut run)?;
    let table = embedding_store::random_table(&vocab, a.dim, a.seed)?;
    run.write(&a.out, &table.to_bytes())?;
    run.finish(&sidecar(&a.out, ".manifest.json"))?;
    #[derive(Serialize)]
    struct Summary {
        entries: usize,
        dim: usize,
        std: f64,
    }
    let s = Summary {
        entries: table.len(),
        dim: table.dim(),
        std: embedding_store::CONTROL_STD,
    };
    Ok(emit(format, &s, || {
        format!("wrote {} entries of dim {} to {}\n", s.entries, s.dim, a.out.display())
    }))
}

#[derive(Debug, Serialize)]
struct TrainRun {
    checkpoint: String,
    #[serde(flatten)]
    report: TrainReport,
}

#[derive(Debug, Serialize)]
struct LayerSummary {
    layers: usize,
    runs: usize,
    accuracy: Option<mlp_probe::Spread>,
}

#[derive(Debug, Serialize)]
struct TrainSummary {
    runs: Vec<TrainRun>,
    by_layers: Vec<LayerSummary>,
    /// Max minus min mean accuracy across layer counts (sweeps only).
    layer_spread: Option<f64>,
}

fn train(a: &TrainArgs, argv: &[String], format: Format) -> Result<String> {
    let mut run = Run::new("train-probe", argv);
    run.input(&a.dataset);
    run.input(&a.embeddings);
    let ds = probe_dataset::load_dataset(&a.dataset)?;
    let table = embedding_store::read_any(&a.embeddings)?;
    ensure_dir(&a.out_dir)?;

    let seeds = if a.seeds.is_empty() { vec![a.seed] } else { a.seeds.clone() };
    let layer_counts: Vec<usize> = if a.sweep_layers { (1..=5).collect() } else { vec![a.layers] };
    run.seeds = seeds.clone();
    let single = seeds.len() == 1 && layer_counts.len() == 1;

    let mut runs = Vec::new();
    for &layers in &layer_counts {
        for &seed in &seeds {
            let config = ProbeConfig {
                layers,
                hidden_dim: a.hidden_dim,
                learning_rate: a.learning_rate,
                epochs: a.epochs,
                batch_size: a.batch_size,
                seed,
            };
            let (model, report) = mlp_probe::train_probe(config, &ds, &table)?;
            let name = if single {
                "probe.cmlp".to_string()
            } else {
                format!("probe-l{layers}-s{seed}.cmlp")
            };
            run.write(&a.out_dir.join(&name), &model.to_bytes())?;
            log::info!("layers {layers} seed {seed}: {:.2}s", report.wall_time_secs);
            runs.push(TrainRun {
                checkpoint: name,
                report,
            });
        }
    }

    let by_layers: Vec<LayerSummary> = layer_counts
        .iter()
        .map(|&layers| {
            let accs: Vec<f64> = runs
                .iter()
                .filter(|r| r.report.config.layers == layers)
                .filter_map(|r| r.report.final_accuracy)
                .collect();
            LayerSummary {
                layers,
                runs: seeds.len(),
                accuracy: mlp_probe::spread(&accs),
            }
        })
        .collect();
    let layer_spread = if a.sweep_layers {
        let means: Vec<f64> = by_layers.iter().filter_map(|l| l.accuracy.map(|s| s.mean)).collect();
        mlp_probe::spread(&means).map(|s| s.max - s.min)
    } else {
        None
    };
    if let Some(s) = layer_spread {
        if s >= mlp_probe::LAYER_SPREAD_WARNING {
            log::warn!("probe accuracy varies by {s:.3} across layer counts 1-5");
        }
    }
    let summary = TrainSummary {
        runs,
        by_layers,
        layer_spread,
    };
    run.write_json(&a.out_dir.join("train_report.json"), &summary)?;
    run.finish(&a.out_dir.join("manifest.json"))?;

    Ok(emit(format, &summary, || {
        let mut out = format!("{:<8} {:>6} {:>10} {:>10}\n", "layers", "runs", "accuracy", "std");
        for l in &summary.by_layers {
            match l.accuracy {
                Some(s) => out.push_str(&format!("{:<8} {:>6} {:>10.4} {:>10.4}\n", l.layers, l.runs, s.mean, s.std)),
                None => out.push_str(&format!("{:<8} {:>6} {:>10} {:>10}\n", l.layers, l.runs, "-", "-")),
            }
        }
        if let Some(s) = summary.layer_spread {
            out.push_str(&format!("spread across layer counts: {s:.4}\n"));
        }
        out
    }))
}

fn eval(a: &EvalArgs, argv: &[String], format: Format) -> Result<String> {
    let mut run = Run::new("eval-probe", argv);
    run.input(&a.checkpoint);
    run.input(&a.dataset);
    run.input(&a.embeddings);
    let model = mlp_probe::read_checkpoint(&a.checkpoint)?;
    run.seeds.push(model.config().seed);
    let ds = probe_dataset::load_dataset(&a.dataset)?;
    let table = embedding_store::read_any(&a.embeddings)?;
    let accuracy = mlp_probe::evaluate_probe(&model, &ds, &table)?;
    #[derive(Serialize)]
    struct EvalReport {
        kind: probe_dataset::ProbeKind,
        test_pairs: usize,
        accuracy: f64,
    }
    let report = EvalReport {
        kind: ds.kind,
        test_pairs: ds.split(probe_dataset::Split::Test).count(),
        accuracy,
    };
    if let Some(dir) = &a.out_dir {
        ensure_dir(dir)?;
        run.write_json(&dir.join("eval_report.json"), &report)?;
        run.finish(&dir.join("manifest.json"))?;
    }
    Ok(emit(format, &report, || {
        format!("{} probe: {} test pairs, accuracy {:.4}\n", report.kind, report.test_pairs, accuracy)
    }))
}

#[derive(Debug, Serialize)]
struct CccrRow {
    source: String,
    #[serde(flatten)]
    report: CccrReport,
}

fn run_cccr(a: &CccrArgs, argv: &[String], format: Format) -> Result<String> {
    let mut run = Run::new("cccr", argv);
    let mut rows = Vec::new();
    for path in &a.predictions {
        run.input(path);
        let records = cccr::load_predictions(path)?;
        let report = cccr::compute_cccr_with(&records, a.baseline_mode)?;
        let source = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        rows.push(CccrRow { source, report });
    }
    if let Some(dir) = &a.out_dir {
        ensure_dir(dir)?;
        run.write_json(&dir.join("cccr_report.json"), &rows)?;
        run.finish(&dir.join("manifest.json"))?;
    }
    Ok(emit(format, &rows, || {
        let table: Vec<(String, CccrReport)> = rows.iter().map(|r| (r.source.clone(), r.report.clone())).collect();
        cccr::render_table(&table)
    }))
}

fn run_isolate(a: &IsolateArgs, argv: &[String], format: Format) -> Result<String> {
    let mut run = Run::new("isolate", argv);
    run.input(&a.train);
    run.input(&a.test);
    let train = isolation::load_corpus(&a.train)?;
    let test = isolation::load_corpus(&a.test)?;
    let out = isolation::isolate(&train, &test)?;
    ensure_dir(&a.out_dir)?;
    run.write(&a.out_dir.join("train.isolated.tsv"), isolation::corpus_to_text(&out.train).as_bytes())?;
    run.write(&a.out_dir.join("test.isolated.tsv"), isolation::corpus_to_text(&out.test).as_bytes())?;
    run.write_json(&a.out_dir.join("stats.json"), &out.stats)?;
    run.write(&a.out_dir.join("stats.txt"), out.stats.render_table().as_bytes())?;
    run.finish(&a.out_dir.join("manifest.json"))?;
    Ok(emit(format, &out.stats, || out.stats.render_table()))
}

fn run_score(a: &ScoreArgs, argv: &[String], format: Format) -> Result<String> {
    let mut run = Run::new("score", argv);
    run.input(&a.input);
    let corpus = csc_metrics::load_scored_corpus(&a.input)?;
    let report = csc_metrics::score(&corpus)?;
    if let Some(dir) = &a.out_dir {
        ensure_dir(dir)?;
        run.write_json(&dir.join("metrics.json"), &report)?;
        run.write(&dir.join("metrics.txt"), report.render_table().as_bytes())?;
        run.finish(&dir.join("manifest.json"))?;
    }
    Ok(emit(format, &report, || report.render_table()))
}

impl Command {
    fn inputs(&self) -> Vec<&Path> {
        let mut v: Vec<&Path> = match self {
            Command::BuildGlyphProbe(a) => vec![&a.decomposition, &a.vocab],
            Command::BuildPhoneticProbe(a) => vec![&a.pinyin, &a.vocab],
            Command::TrainProbe(a) => vec![&a.dataset, &a.embeddings],
            Command::EvalProbe(a) => vec![&a.checkpoint, &a.dataset, &a.embeddings],
            Command::RandomEmbeddings(a) => vec![&a.vocab],
            Command::Cccr(a) => a.predictions.iter().map(PathBuf::as_path).collect(),
            Command::Isolate(a) => vec![&a.train, &a.test],
            Command::Score(a) => vec![&a.input],
        };
        match self {
            Command::BuildGlyphProbe(GlyphArgs { stoplist: Some(s), .. })
            | Command::BuildPhoneticProbe(PhoneticArgs { stoplist: Some(s), .. }) => v.push(s),
            _ => {}
        }
        v
    }

    fn name(&self) -> &'static str {
        match self {
            Command::BuildGlyphProbe(_) => "build-glyph-probe",
            Command::BuildPhoneticProbe(_) => "build-phonetic-probe",
            Command::TrainProbe(_) => "train-probe",
            Command::EvalProbe(_) => "eval-probe",
            Command::RandomEmbeddings(_) => "random-embeddings",
            Command::Cccr(_) => "cccr",
            Command::Isolate(_) => "isolate",
            Command::Score(_) => "score",
        }
    }
}

fn thread_pool() -> rayon::ThreadPool {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            builder = builder.num_threads(n);
        }
    }
    builder.build().expect("thread pool")
}

/// Parses `argv` (including the program name), runs the command, and
/// returns the process exit code. Reports go to `stdout`, diagnostics to `stderr`.
pub fn run_with<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{text}");
                    0
                }
                _ => {
                    let _ = write!(stderr, "{text}");
                    2
                }
            };
        }
    };

    for path in cli.command.inputs() {
        if !path.is_file() {
            let usage = <Cli as clap::CommandFactory>::command()
                .find_subcommand_mut(cli.command.name())
                .map(|c| c.render_usage().to_string())
                .unwrap_or_default();
            let _ = writeln!(stderr, "error: input file not found: {}\n\n{usage}", path.display());
            return 2;
        }
    }

    let argv: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let format = cli.format;
    let result = thread_pool().install(|| match &cli.command {
        Command::BuildGlyphProbe(a) => build_glyph(a, &argv, format),
        Command::BuildPhoneticProbe(a) => build_phonetic(a, &argv, format),
        Command::TrainProbe(a) => train(a, &argv, format),
        Command::EvalProbe(a) => eval(a, &argv, format),
        Command::RandomEmbeddings(a) => random_embeddings(a, &argv, format),
        Command::Cccr(a) => run_cccr(a, &argv, format),
        Command::Isolate(a) => run_isolate(a, &argv, format),
        Command::Score(a) => run_score(a, &argv, format),
    });
    match result {
        Ok(text) => {
            let _ = write!(stdout, "{text}");
            0
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            1
        }
    }
}

pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(argv, &mut std::io::stdout(), &mut std::io::stderr())
}
