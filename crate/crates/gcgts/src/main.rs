//! The `gcgts` command line: train a grid-tagging model, score and run
//! checkpoints, render pair-probability grids, and generate synthetic
//! corpora. Every subcommand exits nonzero when validation fails.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use gcgts::corpus::{
    generate, read_corpus, write_corpus, Sentence, Span, SynthParams, TagMode, Vocabs,
};
use gcgts::io::{self, VectorTable};
use gcgts::model::{EncoderKind, Model, ModelConfig, Preset, PRESETS};
use gcgts::numkit::Tensor;
use gcgts::train::{evaluate, evaluate_gold_oracle, Trainer};

// ── Run configuration ────────────────────────────────────────────────────

/// One training run, as stored in the `--config` JSON file. Missing keys fall
/// back to these defaults; unknown keys are rejected.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RunConfig {
    model: ModelConfig,
    /// Ablation arm (gts, gts-uc, gts-ic, dgts, dbgts, gcgts); overrides the
    /// four component flags in `model`.
    preset: Option<String>,
    train: Option<PathBuf>,
    dev: Option<PathBuf>,
    /// Scored once with the saved checkpoint after training.
    test: Option<PathBuf>,
    /// Frozen character-vector sidecar, required when `model.encoder` is
    /// file-backed. Blocks are keyed by in-file ordinal, so the train, dev,
    /// and test paths must then refer to the same file (or be omitted).
    vectors: Option<PathBuf>,
    checkpoint_dir: PathBuf,
    epochs: usize,
    seed: u64,
    /// Evaluate the dev set every this many epochs (0 disables).
    eval_every: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::default(),
            preset: None,
            train: None,
            dev: None,
            test: None,
            vectors: None,
            checkpoint_dir: PathBuf::from("checkpoints"),
            epochs: 20,
            seed: 0,
            eval_every: 1,
        }
    }
}

fn load_run_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading run config {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing run config {}", path.display()))
}

// ── Command line ─────────────────────────────────────────────────────────

#[derive(Parser)]
#[command(
    name = "gcgts",
    version,
    about = "Character-level grid tagging for aspect-opinion pair extraction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a run-config file and save a checkpoint.
    Train(TrainArgs),
    /// Score a checkpoint against an annotated corpus.
    Eval(EvalArgs),
    /// Extract aspects, opinions, and pairs as JSON lines.
    Predict(PredictArgs),
    /// Render one sentence's pair-probability grid as a binary PGM image.
    Visualize(VisualizeArgs),
    /// Write a synthetic annotated corpus.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Run configuration file (JSON).
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    /// Ablation preset, overriding the config file.
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
    /// RNG seed, overriding the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Epoch count, overriding the config file.
    #[arg(long)]
    epochs: Option<usize>,
    /// Checkpoint path (default: <checkpoint_dir>/model.gcgts).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Trained checkpoint; optional with --gold-oracle.
    #[arg(long, value_name = "FILE", required_unless_present = "gold_oracle")]
    checkpoint: Option<PathBuf>,
    /// Annotated corpus to score against.
    #[arg(long, value_name = "FILE")]
    corpus: PathBuf,
    /// Character-vector sidecar (file-backed encoder only).
    #[arg(long, value_name = "FILE")]
    vectors: Option<PathBuf>,
    /// Decode the gold grids instead of running the model.
    #[arg(long)]
    gold_oracle: bool,
    /// Tagging mode when no checkpoint supplies one.
    #[arg(long, value_parser = parse_mode, default_value = "first-char")]
    mode: TagMode,
    /// Map corpus symbols missing from the checkpoint vocabulary to <unk>
    /// instead of aborting.
    #[arg(long)]
    allow_unknown: bool,
    /// Write the metrics report here instead of stdout.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    /// Trained checkpoint.
    #[arg(long, value_name = "FILE")]
    checkpoint: PathBuf,
    /// Corpus to run on; annotations are optional and ignored.
    #[arg(long, value_name = "FILE")]
    corpus: PathBuf,
    /// Character-vector sidecar (file-backed encoder only).
    #[arg(long, value_name = "FILE")]
    vectors: Option<PathBuf>,
    /// Map corpus symbols missing from the checkpoint vocabulary to <unk>
    /// instead of aborting.
    #[arg(long)]
    allow_unknown: bool,
    /// Write predictions here instead of stdout.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VisualizeArgs {
    /// Trained checkpoint.
    #[arg(long, value_name = "FILE")]
    checkpoint: PathBuf,
    /// Corpus holding the sentence to render.
    #[arg(long, value_name = "FILE")]
    corpus: PathBuf,
    /// Zero-based sentence index within the corpus.
    #[arg(long, default_value_t = 0)]
    sentence: usize,
    /// Character-vector sidecar (file-backed encoder only).
    #[arg(long, value_name = "FILE")]
    vectors: Option<PathBuf>,
    /// Output PGM path.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args)]
struct GenerateArgs {
    /// RNG seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of sentences.
    #[arg(long, default_value_t = 100)]
    count: usize,
    /// Corpus profile: mixed (word lengths 1-3) or simple (short, regular).
    #[arg(long, default_value = "mixed")]
    profile: String,
    /// Output corpus path.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

fn parse_mode(s: &str) -> Result<TagMode, String> {
    match s {
        "first-char" => Ok(TagMode::FirstChar),
        "all-char" => Ok(TagMode::AllChar),
        other => Err(format!("unknown mode '{other}' (expected first-char or all-char)")),
    }
}

fn preset_names() -> String {
    PRESETS.iter().map(|p| p.name()).collect::<Vec<_>>().join(", ")
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Visualize(args) => cmd_visualize(args),
        Command::Generate(args) => cmd_generate(args),
    }
}

// ── Shared plumbing ──────────────────────────────────────────────────────

/// Loads the sidecar when given; insists on one for the file-backed encoder.
fn load_vectors(path: Option<&Path>, encoder: EncoderKind) -> Result<Option<VectorTable>> {
    match (path, encoder) {
        (Some(p), _) => Ok(Some(
            VectorTable::read(p)
                .with_context(|| format!("reading vector sidecar {}", p.display()))?,
        )),
        (None, EncoderKind::FileBacked) => bail!(
            "the file-backed encoder needs a character-vector sidecar \
             (--vectors, or \"vectors\" in the run config)"
        ),
        (None, EncoderKind::TrainableEmbedding) => Ok(None),
    }
}

fn sentence_vectors(
    table: &Option<VectorTable>,
    sentence: &Sentence,
    d_h: usize,
) -> Result<Option<Tensor<f32>>> {
    Ok(match table {
        Some(t) => Some(t.for_sentence(sentence, d_h)?.clone()),
        None => None,
    })
}

/// A checkpoint scores honestly only on symbols it has embeddings for;
/// anything else would silently read the untrained <unk> rows, so unknown
/// symbols abort unless the caller opted into the <unk> mapping.
fn check_vocab_coverage(model: &Model<f32>, sentences: &[Sentence]) -> Result<()> {
    let chars: HashSet<&str> = model.vocabs.char_list().iter().map(String::as_str).collect();
    let pos: HashSet<&str> = model.vocabs.pos_list().iter().map(String::as_str).collect();
    let rels: HashSet<&str> = model.vocabs.rel_list().iter().map(String::as_str).collect();
    let mut unknown = Vec::new();
    'scan: for s in sentences {
        let mut found = |entry: String| {
            unknown.push(entry);
            unknown.len() >= 5
        };
        for c in &s.chars {
            if !chars.contains(c.as_str()) && found(format!("char '{c}' (sentence {})", s.id)) {
                break 'scan;
            }
        }
        for p in &s.pos {
            if !pos.contains(p.as_str()) && found(format!("pos '{p}' (sentence {})", s.id)) {
                break 'scan;
            }
        }
        for d in &s.deps {
            if !rels.contains(d.rel.as_str())
                && found(format!("relation '{}' (sentence {})", d.rel, s.id))
            {
                break 'scan;
            }
        }
    }
    if !unknown.is_empty() {
        bail!(
            "vocabulary mismatch between checkpoint and corpus: {}, …\
             (rerun with --allow-unknown to map these to <unk>)",
            unknown.join(", ")
        );
    }
    Ok(())
}

/// Prints one line per entry, treating a closed pipe (`gcgts … | head`) as
/// normal termination rather than an error.
fn print_lines<'a, I: IntoIterator<Item = &'a str>>(lines: I) -> Result<()> {
    let mut stdout = std::io::stdout().lock();
    for line in lines {
        if let Err(e) = writeln!(stdout, "{line}") {
            return match e.kind() {
                std::io::ErrorKind::BrokenPipe => Ok(()),
                _ => Err(e).context("writing to stdout"),
            };
        }
    }
    Ok(())
}

fn write_lines(out: Option<&Path>, lines: &[String]) -> Result<()> {
    match out {
        Some(path) => {
            let mut text = lines.join("\n");
            if !lines.is_empty() {
                text.push('\n');
            }
            fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
        }
        None => print_lines(lines.iter().map(String::as_str))?,
    }
    Ok(())
}

// ── Subcommands ──────────────────────────────────────────────────────────

fn cmd_train(args: TrainArgs) -> Result<()> {
    let mut rc = load_run_config(&args.config)?;
    if args.preset.is_some() {
        rc.preset = args.preset;
    }
    if let Some(seed) = args.seed {
        rc.seed = seed;
    }
    if let Some(epochs) = args.epochs {
        rc.epochs = epochs;
    }
    if let Some(name) = &rc.preset {
        let preset = Preset::from_name(name)
            .with_context(|| format!("unknown preset '{name}' (expected one of {})", preset_names()))?;
        preset.apply(&mut rc.model);
    }
    rc.model.validate().map_err(anyhow::Error::msg)?;

    let train_path = rc.train.as_ref().context("run config names no train corpus")?;
    let train_set = read_corpus(train_path)
        .with_context(|| format!("reading train corpus {}", train_path.display()))?;
    if train_set.is_empty() {
        bail!("train corpus {} is empty", train_path.display());
    }
    let dev_set = match &rc.dev {
        Some(p) => {
            read_corpus(p).with_context(|| format!("reading dev corpus {}", p.display()))?
        }
        None => Vec::new(),
    };
    let vectors = load_vectors(rc.vectors.as_deref(), rc.model.encoder)?;

    let checkpoint = args.out.unwrap_or_else(|| rc.checkpoint_dir.join("model.gcgts"));
    if let Some(dir) = checkpoint.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }

    let vocabs = Vocabs::build(&train_set);
    let mut model = Model::new(rc.model.clone(), vocabs, rc.seed);
    let trainer = Trainer {
        train_set: &train_set,
        dev_set: &dev_set,
        epochs: rc.epochs,
        seed: rc.seed,
        eval_every: rc.eval_every,
        checkpoint: Some(&checkpoint),
        vectors: vectors.as_ref(),
    };
    let logs = trainer.run(&mut model)?;

    let lines: Vec<String> =
        logs.iter().map(serde_json::to_string).collect::<Result<_, _>>()?;
    print_lines(lines.iter().map(String::as_str))?;
    eprintln!("checkpoint saved to {}", checkpoint.display());

    if let Some(test_path) = &rc.test {
        let test_set = read_corpus(test_path)
            .with_context(|| format!("reading test corpus {}", test_path.display()))?;
        let best = io::load(&checkpoint)?;
        let metrics = evaluate(&best, &test_set, vectors.as_ref())?;
        eprintln!("test: {}", serde_json::to_string(&metrics)?);
    }
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let corpus = read_corpus(&args.corpus)
        .with_context(|| format!("reading corpus {}", args.corpus.display()))?;
    let metrics = if args.gold_oracle {
        let mode = match &args.checkpoint {
            Some(p) => io::load(p)?.config.mode,
            None => args.mode,
        };
        evaluate_gold_oracle(&corpus, mode)
    } else {
        let path = args.checkpoint.as_ref().expect("clap requires --checkpoint here");
        let model = io::load(path)?;
        if !args.allow_unknown {
            check_vocab_coverage(&model, &corpus)?;
        }
        let vectors = load_vectors(args.vectors.as_deref(), model.config.encoder)?;
        evaluate(&model, &corpus, vectors.as_ref())?
    };
    let report = serde_json::to_string(&metrics)?;
    match &args.out {
        Some(path) => fs::write(path, format!("{report}\n"))
            .with_context(|| format!("writing {}", path.display()))?,
        None => print_lines([report.as_str()])?,
    }
    Ok(())
}

/// One `predict` output line: extraction spans plus their surface strings.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictionOut {
    id: usize,
    aspects: Vec<TermOut>,
    opinions: Vec<TermOut>,
    pairs: Vec<PairOut>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TermOut {
    span: (usize, usize),
    text: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairOut {
    aspect: TermOut,
    opinion: TermOut,
}

fn term(sentence: &Sentence, span: Span) -> TermOut {
    TermOut { span: span.into(), text: sentence.chars[span.start..span.end].concat() }
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let corpus = read_corpus(&args.corpus)
        .with_context(|| format!("reading corpus {}", args.corpus.display()))?;
    let model = io::load(&args.checkpoint)?;
    if !args.allow_unknown {
        check_vocab_coverage(&model, &corpus)?;
    }
    let table = load_vectors(args.vectors.as_deref(), model.config.encoder)?;
    let mut lines = Vec::with_capacity(corpus.len());
    for s in &corpus {
        let v = sentence_vectors(&table, s, model.config.d_h)?;
        let r = model.predict(s, v.as_ref());
        let line = PredictionOut {
            id: s.id,
            aspects: r.aspects.iter().map(|&sp| term(s, sp)).collect(),
            opinions: r.opinions.iter().map(|&sp| term(s, sp)).collect(),
            pairs: r
                .pairs
                .iter()
                .map(|&(a, o)| PairOut { aspect: term(s, a), opinion: term(s, o) })
                .collect(),
        };
        lines.push(serde_json::to_string(&line)?);
    }
    write_lines(args.out.as_deref(), &lines)
}

fn cmd_visualize(args: VisualizeArgs) -> Result<()> {
    let corpus = read_corpus(&args.corpus)
        .with_context(|| format!("reading corpus {}", args.corpus.display()))?;
    let model = io::load(&args.checkpoint)?;
    let sentence = corpus.get(args.sentence).with_context(|| {
        format!("sentence index {} out of range (corpus has {})", args.sentence, corpus.len())
    })?;
    let table = load_vectors(args.vectors.as_deref(), model.config.encoder)?;
    let v = sentence_vectors(&table, sentence, model.config.d_h)?;
    let probs = model.pair_probabilities(sentence, v.as_ref());
    let n = sentence.n_chars();
    io::write_pgm(&args.out, n, &probs)
        .with_context(|| format!("writing {}", args.out.display()))?;
    eprintln!("wrote {n}x{n} grid to {}", args.out.display());
    Ok(())
}

fn cmd_generate(args: GenerateArgs) -> Result<()> {
    let params = match args.profile.as_str() {
        "simple" => SynthParams::simple(),
        "mixed" => SynthParams::mixed(),
        other => bail!("unknown profile '{other}' (expected simple or mixed)"),
    };
    let sentences = generate(args.seed, args.count, &params);
    write_corpus(&args.out, &sentences)
        .with_context(|| format!("writing {}", args.out.display()))?;
    eprintln!("wrote {} sentences to {}", sentences.len(), args.out.display());
    Ok(())
}

// ── Tests ────────────────────────────────────────────────────────────────
