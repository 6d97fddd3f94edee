use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use mddphen_core::baselines::{read_classifier, write_classifier};
use mddphen_core::cohort::{load_icd_codeset, read_patients, sample_cohort, select_cohort, IcdCodeSet};
use mddphen_core::corpus::{read_corpus, write_corpus};
use mddphen_core::dataset::{
    balance_unknown, class_distribution, read_dataset, split_train_validation, weak_label_corpus, write_dataset,
};
use mddphen_core::embeddings::{read_embeddings, train_cbow, write_embeddings, CbowConfig};
use mddphen_core::eval::{
    error_listing, evaluate, read_predictions, render_comparison_csv, render_comparison_text, write_predictions,
};
use mddphen_core::pipeline::{
    embedding_sentences, load_bank, load_rules, predictions_for, run_all, train_named, PipelineConfig,
};
use mddphen_core::synth::{generate_corpus, ClassMix, GenerationConfig};
use mddphen_core::{Classifier, Embeddings, Features};

#[derive(Parser)]
#[command(name = "mddphen", version, about = "Weak-label MDD assertion pipeline for clinical note sentences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
enum Command {
    /// Generate a synthetic note corpus with planted gold labels.
    GenCorpus(GenCorpusArgs),
    /// Assign patients to case/control cohorts from their ICD codes.
    Cohort(CohortArgs),
    /// Segment a corpus and label every sentence with the rule engine.
    Weaklabel(WeaklabelArgs),
    /// Under-sample unknowns and split into train/validation sets.
    BuildDataset(BuildDatasetArgs),
    /// Train CBOW word embeddings on dataset sentences.
    TrainEmbeddings(TrainEmbeddingsArgs),
    /// Train a baseline classifier on pooled sentence embeddings.
    Train(TrainArgs),
    /// Predict labels for a dataset with a trained classifier.
    Predict(PredictArgs),
    /// Score prediction files against gold labels.
    Evaluate(EvaluateArgs),
    /// Run every stage end to end.
    RunAll(RunAllArgs),
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum MixName {
    Train,
    Test,
    Raw,
}

#[derive(Args, Serialize)]
struct GenCorpusArgs {
    /// Total sentences; overrides --n-documents.
    #[arg(long)]
    n_sentences: Option<usize>,
    #[arg(long, default_value_t = 100)]
    n_documents: usize,
    #[arg(long, default_value_t = 5)]
    min_sentences: usize,
    #[arg(long, default_value_t = 15)]
    max_sentences: usize,
    #[arg(long, value_enum, default_value = "test")]
    mix: MixName,
    #[arg(long, default_value_t = 0.0)]
    hard_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "doc")]
    doc_prefix: String,
    /// Template bank TOML (shipped bank when omitted).
    #[arg(long)]
    templates: Option<PathBuf>,
    /// Rule spec TOML or "default".
    #[arg(long, default_value = "default")]
    ruleset: String,
    /// Corpus JSONL to write.
    #[arg(long)]
    out: PathBuf,
    /// Gold-labeled sentence dataset to write alongside.
    #[arg(long)]
    gold: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct CohortArgs {
    /// Patient records JSONL ({patient_id, icd_codes}).
    #[arg(long)]
    patients: PathBuf,
    /// ICD code list, one code per line, or "default".
    #[arg(long, default_value = "default")]
    codes: String,
    /// Keep a seeded sample of this many cases.
    #[arg(long, requires = "sample_controls")]
    sample_cases: Option<usize>,
    #[arg(long, requires = "sample_cases")]
    sample_controls: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct WeaklabelArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value = "default")]
    ruleset: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct BuildDatasetArgs {
    /// Weak-labeled dataset JSONL.
    #[arg(long)]
    weak: PathBuf,
    #[arg(long, default_value_t = 0.99)]
    train_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Keep every unknown sentence.
    #[arg(long)]
    no_balance: bool,
    #[arg(long)]
    out_train: PathBuf,
    #[arg(long)]
    out_valid: PathBuf,
}

#[derive(Args, Serialize)]
struct TrainEmbeddingsArgs {
    /// Dataset JSONL whose sentence texts form the training text.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 300)]
    dim: usize,
    #[arg(long, default_value_t = 5)]
    window: usize,
    #[arg(long, default_value_t = 5)]
    negative: usize,
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    #[arg(long, default_value_t = 2)]
    min_count: usize,
    #[arg(long, default_value_t = 0.025)]
    learning_rate: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ModelName {
    Knn,
    Svm,
    Rf,
}

impl ModelName {
    fn stem(self) -> &'static str {
        match self {
            ModelName::Knn => "knn",
            ModelName::Svm => "svm",
            ModelName::Rf => "rf",
        }
    }
}

#[derive(Args, Serialize)]
struct TrainArgs {
    #[arg(long, value_enum)]
    model: ModelName,
    /// Labeled dataset JSONL to train on.
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long, default_value_t = 7)]
    k: usize,
    #[arg(long = "c", default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 100)]
    n_trees: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    /// Dataset JSONL to label.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct EvaluateArgs {
    #[arg(long)]
    gold: PathBuf,
    /// Predictions JSONL, as NAME=PATH or PATH (named by file stem). Repeatable.
    #[arg(long = "pred", required = true)]
    preds: Vec<String>,
    #[arg(long, default_value_t = 5)]
    max_per_class: usize,
    /// Directory for report.csv, report.txt and errors.txt.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct RunAllArgs {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// TOML pipeline config; its keys override the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training notes JSONL instead of a generated corpus.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Gold dataset JSONL instead of a generated test set.
    #[arg(long)]
    gold: Option<PathBuf>,
    #[arg(long)]
    ruleset: Option<PathBuf>,
    #[arg(long)]
    n_sentences: Option<usize>,
    #[arg(long)]
    test_sentences: Option<usize>,
}

fn mix(name: MixName) -> ClassMix {
    match name {
        MixName::Train => ClassMix::TRAIN,
        MixName::Test => ClassMix::TEST,
        MixName::Raw => ClassMix::RAW,
    }
}

fn rules_arg(s: &str) -> Option<&Path> {
    (s != "default").then(|| Path::new(s))
}

fn print_json<T: Serialize>(value: &T) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(command: Command) -> anyhow::Result<()> {
    match &command {
        Command::RunAll(_) => {}
        other => print_json(other)?,
    }
    match command {
        Command::GenCorpus(a) => {
            let rules = load_rules(rules_arg(&a.ruleset))?;
            let bank = load_bank(a.templates.as_deref())?;
            let config = GenerationConfig {
                n_documents: a.n_documents,
                sentences_per_document: (a.min_sentences, a.max_sentences),
                n_sentences: a.n_sentences,
                class_mix: mix(a.mix),
                hard_fraction: a.hard_fraction,
                seed: a.seed,
                doc_prefix: a.doc_prefix,
            };
            let (corpus, gold) = generate_corpus(&config, &bank, &rules)?;
            write_corpus(&corpus, &a.out)?;
            if let Some(g) = &a.gold {
                write_dataset(&gold, g)?;
            }
            eprint!("{} documents, {} sentences\n{}", corpus.len(), gold.len(), class_distribution(&gold).render());
        }
        Command::Cohort(a) => {
            let codes = match rules_arg(&a.codes) {
                Some(p) => load_icd_codeset(p)?,
                None => IcdCodeSet::default_mdd(),
            };
            let mut assigned = select_cohort(&read_patients(&a.patients)?, &codes)?;
            if let (Some(nc), Some(nk)) = (a.sample_cases, a.sample_controls) {
                assigned = sample_cohort(&assigned, nc, nk, a.seed);
            }
            mddphen_core::jsonl::write_records(&a.out, &assigned)?;
        }
        Command::Weaklabel(a) => {
            let rules = load_rules(rules_arg(&a.ruleset))?;
            let mut set = weak_label_corpus(&read_corpus(&a.corpus)?, &rules);
            set.meta.source_corpus = Some(a.corpus.display().to_string());
            set.meta.role = Some("weak".into());
            write_dataset(&set, &a.out)?;
            eprint!("{}", class_distribution(&set).render());
        }
        Command::BuildDataset(a) => {
            let weak = read_dataset(&a.weak)?;
            let balanced = if a.no_balance { weak } else { balance_unknown(&weak, a.seed) };
            let (mut train, mut valid) = split_train_validation(&balanced, a.train_fraction, a.seed)?;
            train.meta.role = Some("train".into());
            valid.meta.role = Some("validation".into());
            write_dataset(&train, &a.out_train)?;
            write_dataset(&valid, &a.out_valid)?;
            eprint!(
                "train ({})\n{}validation ({})\n{}",
                train.len(),
                class_distribution(&train).render(),
                valid.len(),
                class_distribution(&valid).render()
            );
        }
        Command::TrainEmbeddings(a) => {
            let config = CbowConfig {
                dim: a.dim,
                window: a.window,
                negative: a.negative,
                epochs: a.epochs,
                min_count: a.min_count,
                learning_rate: a.learning_rate,
                seed: a.seed,
                ..CbowConfig::default()
            };
            let set = read_dataset(&a.input)?;
            let model: Embeddings = train_cbow(&embedding_sentences(&set), &config)?;
            write_embeddings(&model, &a.out)?;
            eprintln!("{} tokens, epoch losses {:?}", model.vocab().len(), model.epoch_losses());
        }
        Command::Train(a) => {
            let embeddings: Embeddings = read_embeddings(&a.embeddings)?;
            let set = read_dataset(&a.features)?;
            let features = Features::from_labeled(&set, &embeddings)?;
            let mut config = PipelineConfig::default();
            config.knn.k = a.k;
            config.svm.c = a.c;
            config.svm.seed = a.seed;
            config.forest.n_trees = a.n_trees;
            config.forest.seed = a.seed;
            let model = train_named(a.model.stem(), &features, &config)?;
            write_classifier(&model, &a.out)?;
        }
        Command::Predict(a) => {
            let model: Classifier = read_classifier(&a.model)?;
            let embeddings: Embeddings = read_embeddings(&a.embeddings)?;
            let preds = predictions_for(&model, &read_dataset(&a.input)?, &embeddings)?;
            write_predictions(&preds, &a.out)?;
        }
        Command::Evaluate(a) => {
            let gold = read_dataset(&a.gold)?;
            let mut reports = Vec::new();
            let mut listed = Vec::new();
            for spec in &a.preds {
                let (name, path) = match spec.split_once('=') {
                    Some((n, p)) => (n.to_string(), PathBuf::from(p)),
                    None => {
                        let p = PathBuf::from(spec);
                        let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned());
                        (stem.unwrap_or_else(|| spec.clone()), p)
                    }
                };
                let preds = read_predictions(&path)?;
                reports.push(evaluate(&name, &gold, &preds)?);
                listed.push((name, preds));
            }
            std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
            let text = render_comparison_text(&reports);
            std::fs::write(a.out.join("report.txt"), &text)?;
            std::fs::write(a.out.join("report.csv"), render_comparison_csv(&reports))?;
            std::fs::write(a.out.join("errors.txt"), error_listing(&gold, &listed, a.max_per_class)?)?;
            print!("{text}");
        }
        Command::RunAll(a) => {
            let mut config = PipelineConfig {
                seed: a.seed,
                ..PipelineConfig::default()
            };
            config.paths.corpus = a.corpus;
            config.paths.gold = a.gold;
            config.paths.ruleset = a.ruleset;
            config.paths.out = Some(a.out.clone());
            if let Some(n) = a.n_sentences {
                config.corpus.n_sentences = n;
            }
            if let Some(n) = a.test_sentences {
                config.test.n_sentences = n;
            }
            if let Some(path) = &a.config {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                config = config.overridden_by(&text)?;
            }
            let Some(out) = config.paths.out.clone() else {
                bail!("no output directory");
            };
            print_json(&config.resolved())?;
            let summary = run_all(&config, &out)?;
            print!("{}", render_comparison_text(&summary.reports));
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let io = err.chain().any(|e| {
        e.downcast_ref::<mddphen_core::Error>().is_some_and(|c| c.is_io()) || e.is::<std::io::Error>()
    });
    if io {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
