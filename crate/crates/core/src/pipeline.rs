//! End-to-end run: corpus → weak labels → balanced train/validation split →
//! CBOW embeddings → three baseline classifiers → evaluation on a gold set.

use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    predict, train_knn, train_linear_svm, train_random_forest, write_classifier, ClassifierModel, FeatureMatrix,
    ForestConfig, SvmConfig,
};
use crate::cohort::{load_icd_codeset, read_patients, select_cohort, Cohort, IcdCodeSet};
use crate::corpus::{read_corpus, write_corpus, Corpus};
use crate::dataset::{
    balance_unknown, class_distribution, read_dataset, split_train_validation, weak_label_corpus, write_dataset,
    LabeledSet,
};
use crate::embeddings::{tokenize, train_cbow, write_embeddings, CbowConfig, EmbeddingModel};
use crate::error::{Error, Result};
use crate::eval::{error_listing, evaluate, render_comparison_csv, render_comparison_text, write_predictions, EvalReport, Prediction};
use crate::jsonl;
use crate::rules::{compile_ruleset, load_rule_spec, CompiledRuleSet};
use crate::seed::derive_seed;
use crate::synth::{generate_corpus, ClassMix, GenerationConfig, TemplateBank};
use crate::Real;

/// Optional inputs. Anything left unset falls back to the shipped defaults or,
/// for the corpora, to generated synthetic data.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathSettings {
    /// Training notes (corpus JSONL).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    /// Gold-labeled test sentences (dataset JSONL).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gold: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ruleset: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub templates: Option<PathBuf>,
    /// Patient code histories; when given, only notes of case and control
    /// patients are used for training.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub patients: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub codeset: Option<PathBuf>,
    /// Output directory. Not written to the resolved config dump so that runs
    /// into different directories produce identical files.
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
}

/// Per-stage seeds. Unset entries are derived from the master seed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageSeeds {
    pub generator: Option<u64>,
    pub test_generator: Option<u64>,
    pub balance: Option<u64>,
    pub split: Option<u64>,
    pub embeddings: Option<u64>,
    pub svm: Option<u64>,
    pub forest: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSettings {
    pub n_sentences: usize,
    pub sentences_per_document: (usize, usize),
    pub class_mix: ClassMix,
    pub hard_fraction: f64,
}

impl CorpusSettings {
    fn generation(&self, seed: u64, prefix: &str) -> GenerationConfig {
        GenerationConfig {
            n_documents: 0,
            sentences_per_document: self.sentences_per_document,
            n_sentences: Some(self.n_sentences),
            class_mix: self.class_mix,
            hard_fraction: self.hard_fraction,
            seed,
            doc_prefix: prefix.into(),
        }
    }
}

impl Default for CorpusSettings {
    fn default() -> Self {
        CorpusSettings {
            n_sentences: 5000,
            sentences_per_document: (5, 15),
            class_mix: ClassMix::RAW,
            hard_fraction: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnnSettings {
    pub k: usize,
}

impl Default for KnnSettings {
    fn default() -> Self {
        KnnSettings { k: 7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Master seed; every unset stage seed is derived from it.
    pub seed: u64,
    pub paths: PathSettings,
    pub seeds: StageSeeds,
    /// Synthetic training notes, used when `paths.corpus` is unset.
    pub corpus: CorpusSettings,
    /// Synthetic gold test set, used when `paths.gold` is unset.
    pub test: CorpusSettings,
    pub train_fraction: f64,
    pub embeddings: CbowConfig,
    pub knn: KnnSettings,
    pub svm: SvmConfig,
    pub forest: ForestConfig,
    /// Sentences per gold class in `errors.txt`.
    pub errors_per_class: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 42,
            paths: PathSettings::default(),
            seeds: StageSeeds::default(),
            corpus: CorpusSettings::default(),
            test: CorpusSettings {
                class_mix: ClassMix::TEST,
                ..CorpusSettings::default()
            },
            train_fraction: 0.99,
            embeddings: CbowConfig::default(),
            knn: KnnSettings::default(),
            svm: SvmConfig::default(),
            forest: ForestConfig::default(),
            errors_per_class: 5,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::invalid(format!("pipeline config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = jsonl::read_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.span().map_or(0, |s| text[..s.start].lines().count().max(1)),
            message: e.message().to_string(),
        })
    }

    /// Applies the keys present in a TOML document on top of `self`; keys the
    /// document does not mention keep their current values.
    pub fn overridden_by(&self, toml_text: &str) -> Result<Self> {
        let bad = |e: &dyn std::fmt::Display| Error::invalid(format!("pipeline config: {e}"));
        let mut base = toml::Value::try_from(self).map_err(|e| bad(&e))?;
        let overrides: toml::Table = toml_text.parse().map_err(|e| bad(&e))?;
        merge(&mut base, toml::Value::Table(overrides));
        let mut merged: PipelineConfig = base.try_into().map_err(|e| bad(&e))?;
        if merged.paths.out.is_none() {
            merged.paths.out.clone_from(&self.paths.out);
        }
        Ok(merged)
    }

    /// Fills every unset stage seed from the master seed and copies the seeds
    /// into the stage configs.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        let master = c.seed;
        let fill = |slot: &mut Option<u64>, stage: &str| {
            slot.get_or_insert_with(|| derive_seed(master, stage));
        };
        fill(&mut c.seeds.generator, "generator");
        fill(&mut c.seeds.test_generator, "test_generator");
        fill(&mut c.seeds.balance, "balance");
        fill(&mut c.seeds.split, "split");
        fill(&mut c.seeds.embeddings, "embeddings");
        fill(&mut c.seeds.svm, "svm");
        fill(&mut c.seeds.forest, "forest");
        c.embeddings.seed = c.seeds.embeddings.unwrap_or_default();
        c.svm.seed = c.seeds.svm.unwrap_or_default();
        c.forest.seed = c.seeds.forest.unwrap_or_default();
        c
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::invalid("train_fraction must lie in (0, 1)"));
        }
        if self.knn.k == 0 {
            return Err(Error::invalid("knn.k must be at least 1"));
        }
        self.embeddings.validate()?;
        self.svm.validate()?;
        self.forest.validate()?;
        self.corpus.generation(0, "x").validate()?;
        self.test.generation(0, "x").validate()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// The three baselines in report order: file stem and display name.
pub const MODELS: [(&str, &str); 3] = [
    ("knn", "K-Nearest Neighbors"),
    ("svm", "SVM classifier"),
    ("rf", "Random Forest"),
];

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub config: PipelineConfig,
    pub weak: LabeledSet,
    pub train: LabeledSet,
    pub valid: LabeledSet,
    pub gold: LabeledSet,
    pub reports: Vec<EvalReport>,
}

pub fn load_rules(path: Option<&Path>) -> Result<CompiledRuleSet> {
    match path {
        Some(p) => compile_ruleset(&load_rule_spec(p)?),
        None => Ok(CompiledRuleSet::default_rules()),
    }
}

pub fn load_bank(path: Option<&Path>) -> Result<TemplateBank> {
    match path {
        Some(p) => TemplateBank::load(p),
        None => Ok(TemplateBank::default_bank()),
    }
}

/// Keeps the documents of case and control patients.
pub fn restrict_to_cohort(corpus: Corpus, patients: &Path, codeset: Option<&Path>) -> Result<Corpus> {
    let codes = match codeset {
        Some(p) => load_icd_codeset(p)?,
        None => IcdCodeSet::default_mdd(),
    };
    let keep: std::collections::BTreeSet<String> = select_cohort(&read_patients(patients)?, &codes)?
        .into_iter()
        .filter(|a| a.cohort != Cohort::Excluded)
        .map(|a| a.patient_id)
        .collect();
    let docs = corpus
        .into_documents()
        .into_iter()
        .filter(|d| d.patient_id.as_ref().is_some_and(|p| keep.contains(p)))
        .collect();
    Corpus::new(docs)
}

/// Embedding training text: every sentence of the weak-labeled notes.
pub fn embedding_sentences(set: &LabeledSet) -> Vec<Vec<String>> {
    set.sentences.iter().map(|s| tokenize(&s.text)).collect()
}

pub fn predictions_for(
    model: &ClassifierModel<Real>,
    set: &LabeledSet,
    embeddings: &EmbeddingModel<Real>,
) -> Result<Vec<Prediction>> {
    let features = FeatureMatrix::from_labeled(set, embeddings)?;
    let labels = predict(model, &features)?;
    Ok(set
        .sentences
        .iter()
        .zip(labels)
        .map(|(s, l)| Prediction::new(s.sentence_id.clone(), l))
        .collect())
}

pub fn train_named(
    name: &str,
    features: &FeatureMatrix<Real>,
    config: &PipelineConfig,
) -> Result<ClassifierModel<Real>> {
    Ok(match name {
        "knn" => ClassifierModel::Knn(train_knn(features, config.knn.k)?),
        "svm" => ClassifierModel::LinearSvm(train_linear_svm(features, &config.svm)?),
        "rf" => ClassifierModel::RandomForest(train_random_forest(features, &config.forest)?),
        other => return Err(Error::invalid(format!("unknown model '{other}'"))),
    })
}

/// Runs every stage and writes all artifacts under `out` with fixed names.
pub fn run_all(config: &PipelineConfig, out: &Path) -> Result<RunSummary> {
    let config = config.resolved();
    config.validate()?;
    let seeds = &config.seeds;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    jsonl::write_string(&out.join("config.json"), &(config.to_json() + "\n"))?;

    let rules = load_rules(config.paths.ruleset.as_deref())?;
    let bank = load_bank(config.paths.templates.as_deref())?;

    let corpus = match &config.paths.corpus {
        Some(p) => {
            let c = read_corpus(p)?;
            match &config.paths.patients {
                Some(pp) => restrict_to_cohort(c, pp, config.paths.codeset.as_deref())?,
                None => c,
            }
        }
        None => {
            let gen = config.corpus.generation(seeds.generator.unwrap_or_default(), "note");
            generate_corpus(&gen, &bank, &rules)?.0
        }
    };
    write_corpus(&corpus, &out.join("corpus.jsonl"))?;

    let mut gold = match &config.paths.gold {
        Some(p) => read_dataset(p)?,
        None => {
            let gen = config.test.generation(seeds.test_generator.unwrap_or_default(), "gold");
            generate_corpus(&gen, &bank, &rules)?.1
        }
    };
    gold.meta.role = Some("gold".into());
    write_dataset(&gold, &out.join("gold.jsonl"))?;
    info!("corpus: {} documents; gold: {} sentences", corpus.len(), gold.len());

    let mut weak = weak_label_corpus(&corpus, &rules);
    weak.meta.source_corpus = Some("corpus.jsonl".into());
    weak.meta.role = Some("weak".into());
    write_dataset(&weak, &out.join("weak.jsonl"))?;

    let balanced = balance_unknown(&weak, seeds.balance.unwrap_or_default());
    let (mut train, mut valid) =
        split_train_validation(&balanced, config.train_fraction, seeds.split.unwrap_or_default())?;
    train.meta.role = Some("train".into());
    valid.meta.role = Some("validation".into());
    write_dataset(&train, &out.join("train.jsonl"))?;
    write_dataset(&valid, &out.join("valid.jsonl"))?;
    info!("weak: {} sentences; train {} / validation {}", weak.len(), train.len(), valid.len());

    let embeddings: EmbeddingModel<Real> = train_cbow(&embedding_sentences(&weak), &config.embeddings)?;
    write_embeddings(&embeddings, &out.join("embeddings.model"))?;
    info!("embeddings: {} tokens x {}", embeddings.vocab().len(), embeddings.dim());

    let train_features = FeatureMatrix::from_labeled(&train, &embeddings)?;
    let mut reports = Vec::new();
    let mut listed = Vec::new();
    for (stem, display) in MODELS {
        let model = train_named(stem, &train_features, &config)?;
        write_classifier(&model, &out.join(format!("{stem}.model")))?;
        let preds = predictions_for(&model, &gold, &embeddings)?;
        write_predictions(&preds, &out.join(format!("preds-{stem}.jsonl")))?;
        let report = evaluate(display, &gold, &preds)?;
        info!("{display}: accuracy {:.4}", report.accuracy());
        reports.push(report);
        listed.push((display.to_string(), preds));
    }

    let mut text = render_comparison_text(&reports);
    for r in &reports {
        text.push_str(&format!("\n{} (rows gold, columns predicted)\n", r.model));
        text.push_str(&r.confusion.render());
    }
    text.push_str("\nClass distribution\n");
    for (name, set) in [("train", &train), ("validation", &valid), ("gold", &gold)] {
        text.push_str(&format!("{name} ({} sentences)\n", set.len()));
        text.push_str(&class_distribution(set).render());
    }
    jsonl::write_string(&out.join("report.txt"), &text)?;
    jsonl::write_string(&out.join("report.csv"), &render_comparison_csv(&reports))?;
    jsonl::write_string(&out.join("errors.txt"), &error_listing(&gold, &listed, config.errors_per_class)?)?;

    Ok(RunSummary {
        config,
        weak,
        train,
        valid,
        gold,
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolution_fills_every_seed() {
        let c = PipelineConfig::default().resolved();
        let seeds = serde_json::to_value(&c.seeds).unwrap();
        assert!(seeds.as_object().unwrap().values().all(|v| v.is_u64()));
        assert_eq!(c.seeds.balance, Some(derive_seed(42, "balance")));
        assert_eq!(c.svm.seed, c.seeds.svm.unwrap());
        let pinned = PipelineConfig {
            seeds: StageSeeds {
                split: Some(7),
                ..StageSeeds::default()
            },
            ..PipelineConfig::default()
        };
        assert_eq!(pinned.resolved().seeds.split, Some(7));
    }

    #[test]
    fn toml_overrides_and_rejects_unknown_keys() {
        let c = PipelineConfig::from_toml_str("seed = 7\n[knn]\nk = 3\n[corpus]\nn_sentences = 100\n").unwrap();
        assert_eq!((c.seed, c.knn.k, c.corpus.n_sentences), (7, 3, 100));
        assert_eq!(c.forest.n_trees, 100);
        assert!(PipelineConfig::from_toml_str("sead = 7\n").is_err());
        let base = PipelineConfig {
            seed: 9,
            knn: KnnSettings { k: 5 },
            ..PipelineConfig::default()
        };
        let merged = base.overridden_by("[knn]\nk = 3\n[svm]\nc = 0.5\n").unwrap();
        assert_eq!((merged.seed, merged.knn.k, merged.svm.c), (9, 3, 0.5));
        assert!(base.overridden_by("[knn]\nkk = 3\n").is_err());
    }
}
