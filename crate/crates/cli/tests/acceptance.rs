//! Acceptance checks, one PASS/FAIL line per criterion. Runs without the
//! libtest harness so the lines are always printed.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use mddphen_core::corpus::Sentence;
use mddphen_core::dataset::{balance_unknown, class_distribution, read_dataset, split_train_validation, weak_label_corpus};
use mddphen_core::embeddings::{build_vocab, CbowConfig, CbowSample, EmbeddingModel};
use mddphen_core::eval::{per_class_metrics, ConfusionMatrix};
use mddphen_core::rules::{label_sentence, CompiledRuleSet};
use mddphen_core::synth::{generate_corpus, ClassMix, GenerationConfig, TemplateBank};
use mddphen_core::Label;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const RULE_SECONDS: f64 = 10.0;
const GRADIENT_SECONDS: f64 = 30.0;
const GRADIENT_MAX_REL: f64 = 1e-4;
const RUN_ALL_SECONDS: f64 = 300.0;
const POSITIVE_F1_MIN: f64 = 0.80;
const PERCENT_TOL: f64 = 0.1;
const METRIC_TOL: f64 = 1e-9;

type Outcome = Result<String, String>;

fn corpus(n: usize, mix: ClassMix, seed: u64) -> (mddphen_core::corpus::Corpus, mddphen_core::dataset::LabeledSet) {
    let config = GenerationConfig {
        n_sentences: Some(n),
        class_mix: mix,
        hard_fraction: 0.0,
        seed,
        ..GenerationConfig::default()
    };
    generate_corpus(&config, &TemplateBank::default_bank(), &CompiledRuleSet::default_rules()).unwrap()
}

fn rule_oracle() -> Outcome {
    let rules = CompiledRuleSet::default_rules();
    let (docs, gold) = corpus(10_000, ClassMix::TRAIN, 101);
    let started = Instant::now();
    let weak = weak_label_corpus(&docs, &rules);
    let secs = started.elapsed().as_secs_f64();
    let agree = weak.sentences.iter().zip(&gold.sentences).filter(|(w, g)| w.label == g.label).count();
    let msg = format!("{agree}/{} agree in {secs:.2}s", gold.len());
    if weak.len() == 10_000 && agree == 10_000 && secs < RULE_SECONDS {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn quoted_examples() -> Outcome {
    let rules = CompiledRuleSet::default_rules();
    let cases = [
        ("Patient has history of dysthymia", Label::Positive),
        ("Patient is a depression suspect", Label::Possible),
        ("There is no evidence of depression", Label::Negated),
        ("Patient has hx of dysthymia", Label::Positive),
        ("Likewise, he is not experiencing anhedonia.", Label::Negated),
        ("There is a strong family history of depression", Label::Unknown),
    ];
    let wrong: Vec<String> = cases
        .iter()
        .filter_map(|(text, want)| {
            let got = label_sentence(&Sentence::standalone(*text), &rules).label;
            (got != *want).then(|| format!("{text:?}: {got} != {want}"))
        })
        .collect();
    if wrong.is_empty() {
        Ok("6/6 labeled as quoted".into())
    } else {
        Err(wrong.join("; "))
    }
}

fn balancing() -> Outcome {
    let rules = CompiledRuleSet::default_rules();
    let mut checked = 0;
    for seed in 0..5u64 {
        let (docs, _) = corpus(4_000 + 1_000 * seed as usize, ClassMix::RAW, 200 + seed);
        let weak = weak_label_corpus(&docs, &rules);
        let related_ids = |s: &mddphen_core::dataset::LabeledSet| -> BTreeSet<String> {
            s.sentences.iter().filter(|x| x.label.is_mdd_related()).map(|x| x.sentence_id.clone()).collect()
        };
        let before = related_ids(&weak);
        if weak.count(Label::Unknown) <= before.len() {
            return Err(format!("seed {seed}: no excess unknowns"));
        }
        let out = balance_unknown(&weak, seed);
        if out.count(Label::Unknown) != before.len() {
            return Err(format!("seed {seed}: {} unknown vs {} related", out.count(Label::Unknown), before.len()));
        }
        if related_ids(&out) != before {
            return Err(format!("seed {seed}: related sentences changed"));
        }
        checked += 1;
    }
    Ok(format!("{checked} corpora: unknown == related, related ids unchanged"))
}

fn splitting() -> Outcome {
    let (_, set) = corpus(10_000, ClassMix::TRAIN, 303);
    let (train, valid) = split_train_validation(&set, 0.99, 7).map_err(|e| e.to_string())?;
    let t: BTreeSet<&str> = train.sentences.iter().map(|s| s.sentence_id.as_str()).collect();
    let v: BTreeSet<&str> = valid.sentences.iter().map(|s| s.sentence_id.as_str()).collect();
    let all: BTreeSet<&str> = set.sentences.iter().map(|s| s.sentence_id.as_str()).collect();
    if !t.is_disjoint(&v) || t.union(&v).copied().collect::<BTreeSet<_>>() != all {
        return Err("train/validation is not a partition".into());
    }
    for l in Label::ALL {
        let exact = 0.99 * set.count(l) as f64;
        let got = train.count(l) as f64;
        if got < exact.floor() || got > exact.floor() + 1.0 {
            return Err(format!("{l}: {got} train of {}", set.count(l)));
        }
    }
    let msg = format!("{}/{}", train.len(), valid.len());
    if train.len() == 9_900 && valid.len() == 100 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn distribution() -> Outcome {
    let want = [50.0, 44.5, 3.6, 1.9];
    let rules = CompiledRuleSet::default_rules();
    let (direct, _) = corpus(10_000, ClassMix::TRAIN, 404);
    let (raw, _) = corpus(10_000, ClassMix::RAW, 405);
    let built = [
        ("train-mix corpus", weak_label_corpus(&direct, &rules)),
        ("balanced raw corpus", balance_unknown(&weak_label_corpus(&raw, &rules), 9)),
    ];
    let mut lines = Vec::new();
    for (name, set) in &built {
        let d = class_distribution(set);
        let got: Vec<f64> = Label::ALL.iter().map(|&l| d.percent(l)).collect();
        if got.iter().zip(want).any(|(g, w)| (g - w).abs() > PERCENT_TOL + 1e-9) {
            return Err(format!("{name}: {got:?}"));
        }
        lines.push(format!("{name} {got:?}"));
    }
    Ok(lines.join(", "))
}

fn ln_sigmoid(x: f64) -> f64 {
    -(1.0 + (-x).exp()).ln()
}

fn reference_loss(input: &[f64], output: &[f64], dim: usize, ctx: &[usize], target: usize, neg: &[usize]) -> f64 {
    let mut h = vec![0.0; dim];
    for &c in ctx {
        for d in 0..dim {
            h[d] += input[c * dim + d] / ctx.len() as f64;
        }
    }
    let score = |row: usize| (0..dim).map(|d| output[row * dim + d] * h[d]).sum::<f64>();
    -ln_sigmoid(score(target)) - neg.iter().map(|&n| ln_sigmoid(-score(n))).sum::<f64>()
}

fn gradient_check() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2718);
    let v = 10;
    let words: Vec<String> = (0..v).map(|i| format!("t{i}")).collect();
    let vocab = build_vocab(&[words], 1).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let dim = rng.gen_range(4..=32);
        let input: Vec<f64> = (0..v * dim).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let output: Vec<f64> = (0..v * dim).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let config = CbowConfig { dim, ..CbowConfig::default() };
        let model = EmbeddingModel::from_parts(vocab.clone(), dim, input.clone(), output.clone(), config).unwrap();
        let ctx: Vec<usize> = (0..rng.gen_range(1..=6)).map(|_| rng.gen_range(0..v)).collect();
        let target = rng.gen_range(0..v);
        let neg: Vec<usize> = (0..5).map(|_| rng.gen_range(0..v)).filter(|&n| n != target).collect();
        let grad = model.ns_gradient(&CbowSample {
            context: &ctx,
            target,
            negatives: &neg,
        });
        for (is_input, rows) in [(true, &grad.input), (false, &grad.output)] {
            for (&row, g) in rows {
                for (d, &analytic) in g.iter().enumerate() {
                    let k = row * dim + d;
                    let (mut pi, mut po, mut mi, mut mo) = (input.clone(), output.clone(), input.clone(), output.clone());
                    if is_input {
                        pi[k] += h;
                        mi[k] -= h;
                    } else {
                        po[k] += h;
                        mo[k] -= h;
                    }
                    let numeric = (reference_loss(&pi, &po, dim, &ctx, target, &neg)
                        - reference_loss(&mi, &mo, dim, &ctx, target, &neg))
                        / (2.0 * h);
                    let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
                    worst = worst.max(rel);
                }
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    let msg = format!("max relative error {worst:.2e} over 100 probes in {secs:.2}s");
    if worst < GRADIENT_MAX_REL && secs < GRADIENT_SECONDS {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn metrics_fixture() -> Outcome {
    use Label::*;
    let m = ConfusionMatrix::from_pairs([(Positive, Positive), (Positive, Positive), (Unknown, Positive), (Positive, Unknown)]);
    let p = &per_class_metrics(&m)[Positive.index()];
    let hand = 2.0 / 3.0;
    for (name, v) in [("P", p.precision), ("R", p.recall), ("F1", p.f1)] {
        if (v - hand).abs() > METRIC_TOL {
            return Err(format!("{name} = {v}"));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..1000 {
        let n = rng.gen_range(1..=200);
        let pairs: Vec<(Label, Label)> = (0..n)
            .map(|_| (Label::ALL[rng.gen_range(0..4)], Label::ALL[rng.gen_range(0..4)]))
            .collect();
        let m = ConfusionMatrix::from_pairs(pairs.iter().copied());
        let accuracy = pairs.iter().filter(|(g, p)| g == p).count() as f64 / n as f64;
        if (m.micro_recall() - accuracy).abs() > 1e-12 {
            return Err(format!("micro recall {} vs accuracy {accuracy}", m.micro_recall()));
        }
    }
    Ok("P=R=F1=2/3; micro recall == accuracy on 1000 random vectors".into())
}

fn run_all(out: &Path) -> Result<Duration, String> {
    let started = Instant::now();
    let status = Command::new(env!("CARGO_BIN_EXE_mddphen"))
        .args(["run-all", "--seed", "42", "--out"])
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    if !status.status.success() {
        return Err(String::from_utf8_lossy(&status.stderr).into_owned());
    }
    Ok(started.elapsed())
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn baseline_sanity(out: &Path, elapsed: Duration) -> Outcome {
    let csv = std::fs::read_to_string(out.join("report.csv")).map_err(|e| e.to_string())?;
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).ok_or(format!("no column {name}"));
    let (f1_col, acc_col) = (col("positive_f1")?, col("accuracy")?);
    let gold = read_dataset(&out.join("gold.jsonl")).map_err(|e| e.to_string())?;
    let majority = Label::ALL.iter().map(|&l| gold.count(l)).max().unwrap_or(0) as f64 / gold.len() as f64;
    let mut parts = Vec::new();
    let mut ok = elapsed.as_secs_f64() < RUN_ALL_SECONDS;
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        let f1: f64 = f[f1_col].parse().map_err(|_| "bad f1".to_string())?;
        let acc: f64 = f[acc_col].parse().map_err(|_| "bad accuracy".to_string())?;
        ok &= f1 >= POSITIVE_F1_MIN && acc > majority;
        parts.push(format!("{}: positive F1 {f1:.3}, accuracy {acc:.4}", f[0]));
    }
    ok &= parts.len() == 3;
    let msg = format!(
        "{}; majority-class accuracy {majority:.4}; run-all {:.1}s",
        parts.join("; "),
        elapsed.as_secs_f64()
    );
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn determinism(a: &Path, b: &Path) -> Outcome {
    let (fa, fb) = (files(a), files(b));
    if fa != fb {
        return Err(format!("file lists differ: {fa:?} vs {fb:?}"));
    }
    for f in &fa {
        if std::fs::read(a.join(f)).unwrap() != std::fs::read(b.join(f)).unwrap() {
            return Err(format!("{} differs", f.display()));
        }
    }
    Ok(format!("{} files byte-identical", fa.len()))
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().unwrap();
    let (first, second) = (tmp.path().join("first"), tmp.path().join("second"));
    let runs = run_all(&first).and_then(|t| run_all(&second).map(|_| t));

    let results: Vec<(&str, Outcome)> = vec![
        ("rule engine matches planted gold (10,000 sentences, < 10 s)", rule_oracle()),
        ("quoted example sentences", quoted_examples()),
        ("unknown under-sampling", balancing()),
        ("99/1 stratified split of 10,000 sentences", splitting()),
        ("class distribution of the train mix", distribution()),
        ("CBOW gradient check (< 1e-4, < 30 s)", gradient_check()),
        (
            "baselines: positive F1 >= 0.80, beat majority class, run-all < 5 min",
            runs.clone().and_then(|t| baseline_sanity(&first, t)),
        ),
        ("metrics fixture and micro recall", metrics_fixture()),
        ("run-all --seed 42 twice is byte-identical", runs.and_then(|_| determinism(&first, &second))),
    ];
    let mut failed = 0;
    for (name, r) in &results {
        match r {
            Ok(m) => println!("PASS  {name}: {m}"),
            Err(m) => {
                failed += 1;
                println!("FAIL  {name}: {m}");
            }
        }
    }
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
