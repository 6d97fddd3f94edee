use std::collections::BTreeSet;

use mddphen_core::corpus::{read_corpus, segment_sentences, write_corpus, Corpus, Document};
use mddphen_core::dataset::{
    balance_unknown, read_dataset, split_train_validation, write_dataset, LabeledSentence, LabeledSet, Source,
};
use mddphen_core::eval::{per_class_metrics, ConfusionMatrix};
use mddphen_core::rules::CompiledRuleSet;
use mddphen_core::Label;
use proptest::prelude::*;

fn piece() -> impl Strategy<Value = &'static str> {
    prop::sample::select(vec![
        "patient", "Depression", "no", "mood", "Dr.", "e.g.", "3.5", "mg", ".", "!", "?", "...", ". ", " ", "  ",
        "\n", "\n\n", "\n \n", "\"", ")", "(", "hx", "Hx.", "denies", "vs.", "x", "\t",
    ])
}

fn text() -> impl Strategy<Value = String> {
    prop::collection::vec(piece(), 0..40).prop_map(|p| p.concat())
}

fn label() -> impl Strategy<Value = Label> {
    prop::sample::select(Label::ALL.to_vec())
}

fn labeled_set(labels: &[Label]) -> LabeledSet {
    LabeledSet::new(
        labels
            .iter()
            .enumerate()
            .map(|(i, &label)| LabeledSentence {
                sentence_id: format!("d{}#{}", i / 7, i % 7),
                doc_id: format!("d{}", i / 7),
                text: format!("sentence number {i}"),
                label,
                source: Source::Weak,
            })
            .collect(),
    )
    .unwrap()
}

fn ids(set: &LabeledSet) -> Vec<String> {
    set.sentences.iter().map(|s| s.sentence_id.clone()).collect()
}

fn is_subsequence(part: &[String], whole: &[String]) -> bool {
    let mut it = whole.iter();
    part.iter().all(|p| it.any(|w| w == p))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn segments_are_ordered_trimmed_slices_covering_all_text(t in text()) {
        let doc = Document::new("n1", t.clone());
        let sentences = segment_sentences(&doc);
        let mut last_end = 0;
        for (i, s) in sentences.iter().enumerate() {
            prop_assert_eq!(&s.sentence_id, &format!("n1#{i}"));
            prop_assert!(s.start >= last_end && s.start < s.end);
            prop_assert_eq!(&t[s.start..s.end], s.text.as_str());
            prop_assert_eq!(s.text.trim(), s.text.as_str());
            prop_assert!(t[last_end..s.start].trim().is_empty());
            last_end = s.end;
        }
        prop_assert!(t[last_end..].trim().is_empty());
    }

    #[test]
    fn decimals_never_split(a in 0u32..1000, b in 0u32..1000) {
        let doc = Document::new("d", format!("Dose was {a}.{b} mg daily. Follow up."));
        prop_assert_eq!(segment_sentences(&doc).len(), 2);
    }

    #[test]
    fn labels_ignore_ascii_case(
        idx in 0usize..15,
        cue in prop::sample::select(vec!["", "no ", "possible ", "family history of ", "denies ", "r/o "]),
        tail in prop::sample::select(vec!["", " suspected", " noted today", " likely"]),
        flips in prop::collection::vec(any::<bool>(), 80),
    ) {
        let rules = CompiledRuleSet::default_rules();
        let kw = &rules.spec().keywords.terms[idx];
        let base = format!("Patient {cue}{kw}{tail}.");
        let flipped: String = base
            .chars()
            .zip(flips.iter().cycle())
            .map(|(c, &f)| if f { c.to_ascii_uppercase() } else { c.to_ascii_lowercase() })
            .collect();
        prop_assert_eq!(rules.label_text(&base), rules.label_text(&flipped));
    }

    #[test]
    fn instrument_names_are_not_mentions(
        idx in 0usize..15,
        ws in prop::sample::select(vec![" ", "  ", "\t", " \n "]),
        suffix in prop::sample::select(vec!["scale", "Scale", "SCALE score", "equal 1", "equal  1"]),
        cue in prop::sample::select(vec!["", "no ", "possible "]),
    ) {
        let rules = CompiledRuleSet::default_rules();
        let kw = &rules.spec().keywords.terms[idx];
        let text = format!("Administered {cue}{kw}{ws}{suffix} today");
        prop_assert!(rules.find_mentions(&text).is_empty(), "{}", text);
        prop_assert_eq!(rules.label_text(&text), Label::Unknown);
    }

    #[test]
    fn balancing_keeps_every_related_sentence(labels in prop::collection::vec(label(), 0..300), seed in any::<u64>()) {
        let set = labeled_set(&labels);
        let out = balance_unknown(&set, seed);
        let related: BTreeSet<String> = set.sentences.iter().filter(|s| s.label.is_mdd_related()).map(|s| s.sentence_id.clone()).collect();
        let kept: BTreeSet<String> = out.sentences.iter().filter(|s| s.label.is_mdd_related()).map(|s| s.sentence_id.clone()).collect();
        prop_assert_eq!(&related, &kept);
        let unknown = set.count(Label::Unknown);
        prop_assert_eq!(out.count(Label::Unknown), unknown.min(related.len()));
        prop_assert!(is_subsequence(&ids(&out), &ids(&set)));
        prop_assert_eq!(out.meta.seeds.get("balance"), Some(&seed));
        prop_assert_eq!(ids(&balance_unknown(&set, seed)), ids(&out));
    }

    #[test]
    fn split_is_a_stratified_partition(
        labels in prop::collection::vec(label(), 1..400),
        fraction in 0.05f64..0.95,
        seed in any::<u64>(),
    ) {
        let set = labeled_set(&labels);
        let (train, valid) = split_train_validation(&set, fraction, seed).unwrap();
        let t: BTreeSet<String> = ids(&train).into_iter().collect();
        let v: BTreeSet<String> = ids(&valid).into_iter().collect();
        prop_assert!(t.is_disjoint(&v));
        prop_assert_eq!(t.len() + v.len(), set.len());
        prop_assert!(is_subsequence(&ids(&train), &ids(&set)));
        prop_assert!(is_subsequence(&ids(&valid), &ids(&set)));
        let mut splittable = 0;
        for l in Label::ALL {
            let n = set.count(l);
            let got = train.count(l);
            if n < 2 {
                prop_assert_eq!(got, n);
            } else {
                splittable += n;
                let exact = fraction * n as f64;
                prop_assert!(got as f64 >= exact.floor() - 1e-9 && got as f64 <= exact.floor() + 1.0, "{} of {}", got, n);
            }
        }
        let small: usize = Label::ALL.iter().map(|&l| set.count(l)).filter(|&n| n < 2).sum();
        prop_assert_eq!(train.len() - small, (fraction * splittable as f64).round() as usize);
    }

    #[test]
    fn corpus_round_trips(texts in prop::collection::vec(text(), 1..20), with_patient in any::<bool>()) {
        let docs: Vec<Document> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let mut d = Document::new(format!("doc-{i}"), t.clone());
                if with_patient {
                    d.patient_id = Some(format!("p{}", i % 3));
                }
                d
            })
            .collect();
        let corpus = Corpus::new(docs).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        write_corpus(&corpus, &path).unwrap();
        let back = read_corpus(&path).unwrap();
        prop_assert_eq!(back.documents(), corpus.documents());
    }

    #[test]
    fn dataset_round_trips(labels in prop::collection::vec(label(), 0..50), seed in any::<u64>()) {
        let set = balance_unknown(&labeled_set(&labels), seed);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        write_dataset(&set, &path).unwrap();
        let back = read_dataset(&path).unwrap();
        prop_assert_eq!(&back.sentences, &set.sentences);
        prop_assert_eq!(back.meta.seeds, set.meta.seeds);
    }

    #[test]
    fn metrics_match_a_recount(pairs in prop::collection::vec((label(), label()), 0..300)) {
        let m = ConfusionMatrix::from_pairs(pairs.iter().copied());
        prop_assert_eq!(m.total(), pairs.len() as u64);
        for c in per_class_metrics(&m) {
            let tp = pairs.iter().filter(|(g, p)| *g == c.label && *p == c.label).count() as f64;
            let predicted = pairs.iter().filter(|(_, p)| *p == c.label).count() as f64;
            let gold = pairs.iter().filter(|(g, _)| *g == c.label).count() as f64;
            let p = if predicted > 0.0 { tp / predicted } else { 0.0 };
            let r = if gold > 0.0 { tp / gold } else { 0.0 };
            let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
            prop_assert!((c.precision - p).abs() <= 1e-12);
            prop_assert!((c.recall - r).abs() <= 1e-12);
            prop_assert!((c.f1 - f).abs() <= 1e-12);
            prop_assert_eq!(c.support, gold as u64);
            for v in [c.precision, c.recall, c.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            if c.precision > 0.0 && c.recall > 0.0 {
                prop_assert!(c.f1 <= c.precision.max(c.recall) + 1e-12);
                prop_assert!(c.f1 >= c.precision.min(c.recall) - 1e-12);
            }
        }
        let correct = pairs.iter().filter(|(g, p)| g == p).count() as f64;
        let accuracy = if pairs.is_empty() { 0.0 } else { correct / pairs.len() as f64 };
        prop_assert!((m.micro_recall() - accuracy).abs() <= 1e-12);
        prop_assert!((m.accuracy() - accuracy).abs() <= 1e-12);
    }
}
