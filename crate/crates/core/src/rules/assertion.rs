use super::{is_word_byte, CompiledRuleSet, CueKind, Direction, MatchSpan};
use crate::corpus::Sentence;
use crate::error::{Error, Result};
use crate::label::Label;

/// Assertion of a single keyword mention.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MentionAssertion {
    /// Attributed to someone other than the patient; does not count.
    OtherExperiencer,
    Negated,
    Possible,
    Affirmed,
}

/// Number of ASCII word tokens in `s`.
pub(crate) fn count_word_tokens(s: &str) -> usize {
    let mut n = 0;
    let mut in_word = false;
    for &b in s.as_bytes() {
        let w = is_word_byte(b);
        if w && !in_word {
            n += 1;
        }
        in_word = w;
    }
    n
}

fn cue_in_scope(text: &str, span: &MatchSpan, cue: &super::CompiledCue, window: usize) -> bool {
    cue.regex.find_iter(text).any(|m| match cue.direction {
        Direction::Pre => m.end() <= span.start && count_word_tokens(&text[m.end()..span.start]) < window,
        Direction::Post => m.start() >= span.end && count_word_tokens(&text[span.end..m.start()]) < window,
    })
}

pub(crate) fn assert_mention(text: &str, span: &MatchSpan, rules: &CompiledRuleSet) -> MentionAssertion {
    let has = |kind: CueKind| {
        rules
            .cues()
            .iter()
            .filter(|c| c.kind == kind)
            .any(|c| cue_in_scope(text, span, c, rules.window()))
    };
    if has(CueKind::Experiencer) {
        MentionAssertion::OtherExperiencer
    } else if has(CueKind::Negation) {
        MentionAssertion::Negated
    } else if has(CueKind::Possibility) {
        MentionAssertion::Possible
    } else {
        MentionAssertion::Affirmed
    }
}

pub(crate) fn aggregate(text: &str, spans: &[MatchSpan], rules: &CompiledRuleSet) -> Label {
    let mut label = Label::Unknown;
    for span in spans {
        let candidate = match assert_mention(text, span, rules) {
            MentionAssertion::Affirmed => return Label::Positive,
            MentionAssertion::Possible => Label::Possible,
            MentionAssertion::Negated => Label::Negated,
            MentionAssertion::OtherExperiencer => Label::Unknown,
        };
        label = match (label, candidate) {
            (Label::Possible, _) | (_, Label::Possible) => Label::Possible,
            (Label::Negated, _) | (_, Label::Negated) => Label::Negated,
            _ => Label::Unknown,
        };
    }
    label
}

/// Sentence label from previously found mentions.
pub fn classify_assertion(sentence: &Sentence, spans: &[MatchSpan], rules: &CompiledRuleSet) -> Result<Label> {
    let len = sentence.text.len();
    for s in spans {
        if s.start >= s.end || s.end > len || !sentence.text.is_char_boundary(s.start) || !sentence.text.is_char_boundary(s.end) {
            return Err(Error::SpanOutOfBounds {
                start: s.start,
                end: s.end,
                len,
            });
        }
    }
    Ok(aggregate(&sentence.text, spans, rules))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn label(text: &str) -> Label {
        CompiledRuleSet::default_rules().label_text(text)
    }

    #[test]
    fn token_counting() {
        assert_eq!(count_word_tokens(""), 0);
        assert_eq!(count_word_tokens(" experiencing "), 1);
        assert_eq!(count_word_tokens(", PHQ-9 r/o "), 4);
    }

    #[test]
    fn quoted_examples() {
        assert_eq!(label("There is no evidence of depression"), Label::Negated);
        assert_eq!(label("Patient is a depression suspect"), Label::Possible);
        assert_eq!(label("There is a strong family history of depression"), Label::Unknown);
        assert_eq!(label("Patient has hx of dysthymia"), Label::Positive);
    }

    #[test]
    fn precedence_within_mention() {
        // experiencer beats negation
        assert_eq!(label("No family history of depression"), Label::Unknown);
        // negation beats possibility
        assert_eq!(label("No possible depression"), Label::Negated);
        assert_eq!(label("Rule out depression"), Label::Possible);
        assert_eq!(label("r/o MDD"), Label::Possible);
    }

    #[test]
    fn aggregation_across_mentions() {
        assert_eq!(label("Denies anhedonia; on review of systems he reports chronic depression"), Label::Positive);
        assert_eq!(label("Denies anhedonia but reports depression"), Label::Negated);
        assert_eq!(label("Possible dysthymia; denies anhedonia"), Label::Possible);
        // experiencer scope reaches across both mentions here
        assert_eq!(label("Mother has depression, denies anhedonia"), Label::Unknown);
        assert_eq!(label("Denies anhedonia; her mother has depression"), Label::Negated);
    }

    #[test]
    fn window_limit() {
        // six intervening tokens puts the cue out of scope
        assert_eq!(label("not a b c d e f depression"), Label::Positive);
        assert_eq!(label("not a b c d e depression"), Label::Negated);
        assert_eq!(label("depression a b c d e suspected"), Label::Possible);
        assert_eq!(label("depression a b c d e f suspected"), Label::Positive);
    }

    #[test]
    fn out_of_bounds_span_is_an_error() {
        let rules = CompiledRuleSet::default_rules();
        let s = Sentence::standalone("depression");
        let bad = MatchSpan {
            start: 3,
            end: 40,
            matched_keyword: "depression".into(),
        };
        assert!(matches!(
            classify_assertion(&s, &[bad], &rules),
            Err(Error::SpanOutOfBounds { .. })
        ));
        assert_eq!(classify_assertion(&s, &[], &rules).unwrap(), Label::Unknown);
    }
}
