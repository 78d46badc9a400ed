use std::collections::{BTreeSet, HashMap};

use gramprof_core::checkpoint::ModelCheckpoint;
use gramprof_core::config::TrainConfig;
use gramprof_core::corpus::{build_tag_inventory, tokenize, LangMode, Vocab};
use gramprof_core::fixtures;
use gramprof_core::metrics::{labeled_prf, unlabeled_prf, LabeledSpan, SpanSet};
use gramprof_core::profiler::{profile_text, split_sentences};
use gramprof_core::span_model::{enumerate_spans, span_count};
use proptest::prelude::*;

fn text_strategy() -> impl Strategy<Value = String> {
    proptest::collection::vec(
        prop_oneof![
            Just("the".to_string()),
            Just("cat".to_string()),
            Just("Ünï".to_string()),
            Just("你好".to_string()),
            Just("的".to_string()),
            Just(" ".to_string()),
            Just("  ".to_string()),
            Just("\n".to_string()),
            Just(".".to_string()),
            Just("?!".to_string()),
            Just("。".to_string()),
            Just(",".to_string()),
            Just("42".to_string()),
        ],
        0..40,
    )
    .prop_map(|parts| parts.concat())
}

proptest! {
    #[test]
    fn tokens_address_the_text(text in text_strategy(), mode in prop_oneof![Just(LangMode::Auto), Just(LangMode::Segmental), Just(LangMode::CjkChar)]) {
        let chars: Vec<char> = text.chars().collect();
        let tokens = tokenize(&text, mode);
        let mut last_end = 0;
        for t in &tokens {
            prop_assert!(t.char_start >= last_end && t.char_start < t.char_end);
            prop_assert_eq!(chars[t.char_start..t.char_end].iter().collect::<String>(), t.text.clone());
            prop_assert!(!t.text.chars().any(char::is_whitespace));
            last_end = t.char_end;
        }
        let covered: usize = tokens.iter().map(|t| t.char_end - t.char_start).sum();
        prop_assert_eq!(covered, chars.iter().filter(|c| !c.is_whitespace()).count());
    }

    #[test]
    fn sentence_pieces_address_the_text(text in text_strategy()) {
        let chars: Vec<char> = text.chars().collect();
        let mut last_end = 0;
        for piece in split_sentences(&text) {
            prop_assert!(piece.char_start >= last_end && piece.char_start < piece.char_end);
            prop_assert_eq!(chars[piece.char_start..piece.char_end].iter().collect::<String>(), piece.text.clone());
            prop_assert!(!piece.text.contains('\n'));
            prop_assert_eq!(piece.text.trim(), piece.text.as_str());
            last_end = piece.char_end;
        }
    }

    #[test]
    fn unlabeled_scores_dominate_labeled(
        // One tag per position, as in loaded corpora and argmax decoding.
        gold in proptest::collection::hash_map((0..3usize, 0..6usize, 0..4usize), 0..3usize, 0..20),
        pred in proptest::collection::hash_map((0..3usize, 0..6usize, 0..4usize), 0..3usize, 0..20),
    ) {
        let build = |raw: &HashMap<(usize, usize, usize), usize>| -> SpanSet {
            raw.iter().map(|(&(s, a, w), &t)| LabeledSpan::new(format!("s{s}"), a, a + w, format!("T{t}"))).collect()
        };
        let (gold, pred) = (build(&gold), build(&pred));
        let (l, u) = (labeled_prf(&gold, &pred), unlabeled_prf(&gold, &pred));
        prop_assert!(u.p >= l.p && u.r >= l.r && u.f1 >= l.f1);
        for x in [l.p, l.r, l.f1, u.p, u.r, u.f1] {
            prop_assert!((0.0..=1.0).contains(&x));
        }
    }

    #[test]
    fn span_enumeration_is_ordered_and_complete(len in 0usize..40, width in 1usize..40) {
        let spans = enumerate_spans(len, width);
        prop_assert_eq!(spans.len(), span_count(len, width));
        let set: BTreeSet<(usize, usize)> = spans.iter().map(|s| (s.i, s.j)).collect();
        prop_assert_eq!(set.len(), spans.len());
        for s in &spans {
            prop_assert!(s.i <= s.j && s.j < len && s.j - s.i < width);
        }
    }
}

fn small_checkpoint() -> ModelCheckpoint {
    let corpus = fixtures::english(12, 1);
    ModelCheckpoint::new(
        TrainConfig {
            d: 8,
            n_heads: 2,
            n_layers: 1,
            d_ffn: 16,
            multitask: true,
            ..TrainConfig::default()
        },
        build_tag_inventory(&corpus, 1).unwrap(),
        Vocab::from_sentences(&corpus),
        vec!["en".into()],
        false,
    )
    .unwrap()
}

#[test]
fn profiling_is_per_sentence_independent() {
    let ckpt = small_checkpoint();
    let sentences = fixtures::english(20, 5);
    for pair in sentences.windows(2) {
        let (t1, t2) = (&pair[0].text, &pair[1].text);
        let joint = profile_text(&ckpt, &format!("{t1} {t2}"), "en", 0.0).unwrap();
        let first = profile_text(&ckpt, t1, "en", 0.0).unwrap();
        let second = profile_text(&ckpt, t2, "en", 0.0).unwrap();
        assert_eq!(joint.len(), first.len() + second.len());
        let shift = t1.chars().count() + 1;
        for (j, alone) in joint.iter().zip(first.iter().chain(&second)) {
            let base = if j.char_start >= shift { shift } else { 0 };
            assert_eq!(j.text, alone.text);
            assert_eq!(j.spans, alone.spans);
            assert_eq!(j.level, alone.level);
            assert_eq!(j.char_start, alone.char_start + base);
            let texts = |p: &gramprof_core::profiler::Prediction| p.tokens.iter().map(|t| t.text.clone()).collect::<Vec<_>>();
            assert_eq!(texts(j), texts(alone));
        }
    }
}

#[test]
fn profiled_gi_sets_have_no_empty_tag() {
    let ckpt = small_checkpoint();
    let text: String = fixtures::english(10, 2).iter().map(|s| s.text.clone() + " ").collect();
    for p in profile_text(&ckpt, &text, "en", 0.0).unwrap() {
        for span in &p.spans {
            assert_ne!(span.tag, ckpt.inventory.tag(0));
            assert!(span.prob > 0.0 && span.prob <= 1.0);
        }
        let level = p.level.unwrap();
        assert!(ckpt.levels.ordinal(&level.name).is_ok());
    }
}
