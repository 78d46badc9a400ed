//! Rule-generated synthetic corpora.
//!
//! The English generator emits simple sentences whose grammatical items are
//! defined by surface rules (six tags, nested and overlapping) and whose
//! level is a function of the sentence template (six CEFR levels). The
//! Chinese generator does the same at the character level. Both are
//! deterministic in `(n, seed)` and are used by tests, benches and the demo
//! commands. [`random_documents`] builds index records directly from random
//! sentence predictions, for exercising retrieval without a model.

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::checkpoint::LevelPrediction;
use crate::corpus::{tokenize, LangMode, LevelSet, Sentence, SpanAnnotation, Token, DEFAULT_LEVELS};
use crate::index::DocumentRecord;
use crate::neural::init::stream_rng;
use crate::profiler::Prediction;
use crate::span_model::DecodedSpan;

pub const EN_TAGS: [&str; 6] = [
    "CLAUSE.because",
    "COMPARATIVE",
    "MODAL.verb",
    "NEG.do",
    "PP",
    "V.progressive",
];

pub const ZH_TAGS: [&str; 6] = [
    "ba.construction",
    "bu.neg",
    "de.possessive",
    "hen.adj",
    "le.perfective",
    "zai.progressive",
];

/// Word sequence with token-indexed annotations.
#[derive(Default)]
struct Builder {
    words: Vec<String>,
    spans: Vec<SpanAnnotation>,
}

impl Builder {
    /// Appends words and returns their inclusive token range.
    fn push(&mut self, words: &str) -> (usize, usize) {
        let start = self.words.len();
        self.words.extend(words.split_whitespace().map(str::to_string));
        (start, self.words.len() - 1)
    }

    fn tag(&mut self, (start, end): (usize, usize), tag: &str) {
        self.spans.push(SpanAnnotation {
            start,
            end,
            tag: tag.to_string(),
        });
    }

    fn next(&self) -> usize {
        self.words.len()
    }

    fn finish(mut self, id: String, lang: &str, level: usize, joiner: &str) -> Sentence {
        let mut text = String::new();
        for (k, w) in self.words.iter().enumerate() {
            let attach = w.chars().all(|c| !c.is_alphanumeric()) || joiner.is_empty();
            if k > 0 && !attach {
                text.push_str(joiner);
            }
            text.push_str(w);
        }
        let tokens = tokenize(&text, LangMode::Auto);
        debug_assert_eq!(tokens.len(), self.words.len(), "{text}");
        self.spans.sort();
        Sentence {
            id,
            lang: lang.to_string(),
            text,
            tokens,
            gold_spans: self.spans,
            level: Some(DEFAULT_LEVELS[level].to_string()),
        }
    }
}

const SUBJECTS: [&str; 8] = [
    "the cat",
    "my sister",
    "the teacher",
    "our old neighbour",
    "a boy",
    "she",
    "he",
    "the young doctor",
];
const VERBS: [(&str, &str, &str); 8] = [
    ("eat", "eats", "eating"),
    ("read", "reads", "reading"),
    ("write", "writes", "writing"),
    ("watch", "watches", "watching"),
    ("cook", "cooks", "cooking"),
    ("open", "opens", "opening"),
    ("clean", "cleans", "cleaning"),
    ("draw", "draws", "drawing"),
];
const OBJECTS: [&str; 8] = [
    "a fish",
    "the book",
    "a long letter",
    "the film",
    "dinner",
    "the door",
    "the small room",
    "a picture",
];
const PREPS: [&str; 4] = ["in", "at", "near", "under"];
const PLACES: [&str; 6] = ["garden", "kitchen", "park", "school", "library", "station"];
const MODALS: [&str; 4] = ["can", "should", "must", "will"];
const COMPARATIVES: [&str; 6] = ["taller", "older", "faster", "smaller", "more careful", "more patient"];
const OTHERS: [&str; 5] = ["his brother", "the dog", "me", "her friend", "the driver"];

fn pick<'a, R: Rng + ?Sized>(rng: &mut R, xs: &[&'a str]) -> &'a str {
    xs.choose(rng).copied().expect("nonempty word class")
}

fn en_pp<R: Rng + ?Sized>(b: &mut Builder, rng: &mut R, p: f64) {
    if rng.random_bool(p) {
        let words = format!("{} the {}", pick(rng, &PREPS), pick(rng, &PLACES));
        let r = b.push(&words);
        b.tag(r, "PP");
    }
}

fn en_comparative<R: Rng + ?Sized>(b: &mut Builder, rng: &mut R) {
    b.push(pick(rng, &SUBJECTS));
    b.push("is");
    let start = b.next();
    b.push(pick(rng, &COMPARATIVES));
    let (_, end) = b.push("than");
    b.tag((start, end), "COMPARATIVE");
    b.push(pick(rng, &OTHERS));
}

fn en_negated<R: Rng + ?Sized>(b: &mut Builder, rng: &mut R) {
    b.push(pick(rng, &SUBJECTS));
    let (start, _) = b.push(if rng.random_bool(0.5) { "does not" } else { "did not" });
    let (_, end) = b.push(VERBS.choose(rng).unwrap().0);
    b.tag((start, end), "NEG.do");
    b.push(pick(rng, &OBJECTS));
}

fn en_modal<R: Rng + ?Sized>(b: &mut Builder, rng: &mut R) {
    b.push(pick(rng, &SUBJECTS));
    let (start, _) = b.push(pick(rng, &MODALS));
    let (_, end) = b.push(VERBS.choose(rng).unwrap().0);
    b.tag((start, end), "MODAL.verb");
    b.push(pick(rng, &OBJECTS));
}

fn english_sentence<R: Rng + ?Sized>(id: String, level: usize, rng: &mut R) -> Sentence {
    let mut b = Builder::default();
    match level {
        // A1: present simple
        0 => {
            b.push(pick(rng, &SUBJECTS));
            b.push(VERBS.choose(rng).unwrap().1);
            b.push(pick(rng, &OBJECTS));
            en_pp(&mut b, rng, 0.5);
        }
        // A2: present progressive
        1 => {
            b.push(pick(rng, &SUBJECTS));
            let (start, _) = b.push("is");
            let (_, end) = b.push(VERBS.choose(rng).unwrap().2);
            b.tag((start, end), "V.progressive");
            b.push(pick(rng, &OBJECTS));
            en_pp(&mut b, rng, 0.5);
        }
        // B1: modal verb
        2 => {
            en_modal(&mut b, rng);
            en_pp(&mut b, rng, 0.5);
        }
        // B2: negation or comparison
        3 => {
            if rng.random_bool(0.5) {
                en_negated(&mut b, rng);
                en_pp(&mut b, rng, 0.5);
            } else {
                en_comparative(&mut b, rng);
            }
        }
        // C1: reason clause containing a comparison
        4 => {
            b.push(pick(rng, &SUBJECTS));
            b.push(VERBS.choose(rng).unwrap().1);
            b.push(pick(rng, &OBJECTS));
            let start = b.next();
            b.push("because");
            en_comparative(&mut b, rng);
            let end = b.next() - 1;
            b.tag((start, end), "CLAUSE.because");
        }
        // C2: modal main clause with a negated, located reason clause
        _ => {
            en_modal(&mut b, rng);
            let start = b.next();
            b.push("because");
            en_negated(&mut b, rng);
            en_pp(&mut b, rng, 0.5);
            let end = b.next() - 1;
            b.tag((start, end), "CLAUSE.because");
        }
    }
    b.push(".");
    b.finish(id, "en", level, " ")
}

/// `n` English sentences; levels cycle through A1–C2 so every level is
/// equally represented.
pub fn english(n: usize, seed: u64) -> Vec<Sentence> {
    let mut rng = stream_rng(seed, "fixture.en");
    (0..n)
        .map(|i| english_sentence(format!("en-{seed}-{i:03}"), i % DEFAULT_LEVELS.len(), &mut rng))
        .collect()
}

const ZH_SUBJECTS: [&str; 6] = ["我", "他", "她", "我们", "老师", "妈妈"];
const ZH_VERBS: [(&str, &str); 6] = [
    ("吃", "饭"),
    ("喝", "茶"),
    ("看", "书"),
    ("写", "字"),
    ("买", "菜"),
    ("学", "中文"),
];
const ZH_ADJ: [&str; 5] = ["好", "忙", "高", "累", "冷"];
const ZH_THINGS: [&str; 5] = ["书", "杯子", "衣服", "钥匙", "电脑"];
const ZH_PLACES: [&str; 4] = ["桌子上", "包里", "家里", "车里"];

fn chars(s: &str) -> String {
    s.chars().map(|c| c.to_string()).collect::<Vec<_>>().join(" ")
}

fn zh_push(b: &mut Builder, s: &str) -> (usize, usize) {
    b.push(&chars(s))
}

fn zh_possessive_subject<R: Rng + ?Sized>(b: &mut Builder, rng: &mut R, p: f64) {
    if rng.random_bool(p) {
        let start = b.next();
        zh_push(b, pick(rng, &ZH_SUBJECTS));
        let (_, end) = zh_push(b, "的");
        b.tag((start, end), "de.possessive");
        zh_push(b, pick(rng, &["朋友", "老师", "妈妈"]));
    } else {
        zh_push(b, pick(rng, &ZH_SUBJECTS));
    }
}

fn chinese_sentence<R: Rng + ?Sized>(id: String, level: usize, rng: &mut R) -> Sentence {
    let mut b = Builder::default();
    let (verb, obj) = *ZH_VERBS.choose(rng).unwrap();
    match level {
        // A1: adjective predicate with 很
        0 => {
            zh_possessive_subject(&mut b, rng, 0.3);
            let (start, _) = zh_push(&mut b, "很");
            let (_, end) = zh_push(&mut b, pick(rng, &ZH_ADJ));
            b.tag((start, end), "hen.adj");
        }
        // A2: negation with 不
        1 => {
            zh_possessive_subject(&mut b, rng, 0.3);
            let (start, _) = zh_push(&mut b, "不");
            let (_, end) = zh_push(&mut b, verb);
            b.tag((start, end), "bu.neg");
            zh_push(&mut b, obj);
        }
        // B1: progressive 在
        2 => {
            zh_possessive_subject(&mut b, rng, 0.3);
            let (start, _) = zh_push(&mut b, "在");
            let (_, end) = zh_push(&mut b, verb);
            b.tag((start, end), "zai.progressive");
            zh_push(&mut b, obj);
        }
        // B2: perfective 了
        3 => {
            zh_possessive_subject(&mut b, rng, 0.5);
            let (start, _) = zh_push(&mut b, verb);
            let (_, end) = zh_push(&mut b, "了");
            b.tag((start, end), "le.perfective");
            zh_push(&mut b, obj);
        }
        // C1: 把 construction
        4 => {
            zh_possessive_subject(&mut b, rng, 0.3);
            let (start, _) = zh_push(&mut b, "把");
            zh_push(&mut b, pick(rng, &ZH_THINGS));
            zh_push(&mut b, "放在");
            let (_, end) = zh_push(&mut b, pick(rng, &ZH_PLACES));
            b.tag((start, end), "ba.construction");
        }
        // C2: 把 construction with perfective 了 inside
        _ => {
            zh_possessive_subject(&mut b, rng, 0.5);
            let (start, _) = zh_push(&mut b, "把");
            zh_push(&mut b, pick(rng, &ZH_THINGS));
            let (le_start, _) = zh_push(&mut b, pick(rng, &["忘", "留"]));
            let (_, le_end) = zh_push(&mut b, "了");
            b.tag((le_start, le_end), "le.perfective");
            zh_push(&mut b, "在");
            let (_, end) = zh_push(&mut b, pick(rng, &ZH_PLACES));
            b.tag((start, end), "ba.construction");
        }
    }
    zh_push(&mut b, "。");
    b.finish(id, "zh", level, "")
}

/// `n` character-tokenized Chinese sentences; levels cycle through A1–C2.
pub fn chinese(n: usize, seed: u64) -> Vec<Sentence> {
    let mut rng = stream_rng(seed, "fixture.zh");
    (0..n)
        .map(|i| chinese_sentence(format!("zh-{seed}-{i:03}"), i % DEFAULT_LEVELS.len(), &mut rng))
        .collect()
}

/// Tag pool for [`random_documents`]: a few shared names plus
/// language-namespaced ones.
pub const RANDOM_TAGS: [&str; 8] = ["PP", "MODAL.verb", "NEG.do", "UNK", "en:PP", "en:V.progressive", "zh:le.perfective", "zh:bu.neg"];

/// `n` documents with 1–6 random sentences each: random tag spans (some
/// sentences have none), random levels with deliberate ties, random `en`/`zh`
/// language and texts up to 400 characters. Ids are `doc-{seed}-{i:04}`.
pub fn random_documents(n: usize, seed: u64, levels: &LevelSet) -> Vec<DocumentRecord> {
    let mut rng = stream_rng(seed, "fixtures.documents");
    let words = ["alpha", "beta", "gamma", "delta", "猫", "走", "了"];
    (0..n)
        .map(|i| {
            let lang = if rng.random_bool(0.5) { "en" } else { "zh" };
            let text_len = rng.random_range(1..=80);
            let text: Vec<&str> = (0..text_len).map(|_| *words.choose(&mut rng).unwrap()).collect();
            let text = text.join(" ");
            // Levels from a small window make ties between modes common.
            let low = rng.random_range(0..levels.len());
            let sentences = (0..rng.random_range(1..=6))
                .map(|k| {
                    let len = rng.random_range(1..=8);
                    let tokens = (0..len)
                        .map(|t| Token {
                            text: format!("w{t}"),
                            char_start: t,
                            char_end: t + 1,
                        })
                        .collect();
                    let n_spans = if rng.random_bool(0.2) { 0 } else { rng.random_range(1..=4) };
                    let spans = (0..n_spans)
                        .map(|_| {
                            let start = rng.random_range(0..len);
                            DecodedSpan {
                                start,
                                end: rng.random_range(start..len),
                                tag: RANDOM_TAGS.choose(&mut rng).unwrap().to_string(),
                                prob: rng.random_range(0.2..1.0),
                            }
                        })
                        .collect();
                    let level = (low + rng.random_range(0..2)).min(levels.len() - 1);
                    Prediction {
                        id: format!("s{k}"),
                        text: String::new(),
                        char_start: 0,
                        char_end: 0,
                        tokens,
                        spans,
                        level: Some(LevelPrediction {
                            name: levels.name(level).to_string(),
                            prob: 0.5,
                        }),
                    }
                })
                .collect();
            let ingested_at = rng.random_range(0..1_000_000);
            DocumentRecord::from_predictions(format!("doc-{seed}-{i:04}"), lang, text, sentences, levels, ingested_at)
                .expect("generated records are valid")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::corpus::SentenceRecord;

    fn check(sentences: &[Sentence], tags: &[&str]) {
        let mut seen = BTreeSet::new();
        for s in sentences {
            let mut copy = s.clone();
            copy.validate().unwrap();
            assert_eq!(copy.gold_spans, s.gold_spans, "{}", s.text);
            for span in &s.gold_spans {
                assert!(tags.contains(&span.tag.as_str()), "{}", span.tag);
                seen.insert(span.tag.clone());
            }
            // survives the on-disk round trip unchanged
            let record: SentenceRecord = serde_json::from_str(&serde_json::to_string(&s.to_record()).unwrap()).unwrap();
            assert_eq!(&Sentence::from_record(record, 128).unwrap(), s);
        }
        assert_eq!(seen.len(), tags.len());
    }

    #[test]
    fn english_fixture_is_valid_and_covers_every_tag() {
        let corpus = english(60, 7);
        check(&corpus, &EN_TAGS);
        let levels: BTreeSet<_> = corpus.iter().map(|s| s.level.clone().unwrap()).collect();
        assert_eq!(levels.len(), 6);
        assert_eq!(english(60, 7), corpus);
        assert_ne!(english(60, 8), corpus);
    }

    #[test]
    fn english_clause_nests_inner_items() {
        let s = english(6, 3).pop().unwrap();
        let clause = s.gold_spans.iter().find(|g| g.tag == "CLAUSE.because").unwrap();
        assert_eq!(s.tokens[clause.start].text, "because");
        assert!(s
            .gold_spans
            .iter()
            .any(|g| g.tag == "NEG.do" && g.start > clause.start && g.end <= clause.end));
    }

    #[test]
    fn chinese_fixture_is_character_level() {
        let corpus = chinese(60, 7);
        check(&corpus, &ZH_TAGS);
        for s in &corpus {
            assert_eq!(s.tokens.len(), s.text.chars().count());
        }
    }
}
