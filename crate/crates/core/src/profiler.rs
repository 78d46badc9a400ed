//! Raw text in, per-sentence grammatical items and difficulty out.
//!
//! Text is split into sentences by a terminator rule, each sentence is
//! tokenized, encoded, scored and decoded independently, and the level head
//! (when present) predicts its difficulty.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{LevelPrediction, ModelCheckpoint};
use crate::corpus::{tokenize_at, LangMode, Token};
use crate::error::{Error, Result};
use crate::span_model::DecodedSpan;

/// One sentence of the input, with codepoint offsets into it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentencePiece {
    pub text: String,
    pub char_start: usize,
    pub char_end: usize,
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?' | '。' | '！' | '？')
}

fn is_newline(c: char) -> bool {
    c == '\n' || c == '\r'
}

/// Splits after runs of `. ! ? 。 ！ ？` and at runs of newlines. Pieces are
/// trimmed of surrounding whitespace; whitespace-only pieces are dropped and
/// an unterminated trailing fragment is kept.
pub fn split_sentences(text: &str) -> Vec<SentencePiece> {
    let chars: Vec<char> = text.chars().collect();
    let mut pieces = Vec::new();
    let mut push = |start: usize, end: usize| {
        let mut s = start;
        let mut e = end;
        while s < e && chars[s].is_whitespace() {
            s += 1;
        }
        while e > s && chars[e - 1].is_whitespace() {
            e -= 1;
        }
        if s < e {
            pieces.push(SentencePiece {
                text: chars[s..e].iter().collect(),
                char_start: s,
                char_end: e,
            });
        }
    };
    let mut start = 0;
    let mut i = 0;
    while i < chars.len() {
        if is_terminator(chars[i]) {
            while i < chars.len() && is_terminator(chars[i]) {
                i += 1;
            }
            push(start, i);
            start = i;
        } else if is_newline(chars[i]) {
            push(start, i);
            while i < chars.len() && is_newline(chars[i]) {
                i += 1;
            }
            start = i;
        } else {
            i += 1;
        }
    }
    push(start, chars.len());
    pieces
}

/// Model output for one sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// `s0`, `s1`, … in input order.
    pub id: String,
    pub text: String,
    pub char_start: usize,
    pub char_end: usize,
    /// Tokens with codepoint offsets into the whole input text.
    pub tokens: Vec<Token>,
    /// Spans index into `tokens` (end inclusive).
    pub spans: Vec<DecodedSpan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<LevelPrediction>,
}

/// Profiles every sentence of `text`. Spans whose probability is below
/// `min_prob` are dropped; sentences longer than the model's maximum length
/// are cut to it.
pub fn profile_text(ckpt: &ModelCheckpoint, text: &str, lang: &str, min_prob: f64) -> Result<Vec<Prediction>> {
    if !ckpt.supports_language(lang) {
        return Err(Error::UnsupportedLanguage(lang.to_string()));
    }
    if !(0.0..=1.0).contains(&min_prob) {
        return Err(Error::Invalid(format!("threshold {min_prob} outside [0, 1]")));
    }
    split_sentences(text)
        .into_par_iter()
        .enumerate()
        .map(|(n, piece)| {
            let mut tokens = tokenize_at(&piece.text, LangMode::Auto, piece.char_start);
            if tokens.len() > ckpt.config.max_len {
                log::warn!("sentence s{n}: {} tokens cut to {}", tokens.len(), ckpt.config.max_len);
                tokens.truncate(ckpt.config.max_len);
            }
            let (spans, level) = ckpt.predict(&ckpt.encode(&tokens)?, min_prob)?;
            Ok(Prediction {
                id: format!("s{n}"),
                text: piece.text,
                char_start: piece.char_start,
                char_end: piece.char_end,
                tokens,
                spans,
                level,
            })
        })
        .collect()
}

/// `G(x)`: the distinct tags decoded in a sentence.
pub fn sentence_gi_set(prediction: &Prediction) -> BTreeSet<String> {
    prediction.spans.iter().map(|s| s.tag.clone()).collect()
}

/// `D(x)`: the predicted level of a sentence.
pub fn sentence_level(prediction: &Prediction) -> Result<&LevelPrediction> {
    prediction.level.as_ref().ok_or(Error::NoLevelHead)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::TrainConfig;
    use crate::corpus::{build_tag_inventory, Vocab};
    use crate::fixtures;

    fn texts(pieces: &[SentencePiece]) -> Vec<&str> {
        pieces.iter().map(|p| p.text.as_str()).collect()
    }

    #[test]
    fn splitting_examples() {
        assert_eq!(texts(&split_sentences("Hello. How are you?")), ["Hello.", "How are you?"]);
        assert_eq!(texts(&split_sentences("你好。你好！")), ["你好。", "你好！"]);
        assert_eq!(texts(&split_sentences("no terminator")), ["no terminator"]);
        assert_eq!(texts(&split_sentences("Wait?! Yes\n\nno")), ["Wait?!", "Yes", "no"]);
        assert!(split_sentences("").is_empty());
        assert!(split_sentences("  \n\n ").is_empty());
    }

    #[test]
    fn offsets_index_the_input() {
        let text = "  Ünïcode first.  second 第二。\nthird";
        let chars: Vec<char> = text.chars().collect();
        for p in split_sentences(text) {
            let slice: String = chars[p.char_start..p.char_end].iter().collect();
            assert_eq!(slice, p.text);
        }
    }

    fn checkpoint(multitask: bool) -> ModelCheckpoint {
        let corpus = fixtures::english(12, 1);
        ModelCheckpoint::new(
            TrainConfig {
                d: 8,
                n_heads: 2,
                n_layers: 1,
                d_ffn: 16,
                max_len: 6,
                multitask,
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
    fn profile_contract() {
        let ckpt = checkpoint(true);
        assert!(profile_text(&ckpt, "", "en", 0.0).unwrap().is_empty());
        assert!(matches!(profile_text(&ckpt, "x", "xx", 0.0), Err(Error::UnsupportedLanguage(_))));
        assert!(profile_text(&ckpt, "x", "en", 1.5).is_err());

        let text = "the cat eats a fish in the garden today. she reads.";
        let preds = profile_text(&ckpt, text, "en", 0.0).unwrap();
        assert_eq!(preds.len(), 2);
        assert_eq!(preds[0].id, "s0");
        assert_eq!(preds[0].tokens.len(), 6, "cut to max_len");
        let chars: Vec<char> = text.chars().collect();
        for p in &preds {
            assert!(sentence_level(p).is_ok());
            for t in &p.tokens {
                assert_eq!(chars[t.char_start..t.char_end].iter().collect::<String>(), t.text);
            }
            for s in &p.spans {
                assert!(s.start <= s.end && s.end < p.tokens.len());
                assert!(s.prob > 0.0 && s.prob <= 1.0);
            }
        }
        assert_eq!(profile_text(&ckpt, text, "en", 0.0).unwrap(), preds);
    }

    #[test]
    fn span_only_model_has_no_level() {
        let preds = profile_text(&checkpoint(false), "a b.", "en", 0.0).unwrap();
        assert!(matches!(sentence_level(&preds[0]), Err(Error::NoLevelHead)));
    }

    #[test]
    fn gi_set_deduplicates() {
        let span = |start, end, tag: &str| DecodedSpan {
            start,
            end,
            tag: tag.into(),
            prob: 0.9,
        };
        let mut p = Prediction {
            id: "s0".into(),
            text: String::new(),
            char_start: 0,
            char_end: 0,
            tokens: vec![],
            spans: vec![span(0, 1, "A"), span(2, 3, "A"), span(1, 4, "B")],
            level: None,
        };
        assert_eq!(sentence_gi_set(&p), BTreeSet::from(["A".to_string(), "B".to_string()]));
        p.spans.clear();
        assert!(sentence_gi_set(&p).is_empty());
    }
}
