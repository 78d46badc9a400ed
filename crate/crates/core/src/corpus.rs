//! Tokenization, annotated-corpus I/O, tag inventories and the token
//! vocabulary.
//!
//! A corpus is a JSONL file with one annotated sentence per line:
//!
//! ```text
//! {"id": "en-0001", "lang": "en", "text": "...", "tokens": ["..."],
//!  "spans": [{"start": 0, "end": 2, "tag": "V.progressive"}], "level": "A2"}
//! ```
//!
//! `tokens` and `level` are optional and `end` is inclusive. Sentences longer
//! than the length cap are truncated and gold spans crossing the cut are
//! dropped.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reserved class for enumerated spans that carry no grammatical item.
pub const EMPTY_TAG: &str = "<empty>";
/// Collapsed class for tags below the frequency threshold.
pub const UNK_TAG: &str = "UNK";
pub const EMPTY_ID: usize = 0;
pub const UNK_ID: usize = 1;

pub const DEFAULT_MAX_LEN: usize = 128;
pub const DEFAULT_LEVELS: [&str; 6] = ["A1", "A2", "B1", "B2", "C1", "C2"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    /// Offsets are in Unicode scalar values into the original text.
    pub char_start: usize,
    pub char_end: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LangMode {
    /// Runs of letters/digits form one token, every other non-whitespace
    /// codepoint is a token of its own.
    Segmental,
    /// Every non-whitespace codepoint is a token.
    CjkChar,
    /// Segmental, except that CJK codepoints are always single tokens.
    Auto,
}

impl std::str::FromStr for LangMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "segmental" => Ok(LangMode::Segmental),
            "cjk-char" => Ok(LangMode::CjkChar),
            "auto" => Ok(LangMode::Auto),
            other => Err(Error::Invalid(format!("unknown tokenizer mode {other:?}"))),
        }
    }
}

pub fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF     // kana
        | 0x3400..=0x4DBF   // ext A
        | 0x4E00..=0x9FFF   // unified ideographs
        | 0xF900..=0xFAFF   // compatibility ideographs
        | 0x20000..=0x2FA1F)
}

#[derive(PartialEq, Eq, Clone, Copy)]
enum CharClass {
    Space,
    Word,
    Single,
}

fn classify(c: char, mode: LangMode) -> CharClass {
    if c.is_whitespace() {
        return CharClass::Space;
    }
    match mode {
        LangMode::CjkChar => CharClass::Single,
        LangMode::Auto if is_cjk(c) => CharClass::Single,
        _ if c.is_alphanumeric() => CharClass::Word,
        _ => CharClass::Single,
    }
}

pub fn tokenize(text: &str, mode: LangMode) -> Vec<Token> {
    tokenize_at(text, mode, 0)
}

/// Tokenizes `text`, reporting offsets shifted by `char_base`.
pub fn tokenize_at(text: &str, mode: LangMode, char_base: usize) -> Vec<Token> {
    let mut tokens = Vec::new();
    // (byte start, char start) of the open word run
    let mut run: Option<(usize, usize)> = None;
    let mut char_idx = 0;
    let close = |run: &mut Option<(usize, usize)>, tokens: &mut Vec<Token>, byte: usize, ch: usize| {
        if let Some((b, c)) = run.take() {
            tokens.push(Token {
                text: text[b..byte].to_string(),
                char_start: char_base + c,
                char_end: char_base + ch,
            });
        }
    };
    for (byte, c) in text.char_indices() {
        match classify(c, mode) {
            CharClass::Word => {
                if run.is_none() {
                    run = Some((byte, char_idx));
                }
            }
            CharClass::Space => close(&mut run, &mut tokens, byte, char_idx),
            CharClass::Single => {
                close(&mut run, &mut tokens, byte, char_idx);
                tokens.push(Token {
                    text: c.to_string(),
                    char_start: char_base + char_idx,
                    char_end: char_base + char_idx + 1,
                });
            }
        }
        char_idx += 1;
    }
    close(&mut run, &mut tokens, text.len(), char_idx);
    tokens
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SpanAnnotation {
    pub start: usize,
    /// Inclusive.
    pub end: usize,
    pub tag: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub id: String,
    pub lang: String,
    pub text: String,
    pub tokens: Vec<Token>,
    pub gold_spans: Vec<SpanAnnotation>,
    pub level: Option<String>,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token_texts(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.text.as_str())
    }

    /// Checks span bounds, reserved tags and position uniqueness. Exact
    /// duplicates are merged; the same position with two tags is an error.
    pub fn validate(&mut self) -> Result<()> {
        let len = self.tokens.len();
        let mut seen: HashMap<(usize, usize), &str> = HashMap::new();
        for span in &self.gold_spans {
            if span.start > span.end {
                return Err(Error::sentence(
                    &self.id,
                    format!("inverted span ({}, {})", span.start, span.end),
                ));
            }
            if span.end >= len {
                return Err(Error::sentence(
                    &self.id,
                    format!(
                        "span ({}, {}) out of range for {} tokens",
                        span.start, span.end, len
                    ),
                ));
            }
            if span.tag.is_empty() || span.tag == EMPTY_TAG {
                return Err(Error::sentence(&self.id, "empty or reserved span tag"));
            }
            if let Some(prev) = seen.insert((span.start, span.end), &span.tag) {
                if prev != span.tag {
                    return Err(Error::sentence(
                        &self.id,
                        format!(
                            "conflicting tags {prev:?} and {:?} on span ({}, {})",
                            span.tag, span.start, span.end
                        ),
                    ));
                }
            }
        }
        self.gold_spans.sort();
        self.gold_spans.dedup();
        Ok(())
    }

    /// Cuts the sentence to `max_len` tokens, dropping gold spans that cross
    /// the cut. Returns the number of dropped spans.
    pub fn truncate(&mut self, max_len: usize) -> usize {
        if self.tokens.len() <= max_len {
            return 0;
        }
        self.tokens.truncate(max_len);
        let before = self.gold_spans.len();
        self.gold_spans.retain(|s| s.end < max_len);
        before - self.gold_spans.len()
    }

    pub fn from_record(record: SentenceRecord, max_len: usize) -> Result<Self> {
        let tokens = match record.tokens {
            Some(words) => align_tokens(&record.id, &record.text, &words)?,
            None => tokenize(&record.text, LangMode::Auto),
        };
        let mut sentence = Sentence {
            id: record.id,
            lang: record.lang,
            text: record.text,
            tokens,
            gold_spans: record.spans,
            level: record.level,
        };
        sentence.validate()?;
        let dropped = sentence.truncate(max_len);
        if dropped > 0 {
            log::warn!(
                "sentence {}: truncated to {} tokens, dropped {} gold span(s)",
                sentence.id,
                max_len,
                dropped
            );
        }
        Ok(sentence)
    }

    pub fn to_record(&self) -> SentenceRecord {
        SentenceRecord {
            id: self.id.clone(),
            lang: self.lang.clone(),
            text: self.text.clone(),
            tokens: Some(self.tokens.iter().map(|t| t.text.clone()).collect()),
            spans: self.gold_spans.clone(),
            level: self.level.clone(),
        }
    }
}

/// Locates pre-tokenized words in the text, in order.
fn align_tokens(id: &str, text: &str, words: &[String]) -> Result<Vec<Token>> {
    let mut tokens = Vec::with_capacity(words.len());
    let mut byte = 0;
    let mut chars = 0;
    for word in words {
        if word.is_empty() || word.chars().all(char::is_whitespace) {
            return Err(Error::sentence(id, "empty or whitespace token"));
        }
        let offset = text[byte..]
            .find(word.as_str())
            .ok_or_else(|| Error::sentence(id, format!("token {word:?} not found in text")))?;
        let start = chars + text[byte..byte + offset].chars().count();
        let end = start + word.chars().count();
        tokens.push(Token {
            text: word.clone(),
            char_start: start,
            char_end: end,
        });
        byte += offset + word.len();
        chars = end;
    }
    Ok(tokens)
}

/// On-disk shape of one corpus line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub id: String,
    pub lang: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<String>>,
    #[serde(default)]
    pub spans: Vec<SpanAnnotation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<String>,
}

pub fn load_corpus(path: impl AsRef<Path>, max_len: usize) -> Result<Vec<Sentence>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(BufReader::new(file), max_len).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn read_corpus(reader: impl BufRead, max_len: usize) -> Result<Vec<Sentence>> {
    let mut sentences = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<corpus>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: SentenceRecord = serde_json::from_str(&line)
            .map_err(|source| Error::MalformedLine { line: idx + 1, source })?;
        sentences.push(Sentence::from_record(record, max_len)?);
    }
    Ok(sentences)
}

pub fn save_corpus(path: impl AsRef<Path>, sentences: &[Sentence]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_corpus(&mut out, sentences).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn write_corpus(out: &mut impl Write, sentences: &[Sentence]) -> std::io::Result<()> {
    for sentence in sentences {
        serde_json::to_writer(&mut *out, &sentence.to_record())?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Prefixes every gold tag with `"{lang}:"`, making tag names from different
/// languages distinct before their inventories are unioned.
pub fn namespace_tags(sentences: &mut [Sentence], lang: &str) {
    for sentence in sentences {
        for span in &mut sentence.gold_spans {
            span.tag = namespaced(lang, &span.tag);
        }
    }
}

pub fn namespaced(lang: &str, tag: &str) -> String {
    format!("{lang}:{tag}")
}

/// Ordered difficulty labels; the ordinal is the position in the list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LevelSet {
    names: Vec<String>,
}

impl LevelSet {
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::Config("level set is empty".into()));
        }
        for (i, name) in names.iter().enumerate() {
            if name.is_empty() || names[..i].contains(name) {
                return Err(Error::Config(format!("invalid or repeated level {name:?}")));
            }
        }
        Ok(LevelSet { names })
    }

    pub fn cefr() -> Self {
        LevelSet {
            names: DEFAULT_LEVELS.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn ordinal(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownLevel(name.to_string()))
    }

    pub fn name(&self, ordinal: usize) -> &str {
        &self.names[ordinal]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

impl Default for LevelSet {
    fn default() -> Self {
        LevelSet::cefr()
    }
}

impl TryFrom<Vec<String>> for LevelSet {
    type Error = Error;

    fn try_from(names: Vec<String>) -> Result<Self> {
        LevelSet::new(names)
    }
}

impl From<LevelSet> for Vec<String> {
    fn from(levels: LevelSet) -> Self {
        levels.names
    }
}

/// Bidirectional tag/class-id map. Id 0 is the empty tag, id 1 is UNK and
/// the remaining tags follow in lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "InventoryRepr", into = "InventoryRepr")]
pub struct TagInventory {
    tags: Vec<String>,
    min_freq: usize,
    ids: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct InventoryRepr {
    tags: Vec<String>,
    min_freq: usize,
}

impl TagInventory {
    /// `tags` excludes the two reserved entries.
    pub fn from_tags(mut tags: Vec<String>, min_freq: usize) -> Result<Self> {
        tags.sort();
        tags.dedup();
        if tags.iter().any(|t| t == EMPTY_TAG || t == UNK_TAG || t.is_empty()) {
            return Err(Error::Invalid("reserved or empty tag in inventory".into()));
        }
        let mut all = vec![EMPTY_TAG.to_string(), UNK_TAG.to_string()];
        all.extend(tags);
        let ids = all.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Ok(TagInventory {
            tags: all,
            min_freq,
            ids,
        })
    }

    /// Number of classes including the two reserved ones.
    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Resolves a tag to its class id; unknown tags map to UNK.
    pub fn id(&self, tag: &str) -> usize {
        self.ids.get(tag).copied().unwrap_or(UNK_ID)
    }

    pub fn tag(&self, id: usize) -> &str {
        &self.tags[id]
    }

    /// Tag name after collapsing (the UNK name for collapsed tags).
    pub fn resolve<'a>(&'a self, tag: &str) -> &'a str {
        self.tag(self.id(tag))
    }

    pub fn min_freq(&self) -> usize {
        self.min_freq
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    /// Non-reserved tags.
    pub fn labels(&self) -> &[String] {
        &self.tags[2..]
    }
}

impl TryFrom<InventoryRepr> for TagInventory {
    type Error = Error;

    fn try_from(repr: InventoryRepr) -> Result<Self> {
        if repr.tags.len() < 2 || repr.tags[0] != EMPTY_TAG || repr.tags[1] != UNK_TAG {
            return Err(Error::Invalid("inventory must start with the reserved tags".into()));
        }
        let inv = TagInventory::from_tags(repr.tags[2..].to_vec(), repr.min_freq)?;
        if inv.tags != repr.tags {
            return Err(Error::Invalid("inventory tags are not sorted and unique".into()));
        }
        Ok(inv)
    }
}

impl From<TagInventory> for InventoryRepr {
    fn from(inv: TagInventory) -> Self {
        InventoryRepr {
            tags: inv.tags,
            min_freq: inv.min_freq,
        }
    }
}

/// Builds the inventory from gold-span tag frequencies. Tags occurring fewer
/// than `min_freq` times are left out and therefore resolve to UNK.
pub fn build_tag_inventory(sentences: &[Sentence], min_freq: usize) -> Result<TagInventory> {
    if min_freq == 0 {
        return Err(Error::Config("min_freq must be at least 1".into()));
    }
    if sentences.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for span in sentences.iter().flat_map(|s| &s.gold_spans) {
        *counts.entry(span.tag.as_str()).or_default() += 1;
    }
    let kept = counts
        .into_iter()
        .filter(|&(tag, n)| n >= min_freq && tag != UNK_TAG)
        .map(|(tag, _)| tag.to_string())
        .collect();
    TagInventory::from_tags(kept, min_freq)
}

pub const VOCAB_UNK: &str = "[UNK]";
pub const VOCAB_START: &str = "[START]";
pub const VOCAB_UNK_ID: usize = 0;
pub const VOCAB_START_ID: usize = 1;

/// Token-string vocabulary for the encoder. Id 0 is the unknown token and
/// id 1 the sequence-start marker.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Vocab {
    pub fn build<'a>(words: impl IntoIterator<Item = &'a str>) -> Self {
        let mut sorted: Vec<&str> = words.into_iter().collect();
        sorted.sort_unstable();
        sorted.dedup();
        let mut tokens = vec![VOCAB_UNK.to_string(), VOCAB_START.to_string()];
        tokens.extend(
            sorted
                .into_iter()
                .filter(|w| *w != VOCAB_UNK && *w != VOCAB_START)
                .map(str::to_string),
        );
        Self::from_tokens(tokens)
    }

    pub fn from_sentences(sentences: &[Sentence]) -> Self {
        Self::build(sentences.iter().flat_map(|s| s.token_texts()))
    }

    fn from_tokens(tokens: Vec<String>) -> Self {
        let ids = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocab { tokens, ids }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, word: &str) -> usize {
        self.ids.get(word).copied().unwrap_or(VOCAB_UNK_ID)
    }

    pub fn encode<'a>(&self, words: impl IntoIterator<Item = &'a str>) -> Vec<usize> {
        words.into_iter().map(|w| self.id(w)).collect()
    }
}

impl TryFrom<Vec<String>> for Vocab {
    type Error = Error;

    fn try_from(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < 2 || tokens[0] != VOCAB_UNK || tokens[1] != VOCAB_START {
            return Err(Error::Invalid("vocabulary must start with the reserved tokens".into()));
        }
        let vocab = Self::from_tokens(tokens);
        if vocab.ids.len() != vocab.tokens.len() {
            return Err(Error::Invalid("duplicate vocabulary entries".into()));
        }
        Ok(vocab)
    }
}

impl From<Vocab> for Vec<String> {
    fn from(vocab: Vocab) -> Self {
        vocab.tokens
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(tokens: &[Token]) -> Vec<&str> {
        tokens.iter().map(|t| t.text.as_str()).collect()
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(
            texts(&tokenize("I am happy", LangMode::Segmental)),
            ["I", "am", "happy"]
        );
        assert_eq!(
            texts(&tokenize("我是学生", LangMode::CjkChar)),
            ["我", "是", "学", "生"]
        );
        assert_eq!(
            texts(&tokenize("Don't stop.", LangMode::Segmental)),
            ["Don", "'", "t", "stop", "."]
        );
        assert_eq!(texts(&tokenize("我是student。", LangMode::Auto)), ["我", "是", "student", "。"]);
        assert_eq!(texts(&tokenize("我是 ab", LangMode::Segmental)), ["我是", "ab"]);
        assert!(tokenize("", LangMode::Auto).is_empty());
        assert!(tokenize(" \t\n", LangMode::Auto).is_empty());
    }

    #[test]
    fn offsets_are_in_chars() {
        let tokens = tokenize("é, 你好 ok", LangMode::Auto);
        assert_eq!(texts(&tokens), ["é", ",", "你", "好", "ok"]);
        let spans: Vec<_> = tokens.iter().map(|t| (t.char_start, t.char_end)).collect();
        assert_eq!(spans, [(0, 1), (1, 2), (3, 4), (4, 5), (6, 8)]);
    }

    fn sentence(n: usize, spans: Vec<SpanAnnotation>) -> SentenceRecord {
        let words: Vec<String> = (0..n).map(|i| format!("w{i}")).collect();
        SentenceRecord {
            id: "s1".into(),
            lang: "en".into(),
            text: words.join(" "),
            tokens: Some(words),
            spans,
            level: None,
        }
    }

    fn span(start: usize, end: usize, tag: &str) -> SpanAnnotation {
        SpanAnnotation {
            start,
            end,
            tag: tag.into(),
        }
    }

    #[test]
    fn truncation_drops_crossing_spans() {
        let rec = sentence(130, vec![span(127, 129, "X"), span(0, 3, "Y")]);
        let s = Sentence::from_record(rec, 128).unwrap();
        assert_eq!(s.len(), 128);
        assert_eq!(s.gold_spans, vec![span(0, 3, "Y")]);
    }

    #[test]
    fn span_errors() {
        let err = Sentence::from_record(sentence(5, vec![span(2, 1, "X")]), 128).unwrap_err();
        assert!(err.to_string().contains("inverted span"), "{err}");
        assert!(err.to_string().contains("s1"));
        let err = Sentence::from_record(sentence(5, vec![span(2, 5, "X")]), 128).unwrap_err();
        assert!(err.to_string().contains("out of range"));
        let err = Sentence::from_record(sentence(5, vec![span(1, 2, "X"), span(1, 2, "Y")]), 128)
            .unwrap_err();
        assert!(err.to_string().contains("conflicting"));
        let ok = Sentence::from_record(sentence(5, vec![span(1, 2, "X"), span(1, 2, "X")]), 128)
            .unwrap();
        assert_eq!(ok.gold_spans.len(), 1);
        assert!(Sentence::from_record(sentence(5, vec![span(1, 2, EMPTY_TAG)]), 128).is_err());
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let data = "{\"id\":\"a\",\"lang\":\"en\",\"text\":\"hi\"}\n\n{oops\n";
        match read_corpus(data.as_bytes(), 128) {
            Err(Error::MalformedLine { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn tokens_default_to_auto_tokenization() {
        let data = r#"{"id":"z","lang":"zh","text":"我在看书。","spans":[{"start":1,"end":2,"tag":"zai"}],"level":"A1"}"#;
        let s = read_corpus(data.as_bytes(), 128).unwrap();
        assert_eq!(s[0].len(), 5);
        assert_eq!(s[0].level.as_deref(), Some("A1"));
    }

    #[test]
    fn misaligned_tokens_rejected() {
        let mut rec = sentence(3, vec![]);
        rec.tokens = Some(vec!["nope".into()]);
        assert!(Sentence::from_record(rec, 128).is_err());
    }

    fn with_tags(tags: &[&str]) -> Sentence {
        let n = tags.len().max(1);
        let mut rec = sentence(n, vec![]);
        rec.spans = tags.iter().enumerate().map(|(i, t)| span(i, i, t)).collect();
        Sentence::from_record(rec, 128).unwrap()
    }

    #[test]
    fn inventory_collapses_rare_tags() {
        let corpus = vec![with_tags(&["A", "A", "A", "A", "A", "B"])];
        let inv = build_tag_inventory(&corpus, 2).unwrap();
        assert_eq!(inv.tags(), [EMPTY_TAG, UNK_TAG, "A"]);
        assert_eq!(inv.id("B"), UNK_ID);
        assert_eq!(inv.resolve("B"), UNK_TAG);

        let corpus = vec![with_tags(&["B", "A"])];
        let inv = build_tag_inventory(&corpus, 1).unwrap();
        assert_eq!(inv.tags(), [EMPTY_TAG, UNK_TAG, "A", "B"]);
        assert_eq!(inv.id("B"), 3);

        let inv = build_tag_inventory(&corpus, usize::MAX).unwrap();
        assert_eq!(inv.id("A"), UNK_ID);

        assert!(matches!(build_tag_inventory(&[], 1), Err(Error::EmptyCorpus)));
        assert!(build_tag_inventory(&corpus, 0).is_err());
    }

    #[test]
    fn namespaced_union() {
        let mut en = vec![with_tags(&["A"])];
        let mut zh = vec![with_tags(&["A"])];
        namespace_tags(&mut en, "en");
        namespace_tags(&mut zh, "zh");
        en.extend(zh);
        let inv = build_tag_inventory(&en, 1).unwrap();
        assert_eq!(inv.tags(), [EMPTY_TAG, UNK_TAG, "en:A", "zh:A"]);
    }

    #[test]
    fn inventory_serde_round_trip() {
        let inv = TagInventory::from_tags(vec!["b".into(), "a".into()], 2).unwrap();
        let json = serde_json::to_string(&inv).unwrap();
        let back: TagInventory = serde_json::from_str(&json).unwrap();
        assert_eq!(back, inv);
        assert!(serde_json::from_str::<TagInventory>(r#"{"tags":["x"],"min_freq":1}"#).is_err());
    }

    #[test]
    fn level_set() {
        let levels = LevelSet::cefr();
        assert_eq!(levels.ordinal("B1").unwrap(), 2);
        assert!(matches!(levels.ordinal("Z9"), Err(Error::UnknownLevel(_))));
        assert!(LevelSet::new(vec!["a".into(), "a".into()]).is_err());
    }

    #[test]
    fn vocab_reserves_unk_and_start() {
        let vocab = Vocab::build(["b", "a", "b"]);
        assert_eq!(vocab.len(), 4);
        assert_eq!(vocab.id("a"), 2);
        assert_eq!(vocab.id("zzz"), VOCAB_UNK_ID);
    }
}
