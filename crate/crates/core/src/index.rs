//! Document store with grammatical-item and difficulty retrieval.
//!
//! A document's item set `G(X)` is the union of its sentences' decoded tags
//! and its difficulty `D(X)` is the most frequent sentence level, ties going
//! to the lowest level. Records are the source of truth; the tag → ids and
//! level → ids maps are rebuilt from them.
//!
//! On disk the index is JSONL: a header line
//! `{"format":"gramprof-index","version":1,"levels":[...]}` followed by one
//! [`DocumentRecord`] per line.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::checkpoint::ModelCheckpoint;
use crate::corpus::LevelSet;
use crate::error::{Error, Result};
use crate::profiler::{profile_text, sentence_gi_set, Prediction};

pub const INDEX_FORMAT: &str = "gramprof-index";
pub const INDEX_VERSION: u32 = 1;
pub const SNIPPET_CHARS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentRecord {
    pub id: String,
    pub lang: String,
    pub text: String,
    pub sentences: Vec<Prediction>,
    /// `G(X)`.
    pub gi_set: BTreeSet<String>,
    /// `D(X)`, a level name.
    pub difficulty: String,
    /// Seconds since the Unix epoch.
    pub ingested_at: u64,
}

/// `G(X)`: union of the sentences' item sets.
pub fn document_gi_set(sentences: &[Prediction]) -> BTreeSet<String> {
    sentences.iter().flat_map(sentence_gi_set).collect()
}

/// `D(X)`: ordinal of the most frequent level; ties go to the lowest ordinal.
pub fn modal_level(levels: &LevelSet, names: &[&str]) -> Result<usize> {
    if names.is_empty() {
        return Err(Error::NoSentences);
    }
    let mut counts = vec![0usize; levels.len()];
    for name in names {
        counts[levels.ordinal(name)?] += 1;
    }
    let mut best = 0;
    for (ordinal, &count) in counts.iter().enumerate() {
        if count > counts[best] {
            best = ordinal;
        }
    }
    Ok(best)
}

fn sentence_levels(sentences: &[Prediction]) -> Result<Vec<&str>> {
    sentences
        .iter()
        .map(|p| p.level.as_ref().map(|l| l.name.as_str()).ok_or(Error::NoLevelHead))
        .collect()
}

impl DocumentRecord {
    pub fn from_predictions(
        id: impl Into<String>,
        lang: impl Into<String>,
        text: impl Into<String>,
        sentences: Vec<Prediction>,
        levels: &LevelSet,
        ingested_at: u64,
    ) -> Result<Self> {
        if sentences.is_empty() {
            return Err(Error::NoSentences);
        }
        let difficulty = levels.name(modal_level(levels, &sentence_levels(&sentences)?)?).to_string();
        Ok(DocumentRecord {
            id: id.into(),
            lang: lang.into(),
            text: text.into(),
            gi_set: document_gi_set(&sentences),
            difficulty,
            sentences,
            ingested_at,
        })
    }

    /// Checks the derived fields and span bounds against the sentences.
    pub fn check(&self, levels: &LevelSet) -> std::result::Result<(), String> {
        if self.id.is_empty() {
            return Err("empty document id".into());
        }
        if self.sentences.is_empty() {
            return Err(format!("document {} has no sentences", self.id));
        }
        for p in &self.sentences {
            if let Some(s) = p.spans.iter().find(|s| s.start > s.end || s.end >= p.tokens.len()) {
                return Err(format!("sentence {} span ({}, {}) out of range", p.id, s.start, s.end));
            }
        }
        if self.gi_set != document_gi_set(&self.sentences) {
            return Err(format!("document {}: gi_set differs from the union of its sentences", self.id));
        }
        let names = sentence_levels(&self.sentences).map_err(|e| e.to_string())?;
        let mode = modal_level(levels, &names).map_err(|e| e.to_string())?;
        if levels.ordinal(&self.difficulty).ok() != Some(mode) {
            return Err(format!(
                "document {}: difficulty {} is not the modal sentence level {}",
                self.id,
                self.difficulty,
                levels.name(mode)
            ));
        }
        Ok(())
    }

    /// The first [`SNIPPET_CHARS`] characters of the text.
    pub fn snippet(&self) -> String {
        self.text.chars().take(SNIPPET_CHARS).collect()
    }
}

/// Conjunctive search filters; `None` matches everything.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub gi: Option<String>,
    pub level: Option<String>,
    pub lang: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    levels: LevelSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocumentIndex {
    levels: LevelSet,
    docs: BTreeMap<String, DocumentRecord>,
    by_tag: HashMap<String, BTreeSet<String>>,
    by_level: Vec<BTreeSet<String>>,
}

impl DocumentIndex {
    pub fn new(levels: LevelSet) -> Self {
        let by_level = vec![BTreeSet::new(); levels.len()];
        DocumentIndex {
            levels,
            docs: BTreeMap::new(),
            by_tag: HashMap::new(),
            by_level,
        }
    }

    pub fn levels(&self) -> &LevelSet {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&DocumentRecord> {
        self.docs.get(id)
    }

    /// Records in id order.
    pub fn documents(&self) -> impl Iterator<Item = &DocumentRecord> {
        self.docs.values()
    }

    /// Every tag with at least one document.
    pub fn tags(&self) -> BTreeSet<&str> {
        self.by_tag.keys().map(String::as_str).collect()
    }

    /// Adds a record after checking its invariants; an existing id is an
    /// error unless `overwrite`.
    pub fn insert(&mut self, record: DocumentRecord, overwrite: bool) -> Result<()> {
        record.check(&self.levels).map_err(Error::Invalid)?;
        if self.docs.contains_key(&record.id) {
            if !overwrite {
                return Err(Error::DuplicateDocument(record.id));
            }
            self.remove(&record.id);
        }
        for tag in &record.gi_set {
            self.by_tag.entry(tag.clone()).or_default().insert(record.id.clone());
        }
        let ordinal = self.levels.ordinal(&record.difficulty)?;
        self.by_level[ordinal].insert(record.id.clone());
        self.docs.insert(record.id.clone(), record);
        Ok(())
    }

    pub fn remove(&mut self, id: &str) -> Option<DocumentRecord> {
        let record = self.docs.remove(id)?;
        for tag in &record.gi_set {
            if let Some(ids) = self.by_tag.get_mut(tag) {
                ids.remove(id);
                if ids.is_empty() {
                    self.by_tag.remove(tag);
                }
            }
        }
        if let Ok(ordinal) = self.levels.ordinal(&record.difficulty) {
            self.by_level[ordinal].remove(id);
        }
        Some(record)
    }

    /// Documents matching every given filter, ordered by (difficulty
    /// ordinal, id). Unknown tags match nothing; unknown level names are an
    /// error.
    pub fn search(&self, query: &Query) -> Result<Vec<&DocumentRecord>> {
        let level = query.level.as_deref().map(|l| self.levels.ordinal(l)).transpose()?;
        let mut candidates: Box<dyn Iterator<Item = &String>> = match (&query.gi, level) {
            (Some(gi), _) => match self.by_tag.get(gi) {
                Some(ids) => Box::new(ids.iter()),
                None => return Ok(Vec::new()),
            },
            (None, Some(ordinal)) => Box::new(self.by_level[ordinal].iter()),
            (None, None) => Box::new(self.docs.keys()),
        };
        let mut hits: Vec<(usize, &DocumentRecord)> = Vec::new();
        for id in &mut candidates {
            let doc = &self.docs[id];
            let ordinal = self.levels.ordinal(&doc.difficulty)?;
            if level.is_some_and(|l| l != ordinal) {
                continue;
            }
            if query.lang.as_ref().is_some_and(|lang| *lang != doc.lang) {
                continue;
            }
            hits.push((ordinal, doc));
        }
        hits.sort_by(|a, b| (a.0, &a.1.id).cmp(&(b.0, &b.1.id)));
        Ok(hits.into_iter().map(|(_, d)| d).collect())
    }

    pub fn write(&self, out: &mut impl Write) -> std::io::Result<()> {
        let header = Header {
            format: INDEX_FORMAT.to_string(),
            version: INDEX_VERSION,
            levels: self.levels.clone(),
        };
        serde_json::to_writer(&mut *out, &header)?;
        out.write_all(b"\n")?;
        for doc in self.docs.values() {
            serde_json::to_writer(&mut *out, doc)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Writes to a temporary sibling and renames it over `path`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        let file = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        let mut w = BufWriter::new(file);
        self.write(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn read(reader: impl BufRead) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let header: Header = loop {
            let Some((n, line)) = lines.next() else {
                return Err(Error::Invalid("index file has no header line".into()));
            };
            let line = line.map_err(|e| Error::Invalid(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            break serde_json::from_str(&line).map_err(|source| Error::MalformedLine { line: n + 1, source })?;
        };
        if header.format != INDEX_FORMAT || header.version != INDEX_VERSION {
            return Err(Error::Invalid(format!(
                "unsupported index format {} v{}",
                header.format, header.version
            )));
        }
        let mut index = DocumentIndex::new(header.levels);
        for (n, line) in lines {
            let line = line.map_err(|e| Error::Invalid(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: DocumentRecord =
                serde_json::from_str(&line).map_err(|source| Error::MalformedLine { line: n + 1, source })?;
            if index.docs.contains_key(&record.id) {
                return Err(Error::InconsistentRecord {
                    line: n + 1,
                    message: format!("duplicate document id {}", record.id),
                });
            }
            record
                .check(&index.levels)
                .map_err(|message| Error::InconsistentRecord { line: n + 1, message })?;
            index.insert(record, false)?;
        }
        Ok(index)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(file))
    }

    /// Loads `path` if it exists, otherwise starts an empty index.
    pub fn open_or_new(path: impl AsRef<Path>, levels: LevelSet) -> Result<Self> {
        let path = path.as_ref();
        if path.exists() {
            let index = Self::load(path)?;
            if index.levels != levels {
                return Err(Error::Invalid(format!(
                    "index levels {:?} differ from the model's {:?}",
                    index.levels.names(),
                    levels.names()
                )));
            }
            Ok(index)
        } else {
            Ok(Self::new(levels))
        }
    }
}

pub fn now_seconds() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Profiles `text` and builds its record. Needs a checkpoint with a level
/// head. The index itself is not modified.
pub fn profile_document(ckpt: &ModelCheckpoint, id: &str, text: &str, lang: &str) -> Result<DocumentRecord> {
    if !ckpt.multitask() {
        return Err(Error::NoLevelHead);
    }
    if id.is_empty() {
        return Err(Error::Invalid("document id is empty".into()));
    }
    let sentences = profile_text(ckpt, text, lang, 0.0)?;
    DocumentRecord::from_predictions(id, lang, text, sentences, &ckpt.levels, now_seconds())
}

/// Profiles and inserts a document.
pub fn index_document(
    ckpt: &ModelCheckpoint,
    index: &mut DocumentIndex,
    id: &str,
    text: &str,
    lang: &str,
    overwrite: bool,
) -> Result<DocumentRecord> {
    if !overwrite && index.get(id).is_some() {
        return Err(Error::DuplicateDocument(id.to_string()));
    }
    let record = profile_document(ckpt, id, text, lang)?;
    index.insert(record.clone(), overwrite)?;
    Ok(record)
}
