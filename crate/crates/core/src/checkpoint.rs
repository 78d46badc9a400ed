//! Trained model bundle and its on-disk form.
//!
//! A checkpoint is a directory with two files:
//!
//! - `manifest.json`: training config, tag inventory, level set, vocabulary,
//!   languages, training provenance and a tensor index
//!   (`name`, `shape`, byte `offset`, element count `len`);
//! - `params.bin`: every tensor, row-major, 32-bit little-endian, concatenated
//!   in index order.
//!
//! Serialization is deterministic: saving a loaded checkpoint reproduces
//! both files byte for byte.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::TrainConfig;
use crate::corpus::{namespaced, LevelSet, TagInventory, Token, Vocab};
use crate::encoder::EncoderOutput;
use crate::error::{Error, Result};
use crate::neural::{ops, Parameterized, Tensor};
use crate::span_model::{decode, DecodedSpan, SpanModel};

pub const CHECKPOINT_FORMAT: &str = "gramprof-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PARAMS_FILE: &str = "params.bin";

/// Where the selected parameters came from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// 1-based epoch of the selected snapshot (0 = untrained).
    pub epoch: usize,
    pub epochs_run: usize,
    pub val_labeled_f1: f64,
    pub val_level_accuracy: Option<f64>,
    pub alpha: f64,
    pub train_sentences: usize,
    /// Gold spans wider than the span-width limit in the training data.
    pub unlearnable_gold_spans: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into `params.bin`.
    pub offset: usize,
    /// Number of elements.
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    config: TrainConfig,
    inventory: TagInventory,
    levels: LevelSet,
    vocab: Vocab,
    languages: Vec<String>,
    namespaced: bool,
    multitask: bool,
    provenance: Provenance,
    tensors: Vec<TensorEntry>,
    params_sha256: String,
}

/// Level prediction for one sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelPrediction {
    pub name: String,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub config: TrainConfig,
    pub inventory: TagInventory,
    pub levels: LevelSet,
    pub vocab: Vocab,
    /// Languages accepted at inference time.
    pub languages: Vec<String>,
    /// Tags carry a `lang:` prefix (multilingual training).
    pub namespaced: bool,
    pub provenance: Provenance,
    pub model: SpanModel<f32>,
}

impl ModelCheckpoint {
    /// Freshly initialized model for the given inventories.
    pub fn new(
        config: TrainConfig,
        inventory: TagInventory,
        vocab: Vocab,
        languages: Vec<String>,
        namespaced: bool,
    ) -> Result<Self> {
        config.validate()?;
        let levels = config.level_set()?;
        let model = SpanModel::new(
            config.encoder_config(vocab.len()),
            inventory.len(),
            config.multitask.then_some(levels.len()),
            config.max_span_width,
            config.seed,
            config.zero_init_heads,
        )?;
        Ok(ModelCheckpoint {
            config,
            inventory,
            levels,
            vocab,
            languages,
            namespaced,
            provenance: Provenance::default(),
            model,
        })
    }

    pub fn multitask(&self) -> bool {
        self.model.level_head.is_some()
    }

    pub fn supports_language(&self, lang: &str) -> bool {
        self.languages.iter().any(|l| l == lang)
    }

    /// Gold tag as the model sees it: namespaced if the checkpoint is, then
    /// collapsed to UNK if unknown.
    pub fn model_tag(&self, lang: &str, tag: &str) -> String {
        let prefix = format!("{lang}:");
        let tag = if self.namespaced && !tag.starts_with(&prefix) {
            namespaced(lang, tag)
        } else {
            tag.to_string()
        };
        self.inventory.resolve(&tag).to_string()
    }

    /// Vocabulary ids of the first `max_len` tokens.
    pub fn token_ids(&self, tokens: &[Token]) -> Vec<usize> {
        let n = tokens.len().min(self.config.max_len);
        self.vocab.encode(tokens[..n].iter().map(|t| t.text.as_str()))
    }

    pub fn encode(&self, tokens: &[Token]) -> Result<EncoderOutput<f32>> {
        self.model.encoder.encode(&self.token_ids(tokens))
    }

    /// Decoded spans and (for multitask models) the argmax level.
    pub fn predict(
        &self,
        output: &EncoderOutput<f32>,
        min_prob: f64,
    ) -> Result<(Vec<DecodedSpan>, Option<LevelPrediction>)> {
        let spans = if output.is_empty() {
            Vec::new()
        } else {
            decode(&self.model.score(output), &self.inventory, min_prob)
        };
        let level = match &self.model.level_head {
            None => None,
            Some(_) => {
                let probs = self.model.level_probs(&output.pooled)?;
                let best = crate::span_model::argmax(&probs);
                Some(LevelPrediction {
                    name: self.levels.name(best).to_string(),
                    prob: probs[best] as f64,
                })
            }
        };
        Ok((spans, level))
    }

    fn tensors(&self) -> Result<(Vec<TensorEntry>, Vec<u8>)> {
        let mut entries = Vec::new();
        let mut bytes = Vec::with_capacity(self.model.num_params() * 4);
        let mut names = HashSet::new();
        for p in self.model.params() {
            if !names.insert(p.name.as_str()) {
                return Err(Error::Checkpoint(format!("duplicate tensor name {}", p.name)));
            }
            entries.push(TensorEntry {
                name: p.name.clone(),
                shape: p.value.shape.clone(),
                offset: bytes.len(),
                len: p.value.len(),
            });
            for v in &p.value.data {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok((entries, bytes))
    }

    /// The two files' contents: `(manifest.json, params.bin)`.
    pub fn to_bytes(&self) -> Result<(Vec<u8>, Vec<u8>)> {
        let (tensors, params) = self.tensors()?;
        let manifest = Manifest {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            inventory: self.inventory.clone(),
            levels: self.levels.clone(),
            vocab: self.vocab.clone(),
            languages: self.languages.clone(),
            namespaced: self.namespaced,
            multitask: self.multitask(),
            provenance: self.provenance.clone(),
            tensors,
            params_sha256: hex::encode(Sha256::digest(&params)),
        };
        let mut json = serde_json::to_vec_pretty(&manifest).map_err(|e| Error::Checkpoint(e.to_string()))?;
        json.push(b'\n');
        Ok((json, params))
    }

    pub fn from_bytes(manifest: &[u8], params: &[u8]) -> Result<Self> {
        let m: Manifest = serde_json::from_slice(manifest)
            .map_err(|e| Error::Checkpoint(format!("invalid manifest: {e}")))?;
        if m.format != CHECKPOINT_FORMAT || m.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint format {} v{}",
                m.format, m.version
            )));
        }
        if hex::encode(Sha256::digest(params)) != m.params_sha256 {
            return Err(Error::Checkpoint("params.bin does not match the manifest checksum".into()));
        }
        if m.multitask != m.config.multitask {
            return Err(Error::Checkpoint("manifest multitask flag disagrees with config".into()));
        }
        let mut ckpt = ModelCheckpoint::new(m.config, m.inventory, m.vocab, m.languages, m.namespaced)?;
        if ckpt.levels != m.levels {
            return Err(Error::Checkpoint("manifest level set disagrees with config".into()));
        }
        ckpt.provenance = m.provenance;

        let mut expected = 0;
        let mut missing = Vec::new();
        ckpt.model.visit_params_mut(&mut |p| {
            expected += 1;
            let Some(entry) = m.tensors.iter().find(|e| e.name == p.name) else {
                missing.push(p.name.clone());
                return;
            };
            if entry.shape != p.value.shape || entry.len != p.value.len() {
                missing.push(format!("{} (shape {:?})", p.name, entry.shape));
                return;
            }
            let Some(raw) = params.get(entry.offset..entry.offset + entry.len * 4) else {
                missing.push(format!("{} (out of bounds)", p.name));
                return;
            };
            let data = raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            p.value = Tensor {
                shape: entry.shape.clone(),
                data,
            };
        });
        if !missing.is_empty() {
            return Err(Error::Checkpoint(format!("bad or missing tensors: {}", missing.join(", "))));
        }
        if expected != m.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "manifest lists {} tensors, model has {expected}",
                m.tensors.len()
            )));
        }
        Ok(ckpt)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let (manifest, params) = self.to_bytes()?;
        for (name, bytes) in [(MANIFEST_FILE, &manifest), (PARAMS_FILE, &params)] {
            let path = dir.join(name);
            std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let read = |name: &str| {
            let path = dir.join(name);
            std::fs::read(&path).map_err(|e| Error::io(&path, e))
        };
        Self::from_bytes(&read(MANIFEST_FILE)?, &read(PARAMS_FILE)?)
    }

    /// SHA-256 of the manifest, which itself pins the parameter bytes.
    pub fn checksum(&self) -> Result<String> {
        let (manifest, _) = self.to_bytes()?;
        Ok(hex::encode(Sha256::digest(&manifest)))
    }

    /// Softmax level distribution (multitask checkpoints only).
    pub fn level_distribution(&self, output: &EncoderOutput<f32>) -> Result<Vec<f64>> {
        Ok(ops::softmax(&self.model.level_logits(&output.pooled)?)
            .into_iter()
            .map(f64::from)
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_tag_inventory, tokenize, LangMode};
    use crate::fixtures;

    fn tiny() -> ModelCheckpoint {
        let corpus = fixtures::english(12, 1);
        let config = TrainConfig {
            d: 8,
            n_heads: 2,
            n_layers: 1,
            d_ffn: 16,
            multitask: true,
            ..TrainConfig::default()
        };
        ModelCheckpoint::new(
            config,
            build_tag_inventory(&corpus, 1).unwrap(),
            Vocab::from_sentences(&corpus),
            vec!["en".into()],
            false,
        )
        .unwrap()
    }

    #[test]
    fn save_load_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let mut ckpt = tiny();
        ckpt.provenance.val_labeled_f1 = 0.1 + 0.2;
        ckpt.save(dir.path()).unwrap();
        let loaded = ModelCheckpoint::load(dir.path()).unwrap();
        assert_eq!(loaded, ckpt);
        assert_eq!(loaded.to_bytes().unwrap(), ckpt.to_bytes().unwrap());
        assert_eq!(loaded.checksum().unwrap(), ckpt.checksum().unwrap());
        assert_eq!(loaded.inventory.labels(), ckpt.inventory.labels());
    }

    #[test]
    fn tensor_index_is_contiguous() {
        let (manifest, params) = tiny().to_bytes().unwrap();
        let v: serde_json::Value = serde_json::from_slice(&manifest).unwrap();
        let mut offset = 0;
        for t in v["tensors"].as_array().unwrap() {
            assert_eq!(t["offset"].as_u64().unwrap() as usize, offset);
            let len = t["len"].as_u64().unwrap() as usize;
            let shape: usize = t["shape"].as_array().unwrap().iter().map(|d| d.as_u64().unwrap() as usize).product();
            assert_eq!(shape, len);
            offset += 4 * len;
        }
        assert_eq!(offset, params.len());
    }

    #[test]
    fn corrupt_files_rejected() {
        let (manifest, mut params) = tiny().to_bytes().unwrap();
        params[0] ^= 1;
        assert!(matches!(ModelCheckpoint::from_bytes(&manifest, &params), Err(Error::Checkpoint(_))));
        assert!(ModelCheckpoint::from_bytes(b"{", &params).is_err());
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(ModelCheckpoint::load(dir.path()), Err(Error::Io { .. })));
    }

    #[test]
    fn predict_reports_level_in_level_set() {
        let ckpt = tiny();
        let out = ckpt.encode(&tokenize("the cat eats a fish .", LangMode::Auto)).unwrap();
        let (spans, level) = ckpt.predict(&out, 0.0).unwrap();
        let level = level.unwrap();
        assert!(ckpt.levels.ordinal(&level.name).is_ok());
        assert!(level.prob > 0.0 && level.prob <= 1.0);
        for s in spans {
            assert!(s.start <= s.end && s.end < 6 && s.tag != crate::corpus::EMPTY_TAG);
        }
    }

    #[test]
    fn namespaced_gold_tags() {
        let mut ckpt = tiny();
        ckpt.namespaced = true;
        ckpt.inventory = TagInventory::from_tags(vec!["en:PP".into()], 1).unwrap();
        assert_eq!(ckpt.model_tag("en", "PP"), "en:PP");
        assert_eq!(ckpt.model_tag("en", "en:PP"), "en:PP");
        assert_eq!(ckpt.model_tag("en", "XX"), crate::corpus::UNK_TAG);
    }
}
