//! Transformer contextualizer producing one vector per token plus a pooled
//! sentence vector.
//!
//! A sequence-start marker is prepended to the input; its final-layer state
//! is the pooled vector. Span indices always refer to content tokens, so
//! `hidden[i]` is the state of input token `i`, not of the marker.
//!
//! Layers are pre-norm:
//!
//! ```text
//! x = x + dropout(attn(norm(x)))
//! x = x + dropout(ffn(norm(x)))
//! ```
//!
//! followed by a final layer norm.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{DEFAULT_MAX_LEN, VOCAB_START_ID};
use crate::error::{Error, Result};
use crate::neural::layers::{AttentionCache, FeedForwardCache, LayerNormCache};
use crate::neural::{
    ops, Activation, Embedding, FeedForward, Float, LayerNorm, MultiHeadAttention, Param,
    Parameterized, Tensor,
};

pub const EMBEDDING_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub d: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ffn: usize,
    pub max_len: usize,
    pub dropout: f64,
    #[serde(default)]
    pub activation: Activation,
}

impl EncoderConfig {
    /// Desk-scale defaults: d=64, 2 layers, 4 heads, d_ffn=256.
    pub fn desk(vocab_size: usize) -> Self {
        EncoderConfig {
            vocab_size,
            d: 64,
            n_layers: 2,
            n_heads: 4,
            d_ffn: 256,
            max_len: DEFAULT_MAX_LEN,
            dropout: 0.1,
            activation: Activation::Gelu,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.n_heads == 0 || self.d % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "d={} must be a positive multiple of n_heads={}",
                self.d, self.n_heads
            )));
        }
        if self.max_len == 0 {
            return Err(Error::Config("max_len must be at least 1".into()));
        }
        if self.vocab_size < 2 {
            return Err(Error::Config("vocabulary must include the reserved tokens".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput<F> {
    /// `L × d`, one row per content token.
    pub hidden: Tensor<F>,
    /// State of the prepended sequence-start position.
    pub pooled: Vec<F>,
}

impl<F: Float> EncoderOutput<F> {
    /// Splits an `(L+1) × d` state matrix whose row 0 is the marker.
    pub fn from_states(states: &Tensor<F>) -> Self {
        let d = states.cols();
        let n = states.rows();
        EncoderOutput {
            pooled: states.row(0).to_vec(),
            hidden: Tensor {
                shape: vec![n - 1, d],
                data: states.data[d..].to_vec(),
            },
        }
    }

    pub fn len(&self) -> usize {
        self.hidden.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.hidden.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.pooled.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer<F> {
    pub attn_norm: LayerNorm<F>,
    pub attn: MultiHeadAttention<F>,
    pub ffn_norm: LayerNorm<F>,
    pub ffn: FeedForward<F>,
}

struct LayerCache<F> {
    attn_norm: LayerNormCache<F>,
    attn_in: Vec<F>,
    attn: AttentionCache<F>,
    attn_mask: Option<Vec<F>>,
    ffn_norm: LayerNormCache<F>,
    ffn_in: Vec<F>,
    ffn: FeedForwardCache<F>,
    ffn_mask: Option<Vec<F>>,
}

pub struct EncoderCache<F> {
    ids: Vec<usize>,
    embed_mask: Option<Vec<F>>,
    layers: Vec<LayerCache<F>>,
    final_norm: LayerNormCache<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoder<F> {
    pub config: EncoderConfig,
    pub token_embedding: Embedding<F>,
    pub position_embedding: Embedding<F>,
    pub layers: Vec<EncoderLayer<F>>,
    pub final_norm: LayerNorm<F>,
}

impl<F: Float> Encoder<F> {
    pub fn new<R: Rng + ?Sized>(config: EncoderConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let d = config.d;
        let token_embedding = Embedding::normal("encoder.token_embedding", config.vocab_size, d, EMBEDDING_STD, rng);
        let position_embedding =
            Embedding::normal("encoder.position_embedding", config.max_len + 1, d, EMBEDDING_STD, rng);
        let layers = (0..config.n_layers)
            .map(|i| {
                let p = format!("encoder.layers.{i}");
                EncoderLayer {
                    attn_norm: LayerNorm::new(&format!("{p}.attn_norm"), d),
                    attn: MultiHeadAttention::new(&format!("{p}.attn"), d, config.n_heads, rng),
                    ffn_norm: LayerNorm::new(&format!("{p}.ffn_norm"), d),
                    ffn: FeedForward::new(&format!("{p}.ffn"), d, config.d_ffn, config.activation, rng),
                }
            })
            .collect();
        Ok(Encoder {
            final_norm: LayerNorm::new("encoder.final_norm", d),
            config,
            token_embedding,
            position_embedding,
            layers,
        })
    }

    pub fn dim(&self) -> usize {
        self.config.d
    }

    fn check_input(&self, ids: &[usize]) -> Result<()> {
        if ids.is_empty() || ids.len() > self.config.max_len {
            return Err(Error::SequenceLength {
                len: ids.len(),
                max_len: self.config.max_len,
            });
        }
        if let Some(&id) = ids.iter().find(|&&id| id >= self.config.vocab_size) {
            return Err(Error::OutOfVocab {
                id,
                vocab_size: self.config.vocab_size,
            });
        }
        Ok(())
    }

    /// Eval-mode encoding (no dropout).
    pub fn encode(&self, ids: &[usize]) -> Result<EncoderOutput<F>> {
        Ok(EncoderOutput::from_states(&self.states(ids)?))
    }

    /// Final-layer states of all `L+1` positions, marker first.
    pub fn states(&self, ids: &[usize]) -> Result<Tensor<F>> {
        let (states, _) = self.forward(ids, None::<&mut rand_chacha::ChaCha8Rng>)?;
        Ok(states)
    }

    /// Forward pass keeping activations for [`Encoder::backward`]. Dropout is
    /// applied only when `dropout_rng` is given.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        ids: &[usize],
        mut dropout_rng: Option<&mut R>,
    ) -> Result<(Tensor<F>, EncoderCache<F>)> {
        self.check_input(ids)?;
        let d = self.dim();
        let mut full = Vec::with_capacity(ids.len() + 1);
        full.push(VOCAB_START_ID);
        full.extend_from_slice(ids);
        let n = full.len();
        let positions: Vec<usize> = (0..n).collect();
        let p = self.config.dropout;

        let mut x = self.token_embedding.forward(&full);
        for (a, b) in x.iter_mut().zip(self.position_embedding.forward(&positions)) {
            *a = *a + b;
        }
        let mut mask = |len: usize| -> Option<Vec<F>> {
            match dropout_rng.as_mut() {
                Some(rng) if p > 0.0 => Some(ops::dropout_mask(*rng, len, p)),
                _ => None,
            }
        };
        let embed_mask = mask(n * d);
        apply_mask(&mut x, &embed_mask);

        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (attn_in, attn_norm) = layer.attn_norm.forward(&x, n);
            let (mut attn_out, attn) = layer.attn.forward(&attn_in, n);
            let attn_mask = mask(n * d);
            apply_mask(&mut attn_out, &attn_mask);
            for (a, b) in x.iter_mut().zip(&attn_out) {
                *a = *a + *b;
            }
            let (ffn_in, ffn_norm) = layer.ffn_norm.forward(&x, n);
            let (mut ffn_out, ffn) = layer.ffn.forward(&ffn_in, n);
            let ffn_mask = mask(n * d);
            apply_mask(&mut ffn_out, &ffn_mask);
            for (a, b) in x.iter_mut().zip(&ffn_out) {
                *a = *a + *b;
            }
            caches.push(LayerCache {
                attn_norm,
                attn_in,
                attn,
                attn_mask,
                ffn_norm,
                ffn_in,
                ffn,
                ffn_mask,
            });
        }
        let (out, final_norm) = self.final_norm.forward(&x, n);
        Ok((
            Tensor {
                shape: vec![n, d],
                data: out,
            },
            EncoderCache {
                ids: full,
                embed_mask,
                layers: caches,
                final_norm,
            },
        ))
    }

    /// Accumulates parameter gradients given `d_states`, the gradient with
    /// respect to all `(L+1) × d` output states.
    pub fn backward(&mut self, cache: &EncoderCache<F>, d_states: &[F]) {
        let n = cache.ids.len();
        let mut dx = self.final_norm.backward(&cache.final_norm, d_states);
        for (layer, lc) in self.layers.iter_mut().zip(&cache.layers).rev() {
            let mut dz = dx.clone();
            apply_mask(&mut dz, &lc.ffn_mask);
            let d_ffn_in = layer.ffn.backward(&lc.ffn_in, &lc.ffn, &dz, n);
            let d_mid = layer.ffn_norm.backward(&lc.ffn_norm, &d_ffn_in);
            for (a, b) in dx.iter_mut().zip(d_mid) {
                *a = *a + b;
            }
            let mut dy = dx.clone();
            apply_mask(&mut dy, &lc.attn_mask);
            let d_attn_in = layer.attn.backward(&lc.attn_in, &lc.attn, &dy, n);
            let d_in = layer.attn_norm.backward(&lc.attn_norm, &d_attn_in);
            for (a, b) in dx.iter_mut().zip(d_in) {
                *a = *a + b;
            }
        }
        apply_mask(&mut dx, &cache.embed_mask);
        self.token_embedding.backward(&cache.ids, &dx);
        let positions: Vec<usize> = (0..n).collect();
        self.position_embedding.backward(&positions, &dx);
    }

    pub fn cast<G: Float>(&self) -> Encoder<G> {
        let mut out = Encoder::<G> {
            config: self.config.clone(),
            token_embedding: Embedding {
                table: self.token_embedding.table.cast(),
            },
            position_embedding: Embedding {
                table: self.position_embedding.table.cast(),
            },
            layers: Vec::new(),
            final_norm: cast_norm(&self.final_norm),
        };
        for l in &self.layers {
            out.layers.push(EncoderLayer {
                attn_norm: cast_norm(&l.attn_norm),
                attn: MultiHeadAttention {
                    query: cast_linear(&l.attn.query),
                    key: cast_linear(&l.attn.key),
                    value: cast_linear(&l.attn.value),
                    output: cast_linear(&l.attn.output),
                    heads: l.attn.heads,
                },
                ffn_norm: cast_norm(&l.ffn_norm),
                ffn: FeedForward {
                    up: cast_linear(&l.ffn.up),
                    down: cast_linear(&l.ffn.down),
                    activation: l.ffn.activation,
                },
            });
        }
        out
    }
}

pub(crate) fn cast_linear<F: Float, G: Float>(l: &crate::neural::Linear<F>) -> crate::neural::Linear<G> {
    crate::neural::Linear {
        weight: l.weight.cast(),
        bias: l.bias.cast(),
    }
}

fn cast_norm<F: Float, G: Float>(l: &LayerNorm<F>) -> LayerNorm<G> {
    LayerNorm {
        gamma: l.gamma.cast(),
        beta: l.beta.cast(),
    }
}

fn apply_mask<F: Float>(x: &mut [F], mask: &Option<Vec<F>>) {
    if let Some(m) = mask {
        for (a, &b) in x.iter_mut().zip(m) {
            *a = *a * b;
        }
    }
}

impl<F: Float> Parameterized<F> for Encoder<F> {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a Param<F>)) {
        self.token_embedding.visit_params(f);
        self.position_embedding.visit_params(f);
        for l in &self.layers {
            l.attn_norm.visit_params(f);
            l.attn.visit_params(f);
            l.ffn_norm.visit_params(f);
            l.ffn.visit_params(f);
        }
        self.final_norm.visit_params(f);
    }

    fn visit_params_mut<'a>(&'a mut self, f: &mut dyn FnMut(&'a mut Param<F>)) {
        self.token_embedding.visit_params_mut(f);
        self.position_embedding.visit_params_mut(f);
        for l in &mut self.layers {
            l.attn_norm.visit_params_mut(f);
            l.attn.visit_params_mut(f);
            l.ffn_norm.visit_params_mut(f);
            l.ffn.visit_params_mut(f);
        }
        self.final_norm.visit_params_mut(f);
    }
}

const EMBEDDING_MAGIC: &[u8; 6] = b"GPEMB1";

/// Precomputed contextual vectors keyed by sentence id, standing in for an
/// external pretrained contextualizer.
///
/// Binary little-endian layout: magic `GPEMB1`, `u32` d, then per record a
/// `u16` id length, the UTF-8 id, `u32` L and `(L+1)·d` `f32` values (row 0
/// pooled, rows 1..=L hidden).
#[derive(Debug, Clone, Default)]
pub struct EmbeddingStore {
    pub d: usize,
    records: HashMap<String, EncoderOutput<f32>>,
}

impl EmbeddingStore {
    pub fn new(d: usize) -> Self {
        EmbeddingStore {
            d,
            records: HashMap::new(),
        }
    }

    pub fn insert(&mut self, id: impl Into<String>, output: EncoderOutput<f32>) -> Result<()> {
        if output.dim() != self.d || output.hidden.cols() != self.d {
            return Err(Error::Embedding(format!(
                "record dimension {} does not match store dimension {}",
                output.dim(),
                self.d
            )));
        }
        self.records.insert(id.into(), output);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Result<&EncoderOutput<f32>> {
        self.records
            .get(id)
            .ok_or_else(|| Error::Embedding(format!("no entry for sentence {id:?}")))
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(file))
    }

    pub fn read(mut r: impl Read) -> Result<Self> {
        let bad = |m: &str| Error::Embedding(m.to_string());
        let mut magic = [0u8; 6];
        r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if &magic != EMBEDDING_MAGIC {
            return Err(bad("bad magic"));
        }
        let d = read_u32(&mut r).ok_or_else(|| bad("truncated header"))? as usize;
        let mut store = EmbeddingStore::new(d);
        loop {
            let mut len = [0u8; 2];
            match r.read(&mut len[..1]) {
                Ok(0) => break,
                Ok(_) => r.read_exact(&mut len[1..]).map_err(|_| bad("truncated record"))?,
                Err(e) => return Err(Error::Embedding(e.to_string())),
            }
            let mut id = vec![0u8; u16::from_le_bytes(len) as usize];
            r.read_exact(&mut id).map_err(|_| bad("truncated record"))?;
            let id = String::from_utf8(id).map_err(|_| bad("id is not UTF-8"))?;
            let l = read_u32(&mut r).ok_or_else(|| bad("truncated record"))? as usize;
            let mut buf = vec![0u8; (l + 1) * d * 4];
            r.read_exact(&mut buf).map_err(|_| bad("truncated record"))?;
            let data = buf
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let states = Tensor::from_vec(&[l + 1, d], data)?;
            store.records.insert(id, EncoderOutput::from_states(&states));
        }
        Ok(store)
    }

    /// Writes records sorted by id.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(EMBEDDING_MAGIC)?;
        w.write_all(&(self.d as u32).to_le_bytes())?;
        let mut ids: Vec<&String> = self.records.keys().collect();
        ids.sort();
        for id in ids {
            let rec = &self.records[id];
            w.write_all(&(id.len() as u16).to_le_bytes())?;
            w.write_all(id.as_bytes())?;
            w.write_all(&(rec.len() as u32).to_le_bytes())?;
            for v in rec.pooled.iter().chain(&rec.hidden.data) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }
}

fn read_u32(r: &mut impl Read) -> Option<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).ok()?;
    Some(u32::from_le_bytes(b))
}

/// Looks up `sentence_id` in an embedding file, checking its dimension
/// against the model's `d`.
pub fn load_precomputed(path: impl AsRef<Path>, sentence_id: &str, d: usize) -> Result<EncoderOutput<f32>> {
    let store = EmbeddingStore::open(path)?;
    if store.d != d {
        return Err(Error::Embedding(format!(
            "file dimension {} does not match model dimension {d}",
            store.d
        )));
    }
    store.get(sentence_id).cloned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::init::stream_rng;

    fn tiny(vocab: usize) -> EncoderConfig {
        EncoderConfig {
            vocab_size: vocab,
            d: 32,
            n_layers: 2,
            n_heads: 4,
            d_ffn: 64,
            max_len: 16,
            dropout: 0.1,
            activation: Activation::Gelu,
        }
    }

    #[test]
    fn shapes_and_determinism() {
        let enc = Encoder::<f32>::new(tiny(20), &mut stream_rng(0, "encoder")).unwrap();
        let ids = [2, 3, 4, 5, 6, 7, 8];
        let a = enc.encode(&ids).unwrap();
        assert_eq!(a.hidden.shape, [7, 32]);
        assert_eq!(a.pooled.len(), 32);
        let b = enc.encode(&ids).unwrap();
        assert_eq!(a, b);
        assert!(a.hidden.all_finite());
    }

    #[test]
    fn pooled_is_marker_state() {
        let enc = Encoder::<f32>::new(tiny(20), &mut stream_rng(1, "encoder")).unwrap();
        let states = enc.states(&[4, 5, 6]).unwrap();
        let out = enc.encode(&[4, 5, 6]).unwrap();
        assert_eq!(out.pooled, states.row(0));
        assert_eq!(out.hidden.row(0), states.row(1));
    }

    #[test]
    fn input_bounds() {
        let enc = Encoder::<f32>::new(tiny(20), &mut stream_rng(0, "encoder")).unwrap();
        assert!(matches!(enc.encode(&[]), Err(Error::SequenceLength { .. })));
        assert!(matches!(enc.encode(&[2; 17]), Err(Error::SequenceLength { .. })));
        assert!(enc.encode(&[2; 16]).is_ok());
        assert!(matches!(enc.encode(&[2, 20]), Err(Error::OutOfVocab { id: 20, .. })));
    }

    #[test]
    fn swapping_tokens_changes_output() {
        for seed in 0..20 {
            let enc = Encoder::<f32>::new(tiny(20), &mut stream_rng(seed, "encoder")).unwrap();
            let a = enc.encode(&[2, 3, 4, 5]).unwrap();
            let b = enc.encode(&[3, 2, 4, 5]).unwrap();
            // positions 2 and 3 hold the same tokens in both inputs; only
            // positional information can distinguish them here
            assert_ne!(a.hidden.row(2), b.hidden.row(2), "seed {seed}");
            assert_ne!(a.hidden, b.hidden, "seed {seed}");
        }
    }

    #[test]
    fn head_divisibility_checked() {
        let mut cfg = tiny(10);
        cfg.n_heads = 5;
        assert!(Encoder::<f32>::new(cfg, &mut stream_rng(0, "e")).is_err());
    }

    #[test]
    fn dropout_only_in_training() {
        let enc = Encoder::<f32>::new(tiny(20), &mut stream_rng(2, "encoder")).unwrap();
        let eval = enc.states(&[2, 3, 4]).unwrap();
        let mut rng = stream_rng(2, "dropout");
        let (train, _) = enc.forward(&[2, 3, 4], Some(&mut rng)).unwrap();
        assert_ne!(eval, train);
    }

    fn sample_output(l: usize, d: usize) -> EncoderOutput<f32> {
        let states =
            Tensor::from_vec(&[l + 1, d], (0..(l + 1) * d).map(|i| i as f32 * 0.5).collect()).unwrap();
        EncoderOutput::from_states(&states)
    }

    #[test]
    fn embedding_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.bin");
        let mut store = EmbeddingStore::new(16);
        store.insert("s1", sample_output(5, 16)).unwrap();
        store.insert("s2", sample_output(2, 16)).unwrap();
        assert!(store.insert("bad", sample_output(2, 8)).is_err());
        store.save(&path).unwrap();

        let out = load_precomputed(&path, "s1", 16).unwrap();
        assert_eq!(out.len(), 5);
        assert_eq!(out, sample_output(5, 16));
        assert!(load_precomputed(&path, "s1", 32).is_err());
        assert!(load_precomputed(&path, "zz", 16).is_err());
    }

    #[test]
    fn embedding_file_layout() {
        let mut store = EmbeddingStore::new(2);
        store.insert("a", sample_output(1, 2)).unwrap();
        let mut bytes = Vec::new();
        store.write(&mut bytes).unwrap();
        assert_eq!(&bytes[..6], b"GPEMB1");
        assert_eq!(&bytes[6..10], &2u32.to_le_bytes());
        assert_eq!(&bytes[10..12], &1u16.to_le_bytes());
        assert_eq!(bytes[12], b'a');
        assert_eq!(&bytes[13..17], &1u32.to_le_bytes());
        assert_eq!(bytes.len(), 17 + 2 * 2 * 4);
        assert!(EmbeddingStore::read(&bytes[..bytes.len() - 1]).is_err());
        assert!(EmbeddingStore::read(&b"XXXXXX"[..]).is_err());
    }
}
