//! Training configuration and its flat `key = value` file format.
//!
//! ```text
//! # comments start with '#'
//! batch_size = 50
//! alpha_grid = 0.1, 0.3, 1.0, 3.0
//! multitask = true
//! ```
//!
//! Every key is optional and named after the [`TrainConfig`] field it sets.
//! Lists are comma-separated; an empty value clears an optional field.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{LevelSet, DEFAULT_LEVELS, DEFAULT_MAX_LEN};
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::neural::{Activation, AdamConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Sentences per optimizer step.
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub max_span_width: usize,
    pub max_len: usize,
    pub min_tag_freq: usize,
    /// Weight of the level loss in the joint objective.
    pub alpha: f64,
    pub alpha_grid: Vec<f64>,
    pub seed: u64,
    pub d: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ffn: usize,
    pub dropout: f64,
    pub activation: Activation,
    /// Train the level head jointly with the span head.
    pub multitask: bool,
    /// Languages the model accepts; empty means "those seen in training".
    pub languages: Vec<String>,
    pub levels: Vec<String>,
    /// Global gradient-norm clip.
    pub grad_clip: f64,
    pub freeze_encoder: bool,
    /// Fraction of empty-tag spans kept in the loss (1 keeps all).
    pub neg_sample_rate: f64,
    /// Initialize both classifier heads to zero instead of Xavier.
    pub zero_init_heads: bool,
    /// Precomputed encoder outputs used instead of the encoder.
    pub embeddings: Option<String>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        TrainConfig {
            batch_size: 50,
            epochs: 100,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            max_span_width: 30,
            max_len: DEFAULT_MAX_LEN,
            min_tag_freq: 2,
            alpha: 1.0,
            alpha_grid: vec![0.1, 0.3, 1.0, 3.0],
            seed: 0,
            d: 64,
            n_layers: 2,
            n_heads: 4,
            d_ffn: 256,
            dropout: 0.1,
            activation: Activation::Gelu,
            multitask: false,
            languages: Vec::new(),
            levels: DEFAULT_LEVELS.iter().map(|s| s.to_string()).collect(),
            grad_clip: 5.0,
            freeze_encoder: false,
            neg_sample_rate: 1.0,
            zero_init_heads: false,
            embeddings: None,
        }
    }
}

fn check(ok: bool, msg: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(msg.to_string()))
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        check(self.batch_size >= 1, "batch_size must be at least 1")?;
        check(self.epochs >= 1, "epochs must be at least 1")?;
        check(self.alpha.is_finite() && self.alpha >= 0.0, "alpha must be a finite value ≥ 0")?;
        check(!self.alpha_grid.is_empty(), "alpha_grid must not be empty")?;
        check(
            self.alpha_grid.iter().all(|a| a.is_finite() && *a >= 0.0),
            "alpha_grid values must be finite and ≥ 0",
        )?;
        check(self.lr > 0.0 && self.lr.is_finite(), "lr must be positive")?;
        check((0.0..1.0).contains(&self.beta1), "beta1 must be in [0, 1)")?;
        check((0.0..1.0).contains(&self.beta2), "beta2 must be in [0, 1)")?;
        check(self.eps > 0.0, "eps must be positive")?;
        check(self.max_span_width >= 1, "max_span_width must be at least 1")?;
        check(self.max_len >= 1, "max_len must be at least 1")?;
        check(self.min_tag_freq >= 1, "min_tag_freq must be at least 1")?;
        check(self.grad_clip > 0.0, "grad_clip must be positive")?;
        check(
            self.neg_sample_rate > 0.0 && self.neg_sample_rate <= 1.0,
            "neg_sample_rate must be in (0, 1]",
        )?;
        self.level_set()?;
        self.encoder_config(2).validate()
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn encoder_config(&self, vocab_size: usize) -> EncoderConfig {
        EncoderConfig {
            vocab_size,
            d: self.d,
            n_layers: self.n_layers,
            n_heads: self.n_heads,
            d_ffn: self.d_ffn,
            max_len: self.max_len,
            dropout: self.dropout,
            activation: self.activation,
        }
    }

    pub fn level_set(&self) -> Result<LevelSet> {
        LevelSet::new(self.levels.clone())
    }

    /// Parses the flat format, starting from the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = TrainConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            config
                .set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Sets one field from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("invalid value {v:?} for {key}"))
        }
        fn list<T: FromStr>(key: &str, v: &str) -> std::result::Result<Vec<T>, String> {
            v.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| num(key, s))
                .collect()
        }
        match key {
            "batch_size" => self.batch_size = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "lr" => self.lr = num(key, value)?,
            "beta1" => self.beta1 = num(key, value)?,
            "beta2" => self.beta2 = num(key, value)?,
            "eps" => self.eps = num(key, value)?,
            "max_span_width" => self.max_span_width = num(key, value)?,
            "max_len" => self.max_len = num(key, value)?,
            "min_tag_freq" => self.min_tag_freq = num(key, value)?,
            "alpha" => self.alpha = num(key, value)?,
            "alpha_grid" => self.alpha_grid = list(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "d" => self.d = num(key, value)?,
            "n_layers" => self.n_layers = num(key, value)?,
            "n_heads" => self.n_heads = num(key, value)?,
            "d_ffn" => self.d_ffn = num(key, value)?,
            "dropout" => self.dropout = num(key, value)?,
            "activation" => self.activation = value.parse()?,
            "multitask" => self.multitask = num(key, value)?,
            "languages" => self.languages = list(key, value)?,
            "levels" => self.levels = list(key, value)?,
            "grad_clip" => self.grad_clip = num(key, value)?,
            "freeze_encoder" => self.freeze_encoder = num(key, value)?,
            "neg_sample_rate" => self.neg_sample_rate = num(key, value)?,
            "zero_init_heads" => self.zero_init_heads = num(key, value)?,
            "embeddings" => self.embeddings = (!value.is_empty()).then(|| value.to_string()),
            other => return Err(format!("unknown key {other:?}")),
        }
        Ok(())
    }

    /// Renders every field in the flat format; `parse` reads it back to an
    /// equal config.
    pub fn to_flat(&self) -> String {
        fn join<T: ToString>(xs: &[T]) -> String {
            xs.iter().map(T::to_string).collect::<Vec<_>>().join(", ")
        }
        let activation = match self.activation {
            Activation::Gelu => "gelu",
            Activation::Relu => "relu",
        };
        let mut out = String::new();
        let fields: [(&str, String); 26] = [
            ("batch_size", self.batch_size.to_string()),
            ("epochs", self.epochs.to_string()),
            ("lr", self.lr.to_string()),
            ("beta1", self.beta1.to_string()),
            ("beta2", self.beta2.to_string()),
            ("eps", self.eps.to_string()),
            ("max_span_width", self.max_span_width.to_string()),
            ("max_len", self.max_len.to_string()),
            ("min_tag_freq", self.min_tag_freq.to_string()),
            ("alpha", self.alpha.to_string()),
            ("alpha_grid", join(&self.alpha_grid)),
            ("seed", self.seed.to_string()),
            ("d", self.d.to_string()),
            ("n_layers", self.n_layers.to_string()),
            ("n_heads", self.n_heads.to_string()),
            ("d_ffn", self.d_ffn.to_string()),
            ("dropout", self.dropout.to_string()),
            ("activation", activation.to_string()),
            ("multitask", self.multitask.to_string()),
            ("languages", join(&self.languages)),
            ("levels", join(&self.levels)),
            ("grad_clip", self.grad_clip.to_string()),
            ("freeze_encoder", self.freeze_encoder.to_string()),
            ("neg_sample_rate", self.neg_sample_rate.to_string()),
            ("zero_init_heads", self.zero_init_heads.to_string()),
            ("embeddings", self.embeddings.clone().unwrap_or_default()),
        ];
        for (k, v) in fields {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}
