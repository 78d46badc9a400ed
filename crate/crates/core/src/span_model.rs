//! Exhaustive span classification on top of the encoder.
//!
//! Every span `(i, j)` with `j - i + 1 <= max_width` is represented as
//! `[h_i ; h_j ; h_i - h_j]` and classified by a single linear layer followed
//! by a softmax over `{empty, UNK, tags...}`. An optional level head maps the
//! pooled vector to difficulty levels. The training objective for one
//! sentence is
//!
//! ```text
//! L = -Σ_{(i,j)} log p(t_ij | i, j)  +  α · (-log p(level | pooled))
//! ```
//!
//! where `t_ij` is the gold tag of the span, or the empty tag when the span
//! is not annotated.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Sentence, TagInventory, EMPTY_ID};
use crate::encoder::{cast_linear, Encoder, EncoderCache, EncoderConfig, EncoderOutput};
use crate::error::{Error, Result};
use crate::neural::init::{stream_rng, STREAM_ENCODER, STREAM_LEVEL_HEAD, STREAM_SPAN_HEAD};
use crate::neural::{ops, Float, Linear, Param, Parameterized, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SpanIndex {
    pub i: usize,
    /// Inclusive.
    pub j: usize,
}

impl SpanIndex {
    pub fn width(&self) -> usize {
        self.j - self.i + 1
    }
}

/// All spans of width at most `max_width`, ordered by `(i, j)`.
pub fn enumerate_spans(len: usize, max_width: usize) -> Vec<SpanIndex> {
    let mut out = Vec::with_capacity(span_count(len, max_width));
    for i in 0..len {
        for j in i..len.min(i + max_width) {
            out.push(SpanIndex { i, j });
        }
    }
    out
}

/// `Σ_{i<len} min(max_width, len - i)`.
pub fn span_count(len: usize, max_width: usize) -> usize {
    (0..len).map(|i| max_width.min(len - i)).sum()
}

/// `[h_i ; h_j ; h_i - h_j]`.
pub fn span_repr<F: Float>(hidden: &Tensor<F>, span: SpanIndex) -> Vec<F> {
    let hi = hidden.row(span.i);
    let hj = hidden.row(span.j);
    ops::concat(&[hi, hj, &ops::sub(hi, hj)])
}

/// Per-span class distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanScores<F> {
    pub spans: Vec<SpanIndex>,
    /// `spans.len() × K` logits.
    pub logits: Tensor<F>,
    /// Row-wise softmax of `logits`.
    pub probs: Tensor<F>,
}

impl<F: Float> SpanScores<F> {
    pub fn from_logits(spans: Vec<SpanIndex>, logits: Tensor<F>) -> Self {
        let mut probs = logits.clone();
        for r in 0..probs.rows() {
            ops::softmax_in_place(probs.row_mut(r));
        }
        SpanScores { spans, logits, probs }
    }

    pub fn num_classes(&self) -> usize {
        self.probs.cols()
    }
}

/// Gold class per enumerated span position; absent positions are empty.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SpanTargets {
    pub gold: HashMap<SpanIndex, usize>,
    /// Gold spans wider than the enumeration limit, excluded from the loss.
    pub unlearnable: usize,
}

impl SpanTargets {
    pub fn new(sentence: &Sentence, inventory: &TagInventory, max_width: usize) -> Self {
        let mut targets = SpanTargets::default();
        for span in &sentence.gold_spans {
            let idx = SpanIndex {
                i: span.start,
                j: span.end,
            };
            if idx.width() > max_width {
                targets.unlearnable += 1;
            } else {
                targets.gold.insert(idx, inventory.id(&span.tag));
            }
        }
        targets
    }

    pub fn target(&self, span: &SpanIndex) -> usize {
        self.gold.get(span).copied().unwrap_or(EMPTY_ID)
    }
}

/// `Σ_spans -ln p(target)` over every scored span.
pub fn span_loss<F: Float>(scores: &SpanScores<F>, targets: &SpanTargets) -> Result<F> {
    let mut total = F::zero();
    for (r, span) in scores.spans.iter().enumerate() {
        total = total + ops::cross_entropy(scores.probs.row(r), targets.target(span))?;
    }
    Ok(total)
}

pub fn joint_loss<F: Float>(span_loss: F, level_loss: F, alpha: F) -> F {
    span_loss + alpha * level_loss
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodedSpan {
    pub start: usize,
    pub end: usize,
    pub tag: String,
    pub prob: f64,
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax<F: Float>(row: &[F]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = k;
        }
    }
    best
}

/// Per-span argmax, dropping spans whose best class is the empty tag or whose
/// probability is below `min_prob`. Overlapping and nested spans are kept.
pub fn decode<F: Float>(scores: &SpanScores<F>, inventory: &TagInventory, min_prob: f64) -> Vec<DecodedSpan> {
    let mut out = Vec::new();
    for (r, span) in scores.spans.iter().enumerate() {
        let row = scores.probs.row(r);
        let best = argmax(row);
        let prob = row[best].to_f64().unwrap();
        if best == EMPTY_ID || prob < min_prob {
            continue;
        }
        out.push(DecodedSpan {
            start: span.i,
            end: span.j,
            tag: inventory.tag(best).to_string(),
            prob,
        });
    }
    out
}

/// Loss components for one sentence, before batch weighting.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    pub span: f64,
    pub level: f64,
    pub spans_scored: usize,
}

/// Negative (empty-tag) span subsampling. `rate = 1` keeps every span and
/// draws nothing from the generator.
pub struct NegativeSampling<'a, R: ?Sized> {
    pub rate: f64,
    pub rng: &'a mut R,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpanModel<F> {
    pub encoder: Encoder<F>,
    /// `3d × K`.
    pub span_head: Linear<F>,
    /// `d × K_level`.
    pub level_head: Option<Linear<F>>,
    pub max_span_width: usize,
}

impl<F: Float> SpanModel<F> {
    /// Encoder, span head and level head are initialized from separate random
    /// streams derived from `seed`.
    pub fn new(
        encoder: EncoderConfig,
        num_classes: usize,
        num_levels: Option<usize>,
        max_span_width: usize,
        seed: u64,
        zero_init_heads: bool,
    ) -> Result<Self> {
        if max_span_width == 0 {
            return Err(Error::Config("max_span_width must be at least 1".into()));
        }
        let d = encoder.d;
        let encoder = Encoder::new(encoder, &mut stream_rng(seed, STREAM_ENCODER))?;
        let head = |name: &str, fan_in: usize, fan_out: usize, stream: &str| {
            if zero_init_heads {
                Linear::zeros(name, fan_in, fan_out)
            } else {
                Linear::xavier(name, fan_in, fan_out, &mut stream_rng(seed, stream))
            }
        };
        Ok(SpanModel {
            encoder,
            span_head: head("span_head", 3 * d, num_classes, STREAM_SPAN_HEAD),
            level_head: num_levels.map(|k| head("level_head", d, k, STREAM_LEVEL_HEAD)),
            max_span_width,
        })
    }

    pub fn dim(&self) -> usize {
        self.encoder.dim()
    }

    pub fn num_classes(&self) -> usize {
        self.span_head.out_dim()
    }

    pub fn span_representations(&self, hidden: &Tensor<F>, spans: &[SpanIndex]) -> Vec<F> {
        let mut reps = Vec::with_capacity(spans.len() * 3 * self.dim());
        for &s in spans {
            reps.extend(span_repr(hidden, s));
        }
        reps
    }

    pub fn score_spans(&self, hidden: &Tensor<F>, spans: &[SpanIndex]) -> SpanScores<F> {
        let reps = self.span_representations(hidden, spans);
        let logits = self.span_head.forward(&reps, spans.len());
        let logits = Tensor {
            shape: vec![spans.len(), self.num_classes()],
            data: logits,
        };
        SpanScores::from_logits(spans.to_vec(), logits)
    }

    pub fn level_logits(&self, pooled: &[F]) -> Result<Vec<F>> {
        let head = self.level_head.as_ref().ok_or(Error::NoLevelHead)?;
        Ok(head.forward(pooled, 1))
    }

    /// Level distribution from the pooled vector.
    pub fn level_probs(&self, pooled: &[F]) -> Result<Vec<F>> {
        Ok(ops::softmax(&self.level_logits(pooled)?))
    }

    /// Scores every enumerated span of an encoded sentence.
    pub fn score(&self, output: &EncoderOutput<F>) -> SpanScores<F> {
        let spans = enumerate_spans(output.len(), self.max_span_width);
        self.score_spans(&output.hidden, &spans)
    }

    /// Loss and head gradients for one encoded sentence. Returns the loss
    /// parts and the gradient with respect to the `(L+1) × d` encoder states
    /// (row 0 is the pooled position). Every gradient is multiplied by
    /// `weight`; the level term is skipped entirely when `alpha == 0`.
    pub fn head_backward<R: Rng + ?Sized>(
        &mut self,
        output: &EncoderOutput<F>,
        targets: &SpanTargets,
        level: Option<usize>,
        alpha: f64,
        weight: f64,
        negatives: Option<NegativeSampling<'_, R>>,
    ) -> Result<(LossParts, Vec<F>)> {
        let d = self.dim();
        let len = output.len();
        let k = self.num_classes();
        let spans = enumerate_spans(len, self.max_span_width);
        let reps = self.span_representations(&output.hidden, &spans);
        let logits = self.span_head.forward(&reps, spans.len());
        let w: F = crate::neural::cast(weight);

        let mut parts = LossParts::default();
        let mut dlogits = vec![F::zero(); logits.len()];
        let mut negatives = negatives;
        for (r, span) in spans.iter().enumerate() {
            let target = targets.target(span);
            if target == EMPTY_ID {
                if let Some(neg) = negatives.as_mut() {
                    if neg.rate < 1.0 && neg.rng.random::<f64>() >= neg.rate {
                        continue;
                    }
                }
            }
            let row = &logits[r * k..(r + 1) * k];
            parts.span += ops::cross_entropy_logits(row, target)?.to_f64().unwrap();
            parts.spans_scored += 1;
            let g = ops::cross_entropy_grad(&ops::softmax(row), target)?;
            for (o, gi) in dlogits[r * k..(r + 1) * k].iter_mut().zip(g) {
                *o = gi * w;
            }
        }
        let dreps = self.span_head.backward(&reps, &dlogits, spans.len());

        let mut d_states = vec![F::zero(); (len + 1) * d];
        for (r, span) in spans.iter().enumerate() {
            let g = &dreps[r * 3 * d..(r + 1) * 3 * d];
            let (gi, rest) = g.split_at(d);
            let (gj, gdiff) = rest.split_at(d);
            let row_i = (span.i + 1) * d;
            let row_j = (span.j + 1) * d;
            for c in 0..d {
                d_states[row_i + c] = d_states[row_i + c] + gi[c] + gdiff[c];
                d_states[row_j + c] = d_states[row_j + c] + gj[c] - gdiff[c];
            }
        }

        if let (Some(gold), true) = (level, alpha != 0.0) {
            let head = self.level_head.as_mut().ok_or(Error::NoLevelHead)?;
            let logits = head.forward(&output.pooled, 1);
            parts.level = ops::cross_entropy_logits(&logits, gold)?.to_f64().unwrap();
            let scale: F = crate::neural::cast(weight * alpha);
            let g: Vec<F> = ops::cross_entropy_grad(&ops::softmax(&logits), gold)?
                .into_iter()
                .map(|v| v * scale)
                .collect();
            let dpooled = head.backward(&output.pooled, &g, 1);
            for (o, v) in d_states[..d].iter_mut().zip(dpooled) {
                *o = *o + v;
            }
        }
        Ok((parts, d_states))
    }

    /// Full forward/backward for one sentence of token ids, accumulating
    /// gradients into every parameter (encoder included unless
    /// `freeze_encoder`).
    #[allow(clippy::too_many_arguments)]
    pub fn accumulate_gradients<R: Rng + ?Sized, N: Rng + ?Sized>(
        &mut self,
        ids: &[usize],
        targets: &SpanTargets,
        level: Option<usize>,
        alpha: f64,
        weight: f64,
        dropout_rng: Option<&mut R>,
        negatives: Option<NegativeSampling<'_, N>>,
        freeze_encoder: bool,
    ) -> Result<LossParts> {
        let (states, cache): (Tensor<F>, EncoderCache<F>) = self.encoder.forward(ids, dropout_rng)?;
        let output = EncoderOutput::from_states(&states);
        let (parts, d_states) = self.head_backward(&output, targets, level, alpha, weight, negatives)?;
        if !freeze_encoder {
            self.encoder.backward(&cache, &d_states);
        }
        Ok(parts)
    }

    /// Eval-mode joint loss value (no gradients): `span + α·level`.
    pub fn loss(&self, ids: &[usize], targets: &SpanTargets, level: Option<usize>, alpha: f64) -> Result<f64> {
        let output = self.encoder.encode(ids)?;
        let scores = self.score(&output);
        let span = span_loss(&scores, targets)?.to_f64().unwrap();
        let level_loss = match level {
            Some(gold) if alpha != 0.0 => {
                ops::cross_entropy(&self.level_probs(&output.pooled)?, gold)?.to_f64().unwrap()
            }
            _ => 0.0,
        };
        Ok(joint_loss(span, level_loss, alpha))
    }

    pub fn cast<G: Float>(&self) -> SpanModel<G> {
        SpanModel {
            encoder: self.encoder.cast(),
            span_head: cast_linear(&self.span_head),
            level_head: self.level_head.as_ref().map(cast_linear),
            max_span_width: self.max_span_width,
        }
    }

    /// Parameters of the encoder and span head only.
    pub fn span_path_params(&self) -> Vec<&Param<F>> {
        let mut out = self.encoder.params();
        out.extend(self.span_head.params());
        out
    }
}

impl<F: Float> Parameterized<F> for SpanModel<F> {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a Param<F>)) {
        self.encoder.visit_params(f);
        self.span_head.visit_params(f);
        if let Some(h) = &self.level_head {
            h.visit_params(f);
        }
    }

    fn visit_params_mut<'a>(&'a mut self, f: &mut dyn FnMut(&'a mut Param<F>)) {
        self.encoder.visit_params_mut(f);
        self.span_head.visit_params_mut(f);
        if let Some(h) = &mut self.level_head {
            h.visit_params_mut(f);
        }
    }
}
