//! Central finite-difference gradient oracle (64-bit).

/// Default step for central differences.
pub const FD_STEP: f64 = 1e-5;

/// Step for the composed-encoder check. Stacked layer norms over the tiny
/// model's small-variance activations have enough curvature that the
/// O(h²) truncation error at [`FD_STEP`] reaches 1e-3 on some seeds; at this
/// step it is 100× smaller while f64 round-off stays near 1e-10.
pub const COMPOSED_FD_STEP: f64 = 1e-6;

/// Gradients smaller than this are compared in absolute terms.
pub const REL_FLOOR: f64 = 1e-3;

/// `eval(i, delta)` must return the loss with coordinate `i` shifted by
/// `delta` (and restore it afterwards).
pub fn numeric_gradient(n: usize, h: f64, mut eval: impl FnMut(usize, f64) -> f64) -> Vec<f64> {
    (0..n)
        .map(|i| (eval(i, h) - eval(i, -h)) / (2.0 * h))
        .collect()
}

/// `max_i |a_i - n_i| / max(|a_i|, |n_i|, REL_FLOOR)`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR))
        .fold(0.0, f64::max)
}

/// Checks `analytic` against central differences of `loss` around `x`.
pub fn grad_check(mut loss: impl FnMut(&[f64]) -> f64, x: &[f64], analytic: &[f64]) -> f64 {
    let mut point = x.to_vec();
    let numeric = numeric_gradient(x.len(), FD_STEP, |i, delta| {
        let orig = point[i];
        point[i] = orig + delta;
        let l = loss(&point);
        point[i] = orig;
        l
    });
    max_relative_error(analytic, &numeric)
}


/// Randomized gradient checks of each primitive and of the composed model,
/// each returning the maximum relative error for one seed.
pub mod oracles {
    use rand::Rng;

    use super::{max_relative_error, numeric_gradient, COMPOSED_FD_STEP, FD_STEP};
    use crate::encoder::{Encoder, EncoderConfig, EncoderOutput};
    use crate::neural::init::stream_rng;
    use crate::neural::{
        ops, Activation, Embedding, FeedForward, LayerNorm, Linear, MultiHeadAttention, Parameterized, Tensor,
    };
    use crate::span_model::{enumerate_spans, SpanModel, SpanTargets};

    type Rng64 = crate::neural::StreamRng;

    fn uniform(rng: &mut Rng64, n: usize, scale: f64) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-scale..scale)).collect()
    }

    fn perturb<L: Parameterized<f64>>(layer: &mut L, mut idx: usize, delta: f64) {
        let mut done = false;
        layer.visit_params_mut(&mut |p| {
            if done {
                return;
            }
            if idx < p.value.len() {
                p.value.data[idx] += delta;
                done = true;
            } else {
                idx -= p.value.len();
            }
        });
    }

    fn param_grads<L: Parameterized<f64>>(layer: &L) -> Vec<f64> {
        layer.params().iter().flat_map(|p| p.grad.data.iter().copied()).collect()
    }

    /// Checks d(Σ w·f(x))/dx and the parameter gradients of a layer.
    fn check_layer<L: Parameterized<f64>>(
        layer: &mut L,
        step: f64,
        x: &[f64],
        forward: impl Fn(&L, &[f64]) -> Vec<f64>,
        backward: impl FnOnce(&mut L, &[f64], &[f64]) -> Vec<f64>,
        rng: &mut Rng64,
    ) -> f64 {
        let out_len = forward(layer, x).len();
        let w = uniform(rng, out_len, 1.0);
        let loss = |layer: &L, x: &[f64]| ops::dot(&forward(layer, x), &w);
        layer.zero_grad();
        let mut analytic = backward(layer, x, &w);
        analytic.extend(param_grads(layer));

        let mut point = x.to_vec();
        let mut numeric = numeric_gradient(x.len(), step, |i, d| {
            let orig = point[i];
            point[i] = orig + d;
            let l = loss(layer, &point);
            point[i] = orig;
            l
        });
        let n_params = layer.num_params();
        numeric.extend(numeric_gradient(n_params, step, |i, d| {
            perturb(layer, i, d);
            let l = loss(layer, x);
            perturb(layer, i, -d);
            l
        }));
        max_relative_error(&analytic, &numeric)
    }

    pub fn linear(seed: u64) -> f64 {
        let mut rng = stream_rng(seed, "gradcheck.linear");
        let mut layer = Linear::<f64>::xavier("l", 4, 3, &mut rng);
        layer.bias.value.data = uniform(&mut rng, 3, 0.5);
        let x = uniform(&mut rng, 2 * 4, 1.0);
        check_layer(&mut layer, FD_STEP, &x, |l, x| l.forward(x, 2), |l, x, dy| l.backward(x, dy, 2), &mut rng)
    }

    pub fn layer_norm(seed: u64) -> f64 {
        let mut rng = stream_rng(seed, "gradcheck.layer_norm");
        let mut layer = LayerNorm::<f64>::new("ln", 8);
        layer.gamma.value.data = uniform(&mut rng, 8, 1.5);
        layer.beta.value.data = uniform(&mut rng, 8, 0.5);
        let x = uniform(&mut rng, 8, 2.0);
        check_layer(
            &mut layer,
            FD_STEP,
            &x,
            |l, x| l.forward(x, 1).0,
            |l, x, dy| {
                let (_, cache) = l.forward(x, 1);
                l.backward(&cache, dy)
            },
            &mut rng,
        )
    }

    pub fn attention(seed: u64) -> f64 {
        let mut rng = stream_rng(seed, "gradcheck.attention");
        let mut layer = MultiHeadAttention::<f64>::new("a", 8, 2, &mut rng);
        let x = uniform(&mut rng, 5 * 8, 1.0);
        check_layer(
            &mut layer,
            FD_STEP,
            &x,
            |l, x| l.forward(x, 5).0,
            |l, x, dy| {
                let (_, cache) = l.forward(x, 5);
                l.backward(x, &cache, dy, 5)
            },
            &mut rng,
        )
    }

    pub fn feed_forward(seed: u64, activation: Activation) -> f64 {
        let mut rng = stream_rng(seed, "gradcheck.ffn");
        let mut layer = FeedForward::<f64>::new("f", 4, 6, activation, &mut rng);
        let mut x = uniform(&mut rng, 3 * 4, 1.0);
        if activation == Activation::Relu {
            // keep pre-activations at least 1e-3 away from the kink
            for _ in 0..100 {
                let pre = layer.up.forward(&x, 3);
                if pre.iter().all(|v| v.abs() > 1e-3) {
                    break;
                }
                x = uniform(&mut rng, 3 * 4, 1.0);
            }
        }
        check_layer(
            &mut layer,
            FD_STEP,
            &x,
            |l, x| l.forward(x, 3).0,
            |l, x, dy| {
                let (_, cache) = l.forward(x, 3);
                l.backward(x, &cache, dy, 3)
            },
            &mut rng,
        )
    }

    pub fn embedding(seed: u64) -> f64 {
        let mut rng = stream_rng(seed, "gradcheck.embedding");
        let mut layer = Embedding::<f64>::normal("e", 6, 4, 0.5, &mut rng);
        let ids: Vec<usize> = (0..5).map(|_| rng.random_range(0..6)).collect();
        check_layer(
            &mut layer,
            FD_STEP,
            &[],
            |l, _| l.forward(&ids),
            |l, _, dy| {
                l.backward(&ids, dy);
                Vec::new()
            },
            &mut rng,
        )
    }

    /// Elementwise GELU, dropout with a fixed mask, softmax and
    /// cross-entropy, and concatenation/subtraction.
    pub fn elementwise(seed: u64) -> f64 {
        let mut rng = stream_rng(seed, "gradcheck.elementwise");
        let x = uniform(&mut rng, 6, 2.0);
        let w = uniform(&mut rng, 6, 1.0);
        let mask: Vec<f64> = ops::dropout_mask(&mut rng, 6, 0.3);
        let target = rng.random_range(0..6);
        let w2 = uniform(&mut rng, 9, 1.0);

        // gelu(x)·w + (x ⊙ mask)·w + CE(softmax(x), t) + concat(a, b, a-b)·w2
        let loss = |x: &[f64]| {
            let g: Vec<f64> = x.iter().map(|&v| ops::gelu(v)).collect();
            let dropped: Vec<f64> = x.iter().zip(&mask).map(|(a, m)| a * m).collect();
            let ce = ops::cross_entropy(&ops::softmax(x), target).unwrap();
            let (a, b) = (&x[..3], &x[3..]);
            let cat = ops::concat(&[a, b, &ops::sub(a, b)]);
            ops::dot(&g, &w) + ops::dot(&dropped, &w) + ce + ops::dot(&cat, &w2)
        };
        let ce_grad = ops::cross_entropy_grad(&ops::softmax(&x), target).unwrap();
        let mut analytic: Vec<f64> = (0..6)
            .map(|i| ops::gelu_grad(x[i]) * w[i] + mask[i] * w[i] + ce_grad[i])
            .collect();
        for c in 0..3 {
            analytic[c] += w2[c] + w2[6 + c];
            analytic[3 + c] += w2[3 + c] - w2[6 + c];
        }
        super::grad_check(loss, &x, &analytic)
    }

    /// Composed encoder: gradient of Σ w·states w.r.t. every parameter,
    /// with differences taken at [`COMPOSED_FD_STEP`].
    pub fn encoder(seed: u64, config: EncoderConfig, len: usize) -> f64 {
        encoder_with_step(seed, config, len, COMPOSED_FD_STEP)
    }

    /// [`encoder`] with an explicit finite-difference step.
    pub fn encoder_with_step(seed: u64, config: EncoderConfig, len: usize, step: f64) -> f64 {
        let mut rng = stream_rng(seed, "gradcheck.encoder");
        let mut enc = Encoder::<f64>::new(config.clone(), &mut rng).unwrap();
        let ids: Vec<usize> = (0..len).map(|_| rng.random_range(0..config.vocab_size)).collect();
        check_layer(
            &mut enc,
            step,
            &[],
            |e, _| e.states(&ids).unwrap().data,
            |e, _, dy| {
                let (_, cache) = e.forward(&ids, None::<&mut Rng64>).unwrap();
                e.backward(&cache, dy);
                Vec::new()
            },
            &mut rng,
        )
    }

    pub fn tiny_encoder_config() -> EncoderConfig {
        EncoderConfig {
            vocab_size: 10,
            d: 8,
            n_layers: 1,
            n_heads: 2,
            d_ffn: 16,
            max_len: 6,
            dropout: 0.0,
            activation: Activation::Gelu,
        }
    }

    /// Joint span + level loss of the whole model (tiny config, L ≤ 6,
    /// K ≤ 5) against finite differences over every parameter. The loss is
    /// evaluated through probabilities while the gradient comes from the
    /// logit-space training path.
    pub fn joint_loss(seed: u64) -> f64 {
        let mut rng = stream_rng(seed, "gradcheck.joint");
        let config = tiny_encoder_config();
        let classes = rng.random_range(3..=5);
        let levels = 3;
        let mut model =
            SpanModel::<f64>::new(config.clone(), classes, Some(levels), rng.random_range(2..=6), seed, false)
                .unwrap();
        let len = rng.random_range(1..=config.max_len);
        let ids: Vec<usize> = (0..len).map(|_| rng.random_range(0..config.vocab_size)).collect();
        let mut targets = SpanTargets::default();
        for span in enumerate_spans(len, model.max_span_width) {
            if rng.random::<f64>() < 0.3 {
                targets.gold.insert(span, rng.random_range(1..classes));
            }
        }
        let level = Some(rng.random_range(0..levels));
        let alpha = rng.random_range(0.1..2.0);

        model.zero_grad();
        model
            .accumulate_gradients(&ids, &targets, level, alpha, 1.0, None::<&mut Rng64>, None::<crate::span_model::NegativeSampling<'_, Rng64>>, false)
            .unwrap();
        let analytic = param_grads(&model);
        let n = model.num_params();
        let numeric = numeric_gradient(n, FD_STEP, |i, d| {
            perturb(&mut model, i, d);
            let l = model.loss(&ids, &targets, level, alpha).unwrap();
            perturb(&mut model, i, -d);
            l
        });
        max_relative_error(&analytic, &numeric)
    }

    /// Span and level heads on fixed hidden states: gradient with respect to
    /// the hidden states and pooled vector.
    pub fn heads(seed: u64) -> f64 {
        let mut rng = stream_rng(seed, "gradcheck.heads");
        let config = tiny_encoder_config();
        let mut model = SpanModel::<f64>::new(config, 4, Some(3), 3, seed, false).unwrap();
        let len = rng.random_range(1..=5);
        let states = Tensor::from_vec(&[len + 1, 8], uniform(&mut rng, (len + 1) * 8, 1.0)).unwrap();
        let mut targets = SpanTargets::default();
        for span in enumerate_spans(len, 3) {
            if rng.random::<f64>() < 0.4 {
                targets.gold.insert(span, rng.random_range(1..4));
            }
        }
        let alpha = 0.7;
        let loss = |model: &SpanModel<f64>, states: &[f64]| {
            let out = EncoderOutput::from_states(&Tensor::from_vec(&[len + 1, 8], states.to_vec()).unwrap());
            let span = crate::span_model::span_loss(&model.score(&out), &targets).unwrap();
            let level = ops::cross_entropy(&model.level_probs(&out.pooled).unwrap(), 1).unwrap();
            span + alpha * level
        };
        let (_, d_states) = model
            .head_backward(
                &EncoderOutput::from_states(&states),
                &targets,
                Some(1),
                alpha,
                1.0,
                None::<crate::span_model::NegativeSampling<'_, Rng64>>,
            )
            .unwrap();
        super::grad_check(|s| loss(&model, s), &states.data, &d_states)
    }
}
