//! Training loop, model selection and evaluation protocols.
//!
//! [`train`] fits one model and keeps the epoch with the best validation
//! labeled F1 (earliest on ties). [`cross_validate`] runs the k-fold protocol
//! with hash-stable fold assignment, [`grid_search_alpha`] picks the level
//! loss weight, and [`train_multilingual`] trains one shared model over
//! several languages with namespaced tags.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{LevelPrediction, ModelCheckpoint};
use crate::config::TrainConfig;
use crate::corpus::{build_tag_inventory, namespace_tags, Sentence, Vocab};
use crate::encoder::{EmbeddingStore, EncoderOutput};
use crate::error::{Error, Result};
use crate::metrics::{level_accuracy, LabeledSpan, MetricsReport, SpanSet};
use crate::neural::init::{stable_hash, stream_rng, STREAM_DROPOUT, STREAM_NEGATIVES, STREAM_SHUFFLE};
use crate::neural::{clip_grad_norm, AdamState, Param, Parameterized};
use crate::span_model::{span_loss, DecodedSpan, NegativeSampling, SpanModel, SpanTargets};

/// Per-epoch training summary handed to observers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    /// Mean per-sentence span loss over the epoch.
    pub span_loss: f64,
    /// Mean per-sentence level loss over the epoch (0 without a level head).
    pub level_loss: f64,
    /// Global gradient norm of the last step, before clipping.
    pub grad_norm: f64,
    pub val: MetricsReport,
}

/// One training sentence in model coordinates.
struct Example {
    ids: Vec<usize>,
    targets: SpanTargets,
    level: Option<usize>,
}

/// Source of encoder outputs.
#[derive(Clone, Copy)]
enum Features<'a> {
    Encoder,
    Precomputed(&'a EmbeddingStore),
}

impl Features<'_> {
    fn output(&self, ckpt: &ModelCheckpoint, sentence: &Sentence) -> Result<EncoderOutput<f32>> {
        match self {
            Features::Encoder => ckpt.encode(&sentence.tokens),
            Features::Precomputed(store) => {
                let out = store.get(&sentence.id)?;
                let len = sentence.len().min(ckpt.config.max_len);
                if out.len() != len {
                    return Err(Error::Embedding(format!(
                        "sentence {}: {} stored rows for {} tokens",
                        sentence.id,
                        out.len(),
                        len
                    )));
                }
                Ok(out.clone())
            }
        }
    }
}

fn load_features(config: &TrainConfig) -> Result<Option<EmbeddingStore>> {
    let Some(path) = &config.embeddings else {
        return Ok(None);
    };
    let store = EmbeddingStore::open(path)?;
    if store.d != config.d {
        return Err(Error::Embedding(format!(
            "embedding file has d={}, config has d={}",
            store.d, config.d
        )));
    }
    Ok(Some(store))
}

fn features(store: &Option<EmbeddingStore>) -> Features<'_> {
    match store {
        Some(s) => Features::Precomputed(s),
        None => Features::Encoder,
    }
}

fn truncated(sentence: &Sentence, max_len: usize) -> Sentence {
    let mut s = sentence.clone();
    s.truncate(max_len);
    s
}

fn prepare(ckpt: &ModelCheckpoint, sentences: &[Sentence]) -> Result<Vec<Example>> {
    sentences
        .iter()
        .map(|sentence| {
            let mut s = truncated(sentence, ckpt.config.max_len);
            for span in &mut s.gold_spans {
                span.tag = ckpt.model_tag(&s.lang, &span.tag);
            }
            let level = match (&s.level, ckpt.multitask()) {
                (Some(name), true) => Some(ckpt.levels.ordinal(name)?),
                _ => None,
            };
            Ok(Example {
                ids: ckpt.token_ids(&s.tokens),
                targets: SpanTargets::new(&s, &ckpt.inventory, ckpt.config.max_span_width),
                level,
            })
        })
        .collect()
}

/// Shuffles, groups sentences of similar length into batches, and shuffles
/// the batch order.
fn length_buckets<R: rand::Rng + ?Sized>(lengths: &[usize], batch_size: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..lengths.len()).collect();
    order.shuffle(rng);
    order.sort_by_key(|&i| lengths[i]);
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    batches.shuffle(rng);
    batches
}

fn trainable(model: &mut SpanModel<f32>, freeze_encoder: bool) -> Vec<&mut Param<f32>> {
    if !freeze_encoder {
        return model.params_mut();
    }
    let mut params = model.span_head.params_mut();
    if let Some(head) = &mut model.level_head {
        params.extend(head.params_mut());
    }
    params
}

fn training_languages(config: &TrainConfig, train: &[Sentence]) -> Result<Vec<String>> {
    let seen: BTreeSet<&str> = train.iter().map(|s| s.lang.as_str()).collect();
    if config.languages.is_empty() {
        return Ok(seen.into_iter().map(str::to_string).collect());
    }
    if let Some(lang) = seen.iter().find(|l| !config.languages.iter().any(|c| c == *l)) {
        return Err(Error::UnsupportedLanguage(lang.to_string()));
    }
    Ok(config.languages.clone())
}

/// Trains on `train`, selecting the epoch with the best labeled F1 on `val`.
pub fn train(config: &TrainConfig, train: &[Sentence], val: &[Sentence]) -> Result<ModelCheckpoint> {
    train_with(config, train, val, |_, _| {})
}

/// [`train`] with a callback invoked after every epoch with the epoch
/// summary and the current (not the selected) parameters.
pub fn train_with(
    config: &TrainConfig,
    train: &[Sentence],
    val: &[Sentence],
    observer: impl FnMut(&EpochReport, &ModelCheckpoint),
) -> Result<ModelCheckpoint> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let inventory = build_tag_inventory(train, config.min_tag_freq)?;
    let vocab = Vocab::from_sentences(train);
    let languages = training_languages(config, train)?;
    let ckpt = ModelCheckpoint::new(config.clone(), inventory, vocab, languages, false)?;
    fit(ckpt, train, val, observer)
}

fn fit(
    mut ckpt: ModelCheckpoint,
    train: &[Sentence],
    val: &[Sentence],
    mut observer: impl FnMut(&EpochReport, &ModelCheckpoint),
) -> Result<ModelCheckpoint> {
    let config = ckpt.config.clone();
    if train.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if val.is_empty() {
        return Err(Error::Config("validation set is empty".into()));
    }
    if train.iter().all(|s| s.gold_spans.is_empty()) {
        return Err(Error::NothingToLearn);
    }
    if config.multitask && train.iter().all(|s| s.level.is_none()) {
        return Err(Error::Config("multitask training needs level labels".into()));
    }
    let store = load_features(&config)?;
    let features = features(&store);
    let freeze = config.freeze_encoder || store.is_some();

    let examples = prepare(&ckpt, train)?;
    ckpt.provenance.train_sentences = examples.len();
    ckpt.provenance.alpha = config.alpha;
    ckpt.provenance.unlearnable_gold_spans = examples.iter().map(|e| e.targets.unlearnable).sum();
    let lengths: Vec<usize> = examples.iter().map(|e| e.ids.len()).collect();

    let mut adam = AdamState::new(config.adam());
    let mut shuffle_rng = stream_rng(config.seed, STREAM_SHUFFLE);
    let mut dropout_rng = stream_rng(config.seed, STREAM_DROPOUT);
    let mut negatives_rng = stream_rng(config.seed, STREAM_NEGATIVES);
    let mut best: Option<ModelCheckpoint> = None;

    for epoch in 1..=config.epochs {
        let (mut span_total, mut level_total, mut grad_norm) = (0.0, 0.0, 0.0);
        for batch in length_buckets(&lengths, config.batch_size, &mut shuffle_rng) {
            let weight = 1.0 / batch.len() as f64;
            for &i in &batch {
                let ex = &examples[i];
                let negatives = (config.neg_sample_rate < 1.0).then(|| NegativeSampling {
                    rate: config.neg_sample_rate,
                    rng: &mut negatives_rng,
                });
                let parts = match features {
                    Features::Encoder => ckpt.model.accumulate_gradients(
                        &ex.ids,
                        &ex.targets,
                        ex.level,
                        config.alpha,
                        weight,
                        (config.dropout > 0.0).then_some(&mut dropout_rng),
                        negatives,
                        freeze,
                    )?,
                    Features::Precomputed(_) => {
                        let out = features.output(&ckpt, &train[i])?;
                        let (parts, _) =
                            ckpt.model
                                .head_backward(&out, &ex.targets, ex.level, config.alpha, weight, negatives)?;
                        parts
                    }
                };
                span_total += parts.span;
                level_total += parts.level;
            }
            let mut params = trainable(&mut ckpt.model, freeze);
            grad_norm = clip_grad_norm(&mut params, config.grad_clip as f32) as f64;
            adam.step(&mut params)?;
        }
        if !ckpt.model.params().iter().all(|p| p.value.all_finite()) {
            return Err(Error::Invalid(format!("training diverged at epoch {epoch}")));
        }

        let report = evaluate_with(&ckpt, val, features)?;
        let n = examples.len() as f64;
        let summary = EpochReport {
            epoch,
            span_loss: span_total / n,
            level_loss: level_total / n,
            grad_norm,
            val: report,
        };
        log::info!(
            "epoch {epoch}: span loss {:.4}, level loss {:.4}, val labeled F1 {:.4}",
            summary.span_loss,
            summary.level_loss,
            summary.val.labeled.f1
        );
        observer(&summary, &ckpt);

        let f1 = summary.val.labeled.f1;
        if best.as_ref().is_none_or(|b| f1 > b.provenance.val_labeled_f1) {
            ckpt.provenance.epoch = epoch;
            ckpt.provenance.val_labeled_f1 = f1;
            ckpt.provenance.val_level_accuracy = summary.val.level_accuracy;
            best = Some(ckpt.clone());
        }
    }
    let mut best = best.expect("at least one epoch");
    best.provenance.epochs_run = config.epochs;
    Ok(best)
}

type Prediction = (Vec<DecodedSpan>, Option<LevelPrediction>);

fn predict_all(ckpt: &ModelCheckpoint, sentences: &[Sentence], features: Features<'_>) -> Result<Vec<Prediction>> {
    sentences
        .par_iter()
        .map(|s| ckpt.predict(&features.output(ckpt, s)?, 0.0))
        .collect()
}

fn report_for(ckpt: &ModelCheckpoint, items: &[(&Sentence, &Prediction)]) -> Result<MetricsReport> {
    if items.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let mut gold = SpanSet::new();
    let mut pred = SpanSet::new();
    let (mut gold_levels, mut pred_levels) = (Vec::new(), Vec::new());
    for (sentence, (spans, level)) in items {
        let s = truncated(sentence, ckpt.config.max_len);
        for g in &s.gold_spans {
            gold.insert(LabeledSpan::new(&s.id, g.start, g.end, ckpt.model_tag(&s.lang, &g.tag)));
        }
        for p in spans {
            pred.insert(LabeledSpan::new(&s.id, p.start, p.end, &p.tag));
        }
        if let (Some(g), Some(p)) = (&s.level, level) {
            gold_levels.push(g.clone());
            pred_levels.push(p.name.clone());
        }
    }
    let mut report = MetricsReport::from_spans(&gold, &pred);
    if ckpt.multitask() && !gold_levels.is_empty() {
        report.level_accuracy = Some(level_accuracy(&gold_levels, &pred_levels)?);
    }
    Ok(report)
}

fn evaluate_with(ckpt: &ModelCheckpoint, sentences: &[Sentence], features: Features<'_>) -> Result<MetricsReport> {
    let preds = predict_all(ckpt, sentences, features)?;
    let items: Vec<_> = sentences.iter().zip(&preds).collect();
    report_for(ckpt, &items)
}

/// Labeled/unlabeled/macro span scores (and level accuracy for multitask
/// checkpoints) of `ckpt` on `sentences`. Gold tags unknown to the model
/// count as UNK; gold spans wider than the span limit still count toward
/// recall.
pub fn evaluate(ckpt: &ModelCheckpoint, sentences: &[Sentence]) -> Result<MetricsReport> {
    let store = load_features(&ckpt.config)?;
    evaluate_with(ckpt, sentences, features(&store))
}

/// Sentence indices grouped by language code.
pub fn partition_by_language(sentences: &[Sentence]) -> BTreeMap<String, Vec<usize>> {
    let mut parts: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, s) in sentences.iter().enumerate() {
        parts.entry(s.lang.clone()).or_default().push(i);
    }
    parts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageReport {
    pub pooled: MetricsReport,
    pub per_language: BTreeMap<String, MetricsReport>,
}

/// Pooled and per-language evaluation from a single prediction pass.
pub fn evaluate_by_language(ckpt: &ModelCheckpoint, sentences: &[Sentence]) -> Result<LanguageReport> {
    let store = load_features(&ckpt.config)?;
    let preds = predict_all(ckpt, sentences, features(&store))?;
    let items: Vec<_> = sentences.iter().zip(&preds).collect();
    let mut per_language = BTreeMap::new();
    for (lang, idx) in partition_by_language(sentences) {
        let part: Vec<_> = idx.iter().map(|&i| items[i]).collect();
        per_language.insert(lang, report_for(ckpt, &part)?);
    }
    Ok(LanguageReport {
        pooled: report_for(ckpt, &items)?,
        per_language,
    })
}

/// Eval-mode mean per-sentence span loss.
pub fn mean_span_loss(ckpt: &ModelCheckpoint, sentences: &[Sentence]) -> Result<f64> {
    if sentences.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let examples = prepare(ckpt, sentences)?;
    let losses: Vec<f64> = examples
        .par_iter()
        .map(|ex| {
            let out = ckpt.model.encoder.encode(&ex.ids)?;
            Ok(span_loss(&ckpt.model.score(&out), &ex.targets)? as f64)
        })
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Fold of each sentence: sentences are ranked by `(hash(id), id)` and
/// dealt round-robin, so the assignment depends only on the id set and the
/// folds differ in size by at most one.
pub fn assign_folds(sentences: &[Sentence], folds: usize) -> Result<Vec<usize>> {
    if folds < 3 {
        return Err(Error::Config(format!(
            "cross-validation needs at least 3 folds, got {folds}"
        )));
    }
    if sentences.len() < folds {
        return Err(Error::Config(format!(
            "{} sentences cannot fill {folds} folds",
            sentences.len()
        )));
    }
    let mut seen = HashSet::new();
    if let Some(dup) = sentences.iter().find(|s| !seen.insert(s.id.as_str())) {
        return Err(Error::Invalid(format!("duplicate sentence id {}", dup.id)));
    }
    let mut order: Vec<usize> = (0..sentences.len()).collect();
    order.sort_by(|&a, &b| {
        let key = |i: usize| (stable_hash(sentences[i].id.as_bytes()), &sentences[i].id);
        key(a).cmp(&key(b))
    });
    let mut assignment = vec![0; sentences.len()];
    for (rank, &i) in order.iter().enumerate() {
        assignment[i] = rank % folds;
    }
    Ok(assignment)
}

/// `(train, validation, test)` sentence indices for iteration `k`: fold `k`
/// tests, fold `k+1 mod folds` validates, the rest trains.
pub fn fold_split(assignment: &[usize], folds: usize, k: usize) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let val_fold = (k + 1) % folds;
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (i, &f) in assignment.iter().enumerate() {
        if f == k {
            test.push(i);
        } else if f == val_fold {
            val.push(i);
        } else {
            train.push(i);
        }
    }
    (train, val, test)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub train_size: usize,
    pub validation: Vec<String>,
    pub test: Vec<String>,
    pub best_epoch: usize,
    pub val_labeled_f1: f64,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: usize,
    /// Arithmetic mean of the per-fold test reports.
    pub mean: MetricsReport,
    pub per_fold: Vec<FoldReport>,
}

/// k-fold cross-validation; folds train independently in parallel.
pub fn cross_validate(config: &TrainConfig, sentences: &[Sentence], folds: usize) -> Result<CvReport> {
    config.validate()?;
    let assignment = assign_folds(sentences, folds)?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| sentences[i].clone()).collect::<Vec<_>>();
    let per_fold = (0..folds)
        .into_par_iter()
        .map(|k| {
            let (train_idx, val_idx, test_idx) = fold_split(&assignment, folds, k);
            let (train_set, val_set, test_set) = (pick(&train_idx), pick(&val_idx), pick(&test_idx));
            let ckpt = train(config, &train_set, &val_set)?;
            let report = evaluate(&ckpt, &test_set)?;
            log::info!("fold {k}: test labeled F1 {:.4}", report.labeled.f1);
            Ok(FoldReport {
                fold: k,
                train_size: train_set.len(),
                validation: val_set.into_iter().map(|s| s.id).collect(),
                test: test_set.into_iter().map(|s| s.id).collect(),
                best_epoch: ckpt.provenance.epoch,
                val_labeled_f1: ckpt.provenance.val_labeled_f1,
                report,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let reports: Vec<_> = per_fold.iter().map(|f| f.report.clone()).collect();
    Ok(CvReport {
        folds,
        mean: MetricsReport::mean(&reports)?,
        per_fold,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaResult {
    pub alpha: f64,
    pub best_epoch: usize,
    pub report: MetricsReport,
}

#[derive(Debug, Clone)]
pub struct AlphaSearch {
    pub best_alpha: f64,
    /// In ascending α order.
    pub results: Vec<AlphaResult>,
    /// The selected model; its provenance records the chosen α.
    pub checkpoint: ModelCheckpoint,
}

/// Picks the α with the best validation labeled F1; ties go to the smaller α.
pub fn select_alpha(results: &[(f64, f64)]) -> Option<usize> {
    let mut order: Vec<usize> = (0..results.len()).collect();
    order.sort_by(|&a, &b| results[a].0.total_cmp(&results[b].0));
    let mut best: Option<usize> = None;
    for i in order {
        if best.is_none_or(|b| results[i].1 > results[b].1) {
            best = Some(i);
        }
    }
    best
}

/// Trains one multitask model per α in the grid (in parallel) and keeps the
/// best on validation.
pub fn grid_search_alpha(config: &TrainConfig, train_set: &[Sentence], val: &[Sentence]) -> Result<AlphaSearch> {
    config.validate()?;
    if !config.multitask {
        return Err(Error::Config("the α search needs multitask = true".into()));
    }
    if train_set.iter().chain(val).all(|s| s.level.is_none()) {
        return Err(Error::Config("no level labels in the data".into()));
    }
    let mut grid = config.alpha_grid.clone();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let runs = grid
        .par_iter()
        .map(|&alpha| {
            let cfg = TrainConfig {
                alpha,
                ..config.clone()
            };
            let ckpt = train(&cfg, train_set, val)?;
            let report = evaluate(&ckpt, val)?;
            Ok((ckpt, report))
        })
        .collect::<Result<Vec<_>>>()?;
    let scores: Vec<(f64, f64)> = grid.iter().zip(&runs).map(|(&a, (_, r))| (a, r.labeled.f1)).collect();
    let best = select_alpha(&scores).expect("nonempty grid");
    let results = grid
        .iter()
        .zip(&runs)
        .map(|(&alpha, (ckpt, report))| AlphaResult {
            alpha,
            best_epoch: ckpt.provenance.epoch,
            report: report.clone(),
        })
        .collect();
    Ok(AlphaSearch {
        best_alpha: grid[best],
        results,
        checkpoint: runs.into_iter().nth(best).expect("index in range").0,
    })
}

/// Training and validation sentences of one language.
#[derive(Debug, Clone, PartialEq)]
pub struct LanguageCorpus {
    pub lang: String,
    pub train: Vec<Sentence>,
    pub val: Vec<Sentence>,
}

#[derive(Debug, Clone)]
pub struct MultilingualOutcome {
    pub checkpoint: ModelCheckpoint,
    /// Validation scores, pooled and per language.
    pub validation: LanguageReport,
}

fn namespaced_copy(corpus: &LanguageCorpus, sentences: &[Sentence]) -> Result<Vec<Sentence>> {
    if let Some(s) = sentences.iter().find(|s| s.lang != corpus.lang) {
        return Err(Error::sentence(
            &s.id,
            format!("language {:?} in the {:?} corpus", s.lang, corpus.lang),
        ));
    }
    let mut out = sentences.to_vec();
    namespace_tags(&mut out, &corpus.lang);
    Ok(out)
}

/// One shared model over several languages. Tags are prefixed with their
/// language code before the inventory union; the vocabulary covers every
/// language's tokens.
pub fn train_multilingual(config: &TrainConfig, corpora: &[LanguageCorpus]) -> Result<MultilingualOutcome> {
    config.validate()?;
    if corpora.len() < 2 {
        return Err(Error::Config("multilingual training needs at least two corpora".into()));
    }
    let mut langs = BTreeSet::new();
    for c in corpora {
        if !langs.insert(c.lang.as_str()) {
            return Err(Error::Config(format!("language code collision: {}", c.lang)));
        }
    }
    let (mut train_set, mut val) = (Vec::new(), Vec::new());
    for c in corpora {
        train_set.extend(namespaced_copy(c, &c.train)?);
        val.extend(namespaced_copy(c, &c.val)?);
    }
    let inventory = build_tag_inventory(&train_set, config.min_tag_freq)?;
    let vocab = Vocab::from_sentences(&train_set);
    let languages = langs.into_iter().map(str::to_string).collect();
    let ckpt = ModelCheckpoint::new(config.clone(), inventory, vocab, languages, true)?;
    let checkpoint = fit(ckpt, &train_set, &val, |_, _| {})?;
    let validation = evaluate_by_language(&checkpoint, &val)?;
    Ok(MultilingualOutcome { checkpoint, validation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{tokenize, LangMode, SpanAnnotation};
    use crate::fixtures;

    fn small_config() -> TrainConfig {
        TrainConfig {
            d: 16,
            n_heads: 2,
            n_layers: 1,
            d_ffn: 32,
            epochs: 2,
            batch_size: 4,
            lr: 1e-3,
            min_tag_freq: 1,
            ..TrainConfig::default()
        }
    }

    fn sentence(id: &str, text: &str, spans: &[(usize, usize, &str)]) -> Sentence {
        Sentence {
            id: id.into(),
            lang: "en".into(),
            text: text.into(),
            tokens: tokenize(text, LangMode::Auto),
            gold_spans: spans
                .iter()
                .map(|&(start, end, tag)| SpanAnnotation {
                    start,
                    end,
                    tag: tag.into(),
                })
                .collect(),
            level: Some("A1".into()),
        }
    }

    #[test]
    fn rejects_degenerate_inputs() {
        let corpus = fixtures::english(6, 1);
        let cfg = small_config();
        assert!(matches!(train(&cfg, &[], &corpus), Err(Error::EmptyCorpus)));
        let bare: Vec<_> = corpus
            .iter()
            .map(|s| Sentence {
                gold_spans: vec![],
                ..s.clone()
            })
            .collect();
        assert!(matches!(train(&cfg, &bare, &corpus), Err(Error::NothingToLearn)));
        let zero = TrainConfig { epochs: 0, ..cfg.clone() };
        assert!(matches!(train(&zero, &corpus, &corpus), Err(Error::Config(_))));
        assert!(train(&cfg, &corpus, &[]).is_err());
    }

    #[test]
    fn deterministic_and_selection_consistent() {
        let corpus = fixtures::english(12, 2);
        let cfg = TrainConfig {
            epochs: 3,
            multitask: true,
            ..small_config()
        };
        let a = train(&cfg, &corpus[..8], &corpus[8..]).unwrap();
        let b = train(&cfg, &corpus[..8], &corpus[8..]).unwrap();
        assert_eq!(a.to_bytes().unwrap(), b.to_bytes().unwrap());
        let again = evaluate(&a, &corpus[8..]).unwrap();
        assert_eq!(again.labeled.f1, a.provenance.val_labeled_f1);
        assert_eq!(again.level_accuracy, a.provenance.val_level_accuracy);
        assert!((1..=3).contains(&a.provenance.epoch));
        assert_eq!(a.provenance.epochs_run, 3);
    }

    #[test]
    fn selection_prefers_earliest_best_epoch() {
        let corpus = fixtures::english(12, 3);
        let mut history = Vec::new();
        let ckpt = train_with(
            &TrainConfig {
                epochs: 4,
                ..small_config()
            },
            &corpus,
            &corpus,
            |r, _| history.push(r.val.labeled.f1),
        )
        .unwrap();
        let best = history.iter().cloned().fold(f64::MIN, f64::max);
        let first = history.iter().position(|&f| f == best).unwrap() + 1;
        assert_eq!(ckpt.provenance.epoch, first);
    }

    #[test]
    fn initial_loss_matches_uniform_prediction() {
        let corpus = fixtures::english(10, 4);
        let cfg = TrainConfig {
            zero_init_heads: true,
            ..small_config()
        };
        let ckpt = ModelCheckpoint::new(
            cfg,
            build_tag_inventory(&corpus, 1).unwrap(),
            Vocab::from_sentences(&corpus),
            vec!["en".into()],
            false,
        )
        .unwrap();
        let k = ckpt.inventory.len() as f64;
        let expected: f64 = corpus
            .iter()
            .map(|s| crate::span_model::span_count(s.len(), 30) as f64 * k.ln())
            .sum::<f64>()
            / corpus.len() as f64;
        let got = mean_span_loss(&ckpt, &corpus).unwrap();
        assert!((got - expected).abs() / expected < 0.05, "{got} vs {expected}");
    }

    #[test]
    fn evaluation_counts_unknown_and_wide_gold() {
        let train_set = vec![sentence("a", "x y z", &[(0, 1, "A")])];
        let cfg = TrainConfig {
            max_span_width: 1,
            ..small_config()
        };
        let ckpt = train(&cfg, &train_set, &train_set).unwrap();
        assert_eq!(ckpt.provenance.unlearnable_gold_spans, 1);
        let test = vec![sentence("b", "x y z", &[(0, 1, "A"), (2, 2, "NEW")])];
        let report = evaluate(&ckpt, &test).unwrap();
        assert!(report.per_tag.contains_key("UNK"));
        assert_eq!(report.per_tag["A"].gold_count, 1);
    }

    #[test]
    fn folds_are_balanced_and_order_invariant() {
        let corpus = fixtures::english(23, 5);
        let a = assign_folds(&corpus, 10).unwrap();
        let mut reversed = corpus.clone();
        reversed.reverse();
        let b = assign_folds(&reversed, 10).unwrap();
        for (i, s) in corpus.iter().enumerate() {
            let j = reversed.iter().position(|r| r.id == s.id).unwrap();
            assert_eq!(a[i], b[j]);
        }
        let mut sizes = [0; 10];
        a.iter().for_each(|&f| sizes[f] += 1);
        assert!(sizes.iter().all(|&n| n == 2 || n == 3));

        let ten = fixtures::english(10, 6);
        let assignment = assign_folds(&ten, 10).unwrap();
        for k in 0..10 {
            let (train_idx, val_idx, test_idx) = fold_split(&assignment, 10, k);
            assert_eq!((train_idx.len(), val_idx.len(), test_idx.len()), (8, 1, 1));
        }
        assert!(assign_folds(&ten, 2).is_err());
        assert!(assign_folds(&ten[..5], 10).is_err());
        let dup = vec![ten[0].clone(), ten[0].clone(), ten[1].clone()];
        assert!(assign_folds(&dup, 3).is_err());
    }

    #[test]
    fn alpha_selection_rules() {
        assert_eq!(select_alpha(&[(0.0, 0.4)]), Some(0));
        assert_eq!(select_alpha(&[(1.0, 0.5), (0.3, 0.5), (3.0, 0.2)]), Some(1));
        assert_eq!(select_alpha(&[(0.1, 0.2), (0.3, 0.6)]), Some(1));
        assert_eq!(select_alpha(&[]), None);
    }

    #[test]
    fn alpha_search_preconditions() {
        let corpus = fixtures::english(8, 7);
        let cfg = TrainConfig {
            alpha_grid: vec![0.0],
            epochs: 1,
            ..small_config()
        };
        assert!(grid_search_alpha(&cfg, &corpus, &corpus).is_err());
        let multitask = TrainConfig { multitask: true, ..cfg };
        let unlabeled: Vec<_> = corpus
            .iter()
            .map(|s| Sentence {
                level: None,
                ..s.clone()
            })
            .collect();
        assert!(grid_search_alpha(&multitask, &unlabeled, &unlabeled).is_err());
        let search = grid_search_alpha(&multitask, &corpus, &corpus).unwrap();
        assert_eq!(search.best_alpha, 0.0);
        assert_eq!(search.checkpoint.provenance.alpha, 0.0);
    }

    #[test]
    fn multilingual_preconditions_and_partitions() {
        let en = LanguageCorpus {
            lang: "en".into(),
            train: fixtures::english(6, 1),
            val: fixtures::english(3, 2),
        };
        let zh = LanguageCorpus {
            lang: "zh".into(),
            train: fixtures::chinese(6, 1),
            val: fixtures::chinese(3, 2),
        };
        let cfg = TrainConfig {
            epochs: 1,
            ..small_config()
        };
        assert!(train_multilingual(&cfg, std::slice::from_ref(&en)).is_err());
        assert!(train_multilingual(&cfg, &[en.clone(), en.clone()]).is_err());
        let out = train_multilingual(&cfg, &[en.clone(), zh.clone()]).unwrap();
        let tags = out.checkpoint.inventory.tags();
        assert!(tags.iter().any(|t| t.starts_with("en:")) && tags.iter().any(|t| t.starts_with("zh:")));
        assert_eq!(out.checkpoint.languages, ["en", "zh"]);
        let langs: Vec<_> = out.validation.per_language.keys().cloned().collect();
        assert_eq!(langs, ["en", "zh"]);
        let mislabeled = LanguageCorpus {
            lang: "fr".into(),
            ..zh
        };
        assert!(train_multilingual(&cfg, &[en, mislabeled]).is_err());
    }
}
