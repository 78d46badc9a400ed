//! Subcommand implementations; each is a thin wrapper over the library.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use gramprof_core::checkpoint::ModelCheckpoint;
use gramprof_core::config::TrainConfig;
use gramprof_core::corpus::{load_corpus, Sentence};
use gramprof_core::index::{self, DocumentIndex, Query};
use gramprof_core::profiler::{profile_text, Prediction};
use gramprof_core::trainer::{self, LanguageCorpus};
use gramprof_core::Error;
use gramprof_server::AppState;
use serde::{Deserialize, Serialize};

use crate::{Command, ConfigArgs};

#[derive(Debug)]
pub enum CliError {
    /// Bad input data, configuration or arguments discovered after parsing.
    Data(String),
    /// Anything else.
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Data(m) | CliError::Internal(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(err: Error) -> Self {
        match err {
            Error::Shape(_)
            | Error::OutOfVocab { .. }
            | Error::TargetOutOfRange { .. }
            | Error::LengthMismatch { .. } => CliError::Internal(err.to_string()),
            _ => CliError::Data(err.to_string()),
        }
    }
}

fn io_error(path: &Path, err: io::Error) -> CliError {
    CliError::Data(format!("{}: {err}", path.display()))
}

type CliResult<T = ()> = Result<T, CliError>;

pub fn run(command: Command) -> CliResult {
    match command {
        Command::Train {
            data,
            val,
            config,
            out,
            multilingual,
            alpha_search,
        } => train(&data, &val, &config, &out, multilingual, alpha_search),
        Command::Cv {
            data,
            folds,
            config,
            report,
        } => cv(&data, folds, &config, &report),
        Command::Eval {
            model,
            data,
            report,
            by_language,
        } => eval(&model, &data, report.as_deref(), by_language),
        Command::Profile {
            model,
            text,
            input,
            lang,
            threshold,
            json,
        } => {
            let text = match (text, input) {
                (Some(text), _) => text,
                (None, Some(path)) => fs::read_to_string(&path).map_err(|e| io_error(&path, e))?,
                (None, None) => unreachable!("clap requires --text or --input"),
            };
            profile(&model, &text, lang.as_deref(), threshold, json)
        }
        Command::Index {
            model,
            docs,
            out,
            overwrite,
        } => index_docs(&model, &docs, &out, overwrite),
        Command::Search {
            index,
            gi,
            level,
            lang,
            json,
        } => search(&index, Query { gi, level, lang }, json),
        Command::Serve {
            model,
            index,
            port,
            max_body,
        } => serve(model, index, port, max_body),
    }
}

pub fn load_config(args: &ConfigArgs) -> CliResult<TrainConfig> {
    let mut config = match &args.config {
        Some(path) => TrainConfig::load(path)?,
        None => TrainConfig::default(),
    };
    for item in &args.overrides {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| CliError::Data(format!("--set {item}: expected KEY=VALUE")))?;
        config
            .set(key.trim(), value.trim())
            .map_err(|e| CliError::Data(format!("--set {item}: {e}")))?;
    }
    config.validate()?;
    Ok(config)
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_error(path, e))
}

fn log_epoch(report: &trainer::EpochReport) {
    log::info!(
        "epoch {:>3}  span loss {:.4}  level loss {:.4}  grad norm {:.3}  val labeled F1 {:.4}",
        report.epoch,
        report.span_loss,
        report.level_loss,
        report.grad_norm,
        report.val.labeled.f1
    );
}

fn split_by_language(sentences: Vec<Sentence>) -> std::collections::BTreeMap<String, Vec<Sentence>> {
    let mut out = std::collections::BTreeMap::<String, Vec<Sentence>>::new();
    for s in sentences {
        out.entry(s.lang.clone()).or_default().push(s);
    }
    out
}

fn train(data: &Path, val: &Path, args: &ConfigArgs, out: &Path, multilingual: bool, alpha_search: bool) -> CliResult {
    let config = load_config(args)?;
    let train_set = load_corpus(data, config.max_len)?;
    let val_set = load_corpus(val, config.max_len)?;

    let ckpt = if multilingual {
        let mut val_by_lang = split_by_language(val_set);
        let corpora = split_by_language(train_set)
            .into_iter()
            .map(|(lang, train)| {
                let val = val_by_lang
                    .remove(&lang)
                    .ok_or_else(|| CliError::Data(format!("no validation sentences for language {lang}")))?;
                Ok(LanguageCorpus { lang, train, val })
            })
            .collect::<CliResult<Vec<_>>>()?;
        if let Some(lang) = val_by_lang.keys().next() {
            return Err(CliError::Data(format!("validation language {lang} has no training data")));
        }
        let outcome = trainer::train_multilingual(&config, &corpora)?;
        for (lang, report) in &outcome.validation.per_language {
            println!("{lang} validation labeled F1 {:.4}", report.labeled.f1);
        }
        outcome.checkpoint
    } else if alpha_search {
        let search = trainer::grid_search_alpha(&config, &train_set, &val_set)?;
        for r in &search.results {
            println!("alpha {}  best epoch {}  validation labeled F1 {:.4}", r.alpha, r.best_epoch, r.report.labeled.f1);
        }
        println!("selected alpha {}", search.best_alpha);
        search.checkpoint
    } else {
        trainer::train_with(&config, &train_set, &val_set, |report, _| log_epoch(report))?
    };

    ckpt.save(out)?;
    println!("best epoch {}", ckpt.provenance.epoch);
    println!("validation labeled F1 {:.4}", ckpt.provenance.val_labeled_f1);
    if let Some(acc) = ckpt.provenance.val_level_accuracy {
        println!("validation level accuracy {acc:.4}");
    }
    Ok(())
}

fn cv(data: &Path, folds: usize, args: &ConfigArgs, report: &Path) -> CliResult {
    let config = load_config(args)?;
    let sentences = load_corpus(data, config.max_len)?;
    let result = trainer::cross_validate(&config, &sentences, folds)?;
    write_json(report, &result)?;
    for fold in &result.per_fold {
        println!("fold {}  test labeled F1 {:.4}", fold.fold, fold.report.labeled.f1);
    }
    println!("mean labeled F1 {:.4}", result.mean.labeled.f1);
    Ok(())
}

fn eval(model: &Path, data: &Path, report: Option<&Path>, by_language: bool) -> CliResult {
    let ckpt = ModelCheckpoint::load(model)?;
    let sentences = load_corpus(data, ckpt.config.max_len)?;
    let mut text = if by_language {
        serde_json::to_string_pretty(&trainer::evaluate_by_language(&ckpt, &sentences)?)
    } else {
        serde_json::to_string_pretty(&trainer::evaluate(&ckpt, &sentences)?)
    }
    .map_err(|e| CliError::Internal(e.to_string()))?;
    text.push('\n');
    match report {
        Some(path) => fs::write(path, text).map_err(|e| io_error(path, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn resolve_lang(ckpt: &ModelCheckpoint, lang: Option<&str>) -> CliResult<String> {
    match (lang, ckpt.languages.as_slice()) {
        (Some(lang), _) => Ok(lang.to_string()),
        (None, [only]) => Ok(only.clone()),
        (None, langs) => Err(CliError::Data(format!("--lang is required; the model supports {}", langs.join(", ")))),
    }
}

/// Human-readable listing of one sentence's predictions.
pub fn render_prediction(p: &Prediction) -> String {
    let mut out = format!("{}\t", p.id);
    if let Some(level) = &p.level {
        out.push_str(&format!("{} ({:.2})\t", level.name, level.prob));
    }
    out.push_str(&p.text);
    out.push('\n');
    for span in &p.spans {
        let words: Vec<&str> = p.tokens[span.start..=span.end].iter().map(|t| t.text.as_str()).collect();
        out.push_str(&format!(
            "  [{}, {}]\t{}\t{:.3}\t{}\n",
            span.start,
            span.end,
            span.tag,
            span.prob,
            words.join(" ")
        ));
    }
    out
}

fn profile(model: &Path, text: &str, lang: Option<&str>, threshold: f64, json: bool) -> CliResult {
    let ckpt = ModelCheckpoint::load(model)?;
    let lang = resolve_lang(&ckpt, lang)?;
    let predictions = profile_text(&ckpt, text, &lang, threshold)?;
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    for p in &predictions {
        let line = if json {
            let mut line = serde_json::to_string(p).map_err(|e| CliError::Internal(e.to_string()))?;
            line.push('\n');
            line
        } else {
            render_prediction(p)
        };
        out.write_all(line.as_bytes()).map_err(|e| CliError::Internal(e.to_string()))?;
    }
    out.flush().map_err(|e| CliError::Internal(e.to_string()))
}

/// One line of the `index --docs` input.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DocInput {
    id: String,
    text: String,
    lang: String,
}

fn index_docs(model: &Path, docs: &Path, out: &Path, overwrite: bool) -> CliResult {
    let ckpt = ModelCheckpoint::load(model)?;
    let mut index = DocumentIndex::open_or_new(out, ckpt.levels.clone())?;
    let file = fs::File::open(docs).map_err(|e| io_error(docs, e))?;
    let mut seen = HashSet::new();
    let mut added = 0;
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_error(docs, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let at = |e: &dyn fmt::Display| CliError::Data(format!("{} line {}: {e}", docs.display(), n + 1));
        let doc: DocInput = serde_json::from_str(&line).map_err(|e| at(&e))?;
        if !seen.insert(doc.id.clone()) {
            return Err(at(&format!("document id {} repeated in the input", doc.id)));
        }
        index::index_document(&ckpt, &mut index, &doc.id, &doc.text, &doc.lang, overwrite).map_err(|e| at(&e))?;
        added += 1;
    }
    // Nothing is written unless every document was indexed.
    index.save(out)?;
    println!("indexed {added} documents; index holds {}", index.len());
    Ok(())
}

fn search(path: &Path, query: Query, json: bool) -> CliResult {
    let index = DocumentIndex::load(path)?;
    let hits = index.search(&query)?;
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    for doc in hits {
        let line = if json {
            serde_json::to_string(doc).map_err(|e| CliError::Internal(e.to_string()))?
        } else {
            let snippet = doc.snippet().replace(['\n', '\r', '\t'], " ");
            format!("{}\t{}\t{}\t{}", doc.id, doc.difficulty, doc.lang, snippet)
        };
        writeln!(out, "{line}").map_err(|e| CliError::Internal(e.to_string()))?;
    }
    out.flush().map_err(|e| CliError::Internal(e.to_string()))
}

fn serve(model: std::path::PathBuf, index: std::path::PathBuf, port: u16, max_body: usize) -> CliResult {
    let config = gramprof_server::ServerConfig {
        model,
        index,
        port,
        max_body,
    };
    let state = AppState::open(&config)?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Internal(e.to_string()))?;
    runtime
        .block_on(gramprof_server::serve_state(state, port))
        .map_err(|e| CliError::Internal(format!("server: {e}")))
}
