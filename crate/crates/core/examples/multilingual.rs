//! Trains one shared model on the English and Chinese fixtures with
//! namespaced tags and prints per-language training scores.
//!
//! `cargo run --release -p gramprof-core --example multilingual -- [lr] [batch] [epochs]`

use gramprof_core::config::TrainConfig;
use gramprof_core::fixtures;
use gramprof_core::trainer::{evaluate_by_language, train_multilingual, LanguageCorpus};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, default: f64| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(default);
    let config = TrainConfig {
        lr: arg(0, 1e-3),
        batch_size: arg(1, 25.0) as usize,
        epochs: arg(2, 100.0) as usize,
        ..TrainConfig::default()
    };
    let corpora = [
        LanguageCorpus {
            lang: "en".into(),
            train: fixtures::english(50, 1),
            val: fixtures::english(50, 1),
        },
        LanguageCorpus {
            lang: "zh".into(),
            train: fixtures::chinese(50, 1),
            val: fixtures::chinese(50, 1),
        },
    ];
    let start = std::time::Instant::now();
    let outcome = train_multilingual(&config, &corpora).expect("training");
    let train: Vec<_> = corpora.iter().flat_map(|c| c.train.clone()).collect();
    let report = evaluate_by_language(&outcome.checkpoint, &train).expect("evaluation");
    println!(
        "selected epoch {} in {:.0?}; pooled training F1 {:.4}",
        outcome.checkpoint.provenance.epoch,
        start.elapsed(),
        report.pooled.labeled.f1
    );
    for (lang, r) in &report.per_language {
        println!("  {lang}: labeled F1 {:.4}", r.labeled.f1);
    }
}
