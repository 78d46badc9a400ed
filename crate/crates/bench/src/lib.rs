//! Shared setup for the criterion benchmarks.

use gramprof_core::checkpoint::ModelCheckpoint;
use gramprof_core::config::TrainConfig;
use gramprof_core::corpus::{build_tag_inventory, Sentence, Vocab};
use gramprof_core::fixtures;

/// Untrained multitask checkpoint with the desk encoder (d=64, 2 layers)
/// over the English fixture vocabulary.
pub fn desk_checkpoint() -> ModelCheckpoint {
    let corpus = fixtures::english(50, 1);
    checkpoint(&corpus, TrainConfig {
        multitask: true,
        ..TrainConfig::default()
    })
}

pub fn checkpoint(corpus: &[Sentence], config: TrainConfig) -> ModelCheckpoint {
    ModelCheckpoint::new(
        config,
        build_tag_inventory(corpus, 1).expect("fixture tags"),
        Vocab::from_sentences(corpus),
        vec!["en".into()],
        false,
    )
    .expect("valid desk config")
}

/// `n` fixture sentences joined into one text.
pub fn fixture_text(n: usize, seed: u64) -> String {
    fixtures::english(n, seed)
        .iter()
        .map(|s| s.text.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}
