//! Overfits the desk configuration on the English fixture and reports
//! training, held-out and level scores per epoch.
//!
//! `cargo run --release -p gramprof-core --example overfit -- [lr] [batch] [epochs] [seed] [dropout]`

use gramprof_core::config::TrainConfig;
use gramprof_core::fixtures;
use gramprof_core::trainer::{evaluate, train_with};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, default: f64| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(default);
    let config = TrainConfig {
        lr: arg(0, 1e-3),
        batch_size: arg(1, 10.0) as usize,
        epochs: arg(2, 100.0) as usize,
        seed: arg(3, 0.0) as u64,
        dropout: arg(4, 0.1),
        multitask: true,
        ..TrainConfig::default()
    };
    let train = fixtures::english(50, 1);
    let val = fixtures::english(50, 3);
    let held_out = fixtures::english(50, 2);
    let start = std::time::Instant::now();
    let ckpt = train_with(&config, &train, &val, |r, ckpt| {
        if r.epoch % 5 == 0 || r.epoch == 1 {
            let train_report = evaluate(ckpt, &train).expect("evaluation");
            let test = evaluate(ckpt, &held_out).expect("evaluation");
            println!(
                "epoch {:3} loss {:8.3} level {:6.3} train F1 {:.3} val F1 {:.3} level acc {:.3} held-out F1 {:.3} ({:.0?})",
                r.epoch,
                r.span_loss,
                r.level_loss,
                train_report.labeled.f1,
                r.val.labeled.f1,
                r.val.level_accuracy.unwrap_or(0.0),
                test.labeled.f1,
                start.elapsed()
            );
        }
    })
    .expect("training");
    let fit = evaluate(&ckpt, &train).expect("evaluation");
    let test = evaluate(&ckpt, &held_out).expect("evaluation");
    println!(
        "selected epoch {}: train F1 {:.4}, train level accuracy {:.4}, validation F1 {:.4}, held-out F1 {:.4}",
        ckpt.provenance.epoch,
        fit.labeled.f1,
        fit.level_accuracy.unwrap_or(0.0),
        ckpt.provenance.val_labeled_f1,
        test.labeled.f1
    );
    for (tag, stats) in &test.per_tag {
        println!("  {tag:16} P {:.3} R {:.3} F1 {:.3} gold {}", stats.p, stats.r, stats.f1, stats.gold_count);
    }
}
