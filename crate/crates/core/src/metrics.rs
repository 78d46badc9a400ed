//! Span-level precision, recall and F1.
//!
//! Spans are keyed by `(sentence, start, end, tag)` and pooled over the whole
//! evaluation set. Labeled scores match on the full key, unlabeled scores on
//! `(sentence, start, end)`, and macro scores average per-tag values over the
//! tags present in gold or prediction. Empty denominators give 0.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabeledSpan {
    pub sentence: String,
    pub start: usize,
    pub end: usize,
    pub tag: String,
}

impl LabeledSpan {
    pub fn new(sentence: impl Into<String>, start: usize, end: usize, tag: impl Into<String>) -> Self {
        LabeledSpan {
            sentence: sentence.into(),
            start,
            end,
            tag: tag.into(),
        }
    }

    fn position(&self) -> (&str, usize, usize) {
        (&self.sentence, self.start, self.end)
    }
}

pub type SpanSet = HashSet<LabeledSpan>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub p: f64,
    pub r: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

impl Prf {
    pub fn from_counts(correct: usize, gold: usize, pred: usize) -> Self {
        let p = ratio(correct, pred);
        let r = ratio(correct, gold);
        Prf { p, r, f1: f1(p, r) }
    }
}

pub fn labeled_prf(gold: &SpanSet, pred: &SpanSet) -> Prf {
    let correct = pred.iter().filter(|s| gold.contains(*s)).count();
    Prf::from_counts(correct, gold.len(), pred.len())
}

pub fn unlabeled_prf(gold: &SpanSet, pred: &SpanSet) -> Prf {
    let g: HashSet<_> = gold.iter().map(LabeledSpan::position).collect();
    let p: HashSet<_> = pred.iter().map(LabeledSpan::position).collect();
    let correct = p.intersection(&g).count();
    Prf::from_counts(correct, g.len(), p.len())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TagStats {
    pub p: f64,
    pub r: f64,
    pub f1: f64,
    pub gold_count: usize,
    pub pred_count: usize,
}

/// Macro averages over tags in `gold ∪ pred`. The macro F1 is the mean of
/// per-tag F1 values.
pub fn macro_prf(gold: &SpanSet, pred: &SpanSet) -> (Prf, BTreeMap<String, TagStats>) {
    let tags: BTreeSet<&str> = gold.iter().chain(pred).map(|s| s.tag.as_str()).collect();
    let mut per_tag = BTreeMap::new();
    for tag in tags {
        let g = gold.iter().filter(|s| s.tag == tag).count();
        let p = pred.iter().filter(|s| s.tag == tag).count();
        let c = pred.iter().filter(|s| s.tag == tag && gold.contains(*s)).count();
        let prf = Prf::from_counts(c, g, p);
        per_tag.insert(
            tag.to_string(),
            TagStats {
                p: prf.p,
                r: prf.r,
                f1: prf.f1,
                gold_count: g,
                pred_count: p,
            },
        );
    }
    let n = per_tag.len();
    let mean = |f: fn(&TagStats) -> f64| ratio_f(per_tag.values().map(f).sum(), n);
    let m = Prf {
        p: mean(|t| t.p),
        r: mean(|t| t.r),
        f1: mean(|t| t.f1),
    };
    (m, per_tag)
}

fn ratio_f(sum: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

pub fn level_accuracy<S: AsRef<str>>(gold: &[S], pred: &[S]) -> Result<f64> {
    if gold.len() != pred.len() {
        return Err(Error::LengthMismatch {
            left: gold.len(),
            right: pred.len(),
        });
    }
    if gold.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let hits = gold.iter().zip(pred).filter(|(g, p)| g.as_ref() == p.as_ref()).count();
    Ok(hits as f64 / gold.len() as f64)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub labeled: Prf,
    pub unlabeled: Prf,
    #[serde(rename = "macro")]
    pub macro_avg: Prf,
    pub per_tag: BTreeMap<String, TagStats>,
    pub level_accuracy: Option<f64>,
}

impl MetricsReport {
    pub fn from_spans(gold: &SpanSet, pred: &SpanSet) -> Self {
        let (macro_avg, per_tag) = macro_prf(gold, pred);
        MetricsReport {
            labeled: labeled_prf(gold, pred),
            unlabeled: unlabeled_prf(gold, pred),
            macro_avg,
            per_tag,
            level_accuracy: None,
        }
    }

    /// Arithmetic mean of the labeled, unlabeled and macro scores and of the
    /// level accuracy (when every report has one). `per_tag` is left empty.
    pub fn mean(reports: &[MetricsReport]) -> Result<Self> {
        if reports.is_empty() {
            return Err(Error::EmptyEvaluation);
        }
        let n = reports.len() as f64;
        let avg = |f: &dyn Fn(&MetricsReport) -> Prf| {
            let (p, r, f1) = reports.iter().map(f).fold((0.0, 0.0, 0.0), |acc, x| {
                (acc.0 + x.p, acc.1 + x.r, acc.2 + x.f1)
            });
            Prf {
                p: p / n,
                r: r / n,
                f1: f1 / n,
            }
        };
        let level_accuracy = reports
            .iter()
            .map(|r| r.level_accuracy)
            .sum::<Option<f64>>()
            .map(|s| s / n);
        Ok(MetricsReport {
            labeled: avg(&|r| r.labeled),
            unlabeled: avg(&|r| r.unlabeled),
            macro_avg: avg(&|r| r.macro_avg),
            per_tag: BTreeMap::new(),
            level_accuracy,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(spans: &[(usize, usize, &str)]) -> SpanSet {
        spans.iter().map(|&(i, j, t)| LabeledSpan::new("s", i, j, t)).collect()
    }

    fn approx(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn worked_example() {
        let gold = set(&[(0, 1, "A"), (2, 4, "B"), (5, 5, "A")]);
        let pred = set(&[(0, 1, "A"), (2, 4, "C"), (6, 6, "A")]);
        let l = labeled_prf(&gold, &pred);
        assert!(approx(l.p, 1.0 / 3.0) && approx(l.r, 1.0 / 3.0) && approx(l.f1, 1.0 / 3.0));
        let u = unlabeled_prf(&gold, &pred);
        assert!(approx(u.p, 2.0 / 3.0) && approx(u.r, 2.0 / 3.0));
        let (m, per_tag) = macro_prf(&gold, &pred);
        assert!(approx(per_tag["A"].p, 0.5) && approx(per_tag["A"].r, 0.5));
        assert_eq!(per_tag["B"].p, 0.0);
        assert_eq!(per_tag["C"].r, 0.0);
        assert!(approx(m.p, 1.0 / 6.0) && approx(m.r, 1.0 / 6.0) && approx(m.f1, 1.0 / 6.0));
    }

    #[test]
    fn identity_and_empty() {
        let gold = set(&[(0, 1, "A"), (2, 2, "B")]);
        let all_one = Prf { p: 1.0, r: 1.0, f1: 1.0 };
        assert_eq!(labeled_prf(&gold, &gold), all_one);
        assert_eq!(macro_prf(&gold, &gold).0, all_one);
        let zero = Prf::default();
        assert_eq!(labeled_prf(&gold, &SpanSet::new()), zero);
        assert_eq!(labeled_prf(&SpanSet::new(), &SpanSet::new()), zero);
    }

    #[test]
    fn macro_f1_is_mean_of_per_tag_f1() {
        let gold = set(&[(0, 0, "A"), (1, 1, "A")]);
        let pred = set(&[(0, 0, "A")]);
        let (m, _) = macro_prf(&gold, &pred);
        assert!(approx(m.p, 1.0) && approx(m.r, 0.5) && approx(m.f1, 2.0 / 3.0));
    }

    #[test]
    fn level_accuracy_cases() {
        assert_eq!(level_accuracy(&["A2", "B1"], &["A2", "B1"]).unwrap(), 1.0);
        assert_eq!(level_accuracy(&["A2", "B1"], &["A2", "C1"]).unwrap(), 0.5);
        assert!(matches!(level_accuracy::<&str>(&[], &[]), Err(Error::EmptyEvaluation)));
        assert!(level_accuracy(&["A2"], &["A2", "B1"]).is_err());
    }

    #[test]
    fn report_json_shape() {
        let gold = set(&[(0, 1, "A")]);
        let mut r = MetricsReport::from_spans(&gold, &gold);
        r.level_accuracy = Some(0.5);
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["labeled"]["f1"], 1.0);
        assert_eq!(v["macro"]["p"], 1.0);
        assert_eq!(v["per_tag"]["A"]["gold_count"], 1);
        assert_eq!(v["level_accuracy"], 0.5);
    }

    #[test]
    fn mean_of_reports() {
        let a = MetricsReport {
            labeled: Prf { p: 1.0, r: 0.5, f1: 0.6 },
            level_accuracy: Some(1.0),
            ..Default::default()
        };
        let b = MetricsReport {
            labeled: Prf { p: 0.0, r: 0.5, f1: 0.2 },
            level_accuracy: Some(0.5),
            ..Default::default()
        };
        let m = MetricsReport::mean(&[a, b.clone()]).unwrap();
        assert!(approx(m.labeled.p, 0.5) && approx(m.labeled.f1, 0.4));
        assert_eq!(m.level_accuracy, Some(0.75));
        let c = MetricsReport { level_accuracy: None, ..b };
        assert_eq!(MetricsReport::mean(&[c.clone(), c]).unwrap().level_accuracy, None);
    }
}
