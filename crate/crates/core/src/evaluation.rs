//! Classification metrics, confusion matrices and stratified folds.

use std::fmt;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Label, LabeledDocument};
use crate::error::{Error, Result};

/// 2x2 counts indexed `[gold][predicted]` in `[NotHope, Hope]` order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[usize; 2]; 2],
}

impl ConfusionMatrix {
    pub fn get(&self, gold: Label, predicted: Label) -> usize {
        self.counts[gold.index()][predicted.index()]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> usize {
        self.counts[0][0] + self.counts[1][1]
    }

    pub fn support(&self, label: Label) -> usize {
        self.counts[label.index()].iter().sum()
    }
}

impl fmt::Display for ConfusionMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self
            .counts
            .iter()
            .flatten()
            .map(|c| c.to_string().len())
            .max()
            .unwrap_or(1)
            .max(Label::NotHope.as_str().len());
        let corner = "gold \\ pred";
        writeln!(
            f,
            "{corner:<11}  {:>width$}  {:>width$}",
            Label::NotHope.as_str(),
            Label::Hope.as_str()
        )?;
        for gold in Label::ALL {
            writeln!(
                f,
                "{:<11}  {:>width$}  {:>width$}",
                gold.as_str(),
                self.get(gold, Label::NotHope),
                self.get(gold, Label::Hope)
            )?;
        }
        Ok(())
    }
}

pub fn confusion(gold: &[Label], predicted: &[Label]) -> Result<ConfusionMatrix> {
    if gold.len() != predicted.len() {
        return Err(Error::LengthMismatch(gold.len(), predicted.len()));
    }
    if gold.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut cm = ConfusionMatrix::default();
    for (g, p) in gold.iter().zip(predicted) {
        cm.counts[g.index()][p.index()] += 1;
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    /// `[NotHope, Hope]`.
    pub per_class: [ClassMetrics; 2],
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
}

impl MetricsReport {
    pub fn class(&self, label: Label) -> &ClassMetrics {
        &self.per_class[label.index()]
    }

    pub fn summary(&self) -> MetricsSummary {
        MetricsSummary {
            accuracy: self.accuracy,
            macro_f1: self.macro_f1,
            weighted_f1: self.weighted_f1,
            macro_precision: self.macro_precision,
            macro_recall: self.macro_recall,
            weighted_precision: self.weighted_precision,
            weighted_recall: self.weighted_recall,
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class and averaged scores. Zero denominators give zero.
pub fn metrics(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyInput);
    }
    let per_class = Label::ALL.map(|c| {
        let tp = cm.get(c, c);
        let predicted: usize = Label::ALL.iter().map(|&g| cm.get(g, c)).sum();
        let support = cm.support(c);
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        ClassMetrics {
            precision,
            recall,
            f1,
            support,
        }
    });
    let macro_avg = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / 2.0;
    let weighted_avg =
        |f: fn(&ClassMetrics) -> f64| per_class.iter().map(|c| c.support as f64 * f(c)).sum::<f64>() / total as f64;
    Ok(MetricsReport {
        accuracy: ratio(cm.correct(), total),
        macro_precision: macro_avg(|c| c.precision),
        macro_recall: macro_avg(|c| c.recall),
        macro_f1: macro_avg(|c| c.f1),
        weighted_precision: weighted_avg(|c| c.precision),
        weighted_recall: weighted_avg(|c| c.recall),
        weighted_f1: weighted_avg(|c| c.f1),
        per_class,
    })
}

/// Headline scores for one evaluation, suitable for a CSV row or for
/// averaging across folds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub weighted_f1: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
}

impl MetricsSummary {
    /// Arithmetic mean of each field.
    pub fn mean(rows: &[MetricsSummary]) -> Option<MetricsSummary> {
        if rows.is_empty() {
            return None;
        }
        let n = rows.len() as f64;
        let avg = |f: fn(&MetricsSummary) -> f64| rows.iter().map(f).sum::<f64>() / n;
        Some(MetricsSummary {
            accuracy: avg(|r| r.accuracy),
            macro_f1: avg(|r| r.macro_f1),
            weighted_f1: avg(|r| r.weighted_f1),
            macro_precision: avg(|r| r.macro_precision),
            macro_recall: avg(|r| r.macro_recall),
            weighted_precision: avg(|r| r.weighted_precision),
            weighted_recall: avg(|r| r.weighted_recall),
        })
    }
}

pub const CSV_HEADER: [&str; 10] = [
    "model",
    "language",
    "split",
    "accuracy",
    "macro_f1",
    "weighted_f1",
    "macro_precision",
    "macro_recall",
    "weighted_precision",
    "weighted_recall",
];

/// Writes metric rows as CSV, scores rounded to three decimals.
pub struct ReportWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> ReportWriter<W> {
    pub fn new(writer: W) -> Result<Self> {
        let mut inner = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        inner.write_record(CSV_HEADER)?;
        Ok(ReportWriter { inner })
    }

    pub fn row(&mut self, model: &str, language: &str, split: &str, m: &MetricsSummary) -> Result<()> {
        let scores = [
            m.accuracy,
            m.macro_f1,
            m.weighted_f1,
            m.macro_precision,
            m.macro_recall,
            m.weighted_precision,
            m.weighted_recall,
        ]
        .map(|v| format!("{v:.3}"));
        let mut record = vec![model.to_string(), language.to_string(), split.to_string()];
        record.extend(scores);
        self.inner.write_record(&record)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush().map_err(|e| Error::io("<report output>", e))?;
        self.inner
            .into_inner()
            .map_err(|e| Error::io("<report output>", e.into_error()))
    }
}

/// `k` disjoint folds of document ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub k: usize,
    pub folds: Vec<Vec<String>>,
}

/// Shuffles each class with a seeded RNG and deals it round-robin across
/// folds. The dealing position carries over between classes so fold sizes
/// stay balanced as well. Ids inside a fold keep corpus order.
pub fn stratified_kfold(docs: &[LabeledDocument], k: usize, rng_seed: u64) -> Result<FoldSplit> {
    if k < 2 {
        return Err(Error::Config(format!("k must be >= 2, got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut assignment = vec![0usize; docs.len()];
    let mut next = 0usize;
    for label in Label::ALL {
        let mut members: Vec<usize> = docs
            .iter()
            .enumerate()
            .filter(|(_, d)| d.label == label)
            .map(|(i, _)| i)
            .collect();
        if members.len() < k {
            return Err(Error::ClassTooSmall {
                class: label.as_str(),
                count: members.len(),
                k,
            });
        }
        members.shuffle(&mut rng);
        for i in members {
            assignment[i] = next;
            next = (next + 1) % k;
        }
    }
    let mut folds = vec![Vec::new(); k];
    for (doc, &fold) in docs.iter().zip(&assignment) {
        folds[fold].push(doc.doc.id.clone());
    }
    Ok(FoldSplit { k, folds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashMap;
    use Label::{Hope as H, NotHope as N};

    #[test]
    fn confusion_tally() {
        let cm = confusion(&[H, H, N], &[H, N, N]).unwrap();
        assert_eq!(cm.get(H, H), 1);
        assert_eq!(cm.get(H, N), 1);
        assert_eq!(cm.get(N, N), 1);
        assert_eq!(cm.get(N, H), 0);
        let diag = confusion(&[H, N, N], &[H, N, N]).unwrap();
        assert_eq!(diag.get(H, N) + diag.get(N, H), 0);
        assert!(matches!(confusion(&[H], &[H, N]), Err(Error::LengthMismatch(1, 2))));
        assert!(matches!(confusion(&[], &[]), Err(Error::EmptyInput)));
    }

    #[test]
    fn metrics_worked_example() {
        let cm = ConfusionMatrix {
            counts: [[6, 1], [1, 2]],
        };
        let m = metrics(&cm).unwrap();
        let h = m.class(H);
        assert!((h.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((h.recall - 2.0 / 3.0).abs() < 1e-12);
        assert!((h.f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.accuracy - 0.8).abs() < 1e-12);
        assert_eq!(h.support, 3);
        let n = m.class(N);
        assert!((n.precision - 6.0 / 7.0).abs() < 1e-12);
        let expected_weighted = (3.0 * h.f1 + 7.0 * n.f1) / 10.0;
        assert!((m.weighted_f1 - expected_weighted).abs() < 1e-12);
    }

    #[test]
    fn perfect_predictions() {
        let m = metrics(&confusion(&[H, N, H, N], &[H, N, H, N]).unwrap()).unwrap();
        for v in [
            m.accuracy,
            m.macro_f1,
            m.weighted_f1,
            m.macro_precision,
            m.weighted_recall,
        ] {
            assert_eq!(v, 1.0);
        }
    }

    #[test]
    fn zero_denominators_give_zero() {
        let m = metrics(&confusion(&[N, N], &[N, N]).unwrap()).unwrap();
        let h = m.class(H);
        assert_eq!((h.precision, h.recall, h.f1, h.support), (0.0, 0.0, 0.0, 0));
        assert_eq!(m.weighted_f1, 1.0);
        assert_eq!(m.macro_f1, 0.5);
        assert!(matches!(metrics(&ConfusionMatrix::default()), Err(Error::EmptyInput)));
    }

    #[test]
    fn balanced_supports_macro_equals_weighted() {
        let m = metrics(&confusion(&[H, H, N, N], &[H, N, H, N]).unwrap()).unwrap();
        assert!((m.macro_f1 - m.weighted_f1).abs() < 1e-15);
    }

    #[test]
    fn grid_rendering() {
        let cm = ConfusionMatrix {
            counts: [[6, 1], [1, 12]],
        };
        let text = cm.to_string();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines.iter().all(|l| l.len() == lines[0].len()));
        assert!(lines[2].starts_with("Hope"));
        assert!(lines[2].ends_with("12"));
    }

    #[test]
    fn csv_rows_are_rounded() {
        let m = MetricsSummary {
            accuracy: 0.84449,
            macro_f1: 0.8,
            weighted_f1: 1.0,
            macro_precision: 0.0,
            macro_recall: 0.12345,
            weighted_precision: 0.5,
            weighted_recall: 0.9999,
        };
        let mut w = ReportWriter::new(Vec::new()).unwrap();
        w.row("lr", "english", "dev", &m).unwrap();
        let out = String::from_utf8(w.finish().unwrap()).unwrap();
        assert_eq!(
            out,
            "model,language,split,accuracy,macro_f1,weighted_f1,macro_precision,macro_recall,weighted_precision,weighted_recall\n\
             lr,english,dev,0.844,0.800,1.000,0.000,0.123,0.500,1.000\n"
        );
    }

    fn labeled(labels: &[Label]) -> Vec<LabeledDocument> {
        labels
            .iter()
            .enumerate()
            .map(|(i, &l)| LabeledDocument::new(format!("{i}"), "t", l))
            .collect()
    }

    #[test]
    fn kfold_examples() {
        let docs = labeled(&[H, H, H, H, H, N, N, N, N, N]);
        let split = stratified_kfold(&docs, 5, 1).unwrap();
        let label_of: HashMap<&str, Label> = docs.iter().map(|d| (d.doc.id.as_str(), d.label)).collect();
        for fold in &split.folds {
            assert_eq!(fold.len(), 2);
            assert_eq!(fold.iter().filter(|id| label_of[id.as_str()] == H).count(), 1);
        }
        let small = labeled(&[H, H, N, N]);
        let split = stratified_kfold(&small, 2, 0).unwrap();
        assert!(split.folds.iter().all(|f| f.len() == 2));
        let short = labeled(&[H, H, H, N, N, N, N, N]);
        assert!(matches!(
            stratified_kfold(&short, 5, 0),
            Err(Error::ClassTooSmall { count: 3, k: 5, .. })
        ));
        assert!(stratified_kfold(&small, 1, 0).is_err());
    }

    proptest! {
        #[test]
        fn folds_partition_and_stratify(labels in proptest::collection::vec(any::<bool>(), 10..120), k in 2usize..6, seed in any::<u64>()) {
            let labels: Vec<Label> = labels.into_iter().map(|h| if h { H } else { N }).collect();
            let docs = labeled(&labels);
            match stratified_kfold(&docs, k, seed) {
                Ok(split) => {
                    let mut all: Vec<&String> = split.folds.iter().flatten().collect();
                    prop_assert_eq!(all.len(), docs.len());
                    all.sort();
                    all.dedup();
                    prop_assert_eq!(all.len(), docs.len());
                    for label in Label::ALL {
                        let counts: Vec<usize> = split.folds.iter().map(|f| f.iter().filter(|id| labels[id.parse::<usize>().unwrap()] == label).count()).collect();
                        prop_assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
                    }
                }
                Err(Error::ClassTooSmall { .. }) => {
                    prop_assert!(labels.iter().filter(|&&l| l == H).count() < k || labels.iter().filter(|&&l| l == N).count() < k);
                }
                Err(e) => prop_assert!(false, "unexpected {e}"),
            }
        }

        #[test]
        fn metrics_properties(pairs in proptest::collection::vec((any::<bool>(), any::<bool>()), 1..80), rot in 0usize..80) {
            let gold: Vec<Label> = pairs.iter().map(|p| if p.0 { H } else { N }).collect();
            let pred: Vec<Label> = pairs.iter().map(|p| if p.1 { H } else { N }).collect();
            let m = metrics(&confusion(&gold, &pred).unwrap()).unwrap();
            let hits = gold.iter().zip(&pred).filter(|(g, p)| g == p).count();
            prop_assert_eq!(m.accuracy, hits as f64 / gold.len() as f64);
            let (f0, f1) = (m.per_class[0].f1, m.per_class[1].f1);
            prop_assert!(m.macro_f1 <= f0.max(f1) + 1e-15 && m.macro_f1 >= f0.min(f1) - 1e-15);
            for v in [m.accuracy, m.macro_f1, m.weighted_f1, m.macro_precision, m.macro_recall, m.weighted_precision, m.weighted_recall] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            let r = rot % gold.len();
            let mut g2 = gold.clone();
            let mut p2 = pred.clone();
            g2.rotate_left(r);
            p2.rotate_left(r);
            g2.reverse();
            p2.reverse();
            prop_assert_eq!(metrics(&confusion(&g2, &p2).unwrap()).unwrap(), m);
        }
    }
}
