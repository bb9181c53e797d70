//! Confusion matrices, per-class precision/recall/F1 reports, and CSV
//! exports of embeddings and training curves.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifier::{infer_set, CnnModel, ExampleSet, HistoryRecord, TrainHistory};
use crate::error::{Error, Result};
use crate::nn::Scalar;

/// Counts with rows indexed by true class and columns by predicted class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub class_map: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

pub fn confusion_matrix(
    predictions: &[usize],
    labels: &[usize],
    class_map: &[String],
) -> Result<ConfusionMatrix> {
    if predictions.len() != labels.len() {
        return Err(Error::Input(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let c = class_map.len();
    let mut counts = vec![vec![0u64; c]; c];
    for (&p, &t) in predictions.iter().zip(labels) {
        if let Some(&bad) = [t, p].iter().find(|&&i| i >= c) {
            return Err(Error::Label {
                label: bad,
                classes: c,
            });
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix {
        class_map: class_map.to_vec(),
        counts,
    })
}

impl ConfusionMatrix {
    pub fn classes(&self) -> usize {
        self.class_map.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sum(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn column_sum(&self, class: usize) -> u64 {
        self.counts.iter().map(|r| r[class]).sum()
    }

    /// CSV with a header of predicted classes and one row per true class.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["true\\predicted".to_string()];
        header.extend(self.class_map.iter().cloned());
        w.write_record(&header).expect("in-memory csv");
        for (name, row) in self.class_map.iter().zip(&self.counts) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(u64::to_string));
            w.write_record(&rec).expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8")
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// `2PR / (P + R)`, or 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    /// Nothing was predicted as this class; precision reported as 0.
    pub no_predictions: bool,
    /// No true examples of this class; recall reported as 0.
    pub no_support: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub classes: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub total: u64,
}

pub fn classification_report(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Evaluation(
            "report of an empty confusion matrix".into(),
        ));
    }
    let classes = (0..cm.classes())
        .map(|k| {
            let hit = cm.counts[k][k] as f64;
            let (support, predicted) = (cm.row_sum(k), cm.column_sum(k));
            let precision = if predicted > 0 {
                hit / predicted as f64
            } else {
                0.0
            };
            let recall = if support > 0 {
                hit / support as f64
            } else {
                0.0
            };
            ClassMetrics {
                class: cm.class_map[k].clone(),
                precision,
                recall,
                f1: f1_score(precision, recall),
                support,
                no_predictions: predicted == 0,
                no_support: support == 0,
            }
        })
        .collect();
    Ok(MetricsReport {
        classes,
        accuracy: cm.trace() as f64 / total as f64,
        total,
    })
}

impl MetricsReport {
    /// Full-precision JSON.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("metrics report: {e}")))
    }

    /// Aligned text table at two decimals; flagged metrics carry a `*`.
    pub fn render_table(&self) -> String {
        let width = self
            .classes
            .iter()
            .map(|c| c.class.len())
            .chain([8])
            .max()
            .unwrap_or(8);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:>9}  {:>6}  {:>8}  {:>7}",
            "class", "precision", "recall", "f1-score", "support"
        );
        let mark = |flag: bool| if flag { "*" } else { " " };
        for c in &self.classes {
            let _ = writeln!(
                out,
                "{:<width$}  {:>8.2}{}  {:>5.2}{}  {:>8.2}  {:>7}",
                c.class,
                c.precision,
                mark(c.no_predictions),
                c.recall,
                mark(c.no_support),
                c.f1,
                c.support
            );
        }
        let _ = writeln!(
            out,
            "{:<width$}  {:>9.2}  ({} windows)",
            "accuracy", self.accuracy, self.total
        );
        if self
            .classes
            .iter()
            .any(|c| c.no_predictions || c.no_support)
        {
            out.push_str("* undefined (zero denominator), reported as 0\n");
        }
        out
    }
}

/// One CSV row per example: `f0..f255`, true class name, predicted class name.
pub fn export_embeddings<T: Scalar>(
    model: &CnnModel<T>,
    set: &ExampleSet,
    path: &Path,
) -> Result<usize> {
    let (preds, embeds) = infer_set(model, set)?;
    let names = model.class_map();
    let width = embeds
        .first()
        .map_or(model.geometry().hidden_units, Vec::len);
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut header: Vec<String> = (0..width).map(|i| format!("f{i}")).collect();
    header.push("true".into());
    header.push("predicted".into());
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for ((emb, &p), &t) in embeds.iter().zip(&preds).zip(set.labels()) {
        let mut rec: Vec<String> = emb.iter().map(f32::to_string).collect();
        rec.push(names[t].clone());
        rec.push(names[p].clone());
        w.write_record(&rec).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(preds.len())
}

/// CSV of `seconds,epoch,loss,val_accuracy`, one row per record.
pub fn export_history(history: &TrainHistory, path: &Path) -> Result<usize> {
    if history.records.is_empty() {
        return Err(Error::Evaluation("training history has no records".into()));
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in &history.records {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(history.records.len())
}

pub fn read_history(path: &Path) -> Result<TrainHistory> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let records = r
        .deserialize::<HistoryRecord>()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    Ok(TrainHistory { records })
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other:?}", path.display())),
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::classifier::{build_model, TaskKind};
    use crate::features::NormalizePolicy;

    fn names(c: usize) -> Vec<String> {
        (0..c).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn hand_counted_matrix() {
        let cm = confusion_matrix(&[0, 1, 1], &[0, 0, 1], &names(2)).unwrap();
        assert_eq!(cm.counts, vec![vec![1, 1], vec![0, 1]]);
        let r = classification_report(&cm).unwrap();
        assert_eq!(r.accuracy, 2.0 / 3.0);
        assert_eq!(r.classes[0].precision, 1.0);
        assert_eq!(r.classes[0].recall, 0.5);
        assert_eq!(r.classes[1].precision, 0.5);
    }

    #[test]
    fn perfect_predictions_give_a_diagonal_and_unit_metrics() {
        let labels = [0, 1, 2, 3, 3, 2, 1, 0, 0];
        let cm = confusion_matrix(&labels, &labels, &names(4)).unwrap();
        for (i, row) in cm.counts.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert!(i == j || v == 0);
            }
        }
        let r = classification_report(&cm).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert!(r
            .classes
            .iter()
            .all(|c| c.precision == 1.0 && c.recall == 1.0 && c.f1 == 1.0));
    }

    #[test]
    fn empty_input_gives_a_zero_matrix_and_no_report() {
        let cm = confusion_matrix(&[], &[], &names(3)).unwrap();
        assert_eq!(cm.total(), 0);
        assert!(matches!(
            classification_report(&cm),
            Err(Error::Evaluation(_))
        ));
    }

    #[test]
    fn bad_inputs_are_rejected() {
        assert!(matches!(
            confusion_matrix(&[0, 1], &[0], &names(2)),
            Err(Error::Input(_))
        ));
        assert!(matches!(
            confusion_matrix(&[2], &[0], &names(2)),
            Err(Error::Label {
                label: 2,
                classes: 2
            })
        ));
    }

    #[test]
    fn missing_classes_are_flagged_not_dropped() {
        // class 2 never occurs and is never predicted; class 1 is never predicted
        let cm = confusion_matrix(&[0, 0, 0], &[0, 1, 0], &names(3)).unwrap();
        let r = classification_report(&cm).unwrap();
        assert_eq!(r.classes.len(), 3);
        assert!(r.classes[1].no_predictions && !r.classes[1].no_support);
        assert_eq!(r.classes[1].precision, 0.0);
        assert!(r.classes[2].no_predictions && r.classes[2].no_support);
        assert_eq!(r.classes[2].f1, 0.0);
        assert!(r.render_table().contains('*'));
    }

    #[test]
    fn f1_of_published_pairs_rounds_to_the_published_value() {
        for (p, r, f1) in [(0.81, 0.91, 0.86), (0.56, 0.40, 0.47), (1.0, 1.0, 1.0)] {
            assert!((f1_score(p, r) - f1).abs() <= 0.005, "{p} {r}");
        }
        assert_eq!(f1_score(0.0, 0.0), 0.0);
    }

    #[test]
    fn table_renders_two_decimals() {
        let cm = confusion_matrix(
            &[0, 1, 1],
            &[0, 0, 1],
            &["4G".to_string(), "5G NR".to_string()],
        )
        .unwrap();
        let t = classification_report(&cm).unwrap().render_table();
        assert!(t.contains("0.50"), "{t}");
        assert!(t.contains("accuracy") && t.contains("0.67"), "{t}");
        assert!(!t.contains('*'));
    }

    #[test]
    fn csv_has_a_header_and_one_row_per_class() {
        let cm = confusion_matrix(&[0, 1, 1], &[0, 0, 1], &names(2)).unwrap();
        assert_eq!(cm.to_csv(), "true\\predicted,c0,c1\nc0,1,1\nc1,0,1\n");
    }

    #[test]
    fn report_json_keeps_full_precision() {
        let cm = confusion_matrix(&[0, 1, 1], &[0, 0, 1], &names(2)).unwrap();
        let r = classification_report(&cm).unwrap();
        assert_eq!(MetricsReport::from_json(&r.to_json()).unwrap(), r);
    }

    #[test]
    fn empty_history_is_an_evaluation_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = export_history(&TrainHistory::default(), &dir.path().join("h.csv")).unwrap_err();
        assert!(matches!(err, Error::Evaluation(_)));
    }

    #[test]
    fn embeddings_have_one_row_per_window() {
        let model = build_model::<f32>(TaskKind::Protocol, 3);
        let w = crate::features::ChannelizedWindow::from_data(
            (0..4096).map(|i| ((i % 17) as f32 - 8.0) / 8.0).collect(),
        )
        .unwrap();
        let set =
            ExampleSet::from_windows([(&w, 0), (&w, 2), (&w, 1)], NormalizePolicy::None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.csv");
        assert_eq!(export_embeddings(&model, &set, &path).unwrap(), 3);
        let mut r = csv::Reader::from_path(&path).unwrap();
        assert_eq!(r.headers().unwrap().len(), 258);
        let rows: Vec<csv::StringRecord> = r.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 3);
        assert_eq!(&rows[1][256], "802.11a");
        for row in &rows {
            assert!(row
                .iter()
                .take(256)
                .all(|v| v.parse::<f32>().unwrap() >= 0.0));
        }
    }

    fn permuted(cm: &ConfusionMatrix, perm: &[usize]) -> ConfusionMatrix {
        // new class i is old class perm[i]
        let c = cm.classes();
        let mut counts = vec![vec![0; c]; c];
        for i in 0..c {
            for j in 0..c {
                counts[i][j] = cm.counts[perm[i]][perm[j]];
            }
        }
        ConfusionMatrix {
            class_map: perm.iter().map(|&k| cm.class_map[k].clone()).collect(),
            counts,
        }
    }

    fn labelled_pairs() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
        (1usize..8).prop_flat_map(|c| (Just(c), prop::collection::vec((0..c, 0..c), 1..200)))
    }

    proptest! {
        #[test]
        fn supports_sum_to_total_and_accuracy_is_trace_over_total((c, pairs) in labelled_pairs()) {
            let (labels, preds): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
            let cm = confusion_matrix(&preds, &labels, &names(c)).unwrap();
            prop_assert_eq!(cm.total(), labels.len() as u64);
            let r = classification_report(&cm).unwrap();
            prop_assert_eq!(r.classes.iter().map(|m| m.support).sum::<u64>(), cm.total());
            let hits = labels.iter().zip(&preds).filter(|(a, b)| a == b).count();
            prop_assert_eq!(r.accuracy, hits as f64 / labels.len() as f64);
            for m in &r.classes {
                prop_assert!((0.0..=1.0).contains(&m.precision) && (0.0..=1.0).contains(&m.recall) && (0.0..=1.0).contains(&m.f1));
            }
        }

        #[test]
        fn permuting_classes_permutes_the_report((c, pairs) in labelled_pairs(), shuffle in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let (labels, preds): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
            let cm = confusion_matrix(&preds, &labels, &names(c)).unwrap();
            let mut perm: Vec<usize> = (0..c).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(shuffle));
            let a = classification_report(&cm).unwrap();
            let b = classification_report(&permuted(&cm, &perm)).unwrap();
            prop_assert_eq!(a.accuracy, b.accuracy);
            for (i, &k) in perm.iter().enumerate() {
                prop_assert_eq!(&b.classes[i], &a.classes[k]);
            }
        }

        #[test]
        fn history_csv_round_trips(rows in prop::collection::vec((0.0f64..1e4, 0.0f64..200.0, 0.0f64..10.0, 0.0f64..=1.0), 1..30)) {
            let mut t = 0.0;
            let history = TrainHistory {
                records: rows.into_iter().map(|(dt, epoch, loss, val_accuracy)| {
                    t += dt;
                    HistoryRecord { seconds: t, epoch, loss, val_accuracy }
                }).collect(),
            };
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("history.csv");
            prop_assert_eq!(export_history(&history, &path).unwrap(), history.records.len());
            let back = read_history(&path).unwrap();
            prop_assert!(back.records.windows(2).all(|w| w[0].seconds <= w[1].seconds));
            prop_assert_eq!(back, history);
        }
    }
}
