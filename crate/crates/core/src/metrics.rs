//! Classification metrics and report rendering.
//!
//! Precision, recall and F1 use the zero-division convention: a metric whose
//! denominator is zero is reported as 0 and flagged. Values are stored at
//! full precision; rounding to two decimals (half-up) happens only when a
//! report is rendered.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{header_index, open_csv, TweetRecord};
use crate::emoji::LabelMap;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Counts indexed by (true class, predicted class).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix {
            classes,
            counts: vec![vec![0; classes]; classes],
        }
    }

    pub fn from_rows(rows: Vec<Vec<u64>>) -> Result<Self> {
        let classes = rows.len();
        if rows.iter().any(|r| r.len() != classes) {
            return Err(Error::Precondition(
                "confusion matrix must be square".into(),
            ));
        }
        Ok(ConfusionMatrix {
            classes,
            counts: rows,
        })
    }

    pub fn add(&mut self, truth: usize, predicted: usize) -> Result<()> {
        for label in [truth, predicted] {
            if label >= self.classes {
                return Err(Error::LabelOutOfRange {
                    label,
                    classes: self.classes,
                });
            }
        }
        self.counts[truth][predicted] += 1;
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth][predicted]
    }

    pub fn rows(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn row_sum(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn col_sum(&self, class: usize) -> u64 {
        self.counts.iter().map(|r| r[class]).sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|i| self.counts[i][i]).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

pub fn confusion_matrix(
    y_true: &[usize],
    y_pred: &[usize],
    classes: usize,
) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::LengthMismatch {
            left: y_true.len(),
            right: y_pred.len(),
        });
    }
    let mut cm = ConfusionMatrix::new(classes);
    for (&t, &p) in y_true.iter().zip(y_pred) {
        cm.add(t, p)?;
    }
    Ok(cm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics<T> {
    pub class: usize,
    pub precision: T,
    pub recall: T,
    pub f1: T,
    pub support: u64,
    /// Set when no example was predicted as this class.
    pub precision_undefined: bool,
    /// Set when the class has no true examples.
    pub recall_undefined: bool,
}

impl<T: Scalar> ClassMetrics<T> {
    /// Row from given precision and recall, F1 derived.
    pub fn from_pr(class: usize, precision: T, recall: T, support: u64) -> Self {
        ClassMetrics {
            class,
            precision,
            recall,
            f1: f1_score(precision, recall),
            support,
            precision_undefined: false,
            recall_undefined: false,
        }
    }
}

/// Harmonic mean of precision and recall, 0 when both are 0.
pub fn f1_score<T: Scalar>(precision: T, recall: T) -> T {
    let denom = precision + recall;
    if denom > T::zero() {
        T::of(2.0) * precision * recall / denom
    } else {
        T::zero()
    }
}

fn ratio<T: Scalar>(num: u64, den: u64) -> (T, bool) {
    if den == 0 {
        (T::zero(), true)
    } else {
        (T::of(num as f64) / T::of(den as f64), false)
    }
}

pub fn class_metrics<T: Scalar>(cm: &ConfusionMatrix) -> Vec<ClassMetrics<T>> {
    (0..cm.classes())
        .map(|c| {
            let tp = cm.get(c, c);
            let support = cm.row_sum(c);
            let (precision, precision_undefined) = ratio::<T>(tp, cm.col_sum(c));
            let (recall, recall_undefined) = ratio::<T>(tp, support);
            ClassMetrics {
                class: c,
                precision,
                recall,
                f1: f1_score(precision, recall),
                support,
                precision_undefined,
                recall_undefined,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Averages<T> {
    pub precision: T,
    pub recall: T,
    pub f1: T,
}

/// Unweighted means of the per-class columns.
pub fn macro_avg<T: Scalar>(per_class: &[ClassMetrics<T>]) -> Result<Averages<T>> {
    if per_class.is_empty() {
        return Err(Error::Empty("per-class metrics".into()));
    }
    let n = T::of_usize(per_class.len());
    Ok(Averages {
        precision: per_class.iter().map(|m| m.precision).sum::<T>() / n,
        recall: per_class.iter().map(|m| m.recall).sum::<T>() / n,
        f1: per_class.iter().map(|m| m.f1).sum::<T>() / n,
    })
}

/// Support-weighted means of the per-class columns.
pub fn weighted_avg<T: Scalar>(per_class: &[ClassMetrics<T>]) -> Result<Averages<T>> {
    let total: u64 = per_class.iter().map(|m| m.support).sum();
    if total == 0 {
        return Err(Error::Empty("no support in any class".into()));
    }
    let w = |f: fn(&ClassMetrics<T>) -> T| {
        per_class
            .iter()
            .map(|m| f(m) * T::of(m.support as f64))
            .sum::<T>()
            / T::of(total as f64)
    };
    Ok(Averages {
        precision: w(|m| m.precision),
        recall: w(|m| m.recall),
        f1: w(|m| m.f1),
    })
}

pub fn accuracy<T: Scalar>(cm: &ConfusionMatrix) -> Result<T> {
    match cm.total() {
        0 => Err(Error::Empty("confusion matrix".into())),
        total => Ok(T::of(cm.trace() as f64) / T::of(total as f64)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport<T> {
    pub class_names: Vec<String>,
    pub per_class: Vec<ClassMetrics<T>>,
    pub macro_avg: Averages<T>,
    pub weighted_avg: Averages<T>,
    pub accuracy: T,
    pub evaluated_count: u64,
    /// Size of the test set the evaluated rows were drawn from, when it differs.
    pub test_count: Option<u64>,
    /// Prediction rows whose id matched no test record.
    pub skipped_unknown: u64,
    pub confusion: ConfusionMatrix,
}

impl<T: Scalar> EvalReport<T> {
    pub fn from_confusion(confusion: ConfusionMatrix, class_names: Vec<String>) -> Result<Self> {
        if class_names.len() != confusion.classes() {
            return Err(Error::Dimension {
                expected: confusion.classes(),
                actual: class_names.len(),
            });
        }
        let accuracy = accuracy(&confusion)?;
        let per_class = class_metrics(&confusion);
        Ok(EvalReport {
            class_names,
            macro_avg: macro_avg(&per_class)?,
            weighted_avg: weighted_avg(&per_class)?,
            per_class,
            accuracy,
            evaluated_count: confusion.total(),
            test_count: None,
            skipped_unknown: 0,
            confusion,
        })
    }

    pub fn from_labels(y_true: &[usize], y_pred: &[usize], map: &LabelMap) -> Result<Self> {
        let cm = confusion_matrix(y_true, y_pred, map.num_classes())?;
        Self::from_confusion(cm, map.categories().to_vec())
    }
}

/// Two decimals, halves rounded up.
fn two_decimals(x: f64) -> String {
    // the small bias keeps decimal halves such as 0.845 from rounding down
    let hundredths = (x * 100.0 + 0.5 + 1e-9).floor() as i64;
    format!("{}.{:02}", hundredths / 100, hundredths % 100)
}

/// Text table: one row per class, then accuracy, macro and weighted lines.
pub fn render_report<T: Scalar>(report: &EvalReport<T>) -> String {
    let mut out = String::new();
    let f = |v: T| two_decimals(v.as_f64());
    let _ = writeln!(
        out,
        "{:<14}{:>10}{:>10}{:>10}{:>10}",
        "Class", "Precision", "Recall", "F1-score", "Support"
    );
    let mut flagged = false;
    for m in &report.per_class {
        let flag = if m.precision_undefined || m.recall_undefined {
            flagged = true;
            "  *"
        } else {
            ""
        };
        let _ = writeln!(
            out,
            "{:<14}{:>10}{:>10}{:>10}{:>10}{flag}",
            m.class,
            f(m.precision),
            f(m.recall),
            f(m.f1),
            m.support
        );
    }
    let n = report.evaluated_count;
    out.push('\n');
    let _ = writeln!(
        out,
        "{:<14}{:>10}{:>10}{:>10}{:>10}",
        "accuracy",
        "",
        "",
        f(report.accuracy),
        n
    );
    for (name, avg) in [
        ("macro avg", &report.macro_avg),
        ("weighted avg", &report.weighted_avg),
    ] {
        let _ = writeln!(
            out,
            "{:<14}{:>10}{:>10}{:>10}{:>10}",
            name,
            f(avg.precision),
            f(avg.recall),
            f(avg.f1),
            n
        );
    }
    out.push('\n');
    match report.test_count {
        Some(total) => {
            let _ = writeln!(out, "evaluated {n} of {total}");
        }
        None => {
            let _ = writeln!(out, "evaluated {n}");
        }
    }
    if report.skipped_unknown > 0 {
        let _ = writeln!(
            out,
            "skipped {} predictions with unknown ids",
            report.skipped_unknown
        );
    }
    if flagged {
        let _ = writeln!(out, "* zero denominator, metric reported as 0");
    }
    out
}

/// Score an external `id,predicted` CSV against labeled test records.
///
/// `predicted` is a category name or index. Rows with ids not in the test
/// set are skipped with a warning and counted; test records without a
/// prediction are left out of the evaluation.
pub fn score_external<T: Scalar>(
    predictions_path: &Path,
    labeled_test: &[TweetRecord],
    map: &LabelMap,
) -> Result<EvalReport<T>> {
    let mut gold: HashMap<&str, usize> = HashMap::with_capacity(labeled_test.len());
    for r in labeled_test {
        let label = r
            .label
            .ok_or_else(|| Error::Precondition(format!("test record {} has no label", r.id)))?;
        gold.insert(r.id.as_str(), label);
    }

    let (mut reader, skipped_lines) = open_csv(predictions_path)?;
    let csv_err = |source| Error::Csv {
        path: predictions_path.into(),
        source,
    };
    let headers = reader.byte_headers().map_err(csv_err)?.clone();
    let schema = |m: &str| Error::Schema {
        path: predictions_path.into(),
        message: m.into(),
    };
    let id_col = header_index(&headers, "id").ok_or_else(|| schema("missing `id` column"))?;
    let pred_col =
        header_index(&headers, "predicted").ok_or_else(|| schema("missing `predicted` column"))?;

    let mut cm = ConfusionMatrix::new(map.num_classes());
    let mut seen: HashSet<String> = HashSet::new();
    let mut skipped_unknown = 0;
    let mut row = csv::ByteRecord::new();
    loop {
        let line = reader.position().line() + skipped_lines;
        let malformed = |message: String| Error::Malformed {
            path: predictions_path.into(),
            line,
            message,
        };
        match reader.read_byte_record(&mut row) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => return Err(malformed(e.to_string())),
        }
        let text = |col: usize| -> Result<&str> {
            let bytes = row
                .get(col)
                .ok_or_else(|| malformed("missing field".into()))?;
            std::str::from_utf8(bytes).map_err(|_| malformed("invalid UTF-8".into()))
        };
        let id = text(id_col)?.trim();
        let predicted = text(pred_col)?;
        let predicted = map
            .parse_label(predicted)
            .map_err(|e| malformed(format!("bad prediction {predicted:?}: {e}")))?;
        if !seen.insert(id.to_string()) {
            return Err(malformed(format!("duplicate id {id:?}")));
        }
        match gold.get(id) {
            Some(&truth) => cm.add(truth, predicted)?,
            None => {
                log::warn!(
                    "{}:{line}: unknown id {id:?}, skipped",
                    predictions_path.display()
                );
                skipped_unknown += 1;
            }
        }
    }
    let mut report = EvalReport::from_confusion(cm, map.categories().to_vec())?;
    report.test_count = Some(labeled_test.len() as u64);
    report.skipped_unknown = skipped_unknown;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn three_class() -> ConfusionMatrix {
        confusion_matrix(&[0, 0, 1, 1, 2, 2], &[0, 1, 1, 1, 2, 0], 3).unwrap()
    }

    #[test]
    fn hand_counted_matrix() {
        let cm = three_class();
        assert_eq!(cm.rows(), &[vec![1, 1, 0], vec![0, 2, 0], vec![1, 0, 1]]);
        assert_eq!(cm.total(), 6);
        assert!((accuracy::<f64>(&cm).unwrap() - 4.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn matrix_edge_cases() {
        let cm = confusion_matrix(&[0, 1, 1, 2], &[0, 1, 1, 2], 3).unwrap();
        assert_eq!(cm.rows(), &[vec![1, 0, 0], vec![0, 2, 0], vec![0, 0, 1]]);
        assert_eq!(accuracy::<f64>(&cm).unwrap(), 1.0);
        let empty = confusion_matrix(&[], &[], 3).unwrap();
        assert_eq!(empty.total(), 0);
        assert!(accuracy::<f64>(&empty).is_err());
        assert!(matches!(
            confusion_matrix(&[0], &[0, 1], 2),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            confusion_matrix(&[0], &[5], 2),
            Err(Error::LabelOutOfRange { .. })
        ));
        let none_right = confusion_matrix(&[0, 1], &[1, 0], 2).unwrap();
        assert_eq!(accuracy::<f64>(&none_right).unwrap(), 0.0);
    }

    #[test]
    fn hand_evaluated_class_metrics() {
        let m = class_metrics::<f64>(&three_class());
        let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
        assert!(close(m[0].precision, 0.5) && close(m[0].recall, 0.5) && close(m[0].f1, 0.5));
        assert!(close(m[1].precision, 2.0 / 3.0) && close(m[1].recall, 1.0) && close(m[1].f1, 0.8));
        assert!(close(m[2].precision, 1.0) && close(m[2].recall, 0.5) && close(m[2].f1, 2.0 / 3.0));
        assert_eq!(
            m.iter().map(|c| c.support).collect::<Vec<_>>(),
            vec![2, 2, 2]
        );
    }

    #[test]
    fn f1_formula() {
        assert!((f1_score(0.84f64, 0.87) - 0.8547).abs() < 1e-4);
        assert_eq!(f1_score(0.0f64, 0.0), 0.0);
    }

    #[test]
    fn zero_division_flags() {
        let cm = confusion_matrix(&[0, 0], &[0, 0], 2).unwrap();
        let m = class_metrics::<f64>(&cm);
        assert_eq!(
            (m[1].precision, m[1].recall, m[1].f1, m[1].support),
            (0.0, 0.0, 0.0, 0)
        );
        assert!(m[1].precision_undefined && m[1].recall_undefined);
        assert!(!m[0].precision_undefined);
    }

    #[test]
    fn averages() {
        let m = class_metrics::<f64>(&three_class());
        let a = macro_avg(&m).unwrap();
        assert!((a.f1 - (0.5 + 0.8 + 2.0 / 3.0) / 3.0).abs() < 1e-12);
        assert!(macro_avg::<f64>(&[]).is_err());
        let w = weighted_avg(&m).unwrap();
        assert!((w.f1 - a.f1).abs() < 1e-12); // equal supports
    }

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(two_decimals(0.845), "0.85");
        assert_eq!(two_decimals(0.8547), "0.85");
        assert_eq!(two_decimals(0.125), "0.13");
        assert_eq!(two_decimals(1.0), "1.00");
        assert_eq!(two_decimals(0.0), "0.00");
        assert_eq!(two_decimals(2.0 / 3.0), "0.67");
    }

    fn squash(s: &str) -> String {
        s.split_whitespace().collect::<Vec<_>>().join(" ")
    }

    #[test]
    fn rendered_rows() {
        let mut cm = ConfusionMatrix::new(2);
        for _ in 0..5 {
            cm.add(0, 0).unwrap();
        }
        let mut report =
            EvalReport::<f64>::from_confusion(cm, vec!["A".into(), "B".into()]).unwrap();
        let text = render_report(&report);
        let lines: Vec<String> = text.lines().map(squash).collect();
        assert!(lines.contains(&"0 1.00 1.00 1.00 5".to_string()));
        assert!(lines.contains(&"1 0.00 0.00 0.00 0 *".to_string()));

        report.per_class[1] = ClassMetrics::from_pr(1, 0.84, 0.87, 1393);
        let lines: Vec<String> = render_report(&report).lines().map(squash).collect();
        assert!(lines.contains(&"1 0.84 0.87 0.85 1393".to_string()));
    }

    proptest! {
        #[test]
        fn report_invariants(pairs in proptest::collection::vec((0usize..5, 0usize..5), 1..200), seed: u64) {
            let (t, p): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
            let cm = confusion_matrix(&t, &p, 5).unwrap();
            let m = class_metrics::<f64>(&cm);
            for (c, cls) in m.iter().enumerate() {
                prop_assert_eq!(cls.support, cm.row_sum(c));
                if cls.precision + cls.recall > 0.0 {
                    let lo = cls.precision.min(cls.recall);
                    let hi = cls.precision.max(cls.recall);
                    prop_assert!(lo - 1e-12 <= cls.f1 && cls.f1 <= hi + 1e-12);
                }
                if cls.precision == cls.recall {
                    prop_assert!((cls.f1 - cls.precision).abs() < 1e-12);
                }
            }
            let direct = pairs.iter().filter(|(a, b)| a == b).count() as f64 / pairs.len() as f64;
            prop_assert!((accuracy::<f64>(&cm).unwrap() - direct).abs() < 1e-12);

            // permuting the pairs changes nothing
            use rand::{seq::SliceRandom, SeedableRng};
            let mut shuffled = pairs.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let (t2, p2): (Vec<usize>, Vec<usize>) = shuffled.into_iter().unzip();
            prop_assert_eq!(confusion_matrix(&t2, &p2, 5).unwrap(), cm);
        }
    }
}
