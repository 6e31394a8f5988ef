//! Confusion-matrix statistics and one-vs-rest ROC analysis.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};

/// Square count matrix; rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn zeros(classes: usize) -> Self {
        ConfusionMatrix {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn true_positives(&self, c: usize) -> u64 {
        self.get(c, c)
    }

    pub fn false_positives(&self, c: usize) -> u64 {
        (0..self.classes)
            .filter(|&t| t != c)
            .map(|t| self.get(t, c))
            .sum()
    }

    pub fn false_negatives(&self, c: usize) -> u64 {
        (0..self.classes)
            .filter(|&p| p != c)
            .map(|p| self.get(c, p))
            .sum()
    }

    pub fn support(&self, c: usize) -> u64 {
        (0..self.classes).map(|p| self.get(c, p)).sum()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts
            .chunks(self.classes)
            .map(<[u64]>::to_vec)
            .collect()
    }
}

pub fn confusion(truth: &[usize], predicted: &[usize], classes: usize) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() {
        return Err(Error::shape(
            "confusion",
            format!("{} predictions", truth.len()),
            format!("{} predictions", predicted.len()),
        ));
    }
    let mut m = ConfusionMatrix::zeros(classes);
    for (&t, &p) in truth.iter().zip(predicted) {
        if t >= classes || p >= classes {
            return Err(Error::invalid(format!(
                "label pair ({t}, {p}) out of range for {classes} classes"
            )));
        }
        m.counts[t * classes + p] += 1;
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricSummary {
    pub accuracy: f64,
    pub per_class: Vec<ClassScores>,
    pub micro: ClassScores,
    pub macro_avg: ClassScores,
    /// Zero-denominator cells that were reported as 0.
    pub warnings: Vec<String>,
}

fn ratio(num: u64, den: u64, what: &str, warnings: &mut Vec<String>) -> f64 {
    if den == 0 {
        warnings.push(format!("{what}: zero denominator, reported as 0"));
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Accuracy, per-class and pooled (micro) precision/recall/F1, and their
/// unweighted class means (macro).
pub fn summary(matrix: &ConfusionMatrix) -> Result<MetricSummary> {
    let total = matrix.total();
    if total == 0 || matrix.classes == 0 {
        return Err(Error::invalid("metrics of an empty confusion matrix"));
    }
    let k = matrix.classes;
    let mut warnings = Vec::new();
    let mut per_class = Vec::with_capacity(k);
    let (mut tp_all, mut fp_all, mut fn_all) = (0, 0, 0);
    for c in 0..k {
        let (tp, fp, fneg) = (
            matrix.true_positives(c),
            matrix.false_positives(c),
            matrix.false_negatives(c),
        );
        tp_all += tp;
        fp_all += fp;
        fn_all += fneg;
        per_class.push(ClassScores {
            precision: ratio(tp, tp + fp, &format!("precision[{c}]"), &mut warnings),
            recall: ratio(tp, tp + fneg, &format!("recall[{c}]"), &mut warnings),
            f1: ratio(
                2 * tp,
                2 * tp + fp + fneg,
                &format!("f1[{c}]"),
                &mut warnings,
            ),
            support: matrix.support(c),
        });
    }
    let micro = ClassScores {
        precision: ratio(tp_all, tp_all + fp_all, "micro precision", &mut warnings),
        recall: ratio(tp_all, tp_all + fn_all, "micro recall", &mut warnings),
        f1: ratio(
            2 * tp_all,
            2 * tp_all + fp_all + fn_all,
            "micro f1",
            &mut warnings,
        ),
        support: total,
    };
    let mean = |f: fn(&ClassScores) -> f64| per_class.iter().map(f).sum::<f64>() / k as f64;
    let macro_avg = ClassScores {
        precision: mean(|s| s.precision),
        recall: mean(|s| s.recall),
        f1: mean(|s| s.f1),
        support: total,
    };
    let trace: u64 = (0..k).map(|c| matrix.true_positives(c)).sum();
    Ok(MetricSummary {
        accuracy: trace as f64 / total as f64,
        per_class,
        micro,
        macro_avg,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RocCurve {
    /// Descending; the first entry is `+∞`. Averaged curves carry `NaN`.
    pub thresholds: Vec<f64>,
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
    pub auc: f64,
}

pub fn trapezoid_auc(fpr: &[f64], tpr: &[f64]) -> f64 {
    fpr.windows(2)
        .zip(tpr.windows(2))
        .map(|(x, y)| (x[1] - x[0]) * (y[0] + y[1]) / 2.0)
        .sum()
}

/// ROC of a binary problem: a sample is called positive when its score is at
/// or above the threshold.
pub fn roc_binary(positive: &[bool], scores: &[f64]) -> Result<RocCurve> {
    if positive.len() != scores.len() {
        return Err(Error::shape(
            "roc",
            format!("{} scores", positive.len()),
            format!("{} scores", scores.len()),
        ));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::invalid(format!("non-finite score {bad}")));
    }
    let p = positive.iter().filter(|&&b| b).count();
    let n = positive.len() - p;
    if p == 0 || n == 0 {
        return Err(Error::invalid(
            "ROC needs both positive and negative examples",
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut thresholds = vec![f64::INFINITY];
    let mut fpr = vec![0.0];
    let mut tpr = vec![0.0];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if positive[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        thresholds.push(s);
        fpr.push(fp as f64 / n as f64);
        tpr.push(tp as f64 / p as f64);
    }
    let auc = trapezoid_auc(&fpr, &tpr);
    Ok(RocCurve {
        thresholds,
        fpr,
        tpr,
        auc,
    })
}

fn check_scores(labels: &[usize], scores: &[Vec<f64>], classes: usize) -> Result<()> {
    if labels.len() != scores.len() {
        return Err(Error::shape(
            "roc",
            format!("{} score rows", labels.len()),
            format!("{} score rows", scores.len()),
        ));
    }
    if let Some(row) = scores.iter().find(|r| r.len() != classes) {
        return Err(Error::shape(
            "roc",
            format!("{classes} scores per row"),
            row.len(),
        ));
    }
    Ok(())
}

/// One-vs-rest ROC for `positive_class` using that class's score column.
pub fn roc_curve(labels: &[usize], scores: &[Vec<f64>], positive_class: usize) -> Result<RocCurve> {
    let classes = scores.first().map_or(0, Vec::len);
    check_scores(labels, scores, classes)?;
    if positive_class >= classes {
        return Err(Error::invalid(format!(
            "class {positive_class} out of range"
        )));
    }
    let pos: Vec<bool> = labels.iter().map(|&l| l == positive_class).collect();
    let col: Vec<f64> = scores.iter().map(|r| r[positive_class]).collect();
    roc_binary(&pos, &col)
}

/// Pools every `(is class c, score for c)` pair across classes into one
/// binary problem.
pub fn roc_micro(labels: &[usize], scores: &[Vec<f64>]) -> Result<RocCurve> {
    let classes = scores.first().map_or(0, Vec::len);
    check_scores(labels, scores, classes)?;
    let mut pos = Vec::with_capacity(labels.len() * classes);
    let mut flat = Vec::with_capacity(labels.len() * classes);
    for (&l, row) in labels.iter().zip(scores) {
        for (c, &s) in row.iter().enumerate() {
            pos.push(l == c);
            flat.push(s);
        }
    }
    roc_binary(&pos, &flat)
}

pub const MACRO_GRID_POINTS: usize = 101;

/// TPR of a ROC curve at `x`, taking the top of any vertical segment and
/// interpolating linearly between distinct FPR values.
fn interp_tpr(curve: &RocCurve, x: f64) -> f64 {
    let last_le = curve.fpr.iter().rposition(|&f| f <= x).unwrap_or(0);
    match curve.fpr.get(last_le + 1) {
        Some(&f1) if f1 > curve.fpr[last_le] => {
            let (f0, t0, t1) = (
                curve.fpr[last_le],
                curve.tpr[last_le],
                curve.tpr[last_le + 1],
            );
            t0 + (t1 - t0) * (x - f0) / (f1 - f0)
        }
        _ => curve.tpr[last_le],
    }
}

/// Mean of per-class curves sampled on a shared 101-point FPR grid.
pub fn roc_macro(curves: &[RocCurve]) -> Result<RocCurve> {
    if curves.is_empty() {
        return Err(Error::invalid("macro ROC of zero curves"));
    }
    let mut fpr = vec![0.0];
    let mut tpr = vec![0.0];
    for i in 0..MACRO_GRID_POINTS {
        let x = i as f64 / (MACRO_GRID_POINTS - 1) as f64;
        let mean = curves.iter().map(|c| interp_tpr(c, x)).sum::<f64>() / curves.len() as f64;
        fpr.push(x);
        tpr.push(mean);
    }
    *tpr.last_mut().expect("non-empty grid") = 1.0;
    let auc = trapezoid_auc(&fpr, &tpr);
    Ok(RocCurve {
        thresholds: vec![f64::NAN; fpr.len()],
        fpr,
        tpr,
        auc,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub class_names: Vec<String>,
    pub confusion: ConfusionMatrix,
    pub summary: MetricSummary,
    pub roc: Vec<RocCurve>,
    pub roc_micro: RocCurve,
    pub roc_macro: RocCurve,
}

impl EvalReport {
    /// Full evaluation from true labels and per-sample class probabilities.
    pub fn build(labels: &[usize], scores: &[Vec<f64>], class_names: &[&str]) -> Result<Self> {
        let k = class_names.len();
        check_scores(labels, scores, k)?;
        let predicted: Vec<usize> = scores
            .iter()
            .map(|row| {
                let mut best = 0;
                for (i, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = i;
                    }
                }
                best
            })
            .collect();
        let confusion = confusion(labels, &predicted, k)?;
        let summary = summary(&confusion)?;
        let roc = (0..k)
            .map(|c| roc_curve(labels, scores, c))
            .collect::<Result<Vec<_>>>()?;
        let roc_micro = roc_micro(labels, scores)?;
        let roc_macro = roc_macro(&roc)?;
        Ok(EvalReport {
            class_names: class_names.iter().map(|s| s.to_string()).collect(),
            confusion,
            summary,
            roc,
            roc_micro,
            roc_macro,
        })
    }

    /// Plain-text report: confusion matrix, then a precision / recall /
    /// f1-score / support table, then AUCs.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let width = self
            .class_names
            .iter()
            .map(String::len)
            .max()
            .unwrap_or(0)
            .max(12);
        let _ = writeln!(out, "confusion matrix (rows = true, cols = predicted)");
        let _ = write!(out, "{:>width$}", "");
        for name in &self.class_names {
            let _ = write!(out, " {name:>8}");
        }
        out.push('\n');
        for (name, row) in self.class_names.iter().zip(self.confusion.rows()) {
            let _ = write!(out, "{name:>width$}");
            for v in row {
                let _ = write!(out, " {v:>8}");
            }
            out.push('\n');
        }
        out.push('\n');
        let _ = writeln!(
            out,
            "{:>width$} {:>9} {:>9} {:>9} {:>9}",
            "", "precision", "recall", "f1-score", "support"
        );
        let row = |out: &mut String, name: &str, s: &ClassScores| {
            let _ = writeln!(
                out,
                "{name:>width$} {:>9.4} {:>9.4} {:>9.4} {:>9}",
                s.precision, s.recall, s.f1, s.support
            );
        };
        for (name, s) in self.class_names.iter().zip(&self.summary.per_class) {
            row(&mut out, name, s);
        }
        out.push('\n');
        let _ = writeln!(
            out,
            "{:>width$} {:>9} {:>9} {:>9.4} {:>9}",
            "accuracy",
            "",
            "",
            self.summary.accuracy,
            self.confusion.total()
        );
        row(&mut out, "micro avg", &self.summary.micro);
        row(&mut out, "macro avg", &self.summary.macro_avg);
        out.push('\n');
        for (name, c) in self.class_names.iter().zip(&self.roc) {
            let _ = writeln!(out, "AUC {name}: {:.4}", c.auc);
        }
        let _ = writeln!(out, "AUC micro-average: {:.4}", self.roc_micro.auc);
        let _ = writeln!(out, "AUC macro-average: {:.4}", self.roc_macro.auc);
        for w in &self.summary.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        out
    }

    /// `curve,threshold,fpr,tpr` rows for every per-class, micro and macro curve.
    pub fn roc_csv(&self) -> String {
        let mut out = String::from("curve,threshold,fpr,tpr\n");
        let mut emit = |name: &str, c: &RocCurve| {
            for ((t, f), p) in c.thresholds.iter().zip(&c.fpr).zip(&c.tpr) {
                let t = if t.is_nan() {
                    String::new()
                } else {
                    format!("{t}")
                };
                let _ = writeln!(out, "{name},{t},{f},{p}");
            }
        };
        for (name, c) in self.class_names.iter().zip(&self.roc) {
            emit(name, c);
        }
        emit("micro", &self.roc_micro);
        emit("macro", &self.roc_macro);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let labels = [0, 1, 2, 0, 1, 2];
        let m = confusion(&labels, &labels, 3).unwrap();
        assert_eq!(m.rows(), vec![vec![2, 0, 0], vec![0, 2, 0], vec![0, 0, 2]]);
        let s = summary(&m).unwrap();
        assert_eq!(s.accuracy, 1.0);
        for c in &s.per_class {
            assert_eq!((c.precision, c.recall, c.f1), (1.0, 1.0, 1.0));
        }
        assert!(s.warnings.is_empty());
    }

    #[test]
    fn single_off_diagonal_pair() {
        // true CD (1), predicted EE (0)
        let m = confusion(&[1], &[0], 3).unwrap();
        assert_eq!(m.get(1, 0), 1);
        assert_eq!(m.total(), 1);
    }

    #[test]
    fn precision_point_nine() {
        // class 0: TP 9, FP 1 (a class-1 sample predicted 0), FN 3.
        let mut truth = vec![0; 12];
        let mut pred = vec![0; 9];
        pred.extend([1, 2, 2]);
        truth.push(1);
        pred.push(0);
        let s = summary(&confusion(&truth, &pred, 3).unwrap()).unwrap();
        assert!((s.per_class[0].precision - 0.9).abs() < 1e-15);
        assert!((s.per_class[0].recall - 0.75).abs() < 1e-15);
        assert!((s.per_class[0].f1 - 18.0 / 22.0).abs() < 1e-15);
        // class 2 is never correct: precision 0/2, recall 0/0 flagged.
        assert_eq!(s.per_class[2].recall, 0.0);
        assert!(!s.warnings.is_empty());
    }

    #[test]
    fn empty_and_mismatched_inputs() {
        assert!(confusion(&[0, 1], &[0], 3).is_err());
        assert!(summary(&ConfusionMatrix::zeros(3)).is_err());
    }

    #[test]
    fn separated_and_tied_scores() {
        let pos = [true, true, false, false];
        assert_eq!(roc_binary(&pos, &[0.9, 0.8, 0.2, 0.1]).unwrap().auc, 1.0);
        let tied = roc_binary(&pos, &[0.5; 4]).unwrap();
        assert_eq!(tied.auc, 0.5);
        assert_eq!(tied.fpr, vec![0.0, 1.0]);
        assert!(roc_binary(&[true, true], &[0.1, 0.2]).is_err());
    }

    #[test]
    fn curve_endpoints_and_monotone() {
        let pos = [true, false, true, false, true];
        let c = roc_binary(&pos, &[0.3, 0.7, 0.9, 0.1, 0.3]).unwrap();
        assert_eq!((c.fpr[0], c.tpr[0]), (0.0, 0.0));
        assert_eq!((*c.fpr.last().unwrap(), *c.tpr.last().unwrap()), (1.0, 1.0));
        assert!(c.fpr.windows(2).all(|w| w[1] >= w[0]));
        assert!(c.tpr.windows(2).all(|w| w[1] >= w[0]));
        assert!(c.thresholds[0].is_infinite());
    }

    #[test]
    fn macro_of_identical_curves_is_that_curve() {
        let pos = [true, false, true, false];
        let c = roc_binary(&pos, &[0.9, 0.6, 0.4, 0.1]).unwrap();
        let m = roc_macro(&[c.clone(), c.clone()]).unwrap();
        // vertical steps away from fpr = 0 get smeared over one grid cell
        assert!((m.auc - c.auc).abs() <= 1.0 / (MACRO_GRID_POINTS - 1) as f64);
        assert_eq!(m.auc, roc_macro(&[c]).unwrap().auc);
    }
}
