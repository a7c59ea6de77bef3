use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
    pub class_names: Vec<String>,
}

impl ConfusionMatrix {
    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn from_counts(counts: Vec<Vec<u64>>, class_names: Vec<String>) -> Result<Self> {
        let c = counts.len();
        if counts.iter().any(|r| r.len() != c) || class_names.len() != c {
            return Err(Error::Dimension(format!(
                "confusion matrix must be square with {c} class names"
            )));
        }
        Ok(Self {
            counts,
            class_names,
        })
    }
}

/// Tallies `(true, predicted)` pairs. Class names default to the indices.
pub fn confusion(truth: &[usize], predicted: &[usize], classes: usize) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() {
        return Err(Error::Dimension(format!(
            "{} true labels vs {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    let mut counts = vec![vec![0u64; classes]; classes];
    for (&t, &p) in truth.iter().zip(predicted) {
        if t >= classes || p >= classes {
            return Err(Error::InvalidLabel(format!(
                "label pair ({t}, {p}) outside [0, {classes})"
            )));
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix {
        counts,
        class_names: (0..classes).map(|i| i.to_string()).collect(),
    })
}

/// One-vs-rest counts and scores for a single class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub name: String,
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub class_names: Vec<String>,
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
    pub correct: u64,
    pub total: u64,
}

/// Ratio with the 0/0 = 0 convention.
fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::InvalidParameter("confusion matrix is empty".into()));
    }
    let c = cm.classes();
    let per_class: Vec<ClassMetrics> = (0..c)
        .map(|k| {
            let tp = cm.counts[k][k];
            let fp = (0..c).filter(|&i| i != k).map(|i| cm.counts[i][k]).sum::<u64>();
            let fn_ = (0..c).filter(|&j| j != k).map(|j| cm.counts[k][j]).sum::<u64>();
            let tn = total - tp - fp - fn_;
            let precision = ratio(tp, tp + fp);
            let recall = ratio(tp, tp + fn_);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassMetrics {
                name: cm.class_names[k].clone(),
                tp,
                tn,
                fp,
                fn_,
                precision,
                recall,
                f1,
            }
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / c as f64;
    let correct = cm.trace();
    Ok(MetricsReport {
        class_names: cm.class_names.clone(),
        macro_precision: mean(|m| m.precision),
        macro_recall: mean(|m| m.recall),
        macro_f1: mean(|m| m.f1),
        accuracy: correct as f64 / total as f64,
        correct,
        total,
        per_class,
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn perfect_predictions_are_diagonal() {
        let cm = confusion(&[0, 1, 2, 1], &[0, 1, 2, 1], 3).unwrap();
        assert_eq!(cm.counts, vec![vec![1, 0, 0], vec![0, 2, 0], vec![0, 0, 1]]);
    }

    #[test]
    fn single_off_diagonal_sample() {
        let cm = confusion(&[0], &[1], 2).unwrap();
        assert_eq!(cm.counts[0][1], 1);
        assert_eq!(cm.total(), 1);
    }

    #[test]
    fn out_of_range_label_is_rejected() {
        assert!(matches!(confusion(&[0, 3], &[0, 1], 3), Err(Error::InvalidLabel(_))));
    }

    #[test]
    fn binary_case_matches_direct_counts() {
        // rows: abnormal, normal
        let cm = ConfusionMatrix::from_counts(vec![vec![328, 0], vec![1, 323]], names(2)).unwrap();
        let r = metrics(&cm).unwrap();
        assert_eq!(r.accuracy, 651.0 / 652.0);
        let abn = &r.per_class[0];
        assert_eq!((abn.tp, abn.fp, abn.fn_, abn.tn), (328, 1, 0, 323));
        assert_eq!(abn.precision, 328.0 / 329.0);
        assert_eq!(abn.recall, 1.0);
        let nor = &r.per_class[1];
        assert_eq!(nor.precision, 1.0);
        assert_eq!(nor.recall, 323.0 / 324.0);
    }

    #[test]
    fn empty_class_uses_zero_convention() {
        let cm = ConfusionMatrix::from_counts(vec![vec![3, 0], vec![0, 0]], names(2)).unwrap();
        let r = metrics(&cm).unwrap();
        assert_eq!(r.per_class[1].precision, 0.0);
        assert_eq!(r.per_class[1].recall, 0.0);
        assert_eq!(r.per_class[1].f1, 0.0);
    }

    #[test]
    fn empty_matrix_is_rejected() {
        let cm = ConfusionMatrix::from_counts(vec![vec![0, 0], vec![0, 0]], names(2)).unwrap();
        assert!(metrics(&cm).is_err());
    }

    fn labels() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
        (2usize..6).prop_flat_map(|c| (Just(c), proptest::collection::vec((0..c, 0..c), 1..200)))
    }

    proptest! {
        #[test]
        fn report_invariants((c, pairs) in labels()) {
            let (t, p): (Vec<_>, Vec<_>) = pairs.iter().copied().unzip();
            let cm = confusion(&t, &p, c).unwrap();
            prop_assert_eq!(cm.total(), pairs.len() as u64);
            let r = metrics(&cm).unwrap();
            let hits = pairs.iter().filter(|(a, b)| a == b).count();
            prop_assert_eq!(r.accuracy, hits as f64 / pairs.len() as f64);
            for m in &r.per_class {
                for v in [m.precision, m.recall, m.f1] {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
                if m.tp + m.fp > 0 && m.tp + m.fn_ > 0 {
                    let lo = m.precision.min(m.recall);
                    let hi = m.precision.max(m.recall);
                    prop_assert!(lo - 1e-12 <= m.f1 && m.f1 <= hi + 1e-12);
                }
                prop_assert_eq!(m.tp + m.tn + m.fp + m.fn_, cm.total());
            }
        }

        #[test]
        fn relabeling_permutes_per_class_metrics((c, pairs) in labels(), rot in 0usize..5) {
            let perm: Vec<usize> = (0..c).map(|i| (i + rot) % c).collect();
            let (t, p): (Vec<_>, Vec<_>) = pairs.iter().copied().unzip();
            let r = metrics(&confusion(&t, &p, c).unwrap()).unwrap();
            let t2: Vec<_> = t.iter().map(|&x| perm[x]).collect();
            let p2: Vec<_> = p.iter().map(|&x| perm[x]).collect();
            let r2 = metrics(&confusion(&t2, &p2, c).unwrap()).unwrap();
            prop_assert_eq!(r.accuracy, r2.accuracy);
            for k in 0..c {
                let (a, b) = (&r.per_class[k], &r2.per_class[perm[k]]);
                prop_assert_eq!((a.tp, a.fp, a.fn_, a.tn), (b.tp, b.fp, b.fn_, b.tn));
                prop_assert_eq!(a.f1, b.f1);
            }
            prop_assert!((r.macro_f1 - r2.macro_f1).abs() < 1e-12);
        }
    }
}
