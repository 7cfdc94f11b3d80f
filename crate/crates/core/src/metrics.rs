//! Pixel-level accuracy of a predicted cloud mask against a reference.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{BinaryMask, RasterError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error(transparent)]
    Shape(#[from] RasterError),
    #[error("cannot compute metrics over zero pixels")]
    Empty,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

/// Cloud is the positive class.
pub fn confusion(pred: &BinaryMask, reference: &BinaryMask) -> Result<ConfusionCounts, MetricsError> {
    pred.same_shape(reference.width(), reference.height())?;
    let mut c = ConfusionCounts::default();
    for (&p, &r) in pred.data().iter().zip(reference.data()) {
        match (p, r) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub oa: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub f2: f64,
    pub counts: ConfusionCounts,
    /// Names of metrics whose denominator was zero and were reported as 0.
    pub flags: Vec<String>,
}

fn ratio(num: f64, den: f64, name: &str, flags: &mut Vec<String>) -> f64 {
    if den == 0.0 {
        flags.push(format!("{name}_undefined"));
        0.0
    } else {
        num / den
    }
}

/// `F_beta` from precision and recall; `None` when both are zero.
pub fn f_beta(precision: f64, recall: f64, beta: f64) -> Option<f64> {
    let b2 = beta * beta;
    let den = b2 * precision + recall;
    (den > 0.0).then(|| (1.0 + b2) * precision * recall / den)
}

pub fn metrics(counts: ConfusionCounts) -> Result<Metrics, MetricsError> {
    let total = counts.total();
    if total == 0 {
        return Err(MetricsError::Empty);
    }
    let mut flags = Vec::new();
    let (tp, fp, fn_, tn) = (counts.tp as f64, counts.fp as f64, counts.fn_ as f64, counts.tn as f64);
    let oa = (tp + tn) / total as f64;
    let precision = ratio(tp, tp + fp, "precision", &mut flags);
    let recall = ratio(tp, tp + fn_, "recall", &mut flags);
    let mut f = |beta: f64, name: &str| {
        f_beta(precision, recall, beta).unwrap_or_else(|| {
            flags.push(format!("{name}_undefined"));
            0.0
        })
    };
    let f1 = f(1.0, "f1");
    let f2 = f(2.0, "f2");
    Ok(Metrics {
        oa,
        precision,
        recall,
        f1,
        f2,
        counts,
        flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(v: &[bool]) -> BinaryMask {
        BinaryMask::new(v.len(), 1, v.to_vec()).unwrap()
    }

    #[test]
    fn confusion_cases() {
        let a = m(&[true, false, true, true]);
        let c = confusion(&a, &a).unwrap();
        assert_eq!((c.fp, c.fn_), (0, 0));

        let c = confusion(&BinaryMask::full(10, 10), &BinaryMask::empty(10, 10)).unwrap();
        assert_eq!(
            c,
            ConfusionCounts {
                tp: 0,
                fp: 100,
                fn_: 0,
                tn: 0
            }
        );

        let c = confusion(&m(&[true, true, false, false]), &m(&[true, false, true, false])).unwrap();
        assert_eq!(
            c,
            ConfusionCounts {
                tp: 1,
                fp: 1,
                fn_: 1,
                tn: 1
            }
        );

        assert!(matches!(
            confusion(&BinaryMask::empty(2, 2), &BinaryMask::empty(4, 1)),
            Err(MetricsError::Shape(_))
        ));
    }

    #[test]
    fn metric_cases() {
        let all = metrics(ConfusionCounts {
            tp: 50,
            fp: 0,
            fn_: 0,
            tn: 50,
        })
        .unwrap();
        assert_eq!(
            (all.oa, all.precision, all.recall, all.f1, all.f2),
            (1.0, 1.0, 1.0, 1.0, 1.0)
        );
        assert!(all.flags.is_empty());

        let half = metrics(ConfusionCounts {
            tp: 1,
            fp: 1,
            fn_: 1,
            tn: 1,
        })
        .unwrap();
        assert_eq!(
            (half.oa, half.precision, half.recall, half.f1, half.f2),
            (0.5, 0.5, 0.5, 0.5, 0.5)
        );

        assert_eq!(metrics(ConfusionCounts::default()), Err(MetricsError::Empty));
    }

    #[test]
    fn f1_from_published_precision_recall() {
        // 2·0.8815·0.9287 / (0.8815 + 0.9287)
        let f1 = f_beta(0.8815, 0.9287, 1.0).unwrap();
        assert!((f1 - 0.904480).abs() < 1e-5, "{f1}");
    }

    #[test]
    fn zero_denominators_are_flagged() {
        let r = metrics(ConfusionCounts {
            tp: 0,
            fp: 0,
            fn_: 0,
            tn: 9,
        })
        .unwrap();
        assert_eq!(r.oa, 1.0);
        assert_eq!((r.precision, r.recall, r.f1, r.f2), (0.0, 0.0, 0.0, 0.0));
        assert_eq!(
            r.flags,
            vec![
                "precision_undefined",
                "recall_undefined",
                "f1_undefined",
                "f2_undefined"
            ]
        );
    }

    #[test]
    fn json_shape() {
        let r = metrics(ConfusionCounts {
            tp: 1,
            fp: 1,
            fn_: 1,
            tn: 1,
        })
        .unwrap();
        let v = serde_json::to_value(&r).unwrap();
        for key in ["oa", "precision", "recall", "f1", "f2", "counts", "flags"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["counts"]["fn"], 1);
    }

    proptest! {
        #[test]
        fn f2_favours_recall(tp in 1u64..1000, fp in 0u64..1000, fn_ in 0u64..1000, tn in 0u64..1000) {
            let r = metrics(ConfusionCounts { tp, fp, fn_, tn }).unwrap();
            if r.recall > r.precision {
                prop_assert!(r.f2 > r.f1);
            } else if r.recall < r.precision {
                prop_assert!(r.f2 < r.f1);
            }
            prop_assert!((0.0..=1.0).contains(&r.f1) && (0.0..=1.0).contains(&r.f2));
        }

        #[test]
        fn self_comparison_is_perfect(bits in proptest::collection::vec(any::<bool>(), 1..200)) {
            prop_assume!(bits.iter().any(|&b| b));
            let mask = m(&bits);
            let r = metrics(confusion(&mask, &mask).unwrap()).unwrap();
            prop_assert_eq!((r.oa, r.precision, r.recall, r.f1, r.f2), (1.0, 1.0, 1.0, 1.0, 1.0));
        }
    }
}
