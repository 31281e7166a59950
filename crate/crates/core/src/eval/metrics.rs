use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::DocumentClass;

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn precision(tp: u64, fp: u64) -> f64 {
    ratio(tp, tp + fp)
}

pub fn recall(tp: u64, fn_: u64) -> f64 {
    ratio(tp, tp + fn_)
}

pub fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub per_class: BTreeMap<DocumentClass, ClassCounts>,
    pub total_images: u64,
}

impl ConfusionCounts {
    pub fn new() -> Self {
        Self::default()
    }

    /// Scores one image. `None` means nothing was detected.
    pub fn record(&mut self, truth: DocumentClass, predicted: Option<DocumentClass>) {
        self.total_images += 1;
        match predicted {
            Some(p) if p == truth => self.per_class.entry(truth).or_default().tp += 1,
            Some(p) => {
                self.per_class.entry(p).or_default().fp += 1;
                self.per_class.entry(truth).or_default().fn_ += 1;
            }
            None => self.per_class.entry(truth).or_default().fn_ += 1,
        }
    }

    pub fn merge(&mut self, other: &ConfusionCounts) {
        self.total_images += other.total_images;
        for (class, c) in &other.per_class {
            let e = self.per_class.entry(*class).or_default();
            e.tp += c.tp;
            e.fp += c.fp;
            e.fn_ += c.fn_;
        }
    }

    pub fn total_tp(&self) -> u64 {
        self.per_class.values().map(|c| c.tp).sum()
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.total_tp(), self.total_images)
    }

    pub fn report(&self) -> MetricsReport {
        let per_class: BTreeMap<DocumentClass, ClassMetrics> = self
            .per_class
            .iter()
            .map(|(class, c)| {
                let p = precision(c.tp, c.fp);
                let r = recall(c.tp, c.fn_);
                (
                    *class,
                    ClassMetrics {
                        precision: p,
                        recall: r,
                        f1: f1(p, r),
                        tp: c.tp,
                    },
                )
            })
            .collect();
        let n = per_class.len().max(1) as f64;
        let macro_precision = per_class.values().map(|m| m.precision).sum::<f64>() / n;
        let macro_recall = per_class.values().map(|m| m.recall).sum::<f64>() / n;
        MetricsReport {
            per_class,
            macro_precision,
            macro_recall,
            macro_f1: f1(macro_precision, macro_recall),
            accuracy: self.accuracy(),
            total_images: self.total_images,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: u64,
}

/// Per-class and macro-averaged scores. Only classes that occur as truth or
/// prediction enter the averages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_class: BTreeMap<DocumentClass, ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
    pub total_images: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn table_values() {
        assert!((f1(0.92, 0.90) - 0.9099).abs() < 1e-4);
        assert_eq!(f1(1.0, 1.0), 1.0);
        assert_eq!(precision(0, 0), 0.0);
        assert_eq!(recall(0, 0), 0.0);
        assert_eq!(f1(0.0, 0.0), 0.0);
        assert_eq!(precision(3, 1), 0.75);
    }

    #[test]
    fn constant_guess_on_balanced_split() {
        let mut c = ConfusionCounts::new();
        for class in DocumentClass::ALL {
            for _ in 0..10 {
                c.record(class, Some(DocumentClass::Adhaar));
            }
        }
        let r = c.report();
        assert_eq!(r.accuracy, 0.2);
        assert_eq!(r.per_class[&DocumentClass::Adhaar].tp, 10);
        let fn_total: u64 = c.per_class.values().map(|x| x.tp + x.fn_).sum();
        assert_eq!(fn_total, c.total_images);
    }

    #[test]
    fn merge_is_additive() {
        let mut a = ConfusionCounts::new();
        a.record(DocumentClass::Pan, Some(DocumentClass::Pan));
        let mut b = ConfusionCounts::new();
        b.record(DocumentClass::Pan, Some(DocumentClass::Adhaar));
        b.record(DocumentClass::Passport, None);
        let mut all = ConfusionCounts::new();
        all.record(DocumentClass::Pan, Some(DocumentClass::Pan));
        all.record(DocumentClass::Pan, Some(DocumentClass::Adhaar));
        all.record(DocumentClass::Passport, None);
        a.merge(&b);
        assert_eq!(a, all);
    }

    proptest! {
        #[test]
        fn harmonic_mean_bounds(p in 0.0001f64..=1.0, r in 0.0001f64..=1.0) {
            let f = f1(p, r);
            prop_assert!(p.min(r) - 1e-12 <= f && f <= p.max(r) + 1e-12);
            prop_assert!((f1(p, p) - p).abs() < 1e-12);
        }

        #[test]
        fn recall_sums_match_total(outcomes in proptest::collection::vec((0usize..5, 0usize..6), 1..200)) {
            let mut c = ConfusionCounts::new();
            for (t, p) in outcomes {
                c.record(DocumentClass::ALL[t], DocumentClass::from_index(p));
            }
            let sum: u64 = c.per_class.values().map(|x| x.tp + x.fn_).sum();
            prop_assert_eq!(sum, c.total_images);
            prop_assert!(c.total_tp() <= c.total_images);
        }
    }
}
