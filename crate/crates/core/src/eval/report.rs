use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::model::DocumentClass;

use super::metrics::{f1, MetricsReport};

/// Rows of the comparison table, in display order.
pub const ROWS: [&str; 4] = ["Accuracy", "Precision", "Recall", "F1 score"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub metric: String,
    pub without: f64,
    pub with: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassTp {
    pub class_id: DocumentClass,
    pub without: u64,
    pub with: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub per_class_tp: Vec<ClassTp>,
    /// Inconsistencies spotted in the inputs, such as a stored F1 that
    /// does not follow from the stored precision and recall.
    pub notes: Vec<String>,
}

fn headline(m: &MetricsReport) -> [f64; 4] {
    [m.accuracy, m.macro_precision, m.macro_recall, m.macro_f1]
}

fn f1_note(label: &str, m: &MetricsReport) -> Option<String> {
    let computed = f1(m.macro_precision, m.macro_recall);
    ((computed - m.macro_f1).abs() > 5e-3).then(|| {
        format!(
            "{label}: stored F1 {:.4} differs from {computed:.4} computed from P {:.4} and R {:.4}",
            m.macro_f1, m.macro_precision, m.macro_recall
        )
    })
}

/// Side-by-side table of two runs with per-class true-positive counts.
pub fn report(without: &MetricsReport, with: &MetricsReport) -> Comparison {
    let rows = ROWS
        .iter()
        .zip(headline(without).into_iter().zip(headline(with)))
        .map(|(name, (a, b))| ComparisonRow {
            metric: name.to_string(),
            without: a,
            with: b,
            delta: b - a,
        })
        .collect();
    let tp = |m: &MetricsReport, c| m.per_class.get(&c).map_or(0, |x| x.tp);
    let per_class_tp = DocumentClass::ALL
        .iter()
        .map(|&c| ClassTp {
            class_id: c,
            without: tp(without, c),
            with: tp(with, c),
        })
        .collect();
    let notes = [f1_note("without", without), f1_note("with", with)]
        .into_iter()
        .flatten()
        .collect();
    Comparison {
        rows,
        per_class_tp,
        notes,
    }
}

impl Comparison {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("comparison serializes")
    }

    pub fn from_json(s: &str) -> crate::Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<12} {:>11} {:>11} {:>9}", "Metric", "No feedback", "Feedback", "Delta");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<12} {:>11.4} {:>11.4} {:>+9.4}",
                r.metric, r.without, r.with, r.delta
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<16} {:>11} {:>11}", "True positives", "No feedback", "Feedback");
        for c in &self.per_class_tp {
            let _ = writeln!(out, "{:<16} {:>11} {:>11}", c.class_id.display_name(), c.without, c.with);
        }
        for n in &self.notes {
            let _ = writeln!(out, "note: {n}");
        }
        out
    }
}
