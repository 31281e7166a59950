//! Metrics, dataset evaluation, the feedback-loop simulation and result
//! tables.

pub mod harness;
pub mod metrics;
pub mod report;
pub mod simulate;

pub use harness::{evaluate, EvalOptions, EvalOutcome};
pub use metrics::{f1, precision, recall, ConfusionCounts, MetricsReport};
pub use report::{report, Comparison, ComparisonRow};
pub use simulate::{expected_accuracy, simulate_arl_loop, CoverageDetector, SimOptions, SimOutcome};
