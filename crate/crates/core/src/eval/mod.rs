//! Confusion matrices, precision/recall/F1/accuracy, and comparison reports.

mod metrics;
mod report;

pub use metrics::{confusion, metrics, ClassMetrics, ConfusionMatrix, MetricsReport};
pub use report::{
    compare_report, format_percent, format_sig, read_comparison_csv, render_accuracy_chart,
    render_confusion_heatmap, ComparisonRow, ComparisonTable,
};
