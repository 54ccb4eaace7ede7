//! Metrics, confusion matrices and the error analyses.

mod analysis;
mod confusion;
mod curve;
mod metrics;
mod table;

pub use analysis::{sentiment_error_breakdown, token_confusion_report, SentimentErrorBreakdown, TokenConfusionReport};
pub use confusion::{confusion, confusion_for, ConfusionMatrix};
pub use curve::{epoch_curve, render_epoch_curve, EpochMetrics};
pub use metrics::{all_modal_closed_form, metrics, ClassMetrics, EvalReport, LabeledMetrics};
pub use table::render_table;
