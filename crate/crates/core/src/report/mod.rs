//! Metrics, spectrum plot data, session logs and report emission.

pub mod emit;
pub mod metrics;
pub mod plot;
pub mod session;

pub use emit::{emit_report, RawComparison, Report, ReportContext, ReportFormats, StimulusSummary, REPORT_SCHEMA_VERSION};
pub use metrics::{amplitude_db, ir_metrics, IrMetrics, DB_FLOOR};
pub use plot::{make_plot_data, SpectrumPlotData};
pub use session::{LogEntry, SessionLog};
