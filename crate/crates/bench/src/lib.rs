//! Measurement helpers behind the `ukbench` command-line tool.

pub mod metrics;
pub mod sweep;

pub use metrics::{MetricsRow, RowKind, SCHEMA_VERSION};
pub use sweep::{measure, Axis, Sweep};
