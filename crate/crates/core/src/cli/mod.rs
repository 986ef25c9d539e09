//! Command-line front end: configuration, execution and output files.

pub mod config;
pub mod output;
pub mod report;
mod run;

pub use config::{parse_config, ParseOutcome, RunMode, ScenarioConfig, ScenarioKind};
pub use output::{read_csv_table, read_report, CsvTable};
pub use report::{Check, RunReport, TrajectorySummary};
pub use run::run;
