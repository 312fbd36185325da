//! Benchmark orchestration for the qforecast models: configuration,
//! resumable result storage, execution and reporting.

pub mod config;
pub mod report;
pub mod runner;
pub mod store;

pub use config::{load_config, parse_config, BenchmarkConfig, ConfigError};
pub use report::{export_report, load_results, rank_models, RankingTable, ReportKind};
pub use runner::{run_benchmark, BenchmarkSummary};
pub use store::ResultStore;
