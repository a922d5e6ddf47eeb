//! Rolling-origin evaluation harness: sweep planning, native and external
//! forecasters, a resumable result store, aggregation and reporting.

pub mod adapter;
pub mod aggregate;
pub mod config;
pub mod eia;
pub mod plan;
pub mod protocol;
pub mod registry;
pub mod report;
pub mod run;
pub mod store;

pub use config::SweepConfig;
pub use plan::{plan_sweep, PlannedTask, TaskId};
pub use registry::Registry;
pub use run::{run_sweep, RunSummary};
pub use store::{EvaluationRecord, Store};
