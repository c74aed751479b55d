//! The experimental harness: slot error rate, benchmark plans over annotation increments,
//! and report tables.

pub mod benchmark;
pub mod report;
pub mod ser;

pub use benchmark::{
    build_functionality_data, cell_seed, run_benchmark, run_benchmark_on, train_paraphrase_scorer, BackgroundPlan,
    BenchmarkPlan, FunctionalityData, FunctionalityPlan, SelectionPlan, System,
};
pub use report::{BenchmarkReport, CellRecord, CellSummary};
pub use ser::{compute_ser, compute_ser_annotations, evaluate_model, Evaluation, SerReport};
