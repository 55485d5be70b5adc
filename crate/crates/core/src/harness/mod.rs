//! Experiments over generator families: sampling, scoring every metric,
//! oracle gold orders, Kendall's tau and reports.

mod config;
mod experiment;
mod kendall;
mod report;

pub use config::{
    BaselineConfig, ExperimentConfig, FamilySpec, Metric, NoiseSpec, OracleConfig, ReferenceSpec, SampleSizes,
    CONFIG_VERSION, DEFAULT_FRACTIONS, DEFAULT_SAMPLE_SIZE, DEFAULT_TEMPERATURES,
};
pub use experiment::{
    build_family, cell_seed, run_experiment, run_experiment_with_partial, temperature_sweep, Evaluator, Reference,
    SweepRow, SweepTable,
};
pub use kendall::{kendall_tau, ScoreRanking};
pub use report::{
    cells_to_csv, CellResult, GoldOrder, MetricRecord, RankReport, TauEntry, Timestamp, REPORT_FORMAT, REPORT_VERSION,
};
