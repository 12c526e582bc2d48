mod builtin;
pub mod experiment;
pub mod generator;

pub use builtin::{builtin_scenario_8node, worked_example, WorkedExample};
pub use experiment::{
    aggregate, read_raw_csv, run_algorithm, run_experiment, AggregateRow, Algorithm,
    ExperimentPlan, HarnessError, RawRow, RunOutcome, RunSettings, RunStatus, ScenarioSource,
};
pub use generator::{generate_scenario, toy_scenario, GenerateError};
