//! File formats: CSV data, TOML inputs and report records.

pub mod config;
pub mod pilot;
pub mod report;

pub use config::{
    parse_toml, read_toml, DeffSource, DesignInputsFile, JointFile, ResampleFile, ScenarioCell,
    ScenarioFile, TermsFile,
};
pub use pilot::{
    parse_pilot, read_pilot_csv, read_pilot_csv_with, DataSchema, LoadedData, MissingPolicy,
};
pub use report::Report;
