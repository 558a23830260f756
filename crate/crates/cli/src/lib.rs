//! Configuration-driven experiment driver. `relaxctl <command> --config FILE`
//! loads a JSON config, runs one experiment family and writes CSV tables plus
//! `report.txt` to the output directory.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;
