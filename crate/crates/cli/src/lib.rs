//! Library surface of the command-line front end: configuration parsing,
//! dataset ingestion and result/fixture export. The `irts` binary wires
//! these to clap subcommands.

pub mod config;
pub mod error;
pub mod export;
pub mod ingest;
