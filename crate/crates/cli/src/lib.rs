//! File ingestion, configuration, orchestration and output for the `radif`
//! command-line tool.

pub mod config;
pub mod emit;
pub mod error;
pub mod ingest;
pub mod pipeline;
pub mod synth;

pub use config::RunConfig;
pub use error::{CliError, Result};
pub use pipeline::{analyze_corpus, analyze_corpus_data, analyze_piece, CorpusResult, PieceBundle, PieceData};
