//! Measurement of performed musical intervals from pitch histograms.
//!
//! The pipeline runs from an F0 trace in cents ([`histogram::PitchTrace`])
//! through smoothed histograms and their mountains, tilted-Gaussian peak
//! fits ([`peakfit`]), DTW alignment against a quartertone transcription
//! ([`alignment`]), to interval statistics and comparison with historical
//! scales ([`analysis`], [`pitch`]).

pub mod alignment;
pub mod analysis;
pub mod histogram;
pub mod peakfit;
pub mod pitch;

use thiserror::Error;

pub use alignment::{AlignError, AlignmentPath, Transcription, TranscribedNote};
pub use analysis::{AnalysisError, IntervalMeasurement, IntervalReport, NotePeak};
pub use histogram::{Histogram, HistogramError, MountainRange, PitchTrace};
pub use peakfit::{FitError, PeakModel, Typology};
pub use pitch::{PitchError, QuartertoneNote, ReferenceScale, ScaleName};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Pitch(#[from] PitchError),
    #[error(transparent)]
    Histogram(#[from] HistogramError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Align(#[from] AlignError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
