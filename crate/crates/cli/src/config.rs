//! Run configuration, read from a flat TOML file. Every key is optional.

use std::path::{Path, PathBuf};

use radif_core::alignment::{DtwOptions, DEFAULT_UNVOICED_PENALTY};
use radif_core::analysis::DEFAULT_MIN_SAMPLES;
use radif_core::histogram::{
    DEFAULT_BIN_WIDTH, DEFAULT_MIN_MASS, DEFAULT_MIN_PROMINENCE, DEFAULT_SMOOTHING_WINDOW,
};
use radif_core::peakfit::{ClassifyConfig, FitOptions};
use radif_core::pitch::{scale_by_id, QuartertoneNote};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Which reading of a two-peaked mountain becomes the note's pitch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TwinPeakPolicy {
    #[default]
    Higher,
    Lower,
    Fitted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Histogram bin width, cents.
    pub bin_width: f64,
    /// Moving-average window, bins (odd).
    pub smoothing_window: usize,
    pub min_prominence: f64,
    pub min_mass: f64,

    pub peak_prominence: f64,
    pub plateau_level: f64,
    pub plateau_fit_level: f64,
    pub plateau_span: f64,
    pub close_notes: f64,
    pub minor_mass: f64,
    pub residual: f64,
    pub multi_start: bool,
    pub twin_peak_policy: TwinPeakPolicy,

    pub unvoiced_penalty: f64,
    /// Sakoe-Chiba half-width in frames; unset means unconstrained.
    pub dtw_band: Option<usize>,

    /// Cross-check the shāhed calibration against the whole histogram.
    pub verify_calibration: bool,
    pub min_samples: usize,
    /// Notes written for less than this share of a piece are not measured.
    pub min_note_share: f64,
    /// Largest accepted distance between a corrected peak and its written
    /// pitch, cents.
    pub max_correction: f64,
    /// Reference scales to compare against, by identifier.
    pub scales: Vec<String>,
    /// Tonic of the measured scale as doubled MIDI; the lowest measured note
    /// when unset.
    pub tonic: Option<i64>,
    pub output_dir: PathBuf,
    /// Worker threads; available parallelism when unset.
    pub jobs: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let classify = ClassifyConfig::default();
        Self {
            bin_width: DEFAULT_BIN_WIDTH,
            smoothing_window: DEFAULT_SMOOTHING_WINDOW,
            min_prominence: DEFAULT_MIN_PROMINENCE,
            min_mass: DEFAULT_MIN_MASS,
            peak_prominence: classify.peak_prominence,
            plateau_level: classify.plateau_level,
            plateau_fit_level: classify.plateau_fit_level,
            plateau_span: classify.plateau_span,
            close_notes: classify.close_notes,
            minor_mass: classify.minor_mass,
            residual: classify.residual,
            multi_start: FitOptions::default().multi_start,
            twin_peak_policy: TwinPeakPolicy::Higher,
            unvoiced_penalty: DEFAULT_UNVOICED_PENALTY,
            dtw_band: DtwOptions::default().band,
            verify_calibration: true,
            min_samples: DEFAULT_MIN_SAMPLES,
            min_note_share: 0.02,
            max_correction: 100.0,
            scales: vec!["farhat-shur".into(), "talai-shur".into(), "vaziri".into()],
            tonic: None,
            output_dir: PathBuf::from("radif-out"),
            jobs: None,
        }
    }
}

fn check(ok: bool, field: &'static str, message: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(CliError::InvalidConfig {
            field,
            message: message.to_string(),
        })
    }
}

fn fraction(v: f64) -> bool {
    v > 0.0 && v < 1.0
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let config = Self::from_toml(&text).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        config.validate().map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        check(self.bin_width.is_finite() && self.bin_width > 0.0, "bin_width", "must be positive")?;
        check(
            self.smoothing_window % 2 == 1,
            "smoothing_window",
            "must be an odd number of bins",
        )?;
        check(fraction(self.min_prominence), "min_prominence", "must lie in (0, 1)")?;
        check(fraction(self.min_mass), "min_mass", "must lie in (0, 1)")?;
        check(fraction(self.peak_prominence), "peak_prominence", "must lie in (0, 1)")?;
        check(fraction(self.plateau_level), "plateau_level", "must lie in (0, 1)")?;
        check(fraction(self.plateau_fit_level), "plateau_fit_level", "must lie in (0, 1)")?;
        check(self.plateau_span > 0.0, "plateau_span", "must be positive")?;
        check(self.close_notes > 0.0, "close_notes", "must be positive")?;
        check(fraction(self.minor_mass), "minor_mass", "must lie in (0, 1)")?;
        check(self.residual > 0.0, "residual", "must be positive")?;
        check(
            self.unvoiced_penalty.is_finite() && self.unvoiced_penalty >= 0.0,
            "unvoiced_penalty",
            "must be non-negative",
        )?;
        check(self.min_samples >= 1, "min_samples", "must be at least 1")?;
        check(
            (0.0..1.0).contains(&self.min_note_share),
            "min_note_share",
            "must lie in [0, 1)",
        )?;
        check(self.max_correction > 0.0, "max_correction", "must be positive")?;
        check(self.jobs != Some(0), "jobs", "must be at least 1")?;
        for id in &self.scales {
            scale_by_id(id).map_err(|e| CliError::InvalidConfig {
                field: "scales",
                message: e.to_string(),
            })?;
        }
        if let Some(t) = self.tonic {
            QuartertoneNote::new(t).map_err(|e| CliError::InvalidConfig {
                field: "tonic",
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn classify(&self) -> ClassifyConfig {
        ClassifyConfig {
            peak_prominence: self.peak_prominence,
            plateau_level: self.plateau_level,
            plateau_fit_level: self.plateau_fit_level,
            plateau_span: self.plateau_span,
            close_notes: self.close_notes,
            minor_mass: self.minor_mass,
            residual: self.residual,
        }
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            multi_start: self.multi_start,
        }
    }

    pub fn dtw(&self) -> DtwOptions {
        DtwOptions {
            unvoiced_penalty: self.unvoiced_penalty,
            band: self.dtw_band,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = RunConfig::from_toml("").unwrap();
        assert_eq!(c, RunConfig::default());
        c.validate().unwrap();
        assert_eq!(c.classify(), ClassifyConfig::default());
        assert_eq!(c.dtw(), DtwOptions::default());
        assert_eq!(c.fit_options(), FitOptions::default());
    }

    #[test]
    fn round_trip() {
        let mut c = RunConfig::default();
        c.bin_width = 0.5;
        c.plateau_level = 0.1 + 0.2;
        c.dtw_band = Some(400);
        c.tonic = Some(120);
        c.jobs = Some(3);
        c.twin_peak_policy = TwinPeakPolicy::Fitted;
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
        let d = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&d.to_toml()).unwrap(), d);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(RunConfig::from_toml("bin_wdth = 2.0").is_err());
        let c = RunConfig::from_toml("smoothing_window = 4").unwrap();
        let err = c.validate().unwrap_err().to_string();
        assert!(err.contains("smoothing_window"), "{err}");
        let c = RunConfig::from_toml("scales = [\"nope\"]").unwrap();
        assert!(c.validate().is_err());
    }
}
