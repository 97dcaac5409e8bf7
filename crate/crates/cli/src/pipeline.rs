//! Per-piece and corpus analysis.

use std::collections::BTreeMap;

use log::{info, warn};
use radif_core::alignment::{self, AlignmentPath, OnsetEvaluation, Transcription};
use radif_core::analysis::{
    self, IntervalMeasurement, IntervalReport, NotePeak, ScaleComparison, ScaleRow,
};
use radif_core::histogram::{self, Histogram, MountainRange, PitchTrace};
use radif_core::peakfit::{self, PeakModel, Typology};
use radif_core::pitch::{scale_by_id, QuartertoneNote};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, TwinPeakPolicy};
use crate::error::{CliError, Result};
use crate::ingest::{self, PieceInput};

/// A piece already in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct PieceData {
    pub id: String,
    pub trace: PitchTrace,
    pub transcription: Transcription,
    pub onsets: Option<Vec<f64>>,
}

impl PieceData {
    pub fn load(input: &PieceInput) -> Result<Self> {
        Ok(Self {
            id: input.id.clone(),
            trace: ingest::read_f0(&input.f0_path)?,
            transcription: ingest::read_transcription(&input.transcription_path)?,
            onsets: input.onsets_path.as_deref().map(ingest::read_onsets).transpose()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shahed {
    /// Index into the piece's mountain ranges.
    pub range_index: usize,
    /// Fitted peak of that mountain.
    pub cents: f64,
    /// Written note with the longest total duration.
    pub written: QuartertoneNote,
}

/// Where a note's measured pitch came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PeakSource {
    /// Fitted peak of the piece-histogram mountain the note owns.
    Mountain,
    /// One of the two maxima of a type III mountain, per the configured policy.
    TwinPeak,
    /// Middle of the flat top of a type IV mountain.
    FlatTop,
    /// Peak of the note's own histogram, built from its aligned frames.
    NoteHistogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoteHistogram {
    pub note: QuartertoneNote,
    pub raw: Histogram,
    pub smoothed: Histogram,
    /// Fitted model of the heaviest mountain of the note histogram.
    pub peak: Option<PeakModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoteMeasurement {
    pub peak: NotePeak,
    pub source: PeakSource,
    /// Mountain of the piece histogram holding most of the note's frames.
    pub range_index: Option<usize>,
    pub low_confidence: bool,
}

/// Everything computed for one piece.
#[derive(Debug, Clone, PartialEq)]
pub struct PieceBundle {
    pub id: String,
    pub trace: PitchTrace,
    pub transcription: Transcription,
    pub raw: Histogram,
    pub smoothed: Histogram,
    pub ranges: Vec<MountainRange>,
    /// One model per range, classified with alignment data.
    pub peaks: Vec<PeakModel>,
    /// Heaviest aligned note per range.
    pub range_notes: Vec<Option<QuartertoneNote>>,
    pub shahed: Shahed,
    /// Performed minus written pitch, cents.
    pub offset: f64,
    /// Offset the alignment ran with, from the mountains before merging.
    pub align_offset: f64,
    pub alignment: AlignmentPath,
    pub dtw_cost: f64,
    pub note_histograms: Vec<NoteHistogram>,
    pub notes: Vec<NoteMeasurement>,
    pub intervals: Vec<IntervalMeasurement>,
    pub onset_evaluation: Option<OnsetEvaluation>,
}

impl PieceBundle {
    pub fn note_histogram(&self, note: &QuartertoneNote) -> Option<&NoteHistogram> {
        self.note_histograms.iter().find(|h| &h.note == note)
    }
}

/// Fitted peak of the heaviest mountain of a sample set.
fn values_peak(values: &[f64], config: &RunConfig) -> radif_core::Result<(Histogram, Histogram, PeakModel)> {
    let raw = Histogram::from_values(values.iter().copied(), config.bin_width, config.smoothing_window)?;
    let smoothed = histogram::smooth(&raw, config.smoothing_window)?;
    let ranges = histogram::find_mountain_ranges(&smoothed, config.min_prominence, config.min_mass)?;
    let best = histogram::find_shahed(&raw, &ranges)?;
    let model = peakfit::refine_peak(&smoothed, &ranges[best], config.fit_options(), &config.classify());
    Ok((raw, smoothed, model))
}

fn count_within(values: &[f64], r: &MountainRange) -> usize {
    values.iter().filter(|&&v| r.contains(v)).count()
}

/// Note with the most aligned frames inside `r`; the lower note on ties.
fn dominant_note<'a>(values: &'a BTreeMap<QuartertoneNote, Vec<f64>>, r: &MountainRange) -> Option<&'a QuartertoneNote> {
    let mut best: Option<(&QuartertoneNote, usize)> = None;
    for (note, v) in values {
        let c = count_within(v, r);
        if c > 0 && best.is_none_or(|(_, b)| c > b) {
            best = Some((note, c));
        }
    }
    best.map(|b| b.0)
}

/// Joins touching neighbours whose dominant aligned note is the same.
fn merge_same_note(
    smoothed: &Histogram,
    ranges: Vec<MountainRange>,
    values: &BTreeMap<QuartertoneNote, Vec<f64>>,
    bin_width: f64,
) -> Vec<MountainRange> {
    let mut out: Vec<MountainRange> = Vec::with_capacity(ranges.len());
    for r in ranges {
        if let Some(prev) = out.last_mut() {
            let touching = r.lo - prev.hi <= 1.5 * bin_width;
            let same = dominant_note(values, prev).is_some() && dominant_note(values, prev) == dominant_note(values, &r);
            if touching && same {
                let height = |c: f64| smoothed.bin_of(c).map_or(0.0, |b| smoothed.counts[b]);
                if height(r.peak_bin) > height(prev.peak_bin) {
                    prev.peak_bin = r.peak_bin;
                }
                prev.hi = r.hi;
                prev.area += r.area;
                continue;
            }
        }
        out.push(r);
    }
    out
}

/// Runs histogram analysis, shāhed calibration, alignment, per-note peak
/// picking and interval extraction on one piece.
pub fn analyze_piece(piece: &PieceData, config: &RunConfig) -> Result<PieceBundle> {
    let id = piece.id.as_str();
    let err = |e: radif_core::Error| CliError::analysis(id, e);
    let trace = &piece.trace;
    let t = &piece.transcription;
    let classify = config.classify();

    let raw = histogram::build_histogram(trace, config.bin_width, config.smoothing_window)
        .map_err(|e| err(e.into()))?;
    let smoothed = histogram::smooth(&raw, config.smoothing_window).map_err(|e| err(e.into()))?;
    let first_ranges = histogram::find_mountain_ranges(&smoothed, config.min_prominence, config.min_mass)
        .map_err(|e| err(e.into()))?;
    let first_shahed = histogram::find_shahed(&raw, &first_ranges).map_err(|e| err(e.into()))?;
    let first_peaks: Vec<f64> = first_ranges
        .iter()
        .map(|r| peakfit::refine_peak(&smoothed, r, config.fit_options(), &classify).peak_cents)
        .collect();
    let calibrate = |peaks: &[f64], shahed: usize| {
        let naive = analysis::calibrate_offset(peaks[shahed], t);
        if !config.verify_calibration {
            return naive;
        }
        let checked = analysis::match_offset(&smoothed, peaks, t, naive);
        if checked != naive {
            warn!("{id}: the largest mountain does not match the written shāhed; calibrating by the whole histogram ({naive:.1} -> {checked:.1} cents)");
        }
        checked
    };
    let align_offset = calibrate(&first_peaks, first_shahed);

    let (path, dtw_cost) = alignment::align(trace, t, align_offset, config.dtw()).map_err(|e| err(e.into()))?;
    let values = alignment::note_values(trace, &path, t);

    // Noise can cut a wide mountain in two; neighbours owned by the same
    // note are put back together before the peaks are modelled.
    let ranges = merge_same_note(&smoothed, first_ranges, &values, config.bin_width);
    let mut peaks: Vec<PeakModel> = ranges
        .iter()
        .map(|r| peakfit::refine_peak(&smoothed, r, config.fit_options(), &classify))
        .collect();
    let shahed_index = histogram::find_shahed(&raw, &ranges).map_err(|e| err(e.into()))?;
    let shahed = Shahed {
        range_index: shahed_index,
        cents: peaks[shahed_index].peak_cents,
        written: analysis::transcription_shahed(t),
    };
    let peak_cents: Vec<f64> = peaks.iter().map(|p| p.peak_cents).collect();
    let offset = calibrate(&peak_cents, shahed_index);

    // Reclassify every mountain now that the notes inside it are known.
    let mut range_notes = Vec::with_capacity(ranges.len());
    let mut range_masses: Vec<Vec<(QuartertoneNote, f64)>> = Vec::with_capacity(ranges.len());
    for (r, model) in ranges.iter().zip(peaks.iter_mut()) {
        let masses: Vec<(QuartertoneNote, f64)> = values
            .iter()
            .map(|(n, v)| (n.clone(), count_within(v, r) as f64))
            .filter(|(_, m)| *m > 0.0)
            .collect();
        let (typology, low, twin) = peakfit::classify_peak(&smoothed, r, model, &masses, &classify);
        model.typology = typology;
        model.low_confidence = low;
        model.twin_peaks = twin;
        range_notes.push(dominant_note(&values, r).cloned());
        range_masses.push(masses);
    }

    let durations = t.duration_by_note();
    let total_duration = t.total_duration();
    let mut note_histograms = Vec::new();
    let mut notes = Vec::new();
    for (note, v) in &values {
        let fitted = values_peak(v, config);
        if let Ok((nraw, nsmooth, model)) = &fitted {
            note_histograms.push(NoteHistogram {
                note: note.clone(),
                raw: nraw.clone(),
                smoothed: nsmooth.clone(),
                peak: Some(model.clone()),
            });
        }
        if durations[note] < config.min_note_share * total_duration {
            info!("{id}: {note} is written too briefly to measure");
            continue;
        }

        let home = ranges
            .iter()
            .enumerate()
            .map(|(i, r)| (i, count_within(v, r)))
            .filter(|&(_, c)| c > 0)
            .fold(None::<(usize, usize)>, |best, cur| match best {
                Some(b) if b.1 >= cur.1 => Some(b),
                _ => Some(cur),
            })
            .map(|(i, _)| i);

        // A mountain speaks for the note only when the note has it to itself.
        let owned = home.filter(|&i| {
            let masses = &range_masses[i];
            let total: f64 = masses.iter().map(|m| m.1).sum();
            let own = masses.iter().find(|m| &m.0 == note).map_or(0.0, |m| m.1);
            total > 0.0 && own >= (1.0 - config.minor_mass) * total && peaks[i].typology != Typology::II
        });
        let (cents, source, typology, low) = match owned {
            Some(i) => {
                let m = &peaks[i];
                match (m.typology, m.twin_peaks) {
                    (Typology::III, Some(twin)) => {
                        let c = match config.twin_peak_policy {
                            TwinPeakPolicy::Higher => twin.higher,
                            TwinPeakPolicy::Lower => twin.lower,
                            TwinPeakPolicy::Fitted => twin.fitted,
                        };
                        (c, PeakSource::TwinPeak, m.typology, m.low_confidence)
                    }
                    (Typology::IV, _) => match peakfit::flat_top(&smoothed, &ranges[i], &classify) {
                        Some(top) => (top.center, PeakSource::FlatTop, m.typology, m.low_confidence),
                        None => (m.peak_cents, PeakSource::Mountain, m.typology, m.low_confidence),
                    },
                    _ => (m.peak_cents, PeakSource::Mountain, m.typology, m.low_confidence),
                }
            }
            None => match &fitted {
                Ok((_, _, model)) => (
                    model.peak_cents,
                    PeakSource::NoteHistogram,
                    model.typology,
                    model.low_confidence,
                ),
                Err(e) => {
                    warn!("{id}: no peak for {note}: {e}");
                    continue;
                }
            },
        };
        let corrected = cents - offset;
        if (corrected - note.nominal_cents()).abs() >= config.max_correction {
            warn!(
                "{id}: {note} measured at {corrected:.1} cents after calibration, more than {} from its written pitch; skipped",
                config.max_correction
            );
            continue;
        }
        notes.push(NoteMeasurement {
            peak: NotePeak {
                note: note.clone(),
                peak_cents: cents,
                corrected_cents: corrected,
                mass: v.len() as f64,
                typology,
                piece_id: piece.id.clone(),
            },
            source,
            range_index: home,
            low_confidence: low,
        });
    }

    let note_peaks: Vec<NotePeak> = notes.iter().map(|n| n.peak.clone()).collect();
    let intervals = analysis::extract_intervals(&note_peaks).map_err(|e| err(e.into()))?;
    let onset_evaluation = match &piece.onsets {
        Some(onsets) => Some(alignment::evaluate_alignment(&path, trace, onsets).map_err(|e| err(e.into()))?),
        None => None,
    };

    Ok(PieceBundle {
        id: piece.id.clone(),
        trace: trace.clone(),
        transcription: t.clone(),
        raw,
        smoothed,
        ranges,
        peaks,
        range_notes,
        shahed,
        offset,
        align_offset,
        alignment: path,
        dtw_cost,
        note_histograms,
        notes,
        intervals,
        onset_evaluation,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedPiece {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusResult {
    pub pieces: Vec<PieceBundle>,
    pub skipped: Vec<SkippedPiece>,
    pub report: IntervalReport,
    /// Measured scale from the tonic upward, when the report has no gaps.
    pub scale: Option<Vec<ScaleRow>>,
    /// Comparison per configured scale id.
    pub comparisons: Vec<(String, ScaleComparison)>,
}

fn pool(config: &RunConfig) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = config.jobs {
        builder = builder.num_threads(jobs);
    }
    builder
        .build()
        .map_err(|e| CliError::Input(format!("cannot start worker pool: {e}")))
}

/// Loads and analyses files; see [`analyze_corpus_data`].
pub fn analyze_corpus(inputs: &[PieceInput], config: &RunConfig) -> Result<CorpusResult> {
    if inputs.is_empty() {
        return Err(CliError::Input("corpus has no pieces".into()));
    }
    let outcomes: Vec<Result<PieceBundle>> = pool(config)?.install(|| {
        inputs
            .par_iter()
            .map(|input| PieceData::load(input).and_then(|p| analyze_piece(&p, config)))
            .collect()
    });
    let ids: Vec<String> = inputs.iter().map(|i| i.id.clone()).collect();
    merge(ids, outcomes, config)
}

/// Analyses every piece on the worker pool, skipping failures with a
/// warning, then merges the measurements in input order.
pub fn analyze_corpus_data(pieces: &[PieceData], config: &RunConfig) -> Result<CorpusResult> {
    if pieces.is_empty() {
        return Err(CliError::Input("corpus has no pieces".into()));
    }
    let outcomes: Vec<Result<PieceBundle>> =
        pool(config)?.install(|| pieces.par_iter().map(|p| analyze_piece(p, config)).collect());
    let ids: Vec<String> = pieces.iter().map(|p| p.id.clone()).collect();
    merge(ids, outcomes, config)
}

fn merge(ids: Vec<String>, outcomes: Vec<Result<PieceBundle>>, config: &RunConfig) -> Result<CorpusResult> {
    let mut bundles = Vec::new();
    let mut skipped = Vec::new();
    let mut errors = Vec::new();
    for (id, outcome) in ids.into_iter().zip(outcomes) {
        match outcome {
            Ok(b) => bundles.push(b),
            Err(e) => {
                warn!("skipping piece '{id}': {e}");
                skipped.push(SkippedPiece {
                    id,
                    reason: e.to_string(),
                });
                errors.push(e);
            }
        }
    }
    if bundles.is_empty() {
        // Bad input everywhere is reported as such.
        if errors.iter().all(|e| e.exit_code() == 1) {
            return Err(errors.swap_remove(0));
        }
        let reasons: Vec<String> = skipped.iter().map(|s| s.reason.clone()).collect();
        return Err(CliError::Failed(format!("every piece failed: {}", reasons.join("; "))));
    }
    let measurements: Vec<IntervalMeasurement> = bundles.iter().flat_map(|b| b.intervals.clone()).collect();
    let report = analysis::aggregate(&measurements, config.min_samples)
        .map_err(|e| CliError::Failed(format!("corpus: {e}")))?;

    let tonic = match config.tonic {
        Some(t) => QuartertoneNote::new(t).ok(),
        None => report.intervals.iter().map(|s| s.lower.clone()).min(),
    };
    let scale = tonic.and_then(|tonic| match analysis::scale_rows(&report, &tonic) {
        Ok(rows) => Some(rows),
        Err(e) => {
            warn!("no measured scale: {e}");
            None
        }
    });
    let mut comparisons = Vec::new();
    if let Some(rows) = &scale {
        let labelled = analysis::labelled(rows);
        for id in &config.scales {
            let reference = scale_by_id(id).map_err(|e| CliError::Input(e.to_string()))?;
            match analysis::compare_to_reference(&labelled, &reference) {
                Ok(c) => comparisons.push((id.clone(), c)),
                Err(e) => warn!("comparison with {id}: {e}"),
            }
        }
    }
    Ok(CorpusResult {
        pieces: bundles,
        skipped,
        report,
        scale,
        comparisons,
    })
}
