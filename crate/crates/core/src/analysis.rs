//! Interval measurement and statistics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alignment::Transcription;
use crate::histogram::Histogram;
use crate::peakfit::Typology;
use crate::pitch::{QuartertoneNote, ReferenceScale};

pub const DEFAULT_MIN_SAMPLES: usize = 3;

/// Standard-deviation band of the steadier intervals, exclusive bounds.
pub const LOW_VARIANCE_BAND: (f64, f64) = (5.0, 8.0);
/// Standard-deviation band of the more flexible intervals, exclusive bounds.
pub const HIGH_VARIANCE_BAND: (f64, f64) = (11.0, 14.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("need at least two peaks to measure an interval, got {0}")]
    TooFewPeaks(usize),
    #[error("no interval measurements")]
    NoMeasurements,
    #[error("min_samples must be at least 1")]
    BadMinSamples,
    #[error("no interval from {from} to the next degree {missing}")]
    Gap { from: String, missing: String },
    #[error("measured degrees share no labels with scale '{0}'")]
    NoSharedDegrees(String),
}

/// Performed pitch of one note in one piece.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NotePeak {
    pub note: QuartertoneNote,
    /// Absolute cents as measured.
    pub peak_cents: f64,
    /// `peak_cents` minus the piece's calibration offset.
    pub corrected_cents: f64,
    /// Frames supporting the peak.
    pub mass: f64,
    pub typology: Typology,
    pub piece_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalMeasurement {
    pub lower: QuartertoneNote,
    pub upper: QuartertoneNote,
    /// Cents.
    pub size: f64,
    pub piece_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarianceGroup {
    LowVariance,
    HighVariance,
    Ungrouped,
}

impl VarianceGroup {
    pub fn of(sd: f64) -> Self {
        let inside = |(lo, hi): (f64, f64)| sd > lo && sd < hi;
        if inside(LOW_VARIANCE_BAND) {
            VarianceGroup::LowVariance
        } else if inside(HIGH_VARIANCE_BAND) {
            VarianceGroup::HighVariance
        } else {
            VarianceGroup::Ungrouped
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            VarianceGroup::LowVariance => "low-variance",
            VarianceGroup::HighVariance => "high-variance",
            VarianceGroup::Ungrouped => "ungrouped",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalStats {
    pub lower: QuartertoneNote,
    pub upper: QuartertoneNote,
    pub n_samples: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); 0 for a single sample.
    pub sd: f64,
    pub group: VarianceGroup,
}

impl IntervalStats {
    pub fn name(&self) -> String {
        format!("{}-{}", self.lower.name(), self.upper.name())
    }
}

/// Aggregated intervals, ordered by note pair.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IntervalReport {
    pub intervals: Vec<IntervalStats>,
}

impl IntervalReport {
    pub fn get(&self, lower: &QuartertoneNote, upper: &QuartertoneNote) -> Option<&IntervalStats> {
        self.intervals
            .iter()
            .find(|s| &s.lower == lower && &s.upper == upper)
    }
}

/// Offset of the performance from the written pitch: the audio shāhed peak
/// minus the nominal pitch of the written note with the longest total
/// duration (earlier note on ties).
pub fn calibrate_offset(audio_shahed_cents: f64, t: &Transcription) -> f64 {
    audio_shahed_cents - transcription_shahed(t).nominal_cents()
}

/// Written note with the longest total duration; ties go to the note that
/// appears first.
pub fn transcription_shahed(t: &Transcription) -> QuartertoneNote {
    let totals = t.duration_by_note();
    let mut best: Option<(&QuartertoneNote, f64)> = None;
    for n in t.notes() {
        let d = totals[&n.note];
        if best.is_none_or(|(_, b)| d > b) {
            best = Some((&n.note, d));
        }
    }
    best.expect("transcription is non-empty").0.clone()
}

/// Agreement between the written pitches shifted by `offset` and the
/// histogram: the duration-weighted mean count at each shifted pitch.
pub fn offset_score(h: &Histogram, t: &Transcription, offset: f64) -> f64 {
    let total = t.total_duration();
    t.duration_by_note()
        .iter()
        .map(|(note, d)| {
            let count = h.bin_of(note.nominal_cents() + offset).map_or(0.0, |b| h.counts[b]);
            d / total * count
        })
        .sum()
}

/// Checks the shāhed calibration against the rest of the piece.
///
/// Each candidate pairs one audio peak with one written note. The candidate
/// with the highest [`offset_score`] wins; `preferred` (normally from
/// [`calibrate_offset`]) is kept unless another candidate scores strictly
/// higher. Remaining ties go to the candidate closest to `preferred`, then
/// the lower offset.
pub fn match_offset(h: &Histogram, peaks: &[f64], t: &Transcription, preferred: f64) -> f64 {
    let mut best = (preferred, offset_score(h, t, preferred));
    let notes = t.duration_by_note();
    for &p in peaks {
        for note in notes.keys() {
            let o = p - note.nominal_cents();
            let score = offset_score(h, t, o);
            let closer = (o - preferred).abs() < (best.0 - preferred).abs()
                || ((o - preferred).abs() == (best.0 - preferred).abs() && o < best.0);
            if score > best.1 || (score == best.1 && best.0 != preferred && closer) {
                best = (o, score);
            }
        }
    }
    best.0
}

/// Differences between consecutive peaks, ordered by written note. Degrees
/// missing from the piece are not interpolated; the neighbours present are
/// paired directly.
pub fn extract_intervals(peaks: &[NotePeak]) -> Result<Vec<IntervalMeasurement>, AnalysisError> {
    if peaks.len() < 2 {
        return Err(AnalysisError::TooFewPeaks(peaks.len()));
    }
    let mut sorted: Vec<&NotePeak> = peaks.iter().collect();
    sorted.sort_by(|a, b| a.note.cmp(&b.note));
    sorted.dedup_by(|b, a| a.note == b.note);
    Ok(sorted
        .windows(2)
        .map(|w| IntervalMeasurement {
            lower: w[0].note.clone(),
            upper: w[1].note.clone(),
            size: w[1].peak_cents - w[0].peak_cents,
            piece_id: w[0].piece_id.clone(),
        })
        .collect())
}

/// Welford running mean and sample standard deviation.
fn mean_sd(values: &[f64]) -> (f64, f64) {
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (k, &x) in values.iter().enumerate() {
        let delta = x - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (x - mean);
    }
    let sd = if values.len() > 1 {
        (m2 / (values.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

/// Mean and sample sd per note pair. Pairs with fewer than `min_samples`
/// measurements are left out. Values are sorted before summation so the
/// result does not depend on input order.
pub fn aggregate(
    measurements: &[IntervalMeasurement],
    min_samples: usize,
) -> Result<IntervalReport, AnalysisError> {
    if min_samples == 0 {
        return Err(AnalysisError::BadMinSamples);
    }
    if measurements.is_empty() {
        return Err(AnalysisError::NoMeasurements);
    }
    let mut by_pair: BTreeMap<(QuartertoneNote, QuartertoneNote), Vec<f64>> = BTreeMap::new();
    for m in measurements {
        by_pair
            .entry((m.lower.clone(), m.upper.clone()))
            .or_default()
            .push(m.size);
    }
    let intervals = by_pair
        .into_iter()
        .filter(|(_, v)| v.len() >= min_samples)
        .map(|((lower, upper), mut values)| {
            values.sort_by(f64::total_cmp);
            let (mean, sd) = mean_sd(&values);
            IntervalStats {
                lower,
                upper,
                n_samples: values.len(),
                mean,
                sd,
                group: VarianceGroup::of(sd),
            }
        })
        .collect();
    Ok(IntervalReport { intervals })
}

/// One degree of a measured scale, cents above the tonic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleRow {
    pub note: QuartertoneNote,
    pub label: String,
    pub cents: f64,
}

/// Cumulative sums of mean intervals upward from `tonic`, over every note of
/// the report at or above it. Each consecutive pair of those notes needs a
/// mean interval.
pub fn scale_rows(report: &IntervalReport, tonic: &QuartertoneNote) -> Result<Vec<ScaleRow>, AnalysisError> {
    let mut degrees: Vec<QuartertoneNote> = report
        .intervals
        .iter()
        .flat_map(|s| [s.lower.clone(), s.upper.clone()])
        .filter(|n| n >= tonic)
        .collect();
    degrees.push(tonic.clone());
    degrees.sort();
    degrees.dedup();

    let mut rows = vec![ScaleRow {
        note: tonic.clone(),
        label: tonic.degree_label(tonic),
        cents: 0.0,
    }];
    let mut cents = 0.0;
    for w in degrees.windows(2) {
        let step = report.get(&w[0], &w[1]).ok_or_else(|| AnalysisError::Gap {
            from: w[0].name().to_string(),
            missing: w[1].name().to_string(),
        })?;
        cents += step.mean;
        rows.push(ScaleRow {
            note: w[1].clone(),
            label: w[1].degree_label(tonic),
            cents,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeDelta {
    pub label: String,
    pub measured: f64,
    pub reference: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleComparison {
    pub scale: String,
    pub deltas: Vec<DegreeDelta>,
    /// Measured labels absent from the reference.
    pub unmatched_measured: Vec<String>,
    /// Reference labels absent from the measurement.
    pub unmatched_reference: Vec<String>,
}

/// Measured minus reference cents, per label the two have in common.
pub fn compare_to_reference(
    rows: &[(String, f64)],
    scale: &ReferenceScale,
) -> Result<ScaleComparison, AnalysisError> {
    let mut deltas = Vec::new();
    let mut unmatched_measured = Vec::new();
    for (label, measured) in rows {
        match scale.get(label) {
            Some(reference) => deltas.push(DegreeDelta {
                label: label.clone(),
                measured: *measured,
                reference,
                delta: measured - reference,
            }),
            None => unmatched_measured.push(label.clone()),
        }
    }
    if deltas.is_empty() {
        return Err(AnalysisError::NoSharedDegrees(scale.name.clone()));
    }
    let unmatched_reference = scale
        .degrees
        .iter()
        .filter(|d| !rows.iter().any(|(l, _)| l == &d.label))
        .map(|d| d.label.clone())
        .collect();
    Ok(ScaleComparison {
        scale: scale.name.clone(),
        deltas,
        unmatched_measured,
        unmatched_reference,
    })
}

/// Labelled cents of measured rows, for [`compare_to_reference`].
pub fn labelled(rows: &[ScaleRow]) -> Vec<(String, f64)> {
    rows.iter().map(|r| (r.label.clone(), r.cents)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::TranscribedNote;
    use crate::pitch::{reference_scale, shur_scale, ScaleName};
    use proptest::prelude::*;

    fn note(d: i64) -> QuartertoneNote {
        QuartertoneNote::new(d).unwrap()
    }

    fn peak(d: i64, cents: f64) -> NotePeak {
        NotePeak {
            note: note(d),
            peak_cents: cents,
            corrected_cents: cents,
            mass: 100.0,
            typology: Typology::I,
            piece_id: "p".into(),
        }
    }

    fn measurement(lo: i64, hi: i64, size: f64) -> IntervalMeasurement {
        IntervalMeasurement {
            lower: note(lo),
            upper: note(hi),
            size,
            piece_id: "p".into(),
        }
    }

    fn transcription(notes: &[(i64, f64)]) -> Transcription {
        Transcription::new(
            notes
                .iter()
                .map(|&(d, dur)| TranscribedNote {
                    note: note(d),
                    duration: dur,
                    label: None,
                })
                .collect(),
        )
        .unwrap()
    }

    fn two_pass_sd(v: &[f64]) -> f64 {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
    }

    #[test]
    fn match_offset_repairs_wrong_shahed() {
        use crate::alignment::TranscribedNote;
        let written = |d: i64, duration: f64| TranscribedNote {
            note: note(d),
            duration,
            label: None,
        };
        let t = Transcription::new(vec![written(120, 3.0), written(124, 2.9), written(130, 2.0)]).unwrap();
        // Performed 20 cents sharp; the D is held longest in the audio.
        let mass = [(6020.0, 2.0), (6220.0, 3.5), (6520.0, 2.0)];
        let h = Histogram {
            bin_width: 1.0,
            origin: 5899.5,
            counts: (0..800)
                .map(|i| {
                    let x = 5900.0 + i as f64;
                    mass.iter().map(|&(m, a)| a * (-(x - m).powi(2) / 200.0).exp()).sum()
                })
                .collect(),
        };
        let peaks: Vec<f64> = mass.iter().map(|m| m.0).collect();
        let naive = calibrate_offset(6220.0, &t);
        assert_eq!(naive, 220.0);
        assert_eq!(match_offset(&h, &peaks, &t, naive), 20.0);
        // A correct calibration is kept.
        assert_eq!(match_offset(&h, &peaks, &t, 20.0), 20.0);
    }

    #[test]
    fn calibration_examples() {
        let t = transcription(&[(120, 1.0), (124, 2.0), (127, 1.0)]);
        assert_eq!(calibrate_offset(6200.0, &t), 0.0);
        assert_eq!(calibrate_offset(6237.0, &t), 37.0);
        let tied = transcription(&[(127, 1.0), (120, 0.5), (124, 1.0), (120, 0.5)]);
        assert_eq!(transcription_shahed(&tied), note(127));
    }

    #[test]
    fn interval_examples() {
        let one = extract_intervals(&[peak(120, 6000.0), peak(124, 6206.0)]).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!((one[0].lower.doubled_midi(), one[0].upper.doubled_midi()), (120, 124));
        assert_eq!(one[0].size, 206.0);
        assert!(matches!(
            extract_intervals(&[peak(120, 6000.0)]),
            Err(AnalysisError::TooFewPeaks(1))
        ));
        let four = extract_intervals(&[
            peak(127, 6343.0),
            peak(120, 6000.0),
            peak(130, 6491.0),
            peak(124, 6206.0),
        ])
        .unwrap();
        let sizes: Vec<f64> = four.iter().map(|m| m.size).collect();
        assert_eq!(sizes, vec![206.0, 137.0, 148.0]);
    }

    #[test]
    fn skipped_degree_pairs_neighbours() {
        let m = extract_intervals(&[peak(120, 6000.0), peak(127, 6347.0)]).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].upper, note(127));
    }

    #[test]
    fn aggregate_examples() {
        let same: Vec<_> = (0..5).map(|_| measurement(120, 124, 204.0)).collect();
        let r = aggregate(&same, 3).unwrap();
        assert_eq!(r.intervals[0].sd, 0.0);
        assert_eq!(r.intervals[0].group, VarianceGroup::Ungrouped);
        let pair = aggregate(&[measurement(120, 124, 200.0), measurement(120, 124, 210.0)], 1).unwrap();
        assert_eq!(pair.intervals[0].mean, 205.0);
        assert!((pair.intervals[0].sd - 7.0710678).abs() < 1e-6);
        assert!(aggregate(&[], 1).is_err());
        assert!(aggregate(&same, 0).is_err());
        assert!(aggregate(&same, 6).unwrap().intervals.is_empty());
    }

    #[test]
    fn grouping_bands() {
        assert_eq!(VarianceGroup::of(5.0), VarianceGroup::Ungrouped);
        assert_eq!(VarianceGroup::of(5.5), VarianceGroup::LowVariance);
        assert_eq!(VarianceGroup::of(8.0), VarianceGroup::Ungrouped);
        assert_eq!(VarianceGroup::of(9.5), VarianceGroup::Ungrouped);
        assert_eq!(VarianceGroup::of(13.6), VarianceGroup::HighVariance);
        assert_eq!(VarianceGroup::of(14.0), VarianceGroup::Ungrouped);
    }

    fn report_of(means: &[(i64, i64, f64)]) -> IntervalReport {
        let ms: Vec<_> = means.iter().map(|&(a, b, s)| measurement(a, b, s)).collect();
        aggregate(&ms, 1).unwrap()
    }

    #[test]
    fn scale_row_examples() {
        let r = report_of(&[(120, 124, 210.0), (124, 127, 137.0), (127, 130, 151.0)]);
        let rows = scale_rows(&r, &note(120)).unwrap();
        let cents: Vec<f64> = rows.iter().map(|r| r.cents).collect();
        assert_eq!(cents, vec![0.0, 210.0, 347.0, 498.0]);
        let labels: Vec<&str> = rows.iter().map(|r| r.label.as_str()).collect();
        assert_eq!(labels, vec!["C", "D", "Ek", "F"]);

        let below = report_of(&[(110, 116, 300.0)]);
        assert_eq!(scale_rows(&below, &note(120)).unwrap().len(), 1);

        let gap = report_of(&[(120, 124, 210.0), (127, 130, 151.0)]);
        match scale_rows(&gap, &note(120)) {
            Err(AnalysisError::Gap { from, missing }) => {
                assert_eq!(from, "D4");
                assert_eq!(missing, "Ek4");
            }
            other => panic!("expected gap, got {other:?}"),
        }
    }

    fn shur_measured() -> Vec<(String, f64)> {
        [("C", 0.0), ("D", 210.0), ("Ek", 347.0), ("F", 498.0), ("G", 696.0), ("Ak", 836.0), ("Bb", 985.0), ("C'", 1190.0)]
            .iter()
            .map(|&(l, c)| (l.to_string(), c))
            .collect()
    }

    #[test]
    fn comparison_examples() {
        let farhat = shur_scale(ScaleName::Farhat).unwrap();
        let c = compare_to_reference(&shur_measured(), &farhat).unwrap();
        let deltas: Vec<f64> = c.deltas.iter().map(|d| d.delta).collect();
        assert_eq!(deltas, vec![0.0, 5.0, 7.0, -2.0, -4.0, 1.0, -10.0, -10.0]);
        assert!(c.unmatched_measured.is_empty() && c.unmatched_reference.is_empty());

        let vaziri = reference_scale(ScaleName::Vaziri);
        let v = compare_to_reference(&shur_measured(), &vaziri).unwrap();
        assert_eq!(v.deltas.iter().find(|d| d.label == "Ak").unwrap().delta, -14.0);

        let own: Vec<(String, f64)> = vaziri.degrees.iter().map(|d| (d.label.clone(), d.cents)).collect();
        assert!(compare_to_reference(&own, &vaziri).unwrap().deltas.iter().all(|d| d.delta == 0.0));

        let farabi = reference_scale(ScaleName::FarabiI);
        assert!(matches!(
            compare_to_reference(&shur_measured(), &farabi),
            Err(AnalysisError::NoSharedDegrees(_))
        ));
        let partial = compare_to_reference(&shur_measured()[..3], &farhat).unwrap();
        assert_eq!(partial.unmatched_reference.len(), 5);
    }

    proptest! {
        #[test]
        fn sd_matches_two_pass(values in prop::collection::vec(-500.0f64..500.0, 2..60)) {
            let (_, sd) = mean_sd(&values);
            prop_assert!((sd - two_pass_sd(&values)).abs() < 1e-9);
        }

        #[test]
        fn aggregate_permutation_invariant(
            sizes in prop::collection::vec((0usize..3, 100.0f64..250.0), 1..40),
            seed in any::<u64>(),
        ) {
            let ms: Vec<_> = sizes.iter().map(|&(k, s)| measurement(120 + 4 * k as i64, 124 + 4 * k as i64, s)).collect();
            let mut shuffled = ms.clone();
            let n = shuffled.len();
            let mut state = seed;
            for i in (1..n).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                shuffled.swap(i, (state >> 33) as usize % (i + 1));
            }
            prop_assert_eq!(aggregate(&ms, 1).unwrap(), aggregate(&shuffled, 1).unwrap());
        }

        #[test]
        fn scale_rows_telescope(steps in prop::collection::vec(50.0f64..250.0, 1..10)) {
            let means: Vec<(i64, i64, f64)> = steps.iter().enumerate()
                .map(|(k, &s)| (100 + 3 * k as i64, 103 + 3 * k as i64, s))
                .collect();
            let rows = scale_rows(&report_of(&means), &note(100)).unwrap();
            for (w, &s) in rows.windows(2).zip(&steps) {
                prop_assert!((w[1].cents - w[0].cents - s).abs() < 1e-9);
            }
        }
    }
}
