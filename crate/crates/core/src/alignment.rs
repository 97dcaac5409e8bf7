//! Score-to-trace alignment.
//!
//! The transcription is stretched to the trace's frame count, each note
//! repeated in proportion to its written duration, and the two cents
//! sequences are matched with dynamic time warping.

use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::histogram::{Histogram, HistogramError, PitchTrace};
use crate::pitch::QuartertoneNote;

/// Local distance between an unvoiced trace frame and any reference frame.
pub const DEFAULT_UNVOICED_PENALTY: f64 = 600.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlignError {
    #[error("transcription has no notes")]
    EmptyTranscription,
    #[error("note {index} has non-positive duration {duration}")]
    BadDuration { index: usize, duration: f64 },
    #[error("{frames} frames cannot hold {notes} notes")]
    TooFewFrames { frames: usize, notes: usize },
    #[error("cannot align an empty sequence")]
    EmptySequence,
    #[error("{onsets} ground-truth onsets for {notes} notes")]
    OnsetCountMismatch { onsets: usize, notes: usize },
    #[error("alignment path does not match the sequences")]
    InvalidPath,
    #[error(transparent)]
    Histogram(#[from] HistogramError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscribedNote {
    pub note: QuartertoneNote,
    /// Written duration, seconds.
    pub duration: f64,
    pub label: Option<String>,
}

impl TranscribedNote {
    pub fn label(&self) -> &str {
        self.label.as_deref().unwrap_or(self.note.name())
    }
}

/// Ordered symbolic notes of one piece.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcription {
    notes: Vec<TranscribedNote>,
}

impl Transcription {
    pub fn new(notes: Vec<TranscribedNote>) -> Result<Self, AlignError> {
        if notes.is_empty() {
            return Err(AlignError::EmptyTranscription);
        }
        if let Some((index, n)) = notes
            .iter()
            .enumerate()
            .find(|(_, n)| !(n.duration.is_finite() && n.duration > 0.0))
        {
            return Err(AlignError::BadDuration {
                index,
                duration: n.duration,
            });
        }
        Ok(Self { notes })
    }

    pub fn notes(&self) -> &[TranscribedNote] {
        &self.notes
    }

    pub fn len(&self) -> usize {
        self.notes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.notes.is_empty()
    }

    pub fn total_duration(&self) -> f64 {
        self.notes.iter().map(|n| n.duration).sum()
    }

    /// Written duration summed per distinct note.
    pub fn duration_by_note(&self) -> BTreeMap<QuartertoneNote, f64> {
        let mut out = BTreeMap::new();
        for n in &self.notes {
            *out.entry(n.note.clone()).or_insert(0.0) += n.duration;
        }
        out
    }
}

/// Largest-remainder apportionment of `total_frames` by note duration. Ties
/// in the remainder go to the earlier note.
pub fn frame_counts(t: &Transcription, total_frames: usize) -> Result<Vec<usize>, AlignError> {
    if total_frames < t.len() {
        return Err(AlignError::TooFewFrames {
            frames: total_frames,
            notes: t.len(),
        });
    }
    let total = t.total_duration();
    let exact: Vec<f64> = t
        .notes
        .iter()
        .map(|n| total_frames as f64 * n.duration / total)
        .collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total_frames.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    Ok(counts)
}

/// Reference cents per frame: each note's nominal pitch plus `offset`,
/// repeated for its share of `total_frames`.
pub fn expand_transcription(
    t: &Transcription,
    total_frames: usize,
    offset: f64,
) -> Result<Vec<f64>, AlignError> {
    let counts = frame_counts(t, total_frames)?;
    Ok(t.notes
        .iter()
        .zip(&counts)
        .flat_map(|(n, &k)| std::iter::repeat_n(n.note.nominal_cents() + offset, k))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DtwOptions {
    pub unvoiced_penalty: f64,
    /// Sakoe-Chiba half-width in frames around the scaled diagonal.
    pub band: Option<usize>,
}

impl Default for DtwOptions {
    fn default() -> Self {
        Self {
            unvoiced_penalty: DEFAULT_UNVOICED_PENALTY,
            band: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtwResult {
    /// `(trace_frame, reference_frame)` from `(0, 0)` to the last pair.
    pub pairs: Vec<(usize, usize)>,
    pub cost: f64,
}

const FROM_DIAGONAL: u8 = 0;
const FROM_TRACE: u8 = 1;
const FROM_REFERENCE: u8 = 2;

fn local_distance(trace: Option<f64>, reference: f64, penalty: f64) -> f64 {
    match trace {
        Some(c) => (c - reference).abs(),
        None => penalty,
    }
}

/// Column window of row `i` under the band constraint.
fn band_columns(i: usize, n: usize, m: usize, band: Option<usize>) -> (usize, usize) {
    match band {
        None => (0, m - 1),
        Some(w) => {
            let center = if n > 1 {
                (i as f64 * (m - 1) as f64 / (n - 1) as f64).round() as usize
            } else {
                0
            };
            let w = w.max(1);
            (center.saturating_sub(w), (center + w).min(m - 1))
        }
    }
}

/// Classic DTW with steps (1,0), (0,1), (1,1) and `|Δcents|` distance.
///
/// Backtracking prefers the diagonal, then the trace step, on equal cost.
/// With a band, cells outside it are unreachable; the band is widened
/// automatically if it would disconnect the corners.
pub fn dtw_align(
    trace: &[Option<f64>],
    reference: &[f64],
    options: DtwOptions,
) -> Result<DtwResult, AlignError> {
    let (n, m) = (trace.len(), reference.len());
    if n == 0 || m == 0 {
        return Err(AlignError::EmptySequence);
    }
    // A band narrower than the slope leaves gaps between consecutive rows.
    let band = options.band.map(|w| {
        let slope = (m as f64 / n as f64).max(n as f64 / m as f64).ceil() as usize;
        w.max(slope)
    });
    let windows: Vec<(usize, usize)> = (0..n).map(|i| band_columns(i, n, m, band)).collect();
    let mut moves: Vec<Vec<u8>> = Vec::with_capacity(n);
    let mut prev = vec![f64::INFINITY; m];
    let mut row = vec![f64::INFINITY; m];
    for i in 0..n {
        let (lo, hi) = windows[i];
        let mut dirs = vec![FROM_DIAGONAL; hi - lo + 1];
        row.iter_mut().for_each(|v| *v = f64::INFINITY);
        for j in lo..=hi {
            let d = local_distance(trace[i], reference[j], options.unvoiced_penalty);
            if i == 0 && j == 0 {
                row[0] = d;
                continue;
            }
            let diag = if i > 0 && j > 0 { prev[j - 1] } else { f64::INFINITY };
            let up = if i > 0 { prev[j] } else { f64::INFINITY };
            let left = if j > 0 { row[j - 1] } else { f64::INFINITY };
            let (best, dir) = if diag <= up && diag <= left {
                (diag, FROM_DIAGONAL)
            } else if up <= left {
                (up, FROM_TRACE)
            } else {
                (left, FROM_REFERENCE)
            };
            row[j] = best + d;
            dirs[j - lo] = dir;
        }
        moves.push(dirs);
        std::mem::swap(&mut prev, &mut row);
    }
    let cost = prev[m - 1];
    let mut pairs = Vec::with_capacity(n + m);
    let (mut i, mut j) = (n - 1, m - 1);
    pairs.push((i, j));
    while i > 0 || j > 0 {
        let dir = if i == 0 {
            FROM_REFERENCE
        } else if j == 0 {
            FROM_TRACE
        } else {
            moves[i][j - windows[i].0]
        };
        match dir {
            FROM_DIAGONAL => {
                i -= 1;
                j -= 1;
            }
            FROM_TRACE => i -= 1,
            _ => j -= 1,
        }
        pairs.push((i, j));
    }
    pairs.reverse();
    Ok(DtwResult { pairs, cost })
}

/// DTW path together with the trace frames assigned to each note.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentPath {
    pub pairs: Vec<(usize, usize)>,
    /// Half-open trace-frame range per transcription note, in note order.
    pub note_spans: Vec<Range<usize>>,
}

impl AlignmentPath {
    /// Note index of every trace frame, if assigned.
    pub fn frame_notes(&self, frames: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; frames];
        for (k, span) in self.note_spans.iter().enumerate() {
            for f in span.clone() {
                if f < frames {
                    out[f] = Some(k);
                }
            }
        }
        out
    }
}

fn check_path(pairs: &[(usize, usize)], trace_len: usize, ref_len: usize) -> Result<(), AlignError> {
    let ok = pairs.first() == Some(&(0, 0))
        && pairs.last() == Some(&(trace_len - 1, ref_len - 1))
        && pairs.windows(2).all(|w| {
            let (di, dj) = (w[1].0 as i64 - w[0].0 as i64, w[1].1 as i64 - w[0].1 as i64);
            matches!((di, dj), (1, 0) | (0, 1) | (1, 1))
        });
    if ok {
        Ok(())
    } else {
        Err(AlignError::InvalidPath)
    }
}

/// Assigns each trace frame to one note: the note owning most of the
/// reference frames it is matched with, ties going to the earlier note.
pub fn note_spans_from_path(
    pairs: &[(usize, usize)],
    trace_len: usize,
    t: &Transcription,
) -> Result<AlignmentPath, AlignError> {
    if trace_len == 0 {
        return Err(AlignError::EmptySequence);
    }
    let counts = frame_counts(t, pairs.last().map_or(0, |p| p.1 + 1))?;
    let ref_len: usize = counts.iter().sum();
    check_path(pairs, trace_len, ref_len)?;
    let mut note_of_ref = Vec::with_capacity(ref_len);
    for (k, &c) in counts.iter().enumerate() {
        note_of_ref.extend(std::iter::repeat_n(k, c));
    }

    let mut assignment = vec![0usize; trace_len];
    let mut idx = 0;
    while idx < pairs.len() {
        let frame = pairs[idx].0;
        let mut votes: BTreeMap<usize, usize> = BTreeMap::new();
        while idx < pairs.len() && pairs[idx].0 == frame {
            *votes.entry(note_of_ref[pairs[idx].1]).or_insert(0) += 1;
            idx += 1;
        }
        // BTreeMap iterates in note order, so `>` keeps the earlier note on ties.
        let mut best = (0, 0);
        for (&note, &v) in &votes {
            if v > best.1 {
                best = (note, v);
            }
        }
        assignment[frame] = best.0;
    }

    let mut spans = Vec::with_capacity(t.len());
    let mut cursor = 0;
    for k in 0..t.len() {
        let start = cursor;
        while cursor < trace_len && assignment[cursor] == k {
            cursor += 1;
        }
        spans.push(start..cursor);
    }
    Ok(AlignmentPath {
        pairs: pairs.to_vec(),
        note_spans: spans,
    })
}

/// Full alignment of a trace against a transcription whose nominal pitches
/// are shifted by `offset` cents.
pub fn align(
    trace: &PitchTrace,
    t: &Transcription,
    offset: f64,
    options: DtwOptions,
) -> Result<(AlignmentPath, f64), AlignError> {
    let reference = expand_transcription(t, trace.len(), offset)?;
    let dtw = dtw_align(trace.cents(), &reference, options)?;
    let path = note_spans_from_path(&dtw.pairs, trace.len(), t)?;
    Ok((path, dtw.cost))
}

/// Voiced cents of the frames assigned to each distinct note.
pub fn note_values(
    trace: &PitchTrace,
    path: &AlignmentPath,
    t: &Transcription,
) -> BTreeMap<QuartertoneNote, Vec<f64>> {
    let mut out: BTreeMap<QuartertoneNote, Vec<f64>> = BTreeMap::new();
    for (span, n) in path.note_spans.iter().zip(t.notes()) {
        let values = out.entry(n.note.clone()).or_default();
        values.extend(trace.cents()[span.clone()].iter().flatten().copied());
    }
    out.retain(|_, v| !v.is_empty());
    out
}

/// One histogram per distinct note, pooling all of its occurrences. Notes
/// with no voiced frames assigned are omitted.
pub fn note_histograms(
    trace: &PitchTrace,
    path: &AlignmentPath,
    t: &Transcription,
    bin_width: f64,
    pad_bins: usize,
) -> Result<Vec<(QuartertoneNote, Histogram)>, AlignError> {
    note_values(trace, path, t)
        .into_iter()
        .map(|(note, values)| Ok((note, Histogram::from_values(values, bin_width, pad_bins)?)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnsetEvaluation {
    /// `|detected - annotated|` per note, milliseconds.
    pub deviations_ms: Vec<f64>,
    pub max_ms: f64,
    pub mean_ms: f64,
}

/// Compares the start time of each note span with annotated onsets.
pub fn evaluate_alignment(
    path: &AlignmentPath,
    trace: &PitchTrace,
    ground_truth_onsets: &[f64],
) -> Result<OnsetEvaluation, AlignError> {
    if ground_truth_onsets.len() != path.note_spans.len() {
        return Err(AlignError::OnsetCountMismatch {
            onsets: ground_truth_onsets.len(),
            notes: path.note_spans.len(),
        });
    }
    let deviations_ms: Vec<f64> = path
        .note_spans
        .iter()
        .zip(ground_truth_onsets)
        .map(|(span, &onset)| (trace.time(span.start) - onset).abs() * 1000.0)
        .collect();
    let max_ms = deviations_ms.iter().copied().fold(0.0, f64::max);
    let mean_ms = if deviations_ms.is_empty() {
        0.0
    } else {
        deviations_ms.iter().sum::<f64>() / deviations_ms.len() as f64
    };
    Ok(OnsetEvaluation {
        deviations_ms,
        max_ms,
        mean_ms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn transcription(notes: &[(i64, f64)]) -> Transcription {
        Transcription::new(
            notes
                .iter()
                .map(|&(d, dur)| TranscribedNote {
                    note: QuartertoneNote::new(d).unwrap(),
                    duration: dur,
                    label: None,
                })
                .collect(),
        )
        .unwrap()
    }

    /// Exhaustive minimum over all monotone paths.
    fn brute_force(trace: &[Option<f64>], reference: &[f64], penalty: f64) -> f64 {
        fn go(i: usize, j: usize, t: &[Option<f64>], r: &[f64], p: f64) -> f64 {
            let d = local_distance(t[i], r[j], p);
            if i == t.len() - 1 && j == r.len() - 1 {
                return d;
            }
            let mut best = f64::INFINITY;
            if i + 1 < t.len() {
                best = best.min(go(i + 1, j, t, r, p));
            }
            if j + 1 < r.len() {
                best = best.min(go(i, j + 1, t, r, p));
            }
            if i + 1 < t.len() && j + 1 < r.len() {
                best = best.min(go(i + 1, j + 1, t, r, p));
            }
            d + best
        }
        go(0, 0, trace, reference, penalty)
    }

    fn path_cost(pairs: &[(usize, usize)], t: &[Option<f64>], r: &[f64]) -> f64 {
        pairs
            .iter()
            .map(|&(i, j)| local_distance(t[i], r[j], DEFAULT_UNVOICED_PENALTY))
            .sum()
    }

    #[test]
    fn transcription_validation() {
        assert!(Transcription::new(vec![]).is_err());
        let bad = TranscribedNote {
            note: QuartertoneNote::new(120).unwrap(),
            duration: 0.0,
            label: None,
        };
        assert!(matches!(
            Transcription::new(vec![bad]),
            Err(AlignError::BadDuration { index: 0, .. })
        ));
    }

    #[test]
    fn expansion_examples() {
        let two = transcription(&[(120, 1.0), (124, 1.0)]);
        assert_eq!(frame_counts(&two, 10).unwrap(), vec![5, 5]);
        let e = expand_transcription(&two, 10, 0.0).unwrap();
        assert_eq!(e[..5], [6000.0; 5]);
        assert_eq!(e[5..], [6200.0; 5]);
        assert_eq!(
            frame_counts(&transcription(&[(120, 1.0), (124, 2.0)]), 9).unwrap(),
            vec![3, 6]
        );
        let three = frame_counts(&transcription(&[(120, 1.0), (124, 1.0), (127, 1.0)]), 10).unwrap();
        assert_eq!(three, vec![4, 3, 3]);
        assert!(frame_counts(&three_notes(), 2).is_err());
        let shifted = expand_transcription(&two, 4, 12.5).unwrap();
        assert_eq!(shifted, vec![6012.5, 6012.5, 6212.5, 6212.5]);
    }

    fn three_notes() -> Transcription {
        transcription(&[(120, 1.0), (124, 1.0), (127, 1.0)])
    }

    #[test]
    fn expansion_matches_apportionment_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let k = rng.random_range(1..12);
            let notes: Vec<(i64, f64)> = (0..k).map(|_| (120, rng.random_range(0.05..3.0))).collect();
            let t = transcription(&notes);
            let frames = rng.random_range(k..2000);
            let counts = frame_counts(&t, frames).unwrap();
            assert_eq!(counts.iter().sum::<usize>(), frames);
            let total: f64 = notes.iter().map(|n| n.1).sum();
            for (c, n) in counts.iter().zip(&notes) {
                let exact = frames as f64 * n.1 / total;
                assert!((*c as f64 - exact).abs() < 1.0);
            }
        }
    }

    #[test]
    fn dtw_identical_is_diagonal() {
        let x: Vec<f64> = vec![6000.0, 6100.0, 6050.0, 6300.0, 6200.0];
        let t: Vec<Option<f64>> = x.iter().copied().map(Some).collect();
        let r = dtw_align(&t, &x, DtwOptions::default()).unwrap();
        assert_eq!(r.cost, 0.0);
        assert_eq!(r.pairs, (0..5).map(|i| (i, i)).collect::<Vec<_>>());
        assert!(dtw_align(&[], &x, DtwOptions::default()).is_err());
    }

    #[test]
    fn dtw_repeated_frame_one_straight_step() {
        let trace: Vec<Option<f64>> = [1.0, 5.0, 9.0, 2.0].iter().copied().map(Some).collect();
        let reference = [1.0, 5.0, 5.0, 9.0, 2.0];
        let r = dtw_align(&trace, &reference, DtwOptions::default()).unwrap();
        assert_eq!(r.cost, 0.0);
        let straight = r
            .pairs
            .windows(2)
            .filter(|w| !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1))
            .count();
        assert_eq!(straight, 1);
        assert_eq!(brute_force(&trace, &reference, DEFAULT_UNVOICED_PENALTY), 0.0);
    }

    #[test]
    fn dtw_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let n = rng.random_range(1..=8);
            let m = rng.random_range(1..=8);
            let trace: Vec<Option<f64>> = (0..n)
                .map(|_| (rng.random_bool(0.85)).then(|| rng.random_range(0..40) as f64 * 25.0))
                .collect();
            let reference: Vec<f64> = (0..m).map(|_| rng.random_range(0..40) as f64 * 25.0).collect();
            let r = dtw_align(&trace, &reference, DtwOptions::default()).unwrap();
            let oracle = brute_force(&trace, &reference, DEFAULT_UNVOICED_PENALTY);
            assert_eq!(r.cost, oracle);
            check_path(&r.pairs, n, m).unwrap();
            assert_eq!(path_cost(&r.pairs, &trace, &reference), r.cost);
        }
    }

    #[test]
    fn dtw_band_keeps_path_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let n = rng.random_range(1..60);
            let m = rng.random_range(1..60);
            let trace: Vec<Option<f64>> = (0..n).map(|_| Some(rng.random_range(0.0..500.0))).collect();
            let reference: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..500.0)).collect();
            let full = dtw_align(&trace, &reference, DtwOptions::default()).unwrap();
            let banded = dtw_align(&trace, &reference, DtwOptions { band: Some(3), ..Default::default() }).unwrap();
            check_path(&banded.pairs, n, m).unwrap();
            assert!(banded.cost >= full.cost - 1e-9);
            assert!((path_cost(&banded.pairs, &trace, &reference) - banded.cost).abs() < 1e-6);
        }
    }

    #[test]
    fn spans_diagonal() {
        let t = transcription(&[(120, 1.0), (124, 1.0)]);
        let pairs: Vec<(usize, usize)> = (0..10).map(|i| (i, i)).collect();
        let p = note_spans_from_path(&pairs, 10, &t).unwrap();
        assert_eq!(p.note_spans, vec![0..5, 5..10]);
    }

    #[test]
    fn spans_follow_straight_stretch() {
        // 8 trace frames, reference blocks [0,4) note 0 and [4,8) note 1. The
        // trace holds note 0 for two extra frames (frames 3..=5 all matched
        // to reference frame 3), then catches up along reference frame 7.
        let t = transcription(&[(120, 1.0), (124, 1.0)]);
        let pairs = vec![
            (0, 0),
            (1, 1),
            (2, 2),
            (3, 3),
            (4, 3),
            (5, 3),
            (6, 4),
            (6, 5),
            (6, 6),
            (7, 7),
        ];
        let p = note_spans_from_path(&pairs, 8, &t).unwrap();
        assert_eq!(p.note_spans, vec![0..6, 6..8]);
        // Frame 6 sees reference 4, 5, 6: all note 1.
        assert_eq!(p.frame_notes(8)[6], Some(1));
    }

    #[test]
    fn spans_majority_tie_goes_earlier() {
        let t = transcription(&[(120, 1.0), (124, 1.0)]);
        // Frame 1 matches reference 1 (note 0) and 2 (note 1): a tie.
        let pairs = vec![(0, 0), (1, 1), (1, 2), (2, 3)];
        let p = note_spans_from_path(&pairs, 3, &t).unwrap();
        assert_eq!(p.note_spans, vec![0..2, 2..3]);
        assert!(note_spans_from_path(&[(0, 0), (2, 3)], 3, &t).is_err());
    }

    #[test]
    fn spans_single_note() {
        let t = transcription(&[(120, 3.0)]);
        let pairs = vec![(0, 0), (1, 1), (2, 1), (3, 2)];
        let p = note_spans_from_path(&pairs, 4, &t).unwrap();
        assert_eq!(p.note_spans, vec![0..4]);
    }

    fn steady_trace(notes: &[(f64, usize)], hop: f64) -> PitchTrace {
        let cents = notes
            .iter()
            .flat_map(|&(c, k)| std::iter::repeat_n(Some(c), k))
            .collect();
        PitchTrace::from_cents(0.0, hop, cents).unwrap()
    }

    #[test]
    fn note_histograms_at_nominal() {
        let t = transcription(&[(120, 1.0), (124, 1.0), (120, 1.0)]);
        let trace = steady_trace(&[(6000.0, 30), (6200.0, 30), (6000.0, 30)], 0.01);
        let (path, cost) = align(&trace, &t, 0.0, DtwOptions::default()).unwrap();
        assert_eq!(cost, 0.0);
        let hs = note_histograms(&trace, &path, &t, 1.0, 5).unwrap();
        assert_eq!(hs.len(), 2);
        for (note, h) in &hs {
            let nonzero: Vec<usize> = (0..h.len()).filter(|&i| h.counts[i] > 0.0).collect();
            assert_eq!(nonzero.len(), 1);
            assert_eq!(h.center(nonzero[0]), note.nominal_cents());
        }
        assert_eq!(hs[0].1.total(), 60.0);
        let mass: f64 = hs.iter().map(|(_, h)| h.total()).sum();
        assert_eq!(mass, trace.voiced_count() as f64);
    }

    #[test]
    fn sharp_note_only_moves_itself() {
        let t = transcription(&[(120, 1.0), (124, 1.0), (127, 1.0)]);
        let trace = steady_trace(&[(6000.0, 40), (6220.0, 40), (6350.0, 40)], 0.01);
        let (path, _) = align(&trace, &t, 0.0, DtwOptions::default()).unwrap();
        let hs = note_histograms(&trace, &path, &t, 1.0, 5).unwrap();
        let peak = |h: &Histogram| h.center((0..h.len()).max_by(|&a, &b| h.counts[a].total_cmp(&h.counts[b])).unwrap());
        assert_eq!(peak(&hs[0].1), 6000.0);
        assert_eq!(peak(&hs[1].1), 6220.0);
        assert_eq!(peak(&hs[2].1), 6350.0);
    }

    #[test]
    fn onset_evaluation() {
        let t = transcription(&[(120, 1.0), (124, 1.0)]);
        let hop = 256.0 / 44100.0;
        let trace = steady_trace(&[(6000.0, 50), (6200.0, 50)], hop);
        let (path, _) = align(&trace, &t, 0.0, DtwOptions::default()).unwrap();
        let exact = evaluate_alignment(&path, &trace, &[0.0, 50.0 * hop]).unwrap();
        assert!(exact.deviations_ms.iter().all(|&d| d < 1e-9));
        let late = evaluate_alignment(&path, &trace, &[0.0, 48.0 * hop]).unwrap();
        assert!((late.deviations_ms[1] - 2.0 * hop * 1000.0).abs() < 1e-9);
        assert!((late.max_ms - 11.6).abs() < 0.05);
        assert!(evaluate_alignment(&path, &trace, &[0.0]).is_err());
    }

    #[test]
    fn unvoiced_frames_cost_the_penalty() {
        let trace = vec![Some(6000.0), None, Some(6000.0)];
        let r = dtw_align(&trace, &[6000.0, 6000.0, 6000.0], DtwOptions::default()).unwrap();
        assert_eq!(r.cost, 600.0);
    }
}
