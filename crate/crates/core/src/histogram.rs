//! Pitch traces, cents histograms, moving-average smoothing and mountain
//! segmentation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pitch::{self, PitchError};

/// Voicing band applied when frames are ingested; anything outside is
/// treated as unvoiced.
pub const MIN_VOICED_HZ: f64 = 50.0;
pub const MAX_VOICED_HZ: f64 = 2000.0;

pub const DEFAULT_BIN_WIDTH: f64 = 1.0;
pub const DEFAULT_SMOOTHING_WINDOW: usize = 15;
pub const DEFAULT_MIN_PROMINENCE: f64 = 0.05;
pub const DEFAULT_MIN_MASS: f64 = 0.02;

const HOP_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HistogramError {
    #[error("no voiced frames")]
    NoVoicedFrames,
    #[error("empty trace")]
    EmptyTrace,
    #[error("hop must be positive, got {0}")]
    BadHop(f64),
    #[error("frame times are not uniform: frame {index} at {time} s, expected {expected} s")]
    NonUniformTimes {
        index: usize,
        time: f64,
        expected: f64,
    },
    #[error("bin width must be positive and finite, got {0}")]
    BadBinWidth(f64),
    #[error("smoothing window must be odd and at least 1, got {0}")]
    BadWindow(usize),
    #[error("histogram needs at least {needed} bins, has {actual}")]
    TooShort { needed: usize, actual: usize },
    #[error("threshold {name} must lie in (0, 1), got {value}")]
    BadThreshold { name: &'static str, value: f64 },
    #[error("range [{lo}, {hi}] covers no histogram bins")]
    RangeOutOfSpan { lo: f64, hi: f64 },
    #[error("no mountain ranges to choose from")]
    NoRanges,
    #[error(transparent)]
    Pitch(#[from] PitchError),
}

pub type Result<T, E = HistogramError> = std::result::Result<T, E>;

fn is_voiced_hz(f0: f64) -> bool {
    f0.is_finite() && (MIN_VOICED_HZ..=MAX_VOICED_HZ).contains(&f0)
}

/// A uniformly-sampled F0 trace in absolute cents; `None` marks an unvoiced
/// frame.
///
/// Frame `i` sits at `start + i * hop` seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PitchTrace {
    start: f64,
    hop: f64,
    cents: Vec<Option<f64>>,
}

impl PitchTrace {
    /// Builds a trace from `(time, f0_hz)` frames. Frames whose f0 is not
    /// inside the voicing band become unvoiced. Times must be uniform within
    /// 1e-6 s of `start + i * hop`.
    pub fn from_hz(frames: &[(f64, f64)], hop: f64) -> Result<Self> {
        let (start, _) = *frames.first().ok_or(HistogramError::EmptyTrace)?;
        if !(hop.is_finite() && hop > 0.0) {
            return Err(HistogramError::BadHop(hop));
        }
        let mut cents = Vec::with_capacity(frames.len());
        for (index, &(time, f0)) in frames.iter().enumerate() {
            let expected = start + index as f64 * hop;
            if (time - expected).abs() > HOP_TOLERANCE {
                return Err(HistogramError::NonUniformTimes {
                    index,
                    time,
                    expected,
                });
            }
            cents.push(if is_voiced_hz(f0) {
                Some(pitch::hz_to_cents(f0, pitch::A4_HZ)?)
            } else {
                None
            });
        }
        Ok(Self { start, hop, cents })
    }

    /// Builds a trace directly from per-frame cents, applying the same voicing
    /// band as [`PitchTrace::from_hz`].
    pub fn from_cents(start: f64, hop: f64, cents: Vec<Option<f64>>) -> Result<Self> {
        if cents.is_empty() {
            return Err(HistogramError::EmptyTrace);
        }
        if !(hop.is_finite() && hop > 0.0) {
            return Err(HistogramError::BadHop(hop));
        }
        let lo = pitch::hz_to_cents(MIN_VOICED_HZ, pitch::A4_HZ)?;
        let hi = pitch::hz_to_cents(MAX_VOICED_HZ, pitch::A4_HZ)?;
        let cents = cents
            .into_iter()
            .map(|c| c.filter(|v| v.is_finite() && (lo..=hi).contains(v)))
            .collect();
        Ok(Self { start, hop, cents })
    }

    pub fn len(&self) -> usize {
        self.cents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cents.is_empty()
    }

    pub fn hop(&self) -> f64 {
        self.hop
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn time(&self, frame: usize) -> f64 {
        self.start + frame as f64 * self.hop
    }

    pub fn cents(&self) -> &[Option<f64>] {
        &self.cents
    }

    pub fn voiced_count(&self) -> usize {
        self.cents.iter().filter(|c| c.is_some()).count()
    }

    /// The same trace with every voiced frame moved by `delta` cents.
    pub fn transposed(&self, delta: f64) -> Self {
        Self {
            start: self.start,
            hop: self.hop,
            cents: self.cents.iter().map(|c| c.map(|v| v + delta)).collect(),
        }
    }
}

/// Occurrence counts over uniform cents bins. Bin `i` covers
/// `[origin + i * bin_width, origin + (i + 1) * bin_width)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: f64,
    pub origin: f64,
    pub counts: Vec<f64>,
}

impl Histogram {
    /// Bins arbitrary cents values. Bin centers fall on integer multiples of
    /// `bin_width` and the span is padded by `pad_bins` empty bins per side.
    pub fn from_values<I>(values: I, bin_width: f64, pad_bins: usize) -> Result<Self>
    where
        I: IntoIterator<Item = f64>,
    {
        if !(bin_width.is_finite() && bin_width > 0.0) {
            return Err(HistogramError::BadBinWidth(bin_width));
        }
        let indices: Vec<i64> = values
            .into_iter()
            .map(|v| (v / bin_width + 0.5).floor() as i64)
            .collect();
        let (&min, &max) = match (indices.iter().min(), indices.iter().max()) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(HistogramError::NoVoicedFrames),
        };
        let first = min - pad_bins as i64;
        let len = (max - min) as usize + 1 + 2 * pad_bins;
        let mut counts = vec![0.0; len];
        for k in indices {
            counts[(k - first) as usize] += 1.0;
        }
        Ok(Self {
            bin_width,
            origin: (first as f64 - 0.5) * bin_width,
            counts,
        })
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn center(&self, bin: usize) -> f64 {
        self.origin + (bin as f64 + 0.5) * self.bin_width
    }

    pub fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.counts.len()).map(|i| self.center(i))
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    pub fn max_count(&self) -> f64 {
        self.counts.iter().copied().fold(0.0, f64::max)
    }

    /// Index of the bin containing `cents`, if inside the span.
    pub fn bin_of(&self, cents: f64) -> Option<usize> {
        let i = ((cents - self.origin) / self.bin_width).floor();
        (i >= 0.0 && (i as usize) < self.counts.len()).then_some(i as usize)
    }

    /// Bins whose centers lie in `[lo, hi]`, as an index range.
    pub fn bins_within(&self, lo: f64, hi: f64) -> std::ops::Range<usize> {
        let eps = self.bin_width * 1e-9;
        let first = ((lo - self.origin) / self.bin_width - 0.5 - eps).ceil().max(0.0) as usize;
        let last = ((hi - self.origin) / self.bin_width - 0.5 + eps).floor();
        if last < 0.0 {
            return 0..0;
        }
        let end = (last as usize + 1).min(self.counts.len());
        first.min(end)..end
    }

    /// `(center, count)` pairs of the bins inside `[lo, hi]`.
    pub fn points_within(&self, lo: f64, hi: f64) -> Vec<(f64, f64)> {
        self.bins_within(lo, hi)
            .map(|i| (self.center(i), self.counts[i]))
            .collect()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            bin_width: self.bin_width,
            origin: self.origin,
            counts: self.counts.iter().map(|c| c * factor).collect(),
        }
    }
}

/// Histogram of a trace's voiced frames, padded by `pad_bins` on each side.
pub fn build_histogram(trace: &PitchTrace, bin_width: f64, pad_bins: usize) -> Result<Histogram> {
    if trace.is_empty() {
        return Err(HistogramError::EmptyTrace);
    }
    Histogram::from_values(trace.cents.iter().flatten().copied(), bin_width, pad_bins)
}

/// Mirror index into `[0, n)` with the edge sample repeated
/// (`x[-1] = x[0]`), folding as many times as needed.
fn mirror(i: i64, n: usize) -> usize {
    let n = n as i64;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

/// Centered moving average over `window` bins with mirrored edges. The
/// half-sample mirror keeps total mass unchanged.
pub fn smooth(h: &Histogram, window: usize) -> Result<Histogram> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(HistogramError::BadWindow(window));
    }
    if window == 1 || h.counts.is_empty() {
        return Ok(h.clone());
    }
    let half = (window / 2) as i64;
    let n = h.counts.len();
    let counts = (0..n as i64)
        .map(|i| {
            (i - half..=i + half)
                .map(|j| h.counts[mirror(j, n)])
                .sum::<f64>()
                / window as f64
        })
        .collect();
    Ok(Histogram {
        bin_width: h.bin_width,
        origin: h.origin,
        counts,
    })
}

/// Per-bin slope in counts per bin: central differences inside, one-sided at
/// the two ends.
pub fn derivative(h: &Histogram) -> Result<Vec<f64>> {
    let c = &h.counts;
    let n = c.len();
    if n < 2 {
        return Err(HistogramError::TooShort {
            needed: 2,
            actual: n,
        });
    }
    Ok((0..n)
        .map(|i| match i {
            0 => c[1] - c[0],
            i if i == n - 1 => c[n - 1] - c[n - 2],
            i => (c[i + 1] - c[i - 1]) / 2.0,
        })
        .collect())
}

/// Contiguous region around one note's pitch distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MountainRange {
    pub lo: f64,
    pub hi: f64,
    /// Center of the highest bin within `[lo, hi]`.
    pub peak_bin: f64,
    pub area: f64,
}

impl MountainRange {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, cents: f64) -> bool {
        (self.lo..=self.hi).contains(&cents)
    }
}

/// Indices of local maxima, one per plateau (its middle bin).
fn local_maxima(c: &[f64], floor: f64) -> Vec<usize> {
    let n = c.len();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && c[j + 1] == c[i] {
            j += 1;
        }
        let left_lower = i == 0 || c[i - 1] < c[i];
        let right_lower = j == n - 1 || c[j + 1] < c[i];
        if left_lower && right_lower && c[i] > floor {
            out.push((i + j) / 2);
        }
        i = j + 1;
    }
    out
}

/// Lowest point strictly between two maxima; the middle of a flat bottom.
fn valley_between(c: &[f64], a: usize, b: usize) -> usize {
    let min = c[a + 1..b].iter().copied().fold(f64::INFINITY, f64::min);
    let first = (a + 1..b).find(|&i| c[i] == min).unwrap_or(a + 1);
    let last = (a + 1..b).rev().find(|&i| c[i] == min).unwrap_or(first);
    (first + last) / 2
}

fn argmax_in(c: &[f64], range: std::ops::RangeInclusive<usize>) -> usize {
    let mut best = *range.start();
    for i in range {
        if c[i] > c[best] {
            best = i;
        }
    }
    best
}

fn check_threshold(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(HistogramError::BadThreshold { name, value })
    }
}

/// Splits a smoothed histogram into mountains.
///
/// Every local maximum starts a mountain; neighbours are separated at the
/// lowest bin between them, where the slope turns from falling to rising.
/// Maxima whose prominence is below `min_prominence * max` merge into the
/// neighbour across their higher valley. Each mountain is then trimmed to
/// the histogram floor (empty bins) and dropped if its mass is below
/// `min_mass * total`. Returned ranges are disjoint and sorted.
pub fn find_mountain_ranges(
    smoothed: &Histogram,
    min_prominence: f64,
    min_mass: f64,
) -> Result<Vec<MountainRange>> {
    check_threshold("min_prominence", min_prominence)?;
    check_threshold("min_mass", min_mass)?;
    let c = &smoothed.counts;
    let max = smoothed.max_count();
    if c.len() < 2 || max <= 0.0 {
        return Ok(Vec::new());
    }
    let floor = max * 1e-12;
    let mut peaks = local_maxima(c, floor);
    let mut valleys: Vec<usize> = peaks
        .windows(2)
        .map(|w| valley_between(c, w[0], w[1]))
        .collect();

    let threshold = min_prominence * max;
    let left_edge_min = |p: usize| c[..=p].iter().copied().fold(f64::INFINITY, f64::min);
    let right_edge_min = |p: usize| c[p..].iter().copied().fold(f64::INFINITY, f64::min);
    loop {
        if peaks.len() < 2 {
            break;
        }
        let mut weakest: Option<(usize, f64)> = None;
        for k in 0..peaks.len() {
            let left = if k == 0 {
                left_edge_min(peaks[0])
            } else {
                c[valleys[k - 1]]
            };
            let right = if k + 1 == peaks.len() {
                right_edge_min(peaks[k])
            } else {
                c[valleys[k]]
            };
            let prominence = c[peaks[k]] - left.max(right);
            if weakest.is_none_or(|(_, p)| prominence < p) {
                weakest = Some((k, prominence));
            }
        }
        let (k, prominence) = weakest.expect("at least two peaks");
        if prominence >= threshold {
            break;
        }
        // Merge across the higher of the two adjacent valleys.
        let merge_left = match (k.checked_sub(1), valleys.get(k)) {
            (Some(l), Some(&r)) => c[valleys[l]] >= c[r],
            (Some(_), None) => true,
            _ => false,
        };
        let (neighbour, valley) = if merge_left { (k - 1, k - 1) } else { (k + 1, k) };
        let keep = if c[peaks[neighbour]] >= c[peaks[k]] {
            peaks[neighbour]
        } else {
            peaks[k]
        };
        let lo_idx = k.min(neighbour);
        peaks[lo_idx] = keep;
        peaks.remove(lo_idx + 1);
        valleys.remove(valley);
    }

    let n = c.len();
    let total = smoothed.total();
    let mut ranges = Vec::with_capacity(peaks.len());
    for (k, &p) in peaks.iter().enumerate() {
        // Valleys belong to the mountain on their left.
        let mut lo = if k == 0 { 0 } else { valleys[k - 1] + 1 };
        let mut hi = if k + 1 == peaks.len() { n - 1 } else { valleys[k] };
        if let Some(z) = (lo..p).rev().find(|&i| c[i] <= floor) {
            lo = z;
        }
        if let Some(z) = (p + 1..=hi).find(|&i| c[i] <= floor) {
            hi = z;
        }
        let area: f64 = c[lo..=hi].iter().sum();
        if area < min_mass * total || area <= 0.0 {
            continue;
        }
        let top = argmax_in(c, lo..=hi);
        ranges.push(MountainRange {
            lo: smoothed.center(lo),
            hi: smoothed.center(hi),
            peak_bin: smoothed.center(top),
            area,
        });
    }
    Ok(ranges)
}

/// Sum of counts of the bins whose centers lie in `[r.lo, r.hi]`.
pub fn mountain_area(h: &Histogram, r: &MountainRange) -> Result<f64> {
    let bins = h.bins_within(r.lo, r.hi);
    if bins.is_empty() {
        return Err(HistogramError::RangeOutOfSpan { lo: r.lo, hi: r.hi });
    }
    Ok(h.counts[bins].iter().sum())
}

/// Index of the mountain with the largest area under `h`. Ranges are scanned
/// in ascending order of `lo`, so ties go to the lower mountain.
pub fn find_shahed(h: &Histogram, ranges: &[MountainRange]) -> Result<usize> {
    if ranges.is_empty() {
        return Err(HistogramError::NoRanges);
    }
    let mut order: Vec<usize> = (0..ranges.len()).collect();
    order.sort_by(|&a, &b| ranges[a].lo.total_cmp(&ranges[b].lo));
    let mut best: Option<(usize, f64)> = None;
    for i in order {
        let area = mountain_area(h, &ranges[i])?;
        if best.is_none_or(|(_, a)| area > a) {
            best = Some((i, area));
        }
    }
    Ok(best.expect("non-empty").0)
}
