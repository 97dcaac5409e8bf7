//! Peak models for histogram mountains.
//!
//! The primary model is a Gaussian on a sloped baseline,
//!
//! ```text
//! y = c1 + c2 * x + c3 * exp(-(x - c4)^2 / c5)
//! ```
//!
//! fitted by damped (Levenberg-Marquardt) least squares. When that fails the
//! mountain is modelled by a least-squares parabola, and failing that by its
//! highest bin. Each fitted mountain is also sorted into one of four shape
//! types; see [`classify_peak`].

use nalgebra::{Matrix3, Matrix5, Vector3, Vector5};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::histogram::{Histogram, MountainRange};
use crate::pitch::QuartertoneNote;

/// Step of the grid on which fitted curves are maximised.
pub const PEAK_GRID_STEP: f64 = 0.01;

const MAX_ITERATIONS: usize = 200;
const RELATIVE_COST_TOLERANCE: f64 = 1e-10;
const MIN_GAUSSIAN_POINTS: usize = 6;
const MIN_GAUSSIAN_SPAN: f64 = 10.0;
const MAX_DAMPING: f64 = 1e16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("need at least {needed} points, got {actual}")]
    TooFewPoints { needed: usize, actual: usize },
    #[error("points span {span} cents, need at least {needed}")]
    NarrowSpan { span: f64, needed: f64 },
    #[error("no convergence after {0} iterations")]
    NoConvergence(usize),
    #[error("fit left the valid region: {0}")]
    Degenerate(&'static str),
    #[error("parabola opens upward (leading coefficient {0})")]
    NotConcave(f64),
}

/// Parameters of the tilted Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TiltedGaussianParams {
    /// Baseline, counts.
    pub c1: f64,
    /// Baseline slope, counts per cent.
    pub c2: f64,
    /// Amplitude, counts.
    pub c3: f64,
    /// Gaussian center, cents.
    pub c4: f64,
    /// Width, cents squared.
    pub c5: f64,
}

impl TiltedGaussianParams {
    pub fn eval(&self, x: f64) -> f64 {
        self.c1 + self.c2 * x + self.c3 * (-(x - self.c4).powi(2) / self.c5).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit {
    pub params: TiltedGaussianParams,
    pub rms_residual: f64,
    pub iterations: usize,
}

/// `y = a * x^2 + b * x + c` in absolute cents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl QuadraticParams {
    pub fn eval(&self, x: f64) -> f64 {
        (self.a * x + self.b) * x + self.c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticFit {
    pub params: QuadraticParams,
    /// Vertex `-b / 2a`, clamped to the data span.
    pub peak: f64,
    pub rms_residual: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Also try five perturbed starting points and keep the lowest cost.
    pub multi_start: bool,
}

fn span_of(points: &[(f64, f64)]) -> (f64, f64) {
    points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(x, _)| {
        (lo.min(x), hi.max(x))
    })
}

/// Centered-coordinate LM state: `y = a + b*u + amp*exp(-(u-m)^2/w)` with
/// `u = x - shift`.
#[derive(Clone, Copy)]
struct Centered {
    p: Vector5<f64>,
}

impl Centered {
    fn eval(&self, u: f64) -> f64 {
        let [a, b, amp, m, w] = [self.p[0], self.p[1], self.p[2], self.p[3], self.p[4]];
        a + b * u + amp * (-(u - m).powi(2) / w).exp()
    }

    fn valid(&self) -> bool {
        self.p.iter().all(|v| v.is_finite()) && self.p[2] > 0.0 && self.p[4] > 0.0
    }
}

fn cost(model: &Centered, pts: &[(f64, f64)]) -> f64 {
    pts.iter().map(|&(u, y)| (y - model.eval(u)).powi(2)).sum()
}

fn levenberg_marquardt(
    start: Centered,
    pts: &[(f64, f64)],
) -> Result<(Centered, f64, usize), FitError> {
    let mut model = start;
    let mut current = cost(&model, pts);
    let mut lambda = 1e-3;
    for iteration in 1..=MAX_ITERATIONS {
        if current == 0.0 {
            return Ok((model, current, iteration));
        }
        let mut jtj = Matrix5::<f64>::zeros();
        let mut jtr = Vector5::<f64>::zeros();
        let [_, _, amp, m, w] = [model.p[0], model.p[1], model.p[2], model.p[3], model.p[4]];
        for &(u, y) in pts {
            let d = u - m;
            let e = (-(d * d) / w).exp();
            let j = Vector5::new(1.0, u, e, amp * e * 2.0 * d / w, amp * e * d * d / (w * w));
            let r = y - model.eval(u);
            jtj += j * j.transpose();
            jtr += j * r;
        }
        let mut damped = jtj;
        for k in 0..5 {
            damped[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
        }
        let step = damped.lu().solve(&jtr);
        let candidate = step.map(|s| Centered { p: model.p + s });
        match candidate {
            Some(c) if c.valid() => {
                let next = cost(&c, pts);
                if next < current {
                    let relative = (current - next) / current;
                    model = c;
                    current = next;
                    lambda = (lambda / 10.0).max(1e-12);
                    if relative < RELATIVE_COST_TOLERANCE {
                        return Ok((model, current, iteration));
                    }
                    continue;
                }
            }
            _ => {}
        }
        lambda *= 10.0;
        if lambda > MAX_DAMPING {
            // No descent direction left at machine precision.
            return Ok((model, current, iteration));
        }
    }
    Err(FitError::NoConvergence(MAX_ITERATIONS))
}

/// Fits the tilted Gaussian to `(cents, count)` points.
///
/// Starts from baseline = min count, zero slope, amplitude = max - min,
/// center = highest point, width = (span / 2)^2.
pub fn fit_tilted_gaussian(points: &[(f64, f64)], options: FitOptions) -> Result<GaussianFit, FitError> {
    if points.len() < MIN_GAUSSIAN_POINTS {
        return Err(FitError::TooFewPoints {
            needed: MIN_GAUSSIAN_POINTS,
            actual: points.len(),
        });
    }
    let (lo, hi) = span_of(points);
    if hi - lo < MIN_GAUSSIAN_SPAN {
        return Err(FitError::NarrowSpan {
            span: hi - lo,
            needed: MIN_GAUSSIAN_SPAN,
        });
    }
    let shift = points.iter().map(|p| p.0).sum::<f64>() / points.len() as f64;
    let pts: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x - shift, y)).collect();

    let min = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let (top_u, max) = pts
        .iter()
        .copied()
        .fold((pts[0].0, f64::NEG_INFINITY), |best, p| if p.1 > best.1 { p } else { best });
    if max <= min {
        return Err(FitError::Degenerate("flat data"));
    }
    let width = ((hi - lo) / 2.0).powi(2);
    let base = Centered {
        p: Vector5::new(min, 0.0, max - min, top_u, width),
    };
    let mut starts = vec![base];
    if options.multi_start {
        let quarter = (hi - lo) / 4.0;
        for (dm, fw) in [(-quarter, 1.0), (quarter, 1.0), (0.0, 0.25), (0.0, 4.0), (0.0, 1.0 / 16.0)] {
            let mut s = base;
            s.p[3] += dm;
            s.p[4] *= fw;
            starts.push(s);
        }
    }

    let mut best: Option<(Centered, f64, usize)> = None;
    let mut last_err = None;
    for s in starts {
        match levenberg_marquardt(s, &pts) {
            Ok(fit) if best.is_none_or(|b| fit.1 < b.1) => best = Some(fit),
            Ok(_) => {}
            Err(e) => last_err = Some(e),
        }
    }
    let (model, cost, iterations) = match best {
        Some(b) => b,
        None => return Err(last_err.unwrap_or(FitError::NoConvergence(MAX_ITERATIONS))),
    };
    let [a, b, amp, m, w] = [model.p[0], model.p[1], model.p[2], model.p[3], model.p[4]];
    let params = TiltedGaussianParams {
        c1: a - b * shift,
        c2: b,
        c3: amp,
        c4: m + shift,
        c5: w,
    };
    if !(params.c3 > 0.0) {
        return Err(FitError::Degenerate("amplitude not positive"));
    }
    if !(params.c5 > 0.0) {
        return Err(FitError::Degenerate("width not positive"));
    }
    if !(lo..=hi).contains(&params.c4) {
        return Err(FitError::Degenerate("center outside the mountain"));
    }
    Ok(GaussianFit {
        params,
        rms_residual: (cost / pts.len() as f64).sqrt(),
        iterations,
    })
}

/// Ordinary least-squares parabola through `(cents, count)` points.
pub fn fit_quadratic(points: &[(f64, f64)]) -> Result<QuadraticFit, FitError> {
    if points.len() < 3 {
        return Err(FitError::TooFewPoints {
            needed: 3,
            actual: points.len(),
        });
    }
    let (lo, hi) = span_of(points);
    let shift = (lo + hi) / 2.0;
    let scale = ((hi - lo) / 2.0).max(f64::MIN_POSITIVE);
    let mut ata = Matrix3::<f64>::zeros();
    let mut aty = Vector3::<f64>::zeros();
    for &(x, y) in points {
        let t = (x - shift) / scale;
        let row = Vector3::new(t * t, t, 1.0);
        ata += row * row.transpose();
        aty += row * y;
    }
    let coef = ata
        .lu()
        .solve(&aty)
        .ok_or(FitError::Degenerate("fewer than three distinct positions"))?;
    let (qa, qb, qc) = (coef[0], coef[1], coef[2]);
    if !qa.is_finite() || qa >= 0.0 {
        return Err(FitError::NotConcave(qa));
    }
    // Back to absolute cents: t = (x - shift) / scale.
    let a = qa / (scale * scale);
    let b = qb / scale - 2.0 * qa * shift / (scale * scale);
    let c = qa * shift * shift / (scale * scale) - qb * shift / scale + qc;
    let vertex = shift - qb * scale / (2.0 * qa);
    let rms = (points
        .iter()
        .map(|&(x, y)| {
            let t = (x - shift) / scale;
            (y - (qa * t * t + qb * t + qc)).powi(2)
        })
        .sum::<f64>()
        / points.len() as f64)
        .sqrt();
    Ok(QuadraticFit {
        params: QuadraticParams { a, b, c },
        peak: vertex.clamp(lo, hi),
        rms_residual: rms,
    })
}

/// Argmax of `f` over `[lo, hi]` on a [`PEAK_GRID_STEP`] grid; the first grid
/// point wins ties.
pub fn grid_argmax(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let steps = ((hi - lo) / PEAK_GRID_STEP).round().max(0.0) as usize;
    let mut best = (lo, f(lo));
    for k in 1..=steps {
        let x = (lo + k as f64 * PEAK_GRID_STEP).min(hi);
        let y = f(x);
        if y > best.1 {
            best = (x, y);
        }
    }
    best.0
}

/// Shape type of a mountain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Typology {
    /// Clean single peak, well fitted by a Gaussian.
    I,
    /// Single maximum hiding a second, minor note within about 50 cents.
    II,
    /// Two distinct peaks.
    III,
    /// Flat top over 30 cents or more.
    IV,
}

/// Thresholds of [`classify_peak`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifyConfig {
    /// Minimum prominence of each maximum for type III, fraction of range max.
    pub peak_prominence: f64,
    /// Level defining the flat top for type IV, fraction of the peak height.
    pub plateau_level: f64,
    /// Bins at or above this fraction of the range max feed the parabola
    /// that measures the flat top.
    pub plateau_fit_level: f64,
    /// Minimum flat-top width for type IV, cents.
    pub plateau_span: f64,
    /// Maximum distance between two notes sharing a type II mountain, cents.
    pub close_notes: f64,
    /// Minimum share of the minor note in a type II mountain.
    pub minor_mass: f64,
    /// Maximum rms residual for a confident type I, fraction of amplitude.
    pub residual: f64,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            peak_prominence: 0.10,
            plateau_level: 0.95,
            plateau_fit_level: 0.80,
            plateau_span: 30.0,
            close_notes: 50.0,
            minor_mass: 0.05,
            residual: 0.10,
        }
    }
}

/// The fitted curve behind a [`PeakModel`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", content = "params", rename_all = "kebab-case")]
pub enum FittedCurve {
    TiltedGaussian(TiltedGaussianParams),
    Quadratic(QuadraticParams),
    RawArgmax,
}

/// Both readings of a two-peaked (type III) mountain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwinPeaks {
    /// Center of the taller maximum.
    pub higher: f64,
    /// Center of the other maximum.
    pub lower: f64,
    /// Maximum of the fitted curve, usually between the two.
    pub fitted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakModel {
    pub range: MountainRange,
    #[serde(flatten)]
    pub curve: FittedCurve,
    /// Argmax of the fitted curve over the range.
    pub peak_cents: f64,
    pub rms_residual: f64,
    /// Height of the modelled peak above its baseline, counts.
    pub amplitude: f64,
    pub typology: Typology,
    pub low_confidence: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub twin_peaks: Option<TwinPeaks>,
}

/// Models one mountain of `h`: tilted Gaussian, else parabola, else highest
/// bin. The peak always lies in `[r.lo, r.hi]`. The typology is classified
/// without alignment data; re-run [`classify_peak`] once notes are known.
pub fn refine_peak(
    h: &Histogram,
    r: &MountainRange,
    options: FitOptions,
    classify: &ClassifyConfig,
) -> PeakModel {
    let points = h.points_within(r.lo, r.hi);
    let (lo, hi) = (r.lo, r.hi);
    let max = points.iter().map(|p| p.1).fold(0.0, f64::max);
    let min = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);

    let (curve, peak, rms, amplitude) = match fit_tilted_gaussian(&points, options) {
        Ok(fit) => {
            let p = fit.params;
            let peak = grid_argmax(|x| p.eval(x), lo, hi);
            (FittedCurve::TiltedGaussian(p), peak, fit.rms_residual, p.c3)
        }
        Err(_) => match fit_quadratic(&points) {
            Ok(q) => {
                let peak = q.peak.clamp(lo, hi);
                let floor = points
                    .iter()
                    .map(|&(x, _)| q.params.eval(x))
                    .fold(f64::INFINITY, f64::min);
                (
                    FittedCurve::Quadratic(q.params),
                    peak,
                    q.rms_residual,
                    q.params.eval(peak) - floor,
                )
            }
            Err(_) => {
                let peak = r.peak_bin.clamp(lo, hi);
                let amplitude = if min.is_finite() { max - min } else { 0.0 };
                (FittedCurve::RawArgmax, peak, 0.0, amplitude)
            }
        },
    };
    let mut model = PeakModel {
        range: r.clone(),
        curve,
        peak_cents: peak,
        rms_residual: rms,
        amplitude,
        typology: Typology::I,
        low_confidence: false,
        twin_peaks: None,
    };
    let (typology, low_confidence, twin) = classify_peak(h, r, &model, &[], classify);
    model.typology = typology;
    model.low_confidence = low_confidence;
    model.twin_peaks = twin;
    model
}

/// Local maxima of a slice with their prominence inside the slice.
fn interior_maxima(c: &[f64]) -> Vec<(usize, f64)> {
    let n = c.len();
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        let mut j = i;
        while j + 1 < n && c[j + 1] == c[i] {
            j += 1;
        }
        if j + 1 < n && c[i - 1] < c[i] && c[j + 1] < c[i] {
            let p = (i + j) / 2;
            let mut left_min = c[p];
            // An equal maximum to the left counts as higher, so twin maxima of
            // the same height do not both get full prominence.
            for k in (0..p).rev() {
                if c[k] >= c[p] {
                    break;
                }
                left_min = left_min.min(c[k]);
            }
            let mut right_min = c[p];
            for &v in &c[p + 1..] {
                if v > c[p] {
                    break;
                }
                right_min = right_min.min(v);
            }
            out.push((p, c[p] - left_min.max(right_min)));
        }
        i = j + 1;
    }
    out
}

/// The flat top of a mountain, as used by the type IV rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlatTop {
    /// Cents over which the top stays above `plateau_level` of its height.
    pub width: f64,
    /// Middle of the top, cents.
    pub center: f64,
}

/// Measures the top of mountain `r` of `h`. Counting noise makes the raw
/// bins useless for this, so the top (outermost bins at or above
/// `plateau_fit_level` of the max) is summarised by a least-squares
/// parabola first. A top that is not concave counts as flat over its whole
/// extent.
pub fn flat_top(h: &Histogram, r: &MountainRange, config: &ClassifyConfig) -> Option<FlatTop> {
    let bins = h.bins_within(r.lo, r.hi);
    let c = &h.counts[bins.clone()];
    let max = c.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return None;
    }
    let level = config.plateau_fit_level * max;
    let first = c.iter().position(|&v| v >= level)?;
    let last = c.iter().rposition(|&v| v >= level)?;
    let (lo, hi) = (h.center(bins.start + first), h.center(bins.start + last));
    let pts: Vec<(f64, f64)> = (first..=last).map(|i| (h.center(bins.start + i), c[i])).collect();
    let whole = FlatTop {
        width: hi - lo,
        center: (lo + hi) / 2.0,
    };
    match fit_quadratic(&pts) {
        Ok(q) => {
            let top = q.params.eval(q.peak);
            if top <= 0.0 {
                return None;
            }
            let half = ((1.0 - config.plateau_level) * top / -q.params.a).sqrt();
            Some(FlatTop {
                width: (2.0 * half).min(hi - lo),
                center: q.peak,
            })
        }
        Err(FitError::NotConcave(_)) => Some(whole),
        Err(_) => None,
    }
}

/// Sorts a mountain into types I-IV, in this order:
///
/// * III: two or more interior maxima, each with prominence of at least
///   `peak_prominence` times the range maximum.
/// * IV: the flat top measured by [`flat_top`] spans `plateau_span` cents
///   or more.
/// * II: the two heaviest aligned notes in the range are at most
///   `close_notes` apart and the lighter holds at least `minor_mass` of the
///   aligned mass.
/// * I: otherwise. Confident only when the rms residual is at most
///   `residual` times the peak amplitude and no other shape rule half-matched.
///
/// `aligned_notes` holds, per note, the number of aligned frames whose pitch
/// lies in the range. Returns the type, a low-confidence flag, and for type
/// III both candidate peaks.
pub fn classify_peak(
    h: &Histogram,
    r: &MountainRange,
    fit: &PeakModel,
    aligned_notes: &[(QuartertoneNote, f64)],
    config: &ClassifyConfig,
) -> (Typology, bool, Option<TwinPeaks>) {
    let bins = h.bins_within(r.lo, r.hi);
    let c = &h.counts[bins.clone()];
    if c.is_empty() {
        return (Typology::I, true, None);
    }
    let max = c.iter().copied().fold(0.0, f64::max);

    let mut strong: Vec<(usize, f64)> = interior_maxima(c)
        .into_iter()
        .filter(|&(_, prom)| prom >= config.peak_prominence * max)
        .collect();
    if strong.len() >= 2 {
        strong.sort_by(|a, b| c[b.0].total_cmp(&c[a.0]).then(a.0.cmp(&b.0)));
        let twin = TwinPeaks {
            higher: h.center(bins.start + strong[0].0),
            lower: h.center(bins.start + strong[1].0),
            fitted: fit.peak_cents,
        };
        return (Typology::III, false, Some(twin));
    }

    if flat_top(h, r, config).is_some_and(|f| f.width >= config.plateau_span) {
        return (Typology::IV, false, None);
    }

    let mut notes: Vec<&(QuartertoneNote, f64)> =
        aligned_notes.iter().filter(|(_, m)| *m > 0.0).collect();
    notes.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let aligned_mass: f64 = notes.iter().map(|n| n.1).sum();
    let mut mixed = false;
    if notes.len() >= 2 && aligned_mass > 0.0 {
        let (major, minor) = (notes[0], notes[1]);
        let share = minor.1 / aligned_mass;
        let distance = (major.0.nominal_cents() - minor.0.nominal_cents()).abs();
        if share >= config.minor_mass {
            if distance <= config.close_notes {
                return (Typology::II, false, None);
            }
            mixed = true;
        }
    }

    let clean = fit.amplitude > 0.0
        && fit.rms_residual <= config.residual * fit.amplitude
        && fit.curve != FittedCurve::RawArgmax;
    (Typology::I, mixed || !clean, None)
}
