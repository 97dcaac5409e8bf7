//! Cents arithmetic, quartertone note naming and the built-in historical
//! reference scales.
//!
//! Absolute cents are MIDI-anchored: semitone `n` sits at `100 * n` cents, so
//! A4 = 440 Hz = 6900 cents. Tonic-relative values are obtained downstream by
//! subtracting a reference pitch.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Reference frequency for absolute cents.
pub const A4_HZ: f64 = 440.0;
/// Absolute cents of [`A4_HZ`].
pub const A4_CENTS: f64 = 6900.0;
/// Cents per octave.
pub const OCTAVE: f64 = 1200.0;
/// Pythagorean fifth used by the medieval circle-of-fifths construction.
pub const PYTHAGOREAN_FIFTH: f64 = 702.0;

const DEDUP_TOLERANCE: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PitchError {
    #[error("{what} must be positive and finite, got {value}")]
    NonPositive { what: &'static str, value: f64 },
    #[error("fifth must lie in (0, 1200) cents, got {0}")]
    BadFifth(f64),
    #[error("doubled MIDI number {0} is outside [0, 254]")]
    NoteOutOfRange(i64),
    #[error("unknown reference scale '{0}'")]
    UnknownScale(String),
    #[error("scale '{0}' has no shur view")]
    NoShurView(String),
    #[error("scale '{name}' is malformed: {reason}")]
    MalformedScale { name: String, reason: String },
}

fn check_positive(what: &'static str, value: f64) -> Result<f64, PitchError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(PitchError::NonPositive { what, value })
    }
}

/// Size of the ratio `numerator / denominator` in cents.
pub fn ratio_to_cents(numerator: f64, denominator: f64) -> Result<f64, PitchError> {
    let a = check_positive("numerator", numerator)?;
    let b = check_positive("denominator", denominator)?;
    Ok(OCTAVE * (a / b).log2())
}

/// Absolute cents of `frequency`, with `reference` Hz pinned to A4 (6900 cents).
pub fn hz_to_cents(frequency: f64, reference: f64) -> Result<f64, PitchError> {
    let f = check_positive("frequency", frequency)?;
    let r = check_positive("reference frequency", reference)?;
    Ok(A4_CENTS + OCTAVE * (f / r).log2())
}

/// Inverse of [`hz_to_cents`].
pub fn cents_to_hz(cents: f64, reference: f64) -> f64 {
    reference * ((cents - A4_CENTS) / OCTAVE).exp2()
}

/// Pitch classes generated by stacking `fifth` up `ascending_steps` times and
/// down `descending_steps` times from the tonic, folded into `[0, 1200)`,
/// sorted, and deduplicated within half a cent (including across the octave
/// wrap).
pub fn circle_of_fifths_scale(
    ascending_steps: u32,
    descending_steps: u32,
    fifth: f64,
) -> Result<Vec<f64>, PitchError> {
    if !(fifth > 0.0 && fifth < OCTAVE) {
        return Err(PitchError::BadFifth(fifth));
    }
    let mut pitches: Vec<f64> = (-(descending_steps as i64)..=ascending_steps as i64)
        .map(|k| (k as f64 * fifth).rem_euclid(OCTAVE))
        .map(|p| if p >= OCTAVE { 0.0 } else { p })
        .collect();
    pitches.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::with_capacity(pitches.len());
    for p in pitches {
        match out.last() {
            Some(&last) if p - last <= DEDUP_TOLERANCE => {}
            _ => out.push(p),
        }
    }
    if out.len() > 1 {
        let wrap = out[0] + OCTAVE - out[out.len() - 1];
        if wrap <= DEDUP_TOLERANCE {
            out.pop();
        }
    }
    Ok(out)
}

const PITCH_CLASSES: [&str; 12] = [
    "C", "C#", "D", "Eb", "E", "F", "F#", "G", "Ab", "A", "Bb", "B",
];

/// A pitch at quartertone resolution: MIDI number times two, so one step is
/// 50 cents. Odd values are koron (half-flat) notes named after the semitone
/// above them, e.g. doubled 127 is `Ek4`.
///
/// Equality, ordering, and hashing use only `doubled_midi`; the name is a
/// display label.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuartertoneNote {
    doubled_midi: u8,
    name: String,
}

impl QuartertoneNote {
    pub const MAX: u8 = 254;

    pub fn new(doubled_midi: i64) -> Result<Self, PitchError> {
        if !(0..=Self::MAX as i64).contains(&doubled_midi) {
            return Err(PitchError::NoteOutOfRange(doubled_midi));
        }
        let doubled_midi = doubled_midi as u8;
        Ok(Self {
            doubled_midi,
            name: default_name(doubled_midi),
        })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn doubled_midi(&self) -> u8 {
        self.doubled_midi
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Nominal absolute cents (`50 * doubled_midi`).
    pub fn nominal_cents(&self) -> f64 {
        50.0 * self.doubled_midi as f64
    }

    /// Pitch-class part of the default name, e.g. `Ek` for `Ek4`.
    pub fn pitch_class_name(&self) -> String {
        let (semitone, koron) = semitone_of(self.doubled_midi);
        let mut s = PITCH_CLASSES[(semitone % 12) as usize].to_string();
        if koron {
            s.push('k');
        }
        s
    }

    /// Degree label relative to `tonic`: the pitch-class name followed by one
    /// `'` per full octave above the tonic (`C`, `D`, ..., `C'`).
    pub fn degree_label(&self, tonic: &QuartertoneNote) -> String {
        let diff = self.doubled_midi as i32 - tonic.doubled_midi as i32;
        let octaves = diff.div_euclid(24);
        let mut s = self.pitch_class_name();
        for _ in 0..octaves.max(0) {
            s.push('\'');
        }
        s
    }
}

fn semitone_of(doubled_midi: u8) -> (u32, bool) {
    let d = doubled_midi as u32;
    if d.is_multiple_of(2) {
        (d / 2, false)
    } else {
        (d.div_ceil(2), true)
    }
}

fn default_name(doubled_midi: u8) -> String {
    let (semitone, koron) = semitone_of(doubled_midi);
    let octave = semitone as i32 / 12 - 1;
    let mut s = PITCH_CLASSES[(semitone % 12) as usize].to_string();
    if koron {
        s.push('k');
    }
    format!("{s}{octave}")
}

impl PartialEq for QuartertoneNote {
    fn eq(&self, other: &Self) -> bool {
        self.doubled_midi == other.doubled_midi
    }
}

impl Eq for QuartertoneNote {}

impl std::hash::Hash for QuartertoneNote {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.doubled_midi.hash(state);
    }
}

impl PartialOrd for QuartertoneNote {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for QuartertoneNote {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.doubled_midi.cmp(&other.doubled_midi)
    }
}

impl fmt::Display for QuartertoneNote {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// Built-in reference scales.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScaleName {
    Farhat,
    Talai,
    Maraghi,
    Vaziri,
    FarabiI,
    FarabiII,
    FarabiIII,
}

impl ScaleName {
    pub const ALL: [ScaleName; 7] = [
        ScaleName::Farhat,
        ScaleName::Talai,
        ScaleName::Maraghi,
        ScaleName::Vaziri,
        ScaleName::FarabiI,
        ScaleName::FarabiII,
        ScaleName::FarabiIII,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScaleName::Farhat => "Farhat",
            ScaleName::Talai => "Talāi",
            ScaleName::Maraghi => "Marāghi",
            ScaleName::Vaziri => "Vaziri",
            ScaleName::FarabiI => "Fārābi-I",
            ScaleName::FarabiII => "Fārābi-II",
            ScaleName::FarabiIII => "Fārābi-III",
        }
    }

    /// ASCII identifier used in file names and on the command line.
    pub fn slug(self) -> &'static str {
        match self {
            ScaleName::Farhat => "farhat",
            ScaleName::Talai => "talai",
            ScaleName::Maraghi => "maraghi",
            ScaleName::Vaziri => "vaziri",
            ScaleName::FarabiI => "farabi-1",
            ScaleName::FarabiII => "farabi-2",
            ScaleName::FarabiIII => "farabi-3",
        }
    }
}

impl fmt::Display for ScaleName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn fold_ascii(s: &str) -> String {
    s.chars()
        .map(|c| match c {
            'ā' | 'Ā' => 'a',
            c => c.to_ascii_lowercase(),
        })
        .filter(|c| !c.is_whitespace() && *c != '_')
        .collect()
}

impl FromStr for ScaleName {
    type Err = PitchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let folded = fold_ascii(s);
        let name = match folded.as_str() {
            "farhat" => ScaleName::Farhat,
            "talai" => ScaleName::Talai,
            "maraghi" => ScaleName::Maraghi,
            "vaziri" => ScaleName::Vaziri,
            "farabi-i" | "farabi-1" | "farabii" | "farabi1" => ScaleName::FarabiI,
            "farabi-ii" | "farabi-2" | "farabiii" | "farabi2" => ScaleName::FarabiII,
            "farabi-iii" | "farabi-3" | "farabiiii" | "farabi3" => ScaleName::FarabiIII,
            _ => return Err(PitchError::UnknownScale(s.to_string())),
        };
        Ok(name)
    }
}

/// One labelled degree of a reference scale, in cents above the tonic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Degree {
    pub label: String,
    pub cents: f64,
}

/// An ordered octave division: first degree 0, last degree 1200, strictly
/// increasing in between.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceScale {
    pub name: String,
    pub degrees: Vec<Degree>,
}

impl ReferenceScale {
    /// Builds and validates a scale.
    pub fn new(name: impl Into<String>, degrees: Vec<Degree>) -> Result<Self, PitchError> {
        let scale = Self {
            name: name.into(),
            degrees,
        };
        scale.validate()?;
        Ok(scale)
    }

    pub fn validate(&self) -> Result<(), PitchError> {
        let bad = |reason: &str| PitchError::MalformedScale {
            name: self.name.clone(),
            reason: reason.to_string(),
        };
        let (first, last) = match (self.degrees.first(), self.degrees.last()) {
            (Some(f), Some(l)) if self.degrees.len() >= 2 => (f, l),
            _ => return Err(bad("needs at least two degrees")),
        };
        if first.cents != 0.0 {
            return Err(bad("first degree must be 0 cents"));
        }
        if last.cents != OCTAVE {
            return Err(bad("last degree must be 1200 cents"));
        }
        if self.degrees.windows(2).any(|w| w[1].cents <= w[0].cents) {
            return Err(bad("degrees must be strictly increasing"));
        }
        Ok(())
    }

    pub fn cents(&self) -> Vec<f64> {
        self.degrees.iter().map(|d| d.cents).collect()
    }

    pub fn get(&self, label: &str) -> Option<f64> {
        self.degrees.iter().find(|d| d.label == label).map(|d| d.cents)
    }
}

// Octave division of the tār/setār measurements and the medieval
// circle-of-fifths scale, one column per source. `None` marks a cell printed
// as "-". The row whose note name is printed as "-" keeps that label.
const OCTAVE_TABLE: [(&str, Option<f64>, Option<f64>, Option<f64>); 18] = [
    ("Sol", Some(0.0), Some(0.0), Some(0.0)),
    ("La b", Some(90.0), None, Some(90.0)),
    ("La k", Some(135.0), Some(140.0), Some(180.0)),
    ("La", Some(205.0), Some(200.0), Some(204.0)),
    ("Si b", Some(295.0), Some(280.0), Some(294.0)),
    ("Si k", Some(340.0), Some(350.0), Some(384.0)),
    ("Si", Some(410.0), Some(380.0), Some(408.0)),
    ("Do", Some(500.0), Some(500.0), Some(498.0)),
    ("Re b", Some(565.0), Some(580.0), Some(588.0)),
    ("Re k", Some(630.0), Some(640.0), Some(678.0)),
    ("Re", Some(700.0), Some(700.0), Some(702.0)),
    ("Mi b", Some(790.0), None, Some(792.0)),
    ("Mi k", Some(835.0), Some(840.0), Some(882.0)),
    ("Mi", Some(905.0), Some(900.0), Some(906.0)),
    ("Fa", Some(995.0), Some(980.0), Some(996.0)),
    ("-", Some(1040.0), Some(1050.0), Some(1086.0)),
    ("Fa#", Some(1110.0), None, Some(1176.0)),
    ("Sol'", Some(1200.0), Some(1200.0), Some(1200.0)),
];

const VAZIRI_SHUR: [(&str, f64); 8] = [
    ("C", 0.0),
    ("D", 200.0),
    ("Ek", 350.0),
    ("F", 500.0),
    ("G", 700.0),
    ("Ak", 850.0),
    ("Bb", 1000.0),
    ("C'", 1200.0),
];

const FARABI: [[f64; 7]; 3] = [
    [204.0, 408.0, 498.0, 702.0, 906.0, 996.0, 1200.0],
    [204.0, 355.0, 498.0, 702.0, 853.0, 996.0, 1200.0],
    [204.0, 303.0, 498.0, 702.0, 801.0, 996.0, 1200.0],
];

/// Shur on Sol, relabelled onto C: which octave-table rows form the mode and
/// the letter names they take.
const SHUR_ON_SOL: [(&str, &str); 8] = [
    ("Sol", "C"),
    ("La", "D"),
    ("Si k", "Ek"),
    ("Do", "F"),
    ("Re", "G"),
    ("Mi k", "Ak"),
    ("Fa", "Bb"),
    ("Sol'", "C'"),
];

fn octave_table_column(column: usize) -> Vec<Degree> {
    OCTAVE_TABLE
        .iter()
        .filter_map(|row| {
            let value = match column {
                0 => row.1,
                1 => row.2,
                _ => row.3,
            };
            value.map(|cents| Degree {
                label: row.0.to_string(),
                cents,
            })
        })
        .collect()
}

/// Returns one of the built-in scales exactly as tabulated.
///
/// Farhat, Talāi and Marāghi carry the full octave division on Sol; Vaziri is
/// the shur scale on C; the three Fārābi types are labelled by degree number
/// (`1` = tonic, `8` = octave).
pub fn reference_scale(name: ScaleName) -> ReferenceScale {
    let degrees = match name {
        ScaleName::Farhat => octave_table_column(0),
        ScaleName::Talai => octave_table_column(1),
        ScaleName::Maraghi => octave_table_column(2),
        ScaleName::Vaziri => VAZIRI_SHUR
            .iter()
            .map(|&(l, c)| Degree {
                label: l.to_string(),
                cents: c,
            })
            .collect(),
        ScaleName::FarabiI | ScaleName::FarabiII | ScaleName::FarabiIII => {
            let idx = match name {
                ScaleName::FarabiI => 0,
                ScaleName::FarabiII => 1,
                _ => 2,
            };
            std::iter::once(0.0)
                .chain(FARABI[idx].iter().copied())
                .enumerate()
                .map(|(i, cents)| Degree {
                    label: (i + 1).to_string(),
                    cents,
                })
                .collect()
        }
    };
    let scale = ReferenceScale {
        name: name.as_str().to_string(),
        degrees,
    };
    debug_assert!(scale.validate().is_ok());
    scale
}

/// The shur mode of a scale, labelled `C D Ek F G Ak Bb C'`.
///
/// For the Sol-based octave tables this selects the shur degrees and
/// relabels them; Vaziri is already a shur scale. Fārābi's scale types have
/// no koron degrees and yield [`PitchError::NoShurView`].
pub fn shur_scale(name: ScaleName) -> Result<ReferenceScale, PitchError> {
    match name {
        ScaleName::Vaziri => Ok(reference_scale(name)),
        ScaleName::Farhat | ScaleName::Talai | ScaleName::Maraghi => {
            let full = reference_scale(name);
            let degrees = SHUR_ON_SOL
                .iter()
                .map(|&(from, to)| {
                    full.get(from)
                        .map(|cents| Degree {
                            label: to.to_string(),
                            cents,
                        })
                        .ok_or_else(|| PitchError::NoShurView(name.to_string()))
                })
                .collect::<Result<Vec<_>, _>>()?;
            ReferenceScale::new(format!("{} (shur)", name.as_str()), degrees)
        }
        _ => Err(PitchError::NoShurView(name.to_string())),
    }
}

/// Resolves a command-line scale identifier: a scale name, optionally with a
/// `-shur` suffix selecting [`shur_scale`].
pub fn scale_by_id(id: &str) -> Result<ReferenceScale, PitchError> {
    let folded = fold_ascii(id);
    match folded.strip_suffix("-shur") {
        Some(base) => shur_scale(base.parse()?),
        None => Ok(reference_scale(folded.parse()?)),
    }
}
