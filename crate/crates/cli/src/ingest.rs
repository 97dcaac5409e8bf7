//! CSV readers for F0 traces, transcriptions, onsets and corpus manifests.

use std::path::{Path, PathBuf};

use radif_core::alignment::{TranscribedNote, Transcription};
use radif_core::histogram::PitchTrace;
use radif_core::pitch::QuartertoneNote;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Hop assumed for a single-frame trace: 256 samples at 44.1 kHz.
pub const DEFAULT_HOP: f64 = 256.0 / 44100.0;
/// Allowed relative deviation of any time step from the median step.
pub const HOP_TOLERANCE: f64 = 0.01;

pub const F0_SUFFIX: &str = ".f0.csv";
pub const TRANSCRIPTION_SUFFIX: &str = ".transcription.csv";
pub const ONSETS_SUFFIX: &str = ".onsets.csv";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PieceInput {
    pub id: String,
    pub f0_path: PathBuf,
    pub transcription_path: PathBuf,
    pub onsets_path: Option<PathBuf>,
}

/// Rows of a CSV file with the given header, each paired with its line
/// number (the header is line 1).
fn read_rows(path: &Path, header: &[&str]) -> Result<Vec<(usize, csv::StringRecord)>> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file);
    let found = reader
        .headers()
        .map_err(|e| CliError::row(path, 1, "header", e.to_string()))?
        .clone();
    for (i, want) in header.iter().enumerate() {
        if found.get(i) != Some(*want) {
            return Err(CliError::row(
                path,
                1,
                "header",
                format!("expected columns {}, found {}", header.join(","), found.iter().collect::<Vec<_>>().join(",")),
            ));
        }
    }
    let mut rows = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let line = k + 2;
        let record = record.map_err(|e| CliError::row(path, line, "record", e.to_string()))?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        rows.push((line, record));
    }
    if rows.is_empty() {
        return Err(CliError::EmptyFile {
            path: path.to_path_buf(),
        });
    }
    Ok(rows)
}

fn field<'a>(path: &Path, line: usize, record: &'a csv::StringRecord, idx: usize, name: &str) -> Result<&'a str> {
    record
        .get(idx)
        .ok_or_else(|| CliError::row(path, line, name, "missing value"))
}

fn number(path: &Path, line: usize, record: &csv::StringRecord, idx: usize, name: &str) -> Result<f64> {
    let raw = field(path, line, record, idx, name)?;
    raw.parse::<f64>()
        .map_err(|_| CliError::row(path, line, name, format!("not a number: '{raw}'")))
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Reads a `time_sec,f0_hz` trace. Frames with f0 at or below zero, or
/// outside the voicing band, stay in the trace as unvoiced. The hop is the
/// median time step and frame times are snapped to `start + i * hop`.
pub fn read_f0(path: &Path) -> Result<PitchTrace> {
    let rows = read_rows(path, &["time_sec", "f0_hz"])?;
    let mut frames = Vec::with_capacity(rows.len());
    for (line, record) in &rows {
        let t = number(path, *line, record, 0, "time_sec")?;
        let f0 = number(path, *line, record, 1, "f0_hz")?;
        if !t.is_finite() {
            return Err(CliError::row(path, *line, "time_sec", "not finite"));
        }
        if let Some(&(prev, _)) = frames.last() {
            if t <= prev {
                return Err(CliError::row(
                    path,
                    *line,
                    "time_sec",
                    format!("time {t} does not increase after {prev}"),
                ));
            }
        }
        frames.push((t, f0));
    }
    let hop = if frames.len() == 1 {
        DEFAULT_HOP
    } else {
        let mut steps: Vec<f64> = frames.windows(2).map(|w| w[1].0 - w[0].0).collect();
        let hop = median(&mut steps);
        for (k, w) in frames.windows(2).enumerate() {
            let step = w[1].0 - w[0].0;
            if (step - hop).abs() > HOP_TOLERANCE * hop {
                return Err(CliError::row(
                    path,
                    rows[k + 1].0,
                    "time_sec",
                    format!("time step {step} deviates from the hop {hop} by more than 1%"),
                ));
            }
        }
        hop
    };
    let start = frames[0].0;
    let regular: Vec<(f64, f64)> = frames
        .iter()
        .enumerate()
        .map(|(i, &(_, f0))| (start + i as f64 * hop, f0))
        .collect();
    PitchTrace::from_hz(&regular, hop).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Reads a `note_doubled_midi,duration_sec,label` transcription; the label
/// column may be empty or absent.
pub fn read_transcription(path: &Path) -> Result<Transcription> {
    let rows = read_rows(path, &["note_doubled_midi", "duration_sec"])?;
    let mut notes = Vec::with_capacity(rows.len());
    for (line, record) in &rows {
        let raw = field(path, *line, record, 0, "note_doubled_midi")?;
        let midi: i64 = raw
            .parse()
            .map_err(|_| CliError::row(path, *line, "note_doubled_midi", format!("not an integer: '{raw}'")))?;
        let note = QuartertoneNote::new(midi)
            .map_err(|e| CliError::row(path, *line, "note_doubled_midi", e.to_string()))?;
        let duration = number(path, *line, record, 1, "duration_sec")?;
        if !(duration.is_finite() && duration > 0.0) {
            return Err(CliError::row(path, *line, "duration_sec", "must be positive"));
        }
        let label = record.get(2).filter(|s| !s.is_empty()).map(str::to_string);
        notes.push(TranscribedNote { note, duration, label });
    }
    Transcription::new(notes).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Reads one `onset_sec` per note.
pub fn read_onsets(path: &Path) -> Result<Vec<f64>> {
    let rows = read_rows(path, &["onset_sec"])?;
    rows.iter()
        .map(|(line, record)| number(path, *line, record, 0, "onset_sec"))
        .collect()
}

/// Corpus pieces from either a manifest CSV
/// (`id,f0_path,transcription_path[,onsets_path]`, paths relative to the
/// manifest) or a directory of `<id>.f0.csv` / `<id>.transcription.csv`
/// pairs with optional `<id>.onsets.csv`. Sorted by id.
pub fn discover(path: &Path) -> Result<Vec<PieceInput>> {
    let meta = std::fs::metadata(path).map_err(|e| CliError::io(path, e))?;
    let mut pieces = if meta.is_dir() {
        scan_dir(path)?
    } else {
        read_manifest(path)?
    };
    pieces.sort_by(|a, b| a.id.cmp(&b.id));
    if let Some(w) = pieces.windows(2).find(|w| w[0].id == w[1].id) {
        return Err(CliError::Input(format!("{}: duplicate piece id '{}'", path.display(), w[0].id)));
    }
    Ok(pieces)
}

fn scan_dir(dir: &Path) -> Result<Vec<PieceInput>> {
    let mut pieces = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        let entry = entry.map_err(|e| CliError::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        let Some(id) = name.strip_suffix(F0_SUFFIX) else {
            continue;
        };
        let transcription_path = dir.join(format!("{id}{TRANSCRIPTION_SUFFIX}"));
        if !transcription_path.is_file() {
            return Err(CliError::Input(format!(
                "{}: no transcription for piece '{id}'",
                transcription_path.display()
            )));
        }
        let onsets = dir.join(format!("{id}{ONSETS_SUFFIX}"));
        pieces.push(PieceInput {
            id: id.to_string(),
            f0_path: entry.path(),
            transcription_path,
            onsets_path: onsets.is_file().then_some(onsets),
        });
    }
    if pieces.is_empty() {
        return Err(CliError::Input(format!("{}: no *{F0_SUFFIX} files", dir.display())));
    }
    Ok(pieces)
}

fn read_manifest(path: &Path) -> Result<Vec<PieceInput>> {
    let base = path.parent().unwrap_or(Path::new("."));
    let rows = read_rows(path, &["id", "f0_path", "transcription_path"])?;
    let mut pieces = Vec::new();
    for (line, record) in &rows {
        let id = field(path, *line, record, 0, "id")?;
        if id.is_empty() {
            return Err(CliError::row(path, *line, "id", "empty"));
        }
        let f0 = field(path, *line, record, 1, "f0_path")?;
        let tr = field(path, *line, record, 2, "transcription_path")?;
        let onsets = record.get(3).filter(|s| !s.is_empty());
        pieces.push(PieceInput {
            id: id.to_string(),
            f0_path: base.join(f0),
            transcription_path: base.join(tr),
            onsets_path: onsets.map(|o| base.join(o)),
        });
    }
    Ok(pieces)
}
