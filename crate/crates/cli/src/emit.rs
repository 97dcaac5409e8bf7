//! Output files and plot data.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use radif_core::alignment::OnsetEvaluation;
use radif_core::analysis::{IntervalReport, ScaleComparison, ScaleRow, VarianceGroup};
use radif_core::histogram::Histogram;
use radif_core::peakfit::PeakModel;
use radif_core::pitch::{QuartertoneNote, ReferenceScale};
use serde::Serialize;

use crate::error::{CliError, Result};
use crate::pipeline::{CorpusResult, NoteMeasurement, PieceBundle, Shahed, SkippedPiece};

/// Marker values of the `peak_marker` histogram column.
pub const MARK_NONE: u8 = 0;
pub const MARK_PEAK: u8 = 1;
pub const MARK_SHAHED: u8 = 2;

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

/// `bin_center_cents,raw_count,smoothed_count,peak_marker`. `marks` gives
/// the cents and marker value of each peak to flag.
pub fn histogram_csv(raw: &Histogram, smoothed: &Histogram, marks: &[(f64, u8)]) -> String {
    let mut marker = vec![MARK_NONE; raw.len()];
    for &(cents, m) in marks {
        if let Some(b) = raw.bin_of(cents) {
            marker[b] = marker[b].max(m);
        }
    }
    csv_string(
        &["bin_center_cents", "raw_count", "smoothed_count", "peak_marker"],
        (0..raw.len()).map(|i| {
            vec![
                raw.center(i).to_string(),
                raw.counts[i].to_string(),
                smoothed.counts[i].to_string(),
                marker[i].to_string(),
            ]
        }),
    )
}

fn piece_marks(b: &PieceBundle) -> Vec<(f64, u8)> {
    b.peaks
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let m = if i == b.shahed.range_index { MARK_SHAHED } else { MARK_PEAK };
            (p.peak_cents, m)
        })
        .collect()
}

/// `trace_frame,time_sec,note_index,note_label`; frames outside every note
/// span have empty note fields.
pub fn alignment_csv(b: &PieceBundle) -> String {
    let frames = b.trace.len();
    let assigned = b.alignment.frame_notes(frames);
    let notes = b.transcription.notes();
    csv_string(
        &["trace_frame", "time_sec", "note_index", "note_label"],
        (0..frames).map(|f| {
            let (idx, label) = match assigned[f] {
                Some(k) => (k.to_string(), notes[k].label().to_string()),
                None => (String::new(), String::new()),
            };
            vec![f.to_string(), b.trace.time(f).to_string(), idx, label]
        }),
    )
}

pub fn intervals_csv(b: &PieceBundle) -> String {
    csv_string(
        &["interval", "lower", "upper", "size_cents"],
        b.intervals.iter().map(|m| {
            vec![
                format!("{}-{}", m.lower.name(), m.upper.name()),
                m.lower.doubled_midi().to_string(),
                m.upper.doubled_midi().to_string(),
                m.size.to_string(),
            ]
        }),
    )
}

#[derive(Serialize)]
struct MountainJson<'a> {
    #[serde(flatten)]
    model: &'a PeakModel,
    note: Option<&'a QuartertoneNote>,
}

#[derive(Serialize)]
struct PeaksJson<'a> {
    piece: &'a str,
    offset_cents: f64,
    dtw_cost: f64,
    shahed: &'a Shahed,
    mountains: Vec<MountainJson<'a>>,
    notes: &'a [NoteMeasurement],
    #[serde(skip_serializing_if = "Option::is_none")]
    onset_evaluation: Option<&'a OnsetEvaluation>,
}

pub fn peaks_json(b: &PieceBundle) -> String {
    let doc = PeaksJson {
        piece: &b.id,
        offset_cents: b.offset,
        dtw_cost: b.dtw_cost,
        shahed: &b.shahed,
        mountains: b
            .peaks
            .iter()
            .zip(&b.range_notes)
            .map(|(model, note)| MountainJson {
                model,
                note: note.as_ref(),
            })
            .collect(),
        notes: &b.notes,
        onset_evaluation: b.onset_evaluation.as_ref(),
    };
    serde_json::to_string_pretty(&doc).expect("serializable") + "\n"
}

#[derive(Serialize)]
struct IntervalJson<'a> {
    interval: String,
    lower: &'a QuartertoneNote,
    upper: &'a QuartertoneNote,
    n: usize,
    mean_cents: f64,
    sd_cents: f64,
    group: VarianceGroup,
}

#[derive(Serialize)]
struct ComparisonJson<'a> {
    id: &'a str,
    #[serde(flatten)]
    comparison: &'a ScaleComparison,
}

#[derive(Serialize)]
struct ReportJson<'a> {
    pieces: Vec<&'a str>,
    skipped: &'a [SkippedPiece],
    intervals: Vec<IntervalJson<'a>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    scale: Option<&'a [ScaleRow]>,
    comparisons: Vec<ComparisonJson<'a>>,
}

pub fn report_json(r: &CorpusResult) -> String {
    let doc = ReportJson {
        pieces: r.pieces.iter().map(|p| p.id.as_str()).collect(),
        skipped: &r.skipped,
        intervals: r
            .report
            .intervals
            .iter()
            .map(|s| IntervalJson {
                interval: s.name(),
                lower: &s.lower,
                upper: &s.upper,
                n: s.n_samples,
                mean_cents: s.mean,
                sd_cents: s.sd,
                group: s.group,
            })
            .collect(),
        scale: r.scale.as_deref(),
        comparisons: r
            .comparisons
            .iter()
            .map(|(id, c)| ComparisonJson { id, comparison: c })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("serializable") + "\n"
}

/// `interval,n,mean_cents,sd_cents,group`.
pub fn report_csv(report: &IntervalReport) -> String {
    csv_string(
        &["interval", "n", "mean_cents", "sd_cents", "group"],
        report.intervals.iter().map(|s| {
            vec![
                s.name(),
                s.n_samples.to_string(),
                s.mean.to_string(),
                s.sd.to_string(),
                s.group.as_str().to_string(),
            ]
        }),
    )
}

/// `degree,measured,reference,delta`.
pub fn comparison_csv(c: &ScaleComparison) -> String {
    csv_string(
        &["degree", "measured", "reference", "delta"],
        c.deltas.iter().map(|d| {
            vec![
                d.label.clone(),
                d.measured.to_string(),
                d.reference.to_string(),
                d.delta.to_string(),
            ]
        }),
    )
}

/// Scale name mapped to its `[label, cents]` pairs.
pub fn scales_json(scales: &[ReferenceScale]) -> String {
    let map: serde_json::Map<String, serde_json::Value> = scales
        .iter()
        .map(|s| {
            let degrees = s
                .degrees
                .iter()
                .map(|d| serde_json::json!([d.label, d.cents]))
                .collect();
            (s.name.clone(), serde_json::Value::Array(degrees))
        })
        .collect();
    serde_json::to_string_pretty(&serde_json::Value::Object(map)).expect("serializable") + "\n"
}

/// A file name safe on common file systems.
pub fn file_stem(label: &str) -> String {
    label
        .chars()
        .map(|c| match c {
            '/' | '\\' | ':' | '*' | '?' | '"' | '<' | '>' | '|' => '_',
            '\'' => 'p',
            c => c,
        })
        .collect()
}

fn write(path: &Path, contents: &str) -> Result<PathBuf> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))?;
    Ok(path.to_path_buf())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Histogram,
    NoteHistogram,
    Alignment,
}

impl PlotKind {
    pub const ALL: [PlotKind; 3] = [PlotKind::Histogram, PlotKind::NoteHistogram, PlotKind::Alignment];

    pub fn as_str(self) -> &'static str {
        match self {
            PlotKind::Histogram => "histogram",
            PlotKind::NoteHistogram => "note-histogram",
            PlotKind::Alignment => "alignment",
        }
    }
}

impl fmt::Display for PlotKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PlotKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        PlotKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                CliError::Input(format!(
                    "unknown plot kind '{s}', expected one of histogram, note-histogram, alignment"
                ))
            })
    }
}

/// Writes the data behind one figure type into `dir`, returning the files.
pub fn emit_plot_data(b: &PieceBundle, kind: PlotKind, dir: &Path) -> Result<Vec<PathBuf>> {
    match kind {
        PlotKind::Histogram => Ok(vec![write(
            &dir.join("histogram.csv"),
            &histogram_csv(&b.raw, &b.smoothed, &piece_marks(b)),
        )?]),
        PlotKind::Alignment => Ok(vec![write(&dir.join("alignment.csv"), &alignment_csv(b))?]),
        PlotKind::NoteHistogram => {
            if b.note_histograms.is_empty() {
                return Err(CliError::Input(format!("piece '{}' has no note histograms", b.id)));
            }
            b.note_histograms
                .iter()
                .map(|nh| {
                    let marks: Vec<(f64, u8)> = nh.peak.iter().map(|p| (p.peak_cents, MARK_PEAK)).collect();
                    write(
                        &dir.join("notes").join(format!("{}.csv", file_stem(nh.note.name()))),
                        &histogram_csv(&nh.raw, &nh.smoothed, &marks),
                    )
                })
                .collect()
        }
    }
}

/// All per-piece outputs under `<out>/<piece>/`.
pub fn write_piece(out: &Path, b: &PieceBundle) -> Result<()> {
    let dir = out.join(file_stem(&b.id));
    for kind in PlotKind::ALL {
        if kind == PlotKind::NoteHistogram && b.note_histograms.is_empty() {
            continue;
        }
        emit_plot_data(b, kind, &dir)?;
    }
    write(&dir.join("peaks.json"), &peaks_json(b))?;
    write(&dir.join("intervals.csv"), &intervals_csv(b))?;
    Ok(())
}

/// Per-piece outputs, `report.json`, `report.csv` and one
/// `comparison_<scale>.csv` per compared scale.
pub fn write_corpus(out: &Path, r: &CorpusResult) -> Result<()> {
    for b in &r.pieces {
        write_piece(out, b)?;
    }
    write_report(out, r)
}

pub fn write_report(out: &Path, r: &CorpusResult) -> Result<()> {
    write(&out.join("report.json"), &report_json(r))?;
    write(&out.join("report.csv"), &report_csv(&r.report))?;
    for (id, c) in &r.comparisons {
        write(&out.join(format!("comparison_{}.csv", file_stem(id))), &comparison_csv(c))?;
    }
    Ok(())
}
