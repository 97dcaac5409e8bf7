//! Synthetic pieces with known pitches and note boundaries.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use radif_core::alignment::{TranscribedNote, Transcription};
use radif_core::histogram::PitchTrace;
use radif_core::pitch::QuartertoneNote;

use crate::error::{CliError, Result};
use crate::ingest::{F0_SUFFIX, ONSETS_SUFFIX, TRANSCRIPTION_SUFFIX};
use crate::pipeline::PieceData;

/// Triangle-wave vibrato: the pitch sweeps linearly between `-depth` and
/// `+depth` cents, `rate` times per second.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vibrato {
    pub depth: f64,
    pub rate: f64,
    /// Minimum total seconds of vibrato per piece.
    pub seconds: f64,
    /// Minimum number of vibrato notes per piece.
    pub occurrences: usize,
}

impl Default for Vibrato {
    fn default() -> Self {
        Self {
            depth: 50.0,
            rate: 5.5,
            seconds: 72.0,
            occurrences: 8,
        }
    }
}

/// Short excursions away from the note, as in the tekye ornament.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tekye {
    /// Chance that a note carries ornaments.
    pub probability: f64,
    /// Jumps per ornamented note.
    pub jumps: usize,
    /// Jump size range, cents; the sign is random.
    pub size: (f64, f64),
    /// Jump length, seconds.
    pub length: f64,
}

impl Default for Tekye {
    fn default() -> Self {
        Self {
            probability: 0.5,
            jumps: 2,
            size: (100.0, 250.0),
            length: 0.03,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub hop: f64,
    /// Doubled MIDI of the tonic.
    pub tonic: i64,
    /// Written note (doubled MIDI) and performed cents above the tonic.
    pub scale: Vec<(i64, f64)>,
    /// Per-frame Gaussian jitter, cents.
    pub jitter_sd: f64,
    /// Per-piece detuning drawn uniformly from `[-detune, detune]` cents.
    pub detune: f64,
    pub notes: usize,
    /// Written duration range, seconds.
    pub durations: (f64, f64),
    /// Performed over written duration, drawn uniformly per note.
    pub tempo: (f64, f64),
    /// Index into `scale` of the note sung more than the others.
    pub emphasis: usize,
    pub vibrato: Option<Vibrato>,
    pub tekye: Option<Tekye>,
}

/// Shur on C with measured vocal intonation, the default synthetic scale:
/// C 0, D 210, Ek 347, F 498, G 696, Ak 836, Bb 985, C' 1190.
pub fn measured_shur() -> Vec<(i64, f64)> {
    vec![
        (120, 0.0),
        (124, 210.0),
        (127, 347.0),
        (130, 498.0),
        (134, 696.0),
        (137, 836.0),
        (140, 985.0),
        (144, 1190.0),
    ]
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            hop: crate::ingest::DEFAULT_HOP,
            tonic: 120,
            scale: measured_shur(),
            jitter_sd: 10.0,
            detune: 15.0,
            notes: 60,
            durations: (0.4, 1.6),
            tempo: (0.85, 1.15),
            emphasis: 1,
            vibrato: Some(Vibrato::default()),
            tekye: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthPiece {
    pub data: PieceData,
    /// Performed start of every note, seconds.
    pub onsets: Vec<f64>,
    pub detune: f64,
    /// Scale index of the note sung with vibrato.
    pub vibrato_note: Option<usize>,
}

impl SynthPiece {
    /// Absolute performed cents of scale degree `k`.
    pub fn performed_cents(&self, config: &SynthConfig, k: usize) -> f64 {
        50.0 * config.tonic as f64 + config.scale[k].1 + self.detune
    }
}

fn melody(config: &SynthConfig, rng: &mut ChaCha8Rng, vibrato_note: Option<usize>) -> Vec<(usize, f64, bool)> {
    let n = config.scale.len();
    let (dlo, dhi) = config.durations;
    let mut out = Vec::with_capacity(config.notes);
    let mut k = config.emphasis.min(n - 1);
    for _ in 0..config.notes {
        let mut d = rng.random_range(dlo..dhi);
        if k == config.emphasis {
            d *= 2.0;
        }
        out.push((k, d, false));
        loop {
            let step: i64 = rng.random_range(-2..=2);
            let next = k as i64 + step;
            if step != 0 && (0..n as i64).contains(&next) {
                k = next as usize;
                break;
            }
        }
    }
    // Every degree appears at least once.
    for k in 0..n {
        if !out.iter().any(|m| m.0 == k) {
            let pos = rng.random_range(0..=out.len());
            out.insert(pos, (k, rng.random_range(dlo..dhi), false));
        }
    }
    if let (Some(v), Some(vib)) = (vibrato_note, config.vibrato) {
        // Every occurrence of the note carries vibrato, and there are at
        // least `occurrences` of them.
        let present = out.iter().filter(|m| m.0 == v).count();
        for _ in present..vib.occurrences {
            let pos = rng.random_range(0..=out.len());
            out.insert(pos, (v, 0.0, true));
        }
        let count = present.max(vib.occurrences);
        let each = vib.seconds / count as f64;
        for m in out.iter_mut().filter(|m| m.0 == v) {
            *m = (v, m.1.max(each), true);
        }
    }
    out
}

fn triangle(phase: f64) -> f64 {
    4.0 * (phase.fract() - 0.5).abs() - 1.0
}

/// One piece drawn from `seed`. The vibrato note, when enabled, is drawn
/// from the inner degrees.
pub fn synth_piece(config: &SynthConfig, id: &str, seed: u64) -> Result<SynthPiece> {
    if config.scale.len() < 3 || config.emphasis >= config.scale.len() {
        return Err(CliError::Input("synthetic scale needs at least three degrees".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let detune = if config.detune > 0.0 {
        rng.random_range(-config.detune..=config.detune)
    } else {
        0.0
    };
    let vibrato_note = config.vibrato.map(|_| rng.random_range(1..config.scale.len() - 1));
    let notes = melody(config, &mut rng, vibrato_note);
    let jitter = Normal::new(0.0, config.jitter_sd.max(0.0)).map_err(|e| CliError::Input(e.to_string()))?;

    let base = 50.0 * config.tonic as f64 + detune;
    let mut written = Vec::with_capacity(notes.len());
    let mut onsets = Vec::with_capacity(notes.len());
    let mut cents = Vec::new();
    let mut clock = 0.0;
    for &(k, duration, vibrato) in &notes {
        let (doubled, offset) = config.scale[k];
        written.push(TranscribedNote {
            note: QuartertoneNote::new(doubled).map_err(|e| CliError::Input(e.to_string()))?,
            duration,
            label: None,
        });
        let performed = duration * rng.random_range(config.tempo.0..=config.tempo.1);
        onsets.push(clock);
        let end = clock + performed;
        let first = cents.len();
        while (cents.len() as f64) * config.hop < end {
            cents.push(base + offset);
        }
        let frames = cents.len() - first;
        if vibrato {
            let vib = config.vibrato.expect("vibrato flag implies config");
            let phase0: f64 = rng.random();
            for (j, c) in cents[first..].iter_mut().enumerate() {
                *c += vib.depth * triangle(phase0 + j as f64 * config.hop * vib.rate);
            }
        } else if let Some(tk) = config.tekye {
            if rng.random_bool(tk.probability) {
                let len = ((tk.length / config.hop).round() as usize).max(1);
                // One jump per equal slot of the note body, which leaves two
                // jump lengths at either end of the note. A jump right after
                // an onset that returns to the previous pitch cannot be told
                // apart from a late onset.
                let slot = frames.saturating_sub(4 * len) / tk.jumps.max(1);
                if slot >= 2 * len {
                    for j in 0..tk.jumps {
                        let start = first + 2 * len + j * slot;
                        let at = start + rng.random_range(0..=slot - 2 * len);
                        let size = rng.random_range(tk.size.0..=tk.size.1);
                        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                        for c in &mut cents[at..at + len] {
                            *c += sign * size;
                        }
                    }
                }
            }
        }
        for c in &mut cents[first..] {
            *c += jitter.sample(&mut rng);
        }
        clock = end;
    }

    let trace = PitchTrace::from_cents(0.0, config.hop, cents.into_iter().map(Some).collect())
        .map_err(|e| CliError::Input(e.to_string()))?;
    let transcription = Transcription::new(written).map_err(|e| CliError::Input(e.to_string()))?;
    Ok(SynthPiece {
        data: PieceData {
            id: id.to_string(),
            trace,
            transcription,
            onsets: Some(onsets.clone()),
        },
        onsets,
        detune,
        vibrato_note,
    })
}

/// `count` pieces named `piece-01`, `piece-02`, ..., seeded from `seed`.
pub fn synth_corpus(config: &SynthConfig, count: usize, seed: u64) -> Result<Vec<SynthPiece>> {
    (0..count)
        .map(|i| synth_piece(config, &format!("piece-{:02}", i + 1), seed.wrapping_add(i as u64 * 7919)))
        .collect()
}

/// Writes `<id>.f0.csv`, `<id>.transcription.csv` and `<id>.onsets.csv`.
pub fn write_piece_files(dir: &Path, piece: &SynthPiece) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let id = &piece.data.id;
    let trace = &piece.data.trace;

    let path = dir.join(format!("{id}{F0_SUFFIX}"));
    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let io = |e: csv::Error| CliError::Input(format!("{}: {e}", path.display()));
    w.write_record(["time_sec", "f0_hz"]).map_err(io)?;
    for (i, c) in trace.cents().iter().enumerate() {
        let hz = c.map_or(0.0, |c| radif_core::pitch::cents_to_hz(c, radif_core::pitch::A4_HZ));
        w.write_record([trace.time(i).to_string(), hz.to_string()]).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;

    let path = dir.join(format!("{id}{TRANSCRIPTION_SUFFIX}"));
    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let io = |e: csv::Error| CliError::Input(format!("{}: {e}", path.display()));
    w.write_record(["note_doubled_midi", "duration_sec", "label"]).map_err(io)?;
    for n in piece.data.transcription.notes() {
        w.write_record([n.note.doubled_midi().to_string(), n.duration.to_string(), n.label().to_string()])
            .map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;

    let path = dir.join(format!("{id}{ONSETS_SUFFIX}"));
    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let io = |e: csv::Error| CliError::Input(format!("{}: {e}", path.display()));
    w.write_record(["onset_sec"]).map_err(io)?;
    for o in &piece.onsets {
        w.write_record([o.to_string()]).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;
    Ok(())
}
