use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use radif::config::RunConfig;
use radif::emit::{self, PlotKind};
use radif::error::CliError;
use radif::ingest::{self, PieceInput};
use radif::pipeline::{analyze_corpus, analyze_corpus_data, analyze_piece, PieceData};
use radif::synth::{synth_corpus, write_piece_files, SynthConfig};
use radif_core::alignment::{TranscribedNote, Transcription};
use radif_core::histogram::PitchTrace;
use radif_core::pitch::QuartertoneNote;
use sha2::{Digest, Sha256};
use tempfile::TempDir;

fn write(dir: &Path, name: &str, contents: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, contents).unwrap();
    path
}

fn radif(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_radif")).args(args).output().unwrap()
}

#[test]
fn f0_two_rows() {
    let dir = TempDir::new().unwrap();
    let path = write(dir.path(), "a.f0.csv", "time_sec,f0_hz\n0.0,440\n0.0058,440\n");
    let trace = ingest::read_f0(&path).unwrap();
    assert_eq!(trace.len(), 2);
    assert_eq!(trace.voiced_count(), 2);
    for c in trace.cents() {
        assert!((c.unwrap() - 6900.0).abs() < 1e-9);
    }
    assert!((trace.hop() - 0.0058).abs() < 1e-12);
}

#[test]
fn f0_zero_is_unvoiced_frame() {
    let dir = TempDir::new().unwrap();
    let path = write(dir.path(), "a.f0.csv", "time_sec,f0_hz\n0.0,440\n0.01,0\n0.02,-1\n0.03,220\n");
    let trace = ingest::read_f0(&path).unwrap();
    assert_eq!(trace.len(), 4);
    assert_eq!(trace.cents()[1], None);
    assert_eq!(trace.cents()[2], None);
    assert!((trace.cents()[3].unwrap() - 5700.0).abs() < 1e-9);
    assert!((trace.time(3) - 0.03).abs() < 1e-12);
}

#[test]
fn f0_errors_name_file_and_row() {
    let dir = TempDir::new().unwrap();
    let shuffled = write(dir.path(), "s.f0.csv", "time_sec,f0_hz\n0.0,440\n0.02,440\n0.01,440\n");
    let err = ingest::read_f0(&shuffled).unwrap_err();
    assert!(matches!(err, CliError::Row { row: 4, .. }), "{err}");
    let msg = err.to_string();
    assert!(msg.contains("s.f0.csv") && msg.contains("row 4"), "{msg}");

    let malformed = write(dir.path(), "m.f0.csv", "time_sec,f0_hz\n0.0,440\n0.01,abc\n");
    let msg = ingest::read_f0(&malformed).unwrap_err().to_string();
    assert!(msg.contains("m.f0.csv") && msg.contains("row 3") && msg.contains("f0_hz"), "{msg}");

    let uneven = write(dir.path(), "u.f0.csv", "time_sec,f0_hz\n0.0,440\n0.01,440\n0.02,440\n0.05,440\n");
    let msg = ingest::read_f0(&uneven).unwrap_err().to_string();
    assert!(msg.contains("u.f0.csv") && msg.contains("row 5"), "{msg}");

    let empty = write(dir.path(), "e.f0.csv", "time_sec,f0_hz\n");
    assert!(matches!(ingest::read_f0(&empty), Err(CliError::EmptyFile { .. })));

    let header = write(dir.path(), "h.f0.csv", "t,hz\n0.0,440\n");
    assert!(ingest::read_f0(&header).unwrap_err().to_string().contains("h.f0.csv"));
}

#[test]
fn transcription_errors() {
    let dir = TempDir::new().unwrap();
    let ok = write(
        dir.path(),
        "a.transcription.csv",
        "note_doubled_midi,duration_sec,label\n120,0.5,C4\n127,1.0,\n",
    );
    let t = ingest::read_transcription(&ok).unwrap();
    assert_eq!(t.len(), 2);
    assert_eq!(t.notes()[1].note.name(), "Ek4");

    let bad = write(
        dir.path(),
        "b.transcription.csv",
        "note_doubled_midi,duration_sec,label\n120,0.5,C4\n124,-1,D4\n",
    );
    let msg = ingest::read_transcription(&bad).unwrap_err().to_string();
    assert!(msg.contains("b.transcription.csv") && msg.contains("row 3"), "{msg}");
}

fn nominal_piece(id: &str) -> PieceData {
    // C4, D4, Ek4, F4 at their written pitch with a small deterministic wobble.
    let notes = [(120, 1.0), (124, 0.8), (127, 1.2), (130, 0.9)];
    let hop = ingest::DEFAULT_HOP;
    let mut cents = Vec::new();
    for &(d, dur) in &notes {
        let n = (dur / hop).round() as usize;
        for k in 0..n {
            cents.push(Some(50.0 * d as f64 + [-4.0, -2.0, 0.0, 2.0, 4.0][k % 5]));
        }
    }
    PieceData {
        id: id.into(),
        trace: PitchTrace::from_cents(0.0, hop, cents).unwrap(),
        transcription: Transcription::new(
            notes
                .iter()
                .map(|&(d, dur)| TranscribedNote {
                    note: QuartertoneNote::new(d).unwrap(),
                    duration: dur,
                    label: None,
                })
                .collect(),
        )
        .unwrap(),
        onsets: None,
    }
}

#[test]
fn nominal_piece_gives_nominal_intervals() {
    let b = analyze_piece(&nominal_piece("n"), &RunConfig::default()).unwrap();
    let sizes: Vec<f64> = b.intervals.iter().map(|m| m.size).collect();
    assert_eq!(sizes.len(), 3, "{sizes:?}");
    for (got, want) in sizes.iter().zip([200.0, 150.0, 150.0]) {
        assert!((got - want).abs() <= 1.0, "{sizes:?}");
    }
    assert!(b.offset.abs() <= 1.0);
}

#[test]
fn unvoiced_piece_fails() {
    let mut p = nominal_piece("u");
    p.trace = PitchTrace::from_cents(0.0, ingest::DEFAULT_HOP, vec![None; 500]).unwrap();
    let err = analyze_piece(&p, &RunConfig::default()).unwrap_err();
    assert!(err.to_string().contains("'u'"), "{err}");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn single_piece_corpus_matches_piece() {
    let config = RunConfig {
        min_samples: 1,
        ..RunConfig::default()
    };
    let p = nominal_piece("one");
    let corpus = analyze_corpus_data(std::slice::from_ref(&p), &config).unwrap();
    let piece = analyze_piece(&p, &config).unwrap();
    assert_eq!(corpus.pieces.len(), 1);
    assert_eq!(emit::peaks_json(&corpus.pieces[0]), emit::peaks_json(&piece));
    assert_eq!(corpus.report.intervals.len(), piece.intervals.len());
    for (s, m) in corpus.report.intervals.iter().zip(&piece.intervals) {
        assert_eq!((s.n_samples, s.mean, s.sd), (1, m.size, 0.0));
    }
}

#[test]
fn empty_corpus_fails() {
    assert!(analyze_corpus_data(&[], &RunConfig::default()).is_err());
    assert!(analyze_corpus(&[], &RunConfig::default()).is_err());
}

#[test]
fn failing_piece_is_skipped() {
    let mut bad = nominal_piece("bad");
    bad.trace = PitchTrace::from_cents(0.0, ingest::DEFAULT_HOP, vec![None; 500]).unwrap();
    let config = RunConfig {
        min_samples: 1,
        ..RunConfig::default()
    };
    let r = analyze_corpus_data(&[nominal_piece("good"), bad.clone()], &config).unwrap();
    assert_eq!(r.pieces.len(), 1);
    assert_eq!(r.skipped.len(), 1);
    assert_eq!(r.skipped[0].id, "bad");
    let err = analyze_corpus_data(&[bad], &config).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

fn synth_dir(pieces: usize) -> TempDir {
    let dir = TempDir::new().unwrap();
    let cfg = SynthConfig {
        vibrato: None,
        notes: 20,
        ..SynthConfig::default()
    };
    for p in synth_corpus(&cfg, pieces, 3).unwrap() {
        write_piece_files(dir.path(), &p).unwrap();
    }
    dir
}

fn sha(path: &Path) -> Vec<u8> {
    Sha256::digest(fs::read(path).unwrap()).to_vec()
}

#[test]
fn corpus_run_is_byte_identical() {
    let input = synth_dir(3);
    let out = TempDir::new().unwrap();
    let mut hashes = Vec::new();
    for run in ["a", "b"] {
        let dir = out.path().join(run);
        let o = radif(&["corpus", input.path().to_str().unwrap(), "-o", dir.to_str().unwrap(), "--jobs", "2"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        hashes.push((sha(&dir.join("report.json")), sha(&dir.join("piece-02/peaks.json"))));
    }
    assert_eq!(hashes[0], hashes[1]);
    let dir = out.path().join("a");
    for f in ["report.csv", "comparison_farhat-shur.csv", "piece-01/histogram.csv", "piece-01/alignment.csv"] {
        assert!(dir.join(f).is_file(), "{f}");
    }
    let report = fs::read_to_string(dir.join("report.csv")).unwrap();
    assert!(report.starts_with("interval,n,mean_cents,sd_cents,group\n"));
    let cmp = fs::read_to_string(dir.join("comparison_farhat-shur.csv")).unwrap();
    assert!(cmp.starts_with("degree,measured,reference,delta\n"));
}

#[test]
fn manifest_and_directory_agree() {
    let input = synth_dir(2);
    let manifest = write(
        input.path(),
        "manifest.csv",
        "id,f0_path,transcription_path,onsets_path\n\
         piece-01,piece-01.f0.csv,piece-01.transcription.csv,piece-01.onsets.csv\n\
         piece-02,piece-02.f0.csv,piece-02.transcription.csv,\n",
    );
    let from_manifest = ingest::discover(&manifest).unwrap();
    let from_dir = ingest::discover(input.path()).unwrap();
    assert_eq!(from_manifest.len(), 2);
    assert_eq!(from_dir.len(), 2);
    assert_eq!(from_manifest[0], from_dir[0]);
    assert_eq!(from_manifest[1].onsets_path, None);
}

#[test]
fn plot_data_formats() {
    let input = synth_dir(1);
    let data = PieceData::load(&PieceInput {
        id: "piece-01".into(),
        f0_path: input.path().join("piece-01.f0.csv"),
        transcription_path: input.path().join("piece-01.transcription.csv"),
        onsets_path: None,
    })
    .unwrap();
    let b = analyze_piece(&data, &RunConfig::default()).unwrap();
    let out = TempDir::new().unwrap();

    let files = emit::emit_plot_data(&b, PlotKind::Histogram, out.path()).unwrap();
    let text = fs::read_to_string(&files[0]).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("bin_center_cents,raw_count,smoothed_count,peak_marker"));
    let markers: Vec<u8> = lines.map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(markers.iter().filter(|&&m| m == emit::MARK_SHAHED).count(), 1);
    assert_eq!(markers.iter().filter(|&&m| m != emit::MARK_NONE).count(), b.peaks.len());

    let files = emit::emit_plot_data(&b, PlotKind::Alignment, out.path()).unwrap();
    let text = fs::read_to_string(&files[0]).unwrap();
    assert!(text.starts_with("trace_frame,time_sec,note_index,note_label\n"));
    assert_eq!(text.lines().count(), b.trace.len() + 1);

    let files = emit::emit_plot_data(&b, PlotKind::NoteHistogram, out.path()).unwrap();
    assert_eq!(files.len(), b.note_histograms.len());
    assert!(files.iter().all(|f| f.parent().unwrap().ends_with("notes")));

    assert!("scatter".parse::<PlotKind>().is_err());
}

#[test]
fn exit_codes() {
    let input = synth_dir(1);
    let out = TempDir::new().unwrap();
    let f0 = input.path().join("piece-01.f0.csv");
    let tr = input.path().join("piece-01.transcription.csv");
    let (f0, tr) = (f0.to_str().unwrap(), tr.to_str().unwrap());
    let o = out.path().to_str().unwrap();

    let ok = radif(&["analyze", "--f0", f0, "--transcription", tr, "-o", o, "--json"]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&ok.stdout).unwrap();
    assert_eq!(doc["pieces"][0], "piece-01");

    let missing = radif(&["analyze", "--f0", "/nonexistent.f0.csv", "--transcription", tr, "-o", o]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("/nonexistent.f0.csv"));

    let dark = write(out.path(), "dark.f0.csv", "time_sec,f0_hz\n0.0,0\n0.01,0\n0.02,0\n");
    let failed = radif(&["analyze", "--f0", dark.to_str().unwrap(), "--transcription", tr, "-o", o]);
    assert_eq!(failed.status.code(), Some(2));

    let kind = radif(&["plot-data", "--f0", f0, "--transcription", tr, "--kind", "scatter", "-o", o]);
    assert_eq!(kind.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&kind.stderr).contains("scatter"));

    assert_eq!(radif(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(radif(&["--help"]).status.code(), Some(0));

    let config = write(out.path(), "bad.toml", "smoothing_window = 4\n");
    let bad = radif(&["analyze", "--f0", f0, "--transcription", tr, "-c", config.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("smoothing_window"));
}

#[test]
fn compare_and_scales_commands() {
    let o = radif(&["compare", "--from", "farhat-shur", "--scale", "vaziri"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("scale,degree,measured,reference,delta"));
    assert!(text.contains("vaziri,Ak,835,850,-15"), "{text}");

    let o = radif(&["scales", "--shur"]);
    let doc: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["Vaziri"][2], serde_json::json!(["Ek", 350.0]));
    assert_eq!(doc["Farhat (shur)"][1], serde_json::json!(["D", 205.0]));

    assert_eq!(radif(&["compare"]).status.code(), Some(1));
    assert_eq!(radif(&["compare", "--from", "nope"]).status.code(), Some(1));
}

#[test]
fn synth_command_writes_pieces() {
    let out = TempDir::new().unwrap();
    let o = radif(&["synth", "-o", out.path().to_str().unwrap(), "--pieces", "2", "--no-vibrato", "--tekye"]);
    assert!(o.status.success());
    let inputs = ingest::discover(out.path()).unwrap();
    assert_eq!(inputs.len(), 2);
    assert!(inputs.iter().all(|i| i.onsets_path.is_some()));
}

#[test]
fn config_file_defaults_match_modules() {
    let dir = TempDir::new().unwrap();
    let path = write(dir.path(), "empty.toml", "");
    assert_eq!(RunConfig::load(&path).unwrap(), RunConfig::default());
    let path = write(dir.path(), "typo.toml", "bin_wdth = 2\n");
    let msg = RunConfig::load(&path).unwrap_err().to_string();
    assert!(msg.contains("typo.toml") && msg.contains("bin_wdth"), "{msg}");
}
