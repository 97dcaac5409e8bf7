use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use radif::config::RunConfig;
use radif::emit::{self, PlotKind};
use radif::error::{CliError, Result};
use radif::ingest::{self, PieceInput};
use radif::pipeline::{self, PieceData};
use radif::synth::{self, SynthConfig, Tekye};
use radif_core::analysis;
use radif_core::pitch::{self, Degree, ReferenceScale, ScaleName};

#[derive(Parser)]
#[command(name = "radif", version, about = "Measure performed intervals from F0 traces and transcriptions")]
struct Cli {
    /// More log output on stderr (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Output directory (overrides the configuration).
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Also print the report as JSON on stdout.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct PieceArgs {
    /// F0 trace, CSV with header time_sec,f0_hz.
    #[arg(long)]
    f0: PathBuf,
    /// Transcription, CSV with header note_doubled_midi,duration_sec,label.
    #[arg(long)]
    transcription: PathBuf,
    /// Annotated onsets, CSV with header onset_sec.
    #[arg(long)]
    onsets: Option<PathBuf>,
    /// Piece id; the F0 file stem by default.
    #[arg(long)]
    id: Option<String>,
}

impl PieceArgs {
    fn input(&self) -> PieceInput {
        let id = self.id.clone().unwrap_or_else(|| {
            let name = self.f0.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            name.strip_suffix(ingest::F0_SUFFIX)
                .or_else(|| name.strip_suffix(".csv"))
                .unwrap_or(&name)
                .to_string()
        });
        PieceInput {
            id,
            f0_path: self.f0.clone(),
            transcription_path: self.transcription.clone(),
            onsets_path: self.onsets.clone(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Analyse one piece.
    Analyze {
        #[command(flatten)]
        piece: PieceArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Analyse a corpus: a directory of <id>.f0.csv / <id>.transcription.csv
    /// files, or a manifest CSV with columns id,f0_path,transcription_path[,onsets_path].
    Corpus {
        input: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Worker threads (overrides the configuration).
        #[arg(short, long)]
        jobs: Option<usize>,
    },
    /// Compare a measured scale, or one reference scale, with reference scales.
    Compare {
        /// report.json written by analyze or corpus.
        #[arg(long, conflicts_with = "from")]
        report: Option<PathBuf>,
        /// Reference scale to treat as the measurement.
        #[arg(long)]
        from: Option<String>,
        /// Scales to compare against; the configured list by default.
        #[arg(long = "scale")]
        scales: Vec<String>,
        /// Extra scales, JSON object of name -> [[label, cents], ...].
        #[arg(long)]
        custom: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Print the built-in reference scales as JSON.
    Scales {
        /// Also include the shur views of the octave tables.
        #[arg(long)]
        shur: bool,
    },
    /// Write the data behind one figure type for a piece.
    PlotData {
        #[command(flatten)]
        piece: PieceArgs,
        /// histogram, note-histogram or alignment.
        #[arg(long)]
        kind: String,
        #[command(flatten)]
        common: Common,
    },
    /// Generate a synthetic corpus with known pitches.
    Synth {
        /// Directory for the generated files.
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, default_value_t = 15)]
        pieces: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Leave out the vibrato note.
        #[arg(long)]
        no_vibrato: bool,
        /// Add tekye-like jumps.
        #[arg(long)]
        tekye: bool,
    },
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut config = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &common.out {
        config.output_dir = out.clone();
    }
    Ok(config)
}

fn print_report(result: &pipeline::CorpusResult, json: bool) {
    if json {
        print!("{}", emit::report_json(result));
    }
}

fn run_corpus(inputs: &[PieceInput], config: &RunConfig, json: bool) -> Result<()> {
    let result = pipeline::analyze_corpus(inputs, config)?;
    emit::write_corpus(&config.output_dir, &result)?;
    info!(
        "{} pieces analysed, {} skipped; results in {}",
        result.pieces.len(),
        result.skipped.len(),
        config.output_dir.display()
    );
    print_report(&result, json);
    Ok(())
}

fn read_scales_json(path: &Path) -> Result<Vec<ReferenceScale>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let doc: serde_json::Map<String, serde_json::Value> = serde_json::from_str(&text)
        .map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    let bad = |name: &str, message: String| CliError::Config {
        path: path.to_path_buf(),
        message: format!("scale '{name}': {message}"),
    };
    doc.into_iter()
        .map(|(name, value)| {
            let pairs: Vec<(String, f64)> =
                serde_json::from_value(value).map_err(|e| bad(&name, e.to_string()))?;
            let degrees = pairs.into_iter().map(|(label, cents)| Degree { label, cents }).collect();
            ReferenceScale::new(name.clone(), degrees).map_err(|e| bad(&name, e.to_string()))
        })
        .collect()
}

fn measured_rows(path: &Path) -> Result<Vec<(String, f64)>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let doc: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::Config {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let rows: Vec<analysis::ScaleRow> = serde_json::from_value(doc["scale"].clone()).map_err(|_| CliError::Config {
        path: path.to_path_buf(),
        message: "field scale: missing or malformed (the report has no measured scale)".into(),
    })?;
    Ok(analysis::labelled(&rows))
}

fn compare(
    report: Option<&Path>,
    from: Option<&str>,
    scales: &[String],
    custom: Option<&Path>,
    common: &Common,
) -> Result<()> {
    let config = load_config(common)?;
    let rows = match (report, from) {
        (Some(path), _) => measured_rows(path)?,
        (None, Some(id)) => {
            let s = pitch::scale_by_id(id).map_err(|e| CliError::Input(e.to_string()))?;
            s.degrees.iter().map(|d| (d.label.clone(), d.cents)).collect()
        }
        (None, None) => return Err(CliError::Input("compare needs --report or --from".into())),
    };
    let custom = match custom {
        Some(path) => read_scales_json(path)?,
        None => Vec::new(),
    };
    let mut targets: Vec<(String, ReferenceScale)> = Vec::new();
    let ids = if scales.is_empty() && custom.is_empty() {
        config.scales.clone()
    } else {
        scales.to_vec()
    };
    for id in ids {
        let s = pitch::scale_by_id(&id).map_err(|e| CliError::Input(e.to_string()))?;
        targets.push((id, s));
    }
    targets.extend(custom.into_iter().map(|s| (s.name.clone(), s)));

    let mut out = csv::Writer::from_writer(std::io::stdout());
    let stdout_err = |e: csv::Error| CliError::Input(format!("stdout: {e}"));
    if !common.json {
        out.write_record(["scale", "degree", "measured", "reference", "delta"]).map_err(stdout_err)?;
    }
    let mut all = Vec::new();
    for (id, scale) in &targets {
        let c = analysis::compare_to_reference(&rows, scale).map_err(|e| CliError::Failed(e.to_string()))?;
        if !common.json {
            for d in &c.deltas {
                out.write_record([
                    id.as_str(),
                    &d.label,
                    &d.measured.to_string(),
                    &d.reference.to_string(),
                    &d.delta.to_string(),
                ])
                .map_err(stdout_err)?;
            }
        }
        if common.out.is_some() {
            let path = config.output_dir.join(format!("comparison_{}.csv", emit::file_stem(id)));
            std::fs::create_dir_all(&config.output_dir).map_err(|e| CliError::io(&config.output_dir, e))?;
            std::fs::write(&path, emit::comparison_csv(&c)).map_err(|e| CliError::io(&path, e))?;
        }
        all.push(serde_json::json!({ "id": id, "comparison": c }));
    }
    out.flush().map_err(|e| CliError::Input(format!("stdout: {e}")))?;
    if common.json {
        println!("{}", serde_json::to_string_pretty(&all).expect("serializable"));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Analyze { piece, common } => {
            let mut config = load_config(&common)?;
            // A single piece measures each interval once.
            config.min_samples = 1;
            run_corpus(&[piece.input()], &config, common.json)
        }
        Command::Corpus { input, common, jobs } => {
            let mut config = load_config(&common)?;
            if jobs.is_some() {
                config.jobs = jobs;
            }
            config.validate()?;
            let inputs = ingest::discover(&input)?;
            run_corpus(&inputs, &config, common.json)
        }
        Command::Compare {
            report,
            from,
            scales,
            custom,
            common,
        } => compare(report.as_deref(), from.as_deref(), &scales, custom.as_deref(), &common),
        Command::Scales { shur } => {
            let mut scales: Vec<ReferenceScale> = ScaleName::ALL.iter().map(|&n| pitch::reference_scale(n)).collect();
            if shur {
                for n in [ScaleName::Farhat, ScaleName::Talai, ScaleName::Maraghi] {
                    scales.push(pitch::shur_scale(n).map_err(|e| CliError::Failed(e.to_string()))?);
                }
            }
            print!("{}", emit::scales_json(&scales));
            Ok(())
        }
        Command::PlotData { piece, kind, common } => {
            let kind: PlotKind = kind.parse()?;
            let config = load_config(&common)?;
            let input = piece.input();
            let data = PieceData::load(&input)?;
            let bundle = pipeline::analyze_piece(&data, &config)?;
            let dir = config.output_dir.join(emit::file_stem(&bundle.id));
            for path in emit::emit_plot_data(&bundle, kind, &dir)? {
                println!("{}", path.display());
            }
            Ok(())
        }
        Command::Synth {
            out,
            pieces,
            seed,
            no_vibrato,
            tekye,
        } => {
            let mut config = SynthConfig::default();
            if no_vibrato {
                config.vibrato = None;
            }
            if tekye {
                config.tekye = Some(Tekye::default());
            }
            for piece in synth::synth_corpus(&config, pieces, seed)? {
                synth::write_piece_files(&out, &piece)?;
            }
            info!("{pieces} pieces written to {}", out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
