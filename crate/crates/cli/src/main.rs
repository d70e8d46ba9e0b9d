//! `gbsed` command-line driver.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 data error,
//! 4 internal invariant violation.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gbsed::harness::{self, EncodeSummary, SweepConfig};
use gbsed::scenarios::{self, ScenarioSpec};
use gbsed::scene_graph::{build_scene_graph, read_detections};
use gbsed::{
    decode_frame, encode_frame, ChannelKind, Error, GraphSequence, HeaderProtection, Homography,
    LinkConfig, RelationOntology, RelationParams, RepairPolicy, RiskParams,
};

#[derive(Parser)]
#[command(
    name = "gbsed",
    version,
    about = "Scene-graph semantic codec and noisy-link simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct OntologyArg {
    /// Ontology file; the built-in default vocabulary when omitted.
    #[arg(long)]
    ontology: Option<PathBuf>,
}

impl OntologyArg {
    fn load(&self) -> Result<RelationOntology, Failure> {
        match &self.ontology {
            Some(p) => Ok(RelationOntology::load_file(p)?),
            None => Ok(RelationOntology::default_fixture()),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene corpus.
    Gen {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        sequences: usize,
        #[arg(long, default_value_t = 10)]
        frames: usize,
        #[arg(long, default_value_t = 2)]
        min_vehicles: usize,
        #[arg(long, default_value_t = 8)]
        max_vehicles: usize,
        #[arg(long, default_value_t = 0.3)]
        risky_fraction: f64,
        #[arg(long, default_value_t = 3)]
        lanes: usize,
        /// Add one node per lane.
        #[arg(long)]
        lane_nodes: bool,
        #[command(flatten)]
        ontology: OntologyArg,
        /// Output `.scenes` file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Encode every frame into a `.gbsd` payload and print a size summary.
    Encode {
        /// Scene corpus. Mutually exclusive with `--detections`.
        #[arg(
            long,
            required_unless_present = "detections",
            conflicts_with = "detections"
        )]
        scenes: Option<PathBuf>,
        /// Detections file, one frame per line.
        #[arg(long, requires = "homography")]
        detections: Option<PathBuf>,
        /// Image-to-ground homography (9 reals).
        #[arg(long, requires = "detections")]
        homography: Option<PathBuf>,
        #[command(flatten)]
        ontology: OntologyArg,
        /// Output directory for payloads.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an encode, transmit, decode and evaluate sweep over SNR points.
    Sweep {
        #[arg(long)]
        scenes: PathBuf,
        #[command(flatten)]
        ontology: OntologyArg,
        /// Comma-separated SNR points in dB; `inf` is noiseless.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "0,2,4,6,8,10,12,14,16,18,20"
        )]
        snr: Vec<f64>,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "awgn64qam")]
        channel: ChannelKind,
        #[arg(long, default_value_t = 0.0)]
        flip_prob: f64,
        #[arg(long, default_value = "protected")]
        header_protection: HeaderProtection,
        /// Reject imperfect matrices instead of repairing them.
        #[arg(long)]
        strict: bool,
        /// CSV output; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a sweep CSV as text tables.
    Report {
        csv: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug)]
enum Failure {
    Lib(Error),
    Invariant(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::Lib(Error::Io {
        context: path.display().to_string(),
        source: e,
    })
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| io_err(p, e)),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| io_err(Path::new("<stdout>"), e))
        }
    }
}

fn load_corpus(path: &Path, o: &RelationOntology) -> Result<Vec<GraphSequence>, Failure> {
    scenarios::read_scenes_file(path, o).map_err(|e| match e {
        Error::Parse { line, msg } => Failure::Lib(Error::Parse {
            line,
            msg: format!("{}: {msg}", path.display()),
        }),
        other => Failure::Lib(other),
    })
}

fn load_detections(
    det: &Path,
    hom: &Path,
    o: &RelationOntology,
) -> Result<Vec<GraphSequence>, Failure> {
    let text = std::fs::read_to_string(det).map_err(|e| io_err(det, e))?;
    let h = Homography::load_file(hom)?;
    let params = RelationParams::default();
    let frames = read_detections(&text, None)?
        .iter()
        .enumerate()
        .map(|(k, objs)| {
            build_scene_graph(objs, &h, o, &params)
                .map_err(|e| Error::InvalidGraph(format!("{} frame {k}: {e}", det.display())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if frames.is_empty() {
        return Ok(Vec::new());
    }
    Ok(vec![GraphSequence {
        frames,
        label: None,
    }])
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Gen {
            seed,
            sequences,
            frames,
            min_vehicles,
            max_vehicles,
            risky_fraction,
            lanes,
            lane_nodes,
            ontology,
            out,
        } => {
            let o = ontology.load()?;
            let spec = ScenarioSpec {
                seed,
                num_sequences: sequences,
                frames_per_sequence: frames,
                vehicles_range: (min_vehicles, max_vehicles),
                risky_fraction,
                lane_count: lanes,
                lane_nodes,
                ..Default::default()
            };
            let seqs = scenarios::generate(&spec, &o, &RelationParams::default())?;
            scenarios::write_scenes_file(&out, &seqs, &o)?;
            let frames: usize = seqs.iter().map(|s| s.frames.len()).sum();
            eprintln!(
                "wrote {} sequences ({frames} frames) to {}",
                seqs.len(),
                out.display()
            );
        }
        Command::Encode {
            scenes,
            detections,
            homography,
            ontology,
            out,
        } => {
            let o = ontology.load()?;
            let corpus = match (scenes, detections, homography) {
                (Some(s), _, _) => load_corpus(&s, &o)?,
                (None, Some(d), Some(h)) => load_detections(&d, &h, &o)?,
                _ => {
                    return Err(Error::Config(
                        "need --scenes or --detections with --homography".into(),
                    )
                    .into())
                }
            };
            let payloads = harness::encode_corpus(&corpus, &o)?;
            for (s, (seq, ps)) in corpus.iter().zip(&payloads).enumerate() {
                for (k, (g, p)) in seq.frames.iter().zip(ps).enumerate() {
                    let back = decode_frame(p.as_bytes(), &o, RepairPolicy::Strict)?;
                    if &back.graph != g || encode_frame(&back.graph, &o)? != *p {
                        return Err(Failure::Invariant(format!(
                            "sequence {s} frame {k} does not survive a noiseless round trip"
                        )));
                    }
                }
            }
            let summary: EncodeSummary = harness::write_payloads(&out, &payloads)?;
            print!("{}", summary.render());
        }
        Command::Sweep {
            scenes,
            ontology,
            snr,
            trials,
            seed,
            channel,
            flip_prob,
            header_protection,
            strict,
            out,
        } => {
            let o = ontology.load()?;
            let corpus = load_corpus(&scenes, &o)?;
            let cfg = SweepConfig {
                snr_points: snr,
                trials_per_point: trials,
                base_seed: seed,
                link: LinkConfig {
                    channel,
                    bsc_flip_prob: flip_prob,
                    header_protection,
                    ..Default::default()
                },
                repair: if strict {
                    RepairPolicy::Strict
                } else {
                    RepairPolicy::Mode
                },
                threads: SweepConfig::threads_from_env()?,
                ..Default::default()
            };
            let risk = RiskParams::from_ontology(&o)?;
            let rows = harness::run_sweep(&cfg, &corpus, &o, &risk)?;
            emit(out.as_deref(), &harness::csv_string(&rows)?)?;
        }
        Command::Report { csv, out } => {
            let text = std::fs::read_to_string(&csv).map_err(|e| io_err(&csv, e))?;
            let rows = harness::read_csv(&text)?;
            emit(out.as_deref(), &harness::render_report(&rows))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_data_error() { 3 } else { 2 })
        }
        Err(Failure::Invariant(msg)) => {
            eprintln!("internal invariant violated: {msg}");
            ExitCode::from(4)
        }
    }
}
