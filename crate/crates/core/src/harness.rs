//! Experiment driver: corpus encoding, seeded Monte-Carlo SNR sweeps, CSV
//! results and text reports. The CLI is a thin wrapper over this module.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{frames_required, transmit, FrameGrid, LinkConfig};
use crate::codec::{decode_frame, encode_frame, Payload, RepairPolicy};
use crate::error::{Error, Result};
use crate::metrics::{
    classification_metrics, compression_ratio, raw_frame_octets, semantic_fidelity,
    NodeMatchTolerance,
};
use crate::ontology::RelationOntology;
use crate::rng::SplitMix64;
use crate::scene_graph::{SceneGraph, SceneNode};
use crate::task::{
    assess_frames, consistency_from_verdicts, GraphSequence, RiskParams, RiskVerdict,
};

/// Environment variable capping the sweep worker pool.
pub const THREADS_ENV: &str = "GBSED_THREADS";

/// Raw reference frame: 1280×720 RGB at 24 bits per pixel.
pub const RAW_FRAME_WIDTH: u64 = 1280;
pub const RAW_FRAME_HEIGHT: u64 = 720;

pub const CSV_HEADER: &str =
    "snr_db,ber,fidelity,consistency,accuracy,precision,recall,f1,mcc,auc,mean_payload_octets,frames_per_payload";

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub snr_points: Vec<f64>,
    pub trials_per_point: usize,
    pub base_seed: u64,
    /// Template; `snr_db` and `seed` are overwritten per transmission.
    pub link: LinkConfig,
    pub grid: FrameGrid,
    pub repair: RepairPolicy,
    pub tolerance: NodeMatchTolerance,
    /// Worker cap; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            snr_points: (0..=10).map(|k| 2.0 * k as f64).collect(),
            trials_per_point: 1000,
            base_seed: 0,
            link: LinkConfig::default(),
            grid: FrameGrid::default(),
            repair: RepairPolicy::Mode,
            tolerance: NodeMatchTolerance::default(),
            threads: None,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.snr_points.is_empty() {
            return Err(Error::Config("snr_points must be nonempty".into()));
        }
        if self.trials_per_point == 0 {
            return Err(Error::Config("trials_per_point must be at least 1".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config(format!("{THREADS_ENV} must be positive")));
        }
        for &snr in &self.snr_points {
            LinkConfig {
                snr_db: snr,
                ..self.link
            }
            .validate()?;
        }
        self.grid.validate()
    }

    /// Reads the worker cap from [`THREADS_ENV`]; unset or empty means no cap.
    pub fn threads_from_env() -> Result<Option<usize>> {
        match std::env::var(THREADS_ENV) {
            Ok(v) if v.trim().is_empty() => Ok(None),
            Ok(v) => match v.trim().parse::<usize>() {
                Ok(n) if n > 0 => Ok(Some(n)),
                _ => Err(Error::Config(format!(
                    "{THREADS_ENV}=`{v}` is not a positive integer"
                ))),
            },
            Err(_) => Ok(None),
        }
    }
}

/// Seed of trial `trial` at sweep point `point`. The point index is shifted
/// clear of the trial index so distinct pairs never collide.
pub fn trial_seed(base_seed: u64, point: usize, trial: usize) -> u64 {
    base_seed ^ ((point as u64) << 32) ^ trial as u64
}

/// One CSV row per SNR point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub snr_db: f64,
    pub ber: f64,
    pub fidelity: f64,
    pub consistency: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub mcc: f64,
    /// Empty when the sent decisions at this point are all one class.
    pub auc: Option<f64>,
    pub mean_payload_octets: f64,
    pub frames_per_payload: f64,
}

/// Encodes every frame of every sequence, in corpus order.
pub fn encode_corpus(corpus: &[GraphSequence], o: &RelationOntology) -> Result<Vec<Vec<Payload>>> {
    corpus
        .iter()
        .enumerate()
        .map(|(s, seq)| {
            seq.frames
                .iter()
                .enumerate()
                .map(|(k, g)| {
                    encode_frame(g, o)
                        .map_err(|e| Error::InvalidGraph(format!("sequence {s} frame {k}: {e}")))
                })
                .collect()
        })
        .collect()
}

struct TrialOutcome {
    bit_errors: u64,
    bits: u64,
    fidelity_sum: f64,
    frames: usize,
    payload_octets: usize,
    frames_required: usize,
    verdicts: (RiskVerdict, RiskVerdict),
}

fn placeholder(o: &RelationOntology) -> SceneGraph {
    SceneGraph::from_parts(
        o.digest(),
        vec![SceneNode::new(vec![0.0; o.num_attributes()])],
        Default::default(),
    )
}

#[allow(clippy::too_many_arguments)]
fn run_trial(
    seq: &GraphSequence,
    payloads: &[Payload],
    snr_db: f64,
    seed: u64,
    cfg: &SweepConfig,
    o: &RelationOntology,
    risk: &RiskParams,
    sent_verdict: RiskVerdict,
) -> Result<TrialOutcome> {
    let mut frame_seeds = SplitMix64::new(seed);
    let mut out = TrialOutcome {
        bit_errors: 0,
        bits: 0,
        fidelity_sum: 0.0,
        frames: 0,
        payload_octets: 0,
        frames_required: 0,
        verdicts: (sent_verdict, sent_verdict),
    };
    let mut received = Vec::with_capacity(payloads.len());
    for (g, p) in seq.frames.iter().zip(payloads) {
        let link = LinkConfig {
            snr_db,
            seed: frame_seeds.next_u64(),
            ..cfg.link
        };
        let tx = transmit(p.as_bytes(), &link)?;
        out.bit_errors += tx.bit_errors;
        out.bits += tx.bits;
        out.payload_octets += p.len();
        out.frames_required += frames_required(p.len(), &cfg.grid);
        let decoded = decode_frame(&tx.received, o, cfg.repair)
            .ok()
            .map(|d| d.graph);
        out.fidelity_sum += semantic_fidelity(g, decoded.as_ref(), o, &cfg.tolerance)?.fidelity;
        out.frames += 1;
        received.push(decoded.unwrap_or_else(|| placeholder(o)));
    }
    out.verdicts.1 = assess_frames(&received, risk)?;
    Ok(out)
}

fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Runs the end-to-end sweep. Trial `t` transmits sequence `t mod |corpus|`.
/// Output depends only on the inputs, never on the worker count.
pub fn run_sweep(
    cfg: &SweepConfig,
    corpus: &[GraphSequence],
    o: &RelationOntology,
    risk: &RiskParams,
) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::DegenerateInput(
            "sweep needs a nonempty scene corpus".into(),
        ));
    }
    let payloads = encode_corpus(corpus, o)?;
    let sent_verdicts = corpus
        .iter()
        .map(|s| assess_frames(&s.frames, risk))
        .collect::<Result<Vec<_>>>()?;

    let jobs: Vec<(usize, usize)> = (0..cfg.snr_points.len())
        .flat_map(|p| (0..cfg.trials_per_point).map(move |t| (p, t)))
        .collect();
    let outcomes: Vec<TrialOutcome> = with_pool(cfg.threads, || {
        jobs.par_iter()
            .map(|&(p, t)| {
                let s = t % corpus.len();
                run_trial(
                    &corpus[s],
                    &payloads[s],
                    cfg.snr_points[p],
                    trial_seed(cfg.base_seed, p, t),
                    cfg,
                    o,
                    risk,
                    sent_verdicts[s],
                )
            })
            .collect::<Result<Vec<_>>>()
    })??;

    Ok(outcomes
        .chunks(cfg.trials_per_point)
        .zip(&cfg.snr_points)
        .map(|(trials, &snr_db)| aggregate(snr_db, trials))
        .collect())
}

fn aggregate(snr_db: f64, trials: &[TrialOutcome]) -> SweepRow {
    let sum = |f: fn(&TrialOutcome) -> f64| trials.iter().map(f).sum::<f64>();
    let bits = sum(|t| t.bits as f64);
    let frames = sum(|t| t.frames as f64);
    let per_frame = |v: f64| if frames > 0.0 { v / frames } else { 0.0 };
    let verdicts: Vec<_> = trials.iter().map(|t| t.verdicts).collect();
    let report = consistency_from_verdicts(&verdicts);
    let m = classification_metrics(&report.counts);
    SweepRow {
        snr_db,
        ber: if bits > 0.0 {
            sum(|t| t.bit_errors as f64) / bits
        } else {
            0.0
        },
        fidelity: per_frame(sum(|t| t.fidelity_sum)),
        consistency: report.consistency,
        accuracy: m.accuracy,
        precision: m.precision,
        recall: m.recall,
        f1: m.f1,
        mcc: m.mcc,
        auc: report.auc,
        mean_payload_octets: per_frame(sum(|t| t.payload_octets as f64)),
        frames_per_payload: per_frame(sum(|t| t.frames_required as f64)),
    }
}

pub fn write_csv<W: io::Write>(rows: &[SweepRow], w: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    wtr.write_record(CSV_HEADER.split(','))?;
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush().map_err(|e| Error::io("flushing CSV output", e))
}

pub fn csv_string(rows: &[SweepRow]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Config(format!("non-UTF-8 CSV: {e}")))
}

/// Parses a results CSV. An empty input, or a header alone, yields no rows.
pub fn read_csv(text: &str) -> Result<Vec<SweepRow>> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header.join(",") != CSV_HEADER {
        return Err(Error::Parse {
            line: 1,
            msg: format!("unexpected CSV header `{}`", header.join(",")),
        });
    }
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// Size summary for an encoded corpus.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodeSummary {
    pub frames: usize,
    pub total_octets: u64,
    pub mean_octets: f64,
    pub raw_octets: u64,
    /// `(CR, reduction %)`; `None` with no frames.
    pub compression: Option<(f64, f64)>,
}

impl EncodeSummary {
    pub fn from_sizes(sizes: impl IntoIterator<Item = usize>) -> Self {
        let sizes: Vec<usize> = sizes.into_iter().collect();
        let frames = sizes.len();
        let total_octets = sizes.iter().map(|&s| s as u64).sum::<u64>();
        let raw_octets = raw_frame_octets(RAW_FRAME_WIDTH, RAW_FRAME_HEIGHT) * frames as u64;
        Self {
            frames,
            total_octets,
            mean_octets: if frames == 0 {
                0.0
            } else {
                total_octets as f64 / frames as f64
            },
            raw_octets,
            compression: compression_ratio(raw_octets as f64, total_octets as f64).ok(),
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "frames:               {}", self.frames);
        let _ = writeln!(out, "total encoded octets: {}", self.total_octets);
        let _ = writeln!(out, "mean octets/frame:    {:.1}", self.mean_octets);
        let _ = writeln!(out, "raw octets:           {}", self.raw_octets);
        match self.compression {
            Some((cr, red)) => {
                let _ = writeln!(out, "compression ratio:    {cr:.1}");
                let _ = writeln!(out, "reduction:            {red:.3} %");
            }
            None => out.push_str("compression ratio:    n/a\n"),
        }
        out
    }
}

/// Writes one `.gbsd` per frame as `seq<SSSS>_frame<KKK>.gbsd`.
pub fn write_payloads(out_dir: &Path, payloads: &[Vec<Payload>]) -> Result<EncodeSummary> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    for (s, seq) in payloads.iter().enumerate() {
        for (k, p) in seq.iter().enumerate() {
            let path = out_dir.join(format!("seq{s:04}_frame{k:03}.gbsd"));
            std::fs::write(&path, p.as_bytes())
                .map_err(|e| Error::io(path.display().to_string(), e))?;
        }
    }
    Ok(EncodeSummary::from_sizes(
        payloads.iter().flatten().map(Payload::len),
    ))
}

/// Human-readable byte count with decimal units.
pub fn format_size(octets: f64) -> String {
    const UNITS: [&str; 5] = ["B", "KB", "MB", "GB", "TB"];
    let mut v = octets;
    let mut u = 0;
    while v >= 1000.0 && u + 1 < UNITS.len() {
        v /= 1000.0;
        u += 1;
    }
    if u == 0 {
        format!("{v:.0} {}", UNITS[u])
    } else {
        format!("{v:.2} {}", UNITS[u])
    }
}

fn render_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &mut dyn Iterator<Item = &str>| {
        let parts: Vec<String> = cells
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| {
                if i == 0 {
                    format!("{c:<w$}")
                } else {
                    format!("{c:>w$}")
                }
            })
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&mut out, &mut header.iter().copied());
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    let _ = writeln!(out, "{}", rule.join("  "));
    for r in rows {
        line(&mut out, &mut r.iter().map(String::as_str));
    }
    out
}

/// Renders sweep rows as a metrics table followed by a size table with the
/// columns `Size`, `CR` and `Reduction (%)`.
pub fn render_report(rows: &[SweepRow]) -> String {
    if rows.is_empty() {
        return "no rows\n".into();
    }
    let fmt_snr = |s: f64| {
        if s.is_infinite() {
            "inf".to_string()
        } else {
            format!("{s:.1}")
        }
    };
    let metric_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                fmt_snr(r.snr_db),
                format!("{:.3e}", r.ber),
                format!("{:.4}", r.fidelity),
                format!("{:.4}", r.consistency),
                format!("{:.4}", r.accuracy),
                format!("{:.4}", r.precision),
                format!("{:.4}", r.recall),
                format!("{:.4}", r.f1),
                format!("{:.4}", r.mcc),
                r.auc.map_or_else(|| "n/a".into(), |a| format!("{a:.4}")),
            ]
        })
        .collect();
    let mut out = render_table(
        &[
            "SNR (dB)",
            "BER",
            "Fidelity",
            "Consistency",
            "Accuracy",
            "Precision",
            "Recall",
            "F1",
            "MCC",
            "AUC",
        ],
        &metric_rows,
    );
    out.push('\n');

    let raw = raw_frame_octets(RAW_FRAME_WIDTH, RAW_FRAME_HEIGHT) as f64;
    let payload = rows.iter().map(|r| r.mean_payload_octets).sum::<f64>() / rows.len() as f64;
    let mut size_rows = vec![vec![
        "Raw RGB (24 bits)".to_string(),
        format_size(raw),
        "1".to_string(),
        "0.0 %".to_string(),
    ]];
    size_rows.push(match compression_ratio(raw, payload) {
        Ok((cr, red)) => vec![
            "Scene-graph payload".to_string(),
            format_size(payload),
            format!("{cr:.0}"),
            format!("{red:.3} %"),
        ],
        Err(_) => vec![
            "Scene-graph payload".into(),
            format_size(payload),
            "n/a".into(),
            "n/a".into(),
        ],
    });
    out.push_str(&render_table(
        &["Method (per frame)", "Size", "CR", "Reduction (%)"],
        &size_rows,
    ));
    out
}
