//! Synthetic lane-change scenario generator and the `.scenes` text format.
//!
//! The generator only places objects; every edge comes from
//! [`infer_relations`](crate::scene_graph::infer_relations).

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::ontology::{RelationId, RelationOntology};
use crate::rng::SplitMix64;
use crate::scene_graph::{
    build_from_bev, class, BevObject, FeatureLayout, RelationParams, SceneGraph, SceneNode, Triplet,
};
use crate::task::{GraphSequence, RiskLabel};

/// Attempts per vehicle before placement is declared infeasible.
const PLACEMENT_ATTEMPTS: usize = 10_000;
/// Minimum longitudinal gap between two vehicles sharing a lane (m).
const MIN_LANE_GAP: f64 = 8.0;
/// Margin applied to the `is_near` radius for vehicles in safe positions.
const SAFE_MARGIN: f64 = 1.2;

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSpec {
    pub seed: u64,
    pub num_sequences: usize,
    pub frames_per_sequence: usize,
    /// Inclusive bounds on non-ego vehicles per sequence.
    pub vehicles_range: (usize, usize),
    pub risky_fraction: f64,
    pub lane_count: usize,
    /// Emit one node per lane centre line.
    pub lane_nodes: bool,
    /// Longitudinal spawn interval `[-spawn_range, spawn_range]` (m).
    pub spawn_range: f64,
    /// Time between frames (s).
    pub frame_interval: f64,
    /// Frames the forced vehicle of a risky sequence spends very near the ego.
    pub min_close_frames: usize,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            seed: 42,
            num_sequences: 100,
            frames_per_sequence: 10,
            vehicles_range: (2, 8),
            risky_fraction: 0.3,
            lane_count: 3,
            lane_nodes: false,
            spawn_range: 350.0,
            frame_interval: 0.5,
            min_close_frames: 2,
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self, params: &RelationParams) -> Result<()> {
        let (lo, hi) = self.vehicles_range;
        if !(0.0..=1.0).contains(&self.risky_fraction) {
            return Err(Error::Spec(format!(
                "risky_fraction {} outside [0, 1]",
                self.risky_fraction
            )));
        }
        if lo > hi {
            return Err(Error::Spec(format!("empty vehicles_range {lo}..{hi}")));
        }
        if self.frames_per_sequence == 0 || self.lane_count == 0 {
            return Err(Error::Spec(
                "frames_per_sequence and lane_count must be positive".into(),
            ));
        }
        if !(self.frame_interval.is_finite() && self.frame_interval > 0.0) {
            return Err(Error::Spec("frame_interval must be positive".into()));
        }
        if self.risky_fraction > 0.0 {
            if lo == 0 {
                return Err(Error::Spec(
                    "risky sequences need at least one vehicle".into(),
                ));
            }
            if self.min_close_frames == 0 || self.min_close_frames > self.frames_per_sequence {
                return Err(Error::Spec(format!(
                    "min_close_frames {} not in 1..={}",
                    self.min_close_frames, self.frames_per_sequence
                )));
            }
        }
        let safe = params.near_distance * SAFE_MARGIN;
        let usable = self.spawn_range - safe;
        if !(usable.is_finite() && usable > 0.0) {
            return Err(Error::Spec(format!(
                "spawn_range {} does not exceed the safe radius {safe}",
                self.spawn_range
            )));
        }
        // Two disjoint intervals per lane, each holding floor(len/gap)+1 vehicles.
        let per_side = (usable / MIN_LANE_GAP).floor() as usize + 1;
        let capacity = self.lane_count * 2 * per_side;
        if hi > capacity {
            return Err(Error::Spec(format!(
                "{hi} vehicles exceed lane capacity {capacity}"
            )));
        }
        if self.lane_count * (1 + self.lane_nodes as usize) + hi + 1 > crate::scene_graph::MAX_NODES
        {
            return Err(Error::Spec("too many nodes per frame".into()));
        }
        Ok(())
    }
}

/// Rounds to a 1/64 grid so values survive f32 and 6-decimal text exactly.
fn quantize(v: f64) -> f64 {
    (v * 64.0).round() / 64.0
}

#[derive(Clone, Copy, Debug)]
struct Track {
    class_id: u32,
    x: f64,
    y0: f64,
    /// Speed relative to the ego (m/s).
    rel_speed: f64,
}

impl Track {
    fn y(&self, k: usize, dt: f64) -> f64 {
        quantize(self.y0 + self.rel_speed * dt * k as f64)
    }
}

fn lane_centre(lane: usize, ego_lane: usize, width: f64) -> f64 {
    (lane as f64 - ego_lane as f64) * width
}

fn draw_class(rng: &mut SplitMix64) -> u32 {
    let u = rng.next_f64();
    if u < 0.7 {
        class::CAR
    } else if u < 0.9 {
        class::TRUCK
    } else {
        class::MOTORCYCLE
    }
}

/// Forced trajectory that stays within the `very_near` radius of the ego for
/// `min_close_frames` consecutive frames. Uses an adjacent lane when one
/// exists, otherwise the ego lane ahead of the ego.
fn risky_track(
    rng: &mut SplitMix64,
    spec: &ScenarioSpec,
    params: &RelationParams,
    ego_lane: usize,
) -> (usize, Track) {
    let d_very = params.very_near_distance;
    let (lane, y_centre, slack) = if spec.lane_count > 1 {
        let up = ego_lane + 1 < spec.lane_count && (ego_lane == 0 || rng.next_f64() < 0.5);
        let lane = if up { ego_lane + 1 } else { ego_lane - 1 };
        let x = lane_centre(lane, ego_lane, params.lane_width);
        (lane, 0.0, (d_very * d_very - x * x).max(0.0).sqrt())
    } else {
        (ego_lane, 0.75 * d_very, 0.25 * d_very)
    };
    // Start offset and drift each use half of a quarter of the slack.
    let band = 0.25 * slack;
    let span = spec.min_close_frames.saturating_sub(1).max(1) as f64 * spec.frame_interval;
    let rel_speed = quantize(rng.uniform(-0.5 * band, 0.5 * band) / span);
    let start =
        rng.range_inclusive(0, (spec.frames_per_sequence - spec.min_close_frames) as u64) as usize;
    let y_start = y_centre + rng.uniform(-0.5 * band, 0.5 * band);
    let y0 = quantize(y_start - rel_speed * spec.frame_interval * start as f64);
    let track = Track {
        class_id: draw_class(rng),
        x: lane_centre(lane, ego_lane, params.lane_width),
        y0,
        rel_speed,
    };
    (lane, track)
}

fn place_safe(
    rng: &mut SplitMix64,
    spec: &ScenarioSpec,
    params: &RelationParams,
    ego_lane: usize,
    lane_flow: &[f64],
    placed: &[(usize, Track)],
) -> Result<(usize, Track)> {
    let safe = params.near_distance * SAFE_MARGIN;
    let frames = spec.frames_per_sequence;
    let dt = spec.frame_interval;
    for _ in 0..PLACEMENT_ATTEMPTS {
        let lane = rng.range_inclusive(0, spec.lane_count as u64 - 1) as usize;
        let x = lane_centre(lane, ego_lane, params.lane_width);
        let y0 = quantize(rng.uniform(-spec.spawn_range, spec.spawn_range));
        let rel_speed = quantize(lane_flow[lane] + rng.uniform(-0.5, 0.5));
        let t = Track {
            class_id: class::CAR,
            x,
            y0,
            rel_speed,
        };
        let clear_of_ego = (0..frames).all(|k| x.hypot(t.y(k, dt)) > safe);
        let clear_of_others = placed
            .iter()
            .filter(|(l, _)| *l == lane)
            .all(|(_, o)| (0..frames).all(|k| (t.y(k, dt) - o.y(k, dt)).abs() >= MIN_LANE_GAP));
        if clear_of_ego && clear_of_others {
            return Ok((
                lane,
                Track {
                    class_id: draw_class(rng),
                    ..t
                },
            ));
        }
    }
    Err(Error::Spec(format!(
        "could not place vehicle {} after {PLACEMENT_ATTEMPTS} attempts",
        placed.len()
    )))
}

fn generate_one(
    index: usize,
    spec: &ScenarioSpec,
    o: &RelationOntology,
    params: &RelationParams,
) -> Result<GraphSequence> {
    let mut rng = SplitMix64::new(spec.seed ^ index as u64);
    let ego_lane = (spec.lane_count - 1) / 2;
    let risky = rng.next_f64() < spec.risky_fraction;
    let (lo, hi) = spec.vehicles_range;
    let count = rng.range_inclusive(lo as u64, hi as u64) as usize;
    let ego_speed = quantize(rng.uniform(8.0, 16.0));
    let lane_flow: Vec<f64> = (0..spec.lane_count)
        .map(|_| rng.uniform(-2.0, 2.0))
        .collect();

    let mut placed: Vec<(usize, Track)> = Vec::with_capacity(count);
    if risky {
        placed.push(risky_track(&mut rng, spec, params, ego_lane));
    }
    while placed.len() < count {
        let t = place_safe(&mut rng, spec, params, ego_lane, &lane_flow, &placed)?;
        placed.push(t);
    }

    let dt = spec.frame_interval;
    let frames = (0..spec.frames_per_sequence)
        .map(|k| {
            let mut objects = Vec::with_capacity(1 + count + spec.lane_count);
            objects.push(BevObject {
                class_id: class::EGO,
                x: 0.0,
                y: 0.0,
                speed: ego_speed,
            });
            objects.extend(placed.iter().map(|(_, t)| BevObject {
                class_id: t.class_id,
                x: t.x,
                y: t.y(k, dt),
                speed: quantize(ego_speed + t.rel_speed),
            }));
            if spec.lane_nodes {
                objects.extend((0..spec.lane_count).map(|l| BevObject {
                    class_id: class::LANE,
                    x: lane_centre(l, ego_lane, params.lane_width),
                    y: 0.0,
                    speed: 0.0,
                }));
            }
            build_from_bev(&objects, o, params)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GraphSequence {
        frames,
        label: Some(if risky {
            RiskLabel::Risky
        } else {
            RiskLabel::Safe
        }),
    })
}

/// Generates `spec.num_sequences` labelled sequences; fully determined by
/// `spec.seed`.
pub fn generate(
    spec: &ScenarioSpec,
    o: &RelationOntology,
    params: &RelationParams,
) -> Result<Vec<GraphSequence>> {
    spec.validate(params)?;
    (0..spec.num_sequences)
        .map(|i| generate_one(i, spec, o, params))
        .collect()
}

fn text_layout(o: &RelationOntology) -> Result<FeatureLayout> {
    let layout = FeatureLayout::from_ontology(o)?;
    if layout.speed.is_none() || layout.d != 4 {
        return Err(Error::OntologyMismatch(
            "scene files need exactly class, bev_x, bev_y and speed attributes".into(),
        ));
    }
    Ok(layout)
}

/// Renders sequences in the `.scenes` grammar.
pub fn write_scenes(seqs: &[GraphSequence], o: &RelationOntology) -> Result<String> {
    let layout = text_layout(o)?;
    let mut out = String::new();
    for (id, s) in seqs.iter().enumerate() {
        if let Some(label) = s.label {
            let _ = writeln!(out, "seq {id} label {label}");
        }
        for (k, g) in s.frames.iter().enumerate() {
            if g.ontology_digest() != o.digest() {
                return Err(Error::OntologyMismatch(format!(
                    "sequence {id} frame {k} built against another ontology"
                )));
            }
            let _ = write!(out, "seq {id} frame {k} |");
            for (i, n) in g.nodes().iter().enumerate() {
                let b = layout.object(n);
                let _ = write!(
                    out,
                    " {i}:{}:{:.6}:{:.6}:{:.6}",
                    b.class_id, b.x, b.y, b.speed
                );
            }
            out.push_str(" |");
            for t in g.edges() {
                let _ = write!(out, " {}:{}:{}", t.src, t.rel, t.dst);
            }
            out.push('\n');
        }
    }
    Ok(out)
}

pub fn write_scenes_file(
    path: impl AsRef<Path>,
    seqs: &[GraphSequence],
    o: &RelationOntology,
) -> Result<()> {
    let path = path.as_ref();
    let text = write_scenes(seqs, o)?;
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_num<T: std::str::FromStr>(s: &str, line: usize, what: &str) -> Result<T> {
    s.parse()
        .map_err(|_| parse_err(line, format!("bad {what} `{s}`")))
}

/// Parses the `.scenes` grammar. Line numbers in errors are 1-based.
pub fn read_scenes(text: &str, o: &RelationOntology) -> Result<Vec<GraphSequence>> {
    let layout = text_layout(o)?;
    let mut seqs: Vec<GraphSequence> = Vec::new();
    let lines: Vec<&str> = text.split('\n').collect();
    let last = if text.ends_with('\n') {
        lines.len() - 1
    } else {
        lines.len()
    };
    for (idx, raw) in lines[..last].iter().enumerate() {
        let ln = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.splitn(2, '|');
        let head: Vec<&str> = parts.next().unwrap_or("").split_whitespace().collect();
        let rest = parts.next();
        if head.len() < 4 || head[0] != "seq" {
            return Err(parse_err(
                ln,
                "expected `seq <id> frame <k> | ...` or `seq <id> label <l>`",
            ));
        }
        let id: usize = parse_num(head[1], ln, "sequence id")?;
        if id != seqs.len() && id + 1 != seqs.len() {
            return Err(parse_err(ln, format!("sequence id {id} out of order")));
        }
        if id == seqs.len() {
            seqs.push(GraphSequence {
                frames: Vec::new(),
                label: None,
            });
        }
        let seq = &mut seqs[id];
        match head[2] {
            "label" => {
                if head.len() != 4
                    || rest.is_some()
                    || seq.label.is_some()
                    || !seq.frames.is_empty()
                {
                    return Err(parse_err(ln, "misplaced label line"));
                }
                seq.label = Some(head[3].parse().map_err(|e: String| parse_err(ln, e))?);
            }
            "frame" => {
                if head.len() != 4 {
                    return Err(parse_err(ln, "trailing tokens before `|`"));
                }
                let k: usize = parse_num(head[3], ln, "frame index")?;
                if k != seq.frames.len() {
                    return Err(parse_err(ln, format!("frame {k} out of order")));
                }
                let rest = rest.ok_or_else(|| parse_err(ln, "missing node section"))?;
                let mut sections = rest.split('|');
                let node_part = sections.next().unwrap_or("");
                let edge_part = sections
                    .next()
                    .ok_or_else(|| parse_err(ln, "missing edge section"))?;
                if sections.next().is_some() {
                    return Err(parse_err(ln, "too many `|` sections"));
                }
                let mut nodes = Vec::new();
                for (i, rec) in node_part.split_whitespace().enumerate() {
                    let f: Vec<&str> = rec.split(':').collect();
                    if f.len() != 5 {
                        return Err(parse_err(ln, format!("node record `{rec}` needs 5 fields")));
                    }
                    let idx: usize = parse_num(f[0], ln, "node index")?;
                    if idx != i {
                        return Err(parse_err(ln, format!("node index {idx}, expected {i}")));
                    }
                    let class_id: u32 = parse_num(f[1], ln, "class")?;
                    let real = |s: &str, what: &str| -> Result<f64> {
                        let v: f64 = parse_num(s, ln, what)?;
                        if v.is_finite() {
                            Ok(v)
                        } else {
                            Err(parse_err(ln, format!("non-finite {what}")))
                        }
                    };
                    let obj = BevObject {
                        class_id,
                        x: real(f[2], "x")?,
                        y: real(f[3], "y")?,
                        speed: real(f[4], "speed")?,
                    };
                    nodes.push(SceneNode::new(layout.features(&obj)));
                }
                let mut edges = Vec::new();
                for rec in edge_part.split_whitespace() {
                    let f: Vec<&str> = rec.split(':').collect();
                    if f.len() != 3 {
                        return Err(parse_err(ln, format!("edge `{rec}` needs src:rel:dst")));
                    }
                    let src: u16 = parse_num(f[0], ln, "edge source")?;
                    let rel: u8 = parse_num(f[1], ln, "relation id")?;
                    let dst: u16 = parse_num(f[2], ln, "edge target")?;
                    let rel = RelationId::new(rel)
                        .ok_or_else(|| parse_err(ln, "relation id 0 is reserved for no edge"))?;
                    edges.push(Triplet::new(src as usize, rel, dst as usize));
                }
                let g =
                    SceneGraph::new(o, nodes, edges).map_err(|e| parse_err(ln, e.to_string()))?;
                seq.frames.push(g);
            }
            other => return Err(parse_err(ln, format!("unknown record kind `{other}`"))),
        }
    }
    if !text.is_empty() && !text.ends_with('\n') {
        return Err(parse_err(last, "truncated final line (missing newline)"));
    }
    if let Some((id, _)) = seqs.iter().enumerate().find(|(_, s)| s.frames.is_empty()) {
        return Err(parse_err(last, format!("sequence {id} has no frames")));
    }
    Ok(seqs)
}

pub fn read_scenes_file(
    path: impl AsRef<Path>,
    o: &RelationOntology,
) -> Result<Vec<GraphSequence>> {
    let path = path.as_ref();
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    read_scenes(&text, o)
}
