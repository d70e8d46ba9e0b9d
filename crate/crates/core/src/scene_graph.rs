//! Scene-graph data model and construction from detected objects.
//!
//! Objects are projected to a bird's-eye-view (BEV) ground plane and related
//! pairwise by geometric predicates. BEV axes: `x` lateral (right positive),
//! `y` longitudinal (forward positive), both in meters.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::ontology::{AttributeKind, OntologyDigest, RelationId, RelationOntology};

pub const MAX_NODES: usize = 65_535;

/// Class ids used by the generator and the risk rule.
pub mod class {
    pub const EGO: u32 = 0;
    pub const CAR: u32 = 1;
    pub const TRUCK: u32 = 2;
    pub const MOTORCYCLE: u32 = 3;
    pub const LANE: u32 = 10;

    pub const VEHICLES: [u32; 3] = [CAR, TRUCK, MOTORCYCLE];
}

/// Axis-aligned pixel box `(u1, v1)`–`(u2, v2)`, `v` growing downwards.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundingBox {
    pub u1: f64,
    pub v1: f64,
    pub u2: f64,
    pub v2: f64,
}

impl BoundingBox {
    pub fn new(u1: f64, v1: f64, u2: f64, v2: f64) -> Self {
        Self { u1, v1, u2, v2 }
    }

    /// Ground contact point: bottom-center of the box.
    pub fn bottom_center(&self) -> (f64, f64) {
        ((self.u1 + self.u2) / 2.0, self.v2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FrameSize {
    pub width: u32,
    pub height: u32,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectedObject {
    pub class_id: u32,
    pub bbox: BoundingBox,
    /// m/s
    pub speed: f64,
}

impl DetectedObject {
    pub fn validate(&self, frame: Option<FrameSize>) -> Result<()> {
        let b = &self.bbox;
        if !(b.u1 < b.u2 && b.v1 < b.v2) {
            return Err(Error::Detection(format!("degenerate box {b:?}")));
        }
        if let Some(f) = frame {
            let inside = |c: f64, hi: u32| c >= 0.0 && c <= hi as f64;
            if !(inside(b.u1, f.width)
                && inside(b.u2, f.width)
                && inside(b.v1, f.height)
                && inside(b.v2, f.height))
            {
                return Err(Error::Detection(format!(
                    "box {b:?} outside {}x{} frame",
                    f.width, f.height
                )));
            }
        }
        Ok(())
    }
}

/// Image-plane to ground-plane projective transform.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Homography {
    h: Matrix3<f64>,
}

impl Homography {
    /// Row-major 3×3 matrix; rejects (near-)singular inputs.
    pub fn new(row_major: [f64; 9]) -> Result<Self> {
        if row_major.iter().any(|v| !v.is_finite()) {
            return Err(Error::Homography("non-finite entry".into()));
        }
        let h = Matrix3::from_row_slice(&row_major);
        let det = h.determinant();
        if det.abs() <= 1e-12 {
            return Err(Error::Homography(format!("singular (det = {det:e})")));
        }
        Ok(Self { h })
    }

    pub fn identity() -> Self {
        Self {
            h: Matrix3::identity(),
        }
    }

    /// Nine whitespace-separated reals, row-major.
    pub fn parse(text: &str) -> Result<Self> {
        let values: Vec<f64> = text
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| Error::Homography(format!("bad number `{t}`")))
            })
            .collect::<Result<_>>()?;
        let arr: [f64; 9] = values.try_into().map_err(|v: Vec<f64>| {
            Error::Homography(format!("expected 9 values, got {}", v.len()))
        })?;
        Self::new(arr)
    }

    pub fn load_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::parse(&text)
    }

    pub fn inverse(&self) -> Self {
        Self {
            h: self
                .h
                .try_inverse()
                .expect("checked invertible at construction"),
        }
    }

    /// `H·H2` (apply `other` first).
    pub fn compose(&self, other: &Homography) -> Self {
        Self {
            h: self.h * other.h,
        }
    }

    /// Maps a pixel through the homography; fails when the point lies on or
    /// beyond the vanishing line (`|w| < 1e-9`).
    pub fn apply(&self, u: f64, v: f64) -> std::result::Result<(f64, f64), f64> {
        let p = self.h * Vector3::new(u, v, 1.0);
        if p.z.abs() < 1e-9 {
            return Err(p.z);
        }
        Ok((p.x / p.z, p.y / p.z))
    }
}

/// Projects the bottom-center of `bbox` to the ground plane.
pub fn ipm_project(bbox: &BoundingBox, h: &Homography) -> Result<(f64, f64)> {
    let (u, v) = bbox.bottom_center();
    h.apply(u, v).map_err(|w| Error::Horizon { object: 0, w })
}

/// An object positioned on the BEV plane; the input to relation inference.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BevObject {
    pub class_id: u32,
    pub x: f64,
    pub y: f64,
    pub speed: f64,
}

/// Geometric thresholds for relation inference. All inclusive.
#[derive(Clone, Debug, PartialEq)]
pub struct RelationParams {
    /// `is_near` radius (m).
    pub near_distance: f64,
    /// `very_near` radius (m).
    pub very_near_distance: f64,
    pub lane_width: f64,
    /// Longitudinal reach of the side relations (m).
    pub side_reach: f64,
    /// Longitudinal reach of `in_front_of` / `behind` (m).
    pub front_reach: f64,
    /// Speed excess required for `approaching` (m/s).
    pub approach_margin: f64,
    pub lane_classes: Vec<u32>,
}

impl Default for RelationParams {
    fn default() -> Self {
        Self {
            near_distance: 10.0,
            very_near_distance: 4.0,
            lane_width: 3.5,
            side_reach: 20.0,
            front_reach: 30.0,
            approach_margin: 0.5,
            lane_classes: vec![class::LANE],
        }
    }
}

impl RelationParams {
    pub fn is_lane(&self, class_id: u32) -> bool {
        self.lane_classes.contains(&class_id)
    }
}

/// Relation ids bound to each geometric predicate. A predicate whose
/// relation is missing from the ontology never fires.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PredicateIds {
    pub is_near: Option<RelationId>,
    pub very_near: Option<RelationId>,
    pub to_left_of: Option<RelationId>,
    pub to_right_of: Option<RelationId>,
    pub in_front_of: Option<RelationId>,
    pub behind: Option<RelationId>,
    pub is_in: Option<RelationId>,
    pub approaching: Option<RelationId>,
}

impl PredicateIds {
    pub fn from_ontology(o: &RelationOntology) -> Self {
        Self {
            is_near: o.relation_by_name("is_near"),
            very_near: o.relation_by_name("very_near"),
            to_left_of: o.relation_by_name("to_left_of"),
            to_right_of: o.relation_by_name("to_right_of"),
            in_front_of: o.relation_by_name("in_front_of"),
            behind: o.relation_by_name("behind"),
            is_in: o.relation_by_name("is_in"),
            approaching: o.relation_by_name("approaching"),
        }
    }
}

/// Directed typed edge `(src, rel, dst)`. Ordering is `(src, rel, dst)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triplet {
    pub src: u16,
    pub rel: RelationId,
    pub dst: u16,
}

impl Triplet {
    pub fn new(src: usize, rel: RelationId, dst: usize) -> Self {
        Self {
            src: src as u16,
            rel,
            dst: dst as u16,
        }
    }
}

/// Pairwise relation inference over BEV objects.
///
/// Lane-class objects are regions, not point objects: they only appear as the
/// target of `is_in`. Output is sorted by `(src, rel, dst)`.
pub fn infer_relations(
    objects: &[BevObject],
    params: &RelationParams,
    ids: &PredicateIds,
) -> Vec<Triplet> {
    let mut out = BTreeSet::new();
    let half_lane = params.lane_width / 2.0;
    let mut emit = |rel: Option<RelationId>, src: usize, dst: usize| {
        if let Some(rel) = rel {
            out.insert(Triplet::new(src, rel, dst));
        }
    };

    for (i, a) in objects.iter().enumerate() {
        if params.is_lane(a.class_id) {
            continue;
        }
        for (j, b) in objects.iter().enumerate() {
            if i == j {
                continue;
            }
            let dx = b.x - a.x;
            let dy = b.y - a.y;
            if params.is_lane(b.class_id) {
                if dx.abs() <= half_lane {
                    emit(ids.is_in, i, j);
                }
                continue;
            }
            let dist = dx.hypot(dy);
            if dist <= params.near_distance {
                emit(ids.is_near, i, j);
                if b.speed > a.speed + params.approach_margin {
                    emit(ids.approaching, j, i);
                }
            }
            if dist <= params.very_near_distance {
                emit(ids.very_near, i, j);
            }
            if dy.abs() <= params.side_reach {
                if dx <= -half_lane {
                    emit(ids.to_left_of, j, i);
                } else if dx >= half_lane {
                    emit(ids.to_right_of, j, i);
                }
            }
            if dx.abs() <= half_lane {
                if dy > 0.0 && dy <= params.front_reach {
                    emit(ids.in_front_of, j, i);
                } else if dy < 0.0 && -dy <= params.front_reach {
                    emit(ids.behind, j, i);
                }
            }
        }
    }
    out.into_iter().collect()
}

/// Which feature columns hold the quantities relation inference needs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FeatureLayout {
    pub d: usize,
    pub bev_x: usize,
    pub bev_y: usize,
    pub speed: Option<usize>,
}

impl FeatureLayout {
    /// Attribute 0 must be the categorical `class`; `bev_x` and `bev_y` must
    /// be present, `speed` is optional.
    pub fn from_ontology(o: &RelationOntology) -> Result<Self> {
        let attrs = o.attributes();
        match attrs.first() {
            Some(a) if a.kind == AttributeKind::Categorical => {}
            _ => {
                return Err(Error::OntologyMismatch(
                    "attribute 0 must be a categorical class attribute".into(),
                ))
            }
        }
        let find = |name: &str| o.attribute_by_name(name).map(|a| a.index as usize);
        let bev_x = find("bev_x")
            .ok_or_else(|| Error::OntologyMismatch("ontology lacks `bev_x`".into()))?;
        let bev_y = find("bev_y")
            .ok_or_else(|| Error::OntologyMismatch("ontology lacks `bev_y`".into()))?;
        Ok(Self {
            d: attrs.len(),
            bev_x,
            bev_y,
            speed: find("speed"),
        })
    }

    pub fn features(&self, obj: &BevObject) -> Vec<f64> {
        let mut f = vec![0.0; self.d];
        f[0] = obj.class_id as f64;
        f[self.bev_x] = obj.x;
        f[self.bev_y] = obj.y;
        if let Some(s) = self.speed {
            f[s] = obj.speed;
        }
        f
    }

    pub fn object(&self, node: &SceneNode) -> BevObject {
        BevObject {
            class_id: node.class_id(),
            x: node.features[self.bev_x],
            y: node.features[self.bev_y],
            speed: self.speed.map_or(0.0, |s| node.features[s]),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneNode {
    /// One value per ontology attribute, in attribute-index order.
    pub features: Vec<f64>,
}

impl SceneNode {
    pub fn new(features: Vec<f64>) -> Self {
        Self { features }
    }

    /// Attribute 0 rounded to the nearest class id; negative or non-finite
    /// values map to `u32::MAX`.
    pub fn class_id(&self) -> u32 {
        match self.features.first() {
            Some(v) if v.is_finite() && *v > -0.5 && *v < u32::MAX as f64 => v.round() as u32,
            _ => u32::MAX,
        }
    }
}

/// Directed multi-relational graph; node 0 is the ego vehicle.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneGraph {
    ontology: OntologyDigest,
    nodes: Vec<SceneNode>,
    edges: BTreeSet<Triplet>,
}

impl SceneGraph {
    /// Validates node count, feature widths and edges against `o`.
    pub fn new(
        o: &RelationOntology,
        nodes: Vec<SceneNode>,
        edges: impl IntoIterator<Item = Triplet>,
    ) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidGraph(
                "a scene graph needs the ego node".into(),
            ));
        }
        if nodes.len() > MAX_NODES {
            return Err(Error::Capacity(format!(
                "{} nodes > {MAX_NODES}",
                nodes.len()
            )));
        }
        let d = o.num_attributes();
        if let Some((i, n)) = nodes
            .iter()
            .enumerate()
            .find(|(_, n)| n.features.len() != d)
        {
            return Err(Error::Shape(format!(
                "node {i} has {} features, ontology declares {d}",
                n.features.len()
            )));
        }
        let mut set = BTreeSet::new();
        for t in edges {
            if !o.contains_relation(t.rel) {
                return Err(Error::OntologyMismatch(format!(
                    "relation {} not in ontology (|R| = {})",
                    t.rel,
                    o.num_relations()
                )));
            }
            if t.src == t.dst {
                return Err(Error::InvalidGraph(format!("self loop on node {}", t.src)));
            }
            if t.src as usize >= nodes.len() || t.dst as usize >= nodes.len() {
                return Err(Error::InvalidGraph(format!("edge {t:?} out of range")));
            }
            if !set.insert(t) {
                return Err(Error::InvalidGraph(format!("duplicate triplet {t:?}")));
            }
        }
        Ok(Self {
            ontology: o.digest(),
            nodes,
            edges: set,
        })
    }

    /// Trusted constructor for decoder output, which satisfies the invariants
    /// by construction.
    pub(crate) fn from_parts(
        ontology: OntologyDigest,
        nodes: Vec<SceneNode>,
        edges: BTreeSet<Triplet>,
    ) -> Self {
        Self {
            ontology,
            nodes,
            edges,
        }
    }

    pub fn ontology_digest(&self) -> OntologyDigest {
        self.ontology
    }

    pub fn nodes(&self) -> &[SceneNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &BTreeSet<Triplet> {
        &self.edges
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn contains(&self, t: &Triplet) -> bool {
        self.edges.contains(t)
    }

    pub fn remove_edge(&mut self, t: &Triplet) -> bool {
        self.edges.remove(t)
    }

    /// Distinct relation ids present among the edges, ascending.
    pub fn active_relations(&self) -> BTreeSet<RelationId> {
        self.edges.iter().map(|t| t.rel).collect()
    }

    /// Human-readable dump used by golden fixtures.
    pub fn dump(&self, o: &RelationOntology) -> String {
        let mut out = String::new();
        for (i, n) in self.nodes.iter().enumerate() {
            let _ = write!(out, "node {i}");
            for v in &n.features {
                let _ = write!(out, " {v:.6}");
            }
            out.push('\n');
        }
        for t in &self.edges {
            let name = o
                .relation(t.rel)
                .map_or_else(|| t.rel.to_string(), |r| r.name.clone());
            let _ = writeln!(out, "edge {} {} {}", t.src, name, t.dst);
        }
        out
    }
}

/// Builds a graph from BEV objects (object 0 is the ego).
pub fn build_from_bev(
    objects: &[BevObject],
    o: &RelationOntology,
    params: &RelationParams,
) -> Result<SceneGraph> {
    if objects.is_empty() {
        return Err(Error::InvalidGraph(
            "no objects (the ego is required)".into(),
        ));
    }
    let layout = FeatureLayout::from_ontology(o)?;
    let ids = PredicateIds::from_ontology(o);
    let nodes = objects
        .iter()
        .map(|obj| SceneNode::new(layout.features(obj)))
        .collect();
    let edges = infer_relations(objects, params, &ids);
    SceneGraph::new(o, nodes, edges)
}

/// Projects detections to the ground plane and relates them.
pub fn build_scene_graph(
    objects: &[DetectedObject],
    h: &Homography,
    o: &RelationOntology,
    params: &RelationParams,
) -> Result<SceneGraph> {
    let bev = objects
        .iter()
        .enumerate()
        .map(|(i, obj)| {
            obj.validate(None)?;
            let (x, y) = ipm_project(&obj.bbox, h).map_err(|e| match e {
                Error::Horizon { w, .. } => Error::Horizon { object: i, w },
                other => other,
            })?;
            Ok(BevObject {
                class_id: obj.class_id,
                x,
                y,
                speed: obj.speed,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    build_from_bev(&bev, o, params)
}

/// Reads a detections file: one scene per line, objects separated by `;`,
/// each object `class,u1,v1,u2,v2[,speed]`. Blank and `#` lines are skipped.
pub fn read_detections(text: &str, frame: Option<FrameSize>) -> Result<Vec<Vec<DetectedObject>>> {
    let mut scenes = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let perr = |msg: String| Error::Parse { line: idx + 1, msg };
        let mut scene = Vec::new();
        for rec in line.split(';').map(str::trim).filter(|r| !r.is_empty()) {
            let f: Vec<&str> = rec.split(',').map(str::trim).collect();
            if f.len() != 5 && f.len() != 6 {
                return Err(perr(format!("object `{rec}` needs 5 or 6 fields")));
            }
            let class_id: u32 = f[0]
                .parse()
                .map_err(|_| perr(format!("bad class `{}`", f[0])))?;
            let num = |s: &str| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| perr(format!("bad number `{s}`")))
            };
            let obj = DetectedObject {
                class_id,
                bbox: BoundingBox::new(num(f[1])?, num(f[2])?, num(f[3])?, num(f[4])?),
                speed: if f.len() == 6 { num(f[5])? } else { 0.0 },
            };
            obj.validate(frame).map_err(|e| perr(e.to_string()))?;
            scene.push(obj);
        }
        if scene.is_empty() {
            return Err(perr("scene has no objects".into()));
        }
        scenes.push(scene);
    }
    Ok(scenes)
}
