//! Adjacency-tensor encoding, relation-based compression, self-describing
//! decompression and scene-graph regeneration.
//!
//! Each relation `r` owns an N×N slice whose nonzero entries all equal `r`.
//! Compression keeps only slices with at least one edge; because every kept
//! slice carries its own id in its entries, the receiver can put it back in
//! place without side information.

mod wire;

use std::collections::BTreeSet;
use std::fmt;

pub use wire::{
    parse, serialize, tail_pad_bits, Payload, FLAGS_PAD_MASK, HEADER_LEN, MAGIC, VERSION,
};

use crate::error::{Error, Result};
use crate::ontology::{RelationId, RelationOntology};
use crate::scene_graph::{SceneGraph, SceneNode, Triplet};

/// `|R|` stacked N×N slices, entries in `{0, r}` for slice `r`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdjacencyTensor {
    n: usize,
    num_relations: usize,
    // slice-major: [r][i][j]
    data: Vec<u8>,
}

impl AdjacencyTensor {
    pub fn zeros(n: usize, num_relations: usize) -> Self {
        Self {
            n,
            num_relations,
            data: vec![0; n * n * num_relations],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_relations(&self) -> usize {
        self.num_relations
    }

    pub fn slice(&self, rel: RelationId) -> &[u8] {
        let nn = self.n * self.n;
        &self.data[rel.slot() * nn..(rel.slot() + 1) * nn]
    }

    pub fn get(&self, rel: RelationId, i: usize, j: usize) -> u8 {
        self.slice(rel)[i * self.n + j]
    }

    /// Sets entry `(i, j)` of slice `rel` to `rel` (edge present).
    pub fn set_edge(&mut self, rel: RelationId, i: usize, j: usize) {
        let nn = self.n * self.n;
        self.data[rel.slot() * nn + i * self.n + j] = rel.get();
    }

    /// Checks the self-describing and zero-diagonal invariants.
    pub fn is_valid(&self) -> bool {
        (1..=self.num_relations).all(|r| {
            let rel = RelationId::new(r as u8).expect("r >= 1");
            let s = self.slice(rel);
            s.iter().all(|&v| v == 0 || v == rel.get())
                && (0..self.n).all(|i| s[i * self.n + i] == 0)
        })
    }

    /// Entry-wise `1[T > 0]`.
    pub fn binarize(&self) -> BinaryTensor {
        BinaryTensor {
            n: self.n,
            num_relations: self.num_relations,
            data: self.data.iter().map(|&v| u8::from(v > 0)).collect(),
        }
    }
}

/// The nonempty slices of an [`AdjacencyTensor`], in relation-id order.
///
/// A tensor produced by [`compress`] satisfies the self-describing
/// invariants; one produced by [`parse`] carries whatever arrived on the
/// wire and may not.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompressedTensor {
    n: usize,
    num_relations: usize,
    retained: Vec<Vec<u8>>,
}

impl CompressedTensor {
    /// Wraps raw matrices without checking them; each must hold `n²` entries.
    pub fn from_raw(n: usize, num_relations: usize, retained: Vec<Vec<u8>>) -> Result<Self> {
        if let Some(m) = retained.iter().position(|m| m.len() != n * n) {
            return Err(Error::Shape(format!(
                "matrix {m} has {} entries, expected {}",
                retained[m].len(),
                n * n
            )));
        }
        Ok(Self {
            n,
            num_relations,
            retained,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_relations(&self) -> usize {
        self.num_relations
    }

    pub fn retained(&self) -> &[Vec<u8>] {
        &self.retained
    }

    pub fn retained_mut(&mut self) -> &mut [Vec<u8>] {
        &mut self.retained
    }

    /// Relation id carried by each retained matrix when it is clean.
    pub fn relation_ids(&self) -> Vec<Option<RelationId>> {
        self.retained
            .iter()
            .map(|m| {
                let mut vals = m.iter().copied().filter(|&v| v > 0);
                let first = vals.next()?;
                if vals.all(|v| v == first) && first as usize <= self.num_relations {
                    RelationId::new(first)
                } else {
                    None
                }
            })
            .collect()
    }

    /// Every matrix nonempty and self-describing, ids strictly increasing.
    pub fn is_valid(&self) -> bool {
        let ids = self.relation_ids();
        ids.iter().all(Option::is_some)
            && ids.windows(2).all(|w| w[0] < w[1])
            && self
                .retained
                .iter()
                .all(|m| (0..self.n).all(|i| m[i * self.n + i] == 0))
    }

    /// Fraction of relation slices dropped: `1 − K/|R|`.
    pub fn slice_reduction(&self) -> f64 {
        if self.num_relations == 0 {
            return 0.0;
        }
        1.0 - self.retained.len() as f64 / self.num_relations as f64
    }
}

/// Decompressed tensor with entries in `{0, 1}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryTensor {
    n: usize,
    num_relations: usize,
    data: Vec<u8>,
}

impl BinaryTensor {
    pub fn zeros(n: usize, num_relations: usize) -> Self {
        Self {
            n,
            num_relations,
            data: vec![0; n * n * num_relations],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_relations(&self) -> usize {
        self.num_relations
    }

    pub fn get(&self, rel: RelationId, i: usize, j: usize) -> bool {
        let nn = self.n * self.n;
        self.data[rel.slot() * nn + i * self.n + j] != 0
    }

    pub fn set(&mut self, rel: RelationId, i: usize, j: usize, on: bool) {
        let nn = self.n * self.n;
        self.data[rel.slot() * nn + i * self.n + j] = u8::from(on);
    }

    fn slice_mut(&mut self, slot: usize) -> &mut [u8] {
        let nn = self.n * self.n;
        &mut self.data[slot * nn..(slot + 1) * nn]
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }
}

/// Row-major N×d node attribute matrix at wire precision.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_graph(g: &SceneGraph) -> Self {
        let rows = g.num_nodes();
        let cols = g.nodes().first().map_or(0, |n| n.features.len());
        let data = g
            .nodes()
            .iter()
            .flat_map(|n| n.features.iter().map(|&v| v as f32))
            .collect();
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn values(&self) -> &[f32] {
        &self.data
    }

    /// Bitwise equality (NaN-aware), for comparing received matrices.
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// What to do with received matrices that are not cleanly self-describing.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RepairPolicy {
    /// Take the most frequent in-range value as the relation id (ties go to
    /// the smaller id) and clear every entry that disagrees with it.
    #[default]
    Mode,
    /// Reject the payload.
    Strict,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DecodeWarning {
    /// Matrix placed at `relation` after clearing `cleared` inconsistent entries.
    Repaired {
        matrix: usize,
        relation: RelationId,
        cleared: usize,
    },
    /// No in-range nonzero entry survived; matrix ignored.
    Dropped { matrix: usize },
    /// Matrix resolved to a relation already filled by an earlier matrix.
    Overwrote { matrix: usize, relation: RelationId },
}

impl fmt::Display for DecodeWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DecodeWarning::Repaired {
                matrix,
                relation,
                cleared,
            } => write!(
                f,
                "matrix {matrix}: repaired as relation {relation} ({cleared} entries cleared)"
            ),
            DecodeWarning::Dropped { matrix } => {
                write!(f, "matrix {matrix}: no valid relation id, dropped")
            }
            DecodeWarning::Overwrote { matrix, relation } => {
                write!(f, "matrix {matrix}: overwrote earlier relation {relation}")
            }
        }
    }
}

/// Transcribes a graph's triplets into a self-describing tensor.
pub fn encode_tensor(g: &SceneGraph, o: &RelationOntology) -> Result<AdjacencyTensor> {
    if g.ontology_digest() != o.digest() {
        return Err(Error::OntologyMismatch(format!(
            "graph built against ontology {}, encoding with {}",
            g.ontology_digest(),
            o.digest()
        )));
    }
    let mut t = AdjacencyTensor::zeros(g.num_nodes(), o.num_relations());
    for e in g.edges() {
        if !o.contains_relation(e.rel) {
            return Err(Error::OntologyMismatch(format!(
                "relation {} outside 1..={}",
                e.rel,
                o.num_relations()
            )));
        }
        t.set_edge(e.rel, e.src as usize, e.dst as usize);
    }
    Ok(t)
}

/// Keeps exactly the slices that contain a nonzero entry, in id order.
pub fn compress(t: &AdjacencyTensor) -> CompressedTensor {
    let nn = t.n * t.n;
    let retained = t
        .data
        .chunks(nn.max(1))
        .take(t.num_relations)
        .filter(|slice| nn > 0 && slice.iter().any(|&v| v > 0))
        .map(<[u8]>::to_vec)
        .collect();
    CompressedTensor {
        n: t.n,
        num_relations: t.num_relations,
        retained,
    }
}

/// Places each received matrix at the slice named by its entries, then
/// binarizes. Corruption is handled per `policy`.
pub fn decompress(
    c: &CompressedTensor,
    policy: RepairPolicy,
) -> Result<(BinaryTensor, Vec<DecodeWarning>)> {
    let n = c.n;
    let num_rel = c.num_relations;
    let mut out = BinaryTensor::zeros(n, num_rel);
    let mut filled = vec![false; num_rel];
    let mut warnings = Vec::new();

    for (m, matrix) in c.retained.iter().enumerate() {
        let resolved = match policy {
            RepairPolicy::Strict => Some(resolve_strict(matrix, n, num_rel, m)?),
            RepairPolicy::Mode => {
                let r = resolve_mode(matrix, num_rel);
                if r.is_none() {
                    warnings.push(DecodeWarning::Dropped { matrix: m });
                }
                r
            }
        };
        let Some(rel) = resolved else { continue };

        let mut cleared = 0;
        let slice = out.slice_mut(rel.slot());
        for (idx, (&v, dst)) in matrix.iter().zip(slice.iter_mut()).enumerate() {
            let diagonal = idx / n.max(1) == idx % n.max(1);
            let keep = v == rel.get() && !diagonal;
            if v != 0 && !keep {
                cleared += 1;
            }
            *dst = u8::from(keep);
        }
        if cleared > 0 {
            warnings.push(DecodeWarning::Repaired {
                matrix: m,
                relation: rel,
                cleared,
            });
        }
        if std::mem::replace(&mut filled[rel.slot()], true) {
            warnings.push(DecodeWarning::Overwrote {
                matrix: m,
                relation: rel,
            });
        }
    }
    Ok((out, warnings))
}

fn resolve_strict(matrix: &[u8], n: usize, num_rel: usize, m: usize) -> Result<RelationId> {
    let err = |msg: String| Error::Decode { matrix: m, msg };
    let mut vals = matrix.iter().copied().filter(|&v| v > 0);
    let first = vals
        .next()
        .ok_or_else(|| err("matrix has no nonzero entry".into()))?;
    if let Some(other) = vals.find(|&v| v != first) {
        return Err(err(format!(
            "nonzero values not unique ({first} and {other})"
        )));
    }
    if first as usize > num_rel {
        return Err(err(format!("relation id {first} outside 1..={num_rel}")));
    }
    if (0..n).any(|i| matrix[i * n + i] != 0) {
        return Err(err("nonzero diagonal entry".into()));
    }
    Ok(RelationId::new(first).expect("nonzero"))
}

fn resolve_mode(matrix: &[u8], num_rel: usize) -> Option<RelationId> {
    let mut counts = [0usize; 256];
    for &v in matrix {
        counts[v as usize] += 1;
    }
    let mut best: Option<(usize, usize)> = None;
    for (r, &count) in counts.iter().enumerate().take(num_rel + 1).skip(1) {
        if count > 0 && best.is_none_or(|(_, c)| count > c) {
            best = Some((r, count));
        }
    }
    best.and_then(|(r, _)| RelationId::new(r as u8))
}

/// Rebuilds nodes from `f` and one triplet per unit entry of `t`.
pub fn regenerate(t: &BinaryTensor, f: &FeatureMatrix, o: &RelationOntology) -> Result<SceneGraph> {
    if f.rows() != t.n() {
        return Err(Error::Shape(format!(
            "feature matrix has {} rows, tensor has {} nodes",
            f.rows(),
            t.n()
        )));
    }
    if f.cols() != o.num_attributes() {
        return Err(Error::Shape(format!(
            "feature matrix has {} columns, ontology declares {}",
            f.cols(),
            o.num_attributes()
        )));
    }
    if t.num_relations() != o.num_relations() {
        return Err(Error::OntologyMismatch(format!(
            "tensor has {} relation slices, ontology declares {}",
            t.num_relations(),
            o.num_relations()
        )));
    }
    if t.n() == 0 {
        return Err(Error::InvalidGraph("no nodes".into()));
    }
    let nodes = (0..t.n())
        .map(|j| SceneNode::new(f.row(j).iter().map(|&v| v as f64).collect()))
        .collect();
    let mut edges = BTreeSet::new();
    for r in o.relations() {
        for j in 0..t.n() {
            for k in 0..t.n() {
                if j != k && t.get(r.id, j, k) {
                    edges.insert(Triplet::new(j, r.id, k));
                }
            }
        }
    }
    Ok(SceneGraph::from_parts(o.digest(), nodes, edges))
}

/// Graph → wire payload (encode, compress, serialize).
pub fn encode_frame(g: &SceneGraph, o: &RelationOntology) -> Result<Payload> {
    let t = encode_tensor(g, o)?;
    serialize(&compress(&t), &FeatureMatrix::from_graph(g), o)
}

#[derive(Clone, Debug)]
pub struct DecodedFrame {
    pub graph: SceneGraph,
    pub warnings: Vec<DecodeWarning>,
}

/// Wire payload → graph (parse, decompress, regenerate).
pub fn decode_frame(
    bytes: &[u8],
    o: &RelationOntology,
    policy: RepairPolicy,
) -> Result<DecodedFrame> {
    let (c, f) = parse(bytes, o)?;
    let (t, warnings) = decompress(&c, policy)?;
    let graph = regenerate(&t, &f, o)?;
    Ok(DecodedFrame { graph, warnings })
}
