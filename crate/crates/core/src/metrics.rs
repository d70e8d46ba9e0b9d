//! Evaluation metrics: semantic fidelity, compression ratio, and the binary
//! classification suite (accuracy, precision, recall, F1, MCC, AUC).

use crate::error::{Error, Result};
use crate::ontology::{AttributeKind, RelationOntology};
use crate::scene_graph::SceneGraph;

/// Per-kind attribute tolerances used when matching nodes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NodeMatchTolerance {
    pub position_m: f64,
    pub speed_mps: f64,
}

impl Default for NodeMatchTolerance {
    fn default() -> Self {
        Self {
            position_m: 0.1,
            speed_mps: 0.1,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FidelityReport {
    pub nodes_total: usize,
    pub nodes_recovered: usize,
    pub edges_total: usize,
    pub edges_recovered: usize,
    pub fidelity: f64,
}

impl FidelityReport {
    fn from_counts(
        nodes_total: usize,
        nodes_recovered: usize,
        edges_total: usize,
        edges_recovered: usize,
    ) -> Self {
        let denom = nodes_total + edges_total;
        let fidelity = if denom == 0 {
            0.0
        } else {
            (nodes_recovered + edges_recovered) as f64 / denom as f64
        };
        Self {
            nodes_total,
            nodes_recovered,
            edges_total,
            edges_recovered,
            fidelity,
        }
    }
}

/// Fraction of transmitted entities (nodes and triplets) recovered.
///
/// Nodes correspond by index. `received = None` stands for a payload that
/// could not be decoded and scores zero.
pub fn semantic_fidelity(
    sent: &SceneGraph,
    received: Option<&SceneGraph>,
    o: &RelationOntology,
    tol: &NodeMatchTolerance,
) -> Result<FidelityReport> {
    if sent.ontology_digest() != o.digest() {
        return Err(Error::OntologyMismatch(
            "sent graph uses another ontology".into(),
        ));
    }
    let nodes_total = sent.num_nodes();
    let edges_total = sent.edges().len();
    let Some(received) = received else {
        return Ok(FidelityReport::from_counts(nodes_total, 0, edges_total, 0));
    };
    if received.ontology_digest() != o.digest() {
        return Err(Error::OntologyMismatch(
            "received graph uses another ontology".into(),
        ));
    }

    let attrs = o.attributes();
    let nodes_recovered = sent
        .nodes()
        .iter()
        .zip(received.nodes())
        .filter(|(a, b)| {
            attrs.iter().all(|attr| {
                let i = attr.index as usize;
                let (x, y) = (a.features[i], b.features[i]);
                match attr.kind {
                    AttributeKind::Categorical => x.round() == y.round(),
                    AttributeKind::LengthMeters => (x - y).abs() <= tol.position_m,
                    AttributeKind::SpeedMps => (x - y).abs() <= tol.speed_mps,
                }
            })
        })
        .count();
    let edges_recovered = sent.edges().iter().filter(|t| received.contains(t)).count();
    Ok(FidelityReport::from_counts(
        nodes_total,
        nodes_recovered,
        edges_total,
        edges_recovered,
    ))
}

/// `(raw/encoded, 100·(1 − encoded/raw))`.
pub fn compression_ratio(raw_octets: f64, encoded_octets: f64) -> Result<(f64, f64)> {
    if encoded_octets.is_nan() || raw_octets.is_nan() || encoded_octets <= 0.0 || raw_octets <= 0.0
    {
        return Err(Error::DegenerateInput(format!(
            "sizes must be positive (raw {raw_octets}, encoded {encoded_octets})"
        )));
    }
    Ok((
        raw_octets / encoded_octets,
        100.0 * (1.0 - encoded_octets / raw_octets),
    ))
}

/// Size of an uncompressed 24-bit RGB frame.
pub fn raw_frame_octets(width: u64, height: u64) -> u64 {
    width * height * 3
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    /// Tallies `(truth, prediction)` pairs, `true` being the positive class.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (bool, bool)>) -> Self {
        let mut c = Self::default();
        for (truth, pred) in pairs {
            match (truth, pred) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (false, false) => c.tn += 1,
                (true, false) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Counts obtained by flipping every prediction.
    pub fn inverted_predictions(&self) -> Self {
        Self {
            tp: self.fn_,
            fp: self.tn,
            tn: self.fp,
            fn_: self.tp,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub mcc: f64,
    /// Set when any ratio had a zero denominator and was reported as 0.
    pub degenerate: bool,
}

fn ratio(num: f64, den: f64, degenerate: &mut bool) -> f64 {
    if den == 0.0 {
        *degenerate = true;
        0.0
    } else {
        num / den
    }
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub fn classification_metrics(c: &ConfusionCounts) -> ClassificationMetrics {
    let (tp, fp, tn, fn_) = (c.tp as f64, c.fp as f64, c.tn as f64, c.fn_ as f64);
    let mut degenerate = false;
    let accuracy = ratio(tp + tn, tp + fp + tn + fn_, &mut degenerate);
    let precision = ratio(tp, tp + fp, &mut degenerate);
    let recall = ratio(tp, tp + fn_, &mut degenerate);
    let f1 = ratio(
        2.0 * precision * recall,
        precision + recall,
        &mut degenerate,
    );
    let mcc = ratio(
        tp * tn - fp * fn_,
        ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt(),
        &mut degenerate,
    );
    ClassificationMetrics {
        accuracy,
        precision,
        recall,
        f1,
        mcc,
        degenerate,
    }
}

/// Area under the ROC curve as the Mann–Whitney statistic: the fraction of
/// positive/negative pairs ranked correctly, ties counting one half.
pub fn auc(scores: &[(f64, bool)]) -> Result<f64> {
    let positives = scores.iter().filter(|(_, l)| *l).count();
    let negatives = scores.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::DegenerateInput(
            "AUC needs at least one positive and one negative".into(),
        ));
    }
    if scores.iter().any(|(s, _)| s.is_nan()) {
        return Err(Error::DegenerateInput("NaN score".into()));
    }
    let mut sorted: Vec<(f64, bool)> = scores.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Sum of mid-ranks of the positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j].0 == sorted[i].0 {
            j += 1;
        }
        let mid_rank = (i + 1 + j) as f64 / 2.0;
        let pos_in_group = sorted[i..j].iter().filter(|(_, l)| *l).count();
        rank_sum += mid_rank * pos_in_group as f64;
        i = j;
    }
    let p = positives as f64;
    let u = rank_sum - p * (p + 1.0) / 2.0;
    Ok(u / (p * negatives as f64))
}

fn mid_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j < idx.len() && values[idx[j]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + 1 + j) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

/// Spearman rank correlation with mid-ranks for ties.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Shape(format!(
            "spearman needs two equal-length series of at least 2 (got {} and {})",
            x.len(),
            y.len()
        )));
    }
    let rx = mid_ranks(x);
    let ry = mid_ranks(y);
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateInput("constant series".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}
