//! Rule-based risk assessment over scene-graph sequences and the
//! sent-vs-received consistency evaluation built on it.
//!
//! A sequence is risky when some vehicle is `is_near` the ego (node 0) in
//! `window` consecutive frames. The rule reads triplets and node classes only.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::metrics::{auc, ConfusionCounts};
use crate::ontology::{RelationId, RelationOntology};
use crate::scene_graph::{class, SceneGraph, Triplet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RiskLabel {
    Risky,
    Safe,
}

impl RiskLabel {
    pub fn is_risky(self) -> bool {
        self == RiskLabel::Risky
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RiskLabel::Risky => "risky",
            RiskLabel::Safe => "safe",
        }
    }
}

impl fmt::Display for RiskLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RiskLabel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "risky" => Ok(RiskLabel::Risky),
            "safe" => Ok(RiskLabel::Safe),
            other => Err(format!("unknown label `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GraphSequence {
    pub frames: Vec<SceneGraph>,
    /// Ground truth, when known.
    pub label: Option<RiskLabel>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RiskParams {
    pub window: usize,
    pub near_relation: RelationId,
    pub vehicle_classes: Vec<u32>,
}

impl RiskParams {
    /// Default window of 2 frames over the ontology's `is_near` relation.
    pub fn from_ontology(o: &RelationOntology) -> Result<Self> {
        let near_relation = o
            .relation_by_name("is_near")
            .ok_or_else(|| Error::OntologyMismatch("ontology has no `is_near` relation".into()))?;
        Ok(Self {
            window: 2,
            near_relation,
            vehicle_classes: class::VEHICLES.to_vec(),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RiskVerdict {
    pub decision: RiskLabel,
    /// Fraction of frames with a vehicle near the ego.
    pub score: f64,
}

fn frame_has_near_vehicle(g: &SceneGraph, params: &RiskParams) -> bool {
    let nodes = g.nodes();
    g.edges()
        .iter()
        .filter(|t: &&Triplet| t.rel == params.near_relation && t.dst == 0)
        .any(|t| {
            nodes
                .get(t.src as usize)
                .is_some_and(|n| params.vehicle_classes.contains(&n.class_id()))
        })
}

pub fn assess_frames(frames: &[SceneGraph], params: &RiskParams) -> Result<RiskVerdict> {
    if frames.is_empty() {
        return Err(Error::DegenerateInput("empty graph sequence".into()));
    }
    let hits: Vec<bool> = frames
        .iter()
        .map(|g| frame_has_near_vehicle(g, params))
        .collect();
    let window = params.window.max(1);
    let risky = hits.windows(window).any(|w| w.iter().all(|h| *h));
    let score = hits.iter().filter(|h| **h).count() as f64 / frames.len() as f64;
    Ok(RiskVerdict {
        decision: if risky {
            RiskLabel::Risky
        } else {
            RiskLabel::Safe
        },
        score,
    })
}

pub fn assess_risk(s: &GraphSequence, params: &RiskParams) -> Result<RiskVerdict> {
    assess_frames(&s.frames, params)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConsistencyReport {
    /// Sent verdict as truth, received verdict as prediction.
    pub counts: ConfusionCounts,
    pub consistency: f64,
    /// AUC of received scores against sent decisions; `None` when the sent
    /// decisions are all one class.
    pub auc: Option<f64>,
}

/// Compares verdicts on what was sent with verdicts on what was received.
pub fn task_consistency(
    sent: &[GraphSequence],
    received: &[GraphSequence],
    params: &RiskParams,
) -> Result<ConsistencyReport> {
    if sent.len() != received.len() {
        return Err(Error::Shape(format!(
            "{} sent sequences vs {} received",
            sent.len(),
            received.len()
        )));
    }
    let verdicts = sent
        .iter()
        .zip(received)
        .map(|(s, r)| Ok((assess_risk(s, params)?, assess_risk(r, params)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(consistency_from_verdicts(&verdicts))
}

/// Aggregates `(sent, received)` verdict pairs.
pub fn consistency_from_verdicts(verdicts: &[(RiskVerdict, RiskVerdict)]) -> ConsistencyReport {
    let counts = ConfusionCounts::from_pairs(
        verdicts
            .iter()
            .map(|(s, r)| (s.decision.is_risky(), r.decision.is_risky())),
    );
    let agree = verdicts
        .iter()
        .filter(|(s, r)| s.decision == r.decision)
        .count();
    let consistency = if verdicts.is_empty() {
        0.0
    } else {
        agree as f64 / verdicts.len() as f64
    };
    let scored: Vec<(f64, bool)> = verdicts
        .iter()
        .map(|(s, r)| (r.score, s.decision.is_risky()))
        .collect();
    ConsistencyReport {
        counts,
        consistency,
        auc: auc(&scored).ok(),
    }
}
