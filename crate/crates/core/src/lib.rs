//! Scene-graph semantic codec and noisy-link simulator.
//!
//! Pipeline: detections → [`scene_graph`] → [`codec`] (adjacency tensor,
//! zero-slice compression, wire payload) → [`channel`] (64-QAM/AWGN or BSC)
//! → [`codec`] decode → [`metrics`] and the rule-based [`task`]. The
//! [`scenarios`] generator supplies corpora and [`harness`] drives sweeps.

pub mod channel;
pub mod codec;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod ontology;
pub mod rng;
pub mod scenarios;
pub mod scene_graph;
pub mod task;

pub use channel::{ChannelKind, FrameGrid, HeaderProtection, LinkConfig, Transmission};
pub use codec::{
    decode_frame, encode_frame, AdjacencyTensor, BinaryTensor, CompressedTensor, DecodeWarning,
    DecodedFrame, FeatureMatrix, Payload, RepairPolicy,
};
pub use error::{Error, Result};
pub use harness::{SweepConfig, SweepRow};
pub use metrics::{ClassificationMetrics, ConfusionCounts, FidelityReport, NodeMatchTolerance};
pub use ontology::{
    load_ontology, Attribute, AttributeKind, OntologyDigest, Relation, RelationId, RelationOntology,
};
pub use rng::SplitMix64;
pub use scenarios::ScenarioSpec;
pub use scene_graph::{
    BevObject, BoundingBox, DetectedObject, Homography, RelationParams, SceneGraph, SceneNode,
    Triplet,
};
pub use task::{GraphSequence, RiskLabel, RiskParams, RiskVerdict};
