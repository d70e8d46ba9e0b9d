//! Shared transmitter/receiver knowledge: relation vocabulary and node
//! attribute schema.
//!
//! The configuration document is line oriented:
//!
//! ```text
//! # comment
//! relation 1 is_near
//! attribute 0 class categorical
//! ```
//!
//! Relation ids must form the contiguous range `1..=|R|` (0 means "no edge"
//! in adjacency matrices), attribute indices the range `0..d`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// The shipped default vocabulary: eight spatial relations over a
/// class/position/speed attribute schema.
pub const DEFAULT_ONTOLOGY: &str = include_str!("../fixtures/ontology.cfg");

pub const MAX_RELATIONS: usize = 255;
pub const MAX_ATTRIBUTES: usize = 65_535;

/// A relation id in `1..=255`. Zero is reserved for "no edge".
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RelationId(u8);

impl RelationId {
    pub fn new(id: u8) -> Option<Self> {
        (id != 0).then_some(Self(id))
    }

    pub fn get(self) -> u8 {
        self.0
    }

    /// Zero-based slice position inside an adjacency tensor.
    pub fn slot(self) -> usize {
        self.0 as usize - 1
    }
}

impl fmt::Display for RelationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AttributeKind {
    Categorical,
    LengthMeters,
    SpeedMps,
}

impl AttributeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AttributeKind::Categorical => "categorical",
            AttributeKind::LengthMeters => "length-meters",
            AttributeKind::SpeedMps => "speed-mps",
        }
    }
}

impl FromStr for AttributeKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "categorical" => Ok(AttributeKind::Categorical),
            "length-meters" => Ok(AttributeKind::LengthMeters),
            "speed-mps" => Ok(AttributeKind::SpeedMps),
            other => Err(format!("unknown attribute kind `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Relation {
    pub id: RelationId,
    pub name: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Attribute {
    pub index: u16,
    pub name: String,
    pub kind: AttributeKind,
}

/// 64-bit FNV-1a digest of an ontology's canonical emission.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OntologyDigest(pub [u8; 8]);

impl OntologyDigest {
    pub fn as_u64(self) -> u64 {
        u64::from_be_bytes(self.0)
    }
}

impl fmt::Display for OntologyDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.as_u64())
    }
}

/// Validated, immutable relation/attribute vocabulary.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelationOntology {
    relations: Vec<Relation>,
    attributes: Vec<Attribute>,
    digest: OntologyDigest,
}

impl RelationOntology {
    /// Parses and validates a configuration document.
    pub fn load(text: &str) -> Result<Self> {
        let mut relations: Vec<(usize, Relation)> = Vec::new();
        let mut attributes: Vec<(usize, Attribute)> = Vec::new();

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let schema = |msg: String| Error::Schema { line: line_no, msg };
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields.as_slice() {
                ["relation", id, name] => {
                    let id: u64 = id
                        .parse()
                        .map_err(|_| schema(format!("bad relation id `{id}`")))?;
                    if id == 0 || id > MAX_RELATIONS as u64 {
                        return Err(schema(format!(
                            "relation id {id} outside 1..={MAX_RELATIONS}"
                        )));
                    }
                    check_identifier(name).map_err(&schema)?;
                    let id = RelationId(id as u8);
                    if let Some((prev, _)) = relations.iter().find(|(_, r)| r.id == id) {
                        return Err(schema(format!(
                            "duplicate relation id {id} (first at line {prev})"
                        )));
                    }
                    if relations.iter().any(|(_, r)| r.name == *name) {
                        return Err(schema(format!("duplicate relation name `{name}`")));
                    }
                    relations.push((
                        line_no,
                        Relation {
                            id,
                            name: (*name).to_owned(),
                        },
                    ));
                }
                ["attribute", index, name, kind] => {
                    let index: u64 = index
                        .parse()
                        .map_err(|_| schema(format!("bad attribute index `{index}`")))?;
                    if index >= MAX_ATTRIBUTES as u64 {
                        return Err(schema(format!("attribute index {index} too large")));
                    }
                    check_identifier(name).map_err(&schema)?;
                    let kind: AttributeKind = kind.parse().map_err(&schema)?;
                    let index = index as u16;
                    if attributes.iter().any(|(_, a)| a.index == index) {
                        return Err(schema(format!("duplicate attribute index {index}")));
                    }
                    if attributes.iter().any(|(_, a)| a.name == *name) {
                        return Err(schema(format!("duplicate attribute name `{name}`")));
                    }
                    attributes.push((
                        line_no,
                        Attribute {
                            index,
                            name: (*name).to_owned(),
                            kind,
                        },
                    ));
                }
                _ => return Err(schema(format!("unrecognised line `{line}`"))),
            }
        }

        relations.sort_by_key(|(_, r)| r.id);
        attributes.sort_by_key(|(_, a)| a.index);

        if relations.is_empty() {
            return Err(Error::Schema {
                line: 0,
                msg: "ontology declares no relations".into(),
            });
        }
        for (expected, (line, r)) in (1u64..).zip(&relations) {
            if r.id.get() as u64 != expected {
                return Err(Error::Schema {
                    line: *line,
                    msg: format!(
                        "relation ids not contiguous: expected {expected}, found {}",
                        r.id
                    ),
                });
            }
        }
        for (expected, (line, a)) in (0u64..).zip(&attributes) {
            if a.index as u64 != expected {
                return Err(Error::Schema {
                    line: *line,
                    msg: format!(
                        "attribute indices not contiguous: expected {expected}, found {}",
                        a.index
                    ),
                });
            }
        }

        let relations: Vec<Relation> = relations.into_iter().map(|(_, r)| r).collect();
        let attributes: Vec<Attribute> = attributes.into_iter().map(|(_, a)| a).collect();
        let digest = fnv1a64(canonical_text(&relations, &attributes).as_bytes());
        Ok(Self {
            relations,
            attributes,
            digest: OntologyDigest(digest.to_be_bytes()),
        })
    }

    pub fn load_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::load(&text)
    }

    /// The eight-relation default fixture.
    pub fn default_fixture() -> Self {
        Self::load(DEFAULT_ONTOLOGY).expect("bundled ontology fixture is valid")
    }

    /// Canonical text: relations by id, then attributes by index, one
    /// space between fields, every line `\n`-terminated.
    pub fn emit(&self) -> String {
        canonical_text(&self.relations, &self.attributes)
    }

    pub fn digest(&self) -> OntologyDigest {
        self.digest
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    /// |R|
    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    /// d
    pub fn num_attributes(&self) -> usize {
        self.attributes.len()
    }

    pub fn relation(&self, id: RelationId) -> Option<&Relation> {
        self.relations.get(id.slot())
    }

    pub fn relation_by_name(&self, name: &str) -> Option<RelationId> {
        self.relations.iter().find(|r| r.name == name).map(|r| r.id)
    }

    pub fn attribute_by_name(&self, name: &str) -> Option<&Attribute> {
        self.attributes.iter().find(|a| a.name == name)
    }

    pub fn contains_relation(&self, id: RelationId) -> bool {
        id.slot() < self.relations.len()
    }
}

/// Free-function form of [`RelationOntology::load`].
pub fn load_ontology(text: &str) -> Result<RelationOntology> {
    RelationOntology::load(text)
}

pub fn ontology_digest(o: &RelationOntology) -> OntologyDigest {
    o.digest()
}

fn canonical_text(relations: &[Relation], attributes: &[Attribute]) -> String {
    let mut out = String::new();
    for r in relations {
        out.push_str(&format!("relation {} {}\n", r.id, r.name));
    }
    for a in attributes {
        out.push_str(&format!(
            "attribute {} {} {}\n",
            a.index,
            a.name,
            a.kind.as_str()
        ));
    }
    out
}

fn check_identifier(name: &str) -> std::result::Result<(), String> {
    let mut chars = name.chars();
    let ok = match chars.next() {
        Some(c) if c.is_ascii_lowercase() || c == '_' => {
            chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
        }
        _ => false,
    };
    if ok {
        Ok(())
    } else {
        Err(format!("`{name}` is not a valid identifier"))
    }
}

pub(crate) fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .iter()
        .fold(OFFSET, |h, b| (h ^ *b as u64).wrapping_mul(PRIME))
}
