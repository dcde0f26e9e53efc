//! Blueprints: ordered block placements relative to a start position.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::block::{self, Facing};
use crate::geom::{BoundingBox, Coord};
use crate::world::WorldState;

#[derive(Debug, Error)]
pub enum BlueprintError {
    #[error("blueprint has no placements")]
    EmptyBlueprint,
    #[error("unsupported blueprint format version {0}")]
    Version(u32),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Placement {
    #[serde(rename = "id")]
    pub block: String,
    #[serde(flatten)]
    pub offset: Coord,
    pub facing: Option<Facing>,
}

impl Placement {
    pub fn new(block: impl Into<String>, offset: Coord) -> Self {
        Placement {
            block: block.into(),
            offset,
            facing: None,
        }
    }

    pub fn facing(mut self, facing: Facing) -> Self {
        self.facing = Some(facing);
        self
    }

    /// Facing the block will actually be placed with: orientable blocks
    /// default to north, everything else has none.
    pub fn effective_facing(&self) -> Option<Facing> {
        match block::lookup(&self.block) {
            Some(def) if def.orientable => Some(self.facing.unwrap_or(Facing::North)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Blueprint {
    pub name: String,
    pub placements: Vec<Placement>,
}

#[derive(Serialize, Deserialize)]
struct BlueprintJson {
    #[serde(default = "format_version")]
    v: u32,
    name: String,
    placements: Vec<Placement>,
}

fn format_version() -> u32 {
    1
}

impl Blueprint {
    pub fn new(name: impl Into<String>, placements: Vec<Placement>) -> Self {
        Blueprint {
            name: name.into(),
            placements,
        }
    }

    pub fn len(&self) -> usize {
        self.placements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.placements.is_empty()
    }

    /// Tightest box around all offsets.
    pub fn bbox(&self) -> Result<BoundingBox, BlueprintError> {
        BoundingBox::around(self.placements.iter().map(|p| p.offset))
            .ok_or(BlueprintError::EmptyBlueprint)
    }

    /// Canonical single-line JSON.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&BlueprintJson {
            v: 1,
            name: self.name.clone(),
            placements: self.placements.clone(),
        })
        .expect("blueprint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, BlueprintError> {
        let raw: BlueprintJson = serde_json::from_str(text)?;
        if raw.v != 1 {
            return Err(BlueprintError::Version(raw.v));
        }
        Ok(Blueprint {
            name: raw.name,
            placements: raw.placements,
        })
    }

    pub fn validate(&self, limits: &BoundingBox) -> ValidationReport {
        validate(self, limits)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IssueKind {
    AirBlock,
    DuplicateCoord { first: usize },
    OutOfBounds,
    UnknownBlockId,
    /// Orientable block without a facing; placed facing north.
    MissingFacing,
    SpuriousFacing,
}

impl IssueKind {
    pub fn is_warning(&self) -> bool {
        matches!(self, IssueKind::MissingFacing)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub index: usize,
    #[serde(flatten)]
    pub kind: IssueKind,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            IssueKind::AirBlock => write!(f, "placement {}: `air` is not a block", self.index),
            IssueKind::DuplicateCoord { first } => write!(
                f,
                "placement {}: same offset as placement {first}",
                self.index
            ),
            IssueKind::OutOfBounds => write!(f, "placement {}: outside the build limits", self.index),
            IssueKind::UnknownBlockId => write!(f, "placement {}: unknown block id", self.index),
            IssueKind::MissingFacing => {
                write!(f, "placement {}: no facing given, defaulting to north", self.index)
            }
            IssueKind::SpuriousFacing => {
                write!(f, "placement {}: block does not take a facing", self.index)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    /// No error-level issues (warnings allowed).
    pub fn is_valid(&self) -> bool {
        self.errors().next().is_none()
    }

    pub fn errors(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| !i.kind.is_warning())
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.kind.is_warning())
    }
}

/// Reports every problem with a blueprint. Duplicate offsets are errors: the
/// first occurrence stands and each later one is flagged.
pub fn validate(bp: &Blueprint, limits: &BoundingBox) -> ValidationReport {
    let mut issues = Vec::new();
    let mut first_at: HashMap<Coord, usize> = HashMap::new();
    for (index, p) in bp.placements.iter().enumerate() {
        let mut push = |kind| issues.push(Issue { index, kind });
        if p.block == "air" {
            push(IssueKind::AirBlock);
        } else {
            match block::lookup(&p.block) {
                None => push(IssueKind::UnknownBlockId),
                Some(def) if def.orientable && p.facing.is_none() => push(IssueKind::MissingFacing),
                Some(def) if !def.orientable && p.facing.is_some() => {
                    push(IssueKind::SpuriousFacing)
                }
                Some(_) => {}
            }
        }
        if !limits.contains(p.offset) {
            push(IssueKind::OutOfBounds);
        }
        match first_at.get(&p.offset) {
            Some(&first) => push(IssueKind::DuplicateCoord { first }),
            None => {
                first_at.insert(p.offset, index);
            }
        }
    }
    ValidationReport { issues }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mismatch {
    Missing {
        at: Coord,
        expected: String,
    },
    Wrong {
        at: Coord,
        expected: String,
        expected_facing: Option<Facing>,
        found: String,
        found_facing: Option<Facing>,
    },
    Extra {
        at: Coord,
        found: String,
    },
}

impl Mismatch {
    pub fn at(&self) -> Coord {
        match self {
            Mismatch::Missing { at, .. } | Mismatch::Wrong { at, .. } | Mismatch::Extra { at, .. } => {
                *at
            }
        }
    }
}

impl fmt::Display for Mismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mismatch::Missing { at, expected } => write!(f, "missing {expected} at {at}"),
            Mismatch::Wrong {
                at,
                expected,
                expected_facing,
                found,
                found_facing,
            } => {
                write!(f, "wrong block at {at}: expected {expected}")?;
                if let Some(fc) = expected_facing {
                    write!(f, " facing {fc}")?;
                }
                write!(f, ", found {found}")?;
                if let Some(fc) = found_facing {
                    write!(f, " facing {fc}")?;
                }
                Ok(())
            }
            Mismatch::Extra { at, found } => write!(f, "unexpected {found} at {at}"),
        }
    }
}

/// Compares the world region at `origin` with a blueprint. Coordinates in the
/// result are world coordinates, sorted in `(y, x, z)` order. Scaffold blocks
/// that are not part of the blueprint are ignored.
pub fn diff(world: &WorldState, origin: Coord, bp: &Blueprint) -> Vec<Mismatch> {
    let mut out = Vec::new();
    let mut wanted: HashSet<Coord> = HashSet::new();
    for p in &bp.placements {
        let at = origin + p.offset;
        if !wanted.insert(at) {
            continue;
        }
        match world.get(at) {
            None => out.push(Mismatch::Missing {
                at,
                expected: p.block.clone(),
            }),
            Some(cell) => {
                let expected_facing = p.effective_facing();
                if cell.id() != p.block || cell.facing != expected_facing {
                    out.push(Mismatch::Wrong {
                        at,
                        expected: p.block.clone(),
                        expected_facing,
                        found: cell.id().to_string(),
                        found_facing: cell.facing,
                    });
                }
            }
        }
    }
    if let Ok(bb) = bp.bbox() {
        let region = bb.translate(origin);
        for (at, cell) in world.blocks() {
            if region.contains(at) && !wanted.contains(&at) && !cell.block.scaffold {
                out.push(Mismatch::Extra {
                    at,
                    found: cell.id().to_string(),
                });
            }
        }
    }
    out.sort_by_key(Mismatch::at);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn limits() -> BoundingBox {
        BoundingBox::spanning(Coord::new(-32, 0, -32), Coord::new(32, 64, 32))
    }

    fn p(id: &str, x: i32, y: i32, z: i32) -> Placement {
        Placement::new(id, Coord::new(x, y, z))
    }

    #[test]
    fn empty_blueprint_is_valid() {
        let bp = Blueprint::default();
        assert!(bp.validate(&limits()).is_empty());
        assert!(matches!(bp.bbox(), Err(BlueprintError::EmptyBlueprint)));
    }

    #[test]
    fn duplicate_names_second_index() {
        let bp = Blueprint::new("d", vec![p("stone", 0, 0, 0), p("stone", 1, 0, 0), p("glass", 0, 0, 0)]);
        let r = bp.validate(&limits());
        assert_eq!(
            r.issues,
            vec![Issue {
                index: 2,
                kind: IssueKind::DuplicateCoord { first: 0 }
            }]
        );
    }

    #[test]
    fn air_unknown_bounds_and_facing() {
        let bp = Blueprint::new(
            "bad",
            vec![
                p("air", 0, 0, 0),
                p("unobtainium", 1, 0, 0),
                p("stone", 100, 0, 0),
                p("oak_door", 2, 0, 0),
                p("stone", 3, 0, 0).facing(Facing::East),
            ],
        );
        let r = bp.validate(&limits());
        let kinds: Vec<_> = r.issues.iter().map(|i| (i.index, i.kind.clone())).collect();
        assert_eq!(
            kinds,
            vec![
                (0, IssueKind::AirBlock),
                (1, IssueKind::UnknownBlockId),
                (2, IssueKind::OutOfBounds),
                (3, IssueKind::MissingFacing),
                (4, IssueKind::SpuriousFacing),
            ]
        );
        assert_eq!(r.warnings().count(), 1);
        assert!(!r.is_valid());
    }

    #[test]
    fn missing_facing_is_only_a_warning() {
        let bp = Blueprint::new("door", vec![p("oak_door", 0, 0, 0)]);
        let r = bp.validate(&limits());
        assert!(r.is_valid());
        assert_eq!(bp.placements[0].effective_facing(), Some(Facing::North));
    }

    #[test]
    fn bbox_cases() {
        let one = Blueprint::new("a", vec![p("stone", 2, 3, 4)]);
        let bb = one.bbox().unwrap();
        assert_eq!((bb.min, bb.max), (Coord::new(2, 3, 4), Coord::new(2, 3, 4)));
        let two = Blueprint::new("b", vec![p("stone", 0, 0, 0), p("stone", 7, 4, 7)]);
        let bb = two.bbox().unwrap();
        assert_eq!((bb.min, bb.max), (Coord::new(0, 0, 0), Coord::new(7, 4, 7)));
    }

    fn built(bp: &Blueprint, origin: Coord) -> WorldState {
        let mut w = WorldState::default();
        for pl in &bp.placements {
            w.put(origin + pl.offset, &pl.block, pl.effective_facing()).unwrap();
        }
        w
    }

    fn sample() -> Blueprint {
        Blueprint::new(
            "s",
            vec![
                p("oak_planks", 0, 0, 0),
                p("oak_planks", 1, 0, 0),
                p("oak_planks", 0, 1, 0),
                p("oak_door", 1, 1, 0).facing(Facing::South),
            ],
        )
    }

    #[test]
    fn exact_build_has_no_diff() {
        let origin = Coord::new(5, 1, 5);
        let bp = sample();
        assert!(diff(&built(&bp, origin), origin, &bp).is_empty());
    }

    #[test]
    fn removed_block_is_missing() {
        let origin = Coord::new(5, 1, 5);
        let bp = sample();
        let mut w = built(&bp, origin);
        w.take(origin + Coord::new(0, 1, 0));
        assert_eq!(
            diff(&w, origin, &bp),
            vec![Mismatch::Missing {
                at: origin + Coord::new(0, 1, 0),
                expected: "oak_planks".into()
            }]
        );
    }

    #[test]
    fn replaced_block_is_wrong() {
        let origin = Coord::new(0, 1, 0);
        let bp = sample();
        let mut w = built(&bp, origin);
        let at = origin + Coord::new(1, 0, 0);
        w.take(at);
        w.put(at, "stone", None).unwrap();
        let d = diff(&w, origin, &bp);
        assert_eq!(d.len(), 1);
        assert!(matches!(&d[0], Mismatch::Wrong { found, .. } if found == "stone"));
    }

    #[test]
    fn wrong_facing_and_extras() {
        let origin = Coord::new(0, 1, 0);
        let bp = sample();
        let mut w = built(&bp, origin);
        let door = origin + Coord::new(1, 1, 0);
        w.take(door);
        w.put(door, "oak_door", Some(Facing::North)).unwrap();
        // outside the bbox: ignored
        w.put(Coord::new(9, 1, 9), "stone", None).unwrap();
        let d = diff(&w, origin, &bp);
        assert_eq!(d.len(), 1);
        assert!(matches!(&d[0], Mismatch::Wrong { found_facing: Some(Facing::North), .. }));
    }

    #[test]
    fn extra_inside_bbox() {
        let origin = Coord::new(0, 1, 0);
        let bp = Blueprint::new("e", vec![p("stone", 0, 0, 0), p("stone", 3, 0, 0)]);
        let mut w = built(&bp, origin);
        w.put(origin + Coord::new(1, 0, 0), "glass", None).unwrap();
        // scaffold leftovers are not extras
        w.put(origin + Coord::new(2, 0, 0), "dirt", None).unwrap();
        assert_eq!(
            diff(&w, origin, &bp),
            vec![Mismatch::Extra {
                at: origin + Coord::new(1, 0, 0),
                found: "glass".into()
            }]
        );
    }

    #[test]
    fn json_shape() {
        let bp = Blueprint::new("door", vec![p("oak_door", 1, 2, 3).facing(Facing::West), p("stone", 0, 0, 0)]);
        let text = bp.to_json();
        assert_eq!(
            text,
            r#"{"v":1,"name":"door","placements":[{"id":"oak_door","x":1,"y":2,"z":3,"facing":"west"},{"id":"stone","x":0,"y":0,"z":0,"facing":null}]}"#
        );
        assert_eq!(Blueprint::from_json(&text).unwrap(), bp);
        let no_version = r#"{"name":"n","placements":[{"id":"stone","x":0,"y":0,"z":0,"facing":null}]}"#;
        assert_eq!(Blueprint::from_json(no_version).unwrap().len(), 1);
        assert!(matches!(
            Blueprint::from_json(r#"{"v":2,"name":"n","placements":[]}"#),
            Err(BlueprintError::Version(2))
        ));
    }
}
