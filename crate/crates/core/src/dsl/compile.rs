use indexmap::IndexMap;
use thiserror::Error;

use crate::blueprint::{Blueprint, Placement};
use crate::geom::{BoundingBox, Coord};

use super::{DslProgram, Span, Statement};

/// Upper bound on the number of cells a single program may expand to.
pub const MAX_PLACEMENTS: i64 = 250_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompileError {
    #[error("line at {span} from {from} to {to} is neither axis-aligned nor diagonal")]
    NonAlignedLine { span: Span, from: Coord, to: Coord },
    #[error("program expands to more than {MAX_PLACEMENTS} blocks")]
    TooLarge,
}

/// Expands a program into a blueprint. A later statement replaces an earlier
/// block at the same offset, keeping the earlier block's list position.
pub fn compile(name: &str, prog: &DslProgram) -> Result<Blueprint, CompileError> {
    let mut budget = MAX_PLACEMENTS;
    let mut cells: IndexMap<Coord, Placement> = IndexMap::new();
    for s in &prog.statements {
        let (block, offsets) = expand(&s.statement, s.span)?;
        budget -= offsets.len() as i64;
        if budget < 0 {
            return Err(CompileError::TooLarge);
        }
        let facing = match &s.statement {
            Statement::Place { facing, .. } => *facing,
            _ => None,
        };
        for offset in offsets {
            cells.insert(
                offset,
                Placement {
                    block: block.to_string(),
                    offset,
                    facing,
                },
            );
        }
    }
    Ok(Blueprint::new(name, cells.into_values().collect()))
}

fn volume_ok(bb: &BoundingBox) -> Result<(), CompileError> {
    if bb.volume() > MAX_PLACEMENTS {
        Err(CompileError::TooLarge)
    } else {
        Ok(())
    }
}

fn expand(s: &Statement, span: Span) -> Result<(&str, Vec<Coord>), CompileError> {
    Ok(match s {
        Statement::Place { block, at, .. } => (block, vec![*at]),
        Statement::Fill { block, from, to } => {
            let bb = BoundingBox::spanning(*from, *to);
            volume_ok(&bb)?;
            (block, bb.cells().collect())
        }
        Statement::Shell { block, from, to } => {
            let bb = BoundingBox::spanning(*from, *to);
            volume_ok(&bb)?;
            let on_face = |c: &Coord| {
                c.x == bb.min.x
                    || c.x == bb.max.x
                    || c.y == bb.min.y
                    || c.y == bb.max.y
                    || c.z == bb.min.z
                    || c.z == bb.max.z
            };
            (block, bb.cells().filter(on_face).collect())
        }
        Statement::Line { block, from, to } => (block, line_cells(*from, *to, span)?),
        Statement::Pyramid {
            block,
            corner,
            base,
            step,
        } => {
            let (base, step) = (*base as i64, *step as i64);
            let cells: i64 = (0..)
                .map(|i| base - i * step)
                .take_while(|side| *side >= 1)
                .map(|side| side * side)
                .sum();
            if cells > MAX_PLACEMENTS {
                return Err(CompileError::TooLarge);
            }
            let mut out = Vec::with_capacity(cells as usize);
            let mut side = base;
            let mut layer = 0;
            while side >= 1 {
                let inset = ((base - side) / 2) as i32;
                let lo = corner.offset(inset, layer, inset);
                let hi = lo.offset(side as i32 - 1, 0, side as i32 - 1);
                out.extend(BoundingBox::spanning(lo, hi).cells());
                side -= step;
                layer += 1;
            }
            (block, out)
        }
    })
}

fn line_cells(from: Coord, to: Coord, span: Span) -> Result<Vec<Coord>, CompileError> {
    let d = to - from;
    let lengths = [d.x.abs(), d.y.abs(), d.z.abs()];
    let n = lengths.into_iter().max().unwrap_or(0);
    if lengths.iter().any(|l| *l != 0 && *l != n) {
        return Err(CompileError::NonAlignedLine { span, from, to });
    }
    if n as i64 > MAX_PLACEMENTS {
        return Err(CompileError::TooLarge);
    }
    let unit = Coord::new(d.x.signum(), d.y.signum(), d.z.signum());
    Ok((0..=n)
        .map(|i| from.offset(unit.x * i, unit.y * i, unit.z * i))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{build_blueprint, parse, DslError};
    use std::collections::BTreeSet;

    fn offsets(src: &str) -> BTreeSet<Coord> {
        build_blueprint("t", src)
            .unwrap()
            .placements
            .iter()
            .map(|p| p.offset)
            .collect()
    }

    #[test]
    fn fill_two_by_one_by_two() {
        let bp = build_blueprint("t", "fill stone (0,0,0) (1,0,1)").unwrap();
        assert_eq!(bp.len(), 4);
    }

    #[test]
    fn corners_are_normalized() {
        assert_eq!(
            offsets("fill stone (3,2,1) (0,0,0)"),
            offsets("fill stone (0,0,0) (3,2,1)")
        );
    }

    #[test]
    fn shell_three_cubed() {
        let shell = offsets("shell stone (0,0,0) (2,2,2)");
        assert_eq!(shell.len(), 26);
        assert!(!shell.contains(&Coord::new(1, 1, 1)));
    }

    #[test]
    fn thin_shell_is_full() {
        assert_eq!(offsets("shell stone (0,0,0) (4,0,4)").len(), 25);
    }

    #[test]
    fn pyramid_layers() {
        let bp = build_blueprint("p", "pyramid snow_block (0,0,0) 5 step 2").unwrap();
        assert_eq!(bp.len(), 35);
        let top: Vec<_> = bp.placements.iter().filter(|p| p.offset.y == 2).collect();
        assert_eq!(top.len(), 1);
        assert_eq!(top[0].offset, Coord::new(2, 2, 2));
    }

    #[test]
    fn lines() {
        let axis = build_blueprint("l", "line stone (0,0,0) (0,4,0)").unwrap();
        assert_eq!(axis.len(), 5);
        let diag = offsets("line stone (3,0,3) (0,0,0)");
        assert_eq!(
            diag,
            (0..=3).map(|i| Coord::new(i, 0, i)).collect::<BTreeSet<_>>()
        );
        assert_eq!(offsets("line stone (1,1,1) (1,1,1)").len(), 1);
        assert!(matches!(
            build_blueprint("l", "line stone (0,0,0) (2,1,0)"),
            Err(DslError::Compile(CompileError::NonAlignedLine { .. }))
        ));
    }

    #[test]
    fn later_statement_overrides() {
        let bp = build_blueprint(
            "o",
            "fill oak_planks (0,0,0) (2,0,0)\nplace oak_door (1,0,0) facing south",
        )
        .unwrap();
        assert_eq!(bp.len(), 3);
        assert_eq!(bp.placements[1].block, "oak_door");
        assert_eq!(bp.placements[1].offset, Coord::new(1, 0, 0));
    }

    #[test]
    fn huge_programs_rejected() {
        let prog = parse("fill stone (0,0,0) (1000,1000,1000)").unwrap();
        assert_eq!(compile("h", &prog), Err(CompileError::TooLarge));
    }

    #[test]
    fn compiles_deterministically() {
        let src = "fill oak_planks (0,0,0) (7,0,7)\nshell oak_planks (0,1,0) (7,4,7)\nplace oak_door (3,1,0) facing south";
        let a = build_blueprint("h", src).unwrap().to_json();
        let b = build_blueprint("h", src).unwrap().to_json();
        assert_eq!(a, b);
    }
}
