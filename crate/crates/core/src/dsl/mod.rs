//! The blueprint language.
//!
//! A closed, declarative language for describing structures. Programs are a
//! sequence of statements, each producing blocks at offsets relative to the
//! build origin:
//!
//! ```text
//! # floor and walls
//! fill oak_planks (0,0,0) (7,0,7)
//! shell oak_planks (0,1,0) (7,4,7)
//! place oak_door (3,1,0) facing north
//! line glass_pane (5,2,0) (6,2,0)
//! pyramid snow_block (0,0,0) 9 step 2
//! ```
//!
//! Grammar:
//!
//! ```text
//! program   := statement+
//! statement := place | fill | shell | line | pyramid
//! place     := "place" ID coord ("facing" DIR)?
//! fill      := "fill" ID coord coord
//! shell     := "shell" ID coord coord
//! line      := "line" ID coord coord
//! pyramid   := "pyramid" ID coord INT ("step" INT)?
//! coord     := "(" INT "," INT "," INT ")"
//! DIR       := north | south | east | west
//! ```
//!
//! `#` starts a comment that runs to the end of the line. Later statements
//! override earlier ones at the same offset, so openings can be carved out of
//! filled walls. Cuboid corners may be given in any order.

mod compile;
mod lexer;
mod parser;

use std::fmt;

use thiserror::Error;

use crate::block::Facing;
use crate::geom::Coord;

pub use compile::{compile, CompileError, MAX_PLACEMENTS};
pub use parser::parse;

/// Source position, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Span {
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Statement {
    Place {
        block: String,
        at: Coord,
        facing: Option<Facing>,
    },
    Fill {
        block: String,
        from: Coord,
        to: Coord,
    },
    Shell {
        block: String,
        from: Coord,
        to: Coord,
    },
    Line {
        block: String,
        from: Coord,
        to: Coord,
    },
    Pyramid {
        block: String,
        corner: Coord,
        base: u32,
        step: u32,
    },
}

impl fmt::Display for Statement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Statement::Place { block, at, facing } => {
                write!(f, "place {block} {at}")?;
                if let Some(fc) = facing {
                    write!(f, " facing {fc}")?;
                }
                Ok(())
            }
            Statement::Fill { block, from, to } => write!(f, "fill {block} {from} {to}"),
            Statement::Shell { block, from, to } => write!(f, "shell {block} {from} {to}"),
            Statement::Line { block, from, to } => write!(f, "line {block} {from} {to}"),
            Statement::Pyramid {
                block,
                corner,
                base,
                step,
            } => write!(f, "pyramid {block} {corner} {base} step {step}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpannedStatement {
    pub statement: Statement,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DslProgram {
    pub statements: Vec<SpannedStatement>,
}

impl DslProgram {
    pub fn len(&self) -> usize {
        self.statements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.statements.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Statement> {
        self.statements.iter().map(|s| &s.statement)
    }
}

/// Canonical source text, one statement per line.
impl fmt::Display for DslProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.statements {
            writeln!(f, "{}", s.statement)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DslError {
    #[error("syntax error at {span}: expected {expected}, found {found}")]
    Syntax {
        span: Span,
        expected: String,
        found: String,
    },
    #[error("unknown block id `{id}` at {span}")]
    UnknownBlockId { span: Span, id: String },
    #[error("`{id}` at {span} does not take a facing")]
    NotOrientable { span: Span, id: String },
    #[error("{0}")]
    Compile(#[from] CompileError),
}

/// Parses and compiles in one go.
pub fn build_blueprint(name: &str, source: &str) -> Result<crate::blueprint::Blueprint, DslError> {
    let program = parse(source)?;
    Ok(compile(name, &program)?)
}
