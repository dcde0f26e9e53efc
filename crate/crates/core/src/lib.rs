//! Deterministic voxel construction engine with an LLM planning harness.
pub mod bench;
pub mod block;
pub mod blueprint;
pub mod dsl;
pub mod geom;
pub mod llm;
pub mod memory;
pub mod path;
pub mod planner;
pub mod reflection;
pub mod world;

pub use geom::{BoundingBox, Coord};
