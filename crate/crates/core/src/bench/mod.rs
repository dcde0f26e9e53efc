//! Benchmark tasks, scoring, statistics and the ablation runner.

pub mod ablation;
pub mod checks;
pub mod judge;
pub mod stats;
pub mod task;

pub use ablation::{run_ablation, AblationCell, AblationConfig, AblationReport, CellKey, Delta, TrialClients, TrialRecord, FULL_GRID};
pub use checks::{structural_check, CheckReport, Checker};
pub use judge::{judge, parse_scores, EvalScore, JudgeError};
pub use stats::{pearson, spearman, StatsError};
pub use task::{Aspect, TaskSpec, TaskSpecError};
