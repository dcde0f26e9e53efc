use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use super::judge::{judge, EvalScore};
use super::stats::{mean, relative_change_pct, sample_stddev};
use super::{structural_check, TaskSpec};
use crate::geom::Coord;
use crate::llm::{run_task, BuildArtifacts, BuildStatus, Image, LlmClient, RunOptions, Session};
use crate::memory::{HashedBagOfWords, MemoryPool};
use crate::world::{BotState, WorldState};

/// One configuration of the memory and reflection modules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub memory: bool,
    pub reflection: bool,
}

impl CellKey {
    pub const fn new(memory: bool, reflection: bool) -> Self {
        CellKey { memory, reflection }
    }

    pub fn label(self) -> String {
        let on = |b: bool| if b { "on" } else { "off" };
        format!("memory={} reflection={}", on(self.memory), on(self.reflection))
    }
}

impl fmt::Display for CellKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

pub const FULL_GRID: [CellKey; 4] = [
    CellKey::new(false, false),
    CellKey::new(false, true),
    CellKey::new(true, false),
    CellKey::new(true, true),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub cell: CellKey,
    pub task: String,
    pub trial: u32,
    pub score: EvalScore,
    /// Set when the build or the judge failed; the score is then zero.
    pub failed: bool,
    pub error: Option<String>,
    pub status: Option<BuildStatus>,
    pub checks_passed: Option<bool>,
}

impl TrialRecord {
    pub fn percentage(&self) -> f64 {
        self.score.percentage
    }
}

/// Aggregate over the trials of one cell, for one task or (`task == None`)
/// pooled across tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub memory: bool,
    pub reflection: bool,
    pub task: Option<String>,
    pub mean_pct: f64,
    pub stddev_pct: f64,
    pub n_trials: usize,
    pub failures: usize,
}

impl AblationCell {
    pub fn key(&self) -> CellKey {
        CellKey::new(self.memory, self.reflection)
    }
}

/// Change in pooled mean when a module is switched on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub factor: String,
    pub baseline_mean: f64,
    pub treated_mean: f64,
    /// Percent change relative to the baseline; absent when it is zero.
    pub relative_pct: Option<f64>,
    /// Difference in percentage points.
    pub absolute_pts: f64,
}

impl Delta {
    fn between(factor: &str, baseline: &[f64], treated: &[f64]) -> Option<Self> {
        let (b, t) = (mean(baseline)?, mean(treated)?);
        Some(Delta {
            factor: factor.to_string(),
            baseline_mean: b,
            treated_mean: t,
            relative_pct: relative_change_pct(b, t),
            absolute_pts: t - b,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub trials: Vec<TrialRecord>,
    pub cells: Vec<AblationCell>,
    pub deltas: Vec<Delta>,
}

fn aggregate(key: CellKey, task: Option<&str>, trials: &[&TrialRecord]) -> Option<AblationCell> {
    let pcts: Vec<f64> = trials.iter().map(|t| t.percentage()).collect();
    Some(AblationCell {
        memory: key.memory,
        reflection: key.reflection,
        task: task.map(str::to_string),
        mean_pct: mean(&pcts)?,
        stddev_pct: sample_stddev(&pcts)?,
        n_trials: pcts.len(),
        failures: trials.iter().filter(|t| t.failed).count(),
    })
}

impl AblationReport {
    pub fn from_trials(trials: Vec<TrialRecord>) -> Self {
        let keys: BTreeSet<CellKey> = trials.iter().map(|t| t.cell).collect();
        let mut tasks: Vec<&str> = Vec::new();
        for t in &trials {
            if !tasks.contains(&t.task.as_str()) {
                tasks.push(&t.task);
            }
        }
        let mut cells = Vec::new();
        for &key in &keys {
            for task in &tasks {
                let sel: Vec<&TrialRecord> = trials.iter().filter(|t| t.cell == key && t.task == *task).collect();
                cells.extend(aggregate(key, Some(task), &sel));
            }
            let sel: Vec<&TrialRecord> = trials.iter().filter(|t| t.cell == key).collect();
            cells.extend(aggregate(key, None, &sel));
        }

        let pcts = |pred: &dyn Fn(CellKey) -> bool| -> Vec<f64> {
            trials.iter().filter(|t| pred(t.cell)).map(|t| t.percentage()).collect()
        };
        let mut deltas = Vec::new();
        deltas.extend(Delta::between("memory", &pcts(&|k| !k.memory), &pcts(&|k| k.memory)));
        deltas.extend(Delta::between("reflection", &pcts(&|k| !k.reflection), &pcts(&|k| k.reflection)));
        let (none, both) = (CellKey::new(false, false), CellKey::new(true, true));
        deltas.extend(Delta::between("memory+reflection", &pcts(&|k| k == none), &pcts(&|k| k == both)));
        AblationReport { trials, cells, deltas }
    }

    pub fn pooled(&self, key: CellKey) -> Option<&AblationCell> {
        self.cells.iter().find(|c| c.key() == key && c.task.is_none())
    }

    pub fn cell(&self, key: CellKey, task: &str) -> Option<&AblationCell> {
        self.cells.iter().find(|c| c.key() == key && c.task.as_deref() == Some(task))
    }

    pub fn delta(&self, factor: &str) -> Option<&Delta> {
        self.deltas.iter().find(|d| d.factor == factor)
    }

    /// `cell,task,trial,percentage,aspects,failed` with aspects as
    /// `name=score` pairs joined by `;`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("cell,task,trial,percentage,aspects,failed\n");
        for t in &self.trials {
            let aspects: Vec<String> = t.score.per_aspect.iter().map(|(a, s)| format!("{a}={s}")).collect();
            let _ = writeln!(
                out,
                "{},{},{},{:.4},{},{}",
                t.cell,
                csv_field(&t.task),
                t.trial,
                t.percentage(),
                aspects.join(";"),
                t.failed
            );
        }
        out
    }

    pub fn to_text(&self) -> String {
        let rows: Vec<[String; 6]> = self
            .cells
            .iter()
            .map(|c| {
                [
                    c.key().label(),
                    c.task.clone().unwrap_or_else(|| "(all)".into()),
                    format!("{:.2}", c.mean_pct),
                    format!("{:.2}", c.stddev_pct),
                    c.n_trials.to_string(),
                    c.failures.to_string(),
                ]
            })
            .collect();
        let header = ["cell", "task", "mean_pct", "stddev_pct", "trials", "failures"].map(String::from);
        let mut widths = header.clone().map(|h| h.len());
        for r in &rows {
            for (w, v) in widths.iter_mut().zip(r) {
                *w = (*w).max(v.len());
            }
        }
        let mut out = String::new();
        for r in std::iter::once(&header).chain(&rows) {
            let line: Vec<String> = r
                .iter()
                .zip(widths)
                .enumerate()
                .map(|(i, (v, w))| if i < 2 { format!("{v:<w$}") } else { format!("{v:>w$}") })
                .collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
        }
        if !self.deltas.is_empty() {
            out.push_str("\ndeltas (treated vs baseline)\n");
            for d in &self.deltas {
                let rel = d
                    .relative_pct
                    .map_or_else(|| "n/a".to_string(), |r| format!("{r:+.2}%"));
                let _ = writeln!(
                    out,
                    "{}: {:.2} -> {:.2}  relative {}  absolute {:+.2} pts",
                    d.factor, d.baseline_mean, d.treated_mean, rel, d.absolute_pts
                );
            }
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Clients for one trial: one drives the build, the other judges it.
pub struct TrialClients {
    pub builder: Box<dyn LlmClient>,
    pub judge: Box<dyn LlmClient>,
}

#[derive(Debug, Clone)]
pub struct AblationConfig {
    pub grid: Vec<CellKey>,
    /// Overrides each task's own trial count.
    pub trials: Option<u32>,
    /// Reflection rounds allowed in cells with reflection on.
    pub max_reflections: u32,
    pub run: RunOptions,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            grid: FULL_GRID.to_vec(),
            trials: None,
            max_reflections: 1,
            run: RunOptions::default(),
        }
    }
}

/// Builds and judges one trial. Failures become zero-score records.
pub fn run_trial(
    spec: &TaskSpec,
    cell: CellKey,
    trial: u32,
    clients: &mut TrialClients,
    memory: Option<&MemoryPool>,
    cfg: &AblationConfig,
) -> (TrialRecord, BuildArtifacts) {
    let mut task = spec.task.clone();
    task.config.memory = cell.memory;
    task.config.max_reflections = if cell.reflection { cfg.max_reflections } else { 0 };
    let world = WorldState::default();
    let bot = BotState::at(Coord::new(0, world.surface_y(), 0));
    let art = run_task(clients.builder.as_mut(), &task, &world, &bot, memory, &cfg.run);

    let mut record = TrialRecord {
        cell,
        task: spec.name().to_string(),
        trial,
        score: EvalScore::zero(&spec.applicable_aspects),
        failed: true,
        error: None,
        status: Some(art.result.status),
        checks_passed: None,
    };
    if art.result.status == BuildStatus::Error {
        record.error = Some(
            art.result
                .error
                .as_ref()
                .map_or_else(|| "build failed".to_string(), ToString::to_string),
        );
        return (record, art);
    }
    record.checks_passed = Some(structural_check(spec.checker(), &art.world).passed());
    let Some(render) = art.renders.last() else {
        record.error = Some("no render to judge".into());
        return (record, art);
    };
    let image = render.png.clone().map(|bytes| Image {
        mime: "image/png".into(),
        bytes,
    });
    let mut session = Session::new(clients.judge.as_mut(), 0.0);
    match judge(&mut session, spec.instruction(), &spec.applicable_aspects, &render.views, image) {
        Ok(score) => {
            record.score = score;
            record.failed = false;
        }
        Err(e) => record.error = Some(format!("judge: {e}")),
    }
    (record, art)
}

/// Runs every task in every cell of the grid. Each (cell, task) pair gets its
/// own in-memory pool that persists across that pair's trials. A failing
/// trial never stops the grid.
pub fn run_ablation<F>(tasks: &[TaskSpec], cfg: &AblationConfig, mut clients: F) -> AblationReport
where
    F: FnMut(&TaskSpec, CellKey, u32) -> Result<TrialClients, String>,
{
    run_ablation_with(tasks, cfg, &mut clients, |_, _| {})
}

/// As [`run_ablation`], handing each finished trial to `observe`.
pub fn run_ablation_with<F, O>(tasks: &[TaskSpec], cfg: &AblationConfig, clients: &mut F, mut observe: O) -> AblationReport
where
    F: FnMut(&TaskSpec, CellKey, u32) -> Result<TrialClients, String>,
    O: FnMut(&TrialRecord, Option<&BuildArtifacts>),
{
    let mut trials = Vec::new();
    let mut pools: BTreeMap<(CellKey, String), MemoryPool> = BTreeMap::new();
    for &cell in &cfg.grid {
        for spec in tasks {
            let n = cfg.trials.unwrap_or(spec.trials);
            for trial in 0..n {
                let record = match clients(spec, cell, trial) {
                    Ok(mut c) => {
                        let pool = cell.memory.then(|| {
                            &*pools
                                .entry((cell, spec.name().to_string()))
                                .or_insert_with(|| MemoryPool::in_memory(HashedBagOfWords::default()))
                        });
                        let (record, art) = run_trial(spec, cell, trial, &mut c, pool, cfg);
                        observe(&record, Some(&art));
                        record
                    }
                    Err(e) => {
                        let record = TrialRecord {
                            cell,
                            task: spec.name().to_string(),
                            trial,
                            score: EvalScore::zero(&spec.applicable_aspects),
                            failed: true,
                            error: Some(format!("client: {e}")),
                            status: None,
                            checks_passed: None,
                        };
                        observe(&record, None);
                        record
                    }
                };
                trials.push(record);
            }
        }
    }
    AblationReport::from_trials(trials)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::Aspect;
    use crate::llm::{ScriptedClient, TranscriptEntry};

    fn record(cell: CellKey, task: &str, trial: u32, pct: f64) -> TrialRecord {
        let mut score = EvalScore::zero(&[Aspect::Correctness]);
        score.per_aspect.insert(Aspect::Correctness, pct / 10.0);
        score.total = pct / 10.0;
        score.percentage = pct;
        TrialRecord {
            cell,
            task: task.into(),
            trial,
            score,
            failed: false,
            error: None,
            status: Some(BuildStatus::Complete),
            checks_passed: Some(true),
        }
    }

    #[test]
    fn constant_trials() {
        let k = CellKey::new(true, true);
        let r = AblationReport::from_trials((0..10).map(|i| record(k, "a", i, 80.0)).collect());
        let c = r.pooled(k).unwrap();
        assert_eq!((c.mean_pct, c.stddev_pct, c.n_trials), (80.0, 0.0, 10));
    }

    #[test]
    fn two_trials_spread() {
        let k = CellKey::new(false, true);
        let r = AblationReport::from_trials(vec![record(k, "a", 0, 70.0), record(k, "a", 1, 90.0)]);
        let c = r.cell(k, "a").unwrap();
        assert_eq!(c.mean_pct, 80.0);
        assert!((c.stddev_pct - 14.142135623730951).abs() < 1e-9);
    }

    #[test]
    fn memory_delta_is_relative_and_absolute() {
        let off = CellKey::new(false, true);
        let on = CellKey::new(true, true);
        let r = AblationReport::from_trials(vec![
            record(off, "a", 0, 50.0),
            record(off, "a", 1, 58.6),
            record(on, "a", 0, 80.0),
        ]);
        let d = r.delta("memory").unwrap();
        assert!((d.relative_pct.unwrap() - 47.3297).abs() < 1e-3);
        assert!((d.absolute_pts - 25.7).abs() < 1e-9);
        assert!(r.delta("reflection").is_none());
        assert!(r.to_text().contains("memory: 54.30 -> 80.00  relative +47.33%  absolute +25.70 pts"));
    }

    #[test]
    fn csv_layout() {
        let k = CellKey::new(true, false);
        let r = AblationReport::from_trials(vec![record(k, "x,y", 3, 42.5)]);
        assert_eq!(
            r.to_csv(),
            "cell,task,trial,percentage,aspects,failed\nmemory=on reflection=off,\"x,y\",3,42.5000,correctness=4.25,false\n"
        );
    }

    #[test]
    fn failures_score_zero_and_grid_continues() {
        let spec = TaskSpec::from_json(
            r#"{"name":"hut","instruction":"a hut","checker":"wooden_house","applicable_aspects":["correctness"],"trials":2}"#,
        )
        .unwrap();
        let cfg = AblationConfig {
            grid: vec![CellKey::new(false, false), CellKey::new(true, false)],
            ..AblationConfig::default()
        };
        let mut calls = 0;
        let report = run_ablation(&[spec], &cfg, |_, cell, _| {
            calls += 1;
            if cell.memory {
                return Err("no client".into());
            }
            Ok(TrialClients {
                builder: Box::new(ScriptedClient::new(vec![TranscriptEntry {
                    expect_substring: String::new(),
                    response: "nonsense".into(),
                }])),
                judge: Box::new(ScriptedClient::new(Vec::new())),
            })
        });
        assert_eq!(calls, 4);
        assert_eq!(report.trials.len(), 4);
        assert!(report.trials.iter().all(|t| t.failed && t.percentage() == 0.0));
        assert_eq!(report.pooled(CellKey::new(true, false)).unwrap().failures, 2);
        assert!(report.trials[0].error.as_deref().unwrap().contains("synopsis"), "{:?}", report.trials[0].error);
    }
}
