//! Synopsis, blueprint generation, build, and the repair loop.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{extract_json_object, prompts, string_field, Exchange, Image, LlmClient, LlmError, Message, Role, Session};
use crate::bench::checks::{structural_check, Checker};
use crate::blueprint::{diff, Blueprint, Mismatch};
use crate::dsl::{self, DslError, DslProgram};
use crate::geom::{BoundingBox, Coord};
use crate::memory::{MemoryError, MemoryPool, Retrieved, DEFAULT_TOP_K};
use crate::planner::{execute, plan_with, ActionPlan, ExecutionReport, PlanOptions, PlanStats};
use crate::reflection::{self, render_bbox, render_png, render_views, ViewSet};
use crate::world::{BotState, Snapshot, WorldState};

/// Offsets a blueprint may use, relative to the build origin.
pub const BUILD_LIMITS: BoundingBox = BoundingBox {
    min: Coord::new(-32, 0, -32),
    max: Coord::new(63, 95, 63),
};

/// Where the bot starts, relative to the build origin.
pub const BOT_START: Coord = Coord::new(-2, 0, -2);

pub const SECTION_HEADINGS: [&str; 3] = ["Components and Positioning", "Dimensional Layout", "Description"];

pub const REFLECTION_HINT_NOTE: &str =
    "reflection prompts carry the detected problems as text hints after the template";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("task has neither an instruction nor an image")]
    EmptyTask,
    #[error("task needs an image but the client is text-only")]
    MultimodalUnsupported,
    #[error("cannot read image {path}: {reason}")]
    ImageRead { path: String, reason: String },
    #[error("synopsis is missing the `{0}` section")]
    SectionMissing(String),
    #[error("{stage} reply has the wrong shape: {reason}")]
    JsonShape { stage: &'static str, reason: String },
    #[error("{error}")]
    Dsl { source_text: String, error: DslError },
    #[error("reflection needs at least one detected problem")]
    NothingToReflect,
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
}

fn default_true() -> bool {
    true
}

fn default_reflections() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskConfig {
    #[serde(default = "default_true")]
    pub memory: bool,
    #[serde(default = "default_reflections")]
    pub max_reflections: u32,
    #[serde(default)]
    pub temperature: f64,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            memory: true,
            max_reflections: 1,
            temperature: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInput {
    pub name: String,
    #[serde(default)]
    pub instruction: Option<String>,
    #[serde(default)]
    pub image_ref: Option<PathBuf>,
    #[serde(default)]
    pub config: TaskConfig,
    /// Requirements the finished structure must meet besides matching its
    /// own program.
    #[serde(default)]
    pub checker: Option<Checker>,
}

impl TaskInput {
    pub fn new(name: impl Into<String>, instruction: impl Into<String>) -> Self {
        TaskInput {
            name: name.into(),
            instruction: Some(instruction.into()),
            image_ref: None,
            config: TaskConfig::default(),
            checker: None,
        }
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    fn instruction_text(&self) -> Option<&str> {
        self.instruction.as_deref().filter(|s| !s.trim().is_empty())
    }

    /// Memory key and retrieval query.
    pub fn query_text(&self) -> &str {
        self.instruction_text().unwrap_or(&self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutSynopsis {
    pub components_positioning: String,
    pub dimensional_layout: String,
    pub description_sequence: String,
    pub raw: String,
}

fn heading_of(line: &str) -> Option<(usize, &str)> {
    let stripped = line.trim_start_matches(|c: char| {
        c.is_whitespace() || c.is_ascii_digit() || matches!(c, '#' | '*' | '.' | ')' | '-' | '_')
    });
    SECTION_HEADINGS.iter().enumerate().find_map(|(i, h)| {
        let head = stripped.get(..h.len())?;
        head.eq_ignore_ascii_case(h).then(|| {
            let rest = &stripped[h.len()..];
            (i, rest.trim_start_matches(['*', '_', ':', ' ']).trim())
        })
    })
}

/// Splits a reply into the three sections by their headings.
pub fn parse_synopsis(raw: &str) -> Result<LayoutSynopsis, PipelineError> {
    let mut sections: [Option<Vec<&str>>; 3] = [None, None, None];
    let mut current: Option<usize> = None;
    for line in raw.lines() {
        match heading_of(line) {
            Some((i, rest)) if sections[i].is_none() => {
                sections[i] = Some(if rest.is_empty() { vec![] } else { vec![rest] });
                current = Some(i);
            }
            _ => {
                if let Some(i) = current {
                    sections[i].as_mut().expect("current section exists").push(line);
                }
            }
        }
    }
    let mut text = Vec::with_capacity(3);
    for (i, s) in sections.into_iter().enumerate() {
        let body = s.map(|lines| lines.join("\n").trim().to_string()).unwrap_or_default();
        if body.is_empty() {
            return Err(PipelineError::SectionMissing(SECTION_HEADINGS[i].to_string()));
        }
        text.push(body);
    }
    let mut text = text.into_iter();
    Ok(LayoutSynopsis {
        components_positioning: text.next().expect("three sections"),
        dimensional_layout: text.next().expect("three sections"),
        description_sequence: text.next().expect("three sections"),
        raw: raw.to_string(),
    })
}

fn load_image(task: &TaskInput, base_dir: Option<&Path>) -> Result<Option<Image>, PipelineError> {
    let Some(rel) = &task.image_ref else {
        return Ok(None);
    };
    let path = match base_dir {
        Some(dir) if rel.is_relative() => dir.join(rel),
        _ => rel.clone(),
    };
    let bytes = std::fs::read(&path).map_err(|e| PipelineError::ImageRead {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    let mime = match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("webp") => "image/webp",
        _ => "image/png",
    };
    Ok(Some(Image {
        mime: mime.to_string(),
        bytes,
    }))
}

fn assistant(text: String) -> Message {
    Message {
        role: Role::Assistant,
        text,
        image: None,
    }
}

/// First stage: the layout synopsis. One repair request when a section is
/// missing.
pub fn synopsis(session: &mut Session<'_>, task: &TaskInput, image: Option<Image>) -> Result<LayoutSynopsis, PipelineError> {
    if task.instruction_text().is_none() && task.image_ref.is_none() {
        return Err(PipelineError::EmptyTask);
    }
    if task.image_ref.is_some() && !session.supports_images() {
        return Err(PipelineError::MultimodalUnsupported);
    }
    let text = task.instruction_text().unwrap_or("See the attached reference image.");
    let mut messages = vec![Message::user(prompts::layout_synopsis(text)).with_image(image)];
    let first = session.ask("synopsis", &messages, false)?;
    match parse_synopsis(&first) {
        Ok(s) => Ok(s),
        Err(PipelineError::SectionMissing(name)) => {
            messages.push(assistant(first));
            messages.push(Message::user(format!(
                "Your reply is missing the \"{name}\" section. Reply again with all three sections, each introduced by its heading: 1. Components and Positioning, 2. Dimensional Layout, 3. Description."
            )));
            let second = session.ask("synopsis-repair", &messages, false)?;
            parse_synopsis(&second)
        }
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedBlueprint {
    pub source: String,
    pub program: DslProgram,
}

fn code_of(reply: &str) -> Result<String, String> {
    string_field(&extract_json_object(reply)?, "code")
}

/// Second stage: the blueprint program. A malformed reply or a program that
/// does not parse earns one repair request each.
pub fn generate_blueprint(
    session: &mut Session<'_>,
    synopsis: &LayoutSynopsis,
    retrieved: &[Retrieved],
) -> Result<GeneratedBlueprint, PipelineError> {
    let mut messages = vec![
        Message::system(prompts::blueprint_system()),
        Message::system(prompts::dsl_reference()),
        Message::user(prompts::blueprint_user(retrieved, synopsis.raw.trim())),
    ];
    let reply = session.ask("blueprint", &messages, true)?;
    let source = match code_of(&reply) {
        Ok(code) => code,
        Err(reason) => {
            messages.push(assistant(reply));
            messages.push(Message::user(format!(
                "Your reply could not be used: {reason}. Reply again with only a compact JSON object on a single line whose key is 'code'."
            )));
            let again = session.ask("blueprint-repair", &messages, true)?;
            code_of(&again).map_err(|reason| PipelineError::JsonShape {
                stage: "blueprint",
                reason,
            })?
        }
    };
    match dsl::parse(&source) {
        Ok(program) => Ok(GeneratedBlueprint { source, program }),
        Err(error) => {
            messages.push(assistant(format!("{{\"code\":{}}}", serde_json::Value::String(source.clone()))));
            messages.push(Message::user(format!(
                "The program does not parse: {error}. Reply again with the corrected program as a compact JSON object whose key is 'code'."
            )));
            let again = session.ask("blueprint-parse-repair", &messages, true)?;
            let source = code_of(&again).map_err(|reason| PipelineError::JsonShape {
                stage: "blueprint",
                reason,
            })?;
            match dsl::parse(&source) {
                Ok(program) => Ok(GeneratedBlueprint { source, program }),
                Err(error) => Err(PipelineError::Dsl {
                    source_text: source,
                    error,
                }),
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuildStatus {
    Complete,
    ResidualDiff,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: String,
    pub message: String,
}

impl StageFailure {
    fn new(stage: &str, message: impl ToString) -> Self {
        StageFailure {
            stage: stage.to_string(),
            message: message.to_string(),
        }
    }
}

impl fmt::Display for StageFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.stage, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecSummary {
    pub success: bool,
    pub executed: usize,
    pub total_actions: usize,
    pub failed_at: Option<usize>,
    pub failure: Option<String>,
    pub scaffold_peak: usize,
    pub scaffold_remaining: usize,
}

impl From<&ExecutionReport> for ExecSummary {
    fn from(r: &ExecutionReport) -> Self {
        ExecSummary {
            success: r.success,
            executed: r.executed(),
            total_actions: r.total_actions,
            failed_at: r.failed_at,
            failure: r
                .failures()
                .next()
                .and_then(|o| o.error.as_ref())
                .map(ToString::to_string),
            scaffold_peak: r.scaffold_peak,
            scaffold_remaining: r.scaffold_remaining,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: u32,
    /// Analysis that produced this round's program, absent for round 0.
    pub reflection: Option<String>,
    pub dsl: String,
    pub placements: Option<usize>,
    pub warnings: Vec<String>,
    pub plan: Option<PlanStats>,
    pub execution: Option<ExecSummary>,
    pub diff: Vec<Mismatch>,
    /// Failed structural predicates of the task's checker.
    pub unmet: Vec<String>,
    pub error: Option<StageFailure>,
}

impl RoundReport {
    pub fn succeeded(&self) -> bool {
        self.error.is_none()
            && self.execution.as_ref().is_some_and(|e| e.success)
            && self.diff.is_empty()
            && self.unmet.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedRef {
    pub id: u64,
    pub score: f64,
    pub task_text: String,
}

/// Run summary. Contains no wall-clock data, so identical inputs give
/// identical JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildResult {
    pub task: String,
    pub status: BuildStatus,
    pub origin: Coord,
    pub memory_enabled: bool,
    pub max_reflections: u32,
    pub reflections_used: u32,
    pub retrieved: Vec<RetrievedRef>,
    pub memory_record: Option<u64>,
    pub rounds: Vec<RoundReport>,
    pub final_diff: Vec<Mismatch>,
    pub final_unmet: Vec<String>,
    pub error: Option<StageFailure>,
    pub notes: Vec<String>,
}

impl BuildResult {
    pub fn success(&self) -> bool {
        self.status == BuildStatus::Complete
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundRender {
    pub round: u32,
    pub views: ViewSet,
    pub png: Option<Vec<u8>>,
}

/// Everything a run produced, for writing to a run directory.
#[derive(Debug, Clone)]
pub struct BuildArtifacts {
    pub result: BuildResult,
    pub synopsis: Option<LayoutSynopsis>,
    pub final_dsl: Option<String>,
    pub blueprint: Option<Blueprint>,
    pub plan: Option<ActionPlan>,
    pub initial: Snapshot,
    pub world: WorldState,
    pub renders: Vec<RoundRender>,
    pub exchanges: Vec<Exchange>,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub top_k: usize,
    pub planner: PlanOptions,
    pub render_png: bool,
    /// Directory relative image paths are resolved against.
    pub base_dir: Option<PathBuf>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            top_k: DEFAULT_TOP_K,
            planner: PlanOptions::default(),
            render_png: true,
            base_dir: None,
        }
    }
}

struct RoundOutcome {
    report: RoundReport,
    world: WorldState,
    blueprint: Option<Blueprint>,
    plan: Option<ActionPlan>,
    hints: Vec<String>,
}

fn relative(m: &Mismatch, origin: Coord) -> Mismatch {
    let mut m = m.clone();
    match &mut m {
        Mismatch::Missing { at, .. } | Mismatch::Wrong { at, .. } | Mismatch::Extra { at, .. } => {
            *at = *at - origin;
        }
    }
    m
}

#[allow(clippy::too_many_arguments)]
fn build_round(
    world0: &WorldState,
    bot0: &BotState,
    origin: Coord,
    name: &str,
    checker: Option<Checker>,
    round: u32,
    dsl_source: &str,
    opts: &RunOptions,
) -> RoundOutcome {
    let mut out = RoundOutcome {
        report: RoundReport {
            round,
            reflection: None,
            dsl: dsl_source.to_string(),
            placements: None,
            warnings: Vec::new(),
            plan: None,
            execution: None,
            diff: Vec::new(),
            unmet: Vec::new(),
            error: None,
        },
        world: world0.clone(),
        blueprint: None,
        plan: None,
        hints: Vec::new(),
    };

    let bp = match dsl::build_blueprint(name, dsl_source) {
        Ok(bp) => bp,
        Err(e) => {
            out.hints.push(format!("the program is not valid: {e}"));
            out.report.error = Some(StageFailure::new("compile", e));
            return out;
        }
    };
    out.report.placements = Some(bp.len());
    let validation = bp.validate(&BUILD_LIMITS);
    out.report.warnings = validation.warnings().map(ToString::to_string).collect();
    if !validation.is_valid() {
        let errors: Vec<String> = validation.errors().map(ToString::to_string).collect();
        out.hints.extend(errors.iter().cloned());
        out.report.error = Some(StageFailure::new("validate", errors.join("; ")));
        out.blueprint = Some(bp);
        return out;
    }

    let mut bot = bot0.clone();
    match plan_with(&out.world, &bot, origin, &bp, &opts.planner) {
        Ok(plan) => {
            out.report.plan = Some(plan.stats());
            let report = execute(&plan, &mut out.world, &mut bot);
            if let Some(f) = report.failures().next().and_then(|o| o.error.as_ref()) {
                out.hints.push(format!("execution stopped: {f}"));
            }
            out.report.execution = Some(ExecSummary::from(&report));
            out.plan = Some(plan);
        }
        Err(e) => {
            out.hints.push(format!("the structure cannot be built in this order: {e}"));
            out.report.error = Some(StageFailure::new("plan", e));
        }
    }
    out.report.diff = diff(&out.world, origin, &bp);
    out.hints
        .extend(out.report.diff.iter().map(|m| relative(m, origin).to_string()));
    if let Some(checker) = checker {
        let report = structural_check(checker, &out.world);
        out.report.unmet = report.failures().map(ToString::to_string).collect();
        out.hints
            .extend(report.failures().map(|p| format!("requirement not met: {} ({})", p.name, p.detail)));
    }
    out.blueprint = Some(bp);
    out
}

/// Full pipeline for one task. Never panics on model misbehaviour; every
/// failure ends up in the returned result.
pub fn run_task(
    client: &mut dyn LlmClient,
    task: &TaskInput,
    world: &WorldState,
    bot: &BotState,
    memory: Option<&MemoryPool>,
    opts: &RunOptions,
) -> BuildArtifacts {
    let origin = Coord::new(0, world.surface_y(), 0);
    let memory = memory.filter(|_| task.config.memory);
    let mut session = Session::new(client, task.config.temperature);
    let mut art = BuildArtifacts {
        result: BuildResult {
            task: task.name.clone(),
            status: BuildStatus::Error,
            origin,
            memory_enabled: memory.is_some(),
            max_reflections: task.config.max_reflections,
            reflections_used: 0,
            retrieved: Vec::new(),
            memory_record: None,
            rounds: Vec::new(),
            final_diff: Vec::new(),
            final_unmet: Vec::new(),
            error: None,
            notes: Vec::new(),
        },
        synopsis: None,
        final_dsl: None,
        blueprint: None,
        plan: None,
        initial: world.snapshot(),
        world: world.clone(),
        renders: Vec::new(),
        exchanges: Vec::new(),
    };

    let outcome = drive(&mut session, task, world, bot, origin, memory, opts, &mut art);
    if let Err((stage, e)) = outcome {
        art.result.status = BuildStatus::Error;
        art.result.error = Some(StageFailure::new(stage, e));
    }
    art.exchanges = std::mem::take(&mut session.log);
    art
}

#[allow(clippy::too_many_arguments)]
fn drive(
    session: &mut Session<'_>,
    task: &TaskInput,
    world: &WorldState,
    bot: &BotState,
    origin: Coord,
    memory: Option<&MemoryPool>,
    opts: &RunOptions,
    art: &mut BuildArtifacts,
) -> Result<(), (&'static str, PipelineError)> {
    let image = if task.image_ref.is_some() && !session.supports_images() {
        return Err(("synopsis", PipelineError::MultimodalUnsupported));
    } else {
        load_image(task, opts.base_dir.as_deref()).map_err(|e| ("synopsis", e))?
    };
    let syn = synopsis(session, task, image).map_err(|e| ("synopsis", e))?;
    let structure = syn.raw.trim().to_string();
    art.synopsis = Some(syn.clone());

    let retrieved = match memory {
        Some(pool) => pool
            .retrieve(task.query_text(), opts.top_k)
            .map_err(|e| ("retrieve", e.into()))?,
        None => Vec::new(),
    };
    art.result.retrieved = retrieved
        .iter()
        .map(|r| RetrievedRef {
            id: r.record.id,
            score: r.score,
            task_text: r.record.task_text.clone(),
        })
        .collect();

    let mut source = match generate_blueprint(session, &syn, &retrieved) {
        Ok(g) => g.source,
        Err(PipelineError::Dsl { source_text, .. }) => source_text,
        Err(e) => return Err(("blueprint", e)),
    };

    let start = origin + BOT_START;
    let bot = BotState { position: start, ..bot.clone() };
    let mut reflection_text = None;
    let mut round = 0u32;
    loop {
        let mut out = build_round(world, &bot, origin, &task.name, task.checker, round, &source, opts);
        out.report.reflection = reflection_text.take();
        let intended = out.blueprint.as_ref().and_then(|b| b.bbox().ok()).map(|b| b.translate(origin));
        let bbox = render_bbox(&out.world, intended);
        let views = render_views(&out.world, &bbox);
        let png = opts.render_png.then(|| render_png(&out.world, &bbox));
        art.renders.push(RoundRender {
            round,
            views: views.clone(),
            png: png.clone(),
        });
        let done = out.report.succeeded();
        art.result.final_diff = out.report.diff.clone();
        art.result.final_unmet = out.report.unmet.clone();
        art.result.rounds.push(out.report);
        art.world = out.world;
        art.blueprint = out.blueprint;
        art.plan = out.plan;
        art.final_dsl = Some(source.clone());

        if done {
            art.result.status = BuildStatus::Complete;
            break;
        }
        if round >= task.config.max_reflections {
            art.result.status = BuildStatus::ResidualDiff;
            break;
        }
        if art.result.notes.is_empty() {
            art.result.notes.push(REFLECTION_HINT_NOTE.to_string());
        }
        let image = png.map(|bytes| Image {
            mime: "image/png".into(),
            bytes,
        });
        let r = reflection::reflect(session, &structure, &views, image, &source, &out.hints)
            .map_err(|e| ("reflection", e))?;
        art.result.reflections_used += 1;
        source = r.repaired_dsl;
        reflection_text = Some(r.reflection_text);
        round += 1;
    }

    if art.result.status == BuildStatus::Complete {
        if let Some(pool) = memory {
            match pool.add(task.query_text(), &source) {
                Ok(rec) => art.result.memory_record = Some(rec.id),
                Err(e) => art.result.notes.push(format!("memory write failed: {e}")),
            }
        }
    }
    Ok(())
}
