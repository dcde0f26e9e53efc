use std::path::{Path, PathBuf};

use clap::ValueEnum;
use voxelsmith::bench::{CellKey, TaskSpec, TrialClients};
use voxelsmith::llm::live::LiveClient;
use voxelsmith::llm::{LlmClient, LlmError, ScriptedClient};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Backend {
    Live,
    Scripted,
}

pub fn live(trace: Option<PathBuf>) -> Result<Box<dyn LlmClient>, LlmError> {
    let mut c = LiveClient::from_env()?;
    c.trace_dir = trace;
    Ok(Box::new(c))
}

pub fn scripted(path: &Path) -> Result<Box<dyn LlmClient>, LlmError> {
    Ok(Box::new(ScriptedClient::from_file(path)?))
}

pub fn cell_slug(cell: CellKey) -> String {
    let on = |b: bool| if b { "on" } else { "off" };
    format!("memory-{}_reflection-{}", on(cell.memory), on(cell.reflection))
}

/// Transcript lookup inside a directory: `<task>.<cell>.<kind>json` first,
/// then `<task>.<kind>json`, where kind is empty for the builder and `judge.`
/// for the judge.
pub fn transcript_for(dir: &Path, task: &str, cell: CellKey, judge: bool) -> PathBuf {
    let kind = if judge { "judge." } else { "" };
    let specific = dir.join(format!("{task}.{}.{kind}json", cell_slug(cell)));
    if specific.is_file() {
        specific
    } else {
        dir.join(format!("{task}.{kind}json"))
    }
}

/// Client factory for benchmark grids.
pub fn trial_factory(
    backend: Backend,
    transcripts: Option<PathBuf>,
    trace: Option<PathBuf>,
) -> impl FnMut(&TaskSpec, CellKey, u32) -> Result<TrialClients, String> {
    move |spec, cell, trial| {
        let made = match backend {
            Backend::Live => {
                let dir = trace
                    .as_ref()
                    .map(|t| t.join(cell_slug(cell)).join(format!("{}-{trial}", spec.name())));
                live(dir.as_ref().map(|d| d.join("build")))
                    .and_then(|builder| Ok((builder, live(dir.map(|d| d.join("judge")))?)))
            }
            Backend::Scripted => {
                let dir = transcripts.as_deref().expect("checked by the caller");
                scripted(&transcript_for(dir, spec.name(), cell, false))
                    .and_then(|builder| Ok((builder, scripted(&transcript_for(dir, spec.name(), cell, true))?)))
            }
        };
        made.map(|(builder, judge)| TrialClients { builder, judge })
            .map_err(|e| e.to_string())
    }
}
