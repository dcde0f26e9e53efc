//! `voxelsmith` command line: builds, benchmark grids, correlation, rendering
//! and memory-pool administration.

mod clients;
mod rundir;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use voxelsmith::bench::ablation::run_ablation_with;
use voxelsmith::bench::{pearson, spearman, AblationConfig, CellKey, TaskSpec, FULL_GRID};
use voxelsmith::llm::{run_task, BuildArtifacts, BuildStatus, LlmClient, RunOptions, TaskInput};
use voxelsmith::memory::{HashedBagOfWords, MemoryPool, DEFAULT_TOP_K};
use voxelsmith::reflection::{render_bbox, render_png, render_views};
use voxelsmith::world::{BotState, Snapshot, WorldState};
use voxelsmith::Coord;

use clients::{cell_slug, Backend};
use rundir::RunDir;

const EXIT_OK: u8 = 0;
const EXIT_RESIDUAL: u8 = 2;
const EXIT_PIPELINE: u8 = 3;
const EXIT_USAGE: u8 = 64;
const EXIT_DATA: u8 = 65;

const DEFAULT_MEMORY_PATH: &str = ".voxelsmith/memory.jsonl";

#[derive(Parser)]
#[command(name = "voxelsmith", version, about = "Voxel construction from natural-language instructions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct LlmArgs {
    /// Model backend.
    #[arg(long, value_enum, default_value = "live")]
    llm: Backend,
    /// Scripted responses: a JSON file for `build`, a directory for `bench`
    /// and `ablate`.
    #[arg(long, value_name = "PATH")]
    transcript: Option<PathBuf>,
    /// Keep raw request and response bodies (live backend).
    #[arg(long)]
    trace: bool,
}

#[derive(Args, Clone)]
struct MemoryFlags {
    /// Retrieve from and write to the memory pool.
    #[arg(long, overrides_with = "no_memory")]
    memory: bool,
    #[arg(long, overrides_with = "memory")]
    no_memory: bool,
    #[arg(long, value_name = "FILE", default_value = DEFAULT_MEMORY_PATH)]
    memory_path: PathBuf,
    #[arg(long, value_name = "N", default_value_t = DEFAULT_TOP_K)]
    top_k: usize,
}

impl MemoryFlags {
    fn choice(&self) -> Option<bool> {
        if self.no_memory {
            Some(false)
        } else if self.memory {
            Some(true)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Grid {
    /// Memory and reflection, both on and off.
    Full,
    /// Memory on and off, reflection on.
    Memory,
    /// Reflection on and off, memory on.
    Reflection,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Txt,
    Png,
}

#[derive(Subcommand)]
enum Command {
    /// Build one task through the full pipeline.
    Build {
        task: PathBuf,
        #[command(flatten)]
        llm: LlmArgs,
        #[command(flatten)]
        memory: MemoryFlags,
        /// Maximum reflection rounds.
        #[arg(long, value_name = "N")]
        reflect: Option<u32>,
        #[arg(long, value_name = "DIR", default_value = "runs")]
        out: PathBuf,
        /// Skip the PNG renders.
        #[arg(long)]
        no_png: bool,
    },
    /// Build and judge benchmark tasks with one configuration.
    Bench {
        #[arg(default_value = "bench")]
        dir: PathBuf,
        /// Restrict to these tasks.
        #[arg(long = "task", value_name = "NAME")]
        tasks: Vec<String>,
        #[command(flatten)]
        llm: LlmArgs,
        #[command(flatten)]
        memory: MemoryFlags,
        #[arg(long, value_name = "N", default_value_t = 1)]
        reflect: u32,
        #[arg(long, value_name = "N")]
        trials: Option<u32>,
        #[arg(long, value_name = "DIR", default_value = "runs")]
        out: PathBuf,
    },
    /// Run the memory by reflection grid over benchmark tasks.
    Ablate {
        #[arg(default_value = "bench")]
        dir: PathBuf,
        #[arg(long = "task", value_name = "NAME")]
        tasks: Vec<String>,
        #[command(flatten)]
        llm: LlmArgs,
        #[arg(long, value_enum, default_value = "full")]
        grid: Grid,
        /// Reflection rounds in cells with reflection on.
        #[arg(long, value_name = "N", default_value_t = 1)]
        reflect: u32,
        #[arg(long, value_name = "N", default_value_t = DEFAULT_TOP_K)]
        top_k: usize,
        #[arg(long, value_name = "N")]
        trials: Option<u32>,
        #[arg(long, value_name = "DIR", default_value = "runs")]
        out: PathBuf,
    },
    /// Pearson and Spearman correlation of paired scores.
    Corr {
        /// One CSV with two score columns, or two CSVs with one each.
        #[arg(num_args = 1..=2, required = true)]
        files: Vec<PathBuf>,
    },
    /// Render a world snapshot.
    Render {
        snapshot: PathBuf,
        #[arg(long, value_enum, default_value = "txt")]
        out: Format,
        /// Output file; text goes to stdout and PNG next to the snapshot by default.
        #[arg(long, value_name = "FILE")]
        output: Option<PathBuf>,
    },
    /// Inspect or edit the memory pool.
    Memory {
        #[arg(long, value_name = "FILE", default_value = DEFAULT_MEMORY_PATH, global = true)]
        memory_path: PathBuf,
        #[command(subcommand)]
        action: MemoryAction,
    },
}

#[derive(Subcommand)]
enum MemoryAction {
    List,
    Add {
        #[arg(long)]
        task: String,
        /// File holding the blueprint program.
        #[arg(long, value_name = "FILE")]
        plan: PathBuf,
    },
    Clear,
}

struct Failure {
    code: u8,
    error: anyhow::Error,
}

trait ExitWith<T> {
    fn exit_with(self, code: u8) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> ExitWith<T> for Result<T, E> {
    fn exit_with(self, code: u8) -> Result<T, Failure> {
        self.map_err(|e| Failure { code, error: e.into() })
    }
}

fn fail<T>(code: u8, msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure {
        code,
        error: anyhow!(msg.into()),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(command: Command) -> Result<u8, Failure> {
    match command {
        Command::Build {
            task,
            llm,
            memory,
            reflect,
            out,
            no_png,
        } => cmd_build(&task, &llm, &memory, reflect, &out, !no_png),
        Command::Bench {
            dir,
            tasks,
            llm,
            memory,
            reflect,
            trials,
            out,
        } => {
            let cell = CellKey::new(memory.choice().unwrap_or(true), reflect > 0);
            cmd_grid("bench", &dir, &tasks, &llm, vec![cell], reflect.max(1), memory.top_k, trials, &out)
        }
        Command::Ablate {
            dir,
            tasks,
            llm,
            grid,
            reflect,
            top_k,
            trials,
            out,
        } => {
            let cells = match grid {
                Grid::Full => FULL_GRID.to_vec(),
                Grid::Memory => vec![CellKey::new(false, true), CellKey::new(true, true)],
                Grid::Reflection => vec![CellKey::new(true, false), CellKey::new(true, true)],
            };
            cmd_grid("ablate", &dir, &tasks, &llm, cells, reflect.max(1), top_k, trials, &out)
        }
        Command::Corr { files } => cmd_corr(&files),
        Command::Render { snapshot, out, output } => cmd_render(&snapshot, out, output.as_deref()),
        Command::Memory { memory_path, action } => cmd_memory(&memory_path, action),
    }
}

fn open_pool(path: &Path) -> Result<MemoryPool, Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).exit_with(EXIT_DATA)?;
    }
    MemoryPool::open(path, HashedBagOfWords::default())
        .with_context(|| format!("memory pool {}", path.display()))
        .exit_with(EXIT_DATA)
}

fn build_client(llm: &LlmArgs, run: &RunDir) -> Result<Box<dyn LlmClient>, Failure> {
    match llm.llm {
        Backend::Live => clients::live(llm.trace.then(|| run.path().join("trace"))).exit_with(EXIT_PIPELINE),
        Backend::Scripted => {
            let Some(path) = &llm.transcript else {
                return fail(EXIT_USAGE, "--llm scripted needs --transcript FILE");
            };
            clients::scripted(path).exit_with(EXIT_PIPELINE)
        }
    }
}

fn cmd_build(
    task_path: &Path,
    llm: &LlmArgs,
    memory: &MemoryFlags,
    reflect: Option<u32>,
    out: &Path,
    png: bool,
) -> Result<u8, Failure> {
    let text = fs::read_to_string(task_path)
        .with_context(|| format!("cannot read task {}", task_path.display()))
        .exit_with(EXIT_DATA)?;
    let mut task = TaskInput::from_json(&text)
        .with_context(|| format!("task {}", task_path.display()))
        .exit_with(EXIT_DATA)?;
    if let Some(m) = memory.choice() {
        task.config.memory = m;
    }
    if let Some(r) = reflect {
        task.config.max_reflections = r;
    }
    let pool = if task.config.memory {
        Some(open_pool(&memory.memory_path)?)
    } else {
        None
    };

    let run = RunDir::create(out, &task.name).exit_with(EXIT_PIPELINE)?;
    run.write("task.json", &text).exit_with(EXIT_PIPELINE)?;
    let mut client = build_client(llm, &run)?;
    let opts = RunOptions {
        top_k: memory.top_k,
        render_png: png,
        base_dir: task_path.parent().map(Path::to_path_buf),
        ..RunOptions::default()
    };
    let world = WorldState::default();
    let bot = BotState::at(Coord::new(0, world.surface_y(), 0));
    let art = run_task(client.as_mut(), &task, &world, &bot, pool.as_ref(), &opts);
    write_build(&run, &art).exit_with(EXIT_PIPELINE)?;

    let r = &art.result;
    println!("task: {}", r.task);
    println!("status: {}", status_name(r.status));
    println!("rounds: {} (reflections used: {})", r.rounds.len(), r.reflections_used);
    println!("residual mismatches: {}", r.final_diff.len());
    for unmet in &r.final_unmet {
        println!("unmet: {unmet}");
    }
    println!("run dir: {}", run.path().display());
    match r.status {
        BuildStatus::Complete => Ok(EXIT_OK),
        BuildStatus::ResidualDiff => Ok(EXIT_RESIDUAL),
        BuildStatus::Error => {
            let msg = r.error.as_ref().map_or_else(|| "pipeline failed".to_string(), ToString::to_string);
            fail(EXIT_PIPELINE, msg)
        }
    }
}

fn status_name(s: BuildStatus) -> &'static str {
    match s {
        BuildStatus::Complete => "complete",
        BuildStatus::ResidualDiff => "residual_diff",
        BuildStatus::Error => "error",
    }
}

fn write_build(run: &RunDir, art: &BuildArtifacts) -> anyhow::Result<()> {
    let mut log = String::new();
    for x in &art.exchanges {
        log.push_str(&serde_json::to_string(x)?);
        log.push('\n');
    }
    run.write("exchanges.jsonl", log)?;
    if let Some(s) = &art.synopsis {
        run.write("synopsis.txt", &s.raw)?;
    }
    if let Some(dsl) = &art.final_dsl {
        run.write("program.vsl", dsl)?;
    }
    if let Some(bp) = &art.blueprint {
        run.write("blueprint.json", bp.to_json())?;
    }
    if let Some(plan) = &art.plan {
        run.write("plan.jsonl", plan.to_jsonl())?;
    }
    run.write("snapshot_initial.json", art.initial.to_json())?;
    run.write("snapshot_final.json", art.world.snapshot().to_json())?;
    for r in &art.renders {
        run.write(format!("render_{}.txt", r.round), r.views.to_text())?;
        if let Some(png) = &r.png {
            run.write(format!("render_{}.png", r.round), png)?;
        }
    }
    run.write("result.json", art.result.to_json())?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_grid(
    label: &str,
    dir: &Path,
    only: &[String],
    llm: &LlmArgs,
    grid: Vec<CellKey>,
    max_reflections: u32,
    top_k: usize,
    trials: Option<u32>,
    out: &Path,
) -> Result<u8, Failure> {
    let mut tasks = TaskSpec::load_dir(dir).exit_with(EXIT_DATA)?;
    if !only.is_empty() {
        if let Some(missing) = only.iter().find(|n| !tasks.iter().any(|t| t.name() == n.as_str())) {
            return fail(EXIT_USAGE, format!("no task named {missing} in {}", dir.display()));
        }
        tasks.retain(|t| only.iter().any(|n| n == t.name()));
    }
    if tasks.is_empty() {
        return fail(EXIT_DATA, format!("no task files in {}", dir.display()));
    }
    let transcripts = match llm.llm {
        Backend::Scripted => {
            let d = llm.transcript.clone().unwrap_or_else(|| dir.join("transcripts"));
            if !d.is_dir() {
                return fail(EXIT_USAGE, format!("transcript directory {} not found", d.display()));
            }
            Some(d)
        }
        Backend::Live => None,
    };
    if trials == Some(0) {
        return fail(EXIT_USAGE, "--trials must be at least 1");
    }

    let run = RunDir::create(out, label).exit_with(EXIT_PIPELINE)?;
    let cfg = AblationConfig {
        grid,
        trials,
        max_reflections,
        run: RunOptions {
            top_k,
            render_png: llm.llm == Backend::Live,
            base_dir: Some(dir.to_path_buf()),
            ..RunOptions::default()
        },
    };
    let trace = llm.trace.then(|| run.path().join("trace"));
    let mut factory = clients::trial_factory(llm.llm, transcripts, trace);
    let mut write_error = None;
    let report = run_ablation_with(&tasks, &cfg, &mut factory, |rec, art| {
        let base = PathBuf::from(cell_slug(rec.cell)).join(format!("{}-{}", rec.task, rec.trial));
        let write = || -> anyhow::Result<()> {
            run.write(base.join("trial.json"), serde_json::to_string_pretty(rec)?)?;
            if let Some(art) = art {
                run.write(base.join("result.json"), art.result.to_json())?;
            }
            Ok(())
        };
        if let Err(e) = write() {
            write_error.get_or_insert(e);
        }
        let outcome = match &rec.error {
            Some(e) => format!("failed ({e})"),
            None => format!("{:.1}%", rec.percentage()),
        };
        eprintln!("{} {} trial {}: {outcome}", rec.cell, rec.task, rec.trial);
    });
    if let Some(e) = write_error {
        return Err(e).exit_with(EXIT_PIPELINE);
    }

    let text = report.to_text();
    run.write("report.csv", report.to_csv()).exit_with(EXIT_PIPELINE)?;
    run.write("report.txt", &text).exit_with(EXIT_PIPELINE)?;
    run.write(
        "report.json",
        serde_json::to_string_pretty(&report).expect("report serializes"),
    )
    .exit_with(EXIT_PIPELINE)?;
    print!("{text}");
    let checked: Vec<_> = report.trials.iter().filter_map(|t| t.checks_passed).collect();
    println!(
        "\nstructural checks passed in {}/{} judged builds",
        checked.iter().filter(|p| **p).count(),
        checked.len()
    );
    println!("run dir: {}", run.path().display());
    Ok(EXIT_OK)
}

/// Numeric columns of a headerless or headed CSV.
fn read_columns(path: &Path) -> anyhow::Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let parsed: Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if i == 0 => {}
            Err(_) => anyhow::bail!("{}: row {} is not numeric", path.display(), i + 1),
        }
    }
    Ok(rows)
}

fn last_column(rows: &[Vec<f64>], back: usize, path: &Path) -> anyhow::Result<Vec<f64>> {
    rows.iter()
        .enumerate()
        .map(|(i, r)| {
            r.len()
                .checked_sub(back + 1)
                .map(|j| r[j])
                .ok_or_else(|| anyhow!("{}: row {} has too few columns", path.display(), i + 1))
        })
        .collect()
}

fn cmd_corr(files: &[PathBuf]) -> Result<u8, Failure> {
    let (human, machine) = match files {
        [one] => {
            let rows = read_columns(one).exit_with(EXIT_DATA)?;
            (
                last_column(&rows, 1, one).exit_with(EXIT_DATA)?,
                last_column(&rows, 0, one).exit_with(EXIT_DATA)?,
            )
        }
        [a, b] => (
            last_column(&read_columns(a).exit_with(EXIT_DATA)?, 0, a).exit_with(EXIT_DATA)?,
            last_column(&read_columns(b).exit_with(EXIT_DATA)?, 0, b).exit_with(EXIT_DATA)?,
        ),
        _ => return fail(EXIT_USAGE, "expected one or two CSV files"),
    };
    let r = pearson(&human, &machine).exit_with(EXIT_DATA)?;
    let rho = spearman(&human, &machine).exit_with(EXIT_DATA)?;
    println!("n: {}", human.len());
    println!("pearson: {r:.6}");
    println!("spearman: {rho:.6}");
    Ok(EXIT_OK)
}

fn cmd_render(snapshot: &Path, format: Format, output: Option<&Path>) -> Result<u8, Failure> {
    let text = fs::read_to_string(snapshot)
        .with_context(|| format!("cannot read {}", snapshot.display()))
        .exit_with(EXIT_DATA)?;
    let snap = Snapshot::from_json(&text)
        .with_context(|| format!("snapshot {}", snapshot.display()))
        .exit_with(EXIT_DATA)?;
    let world = WorldState::from_snapshot(&snap).exit_with(EXIT_DATA)?;
    let bbox = render_bbox(&world, None);
    match format {
        Format::Txt => {
            let views = render_views(&world, &bbox).to_text();
            match output {
                Some(p) => fs::write(p, views).exit_with(EXIT_DATA)?,
                None => print!("{views}"),
            }
        }
        Format::Png => {
            let path = output.map_or_else(|| snapshot.with_extension("png"), Path::to_path_buf);
            fs::write(&path, render_png(&world, &bbox)).exit_with(EXIT_DATA)?;
            println!("{}", path.display());
        }
    }
    Ok(EXIT_OK)
}

fn cmd_memory(path: &Path, action: MemoryAction) -> Result<u8, Failure> {
    let pool = open_pool(path)?;
    match action {
        MemoryAction::List => {
            for r in pool.records() {
                let lines = r.plan_dsl.lines().count();
                println!("{}\t{}\t{lines} line(s)\t{}", r.id, r.created_at, r.task_text);
            }
            println!("{} record(s) in {}", pool.len(), path.display());
        }
        MemoryAction::Add { task, plan } => {
            let dsl = fs::read_to_string(&plan)
                .with_context(|| format!("cannot read {}", plan.display()))
                .exit_with(EXIT_DATA)?;
            let rec = pool.add(&task, &dsl).exit_with(EXIT_DATA)?;
            println!("added record {}", rec.id);
        }
        MemoryAction::Clear => {
            let n = pool.len();
            pool.clear().exit_with(EXIT_DATA)?;
            println!("removed {n} record(s)");
        }
    }
    Ok(EXIT_OK)
}
