//! Turns a blueprint into primitive bot actions and replays them.
//!
//! Placements are scheduled structure-first and bottom-up. For each one the
//! planner walks the bot to the nearest standing cell within reach. When no
//! such cell exists it builds a temporary dirt tower by pillar-jumping
//! (jump, place a block underfoot) and removes the tower again, top to
//! bottom, before walking away from it. A successful plan therefore never
//! leaves scaffold behind.

use std::collections::HashSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::block::{self, Facing, SCAFFOLD_BLOCK};
use crate::blueprint::{validate, Blueprint, Placement, ValidationReport};
use crate::geom::{BoundingBox, Coord};
use crate::path::{search_region, Path, Reachability};
use crate::world::{BotState, MoveError, WorldError, WorldState};

pub const DEFAULT_SCAFFOLD_BUDGET: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    Move {
        path: Path,
    },
    Place {
        id: String,
        at: Coord,
        facing: Option<Facing>,
    },
    Mine {
        at: Coord,
    },
    /// Jump and place a scaffold block in the cell the bot's feet occupied.
    ScaffoldPlace {
        at: Coord,
    },
    /// Mine a scaffold block below the bot and drop onto the next one.
    ScaffoldRemove {
        at: Coord,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionPlan {
    pub actions: Vec<Action>,
    pub scaffold_budget: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PlanStats {
    pub actions: usize,
    pub moves: usize,
    pub steps: usize,
    pub places: usize,
    pub mines: usize,
    pub scaffold_places: usize,
    pub scaffold_removes: usize,
}

impl ActionPlan {
    pub fn stats(&self) -> PlanStats {
        let mut s = PlanStats {
            actions: self.actions.len(),
            ..PlanStats::default()
        };
        for a in &self.actions {
            match a {
                Action::Move { path } => {
                    s.moves += 1;
                    s.steps += path.len();
                }
                Action::Place { .. } => s.places += 1,
                Action::Mine { .. } => s.mines += 1,
                Action::ScaffoldPlace { .. } => s.scaffold_places += 1,
                Action::ScaffoldRemove { .. } => s.scaffold_removes += 1,
            }
        }
        s
    }

    /// One JSON object per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for a in &self.actions {
            let _ = writeln!(out, "{}", serde_json::to_string(a).expect("action serializes"));
        }
        out
    }

    pub fn from_jsonl(text: &str) -> serde_json::Result<Self> {
        let actions = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<Vec<Action>, _>>()?;
        Ok(ActionPlan {
            actions,
            scaffold_budget: DEFAULT_SCAFFOLD_BUDGET,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlanOptions {
    pub scaffolding: bool,
    pub scaffold_budget: usize,
}

impl Default for PlanOptions {
    fn default() -> Self {
        PlanOptions {
            scaffolding: true,
            scaffold_budget: DEFAULT_SCAFFOLD_BUDGET,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("blueprint is invalid: {} issue(s)", .0.errors().count())]
    InvalidBlueprint(ValidationReport),
    #[error("cannot place {} at {at}: {reason}", placement.block)]
    Unplannable {
        placement: Placement,
        at: Coord,
        reason: String,
    },
    #[error("scaffolding for {at} needs more than {budget} blocks")]
    ScaffoldBudgetExceeded { at: Coord, budget: usize },
}

/// Build order: structural blocks before furnishings, then bottom-up, then
/// outward from the footprint centroid, then by `(x, z)`.
pub fn order_placements(bp: &Blueprint) -> Vec<Placement> {
    let n = bp.placements.len() as i64;
    let (sum_x, sum_z) = bp.placements.iter().fold((0i64, 0i64), |(sx, sz), p| {
        (sx + p.offset.x as i64, sz + p.offset.z as i64)
    });
    // n times the Manhattan distance to the centroid, kept integral
    let spread = |p: &Placement| (n * p.offset.x as i64 - sum_x).abs() + (n * p.offset.z as i64 - sum_z).abs();
    let late = |p: &Placement| block::lookup(&p.block).is_some_and(|d| d.is_late_phase());
    let mut out = bp.placements.clone();
    out.sort_by_key(|p| (late(p), p.offset.y, spread(p), p.offset.x, p.offset.z));
    out
}

struct Target {
    placement: Placement,
    at: Coord,
    solid: bool,
}

enum Need {
    Place,
    Mine,
}

struct Planner<'a> {
    world: WorldState,
    bot: BotState,
    opts: &'a PlanOptions,
    footprint: BoundingBox,
    actions: Vec<Action>,
    tower: Vec<Coord>,
}

enum Attempt {
    Done,
    Failed { reason: String, over_budget: bool },
}

pub fn plan(
    world: &WorldState,
    bot: &BotState,
    origin: Coord,
    bp: &Blueprint,
) -> Result<ActionPlan, PlanError> {
    plan_with(world, bot, origin, bp, &PlanOptions::default())
}

pub fn plan_with(
    world: &WorldState,
    bot: &BotState,
    origin: Coord,
    bp: &Blueprint,
    opts: &PlanOptions,
) -> Result<ActionPlan, PlanError> {
    let unlimited = BoundingBox::spanning(Coord::new(i32::MIN / 4, i32::MIN / 4, i32::MIN / 4), Coord::new(i32::MAX / 4, i32::MAX / 4, i32::MAX / 4));
    let report = validate(bp, &unlimited);
    if !report.is_valid() {
        return Err(PlanError::InvalidBlueprint(report));
    }
    let Ok(bb) = bp.bbox() else {
        return Ok(ActionPlan {
            actions: Vec::new(),
            scaffold_budget: opts.scaffold_budget,
        });
    };

    let mut pending: Vec<Target> = order_placements(bp)
        .into_iter()
        .map(|p| Target {
            at: origin + p.offset,
            solid: block::lookup(&p.block).is_some_and(|d| d.solid),
            placement: p,
        })
        .collect();

    let mut planner = Planner {
        world: world.clone(),
        bot: bot.clone(),
        opts,
        footprint: bb.translate(origin),
        actions: Vec::new(),
        tower: Vec::new(),
    };

    while !pending.is_empty() {
        pending.retain(|t| !planner.satisfied(t));
        if pending.is_empty() {
            break;
        }
        let pending_cells: HashSet<Coord> = pending.iter().map(|t| t.at).collect();
        let mut reach: Option<Reachability> = None;
        let mut first_failure: Option<(usize, String, bool)> = None;
        let mut progressed = false;

        for i in 0..pending.len() {
            let t = &pending[i];
            if !planner.world.has_support(t.at) {
                continue;
            }
            if !planner.has_open_face(t.at) {
                if first_failure.is_none() {
                    first_failure = Some((i, "every face is covered".into(), false));
                }
                continue;
            }
            match planner.attempt(t, &pending_cells, &mut reach) {
                Attempt::Done => {
                    pending.remove(i);
                    progressed = true;
                    break;
                }
                Attempt::Failed {
                    reason,
                    over_budget,
                } => {
                    if first_failure.is_none() {
                        first_failure = Some((i, reason, over_budget));
                    }
                }
            }
        }

        if progressed {
            continue;
        }
        if !planner.tower.is_empty() {
            planner.teardown();
            continue;
        }
        let (i, reason, over_budget) =
            first_failure.unwrap_or((0, "no neighbouring block to attach to".into(), false));
        let t = &pending[i];
        if over_budget {
            return Err(PlanError::ScaffoldBudgetExceeded {
                at: t.at,
                budget: opts.scaffold_budget,
            });
        }
        return Err(PlanError::Unplannable {
            placement: t.placement.clone(),
            at: t.at,
            reason,
        });
    }
    planner.teardown();

    Ok(ActionPlan {
        actions: planner.actions,
        scaffold_budget: opts.scaffold_budget,
    })
}

impl Planner<'_> {
    fn satisfied(&self, t: &Target) -> bool {
        self.world
            .get(t.at)
            .is_some_and(|c| c.id() == t.placement.block && c.facing == t.placement.effective_facing())
    }

    fn has_open_face(&self, at: Coord) -> bool {
        at.face_neighbors().iter().any(|n| !self.world.is_solid(*n))
    }

    fn inside_footprint(&self, c: Coord) -> bool {
        let f = &self.footprint;
        (f.min.x..=f.max.x).contains(&c.x) && (f.min.z..=f.max.z).contains(&c.z)
    }

    /// Whether the bot, standing at `feet`, may act on `t`.
    fn spot_ok(&self, feet: Coord, t: &Target, need: &Need) -> bool {
        if feet.chebyshev(t.at) > self.bot.reach {
            return false;
        }
        match need {
            Need::Place => !(t.solid && (feet == t.at || feet.up() == t.at)),
            Need::Mine => feet.down() != t.at,
        }
    }

    fn attempt(
        &mut self,
        t: &Target,
        pending: &HashSet<Coord>,
        reach: &mut Option<Reachability>,
    ) -> Attempt {
        let occupant = self.world.get(t.at).map(|c| c.id());
        if occupant.is_some() {
            if let Attempt::Failed { reason, over_budget } = self.get_within_reach(t, Need::Mine, pending, reach) {
                return Attempt::Failed { reason, over_budget };
            }
            self.apply(Action::Mine { at: t.at });
            *reach = None;
        }
        match self.get_within_reach(t, Need::Place, pending, reach) {
            Attempt::Done => {
                self.apply(Action::Place {
                    id: t.placement.block.clone(),
                    at: t.at,
                    facing: t.placement.effective_facing(),
                });
                Attempt::Done
            }
            failed => failed,
        }
    }

    fn get_within_reach(
        &mut self,
        t: &Target,
        need: Need,
        pending: &HashSet<Coord>,
        reach: &mut Option<Reachability>,
    ) -> Attempt {
        if self.spot_ok(self.bot.position, t, &need) {
            return Attempt::Done;
        }
        if let Some(extra) = self.tower_extension(t, &need, pending) {
            if self.tower.len() + extra > self.opts.scaffold_budget {
                return Attempt::Failed {
                    reason: "scaffold budget exhausted".into(),
                    over_budget: true,
                };
            }
            for _ in 0..extra {
                self.apply(Action::ScaffoldPlace {
                    at: self.bot.position,
                });
            }
            *reach = None;
            return Attempt::Done;
        }
        if !self.tower.is_empty() {
            return Attempt::Failed {
                reason: "out of reach from the scaffold".into(),
                over_budget: false,
            };
        }

        let field = reach.get_or_insert_with(|| {
            let region = search_region(&self.world, &[self.bot.position, t.at]);
            Reachability::explore(&self.world, self.bot.position, region)
        });

        let spot = field
            .reached()
            .iter()
            .copied()
            .filter(|c| self.spot_ok(*c, t, &need))
            .min_by_key(|c| (self.inside_footprint(*c), field.distance(*c), *c));
        if let Some(spot) = spot {
            let path = field.path_to(spot).expect("reached cell has a path");
            if !path.is_empty() {
                self.apply(Action::Move { path });
            }
            *reach = None;
            return Attempt::Done;
        }

        if !self.opts.scaffolding {
            return Attempt::Failed {
                reason: "no standing position within reach".into(),
                over_budget: false,
            };
        }

        // pillar-jump from some reachable cell
        // (preference key, base, height); lower key wins
        type Candidate = ((bool, usize, u32, Coord), Coord, usize);
        let mut best: Option<Candidate> = None;
        let mut over_budget = false;
        for &base in field.reached() {
            if (base.x - t.at.x).abs() > self.bot.reach || (base.z - t.at.z).abs() > self.bot.reach {
                continue;
            }
            let height = (t.at.y - self.bot.reach - base.y).max(1) as usize;
            if !self.column_clear(base, 0, height, t, &need, pending) {
                continue;
            }
            if height > self.opts.scaffold_budget {
                over_budget = true;
                continue;
            }
            let key = (
                self.inside_footprint(base),
                height,
                field.distance(base).unwrap_or(u32::MAX),
                base,
            );
            if best.as_ref().is_none_or(|(k, _, _)| key < *k) {
                best = Some((key, base, height));
            }
        }
        let Some((_, base, height)) = best else {
            return Attempt::Failed {
                reason: if over_budget {
                    "scaffold budget exhausted".into()
                } else {
                    "no standing position within reach, even with scaffolding".into()
                },
                over_budget,
            };
        };
        let path = field.path_to(base).expect("reached cell has a path");
        if !path.is_empty() {
            self.apply(Action::Move { path });
        }
        for _ in 0..height {
            self.apply(Action::ScaffoldPlace {
                at: self.bot.position,
            });
        }
        *reach = None;
        Attempt::Done
    }

    /// Can a tower in `base`'s column grow from `have` to `height` blocks,
    /// leaving the bot within reach of the target?
    fn column_clear(
        &self,
        base: Coord,
        have: usize,
        height: usize,
        t: &Target,
        need: &Need,
        pending: &HashSet<Coord>,
    ) -> bool {
        let top = base.offset(0, height as i32, 0);
        if !self.spot_ok(top, t, need) {
            return false;
        }
        for j in have..height {
            let c = base.offset(0, j as i32, 0);
            if pending.contains(&c) || c == t.at {
                return false;
            }
            // the feet cell at j == have is the bot itself
            if j > have && self.world.is_occupied(c) {
                return false;
            }
            if j == have && self.world.get(c).is_some() {
                return false;
            }
        }
        // room for the bot's body at the top
        !self.world.is_solid(top) && !self.world.is_solid(top.up())
    }

    fn tower_extension(&self, t: &Target, need: &Need, pending: &HashSet<Coord>) -> Option<usize> {
        let base = *self.tower.first()?;
        let have = self.tower.len();
        let height = (t.at.y - self.bot.reach - base.y).max(1) as usize;
        if height <= have {
            return None;
        }
        self.column_clear(base, have, height, t, need, pending)
            .then_some(height - have)
    }

    fn teardown(&mut self) {
        while let Some(&at) = self.tower.last() {
            self.apply(Action::ScaffoldRemove { at });
        }
    }

    /// Applies an action to the simulated world; the planner only emits
    /// actions it has already checked.
    fn apply(&mut self, action: Action) {
        let mut scratch = ExecState::default();
        step(&mut self.world, &mut self.bot, &action, &mut scratch)
            .unwrap_or_else(|e| panic!("planner produced an invalid action {action:?}: {e}"));
        match &action {
            Action::ScaffoldPlace { at } => self.tower.push(*at),
            Action::ScaffoldRemove { .. } => {
                self.tower.pop();
            }
            _ => {}
        }
        self.actions.push(action);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExecError {
    #[error("step {step} of the move: {source}")]
    Move { step: usize, source: MoveError },
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("scaffold action at {at} but the bot stands at {bot}")]
    NotAtBot { at: Coord, bot: Coord },
    #[error("{at} is not a scaffold block")]
    NotScaffold { at: Coord },
    #[error("no headroom to jump at {at}")]
    NoHeadroom { at: Coord },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionOutcome {
    pub index: usize,
    pub error: Option<ExecError>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecutionReport {
    pub success: bool,
    pub total_actions: usize,
    pub outcomes: Vec<ActionOutcome>,
    pub failed_at: Option<usize>,
    pub scaffold_peak: usize,
    /// Scaffold blocks still standing when execution ended.
    pub scaffold_remaining: usize,
}

impl ExecutionReport {
    pub fn failures(&self) -> impl Iterator<Item = &ActionOutcome> {
        self.outcomes.iter().filter(|o| o.error.is_some())
    }

    pub fn executed(&self) -> usize {
        self.outcomes.len()
    }
}

#[derive(Default)]
struct ExecState {
    scaffold: usize,
    peak: usize,
}

fn step(
    world: &mut WorldState,
    bot: &mut BotState,
    action: &Action,
    st: &mut ExecState,
) -> Result<(), ExecError> {
    match action {
        Action::Move { path } => {
            for (i, next) in path.iter().enumerate() {
                world
                    .check_step(bot.position, *next)
                    .map_err(|source| ExecError::Move { step: i, source })?;
                bot.position = *next;
            }
        }
        Action::Place { id, at, facing } => world.place_block(bot, id, *at, *facing)?,
        Action::Mine { at } => {
            world.mine_block(bot, *at)?;
        }
        Action::ScaffoldPlace { at } => {
            if *at != bot.position {
                return Err(ExecError::NotAtBot {
                    at: *at,
                    bot: bot.position,
                });
            }
            if world.is_solid(at.offset(0, 2, 0)) {
                return Err(ExecError::NoHeadroom { at: *at });
            }
            let mut lifted = bot.clone();
            lifted.position = at.up();
            world.place_block(&lifted, SCAFFOLD_BLOCK, *at, None)?;
            *bot = lifted;
            st.scaffold += 1;
            st.peak = st.peak.max(st.scaffold);
        }
        Action::ScaffoldRemove { at } => {
            if !world.get(*at).is_some_and(|c| c.block.scaffold) {
                return Err(ExecError::NotScaffold { at: *at });
            }
            world.mine_block(bot, *at)?;
            st.scaffold = st.scaffold.saturating_sub(1);
        }
    }
    Ok(())
}

/// Replays a plan, stopping at the first failing action.
pub fn execute(plan: &ActionPlan, world: &mut WorldState, bot: &mut BotState) -> ExecutionReport {
    let mut st = ExecState::default();
    let mut outcomes = Vec::with_capacity(plan.actions.len());
    let mut failed_at = None;
    for (index, action) in plan.actions.iter().enumerate() {
        match step(world, bot, action, &mut st) {
            Ok(()) => outcomes.push(ActionOutcome { index, error: None }),
            Err(e) => {
                outcomes.push(ActionOutcome {
                    index,
                    error: Some(e),
                });
                failed_at = Some(index);
                break;
            }
        }
    }
    ExecutionReport {
        success: failed_at.is_none(),
        total_actions: plan.actions.len(),
        outcomes,
        failed_at,
        scaffold_peak: st.peak,
        scaffold_remaining: st.scaffold,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blueprint::diff;
    use crate::dsl::build_blueprint;

    fn start() -> (WorldState, BotState, Coord) {
        (WorldState::default(), BotState::at(Coord::new(-3, 1, -3)), Coord::new(0, 1, 0))
    }

    #[test]
    fn phase_rule_beats_height() {
        let bp = build_blueprint("b", "place red_bed (1,0,1) facing east\nplace stone (0,2,0)").unwrap();
        let ordered = order_placements(&bp);
        assert_eq!(ordered[0].block, "stone");
        assert_eq!(ordered[1].block, "red_bed");
    }

    #[test]
    fn lower_first() {
        let bp = build_blueprint("b", "place stone (0,5,0)\nplace stone (0,0,0)").unwrap();
        let ordered = order_placements(&bp);
        assert_eq!(ordered[0].offset.y, 0);
    }

    #[test]
    fn single_block_is_move_then_place() {
        let (w, b, o) = start();
        let bp = build_blueprint("one", "place stone (3,0,3)").unwrap();
        let p = plan(&w, &b, o, &bp).unwrap();
        assert_eq!(p.actions.len(), 2);
        assert!(matches!(p.actions[0], Action::Move { .. }));
        assert!(matches!(p.actions[1], Action::Place { .. }));
    }

    #[test]
    fn pillar_needs_scaffold() {
        let (w, b, o) = start();
        let bp = build_blueprint("pillar", "line stone (0,0,0) (0,5,0)").unwrap();
        let no_scaffold = PlanOptions {
            scaffolding: false,
            ..PlanOptions::default()
        };
        assert!(matches!(
            plan_with(&w, &b, o, &bp, &no_scaffold),
            Err(PlanError::Unplannable { .. })
        ));
        let p = plan(&w, &b, o, &bp).unwrap();
        let s = p.stats();
        assert!(s.scaffold_places >= 1);
        assert_eq!(s.scaffold_places, s.scaffold_removes);

        let (mut w2, mut b2) = (w.clone(), b.clone());
        let rep = execute(&p, &mut w2, &mut b2);
        assert!(rep.success, "{rep:?}");
        assert!(diff(&w2, o, &bp).is_empty());
        assert_eq!(w2.len(), 6);
        assert_eq!(rep.scaffold_remaining, 0);
    }

    #[test]
    fn budget_is_enforced() {
        let (w, b, o) = start();
        let bp = build_blueprint("pillar", "line stone (0,0,0) (0,9,0)").unwrap();
        let tight = PlanOptions {
            scaffolding: true,
            scaffold_budget: 2,
        };
        assert!(matches!(
            plan_with(&w, &b, o, &bp, &tight),
            Err(PlanError::ScaffoldBudgetExceeded { budget: 2, .. })
        ));
    }

    #[test]
    fn sealed_interior_is_unplannable() {
        let (mut w, b, o) = start();
        let shell = build_blueprint("shell", "shell stone (0,0,0) (2,2,2)").unwrap();
        for p in &shell.placements {
            w.put(o + p.offset, &p.block, None).unwrap();
        }
        let center = build_blueprint("core", "place glass (1,1,1)").unwrap();
        assert!(matches!(
            plan(&w, &b, o, &center),
            Err(PlanError::Unplannable { .. })
        ));
    }

    #[test]
    fn replay_twice_hits_occupied() {
        let (w, b, o) = start();
        let bp = build_blueprint("row", "line stone (0,0,0) (3,0,0)").unwrap();
        let p = plan(&w, &b, o, &bp).unwrap();
        let mut world = w.clone();
        assert!(execute(&p, &mut world, &mut b.clone()).success);
        let again = execute(&p, &mut world, &mut b.clone());
        assert!(!again.success);
        let err = again.failures().next().unwrap().error.clone().unwrap();
        assert!(matches!(err, ExecError::World(WorldError::Occupied { .. })), "{err:?}");
    }

    #[test]
    fn corrupted_move_halts() {
        let (w, b, o) = start();
        let bp = build_blueprint("one", "place stone (3,0,3)\nplace stone (3,0,4)").unwrap();
        let mut p = plan(&w, &b, o, &bp).unwrap();
        let idx = p
            .actions
            .iter()
            .position(|a| matches!(a, Action::Move { .. }))
            .unwrap();
        if let Action::Move { path } = &mut p.actions[idx] {
            path[0] = path[0].offset(0, 3, 0);
        }
        let mut world = w.clone();
        let rep = execute(&p, &mut world, &mut b.clone());
        assert_eq!(rep.failed_at, Some(idx));
        assert_eq!(rep.executed(), idx + 1);
        assert!(world.is_empty());
    }

    #[test]
    fn jsonl_round_trip() {
        let (w, b, o) = start();
        let bp = build_blueprint("pillar", "line stone (0,0,0) (0,5,0)\nplace oak_door (1,0,0) facing west").unwrap();
        let p = plan(&w, &b, o, &bp).unwrap();
        let text = p.to_jsonl();
        assert_eq!(text.lines().count(), p.actions.len());
        assert_eq!(ActionPlan::from_jsonl(&text).unwrap().actions, p.actions);
        assert!(text.lines().any(|l| l.starts_with(r#"{"action":"scaffold_place""#)));
    }

    #[test]
    fn replaces_wrong_block() {
        let (mut w, b, o) = start();
        w.put(o, "glass", None).unwrap();
        let bp = build_blueprint("one", "place stone (0,0,0)").unwrap();
        let p = plan(&w, &b, o, &bp).unwrap();
        assert_eq!(p.stats().mines, 1);
        let mut world = w.clone();
        assert!(execute(&p, &mut world, &mut b.clone()).success);
        assert!(diff(&world, o, &bp).is_empty());
    }
}
