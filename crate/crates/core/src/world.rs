//! Sparse voxel world with a single builder bot.
//!
//! The world is a superflat plane: every cell at `y <= ground_y` is solid
//! ground, everything above is air unless a block is stored there. Physics is
//! deliberately small: the bot reaches [`DEFAULT_REACH`] blocks (Chebyshev),
//! steps up one block, drops at most [`MAX_SAFE_FALL`] blocks when walking,
//! and falls straight down when the block under its feet disappears. Blocks
//! never fall.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::block::{self, BlockDef, Facing};
use crate::geom::{BoundingBox, Coord};

pub const DEFAULT_REACH: i32 = 4;
pub const MAX_STEP_UP: i32 = 1;
pub const MAX_SAFE_FALL: i32 = 3;
pub const DAY_LENGTH: u32 = 24_000;
/// Night window, `[start, end)` in ticks.
pub const NIGHT_START: u32 = 13_000;
pub const NIGHT_END: u32 = 23_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WorldError {
    #[error("unknown block id `{0}`")]
    UnknownBlock(String),
    #[error("{at} is {distance} blocks away, reach is {reach}")]
    OutOfReach { at: Coord, distance: i32, reach: i32 },
    #[error("{at} is already occupied")]
    Occupied { at: Coord },
    #[error("{at} has no solid neighbour to attach to")]
    Floating { at: Coord },
    #[error("the bot is standing in {at}")]
    BotInTheWay { at: Coord },
    #[error("nothing to mine at {at}")]
    NothingThere { at: Coord },
    #[error("ground at {at} cannot be mined")]
    Unbreakable { at: Coord },
    #[error("`{id}` does not take a facing")]
    NotOrientable { id: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MoveError {
    #[error("{from} -> {to} is not a single horizontal step")]
    NotAdjacent { from: Coord, to: Coord },
    #[error("{to} is not standable")]
    NotStandable { to: Coord },
    #[error("{from} -> {to} climbs more than one block")]
    TooHigh { from: Coord, to: Coord },
    #[error("{from} -> {to} drops more than the safe fall height")]
    TooDeep { from: Coord, to: Coord },
    #[error("{from} -> {to} is blocked")]
    Blocked { from: Coord, to: Coord },
    #[error("no room to jump at {at}")]
    NoHeadroom { at: Coord },
}

/// A stored block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cell {
    pub block: &'static BlockDef,
    pub facing: Option<Facing>,
}

impl Cell {
    pub fn id(&self) -> &'static str {
        self.block.id
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Creative,
}

/// The builder bot. `position` is the cell its feet occupy; its head is the
/// cell above.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BotState {
    pub position: Coord,
    pub reach: i32,
    pub mode: Mode,
}

impl BotState {
    pub fn at(position: Coord) -> Self {
        BotState {
            position,
            reach: DEFAULT_REACH,
            mode: Mode::Creative,
        }
    }

    pub fn head(&self) -> Coord {
        self.position.up()
    }

    pub fn occupies(&self, c: Coord) -> bool {
        c == self.position || c == self.head()
    }

    pub fn can_reach(&self, c: Coord) -> bool {
        self.position.chebyshev(c) <= self.reach
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorldState {
    blocks: BTreeMap<Coord, Cell>,
    time: u32,
    ground_y: i32,
    active_sources: BTreeSet<Coord>,
    lit_lamps: BTreeSet<Coord>,
}

impl Default for WorldState {
    fn default() -> Self {
        WorldState::new(0)
    }
}

impl WorldState {
    pub fn new(ground_y: i32) -> Self {
        WorldState {
            blocks: BTreeMap::new(),
            time: 0,
            ground_y,
            active_sources: BTreeSet::new(),
            lit_lamps: BTreeSet::new(),
        }
    }

    pub fn ground_y(&self) -> i32 {
        self.ground_y
    }

    /// First air layer above the ground plane.
    pub fn surface_y(&self) -> i32 {
        self.ground_y + 1
    }

    pub fn time(&self) -> u32 {
        self.time
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn get(&self, c: Coord) -> Option<&Cell> {
        self.blocks.get(&c)
    }

    pub fn block_id(&self, c: Coord) -> Option<&'static str> {
        self.blocks.get(&c).map(Cell::id)
    }

    /// Stored blocks in `(y, x, z)` order.
    pub fn blocks(&self) -> impl Iterator<Item = (Coord, &Cell)> {
        self.blocks.iter().map(|(c, cell)| (*c, cell))
    }

    /// Tightest box around the stored blocks.
    pub fn occupied_bbox(&self) -> Option<BoundingBox> {
        BoundingBox::around(self.blocks.keys().copied())
    }

    pub fn is_ground(&self, c: Coord) -> bool {
        c.y <= self.ground_y
    }

    pub fn is_solid(&self, c: Coord) -> bool {
        self.is_ground(c) || self.blocks.get(&c).is_some_and(|cell| cell.block.solid)
    }

    pub fn is_occupied(&self, c: Coord) -> bool {
        self.is_ground(c) || self.blocks.contains_key(&c)
    }

    /// Feet and head cells are passable and there is solid footing below.
    pub fn is_standable(&self, c: Coord) -> bool {
        !self.is_solid(c) && !self.is_solid(c.up()) && self.is_solid(c.down())
    }

    /// Whether a block at `c` would touch a solid block or the ground.
    pub fn has_support(&self, c: Coord) -> bool {
        c.face_neighbors().iter().any(|n| self.is_solid(*n))
    }

    /// Stores a block without any reach or support checks. Intended for
    /// fixtures and snapshot import.
    pub fn put(&mut self, at: Coord, id: &str, facing: Option<Facing>) -> Result<(), WorldError> {
        let cell = make_cell(id, facing)?;
        if self.is_ground(at) {
            return Err(WorldError::Occupied { at });
        }
        self.blocks.insert(at, cell);
        self.redstone_update();
        Ok(())
    }

    /// Removes a block without checks, returning what was there.
    pub fn take(&mut self, at: Coord) -> Option<Cell> {
        let cell = self.blocks.remove(&at);
        if cell.is_some() {
            self.redstone_update();
        }
        cell
    }

    pub fn place_block(
        &mut self,
        bot: &BotState,
        id: &str,
        at: Coord,
        facing: Option<Facing>,
    ) -> Result<(), WorldError> {
        let cell = make_cell(id, facing)?;
        let distance = bot.position.chebyshev(at);
        if distance > bot.reach {
            return Err(WorldError::OutOfReach {
                at,
                distance,
                reach: bot.reach,
            });
        }
        if self.is_occupied(at) {
            return Err(WorldError::Occupied { at });
        }
        if cell.block.solid && bot.occupies(at) {
            return Err(WorldError::BotInTheWay { at });
        }
        if !self.has_support(at) {
            return Err(WorldError::Floating { at });
        }
        self.blocks.insert(at, cell);
        self.redstone_update();
        Ok(())
    }

    /// Mines a block; the bot falls if it loses its footing.
    pub fn mine_block(&mut self, bot: &mut BotState, at: Coord) -> Result<Cell, WorldError> {
        if self.is_ground(at) {
            return Err(WorldError::Unbreakable { at });
        }
        if !self.blocks.contains_key(&at) {
            return Err(WorldError::NothingThere { at });
        }
        let distance = bot.position.chebyshev(at);
        if distance > bot.reach {
            return Err(WorldError::OutOfReach {
                at,
                distance,
                reach: bot.reach,
            });
        }
        let cell = self.blocks.remove(&at).expect("checked above");
        self.redstone_update();
        self.apply_gravity(bot);
        Ok(cell)
    }

    /// Drops the bot until it stands on something solid. Returns the
    /// distance fallen.
    pub fn apply_gravity(&self, bot: &mut BotState) -> i32 {
        let start = bot.position.y;
        while !self.is_solid(bot.position.down()) {
            bot.position = bot.position.down();
        }
        start - bot.position.y
    }

    /// Checks a single walking step against the movement rules.
    pub fn check_step(&self, from: Coord, to: Coord) -> Result<(), MoveError> {
        let dx = (to.x - from.x).abs();
        let dz = (to.z - from.z).abs();
        if dx + dz != 1 {
            return Err(MoveError::NotAdjacent { from, to });
        }
        let dy = to.y - from.y;
        if dy > MAX_STEP_UP {
            return Err(MoveError::TooHigh { from, to });
        }
        if -dy > MAX_SAFE_FALL {
            return Err(MoveError::TooDeep { from, to });
        }
        if !self.is_standable(to) {
            return Err(MoveError::NotStandable { to });
        }
        if dy > 0 {
            // jumping needs room above the head at the start
            if self.is_solid(from.offset(0, 2, 0)) {
                return Err(MoveError::Blocked { from, to });
            }
        } else if dy < 0 {
            // the column between the start height and the landing cell is clear
            for y in to.y..=from.y + 1 {
                if self.is_solid(Coord::new(to.x, y, to.z)) {
                    return Err(MoveError::Blocked { from, to });
                }
            }
        }
        Ok(())
    }

    pub fn advance_time(&mut self, ticks: u64) {
        self.time = ((self.time as u64 + ticks) % DAY_LENGTH as u64) as u32;
        self.redstone_update();
    }

    pub fn is_night(&self) -> bool {
        (NIGHT_START..NIGHT_END).contains(&self.time)
    }

    /// Re-evaluates power sources and lamps. Sources are active during the
    /// night window; lamps are lit when face-adjacent to an active source.
    pub fn redstone_update(&mut self) {
        let night = self.is_night();
        self.active_sources = self
            .blocks
            .iter()
            .filter(|(_, cell)| night && cell.block.power_source)
            .map(|(c, _)| *c)
            .collect();
        let lit: BTreeSet<Coord> = self
            .blocks
            .iter()
            .filter(|(c, cell)| {
                cell.block.lamp
                    && c
                        .face_neighbors()
                        .iter()
                        .any(|n| self.active_sources.contains(n))
            })
            .map(|(c, _)| *c)
            .collect();
        self.lit_lamps = lit;
    }

    pub fn is_lit(&self, c: Coord) -> bool {
        self.lit_lamps.contains(&c)
    }

    pub fn is_powered(&self, c: Coord) -> bool {
        self.active_sources.contains(&c)
    }

    pub fn lit_lamps(&self) -> impl Iterator<Item = Coord> + '_ {
        self.lit_lamps.iter().copied()
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            time: self.time,
            ground_y: self.ground_y,
            blocks: self
                .blocks
                .iter()
                .map(|(c, cell)| SnapshotBlock {
                    x: c.x,
                    y: c.y,
                    z: c.z,
                    id: cell.id().to_string(),
                    facing: cell.facing,
                })
                .collect(),
        }
    }

    pub fn from_snapshot(snap: &Snapshot) -> Result<Self, WorldError> {
        let mut world = WorldState::new(snap.ground_y);
        world.time = snap.time % DAY_LENGTH;
        for b in &snap.blocks {
            let at = Coord::new(b.x, b.y, b.z);
            let cell = make_cell(&b.id, b.facing)?;
            if world.is_ground(at) {
                return Err(WorldError::Occupied { at });
            }
            world.blocks.insert(at, cell);
        }
        world.redstone_update();
        Ok(world)
    }
}

fn make_cell(id: &str, facing: Option<Facing>) -> Result<Cell, WorldError> {
    let def = block::lookup(id).ok_or_else(|| WorldError::UnknownBlock(id.to_string()))?;
    let facing = match (def.orientable, facing) {
        (true, f) => Some(f.unwrap_or(Facing::North)),
        (false, None) => None,
        (false, Some(_)) => return Err(WorldError::NotOrientable { id: id.to_string() }),
    };
    Ok(Cell { block: def, facing })
}

/// Serialized world: blocks sorted by `(y, x, z)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub time: u32,
    pub ground_y: i32,
    pub blocks: Vec<SnapshotBlock>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotBlock {
    pub x: i32,
    pub y: i32,
    pub z: i32,
    pub id: String,
    pub facing: Option<Facing>,
}

impl Snapshot {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("snapshot serializes")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        let mut snap: Snapshot = serde_json::from_str(text)?;
        snap.blocks
            .sort_by_key(|b| Coord::new(b.x, b.y, b.z));
        Ok(snap)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bot_at(x: i32, y: i32, z: i32) -> BotState {
        BotState::at(Coord::new(x, y, z))
    }

    #[test]
    fn place_on_ground() {
        let mut w = WorldState::default();
        let bot = bot_at(0, 1, 0);
        w.place_block(&bot, "stone", Coord::new(1, 1, 0), None).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w.block_id(Coord::new(1, 1, 0)), Some("stone"));
    }

    #[test]
    fn reach_boundary() {
        let mut w = WorldState::default();
        let bot = bot_at(0, 1, 0);
        w.place_block(&bot, "stone", Coord::new(4, 1, 0), None).unwrap();
        let err = w
            .place_block(&bot, "stone", Coord::new(5, 1, 0), None)
            .unwrap_err();
        assert!(matches!(err, WorldError::OutOfReach { distance: 5, .. }));
    }

    #[test]
    fn floating_when_all_six_neighbors_empty() {
        let mut w = WorldState::default();
        let bot = bot_at(0, 1, 0);
        let at = Coord::new(2, 3, 0);
        assert!(at.face_neighbors().iter().all(|n| !w.is_solid(*n)));
        assert_eq!(
            w.place_block(&bot, "stone", at, None),
            Err(WorldError::Floating { at })
        );
        assert!(w.is_empty());
    }

    #[test]
    fn occupied_and_ground() {
        let mut w = WorldState::default();
        let bot = bot_at(0, 1, 0);
        let at = Coord::new(1, 1, 0);
        w.place_block(&bot, "stone", at, None).unwrap();
        assert_eq!(
            w.place_block(&bot, "stone", at, None),
            Err(WorldError::Occupied { at })
        );
        let g = Coord::new(1, 0, 0);
        assert_eq!(
            w.place_block(&bot, "stone", g, None),
            Err(WorldError::Occupied { at: g })
        );
    }

    #[test]
    fn cannot_place_solid_into_bot() {
        let mut w = WorldState::default();
        let bot = bot_at(0, 1, 0);
        assert!(matches!(
            w.place_block(&bot, "stone", Coord::new(0, 1, 0), None),
            Err(WorldError::BotInTheWay { .. })
        ));
        // a torch is not solid
        w.place_block(&bot, "torch", Coord::new(0, 1, 0), None).unwrap();
    }

    #[test]
    fn unknown_block_and_air_rejected() {
        let mut w = WorldState::default();
        let bot = bot_at(0, 1, 0);
        assert!(matches!(
            w.place_block(&bot, "air", Coord::new(1, 1, 0), None),
            Err(WorldError::UnknownBlock(_))
        ));
        assert!(w.is_empty());
    }

    #[test]
    fn orientable_defaults_to_north() {
        let mut w = WorldState::default();
        let bot = bot_at(0, 1, 0);
        w.place_block(&bot, "oak_door", Coord::new(1, 1, 0), None).unwrap();
        assert_eq!(w.get(Coord::new(1, 1, 0)).unwrap().facing, Some(Facing::North));
        assert!(matches!(
            w.place_block(&bot, "stone", Coord::new(2, 1, 0), Some(Facing::East)),
            Err(WorldError::NotOrientable { .. })
        ));
    }

    #[test]
    fn mine_is_inverse_of_place() {
        let mut w = WorldState::default();
        let before = w.clone();
        let mut bot = bot_at(0, 1, 0);
        let at = Coord::new(1, 1, 1);
        w.place_block(&bot, "oak_planks", at, None).unwrap();
        w.mine_block(&mut bot, at).unwrap();
        assert_eq!(w, before);
    }

    #[test]
    fn mine_empty_cell() {
        let mut w = WorldState::default();
        let mut bot = bot_at(0, 1, 0);
        let at = Coord::new(1, 1, 1);
        assert_eq!(w.mine_block(&mut bot, at), Err(WorldError::NothingThere { at }));
        assert_eq!(
            w.mine_block(&mut bot, Coord::new(1, 0, 1)),
            Err(WorldError::Unbreakable { at: Coord::new(1, 0, 1) })
        );
    }

    #[test]
    fn mining_support_drops_bot() {
        // bot stands on a 3-high dirt column
        let mut w = WorldState::default();
        for y in 1..=3 {
            w.put(Coord::new(0, y, 0), "dirt", None).unwrap();
        }
        let mut bot = bot_at(0, 4, 0);
        w.mine_block(&mut bot, Coord::new(0, 3, 0)).unwrap();
        // oracle: step-wise gravity loop
        let mut y = 4;
        while !w.is_solid(Coord::new(0, y - 1, 0)) {
            y -= 1;
        }
        assert_eq!(bot.position, Coord::new(0, y, 0));
        assert_eq!(bot.position.y, 3);
        w.mine_block(&mut bot, Coord::new(0, 1, 0)).unwrap();
        // removing a lower block does not move a bot that still has footing
        assert_eq!(bot.position.y, 3);
        w.mine_block(&mut bot, Coord::new(0, 2, 0)).unwrap();
        assert_eq!(bot.position.y, 1);
    }

    #[test]
    fn time_wraps() {
        let mut w = WorldState::default();
        w.advance_time(0);
        assert_eq!(w.time(), 0);
        w.advance_time(24_000);
        assert_eq!(w.time(), 0);
        w.advance_time(6000);
        assert!(!w.is_night());
        w.advance_time(8000);
        assert_eq!(w.time(), 14_000);
        assert!(w.is_night());
    }

    #[test]
    fn night_window_edges() {
        let mut w = WorldState::default();
        for (t, night) in [(12_999, false), (13_000, true), (22_999, true), (23_000, false)] {
            w.advance_time((t + 24_000 - w.time()) as u64);
            assert_eq!(w.is_night(), night, "tick {t}");
        }
    }

    fn lamp_world() -> WorldState {
        let mut w = WorldState::default();
        w.put(Coord::new(0, 1, 0), "redstone_lamp", None).unwrap();
        w.put(Coord::new(0, 2, 0), "inverted_daylight_detector", None)
            .unwrap();
        w
    }

    #[test]
    fn lamp_lit_at_night_only() {
        let mut w = lamp_world();
        w.advance_time(18_000);
        assert!(w.is_lit(Coord::new(0, 1, 0)));
        w.advance_time(12_000); // 6000
        assert_eq!(w.time(), 6000);
        assert!(!w.is_lit(Coord::new(0, 1, 0)));
    }

    #[test]
    fn lamp_without_source_never_lit() {
        let mut w = WorldState::default();
        w.put(Coord::new(0, 1, 0), "redstone_lamp", None).unwrap();
        for _ in 0..24 {
            w.advance_time(1000);
            assert_eq!(w.lit_lamps().count(), 0);
        }
    }

    #[test]
    fn diagonal_source_does_not_power() {
        let mut w = WorldState::default();
        w.put(Coord::new(0, 1, 0), "redstone_lamp", None).unwrap();
        w.put(Coord::new(1, 2, 0), "inverted_daylight_detector", None)
            .unwrap();
        w.advance_time(18_000);
        assert!(!w.is_lit(Coord::new(0, 1, 0)));
    }

    #[test]
    fn redstone_update_is_idempotent() {
        let mut w = lamp_world();
        w.advance_time(18_000);
        let once = w.clone();
        w.redstone_update();
        assert_eq!(w, once);
    }

    #[test]
    fn step_rules() {
        let mut w = WorldState::default();
        w.put(Coord::new(1, 1, 0), "stone", None).unwrap();
        // step up onto the stone
        assert!(w.check_step(Coord::new(0, 1, 0), Coord::new(1, 2, 0)).is_ok());
        // a two-block wall is too high
        w.put(Coord::new(1, 2, 0), "stone", None).unwrap();
        assert!(w.check_step(Coord::new(0, 1, 0), Coord::new(1, 3, 0)).is_err());
        // diagonal steps are not allowed
        assert!(matches!(
            w.check_step(Coord::new(0, 1, 0), Coord::new(1, 1, 1)),
            Err(MoveError::NotAdjacent { .. })
        ));
    }

    #[test]
    fn drop_limits() {
        let mut w = WorldState::default();
        for y in 1..=4 {
            w.put(Coord::new(0, y, 0), "stone", None).unwrap();
        }
        for y in 1..=3 {
            w.put(Coord::new(5, y, 0), "stone", None).unwrap();
        }
        w.put(Coord::new(4, 3, 0), "stone", None).unwrap();
        // from the top of the 4-high column (feet y=5) down to the ground is 4
        assert!(matches!(
            w.check_step(Coord::new(0, 5, 0), Coord::new(1, 1, 0)),
            Err(MoveError::TooDeep { .. })
        ));
        // dropping 3 is fine: feet y=4 on the block at (4,3,0) -> ground
        assert!(w.check_step(Coord::new(4, 4, 0), Coord::new(3, 1, 0)).is_ok());
    }

    #[test]
    fn snapshot_round_trip_sorted() {
        let mut w = WorldState::default();
        w.put(Coord::new(2, 2, 0), "stone", None).unwrap();
        w.put(Coord::new(0, 1, 5), "oak_door", Some(Facing::South)).unwrap();
        w.put(Coord::new(1, 1, 0), "glass", None).unwrap();
        w.advance_time(100);
        let snap = w.snapshot();
        let keys: Vec<_> = snap.blocks.iter().map(|b| (b.y, b.x, b.z)).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        let text = snap.to_json();
        let back = WorldState::from_snapshot(&Snapshot::from_json(&text).unwrap()).unwrap();
        assert_eq!(back, w);
        assert!(text.contains("\"facing\": null"));
        assert!(text.contains("\"facing\": \"south\""));
    }
}
