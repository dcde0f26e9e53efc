//! Per-task structural predicates over a finished world.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::block::family;
use crate::geom::{BoundingBox, Coord};
use crate::world::{WorldState, DAY_LENGTH};

pub const WATCHTOWER_MIN_HEIGHT: i32 = 12;
pub const HOUSE_MAX_SIDE: i32 = 8;
/// Share of the footprint a level must cover to count as a floor slab.
pub const SLAB_COVERAGE: f64 = 0.6;
pub const MIN_FLOOR_GAP: i32 = 3;
pub const VILLAGE_PALETTE: [&str; 4] = ["torch", "cobblestone", "oak_log", "oak_planks"];
pub const NIGHT_PROBE: u32 = 18_000;
pub const DAY_PROBE: u32 = 6_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Checker {
    WoodenHouse,
    SnowPyramid,
    Watchtower,
    Mansion,
    VillageHouse,
}

impl fmt::Display for Checker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("unit variant serializes");
        f.write_str(s.as_str().expect("unit variant is a string"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Predicate {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckReport {
    pub checker: Checker,
    pub predicates: Vec<Predicate>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.predicates.iter().all(|p| p.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Predicate> {
        self.predicates.iter().filter(|p| !p.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Predicate> {
        self.predicates.iter().find(|p| p.name == name)
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mark = if self.passed { "ok" } else { "FAILED" };
        write!(f, "{}: {mark} ({})", self.name, self.detail)
    }
}

fn pred(name: &str, passed: bool, detail: impl Into<String>) -> Predicate {
    Predicate {
        name: name.to_string(),
        passed,
        detail: detail.into(),
    }
}

struct Structure<'a> {
    blocks: Vec<(Coord, &'a str)>,
    bbox: Option<BoundingBox>,
}

impl<'a> Structure<'a> {
    fn of(world: &'a WorldState) -> Self {
        let blocks: Vec<(Coord, &str)> = world.blocks().map(|(c, cell)| (c, cell.id())).collect();
        let bbox = BoundingBox::around(blocks.iter().map(|(c, _)| *c));
        Structure { blocks, bbox }
    }

    fn ids(&self) -> impl Iterator<Item = &'a str> + '_ {
        self.blocks.iter().map(|(_, id)| *id)
    }

    fn any(&self, f: impl Fn(&str) -> bool) -> bool {
        self.ids().any(f)
    }

    /// Some block matching `f` lies strictly inside the outer walls.
    fn any_inside(&self, f: impl Fn(&str) -> bool) -> bool {
        let Some(bb) = self.bbox else { return false };
        self.blocks.iter().any(|(c, id)| {
            f(id) && c.x > bb.min.x && c.x < bb.max.x && c.z > bb.min.z && c.z < bb.max.z
        })
    }

    fn levels(&self) -> BTreeMap<i32, Vec<Coord>> {
        let mut out: BTreeMap<i32, Vec<Coord>> = BTreeMap::new();
        for (c, _) in &self.blocks {
            out.entry(c.y).or_default().push(*c);
        }
        out
    }
}

fn has(found: bool, what: &str) -> String {
    if found {
        format!("{what} found")
    } else {
        format!("no {what} found")
    }
}

/// Whether any lamp is lit at `tick` of the day.
pub fn lamp_lit_at(world: &WorldState, tick: u32) -> bool {
    let mut w = world.clone();
    let ahead = (tick + DAY_LENGTH - w.time() % DAY_LENGTH) % DAY_LENGTH;
    w.advance_time(u64::from(ahead));
    w.redstone_update();
    let lit = w.lit_lamps().next().is_some();
    lit
}

/// Runs a task's predicates. Pure in the world contents.
pub fn structural_check(checker: Checker, world: &WorldState) -> CheckReport {
    let s = Structure::of(world);
    let predicates = match checker {
        Checker::WoodenHouse => wooden_house(&s),
        Checker::SnowPyramid => snow_pyramid(&s),
        Checker::Watchtower => watchtower(&s, world, WATCHTOWER_MIN_HEIGHT),
        Checker::Mansion => mansion(&s),
        Checker::VillageHouse => village_house(&s),
    };
    CheckReport { checker, predicates }
}

fn wooden_house(s: &Structure) -> Vec<Predicate> {
    let (sx, sz) = s.bbox.map_or((0, 0), |b| (b.size_x(), b.size_z()));
    let door = s.any(family::is_door);
    let glass = s.any(family::is_glass);
    let bed = s.any_inside(family::is_bed);
    let table = s.any_inside(|id| id == "crafting_table");
    vec![
        pred(
            "footprint",
            s.bbox.is_some() && sx <= HOUSE_MAX_SIDE && sz <= HOUSE_MAX_SIDE,
            format!("{sx}x{sz}, at most {HOUSE_MAX_SIDE}x{HOUSE_MAX_SIDE}"),
        ),
        pred("door", door, has(door, "door")),
        pred("window", glass, has(glass, "glass window")),
        pred("bed_inside", bed, has(bed, "bed inside the walls")),
        pred("crafting_table_inside", table, has(table, "crafting table inside the walls")),
    ]
}

fn snow_pyramid(s: &Structure) -> Vec<Predicate> {
    let odd: Vec<&str> = s
        .ids()
        .filter(|id| !family::is_snow(id) && !family::is_ice(id))
        .collect();
    let sides: Vec<i32> = s
        .levels()
        .values()
        .map(|cells| {
            let bb = BoundingBox::around(cells.iter().copied()).expect("level is non-empty");
            bb.size_x().max(bb.size_z())
        })
        .collect();
    let shrinking = sides.len() >= 2 && sides.windows(2).all(|w| w[1] < w[0]);
    vec![
        pred(
            "snow_and_ice_only",
            !s.blocks.is_empty() && odd.is_empty(),
            match odd.first() {
                Some(id) => format!("{} block(s) outside the palette, e.g. {id}", odd.len()),
                None => format!("{} blocks", s.blocks.len()),
            },
        ),
        pred("layers_shrink", shrinking, format!("layer sides bottom to top: {sides:?}")),
    ]
}

fn watchtower(s: &Structure, world: &WorldState, min_height: i32) -> Vec<Predicate> {
    let height = s.bbox.map_or(0, |b| b.size_y());
    let lamp = s.any(|id| id == "redstone_lamp");
    let sensor = s.any(|id| id == "inverted_daylight_detector");
    let night = lamp_lit_at(world, NIGHT_PROBE);
    let day = lamp_lit_at(world, DAY_PROBE);
    vec![
        pred("height", height >= min_height, format!("{height} tall, at least {min_height}")),
        pred("lamp", lamp, has(lamp, "redstone lamp")),
        pred("sensor", sensor, has(sensor, "inverted daylight sensor")),
        pred("lit_at_night", night, format!("lamp {} at tick {NIGHT_PROBE}", if night { "lit" } else { "dark" })),
        pred("dark_by_day", !day, format!("lamp {} at tick {DAY_PROBE}", if day { "lit" } else { "dark" })),
    ]
}

/// Levels covering most of the footprint, roof excluded. The highest such
/// level is the roof when fewer than `MIN_FLOOR_GAP` levels rise above it.
pub fn floor_slabs(world: &WorldState) -> Vec<i32> {
    slabs_of(&Structure::of(world))
}

fn slabs_of(s: &Structure) -> Vec<i32> {
    let Some(bb) = s.bbox else { return Vec::new() };
    let area = f64::from(bb.size_x()) * f64::from(bb.size_z());
    let mut slabs: Vec<i32> = s
        .levels()
        .iter()
        .filter(|(_, cells)| cells.len() as f64 >= SLAB_COVERAGE * area)
        .map(|(y, _)| *y)
        .collect();
    if slabs.last().is_some_and(|top| bb.max.y - top < MIN_FLOOR_GAP) {
        slabs.pop();
    }
    slabs
}

fn mansion(s: &Structure) -> Vec<Predicate> {
    let slabs = slabs_of(s);
    let two = slabs.len() == 2;
    let gap = if two { slabs[1] - slabs[0] - 1 } else { 0 };
    let flowers = s.any(family::is_flower);
    let chimney = s.any(family::is_chimney);
    vec![
        pred("two_floors", two, format!("floor slabs at heights {slabs:?}")),
        pred(
            "floor_gap",
            two && gap >= MIN_FLOOR_GAP,
            format!("{gap} levels between floors, at least {MIN_FLOOR_GAP}"),
        ),
        pred("flowers", flowers, has(flowers, "flower")),
        pred("chimney", chimney, has(chimney, "chimney block")),
    ]
}

fn village_house(s: &Structure) -> Vec<Predicate> {
    let mut odd: Vec<&str> = s.ids().filter(|id| !VILLAGE_PALETTE.contains(id)).collect();
    odd.sort_unstable();
    odd.dedup();
    vec![pred(
        "reference_palette",
        !s.blocks.is_empty() && odd.is_empty(),
        if odd.is_empty() {
            format!("palette within {VILLAGE_PALETTE:?}")
        } else {
            format!("outside the reference palette: {}", odd.join(", "))
        },
    )]
}
