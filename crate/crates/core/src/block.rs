//! Block vocabulary understood by the simulator.
//!
//! The registry is a fixed static table. Block ids are lowercase tokens in the
//! style of Minecraft resource names (`oak_planks`, `glass_pane`, ...). `air`
//! is deliberately absent: an empty cell is the absence of a block.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Static description of a block type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BlockDef {
    pub id: &'static str,
    /// Solid blocks support neighbours, collide with the bot and can be stood on.
    pub solid: bool,
    /// Orientable blocks (doors, beds, ...) carry a [`Facing`].
    pub orientable: bool,
    /// Emits power during the night window (inverted daylight detector).
    pub power_source: bool,
    /// Lights up when face-adjacent to an active power source.
    pub lamp: bool,
    /// Temporary construction material.
    pub scaffold: bool,
    /// Interior furnishing, placed after the structural shell.
    pub furniture: bool,
}

impl BlockDef {
    const fn structural(id: &'static str) -> Self {
        BlockDef {
            id,
            solid: true,
            orientable: false,
            power_source: false,
            lamp: false,
            scaffold: false,
            furniture: false,
        }
    }

    const fn furnishing(id: &'static str, solid: bool, orientable: bool) -> Self {
        BlockDef {
            id,
            solid,
            orientable,
            power_source: false,
            lamp: false,
            scaffold: false,
            furniture: true,
        }
    }

    /// Blocks that are built in the last construction phase.
    pub fn is_late_phase(&self) -> bool {
        self.furniture || self.orientable
    }
}

/// Id of the block used for scaffolding.
pub const SCAFFOLD_BLOCK: &str = "dirt";

static REGISTRY: &[BlockDef] = &[
    BlockDef::structural("stone"),
    BlockDef::structural("cobblestone"),
    BlockDef::structural("stone_bricks"),
    BlockDef::structural("bricks"),
    BlockDef {
        scaffold: true,
        ..BlockDef::structural("dirt")
    },
    BlockDef::structural("grass_block"),
    BlockDef::structural("sand"),
    BlockDef::structural("sandstone"),
    BlockDef::structural("oak_planks"),
    BlockDef::structural("spruce_planks"),
    BlockDef::structural("birch_planks"),
    BlockDef::structural("dark_oak_planks"),
    BlockDef::structural("oak_log"),
    BlockDef::structural("spruce_log"),
    BlockDef::structural("oak_leaves"),
    BlockDef::structural("glass"),
    BlockDef::structural("glass_pane"),
    BlockDef::structural("white_wool"),
    BlockDef::structural("snow_block"),
    BlockDef::structural("powder_snow"),
    BlockDef::structural("ice"),
    BlockDef::structural("packed_ice"),
    BlockDef::structural("blue_ice"),
    BlockDef::structural("quartz_block"),
    BlockDef::structural("redstone_block"),
    BlockDef {
        lamp: true,
        ..BlockDef::structural("redstone_lamp")
    },
    BlockDef {
        power_source: true,
        ..BlockDef::structural("inverted_daylight_detector")
    },
    BlockDef::furnishing("oak_door", false, true),
    BlockDef::furnishing("spruce_door", false, true),
    BlockDef::furnishing("red_bed", true, true),
    BlockDef::furnishing("white_bed", true, true),
    BlockDef::furnishing("oak_stairs", true, true),
    BlockDef::furnishing("chest", true, true),
    BlockDef::furnishing("furnace", true, true),
    BlockDef::furnishing("crafting_table", true, false),
    BlockDef::furnishing("bookshelf", true, false),
    BlockDef::furnishing("torch", false, false),
    BlockDef::furnishing("lantern", false, false),
    BlockDef::furnishing("campfire", true, false),
    BlockDef::furnishing("flower_pot", false, false),
    BlockDef::furnishing("poppy", false, false),
    BlockDef::furnishing("dandelion", false, false),
    BlockDef::furnishing("blue_orchid", false, false),
    BlockDef::furnishing("allium", false, false),
    BlockDef::furnishing("oxeye_daisy", false, false),
    BlockDef::furnishing("cornflower", false, false),
];

/// Looks up a block by id.
pub fn lookup(id: &str) -> Option<&'static BlockDef> {
    REGISTRY.iter().find(|b| b.id == id)
}

/// Every registered block, in registry order.
pub fn all() -> &'static [BlockDef] {
    REGISTRY
}

/// Horizontal orientation of an orientable block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Facing {
    North,
    South,
    East,
    West,
}

impl Facing {
    pub fn as_str(&self) -> &'static str {
        match self {
            Facing::North => "north",
            Facing::South => "south",
            Facing::East => "east",
            Facing::West => "west",
        }
    }
}

impl fmt::Display for Facing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Facing {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "north" => Ok(Facing::North),
            "south" => Ok(Facing::South),
            "east" => Ok(Facing::East),
            "west" => Ok(Facing::West),
            other => Err(format!("unknown facing `{other}`")),
        }
    }
}

/// Block families used by the benchmark checkers.
pub mod family {
    pub fn is_door(id: &str) -> bool {
        id.ends_with("_door")
    }

    pub fn is_bed(id: &str) -> bool {
        id.ends_with("_bed")
    }

    pub fn is_glass(id: &str) -> bool {
        id == "glass" || id == "glass_pane"
    }

    pub fn is_snow(id: &str) -> bool {
        matches!(id, "snow_block" | "powder_snow")
    }

    pub fn is_ice(id: &str) -> bool {
        matches!(id, "ice" | "packed_ice" | "blue_ice")
    }

    pub fn is_flower(id: &str) -> bool {
        matches!(
            id,
            "poppy" | "dandelion" | "blue_orchid" | "allium" | "oxeye_daisy" | "cornflower"
        )
    }

    pub fn is_chimney(id: &str) -> bool {
        matches!(id, "bricks" | "campfire")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn ids_are_unique() {
        let mut seen = HashSet::new();
        for b in all() {
            assert!(seen.insert(b.id), "duplicate id {}", b.id);
        }
    }

    #[test]
    fn air_is_not_registered() {
        assert!(lookup("air").is_none());
    }

    #[test]
    fn scaffold_block_is_flagged() {
        let dirt = lookup(SCAFFOLD_BLOCK).unwrap();
        assert!(dirt.scaffold && dirt.solid);
        assert_eq!(all().iter().filter(|b| b.scaffold).count(), 1);
    }

    #[test]
    fn ids_are_lowercase_tokens() {
        for b in all() {
            assert!(b
                .id
                .chars()
                .all(|c| c.is_ascii_lowercase() || c == '_'));
        }
    }

    #[test]
    fn facing_round_trips_through_str() {
        for f in [Facing::North, Facing::South, Facing::East, Facing::West] {
            assert_eq!(f.as_str().parse::<Facing>().unwrap(), f);
        }
        assert!("up".parse::<Facing>().is_err());
    }
}
