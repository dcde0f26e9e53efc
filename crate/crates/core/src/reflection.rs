//! Rendering the built region and asking the model to repair its blueprint.
//!
//! Text projections are the canonical view. The PNG render exists for people
//! and for image-capable models; nothing parses it.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Cursor;

use image::{Rgba, RgbaImage};
use serde::{Deserialize, Serialize};

use crate::geom::{BoundingBox, Coord};
use crate::llm::{extract_json_object, prompts, string_field, Image, Message, PipelineError, Session};
use crate::memory::fnv1a;
use crate::world::WorldState;

pub const AIR: &str = ".";
const LEGEND_CHARS: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789";
/// Hints beyond this many are summarized by count.
pub const MAX_HINTS: usize = 60;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct View {
    pub label: String,
    pub caption: String,
    /// Rows top to bottom; each cell a block id or `.`.
    pub grid: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewSet {
    pub bbox: BoundingBox,
    pub views: Vec<View>,
}

fn id_at(world: &WorldState, c: Coord) -> String {
    world.block_id(c).unwrap_or(AIR).to_string()
}

/// First block met when walking `ray` in order.
fn first_hit(world: &WorldState, ray: impl Iterator<Item = Coord>) -> String {
    ray.filter_map(|c| world.block_id(c))
        .next()
        .unwrap_or(AIR)
        .to_string()
}

/// Four side projections, one from above, and one slice per level.
pub fn render_views(world: &WorldState, bbox: &BoundingBox) -> ViewSet {
    let (lo, hi) = (bbox.min, bbox.max);
    let xs_asc: Vec<i32> = (lo.x..=hi.x).collect();
    let xs_desc: Vec<i32> = xs_asc.iter().rev().copied().collect();
    let zs_asc: Vec<i32> = (lo.z..=hi.z).collect();
    let zs_desc: Vec<i32> = zs_asc.iter().rev().copied().collect();
    let ys_desc: Vec<i32> = (lo.y..=hi.y).rev().collect();

    let side = |label: &str, caption: &str, cols: &[i32], cell: &dyn Fn(i32, i32) -> String| View {
        label: label.to_string(),
        caption: caption.to_string(),
        grid: ys_desc
            .iter()
            .map(|&y| cols.iter().map(|&c| cell(c, y)).collect())
            .collect(),
    };

    let mut views = vec![
        side("north", "seen from the north, east on the left", &xs_desc, &|x, y| {
            first_hit(world, (lo.z..=hi.z).map(|z| Coord::new(x, y, z)))
        }),
        side("south", "seen from the south, west on the left", &xs_asc, &|x, y| {
            first_hit(world, (lo.z..=hi.z).rev().map(|z| Coord::new(x, y, z)))
        }),
        side("east", "seen from the east, south on the left", &zs_desc, &|z, y| {
            first_hit(world, (lo.x..=hi.x).rev().map(|x| Coord::new(x, y, z)))
        }),
        side("west", "seen from the west, north on the left", &zs_asc, &|z, y| {
            first_hit(world, (lo.x..=hi.x).map(|x| Coord::new(x, y, z)))
        }),
    ];
    views.push(View {
        label: "top".into(),
        caption: "seen from above, north at the top".into(),
        grid: zs_asc
            .iter()
            .map(|&z| {
                xs_asc
                    .iter()
                    .map(|&x| first_hit(world, (lo.y..=hi.y).rev().map(|y| Coord::new(x, y, z))))
                    .collect()
            })
            .collect(),
    });
    for y in lo.y..=hi.y {
        views.push(View {
            label: format!("layer_{}", y - lo.y),
            caption: format!("horizontal slice at height {}, north at the top", y - lo.y),
            grid: zs_asc
                .iter()
                .map(|&z| xs_asc.iter().map(|&x| id_at(world, Coord::new(x, y, z))).collect())
                .collect(),
        });
    }
    ViewSet { bbox: *bbox, views }
}

impl ViewSet {
    pub fn get(&self, label: &str) -> Option<&View> {
        self.views.iter().find(|v| v.label == label)
    }

    /// Block ids shown in any view, sorted.
    pub fn palette(&self) -> Vec<&str> {
        let ids: BTreeSet<&str> = self
            .views
            .iter()
            .flat_map(|v| v.grid.iter().flatten())
            .map(String::as_str)
            .filter(|id| *id != AIR)
            .collect();
        ids.into_iter().collect()
    }

    /// Legend line followed by one fenced block per view.
    pub fn to_text(&self) -> String {
        let palette = self.palette();
        let symbol = |id: &str| -> char {
            if id == AIR {
                return '.';
            }
            palette
                .iter()
                .position(|p| *p == id)
                .and_then(|i| LEGEND_CHARS.get(i))
                .map_or('?', |b| *b as char)
        };
        let mut out = String::from("Legend: . air");
        for id in &palette {
            let _ = write!(out, ", {} {id}", symbol(id));
        }
        out.push('\n');
        for v in &self.views {
            let _ = write!(out, "\n[{}] {}\n```\n", v.label, v.caption);
            for row in &v.grid {
                out.extend(row.iter().map(|id| symbol(id)));
                out.push('\n');
            }
            out.push_str("```\n");
        }
        out
    }
}

/// Region worth looking at: the intended footprint plus anything built.
pub fn render_bbox(world: &WorldState, intended: Option<BoundingBox>) -> BoundingBox {
    match (intended, world.occupied_bbox()) {
        (Some(a), Some(b)) => a.union(b),
        (Some(a), None) => a,
        (None, Some(b)) => b,
        (None, None) => {
            let c = Coord::new(0, world.surface_y(), 0);
            BoundingBox::spanning(c, c)
        }
    }
}

const TILE: u32 = 8;

fn color(id: &str) -> [u8; 3] {
    match id {
        "glass" | "glass_pane" => [190, 225, 240],
        "snow_block" | "powder_snow" => [245, 250, 252],
        "ice" | "packed_ice" | "blue_ice" => [140, 180, 240],
        "stone" | "cobblestone" | "stone_bricks" => [125, 125, 125],
        "oak_planks" | "oak_log" | "oak_door" | "oak_stairs" => [160, 120, 70],
        "bricks" => [150, 70, 55],
        "redstone_lamp" => [230, 190, 90],
        _ => {
            let h = fnv1a(id.as_bytes());
            [(60 + h % 160) as u8, (60 + (h >> 8) % 160) as u8, (60 + (h >> 16) % 160) as u8]
        }
    }
}

fn shade(c: [u8; 3], pct: u16) -> Rgba<u8> {
    let f = |v: u8| ((v as u16 * pct / 100).min(255)) as u8;
    Rgba([f(c[0]), f(c[1]), f(c[2]), 255])
}

/// Which face of a unit cube sprite covers a pixel: 1 top, 2 left, 3 right.
fn sprite_face(px: u32, py: u32) -> u8 {
    let s = TILE as f64;
    let (x, y) = (px as f64 + 0.5, py as f64 + 0.5);
    let in_top = (x - s).abs() / s + (y - s / 2.0).abs() / (s / 2.0) <= 1.0;
    if in_top {
        1
    } else if x < s && y >= s / 2.0 + x / 2.0 && y <= 1.5 * s + x / 2.0 {
        2
    } else if x >= s && y >= s - (x - s) / 2.0 && y <= 2.0 * s - (x - s) / 2.0 {
        3
    } else {
        0
    }
}

/// Isometric PNG of the blocks inside `bbox`.
pub fn render_png(world: &WorldState, bbox: &BoundingBox) -> Vec<u8> {
    let (nx, ny, nz) = (bbox.size_x() as u32, bbox.size_y() as u32, bbox.size_z() as u32);
    let width = (nx + nz) * TILE + 2;
    let height = (nx + nz) * TILE / 2 + (ny + 1) * TILE + 2;
    let mut img = RgbaImage::from_pixel(width, height, Rgba([32, 36, 44, 255]));

    let mut cells: Vec<(Coord, &str)> = world
        .blocks()
        .filter(|(c, _)| bbox.contains(*c))
        .map(|(c, cell)| (c - bbox.min, cell.id()))
        .collect();
    // far to near, bottom to top
    cells.sort_by_key(|(c, _)| (c.x + c.y + c.z, c.y, c.x));

    for (c, id) in cells {
        let (x, y, z) = (c.x as u32, c.y as u32, c.z as u32);
        let sx = (x + nz - 1 - z) * TILE + 1;
        let sy = (x + z) * TILE / 2 + (ny - 1 - y) * TILE + 1;
        let base = color(id);
        for py in 0..2 * TILE {
            for px in 0..2 * TILE {
                let pct = match sprite_face(px, py) {
                    1 => 110,
                    2 => 80,
                    3 => 62,
                    _ => continue,
                };
                let (tx, ty) = (sx + px, sy + py);
                if tx < width && ty < height {
                    img.put_pixel(tx, ty, shade(base, pct));
                }
            }
        }
    }

    let mut buf = Vec::new();
    img.write_to(&mut Cursor::new(&mut buf), image::ImageFormat::Png)
        .expect("in-memory PNG encoding");
    buf
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reflection {
    pub reflection_text: String,
    pub repaired_dsl: String,
}

/// Hint lines appended after the template, one per problem.
pub fn hint_block(hints: &[String]) -> String {
    let mut out = String::from(
        "\n\nProblems detected when the current blueprint was built (offsets relative to start_pos):\n",
    );
    for h in hints.iter().take(MAX_HINTS) {
        let _ = writeln!(out, "- {h}");
    }
    if hints.len() > MAX_HINTS {
        let _ = writeln!(out, "- ... and {} more", hints.len() - MAX_HINTS);
    }
    out.trim_end().to_string()
}

fn parse_reflection(text: &str) -> Result<Reflection, String> {
    let map = extract_json_object(text)?;
    Ok(Reflection {
        reflection_text: string_field(&map, "reflection")?,
        repaired_dsl: string_field(&map, "code")?,
    })
}

/// One repair round: the template filled with the description, the views and
/// the previous program, followed by the detected problems.
pub fn reflect(
    session: &mut Session<'_>,
    structure: &str,
    views: &ViewSet,
    image: Option<Image>,
    previous_dsl: &str,
    hints: &[String],
) -> Result<Reflection, PipelineError> {
    if hints.is_empty() {
        return Err(PipelineError::NothingToReflect);
    }
    let image = image.filter(|_| session.supports_images());
    let prompt = prompts::self_reflection(structure, views.to_text().trim_end(), previous_dsl.trim_end())
        + &hint_block(hints);
    let mut messages = vec![
        Message::system(prompts::dsl_reference()),
        Message::user(prompt).with_image(image),
    ];
    let first = session.ask("reflection", &messages, true)?;
    match parse_reflection(&first) {
        Ok(r) => Ok(r),
        Err(reason) => {
            messages.push(Message {
                role: crate::llm::Role::Assistant,
                text: first,
                image: None,
            });
            messages.push(Message::user(format!(
                "Your reply could not be used: {reason}. Reply again with only a compact JSON object on a single line with the string keys \"reflection\" and \"code\"."
            )));
            let second = session.ask("reflection-repair", &messages, true)?;
            parse_reflection(&second).map_err(|reason| PipelineError::JsonShape {
                stage: "reflection",
                reason,
            })
        }
    }
}
