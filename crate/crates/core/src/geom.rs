//! Integer block coordinates and axis-aligned boxes.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

/// A block position. `y` is vertical.
///
/// The total order is lexicographic on `(y, x, z)`, which is the order used
/// for snapshots, tie-breaking and deterministic iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Coord {
    pub x: i32,
    pub y: i32,
    pub z: i32,
}

impl Coord {
    pub const fn new(x: i32, y: i32, z: i32) -> Self {
        Coord { x, y, z }
    }

    pub const fn offset(self, dx: i32, dy: i32, dz: i32) -> Self {
        Coord::new(self.x + dx, self.y + dy, self.z + dz)
    }

    pub const fn up(self) -> Self {
        self.offset(0, 1, 0)
    }

    pub const fn down(self) -> Self {
        self.offset(0, -1, 0)
    }

    /// The six face-adjacent neighbours, in `(y, x, z)` order.
    pub fn face_neighbors(self) -> [Coord; 6] {
        [
            self.offset(0, -1, 0),
            self.offset(-1, 0, 0),
            self.offset(0, 0, -1),
            self.offset(0, 0, 1),
            self.offset(1, 0, 0),
            self.offset(0, 1, 0),
        ]
    }

    pub fn chebyshev(self, other: Coord) -> i32 {
        (self.x - other.x)
            .abs()
            .max((self.y - other.y).abs())
            .max((self.z - other.z).abs())
    }

    pub fn manhattan(self, other: Coord) -> i32 {
        (self.x - other.x).abs() + (self.y - other.y).abs() + (self.z - other.z).abs()
    }

    /// Component-wise `<=`.
    pub fn le_all(self, other: Coord) -> bool {
        self.x <= other.x && self.y <= other.y && self.z <= other.z
    }

    pub fn min_each(self, other: Coord) -> Coord {
        Coord::new(self.x.min(other.x), self.y.min(other.y), self.z.min(other.z))
    }

    pub fn max_each(self, other: Coord) -> Coord {
        Coord::new(self.x.max(other.x), self.y.max(other.y), self.z.max(other.z))
    }
}

impl Ord for Coord {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.y, self.x, self.z).cmp(&(other.y, other.x, other.z))
    }
}

impl PartialOrd for Coord {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Add for Coord {
    type Output = Coord;

    fn add(self, rhs: Coord) -> Coord {
        Coord::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl Sub for Coord {
    type Output = Coord;

    fn sub(self, rhs: Coord) -> Coord {
        Coord::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.x, self.y, self.z)
    }
}

/// Inclusive axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min: Coord,
    pub max: Coord,
}

impl BoundingBox {
    /// Builds the box spanned by two arbitrary corners.
    pub fn spanning(a: Coord, b: Coord) -> Self {
        BoundingBox {
            min: a.min_each(b),
            max: a.max_each(b),
        }
    }

    /// Tightest box around the given points, `None` when there are none.
    pub fn around<I: IntoIterator<Item = Coord>>(points: I) -> Option<Self> {
        let mut it = points.into_iter();
        let first = it.next()?;
        Some(it.fold(BoundingBox::spanning(first, first), |bb, c| bb.include(c)))
    }

    pub fn include(self, c: Coord) -> Self {
        BoundingBox {
            min: self.min.min_each(c),
            max: self.max.max_each(c),
        }
    }

    pub fn union(self, other: BoundingBox) -> Self {
        self.include(other.min).include(other.max)
    }

    pub fn contains(&self, c: Coord) -> bool {
        self.min.le_all(c) && c.le_all(self.max)
    }

    pub fn translate(self, by: Coord) -> Self {
        BoundingBox {
            min: self.min + by,
            max: self.max + by,
        }
    }

    pub fn expand(self, margin: i32) -> Self {
        BoundingBox {
            min: self.min.offset(-margin, -margin, -margin),
            max: self.max.offset(margin, margin, margin),
        }
    }

    pub fn size_x(&self) -> i32 {
        self.max.x - self.min.x + 1
    }

    pub fn size_y(&self) -> i32 {
        self.max.y - self.min.y + 1
    }

    pub fn size_z(&self) -> i32 {
        self.max.z - self.min.z + 1
    }

    pub fn volume(&self) -> i64 {
        self.size_x() as i64 * self.size_y() as i64 * self.size_z() as i64
    }

    /// All cells in `(y, x, z)` order.
    pub fn cells(&self) -> impl Iterator<Item = Coord> + '_ {
        let (min, max) = (self.min, self.max);
        (min.y..=max.y).flat_map(move |y| {
            (min.x..=max.x).flat_map(move |x| (min.z..=max.z).map(move |z| Coord::new(x, y, z)))
        })
    }
}
