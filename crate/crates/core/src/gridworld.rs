//! Grid geometry, the hidden obstacle field, the learned occupancy map, and
//! the labelling function.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fmt::Write as _;

use thiserror::Error;

use crate::ltl::{AtomicPredicate, OBSTACLE_REGION};
use crate::symbols::{RegionRelations, Symbol, Target};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Cell { row, col }
    }

    /// Moves by signed offsets, or `None` when that leaves the first quadrant.
    pub fn offset(self, dr: isize, dc: isize) -> Option<Cell> {
        Some(Cell {
            row: self.row.checked_add_signed(dr)?,
            col: self.col.checked_add_signed(dc)?,
        })
    }

    /// Max of the row and column differences (8-connected hop count on an
    /// empty grid).
    pub fn chebyshev(self, other: Cell) -> usize {
        self.row
            .abs_diff(other.row)
            .max(self.col.abs_diff(other.col))
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.row, self.col)
    }
}

/// Robot index to cell.
pub type Poses = BTreeMap<u32, Cell>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GridError {
    #[error("cell {cell} is outside the {width}x{height} grid")]
    OutOfBounds {
        cell: Cell,
        width: usize,
        height: usize,
    },
    #[error("`{0}` is reserved for the obstacle predicate and cannot name a region")]
    ReservedLabel(String),
    #[error("regions {a} and {b} share cell {cell} but are not declared overlapping")]
    UndeclaredOverlap { a: String, b: String, cell: Cell },
    #[error("observation of {cell} contradicts the map")]
    Contradiction { cell: Cell },
}

/// Grid size and regions of interest. Contains nothing about obstacles, so a
/// planner holding only this and an [`OccupancyMap`] cannot see the truth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionLayout {
    width: usize,
    height: usize,
    regions: BTreeMap<String, BTreeSet<Cell>>,
    cell_regions: Vec<BTreeSet<String>>,
    relations: RegionRelations,
}

impl RegionLayout {
    pub fn new(
        width: usize,
        height: usize,
        regions: BTreeMap<String, BTreeSet<Cell>>,
        relations: RegionRelations,
    ) -> Result<Self, GridError> {
        let mut cell_regions = vec![BTreeSet::new(); width * height];
        for (label, cells) in &regions {
            if label == OBSTACLE_REGION {
                return Err(GridError::ReservedLabel(label.clone()));
            }
            for &cell in cells {
                if cell.row >= height || cell.col >= width {
                    return Err(GridError::OutOfBounds {
                        cell,
                        width,
                        height,
                    });
                }
                let here: &mut BTreeSet<String> = &mut cell_regions[cell.row * width + cell.col];
                if let Some(other) = here.iter().find(|o| relations.disjoint(o, label)) {
                    return Err(GridError::UndeclaredOverlap {
                        a: other.clone(),
                        b: label.clone(),
                        cell,
                    });
                }
                here.insert(label.clone());
            }
        }
        Ok(RegionLayout {
            width,
            height,
            regions,
            cell_regions,
            relations,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn contains(&self, cell: Cell) -> bool {
        cell.row < self.height && cell.col < self.width
    }

    pub fn index(&self, cell: Cell) -> usize {
        cell.row * self.width + cell.col
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.height).flat_map(move |r| (0..self.width).map(move |c| Cell::new(r, c)))
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.regions.keys().map(String::as_str)
    }

    pub fn regions(&self) -> &BTreeMap<String, BTreeSet<Cell>> {
        &self.regions
    }

    pub fn region_cells(&self, label: &str) -> Option<&BTreeSet<Cell>> {
        self.regions.get(label)
    }

    pub fn relations(&self) -> &RegionRelations {
        &self.relations
    }

    pub fn regions_at(&self, cell: Cell) -> &BTreeSet<String> {
        &self.cell_regions[self.index(cell)]
    }

    /// A cell meets the target when its set of regions is exactly the
    /// target's (empty for free space).
    pub fn is_goal(&self, cell: Cell, target: &Target) -> bool {
        let here = self.regions_at(cell);
        match target {
            Target::FreeSpace => here.is_empty(),
            Target::Regions(rs) => here == rs,
        }
    }

    pub fn goal_cells(&self, target: &Target) -> Vec<Cell> {
        self.cells().filter(|&c| self.is_goal(c, target)).collect()
    }
}

/// The world as it really is: layout plus obstacle cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrueEnvironment {
    pub layout: RegionLayout,
    occupied: Vec<bool>,
}

impl TrueEnvironment {
    pub fn new(
        layout: RegionLayout,
        obstacles: impl IntoIterator<Item = Cell>,
    ) -> Result<Self, GridError> {
        let mut occupied = vec![false; layout.width * layout.height];
        for cell in obstacles {
            if !layout.contains(cell) {
                return Err(GridError::OutOfBounds {
                    cell,
                    width: layout.width,
                    height: layout.height,
                });
            }
            occupied[layout.index(cell)] = true;
        }
        Ok(TrueEnvironment { layout, occupied })
    }

    pub fn is_occupied(&self, cell: Cell) -> bool {
        self.occupied[self.layout.index(cell)]
    }

    pub fn obstacles(&self) -> impl Iterator<Item = Cell> + '_ {
        self.layout.cells().filter(|&c| self.is_occupied(c))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellState {
    Unknown,
    Free,
    Occupied,
}

/// Learned tri-state map shared by all robots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccupancyMap {
    width: usize,
    height: usize,
    cells: Vec<CellState>,
    revision: u64,
}

impl OccupancyMap {
    pub fn unknown(width: usize, height: usize) -> Self {
        OccupancyMap {
            width,
            height,
            cells: vec![CellState::Unknown; width * height],
            revision: 0,
        }
    }

    /// A map with every cell already resolved to its true state.
    pub fn fully_known(env: &TrueEnvironment) -> Self {
        let mut m = OccupancyMap::unknown(env.layout.width(), env.layout.height());
        for c in env.layout.cells() {
            m.cells[c.row * m.width + c.col] = if env.is_occupied(c) {
                CellState::Occupied
            } else {
                CellState::Free
            };
        }
        m
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Increments whenever an update resolves at least one cell.
    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn get(&self, cell: Cell) -> CellState {
        self.cells[cell.row * self.width + cell.col]
    }

    pub fn is_occupied(&self, cell: Cell) -> bool {
        self.get(cell) == CellState::Occupied
    }

    pub fn is_free(&self, cell: Cell) -> bool {
        self.get(cell) == CellState::Free
    }

    pub fn unknown_count(&self) -> usize {
        self.cells
            .iter()
            .filter(|s| **s == CellState::Unknown)
            .count()
    }

    pub fn occupied_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        let w = self.width;
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == CellState::Occupied)
            .map(move |(i, _)| Cell::new(i / w, i % w))
    }

    /// Resolves unknown cells from `(cell, occupied)` observations and returns
    /// the cells that changed. Known cells must agree with the observation.
    pub fn update(&mut self, observations: &[(Cell, bool)]) -> Result<Vec<Cell>, GridError> {
        let mut changed = Vec::new();
        for &(cell, occ) in observations {
            let state = if occ {
                CellState::Occupied
            } else {
                CellState::Free
            };
            let slot = &mut self.cells[cell.row * self.width + cell.col];
            match *slot {
                CellState::Unknown => {
                    *slot = state;
                    changed.push(cell);
                }
                s if s == state => {}
                _ => return Err(GridError::Contradiction { cell }),
            }
        }
        if !changed.is_empty() {
            self.revision += 1;
        }
        Ok(changed)
    }

    /// Plain PGM (P2): 0 occupied, 128 unknown, 255 free.
    pub fn to_pgm(&self) -> String {
        let mut s = format!("P2\n{} {}\n255\n", self.width, self.height);
        for r in 0..self.height {
            let row: Vec<&str> = (0..self.width)
                .map(|c| pgm_value(self.get(Cell::new(r, c))))
                .collect();
            writeln!(s, "{}", row.join(" ")).unwrap();
        }
        s
    }

    /// One line per grid row, same codes as the PGM export.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for r in 0..self.height {
            let row: Vec<&str> = (0..self.width)
                .map(|c| pgm_value(self.get(Cell::new(r, c))))
                .collect();
            writeln!(s, "{}", row.join(",")).unwrap();
        }
        s
    }
}

fn pgm_value(s: CellState) -> &'static str {
    match s {
        CellState::Occupied => "0",
        CellState::Unknown => "128",
        CellState::Free => "255",
    }
}

/// Every cell within Euclidean distance `range` of `pose`, tagged with its
/// true occupancy. With `occlusion`, cells hidden behind an obstacle along
/// the integer line from the pose are left out.
pub fn sense(env: &TrueEnvironment, pose: Cell, range: f64, occlusion: bool) -> Vec<(Cell, bool)> {
    let reach = range.floor().max(0.0) as isize;
    let r2 = range * range;
    let mut out = Vec::new();
    for dr in -reach..=reach {
        for dc in -reach..=reach {
            if ((dr * dr + dc * dc) as f64) > r2 {
                continue;
            }
            let Some(cell) = pose.offset(dr, dc) else {
                continue;
            };
            if !env.layout.contains(cell) {
                continue;
            }
            if occlusion && !line_of_sight(env, pose, cell) {
                continue;
            }
            out.push((cell, env.is_occupied(cell)));
        }
    }
    out
}

/// No occupied cell strictly between `from` and `to` on the Bresenham line.
fn line_of_sight(env: &TrueEnvironment, from: Cell, to: Cell) -> bool {
    let (mut x, mut y) = (from.col as isize, from.row as isize);
    let (x1, y1) = (to.col as isize, to.row as isize);
    let dx = (x1 - x).abs();
    let dy = -(y1 - y).abs();
    let sx = if x < x1 { 1 } else { -1 };
    let sy = if y < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        if (x, y) == (x1, y1) {
            return true;
        }
        if (x, y) != (from.col as isize, from.row as isize)
            && env.is_occupied(Cell::new(y as usize, x as usize))
        {
            return false;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Predicates true for the given poses: `p<j>@<region>` for each region the
/// robot stands in, and `p<j>@obs` if it stands on an obstacle.
pub fn label(poses: &Poses, env: &TrueEnvironment) -> Symbol {
    let mut aps = BTreeSet::new();
    for (&j, &cell) in poses {
        for r in env.layout.regions_at(cell) {
            aps.insert(AtomicPredicate::new(j, r.clone()));
        }
        if env.is_occupied(cell) {
            aps.insert(AtomicPredicate::new(j, OBSTACLE_REGION));
        }
    }
    Symbol { aps }
}
