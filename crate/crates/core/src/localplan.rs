//! Single-robot reach-avoid planning on the learned map.
//!
//! Unknown cells are optimistically traversable, with one exception: a
//! diagonal step needs its destination and both cells it squeezes between to
//! be known free. With a sensing range of at least one cell the four
//! orthogonal neighbours are always known, so a robot following a plan never
//! steps onto an obstacle it could not see.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, VecDeque};

use thiserror::Error;

use crate::gridworld::{Cell, CellState, OccupancyMap, RegionLayout};
use crate::symbols::Target;

const NEIGHBOURS: [(isize, isize); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReachabilityTask {
    pub robot: u32,
    pub start: Cell,
    pub goal: Target,
    /// Regions the path must not enter. The start cell is exempt.
    pub forbidden_regions: BTreeSet<String>,
}

/// Cells from the start to a goal cell; consecutive cells are 8-adjacent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Path {
    pub cells: Vec<Cell>,
}

impl Path {
    /// Number of moves.
    pub fn len(&self) -> usize {
        self.cells.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn last(&self) -> Cell {
        *self
            .cells
            .last()
            .expect("paths hold at least the start cell")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("robot {robot}: no path to {goal} given the current map")]
    Unreachable { robot: u32, goal: Target },
    #[error("robot {robot}: start cell {cell} is outside the grid or known occupied")]
    BadStart { robot: u32, cell: Cell },
}

/// Passability rules shared by the planner and the flood fill.
struct Rules<'a> {
    layout: &'a RegionLayout,
    map: &'a OccupancyMap,
    forbidden: &'a BTreeSet<String>,
    start: Cell,
}

impl Rules<'_> {
    fn enterable(&self, c: Cell) -> bool {
        if !self.layout.contains(c) || self.map.is_occupied(c) {
            return false;
        }
        c == self.start || self.layout.regions_at(c).is_disjoint(self.forbidden)
    }

    fn neighbours(&self, c: Cell) -> impl Iterator<Item = Cell> + '_ {
        NEIGHBOURS.iter().filter_map(move |&(dr, dc)| {
            let n = c.offset(dr, dc)?;
            if !self.enterable(n) {
                return None;
            }
            if dr != 0 && dc != 0 {
                let side_a = c.offset(dr, 0)?;
                let side_b = c.offset(0, dc)?;
                let known_free = |x: Cell| self.map.get(x) == CellState::Free;
                if !(known_free(n) && known_free(side_a) && known_free(side_b)) {
                    return None;
                }
            }
            Some(n)
        })
    }
}

/// Shortest path (unit cost per move) from the start to a goal cell avoiding
/// known obstacles and forbidden regions. A* with the Chebyshev distance to
/// the goal bounding box; ties are broken on (f, h, row, col).
pub fn plan_reach(
    task: &ReachabilityTask,
    layout: &RegionLayout,
    map: &OccupancyMap,
) -> Result<Path, PlanError> {
    let rules = Rules {
        layout,
        map,
        forbidden: &task.forbidden_regions,
        start: task.start,
    };
    if !layout.contains(task.start) || map.is_occupied(task.start) {
        return Err(PlanError::BadStart {
            robot: task.robot,
            cell: task.start,
        });
    }
    let unreachable = || PlanError::Unreachable {
        robot: task.robot,
        goal: task.goal.clone(),
    };
    if layout.is_goal(task.start, &task.goal) {
        return Ok(Path {
            cells: vec![task.start],
        });
    }
    let goals: Vec<Cell> = layout
        .goal_cells(&task.goal)
        .into_iter()
        .filter(|&c| rules.enterable(c))
        .collect();
    if goals.is_empty() {
        return Err(unreachable());
    }
    let (rmin, rmax) = min_max(goals.iter().map(|c| c.row));
    let (cmin, cmax) = min_max(goals.iter().map(|c| c.col));
    let h = |c: Cell| -> usize {
        let dr = rmin.saturating_sub(c.row).max(c.row.saturating_sub(rmax));
        let dc = cmin.saturating_sub(c.col).max(c.col.saturating_sub(cmax));
        dr.max(dc)
    };

    let n = layout.width() * layout.height();
    let mut g = vec![usize::MAX; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();
    let s = layout.index(task.start);
    g[s] = 0;
    open.push(Reverse((
        h(task.start),
        h(task.start),
        task.start.row,
        task.start.col,
    )));
    while let Some(Reverse((_, _, row, col))) = open.pop() {
        let c = Cell::new(row, col);
        let ci = layout.index(c);
        if closed[ci] {
            continue;
        }
        closed[ci] = true;
        if layout.is_goal(c, &task.goal) {
            let mut cells = vec![c];
            let mut i = ci;
            while parent[i] != usize::MAX {
                i = parent[i];
                cells.push(Cell::new(i / layout.width(), i % layout.width()));
            }
            cells.reverse();
            return Ok(Path { cells });
        }
        for nb in rules.neighbours(c) {
            let ni = layout.index(nb);
            let cost = g[ci] + 1;
            if !closed[ni] && cost < g[ni] {
                g[ni] = cost;
                parent[ni] = ci;
                let hn = h(nb);
                open.push(Reverse((cost + hn, hn, nb.row, nb.col)));
            }
        }
    }
    Err(unreachable())
}

fn min_max(it: impl Iterator<Item = usize>) -> (usize, usize) {
    it.fold((usize::MAX, 0), |(lo, hi), x| (lo.min(x), hi.max(x)))
}

/// Index of the first cell of `cells` that is now known occupied, or the
/// end of a diagonal step whose corner is now known occupied.
pub fn path_blocked(cells: &[Cell], map: &OccupancyMap) -> Option<usize> {
    for (i, &c) in cells.iter().enumerate() {
        if map.is_occupied(c) {
            return Some(i);
        }
        if i > 0 {
            let p = cells[i - 1];
            if p.row != c.row && p.col != c.col {
                let corners = [Cell::new(p.row, c.col), Cell::new(c.row, p.col)];
                if corners.iter().any(|&k| map.is_occupied(k)) {
                    return Some(i);
                }
            }
        }
    }
    None
}

/// Whether a goal cell of `target` can possibly be reached from `start`,
/// treating unknown cells as free.
pub fn region_reachable(
    layout: &RegionLayout,
    map: &OccupancyMap,
    start: Cell,
    target: &Target,
    forbidden: &BTreeSet<String>,
) -> bool {
    if !layout.contains(start) || map.is_occupied(start) {
        return false;
    }
    let rules = Rules {
        layout,
        map,
        forbidden,
        start,
    };
    let mut seen = vec![false; layout.width() * layout.height()];
    let mut queue = VecDeque::from([start]);
    seen[layout.index(start)] = true;
    while let Some(c) = queue.pop_front() {
        if layout.is_goal(c, target) {
            return true;
        }
        for nb in rules.neighbours(c) {
            let i = layout.index(nb);
            if !seen[i] {
                seen[i] = true;
                queue.push_back(nb);
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::TrueEnvironment;
    use crate::symbols::RegionRelations;
    use std::collections::BTreeMap;

    fn layout(w: usize, h: usize, regions: &[(&str, Vec<Cell>)]) -> RegionLayout {
        let regions: BTreeMap<String, BTreeSet<Cell>> = regions
            .iter()
            .map(|(l, cells)| (l.to_string(), cells.iter().copied().collect()))
            .collect();
        RegionLayout::new(w, h, regions, RegionRelations::all_disjoint()).unwrap()
    }

    fn task(start: Cell, goal: Target) -> ReachabilityTask {
        ReachabilityTask {
            robot: 1,
            start,
            goal,
            forbidden_regions: BTreeSet::new(),
        }
    }

    #[test]
    fn corner_to_corner_on_empty_grid() {
        let lay = layout(5, 5, &[("g", vec![Cell::new(4, 4)])]);
        let env = TrueEnvironment::new(lay.clone(), []).unwrap();
        let map = OccupancyMap::fully_known(&env);
        let p = plan_reach(&task(Cell::new(0, 0), Target::region("g")), &lay, &map).unwrap();
        assert_eq!(p.len(), 4);
        // with nothing known the diagonal shortcut is unavailable
        let unknown = OccupancyMap::unknown(5, 5);
        let p = plan_reach(&task(Cell::new(0, 0), Target::region("g")), &lay, &unknown).unwrap();
        assert_eq!(p.len(), 8);
    }

    #[test]
    fn walled_goal_is_unreachable() {
        let lay = layout(5, 5, &[("g", vec![Cell::new(2, 2)])]);
        let ring: Vec<Cell> = (1..=3)
            .flat_map(|r| (1..=3).map(move |c| Cell::new(r, c)))
            .filter(|&c| c != Cell::new(2, 2))
            .collect();
        let env = TrueEnvironment::new(lay.clone(), ring).unwrap();
        let map = OccupancyMap::fully_known(&env);
        let t = task(Cell::new(0, 0), Target::region("g"));
        assert!(matches!(
            plan_reach(&t, &lay, &map),
            Err(PlanError::Unreachable { .. })
        ));
        assert!(!region_reachable(
            &lay,
            &map,
            t.start,
            &t.goal,
            &BTreeSet::new()
        ));
        let blank = OccupancyMap::unknown(5, 5);
        assert!(region_reachable(
            &lay,
            &blank,
            t.start,
            &t.goal,
            &BTreeSet::new()
        ));
    }

    #[test]
    fn start_in_goal_is_empty_path() {
        let lay = layout(3, 3, &[("g", vec![Cell::new(1, 1)])]);
        let p = plan_reach(
            &task(Cell::new(1, 1), Target::region("g")),
            &lay,
            &OccupancyMap::unknown(3, 3),
        )
        .unwrap();
        assert!(p.is_empty());
        assert_eq!(p.cells, vec![Cell::new(1, 1)]);
    }

    #[test]
    fn forbidden_regions_are_avoided() {
        // a wall of region `x` across column 2 except row 4
        let wall: Vec<Cell> = (0..4).map(|r| Cell::new(r, 2)).collect();
        let lay = layout(5, 5, &[("x", wall), ("g", vec![Cell::new(0, 4)])]);
        let env = TrueEnvironment::new(lay.clone(), []).unwrap();
        let map = OccupancyMap::fully_known(&env);
        let mut t = task(Cell::new(0, 0), Target::region("g"));
        assert_eq!(plan_reach(&t, &lay, &map).unwrap().len(), 4);
        t.forbidden_regions.insert("x".into());
        let p = plan_reach(&t, &lay, &map).unwrap();
        assert!(p
            .cells
            .iter()
            .all(|c| lay.regions_at(*c).is_empty() || *c == Cell::new(0, 4)));
        assert_eq!(p.len(), 8);
    }

    #[test]
    fn free_space_goal() {
        let lay = layout(3, 1, &[("a", vec![Cell::new(0, 0)])]);
        let p = plan_reach(
            &task(Cell::new(0, 0), Target::FreeSpace),
            &lay,
            &OccupancyMap::unknown(3, 1),
        )
        .unwrap();
        assert_eq!(p.cells, vec![Cell::new(0, 0), Cell::new(0, 1)]);
    }

    #[test]
    fn blocked_detection() {
        let lay = layout(4, 1, &[]);
        let env = TrueEnvironment::new(lay, [Cell::new(0, 2)]).unwrap();
        let path = [
            Cell::new(0, 0),
            Cell::new(0, 1),
            Cell::new(0, 2),
            Cell::new(0, 3),
        ];
        let mut map = OccupancyMap::unknown(4, 1);
        assert_eq!(path_blocked(&path, &map), None);
        map.update(&crate::gridworld::sense(&env, Cell::new(0, 1), 1.0, false))
            .unwrap();
        assert_eq!(path_blocked(&path, &map), Some(2));
        assert_eq!(path_blocked(&path[..2], &map), None);
    }

    #[test]
    fn diagonal_corner_cut_is_blocked() {
        let mut map = OccupancyMap::unknown(2, 2);
        map.update(&[(Cell::new(0, 1), true)]).unwrap();
        assert_eq!(
            path_blocked(&[Cell::new(0, 0), Cell::new(1, 1)], &map),
            Some(1)
        );
    }
}
