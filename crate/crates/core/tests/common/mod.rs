//! Generators and brute-force oracles shared by the integration tests and the
//! acceptance runner. The oracles deliberately avoid the library's own
//! evaluators.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use gridltl::buchi::{Guard, LassoWord, Nba};
use gridltl::distgraph::Distance;
use gridltl::executive::{MissionOutcome, OfflinePlan, Phase};
use gridltl::gridworld::{label, Cell, TrueEnvironment};
use gridltl::ltl::{AtomicPredicate, Formula};
use gridltl::scenario::{RobotSpec, Scenario};
use gridltl::symbols::{RegionRelations, Symbol};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn ap(robot: u32, region: &str) -> AtomicPredicate {
    AtomicPredicate::new(robot, region)
}

pub fn small_universe() -> Vec<AtomicPredicate> {
    vec![ap(1, "a"), ap(1, "b"), ap(2, "a")]
}

pub fn random_formula(r: &mut ChaCha8Rng, aps: &[AtomicPredicate], depth: usize) -> Formula {
    if depth == 0 || r.gen_bool(0.25) {
        return match r.gen_range(0..10) {
            0 => Formula::True,
            1 => Formula::False,
            _ => Formula::Ap(aps.choose(r).unwrap().clone()),
        };
    }
    let d = depth - 1;
    match r.gen_range(0..9) {
        0 => Formula::not(random_formula(r, aps, d)),
        1 => Formula::and(random_formula(r, aps, d), random_formula(r, aps, d)),
        2 => Formula::or(random_formula(r, aps, d), random_formula(r, aps, d)),
        3 => Formula::next(random_formula(r, aps, d)),
        4 => Formula::until(random_formula(r, aps, d), random_formula(r, aps, d)),
        5 => Formula::release(random_formula(r, aps, d), random_formula(r, aps, d)),
        6 => Formula::eventually(random_formula(r, aps, d)),
        7 => Formula::always(random_formula(r, aps, d)),
        _ => Formula::always(Formula::eventually(random_formula(r, aps, d))),
    }
}

pub fn random_symbol(r: &mut ChaCha8Rng, aps: &[AtomicPredicate]) -> Symbol {
    Symbol::from_aps(aps.iter().filter(|_| r.gen_bool(0.4)).cloned())
}

pub fn random_lasso(r: &mut ChaCha8Rng, aps: &[AtomicPredicate]) -> LassoWord {
    let prefix = (0..r.gen_range(0..4))
        .map(|_| random_symbol(r, aps))
        .collect();
    let cycle = (0..r.gen_range(1..4))
        .map(|_| random_symbol(r, aps))
        .collect();
    LassoWord::new(prefix, cycle)
}

/// Positions of `w` as a flat list plus the index the last position loops to.
fn positions(w: &LassoWord) -> (Vec<Symbol>, usize) {
    let mut all = w.prefix.clone();
    all.extend(w.cycle.iter().cloned());
    (all, w.prefix.len())
}

/// Direct semantics on a lasso: every position has one successor, so any
/// future is covered within `n` steps of the starting position.
pub fn oracle_holds(f: &Formula, w: &LassoWord) -> bool {
    let (pos, loop_to) = positions(w);
    holds(f, &pos, loop_to, 0)
}

fn next_pos(n: usize, loop_to: usize, i: usize) -> usize {
    if i + 1 < n {
        i + 1
    } else {
        loop_to
    }
}

fn holds(f: &Formula, pos: &[Symbol], loop_to: usize, i: usize) -> bool {
    let n = pos.len();
    let chain = |i: usize| {
        let mut v = Vec::with_capacity(n + 1);
        let mut p = i;
        for _ in 0..=n {
            v.push(p);
            p = next_pos(n, loop_to, p);
        }
        v
    };
    match f {
        Formula::True => true,
        Formula::False => false,
        Formula::Ap(a) => pos[i].aps.contains(a),
        Formula::Not(g) => !holds(g, pos, loop_to, i),
        Formula::And(a, b) => holds(a, pos, loop_to, i) && holds(b, pos, loop_to, i),
        Formula::Or(a, b) => holds(a, pos, loop_to, i) || holds(b, pos, loop_to, i),
        Formula::Next(g) => holds(g, pos, loop_to, next_pos(n, loop_to, i)),
        Formula::Until(a, b) => {
            for p in chain(i) {
                if holds(b, pos, loop_to, p) {
                    return true;
                }
                if !holds(a, pos, loop_to, p) {
                    return false;
                }
            }
            false
        }
        Formula::Release(a, b) => {
            for p in chain(i) {
                if !holds(b, pos, loop_to, p) {
                    return false;
                }
                if holds(a, pos, loop_to, p) {
                    return true;
                }
            }
            true
        }
        Formula::Eventually(g) => chain(i).into_iter().any(|p| holds(g, pos, loop_to, p)),
        Formula::Always(g) => chain(i).into_iter().all(|p| holds(g, pos, loop_to, p)),
    }
}

pub fn random_guard(r: &mut ChaCha8Rng, aps: &[AtomicPredicate], depth: usize) -> Guard {
    if depth == 0 || r.gen_bool(0.3) {
        let a = Guard::Ap(aps.choose(r).unwrap().clone());
        return if r.gen_bool(0.3) {
            Guard::Not(Box::new(a))
        } else {
            a
        };
    }
    let n = r.gen_range(2..4);
    let kids = (0..n).map(|_| random_guard(r, aps, depth - 1)).collect();
    match r.gen_range(0..5) {
        0 => Guard::Not(Box::new(Guard::Or(kids))),
        1 | 2 => Guard::And(kids),
        _ => Guard::Or(kids),
    }
}

/// Guard evaluation by plain structural recursion on set membership.
pub fn guard_holds(g: &Guard, sigma: &BTreeSet<AtomicPredicate>) -> bool {
    match g {
        Guard::True => true,
        Guard::False => false,
        Guard::Ap(a) => sigma.contains(a),
        Guard::Not(x) => !guard_holds(x, sigma),
        Guard::And(xs) => xs.iter().all(|x| guard_holds(x, sigma)),
        Guard::Or(xs) => xs.iter().any(|x| guard_holds(x, sigma)),
    }
}

pub fn guard_aps(g: &Guard, out: &mut BTreeSet<AtomicPredicate>) {
    match g {
        Guard::True | Guard::False => {}
        Guard::Ap(a) => {
            out.insert(a.clone());
        }
        Guard::Not(x) => guard_aps(x, out),
        Guard::And(xs) | Guard::Or(xs) => xs.iter().for_each(|x| guard_aps(x, out)),
    }
}

/// All 2^n subsets of the guard's predicates that satisfy it and put no robot
/// in two disjoint regions.
pub fn brute_force_symbols(g: &Guard, relations: &RegionRelations) -> BTreeSet<Symbol> {
    let mut aps = BTreeSet::new();
    guard_aps(g, &mut aps);
    let aps: Vec<AtomicPredicate> = aps.into_iter().collect();
    assert!(aps.len() <= 16, "brute force is exponential");
    let mut out = BTreeSet::new();
    for mask in 0u32..(1 << aps.len()) {
        let set: BTreeSet<AtomicPredicate> = (0..aps.len())
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| aps[i].clone())
            .collect();
        let feasible = set.iter().all(|x| {
            set.iter().all(|y| {
                x.robot != y.robot
                    || x.region == y.region
                    || !relations.disjoint(&x.region, &y.region)
            })
        });
        if feasible && guard_holds(g, &set) {
            out.insert(Symbol { aps: set });
        }
    }
    out
}

/// Breadth-first distances (4- and 8-moves alike) on a fully known grid,
/// using the same corner rule as the planner: a diagonal step needs both
/// orthogonal cells free. `passable` decides every cell but the start.
pub fn bfs_grid(
    w: usize,
    h: usize,
    start: Cell,
    passable: impl Fn(Cell) -> bool,
    obstacle: impl Fn(Cell) -> bool,
) -> BTreeMap<Cell, usize> {
    let mut dist = BTreeMap::from([(start, 0)]);
    let mut q = VecDeque::from([start]);
    while let Some(c) = q.pop_front() {
        let d = dist[&c];
        for dr in -1isize..=1 {
            for dc in -1isize..=1 {
                if dr == 0 && dc == 0 {
                    continue;
                }
                let (r, k) = (c.row as isize + dr, c.col as isize + dc);
                if r < 0 || k < 0 || r >= h as isize || k >= w as isize {
                    continue;
                }
                let n = Cell::new(r as usize, k as usize);
                if !passable(n) || dist.contains_key(&n) {
                    continue;
                }
                if dr != 0 && dc != 0 {
                    let a = Cell::new(c.row, n.col);
                    let b = Cell::new(n.row, c.col);
                    if obstacle(a) || obstacle(b) {
                        continue;
                    }
                }
                dist.insert(n, d + 1);
                q.push_back(n);
            }
        }
    }
    dist
}

/// Shortest hop counts to any of `targets` on a plain edge list.
pub fn reverse_bfs(
    nodes: &BTreeSet<usize>,
    edges: &BTreeSet<(usize, usize)>,
    targets: &BTreeSet<usize>,
) -> BTreeMap<usize, Distance> {
    let mut dist: BTreeMap<usize, Distance> =
        nodes.iter().map(|&q| (q, Distance::Infinite)).collect();
    let mut frontier: Vec<usize> = targets.iter().copied().collect();
    for &t in targets {
        dist.insert(t, Distance::Finite(0));
    }
    let mut level = 0;
    while !frontier.is_empty() {
        level += 1;
        let mut next = Vec::new();
        for &(s, d) in edges {
            if frontier.contains(&d) && dist[&s] == Distance::Infinite {
                dist.insert(s, Distance::Finite(level));
                next.push(s);
            }
        }
        frontier = next;
    }
    dist
}

const TEMPLATES: &[&str] = &[
    "F p{r}@{a} & F p{s}@{b}",
    "G F p{r}@{a} & G F p{r}@{b}",
    "(!p{r}@{b} U p{r}@{a}) & F p{r}@{b}",
    "G F (p{r}@{a} | p{s}@{b})",
    "F (p{r}@{a} & F p{s}@{c})",
    "G F p{r}@{a} & G !p{s}@{c}",
    "G (p{r}@{a} -> F p{s}@{b}) & G F p{r}@{a}",
    "G F p{r}@{a} & G F p{s}@{b} & G !p{r}@{c}",
];

fn connected_avoiding(s: &Scenario, from: Cell, goal: &str) -> bool {
    let w = s.width;
    let h = s.height;
    let region_of: BTreeMap<Cell, &str> = s
        .regions
        .iter()
        .flat_map(|(l, cells)| cells.iter().map(move |c| (*c, l.as_str())))
        .collect();
    let dist = bfs_grid(
        w,
        h,
        from,
        |c| !s.obstacles.contains(&c) && region_of.get(&c).is_none_or(|l| *l == goal),
        |c| s.obstacles.contains(&c),
    );
    s.regions[goal].iter().any(|c| dist.contains_key(c))
}

/// A random scenario whose regions are disjoint, each reachable from every
/// robot start without crossing another region.
pub fn random_scenario(seed: u64) -> Scenario {
    let mut r = rng(seed);
    loop {
        let w = r.gen_range(10..16);
        let h = r.gen_range(10..16);
        let mut s = Scenario {
            name: format!("random-{seed}"),
            width: w,
            height: h,
            sensor_range: r.gen_range(1..4) as f64,
            seed,
            max_steps: 3000,
            accepting_target: 2,
            occlusion: r.gen_bool(0.5),
            ..Scenario::default()
        };
        for row in 0..h {
            for col in 0..w {
                if r.gen_bool(0.15) {
                    s.obstacles.insert(Cell::new(row, col));
                }
            }
        }
        let mut taken: BTreeSet<Cell> = s.obstacles.clone();
        for name in ["a", "b", "c"] {
            let row = r.gen_range(0..h - 1);
            let col = r.gen_range(0..w - 1);
            let cells: BTreeSet<Cell> = [(0, 0), (0, 1), (1, 0), (1, 1)]
                .iter()
                .take(r.gen_range(1..5))
                .map(|&(dr, dc)| Cell::new(row + dr, col + dc))
                .filter(|c| !taken.contains(c))
                .collect();
            taken.extend(cells.iter().copied());
            s.regions.insert(name.to_string(), cells);
        }
        let free: Vec<Cell> = (0..h)
            .flat_map(|row| (0..w).map(move |col| Cell::new(row, col)))
            .filter(|c| !taken.contains(c))
            .collect();
        let n_robots = r.gen_range(1..4);
        for id in 1..=n_robots {
            s.robots.push(RobotSpec {
                id,
                start: *free.choose(&mut r).unwrap(),
                speed: if r.gen_bool(0.3) { 0.5 } else { 1.0 },
            });
        }
        let robot = |r: &mut ChaCha8Rng| r.gen_range(1..=n_robots).to_string();
        let template = TEMPLATES.choose(&mut r).unwrap();
        s.formula = template
            .replace("{r}", &robot(&mut r))
            .replace("{s}", &robot(&mut r))
            .replace("{a}", "a")
            .replace("{b}", "b")
            .replace("{c}", "c");
        let ok = s.regions.values().all(|c| !c.is_empty())
            && s.robots
                .iter()
                .all(|rb| ["a", "b", "c"].iter().all(|g| connected_avoiding(&s, rb.start, g)))
            // every region can also be left towards every other one
            && ["a", "b", "c"].iter().all(|from| {
                let start = *s.regions[*from].iter().next().unwrap();
                ["a", "b", "c"].iter().all(|g| connected_avoiding(&s, start, g))
            });
        if ok && s.validate().is_ok() {
            return s;
        }
    }
}

/// Whether the automaton can go from `q` to `q2` in 1..=n steps reading
/// `sigma` at every step.
pub fn constant_run_exists(nba: &Nba, q: usize, q2: usize, sigma: &Symbol) -> bool {
    let mut cur: BTreeSet<usize> = [q].into();
    for _ in 0..nba.num_states() + 1 {
        let mut next = BTreeSet::new();
        for &s in &cur {
            for (d, g) in nba.out_transitions(s) {
                if guard_holds(g, &sigma.aps) {
                    next.insert(d);
                }
            }
        }
        if next.contains(&q2) {
            return true;
        }
        if next == cur {
            return false;
        }
        cur = next;
    }
    false
}

/// Checks one execution trace; returns a description of the first problem.
pub fn check_trace(
    plan: &OfflinePlan,
    env: &TrueEnvironment,
    out: &MissionOutcome,
) -> Result<(), String> {
    let nba = &plan.augmented.nba;
    let mut prev: Option<&gridltl::executive::TickRecord> = None;
    for t in &out.ticks {
        for (j, c) in &t.poses {
            if env.is_occupied(*c) {
                return Err(format!("tick {}: robot {j} on obstacle {c}", t.tick));
            }
            if let Some(p) = prev {
                if p.poses[j].chebyshev(*c) > 1 {
                    return Err(format!("tick {}: robot {j} jumped", t.tick));
                }
            }
        }
        let sigma = label(&t.poses, env);
        match t.phase {
            Phase::InState => {
                let inv = nba
                    .guard(t.q_current, t.q_current)
                    .cloned()
                    .unwrap_or(Guard::False);
                if !guard_holds(&inv, &sigma.aps) {
                    return Err(format!(
                        "tick {}: invariant of q{} fails under {sigma}",
                        t.tick, t.q_current
                    ));
                }
            }
            Phase::Transitioning => {
                let q2 = t.q_next.expect("transitioning has a target");
                if !constant_run_exists(nba, t.q_current, q2, &sigma) {
                    return Err(format!(
                        "tick {}: no run q{} -> q{q2} under {sigma}",
                        t.tick, t.q_current
                    ));
                }
            }
        }
        prev = Some(t);
    }
    for tr in &out.transitions {
        if tr.edge_removals_before > 0 {
            continue;
        }
        let closer = matches!((tr.d_from, tr.d_to), (Distance::Finite(a), Distance::Finite(b)) if b + 1 == a);
        if !(closer || (tr.accepting && tr.from_in_vf)) {
            return Err(format!(
                "transition at tick {} makes no progress: {tr:?}",
                tr.tick
            ));
        }
    }
    Ok(())
}
