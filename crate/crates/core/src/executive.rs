//! Online execution: picks the next automaton state and symbol, hands each
//! robot a reachability task, moves robots tick by tick on a shared map that
//! fills in as they sense, and replans or reselects when the map rules a
//! plan out.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::buchi::{translate_with_cap, BuchiError, Guard, Nba, DEFAULT_STATE_CAP};
use crate::decompose::{
    augment, check_local_cnf_fragment, decompose, prune_infeasible, symbols_compatible,
    AugmentedNba, CnfFragment, DecomposeConfig, DecomposeError, Decomposition, DEFAULT_CLAUSE_CAP,
};
use crate::distgraph::{Distance, DistanceGraph};
use crate::gridworld::{label, sense, Cell, OccupancyMap, Poses, TrueEnvironment};
use crate::localplan::{path_blocked, plan_reach, region_reachable, ReachabilityTask};
use crate::scenario::{RobotSpec, Scenario, ScenarioError};
use crate::symbols::{symbol_targets, Symbol, Target, DEFAULT_ENUMERATION_CAP};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymbolPolicy {
    /// Fewest generating robots, ties broken lexicographically.
    MinRobots,
    /// Uniform choice from the mission RNG.
    Random,
}

impl fmt::Display for SymbolPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SymbolPolicy::MinRobots => "min_robots",
            SymbolPolicy::Random => "random",
        })
    }
}

impl std::str::FromStr for SymbolPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "min_robots" => Ok(SymbolPolicy::MinRobots),
            "random" => Ok(SymbolPolicy::Random),
            _ => Err(format!("unknown symbol policy `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissionConfig {
    pub accepting_target: usize,
    pub max_steps: usize,
    pub sensor_range: f64,
    pub occlusion: bool,
    /// Forbid only regions the current invariant negates for the robot,
    /// instead of every region other than the target.
    pub relaxed_avoidance: bool,
    pub symbol_policy: SymbolPolicy,
    pub seed: u64,
    /// Move robots in descending id order within a tick.
    pub reverse_robot_order: bool,
    pub max_k: Option<usize>,
    pub enumeration_cap: usize,
    pub record_ticks: bool,
    pub snapshot_every: Option<usize>,
}

impl Default for MissionConfig {
    fn default() -> Self {
        MissionConfig {
            accepting_target: 2,
            max_steps: 10_000,
            sensor_range: 1.0,
            occlusion: false,
            relaxed_avoidance: false,
            symbol_policy: SymbolPolicy::MinRobots,
            seed: 0,
            reverse_robot_order: false,
            max_k: None,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
            record_ticks: true,
            snapshot_every: None,
        }
    }
}

impl MissionConfig {
    pub fn from_scenario(s: &Scenario) -> Self {
        MissionConfig {
            accepting_target: s.accepting_target,
            max_steps: s.max_steps,
            sensor_range: s.sensor_range,
            occlusion: s.occlusion,
            relaxed_avoidance: s.relaxed_avoidance,
            symbol_policy: s.symbol_policy,
            seed: s.seed,
            ..MissionConfig::default()
        }
    }
}

#[derive(Debug, Error)]
pub enum MissionError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Buchi(#[from] BuchiError),
    #[error(transparent)]
    Decompose(#[from] DecomposeError),
}

/// Everything computed before the robots move.
#[derive(Debug, Clone)]
pub struct OfflinePlan {
    pub nba: Nba,
    /// Augmented with the auxiliary initial state and pruned.
    pub augmented: AugmentedNba,
    pub decomposition: Decomposition,
    pub graph: DistanceGraph,
    pub cnf: CnfFragment,
}

impl OfflinePlan {
    pub fn aux(&self) -> usize {
        self.augmented.aux
    }

    pub fn is_feasible(&self) -> bool {
        self.graph.distance_to_vf(self.aux()).is_finite()
    }

    /// Guard that must hold while the mission sits in `q`.
    pub fn invariant(&self, q: usize) -> Guard {
        self.augmented
            .nba
            .self_loop(q)
            .cloned()
            .unwrap_or(Guard::False)
    }
}

pub fn compile(s: &Scenario, config: &MissionConfig) -> Result<OfflinePlan, MissionError> {
    let formula = s.parse_formula()?;
    let env = s.environment()?;
    let nba = translate_with_cap(&formula, DEFAULT_STATE_CAP)?;
    compile_nba(nba, &env, &s.initial_poses(), config)
}

pub fn compile_nba(
    nba: Nba,
    env: &TrueEnvironment,
    start: &Poses,
    config: &MissionConfig,
) -> Result<OfflinePlan, MissionError> {
    let relations = env.layout.relations().clone();
    let initial = label(start, env);
    let augmented = prune_infeasible(&augment(&nba, &initial), &relations);
    let decomposition = decompose(
        &augmented,
        &DecomposeConfig {
            relations,
            max_k: config.max_k,
            enumeration_cap: config.enumeration_cap,
        },
    )?;
    let graph = DistanceGraph::build(&decomposition);
    let cnf = check_local_cnf_fragment(&nba, DEFAULT_CLAUSE_CAP);
    Ok(OfflinePlan {
        nba,
        augmented,
        decomposition,
        graph,
        cnf,
    })
}

/// Next state to aim for: from an accepting-edge source, an accepting edge
/// (preferring targets that can still reach one); otherwise a successor one
/// hop closer. Lowest state index wins ties.
pub fn select_next_state(graph: &DistanceGraph, q: usize) -> Option<usize> {
    if graph.v_f.contains(&q) {
        let acc: Vec<usize> = graph
            .successors(q)
            .filter(|&n| graph.is_accepting_edge(q, n))
            .collect();
        return acc
            .iter()
            .copied()
            .find(|&n| graph.distance_to_vf(n).is_finite())
            .or(acc.first().copied());
    }
    let d = graph.distance_to_vf(q).finite()?;
    graph
        .successors(q)
        .find(|&n| graph.distance_to_vf(n) == Distance::Finite(d - 1))
}

pub fn select_symbol<'a>(
    candidates: impl IntoIterator<Item = &'a Symbol>,
    policy: SymbolPolicy,
    rng: &mut ChaCha8Rng,
) -> Option<Symbol> {
    let mut all: Vec<&Symbol> = candidates.into_iter().collect();
    all.sort();
    all.dedup();
    match policy {
        SymbolPolicy::MinRobots => all
            .into_iter()
            .min_by_key(|s| (s.robots().len(), *s))
            .cloned(),
        SymbolPolicy::Random if all.is_empty() => None,
        SymbolPolicy::Random => Some(all[rng.gen_range(0..all.len())].clone()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Dispatch,
    Sense,
    Replan,
    Arrive,
    Wait,
    Transition,
    Accepting,
    SymbolReselect,
    EdgeRemoved,
    Failure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Event {
    pub tick: usize,
    pub kind: EventKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub robot: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_from: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_to: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub symbol: Option<String>,
    pub detail: String,
}

pub fn events_to_jsonl(events: &[Event]) -> String {
    let mut s = String::new();
    for e in events {
        s.push_str(&serde_json::to_string(e).expect("events serialize"));
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Robots are on their way; the current state's invariant must hold.
    InState,
    /// Every assigned robot has arrived; the run guard must hold.
    Transitioning,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickRecord {
    pub tick: usize,
    pub q_current: usize,
    pub q_next: Option<usize>,
    pub symbol: Option<Symbol>,
    pub phase: Phase,
    pub poses: Poses,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionRecord {
    pub tick: usize,
    pub from: usize,
    pub to: usize,
    /// Distances in the graph as it stood when the transition fired.
    pub d_from: Distance,
    pub d_to: Distance,
    pub accepting: bool,
    pub from_in_vf: bool,
    /// Edges removed since the previous transition.
    pub edge_removals_before: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    StepBudget,
    NoCandidateStates,
    InvariantViolation(String),
    SafetyViolation(String),
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FailureReason::StepBudget => write!(f, "step budget exhausted"),
            FailureReason::NoCandidateStates => write!(f, "no candidate state can make progress"),
            FailureReason::InvariantViolation(m) => write!(f, "invariant violated: {m}"),
            FailureReason::SafetyViolation(m) => write!(f, "safety violated: {m}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OutcomeKind {
    Success {
        accepting_traversals: usize,
        t_f: Vec<usize>,
    },
    InfeasibleOffline,
    InfeasibleOnline(FailureReason),
}

impl OutcomeKind {
    pub fn exit_code(&self) -> i32 {
        match self {
            OutcomeKind::Success { .. } => 0,
            OutcomeKind::InfeasibleOffline => 2,
            OutcomeKind::InfeasibleOnline(_) => 3,
        }
    }

    pub fn is_success(&self) -> bool {
        matches!(self, OutcomeKind::Success { .. })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MissionStats {
    pub steps: usize,
    pub replans: usize,
    pub symbol_reselections: usize,
    pub edge_removals: usize,
    pub plan_latencies_us: Vec<f64>,
    pub map_update_us: Vec<f64>,
}

fn median(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    Some(s[s.len() / 2])
}

impl MissionStats {
    pub fn median_plan_latency_us(&self) -> Option<f64> {
        median(&self.plan_latencies_us)
    }

    pub fn median_map_update_us(&self) -> Option<f64> {
        median(&self.map_update_us)
    }
}

#[derive(Debug, Clone)]
pub struct MissionOutcome {
    pub kind: OutcomeKind,
    pub events: Vec<Event>,
    pub ticks: Vec<TickRecord>,
    pub transitions: Vec<TransitionRecord>,
    pub stats: MissionStats,
    pub final_poses: Poses,
    pub final_map: OccupancyMap,
    pub snapshots: Vec<(usize, OccupancyMap)>,
}

impl MissionOutcome {
    /// First time an accepting edge was traversed.
    pub fn t_f1(&self) -> Option<usize> {
        self.transitions
            .iter()
            .find(|t| t.accepting)
            .map(|t| t.tick)
    }

    pub fn summary(&self) -> MissionSummary {
        let (outcome, reason) = match &self.kind {
            OutcomeKind::Success { .. } => ("success", None),
            OutcomeKind::InfeasibleOffline => ("infeasible_offline", None),
            OutcomeKind::InfeasibleOnline(r) => ("infeasible_online", Some(r.to_string())),
        };
        let comm = communication_events(&self.events);
        MissionSummary {
            outcome: outcome.to_string(),
            reason,
            exit_code: self.kind.exit_code(),
            accepting_traversals: self.transitions.iter().filter(|t| t.accepting).count(),
            t_f: self
                .transitions
                .iter()
                .filter(|t| t.accepting)
                .map(|t| t.tick)
                .collect(),
            steps: self.stats.steps,
            transitions: self.transitions.len(),
            replans: self.stats.replans,
            symbol_reselections: self.stats.symbol_reselections,
            edge_removals: self.stats.edge_removals,
            plan_calls: self.stats.plan_latencies_us.len(),
            median_plan_latency_us: self.stats.median_plan_latency_us(),
            median_map_update_us: self.stats.median_map_update_us(),
            selection_rounds: comm.selection_rounds,
            arrival_notifications: comm.arrival_notifications,
        }
    }

    /// `tick,robot,row,col` for every recorded tick.
    pub fn trajectories_csv(&self) -> String {
        let mut s = String::from("tick,robot,row,col\n");
        for t in &self.ticks {
            for (j, c) in &t.poses {
                s.push_str(&format!("{},{},{},{}\n", t.tick, j, c.row, c.col));
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MissionSummary {
    pub outcome: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub exit_code: i32,
    pub accepting_traversals: usize,
    pub t_f: Vec<usize>,
    pub steps: usize,
    pub transitions: usize,
    pub replans: usize,
    pub symbol_reselections: usize,
    pub edge_removals: usize,
    pub plan_calls: usize,
    pub median_plan_latency_us: Option<f64>,
    pub median_map_update_us: Option<f64>,
    pub selection_rounds: usize,
    pub arrival_notifications: usize,
}

/// Messages the robots had to exchange: one selection round per dispatch or
/// reselection, one notification per arrival.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CommunicationSummary {
    pub selection_rounds: usize,
    pub arrival_notifications: usize,
}

pub fn communication_events(events: &[Event]) -> CommunicationSummary {
    let mut c = CommunicationSummary::default();
    for e in events {
        match e.kind {
            EventKind::Dispatch | EventKind::SymbolReselect => c.selection_rounds += 1,
            EventKind::Arrive => c.arrival_notifications += 1,
            _ => {}
        }
    }
    c
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Idle,
    Moving,
    /// Held before a step that would break the invariant.
    Waiting,
    Arrived,
}

#[derive(Debug, Clone)]
struct Robot {
    id: u32,
    pos: Cell,
    speed: f64,
    credit: f64,
    status: Status,
    target: Option<Target>,
    forbidden: BTreeSet<String>,
    path: Vec<Cell>,
    next_idx: usize,
}

#[derive(Debug, Clone)]
struct Assignment {
    q_next: usize,
    symbol: Symbol,
    guard_robots: BTreeSet<u32>,
    composite: Guard,
    hops: usize,
    accepting: bool,
    hold: Option<usize>,
}

struct Runner<'a> {
    plan: &'a OfflinePlan,
    env: &'a TrueEnvironment,
    config: &'a MissionConfig,
    graph: DistanceGraph,
    map: OccupancyMap,
    robots: Vec<Robot>,
    rng: ChaCha8Rng,
    q: usize,
    active: Option<Assignment>,
    tick: usize,
    events: Vec<Event>,
    ticks: Vec<TickRecord>,
    transitions: Vec<TransitionRecord>,
    stats: MissionStats,
    removals_since_transition: usize,
    snapshots: Vec<(usize, OccupancyMap)>,
}

/// Runs the mission until the accepting target is met, the step budget runs
/// out, or no state can make progress.
pub fn run_mission(
    plan: &OfflinePlan,
    env: &TrueEnvironment,
    robots: &[RobotSpec],
    config: &MissionConfig,
) -> MissionOutcome {
    let mut robots: Vec<Robot> = robots
        .iter()
        .map(|r| Robot {
            id: r.id,
            pos: r.start,
            speed: r.speed,
            credit: 0.0,
            status: Status::Idle,
            target: None,
            forbidden: BTreeSet::new(),
            path: Vec::new(),
            next_idx: 0,
        })
        .collect();
    robots.sort_by_key(|r| r.id);
    let mut runner = Runner {
        plan,
        env,
        config,
        graph: plan.graph.clone(),
        map: OccupancyMap::unknown(env.layout.width(), env.layout.height()),
        robots,
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        q: plan.aux(),
        active: None,
        tick: 0,
        events: Vec::new(),
        ticks: Vec::new(),
        transitions: Vec::new(),
        stats: MissionStats::default(),
        removals_since_transition: 0,
        snapshots: Vec::new(),
    };
    let kind = runner.run();
    let final_poses = runner.poses();
    MissionOutcome {
        kind,
        events: runner.events,
        ticks: runner.ticks,
        transitions: runner.transitions,
        stats: runner.stats,
        final_poses,
        final_map: runner.map,
        snapshots: runner.snapshots,
    }
}

/// Parses, compiles and runs a scenario with its own settings.
pub fn run_scenario(s: &Scenario) -> Result<(OfflinePlan, MissionOutcome), MissionError> {
    let config = MissionConfig::from_scenario(s);
    run_scenario_with(s, &config)
}

pub fn run_scenario_with(
    s: &Scenario,
    config: &MissionConfig,
) -> Result<(OfflinePlan, MissionOutcome), MissionError> {
    let plan = compile(s, config)?;
    let env = s.environment()?;
    let outcome = run_mission(&plan, &env, &s.robots, config);
    Ok((plan, outcome))
}

/// Runs the same mission once per sensor range, in parallel.
pub fn sweep_sensor_range(
    plan: &OfflinePlan,
    env: &TrueEnvironment,
    robots: &[RobotSpec],
    config: &MissionConfig,
    ranges: &[f64],
) -> Vec<(f64, MissionOutcome)> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = ranges
            .iter()
            .map(|&r| {
                let mut c = config.clone();
                c.sensor_range = r;
                c.record_ticks = false;
                scope.spawn(move || (r, run_mission(plan, env, robots, &c)))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("mission thread panicked"))
            .collect()
    })
}

fn negated_regions(g: &Guard, robot: u32, out: &mut BTreeSet<String>) {
    match g {
        Guard::Not(inner) => {
            if let Guard::Ap(ap) = inner.as_ref() {
                if ap.robot == robot {
                    out.insert(ap.region.clone());
                }
            }
        }
        Guard::And(cs) | Guard::Or(cs) => cs.iter().for_each(|c| negated_regions(c, robot, out)),
        Guard::True | Guard::False | Guard::Ap(_) => {}
    }
}

impl<'a> Runner<'a> {
    fn poses(&self) -> Poses {
        self.robots.iter().map(|r| (r.id, r.pos)).collect()
    }

    fn robot_index(&self, id: u32) -> Option<usize> {
        self.robots.iter().position(|r| r.id == id)
    }

    #[allow(clippy::too_many_arguments)]
    fn log(
        &mut self,
        kind: EventKind,
        robot: Option<u32>,
        q_from: Option<usize>,
        q_to: Option<usize>,
        symbol: Option<&Symbol>,
        detail: String,
    ) {
        self.events.push(Event {
            tick: self.tick,
            kind,
            robot,
            q_from,
            q_to,
            symbol: symbol.map(|s| s.to_string()),
            detail,
        });
    }

    fn fail(&mut self, reason: FailureReason) -> OutcomeKind {
        self.log(
            EventKind::Failure,
            None,
            Some(self.q),
            None,
            None,
            reason.to_string(),
        );
        OutcomeKind::InfeasibleOnline(reason)
    }

    fn run(&mut self) -> OutcomeKind {
        if !self.plan.is_feasible() {
            self.log(
                EventKind::Failure,
                None,
                Some(self.q),
                None,
                None,
                "no decomposable accepting path from the initial state".into(),
            );
            return OutcomeKind::InfeasibleOffline;
        }
        self.sense_all();
        self.record_tick(Phase::InState);
        let mut accepting = 0;
        let mut t_f = Vec::new();
        for t in 1..=self.config.max_steps {
            self.tick = t;
            self.stats.steps = t;
            if self.active.is_none() {
                if let Err(reason) = self.dispatch() {
                    return self.fail(reason);
                }
            }
            self.move_robots();
            self.release_waiting();
            self.sense_all();
            if let Err(reason) = self.replan_blocked() {
                return self.fail(reason);
            }
            if let Some(c) = self
                .poses()
                .into_iter()
                .find(|(_, c)| self.env.is_occupied(*c))
            {
                let msg = format!("robot {} on obstacle {}", c.0, c.1);
                return self.fail(FailureReason::SafetyViolation(msg));
            }
            let all_arrived = self.all_arrived();
            let phase = if all_arrived {
                Phase::Transitioning
            } else {
                Phase::InState
            };
            let sigma = label(&self.poses(), self.env);
            let (guard, what) = match (&self.active, phase) {
                (Some(a), Phase::Transitioning) => (a.composite.clone(), "run guard"),
                _ => (self.plan.invariant(self.q), "state invariant"),
            };
            if !guard.eval(&sigma) {
                let msg = format!("{what} of q{} fails under {sigma}", self.q);
                return self.fail(FailureReason::InvariantViolation(msg));
            }
            self.record_tick(phase);
            if let Some(k) = self.config.snapshot_every {
                if k > 0 && t % k == 0 {
                    self.snapshots.push((t, self.map.clone()));
                }
            }
            if all_arrived && self.advance_hold() {
                if self.fire() {
                    accepting += 1;
                    t_f.push(t);
                    if accepting >= self.config.accepting_target {
                        return OutcomeKind::Success {
                            accepting_traversals: accepting,
                            t_f,
                        };
                    }
                }
            }
        }
        self.fail(FailureReason::StepBudget)
    }

    fn record_tick(&mut self, phase: Phase) {
        if !self.config.record_ticks {
            return;
        }
        self.ticks.push(TickRecord {
            tick: self.tick,
            q_current: self.q,
            q_next: self.active.as_ref().map(|a| a.q_next),
            symbol: self.active.as_ref().map(|a| a.symbol.clone()),
            phase,
            poses: self.poses(),
        });
    }

    fn all_arrived(&self) -> bool {
        let Some(a) = &self.active else { return false };
        self.robots
            .iter()
            .filter(|r| a.guard_robots.contains(&r.id))
            .all(|r| r.status == Status::Arrived)
    }

    /// Counts down the idle ticks that stand for the intermediate states of
    /// the run; true when the transition may fire now.
    fn advance_hold(&mut self) -> bool {
        let a = self.active.as_mut().expect("arrival implies an assignment");
        match a.hold {
            None => {
                a.hold = Some(a.hops - 1);
                a.hops == 1
            }
            Some(0) => true,
            Some(h) => {
                a.hold = Some(h - 1);
                h == 1
            }
        }
    }

    /// Moves the mission to the assigned state; true if the edge counted as
    /// an accepting traversal.
    fn fire(&mut self) -> bool {
        let a = self.active.take().expect("firing needs an assignment");
        let from = self.q;
        let record = TransitionRecord {
            tick: self.tick,
            from,
            to: a.q_next,
            d_from: self.graph.distance_to_vf(from),
            d_to: self.graph.distance_to_vf(a.q_next),
            accepting: a.accepting,
            from_in_vf: self.graph.v_f.contains(&from),
            edge_removals_before: self.removals_since_transition,
        };
        self.transitions.push(record);
        self.removals_since_transition = 0;
        self.log(
            EventKind::Transition,
            None,
            Some(from),
            Some(a.q_next),
            Some(&a.symbol),
            format!("after {} hop(s)", a.hops),
        );
        if a.accepting {
            self.log(
                EventKind::Accepting,
                None,
                Some(from),
                Some(a.q_next),
                Some(&a.symbol),
                String::new(),
            );
        }
        self.q = a.q_next;
        for r in &mut self.robots {
            r.status = Status::Idle;
            r.target = None;
            r.path.clear();
            r.credit = 0.0;
        }
        a.accepting
    }

    fn dispatch(&mut self) -> Result<(), FailureReason> {
        loop {
            let q_next =
                select_next_state(&self.graph, self.q).ok_or(FailureReason::NoCandidateStates)?;
            if self.try_edge(q_next, &mut BTreeSet::new(), EventKind::Dispatch) {
                return Ok(());
            }
            self.remove_edge(q_next);
        }
    }

    fn remove_edge(&mut self, q_next: usize) {
        let q = self.q;
        self.graph = self
            .graph
            .remove_edge(q, q_next)
            .expect("only existing edges are selected");
        self.stats.edge_removals += 1;
        self.removals_since_transition += 1;
        let d = self.graph.distance_to_vf(q);
        self.log(
            EventKind::EdgeRemoved,
            None,
            Some(q),
            Some(q_next),
            None,
            format!("no symbol reachable; d_F(q{q}) now {d}"),
        );
    }

    /// Symbols for `q -> q_next` whose targets every robot could still
    /// reach, each with the shortest witness run that decomposes it.
    fn feasible_choices(&self, q_next: usize) -> BTreeMap<Symbol, usize> {
        let q = self.q;
        let accepting = self.graph.is_accepting_edge(q, q_next);
        let Some(witnesses) = self.plan.decomposition.witnesses.get(&(q, q_next)) else {
            return BTreeMap::new();
        };
        let invariant = self.plan.invariant(q);
        let current = label(&self.poses(), self.env).restrict(&invariant.aps());
        let relations = self.env.layout.relations();
        let mut best: BTreeMap<Symbol, usize> = BTreeMap::new();
        for (i, w) in witnesses.iter().enumerate() {
            if accepting && !w.accepting {
                continue;
            }
            for s in &w.symbols {
                if !symbols_compatible(&current, s, &w.guard_robots, relations) {
                    continue;
                }
                match best.get(s) {
                    Some(&j) if witnesses[j].hops() <= w.hops() => {}
                    _ => {
                        best.insert(s.clone(), i);
                    }
                }
            }
        }
        best.retain(|s, i| self.targets_reachable(s, &witnesses[*i].guard_robots));
        best
    }

    fn targets_reachable(&self, sigma: &Symbol, guard_robots: &BTreeSet<u32>) -> bool {
        let Ok(targets) = symbol_targets(sigma, guard_robots, self.env.layout.relations()) else {
            return false;
        };
        targets.iter().all(|(&j, t)| match self.robot_index(j) {
            Some(i) => {
                let r = &self.robots[i];
                region_reachable(
                    &self.env.layout,
                    &self.map,
                    r.pos,
                    t,
                    &self.forbidden_for(r, t),
                )
            }
            None => false,
        })
    }

    fn forbidden_for(&self, r: &Robot, target: &Target) -> BTreeSet<String> {
        let layout = &self.env.layout;
        let mut out: BTreeSet<String> = if self.config.relaxed_avoidance {
            let mut s = BTreeSet::new();
            negated_regions(&self.plan.invariant(self.q).to_nnf(), r.id, &mut s);
            s
        } else {
            layout.labels().map(str::to_string).collect()
        };
        for here in layout.regions_at(r.pos) {
            out.remove(here);
        }
        if let Target::Regions(rs) = target {
            for t in rs {
                out.remove(t);
            }
        }
        out
    }

    /// Picks symbols for `q -> q_next` until one can be assigned; false when
    /// none is left.
    fn try_edge(&mut self, q_next: usize, tried: &mut BTreeSet<Symbol>, kind: EventKind) -> bool {
        loop {
            let choices = self.feasible_choices(q_next);
            let fresh: Vec<&Symbol> = choices.keys().filter(|s| !tried.contains(*s)).collect();
            let Some(sigma) = select_symbol(fresh, self.config.symbol_policy, &mut self.rng) else {
                return false;
            };
            tried.insert(sigma.clone());
            if kind == EventKind::SymbolReselect {
                self.stats.symbol_reselections += 1;
            }
            let w = &self.plan.decomposition.witnesses[&(self.q, q_next)][choices[&sigma]];
            let detail = format!("{} hop(s), robots {:?}", w.hops(), w.guard_robots);
            self.log(kind, None, Some(self.q), Some(q_next), Some(&sigma), detail);
            let witness = choices[&sigma];
            if self.assign(q_next, sigma, witness) {
                return true;
            }
        }
    }

    fn assign(&mut self, q_next: usize, sigma: Symbol, witness: usize) -> bool {
        let w = &self.plan.decomposition.witnesses[&(self.q, q_next)][witness];
        let targets = symbol_targets(&sigma, &w.guard_robots, self.env.layout.relations())
            .expect("feasible choices have targets");
        self.active = Some(Assignment {
            q_next,
            symbol: sigma,
            guard_robots: w.guard_robots.clone(),
            composite: w.composite_guard.clone(),
            hops: w.hops(),
            accepting: w.accepting,
            hold: None,
        });
        for i in 0..self.robots.len() {
            let id = self.robots[i].id;
            let Some(t) = targets.get(&id) else {
                let r = &mut self.robots[i];
                r.status = Status::Idle;
                r.target = None;
                r.path.clear();
                r.credit = 0.0;
                continue;
            };
            let forbidden = self.forbidden_for(&self.robots[i], t);
            {
                let r = &mut self.robots[i];
                r.target = Some(t.clone());
                r.forbidden = forbidden;
            }
            if self.env.layout.is_goal(self.robots[i].pos, t) {
                self.robots[i].status = Status::Arrived;
                self.log(
                    EventKind::Arrive,
                    Some(id),
                    None,
                    None,
                    None,
                    format!("already at {t}"),
                );
                continue;
            }
            if !self.plan_for(i) {
                return false;
            }
        }
        true
    }

    /// Plans robot `i` to its target; false if unreachable.
    fn plan_for(&mut self, i: usize) -> bool {
        let r = &self.robots[i];
        let task = ReachabilityTask {
            robot: r.id,
            start: r.pos,
            goal: r.target.clone().expect("planning needs a target"),
            forbidden_regions: r.forbidden.clone(),
        };
        let started = Instant::now();
        let result = plan_reach(&task, &self.env.layout, &self.map);
        self.stats
            .plan_latencies_us
            .push(started.elapsed().as_secs_f64() * 1e6);
        let r = &mut self.robots[i];
        match result {
            Ok(p) => {
                r.path = p.cells;
                r.next_idx = 1;
                if r.status != Status::Waiting {
                    r.status = Status::Moving;
                }
                true
            }
            Err(_) => false,
        }
    }

    fn move_robots(&mut self) {
        let mut order: Vec<usize> = (0..self.robots.len()).collect();
        if self.config.reverse_robot_order {
            order.reverse();
        }
        for i in order {
            if !matches!(self.robots[i].status, Status::Moving | Status::Waiting) {
                continue;
            }
            self.robots[i].credit += self.robots[i].speed;
            while self.robots[i].credit >= 1.0 - 1e-9
                && self.robots[i].next_idx < self.robots[i].path.len()
            {
                let next = self.robots[i].path[self.robots[i].next_idx];
                let id = self.robots[i].id;
                if !self.step_keeps_invariant(i, next) {
                    if self.robots[i].status != Status::Waiting {
                        self.robots[i].status = Status::Waiting;
                        self.log(
                            EventKind::Wait,
                            Some(id),
                            None,
                            None,
                            None,
                            format!("holding before {next}"),
                        );
                    }
                    self.robots[i].credit = 1.0;
                    break;
                }
                self.step(i);
            }
        }
    }

    fn step_keeps_invariant(&self, i: usize, next: Cell) -> bool {
        let mut poses = self.poses();
        poses.insert(self.robots[i].id, next);
        self.plan.invariant(self.q).eval(&label(&poses, self.env))
    }

    fn step(&mut self, i: usize) {
        let r = &mut self.robots[i];
        r.pos = r.path[r.next_idx];
        r.next_idx += 1;
        r.credit -= 1.0;
        r.status = Status::Moving;
        if r.next_idx == r.path.len() {
            r.status = Status::Arrived;
            r.credit = 0.0;
            let (id, detail) = (
                r.id,
                format!("reached {} at {}", r.target.as_ref().unwrap(), r.pos),
            );
            self.log(EventKind::Arrive, Some(id), None, None, None, detail);
        }
    }

    /// Robots held at the edge of their goal enter together once every
    /// assigned robot has either arrived or is held one step away.
    fn release_waiting(&mut self) {
        let Some(a) = &self.active else { return };
        let assigned: Vec<usize> = (0..self.robots.len())
            .filter(|&i| a.guard_robots.contains(&self.robots[i].id))
            .collect();
        let ready = assigned.iter().all(|&i| {
            let r = &self.robots[i];
            r.status == Status::Arrived
                || (r.status == Status::Waiting && r.next_idx + 1 == r.path.len())
        });
        if !ready {
            return;
        }
        for i in assigned {
            if self.robots[i].status == Status::Waiting {
                self.step(i);
            }
        }
    }

    fn sense_all(&mut self) {
        for i in 0..self.robots.len() {
            let (id, pos) = (self.robots[i].id, self.robots[i].pos);
            let obs = sense(
                self.env,
                pos,
                self.config.sensor_range,
                self.config.occlusion,
            );
            let started = Instant::now();
            let changed = self
                .map
                .update(&obs)
                .expect("observations come from the true map");
            self.stats
                .map_update_us
                .push(started.elapsed().as_secs_f64() * 1e6);
            if !changed.is_empty() {
                let blocked = changed.iter().filter(|c| self.map.is_occupied(**c)).count();
                let detail = format!("{} new cell(s), {} occupied", changed.len(), blocked);
                self.log(EventKind::Sense, Some(id), None, None, None, detail);
            }
        }
    }

    fn replan_blocked(&mut self) -> Result<(), FailureReason> {
        for i in 0..self.robots.len() {
            let r = &self.robots[i];
            if !matches!(r.status, Status::Moving | Status::Waiting) {
                continue;
            }
            if path_blocked(&r.path[r.next_idx - 1..], &self.map).is_none() {
                continue;
            }
            let id = r.id;
            self.stats.replans += 1;
            if self.plan_for(i) {
                let len = self.robots[i].path.len() - 1;
                self.log(
                    EventKind::Replan,
                    Some(id),
                    None,
                    None,
                    None,
                    format!("new path of {len} move(s)"),
                );
                continue;
            }
            self.log(
                EventKind::Replan,
                Some(id),
                None,
                None,
                None,
                "target unreachable".into(),
            );
            return self.recover();
        }
        Ok(())
    }

    /// The current symbol cannot be realized: try another one for the same
    /// edge, then drop the edge and pick a new state.
    fn recover(&mut self) -> Result<(), FailureReason> {
        let a = self.active.take().expect("recovery needs an assignment");
        let mut tried: BTreeSet<Symbol> = [a.symbol].into();
        if self.try_edge(a.q_next, &mut tried, EventKind::SymbolReselect) {
            return Ok(());
        }
        self.remove_edge(a.q_next);
        self.dispatch()
    }
}
