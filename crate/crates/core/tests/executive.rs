mod common;

use std::collections::BTreeSet;
use std::fs;
use std::path::PathBuf;

use common::*;
use gridltl::executive::{
    communication_events, compile, events_to_jsonl, run_mission, run_scenario, EventKind,
    MissionConfig, OutcomeKind,
};
use gridltl::scenario::Scenario;

fn scenario(name: &str) -> Scenario {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name);
    Scenario::parse(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn random_missions_keep_invariants_and_succeed() {
    for seed in 0..25 {
        let s = random_scenario(1000 + seed);
        let config = MissionConfig::from_scenario(&s);
        let plan = compile(&s, &config).unwrap();
        if !plan.is_feasible() {
            continue;
        }
        let env = s.environment().unwrap();
        let out = run_mission(&plan, &env, &s.robots, &config);
        check_trace(&plan, &env, &out)
            .unwrap_or_else(|e| panic!("seed {seed}: {e}\n{}", s.to_text()));
        assert!(
            out.kind.is_success(),
            "seed {seed}: {:?}\n{}",
            out.kind,
            s.to_text()
        );
    }
}

#[test]
fn runs_are_deterministic() {
    for name in ["prune.scn", "env1.scn", "maze.scn"] {
        let s = scenario(name);
        let (_, a) = run_scenario(&s).unwrap();
        let (_, b) = run_scenario(&s).unwrap();
        assert_eq!(
            events_to_jsonl(&a.events),
            events_to_jsonl(&b.events),
            "{name}"
        );
        assert_eq!(a.trajectories_csv(), b.trajectories_csv());
    }
}

#[test]
fn robot_update_order_does_not_change_transitions() {
    for seed in 0..15 {
        let s = random_scenario(2000 + seed);
        let mut config = MissionConfig::from_scenario(&s);
        let plan = compile(&s, &config).unwrap();
        let env = s.environment().unwrap();
        let a = run_mission(&plan, &env, &s.robots, &config);
        config.reverse_robot_order = true;
        let b = run_mission(&plan, &env, &s.robots, &config);
        let pairs = |o: &gridltl::executive::MissionOutcome| -> Vec<(usize, usize)> {
            o.transitions.iter().map(|t| (t.from, t.to)).collect()
        };
        assert_eq!(pairs(&a), pairs(&b), "seed {seed}");
    }
}

#[test]
fn communication_is_selection_rounds_and_arrivals() {
    let s = scenario("prune.scn");
    let (_, out) = run_scenario(&s).unwrap();
    let c = communication_events(&out.events);
    let count = |k: EventKind| out.events.iter().filter(|e| e.kind == k).count();
    assert_eq!(count(EventKind::SymbolReselect), 0);
    assert_eq!(c.selection_rounds, out.transitions.len());
    assert_eq!(c.arrival_notifications, count(EventKind::Arrive));
    // one robot, one arrival per transition that assigned it
    let mut window = BTreeSet::new();
    for e in &out.events {
        match e.kind {
            EventKind::Arrive => assert!(window.insert(e.robot.unwrap()), "robot reported twice"),
            EventKind::Transition => window.clear(),
            _ => {}
        }
    }
}

#[test]
fn named_scenarios_behave() {
    let (_, out) = run_scenario(&scenario("nba1_l1.scn")).unwrap();
    assert_eq!(out.kind, OutcomeKind::InfeasibleOffline);
    assert_eq!(out.kind.exit_code(), 2);
    let (_, out) = run_scenario(&scenario("nba1_l2.scn")).unwrap();
    assert!(out.kind.is_success());
    assert_eq!(out.transitions[0].tick, 2);
    let (_, out) = run_scenario(&scenario("conserv.scn")).unwrap();
    assert_eq!(out.kind, OutcomeKind::InfeasibleOffline);
}

#[test]
fn tiny_budget_reports_failure() {
    let mut s = scenario("maze.scn");
    s.max_steps = 5;
    let (_, out) = run_scenario(&s).unwrap();
    assert_eq!(out.kind.exit_code(), 3);
    assert_eq!(out.events.last().unwrap().kind, EventKind::Failure);
}

#[test]
fn relaxed_avoidance_also_keeps_invariants() {
    for seed in 0..15 {
        let mut s = random_scenario(3000 + seed);
        s.relaxed_avoidance = true;
        let config = MissionConfig::from_scenario(&s);
        let plan = compile(&s, &config).unwrap();
        let env = s.environment().unwrap();
        let out = run_mission(&plan, &env, &s.robots, &config);
        check_trace(&plan, &env, &out)
            .unwrap_or_else(|e| panic!("seed {seed}: {e}\n{}", s.to_text()));
    }
}
