//! Offline search for NBA transitions that split into independent per-robot
//! reachability tasks.
//!
//! Starting from an auxiliary state whose only way forward is the initial
//! labelling, [`decompose`] repeatedly enumerates single-symbol runs
//! `q q1 … qK qK` out of every discovered state and keeps those whose symbol
//! can be produced by robots moving one at a time without disturbing the
//! self-loop of `q`.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use thiserror::Error;

use crate::buchi::{Guard, Nba};
use crate::ltl::AtomicPredicate;
use crate::symbols::{
    feasible_symbols_of_guard, has_feasible_symbol, symbol_targets, RegionRelations, Symbol,
    SymbolError, SymbolSetResult, DEFAULT_ENUMERATION_CAP,
};

/// Clause limit for [`check_local_cnf_fragment`].
pub const DEFAULT_CLAUSE_CAP: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecomposeError {
    #[error(transparent)]
    Symbols(#[from] SymbolError),
}

/// An automaton with one extra state `aux` that is the only initial state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugmentedNba {
    pub nba: Nba,
    pub aux: usize,
}

/// Adds `aux` with a `true` self-loop and, for each original initial state,
/// a transition guarded by the minterm of `initial_symbol` over the
/// automaton's predicates.
pub fn augment(nba: &Nba, initial_symbol: &Symbol) -> AugmentedNba {
    let aux = nba.num_states();
    let enter = Guard::minterm(nba.ap_universe(), initial_symbol);
    let mut trans: Vec<(usize, usize, Guard)> = nba
        .transitions()
        .map(|(s, d, g)| (s, d, g.clone()))
        .collect();
    trans.push((aux, aux, Guard::True));
    for &q0 in nba.initial() {
        trans.push((aux, q0, enter.clone()));
    }
    let out = Nba::new(
        aux + 1,
        [aux].into(),
        nba.accepting().clone(),
        trans,
        nba.ap_universe().clone(),
    )
    .expect("augmenting a valid automaton keeps it valid");
    AugmentedNba { nba: out, aux }
}

/// Drops every transition that no feasible symbol can enable, then every
/// transition into a state that can no longer reach an accepting cycle.
pub fn prune_infeasible(a: &AugmentedNba, relations: &RegionRelations) -> AugmentedNba {
    let feasible = a
        .nba
        .filter_transitions(|_, _, g| has_feasible_symbol(g, relations));
    let live = feasible.live_states();
    AugmentedNba {
        nba: feasible.filter_transitions(|_, d, _| live.contains(&d)),
        aux: a.aux,
    }
}

/// A run `q q1 … qK qK` produced by repeating one symbol `K + 1` times.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateRun {
    /// `q, q1, …, qK` (the final repetition of `qK` is implicit).
    pub states: Vec<usize>,
    pub composite_guard: Guard,
    /// Feasible symbols of the composite guard.
    pub symbols: SymbolSetResult,
    /// Some state of the run, endpoints included, is accepting.
    pub accepting: bool,
}

impl CandidateRun {
    pub fn source(&self) -> usize {
        self.states[0]
    }

    pub fn target(&self) -> usize {
        *self.states.last().unwrap()
    }

    /// Number of hops `K`.
    pub fn hops(&self) -> usize {
        self.states.len() - 1
    }
}

/// All single-symbol runs out of `q` with at most `max_k` hops.
///
/// Intermediate states are pairwise distinct, differ from their successor,
/// and must not be able to keep the symbol on a self-loop; the last state
/// must. Branches are cut as soon as the partial composite guard has no
/// feasible symbol.
pub fn enumerate_runs(
    a: &AugmentedNba,
    q: usize,
    relations: &RegionRelations,
    max_k: usize,
    enumeration_cap: usize,
) -> Result<Vec<CandidateRun>, DecomposeError> {
    let mut raw = Vec::new();
    for (q1, g) in a.nba.out_transitions(q) {
        if has_feasible_symbol(g, relations) {
            let mut path = vec![q, q1];
            extend_run(&a.nba, &mut path, g.clone(), relations, max_k, &mut raw);
        }
    }
    raw.into_iter()
        .map(|(states, composite_guard)| {
            let symbols = feasible_symbols_of_guard(&composite_guard, relations, enumeration_cap)?;
            let accepting = states.iter().any(|&s| a.nba.is_accepting(s));
            Ok(CandidateRun {
                states,
                composite_guard,
                symbols,
                accepting,
            })
        })
        .collect()
}

/// `path` ends in `q^k` (k ≥ 1) and `so_far` is the conjunction of the hop
/// guards plus the negated self-loops of the intermediates before `q^k`.
fn extend_run(
    nba: &Nba,
    path: &mut Vec<usize>,
    so_far: Guard,
    relations: &RegionRelations,
    max_k: usize,
    out: &mut Vec<(Vec<usize>, Guard)>,
) {
    let last = *path.last().unwrap();
    let own_loop = nba.self_loop(last);
    if let Some(stay) = own_loop {
        let composite = Guard::and(vec![so_far.clone(), stay.clone()]);
        if has_feasible_symbol(&composite, relations) {
            out.push((path.clone(), composite));
        }
    }
    let hops = path.len() - 1;
    if hops >= max_k || path[1..hops].contains(&last) {
        return;
    }
    let passing = match own_loop {
        Some(stay) => Guard::and(vec![so_far, Guard::not(stay.clone())]),
        None => so_far,
    };
    for (next, g) in nba.out_transitions(last) {
        if next == last {
            continue;
        }
        let extended = Guard::and(vec![passing.clone(), g.clone()]);
        if has_feasible_symbol(&extended, relations) {
            path.push(next);
            extend_run(nba, path, extended, relations, max_k, out);
            path.pop();
        }
    }
}

/// Symbols robots can actually hold: nobody stands on an obstacle.
fn realizable(sigma: &Symbol) -> bool {
    !sigma.aps.iter().any(AtomicPredicate::is_obstacle)
}

/// Whether a transition symbol `next` can be produced from a state whose
/// self-loop is currently held by `current`.
///
/// Robots active in `current` that the transition mentions must keep their
/// location; robots the transition mentions but does not activate have to be
/// in free space, so an active robot cannot be one of them.
pub fn symbols_compatible(
    current: &Symbol,
    next: &Symbol,
    next_robots: &BTreeSet<u32>,
    relations: &RegionRelations,
) -> bool {
    let shared: BTreeSet<u32> = current
        .robots()
        .intersection(next_robots)
        .copied()
        .collect();
    if shared.is_empty() {
        return true;
    }
    match (
        symbol_targets(current, &shared, relations),
        symbol_targets(next, &shared, relations),
    ) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    }
}

/// Checks the run against every self-loop symbol of its source.
///
/// Returns whether each self-loop symbol has some compatible run symbol, and
/// the run symbols compatible with at least one of them. Which of those apply
/// depends on the label held when the transition is dispatched.
pub fn is_decomposable(
    run: &CandidateRun,
    self_loop_symbols: &BTreeSet<Symbol>,
    relations: &RegionRelations,
) -> (bool, BTreeSet<Symbol>) {
    let candidates: Vec<&Symbol> = run
        .symbols
        .symbols
        .iter()
        .filter(|s| realizable(s))
        .collect();
    let robots = &run.symbols.guard_robots;
    let ok = |cur: &Symbol, nxt: &Symbol| symbols_compatible(cur, nxt, robots, relations);
    let forall_exists = self_loop_symbols
        .iter()
        .all(|cur| candidates.iter().any(|nxt| ok(cur, nxt)));
    let usable = candidates
        .into_iter()
        .filter(|nxt| self_loop_symbols.iter().any(|cur| ok(cur, nxt)))
        .cloned()
        .collect();
    (forall_exists, usable)
}

/// A run that realizes a decomposable transition, restricted to the symbols
/// that work from some self-loop symbol of its source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunWitness {
    pub states: Vec<usize>,
    pub composite_guard: Guard,
    pub guard_robots: BTreeSet<u32>,
    pub symbols: BTreeSet<Symbol>,
    pub accepting: bool,
}

impl RunWitness {
    pub fn hops(&self) -> usize {
        self.states.len() - 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecomposeConfig {
    pub relations: RegionRelations,
    /// Longest run to consider; `None` means the number of automaton states.
    pub max_k: Option<usize>,
    pub enumeration_cap: usize,
}

impl Default for DecomposeConfig {
    fn default() -> Self {
        DecomposeConfig {
            relations: RegionRelations::all_disjoint(),
            max_k: None,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decomposition {
    pub aux: usize,
    pub d_set: BTreeSet<usize>,
    pub q_next: BTreeMap<usize, BTreeSet<usize>>,
    pub sigma_dec: BTreeMap<(usize, usize), BTreeSet<Symbol>>,
    pub witnesses: BTreeMap<(usize, usize), Vec<RunWitness>>,
    /// Self-loop symbols used for each state of `d_set`.
    pub self_loop_symbols: BTreeMap<usize, BTreeSet<Symbol>>,
    /// Size of `d_set` after each processed state.
    pub d_set_history: Vec<usize>,
}

impl Decomposition {
    pub fn successors(&self, q: usize) -> impl Iterator<Item = usize> + '_ {
        self.q_next.get(&q).into_iter().flatten().copied()
    }

    /// Line-oriented dump: `aux`, `dset`, `next q : …`, `sigma q q' : {…}`.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let join = |it: &mut dyn Iterator<Item = usize>| {
            it.map(|q| q.to_string()).collect::<Vec<_>>().join(" ")
        };
        writeln!(s, "aux {}", self.aux).unwrap();
        writeln!(s, "dset {}", join(&mut self.d_set.iter().copied())).unwrap();
        for (q, next) in &self.q_next {
            writeln!(s, "next {q} : {}", join(&mut next.iter().copied())).unwrap();
        }
        for ((q, q2), syms) in &self.sigma_dec {
            for sym in syms {
                writeln!(s, "sigma {q} {q2} : {sym}").unwrap();
            }
        }
        s
    }
}

/// Fixpoint over states reachable from `aux` through decomposable transitions.
pub fn decompose(
    a: &AugmentedNba,
    config: &DecomposeConfig,
) -> Result<Decomposition, DecomposeError> {
    let max_k = config.max_k.unwrap_or(a.nba.num_states()).max(1);
    let mut dec = Decomposition {
        aux: a.aux,
        d_set: [a.aux].into(),
        q_next: BTreeMap::new(),
        sigma_dec: BTreeMap::new(),
        witnesses: BTreeMap::new(),
        self_loop_symbols: BTreeMap::new(),
        d_set_history: Vec::new(),
    };
    let mut queue = VecDeque::from([a.aux]);
    while let Some(q) = queue.pop_front() {
        let self_syms: BTreeSet<Symbol> = if q == a.aux {
            [Symbol::empty()].into()
        } else {
            let g = a.nba.self_loop(q).cloned().unwrap_or(Guard::False);
            feasible_symbols_of_guard(&g, &config.relations, config.enumeration_cap)?
                .symbols
                .into_iter()
                .filter(realizable)
                .collect()
        };
        let runs = enumerate_runs(a, q, &config.relations, max_k, config.enumeration_cap)?;
        for run in runs {
            let (ok, common) = is_decomposable(&run, &self_syms, &config.relations);
            if !ok || common.is_empty() {
                continue;
            }
            let target = run.target();
            dec.q_next.entry(q).or_default().insert(target);
            dec.sigma_dec
                .entry((q, target))
                .or_default()
                .extend(common.iter().cloned());
            dec.witnesses
                .entry((q, target))
                .or_default()
                .push(RunWitness {
                    states: run.states.clone(),
                    guard_robots: run.symbols.guard_robots.clone(),
                    composite_guard: run.composite_guard,
                    symbols: common,
                    accepting: run.accepting,
                });
            if dec.d_set.insert(target) {
                queue.push_back(target);
            }
        }
        dec.self_loop_symbols.insert(q, self_syms);
        dec.d_set_history.push(dec.d_set.len());
    }
    Ok(dec)
}

/// Result of checking whether every guard is a conjunction of single-robot
/// clauses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CnfFragment {
    Local,
    /// The guard of this transition has a clause over several robots.
    NonLocal {
        source: usize,
        target: usize,
    },
    /// CNF conversion of this guard exceeded the clause cap.
    Indeterminate {
        source: usize,
        target: usize,
    },
}

impl CnfFragment {
    pub fn is_local(&self) -> bool {
        matches!(self, CnfFragment::Local)
    }
}

/// Disjunction of literals, each a predicate with its polarity.
pub type Clause = BTreeSet<(AtomicPredicate, bool)>;

/// CNF of a guard as a set of clauses; `None` once more than `cap` clauses
/// would be needed. Tautological clauses are dropped.
pub fn guard_cnf(g: &Guard, cap: usize) -> Option<BTreeSet<Clause>> {
    fn go(g: &Guard, cap: usize) -> Option<BTreeSet<Clause>> {
        match g {
            Guard::True => Some(BTreeSet::new()),
            Guard::False => Some([Clause::new()].into()),
            Guard::Ap(a) => Some([[(a.clone(), true)].into()].into()),
            Guard::Not(x) => match x.as_ref() {
                Guard::Ap(a) => Some([[(a.clone(), false)].into()].into()),
                _ => unreachable!("guard is in negation normal form"),
            },
            Guard::And(v) => {
                let mut out = BTreeSet::new();
                for c in v {
                    out.extend(go(c, cap)?);
                    if out.len() > cap {
                        return None;
                    }
                }
                Some(out)
            }
            Guard::Or(v) => {
                let mut acc: BTreeSet<Clause> = [Clause::new()].into();
                for c in v {
                    let rhs = go(c, cap)?;
                    let mut next = BTreeSet::new();
                    for l in &acc {
                        for r in &rhs {
                            let merged: Clause = l.union(r).cloned().collect();
                            let tautology = merged
                                .iter()
                                .any(|(a, v)| merged.contains(&(a.clone(), !v)));
                            if !tautology {
                                next.insert(merged);
                            }
                            if next.len() > cap {
                                return None;
                            }
                        }
                    }
                    acc = next;
                }
                Some(acc)
            }
        }
    }
    go(&g.to_nnf(), cap)
}

/// Whether every transition guard's CNF has each clause mentioning at most
/// one robot. Under that shape every transition is decomposable whenever it
/// is feasible.
pub fn check_local_cnf_fragment(a: &Nba, clause_cap: usize) -> CnfFragment {
    for (source, target, g) in a.transitions() {
        match guard_cnf(g, clause_cap) {
            None => return CnfFragment::Indeterminate { source, target },
            Some(clauses) => {
                let multi = clauses.iter().any(|c| {
                    c.iter()
                        .map(|(a, _)| a.robot)
                        .collect::<BTreeSet<_>>()
                        .len()
                        > 1
                });
                if multi {
                    return CnfFragment::NonLocal { source, target };
                }
            }
        }
    }
    CnfFragment::Local
}
