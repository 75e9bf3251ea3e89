//! Büchi automata with Boolean guards, LTL translation, and lasso acceptance.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::fmt::Write as _;

use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};
use thiserror::Error;

use crate::ltl::{atomic_predicates, parse_ltl, to_nnf, AtomicPredicate, Formula};
use crate::symbols::Symbol;

/// Default bound on the number of automaton states produced by [`translate`].
pub const DEFAULT_STATE_CAP: usize = 100_000;

/// Propositional formula labelling a transition.
///
/// Values built through [`Guard::and`], [`Guard::or`] and [`Guard::not`] are
/// kept flat, sorted and free of duplicate or absorbed children, so equal
/// guards usually compare equal structurally.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Guard {
    True,
    False,
    Ap(AtomicPredicate),
    Not(Box<Guard>),
    And(Vec<Guard>),
    Or(Vec<Guard>),
}

impl Guard {
    pub fn ap(ap: AtomicPredicate) -> Guard {
        Guard::Ap(ap)
    }

    pub fn literal(ap: AtomicPredicate, positive: bool) -> Guard {
        if positive {
            Guard::Ap(ap)
        } else {
            Guard::Not(Box::new(Guard::Ap(ap)))
        }
    }

    pub fn not(g: Guard) -> Guard {
        match g {
            Guard::True => Guard::False,
            Guard::False => Guard::True,
            Guard::Not(x) => *x,
            g => Guard::Not(Box::new(g)),
        }
    }

    pub fn and(children: Vec<Guard>) -> Guard {
        let mut flat = Vec::with_capacity(children.len());
        for c in children {
            match c {
                Guard::True => {}
                Guard::False => return Guard::False,
                Guard::And(v) => flat.extend(v),
                g => flat.push(g),
            }
        }
        flat.sort();
        flat.dedup();
        if has_complementary_pair(&flat) {
            return Guard::False;
        }
        match flat.len() {
            0 => Guard::True,
            1 => flat.pop().unwrap(),
            _ => Guard::And(flat),
        }
    }

    pub fn or(children: Vec<Guard>) -> Guard {
        let mut flat = Vec::with_capacity(children.len());
        for c in children {
            match c {
                Guard::False => {}
                Guard::True => return Guard::True,
                Guard::Or(v) => flat.extend(v),
                g => flat.push(g),
            }
        }
        flat.sort();
        flat.dedup();
        if has_complementary_pair(&flat) {
            return Guard::True;
        }
        // a | (a & b) == a
        let conjuncts: Vec<BTreeSet<&Guard>> = flat.iter().map(conjunct_set).collect();
        let keep: Vec<bool> = (0..flat.len())
            .map(|i| {
                !(0..flat.len()).any(|k| {
                    k != i
                        && conjuncts[k].len() < conjuncts[i].len()
                        && conjuncts[k].is_subset(&conjuncts[i])
                })
            })
            .collect();
        let mut flat: Vec<Guard> = flat
            .into_iter()
            .zip(keep)
            .filter_map(|(g, k)| k.then_some(g))
            .collect();
        match flat.len() {
            0 => Guard::False,
            1 => flat.pop().unwrap(),
            _ => Guard::Or(flat),
        }
    }

    /// Conjunction of one literal per predicate of `universe`, positive iff
    /// the predicate is in `sigma`.
    pub fn minterm(universe: &BTreeSet<AtomicPredicate>, sigma: &Symbol) -> Guard {
        Guard::and(
            universe
                .iter()
                .map(|a| Guard::literal(a.clone(), sigma.contains(a)))
                .collect(),
        )
    }

    pub fn eval(&self, sigma: &Symbol) -> bool {
        match self {
            Guard::True => true,
            Guard::False => false,
            Guard::Ap(a) => sigma.contains(a),
            Guard::Not(x) => !x.eval(sigma),
            Guard::And(v) => v.iter().all(|g| g.eval(sigma)),
            Guard::Or(v) => v.iter().any(|g| g.eval(sigma)),
        }
    }

    /// Three-valued evaluation; predicates missing from `assignment` are unknown.
    pub fn eval_partial(&self, assignment: &BTreeMap<AtomicPredicate, bool>) -> Option<bool> {
        match self {
            Guard::True => Some(true),
            Guard::False => Some(false),
            Guard::Ap(a) => assignment.get(a).copied(),
            Guard::Not(x) => x.eval_partial(assignment).map(|v| !v),
            Guard::And(v) => {
                let mut all = true;
                for g in v {
                    match g.eval_partial(assignment) {
                        Some(false) => return Some(false),
                        None => all = false,
                        Some(true) => {}
                    }
                }
                all.then_some(true)
            }
            Guard::Or(v) => {
                let mut none = true;
                for g in v {
                    match g.eval_partial(assignment) {
                        Some(true) => return Some(true),
                        None => none = false,
                        Some(false) => {}
                    }
                }
                none.then_some(false)
            }
        }
    }

    pub fn aps(&self) -> BTreeSet<AtomicPredicate> {
        let mut out = BTreeSet::new();
        self.collect_aps(&mut out);
        out
    }

    fn collect_aps(&self, out: &mut BTreeSet<AtomicPredicate>) {
        match self {
            Guard::True | Guard::False => {}
            Guard::Ap(a) => {
                out.insert(a.clone());
            }
            Guard::Not(x) => x.collect_aps(out),
            Guard::And(v) | Guard::Or(v) => v.iter().for_each(|g| g.collect_aps(out)),
        }
    }

    pub fn robots(&self) -> BTreeSet<u32> {
        self.aps().iter().map(|a| a.robot).collect()
    }

    /// True if the guard contains no negation.
    pub fn is_negation_free(&self) -> bool {
        match self {
            Guard::True | Guard::False | Guard::Ap(_) => true,
            Guard::Not(_) => false,
            Guard::And(v) | Guard::Or(v) => v.iter().all(Guard::is_negation_free),
        }
    }

    pub fn from_formula(f: &Formula) -> Result<Guard, BuchiError> {
        Ok(match f {
            Formula::True => Guard::True,
            Formula::False => Guard::False,
            Formula::Ap(a) => Guard::Ap(a.clone()),
            Formula::Not(x) => Guard::not(Guard::from_formula(x)?),
            Formula::And(a, b) => {
                Guard::and(vec![Guard::from_formula(a)?, Guard::from_formula(b)?])
            }
            Formula::Or(a, b) => Guard::or(vec![Guard::from_formula(a)?, Guard::from_formula(b)?]),
            _ => return Err(BuchiError::TemporalGuard(f.to_string())),
        })
    }

    /// Negation normal form as a tree of `And`/`Or` over literals.
    pub fn to_nnf(&self) -> Guard {
        fn go(g: &Guard, positive: bool) -> Guard {
            match (g, positive) {
                (Guard::True, p) | (Guard::False, p) => {
                    if p == matches!(g, Guard::True) {
                        Guard::True
                    } else {
                        Guard::False
                    }
                }
                (Guard::Ap(a), p) => Guard::literal(a.clone(), p),
                (Guard::Not(x), p) => go(x, !p),
                (Guard::And(v), true) | (Guard::Or(v), false) => {
                    Guard::and(v.iter().map(|c| go(c, positive)).collect())
                }
                (Guard::Or(v), true) | (Guard::And(v), false) => {
                    Guard::or(v.iter().map(|c| go(c, positive)).collect())
                }
            }
        }
        go(self, true)
    }
}

fn has_complementary_pair(sorted: &[Guard]) -> bool {
    sorted.iter().any(|g| match g {
        Guard::Not(x) => sorted.binary_search(x).is_ok(),
        _ => false,
    })
}

fn conjunct_set(g: &Guard) -> BTreeSet<&Guard> {
    match g {
        Guard::And(v) => v.iter().collect(),
        g => [g].into(),
    }
}

impl fmt::Display for Guard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn join(f: &mut fmt::Formatter<'_>, v: &[Guard], op: &str) -> fmt::Result {
            write!(f, "(")?;
            for (i, g) in v.iter().enumerate() {
                if i > 0 {
                    write!(f, " {op} ")?;
                }
                write!(f, "{g}")?;
            }
            write!(f, ")")
        }
        match self {
            Guard::True => write!(f, "true"),
            Guard::False => write!(f, "false"),
            Guard::Ap(a) => write!(f, "{a}"),
            Guard::Not(x) => write!(f, "!{x}"),
            Guard::And(v) => join(f, v, "&"),
            Guard::Or(v) => join(f, v, "|"),
        }
    }
}

/// Ultimately periodic word `prefix · cycle^ω`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LassoWord {
    pub prefix: Vec<Symbol>,
    pub cycle: Vec<Symbol>,
}

impl LassoWord {
    /// Panics if `cycle` is empty.
    pub fn new(prefix: Vec<Symbol>, cycle: Vec<Symbol>) -> Self {
        assert!(!cycle.is_empty(), "lasso cycle must be nonempty");
        LassoWord { prefix, cycle }
    }

    /// Number of distinct positions (prefix plus one copy of the cycle).
    pub fn len(&self) -> usize {
        self.prefix.len() + self.cycle.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn symbol_at(&self, i: usize) -> &Symbol {
        if i < self.prefix.len() {
            &self.prefix[i]
        } else {
            &self.cycle[(i - self.prefix.len()) % self.cycle.len()]
        }
    }

    /// Position following `i`, where the last position loops to the cycle start.
    pub fn successor(&self, i: usize) -> usize {
        if i + 1 < self.len() {
            i + 1
        } else {
            self.prefix.len()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BuchiError {
    #[error("automaton exceeds the state cap of {cap}")]
    StateCap { cap: usize },
    #[error("automaton has no states")]
    NoStates,
    #[error("automaton has no initial state")]
    NoInitial,
    #[error("state {state} is out of range (automaton has {num_states} states)")]
    StateOutOfRange { state: usize, num_states: usize },
    #[error("guard mentions undeclared predicate {0}")]
    UndeclaredAp(String),
    #[error("guard contains a temporal operator: {0}")]
    TemporalGuard(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Nondeterministic Büchi automaton; states are `0..num_states`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Nba {
    num_states: usize,
    initial: BTreeSet<usize>,
    accepting: BTreeSet<usize>,
    transitions: BTreeMap<(usize, usize), Guard>,
    ap_universe: BTreeSet<AtomicPredicate>,
}

impl Nba {
    /// Builds and validates an automaton. Parallel transitions between the
    /// same pair of states are merged into one disjunctive guard.
    pub fn new(
        num_states: usize,
        initial: BTreeSet<usize>,
        accepting: BTreeSet<usize>,
        transitions: impl IntoIterator<Item = (usize, usize, Guard)>,
        ap_universe: BTreeSet<AtomicPredicate>,
    ) -> Result<Nba, BuchiError> {
        if num_states == 0 {
            return Err(BuchiError::NoStates);
        }
        if initial.is_empty() {
            return Err(BuchiError::NoInitial);
        }
        let check = |s: usize| {
            if s < num_states {
                Ok(())
            } else {
                Err(BuchiError::StateOutOfRange {
                    state: s,
                    num_states,
                })
            }
        };
        for &s in initial.iter().chain(&accepting) {
            check(s)?;
        }
        let mut merged: BTreeMap<(usize, usize), Guard> = BTreeMap::new();
        for (src, dst, g) in transitions {
            check(src)?;
            check(dst)?;
            if let Some(ap) = g.aps().into_iter().find(|a| !ap_universe.contains(a)) {
                return Err(BuchiError::UndeclaredAp(ap.to_string()));
            }
            let g = match merged.remove(&(src, dst)) {
                Some(old) => Guard::or(vec![old, g]),
                None => g,
            };
            if g != Guard::False {
                merged.insert((src, dst), g);
            }
        }
        Ok(Nba {
            num_states,
            initial,
            accepting,
            transitions: merged,
            ap_universe,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn initial(&self) -> &BTreeSet<usize> {
        &self.initial
    }

    pub fn accepting(&self) -> &BTreeSet<usize> {
        &self.accepting
    }

    pub fn is_accepting(&self, q: usize) -> bool {
        self.accepting.contains(&q)
    }

    pub fn ap_universe(&self) -> &BTreeSet<AtomicPredicate> {
        &self.ap_universe
    }

    pub fn num_transitions(&self) -> usize {
        self.transitions.len()
    }

    /// All transitions ordered by (source, target).
    pub fn transitions(&self) -> impl Iterator<Item = (usize, usize, &Guard)> {
        self.transitions.iter().map(|(&(s, d), g)| (s, d, g))
    }

    pub fn guard(&self, src: usize, dst: usize) -> Option<&Guard> {
        self.transitions.get(&(src, dst))
    }

    pub fn self_loop(&self, q: usize) -> Option<&Guard> {
        self.guard(q, q)
    }

    pub fn out_transitions(&self, q: usize) -> impl Iterator<Item = (usize, &Guard)> {
        self.transitions
            .range((q, 0)..=(q, usize::MAX))
            .map(|(&(_, d), g)| (d, g))
    }

    /// Targets of all transitions out of `q` enabled by `sigma`.
    pub fn successors(&self, q: usize, sigma: &Symbol) -> BTreeSet<usize> {
        self.out_transitions(q)
            .filter(|(_, g)| g.eval(sigma))
            .map(|(d, _)| d)
            .collect()
    }

    /// Copy of the automaton keeping only transitions for which `keep` holds.
    pub fn filter_transitions(&self, mut keep: impl FnMut(usize, usize, &Guard) -> bool) -> Nba {
        Nba {
            transitions: self
                .transitions
                .iter()
                .filter(|(&(s, d), g)| keep(s, d, g))
                .map(|(k, g)| (*k, g.clone()))
                .collect(),
            ..self.clone()
        }
    }

    /// States from which some accepting state can be visited infinitely
    /// often, ignoring guards.
    pub fn live_states(&self) -> BTreeSet<usize> {
        let mut graph: DiGraph<usize, ()> = DiGraph::new();
        let nodes: Vec<NodeIndex> = (0..self.num_states).map(|q| graph.add_node(q)).collect();
        for &(s, d) in self.transitions.keys() {
            graph.add_edge(nodes[s], nodes[d], ());
        }
        let mut live = BTreeSet::new();
        for scc in tarjan_scc(&graph) {
            let nontrivial = scc.len() > 1 || graph.contains_edge(scc[0], scc[0]);
            if nontrivial && scc.iter().any(|&ix| self.is_accepting(graph[ix])) {
                live.extend(scc.iter().map(|&ix| graph[ix]));
            }
        }
        let mut queue: VecDeque<usize> = live.iter().copied().collect();
        while let Some(q) = queue.pop_front() {
            for p in graph.neighbors_directed(nodes[q], petgraph::Direction::Incoming) {
                if live.insert(graph[p]) {
                    queue.push_back(graph[p]);
                }
            }
        }
        live
    }

    /// Whether some run over `prefix · cycle^ω` visits an accepting state
    /// infinitely often.
    ///
    /// Explores the product of automaton states with lasso positions and looks
    /// for a reachable nontrivial strongly connected component containing an
    /// accepting state. Every product node has finitely many successors and the
    /// product is finite, so the answer is exact.
    pub fn accepts_lasso(&self, word: &LassoWord) -> bool {
        let edges = |&(q, i): &(usize, usize)| -> Vec<(usize, usize)> {
            let next = word.successor(i);
            self.successors(q, word.symbol_at(i))
                .into_iter()
                .map(|d| (d, next))
                .collect()
        };
        let starts: Vec<(usize, usize)> = self.initial.iter().map(|&q| (q, 0)).collect();
        product_has_accepting_cycle(&starts, edges, |&(q, _), _| self.is_accepting(q), 1)
    }

    /// Serializes to the line-oriented text format.
    pub fn export_text(&self) -> String {
        let mut s = String::new();
        let list = |it: &mut dyn Iterator<Item = String>| it.collect::<Vec<_>>().join(",");
        writeln!(s, "states {}", self.num_states).unwrap();
        writeln!(
            s,
            "initial {}",
            list(&mut self.initial.iter().map(|q| q.to_string()))
        )
        .unwrap();
        writeln!(
            s,
            "accepting {}",
            list(&mut self.accepting.iter().map(|q| q.to_string()))
        )
        .unwrap();
        writeln!(
            s,
            "ap {}",
            list(&mut self.ap_universe.iter().map(|a| a.to_string()))
        )
        .unwrap();
        for (src, dst, g) in self.transitions() {
            writeln!(s, "trans {src} {dst} {g}").unwrap();
        }
        s
    }

    /// Parses the text format written by [`Nba::export_text`].
    pub fn import_text(text: &str) -> Result<Nba, BuchiError> {
        let mut num_states = None;
        let mut initial = BTreeSet::new();
        let mut accepting = BTreeSet::new();
        let mut universe = BTreeSet::new();
        let mut trans = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let err = |message: String| BuchiError::Parse {
                line: line_no,
                message,
            };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            let rest = rest.trim();
            let states_in = |rest: &str| -> Result<BTreeSet<usize>, BuchiError> {
                rest.split(',')
                    .map(str::trim)
                    .filter(|t| !t.is_empty())
                    .map(|t| {
                        t.parse::<usize>()
                            .map_err(|_| err(format!("bad state index `{t}`")))
                    })
                    .collect()
            };
            match key {
                "states" => {
                    num_states = Some(
                        rest.parse::<usize>()
                            .map_err(|_| err(format!("bad state count `{rest}`")))?,
                    )
                }
                "initial" => initial = states_in(rest)?,
                "accepting" => accepting = states_in(rest)?,
                "ap" => {
                    universe = rest
                        .split(',')
                        .map(str::trim)
                        .filter(|t| !t.is_empty())
                        .map(|t| crate::ltl::parse_atom(t, 0).map_err(|e| err(e.to_string())))
                        .collect::<Result<_, _>>()?
                }
                "trans" => {
                    let mut parts = rest.splitn(3, char::is_whitespace);
                    let mut idx = |what: &str| -> Result<usize, BuchiError> {
                        let t = parts.next().unwrap_or("");
                        t.parse::<usize>()
                            .map_err(|_| err(format!("bad {what} state `{t}`")))
                    };
                    let src = idx("source")?;
                    let dst = idx("target")?;
                    let text = parts.next().unwrap_or("").trim();
                    let f = parse_ltl(text).map_err(|e| err(e.to_string()))?;
                    let g = Guard::from_formula(&f).map_err(|e| err(e.to_string()))?;
                    if let Some(ap) = g.aps().into_iter().find(|a| !universe.contains(a)) {
                        return Err(err(format!("guard mentions undeclared predicate {ap}")));
                    }
                    if let Some(n) = num_states {
                        for s in [src, dst] {
                            if s >= n {
                                return Err(err(format!("state {s} out of range")));
                            }
                        }
                    }
                    trans.push((src, dst, g));
                }
                other => return Err(err(format!("unknown directive `{other}`"))),
            }
        }
        let n = num_states.ok_or(BuchiError::NoStates)?;
        Nba::new(n, initial, accepting, trans, universe)
    }
}

/// Searches the reachable part of a finite product graph for a nontrivial
/// SCC that satisfies every acceptance index in `0..num_sets`.
///
/// `accepting(node, set)` marks nodes; for transition-based acceptance the
/// caller encodes the edge label into the node.
fn product_has_accepting_cycle<N, E, A>(
    starts: &[N],
    mut edges: E,
    accepting: A,
    num_sets: usize,
) -> bool
where
    N: Clone + Ord,
    E: FnMut(&N) -> Vec<N>,
    A: Fn(&N, usize) -> bool,
{
    let mut index: BTreeMap<N, NodeIndex> = BTreeMap::new();
    let mut graph: DiGraph<N, ()> = DiGraph::new();
    let mut queue = VecDeque::new();
    for s in starts {
        if !index.contains_key(s) {
            let ix = graph.add_node(s.clone());
            index.insert(s.clone(), ix);
            queue.push_back(s.clone());
        }
    }
    while let Some(n) = queue.pop_front() {
        let from = index[&n];
        for m in edges(&n) {
            let to = match index.get(&m) {
                Some(&ix) => ix,
                None => {
                    let ix = graph.add_node(m.clone());
                    index.insert(m.clone(), ix);
                    queue.push_back(m);
                    ix
                }
            };
            graph.update_edge(from, to, ());
        }
    }
    for scc in tarjan_scc(&graph) {
        let nontrivial = scc.len() > 1 || graph.contains_edge(scc[0], scc[0]);
        if !nontrivial {
            continue;
        }
        let satisfied = (0..num_sets).all(|k| scc.iter().any(|&ix| accepting(&graph[ix], k)));
        if satisfied {
            return true;
        }
    }
    false
}

/// Transition-based generalized Büchi automaton produced by the tableau.
#[derive(Debug, Clone)]
pub struct GeneralizedNba {
    pub num_states: usize,
    pub initial: BTreeSet<usize>,
    /// (source, target, guard, acceptance sets the transition belongs to)
    pub transitions: Vec<(usize, usize, Guard, BTreeSet<usize>)>,
    pub num_sets: usize,
    pub ap_universe: BTreeSet<AtomicPredicate>,
}

impl GeneralizedNba {
    /// Acceptance: some run uses a transition of every acceptance set
    /// infinitely often.
    pub fn accepts_lasso(&self, word: &LassoWord) -> bool {
        // Product nodes carry the acceptance sets of the transition that
        // entered them, which turns edge marks into node marks.
        type Node = (usize, usize, BTreeSet<usize>);
        let mut by_src: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, t) in self.transitions.iter().enumerate() {
            by_src.entry(t.0).or_default().push(i);
        }
        let edges = |(q, i, _): &Node| -> Vec<Node> {
            let sigma = word.symbol_at(*i);
            let next = word.successor(*i);
            by_src
                .get(q)
                .into_iter()
                .flatten()
                .map(|&t| &self.transitions[t])
                .filter(|t| t.2.eval(sigma))
                .map(|t| (t.1, next, t.3.clone()))
                .collect()
        };
        let starts: Vec<Node> = self
            .initial
            .iter()
            .map(|&q| (q, 0, BTreeSet::new()))
            .collect();
        product_has_accepting_cycle(
            &starts,
            edges,
            |(_, _, acc), k| acc.contains(&k),
            self.num_sets,
        )
    }
}

/// One way of satisfying the obligations of a tableau state in a single step.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Expansion {
    literals: BTreeMap<AtomicPredicate, bool>,
    next: BTreeSet<Formula>,
    postponed: BTreeSet<Formula>,
}

/// Splits a set of NNF obligations into all consistent one-step expansions.
fn expand(obligations: &BTreeSet<Formula>) -> Vec<Expansion> {
    let mut out = Vec::new();
    let start = Expansion {
        literals: BTreeMap::new(),
        next: BTreeSet::new(),
        postponed: BTreeSet::new(),
    };
    expand_rec(
        obligations.iter().cloned().collect(),
        BTreeSet::new(),
        start,
        &mut out,
    );
    out.sort();
    out.dedup();
    out
}

fn expand_rec(
    mut todo: Vec<Formula>,
    mut done: BTreeSet<Formula>,
    mut e: Expansion,
    out: &mut Vec<Expansion>,
) {
    while let Some(f) = todo.pop() {
        if !done.insert(f.clone()) {
            continue;
        }
        match &f {
            Formula::True => {}
            Formula::False => return,
            Formula::Ap(a) => {
                if e.literals.insert(a.clone(), true) == Some(false) {
                    return;
                }
            }
            Formula::Not(x) => match x.as_ref() {
                Formula::Ap(a) => {
                    if e.literals.insert(a.clone(), false) == Some(true) {
                        return;
                    }
                }
                _ => unreachable!("formula is not in negation normal form"),
            },
            Formula::And(a, b) => {
                todo.push((**a).clone());
                todo.push((**b).clone());
            }
            Formula::Or(a, b) => {
                let mut left = todo.clone();
                left.push((**a).clone());
                expand_rec(left, done.clone(), e.clone(), out);
                todo.push((**b).clone());
            }
            Formula::Next(x) => {
                e.next.insert((**x).clone());
            }
            Formula::Until(a, b) => {
                let mut now = todo.clone();
                now.push((**b).clone());
                expand_rec(now, done.clone(), e.clone(), out);
                todo.push((**a).clone());
                e.next.insert(f.clone());
                e.postponed.insert(f.clone());
            }
            Formula::Release(a, b) => {
                let mut now = todo.clone();
                now.push((**a).clone());
                now.push((**b).clone());
                expand_rec(now, done.clone(), e.clone(), out);
                todo.push((**b).clone());
                e.next.insert(f.clone());
            }
            Formula::Eventually(_) | Formula::Always(_) => {
                unreachable!("formula is not in negation normal form")
            }
        }
    }
    if e.next.contains(&Formula::False) {
        return;
    }
    e.next.remove(&Formula::True);
    // `x R f` already forces `f` at the next position.
    let implied: Vec<Formula> = e
        .next
        .iter()
        .filter_map(|g| match g {
            Formula::Release(_, b) => Some((**b).clone()),
            _ => None,
        })
        .collect();
    for f in implied {
        e.next.remove(&f);
    }
    e.next = flatten_conjunctions(std::mem::take(&mut e.next));
    out.push(e);
}

/// Splits top-level conjunctions so that `{a & b}` and `{a, b}` name the same state.
fn flatten_conjunctions(set: BTreeSet<Formula>) -> BTreeSet<Formula> {
    let mut out = BTreeSet::new();
    let mut todo: Vec<Formula> = set.into_iter().collect();
    while let Some(f) = todo.pop() {
        match f {
            Formula::And(a, b) => {
                todo.push(*a);
                todo.push(*b);
            }
            Formula::True => {}
            f => {
                out.insert(f);
            }
        }
    }
    out
}

fn collect_untils(f: &Formula, out: &mut BTreeSet<Formula>) {
    match f {
        Formula::Until(a, b) => {
            out.insert(f.clone());
            collect_untils(a, out);
            collect_untils(b, out);
        }
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Release(a, b) => {
            collect_untils(a, out);
            collect_untils(b, out);
        }
        Formula::Not(x) | Formula::Next(x) | Formula::Eventually(x) | Formula::Always(x) => {
            collect_untils(x, out)
        }
        Formula::True | Formula::False | Formula::Ap(_) => {}
    }
}

/// Tableau translation to a transition-based generalized Büchi automaton.
/// One acceptance set per `U` subformula: its transitions are those that do
/// not postpone that obligation.
pub fn translate_generalized(f: &Formula, state_cap: usize) -> Result<GeneralizedNba, BuchiError> {
    let nnf = to_nnf(f);
    let untils: Vec<Formula> = {
        let mut s = BTreeSet::new();
        collect_untils(&nnf, &mut s);
        s.into_iter().collect()
    };
    let init = flatten_conjunctions([nnf.clone()].into());
    let mut index: BTreeMap<BTreeSet<Formula>, usize> = BTreeMap::new();
    let mut states = vec![init.clone()];
    index.insert(init, 0);
    let mut transitions = Vec::new();
    let mut i = 0;
    while i < states.len() {
        let s = states[i].clone();
        for e in expand(&s) {
            let target = match index.get(&e.next) {
                Some(&t) => t,
                None => {
                    if states.len() >= state_cap {
                        return Err(BuchiError::StateCap { cap: state_cap });
                    }
                    states.push(e.next.clone());
                    index.insert(e.next.clone(), states.len() - 1);
                    states.len() - 1
                }
            };
            let guard = Guard::and(
                e.literals
                    .iter()
                    .map(|(a, v)| Guard::literal(a.clone(), *v))
                    .collect(),
            );
            let acc = (0..untils.len())
                .filter(|&k| !e.postponed.contains(&untils[k]))
                .collect();
            transitions.push((i, target, guard, acc));
        }
        i += 1;
    }
    Ok(GeneralizedNba {
        num_states: states.len(),
        initial: [0].into(),
        transitions,
        num_sets: untils.len(),
        ap_universe: atomic_predicates(&nnf),
    })
}

/// Counter-based degeneralization. State `(s, level)` remembers how many
/// acceptance sets have been seen in order; level `num_sets` is accepting and
/// restarts the count on the next step. Only reachable states are kept and
/// they are numbered in breadth-first order.
pub fn degeneralize(g: &GeneralizedNba, state_cap: usize) -> Result<Nba, BuchiError> {
    let k = g.num_sets;
    let mut by_src: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, t) in g.transitions.iter().enumerate() {
        by_src.entry(t.0).or_default().push(i);
    }
    let mut index: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut order: Vec<(usize, usize)> = Vec::new();
    let mut queue = VecDeque::new();
    for &q in &g.initial {
        index.insert((q, 0), order.len());
        order.push((q, 0));
        queue.push_back((q, 0));
    }
    let mut trans = Vec::new();
    while let Some((q, level)) = queue.pop_front() {
        let src = index[&(q, level)];
        for &t in by_src.get(&q).into_iter().flatten() {
            let (_, dst, guard, acc) = &g.transitions[t];
            let mut next = if level == k { 0 } else { level };
            while next < k && acc.contains(&next) {
                next += 1;
            }
            let key = (*dst, next);
            let d = match index.get(&key) {
                Some(&d) => d,
                None => {
                    if order.len() >= state_cap {
                        return Err(BuchiError::StateCap { cap: state_cap });
                    }
                    index.insert(key, order.len());
                    order.push(key);
                    queue.push_back(key);
                    order.len() - 1
                }
            };
            trans.push((src, d, guard.clone()));
        }
    }
    let accepting = order
        .iter()
        .enumerate()
        .filter(|(_, (_, level))| *level == k)
        .map(|(i, _)| i)
        .collect();
    let initial = g.initial.iter().map(|&q| index[&(q, 0)]).collect();
    Nba::new(
        order.len(),
        initial,
        accepting,
        trans,
        g.ap_universe.clone(),
    )
}

/// LTL to NBA with the default state cap.
pub fn translate(f: &Formula) -> Result<Nba, BuchiError> {
    translate_with_cap(f, DEFAULT_STATE_CAP)
}

pub fn translate_with_cap(f: &Formula, state_cap: usize) -> Result<Nba, BuchiError> {
    let g = translate_generalized(f, state_cap)?;
    degeneralize(&g, state_cap)
}
