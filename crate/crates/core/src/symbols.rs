//! Symbols (sets of true predicates), feasibility, and guard enumeration.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::buchi::Guard;
use crate::ltl::{parse_atom, AtomicPredicate, LtlError};

/// Default limit on the number of predicates a guard may mention before
/// enumeration is refused.
pub const DEFAULT_ENUMERATION_CAP: usize = 20;

/// The predicates asserted true; every other predicate is false.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Symbol {
    pub aps: BTreeSet<AtomicPredicate>,
}

impl Symbol {
    pub fn empty() -> Self {
        Symbol::default()
    }

    pub fn from_aps(aps: impl IntoIterator<Item = AtomicPredicate>) -> Self {
        Symbol {
            aps: aps.into_iter().collect(),
        }
    }

    pub fn contains(&self, ap: &AtomicPredicate) -> bool {
        self.aps.contains(ap)
    }

    pub fn is_empty(&self) -> bool {
        self.aps.is_empty()
    }

    pub fn len(&self) -> usize {
        self.aps.len()
    }

    /// Robots that have at least one true predicate.
    pub fn robots(&self) -> BTreeSet<u32> {
        self.aps.iter().map(|a| a.robot).collect()
    }

    /// Keeps only the predicates in `universe`.
    pub fn restrict(&self, universe: &BTreeSet<AtomicPredicate>) -> Symbol {
        Symbol {
            aps: self.aps.intersection(universe).cloned().collect(),
        }
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, ap) in self.aps.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{ap}")?;
        }
        write!(f, "}}")
    }
}

impl FromStr for Symbol {
    type Err = LtlError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let inner = t
            .strip_prefix('{')
            .and_then(|r| r.strip_suffix('}'))
            .ok_or_else(|| LtlError::Syntax {
                offset: 0,
                message: format!("symbol `{t}` must be written as {{p1@a,...}}"),
            })?;
        let mut aps = BTreeSet::new();
        let mut offset = 1;
        for part in inner.split(',') {
            let word = part.trim();
            if !word.is_empty() {
                aps.insert(parse_atom(word, offset)?);
            }
            offset += part.len() + 1;
        }
        Ok(Symbol { aps })
    }
}

/// Which pairs of regions may overlap. Everything else is pairwise disjoint.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RegionRelations {
    overlaps: BTreeSet<(String, String)>,
}

impl RegionRelations {
    pub fn all_disjoint() -> Self {
        RegionRelations::default()
    }

    pub fn with_overlaps<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        let mut r = RegionRelations::default();
        for (a, b) in pairs {
            r.add_overlap(a, b);
        }
        r
    }

    pub fn add_overlap(&mut self, a: &str, b: &str) {
        self.overlaps.insert(ordered(a, b));
    }

    pub fn overlap_pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.overlaps.iter().map(|(a, b)| (a.as_str(), b.as_str()))
    }

    /// Distinct regions that cannot be occupied at the same time.
    /// The obstacle label is not a region and conflicts with nothing.
    pub fn disjoint(&self, a: &str, b: &str) -> bool {
        if a == b || is_obstacle_label(a) || is_obstacle_label(b) {
            return false;
        }
        !self.overlaps.contains(&ordered(a, b))
    }
}

fn ordered(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

fn is_obstacle_label(r: &str) -> bool {
    r == crate::ltl::OBSTACLE_REGION
}

/// False iff some robot is asserted inside two disjoint regions.
pub fn is_feasible_symbol(sigma: &Symbol, relations: &RegionRelations) -> bool {
    let aps: Vec<&AtomicPredicate> = sigma.aps.iter().collect();
    for (i, a) in aps.iter().enumerate() {
        for b in &aps[i + 1..] {
            if a.robot == b.robot && relations.disjoint(&a.region, &b.region) {
                return false;
            }
        }
    }
    true
}

/// Where a robot has to be for a symbol to be generated.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Target {
    /// A cell lying in exactly these regions.
    Regions(BTreeSet<String>),
    /// A cell lying in no region.
    FreeSpace,
}

impl Target {
    pub fn region(name: &str) -> Self {
        Target::Regions([name.to_string()].into())
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::FreeSpace => write!(f, "free"),
            Target::Regions(rs) => {
                let names: Vec<&str> = rs.iter().map(String::as_str).collect();
                write!(f, "{}", names.join("+"))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SymbolError {
    #[error("guard mentions {found} predicates, enumeration cap is {cap}")]
    CapExceeded { found: usize, cap: usize },
    #[error("robot {robot} is asserted in disjoint regions {a} and {b}")]
    Infeasible { robot: u32, a: String, b: String },
    #[error("robot {robot} is asserted to stand on an obstacle")]
    ObstacleTarget { robot: u32 },
}

/// Target of each robot in `guard_robots` for the symbol `sigma`.
pub fn symbol_targets(
    sigma: &Symbol,
    guard_robots: &BTreeSet<u32>,
    relations: &RegionRelations,
) -> Result<BTreeMap<u32, Target>, SymbolError> {
    let mut out = BTreeMap::new();
    for &j in guard_robots {
        let mut regions = BTreeSet::new();
        for ap in sigma.aps.iter().filter(|a| a.robot == j) {
            if ap.is_obstacle() {
                return Err(SymbolError::ObstacleTarget { robot: j });
            }
            if let Some(other) = regions
                .iter()
                .find(|r: &&String| relations.disjoint(r, &ap.region))
            {
                return Err(SymbolError::Infeasible {
                    robot: j,
                    a: other.clone(),
                    b: ap.region.clone(),
                });
            }
            regions.insert(ap.region.clone());
        }
        let t = if regions.is_empty() {
            Target::FreeSpace
        } else {
            Target::Regions(regions)
        };
        out.insert(j, t);
    }
    Ok(out)
}

/// Feasible symbols of one guard together with the robots it mentions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolSetResult {
    pub symbols: BTreeSet<Symbol>,
    pub guard_robots: BTreeSet<u32>,
}

impl SymbolSetResult {
    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Robots that generate `sigma`, i.e. have a true predicate in it.
    pub fn active_robots(&self, sigma: &Symbol) -> BTreeSet<u32> {
        sigma.robots()
    }

    pub fn targets(
        &self,
        sigma: &Symbol,
        relations: &RegionRelations,
    ) -> Result<BTreeMap<u32, Target>, SymbolError> {
        symbol_targets(sigma, &self.guard_robots, relations)
    }
}

/// All feasible symbols over the guard's own predicates that satisfy it.
/// Predicates the guard does not mention are false.
pub fn feasible_symbols_of_guard(
    guard: &Guard,
    relations: &RegionRelations,
    cap: usize,
) -> Result<SymbolSetResult, SymbolError> {
    let aps: Vec<AtomicPredicate> = guard.aps().into_iter().collect();
    if aps.len() > cap {
        return Err(SymbolError::CapExceeded {
            found: aps.len(),
            cap,
        });
    }
    let mut out = BTreeSet::new();
    let mut assignment = BTreeMap::new();
    search(guard, relations, &aps, 0, &mut assignment, &mut out, false);
    Ok(SymbolSetResult {
        symbols: out,
        guard_robots: aps.iter().map(|a| a.robot).collect(),
    })
}

/// Whether any feasible symbol satisfies the guard. Stops at the first hit.
pub fn has_feasible_symbol(guard: &Guard, relations: &RegionRelations) -> bool {
    let aps: Vec<AtomicPredicate> = guard.aps().into_iter().collect();
    let mut out = BTreeSet::new();
    let mut assignment = BTreeMap::new();
    search(guard, relations, &aps, 0, &mut assignment, &mut out, true)
}

/// Backtracking over truth assignments, pruning as soon as the partially
/// assigned guard is decided false or the true predicates become infeasible.
/// Returns true if `first_only` is set and a symbol was found.
fn search(
    guard: &Guard,
    relations: &RegionRelations,
    aps: &[AtomicPredicate],
    i: usize,
    assignment: &mut BTreeMap<AtomicPredicate, bool>,
    out: &mut BTreeSet<Symbol>,
    first_only: bool,
) -> bool {
    if guard.eval_partial(assignment) == Some(false) {
        return false;
    }
    if i == aps.len() {
        out.insert(Symbol::from_aps(
            assignment
                .iter()
                .filter(|(_, v)| **v)
                .map(|(k, _)| k.clone()),
        ));
        return first_only;
    }
    let ap = &aps[i];
    for value in [false, true] {
        if value {
            let clash = assignment.iter().any(|(other, v)| {
                *v && other.robot == ap.robot && relations.disjoint(&other.region, &ap.region)
            });
            if clash {
                continue;
            }
        }
        assignment.insert(ap.clone(), value);
        let done = search(guard, relations, aps, i + 1, assignment, out, first_only);
        assignment.remove(ap);
        if done {
            return true;
        }
    }
    false
}
