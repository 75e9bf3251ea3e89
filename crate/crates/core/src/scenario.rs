//! Scenario files: grid, regions, robots, mission formula and run settings.
//!
//! ```text
//! name = corridor
//! size = 10 6            # width height
//! sensor_range = 2
//! seed = 1
//! max_steps = 500
//! accepting_target = 2
//! occlusion = false
//! relaxed_avoidance = false
//! symbol_policy = min_robots   # or random
//!
//! [regions]
//! l1 : a                 # grid character
//! l2 : cells 0,9 1,9     # explicit row,col list
//!
//! [overlaps]
//! l1 l2
//!
//! [robots]
//! 1 = 5 0
//! 2 = 5 1 speed=0.5
//!
//! [define]
//! visit = p1@l1 | p2@l1
//!
//! [formula]
//! G F visit & G F p1@l2
//!
//! [grid]
//! .........b
//! ..###....b
//! ```
//!
//! In the grid `.` is free, `#` an obstacle and any other character the
//! region mapped to it in `[regions]`. Outside `[grid]` and `[formula]`, `#`
//! starts a comment. Definitions are substituted as parenthesized text for
//! whole words before parsing, later definitions may use earlier ones.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::executive::SymbolPolicy;
use crate::gridworld::{Cell, GridError, Poses, RegionLayout, TrueEnvironment};
use crate::ltl::{parse_ltl_with_regions, Formula, LtlError};
use crate::symbols::RegionRelations;

#[derive(Debug, Clone, PartialEq)]
pub struct RobotSpec {
    pub id: u32,
    pub start: Cell,
    /// Cells per tick, in (0, 1].
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub obstacles: BTreeSet<Cell>,
    pub regions: BTreeMap<String, BTreeSet<Cell>>,
    pub overlaps: BTreeSet<(String, String)>,
    pub robots: Vec<RobotSpec>,
    pub sensor_range: f64,
    pub seed: u64,
    pub max_steps: usize,
    pub accepting_target: usize,
    pub occlusion: bool,
    pub relaxed_avoidance: bool,
    pub symbol_policy: SymbolPolicy,
    pub defines: Vec<(String, String)>,
    pub formula: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("formula: {0}")]
    Formula(#[from] LtlError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("{0}")]
    Invalid(String),
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            name: String::new(),
            width: 0,
            height: 0,
            obstacles: BTreeSet::new(),
            regions: BTreeMap::new(),
            overlaps: BTreeSet::new(),
            robots: Vec::new(),
            sensor_range: 1.0,
            seed: 0,
            max_steps: 10_000,
            accepting_target: 2,
            occlusion: false,
            relaxed_avoidance: false,
            symbol_policy: SymbolPolicy::MinRobots,
            defines: Vec::new(),
            formula: String::new(),
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Header,
    Regions,
    Overlaps,
    Robots,
    Define,
    Formula,
    Grid,
}

fn strip_comment(s: &str) -> &str {
    s.split('#').next().unwrap_or("")
}

fn parse_cell(text: &str) -> Option<Cell> {
    let (r, c) = text.split_once(',')?;
    Some(Cell::new(r.trim().parse().ok()?, c.trim().parse().ok()?))
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        let mut s = Scenario::default();
        let mut section = Section::Header;
        let mut grid_chars: BTreeMap<char, String> = BTreeMap::new();
        let mut grid_rows: Vec<(usize, String)> = Vec::new();
        let mut formula_lines: Vec<String> = Vec::new();
        let mut size_seen = false;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let err = |message: String| ScenarioError::Parse {
                line: line_no,
                message,
            };
            let trimmed = raw.trim();
            if let Some(name) = trimmed.strip_prefix('[').and_then(|t| t.strip_suffix(']')) {
                section = match name.trim() {
                    "regions" => Section::Regions,
                    "overlaps" => Section::Overlaps,
                    "robots" => Section::Robots,
                    "define" => Section::Define,
                    "formula" => Section::Formula,
                    "grid" => Section::Grid,
                    other => return Err(err(format!("unknown section [{other}]"))),
                };
                continue;
            }
            match section {
                Section::Formula => {
                    formula_lines.push(raw.trim_end().to_string());
                    continue;
                }
                Section::Grid => {
                    if !trimmed.is_empty() {
                        grid_rows.push((line_no, trimmed.to_string()));
                    }
                    continue;
                }
                _ => {}
            }
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            match section {
                Section::Header => {
                    let (key, value) = line
                        .split_once('=')
                        .ok_or_else(|| err(format!("expected key = value, got `{line}`")))?;
                    let (key, value) = (key.trim(), value.trim());
                    let bad = || err(format!("bad value `{value}` for `{key}`"));
                    match key {
                        "name" => s.name = value.to_string(),
                        "size" => {
                            let parts: Vec<&str> = value.split_whitespace().collect();
                            if parts.len() != 2 {
                                return Err(bad());
                            }
                            s.width = parts[0].parse().map_err(|_| bad())?;
                            s.height = parts[1].parse().map_err(|_| bad())?;
                            size_seen = true;
                        }
                        "sensor_range" => s.sensor_range = value.parse().map_err(|_| bad())?,
                        "seed" => s.seed = value.parse().map_err(|_| bad())?,
                        "max_steps" => s.max_steps = value.parse().map_err(|_| bad())?,
                        "accepting_target" => {
                            s.accepting_target = value.parse().map_err(|_| bad())?
                        }
                        "occlusion" => s.occlusion = value.parse().map_err(|_| bad())?,
                        "relaxed_avoidance" => {
                            s.relaxed_avoidance = value.parse().map_err(|_| bad())?
                        }
                        "symbol_policy" => s.symbol_policy = value.parse().map_err(|_| bad())?,
                        _ => return Err(err(format!("unknown key `{key}`"))),
                    }
                }
                Section::Regions => {
                    let (label, spec) = line
                        .split_once(':')
                        .ok_or_else(|| err(format!("expected `label : spec`, got `{line}`")))?;
                    let label = label.trim().to_string();
                    let spec = spec.trim();
                    let cells = s.regions.entry(label.clone()).or_default();
                    if let Some(list) = spec.strip_prefix("cells") {
                        for t in list.split_whitespace() {
                            cells.insert(
                                parse_cell(t).ok_or_else(|| err(format!("bad cell `{t}`")))?,
                            );
                        }
                    } else {
                        let mut chars = spec.chars();
                        match (chars.next(), chars.next()) {
                            (Some(c), None) if c != '.' && c != '#' => {
                                if let Some(prev) = grid_chars.insert(c, label.clone()) {
                                    return Err(err(format!(
                                        "grid character `{c}` already used by {prev}"
                                    )));
                                }
                            }
                            _ => return Err(err(format!("bad region spec `{spec}`"))),
                        }
                    }
                }
                Section::Overlaps => {
                    let parts: Vec<&str> = line.split_whitespace().collect();
                    if parts.len() != 2 {
                        return Err(err(format!("expected two region labels, got `{line}`")));
                    }
                    let (a, b) = (parts[0].to_string(), parts[1].to_string());
                    s.overlaps.insert(if a <= b { (a, b) } else { (b, a) });
                }
                Section::Robots => {
                    let (id, rest) = line
                        .split_once('=')
                        .ok_or_else(|| err(format!("expected `id = row col`, got `{line}`")))?;
                    let id: u32 = id
                        .trim()
                        .parse()
                        .map_err(|_| err(format!("bad robot id `{}`", id.trim())))?;
                    let parts: Vec<&str> = rest.split_whitespace().collect();
                    if parts.len() < 2 {
                        return Err(err("robot needs a row and a column".into()));
                    }
                    let row = parts[0]
                        .parse()
                        .map_err(|_| err(format!("bad row `{}`", parts[0])))?;
                    let col = parts[1]
                        .parse()
                        .map_err(|_| err(format!("bad column `{}`", parts[1])))?;
                    let mut speed = 1.0;
                    for opt in &parts[2..] {
                        let v = opt
                            .strip_prefix("speed=")
                            .ok_or_else(|| err(format!("unknown robot option `{opt}`")))?;
                        speed = v.parse().map_err(|_| err(format!("bad speed `{v}`")))?;
                    }
                    s.robots.push(RobotSpec {
                        id,
                        start: Cell::new(row, col),
                        speed,
                    });
                }
                Section::Define => {
                    let (name, body) = line
                        .split_once('=')
                        .ok_or_else(|| err(format!("expected `name = formula`, got `{line}`")))?;
                    let name = name.trim();
                    if name.is_empty() || !name.chars().all(is_word_char) {
                        return Err(err(format!("bad definition name `{name}`")));
                    }
                    s.defines.push((name.to_string(), body.trim().to_string()));
                }
                Section::Formula | Section::Grid => unreachable!(),
            }
        }
        if !size_seen {
            return Err(ScenarioError::Invalid("missing `size = W H`".into()));
        }
        for (i, (line_no, row)) in grid_rows.iter().enumerate() {
            let err = |message: String| ScenarioError::Parse {
                line: *line_no,
                message,
            };
            if i >= s.height || row.chars().count() != s.width {
                return Err(err(format!(
                    "grid row does not fit a {}x{} grid",
                    s.width, s.height
                )));
            }
            for (c, ch) in row.chars().enumerate() {
                let cell = Cell::new(i, c);
                match ch {
                    '.' => {}
                    '#' => {
                        s.obstacles.insert(cell);
                    }
                    other => {
                        let label = grid_chars.get(&other).ok_or_else(|| {
                            err(format!("grid character `{other}` has no region"))
                        })?;
                        s.regions.get_mut(label).unwrap().insert(cell);
                    }
                }
            }
        }
        if !grid_rows.is_empty() && grid_rows.len() != s.height {
            return Err(ScenarioError::Invalid(format!(
                "grid has {} rows, expected {}",
                grid_rows.len(),
                s.height
            )));
        }
        s.robots.sort_by_key(|r| r.id);
        s.formula = formula_lines.join("\n").trim().to_string();
        s.validate()?;
        Ok(s)
    }

    /// Writes regions as explicit cell lists and the grid with `.`/`#` only,
    /// so that `parse(to_text(s)) == s`.
    pub fn to_text(&self) -> String {
        let mut t = String::new();
        if !self.name.is_empty() {
            writeln!(t, "name = {}", self.name).unwrap();
        }
        writeln!(t, "size = {} {}", self.width, self.height).unwrap();
        writeln!(t, "sensor_range = {}", self.sensor_range).unwrap();
        writeln!(t, "seed = {}", self.seed).unwrap();
        writeln!(t, "max_steps = {}", self.max_steps).unwrap();
        writeln!(t, "accepting_target = {}", self.accepting_target).unwrap();
        writeln!(t, "occlusion = {}", self.occlusion).unwrap();
        writeln!(t, "relaxed_avoidance = {}", self.relaxed_avoidance).unwrap();
        writeln!(t, "symbol_policy = {}", self.symbol_policy).unwrap();
        writeln!(t, "\n[regions]").unwrap();
        for (label, cells) in &self.regions {
            let list: Vec<String> = cells
                .iter()
                .map(|c| format!("{},{}", c.row, c.col))
                .collect();
            writeln!(t, "{label} : cells {}", list.join(" ")).unwrap();
        }
        if !self.overlaps.is_empty() {
            writeln!(t, "\n[overlaps]").unwrap();
            for (a, b) in &self.overlaps {
                writeln!(t, "{a} {b}").unwrap();
            }
        }
        writeln!(t, "\n[robots]").unwrap();
        for r in &self.robots {
            write!(t, "{} = {} {}", r.id, r.start.row, r.start.col).unwrap();
            if r.speed != 1.0 {
                write!(t, " speed={}", r.speed).unwrap();
            }
            t.push('\n');
        }
        if !self.defines.is_empty() {
            writeln!(t, "\n[define]").unwrap();
            for (name, body) in &self.defines {
                writeln!(t, "{name} = {body}").unwrap();
            }
        }
        writeln!(t, "\n[formula]\n{}", self.formula).unwrap();
        writeln!(t, "\n[grid]").unwrap();
        for r in 0..self.height {
            let row: String = (0..self.width)
                .map(|c| {
                    if self.obstacles.contains(&Cell::new(r, c)) {
                        '#'
                    } else {
                        '.'
                    }
                })
                .collect();
            writeln!(t, "{row}").unwrap();
        }
        t
    }

    /// Formula text after substituting definitions.
    pub fn expanded_formula(&self) -> String {
        let mut text = self.formula.clone();
        for (name, body) in self.defines.iter().rev() {
            text = replace_word(&text, name, &format!("({body})"));
        }
        text
    }

    pub fn parse_formula(&self) -> Result<Formula, ScenarioError> {
        let regions: BTreeSet<String> = self.regions.keys().cloned().collect();
        Ok(parse_ltl_with_regions(&self.expanded_formula(), &regions)?)
    }

    pub fn relations(&self) -> RegionRelations {
        RegionRelations::with_overlaps(self.overlaps.iter().map(|(a, b)| (a.as_str(), b.as_str())))
    }

    pub fn layout(&self) -> Result<RegionLayout, ScenarioError> {
        Ok(RegionLayout::new(
            self.width,
            self.height,
            self.regions.clone(),
            self.relations(),
        )?)
    }

    pub fn environment(&self) -> Result<TrueEnvironment, ScenarioError> {
        Ok(TrueEnvironment::new(
            self.layout()?,
            self.obstacles.iter().copied(),
        )?)
    }

    pub fn initial_poses(&self) -> Poses {
        self.robots.iter().map(|r| (r.id, r.start)).collect()
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |m: String| Err(ScenarioError::Invalid(m));
        if self.width == 0 || self.height == 0 {
            return invalid("grid must be at least 1x1".into());
        }
        if self.sensor_range < 1.0 {
            return invalid(format!(
                "sensor_range must be at least 1, got {}",
                self.sensor_range
            ));
        }
        let env = self.environment()?;
        let mut ids = BTreeSet::new();
        for r in &self.robots {
            if r.id == 0 || !ids.insert(r.id) {
                return invalid(format!("robot id {} is zero or repeated", r.id));
            }
            if !env.layout.contains(r.start) || env.is_occupied(r.start) {
                return invalid(format!(
                    "robot {} starts outside the grid or on an obstacle",
                    r.id
                ));
            }
            if !(r.speed > 0.0 && r.speed <= 1.0) {
                return invalid(format!("robot {} speed must be in (0, 1]", r.id));
            }
        }
        for (a, b) in &self.overlaps {
            for l in [a, b] {
                if !self.regions.contains_key(l) {
                    return invalid(format!("overlap mentions unknown region {l}"));
                }
            }
        }
        let f = self.parse_formula()?;
        for ap in f.atomic_predicates() {
            if !ids.contains(&ap.robot) {
                return invalid(format!(
                    "formula mentions robot {} which is not declared",
                    ap.robot
                ));
            }
        }
        Ok(())
    }
}

fn is_word_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '@'
}

fn replace_word(text: &str, word: &str, with: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut token = String::new();
    let flush = |token: &mut String, out: &mut String| {
        if token == word {
            out.push_str(with);
        } else {
            out.push_str(token);
        }
        token.clear();
    };
    for c in text.chars() {
        if is_word_char(c) {
            token.push(c);
        } else {
            flush(&mut token, &mut out);
            out.push(c);
        }
    }
    flush(&mut token, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
name = sample
size = 5 3   # w h
sensor_range = 2
seed = 9
symbol_policy = random

[regions]
l1 : a
l2 : cells 0,4 1,4

[robots]
2 = 2 0 speed=0.5
1 = 2 1

[define]
home = p1@l1 | p2@l1
both = home & p1@l2

[formula]
G F home   # comment handled by the formula lexer
& F both

[grid]
aa...
..#..
.....
";

    #[test]
    fn parses_sample() {
        let s = Scenario::parse(SAMPLE).unwrap();
        assert_eq!((s.width, s.height), (5, 3));
        assert_eq!(s.sensor_range, 2.0);
        assert_eq!(s.symbol_policy, SymbolPolicy::Random);
        assert_eq!(s.robots[0].id, 1);
        assert_eq!(s.robots[1].speed, 0.5);
        assert_eq!(s.obstacles, [Cell::new(1, 2)].into());
        assert_eq!(s.regions["l1"], [Cell::new(0, 0), Cell::new(0, 1)].into());
        assert_eq!(s.regions["l2"].len(), 2);
        assert_eq!(
            s.expanded_formula(),
            "G F (p1@l1 | p2@l1)   # comment handled by the formula lexer\n& F ((p1@l1 | p2@l1) & p1@l2)"
        );
        assert!(s.parse_formula().is_ok());
    }

    #[test]
    fn round_trip() {
        let s = Scenario::parse(SAMPLE).unwrap();
        let again = Scenario::parse(&s.to_text()).unwrap();
        assert_eq!(again, s);
    }

    #[test]
    fn rejects_bad_scenarios() {
        let bad_region = SAMPLE.replace("& F both", "& F p1@l9");
        assert!(matches!(
            Scenario::parse(&bad_region),
            Err(ScenarioError::Formula(_))
        ));
        let on_wall = SAMPLE.replace("1 = 2 1", "1 = 1 2");
        assert!(matches!(
            Scenario::parse(&on_wall),
            Err(ScenarioError::Invalid(_))
        ));
        let ghost = SAMPLE.replace("& F both", "& F p3@l1");
        assert!(matches!(
            Scenario::parse(&ghost),
            Err(ScenarioError::Invalid(_))
        ));
        let short_row = SAMPLE.replace("..#..", "..#.");
        assert!(matches!(
            Scenario::parse(&short_row),
            Err(ScenarioError::Parse { line: 25, .. })
        ));
        assert!(matches!(
            Scenario::parse("size = 2 2\n[nope]\n"),
            Err(ScenarioError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn word_replacement_respects_atoms() {
        assert_eq!(replace_word("p1@l1 & l1", "l1", "(x)"), "p1@l1 & (x)");
    }
}
