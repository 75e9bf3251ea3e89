use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use gridltl::distgraph::Distance;
use gridltl::executive::{
    compile, events_to_jsonl, run_mission, sweep_sensor_range, MissionConfig, OfflinePlan,
    SymbolPolicy,
};
use gridltl::scenario::Scenario;

#[derive(Parser)]
#[command(
    name = "gridltl",
    version,
    about = "Plan and simulate multi-robot LTL missions on grids"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Translate and decompose the mission; write the automaton, the
    /// decomposition and the distance graph.
    Compile {
        #[command(flatten)]
        common: Common,
    },
    /// Simulate the mission and write the event log, summary and trajectories.
    Run {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        run: RunOptions,
        /// Write the learned map every N ticks as PGM.
        #[arg(long)]
        snapshot_every: Option<usize>,
    },
    /// Run the mission once per sensor range and tabulate the first
    /// accepting time.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        run: RunOptions,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
        values: Vec<f64>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct RunOptions {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    accepting_target: Option<usize>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    sensor_range: Option<f64>,
    #[arg(long)]
    relaxed_avoidance: bool,
    #[arg(long)]
    occlusion: bool,
    /// Overrides the scenario's policy.
    #[arg(long, value_enum)]
    symbol_policy: Option<Policy>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    MinRobots,
    Random,
}

impl RunOptions {
    fn config(&self, s: &Scenario) -> MissionConfig {
        let mut c = MissionConfig::from_scenario(s);
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.accepting_target {
            c.accepting_target = v;
        }
        if let Some(v) = self.max_steps {
            c.max_steps = v;
        }
        if let Some(v) = self.sensor_range {
            c.sensor_range = v;
        }
        c.relaxed_avoidance |= self.relaxed_avoidance;
        c.occlusion |= self.occlusion;
        match self.symbol_policy {
            Some(Policy::MinRobots) => c.symbol_policy = SymbolPolicy::MinRobots,
            Some(Policy::Random) => c.symbol_policy = SymbolPolicy::Random,
            None => {}
        }
        c
    }
}

fn load(common: &Common) -> Result<Scenario> {
    let text = fs::read_to_string(&common.scenario)
        .with_context(|| format!("reading {}", common.scenario.display()))?;
    let s = Scenario::parse(&text).with_context(|| format!("in {}", common.scenario.display()))?;
    fs::create_dir_all(&common.out)
        .with_context(|| format!("creating {}", common.out.display()))?;
    Ok(s)
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let p = dir.join(name);
    fs::write(&p, contents).with_context(|| format!("writing {}", p.display()))
}

fn print_distances(plan: &OfflinePlan) {
    println!("state  d_F");
    for &q in &plan.graph.nodes {
        let name = if q == plan.aux() {
            "aux".to_string()
        } else {
            format!("q{q}")
        };
        println!("{name:<6} {}", plan.graph.distance_to_vf(q));
    }
}

fn cmd_compile(common: &Common) -> Result<u8> {
    let s = load(common)?;
    let plan = compile(&s, &MissionConfig::from_scenario(&s))?;
    write(&common.out, "automaton.txt", &plan.nba.export_text())?;
    write(&common.out, "decomposition.txt", &plan.decomposition.dump())?;
    write(
        &common.out,
        "graph.dot",
        &plan.graph.to_dot(Some(plan.aux())),
    )?;
    println!(
        "automaton: {} states, {} transitions; {} after augmenting and pruning",
        plan.nba.num_states(),
        plan.nba.num_transitions(),
        plan.augmented.nba.num_transitions()
    );
    print_distances(&plan);
    println!(
        "local CNF fragment: {}",
        if plan.cnf.is_local() { "yes" } else { "no" }
    );
    if plan.graph.distance_to_vf(plan.aux()) == Distance::Infinite {
        println!("no decomposable accepting path");
        return Ok(2);
    }
    Ok(0)
}

fn cmd_run(common: &Common, run: &RunOptions, snapshot_every: Option<usize>) -> Result<u8> {
    let s = load(common)?;
    let mut config = run.config(&s);
    config.snapshot_every = snapshot_every;
    let plan = compile(&s, &config)?;
    let env = s.environment()?;
    let outcome = run_mission(&plan, &env, &s.robots, &config);
    write(
        &common.out,
        "events.jsonl",
        &events_to_jsonl(&outcome.events),
    )?;
    let summary = outcome.summary();
    write(
        &common.out,
        "summary.json",
        &serde_json::to_string_pretty(&summary)?,
    )?;
    write(&common.out, "trajectories.csv", &outcome.trajectories_csv())?;
    for (tick, map) in &outcome.snapshots {
        write(&common.out, &format!("map_{tick:06}.pgm"), &map.to_pgm())?;
    }
    write(&common.out, "final_map.pgm", &outcome.final_map.to_pgm())?;
    match &summary.reason {
        Some(r) => println!("{}: {r} after {} ticks", summary.outcome, summary.steps),
        None => println!(
            "{} after {} ticks, t_F = {:?}",
            summary.outcome, summary.steps, summary.t_f
        ),
    }
    Ok(summary.exit_code as u8)
}

fn cmd_sweep(common: &Common, run: &RunOptions, values: &[f64]) -> Result<u8> {
    let s = load(common)?;
    let config = run.config(&s);
    let plan = compile(&s, &config)?;
    let env = s.environment()?;
    let rows = sweep_sensor_range(&plan, &env, &s.robots, &config, values);
    let mut csv = String::from("sensor_range,t_f1\n");
    for (r, outcome) in &rows {
        match outcome.t_f1() {
            Some(t) => csv.push_str(&format!("{r},{t}\n")),
            None => csv.push_str(&format!("{r},infeasible\n")),
        }
    }
    write(&common.out, "sweep.csv", &csv)?;
    print!("{csv}");
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Compile { common } => cmd_compile(common),
        Command::Run {
            common,
            run,
            snapshot_every,
        } => cmd_run(common, run, *snapshot_every),
        Command::Sweep {
            common,
            run,
            values,
        } => cmd_sweep(common, run, values),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
