//! `ccsim`: run consensus scenarios, check and suggest controller
//! parameters, inspect graphs, and rebuild the reproduction presets.
//!
//! Exit codes: 0 success, 1 input or usage error, 2 monitor failure,
//! 3 feasibility warnings (`check-params` without `--strict`).

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Parser, Subcommand};
use consensus_core::controller::suggest_params;
use consensus_core::graph::{DirectedGraph, GraphSpec};
use consensus_core::scenario::{reproduction, ReproductionCase, Scenario, ScenarioError, ScenarioFeasibility};
use consensus_core::sim::SimError;
use serde::Serialize;

/// `println!` that ignores a closed stdout instead of panicking.
macro_rules! out {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

const EXIT_OK: u8 = 0;
const EXIT_INPUT: u8 = 1;
const EXIT_MONITOR: u8 = 2;
const EXIT_WARNINGS: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "ccsim", version, about = "Saturated consensus control simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Overrides {
    /// Integration step in seconds.
    #[arg(long)]
    dt: Option<f64>,
    /// Simulation horizon in seconds.
    #[arg(long = "t-end")]
    t_end: Option<f64>,
    /// Seed for noise models without their own seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one or more scenario files and write trace and reports.
    Run {
        #[arg(required = true)]
        scenarios: Vec<PathBuf>,
        /// Output directory; one subdirectory per scenario when several are given.
        #[arg(long, default_value = "ccsim-out")]
        out: PathBuf,
        /// Treat feasibility warnings as errors.
        #[arg(long)]
        strict: bool,
        /// Scenarios to run concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Print the per-agent feasibility table of a scenario.
    CheckParams {
        scenario: PathBuf,
        #[arg(long)]
        strict: bool,
        /// Also write the feasibility report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replace a scenario's gains with suggested feasible ones.
    SuggestParams {
        scenario: PathBuf,
        /// Fraction of each admissible interval to use, in (0, 1).
        #[arg(long, default_value_t = 0.5)]
        safety: f64,
        /// Write the updated scenario here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Connectivity, left eigenvector and block structure of a graph file.
    GraphInfo { graph: PathBuf },
    /// Build and run a seven-manipulator reproduction preset.
    #[command(name = "reproduce-paper")]
    Reproduce {
        /// `symmetric` or `asymmetric`.
        case: String,
        #[arg(long, default_value = "ccsim-out")]
        out: PathBuf,
        #[arg(long)]
        strict: bool,
        #[command(flatten)]
        overrides: Overrides,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let code = match cli.command {
        Command::Run {
            scenarios,
            out,
            strict,
            jobs,
            overrides,
        } => cmd_run(&scenarios, &out, strict, jobs, &overrides),
        Command::CheckParams { scenario, strict, out } => cmd_check_params(&scenario, strict, out.as_deref()),
        Command::SuggestParams { scenario, safety, out } => cmd_suggest_params(&scenario, safety, out.as_deref()),
        Command::GraphInfo { graph } => cmd_graph_info(&graph),
        Command::Reproduce {
            case,
            out,
            strict,
            overrides,
        } => cmd_reproduce(&case, &out, strict, &overrides),
    };
    ExitCode::from(code)
}

fn fail(context: &str, err: impl std::fmt::Display) -> u8 {
    eprintln!("error: {context}: {err}");
    EXIT_INPUT
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
    text.push('\n');
    fs::write(path, text)
}

fn print_warnings(name: &str, f: &ScenarioFeasibility) {
    for (agent, cond) in f.warnings() {
        eprintln!("warning: {name}: agent {agent} fails {cond}");
    }
}

fn cmd_run(paths: &[PathBuf], out: &Path, strict: bool, jobs: usize, o: &Overrides) -> u8 {
    let multi = paths.len() > 1;
    let next = AtomicUsize::new(0);
    let codes = Mutex::new(vec![EXIT_OK; paths.len()]);
    let workers = jobs.clamp(1, paths.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::Relaxed);
                let Some(path) = paths.get(idx) else { break };
                let code = match Scenario::from_path(path) {
                    Ok(s) => {
                        let s = s.with_overrides(o.dt, o.t_end, o.seed);
                        let dir = if multi {
                            out.join(format!("{:03}-{}", idx + 1, sanitize(&s.name)))
                        } else {
                            out.to_path_buf()
                        };
                        run_scenario(&s, &dir, strict)
                    }
                    Err(e) => fail(&path.display().to_string(), e),
                };
                codes.lock().expect("no worker panics while holding the lock")[idx] = code;
            });
        }
    });
    let codes = codes.into_inner().expect("workers finished");
    if codes.contains(&EXIT_INPUT) {
        EXIT_INPUT
    } else if codes.contains(&EXIT_MONITOR) {
        EXIT_MONITOR
    } else {
        EXIT_OK
    }
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Validates, runs and writes `scenario.json`, `feasibility_report.json`,
/// `trace.csv` and `monitor_report.json` into `dir`.
fn run_scenario(s: &Scenario, dir: &Path, strict: bool) -> u8 {
    let (system, feasibility) = match s.build() {
        Ok(v) => v,
        Err(e) => return fail(&s.name, e),
    };
    print_warnings(&s.name, &feasibility);
    if strict && !feasibility.all_pass {
        return fail(&s.name, "feasibility conditions fail in strict mode");
    }
    if let Err(e) = fs::create_dir_all(dir)
        .and_then(|_| fs::write(dir.join("scenario.json"), s.to_canonical_json()))
        .and_then(|_| write_json(&dir.join("feasibility_report.json"), &feasibility))
    {
        return fail(&dir.display().to_string(), e);
    }
    let trace = match system.simulate(&s.initial(), &s.sim) {
        Ok(t) => t,
        Err(e @ SimError::NonFiniteState { .. }) => {
            eprintln!("error: {}: {e}", s.name);
            return EXIT_MONITOR;
        }
        Err(e) => return fail(&s.name, e),
    };
    let report = s.monitor(&system, &trace);
    let written = fs::File::create(dir.join("trace.csv"))
        .and_then(|f| trace.write_csv(BufWriter::new(f)))
        .and_then(|_| write_json(&dir.join("monitor_report.json"), &report));
    if let Err(e) = written {
        return fail(&dir.display().to_string(), e);
    }
    let c = &report.consensus;
    out!(
        "{}: {} (final spread {:e}, final velocity error {:e}, consensus time {}) -> {}",
        s.name,
        if report.passed { "PASS" } else { "FAIL" },
        c.final_spread,
        c.final_velocity_error,
        c.consensus_time.map_or("none".into(), |t| format!("{t} s")),
        dir.display()
    );
    if report.passed {
        EXIT_OK
    } else {
        eprintln!("error: {}: monitors failed: {}", s.name, report.failures().join(", "));
        EXIT_MONITOR
    }
}

fn cmd_reproduce(case: &str, out: &Path, strict: bool, o: &Overrides) -> u8 {
    let case: ReproductionCase = match case.parse() {
        Ok(c) => c,
        Err(e) => return fail("reproduce-paper", e),
    };
    let s = reproduction(case).with_overrides(o.dt, o.t_end, o.seed);
    run_scenario(&s, out, strict)
}

fn cmd_check_params(path: &Path, strict: bool, out: Option<&Path>) -> u8 {
    let s = match Scenario::from_path(path) {
        Ok(s) => s,
        Err(e) => return fail(&path.display().to_string(), e),
    };
    let graph = match s.validate() {
        Ok(g) => g,
        Err(e) => return fail(&s.name, e),
    };
    let f = s.feasibility(&graph);
    out!("scenario {} ({:?})", s.name, s.variant);
    out!("controllability margin {:?}", f.controllability_margin);
    out!(
        "{:<6} {:<8} {:<70} {:>24} {:>24} {:>24}  ok",
        "agent",
        "d_i",
        "condition",
        "lhs",
        "rhs",
        "margin"
    );
    for a in &f.agents {
        let d = a.in_degree.map_or("-".into(), |d| format!("{d:?}"));
        for c in &a.conditions.conditions {
            out!(
                "{:<6} {:<8} {:<70} {:>24?} {:>24?} {:>24?}  {}",
                a.agent,
                d,
                c.condition,
                c.lhs,
                c.rhs,
                c.margin,
                if c.pass { "yes" } else { "NO" }
            );
        }
        match (&a.settling, &a.settling_error) {
            (Some(b), _) => out!("{:<6} settling bounds t1 = {:?} s, t2 = {:?} s", a.agent, b.t1, b.t2),
            (None, Some(e)) => out!("{:<6} settling bounds: {e}", a.agent),
            _ => {}
        }
    }
    if let Some(out) = out {
        if let Err(e) = write_json(out, &f) {
            return fail(&out.display().to_string(), e);
        }
    }
    if f.all_pass {
        EXIT_OK
    } else {
        print_warnings(&s.name, &f);
        if strict {
            eprintln!("error: {}: feasibility conditions fail in strict mode", s.name);
            EXIT_INPUT
        } else {
            EXIT_WARNINGS
        }
    }
}

fn cmd_suggest_params(path: &Path, safety: f64, out: Option<&Path>) -> u8 {
    let mut s = match Scenario::from_path(path) {
        Ok(s) => s,
        Err(e) => return fail(&path.display().to_string(), e),
    };
    let graph = match DirectedGraph::try_from(&s.graph) {
        Ok(g) => g,
        Err(e) => return fail(&s.name, e),
    };
    let degrees = graph.in_degrees();
    let mut params = Vec::with_capacity(degrees.len());
    for d in degrees {
        match suggest_params(s.variant, &s.bounds, &s.constraints, d, safety) {
            Ok(p) => params.push(p),
            Err(e) => return fail(&s.name, e),
        }
    }
    s.params = params;
    let text = s.to_canonical_json();
    match out {
        Some(out) => {
            if let Err(e) = fs::write(out, text) {
                return fail(&out.display().to_string(), e);
            }
        }
        None => {
            let _ = std::io::stdout().lock().write_all(text.as_bytes());
        }
    }
    EXIT_OK
}

/// Accepts a bare graph file or a scenario file.
fn load_graph(path: &Path) -> Result<GraphSpec, ScenarioError> {
    let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    match serde_json::from_str::<GraphSpec>(&text) {
        Ok(g) => Ok(g),
        Err(graph_err) => match Scenario::from_json_str(&text) {
            Ok(s) => Ok(s.graph),
            Err(_) => Err(graph_err.into()),
        },
    }
}

fn one_based(nodes: &[usize]) -> Vec<usize> {
    nodes.iter().map(|i| i + 1).collect()
}

fn cmd_graph_info(path: &Path) -> u8 {
    let graph = match load_graph(path).and_then(|spec| Ok(DirectedGraph::try_from(&spec)?)) {
        Ok(g) => g,
        Err(e) => return fail(&path.display().to_string(), e),
    };
    out!("n = {}", graph.n());
    out!("in-degrees = {:?}", graph.in_degrees());
    let strong = graph.is_strongly_connected();
    out!("strongly connected = {}", if strong { "yes" } else { "no" });
    match graph.spanning_tree_root() {
        Some(root) => out!("spanning tree = yes (root component contains node {})", root + 1),
        None => out!("spanning tree = no"),
    }
    if strong {
        match graph.left_eigenvector() {
            Ok(w) => out!("omega = {w:?}"),
            Err(e) => out!("omega unavailable: {e}"),
        }
    }
    match graph.perron_frobenius_form() {
        Ok(dec) => {
            out!("blocks = {}", dec.blocks.len());
            for (i, b) in dec.blocks.iter().enumerate() {
                out!("  block {} = {:?}", i + 1, one_based(b));
            }
            out!("permutation = {:?}", one_based(&dec.permutation));
        }
        Err(e) => out!("block decomposition refused: {e}"),
    }
    EXIT_OK
}
