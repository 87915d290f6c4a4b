//! Batch front door: well-formedness checking, duality printing,
//! progress exploration, type checking, simulation, and the
//! subject-reduction harness over `.toast` files.
//!
//! Exit codes: 0 pass, 1 property violation or rejection, 2 input error,
//! 3 inconclusive (fuel or horizon exhausted without a verdict).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use toast_core::calculus::{run, Schedule};
use toast_core::semantics::{progress_explore, ExploreMode};
use toast_core::surface::{self, pretty_type, SourceFile};
use toast_core::typecheck::{subject_reduction_harness, typecheck, SrMode, VarEnv};
use toast_core::wellformed::wf_type;

#[derive(Parser)]
#[command(name = "toast", version, about = "timed binary session types with timeouts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Exhaustive,
    Random,
}

#[derive(Args)]
struct ExploreArgs {
    /// Exploration depth (steps).
    #[arg(long, default_value_t = 40)]
    horizon: u64,
    #[arg(long, value_enum, default_value_t = Mode::Exhaustive)]
    mode: Mode,
    /// Seed for random mode.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct FuelArgs {
    /// Reduction budget (steps).
    #[arg(long, default_value_t = 50)]
    fuel: u64,
    #[arg(long, value_enum, default_value_t = Mode::Exhaustive)]
    mode: Mode,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Check well-formedness of every type declared in the given files.
    Check {
        paths: Vec<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Print the dual of a declared type.
    Dual {
        path: PathBuf,
        name: String,
        #[arg(long)]
        json: bool,
    },
    /// Explore the system of a type against its dual, hunting stuck states.
    Progress {
        path: PathBuf,
        name: String,
        #[command(flatten)]
        explore: ExploreArgs,
        /// Explore even when the type is not well-formed.
        #[arg(long)]
        override_wf: bool,
        #[arg(long)]
        json: bool,
    },
    /// Run the type checker on a `check` or `system` block.
    Typecheck {
        path: PathBuf,
        name: String,
        #[arg(long)]
        json: bool,
    },
    /// Run the reduction engine on a `system` block and print the trace.
    Simulate {
        path: PathBuf,
        name: String,
        #[command(flatten)]
        fuel: FuelArgs,
        #[arg(long)]
        json: bool,
    },
    /// Drive the subject-reduction harness over a `system` block.
    Sr {
        path: PathBuf,
        name: String,
        #[command(flatten)]
        fuel: FuelArgs,
        #[arg(long)]
        json: bool,
    },
}

fn locate(path: &Path) -> PathBuf {
    if path.exists() {
        return path.to_path_buf();
    }
    if let Ok(dir) = std::env::var("TOAST_CORPUS_DIR") {
        let candidate = Path::new(&dir).join(path);
        if candidate.exists() {
            return candidate;
        }
    }
    path.to_path_buf()
}

fn load(path: &Path) -> Result<SourceFile, String> {
    let path = locate(path);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| format!("{}: {e}", path.display()))?;
    let (file, diagnostics) = surface::parse(&text);
    let errors: Vec<String> = diagnostics.iter().map(|d| d.to_string()).collect();
    if errors.is_empty() {
        Ok(file)
    } else {
        Err(format!("{}:\n  {}", path.display(), errors.join("\n  ")))
    }
}

fn seeded(mode: Mode, seed: Option<u64>) -> Result<Option<u64>, String> {
    match (mode, seed) {
        (Mode::Random, None) => Err("random mode requires --seed".into()),
        (Mode::Random, Some(s)) => Ok(Some(s)),
        (Mode::Exhaustive, _) => Ok(None),
    }
}

fn cmd_check(paths: &[PathBuf], json: bool) -> ExitCode {
    let mut all_ok = true;
    let mut results = Vec::new();
    for path in paths {
        let file = match load(path) {
            Ok(f) => f,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        };
        for (name, ty) in file.types() {
            let report = wf_type(ty);
            all_ok &= report.accepted;
            if json {
                results.push(json!({
                    "file": path.display().to_string(),
                    "type": name,
                    "report": report,
                }));
            } else {
                match &report.failing_premise {
                    None => println!("{}: {name}: well-formed", path.display()),
                    Some(f) => println!(
                        "{}: {name}: rejected ({}): {}",
                        path.display(),
                        f.premise,
                        f.detail
                    ),
                }
            }
        }
    }
    if json {
        println!("{}", serde_json::to_string_pretty(&results).expect("serializable"));
    }
    if all_ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn cmd_dual(path: &Path, name: &str, json: bool) -> ExitCode {
    let file = match load(path) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let Some(ty) = file.type_named(name) else {
        eprintln!("error: unknown type `{name}`");
        return ExitCode::from(2);
    };
    let dual = ty.dual();
    if json {
        println!(
            "{}",
            serde_json::to_string_pretty(&json!({
                "type": name,
                "dual": pretty_type(&dual),
            }))
            .expect("serializable")
        );
    } else {
        println!("{}", pretty_type(&dual));
    }
    ExitCode::SUCCESS
}

fn cmd_progress(
    path: &Path,
    name: &str,
    explore: &ExploreArgs,
    override_wf: bool,
    json: bool,
) -> ExitCode {
    if explore.horizon == 0 {
        eprintln!("error: --horizon must be at least 1");
        return ExitCode::from(2);
    }
    let seed = match seeded(explore.mode, explore.seed) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let file = match load(path) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let Some(ty) = file.type_named(name) else {
        eprintln!("error: unknown type `{name}`");
        return ExitCode::from(2);
    };
    let wf = wf_type(ty);
    if !wf.accepted && !override_wf {
        if let Some(f) = &wf.failing_premise {
            eprintln!(
                "error: `{name}` is not well-formed ({}); use --override-wf to explore anyway",
                f.premise
            );
        }
        return ExitCode::from(1);
    }
    let mode = match seed {
        Some(s) => ExploreMode::Random { seed: s },
        None => ExploreMode::Exhaustive,
    };
    let report = progress_explore(ty, explore.horizon, mode);
    if json {
        println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
    } else {
        println!(
            "explored {} states to horizon {}: {} stuck, {} invariant violations",
            report.explored,
            report.horizon,
            report.stuck_states.len(),
            report.invariant_violations.len()
        );
        for stuck in &report.stuck_states {
            println!("stuck state: {}", stuck.state);
            for line in &stuck.trace {
                println!("  {line}");
            }
        }
        for v in &report.invariant_violations {
            println!("violation: {v}");
        }
    }
    if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn cmd_typecheck(path: &Path, name: &str, json: bool) -> ExitCode {
    let file = match load(path) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let Some(item) = file.item_named(name) else {
        eprintln!("error: unknown check `{name}`");
        return ExitCode::from(2);
    };
    let Some(resolved) = file.resolve_item(item) else {
        eprintln!("error: `{name}` references names that do not resolve");
        return ExitCode::from(2);
    };
    if !resolved.process.wf_process() {
        eprintln!("error: the process of `{name}` is not well-formed (free queues)");
        return ExitCode::from(1);
    }
    let report = typecheck(
        &VarEnv::empty(),
        &resolved.theta,
        &resolved.process,
        &resolved.delta,
        &resolved.bindings,
    );
    if json {
        println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
    } else if report.accepted {
        println!("{name}: well-typed");
    } else {
        println!(
            "{name}: rejected: {}",
            report.failing_premise.clone().unwrap_or_default()
        );
    }
    if report.accepted {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn cmd_simulate(path: &Path, name: &str, fuel: &FuelArgs, json: bool) -> ExitCode {
    let seed = match seeded(fuel.mode, fuel.seed) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let file = match load(path) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let Some(item) = file.item_named(name) else {
        eprintln!("error: unknown system `{name}`");
        return ExitCode::from(2);
    };
    let Some(resolved) = file.resolve_item(item) else {
        eprintln!("error: `{name}` references names that do not resolve");
        return ExitCode::from(2);
    };
    if !resolved.process.wf_process() {
        eprintln!("error: the process of `{name}` is not well-formed (free queues)");
        return ExitCode::from(1);
    }
    let schedule = match seed {
        Some(s) => Schedule::Random { seed: s },
        None => Schedule::Exhaustive,
    };
    let report = run(&resolved.theta, &resolved.process, schedule, fuel.fuel);
    if json {
        println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
    } else {
        for step in &report.steps {
            println!(
                "STEP {}: {} :: theta={} process={}",
                step.index, step.action, step.timers, step.process
            );
        }
        println!(
            "explored {} states; terminals: {}; completed: {}; fuel exhausted: {}",
            report.states_explored,
            report.terminals.len(),
            report.completed,
            report.fuel_exhausted
        );
    }
    if report.fuel_exhausted {
        ExitCode::from(3)
    } else {
        ExitCode::SUCCESS
    }
}

fn cmd_sr(path: &Path, name: &str, fuel: &FuelArgs, json: bool) -> ExitCode {
    let seed = match seeded(fuel.mode, fuel.seed) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let file = match load(path) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let Some(item) = file.item_named(name) else {
        eprintln!("error: unknown system `{name}`");
        return ExitCode::from(2);
    };
    let Some(resolved) = file.resolve_item(item) else {
        eprintln!("error: `{name}` references names that do not resolve");
        return ExitCode::from(2);
    };
    if !resolved.process.wf_process() {
        eprintln!("error: the process of `{name}` is not well-formed (free queues)");
        return ExitCode::from(1);
    }
    let mode = match seed {
        Some(s) => SrMode::Random { seed: s },
        None => SrMode::Exhaustive,
    };
    let report = subject_reduction_harness(
        &VarEnv::empty(),
        &resolved.theta,
        &resolved.process,
        &resolved.bindings,
        fuel.fuel,
        mode,
    );
    if json {
        println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
    } else {
        println!(
            "initial judgment: {}",
            if report.initial_accepted { "accepted" } else { "rejected" }
        );
        println!(
            "states checked: {}; violations: {}; fuel exhausted: {}",
            report.states_checked,
            report.violations.len(),
            report.fuel_exhausted
        );
        for v in &report.violations {
            println!("violation at {}: {} ({})", v.step, v.reason, v.state);
        }
    }
    if !report.initial_accepted || !report.violations.is_empty() {
        ExitCode::from(1)
    } else if report.fuel_exhausted {
        ExitCode::from(3)
    } else {
        ExitCode::SUCCESS
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Command::Check { paths, json } => cmd_check(paths, *json),
        Command::Dual { path, name, json } => cmd_dual(path, name, *json),
        Command::Progress { path, name, explore, override_wf, json } => {
            cmd_progress(path, name, explore, *override_wf, *json)
        }
        Command::Typecheck { path, name, json } => cmd_typecheck(path, name, *json),
        Command::Simulate { path, name, fuel, json } => cmd_simulate(path, name, fuel, *json),
        Command::Sr { path, name, fuel, json } => cmd_sr(path, name, fuel, *json),
    }
}
