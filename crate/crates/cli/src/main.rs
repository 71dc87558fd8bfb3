//! `olc`: validate networks, simulate scenarios, settle, solve and check.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::json;

use olc_core::analysis::{
    check_scenario, kkt_residuals, AnchorSchedule, CheckOptions, OracleOptions,
};
use olc_core::controller::read_vector;
use olc_core::simulator::{drive, run, settle_from, ClosedLoopState, TrajectoryLog};
use olc_core::{solve_olc, Error, MismatchSource, NetworkModel, Scenario, SelectionRule};

const EXIT_INPUT: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_CHECK: u8 = 3;

#[derive(Parser)]
#[command(
    name = "olc",
    version,
    about = "Distributed optimal load-frequency control toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a network file
    Validate { network: PathBuf },
    /// Simulate scenarios and write trajectory CSV
    Run {
        #[arg(required = true)]
        scenarios: Vec<PathBuf>,
        /// CSV file, or a directory when several scenarios are given (stdout if omitted)
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Log V against the oracle equilibrium of each injection segment
        #[arg(long)]
        lyapunov: bool,
    },
    /// Simulate a scenario, then hold the final injection until the state is stationary
    Settle {
        scenario: PathBuf,
        #[command(flatten)]
        sim: SimArgs,
        /// Settling threshold on ‖x_{k+1} - x_k‖∞ / dt
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        t_max: Option<f64>,
    },
    /// Solve the load-control problem for a given injection
    Solve {
        network: PathBuf,
        /// Injection vector, one entry per bus
        #[arg(long)]
        pm: PathBuf,
        /// Objective agreement tolerance of the two solver routes
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
    /// Run, settle, solve the oracle and check the equilibrium properties
    Check {
        #[arg(required = true)]
        scenarios: Vec<PathBuf>,
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        settle: SettleArgs,
        /// Tolerance of the equilibrium checks
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        /// JSON report file, or a directory when several scenarios are given
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

#[derive(Args, Clone)]
struct SimArgs {
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long, value_parser = ["minnorm", "left", "right", "mid"])]
    selection: Option<String>,
    #[arg(long, value_parser = ["model", "estimate"])]
    mismatch: Option<String>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    log_decimation: Option<usize>,
}

#[derive(Args, Clone)]
struct SettleArgs {
    /// Settling threshold on ‖x_{k+1} - x_k‖∞ / dt
    #[arg(long)]
    settle_tol: Option<f64>,
    #[arg(long)]
    t_max: Option<f64>,
}

enum Failure {
    Core(Error),
    Io(PathBuf, io::Error),
    Usage(String),
    CheckFailed(usize),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Core(e) if e.is_numerical() => EXIT_NUMERICAL,
            Failure::Core(_) | Failure::Io(..) | Failure::Usage(_) => EXIT_INPUT,
            Failure::CheckFailed(_) => EXIT_CHECK,
        }
    }

    fn report(&self) -> serde_json::Value {
        let (kind, message) = match self {
            Failure::Core(e) => (e.kind(), e.to_string()),
            Failure::Io(p, e) => ("io", format!("{}: {e}", p.display())),
            Failure::Usage(m) => ("usage", m.clone()),
            Failure::CheckFailed(n) => (
                "check_failed",
                format!("{n} scenario(s) failed the equilibrium checks"),
            ),
        };
        json!({ "error": kind, "exit_code": self.code(), "message": message })
    }
}

type Outcome<T> = Result<T, Failure>;

fn load_scenario(path: &Path, sim: &SimArgs) -> Outcome<(Scenario, NetworkModel)> {
    let mut sc = Scenario::load(path)?;
    if let Some(dt) = sim.dt {
        sc.dt = dt;
    }
    if let Some(t) = sim.t_end {
        sc.t_end = t;
    }
    if let Some(s) = &sim.selection {
        sc.controller.selection = s.parse::<SelectionRule>().map_err(Failure::Usage)?;
    }
    if let Some(m) = &sim.mismatch {
        sc.controller.mismatch = m.parse::<MismatchSource>().map_err(Failure::Usage)?;
    }
    if let Some(e) = sim.epsilon {
        sc.controller.epsilon = e;
    }
    if let Some(d) = sim.log_decimation {
        sc.log_decimation = d;
    }
    let model = sc.load_network()?;
    sc.validate(&model)?;
    Ok((sc, model))
}

fn create(path: &Path) -> Outcome<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Io(path.to_path_buf(), e))
}

/// Output path for one of several scenarios written into directory `dir`.
fn per_scenario(dir: &Path, scenario: &Path, ext: &str) -> PathBuf {
    let stem = scenario.file_stem().unwrap_or_default();
    dir.join(stem).with_extension(ext)
}

fn pool(jobs: usize) -> Outcome<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Failure::Usage(format!("cannot start {jobs} worker threads: {e}")))
}

fn cmd_validate(path: &Path) -> Outcome<()> {
    let model = NetworkModel::load(path)?;
    let doc = json!({
        "network": path.display().to_string(),
        "name": model.name(),
        "buses": model.n(),
        "lines": model.m(),
        "generators": model.generators().len(),
        "load_buses": model.loads().len(),
        "valid": true,
    });
    println!("{doc}");
    Ok(())
}

fn run_one(path: &Path, sim: &SimArgs, out: Option<&Path>, lyapunov: bool) -> Outcome<()> {
    let (sc, model) = load_scenario(path, sim)?;
    let anchors = if lyapunov {
        Some(AnchorSchedule::build(
            &model,
            &sc,
            &OracleOptions::default(),
        )?)
    } else {
        None
    };
    let log: TrajectoryLog = run(&model, &sc, anchors.as_ref())?;
    match out {
        Some(p) => {
            let mut w = create(p)?;
            log.write_csv(&model, &mut w)
                .and_then(|_| w.flush())
                .map_err(|e| Failure::Io(p.to_path_buf(), e))
        }
        None => {
            let stdout = io::stdout();
            let mut w = BufWriter::new(stdout.lock());
            log.write_csv(&model, &mut w)
                .and_then(|_| w.flush())
                .map_err(|e| Failure::Io(PathBuf::from("<stdout>"), e))
        }
    }
}

fn cmd_run(
    scenarios: &[PathBuf],
    out: Option<&Path>,
    sim: &SimArgs,
    jobs: usize,
    lyapunov: bool,
) -> Outcome<()> {
    if scenarios.len() == 1 {
        return run_one(&scenarios[0], sim, out, lyapunov);
    }
    let dir =
        out.ok_or_else(|| Failure::Usage("several scenarios need --out <directory>".into()))?;
    std::fs::create_dir_all(dir).map_err(|e| Failure::Io(dir.to_path_buf(), e))?;
    let results: Vec<Outcome<()>> = pool(jobs)?.install(|| {
        scenarios
            .par_iter()
            .map(|s| run_one(s, sim, Some(&per_scenario(dir, s, "csv")), lyapunov))
            .collect()
    });
    results.into_iter().collect()
}

fn cmd_settle(path: &Path, sim: &SimArgs, tol: Option<f64>, t_max: Option<f64>) -> Outcome<()> {
    let (sc, model) = load_scenario(path, sim)?;
    let started = Instant::now();
    let end: ClosedLoopState = drive(&model, &sc, |_, _, _| Ok(()))?;
    let p_m = sc.final_injection(&model);
    let tol = tol.unwrap_or(sc.settle.tol);
    let t_max = t_max.unwrap_or(sc.settle.t_max);
    let settled = settle_from(&model, end, &p_m, &sc.controller, sc.dt, tol, t_max)?;
    let sol = olc_core::OptimalSolution::from_state(&model, &settled.state);
    let ev = olc_core::simulator::evaluate(&model, &settled.state, &p_m, &sc.controller)?;
    let doc = json!({
        "scenario": path.display().to_string(),
        "settle_time": settled.elapsed,
        "residual": settled.residual,
        "wall_seconds": started.elapsed().as_secs_f64(),
        "omega": ev.plant.omega,
        "theta_e": settled.state.plant.theta_e,
        "p_l": sol.p_l_star,
        "mu": sol.mu_star,
        "phi": sol.phi_star,
        "eta_plus": sol.eta_plus_star,
        "eta_minus": sol.eta_minus_star,
        "cost": sol.objective,
    });
    println!(
        "{}",
        serde_json::to_string_pretty(&doc).expect("JSON value serializes")
    );
    Ok(())
}

fn cmd_solve(network: &Path, pm: &Path, tol: f64) -> Outcome<()> {
    let model = NetworkModel::load(network)?;
    let p_m = read_vector(pm)?;
    let opts = OracleOptions {
        tol,
        ..OracleOptions::default()
    };
    let sol = solve_olc(&model, &p_m, &opts)?;
    let kkt = kkt_residuals(&model, &p_m, &sol)?;
    let doc = json!({ "solution": sol, "kkt": kkt });
    println!(
        "{}",
        serde_json::to_string_pretty(&doc).expect("JSON value serializes")
    );
    Ok(())
}

struct CheckRun {
    path: PathBuf,
    passed: bool,
    table: String,
    json: serde_json::Value,
}

fn check_one(path: &Path, sim: &SimArgs, settle: &SettleArgs, tol: f64) -> Outcome<CheckRun> {
    let (sc, model) = load_scenario(path, sim)?;
    let mut opts = CheckOptions::for_scenario(&sc, tol);
    if let Some(t) = settle.settle_tol {
        opts.settle_tol = t;
    }
    if let Some(t) = settle.t_max {
        opts.t_max = t;
    }
    let started = Instant::now();
    let outcome = check_scenario(&model, &sc, &opts)?;
    let wall = started.elapsed().as_secs_f64();
    let mut table = format!("scenario {}\n", path.display());
    table.push_str(&outcome.report.summary_table());
    table.push_str(&format!(
        "lyapunov: V0 {:.6e}, settled {:.3e}, max step increase {:.3e} (c = {:.3e})\n",
        outcome.lyapunov.initial,
        outcome.lyapunov.settled,
        outcome.lyapunov.max_increase,
        outcome.lyapunov.slack_constant
    ));
    table.push_str(&format!(
        "settled after {:.3} s of extra simulation, wall {wall:.2} s\n",
        outcome.settle_time
    ));
    let json = json!({
        "scenario": path.display().to_string(),
        "controller": sc.controller,
        "dt": sc.dt,
        "options": opts,
        "wall_seconds": wall,
        "outcome": outcome,
    });
    Ok(CheckRun {
        path: path.to_path_buf(),
        passed: outcome.report.passed,
        table,
        json,
    })
}

fn cmd_check(
    scenarios: &[PathBuf],
    sim: &SimArgs,
    settle: &SettleArgs,
    tol: f64,
    out: Option<&Path>,
    jobs: usize,
) -> Outcome<()> {
    if scenarios.len() > 1 {
        if let Some(dir) = out {
            std::fs::create_dir_all(dir).map_err(|e| Failure::Io(dir.to_path_buf(), e))?;
        }
    }
    let results: Vec<Outcome<CheckRun>> = pool(jobs)?.install(|| {
        scenarios
            .par_iter()
            .map(|s| check_one(s, sim, settle, tol))
            .collect()
    });
    let mut runs = Vec::new();
    for r in results {
        runs.push(r?);
    }
    let mut failed = 0;
    for r in &runs {
        print!("{}", r.table);
        if !r.passed {
            failed += 1;
        }
        let text = serde_json::to_string_pretty(&r.json).expect("JSON value serializes");
        match out {
            Some(o) => {
                let target = if scenarios.len() > 1 {
                    per_scenario(o, &r.path, "json")
                } else {
                    o.to_path_buf()
                };
                let mut w = create(&target)?;
                writeln!(w, "{text}")
                    .and_then(|_| w.flush())
                    .map_err(|e| Failure::Io(target.clone(), e))?;
            }
            None => println!("{text}"),
        }
    }
    if failed > 0 {
        Err(Failure::CheckFailed(failed))
    } else {
        Ok(())
    }
}

fn dispatch(cli: Cli) -> Outcome<()> {
    match cli.command {
        Command::Validate { network } => cmd_validate(&network),
        Command::Run {
            scenarios,
            out,
            sim,
            jobs,
            lyapunov,
        } => cmd_run(&scenarios, out.as_deref(), &sim, jobs, lyapunov),
        Command::Settle {
            scenario,
            sim,
            tol,
            t_max,
        } => cmd_settle(&scenario, &sim, tol, t_max),
        Command::Solve { network, pm, tol } => cmd_solve(&network, &pm, tol),
        Command::Check {
            scenarios,
            sim,
            settle,
            tol,
            out,
            jobs,
        } => cmd_check(&scenarios, &sim, &settle, tol, out.as_deref(), jobs),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let doc = json!({ "error": "usage", "exit_code": EXIT_INPUT, "message": e.to_string().trim_end() });
            eprintln!("{doc}");
            return ExitCode::from(EXIT_INPUT);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.report());
            ExitCode::from(f.code())
        }
    }
}
