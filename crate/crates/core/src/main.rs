use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use fairround::constraints::{rank_solve, round_general, Mode, RankSignature, SideConstraints};
use fairround::error::{Error, Result};
use fairround::experiment::{
    run_rank, run_table1, summarize_rank, summarize_table1, write_rank, write_table1, RankConfig, Table1Config,
};
use fairround::fairness::{maximize_fairness_with, FairTarget, Objective, Solver, DEFAULT_EPS};
use fairround::frosting::frost_pipeline;
use fairround::gap_round::{fractional_core, gap_round};
use fairround::gen::{gen_fairness_instance, gen_rank_instance, FairnessParams, RankParams};
use fairround::ilp::{ilp_min_violation, IlpOptions};
use fairround::instance::{Instance, IntegralAssignment};

/// Group-fair capacitated school assignment.
#[derive(Parser)]
#[command(name = "fairround", version)]
struct Cli {
    /// Directory for outputs whose path is not given explicitly.
    #[arg(long, global = true, env = "FAIRROUND_OUT", default_value = "out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Fairness,
    Rank,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Gap,
    Frost,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExperimentKind {
    Table1,
    Rank,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded random instance (and its target signature for `rank`).
    Generate {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        g: Option<usize>,
        #[arg(long)]
        r: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Maximise a concave group objective over the fractional assignments.
    Solve {
        #[arg(long)]
        instance: PathBuf,
        /// nash, maxmin, welfare, or ces:r=<exponent>
        #[arg(long, default_value = "nash")]
        objective: Objective,
        /// interior or kelley
        #[arg(long, default_value = "interior")]
        solver: Solver,
        #[arg(long, default_value_t = DEFAULT_EPS)]
        eps: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Round a fractional target to an integral assignment.
    Round {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long, value_enum)]
        method: Method,
        /// Interval cap for the frosting search.
        #[arg(long)]
        max_intervals: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Least total capacity violation meeting the target utilities.
    Benchmark {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        target: PathBuf,
        /// Assignment to start from; defaults to the better of both roundings.
        #[arg(long)]
        incumbent: Option<PathBuf>,
        #[arg(long, default_value_t = 60.0)]
        time_budget: f64,
        #[arg(long, default_value_t = 1_000_000)]
        node_limit: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Matching whose rank signature weakly dominates the given one.
    RankSolve {
        #[arg(long)]
        instance: PathBuf,
        /// Comma-separated counts per rank, for example 3,1,0.
        #[arg(long)]
        signature: String,
        /// fast or frost
        #[arg(long, default_value = "fast")]
        mode: Mode,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Round under general linear side constraints.
    Constrain {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        q: PathBuf,
        /// fast or frost
        #[arg(long, default_value = "fast")]
        mode: Mode,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Batch runs over seeds, written as CSV and JSON summaries.
    Experiment {
        #[arg(value_enum)]
        kind: ExperimentKind,
        #[arg(long, default_value_t = 100)]
        seeds: u64,
        #[arg(long, default_value_t = 0)]
        first_seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Concurrent seeds; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        #[arg(long, default_value = "interior")]
        solver: Solver,
        /// Seconds of branch and bound per seed.
        #[arg(long, default_value_t = 5.0)]
        ilp_budget: f64,
    },
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn load_instance(path: &Path) -> Result<Instance> {
    Instance::from_json(&read(path)?)
}

fn print<T: Serialize>(v: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(v)?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn budget(secs: f64) -> Result<Duration> {
    Duration::try_from_secs_f64(secs).map_err(|_| Error::Invalid { field: "budget".into(), reason: format!("{secs}") })
}

fn run(cli: Cli) -> Result<()> {
    let out_dir = cli.out_dir;
    let or_default = |out: Option<PathBuf>, name: String| out.unwrap_or_else(|| out_dir.join(name));
    match cli.command {
        Command::Generate { kind, seed, n, m, g, r, out } => match kind {
            Kind::Fairness => {
                let d = FairnessParams::default();
                let params = FairnessParams { n: n.unwrap_or(d.n), m: m.unwrap_or(d.m), g: g.unwrap_or(d.g), p: None };
                let inst = gen_fairness_instance(seed, params)?;
                let path = or_default(out, format!("fairness_{seed}.json"));
                write(&path, &inst.to_json())?;
                print(&json!({ "instance": path }))
            }
            Kind::Rank => {
                let d = RankParams::default();
                let params = RankParams { n: n.unwrap_or(d.n), m: m.unwrap_or(d.m), r: r.unwrap_or(d.r) };
                let (inst, rho) = gen_rank_instance(seed, params)?;
                let path = or_default(out, format!("rank_{seed}.json"));
                let sig_path = path.with_extension("signature.json");
                write(&path, &inst.to_json())?;
                write(&sig_path, &serde_json::to_string(&rho)?)?;
                print(&json!({ "instance": path, "signature_file": sig_path, "signature": rho }))
            }
        },
        Command::Solve { instance, objective, solver, eps, out } => {
            let inst = load_instance(&instance)?;
            let target = maximize_fairness_with(&inst, &objective, eps, solver)?;
            let path = or_default(out, "target.json".into());
            write(&path, &target.to_json())?;
            print(&json!({
                "target": path,
                "utilities": target.utilities,
                "objective_value": target.objective_value,
                "upper_bound": target.upper_bound,
                "iterations": target.iterations,
            }))
        }
        Command::Round { instance, target, method, max_intervals, out } => {
            let inst = load_instance(&instance)?;
            let target = FairTarget::from_json(&read(&target)?)?;
            let (rounded, frost) = match method {
                Method::Gap => (gap_round(&inst, &target)?, None),
                Method::Frost => {
                    let (r, s) = frost_pipeline(&inst, &target, max_intervals)?;
                    (r, Some(s))
                }
            };
            let path = or_default(out, "assignment.json".into());
            write(&path, &rounded.assignment.to_json())?;
            let meets = rounded.utilities.dominates(&target.utilities, 1e-6);
            print(&json!({
                "assignment": path,
                "report": rounded.report,
                "utilities": rounded.utilities,
                "meets_targets": meets,
                "fractional_vars": rounded.fractional_vars,
                "frost": frost,
            }))
        }
        Command::Benchmark { instance, target, incumbent, time_budget, node_limit, out } => {
            let inst = load_instance(&instance)?;
            let target = FairTarget::from_json(&read(&target)?)?;
            let start = match incumbent {
                Some(p) => IntegralAssignment::from_json(&inst, &read(&p)?)?,
                None => {
                    let gap = gap_round(&inst, &target)?;
                    let (frost, _) = frost_pipeline(&inst, &target, None)?;
                    if gap.report.total_overflow <= frost.report.total_overflow {
                        gap.assignment
                    } else {
                        frost.assignment
                    }
                }
            };
            let (core, _) = fractional_core(&inst, &target)?;
            let opts = IlpOptions { node_limit, time_budget: Some(budget(time_budget)?), ..IlpOptions::default() };
            let r = ilp_min_violation(&inst, &target.utilities, Some(&start), &core.remaining_students, opts)?;
            let path = or_default(out, "benchmark_assignment.json".into());
            write(&path, &r.assignment.to_json())?;
            print(&json!({
                "assignment": path,
                "optimum": r.total_violation,
                "optimal": r.optimal,
                "nodes": r.nodes,
                "root_bound": r.root_bound,
                "wall_secs": r.wall_time.as_secs_f64(),
            }))
        }
        Command::RankSolve { instance, signature, mode, out } => {
            let inst = load_instance(&instance)?;
            let rho = RankSignature::parse(&signature)?;
            let r = rank_solve(&inst, &rho, mode)?;
            let path = or_default(out, "rank_assignment.json".into());
            write(&path, &r.result.rounded.assignment.to_json())?;
            print(&json!({
                "assignment": path,
                "signature": r.signature,
                "dominates": r.signature.dominates(&rho),
                "fractional": r.fractional,
                "report": r.result.rounded.report,
            }))
        }
        Command::Constrain { instance, q, mode, out } => {
            let inst = load_instance(&instance)?;
            let q = SideConstraints::from_json(&inst, &read(&q)?)?;
            let r = round_general(&inst, &q, mode)?;
            let path = or_default(out, "constrained_assignment.json".into());
            write(&path, &r.rounded.assignment.to_json())?;
            print(&json!({
                "assignment": path,
                "slack": r.slack,
                "report": r.rounded.report,
                "utilities": r.rounded.utilities,
                "residual_students": r.residual_students,
            }))
        }
        Command::Experiment { kind, seeds, first_seed, out, jobs, solver, ilp_budget } => {
            let seeds: Vec<u64> = (first_seed..first_seed + seeds).collect();
            let dir = out.unwrap_or(out_dir);
            match kind {
                ExperimentKind::Table1 => {
                    let mut cfg = Table1Config { seeds, jobs, solver, ..Table1Config::default() };
                    cfg.ilp.time_budget = Some(budget(ilp_budget)?);
                    let rows = run_table1(&cfg);
                    let summary = summarize_table1(&rows);
                    let files = write_table1(&dir, &rows, &summary)?;
                    print(&json!({ "files": files, "summary": summary }))
                }
                ExperimentKind::Rank => {
                    let rows = run_rank(&RankConfig { seeds, jobs, ..RankConfig::default() });
                    let summary = summarize_rank(&rows);
                    let files = write_rank(&dir, &rows, &summary)?;
                    print(&json!({ "files": files, "summary": summary }))
                }
            }
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
