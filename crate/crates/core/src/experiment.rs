//! Batch experiments over seeded instances: the fairness rounding table and
//! the rank-signature study. Seeds run concurrently; a failing seed is
//! recorded in its row and does not stop the batch.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::constraints::{rank_solve, Mode};
use crate::error::{Error, Result};
use crate::fairness::{maximize_fairness_with, Objective, Solver, DEFAULT_EPS};
use crate::frosting::frost_pipeline;
use crate::gap_round::{fractional_core, gap_round};
use crate::gen::{gen_fairness_instance, gen_rank_instance, FairnessParams, RankParams};
use crate::ilp::{ilp_min_violation, IlpOptions};
use crate::par;

#[derive(Debug, Clone)]
pub struct Table1Config {
    pub seeds: Vec<u64>,
    pub params: FairnessParams,
    pub objective: Objective,
    pub solver: Solver,
    pub eps: f64,
    pub ilp: IlpOptions,
    pub jobs: usize,
}

impl Default for Table1Config {
    fn default() -> Self {
        Table1Config {
            seeds: (0..100).collect(),
            params: FairnessParams::default(),
            objective: Objective::NashWelfare,
            solver: Solver::default(),
            eps: DEFAULT_EPS,
            ilp: IlpOptions { time_budget: Some(Duration::from_secs(5)), ..IlpOptions::default() },
            jobs: 0,
        }
    }
}

/// One seed of the fairness table. Column order is the CSV column order.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Table1Row {
    pub seed: u64,
    pub ilp_violation: Option<u64>,
    pub ilp_optimal: Option<bool>,
    pub ilp_nodes: Option<usize>,
    pub gap_violation: Option<u64>,
    pub frost_violation: Option<u64>,
    pub fractional_var_count: Option<usize>,
    pub convex_secs: Option<f64>,
    pub gap_secs: Option<f64>,
    pub frost_secs: Option<f64>,
    pub ilp_secs: Option<f64>,
    pub error: Option<String>,
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let start = Instant::now();
    let v = f()?;
    Ok((v, start.elapsed().as_secs_f64()))
}

fn table1_seed(cfg: &Table1Config, seed: u64) -> Table1Row {
    let mut row = Table1Row { seed, ..Table1Row::default() };
    if let Err(e) = fill_table1(cfg, &mut row) {
        row.error = Some(e.to_string());
    }
    row
}

fn fill_table1(cfg: &Table1Config, row: &mut Table1Row) -> Result<()> {
    let inst = gen_fairness_instance(row.seed, cfg.params)?;
    let (target, secs) = timed(|| maximize_fairness_with(&inst, &cfg.objective, cfg.eps, cfg.solver))?;
    row.convex_secs = Some(secs);
    let (gap, secs) = timed(|| gap_round(&inst, &target))?;
    row.gap_secs = Some(secs);
    row.gap_violation = Some(gap.report.total_overflow);
    row.fractional_var_count = Some(gap.fractional_vars);
    let ((frost, _), secs) = timed(|| frost_pipeline(&inst, &target, None))?;
    row.frost_secs = Some(secs);
    row.frost_violation = Some(frost.report.total_overflow);
    let seed_assignment = if gap.report.total_overflow <= frost.report.total_overflow {
        &gap.assignment
    } else {
        &frost.assignment
    };
    let (ilp, secs) = timed(|| {
        let (core, _) = fractional_core(&inst, &target)?;
        ilp_min_violation(&inst, &target.utilities, Some(seed_assignment), &core.remaining_students, cfg.ilp)
    })?;
    row.ilp_secs = Some(secs);
    row.ilp_violation = Some(ilp.total_violation);
    row.ilp_optimal = Some(ilp.optimal);
    row.ilp_nodes = Some(ilp.nodes);
    Ok(())
}

pub fn run_table1(cfg: &Table1Config) -> Vec<Table1Row> {
    par::with_jobs(cfg.jobs, || par::map(&cfg.seeds, |&s| table1_seed(cfg, s)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Stat {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Option<Stat> {
        let v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return None;
        }
        Some(Stat {
            count: v.len(),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            min: v.iter().copied().fold(f64::INFINITY, f64::min),
            max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table1Summary {
    pub seeds: usize,
    pub errors: usize,
    pub ilp: Option<Stat>,
    pub ilp_proved_optimal: usize,
    pub gap: Option<Stat>,
    pub frost: Option<Stat>,
    pub fractional_vars: Option<Stat>,
    /// Share of seeds with at most 30 fractional variables.
    pub fractional_at_most_30: f64,
    pub convex_secs: Option<Stat>,
    pub gap_secs: Option<Stat>,
    pub frost_secs: Option<Stat>,
    pub ilp_secs: Option<Stat>,
}

pub fn summarize_table1(rows: &[Table1Row]) -> Table1Summary {
    let col = |f: fn(&Table1Row) -> Option<f64>| Stat::of(rows.iter().filter_map(f));
    let ok: Vec<&Table1Row> = rows.iter().filter(|r| r.fractional_var_count.is_some()).collect();
    Table1Summary {
        seeds: rows.len(),
        errors: rows.iter().filter(|r| r.error.is_some()).count(),
        ilp: col(|r| r.ilp_violation.map(|v| v as f64)),
        ilp_proved_optimal: rows.iter().filter(|r| r.ilp_optimal == Some(true)).count(),
        gap: col(|r| r.gap_violation.map(|v| v as f64)),
        frost: col(|r| r.frost_violation.map(|v| v as f64)),
        fractional_vars: col(|r| r.fractional_var_count.map(|v| v as f64)),
        fractional_at_most_30: if ok.is_empty() {
            0.0
        } else {
            ok.iter().filter(|r| r.fractional_var_count.is_some_and(|c| c <= 30)).count() as f64 / ok.len() as f64
        },
        convex_secs: col(|r| r.convex_secs),
        gap_secs: col(|r| r.gap_secs),
        frost_secs: col(|r| r.frost_secs),
        ilp_secs: col(|r| r.ilp_secs),
    }
}

#[derive(Debug, Clone)]
pub struct RankConfig {
    pub seeds: Vec<u64>,
    pub params: RankParams,
    pub jobs: usize,
}

impl Default for RankConfig {
    fn default() -> Self {
        RankConfig { seeds: (0..100).collect(), params: RankParams::default(), jobs: 0 }
    }
}

/// One seed of the rank study. Violations are total overflow; the fast mode
/// also reports overflow beyond one seat per school.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RankRow {
    pub seed: u64,
    pub feasible: Option<bool>,
    pub fractional: Option<bool>,
    pub fast_violation: Option<u64>,
    pub frost_violation: Option<u64>,
    pub fast_violation_beyond_one: Option<u64>,
    pub fast_dominates: Option<bool>,
    pub frost_dominates: Option<bool>,
    pub fast_secs: Option<f64>,
    pub frost_secs: Option<f64>,
    pub error: Option<String>,
}

fn rank_seed(cfg: &RankConfig, seed: u64) -> RankRow {
    let mut row = RankRow { seed, ..RankRow::default() };
    if let Err(e) = fill_rank(cfg, &mut row) {
        row.error = Some(e.to_string());
    }
    row
}

fn fill_rank(cfg: &RankConfig, row: &mut RankRow) -> Result<()> {
    let (inst, rho) = gen_rank_instance(row.seed, cfg.params)?;
    let (fast, secs) = match timed(|| rank_solve(&inst, &rho, Mode::Fast)) {
        Err(Error::Infeasible(_)) => {
            row.feasible = Some(false);
            return Ok(());
        }
        r => r?,
    };
    row.feasible = Some(true);
    row.fractional = Some(fast.fractional);
    row.fast_secs = Some(secs);
    row.fast_violation = Some(fast.result.rounded.report.total_overflow);
    row.fast_violation_beyond_one = Some(fast.result.rounded.report.total_overflow_beyond_one);
    row.fast_dominates = Some(fast.signature.dominates(&rho));
    let (frost, secs) = timed(|| rank_solve(&inst, &rho, Mode::Frost))?;
    row.frost_secs = Some(secs);
    row.frost_violation = Some(frost.result.rounded.report.total_overflow);
    row.frost_dominates = Some(frost.signature.dominates(&rho));
    Ok(())
}

pub fn run_rank(cfg: &RankConfig) -> Vec<RankRow> {
    par::with_jobs(cfg.jobs, || par::map(&cfg.seeds, |&s| rank_seed(cfg, s)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankSummary {
    pub seeds: usize,
    pub errors: usize,
    pub feasible: usize,
    pub feasible_rate: f64,
    pub fractional: usize,
    pub fast: Option<Stat>,
    pub frost: Option<Stat>,
    pub fast_beyond_one: Option<Stat>,
}

pub fn summarize_rank(rows: &[RankRow]) -> RankSummary {
    let feasible = rows.iter().filter(|r| r.feasible == Some(true)).count();
    RankSummary {
        seeds: rows.len(),
        errors: rows.iter().filter(|r| r.error.is_some()).count(),
        feasible,
        feasible_rate: if rows.is_empty() { 0.0 } else { feasible as f64 / rows.len() as f64 },
        fractional: rows.iter().filter(|r| r.fractional == Some(true)).count(),
        fast: Stat::of(rows.iter().filter_map(|r| r.fast_violation.map(|v| v as f64))),
        frost: Stat::of(rows.iter().filter_map(|r| r.frost_violation.map(|v| v as f64))),
        fast_beyond_one: Stat::of(rows.iter().filter_map(|r| r.fast_violation_beyond_one.map(|v| v as f64))),
    }
}

/// Flattens a summary's statistics into `metric,count,mean,min,max` rows.
fn stat_rows(stats: &[(&str, Option<Stat>)]) -> Vec<(String, usize, f64, f64, f64)> {
    stats
        .iter()
        .filter_map(|(name, s)| s.map(|s| (name.to_string(), s.count, s.mean, s.min, s.max)))
        .collect()
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_stat_csv(path: &Path, stats: &[(&str, Option<Stat>)]) -> Result<()> {
    #[derive(Serialize)]
    struct Line {
        metric: String,
        count: usize,
        mean: f64,
        min: f64,
        max: f64,
    }
    let lines: Vec<Line> = stat_rows(stats)
        .into_iter()
        .map(|(metric, count, mean, min, max)| Line { metric, count, mean, min, max })
        .collect();
    write_csv(path, &lines)
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(v)? + "\n")?;
    Ok(())
}

fn prepare(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    Ok(())
}

/// Writes `table1.csv`, `table1_summary.csv` and `table1_summary.json`.
pub fn write_table1(out: &Path, rows: &[Table1Row], summary: &Table1Summary) -> Result<Vec<PathBuf>> {
    prepare(out)?;
    let paths = [out.join("table1.csv"), out.join("table1_summary.csv"), out.join("table1_summary.json")];
    write_csv(&paths[0], rows)?;
    write_stat_csv(
        &paths[1],
        &[
            ("ilp_violation", summary.ilp),
            ("gap_violation", summary.gap),
            ("frost_violation", summary.frost),
            ("fractional_var_count", summary.fractional_vars),
            ("convex_secs", summary.convex_secs),
            ("gap_secs", summary.gap_secs),
            ("frost_secs", summary.frost_secs),
            ("ilp_secs", summary.ilp_secs),
        ],
    )?;
    write_json(&paths[2], summary)?;
    Ok(paths.to_vec())
}

/// Writes `rank.csv`, `rank_summary.csv` and `rank_summary.json`.
pub fn write_rank(out: &Path, rows: &[RankRow], summary: &RankSummary) -> Result<Vec<PathBuf>> {
    prepare(out)?;
    let paths = [out.join("rank.csv"), out.join("rank_summary.csv"), out.join("rank_summary.json")];
    write_csv(&paths[0], rows)?;
    let feasible = Stat::of(rows.iter().filter_map(|r| r.feasible.map(|f| if f { 1.0 } else { 0.0 })));
    let fractional = Stat::of(rows.iter().filter_map(|r| r.fractional.map(|f| if f { 1.0 } else { 0.0 })));
    write_stat_csv(
        &paths[1],
        &[
            ("feasible", feasible),
            ("fractional", fractional),
            ("fast_violation", summary.fast),
            ("frost_violation", summary.frost),
            ("fast_violation_beyond_one", summary.fast_beyond_one),
        ],
    )?;
    write_json(&paths[2], summary)?;
    Ok(paths.to_vec())
}
