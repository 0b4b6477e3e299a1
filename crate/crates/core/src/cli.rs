//! `holoshift` command line: plan, run, bench, landscape, verify.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::geometry::instantiate_task;
use crate::io::{self, RecordSettings, RecordWriter};
use crate::planner::{plan_task, CostKind, TransportPlan};
use crate::sequence::{bench, run_sequence_with, BenchEntry, RunRecord, SolverKind};
use crate::transient::TransientOrder;
use crate::units::{Length, MICRON};
use crate::verify;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_SOLVER: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "holoshift", version, about = "Phase-continuous hologram sequences for tweezer rearrangement")]
pub struct Cli {
    /// Worker threads for the numerical kernels (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Assign and discretize a task, writing plan.json.
    Plan(TaskArgs),
    /// Solve the hologram sequence for each selected solver and write run records.
    Run {
        #[command(flatten)]
        task: TaskArgs,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Time per-frame solves and write timing.csv.
    Bench {
        #[command(flatten)]
        task: TaskArgs,
        #[command(flatten)]
        solver: SolverArgs,
        /// Leading frames excluded from the statistics.
        #[arg(long)]
        warmup_frames: Option<usize>,
        /// Constrained-solver iteration budgets to time (comma separated).
        #[arg(long, value_delimiter = ',')]
        wpgs_k: Vec<usize>,
        /// Baseline iteration budgets to time (comma separated).
        #[arg(long, value_delimiter = ',')]
        wgs_k: Vec<usize>,
    },
    /// Two-frame interpolation model on an (a, Δφ) grid.
    Landscape {
        #[arg(long, default_value_t = 101)]
        a_steps: usize,
        #[arg(long, default_value_t = 181)]
        dphi_steps: usize,
        /// Output CSV (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the oracle suites.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Args)]
pub struct TaskArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Named task when no config is given.
    #[arg(long, default_value = "reconfig_2d")]
    pub task: String,
    /// Occupancy seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Maximum displacement per frame in µm.
    #[arg(long)]
    pub max_step: Option<f64>,
    /// Assignment cost: distance or squared
    #[arg(long)]
    pub cost: Option<CostKind>,
    /// Square modulator grid size.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// Solvers to run (comma separated: wgs, wpgs).
    #[arg(long, value_delimiter = ',')]
    pub solver: Vec<SolverKind>,
    /// WPGS iterations per frame
    #[arg(long)]
    pub iterations: Option<usize>,
    /// WGS iterations per frame
    #[arg(long)]
    pub wgs_iterations: Option<usize>,
    /// WGS warm-up iterations on frame 0
    #[arg(long)]
    pub warmup_iterations: Option<usize>,
    /// Over-relaxation factor for the weights
    #[arg(long)]
    pub over_relaxation: Option<f64>,
    /// Number of final iterations of a solve that over-relax
    #[arg(long)]
    pub relax_last_iters: Option<usize>,
    /// Over-relax once the remaining frames are at most this fraction of the sequence
    #[arg(long)]
    pub relax_tail_fraction: Option<f64>,
    /// Minimum trap count for over-relaxation
    #[arg(long)]
    pub relax_min_traps: Option<usize>,
    /// Seed of the initial random mask.
    #[arg(long)]
    pub mask_seed: Option<u64>,
    /// Transient model: exact, leading or second.
    #[arg(long)]
    pub order: Option<TransientOrder>,
    /// Pixel relaxation time in seconds.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Transient samples per refresh
    #[arg(long)]
    pub samples_per_refresh: Option<usize>,
    /// Also write 8-bit PGM masks.
    #[arg(long)]
    pub pgm: bool,
}

impl TaskArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::preset(&self.task, self.seed.unwrap_or(0))?,
        };
        if let Some(seed) = self.seed {
            cfg.task.seed = seed;
        }
        if let Some(step) = self.max_step {
            cfg.task.max_step = Some(Length::microns(step));
        }
        if let Some(cost) = self.cost {
            cfg.cost = cost;
        }
        if let Some(g) = self.grid {
            cfg.optical.grid_x = g;
            cfg.optical.grid_y = g;
        }
        if let Some(out) = &self.out {
            cfg.output = out.clone();
        }
        Ok(cfg)
    }
}

impl SolverArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if !self.solver.is_empty() {
            cfg.solvers = self.solver.clone();
        }
        let s = &mut cfg.solver;
        let set = |dst: &mut usize, v: Option<usize>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        set(&mut s.iterations, self.iterations);
        set(&mut s.wgs_iterations, self.wgs_iterations);
        set(&mut s.warmup_iterations, self.warmup_iterations);
        set(&mut s.relax_last_iters, self.relax_last_iters);
        set(&mut s.relax_min_traps, self.relax_min_traps);
        set(&mut cfg.refresh.samples_per_refresh, self.samples_per_refresh);
        if let Some(b) = self.over_relaxation {
            s.over_relaxation = b;
        }
        if let Some(f) = self.relax_tail_fraction {
            s.relax_tail_fraction = f;
        }
        if let Some(seed) = self.mask_seed {
            s.seed = seed;
        }
        if let Some(order) = self.order {
            cfg.refresh.order = order;
        }
        if let Some(tau) = self.tau {
            cfg.refresh.tau = tau;
        }
        cfg.pgm |= self.pgm;
    }
}

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Frame { .. } | Error::DarkTrap { .. } | Error::TooLarge { .. } => EXIT_SOLVER,
        Error::Infeasible { .. } | Error::Underfilled { .. } => EXIT_INFEASIBLE,
        Error::Config(_) | Error::Invalid(_) | Error::Dimension { .. } | Error::TomlDe(_) | Error::TomlSer(_) => {
            EXIT_CONFIG
        }
        Error::Check(_) | Error::Io(_) | Error::Json(_) | Error::Csv(_) => EXIT_FAILURE,
    }
}

/// Parse `args` (including the program name), execute, and return the exit code.
pub fn main_with<I, T>(args: I, out: &mut (dyn Write + Send)) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn execute(cli: &Cli, out: &mut (dyn Write + Send)) -> Result<()> {
    let threads = match &cli.command {
        Command::Plan(t) | Command::Run { task: t, .. } | Command::Bench { task: t, .. } => {
            cli.threads.or(t.resolve().ok().and_then(|c| c.threads))
        }
        _ => cli.threads,
    };
    if threads == Some(0) {
        return Err(Error::Config("--threads must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(&cli.command, out))
}

fn dispatch(command: &Command, out: &mut (dyn Write + Send)) -> Result<()> {
    match command {
        Command::Plan(task) => {
            let cfg = task.resolve()?;
            cmd_plan(&cfg, out).map(|_| ())
        }
        Command::Run { task, solver } => {
            let mut cfg = task.resolve()?;
            solver.apply(&mut cfg);
            cfg.validate()?;
            cmd_run(&cfg, out).map(|_| ())
        }
        Command::Bench {
            task,
            solver,
            warmup_frames,
            wpgs_k,
            wgs_k,
        } => {
            let mut cfg = task.resolve()?;
            solver.apply(&mut cfg);
            if let Some(w) = warmup_frames {
                cfg.bench.warmup_frames = *w;
            }
            if !wpgs_k.is_empty() {
                cfg.bench.wpgs_iterations = wpgs_k.clone();
            }
            if !wgs_k.is_empty() {
                cfg.bench.wgs_iterations = wgs_k.clone();
            }
            cfg.validate()?;
            cmd_bench(&cfg, out).map(|_| ())
        }
        Command::Landscape {
            a_steps,
            dphi_steps,
            out: path,
        } => {
            let rows = io::landscape(*a_steps, *dphi_steps)?;
            match path {
                Some(p) => {
                    io::write_csv(BufWriter::new(File::create(p)?), &rows)?;
                    writeln!(out, "wrote {} ({} rows)", p.display(), rows.len())?;
                }
                None => io::write_csv(&mut *out, &rows)?,
            }
            Ok(())
        }
        Command::Verify { seed } => {
            let reports = verify::run_all(*seed)?;
            for r in &reports {
                writeln!(
                    out,
                    "{} {:<50} cases={:<4} worst={:.3e} tol={:.1e}",
                    if r.passed { "PASS" } else { "FAIL" },
                    r.name,
                    r.cases,
                    r.worst,
                    r.tolerance
                )?;
            }
            if reports.iter().all(|r| r.passed) {
                Ok(())
            } else {
                Err(Error::Check("oracle suite".into()))
            }
        }
    }
}

fn build_plan(cfg: &RunConfig) -> Result<TransportPlan> {
    cfg.validate()?;
    let instance = instantiate_task(&cfg.task)?;
    plan_task(&instance, cfg.max_step(), cfg.cost)
}

/// Plan the configured task and write `plan.json` into the output directory.
pub fn cmd_plan(cfg: &RunConfig, out: &mut (dyn Write + Send)) -> Result<TransportPlan> {
    let plan = build_plan(cfg)?;
    fs::create_dir_all(&cfg.output)?;
    io::save_plan(&cfg.output.join("plan.json"), &plan)?;
    let d = plan.displacement();
    writeln!(
        out,
        "plan: {} traps, L = {} steps, displacement mean {:.3} µm, max {:.3} µm -> {}",
        plan.trap_count(),
        plan.frames,
        d.mean / MICRON,
        d.max / MICRON,
        cfg.output.join("plan.json").display()
    )?;
    Ok(plan)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub solver: SolverKind,
    pub frames: usize,
    pub min_uniformity: f64,
    pub phase_std: f64,
    pub min_ratio: f64,
    pub mean_ms: f64,
}

impl RunSummary {
    pub fn of(run: &RunRecord) -> Self {
        let times = run.sequence.solve_times();
        RunSummary {
            solver: run.kind(),
            frames: run.metrics.frames,
            min_uniformity: run.metrics.min_uniformity,
            phase_std: run.metrics.phase.std,
            min_ratio: run.metrics.transition.min,
            mean_ms: 1e3 * times.iter().sum::<f64>() / times.len().max(1) as f64,
        }
    }
}

/// Run every selected solver on one shared plan; each record goes to `<output>/<solver>/`.
pub fn cmd_run(cfg: &RunConfig, out: &mut (dyn Write + Send)) -> Result<Vec<RunSummary>> {
    let plan = cmd_plan(cfg, out)?;
    fs::write(cfg.output.join("config.toml"), cfg.to_toml()?)?;
    let options = cfg.sequence_options();
    let mut summaries = Vec::new();
    for &kind in &cfg.solvers {
        let dir = cfg.output.join(kind.name());
        let settings = RecordSettings {
            solver: kind,
            optical: cfg.optical.clone(),
            options: options.clone(),
        };
        let mut writer = RecordWriter::create(&dir, &settings, &plan, cfg.pgm)?;
        let run = run_sequence_with(&cfg.optical, &plan, kind, &options, &mut |frame, mask, tr| {
            writer.frame(frame, mask, tr)
        })?;
        writer.finish(&run.metrics)?;
        summaries.push(RunSummary::of(&run));
    }
    io::write_csv(
        BufWriter::new(File::create(cfg.output.join("summary.csv"))?),
        &summaries,
    )?;
    writeln!(out, "{:<6} {:>7} {:>9} {:>10} {:>10} {:>10}", "solver", "frames", "min nu", "dphi std", "min I/I0", "mean ms")?;
    for s in &summaries {
        writeln!(
            out,
            "{:<6} {:>7} {:>9.4} {:>10.4} {:>10.4} {:>10.2}",
            s.solver.name(),
            s.frames,
            s.min_uniformity,
            s.phase_std,
            s.min_ratio,
            s.mean_ms
        )?;
    }
    Ok(summaries)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub task: String,
    pub solver: SolverKind,
    pub iterations: usize,
    pub frames: usize,
    pub phase_std: f64,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub std_ms: f64,
}

/// Time each configured solver budget and write `timing.csv`.
pub fn cmd_bench(cfg: &RunConfig, out: &mut (dyn Write + Send)) -> Result<Vec<BenchRow>> {
    let plan = build_plan(cfg)?;
    let mut entries = Vec::new();
    for &kind in &cfg.solvers {
        let (budgets, default) = match kind {
            SolverKind::Wpgs => (&cfg.bench.wpgs_iterations, cfg.solver.iterations),
            SolverKind::Wgs => (&cfg.bench.wgs_iterations, cfg.solver.wgs_iterations),
        };
        if budgets.is_empty() {
            entries.push(BenchEntry::new(kind, default));
        } else {
            entries.extend(budgets.iter().map(|&k| BenchEntry::new(kind, k)));
        }
    }
    let timings = bench(&cfg.optical, &plan, &entries, &cfg.solver, cfg.bench.warmup_frames)?;
    let task = serde_json::to_value(cfg.task.kind)?
        .as_str()
        .unwrap_or("task")
        .to_string();
    let rows: Vec<BenchRow> = timings
        .into_iter()
        .map(|t| BenchRow {
            task: task.clone(),
            solver: t.kind,
            iterations: t.iterations,
            frames: t.frames,
            phase_std: t.phase_std,
            mean_ms: t.mean_ms,
            median_ms: t.median_ms,
            std_ms: t.std_ms,
        })
        .collect();
    fs::create_dir_all(&cfg.output)?;
    let path = cfg.output.join("timing.csv");
    io::write_csv(BufWriter::new(File::create(&path)?), &rows)?;
    writeln!(out, "{:<20} {:<6} {:>5} {:>10} {:>10}", "task", "solver", "iter", "dphi std", "mean ms")?;
    for r in &rows {
        writeln!(
            out,
            "{:<20} {:<6} {:>5} {:>10.4} {:>10.3}",
            r.task,
            r.solver.name(),
            r.iterations,
            r.phase_std,
            r.mean_ms
        )?;
    }
    writeln!(out, "-> {}", path.display())?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_cli(args: &[&str]) -> (i32, String) {
        let mut buf = Vec::new();
        let code = main_with(std::iter::once("holoshift").chain(args.iter().copied()), &mut buf);
        (code, String::from_utf8(buf).unwrap())
    }

    #[test]
    fn plan_minimal_task() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        let (code, text) = run_cli(&["plan", "--task", "minimal_3x3", "--out", out]);
        assert_eq!(code, EXIT_OK, "{text}");
        assert!(text.contains("L = 10 steps"), "{text}");
        let plan = io::load_plan(&dir.path().join("plan.json")).unwrap();
        assert_eq!(plan.frames, 10);
    }

    #[test]
    fn config_errors_exit_two() {
        assert_eq!(run_cli(&["plan", "--task", "unknown"]).0, EXIT_CONFIG);
        assert_eq!(run_cli(&["plan", "--bogus-flag"]).0, EXIT_CONFIG);
        assert_eq!(run_cli(&["--threads", "0", "verify"]).0, EXIT_CONFIG);
    }

    #[test]
    fn oversubscribed_target_exits_three() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.toml");
        fs::write(
            &cfg,
            "[task]\nkind = \"custom\"\nsource.points = [[0.0, 0.0, 0.0]]\n\
             target.points = [[1e-6, 0.0, 0.0], [2e-6, 0.0, 0.0]]\n",
        )
        .unwrap();
        let (code, _) = run_cli(&["plan", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
        assert_eq!(code, EXIT_INFEASIBLE);
    }

    #[test]
    fn landscape_to_stdout() {
        let (code, text) = run_cli(&["landscape", "--a-steps", "3", "--dphi-steps", "4"]);
        assert_eq!(code, EXIT_OK);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "a,dphi,intensity");
        assert_eq!(lines.len(), 1 + 12);
    }

    #[test]
    fn error_classes_map_to_exit_codes() {
        let frame = Error::Frame {
            frame: 3,
            source: Box::new(Error::DarkTrap {
                trap: 0,
                amplitude: 0.0,
                floor: 1e-15,
            }),
        };
        assert_eq!(exit_code(&frame), EXIT_SOLVER);
        assert_eq!(exit_code(&Error::Infeasible { sources: 1, targets: 2 }), EXIT_INFEASIBLE);
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_CONFIG);
    }
}
