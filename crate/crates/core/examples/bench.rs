//! Per-frame solve time of both solvers on the 2D task, at their default
//! budgets and at twice the constrained budget.

use holoshift::geometry::{instantiate_task, OpticalConfig, TaskSpec};
use holoshift::planner::{plan_task, CostKind};
use holoshift::sequence::{bench, BenchEntry, SolverKind};
use holoshift::solvers::SolverSettings;
use holoshift::units::MICRON;

fn main() -> holoshift::Result<()> {
    let instance = instantiate_task(&TaskSpec::reconfig_2d_desk(0))?;
    let plan = plan_task(&instance, 0.1 * MICRON, CostKind::Distance)?;
    let entries = [
        BenchEntry::new(SolverKind::Wpgs, 5),
        BenchEntry::new(SolverKind::Wpgs, 10),
        BenchEntry::new(SolverKind::Wgs, 26),
    ];
    let rows = bench(&OpticalConfig::desk(), &plan, &entries, &SolverSettings::default(), 3)?;
    println!("{:<12} {:>7} {:>9} {:>11} {:>9}", "solver", "frames", "mean ms", "median ms", "dphi std");
    for r in &rows {
        println!("{:<12} {:>7} {:>9.2} {:>11.2} {:>9.4}", r.label, r.frames, r.mean_ms, r.median_ms, r.phase_std);
    }
    println!("wpgs/wgs time ratio at default budgets: {:.3}", rows[0].mean_ms / rows[2].mean_ms);
    Ok(())
}
