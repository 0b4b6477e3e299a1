//! 3×3 array whose middle row slides 2 µm along the lower-right diagonal.
//! Compares phase stability and transient dips of the two solvers.

use holoshift::geometry::{instantiate_task, OpticalConfig, TaskSpec};
use holoshift::planner::{plan_task, CostKind};
use holoshift::sequence::{run_sequence, SequenceOptions, SolverKind};
use holoshift::units::MICRON;

fn main() -> holoshift::Result<()> {
    let config = OpticalConfig::desk();
    let task = TaskSpec::minimal_3x3();
    let instance = instantiate_task(&task)?;
    let plan = plan_task(&instance, 0.2 * MICRON, CostKind::Distance)?;
    println!("{} traps, {} transport steps", plan.trap_count(), plan.frames);

    let options = SequenceOptions::default();
    for kind in [SolverKind::Wgs, SolverKind::Wpgs] {
        let run = run_sequence(&config, &plan, kind, &options)?;
        let m = &run.metrics;
        println!(
            "{kind:>4}: dphi std {:.4} rad (max |dphi| {:.3}), min I/I0 {:.3}, below 0.96: {:.2}%, min nu {:.4}",
            m.phase.std,
            m.phase.max_abs,
            m.transition.min,
            100.0 * m.transition.fraction_below(0.96).unwrap_or(0.0),
            m.min_uniformity,
        );
    }
    Ok(())
}
