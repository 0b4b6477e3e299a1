//! 10×10 source array at 79% filling compacted into an 8×8 target block.

use std::time::Instant;

use holoshift::geometry::{instantiate_task, OpticalConfig, TaskSpec};
use holoshift::planner::{plan_task, CostKind};
use holoshift::sequence::{run_sequence, SequenceOptions, SolverKind};
use holoshift::units::MICRON;

fn main() -> holoshift::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let config = OpticalConfig::desk();
    let instance = instantiate_task(&TaskSpec::reconfig_2d_desk(seed))?;
    let plan = plan_task(&instance, 0.1 * MICRON, CostKind::Distance)?;
    let d = plan.displacement();
    println!(
        "{} traps, {} steps, mean displacement {:.2} um, max {:.2} um",
        plan.trap_count(),
        plan.frames,
        d.mean / MICRON,
        d.max / MICRON
    );

    let options = SequenceOptions::default();
    for kind in [SolverKind::Wgs, SolverKind::Wpgs] {
        let start = Instant::now();
        let run = run_sequence(&config, &plan, kind, &options)?;
        let m = &run.metrics;
        let times = run.sequence.solve_times();
        println!(
            "{kind:>4}: dphi std {:.4}, min I/I0 {:.3}, below {:?}: {:?}, min nu {:.4}, {:.2} ms/frame, total {:.1} s",
            m.phase.std,
            m.transition.min,
            m.transition.thresholds,
            m.transition.fraction_below.iter().map(|f| format!("{:.2}%", 100.0 * f)).collect::<Vec<_>>(),
            m.min_uniformity,
            1e3 * times[1..].iter().sum::<f64>() / (times.len() - 1) as f64,
            start.elapsed().as_secs_f64(),
        );
    }
    Ok(())
}
