//! Three planes at z = -30, 0, +30 um filled from lattices of different pitch.
//! Reports the phase stability of each plane.

use holoshift::geometry::{instantiate_task, OpticalConfig, TaskSpec};
use holoshift::planner::{plan_task, CostKind};
use holoshift::sequence::{run_sequence, SequenceOptions, SolverKind};
use holoshift::units::MICRON;

fn main() -> holoshift::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let instance = instantiate_task(&TaskSpec::three_layer_desk(seed))?;
    let plan = plan_task(&instance, 0.1 * MICRON, CostKind::Distance)?;
    println!("{} traps in {} layers, {} steps", plan.trap_count(), plan.layer_z.len(), plan.frames);

    let config = OpticalConfig::desk();
    for kind in [SolverKind::Wgs, SolverKind::Wpgs] {
        let run = run_sequence(&config, &plan, kind, &SequenceOptions::default())?;
        println!("{kind}: dphi std {:.4}, min I/I0 {:.3}", run.metrics.phase.std, run.metrics.transition.min);
        for layer in &run.metrics.layers {
            let min_nu = layer.uniformity.iter().cloned().fold(1.0, f64::min);
            println!(
                "  z = {:>5.1} um: {} traps, dphi std {:.4}, min I/I0 {:.3}, min nu {:.4}",
                layer.z / MICRON,
                layer.traps,
                layer.phase.std,
                layer.transition.min,
                min_nu
            );
        }
    }
    Ok(())
}
