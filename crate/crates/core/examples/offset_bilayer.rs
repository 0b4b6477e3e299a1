//! Two laterally offset planes 20 um apart with atoms exchanged between them
//! and trap-dependent target intensities.

use holoshift::geometry::{instantiate_task, OpticalConfig, TaskSpec};
use holoshift::planner::{plan_task, CostKind};
use holoshift::sequence::{run_sequence, SequenceOptions, SolverKind};
use holoshift::units::MICRON;

fn main() -> holoshift::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let instance = instantiate_task(&TaskSpec::offset_bilayer_desk(seed))?;
    let crossing = instance.required.iter().filter(|r| **r).count();
    let plan = plan_task(&instance, 0.1 * MICRON, CostKind::Distance)?;
    println!("{} traps, {} interlayer moves, {} steps", plan.trap_count(), crossing, plan.frames);

    let targets = plan.intensities();
    let run = run_sequence(&OpticalConfig::desk(), &plan, SolverKind::Wpgs, &SequenceOptions::default())?;
    // |E_n| / |E_tar,n| should be the same for every trap
    let spread = |i: &[f64]| {
        let q: Vec<f64> = i.iter().zip(&targets).map(|(a, t)| (a / t).sqrt()).collect();
        let mean = q.iter().sum::<f64>() / q.len() as f64;
        let (lo, hi) = q.iter().fold((f64::MAX, f64::MIN), |(l, h), &x| (l.min(x), h.max(x)));
        (hi - lo) / mean
    };
    let spreads: Vec<f64> = run.sequence.frames.iter().map(|f| spread(&f.field.intensities())).collect();
    println!(
        "amplitude-ratio spread: first {:.2}%, last {:.2}%, worst {:.2}%",
        100.0 * spreads[0],
        100.0 * spreads[spreads.len() - 1],
        100.0 * spreads.iter().cloned().fold(0.0, f64::max)
    );
    println!("dphi std {:.4}, min I/I0 {:.3}", run.metrics.phase.std, run.metrics.transition.min);
    Ok(())
}
