//! Source-to-target matching and frame discretization on a random instance.

use holoshift::geometry::TrapLayout;
use holoshift::planner::{assign, brute_force_assign, discretize, CostKind};
use holoshift::units::MICRON;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> holoshift::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut points = |n: usize| {
        let p: Vec<[f64; 3]> = (0..n)
            .map(|_| [rng.gen_range(-15.0..15.0) * MICRON, rng.gen_range(-15.0..15.0) * MICRON, 0.0])
            .collect();
        TrapLayout::from_points(&p)
    };
    let (sources, targets) = (points(9)?, points(6)?);

    for kind in [CostKind::Distance, CostKind::Squared] {
        let fast = assign(&sources, &targets, kind)?;
        let slow = brute_force_assign(&sources, &targets, kind)?;
        println!("{kind:?}: Hungarian cost {:.6e}, exhaustive {:.6e}, unused sources {:?}", fast.cost, slow.cost, fast.unmatched);
        let plan = discretize(&fast, 0.1 * MICRON)?;
        let d = plan.displacement();
        println!(
            "  {} frames, realized max step {:.4} um, longest move {:.3} um",
            plan.frame_total(),
            plan.realized_max_step() / MICRON,
            d.max / MICRON
        );
    }
    Ok(())
}
