//! Trap fields of a phase mask: separable evaluation against the dense matrix,
//! and a linear grating that steers all light into one trap.

use std::f64::consts::TAU;

use holoshift::geometry::{build_lattice, OpticalConfig, TrapLayout};
use holoshift::propagation::{build_dense, build_separable, PhaseMask};
use holoshift::units::MICRON;

fn main() -> holoshift::Result<()> {
    let config = OpticalConfig::square(64);
    let layout = build_lattice([4, 4], 5.0 * MICRON, [0.0, 0.0], 30.0 * MICRON)?;
    let mask = PhaseMask::from_fn(64, 64, |(i, j)| ((i * 7 + j * 13) % 17) as f64 / 17.0 * TAU);

    let separable = build_separable(&config, &layout)?.forward(&mask)?;
    let dense = build_dense(&config, &layout)?.forward(&mask)?;
    println!("16 traps at z = 30 um, 64x64 grid");
    println!("separable vs dense relative error: {:.2e}", separable.relative_error(&dense));

    // the conjugate phase of one trap's kernel focuses the whole grid onto it
    let single = TrapLayout::from_points(&[[8.0 * MICRON, -4.0 * MICRON, 0.0]])?;
    let prop = build_separable(&config, &single)?;
    let (grating, _) = prop.adjoint_phase(&[num_complex::Complex64::new(1.0, 0.0)])?;
    let probe = TrapLayout::from_points(&[[8.0 * MICRON, -4.0 * MICRON, 0.0], [0.0, 0.0, 0.0], [-8.0 * MICRON, 4.0 * MICRON, 0.0]])?;
    let field = build_separable(&config, &probe)?.forward(&grating)?;
    let i = field.intensities();
    println!("grating to (8, -4) um: I = {:.3e} there, {:.3e} at origin, {:.3e} at mirror", i[0], i[1], i[2]);
    Ok(())
}
