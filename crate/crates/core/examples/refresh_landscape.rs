//! Intensity of a trap while the modulator relaxes between two holograms:
//! the two-frame model on a grid, then the exact field against its expansions.

use std::f64::consts::{PI, TAU};

use holoshift::geometry::{build_lattice, OpticalConfig};
use holoshift::propagation::{build_separable, PhaseMask};
use holoshift::transient::{
    excursions, intensity_model, mean_sq_excursion, transient_exact, transient_leading, transient_second,
};
use holoshift::units::MICRON;

fn main() -> holoshift::Result<()> {
    println!("I(a, dphi) / I0 for equal-intensity frames");
    print!("{:>6}", "a\\dphi");
    let dphis: Vec<f64> = (0..=6).map(|k| PI * k as f64 / 6.0).collect();
    for d in &dphis {
        print!("{:>8.3}", d);
    }
    println!();
    for k in 0..=10 {
        let a = 1.0 - k as f64 / 10.0;
        print!("{a:>6.1}");
        for &d in &dphis {
            print!("{:>8.3}", intensity_model(a, d));
        }
        println!();
    }

    let config = OpticalConfig::square(48);
    let layout = build_lattice([3, 3], 5.0 * MICRON, [0.0, 0.0], 0.0)?;
    let prop = build_separable(&config, &layout)?;
    let base = PhaseMask::from_fn(48, 48, |(i, j)| ((i * 31 + j * 17) % 23) as f64 / 23.0 * TAU);
    println!("\nexcursion   <dphi^2>   |exact-leading|   |exact-second|   (a = 0.5)");
    for scale in [0.02, 0.05, 0.1, 0.2, 0.3] {
        let next = PhaseMask::from_fn(48, 48, |(i, j)| {
            base.phases()[[i, j]] + scale * (((i * 5 + j * 3) % 7) as f64 / 3.0 - 1.0)
        });
        let m = mean_sq_excursion(&excursions(&base, &next)?);
        let (f0, f1) = (prop.forward(&base)?, prop.forward(&next)?);
        let exact = transient_exact(&prop, &base, &next, 0.5)?;
        let lead = transient_leading(&f0, &f1, 0.5)?;
        let second = transient_second(&f0, &f1, 0.5, m)?;
        println!(
            "{scale:>9.2} {m:>10.2e} {:>17.3e} {:>16.3e}",
            exact.distance(&lead),
            exact.distance(&second)
        );
    }
    Ok(())
}
