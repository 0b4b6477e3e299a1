//! Oracle suites: each fast path against an independent slow route.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::geometry::{OpticalConfig, TrapLayout};
use crate::planner::{assign, brute_force_assign, CostKind};
use crate::propagation::{build_dense, build_separable, PhaseMask, TrapField};
use crate::solvers::{objective, projective_objective, scale_update, WeightVector};
use crate::transient::{mean_sq_excursion, excursions, pixel_interpolate, transient_exact, transient_leading};
use crate::units::MICRON;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub name: String,
    pub cases: usize,
    /// Worst observed discrepancy in the suite's own measure.
    pub worst: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl SuiteReport {
    fn new(name: &str, cases: usize, worst: f64, tolerance: f64) -> Self {
        SuiteReport {
            name: name.to_string(),
            cases,
            worst,
            tolerance,
            passed: worst <= tolerance,
        }
    }
}

fn random_mask(gx: usize, gy: usize, rng: &mut ChaCha8Rng) -> PhaseMask {
    PhaseMask::from_fn(gx, gy, |_| rng.gen_range(0.0..TAU))
}

/// Up to `max_traps` traps within ±40 µm laterally on the planes z ∈ {−30, 0, 30} µm.
pub fn random_layout(rng: &mut ChaCha8Rng, max_traps: usize) -> Result<TrapLayout> {
    let n = rng.gen_range(1..=max_traps);
    let points: Vec<[f64; 3]> = (0..n)
        .map(|_| {
            let z = [-30.0, 0.0, 30.0][rng.gen_range(0..3)];
            [
                rng.gen_range(-40.0..40.0) * MICRON,
                rng.gen_range(-40.0..40.0) * MICRON,
                z * MICRON,
            ]
        })
        .collect();
    TrapLayout::from_points(&points)
}

/// Separable forward against the dense matrix on random grids up to 64 × 64.
pub fn propagation_suite(cases: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let (gx, gy) = (rng.gen_range(4..=64), rng.gen_range(4..=64));
        let mut cfg = OpticalConfig::square(gx);
        cfg.grid_y = gy;
        let layout = random_layout(&mut rng, 16)?;
        let mask = random_mask(gx, gy, &mut rng);
        let fast = build_separable(&cfg, &layout)?.forward(&mask)?;
        let slow = build_dense(&cfg, &layout)?.forward(&mask)?;
        worst = worst.max(fast.relative_error(&slow));
    }
    Ok(SuiteReport::new("propagation: separable vs dense", cases, worst, 1e-10))
}

/// Decomposed transient field against a forward pass of the interpolated mask.
pub fn transient_suite(cases: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let g = rng.gen_range(8..=48);
        let cfg = OpticalConfig::square(g);
        let layout = random_layout(&mut rng, 12)?;
        let prop = build_separable(&cfg, &layout)?;
        let (m0, m1) = (random_mask(g, g, &mut rng), random_mask(g, g, &mut rng));
        for k in 1..10 {
            let a = k as f64 / 10.0;
            let exact = transient_exact(&prop, &m0, &m1, a)?;
            let direct = prop.forward(&pixel_interpolate(&m0, &m1, a)?)?;
            worst = worst.max(exact.relative_error(&direct));
        }
    }
    Ok(SuiteReport::new("transient: decomposition vs interpolated forward", cases, worst, 1e-12))
}

/// Leading-order error ‖exact − leading‖ against ⟨Δφ²⟩ for excursion scales
/// in [0.01, 0.3] rad; returns the log-log slope.
pub fn leading_order_slope(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = 32;
    let cfg = OpticalConfig::square(g);
    let layout = random_layout(&mut rng, 8)?;
    let prop = build_separable(&cfg, &layout)?;
    let base = random_mask(g, g, &mut rng);
    let shape = PhaseMask::from_fn(g, g, |_| rng.gen_range(-1.0..1.0));
    let a = 0.5;
    let scales: Vec<f64> = (0..8).map(|k| 0.01 * 30f64.powf(k as f64 / 7.0)).collect();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for s in scales {
        let next = PhaseMask::new(base.phases() + &(shape.phases() * s))?;
        let exact = transient_exact(&prop, &base, &next, a)?;
        let leading = transient_leading(&prop.forward(&base)?, &prop.forward(&next)?, a)?;
        let m = mean_sq_excursion(&excursions(&base, &next)?);
        xs.push(m.ln());
        ys.push(exact.distance(&leading).ln());
    }
    Ok(fit_slope(&xs, &ys))
}

/// Least-squares slope of y against x.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let cov: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    cov / var
}

fn random_complex(rng: &mut ChaCha8Rng, scale: f64) -> Complex64 {
    Complex64::new(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale))
}

/// Closed-form scale against random perturbations, plus the projective identity.
///
/// `worst` is the larger of the identity gap relative to ‖wE‖² and the number of
/// perturbations that beat the closed form.
pub fn scale_suite(instances: usize, perturbations: usize, seed: u64) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut beaten = 0usize;
    let mut identity_gap: f64 = 0.0;
    for _ in 0..instances {
        let n = rng.gen_range(1..=32);
        let field = TrapField::new((0..n).map(|_| random_complex(&mut rng, 1.0)).collect());
        let weights = WeightVector((0..n).map(|_| rng.gen_range(0.2..2.0)).collect()).normalized();
        let target: Vec<Complex64> = (0..n)
            .map(|_| Complex64::from_polar(rng.gen_range(0.3..1.5), rng.gen_range(0.0..TAU)))
            .collect();
        let s = scale_update(&field, &weights, &target);
        let j = objective(&field, &weights, s, &target);
        let p = projective_objective(&field, &weights, &target);
        let energy: f64 = field.amplitudes.iter().zip(&weights.0).map(|(e, w)| (e * *w).norm_sqr()).sum();
        identity_gap = identity_gap.max((j - p).abs() / energy);
        for k in 0..perturbations {
            // below ~1e-4 the increase |δ|²‖t‖² drops under the rounding of J
            let size = 10f64.powi(-((k % 5) as i32));
            let d = random_complex(&mut rng, size);
            if d != Complex64::new(0.0, 0.0) && objective(&field, &weights, s + d, &target) <= j {
                beaten += 1;
            }
        }
    }
    SuiteReport::new(
        "solvers: closed-form scale optimality",
        instances,
        identity_gap.max(beaten as f64),
        1e-10,
    )
}

/// Hungarian cost against exhaustive search on up to 7 targets.
pub fn assignment_suite(instances: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for i in 0..instances {
        let nt = rng.gen_range(1..=7);
        let ns = rng.gen_range(nt..=nt + 3);
        let mut pts = |k: usize| -> Result<TrapLayout> {
            let p: Vec<[f64; 3]> = (0..k)
                .map(|_| [rng.gen_range(-20.0..20.0) * MICRON, rng.gen_range(-20.0..20.0) * MICRON, 0.0])
                .collect();
            TrapLayout::from_points(&p)
        };
        let (sources, targets) = (pts(ns)?, pts(nt)?);
        let kind = if i % 2 == 0 { CostKind::Distance } else { CostKind::Squared };
        let fast = assign(&sources, &targets, kind)?;
        let slow = brute_force_assign(&sources, &targets, kind)?;
        worst = worst.max((fast.cost - slow.cost).abs() / slow.cost.max(1e-300));
    }
    Ok(SuiteReport::new("planner: Hungarian vs exhaustive", instances, worst, 1e-12))
}

pub fn run_all(seed: u64) -> Result<Vec<SuiteReport>> {
    let slope = leading_order_slope(seed)?;
    Ok(vec![
        propagation_suite(20, seed)?,
        transient_suite(20, seed)?,
        SuiteReport::new("transient: leading-order slope − 1", 8, (slope - 1.0).abs(), 0.15),
        scale_suite(50, 100, seed),
        assignment_suite(200, seed)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suites_pass() {
        assert!(propagation_suite(3, 1).unwrap().passed);
        assert!(transient_suite(2, 1).unwrap().passed);
        assert!(scale_suite(5, 20, 1).passed);
        assert!(assignment_suite(20, 1).unwrap().passed);
    }

    #[test]
    fn slope_of_a_line() {
        assert!((fit_slope(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]) - 2.0).abs() < 1e-12);
    }
}
