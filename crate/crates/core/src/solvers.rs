//! Hologram solvers.
//!
//! [`wpgs_solve`] alternates a weight step, an exact complex-scale step and a
//! back-propagation phase step so the realized trap field tracks a prescribed
//! complex target up to one global complex factor. [`wgs_solve`] is the
//! amplitude-only weighted Gerchberg-Saxton baseline: the target phase is
//! replaced every iteration by whatever phase the traps currently have.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::propagation::{PhaseMask, SeparablePropagator, TrapField};

/// Relative amplitude below which a trap counts as dark.
pub const DARK_FLOOR: f64 = 1e-15;

/// Per-trap target intensity and phase for one solve.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSpec {
    pub intensity: Vec<f64>,
    pub phase: Vec<f64>,
}

impl TargetSpec {
    pub fn new(intensity: Vec<f64>, phase: Vec<f64>) -> Result<Self> {
        if intensity.len() != phase.len() {
            return Err(Error::dims(intensity.len(), phase.len()));
        }
        if intensity.is_empty() || intensity.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::Invalid("target intensities must be positive".into()));
        }
        Ok(TargetSpec { intensity, phase })
    }

    /// Uniform unit intensity with zero phase.
    pub fn uniform(n: usize) -> Self {
        TargetSpec {
            intensity: vec![1.0; n],
            phase: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.intensity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intensity.is_empty()
    }

    pub fn amplitudes(&self) -> Vec<f64> {
        self.intensity.iter().map(|i| i.sqrt()).collect()
    }

    /// `√I ⊙ e^{iφ}`.
    pub fn field(&self) -> Vec<Complex64> {
        self.intensity
            .iter()
            .zip(&self.phase)
            .map(|(i, p)| Complex64::from_polar(i.sqrt(), *p))
            .collect()
    }
}

/// Positive per-trap weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector(pub Vec<f64>);

impl WeightVector {
    pub fn ones(n: usize) -> Self {
        WeightVector(vec![1.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().sum::<f64>() / self.0.len() as f64
    }

    /// Divide by the arithmetic mean.
    pub fn normalized(mut self) -> Self {
        let m = self.mean();
        self.0.iter_mut().for_each(|w| *w /= m);
        self
    }
}

/// Settings for a sequence of solves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    /// Phase-constrained iterations per frame.
    pub iterations: usize,
    /// Baseline iterations per frame.
    pub wgs_iterations: usize,
    /// Baseline iterations used to produce frame 0 of a constrained run.
    pub warmup_iterations: usize,
    /// Relaxation factor β in [0, 1).
    pub over_relaxation: f64,
    /// Number of final iterations of a solve that use the relaxed weights.
    pub relax_last_iters: usize,
    /// Relaxation engages once the remaining frames are at most this fraction of the sequence.
    pub relax_tail_fraction: f64,
    /// Relaxation engages only for at least this many traps.
    pub relax_min_traps: usize,
    /// Seed for the initial mask.
    pub seed: u64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            iterations: 5,
            wgs_iterations: 26,
            warmup_iterations: 26,
            over_relaxation: 0.85,
            relax_last_iters: 1,
            relax_tail_fraction: 0.1,
            relax_min_traps: 0,
            seed: 0,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.wgs_iterations == 0 {
            return Err(Error::Config("iteration counts must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.over_relaxation) {
            return Err(Error::Config(format!(
                "over_relaxation must lie in [0, 1), got {}",
                self.over_relaxation
            )));
        }
        if !(0.0..=1.0).contains(&self.relax_tail_fraction) {
            return Err(Error::Config("relax_tail_fraction must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Whether frame `frame` of `frames` (the last index) relaxes its weights.
    pub fn relax_at(&self, frame: usize, frames: usize, traps: usize) -> bool {
        if traps < self.relax_min_traps || self.relax_last_iters == 0 || frames == 0 {
            return false;
        }
        let remaining = (frames - frame.min(frames)) as f64 / frames as f64;
        remaining <= self.relax_tail_fraction
    }
}

/// Late-stage weight relaxation inside one solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Relaxation {
    pub beta: f64,
    pub last_iters: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub iterations: usize,
    pub relaxation: Option<Relaxation>,
}

impl SolveOptions {
    pub fn iterations(iterations: usize) -> Self {
        SolveOptions {
            iterations,
            relaxation: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub mask: PhaseMask,
    pub weights: WeightVector,
    /// Field of the returned mask.
    pub field: TrapField,
    /// Objective after each iteration's weight and scale steps.
    pub objective: Vec<f64>,
    pub scale: Complex64,
    /// Pixels with undefined phase in the last phase step.
    pub dark_pixels: usize,
}

impl SolveResult {
    pub fn phases(&self) -> Vec<f64> {
        self.field.phases()
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        Err(Error::dims(expected, got))
    } else {
        Ok(())
    }
}

/// Unnormalized multiplicative update `w ⊙ |E_tar| / |E|`.
pub fn weight_update_raw(w: &WeightVector, field: &TrapField, target_amplitude: &[f64]) -> Result<WeightVector> {
    check_len(w.len(), field.len())?;
    check_len(w.len(), target_amplitude.len())?;
    let mags = field.magnitudes();
    let peak = mags.iter().cloned().fold(0.0, f64::max);
    let floor = DARK_FLOOR * peak;
    for (trap, &m) in mags.iter().enumerate() {
        if !(m > floor) {
            return Err(Error::DarkTrap {
                trap,
                amplitude: m,
                floor,
            });
        }
    }
    Ok(WeightVector(
        w.0.iter()
            .zip(target_amplitude)
            .zip(&mags)
            .map(|((w, t), m)| w * t / m)
            .collect(),
    ))
}

/// Multiplicative amplitude-equalizing update followed by mean normalization.
pub fn weight_update(w: &WeightVector, field: &TrapField, target_amplitude: &[f64]) -> Result<WeightVector> {
    Ok(weight_update_raw(w, field, target_amplitude)?.normalized())
}

/// `w̃_prev + β (w̃_new − w_prev)`.
pub fn over_relax(w_prev: &WeightVector, w_tilde_prev: &WeightVector, w_tilde_new: &WeightVector, beta: f64) -> WeightVector {
    WeightVector(
        w_tilde_prev
            .0
            .iter()
            .zip(&w_tilde_new.0)
            .zip(&w_prev.0)
            .map(|((tp, tn), wp)| tp + beta * (tn - wp))
            .collect(),
    )
}

/// Least-squares complex scale `E_tar† (W E) / ‖E_tar‖²`.
pub fn scale_update(field: &TrapField, weights: &WeightVector, target: &[Complex64]) -> Complex64 {
    let mut num = Complex64::new(0.0, 0.0);
    let mut den = 0.0;
    for ((e, w), t) in field.amplitudes.iter().zip(&weights.0).zip(target) {
        num += t.conj() * (e * *w);
        den += t.norm_sqr();
    }
    num / den
}

/// `‖W E − s E_tar‖²`.
pub fn objective(field: &TrapField, weights: &WeightVector, scale: Complex64, target: &[Complex64]) -> f64 {
    field
        .amplitudes
        .iter()
        .zip(&weights.0)
        .zip(target)
        .map(|((e, w), t)| (e * *w - scale * t).norm_sqr())
        .sum()
}

/// `‖(I − P_tar)(W E)‖²` with `P_tar` the orthogonal projector onto `E_tar`.
pub fn projective_objective(field: &TrapField, weights: &WeightVector, target: &[Complex64]) -> f64 {
    let we: Vec<Complex64> = field.amplitudes.iter().zip(&weights.0).map(|(e, w)| e * *w).collect();
    let norm2: f64 = target.iter().map(|t| t.norm_sqr()).sum();
    let overlap: Complex64 = target.iter().zip(&we).map(|(t, x)| t.conj() * x).sum();
    we.iter()
        .zip(target)
        .map(|(x, t)| (x - t * overlap / norm2).norm_sqr())
        .sum()
}

/// Back-propagate `w ⊙ s E_tar` and keep the phase.
pub fn phase_step(
    prop: &SeparablePropagator,
    weights: &WeightVector,
    scale: Complex64,
    target: &[Complex64],
) -> Result<(PhaseMask, usize)> {
    check_len(prop.trap_count(), target.len())?;
    let b: Vec<Complex64> = prop
        .c
        .iter()
        .zip(&weights.0)
        .zip(target)
        .map(|((c, w), t)| c.conj() * (scale * t * *w))
        .collect();
    prop.adjoint_phase(&b)
}

fn check_weights(w: &WeightVector, n: usize) -> Result<()> {
    check_len(n, w.len())?;
    if w.0.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::Invalid("initial weights must be positive".into()));
    }
    if (w.mean() - 1.0).abs() > 1e-9 {
        return Err(Error::Invalid(format!("initial weights must have unit mean, got {}", w.mean())));
    }
    Ok(())
}

/// Phase-constrained weighted solve.
pub fn wpgs_solve(
    prop: &SeparablePropagator,
    target: &TargetSpec,
    options: &SolveOptions,
    init_mask: &PhaseMask,
    init_weights: &WeightVector,
) -> Result<SolveResult> {
    let n = prop.trap_count();
    check_len(n, target.len())?;
    check_weights(init_weights, n)?;
    if options.iterations == 0 {
        return Err(Error::Config("iterations must be at least 1".into()));
    }
    let e_tar = target.field();
    let amp_tar = target.amplitudes();
    let k_total = options.iterations;

    let mut mask = init_mask.clone();
    let mut w = init_weights.clone();
    let mut w_tilde_prev = init_weights.clone();
    let mut s = Complex64::new(1.0, 0.0);
    let mut objective_trace = Vec::with_capacity(k_total);
    let mut dark_pixels = 0;

    for k in 1..=k_total {
        let e = prop.forward(&mask)?;
        let w_tilde = weight_update(&w, &e, &amp_tar)?;
        let relax = options
            .relaxation
            .filter(|r| k + r.last_iters > k_total);
        w = match relax {
            Some(r) => {
                let relaxed = over_relax(&w, &w_tilde_prev, &w_tilde, r.beta);
                // a large step could push a weight through zero
                if relaxed.0.iter().all(|v| *v > 0.0) {
                    relaxed
                } else {
                    w_tilde.clone()
                }
            }
            None => w_tilde.clone(),
        };
        w_tilde_prev = w_tilde;
        s = scale_update(&e, &w, &e_tar);
        objective_trace.push(objective(&e, &w, s, &e_tar));
        let (next, dark) = phase_step(prop, &w, s, &e_tar)?;
        mask = next;
        dark_pixels = dark;
    }

    let field = prop.forward(&mask)?;
    Ok(SolveResult {
        mask,
        weights: w,
        field,
        objective: objective_trace,
        scale: s,
        dark_pixels,
    })
}

/// Amplitude-only weighted Gerchberg-Saxton baseline.
pub fn wgs_solve(
    prop: &SeparablePropagator,
    target_intensity: &[f64],
    iterations: usize,
    init_mask: &PhaseMask,
    init_weights: &WeightVector,
) -> Result<SolveResult> {
    let n = prop.trap_count();
    check_len(n, target_intensity.len())?;
    check_weights(init_weights, n)?;
    if iterations == 0 {
        return Err(Error::Config("iterations must be at least 1".into()));
    }
    if target_intensity.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Invalid("target intensities must be positive".into()));
    }
    let amp_tar: Vec<f64> = target_intensity.iter().map(|i| i.sqrt()).collect();
    let one = Complex64::new(1.0, 0.0);

    let mut mask = init_mask.clone();
    let mut w = init_weights.clone();
    let mut objective_trace = Vec::with_capacity(iterations);
    let mut dark_pixels = 0;

    for _ in 0..iterations {
        let e = prop.forward(&mask)?;
        w = weight_update(&w, &e, &amp_tar)?;
        // the target phase follows the current trap phase
        let e_tar: Vec<Complex64> = e
            .amplitudes
            .iter()
            .zip(&amp_tar)
            .map(|(z, a)| Complex64::from_polar(*a, z.arg()))
            .collect();
        objective_trace.push(objective(&e, &w, one, &e_tar));
        let (next, dark) = phase_step(prop, &w, one, &e_tar)?;
        mask = next;
        dark_pixels = dark;
    }

    let field = prop.forward(&mask)?;
    Ok(SolveResult {
        mask,
        weights: w,
        field,
        objective: objective_trace,
        scale: one,
        dark_pixels,
    })
}

/// Uniform random phases in [0, 2π).
pub fn random_mask(grid_x: usize, grid_y: usize, seed: u64) -> PhaseMask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PhaseMask::from_fn(grid_x, grid_y, |_| rng.gen_range(0.0..std::f64::consts::TAU))
}
