//! Trap fields while the modulator relaxes from one hologram to the next.
//!
//! Each pixel follows φ_j(a) = φ_j^(l) + (1 − a)·wrap(Δφ_j) as the relaxation
//! factor `a` falls from 1 to 0. The exact field and two closed-form
//! approximations built from the endpoint fields are provided, together with
//! the per-trap intensity models used to explain interference dips.

use std::f64::consts::{PI, TAU};

use ndarray::{Array2, Zip};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{OpticalConfig, TrapLayout};
use crate::propagation::{build_separable, PhaseMask, SeparablePropagator, TrapField};

/// Below this |Δφ| the sine ratios are replaced by their limits.
pub const SMALL_EXCURSION: f64 = 1e-6;

/// Wrap into (−π, π]; an input of exactly ±π maps to +π.
pub fn wrap(x: f64) -> f64 {
    let r = (x + PI).rem_euclid(TAU) - PI;
    if r <= -PI {
        r + TAU
    } else {
        r
    }
}

fn check_same(a: &PhaseMask, b: &PhaseMask) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::dims(format!("{:?}", a.dims()), format!("{:?}", b.dims())));
    }
    Ok(())
}

fn check_a(a: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&a) {
        return Err(Error::Invalid(format!("relaxation factor {a} outside [0, 1]")));
    }
    Ok(())
}

/// Wrapped per-pixel excursion φ^(l+1) − φ^(l).
pub fn excursions(mask_l: &PhaseMask, mask_l1: &PhaseMask) -> Result<Array2<f64>> {
    check_same(mask_l, mask_l1)?;
    let mut out = mask_l1.phases() - mask_l.phases();
    out.mapv_inplace(wrap);
    Ok(out)
}

pub fn pixel_interpolate(mask_l: &PhaseMask, mask_l1: &PhaseMask, a: f64) -> Result<PhaseMask> {
    check_a(a)?;
    let d = excursions(mask_l, mask_l1)?;
    PhaseMask::new(mask_l.phases() + &(d * (1.0 - a)))
}

/// e^{i(φ + (1−a)Δ)} written as e^{iφ}·sin(aΔ)/sinΔ + e^{i(φ+Δ)}·sin((1−a)Δ)/sinΔ.
fn interpolated_phasor(phi_l: f64, phi_l1: f64, delta: f64, a: f64) -> Complex64 {
    if delta.abs() < SMALL_EXCURSION {
        return Complex64::from_polar(a, phi_l) + Complex64::from_polar(1.0 - a, phi_l1);
    }
    let s = delta.sin();
    if s.abs() < 1e-3 {
        // ratios blow up near Δ = π
        return Complex64::from_polar(1.0, phi_l + (1.0 - a) * delta);
    }
    Complex64::from_polar((a * delta).sin() / s, phi_l) + Complex64::from_polar(((1.0 - a) * delta).sin() / s, phi_l1)
}

/// Exact transient field through the two-hologram decomposition.
pub fn transient_exact(prop: &SeparablePropagator, mask_l: &PhaseMask, mask_l1: &PhaseMask, a: f64) -> Result<TrapField> {
    check_a(a)?;
    let d = excursions(mask_l, mask_l1)?;
    let mut pixels = Array2::<Complex64>::zeros(mask_l.dims());
    Zip::from(&mut pixels)
        .and(mask_l.phases())
        .and(mask_l1.phases())
        .and(&d)
        .and(prop.illumination())
        .for_each(|p, &pl, &pl1, &dl, &amp| *p = interpolated_phasor(pl, pl1, dl, a) * amp);
    prop.forward_field(&pixels)
}

fn combine(field_l: &TrapField, field_l1: &TrapField, cl: f64, cl1: f64) -> Result<TrapField> {
    if field_l.len() != field_l1.len() {
        return Err(Error::dims(field_l.len(), field_l1.len()));
    }
    Ok(TrapField::new(
        field_l
            .amplitudes
            .iter()
            .zip(&field_l1.amplitudes)
            .map(|(x, y)| x * cl + y * cl1)
            .collect(),
    ))
}

/// `a E^(l) + (1 − a) E^(l+1)`.
pub fn transient_leading(field_l: &TrapField, field_l1: &TrapField, a: f64) -> Result<TrapField> {
    check_a(a)?;
    combine(field_l, field_l1, a, 1.0 - a)
}

/// Amplitude renormalization (α^(l), α^(l+1)) for a given mean squared excursion.
pub fn alphas(a: f64, mean_sq: f64) -> (f64, f64) {
    (1.0 + (1.0 - a * a) * mean_sq / 6.0, 1.0 + a * (2.0 - a) * mean_sq / 6.0)
}

/// `a α^(l) E^(l) + (1 − a) α^(l+1) E^(l+1)`.
pub fn transient_second(field_l: &TrapField, field_l1: &TrapField, a: f64, mean_sq: f64) -> Result<TrapField> {
    check_a(a)?;
    if !(mean_sq >= 0.0) {
        return Err(Error::Invalid("mean squared excursion must be non-negative".into()));
    }
    let (al, al1) = alphas(a, mean_sq);
    combine(field_l, field_l1, a * al, (1.0 - a) * al1)
}

/// ⟨Δφ²⟩ over all pixels.
pub fn mean_sq_excursion(excursions: &Array2<f64>) -> f64 {
    excursions.iter().map(|d| d * d).sum::<f64>() / excursions.len() as f64
}

/// ε_j = Δφ_j² − ⟨Δφ²⟩.
pub fn excursion_fluctuation(excursions: &Array2<f64>) -> Array2<f64> {
    let m = mean_sq_excursion(excursions);
    excursions.mapv(|d| d * d - m)
}

/// Cauchy–Schwarz bound `‖A_n‖ ‖ε‖` on the residual of the second-order form.
pub fn residual_bound(row_norms: &[f64], excursions: &Array2<f64>) -> Vec<f64> {
    let eps = excursion_fluctuation(excursions);
    let norm = eps.iter().map(|e| e * e).sum::<f64>().sqrt();
    row_norms.iter().map(|r| r * norm).collect()
}

/// Residual `R_n = Σ_j A_nj e^{iφ_j} ε_j` for one endpoint mask.
pub fn residual_direct(prop: &SeparablePropagator, mask: &PhaseMask, excursions: &Array2<f64>) -> Result<TrapField> {
    let eps = excursion_fluctuation(excursions);
    let mut pixels = mask.unit_field();
    Zip::from(&mut pixels)
        .and(prop.illumination())
        .and(&eps)
        .for_each(|p, &amp, &e| *p *= amp * e);
    prop.forward_field(&pixels)
}

/// Normalized two-frame intensity `|a + (1 − a) e^{iΔφ}|²`.
pub fn intensity_model(a: f64, dphi: f64) -> f64 {
    a * a + (1.0 - a) * (1.0 - a) + 2.0 * a * (1.0 - a) * dphi.cos()
}

/// Trap intensity from endpoint intensities and relative phase.
pub fn transient_intensity(i_l: f64, i_l1: f64, dphi: f64, a: f64) -> f64 {
    transient_intensity_second(i_l, i_l1, dphi, a, 0.0)
}

/// Trap intensity with the renormalized amplitudes.
pub fn transient_intensity_second(i_l: f64, i_l1: f64, dphi: f64, a: f64, mean_sq: f64) -> f64 {
    let (al, al1) = alphas(a, mean_sq);
    a * a * al * al * i_l
        + (1.0 - a) * (1.0 - a) * al1 * al1 * i_l1
        + 2.0 * a * (1.0 - a) * al * al1 * (i_l * i_l1).sqrt() * dphi.cos()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TransientOrder {
    Exact,
    #[default]
    Leading,
    Second,
}

impl std::str::FromStr for TransientOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(TransientOrder::Exact),
            "leading" => Ok(TransientOrder::Leading),
            "second" => Ok(TransientOrder::Second),
            other => Err(Error::Config(format!("unknown transient order `{other}`"))),
        }
    }
}

/// Single-exponential pixel relaxation, sampled uniformly in `a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefreshModel {
    /// Relaxation time constant in seconds.
    pub tau: f64,
    pub samples_per_refresh: usize,
    pub order: TransientOrder,
}

impl Default for RefreshModel {
    fn default() -> Self {
        RefreshModel {
            tau: 1e-3,
            samples_per_refresh: 21,
            order: TransientOrder::Leading,
        }
    }
}

impl RefreshModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::Config("tau must be positive".into()));
        }
        if self.samples_per_refresh < 2 {
            return Err(Error::Config("samples_per_refresh must be at least 2".into()));
        }
        Ok(())
    }

    /// Sampled relaxation factors from 1 down to 0.
    pub fn a_values(&self) -> Vec<f64> {
        let m = self.samples_per_refresh - 1;
        (0..=m).map(|k| 1.0 - k as f64 / m as f64).collect()
    }

    /// Elapsed time for a relaxation factor; infinite at `a = 0`.
    pub fn time_of(&self, a: f64) -> f64 {
        -self.tau * a.ln()
    }
}

#[derive(Debug, Clone)]
pub struct TransientSample {
    pub a: f64,
    pub field: TrapField,
    /// Per-trap I/I₀.
    pub ratio: Vec<f64>,
}

/// Endpoint fields and excursion statistics shared by all samples of one refresh.
#[derive(Debug, Clone)]
pub struct RefreshContext {
    pub field_l: TrapField,
    pub field_l1: TrapField,
    pub mean_sq: f64,
}

impl RefreshContext {
    pub fn new(prop: &SeparablePropagator, mask_l: &PhaseMask, mask_l1: &PhaseMask) -> Result<Self> {
        let d = excursions(mask_l, mask_l1)?;
        Ok(RefreshContext {
            field_l: prop.forward(mask_l)?,
            field_l1: prop.forward(mask_l1)?,
            mean_sq: mean_sq_excursion(&d),
        })
    }
}

/// Sample the transient across one refresh.
pub fn sample_refresh(
    prop: &SeparablePropagator,
    mask_l: &PhaseMask,
    mask_l1: &PhaseMask,
    model: &RefreshModel,
    i0: &[f64],
) -> Result<Vec<TransientSample>> {
    model.validate()?;
    if i0.len() != prop.trap_count() {
        return Err(Error::dims(prop.trap_count(), i0.len()));
    }
    if i0.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Invalid("reference intensities must be positive".into()));
    }
    let ctx = RefreshContext::new(prop, mask_l, mask_l1)?;
    model
        .a_values()
        .into_iter()
        .map(|a| {
            let field = match model.order {
                TransientOrder::Exact => transient_exact(prop, mask_l, mask_l1, a)?,
                TransientOrder::Leading => transient_leading(&ctx.field_l, &ctx.field_l1, a)?,
                TransientOrder::Second => transient_second(&ctx.field_l, &ctx.field_l1, a, ctx.mean_sq)?,
            };
            let ratio = field.intensities().iter().zip(i0).map(|(i, r)| i / r).collect();
            Ok(TransientSample { a, field, ratio })
        })
        .collect()
}

/// Endpoints of one refresh inside a moving sequence.
pub struct Transition<'a> {
    pub layout_l: &'a TrapLayout,
    pub layout_l1: &'a TrapLayout,
    pub mask_l: &'a PhaseMask,
    pub mask_l1: &'a PhaseMask,
    /// Realized fields of the two frames, each at its own trap positions.
    pub field_l: &'a TrapField,
    pub field_l1: &'a TrapField,
}

/// Sample a refresh between two frames of a sequence.
///
/// The approximate orders combine the realized endpoint fields. The exact
/// order evaluates the interpolated mask at trap positions interpolated with
/// the same factor, so both endpoints coincide with the realized fields.
pub fn sample_transition(
    config: &OpticalConfig,
    tr: &Transition<'_>,
    model: &RefreshModel,
    i0: &[f64],
) -> Result<Vec<TransientSample>> {
    model.validate()?;
    let n = tr.field_l.len();
    if tr.field_l1.len() != n || i0.len() != n || tr.layout_l.len() != n || tr.layout_l1.len() != n {
        return Err(Error::dims(n, i0.len()));
    }
    let mean_sq = match model.order {
        TransientOrder::Second => mean_sq_excursion(&excursions(tr.mask_l, tr.mask_l1)?),
        _ => 0.0,
    };
    let ratio = |field: &TrapField| -> Vec<f64> { field.intensities().iter().zip(i0).map(|(i, r)| i / r).collect() };
    let sample = |a: f64| -> Result<TransientSample> {
        let field = match model.order {
            TransientOrder::Leading => transient_leading(tr.field_l, tr.field_l1, a)?,
            TransientOrder::Second => transient_second(tr.field_l, tr.field_l1, a, mean_sq)?,
            TransientOrder::Exact => {
                let pts: Vec<[f64; 3]> = tr
                    .layout_l
                    .positions()
                    .iter()
                    .zip(tr.layout_l1.positions())
                    .map(|(p, q)| [0, 1, 2].map(|c| a * p[c] + (1.0 - a) * q[c]))
                    .collect();
                let prop = build_separable(config, &TrapLayout::from_points(&pts)?)?;
                prop.forward(&pixel_interpolate(tr.mask_l, tr.mask_l1, a)?)?
            }
        };
        Ok(TransientSample {
            a,
            ratio: ratio(&field),
            field,
        })
    };
    let a_values = model.a_values();
    if model.order == TransientOrder::Exact {
        a_values.into_par_iter().map(sample).collect()
    } else {
        a_values.into_iter().map(sample).collect()
    }
}
