//! Fresnel propagation from the modulator to the trap centres.
//!
//! The kernel from pixel `(jx, jy)` to trap `n` factors into an x part and a
//! y part, so the forward map is two staged contractions
//! `E = g ⊙ c ⊙ diag(U Δ Vᵀ)` with `Δ = A₀ ⊙ e^{iφ}`. The dense matrix form is
//! kept as an oracle for small problems.

use std::f64::consts::{PI, TAU};

use ndarray::{Array1, Array2, Axis, Zip};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{OpticalConfig, TrapLayout};

/// Largest dense matrix (in complex entries) `build_dense` will allocate.
pub const DENSE_LIMIT: usize = 1 << 22;

/// SLM phase pattern, shape (grid_x, grid_y), radians.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMask {
    phases: Array2<f64>,
}

impl PhaseMask {
    pub fn zeros(grid_x: usize, grid_y: usize) -> Self {
        PhaseMask {
            phases: Array2::zeros((grid_x, grid_y)),
        }
    }

    pub fn new(phases: Array2<f64>) -> Result<Self> {
        if phases.iter().any(|p| !p.is_finite()) {
            return Err(Error::Invalid("phase mask contains non-finite values".into()));
        }
        Ok(PhaseMask { phases })
    }

    pub fn from_fn(grid_x: usize, grid_y: usize, f: impl FnMut((usize, usize)) -> f64) -> Self {
        PhaseMask {
            phases: Array2::from_shape_fn((grid_x, grid_y), f),
        }
    }

    pub fn phases(&self) -> &Array2<f64> {
        &self.phases
    }

    pub fn dims(&self) -> (usize, usize) {
        self.phases.dim()
    }

    /// Same mask with every entry in [0, 2π).
    pub fn wrapped(&self) -> PhaseMask {
        PhaseMask {
            phases: self.phases.mapv(wrap_positive),
        }
    }

    /// Add a constant to every pixel.
    pub fn shifted(&self, theta: f64) -> PhaseMask {
        PhaseMask {
            phases: self.phases.mapv(|p| p + theta),
        }
    }

    /// `e^{iφ}` per pixel.
    pub fn unit_field(&self) -> Array2<Complex64> {
        self.phases.mapv(|p| Complex64::from_polar(1.0, p))
    }
}

fn wrap_positive(p: f64) -> f64 {
    let r = p.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Complex field at each trap.
#[derive(Debug, Clone, PartialEq)]
pub struct TrapField {
    pub amplitudes: Vec<Complex64>,
}

impl TrapField {
    pub fn new(amplitudes: Vec<Complex64>) -> Self {
        TrapField { amplitudes }
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn intensities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|e| e.norm_sqr()).collect()
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|e| e.norm()).collect()
    }

    pub fn phases(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|e| e.arg()).collect()
    }

    /// Largest entrywise difference relative to the largest entry of `reference`.
    pub fn relative_error(&self, reference: &TrapField) -> f64 {
        let scale = reference.amplitudes.iter().map(|e| e.norm()).fold(0.0, f64::max);
        let diff = self
            .amplitudes
            .iter()
            .zip(&reference.amplitudes)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        if scale == 0.0 {
            diff
        } else {
            diff / scale
        }
    }

    /// Euclidean norm of the difference.
    pub fn distance(&self, other: &TrapField) -> f64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

/// Factored Fresnel kernel.
#[derive(Debug, Clone)]
pub struct SeparablePropagator {
    /// Axial phase prefactor e^{i2π(2f+z_n)/λ}.
    pub c: Array1<Complex64>,
    /// Real per-trap amplitude d²u₀/(λ(f+z_n)).
    pub gain: Array1<f64>,
    /// x kernel, N × grid_x.
    pub u: Array2<Complex64>,
    /// y kernel, N × grid_y.
    pub v: Array2<Complex64>,
    illumination: Array2<f64>,
}

/// Axial phase 2π(2f+z)/λ reduced modulo 2π before exponentiation.
fn axial_phase(focal: f64, z: f64, wavelength: f64) -> f64 {
    let cycles = (2.0 * focal + z) / wavelength;
    TAU * (cycles - cycles.floor())
}

fn trap_gain(config: &OpticalConfig, z: f64) -> f64 {
    let d = config.pixel_pitch.0;
    d * d / (config.wavelength.0 * (config.focal_length.0 + z))
}

/// Build the factored kernel for `layout` under `config`.
pub fn build_separable(config: &OpticalConfig, layout: &TrapLayout) -> Result<SeparablePropagator> {
    config.validate()?;
    let (lambda, f) = (config.wavelength.0, config.focal_length.0);
    let u_coords = config.u_coords();
    let v_coords = config.v_coords();
    let sites = layout.sites();
    let n = sites.len();

    let kernel = |coords: &[f64], along: fn(&crate::geometry::TrapSite) -> f64| {
        Array2::from_shape_fn((n, coords.len()), |(t, j)| {
            let s = &sites[t];
            let w = coords[j];
            let phase = -PI * (s.z * w * w / (lambda * f * f) + 2.0 * along(s) * w / (lambda * f));
            Complex64::from_polar(1.0, phase)
        })
    };
    let u = kernel(&u_coords, |s| s.x);
    let v = kernel(&v_coords, |s| s.y);
    let c = sites
        .iter()
        .map(|s| Complex64::from_polar(1.0, axial_phase(f, s.z, lambda)))
        .collect();
    let gain = sites.iter().map(|s| trap_gain(config, s.z)).collect();

    Ok(SeparablePropagator {
        c,
        gain,
        u,
        v,
        illumination: config.illumination_map(),
    })
}

impl SeparablePropagator {
    pub fn trap_count(&self) -> usize {
        self.c.len()
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.u.ncols(), self.v.ncols())
    }

    pub fn illumination(&self) -> &Array2<f64> {
        &self.illumination
    }

    fn check_grid(&self, dims: (usize, usize)) -> Result<()> {
        if dims != self.grid() {
            return Err(Error::dims(format!("{:?}", self.grid()), format!("{dims:?}")));
        }
        Ok(())
    }

    /// Trap field for an arbitrary complex pixel field (illumination not applied).
    pub fn forward_field(&self, pixels: &Array2<Complex64>) -> Result<TrapField> {
        self.check_grid(pixels.dim())?;
        // (N × Mx)(Mx × My) then a row-wise dot with V
        let partial = self.u.dot(pixels);
        let mut out = Vec::with_capacity(self.trap_count());
        for (t, (row, vrow)) in partial.outer_iter().zip(self.v.outer_iter()).enumerate() {
            let s: Complex64 = row.iter().zip(vrow.iter()).map(|(a, b)| a * b).sum();
            out.push(self.c[t] * self.gain[t] * s);
        }
        Ok(TrapField::new(out))
    }

    /// Trap field produced by `mask` under the configured illumination.
    pub fn forward(&self, mask: &PhaseMask) -> Result<TrapField> {
        self.check_grid(mask.dims())?;
        let mut pixels = mask.unit_field();
        Zip::from(&mut pixels)
            .and(&self.illumination)
            .for_each(|p, &a| *p *= a);
        self.forward_field(&pixels)
    }

    /// Back-propagated pixel field `U† diag(b) V*`.
    pub fn adjoint_field(&self, b: &[Complex64]) -> Result<Array2<Complex64>> {
        if b.len() != self.trap_count() {
            return Err(Error::dims(self.trap_count(), b.len()));
        }
        let mut weighted = self.v.mapv(|z| z.conj());
        for (mut row, &bn) in weighted.axis_iter_mut(Axis(0)).zip(b) {
            row.mapv_inplace(|z| z * bn);
        }
        let uh = self.u.t().mapv(|z| z.conj());
        Ok(uh.dot(&weighted))
    }

    /// Phase of the back-propagated field. Pixels where the field is exactly
    /// zero get phase 0; their count is returned alongside the mask.
    pub fn adjoint_phase(&self, b: &[Complex64]) -> Result<(PhaseMask, usize)> {
        let field = self.adjoint_field(b)?;
        let mut dark = 0usize;
        let phases = field.mapv(|z| {
            if z.re == 0.0 && z.im == 0.0 {
                dark += 1;
                0.0
            } else {
                z.arg()
            }
        });
        Ok((PhaseMask { phases }, dark))
    }

    /// `‖row n of A‖₂` for every trap.
    pub fn row_norms(&self) -> Vec<f64> {
        let illum = self.illumination.iter().map(|a| a * a).sum::<f64>().sqrt();
        self.gain.iter().map(|g| g * illum).collect()
    }
}

/// Explicit N × M propagation matrix, M flattened row-major over (grid_x, grid_y).
#[derive(Debug, Clone)]
pub struct DensePropagator {
    pub a: Array2<Complex64>,
    grid: (usize, usize),
}

/// Dense propagation matrix built straight from the 2D pixel coordinates.
pub fn build_dense(config: &OpticalConfig, layout: &TrapLayout) -> Result<DensePropagator> {
    config.validate()?;
    let (gx, gy) = (config.grid_x, config.grid_y);
    let m = gx * gy;
    let entries = m * layout.len();
    if entries > DENSE_LIMIT {
        return Err(Error::TooLarge {
            entries,
            limit: DENSE_LIMIT,
        });
    }
    let (lambda, f, d) = (config.wavelength.0, config.focal_length.0, config.pixel_pitch.0);
    let illum = config.illumination_map();
    let (cx, cy) = ((gx as f64 - 1.0) / 2.0, (gy as f64 - 1.0) / 2.0);
    let sites = layout.sites();
    let a = Array2::from_shape_fn((sites.len(), m), |(n, j)| {
        let (jx, jy) = (j / gy, j % gy);
        let xj = (jx as f64 - cx) * d;
        let yj = (jy as f64 - cy) * d;
        let s = &sites[n];
        let offset = PI * s.z * (xj * xj + yj * yj) / (lambda * f * f)
            + 2.0 * PI * (s.x * xj + s.y * yj) / (lambda * f);
        let prefactor = d * d / (lambda * (f + s.z));
        let cycles = (2.0 * f + s.z) / lambda;
        let axial = TAU * (cycles - cycles.floor());
        Complex64::from_polar(prefactor * illum[[jx, jy]], axial - offset)
    });
    Ok(DensePropagator { a, grid: (gx, gy) })
}

impl DensePropagator {
    pub fn forward_field(&self, pixels: &Array2<Complex64>) -> Result<TrapField> {
        if pixels.dim() != self.grid {
            return Err(Error::dims(format!("{:?}", self.grid), format!("{:?}", pixels.dim())));
        }
        let flat: Array1<Complex64> = pixels.iter().copied().collect();
        Ok(TrapField::new(self.a.dot(&flat).to_vec()))
    }

    /// `E = A e^{iφ}`.
    pub fn forward(&self, mask: &PhaseMask) -> Result<TrapField> {
        self.forward_field(&mask.unit_field())
    }
}
