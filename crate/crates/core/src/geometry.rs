//! Optical configuration, trap layouts and the canonical rearrangement tasks.
//!
//! Coordinates: x to the right, y up, z along the optical axis, origin at the
//! focal point. Trap index order is row-major within a layer (top row first)
//! with layers in ascending z.

use std::collections::HashSet;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{Length, MICRON};

/// Per-pixel illumination amplitude on the modulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Illumination {
    #[default]
    Uniform,
    /// Gaussian beam amplitude exp(-r²/w²) centred on the modulator.
    Gaussian { waist: Length },
    /// Explicit map, row-major over (grid_x, grid_y).
    Map { values: Vec<f64> },
}

/// Modulator geometry plus wavelength and lens focal length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpticalConfig {
    pub wavelength: Length,
    pub focal_length: Length,
    pub grid_x: usize,
    pub grid_y: usize,
    pub pixel_pitch: Length,
    #[serde(default)]
    pub illumination: Illumination,
}

impl OpticalConfig {
    /// 820 nm light, f = 4 mm, 17 µm pixels on an `n × n` grid.
    pub fn square(n: usize) -> Self {
        OpticalConfig {
            wavelength: Length(820e-9),
            focal_length: Length(4e-3),
            grid_x: n,
            grid_y: n,
            pixel_pitch: Length(17e-6),
            illumination: Illumination::Uniform,
        }
    }

    /// 1024 × 1024 modulator.
    pub fn full_scale() -> Self {
        Self::square(1024)
    }

    /// 256 × 256 modulator used for desk-scale runs.
    pub fn desk() -> Self {
        Self::square(256)
    }

    pub fn pixel_count(&self) -> usize {
        self.grid_x * self.grid_y
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: Length| {
            if v.0 > 0.0 && v.0.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {}", v.0)))
            }
        };
        positive("wavelength", self.wavelength)?;
        positive("focal_length", self.focal_length)?;
        positive("pixel_pitch", self.pixel_pitch)?;
        if self.grid_x == 0 || self.grid_y == 0 {
            return Err(Error::Config("grid dimensions must be at least 1".into()));
        }
        match &self.illumination {
            Illumination::Uniform => {}
            Illumination::Gaussian { waist } => positive("illumination waist", *waist)?,
            Illumination::Map { values } => {
                if values.len() != self.pixel_count() {
                    return Err(Error::Config(format!(
                        "illumination map has {} entries, grid has {}",
                        values.len(),
                        self.pixel_count()
                    )));
                }
                if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                    return Err(Error::Config("illumination entries must be finite and >= 0".into()));
                }
                if values.iter().all(|v| *v == 0.0) {
                    return Err(Error::Config("illumination map is all zero".into()));
                }
            }
        }
        Ok(())
    }

    /// Pixel-centre coordinates along x, centred on the modulator.
    pub fn u_coords(&self) -> Vec<f64> {
        centered_coords(self.grid_x, self.pixel_pitch.0)
    }

    /// Pixel-centre coordinates along y.
    pub fn v_coords(&self) -> Vec<f64> {
        centered_coords(self.grid_y, self.pixel_pitch.0)
    }

    /// Illumination amplitude as a (grid_x, grid_y) array.
    pub fn illumination_map(&self) -> Array2<f64> {
        let (gx, gy) = (self.grid_x, self.grid_y);
        match &self.illumination {
            Illumination::Uniform => Array2::ones((gx, gy)),
            Illumination::Gaussian { waist } => {
                let (u, v) = (self.u_coords(), self.v_coords());
                let w2 = waist.0 * waist.0;
                Array2::from_shape_fn((gx, gy), |(i, j)| (-(u[i] * u[i] + v[j] * v[j]) / w2).exp())
            }
            Illumination::Map { values } => Array2::from_shape_vec((gx, gy), values.clone())
                .expect("illumination map validated against grid"),
        }
    }
}

fn centered_coords(n: usize, pitch: f64) -> Vec<f64> {
    let mid = (n as f64 - 1.0) / 2.0;
    (0..n).map(|j| (j as f64 - mid) * pitch).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SiteId(pub u32);

/// One trap centre, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapSite {
    pub id: SiteId,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl TrapSite {
    pub fn new(id: u32, x: f64, y: f64, z: f64) -> Self {
        TrapSite { id: SiteId(id), x, y, z }
    }

    pub fn pos(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn distance(&self, other: &TrapSite) -> f64 {
        distance(self.pos(), other.pos())
    }
}

pub fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Ordered set of traps; the order defines the trap index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrapLayout {
    sites: Vec<TrapSite>,
}

impl TrapLayout {
    pub fn new(sites: Vec<TrapSite>) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::Invalid("layout needs at least one trap".into()));
        }
        let mut seen = HashSet::with_capacity(sites.len());
        for s in &sites {
            if !(s.x.is_finite() && s.y.is_finite() && s.z.is_finite()) {
                return Err(Error::Invalid(format!("trap {:?} has non-finite coordinates", s.id)));
            }
            if !seen.insert(s.id) {
                return Err(Error::Invalid(format!("duplicate trap id {:?}", s.id)));
            }
        }
        Ok(TrapLayout { sites })
    }

    /// Layout from bare positions, ids assigned 0..N.
    pub fn from_points(points: &[[f64; 3]]) -> Result<Self> {
        Self::new(
            points
                .iter()
                .enumerate()
                .map(|(i, p)| TrapSite::new(i as u32, p[0], p[1], p[2]))
                .collect(),
        )
    }

    pub fn sites(&self) -> &[TrapSite] {
        &self.sites
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn positions(&self) -> Vec<[f64; 3]> {
        self.sites.iter().map(TrapSite::pos).collect()
    }
}

/// Row-major `nx × ny` grid centred on `center` at height `z`.
pub fn build_lattice(dims: [usize; 2], spacing: f64, center: [f64; 2], z: f64) -> Result<TrapLayout> {
    TrapLayout::from_points(&lattice_points(dims, spacing, center, z)?)
}

fn lattice_points(dims: [usize; 2], spacing: f64, center: [f64; 2], z: f64) -> Result<Vec<[f64; 3]>> {
    if !(spacing > 0.0) || !spacing.is_finite() {
        return Err(Error::Invalid(format!("lattice spacing must be positive, got {spacing}")));
    }
    let [nx, ny] = dims;
    if nx == 0 || ny == 0 {
        return Err(Error::Invalid("lattice dims must be at least 1x1".into()));
    }
    let (mx, my) = ((nx as f64 - 1.0) / 2.0, (ny as f64 - 1.0) / 2.0);
    let mut pts = Vec::with_capacity(nx * ny);
    for iy in 0..ny {
        for ix in 0..nx {
            pts.push([
                center[0] + (ix as f64 - mx) * spacing,
                center[1] + (my - iy as f64) * spacing,
                z,
            ]);
        }
    }
    Ok(pts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskKind {
    #[serde(rename = "minimal_3x3")]
    Minimal3x3,
    #[serde(rename = "reconfig_2d")]
    Reconfig2d,
    #[serde(rename = "reconfig_3d_layers")]
    Reconfig3dLayers,
    #[serde(rename = "offset_bilayer")]
    OffsetBilayer,
    #[serde(rename = "custom")]
    Custom,
}

fn one() -> f64 {
    1.0
}

/// One lattice layer of a task description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub dims: [usize; 2],
    pub spacing: Length,
    #[serde(default)]
    pub center: [Length; 2],
    #[serde(default)]
    pub z: Length,
    /// Loading probability per site; ignored for target layers.
    #[serde(default = "one")]
    pub filling: f64,
}

impl LatticeSpec {
    pub fn new(dims: [usize; 2], spacing_um: f64) -> Self {
        LatticeSpec {
            dims,
            spacing: Length::microns(spacing_um),
            center: [Length(0.0), Length(0.0)],
            z: Length(0.0),
            filling: 1.0,
        }
    }

    pub fn filling(mut self, f: f64) -> Self {
        self.filling = f;
        self
    }

    pub fn at_z_um(mut self, z: f64) -> Self {
        self.z = Length::microns(z);
        self
    }

    pub fn centered_um(mut self, x: f64, y: f64) -> Self {
        self.center = [Length::microns(x), Length::microns(y)];
        self
    }

    pub fn site_count(&self) -> usize {
        self.dims[0] * self.dims[1]
    }

    fn points(&self) -> Result<Vec<[f64; 3]>> {
        lattice_points(self.dims, self.spacing.0, [self.center[0].0, self.center[1].0], self.z.0)
    }
}

/// Per-trap target intensity profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IntensityProfile {
    #[default]
    Uniform,
    /// One value per target layer.
    PerLayer { values: Vec<f64> },
    /// Seeded uniform draw per trap in [low, high].
    Random { low: f64, high: f64 },
    /// One value per target trap, in trap order.
    Explicit { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SourceArray {
    #[serde(default)]
    pub layers: Vec<LatticeSpec>,
    /// Explicit occupied positions (custom tasks).
    #[serde(default)]
    pub points: Vec<[Length; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TargetArray {
    #[serde(default)]
    pub layers: Vec<LatticeSpec>,
    #[serde(default)]
    pub points: Vec<[Length; 3]>,
    #[serde(default)]
    pub profile: IntensityProfile,
}

/// A rearrangement task: where atoms start, where they should end up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    #[serde(default)]
    pub seed: u64,
    pub source: SourceArray,
    #[serde(default)]
    pub target: TargetArray,
    /// Middle-row displacement for `minimal_3x3`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift: Option<[Length; 2]>,
    /// Interlayer exchanges for `offset_bilayer`.
    #[serde(default)]
    pub swaps: usize,
    /// Preferred maximum displacement per frame.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_step: Option<Length>,
}

/// Result of sampling a task: occupied sources, targets and per-trap targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskInstance {
    pub source: TrapLayout,
    pub target: TrapLayout,
    pub target_intensities: Vec<f64>,
    /// Target layer index of each target site.
    pub target_layer: Vec<usize>,
    /// Target layer each source atom must end up in.
    pub source_group: Vec<usize>,
    /// Source atoms that must be matched (interlayer exchanges).
    pub required: Vec<bool>,
    /// z of each target layer, ascending.
    pub layer_z: Vec<f64>,
}

impl TaskInstance {
    pub fn layer_count(&self) -> usize {
        self.layer_z.len()
    }
}

impl TaskSpec {
    /// 3×3 array, middle row translated 2 µm along the lower-right diagonal.
    pub fn minimal_3x3() -> Self {
        let d = 2.0 / 2f64.sqrt();
        TaskSpec {
            kind: TaskKind::Minimal3x3,
            seed: 0,
            source: SourceArray {
                layers: vec![LatticeSpec::new([3, 3], 5.0)],
                points: vec![],
            },
            target: TargetArray::default(),
            shift: Some([Length::microns(d), Length::microns(-d)]),
            swaps: 0,
            max_step: Some(Length::microns(0.2)),
        }
    }

    /// Square source lattice at partial filling into a smaller square target.
    pub fn reconfig_2d(source_n: usize, filling: f64, target_n: usize, spacing_um: f64, seed: u64) -> Self {
        TaskSpec {
            kind: TaskKind::Reconfig2d,
            seed,
            source: SourceArray {
                layers: vec![LatticeSpec::new([source_n, source_n], spacing_um).filling(filling)],
                points: vec![],
            },
            target: TargetArray {
                layers: vec![LatticeSpec::new([target_n, target_n], spacing_um)],
                points: vec![],
                profile: IntensityProfile::Uniform,
            },
            shift: None,
            swaps: 0,
            max_step: Some(Length::microns(0.1)),
        }
    }

    /// 36×36 at 79 % filling into 32×32, 5 µm spacing.
    pub fn reconfig_2d_full(seed: u64) -> Self {
        Self::reconfig_2d(36, 0.79, 32, 5.0, seed)
    }

    /// 10×10 at 79 % filling into 8×8, 5 µm spacing.
    pub fn reconfig_2d_desk(seed: u64) -> Self {
        Self::reconfig_2d(10, 0.79, 8, 5.0, seed)
    }

    /// Three layers at z = -30, 0, +30 µm with layer-dependent source lattices.
    ///
    /// `sources` holds (n, spacing µm, filling) per layer, bottom to top.
    pub fn three_layer(sources: [(usize, f64, f64); 3], target_n: usize, seed: u64) -> Self {
        let zs = [-30.0, 0.0, 30.0];
        TaskSpec {
            kind: TaskKind::Reconfig3dLayers,
            seed,
            source: SourceArray {
                layers: sources
                    .iter()
                    .zip(zs)
                    .map(|(&(n, s, f), z)| LatticeSpec::new([n, n], s).filling(f).at_z_um(z))
                    .collect(),
                points: vec![],
            },
            target: TargetArray {
                layers: zs
                    .iter()
                    .map(|&z| LatticeSpec::new([target_n, target_n], 5.0).at_z_um(z))
                    .collect(),
                points: vec![],
                profile: IntensityProfile::Uniform,
            },
            shift: None,
            swaps: 0,
            max_step: Some(Length::microns(0.1)),
        }
    }

    pub fn three_layer_full(seed: u64) -> Self {
        Self::three_layer([(33, 6.0, 0.94), (34, 5.0, 0.89), (35, 4.0, 0.84)], 32, seed)
    }

    /// 6×6 per layer targets from 7×7, 8×8 and 9×9 sources.
    pub fn three_layer_desk(seed: u64) -> Self {
        Self::three_layer([(7, 6.0, 0.94), (8, 5.0, 0.89), (9, 4.0, 0.84)], 6, seed)
    }

    /// Two laterally offset layers 20 µm apart with interlayer exchanges.
    ///
    /// Each layer loads an `(n+1) × (n+1)` lattice; its target is the `n × n`
    /// sub-block sharing the lower-left lattice sites, so vacancies are filled
    /// by in-plane moves. Target intensities are trap dependent.
    pub fn offset_bilayer(n: usize, filling: f64, swaps: usize, seed: u64) -> Self {
        let spacing = 5.0;
        let (offset, half_gap) = (spacing / 2.0, 10.0);
        let layer = |dims: usize, shift: f64, dx: f64, z: f64| {
            LatticeSpec::new([dims, dims], spacing)
                .centered_um(dx + shift, dx + shift)
                .at_z_um(z)
        };
        // sub-block of the source lattice: drop the top row and right column
        let sub = spacing / 2.0;
        TaskSpec {
            kind: TaskKind::OffsetBilayer,
            seed,
            source: SourceArray {
                layers: vec![
                    layer(n + 1, 0.0, 0.0, -half_gap).filling(filling),
                    layer(n + 1, 0.0, offset, half_gap).filling(filling),
                ],
                points: vec![],
            },
            target: TargetArray {
                layers: vec![
                    layer(n, -sub, 0.0, -half_gap),
                    layer(n, -sub, offset, half_gap),
                ],
                points: vec![],
                profile: IntensityProfile::Random { low: 0.6, high: 1.4 },
            },
            shift: None,
            swaps,
            max_step: Some(Length::microns(0.1)),
        }
    }

    pub fn offset_bilayer_full(seed: u64) -> Self {
        Self::offset_bilayer(10, 0.92, 10, seed)
    }

    pub fn offset_bilayer_desk(seed: u64) -> Self {
        Self::offset_bilayer(6, 0.92, 3, seed)
    }

    /// Explicit occupied sources and targets (meters).
    pub fn custom(sources: &[[f64; 3]], targets: &[[f64; 3]]) -> Self {
        let conv = |p: &[[f64; 3]]| p.iter().map(|q| q.map(Length)).collect::<Vec<_>>();
        TaskSpec {
            kind: TaskKind::Custom,
            seed: 0,
            source: SourceArray {
                layers: vec![],
                points: conv(sources),
            },
            target: TargetArray {
                layers: vec![],
                points: conv(targets),
                profile: IntensityProfile::Uniform,
            },
            shift: None,
            swaps: 0,
            max_step: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for l in self.source.layers.iter().chain(&self.target.layers) {
            if !(l.filling > 0.0 && l.filling <= 1.0) {
                return Err(Error::Config(format!("filling fraction {} outside (0, 1]", l.filling)));
            }
            if !(l.spacing.0 > 0.0) {
                return Err(Error::Config("lattice spacing must be positive".into()));
            }
            if l.dims[0] == 0 || l.dims[1] == 0 {
                return Err(Error::Config("lattice dims must be at least 1x1".into()));
            }
        }
        let (ns, nt) = (self.source.layers.len(), self.target.layers.len());
        match self.kind {
            TaskKind::Minimal3x3 => {
                if ns != 1 {
                    return Err(Error::Config("minimal_3x3 needs exactly one source layer".into()));
                }
            }
            TaskKind::Reconfig2d => {
                if ns != 1 || nt != 1 {
                    return Err(Error::Config("reconfig_2d needs one source and one target layer".into()));
                }
            }
            TaskKind::Reconfig3dLayers => {
                if ns == 0 || ns != nt {
                    return Err(Error::Config("reconfig_3d_layers needs matching source/target layers".into()));
                }
            }
            TaskKind::OffsetBilayer => {
                if ns != 2 || nt != 2 {
                    return Err(Error::Config("offset_bilayer needs two source and two target layers".into()));
                }
            }
            TaskKind::Custom => {
                if self.source.points.is_empty() || self.target.points.is_empty() {
                    return Err(Error::Config("custom task needs source and target points".into()));
                }
            }
        }
        for (s, t) in self.source.layers.iter().zip(&self.target.layers) {
            if t.site_count() > s.site_count() {
                return Err(Error::Config(format!(
                    "target layer has {} sites but source lattice only {}",
                    t.site_count(),
                    s.site_count()
                )));
            }
        }
        Ok(())
    }
}

/// Sample source occupancy and build the target layout for a task.
pub fn instantiate_task(spec: &TaskSpec) -> Result<TaskInstance> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // (layer, points) for occupied sources and for targets
    let mut source_layers: Vec<Vec<[f64; 3]>> = Vec::new();
    let mut target_layers: Vec<Vec<[f64; 3]>> = Vec::new();

    match spec.kind {
        TaskKind::Custom => {
            source_layers.push(spec.source.points.iter().map(|p| p.map(f64::from)).collect());
            target_layers.push(spec.target.points.iter().map(|p| p.map(f64::from)).collect());
        }
        TaskKind::Minimal3x3 => {
            let layer = &spec.source.layers[0];
            let all = layer.points()?;
            let occupied = sample_occupancy(&all, layer.filling, &mut rng);
            let [dx, dy] = spec
                .shift
                .map(|s| [s[0].0, s[1].0])
                .unwrap_or([2.0 * MICRON / 2f64.sqrt(), -2.0 * MICRON / 2f64.sqrt()]);
            let middle = layer.dims[1] / 2;
            let nx = layer.dims[0];
            let target = all
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    if i / nx == middle {
                        [p[0] + dx, p[1] + dy, p[2]]
                    } else {
                        *p
                    }
                })
                .collect();
            source_layers.push(occupied);
            target_layers.push(target);
        }
        _ => {
            for layer in &spec.source.layers {
                let all = layer.points()?;
                source_layers.push(sample_occupancy(&all, layer.filling, &mut rng));
            }
            for layer in &spec.target.layers {
                target_layers.push(layer.points()?);
            }
        }
    }

    // layers in ascending z of the target layer
    let layer_z: Vec<f64> = target_layers
        .iter()
        .map(|l| l.first().map_or(0.0, |p| p[2]))
        .collect();
    let mut order: Vec<usize> = (0..target_layers.len()).collect();
    if spec.kind != TaskKind::Custom {
        order.sort_by(|&a, &b| layer_z[a].total_cmp(&layer_z[b]));
    }

    let mut groups: Vec<Vec<[f64; 3]>> = order.iter().map(|&k| source_layers[k].clone()).collect();
    let targets: Vec<Vec<[f64; 3]>> = order.iter().map(|&k| target_layers[k].clone()).collect();
    let sorted_z: Vec<f64> = order.iter().map(|&k| layer_z[k]).collect();

    let mut required: Vec<Vec<bool>> = groups.iter().map(|g| vec![false; g.len()]).collect();
    if spec.kind == TaskKind::OffsetBilayer && spec.swaps > 0 {
        exchange_between_layers(&mut groups, &mut required, spec, &mut rng)?;
    }

    for (k, (g, t)) in groups.iter().zip(&targets).enumerate() {
        if g.len() < t.len() {
            return Err(Error::Underfilled {
                layer: k,
                occupied: g.len(),
                targets: t.len(),
            });
        }
    }

    let mut source_pts = Vec::new();
    let mut source_group = Vec::new();
    let mut required_flat = Vec::new();
    for (k, g) in groups.iter().enumerate() {
        source_pts.extend_from_slice(g);
        source_group.extend(std::iter::repeat(k).take(g.len()));
        required_flat.extend_from_slice(&required[k]);
    }
    let mut target_pts = Vec::new();
    let mut target_layer = Vec::new();
    for (k, t) in targets.iter().enumerate() {
        target_pts.extend_from_slice(t);
        target_layer.extend(std::iter::repeat(k).take(t.len()));
    }

    let target_intensities = match &spec.target.profile {
        IntensityProfile::Uniform => vec![1.0; target_pts.len()],
        IntensityProfile::PerLayer { values } => {
            if values.len() != targets.len() {
                return Err(Error::Config(format!(
                    "per-layer profile has {} values for {} layers",
                    values.len(),
                    targets.len()
                )));
            }
            // values are given in the file's layer order
            target_layer.iter().map(|&k| values[order[k]]).collect()
        }
        IntensityProfile::Random { low, high } => {
            if !(*low > 0.0 && high >= low) {
                return Err(Error::Config("random profile needs 0 < low <= high".into()));
            }
            (0..target_pts.len()).map(|_| rng.gen_range(*low..=*high)).collect()
        }
        IntensityProfile::Explicit { values } => {
            if values.len() != target_pts.len() {
                return Err(Error::Config(format!(
                    "explicit profile has {} values for {} targets",
                    values.len(),
                    target_pts.len()
                )));
            }
            values.clone()
        }
    };
    if target_intensities.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Config("target intensities must be positive".into()));
    }

    Ok(TaskInstance {
        source: TrapLayout::from_points(&source_pts)?,
        target: TrapLayout::from_points(&target_pts)?,
        target_intensities,
        target_layer,
        source_group,
        required: required_flat,
        layer_z: sorted_z,
    })
}

fn sample_occupancy(sites: &[[f64; 3]], filling: f64, rng: &mut ChaCha8Rng) -> Vec<[f64; 3]> {
    if filling >= 1.0 {
        return sites.to_vec();
    }
    sites.iter().copied().filter(|_| rng.gen_bool(filling)).collect()
}

/// Move `spec.swaps` adjacent atom pairs into the opposite layer's group.
fn exchange_between_layers(
    groups: &mut [Vec<[f64; 3]>],
    required: &mut [Vec<bool>],
    spec: &TaskSpec,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    use rand::seq::SliceRandom;

    let spacing = spec.source.layers[0].spacing.0;
    // lateral nearest neighbours across the layers sit at spacing/√2
    let reach = spacing * (0.5f64.sqrt() + 1e-6);
    let mut candidates = Vec::new();
    for (i, a) in groups[0].iter().enumerate() {
        for (j, b) in groups[1].iter().enumerate() {
            if ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt() <= reach {
                candidates.push((i, j));
            }
        }
    }
    candidates.shuffle(rng);
    let mut used = (HashSet::new(), HashSet::new());
    let mut picked = Vec::new();
    for (i, j) in candidates {
        if picked.len() == spec.swaps {
            break;
        }
        if used.0.contains(&i) || used.1.contains(&j) {
            continue;
        }
        used.0.insert(i);
        used.1.insert(j);
        picked.push((i, j));
    }
    if picked.len() < spec.swaps {
        return Err(Error::Config(format!(
            "only {} interlayer exchanges available, {} requested",
            picked.len(),
            spec.swaps
        )));
    }
    picked.sort_unstable();
    let (mut lower, mut upper) = (Vec::new(), Vec::new());
    for &(i, j) in &picked {
        lower.push(groups[0][i]);
        upper.push(groups[1][j]);
    }
    let keep = |g: &Vec<[f64; 3]>, drop: &HashSet<usize>| -> Vec<[f64; 3]> {
        g.iter()
            .enumerate()
            .filter(|(k, _)| !drop.contains(k))
            .map(|(_, p)| *p)
            .collect()
    };
    let mut g0 = keep(&groups[0], &used.0);
    let mut g1 = keep(&groups[1], &used.1);
    let mut r0 = vec![false; g0.len()];
    let mut r1 = vec![false; g1.len()];
    // atoms leaving the upper layer now belong to the lower group and vice versa
    g0.extend_from_slice(&upper);
    r0.extend(std::iter::repeat(true).take(upper.len()));
    g1.extend_from_slice(&lower);
    r1.extend(std::iter::repeat(true).take(lower.len()));
    groups[0] = g0;
    groups[1] = g1;
    required[0] = r0;
    required[1] = r1;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const UM: f64 = MICRON;

    #[test]
    fn single_site_lattice() {
        let l = build_lattice([1, 1], 5.0 * UM, [0.0, 0.0], 0.0).unwrap();
        assert_eq!(l.len(), 1);
        assert_eq!(l.sites()[0].pos(), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn three_by_three_extremes() {
        let l = build_lattice([3, 3], 5.0 * UM, [0.0, 0.0], 0.0).unwrap();
        assert_eq!(l.len(), 9);
        let xs: Vec<f64> = l.sites().iter().map(|s| s.x).collect();
        let ys: Vec<f64> = l.sites().iter().map(|s| s.y).collect();
        assert_eq!(xs.iter().cloned().fold(f64::MIN, f64::max), 5.0 * UM);
        assert_eq!(xs.iter().cloned().fold(f64::MAX, f64::min), -5.0 * UM);
        // top row first
        assert_eq!(ys[0], 5.0 * UM);
        assert_eq!(ys[8], -5.0 * UM);
    }

    #[test]
    fn full_scale_lattice_span() {
        let l = build_lattice([32, 32], 5.0 * UM, [0.0, 0.0], 0.0).unwrap();
        assert_eq!(l.len(), 1024);
        let xs: Vec<f64> = l.sites().iter().map(|s| s.x).collect();
        let span = xs.iter().cloned().fold(f64::MIN, f64::max) - xs.iter().cloned().fold(f64::MAX, f64::min);
        assert!((span - 155.0 * UM).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_spacing() {
        assert!(build_lattice([2, 2], 0.0, [0.0, 0.0], 0.0).is_err());
        assert!(build_lattice([2, 2], -1.0, [0.0, 0.0], 0.0).is_err());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let s = vec![TrapSite::new(1, 0.0, 0.0, 0.0), TrapSite::new(1, 1.0, 0.0, 0.0)];
        assert!(TrapLayout::new(s).is_err());
        assert!(TrapLayout::new(vec![]).is_err());
        assert!(TrapLayout::new(vec![TrapSite::new(0, f64::NAN, 0.0, 0.0)]).is_err());
    }

    #[test]
    fn minimal_task_shapes() {
        let t = instantiate_task(&TaskSpec::minimal_3x3()).unwrap();
        assert_eq!(t.source.len(), 9);
        assert_eq!(t.target.len(), 9);
        assert!(t.target_intensities.iter().all(|&v| v == 1.0));
        // only the middle row moves, by 2 µm
        for (s, d) in t.source.sites().iter().zip(t.target.sites()) {
            let dist = s.distance(d);
            if (s.y).abs() < 1e-12 {
                assert!((dist - 2.0 * UM).abs() < 1e-15);
                assert!(d.x > s.x && d.y < s.y);
            } else {
                assert_eq!(dist, 0.0);
            }
        }
    }

    #[test]
    fn full_filling_occupies_everything() {
        let t = instantiate_task(&TaskSpec::reconfig_2d(6, 1.0, 4, 5.0, 3)).unwrap();
        assert_eq!(t.source.len(), 36);
        assert_eq!(t.target.len(), 16);
    }

    #[test]
    fn paper_scale_2d_task_has_enough_atoms() {
        let t = instantiate_task(&TaskSpec::reconfig_2d_full(1)).unwrap();
        assert!(t.source.len() >= 1024);
        assert_eq!(t.target.len(), 1024);
    }

    #[test]
    fn deterministic_given_seed() {
        let a = instantiate_task(&TaskSpec::reconfig_2d_desk(5)).unwrap();
        let b = instantiate_task(&TaskSpec::reconfig_2d_desk(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn underfilled_is_an_error() {
        let spec = TaskSpec::reconfig_2d(4, 0.2, 4, 5.0, 0);
        match instantiate_task(&spec) {
            Err(Error::Underfilled { .. }) => {}
            other => panic!("expected underfilled, got {other:?}"),
        }
    }

    #[test]
    fn layers_keep_their_z_and_sort_ascending() {
        let mut spec = TaskSpec::three_layer_desk(2);
        spec.source.layers.reverse();
        spec.target.layers.reverse();
        let t = instantiate_task(&spec).unwrap();
        assert_eq!(t.layer_z, vec![-30.0 * UM, 0.0, 30.0 * UM]);
        for (site, &k) in t.target.sites().iter().zip(&t.target_layer) {
            assert_eq!(site.z, t.layer_z[k]);
        }
        let zs: Vec<f64> = t.target.sites().iter().map(|s| s.z).collect();
        assert!(zs.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn bilayer_exchanges_are_required_and_cross_layers() {
        let t = instantiate_task(&TaskSpec::offset_bilayer_desk(4)).unwrap();
        let swapped: Vec<usize> = (0..t.source.len()).filter(|&i| t.required[i]).collect();
        assert_eq!(swapped.len(), 6);
        for &i in &swapped {
            let z = t.source.sites()[i].z;
            assert_ne!(z, t.layer_z[t.source_group[i]]);
        }
        assert!(t.target_intensities.iter().any(|&v| (v - t.target_intensities[0]).abs() > 1e-3));
    }

    #[test]
    fn task_spec_toml_round_trip() {
        for spec in [
            TaskSpec::minimal_3x3(),
            TaskSpec::reconfig_2d_desk(9),
            TaskSpec::three_layer_desk(1),
            TaskSpec::offset_bilayer_desk(2),
            TaskSpec::custom(&[[0.0, 0.0, 0.0]], &[[1e-6, 0.0, 0.0]]),
        ] {
            let text = toml::to_string(&spec).unwrap();
            let back: TaskSpec = toml::from_str(&text).unwrap();
            assert_eq!(back, spec);
        }
    }

    #[test]
    fn toml_with_micron_suffixes() {
        let text = r#"
kind = "reconfig_2d"
seed = 4

[[source.layers]]
dims = [6, 6]
spacing = "5 um"
filling = 0.9

[[target.layers]]
dims = [4, 4]
spacing = "5 um"
"#;
        let spec: TaskSpec = toml::from_str(text).unwrap();
        assert_eq!(spec.source.layers[0].spacing, Length(5.0 * 1e-6));
        let t = instantiate_task(&spec).unwrap();
        assert_eq!(t.target.len(), 16);
    }

    #[test]
    fn illumination_validation() {
        let mut c = OpticalConfig::square(2);
        c.validate().unwrap();
        c.illumination = Illumination::Map { values: vec![0.0; 4] };
        assert!(c.validate().is_err());
        c.illumination = Illumination::Map { values: vec![1.0; 3] };
        assert!(c.validate().is_err());
        c.illumination = Illumination::Map { values: vec![1.0, -1.0, 1.0, 1.0] };
        assert!(c.validate().is_err());
        c.illumination = Illumination::Map { values: vec![1.0, 0.0, 1.0, 2.0] };
        c.validate().unwrap();
        assert_eq!(c.illumination_map()[[1, 1]], 2.0);
        let mut bad = OpticalConfig::square(4);
        bad.wavelength = Length(0.0);
        assert!(bad.validate().is_err());
    }
}
