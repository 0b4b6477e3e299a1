//! Evaluation quantities for hologram sequences.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transient::wrap;

/// ν = 1 − (max − min)/(max + min).
pub fn uniformity(intensities: &[f64]) -> Result<f64> {
    if intensities.is_empty() {
        return Err(Error::Invalid("uniformity of an empty set".into()));
    }
    if intensities.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::Invalid("intensities must be non-negative".into()));
    }
    let max = intensities.iter().cloned().fold(f64::MIN, f64::max);
    let min = intensities.iter().cloned().fold(f64::MAX, f64::min);
    if max == 0.0 {
        return Err(Error::Invalid("all intensities are zero".into()));
    }
    Ok(1.0 - (max - min) / (max + min))
}

/// Elementwise wrap(φ^(l+1) − φ^(l)).
pub fn phase_diff(phases_l: &[f64], phases_l1: &[f64]) -> Result<Vec<f64>> {
    if phases_l.len() != phases_l1.len() {
        return Err(Error::dims(phases_l.len(), phases_l1.len()));
    }
    Ok(phases_l.iter().zip(phases_l1).map(|(a, b)| wrap(b - a)).collect())
}

/// Fixed-width histogram; out-of-range values land in the edge bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if bins == 0 || !(hi > lo) {
            return Err(Error::Config(format!("bad histogram range [{lo}, {hi}] with {bins} bins")));
        }
        Ok(Histogram {
            lo,
            hi,
            counts: vec![0; bins],
        })
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.bins() as f64
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn add(&mut self, x: f64) {
        let k = ((x - self.lo) / self.width()).floor();
        let idx = if k.is_nan() || k < 0.0 {
            0
        } else {
            (k as usize).min(self.bins() - 1)
        };
        self.counts[idx] += 1;
    }

    pub fn merge(&mut self, other: &Histogram) -> Result<()> {
        if self.bins() != other.bins() || self.lo != other.lo || self.hi != other.hi {
            return Err(Error::Invalid("histograms have different binning".into()));
        }
        self.counts.iter_mut().zip(&other.counts).for_each(|(a, b)| *a += b);
        Ok(())
    }

    /// Bin percentages of the total count.
    pub fn percentages(&self) -> Vec<f64> {
        let total = self.total();
        if total == 0 {
            return vec![0.0; self.bins()];
        }
        self.counts.iter().map(|c| 100.0 * *c as f64 / total as f64).collect()
    }

    /// `(bin_left, bin_right, percent)` rows.
    pub fn rows(&self) -> Vec<(f64, f64, f64)> {
        let w = self.width();
        self.percentages()
            .into_iter()
            .enumerate()
            .map(|(k, p)| (self.lo + k as f64 * w, self.lo + (k + 1) as f64 * w, p))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsConfig {
    pub phase_bins: usize,
    pub ratio_bins: usize,
    pub ratio_max: f64,
    pub thresholds: Vec<f64>,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            phase_bins: 101,
            ratio_bins: 200,
            ratio_max: 1.2,
            thresholds: vec![0.86, 0.91, 0.96],
        }
    }
}

/// Streaming statistics of wrapped phase differences.
#[derive(Debug, Clone)]
pub struct PhaseAccumulator {
    count: u64,
    mean: f64,
    m2: f64,
    sum_sq: f64,
    max_abs: f64,
    hist: Histogram,
}

impl PhaseAccumulator {
    pub fn new(bins: usize) -> Result<Self> {
        Ok(PhaseAccumulator {
            count: 0,
            mean: 0.0,
            m2: 0.0,
            sum_sq: 0.0,
            max_abs: 0.0,
            hist: Histogram::new(-std::f64::consts::PI, std::f64::consts::PI, bins)?,
        })
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
        self.sum_sq += x * x;
        self.max_abs = self.max_abs.max(x.abs());
        self.hist.add(x);
    }

    pub fn extend(&mut self, xs: &[f64]) {
        xs.iter().for_each(|x| self.push(*x));
    }

    pub fn finish(&self) -> PhaseStats {
        let n = self.count.max(1) as f64;
        PhaseStats {
            count: self.count,
            mean: self.mean,
            std: (self.m2 / n).sqrt(),
            std_about_zero: (self.sum_sq / n).sqrt(),
            max_abs: self.max_abs,
            histogram: self.hist.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseStats {
    pub count: u64,
    pub mean: f64,
    /// Population standard deviation about the sample mean.
    pub std: f64,
    /// Root mean square, i.e. the deviation about zero.
    pub std_about_zero: f64,
    pub max_abs: f64,
    pub histogram: Histogram,
}

/// Population std about the mean and a histogram for a batch of samples.
pub fn aggregate(samples: &[f64], bins: usize) -> Result<PhaseStats> {
    if samples.is_empty() {
        return Err(Error::Invalid("no phase samples".into()));
    }
    let mut acc = PhaseAccumulator::new(bins)?;
    acc.extend(samples);
    Ok(acc.finish())
}

/// Streaming I/I₀ distribution.
#[derive(Debug, Clone)]
pub struct TransitionAccumulator {
    count: u64,
    min: f64,
    max: f64,
    thresholds: Vec<f64>,
    below: Vec<u64>,
    hist: Histogram,
}

impl TransitionAccumulator {
    pub fn new(config: &MetricsConfig) -> Result<Self> {
        Ok(TransitionAccumulator {
            count: 0,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
            thresholds: config.thresholds.clone(),
            below: vec![0; config.thresholds.len()],
            hist: Histogram::new(0.0, config.ratio_max, config.ratio_bins)?,
        })
    }

    pub fn push(&mut self, r: f64) {
        self.count += 1;
        self.min = self.min.min(r);
        self.max = self.max.max(r);
        for (t, b) in self.thresholds.iter().zip(&mut self.below) {
            if r < *t {
                *b += 1;
            }
        }
        self.hist.add(r);
    }

    pub fn extend(&mut self, rs: &[f64]) {
        rs.iter().for_each(|r| self.push(*r));
    }

    pub fn finish(&self) -> TransitionStats {
        let n = self.count.max(1) as f64;
        TransitionStats {
            count: self.count,
            min: if self.count == 0 { f64::NAN } else { self.min },
            max: if self.count == 0 { f64::NAN } else { self.max },
            thresholds: self.thresholds.clone(),
            fraction_below: self.below.iter().map(|b| *b as f64 / n).collect(),
            histogram: self.hist.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionStats {
    pub count: u64,
    pub min: f64,
    pub max: f64,
    pub thresholds: Vec<f64>,
    /// Fraction (not percent) of samples strictly below each threshold.
    pub fraction_below: Vec<f64>,
    pub histogram: Histogram,
}

impl TransitionStats {
    pub fn fraction_below(&self, threshold: f64) -> Option<f64> {
        self.thresholds
            .iter()
            .position(|t| *t == threshold)
            .map(|k| self.fraction_below[k])
    }
}

/// Minimum, threshold fractions and histogram of a batch of I/I₀ samples.
pub fn transition_distribution(ratios: &[f64], config: &MetricsConfig) -> Result<TransitionStats> {
    let mut acc = TransitionAccumulator::new(config)?;
    acc.extend(ratios);
    Ok(acc.finish())
}

/// Group per-trap values by layer label.
pub fn layer_split<T: Copy>(values: &[T], labels: &[usize], layers: usize) -> Result<Vec<Vec<T>>> {
    if values.len() != labels.len() {
        return Err(Error::dims(labels.len(), values.len()));
    }
    let mut out = vec![Vec::new(); layers];
    for (v, &l) in values.iter().zip(labels) {
        out.get_mut(l)
            .ok_or_else(|| Error::Invalid(format!("unknown layer {l}")))?
            .push(*v);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct DisplacementStats {
    pub mean: f64,
    pub max: f64,
}

impl DisplacementStats {
    pub fn from_lengths(lengths: &[f64]) -> Self {
        if lengths.is_empty() {
            return Self::default();
        }
        DisplacementStats {
            mean: lengths.iter().sum::<f64>() / lengths.len() as f64,
            max: lengths.iter().cloned().fold(0.0, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub layer: usize,
    pub z: f64,
    pub traps: usize,
    pub uniformity: Vec<f64>,
    pub phase: PhaseStats,
    pub transition: TransitionStats,
}

/// Metrics of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub frames: usize,
    pub traps: usize,
    /// ν of every frame.
    pub uniformity: Vec<f64>,
    pub min_uniformity: f64,
    pub phase: PhaseStats,
    pub transition: TransitionStats,
    pub displacement: DisplacementStats,
    pub layers: Vec<LayerReport>,
}

struct LayerAcc {
    uniformity: Vec<f64>,
    phase: PhaseAccumulator,
    transition: TransitionAccumulator,
}

/// Accumulates frame-by-frame metrics, globally and per layer.
pub struct MetricsBuilder {
    labels: Vec<usize>,
    layer_z: Vec<f64>,
    uniformity: Vec<f64>,
    phase: PhaseAccumulator,
    transition: TransitionAccumulator,
    layers: Vec<LayerAcc>,
}

impl MetricsBuilder {
    pub fn new(labels: Vec<usize>, layer_z: Vec<f64>, config: &MetricsConfig) -> Result<Self> {
        if let Some(&l) = labels.iter().find(|l| **l >= layer_z.len()) {
            return Err(Error::Invalid(format!("unknown layer {l}")));
        }
        let layers = (0..layer_z.len())
            .map(|_| {
                Ok(LayerAcc {
                    uniformity: Vec::new(),
                    phase: PhaseAccumulator::new(config.phase_bins)?,
                    transition: TransitionAccumulator::new(config)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(MetricsBuilder {
            labels,
            layer_z,
            uniformity: Vec::new(),
            phase: PhaseAccumulator::new(config.phase_bins)?,
            transition: TransitionAccumulator::new(config)?,
            layers,
        })
    }

    /// Single-layer builder.
    pub fn flat(traps: usize, config: &MetricsConfig) -> Result<Self> {
        Self::new(vec![0; traps], vec![0.0], config)
    }

    fn split(&self, values: &[f64]) -> Result<Vec<Vec<f64>>> {
        layer_split(values, &self.labels, self.layer_z.len())
    }

    pub fn push_frame(&mut self, intensities: &[f64]) -> Result<()> {
        self.uniformity.push(uniformity(intensities)?);
        let parts = self.split(intensities)?;
        for (acc, part) in self.layers.iter_mut().zip(&parts) {
            if !part.is_empty() {
                acc.uniformity.push(uniformity(part)?);
            }
        }
        Ok(())
    }

    pub fn push_phase_diff(&mut self, dphi: &[f64]) -> Result<()> {
        let parts = self.split(dphi)?;
        self.phase.extend(dphi);
        for (acc, part) in self.layers.iter_mut().zip(&parts) {
            acc.phase.extend(part);
        }
        Ok(())
    }

    pub fn push_ratios(&mut self, ratios: &[f64]) -> Result<()> {
        let parts = self.split(ratios)?;
        self.transition.extend(ratios);
        for (acc, part) in self.layers.iter_mut().zip(&parts) {
            acc.transition.extend(part);
        }
        Ok(())
    }

    pub fn finish(&self, displacement: DisplacementStats) -> MetricsReport {
        let layers = self
            .layers
            .iter()
            .enumerate()
            .map(|(k, acc)| LayerReport {
                layer: k,
                z: self.layer_z[k],
                traps: self.labels.iter().filter(|l| **l == k).count(),
                uniformity: acc.uniformity.clone(),
                phase: acc.phase.finish(),
                transition: acc.transition.finish(),
            })
            .collect();
        MetricsReport {
            frames: self.uniformity.len(),
            traps: self.labels.len(),
            min_uniformity: self.uniformity.iter().cloned().fold(f64::INFINITY, f64::min),
            uniformity: self.uniformity.clone(),
            phase: self.phase.finish(),
            transition: self.transition.finish(),
            displacement,
            layers,
        }
    }
}
