//! Frame-by-frame hologram generation along a transport plan.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{OpticalConfig, TrapLayout};
use crate::metrics::{phase_diff, MetricsBuilder, MetricsConfig, MetricsReport};
use crate::planner::TransportPlan;
use crate::propagation::{build_separable, PhaseMask, TrapField};
use crate::solvers::{
    random_mask, wgs_solve, wpgs_solve, Relaxation, SolveOptions, SolveResult, SolverSettings, TargetSpec,
    WeightVector,
};
use crate::transient::{sample_transition, RefreshModel, Transition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Wgs,
    Wpgs,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Wgs => "wgs",
            SolverKind::Wpgs => "wpgs",
        }
    }
}

impl std::fmt::Display for SolverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "wgs" => Ok(SolverKind::Wgs),
            "wpgs" => Ok(SolverKind::Wpgs),
            other => Err(Error::Config(format!("unknown solver `{other}`"))),
        }
    }
}

/// Which intensity each transient sample is divided by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Reference {
    /// Intensity at the start of each refresh.
    #[default]
    Interval,
    /// Intensity in frame 0.
    Initial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SequenceOptions {
    pub settings: SolverSettings,
    pub refresh: RefreshModel,
    pub metrics: MetricsConfig,
    pub reference: Reference,
    /// Sample the refresh between consecutive frames.
    pub transients: bool,
    /// Keep every mask in the returned record.
    pub retain_masks: bool,
    /// Keep every transient sample in the returned record.
    pub retain_samples: bool,
}

impl Default for SequenceOptions {
    fn default() -> Self {
        SequenceOptions {
            settings: SolverSettings::default(),
            refresh: RefreshModel::default(),
            metrics: MetricsConfig::default(),
            reference: Reference::Interval,
            transients: true,
            retain_masks: true,
            retain_samples: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FrameRecord {
    pub frame: usize,
    pub positions: Vec<[f64; 3]>,
    pub mask: Option<PhaseMask>,
    pub field: TrapField,
    pub weights: WeightVector,
    /// Wall-clock seconds spent in the solver.
    pub solve_time: f64,
    pub iterations: usize,
    pub objective: Vec<f64>,
    pub dark_pixels: usize,
}

/// Transient samples of the refresh that ends at `frame`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub frame: usize,
    /// Realized phase difference per trap.
    pub dphi: Vec<f64>,
    pub a: Vec<f64>,
    /// `ratio[k][n]`: I/I₀ of trap n at sample k.
    pub ratio: Vec<Vec<f64>>,
}

impl TransitionRecord {
    pub fn min_ratio(&self) -> f64 {
        self.ratio.iter().flatten().cloned().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone)]
pub struct FrameSequence {
    pub kind: SolverKind,
    pub frames: Vec<FrameRecord>,
}

impl FrameSequence {
    pub fn solve_times(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.solve_time).collect()
    }
}

/// Everything needed to inspect or replay a run.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub config: OpticalConfig,
    pub plan: TransportPlan,
    pub options: SequenceOptions,
    pub sequence: FrameSequence,
    pub transitions: Vec<TransitionRecord>,
    pub metrics: MetricsReport,
}

impl RunRecord {
    pub fn kind(&self) -> SolverKind {
        self.sequence.kind
    }

    pub fn seed(&self) -> u64 {
        self.options.settings.seed
    }

    /// Minimum I/I₀ over the transients of the run.
    pub fn min_ratio(&self) -> f64 {
        self.metrics.transition.min
    }
}

/// Callback invoked after each frame, with the refresh that led into it.
/// Called after every frame with the record, its mask and the refresh that led into it.
pub type Observer<'a> = dyn FnMut(&FrameRecord, &PhaseMask, Option<&TransitionRecord>) -> Result<()> + 'a;

fn solve_frame(
    kind: SolverKind,
    frame: usize,
    plan: &TransportPlan,
    layout: &TrapLayout,
    config: &OpticalConfig,
    settings: &SolverSettings,
    prev: Option<(&PhaseMask, &WeightVector, &TrapField)>,
) -> Result<(SolveResult, f64, usize)> {
    let prop = build_separable(config, layout)?;
    let intensities = plan.intensities();
    let n = intensities.len();
    let start = Instant::now();
    let (result, iterations) = match prev {
        None => {
            let mask = random_mask(config.grid_x, config.grid_y, settings.seed);
            match kind {
                SolverKind::Wgs => (
                    wgs_solve(&prop, &intensities, settings.wgs_iterations, &mask, &WeightVector::ones(n))?,
                    settings.wgs_iterations,
                ),
                SolverKind::Wpgs => {
                    // the warm-up fixes the phases that the rest of the run keeps
                    let warm = wgs_solve(&prop, &intensities, settings.warmup_iterations, &mask, &WeightVector::ones(n))?;
                    let target = TargetSpec::new(intensities.clone(), warm.field.phases())?;
                    let options = SolveOptions::iterations(settings.iterations);
                    (
                        wpgs_solve(&prop, &target, &options, &warm.mask, &warm.weights)?,
                        settings.warmup_iterations + settings.iterations,
                    )
                }
            }
        }
        Some((mask, weights, field)) => {
            let weights = weights.clone().normalized();
            match kind {
                SolverKind::Wgs => (
                    wgs_solve(&prop, &intensities, settings.wgs_iterations, mask, &weights)?,
                    settings.wgs_iterations,
                ),
                SolverKind::Wpgs => {
                    let target = TargetSpec::new(intensities, field.phases())?;
                    let relaxation = settings
                        .relax_at(frame, plan.frames, n)
                        .then_some(Relaxation {
                            beta: settings.over_relaxation,
                            last_iters: settings.relax_last_iters,
                        });
                    let options = SolveOptions {
                        iterations: settings.iterations,
                        relaxation,
                    };
                    (wpgs_solve(&prop, &target, &options, mask, &weights)?, settings.iterations)
                }
            }
        }
    };
    Ok((result, start.elapsed().as_secs_f64(), iterations))
}

/// Solve every frame of `plan`, carrying masks and weights forward.
pub fn run_sequence(
    config: &OpticalConfig,
    plan: &TransportPlan,
    kind: SolverKind,
    options: &SequenceOptions,
) -> Result<RunRecord> {
    run_sequence_with(config, plan, kind, options, &mut |_, _, _| Ok(()))
}

/// As [`run_sequence`], calling `observer` after every frame.
pub fn run_sequence_with(
    config: &OpticalConfig,
    plan: &TransportPlan,
    kind: SolverKind,
    options: &SequenceOptions,
    observer: &mut Observer<'_>,
) -> Result<RunRecord> {
    config.validate()?;
    options.settings.validate()?;
    if options.transients {
        options.refresh.validate()?;
    }
    if plan.traps.is_empty() {
        return Err(Error::Invalid("plan has no traps".into()));
    }
    let mut metrics = MetricsBuilder::new(plan.layers(), plan.layer_z.clone(), &options.metrics)?;
    let mut frames: Vec<FrameRecord> = Vec::with_capacity(plan.frame_total());
    let mut transitions = Vec::new();

    let mut prev: Option<(PhaseMask, TrapLayout)> = None;
    let mut initial_intensity: Option<Vec<f64>> = None;

    for frame in 0..plan.frame_total() {
        let layout = plan.layout(frame)?;
        let carried = prev
            .as_ref()
            .zip(frames.last())
            .map(|((m, _), f)| (m, &f.weights, &f.field));
        let (result, solve_time, iterations) =
            solve_frame(kind, frame, plan, &layout, config, &options.settings, carried).map_err(|e| Error::Frame {
                frame,
                source: Box::new(e),
            })?;

        let intensities = result.field.intensities();
        metrics.push_frame(&intensities)?;

        let transition = match (&prev, frames.last()) {
            (Some((mask_l, layout_l)), Some(last)) => {
                let dphi = phase_diff(&last.field.phases(), &result.field.phases())?;
                metrics.push_phase_diff(&dphi)?;
                if options.transients {
                    let i0 = match options.reference {
                        Reference::Interval => last.field.intensities(),
                        Reference::Initial => initial_intensity.clone().unwrap_or_default(),
                    };
                    let tr = Transition {
                        layout_l,
                        layout_l1: &layout,
                        mask_l,
                        mask_l1: &result.mask,
                        field_l: &last.field,
                        field_l1: &result.field,
                    };
                    let samples = sample_transition(config, &tr, &options.refresh, &i0)?;
                    for s in &samples {
                        metrics.push_ratios(&s.ratio)?;
                    }
                    Some(TransitionRecord {
                        frame,
                        dphi,
                        a: samples.iter().map(|s| s.a).collect(),
                        ratio: samples.into_iter().map(|s| s.ratio).collect(),
                    })
                } else {
                    None
                }
            }
            _ => None,
        };
        if initial_intensity.is_none() {
            initial_intensity = Some(intensities);
        }

        let record = FrameRecord {
            frame,
            positions: layout.positions(),
            mask: options.retain_masks.then(|| result.mask.clone()),
            field: result.field,
            weights: result.weights,
            solve_time,
            iterations,
            objective: result.objective,
            dark_pixels: result.dark_pixels,
        };
        observer(&record, &result.mask, transition.as_ref())?;
        if let Some(tr) = transition {
            if options.retain_samples {
                transitions.push(tr);
            } else {
                transitions.push(TransitionRecord {
                    ratio: Vec::new(),
                    a: Vec::new(),
                    ..tr
                });
            }
        }
        prev = Some((result.mask, layout));
        frames.push(record);
    }

    Ok(RunRecord {
        config: config.clone(),
        plan: plan.clone(),
        options: options.clone(),
        metrics: metrics.finish(plan.displacement()),
        sequence: FrameSequence { kind, frames },
        transitions,
    })
}

/// One solver configuration in a benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchEntry {
    pub label: String,
    pub kind: SolverKind,
    pub iterations: usize,
}

impl BenchEntry {
    pub fn new(kind: SolverKind, iterations: usize) -> Self {
        BenchEntry {
            label: format!("{kind} K={iterations}"),
            kind,
            iterations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub label: String,
    pub kind: SolverKind,
    pub iterations: usize,
    pub frames: usize,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub std_ms: f64,
    /// Δφ standard deviation over the benchmarked run.
    pub phase_std: f64,
}

fn timing_row(entry: &BenchEntry, times: &[f64], phase_std: f64) -> TimingRow {
    let ms: Vec<f64> = times.iter().map(|t| t * 1e3).collect();
    let n = ms.len().max(1) as f64;
    let mean = ms.iter().sum::<f64>() / n;
    let var = ms.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / n;
    let mut sorted = ms.clone();
    sorted.sort_by(f64::total_cmp);
    let median = match sorted.len() {
        0 => f64::NAN,
        k if k % 2 == 1 => sorted[k / 2],
        k => 0.5 * (sorted[k / 2 - 1] + sorted[k / 2]),
    };
    TimingRow {
        label: entry.label.clone(),
        kind: entry.kind,
        iterations: entry.iterations,
        frames: ms.len(),
        mean_ms: mean,
        median_ms: median,
        std_ms: var.sqrt(),
        phase_std,
    }
}

/// Per-frame solve times for each entry; the first `warmup` frames are dropped.
pub fn bench(
    config: &OpticalConfig,
    plan: &TransportPlan,
    entries: &[BenchEntry],
    settings: &SolverSettings,
    warmup: usize,
) -> Result<Vec<TimingRow>> {
    entries
        .iter()
        .map(|entry| {
            let mut s = settings.clone();
            match entry.kind {
                SolverKind::Wgs => s.wgs_iterations = entry.iterations,
                SolverKind::Wpgs => s.iterations = entry.iterations,
            }
            let options = SequenceOptions {
                settings: s,
                transients: false,
                retain_masks: false,
                ..Default::default()
            };
            let run = run_sequence(config, plan, entry.kind, &options)?;
            let times = run.sequence.solve_times();
            Ok(timing_row(entry, &times[warmup.min(times.len())..], run.metrics.phase.std))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::TaskSpec;
    use crate::planner::{discretize, plan_task, Assignment, CostKind, Pair};
    use crate::units::MICRON;

    fn small_plan() -> (OpticalConfig, TransportPlan) {
        let inst = crate::geometry::instantiate_task(&TaskSpec::minimal_3x3()).unwrap();
        let plan = plan_task(&inst, 0.5 * MICRON, CostKind::Distance).unwrap();
        (OpticalConfig::square(48), plan)
    }

    #[test]
    fn static_plan_has_one_frame() {
        let p = [5.0 * MICRON, 0.0, 0.0];
        let a = Assignment {
            pairs: vec![Pair { source: 0, target: 0, from: p, to: p }],
            unmatched: vec![],
            cost: 0.0,
        };
        let plan = discretize(&a, 0.1 * MICRON).unwrap();
        let run = run_sequence(&OpticalConfig::square(16), &plan, SolverKind::Wpgs, &SequenceOptions::default()).unwrap();
        assert_eq!(run.sequence.frames.len(), 1);
        assert!(run.transitions.is_empty());
        assert_eq!(run.metrics.transition.count, 0);
    }

    #[test]
    fn frames_are_consistent_and_replayable() {
        let (cfg, plan) = small_plan();
        let opts = SequenceOptions::default();
        for kind in [SolverKind::Wgs, SolverKind::Wpgs] {
            let run = run_sequence(&cfg, &plan, kind, &opts).unwrap();
            assert_eq!(run.sequence.frames.len(), plan.frames + 1);
            assert_eq!(run.transitions.len(), plan.frames);
            for f in &run.sequence.frames {
                let prop = build_separable(&cfg, &TrapLayout::from_points(&f.positions).unwrap()).unwrap();
                let again = prop.forward(f.mask.as_ref().unwrap()).unwrap();
                assert!(again.relative_error(&f.field) < 1e-12);
            }
            let last = run.sequence.frames.last().unwrap();
            assert_eq!(last.positions, plan.positions(plan.frames));
            let replay = run_sequence(&cfg, &plan, kind, &opts).unwrap();
            for (a, b) in run.sequence.frames.iter().zip(&replay.sequence.frames) {
                assert_eq!(a.mask, b.mask);
            }
            assert_eq!(run.metrics.transition.count as usize, plan.frames * 21 * plan.trap_count());
        }
    }

    #[test]
    fn observer_sees_every_frame() {
        let (cfg, plan) = small_plan();
        let mut seen = Vec::new();
        let opts = SequenceOptions {
            retain_masks: false,
            ..Default::default()
        };
        let run = run_sequence_with(&cfg, &plan, SolverKind::Wpgs, &opts, &mut |f, m, t| {
            assert_eq!(m.dims(), (48, 48));
            seen.push((f.frame, t.map(|t| t.ratio.len())));
            Ok(())
        })
        .unwrap();
        assert_eq!(seen.len(), plan.frames + 1);
        assert_eq!(seen[0], (0, None));
        assert_eq!(seen[1], (1, Some(21)));
        assert!(run.sequence.frames.iter().all(|f| f.mask.is_none()));
    }

    #[test]
    fn bench_rows() {
        let (cfg, plan) = small_plan();
        let rows = bench(
            &cfg,
            &plan,
            &[BenchEntry::new(SolverKind::Wpgs, 5), BenchEntry::new(SolverKind::Wgs, 26)],
            &SolverSettings::default(),
            1,
        )
        .unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].frames, plan.frames);
        assert!(bench(&cfg, &plan, &[], &SolverSettings::default(), 3).unwrap().is_empty());
        assert_eq!("WPGS".parse::<SolverKind>().unwrap(), SolverKind::Wpgs);
    }
}
