//! Sequence-level behaviour: replay, frame consistency, target attainment,
//! non-uniform targets and the single-trap parity between solvers.

use holoshift::geometry::{instantiate_task, OpticalConfig, TaskSpec, TrapLayout};
use holoshift::io::{load_mask, RecordSettings, RecordWriter};
use holoshift::metrics::uniformity;
use holoshift::planner::{plan_task, CostKind};
use holoshift::propagation::build_separable;
use holoshift::sequence::{run_sequence, run_sequence_with, SequenceOptions, SolverKind};
use holoshift::solvers::{random_mask, wgs_solve, wpgs_solve, SolveOptions, TargetSpec, WeightVector};
use holoshift::transient::{RefreshModel, TransientOrder};
use holoshift::units::MICRON;

fn small() -> (OpticalConfig, holoshift::planner::TransportPlan) {
    let inst = instantiate_task(&TaskSpec::minimal_3x3()).unwrap();
    (OpticalConfig::square(64), plan_task(&inst, 0.4 * MICRON, CostKind::Distance).unwrap())
}

#[test]
fn replay_is_bit_identical() {
    let (cfg, plan) = small();
    let opts = SequenceOptions::default();
    for kind in [SolverKind::Wgs, SolverKind::Wpgs] {
        let a = run_sequence(&cfg, &plan, kind, &opts).unwrap();
        let b = run_sequence(&a.config, &a.plan, a.kind(), &a.options).unwrap();
        for (x, y) in a.sequence.frames.iter().zip(&b.sequence.frames) {
            assert_eq!(x.mask, y.mask);
            assert_eq!(x.field, y.field);
        }
    }
}

#[test]
fn stored_fields_match_their_masks() {
    let (cfg, plan) = small();
    let run = run_sequence(&cfg, &plan, SolverKind::Wpgs, &SequenceOptions::default()).unwrap();
    assert_eq!(run.sequence.frames.len(), plan.frames + 1);
    for f in &run.sequence.frames {
        let layout = TrapLayout::from_points(&f.positions).unwrap();
        let field = build_separable(&cfg, &layout).unwrap().forward(f.mask.as_ref().unwrap()).unwrap();
        assert!(field.relative_error(&f.field) <= 1e-12);
    }
}

#[test]
fn final_frame_reaches_targets_without_collapse() {
    let (cfg, plan) = small();
    for kind in [SolverKind::Wgs, SolverKind::Wpgs] {
        let run = run_sequence(&cfg, &plan, kind, &SequenceOptions::default()).unwrap();
        let last = run.sequence.frames.last().unwrap();
        let targets: Vec<[f64; 3]> = plan.traps.iter().map(|t| *t.waypoints.last().unwrap()).collect();
        assert_eq!(last.positions, targets);
        let final_nu = *run.metrics.uniformity.last().unwrap();
        assert!(final_nu >= run.metrics.min_uniformity);
    }
}

#[test]
fn every_refresh_order_is_sampled() {
    let (cfg, plan) = small();
    for order in [TransientOrder::Exact, TransientOrder::Leading, TransientOrder::Second] {
        let opts = SequenceOptions {
            refresh: RefreshModel { order, ..Default::default() },
            retain_samples: true,
            ..Default::default()
        };
        let run = run_sequence(&cfg, &plan, SolverKind::Wpgs, &opts).unwrap();
        assert_eq!(run.transitions.len(), plan.frames);
        for tr in &run.transitions {
            assert_eq!(tr.a.len(), 21);
            // a = 1 is the pre-refresh frame itself
            assert!(tr.ratio[0].iter().all(|r| (r - 1.0).abs() < 1e-12));
        }
        // endpoint ratios are among the samples
        let endpoint_min = run
            .transitions
            .iter()
            .map(|t| t.ratio.last().unwrap().iter().cloned().fold(f64::MAX, f64::min))
            .fold(f64::MAX, f64::min);
        assert!(run.metrics.transition.min <= endpoint_min);
    }
}

#[test]
fn non_uniform_targets_are_met() {
    let cfg = OpticalConfig::desk();
    let layout = holoshift::geometry::build_lattice([4, 4], 5.0 * MICRON, [0.0, 0.0], 0.0).unwrap();
    let n = layout.len();
    let prop = build_separable(&cfg, &layout).unwrap();
    let intensity: Vec<f64> = (0..n).map(|k| 0.6 + 0.8 * k as f64 / (n - 1) as f64).collect();
    let warm = wgs_solve(&prop, &intensity, 26, &random_mask(256, 256, 0), &WeightVector::ones(n)).unwrap();
    let target = TargetSpec::new(intensity.clone(), warm.field.phases()).unwrap();
    let res = wpgs_solve(&prop, &target, &SolveOptions::iterations(20), &warm.mask, &warm.weights).unwrap();
    let q: Vec<f64> = res.field.intensities().iter().zip(&intensity).map(|(i, t)| (i / t).sqrt()).collect();
    let mean = q.iter().sum::<f64>() / n as f64;
    let dev = q.iter().map(|x| (x / mean - 1.0).abs()).fold(0.0, f64::max);
    assert!(dev <= 0.02, "max deviation of |E|/|E_tar| from its mean: {dev}");
}

#[test]
fn single_trap_parity() {
    let cfg = OpticalConfig::square(64);
    let layout = TrapLayout::from_points(&[[6.0 * MICRON, -3.0 * MICRON, 0.0]]).unwrap();
    let prop = build_separable(&cfg, &layout).unwrap();
    let mask = random_mask(64, 64, 5);
    let wgs = wgs_solve(&prop, &[1.0], 5, &mask, &WeightVector::ones(1)).unwrap();
    let target = TargetSpec::new(vec![1.0], vec![0.0]).unwrap();
    let wpgs = wpgs_solve(&prop, &target, &SolveOptions::iterations(5), &mask, &WeightVector::ones(1)).unwrap();
    assert_eq!(
        uniformity(&wgs.field.intensities()).unwrap(),
        uniformity(&wpgs.field.intensities()).unwrap()
    );
}

#[test]
fn record_directory_round_trip() {
    let (cfg, plan) = small();
    let dir = tempfile::tempdir().unwrap();
    let opts = SequenceOptions {
        retain_masks: true,
        ..Default::default()
    };
    let settings = RecordSettings {
        solver: SolverKind::Wpgs,
        optical: cfg.clone(),
        options: opts.clone(),
    };
    let mut writer = RecordWriter::create(dir.path(), &settings, &plan, true).unwrap();
    let run = run_sequence_with(&cfg, &plan, SolverKind::Wpgs, &opts, &mut |f, m, t| writer.frame(f, m, t)).unwrap();
    let mask_path = writer.mask_path(plan.frames);
    writer.finish(&run.metrics).unwrap();

    let stored = load_mask(&mask_path).unwrap();
    assert_eq!(Some(&stored), run.sequence.frames.last().unwrap().mask.as_ref());
    let back: RecordSettings = toml::from_str(&std::fs::read_to_string(dir.path().join("settings.toml")).unwrap()).unwrap();
    assert_eq!(back, settings);
    let transients = std::fs::read_to_string(dir.path().join("transients.csv")).unwrap();
    assert_eq!(transients.lines().count(), 1 + plan.frames * 21 * plan.trap_count());
    for name in ["fields.csv", "metrics.json", "phase_histogram.csv", "ratio_histogram.csv", "frame_timing.csv", "plan.json"] {
        assert!(dir.path().join(name).is_file(), "{name}");
    }
    assert!(mask_path.with_extension("pgm").is_file());
}
