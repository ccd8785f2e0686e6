//! Full-loop behavior: tracking quality under ideal conditions, the value of
//! the learned delay compensation on a realistic run, causality of feature
//! replay, and graceful handling of diverging runs.

use softsmith_core::controller::GainCondition;
use softsmith_core::harness::{
    calibration_log, normalizer_for, run_experiment, xy_rms, Config, Phase, Score,
};
use softsmith_core::predictor::{replay_features, PredictorVariant};

fn ideal_config() -> Config {
    let mut cfg = Config::default();
    cfg.plant.delay_steps = 0;
    cfg.plant.noise_enabled = false;
    cfg.controller.mismatch_fraction = 0.0;
    cfg
}

#[test]
fn perfect_conditions_track_the_circle_to_a_millimeter() {
    let cfg = ideal_config();
    for gain in GainCondition::ALL {
        let log = run_experiment(&cfg, PredictorVariant::NoPred, gain, 1, None).unwrap();
        assert!(log.failure.is_none(), "{gain:?} diverged");
        let rms = xy_rms(
            &log,
            Phase::Stable,
            Score::Tracking,
            cfg.plant.delay_steps,
            cfg.protocol.transient_end,
        )
        .unwrap();
        assert!(
            rms <= 1.0,
            "{gain:?}: stable planar tracking {rms:.3} mm exceeds 1 mm"
        );
    }
}

#[test]
fn reference_height_and_orientation_are_held_under_ideal_conditions() {
    let cfg = ideal_config();
    let log = run_experiment(&cfg, PredictorVariant::NoPred, GainCondition::Medium, 1, None).unwrap();
    let last = log.rows.last().unwrap();
    assert!(
        (last.x_true[2] - cfg.protocol.z_ref).abs() < 2e-3,
        "height settled at {}",
        last.x_true[2]
    );
    for i in 3..6 {
        assert!(last.x_true[i].abs() < 1e-2, "orientation channel {i} drifted");
    }
}

#[test]
fn learned_compensation_beats_the_null_predictor_on_a_default_run() {
    let cfg = Config::default();
    let calibration = calibration_log(&cfg).unwrap();
    let norm = normalizer_for(&cfg, PredictorVariant::Ldn3, &calibration).unwrap();

    let seed = 1;
    let null = run_experiment(&cfg, PredictorVariant::NoPred, GainCondition::Medium, seed, None)
        .unwrap();
    let learned = run_experiment(
        &cfg,
        PredictorVariant::Ldn3,
        GainCondition::Medium,
        seed,
        Some(&norm),
    )
    .unwrap();
    let score = |log| {
        xy_rms(
            log,
            Phase::Stable,
            Score::Modeling,
            cfg.plant.delay_steps,
            cfg.protocol.transient_end,
        )
        .unwrap()
    };
    let null_rms = score(&null);
    let learned_rms = score(&learned);
    assert!(
        learned_rms < 0.8 * null_rms,
        "learned {learned_rms:.3} mm vs null {null_rms:.3} mm"
    );
}

#[test]
fn replayed_features_depend_only_on_the_past() {
    let cfg = Config::default();
    let calibration = calibration_log(&cfg).unwrap();
    let rows: Vec<_> = calibration
        .rows
        .iter()
        .map(|r| (r.x_meas, r.v_hat, r.u))
        .collect();
    let ldn = cfg.ldn_system().unwrap();
    let full = replay_features(PredictorVariant::Ldn3, &ldn, rows.iter().cloned()).unwrap();
    let cut = rows.len() / 3;
    let prefix =
        replay_features(PredictorVariant::Ldn3, &ldn, rows[..cut].iter().cloned()).unwrap();
    assert_eq!(prefix.len(), cut);
    for (k, (a, b)) in prefix.iter().zip(&full[..cut]).enumerate() {
        assert_eq!(a, b, "feature row {k} changed when the future was appended");
    }
}

#[test]
fn a_diverging_run_is_recorded_rather_than_panicking() {
    let mut cfg = Config::default();
    cfg.plant.workspace_bound = 1e-4;
    let log = run_experiment(&cfg, PredictorVariant::NoPred, GainCondition::High, 1, None)
        .unwrap();
    assert!(log.diverged());
    assert!(
        log.rows.len() < cfg.protocol.ticks(),
        "a diverged run must stop early"
    );
    let reason = log.failure.as_deref().unwrap();
    assert!(!reason.is_empty());
}

#[test]
fn every_variant_completes_a_default_medium_run() {
    let cfg = Config::default();
    let calibration = calibration_log(&cfg).unwrap();
    for variant in PredictorVariant::ALL {
        let norm = if variant.is_learning() {
            Some(normalizer_for(&cfg, variant, &calibration).unwrap())
        } else {
            None
        };
        let log =
            run_experiment(&cfg, variant, GainCondition::Medium, 2, norm.as_ref()).unwrap();
        assert!(log.failure.is_none(), "{variant:?} diverged");
        assert_eq!(log.rows.len(), cfg.protocol.ticks());
        let rms = xy_rms(
            &log,
            Phase::Stable,
            Score::Tracking,
            cfg.plant.delay_steps,
            cfg.protocol.transient_end,
        )
        .unwrap();
        assert!(rms.is_finite() && rms > 0.0 && rms < 50.0, "{variant:?}: {rms} mm");
    }
}
