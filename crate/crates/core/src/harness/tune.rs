//! Regressor hyperparameter search. Stage 1 scores an order-of-magnitude grid
//! offline: the calibration log is replayed into (features, delayed pose
//! change) pairs and each candidate is scored by prequential RMS (predict,
//! then train, tick by tick). Stage 2 refines the winner with short online
//! runs, scoring mostly the modeling error with tracking as a tiebreaker.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::harness::config::Config;
use crate::harness::experiment::{calibration_log, normalizer_for, run_experiment, ExperimentLog};
use crate::harness::metrics::summarize;
use crate::controller::GainCondition;
use crate::krlst::{KernelParams, KrlstModel};
use crate::predictor::{fit_normalizer, replay_features, PredictorVariant, CHANNELS};

pub const STAGE1_SIGMA2: [f64; 4] = [1.0, 10.0, 100.0, 1000.0];
pub const STAGE1_NOISE: [f64; 4] = [1e-6, 1e-5, 1e-4, 1e-3];
pub const STAGE1_LAMBDA: [f64; 4] = [0.999, 0.9999, 0.99999, 1.0];

/// Multiplicative refinement around the stage-1 winner.
pub const STAGE2_FACTORS: [f64; 5] = [0.6, 0.8, 1.0, 1.25, 1.6];

#[derive(Debug, Clone)]
pub struct TuneReport {
    /// Stage-1 grid, ascending offline RMS (meters).
    pub ranked_offline: Vec<(KernelParams, f64)>,
    /// Stage-2 winner and its online score, when stage 2 ran.
    pub refined: Option<(KernelParams, f64)>,
    pub best: KernelParams,
}

/// Prequential one-step score of a candidate on the calibration log: replay
/// the variant's features, z-score them, then stream (predict, train) over
/// the delayed pairs. The score is the planar RMS (the components the
/// evaluation protocol measures) over the second half, where the model is
/// warm. Returns meters.
pub fn offline_score(
    config: &Config,
    variant: PredictorVariant,
    calibration: &ExperimentLog,
    params: &KernelParams,
) -> Result<f64> {
    let ldn = config.ldn_system()?;
    let raw = replay_features(
        variant,
        &ldn,
        calibration.rows.iter().map(|r| (r.x_meas, r.v_hat, r.u)),
    )?;
    let norm = fit_normalizer(&raw)?;
    let d = config.plant.delay_steps;
    if raw.len() <= 2 * d + 4 {
        return Err(Error::Config("calibration log too short to tune on".into()));
    }
    let mut model = KrlstModel::new(params.clone(), CHANNELS)?;
    let half = (raw.len() - d) / 2;
    let mut sum = 0.0;
    let mut n = 0usize;
    for t in 0..raw.len() - d {
        let feats = norm.apply(&raw[t])?;
        let target = calibration.rows[t + d].x_meas - calibration.rows[t].x_meas;
        let (mean, _) = model.predict(&feats)?;
        if t >= half {
            sum += (mean[0] - target[0]).powi(2) + (mean[1] - target[1]).powi(2);
            n += 1;
        }
        model.train(&feats, &DVector::from_row_slice(target.as_slice()))?;
    }
    Ok((sum / n as f64).sqrt())
}

/// Stage 1: score the full order-of-magnitude grid offline.
pub fn stage1(
    config: &Config,
    variant: PredictorVariant,
    calibration: &ExperimentLog,
    sigma2_grid: &[f64],
    noise_grid: &[f64],
    lambda_grid: &[f64],
) -> Result<Vec<(KernelParams, f64)>> {
    let mut ranked = Vec::new();
    for &sigma2 in sigma2_grid {
        for &noise_var in noise_grid {
            for &lambda in lambda_grid {
                let params = KernelParams {
                    sigma2,
                    noise_var,
                    lambda,
                    ..config.kernel_params()
                };
                let rms = offline_score(config, variant, calibration, &params)?;
                ranked.push((params, rms));
            }
        }
    }
    ranked.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("finite scores"));
    Ok(ranked)
}

/// Online score of one candidate: a single medium-gain run, modeling RMS plus
/// a quarter of the tracking RMS (both stable phase, mm). Modeling dominates;
/// the tracking term rejects candidates whose predictions jitter the loop.
pub fn online_score(
    config: &Config,
    variant: PredictorVariant,
    params: &KernelParams,
) -> Result<f64> {
    let mut cfg = config.clone();
    cfg.krlst = params.clone();
    let cal = calibration_log(&cfg)?;
    let norm = normalizer_for(&cfg, variant, &cal)?;
    let log = run_experiment(&cfg, variant, GainCondition::Medium, 1, Some(&norm))?;
    if log.diverged() {
        return Ok(f64::INFINITY);
    }
    let s = summarize(&log, cfg.plant.delay_steps, cfg.protocol.transient_end)?;
    Ok(s.model_stable_mm + 0.25 * s.track_stable_mm)
}

/// Stage 2: refine sigma2 and noise_var multiplicatively around a base point
/// with short online runs; lambda is kept from the base.
pub fn stage2(
    config: &Config,
    variant: PredictorVariant,
    base: &KernelParams,
) -> Result<(KernelParams, f64)> {
    let mut best: Option<(KernelParams, f64)> = None;
    for &fs in &STAGE2_FACTORS {
        for &fn_ in &STAGE2_FACTORS {
            let params = KernelParams {
                sigma2: base.sigma2 * fs,
                noise_var: base.noise_var * fn_,
                ..base.clone()
            };
            let score = online_score(config, variant, &params)?;
            let better = match &best {
                None => true,
                Some((_, s)) => score < *s,
            };
            if better {
                best = Some((params, score));
            }
        }
    }
    Ok(best.expect("non-empty factor grid"))
}

/// Full search for the compressed-history variant. Stage 2 runs on a protocol
/// truncated to 35 s when the configured one is longer, keeping the stable
/// window while cutting cost.
pub fn tune(config: &Config, online: bool) -> Result<TuneReport> {
    let variant = PredictorVariant::Ldn3;
    let calibration = calibration_log(config)?;
    if calibration.diverged() {
        return Err(Error::Config("calibration run diverged".into()));
    }
    let ranked = stage1(
        config,
        variant,
        &calibration,
        &STAGE1_SIGMA2,
        &STAGE1_NOISE,
        &STAGE1_LAMBDA,
    )?;
    let stage1_best = ranked.first().expect("non-empty grid").0.clone();
    let mut refined = None;
    let best = if online {
        let mut short = config.clone();
        if short.protocol.duration > 35.0 && short.protocol.transient_end < 35.0 {
            short.protocol.duration = 35.0;
        }
        let (params, score) = stage2(&short, variant, &stage1_best)?;
        refined = Some((params.clone(), score));
        params
    } else {
        stage1_best
    };
    Ok(TuneReport {
        ranked_offline: ranked,
        refined,
        best,
    })
}

/// TOML fragment for pasting into a config file.
pub fn toml_fragment(params: &KernelParams) -> String {
    let mut s = String::from("[krlst]\n");
    s.push_str(&format!("sigma2 = {:e}\n", params.sigma2));
    s.push_str(&format!("noise_var = {:e}\n", params.noise_var));
    s.push_str(&format!("lambda = {}\n", params.lambda));
    s.push_str(&format!("budget = {}\n", params.budget));
    s.push_str(&format!("jitter = {:e}\n", params.jitter));
    if let Some(nt) = params.novelty_threshold {
        s.push_str(&format!("novelty_threshold = {nt:e}\n"));
    }
    s
}
