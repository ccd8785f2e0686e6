//! One closed-loop run: reference generation, observer, predictor, controller,
//! and the ground-truth plant, logged per tick. Runs are pure functions of
//! (config, variant, gain, seed): the plant noise stream is seeded with
//! seed*1000+1 and the controller's model mismatch with seed*1000+2, so a seed
//! pins both and nothing else consumes randomness.

use nalgebra::{DVector, Vector6};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::controller::{controller_tick, observer_step, ControllerState, GainCondition};
use crate::error::{Error, Result};
use crate::harness::config::Config;
use crate::harness::reference::reference;
use crate::plant::{perturb_params, PlantTruth};
use crate::predictor::{fit_normalizer, replay_features, Normalizer, PredictorState, PredictorVariant};

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub r: Vector6<f64>,
    pub r_dot: Vector6<f64>,
    pub x_true: Vector6<f64>,
    pub x_meas: Vector6<f64>,
    pub v_hat: Vector6<f64>,
    /// Predicted pose change over the delay (zero for the null predictor).
    pub y_hat: Vector6<f64>,
    pub u: Vector6<f64>,
    pub v_smc: Vector6<f64>,
    pub integral: Vector6<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentLog {
    pub config_hash: String,
    pub variant: PredictorVariant,
    pub gain: GainCondition,
    pub seed: u64,
    pub rows: Vec<LogRow>,
    /// Set when the run aborted early (instability guard).
    pub failure: Option<String>,
}

impl ExperimentLog {
    pub fn diverged(&self) -> bool {
        self.failure.is_some()
    }
}

pub fn noise_seed(seed: u64) -> u64 {
    seed.wrapping_mul(1000).wrapping_add(1)
}

pub fn mismatch_seed(seed: u64) -> u64 {
    seed.wrapping_mul(1000).wrapping_add(2)
}

/// Run one experiment. Learning variants require the fitted normalizer from
/// the calibration run; the null predictor takes None.
pub fn run_experiment(
    config: &Config,
    variant: PredictorVariant,
    gain: GainCondition,
    seed: u64,
    normalizer: Option<&Normalizer>,
) -> Result<ExperimentLog> {
    if variant.is_learning() && normalizer.is_none() {
        return Err(Error::Config(format!(
            "variant {} needs a fitted normalizer",
            variant.as_str()
        )));
    }
    let params = config.plant_params();
    let gains = config.gain_set(gain)?;
    let ldn = config.ldn_system()?;
    let proto = &config.protocol;
    let dt = proto.dt;
    let u_lim = config.controller.u_lim;

    // The model the controller believes in: the true plant with multiplicative
    // mismatch on a_lin, b1, and fa_coeff.
    let mut mismatch_rng = ChaCha8Rng::seed_from_u64(mismatch_seed(seed));
    let model = perturb_params(&params, config.controller.mismatch_fraction, &mut mismatch_rng);

    let mut truth = PlantTruth::new(&params, noise_seed(seed));
    let mut ctrl = ControllerState::default();
    let mut pred = PredictorState::new(
        variant,
        &ldn,
        config.kernel_params(),
        params.delay_steps,
        normalizer.cloned(),
    )?;

    let ticks = proto.ticks();
    let mut rows = Vec::with_capacity(ticks);
    let mut failure = None;
    let mut x_meas = truth.measure(&params);
    let mut u_prev = Vector6::zeros();

    for k in 0..ticks {
        let t = k as f64 * dt;
        let (r, r_dot) = reference(t, proto)?;
        observer_step(&mut ctrl, &x_meas, &gains, dt);
        let v_hat = ctrl.v_hat;
        pred.tick_and_train(&x_meas, &v_hat, &u_prev, k as u64)?;
        let (y_hat, x_pred) = pred.infer(&x_meas, &v_hat)?;
        let terms = controller_tick(
            &mut ctrl, &x_meas, &x_pred, &r, &r_dot, &gains, &model, dt, u_lim,
        )?;
        rows.push(LogRow {
            t,
            r,
            r_dot,
            x_true: truth.x,
            x_meas,
            v_hat,
            y_hat,
            u: terms.u,
            v_smc: terms.v_smc,
            integral: terms.integral_term,
        });
        match truth.step(&terms.u, &params) {
            Ok(m) => x_meas = m,
            Err(Error::Diverged { tick, norm, bound }) => {
                failure = Some(format!(
                    "diverged at tick {tick}: |x| = {norm:.3} > {bound:.3}"
                ));
                break;
            }
            Err(e) => return Err(e),
        }
        u_prev = terms.u;
    }

    Ok(ExperimentLog {
        config_hash: config.hash(),
        variant,
        gain,
        seed,
        rows,
        failure,
    })
}

/// The calibration run: null predictor, low gain, fixed seed. Every learning
/// variant's normalizer is fitted from this one log, so normalization is a
/// frozen preprocessing step, not something tuned per run.
pub fn calibration_log(config: &Config) -> Result<ExperimentLog> {
    run_experiment(
        config,
        PredictorVariant::NoPred,
        GainCondition::Low,
        config.harness.calibration_seed,
        None,
    )
}

/// Fit a variant's feature normalizer by replaying its memory over the
/// calibration log.
pub fn normalizer_for(
    config: &Config,
    variant: PredictorVariant,
    calibration: &ExperimentLog,
) -> Result<Normalizer> {
    if calibration.diverged() {
        return Err(Error::Config("calibration run diverged".into()));
    }
    let ldn = config.ldn_system()?;
    let rows: Vec<DVector<f64>> = replay_features(
        variant,
        &ldn,
        calibration.rows.iter().map(|row| (row.x_meas, row.v_hat, row.u)),
    )?;
    fit_normalizer(&rows)
}
