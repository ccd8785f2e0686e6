//! Model-based baseline controller: super-twisting sliding mode on the pose
//! error, a desired-speed computation from the (mismatched) plant model, an
//! input-inversion estimator that drives the actuator command so the modeled
//! input map matches the desired speed, and a first-order velocity observer.

use nalgebra::Vector6;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::{self, PlantParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GainCondition {
    Low,
    Medium,
    High,
}

impl GainCondition {
    pub const ALL: [GainCondition; 3] = [
        GainCondition::Low,
        GainCondition::Medium,
        GainCondition::High,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            GainCondition::Low => "low",
            GainCondition::Medium => "med",
            GainCondition::High => "high",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "low" => Ok(GainCondition::Low),
            "med" | "medium" => Ok(GainCondition::Medium),
            "high" => Ok(GainCondition::High),
            other => Err(Error::Config(format!("unknown gain condition '{other}'"))),
        }
    }

    /// Multiplier applied to the low-gain k1.
    pub fn k1_multiplier(&self) -> f64 {
        match self {
            GainCondition::Low => 1.0,
            GainCondition::Medium => 2.0,
            GainCondition::High => 3.0,
        }
    }
}

/// Diagonals of the (positive definite, diagonal) gain matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSet {
    pub k1: Vector6<f64>,
    pub k2: Vector6<f64>,
    /// Input-estimator gain diagonal.
    pub gamma: Vector6<f64>,
    /// Velocity observer gain diagonal.
    pub l_obs: Vector6<f64>,
    pub condition: GainCondition,
}

impl GainSet {
    /// The gain ladder: k1 is doubled / tripled for Medium / High, everything
    /// else stays at the low-gain values.
    pub fn ladder(
        k1_low: Vector6<f64>,
        k2: Vector6<f64>,
        gamma: Vector6<f64>,
        l_obs: Vector6<f64>,
        condition: GainCondition,
    ) -> Result<Self> {
        let set = GainSet {
            k1: k1_low * condition.k1_multiplier(),
            k2,
            gamma,
            l_obs,
            condition,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("k1", &self.k1),
            ("k2", &self.k2),
            ("gamma", &self.gamma),
            ("l_obs", &self.l_obs),
        ] {
            if v.iter().any(|g| !(*g > 0.0)) {
                return Err(Error::Config(format!(
                    "gain {name} must be strictly positive on the diagonal"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct ControllerState {
    /// Accumulated k2 * sign(e) integral of the super-twisting law.
    pub integral_term: Vector6<f64>,
    /// Current actuator command estimate (saturated).
    pub u_est: Vector6<f64>,
    /// Observer pose state.
    pub x_hat: Vector6<f64>,
    /// Observer velocity estimate.
    pub v_hat: Vector6<f64>,
}

/// Componentwise |w|^a * sgn(w) with sgn(0) = 0 (so 0^0 maps to 0).
pub fn signed_power(w: &Vector6<f64>, a: f64) -> Vector6<f64> {
    Vector6::from_fn(|i, _| {
        let wi = w[i];
        if wi == 0.0 {
            0.0
        } else {
            wi.abs().powf(a) * wi.signum()
        }
    })
}

/// Super-twisting law: integral += k2 * sgn(e) * dt, then
/// v_smc = k1 * |e|^(1/2) sgn(e) + integral.
pub fn stsmc_step(
    state: &mut ControllerState,
    e: &Vector6<f64>,
    gains: &GainSet,
    dt: f64,
) -> Vector6<f64> {
    let sgn = signed_power(e, 0.0);
    for i in 0..6 {
        state.integral_term[i] += gains.k2[i] * sgn[i] * dt;
    }
    let half = signed_power(e, 0.5);
    Vector6::from_fn(|i, _| gains.k1[i] * half[i] + state.integral_term[i])
}

/// Desired control speed v = r_dot - f(x) - v_smc.
pub fn desired_speed(
    r_dot: &Vector6<f64>,
    f_of_x: &Vector6<f64>,
    v_smc: &Vector6<f64>,
) -> Vector6<f64> {
    r_dot - f_of_x - v_smc
}

/// One forward-Euler step of the input-inversion estimator
/// u' = Gamma J(x,u)^T (v - h(x,u)), saturated to +-u_lim.
/// Returns the per-channel saturation mask of the unsaturated update.
pub fn input_estimator_step(
    state: &mut ControllerState,
    x: &Vector6<f64>,
    v: &Vector6<f64>,
    gains: &GainSet,
    model: &PlantParams,
    dt: f64,
    u_lim: f64,
) -> Result<[bool; 6]> {
    let h = plant::input_map(x, &state.u_est, model);
    let jac = plant::input_jacobian(x, &state.u_est, model);
    if jac.iter().any(|v| !v.is_finite()) || h.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("input estimator model evaluation".into()));
    }
    let residual = v - h;
    let step = jac.transpose() * residual;
    let mut sat = [false; 6];
    for i in 0..6 {
        let unclamped = state.u_est[i] + gains.gamma[i] * step[i] * dt;
        if unclamped.abs() > u_lim {
            sat[i] = true;
        }
        state.u_est[i] = unclamped.clamp(-u_lim, u_lim);
    }
    Ok(sat)
}

/// First-order velocity observer: v_hat = L (x_meas - x_hat), x_hat += v_hat dt.
pub fn observer_step(state: &mut ControllerState, x_measured: &Vector6<f64>, gains: &GainSet, dt: f64) {
    for i in 0..6 {
        state.v_hat[i] = gains.l_obs[i] * (x_measured[i] - state.x_hat[i]);
        state.x_hat[i] += state.v_hat[i] * dt;
    }
}

/// Per-tick controller internals, for logging.
#[derive(Debug, Clone, Copy)]
pub struct ControlTerms {
    pub v_smc: Vector6<f64>,
    pub integral_term: Vector6<f64>,
    pub u: Vector6<f64>,
}

/// One full control tick: sliding-mode speed from the predicted-pose error,
/// desired speed through the (perturbed) model drift, input inversion, and
/// per-channel anti-windup (the integral increment of a channel is rolled
/// back when that channel's command saturates, so the integral freezes while
/// saturated).
pub fn controller_tick(
    state: &mut ControllerState,
    x_meas: &Vector6<f64>,
    x_pred: &Vector6<f64>,
    r: &Vector6<f64>,
    r_dot: &Vector6<f64>,
    gains: &GainSet,
    model: &PlantParams,
    dt: f64,
    u_lim: f64,
) -> Result<ControlTerms> {
    let e = x_pred - r;
    let integral_before = state.integral_term;
    let v_smc = stsmc_step(state, &e, gains, dt);
    let f = plant::drift(x_meas, model);
    let v = desired_speed(r_dot, &f, &v_smc);
    let sat = input_estimator_step(state, x_meas, &v, gains, model, dt, u_lim)?;
    for i in 0..6 {
        if sat[i] {
            state.integral_term[i] = integral_before[i];
        }
    }
    Ok(ControlTerms {
        v_smc,
        integral_term: state.integral_term,
        u: state.u_est,
    })
}
