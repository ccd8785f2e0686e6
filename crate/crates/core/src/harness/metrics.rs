//! Scalar scores of a run: planar RMS of the tracking error and of the
//! delay-compensation modeling error, split into transient and stable phases.
//!
//! The modeling error at tick t compares the realized pose change over the
//! delay window ending at t against the prediction made at t - delay. The
//! error is assigned to the phase of t (when the target became observable),
//! matching how the training stream is scored.

use serde::{Deserialize, Serialize};

use crate::controller::GainCondition;
use crate::error::{Error, Result};
use crate::harness::experiment::ExperimentLog;
use crate::predictor::PredictorVariant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Transient,
    Stable,
}

impl Phase {
    pub const ALL: [Phase; 2] = [Phase::Transient, Phase::Stable];

    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Transient => "transient",
            Phase::Stable => "stable",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Score {
    Tracking,
    Modeling,
}

/// Planar (x, y) RMS of the chosen error over the chosen phase, in mm.
pub fn xy_rms(
    log: &ExperimentLog,
    phase: Phase,
    score: Score,
    delay_steps: usize,
    transient_end: f64,
) -> Result<f64> {
    let in_phase = |t: f64| match phase {
        Phase::Transient => t < transient_end,
        Phase::Stable => t >= transient_end,
    };
    let mut sum = 0.0;
    let mut n = 0usize;
    match score {
        Score::Tracking => {
            for row in &log.rows {
                if in_phase(row.t) {
                    let ex = row.x_meas[0] - row.r[0];
                    let ey = row.x_meas[1] - row.r[1];
                    sum += ex * ex + ey * ey;
                    n += 1;
                }
            }
        }
        Score::Modeling => {
            for k in delay_steps..log.rows.len() {
                let row = &log.rows[k];
                if in_phase(row.t) {
                    let past = &log.rows[k - delay_steps];
                    let ex = (row.x_meas[0] - past.x_meas[0]) - past.y_hat[0];
                    let ey = (row.x_meas[1] - past.x_meas[1]) - past.y_hat[1];
                    sum += ex * ex + ey * ey;
                    n += 1;
                }
            }
        }
    }
    if n == 0 {
        return Err(Error::OutOfRange(format!(
            "no samples in {} window",
            phase.as_str()
        )));
    }
    Ok((sum / n as f64).sqrt() * 1000.0)
}

/// The four headline scores of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub variant: PredictorVariant,
    pub gain: GainCondition,
    pub seed: u64,
    pub track_transient_mm: f64,
    pub track_stable_mm: f64,
    pub model_transient_mm: f64,
    pub model_stable_mm: f64,
}

pub fn summarize(
    log: &ExperimentLog,
    delay_steps: usize,
    transient_end: f64,
) -> Result<RunSummary> {
    Ok(RunSummary {
        variant: log.variant,
        gain: log.gain,
        seed: log.seed,
        track_transient_mm: xy_rms(log, Phase::Transient, Score::Tracking, delay_steps, transient_end)?,
        track_stable_mm: xy_rms(log, Phase::Stable, Score::Tracking, delay_steps, transient_end)?,
        model_transient_mm: xy_rms(log, Phase::Transient, Score::Modeling, delay_steps, transient_end)?,
        model_stable_mm: xy_rms(log, Phase::Stable, Score::Modeling, delay_steps, transient_end)?,
    })
}
