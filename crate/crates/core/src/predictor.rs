//! Learned delay predictor: assembles features from the measured pose, the
//! observer velocity, and the recent input history (Legendre-compressed or
//! raw), trains an online kernel regressor on delayed pairs, and emits the
//! predicted pose the controller closes its loop on.
//!
//! Within a tick the order is: push the previously chosen command into
//! memory, train with the pair whose target just became observable, then
//! infer for the current control step. Features are always built before the
//! current tick's command exists, so training features and inference features
//! have the same construction.

use nalgebra::{DVector, Vector6};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::krlst::{KernelParams, KrlstModel};
use crate::ldn::{LdnBank, LdnSystem};

pub const CHANNELS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PredictorVariant {
    /// Legendre-compressed input history, 3 states per channel.
    Ldn3,
    /// Raw input history truncated to the 3 most recent commands.
    Hist3,
    /// Raw input history of all 7 in-flight commands.
    Hist7,
    /// Null predictor: predicted pose change is identically zero.
    NoPred,
}

impl PredictorVariant {
    pub const ALL: [PredictorVariant; 4] = [
        PredictorVariant::NoPred,
        PredictorVariant::Ldn3,
        PredictorVariant::Hist3,
        PredictorVariant::Hist7,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PredictorVariant::Ldn3 => "ldn3",
            PredictorVariant::Hist3 => "hist3",
            PredictorVariant::Hist7 => "hist7",
            PredictorVariant::NoPred => "nopred",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ldn3" => Ok(PredictorVariant::Ldn3),
            "hist3" => Ok(PredictorVariant::Hist3),
            "hist7" => Ok(PredictorVariant::Hist7),
            "nopred" => Ok(PredictorVariant::NoPred),
            other => Err(Error::Config(format!("unknown predictor variant '{other}'"))),
        }
    }

    /// Memory states per input channel.
    pub fn history_states_per_channel(&self) -> usize {
        match self {
            PredictorVariant::Ldn3 | PredictorVariant::Hist3 => 3,
            PredictorVariant::Hist7 => 7,
            PredictorVariant::NoPred => 0,
        }
    }

    /// Feature dimension: pose (6) + velocity (6) + memory (6 per state).
    pub fn feature_dim(&self) -> usize {
        match self {
            PredictorVariant::NoPred => 0,
            v => 12 + CHANNELS * v.history_states_per_channel(),
        }
    }

    pub fn is_learning(&self) -> bool {
        !matches!(self, PredictorVariant::NoPred)
    }
}

/// Frozen per-feature affine normalizer: z = (feature - offset) * scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub offset: DVector<f64>,
    /// Reciprocal standard deviation, floored.
    pub scale: DVector<f64>,
}

impl Normalizer {
    pub fn identity(dim: usize) -> Self {
        Normalizer {
            offset: DVector::zeros(dim),
            scale: DVector::from_element(dim, 1.0),
        }
    }

    pub fn apply(&self, feat: &DVector<f64>) -> Result<DVector<f64>> {
        if feat.len() != self.offset.len() {
            return Err(Error::InvalidDimension(format!(
                "normalizer fitted for {} features, got {}",
                self.offset.len(),
                feat.len()
            )));
        }
        Ok(DVector::from_fn(feat.len(), |i, _| {
            (feat[i] - self.offset[i]) * self.scale[i]
        }))
    }
}

/// Fit a z-score normalizer (offset = mean, scale = 1/std with std floored at
/// 1e-9) from raw feature rows.
pub fn fit_normalizer(rows: &[DVector<f64>]) -> Result<Normalizer> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::Config("normalizer needs a non-empty calibration log".into()));
    }
    let dim = rows[0].len();
    let mut mean = DVector::zeros(dim);
    for r in rows {
        if r.len() != dim {
            return Err(Error::InvalidDimension("ragged calibration features".into()));
        }
        mean += r;
    }
    mean /= n as f64;
    let mut var = DVector::zeros(dim);
    for r in rows {
        for i in 0..dim {
            var[i] += (r[i] - mean[i]).powi(2);
        }
    }
    var /= n as f64;
    let scale = DVector::from_fn(dim, |i, _| 1.0 / var[i].sqrt().max(1e-9));
    Ok(Normalizer { offset: mean, scale })
}

/// The input-history memory of one predictor.
#[derive(Debug, Clone)]
enum Memory {
    Ldn(LdnBank),
    Raw { window: VecDeque<Vector6<f64>>, take: usize },
    None,
}

impl Memory {
    fn push(&mut self, u: &Vector6<f64>) -> Result<()> {
        match self {
            Memory::Ldn(bank) => bank.step(u.as_slice()),
            Memory::Raw { window, .. } => {
                window.pop_front();
                window.push_back(*u);
                Ok(())
            }
            Memory::None => Ok(()),
        }
    }

    /// Flattened memory features, oldest command first for raw windows.
    fn flattened(&self) -> Vec<f64> {
        match self {
            Memory::Ldn(bank) => bank.flattened(),
            Memory::Raw { window, take } => {
                let skip = window.len() - take;
                let mut out = Vec::with_capacity(take * CHANNELS);
                for u in window.iter().skip(skip) {
                    out.extend_from_slice(u.as_slice());
                }
                out
            }
            Memory::None => Vec::new(),
        }
    }
}

fn build_memory(variant: PredictorVariant, ldn: &LdnSystem) -> Memory {
    match variant {
        PredictorVariant::Ldn3 => Memory::Ldn(LdnBank::new(ldn.clone(), CHANNELS)),
        PredictorVariant::Hist3 => Memory::Raw {
            window: std::iter::repeat(Vector6::zeros()).take(7).collect(),
            take: 3,
        },
        PredictorVariant::Hist7 => Memory::Raw {
            window: std::iter::repeat(Vector6::zeros()).take(7).collect(),
            take: 7,
        },
        PredictorVariant::NoPred => Memory::None,
    }
}

/// Assemble and normalize one feature vector [pose, velocity, memory].
pub fn build_features(
    x: &Vector6<f64>,
    v_hat: &Vector6<f64>,
    memory: &[f64],
    normalizer: &Normalizer,
) -> Result<DVector<f64>> {
    let mut raw = Vec::with_capacity(12 + memory.len());
    raw.extend_from_slice(x.as_slice());
    raw.extend_from_slice(v_hat.as_slice());
    raw.extend_from_slice(memory);
    normalizer.apply(&DVector::from_vec(raw))
}

#[derive(Debug, Clone)]
pub struct PredictorState {
    pub variant: PredictorVariant,
    memory: Memory,
    normalizer: Option<Normalizer>,
    pub model: Option<KrlstModel>,
    /// Pending (tick, features, pose) pairs awaiting their delayed target.
    train_buffer: VecDeque<(u64, DVector<f64>, Vector6<f64>)>,
    pub last_prediction: Vector6<f64>,
    delay_steps: usize,
    expected_tick: u64,
    /// Features assembled by the current tick's update, reused by infer.
    current_features: Option<DVector<f64>>,
    trains: u64,
}

impl PredictorState {
    /// A learning predictor needs a fitted normalizer; pass None for the null
    /// predictor or for calibration runs (prediction stays zero, raw features
    /// are still assembled so they can be logged).
    pub fn new(
        variant: PredictorVariant,
        ldn: &LdnSystem,
        kernel: KernelParams,
        delay_steps: usize,
        normalizer: Option<Normalizer>,
    ) -> Result<Self> {
        if let Some(n) = &normalizer {
            if n.offset.len() != variant.feature_dim() {
                return Err(Error::InvalidDimension(format!(
                    "normalizer dimension {} does not match variant {} ({} features)",
                    n.offset.len(),
                    variant.as_str(),
                    variant.feature_dim()
                )));
            }
        }
        let model = if variant.is_learning() && normalizer.is_some() {
            Some(KrlstModel::new(kernel, CHANNELS)?)
        } else {
            None
        };
        Ok(PredictorState {
            variant,
            memory: build_memory(variant, ldn),
            normalizer,
            model,
            train_buffer: VecDeque::with_capacity(2 * delay_steps.max(1)),
            last_prediction: Vector6::zeros(),
            delay_steps,
            expected_tick: 0,
            current_features: None,
            trains: 0,
        })
    }

    pub fn train_count(&self) -> u64 {
        self.trains
    }

    /// The raw (unnormalized) features of the current tick, for calibration
    /// logging. Only present on learning variants.
    pub fn current_raw_features(&self) -> Option<&DVector<f64>> {
        if self.normalizer.is_none() {
            self.current_features.as_ref()
        } else {
            None
        }
    }

    /// Per-tick update, called once per control tick with the command chosen
    /// on the previous tick (zero at tick 0). Pushes that command into the
    /// input memory, trains the regressor with the pair from delay_steps ticks
    /// ago (the measured pose just made its target observable), and buffers
    /// this tick's (features, pose) pair for its own delayed training.
    pub fn tick_and_train(
        &mut self,
        x_meas: &Vector6<f64>,
        v_hat: &Vector6<f64>,
        u_prev: &Vector6<f64>,
        tick: u64,
    ) -> Result<()> {
        if tick != self.expected_tick {
            return Err(Error::TickDiscontinuity {
                expected: self.expected_tick,
                got: tick,
            });
        }
        self.expected_tick += 1;
        self.memory.push(u_prev)?;
        self.current_features = None;

        if !self.variant.is_learning() {
            return Ok(());
        }
        let mem = self.memory.flattened();
        let feats = match &self.normalizer {
            Some(norm) => build_features(x_meas, v_hat, &mem, norm)?,
            None => {
                // Calibration mode: expose raw features, skip training.
                let ident = Normalizer::identity(self.variant.feature_dim());
                self.current_features = Some(build_features(x_meas, v_hat, &mem, &ident)?);
                return Ok(());
            }
        };

        if self.delay_steps > 0 {
            if let Some(model) = &mut self.model {
                if let Some((front_tick, _, _)) = self.train_buffer.front() {
                    debug_assert!(*front_tick + self.delay_steps as u64 >= tick, "pair skipped");
                }
                if self
                    .train_buffer
                    .front()
                    .is_some_and(|(t, _, _)| t + self.delay_steps as u64 == tick)
                {
                    let (_, feats_old, x_old) = self.train_buffer.pop_front().expect("front exists");
                    let target = x_meas - x_old;
                    model.train(&feats_old, &DVector::from_row_slice(target.as_slice()))?;
                    self.trains += 1;
                }
            }
            self.train_buffer.push_back((tick, feats.clone(), *x_meas));
        }
        self.current_features = Some(feats);
        Ok(())
    }

    /// Predict the pose change over the delay for the current tick and the
    /// predicted pose x_p = x + y_hat the controller should act on. Requires
    /// tick_and_train to have run this tick (the memory is current).
    pub fn infer(
        &mut self,
        x_meas: &Vector6<f64>,
        _v_hat: &Vector6<f64>,
    ) -> Result<(Vector6<f64>, Vector6<f64>)> {
        let y_hat = match (&self.model, &self.current_features, &self.normalizer) {
            (Some(model), Some(feats), Some(_)) => {
                let (mean, _var) = model.predict(feats)?;
                Vector6::from_fn(|i, _| mean[i])
            }
            _ => Vector6::zeros(),
        };
        self.last_prediction = y_hat;
        Ok((y_hat, x_meas + y_hat))
    }
}

/// Rebuild the per-tick raw feature rows a variant would have seen along a
/// logged trajectory. `rows` yields (x_meas, v_hat, u) per tick in order; the
/// memory is replayed with each tick's previous command, exactly as the live
/// predictor builds it.
pub fn replay_features(
    variant: PredictorVariant,
    ldn: &LdnSystem,
    rows: impl Iterator<Item = (Vector6<f64>, Vector6<f64>, Vector6<f64>)>,
) -> Result<Vec<DVector<f64>>> {
    if !variant.is_learning() {
        return Err(Error::Config(
            "feature replay needs a learning variant".into(),
        ));
    }
    let ident = Normalizer::identity(variant.feature_dim());
    let mut memory = build_memory(variant, ldn);
    let mut out = Vec::new();
    let mut u_prev = Vector6::zeros();
    for (x_meas, v_hat, u) in rows {
        memory.push(&u_prev)?;
        let mem = memory.flattened();
        out.push(build_features(&x_meas, &v_hat, &mem, &ident)?);
        u_prev = u;
    }
    Ok(out)
}
