//! Legendre delay memory: a small LTI system whose p states hold the Legendre
//! coefficients of each input channel's most recent window of length theta.
//!
//! The continuous system is theta*m' = A m + B u. Discretization is exact
//! zero-order hold via the matrix exponential of the augmented system, so a
//! piecewise-constant input sampled on the step grid is represented without
//! integration error.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// One Legendre delay system: continuous matrices plus their ZOH discretization.
#[derive(Debug, Clone)]
pub struct LdnSystem {
    pub p: usize,
    pub theta: f64,
    pub dt: f64,
    pub a_cont: DMatrix<f64>,
    pub b_cont: DVector<f64>,
    pub a_disc: DMatrix<f64>,
    pub b_disc: DVector<f64>,
}

/// Memory bank: one shared system, one p-state row per input channel.
#[derive(Debug, Clone)]
pub struct LdnBank {
    pub system: LdnSystem,
    /// channels x p state matrix.
    pub states: DMatrix<f64>,
}

/// Matrix exponential by scaling-and-squaring on a Taylor series. The inputs
/// here are tiny ((p+1) square), so a plain series is both exact enough and
/// cheap.
fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let norm = m.norm();
    let s: i32 = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let a = m * 2f64.powi(-s);
    let mut term = DMatrix::<f64>::identity(n, n);
    let mut sum = DMatrix::<f64>::identity(n, n);
    for k in 1..=40 {
        term = (&term * &a) / k as f64;
        sum += &term;
        if term.norm() < 1e-18 {
            break;
        }
    }
    let mut e = sum;
    for _ in 0..s {
        e = &e * &e;
    }
    e
}

/// Build the order-p Legendre delay system for a window of `theta` seconds,
/// discretized at `dt`.
pub fn build_ldn(p: usize, theta: f64, dt: f64) -> Result<LdnSystem> {
    if p == 0 {
        return Err(Error::InvalidDimension("ldn order p must be >= 1".into()));
    }
    if !(theta > 0.0) || !(dt > 0.0) {
        return Err(Error::InvalidDimension(format!(
            "ldn window and step must be positive (theta = {theta}, dt = {dt})"
        )));
    }
    if dt >= theta {
        return Err(Error::InvalidDimension(format!(
            "ldn step must resolve the window (dt = {dt} >= theta = {theta})"
        )));
    }

    let mut a_cont = DMatrix::<f64>::zeros(p, p);
    let mut b_cont = DVector::<f64>::zeros(p);
    for i in 0..p {
        for j in 0..p {
            let sign = if i < j {
                -1.0
            } else {
                (-1f64).powi((i - j + 1) as i32)
            };
            a_cont[(i, j)] = (2 * i + 1) as f64 * sign;
        }
        b_cont[i] = (2 * i + 1) as f64 * (-1f64).powi(i as i32);
    }

    // ZOH: exp of the augmented [[A*dt/theta, B*dt/theta], [0, 0]] block.
    let mut aug = DMatrix::<f64>::zeros(p + 1, p + 1);
    let scale = dt / theta;
    for i in 0..p {
        for j in 0..p {
            aug[(i, j)] = a_cont[(i, j)] * scale;
        }
        aug[(i, p)] = b_cont[i] * scale;
    }
    let e = expm(&aug);
    let a_disc = e.view((0, 0), (p, p)).into_owned();
    let b_disc = DVector::from_fn(p, |i, _| e[(i, p)]);

    Ok(LdnSystem {
        p,
        theta,
        dt,
        a_cont,
        b_cont,
        a_disc,
        b_disc,
    })
}

impl LdnBank {
    pub fn new(system: LdnSystem, channels: usize) -> Self {
        let states = DMatrix::zeros(channels, system.p);
        LdnBank { system, states }
    }

    pub fn channels(&self) -> usize {
        self.states.nrows()
    }

    /// Advance every channel one step with its input held constant (ZOH):
    /// m <- a_disc * m + b_disc * u_channel.
    pub fn step(&mut self, u: &[f64]) -> Result<()> {
        if u.len() != self.channels() {
            return Err(Error::InvalidDimension(format!(
                "ldn step: {} inputs for {} channels",
                u.len(),
                self.channels()
            )));
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ldn step input".into()));
        }
        // states is channels x p; per channel m' = A m + B u  =>  S' = S A^T + u B^T.
        let mut next = &self.states * self.system.a_disc.transpose();
        for c in 0..self.channels() {
            for i in 0..self.system.p {
                next[(c, i)] += u[c] * self.system.b_disc[i];
            }
        }
        self.states = next;
        Ok(())
    }

    /// Decode the input at normalized window position r per channel.
    /// r = 0 is "now", r = 1 is the full-delay end of the window (theta ago);
    /// the orientation is pinned by the ring-buffer oracle test.
    pub fn decode_delayed(&self, r: f64) -> Result<Vec<f64>> {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::OutOfRange(format!(
                "ldn decode position r = {r} outside [0, 1]"
            )));
        }
        let w = decode_weights(self.system.p, r);
        Ok((0..self.channels())
            .map(|c| (0..self.system.p).map(|i| w[i] * self.states[(c, i)]).sum())
            .collect())
    }

    /// Flatten channel states row-major (channel 0's p coefficients first).
    pub fn flattened(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.channels() * self.system.p);
        for c in 0..self.channels() {
            for i in 0..self.system.p {
                out.push(self.states[(c, i)]);
            }
        }
        out
    }
}

/// Shifted-Legendre decode weights w_i(r) = (-1)^i * sum_j C(i,j) C(i+j,j) (-r)^j.
pub fn decode_weights(p: usize, r: f64) -> Vec<f64> {
    let binom = |n: usize, k: usize| -> f64 {
        let mut v = 1.0;
        for t in 0..k {
            v *= (n - t) as f64 / (k - t) as f64;
        }
        v
    };
    (0..p)
        .map(|i| {
            let s: f64 = (0..=i)
                .map(|j| binom(i, j) * binom(i + j, j) * (-r).powi(j as i32))
                .sum();
            (-1f64).powi(i as i32) * s
        })
        .collect()
}
