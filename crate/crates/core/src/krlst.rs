//! Online Bayesian kernel regression with forgetting and a budgeted basis
//! dictionary (a kernel recursive least-squares tracker).
//!
//! One shared dictionary and posterior covariance serve all output dimensions;
//! each output keeps its own mean-weight column. Every update is exact block
//! algebra on the jittered kernel Gram matrix, so with forgetting off and the
//! budget never hit the model reproduces the batch Gaussian-process posterior.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    /// Squared Gaussian kernel width, in feature-space units squared.
    pub sigma2: f64,
    /// Observation noise variance (doubles as the ridge regularizer).
    pub noise_var: f64,
    /// Forgetting factor in (0, 1]; 1 disables forgetting.
    pub lambda: f64,
    /// Max dictionary size.
    pub budget: usize,
    /// Diagonal stabilizer added to the dictionary Gram matrix.
    pub jitter: f64,
    /// Novelty gate on gamma^2 for dictionary growth; None means 10 * jitter.
    #[serde(default)]
    pub novelty_threshold: Option<f64>,
}

impl Default for KernelParams {
    fn default() -> Self {
        KernelParams {
            sigma2: 1.0,
            noise_var: 1e-4,
            lambda: 1.0,
            budget: 80,
            jitter: 1e-8,
            novelty_threshold: None,
        }
    }
}

impl KernelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 > 0.0) {
            return Err(Error::Config(format!("sigma2 must be > 0, got {}", self.sigma2)));
        }
        if !(self.noise_var > 0.0) {
            return Err(Error::Config(format!(
                "noise_var must be > 0, got {}",
                self.noise_var
            )));
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::Config(format!(
                "lambda must be in (0, 1], got {}",
                self.lambda
            )));
        }
        if self.budget < 1 {
            return Err(Error::Config("budget must be >= 1".into()));
        }
        if self.jitter < 0.0 {
            return Err(Error::Config(format!("jitter must be >= 0, got {}", self.jitter)));
        }
        Ok(())
    }

    pub fn novelty_gate(&self) -> f64 {
        self.novelty_threshold.unwrap_or(10.0 * self.jitter)
    }
}

/// Gaussian kernel exp(-|a - b|^2 / (2 sigma2)).
pub fn kernel(a: &[f64], b: &[f64], sigma2: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidDimension(format!(
            "kernel arguments of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((-d2 / (2.0 * sigma2)).exp())
}

#[derive(Debug, Clone)]
pub struct KrlstModel {
    pub params: KernelParams,
    /// Stored basis feature vectors, at most `budget` of them.
    pub dictionary: Vec<DVector<f64>>,
    /// M x n_out posterior mean weights, one column per output dimension.
    pub mu: DMatrix<f64>,
    /// M x M posterior covariance shared across outputs.
    pub sigma_cov: DMatrix<f64>,
    /// M x M inverse of the jittered dictionary Gram matrix.
    pub q_inv: DMatrix<f64>,
    /// M x M jittered dictionary Gram matrix.
    k_dict: DMatrix<f64>,
    n_out: usize,
    trains: u64,
}

impl KrlstModel {
    pub fn new(params: KernelParams, n_out: usize) -> Result<Self> {
        params.validate()?;
        if n_out == 0 {
            return Err(Error::InvalidDimension("model needs >= 1 output".into()));
        }
        Ok(KrlstModel {
            params,
            dictionary: Vec::new(),
            mu: DMatrix::zeros(0, n_out),
            sigma_cov: DMatrix::zeros(0, 0),
            q_inv: DMatrix::zeros(0, 0),
            k_dict: DMatrix::zeros(0, 0),
            n_out,
            trains: 0,
        })
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn dictionary_size(&self) -> usize {
        self.dictionary.len()
    }

    pub fn train_count(&self) -> u64 {
        self.trains
    }

    /// Jittered kernel Gram matrix of the current dictionary (for invariant checks).
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.k_dict
    }

    fn kernel_vector(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        let mut kt = DVector::zeros(self.dictionary.len());
        for (i, x) in self.dictionary.iter().enumerate() {
            kt[i] = kernel(x.as_slice(), z.as_slice(), self.params.sigma2)?;
        }
        Ok(kt)
    }

    /// Posterior predictive at z: per-output mean and one shared variance.
    /// The latent variance is clamped at zero before the observation noise is
    /// added, so the result is always >= noise_var.
    pub fn predict(&self, z: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
        if self.dictionary.is_empty() {
            // Prior: zero mean, unit Gaussian self-similarity plus noise.
            return Ok((DVector::zeros(self.n_out), 1.0 + self.params.noise_var));
        }
        let kt = self.kernel_vector(z)?;
        let q = &self.q_inv * &kt;
        let gamma2 = 1.0 + self.params.jitter - kt.dot(&q);
        let mean = self.mu.transpose() * &q;
        let sigma_f2 = (gamma2 + q.dot(&(&self.sigma_cov * &q))).max(0.0);
        Ok((mean, sigma_f2 + self.params.noise_var))
    }

    /// One online update: forgetting, then a Bayesian update with the
    /// observation (growing the dictionary when the input is novel), then
    /// pruning back to budget.
    pub fn train(&mut self, z: &DVector<f64>, y: &DVector<f64>) -> Result<()> {
        if y.len() != self.n_out {
            return Err(Error::InvalidDimension(format!(
                "target of length {} for {} outputs",
                y.len(),
                self.n_out
            )));
        }
        if z.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("krlst training pair".into()));
        }
        self.trains += 1;
        let jitter = self.params.jitter;
        let noise = self.params.noise_var;
        let lambda = self.params.lambda;

        // Forgetting: blend the posterior toward the prior.
        if !self.dictionary.is_empty() && lambda < 1.0 {
            self.sigma_cov = &self.sigma_cov * lambda + &self.k_dict * (1.0 - lambda);
            self.mu *= lambda.sqrt();
        }

        if self.dictionary.is_empty() {
            let g2 = 1.0 + jitter;
            let sigma_y2 = g2 + noise;
            if sigma_y2 < jitter {
                return Err(Error::NumericalDegeneracy(
                    "predictive variance below jitter on first update".into(),
                ));
            }
            let gain = g2 / sigma_y2;
            self.dictionary.push(z.clone());
            self.k_dict = DMatrix::from_element(1, 1, g2);
            self.q_inv = DMatrix::from_element(1, 1, 1.0 / g2);
            self.mu = DMatrix::from_fn(1, self.n_out, |_, c| gain * y[c]);
            self.sigma_cov = DMatrix::from_element(1, 1, g2 - g2 * g2 / sigma_y2);
            return Ok(());
        }

        let kt = self.kernel_vector(z)?;
        let q = &self.q_inv * &kt;
        let gamma2 = 1.0 + jitter - kt.dot(&q);
        let y_hat = self.mu.transpose() * &q;
        let p = &self.sigma_cov * &q;
        let sigma_f2 = gamma2 + q.dot(&p);
        let sigma_y2 = sigma_f2 + noise;
        if !(sigma_y2 >= jitter) {
            return Err(Error::NumericalDegeneracy(format!(
                "predictive variance {sigma_y2:.3e} underflowed below jitter {jitter:.3e}; \
                 hyperparameters are ill-conditioned"
            )));
        }
        let residual = y - &y_hat;

        if gamma2 > self.params.novelty_gate() {
            // Novel input: exact block growth of Gram, inverse, mean, covariance.
            if gamma2 <= jitter {
                return Err(Error::NumericalDegeneracy(format!(
                    "growing with kernel novelty {gamma2:.3e} <= jitter {jitter:.3e}; \
                     raise the novelty threshold or jitter"
                )));
            }
            let m = self.dictionary.len();

            let mut k_new = DMatrix::zeros(m + 1, m + 1);
            k_new.view_mut((0, 0), (m, m)).copy_from(&self.k_dict);
            for i in 0..m {
                k_new[(i, m)] = kt[i];
                k_new[(m, i)] = kt[i];
            }
            k_new[(m, m)] = 1.0 + jitter;
            self.k_dict = k_new;

            let mut qi_new = DMatrix::zeros(m + 1, m + 1);
            {
                let mut top = qi_new.view_mut((0, 0), (m, m));
                top.copy_from(&self.q_inv);
                for i in 0..m {
                    for j in 0..m {
                        top[(i, j)] += q[i] * q[j] / gamma2;
                    }
                }
            }
            for i in 0..m {
                qi_new[(i, m)] = -q[i] / gamma2;
                qi_new[(m, i)] = -q[i] / gamma2;
            }
            qi_new[(m, m)] = 1.0 / gamma2;
            self.q_inv = qi_new;

            // Gain over the extended state [p; sigma_f2] / sigma_y2.
            let mut ext = DVector::zeros(m + 1);
            ext.rows_mut(0, m).copy_from(&p);
            ext[m] = sigma_f2;

            let mut mu_new = DMatrix::zeros(m + 1, self.n_out);
            mu_new.view_mut((0, 0), (m, self.n_out)).copy_from(&self.mu);
            for c in 0..self.n_out {
                mu_new[(m, c)] = y_hat[c];
            }
            for i in 0..=m {
                for c in 0..self.n_out {
                    mu_new[(i, c)] += ext[i] / sigma_y2 * residual[c];
                }
            }
            self.mu = mu_new;

            let mut s_new = DMatrix::zeros(m + 1, m + 1);
            s_new.view_mut((0, 0), (m, m)).copy_from(&self.sigma_cov);
            for i in 0..m {
                s_new[(i, m)] = p[i];
                s_new[(m, i)] = p[i];
            }
            s_new[(m, m)] = sigma_f2;
            for i in 0..=m {
                for j in 0..=m {
                    s_new[(i, j)] -= ext[i] * ext[j] / sigma_y2;
                }
            }
            self.sigma_cov = s_new;

            self.dictionary.push(z.clone());
            if self.dictionary.len() > self.params.budget {
                self.prune_to_budget();
            }
        } else {
            // Familiar input: project the observation onto the existing bases.
            for i in 0..self.dictionary.len() {
                let g = p[i] / sigma_y2;
                for c in 0..self.n_out {
                    self.mu[(i, c)] += g * residual[c];
                }
            }
            let scale = 1.0 / sigma_y2;
            for i in 0..self.dictionary.len() {
                for j in 0..self.dictionary.len() {
                    self.sigma_cov[(i, j)] -= p[i] * p[j] * scale;
                }
            }
        }
        Ok(())
    }

    /// Remove the basis with the smallest error score (squared mean weight
    /// summed over outputs, normalized by the inverse-Gram diagonal); ties go
    /// to the lowest index. All matrices are reduced consistently, with the
    /// inverse Gram downdated by its Schur complement.
    pub fn prune_to_budget(&mut self) {
        let m = self.dictionary.len();
        debug_assert!(m == self.params.budget + 1, "prune is called right after growth");
        let weights = &self.q_inv * &self.mu;
        let mut drop = 0usize;
        let mut best = f64::INFINITY;
        for i in 0..m {
            let w2: f64 = (0..self.n_out).map(|c| weights[(i, c)].powi(2)).sum();
            let score = w2 / self.q_inv[(i, i)];
            if score < best {
                best = score;
                drop = i;
            }
        }
        let keep: Vec<usize> = (0..m).filter(|&k| k != drop).collect();
        let n = keep.len();

        let mut qi = DMatrix::zeros(n, n);
        let pii = self.q_inv[(drop, drop)];
        for (a, &i) in keep.iter().enumerate() {
            for (b, &j) in keep.iter().enumerate() {
                qi[(a, b)] =
                    self.q_inv[(i, j)] - self.q_inv[(i, drop)] * self.q_inv[(drop, j)] / pii;
            }
        }
        self.q_inv = qi;

        let select = |mat: &DMatrix<f64>| {
            DMatrix::from_fn(n, n, |a, b| mat[(keep[a], keep[b])])
        };
        self.k_dict = select(&self.k_dict);
        self.sigma_cov = select(&self.sigma_cov);
        self.mu = DMatrix::from_fn(n, self.n_out, |a, c| self.mu[(keep[a], c)]);
        self.dictionary = keep.iter().map(|&k| self.dictionary[k].clone()).collect();
    }

    /// Write the dictionary and mean weights as CSV (one basis per row:
    /// features, then per-output weights q_inv * mu).
    pub fn dump_snapshot<W: std::io::Write>(&self, out: &mut W) -> Result<()> {
        let weights = &self.q_inv * &self.mu;
        for (i, x) in self.dictionary.iter().enumerate() {
            let mut cols: Vec<String> = x.iter().map(|v| format!("{v:.16e}")).collect();
            for c in 0..self.n_out {
                cols.push(format!("{:.16e}", weights[(i, c)]));
            }
            writeln!(out, "{}", cols.join(","))?;
        }
        Ok(())
    }
}
