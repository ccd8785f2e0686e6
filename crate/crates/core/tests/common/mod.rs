//! Shared helpers for integration suites: a dense batch Gaussian-process
//! oracle and uniform sampling on the hypercube.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use softsmith_core::krlst::{kernel, KernelParams};

pub struct BatchGp {
    points: Vec<DVector<f64>>,
    alpha: DMatrix<f64>,
    solve: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    sigma2: f64,
    jitter: f64,
    noise: f64,
}

impl BatchGp {
    /// Solve the full regularized Gram system for the given prefix of points.
    pub fn fit(points: &[DVector<f64>], targets: &[DVector<f64>], p: &KernelParams) -> Self {
        let n = points.len();
        let n_out = targets[0].len();
        let mut gram = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                gram[(i, j)] =
                    kernel(points[i].as_slice(), points[j].as_slice(), p.sigma2).unwrap();
            }
            gram[(i, i)] += p.jitter + p.noise_var;
        }
        let solve = gram.lu();
        let mut y = DMatrix::zeros(n, n_out);
        for (i, t) in targets.iter().enumerate() {
            y.set_row(i, &t.transpose());
        }
        let alpha = solve.solve(&y).expect("regularized Gram is invertible");
        BatchGp {
            points: points.to_vec(),
            alpha,
            solve,
            sigma2: p.sigma2,
            jitter: p.jitter,
            noise: p.noise_var,
        }
    }

    pub fn predict(&self, q: &DVector<f64>) -> (DVector<f64>, f64) {
        let n = self.points.len();
        let kq = DVector::from_fn(n, |i, _| {
            kernel(q.as_slice(), self.points[i].as_slice(), self.sigma2).unwrap()
        });
        let mean = self.alpha.transpose() * &kq;
        let w = self.solve.solve(&kq).unwrap();
        let var = 1.0 + self.jitter + self.noise - kq.dot(&w);
        (mean, var)
    }
}

pub fn uniform_point(rng: &mut ChaCha8Rng, dim: usize) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| rng.gen::<f64>() * 2.0 - 1.0)
}

pub fn smooth_targets(z: &DVector<f64>) -> DVector<f64> {
    DVector::from_vec(vec![
        (z[0] * 1.3).sin() + 0.5 * z[1] * z[2],
        (z[3] * 0.9).cos() - z[4],
    ])
}
