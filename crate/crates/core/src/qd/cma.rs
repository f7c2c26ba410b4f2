//! (μ/μ_w, λ)-CMA-ES with the standard default strategy parameters.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Smallest eigenvalue kept in the covariance.
pub const EIGEN_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmaState {
    pub mean: DVector<f64>,
    pub sigma: f64,
    pub covariance: DMatrix<f64>,
    pub p_sigma: DVector<f64>,
    pub p_c: DVector<f64>,
    pub weights: Vec<f64>,
    pub mu_eff: f64,
    pub c_sigma: f64,
    pub d_sigma: f64,
    pub c_c: f64,
    pub c_1: f64,
    pub c_mu: f64,
    pub generation: usize,
    /// Number of degenerate-covariance resets so far.
    pub resets: usize,
    #[serde(skip)]
    eigen: Option<(DMatrix<f64>, DVector<f64>)>,
}

/// Offspring count for dimension `n`.
pub fn population_size(n: usize) -> usize {
    4 + (3.0 * (n.max(1) as f64).ln()).floor() as usize
}

impl CmaState {
    /// Isotropic start: covariance is the identity.
    pub fn new(mean: DVector<f64>, sigma: f64) -> CmaState {
        let n = mean.len();
        CmaState::with_covariance(mean, sigma, DMatrix::identity(n, n))
    }

    /// Diagonal start with per-coordinate standard deviations `scales`
    /// (`sigma` = 1, `C = diag(scales²)`).
    pub fn with_scales(mean: DVector<f64>, scales: &[f64]) -> CmaState {
        let c = DMatrix::from_diagonal(&DVector::from_iterator(
            scales.len(),
            scales.iter().map(|s| s * s),
        ));
        CmaState::with_covariance(mean, 1.0, c)
    }

    fn with_covariance(mean: DVector<f64>, sigma: f64, covariance: DMatrix<f64>) -> CmaState {
        let n = mean.len();
        let nf = n as f64;
        let lambda = population_size(n);
        let mu = lambda / 2;
        let raw: Vec<f64> = (0..mu)
            .map(|i| (mu as f64 + 0.5).ln() - ((i + 1) as f64).ln())
            .collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let c_sigma = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
        let c_1 = 2.0 / ((nf + 1.3).powi(2) + mu_eff);
        let c_mu =
            (1.0 - c_1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0).powi(2) + mu_eff));
        let mut s = CmaState {
            mean,
            sigma,
            covariance,
            p_sigma: DVector::zeros(n),
            p_c: DVector::zeros(n),
            weights,
            mu_eff,
            c_sigma,
            d_sigma,
            c_c,
            c_1,
            c_mu,
            generation: 0,
            resets: 0,
            eigen: None,
        };
        s.refresh_eigen();
        s
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn lambda(&self) -> usize {
        population_size(self.dim())
    }

    /// Eigenvalues of the covariance, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut v: Vec<f64> = SymmetricEigen::new(self.covariance.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        v.sort_by(f64::total_cmp);
        v
    }

    fn expected_norm(&self) -> f64 {
        let n = self.dim() as f64;
        n.sqrt() * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n))
    }

    /// Symmetrizes, floors eigenvalues and caches `B`, `D`; resets the
    /// covariance when it is not finite.
    fn refresh_eigen(&mut self) {
        let n = self.dim();
        let c = (&self.covariance + self.covariance.transpose()) * 0.5;
        let finite = c.iter().all(|x| x.is_finite()) && self.sigma.is_finite() && self.sigma > 0.0;
        let eig = finite
            .then(|| SymmetricEigen::new(c))
            .filter(|e| e.eigenvalues.iter().all(|x| x.is_finite()));
        let Some(eig) = eig else {
            log::warn!(
                "degenerate covariance at generation {}: resetting",
                self.generation
            );
            self.covariance = DMatrix::identity(n, n);
            self.sigma = if self.sigma.is_finite() && self.sigma > 0.0 {
                self.sigma / 2.0
            } else {
                1.0
            };
            self.p_sigma.fill(0.0);
            self.p_c.fill(0.0);
            self.resets += 1;
            self.eigen = Some((DMatrix::identity(n, n), DVector::from_element(n, 1.0)));
            return;
        };
        let vals = eig.eigenvalues.map(|v| v.max(EIGEN_FLOOR));
        let b = eig.eigenvectors;
        self.covariance = &b * DMatrix::from_diagonal(&vals) * b.transpose();
        self.eigen = Some((b, vals.map(f64::sqrt)));
    }

    fn basis(&self) -> &(DMatrix<f64>, DVector<f64>) {
        self.eigen
            .as_ref()
            .expect("eigen cache is filled after every update")
    }

    /// Draws λ candidates from `N(mean, σ²C)`.
    pub fn ask(&mut self, rng: &mut impl Rng) -> Vec<DVector<f64>> {
        if self.eigen.is_none() {
            self.refresh_eigen();
        }
        let n = self.dim();
        let (b, d) = self.basis();
        (0..self.lambda())
            .map(|_| {
                let z =
                    DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
                &self.mean + b * d.component_mul(&z) * self.sigma
            })
            .collect()
    }

    /// Updates the distribution from candidates and their objective values
    /// (lower is better). Ties keep candidate order.
    pub fn tell(&mut self, candidates: &[DVector<f64>], values: &[f64]) {
        assert_eq!(candidates.len(), values.len());
        let n = self.dim();
        let nf = n as f64;
        let mut order: Vec<usize> = (0..candidates.len()).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let old = self.mean.clone();
        let ys: Vec<DVector<f64>> = order
            .iter()
            .take(self.weights.len())
            .map(|&i| (&candidates[i] - &old) / self.sigma)
            .collect();
        let y_w = ys
            .iter()
            .zip(&self.weights)
            .fold(DVector::zeros(n), |acc, (y, w)| acc + y * *w);
        self.mean = &old + &y_w * self.sigma;

        let (b, d) = self.basis().clone();
        let c_inv_sqrt_y = &b * (b.transpose() * &y_w).component_div(&d);
        self.p_sigma = &self.p_sigma * (1.0 - self.c_sigma)
            + c_inv_sqrt_y * (self.c_sigma * (2.0 - self.c_sigma) * self.mu_eff).sqrt();
        let g = (self.generation + 1) as f64;
        let ps_norm = self.p_sigma.norm();
        let h_sigma = ps_norm / (1.0 - (1.0 - self.c_sigma).powf(2.0 * g)).sqrt()
            < (1.4 + 2.0 / (nf + 1.0)) * self.expected_norm();
        let h = if h_sigma { 1.0 } else { 0.0 };
        self.p_c = &self.p_c * (1.0 - self.c_c)
            + &y_w * (h * (self.c_c * (2.0 - self.c_c) * self.mu_eff).sqrt());

        let rank_one = &self.p_c * self.p_c.transpose();
        let rank_mu = ys
            .iter()
            .zip(&self.weights)
            .fold(DMatrix::zeros(n, n), |acc, (y, w)| {
                acc + y * y.transpose() * *w
            });
        let delta_h = (1.0 - h) * self.c_c * (2.0 - self.c_c);
        self.covariance = &self.covariance * (1.0 - self.c_1 - self.c_mu)
            + (rank_one + &self.covariance * delta_h) * self.c_1
            + rank_mu * self.c_mu;
        self.sigma *=
            ((self.c_sigma / self.d_sigma) * (ps_norm / self.expected_norm() - 1.0)).exp();
        self.generation += 1;
        self.refresh_eigen();
    }
}

/// One generation: sample, evaluate (in parallel), update. Returns the new
/// state and the evaluated population.
pub fn cma_step(
    state: &CmaState,
    rng: &mut impl Rng,
    objective: impl Fn(&DVector<f64>) -> f64 + Sync,
) -> (CmaState, Vec<(DVector<f64>, f64)>) {
    let mut next = state.clone();
    let xs = next.ask(rng);
    let fs: Vec<f64> = xs.par_iter().map(&objective).collect();
    next.tell(&xs, &fs);
    (next, xs.into_iter().zip(fs).collect())
}
