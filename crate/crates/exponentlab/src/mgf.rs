//! Log moment generating functions of log-likelihood-ratio statistics.
//!
//! For an agent observing a weighted mix of sources, the central objects are
//!
//! * the per-source log-MGF `xi_m(g, t) = log E_m[exp <t, Z^g>]` of the
//!   (M-1)-dimensional LLR vector `Z^g = (log dP_m^g/dP_0^g)_{m=1..M-1}`,
//! * the policy-weighted sum `phi_m(t, x) = sum_g x[g] xi_m(g, t)`, and
//! * the scalar pairwise function
//!   `Lambda_ij(s, x) = sum_g x[g] log E_i[(dP_j^g/dP_i^g)^s]`,
//!
//! together with their first and second derivatives. Both supported source
//! families (shared-variance Gaussian and strictly positive finite-support)
//! admit exact expressions, so no numerical integration is involved.

use crate::linalg::{dot, log_sum_exp, Mat};
use crate::scenario::{Scenario, SourceModel};

/// View of one agent's observable sources. Vectors `t`, `z` live in
/// R^{M-1} with coordinate `m - 1` standing for hypothesis `m` against
/// hypothesis 0; policies `x` are aligned with the view's source order.
#[derive(Debug, Clone)]
pub struct ModelView {
    sources: Vec<SourceModel>,
    num_hypotheses: usize,
}

impl ModelView {
    pub fn new(scenario: &Scenario, source_ids: &[usize]) -> Self {
        ModelView {
            sources: source_ids
                .iter()
                .map(|&g| scenario.sources[g].clone())
                .collect(),
            num_hypotheses: scenario.num_hypotheses(),
        }
    }

    pub fn from_sources(sources: Vec<SourceModel>, num_hypotheses: usize) -> Self {
        ModelView {
            sources,
            num_hypotheses,
        }
    }

    pub fn num_hypotheses(&self) -> usize {
        self.num_hypotheses
    }

    pub fn num_sources(&self) -> usize {
        self.sources.len()
    }

    pub fn source(&self, g: usize) -> &SourceModel {
        &self.sources[g]
    }

    /// Dimension of the LLR vector, `M - 1`.
    pub fn dim(&self) -> usize {
        self.num_hypotheses - 1
    }

    /// Linear-statistic coefficients of a Gaussian source: `Z_m = a_m y + b_m`.
    fn gaussian_coeffs(means: &[f64], variance: f64) -> (Vec<f64>, Vec<f64>) {
        let mu0 = means[0];
        let a: Vec<f64> = means[1..].iter().map(|&mu| (mu - mu0) / variance).collect();
        let b: Vec<f64> = means[1..]
            .iter()
            .map(|&mu| (mu0 * mu0 - mu * mu) / (2.0 * variance))
            .collect();
        (a, b)
    }

    /// LLR vector of a finite source at support point `y`.
    fn finite_llr(rows: &[Vec<f64>], y: usize) -> Vec<f64> {
        (1..rows.len())
            .map(|m| (rows[m][y] / rows[0][y]).ln())
            .collect()
    }

    /// `xi_m(g, t) = log E_m[exp <t, Z^g>]`.
    pub fn xi(&self, g: usize, m: usize, t: &[f64]) -> f64 {
        match &self.sources[g] {
            SourceModel::Gaussian { means, variance } => {
                let (a, b) = Self::gaussian_coeffs(means, *variance);
                let ta = dot(t, &a);
                dot(t, &b) + ta * means[m] + 0.5 * variance * ta * ta
            }
            SourceModel::Finite { rows } => {
                let terms: Vec<f64> = (0..rows[0].len())
                    .map(|y| rows[m][y].ln() + dot(t, &Self::finite_llr(rows, y)))
                    .collect();
                log_sum_exp(&terms)
            }
        }
    }

    pub fn xi_grad(&self, g: usize, m: usize, t: &[f64]) -> Vec<f64> {
        match &self.sources[g] {
            SourceModel::Gaussian { means, variance } => {
                let (a, b) = Self::gaussian_coeffs(means, *variance);
                let c = means[m] + variance * dot(t, &a);
                b.iter().zip(&a).map(|(bi, ai)| bi + ai * c).collect()
            }
            SourceModel::Finite { rows } => {
                let (w, zs) = self.finite_tilt(rows, m, t);
                let mut grad = vec![0.0; self.dim()];
                for (wy, z) in w.iter().zip(&zs) {
                    for (gi, zi) in grad.iter_mut().zip(z) {
                        *gi += wy * zi;
                    }
                }
                grad
            }
        }
    }

    pub fn xi_hess(&self, g: usize, m: usize, t: &[f64]) -> Mat {
        let d = self.dim();
        match &self.sources[g] {
            SourceModel::Gaussian { means, variance } => {
                let (a, _) = Self::gaussian_coeffs(means, *variance);
                let mut h = Mat::zeros(d, d);
                for i in 0..d {
                    for j in 0..d {
                        h[(i, j)] = variance * a[i] * a[j];
                    }
                }
                h
            }
            SourceModel::Finite { rows } => {
                let (w, zs) = self.finite_tilt(rows, m, t);
                let mut mean = vec![0.0; d];
                for (wy, z) in w.iter().zip(&zs) {
                    for (mi, zi) in mean.iter_mut().zip(z) {
                        *mi += wy * zi;
                    }
                }
                let mut h = Mat::zeros(d, d);
                for (wy, z) in w.iter().zip(&zs) {
                    for i in 0..d {
                        for j in 0..d {
                            h[(i, j)] += wy * (z[i] - mean[i]) * (z[j] - mean[j]);
                        }
                    }
                }
                h
            }
        }
    }

    /// Exponentially tilted distribution over the support of a finite source,
    /// plus the LLR vector at each support point.
    fn finite_tilt(&self, rows: &[Vec<f64>], m: usize, t: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let support = rows[0].len();
        let zs: Vec<Vec<f64>> = (0..support).map(|y| Self::finite_llr(rows, y)).collect();
        let logs: Vec<f64> = (0..support)
            .map(|y| rows[m][y].ln() + dot(t, &zs[y]))
            .collect();
        let lse = log_sum_exp(&logs);
        let w: Vec<f64> = logs.iter().map(|l| (l - lse).exp()).collect();
        (w, zs)
    }

    /// `phi_m(t, x) = sum_g x[g] xi_m(g, t)`.
    pub fn phi(&self, m: usize, t: &[f64], x: &[f64]) -> f64 {
        x.iter()
            .enumerate()
            .filter(|(_, &w)| w != 0.0)
            .map(|(g, &w)| w * self.xi(g, m, t))
            .sum()
    }

    pub fn phi_grad(&self, m: usize, t: &[f64], x: &[f64]) -> Vec<f64> {
        let mut grad = vec![0.0; self.dim()];
        for (g, &w) in x.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let gg = self.xi_grad(g, m, t);
            for (gi, xi) in grad.iter_mut().zip(&gg) {
                *gi += w * xi;
            }
        }
        grad
    }

    pub fn phi_hess(&self, m: usize, t: &[f64], x: &[f64]) -> Mat {
        let d = self.dim();
        let mut h = Mat::zeros(d, d);
        for (g, &w) in x.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let hg = self.xi_hess(g, m, t);
            for i in 0..d {
                for j in 0..d {
                    h[(i, j)] += w * hg[(i, j)];
                }
            }
        }
        h
    }

    /// Mean LLR vector under hypothesis `m`: `z~_m(x) = grad_t phi_m(0, x)`.
    pub fn mean_llr(&self, m: usize, x: &[f64]) -> Vec<f64> {
        self.phi_grad(m, &vec![0.0; self.dim()], x)
    }

    /// Per-source scalar `log E_i[(dP_j^g/dP_i^g)^s]`.
    pub fn lambda_source(&self, g: usize, i: usize, j: usize, s: f64) -> f64 {
        match &self.sources[g] {
            SourceModel::Gaussian { means, variance } => {
                let d = means[j] - means[i];
                s * (s - 1.0) * d * d / (2.0 * variance)
            }
            SourceModel::Finite { rows } => {
                let terms: Vec<f64> = (0..rows[0].len())
                    .map(|y| (1.0 - s) * rows[i][y].ln() + s * rows[j][y].ln())
                    .collect();
                log_sum_exp(&terms)
            }
        }
    }

    fn lambda_source_prime(&self, g: usize, i: usize, j: usize, s: f64) -> f64 {
        match &self.sources[g] {
            SourceModel::Gaussian { means, variance } => {
                let d = means[j] - means[i];
                (2.0 * s - 1.0) * d * d / (2.0 * variance)
            }
            SourceModel::Finite { rows } => {
                let (w, lr) = self.pair_tilt(rows, i, j, s);
                w.iter().zip(&lr).map(|(wy, l)| wy * l).sum()
            }
        }
    }

    fn lambda_source_second(&self, g: usize, i: usize, j: usize, s: f64) -> f64 {
        match &self.sources[g] {
            SourceModel::Gaussian { means, variance } => {
                let d = means[j] - means[i];
                d * d / variance
            }
            SourceModel::Finite { rows } => {
                let (w, lr) = self.pair_tilt(rows, i, j, s);
                let mean: f64 = w.iter().zip(&lr).map(|(wy, l)| wy * l).sum();
                w.iter()
                    .zip(&lr)
                    .map(|(wy, l)| wy * (l - mean) * (l - mean))
                    .sum()
            }
        }
    }

    /// Tilted distribution `w_y ~ P_i(y)^(1-s) P_j(y)^s` and the scalar LLR
    /// `log(P_j(y)/P_i(y))` at each support point.
    fn pair_tilt(&self, rows: &[Vec<f64>], i: usize, j: usize, s: f64) -> (Vec<f64>, Vec<f64>) {
        let support = rows[0].len();
        let logs: Vec<f64> = (0..support)
            .map(|y| (1.0 - s) * rows[i][y].ln() + s * rows[j][y].ln())
            .collect();
        let lse = log_sum_exp(&logs);
        let w: Vec<f64> = logs.iter().map(|l| (l - lse).exp()).collect();
        let lr: Vec<f64> = (0..support).map(|y| (rows[j][y] / rows[i][y]).ln()).collect();
        (w, lr)
    }

    /// Policy-weighted pairwise log-MGF `Lambda_ij(s, x)`.
    pub fn lambda(&self, i: usize, j: usize, s: f64, x: &[f64]) -> f64 {
        x.iter()
            .enumerate()
            .filter(|(_, &w)| w != 0.0)
            .map(|(g, &w)| w * self.lambda_source(g, i, j, s))
            .sum()
    }

    pub fn lambda_prime(&self, i: usize, j: usize, s: f64, x: &[f64]) -> f64 {
        x.iter()
            .enumerate()
            .filter(|(_, &w)| w != 0.0)
            .map(|(g, &w)| w * self.lambda_source_prime(g, i, j, s))
            .sum()
    }

    pub fn lambda_second(&self, i: usize, j: usize, s: f64, x: &[f64]) -> f64 {
        x.iter()
            .enumerate()
            .filter(|(_, &w)| w != 0.0)
            .map(|(g, &w)| w * self.lambda_source_second(g, i, j, s))
            .sum()
    }

    /// True when every source is Gaussian, enabling several closed forms.
    pub fn all_gaussian(&self) -> bool {
        self.sources
            .iter()
            .all(|s| matches!(s, SourceModel::Gaussian { .. }))
    }

    /// For all-Gaussian views: the curvature constant
    /// `kappa_ij(x) = sum_g x[g] (mu_j^g - mu_i^g)^2 / (2 sigma_g^2)`, so that
    /// `Lambda_ij(s, x) = s(s-1) kappa_ij(x)`.
    pub fn gaussian_kappa(&self, i: usize, j: usize, x: &[f64]) -> Option<f64> {
        let mut k = 0.0;
        for (g, &w) in x.iter().enumerate() {
            match &self.sources[g] {
                SourceModel::Gaussian { means, variance } => {
                    let d = means[j] - means[i];
                    k += w * d * d / (2.0 * variance);
                }
                SourceModel::Finite { .. } => return None,
            }
        }
        Some(k)
    }
}
