//! Canonical-link generalized linear models fit under per-observation weights.
//!
//! Each observation contributes `w_i * log l(y_i, theta_i)` to the objective,
//! with `theta_i = x_i' beta`. For canonical links the score is
//! `sum w_i (y_i - mu_i) x_i` and the expected and observed information agree,
//! `sum w_i V(mu_i) x_i x_i'`, so IRLS is Newton's method.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Bernoulli,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    Logit,
    Identity,
}

/// A family paired with its canonical link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlmSpec {
    family: Family,
    link: Link,
}

impl GlmSpec {
    pub fn new(family: Family, link: Link) -> Result<Self> {
        match (family, link) {
            (Family::Bernoulli, Link::Logit) | (Family::Gaussian, Link::Identity) => {
                Ok(Self { family, link })
            }
            _ => Err(Error::InvalidSpec(format!(
                "{link:?} is not the canonical link for the {family:?} family"
            ))),
        }
    }

    pub const fn bernoulli() -> Self {
        Self {
            family: Family::Bernoulli,
            link: Link::Logit,
        }
    }

    pub const fn gaussian() -> Self {
        Self {
            family: Family::Gaussian,
            link: Link::Identity,
        }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn link(&self) -> Link {
        self.link
    }

    /// g(mu).
    pub fn link_fn(&self, mu: f64) -> f64 {
        match self.link {
            Link::Logit => logit(mu),
            Link::Identity => mu,
        }
    }

    /// g^{-1}(eta) = b'(eta).
    pub fn mean(&self, eta: f64) -> f64 {
        match self.link {
            Link::Logit => expit(eta),
            Link::Identity => eta,
        }
    }

    /// b''(theta) expressed through the mean.
    pub fn variance(&self, mu: f64) -> f64 {
        match self.family {
            Family::Bernoulli => mu * (1.0 - mu),
            Family::Gaussian => 1.0,
        }
    }

    /// log l(y, theta) with unit dispersion.
    pub fn log_density(&self, y: f64, theta: f64) -> f64 {
        match self.family {
            Family::Bernoulli => y * theta - softplus(theta),
            Family::Gaussian => {
                y * theta - 0.5 * theta * theta - 0.5 * y * y - 0.5 * (2.0 * std::f64::consts::PI).ln()
            }
        }
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn expit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^x) without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Regressor matrix with labelled columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    matrix: DMatrix<f64>,
    labels: Vec<String>,
    intercept: Option<usize>,
}

pub const INTERCEPT: &str = "(intercept)";

impl DesignMatrix {
    /// Builds from row-major entries. A column labelled `(intercept)` is
    /// treated as the intercept and must be all ones.
    pub fn new(rows: usize, columns: usize, row_major: &[f64], labels: Vec<String>) -> Result<Self> {
        if row_major.len() != rows * columns {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {rows}x{columns} design",
                row_major.len()
            )));
        }
        if labels.len() != columns {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {columns} columns",
                labels.len()
            )));
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::InvalidInput(format!("duplicate column label {l:?}")));
            }
        }
        if row_major.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("design matrix has non-finite entries".into()));
        }
        let matrix = DMatrix::from_row_slice(rows, columns, row_major);
        let intercept = labels.iter().position(|l| l == INTERCEPT);
        if let Some(j) = intercept {
            if matrix.column(j).iter().any(|&v| v != 1.0) {
                return Err(Error::InvalidInput("intercept column is not all ones".into()));
            }
        }
        Ok(Self {
            matrix,
            labels,
            intercept,
        })
    }

    pub fn intercept_only(rows: usize) -> Self {
        Self {
            matrix: DMatrix::from_element(rows, 1, 1.0),
            labels: vec![INTERCEPT.to_string()],
            intercept: Some(0),
        }
    }

    /// Design from named columns, optionally preceded by an intercept.
    pub fn from_columns(rows: usize, intercept: bool, columns: &[(String, Vec<f64>)]) -> Result<Self> {
        let mut labels = Vec::with_capacity(columns.len() + 1);
        let mut data: Vec<f64> = Vec::with_capacity(rows * (columns.len() + 1));
        if intercept {
            labels.push(INTERCEPT.to_string());
            data.extend(std::iter::repeat_n(1.0, rows));
        }
        for (name, col) in columns {
            if col.len() != rows {
                return Err(Error::DimensionMismatch(format!(
                    "column {name:?} has {} values, expected {rows}",
                    col.len()
                )));
            }
            labels.push(name.clone());
            data.extend_from_slice(col);
        }
        let ncols = labels.len();
        let row_major: Vec<f64> = (0..rows)
            .flat_map(|i| (0..ncols).map(move |j| (i, j)))
            .map(|(i, j)| data[j * rows + i])
            .collect();
        Self::new(rows, ncols, &row_major, labels)
    }

    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn intercept_column(&self) -> Option<usize> {
        self.intercept
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn linear_predictor(&self, coef: &[f64]) -> Vec<f64> {
        let beta = DVector::from_column_slice(coef);
        (&self.matrix * beta).iter().copied().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Convergence threshold on the max-norm of the score divided by the total weight.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Bernoulli fits stop with a separation error once any |coefficient| exceeds this.
    pub separation_bound: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 100,
            separation_bound: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub coefficients: Vec<f64>,
    pub labels: Vec<String>,
    /// A^{-1} B A^{-1}.
    pub model_covariance: DMatrix<f64>,
    /// Inverse expected information (times the dispersion estimate for gaussian).
    pub naive_covariance: DMatrix<f64>,
    pub log_likelihood: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl FitResult {
    pub fn std_errors(&self) -> Vec<f64> {
        self.model_covariance.diagonal().iter().map(|v| v.sqrt()).collect()
    }

    pub fn naive_std_errors(&self) -> Vec<f64> {
        self.naive_covariance.diagonal().iter().map(|v| v.sqrt()).collect()
    }

    pub fn coefficient(&self, label: &str) -> Option<f64> {
        self.labels.iter().position(|l| l == label).map(|j| self.coefficients[j])
    }
}

fn validate(spec: &GlmSpec, y: &[f64], x: &DesignMatrix, w: &[f64]) -> Result<()> {
    if y.len() != x.nrows() || w.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "response has {} values, design {} rows, weights {} values",
            y.len(),
            x.nrows(),
            w.len()
        )));
    }
    if let Some((index, &value)) = w.iter().enumerate().find(|(_, v)| !(**v >= 0.0 && v.is_finite())) {
        return Err(Error::InvalidWeight { index, value });
    }
    match spec.family {
        Family::Bernoulli => {
            if let Some((index, &value)) = y.iter().enumerate().find(|(_, v)| **v != 0.0 && **v != 1.0) {
                return Err(Error::InvalidResponse { index, value });
            }
        }
        Family::Gaussian => {
            if let Some((index, &value)) = y.iter().enumerate().find(|(_, v)| !v.is_finite()) {
                return Err(Error::InvalidResponse { index, value });
            }
        }
    }
    Ok(())
}

fn check_coef(x: &DesignMatrix, coef: &[f64]) -> Result<()> {
    if coef.len() != x.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{} coefficients for {} design columns",
            coef.len(),
            x.ncols()
        )));
    }
    Ok(())
}

/// `sum_i w_i log l(y_i, theta_i)`; zero-weight rows contribute nothing.
pub fn weighted_log_likelihood(spec: &GlmSpec, y: &[f64], x: &DesignMatrix, coef: &[f64], w: &[f64]) -> Result<f64> {
    validate(spec, y, x, w)?;
    check_coef(x, coef)?;
    Ok(log_likelihood_unchecked(spec, y, x, coef, w))
}

fn log_likelihood_unchecked(spec: &GlmSpec, y: &[f64], x: &DesignMatrix, coef: &[f64], w: &[f64]) -> f64 {
    x.linear_predictor(coef)
        .iter()
        .zip(y)
        .zip(w)
        .filter(|(_, &wi)| wi > 0.0)
        .map(|((&eta, &yi), &wi)| wi * spec.log_density(yi, eta))
        .sum()
}

/// Gradient of [`weighted_log_likelihood`] with respect to the coefficients.
pub fn weighted_score(spec: &GlmSpec, y: &[f64], x: &DesignMatrix, coef: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    validate(spec, y, x, w)?;
    check_coef(x, coef)?;
    let mu: Vec<f64> = x.linear_predictor(coef).iter().map(|&e| spec.mean(e)).collect();
    Ok(score_at(x, y, &mu, w).iter().copied().collect())
}

fn score_at(x: &DesignMatrix, y: &[f64], mu: &[f64], w: &[f64]) -> DVector<f64> {
    let resid = DVector::from_iterator(y.len(), y.iter().zip(mu).zip(w).map(|((yi, mi), wi)| wi * (yi - mi)));
    x.matrix().tr_mul(&resid)
}

/// `sum_i c_i x_i x_i'`.
fn weighted_crossprod(x: &DesignMatrix, c: &[f64]) -> DMatrix<f64> {
    let m = x.matrix();
    let mut scaled = m.clone();
    for (i, &ci) in c.iter().enumerate() {
        scaled.row_mut(i).scale_mut(ci);
    }
    let out = m.tr_mul(&scaled);
    symmetrize(out)
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

fn invert_spd(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    m.clone().cholesky().map(|c| symmetrize(c.inverse()))
}

/// Full column rank of X restricted to rows with positive weight.
fn has_full_rank(x: &DesignMatrix, w: &[f64]) -> bool {
    let indicator: Vec<f64> = w.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect();
    let gram = weighted_crossprod(x, &indicator);
    let eig = SymmetricEigen::new(gram);
    let max = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    max > 0.0 && min > max * 1e-12
}

/// Maximizes the weighted log-likelihood by IRLS and fills both covariances.
pub fn fit_weighted_mle(spec: &GlmSpec, y: &[f64], x: &DesignMatrix, w: &[f64], opts: &SolverOptions) -> Result<FitResult> {
    validate(spec, y, x, w)?;
    let total_weight: f64 = w.iter().sum();
    if total_weight <= 0.0 {
        return Err(Error::ZeroWeights);
    }
    if !has_full_rank(x, w) {
        return Err(Error::SingularDesign);
    }

    let mut beta = DVector::zeros(x.ncols());
    if let Some(j) = x.intercept_column() {
        let ybar = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / total_weight;
        let start = match spec.family {
            Family::Bernoulli => ybar.clamp(1e-6, 1.0 - 1e-6),
            Family::Gaussian => ybar,
        };
        beta[j] = spec.link_fn(start);
    }

    let mut loglik = log_likelihood_unchecked(spec, y, x, beta.as_slice(), w);
    let mut iterations = 0;
    loop {
        let mu: Vec<f64> = x.linear_predictor(beta.as_slice()).iter().map(|&e| spec.mean(e)).collect();
        let score = score_at(x, y, &mu, w);
        let score_norm = score.amax() / total_weight;
        if score_norm <= opts.tolerance {
            break;
        }
        if iterations >= opts.max_iterations {
            return Err(Error::NonConvergence { iterations, score_norm });
        }
        let info_weights: Vec<f64> = mu.iter().zip(w).map(|(&m, &wi)| wi * spec.variance(m)).collect();
        let info = weighted_crossprod(x, &info_weights);
        let step = match info.cholesky() {
            Some(c) => c.solve(&score),
            None => return Err(degenerate_information(spec, &beta, &mu, w)),
        };

        // Newton on a concave objective; halve the step if it overshoots.
        let mut scale = 1.0;
        let mut candidate = &beta + &step;
        let mut cand_ll = log_likelihood_unchecked(spec, y, x, candidate.as_slice(), w);
        let mut halvings = 0;
        while !(cand_ll >= loglik - 1e-12 * loglik.abs().max(1.0)) && halvings < 30 {
            scale *= 0.5;
            candidate = &beta + &step * scale;
            cand_ll = log_likelihood_unchecked(spec, y, x, candidate.as_slice(), w);
            halvings += 1;
        }
        beta = candidate;
        loglik = cand_ll;
        iterations += 1;

        if spec.family == Family::Bernoulli {
            if let Some((index, &value)) = beta
                .iter()
                .enumerate()
                .find(|(_, b)| b.abs() > opts.separation_bound)
            {
                return Err(Error::Separation { index, value });
            }
        }
    }
    let coefficients: Vec<f64> = beta.iter().copied().collect();
    let mu: Vec<f64> = x.linear_predictor(&coefficients).iter().map(|&e| spec.mean(e)).collect();
    let info_weights: Vec<f64> = mu.iter().zip(w).map(|(&m, &wi)| wi * spec.variance(m)).collect();
    let info = weighted_crossprod(x, &info_weights);
    let info_inv = invert_spd(&info).ok_or(Error::SingularInformation)?;
    let dispersion = match spec.family {
        Family::Bernoulli => 1.0,
        Family::Gaussian => {
            y.iter().zip(&mu).zip(w).map(|((yi, mi), wi)| wi * (yi - mi).powi(2)).sum::<f64>() / total_weight
        }
    };
    let naive_covariance = info_inv.clone() * dispersion;
    let meat = sandwich_meat(x, y, &mu, w);
    let model_covariance = symmetrize(&info_inv * meat * &info_inv);

    Ok(FitResult {
        coefficients,
        labels: x.labels().to_vec(),
        model_covariance,
        naive_covariance,
        log_likelihood: loglik,
        converged: true,
        iterations,
    })
}

fn degenerate_information(spec: &GlmSpec, beta: &DVector<f64>, mu: &[f64], w: &[f64]) -> Error {
    if spec.family == Family::Bernoulli {
        let pinned = mu
            .iter()
            .zip(w)
            .filter(|(_, &wi)| wi > 0.0)
            .any(|(&m, _)| !(1e-10..=1.0 - 1e-10).contains(&m));
        if pinned {
            let (index, value) = beta
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .map(|(i, v)| (i, *v))
                .unwrap_or((0, f64::NAN));
            return Error::Separation { index, value };
        }
    }
    Error::SingularDesign
}

/// `B = sum_i w_i^2 (y_i - mu_i)^2 x_i x_i'`.
fn sandwich_meat(x: &DesignMatrix, y: &[f64], mu: &[f64], w: &[f64]) -> DMatrix<f64> {
    let c: Vec<f64> = y
        .iter()
        .zip(mu)
        .zip(w)
        .map(|((yi, mi), wi)| (wi * (yi - mi)).powi(2))
        .collect();
    weighted_crossprod(x, &c)
}

/// Robust covariance `A^{-1} B A^{-1}` with empirical
/// `A = sum w_i V(mu_i) x_i x_i'` and `B = sum w_i^2 (y_i - mu_i)^2 x_i x_i'`.
///
/// Expects `coef` to be a stationary point of the weighted log-likelihood.
/// The dispersion cancels, so no dispersion estimate is needed for gaussian.
pub fn sandwich_covariance(spec: &GlmSpec, y: &[f64], x: &DesignMatrix, coef: &[f64], w: &[f64]) -> Result<DMatrix<f64>> {
    validate(spec, y, x, w)?;
    check_coef(x, coef)?;
    let mu: Vec<f64> = x.linear_predictor(coef).iter().map(|&e| spec.mean(e)).collect();
    let info_weights: Vec<f64> = mu.iter().zip(w).map(|(&m, &wi)| wi * spec.variance(m)).collect();
    let a_inv = invert_spd(&weighted_crossprod(x, &info_weights)).ok_or(Error::SingularInformation)?;
    let meat = sandwich_meat(x, y, &mu, w);
    Ok(symmetrize(&a_inv * meat * &a_inv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn binary(events: usize, n: usize) -> Vec<f64> {
        (0..n).map(|i| if i < events { 1.0 } else { 0.0 }).collect()
    }

    #[test]
    fn non_canonical_pairs_rejected() {
        assert!(GlmSpec::new(Family::Bernoulli, Link::Identity).is_err());
        assert!(GlmSpec::new(Family::Gaussian, Link::Logit).is_err());
        assert_eq!(GlmSpec::new(Family::Bernoulli, Link::Logit).unwrap(), GlmSpec::bernoulli());
    }

    #[test]
    fn symmetric_half_loglik() {
        let x = DesignMatrix::intercept_only(2);
        let spec = GlmSpec::bernoulli();
        let ll = weighted_log_likelihood(&spec, &[1.0, 0.0], &x, &[0.0], &[1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(ll, 2.0 * 0.5_f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(ll, -1.3863, epsilon = 1e-4);
        let ll2 = weighted_log_likelihood(&spec, &[1.0, 0.0], &x, &[0.0], &[2.0, 2.0]).unwrap();
        assert_abs_diff_eq!(ll2, -2.7726, epsilon = 1e-4);
    }

    #[test]
    fn placebo_arm_loglik_matches_direct_sum() {
        let y = binary(53, 500);
        let p: f64 = 0.106;
        let x = DesignMatrix::intercept_only(500);
        let ll = weighted_log_likelihood(&GlmSpec::bernoulli(), &y, &x, &[logit(p)], &vec![1.0; 500]).unwrap();
        let direct: f64 = y.iter().map(|&yi| yi * p.ln() + (1.0 - yi) * (1.0 - p).ln()).sum();
        assert_abs_diff_eq!(ll, direct, epsilon = 1e-9);
    }

    #[test]
    fn input_errors() {
        let spec = GlmSpec::bernoulli();
        let x = DesignMatrix::intercept_only(2);
        assert!(matches!(
            weighted_log_likelihood(&spec, &[1.0], &x, &[0.0], &[1.0, 1.0]),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            weighted_log_likelihood(&spec, &[1.0, 0.0], &x, &[0.0], &[1.0, -1.0]),
            Err(Error::InvalidWeight { index: 1, .. })
        ));
        assert!(matches!(
            weighted_log_likelihood(&spec, &[1.0, 2.0], &x, &[0.0], &[1.0, 1.0]),
            Err(Error::InvalidResponse { index: 1, .. })
        ));
    }

    #[test]
    fn intercept_only_matches_weighted_mean() {
        let y = binary(53, 500);
        let w: Vec<f64> = (0..500).map(|i| 0.3 + (i % 7) as f64 * 0.25).collect();
        let x = DesignMatrix::intercept_only(500);
        let fit = fit_weighted_mle(&GlmSpec::bernoulli(), &y, &x, &w, &SolverOptions::default()).unwrap();
        let mean = y.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / w.iter().sum::<f64>();
        assert_abs_diff_eq!(expit(fit.coefficients[0]), mean, epsilon = 1e-10);
        assert!(fit.converged);
    }

    #[test]
    fn gaussian_intercept_sandwich_is_sample_mean_variance() {
        let y = [1.2, 3.4, -0.5, 2.2, 0.9, 5.1];
        let n = y.len() as f64;
        let x = DesignMatrix::intercept_only(y.len());
        let w = vec![1.0; y.len()];
        let fit = fit_weighted_mle(&GlmSpec::gaussian(), &y, &x, &w, &SolverOptions::default()).unwrap();
        let ybar = y.iter().sum::<f64>() / n;
        let oracle = y.iter().map(|v| (v - ybar).powi(2)).sum::<f64>() / (n * n);
        assert_abs_diff_eq!(fit.coefficients[0], ybar, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.model_covariance[(0, 0)], oracle, epsilon = 1e-12);
        // naive uses the ML dispersion, which coincides here
        assert_abs_diff_eq!(fit.naive_covariance[(0, 0)], oracle, epsilon = 1e-12);
    }

    #[test]
    fn separation_detected() {
        let y = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let z = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let x = DesignMatrix::from_columns(6, true, &[("z".into(), z.to_vec())]).unwrap();
        let err = fit_weighted_mle(&GlmSpec::bernoulli(), &y, &x, &[1.0; 6], &SolverOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Separation { .. }), "{err:?}");
    }

    #[test]
    fn rank_deficiency_detected() {
        let z = vec![1.0, 2.0, 3.0, 4.0];
        let x = DesignMatrix::from_columns(4, true, &[("a".into(), z.clone()), ("b".into(), z.iter().map(|v| 2.0 * v).collect())]).unwrap();
        let err = fit_weighted_mle(&GlmSpec::bernoulli(), &[0.0, 1.0, 0.0, 1.0], &x, &[1.0; 4], &SolverOptions::default()).unwrap_err();
        assert_eq!(err, Error::SingularDesign);
    }

    #[test]
    fn rank_on_positive_weight_support() {
        // second column is only non-constant on a zero-weight row
        let x = DesignMatrix::from_columns(4, true, &[("z".into(), vec![0.0, 0.0, 0.0, 1.0])]).unwrap();
        let err = fit_weighted_mle(&GlmSpec::gaussian(), &[1.0, 2.0, 3.0, 4.0], &x, &[1.0, 1.0, 1.0, 0.0], &SolverOptions::default()).unwrap_err();
        assert_eq!(err, Error::SingularDesign);
    }

    #[test]
    fn zero_weight_rows_ignored() {
        let y = [1.0, 0.0, 1.0, 0.0, 1.0];
        let x = DesignMatrix::intercept_only(5);
        let w = [1.0, 1.0, 1.0, 1.0, 0.0];
        let fit = fit_weighted_mle(&GlmSpec::bernoulli(), &y, &x, &w, &SolverOptions::default()).unwrap();
        let fit4 = fit_weighted_mle(&GlmSpec::bernoulli(), &y[..4], &DesignMatrix::intercept_only(4), &w[..4], &SolverOptions::default()).unwrap();
        assert_abs_diff_eq!(fit.coefficients[0], fit4.coefficients[0], epsilon = 1e-14);
        assert_abs_diff_eq!(fit.model_covariance[(0, 0)], fit4.model_covariance[(0, 0)], epsilon = 1e-14);
    }

    #[test]
    fn non_convergence_reported() {
        let opts = SolverOptions { max_iterations: 0, ..Default::default() };
        let z: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let x = DesignMatrix::from_columns(10, true, &[("z".into(), z)]).unwrap();
        let y = [0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0];
        let err = fit_weighted_mle(&GlmSpec::bernoulli(), &y, &x, &[1.0; 10], &opts).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { iterations: 0, .. }));
    }

    #[test]
    fn design_validation() {
        assert!(DesignMatrix::new(2, 1, &[1.0], vec!["a".into()]).is_err());
        assert!(DesignMatrix::new(1, 2, &[1.0, 2.0], vec!["a".into(), "a".into()]).is_err());
        assert!(DesignMatrix::new(1, 1, &[2.0], vec![INTERCEPT.into()]).is_err());
        let d = DesignMatrix::from_columns(3, true, &[("z".into(), vec![1.0, 2.0, 3.0])]).unwrap();
        assert_eq!(d.matrix()[(2, 1)], 3.0);
        assert_eq!(d.matrix()[(2, 0)], 1.0);
        assert_eq!(d.intercept_column(), Some(0));
    }
}
