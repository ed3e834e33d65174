//! Noninferiority statistics combining the current-trial contrast (mu_TC,
//! control vs experimental) with the historical one (mu_CP, placebo vs control).

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NiInputs {
    pub mu_tc: f64,
    pub se_tc: f64,
    pub mu_cp: f64,
    pub se_cp: f64,
    /// One-sided significance level.
    pub alpha: f64,
}

impl NiInputs {
    pub fn new(mu_tc: f64, se_tc: f64, mu_cp: f64, se_cp: f64, alpha: f64) -> Result<Self> {
        let inputs = Self {
            mu_tc,
            se_tc,
            mu_cp,
            se_cp,
            alpha,
        };
        inputs.validate()?;
        Ok(inputs)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu_tc.is_finite() && self.mu_cp.is_finite()) {
            return Err(Error::InvalidInput("effect estimates must be finite".into()));
        }
        if !(self.se_tc > 0.0 && self.se_cp > 0.0 && self.se_tc.is_finite() && self.se_cp.is_finite()) {
            return Err(Error::InvalidInput("standard errors must be positive".into()));
        }
        check_alpha(self.alpha)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::InvalidInput(format!("alpha {alpha} outside (0, 0.5)")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NiMethod {
    Synthesis,
    FixedMargin,
    Stratified,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NiTestResult {
    pub statistic: f64,
    /// Upper-tail standard normal probability of the statistic.
    pub p_value: f64,
    pub method: NiMethod,
    pub critical_value: f64,
    /// statistic > critical_value
    pub reject: bool,
}

/// P(Z > z) for standard normal Z.
pub fn upper_tail(z: f64) -> f64 {
    0.5 * libm::erfc(z / std::f64::consts::SQRT_2)
}

/// z_alpha with P(Z > z_alpha) = alpha.
pub fn critical_value(alpha: f64) -> f64 {
    Normal::standard().inverse_cdf(1.0 - alpha)
}

fn decide(statistic: f64, alpha: f64, method: NiMethod) -> NiTestResult {
    let critical_value = critical_value(alpha);
    NiTestResult {
        statistic,
        p_value: upper_tail(statistic),
        method,
        critical_value,
        reject: statistic > critical_value,
    }
}

/// (mu_TC + mu_CP) / sqrt(se_TC^2 + se_CP^2)
pub fn synthesis_test(inputs: &NiInputs) -> Result<NiTestResult> {
    inputs.validate()?;
    let se = inputs.se_tc.hypot(inputs.se_cp);
    Ok(decide((inputs.mu_tc + inputs.mu_cp) / se, inputs.alpha, NiMethod::Synthesis))
}

/// (mu_TC + mu_CP) / (se_TC + se_CP)
pub fn fixed_margin_test(inputs: &NiInputs) -> Result<NiTestResult> {
    inputs.validate()?;
    let se = inputs.se_tc + inputs.se_cp;
    Ok(decide((inputs.mu_tc + inputs.mu_cp) / se, inputs.alpha, NiMethod::FixedMargin))
}

/// One propensity stratum of the stratified comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StratumContrast {
    /// gamma_l: new-treatment effect in the current trial.
    pub gamma: f64,
    /// s_ln^2
    pub var_current: f64,
    /// beta_l: control effect from the historical trial.
    pub beta: f64,
    /// s_lh^2
    pub var_historical: f64,
    /// w_l*
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StratifiedNiResult {
    /// z-form: numerator / sqrt(sum (s_ln^2 + s_lh^2) w^2); drives p-value and decision.
    pub z: NiTestResult,
    /// numerator / sum (s_ln^2 + s_lh^2) w^2, the ratio with a variance denominator.
    pub variance_ratio: f64,
    /// sum (gamma_l - beta_l) w_l
    pub numerator: f64,
    pub variance: f64,
}

pub fn stratified_test(strata: &[StratumContrast], alpha: f64) -> Result<StratifiedNiResult> {
    check_alpha(alpha)?;
    if strata.is_empty() {
        return Err(Error::InvalidInput("no strata".into()));
    }
    let total: f64 = strata.iter().map(|s| s.weight).sum();
    if strata.iter().any(|s| s.weight < 0.0) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!("stratum weights sum to {total}, not 1")));
    }
    if strata.iter().any(|s| !(s.var_current > 0.0 && s.var_historical > 0.0)) {
        return Err(Error::InvalidInput("stratum variances must be positive".into()));
    }
    let numerator: f64 = strata.iter().map(|s| (s.gamma - s.beta) * s.weight).sum();
    let variance: f64 = strata
        .iter()
        .map(|s| (s.var_current + s.var_historical) * s.weight * s.weight)
        .sum();
    if variance <= 0.0 {
        return Err(Error::InvalidInput("zero denominator".into()));
    }
    Ok(StratifiedNiResult {
        z: decide(numerator / variance.sqrt(), alpha, NiMethod::Stratified),
        variance_ratio: numerator / variance,
        numerator,
        variance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn symmetric_zero() {
        let r = synthesis_test(&NiInputs::new(0.0, 0.3, 0.0, 0.3, 0.025).unwrap()).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_abs_diff_eq!(r.p_value, 0.5, epsilon = 1e-15);
        assert!(!r.reject);
    }

    #[test]
    fn tail_values() {
        assert_abs_diff_eq!(critical_value(0.025), 1.959963984540054, epsilon = 1e-9);
        // Phi(-3) reference value
        assert_abs_diff_eq!(upper_tail(3.0), 1.3498980316300946e-3, epsilon = 1e-17);
        assert_abs_diff_eq!(upper_tail(-1.0), 0.8413447460685429, epsilon = 1e-15);
    }

    #[test]
    fn input_validation() {
        assert!(NiInputs::new(0.3, 0.0, 0.8, 0.2, 0.025).is_err());
        assert!(NiInputs::new(0.3, 0.2, 0.8, 0.2, 0.5).is_err());
        assert!(NiInputs::new(f64::NAN, 0.2, 0.8, 0.2, 0.025).is_err());
    }

    #[test]
    fn stratified_single_and_zero() {
        let one = StratumContrast { gamma: 0.9, var_current: 0.04, beta: 0.3, var_historical: 0.05, weight: 1.0 };
        let r = stratified_test(&[one], 0.025).unwrap();
        assert_abs_diff_eq!(r.z.statistic, 0.6 / 0.09_f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(r.variance_ratio, 0.6 / 0.09, epsilon = 1e-14);

        let zero = |w| StratumContrast { gamma: 0.4, var_current: 0.1, beta: 0.4, var_historical: 0.1, weight: w };
        let r = stratified_test(&[zero(0.3), zero(0.7)], 0.025).unwrap();
        assert_eq!(r.z.statistic, 0.0);
        assert_eq!(r.z.p_value, 0.5);
    }

    #[test]
    fn stratified_two_strata_by_hand() {
        // (1.2 - 0.5)*0.25 + (0.8 - 0.6)*0.75 = 0.175 + 0.15 = 0.325
        // (0.09 + 0.16)*0.0625 + (0.04 + 0.01)*0.5625 = 0.015625 + 0.028125 = 0.04375
        let strata = [
            StratumContrast { gamma: 1.2, var_current: 0.09, beta: 0.5, var_historical: 0.16, weight: 0.25 },
            StratumContrast { gamma: 0.8, var_current: 0.04, beta: 0.6, var_historical: 0.01, weight: 0.75 },
        ];
        let r = stratified_test(&strata, 0.025).unwrap();
        assert_abs_diff_eq!(r.numerator, 0.325, epsilon = 1e-15);
        assert_abs_diff_eq!(r.variance, 0.04375, epsilon = 1e-15);
        assert_abs_diff_eq!(r.z.statistic, 0.325 / 0.04375_f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(r.variance_ratio, 0.325 / 0.04375, epsilon = 1e-12);
    }

    #[test]
    fn stratified_errors() {
        let s = StratumContrast { gamma: 0.1, var_current: 0.1, beta: 0.0, var_historical: 0.1, weight: 0.5 };
        assert!(stratified_test(&[s], 0.025).is_err());
        assert!(stratified_test(&[], 0.025).is_err());
        let bad = StratumContrast { var_current: 0.0, weight: 1.0, ..s };
        assert!(stratified_test(&[bad], 0.025).is_err());
    }

    proptest! {
        #[test]
        fn fixed_margin_never_exceeds_synthesis(
            mu_tc in -2.0..2.0f64, mu_cp in -2.0..2.0f64,
            se_tc in 0.01..1.0f64, se_cp in 0.01..1.0f64,
        ) {
            let inp = NiInputs::new(mu_tc, se_tc, mu_cp, se_cp, 0.025).unwrap();
            let s = synthesis_test(&inp).unwrap().statistic;
            let f = fixed_margin_test(&inp).unwrap().statistic;
            if mu_tc + mu_cp > 0.0 {
                prop_assert!(f <= s);
            }
        }

        #[test]
        fn statistics_monotone_in_mu_cp(
            mu_tc in -2.0..2.0f64, mu_cp in -2.0..2.0f64, bump in 0.0..1.0f64,
            se_tc in 0.01..1.0f64, se_cp in 0.01..1.0f64,
        ) {
            let a = NiInputs::new(mu_tc, se_tc, mu_cp, se_cp, 0.025).unwrap();
            let b = NiInputs { mu_cp: mu_cp + bump, ..a };
            prop_assert!(synthesis_test(&b).unwrap().statistic >= synthesis_test(&a).unwrap().statistic);
            prop_assert!(fixed_margin_test(&b).unwrap().statistic >= fixed_margin_test(&a).unwrap().statistic);
        }

        #[test]
        fn tail_symmetry(z in -8.0..8.0f64) {
            prop_assert!((upper_tail(z) + upper_tail(-z) - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn reject_iff_above_critical(mu_cp in -1.0..3.0f64, alpha in 0.001..0.2f64) {
            let r = synthesis_test(&NiInputs::new(0.31, 0.2, mu_cp, 0.25, alpha).unwrap()).unwrap();
            prop_assert_eq!(r.reject, r.statistic > critical_value(alpha));
            prop_assert!(r.p_value > 0.0 && r.p_value < 1.0);
        }
    }
}
