//! Subject-level records for a historical trial and the current (target) trial.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which trial a subject was enrolled in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Trial {
    /// The earlier trial whose effect is being calibrated (population P).
    Historical,
    /// The trial defining the target population (P*).
    Current,
}

impl Trial {
    pub fn code(self) -> &'static str {
        match self {
            Trial::Historical => "H",
            Trial::Current => "C",
        }
    }
}

/// Treatment arm code.
///
/// Effects are always reported as arm 0 relative to arm 1, so in the historical
/// trial arm 0 is placebo and arm 1 the active control, and in the current
/// trial arm 0 is the active control and arm 1 the experimental treatment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Arm {
    Zero,
    One,
}

impl Arm {
    pub const BOTH: [Arm; 2] = [Arm::Zero, Arm::One];

    pub fn index(self) -> usize {
        match self {
            Arm::Zero => 0,
            Arm::One => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Arm> {
        match i {
            0 => Some(Arm::Zero),
            1 => Some(Arm::One),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub id: String,
    pub trial: Trial,
    pub arm: Arm,
    pub outcome: f64,
    pub covariates: Vec<f64>,
}

/// Per-trial, per-arm subject and event tallies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ArmTally {
    pub subjects: usize,
    /// Sum of outcomes (the event count for binary outcomes).
    pub outcome_sum: f64,
}

/// Records from one or both trials sharing a single covariate schema.
///
/// Operations that need both trials (propensity fitting, stratification) call
/// [`PooledDataset::require_both_trials`].
#[derive(Debug, Clone, PartialEq)]
pub struct PooledDataset {
    covariate_names: Vec<String>,
    records: Vec<SubjectRecord>,
}

impl PooledDataset {
    pub fn new(covariate_names: Vec<String>, records: Vec<SubjectRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::InvalidInput("dataset has no records".into()));
        }
        let mut seen = HashSet::new();
        for name in &covariate_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate covariate name {name:?}")));
            }
        }
        for (i, r) in records.iter().enumerate() {
            if r.covariates.len() != covariate_names.len() {
                return Err(Error::DimensionMismatch(format!(
                    "record {i} has {} covariates, schema has {}",
                    r.covariates.len(),
                    covariate_names.len()
                )));
            }
            if !r.outcome.is_finite() || r.covariates.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("record {i} has a non-finite value")));
            }
        }
        Ok(Self {
            covariate_names,
            records,
        })
    }

    pub fn records(&self) -> &[SubjectRecord] {
        &self.records
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn covariate_index(&self, name: &str) -> Result<usize> {
        self.covariate_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::InvalidInput(format!("unknown covariate {name:?}")))
    }

    pub fn count(&self, trial: Trial) -> usize {
        self.records.iter().filter(|r| r.trial == trial).count()
    }

    pub fn require_both_trials(&self) -> Result<()> {
        for trial in [Trial::Historical, Trial::Current] {
            if self.count(trial) == 0 {
                return Err(Error::InvalidInput(format!(
                    "pooled dataset has no {trial:?} subjects"
                )));
            }
        }
        Ok(())
    }

    /// Positions (into `records()`) of the subjects in `trial`, in input order.
    pub fn indices(&self, trial: Trial) -> Vec<usize> {
        self.positions(|r| r.trial == trial)
    }

    pub fn arm_indices(&self, trial: Trial, arm: Arm) -> Vec<usize> {
        self.positions(|r| r.trial == trial && r.arm == arm)
    }

    fn positions(&self, keep: impl Fn(&SubjectRecord) -> bool) -> Vec<usize> {
        self.records
            .iter()
            .enumerate()
            .filter(|(_, r)| keep(r))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn tally(&self, trial: Trial, arm: Arm) -> ArmTally {
        self.records
            .iter()
            .filter(|r| r.trial == trial && r.arm == arm)
            .fold(ArmTally::default(), |mut t, r| {
                t.subjects += 1;
                t.outcome_sum += r.outcome;
                t
            })
    }

    pub fn outcomes(&self, positions: &[usize]) -> Vec<f64> {
        positions.iter().map(|&i| self.records[i].outcome).collect()
    }

    pub fn covariate_column(&self, name: &str, positions: &[usize]) -> Result<Vec<f64>> {
        let j = self.covariate_index(name)?;
        Ok(positions.iter().map(|&i| self.records[i].covariates[j]).collect())
    }

    /// New dataset made of the given records (repeats allowed), same schema.
    pub fn subset(&self, positions: &[usize]) -> PooledDataset {
        PooledDataset {
            covariate_names: self.covariate_names.clone(),
            records: positions.iter().map(|&i| self.records[i].clone()).collect(),
        }
    }

    pub fn all_binary_outcomes(&self) -> bool {
        self.records.iter().all(|r| r.outcome == 0.0 || r.outcome == 1.0)
    }
}

/// Integer code of a categorical covariate value; errors on non-integral values.
pub fn category_code(value: f64) -> Result<i64> {
    if value.fract() != 0.0 || value.abs() > 1e15 {
        return Err(Error::InvalidInput(format!(
            "value {value} is not an integer category code"
        )));
    }
    Ok(value as i64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, trial: Trial, arm: Arm, y: f64, x: f64) -> SubjectRecord {
        SubjectRecord {
            id: id.into(),
            trial,
            arm,
            outcome: y,
            covariates: vec![x],
        }
    }

    #[test]
    fn schema_mismatch_rejected() {
        let mut r = rec("a", Trial::Historical, Arm::Zero, 1.0, 0.0);
        r.covariates.push(2.0);
        let err = PooledDataset::new(vec!["x".into()], vec![r]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch(_)));
    }

    #[test]
    fn tallies_and_indices() {
        let d = PooledDataset::new(
            vec!["x".into()],
            vec![
                rec("a", Trial::Historical, Arm::Zero, 1.0, 0.0),
                rec("b", Trial::Current, Arm::One, 0.0, 1.0),
                rec("c", Trial::Historical, Arm::Zero, 0.0, 1.0),
            ],
        )
        .unwrap();
        assert_eq!(d.indices(Trial::Historical), vec![0, 2]);
        let t = d.tally(Trial::Historical, Arm::Zero);
        assert_eq!(t.subjects, 2);
        assert_eq!(t.outcome_sum, 1.0);
        assert!(d.require_both_trials().is_ok());
        assert!(d.subset(&[0, 0]).require_both_trials().is_err());
    }

    #[test]
    fn category_codes() {
        assert_eq!(category_code(3.0).unwrap(), 3);
        assert!(category_code(0.5).is_err());
    }
}
