//! CSV input: `subject_id, trial (H|C), arm (0|1), outcome, covariates...`.

use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use ni_reweight::data::{Arm, PooledDataset, SubjectRecord, Trial};
use ni_reweight::glm::Family;
use serde::Serialize;

use crate::error::{CliError, Result, StageExt};

const REQUIRED: [&str; 4] = ["subject_id", "trial", "arm", "outcome"];

/// A dataset plus the source line of every record, for diagnostics.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub data: PooledDataset,
    pub lines: Vec<u64>,
    pub source: String,
}

fn invalid(source: &str, line: u64, msg: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("{source}: row {line}: {msg}"))
}

pub fn ingest_path(path: &Path) -> Result<Ingested> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    ingest_reader(file, &path.display().to_string())
}

pub fn ingest_reader<R: Read>(reader: R, source: &str) -> Result<Ingested> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| CliError::Validation(format!("{source}: cannot read header: {e}")))?
        .clone();
    if headers.is_empty() || headers.iter().all(str::is_empty) {
        return Err(CliError::Validation(format!("{source}: missing header row")));
    }
    let mut columns = BTreeMap::new();
    for (j, name) in headers.iter().enumerate() {
        if columns.insert(name.to_string(), j).is_some() {
            return Err(CliError::Validation(format!("{source}: duplicate column {name:?}")));
        }
    }
    let pos = |name: &str| {
        columns
            .get(name)
            .copied()
            .ok_or_else(|| CliError::Validation(format!("{source}: missing column {name:?}")))
    };
    let [id_col, trial_col, arm_col, outcome_col] = [pos(REQUIRED[0])?, pos(REQUIRED[1])?, pos(REQUIRED[2])?, pos(REQUIRED[3])?];
    let covariates: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| !REQUIRED.contains(h))
        .map(|(j, h)| (j, h.to_string()))
        .collect();

    let mut records = Vec::new();
    let mut lines = Vec::new();
    let mut seen = HashSet::new();
    for row in rdr.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            invalid(source, line, e)
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let cell = |j: usize, name: &str| -> Result<&str> {
            match row.get(j) {
                Some(v) if !v.is_empty() => Ok(v),
                _ => Err(invalid(source, line, format!("missing value in column {name:?}"))),
            }
        };
        let number = |j: usize, name: &str| -> Result<f64> {
            let raw = cell(j, name)?;
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| invalid(source, line, format!("column {name:?}: {raw:?} is not a finite number")))
        };
        let id = cell(id_col, "subject_id")?.to_string();
        if !seen.insert(id.clone()) {
            return Err(invalid(source, line, format!("duplicate subject_id {id:?}")));
        }
        let trial = match cell(trial_col, "trial")? {
            "H" => Trial::Historical,
            "C" => Trial::Current,
            other => return Err(invalid(source, line, format!("unknown trial code {other:?} (expected H or C)"))),
        };
        let arm = match cell(arm_col, "arm")? {
            "0" => Arm::Zero,
            "1" => Arm::One,
            other => return Err(invalid(source, line, format!("unknown arm code {other:?} (expected 0 or 1)"))),
        };
        let outcome = number(outcome_col, "outcome")?;
        let covariates = covariates
            .iter()
            .map(|(j, name)| number(*j, name))
            .collect::<Result<Vec<f64>>>()?;
        records.push(SubjectRecord { id, trial, arm, outcome, covariates });
        lines.push(line);
    }
    if records.is_empty() {
        return Err(CliError::Validation(format!("{source}: no data rows")));
    }
    let names = covariates.into_iter().map(|(_, n)| n).collect();
    let data = PooledDataset::new(names, records).stage("ingest")?;
    Ok(Ingested { data, lines, source: source.to_string() })
}

impl Ingested {
    /// Errors on the first non-binary outcome, naming its row.
    pub fn check_family(&self, family: Family) -> Result<()> {
        if family != Family::Bernoulli {
            return Ok(());
        }
        for (r, line) in self.data.records().iter().zip(&self.lines) {
            if r.outcome != 0.0 && r.outcome != 1.0 {
                return Err(invalid(
                    &self.source,
                    *line,
                    format!("outcome {} is not binary (bernoulli family expects 0 or 1)", r.outcome),
                ));
            }
        }
        Ok(())
    }

    /// Appends the records of `other`, matching covariate columns by name.
    pub fn merge(self, other: Ingested) -> Result<Ingested> {
        let names = self.data.covariate_names().to_vec();
        let mut a: Vec<&String> = names.iter().collect();
        let mut b: Vec<&String> = other.data.covariate_names().iter().collect();
        a.sort();
        b.sort();
        if a != b {
            return Err(CliError::Validation(format!(
                "{} and {} have different covariate columns",
                self.source, other.source
            )));
        }
        let order: Vec<usize> = names
            .iter()
            .map(|n| other.data.covariate_index(n).expect("same covariate set"))
            .collect();
        let ids: HashSet<&str> = self.data.records().iter().map(|r| r.id.as_str()).collect();
        if let Some((r, line)) = other.data.records().iter().zip(&other.lines).find(|(r, _)| ids.contains(r.id.as_str())) {
            return Err(invalid(&other.source, *line, format!("subject_id {:?} also appears in {}", r.id, self.source)));
        }
        let mut records = self.data.records().to_vec();
        records.extend(other.data.records().iter().map(|r| SubjectRecord {
            covariates: order.iter().map(|&j| r.covariates[j]).collect(),
            ..r.clone()
        }));
        let mut lines = self.lines;
        lines.extend(other.lines);
        Ok(Ingested {
            data: PooledDataset::new(names, records).stage("ingest")?,
            lines,
            source: format!("{}+{}", self.source, other.source),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArmSummary {
    pub trial: Trial,
    pub arm: usize,
    pub subjects: usize,
    pub outcome_sum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IngestSummary {
    pub rows: usize,
    pub covariates: Vec<String>,
    pub arms: Vec<ArmSummary>,
}

pub fn summarize(data: &PooledDataset) -> IngestSummary {
    let arms = [Trial::Historical, Trial::Current]
        .into_iter()
        .flat_map(|trial| Arm::BOTH.map(|arm| (trial, arm)))
        .map(|(trial, arm)| {
            let t = data.tally(trial, arm);
            ArmSummary { trial, arm: arm.index(), subjects: t.subjects, outcome_sum: t.outcome_sum }
        })
        .filter(|a| a.subjects > 0)
        .collect();
    IngestSummary {
        rows: data.len(),
        covariates: data.covariate_names().to_vec(),
        arms,
    }
}

/// Writes `data` in the input CSV schema.
pub fn write_csv<W: Write>(data: &PooledDataset, writer: W) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = REQUIRED.to_vec();
    header.extend(data.covariate_names().iter().map(String::as_str));
    w.write_record(&header)?;
    for r in data.records() {
        let mut row = vec![r.id.clone(), r.trial.code().to_string(), r.arm.index().to_string(), r.outcome.to_string()];
        row.extend(r.covariates.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Ingested> {
        ingest_reader(text.as_bytes(), "test.csv")
    }

    #[test]
    fn basic_parse() {
        let ing = parse("subject_id,trial,arm,outcome,bpd\na,H,0,1,1\nb,C,1,0,0\n").unwrap();
        assert_eq!(ing.data.len(), 2);
        assert_eq!(ing.lines, vec![2, 3]);
        assert_eq!(ing.data.covariate_names(), ["bpd"]);
        assert_eq!(ing.data.records()[1].trial, Trial::Current);
    }

    #[test]
    fn row_numbered_errors() {
        let err = parse("subject_id,trial,arm,outcome\na,H,0,1\nb,H,2,0\n").unwrap_err().to_string();
        assert!(err.contains("row 3") && err.contains("arm"), "{err}");
        let err = parse("subject_id,trial,arm,outcome\na,H,0,1\na,H,1,0\n").unwrap_err().to_string();
        assert!(err.contains("row 3") && err.contains("duplicate"), "{err}");
        let err = parse("subject_id,trial,arm,outcome\na,X,0,1\n").unwrap_err().to_string();
        assert!(err.contains("row 2") && err.contains("trial"), "{err}");
        let err = parse("subject_id,trial,arm,outcome,x\na,H,0,1,\n").unwrap_err().to_string();
        assert!(err.contains("missing value") && err.contains("\"x\""), "{err}");
    }

    #[test]
    fn header_problems() {
        assert!(parse("").unwrap_err().to_string().contains("missing header"));
        assert!(parse("subject_id,trial,outcome\na,H,1\n").unwrap_err().to_string().contains("\"arm\""));
    }

    #[test]
    fn non_binary_outcome_named() {
        let ing = parse("subject_id,trial,arm,outcome\na,H,0,1\nb,H,1,0.5\n").unwrap();
        let err = ing.check_family(Family::Bernoulli).unwrap_err().to_string();
        assert!(err.contains("row 3"), "{err}");
        assert!(ing.check_family(Family::Gaussian).is_ok());
    }

    #[test]
    fn merge_reorders_columns() {
        let a = parse("subject_id,trial,arm,outcome,u,v\na,H,0,1,1,2\n").unwrap();
        let b = parse("subject_id,trial,arm,outcome,v,u\nb,C,0,1,20,10\n").unwrap();
        let m = a.merge(b).unwrap();
        assert_eq!(m.data.records()[1].covariates, vec![10.0, 20.0]);
        let c = parse("subject_id,trial,arm,outcome,u,v\na,C,0,1,1,2\n").unwrap();
        let d = parse("subject_id,trial,arm,outcome,u,v\na,H,0,1,1,2\n").unwrap();
        assert!(d.merge(c).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let ing = parse("subject_id,trial,arm,outcome,bpd\na,H,0,1,1\nb,C,1,0,0.25\n").unwrap();
        let mut buf = Vec::new();
        write_csv(&ing.data, &mut buf).unwrap();
        let back = ingest_reader(buf.as_slice(), "buf").unwrap();
        assert_eq!(back.data, ing.data);
    }
}
