//! Observational cohort records for the illness-death model and their
//! counting-process views.
//!
//! Each [`Subject`] carries the first-event time `U = min(T, D, C)`, the
//! sojourn `V` from disease onset to death or censoring, the event indicators,
//! the (possibly absent) screening age and baseline covariates. Time is age in
//! years; left truncation is the entry age.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CohortError, RowViolation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    pub id: String,
    /// Left-truncation age `L`.
    pub entry_age: f64,
    /// `U = min(T, D, C)`.
    pub u_time: f64,
    /// Disease observed first.
    pub delta1: bool,
    /// Death without disease.
    pub delta2: bool,
    /// Sojourn from onset to death or censoring; zero unless `delta1`.
    pub v_time: f64,
    /// Death after disease.
    pub delta3: bool,
    /// Age at first screening, if recorded.
    pub screen_age: Option<f64>,
    pub covariates: Vec<f64>,
}

impl Subject {
    /// Checks the record-level invariants. Returns the violated rule.
    pub fn check(&self) -> Result<(), String> {
        let finite = [self.entry_age, self.u_time, self.v_time];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err("entry_age, u_time and v_time must be finite".into());
        }
        if self.entry_age < 0.0 {
            return Err(format!("entry_age must be >= 0 (got {})", self.entry_age));
        }
        if self.u_time <= self.entry_age {
            return Err(format!(
                "u_time ({}) must exceed entry_age ({}); subjects must enter healthy and at risk",
                self.u_time, self.entry_age
            ));
        }
        if self.delta1 && self.delta2 {
            return Err("delta1 and delta2 are mutually exclusive".into());
        }
        if self.delta3 && !self.delta1 {
            return Err("delta3 requires delta1".into());
        }
        if self.v_time < 0.0 {
            return Err(format!("v_time must be >= 0 (got {})", self.v_time));
        }
        if !self.delta1 && self.v_time != 0.0 {
            return Err("v_time must be 0 when delta1 = 0".into());
        }
        if let Some(s) = self.screen_age {
            if !s.is_finite() || s < 0.0 {
                return Err(format!("screen_age must be finite and >= 0 (got {s})"));
            }
        }
        if let Some(k) = self.covariates.iter().position(|x| !x.is_finite()) {
            return Err(format!("covariate {} is not finite", k + 1));
        }
        Ok(())
    }

    /// Screening age used for hazard modeling: a recorded screening at or
    /// after `U` is censored by the first event and treated as absent.
    pub fn effective_screen_age(&self) -> Option<f64> {
        self.screen_age.filter(|&s| s < self.u_time)
    }

    pub fn screening(&self) -> ScreeningIndicator {
        ScreeningIndicator {
            screen_age: self.effective_screen_age(),
        }
    }

    pub fn processes(&self) -> CountingProcesses<'_> {
        CountingProcesses { subject: self }
    }

    pub fn onset_age(&self) -> Option<f64> {
        self.delta1.then_some(self.u_time)
    }

    /// Observed age at death, if death was observed on either path.
    pub fn death_age(&self) -> Option<f64> {
        if self.delta2 {
            Some(self.u_time)
        } else if self.delta3 {
            Some(self.u_time + self.v_time)
        } else {
            None
        }
    }

    /// Last age under observation, alive or dead.
    pub fn exit_age(&self) -> f64 {
        self.u_time + self.v_time
    }
}

/// `Z(t; S) = I(S < t)`; identically zero when screening is absent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScreeningIndicator {
    pub screen_age: Option<f64>,
}

impl ScreeningIndicator {
    pub fn at(&self, t: f64) -> bool {
        matches!(self.screen_age, Some(s) if s < t)
    }
}

/// Per-subject counting and at-risk processes.
#[derive(Debug, Clone, Copy)]
pub struct CountingProcesses<'a> {
    subject: &'a Subject,
}

impl CountingProcesses<'_> {
    pub fn n01(&self, t: f64) -> bool {
        self.subject.delta1 && self.subject.u_time <= t
    }

    pub fn n02(&self, t: f64) -> bool {
        self.subject.delta2 && self.subject.u_time <= t
    }

    /// Sojourn-scale death counting process.
    pub fn n13(&self, sojourn: f64) -> bool {
        self.subject.delta3 && self.subject.v_time <= sojourn
    }

    /// `Y0(t) = I(U >= t > L)`.
    pub fn y0(&self, t: f64) -> bool {
        self.subject.u_time >= t && t > self.subject.entry_age
    }

    /// `Y1(t~) = I(V >= t~)` among subjects who reached the disease state.
    pub fn y1(&self, sojourn: f64) -> bool {
        self.subject.delta1 && self.subject.v_time >= sojourn
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cohort {
    subjects: Vec<Subject>,
    covariate_names: Vec<String>,
    time_unit: String,
}

impl Cohort {
    pub fn new(subjects: Vec<Subject>, covariate_names: Vec<String>) -> Result<Self, CohortError> {
        if subjects.is_empty() {
            return Err(CohortError::Empty);
        }
        let p = covariate_names.len();
        let mut seen = HashSet::with_capacity(subjects.len());
        for (i, s) in subjects.iter().enumerate() {
            if s.covariates.len() != p {
                return Err(CohortError::CovariateDimension {
                    id: s.id.clone(),
                    expected: p,
                    got: s.covariates.len(),
                });
            }
            if !seen.insert(s.id.as_str()) {
                return Err(CohortError::DuplicateId(s.id.clone()));
            }
            s.check().map_err(|rule| {
                CohortError::Invalid(RowViolation { row: i + 1, rule })
            })?;
        }
        Ok(Cohort {
            subjects,
            covariate_names,
            time_unit: "years".into(),
        })
    }

    pub fn subjects(&self) -> &[Subject] {
        &self.subjects
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn time_unit(&self) -> &str {
        &self.time_unit
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn min_entry_age(&self) -> f64 {
        self.subjects
            .iter()
            .map(|s| s.entry_age)
            .fold(f64::INFINITY, f64::min)
    }

    /// Cohort made of the subjects at `indices` (with repetition). Ids are
    /// suffixed with the draw position so that they stay unique.
    pub fn resample(&self, indices: &[usize]) -> Cohort {
        let subjects = indices
            .iter()
            .enumerate()
            .map(|(k, &i)| {
                let mut s = self.subjects[i].clone();
                s.id = format!("{}#{}", s.id, k);
                s
            })
            .collect();
        Cohort {
            subjects,
            covariate_names: self.covariate_names.clone(),
            time_unit: self.time_unit.clone(),
        }
    }

    pub fn event_counts(&self) -> EventCounts {
        let mut c = EventCounts::default();
        for s in &self.subjects {
            c.disease += s.delta1 as usize;
            c.death_healthy += s.delta2 as usize;
            c.death_diseased += s.delta3 as usize;
        }
        c
    }

    pub fn write_delimited<W: Write>(&self, writer: W, delimiter: u8) -> Result<(), CohortError> {
        let mut w = csv::WriterBuilder::new()
            .delimiter(delimiter)
            .from_writer(writer);
        let mut header: Vec<&str> = REQUIRED_COLUMNS.to_vec();
        header.extend(self.covariate_names.iter().map(String::as_str));
        w.write_record(&header)?;
        for s in &self.subjects {
            let mut rec = vec![
                s.id.clone(),
                s.entry_age.to_string(),
                s.u_time.to_string(),
                (s.delta1 as u8).to_string(),
                (s.delta2 as u8).to_string(),
                s.v_time.to_string(),
                (s.delta3 as u8).to_string(),
                s.screen_age.map(|v| v.to_string()).unwrap_or_default(),
            ];
            rec.extend(s.covariates.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_path(&self, path: impl AsRef<Path>, delimiter: u8) -> Result<(), CohortError> {
        let f = std::fs::File::create(path)?;
        self.write_delimited(std::io::BufWriter::new(f), delimiter)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCounts {
    pub disease: usize,
    pub death_healthy: usize,
    pub death_diseased: usize,
}

const REQUIRED_COLUMNS: [&str; 8] = [
    "id",
    "entry_age",
    "u_time",
    "delta1",
    "delta2",
    "v_time",
    "delta3",
    "screen_age",
];

/// Maps logical fields to column names in a cohort file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CohortSchema {
    pub id: String,
    pub entry_age: String,
    pub u_time: String,
    pub delta1: String,
    pub delta2: String,
    pub v_time: String,
    pub delta3: String,
    pub screen_age: String,
    /// Covariate columns in model order. `None` takes every remaining column
    /// in header order.
    pub covariates: Option<Vec<String>>,
    pub delimiter: u8,
    /// Stop at the first rejected row instead of collecting all of them.
    pub fail_fast: bool,
}

impl Default for CohortSchema {
    fn default() -> Self {
        CohortSchema {
            id: "id".into(),
            entry_age: "entry_age".into(),
            u_time: "u_time".into(),
            delta1: "delta1".into(),
            delta2: "delta2".into(),
            v_time: "v_time".into(),
            delta3: "delta3".into(),
            screen_age: "screen_age".into(),
            covariates: None,
            delimiter: b',',
            fail_fast: true,
        }
    }
}

pub fn ingest_cohort(path: impl AsRef<Path>, schema: &CohortSchema) -> Result<Cohort, CohortError> {
    let f = std::fs::File::open(path)?;
    read_cohort(std::io::BufReader::new(f), schema)
}

pub fn read_cohort<R: Read>(reader: R, schema: &CohortSchema) -> Result<Cohort, CohortError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CohortError::MissingColumn(name.to_string()))
    };
    let fixed_names = [
        &schema.id,
        &schema.entry_age,
        &schema.u_time,
        &schema.delta1,
        &schema.delta2,
        &schema.v_time,
        &schema.delta3,
        &schema.screen_age,
    ];
    let idx: Vec<usize> = fixed_names
        .iter()
        .map(|n| find(n))
        .collect::<Result<_, _>>()?;
    let covariate_names: Vec<String> = match &schema.covariates {
        Some(names) => names.clone(),
        None => header
            .iter()
            .filter(|h| !fixed_names.iter().any(|n| n.as_str() == *h))
            .map(str::to_string)
            .collect(),
    };
    let cov_idx: Vec<usize> = covariate_names
        .iter()
        .map(|n| find(n))
        .collect::<Result<_, _>>()?;

    let mut subjects = Vec::new();
    let mut violations = Vec::new();
    let mut ids = HashSet::new();
    for (r, rec) in rdr.records().enumerate() {
        let row = r + 1;
        let rec = rec?;
        let field = |k: usize| rec.get(k).unwrap_or("");
        let number = |k: usize, column: &str| -> Result<f64, CohortError> {
            let raw = field(k);
            raw.parse::<f64>().map_err(|_| CohortError::NonNumeric {
                row,
                column: column.to_string(),
                value: raw.to_string(),
            })
        };
        let flag = |k: usize, column: &str| -> Result<Result<bool, RowViolation>, CohortError> {
            let v = number(k, column)?;
            Ok(if v == 0.0 {
                Ok(false)
            } else if v == 1.0 {
                Ok(true)
            } else {
                Err(RowViolation {
                    row,
                    rule: format!("{column} must be 0 or 1 (got {v})"),
                })
            })
        };

        let parsed = (|| -> Result<Result<Subject, RowViolation>, CohortError> {
            let id = field(idx[0]).to_string();
            let entry_age = number(idx[1], &schema.entry_age)?;
            let u_time = number(idx[2], &schema.u_time)?;
            let d1 = flag(idx[3], &schema.delta1)?;
            let d2 = flag(idx[4], &schema.delta2)?;
            let v_time = number(idx[5], &schema.v_time)?;
            let d3 = flag(idx[6], &schema.delta3)?;
            let screen_raw = field(idx[7]);
            let screen_age = if screen_raw.is_empty() || screen_raw.eq_ignore_ascii_case("na") {
                None
            } else {
                Some(number(idx[7], &schema.screen_age)?)
            };
            let mut covariates = Vec::with_capacity(cov_idx.len());
            for (name, &k) in covariate_names.iter().zip(&cov_idx) {
                if field(k).is_empty() {
                    return Ok(Err(RowViolation {
                        row,
                        rule: format!("missing covariate `{name}`"),
                    }));
                }
                covariates.push(number(k, name)?);
            }
            let (delta1, delta2, delta3) = match (d1, d2, d3) {
                (Ok(a), Ok(b), Ok(c)) => (a, b, c),
                (Err(e), _, _) | (_, Err(e), _) | (_, _, Err(e)) => return Ok(Err(e)),
            };
            if id.is_empty() {
                return Ok(Err(RowViolation {
                    row,
                    rule: "empty id".into(),
                }));
            }
            let s = Subject {
                id,
                entry_age,
                u_time,
                delta1,
                delta2,
                v_time,
                delta3,
                screen_age,
                covariates,
            };
            Ok(s.check().map(|_| s).map_err(|rule| RowViolation { row, rule }))
        })()?;

        match parsed {
            Ok(s) => {
                if !ids.insert(s.id.clone()) {
                    return Err(CohortError::DuplicateId(s.id));
                }
                subjects.push(s);
            }
            Err(v) => {
                if schema.fail_fast {
                    return Err(CohortError::Invalid(v));
                }
                violations.push(v);
            }
        }
    }
    if !violations.is_empty() {
        return Err(CohortError::InvalidRows(violations));
    }
    Cohort::new(subjects, covariate_names)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "id,entry_age,u_time,delta1,delta2,v_time,delta3,screen_age,x1\n";

    fn parse(body: &str) -> Result<Cohort, CohortError> {
        read_cohort(format!("{HEADER}{body}").as_bytes(), &CohortSchema::default())
    }

    #[test]
    fn three_rows() {
        let c = parse("a,0,50,1,0,3,1,45,0.2\nb,0,60,0,1,0,0,,-1\nc,40,70,0,0,0,0,80,0\n").unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.covariate_names(), ["x1"]);
        assert_eq!(c.subjects()[1].screen_age, None);
        assert_eq!(c.subjects()[0].death_age(), Some(53.0));
    }

    #[test]
    fn exclusive_indicators_rejected_with_row() {
        let err = parse("a,0,50,0,0,0,0,,0\nb,0,50,1,1,0,0,,0\n").unwrap_err();
        match err {
            CohortError::Invalid(v) => {
                assert_eq!(v.row, 2);
                assert!(v.rule.contains("mutually exclusive"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn collects_all_violations_when_not_fail_fast() {
        let schema = CohortSchema {
            fail_fast: false,
            ..Default::default()
        };
        let body = "a,0,50,1,1,0,0,,0\nb,0,50,0,0,2,0,,0\nc,0,50,0,0,0,1,,0\nd,0,50,0,0,0,0,,0\n";
        let err = read_cohort(format!("{HEADER}{body}").as_bytes(), &schema).unwrap_err();
        match err {
            CohortError::InvalidRows(v) => {
                assert_eq!(v.iter().map(|x| x.row).collect::<Vec<_>>(), vec![1, 2, 3]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_column_and_non_numeric() {
        let r = read_cohort("id,u_time\na,1\n".as_bytes(), &CohortSchema::default());
        assert!(matches!(r, Err(CohortError::MissingColumn(c)) if c == "entry_age"));
        let r = parse("a,0,fifty,0,0,0,0,,0\n");
        assert!(matches!(r, Err(CohortError::NonNumeric { row: 1, .. })));
    }

    #[test]
    fn missing_covariate_rejected() {
        let r = parse("a,0,50,0,0,0,0,,\n");
        assert!(matches!(r, Err(CohortError::Invalid(v)) if v.rule.contains("missing covariate")));
    }

    #[test]
    fn diseased_at_entry_rejected() {
        let r = parse("a,50,50,1,0,1,1,,0\n");
        assert!(matches!(r, Err(CohortError::Invalid(_))));
    }

    #[test]
    fn late_screening_is_absent_for_modeling() {
        let c = parse("a,0,50,0,0,0,0,52,0\n").unwrap();
        let s = &c.subjects()[0];
        assert_eq!(s.screen_age, Some(52.0));
        assert_eq!(s.effective_screen_age(), None);
        assert!(!s.screening().at(51.0));
        assert!(!s.screening().at(1000.0));
    }

    #[test]
    fn strict_screening_indicator() {
        let z = ScreeningIndicator {
            screen_age: Some(50.0),
        };
        assert!(!z.at(50.0));
        assert!(z.at(50.0 + 1e-12));
    }

    #[test]
    fn at_risk_honours_truncation() {
        let s = Subject {
            id: "a".into(),
            entry_age: 45.0,
            u_time: 60.0,
            delta1: true,
            delta2: false,
            v_time: 2.0,
            delta3: false,
            screen_age: None,
            covariates: vec![],
        };
        let p = s.processes();
        assert!(!p.y0(45.0));
        assert!(p.y0(45.5));
        assert!(p.y0(60.0));
        assert!(!p.y0(60.1));
        assert!(p.n01(60.0) && !p.n01(59.9));
        assert!(p.y1(2.0) && !p.y1(2.1));
        assert!(!p.n13(5.0));
    }

    #[test]
    fn resample_keeps_ids_unique() {
        let c = parse("a,0,50,0,0,0,0,,0\nb,0,60,0,1,0,0,,1\n").unwrap();
        let r = c.resample(&[1, 1, 0]);
        assert_eq!(r.len(), 3);
        assert_eq!(r.subjects()[0].covariates, vec![1.0]);
        assert!(Cohort::new(r.subjects().to_vec(), r.covariate_names().to_vec()).is_ok());
    }
}
