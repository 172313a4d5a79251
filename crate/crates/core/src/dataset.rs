//! Dataset files: `dataset.csv` (one row per trial), `config.json` (the
//! experiment config snapshot), and the optional externally collected
//! `tlx.csv` and `demographics.csv`.
//!
//! Floats are written in Rust's shortest round-trip notation so that reading
//! a file back reproduces the records bit for bit; lines end in `\n`.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::geometry::{GuidanceError, Pose, Vec3};
use crate::harness::{Dataset, ExperimentConfig};
use crate::record::TrialRecord;
use crate::widget::Condition;

pub const DATASET_FILE: &str = "dataset.csv";
pub const CONFIG_FILE: &str = "config.json";

pub const DATASET_COLUMNS: [&str; 16] = [
    "subject",
    "condition",
    "trial",
    "tx",
    "ty",
    "tz",
    "time",
    "pm",
    "px",
    "py",
    "pz",
    "rm",
    "rx",
    "rz",
    "timed_out",
    "seed",
];

pub const TLX_SCALES: [&str; 6] = ["mental", "physical", "temporal", "performance", "effort", "frustration"];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("row {row}, column `{column}`: {detail}")]
    Schema { row: usize, column: String, detail: String },
    #[error("no trials")]
    Empty,
    #[error("{path}: invalid config: {detail}")]
    Config { path: PathBuf, detail: String },
}

impl DatasetError {
    fn schema(row: usize, column: &str, detail: impl Into<String>) -> Self {
        DatasetError::Schema { row, column: column.to_owned(), detail: detail.into() }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.to_owned(), source }
}

/// Serializes records with the fixed `dataset.csv` header.
pub fn records_to_csv(records: &[TrialRecord]) -> String {
    let mut out = DATASET_COLUMNS.join(",");
    out.push('\n');
    for r in records {
        let e = &r.error;
        let fields = [
            r.subject.to_string(),
            r.condition.to_string(),
            r.trial.to_string(),
            r.target.position.x.to_string(),
            r.target.position.y.to_string(),
            r.target.position.z.to_string(),
            r.task_time.to_string(),
            e.pm.to_string(),
            e.pe_vec.x.to_string(),
            e.pe_vec.y.to_string(),
            e.pe_vec.z.to_string(),
            e.rm.to_string(),
            e.re_x.to_string(),
            e.re_z.to_string(),
            r.timed_out.to_string(),
            r.seed.to_string(),
        ];
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// Writes `dataset.csv` and `config.json` into `dir`, creating it if needed.
pub fn write_dataset(dir: &Path, ds: &Dataset) -> Result<(), DatasetError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let csv_path = dir.join(DATASET_FILE);
    fs::write(&csv_path, records_to_csv(&ds.records)).map_err(io_err(&csv_path))?;
    let cfg_path = dir.join(CONFIG_FILE);
    let mut json = serde_json::to_string_pretty(&ds.config).expect("config serializes");
    json.push('\n');
    fs::write(&cfg_path, json).map_err(io_err(&cfg_path))?;
    Ok(())
}

pub fn read_config(path: &Path) -> Result<ExperimentConfig, DatasetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| DatasetError::Config { path: path.to_owned(), detail: e.to_string() })
}

fn parse_f64(row: usize, col: &str, s: &str) -> Result<f64, DatasetError> {
    let v: f64 = s.trim().parse().map_err(|_| DatasetError::schema(row, col, format!("invalid number `{s}`")))?;
    if !v.is_finite() {
        return Err(DatasetError::schema(row, col, "non-finite value"));
    }
    Ok(v)
}

fn parse_int<T: std::str::FromStr>(row: usize, col: &str, s: &str) -> Result<T, DatasetError> {
    s.trim().parse().map_err(|_| DatasetError::schema(row, col, format!("invalid integer `{s}`")))
}

fn parse_condition(row: usize, col: &str, s: &str) -> Result<Condition, DatasetError> {
    s.trim().parse().map_err(|e: String| DatasetError::schema(row, col, e))
}

fn check_header(headers: &csv::StringRecord, expected: &[&str]) -> Result<(), DatasetError> {
    for (i, want) in expected.iter().enumerate() {
        match headers.get(i) {
            Some(h) if h.trim() == *want => {}
            Some(h) => return Err(DatasetError::schema(1, want, format!("expected header `{want}`, found `{h}`"))),
            None => return Err(DatasetError::schema(1, want, "missing column")),
        }
    }
    if headers.len() > expected.len() {
        let extra = headers.get(expected.len()).unwrap_or_default();
        return Err(DatasetError::schema(1, extra, "unexpected extra column"));
    }
    Ok(())
}

/// Parses a `dataset.csv` body. Row numbers in errors are 1-based file lines
/// (the header is row 1). Target orientation is not stored in the file and
/// comes back as identity.
pub fn parse_records<R: Read>(input: R) -> Result<Vec<TrialRecord>, DatasetError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(input);
    let headers = reader.headers().map_err(|e| DatasetError::schema(1, "header", e.to_string()))?.clone();
    check_header(&headers, &DATASET_COLUMNS)?;
    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| DatasetError::schema(line, "?", e.to_string()))?;
        if row.len() != DATASET_COLUMNS.len() {
            let col = DATASET_COLUMNS.get(row.len()).copied().unwrap_or("?");
            return Err(DatasetError::schema(line, col, format!("expected 16 fields, found {}", row.len())));
        }
        let f = |j: usize| parse_f64(line, DATASET_COLUMNS[j], &row[j]);
        let pe_vec = Vec3::new(f(8)?, f(9)?, f(10)?);
        let error = GuidanceError { pe_vec, pm: f(7)?, re_x: f(12)?, re_z: f(13)?, rm: f(11)? };
        if error.pm < 0.0 || (error.pm - pe_vec.norm()).abs() > 1e-6 * error.pm.max(1.0) {
            return Err(DatasetError::schema(line, "pm", "inconsistent with px, py, pz"));
        }
        if error.rm < 0.0 || (error.rm - error.re_x.hypot(error.re_z)).abs() > 1e-6 * error.rm.max(1.0) {
            return Err(DatasetError::schema(line, "rm", "inconsistent with rx, rz"));
        }
        let task_time = f(6)?;
        if task_time <= 0.0 {
            return Err(DatasetError::schema(line, "time", "must be > 0"));
        }
        let timed_out = match row[14].trim() {
            "true" | "1" => true,
            "false" | "0" => false,
            other => {
                return Err(DatasetError::schema(line, "timed_out", format!("expected true/false, found `{other}`")))
            }
        };
        records.push(TrialRecord {
            subject: parse_int(line, "subject", &row[0])?,
            condition: parse_condition(line, "condition", &row[1])?,
            trial: parse_int(line, "trial", &row[2])?,
            target: Pose::from_position(Vec3::new(f(3)?, f(4)?, f(5)?)),
            error,
            task_time,
            timed_out,
            seed: parse_int(line, "seed", &row[15])?,
        });
    }
    Ok(records)
}

pub fn read_records(path: &Path) -> Result<Vec<TrialRecord>, DatasetError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    parse_records(io::BufReader::new(file))
}

/// Externally collected NASA-TLX scores for one subject and condition.
#[derive(Debug, Clone, PartialEq)]
pub struct TlxRow {
    pub subject: u32,
    pub condition: Condition,
    /// In [`TLX_SCALES`] order.
    pub scales: [f64; 6],
}

pub fn parse_tlx<R: Read>(input: R) -> Result<Vec<TlxRow>, DatasetError> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    let headers = reader.headers().map_err(|e| DatasetError::schema(1, "header", e.to_string()))?.clone();
    let mut expected = vec!["subject", "condition"];
    expected.extend(TLX_SCALES);
    check_header(&headers, &expected)?;
    let mut rows = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| DatasetError::schema(line, "?", e.to_string()))?;
        if row.len() != expected.len() {
            return Err(DatasetError::schema(line, expected.get(row.len()).unwrap_or(&"?"), "wrong field count"));
        }
        let mut scales = [0.0; 6];
        for (k, s) in scales.iter_mut().enumerate() {
            *s = parse_f64(line, TLX_SCALES[k], &row[k + 2])?;
        }
        rows.push(TlxRow {
            subject: parse_int(line, "subject", &row[0])?,
            condition: parse_condition(line, "condition", &row[1])?,
            scales,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Demographics {
    pub subject: u32,
    pub age: f64,
    /// Weekly gaming hours.
    pub gaming: f64,
}

pub fn parse_demographics<R: Read>(input: R) -> Result<Vec<Demographics>, DatasetError> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    let headers = reader.headers().map_err(|e| DatasetError::schema(1, "header", e.to_string()))?.clone();
    let expected = ["subject", "age", "gaming"];
    check_header(&headers, &expected)?;
    let mut rows = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| DatasetError::schema(line, "?", e.to_string()))?;
        if row.len() != expected.len() {
            return Err(DatasetError::schema(line, expected.get(row.len()).unwrap_or(&"?"), "wrong field count"));
        }
        rows.push(Demographics {
            subject: parse_int(line, "subject", &row[0])?,
            age: parse_f64(line, "age", &row[1])?,
            gaming: parse_f64(line, "gaming", &row[2])?,
        });
    }
    Ok(rows)
}

pub fn read_tlx(path: &Path) -> Result<Vec<TlxRow>, DatasetError> {
    parse_tlx(fs::File::open(path).map_err(io_err(path))?)
}

pub fn read_demographics(path: &Path) -> Result<Vec<Demographics>, DatasetError> {
    parse_demographics(fs::File::open(path).map_err(io_err(path))?)
}

/// Writes `contents` to `path` with `\n` line endings preserved as given.
pub fn write_text(path: &Path, contents: &str) -> Result<(), DatasetError> {
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(contents.as_bytes()).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::UnitQuat;

    fn sample() -> Vec<TrialRecord> {
        vec![TrialRecord {
            subject: 3,
            condition: Condition::Dwep,
            trial: 7,
            target: Pose::new(Vec3::new(1.25, -3.5, 40.125), UnitQuat::IDENTITY),
            error: GuidanceError::from_components(Vec3::new(0.1, -0.2, 0.3), 1.1, -0.4),
            task_time: 3.2833333333333337,
            timed_out: false,
            seed: u64::MAX,
        }]
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let recs = sample();
        let text = records_to_csv(&recs);
        assert!(text.starts_with("subject,condition,trial,tx,ty,tz,time,pm,px,py,pz,rm,rx,rz,timed_out,seed\n"));
        assert_eq!(parse_records(text.as_bytes()).unwrap(), recs);
    }

    #[test]
    fn schema_errors_name_row_and_column() {
        let mut text = records_to_csv(&sample());
        text = text.replace(",DWEP,", ",DWXX,");
        match parse_records(text.as_bytes()).unwrap_err() {
            DatasetError::Schema { row, column, .. } => assert_eq!((row, column.as_str()), (2, "condition")),
            e => panic!("{e}"),
        }
        let bad_header = "subject,cond,trial\n";
        match parse_records(bad_header.as_bytes()).unwrap_err() {
            DatasetError::Schema { row, column, .. } => assert_eq!((row, column.as_str()), (1, "condition")),
            e => panic!("{e}"),
        }
        let text = records_to_csv(&sample()).replace(",false,", ",maybe,");
        assert!(
            matches!(parse_records(text.as_bytes()), Err(DatasetError::Schema { column, .. }) if column == "timed_out")
        );
    }

    #[test]
    fn inconsistent_magnitude_rejected() {
        let mut recs = sample();
        recs[0].error.pm += 0.5;
        let text = records_to_csv(&recs);
        assert!(matches!(parse_records(text.as_bytes()), Err(DatasetError::Schema { column, .. }) if column == "pm"));
    }

    #[test]
    fn tlx_and_demographics() {
        let tlx = "subject,condition,mental,physical,temporal,performance,effort,frustration\n0,DWTA,5,3,4,2,5,1\n";
        let rows = parse_tlx(tlx.as_bytes()).unwrap();
        assert_eq!(rows[0].condition, Condition::Dwta);
        assert_eq!(rows[0].scales, [5.0, 3.0, 4.0, 2.0, 5.0, 1.0]);
        let demo = "subject,age,gaming\n0,34,2.5\n";
        assert_eq!(parse_demographics(demo.as_bytes()).unwrap()[0].age, 34.0);
        assert!(parse_demographics("subject,age\n0,3\n".as_bytes()).is_err());
    }
}
