//! The textual feature table: records, encoding, standardization, CSV I/O,
//! and seeded train/test splitting.

use crate::grade::{ResolutionGrade, UsabilityGrade};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

pub const FEATURE_COUNT: usize = 4;
pub const CSV_HEADER: [&str; 6] = [
    "url",
    "load_time_s",
    "mobile_ui",
    "resolution_grade",
    "contact_info",
    "grade",
];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("row {row}, column {column}: {reason}")]
    SchemaViolation {
        row: usize,
        column: String,
        reason: String,
    },
    #[error("split is degenerate: {0}")]
    DegenerateSplit(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One audited website: URL, the four usability features, and the grade
/// once labeling has run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub url: String,
    pub load_time_s: f64,
    pub mobile_ui: bool,
    pub resolution_grade: ResolutionGrade,
    pub contact_info: bool,
    pub grade: Option<UsabilityGrade>,
}

/// One encoded design-matrix row, order fixed as
/// [load_time, resolution, mobile_ui, contact_info].
pub type EncodedVector = [f64; FEATURE_COUNT];

/// Per-column standardization parameters, fitted on training rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub mean: [f64; FEATURE_COUNT],
    pub std: [f64; FEATURE_COUNT],
}

/// Disjoint train/test index lists produced by a seeded shuffle.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub seed: u64,
}

/// Booleans map to 1/0, the resolution grade to its quality ordinal
/// (A=4 .. F=0), load time passes through.
pub fn encode(record: &AuditRecord) -> EncodedVector {
    [
        record.load_time_s,
        record.resolution_grade.ordinal(),
        if record.mobile_ui { 1.0 } else { 0.0 },
        if record.contact_info { 1.0 } else { 0.0 },
    ]
}

/// Per-column mean and population standard deviation.
pub fn fit_scaler(rows: &[EncodedVector]) -> Result<ScalerParams, DatasetError> {
    if rows.is_empty() {
        return Err(DatasetError::EmptyDataset);
    }
    let n = rows.len() as f64;
    let mut mean = [0.0; FEATURE_COUNT];
    let mut std = [0.0; FEATURE_COUNT];
    for row in rows {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    for row in rows {
        for j in 0..FEATURE_COUNT {
            std[j] += (row[j] - mean[j]).powi(2);
        }
    }
    for s in &mut std {
        *s = (*s / n).sqrt();
    }
    Ok(ScalerParams { mean, std })
}

/// (x - mean) / std componentwise; columns with zero std map to 0.
pub fn apply_scaler(params: &ScalerParams, row: &EncodedVector) -> EncodedVector {
    let mut out = [0.0; FEATURE_COUNT];
    for j in 0..FEATURE_COUNT {
        out[j] = if params.std[j] > 0.0 {
            (row[j] - params.mean[j]) / params.std[j]
        } else {
            0.0
        };
    }
    out
}

/// Inverse of `apply_scaler` on columns with positive std; zero-std columns
/// recover their mean. Exists for testing.
pub fn invert_scaler(params: &ScalerParams, row: &EncodedVector) -> EncodedVector {
    let mut out = [0.0; FEATURE_COUNT];
    for j in 0..FEATURE_COUNT {
        out[j] = row[j] * params.std[j] + params.mean[j];
    }
    out
}

/// Deterministic seeded 70:30-style split. Unstratified: floor(ratio*n)
/// train rows. Stratified: per-class floor(ratio*n_c) train rows.
pub fn split(
    n: usize,
    ratio: f64,
    seed: u64,
    strata: Option<&[UsabilityGrade]>,
) -> Result<DatasetSplit, DatasetError> {
    if n < 2 {
        return Err(DatasetError::DegenerateSplit(format!(
            "need at least 2 rows, got {n}"
        )));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(DatasetError::DegenerateSplit(format!(
            "ratio must be in (0,1), got {ratio}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Floor of ratio*len, tolerant of products like 0.7*90 that land one
    // ulp below an integer.
    let train_count = |len: usize| -> usize {
        let product = ratio * len as f64;
        (product + product * 8.0 * f64::EPSILON).floor() as usize
    };

    let (train_indices, test_indices) = match strata {
        None => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            let cut = train_count(n);
            if cut == 0 || cut == n {
                return Err(DatasetError::DegenerateSplit(
                    "one side of the split is empty".into(),
                ));
            }
            let test = idx.split_off(cut);
            (idx, test)
        }
        Some(labels) => {
            if labels.len() != n {
                return Err(DatasetError::DegenerateSplit(format!(
                    "strata length {} does not match n={n}",
                    labels.len()
                )));
            }
            let mut by_class: BTreeMap<UsabilityGrade, Vec<usize>> = BTreeMap::new();
            for (i, &g) in labels.iter().enumerate() {
                by_class.entry(g).or_default().push(i);
            }
            let mut train = Vec::new();
            let mut test = Vec::new();
            for (grade, mut idx) in by_class {
                if idx.len() < 2 {
                    return Err(DatasetError::DegenerateSplit(format!(
                        "class {grade} has fewer than 2 rows"
                    )));
                }
                idx.shuffle(&mut rng);
                let cut = train_count(idx.len());
                if cut == 0 || cut == idx.len() {
                    return Err(DatasetError::DegenerateSplit(format!(
                        "class {grade} has an empty side under ratio {ratio}"
                    )));
                }
                let class_test = idx.split_off(cut);
                train.extend(idx);
                test.extend(class_test);
            }
            (train, test)
        }
    };

    Ok(DatasetSplit {
        train_indices,
        test_indices,
        seed,
    })
}

fn parse_bool(v: &str, row: usize, column: &str) -> Result<bool, DatasetError> {
    match v {
        "yes" => Ok(true),
        "no" => Ok(false),
        other => Err(DatasetError::SchemaViolation {
            row,
            column: column.to_owned(),
            reason: format!("expected yes/no, got {other:?}"),
        }),
    }
}

/// Read audit records from the CSV schema
/// `url,load_time_s,mobile_ui,resolution_grade,contact_info,grade`.
pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<AuditRecord>, DatasetError> {
    let mut reader = csv::ReaderBuilder::new().from_path(path.as_ref())?;
    {
        let headers = reader.headers()?;
        if headers.iter().ne(CSV_HEADER.iter().copied()) {
            return Err(DatasetError::SchemaViolation {
                row: 0,
                column: "header".into(),
                reason: format!("expected {:?}, got {:?}", CSV_HEADER, headers),
            });
        }
    }
    let mut records = Vec::new();
    for (i, result) in reader.records().enumerate() {
        let row = i + 1;
        let rec = result?;
        let field = |idx: usize, name: &str| -> Result<&str, DatasetError> {
            rec.get(idx).ok_or_else(|| DatasetError::SchemaViolation {
                row,
                column: name.to_owned(),
                reason: "missing field".into(),
            })
        };
        let load_time_s: f64 = field(1, "load_time_s")?.parse().map_err(|_| {
            DatasetError::SchemaViolation {
                row,
                column: "load_time_s".into(),
                reason: format!("not a number: {:?}", rec.get(1).unwrap_or("")),
            }
        })?;
        if !load_time_s.is_finite() || load_time_s < 0.0 {
            return Err(DatasetError::SchemaViolation {
                row,
                column: "load_time_s".into(),
                reason: format!("must be finite and non-negative, got {load_time_s}"),
            });
        }
        let resolution_grade = field(3, "resolution_grade")?.parse().map_err(|_| {
            DatasetError::SchemaViolation {
                row,
                column: "resolution_grade".into(),
                reason: format!("invalid grade {:?}", rec.get(3).unwrap_or("")),
            }
        })?;
        let grade_field = field(5, "grade")?;
        let grade = if grade_field.is_empty() {
            None
        } else {
            Some(
                grade_field
                    .parse()
                    .map_err(|_| DatasetError::SchemaViolation {
                        row,
                        column: "grade".into(),
                        reason: format!("invalid grade {grade_field:?}"),
                    })?,
            )
        };
        records.push(AuditRecord {
            url: field(0, "url")?.to_owned(),
            load_time_s,
            mobile_ui: parse_bool(field(2, "mobile_ui")?, row, "mobile_ui")?,
            resolution_grade,
            contact_info: parse_bool(field(4, "contact_info")?, row, "contact_info")?,
            grade,
        });
    }
    Ok(records)
}

/// Write audit records in the same schema `read_csv` accepts.
pub fn write_csv(records: &[AuditRecord], path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    writer.write_record(CSV_HEADER)?;
    for r in records {
        writer.write_record([
            r.url.as_str(),
            &format!("{}", r.load_time_s),
            if r.mobile_ui { "yes" } else { "no" },
            r.resolution_grade.as_str(),
            if r.contact_info { "yes" } else { "no" },
            r.grade.map(|g| g.as_str()).unwrap_or(""),
        ])?;
    }
    writer.flush()?;
    Ok(())
}
