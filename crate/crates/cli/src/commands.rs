//! Subcommand implementations.

use crate::error::CliError;
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::time::Duration;
use webaudit_core::cnn;
use webaudit_core::config::AppConfig;
use webaudit_core::dataset::{self, AuditRecord, EncodedVector};
use webaudit_core::evaluation::{build_confusion, compute_metrics, MetricsReport};
use webaudit_core::extraction::{detect_mobile_ui, extract_contacts, HtmlDocument, MobileUiPhrases};
use webaudit_core::grade::UsabilityGrade;
use webaudit_core::labeling;
use webaudit_core::probe::{self, HttpPageSpeedClient, PageSpeedClient};
use webaudit_core::report::{build_recommendations, AuditReport};
use webaudit_core::svm;

fn pagespeed_client(config: &AppConfig) -> HttpPageSpeedClient {
    HttpPageSpeedClient {
        endpoint: config.pagespeed_endpoint.clone(),
        api_key: config.pagespeed_api_key.clone(),
        timeout: Duration::from_secs(config.timeout_s),
        optimization_audit: config.optimization_audit.clone(),
        format_audit: config.format_audit.clone(),
    }
}

fn extract_record_from_url(url: &str, config: &AppConfig) -> Result<AuditRecord, CliError> {
    let timeout = Duration::from_secs(config.timeout_s);
    let (sample, doc) = probe::fetch_page(url, timeout)?;
    let scores = pagespeed_client(config).scores(url)?;
    Ok(AuditRecord {
        url: url.to_owned(),
        load_time_s: sample.seconds,
        mobile_ui: detect_mobile_ui(&doc, &MobileUiPhrases::default()),
        resolution_grade: probe::grade_resolution(&scores),
        contact_info: extract_contacts(&doc).any_present,
        grade: None,
    })
}

fn append_records(out: &Path, new_records: Vec<AuditRecord>) -> Result<(), CliError> {
    let mut records = if out.exists() {
        dataset::read_csv(out)?
    } else {
        Vec::new()
    };
    records.extend(new_records);
    dataset::write_csv(&records, out)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_extract(
    url: Option<String>,
    html: Option<PathBuf>,
    urls: Option<PathBuf>,
    out: PathBuf,
    no_net: bool,
    load_time: Option<f64>,
    resolution_grade: Option<String>,
    config: &AppConfig,
) -> Result<(), CliError> {
    let sources = [url.is_some(), html.is_some(), urls.is_some()]
        .iter()
        .filter(|&&b| b)
        .count();
    if sources != 1 {
        return Err(CliError::usage(
            "exactly one of --url, --html, --urls must be given",
        ));
    }
    if no_net && html.is_none() {
        return Err(CliError::usage("--no-net requires --html"));
    }

    let records = if let Some(url) = url {
        vec![extract_record_from_url(&url, config)?]
    } else if let Some(list) = urls {
        let text = std::fs::read_to_string(&list)?;
        let targets: Vec<String> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(str::to_owned)
            .collect();
        if targets.is_empty() {
            return Err(CliError::data(format!("{} lists no URLs", list.display())));
        }
        let results = probe::parallel_map(&targets, config.parallelism, |u| {
            extract_record_from_url(u, config)
        });
        results.into_iter().collect::<Result<Vec<_>, _>>()?
    } else {
        let path = html.unwrap();
        let body = std::fs::read_to_string(&path)?;
        let doc = HtmlDocument::new(body);
        let load_time_s = load_time.ok_or_else(|| {
            CliError::data("offline extraction is incomplete: --load-time is required with --html")
        })?;
        let resolution_grade = resolution_grade
            .ok_or_else(|| {
                CliError::data(
                    "offline extraction is incomplete: --resolution-grade is required with --html",
                )
            })?
            .parse()
            .map_err(|e| CliError::usage(format!("{e}")))?;
        if !(load_time_s.is_finite() && load_time_s >= 0.0) {
            return Err(CliError::data("--load-time must be non-negative"));
        }
        vec![AuditRecord {
            url: path.display().to_string(),
            load_time_s,
            mobile_ui: detect_mobile_ui(&doc, &MobileUiPhrases::default()),
            resolution_grade,
            contact_info: extract_contacts(&doc).any_present,
            grade: None,
        }]
    };

    append_records(&out, records)
}

#[derive(Serialize)]
struct ProbeOutput {
    url: String,
    load_time_s: f64,
    backend: &'static str,
    optimization: f64,
    format: f64,
    resolution_grade: String,
}

pub fn cmd_probe(url: String, config: &AppConfig) -> Result<(), CliError> {
    let sample = probe::measure_load_time(&url, Duration::from_secs(config.timeout_s))?;
    let scores = pagespeed_client(config).scores(&url)?;
    let output = ProbeOutput {
        url,
        load_time_s: sample.seconds,
        backend: "simple_fetch",
        optimization: scores.optimization,
        format: scores.format,
        resolution_grade: probe::grade_resolution(&scores).to_string(),
    };
    println!("{}", serde_json::to_string_pretty(&output)?);
    Ok(())
}

pub fn cmd_label(input: PathBuf, out: PathBuf, seed: u64) -> Result<(), CliError> {
    let mut records = dataset::read_csv(&input)?;
    if records.len() < 5 {
        return Err(CliError::data(format!(
            "labeling needs at least 5 rows, got {}",
            records.len()
        )));
    }
    let encoded: Vec<EncodedVector> = records.iter().map(dataset::encode).collect();
    let scaler = dataset::fit_scaler(&encoded)?;
    let scaled: Vec<EncodedVector> = encoded
        .iter()
        .map(|r| dataset::apply_scaler(&scaler, r))
        .collect();
    let model = labeling::kmeans_fit(&scaled, 5, seed, 300, 1e-6)?;
    let map = labeling::map_clusters_to_grades(&model, &labeling::DEFAULT_IMPORTANCE_WEIGHTS);
    for (record, row) in records.iter_mut().zip(&scaled) {
        record.grade = Some(map.cluster_to_grade[labeling::assign(&model, row)]);
    }
    dataset::write_csv(&records, &out)?;
    Ok(())
}

#[derive(Serialize)]
struct TrainSvmOutput {
    c: f64,
    gamma: f64,
    grid_searched: bool,
    cv_table: Option<Vec<Vec<f64>>>,
    train_rows: usize,
    test_rows: usize,
    test_metrics: MetricsReport,
}

fn labeled_rows(records: &[AuditRecord]) -> Result<Vec<UsabilityGrade>, CliError> {
    records
        .iter()
        .map(|r| {
            r.grade.ok_or_else(|| {
                CliError::data(format!("row for {} has no grade; run `label` first", r.url))
            })
        })
        .collect()
}

pub fn cmd_train_svm(
    input: PathBuf,
    model_path: PathBuf,
    grid: bool,
    seed: u64,
) -> Result<(), CliError> {
    let records = dataset::read_csv(&input)?;
    let grades = labeled_rows(&records)?;
    let split = dataset::split(records.len(), 0.7, seed, Some(&grades))?;

    let encoded: Vec<EncodedVector> = records.iter().map(dataset::encode).collect();
    let train_encoded: Vec<EncodedVector> =
        split.train_indices.iter().map(|&i| encoded[i]).collect();
    let scaler = dataset::fit_scaler(&train_encoded)?;

    let train_x: Vec<EncodedVector> = train_encoded
        .iter()
        .map(|r| dataset::apply_scaler(&scaler, r))
        .collect();
    let train_y: Vec<UsabilityGrade> = split.train_indices.iter().map(|&i| grades[i]).collect();
    let test_x: Vec<EncodedVector> = split
        .test_indices
        .iter()
        .map(|&i| dataset::apply_scaler(&scaler, &encoded[i]))
        .collect();
    let test_y: Vec<UsabilityGrade> = split.test_indices.iter().map(|&i| grades[i]).collect();

    let (c, gamma, cv_table) = if grid {
        let result = svm::grid_search(&train_x, &train_y, &svm::GridSpec::default(), seed)?;
        (result.c, result.gamma, Some(result.cv_table))
    } else {
        (1000.0, 0.001, None)
    };

    let model = svm::train_multi(&train_x, &train_y, c, gamma, seed)?;
    let predicted: Vec<UsabilityGrade> = test_x.iter().map(|x| svm::predict(&model, x)).collect();
    let cm = build_confusion(&test_y, &predicted, &model.classes)?;
    let metrics = compute_metrics(&cm)?;

    svm::SvmModelFile::new(&model, scaler).save(&model_path)?;

    let output = TrainSvmOutput {
        c,
        gamma,
        grid_searched: grid,
        cv_table,
        train_rows: train_x.len(),
        test_rows: test_x.len(),
        test_metrics: metrics,
    };
    println!("{}", serde_json::to_string_pretty(&output)?);
    Ok(())
}

#[derive(Serialize)]
struct Prediction {
    url: String,
    predicted_grade: UsabilityGrade,
}

pub fn cmd_predict_svm(model_path: PathBuf, input: PathBuf) -> Result<(), CliError> {
    let (model, scaler) = svm::SvmModelFile::load(&model_path)?.into_model();
    let records = dataset::read_csv(&input)?;
    let predictions: Vec<Prediction> = records
        .iter()
        .map(|r| Prediction {
            url: r.url.clone(),
            predicted_grade: svm::predict(
                &model,
                &dataset::apply_scaler(&scaler, &dataset::encode(r)),
            ),
        })
        .collect();
    println!("{}", serde_json::to_string_pretty(&predictions)?);
    Ok(())
}

#[derive(Serialize)]
struct IngestOutput {
    train: usize,
    test: usize,
    rejected_red_range: usize,
}

pub fn cmd_ingest_screenshots(
    scores: PathBuf,
    src: PathBuf,
    out: PathBuf,
    seed: u64,
) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&scores)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "filename,score" => {}
        _ => {
            return Err(CliError::data(format!(
                "{} must start with the header `filename,score`",
                scores.display()
            )))
        }
    }

    let mut rejected = 0usize;
    let mut entries: Vec<(String, UsabilityGrade)> = Vec::new();
    for (i, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (filename, score_text) = line.split_once(',').ok_or_else(|| {
            CliError::data(format!("{}:{}: expected filename,score", scores.display(), i + 1))
        })?;
        let score: f64 = score_text.trim().parse().map_err(|_| {
            CliError::data(format!(
                "{}:{}: score {:?} is not a number",
                scores.display(),
                i + 1,
                score_text
            ))
        })?;
        match labeling::bin_webscore(score) {
            Ok(grade) => entries.push((filename.trim().to_owned(), grade)),
            Err(labeling::LabelingError::RejectedRedRange(_)) => {
                eprintln!("excluding {filename}: score {score} is in the red range");
                rejected += 1;
            }
            Err(e) => return Err(e.into()),
        }
    }
    if entries.is_empty() {
        return Err(CliError::data("no usable rows in the score file"));
    }

    let grades: Vec<UsabilityGrade> = entries.iter().map(|(_, g)| *g).collect();
    let split = dataset::split(entries.len(), 0.7, seed, Some(&grades))?;

    let copy = |indices: &[usize], subset: &str| -> Result<(), CliError> {
        for &i in indices {
            let (filename, grade) = &entries[i];
            let source = src.join(filename);
            if !source.exists() {
                return Err(CliError::io(format!("missing image {}", source.display())));
            }
            let dest_dir = out.join(subset).join(grade.as_str());
            std::fs::create_dir_all(&dest_dir)?;
            std::fs::copy(&source, dest_dir.join(filename))?;
        }
        Ok(())
    };
    copy(&split.train_indices, "train")?;
    copy(&split.test_indices, "test")?;

    let output = IngestOutput {
        train: split.train_indices.len(),
        test: split.test_indices.len(),
        rejected_red_range: rejected,
    };
    println!("{}", serde_json::to_string_pretty(&output)?);
    Ok(())
}

#[derive(Serialize)]
struct TrainCnnOutput {
    epochs: Vec<cnn::EpochStats>,
    skipped_images: usize,
    test_metrics: MetricsReport,
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_train_cnn(
    data: PathBuf,
    model_path: PathBuf,
    epochs: usize,
    batch: usize,
    seed: u64,
    side: usize,
) -> Result<(), CliError> {
    let test_dir = data.join("test");
    if !test_dir.is_dir() {
        return Err(CliError::data(format!(
            "missing test folder {}",
            test_dir.display()
        )));
    }
    let config = cnn::TrainConfig {
        batch_size: batch,
        epochs,
        seed,
        arch: cnn::CnnArch {
            input_side: side,
            ..cnn::CnnArch::default()
        },
        ..cnn::TrainConfig::default()
    };
    let (model, log) = cnn::train(&data, &config)?;

    let test_data = cnn::load_labeled_dir(&test_dir, side)?;
    if test_data.images.is_empty() {
        return Err(CliError::data(format!(
            "test folder {} holds no images",
            test_dir.display()
        )));
    }
    let mut actual = Vec::new();
    let mut predicted = Vec::new();
    for (image, grade) in &test_data.images {
        actual.push(*grade);
        predicted.push(cnn::predict_cnn(&model, image)?.0);
    }
    let cm = build_confusion(&actual, &predicted, &UsabilityGrade::ALL)?;
    let metrics = compute_metrics(&cm)?;

    model.save(&model_path)?;
    let output = TrainCnnOutput {
        epochs: log,
        skipped_images: test_data.skipped,
        test_metrics: metrics,
    };
    println!("{}", serde_json::to_string_pretty(&output)?);
    Ok(())
}

pub fn cmd_eval(
    svm_model: Option<PathBuf>,
    input: Option<PathBuf>,
    cnn_model: Option<PathBuf>,
    data: Option<PathBuf>,
) -> Result<(), CliError> {
    match (svm_model, input, cnn_model, data) {
        (Some(model_path), Some(input), None, None) => {
            let (model, scaler) = svm::SvmModelFile::load(&model_path)?.into_model();
            let records = dataset::read_csv(&input)?;
            let actual = labeled_rows(&records)?;
            let predicted: Vec<UsabilityGrade> = records
                .iter()
                .map(|r| {
                    svm::predict(&model, &dataset::apply_scaler(&scaler, &dataset::encode(r)))
                })
                .collect();
            let metrics = compute_metrics(&build_confusion(
                &actual,
                &predicted,
                &UsabilityGrade::ALL,
            )?)?;
            println!("{}", serde_json::to_string_pretty(&metrics)?);
            Ok(())
        }
        (None, None, Some(model_path), Some(data)) => {
            let model = cnn::CnnModel::load(&model_path)?;
            let images = cnn::load_labeled_dir(&data, model.arch.input_side)?;
            if images.images.is_empty() {
                return Err(CliError::data(format!(
                    "{} holds no images",
                    data.display()
                )));
            }
            let mut actual = Vec::new();
            let mut predicted = Vec::new();
            for (image, grade) in &images.images {
                actual.push(*grade);
                predicted.push(cnn::predict_cnn(&model, image)?.0);
            }
            let metrics = compute_metrics(&build_confusion(
                &actual,
                &predicted,
                &UsabilityGrade::ALL,
            )?)?;
            println!("{}", serde_json::to_string_pretty(&metrics)?);
            Ok(())
        }
        _ => Err(CliError::usage(
            "use either --svm-model with --in, or --cnn-model with --data",
        )),
    }
}

pub fn cmd_audit(url: String, svm_model: PathBuf, config: &AppConfig) -> Result<(), CliError> {
    let (model, scaler) = svm::SvmModelFile::load(&svm_model)?.into_model();
    let record = extract_record_from_url(&url, config)?;
    let predicted =
        svm::predict(&model, &dataset::apply_scaler(&scaler, &dataset::encode(&record)));
    let recommendations = build_recommendations(&record, &config.thresholds);
    let report = AuditReport {
        url,
        features: record,
        predicted_grade: predicted,
        recommendations,
        model_version: svm::MODEL_FILE_VERSION.to_owned(),
        timestamp: unix_timestamp_rfc3339(),
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

/// RFC 3339 UTC timestamp from the system clock, without a date-time
/// dependency (civil-from-days algorithm).
fn unix_timestamp_rfc3339() -> String {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let days = (secs / 86_400) as i64;
    let rem = secs % 86_400;
    let (hh, mm, ss) = (rem / 3600, (rem % 3600) / 60, rem % 60);
    let z = days + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z.rem_euclid(146_097);
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let year = yoe + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let day = doy - (153 * mp + 2) / 5 + 1;
    let month = if mp < 10 { mp + 3 } else { mp - 9 };
    let year = if month <= 2 { year + 1 } else { year };
    format!("{year:04}-{month:02}-{day:02}T{hh:02}:{mm:02}:{ss:02}Z")
}
