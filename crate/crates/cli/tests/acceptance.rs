//! CLI contract checks: every documented exit code, JSON schema validation
//! of the machine-readable outputs, and byte-reproducibility of seeded
//! commands.

use std::io::{Read as _, Write as _};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Duration;

const BIN: &str = env!("CARGO_BIN_EXE_webaudit");

fn run(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args);
    cmd.env_remove("AUDIT_CONFIG");
    cmd.env_remove("PAGESPEED_API_KEY");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("failed to launch binary")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn assert_exit(out: &Output, code: i32, context: &str) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "{context}\nstdout: {}\nstderr: {}",
        stdout_of(out),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn schema(name: &str) -> jsonschema::JSONSchema {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("schemas")
        .join(name);
    let raw: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    jsonschema::JSONSchema::compile(&raw).unwrap()
}

fn assert_valid(schema: &jsonschema::JSONSchema, value: &serde_json::Value, context: &str) {
    if let Err(errors) = schema.validate(value) {
        let list: Vec<String> = errors.map(|e| format!("{e} at {}", e.instance_path)).collect();
        panic!("{context}: schema violations: {list:#?}");
    }
}

/// Feature CSV with five clearly separated site archetypes, `rows` rows.
fn write_feature_csv(path: &Path, rows: usize) {
    let archetypes = [
        (1.0, "A", "yes", "yes"),
        (3.0, "B", "yes", "yes"),
        (6.0, "C", "yes", "no"),
        (9.0, "D", "no", "yes"),
        (14.0, "F", "no", "no"),
    ];
    let mut text = String::from("url,load_time_s,mobile_ui,resolution_grade,contact_info,grade\n");
    for i in 0..rows {
        let (load, res, mobile, contact) = archetypes[i % 5];
        let jitter = (i / 5) as f64 * 0.01;
        text.push_str(&format!(
            "https://site-{i}.example,{:.3},{mobile},{res},{contact},\n",
            load + jitter
        ));
    }
    std::fs::write(path, text).unwrap();
}

struct Workspace {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Workspace {
    fn new() -> Workspace {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_owned();
        Workspace { _dir: dir, root }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn str(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }
}

#[test]
fn usage_errors_exit_64() {
    let out = run(&["no-such-verb"], &[]);
    assert_exit(&out, 64, "unknown subcommand");

    let out = run(&["label"], &[]);
    assert_exit(&out, 64, "missing required flags");

    let ws = Workspace::new();
    write_feature_csv(&ws.path("f.csv"), 10);
    let out = run(
        &[
            "extract",
            "--url",
            "https://a.example",
            "--html",
            "x.html",
            "--out",
            &ws.str("o.csv"),
        ],
        &[],
    );
    assert_exit(&out, 64, "conflicting extract sources");
    println!("PASS exit 64: unknown verb, missing flags, conflicting flags");
}

#[test]
fn missing_files_exit_3() {
    let ws = Workspace::new();
    let out = run(
        &[
            "predict-svm",
            "--model",
            &ws.str("absent.json"),
            "--in",
            &ws.str("absent.csv"),
        ],
        &[],
    );
    assert_exit(&out, 3, "missing model file");
    println!("PASS exit 3: missing model file reported as I/O failure");
}

#[test]
fn bad_data_exits_4() {
    let ws = Workspace::new();
    // too few rows to cluster into five grades
    write_feature_csv(&ws.path("tiny.csv"), 3);
    let out = run(
        &[
            "label",
            "--in",
            &ws.str("tiny.csv"),
            "--out",
            &ws.str("labeled.csv"),
        ],
        &[],
    );
    assert_exit(&out, 4, "labeling under 5 rows");

    // malformed CSV cell
    std::fs::write(
        ws.path("bad.csv"),
        "url,load_time_s,mobile_ui,resolution_grade,contact_info,grade\n\
         https://x.example,fast,yes,A,yes,\n",
    )
    .unwrap();
    let out = run(
        &[
            "label",
            "--in",
            &ws.str("bad.csv"),
            "--out",
            &ws.str("labeled.csv"),
        ],
        &[],
    );
    assert_exit(&out, 4, "non-numeric load time");

    // offline extract without the flags that replace measurement
    std::fs::write(ws.path("page.html"), "<html><body>hi</body></html>").unwrap();
    let out = run(
        &[
            "extract",
            "--html",
            &ws.str("page.html"),
            "--no-net",
            "--out",
            &ws.str("o.csv"),
        ],
        &[],
    );
    assert_exit(&out, 4, "offline extract missing measurements");
    assert!(!ws.path("o.csv").exists(), "incomplete row must not be written");
    println!("PASS exit 4: tiny dataset, malformed CSV, incomplete offline extract");
}

#[test]
fn corrupt_model_exits_5() {
    let ws = Workspace::new();
    std::fs::write(
        ws.path("wrong.json"),
        r#"{"version":"webaudit-svm-99","classes":[],"c":1.0,"gamma":0.1,"scaler":{"mean":[0,0,0,0],"std":[1,1,1,1]},"pairs":[]}"#,
    )
    .unwrap();
    write_feature_csv(&ws.path("f.csv"), 10);
    let out = run(
        &[
            "predict-svm",
            "--model",
            &ws.str("wrong.json"),
            "--in",
            &ws.str("f.csv"),
        ],
        &[],
    );
    assert_exit(&out, 5, "unsupported model version");
    println!("PASS exit 5: unsupported model file version");
}

#[test]
fn network_failures_exit_2() {
    let ws = Workspace::new();
    // bind-then-drop yields a port that is known to be closed
    let port = {
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        listener.local_addr().unwrap().port()
    };
    let dead_url = format!("http://127.0.0.1:{port}/");
    let out = run(&["probe", "--url", &dead_url], &[]);
    assert_exit(&out, 2, "unreachable host on probe");

    std::fs::write(
        ws.path("model.json"),
        r#"{"version":"webaudit-svm-1","classes":["excellent","very_bad"],"c":1.0,"gamma":0.1,"scaler":{"mean":[0,0,0,0],"std":[1,1,1,1]},"pairs":[{"class_a":"excellent","class_b":"very_bad","model":{"support_vectors":[[0,0,0,0]],"dual_coefs":[1.0],"bias":0.0,"gamma":0.1,"c":1.0,"converged":true}}]}"#,
    )
    .unwrap();
    let out = run(
        &[
            "audit",
            "--url",
            &dead_url,
            "--svm-model",
            &ws.str("model.json"),
        ],
        &[],
    );
    assert_exit(&out, 2, "unreachable host on audit");
    println!("PASS exit 2: unreachable host from probe and audit");
}

#[test]
fn offline_pipeline_succeeds_reproducibly_and_validates() {
    let ws = Workspace::new();
    write_feature_csv(&ws.path("features.csv"), 50);

    // label twice with the same seed: identical bytes
    let out = run(
        &[
            "label",
            "--in",
            &ws.str("features.csv"),
            "--out",
            &ws.str("labeled.csv"),
            "--seed",
            "7",
        ],
        &[],
    );
    assert_exit(&out, 0, "label");
    let out = run(
        &[
            "label",
            "--in",
            &ws.str("features.csv"),
            "--out",
            &ws.str("labeled2.csv"),
            "--seed",
            "7",
        ],
        &[],
    );
    assert_exit(&out, 0, "label rerun");
    assert_eq!(
        std::fs::read(ws.path("labeled.csv")).unwrap(),
        std::fs::read(ws.path("labeled2.csv")).unwrap(),
        "seeded labeling is not byte-reproducible"
    );

    // train twice with the same seed: identical model bytes, valid schema
    for model in ["model.json", "model2.json"] {
        let out = run(
            &[
                "train-svm",
                "--in",
                &ws.str("labeled.csv"),
                "--model",
                &ws.str(model),
                "--seed",
                "7",
            ],
            &[],
        );
        assert_exit(&out, 0, "train-svm");
    }
    let model_bytes = std::fs::read(ws.path("model.json")).unwrap();
    assert_eq!(
        model_bytes,
        std::fs::read(ws.path("model2.json")).unwrap(),
        "seeded training is not byte-reproducible"
    );
    let model_json: serde_json::Value = serde_json::from_slice(&model_bytes).unwrap();
    assert_valid(&schema("svm_model.schema.json"), &model_json, "model file");

    // predictions on the training corpus parse and carry known grades
    let out = run(
        &[
            "predict-svm",
            "--model",
            &ws.str("model.json"),
            "--in",
            &ws.str("labeled.csv"),
        ],
        &[],
    );
    assert_exit(&out, 0, "predict-svm");
    let preds: serde_json::Value = serde_json::from_str(&stdout_of(&out)).unwrap();
    assert_eq!(preds.as_array().unwrap().len(), 50);

    // eval emits a schema-valid metrics report
    let out = run(
        &[
            "eval",
            "--svm-model",
            &ws.str("model.json"),
            "--in",
            &ws.str("labeled.csv"),
        ],
        &[],
    );
    assert_exit(&out, 0, "eval");
    let metrics: serde_json::Value = serde_json::from_str(&stdout_of(&out)).unwrap();
    assert_valid(&schema("metrics_report.schema.json"), &metrics, "metrics");
    assert!(metrics["accuracy"].as_f64().unwrap() > 0.9);
    println!("PASS exit 0 pipeline: label/train/predict/eval, byte-reproducible, schemas valid");
}

#[test]
fn screenshot_ingestion_routes_by_grade() {
    let ws = Workspace::new();
    let src = ws.path("shots");
    std::fs::create_dir_all(&src).unwrap();
    let mut scores = String::from("filename,score\n");
    // 10 excellent-range and 10 bad-range shots, plus 2 red-range rejects
    for i in 0..10 {
        let name = format!("good{i}.png");
        write_png(&src.join(&name), 8, 200);
        scores.push_str(&format!("{name},9.1\n"));
    }
    for i in 0..10 {
        let name = format!("poor{i}.png");
        write_png(&src.join(&name), 8, 30);
        scores.push_str(&format!("{name},4.7\n"));
    }
    for i in 0..2 {
        let name = format!("red{i}.png");
        write_png(&src.join(&name), 8, 120);
        scores.push_str(&format!("{name},2.0\n"));
    }
    std::fs::write(ws.path("scores.csv"), scores).unwrap();

    let out = run(
        &[
            "ingest-screenshots",
            "--scores",
            &ws.str("scores.csv"),
            "--src",
            &ws.str("shots"),
            "--out",
            &ws.str("dataset"),
            "--seed",
            "3",
        ],
        &[],
    );
    assert_exit(&out, 0, "ingest-screenshots");
    let summary: serde_json::Value = serde_json::from_str(&stdout_of(&out)).unwrap();
    assert_eq!(summary["rejected_red_range"], 2);
    assert_eq!(summary["train"], 14); // floor(0.7 * 10) per class
    assert_eq!(summary["test"], 6);
    let count = |sub: &str, grade: &str| {
        std::fs::read_dir(ws.path("dataset").join(sub).join(grade))
            .map(|d| d.count())
            .unwrap_or(0)
    };
    assert_eq!(count("train", "excellent") + count("test", "excellent"), 10);
    assert_eq!(count("train", "bad") + count("test", "bad"), 10);
    println!("PASS screenshot ingestion: red range rejected, stratified 70:30 layout on disk");
}

#[test]
fn audit_over_local_http_emits_schema_valid_report() {
    let ws = Workspace::new();
    write_feature_csv(&ws.path("features.csv"), 50);
    let out = run(
        &[
            "label",
            "--in",
            &ws.str("features.csv"),
            "--out",
            &ws.str("labeled.csv"),
        ],
        &[],
    );
    assert_exit(&out, 0, "label for audit");
    let out = run(
        &[
            "train-svm",
            "--in",
            &ws.str("labeled.csv"),
            "--model",
            &ws.str("model.json"),
        ],
        &[],
    );
    assert_exit(&out, 0, "train for audit");

    let page = "<html><head><meta name=\"viewport\" content=\"width=device-width\"></head>\
                <body>mail us: shop@local.example</body></html>";
    let pagespeed = r#"{"lighthouseResult":{"audits":{"uses-optimized-images":{"score":0.9},"modern-image-formats":{"score":0.8}}}}"#;
    let addr = spawn_stub_server(page.to_owned(), pagespeed.to_owned());

    let config = format!("pagespeed_endpoint = http://{addr}/pagespeed\ntimeout_s = 5\n");
    std::fs::write(ws.path("audit.conf"), config).unwrap();

    let out = run(
        &[
            "audit",
            "--url",
            &format!("http://{addr}/"),
            "--svm-model",
            &ws.str("model.json"),
        ],
        &[("AUDIT_CONFIG", &ws.str("audit.conf"))],
    );
    assert_exit(&out, 0, "audit");
    let report: serde_json::Value = serde_json::from_str(&stdout_of(&out)).unwrap();
    assert_valid(&schema("audit_report.schema.json"), &report, "audit report");
    assert_eq!(report["features"]["mobile_ui"], true);
    assert_eq!(report["features"]["contact_info"], true);
    assert_eq!(report["features"]["resolution_grade"], "A");

    // report goes to stdout only; the workspace gains no files
    let files: Vec<_> = std::fs::read_dir(&ws.root)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert_eq!(files.len(), 4, "audit wrote files: {files:?}");
    println!("PASS audit: schema-valid report on stdout, nothing written to disk");
}

/// Writes a uniform-gray square PNG.
fn write_png(path: &Path, side: u32, level: u8) {
    let img = image::RgbImage::from_pixel(side, side, image::Rgb([level, level, level]));
    img.save(path).unwrap();
}

/// Minimal HTTP server: serves the page body at `/` and the canned
/// JSON at `/pagespeed` until the process exits.
fn spawn_stub_server(page: String, pagespeed: String) -> std::net::SocketAddr {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || loop {
        let (mut stream, _) = match listener.accept() {
            Ok(s) => s,
            Err(_) => return,
        };
        stream
            .set_read_timeout(Some(Duration::from_secs(5)))
            .ok();
        let mut seen = Vec::new();
        let mut buf = [0u8; 4096];
        while !seen.windows(4).any(|w| w == b"\r\n\r\n") {
            match stream.read(&mut buf) {
                Ok(0) | Err(_) => break,
                Ok(n) => seen.extend_from_slice(&buf[..n]),
            }
        }
        let request = String::from_utf8_lossy(&seen);
        let (body, mime) = if request.starts_with("GET /pagespeed") {
            (pagespeed.as_str(), "application/json")
        } else {
            (page.as_str(), "text/html")
        };
        let response = format!(
            "HTTP/1.1 200 OK\r\nContent-Type: {mime}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
            body.len()
        );
        let _ = stream.write_all(response.as_bytes());
    });
    addr
}
