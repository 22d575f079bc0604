//! Network-facing measurements: page load time, image-resolution scoring
//! through a page-speed service client (with a local offline fallback),
//! and screenshot ingestion.

use crate::extraction::HtmlDocument;
use crate::grade::ResolutionGrade;
use serde::{Deserialize, Serialize};
use std::io::Read;
use std::path::Path;
use std::time::{Duration, Instant};
use thiserror::Error;

pub const DEFAULT_TIMEOUT_S: u64 = 30;
pub const DEFAULT_PAGESPEED_ENDPOINT: &str =
    "https://www.googleapis.com/pagespeedonline/v5/runPagespeed";
pub const DEFAULT_OPTIMIZATION_AUDIT: &str = "uses-optimized-images";
pub const DEFAULT_FORMAT_AUDIT: &str = "modern-image-formats";
pub const DEFAULT_PARALLELISM: usize = 4;

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("host unreachable: {0}")]
    UnreachableHost(String),
    #[error("request timed out after {0:?}")]
    Timeout(Duration),
    #[error("browser-timing backend is not available: {0}")]
    BackendUnavailable(String),
    #[error("page-speed service unavailable: {0}")]
    ServiceUnavailable(String),
    #[error("page-speed response malformed: {0}")]
    MalformedResponse(String),
    #[error("page-speed service denied access")]
    AccessDenied,
    #[error("file not found: {0}")]
    MissingFile(String),
    #[error("cannot decode image {path}: {reason}")]
    UndecodableImage { path: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LoadTimeBackend {
    SimpleFetch,
    BrowserTiming,
}

/// One load-time measurement, tagged with the backend that produced it.
#[derive(Debug, Clone, Serialize)]
pub struct LoadTimeSample {
    pub url: String,
    pub seconds: f64,
    pub backend: LoadTimeBackend,
}

/// Raw navigation-timing readings in milliseconds.
#[derive(Debug, Clone, Copy)]
pub struct BrowserTiming {
    pub navigation_start_ms: f64,
    pub dom_complete_ms: f64,
}

/// Adapter for an external browser-automation endpoint that can read
/// `window.performance.timing`. Not bundled; implementations plug in here.
pub trait BrowserTimingAdapter {
    fn timing(&self, url: &str) -> Result<BrowserTiming, ProbeError>;
}

/// Placeholder adapter; always reports the backend as unavailable.
pub struct NoBrowserAdapter;

impl BrowserTimingAdapter for NoBrowserAdapter {
    fn timing(&self, _url: &str) -> Result<BrowserTiming, ProbeError> {
        Err(ProbeError::BackendUnavailable(
            "no browser automation adapter configured".into(),
        ))
    }
}

/// (domComplete - navigationStart) / 1000, in seconds.
pub fn seconds_from_timing(t: &BrowserTiming) -> f64 {
    (t.dom_complete_ms - t.navigation_start_ms) / 1000.0
}

fn map_transport_error(url: &str, timeout: Duration, err: &ureq::Error) -> ProbeError {
    let msg = err.to_string();
    if msg.contains("timed out") || msg.contains("timeout") {
        ProbeError::Timeout(timeout)
    } else {
        ProbeError::UnreachableHost(format!("{url}: {msg}"))
    }
}

/// Wall-clock seconds from request start to complete receipt of the root
/// document body. HTTP error statuses still count as a reachable page.
pub fn measure_load_time(url: &str, timeout: Duration) -> Result<LoadTimeSample, ProbeError> {
    let agent = ureq::AgentBuilder::new().timeout(timeout).build();
    let start = Instant::now();
    let response = match agent.get(url).call() {
        Ok(r) => r,
        Err(ureq::Error::Status(_, r)) => r,
        Err(e) => return Err(map_transport_error(url, timeout, &e)),
    };
    let mut sink = Vec::new();
    response
        .into_reader()
        .read_to_end(&mut sink)
        .map_err(|e| {
            if e.kind() == std::io::ErrorKind::TimedOut || e.to_string().contains("timed out") {
                ProbeError::Timeout(timeout)
            } else {
                ProbeError::UnreachableHost(format!("{url}: {e}"))
            }
        })?;
    Ok(LoadTimeSample {
        url: url.to_owned(),
        seconds: start.elapsed().as_secs_f64(),
        backend: LoadTimeBackend::SimpleFetch,
    })
}

/// Fetch a page once, returning both the timing sample and the body text.
pub fn fetch_page(
    url: &str,
    timeout: Duration,
) -> Result<(LoadTimeSample, HtmlDocument), ProbeError> {
    let agent = ureq::AgentBuilder::new().timeout(timeout).build();
    let start = Instant::now();
    let response = match agent.get(url).call() {
        Ok(r) => r,
        Err(ureq::Error::Status(_, r)) => r,
        Err(e) => return Err(map_transport_error(url, timeout, &e)),
    };
    let body = response.into_string().map_err(|e| {
        if e.kind() == std::io::ErrorKind::TimedOut || e.to_string().contains("timed out") {
            ProbeError::Timeout(timeout)
        } else {
            ProbeError::UnreachableHost(format!("{url}: {e}"))
        }
    })?;
    let sample = LoadTimeSample {
        url: url.to_owned(),
        seconds: start.elapsed().as_secs_f64(),
        backend: LoadTimeBackend::SimpleFetch,
    };
    Ok((sample, HtmlDocument::with_url(url, body)))
}

/// Load time via the browser-timing adapter.
pub fn measure_load_time_browser(
    url: &str,
    adapter: &dyn BrowserTimingAdapter,
) -> Result<LoadTimeSample, ProbeError> {
    let t = adapter.timing(url)?;
    Ok(LoadTimeSample {
        url: url.to_owned(),
        seconds: seconds_from_timing(&t),
        backend: LoadTimeBackend::BrowserTiming,
    })
}

/// Image-optimization and image-format audit scores, each in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PageSpeedScores {
    pub optimization: f64,
    pub format: f64,
}

/// Anything that can score a URL's image optimization and format.
pub trait PageSpeedClient {
    fn scores(&self, url: &str) -> Result<PageSpeedScores, ProbeError>;
}

/// Client for the v5 runPagespeed HTTP endpoint. The audit entries read
/// from the response are configurable because the service has renamed
/// them over time.
pub struct HttpPageSpeedClient {
    pub endpoint: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub optimization_audit: String,
    pub format_audit: String,
}

impl Default for HttpPageSpeedClient {
    fn default() -> Self {
        HttpPageSpeedClient {
            endpoint: DEFAULT_PAGESPEED_ENDPOINT.to_owned(),
            api_key: None,
            timeout: Duration::from_secs(DEFAULT_TIMEOUT_S),
            optimization_audit: DEFAULT_OPTIMIZATION_AUDIT.to_owned(),
            format_audit: DEFAULT_FORMAT_AUDIT.to_owned(),
        }
    }
}

/// Pull the two audit scores out of a runPagespeed JSON body.
pub fn parse_pagespeed_response(
    body: &serde_json::Value,
    optimization_audit: &str,
    format_audit: &str,
) -> Result<PageSpeedScores, ProbeError> {
    let audit_score = |name: &str| -> Result<f64, ProbeError> {
        body.pointer(&format!("/lighthouseResult/audits/{name}/score"))
            .and_then(|v| v.as_f64())
            .ok_or_else(|| ProbeError::MalformedResponse(format!("missing audit {name:?}")))
    };
    let optimization = audit_score(optimization_audit)?;
    let format = audit_score(format_audit)?;
    if !(0.0..=1.0).contains(&optimization) || !(0.0..=1.0).contains(&format) {
        return Err(ProbeError::MalformedResponse(format!(
            "audit scores out of [0,1]: {optimization}, {format}"
        )));
    }
    Ok(PageSpeedScores {
        optimization,
        format,
    })
}

impl PageSpeedClient for HttpPageSpeedClient {
    fn scores(&self, url: &str) -> Result<PageSpeedScores, ProbeError> {
        let agent = ureq::AgentBuilder::new().timeout(self.timeout).build();
        let mut request = agent.get(&self.endpoint).query("url", url);
        if let Some(key) = &self.api_key {
            request = request.query("key", key);
        }
        let response = match request.call() {
            Ok(r) => r,
            Err(ureq::Error::Status(403, _)) => return Err(ProbeError::AccessDenied),
            Err(ureq::Error::Status(code, _)) => {
                return Err(ProbeError::ServiceUnavailable(format!("HTTP {code}")))
            }
            Err(e) => return Err(ProbeError::ServiceUnavailable(e.to_string())),
        };
        let body: serde_json::Value = response
            .into_json()
            .map_err(|e| ProbeError::MalformedResponse(e.to_string()))?;
        parse_pagespeed_response(&body, &self.optimization_audit, &self.format_audit)
    }
}

/// Offline fallback scorer over the page's own `<img>` sources: modern
/// image formats earn the format score, explicit dimensions and lazy
/// loading stand in for optimization. Plumbing only; never used where a
/// real measurement is required.
pub struct LocalHeuristicScorer {
    pub fetch_timeout: Duration,
}

impl LocalHeuristicScorer {
    pub fn score_document(&self, doc: &HtmlDocument) -> PageSpeedScores {
        let img_re = regex::Regex::new(r"(?is)<img\b[^>]*>").unwrap();
        let src_re = regex::Regex::new(r#"(?i)src\s*=\s*["']([^"']+)["']"#).unwrap();
        let mut total = 0u32;
        let mut modern = 0u32;
        let mut optimized = 0u32;
        for tag in img_re.find_iter(&doc.body) {
            total += 1;
            let t = tag.as_str().to_lowercase();
            if let Some(c) = src_re.captures(&t) {
                let src = &c[1];
                if src.ends_with(".webp") || src.ends_with(".avif") || src.ends_with(".svg") {
                    modern += 1;
                }
            }
            if t.contains("srcset") || t.contains("loading=\"lazy\"") || t.contains("width=") {
                optimized += 1;
            }
        }
        if total == 0 {
            return PageSpeedScores {
                optimization: 1.0,
                format: 1.0,
            };
        }
        PageSpeedScores {
            optimization: optimized as f64 / total as f64,
            format: modern as f64 / total as f64,
        }
    }
}

impl PageSpeedClient for LocalHeuristicScorer {
    fn scores(&self, url: &str) -> Result<PageSpeedScores, ProbeError> {
        let agent = ureq::AgentBuilder::new().timeout(self.fetch_timeout).build();
        let body = agent
            .get(url)
            .call()
            .map_err(|e| map_transport_error(url, self.fetch_timeout, &e))?
            .into_string()
            .map_err(|e| ProbeError::UnreachableHost(format!("{url}: {e}")))?;
        Ok(self.score_document(&HtmlDocument::with_url(url, body)))
    }
}

/// Average the two scores and bucket: A for [0.8, 1.0], then B/C/D in
/// 0.2-wide half-open steps, F below 0.2.
pub fn grade_resolution(scores: &PageSpeedScores) -> ResolutionGrade {
    let avg = (scores.optimization + scores.format) / 2.0;
    if avg >= 0.8 {
        ResolutionGrade::A
    } else if avg >= 0.6 {
        ResolutionGrade::B
    } else if avg >= 0.4 {
        ResolutionGrade::C
    } else if avg >= 0.2 {
        ResolutionGrade::D
    } else {
        ResolutionGrade::F
    }
}

/// Square RGB image with channel values in [0, 1], row-major H x W x 3.
#[derive(Debug, Clone)]
pub struct ImageTensor {
    pub side: usize,
    pub data: Vec<f64>,
}

impl ImageTensor {
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.data[(row * self.side + col) * 3 + channel]
    }
}

fn bilinear_resize(src: &[f64], src_h: usize, src_w: usize, target: usize) -> Vec<f64> {
    let mut out = vec![0.0; target * target * 3];
    let scale_y = src_h as f64 / target as f64;
    let scale_x = src_w as f64 / target as f64;
    for oy in 0..target {
        let sy = ((oy as f64 + 0.5) * scale_y - 0.5).clamp(0.0, (src_h - 1) as f64);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(src_h - 1);
        let fy = sy - y0 as f64;
        for ox in 0..target {
            let sx = ((ox as f64 + 0.5) * scale_x - 0.5).clamp(0.0, (src_w - 1) as f64);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(src_w - 1);
            let fx = sx - x0 as f64;
            for c in 0..3 {
                let p00 = src[(y0 * src_w + x0) * 3 + c];
                let p01 = src[(y0 * src_w + x1) * 3 + c];
                let p10 = src[(y1 * src_w + x0) * 3 + c];
                let p11 = src[(y1 * src_w + x1) * 3 + c];
                let top = p00 + (p01 - p00) * fx;
                let bottom = p10 + (p11 - p10) * fx;
                out[(oy * target + ox) * 3 + c] = top + (bottom - top) * fy;
            }
        }
    }
    out
}

/// Decode a PNG/JPEG screenshot, bilinear-resize to target_side square,
/// and normalize channels to [0, 1].
pub fn ingest_screenshot(
    path: impl AsRef<Path>,
    target_side: usize,
) -> Result<ImageTensor, ProbeError> {
    let path = path.as_ref();
    assert!(target_side > 0);
    if !path.exists() {
        return Err(ProbeError::MissingFile(path.display().to_string()));
    }
    let img = image::open(path).map_err(|e| ProbeError::UndecodableImage {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    let rgb = img.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let src: Vec<f64> = rgb.as_raw().iter().map(|&v| v as f64 / 255.0).collect();
    let data = if w == target_side && h == target_side {
        src
    } else {
        bilinear_resize(&src, h, w, target_side)
    };
    Ok(ImageTensor {
        side: target_side,
        data,
    })
}

/// Apply `f` to each item with at most `parallelism` worker threads,
/// returning results in input order.
pub fn parallel_map<T, R, F>(items: &[T], parallelism: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    assert!(parallelism > 0);
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut slots: Vec<Option<R>> = (0..items.len()).map(|_| None).collect();
    let slots_ptr = std::sync::Mutex::new(&mut slots);
    std::thread::scope(|scope| {
        for _ in 0..parallelism.min(items.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots_ptr.lock().unwrap()[i] = Some(r);
            });
        }
    });
    slots.into_iter().map(|s| s.unwrap()).collect()
}
