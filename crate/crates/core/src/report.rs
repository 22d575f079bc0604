//! Audit report assembly: threshold checks over the four features and the
//! fixed improvement-recommendation catalogue.

use crate::dataset::AuditRecord;
use crate::grade::{ResolutionGrade, UsabilityGrade};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    LoadTime,
    MobileUi,
    Resolution,
    ContactInfo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Info,
    Warn,
    Critical,
}

#[derive(Debug, Clone, Serialize)]
pub struct Recommendation {
    pub feature: FeatureKind,
    pub severity: Severity,
    pub message: String,
}

/// Feature thresholds that trigger recommendations.
#[derive(Debug, Clone, Copy)]
pub struct Thresholds {
    pub load_warn_s: f64,
    pub load_critical_s: f64,
    pub resolution_warn: ResolutionGrade,
    pub resolution_critical: ResolutionGrade,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            load_warn_s: 3.0,
            load_critical_s: 8.0,
            resolution_warn: ResolutionGrade::D,
            resolution_critical: ResolutionGrade::F,
        }
    }
}

/// One recommendation per failing feature; an empty list means every
/// feature passed its threshold.
pub fn build_recommendations(record: &AuditRecord, thresholds: &Thresholds) -> Vec<Recommendation> {
    let mut out = Vec::new();

    if record.load_time_s > thresholds.load_critical_s {
        out.push(Recommendation {
            feature: FeatureKind::LoadTime,
            severity: Severity::Critical,
            message: format!(
                "The page took {:.1} s to load. Visitors abandon pages this slow; cut payload \
                 weight, enable compression and caching, and defer non-essential scripts.",
                record.load_time_s
            ),
        });
    } else if record.load_time_s > thresholds.load_warn_s {
        out.push(Recommendation {
            feature: FeatureKind::LoadTime,
            severity: Severity::Warn,
            message: format!(
                "The page took {:.1} s to load. Managing the time a page needs to load keeps \
                 shoppers engaged; aim below {:.0} s by trimming images and third-party scripts.",
                record.load_time_s, thresholds.load_warn_s
            ),
        });
    }

    if !record.mobile_ui {
        out.push(Recommendation {
            feature: FeatureKind::MobileUi,
            severity: Severity::Warn,
            message: "No mobile-UI markers were found. Add a viewport meta declaration and a \
                      responsive layout so the store renders properly on phones and tablets."
                .into(),
        });
    }

    if record.resolution_grade >= thresholds.resolution_critical {
        out.push(Recommendation {
            feature: FeatureKind::Resolution,
            severity: Severity::Critical,
            message: "Product imagery scores at the bottom of the optimization/format scale. \
                      Replace low-quality images and serve modern, properly compressed formats."
                .into(),
        });
    } else if record.resolution_grade >= thresholds.resolution_warn {
        out.push(Recommendation {
            feature: FeatureKind::Resolution,
            severity: Severity::Warn,
            message: "Image optimization and format scores are low. High-resolution, \
                      well-compressed product photos help shoppers judge what they are buying."
                .into(),
        });
    }

    if !record.contact_info {
        out.push(Recommendation {
            feature: FeatureKind::ContactInfo,
            severity: Severity::Warn,
            message: "No contact information was found. Publish an email address, phone number \
                      or social profile so customers can reach the shop owner."
                .into(),
        });
    }

    out
}

/// Full per-site audit output, serialized to stdout by the audit command.
#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub url: String,
    pub features: AuditRecord,
    pub predicted_grade: UsabilityGrade,
    pub recommendations: Vec<Recommendation>,
    pub model_version: String,
    pub timestamp: String,
}
