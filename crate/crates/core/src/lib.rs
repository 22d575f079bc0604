//! Usability auditing for shopping websites.
//!
//! The pipeline: scrape four usability features from a page (load time,
//! mobile-UI markers, image-resolution grade, contact information), label
//! corpora of such feature rows with K-means, classify usability grades
//! with a grid-searched RBF SVM trained by SMO, and classify homepage
//! screenshots with a small from-scratch CNN. Metric reports and
//! improvement recommendations round out the toolkit.

pub mod cnn;
pub mod config;
pub mod dataset;
pub mod evaluation;
pub mod extraction;
pub mod grade;
pub mod labeling;
pub mod probe;
pub mod report;
pub mod svm;

pub use grade::{ResolutionGrade, UsabilityGrade};
