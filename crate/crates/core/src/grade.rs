//! Ordinal grade scales shared across the pipeline.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Five-level usability label, ordered best to worst.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UsabilityGrade {
    Excellent,
    VeryGood,
    Good,
    Bad,
    VeryBad,
}

impl UsabilityGrade {
    /// All grades, best first.
    pub const ALL: [UsabilityGrade; 5] = [
        UsabilityGrade::Excellent,
        UsabilityGrade::VeryGood,
        UsabilityGrade::Good,
        UsabilityGrade::Bad,
        UsabilityGrade::VeryBad,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            UsabilityGrade::Excellent => "excellent",
            UsabilityGrade::VeryGood => "very_good",
            UsabilityGrade::Good => "good",
            UsabilityGrade::Bad => "bad",
            UsabilityGrade::VeryBad => "very_bad",
        }
    }
}

impl fmt::Display for UsabilityGrade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for UsabilityGrade {
    type Err = UnknownGrade;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "excellent" => Ok(UsabilityGrade::Excellent),
            "very_good" => Ok(UsabilityGrade::VeryGood),
            "good" => Ok(UsabilityGrade::Good),
            "bad" => Ok(UsabilityGrade::Bad),
            "very_bad" => Ok(UsabilityGrade::VeryBad),
            _ => Err(UnknownGrade(s.to_owned())),
        }
    }
}

/// Image-resolution grade. The scale runs A..D then F; there is no E.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ResolutionGrade {
    A,
    B,
    C,
    D,
    F,
}

impl ResolutionGrade {
    /// Ordinal encoding by quality: A -> 4 down to F -> 0.
    pub fn ordinal(&self) -> f64 {
        match self {
            ResolutionGrade::A => 4.0,
            ResolutionGrade::B => 3.0,
            ResolutionGrade::C => 2.0,
            ResolutionGrade::D => 1.0,
            ResolutionGrade::F => 0.0,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ResolutionGrade::A => "A",
            ResolutionGrade::B => "B",
            ResolutionGrade::C => "C",
            ResolutionGrade::D => "D",
            ResolutionGrade::F => "F",
        }
    }
}

impl fmt::Display for ResolutionGrade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ResolutionGrade {
    type Err = UnknownGrade;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "A" => Ok(ResolutionGrade::A),
            "B" => Ok(ResolutionGrade::B),
            "C" => Ok(ResolutionGrade::C),
            "D" => Ok(ResolutionGrade::D),
            "F" => Ok(ResolutionGrade::F),
            _ => Err(UnknownGrade(s.to_owned())),
        }
    }
}

#[derive(Debug, Clone, thiserror::Error)]
#[error("unknown grade label: {0:?}")]
pub struct UnknownGrade(pub String);
