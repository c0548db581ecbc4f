//! Regime labels shared by every detector.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::month::Month;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Calm,
    HighVol,
}

impl Regime {
    pub fn is_high_vol(self) -> bool {
        self == Regime::HighVol
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Calm => "calm",
            Regime::HighVol => "high_vol",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "calm" | "0" => Ok(Regime::Calm),
            "high_vol" | "highvol" | "high-vol" | "1" => Ok(Regime::HighVol),
            other => Err(Error::invalid(format!("unknown regime `{other}`"))),
        }
    }
}

impl From<bool> for Regime {
    fn from(high: bool) -> Self {
        if high {
            Regime::HighVol
        } else {
            Regime::Calm
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Detector {
    Vlstar,
    Agnes,
    Tvar,
    Truth,
}

impl Detector {
    pub fn as_str(self) -> &'static str {
        match self {
            Detector::Vlstar => "vlstar",
            Detector::Agnes => "agnes",
            Detector::Tvar => "tvar",
            Detector::Truth => "truth",
        }
    }
}

impl fmt::Display for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Detector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "vlstar" => Ok(Detector::Vlstar),
            "agnes" => Ok(Detector::Agnes),
            "tvar" => Ok(Detector::Tvar),
            "truth" => Ok(Detector::Truth),
            other => Err(Error::invalid(format!("unknown detector `{other}`"))),
        }
    }
}

/// One label per month, plus the transition value when the detector has one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSeries {
    pub detector: Detector,
    pub months: Vec<Month>,
    pub labels: Vec<Regime>,
    pub transition_values: Option<Vec<f64>>,
    pub warnings: Vec<String>,
}

impl RegimeSeries {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, month: Month) -> Option<Regime> {
        self.months
            .binary_search(&month)
            .ok()
            .map(|i| self.labels[i])
    }

    pub fn high_vol_share(&self) -> f64 {
        if self.labels.is_empty() {
            return 0.0;
        }
        self.labels.iter().filter(|r| r.is_high_vol()).count() as f64 / self.labels.len() as f64
    }
}

/// Outcome of mapping a two-way partition onto Calm / HighVol.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupLabeling {
    pub labels: Vec<Regime>,
    /// Whether group `true` was designated HighVol.
    pub upper_is_high_vol: bool,
    pub warnings: Vec<String>,
}

/// The group whose months have the larger mean covariance trace is HighVol.
/// Equal means go to the smaller group (ties in size go to group `true`).
/// A partition with only one group is labelled all Calm with a warning.
pub fn label_two_groups(group: &[bool], traces: &[f64]) -> Result<GroupLabeling> {
    if group.len() != traces.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} group flags vs {} traces",
            group.len(),
            traces.len()
        )));
    }
    let n_upper = group.iter().filter(|g| **g).count();
    let n_lower = group.len() - n_upper;
    if n_upper == 0 || n_lower == 0 {
        return Ok(GroupLabeling {
            labels: vec![Regime::Calm; group.len()],
            upper_is_high_vol: false,
            warnings: vec!["only one regime detected; every month labelled calm".to_string()],
        });
    }
    let mean_of = |flag: bool| {
        let (sum, count) = group
            .iter()
            .zip(traces)
            .filter(|(g, _)| **g == flag)
            .fold((0.0, 0usize), |(s, c), (_, t)| (s + t, c + 1));
        sum / count as f64
    };
    let (upper, lower) = (mean_of(true), mean_of(false));
    let mut warnings = Vec::new();
    let upper_is_high_vol = if upper != lower {
        upper > lower
    } else {
        warnings.push("equal mean traces; smaller group labelled high-vol".to_string());
        n_upper <= n_lower
    };
    let labels = group
        .iter()
        .map(|g| Regime::from(*g == upper_is_high_vol))
        .collect();
    Ok(GroupLabeling {
        labels,
        upper_is_high_vol,
        warnings,
    })
}
