//! Distance metrics. All graph machinery is metric-agnostic; anything that
//! maps a vector pair to a non-negative scalar and is symmetric works.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Supported distance kinds.
///
/// `SquaredEuclidean` skips the square root: only comparisons matter for
/// neighbor ranking, so stored distances are squared values. `ChiSquare`
/// requires strictly positive components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MetricKind {
    #[serde(rename = "l2")]
    SquaredEuclidean,
    #[serde(rename = "cosine")]
    Cosine,
    #[serde(rename = "chi2")]
    ChiSquare,
}

impl MetricKind {
    /// Distance between two vectors of equal dimension.
    #[inline]
    pub fn eval(self, u: &[f32], v: &[f32]) -> f32 {
        debug_assert_eq!(u.len(), v.len());
        match self {
            MetricKind::SquaredEuclidean => {
                let mut acc = 0.0f32;
                for (a, b) in u.iter().zip(v) {
                    let diff = a - b;
                    acc += diff * diff;
                }
                acc
            }
            MetricKind::Cosine => {
                let (mut dot, mut nu, mut nv) = (0.0f32, 0.0f32, 0.0f32);
                for (a, b) in u.iter().zip(v) {
                    dot += a * b;
                    nu += a * a;
                    nv += b * b;
                }
                if nu == 0.0 || nv == 0.0 {
                    return 1.0;
                }
                (1.0 - dot / (nu * nv).sqrt()).max(0.0)
            }
            MetricKind::ChiSquare => {
                let mut acc = 0.0f32;
                for (a, b) in u.iter().zip(v) {
                    let diff = a - b;
                    acc += diff * diff / (a + b);
                }
                acc
            }
        }
    }

    /// Checked variant: validates dimensions and the metric's domain.
    pub fn try_eval(self, u: &[f32], v: &[f32]) -> Result<f32> {
        if u.len() != v.len() {
            return Err(Error::usage(format!(
                "dimension mismatch: {} vs {}",
                u.len(),
                v.len()
            )));
        }
        if self == MetricKind::ChiSquare {
            if let Some(x) = u.iter().chain(v).find(|x| **x <= 0.0) {
                return Err(Error::domain(format!(
                    "chi-square requires strictly positive components, got {x}"
                )));
            }
        }
        Ok(self.eval(u, v))
    }

    /// Verifies every row of `data` lies in this metric's domain.
    pub fn validate_dataset(self, data: &Dataset) -> Result<()> {
        if self == MetricKind::ChiSquare {
            for (i, row) in data.rows().enumerate() {
                if row.iter().any(|x| *x <= 0.0) {
                    return Err(Error::domain(format!(
                        "chi-square requires strictly positive components; row {i} violates this"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Stable on-disk code used by the graph file header.
    pub fn code(self) -> u32 {
        match self {
            MetricKind::SquaredEuclidean => 0,
            MetricKind::Cosine => 1,
            MetricKind::ChiSquare => 2,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(MetricKind::SquaredEuclidean),
            1 => Some(MetricKind::Cosine),
            2 => Some(MetricKind::ChiSquare),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::SquaredEuclidean => "l2",
            MetricKind::Cosine => "cosine",
            MetricKind::ChiSquare => "chi2",
        }
    }
}

impl std::str::FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l2" => Ok(MetricKind::SquaredEuclidean),
            "cosine" => Ok(MetricKind::Cosine),
            "chi2" => Ok(MetricKind::ChiSquare),
            other => Err(Error::usage(format!(
                "unknown metric {other:?}; expected l2, cosine, or chi2"
            ))),
        }
    }
}

impl std::fmt::Display for MetricKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}
