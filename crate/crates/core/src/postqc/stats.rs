//! Cohen's kappa and one-way ANOVA.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::special::f_upper_tail;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("rating lists are empty")]
    Empty,
    #[error("rating lists differ in length ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },
    #[error("rating at position {index} is {value}, expected 0 or 1")]
    NonBinary { index: usize, value: u8 },
    #[error("both raters used a single identical label but disagree somewhere; kappa is undefined")]
    DegenerateMarginals,
    #[error("invalid ANOVA design: {0}")]
    InvalidDesign(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaResult {
    pub kappa: f64,
    pub p_o: f64,
    pub p_e: f64,
}

pub fn cohens_kappa(r1: &[u8], r2: &[u8]) -> Result<KappaResult, StatsError> {
    if r1.len() != r2.len() {
        return Err(StatsError::LengthMismatch {
            left: r1.len(),
            right: r2.len(),
        });
    }
    if r1.is_empty() {
        return Err(StatsError::Empty);
    }
    for (index, &value) in r1.iter().chain(r2).enumerate() {
        if value > 1 {
            return Err(StatsError::NonBinary {
                index: index % r1.len(),
                value,
            });
        }
    }

    let n = r1.len() as f64;
    let agree = r1.iter().zip(r2).filter(|(a, b)| a == b).count();
    let ones1 = r1.iter().filter(|&&v| v == 1).count() as f64;
    let ones2 = r2.iter().filter(|&&v| v == 1).count() as f64;

    let p_o = agree as f64 / n;
    let p_e = (ones1 * ones2 + (n - ones1) * (n - ones2)) / (n * n);
    if agree == r1.len() {
        return Ok(KappaResult { kappa: 1.0, p_o, p_e });
    }
    if p_e == 1.0 {
        return Err(StatsError::DegenerateMarginals);
    }
    Ok(KappaResult {
        kappa: (p_o - p_e) / (1.0 - p_e),
        p_o,
        p_e,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    pub f: f64,
    pub df_between: usize,
    pub df_within: usize,
    pub p: f64,
    pub ss_between: f64,
    pub ss_within: f64,
}

/// One-way ANOVA over `groups`.
///
/// With zero within-group variation F is `+inf` (p = 0) when the group means
/// differ and 0 (p = 1) when every observation is equal.
pub fn anova_oneway(groups: &[Vec<f64>]) -> Result<AnovaResult, StatsError> {
    let k = groups.len();
    if k < 2 {
        return Err(StatsError::InvalidDesign(format!("need at least 2 groups, got {k}")));
    }
    if let Some(i) = groups.iter().position(Vec::is_empty) {
        return Err(StatsError::InvalidDesign(format!("group {i} is empty")));
    }
    if groups.iter().flatten().any(|x| !x.is_finite()) {
        return Err(StatsError::InvalidDesign("observations must be finite".into()));
    }
    let n: usize = groups.iter().map(Vec::len).sum();
    if n <= k {
        return Err(StatsError::InvalidDesign(format!(
            "{n} observations leave no within-group degrees of freedom for {k} groups"
        )));
    }

    let grand = groups.iter().flatten().sum::<f64>() / n as f64;
    let mut ssb = 0.0;
    let mut ssw = 0.0;
    for g in groups {
        let mean = g.iter().sum::<f64>() / g.len() as f64;
        ssb += g.len() as f64 * (mean - grand).powi(2);
        ssw += g.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
    }
    // Sums of squares that are zero in exact arithmetic can come out as
    // rounding residue of order eps² · N · max².
    let scale = groups
        .iter()
        .flatten()
        .map(|x| x.abs())
        .fold(0.0f64, f64::max)
        .powi(2)
        * n as f64;
    let floor = scale * 1e-24;
    if ssb <= floor {
        ssb = 0.0;
    }
    if ssw <= floor {
        ssw = 0.0;
    }

    let df_between = k - 1;
    let df_within = n - k;
    let f = match (ssb == 0.0, ssw == 0.0) {
        (true, _) => 0.0,
        (false, true) => f64::INFINITY,
        (false, false) => (ssb / df_between as f64) / (ssw / df_within as f64),
    };
    Ok(AnovaResult {
        f,
        df_between,
        df_within,
        p: f_upper_tail(f, df_between as f64, df_within as f64),
        ss_between: ssb,
        ss_within: ssw,
    })
}
