//! Two-sided Mann-Whitney U test and per-feature group comparison.
//!
//! Ranks use midranks for ties. The exact p-value comes from the permutation
//! distribution of the first sample's rank sum, computed by counting subsets
//! over doubled (hence integral) midranks, so it stays exact with ties. The
//! normal approximation uses the tie-corrected variance and a continuity
//! correction of 0.5.

use serde::Serialize;
use statrs::function::erf::erfc;
use thiserror::Error;

pub const DEFAULT_ALPHA: f64 = 0.05;

/// Largest pooled sample size the exact path accepts.
pub const MAX_EXACT_N: usize = 120;

/// Largest pooled sample size for which `Method::Auto` picks the exact path.
pub const AUTO_EXACT_N: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    /// Exact when `n1 + n2 <= 20` and there are no ties, otherwise normal.
    #[default]
    Auto,
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodUsed {
    Exact,
    NormalApprox,
}

impl MethodUsed {
    pub fn as_str(&self) -> &'static str {
        match self {
            MethodUsed::Exact => "exact",
            MethodUsed::NormalApprox => "normal_approx",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestResult {
    /// U of the first sample.
    pub u_statistic: f64,
    pub n1: usize,
    pub n2: usize,
    pub p_value: f64,
    pub method: MethodUsed,
    pub alpha: f64,
    /// All observations identical: no information, p reported as 1.
    pub degenerate: bool,
}

impl TestResult {
    pub fn significant(&self) -> bool {
        !self.degenerate && self.p_value <= self.alpha
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("both samples must be non-empty (got n1 = {n1}, n2 = {n2})")]
    EmptySample { n1: usize, n2: usize },
    #[error("samples must not contain NaN or infinite values")]
    NonFinite,
    #[error("exact test supports at most {MAX_EXACT_N} pooled observations, got {0}")]
    TooLargeForExact(usize),
}

pub fn mann_whitney_u(a: &[f64], b: &[f64], method: Method) -> Result<TestResult, StatsError> {
    mann_whitney_u_alpha(a, b, method, DEFAULT_ALPHA)
}

pub fn mann_whitney_u_alpha(
    a: &[f64],
    b: &[f64],
    method: Method,
    alpha: f64,
) -> Result<TestResult, StatsError> {
    let (n1, n2) = (a.len(), b.len());
    if n1 == 0 || n2 == 0 {
        return Err(StatsError::EmptySample { n1, n2 });
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let n = n1 + n2;

    let ranks = Ranks::compute(a, b);
    // U_a = R_a - n1 (n1 + 1) / 2, with R_a kept doubled to stay integral.
    let u_statistic = ranks.doubled_sum_a as f64 / 2.0 - (n1 * (n1 + 1)) as f64 / 2.0;

    let used = match method {
        Method::Exact => MethodUsed::Exact,
        Method::Normal => MethodUsed::NormalApprox,
        Method::Auto if n <= AUTO_EXACT_N && !ranks.has_ties() => MethodUsed::Exact,
        Method::Auto => MethodUsed::NormalApprox,
    };
    if used == MethodUsed::Exact && n > MAX_EXACT_N {
        return Err(StatsError::TooLargeForExact(n));
    }

    let degenerate = ranks.tie_sizes.len() == 1;
    let p_value = if degenerate {
        1.0
    } else {
        match used {
            MethodUsed::Exact => exact_p(&ranks, n1),
            MethodUsed::NormalApprox => normal_p(u_statistic, n1, n2, &ranks.tie_sizes),
        }
    };

    Ok(TestResult {
        u_statistic,
        n1,
        n2,
        p_value,
        method: used,
        alpha,
        degenerate,
    })
}

struct Ranks {
    /// Doubled midrank of every pooled observation.
    doubled: Vec<u64>,
    doubled_sum_a: u64,
    tie_sizes: Vec<usize>,
}

impl Ranks {
    fn compute(a: &[f64], b: &[f64]) -> Self {
        let mut pooled: Vec<(f64, bool)> = a
            .iter()
            .map(|&v| (v, true))
            .chain(b.iter().map(|&v| (v, false)))
            .collect();
        pooled.sort_by(|x, y| x.0.total_cmp(&y.0));

        let mut doubled = Vec::with_capacity(pooled.len());
        let mut doubled_sum_a = 0;
        let mut tie_sizes = Vec::new();
        let mut i = 0;
        while i < pooled.len() {
            let mut j = i + 1;
            while j < pooled.len() && pooled[j].0 == pooled[i].0 {
                j += 1;
            }
            // Ranks i+1..=j share the midrank (i + 1 + j) / 2.
            let mid2 = (i + 1 + j) as u64;
            for &(_, in_a) in &pooled[i..j] {
                doubled.push(mid2);
                if in_a {
                    doubled_sum_a += mid2;
                }
            }
            tie_sizes.push(j - i);
            i = j;
        }
        Self {
            doubled,
            doubled_sum_a,
            tie_sizes,
        }
    }

    fn has_ties(&self) -> bool {
        self.tie_sizes.iter().any(|&t| t > 1)
    }
}

/// Two-sided exact p: the share of all `C(n, n1)` relabelings whose rank sum
/// lies at least as far from its mean as the observed one.
fn exact_p(ranks: &Ranks, n1: usize) -> f64 {
    let n = ranks.doubled.len();
    let max_sum: usize = ranks.doubled.iter().map(|&r| r as usize).sum();
    // counts[k][s]: subsets of size k with doubled rank sum s.
    let mut counts = vec![vec![0u128; max_sum + 1]; n1 + 1];
    counts[0][0] = 1;
    for &r in &ranks.doubled {
        let r = r as usize;
        for k in (1..=n1).rev() {
            let (lower, upper) = counts.split_at_mut(k);
            let (src, dst) = (&lower[k - 1], &mut upper[0]);
            for s in (r..=max_sum).rev() {
                if src[s - r] != 0 {
                    dst[s] += src[s - r];
                }
            }
        }
    }
    // Mean of the doubled rank sum is n1 (n + 1); compare deviations doubled again.
    let mean2 = (n1 * (n + 1)) as i64;
    let observed = (ranks.doubled_sum_a as i64 - mean2).abs();
    let (mut extreme, mut total) = (0u128, 0u128);
    for (s, &c) in counts[n1].iter().enumerate() {
        total += c;
        if (s as i64 - mean2).abs() >= observed {
            extreme += c;
        }
    }
    (extreme as f64 / total as f64).min(1.0)
}

fn normal_p(u: f64, n1: usize, n2: usize, tie_sizes: &[usize]) -> f64 {
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let n = n1f + n2f;
    let tie_term: f64 = tie_sizes.iter().map(|&t| (t * t * t - t) as f64).sum();
    let variance = n1f * n2f / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if variance <= 0.0 {
        return 1.0;
    }
    let mean = n1f * n2f / 2.0;
    let z = ((u - mean).abs() - 0.5).max(0.0) / variance.sqrt();
    erfc(z / std::f64::consts::SQRT_2).min(1.0)
}

/// One feature to compare between two groups.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub feature: String,
    pub group_a: Vec<f64>,
    pub group_b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RowOutcome {
    Tested {
        feature: String,
        result: TestResult,
    },
    /// A side had no observations; mirrors a "-" table entry.
    Skipped {
        feature: String,
        n1: usize,
        n2: usize,
    },
    Failed {
        feature: String,
        error: StatsError,
    },
}

impl RowOutcome {
    pub fn feature(&self) -> &str {
        match self {
            RowOutcome::Tested { feature, .. }
            | RowOutcome::Skipped { feature, .. }
            | RowOutcome::Failed { feature, .. } => feature,
        }
    }
}

/// Tests every row; output order equals input order.
pub fn compare_groups(rows: &[FeatureRow], method: Method, alpha: f64) -> Vec<RowOutcome> {
    rows.iter()
        .map(|row| {
            let (n1, n2) = (row.group_a.len(), row.group_b.len());
            if n1 == 0 || n2 == 0 {
                return RowOutcome::Skipped {
                    feature: row.feature.clone(),
                    n1,
                    n2,
                };
            }
            match mann_whitney_u_alpha(&row.group_a, &row.group_b, method, alpha) {
                Ok(result) => RowOutcome::Tested {
                    feature: row.feature.clone(),
                    result,
                },
                Err(error) => RowOutcome::Failed {
                    feature: row.feature.clone(),
                    error,
                },
            }
        })
        .collect()
}

/// Renders outcomes as `feature,U,n1,n2,p,method,significant`.
pub fn outcomes_to_csv(outcomes: &[RowOutcome]) -> String {
    let mut out = String::from("feature,U,n1,n2,p,method,significant\n");
    for o in outcomes {
        let line = match o {
            RowOutcome::Tested { feature, result } => format!(
                "{},{:.2},{},{},{:.4},{},{}",
                csv_field(feature),
                result.u_statistic,
                result.n1,
                result.n2,
                result.p_value,
                result.method.as_str(),
                result.significant()
            ),
            RowOutcome::Skipped { feature, n1, n2 } => {
                format!("{},-,{n1},{n2},-,skipped,false", csv_field(feature))
            }
            RowOutcome::Failed { feature, .. } => {
                format!("{},-,-,-,-,failed,false", csv_field(feature))
            }
        };
        out.push_str(&line);
        out.push('\n');
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
