//! Inferential statistics for small experiment grids.
//!
//! All p-values are two-sided. Sample standard deviations use `n - 1`.

mod distribution;
mod permutation;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use distribution::{ln_gamma, regularized_beta, student_t_two_sided};
pub use permutation::{
    exact_permutation_corr, CorrKind, PermutationConfig, DEFAULT_MAX_EXACT_N, DEFAULT_MC_DRAWS,
    DEFAULT_RNG_SEED, PERMUTATION_TIE_TOLERANCE,
};

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("need at least {needed} observations, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("samples have different lengths: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("zero variance: {0}")]
    ZeroVariance(&'static str),
    #[error("mean is zero, coefficient of variation undefined")]
    ZeroMean,
    #[error("non-finite observation")]
    NonFinite,
    #[error("p-value {value} at position {index} is outside [0, 1]")]
    InvalidPValue { index: usize, value: f64 },
    #[error("{0} p-values but {1} labels")]
    LabelMismatch(usize, usize),
}

pub type Result<T, E = StatsError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    WelchT,
    PairedT,
    Pearson,
    Spearman,
    PermPearson,
    PermSpearman,
    Cv,
}

impl TestKind {
    /// Row label in rendered tables.
    pub fn display_name(self) -> &'static str {
        match self {
            TestKind::WelchT => "Welch t-test",
            TestKind::PairedT => "Paired per-layer t-test",
            TestKind::Pearson => "Pearson r",
            TestKind::Spearman => "Spearman rho",
            TestKind::PermPearson => "Exact permutation Pearson r",
            TestKind::PermSpearman => "Exact permutation Spearman rho",
            TestKind::Cv => "Coefficient of variation",
        }
    }

    pub fn latex_name(self) -> &'static str {
        match self {
            TestKind::WelchT => "Welch $t$-test",
            TestKind::PairedT => "Paired per-layer t-test",
            TestKind::Pearson => "Pearson $r$",
            TestKind::Spearman => "Spearman $\\rho$",
            TestKind::PermPearson => "Exact permutation Pearson $r$",
            TestKind::PermSpearman => "Exact permutation Spearman $\\rho$",
            TestKind::Cv => "Coefficient of variation",
        }
    }
}

/// Outcome of one test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatResult {
    pub test: TestKind,
    pub statistic: f64,
    pub p_value: Option<f64>,
    pub df: Option<f64>,
    pub effect_size: Option<f64>,
    pub n: Vec<usize>,
    /// True when a permutation p-value enumerated every permutation.
    pub exact: bool,
}

fn check_finite(xs: &[f64]) -> Result<()> {
    if xs.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    Ok(())
}

fn require_len(xs: &[f64], needed: usize) -> Result<()> {
    if xs.len() < needed {
        return Err(StatsError::TooFewSamples {
            needed,
            got: xs.len(),
        });
    }
    check_finite(xs)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance (`n - 1` denominator), two-pass.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn sample_std(xs: &[f64]) -> f64 {
    sample_variance(xs).sqrt()
}

pub fn welch_t(a: &[f64], b: &[f64]) -> Result<StatResult> {
    require_len(a, 2)?;
    require_len(b, 2)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (sample_variance(a), sample_variance(b));
    if va == 0.0 && vb == 0.0 {
        return Err(StatsError::ZeroVariance("both samples are constant"));
    }
    let (sa, sb) = (va / na, vb / nb);
    let se2 = sa + sb;
    let t = (mean(a) - mean(b)) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    Ok(StatResult {
        test: TestKind::WelchT,
        statistic: t,
        p_value: Some(student_t_two_sided(t, df)),
        df: Some(df),
        effect_size: Some(cohens_d(a, b)?),
        n: vec![a.len(), b.len()],
        exact: false,
    })
}

/// `(mean a - mean b)` over the pooled sample standard deviation.
pub fn cohens_d(a: &[f64], b: &[f64]) -> Result<f64> {
    require_len(a, 2)?;
    require_len(b, 2)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let pooled =
        ((na - 1.0) * sample_variance(a) + (nb - 1.0) * sample_variance(b)) / (na + nb - 2.0);
    if pooled == 0.0 {
        return Err(StatsError::ZeroVariance("pooled variance is zero"));
    }
    Ok((mean(a) - mean(b)) / pooled.sqrt())
}

/// One-sample t-test of the pairwise differences `a - b` against zero.
pub fn paired_t(a: &[f64], b: &[f64]) -> Result<StatResult> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    require_len(a, 2)?;
    require_len(b, 2)?;
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let var = sample_variance(&diffs);
    if var == 0.0 {
        return Err(StatsError::ZeroVariance("paired differences are constant"));
    }
    let n = diffs.len() as f64;
    let t = mean(&diffs) / (var / n).sqrt();
    let df = n - 1.0;
    Ok(StatResult {
        test: TestKind::PairedT,
        statistic: t,
        p_value: Some(student_t_two_sided(t, df)),
        df: Some(df),
        effect_size: None,
        n: vec![diffs.len()],
        exact: false,
    })
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    require_len(x, 3)?;
    require_len(y, 3)
}

/// Centered copy and its sum of squares.
fn centered(xs: &[f64]) -> (Vec<f64>, f64) {
    let m = mean(xs);
    let c: Vec<f64> = xs.iter().map(|x| x - m).collect();
    let ss = c.iter().map(|v| v * v).sum::<f64>();
    (c, ss)
}

fn product_moment(x: &[f64], y: &[f64]) -> Result<f64> {
    let (xc, sx) = centered(x);
    let (yc, sy) = centered(y);
    if sx == 0.0 || sy == 0.0 {
        return Err(StatsError::ZeroVariance("correlation input is constant"));
    }
    let dot: f64 = xc.iter().zip(&yc).map(|(a, b)| a * b).sum();
    Ok((dot / (sx * sy).sqrt()).clamp(-1.0, 1.0))
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    product_moment(x, y)
}

/// Average ranks (1-based); ties share the mean of their positions.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
    let mut ranks = vec![0.0; xs.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && xs[order[end]] == xs[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = rank;
        }
        start = end;
    }
    ranks
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    product_moment(&average_ranks(x), &average_ranks(y))
}

fn correlation_p(r: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    if r.abs() >= 1.0 {
        return 0.0;
    }
    student_t_two_sided(r * (df / (1.0 - r * r)).sqrt(), df)
}

/// Pearson r with the usual t-approximation p-value (`n - 2` df).
pub fn pearson_test(x: &[f64], y: &[f64]) -> Result<StatResult> {
    let r = pearson(x, y)?;
    Ok(StatResult {
        test: TestKind::Pearson,
        statistic: r,
        p_value: Some(correlation_p(r, x.len())),
        df: Some((x.len() - 2) as f64),
        effect_size: None,
        n: vec![x.len()],
        exact: false,
    })
}

/// Spearman rho with the t-approximation p-value.
pub fn spearman_test(x: &[f64], y: &[f64]) -> Result<StatResult> {
    let r = spearman(x, y)?;
    Ok(StatResult {
        test: TestKind::Spearman,
        statistic: r,
        p_value: Some(correlation_p(r, x.len())),
        df: Some((x.len() - 2) as f64),
        effect_size: None,
        n: vec![x.len()],
        exact: false,
    })
}

/// Holm step-down adjustment, returned in input order.
pub fn holm_adjust(p_values: &[f64]) -> Result<Vec<f64>> {
    for (index, &value) in p_values.iter().enumerate() {
        if !(0.0..=1.0).contains(&value) {
            return Err(StatsError::InvalidPValue { index, value });
        }
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| p_values[i].total_cmp(&p_values[j]));
    let mut adjusted = vec![0.0; m];
    let mut running = 0.0f64;
    for (rank, &idx) in order.iter().enumerate() {
        let scaled = ((m - rank) as f64 * p_values[idx]).min(1.0);
        running = running.max(scaled);
        adjusted[idx] = running;
    }
    Ok(adjusted)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolmAdjusted {
    pub label: String,
    pub p_value: f64,
    pub adjusted: f64,
}

pub fn holm_bonferroni(p_values: &[f64], labels: &[String]) -> Result<Vec<HolmAdjusted>> {
    if p_values.len() != labels.len() {
        return Err(StatsError::LabelMismatch(p_values.len(), labels.len()));
    }
    let adjusted = holm_adjust(p_values)?;
    Ok(labels
        .iter()
        .zip(p_values)
        .zip(adjusted)
        .map(|((label, &p_value), adjusted)| HolmAdjusted {
            label: label.clone(),
            p_value,
            adjusted,
        })
        .collect())
}

/// Sample standard deviation over the mean.
pub fn coefficient_of_variation(xs: &[f64]) -> Result<f64> {
    require_len(xs, 2)?;
    let m = mean(xs);
    if m == 0.0 {
        return Err(StatsError::ZeroMean);
    }
    Ok(sample_std(xs) / m)
}

pub fn cv_result(xs: &[f64]) -> Result<StatResult> {
    Ok(StatResult {
        test: TestKind::Cv,
        statistic: coefficient_of_variation(xs)?,
        p_value: None,
        df: None,
        effect_size: None,
        n: vec![xs.len()],
        exact: false,
    })
}
