use super::AnalysisError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use std::fmt;

pub const DEFAULT_RESAMPLES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanCi {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn sample_variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64
}

/// Linear-interpolation quantile of sorted data (the "type 7" rule).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Percentile bootstrap of the mean; the 95% interval comes from the 2.5 and
/// 97.5 percentiles of `resamples` seeded resample means.
pub fn bootstrap_mean_ci(values: &[f64], resamples: usize, seed: u64) -> Result<MeanCi, AnalysisError> {
    if values.is_empty() {
        return Err(AnalysisError::EmptyInput("bootstrap needs at least one value".into()));
    }
    if resamples == 0 {
        return Err(AnalysisError::InsufficientData("zero resamples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = values.len();
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    Ok(MeanCi { mean: mean(values), lo: quantile(&means, 0.025), hi: quantile(&means, 0.975) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Symbol {
    #[serde(rename = "--")]
    MuchWorse,
    #[serde(rename = "-")]
    Worse,
    #[serde(rename = "~")]
    Same,
    #[serde(rename = "+")]
    Better,
    #[serde(rename = "++")]
    MuchBetter,
}

impl Symbol {
    /// Pure mapping from a p-value and the sign of mean(row) − mean(col).
    pub fn from_test(p_value: f64, mean_diff: f64) -> Symbol {
        let up = mean_diff > 0.0;
        if mean_diff == 0.0 || p_value >= 0.05 {
            Symbol::Same
        } else if p_value < 0.01 {
            if up {
                Symbol::MuchBetter
            } else {
                Symbol::MuchWorse
            }
        } else if up {
            Symbol::Better
        } else {
            Symbol::Worse
        }
    }

    pub fn ascii(self) -> &'static str {
        match self {
            Symbol::MuchWorse => "--",
            Symbol::Worse => "-",
            Symbol::Same => "~",
            Symbol::Better => "+",
            Symbol::MuchBetter => "++",
        }
    }

    pub fn glyph(self) -> &'static str {
        match self {
            Symbol::MuchWorse => "\u{2212}\u{2212}",
            Symbol::Worse => "\u{2212}",
            Symbol::Same => "\u{223c}",
            Symbol::Better => "+",
            Symbol::MuchBetter => "++",
        }
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.glyph())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceCell {
    pub symbol: Symbol,
    pub p_value: f64,
    pub mean_diff: f64,
    /// Set when both samples had zero variance and the p-value was defined
    /// rather than computed.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
    pub mean_diff: f64,
    pub degenerate: bool,
}

/// Two-sided Welch t-test of `a` against `b`.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchResult, AnalysisError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(AnalysisError::InsufficientData("each sample needs at least two values".into()));
    }
    let mean_diff = mean(a) - mean(b);
    let va = sample_variance(a) / a.len() as f64;
    let vb = sample_variance(b) / b.len() as f64;
    let se2 = va + vb;
    if se2 == 0.0 {
        let p_value = if mean_diff == 0.0 { 1.0 } else { 0.0 };
        let t = if mean_diff == 0.0 { 0.0 } else { mean_diff.signum() * f64::INFINITY };
        return Ok(WelchResult { t, df: f64::NAN, p_value, mean_diff, degenerate: true });
    }
    let t = mean_diff / se2.sqrt();
    let df = se2.powi(2)
        / (va.powi(2) / (a.len() - 1) as f64 + vb.powi(2) / (b.len() - 1) as f64);
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| AnalysisError::InsufficientData(e.to_string()))?;
    let p_value = (2.0 * (1.0 - dist.cdf(t.abs()))).min(1.0);
    Ok(WelchResult { t, df, p_value, mean_diff, degenerate: false })
}

/// Square matrix over `samples` (row vs column); the diagonal is `None`.
pub type SignificanceMatrix = Vec<Vec<Option<SignificanceCell>>>;

pub fn welch_matrix(samples: &[Vec<f64>]) -> Result<(SignificanceMatrix, Vec<String>), AnalysisError> {
    if samples.len() < 2 {
        return Err(AnalysisError::InsufficientData("need at least two systems".into()));
    }
    let mut warnings = Vec::new();
    let mut matrix = vec![vec![None; samples.len()]; samples.len()];
    for (i, row) in samples.iter().enumerate() {
        for (j, col) in samples.iter().enumerate() {
            if i == j {
                continue;
            }
            let r = welch_t_test(row, col)?;
            if r.degenerate && r.mean_diff != 0.0 && i < j {
                warnings.push(format!(
                    "{}: systems {i} and {j} both have zero variance with different means; p taken as 0",
                    AnalysisError::DegenerateSample(String::new()).code()
                ));
            }
            matrix[i][j] = Some(SignificanceCell {
                symbol: Symbol::from_test(r.p_value, r.mean_diff),
                p_value: r.p_value,
                mean_diff: r.mean_diff,
                degenerate: r.degenerate,
            });
        }
    }
    Ok((matrix, warnings))
}

/// Ranks starting at 1, ties given their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
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

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub rho: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Spearman rank correlation with a two-sided p-value from the t
/// approximation with n − 2 degrees of freedom.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Correlation, AnalysisError> {
    if x.len() != y.len() {
        return Err(AnalysisError::LengthMismatch { left: x.len(), right: y.len() });
    }
    let n = x.len();
    if n < 3 {
        return Err(AnalysisError::InsufficientData("spearman needs at least three pairs".into()));
    }
    let rho = pearson(&average_ranks(x), &average_ranks(y))
        .ok_or_else(|| AnalysisError::InsufficientData("one variable is constant".into()))?
        .clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p_value = if rho.abs() >= 1.0 {
        0.0
    } else {
        let t = rho * (df / (1.0 - rho * rho)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| AnalysisError::InsufficientData(e.to_string()))?;
        (2.0 * (1.0 - dist.cdf(t.abs()))).min(1.0)
    };
    Ok(Correlation { rho, p_value, n })
}
