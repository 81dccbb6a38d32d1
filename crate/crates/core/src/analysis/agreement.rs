use super::AnalysisError;
use crate::domain::{AnswerId, Dimension, LikertValue, RaterId, RatingRecord};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// Items × raters grid of numeric ratings; `None` is missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingMatrix {
    pub dimension: Option<Dimension>,
    pub items: Vec<AnswerId>,
    pub raters: Vec<RaterId>,
    pub cells: Vec<Vec<Option<f64>>>,
    /// Ratings given as "don't know", excluded from `cells`.
    pub dont_know: usize,
}

impl RatingMatrix {
    /// Builds a matrix from plain rows (items in order, raters by column).
    pub fn from_rows(rows: Vec<Vec<Option<f64>>>) -> Self {
        let width = rows.iter().map(Vec::len).max().unwrap_or(0);
        RatingMatrix {
            dimension: None,
            items: (0..rows.len()).map(|i| AnswerId(format!("item{i}"))).collect(),
            raters: (0..width).map(|j| RaterId(format!("rater{j}"))).collect(),
            cells: rows
                .into_iter()
                .map(|mut r| {
                    r.resize(width, None);
                    r
                })
                .collect(),
            dont_know: 0,
        }
    }

    fn grid<F>(records: &[RatingRecord], dimension: Dimension, mut value: F) -> Self
    where
        F: FnMut(&crate::domain::DimensionRating, &mut usize) -> Option<f64>,
    {
        let mut items = BTreeSet::new();
        let mut raters = BTreeSet::new();
        let mut values = BTreeMap::new();
        let mut dont_know = 0;
        for record in records {
            if let Some(rating) = record.rating(dimension) {
                items.insert(record.answer_id.clone());
                raters.insert(record.rater_id.clone());
                if let Some(v) = value(rating, &mut dont_know) {
                    values.insert((record.answer_id.clone(), record.rater_id.clone()), v);
                }
            }
        }
        let items: Vec<AnswerId> = items.into_iter().collect();
        let raters: Vec<RaterId> = raters.into_iter().collect();
        let cells = items
            .iter()
            .map(|i| raters.iter().map(|r| values.get(&(i.clone(), r.clone())).copied()).collect())
            .collect();
        RatingMatrix { dimension: Some(dimension), items, raters, cells, dont_know }
    }

    /// Likert scores for one dimension; "don't know" is missing and counted.
    pub fn likert(records: &[RatingRecord], dimension: Dimension) -> Self {
        Self::grid(records, dimension, |r, dk| match r.score {
            LikertValue::Score(s) => Some(s.get() as f64),
            LikertValue::DontKnow => {
                *dk += 1;
                None
            }
        })
    }

    /// 1.0 where the rater selected `issue`, 0.0 where they rated the
    /// dimension without selecting it.
    pub fn issue_selection(records: &[RatingRecord], dimension: Dimension, issue: &str) -> Self {
        Self::grid(records, dimension, |r, _| Some(if r.issues.contains(issue) { 1.0 } else { 0.0 }))
    }

    pub fn value_count(&self) -> usize {
        self.cells.iter().flatten().filter(|v| v.is_some()).count()
    }
}

fn present(row: &[Option<f64>]) -> Vec<f64> {
    row.iter().flatten().copied().collect()
}

/// Mean absolute difference over every unordered pair of ratings that share
/// an item, pooled across items.
pub fn mean_pairwise_distance(matrix: &RatingMatrix) -> Result<f64, AnalysisError> {
    let mut total = 0.0;
    let mut pairs = 0usize;
    for row in &matrix.cells {
        let v = present(row);
        for i in 0..v.len() {
            for j in i + 1..v.len() {
                total += (v[i] - v[j]).abs();
                pairs += 1;
            }
        }
    }
    if pairs == 0 {
        return Err(AnalysisError::NoPairs);
    }
    Ok(total / pairs as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Nominal,
    Ordinal,
    Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementResult {
    /// `None` when expected disagreement is zero.
    pub alpha: Option<f64>,
    pub observed_disagreement: f64,
    pub expected_disagreement: f64,
    pub metric: Metric,
    /// Number of pairable values.
    pub n: usize,
}

/// Krippendorff's alpha from the coincidence matrix of pairable values
/// (items with at least two ratings).
pub fn krippendorff_alpha(matrix: &RatingMatrix, metric: Metric) -> Result<AgreementResult, AnalysisError> {
    if matrix.value_count() < 2 {
        return Err(AnalysisError::InsufficientData("fewer than two ratings".into()));
    }
    let units: Vec<Vec<f64>> = matrix.cells.iter().map(|r| present(r)).filter(|v| v.len() >= 2).collect();
    let mut values: Vec<f64> = units.iter().flatten().copied().collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    if values.is_empty() {
        return Err(AnalysisError::InsufficientData("no item has two ratings".into()));
    }
    let index = |x: f64| values.binary_search_by(|v| v.total_cmp(&x)).expect("value present");
    let k = values.len();

    let mut coincidence = vec![vec![0.0; k]; k];
    for unit in &units {
        let weight = 1.0 / (unit.len() - 1) as f64;
        for (i, &a) in unit.iter().enumerate() {
            for (j, &b) in unit.iter().enumerate() {
                if i != j {
                    coincidence[index(a)][index(b)] += weight;
                }
            }
        }
    }
    let marginals: Vec<f64> = coincidence.iter().map(|row| row.iter().sum()).collect();
    let n: f64 = marginals.iter().sum();

    let delta = |c: usize, k: usize| -> f64 {
        match metric {
            Metric::Nominal => {
                if c == k {
                    0.0
                } else {
                    1.0
                }
            }
            Metric::Interval => (values[c] - values[k]).powi(2),
            Metric::Ordinal => {
                let (lo, hi) = if c <= k { (c, k) } else { (k, c) };
                let between: f64 = marginals[lo..=hi].iter().sum();
                (between - (marginals[lo] + marginals[hi]) / 2.0).powi(2)
            }
        }
    };

    let mut observed = 0.0;
    let mut expected = 0.0;
    for c in 0..k {
        for j in 0..k {
            let d = delta(c, j);
            observed += coincidence[c][j] * d;
            expected += marginals[c] * marginals[j] * d;
        }
    }
    let observed = observed / n;
    let expected = expected / (n * (n - 1.0));
    let alpha = (expected > 0.0).then(|| 1.0 - observed / expected);
    Ok(AgreementResult {
        alpha,
        observed_disagreement: observed,
        expected_disagreement: expected,
        metric,
        n: n.round() as usize,
    })
}
