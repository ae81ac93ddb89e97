use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{BenchError, TransitionRecord};
use crate::numeric::student_t_two_sided;

fn check<T: Ord>(ranked: &[T], k: usize) -> Result<(), BenchError> {
    if k == 0 {
        return Err(BenchError::ConfigInvalid("k must be at least 1".into()));
    }
    let mut seen = BTreeSet::new();
    if ranked.iter().any(|id| !seen.insert(id)) {
        return Err(BenchError::InvalidRanking);
    }
    Ok(())
}

/// 1 when any relevant id is in the top `k`.
pub fn hit_at_k<T: Ord>(ranked: &[T], relevant: &BTreeSet<T>, k: usize) -> Result<f64, BenchError> {
    check(ranked, k)?;
    Ok(if ranked.iter().take(k).any(|id| relevant.contains(id)) {
        1.0
    } else {
        0.0
    })
}

/// Binary-gain NDCG with a `log2(i + 1)` discount.
pub fn ndcg_at_k<T: Ord>(ranked: &[T], relevant: &BTreeSet<T>, k: usize) -> Result<f64, BenchError> {
    check(ranked, k)?;
    if relevant.is_empty() {
        return Ok(0.0);
    }
    let discount = |i: usize| 1.0 / ((i + 1) as f64).log2();
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, id)| relevant.contains(id))
        .map(|(i, _)| discount(i + 1))
        .sum();
    let idcg: f64 = (1..=relevant.len().min(k)).map(discount).sum();
    Ok(dcg / idcg)
}

/// Average precision over the top `k`, normalized by `min(|relevant|, k)`.
pub fn map_at_k<T: Ord>(ranked: &[T], relevant: &BTreeSet<T>, k: usize) -> Result<f64, BenchError> {
    check(ranked, k)?;
    if relevant.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, id) in ranked.iter().take(k).enumerate() {
        if relevant.contains(id) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Ok(sum / relevant.len().min(k) as f64)
}

/// Percentage of users whose prediction matches a target in their records.
/// Every predicted user needs at least one record.
pub fn hit_real_transitions(
    predictions: &BTreeMap<String, String>,
    records: &[TransitionRecord],
) -> Result<f64, BenchError> {
    let mut actual: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for r in records {
        actual.entry(r.user.as_str()).or_default().insert(r.to.as_str());
    }
    if predictions.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    for (user, predicted) in predictions {
        let targets = actual
            .get(user.as_str())
            .ok_or_else(|| BenchError::MissingGroundTruth(user.clone()))?;
        if targets.contains(predicted.as_str()) {
            hits += 1;
        }
    }
    Ok(100.0 * hits as f64 / predictions.len() as f64)
}

/// Transition counts per source title.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyModel {
    counts: BTreeMap<String, BTreeMap<String, usize>>,
}

impl FrequencyModel {
    pub fn fit(training: &[TransitionRecord]) -> Self {
        let mut counts: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
        for r in training {
            *counts
                .entry(r.from.clone())
                .or_default()
                .entry(r.to.clone())
                .or_default() += 1;
        }
        FrequencyModel { counts }
    }

    /// Number of training records leaving `title`.
    pub fn support(&self, title: &str) -> usize {
        self.counts.get(title).map_or(0, |c| c.values().sum())
    }

    /// Most frequent target; ties go to the smallest id.
    pub fn predict(&self, title: &str) -> Result<&str, BenchError> {
        let targets = self
            .counts
            .get(title)
            .ok_or_else(|| BenchError::NoTrainingData(title.to_string()))?;
        targets
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
            .map(|(t, _)| t.as_str())
            .ok_or_else(|| BenchError::NoTrainingData(title.to_string()))
    }
}

/// Most frequent next title after `current` in the training records.
pub fn frequency_baseline(training: &[TransitionRecord], current: &str) -> Result<String, BenchError> {
    FrequencyModel::fit(training).predict(current).map(str::to_string)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Welch's unequal-variance two-sample t-test, two-sided.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<TTestResult, BenchError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(BenchError::InsufficientSamples(a.len().min(b.len())));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (sa, sb) = (va / na, vb / nb);
    let se2 = sa + sb;
    if se2 == 0.0 {
        let df = na + nb - 2.0;
        return Ok(if ma == mb {
            TTestResult { t: 0.0, df, p: 1.0 }
        } else {
            TTestResult {
                t: if ma > mb { f64::INFINITY } else { f64::NEG_INFINITY },
                df,
                p: 0.0,
            }
        });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    Ok(TTestResult {
        t,
        df,
        p: student_t_two_sided(t, df),
    })
}

/// Mean and nearest-rank percentiles of a sample.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub p50: f64,
    pub p95: f64,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Summary {
        if xs.is_empty() {
            return Summary::default();
        }
        let mut v = xs.to_vec();
        v.sort_by(f64::total_cmp);
        let rank = |q: f64| v[((q * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1];
        Summary {
            n: v.len(),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            p50: rank(0.5),
            p95: rank(0.95),
        }
    }
}
