use std::fmt::Display;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Result, TuningError};
use crate::numeric::{back_sub, cholesky, forward_sub, normal_cdf, normal_pdf};
use crate::par::{self, Mode};
use crate::tools::ScoringWeights;

const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
const RANDOM_CANDIDATES: usize = 1000;
const LOCAL_CANDIDATES: usize = 32;
const LOCAL_RADIUS: f64 = 0.05;
const LENGTHSCALES: [f64; 8] = [0.05, 0.08, 0.12, 0.18, 0.25, 0.35, 0.5, 0.75];
const XI: f64 = 0.01;

/// Closed bounds per parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSpace {
    pub names: Vec<String>,
    pub bounds: Vec<(f64, f64)>,
}

impl ParamSpace {
    pub fn new(params: impl IntoIterator<Item = (impl Into<String>, f64, f64)>) -> Result<Self> {
        let (names, bounds): (Vec<String>, Vec<(f64, f64)>) =
            params.into_iter().map(|(n, lo, hi)| (n.into(), (lo, hi))).unzip();
        if names.is_empty() {
            return Err(TuningError::InvalidSpace("no parameters".into()));
        }
        if names.len() > PRIMES.len() {
            return Err(TuningError::InvalidSpace(format!(
                "at most {} parameters",
                PRIMES.len()
            )));
        }
        for (n, (lo, hi)) in names.iter().zip(&bounds) {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(TuningError::InvalidSpace(format!("`{n}` has bounds [{lo}, {hi}]")));
            }
        }
        Ok(ParamSpace { names, bounds })
    }

    /// Every [`ScoringWeights`] field, in vector order.
    pub fn scoring() -> Self {
        let hi = [1.0, 1.0, 1.0, 1.0, 3.0, 3.0];
        Self::new(ScoringWeights::NAMES.iter().zip(hi).map(|(n, h)| (*n, 0.0, h))).expect("static bounds are valid")
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    fn denormalize(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(&self.bounds)
            .map(|(u, (lo, hi))| (lo + u * (hi - lo)).clamp(*lo, *hi))
            .collect()
    }

    fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.bounds)
            .map(|(x, (lo, hi))| if hi > lo { (x - lo) / (hi - lo) } else { 0.0 })
            .collect()
    }
}

/// One evaluation. `value` is `None` when the objective failed or returned a
/// non-finite number.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: usize,
    pub params: Vec<f64>,
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub best: Vec<f64>,
    pub best_value: f64,
    pub trials: Vec<TrialRecord>,
}

impl Optimum {
    fn from_trials(trials: Vec<TrialRecord>) -> Result<Self> {
        let (best, best_value) = trials
            .iter()
            .filter_map(|t| t.value.map(|v| (t, v)))
            .fold(None, |acc: Option<(&TrialRecord, f64)>, (t, v)| match acc {
                Some((_, bv)) if bv >= v => acc,
                _ => Some((t, v)),
            })
            .map(|(t, v)| (t.params.clone(), v))
            .ok_or(TuningError::AllTrialsFailed)?;
        Ok(Optimum {
            best,
            best_value,
            trials,
        })
    }

    /// Best value seen after each trial; failed trials carry the previous
    /// maximum (negative infinity before the first success).
    pub fn running_max(&self) -> Vec<f64> {
        self.trials
            .iter()
            .scan(f64::NEG_INFINITY, |m, t| {
                if let Some(v) = t.value {
                    *m = m.max(v);
                }
                Some(*m)
            })
            .collect()
    }
}

fn evaluate<F, E>(objective: &F, index: usize, params: Vec<f64>) -> TrialRecord
where
    F: Fn(&[f64]) -> Result<f64, E>,
    E: Display,
{
    let (value, error) = match objective(&params) {
        Ok(v) if v.is_finite() => (Some(v), None),
        Ok(v) => (None, Some(format!("non-finite objective {v}"))),
        Err(e) => (None, Some(e.to_string())),
    };
    TrialRecord {
        index,
        params,
        value,
        error,
    }
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += (i % base) as f64 * f;
        i /= base;
        f *= inv;
    }
    r
}

/// Point `i` of a Halton sequence under a random toroidal shift.
fn halton(i: usize, shift: &[f64]) -> Vec<f64> {
    shift
        .iter()
        .zip(PRIMES)
        .map(|(s, p)| (radical_inverse(i as u64 + 1, p) + s).fract())
        .collect()
}

/// Maximizes `objective` over `space`. The first `max(5, budget / 4)` trials
/// are shifted Halton points; each later trial maximizes expected
/// improvement under a Gaussian-process surrogate refitted to every
/// successful trial so far.
pub fn optimize<F, E>(objective: &F, space: &ParamSpace, budget: usize, seed: u64) -> Result<Optimum>
where
    F: Fn(&[f64]) -> Result<f64, E> + Sync,
    E: Display,
{
    optimize_in(Mode::default(), objective, space, budget, seed)
}

/// [`optimize`] with an explicit mode for the initial design evaluations.
pub fn optimize_in<F, E>(mode: Mode, objective: &F, space: &ParamSpace, budget: usize, seed: u64) -> Result<Optimum>
where
    F: Fn(&[f64]) -> Result<f64, E> + Sync,
    E: Display,
{
    if budget == 0 {
        return Err(TuningError::InvalidArgument("budget must be positive".into()));
    }
    let d = space.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
    let n_init = (budget / 4).max(5).min(budget);
    let init: Vec<Vec<f64>> = (0..n_init).map(|i| space.denormalize(&halton(i, &shift))).collect();
    let mut trials = par::map_range(mode, n_init, |i| evaluate(objective, i, init[i].clone()));

    for index in n_init..budget {
        let observed: Vec<(Vec<f64>, f64)> = trials
            .iter()
            .filter_map(|t| t.value.map(|v| (space.normalize(&t.params), v)))
            .collect();
        let u = match Surrogate::fit(&observed) {
            Some(gp) => propose(&gp, &observed, d, &mut rng),
            None => (0..d).map(|_| rng.random::<f64>()).collect(),
        };
        trials.push(evaluate(objective, index, space.denormalize(&u)));
    }
    Optimum::from_trials(trials)
}

/// Uniform random sampling with the same budget.
pub fn random_search<F, E>(objective: &F, space: &ParamSpace, budget: usize, seed: u64) -> Result<Optimum>
where
    F: Fn(&[f64]) -> Result<f64, E>,
    E: Display,
{
    if budget == 0 {
        return Err(TuningError::InvalidArgument("budget must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x005e_ed0f_7a4d_0001);
    let trials = (0..budget)
        .map(|i| {
            let u: Vec<f64> = (0..space.dim()).map(|_| rng.random::<f64>()).collect();
            evaluate(objective, i, space.denormalize(&u))
        })
        .collect();
    Optimum::from_trials(trials)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub seeds: Vec<u64>,
    pub optimizer_best: Vec<f64>,
    pub random_best: Vec<f64>,
    pub optimizer_median: f64,
    pub random_median: f64,
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Best values of [`optimize`] and [`random_search`] per seed, seeds run in
/// parallel.
pub fn compare_to_random<F, E>(objective: &F, space: &ParamSpace, budget: usize, seeds: &[u64]) -> Result<Comparison>
where
    F: Fn(&[f64]) -> Result<f64, E> + Sync,
    E: Display,
{
    if seeds.len() < 10 {
        return Err(TuningError::InvalidArgument(format!(
            "need at least 10 seeds, got {}",
            seeds.len()
        )));
    }
    let runs = par::map(Mode::default(), seeds, |&s| -> Result<(f64, f64)> {
        let bo = optimize_in(Mode::Sequential, objective, space, budget, s)?;
        let rs = random_search(objective, space, budget, s)?;
        Ok((bo.best_value, rs.best_value))
    });
    let (optimizer_best, random_best): (Vec<f64>, Vec<f64>) =
        runs.into_iter().collect::<Result<Vec<_>>>()?.into_iter().unzip();
    Ok(Comparison {
        seeds: seeds.to_vec(),
        optimizer_median: median(&optimizer_best),
        random_median: median(&random_best),
        optimizer_best,
        random_best,
    })
}

/// Zero-mean GP with a squared-exponential kernel on the unit cube over
/// standardized observations.
struct Surrogate {
    xs: Vec<Vec<f64>>,
    chol: Vec<f64>,
    alpha: Vec<f64>,
    lengthscale: f64,
    mean: f64,
    scale: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl Surrogate {
    fn fit(observed: &[(Vec<f64>, f64)]) -> Option<Surrogate> {
        let n = observed.len();
        if n < 2 {
            return None;
        }
        let mean = observed.iter().map(|o| o.1).sum::<f64>() / n as f64;
        let var = observed.iter().map(|o| (o.1 - mean).powi(2)).sum::<f64>() / n as f64;
        let scale = if var > 1e-300 { var.sqrt() } else { 1.0 };
        let y: Vec<f64> = observed.iter().map(|o| (o.1 - mean) / scale).collect();
        let xs: Vec<Vec<f64>> = observed.iter().map(|o| o.0.clone()).collect();

        let mut best: Option<(f64, Surrogate)> = None;
        for &ls in &LENGTHSCALES {
            let Some((chol, alpha)) = Self::factor(&xs, &y, ls) else {
                continue;
            };
            let log_det: f64 = (0..n).map(|i| chol[i * n + i].ln()).sum();
            let fit: f64 = y.iter().zip(&alpha).map(|(a, b)| a * b).sum();
            let lml = -0.5 * fit - log_det;
            if best.as_ref().is_none_or(|(b, _)| lml > *b) {
                let gp = Surrogate {
                    xs: xs.clone(),
                    chol,
                    alpha,
                    lengthscale: ls,
                    mean,
                    scale,
                };
                best = Some((lml, gp));
            }
        }
        best.map(|(_, gp)| gp)
    }

    fn factor(xs: &[Vec<f64>], y: &[f64], ls: f64) -> Option<(Vec<f64>, Vec<f64>)> {
        let n = xs.len();
        let mut noise = 1e-6;
        while noise <= 1e-1 {
            let mut k = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    k[i * n + j] = (-sq_dist(&xs[i], &xs[j]) / (2.0 * ls * ls)).exp();
                }
                k[i * n + i] += noise;
            }
            if let Some(l) = cholesky(&k, n) {
                let alpha = back_sub(&l, n, &forward_sub(&l, n, y));
                return Some((l, alpha));
            }
            noise *= 10.0;
        }
        None
    }

    /// Posterior mean and standard deviation in standardized units.
    fn predict(&self, x: &[f64]) -> (f64, f64) {
        let n = self.xs.len();
        let ks: Vec<f64> = self
            .xs
            .iter()
            .map(|xi| (-sq_dist(xi, x) / (2.0 * self.lengthscale * self.lengthscale)).exp())
            .collect();
        let mu = ks.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        let v = forward_sub(&self.chol, n, &ks);
        let var = (1.0 - v.iter().map(|x| x * x).sum::<f64>()).max(1e-12);
        (mu, var.sqrt())
    }

    fn expected_improvement(&self, x: &[f64], incumbent: f64) -> f64 {
        let (mu, sigma) = self.predict(x);
        let gain = mu - incumbent - XI;
        let z = gain / sigma;
        gain * normal_cdf(z) + sigma * normal_pdf(z)
    }
}

fn propose(gp: &Surrogate, observed: &[(Vec<f64>, f64)], d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let incumbent = observed
        .iter()
        .map(|o| (o.1 - gp.mean) / gp.scale)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut ranked: Vec<&(Vec<f64>, f64)> = observed.iter().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));

    let mut candidates: Vec<Vec<f64>> = (0..RANDOM_CANDIDATES)
        .map(|_| (0..d).map(|_| rng.random::<f64>()).collect())
        .collect();
    for (center, _) in ranked.iter().take(3) {
        for _ in 0..LOCAL_CANDIDATES {
            candidates.push(
                center
                    .iter()
                    .map(|c| (c + LOCAL_RADIUS * rng.random_range(-1.0..=1.0)).clamp(0.0, 1.0))
                    .collect(),
            );
        }
    }
    let mut best = (f64::NEG_INFINITY, 0);
    for (i, c) in candidates.iter().enumerate() {
        let ei = gp.expected_improvement(c, incumbent);
        if ei > best.0 {
            best = (ei, i);
        }
    }
    candidates.swap_remove(best.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::convert::Infallible;

    fn bowl_1d(x: &[f64]) -> Result<f64, Infallible> {
        Ok(-(x[0] - 0.3).powi(2))
    }

    fn unit(d: usize) -> ParamSpace {
        ParamSpace::new((0..d).map(|i| (format!("x{i}"), 0.0, 1.0))).unwrap()
    }

    #[test]
    fn halton_first_points() {
        let zero = [0.0, 0.0];
        assert_eq!(halton(0, &zero), vec![0.5, 1.0 / 3.0]);
        assert_eq!(halton(1, &zero), vec![0.25, 2.0 / 3.0]);
        assert_eq!(halton(2, &zero), vec![0.75, 1.0 / 9.0]);
    }

    #[test]
    fn finds_the_bowl_minimum() {
        let opt = optimize(&bowl_1d, &unit(1), 30, 7).unwrap();
        assert!((opt.best[0] - 0.3).abs() < 0.05, "{:?}", opt.best);
        assert_eq!(opt.trials.len(), 30);
        assert!(opt.trials.iter().enumerate().all(|(i, t)| t.index == i));
    }

    #[test]
    fn budget_one_is_the_first_design_point() {
        let opt = optimize(&bowl_1d, &unit(1), 1, 3).unwrap();
        assert_eq!(opt.trials.len(), 1);
        assert_eq!(opt.best, opt.trials[0].params);
    }

    #[test]
    fn deterministic_per_seed() {
        let space = unit(2);
        let f = |x: &[f64]| -> Result<f64, Infallible> { Ok(-(x[0] - 0.2).powi(2) - (x[1] - 0.7).powi(2)) };
        let a = optimize(&f, &space, 15, 11).unwrap();
        let b = optimize(&f, &space, 15, 11).unwrap();
        assert_eq!(a, b);
        let c = optimize(&f, &space, 15, 12).unwrap();
        assert_ne!(a.trials, c.trials);
    }

    #[test]
    fn failures_consume_budget() {
        let f = |x: &[f64]| if x[0] < 0.5 { Err("left half") } else { Ok(x[0]) };
        let opt = optimize(&f, &unit(1), 12, 1).unwrap();
        assert_eq!(opt.trials.len(), 12);
        let failed = opt.trials.iter().filter(|t| t.value.is_none()).count();
        assert!(failed > 0);
        assert!(opt
            .trials
            .iter()
            .filter(|t| t.value.is_none())
            .all(|t| t.error.as_deref() == Some("left half")));
        assert!(opt.best_value >= 0.5);

        let never = |_: &[f64]| -> Result<f64, &str> { Err("no") };
        assert!(matches!(
            optimize(&never, &unit(1), 6, 1),
            Err(TuningError::AllTrialsFailed)
        ));
    }

    #[test]
    fn constant_objective_medians() {
        let f = |_: &[f64]| -> Result<f64, Infallible> { Ok(0.42) };
        let seeds: Vec<u64> = (0..10).collect();
        let cmp = compare_to_random(&f, &unit(2), 8, &seeds).unwrap();
        assert_eq!(cmp.optimizer_median, 0.42);
        assert_eq!(cmp.random_median, 0.42);
        assert!(compare_to_random(&f, &unit(2), 8, &seeds[..9]).is_err());
    }

    #[test]
    fn space_validation() {
        assert!(ParamSpace::new([("a", 1.0, 0.0)]).is_err());
        assert!(ParamSpace::new([("a", 0.0, f64::INFINITY)]).is_err());
        assert!(ParamSpace::new(Vec::<(String, f64, f64)>::new()).is_err());
        assert_eq!(ParamSpace::scoring().dim(), 6);
    }
}
