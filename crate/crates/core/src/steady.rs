//! Closed-form Markov-chain analytics for a fixed redemption goal: the
//! stationary distribution of points-to-redemption, long-run revenues,
//! optimal thresholds, the price of fairness, and mixing-time quantities.
//!
//! The points-to-redemption of a customer facing threshold `N` is a chain
//! on `{0, .., N}` that holds at `tau` with probability `1 - phi(tau)` and
//! steps to `(tau - 1) mod (N + 1)` with probability `phi(tau)`. Its
//! stationary law weights each state by the expected holding time
//! `1 / phi(tau)`, which yields every closed form in this module.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};
use crate::model::{Instance, TypeSpec};

/// Iteration cap for the empirical mixing-time search.
pub const MIXING_ITERATION_CAP: u64 = 1_000_000;

/// A redemption goal: a finite threshold or the paused program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Threshold {
    Finite(u32),
    Infinite,
}

impl Threshold {
    pub fn is_finite(self) -> bool {
        matches!(self, Threshold::Finite(_))
    }

    pub fn finite(self) -> Option<u32> {
        match self {
            Threshold::Finite(n) => Some(n),
            Threshold::Infinite => None,
        }
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Threshold::Finite(n) => write!(f, "{n}"),
            Threshold::Infinite => write!(f, "inf"),
        }
    }
}

impl Serialize for Threshold {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Threshold::Finite(n) => s.serialize_u32(*n),
            Threshold::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Threshold {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(u32),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(n) => Ok(Threshold::Finite(n)),
            Raw::Str(s) if s == "inf" => Ok(Threshold::Infinite),
            Raw::Str(s) => Err(serde::de::Error::custom(format!("bad threshold {s:?}"))),
        }
    }
}

/// Stationary summary of one type's chain at a finite threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryProfile {
    pub n: u32,
    /// Stationary distribution over `tau in {0, .., n}`.
    pub p: Vec<f64>,
    /// Long-run revenue rate.
    pub revenue: f64,
    /// Steady-state mean of `tau`.
    pub nu: f64,
    /// Steady-state second moment of `tau`.
    pub nu2: f64,
    pub variance: f64,
}

/// An argmax over thresholds together with its achieved revenue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdChoice {
    pub n: Threshold,
    pub value: f64,
}

fn check_threshold(n: u32) -> Result<()> {
    if n < 1 {
        return Err(Error::OutOfRange("threshold must be >= 1".into()));
    }
    Ok(())
}

/// Holding-time weights `1/phi(tau)` for `tau in {0, .., n}`.
fn inverse_probs(spec: &TypeSpec, n: u32) -> Result<Vec<f64>> {
    (0..=n)
        .map(|tau| {
            let phi = spec.purchase_prob(tau);
            if phi <= 0.0 {
                Err(Error::DegenerateChain { tau, n })
            } else {
                Ok(1.0 / phi)
            }
        })
        .collect()
}

/// Stationary distribution `p(tau) = (1/phi(tau)) / sum 1/phi`, exactly
/// normalized.
pub fn stationary_distribution(spec: &TypeSpec, n: u32) -> Result<Vec<f64>> {
    check_threshold(n)?;
    let inv = inverse_probs(spec, n)?;
    let total: f64 = inv.iter().sum();
    Ok(inv.into_iter().map(|w| w / total).collect())
}

/// Transition matrix of the points-to-redemption chain, row-major.
///
/// Row `tau` holds mass `1 - phi(tau)` and sends `phi(tau)` to
/// `(tau - 1) mod (n + 1)`; rows sum to 1 exactly.
pub fn transition_matrix(spec: &TypeSpec, n: u32) -> Vec<Vec<f64>> {
    let dim = (n + 1) as usize;
    let mut rows = vec![vec![0.0; dim]; dim];
    for (tau, row) in rows.iter_mut().enumerate() {
        let phi = spec.purchase_prob(tau as u32);
        let dst = (tau + dim - 1) % dim;
        row[tau] += 1.0 - phi;
        row[dst] += phi;
    }
    rows
}

/// Long-run revenue rate of one type under a fixed goal.
///
/// Finite `n` gives `n / sum_{tau<=n} 1/phi(tau)`; the paused program
/// earns the baseline.
pub fn long_run_revenue_type(spec: &TypeSpec, n: Threshold) -> Result<f64> {
    long_run_revenue_type_with(spec, n, false)
}

/// As [`long_run_revenue_type`], but a zero purchase probability yields
/// revenue 0 (the cycle never completes) instead of an error when
/// `allow_degenerate` is set.
pub fn long_run_revenue_type_with(
    spec: &TypeSpec,
    n: Threshold,
    allow_degenerate: bool,
) -> Result<f64> {
    let n = match n {
        Threshold::Infinite => return Ok(spec.baseline),
        Threshold::Finite(n) => n,
    };
    check_threshold(n)?;
    match inverse_probs(spec, n) {
        Ok(inv) => Ok(n as f64 / inv.iter().sum::<f64>()),
        Err(Error::DegenerateChain { .. }) if allow_degenerate => Ok(0.0),
        Err(e) => Err(e),
    }
}

/// Per-type revenue table `R(1), .., R(n_max)` via prefix sums.
pub(crate) fn revenue_table(spec: &TypeSpec, n_max: u32) -> Result<Vec<f64>> {
    let inv = inverse_probs(spec, n_max)?;
    let mut table = Vec::with_capacity(n_max as usize);
    let mut prefix = inv[0];
    for n in 1..=n_max {
        prefix += inv[n as usize];
        table.push(n as f64 / prefix);
    }
    Ok(table)
}

/// Population-level long-run revenue under a single shared goal.
pub fn mixture_revenue(instance: &Instance, n: Threshold) -> Result<f64> {
    let mut total = 0.0;
    for (spec, &rho) in instance.types.iter().zip(&instance.rho) {
        total += rho * long_run_revenue_type(spec, n)?;
    }
    Ok(total)
}

/// Mixture revenue table over finite thresholds, index `n - 1`.
pub(crate) fn mixture_revenue_table(instance: &Instance) -> Result<Vec<f64>> {
    let mut table = vec![0.0; instance.n_max as usize];
    for (spec, &rho) in instance.types.iter().zip(&instance.rho) {
        for (entry, r) in table.iter_mut().zip(revenue_table(spec, instance.n_max)?) {
            *entry += rho * r;
        }
    }
    Ok(table)
}

/// Argmax of a revenue table with the deterministic tie rules: smallest
/// finite threshold among equals, and the paused program wins an exact
/// tie against the best finite goal.
fn choose(table: &[f64], infinite_value: f64) -> ThresholdChoice {
    let mut best_n = 1u32;
    let mut best_v = table[0];
    for (i, &v) in table.iter().enumerate().skip(1) {
        if v > best_v {
            best_v = v;
            best_n = i as u32 + 1;
        }
    }
    if best_v > infinite_value {
        ThresholdChoice {
            n: Threshold::Finite(best_n),
            value: best_v,
        }
    } else {
        ThresholdChoice {
            n: Threshold::Infinite,
            value: infinite_value,
        }
    }
}

/// Optimal non-personalized goal over `{1, .., n_max} + {inf}`.
pub fn optimal_threshold(instance: &Instance) -> Result<ThresholdChoice> {
    let table = mixture_revenue_table(instance)?;
    Ok(choose(&table, instance.no_loyalty_revenue()))
}

/// Optimal finite goal and its revenue (the learning benchmark `N*`).
pub fn optimal_finite_threshold(instance: &Instance) -> Result<(u32, f64)> {
    let table = mixture_revenue_table(instance)?;
    let mut best = (1u32, table[0]);
    for (i, &v) in table.iter().enumerate().skip(1) {
        if v > best.1 {
            best = (i as u32 + 1, v);
        }
    }
    Ok(best)
}

/// Per-type optimal goals plus the mixture revenue they achieve.
pub fn optimal_personalized(instance: &Instance) -> Result<(Vec<ThresholdChoice>, f64)> {
    let mut choices = Vec::with_capacity(instance.k());
    let mut total = 0.0;
    for (spec, &rho) in instance.types.iter().zip(&instance.rho) {
        let table = revenue_table(spec, instance.n_max)?;
        let choice = choose(&table, spec.baseline);
        total += rho * choice.value;
        choices.push(choice);
    }
    Ok((choices, total))
}

/// Ratio of the optimal personalized revenue to the optimal
/// non-personalized revenue.
pub fn price_of_fairness(instance: &Instance) -> Result<f64> {
    let non_pers = optimal_threshold(instance)?.value;
    if non_pers <= 0.0 {
        return Err(Error::ZeroRevenue);
    }
    let (_, pers) = optimal_personalized(instance)?;
    Ok(pers / non_pers)
}

/// Worst-case price-of-fairness bound `K - (K-1) * 2^(-1/(K-1))`.
pub fn pof_upper_bound(k: u32) -> f64 {
    if k <= 1 {
        return 1.0;
    }
    let km1 = (k - 1) as f64;
    k as f64 - km1 * (-1.0 / km1).exp2()
}

/// Stationary distribution with moments, variance, and revenue bundled.
pub fn steady_state_profile(spec: &TypeSpec, n: u32) -> Result<StationaryProfile> {
    let p = stationary_distribution(spec, n)?;
    let revenue = long_run_revenue_type(spec, Threshold::Finite(n))?;
    let mut nu = 0.0;
    let mut nu2 = 0.0;
    for (tau, &prob) in p.iter().enumerate() {
        nu += tau as f64 * prob;
        nu2 += (tau as f64) * (tau as f64) * prob;
    }
    let variance = nu2 - nu * nu;
    Ok(StationaryProfile {
        n,
        p,
        revenue,
        nu,
        nu2,
        variance,
    })
}

/// Worst-start time for the chain to come within total-variation `eps`
/// of stationarity, by repeated matrix-vector products.
pub fn empirical_mixing_time(spec: &TypeSpec, n: u32, eps: f64) -> Result<u64> {
    check_threshold(n)?;
    if (0..=n).all(|tau| spec.purchase_prob(tau) >= 1.0) {
        return Err(Error::PeriodicChain);
    }
    let pi = stationary_distribution(spec, n)?;
    let p = transition_matrix(spec, n);
    let dim = (n + 1) as usize;
    // rows[s] is the distribution after t steps from starting state s.
    let mut rows = p.clone();
    for t in 1..=MIXING_ITERATION_CAP {
        let worst = rows
            .iter()
            .map(|row| {
                0.5 * row
                    .iter()
                    .zip(&pi)
                    .map(|(a, b)| (a - b).abs())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max);
        if worst <= eps {
            return Ok(t);
        }
        rows = rows
            .iter()
            .map(|row| {
                let mut next = vec![0.0; dim];
                for (j, &mass) in row.iter().enumerate() {
                    if mass != 0.0 {
                        for (k, &pjk) in p[j].iter().enumerate() {
                            next[k] += mass * pjk;
                        }
                    }
                }
                next
            })
            .collect();
    }
    Err(Error::IterationCap(MIXING_ITERATION_CAP))
}

/// Closed-form mixing-time bound `(n_max+1)^2 / (2 (1-mu_max) mu_min)`.
///
/// Returns `+inf` when `mu_max = 1`: the deterministic cycle never mixes.
pub fn tmix_upper_bound(n_max: u32, mu_min: f64, mu_max: f64) -> f64 {
    if mu_max >= 1.0 || mu_min <= 0.0 {
        return f64::INFINITY;
    }
    let side = (n_max + 1) as f64;
    side * side / (2.0 * (1.0 - mu_max) * mu_min)
}
