//! Evaluation functionals over completed runs: counterfactual regret,
//! observable regret, mixing loss, the performance ratio, and adaptivity
//! statistics.
//!
//! Counterfactual regret charges each period the long-run revenue gap of
//! the goal it played; observable regret charges the gap between the
//! optimum and the expected revenue actually collectable at the realized
//! states. Their difference is the mixing loss, so the three satisfy
//! `obs_regret = regret + mixing_loss` identically on every run.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Instance;
use crate::sim::RunRecord;
use crate::steady::{
    long_run_revenue_type, optimal_finite_threshold, optimal_threshold, Threshold,
};

/// Threshold-change statistics of one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptivityStats {
    pub n_changes: u32,
    pub n_increases: u32,
    /// Mean of `|n' - n| / n` over changes between finite goals; switches
    /// to or from the paused program count as changes without a relative
    /// term. Stored as a fraction of the old goal.
    pub mean_abs_rel_change: f64,
    /// Mean of `(n' - n) / n` over increases between finite goals.
    pub mean_rel_increase: f64,
}

/// Per-type long-run revenues for each goal the run ever played.
fn per_type_revenue(
    run: &RunRecord,
    instance: &Instance,
) -> Result<HashMap<Threshold, Vec<f64>>> {
    let mut map = HashMap::new();
    for ev in &run.epoch_log {
        if let std::collections::hash_map::Entry::Vacant(e) = map.entry(ev.threshold) {
            let per_type = instance
                .types
                .iter()
                .map(|spec| long_run_revenue_type(spec, ev.threshold))
                .collect::<Result<Vec<f64>>>()?;
            e.insert(per_type);
        }
    }
    Ok(map)
}

fn mixture_of(instance: &Instance, per_type: &[f64]) -> f64 {
    per_type
        .iter()
        .zip(&instance.rho)
        .map(|(r, rho)| r * rho)
        .sum()
}

/// Counterfactual regret: `M T R* - sum_t M R(N_t)` with `R(.)` the
/// closed-form mixture revenue and the paused program earning the
/// baselines.
pub fn counterfactual_regret(run: &RunRecord, instance: &Instance) -> Result<f64> {
    let best = optimal_threshold(instance)?.value;
    let revenues = per_type_revenue(run, instance)?;
    let m = run.m as f64;
    let mut regret = 0.0;
    for ev in &run.epoch_log {
        let r = mixture_of(instance, &revenues[&ev.threshold]);
        regret += ev.len as f64 * m * (best - r);
    }
    Ok(regret)
}

/// Cumulative counterfactual regret after each checkpoint period.
pub fn regret_at_checkpoints(
    run: &RunRecord,
    instance: &Instance,
    checkpoints: &[u64],
) -> Result<Vec<f64>> {
    let best = optimal_threshold(instance)?.value;
    let revenues = per_type_revenue(run, instance)?;
    let m = run.m as f64;
    let per_period: Vec<f64> = run
        .outcomes
        .iter()
        .map(|p| m * (best - mixture_of(instance, &revenues[&p.threshold])))
        .collect();
    let mut prefix = Vec::with_capacity(per_period.len() + 1);
    prefix.push(0.0);
    for v in &per_period {
        prefix.push(prefix.last().unwrap() + v);
    }
    Ok(checkpoints
        .iter()
        .map(|&c| prefix[(c as usize).min(per_period.len())])
        .collect())
}

/// Expected revenue collectable from one customer at their realized
/// state: the true `phi` at the recorded `tau` when active and positive,
/// the baseline while paused, nothing at the redemption state.
fn realized_contribution(instance: &Instance, type_id: usize, tau: Option<u32>) -> f64 {
    let spec = &instance.types[type_id];
    match tau {
        None => spec.baseline,
        Some(0) => 0.0,
        Some(tau) => spec.purchase_prob(tau),
    }
}

/// Observable regret: `M T R*` minus the realized expected revenue.
pub fn observable_regret(run: &RunRecord, instance: &Instance) -> Result<f64> {
    let best = optimal_threshold(instance)?.value;
    let mut collected = 0.0;
    for period in &run.outcomes {
        for (j, c) in period.customers.iter().enumerate() {
            collected += realized_contribution(instance, run.type_of[j], c.tau);
        }
    }
    Ok(run.m as f64 * run.horizon as f64 * best - collected)
}

/// Mixing loss: per period and type, the gap between the steady-state
/// revenue of the current goal and the realized expected revenue.
pub fn mixing_loss(run: &RunRecord, instance: &Instance) -> Result<f64> {
    let revenues = per_type_revenue(run, instance)?;
    let counts = instance.type_counts(run.m)?;
    let mut loss = 0.0;
    for period in &run.outcomes {
        let per_type = &revenues[&period.threshold];
        for (k, (&count, &rho)) in counts.iter().zip(&instance.rho).enumerate() {
            debug_assert!((count as f64 - rho * run.m as f64).abs() < 1e-9);
            loss += rho * run.m as f64 * per_type[k];
        }
        for (j, c) in period.customers.iter().enumerate() {
            loss -= realized_contribution(instance, run.type_of[j], c.tau);
        }
    }
    Ok(loss)
}

/// Fraction of the optimal finite-goal long-run revenue achieved along
/// the run's goal sequence.
pub fn performance_ratio(run: &RunRecord, instance: &Instance) -> Result<f64> {
    let (_, r_star) = optimal_finite_threshold(instance)?;
    if r_star <= 0.0 {
        return Err(Error::ZeroRevenue);
    }
    let revenues = per_type_revenue(run, instance)?;
    let mut total = 0.0;
    for ev in &run.epoch_log {
        total += ev.len as f64 * mixture_of(instance, &revenues[&ev.threshold]);
    }
    Ok(total / (run.horizon as f64 * r_star))
}

/// Scans the run's epoch log for threshold changes and increases.
pub fn adaptivity_stats(run: &RunRecord) -> AdaptivityStats {
    let goals: Vec<Threshold> = run.epoch_log.iter().map(|e| e.threshold).collect();
    stats_of_sequence(&goals)
}

fn stats_of_sequence(goals: &[Threshold]) -> AdaptivityStats {
    let mut n_changes = 0u32;
    let mut n_increases = 0u32;
    let mut rel_changes = Vec::new();
    let mut rel_increases = Vec::new();
    for pair in goals.windows(2) {
        let (prev, next) = (pair[0], pair[1]);
        if prev == next {
            continue;
        }
        n_changes += 1;
        if let (Threshold::Finite(a), Threshold::Finite(b)) = (prev, next) {
            let rel = (b as f64 - a as f64) / a as f64;
            rel_changes.push(rel.abs());
            if b > a {
                n_increases += 1;
                rel_increases.push(rel);
            }
        }
    }
    let mean = |v: &[f64]| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    AdaptivityStats {
        n_changes,
        n_increases,
        mean_abs_rel_change: mean(&rel_changes),
        mean_rel_increase: mean(&rel_increases),
    }
}

/// Schema tag of the metrics CSV.
pub const METRICS_CSV_SCHEMA: &str = "loyalty_lab.metrics.v1";

/// One row of the metrics CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub seed: u64,
    pub policy: String,
    pub t: u64,
    pub m: u64,
    pub regret: f64,
    pub obs_regret: f64,
    pub mixing_loss: f64,
    pub gamma: f64,
    pub n_changes: u32,
    pub n_increases: u32,
    pub mean_rel_change: f64,
    pub mean_rel_increase: f64,
}

impl MetricsRow {
    /// Evaluates every metric of a run against its generating instance.
    pub fn evaluate(run: &RunRecord, instance: &Instance, policy: &str) -> Result<Self> {
        let stats = adaptivity_stats(run);
        Ok(MetricsRow {
            seed: run.seed,
            policy: policy.to_string(),
            t: run.horizon,
            m: run.m,
            regret: counterfactual_regret(run, instance)?,
            obs_regret: observable_regret(run, instance)?,
            mixing_loss: mixing_loss(run, instance)?,
            gamma: performance_ratio(run, instance)?,
            n_changes: stats.n_changes,
            n_increases: stats.n_increases,
            mean_rel_change: stats.mean_abs_rel_change,
            mean_rel_increase: stats.mean_rel_increase,
        })
    }

    pub fn csv_header() -> String {
        format!(
            "# {METRICS_CSV_SCHEMA}\nseed,policy,t,m,regret,obs_regret,mixing_loss,gamma,\
             n_changes,n_increases,mean_rel_change,mean_rel_increase"
        )
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.seed,
            self.policy,
            self.t,
            self.m,
            self.regret,
            self.obs_regret,
            self.mixing_loss,
            self.gamma,
            self.n_changes,
            self.n_increases,
            self.mean_rel_change,
            self.mean_rel_increase
        )
    }
}
