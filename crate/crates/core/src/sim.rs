//! Exact discrete-time simulation of the customer population under fixed
//! or policy-driven goal sequences, with a bit-reproducible draw-order
//! contract.
//!
//! Every customer consumes exactly one uniform variate per period, drawn
//! from their own stream of the run's counter generator at the period
//! index. Trajectories are therefore coupled across policies sharing a
//! seed, and permuting customers together with their streams permutes
//! the trajectories pointwise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::SampleSet;
use crate::model::Instance;
use crate::policies::{DecideOutcome, MleWindow, Policy, PolicyStep};
use crate::rng::CounterRng;
use crate::steady::Threshold;

/// Schema tags written at the top of exported files.
pub const RUN_CSV_SCHEMA: &str = "loyalty_lab.run_record.v1";
pub const EPOCH_LOG_SCHEMA: &str = "loyalty_lab.epoch_log.v1";

/// One customer's live state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CustomerState {
    /// Index into `Instance::types`.
    pub type_id: usize,
    /// Current point balance. May exceed a freshly lowered threshold; the
    /// positive part of `tau = (n - stock)+` puts such customers at
    /// redemption.
    pub stock: u32,
    /// Stream of the run generator feeding this customer's draws.
    pub stream: u64,
}

/// What one customer did in one period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CustomerOutcome {
    /// Points to redemption, `None` while the program is paused.
    pub tau: Option<u32>,
    /// Purchase (or redemption when `tau == 0`) indicator.
    pub purchased: bool,
    pub redeemed: bool,
}

/// All customers' outcomes for one period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodOutcome {
    pub t: u64,
    pub threshold: Threshold,
    pub customers: Vec<CustomerOutcome>,
}

/// One epoch-boundary event in a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochEvent {
    pub epoch: usize,
    pub start: u64,
    pub len: u64,
    pub threshold: Threshold,
    /// Per-type MLE behind the decision, when one was fitted.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mle: Option<Vec<(f64, f64)>>,
    pub terminated: bool,
    pub degenerate_fit: bool,
}

/// Complete trajectory of one simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub instance: Instance,
    pub m: u64,
    pub horizon: u64,
    pub seed: u64,
    /// Customer index -> type index, blocks in type order.
    pub type_of: Vec<usize>,
    pub outcomes: Vec<PeriodOutcome>,
    pub epoch_log: Vec<EpochEvent>,
}

/// Advances every customer by one period under the given goal, drawing
/// one uniform per customer from `rng` at `(state.stream, t)`.
///
/// Paused program: purchases happen at the baseline and stocks freeze.
/// Active program: a customer at `tau > 0` purchases with `phi(tau)` and
/// banks a point; at `tau = 0` she redeems with `phi(0)`, and the balance
/// resets at the start of the next period.
pub fn advance_period(
    states: &mut [CustomerState],
    threshold: Threshold,
    instance: &Instance,
    rng: &CounterRng,
    t: u64,
) -> PeriodOutcome {
    let mut customers = Vec::with_capacity(states.len());
    for state in states.iter_mut() {
        let spec = &instance.types[state.type_id];
        let u = rng.uniform(state.stream, t);
        let outcome = match threshold {
            Threshold::Infinite => CustomerOutcome {
                tau: None,
                purchased: u < spec.baseline,
                redeemed: false,
            },
            Threshold::Finite(n) => {
                let tau = n.saturating_sub(state.stock);
                let x = u < spec.purchase_prob(tau);
                if tau > 0 {
                    if x {
                        state.stock += 1;
                    }
                    CustomerOutcome {
                        tau: Some(tau),
                        purchased: x,
                        redeemed: false,
                    }
                } else {
                    if x {
                        state.stock = 0;
                    }
                    CustomerOutcome {
                        tau: Some(0),
                        purchased: x,
                        redeemed: x,
                    }
                }
            }
        };
        customers.push(outcome);
    }
    PeriodOutcome {
        t,
        threshold,
        customers,
    }
}

/// Initial population: stocks at zero, customers blocked by type,
/// streams equal to customer indices.
fn initial_states(instance: &Instance, m: u64) -> Result<(Vec<CustomerState>, Vec<usize>)> {
    if m < 1 {
        return Err(Error::OutOfRange("population must be >= 1".into()));
    }
    let counts = instance.type_counts(m)?;
    let mut states = Vec::with_capacity(m as usize);
    let mut type_of = Vec::with_capacity(m as usize);
    for (k, &count) in counts.iter().enumerate() {
        for _ in 0..count {
            states.push(CustomerState {
                type_id: k,
                stock: 0,
                stream: states.len() as u64,
            });
            type_of.push(k);
        }
    }
    Ok((states, type_of))
}

/// Runs `t_horizon` periods under a constant goal.
pub fn simulate_fixed(
    instance: &Instance,
    n: Threshold,
    m: u64,
    t_horizon: u64,
    seed: u64,
) -> Result<RunRecord> {
    let (mut states, type_of) = initial_states(instance, m)?;
    let rng = CounterRng::new(seed);
    let mut outcomes = Vec::with_capacity(t_horizon as usize);
    for t in 0..t_horizon {
        outcomes.push(advance_period(&mut states, n, instance, &rng, t));
    }
    Ok(RunRecord {
        instance: instance.clone(),
        m,
        horizon: t_horizon,
        seed,
        type_of,
        outcomes,
        epoch_log: vec![EpochEvent {
            epoch: 1,
            start: 0,
            len: t_horizon,
            threshold: n,
            mle: None,
            terminated: false,
            degenerate_fit: false,
        }],
    })
}

/// Runs a policy over its epoch plan, truncating the final epoch at the
/// horizon. After the policy terminates, every remaining period runs
/// with the program paused and balances frozen.
pub fn simulate_policy(
    instance: &Instance,
    policy: &mut dyn Policy,
    m: u64,
    t_horizon: u64,
    seed: u64,
) -> Result<RunRecord> {
    let plan = policy.plan().clone();
    if plan.horizon != t_horizon {
        return Err(Error::InvalidConfig(format!(
            "policy plan covers horizon {}, run asked for {}",
            plan.horizon, t_horizon
        )));
    }
    let (mut states, type_of) = initial_states(instance, m)?;
    let rng = CounterRng::new(seed);
    let k = instance.k();

    let mut outcomes = Vec::with_capacity(t_horizon as usize);
    let mut epoch_log = Vec::new();
    let mut goal = policy.initial_goal();
    let mut prev_epoch: Vec<SampleSet> = vec![SampleSet::new(); k];
    let mut pooled: Vec<SampleSet> = vec![SampleSet::new(); k];

    for h in 1..=plan.num_epochs() {
        let (start, len) = plan.epoch_span(h);
        let mut decision: Option<DecideOutcome> = None;
        if h >= 2 {
            let window: &[SampleSet] = match plan.mle_window {
                MleWindow::PreviousEpoch => &prev_epoch,
                MleWindow::AllHistory => &pooled,
            };
            let out = policy.decide(h, window)?;
            goal = match out.step {
                PolicyStep::SetGoal(g) => g,
                PolicyStep::Terminate => Threshold::Infinite,
            };
            decision = Some(out);
        }
        let terminated = matches!(
            decision.as_ref().map(|d| &d.step),
            Some(PolicyStep::Terminate)
        );
        // A terminated program pauses through the end of the horizon.
        let len = if terminated { t_horizon - start } else { len };

        let mut epoch_samples: Vec<SampleSet> = vec![SampleSet::new(); k];
        for t in start..start + len {
            let outcome = advance_period(&mut states, goal, instance, &rng, t);
            if goal.is_finite() {
                for (j, c) in outcome.customers.iter().enumerate() {
                    epoch_samples[type_of[j]].push(c.tau.expect("active period"), c.purchased);
                }
            }
            outcomes.push(outcome);
        }

        epoch_log.push(EpochEvent {
            epoch: h,
            start,
            len,
            threshold: goal,
            mle: decision.as_ref().and_then(|d| d.mle.clone()),
            terminated,
            degenerate_fit: decision.as_ref().map(|d| d.degenerate_fit).unwrap_or(false),
        });

        for (all, fresh) in pooled.iter_mut().zip(&epoch_samples) {
            all.extend_from(fresh);
        }
        prev_epoch = epoch_samples;
        if terminated {
            break;
        }
    }

    Ok(RunRecord {
        instance: instance.clone(),
        m,
        horizon: t_horizon,
        seed,
        type_of,
        outcomes,
        epoch_log,
    })
}

impl RunRecord {
    /// Per-type samples pooled over the whole run (active periods only).
    pub fn samples_by_type(&self) -> Vec<SampleSet> {
        let k = self.instance.k();
        let mut sets = vec![SampleSet::new(); k];
        for period in &self.outcomes {
            if period.threshold.is_finite() {
                for (j, c) in period.customers.iter().enumerate() {
                    sets[self.type_of[j]].push(c.tau.expect("active period"), c.purchased);
                }
            }
        }
        sets
    }

    /// Observed revenue rate: purchases at `tau > 0` per customer-period.
    pub fn observed_revenue_rate(&self) -> f64 {
        let mut revenue = 0u64;
        for period in &self.outcomes {
            for c in &period.customers {
                if c.purchased && c.tau != Some(0) {
                    revenue += 1;
                }
            }
        }
        revenue as f64 / (self.m as f64 * self.horizon as f64)
    }

    /// Compact CSV export: `period,threshold,customer,tau,x,redeemed`,
    /// with `tau = -1` while the program is paused.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.outcomes.len() * self.m as usize * 16);
        out.push_str(&format!("# {RUN_CSV_SCHEMA}\n"));
        out.push_str("period,threshold,customer,tau,x,redeemed\n");
        for period in &self.outcomes {
            for (j, c) in period.customers.iter().enumerate() {
                let tau = c.tau.map(|t| t as i64).unwrap_or(-1);
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    period.t,
                    period.threshold,
                    j,
                    tau,
                    c.purchased as u8,
                    c.redeemed as u8
                ));
            }
        }
        out
    }

    /// Versioned JSON export of the epoch log.
    pub fn epoch_log_json(&self) -> String {
        let doc = serde_json::json!({
            "schema": EPOCH_LOG_SCHEMA,
            "seed": self.seed,
            "m": self.m,
            "horizon": self.horizon,
            "events": self.epoch_log,
        });
        serde_json::to_string_pretty(&doc).expect("epoch log serializes")
    }
}
