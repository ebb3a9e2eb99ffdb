//! Decision logic of the learning policies: epoch schedules (theoretical
//! and practical), the greedy and consideration-set update rules, and the
//! baseline policies used for comparison.
//!
//! Both learning policies proceed in epochs of doubling length. At each
//! epoch boundary they refit the per-type GLMs, rank thresholds by the
//! estimated long-run revenue, and terminate the program outright when
//! the known no-loyalty revenue beats the best estimate by the epoch's
//! confidence margin. Stable-Greedy takes the greedy argmax; Fair-Greedy
//! keeps a nested consideration set of near-optimal thresholds and plays
//! its largest member, which makes its goal sequence non-increasing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{self, fit_mle, SampleSet, SIGMA};
use crate::model::{Instance, LinkKind, ParamBox, RegularityReport, TypeSpec};
use crate::steady::{mixture_revenue_table, optimal_threshold, Threshold};

/// The schedule constants of the theoretical epoch construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantsBundle {
    pub sigma: f64,
    pub c_lambda: f64,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub t_hat_mix: f64,
}

impl ConstantsBundle {
    /// Evaluates the constants from the known regularity quantities.
    pub fn new(report: &RegularityReport, instance: &Instance, t_hat_mix: f64) -> Self {
        let n_max = instance.n_max;
        let n2 = 1.0 + (n_max as f64).powi(2);
        let rho_min = instance.rho_min();
        let c_lambda = report.mu_min * report.mu_min / (12.0 * report.mu_max * report.mu_max);
        let c0 = estimation::c_zero(report, n_max);
        let c5 = instance
            .rho
            .iter()
            .map(|&rho| {
                3.0 * report.mu_max * report.mu_max * report.l_mu * SIGMA
                    / (report.mu_min * report.mu_min * report.kappa)
                    * (2.0 * rho * n2 / c_lambda).sqrt()
            })
            .sum();
        ConstantsBundle {
            sigma: SIGMA,
            c_lambda,
            c0,
            c1: 48.0 / c_lambda,
            c2: 8.0 * c0 / (rho_min * c_lambda),
            c3: 2.0 * c0 / (rho_min * c_lambda),
            c4: 810.0 * (n_max as f64).powi(4) / (rho_min * c_lambda * c_lambda),
            c5,
            t_hat_mix,
        }
    }
}

/// Which construction produced an epoch plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleMode {
    Theoretical,
    Practical,
}

/// Which samples feed the MLE at an epoch boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MleWindow {
    /// Only the previous epoch, as in the theoretical analysis.
    #[serde(rename = "epoch")]
    PreviousEpoch,
    /// Everything observed so far, the practical default.
    #[serde(rename = "pooled")]
    AllHistory,
}

/// A doubling epoch schedule with termination thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochPlan {
    pub t1: u64,
    pub horizon: u64,
    /// Nominal epoch lengths `t1 * 2^(h-1)` for `h = 1..=num_epochs()`;
    /// the final epoch is clipped at the horizon when it runs.
    pub lengths: Vec<u64>,
    /// Termination margins per epoch; epoch 1 has none (stored infinite).
    pub deltas: Vec<f64>,
    pub mode: ScheduleMode,
    pub mle_window: MleWindow,
}

impl EpochPlan {
    fn build(
        t1: u64,
        horizon: u64,
        mode: ScheduleMode,
        mle_window: MleWindow,
        delta_at: impl Fn(usize, &[u64]) -> f64,
    ) -> Result<Self> {
        if horizon < 1 {
            return Err(Error::OutOfRange("horizon must be >= 1".into()));
        }
        if t1 < 1 {
            return Err(Error::OutOfRange("first epoch length must be >= 1".into()));
        }
        if horizon < t1 {
            return Err(Error::HorizonTooShort { t: horizon, t1 });
        }
        let mut lengths = Vec::new();
        let mut covered: u64 = 0;
        let mut len = t1;
        while covered < horizon {
            lengths.push(len);
            covered = covered.saturating_add(len);
            len = len.saturating_mul(2);
        }
        let deltas = (0..lengths.len())
            .map(|i| {
                if i == 0 {
                    f64::INFINITY
                } else {
                    delta_at(i + 1, &lengths)
                }
            })
            .collect();
        Ok(EpochPlan {
            t1,
            horizon,
            lengths,
            deltas,
            mode,
            mle_window,
        })
    }

    /// Number of epochs `H(T)` under the truncation rule.
    pub fn num_epochs(&self) -> usize {
        self.lengths.len()
    }

    /// Termination margin for epoch `h` (1-based; epoch 1 has none).
    pub fn delta(&self, h: usize) -> f64 {
        self.deltas[h - 1]
    }

    /// Start period and clipped length of epoch `h` (1-based).
    pub fn epoch_span(&self, h: usize) -> (u64, u64) {
        let start: u64 = self.lengths[..h - 1].iter().sum();
        let len = self.lengths[h - 1].min(self.horizon - start);
        (start, len)
    }
}

/// The theoretical schedule: first-epoch length from the constants
/// bundle (rounded up), doubling lengths, and margins
/// `delta_h = C5 sqrt(log(1/delta) / (M T_{h-1}))`.
pub fn theoretical_epoch_plan(
    report: &RegularityReport,
    instance: &Instance,
    t_horizon: u64,
    m: u64,
    delta: f64,
    t_hat_mix: f64,
) -> Result<EpochPlan> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidDelta(delta));
    }
    let c = ConstantsBundle::new(report, instance, t_hat_mix);
    let log_inv = (1.0 / delta).ln();
    let m_f = m as f64;
    let t1_real = (c.c1 / (1.0 - (-1.0 / t_hat_mix).exp2()))
        .max((c.c2 + c.c3 * log_inv) / m_f)
        .max(c.c4 * t_hat_mix * log_inv / m_f);
    if !t1_real.is_finite() {
        return Err(Error::HorizonTooShort {
            t: t_horizon,
            t1: u64::MAX,
        });
    }
    let t1 = t1_real.ceil() as u64;
    if t_horizon < t1 {
        return Err(Error::HorizonTooShort { t: t_horizon, t1 });
    }
    EpochPlan::build(
        t1,
        t_horizon,
        ScheduleMode::Theoretical,
        MleWindow::PreviousEpoch,
        move |h, lengths: &[u64]| {
            let t_prev = lengths[h - 2] as f64;
            c.c5 * (log_inv / (m_f * t_prev)).sqrt()
        },
    )
}

/// The practical schedule used in the studies: `T1 = 1`, doubling, and
/// `delta_h = c / sqrt(M * sum_{i<h} T_i)` with pooled MLE windows.
pub fn practical_epoch_plan(t_horizon: u64, m: u64, c: f64) -> Result<EpochPlan> {
    practical_epoch_plan_from(t_horizon, m, c, 1)
}

/// Practical schedule with a configurable first-epoch length.
pub fn practical_epoch_plan_from(t_horizon: u64, m: u64, c: f64, t1: u64) -> Result<EpochPlan> {
    let m_f = m as f64;
    EpochPlan::build(
        t1,
        t_horizon,
        ScheduleMode::Practical,
        MleWindow::AllHistory,
        move |h, lengths: &[u64]| {
            let past: u64 = lengths[..h - 1].iter().sum();
            c / (m_f * past as f64).sqrt()
        },
    )
}

/// The fixed shapes a policy knows about the instance: per-type fit
/// links, known baselines, admissible boxes, the threshold cap, and the
/// mixture weights. True coefficients are deliberately absent.
#[derive(Debug, Clone, PartialEq)]
pub struct FitShape {
    pub links: Vec<LinkKind>,
    pub baselines: Vec<f64>,
    pub boxes: Vec<ParamBox>,
    pub n_max: u32,
    pub rho: Vec<f64>,
}

impl FitShape {
    pub fn from_instance(instance: &Instance) -> Self {
        FitShape {
            links: instance.types.iter().map(|t| t.link).collect(),
            baselines: instance.types.iter().map(|t| t.baseline).collect(),
            boxes: instance.types.iter().map(|t| t.param_box).collect(),
            n_max: instance.n_max,
            rho: instance.rho.clone(),
        }
    }

    /// Replace every fit link, as the misspecification study does.
    pub fn with_fit_link(mut self, link: LinkKind) -> Self {
        for l in &mut self.links {
            *l = link;
        }
        self
    }

    /// Revenue of the paused program under the known baselines.
    pub fn no_loyalty_revenue(&self) -> f64 {
        self.baselines
            .iter()
            .zip(&self.rho)
            .map(|(b, r)| b * r)
            .sum()
    }

    /// The instance implied by fitted coefficients; its (clamped)
    /// purchase probabilities drive every estimated revenue.
    fn estimated_instance(&self, betas: &[(f64, f64)]) -> Result<Instance> {
        let types = self
            .links
            .iter()
            .zip(&self.baselines)
            .zip(&self.boxes)
            .zip(betas)
            .map(|(((link, baseline), pbox), &(b1, b2))| {
                TypeSpec::with_box(*link, *baseline, b1, b2, *pbox)
            })
            .collect::<Result<Vec<_>>>()?;
        Instance::new(types, self.rho.clone(), self.n_max)
    }
}

/// Thresholds still in contention under Fair-Greedy, kept sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsiderationSet {
    thresholds: Vec<u32>,
}

impl ConsiderationSet {
    /// The full set `{1, .., n_max}` used at epoch 1.
    pub fn full(n_max: u32) -> Self {
        ConsiderationSet {
            thresholds: (1..=n_max).collect(),
        }
    }

    pub fn thresholds(&self) -> &[u32] {
        &self.thresholds
    }

    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }

    pub fn max(&self) -> u32 {
        *self.thresholds.last().expect("consideration set never empty")
    }

    pub fn is_subset_of(&self, other: &ConsiderationSet) -> bool {
        self.thresholds.iter().all(|t| other.thresholds.contains(t))
    }
}

/// What a policy does at an epoch boundary.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicyStep {
    SetGoal(Threshold),
    Terminate,
}

/// Epoch-boundary decision with the artifacts worth logging.
#[derive(Debug, Clone, PartialEq)]
pub struct DecideOutcome {
    pub step: PolicyStep,
    /// Per-type MLE used for the decision, if a fit happened.
    pub mle: Option<Vec<(f64, f64)>>,
    /// A rank-deficient fit forced the fallback to the previous goal.
    pub degenerate_fit: bool,
}

/// Fits every type on its window; `None` signals a degenerate design.
fn fit_all(history: &[SampleSet], shape: &FitShape) -> Result<Option<Vec<(f64, f64)>>> {
    let mut betas = Vec::with_capacity(shape.links.len());
    for (k, samples) in history.iter().enumerate() {
        match fit_mle(samples, shape.links[k], shape.baselines[k], &shape.boxes[k], true) {
            Ok(fit) => betas.push(fit.beta()),
            Err(Error::Degenerate(_)) => return Ok(None),
            Err(e) => return Err(e),
        }
    }
    Ok(Some(betas))
}

/// Greedy epoch decision: refit, pick the estimated-best finite goal,
/// and terminate when the known paused revenue beats it by `delta_h`.
///
/// A degenerate fit keeps the previous goal; termination is irreversible
/// so it is never triggered on a failed fit.
pub fn stable_greedy_decide(
    history: &[SampleSet],
    plan: &EpochPlan,
    h: usize,
    shape: &FitShape,
    known_noloyalty_revenue: f64,
    current: Threshold,
) -> Result<DecideOutcome> {
    debug_assert!(h >= 2, "epoch 1 uses the configured initial goal");
    let betas = match fit_all(history, shape)? {
        Some(betas) => betas,
        None => {
            return Ok(DecideOutcome {
                step: PolicyStep::SetGoal(current),
                mle: None,
                degenerate_fit: true,
            })
        }
    };
    let est = shape.estimated_instance(&betas)?;
    let table = mixture_revenue_table(&est)?;
    let mut best_n = 1u32;
    let mut best_v = table[0];
    for (i, &v) in table.iter().enumerate().skip(1) {
        if v > best_v {
            best_v = v;
            best_n = i as u32 + 1;
        }
    }
    let step = if known_noloyalty_revenue > best_v + plan.delta(h) {
        PolicyStep::Terminate
    } else {
        PolicyStep::SetGoal(Threshold::Finite(best_n))
    };
    Ok(DecideOutcome {
        step,
        mle: Some(betas),
        degenerate_fit: false,
    })
}

/// Fair (devaluation-free) epoch decision: filter the consideration set
/// by the `2 delta_h` near-optimality rule, play its largest member, and
/// terminate only when the paused revenue clears a `3 delta_h` margin.
pub fn fair_greedy_decide(
    history: &[SampleSet],
    plan: &EpochPlan,
    h: usize,
    shape: &FitShape,
    known_noloyalty_revenue: f64,
    set: &ConsiderationSet,
) -> Result<(DecideOutcome, ConsiderationSet)> {
    debug_assert!(h >= 2);
    let betas = match fit_all(history, shape)? {
        Some(betas) => betas,
        None => {
            return Ok((
                DecideOutcome {
                    step: PolicyStep::SetGoal(Threshold::Finite(set.max())),
                    mle: None,
                    degenerate_fit: true,
                },
                set.clone(),
            ))
        }
    };
    let est = shape.estimated_instance(&betas)?;
    let table = mixture_revenue_table(&est)?;
    let value = |n: u32| table[(n - 1) as usize];

    let best = set
        .thresholds()
        .iter()
        .map(|&n| value(n))
        .fold(f64::NEG_INFINITY, f64::max);
    let delta = plan.delta(h);
    let kept: Vec<u32> = set
        .thresholds()
        .iter()
        .copied()
        .filter(|&n| value(n) >= best - 2.0 * delta)
        .collect();
    // The filter always retains its own argmax.
    assert!(!kept.is_empty(), "consideration set emptied itself");
    let next = ConsiderationSet { thresholds: kept };
    let goal = next.max();
    let step = if known_noloyalty_revenue > value(goal) + 3.0 * delta {
        PolicyStep::Terminate
    } else {
        PolicyStep::SetGoal(Threshold::Finite(goal))
    };
    Ok((
        DecideOutcome {
            step,
            mle: Some(betas),
            degenerate_fit: false,
        },
        next,
    ))
}

/// Epoch-based decision maker driven by the simulator.
pub trait Policy {
    fn name(&self) -> &str;
    fn plan(&self) -> &EpochPlan;
    fn initial_goal(&self) -> Threshold;
    /// Boundary decision entering epoch `h >= 2`; `window` holds one
    /// sample set per type, selected per the plan's MLE window.
    fn decide(&mut self, h: usize, window: &[SampleSet]) -> Result<DecideOutcome>;
}

/// Stable-Greedy (greedy MLE with termination test).
pub struct StableGreedy {
    plan: EpochPlan,
    shape: FitShape,
    noloyalty: f64,
    current: Threshold,
}

impl StableGreedy {
    /// Default initial goal is `n_max`; the guarantee holds for any
    /// `n1 in [n_max]`, and a tight cap matters at small horizons.
    pub fn new(shape: FitShape, plan: EpochPlan, n1: Option<u32>) -> Self {
        let goal = n1.unwrap_or(shape.n_max).min(shape.n_max).max(1);
        let noloyalty = shape.no_loyalty_revenue();
        StableGreedy {
            plan,
            shape,
            noloyalty,
            current: Threshold::Finite(goal),
        }
    }
}

impl Policy for StableGreedy {
    fn name(&self) -> &str {
        "stable"
    }

    fn plan(&self) -> &EpochPlan {
        &self.plan
    }

    fn initial_goal(&self) -> Threshold {
        self.current
    }

    fn decide(&mut self, h: usize, window: &[SampleSet]) -> Result<DecideOutcome> {
        let out = stable_greedy_decide(
            window,
            &self.plan,
            h,
            &self.shape,
            self.noloyalty,
            self.current,
        )?;
        if let PolicyStep::SetGoal(goal) = out.step {
            self.current = goal;
        }
        Ok(out)
    }
}

/// Fair-Greedy (nested consideration sets; goals never increase).
pub struct FairGreedy {
    plan: EpochPlan,
    shape: FitShape,
    noloyalty: f64,
    set: ConsiderationSet,
}

impl FairGreedy {
    pub fn new(shape: FitShape, plan: EpochPlan) -> Self {
        let set = ConsiderationSet::full(shape.n_max);
        let noloyalty = shape.no_loyalty_revenue();
        FairGreedy {
            plan,
            shape,
            noloyalty,
            set,
        }
    }
}

impl Policy for FairGreedy {
    fn name(&self) -> &str {
        "fair"
    }

    fn plan(&self) -> &EpochPlan {
        &self.plan
    }

    fn initial_goal(&self) -> Threshold {
        Threshold::Finite(self.set.max())
    }

    fn decide(&mut self, h: usize, window: &[SampleSet]) -> Result<DecideOutcome> {
        let (out, next) =
            fair_greedy_decide(window, &self.plan, h, &self.shape, self.noloyalty, &self.set)?;
        debug_assert!(next.is_subset_of(&self.set));
        self.set = next;
        Ok(out)
    }
}

/// Constant-goal policy: one epoch spanning the whole horizon.
pub struct FixedPolicy {
    name: &'static str,
    plan: EpochPlan,
    goal: Threshold,
}

impl FixedPolicy {
    pub fn new(goal: Threshold, t_horizon: u64) -> Result<Self> {
        Ok(FixedPolicy {
            name: "fixed",
            plan: single_epoch_plan(t_horizon)?,
            goal,
        })
    }

    /// Clairvoyant baseline: plays the true optimum every period.
    pub fn oracle(instance: &Instance, t_horizon: u64) -> Result<Self> {
        let choice = optimal_threshold(instance)?;
        let mut p = FixedPolicy::new(choice.n, t_horizon)?;
        p.name = "oracle";
        Ok(p)
    }

    /// Never offers the program.
    pub fn no_loyalty(t_horizon: u64) -> Result<Self> {
        let mut p = FixedPolicy::new(Threshold::Infinite, t_horizon)?;
        p.name = "none";
        Ok(p)
    }
}

fn single_epoch_plan(t_horizon: u64) -> Result<EpochPlan> {
    EpochPlan::build(
        t_horizon.max(1),
        t_horizon,
        ScheduleMode::Practical,
        MleWindow::AllHistory,
        |_, _| f64::INFINITY,
    )
}

impl Policy for FixedPolicy {
    fn name(&self) -> &str {
        self.name
    }

    fn plan(&self) -> &EpochPlan {
        &self.plan
    }

    fn initial_goal(&self) -> Threshold {
        self.goal
    }

    fn decide(&mut self, _h: usize, _window: &[SampleSet]) -> Result<DecideOutcome> {
        Ok(DecideOutcome {
            step: PolicyStep::SetGoal(self.goal),
            mle: None,
            degenerate_fit: false,
        })
    }
}

/// Named policy selector for configs and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Stable,
    Fair,
    Oracle,
    Fixed,
    None,
}

/// JSON policy configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub policy: PolicyKind,
    #[serde(default = "default_schedule")]
    pub schedule: ScheduleMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t1: Option<u64>,
    /// Margin scale of the practical schedule (default 0.15).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mle_window: Option<MleWindow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n1: Option<u32>,
    /// Confidence level of the theoretical schedule (default 0.1).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// Link family the fits should use instead of the truth.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_link: Option<LinkKind>,
}

fn default_schedule() -> ScheduleMode {
    ScheduleMode::Practical
}

impl PolicyConfig {
    pub fn new(policy: PolicyKind) -> Self {
        PolicyConfig {
            policy,
            schedule: ScheduleMode::Practical,
            t1: None,
            delta_c: None,
            mle_window: None,
            n1: None,
            delta: None,
            fit_link: None,
        }
    }
}

/// Builds a runnable policy for `instance` over horizon `t` with `m`
/// customers. Learning policies receive only the instance's shape.
pub fn build_policy(
    config: &PolicyConfig,
    instance: &Instance,
    t_horizon: u64,
    m: u64,
) -> Result<Box<dyn Policy>> {
    match config.policy {
        PolicyKind::Oracle => Ok(Box::new(FixedPolicy::oracle(instance, t_horizon)?)),
        PolicyKind::None => Ok(Box::new(FixedPolicy::no_loyalty(t_horizon)?)),
        PolicyKind::Fixed => {
            let n = config.n1.ok_or_else(|| {
                Error::InvalidConfig("fixed policy requires an n1 threshold".into())
            })?;
            Ok(Box::new(FixedPolicy::new(Threshold::Finite(n), t_horizon)?))
        }
        PolicyKind::Stable | PolicyKind::Fair => {
            let mut plan = match config.schedule {
                ScheduleMode::Practical => practical_epoch_plan_from(
                    t_horizon,
                    m,
                    config.delta_c.unwrap_or(0.15),
                    config.t1.unwrap_or(1),
                )?,
                ScheduleMode::Theoretical => {
                    let report = crate::model::validate_instance(instance)?;
                    let t_hat =
                        crate::steady::tmix_upper_bound(instance.n_max, report.mu_min, report.mu_max);
                    theoretical_epoch_plan(
                        &report,
                        instance,
                        t_horizon,
                        m,
                        config.delta.unwrap_or(0.1),
                        t_hat,
                    )?
                }
            };
            if let Some(w) = config.mle_window {
                plan.mle_window = w;
            }
            let mut shape = FitShape::from_instance(instance);
            if let Some(link) = config.fit_link {
                shape = shape.with_fit_link(link);
            }
            match config.policy {
                PolicyKind::Stable => Ok(Box::new(StableGreedy::new(shape, plan, config.n1))),
                _ => Ok(Box::new(FairGreedy::new(shape, plan))),
            }
        }
    }
}
