//! Seeded instance generators for the numerical studies, the lower-bound
//! instance pair with its closed-form revenue gaps, and batch drivers
//! that reproduce the study tables as CSV plus a JSON summary.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::metrics::{regret_at_checkpoints, MetricsRow};
use crate::model::{Instance, LinkKind, TypeSpec};
use crate::policies::{build_policy, PolicyConfig, PolicyKind};
use crate::rng::StreamRng;
use crate::sim::simulate_policy;
use crate::steady::{optimal_personalized, optimal_threshold, price_of_fairness, Threshold};

/// Schema tag of study summaries.
pub const SUMMARY_SCHEMA: &str = "loyalty_lab.summary.v1";

/// The tight two-type instance: a reward-chasing type that never buys
/// without the program, and a frequent type that always buys. Its price
/// of fairness is exactly 3/2.
pub fn tight_two_type_instance() -> Instance {
    Instance::new(
        vec![
            TypeSpec::new(LinkKind::Linear, 0.0, 1.0, 0.0).unwrap(),
            TypeSpec::new(LinkKind::NoPressure, 1.0, 0.0, 0.0).unwrap(),
        ],
        vec![0.5, 0.5],
        1,
    )
    .unwrap()
}

/// The frequent-versus-infrequent instance of the regret study:
/// exponential pressure with one sensitive and one insensitive type.
pub fn regret_study_instance() -> Instance {
    Instance::new(
        vec![
            TypeSpec::new(LinkKind::Exponential, 0.25, 1.5, -1.5).unwrap(),
            TypeSpec::new(LinkKind::Exponential, 0.5, 0.05, -0.05).unwrap(),
        ],
        vec![0.5, 0.5],
        20,
    )
    .unwrap()
}

/// Random frequent-versus-infrequent two-type instance: type 1 has a low
/// baseline and strong pressure, type 2 a high baseline and weak
/// pressure, equal weights, threshold cap 20.
pub fn gen_two_type(rng: &mut StreamRng) -> Instance {
    gen_two_type_with_rho(rng, 0.5).expect("0.5 is a valid mixture weight")
}

/// As [`gen_two_type`] with mixture `(rho1, 1 - rho1)`.
pub fn gen_rho_sweep(rng: &mut StreamRng, rho1: f64) -> Result<Instance> {
    gen_two_type_with_rho(rng, rho1)
}

fn gen_two_type_with_rho(rng: &mut StreamRng, rho1: f64) -> Result<Instance> {
    if !(rho1 > 0.0 && rho1 < 1.0) {
        return Err(Error::OutOfRange(format!(
            "rho1 = {rho1} must lie strictly inside (0,1)"
        )));
    }
    let phi1 = rng.uniform_in(0.05, 0.25);
    let a1 = rng.uniform_in(1.0, 1.5);
    let b1 = rng.uniform_in(1.0, 1.5);
    let phi2 = rng.uniform_in(0.5, 0.75);
    let a2 = rng.uniform_in(0.0, 0.5);
    let b2 = rng.uniform_in(0.0, 0.5);
    Instance::new(
        vec![
            TypeSpec::new(LinkKind::Exponential, phi1, a1, -b1)?,
            TypeSpec::new(LinkKind::Exponential, phi2, a2, -b2)?,
        ],
        vec![rho1, 1.0 - rho1],
        20,
    )
}

/// `K` customer tiers ordered from least-frequent / most-sensitive to
/// most-frequent / least-sensitive, equal weights.
pub fn gen_k_tiers(rng: &mut StreamRng, k: u32) -> Result<Instance> {
    if k < 2 {
        return Err(Error::OutOfRange("tier generator needs k >= 2".into()));
    }
    let kf = k as f64;
    let mut types = Vec::with_capacity(k as usize);
    for tier in 0..k {
        let i = tier as f64;
        let phi = rng.uniform_in(i / kf, (i + 1.0) / kf);
        let alpha = rng.uniform_in(3.0 * (1.0 - i / kf), 3.0 * (1.0 - (i - 1.0) / kf));
        let beta = rng.uniform_in(3.0 * (1.0 - i / kf), 3.0 * (1.0 - (i - 1.0) / kf));
        types.push(TypeSpec::new(LinkKind::Exponential, phi, alpha, -beta)?);
    }
    Instance::new(types, vec![1.0 / kf; k as usize], 20)
}

/// Single-type instance for the misspecification study; the ground truth
/// uses `link`, while the policies always fit a linear model.
pub fn gen_misspec(rng: &mut StreamRng, link: LinkKind, phi_bar: f64) -> Instance {
    let alpha = rng.uniform_in(1.0, 1.5);
    let beta = rng.uniform_in(1.0, 1.5);
    Instance::new(
        vec![TypeSpec::new(link, phi_bar, alpha, -beta).expect("valid spec")],
        vec![1.0],
        20,
    )
    .expect("valid instance")
}

/// Which member of the lower-bound instance pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairMember {
    First,
    Second,
}

/// The two nearly indistinguishable single-type instances whose optimal
/// goals differ: `phi(tau) = 1/2 + b2 tau` on three states, with slopes
/// `sqrt((1 -+ delta)/8) - 1/2`.
pub fn gen_lower_bound_pair(delta: f64) -> Result<(Instance, Instance)> {
    if !(delta > 0.0 && delta <= 0.5) {
        return Err(Error::OutOfRange(format!(
            "delta = {delta} must lie in (0, 1/2]"
        )));
    }
    let build = |s: f64| -> Result<Instance> {
        Instance::new(
            vec![TypeSpec::new(LinkKind::Linear, s - 0.25, 0.75 - s, s - 0.5)?],
            vec![1.0],
            2,
        )
    };
    let first = build(((1.0 - delta) / 8.0).sqrt())?;
    let second = build(((1.0 + delta) / 8.0).sqrt())?;
    Ok((first, second))
}

/// Closed-form revenue gap `R(1) - R(2)` of a lower-bound pair member.
pub fn rev_gap_closed_form(delta: f64, which: PairMember) -> f64 {
    let sqrt2 = 2.0f64.sqrt();
    match which {
        PairMember::First => {
            let root = (1.0 - delta).sqrt();
            delta * root / (2.0 * (root + sqrt2) * ((2.0 - 2.0 * delta).sqrt() - delta))
        }
        PairMember::Second => {
            let root = (1.0 + delta).sqrt();
            -delta * root / (2.0 * (root + sqrt2) * (delta + (2.0 + 2.0 * delta).sqrt()))
        }
    }
}

/// Study selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StudyId {
    Pof,
    Rho,
    Ktier,
    Learning,
    Misspec,
}

impl StudyId {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "pof" => Ok(StudyId::Pof),
            "rho" => Ok(StudyId::Rho),
            "ktier" => Ok(StudyId::Ktier),
            "learning" => Ok(StudyId::Learning),
            "misspec" => Ok(StudyId::Misspec),
            other => Err(Error::InvalidConfig(format!("unknown study {other:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            StudyId::Pof => "pof",
            StudyId::Rho => "rho",
            StudyId::Ktier => "ktier",
            StudyId::Learning => "learning",
            StudyId::Misspec => "misspec",
        }
    }

    /// Replication count used by the corresponding study table.
    pub fn default_reps(self) -> u64 {
        match self {
            StudyId::Pof | StudyId::Rho | StudyId::Ktier => 10_000,
            StudyId::Learning => 100,
            StudyId::Misspec => 500,
        }
    }
}

/// Configuration of one study invocation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyConfig {
    pub study: StudyId,
    pub reps: u64,
    pub master_seed: u64,
    /// Horizons for the learning-type studies.
    pub horizons: Vec<u64>,
    pub m: u64,
    pub policies: Vec<PolicyConfig>,
    pub out_dir: PathBuf,
    /// Worker threads; 0 uses the default pool.
    pub jobs: usize,
}

impl StudyConfig {
    pub fn new(study: StudyId, out_dir: impl Into<PathBuf>) -> Self {
        let (horizons, m, policies) = match study {
            StudyId::Learning => (
                vec![5000],
                2,
                vec![
                    PolicyConfig::new(PolicyKind::Stable),
                    PolicyConfig::new(PolicyKind::Fair),
                ],
            ),
            StudyId::Misspec => {
                let mut stable = PolicyConfig::new(PolicyKind::Stable);
                stable.fit_link = Some(LinkKind::Linear);
                let mut fair = PolicyConfig::new(PolicyKind::Fair);
                fair.fit_link = Some(LinkKind::Linear);
                (vec![1000, 2000, 5000], 1, vec![stable, fair])
            }
            _ => (Vec::new(), 1, Vec::new()),
        };
        StudyConfig {
            study,
            reps: study.default_reps(),
            master_seed: 42,
            horizons,
            m,
            policies,
            out_dir: out_dir.into(),
            jobs: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.reps < 1 {
            return Err(Error::InvalidConfig("replication count must be >= 1".into()));
        }
        let needs_horizons = matches!(self.study, StudyId::Learning | StudyId::Misspec);
        if needs_horizons && self.horizons.is_empty() {
            return Err(Error::InvalidConfig("horizon list must be nonempty".into()));
        }
        Ok(())
    }
}

fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> T {
    if jobs == 0 {
        f()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .expect("thread pool")
            .install(f)
    }
}

fn write_text(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent.display().to_string(), e))?;
    }
    fs::write(path, content).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Outcome of one price-of-fairness replication.
#[derive(Debug, Clone, Serialize)]
pub struct PofRow {
    pub rep: u64,
    pub seed: u64,
    pub pof: f64,
    pub n_star: Threshold,
    pub n_star_personalized: Vec<Threshold>,
    pub r_pers: f64,
    pub r_nonpers: f64,
}

fn pof_row(rep: u64, seed: u64, instance: &Instance) -> Result<PofRow> {
    let shared = optimal_threshold(instance)?;
    let (pers, r_pers) = optimal_personalized(instance)?;
    Ok(PofRow {
        rep,
        seed,
        pof: r_pers / shared.value,
        n_star: shared.n,
        n_star_personalized: pers.iter().map(|c| c.n).collect(),
        r_pers,
        r_nonpers: shared.value,
    })
}

/// Price-of-fairness rows over `reps` two-type replications.
pub fn pof_rows(reps: u64, master_seed: u64, rho1: f64, jobs: usize) -> Result<Vec<PofRow>> {
    with_pool(jobs, || {
        (0..reps)
            .into_par_iter()
            .map(|rep| {
                let seed = master_seed.wrapping_add(rep);
                let mut rng = StreamRng::new(seed);
                let instance = gen_rho_sweep(&mut rng, rho1)?;
                pof_row(rep, seed, &instance)
            })
            .collect()
    })
}

/// Average price of fairness over `reps` tier instances for one `k`.
pub fn ktier_pofs(reps: u64, master_seed: u64, k: u32, jobs: usize) -> Result<Vec<f64>> {
    with_pool(jobs, || {
        (0..reps)
            .into_par_iter()
            .map(|rep| {
                let mut rng = StreamRng::new(master_seed.wrapping_add(rep));
                let instance = gen_k_tiers(&mut rng, k)?;
                price_of_fairness(&instance)
            })
            .collect()
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn max(v: &[f64]) -> f64 {
    v.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

/// Histogram with bin width 0.01 on `[1.0, 1.5]` (50 bins), so
/// distributions are comparable across runs.
pub fn pof_histogram(pofs: &[f64]) -> Vec<u64> {
    let mut bins = vec![0u64; 50];
    for &p in pofs {
        let idx = (((p - 1.0) / 0.01).floor() as isize).clamp(0, 49) as usize;
        bins[idx] += 1;
    }
    bins
}

/// Distributional price-of-fairness study over random two-type
/// instances; writes `pof/pof.csv` and `pof/summary.json`.
pub fn run_pof_study(config: &StudyConfig) -> Result<serde_json::Value> {
    config.validate()?;
    let rows = pof_rows(config.reps, config.master_seed, 0.5, config.jobs)?;
    let pofs: Vec<f64> = rows.iter().map(|r| r.pof).collect();

    let mut csv = String::from("# loyalty_lab.pof_rows.v1\n");
    csv.push_str("rep,seed,pof,n_star,n1_star,n2_star,r_pers,r_nonpers\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.rep,
            r.seed,
            r.pof,
            r.n_star,
            r.n_star_personalized[0],
            r.n_star_personalized[1],
            r.r_pers,
            r.r_nonpers
        ));
    }
    let dir = config.out_dir.join("pof");
    write_text(&dir.join("pof.csv"), &csv)?;

    let summary = json!({
        "schema": SUMMARY_SCHEMA,
        "study": "pof",
        "reps": config.reps,
        "master_seed": config.master_seed,
        "mean_pof": mean(&pofs),
        "max_pof": max(&pofs),
        "histogram_lo": 1.0,
        "histogram_bin_width": 0.01,
        "histogram": pof_histogram(&pofs),
    });
    write_text(&dir.join("summary.json"), &serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

/// Heterogeneity sweep over the type-1 fraction, common random numbers
/// across the grid; writes `rho/rho.csv` and `rho/summary.json`.
pub fn run_rho_study(config: &StudyConfig) -> Result<serde_json::Value> {
    config.validate()?;
    let grid: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
    let mut csv = String::from("# loyalty_lab.rho_rows.v1\nrho1,avg_pof,max_pof\n");
    let mut averages = Vec::new();
    let mut maxima = Vec::new();
    for &rho1 in &grid {
        let rows = pof_rows(config.reps, config.master_seed, rho1, config.jobs)?;
        let pofs: Vec<f64> = rows.iter().map(|r| r.pof).collect();
        averages.push(mean(&pofs));
        maxima.push(max(&pofs));
        csv.push_str(&format!("{},{},{}\n", rho1, mean(&pofs), max(&pofs)));
    }
    let dir = config.out_dir.join("rho");
    write_text(&dir.join("rho.csv"), &csv)?;
    let summary = json!({
        "schema": SUMMARY_SCHEMA,
        "study": "rho",
        "reps": config.reps,
        "master_seed": config.master_seed,
        "rho1": grid,
        "avg_pof": averages,
        "max_pof": maxima,
    });
    write_text(&dir.join("summary.json"), &serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

/// Tier-count sweep `K = 2..=10` with the theoretical bound alongside;
/// writes `ktier/ktier.csv` and `ktier/summary.json`.
pub fn run_ktier_study(config: &StudyConfig) -> Result<serde_json::Value> {
    config.validate()?;
    let ks: Vec<u32> = (2..=10).collect();
    let mut csv = String::from("# loyalty_lab.ktier_rows.v1\nk,avg_pof,theoretical_bound\n");
    let mut averages = Vec::new();
    let mut bounds = Vec::new();
    for &k in &ks {
        let pofs = ktier_pofs(config.reps, config.master_seed, k, config.jobs)?;
        let avg = mean(&pofs);
        let bound = crate::steady::pof_upper_bound(k);
        averages.push(avg);
        bounds.push(bound);
        csv.push_str(&format!("{k},{avg},{bound}\n"));
    }
    let dir = config.out_dir.join("ktier");
    write_text(&dir.join("ktier.csv"), &csv)?;
    let summary = json!({
        "schema": SUMMARY_SCHEMA,
        "study": "ktier",
        "reps": config.reps,
        "master_seed": config.master_seed,
        "k": ks,
        "avg_pof": averages,
        "theoretical_bound": bounds,
    });
    write_text(&dir.join("summary.json"), &serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

/// Runs `reps` seeded replications of one policy on one instance and
/// returns per-replication metrics plus cumulative regret at the given
/// checkpoints.
#[allow(clippy::too_many_arguments)]
pub fn run_learning_replications(
    config: &PolicyConfig,
    instance: &Instance,
    t_horizon: u64,
    m: u64,
    reps: u64,
    master_seed: u64,
    checkpoints: &[u64],
    jobs: usize,
) -> Result<Vec<(MetricsRow, Vec<f64>)>> {
    with_pool(jobs, || {
        (0..reps)
            .into_par_iter()
            .map(|rep| {
                let seed = master_seed.wrapping_add(rep);
                let mut policy = build_policy(config, instance, t_horizon, m)?;
                let run = simulate_policy(instance, policy.as_mut(), m, t_horizon, seed)?;
                let row = MetricsRow::evaluate(&run, instance, policy.name())?;
                let cps = regret_at_checkpoints(&run, instance, checkpoints)?;
                Ok((row, cps))
            })
            .collect()
    })
}

/// Power-of-two checkpoints `1, 2, 4, .., t` (with `t` included).
pub fn doubling_checkpoints(t: u64) -> Vec<u64> {
    let mut cps = Vec::new();
    let mut c = 1u64;
    while c < t {
        cps.push(c);
        c *= 2;
    }
    cps.push(t);
    cps
}

/// Regret and adaptivity study on the frequent-versus-infrequent
/// instance; writes `learning/metrics.csv`, `learning/regret_curve.csv`,
/// and `learning/summary.json`.
pub fn run_learning_study(config: &StudyConfig) -> Result<serde_json::Value> {
    config.validate()?;
    let instance = regret_study_instance();
    let t = *config.horizons.last().expect("validated nonempty");
    let checkpoints = doubling_checkpoints(t);

    let mut metrics_csv = MetricsRow::csv_header();
    metrics_csv.push('\n');
    let mut curve_csv = String::from("# loyalty_lab.regret_curve.v1\npolicy,t,mean_regret\n");
    let mut summary_policies = Vec::new();

    for pc in &config.policies {
        let results = run_learning_replications(
            pc,
            &instance,
            t,
            config.m,
            config.reps,
            config.master_seed,
            &checkpoints,
            config.jobs,
        )?;
        let name = results
            .first()
            .map(|(row, _)| row.policy.clone())
            .unwrap_or_else(|| "?".into());
        for (row, _) in &results {
            metrics_csv.push_str(&row.to_csv_row());
            metrics_csv.push('\n');
        }
        for (i, &cp) in checkpoints.iter().enumerate() {
            let avg = results.iter().map(|(_, c)| c[i]).sum::<f64>() / results.len() as f64;
            curve_csv.push_str(&format!("{name},{cp},{avg}\n"));
        }
        let n = results.len() as f64;
        summary_policies.push(json!({
            "policy": name,
            "mean_regret": results.iter().map(|(r, _)| r.regret).sum::<f64>() / n,
            "mean_obs_regret": results.iter().map(|(r, _)| r.obs_regret).sum::<f64>() / n,
            "mean_gamma": results.iter().map(|(r, _)| r.gamma).sum::<f64>() / n,
            "mean_changes": results.iter().map(|(r, _)| r.n_changes as f64).sum::<f64>() / n,
            "mean_increases": results.iter().map(|(r, _)| r.n_increases as f64).sum::<f64>() / n,
            "mean_rel_change": results.iter().map(|(r, _)| r.mean_rel_change).sum::<f64>() / n,
            "mean_rel_increase": results.iter().map(|(r, _)| r.mean_rel_increase).sum::<f64>() / n,
        }));
    }

    let dir = config.out_dir.join("learning");
    write_text(&dir.join("metrics.csv"), &metrics_csv)?;
    write_text(&dir.join("regret_curve.csv"), &curve_csv)?;
    let summary = json!({
        "schema": SUMMARY_SCHEMA,
        "study": "learning",
        "reps": config.reps,
        "master_seed": config.master_seed,
        "t": t,
        "m": config.m,
        "policies": summary_policies,
    });
    write_text(&dir.join("summary.json"), &serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

/// Mean performance ratio of one misspecification cell.
pub fn misspec_cell_gammas(
    truth: LinkKind,
    phi_bar: f64,
    t_horizon: u64,
    reps: u64,
    master_seed: u64,
    policy: PolicyKind,
    jobs: usize,
) -> Result<Vec<f64>> {
    let mut config = PolicyConfig::new(policy);
    config.fit_link = Some(LinkKind::Linear);
    with_pool(jobs, || {
        (0..reps)
            .into_par_iter()
            .map(|rep| {
                let seed = master_seed.wrapping_add(rep);
                let mut rng = StreamRng::new(seed);
                let instance = gen_misspec(&mut rng, truth, phi_bar);
                let mut built = build_policy(&config, &instance, t_horizon, 1)?;
                let run = simulate_policy(&instance, built.as_mut(), 1, t_horizon, seed)?;
                crate::metrics::performance_ratio(&run, &instance)
            })
            .collect()
    })
}

/// Robustness-to-misspecification study: three ground truths, three
/// baselines, the configured horizons, always fitting the linear model.
/// Writes `misspec/misspec.csv` and `misspec/summary.json`.
pub fn run_misspec_study(config: &StudyConfig) -> Result<serde_json::Value> {
    config.validate()?;
    let truths = [LinkKind::Linear, LinkKind::Exponential, LinkKind::Logit];
    let phis = [0.05, 0.15, 0.25];
    let mut csv = String::from("# loyalty_lab.misspec_rows.v1\ntruth,phi_bar,t,policy,mean_gamma\n");
    let mut cells = Vec::new();
    for pc in &config.policies {
        for &truth in &truths {
            for &phi in &phis {
                for &t in &config.horizons {
                    let gammas = misspec_cell_gammas(
                        truth,
                        phi,
                        t,
                        config.reps,
                        config.master_seed,
                        pc.policy,
                        config.jobs,
                    )?;
                    let avg = mean(&gammas);
                    let truth_name = serde_json::to_value(truth)?;
                    let policy_name = serde_json::to_value(pc.policy)?;
                    csv.push_str(&format!(
                        "{},{},{},{},{}\n",
                        truth_name.as_str().unwrap(),
                        phi,
                        t,
                        policy_name.as_str().unwrap(),
                        avg
                    ));
                    cells.push(json!({
                        "truth": truth,
                        "phi_bar": phi,
                        "t": t,
                        "policy": pc.policy,
                        "mean_gamma": avg,
                    }));
                }
            }
        }
    }
    let dir = config.out_dir.join("misspec");
    write_text(&dir.join("misspec.csv"), &csv)?;
    let summary = json!({
        "schema": SUMMARY_SCHEMA,
        "study": "misspec",
        "reps": config.reps,
        "master_seed": config.master_seed,
        "cells": cells,
    });
    write_text(&dir.join("summary.json"), &serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

/// Dispatches a study by id.
pub fn run_study(config: &StudyConfig) -> Result<serde_json::Value> {
    match config.study {
        StudyId::Pof => run_pof_study(config),
        StudyId::Rho => run_rho_study(config),
        StudyId::Ktier => run_ktier_study(config),
        StudyId::Learning => run_learning_study(config),
        StudyId::Misspec => run_misspec_study(config),
    }
}
