//! Command-line front door: instance I/O, single computations, policy
//! runs, and the study drivers.
//!
//! Exit codes: 0 on success, 1 on validation errors (bad inputs, bad
//! configuration), 2 on I/O errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use loyalty_lab::error::Error;
use loyalty_lab::estimation::{fit_mle, SampleSet};
use loyalty_lab::experiments::{
    gen_lower_bound_pair, regret_study_instance, rev_gap_closed_form, run_study, PairMember,
    StudyConfig, StudyId,
};
use loyalty_lab::metrics::MetricsRow;
use loyalty_lab::model::{validate_instance, Instance, LinkKind};
use loyalty_lab::policies::{build_policy, MleWindow, PolicyConfig, PolicyKind, ScheduleMode};
use loyalty_lab::sim::{simulate_fixed, simulate_policy};
use loyalty_lab::steady::{
    long_run_revenue_type_with, mixture_revenue, optimal_personalized, optimal_threshold,
    pof_upper_bound, price_of_fairness, tmix_upper_bound, Threshold,
};

#[derive(Parser)]
#[command(
    name = "loyalty-lab",
    about = "Markov-chain analytics and learning policies for Buy-N-Get-One-Free rewards programs",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct InstanceArg {
    /// Path to an instance JSON file.
    #[arg(long)]
    instance: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Price of fairness and the optimal goals of an instance.
    Pof(InstanceArg),
    /// Steady-state analytics: revenue table and optimal goals.
    Optimize(InstanceArg),
    /// Simulate a fixed goal and write the run CSV plus epoch log.
    Simulate {
        #[arg(long)]
        instance: PathBuf,
        /// Redemption goal: an integer or "inf".
        #[arg(long, default_value = "inf")]
        n: String,
        #[arg(long, default_value_t = 1000)]
        t: u64,
        #[arg(long, default_value_t = 1)]
        m: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory for run.csv and epoch_log.json.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Fit per-type GLM parameters from a CSV of (type, tau, x) samples.
    Fit {
        /// Sample CSV; lines `type,tau,x` (header lines ignored).
        #[arg(long)]
        input: PathBuf,
        /// Instance supplying per-type links, baselines, and boxes.
        #[arg(long)]
        instance: Option<PathBuf>,
        /// Link for every type when no instance is given.
        #[arg(long)]
        link: Option<String>,
        /// Known baseline for every type when no instance is given.
        #[arg(long)]
        baseline: Option<f64>,
    },
    /// Run a learning policy end to end and print its metrics row.
    Learn {
        /// Instance JSON; defaults to the two-type regret-study instance.
        #[arg(long)]
        instance: Option<PathBuf>,
        /// stable | fair | oracle | fixed | none
        #[arg(long, default_value = "stable")]
        policy: String,
        #[arg(long, default_value = "practical")]
        schedule: String,
        #[arg(long, default_value_t = 5000)]
        t: u64,
        #[arg(long, default_value_t = 2)]
        m: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Initial goal (stable) or constant goal (fixed).
        #[arg(long)]
        n1: Option<u32>,
        /// Margin scale of the practical schedule.
        #[arg(long)]
        delta_c: Option<f64>,
        /// MLE window: pooled | epoch.
        #[arg(long)]
        mle_window: Option<String>,
        /// Fit link override: none | linear | exp | logit.
        #[arg(long)]
        fit_link: Option<String>,
        /// Directory to also write run.csv and epoch_log.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a named study: pof | rho | ktier | learning | misspec.
    Study {
        #[arg(long)]
        name: String,
        #[arg(long, default_value = "studies")]
        out: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Replications; defaults to the study's reference count.
        #[arg(long)]
        reps: Option<u64>,
        /// Worker threads (0 = default pool).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Emit the lower-bound instance pair and its revenue gaps.
    Lbpair {
        #[arg(long, default_value_t = 0.3)]
        delta: f64,
    },
    /// Print the price-of-fairness and mixing-time bounds.
    Bounds {
        #[arg(long, default_value_t = 2)]
        k: u32,
        #[arg(long)]
        n_max: Option<u32>,
        #[arg(long)]
        mu_min: Option<f64>,
        #[arg(long)]
        mu_max: Option<f64>,
    },
}

fn verbose() -> bool {
    std::env::var("LOYALTY_LAB_LOG").is_ok_and(|v| !v.is_empty())
}

fn read_instance(path: &Path) -> Result<Instance, Error> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Instance::from_json(&text)
}

fn write_file(path: &Path, content: &str) -> Result<(), Error> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent.display().to_string(), e))?;
        }
    }
    fs::write(path, content).map_err(|e| Error::io(path.display().to_string(), e))
}

fn parse_threshold(s: &str) -> Result<Threshold, Error> {
    if s == "inf" {
        Ok(Threshold::Infinite)
    } else {
        s.parse::<u32>()
            .map(Threshold::Finite)
            .map_err(|_| Error::InvalidConfig(format!("bad threshold {s:?}")))
    }
}

fn parse_link(s: &str) -> Result<LinkKind, Error> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| Error::InvalidConfig(format!("unknown link {s:?}")))
}

fn parse_policy(s: &str) -> Result<PolicyKind, Error> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| Error::InvalidConfig(format!("unknown policy {s:?}")))
}

fn parse_schedule(s: &str) -> Result<ScheduleMode, Error> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| Error::InvalidConfig(format!("unknown schedule {s:?}")))
}

fn parse_window(s: &str) -> Result<MleWindow, Error> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| Error::InvalidConfig(format!("unknown mle window {s:?}")))
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Pof(arg) => {
            let instance = read_instance(&arg.instance)?;
            let shared = optimal_threshold(&instance)?;
            let (pers, r_pers) = optimal_personalized(&instance)?;
            let pof = price_of_fairness(&instance)?;
            let doc = json!({
                "pof": pof,
                "n_star": shared.n,
                "n_star_personalized": pers.iter().map(|c| c.n).collect::<Vec<_>>(),
                "r_pers": r_pers,
                "r_nonpers": shared.value,
            });
            println!("{}", serde_json::to_string_pretty(&doc)?);
        }
        Command::Optimize(arg) => {
            let instance = read_instance(&arg.instance)?;
            let shared = optimal_threshold(&instance)?;
            let (pers, r_pers) = optimal_personalized(&instance)?;
            let report = validate_instance(&instance)?;
            let table: Vec<f64> = (1..=instance.n_max)
                .map(|n| mixture_revenue(&instance, Threshold::Finite(n)))
                .collect::<Result<_, _>>()?;
            let doc = json!({
                "n_star": shared.n,
                "value": shared.value,
                "no_loyalty_revenue": instance.no_loyalty_revenue(),
                "revenue_by_threshold": table,
                "personalized": pers,
                "personalized_value": r_pers,
                "regularity": report,
            });
            println!("{}", serde_json::to_string_pretty(&doc)?);
        }
        Command::Simulate {
            instance,
            n,
            t,
            m,
            seed,
            out,
        } => {
            let instance = read_instance(&instance)?;
            let goal = parse_threshold(&n)?;
            let run = simulate_fixed(&instance, goal, m, t, seed)?;
            write_file(&out.join("run.csv"), &run.to_csv())?;
            write_file(&out.join("epoch_log.json"), &run.epoch_log_json())?;
            let doc = json!({
                "observed_revenue_rate": run.observed_revenue_rate(),
                "closed_form_rate": mixture_revenue(&instance, goal)?,
                "out": out.display().to_string(),
            });
            println!("{}", serde_json::to_string_pretty(&doc)?);
        }
        Command::Fit {
            input,
            instance,
            link,
            baseline,
        } => {
            let text =
                fs::read_to_string(&input).map_err(|e| Error::io(input.display().to_string(), e))?;
            let mut sets: Vec<SampleSet> = Vec::new();
            for line in text.lines() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let fields: Vec<&str> = line.split(',').map(str::trim).collect();
                if fields.len() != 3 {
                    return Err(Error::InvalidConfig(format!("bad sample line {line:?}")));
                }
                let Ok(type_id) = fields[0].parse::<usize>() else {
                    continue; // header line
                };
                let tau: u32 = fields[1]
                    .parse()
                    .map_err(|_| Error::InvalidConfig(format!("bad tau in {line:?}")))?;
                let x: u8 = fields[2]
                    .parse()
                    .map_err(|_| Error::InvalidConfig(format!("bad x in {line:?}")))?;
                while sets.len() <= type_id {
                    sets.push(SampleSet::new());
                }
                sets[type_id].push(tau, x != 0);
            }
            let shapes: Vec<(LinkKind, f64, loyalty_lab::model::ParamBox)> = match instance {
                Some(path) => {
                    let inst = read_instance(&path)?;
                    inst.types
                        .iter()
                        .map(|t| (t.link, t.baseline, t.param_box))
                        .collect()
                }
                None => {
                    let link = parse_link(&link.unwrap_or_else(|| "linear".into()))?;
                    let baseline = baseline.ok_or_else(|| {
                        Error::InvalidConfig("--baseline is required without --instance".into())
                    })?;
                    vec![(link, baseline, Default::default()); sets.len()]
                }
            };
            let mut betas = Vec::new();
            for (k, samples) in sets.iter().enumerate() {
                if samples.is_empty() {
                    continue;
                }
                let (link, base, pbox) = shapes.get(k).ok_or_else(|| {
                    Error::InvalidConfig(format!("sample type {k} outside the instance"))
                })?;
                let fit = fit_mle(samples, *link, *base, pbox, true)?;
                betas.push(json!({
                    "type": k,
                    "b1": fit.b1,
                    "b2": fit.b2,
                    "converged": fit.converged,
                    "ridged": fit.ridged,
                    "samples": samples.len(),
                }));
            }
            let doc = json!({ "schema": "loyalty_lab.fit.v1", "betas": betas });
            println!("{}", serde_json::to_string_pretty(&doc)?);
        }
        Command::Learn {
            instance,
            policy,
            schedule,
            t,
            m,
            seed,
            n1,
            delta_c,
            mle_window,
            fit_link,
            out,
        } => {
            let instance = match instance {
                Some(path) => read_instance(&path)?,
                None => regret_study_instance(),
            };
            let mut config = PolicyConfig::new(parse_policy(&policy)?);
            config.schedule = parse_schedule(&schedule)?;
            config.n1 = n1;
            config.delta_c = delta_c;
            config.mle_window = mle_window.as_deref().map(parse_window).transpose()?;
            config.fit_link = fit_link.as_deref().map(parse_link).transpose()?;
            let mut built = build_policy(&config, &instance, t, m)?;
            if verbose() {
                eprintln!("learn: policy={} t={t} m={m} seed={seed}", built.name());
            }
            let record = simulate_policy(&instance, built.as_mut(), m, t, seed)?;
            let row = MetricsRow::evaluate(&record, &instance, built.name())?;
            if let Some(dir) = out {
                write_file(&dir.join("run.csv"), &record.to_csv())?;
                write_file(&dir.join("epoch_log.json"), &record.epoch_log_json())?;
            }
            println!("{}", MetricsRow::csv_header());
            println!("{}", row.to_csv_row());
        }
        Command::Study {
            name,
            out,
            seed,
            reps,
            jobs,
        } => {
            let study = StudyId::parse(&name)?;
            let mut config = StudyConfig::new(study, out);
            config.master_seed = seed;
            config.jobs = jobs;
            if let Some(r) = reps {
                config.reps = r;
            }
            if verbose() {
                eprintln!("study {}: reps={} seed={seed}", study.name(), config.reps);
            }
            let summary = run_study(&config)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Lbpair { delta } => {
            let (first, second) = gen_lower_bound_pair(delta)?;
            let gap = |inst: &Instance| -> Result<(f64, f64), Error> {
                let spec = &inst.types[0];
                Ok((
                    long_run_revenue_type_with(spec, Threshold::Finite(1), true)?,
                    long_run_revenue_type_with(spec, Threshold::Finite(2), true)?,
                ))
            };
            let (r1a, r2a) = gap(&first)?;
            let (r1b, r2b) = gap(&second)?;
            let doc = json!({
                "delta": delta,
                "first": { "instance": first, "r1": r1a, "r2": r2a,
                           "gap_closed_form": rev_gap_closed_form(delta, PairMember::First) },
                "second": { "instance": second, "r1": r1b, "r2": r2b,
                            "gap_closed_form": rev_gap_closed_form(delta, PairMember::Second) },
            });
            println!("{}", serde_json::to_string_pretty(&doc)?);
        }
        Command::Bounds {
            k,
            n_max,
            mu_min,
            mu_max,
        } => {
            let mut doc = json!({ "k": k, "pof_upper_bound": pof_upper_bound(k) });
            if let (Some(n), Some(lo), Some(hi)) = (n_max, mu_min, mu_max) {
                doc["tmix_upper_bound"] = json!(tmix_upper_bound(n, lo, hi));
            }
            println!("{}", serde_json::to_string_pretty(&doc)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version requests are successes; anything else is a
            // usage problem and exits 1.
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::Io { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
