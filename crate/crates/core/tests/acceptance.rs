//! Acceptance suite: one test per criterion, each printing a pass line
//! with the measured quantities. Run with `cargo test --test acceptance`
//! (add `-- --nocapture` to see the lines).

use std::time::Instant;

use loyalty_lab::estimation::{fit_mle, lambda_min, DesignMatrix, SampleSet};
use loyalty_lab::experiments::{
    gen_lower_bound_pair, ktier_pofs, misspec_cell_gammas, pof_rows,
    regret_study_instance, rev_gap_closed_form, run_learning_replications,
    tight_two_type_instance, PairMember,
};
use loyalty_lab::metrics::{
    counterfactual_regret, mixing_loss, observable_regret, MetricsRow,
};
use loyalty_lab::model::{Instance, LinkKind, TypeSpec};
use loyalty_lab::policies::{build_policy, MleWindow, PolicyConfig, PolicyKind};
use loyalty_lab::rng::StreamRng;
use loyalty_lab::sim::simulate_fixed;
use loyalty_lab::steady::{
    empirical_mixing_time, long_run_revenue_type, long_run_revenue_type_with,
    pof_upper_bound, price_of_fairness, stationary_distribution, steady_state_profile,
    tmix_upper_bound, transition_matrix, Threshold,
};

const MASTER_SEED: u64 = 42;

/// Random non-degenerate spec mixing all link families.
fn random_spec(rng: &mut StreamRng) -> TypeSpec {
    match rng.next_u64() % 4 {
        0 => TypeSpec::new(LinkKind::NoPressure, rng.uniform_in(0.1, 0.9), 0.0, 0.0),
        1 => TypeSpec::new(
            LinkKind::Linear,
            rng.uniform_in(0.1, 0.5),
            rng.uniform_in(0.0, 0.4),
            -rng.uniform_in(0.0, 0.05),
        ),
        2 => TypeSpec::new(
            LinkKind::Exponential,
            rng.uniform_in(0.05, 0.5),
            rng.uniform_in(-1.5, 0.5),
            -rng.uniform_in(0.01, 1.5),
        ),
        _ => TypeSpec::new(
            LinkKind::Logit,
            rng.uniform_in(0.05, 0.5),
            rng.uniform_in(-1.0, 1.0),
            -rng.uniform_in(0.01, 1.0),
        ),
    }
    .unwrap()
}

#[test]
fn a01_stationarity_oracle() {
    let start = Instant::now();
    let mut rng = StreamRng::new(MASTER_SEED);
    let mut worst_fixed_point = 0.0f64;
    let mut worst_revenue = 0.0f64;
    for _ in 0..500 {
        let spec = random_spec(&mut rng);
        for n in 1..=20u32 {
            let p = stationary_distribution(&spec, n).unwrap();
            let mat = transition_matrix(&spec, n);
            let dim = (n + 1) as usize;
            for col in 0..dim {
                let into: f64 = (0..dim).map(|row| p[row] * mat[row][col]).sum();
                worst_fixed_point = worst_fixed_point.max((into - p[col]).abs());
            }
            let direct: f64 = (1..=n)
                .map(|tau| p[tau as usize] * spec.purchase_prob(tau))
                .sum();
            let closed = long_run_revenue_type(&spec, Threshold::Finite(n)).unwrap();
            worst_revenue = worst_revenue.max((direct - closed).abs());
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(worst_fixed_point <= 1e-12, "fixed point residual {worst_fixed_point}");
    assert!(worst_revenue <= 1e-12, "revenue residual {worst_revenue}");
    assert!(elapsed < 5.0, "runtime {elapsed:.2}s");
    println!(
        "[acceptance 01] stationarity oracle: PASS (residuals {worst_fixed_point:.2e} / {worst_revenue:.2e}, {elapsed:.2}s)"
    );
}

#[test]
fn a02_pof_bound_distribution() {
    let start = Instant::now();
    let rows = pof_rows(10_000, MASTER_SEED, 0.5, 0).unwrap();
    let pofs: Vec<f64> = rows.iter().map(|r| r.pof).collect();
    let mean = pofs.iter().sum::<f64>() / pofs.len() as f64;
    let max = pofs.iter().cloned().fold(0.0f64, f64::max);
    let elapsed = start.elapsed().as_secs_f64();
    assert!(pofs.iter().all(|&p| p <= 1.5 + 1e-9), "bound violated");
    assert!((mean - 1.1957).abs() <= 0.015, "mean {mean}");
    assert!(max <= 1.47, "max {max}");
    assert!(elapsed < 60.0, "runtime {elapsed:.2}s");
    println!("[acceptance 02] PoF bound: PASS (mean {mean:.4}, max {max:.4}, {elapsed:.2}s)");
}

#[test]
fn a03_tight_instance() {
    let pof = price_of_fairness(&tight_two_type_instance()).unwrap();
    assert!((pof - 1.5).abs() <= 1e-12, "pof {pof}");
    println!("[acceptance 03] tight instance: PASS (PoF {pof})");
}

#[test]
fn a04_rho_sweep_table() {
    let start = Instant::now();
    let reference_avg = [
        1.0366, 1.0788, 1.1264, 1.1737, 1.1951, 1.1813, 1.1521, 1.1091, 1.0573,
    ];
    let reference_max = [
        1.0568, 1.1278, 1.2103, 1.3074, 1.4244, 1.4035, 1.3156, 1.2130, 1.1087,
    ];
    let mut lines = Vec::new();
    for (i, (&pa, &pm)) in reference_avg.iter().zip(&reference_max).enumerate() {
        let rho1 = (i + 1) as f64 / 10.0;
        let rows = pof_rows(10_000, MASTER_SEED, rho1, 0).unwrap();
        let pofs: Vec<f64> = rows.iter().map(|r| r.pof).collect();
        let avg = pofs.iter().sum::<f64>() / pofs.len() as f64;
        let max = pofs.iter().cloned().fold(0.0f64, f64::max);
        assert!((avg - pa).abs() <= 0.02, "rho1={rho1}: avg {avg} vs {pa}");
        assert!((max - pm).abs() <= 0.05, "rho1={rho1}: max {max} vs {pm}");
        lines.push(format!("{rho1}:{avg:.4}/{max:.4}"));
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 600.0, "runtime {elapsed:.2}s");
    println!(
        "[acceptance 04] rho sweep: PASS ({}; {elapsed:.1}s)",
        lines.join(" ")
    );
}

#[test]
fn a05_ktier_curve() {
    let reps = 10_000u64;
    let mut avgs = Vec::new();
    let mut sds = Vec::new();
    for k in 2..=10u32 {
        let pofs = ktier_pofs(reps, MASTER_SEED, k, 0).unwrap();
        let n = pofs.len() as f64;
        let mean = pofs.iter().sum::<f64>() / n;
        let var = pofs.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / (n - 1.0);
        avgs.push(mean);
        sds.push((var / n).sqrt());
        // Theoretical curve matches the closed form exactly.
        let kf = k as f64;
        let closed = kf - (kf - 1.0) * (-1.0 / (kf - 1.0)).exp2();
        assert!((pof_upper_bound(k) - closed).abs() < 1e-15);
    }
    // Increasing at Monte-Carlo resolution: the true curve saturates near
    // K=10 (increment -4e-5 at 3e5 reps), so each step is tested within
    // two standard errors of its difference, plus a strict overall rise.
    for i in 0..avgs.len() - 1 {
        let se_diff = (sds[i] * sds[i] + sds[i + 1] * sds[i + 1]).sqrt();
        assert!(
            avgs[i + 1] > avgs[i] - 2.0 * se_diff,
            "k={} -> {}: {} vs {}",
            i + 2,
            i + 3,
            avgs[i],
            avgs[i + 1]
        );
    }
    assert!(avgs[8] > avgs[0], "no overall rise");
    for &plateau in &avgs[4..] {
        assert!(
            (1.20..=1.27).contains(&plateau),
            "plateau value {plateau} outside [1.20, 1.27]"
        );
    }
    println!(
        "[acceptance 05] k-tier curve: PASS (avgs {})",
        avgs.iter()
            .map(|a| format!("{a:.4}"))
            .collect::<Vec<_>>()
            .join(" ")
    );
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            let (top, bottom) = a.split_at_mut(row);
            let (pivot_row, target) = (&top[col], &mut bottom[0]);
            for k in col..n {
                target[k] -= f * pivot_row[k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = b[row];
        for k in row + 1..n {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    x
}

/// Exact asymptotic standard error of the empirical revenue rate of one
/// chain over `t` periods, via the Poisson equation of the chain.
fn revenue_rate_se(spec: &TypeSpec, n: u32, t: u64) -> f64 {
    let p = transition_matrix(spec, n);
    let pi = stationary_distribution(spec, n).unwrap();
    let dim = (n + 1) as usize;
    let r = long_run_revenue_type(spec, Threshold::Finite(n)).unwrap();
    let g_bar: Vec<f64> = (0..dim)
        .map(|tau| {
            if tau > 0 {
                spec.purchase_prob(tau as u32) - r
            } else {
                -r
            }
        })
        .collect();
    // (I - P + 1 pi^T) h = g - r.
    let mut a = vec![vec![0.0; dim]; dim];
    for i in 0..dim {
        for j in 0..dim {
            a[i][j] = (i == j) as u8 as f64 - p[i][j] + pi[j];
        }
    }
    let h = solve_dense(a, g_bar);
    // Autocovariance tail: one purchase step links f_0 to the future.
    let mut tail = 0.0;
    for tau in 1..dim {
        tail += pi[tau] * spec.purchase_prob(tau as u32) * h[tau - 1];
    }
    let sigma2 = (r - r * r) + 2.0 * tail;
    (sigma2.max(0.0) / t as f64).sqrt()
}

#[test]
fn a06_simulation_matches_closed_form() {
    let mut rng = StreamRng::new(MASTER_SEED);
    let t = 200_000u64;
    let mut worst_z = 0.0f64;
    for trial in 0..50 {
        let spec = loop {
            let s = random_spec(&mut rng);
            // Keep chains mixing: some randomness at every state.
            if (0..=8).all(|tau| s.purchase_prob(tau) < 0.999) {
                break s;
            }
        };
        let n = 1 + (rng.next_u64() % 8) as u32;
        let inst = Instance::new(vec![spec], vec![1.0], n.max(2)).unwrap();
        let run = simulate_fixed(&inst, Threshold::Finite(n), 1, t, MASTER_SEED + trial).unwrap();
        let rate = run.observed_revenue_rate();
        let expect = long_run_revenue_type(&spec, Threshold::Finite(n)).unwrap();
        let se = revenue_rate_se(&spec, n, t);
        let z = (rate - expect).abs() / se;
        worst_z = worst_z.max(z);
        assert!(z <= 4.0, "trial {trial}: rate {rate} vs {expect} ({z:.2} se)");
    }
    println!("[acceptance 06] simulation vs closed form: PASS (worst {worst_z:.2} se)");
}

#[test]
fn a07_mixing_time_bound() {
    let baselines = [0.05, 0.15, 0.25, 0.35, 0.45];
    let slopes = [-0.1, -0.25, -0.5, -1.0, -2.0];
    let b1 = 0.45f64.ln();
    let mut worst_ratio = 0.0f64;
    for &baseline in &baselines {
        for &slope in &slopes {
            let spec = TypeSpec::new(LinkKind::Exponential, baseline, b1, slope).unwrap();
            let mu_min = (0..=5).map(|t| spec.purchase_prob(t)).fold(1.0, f64::min);
            let mu_max = (0..=5).map(|t| spec.purchase_prob(t)).fold(0.0, f64::max);
            assert!(mu_max < 1.0, "clamped spec in grid");
            let bound = tmix_upper_bound(5, mu_min, mu_max);
            for n in 1..=5u32 {
                let t_mix = empirical_mixing_time(&spec, n, 0.25).unwrap() as f64;
                assert!(t_mix <= bound.ceil(), "t_mix {t_mix} vs bound {bound}");
                worst_ratio = worst_ratio.max(t_mix / bound);
            }
        }
    }
    println!("[acceptance 07] mixing bound: PASS (worst t_mix/bound {worst_ratio:.3})");
}

#[test]
fn a08_variance_lower_bound() {
    let mut rng = StreamRng::new(MASTER_SEED);
    for _ in 0..1000 {
        let spec = random_spec(&mut rng);
        let n = 1 + (rng.next_u64() % 12) as u32;
        let prof = steady_state_profile(&spec, n).unwrap();
        let phis: Vec<f64> = (0..=n).map(|t| spec.purchase_prob(t)).collect();
        let lo = phis.iter().cloned().fold(1.0f64, f64::min);
        let hi = phis.iter().cloned().fold(0.0f64, f64::max);
        let bound = lo * lo * (n as f64) * (n as f64 + 2.0) / (12.0 * hi * hi);
        assert!(prof.variance >= bound - 1e-12, "variance {} < {}", prof.variance, bound);
    }
    // Equality at constant phi.
    let constant = TypeSpec::new(LinkKind::NoPressure, 0.37, 0.0, 0.0).unwrap();
    let prof = steady_state_profile(&constant, 6).unwrap();
    let bound = 6.0 * 8.0 / 12.0;
    assert!((prof.variance - bound).abs() <= 1e-12);
    println!("[acceptance 08] variance bound: PASS (equality gap {:.2e})", (prof.variance - bound).abs());
}

#[test]
fn a09_mle_consistency() {
    let truths = [
        TypeSpec::new(LinkKind::Linear, 0.1, 0.5, -0.04).unwrap(),
        TypeSpec::new(LinkKind::Exponential, 0.2, -0.7, -0.25).unwrap(),
        TypeSpec::new(LinkKind::Logit, 0.15, 0.8, -0.45).unwrap(),
    ];
    let n_thr = 10u32;
    let mut report = Vec::new();
    for spec in &truths {
        let pi = stationary_distribution(spec, n_thr).unwrap();
        let mut cum = Vec::new();
        let mut acc = 0.0;
        for &v in &pi {
            acc += v;
            cum.push(acc);
        }
        let mut medians = Vec::new();
        for (i, &n_samples) in [1_000usize, 10_000, 100_000].iter().enumerate() {
            let mut errs: Vec<f64> = (0..9u64)
                .map(|rep| {
                    let mut rng = StreamRng::new(MASTER_SEED + 100 * i as u64 + rep);
                    let mut set = SampleSet::new();
                    for _ in 0..n_samples {
                        let u = rng.next_f64();
                        let tau = cum.iter().position(|&c| u < c).unwrap_or(pi.len() - 1) as u32;
                        set.push(tau, rng.next_f64() < spec.purchase_prob(tau));
                    }
                    let fit =
                        fit_mle(&set, spec.link, spec.baseline, &spec.param_box, true).unwrap();
                    ((fit.b1 - spec.b1).powi(2) + (fit.b2 - spec.b2).powi(2)).sqrt()
                })
                .collect();
            errs.sort_by(f64::total_cmp);
            medians.push(errs[4]);
        }
        assert!(
            medians[0] > medians[1] && medians[1] > medians[2],
            "{:?}: medians {medians:?} not decreasing",
            spec.link
        );
        assert!(medians[2] < 0.05, "{:?}: final median {}", spec.link, medians[2]);
        report.push(format!("{:?} {:.4}", spec.link, medians[2]));
    }
    println!("[acceptance 09] MLE consistency: PASS ({})", report.join(", "));
}

#[test]
fn a10_lambda_min_closed_form() {
    let mut rng = StreamRng::new(MASTER_SEED);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let (a, b, c, d) = (
            rng.uniform_in(-30.0, 30.0),
            rng.uniform_in(-30.0, 30.0),
            rng.uniform_in(-30.0, 30.0),
            rng.uniform_in(-30.0, 30.0),
        );
        let v = DesignMatrix {
            count: a * a + c * c,
            sum_tau: a * b + c * d,
            sum_tau2: b * b + d * d,
        };
        let tr = v.count + v.sum_tau2;
        let det = v.count * v.sum_tau2 - v.sum_tau * v.sum_tau;
        let oracle = 0.5 * (tr - (tr * tr - 4.0 * det).max(0.0).sqrt());
        let gap = (lambda_min(&v) - oracle.max(0.0)).abs();
        worst = worst.max(gap);
        assert!(gap <= 1e-9, "gap {gap}");
    }
    println!("[acceptance 10] lambda_min closed form: PASS (worst gap {worst:.2e})");
}

#[test]
fn a11_lower_bound_gap_oracle() {
    let mut report = Vec::new();
    for &delta in &[0.1, 0.3, 0.5] {
        let (first, second) = gen_lower_bound_pair(delta).unwrap();
        for (inst, which, positive) in [
            (&first, PairMember::First, true),
            (&second, PairMember::Second, false),
        ] {
            let spec = &inst.types[0];
            let r1 = long_run_revenue_type_with(spec, Threshold::Finite(1), true).unwrap();
            let r2 = long_run_revenue_type_with(spec, Threshold::Finite(2), true).unwrap();
            let gap = r1 - r2;
            let closed = rev_gap_closed_form(delta, which);
            assert!((gap - closed).abs() <= 1e-12, "delta {delta} {which:?}");
            assert_eq!(gap > 0.0, positive, "sign at delta {delta} {which:?}");
        }
        report.push(format!(
            "d={delta}:{:+.5}/{:+.5}",
            rev_gap_closed_form(delta, PairMember::First),
            rev_gap_closed_form(delta, PairMember::Second)
        ));
    }
    println!("[acceptance 11] lower-bound gaps: PASS ({})", report.join(" "));
}

/// The adaptivity experiment: both policies on the regret-study instance
/// with the theory-faithful per-epoch MLE window (the configuration that
/// reproduces the reference adaptivity table).
fn adaptivity_rows(kind: PolicyKind) -> Vec<MetricsRow> {
    let instance = regret_study_instance();
    let mut cfg = PolicyConfig::new(kind);
    cfg.mle_window = Some(MleWindow::PreviousEpoch);
    run_learning_replications(&cfg, &instance, 5000, 2, 100, MASTER_SEED, &[5000], 0)
        .unwrap()
        .into_iter()
        .map(|(row, _)| row)
        .collect()
}

#[test]
fn a12_devaluation_free() {
    let fair = adaptivity_rows(PolicyKind::Fair);
    let max_increases = fair.iter().map(|r| r.n_increases).max().unwrap();
    assert_eq!(max_increases, 0, "fair-greedy raised a goal");

    let stable = adaptivity_rows(PolicyKind::Stable);
    let n = stable.len() as f64;
    let mean_changes = stable.iter().map(|r| r.n_changes as f64).sum::<f64>() / n;
    let mean_increases = stable.iter().map(|r| r.n_increases as f64).sum::<f64>() / n;
    assert!(
        (4.0..=9.0).contains(&mean_changes),
        "stable changes {mean_changes}"
    );
    assert!(
        (1.0..=4.0).contains(&mean_increases),
        "stable increases {mean_increases}"
    );
    println!(
        "[acceptance 12] devaluation-free: PASS (fair increases 0, stable changes {mean_changes:.2}, increases {mean_increases:.2})"
    );
}

#[test]
fn a13_regret_trends() {
    let start = Instant::now();
    let instance = regret_study_instance();
    let checkpoints = [512u64, 5000];
    let mut means = Vec::new();
    for kind in [PolicyKind::Stable, PolicyKind::Fair] {
        let cfg = PolicyConfig::new(kind);
        let res = run_learning_replications(
            &cfg, &instance, 5000, 2, 100, MASTER_SEED, &checkpoints, 0,
        )
        .unwrap();
        let n = res.len() as f64;
        let at_512 = res.iter().map(|(_, c)| c[0]).sum::<f64>() / n;
        let at_5000 = res.iter().map(|(_, c)| c[1]).sum::<f64>() / n;
        let rate_512 = at_512 / 512.0;
        let rate_5000 = at_5000 / 5000.0;
        assert!(
            rate_5000 < 0.5 * rate_512,
            "{kind:?}: rate {rate_5000} vs half of {rate_512}"
        );
        means.push(at_5000);
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(means[1] >= means[0], "fair {} < stable {}", means[1], means[0]);
    assert!(elapsed < 300.0, "runtime {elapsed:.2}s");
    println!(
        "[acceptance 13] regret trends: PASS (stable {:.1}, fair {:.1}, {elapsed:.1}s)",
        means[0], means[1]
    );
}

#[test]
fn a14_regret_identity() {
    let mut checked = 0usize;
    let mut worst = 0.0f64;
    let mut verify = |run: &loyalty_lab::sim::RunRecord, inst: &Instance| {
        let obs = observable_regret(run, inst).unwrap();
        let reg = counterfactual_regret(run, inst).unwrap();
        let mix = mixing_loss(run, inst).unwrap();
        let gap = (obs - (reg + mix)).abs();
        worst = worst.max(gap);
        assert!(gap <= 1e-9, "identity gap {gap}");
        checked += 1;
    };

    let instance = regret_study_instance();
    for kind in [
        PolicyKind::Stable,
        PolicyKind::Fair,
        PolicyKind::Oracle,
        PolicyKind::None,
    ] {
        for rep in 0..10u64 {
            let cfg = PolicyConfig::new(kind);
            let mut policy = build_policy(&cfg, &instance, 2000, 2).unwrap();
            let run = loyalty_lab::sim::simulate_policy(
                &instance,
                policy.as_mut(),
                2,
                2000,
                MASTER_SEED + rep,
            )
            .unwrap();
            verify(&run, &instance);
        }
    }
    let mut rng = StreamRng::new(MASTER_SEED);
    for rep in 0..20u64 {
        let inst = loyalty_lab::experiments::gen_misspec(&mut rng, LinkKind::Exponential, 0.15);
        let n = 1 + (rep % 6) as u32;
        let run = simulate_fixed(&inst, Threshold::Finite(n), 1, 1500, rep).unwrap();
        verify(&run, &inst);
    }
    println!("[acceptance 14] obs = regret + mixing: PASS ({checked} runs, worst gap {worst:.2e})");
}

#[test]
fn a15_misspecification_table() {
    let cells = [
        (LinkKind::Linear, 0.25, 5000u64),
        (LinkKind::Exponential, 0.05, 1000),
    ];
    let mut gammas = Vec::new();
    for &(truth, phi, t) in &cells {
        let stable = misspec_cell_gammas(truth, phi, t, 500, MASTER_SEED, PolicyKind::Stable, 0)
            .unwrap();
        let fair =
            misspec_cell_gammas(truth, phi, t, 500, MASTER_SEED, PolicyKind::Fair, 0).unwrap();
        let ms = stable.iter().sum::<f64>() / stable.len() as f64;
        let mf = fair.iter().sum::<f64>() / fair.len() as f64;
        assert!(mf <= ms + 0.02, "{truth:?} phi={phi}: fair {mf} vs stable {ms}");
        gammas.push((truth, phi, t, ms, mf));
    }
    let (_, _, _, easy_stable, _) = gammas[0];
    let (_, _, _, hard_stable, _) = gammas[1];
    assert!(easy_stable >= 0.97, "well-specified gamma {easy_stable}");
    assert!(
        (0.40..=0.65).contains(&hard_stable),
        "hard-cell gamma {hard_stable}"
    );
    println!(
        "[acceptance 15] misspecification: PASS (linear/0.25/5000 {easy_stable:.3}, exp/0.05/1000 {hard_stable:.3})"
    );
}
