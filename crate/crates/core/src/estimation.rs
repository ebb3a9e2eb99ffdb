//! Maximum-likelihood estimation of per-type GLM parameters from
//! `(tau, x)` samples, plus the design-matrix diagnostics the theory
//! gates on.
//!
//! The baseline probability is treated as known throughout; only
//! `(b1, b2)` are estimated. The linear family is fitted through the
//! identity link (no positive part), so its likelihood is strictly
//! concave on the feasible region. For the exponential and logit
//! families the simulated model clamps probabilities at 1, so the fit
//! objective treats `p >= 1` as a flat success probability of 1: such a
//! state contributes nothing when only purchases were observed there and
//! is infeasible when a non-purchase was observed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LinkKind, ParamBox, RegularityReport};

/// Sub-Gaussian noise scale of a Bernoulli observation.
pub const SIGMA: f64 = 0.5;

/// Interior floor for fitted probabilities.
const P_FLOOR: f64 = 1e-9;

const MAX_ITERS: usize = 200;
const PGRAD_TOL: f64 = 1e-10;

/// One type's observed `(tau, x)` pairs from active periods, redemption
/// decisions at `tau = 0` included.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SampleSet {
    pub samples: Vec<(u32, bool)>,
}

impl SampleSet {
    pub fn new() -> Self {
        SampleSet::default()
    }

    pub fn from_pairs(samples: Vec<(u32, bool)>) -> Self {
        SampleSet { samples }
    }

    pub fn push(&mut self, tau: u32, x: bool) {
        self.samples.push((tau, x));
    }

    pub fn extend_from(&mut self, other: &SampleSet) {
        self.samples.extend_from_slice(&other.samples);
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Success/failure counts per distinct `tau`, sorted by `tau`.
    fn aggregate(&self) -> Vec<(u32, f64, f64)> {
        let mut sorted: Vec<(u32, bool)> = self.samples.clone();
        sorted.sort_unstable_by_key(|&(tau, _)| tau);
        let mut agg: Vec<(u32, f64, f64)> = Vec::new();
        for (tau, x) in sorted {
            if agg.last().map(|&(t, _, _)| t) != Some(tau) {
                agg.push((tau, 0.0, 0.0));
            }
            let last = agg.last_mut().unwrap();
            if x {
                last.1 += 1.0;
            } else {
                last.2 += 1.0;
            }
        }
        agg
    }
}

/// Second-moment matrix of the `(1, tau)` features:
/// `[[count, sum tau], [sum tau, sum tau^2]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    pub count: f64,
    pub sum_tau: f64,
    pub sum_tau2: f64,
}

/// Exact integer-weighted feature sums of a sample set.
pub fn design_matrix(samples: &SampleSet) -> DesignMatrix {
    let mut count = 0.0;
    let mut sum_tau = 0.0;
    let mut sum_tau2 = 0.0;
    for &(tau, _) in &samples.samples {
        let t = tau as f64;
        count += 1.0;
        sum_tau += t;
        sum_tau2 += t * t;
    }
    DesignMatrix {
        count,
        sum_tau,
        sum_tau2,
    }
}

/// Smallest eigenvalue of the symmetric 2x2 design matrix, by the closed
/// form `(a+d)/2 - sqrt(((a-d)/2)^2 + b^2)`; tiny negative round-off is
/// clipped to 0.
pub fn lambda_min(v: &DesignMatrix) -> f64 {
    let half_tr = 0.5 * (v.count + v.sum_tau2);
    let half_gap = 0.5 * (v.count - v.sum_tau2);
    let lam = half_tr - (half_gap * half_gap + v.sum_tau * v.sum_tau).sqrt();
    if lam < 0.0 && lam > -1e-12 {
        0.0
    } else {
        lam
    }
}

/// The information constant `C0 = 512 G^2 sigma^2 (1 + n_max^2) / kappa^4`.
pub(crate) fn c_zero(report: &RegularityReport, n_max: u32) -> f64 {
    let n2 = 1.0 + (n_max as f64).powi(2);
    512.0 * report.g_mu * report.g_mu * SIGMA * SIGMA * n2 / report.kappa.powi(4)
}

/// Whether the design carries enough information for the MLE error bound
/// to hold at confidence `1 - delta`: `lambda_min(V) >= C0 (4 + log(1/delta))`.
pub fn info_gate(
    v: &DesignMatrix,
    delta: f64,
    report: &RegularityReport,
    n_max: u32,
) -> Result<bool> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidDelta(delta));
    }
    let gate = c_zero(report, n_max) * (4.0 + (1.0 / delta).ln());
    Ok(lambda_min(v) >= gate)
}

/// Bernoulli log-likelihood of `beta` on one type's samples.
///
/// Every fitted probability must lie strictly inside `(0, 1)`; a sample
/// whose model probability is clamped reports `ProbabilityAtBoundary`.
/// The empty sum is 0.
pub fn log_likelihood(
    samples: &SampleSet,
    link: LinkKind,
    baseline: f64,
    beta: (f64, f64),
) -> Result<f64> {
    let mut ll = 0.0;
    for &(tau, x) in &samples.samples {
        let mu = link.fit_mean(baseline, beta.0 + beta.1 * tau as f64);
        if mu <= 0.0 || mu >= 1.0 {
            return Err(Error::ProbabilityAtBoundary { tau, mu });
        }
        ll += if x { mu.ln() } else { (1.0 - mu).ln() };
    }
    Ok(ll)
}

/// Result of a maximum-likelihood fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOutcome {
    pub b1: f64,
    pub b2: f64,
    /// Projected-gradient tolerance was reached before the iteration cap.
    pub converged: bool,
    /// A rank-deficient design was stabilized with the tiny ridge.
    pub ridged: bool,
}

impl FitOutcome {
    pub fn beta(&self) -> (f64, f64) {
        (self.b1, self.b2)
    }
}

struct Objective<'a> {
    agg: &'a [(u32, f64, f64)],
    link: LinkKind,
    baseline: f64,
}

impl Objective<'_> {
    /// Log-likelihood value; `-inf` marks an infeasible candidate.
    fn value(&self, b1: f64, b2: f64) -> f64 {
        let mut ll = 0.0;
        for &(tau, n1, n0) in self.agg {
            let p = self.link.fit_mean(self.baseline, b1 + b2 * tau as f64);
            if p >= 1.0 {
                // Clamped state: certain purchase, nothing to add.
                if n0 > 0.0 {
                    return f64::NEG_INFINITY;
                }
            } else {
                if n1 > 0.0 && p <= P_FLOOR {
                    return f64::NEG_INFINITY;
                }
                if n1 > 0.0 {
                    ll += n1 * p.ln();
                }
                if n0 > 0.0 {
                    ll += n0 * (1.0 - p).ln();
                }
            }
        }
        ll
    }

    /// Gradient and Hessian at a feasible point.
    fn derivatives(&self, b1: f64, b2: f64) -> ([f64; 2], [f64; 3]) {
        let mut g = [0.0, 0.0];
        // Symmetric Hessian stored as [h11, h12, h22].
        let mut h = [0.0, 0.0, 0.0];
        for &(tau, n1, n0) in self.agg {
            let t = tau as f64;
            let z = b1 + b2 * t;
            let p = self.link.fit_mean(self.baseline, z);
            if p >= 1.0 {
                continue; // flat clamp region
            }
            let w = self.link.fit_dmean(z);
            let w2 = self.link.fit_d2mean(z);
            let q = 1.0 - p;
            let gz = n1 * w / p - n0 * w / q;
            let hz = n1 * (w2 * p - w * w) / (p * p) - n0 * (w2 * q + w * w) / (q * q);
            g[0] += gz;
            g[1] += gz * t;
            h[0] += hz;
            h[1] += hz * t;
            h[2] += hz * t * t;
        }
        (g, h)
    }
}

/// Maximizer set of a single-support likelihood in the index `z`: a
/// point when the rate is interior, a half-line when the data sits on a
/// flat piece of the link (no successes, or everything clamped).
enum IndexSolution {
    At(f64),
    AtMost(f64),
    AtLeast(f64),
}

/// Ridge resolution of a rank-deficient design: all samples sit at one
/// `tau`, so the likelihood depends on `z = b1 + b2 tau` alone and its
/// maximizers form a line or half-plane in `(b1, b2)`. The tiny ridge
/// selects the point of that set closest to the box center, computed
/// here in closed form.
fn ridged_single_support(
    link: LinkKind,
    baseline: f64,
    pbox: &ParamBox,
    tau: u32,
    n1: f64,
    n0: f64,
) -> (f64, f64) {
    let rate = n1 / (n1 + n0);
    let interior = |r: f64| -> f64 {
        let r = r.clamp(1e-3, 1.0 - 1e-3);
        match link {
            LinkKind::NoPressure | LinkKind::Linear => r - baseline,
            LinkKind::Exponential => (r - baseline).max(P_FLOOR).ln(),
            LinkKind::Logit => {
                let q = (r - baseline).clamp(P_FLOOR, 1.0 - P_FLOOR);
                (q / (1.0 - q)).ln()
            }
        }
    };
    let solution = if rate <= baseline.max(P_FLOOR) {
        // Flat bottom: any index on the link's floor fits exactly.
        match link {
            LinkKind::NoPressure | LinkKind::Linear => IndexSolution::AtMost(0.0),
            LinkKind::Exponential | LinkKind::Logit => {
                IndexSolution::AtMost((rate.max(1e-3) - baseline).max(P_FLOOR).ln().min(0.0))
            }
        }
    } else if n0 == 0.0 {
        // All purchases: the clamp plateau fits exactly when reachable.
        let head = 1.0 - baseline;
        match link {
            LinkKind::NoPressure => IndexSolution::At(0.0),
            LinkKind::Linear => IndexSolution::AtLeast(head),
            LinkKind::Exponential => IndexSolution::AtLeast(head.max(P_FLOOR).ln()),
            LinkKind::Logit => {
                if head < 1.0 {
                    IndexSolution::AtLeast((head / (1.0 - head)).ln())
                } else {
                    IndexSolution::At(interior(rate))
                }
            }
        }
    } else {
        IndexSolution::At(interior(rate))
    };

    let (c1, c2) = pbox.center();
    let t = tau as f64;
    let z_center = c1 + c2 * t;
    let z_target = match solution {
        IndexSolution::At(z) => z,
        IndexSolution::AtMost(z) if z_center <= z => z_center,
        IndexSolution::AtMost(z) => z,
        IndexSolution::AtLeast(z) if z_center >= z => z_center,
        IndexSolution::AtLeast(z) => z,
    };
    let step = (z_target - z_center) / (1.0 + t * t);
    pbox.project(c1 + step, c2 + step * t)
}

/// Deterministic feasible start.
///
/// The exponential and logit fits start at the box center when feasible.
/// The positive-part fit instead starts on a flat model slightly inside
/// its active region (matched to the pooled success rate): the objective
/// has zero gradient wherever every index is on the flat piece, so the
/// center would read as an instant stationary point. The remaining
/// fallbacks are rate-matched flat models and a coarse grid.
fn starting_point(obj: &Objective, pbox: &ParamBox, agg: &[(u32, f64, f64)]) -> Result<(f64, f64)> {
    let (mut n1, mut n0) = (0.0, 0.0);
    for &(_, s, f) in agg {
        n1 += s;
        n0 += f;
    }
    let rate = (n1 / (n1 + n0)).clamp(1e-3, 1.0 - 1e-3);
    let excess = (rate - obj.baseline).max(1e-6);

    if obj.link == LinkKind::Linear {
        let active = pbox.project((rate - obj.baseline).max(1e-4), 0.0);
        if obj.value(active.0, active.1).is_finite() {
            return Ok(active);
        }
    }
    let center = pbox.center();
    if obj.value(center.0, center.1).is_finite() {
        return Ok(center);
    }

    let b1 = match obj.link {
        LinkKind::Linear => rate - obj.baseline,
        LinkKind::Exponential => excess.ln(),
        LinkKind::Logit => {
            let q = excess.min(1.0 - 1e-6);
            (q / (1.0 - q)).ln()
        }
        LinkKind::NoPressure => 0.0,
    };
    let flat = pbox.project(b1, 0.0);
    if obj.value(flat.0, flat.1).is_finite() {
        return Ok(flat);
    }

    let mut best = (f64::NEG_INFINITY, center);
    for i in 0..=16 {
        for j in 0..=16 {
            let b1 = pbox.b1_min + (pbox.b1_max - pbox.b1_min) * i as f64 / 16.0;
            let b2 = pbox.b2_min + (pbox.b2_max - pbox.b2_min) * j as f64 / 16.0;
            let v = obj.value(b1, b2);
            if v > best.0 {
                best = (v, (b1, b2));
            }
        }
    }
    if best.0.is_finite() {
        Ok(best.1)
    } else {
        let &(tau, _, _) = &agg[0];
        Err(Error::ProbabilityAtBoundary {
            tau,
            mu: obj.link.fit_mean(obj.baseline, center.0 + center.1 * tau as f64),
        })
    }
}

/// Maximum-likelihood estimate of `(b1, b2)` over the admissible box.
///
/// Damped Newton with backtracking and projection onto the box, started
/// from a deterministic feasible point; falls back to projected gradient
/// ascent when the Hessian is near-singular or not negative-definite.
/// A design with fewer than two distinct `tau` values is rank-deficient:
/// it errors unless `allow_ridge` is set, in which case the vanishing
/// ridge centered at the box center resolves the flat direction in
/// closed form (see [`ridged_single_support`]) and the outcome is
/// flagged.
pub fn fit_mle(
    samples: &SampleSet,
    link: LinkKind,
    baseline: f64,
    pbox: &ParamBox,
    allow_ridge: bool,
) -> Result<FitOutcome> {
    let agg = samples.aggregate();
    if agg.is_empty() {
        return Err(Error::Degenerate(0));
    }
    let distinct = agg.len();
    let ridged = distinct < 2;
    if ridged && !allow_ridge {
        return Err(Error::Degenerate(distinct));
    }
    if ridged {
        let (tau, n1, n0) = agg[0];
        let (b1, b2) = ridged_single_support(link, baseline, pbox, tau, n1, n0);
        return Ok(FitOutcome {
            b1,
            b2,
            converged: true,
            ridged: true,
        });
    }
    let obj = Objective {
        agg: &agg,
        link,
        baseline,
    };

    let (mut b1, mut b2) = starting_point(&obj, pbox, &agg)?;
    let mut f = obj.value(b1, b2);
    let mut converged = false;

    for _ in 0..MAX_ITERS {
        let (g, h) = obj.derivatives(b1, b2);

        // Projected-gradient stationarity test.
        let (p1, p2) = pbox.project(b1 + g[0], b2 + g[1]);
        let pg = ((p1 - b1).powi(2) + (p2 - b2).powi(2)).sqrt();
        if pg < PGRAD_TOL {
            converged = true;
            break;
        }

        // Newton direction when the Hessian is safely negative-definite.
        let det = h[0] * h[2] - h[1] * h[1];
        let (e1, e2) = {
            let half_tr = 0.5 * (h[0] + h[2]);
            let rad = (0.25 * (h[0] - h[2]).powi(2) + h[1] * h[1]).sqrt();
            (half_tr - rad, half_tr + rad)
        };
        let well_conditioned =
            e2 < 0.0 && e1.abs() <= 1e12 * e2.abs() && e2.abs() > 0.0 && det > 0.0;
        let dir = if well_conditioned {
            [
                (-h[2] * g[0] + h[1] * g[1]) / det,
                (h[1] * g[0] - h[0] * g[1]) / det,
            ]
        } else {
            [g[0], g[1]]
        };

        // Backtracking line search with projection.
        let mut step = 1.0;
        let mut advanced = false;
        for _ in 0..60 {
            let (c1, c2) = pbox.project(b1 + step * dir[0], b2 + step * dir[1]);
            if c1 != b1 || c2 != b2 {
                let fc = obj.value(c1, c2);
                let slope = g[0] * (c1 - b1) + g[1] * (c2 - b2);
                if fc.is_finite() && fc >= f + 1e-4 * slope.min(0.0) && fc > f - 1e-18 {
                    b1 = c1;
                    b2 = c2;
                    f = fc;
                    advanced = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !advanced {
            // No feasible ascent step; the projected gradient is the stop
            // criterion, so treat the point as converged if it is small.
            converged = pg < 1e-6;
            break;
        }
    }

    Ok(FitOutcome {
        b1,
        b2,
        converged,
        ridged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TypeSpec;
    use crate::rng::StreamRng;
    use crate::steady::stationary_distribution;

    /// Draw `n` samples with tau from the stationary law of `spec` at
    /// threshold `n_thr` and x Bernoulli at the clamped probability.
    fn stationary_samples(spec: &TypeSpec, n_thr: u32, n: usize, seed: u64) -> SampleSet {
        let p = stationary_distribution(spec, n_thr).unwrap();
        let mut cum = Vec::with_capacity(p.len());
        let mut acc = 0.0;
        for &v in &p {
            acc += v;
            cum.push(acc);
        }
        let mut rng = StreamRng::new(seed);
        let mut set = SampleSet::new();
        for _ in 0..n {
            let u = rng.next_f64();
            let tau = cum.iter().position(|&c| u < c).unwrap_or(p.len() - 1) as u32;
            let x = rng.next_f64() < spec.purchase_prob(tau);
            set.push(tau, x);
        }
        set
    }

    #[test]
    fn log_likelihood_single_sample() {
        let set = SampleSet::from_pairs(vec![(0, true)]);
        let ll = log_likelihood(&set, LinkKind::Linear, 0.5, (0.0, 0.0)).unwrap();
        assert!((ll - 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn log_likelihood_empty_is_zero() {
        let set = SampleSet::new();
        assert_eq!(
            log_likelihood(&set, LinkKind::Logit, 0.2, (0.3, -0.1)).unwrap(),
            0.0
        );
    }

    #[test]
    fn log_likelihood_rejects_boundary() {
        let set = SampleSet::from_pairs(vec![(0, true)]);
        let err = log_likelihood(&set, LinkKind::Exponential, 0.25, (1.0, -1.0)).unwrap_err();
        assert!(matches!(err, Error::ProbabilityAtBoundary { tau: 0, .. }));
    }

    #[test]
    fn truth_dominates_perturbations() {
        let spec = TypeSpec::new(LinkKind::Logit, 0.1, 0.6, -0.4).unwrap();
        let mut wins = 0;
        let trials = 60;
        for seed in 0..trials {
            let set = stationary_samples(&spec, 6, 1000, 1000 + seed);
            let at_truth =
                log_likelihood(&set, LinkKind::Logit, 0.1, (spec.b1, spec.b2)).unwrap();
            let perturbed =
                log_likelihood(&set, LinkKind::Logit, 0.1, (spec.b1 + 0.25, spec.b2 - 0.25))
                    .unwrap();
            if at_truth > perturbed {
                wins += 1;
            }
        }
        assert!(wins as f64 >= 0.99 * trials as f64, "wins = {wins}");
    }

    #[test]
    fn design_matrix_hand_sums() {
        let set = SampleSet::from_pairs(vec![(0, true); 4]);
        let v = design_matrix(&set);
        assert_eq!((v.count, v.sum_tau, v.sum_tau2), (4.0, 0.0, 0.0));

        let set = SampleSet::from_pairs(vec![(0, true), (0, false), (1, true), (1, false)]);
        let v = design_matrix(&set);
        assert_eq!((v.count, v.sum_tau, v.sum_tau2), (4.0, 2.0, 2.0));

        let v = design_matrix(&SampleSet::new());
        assert_eq!((v.count, v.sum_tau, v.sum_tau2), (0.0, 0.0, 0.0));
    }

    #[test]
    fn lambda_min_closed_form_cases() {
        let v = DesignMatrix {
            count: 4.0,
            sum_tau: 0.0,
            sum_tau2: 0.0,
        };
        assert_eq!(lambda_min(&v), 0.0);

        let v = DesignMatrix {
            count: 4.0,
            sum_tau: 2.0,
            sum_tau2: 2.0,
        };
        assert!((lambda_min(&v) - (3.0 - 5.0f64.sqrt())).abs() < 1e-12);

        let v = DesignMatrix {
            count: 7.0,
            sum_tau: 0.0,
            sum_tau2: 7.0,
        };
        assert_eq!(lambda_min(&v), 7.0);
    }

    #[test]
    fn lambda_min_matches_characteristic_solve() {
        let mut rng = StreamRng::new(3);
        for _ in 0..1000 {
            // PSD by construction: V = B^T B.
            let (a, b, c, d) = (
                rng.uniform_in(-3.0, 3.0),
                rng.uniform_in(-3.0, 3.0),
                rng.uniform_in(-3.0, 3.0),
                rng.uniform_in(-3.0, 3.0),
            );
            let v = DesignMatrix {
                count: a * a + c * c,
                sum_tau: a * b + c * d,
                sum_tau2: b * b + d * d,
            };
            // Quadratic-formula oracle on the characteristic polynomial.
            let tr = v.count + v.sum_tau2;
            let det = v.count * v.sum_tau2 - v.sum_tau * v.sum_tau;
            let root = ((tr * tr - 4.0 * det).max(0.0)).sqrt();
            let expect = 0.5 * (tr - root);
            assert!((lambda_min(&v) - expect.max(0.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn info_gate_boundary() {
        let report = RegularityReport {
            mu_min: 0.1,
            mu_max: 0.9,
            l_mu: 1.0,
            kappa: 1.0,
            g_mu: 1.0,
            valid: true,
            flags: vec![],
        };
        let gate = |lam: f64| DesignMatrix {
            count: lam,
            sum_tau: 0.0,
            sum_tau2: lam,
        };
        // C0 = 512 * (1/4) * 5 = 640; threshold at delta=e^-1 is 3200.
        let delta = (-1.0f64).exp();
        assert!(info_gate(&gate(3200.0), delta, &report, 2).unwrap());
        assert!(!info_gate(&gate(3199.0), delta, &report, 2).unwrap());
        assert!(!info_gate(&gate(0.0), 0.5, &report, 2).unwrap());
        assert!(matches!(
            info_gate(&gate(1.0), 1.5, &report, 2),
            Err(Error::InvalidDelta(_))
        ));
    }

    #[test]
    fn fit_recovers_exponential_truth() {
        // Clamped at tau in {0, 1}; identification comes from tau >= 2,
        // where the Fisher information puts the estimator's noise floor
        // near 0.05 at this sample size. Check the median over seeds.
        let spec = TypeSpec::new(LinkKind::Exponential, 0.25, 1.0, -1.0).unwrap();
        let mut errs: Vec<f64> = (0..9)
            .map(|seed| {
                let set = stationary_samples(&spec, 5, 100_000, 1000 + seed);
                let fit =
                    fit_mle(&set, LinkKind::Exponential, 0.25, &spec.param_box, true).unwrap();
                assert!(!fit.ridged);
                ((fit.b1 - 1.0).powi(2) + (fit.b2 + 1.0).powi(2)).sqrt()
            })
            .collect();
        errs.sort_by(f64::total_cmp);
        assert!(errs[4] < 0.05, "median error {}", errs[4]);
    }

    #[test]
    fn fit_shrinks_slope_for_no_pressure_truth() {
        let spec = TypeSpec::new(LinkKind::NoPressure, 0.4, 0.0, 0.0).unwrap();
        let set = stationary_samples(&spec, 6, 100_000, 21);
        let fit = fit_mle(&set, LinkKind::Linear, 0.4, &spec.param_box, true).unwrap();
        assert!(fit.b2.abs() < 0.02, "b2 = {}", fit.b2);
    }

    #[test]
    fn fit_rejects_single_support_point() {
        let set = SampleSet::from_pairs(vec![(3, true), (3, false), (3, true)]);
        let err = fit_mle(&set, LinkKind::Logit, 0.2, &ParamBox::default(), false).unwrap_err();
        assert!(matches!(err, Error::Degenerate(1)));
        // With the ridge the fit goes through and is flagged.
        let fit = fit_mle(&set, LinkKind::Logit, 0.2, &ParamBox::default(), true).unwrap();
        assert!(fit.ridged);
    }

    #[test]
    fn fit_is_invariant_to_order_and_duplication() {
        let spec = TypeSpec::new(LinkKind::Logit, 0.15, 0.8, -0.45).unwrap();
        let set = stationary_samples(&spec, 8, 4000, 5);
        let fit = fit_mle(&set, LinkKind::Logit, 0.15, &spec.param_box, false).unwrap();

        let mut reversed = set.clone();
        reversed.samples.reverse();
        let fit_rev = fit_mle(&reversed, LinkKind::Logit, 0.15, &spec.param_box, false).unwrap();
        assert_eq!(fit.beta(), fit_rev.beta());

        let mut doubled = set.clone();
        doubled.extend_from(&set);
        let fit_dup = fit_mle(&doubled, LinkKind::Logit, 0.15, &spec.param_box, false).unwrap();
        assert!((fit.b1 - fit_dup.b1).abs() < 1e-9);
        assert!((fit.b2 - fit_dup.b2).abs() < 1e-9);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = StreamRng::new(17);
        for link in [LinkKind::Linear, LinkKind::Exponential, LinkKind::Logit] {
            let baseline = 0.2;
            let spec = TypeSpec::new(link, baseline, 0.4, -0.3).unwrap();
            let set = stationary_samples(&spec, 6, 500, 31);
            let agg = set.aggregate();
            let obj = Objective {
                agg: &agg,
                link,
                baseline,
            };
            let mut checked = 0;
            while checked < 100 {
                let b1 = rng.uniform_in(-1.5, 0.8);
                let b2 = rng.uniform_in(-1.0, 0.0);
                if !obj.value(b1, b2).is_finite() {
                    continue;
                }
                let (g, _) = obj.derivatives(b1, b2);
                let h = 1e-6;
                let g1 = (obj.value(b1 + h, b2) - obj.value(b1 - h, b2)) / (2.0 * h);
                let g2 = (obj.value(b1, b2 + h) - obj.value(b1, b2 - h)) / (2.0 * h);
                let scale = 1.0 + g[0].abs().max(g[1].abs());
                assert!((g[0] - g1).abs() / scale < 1e-5, "{link:?} d1");
                assert!((g[1] - g2).abs() / scale < 1e-5, "{link:?} d2");
                checked += 1;
            }
        }
    }

    #[test]
    fn linear_likelihood_is_concave_where_pressure_is_active() {
        // The positive-part objective is concave on the (convex) region
        // where every observed index is on the increasing piece and
        // strictly below the clamp.
        let spec = TypeSpec::new(LinkKind::Linear, 0.1, 0.5, -0.04).unwrap();
        let set = stationary_samples(&spec, 10, 2000, 13);
        let agg = set.aggregate();
        let obj = Objective {
            agg: &agg,
            link: LinkKind::Linear,
            baseline: 0.1,
        };
        let mut rng = StreamRng::new(29);
        let mut checked = 0;
        while checked < 200 {
            let a = (rng.uniform_in(0.55, 0.85), rng.uniform_in(-0.05, 0.0));
            let b = (rng.uniform_in(0.55, 0.85), rng.uniform_in(-0.05, 0.0));
            let mid = (0.5 * (a.0 + b.0), 0.5 * (a.1 + b.1));
            let (fa, fb, fm) = (
                obj.value(a.0, a.1),
                obj.value(b.0, b.1),
                obj.value(mid.0, mid.1),
            );
            if !(fa.is_finite() && fb.is_finite() && fm.is_finite()) {
                continue;
            }
            assert!(fm >= 0.5 * (fa + fb) - 1e-9);
            checked += 1;
        }
    }
}
