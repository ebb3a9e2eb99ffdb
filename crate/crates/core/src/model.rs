//! Domain types: purchase-probability models, problem instances, and the
//! regularity diagnostics the learning theory depends on.
//!
//! A [`TypeSpec`] stores one customer type's generalized linear purchase
//! model in the canonical `(b1, b2 <= 0)` orientation: the probability of
//! obtaining the product with `tau` points to redemption is
//! `min(link(b1 + b2 * tau), 1)`, where the link already folds in the
//! no-loyalty baseline. An [`Instance`] is a full problem: `K` types,
//! mixture weights, and the largest admissible threshold.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for the mixture-weight normalization check.
pub const RHO_SUM_TOL: f64 = 1e-12;

/// Purchase-probability link families.
///
/// Each maps the linear index `x = b1 + b2 * tau` to an (unclamped)
/// probability; [`TypeSpec::purchase_prob`] clamps the result above by 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinkKind {
    /// Constant baseline: the program has no effect on behavior.
    #[serde(rename = "none")]
    NoPressure,
    /// `baseline + max(x, 0)`.
    #[serde(rename = "linear")]
    Linear,
    /// `baseline + exp(x)`.
    #[serde(rename = "exp")]
    Exponential,
    /// `baseline + exp(x) / (1 + exp(x))`.
    #[serde(rename = "logit")]
    Logit,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl LinkKind {
    /// Unclamped mean `link(x)` with the given baseline folded in.
    #[inline]
    pub fn mean(self, baseline: f64, x: f64) -> f64 {
        match self {
            LinkKind::NoPressure => baseline,
            LinkKind::Linear => baseline + x.max(0.0),
            LinkKind::Exponential => baseline + x.exp(),
            LinkKind::Logit => baseline + sigmoid(x),
        }
    }

    /// Mean used inside the likelihood. This is the unclamped simulation
    /// map itself, positive part included: the flat region is what lets
    /// a fit represent "no pressure far from redemption, a spike near
    /// it", the shape every pressured instance takes.
    #[inline]
    pub fn fit_mean(self, baseline: f64, x: f64) -> f64 {
        self.mean(baseline, x)
    }

    /// First derivative of [`LinkKind::fit_mean`] with respect to `x`
    /// (one-sided 0 at the positive-part kink).
    #[inline]
    pub fn fit_dmean(self, x: f64) -> f64 {
        match self {
            LinkKind::NoPressure => 0.0,
            LinkKind::Linear => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            LinkKind::Exponential => x.exp(),
            LinkKind::Logit => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
        }
    }

    /// Second derivative of [`LinkKind::fit_mean`] with respect to `x`.
    #[inline]
    pub fn fit_d2mean(self, x: f64) -> f64 {
        match self {
            LinkKind::NoPressure | LinkKind::Linear => 0.0,
            LinkKind::Exponential => x.exp(),
            LinkKind::Logit => {
                let s = sigmoid(x);
                s * (1.0 - s) * (1.0 - 2.0 * s)
            }
        }
    }

    /// Whether the family carries estimable `(b1, b2)` parameters.
    pub fn is_parametric(self) -> bool {
        !matches!(self, LinkKind::NoPressure)
    }
}

/// Admissible rectangle for `(b1, b2)`, with `b2` constrained non-positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamBox {
    pub b1_min: f64,
    pub b1_max: f64,
    pub b2_min: f64,
    pub b2_max: f64,
}

impl ParamBox {
    pub fn new(b1_min: f64, b1_max: f64, b2_min: f64, b2_max: f64) -> Result<Self> {
        if !(b1_min <= b1_max && b2_min <= b2_max) || b2_max > 0.0 {
            return Err(Error::MalformedInstance(format!(
                "invalid parameter box [{b1_min},{b1_max}]x[{b2_min},{b2_max}]"
            )));
        }
        Ok(ParamBox {
            b1_min,
            b1_max,
            b2_min,
            b2_max,
        })
    }

    /// Rectangle center, the deterministic start point for fitting.
    pub fn center(&self) -> (f64, f64) {
        (
            0.5 * (self.b1_min + self.b1_max),
            0.5 * (self.b2_min + self.b2_max),
        )
    }

    pub fn contains(&self, b1: f64, b2: f64) -> bool {
        b1 >= self.b1_min && b1 <= self.b1_max && b2 >= self.b2_min && b2 <= self.b2_max
    }

    /// Euclidean projection onto the rectangle.
    pub fn project(&self, b1: f64, b2: f64) -> (f64, f64) {
        (
            b1.clamp(self.b1_min, self.b1_max),
            b2.clamp(self.b2_min, self.b2_max),
        )
    }
}

impl Default for ParamBox {
    /// Covers every experimental setting used in the studies.
    fn default() -> Self {
        ParamBox {
            b1_min: -10.0,
            b1_max: 10.0,
            b2_min: -10.0,
            b2_max: 0.0,
        }
    }
}

/// One customer type's purchase-probability model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TypeSpec {
    pub link: LinkKind,
    /// Intercept of the linear index.
    pub b1: f64,
    /// Slope of the linear index, non-positive so points pressure only
    /// strengthens as redemption approaches.
    pub b2: f64,
    /// No-loyalty purchase probability, assumed known to the seller.
    pub baseline: f64,
    /// Admissible parameter rectangle.
    pub param_box: ParamBox,
}

impl TypeSpec {
    /// Builds a spec with the default parameter box.
    ///
    /// `baseline` may be 0 (needed by the tight price-of-fairness instance);
    /// validation flags, rather than rejects, chains that can stall.
    pub fn new(link: LinkKind, baseline: f64, b1: f64, b2: f64) -> Result<Self> {
        TypeSpec::with_box(link, baseline, b1, b2, ParamBox::default())
    }

    pub fn with_box(
        link: LinkKind,
        baseline: f64,
        b1: f64,
        b2: f64,
        param_box: ParamBox,
    ) -> Result<Self> {
        if !baseline.is_finite() || !(0.0..=1.0).contains(&baseline) {
            return Err(Error::MalformedInstance(format!(
                "baseline {baseline} outside [0,1]"
            )));
        }
        if !b1.is_finite() || !b2.is_finite() || b2 > 0.0 {
            return Err(Error::MalformedInstance(format!(
                "coefficients (b1={b1}, b2={b2}) must be finite with b2 <= 0"
            )));
        }
        if !param_box.contains(b1, b2) {
            return Err(Error::MalformedInstance(format!(
                "(b1={b1}, b2={b2}) outside admissible box"
            )));
        }
        Ok(TypeSpec {
            link,
            b1,
            b2,
            baseline,
            param_box,
        })
    }

    /// Purchase (or redemption, at `tau = 0`) probability with `tau` points
    /// to redemption: `min(link(b1 + b2 * tau), 1)`.
    #[inline]
    pub fn purchase_prob(&self, tau: u32) -> f64 {
        let x = self.b1 + self.b2 * tau as f64;
        self.link.mean(self.baseline, x).min(1.0)
    }

    /// Unclamped mean at `tau`; used to detect where the clamp binds.
    #[inline]
    pub fn raw_mean(&self, tau: u32) -> f64 {
        self.link.mean(self.baseline, self.b1 + self.b2 * tau as f64)
    }
}

/// A complete problem: `K` types, mixture weights, and threshold cap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawInstance", into = "RawInstance")]
pub struct Instance {
    pub types: Vec<TypeSpec>,
    pub rho: Vec<f64>,
    pub n_max: u32,
}

impl Instance {
    pub fn new(types: Vec<TypeSpec>, rho: Vec<f64>, n_max: u32) -> Result<Self> {
        if types.is_empty() || types.len() != rho.len() {
            return Err(Error::MalformedInstance(format!(
                "{} types with {} mixture weights",
                types.len(),
                rho.len()
            )));
        }
        if n_max < 1 {
            return Err(Error::MalformedInstance("n_max must be >= 1".into()));
        }
        let sum: f64 = rho.iter().sum();
        if (sum - 1.0).abs() > RHO_SUM_TOL {
            return Err(Error::MalformedInstance(format!(
                "rho sums to {sum}, not 1"
            )));
        }
        if rho.iter().any(|&r| r.is_nan() || r <= 0.0) {
            return Err(Error::MalformedInstance(
                "every mixture weight must be > 0".into(),
            ));
        }
        Ok(Instance { types, rho, n_max })
    }

    /// Number of customer types `K`.
    pub fn k(&self) -> usize {
        self.types.len()
    }

    /// Smallest mixture weight.
    pub fn rho_min(&self) -> f64 {
        self.rho.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Revenue of the paused program: `sum_k rho_k * baseline_k`.
    pub fn no_loyalty_revenue(&self) -> f64 {
        self.types
            .iter()
            .zip(&self.rho)
            .map(|(t, r)| r * t.baseline)
            .sum()
    }

    /// Customers of each type in a population of `m`, requiring every
    /// `rho_k * m` to be integral.
    pub fn type_counts(&self, m: u64) -> Result<Vec<u64>> {
        let mut counts = Vec::with_capacity(self.k());
        for &r in &self.rho {
            let exact = r * m as f64;
            let rounded = exact.round();
            if (exact - rounded).abs() > 1e-9 {
                return Err(Error::NonIntegralPartition { rho: r, m });
            }
            counts.push(rounded as u64);
        }
        let total: u64 = counts.iter().sum();
        if total != m {
            return Err(Error::NonIntegralPartition {
                rho: self.rho[0],
                m,
            });
        }
        Ok(counts)
    }

    /// Parse an instance from its JSON wire format.
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Serialize to the JSON wire format used by the CLI.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }
}

#[derive(Serialize, Deserialize)]
struct RawType {
    link: LinkKind,
    b1: f64,
    b2: f64,
    baseline: f64,
    #[serde(default, skip_serializing_if = "Option::is_none", rename = "box")]
    param_box: Option<[[f64; 2]; 2]>,
}

#[derive(Serialize, Deserialize)]
struct RawInstance {
    n_max: u32,
    types: Vec<RawType>,
    rho: Vec<f64>,
}

impl TryFrom<RawInstance> for Instance {
    type Error = Error;

    fn try_from(raw: RawInstance) -> Result<Self> {
        let mut types = Vec::with_capacity(raw.types.len());
        for t in raw.types {
            let param_box = match t.param_box {
                Some([[a, b], [c, d]]) => ParamBox::new(a, b, c, d)?,
                None => ParamBox::default(),
            };
            types.push(TypeSpec::with_box(
                t.link, t.baseline, t.b1, t.b2, param_box,
            )?);
        }
        Instance::new(types, raw.rho, raw.n_max)
    }
}

impl From<Instance> for RawInstance {
    fn from(inst: Instance) -> Self {
        RawInstance {
            n_max: inst.n_max,
            types: inst
                .types
                .iter()
                .map(|t| RawType {
                    link: t.link,
                    b1: t.b1,
                    b2: t.b2,
                    baseline: t.baseline,
                    param_box: if t.param_box == ParamBox::default() {
                        None
                    } else {
                        Some([
                            [t.param_box.b1_min, t.param_box.b1_max],
                            [t.param_box.b2_min, t.param_box.b2_max],
                        ])
                    },
                })
                .collect(),
            rho: inst.rho.clone(),
        }
    }
}

/// Conditions that keep an instance outside the smooth regime the
/// estimation theory assumes. None of them stop the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegularityFlag {
    /// The clamp `min(., 1)` binds at some reachable state.
    ClampBinds,
    /// Some purchase probability is exactly 0 inside the evaluated range.
    ZeroProbability,
    /// Linear link with `b2 = 0`: the pressure term never decays to the
    /// baseline, so the type behaves like a shifted no-pressure model.
    LinearZeroSlope,
    /// The positive part of the linear link kinks inside the range.
    LinearKink,
}

/// Known constants of the regularity assumptions, evaluated for one
/// instance over its parameter boxes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    /// Smallest purchase probability over all types and states.
    pub mu_min: f64,
    /// Largest purchase probability over all types and states.
    pub mu_max: f64,
    /// Lipschitz constant of the link means over the boxes.
    pub l_mu: f64,
    /// Lower bound on the link derivative near the true parameters.
    pub kappa: f64,
    /// Upper bound on the curvature of the link means over the boxes.
    pub g_mu: f64,
    /// Whether the instance sits strictly inside the smooth regime.
    pub valid: bool,
    pub flags: Vec<RegularityFlag>,
}

/// Derivative bound `sup` of the link mean over `x` in `[lo, hi]`.
fn sup_dmean(link: LinkKind, lo: f64, hi: f64) -> f64 {
    match link {
        LinkKind::NoPressure => 0.0,
        LinkKind::Linear => 1.0,
        LinkKind::Exponential => hi.exp(),
        LinkKind::Logit => {
            if lo <= 0.0 && hi >= 0.0 {
                0.25
            } else {
                link.fit_dmean(lo).max(link.fit_dmean(hi))
            }
        }
    }
}

/// Curvature bound `sup |mean''|` over `x` in `[lo, hi]`.
fn sup_d2mean(link: LinkKind, lo: f64, hi: f64) -> f64 {
    match link {
        LinkKind::NoPressure | LinkKind::Linear => 0.0,
        LinkKind::Exponential => hi.exp(),
        LinkKind::Logit => {
            // |sigma''| peaks at x = +-ln(2 + sqrt(3)).
            let xc = (2.0 + 3.0f64.sqrt()).ln();
            let mut best: f64 = link.fit_d2mean(lo).abs().max(link.fit_d2mean(hi).abs());
            for x in [-xc, xc] {
                if x >= lo && x <= hi {
                    best = best.max(link.fit_d2mean(x).abs());
                }
            }
            best
        }
    }
}

/// Validates an instance against the regularity assumptions and returns
/// the known constants used by the epoch schedules.
///
/// `mu_min`/`mu_max` are evaluated at the instance's own parameters over
/// `tau in {0..n_max}`; the Lipschitz and curvature bounds range over the
/// full parameter boxes; `kappa` is the derivative infimum over the
/// corners and center of the `1/sqrt(1 + n_max^2)` ball around each type's
/// true parameters. All three are exact for these link families because
/// the derivative extrema sit at interval endpoints or at known interior
/// critical points.
pub fn validate_instance(instance: &Instance) -> Result<RegularityReport> {
    let sum: f64 = instance.rho.iter().sum();
    if (sum - 1.0).abs() > RHO_SUM_TOL || instance.rho.iter().any(|&r| r.is_nan() || r <= 0.0) {
        return Err(Error::MalformedInstance(format!(
            "rho sums to {sum} with non-positive entries allowed nowhere"
        )));
    }
    if let Some(bad) = instance.types.iter().find(|t| t.b2 > 0.0) {
        return Err(Error::MalformedInstance(format!(
            "b2 = {} must be <= 0",
            bad.b2
        )));
    }

    let n_max = instance.n_max;
    let mut mu_min = f64::INFINITY;
    let mut mu_max = f64::NEG_INFINITY;
    let mut l_mu = 0.0f64;
    let mut g_mu = 0.0f64;
    let mut kappa = f64::INFINITY;
    let mut flags = Vec::new();
    let push_flag = |flags: &mut Vec<RegularityFlag>, f: RegularityFlag| {
        if !flags.contains(&f) {
            flags.push(f);
        }
    };

    let radius = 1.0 / (1.0 + (n_max as f64).powi(2)).sqrt();

    for spec in &instance.types {
        // Pointwise probabilities at the instance's own parameters.
        for tau in 0..=n_max {
            let p = spec.purchase_prob(tau);
            mu_min = mu_min.min(p);
            mu_max = mu_max.max(p);
            if spec.raw_mean(tau) > 1.0 {
                push_flag(&mut flags, RegularityFlag::ClampBinds);
            }
            if p == 0.0 {
                push_flag(&mut flags, RegularityFlag::ZeroProbability);
            }
        }

        if spec.link == LinkKind::Linear {
            if spec.b2 == 0.0 {
                push_flag(&mut flags, RegularityFlag::LinearZeroSlope);
            }
            let lo_idx = spec.b1 + spec.b2 * n_max as f64;
            if lo_idx < 0.0 && spec.b1 > 0.0 {
                push_flag(&mut flags, RegularityFlag::LinearKink);
            }
        }

        // Box-wide index range: b2 <= 0 so the extremes sit at tau = 0 and
        // tau = n_max against the box corners.
        let b = &spec.param_box;
        let x_lo = b.b1_min + b.b2_min * n_max as f64;
        let x_hi = b.b1_max;
        l_mu = l_mu.max(sup_dmean(spec.link, x_lo, x_hi));
        g_mu = g_mu.max(sup_d2mean(spec.link, x_lo, x_hi));

        // kappa over the ball corners + center around the true parameters.
        if spec.link.is_parametric() {
            let candidates = [
                (spec.b1, spec.b2),
                (spec.b1 - radius, spec.b2 - radius),
                (spec.b1 - radius, spec.b2 + radius),
                (spec.b1 + radius, spec.b2 - radius),
                (spec.b1 + radius, spec.b2 + radius),
            ];
            for (c1, c2) in candidates {
                for tau in 0..=n_max {
                    let x = c1 + c2 * tau as f64;
                    kappa = kappa.min(spec.link.fit_dmean(x));
                }
            }
        }
    }

    let valid = !flags.iter().any(|f| {
        matches!(
            f,
            RegularityFlag::ClampBinds | RegularityFlag::ZeroProbability | RegularityFlag::LinearKink
        )
    });

    Ok(RegularityReport {
        mu_min,
        mu_max,
        l_mu,
        kappa,
        g_mu,
        valid,
        flags,
    })
}
