//! Renyi-DP accounting for progressive training.
//!
//! Edge level: the only private query is the NAP aggregate, issued once per
//! stage, so a depth-`K` run composes `K` Gaussian mechanisms of sensitivity 1.
//!
//! Node level: degree bounding at `D` gives NAP sensitivity `sqrt(D)`, and each
//! of the `K + 1` stages additionally runs `T` DP-SGD steps, each a Poisson
//! subsampled Gaussian mechanism. The subsampled bound is evaluated in log
//! space over integer orders, since `exp((l - 1) l C² / 2σ²)` overflows `f64`
//! long before the order grid ends.

use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrivacyLevel {
    Edge,
    Node,
    None,
}

pub const MAX_ORDER: u32 = 128;

/// Integer orders `2..=128`, the domain of the subsampled-Gaussian bound.
pub fn integer_orders() -> Vec<f64> {
    (2..=MAX_ORDER).map(f64::from).collect()
}

/// Orders for curves made only of Gaussian terms, which are valid for any
/// real order above one: `1.1, 1.2, ..., 10.9` followed by `11..=128`.
pub fn gaussian_orders() -> Vec<f64> {
    (1..100)
        .map(|x| 1.0 + f64::from(x) / 10.0)
        .chain((11..=MAX_ORDER).map(f64::from))
        .collect()
}

/// `(α, ε_rdp)` samples over a strictly increasing order grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdpCurve {
    orders: Vec<f64>,
    values: Vec<f64>,
}

impl RdpCurve {
    pub fn new(orders: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if orders.len() != values.len() {
            return Err(Error::Validation("RDP curve needs one value per order".into()));
        }
        if orders.iter().any(|&a| !(a > 1.0)) || orders.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation("RDP orders must exceed 1 and strictly increase".into()));
        }
        if values.iter().any(|&v| v.is_nan() || v < 0.0) {
            return Err(Error::Validation("RDP values must be non-negative".into()));
        }
        Ok(Self { orders, values })
    }

    pub fn from_fn(orders: Vec<f64>, mut f: impl FnMut(f64) -> Result<f64>) -> Result<Self> {
        let values = orders.iter().map(|&a| f(a)).collect::<Result<Vec<_>>>()?;
        Self::new(orders, values)
    }

    pub fn orders(&self) -> &[f64] {
        &self.orders
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_empty(&self) -> bool {
        self.orders.is_empty()
    }
}

/// Result of converting an RDP curve to `(ε, δ)`-DP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpConversion {
    pub epsilon: f64,
    /// Minimizing order; `None` when every order gives an infinite bound.
    pub alpha_star: Option<f64>,
}

/// RDP of the Gaussian mechanism: `α Δ² / (2σ²)`.
pub fn rdp_gaussian(alpha: f64, sensitivity: f64, sigma: f64) -> f64 {
    if sensitivity == 0.0 {
        0.0
    } else if sigma <= 0.0 {
        f64::INFINITY
    } else {
        alpha * sensitivity * sensitivity / (2.0 * sigma * sigma)
    }
}

/// RDP of `depth` NAP queries. Edge level has sensitivity 1; node level has
/// sensitivity `sqrt(degree_cap)`.
pub fn rdp_nap_total(alpha: f64, sigma: f64, depth: usize, level: PrivacyLevel, degree_cap: usize) -> f64 {
    if depth == 0 {
        return 0.0;
    }
    let sensitivity_sq = match level {
        PrivacyLevel::Edge => 1.0,
        PrivacyLevel::Node => degree_cap as f64,
        PrivacyLevel::None => return 0.0,
    };
    depth as f64 * rdp_gaussian(alpha, sensitivity_sq.sqrt(), sigma)
}

/// `n · log(1 - q)` with the convention `0 · log 0 = 0`.
fn n_log1m(n: f64, q: f64) -> f64 {
    if n == 0.0 {
        0.0
    } else {
        n * (-q).ln_1p()
    }
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + terms.iter().map(|&t| (t - max).exp()).sum::<f64>().ln()
}

/// Per-step RDP of the Poisson-subsampled Gaussian mechanism with sampling
/// rate `q`, clipping norm `clip` and noise std `sigma`:
///
/// ```text
/// 1/(α-1) · log{ (1-q)^(α-1) (αq - q + 1)
///              + C(α,2) q² (1-q)^(α-2) e^(C²/σ²)
///              + Σ_{l=3..α} C(α,l) (1-q)^(α-l) q^l e^((l-1) l C² / 2σ²) }
/// ```
pub fn rdp_subsampled_gaussian(alpha: f64, q: f64, clip: f64, sigma: f64) -> Result<f64> {
    if alpha < 2.0 || alpha.fract() != 0.0 || alpha > u32::MAX as f64 {
        return Err(Error::Domain(format!(
            "subsampled Gaussian bound needs an integer order >= 2, got {alpha}"
        )));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Domain(format!("sampling rate {q} is outside [0, 1]")));
    }
    if q == 0.0 || clip == 0.0 {
        return Ok(0.0);
    }
    if sigma <= 0.0 {
        return Ok(f64::INFINITY);
    }

    let order = alpha as u64;
    let ratio = clip * clip / (sigma * sigma);
    let mut terms = Vec::with_capacity(order as usize);
    terms.push(n_log1m(alpha - 1.0, q) + (alpha * q - q + 1.0).ln());
    for l in 2..=order {
        let lf = l as f64;
        // For l = 2 the exponent (l-1) l C²/(2σ²) equals C²/σ².
        let exponent = (lf - 1.0) * lf * ratio / 2.0;
        terms.push(ln_binomial(order, l) + n_log1m(alpha - lf, q) + lf * q.ln() + exponent);
    }
    Ok((log_sum_exp(&terms) / (alpha - 1.0)).max(0.0))
}

/// Noise configuration of a run: explicit standard deviations or a target ε
/// to calibrate against (`f64::INFINITY` for a non-private run).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Noise {
    Explicit { sigma_ap: f64, sigma_gp: f64 },
    TargetEpsilon(f64),
}

/// Everything the accountant needs to know about a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacySpec {
    pub level: PrivacyLevel,
    pub delta: f64,
    /// Model depth `K` (number of NAP queries).
    pub depth: usize,
    pub degree_cap: usize,
    pub clip: f64,
    pub batch_size: usize,
    /// DP-SGD iterations per stage.
    pub iterations: usize,
    /// Size of the population batches are sampled from.
    pub num_nodes: usize,
    pub noise: Noise,
}

impl PrivacySpec {
    pub fn edge(depth: usize, delta: f64, noise: Noise) -> Self {
        Self {
            level: PrivacyLevel::Edge,
            delta,
            depth,
            degree_cap: 0,
            clip: 0.0,
            batch_size: 0,
            iterations: 0,
            num_nodes: 0,
            noise,
        }
    }

    pub fn sampling_rate(&self) -> f64 {
        if self.num_nodes == 0 {
            0.0
        } else {
            self.batch_size as f64 / self.num_nodes as f64
        }
    }

    pub fn with_noise(&self, sigma_ap: f64, sigma_gp: f64) -> Self {
        Self {
            noise: Noise::Explicit { sigma_ap, sigma_gp },
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Validation(format!("delta {} is not in (0, 1)", self.delta)));
        }
        if self.level == PrivacyLevel::Node {
            if self.degree_cap < 1 {
                return Err(Error::Validation("node-level privacy needs a degree cap >= 1".into()));
            }
            if !(self.clip > 0.0) {
                return Err(Error::Validation("node-level privacy needs a clipping norm > 0".into()));
            }
            if self.batch_size >= self.num_nodes {
                return Err(Error::Validation(format!(
                    "batch size {} must be below the node count {}",
                    self.batch_size, self.num_nodes
                )));
            }
        }
        match self.noise {
            Noise::Explicit { sigma_ap, sigma_gp } if sigma_ap < 0.0 || sigma_gp < 0.0 => {
                Err(Error::Validation("noise standard deviations must be >= 0".into()))
            }
            Noise::TargetEpsilon(e) if !(e > 0.0) => {
                Err(Error::Validation(format!("target epsilon {e} must be positive")))
            }
            _ => Ok(()),
        }
    }

    fn explicit_noise(&self) -> Result<(f64, f64)> {
        match self.noise {
            Noise::Explicit { sigma_ap, sigma_gp } => Ok((sigma_ap, sigma_gp)),
            Noise::TargetEpsilon(_) => Err(Error::Validation(
                "accounting needs explicit noise scales; calibrate first".into(),
            )),
        }
    }
}

/// `1 / (10 · private units)`: edges for edge level, nodes for node level.
pub fn default_delta(private_units: usize) -> f64 {
    1.0 / (10.0 * private_units.max(1) as f64)
}

/// Total node-level RDP at order `alpha`: `(K+1)·T` subsampled Gaussian
/// steps plus `K` NAP queries of sensitivity `sqrt(D)`.
pub fn total_rdp_node(alpha: f64, spec: &PrivacySpec) -> Result<f64> {
    let (sigma_ap, sigma_gp) = spec.explicit_noise()?;
    let steps = (spec.depth + 1) * spec.iterations;
    let dpsgd = if steps == 0 {
        0.0
    } else {
        steps as f64 * rdp_subsampled_gaussian(alpha, spec.sampling_rate(), spec.clip, sigma_gp)?
    };
    Ok(dpsgd + rdp_nap_total(alpha, sigma_ap, spec.depth, PrivacyLevel::Node, spec.degree_cap))
}

/// `ε = min_α ε_rdp(α) + log(1/δ)/(α − 1)` over the curve's orders.
pub fn rdp_to_dp(curve: &RdpCurve, delta: f64) -> Result<DpConversion> {
    if curve.is_empty() {
        return Err(Error::Validation("cannot convert an empty RDP curve".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Validation(format!("delta {delta} is not in (0, 1)")));
    }
    if curve.values.iter().all(|&v| v == 0.0) {
        return Ok(DpConversion {
            epsilon: 0.0,
            alpha_star: None,
        });
    }
    let log_inv_delta = (1.0 / delta).ln();
    let mut best = DpConversion {
        epsilon: f64::INFINITY,
        alpha_star: None,
    };
    for (&alpha, &rdp) in curve.orders.iter().zip(&curve.values) {
        let eps = rdp + log_inv_delta / (alpha - 1.0);
        if eps < best.epsilon {
            best = DpConversion {
                epsilon: eps,
                alpha_star: Some(alpha),
            };
        }
    }
    Ok(best)
}

/// Edge-level ε of `K` NAP queries in closed form:
/// `K/(2σ²) + sqrt(2K log(1/δ))/σ`, the real-order minimum of
/// `Kα/(2σ²) + log(1/δ)/(α−1)`.
pub fn edge_epsilon_closed_form(depth: usize, sigma: f64, delta: f64) -> f64 {
    if depth == 0 {
        return 0.0;
    }
    if sigma <= 0.0 {
        return f64::INFINITY;
    }
    let k = depth as f64;
    k / (2.0 * sigma * sigma) + (2.0 * k * (1.0 / delta).ln()).sqrt() / sigma
}

/// The order attaining [`edge_epsilon_closed_form`]: `1 + σ sqrt(2 log(1/δ) / K)`.
pub fn edge_optimal_order(depth: usize, sigma: f64, delta: f64) -> Option<f64> {
    (depth > 0 && sigma > 0.0).then(|| 1.0 + sigma * (2.0 * (1.0 / delta).ln() / depth as f64).sqrt())
}

/// RDP of each mechanism family at the reported order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanismTerms {
    pub nap: f64,
    pub dpsgd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccountingParams {
    pub depth: usize,
    pub sigma_ap: f64,
    pub sigma_gp: f64,
    pub degree_cap: usize,
    pub clip: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub num_nodes: usize,
    pub sampling_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccountingReport {
    pub level: PrivacyLevel,
    /// `None` in JSON when the bound is infinite.
    #[serde(with = "finite_or_null")]
    pub epsilon: f64,
    pub delta: f64,
    pub alpha_star: Option<f64>,
    pub terms: MechanismTerms,
    /// Edge level only: minimum over the discrete order grid, which upper
    /// bounds the closed-form `epsilon`.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub grid_epsilon: Option<f64>,
    pub params: AccountingParams,
}

mod finite_or_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Accounts a run with explicit noise scales.
pub fn account(spec: &PrivacySpec) -> Result<AccountingReport> {
    spec.validate()?;
    let (sigma_ap, sigma_gp) = spec.explicit_noise()?;
    let params = AccountingParams {
        depth: spec.depth,
        sigma_ap,
        sigma_gp,
        degree_cap: spec.degree_cap,
        clip: spec.clip,
        batch_size: spec.batch_size,
        iterations: spec.iterations,
        num_nodes: spec.num_nodes,
        sampling_rate: spec.sampling_rate(),
    };
    match spec.level {
        PrivacyLevel::None => Ok(AccountingReport {
            level: spec.level,
            epsilon: f64::INFINITY,
            delta: spec.delta,
            alpha_star: None,
            terms: MechanismTerms { nap: 0.0, dpsgd: 0.0 },
            grid_epsilon: None,
            params,
        }),
        PrivacyLevel::Edge => {
            let curve = RdpCurve::from_fn(gaussian_orders(), |a| {
                Ok(rdp_nap_total(a, sigma_ap, spec.depth, PrivacyLevel::Edge, 0))
            })?;
            let grid = rdp_to_dp(&curve, spec.delta)?;
            let alpha_star = edge_optimal_order(spec.depth, sigma_ap, spec.delta).or(grid.alpha_star);
            let nap = alpha_star.map_or(f64::INFINITY, |a| rdp_nap_total(a, sigma_ap, spec.depth, PrivacyLevel::Edge, 0));
            Ok(AccountingReport {
                level: spec.level,
                epsilon: edge_epsilon_closed_form(spec.depth, sigma_ap, spec.delta),
                delta: spec.delta,
                alpha_star,
                terms: MechanismTerms { nap, dpsgd: 0.0 },
                grid_epsilon: Some(grid.epsilon),
                params,
            })
        }
        PrivacyLevel::Node => {
            let curve = RdpCurve::from_fn(integer_orders(), |a| total_rdp_node(a, spec))?;
            let dp = rdp_to_dp(&curve, spec.delta)?;
            let terms = match dp.alpha_star {
                Some(a) => {
                    let nap = rdp_nap_total(a, sigma_ap, spec.depth, PrivacyLevel::Node, spec.degree_cap);
                    MechanismTerms {
                        nap,
                        dpsgd: total_rdp_node(a, spec)? - nap,
                    }
                }
                None if dp.epsilon == 0.0 => MechanismTerms { nap: 0.0, dpsgd: 0.0 },
                None => MechanismTerms {
                    nap: f64::INFINITY,
                    dpsgd: f64::INFINITY,
                },
            };
            Ok(AccountingReport {
                level: spec.level,
                epsilon: dp.epsilon,
                delta: spec.delta,
                alpha_star: dp.alpha_star,
                terms,
                grid_epsilon: None,
                params,
            })
        }
    }
}

/// Noise scales found by [`calibrate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub sigma_ap: f64,
    pub sigma_gp: f64,
    /// Node level: the single multiplier `λ` with `σ_GP = λC`, `σ_AP = λ sqrt(D)`.
    pub noise_multiplier: Option<f64>,
    /// ε actually achieved by the returned scales (`<=` target).
    #[serde(with = "finite_or_null")]
    pub epsilon: f64,
}

const MAX_NOISE: f64 = 1e6;
const MAX_BISECTIONS: usize = 300;

/// Finds the smallest noise meeting a target ε.
///
/// Edge level bisects `σ` against the closed form until the achieved ε is
/// within `1e-6` (relative) below the target. Node level bisects the shared
/// multiplier `λ` until `ε(λ) <= target <= ε(λ)(1 + 1e-4)`.
pub fn calibrate(spec: &PrivacySpec) -> Result<Calibration> {
    spec.validate()?;
    let target = match spec.noise {
        Noise::TargetEpsilon(e) => e,
        Noise::Explicit { .. } => {
            return Err(Error::Validation("calibration needs a target epsilon".into()));
        }
    };
    let zero = |epsilon| Calibration {
        sigma_ap: 0.0,
        sigma_gp: 0.0,
        noise_multiplier: (spec.level == PrivacyLevel::Node).then_some(0.0),
        epsilon,
    };
    if target.is_infinite() || spec.level == PrivacyLevel::None {
        return Ok(zero(f64::INFINITY));
    }

    match spec.level {
        PrivacyLevel::Edge => {
            if spec.depth == 0 {
                return Ok(zero(0.0));
            }
            let eps = |sigma: f64| edge_epsilon_closed_form(spec.depth, sigma, spec.delta);
            let sigma = bisect_noise(target, eps, 1e-6)?;
            Ok(Calibration {
                sigma_ap: sigma,
                sigma_gp: 0.0,
                noise_multiplier: None,
                epsilon: eps(sigma),
            })
        }
        PrivacyLevel::Node => {
            if spec.depth == 0 && spec.iterations == 0 {
                return Ok(zero(0.0));
            }
            let scales = |lambda: f64| (lambda * (spec.degree_cap as f64).sqrt(), lambda * spec.clip);
            let eps = |lambda: f64| {
                let (ap, gp) = scales(lambda);
                account(&spec.with_noise(ap, gp)).map_or(f64::INFINITY, |r| r.epsilon)
            };
            let lambda = bisect_noise(target, eps, 1e-4)?;
            let (sigma_ap, sigma_gp) = scales(lambda);
            Ok(Calibration {
                sigma_ap,
                sigma_gp,
                noise_multiplier: Some(lambda),
                epsilon: eps(lambda),
            })
        }
        PrivacyLevel::None => unreachable!(),
    }
}

/// Smallest noise `x` (up to tolerance) with `eps(x) <= target`, for `eps`
/// non-increasing in `x`. Stops once `eps(x) · (1 + rel_tol) >= target`.
fn bisect_noise(target: f64, eps: impl Fn(f64) -> f64, rel_tol: f64) -> Result<f64> {
    let mut hi = 1.0;
    while eps(hi) > target {
        hi *= 2.0;
        if hi > MAX_NOISE {
            return Err(Error::Calibration {
                target,
                achievable: eps(MAX_NOISE),
            });
        }
    }
    let mut lo = 0.0;
    for _ in 0..MAX_BISECTIONS {
        if eps(hi) * (1.0 + rel_tol) >= target {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if eps(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}
