//! Scalar special-function kernels.
//!
//! Log-gamma, the one-parameter Mittag-Leffler function
//! `E_α(z) = Σ z^k / Γ(αk + 1)`, and closed-form moments of the inverse
//! α-stable subordinator `E_t`:
//!
//! ```text
//! E[E_t^p]          = Γ(p+1) / Γ(αp+1) · t^{αp}
//! E[exp(ξ E_t^r)]   = Σ ξ^k/k! · Γ(rk+1)/Γ(αrk+1) · t^{αrk}
//! ```
//!
//! All functions are pure.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature;

/// Largest number of series terms evaluated before giving up.
pub const TERM_CAP: usize = 10_000;

/// Beyond this magnitude negative arguments use the asymptotic expansion.
pub const ASYMPTOTIC_THRESHOLD: f64 = 40.0;

/// Up to this magnitude negative arguments are summed as a power series.
const SERIES_THRESHOLD: f64 = 1.0;

/// Half-width of the undetermined band around `r = 1/(1-α)`.
pub const BOUNDARY_BAND: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecialFnError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("series did not converge after {terms} terms (partial sum {partial_sum})")]
    NonConvergence { partial_sum: f64, terms: usize },
    #[error("result overflows f64 after {terms} terms")]
    Overflow { terms: usize },
    #[error("r = {r} lies on the boundary 1/(1-alpha) = {boundary}; finiteness is undetermined")]
    BoundaryUndetermined { r: f64, boundary: f64 },
}

/// Stability index α ∈ (0, 1] of the subordinator.
///
/// α = 1 is admitted as the deterministic-clock limit (`E_t = t`).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct StabilityIndex(f64);

impl StabilityIndex {
    pub fn new(alpha: f64) -> Result<Self, SpecialFnError> {
        if alpha > 0.0 && alpha <= 1.0 {
            Ok(Self(alpha))
        } else {
            Err(SpecialFnError::Domain(format!(
                "stability index must lie in (0, 1], got {alpha}"
            )))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }

    /// True in the deterministic-clock limit α = 1.
    #[inline]
    pub fn is_deterministic(self) -> bool {
        self.0 == 1.0
    }

    /// Laplace exponent ψ(ξ) = ξ^α of the stable subordinator.
    pub fn laplace_exponent(self, xi: f64) -> f64 {
        xi.powf(self.0)
    }
}

impl TryFrom<f64> for StabilityIndex {
    type Error = SpecialFnError;

    fn try_from(value: f64) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<StabilityIndex> for f64 {
    fn from(value: StabilityIndex) -> Self {
        value.0
    }
}

/// Parameters of an exponential-moment query `E[exp(ξ E_t^r)]`, plus the
/// integer moment order `p` used by the polynomial moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentQuery {
    p: u32,
    r: f64,
    xi: f64,
    t: f64,
}

impl MomentQuery {
    pub fn new(p: u32, r: f64, xi: f64, t: f64) -> Result<Self, SpecialFnError> {
        if p < 1 {
            return Err(SpecialFnError::Domain("moment order p must be >= 1".into()));
        }
        if !(r > 0.0 && r.is_finite()) {
            return Err(SpecialFnError::Domain(format!(
                "r must be positive, got {r}"
            )));
        }
        // ξ = 0 is accepted: it collapses the series to its leading term.
        if !(xi >= 0.0 && xi.is_finite()) {
            return Err(SpecialFnError::Domain(format!(
                "xi must be nonnegative, got {xi}"
            )));
        }
        if !(t >= 0.0 && t.is_finite()) {
            return Err(SpecialFnError::Domain(format!(
                "t must be nonnegative, got {t}"
            )));
        }
        Ok(Self { p, r, xi, t })
    }

    /// Exponential-moment query with `p = 1`.
    pub fn exponential(r: f64, xi: f64, t: f64) -> Result<Self, SpecialFnError> {
        Self::new(1, r, xi, t)
    }

    pub fn p(&self) -> u32 {
        self.p
    }
    pub fn r(&self) -> f64 {
        self.r
    }
    pub fn xi(&self) -> f64 {
        self.xi
    }
    pub fn t(&self) -> f64 {
        self.t
    }
}

/// `ln Γ(x)` for `x > 0`.
pub fn log_gamma(x: f64) -> Result<f64, SpecialFnError> {
    if !(x > 0.0) || x.is_nan() {
        return Err(SpecialFnError::Domain(format!(
            "log_gamma requires x > 0, got {x}"
        )));
    }
    Ok(libm::lgamma(x))
}

// Positive-argument log-gamma without the Result wrapper, for internal loops.
#[inline]
fn lgamma_pos(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub(crate) fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.carry += (self.sum - t) + value;
        } else {
            self.carry += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// One-parameter Mittag-Leffler function `E_α(z)` for real `z`.
///
/// Power series for `z > 0` and `|z| ≤ 1`; the completely-monotone integral
/// representation on `-40 ≤ z < -1`; the algebraic asymptotic expansion for
/// `z < -40`.
pub fn mittag_leffler(alpha: StabilityIndex, z: f64) -> Result<f64, SpecialFnError> {
    if !z.is_finite() {
        return Err(SpecialFnError::Domain(format!(
            "argument must be finite, got {z}"
        )));
    }
    let a = alpha.get();
    if alpha.is_deterministic() {
        return Ok(z.exp());
    }
    if z == 0.0 {
        return Ok(1.0);
    }
    if z > 0.0 || -z <= SERIES_THRESHOLD {
        return ml_series(a, z);
    }
    if -z <= ASYMPTOTIC_THRESHOLD {
        return Ok(ml_negative_integral(a, -z));
    }
    match ml_asymptotic(a, z) {
        Some(v) => Ok(v),
        None => Ok(ml_negative_integral(a, -z)),
    }
}

fn ml_series(a: f64, z: f64) -> Result<f64, SpecialFnError> {
    let ln_abs = z.abs().ln();
    let negative = z < 0.0;
    let mut sum = CompensatedSum::default();
    sum.add(1.0);
    let mut previous = 1.0f64;
    for k in 1..TERM_CAP {
        let kf = k as f64;
        let magnitude = (kf * ln_abs - lgamma_pos(a * kf + 1.0)).exp();
        let term = if negative && k % 2 == 1 {
            -magnitude
        } else {
            magnitude
        };
        sum.add(term);
        let total = sum.value();
        if !total.is_finite() {
            return Err(SpecialFnError::Overflow { terms: k + 1 });
        }
        if magnitude <= 1e-17 * total.abs() && magnitude <= previous {
            return Ok(total);
        }
        previous = magnitude;
    }
    Err(SpecialFnError::NonConvergence {
        partial_sum: sum.value(),
        terms: TERM_CAP,
    })
}

/// `E_α(-x)` for `0 < α < 1`, `x > 0`, via
/// `sin(απ)/(απ) ∫_0^∞ exp(-(xu)^{1/α}) / (u² + 2u cos απ + 1) du`,
/// folded onto `[0, 1]` with `u → 1/u`.
fn ml_negative_integral(a: f64, x: f64) -> f64 {
    let inv = 1.0 / a;
    let c = (a * PI).cos();
    let integrand = |u: f64| {
        let den = u * u + 2.0 * u * c + 1.0;
        let near = (-(x * u).powf(inv)).exp();
        let far = if u > 0.0 {
            (-(x / u).powf(inv)).exp()
        } else {
            0.0
        };
        (near + far) / den
    };
    // Split at the width of the exp(-(xu)^{1/α}) layer and keep u = 1 as a node.
    let knee = (1.0 / x).min(0.5);
    let mut total = 0.0;
    for (lo, hi) in [(0.0, knee), (knee, 1.0)] {
        total += quadrature::integrate(integrand, lo, hi, 1e-15, 2_000).value;
    }
    (a * PI).sin() / (a * PI) * total
}

/// `sin(πy)` with argument reduction modulo 2.
fn sin_pi(y: f64) -> f64 {
    let r = y - 2.0 * (y / 2.0).floor();
    (PI * r).sin()
}

/// `-Σ_{k≥1} z^{-k} / Γ(1-αk)` truncated at its smallest term. Returns `None`
/// if the smallest term is not negligible against the sum.
fn ml_asymptotic(a: f64, z: f64) -> Option<f64> {
    let x = -z;
    let ln_x = x.ln();
    let mut sum = CompensatedSum::default();
    let mut previous = f64::INFINITY;
    for k in 1..TERM_CAP {
        let kf = k as f64;
        let ak = a * kf;
        // 1/Γ(1-αk) = sin(παk) Γ(αk) / π
        let s = sin_pi(ak);
        let magnitude = (lgamma_pos(ak) - kf * ln_x).exp() / PI;
        let signed = magnitude * s;
        if s.abs() > 1e-12 {
            if magnitude > previous {
                break;
            }
            previous = magnitude;
        }
        // -(z^{-k}) with z^{-k} = (-1)^k x^{-k}
        let term = if k % 2 == 0 { -signed } else { signed };
        sum.add(term);
        if magnitude <= 1e-17 * sum.value().abs() {
            break;
        }
    }
    let value = sum.value();
    if previous <= 1e-13 * value.abs() {
        Some(value)
    } else {
        None
    }
}

/// `E[E_t^p] = Γ(p+1)/Γ(αp+1) · t^{αp}`.
pub fn inverse_subordinator_moment(
    alpha: StabilityIndex,
    p: u32,
    t: f64,
) -> Result<f64, SpecialFnError> {
    if p < 1 {
        return Err(SpecialFnError::Domain("moment order p must be >= 1".into()));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(SpecialFnError::Domain(format!(
            "t must be nonnegative, got {t}"
        )));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let a = alpha.get();
    let pf = f64::from(p);
    if alpha.is_deterministic() {
        return Ok(t.powi(p as i32));
    }
    Ok((lgamma_pos(pf + 1.0) - lgamma_pos(a * pf + 1.0) + a * pf * t.ln()).exp())
}

/// Value of an exponential-moment series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExpMoment {
    Finite(f64),
    /// `r > 1/(1-α)`: the expectation is infinite.
    Divergent,
}

impl ExpMoment {
    pub fn finite(self) -> Option<f64> {
        match self {
            ExpMoment::Finite(v) => Some(v),
            ExpMoment::Divergent => None,
        }
    }
}

/// `E[exp(ξ E_t^r)]` as the series `Σ ξ^k/k! · Γ(rk+1)/Γ(αrk+1) · t^{αrk}`.
///
/// Summation stops once the next term falls below `1e-14` times the partial
/// sum. For `r > 1/(1-α)` no terms are summed.
pub fn exp_moment_series(
    alpha: StabilityIndex,
    q: &MomentQuery,
    max_terms: usize,
) -> Result<ExpMoment, SpecialFnError> {
    if max_terms < 16 {
        return Err(SpecialFnError::Domain(format!(
            "max_terms must be >= 16, got {max_terms}"
        )));
    }
    let a = alpha.get();
    let r = q.r();
    let boundary = 1.0 / (1.0 - a);
    if (r - boundary).abs() <= BOUNDARY_BAND {
        return Err(SpecialFnError::BoundaryUndetermined { r, boundary });
    }
    if r > boundary {
        return Ok(ExpMoment::Divergent);
    }
    let (xi, t) = (q.xi(), q.t());
    if xi == 0.0 || t == 0.0 {
        return Ok(ExpMoment::Finite(1.0));
    }
    let ln_xi = xi.ln();
    let ln_t = t.ln();
    let mut sum = CompensatedSum::default();
    sum.add(1.0);
    let mut previous = 1.0f64;
    for k in 1..max_terms {
        let kf = k as f64;
        let rk = r * kf;
        let term = (kf * ln_xi - lgamma_pos(kf + 1.0) + lgamma_pos(rk + 1.0)
            - lgamma_pos(a * rk + 1.0)
            + a * rk * ln_t)
            .exp();
        let total = sum.value();
        if term < 1e-14 * total && term <= previous {
            return Ok(ExpMoment::Finite(total));
        }
        sum.add(term);
        if !sum.value().is_finite() {
            return Err(SpecialFnError::Overflow { terms: k + 1 });
        }
        previous = term;
    }
    Err(SpecialFnError::NonConvergence {
        partial_sum: sum.value(),
        terms: max_terms,
    })
}

/// Moment bound for the exact solution:
/// `2^{h-1} · E_α(2hK₁t^α) · (1 + |x₀|^{2h})`.
pub fn exact_moment_bound(
    alpha: StabilityIndex,
    h: f64,
    k1: f64,
    t: f64,
    x0: f64,
) -> Result<f64, SpecialFnError> {
    if !(h >= 1.0) {
        return Err(SpecialFnError::Domain(format!("h must be >= 1, got {h}")));
    }
    if !(k1 > 0.0) {
        return Err(SpecialFnError::Domain(format!(
            "K1 must be positive, got {k1}"
        )));
    }
    if !(t >= 0.0) {
        return Err(SpecialFnError::Domain(format!(
            "t must be nonnegative, got {t}"
        )));
    }
    let z = 2.0 * h * k1 * t.powf(alpha.get());
    let ml = mittag_leffler(alpha, z)?;
    Ok(2f64.powf(h - 1.0) * ml * (1.0 + x0.abs().powf(2.0 * h)))
}
