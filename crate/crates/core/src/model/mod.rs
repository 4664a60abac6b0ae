//! Catalog of scalar TCSDEs `dX_t = F(t, X_t) dE_t + G(t, X_t) dB_{E_t}`:
//! coefficient functions, assumption constants and closed-form solutions.

pub mod expr;
mod validate;

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use expr::{parse_expression, Expr, ExprError};
pub use validate::{
    declared_checks, validate_assumptions, Assumption, AssumptionCheck, ValidationGrid,
    ValidationReport,
};

/// A coefficient `(t, x) -> value`.
pub type Coefficient = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
/// A closed-form solution `(x0, E_t, B_{E_t}) -> X_t`.
pub type ExactSolution = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("missing constant {constant} required by the {check} check")]
    MissingConstant {
        constant: &'static str,
        check: Assumption,
    },
    #[error("invalid validation grid: {0}")]
    Grid(String),
    #[error("in {field}: {source}")]
    Expression {
        field: &'static str,
        #[source]
        source: ExprError,
    },
}

fn invalid(name: &'static str, reason: impl Into<String>) -> ModelError {
    ModelError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

/// Constants of the growth, monotonicity, continuity, one-sided Lipschitz
/// and dissipativity assumptions. `None` means undeclared.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssumptionConstants {
    /// Growth exponent `h ≥ 1`.
    pub h: Option<f64>,
    /// Growth constant `C(h)` in `|F| ∨ |G| ≤ C(h)(1 + |x|^h)`.
    pub c_h: Option<f64>,
    pub k1: Option<f64>,
    pub k2: Option<f64>,
    pub k3: Option<f64>,
    pub eta_f: Option<f64>,
    pub eta_g: Option<f64>,
    pub k4: Option<f64>,
    pub lambda: Option<f64>,
    pub k5: Option<f64>,
}

impl AssumptionConstants {
    /// Checks the declared ranges.
    pub fn check(&self) -> Result<(), ModelError> {
        fn range(
            name: &'static str,
            v: Option<f64>,
            ok: impl Fn(f64) -> bool,
            what: &str,
        ) -> Result<(), ModelError> {
            match v {
                Some(x) if !(x.is_finite() && ok(x)) => {
                    Err(invalid(name, format!("must be {what}, got {x}")))
                }
                _ => Ok(()),
            }
        }
        range("h", self.h, |x| x >= 1.0, ">= 1")?;
        range("c_h", self.c_h, |x| x > 0.0, "> 0")?;
        range("k1", self.k1, |x| x > 0.0, "> 0")?;
        range("k2", self.k2, |x| x >= 0.0, ">= 0")?;
        range("k3", self.k3, |x| x >= 0.0, ">= 0")?;
        range("eta_f", self.eta_f, |x| x > 0.0 && x <= 1.0, "in (0, 1]")?;
        range("eta_g", self.eta_g, |x| x > 0.0 && x <= 1.0, "in (0, 1]")?;
        range("k4", self.k4, |_| true, "finite")?;
        range("lambda", self.lambda, |x| x > 0.0, "> 0")?;
        range("k5", self.k5, |x| x > 0.0, "> 0")
    }
}

/// A fully specified model.
#[derive(Clone)]
pub struct ModelDescriptor {
    name: String,
    drift: Coefficient,
    diffusion: Coefficient,
    drift_dx: Option<Coefficient>,
    exact: Option<ExactSolution>,
    x0: f64,
    constants: AssumptionConstants,
    zero_equilibrium: bool,
}

impl fmt::Debug for ModelDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelDescriptor")
            .field("name", &self.name)
            .field("x0", &self.x0)
            .field("constants", &self.constants)
            .field("has_drift_derivative", &self.drift_dx.is_some())
            .field("has_exact_solution", &self.exact.is_some())
            .finish()
    }
}

impl ModelDescriptor {
    pub fn new(
        name: impl Into<String>,
        drift: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        diffusion: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        x0: f64,
    ) -> Result<Self, ModelError> {
        if !x0.is_finite() {
            return Err(invalid("x0", "must be finite"));
        }
        Ok(Self {
            name: name.into(),
            drift: Arc::new(drift),
            diffusion: Arc::new(diffusion),
            drift_dx: None,
            exact: None,
            x0,
            constants: AssumptionConstants::default(),
            zero_equilibrium: false,
        })
    }

    pub fn with_constants(mut self, constants: AssumptionConstants) -> Result<Self, ModelError> {
        constants.check()?;
        self.constants = constants;
        Ok(self)
    }

    pub fn with_drift_derivative(
        mut self,
        f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.drift_dx = Some(Arc::new(f));
        self
    }

    pub fn with_exact_solution(
        mut self,
        f: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.exact = Some(Arc::new(f));
        self
    }

    /// Declares `F(t, 0) = G(t, 0) = 0`, which the validator then checks.
    pub fn with_zero_equilibrium(mut self) -> Self {
        self.zero_equilibrium = true;
        self
    }

    pub fn with_x0(mut self, x0: f64) -> Result<Self, ModelError> {
        if !x0.is_finite() {
            return Err(invalid("x0", "must be finite"));
        }
        self.x0 = x0;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn constants(&self) -> &AssumptionConstants {
        &self.constants
    }

    pub fn zero_equilibrium(&self) -> bool {
        self.zero_equilibrium
    }

    #[inline]
    pub fn drift(&self, t: f64, x: f64) -> f64 {
        (self.drift)(t, x)
    }

    #[inline]
    pub fn diffusion(&self, t: f64, x: f64) -> f64 {
        (self.diffusion)(t, x)
    }

    /// `∂F/∂x` if the model supplies it.
    #[inline]
    pub fn drift_derivative(&self, t: f64, x: f64) -> Option<f64> {
        self.drift_dx.as_ref().map(|f| f(t, x))
    }

    pub fn has_exact_solution(&self) -> bool {
        self.exact.is_some()
    }

    /// `X_t` from `E_t` and `B_{E_t}` when a closed form is known.
    #[inline]
    pub fn exact_solution(&self, e_t: f64, b_at_e_t: f64) -> Option<f64> {
        self.exact.as_ref().map(|f| f(self.x0, e_t, b_at_e_t))
    }
}

/// User-supplied coefficients in the expression language.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserModel {
    pub drift: String,
    pub diffusion: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift_derivative: Option<String>,
    pub x0: f64,
    #[serde(default)]
    pub constants: AssumptionConstants,
}

impl UserModel {
    pub fn build(&self) -> Result<ModelDescriptor, ModelError> {
        let parse = |field: &'static str, src: &str| {
            parse_expression(src).map_err(|source| ModelError::Expression { field, source })
        };
        let f = parse("drift", &self.drift)?;
        let g = parse("diffusion", &self.diffusion)?;
        let mut m = ModelDescriptor::new(
            "user",
            move |t, x| f.eval(t, x),
            move |t, x| g.eval(t, x),
            self.x0,
        )?
        .with_constants(self.constants.clone())?;
        if let Some(src) = &self.drift_derivative {
            let d = parse("drift_derivative", src)?;
            m = m.with_drift_derivative(move |t, x| d.eval(t, x));
        }
        Ok(m)
    }
}

/// Built-in models, with the parameters each one takes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BuiltinModel {
    /// `dX = μX dE + σX dB_E`.
    BlackScholes { mu: f64, sigma: f64, x0: f64 },
    /// `dX = (-X - X³/(1+X²)) dE + X/√(1+X²) dB_E`.
    BoundedNonlinear { x0: f64 },
    /// `dX = κ(θ_t - X) dE + σ_t X³ dB_E` with `θ_t = θ₀ + A sin(ωt)` and
    /// `σ_t = σ₀(1 + g t)`; constants are declared for `t ∈ [0, horizon]`.
    MeanReverting {
        kappa: f64,
        theta0: f64,
        amplitude: f64,
        omega: f64,
        sigma0: f64,
        sigma_growth: f64,
        x0: f64,
        horizon: f64,
    },
    /// `dX = -2X dE + X dB_E`.
    StabilityLinear { x0: f64 },
    /// `dX = (-2X - X³) dE + X dB_E`.
    StabilityCubic { x0: f64 },
    /// `dX = (-X - X³) dE + X² dB_E`.
    StabilityCubicNoise { x0: f64 },
    /// `dX = ((-2t - 1)X - X³) dE + X dB_E`.
    StabilityTimeVarying { x0: f64 },
}

impl BuiltinModel {
    pub fn black_scholes(mu: f64, sigma: f64) -> Self {
        BuiltinModel::BlackScholes { mu, sigma, x0: 1.0 }
    }

    /// Mean-reverting model with `θ_t = 0.05 + 0.03 sin(2πt)`,
    /// `σ_t = 0.4(1 + 0.05t)`, `κ = 0.65`, `x₀ = 1`, `T = 1`.
    pub fn mean_reverting_default() -> Self {
        BuiltinModel::MeanReverting {
            kappa: 0.65,
            theta0: 0.05,
            amplitude: 0.03,
            omega: 2.0 * PI,
            sigma0: 0.4,
            sigma_growth: 0.05,
            x0: 1.0,
            horizon: 1.0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BuiltinModel::BlackScholes { .. } => "black_scholes",
            BuiltinModel::BoundedNonlinear { .. } => "bounded_nonlinear",
            BuiltinModel::MeanReverting { .. } => "mean_reverting",
            BuiltinModel::StabilityLinear { .. } => "stability_linear",
            BuiltinModel::StabilityCubic { .. } => "stability_cubic",
            BuiltinModel::StabilityCubicNoise { .. } => "stability_cubic_noise",
            BuiltinModel::StabilityTimeVarying { .. } => "stability_time_varying",
        }
    }
}

/// Expands a catalog entry into a descriptor with its declared constants.
pub fn make_builtin(tag: &BuiltinModel) -> Result<ModelDescriptor, ModelError> {
    let finite = |name: &'static str, v: f64| {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(invalid(name, format!("must be finite, got {v}")))
        }
    };
    let name = tag.name();
    let m = match *tag {
        BuiltinModel::BlackScholes { mu, sigma, x0 } => {
            let mu = finite("mu", mu)?;
            if !(sigma > 0.0 && sigma.is_finite()) {
                return Err(invalid("sigma", format!("must be > 0, got {sigma}")));
            }
            if !(x0 > 0.0 && x0.is_finite()) {
                return Err(invalid("x0", format!("must be > 0, got {x0}")));
            }
            let half_var = 0.5 * sigma * sigma;
            let dissipation = -(mu + half_var);
            ModelDescriptor::new(name, move |_, x| mu * x, move |_, x| sigma * x, x0)?
                .with_drift_derivative(move |_, _| mu)
                .with_exact_solution(move |x0, e, b| bs_formula(x0, mu, sigma, e, b))
                .with_zero_equilibrium()
                .with_constants(AssumptionConstants {
                    h: Some(1.0),
                    c_h: Some(mu.abs().max(sigma)),
                    k1: Some((mu + half_var).max(half_var)),
                    k2: Some(0.0),
                    k3: Some(0.0),
                    eta_f: Some(1.0),
                    eta_g: Some(1.0),
                    k4: Some(mu),
                    lambda: (dissipation > 0.0).then_some(dissipation),
                    k5: (mu != 0.0).then_some(mu * mu),
                })?
        }
        BuiltinModel::BoundedNonlinear { x0 } => ModelDescriptor::new(
            name,
            |_, x| -x - x * x * x / (1.0 + x * x),
            |_, x| x / (1.0 + x * x).sqrt(),
            finite("x0", x0)?,
        )?
        .with_drift_derivative(|_, x| {
            let s = 1.0 + x * x;
            -1.0 - x * x * (x * x + 3.0) / (s * s)
        })
        .with_zero_equilibrium()
        .with_constants(AssumptionConstants {
            h: Some(1.0),
            c_h: Some(2.0),
            k1: Some(1.0),
            k2: Some(0.0),
            k3: Some(0.0),
            eta_f: Some(1.0),
            eta_g: Some(1.0),
            k4: Some(-1.0),
            lambda: Some(0.5),
            k5: Some(4.0),
        })?,
        BuiltinModel::MeanReverting {
            kappa,
            theta0,
            amplitude,
            omega,
            sigma0,
            sigma_growth,
            x0,
            horizon,
        } => {
            if !(kappa > 0.0 && kappa.is_finite()) {
                return Err(invalid("kappa", format!("must be > 0, got {kappa}")));
            }
            let (theta0, amplitude, omega) = (
                finite("theta0", theta0)?,
                finite("amplitude", amplitude)?,
                finite("omega", omega)?,
            );
            let (sigma0, sigma_growth) = (
                finite("sigma0", sigma0)?,
                finite("sigma_growth", sigma_growth)?,
            );
            if !(horizon > 0.0 && horizon.is_finite()) {
                return Err(invalid("horizon", format!("must be > 0, got {horizon}")));
            }
            let m_theta = theta0.abs() + amplitude.abs();
            let m_sigma = (sigma0 * (1.0 + sigma_growth * horizon))
                .abs()
                .max(sigma0.abs());
            let k1 = (0.5 * kappa * m_theta * m_theta + 0.5 * m_sigma * m_sigma).max(0.5 * kappa);
            ModelDescriptor::new(
                name,
                move |t, x| kappa * (theta0 + amplitude * (omega * t).sin() - x),
                move |t, x| sigma0 * (1.0 + sigma_growth * t) * x * x * x,
                finite("x0", x0)?,
            )?
            .with_drift_derivative(move |_, _| -kappa)
            .with_constants(AssumptionConstants {
                h: Some(1.0),
                c_h: Some((kappa * m_theta.max(1.0)).max(m_sigma)),
                k1: Some(k1),
                k2: Some(kappa * amplitude.abs() * omega.abs()),
                k3: Some((sigma0 * sigma_growth).abs()),
                eta_f: Some(1.0),
                eta_g: Some(1.0),
                k4: Some(-kappa),
                lambda: None,
                k5: None,
            })?
        }
        BuiltinModel::StabilityLinear { x0 } => {
            ModelDescriptor::new(name, |_, x| -2.0 * x, |_, x| x, finite("x0", x0)?)?
                .with_drift_derivative(|_, _| -2.0)
                .with_exact_solution(|x0, e, b| bs_formula(x0, -2.0, 1.0, e, b))
                .with_zero_equilibrium()
                .with_constants(AssumptionConstants {
                    h: Some(1.0),
                    c_h: Some(2.0),
                    k1: Some(1.0),
                    k2: Some(0.0),
                    k3: Some(0.0),
                    eta_f: Some(1.0),
                    eta_g: Some(1.0),
                    k4: Some(-2.0),
                    lambda: Some(2.5),
                    k5: Some(4.0),
                })?
        }
        BuiltinModel::StabilityCubic { x0 } => ModelDescriptor::new(
            name,
            |_, x| -2.0 * x - x * x * x,
            |_, x| x,
            finite("x0", x0)?,
        )?
        .with_drift_derivative(|_, x| -2.0 - 3.0 * x * x)
        .with_zero_equilibrium()
        .with_constants(stability_constants(-2.0, 1.5, None))?,
        BuiltinModel::StabilityCubicNoise { x0 } => {
            ModelDescriptor::new(name, |_, x| -x - x * x * x, |_, x| x * x, finite("x0", x0)?)?
                .with_drift_derivative(|_, x| -1.0 - 3.0 * x * x)
                .with_zero_equilibrium()
                .with_constants(stability_constants(-1.0, 1.0, None))?
        }
        BuiltinModel::StabilityTimeVarying { x0 } => ModelDescriptor::new(
            name,
            |t, x| (-2.0 * t - 1.0) * x - x * x * x,
            |_, x| x,
            finite("x0", x0)?,
        )?
        .with_drift_derivative(|t, x| -2.0 * t - 1.0 - 3.0 * x * x)
        .with_zero_equilibrium()
        .with_constants(stability_constants(-1.0, 0.5, Some(2.0)))?,
    };
    Ok(m)
}

fn stability_constants(k4: f64, lambda: f64, k2: Option<f64>) -> AssumptionConstants {
    AssumptionConstants {
        h: Some(1.0),
        c_h: None,
        k1: Some(1.0),
        k2: Some(k2.unwrap_or(0.0)),
        k3: Some(0.0),
        eta_f: Some(1.0),
        eta_g: Some(1.0),
        k4: Some(k4),
        lambda: Some(lambda),
        k5: None,
    }
}

#[inline]
fn bs_formula(x0: f64, mu: f64, sigma: f64, e_t: f64, b: f64) -> f64 {
    x0 * ((mu - 0.5 * sigma * sigma) * e_t + sigma * b).exp()
}

/// `X_t = x₀ exp{(μ - σ²/2)E_t + σB_{E_t}}`.
pub fn bs_exact_solution(
    x0: f64,
    mu: f64,
    sigma: f64,
    e_t: f64,
    b_at_e_t: f64,
) -> Result<f64, ModelError> {
    if !(x0 > 0.0 && x0.is_finite()) {
        return Err(invalid("x0", format!("must be > 0, got {x0}")));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(invalid("sigma", format!("must be >= 0, got {sigma}")));
    }
    Ok(bs_formula(x0, mu, sigma, e_t, b_at_e_t))
}

/// Long-run behaviour of the Black-Scholes solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Asymptotics {
    Diverges,
    Vanishes,
    Oscillates,
}

/// Compares `μ` with `σ²/2`; values within a relative 1e-12 count as equal.
pub fn classify_asymptotics(mu: f64, sigma: f64) -> Result<Asymptotics, ModelError> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(invalid("sigma", format!("must be > 0, got {sigma}")));
    }
    let half_var = 0.5 * sigma * sigma;
    let gap = mu - half_var;
    Ok(if gap.abs() <= 1e-12 * mu.abs().max(half_var) {
        Asymptotics::Oscillates
    } else if gap > 0.0 {
        Asymptotics::Diverges
    } else {
        Asymptotics::Vanishes
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn all_builtins() -> Vec<BuiltinModel> {
        vec![
            BuiltinModel::black_scholes(0.02, 0.2),
            BuiltinModel::BoundedNonlinear { x0: 1.0 },
            BuiltinModel::mean_reverting_default(),
            BuiltinModel::StabilityLinear { x0: 1.0 },
            BuiltinModel::StabilityCubic { x0: 1.0 },
            BuiltinModel::StabilityCubicNoise { x0: 1.0 },
            BuiltinModel::StabilityTimeVarying { x0: 1.0 },
        ]
    }

    #[test]
    fn catalog_examples() {
        let bs = make_builtin(&BuiltinModel::black_scholes(0.02, 0.2)).unwrap();
        assert_eq!(bs.drift(0.3, 1.0), 0.02);
        let bn = make_builtin(&BuiltinModel::BoundedNonlinear { x0: 1.0 }).unwrap();
        assert_eq!(bn.drift(0.0, 0.0), 0.0);
        assert!((bn.diffusion(0.0, 1e6) - 1.0).abs() < 1e-10);
        assert_eq!(bn.constants().h, Some(1.0));
        assert_eq!(bn.constants().k1, Some(1.0));
        let lin = make_builtin(&BuiltinModel::StabilityLinear { x0: 1.0 }).unwrap();
        assert_eq!(lin.drift(0.0, 3.0), -6.0);
        assert_eq!(lin.diffusion(0.0, 3.0), 3.0);
        assert_eq!(lin.constants().lambda, Some(2.5));
        assert_eq!(lin.constants().k5, Some(4.0));
        let tv = make_builtin(&BuiltinModel::StabilityTimeVarying { x0: 1.0 }).unwrap();
        assert_eq!(tv.constants().lambda, Some(0.5));
        let mr = make_builtin(&BuiltinModel::mean_reverting_default()).unwrap();
        assert_relative_eq!(mr.drift(0.25, 0.0), 0.65 * 0.08, max_relative = 1e-14);
        assert_relative_eq!(mr.constants().k1.unwrap(), 0.325);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(make_builtin(&BuiltinModel::BlackScholes {
            mu: 0.1,
            sigma: 0.0,
            x0: 1.0
        })
        .is_err());
        assert!(make_builtin(&BuiltinModel::BlackScholes {
            mu: 0.1,
            sigma: 0.2,
            x0: -1.0
        })
        .is_err());
        let mut mr = BuiltinModel::mean_reverting_default();
        if let BuiltinModel::MeanReverting { kappa, .. } = &mut mr {
            *kappa = -1.0;
        }
        assert!(make_builtin(&mr).is_err());
        assert!(make_builtin(&BuiltinModel::StabilityCubic { x0: f64::NAN }).is_err());
    }

    #[test]
    fn zero_equilibrium_and_finiteness() {
        for tag in all_builtins() {
            let m = make_builtin(&tag).unwrap();
            for i in 0..=20 {
                let t = i as f64 / 20.0;
                if m.zero_equilibrium() {
                    assert_eq!(m.drift(t, 0.0), 0.0, "{}", m.name());
                    assert_eq!(m.diffusion(t, 0.0), 0.0, "{}", m.name());
                }
                for &x in &[-1e3, -1.0, 0.5, 1e3] {
                    assert!(m.drift(t, x).is_finite() && m.diffusion(t, x).is_finite());
                }
            }
        }
    }

    #[test]
    fn analytic_derivatives_match_differences() {
        for tag in all_builtins() {
            let m = make_builtin(&tag).unwrap();
            for &(t, x) in &[(0.0, 0.3), (0.7, -1.9), (0.2, 4.0)] {
                let h = 1e-6;
                let fd = (m.drift(t, x + h) - m.drift(t, x - h)) / (2.0 * h);
                let an = m.drift_derivative(t, x).unwrap();
                assert!(
                    (fd - an).abs() <= 1e-6 * (1.0 + an.abs()),
                    "{} at {x}: {fd} vs {an}",
                    m.name()
                );
            }
        }
    }

    #[test]
    fn exact_solution_examples() {
        assert_relative_eq!(
            bs_exact_solution(1.0, 0.5, 0.0, 2.0, 123.0).unwrap(),
            std::f64::consts::E,
            max_relative = 1e-15
        );
        assert_eq!(bs_exact_solution(1.0, 0.02, 0.2, 1.0, 0.0).unwrap(), 1.0);
        assert_relative_eq!(
            bs_exact_solution(2.0, 0.2, 0.2, 1.0, 1.0).unwrap(),
            2.924_569_178_868_449,
            max_relative = 1e-14
        );
        assert!(bs_exact_solution(0.0, 0.2, 0.2, 1.0, 1.0).is_err());
        let lin = make_builtin(&BuiltinModel::StabilityLinear { x0: 1.0 }).unwrap();
        assert_relative_eq!(
            lin.exact_solution(1.0, 0.0).unwrap(),
            (-2.5f64).exp(),
            max_relative = 1e-15
        );
    }

    #[test]
    fn noise_free_solution_solves_ode() {
        let (x0, mu) = (1.3, 0.7);
        for &e in &[0.0, 0.4, 2.0] {
            let h = 1e-6;
            let x = |e: f64| bs_exact_solution(x0, mu, 0.0, e, 0.0).unwrap();
            let d = (x(e + h) - x(e - h)) / (2.0 * h);
            assert!((d - mu * x(e)).abs() <= 1e-6 * mu * x(e));
        }
    }

    #[test]
    fn asymptotic_trichotomy() {
        assert_eq!(
            classify_asymptotics(0.2, 0.2).unwrap(),
            Asymptotics::Diverges
        );
        assert_eq!(
            classify_asymptotics(0.002, 0.2).unwrap(),
            Asymptotics::Vanishes
        );
        assert_eq!(
            classify_asymptotics(0.02, 0.2).unwrap(),
            Asymptotics::Oscillates
        );
        assert!(classify_asymptotics(0.02, 0.0).is_err());
    }

    #[test]
    fn user_model_builds() {
        let u = UserModel {
            drift: "-x - x^3".into(),
            diffusion: "x^2".into(),
            drift_derivative: Some("-1 - 3*x^2".into()),
            x0: 1.0,
            constants: AssumptionConstants {
                k4: Some(-1.0),
                ..Default::default()
            },
        };
        let m = u.build().unwrap();
        assert_eq!(m.drift(0.0, 2.0), -10.0);
        assert_eq!(m.diffusion(0.0, 2.0), 4.0);
        assert_eq!(m.drift_derivative(0.0, 2.0), Some(-13.0));
        let bad = UserModel {
            diffusion: "x +".into(),
            ..u
        };
        assert!(matches!(
            bad.build(),
            Err(ModelError::Expression {
                field: "diffusion",
                ..
            })
        ));
    }

    proptest! {
        #[test]
        fn trichotomy_scale_invariant(mu in -2.0f64..2.0, sigma in 0.01f64..2.0, c in 0.01f64..100.0) {
            let a = classify_asymptotics(mu, sigma).unwrap();
            let b = classify_asymptotics(c * mu, (c * sigma * sigma).sqrt()).unwrap();
            let gap = (mu - 0.5 * sigma * sigma).abs();
            prop_assume!(gap > 1e-9 * mu.abs().max(sigma * sigma));
            prop_assert_eq!(a, b);
        }
    }
}
