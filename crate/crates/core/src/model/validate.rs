//! Grid falsification of declared assumption constants.
//!
//! Each check reports the largest normalized margin `(lhs - rhs)/(1 + |rhs|)`
//! seen on the grid; a positive margin is a counterexample.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{ModelDescriptor, ModelError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Assumption {
    /// `|F| ∨ |G| ≤ C(h)(1 + |x|^h)`.
    Growth,
    /// `xF + (2h-1)/2 G² ≤ K₁(1 + x²)`.
    Monotone,
    /// `|F(s,x) - F(t,x)| ≤ K₂(1 + |x|)|s-t|^{η_F}`, same for `G` with `K₃, η_G`.
    TimeContinuity,
    /// `(x-y)(F(t,x) - F(t,y)) ≤ K₄(x-y)²`.
    OneSidedLipschitz,
    /// `xF + G²/2 ≤ -λx²`.
    Dissipative,
    /// `F² ≤ K₅x²`.
    DriftQuadratic,
    /// `F(t,0) = G(t,0) = 0`.
    ZeroEquilibrium,
}

impl Assumption {
    pub const ALL: [Assumption; 7] = [
        Assumption::Growth,
        Assumption::Monotone,
        Assumption::TimeContinuity,
        Assumption::OneSidedLipschitz,
        Assumption::Dissipative,
        Assumption::DriftQuadratic,
        Assumption::ZeroEquilibrium,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Assumption::Growth => "growth",
            Assumption::Monotone => "monotone",
            Assumption::TimeContinuity => "time_continuity",
            Assumption::OneSidedLipschitz => "one_sided_lipschitz",
            Assumption::Dissipative => "dissipative",
            Assumption::DriftQuadratic => "drift_quadratic",
            Assumption::ZeroEquilibrium => "zero_equilibrium",
        }
    }
}

impl fmt::Display for Assumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Sampling grid over `t ∈ [0, horizon]`, `x ∈ [-x_max, x_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationGrid {
    pub horizon: f64,
    pub x_max: f64,
    pub n_t: usize,
    pub n_x: usize,
}

impl ValidationGrid {
    pub fn new(horizon: f64) -> Self {
        Self {
            horizon,
            x_max: 1e3,
            n_t: 21,
            n_x: 401,
        }
    }

    fn check(&self) -> Result<(), ModelError> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(ModelError::Grid(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if !(self.x_max > 0.0 && self.x_max.is_finite()) {
            return Err(ModelError::Grid(format!(
                "x_max must be positive, got {}",
                self.x_max
            )));
        }
        if self.n_t < 2 || self.n_x < 2 || self.n_t * self.n_x < 1000 {
            return Err(ModelError::Grid(format!(
                "need at least 1000 points with n_t, n_x >= 2, got {} x {}",
                self.n_t, self.n_x
            )));
        }
        Ok(())
    }

    pub fn times(&self) -> Vec<f64> {
        let n = self.n_t - 1;
        (0..=n)
            .map(|i| self.horizon * i as f64 / n as f64)
            .collect()
    }

    /// Symmetric points clustered near 0 so both small and large `|x|` are probed.
    pub fn states(&self) -> Vec<f64> {
        let n = self.n_x - 1;
        (0..=n)
            .map(|i| {
                let s = 2.0 * i as f64 / n as f64 - 1.0;
                self.x_max * s * s * s.abs()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub assumption: Assumption,
    /// Largest normalized violation; `≤ 0` means no counterexample on the grid.
    pub margin: f64,
    pub worst_t: f64,
    pub worst_x: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub model: String,
    pub grid: ValidationGrid,
    pub checks: Vec<AssumptionCheck>,
}

impl ValidationReport {
    pub fn get(&self, a: Assumption) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.assumption == a)
    }

    pub fn all_satisfied(&self) -> bool {
        self.checks.iter().all(|c| c.satisfied)
    }
}

struct Worst {
    margin: f64,
    t: f64,
    x: f64,
}

impl Worst {
    fn new() -> Self {
        Self {
            margin: f64::NEG_INFINITY,
            t: 0.0,
            x: 0.0,
        }
    }

    fn see(&mut self, lhs: f64, rhs: f64, t: f64, x: f64) {
        let m = (lhs - rhs) / (1.0 + rhs.abs());
        let m = if m.is_nan() { f64::INFINITY } else { m };
        if m > self.margin {
            *self = Self { margin: m, t, x };
        }
    }
}

fn need(v: Option<f64>, constant: &'static str, check: Assumption) -> Result<f64, ModelError> {
    v.ok_or(ModelError::MissingConstant { constant, check })
}

/// Assumptions whose constants the model declares.
pub fn declared_checks(model: &ModelDescriptor) -> Vec<Assumption> {
    let c = model.constants();
    Assumption::ALL
        .into_iter()
        .filter(|a| match a {
            Assumption::Growth => c.h.is_some() && c.c_h.is_some(),
            Assumption::Monotone => c.h.is_some() && c.k1.is_some(),
            Assumption::TimeContinuity => {
                c.k2.is_some() && c.k3.is_some() && c.eta_f.is_some() && c.eta_g.is_some()
            }
            Assumption::OneSidedLipschitz => c.k4.is_some(),
            Assumption::Dissipative => c.lambda.is_some(),
            Assumption::DriftQuadratic => c.k5.is_some(),
            Assumption::ZeroEquilibrium => model.zero_equilibrium(),
        })
        .collect()
}

/// Evaluates each requested assumption on the grid. An empty request means
/// every assumption the model declares constants for.
pub fn validate_assumptions(
    model: &ModelDescriptor,
    grid: &ValidationGrid,
    requested: &[Assumption],
) -> Result<ValidationReport, ModelError> {
    grid.check()?;
    let checks = if requested.is_empty() {
        declared_checks(model)
    } else {
        requested.to_vec()
    };
    let c = model.constants();
    let ts = grid.times();
    let xs = grid.states();
    let mut out = Vec::with_capacity(checks.len());
    for &a in &checks {
        let mut w = Worst::new();
        match a {
            Assumption::Growth => {
                let h = need(c.h, "h", a)?;
                let ch = need(c.c_h, "c_h", a)?;
                for &t in &ts {
                    for &x in &xs {
                        let lhs = model.drift(t, x).abs().max(model.diffusion(t, x).abs());
                        w.see(lhs, ch * (1.0 + x.abs().powf(h)), t, x);
                    }
                }
            }
            Assumption::Monotone => {
                let h = need(c.h, "h", a)?;
                let k1 = need(c.k1, "k1", a)?;
                for &t in &ts {
                    for &x in &xs {
                        let g = model.diffusion(t, x);
                        let lhs = x * model.drift(t, x) + 0.5 * (2.0 * h - 1.0) * g * g;
                        w.see(lhs, k1 * (1.0 + x * x), t, x);
                    }
                }
            }
            Assumption::TimeContinuity => {
                let k2 = need(c.k2, "k2", a)?;
                let k3 = need(c.k3, "k3", a)?;
                let ef = need(c.eta_f, "eta_f", a)?;
                let eg = need(c.eta_g, "eta_g", a)?;
                for (i, &s) in ts.iter().enumerate() {
                    for &t in &ts[i + 1..] {
                        let dt = t - s;
                        for &x in &xs {
                            let df = (model.drift(s, x) - model.drift(t, x)).abs();
                            let dg = (model.diffusion(s, x) - model.diffusion(t, x)).abs();
                            w.see(df, k2 * (1.0 + x.abs()) * dt.powf(ef), t, x);
                            w.see(dg, k3 * (1.0 + x.abs()) * dt.powf(eg), t, x);
                        }
                    }
                }
            }
            Assumption::OneSidedLipschitz => {
                let k4 = need(c.k4, "k4", a)?;
                for &t in &ts {
                    for stride in [1usize, 7, 50] {
                        for (i, &x) in xs.iter().enumerate() {
                            let Some(&y) = xs.get(i + stride) else { break };
                            let d = x - y;
                            let lhs = d * (model.drift(t, x) - model.drift(t, y));
                            w.see(lhs, k4 * d * d, t, x);
                        }
                    }
                }
            }
            Assumption::Dissipative => {
                let lambda = need(c.lambda, "lambda", a)?;
                for &t in &ts {
                    for &x in &xs {
                        let g = model.diffusion(t, x);
                        let lhs = x * model.drift(t, x) + 0.5 * g * g;
                        w.see(lhs, -lambda * x * x, t, x);
                    }
                }
            }
            Assumption::DriftQuadratic => {
                let k5 = need(c.k5, "k5", a)?;
                for &t in &ts {
                    for &x in &xs {
                        let f = model.drift(t, x);
                        w.see(f * f, k5 * x * x, t, x);
                    }
                }
            }
            Assumption::ZeroEquilibrium => {
                for &t in &ts {
                    w.see(
                        model.drift(t, 0.0).abs().max(model.diffusion(t, 0.0).abs()),
                        0.0,
                        t,
                        0.0,
                    );
                }
            }
        }
        out.push(AssumptionCheck {
            assumption: a,
            margin: w.margin,
            worst_t: w.t,
            worst_x: w.x,
            satisfied: w.margin <= 1e-12,
        });
    }
    Ok(ValidationReport {
        model: model.name().to_string(),
        grid: *grid,
        checks: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_builtin, BuiltinModel};

    fn report(tag: BuiltinModel) -> ValidationReport {
        let m = make_builtin(&tag).unwrap();
        validate_assumptions(&m, &ValidationGrid::new(1.0), &[]).unwrap()
    }

    #[test]
    fn bounded_nonlinear_is_clean() {
        let r = report(BuiltinModel::BoundedNonlinear { x0: 1.0 });
        assert!(r.get(Assumption::Monotone).unwrap().margin <= 0.0);
        assert!(r.all_satisfied(), "{r:?}");
    }

    #[test]
    fn mean_reverting_monotone_is_flagged() {
        let r = report(BuiltinModel::mean_reverting_default());
        let m = r.get(Assumption::Monotone).unwrap();
        assert!(m.margin > 0.0 && m.worst_x.abs() > 1.0);
        assert!(r.get(Assumption::OneSidedLipschitz).unwrap().satisfied);
    }

    #[test]
    fn linear_stability_constants() {
        let r = report(BuiltinModel::StabilityLinear { x0: 1.0 });
        assert!(r.get(Assumption::DriftQuadratic).unwrap().satisfied);
        assert!(r.get(Assumption::OneSidedLipschitz).unwrap().satisfied);
        assert!(r.get(Assumption::ZeroEquilibrium).unwrap().satisfied);
        // xF + G²/2 = -1.5x², so λ = 2.5 overshoots the true bound 1.5.
        assert!(!r.get(Assumption::Dissipative).unwrap().satisfied);
        let m = make_builtin(&BuiltinModel::StabilityLinear { x0: 1.0 }).unwrap();
        let mut c = m.constants().clone();
        c.lambda = Some(1.5);
        let m = m.with_constants(c).unwrap();
        let r = validate_assumptions(&m, &ValidationGrid::new(1.0), &[Assumption::Dissipative])
            .unwrap();
        assert!(r.all_satisfied());
    }

    #[test]
    fn cubic_models_dissipative() {
        for tag in [
            BuiltinModel::StabilityCubic { x0: 1.0 },
            BuiltinModel::StabilityCubicNoise { x0: 1.0 },
            BuiltinModel::StabilityTimeVarying { x0: 1.0 },
        ] {
            let r = report(tag);
            assert!(r.all_satisfied(), "{r:?}");
        }
    }

    #[test]
    fn missing_constant_is_named() {
        let m = make_builtin(&BuiltinModel::StabilityCubic { x0: 1.0 }).unwrap();
        let err =
            validate_assumptions(&m, &ValidationGrid::new(1.0), &[Assumption::DriftQuadratic])
                .unwrap_err();
        assert_eq!(
            err,
            ModelError::MissingConstant {
                constant: "k5",
                check: Assumption::DriftQuadratic
            }
        );
    }

    #[test]
    fn small_grid_rejected() {
        let m = make_builtin(&BuiltinModel::StabilityCubic { x0: 1.0 }).unwrap();
        let g = ValidationGrid {
            n_t: 2,
            n_x: 10,
            ..ValidationGrid::new(1.0)
        };
        assert!(matches!(
            validate_assumptions(&m, &g, &[]),
            Err(ModelError::Grid(_))
        ));
    }
}
