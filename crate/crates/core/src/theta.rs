//! The stochastic theta (ST) method on the random grid `τ_n = D_{nδ}`:
//!
//! `X̃_{n+1} = X̃_n + (1-θ)F(τ_n, X̃_n)δ + θF(τ_{n+1}, X̃_{n+1})δ + G(τ_n, X̃_n)ΔB_n`,
//!
//! with the forward-backward Euler-Maruyama (FBEM) companion and the
//! mean-square stability threshold of the scheme.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{BrownianDriver, ClockError, SubordinatorPath};
use crate::model::ModelDescriptor;
use crate::special_fn::StabilityIndex;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemeError {
    #[error("invalid scheme configuration: {0}")]
    Config(String),
    #[error("missing model constant {0}")]
    MissingConstant(&'static str),
    #[error("implicit solve failed{}: residual {residual:e}, bracket [{lo}, {hi}]", step.map(|s| format!(" at step {s}")).unwrap_or_default())]
    Solver {
        step: Option<usize>,
        residual: f64,
        lo: f64,
        hi: f64,
    },
    #[error(transparent)]
    Clock(#[from] ClockError),
}

/// Tolerances of the per-step implicit solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOptions {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: u32,
    #[serde(default = "default_bracket_cap")]
    pub bracket_expansion_cap: u32,
}

fn default_tol() -> f64 {
    1e-12
}

fn default_max_iter() -> u32 {
    100
}

fn default_bracket_cap() -> u32 {
    60
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            max_iter: default_max_iter(),
            bracket_expansion_cap: default_bracket_cap(),
        }
    }
}

impl SolverOptions {
    pub fn check(&self) -> Result<(), SchemeError> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(SchemeError::Config(format!(
                "solver tolerance must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 || self.bracket_expansion_cap == 0 {
            return Err(SchemeError::Config(
                "solver iteration caps must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub theta: f64,
    pub delta: f64,
    pub horizon: f64,
    pub solver: SolverOptions,
}

impl SchemeConfig {
    pub fn new(theta: f64, delta: f64, horizon: f64) -> Result<Self, SchemeError> {
        let c = Self {
            theta,
            delta,
            horizon,
            solver: SolverOptions::default(),
        };
        c.check()?;
        Ok(c)
    }

    pub fn check(&self) -> Result<(), SchemeError> {
        check_theta(self.theta)?;
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(SchemeError::Config(format!(
                "delta must be positive, got {}",
                self.delta
            )));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(SchemeError::Config(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        self.solver.check()
    }

    /// Convergence of the scheme is proven for `θ ∈ [1/2, 1]` only.
    pub fn in_proven_range(&self) -> bool {
        self.theta >= 0.5
    }
}

fn check_theta(theta: f64) -> Result<(), SchemeError> {
    if (0.0..=1.0).contains(&theta) {
        Ok(())
    } else {
        Err(SchemeError::Config(format!(
            "theta must lie in [0, 1], got {theta}"
        )))
    }
}

/// `δ* = min{1, 1/(K₁θ), 1/(K₄θ)}`; nonpositive `K₄` adds no restriction.
pub fn max_stepsize(model: &ModelDescriptor, theta: f64) -> Result<f64, SchemeError> {
    check_theta(theta)?;
    let c = model.constants();
    let k1 = c.k1.ok_or(SchemeError::MissingConstant("k1"))?;
    let k4 = c.k4.ok_or(SchemeError::MissingConstant("k4"))?;
    let mut d = 1.0f64;
    if theta > 0.0 {
        d = d.min(1.0 / (k1 * theta));
        if k4 > 0.0 {
            d = d.min(1.0 / (k4 * theta));
        }
    }
    Ok(d)
}

/// Result of one implicit solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Solve {
    pub x: f64,
    /// Newton iterations plus bisection steps.
    pub iterations: u32,
    pub bisection: bool,
}

/// Solves `x - θδF(t, x) = b`.
///
/// Damped Newton from `x = b`, falling back to bracketing and bisection,
/// which converges because `x ↦ x - θδF(t, x)` is increasing for `δ < δ*`.
pub fn implicit_solve(
    model: &ModelDescriptor,
    t: f64,
    theta: f64,
    delta: f64,
    b: f64,
    opts: &SolverOptions,
) -> Result<Solve, SchemeError> {
    if theta == 0.0 {
        return Ok(Solve {
            x: b,
            iterations: 0,
            bisection: false,
        });
    }
    let c = theta * delta;
    let g = |x: f64| x - c * model.drift(t, x) - b;
    let tol = opts.tol * b.abs().max(1.0);
    let mut x = b;
    let mut gx = g(x);
    let mut iterations = 0;
    while iterations < opts.max_iter {
        if gx.abs() <= tol {
            return Ok(Solve {
                x,
                iterations,
                bisection: false,
            });
        }
        let slope = 1.0 - c * drift_slope(model, t, x);
        if !(slope > 0.0 && slope.is_finite() && gx.is_finite()) {
            break;
        }
        iterations += 1;
        let step = gx / slope;
        let mut damping = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let cand = x - damping * step;
            let gc = g(cand);
            if gc.abs() < gx.abs() {
                x = cand;
                gx = gc;
                accepted = true;
                break;
            }
            damping *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if gx.abs() <= tol {
        return Ok(Solve {
            x,
            iterations,
            bisection: false,
        });
    }
    bisect(&g, b, tol, opts).map(|(x, steps)| Solve {
        x,
        iterations: iterations + steps,
        bisection: true,
    })
}

fn drift_slope(model: &ModelDescriptor, t: f64, x: f64) -> f64 {
    model.drift_derivative(t, x).unwrap_or_else(|| {
        let h = 1e-6 * x.abs().max(1.0);
        (model.drift(t, x + h) - model.drift(t, x - h)) / (2.0 * h)
    })
}

fn bisect<G: Fn(f64) -> f64>(
    g: &G,
    b: f64,
    tol: f64,
    opts: &SolverOptions,
) -> Result<(f64, u32), SchemeError> {
    let g0 = g(b);
    let mut step = b.abs().max(1.0);
    let (mut lo, mut hi) = (b, b);
    let fail = |residual: f64, lo: f64, hi: f64| SchemeError::Solver {
        step: None,
        residual,
        lo,
        hi,
    };
    if g0 > 0.0 {
        let mut found = false;
        for _ in 0..opts.bracket_expansion_cap {
            lo = b - step;
            if g(lo) <= 0.0 {
                found = true;
                break;
            }
            hi = lo;
            step *= 2.0;
        }
        if !found {
            return Err(fail(g0.abs(), lo, hi));
        }
    } else if g0 < 0.0 {
        let mut found = false;
        for _ in 0..opts.bracket_expansion_cap {
            hi = b + step;
            if g(hi) >= 0.0 {
                found = true;
                break;
            }
            lo = hi;
            step *= 2.0;
        }
        if !found {
            return Err(fail(g0.abs(), lo, hi));
        }
    } else if g0.is_nan() {
        return Err(fail(f64::NAN, b, b));
    } else {
        return Ok((b, 0));
    }
    let mut steps = 0;
    loop {
        let mid = 0.5 * (lo + hi);
        let gm = g(mid);
        if gm.abs() <= tol {
            return Ok((mid, steps));
        }
        if mid <= lo || mid >= hi || steps >= 2000 || gm.is_nan() {
            let (gl, gh) = (g(lo), g(hi));
            let (best, r) = if gl.abs() <= gh.abs() {
                (lo, gl.abs())
            } else {
                (hi, gh.abs())
            };
            if r <= tol {
                return Ok((best, steps));
            }
            return Err(fail(r.min(gm.abs()), lo, hi));
        }
        steps += 1;
        if gm > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
}

/// One ST step from `τ_n` to `τ_{n+1}`.
#[allow(clippy::too_many_arguments)]
pub fn st_step(
    model: &ModelDescriptor,
    x_prev: f64,
    tau_n: f64,
    tau_next: f64,
    theta: f64,
    delta: f64,
    d_b: f64,
    opts: &SolverOptions,
) -> Result<Solve, SchemeError> {
    let b = x_prev
        + (1.0 - theta) * model.drift(tau_n, x_prev) * delta
        + model.diffusion(tau_n, x_prev) * d_b;
    implicit_solve(model, tau_next, theta, delta, b, opts)
}

/// One FBEM step; the coefficients are evaluated on the ST value `x_tilde_n`.
pub fn fbem_step(
    model: &ModelDescriptor,
    xhat_prev: f64,
    x_tilde_n: f64,
    tau_n: f64,
    delta: f64,
    d_b: f64,
) -> f64 {
    xhat_prev + model.drift(tau_n, x_tilde_n) * delta + model.diffusion(tau_n, x_tilde_n) * d_b
}

/// ST (and optionally FBEM) values on the grid `τ_0, …, τ_N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub tau: Vec<f64>,
    pub x_st: Vec<f64>,
    pub x_fbem: Option<Vec<f64>>,
    /// Solver iterations for the step ending at each grid point (0 at `n = 0`).
    pub newton_iters: Vec<u32>,
    /// Number of steps that needed the bisection fallback.
    pub bisection_steps: usize,
    pub warnings: Vec<String>,
    /// Physical time up to which the record is valid.
    pub horizon: f64,
}

impl TrajectoryRecord {
    pub fn final_value(&self) -> f64 {
        *self.x_st.last().expect("trajectory is never empty")
    }

    /// Piecewise-constant readout `X̃_{τ_{n_t}}`.
    pub fn value_at(&self, t: f64) -> Result<f64, SchemeError> {
        if !(t >= 0.0 && t <= self.horizon) {
            return Err(SchemeError::Config(format!(
                "t = {t} outside [0, {}]",
                self.horizon
            )));
        }
        let n = self.tau.partition_point(|&v| v <= t) - 1;
        Ok(self.x_st[n])
    }
}

/// Runs the scheme along the grid `tau` with noise increments `d_b`.
pub fn integrate_on_grid(
    model: &ModelDescriptor,
    theta: f64,
    delta: f64,
    tau: &[f64],
    d_b: &[f64],
    opts: &SolverOptions,
    with_fbem: bool,
) -> Result<TrajectoryRecord, SchemeError> {
    check_theta(theta)?;
    if tau.is_empty() || tau[0] != 0.0 {
        return Err(SchemeError::Config("grid must start at 0".into()));
    }
    let steps = tau.len() - 1;
    if d_b.len() < steps {
        return Err(SchemeError::Config(format!(
            "{} noise increments for {steps} steps",
            d_b.len()
        )));
    }
    let mut warnings = Vec::new();
    if let Ok(d_star) = max_stepsize(model, theta) {
        if delta >= d_star {
            warnings.push(format!(
                "delta {delta} is not below the solvability bound {d_star}"
            ));
        }
    }
    let x0 = model.x0();
    let mut x_st = Vec::with_capacity(tau.len());
    let mut newton_iters = Vec::with_capacity(tau.len());
    let mut x_fbem = with_fbem.then(|| {
        let mut v = Vec::with_capacity(tau.len());
        v.push(x0);
        v
    });
    x_st.push(x0);
    newton_iters.push(0);
    let mut bisection_steps = 0;
    let mut x = x0;
    for n in 0..steps {
        let s =
            st_step(model, x, tau[n], tau[n + 1], theta, delta, d_b[n], opts).map_err(
                |e| match e {
                    SchemeError::Solver {
                        residual, lo, hi, ..
                    } => SchemeError::Solver {
                        step: Some(n),
                        residual,
                        lo,
                        hi,
                    },
                    other => other,
                },
            )?;
        if let Some(fb) = x_fbem.as_mut() {
            let prev = fb[n];
            fb.push(fbem_step(model, prev, x, tau[n], delta, d_b[n]));
        }
        bisection_steps += usize::from(s.bisection);
        x = s.x;
        x_st.push(x);
        newton_iters.push(s.iterations);
    }
    Ok(TrajectoryRecord {
        tau: tau.to_vec(),
        x_st,
        x_fbem,
        newton_iters,
        bisection_steps,
        warnings,
        horizon: f64::INFINITY,
    })
}

/// Integrates up to `config.horizon` on the grid of `clock`.
pub fn integrate(
    model: &ModelDescriptor,
    config: &SchemeConfig,
    clock: &SubordinatorPath,
    noise: &BrownianDriver,
    with_fbem: bool,
) -> Result<TrajectoryRecord, SchemeError> {
    config.check()?;
    let same = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
    if !same(clock.delta(), noise.delta()) || !same(clock.delta(), config.delta) {
        return Err(SchemeError::Config(format!(
            "step mismatch: clock {}, noise {}, scheme {}",
            clock.delta(),
            noise.delta(),
            config.delta
        )));
    }
    if clock.horizon() < config.horizon {
        return Err(SchemeError::Config(format!(
            "clock horizon {} is shorter than the scheme horizon {}",
            clock.horizon(),
            config.horizon
        )));
    }
    let n_t = clock.inverse().index_at(config.horizon)?;
    let mut rec = integrate_on_grid(
        model,
        config.theta,
        config.delta,
        &clock.values()[..=n_t],
        noise.increments(),
        &config.solver,
        with_fbem,
    )?;
    rec.horizon = config.horizon;
    Ok(rec)
}

/// Mean-square stability data of the scheme at one step size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityThreshold {
    pub phi: f64,
    /// `(-ln φ / δ)^α`, defined only for `φ ∈ (0, 1)`.
    pub gamma: Option<f64>,
    /// Largest admissible step; `None` means unbounded (`θ ≥ 1/2`).
    pub delta_max: Option<f64>,
    pub stable: bool,
}

impl StabilityThreshold {
    /// `|φ|^n`, the geometric bound used when `γ` is undefined.
    pub fn geometric_envelope(&self, n: usize) -> f64 {
        self.phi.abs().powi(n as i32)
    }
}

/// `φ(δ) = [1 + (1-θ)²δ²K₅ - δλ/2 - 2(1-θ)δλ] / [1 + θ²δ²K₅ + 2θδλ]`.
pub fn stability_threshold(
    lambda: f64,
    k5: f64,
    theta: f64,
    delta: f64,
    alpha: StabilityIndex,
) -> Result<StabilityThreshold, SchemeError> {
    check_theta(theta)?;
    if !(lambda > 0.0 && k5 > 0.0 && delta > 0.0)
        || !(lambda.is_finite() && k5.is_finite() && delta.is_finite())
    {
        return Err(SchemeError::Config(format!(
            "lambda, k5 and delta must be positive, got {lambda}, {k5}, {delta}"
        )));
    }
    let e = 1.0 - theta;
    let d2k = delta * delta * k5;
    let phi = (1.0 + e * e * d2k - 0.5 * delta * lambda - 2.0 * e * delta * lambda)
        / (1.0 + theta * theta * d2k + 2.0 * theta * delta * lambda);
    let gamma = (phi > 0.0 && phi < 1.0).then(|| (-phi.ln() / delta).powf(alpha.get()));
    let delta_max = (theta < 0.5).then(|| 5.0 * lambda / (2.0 * k5 * (1.0 - 2.0 * theta)));
    Ok(StabilityThreshold {
        phi,
        gamma,
        delta_max,
        stable: phi.abs() < 1.0,
    })
}
