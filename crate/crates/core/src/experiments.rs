//! Monte Carlo campaigns: strong errors and convergence order, mean-square
//! stability curves with Mittag-Leffler envelopes, and moment checks.
//!
//! Every path draws from its own `(master_seed, path_index)` streams and
//! results are aggregated in path-index order, so reports do not depend on
//! the thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{
    brownian_increments, grid_point, simulate_subordinator, simulate_subordinator_steps,
    step_factor, ClockError, CoupledRealization,
};
use crate::model::ModelDescriptor;
use crate::seeding::{SeedLineage, StreamTag};
use crate::special_fn::{
    exact_moment_bound, inverse_subordinator_moment, mittag_leffler, CompensatedSum,
    SpecialFnError, StabilityIndex,
};
use crate::theta::{
    integrate, integrate_on_grid, stability_threshold, SchemeConfig, SchemeError, SolverOptions,
    StabilityThreshold,
};

/// Path count of desk-scale runs.
pub const DESK_PATHS: usize = 500;
/// Path count of the full-scale figures.
pub const PAPER_PATHS: usize = 3000;
/// Largest share of failed paths tolerated by a strong-error run.
pub const FAILURE_BUDGET: f64 = 0.01;
/// A stability run is divergent once `msq[n]` exceeds this multiple of `msq[0]`.
pub const DIVERGENCE_FACTOR: f64 = 1e3;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{failed} of {total} paths failed, above the {budget}% budget")]
    TooManyFailures {
        failed: usize,
        total: usize,
        budget: f64,
    },
    #[error("fit error: {0}")]
    Fit(String),
    #[error("clock: {0}")]
    Clock(#[from] ClockError),
    #[error("scheme: {0}")]
    Scheme(#[from] SchemeError),
    #[error("special function: {0}")]
    Special(#[from] SpecialFnError),
    #[error("thread pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonteCarloConfig {
    pub n_paths: usize,
    pub master_seed: u64,
    /// Worker threads; `None` uses every available core.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_concurrency: Option<usize>,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self::new(DESK_PATHS, 0)
    }
}

impl MonteCarloConfig {
    pub fn new(n_paths: usize, master_seed: u64) -> Self {
        Self {
            n_paths,
            master_seed,
            max_concurrency: None,
        }
    }

    pub fn with_concurrency(mut self, threads: usize) -> Self {
        self.max_concurrency = Some(threads);
        self
    }

    fn check(&self) -> Result<(), ExperimentError> {
        if self.n_paths == 0 {
            return Err(ExperimentError::Config("n_paths must be positive".into()));
        }
        if self.max_concurrency == Some(0) {
            return Err(ExperimentError::Config(
                "max_concurrency must be positive".into(),
            ));
        }
        Ok(())
    }

    fn lineages(&self, path: u64) -> (SeedLineage, SeedLineage) {
        (
            SeedLineage::new(self.master_seed, path, StreamTag::Clock),
            SeedLineage::new(self.master_seed, path, StreamTag::Noise),
        )
    }
}

/// Evaluates `f` for each path index, returning results in index order.
fn map_paths<T, F>(mc: &MonteCarloConfig, f: F) -> Result<Vec<T>, ExperimentError>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    mc.check()?;
    let n = mc.n_paths as u64;
    match mc.max_concurrency {
        Some(1) => Ok((0..n).map(f).collect()),
        threads => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads.unwrap_or(0))
                .build()
                .map_err(|e| ExperimentError::Pool(e.to_string()))?;
            Ok(pool.install(|| (0..n).into_par_iter().map(f).collect()))
        }
    }
}

/// Sample mean and standard error of the mean, summed in order.
fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mut s = CompensatedSum::default();
    xs.iter().for_each(|&x| s.add(x));
    let mean = s.value() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let mut v = CompensatedSum::default();
    xs.iter().for_each(|&x| v.add((x - mean) * (x - mean)));
    (mean, (v.value() / (n - 1) as f64 / n as f64).sqrt())
}

fn check_alpha_delta(delta: f64) -> Result<(), ExperimentError> {
    if delta > 0.0 && delta.is_finite() {
        Ok(())
    } else {
        Err(ExperimentError::Config(format!(
            "step must be positive, got {delta}"
        )))
    }
}

fn lcm(a: usize, b: usize) -> usize {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    a / gcd(a, b) * b
}

/// How the "exact" value `X(E_T)` of a strong-error run is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceRule {
    /// The model's closed form evaluated at `Ẽ_T` of a clock with step `clock_delta`.
    ClosedForm { clock_delta: f64 },
    /// The ST solution itself at step `delta0`.
    FineGrid { delta0: f64 },
}

impl ReferenceRule {
    fn delta(&self) -> f64 {
        match *self {
            ReferenceRule::ClosedForm { clock_delta } => clock_delta,
            ReferenceRule::FineGrid { delta0 } => delta0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrongErrorRow {
    pub delta: f64,
    pub mse: f64,
    pub se: f64,
    pub n_eff: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrongErrorReport {
    /// Sorted by `delta`, largest first.
    pub rows: Vec<StrongErrorRow>,
    pub reference_rule: ReferenceRule,
    pub n_paths: usize,
    pub failed_paths: usize,
}

/// Mean-square error `(1/N) Σ |X_ref(T, ω_i) - X̃(T, ω_i)|²` per step size,
/// with every step size driven by the same coupled clock and noise.
#[allow(clippy::too_many_arguments)]
pub fn strong_error(
    model: &ModelDescriptor,
    alpha: StabilityIndex,
    theta: f64,
    delta_grid: &[f64],
    horizon: f64,
    reference: ReferenceRule,
    mc: &MonteCarloConfig,
    solver: &SolverOptions,
) -> Result<StrongErrorReport, ExperimentError> {
    if delta_grid.is_empty() {
        return Err(ExperimentError::Config("delta grid is empty".into()));
    }
    for &d in delta_grid.iter().chain([reference.delta()].iter()) {
        check_alpha_delta(d)?;
    }
    if matches!(reference, ReferenceRule::ClosedForm { .. }) && !model.has_exact_solution() {
        return Err(ExperimentError::Config(format!(
            "model {} has no closed-form solution",
            model.name()
        )));
    }
    let base = delta_grid.iter().copied().fold(reference.delta(), f64::min);
    let factors = delta_grid
        .iter()
        .map(|&d| step_factor(d, base))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| ExperimentError::Config(format!("uncoupled step grid: {e}")))?;
    let ref_factor = step_factor(reference.delta(), base)
        .map_err(|e| ExperimentError::Config(format!("uncoupled reference step: {e}")))?;
    let block = factors.iter().fold(ref_factor, |acc, &m| lcm(acc, m));
    let schemes = factors
        .iter()
        .map(|&m| SchemeConfig {
            theta,
            delta: grid_point(m, base),
            horizon,
            solver: *solver,
        })
        .collect::<Vec<_>>();
    for s in &schemes {
        s.check()?;
    }

    let per_path = map_paths(mc, |i| -> Result<Option<Vec<f64>>, ExperimentError> {
        let (cl, nl) = mc.lineages(i);
        let real = CoupledRealization::from_lineage(alpha, base, horizon, block, cl, nl)?;
        let run = |m: usize, cfg: &SchemeConfig| -> Result<Option<f64>, ExperimentError> {
            let clock = real.clock(m)?;
            let noise = real.noise(m, clock.n_steps())?;
            match integrate(
                model,
                &SchemeConfig {
                    delta: clock.delta(),
                    ..*cfg
                },
                &clock,
                &noise,
                false,
            ) {
                Ok(rec) => Ok(Some(rec.final_value()).filter(|v| v.is_finite())),
                Err(SchemeError::Solver { .. }) => Ok(None),
                Err(e) => Err(e.into()),
            }
        };
        let x_ref = match reference {
            ReferenceRule::ClosedForm { .. } => {
                let clock = real.clock(ref_factor)?;
                let n = clock.inverse().index_at(horizon)?;
                let e_t = grid_point(n, clock.delta());
                let mut b = CompensatedSum::default();
                real.base_noise()[..n * ref_factor]
                    .iter()
                    .for_each(|&z| b.add(z));
                model
                    .exact_solution(e_t, b.value())
                    .filter(|v| v.is_finite())
            }
            ReferenceRule::FineGrid { .. } => {
                let cfg = SchemeConfig {
                    theta,
                    delta: grid_point(ref_factor, base),
                    horizon,
                    solver: *solver,
                };
                run(ref_factor, &cfg)?
            }
        };
        let Some(x_ref) = x_ref else { return Ok(None) };
        let mut errs = Vec::with_capacity(factors.len());
        for (&m, cfg) in factors.iter().zip(&schemes) {
            match run(m, cfg)? {
                Some(x) => errs.push((x_ref - x) * (x_ref - x)),
                None => return Ok(None),
            }
        }
        Ok(Some(errs))
    })?;

    let mut ok: Vec<Vec<f64>> = Vec::with_capacity(mc.n_paths);
    for r in per_path {
        if let Some(v) = r? {
            ok.push(v);
        }
    }
    let failed = mc.n_paths - ok.len();
    if failed as f64 > FAILURE_BUDGET * mc.n_paths as f64 {
        return Err(ExperimentError::TooManyFailures {
            failed,
            total: mc.n_paths,
            budget: FAILURE_BUDGET * 100.0,
        });
    }
    let mut rows: Vec<StrongErrorRow> = schemes
        .iter()
        .enumerate()
        .map(|(j, s)| {
            let col: Vec<f64> = ok.iter().map(|v| v[j]).collect();
            let (mse, se) = mean_se(&col);
            StrongErrorRow {
                delta: s.delta,
                mse,
                se,
                n_eff: col.len(),
            }
        })
        .collect();
    rows.sort_by(|a, b| b.delta.total_cmp(&a.delta));
    Ok(StrongErrorReport {
        rows,
        reference_rule: reference,
        n_paths: mc.n_paths,
        failed_paths: failed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    /// Fitted strong order.
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub rows: Vec<StrongErrorRow>,
    /// Rows left out because their error was zero.
    pub excluded_rows: usize,
}

/// Least-squares fit of `½ ln(mse)` against `ln δ`.
pub fn fit_order(report: &StrongErrorReport) -> Result<ConvergenceReport, ExperimentError> {
    let usable: Vec<(f64, f64)> = report
        .rows
        .iter()
        .filter(|r| r.mse > 0.0 && r.mse.is_finite())
        .map(|r| (r.delta.ln(), 0.5 * r.mse.ln()))
        .collect();
    if usable.len() < 3 {
        return Err(ExperimentError::Fit(format!(
            "need at least 3 rows with positive error, got {}",
            usable.len()
        )));
    }
    let n = usable.len() as f64;
    let mx = usable.iter().map(|p| p.0).sum::<f64>() / n;
    let my = usable.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = usable.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = usable.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = usable.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(ExperimentError::Fit("all step sizes are equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    };
    Ok(ConvergenceReport {
        slope,
        intercept,
        r_squared,
        rows: report.rows.clone(),
        excluded_rows: report.rows.len() - usable.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityCurve {
    pub theta: f64,
    pub delta: f64,
    /// `nδ`.
    pub times: Vec<f64>,
    /// Monte Carlo `E|X̃_{τ_n}|²`.
    pub msq: Vec<f64>,
    pub se: Vec<f64>,
    /// `C E_α(-γ(nδ)^α)` with `C = msq[0]`, present when `γ` is defined.
    pub envelope: Option<Vec<f64>>,
    pub threshold: Option<StabilityThreshold>,
    /// `msq` exceeded `DIVERGENCE_FACTOR · msq[0]`, became non-finite, or too many paths failed.
    pub divergent: bool,
    /// Index of the first non-finite `msq`, where the curve was cut.
    pub truncated_at: Option<usize>,
    pub failed_paths: usize,
}

impl StabilityCurve {
    /// Indices where `msq[n] > envelope[n] · (1 + 3·se[n]/msq[n])`;
    /// `None` when no envelope exists.
    pub fn envelope_violations(&self) -> Option<Vec<usize>> {
        let env = self.envelope.as_ref()?;
        Some(
            (0..self.msq.len())
                .filter(|&n| {
                    let rel = if self.msq[n] > 0.0 {
                        self.se[n] / self.msq[n]
                    } else {
                        0.0
                    };
                    self.msq[n] > env[n] * (1.0 + 3.0 * rel)
                })
                .collect(),
        )
    }
}

/// Mean-square evolution of the ST scheme over `n_steps` steps of size `delta`.
#[allow(clippy::too_many_arguments)]
pub fn stability_curve(
    model: &ModelDescriptor,
    alpha: StabilityIndex,
    theta: f64,
    delta: f64,
    n_steps: usize,
    mc: &MonteCarloConfig,
    solver: &SolverOptions,
) -> Result<StabilityCurve, ExperimentError> {
    check_alpha_delta(delta)?;
    SchemeConfig {
        theta,
        delta,
        horizon: 1.0,
        solver: *solver,
    }
    .check()?;
    let per_path = map_paths(mc, |i| -> Result<Option<Vec<f64>>, ExperimentError> {
        let (cl, nl) = mc.lineages(i);
        let tau = simulate_subordinator_steps(alpha, delta, n_steps, &mut cl.rng())?;
        let d_b = brownian_increments(n_steps, delta, &mut nl.rng());
        match integrate_on_grid(model, theta, delta, &tau, &d_b, solver, false) {
            Ok(rec) => Ok(Some(rec.x_st.iter().map(|x| x * x).collect())),
            Err(SchemeError::Solver { .. }) => Ok(None),
            Err(e) => Err(e.into()),
        }
    })?;
    let mut ok = Vec::with_capacity(mc.n_paths);
    for r in per_path {
        if let Some(v) = r? {
            ok.push(v);
        }
    }
    let failed = mc.n_paths - ok.len();
    let mut msq = Vec::with_capacity(n_steps + 1);
    let mut se = Vec::with_capacity(n_steps + 1);
    let mut truncated_at = None;
    if !ok.is_empty() {
        for n in 0..=n_steps {
            let col: Vec<f64> = ok.iter().map(|v| v[n]).collect();
            let (m, s) = mean_se(&col);
            if !m.is_finite() {
                truncated_at = Some(n);
                break;
            }
            msq.push(m);
            se.push(s);
        }
    }
    let times: Vec<f64> = (0..msq.len()).map(|n| grid_point(n, delta)).collect();
    let c = model.constants();
    let threshold = match (c.lambda, c.k5) {
        (Some(l), Some(k)) => Some(stability_threshold(l, k, theta, delta, alpha)?),
        _ => None,
    };
    let envelope = match (threshold.and_then(|t| t.gamma), msq.first()) {
        (Some(gamma), Some(&c0)) => Some(
            times
                .iter()
                .map(|&t| Ok(c0 * mittag_leffler(alpha, -gamma * t.powf(alpha.get()))?))
                .collect::<Result<Vec<f64>, SpecialFnError>>()?,
        ),
        _ => None,
    };
    let divergent = truncated_at.is_some()
        || failed as f64 > FAILURE_BUDGET * mc.n_paths as f64
        || msq
            .first()
            .is_some_and(|&m0| msq.iter().any(|&m| m > DIVERGENCE_FACTOR * m0));
    Ok(StabilityCurve {
        theta,
        delta,
        times,
        msq,
        se,
        envelope,
        threshold,
        divergent,
        truncated_at,
        failed_paths: failed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub p: u32,
    pub t: f64,
    pub empirical: f64,
    pub formula: f64,
    pub se: f64,
    pub zscore: f64,
    /// `pδ E[E_t^{p-1}]`, the most `Ẽ_t^p` can fall below `E_t^p` on average.
    pub bias_allowance: f64,
    /// `formula - bias - 3se ≤ empirical ≤ formula + 3se`.
    pub within: bool,
}

/// Monte Carlo moments of `Ẽ_t` against `Γ(p+1)/Γ(αp+1) t^{αp}`.
pub fn moment_validation(
    alpha: StabilityIndex,
    p_list: &[u32],
    t_list: &[f64],
    delta: f64,
    mc: &MonteCarloConfig,
) -> Result<Vec<MomentRow>, ExperimentError> {
    if p_list.is_empty() || t_list.is_empty() {
        return Err(ExperimentError::Config(
            "p and t lists must be non-empty".into(),
        ));
    }
    if p_list.contains(&0) {
        return Err(ExperimentError::Config("moment orders must be >= 1".into()));
    }
    if t_list.iter().any(|&t| !(t >= 0.0 && t.is_finite())) {
        return Err(ExperimentError::Config(
            "times must be finite and nonnegative".into(),
        ));
    }
    let horizon = t_list.iter().copied().fold(0.0, f64::max);
    if horizon <= 0.0 {
        return Err(ExperimentError::Config(
            "at least one time must be positive".into(),
        ));
    }
    let per_path = map_paths(mc, |i| -> Result<Vec<f64>, ExperimentError> {
        let (cl, _) = mc.lineages(i);
        let path = simulate_subordinator(alpha, delta, horizon, &mut cl.rng())?;
        let inv = path.inverse();
        t_list
            .iter()
            .map(|&t| Ok(grid_point(inv.index_at(t)?, delta)))
            .collect()
    })?;
    let samples = per_path.into_iter().collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::with_capacity(p_list.len() * t_list.len());
    for &p in p_list {
        for (j, &t) in t_list.iter().enumerate() {
            let col: Vec<f64> = samples.iter().map(|v| v[j].powi(p as i32)).collect();
            let (empirical, se) = mean_se(&col);
            let formula = inverse_subordinator_moment(alpha, p, t)?;
            let lower = if p == 1 {
                1.0
            } else {
                inverse_subordinator_moment(alpha, p - 1, t)?
            };
            let bias_allowance = f64::from(p) * delta * lower;
            let gap = empirical - formula;
            let zscore = if se > 0.0 {
                gap / se
            } else if gap == 0.0 {
                0.0
            } else {
                gap.signum() * f64::INFINITY
            };
            let within =
                empirical >= formula - bias_allowance - 3.0 * se && empirical <= formula + 3.0 * se;
            rows.push(MomentRow {
                p,
                t,
                empirical,
                formula,
                se,
                zscore,
                bias_allowance,
                within,
            });
        }
    }
    Ok(rows)
}

/// Constants of a Lyapunov function `c₁|x|^p ≤ V ≤ c₂|x|^p`, `LV ≤ -c₃V`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovCertificate {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub p: f64,
}

impl LyapunovCertificate {
    pub fn new(c1: f64, c2: f64, c3: f64, p: f64) -> Result<Self, ExperimentError> {
        let c = Self { c1, c2, c3, p };
        c.check()?;
        Ok(c)
    }

    pub fn check(&self) -> Result<(), ExperimentError> {
        let all = [self.c1, self.c2, self.c3, self.p];
        if all.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(ExperimentError::Config(
                "certificate constants must be positive".into(),
            ));
        }
        if self.c1 > self.c2 {
            return Err(ExperimentError::Config(format!(
                "need c1 <= c2, got {} > {}",
                self.c1, self.c2
            )));
        }
        Ok(())
    }

    /// `(c₂/c₁)|x₀|^p E_α(-c₃ t^α)`.
    pub fn envelope(&self, alpha: StabilityIndex, x0: f64, t: f64) -> Result<f64, SpecialFnError> {
        Ok(self.c2 / self.c1
            * x0.abs().powf(self.p)
            * mittag_leffler(alpha, -self.c3 * t.powf(alpha.get()))?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeRow {
    pub t: f64,
    pub empirical: f64,
    pub envelope: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub rows: Vec<EnvelopeRow>,
    pub max_ratio: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// First time at which the empirical moment was not finite.
    pub offending_t: Option<f64>,
    pub failed_paths: usize,
}

/// `X(Ẽ_t)` on a time grid, by closed form when available and otherwise by
/// the implicit (`θ = 1`) scheme at step `delta`.
fn reference_values(
    model: &ModelDescriptor,
    alpha: StabilityIndex,
    delta: f64,
    t_grid: &[f64],
    horizon: f64,
    lineages: (SeedLineage, SeedLineage),
    solver: &SolverOptions,
) -> Result<Option<Vec<f64>>, ExperimentError> {
    let clock = simulate_subordinator(alpha, delta, horizon, &mut lineages.0.rng())?;
    let d_b = brownian_increments(clock.n_steps(), delta, &mut lineages.1.rng());
    let inv = clock.inverse();
    if model.has_exact_solution() {
        let mut out = Vec::with_capacity(t_grid.len());
        let mut b = CompensatedSum::default();
        let mut summed = 0;
        for &t in t_grid {
            let n = inv.index_at(t)?;
            while summed < n {
                b.add(d_b[summed]);
                summed += 1;
            }
            out.push(
                model
                    .exact_solution(grid_point(n, delta), b.value())
                    .unwrap_or(f64::NAN),
            );
        }
        return Ok(Some(out));
    }
    let cfg = SchemeConfig {
        theta: 1.0,
        delta,
        horizon,
        solver: *solver,
    };
    let noise = crate::clock::BrownianDriver::new(delta, d_b, Some(lineages.1))?;
    match integrate(model, &cfg, &clock, &noise, false) {
        Ok(rec) => Ok(Some(
            t_grid
                .iter()
                .map(|&t| rec.value_at(t))
                .collect::<Result<_, _>>()?,
        )),
        Err(SchemeError::Solver { .. }) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn check_time_grid(t_grid: &[f64]) -> Result<f64, ExperimentError> {
    if t_grid.is_empty() || t_grid.iter().any(|&t| !(t >= 0.0 && t.is_finite())) {
        return Err(ExperimentError::Config(
            "time grid must be non-empty, finite and nonnegative".into(),
        ));
    }
    let horizon = t_grid.iter().copied().fold(0.0, f64::max);
    if horizon <= 0.0 {
        return Err(ExperimentError::Config(
            "time grid needs a positive time".into(),
        ));
    }
    Ok(horizon)
}

/// Samples `|X(Ẽ_t)|^q` for every path and time.
fn moment_samples(
    model: &ModelDescriptor,
    alpha: StabilityIndex,
    delta: f64,
    t_grid: &[f64],
    q: f64,
    mc: &MonteCarloConfig,
    solver: &SolverOptions,
) -> Result<(Vec<Vec<f64>>, usize), ExperimentError> {
    let horizon = check_time_grid(t_grid)?;
    let per_path = map_paths(mc, |i| {
        reference_values(model, alpha, delta, t_grid, horizon, mc.lineages(i), solver)
            .map(|o| o.map(|v| v.iter().map(|x| x.abs().powf(q)).collect::<Vec<f64>>()))
    })?;
    let mut ok = Vec::with_capacity(mc.n_paths);
    for r in per_path {
        if let Some(v) = r? {
            ok.push(v);
        }
    }
    let failed = mc.n_paths - ok.len();
    if failed as f64 > FAILURE_BUDGET * mc.n_paths as f64 {
        return Err(ExperimentError::TooManyFailures {
            failed,
            total: mc.n_paths,
            budget: FAILURE_BUDGET * 100.0,
        });
    }
    Ok((ok, failed))
}

/// Compares empirical `E|X_t|^p` with `(c₂/c₁)|x₀|^p E_α(-c₃t^α)`.
#[allow(clippy::too_many_arguments)]
pub fn ml_envelope_check(
    model: &ModelDescriptor,
    alpha: StabilityIndex,
    certificate: &LyapunovCertificate,
    t_grid: &[f64],
    delta: f64,
    tolerance: f64,
    mc: &MonteCarloConfig,
    solver: &SolverOptions,
) -> Result<EnvelopeReport, ExperimentError> {
    certificate.check()?;
    let (samples, failed) = moment_samples(model, alpha, delta, t_grid, certificate.p, mc, solver)?;
    let mut rows = Vec::with_capacity(t_grid.len());
    let mut offending_t = None;
    for (j, &t) in t_grid.iter().enumerate() {
        let col: Vec<f64> = samples.iter().map(|v| v[j]).collect();
        let (empirical, _) = mean_se(&col);
        if !empirical.is_finite() && offending_t.is_none() {
            offending_t = Some(t);
        }
        let envelope = certificate.envelope(alpha, model.x0(), t)?;
        let ratio = if envelope > 0.0 {
            empirical / envelope
        } else if empirical == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        rows.push(EnvelopeRow {
            t,
            empirical,
            envelope,
            ratio,
        });
    }
    let max_ratio =
        rows.iter().map(|r| r.ratio).fold(
            0.0,
            |a: f64, b| if b.is_nan() { f64::INFINITY } else { a.max(b) },
        );
    let pass = offending_t.is_none() && max_ratio <= 1.0 + tolerance;
    Ok(EnvelopeReport {
        rows,
        max_ratio,
        tolerance,
        pass,
        offending_t,
        failed_paths: failed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub t: f64,
    pub empirical: f64,
    pub se: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub h: f64,
    pub rows: Vec<BoundRow>,
    pub pass: bool,
    pub failed_paths: usize,
}

/// Compares empirical `E|X_t|^{2h}` with `2^{h-1} E_α(2hK₁t^α)(1 + |x₀|^{2h})`.
#[allow(clippy::too_many_arguments)]
pub fn exact_moment_bound_check(
    model: &ModelDescriptor,
    alpha: StabilityIndex,
    h: f64,
    t_grid: &[f64],
    delta: f64,
    mc: &MonteCarloConfig,
    solver: &SolverOptions,
) -> Result<BoundReport, ExperimentError> {
    let k1 = model.constants().k1.ok_or_else(|| {
        ExperimentError::Config(format!("model {} does not declare k1", model.name()))
    })?;
    let (samples, failed) = moment_samples(model, alpha, delta, t_grid, 2.0 * h, mc, solver)?;
    let mut rows = Vec::with_capacity(t_grid.len());
    for (j, &t) in t_grid.iter().enumerate() {
        let col: Vec<f64> = samples.iter().map(|v| v[j]).collect();
        let (empirical, se) = mean_se(&col);
        let bound = exact_moment_bound(alpha, h, k1, t, model.x0())?;
        let rel = if empirical > 0.0 { se / empirical } else { 0.0 };
        rows.push(BoundRow {
            t,
            empirical,
            se,
            bound,
            pass: empirical <= bound * (1.0 + 3.0 * rel),
        });
    }
    let pass = rows.iter().all(|r| r.pass);
    Ok(BoundReport {
        h,
        rows,
        pass,
        failed_paths: failed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_builtin, BuiltinModel};
    use approx::assert_relative_eq;

    fn idx(a: f64) -> StabilityIndex {
        StabilityIndex::new(a).unwrap()
    }

    fn report(rows: &[(f64, f64)]) -> StrongErrorReport {
        StrongErrorReport {
            rows: rows
                .iter()
                .map(|&(delta, mse)| StrongErrorRow {
                    delta,
                    mse,
                    se: 0.0,
                    n_eff: 1,
                })
                .collect(),
            reference_rule: ReferenceRule::FineGrid { delta0: 1e-4 },
            n_paths: 1,
            failed_paths: 0,
        }
    }

    #[test]
    fn exact_power_law_fit() {
        let rows: Vec<(f64, f64)> = [2e-2, 1e-2, 4e-3, 2e-3, 1e-3]
            .iter()
            .map(|&d: &f64| (d, (0.7 * d.powf(0.45)).powi(2)))
            .collect();
        let fit = fit_order(&report(&rows)).unwrap();
        assert!((fit.slope - 0.45).abs() < 1e-12);
        assert_relative_eq!(fit.intercept, 0.7f64.ln(), max_relative = 1e-10);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fit_needs_three_positive_rows() {
        assert!(fit_order(&report(&[(1e-2, 1e-3), (1e-3, 1e-4), (1e-4, 0.0)])).is_err());
        let fit = fit_order(&report(&[
            (1e-1, 1e-2),
            (1e-2, 1e-3),
            (1e-3, 1e-4),
            (1e-4, 0.0),
        ]))
        .unwrap();
        assert_eq!(fit.excluded_rows, 1);
    }

    #[test]
    fn self_comparison_is_zero() {
        let m = make_builtin(&BuiltinModel::BoundedNonlinear { x0: 1.0 }).unwrap();
        let mc = MonteCarloConfig::new(20, 5).with_concurrency(1);
        let r = strong_error(
            &m,
            idx(0.9),
            1.0,
            &[1e-2, 1e-3],
            1.0,
            ReferenceRule::FineGrid { delta0: 1e-3 },
            &mc,
            &SolverOptions::default(),
        )
        .unwrap();
        assert_eq!(r.rows[1].mse, 0.0);
        assert!(r.rows[0].mse > 0.0);
        assert_eq!(r.rows[0].delta, 1e-2);
    }

    #[test]
    fn uncoupled_grid_is_rejected() {
        let m = make_builtin(&BuiltinModel::BoundedNonlinear { x0: 1.0 }).unwrap();
        let err = strong_error(
            &m,
            idx(0.9),
            1.0,
            &[1.5e-3, 1e-3],
            1.0,
            ReferenceRule::FineGrid { delta0: 1e-3 },
            &MonteCarloConfig::new(4, 0),
            &SolverOptions::default(),
        );
        assert!(matches!(err, Err(ExperimentError::Config(_))));
    }

    #[test]
    fn noise_free_deterministic_error() {
        // α = 1, σ → 0: the error is the backward-Euler ODE error.
        let (mu, delta) = (0.5, 1e-3);
        let m = make_builtin(&BuiltinModel::BlackScholes {
            mu,
            sigma: 1e-12,
            x0: 1.0,
        })
        .unwrap();
        let r = strong_error(
            &m,
            idx(1.0),
            1.0,
            &[delta],
            1.0,
            ReferenceRule::ClosedForm { clock_delta: delta },
            &MonteCarloConfig::new(4, 0),
            &SolverOptions::default(),
        )
        .unwrap();
        let oracle = (mu.exp() * mu * mu * delta / 2.0).powi(2);
        let ratio = r.rows[0].mse / oracle;
        assert!((1.0 / 3.0..=3.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn reports_do_not_depend_on_thread_count() {
        let m = make_builtin(&BuiltinModel::black_scholes(0.02, 0.2)).unwrap();
        let run = |threads| {
            strong_error(
                &m,
                idx(0.9),
                1.0,
                &[1e-2, 5e-3],
                1.0,
                ReferenceRule::ClosedForm { clock_delta: 1e-3 },
                &MonteCarloConfig::new(64, 9).with_concurrency(threads),
                &SolverOptions::default(),
            )
            .unwrap()
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn frozen_dynamics_keep_square() {
        let m = ModelDescriptor::new("zero", |_, _| 0.0, |_, _| 0.0, 1.5).unwrap();
        let c = stability_curve(
            &m,
            idx(0.9),
            0.5,
            1.0,
            10,
            &MonteCarloConfig::new(8, 1),
            &SolverOptions::default(),
        )
        .unwrap();
        assert!(c.msq.iter().all(|&v| v == 2.25));
        assert!(!c.divergent && c.envelope.is_none());
    }

    #[test]
    fn explicit_large_step_diverges() {
        let m = make_builtin(&BuiltinModel::StabilityLinear { x0: 1.0 }).unwrap();
        let mc = MonteCarloConfig::new(300, 2);
        let c =
            stability_curve(&m, idx(0.9), 0.0, 2.0, 25, &mc, &SolverOptions::default()).unwrap();
        assert!(c.divergent);
        assert!(!c.threshold.unwrap().stable);
        let c =
            stability_curve(&m, idx(0.9), 1.0, 1.0, 50, &mc, &SolverOptions::default()).unwrap();
        assert!(!c.divergent);
        assert!(*c.msq.last().unwrap() < 1e-3 * c.msq[0]);
    }

    #[test]
    fn moment_examples() {
        let rows =
            moment_validation(idx(1.0), &[2], &[3.0], 0.1, &MonteCarloConfig::new(3, 0)).unwrap();
        let r = rows[0];
        assert_eq!(r.formula, 9.0);
        assert!((r.empirical - 9.0).abs() <= 2.0 * 0.1 * 3.0 + 0.01);
        assert!(r.within);
        let rows = moment_validation(
            idx(0.5),
            &[1],
            &[1.0],
            1e-2,
            &MonteCarloConfig::new(2000, 4),
        )
        .unwrap();
        assert_relative_eq!(
            rows[0].formula,
            2.0 / std::f64::consts::PI.sqrt(),
            max_relative = 1e-13
        );
        assert!(rows[0].within, "{:?}", rows[0]);
    }

    #[test]
    fn envelope_examples() {
        let lin = make_builtin(&BuiltinModel::StabilityLinear { x0: 1.0 }).unwrap();
        let cert = LyapunovCertificate::new(1.0, 1.0, 1.0, 2.0).unwrap();
        let ts: Vec<f64> = (0..=10).map(|i| 2.0 * i as f64).collect();
        let mc = MonteCarloConfig::new(500, 3);
        let r = ml_envelope_check(
            &lin,
            idx(0.9),
            &cert,
            &ts,
            1e-2,
            0.15,
            &mc,
            &SolverOptions::default(),
        )
        .unwrap();
        assert!(r.pass, "{r:?}");
        let zero = ModelDescriptor::new("zero", |_, _| 0.0, |_, _| 0.0, 0.0).unwrap();
        let r = ml_envelope_check(
            &zero,
            idx(0.9),
            &cert,
            &ts,
            1e-2,
            0.15,
            &MonteCarloConfig::new(4, 3),
            &SolverOptions::default(),
        )
        .unwrap();
        assert!(r.pass && r.rows.iter().all(|row| row.empirical == 0.0));
        let up = make_builtin(&BuiltinModel::black_scholes(0.2, 0.2)).unwrap();
        let r = ml_envelope_check(
            &up,
            idx(0.9),
            &cert,
            &ts,
            1e-2,
            0.15,
            &mc,
            &SolverOptions::default(),
        )
        .unwrap();
        assert!(!r.pass);
        assert!(LyapunovCertificate::new(2.0, 1.0, 1.0, 2.0).is_err());
    }

    #[test]
    fn bound_holds_at_time_zero() {
        let m = make_builtin(&BuiltinModel::BoundedNonlinear { x0: 1.0 }).unwrap();
        let r = exact_moment_bound_check(
            &m,
            idx(0.9),
            1.0,
            &[0.0, 0.5],
            1e-2,
            &MonteCarloConfig::new(100, 1),
            &SolverOptions::default(),
        )
        .unwrap();
        assert_eq!(r.rows[0].empirical, 1.0);
        assert!(r.pass);
    }
}
