//! The α-stable subordinator `D`, its step-function inverse `Ẽ`, and the
//! Brownian driver on the internal grid `{nδ}`.

use std::f64::consts::PI;
use std::io::{self, Write};

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::csv::{Cell, CsvWriter};
use crate::seeding::SeedLineage;
use crate::special_fn::StabilityIndex;

/// Longest subordinator path that will be generated.
pub const PATH_LENGTH_CAP: usize = 1_000_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClockError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("subordinator path exceeded {cap} steps before passing the horizon")]
    PathTooLong { cap: usize },
    #[error("coupling error: {0}")]
    Coupling(String),
}

/// Draws `D_δ = δ^{1/α} S` with `E[e^{-sS}] = e^{-s^α}`.
///
/// Uses Kanter's representation
/// `S = sin(αU)/sin(U)^{1/α} · [sin((1-α)U)/W]^{(1-α)/α}`,
/// `U ~ U(0, π)`, `W ~ Exp(1)`, evaluated in logarithms. For `α = 1` the
/// clock is deterministic and the increment is `δ`.
pub fn sample_stable_increment<R: Rng + ?Sized>(
    alpha: StabilityIndex,
    delta: f64,
    rng: &mut R,
) -> f64 {
    let a = alpha.get();
    if alpha.is_deterministic() {
        return delta;
    }
    let log_scale = delta.ln() / a;
    loop {
        let u = PI * open_unit(rng);
        let w: f64 = Exp1.sample(rng);
        let log_s = (a * u).sin().ln() - u.sin().ln() / a
            + (1.0 - a) / a * (((1.0 - a) * u).sin().ln() - w.ln());
        let x = (log_s + log_scale).exp();
        if x > 0.0 && x.is_finite() {
            return x;
        }
    }
}

fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// A discretized subordinator path `D_{nδ}`, `n = 0..=N+1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubordinatorPath {
    alpha: StabilityIndex,
    delta: f64,
    horizon: f64,
    values: Vec<f64>,
}

impl SubordinatorPath {
    /// Builds a path from explicit values, checking the stopping rule.
    pub fn from_values(
        alpha: StabilityIndex,
        delta: f64,
        horizon: f64,
        values: Vec<f64>,
    ) -> Result<Self, ClockError> {
        check_step(delta)?;
        check_horizon(horizon)?;
        if values.len() < 2 || values[0] != 0.0 {
            return Err(ClockError::Domain(
                "path must start at 0 and contain at least two values".into(),
            ));
        }
        if values
            .windows(2)
            .any(|w| !(w[1] > w[0]) || !w[1].is_finite())
        {
            return Err(ClockError::Domain(
                "path values must be finite and strictly increasing".into(),
            ));
        }
        let n = values.len() - 2;
        if !(values[n] <= horizon && horizon < values[n + 1]) {
            return Err(ClockError::Domain(
                "last value must be the first to exceed the horizon".into(),
            ));
        }
        Ok(Self {
            alpha,
            delta,
            horizon,
            values,
        })
    }

    pub fn alpha(&self) -> StabilityIndex {
        self.alpha
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// `D_{nδ}` for `n = 0..=N+1`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The index `N` with `D_{Nδ} ≤ T < D_{(N+1)δ}`.
    pub fn n_steps(&self) -> usize {
        self.values.len() - 2
    }

    /// Waiting times `Z_i = D_{iδ} - D_{(i-1)δ}`.
    pub fn waiting_times(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.windows(2).map(|w| w[1] - w[0])
    }

    pub fn inverse(&self) -> InverseSubordinatorPath<'_> {
        InverseSubordinatorPath { source: self }
    }

    /// Writes `(n, n_delta, D_value)` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> io::Result<W> {
        let mut w = CsvWriter::new(out, &["n", "n_delta", "D_value"])?;
        for (n, &d) in self.values.iter().enumerate() {
            w.row(&[n.into(), grid_point(n, self.delta).into(), d.into()])?;
        }
        w.finish()
    }
}

/// `nδ` computed as a product so that grid points never accumulate rounding.
#[inline]
pub fn grid_point(n: usize, delta: f64) -> f64 {
    n as f64 * delta
}

fn check_step(delta: f64) -> Result<(), ClockError> {
    if delta > 0.0 && delta.is_finite() {
        Ok(())
    } else {
        Err(ClockError::Domain(format!(
            "step must be positive and finite, got {delta}"
        )))
    }
}

fn check_horizon(horizon: f64) -> Result<(), ClockError> {
    if horizon > 0.0 && horizon.is_finite() {
        Ok(())
    } else {
        Err(ClockError::Domain(format!(
            "horizon must be positive and finite, got {horizon}"
        )))
    }
}

/// Simulates `D_{nδ}` until the first value above `horizon`.
pub fn simulate_subordinator<R: Rng + ?Sized>(
    alpha: StabilityIndex,
    delta: f64,
    horizon: f64,
    rng: &mut R,
) -> Result<SubordinatorPath, ClockError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(ClockError::Domain(format!(
            "step must lie in (0, 1), got {delta}"
        )));
    }
    check_horizon(horizon)?;
    let values = generate_until(alpha, delta, horizon, 1, rng)?;
    Ok(SubordinatorPath {
        alpha,
        delta,
        horizon,
        values,
    })
}

/// Simulates exactly `n_steps` increments, for long-horizon stability runs
/// where the grid is indexed by `n` rather than stopped at a physical time.
pub fn simulate_subordinator_steps<R: Rng + ?Sized>(
    alpha: StabilityIndex,
    delta: f64,
    n_steps: usize,
    rng: &mut R,
) -> Result<Vec<f64>, ClockError> {
    check_step(delta)?;
    if n_steps > PATH_LENGTH_CAP {
        return Err(ClockError::PathTooLong {
            cap: PATH_LENGTH_CAP,
        });
    }
    let mut values = Vec::with_capacity(n_steps + 1);
    values.push(0.0);
    let mut d = 0.0;
    for n in 1..=n_steps {
        d = if alpha.is_deterministic() {
            grid_point(n, delta)
        } else {
            d + sample_stable_increment(alpha, delta, rng)
        };
        values.push(d);
    }
    Ok(values)
}

/// Generates increments in blocks of `block` until the running value
/// exceeds `horizon`; the returned length minus one is a multiple of `block`.
fn generate_until<R: Rng + ?Sized>(
    alpha: StabilityIndex,
    delta: f64,
    horizon: f64,
    block: usize,
    rng: &mut R,
) -> Result<Vec<f64>, ClockError> {
    let mut values = vec![0.0];
    let mut d = 0.0;
    while d <= horizon {
        if values.len() - 1 + block > PATH_LENGTH_CAP {
            return Err(ClockError::PathTooLong {
                cap: PATH_LENGTH_CAP,
            });
        }
        for _ in 0..block {
            let n = values.len();
            d = if alpha.is_deterministic() {
                grid_point(n, delta)
            } else {
                d + sample_stable_increment(alpha, delta, rng)
            };
            values.push(d);
        }
    }
    Ok(values)
}

/// The step function `Ẽ_t = nδ` for `t ∈ [D_{nδ}, D_{(n+1)δ})`.
#[derive(Debug, Clone, Copy)]
pub struct InverseSubordinatorPath<'a> {
    source: &'a SubordinatorPath,
}

impl<'a> InverseSubordinatorPath<'a> {
    pub fn source(&self) -> &'a SubordinatorPath {
        self.source
    }

    pub fn jump_size(&self) -> f64 {
        self.source.delta
    }

    /// The grid index `n_t` with `D_{n_t δ} ≤ t < D_{(n_t+1)δ}`.
    pub fn index_at(&self, t: f64) -> Result<usize, ClockError> {
        if !(t >= 0.0 && t <= self.source.horizon) {
            return Err(ClockError::Domain(format!(
                "t = {t} outside [0, {}]",
                self.source.horizon
            )));
        }
        Ok(self.source.values.partition_point(|&v| v <= t) - 1)
    }

    /// Writes `(t, E_tilde)` rows for the given evaluation times.
    pub fn write_csv<W: Write>(&self, times: &[f64], out: W) -> io::Result<W> {
        let mut w = CsvWriter::new(out, &["t", "E_tilde"])?;
        for &t in times {
            let e =
                invert_path(self, t).map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
            w.row(&[Cell::Num(t), Cell::Num(e)])?;
        }
        w.finish()
    }
}

/// Evaluates `Ẽ_t` by binary search over the path values.
pub fn invert_path(path: &InverseSubordinatorPath<'_>, t: f64) -> Result<f64, ClockError> {
    Ok(grid_point(path.index_at(t)?, path.jump_size()))
}

/// `n` i.i.d. `N(0, δ)` draws.
pub fn brownian_increments<R: Rng + ?Sized>(n: usize, delta: f64, rng: &mut R) -> Vec<f64> {
    let sd = delta.sqrt();
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            sd * z
        })
        .collect()
}

/// Brownian increments `B_{(n+1)δ} - B_{nδ}` on the internal grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrownianDriver {
    delta: f64,
    increments: Vec<f64>,
    seed_lineage: Option<SeedLineage>,
}

impl BrownianDriver {
    pub fn new(
        delta: f64,
        increments: Vec<f64>,
        seed_lineage: Option<SeedLineage>,
    ) -> Result<Self, ClockError> {
        check_step(delta)?;
        Ok(Self {
            delta,
            increments,
            seed_lineage,
        })
    }

    /// Draws `n` increments from the stream described by `lineage`.
    pub fn sample(delta: f64, n: usize, lineage: SeedLineage) -> Result<Self, ClockError> {
        check_step(delta)?;
        let mut rng = lineage.rng();
        Ok(Self {
            delta,
            increments: brownian_increments(n, delta, &mut rng),
            seed_lineage: Some(lineage),
        })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn seed_lineage(&self) -> Option<&SeedLineage> {
        self.seed_lineage.as_ref()
    }

    /// `B_{nδ}`, summed in index order.
    pub fn value_at(&self, n: usize) -> f64 {
        self.increments[..n].iter().sum()
    }
}

/// One clock and noise realization at a base step `δ_0`, from which coarser
/// resolutions `mδ_0` are read off by aggregation.
#[derive(Debug, Clone)]
pub struct CoupledRealization {
    alpha: StabilityIndex,
    base_delta: f64,
    horizon: f64,
    block: usize,
    clock: Vec<f64>,
    noise: Vec<f64>,
    noise_lineage: Option<SeedLineage>,
}

impl CoupledRealization {
    /// Simulates a realization usable at every step `factor · base_delta`
    /// with `factor` dividing `block`.
    pub fn simulate<R1: Rng + ?Sized, R2: Rng + ?Sized>(
        alpha: StabilityIndex,
        base_delta: f64,
        horizon: f64,
        block: usize,
        clock_rng: &mut R1,
        noise_rng: &mut R2,
    ) -> Result<Self, ClockError> {
        check_step(base_delta)?;
        check_horizon(horizon)?;
        if block == 0 {
            return Err(ClockError::Coupling("block size must be positive".into()));
        }
        let clock = generate_until(alpha, base_delta, horizon, block, clock_rng)?;
        let noise = brownian_increments(clock.len() - 1, base_delta, noise_rng);
        Ok(Self {
            alpha,
            base_delta,
            horizon,
            block,
            clock,
            noise,
            noise_lineage: None,
        })
    }

    /// As [`CoupledRealization::simulate`], drawing from the path's two seed streams.
    pub fn from_lineage(
        alpha: StabilityIndex,
        base_delta: f64,
        horizon: f64,
        block: usize,
        clock: SeedLineage,
        noise: SeedLineage,
    ) -> Result<Self, ClockError> {
        let mut r = Self::simulate(
            alpha,
            base_delta,
            horizon,
            block,
            &mut clock.rng(),
            &mut noise.rng(),
        )?;
        r.noise_lineage = Some(noise);
        Ok(r)
    }

    pub fn base_delta(&self) -> f64 {
        self.base_delta
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Base-resolution increments of `D`, for the exact-solution reference.
    pub fn base_clock(&self) -> &[f64] {
        &self.clock
    }

    pub fn base_noise(&self) -> &[f64] {
        &self.noise
    }

    fn check_factor(&self, factor: usize) -> Result<(), ClockError> {
        if factor == 0 || !self.block.is_multiple_of(factor) {
            return Err(ClockError::Coupling(format!(
                "factor {factor} does not divide the coupling block {}",
                self.block
            )));
        }
        Ok(())
    }

    /// The path at step `factor · base_delta`, whose values are exact
    /// partial sums of the base waiting times.
    pub fn clock(&self, factor: usize) -> Result<SubordinatorPath, ClockError> {
        self.check_factor(factor)?;
        let mut values = Vec::with_capacity(self.clock.len() / factor + 1);
        for &v in self.clock.iter().step_by(factor) {
            values.push(v);
            if v > self.horizon {
                break;
            }
        }
        let delta = if factor == 1 {
            self.base_delta
        } else {
            factor as f64 * self.base_delta
        };
        Ok(SubordinatorPath {
            alpha: self.alpha,
            delta,
            horizon: self.horizon,
            values,
        })
    }

    /// The first `n` noise increments at step `factor · base_delta`.
    pub fn noise(&self, factor: usize, n: usize) -> Result<BrownianDriver, ClockError> {
        self.check_factor(factor)?;
        if n * factor > self.noise.len() {
            return Err(ClockError::Coupling(format!(
                "requested {n} increments at factor {factor}, only {} base increments exist",
                self.noise.len()
            )));
        }
        let increments = self
            .noise
            .chunks_exact(factor)
            .take(n)
            .map(|c| c.iter().sum())
            .collect();
        Ok(BrownianDriver {
            delta: factor as f64 * self.base_delta,
            increments,
            seed_lineage: self.noise_lineage,
        })
    }
}

/// Converts a step that should be an integer multiple of `base` into that
/// integer, within a relative tolerance of 1e-9.
pub fn step_factor(delta: f64, base: f64) -> Result<usize, ClockError> {
    let ratio = delta / base;
    let m = ratio.round();
    if m < 1.0 || ((ratio - m) / m).abs() > 1e-9 {
        return Err(ClockError::Coupling(format!(
            "step {delta} is not an integer multiple of {base}"
        )));
    }
    Ok(m as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::{path_rng, StreamTag};
    use crate::special_fn::inverse_subordinator_moment;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn idx(a: f64) -> StabilityIndex {
        StabilityIndex::new(a).unwrap()
    }

    fn rng(seed: u64) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(seed)
    }

    #[test]
    fn deterministic_limit_increment() {
        assert_eq!(sample_stable_increment(idx(1.0), 0.25, &mut rng(0)), 0.25);
    }

    #[test]
    fn laplace_transform_at_unit_step() {
        let n = 100_000;
        let mut r = rng(11);
        let xs: Vec<f64> = (0..n)
            .map(|_| (-sample_stable_increment(idx(0.9), 1.0, &mut r)).exp())
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!(
            (mean - (-1f64).exp()).abs() < 3.0 * se,
            "mean={mean} se={se}"
        );
    }

    #[test]
    fn half_stable_tail_exponent() {
        let n = 1_000_000;
        let mut r = rng(12);
        let mut xs: Vec<f64> = (0..n)
            .map(|_| sample_stable_increment(idx(0.5), 1.0, &mut r))
            .collect();
        xs.sort_by(f64::total_cmp);
        let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
        let k = 21;
        for i in 0..k {
            let x = 10f64.powf(2.0 + 2.0 * i as f64 / (k - 1) as f64);
            let above = n - xs.partition_point(|&v| v <= x);
            let (lx, ly) = (x.ln(), (above as f64 / n as f64).ln());
            sx += lx;
            sy += ly;
            sxx += lx * lx;
            sxy += lx * ly;
        }
        let kf = k as f64;
        let slope = (kf * sxy - sx * sy) / (kf * sxx - sx * sx);
        assert!((0.4..=0.6).contains(&-slope), "tail exponent {}", -slope);
    }

    #[test]
    fn deterministic_path() {
        let p = simulate_subordinator(idx(1.0), 0.1, 1.0, &mut rng(0)).unwrap();
        assert_eq!(p.n_steps(), 10);
        for (n, &v) in p.values().iter().enumerate() {
            assert_eq!(v, n as f64 * 0.1);
        }
    }

    #[test]
    fn stopping_rule_and_reproducibility() {
        let a = simulate_subordinator(idx(0.9), 1e-3, 1.0, &mut rng(5)).unwrap();
        let b = simulate_subordinator(idx(0.9), 1e-3, 1.0, &mut rng(5)).unwrap();
        assert_eq!(a, b);
        let n = a.n_steps();
        assert!(a.values()[n] <= 1.0 && 1.0 < a.values()[n + 1]);
        assert!(a.waiting_times().all(|z| z > 0.0));
        assert!(SubordinatorPath::from_values(idx(0.9), 1e-3, 1.0, a.values().to_vec()).is_ok());
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(simulate_subordinator(idx(0.9), 1.5, 1.0, &mut rng(0)).is_err());
        assert!(simulate_subordinator(idx(0.9), 0.1, 0.0, &mut rng(0)).is_err());
        assert!(
            SubordinatorPath::from_values(idx(0.9), 0.1, 1.0, vec![0.0, 0.5, 0.5, 2.0]).is_err()
        );
        assert!(
            SubordinatorPath::from_values(idx(0.9), 0.1, 1.0, vec![0.0, 0.5, 1.5, 2.0]).is_err()
        );
    }

    #[test]
    fn inverse_on_grid_points() {
        let p = simulate_subordinator(idx(0.8), 1e-2, 2.0, &mut rng(9)).unwrap();
        let inv = p.inverse();
        assert_eq!(invert_path(&inv, 0.0).unwrap(), 0.0);
        for (k, &v) in p.values().iter().enumerate().take(p.n_steps() + 1) {
            assert_eq!(invert_path(&inv, v).unwrap(), k as f64 * 1e-2);
        }
        assert!(invert_path(&inv, 2.0 + 1e-9).is_err());
        assert!(invert_path(&inv, -1e-9).is_err());
        let mut last = 0.0;
        for i in 0..=500 {
            let e = invert_path(&inv, 2.0 * i as f64 / 500.0).unwrap();
            assert!(e >= last);
            last = e;
        }
    }

    #[test]
    fn sandwich_against_refined_path() {
        for path in 0..20 {
            let r = CoupledRealization::simulate(
                idx(0.9),
                1e-3,
                1.0,
                10,
                &mut path_rng(3, path, StreamTag::Clock),
                &mut path_rng(3, path, StreamTag::Noise),
            )
            .unwrap();
            let fine = r.clock(1).unwrap();
            let coarse = r.clock(10).unwrap();
            for i in 0..100 {
                let t = i as f64 / 99.0;
                let ef = invert_path(&fine.inverse(), t).unwrap();
                let ec = invert_path(&coarse.inverse(), t).unwrap();
                assert!(
                    ec <= ef + 1e-12 && ef - ec <= 1e-2 + 1e-12,
                    "t={t} fine={ef} coarse={ec}"
                );
            }
        }
    }

    #[test]
    fn coarse_values_are_fine_partial_sums() {
        let r = CoupledRealization::simulate(idx(0.7), 1e-3, 1.0, 20, &mut rng(1), &mut rng(2))
            .unwrap();
        let fine = r.clock(1).unwrap();
        for m in [2usize, 4, 5, 10, 20] {
            let coarse = r.clock(m).unwrap();
            let n = coarse.n_steps();
            assert!(coarse.values()[n] <= 1.0 && 1.0 < coarse.values()[n + 1]);
            for (k, &v) in coarse.values().iter().enumerate() {
                assert_eq!(v, r.base_clock()[k * m]);
            }
            let noise = r.noise(m, n + 1).unwrap();
            let fine_noise = r.noise(1, (n + 1) * m).unwrap();
            let b_coarse = noise.value_at(n + 1);
            let b_fine = fine_noise.value_at((n + 1) * m);
            assert!((b_coarse - b_fine).abs() < 1e-12);
        }
        assert!(fine.n_steps() >= 1);
        assert!(r.clock(3).is_err());
    }

    #[test]
    fn swapping_noise_seed_keeps_clock() {
        let a =
            CoupledRealization::simulate(idx(0.9), 1e-3, 1.0, 1, &mut rng(1), &mut rng(2)).unwrap();
        let b = CoupledRealization::simulate(idx(0.9), 1e-3, 1.0, 1, &mut rng(1), &mut rng(99))
            .unwrap();
        assert_eq!(a.base_clock(), b.base_clock());
        assert_ne!(a.base_noise(), b.base_noise());
        let direct = simulate_subordinator(idx(0.9), 1e-3, 1.0, &mut rng(1)).unwrap();
        assert_eq!(a.clock(1).unwrap(), direct);
    }

    #[test]
    fn brownian_variance_and_determinism() {
        assert!(brownian_increments(0, 0.01, &mut rng(0)).is_empty());
        let n = 1_000_000;
        let xs = brownian_increments(n, 0.01, &mut rng(4));
        assert_eq!(xs[..100], brownian_increments(100, 0.01, &mut rng(4))[..]);
        let var = xs.iter().map(|x| x * x).sum::<f64>() / n as f64;
        let se = 0.01 * (2.0 / n as f64).sqrt();
        assert!((var - 0.01).abs() < 3.0 * se, "var={var}");
    }

    #[test]
    fn inverse_mean_matches_formula() {
        let (alpha, delta, m) = (idx(0.9), 1e-2, 4000u64);
        let xs: Vec<f64> = (0..m)
            .map(|i| {
                let p = simulate_subordinator(
                    alpha,
                    delta,
                    1.0,
                    &mut path_rng(21, i, StreamTag::Clock),
                )
                .unwrap();
                invert_path(&p.inverse(), 1.0).unwrap()
            })
            .collect();
        let mean = xs.iter().sum::<f64>() / m as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
        let se = (var / m as f64).sqrt();
        let formula = inverse_subordinator_moment(alpha, 1, 1.0).unwrap();
        assert!(
            mean >= formula - delta - 3.0 * se && mean <= formula + 3.0 * se,
            "mean={mean} formula={formula}"
        );
    }

    #[test]
    fn step_factor_tolerance() {
        assert_eq!(step_factor(2e-2, 1e-3).unwrap(), 20);
        assert_eq!(step_factor(4e-3, 1e-3).unwrap(), 4);
        assert!(step_factor(1.5e-3, 1e-3).is_err());
        assert!(step_factor(1e-4, 1e-3).is_err());
    }

    #[test]
    fn csv_dumps() {
        let p = simulate_subordinator(idx(1.0), 0.5, 1.0, &mut rng(0)).unwrap();
        let text = String::from_utf8(p.write_csv(Vec::new()).unwrap()).unwrap();
        assert!(text.starts_with("n,n_delta,D_value\n0,"));
        assert_eq!(text.lines().count(), 1 + 4);
        let inv =
            String::from_utf8(p.inverse().write_csv(&[0.0, 0.75], Vec::new()).unwrap()).unwrap();
        assert_eq!(
            inv.lines().nth(2).unwrap(),
            "7.5000000000000000e-1,5.0000000000000000e-1"
        );
    }
}
