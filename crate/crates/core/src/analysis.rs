//! Current time series, acceleration-rate fits and quasi-momentum averaging.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classical::{ensemble_evolve, ClassicalEnsemble, EtaClassicalMap};
use crate::error::{Error, Result};
use crate::lattice::{Potential, ScaledParams};
use crate::quantum::{QuantumState, RatchetMap};

/// Default fitting window, in kick periods.
pub const DEFAULT_WINDOW: Window = Window {
    start: 1000,
    end: 2000,
};

/// Window length used by [`saturation_time`].
pub const SATURATION_WINDOW: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeriesKind {
    Quantum,
    Classical,
}

/// `⟨p̃⟩` (or `⟨p̃^c⟩`) sampled once per kick period, starting at `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurrentSeries {
    pub values: Vec<f64>,
    pub kind: SeriesKind,
    pub params: ScaledParams,
}

/// Half-open range of kick periods `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: usize,
    pub end: usize,
}

impl Window {
    pub fn new(start: usize, end: usize) -> Self {
        Window { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Default for Window {
    fn default() -> Self {
        DEFAULT_WINDOW
    }
}

/// Least-squares line through a window of a current series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub window: Window,
}

/// Ordinary least squares of `values[t]` against `t` over `window`.
///
/// `r_squared` is 1 when the residuals vanish (including a constant series).
pub fn fit_line(values: &[f64], window: Window) -> Result<RateEstimate> {
    if window.len() < 2 {
        return Err(Error::invalid(
            "window",
            format!(
                "[{}, {}) holds fewer than 2 samples",
                window.start, window.end
            ),
        ));
    }
    if window.end > values.len() {
        return Err(Error::invalid(
            "window",
            format!(
                "[{}, {}) extends past the series (length {})",
                window.start,
                window.end,
                values.len()
            ),
        ));
    }
    let ys = &values[window.start..window.end];
    let n = ys.len() as f64;
    let t_mean = (window.start + window.end - 1) as f64 / 2.0;
    let y_mean = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (i, &y) in ys.iter().enumerate() {
        let dt = (window.start + i) as f64 - t_mean;
        let dy = y - y_mean;
        sxy += dt * dy;
        sxx += dt * dt;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    let intercept = y_mean - slope * t_mean;
    let ss_res = (syy - slope * sxy).max(0.0);
    let r_squared = if ss_res <= syy * 1e-15 || syy == 0.0 {
        1.0
    } else {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    Ok(RateEstimate {
        slope,
        intercept,
        r_squared,
        window,
    })
}

pub fn estimate_rate(series: &CurrentSeries, window: Window) -> Result<RateEstimate> {
    fit_line(&series.values, window)
}

/// Earliest `t` at which the slope over `[t, t + 20]` falls below `fraction`
/// of the slope over `[0, 20]`. `None` if it never does, or if the initial
/// slope is zero.
pub fn saturation_time(series: &CurrentSeries, fraction: f64) -> Option<usize> {
    assert!(
        fraction > 0.0 && fraction < 1.0,
        "fraction must lie in (0, 1)"
    );
    let values = &series.values;
    let w = SATURATION_WINDOW;
    if values.len() < w + 2 {
        return None;
    }
    let slope_at = |t: usize| {
        fit_line(values, Window::new(t, t + w + 1))
            .map(|r| r.slope)
            .ok()
    };
    let initial = slope_at(0)?;
    if initial == 0.0 {
        return None;
    }
    let sign = initial.signum();
    (1..values.len() - w)
        .find(|&t| slope_at(t).is_some_and(|s| sign * s < fraction * initial.abs()))
}

/// Basis-size policy for quantum runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantumRunner {
    /// Initial ladder size.
    pub basis_size: usize,
    /// Largest ladder tried when the edge guard trips.
    pub max_basis_size: usize,
    /// Periods between edge-guard checks (the final step is always checked).
    pub guard_interval: usize,
    /// Initial momentum eigenstate.
    pub n0: i64,
}

impl Default for QuantumRunner {
    fn default() -> Self {
        QuantumRunner {
            basis_size: 4096,
            max_basis_size: 1 << 16,
            guard_interval: 100,
            n0: 0,
        }
    }
}

/// Result of a quantum run.
#[derive(Debug, Clone)]
pub struct QuantumRun {
    pub series: CurrentSeries,
    /// Ladder size that passed the edge guard.
    pub basis_size: usize,
    pub state: QuantumState,
}

impl QuantumRunner {
    pub fn with_basis(basis_size: usize) -> Self {
        QuantumRunner {
            basis_size,
            max_basis_size: basis_size.max(QuantumRunner::default().max_basis_size),
            ..Default::default()
        }
    }

    /// Evolve `|n0⟩` at quasi-momentum `beta` for `steps` periods, recording
    /// `⟨p̃⟩` after each period.
    ///
    /// Whenever the edge guard trips, the run restarts from scratch on a
    /// ladder twice as large, up to `max_basis_size`.
    pub fn run(
        &self,
        params: &ScaledParams,
        vk: &Potential,
        vl: &Potential,
        beta: f64,
        steps: usize,
    ) -> Result<QuantumRun> {
        if self.guard_interval == 0 {
            return Err(Error::invalid("guard_interval", "must be positive"));
        }
        let mut size = self.basis_size;
        loop {
            match self.attempt(params, vk, vl, beta, steps, size)? {
                Ok(run) => return Ok(run),
                Err((step, edge_population)) => {
                    if size * 2 > self.max_basis_size {
                        return Err(Error::Truncation {
                            step,
                            basis_size: size,
                            max_basis_size: self.max_basis_size,
                            edge_population,
                        });
                    }
                    size *= 2;
                }
            }
        }
    }

    #[allow(clippy::type_complexity)]
    fn attempt(
        &self,
        params: &ScaledParams,
        vk: &Potential,
        vl: &Potential,
        beta: f64,
        steps: usize,
        size: usize,
    ) -> Result<std::result::Result<QuantumRun, (usize, f64)>> {
        let mut map = RatchetMap::new(params, vk, vl, size, beta)?;
        let mut state = map.basis_state(self.n0)?;
        let mut values = Vec::with_capacity(steps + 1);
        values.push(state.momentum_expectation());
        for t in 1..=steps {
            map.step(&mut state);
            values.push(state.momentum_expectation());
            if t % self.guard_interval == 0 || t == steps {
                let guard = state.grid_guard();
                if !guard.ok {
                    return Ok(Err((t, guard.edge_population)));
                }
            }
        }
        Ok(Ok(QuantumRun {
            series: CurrentSeries {
                values,
                kind: SeriesKind::Quantum,
                params: *params,
            },
            basis_size: size,
            state,
        }))
    }
}

/// `⟨p̃(t)⟩` for the initial state `|n0⟩` at `β = 0`, starting from a ladder
/// of `basis_size` that doubles as needed.
pub fn quantum_series(
    params: &ScaledParams,
    vk: &Potential,
    vl: &Potential,
    n0: i64,
    steps: usize,
    basis_size: usize,
) -> Result<CurrentSeries> {
    let runner = QuantumRunner {
        n0,
        ..QuantumRunner::with_basis(basis_size)
    };
    Ok(runner.run(params, vk, vl, 0.0, steps)?.series)
}

/// `⟨p̃^c(t)⟩` of an ensemble under the η-classical map.
pub fn classical_series(
    params: &ScaledParams,
    vk: &Potential,
    vl: &Potential,
    ensemble: &mut ClassicalEnsemble,
    steps: usize,
) -> CurrentSeries {
    let map = EtaClassicalMap::new(params, vk, vl);
    CurrentSeries {
        values: ensemble_evolve(ensemble, &map, steps),
        kind: SeriesKind::Classical,
        params: *params,
    }
}

/// Gaussian spread of the quasi-momentum, in units where `β ∈ [0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaDistribution {
    pub mean: f64,
    /// Standard deviation `Δβ`.
    pub sigma: f64,
    /// Number of Gauss–Hermite nodes.
    pub nodes: usize,
}

impl BetaDistribution {
    pub fn validate(&self) -> Result<()> {
        if !self.mean.is_finite() {
            return Err(Error::invalid("beta_mean", "must be finite"));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::invalid("beta_sigma", "must be non-negative"));
        }
        if self.nodes < 1 {
            return Err(Error::invalid(
                "beta_nodes",
                "at least one node is required",
            ));
        }
        Ok(())
    }

    /// Quadrature components `(β_k, weight_k)`; weights sum to one. With
    /// `sigma = 0` this is the single component `β̄`.
    pub fn components(&self) -> Result<Vec<(f64, f64)>> {
        self.validate()?;
        if self.sigma == 0.0 {
            return Ok(vec![(self.mean, 1.0)]);
        }
        let norm = PI.sqrt();
        Ok(gauss_hermite(self.nodes)
            .into_iter()
            .map(|(x, w)| (self.mean + 2f64.sqrt() * self.sigma * x, w / norm))
            .collect())
    }
}

/// Nodes and weights of the `m`-point Gauss–Hermite rule for the weight
/// `e^{-x²}`, in ascending node order.
///
/// Newton iteration on the orthonormal Hermite recurrence, seeded with the
/// usual asymptotic root estimates.
pub fn gauss_hermite(m: usize) -> Vec<(f64, f64)> {
    assert!(m >= 1, "need at least one node");
    let pim4 = PI.powf(-0.25);
    let mf = m as f64;
    let mut half = vec![(0.0, 0.0); m.div_ceil(2)];
    let mut z = 0.0;
    for i in 0..half.len() {
        z = match i {
            0 => (2.0 * mf + 1.0).sqrt() - 1.85575 * (2.0 * mf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * mf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * half[0].0,
            3 => 1.91 * z - 0.91 * half[1].0,
            _ => 2.0 * z - half[i - 2].0,
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (pim4, 0.0);
            for j in 1..=m {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * mf).sqrt() * p2;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        half[i] = (z, 2.0 / (pp * pp));
    }
    let mut rule: Vec<(f64, f64)> = half.iter().map(|&(x, w)| (-x, w)).collect();
    rule.extend(half.iter().rev().map(|&(x, w)| (x, w)));
    if m % 2 == 1 {
        // the middle root appears twice above; keep one copy at exactly zero
        let mid = m / 2;
        rule.remove(mid);
        rule[mid].0 = 0.0;
    }
    rule
}

/// Quasi-momentum–averaged current increase `Δ⟨p̃(t)⟩ = ⟨p̃(t)⟩ - ⟨p̃(0)⟩`.
#[derive(Debug, Clone)]
pub struct BetaAveraged {
    pub series: CurrentSeries,
    pub components: Vec<(f64, f64)>,
    /// Largest ladder any component needed.
    pub basis_size: usize,
}

/// Evolve every quadrature component from `|n0⟩` and average `Δ⟨p̃(t)⟩`
/// with the quadrature weights.
///
/// Components run in parallel; the weighted sum is taken in node order.
pub fn beta_averaged_series(
    params: &ScaledParams,
    vk: &Potential,
    vl: &Potential,
    dist: &BetaDistribution,
    steps: usize,
    runner: &QuantumRunner,
) -> Result<BetaAveraged> {
    let components = dist.components()?;
    let runs: Vec<QuantumRun> = components
        .par_iter()
        .map(|&(beta, _)| runner.run(params, vk, vl, beta, steps))
        .collect::<Result<_>>()?;
    let mut values = vec![0.0; steps + 1];
    for (run, &(_, w)) in runs.iter().zip(&components) {
        let v = &run.series.values;
        for (acc, x) in values.iter_mut().zip(v) {
            *acc += w * (x - v[0]);
        }
    }
    Ok(BetaAveraged {
        series: CurrentSeries {
            values,
            kind: SeriesKind::Quantum,
            params: *params,
        },
        basis_size: runs
            .iter()
            .map(|r| r.basis_size)
            .max()
            .unwrap_or(runner.basis_size),
        components,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn series(values: Vec<f64>) -> CurrentSeries {
        CurrentSeries {
            values,
            kind: SeriesKind::Quantum,
            params: ScaledParams::main(1.0, 1.0, 1.0, 0.0).unwrap(),
        }
    }

    #[test]
    fn constant_series_has_zero_slope() {
        let r = estimate_rate(&series(vec![3.5; 2001]), DEFAULT_WINDOW).unwrap();
        assert_eq!(r.slope, 0.0);
        assert_eq!(r.intercept, 3.5);
        assert_eq!(r.r_squared, 1.0);
        assert_eq!(r.window, Window::new(1000, 2000));
    }

    #[test]
    fn exact_line() {
        let s = series((0..2001).map(|t| 2.0 * t as f64).collect());
        let r = estimate_rate(&s, DEFAULT_WINDOW).unwrap();
        assert_abs_diff_eq!(r.slope, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.intercept, 0.0, epsilon = 1e-8);
        assert_abs_diff_eq!(r.r_squared, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn bounded_oscillation_barely_moves_slope() {
        // |Δslope| <= A Σ|t - t̄| / Σ(t - t̄)² ≈ 3A/n = 0.003 for n = 1000
        let s = series(
            (0..2001)
                .map(|t| 2.0 * t as f64 + (0.7 * t as f64).sin())
                .collect(),
        );
        let r = estimate_rate(&s, DEFAULT_WINDOW).unwrap();
        assert!((r.slope - 2.0).abs() <= 0.01);
        assert!(r.r_squared > 0.99);
    }

    #[test]
    fn window_errors() {
        let s = series(vec![0.0; 100]);
        assert!(estimate_rate(&s, Window::new(10, 11)).is_err());
        assert!(estimate_rate(&s, Window::new(10, 10)).is_err());
        assert!(estimate_rate(&s, Window::new(50, 101)).is_err());
        assert!(estimate_rate(&s, Window::new(50, 100)).is_ok());
    }

    #[test]
    fn saturation_examples() {
        let line = series((0..300).map(|t| t as f64).collect());
        assert_eq!(saturation_time(&line, 0.5), None);

        let kinked = series((0..300).map(|t| (t as f64).min(50.0)).collect());
        let t = saturation_time(&kinked, 0.5).unwrap();
        assert!(t.abs_diff(50) <= SATURATION_WINDOW, "t = {t}");

        let flat = series(vec![1.0; 300]);
        assert_eq!(saturation_time(&flat, 0.5), None);
    }

    #[test]
    fn gauss_hermite_moments() {
        let sqrt_pi = PI.sqrt();
        for m in [1, 2, 5, 32, 64] {
            let rule = gauss_hermite(m);
            assert_eq!(rule.len(), m);
            let w: f64 = rule.iter().map(|r| r.1).sum();
            assert_abs_diff_eq!(w, sqrt_pi, epsilon = 1e-12);
            let odd: f64 = rule.iter().map(|r| r.1 * r.0.powi(3)).sum();
            assert_abs_diff_eq!(odd, 0.0, epsilon = 1e-10);
            if m >= 2 {
                let second: f64 = rule.iter().map(|r| r.1 * r.0 * r.0).sum();
                assert_abs_diff_eq!(second, sqrt_pi / 2.0, epsilon = 1e-12);
            }
            assert!(rule.windows(2).all(|p| p[0].0 < p[1].0));
        }
        // ∫ e^{-x²} cos x dx = √π e^{-1/4}
        let c: f64 = gauss_hermite(32).iter().map(|&(x, w)| w * x.cos()).sum();
        assert_abs_diff_eq!(c, sqrt_pi * (-0.25f64).exp(), epsilon = 1e-13);
        // ∫ e^{-x²} x⁸ dx = 105√π/16, exact for m ≥ 5
        let x8: f64 = gauss_hermite(5).iter().map(|&(x, w)| w * x.powi(8)).sum();
        assert_abs_diff_eq!(x8, 105.0 * sqrt_pi / 16.0, epsilon = 1e-11);
    }

    #[test]
    fn beta_distribution_components() {
        let d = BetaDistribution {
            mean: 0.3,
            sigma: 0.0,
            nodes: 64,
        };
        assert_eq!(d.components().unwrap(), vec![(0.3, 1.0)]);

        let d = BetaDistribution {
            mean: 0.1,
            sigma: 0.01,
            nodes: 16,
        };
        let c = d.components().unwrap();
        let total: f64 = c.iter().map(|x| x.1).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-13);
        let mean: f64 = c.iter().map(|x| x.0 * x.1).sum();
        assert_abs_diff_eq!(mean, 0.1, epsilon = 1e-13);
        let var: f64 = c.iter().map(|x| (x.0 - 0.1).powi(2) * x.1).sum();
        assert_abs_diff_eq!(var, 1e-4, epsilon = 1e-15);

        assert!(BetaDistribution { nodes: 0, ..d }.components().is_err());
        assert!(BetaDistribution { sigma: -1.0, ..d }.components().is_err());
    }

    #[test]
    fn quantum_series_trivial_cases() {
        let vk = Potential::cosine();
        let zero = ScaledParams::main(0.0, 0.0, 1.0, PI / 2.0).unwrap();
        let s = quantum_series(&zero, &vk, &vk, 0, 50, 64).unwrap();
        assert_eq!(s.values.len(), 51);
        assert!(s.values.iter().all(|&v| v.abs() < 1e-14));

        let symmetric = ScaledParams::main(2.0, 1.0, 1.0, 0.0).unwrap();
        let s = quantum_series(&symmetric, &vk, &vk, 0, 500, 4096).unwrap();
        assert!(s.values.iter().all(|&v| v.abs() <= 1e-8));
    }

    #[test]
    fn runner_doubles_basis_until_guard_passes() {
        let params = ScaledParams::main(3.0, 1.0, 1.0, PI / 2.0).unwrap();
        let vk = Potential::cosine();
        let runner = QuantumRunner {
            basis_size: 64,
            max_basis_size: 1 << 12,
            guard_interval: 10,
            n0: 0,
        };
        let run = runner.run(&params, &vk, &vk, 0.0, 100).unwrap();
        assert!(run.basis_size > 64);
        assert!(run.state.grid_guard().ok);

        let capped = QuantumRunner {
            max_basis_size: 64,
            ..runner
        };
        let err = capped.run(&params, &vk, &vk, 0.0, 100).unwrap_err();
        assert!(matches!(err, Error::Truncation { basis_size: 64, .. }));
    }

    #[test]
    fn zero_spread_average_equals_plain_series() {
        let params = ScaledParams::main(2.0, 1.0, 1.0, PI / 2.0).unwrap();
        let vk = Potential::cosine();
        let runner = QuantumRunner::with_basis(1024);
        let plain = quantum_series(&params, &vk, &vk, 0, 100, 1024).unwrap();
        let dist = BetaDistribution {
            mean: 0.0,
            sigma: 0.0,
            nodes: 64,
        };
        let avg = beta_averaged_series(&params, &vk, &vk, &dist, 100, &runner).unwrap();
        for (a, b) in avg.series.values.iter().zip(&plain.values) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    fn spread(sigma: f64, nodes: usize) -> BetaDistribution {
        BetaDistribution {
            mean: 0.0,
            sigma,
            nodes,
        }
    }

    #[test]
    fn quadrature_converges_at_early_times() {
        // ⟨p̃(t)⟩_β develops structure on a β scale ~1/t, so doubling the
        // node count only leaves the average unchanged while t·Δβ ≲ 0.04
        let params = ScaledParams::main(2.0, 1.0, 1.0, PI / 2.0).unwrap();
        let vk = Potential::cosine();
        let runner = QuantumRunner::with_basis(1024);
        for (sigma, horizon) in [(0.002, 20), (0.01, 5)] {
            let a = beta_averaged_series(&params, &vk, &vk, &spread(sigma, 32), horizon, &runner)
                .unwrap();
            let b = beta_averaged_series(&params, &vk, &vk, &spread(sigma, 64), horizon, &runner)
                .unwrap();
            for (x, y) in a.series.values.iter().zip(&b.series.values) {
                assert!((x - y).abs() < 1e-4, "Δβ = {sigma}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn beta_spread_saturates_within_tens_of_periods() {
        let params = ScaledParams::main(2.0, 1.0, 1.0, PI / 2.0).unwrap();
        let vk = Potential::cosine();
        let avg = beta_averaged_series(
            &params,
            &vk,
            &vk,
            &spread(0.002, 64),
            200,
            &QuantumRunner::with_basis(4096),
        )
        .unwrap();
        assert_eq!(saturation_time(&avg.series, 0.2), Some(12));
    }

    #[test]
    fn nonzero_mean_offset_cancels() {
        let params = ScaledParams::main(0.0, 0.0, 1.0, PI / 2.0).unwrap();
        let vk = Potential::cosine();
        let dist = BetaDistribution {
            mean: 0.4,
            sigma: 0.01,
            nodes: 8,
        };
        let avg =
            beta_averaged_series(&params, &vk, &vk, &dist, 10, &QuantumRunner::with_basis(64))
                .unwrap();
        assert!(avg.series.values.iter().all(|v| v.abs() < 1e-14));
    }

    proptest::proptest! {
        #[test]
        fn fit_recovers_any_line(a in -1e3f64..1e3, b in -10.0f64..10.0, start in 0usize..500, len in 2usize..500) {
            let values: Vec<f64> = (0..1000).map(|t| a + b * t as f64).collect();
            let r = fit_line(&values, Window::new(start, start + len)).unwrap();
            proptest::prop_assert!((r.slope - b).abs() <= 1e-9 * (1.0 + b.abs()));
            proptest::prop_assert!((r.intercept - a).abs() <= 1e-6 * (1.0 + a.abs()));
        }
    }
}
