//! Parameter scans over one or two axes, run in parallel over grid points
//! with results assembled by grid index.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    beta_averaged_series, classical_series, fit_line, BetaDistribution, QuantumRunner, SeriesKind,
    Window,
};
use crate::classical::{ClassicalEnsemble, Sampling};
use crate::error::{Error, Result};
use crate::lattice::{Potential, ScaledParams};

/// A scannable parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanParam {
    KTilde,
    LTilde,
    HbarTilde,
    Phi,
    BetaMean,
}

impl ScanParam {
    pub fn name(self) -> &'static str {
        match self {
            ScanParam::KTilde => "k_tilde",
            ScanParam::LTilde => "l_tilde",
            ScanParam::HbarTilde => "hbar_tilde",
            ScanParam::Phi => "phi",
            ScanParam::BetaMean => "beta_mean",
        }
    }
}

/// Another parameter slaved to an axis: `param = factor * axis value`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tie {
    pub param: ScanParam,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub param: ScanParam,
    pub min: f64,
    pub max: f64,
    pub points: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ties: Vec<Tie>,
}

impl Axis {
    pub fn new(param: ScanParam, min: f64, max: f64, points: usize) -> Self {
        Axis {
            param,
            min,
            max,
            points,
            ties: Vec::new(),
        }
    }

    /// Evenly spaced values including both ends.
    pub fn values(&self) -> Vec<f64> {
        match self.points {
            0 => Vec::new(),
            1 => vec![self.min],
            n => (0..n)
                .map(|i| self.min + (self.max - self.min) * i as f64 / (n - 1) as f64)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanMode {
    #[default]
    Quantum,
    Classical,
    Both,
}

/// What each grid point records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    /// Fitted acceleration rate over the window.
    #[default]
    Rate,
    /// The series value after the last step (e.g. `Δ⟨p̃(7)⟩` across `β̄`).
    FinalValue,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanSpec {
    pub axes: Vec<Axis>,
    pub fixed: ScaledParams,
    pub vk: Potential,
    pub vl: Potential,
    pub mode: ScanMode,
    pub observable: Observable,
    pub steps: usize,
    pub window: Window,
    pub runner: QuantumRunner,
    /// Quasi-momentum spread of quantum points. `sigma = 0`, `mean = 0` runs
    /// the plain `β = 0` map.
    pub beta: BetaDistribution,
    pub ensemble_size: usize,
    pub sampling: Sampling,
    pub master_seed: u64,
}

impl ScanSpec {
    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() || self.axes.len() > 2 {
            return Err(Error::invalid("axes", "a scan needs one or two axes"));
        }
        for (i, axis) in self.axes.iter().enumerate() {
            let key = format!("axis{}", i + 1);
            if axis.points < 1 {
                return Err(Error::invalid(&key, "needs at least one point"));
            }
            if !(axis.min.is_finite() && axis.max.is_finite()) {
                return Err(Error::invalid(&key, "bounds must be finite"));
            }
            if axis.ties.iter().any(|t| !t.factor.is_finite()) {
                return Err(Error::invalid(&key, "tie factors must be finite"));
            }
        }
        let mut touched: Vec<ScanParam> = Vec::new();
        for axis in &self.axes {
            for p in std::iter::once(axis.param).chain(axis.ties.iter().map(|t| t.param)) {
                if touched.contains(&p) {
                    return Err(Error::invalid(
                        "axes",
                        format!("parameter `{}` is driven by more than one axis", p.name()),
                    ));
                }
                touched.push(p);
            }
        }
        if self.mode != ScanMode::Quantum && self.ensemble_size == 0 {
            return Err(Error::invalid("ensemble_size", "must be positive"));
        }
        if self.observable == Observable::Rate && self.window.end > self.steps + 1 {
            return Err(Error::invalid(
                "window",
                format!(
                    "window end {} exceeds steps + 1 = {}",
                    self.window.end,
                    self.steps + 1
                ),
            ));
        }
        self.beta.validate()
    }

    fn shape(&self) -> (usize, usize) {
        (
            self.axes[0].points,
            self.axes.get(1).map_or(1, |a| a.points),
        )
    }

    /// Parameters and quasi-momentum distribution at grid index `(i, j)`.
    fn point(&self, i: usize, j: usize) -> Result<(ScaledParams, BetaDistribution)> {
        let mut params = self.fixed;
        let mut beta = self.beta;
        for (axis, idx) in self.axes.iter().zip([i, j]) {
            let x = axis.values()[idx];
            set_param(&mut params, &mut beta, axis.param, x);
            for tie in &axis.ties {
                set_param(&mut params, &mut beta, tie.param, tie.factor * x);
            }
        }
        params.validate()?;
        Ok((params, beta))
    }
}

fn set_param(params: &mut ScaledParams, beta: &mut BetaDistribution, p: ScanParam, x: f64) {
    match p {
        ScanParam::KTilde => params.k_tilde = x,
        ScanParam::LTilde => params.l_tilde = x,
        ScanParam::HbarTilde => params.hbar_tilde = x,
        ScanParam::Phi => params.phi = x,
        ScanParam::BetaMean => beta.mean = x,
    }
}

/// Per-point RNG seed derived from the master seed and the flat grid index.
pub fn point_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One grid point's outcome. Failed points carry the reason instead of a
/// value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    pub value: Option<f64>,
    pub r_squared: Option<f64>,
    pub basis_size: Option<usize>,
    pub missing: Option<String>,
}

impl Cell {
    fn missing(reason: String) -> Self {
        Cell {
            value: None,
            r_squared: None,
            basis_size: None,
            missing: Some(reason),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateGrid {
    pub mode: SeriesKind,
    pub observable: Observable,
    /// Realized coordinates of each axis.
    pub axes: Vec<(ScanParam, Vec<f64>)>,
    /// Row-major cells, `axis1` index outermost.
    pub cells: Vec<Cell>,
}

impl RateGrid {
    pub fn shape(&self) -> (usize, usize) {
        (
            self.axes[0].1.len(),
            self.axes.get(1).map_or(1, |a| a.1.len()),
        )
    }

    pub fn cell(&self, i: usize, j: usize) -> &Cell {
        &self.cells[i * self.shape().1 + j]
    }

    /// Values as a matrix, NaN where missing.
    pub fn rates(&self) -> Vec<Vec<f64>> {
        let (_, cols) = self.shape();
        self.cells
            .chunks(cols)
            .map(|row| row.iter().map(|c| c.value.unwrap_or(f64::NAN)).collect())
            .collect()
    }

    pub fn fit_quality(&self) -> Vec<Vec<f64>> {
        let (_, cols) = self.shape();
        self.cells
            .chunks(cols)
            .map(|row| {
                row.iter()
                    .map(|c| c.r_squared.unwrap_or(f64::NAN))
                    .collect()
            })
            .collect()
    }

    pub fn missing_count(&self) -> usize {
        self.cells.iter().filter(|c| c.missing.is_some()).count()
    }
}

/// Run every grid point on a pool of `workers` threads (0 picks rayon's
/// default). Output is identical for any worker count.
pub fn run_scan(spec: &ScanSpec, workers: usize) -> Result<Vec<RateGrid>> {
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let modes: &[SeriesKind] = match spec.mode {
        ScanMode::Quantum => &[SeriesKind::Quantum],
        ScanMode::Classical => &[SeriesKind::Classical],
        ScanMode::Both => &[SeriesKind::Quantum, SeriesKind::Classical],
    };
    let (rows, cols) = spec.shape();
    let axes: Vec<(ScanParam, Vec<f64>)> =
        spec.axes.iter().map(|a| (a.param, a.values())).collect();
    Ok(modes
        .iter()
        .map(|&mode| {
            let cells = pool.install(|| {
                (0..rows * cols)
                    .into_par_iter()
                    .map(|idx| run_point(spec, mode, idx / cols, idx % cols, idx))
                    .collect()
            });
            RateGrid {
                mode,
                observable: spec.observable,
                axes: axes.clone(),
                cells,
            }
        })
        .collect())
}

fn run_point(spec: &ScanSpec, mode: SeriesKind, i: usize, j: usize, idx: usize) -> Cell {
    match evaluate_point(spec, mode, i, j, idx) {
        Ok(cell) => cell,
        Err(e) => Cell::missing(e.to_string()),
    }
}

fn evaluate_point(
    spec: &ScanSpec,
    mode: SeriesKind,
    i: usize,
    j: usize,
    idx: usize,
) -> Result<Cell> {
    let (params, beta) = spec.point(i, j)?;
    let (values, basis_size) = match mode {
        SeriesKind::Quantum => {
            if beta.sigma == 0.0 && beta.mean == 0.0 {
                let run = spec
                    .runner
                    .run(&params, &spec.vk, &spec.vl, 0.0, spec.steps)?;
                (run.series.values, Some(run.basis_size))
            } else {
                let avg = beta_averaged_series(
                    &params,
                    &spec.vk,
                    &spec.vl,
                    &beta,
                    spec.steps,
                    &spec.runner,
                )?;
                (avg.series.values, Some(avg.basis_size))
            }
        }
        SeriesKind::Classical => {
            let seed = point_seed(spec.master_seed, idx as u64);
            let mut ensemble = ClassicalEnsemble::new(spec.ensemble_size, seed, spec.sampling);
            let series = classical_series(&params, &spec.vk, &spec.vl, &mut ensemble, spec.steps);
            (series.values, None)
        }
    };
    let (value, r_squared) = match spec.observable {
        Observable::Rate => {
            let fit = fit_line(&values, spec.window)?;
            (fit.slope, Some(fit.r_squared))
        }
        Observable::FinalValue => (values[spec.steps], None),
    };
    Ok(Cell {
        value: Some(value),
        r_squared,
        basis_size,
        missing: None,
    })
}

/// Half-decade contour bucket, labelled by its upper edge `10^(k/2)`.
/// The lowest bucket, `k = -3`, collects everything below `10^-1.5`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Bucket(pub i32);

impl Bucket {
    pub const LOWEST: Bucket = Bucket(-3);

    pub fn of(rate: f64) -> Option<Bucket> {
        if rate.is_nan() {
            return None;
        }
        let a = rate.abs();
        if a < 10f64.powf(-1.5) {
            return Some(Self::LOWEST);
        }
        let mut k = (2.0 * a.log10()).floor() as i32 + 1;
        // guard the floor against log10 rounding at exact edges
        while a >= 10f64.powf(k as f64 / 2.0) {
            k += 1;
        }
        while k > Self::LOWEST.0 + 1 && a < 10f64.powf((k - 1) as f64 / 2.0) {
            k -= 1;
        }
        Some(Bucket(k.max(Self::LOWEST.0)))
    }

    /// Upper edge exponent.
    pub fn exponent(self) -> f64 {
        self.0 as f64 / 2.0
    }
}

impl fmt::Display for Bucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "1e{:.1}", self.exponent())
    }
}

/// Bucket a matrix of rates; NaN entries map to `None`.
pub fn bucketize(rates: &[Vec<f64>]) -> Vec<Vec<Option<Bucket>>> {
    rates
        .iter()
        .map(|row| row.iter().map(|&r| Bucket::of(r)).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{estimate_rate, quantum_series};
    use std::f64::consts::PI;

    fn base_spec() -> ScanSpec {
        ScanSpec {
            axes: vec![Axis::new(ScanParam::KTilde, 3.0, 3.0, 1)],
            fixed: ScaledParams::main(2.0, 1.0, 1.0, PI / 2.0).unwrap(),
            vk: Potential::cosine(),
            vl: Potential::cosine(),
            mode: ScanMode::Quantum,
            observable: Observable::Rate,
            steps: 300,
            window: Window::new(100, 300),
            runner: QuantumRunner::with_basis(1024),
            beta: BetaDistribution {
                mean: 0.0,
                sigma: 0.0,
                nodes: 64,
            },
            ensemble_size: 2000,
            sampling: Sampling::Random,
            master_seed: 0,
        }
    }

    #[test]
    fn bucket_examples() {
        assert_eq!(Bucket::of(0.02).unwrap().to_string(), "1e-1.5");
        assert_eq!(Bucket::of(0.2).unwrap().to_string(), "1e-0.5");
        assert_eq!(Bucket::of(0.0).unwrap().to_string(), "1e-1.5");
        assert_eq!(Bucket::of(-0.05).unwrap().to_string(), "1e-1.0");
        assert_eq!(Bucket::of(10f64.powf(-1.5)).unwrap().to_string(), "1e-1.0");
        assert_eq!(Bucket::of(0.1).unwrap().to_string(), "1e-0.5");
        assert_eq!(Bucket::of(0.5).unwrap().to_string(), "1e0.0");
        assert_eq!(Bucket::of(2.0).unwrap().to_string(), "1e0.5");
        assert_eq!(Bucket::of(f64::NAN), None);
        let m = bucketize(&[vec![0.0, 0.2], vec![f64::NAN, 5.0]]);
        assert_eq!(m[0][1], Some(Bucket(-1)));
        assert_eq!(m[1][0], None);
        assert_eq!(m[1][1], Some(Bucket(2)));
    }

    #[test]
    fn axis_values() {
        assert_eq!(Axis::new(ScanParam::Phi, 0.0, 1.0, 1).values(), vec![0.0]);
        assert_eq!(
            Axis::new(ScanParam::Phi, 0.0, 1.0, 5).values(),
            vec![0.0, 0.25, 0.5, 0.75, 1.0]
        );
    }

    #[test]
    fn single_point_matches_standalone_estimate() {
        let spec = base_spec();
        let grid = &run_scan(&spec, 1).unwrap()[0];
        let params = ScaledParams {
            k_tilde: 3.0,
            ..spec.fixed
        };
        let series = quantum_series(&params, &spec.vk, &spec.vl, 0, 300, 1024).unwrap();
        let fit = estimate_rate(&series, spec.window).unwrap();
        assert_eq!(grid.cell(0, 0).value, Some(fit.slope));
        assert_eq!(grid.cell(0, 0).r_squared, Some(fit.r_squared));
    }

    #[test]
    fn phi_scan_vanishes_at_zero() {
        let spec = ScanSpec {
            axes: vec![Axis::new(ScanParam::Phi, -PI / 2.0, PI / 2.0, 3)],
            ..base_spec()
        };
        let grid = &run_scan(&spec, 2).unwrap()[0];
        let r = grid.rates();
        assert!(r[1][0].abs() <= 1e-8);
        assert!((r[0][0] + r[2][0]).abs() <= 1e-8);
    }

    #[test]
    fn ties_drive_linked_parameters() {
        let spec = ScanSpec {
            axes: vec![Axis {
                ties: vec![
                    Tie {
                        param: ScanParam::KTilde,
                        factor: 3.0,
                    },
                    Tie {
                        param: ScanParam::LTilde,
                        factor: 1.0,
                    },
                ],
                ..Axis::new(ScanParam::HbarTilde, 0.5, 1.0, 2)
            }],
            ..base_spec()
        };
        let (p, _) = spec.point(1, 0).unwrap();
        assert_eq!((p.k_tilde, p.l_tilde, p.hbar_tilde), (3.0, 1.0, 1.0));
    }

    #[test]
    fn invalid_points_become_missing() {
        let spec = ScanSpec {
            axes: vec![Axis::new(ScanParam::HbarTilde, 0.0, 1.0, 2)],
            ..base_spec()
        };
        let grid = &run_scan(&spec, 1).unwrap()[0];
        assert!(grid
            .cell(0, 0)
            .missing
            .as_deref()
            .unwrap()
            .contains("hbar_tilde"));
        assert!(grid.cell(1, 0).value.is_some());
        assert_eq!(grid.missing_count(), 1);

        // a ladder too small to hold the state is a truncation, recorded per point
        let spec = ScanSpec {
            runner: QuantumRunner {
                basis_size: 32,
                max_basis_size: 32,
                ..QuantumRunner::default()
            },
            ..base_spec()
        };
        let grid = &run_scan(&spec, 1).unwrap()[0];
        assert!(grid
            .cell(0, 0)
            .missing
            .as_deref()
            .unwrap()
            .contains("truncated"));
    }

    #[test]
    fn spec_validation() {
        let mut spec = base_spec();
        spec.axes = vec![
            Axis::new(ScanParam::KTilde, 1.0, 2.0, 2),
            Axis::new(ScanParam::KTilde, 1.0, 2.0, 2),
        ];
        assert!(spec.validate().is_err());
        spec.axes = vec![];
        assert!(spec.validate().is_err());
        let mut spec = base_spec();
        spec.window = Window::new(100, 500);
        assert!(spec.validate().is_err());
    }

    #[test]
    fn classical_scan_is_deterministic_across_workers() {
        let spec = ScanSpec {
            axes: vec![
                Axis::new(ScanParam::KTilde, 0.5, 3.0, 3),
                Axis::new(ScanParam::LTilde, 0.5, 3.0, 2),
            ],
            mode: ScanMode::Classical,
            ..base_spec()
        };
        let a = run_scan(&spec, 1).unwrap();
        let b = run_scan(&spec, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].shape(), (3, 2));
    }

    #[test]
    fn point_seeds_differ() {
        let seeds: std::collections::HashSet<u64> = (0..1000).map(|i| point_seed(7, i)).collect();
        assert_eq!(seeds.len(), 1000);
        assert_ne!(point_seed(7, 0), point_seed(8, 0));
    }

    proptest::proptest! {
        #[test]
        fn buckets_are_monotone_in_magnitude(a in -6.0f64..2.0, b in -6.0f64..2.0, neg in proptest::bool::ANY) {
            let (x, y) = (10f64.powf(a.min(b)), 10f64.powf(a.max(b)));
            let x = if neg { -x } else { x };
            let (bx, by) = (Bucket::of(x).unwrap(), Bucket::of(y).unwrap());
            proptest::prop_assert!(bx <= by);
            proptest::prop_assert!(y.abs() < 10f64.powf(by.exponent()));
            if by > Bucket::LOWEST {
                proptest::prop_assert!(y.abs() >= 10f64.powf(by.exponent() - 0.5));
            }
        }
    }
}
