//! Quantum propagation on a truncated momentum ladder.
//!
//! Amplitudes `c_n` are stored for `n ∈ [-N/2, N/2)` in FFT order: slot `k`
//! holds `n = k` for `k < N/2` and `n = k - N` otherwise. The position grid is
//! `q_j = 2πj/N`, so `ψ(q_j) = Σ_n c_n e^{i n q_j}` is an unnormalized inverse
//! DFT of the slots.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::lattice::{Potential, ResonanceOrder, ScaledParams};

/// Edge-band population above which the truncated basis is considered invalid.
pub const EDGE_TOLERANCE: f64 = 1e-10;

/// Momentum number stored in slot `k` of a basis of size `size`.
#[inline]
pub fn momentum_number(k: usize, size: usize) -> i64 {
    if k < size / 2 {
        k as i64
    } else {
        k as i64 - size as i64
    }
}

#[inline]
fn slot(n: i64, size: usize) -> usize {
    n.rem_euclid(size as i64) as usize
}

/// `e^{-2πi·turns}`, exact for whole quarter turns.
pub(crate) fn phase_turns(turns: f64) -> Complex64 {
    let t = turns.rem_euclid(1.0);
    const QUARTERS: [(f64, f64); 4] = [(1.0, 0.0), (0.0, -1.0), (-1.0, 0.0), (0.0, 1.0)];
    let quarter = 4.0 * t;
    if quarter.fract() == 0.0 {
        // rem_euclid can round a tiny negative input up to exactly 1
        let (re, im) = QUARTERS[quarter as usize % 4];
        Complex64::new(re, im)
    } else {
        Complex64::from_polar(1.0, -2.0 * PI * t)
    }
}

/// Which kinetic term a free-evolution factor carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kinetic {
    /// `H = +p̃²/2`: `c_n ← e^{-i(n+β)²ħ̃/2} c_n`.
    Positive,
    /// `H = -p̃²/2`: `c_n ← e^{+i(n+β)²ħ̃/2} c_n`.
    Negative,
}

impl Kinetic {
    pub fn sign(self) -> f64 {
        match self {
            Kinetic::Positive => 1.0,
            Kinetic::Negative => -1.0,
        }
    }
}

/// Forward/inverse transforms between the momentum ladder and the position grid.
pub struct Spectral {
    size: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
}

impl Spectral {
    pub fn new(size: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(size);
        let inverse = planner.plan_fft_inverse(size);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Spectral {
            size,
            forward,
            inverse,
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Momentum amplitudes to position samples `ψ(q_j)`, in place.
    pub fn to_position(&mut self, buf: &mut [Complex64]) {
        self.inverse.process_with_scratch(buf, &mut self.scratch);
    }

    /// Position samples back to momentum amplitudes, in place, without the
    /// `1/N` normalization.
    pub fn to_momentum_unnormalized(&mut self, buf: &mut [Complex64]) {
        self.forward.process_with_scratch(buf, &mut self.scratch);
    }

    pub fn to_momentum(&mut self, buf: &mut [Complex64]) {
        self.to_momentum_unnormalized(buf);
        let scale = 1.0 / self.size as f64;
        buf.iter_mut().for_each(|c| *c *= scale);
    }
}

/// Truncation diagnostic returned by [`QuantumState::grid_guard`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridDiagnostic {
    pub edge_population: f64,
    pub ok: bool,
}

/// A quasi-momentum component of the rotor state on a truncated ladder.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    amplitudes: Vec<Complex64>,
    beta: f64,
    hbar_tilde: f64,
}

fn check_basis_size(size: usize) -> Result<()> {
    if size < 4 || !size.is_power_of_two() {
        return Err(Error::invalid(
            "basis_size",
            format!("{size} must be a power of two and at least 4"),
        ));
    }
    Ok(())
}

fn check_beta(beta: f64) -> Result<()> {
    if !beta.is_finite() {
        return Err(Error::invalid("beta", "must be finite"));
    }
    Ok(())
}

impl QuantumState {
    /// The momentum eigenstate `|n0⟩`.
    pub fn basis_state(n0: i64, size: usize, beta: f64, hbar_tilde: f64) -> Result<Self> {
        check_basis_size(size)?;
        check_beta(beta)?;
        let half = (size / 2) as i64;
        if n0 < -half || n0 >= half {
            return Err(Error::invalid(
                "n0",
                format!("{n0} lies outside the basis [-{half}, {half})"),
            ));
        }
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); size];
        amplitudes[slot(n0, size)] = Complex64::new(1.0, 0.0);
        Ok(QuantumState {
            amplitudes,
            beta,
            hbar_tilde,
        })
    }

    /// Build a state from a function of the momentum number. No normalization
    /// is applied.
    pub fn from_fn(
        size: usize,
        beta: f64,
        hbar_tilde: f64,
        mut amplitude: impl FnMut(i64) -> Complex64,
    ) -> Result<Self> {
        check_basis_size(size)?;
        check_beta(beta)?;
        let amplitudes = (0..size)
            .map(|k| amplitude(momentum_number(k, size)))
            .collect();
        Ok(QuantumState {
            amplitudes,
            beta,
            hbar_tilde,
        })
    }

    pub fn basis_size(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn hbar_tilde(&self) -> f64 {
        self.hbar_tilde
    }

    /// Amplitude of `|n⟩`; zero outside the basis.
    pub fn amplitude(&self, n: i64) -> Complex64 {
        let half = (self.basis_size() / 2) as i64;
        if n < -half || n >= half {
            Complex64::new(0.0, 0.0)
        } else {
            self.amplitudes[slot(n, self.basis_size())]
        }
    }

    /// Raw amplitudes in FFT slot order.
    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    /// `(n, |c_n|²)` in ascending `n`.
    pub fn distribution(&self) -> Vec<(i64, f64)> {
        let size = self.basis_size();
        let half = (size / 2) as i64;
        (-half..half)
            .map(|n| (n, self.amplitudes[slot(n, size)].norm_sqr()))
            .collect()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|c| c.norm_sqr()).sum()
    }

    /// `⟨p̃⟩ = Σ_n |c_n|² (n + β) ħ̃`.
    pub fn momentum_expectation(&self) -> f64 {
        let size = self.basis_size();
        let weighted: f64 = self
            .amplitudes
            .iter()
            .enumerate()
            .map(|(k, c)| c.norm_sqr() * (momentum_number(k, size) as f64 + self.beta))
            .sum();
        weighted * self.hbar_tilde
    }

    /// Population in the outer 10% of the ladder (the 5% of slots nearest
    /// each end).
    pub fn grid_guard(&self) -> GridDiagnostic {
        let size = self.basis_size();
        let width = size.div_ceil(20).max(1);
        let half = (size / 2) as i64;
        let inner = half - width as i64;
        let edge_population: f64 = self
            .amplitudes
            .iter()
            .enumerate()
            .filter(|&(k, _)| {
                let n = momentum_number(k, size);
                n >= inner || n < -inner
            })
            .map(|(_, c)| c.norm_sqr())
            .sum();
        GridDiagnostic {
            edge_population,
            ok: edge_population < EDGE_TOLERANCE,
        }
    }

    /// Euclidean distance between two states on the same ladder.
    pub fn distance(&self, other: &QuantumState) -> f64 {
        assert_eq!(self.basis_size(), other.basis_size(), "basis sizes differ");
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Kick `e^{-i·strength·V(q)}` applied on the position grid.
    pub fn apply_kick(&mut self, spectral: &mut Spectral, v: &Potential, strength: f64) {
        let size = self.basis_size();
        assert_eq!(spectral.size(), size, "transform size does not match basis");
        spectral.to_position(&mut self.amplitudes);
        for (j, psi) in self.amplitudes.iter_mut().enumerate() {
            let q = 2.0 * PI * j as f64 / size as f64;
            *psi *= Complex64::from_polar(1.0, -strength * v.eval(q));
        }
        spectral.to_momentum(&mut self.amplitudes);
    }

    /// Unit-time free evolution with the chosen kinetic sign.
    pub fn apply_free(&mut self, kinetic: Kinetic) {
        let size = self.basis_size();
        let (beta, hbar) = (self.beta, self.hbar_tilde);
        for (k, c) in self.amplitudes.iter_mut().enumerate() {
            *c *= free_phase(momentum_number(k, size), beta, hbar, kinetic);
        }
    }

    /// Residual full-period phase `e^{-2πi(ν/μ)(n+β)²}` of an on-resonance
    /// kick period. Identity for the main resonance at `β = 0`.
    pub fn apply_resonance_phase(&mut self, order: ResonanceOrder) {
        let size = self.basis_size();
        let beta = self.beta;
        for (k, c) in self.amplitudes.iter_mut().enumerate() {
            *c *= phase_turns(order.free_turns(momentum_number(k, size), beta));
        }
    }

    /// Zero-pad into a larger ladder.
    pub fn embed(&self, size: usize) -> Result<QuantumState> {
        check_basis_size(size)?;
        if size < self.basis_size() {
            return Err(Error::invalid(
                "basis_size",
                "cannot embed into a smaller basis",
            ));
        }
        QuantumState::from_fn(size, self.beta, self.hbar_tilde, |n| self.amplitude(n))
    }
}

fn free_phase(n: i64, beta: f64, hbar_tilde: f64, kinetic: Kinetic) -> Complex64 {
    let x = n as f64 + beta;
    let angle = (x * x * hbar_tilde / 2.0).rem_euclid(2.0 * PI);
    Complex64::from_polar(1.0, -kinetic.sign() * angle)
}

/// One kick period composed from the individual factors, in order: kick by
/// `V_K`, positive free evolution, kick by `V_L(q + φ)`, negative free
/// evolution, residual resonance phase.
///
/// This is the reference composition; [`RatchetMap`] is the fast path for
/// repeated steps. Fails if the state leaks into the basis edge.
pub fn ratchet_step(
    state: &mut QuantumState,
    params: &ScaledParams,
    vk: &Potential,
    vl: &Potential,
) -> Result<GridDiagnostic> {
    let mut spectral = Spectral::new(state.basis_size());
    let hbar = params.hbar_tilde;
    state.apply_kick(&mut spectral, vk, params.k_tilde / hbar);
    state.apply_free(Kinetic::Positive);
    state.apply_kick(
        &mut spectral,
        &vl.shifted(params.phi),
        params.l_tilde / hbar,
    );
    state.apply_free(Kinetic::Negative);
    state.apply_resonance_phase(params.resonance);
    let guard = state.grid_guard();
    if !guard.ok {
        return Err(Error::Truncation {
            step: 1,
            basis_size: state.basis_size(),
            max_basis_size: state.basis_size(),
            edge_population: guard.edge_population,
        });
    }
    Ok(guard)
}

/// Precomputed one-period propagator for a fixed ladder, quasi-momentum and
/// parameter set.
pub struct RatchetMap {
    size: usize,
    beta: f64,
    hbar_tilde: f64,
    kick_k: Vec<Complex64>,
    kick_l: Vec<Complex64>,
    free_positive: Vec<Complex64>,
    free_negative: Vec<Complex64>,
    spectral: Spectral,
}

impl RatchetMap {
    pub fn new(
        params: &ScaledParams,
        vk: &Potential,
        vl: &Potential,
        size: usize,
        beta: f64,
    ) -> Result<Self> {
        check_basis_size(size)?;
        check_beta(beta)?;
        let hbar = params.hbar_tilde;
        let norm = 1.0 / size as f64;
        let vl = vl.shifted(params.phi);
        let grid = |v: &Potential, strength: f64| -> Vec<Complex64> {
            (0..size)
                .map(|j| {
                    let q = 2.0 * PI * j as f64 / size as f64;
                    Complex64::from_polar(norm, -strength * v.eval(q))
                })
                .collect()
        };
        let kick_k = grid(vk, params.k_tilde / hbar);
        let kick_l = grid(&vl, params.l_tilde / hbar);
        let free_positive = (0..size)
            .map(|k| free_phase(momentum_number(k, size), beta, hbar, Kinetic::Positive))
            .collect();
        let free_negative = (0..size)
            .map(|k| {
                let n = momentum_number(k, size);
                free_phase(n, beta, hbar, Kinetic::Negative)
                    * phase_turns(params.resonance.free_turns(n, beta))
            })
            .collect();
        Ok(RatchetMap {
            size,
            beta,
            hbar_tilde: hbar,
            kick_k,
            kick_l,
            free_positive,
            free_negative,
            spectral: Spectral::new(size),
        })
    }

    pub fn basis_size(&self) -> usize {
        self.size
    }

    /// The initial state `|n0⟩` on this map's ladder.
    pub fn basis_state(&self, n0: i64) -> Result<QuantumState> {
        QuantumState::basis_state(n0, self.size, self.beta, self.hbar_tilde)
    }

    pub fn step(&mut self, state: &mut QuantumState) {
        assert_eq!(
            state.basis_size(),
            self.size,
            "state basis does not match map"
        );
        assert!(
            state.beta == self.beta && state.hbar_tilde == self.hbar_tilde,
            "state quasi-momentum or hbar does not match map"
        );
        let c = &mut state.amplitudes;
        self.spectral.to_position(c);
        multiply(c, &self.kick_k);
        self.spectral.to_momentum_unnormalized(c);
        multiply(c, &self.free_positive);
        self.spectral.to_position(c);
        multiply(c, &self.kick_l);
        self.spectral.to_momentum_unnormalized(c);
        multiply(c, &self.free_negative);
    }
}

#[inline]
fn multiply(a: &mut [Complex64], b: &[Complex64]) {
    a.iter_mut().zip(b).for_each(|(x, y)| *x *= y);
}
