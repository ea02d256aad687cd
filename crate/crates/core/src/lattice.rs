//! Shared domain types: physical and rescaled control parameters, the
//! resonance order of the kick period, and the 2π-periodic potential family
//! used by both the quantum and the classical engines.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Supported range for the rescaled kick amplitudes.
pub const KICK_RANGE: (f64, f64) = (0.0, 100.0);
/// Supported range for the rescaled Planck constant.
pub const HBAR_RANGE: (f64, f64) = (0.01, 20.0);

const RESONANCE_REL_TOL: f64 = 1e-12;

/// Reduce an angle into `[-π, π)`. Only used for output; internal arithmetic
/// keeps angles unreduced.
pub fn fold_angle(x: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut y = (x + PI).rem_euclid(two_pi) - PI;
    // rem_euclid may round up to exactly 2π for tiny negative inputs
    if y >= PI {
        y -= two_pi;
    }
    if y < -PI {
        y = -PI;
    }
    y
}

fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Order of the quantum resonance, `T·ħ = 4π ν/μ` with coprime `ν, μ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResonanceOrder {
    pub nu: u32,
    pub mu: u32,
}

impl ResonanceOrder {
    /// `T·ħ = 4π`.
    pub const MAIN: ResonanceOrder = ResonanceOrder { nu: 1, mu: 1 };
    /// `T·ħ = 2π`.
    pub const ANTI: ResonanceOrder = ResonanceOrder { nu: 1, mu: 2 };

    pub fn new(nu: u32, mu: u32) -> Result<Self> {
        let order = ResonanceOrder { nu, mu };
        order.validate()?;
        Ok(order)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nu == 0 {
            return Err(Error::invalid("nu", "must be a positive integer"));
        }
        if self.mu == 0 {
            return Err(Error::invalid("mu", "must be a positive integer"));
        }
        if gcd(self.nu, self.mu) != 1 {
            return Err(Error::invalid(
                "nu",
                format!("nu = {} and mu = {} must be coprime", self.nu, self.mu),
            ));
        }
        Ok(())
    }

    /// The product `T·ħ` this order stands for.
    pub fn period_hbar(&self) -> f64 {
        4.0 * PI * self.nu as f64 / self.mu as f64
    }

    /// Phase of the full-period free factor for momentum `(n + β)`, in turns,
    /// i.e. `(ν/μ)(n + β)²` reduced into `[0, 1)`.
    ///
    /// The integer part `ν n² mod μ` is done in exact arithmetic so that at
    /// `β = 0` the phase is exactly a multiple of `1/μ`.
    pub fn free_turns(&self, n: i64, beta: f64) -> f64 {
        let nu = self.nu as i128;
        let mu = self.mu as i128;
        let n = n as i128;
        let integer = ((nu * n * n).rem_euclid(mu)) as f64 / self.mu as f64;
        let ratio = self.nu as f64 / self.mu as f64;
        let n = n as f64;
        let fractional =
            (ratio * ((2.0 * n * beta).rem_euclid(self.mu as f64) + beta * beta)).rem_euclid(1.0);
        (integer + fractional).rem_euclid(1.0)
    }
}

impl Default for ResonanceOrder {
    fn default() -> Self {
        Self::MAIN
    }
}

/// Raw double-kicked-rotor parameters in scaled dimensionless units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// Kick period `T`.
    pub period: f64,
    /// Delay `η` between the two kick sequences, `0 < η < T`.
    pub delay: f64,
    pub k: f64,
    pub l: f64,
    pub hbar: f64,
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.period.is_finite() && self.period > 0.0) {
            return Err(Error::invalid("period", "must be positive"));
        }
        if !(self.delay > 0.0 && self.delay < self.period) {
            return Err(Error::invalid("delay", "must satisfy 0 < delay < period"));
        }
        if !(self.hbar.is_finite() && self.hbar > 0.0) {
            return Err(Error::invalid("hbar", "must be positive"));
        }
        if !(self.k.is_finite() && self.k >= 0.0) {
            return Err(Error::invalid("k", "must be non-negative"));
        }
        if !(self.l.is_finite() && self.l >= 0.0) {
            return Err(Error::invalid("l", "must be non-negative"));
        }
        Ok(())
    }

    /// Rescale by the delay: `K̃ = ηK`, `L̃ = ηL`, `ħ̃ = ηħ`.
    ///
    /// Fails unless `T·ħ` equals `4πν/μ` for the declared resonance to a
    /// relative tolerance of 1e-12; off-resonance kicking is not modelled.
    pub fn rescale(&self, resonance: ResonanceOrder, phi: f64) -> Result<ScaledParams> {
        self.validate()?;
        resonance.validate()?;
        let product = self.period * self.hbar;
        let expected = resonance.period_hbar();
        if ((product - expected) / expected).abs() > RESONANCE_REL_TOL {
            return Err(Error::OffResonance {
                product,
                expected,
                nu: resonance.nu,
                mu: resonance.mu,
            });
        }
        ScaledParams::new(
            self.delay * self.k,
            self.delay * self.l,
            self.delay * self.hbar,
            phi,
            resonance,
        )
    }
}

/// The rescaled control knobs of the on-resonance map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledParams {
    pub k_tilde: f64,
    pub l_tilde: f64,
    pub hbar_tilde: f64,
    /// Phase shift of the second lattice. Stored unreduced.
    pub phi: f64,
    pub resonance: ResonanceOrder,
}

impl ScaledParams {
    pub fn new(
        k_tilde: f64,
        l_tilde: f64,
        hbar_tilde: f64,
        phi: f64,
        resonance: ResonanceOrder,
    ) -> Result<Self> {
        let params = ScaledParams {
            k_tilde,
            l_tilde,
            hbar_tilde,
            phi,
            resonance,
        };
        params.validate()?;
        Ok(params)
    }

    /// Main-resonance parameters, the common case.
    pub fn main(k_tilde: f64, l_tilde: f64, hbar_tilde: f64, phi: f64) -> Result<Self> {
        Self::new(k_tilde, l_tilde, hbar_tilde, phi, ResonanceOrder::MAIN)
    }

    pub fn validate(&self) -> Result<()> {
        check_range("k_tilde", self.k_tilde, KICK_RANGE)?;
        check_range("l_tilde", self.l_tilde, KICK_RANGE)?;
        check_range("hbar_tilde", self.hbar_tilde, HBAR_RANGE)?;
        if !self.phi.is_finite() {
            return Err(Error::invalid("phi", "must be finite"));
        }
        self.resonance.validate()
    }
}

pub(crate) fn check_range(key: &str, value: f64, (lo, hi): (f64, f64)) -> Result<()> {
    if value.is_finite() && value >= lo && value <= hi {
        Ok(())
    } else {
        Err(Error::invalid(
            key,
            format!("{value} is outside the valid range [{lo}, {hi}]"),
        ))
    }
}

/// One term `a cos(m q + χ)` of a [`Potential`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Harmonic {
    pub m: u32,
    pub amplitude: f64,
    pub phase: f64,
}

/// A 2π-periodic potential `V(q) = Σ_j a_j cos(m_j q + χ_j)`.
///
/// In configuration files a potential is written as a list of
/// `[m, a, chi]` triples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(u32, f64, f64)>", into = "Vec<(u32, f64, f64)>")]
pub struct Potential {
    terms: Vec<Harmonic>,
}

impl Potential {
    pub fn new(terms: Vec<Harmonic>) -> Result<Self> {
        for t in &terms {
            if t.m == 0 {
                return Err(Error::invalid(
                    "potential",
                    "harmonic index m must be a positive integer",
                ));
            }
            if !(t.amplitude.is_finite() && t.phase.is_finite()) {
                return Err(Error::invalid(
                    "potential",
                    "amplitude and phase must be finite",
                ));
            }
        }
        Ok(Potential { terms })
    }

    /// `cos q`.
    pub fn cosine() -> Self {
        Potential {
            terms: vec![Harmonic {
                m: 1,
                amplitude: 1.0,
                phase: 0.0,
            }],
        }
    }

    /// Bichromatic kick `cos(q + φ1) + sin(2q + φ2)`.
    pub fn bichromatic(phi1: f64, phi2: f64) -> Self {
        Potential {
            terms: vec![
                Harmonic {
                    m: 1,
                    amplitude: 1.0,
                    phase: phi1,
                },
                Harmonic {
                    m: 2,
                    amplitude: 1.0,
                    phase: phi2 - PI / 2.0,
                },
            ],
        }
    }

    pub fn terms(&self) -> &[Harmonic] {
        &self.terms
    }

    pub fn eval(&self, q: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| t.amplitude * (t.m as f64 * q + t.phase).cos())
            .sum()
    }

    pub fn deriv(&self, q: f64) -> f64 {
        -self
            .terms
            .iter()
            .map(|t| t.amplitude * t.m as f64 * (t.m as f64 * q + t.phase).sin())
            .sum::<f64>()
    }

    /// The potential translated by `shift`: `q ↦ V(q + shift)`.
    pub fn shifted(&self, shift: f64) -> Self {
        Potential {
            terms: self
                .terms
                .iter()
                .map(|t| Harmonic {
                    phase: t.phase + t.m as f64 * shift,
                    ..*t
                })
                .collect(),
        }
    }
}

impl TryFrom<Vec<(u32, f64, f64)>> for Potential {
    type Error = Error;

    fn try_from(raw: Vec<(u32, f64, f64)>) -> Result<Self> {
        Potential::new(
            raw.into_iter()
                .map(|(m, amplitude, phase)| Harmonic {
                    m,
                    amplitude,
                    phase,
                })
                .collect(),
        )
    }
}

impl From<Potential> for Vec<(u32, f64, f64)> {
    fn from(v: Potential) -> Self {
        v.terms
            .into_iter()
            .map(|t| (t.m, t.amplitude, t.phase))
            .collect()
    }
}

impl fmt::Display for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{}*cos({}q + {})", t.amplitude, t.m, t.phase)?;
        }
        Ok(())
    }
}
