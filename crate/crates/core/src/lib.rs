//! Quantum and classical simulation of an on-resonance double-kicked rotor
//! driven as a ratchet accelerator.
//!
//! The quantum side evolves momentum-ladder states under the resonant
//! two-kick Floquet map; the classical side iterates the matching
//! small-`η` area-preserving map over an ensemble. [`analysis`] turns either
//! into `⟨p̃(t)⟩` series and acceleration rates, and [`sweep`] runs those over
//! parameter grids.

pub mod analysis;
pub mod app;
pub mod classical;
pub mod config;
pub mod error;
pub mod lattice;
pub mod output;
pub mod quantum;
pub mod sweep;

pub use analysis::{
    beta_averaged_series, classical_series, estimate_rate, quantum_series, saturation_time,
    BetaDistribution, CurrentSeries, QuantumRunner, RateEstimate, SeriesKind, Window,
};
pub use classical::{ClassicalEnsemble, EtaClassicalMap, Sampling};
pub use error::{Error, Result};
pub use lattice::{PhysicalParams, Potential, ResonanceOrder, ScaledParams};
pub use quantum::{QuantumState, RatchetMap};
pub use sweep::{run_scan, Axis, Bucket, RateGrid, ScanMode, ScanParam, ScanSpec};
