//! The η-classical map and ensemble evolution.
//!
//! With `P = q + p̃` one kick period reads
//!
//! ```text
//! P' = P - K̃ V_K'(q)
//! q' = q + L̃ V_L'(P' + φ)
//! p̃' = P' - q'
//! ```
//!
//! Coordinates are never range-reduced during evolution; folding into the
//! fundamental cell happens only in [`portrait`].

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::lattice::{fold_angle, Potential, ScaledParams};

/// Particles per reduction chunk. The mean-momentum sum is accumulated per
/// chunk and the chunk sums are added in index order, so results do not
/// depend on how rayon schedules the chunks.
const CHUNK: usize = 4096;

/// The η-classical map for a fixed parameter set.
#[derive(Debug, Clone)]
pub struct EtaClassicalMap {
    k_tilde: f64,
    l_tilde: f64,
    vk: Potential,
    /// `V_L` already translated by `φ`.
    vl: Potential,
}

impl EtaClassicalMap {
    pub fn new(params: &ScaledParams, vk: &Potential, vl: &Potential) -> Self {
        EtaClassicalMap {
            k_tilde: params.k_tilde,
            l_tilde: params.l_tilde,
            vk: vk.clone(),
            vl: vl.shifted(params.phi),
        }
    }

    #[inline]
    pub fn step(&self, q: f64, p: f64) -> (f64, f64) {
        let big_p = q + p - self.k_tilde * self.vk.deriv(q);
        let q_next = q + self.l_tilde * self.vl.deriv(big_p);
        (q_next, big_p - q_next)
    }
}

/// One period of the η-classical map from `(q, p̃)`.
pub fn classical_step(
    q: f64,
    p: f64,
    params: &ScaledParams,
    vk: &Potential,
    vl: &Potential,
) -> (f64, f64) {
    EtaClassicalMap::new(params, vk, vl).step(q, p)
}

/// How initial coordinates are placed on `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampling {
    /// i.i.d. uniform from a seeded ChaCha8 stream.
    #[default]
    Random,
    /// Equally spaced midpoints `2π(i + ½)/n`; the seed is unused.
    Stratified,
}

/// Phase-space points `(q^c, p̃^c)` of a classical ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalEnsemble {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub seed: u64,
}

impl ClassicalEnsemble {
    /// `n` particles on the line `p̃ = 0` with `q` uniform on `[0, 2π)`.
    pub fn new(n: usize, seed: u64, sampling: Sampling) -> Self {
        assert!(n >= 1, "ensemble needs at least one particle");
        let q = match sampling {
            Sampling::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..n).map(|_| rng.random_range(0.0..2.0 * PI)).collect()
            }
            Sampling::Stratified => (0..n)
                .map(|i| 2.0 * PI * (i as f64 + 0.5) / n as f64)
                .collect(),
        };
        ClassicalEnsemble {
            q,
            p: vec![0.0; n],
            seed,
        }
    }

    /// Reflected copy `q → -q`, `p̃ → -p̃` (equivalent to `q → 2π - q` on the
    /// circle, but exact in floating point).
    pub fn mirrored(&self) -> Self {
        ClassicalEnsemble {
            q: self.q.iter().map(|&x| -x).collect(),
            p: self.p.iter().map(|&x| -x).collect(),
            seed: self.seed,
        }
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn mean_momentum(&self) -> f64 {
        chunked_mean(&self.p)
    }
}

fn chunked_mean(values: &[f64]) -> f64 {
    let total: f64 = values.chunks(CHUNK).map(|c| c.iter().sum::<f64>()).sum();
    total / values.len() as f64
}

/// Evolve every particle for `steps` periods and return `⟨p̃^c⟩` at
/// `t = 0, 1, …, steps`.
///
/// Particles are processed in parallel chunks; the result is bitwise
/// independent of the number of worker threads.
pub fn ensemble_evolve(
    ensemble: &mut ClassicalEnsemble,
    map: &EtaClassicalMap,
    steps: usize,
) -> Vec<f64> {
    let n = ensemble.len();
    let chunk_sums: Vec<Vec<f64>> = ensemble
        .q
        .par_chunks_mut(CHUNK)
        .zip(ensemble.p.par_chunks_mut(CHUNK))
        .map(|(qs, ps)| {
            let mut sums = Vec::with_capacity(steps + 1);
            sums.push(ps.iter().sum::<f64>());
            for _ in 0..steps {
                let mut acc = 0.0;
                for (q, p) in qs.iter_mut().zip(ps.iter_mut()) {
                    (*q, *p) = map.step(*q, *p);
                    acc += *p;
                }
                sums.push(acc);
            }
            sums
        })
        .collect();
    (0..=steps)
        .map(|t| chunk_sums.iter().map(|s| s[t]).sum::<f64>() / n as f64)
        .collect()
}

/// Iterate a lattice of `n_init` initial conditions covering the fundamental
/// cell `[-π, π)²` for `n_iter` periods each, returning every iterate folded
/// back into the cell.
pub fn portrait(map: &EtaClassicalMap, n_init: usize, n_iter: usize) -> Vec<(f64, f64)> {
    assert!(
        n_init >= 1 && n_iter >= 1,
        "portrait needs n_init, n_iter >= 1"
    );
    let cols = (n_init as f64).sqrt().ceil() as usize;
    let rows = n_init.div_ceil(cols);
    let starts: Vec<(f64, f64)> = (0..n_init)
        .map(|i| {
            let (r, c) = (i / cols, i % cols);
            (
                -PI + 2.0 * PI * (c as f64 + 0.5) / cols as f64,
                -PI + 2.0 * PI * (r as f64 + 0.5) / rows as f64,
            )
        })
        .collect();
    starts
        .par_iter()
        .flat_map_iter(|&(q0, p0)| {
            let mut state = (q0, p0);
            (0..n_iter).map(move |_| {
                state = map.step(state.0, state.1);
                (fold_angle(state.0), fold_angle(state.1))
            })
        })
        .collect()
}
