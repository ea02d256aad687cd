//! Run configuration: a flat TOML (or metadata JSON) document whose keys
//! mirror the library's field names, plus `--key value` overrides.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::analysis::{BetaDistribution, QuantumRunner, Window};
use crate::classical::Sampling;
use crate::error::{Error, Result};
use crate::lattice::{Potential, ResonanceOrder, ScaledParams};
use crate::sweep::{Axis, Observable, ScanMode, ScanSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Quantum `⟨p̃(t)⟩` from a momentum eigenstate.
    #[default]
    Evolve,
    /// Ensemble `⟨p̃^c(t)⟩` under the η-classical map.
    Classical,
    /// Folded phase-space points of the η-classical map.
    Portrait,
    /// Acceleration rate over the fitting window.
    Rate,
    /// Rates (or final values) over a one- or two-axis grid.
    Scan,
    /// Quasi-momentum–averaged `Δ⟨p̃(t)⟩`.
    Beta,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Evolve => "evolve",
            Command::Classical => "classical",
            Command::Portrait => "portrait",
            Command::Rate => "rate",
            Command::Scan => "scan",
            Command::Beta => "beta",
        }
    }
}

/// Every knob of a run. Missing keys take the defaults below; unknown keys
/// are an error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,

    pub k_tilde: f64,
    pub l_tilde: f64,
    pub hbar_tilde: f64,
    pub phi: f64,
    /// Resonance `T·ħ = 4πν/μ`.
    pub nu: u32,
    pub mu: u32,
    /// `[m, a, chi]` triples for the first and second lattice.
    pub potential_k: Potential,
    pub potential_l: Potential,

    pub n0: i64,
    pub beta: f64,
    pub basis_size: usize,
    pub max_basis_size: usize,
    pub guard_interval: usize,
    pub steps: usize,
    pub seed: u64,
    pub window_start: usize,
    pub window_end: usize,

    pub ensemble_size: usize,
    pub sampling: Sampling,
    pub portrait_n_init: usize,
    pub portrait_n_iter: usize,

    pub beta_mean: f64,
    pub beta_sigma: f64,
    pub beta_nodes: usize,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub axis1: Option<Axis>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub axis2: Option<Axis>,
    pub mode: ScanMode,
    pub observable: Observable,
    /// Scan worker threads; 0 uses every available core.
    pub workers: usize,

    /// Output stem: `<output>.csv` and `<output>.json`.
    pub output: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: Command::Evolve,
            k_tilde: 3.0,
            l_tilde: 1.0,
            hbar_tilde: 1.0,
            phi: PI / 2.0,
            nu: 1,
            mu: 1,
            potential_k: Potential::cosine(),
            potential_l: Potential::cosine(),
            n0: 0,
            beta: 0.0,
            basis_size: 4096,
            max_basis_size: 1 << 16,
            guard_interval: 100,
            steps: 2000,
            seed: 0,
            window_start: 1000,
            window_end: 2000,
            ensemble_size: 100_000,
            sampling: Sampling::Random,
            portrait_n_init: 200,
            portrait_n_iter: 2000,
            beta_mean: 0.0,
            beta_sigma: 0.0,
            beta_nodes: 64,
            axis1: None,
            axis2: None,
            mode: ScanMode::Quantum,
            observable: Observable::Rate,
            workers: 0,
            output: PathBuf::from("ratchet_out"),
        }
    }
}

impl RunConfig {
    pub fn scaled_params(&self) -> Result<ScaledParams> {
        ScaledParams::new(
            self.k_tilde,
            self.l_tilde,
            self.hbar_tilde,
            self.phi,
            ResonanceOrder {
                nu: self.nu,
                mu: self.mu,
            },
        )
    }

    pub fn runner(&self) -> QuantumRunner {
        QuantumRunner {
            basis_size: self.basis_size,
            max_basis_size: self.max_basis_size,
            guard_interval: self.guard_interval,
            n0: self.n0,
        }
    }

    pub fn window(&self) -> Window {
        Window::new(self.window_start, self.window_end)
    }

    pub fn beta_distribution(&self) -> BetaDistribution {
        BetaDistribution {
            mean: self.beta_mean,
            sigma: self.beta_sigma,
            nodes: self.beta_nodes,
        }
    }

    pub fn scan_spec(&self) -> Result<ScanSpec> {
        let axis1 = self
            .axis1
            .clone()
            .ok_or_else(|| Error::invalid("axis1", "a scan needs at least `axis1`"))?;
        let spec = ScanSpec {
            axes: std::iter::once(axis1).chain(self.axis2.clone()).collect(),
            fixed: self.scaled_params()?,
            vk: self.potential_k.clone(),
            vl: self.potential_l.clone(),
            mode: self.mode,
            observable: self.observable,
            steps: self.steps,
            window: self.window(),
            runner: self.runner(),
            beta: self.beta_distribution(),
            ensemble_size: self.ensemble_size,
            sampling: self.sampling,
            master_seed: self.seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Check everything the selected command will use.
    pub fn validate(&self) -> Result<()> {
        self.scaled_params()?;
        if !(self.basis_size >= 4 && self.basis_size.is_power_of_two()) {
            return Err(Error::invalid(
                "basis_size",
                format!("{} is not a power of two >= 4", self.basis_size),
            ));
        }
        if self.max_basis_size < self.basis_size || !self.max_basis_size.is_power_of_two() {
            return Err(Error::invalid(
                "max_basis_size",
                "must be a power of two no smaller than basis_size",
            ));
        }
        if self.guard_interval == 0 {
            return Err(Error::invalid("guard_interval", "must be positive"));
        }
        if !self.beta.is_finite() {
            return Err(Error::invalid("beta", "must be finite"));
        }
        if self.steps == 0 {
            return Err(Error::invalid("steps", "must be positive"));
        }
        let uses_window = matches!(self.command, Command::Rate)
            || (self.command == Command::Scan && self.observable == Observable::Rate);
        if uses_window {
            if self.window_end <= self.window_start + 1 {
                return Err(Error::invalid(
                    "window_end",
                    "the window must hold at least 2 samples",
                ));
            }
            if self.window_end > self.steps + 1 {
                return Err(Error::invalid(
                    "window_end",
                    format!("{} exceeds steps + 1 = {}", self.window_end, self.steps + 1),
                ));
            }
        }
        match self.command {
            Command::Classical | Command::Rate | Command::Scan if self.ensemble_size == 0 => {
                Err(Error::invalid("ensemble_size", "must be positive"))
            }
            Command::Portrait if self.portrait_n_init == 0 => {
                Err(Error::invalid("portrait_n_init", "must be positive"))
            }
            Command::Beta => self.beta_distribution().validate(),
            Command::Scan => self.scan_spec().map(|_| ()),
            _ => Ok(()),
        }
    }
}

/// Parse a TOML config, apply `overrides` (later wins), fill defaults and
/// validate.
pub fn parse_config(text: &str, overrides: &[(String, String)]) -> Result<RunConfig> {
    let table: toml::Table =
        toml::from_str(text).map_err(|e| Error::Config(format!("invalid TOML: {e}")))?;
    let doc = serde_json::to_value(table).map_err(|e| Error::Config(e.to_string()))?;
    resolve(doc, overrides)
}

/// Parse the metadata sidecar of an earlier run (its `config` object) so
/// the run can be reproduced.
pub fn parse_metadata_config(text: &str, overrides: &[(String, String)]) -> Result<RunConfig> {
    let mut doc: Value =
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid JSON: {e}")))?;
    let config = match doc.get_mut("config") {
        Some(c) => c.take(),
        None => doc,
    };
    resolve(config, overrides)
}

/// Load a config file by extension: `.json` is a metadata sidecar, anything
/// else TOML.
pub fn load_config(path: &Path, overrides: &[(String, String)]) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    if path.extension().is_some_and(|e| e == "json") {
        parse_metadata_config(&text, overrides)
    } else {
        parse_config(&text, overrides)
    }
}

fn resolve(mut doc: Value, overrides: &[(String, String)]) -> Result<RunConfig> {
    if !doc.is_object() {
        return Err(Error::Config("the config must be a table".into()));
    }
    for (key, raw) in overrides {
        set_dotted(&mut doc, key, parse_scalar(raw)?)?;
    }
    let config: RunConfig =
        serde_json::from_value(doc).map_err(|e| Error::Config(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

/// Interpret an override value as TOML (`3`, `true`, `[[1, 1.0, 0.0]]`,
/// `{ param = "phi", ... }`), falling back to a bare string.
fn parse_scalar(raw: &str) -> Result<Value> {
    let wrapped = format!("v = {raw}");
    let value = match toml::from_str::<toml::Table>(&wrapped) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    serde_json::to_value(value).map_err(|e| Error::Config(e.to_string()))
}

fn set_dotted(doc: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("split yields at least one part");
    if last.is_empty() || parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("malformed override key `{key}`")));
    }
    let mut cursor = doc;
    for part in parts {
        let map = cursor
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("`{key}` does not name a table entry")))?;
        cursor = map
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Map::new()));
    }
    cursor
        .as_object_mut()
        .ok_or_else(|| Error::Config(format!("`{key}` does not name a table entry")))?
        .insert(last.to_string(), value);
    Ok(())
}
