//! Dispatch a [`RunConfig`] to the engines and write its outputs.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::analysis::{beta_averaged_series, classical_series, estimate_rate, SeriesKind};
use crate::classical::{portrait, ClassicalEnsemble, EtaClassicalMap};
use crate::config::{Command, RunConfig};
use crate::error::Result;
use crate::output::{
    kind_name, write_distribution, write_portrait, write_rate_grid, write_rates, write_series,
    Metadata, MissingPoint, RateRecord,
};
use crate::sweep::{run_scan, ScanMode};

/// What a run produced.
#[derive(Debug, Clone)]
pub struct RunReport {
    /// Data files, then the metadata sidecar last.
    pub files: Vec<PathBuf>,
    pub metadata: Metadata,
}

/// `stem` + `suffix` + `.ext`, keeping the stem's directory.
fn sibling(stem: &Path, suffix: &str, ext: &str) -> PathBuf {
    let mut name = stem.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    name.push(".");
    name.push(ext);
    stem.with_file_name(name)
}

struct Outputs<'a> {
    stem: &'a Path,
    files: Vec<PathBuf>,
}

impl Outputs<'_> {
    fn create(&mut self, suffix: &str) -> Result<BufWriter<File>> {
        let path = sibling(self.stem, suffix, "csv");
        let file = File::create(&path)?;
        self.files.push(path);
        Ok(BufWriter::new(file))
    }
}

/// Validate `config`, run the selected command and write its CSV output(s)
/// plus `<output>.json`.
pub fn run(config: &RunConfig) -> Result<RunReport> {
    config.validate()?;
    let started = Instant::now();
    if let Some(dir) = config.output.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut out = Outputs {
        stem: &config.output,
        files: Vec::new(),
    };
    let mut meta = Metadata::new(config);
    let params = config.scaled_params()?;
    let (vk, vl) = (&config.potential_k, &config.potential_l);

    match config.command {
        Command::Evolve => {
            let run = config
                .runner()
                .run(&params, vk, vl, config.beta, config.steps)?;
            note_doubling(&mut meta, config.basis_size, run.basis_size);
            meta.basis_size = Some(run.basis_size);
            write_series(out.create("")?, &run.series.values)?;
            write_distribution(
                out.create("_distribution")?,
                &run.state.distribution(),
                config.beta,
            )?;
        }
        Command::Classical => {
            let mut ensemble =
                ClassicalEnsemble::new(config.ensemble_size, config.seed, config.sampling);
            let series = classical_series(&params, vk, vl, &mut ensemble, config.steps);
            write_series(out.create("")?, &series.values)?;
        }
        Command::Portrait => {
            let map = EtaClassicalMap::new(&params, vk, vl);
            let points = portrait(&map, config.portrait_n_init, config.portrait_n_iter);
            write_portrait(out.create("")?, &points)?;
        }
        Command::Rate => {
            let mut rates = Vec::new();
            if config.mode != ScanMode::Classical {
                let run = config
                    .runner()
                    .run(&params, vk, vl, config.beta, config.steps)?;
                note_doubling(&mut meta, config.basis_size, run.basis_size);
                meta.basis_size = Some(run.basis_size);
                write_series(out.create("_quantum")?, &run.series.values)?;
                rates.push((
                    SeriesKind::Quantum,
                    estimate_rate(&run.series, config.window())?,
                ));
            }
            if config.mode != ScanMode::Quantum {
                let mut ensemble =
                    ClassicalEnsemble::new(config.ensemble_size, config.seed, config.sampling);
                let series = classical_series(&params, vk, vl, &mut ensemble, config.steps);
                write_series(out.create("_classical")?, &series.values)?;
                rates.push((
                    SeriesKind::Classical,
                    estimate_rate(&series, config.window())?,
                ));
            }
            write_rates(out.create("")?, &rates)?;
            meta.rates = rates
                .into_iter()
                .map(|(mode, estimate)| RateRecord { mode, estimate })
                .collect();
        }
        Command::Scan => {
            let spec = config.scan_spec()?;
            let grids = run_scan(&spec, config.workers)?;
            let several = grids.len() > 1;
            for grid in &grids {
                let suffix = if several {
                    format!("_{}", kind_name(grid.mode))
                } else {
                    String::new()
                };
                write_rate_grid(out.create(&suffix)?, grid)?;
                let (rows, cols) = grid.shape();
                for i in 0..rows {
                    for j in 0..cols {
                        let cell = grid.cell(i, j);
                        if let Some(reason) = &cell.missing {
                            meta.missing.push(MissingPoint {
                                mode: grid.mode,
                                axis1: grid.axes[0].1[i],
                                axis2: grid.axes.get(1).map(|a| a.1[j]),
                                reason: reason.clone(),
                            });
                        }
                        if let Some(n) = cell.basis_size {
                            meta.basis_size = Some(meta.basis_size.unwrap_or(0).max(n));
                        }
                    }
                }
            }
            if !meta.missing.is_empty() {
                meta.warnings
                    .push(format!("{} grid point(s) missing", meta.missing.len()));
            }
        }
        Command::Beta => {
            let avg = beta_averaged_series(
                &params,
                vk,
                vl,
                &config.beta_distribution(),
                config.steps,
                &config.runner(),
            )?;
            note_doubling(&mut meta, config.basis_size, avg.basis_size);
            meta.basis_size = Some(avg.basis_size);
            meta.quadrature_nodes = Some(avg.components);
            write_series(out.create("")?, &avg.series.values)?;
        }
    }

    meta.wall_time = started.elapsed().as_secs_f64();
    meta.files = out
        .files
        .iter()
        .map(|p| {
            p.file_name()
                .unwrap_or_default()
                .to_string_lossy()
                .into_owned()
        })
        .collect();
    let meta_path = sibling(&config.output, "", "json");
    meta.write(BufWriter::new(File::create(&meta_path)?))?;
    let mut files = out.files;
    files.push(meta_path);
    Ok(RunReport {
        files,
        metadata: meta,
    })
}

fn note_doubling(meta: &mut Metadata, requested: usize, used: usize) {
    if used > requested {
        meta.warnings.push(format!(
            "basis size grew from {requested} to {used} to keep the edge population below tolerance"
        ));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sibling_paths() {
        assert_eq!(
            sibling(Path::new("out/fig1"), "_distribution", "csv"),
            PathBuf::from("out/fig1_distribution.csv")
        );
        assert_eq!(
            sibling(Path::new("run"), "", "json"),
            PathBuf::from("run.json")
        );
    }

    #[test]
    fn invalid_config_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let config = RunConfig {
            hbar_tilde: -1.0,
            output: dir.path().join("x"),
            ..RunConfig::default()
        };
        assert!(run(&config).is_err());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }
}
