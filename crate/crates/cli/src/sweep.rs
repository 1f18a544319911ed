//! Concurrent execution of every config in a directory.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use tangent_point::{Error, Result};

use crate::config::{ExperimentConfig, Overrides};
use crate::runner::{error_exit_code, run_experiment};

#[derive(Clone, Debug, PartialEq)]
pub struct SweepEntry {
    pub config: PathBuf,
    pub exit_code: i32,
    pub message: String,
}

/// `*.json` files directly inside `dir`, sorted by name.
pub fn config_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    Ok(files)
}

/// Runs all configs in `dir` concurrently. Configs that fail to load are reported
/// with their exit code and do not stop the others; configs sharing an output
/// directory abort the sweep before anything runs.
pub fn sweep(dir: &Path, overrides: &Overrides) -> Result<Vec<SweepEntry>> {
    let files = config_files(dir)?;
    if files.is_empty() {
        return Err(Error::Config(format!("no *.json configs in {}", dir.display())));
    }
    let loaded: Vec<(PathBuf, Result<ExperimentConfig>)> = files
        .into_iter()
        .map(|f| {
            let config = ExperimentConfig::load(&f).map(|mut c| {
                overrides.apply(&mut c);
                c
            });
            (f, config)
        })
        .collect();
    let mut seen = BTreeSet::new();
    for (file, config) in &loaded {
        if let Ok(c) = config {
            let out = std::path::absolute(&c.outputs.directory)?;
            if !seen.insert(out.clone()) {
                return Err(Error::Config(format!(
                    "{} reuses output directory {}",
                    file.display(),
                    out.display()
                )));
            }
        }
    }
    Ok(loaded
        .into_par_iter()
        .map(|(file, config)| {
            let outcome = config.and_then(|c| run_experiment(&c));
            match outcome {
                Ok(report) => SweepEntry {
                    config: file,
                    exit_code: report.exit_code,
                    message: format!(
                        "{} after {} steps, E = {:.12}, |g| = {:.3e}",
                        termination_label(&report.termination),
                        report.steps,
                        report.final_state.energy,
                        report.final_state.grad_norm_hs
                    ),
                },
                Err(e) => SweepEntry {
                    config: file,
                    exit_code: error_exit_code(&e),
                    message: e.to_string(),
                },
            }
        })
        .collect())
}

pub fn termination_label(t: &tangent_point::Termination) -> &'static str {
    match t {
        tangent_point::Termination::Converged => "converged",
        tangent_point::Termination::MaxSteps => "max_steps",
        tangent_point::Termination::Stagnation {
            self_intersection: true,
            ..
        } => "self_intersection",
        tangent_point::Termination::Stagnation { .. } => "stagnation",
    }
}
