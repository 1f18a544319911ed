//! Experiment configuration files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tangent_point::flow::EnergyFloor;
use tangent_point::verify::VerifyOptions;
use tangent_point::{DiscreteCurve, Error, FlowConfig, Result};

/// The starting curve of an experiment, before retraction to unit length and speed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCurve {
    Circle,
    /// Ellipse with semi-axes 1 and `ratio`.
    Ellipse { ratio: f64 },
    TorusKnot { p: u32, q: u32, aspect: f64 },
    PerturbedCircle {
        modes: (usize, usize),
        amplitude: f64,
        seed: u64,
    },
    /// Curve CSV; relative paths resolve against the config file's directory.
    File { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    /// Relative paths resolve against the config file's directory.
    pub directory: PathBuf,
    /// Write a snapshot every this many accepted steps (0 disables intermediate snapshots).
    #[serde(default = "default_stride")]
    pub snapshot_stride: usize,
    #[serde(default = "default_true")]
    pub render: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    #[serde(default = "default_tail")]
    pub tail_fraction: f64,
    #[serde(default)]
    pub floor: EnergyFloor,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            tail_fraction: default_tail(),
            floor: EnergyFloor::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default = "default_fields")]
    pub fields: usize,
    /// Test hook: multiply every quadrature weight by 1 + this value.
    #[serde(default)]
    pub corrupt_quadrature: Option<f64>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            fields: default_fields(),
            corrupt_quadrature: None,
        }
    }
}

fn default_stride() -> usize {
    25
}
fn default_true() -> bool {
    true
}
fn default_tail() -> f64 {
    0.8
}
fn default_fields() -> usize {
    4
}
fn default_dim() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub s: f64,
    #[serde(default = "default_dim")]
    pub ambient_dim: usize,
    pub n_nodes: usize,
    pub initial: InitialCurve,
    #[serde(default)]
    pub flow: FlowConfig,
    pub outputs: Outputs,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
}

impl ExperimentConfig {
    /// Parses and validates a config file, resolving relative paths against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if config.outputs.directory.is_relative() {
            config.outputs.directory = base.join(&config.outputs.directory);
        }
        if let InitialCurve::File { path: file } = &mut config.initial {
            if file.is_relative() {
                *file = base.join(&*file);
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s > 1.5 && self.s < 2.0) {
            return Err(Error::Config(format!(
                "s = {} is outside the admissible range (3/2, 2)",
                self.s
            )));
        }
        if !self.n_nodes.is_power_of_two() || !(32..=1024).contains(&self.n_nodes) {
            return Err(Error::Config(format!(
                "n_nodes = {} must be a power of two in [32, 1024]",
                self.n_nodes
            )));
        }
        if !(2..=tangent_point::field::MAX_DIM).contains(&self.ambient_dim) {
            return Err(Error::Config(format!(
                "ambient_dim = {} must lie in [2, {}]",
                self.ambient_dim,
                tangent_point::field::MAX_DIM
            )));
        }
        match &self.initial {
            InitialCurve::Ellipse { ratio } if !(*ratio > 0.0) => {
                return Err(Error::Config(format!("ellipse ratio must be positive, got {ratio}")));
            }
            InitialCurve::TorusKnot { .. } if self.ambient_dim != 3 => {
                return Err(Error::Config("torus knots need ambient_dim = 3".into()));
            }
            InitialCurve::File { path } if !path.is_file() => {
                return Err(Error::Config(format!("initial curve file {} does not exist", path.display())));
            }
            _ => {}
        }
        if !(self.fit.tail_fraction > 0.0 && self.fit.tail_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "fit.tail_fraction must lie in (0, 1], got {}",
                self.fit.tail_fraction
            )));
        }
        if self.verify.fields == 0 {
            return Err(Error::Config("verify.fields must be positive".into()));
        }
        self.flow.validate()
    }

    /// The initial curve as configured, not yet retracted.
    pub fn initial_curve(&self) -> Result<DiscreteCurve> {
        let n = self.n_nodes;
        let dim = self.ambient_dim;
        let curve = match &self.initial {
            InitialCurve::Circle => DiscreteCurve::unit_circle(n, dim)?,
            InitialCurve::Ellipse { ratio } => DiscreteCurve::ellipse(n, dim, 1.0, *ratio)?,
            InitialCurve::TorusKnot { p, q, aspect } => DiscreteCurve::torus_knot(n, *p, *q, *aspect)?,
            InitialCurve::PerturbedCircle { modes, amplitude, seed } => {
                DiscreteCurve::perturbed_circle(n, dim, *modes, *amplitude, *seed)?
            }
            InitialCurve::File { path } => DiscreteCurve::load_csv(path)?,
        };
        if curve.n_nodes() != n || curve.dim() != dim {
            return Err(Error::Config(format!(
                "initial curve has N = {}, n = {} but the config asks for N = {n}, n = {dim}",
                curve.n_nodes(),
                curve.dim()
            )));
        }
        Ok(curve)
    }

    pub fn verify_options(&self) -> VerifyOptions {
        VerifyOptions {
            s: self.s,
            n_nodes: self.n_nodes,
            ambient_dim: self.ambient_dim,
            seed: self.flow.seed,
            fields: self.verify.fields,
            corrupt_quadrature: self.verify.corrupt_quadrature,
        }
    }
}

/// Command-line overrides of the `outputs` section.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Overrides {
    pub snapshot_stride: Option<usize>,
    pub no_render: bool,
}

impl Overrides {
    pub fn apply(&self, config: &mut ExperimentConfig) {
        if let Some(stride) = self.snapshot_stride {
            config.outputs.snapshot_stride = stride;
        }
        if self.no_render {
            config.outputs.render = false;
        }
    }
}
