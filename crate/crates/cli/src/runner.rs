//! Experiment orchestration: construct, retract, flow, fit, report.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};
use tangent_point::flow::{ls_fit, FlowState, LsFit};
use tangent_point::{reference, DiscreteCurve, Error, Flow, FlowConfig, Result, SobolevOrder, TangentPointEnergy, Termination};

use crate::config::{ExperimentConfig, FitConfig, InitialCurve};
use crate::render::curve_svg;

/// Exit status of a run that ended without an error.
pub fn termination_exit_code(termination: &Termination) -> i32 {
    match termination {
        Termination::Converged => 0,
        Termination::Stagnation {
            self_intersection: true,
            ..
        } => 4,
        Termination::Stagnation { .. } => 3,
        Termination::MaxSteps => 6,
    }
}

/// Exit status of a run that failed with `error`.
pub fn error_exit_code(error: &Error) -> i32 {
    match error {
        Error::Config(_) | Error::Parameter(_) | Error::Dimension(_) | Error::DegenerateCurve { .. } | Error::Precondition(_) => 2,
        Error::Stagnation { .. } => 3,
        Error::SelfIntersection { .. } | Error::EnergyBlowup { .. } => 4,
        Error::LinearAlgebra { .. } => 5,
        Error::InsufficientSignal(_) | Error::Io(_) | Error::Csv(_) | Error::Json(_) => 1,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    pub s: f64,
    pub p: f64,
    pub ambient_dim: usize,
    pub n_nodes: usize,
    pub initial: InitialCurve,
    pub flow: FlowConfig,
    pub fit: FitConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalState {
    pub energy: f64,
    pub grad_norm_hs: f64,
    pub distortion: f64,
    pub min_separation: f64,
    pub length_residual: f64,
    pub flow_time: f64,
    /// Multiplier of the length constraint.
    pub lambda: f64,
    /// ‖DTP + λD𝓛‖ in the dual H^s norm.
    pub lambda_residual: f64,
    /// λ / ((p − 4) E); equals one at a critical point.
    pub lambda_ratio: f64,
    pub curve_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircleReference {
    pub energy: f64,
    pub energy_rel_error: f64,
    pub distortion_minus_half_pi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub rows: usize,
    pub initial_energy: f64,
    pub max_energy_increase: f64,
    pub min_separation_min: f64,
    pub path_length: f64,
}

/// Contents of report.json.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub generator: String,
    pub parameters: Parameters,
    pub termination: Termination,
    pub exit_code: i32,
    pub steps: usize,
    pub rejections: usize,
    pub energy_increases: usize,
    #[serde(rename = "final")]
    pub final_state: FinalState,
    pub circle_reference: CircleReference,
    pub trace: TraceSummary,
    pub fit: Option<LsFit>,
    pub fit_error: Option<String>,
    pub units: BTreeMap<String, String>,
}

fn units() -> BTreeMap<String, String> {
    [
        ("length", "curve lengths; every run is normalized to total length 1"),
        ("energy", "tangent-point energy of the unit-length curve, scale-dependent with exponent 4 - p"),
        ("flow_time", "time of the H^s gradient flow, sum of accepted step sizes"),
        ("grad_norm_hs", "H^s norm of the constrained gradient"),
        ("distortion", "max ratio of intrinsic to extrinsic distance over non-adjacent node pairs"),
        ("fit", "E(t) - E_inf ~ (Z^2 (2 theta - 1) t)^(-1/(2 theta - 1)) fit of the trace tail"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

fn snapshot(dir: &Path, name: &str, curve: &DiscreteCurve, caption: &str, render: bool) -> Result<()> {
    curve.save_csv(dir.join(format!("{name}.csv")))?;
    if render && curve.dim() >= 2 {
        fs::write(dir.join(format!("{name}.svg")), curve_svg(curve, caption))?;
    }
    Ok(())
}

/// Where each artifact of a run goes.
pub struct OutputLayout {
    pub root: PathBuf,
    pub snapshots: PathBuf,
}

impl OutputLayout {
    pub fn new(root: &Path) -> Self {
        OutputLayout {
            root: root.to_path_buf(),
            snapshots: root.join("snapshots"),
        }
    }

    pub fn trace(&self) -> PathBuf {
        self.root.join("trace.csv")
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report.json")
    }
}

/// Runs one experiment and writes all of its artifacts.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunReport> {
    let layout = OutputLayout::new(&config.outputs.directory);
    fs::create_dir_all(&layout.snapshots)?;
    let order = SobolevOrder::new(config.s)?;
    let energy = TangentPointEnergy::new(order, config.n_nodes)?;
    let initial = config.initial_curve()?.retract_to_arclength()?;
    let flow = Flow::new(energy.clone(), config.flow.clone())?;
    let stride = config.outputs.snapshot_stride;
    let render = config.outputs.render;
    let run = flow.run(&initial, |state: &FlowState| {
        if stride > 0 && state.step % stride == 0 {
            let caption = format!("step {}  t = {:.4e}  E = {:.10}", state.step, state.t, state.energy);
            snapshot(&layout.snapshots, &format!("step_{:06}", state.step), &state.curve, &caption, render)?;
        }
        Ok(())
    })?;
    info!("flow finished after {} steps: {:?}", run.steps, run.termination);

    let last = *run.trace.last().expect("trace holds the initial state");
    let caption = format!("final  step {}  E = {:.10}", run.steps, last.energy);
    snapshot(&layout.root, "final", &run.curve, &caption, render)?;
    run.trace.save_csv(layout.trace())?;

    let (fit, fit_error) = match ls_fit(&run.trace, config.fit.tail_fraction, config.fit.floor) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let p = order.p();
    let circle = reference::circle_energy(p)?;
    let report = RunReport {
        generator: format!("tpflow {}", env!("CARGO_PKG_VERSION")),
        parameters: Parameters {
            s: config.s,
            p,
            ambient_dim: config.ambient_dim,
            n_nodes: config.n_nodes,
            initial: config.initial.clone(),
            flow: config.flow.clone(),
            fit: config.fit,
        },
        termination: run.termination,
        exit_code: termination_exit_code(&run.termination),
        steps: run.steps,
        rejections: run.rejections,
        energy_increases: run.energy_increases,
        final_state: FinalState {
            energy: last.energy,
            grad_norm_hs: last.grad_norm_hs,
            distortion: last.distortion,
            min_separation: last.min_separation,
            length_residual: last.length_residual,
            flow_time: last.t,
            lambda: run.multiplier.lambda,
            lambda_residual: run.multiplier.residual,
            lambda_ratio: run.multiplier.lambda / ((p - 4.0) * last.energy),
            curve_hash: run.curve.content_hash(),
        },
        circle_reference: CircleReference {
            energy: circle,
            energy_rel_error: (last.energy - circle) / circle,
            distortion_minus_half_pi: last.distortion - std::f64::consts::FRAC_PI_2,
        },
        trace: TraceSummary {
            rows: run.trace.len(),
            initial_energy: run.trace.rows[0].energy,
            max_energy_increase: run.trace.max_energy_increase(),
            min_separation_min: run.trace.rows.iter().map(|r| r.min_separation).fold(f64::INFINITY, f64::min),
            path_length: run.trace.path_length(),
        },
        fit,
        fit_error,
        units: units(),
    };
    fs::write(layout.report(), serde_json::to_string_pretty(&report)? + "\n")?;
    Ok(report)
}
