//! Constrained gradient flow of the tangent-point energy and Łojasiewicz rate fits.

use std::io::{Read, Write};
use std::path::Path;

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};

use crate::constraint::{constrained_gradient, ConstrainedGradient, KktMethod};
use crate::curve::DiscreteCurve;
use crate::energy::TangentPointEnergy;
use crate::error::{Error, Result};
use crate::sobolev::SobolevSpace;
use crate::variation;

/// Relative size of energy differences that are indistinguishable from rounding.
pub const ENERGY_NOISE: f64 = 1e-12;

/// Largest tolerated energy increase per accepted step, relative to the energy.
pub const MONOTONICITY_SLACK: f64 = 1e-9;

fn default_dt_init() -> f64 {
    1e-3
}
fn default_dt_min() -> f64 {
    1e-12
}
fn default_dt_max() -> f64 {
    0.02
}
fn default_armijo() -> f64 {
    1e-4
}
fn default_grad_tol() -> f64 {
    1e-6
}
fn default_max_steps() -> usize {
    10_000
}
fn default_retract_every() -> usize {
    1
}
fn default_growth() -> f64 {
    1.5
}

/// Step-size control and stopping rules of the flow.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    #[serde(default = "default_dt_init")]
    pub dt_init: f64,
    #[serde(default = "default_dt_min")]
    pub dt_min: f64,
    #[serde(default = "default_dt_max")]
    pub dt_max: f64,
    #[serde(default = "default_armijo")]
    pub armijo_c: f64,
    #[serde(default = "default_grad_tol")]
    pub grad_tol: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    #[serde(default = "default_retract_every")]
    pub retract_every: usize,
    /// Factor applied to dt after an accepted step.
    #[serde(default = "default_growth")]
    pub dt_growth: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            dt_init: default_dt_init(),
            dt_min: default_dt_min(),
            dt_max: default_dt_max(),
            armijo_c: default_armijo(),
            grad_tol: default_grad_tol(),
            max_steps: default_max_steps(),
            retract_every: default_retract_every(),
            dt_growth: default_growth(),
            seed: 0,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.dt_init, self.dt_min, self.dt_max, self.armijo_c, self.grad_tol, self.dt_growth]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::config("flow parameters must be finite"));
        }
        if !(0.0 < self.dt_min && self.dt_min <= self.dt_init && self.dt_init <= self.dt_max) {
            return Err(Error::config(format!(
                "step sizes must satisfy 0 < dt_min ≤ dt_init ≤ dt_max, got {} / {} / {}",
                self.dt_min, self.dt_init, self.dt_max
            )));
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return Err(Error::config(format!("armijo_c must lie in (0, 1), got {}", self.armijo_c)));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::config("grad_tol must be positive"));
        }
        if self.retract_every == 0 {
            return Err(Error::config("retract_every must be at least 1"));
        }
        if !(self.dt_growth >= 1.0) {
            return Err(Error::config("dt_growth must be at least 1"));
        }
        Ok(())
    }
}

/// One monitored state of the flow.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub energy: f64,
    pub grad_norm_hs: f64,
    pub distortion: f64,
    pub min_separation: f64,
    pub step_dt: f64,
    pub length_residual: f64,
}

/// Time series of flow monitors; the first row is the initial state.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FlowTrace {
    pub rows: Vec<TraceRow>,
}

impl FlowTrace {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    /// Largest relative energy increase between consecutive rows (0 if monotone).
    pub fn max_energy_increase(&self) -> f64 {
        self.rows
            .windows(2)
            .map(|w| (w[1].energy - w[0].energy) / w[0].energy.abs().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    }

    /// Σ ‖g‖ dt over accepted steps, the discrete length of the trajectory.
    pub fn path_length(&self) -> f64 {
        self.rows.windows(2).map(|w| w[0].grad_norm_hs * w[1].step_dt).sum()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let rows = r.deserialize().collect::<std::result::Result<Vec<TraceRow>, _>>()?;
        Ok(FlowTrace { rows })
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

/// Why a flow run stopped.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxSteps,
    /// No admissible step above dt_min; `self_intersection` marks that the last trial collided.
    Stagnation { dt: f64, self_intersection: bool },
}

/// State of the flow after an accepted step.
#[derive(Clone, Debug)]
pub struct FlowState {
    pub curve: DiscreteCurve,
    pub step: usize,
    pub t: f64,
    pub energy: f64,
    pub gradient: ConstrainedGradient,
    /// Step size proposed for the next step.
    pub dt: f64,
}

/// Energy, inner product and step control bound together.
#[derive(Clone, Debug)]
pub struct Flow {
    pub energy: TangentPointEnergy,
    pub space: SobolevSpace,
    pub config: FlowConfig,
    pub kkt: KktMethod,
}

/// Result of one call to [`Flow::step`].
#[derive(Clone, Debug)]
pub enum StepOutcome {
    /// ‖g‖ is below grad_tol; the state is unchanged.
    Converged,
    Accepted { dt: f64, rejections: usize },
}

impl Flow {
    pub fn new(energy: TangentPointEnergy, config: FlowConfig) -> Result<Self> {
        config.validate()?;
        let space = SobolevSpace::new(energy.n_nodes(), energy.order())?;
        Ok(Flow {
            energy,
            space,
            config,
            kkt: KktMethod::Schur,
        })
    }

    /// Retracts `curve` onto the constraint set and evaluates energy and gradient there.
    pub fn initial_state(&self, curve: &DiscreteCurve) -> Result<FlowState> {
        let curve = curve.retract_to_arclength()?;
        let energy = self.energy.energy(&curve)?;
        let gradient = constrained_gradient(&self.energy, &curve, &self.space, self.kkt)?;
        Ok(FlowState {
            curve,
            step: 0,
            t: 0.0,
            energy,
            gradient,
            dt: self.config.dt_init,
        })
    }

    fn trial(&self, state: &FlowState, dt: f64) -> Result<(DiscreteCurve, f64)> {
        let moved = state.curve.displaced(-dt, &state.gradient.gradient)?;
        let moved = if (state.step + 1) % self.config.retract_every == 0 {
            moved.retract_to_arclength()?
        } else {
            moved.check_injective()?;
            moved
        };
        let floor = crate::curve::SEPARATION_FLOOR * moved.length();
        let sep = moved.min_separation();
        if !(sep > floor) {
            return Err(Error::SelfIntersection { i: 0, j: 0, distance: sep });
        }
        let energy = self.energy.energy(&moved)?;
        Ok((moved, energy))
    }

    /// Explicit Euler step with Armijo backtracking; the state is updated in place.
    pub fn step(&self, state: &mut FlowState) -> Result<StepOutcome> {
        let g2 = state.gradient.norm * state.gradient.norm;
        if state.gradient.norm < self.config.grad_tol {
            return Ok(StepOutcome::Converged);
        }
        let noise = ENERGY_NOISE * state.energy.abs();
        let mut dt = state.dt;
        let mut rejections = 0;
        loop {
            if dt < self.config.dt_min {
                return Err(Error::Stagnation { dt });
            }
            match self.trial(state, dt) {
                Ok((curve, energy)) => {
                    let predicted = dt * g2;
                    let sufficient = energy <= state.energy - self.config.armijo_c * predicted;
                    // Below the rounding level the energy cannot certify descent; the step is
                    // then accepted only if it does not raise the energy measurably and
                    // shrinks the gradient, which rejects unstably large dt.
                    let unresolved = predicted < noise && energy <= state.energy + noise;
                    let gradient = if sufficient || unresolved {
                        let g = constrained_gradient(&self.energy, &curve, &self.space, self.kkt)?;
                        (sufficient || g.norm < state.gradient.norm).then_some(g)
                    } else {
                        None
                    };
                    if let Some(gradient) = gradient {
                        state.curve = curve;
                        state.step += 1;
                        state.t += dt;
                        state.energy = energy;
                        state.gradient = gradient;
                        state.dt = (dt * self.config.dt_growth).min(self.config.dt_max);
                        return Ok(StepOutcome::Accepted { dt, rejections });
                    }
                    debug!("step {} rejected: dt {dt:.3e}, energy {energy:.15e}", state.step);
                }
                Err(e) if e.is_self_intersection() => {
                    debug!("step {} rejected by collision at dt {dt:.3e}: {e}", state.step);
                    if dt * 0.5 < self.config.dt_min {
                        return Err(e);
                    }
                }
                Err(e) => return Err(e),
            }
            dt *= 0.5;
            rejections += 1;
        }
    }

    /// Monitors of a state, given the step size that produced it.
    pub fn monitor(&self, state: &FlowState, step_dt: f64) -> Result<TraceRow> {
        Ok(TraceRow {
            t: state.t,
            energy: state.energy,
            grad_norm_hs: state.gradient.norm,
            distortion: state.curve.distortion()?,
            min_separation: state.curve.min_separation(),
            step_dt,
            length_residual: (state.curve.length() - 1.0).abs(),
        })
    }

    /// Runs the flow from `initial` until convergence, stagnation or `max_steps`.
    ///
    /// `on_step` sees every accepted state (including the initial one) and may
    /// write snapshots.
    pub fn run(
        &self,
        initial: &DiscreteCurve,
        mut on_step: impl FnMut(&FlowState) -> Result<()>,
    ) -> Result<FlowRun> {
        let mut state = self.initial_state(initial)?;
        let mut trace = FlowTrace::default();
        trace.rows.push(self.monitor(&state, 0.0)?);
        on_step(&state)?;
        let mut rejections = 0;
        let mut energy_increases = 0;
        let termination = loop {
            if state.gradient.norm < self.config.grad_tol {
                break Termination::Converged;
            }
            if state.step >= self.config.max_steps {
                break Termination::MaxSteps;
            }
            let before = state.energy;
            match self.step(&mut state) {
                Ok(StepOutcome::Converged) => break Termination::Converged,
                Ok(StepOutcome::Accepted { dt, rejections: r }) => {
                    rejections += r;
                    if state.energy > before {
                        energy_increases += 1;
                        let rel = (state.energy - before) / before.abs();
                        if rel > MONOTONICITY_SLACK {
                            warn!("energy increased by {rel:.3e} (relative) at step {}", state.step);
                        }
                    }
                    let row = self.monitor(&state, dt)?;
                    if state.step % 50 == 0 {
                        info!(
                            "step {:>5}  t {:.4e}  E {:.12}  |g| {:.3e}  dt {:.2e}",
                            state.step, row.t, row.energy, row.grad_norm_hs, dt
                        );
                    }
                    trace.rows.push(row);
                    on_step(&state)?;
                }
                Err(Error::Stagnation { dt }) => {
                    break Termination::Stagnation { dt, self_intersection: false };
                }
                Err(e) if e.is_self_intersection() => {
                    break Termination::Stagnation {
                        dt: state.dt,
                        self_intersection: true,
                    };
                }
                Err(e) => return Err(e),
            }
        };
        let multiplier = variation::lagrange_multiplier(&self.energy, &state.curve, &self.space)?;
        Ok(FlowRun {
            curve: state.curve,
            trace,
            termination,
            steps: state.step,
            rejections,
            energy_increases,
            multiplier,
        })
    }
}

/// Outcome of [`Flow::run`].
#[derive(Clone, Debug)]
pub struct FlowRun {
    pub curve: DiscreteCurve,
    pub trace: FlowTrace,
    pub termination: Termination,
    pub steps: usize,
    pub rejections: usize,
    /// Accepted steps whose energy exceeded the previous one (at rounding level).
    pub energy_increases: usize,
    pub multiplier: variation::LagrangeMultiplier,
}

/// Runs the constrained flow without a step callback.
pub fn run_flow(initial: &DiscreteCurve, energy: &TangentPointEnergy, config: &FlowConfig) -> Result<FlowRun> {
    Flow::new(energy.clone(), config.clone())?.run(initial, |_| Ok(()))
}

/// How the limit energy E∞ is estimated in [`ls_fit`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyFloor {
    /// E∞ chosen to minimize the residual of the log-log regression.
    #[default]
    Profile,
    /// Final energy minus half the last decrement.
    HalfLastDecrement,
}

/// Result of a Łojasiewicz fit ‖g‖ ≈ Z (E − E∞)^θ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LsFit {
    pub theta: f64,
    pub z: f64,
    pub r2: f64,
    pub e_inf: f64,
    /// Trace rows that entered the regression.
    pub rows: usize,
    /// Index of the first of those rows.
    pub first_row: usize,
    /// One past the index of the last of those rows.
    pub end_row: usize,
}

/// Minimum number of usable tail rows.
pub const MIN_FIT_ROWS: usize = 50;

struct Regression {
    slope: f64,
    intercept: f64,
    rss: f64,
    r2: f64,
}

fn regress(x: &[f64], y: &[f64]) -> Regression {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - rss / syy } else { 1.0 };
    Regression { slope, intercept, rss, r2 }
}

/// Fits log‖g‖ = log Z + θ log(E − E∞) on the trailing `tail_fraction` of the trace.
///
/// Rows whose energy gap above the final energy is within ten times the rounding
/// level are discarded before fitting.
pub fn ls_fit(trace: &FlowTrace, tail_fraction: f64, floor: EnergyFloor) -> Result<LsFit> {
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::parameter(format!("tail fraction must lie in (0, 1], got {tail_fraction}")));
    }
    let rows = &trace.rows;
    if rows.len() < 2 {
        return Err(Error::InsufficientSignal("trace has fewer than two rows".into()));
    }
    let e_last = rows[rows.len() - 1].energy;
    let noise = 10.0 * ENERGY_NOISE * e_last.abs().max(f64::MIN_POSITIVE);
    let start = rows.len() - ((tail_fraction * rows.len() as f64).ceil() as usize).min(rows.len());
    let usable: Vec<(usize, f64, f64)> = rows[start..]
        .iter()
        .enumerate()
        .filter(|(_, r)| r.energy - e_last > noise && r.grad_norm_hs > 0.0)
        .map(|(k, r)| (start + k, r.energy, r.grad_norm_hs))
        .collect();
    if usable.len() < MIN_FIT_ROWS {
        return Err(Error::InsufficientSignal(format!(
            "only {} tail rows lie above the energy noise floor (need {MIN_FIT_ROWS})",
            usable.len()
        )));
    }
    let y: Vec<f64> = usable.iter().map(|r| r.2.ln()).collect();
    let fit_with = |delta: f64| -> Regression {
        let x: Vec<f64> = usable.iter().map(|r| (r.1 - e_last + delta).ln()).collect();
        regress(&x, &y)
    };
    let delta = match floor {
        EnergyFloor::HalfLastDecrement => {
            let prev = rows[rows.len() - 2].energy;
            0.5 * (prev - e_last).max(0.0)
        }
        EnergyFloor::Profile => {
            // E∞ = E_last − δ; the residual is scanned on a log grid of δ and refined
            // by golden-section search around the best grid point.
            let lo = (noise * 1e-3).ln();
            let hi = (usable[0].1 - e_last).ln();
            let grid = 200;
            let at = |k: usize| lo + (hi - lo) * k as f64 / grid as f64;
            let best = (0..=grid)
                .min_by(|&a, &b| fit_with(at(a).exp()).rss.total_cmp(&fit_with(at(b).exp()).rss))
                .unwrap_or(0);
            let (mut a, mut b) = (at(best.saturating_sub(1)), at((best + 1).min(grid)));
            let phi = 0.5 * (5.0_f64.sqrt() - 1.0);
            for _ in 0..80 {
                let c = b - phi * (b - a);
                let d = a + phi * (b - a);
                if fit_with(c.exp()).rss <= fit_with(d.exp()).rss {
                    b = d;
                } else {
                    a = c;
                }
            }
            (0.5 * (a + b)).exp()
        }
    };
    let reg = fit_with(delta);
    let theta = reg.slope;
    if !(theta > 0.0 && theta < 1.05) {
        return Err(Error::InsufficientSignal(format!(
            "fitted exponent θ = {theta:.4} lies outside (0, 1.05)"
        )));
    }
    Ok(LsFit {
        theta,
        z: reg.intercept.exp(),
        r2: reg.r2,
        e_inf: e_last - delta,
        rows: usable.len(),
        first_row: usable[0].0,
        end_row: usable[usable.len() - 1].0 + 1,
    })
}

/// H(t) = (E − E∞)^{1−θ} on the rows spanned by `fit`.
pub fn h_values(trace: &FlowTrace, fit: &LsFit) -> Vec<f64> {
    trace.rows[fit.first_row..fit.end_row]
        .iter()
        .map(|r| (r.energy - fit.e_inf).max(0.0).powf(1.0 - fit.theta))
        .collect()
}

/// The convergence-rate envelope Φ at time t.
///
/// For θ = 1/2 it is (2/Z)√E₀ exp(−Z²t/2); for 1/2 < θ < 1 it is
/// (Z(1−θ))⁻¹ (Z²(2θ−1)t + E₀^{1−2θ})^{−(1−θ)/(2θ−1)}.
pub fn rate_envelope(theta: f64, z: f64, e0: f64, t: f64) -> Result<f64> {
    if !(0.5..1.0).contains(&theta) {
        return Err(Error::parameter(format!("θ must lie in [1/2, 1), got {theta}")));
    }
    if !(z > 0.0) || !(e0 >= 0.0) || !(t >= 0.0) {
        return Err(Error::parameter("rate envelope needs Z > 0, E₀ ≥ 0 and t ≥ 0"));
    }
    if theta == 0.5 {
        return Ok(2.0 / z * e0.sqrt() * (-z * z * t / 2.0).exp());
    }
    let k = 2.0 * theta - 1.0;
    let base = z * z * k * t + e0.powf(1.0 - 2.0 * theta);
    Ok(base.powf(-(1.0 - theta) / k) / (z * (1.0 - theta)))
}

/// Synthetic trace obeying dE/dt = −‖g‖², ‖g‖ = Z (E − E∞)^θ exactly.
pub fn synthetic_trace(theta: f64, z: f64, e0: f64, e_inf: f64, dt: f64, steps: usize) -> Result<FlowTrace> {
    if !(0.5..1.0).contains(&theta) || !(z > 0.0) || !(e0 > 0.0) || !(dt > 0.0) {
        return Err(Error::parameter("synthetic trace needs θ ∈ [1/2, 1), Z > 0, E₀ > 0, dt > 0"));
    }
    let gap = |t: f64| {
        if theta == 0.5 {
            e0 * (-z * z * t).exp()
        } else {
            let k = 2.0 * theta - 1.0;
            (e0.powf(-k) + k * z * z * t).powf(-1.0 / k)
        }
    };
    let rows = (0..=steps)
        .map(|k| {
            let t = k as f64 * dt;
            let e = gap(t);
            TraceRow {
                t,
                energy: e_inf + e,
                grad_norm_hs: z * e.powf(theta),
                distortion: f64::NAN,
                min_separation: f64::NAN,
                step_dt: if k == 0 { 0.0 } else { dt },
                length_residual: 0.0,
            }
        })
        .collect();
    Ok(FlowTrace { rows })
}
