use tangent_point::flow::{FlowConfig, StepOutcome};
use tangent_point::{run_flow, DiscreteCurve, Flow, SobolevOrder, TangentPointEnergy, Termination};

fn energy(n: usize) -> TangentPointEnergy {
    TangentPointEnergy::new(SobolevOrder::new(1.75).unwrap(), n).unwrap()
}

#[test]
fn one_step_from_a_perturbed_circle_decreases_energy() {
    let n = 64;
    let flow = Flow::new(energy(n), FlowConfig::default()).unwrap();
    let initial = DiscreteCurve::perturbed_circle(n, 2, (2, 5), 0.05, 3).unwrap();
    let mut state = flow.initial_state(&initial).unwrap();
    let before = state.energy;
    let outcome = flow.step(&mut state).unwrap();
    assert!(matches!(outcome, StepOutcome::Accepted { .. }));
    assert!(state.energy < before);
    assert_eq!(state.step, 1);
}

#[test]
fn the_circle_is_a_fixed_point() {
    let n = 64;
    let circle = DiscreteCurve::unit_circle(n, 2).unwrap();
    let run = run_flow(&circle, &energy(n), &FlowConfig::default()).unwrap();
    assert_eq!(run.termination, Termination::Converged);
    assert_eq!(run.steps, 0);
    assert_eq!(run.trace.len(), 1);
    assert!(run.curve.nodes().sub(circle.nodes()).max_abs() < 1e-12);
}

#[test]
fn flow_keeps_constraints_and_embeddedness() {
    let n = 128;
    let knot = DiscreteCurve::torus_knot(n, 2, 3, 0.45).unwrap();
    let config = FlowConfig {
        max_steps: 25,
        ..FlowConfig::default()
    };
    let run = run_flow(&knot, &energy(n), &config).unwrap();
    assert_eq!(run.termination, Termination::MaxSteps);
    assert_eq!(run.steps, 25);
    let rows = &run.trace.rows;
    assert!(rows.iter().all(|r| r.min_separation > 0.0));
    assert!(run.trace.max_energy_increase() <= 1e-9);
    assert!(rows.windows(2).all(|w| w[1].t > w[0].t));
    assert!(rows.last().unwrap().energy < rows[0].energy);
    // The retraction is only as accurate as the grid resolves the knot.
    let deviation = run.curve.speed_deviation();
    assert!(deviation < 1e-8, "speed deviation {deviation}");
    assert!(run.curve.point(0).iter().all(|v| v.abs() < 1e-12));
    assert!((run.curve.length() - 1.0).abs() < 1e-10);
}

#[test]
fn flow_config_defaults_fill_missing_fields() {
    let config: FlowConfig = serde_json::from_str(r#"{"grad_tol": 1e-5}"#).unwrap();
    assert_eq!(config.grad_tol, 1e-5);
    assert_eq!(config.dt_max, FlowConfig::default().dt_max);
    assert!(serde_json::from_str::<FlowConfig>(r#"{"unknown": 1}"#).is_err());
}
