//! Property and oracle checks at a fixed (s, N), run without flowing.

use serde::{Deserialize, Serialize};

use crate::constraint::{constrained_gradient, constrained_hessian, ConstraintSystem, KktMethod};
use crate::curve::DiscreteCurve;
use crate::energy::TangentPointEnergy;
use crate::error::Result;
use crate::field::{DisplacementField, Field};
use crate::quadrature::{QuadratureGrid, QuadratureOptions};
use crate::reference;
use crate::sobolev::{gagliardo_seminorm_sq, phi_operator, phi_quadrature, SobolevOrder, SobolevSpace};
use crate::variation::{self, FormKind};

/// What to check and how hard.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub s: f64,
    pub n_nodes: usize,
    pub ambient_dim: usize,
    pub seed: u64,
    /// Random fields per randomized check.
    pub fields: usize,
    /// Relative perturbation applied to every quadrature weight (negative control).
    pub corrupt_quadrature: Option<f64>,
}

impl VerifyOptions {
    pub fn new(s: f64, n_nodes: usize) -> Self {
        VerifyOptions {
            s,
            n_nodes,
            ambient_dim: 2,
            seed: 0,
            fields: 4,
            corrupt_quadrature: None,
        }
    }
}

/// Outcome of one check: `measured` is compared against `tolerance` (smaller is better).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: &str, measured: f64, tolerance: f64) -> Self {
        Check {
            name: name.to_string(),
            measured,
            tolerance,
            passed: measured <= tolerance,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub options: VerifyOptions,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Fixed-width pass/fail table.
    pub fn table(&self) -> String {
        let mut out = format!(
            "verify s = {}, N = {}, n = {}\n{:<28} {:>12} {:>12}  result\n",
            self.options.s, self.options.n_nodes, self.options.ambient_dim, "check", "measured", "tolerance"
        );
        for c in &self.checks {
            out.push_str(&format!(
                "{:<28} {:>12.3e} {:>12.3e}  {}\n",
                c.name,
                c.measured,
                c.tolerance,
                if c.passed { "pass" } else { "FAIL" }
            ));
        }
        out
    }
}

/// Band-limited field with coefficients decaying like 1/m on modes 0..=max_mode.
pub fn random_band_limited(n: usize, dim: usize, max_mode: usize, rng: &mut impl rand::Rng) -> Field {
    use std::f64::consts::PI;
    let coeffs: Vec<(usize, usize, f64, f64)> = (0..dim)
        .flat_map(|a| (0..=max_mode).map(move |m| (a, m)))
        .map(|(a, m)| {
            let decay = 1.0 / (1.0 + m as f64);
            (a, m, decay * rng.random_range(-1.0..1.0), decay * rng.random_range(-1.0..1.0))
        })
        .collect();
    Field::from_fn(n, dim, |x| {
        let mut p = vec![0.0; dim];
        for &(a, m, c, s) in &coeffs {
            let t = 2.0 * PI * m as f64 * x;
            p[a] += c * t.cos() + s * t.sin();
        }
        p
    })
}

fn corrupt(quad: QuadratureGrid, factor: Option<f64>) -> QuadratureGrid {
    match factor {
        Some(f) => quad.map_weights(|node| node.weight * (1.0 + f)),
        None => quad,
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Runs every check; numerical failures become failed checks, other errors propagate.
pub fn run_suite(options: &VerifyOptions) -> Result<VerifyReport> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(options.seed);
    let order = SobolevOrder::new(options.s)?;
    let n = options.n_nodes;
    let dim = options.ambient_dim;
    let p = order.p();
    let quad = QuadratureGrid::new(n, order.singular_exponent(), QuadratureOptions::default())?;
    let energy = TangentPointEnergy::with_quadrature(order, corrupt(quad, options.corrupt_quadrature))?;
    let space = SobolevSpace::new(n, order)?;
    let mut checks = Vec::new();

    let circle = DiscreteCurve::unit_circle(n, dim)?;
    let exact = reference::circle_energy(p)?;
    checks.push(Check::at_most("circle_energy_oracle", rel(energy.energy(&circle)?, exact), 1e-6));

    let curve = DiscreteCurve::perturbed_circle(n, dim, (2, 5), 0.1, options.seed)?.retract_to_arclength()?;
    let e0 = energy.energy(&curve)?;

    let mut fd_err: f64 = 0.0;
    let mut slope = f64::INFINITY;
    for _ in 0..options.fields {
        let h = DisplacementField::new(random_band_limited(n, dim, 6, &mut rng))?;
        let exact = variation::d_tp(&energy, &curve, &h)?;
        let fd = |eps: f64| -> Result<f64> {
            let plus = energy.energy(&curve.displaced(eps, h.values())?)?;
            let minus = energy.energy(&curve.displaced(-eps, h.values())?)?;
            Ok((plus - minus) / (2.0 * eps))
        };
        let coarse = rel(fd(1e-4)?, exact);
        let fine = rel(fd(1e-5)?, exact);
        fd_err = fd_err.max(fine).max(rel(fd(1e-6)?, exact));
        slope = slope.min((coarse / fine).log10());
    }
    checks.push(Check::at_most("gradient_fd_rel_error", fd_err, 1e-5));
    checks.push(Check {
        name: "gradient_fd_slope".into(),
        measured: slope,
        tolerance: 1.5,
        passed: slope >= 1.5,
    });

    let scaled = curve.scaled(2.0)?;
    checks.push(Check::at_most(
        "homogeneity",
        rel(energy.energy(&scaled)?, 2f64.powf(4.0 - p) * e0),
        1e-10,
    ));
    let gamma = curve.as_displacement();
    checks.push(Check::at_most(
        "scaling_derivative",
        rel(variation::d_tp(&energy, &curve, &gamma)?, (4.0 - p) * e0),
        1e-8,
    ));
    let constant = DisplacementField::new(Field::from_fn(n, dim, |_| vec![1.0; dim]))?;
    checks.push(Check::at_most(
        "translation_invariance",
        variation::d_tp(&energy, &curve, &constant)?.abs() / e0,
        1e-12,
    ));
    checks.push(Check::at_most(
        "factorization",
        rel(energy.factorized_energy(&curve)?, e0),
        1e-10,
    ));

    let phi_quad = corrupt(phi_quadrature(n, order)?, options.corrupt_quadrature);
    let mut worst_ratio: f64 = 0.0;
    for _ in 0..options.fields {
        let k = random_band_limited(n, dim, (n / 16).max(2), &mut rng);
        let phi = phi_operator(order, &k, &phi_quad)?.norm_sq();
        let bound = gagliardo_seminorm_sq(order.sigma(), &k)? / (2.0 * order.s());
        worst_ratio = worst_ratio.max(phi / bound);
    }
    checks.push(Check::at_most("phi_bound_ratio", worst_ratio, 1.05));

    let d2 = variation::form_matrix(&energy, &curve, FormKind::D2TP)?;
    checks.push(Check::at_most("d2tp_symmetry", d2.asymmetry(), 1e-8));
    let (hess, _) = constrained_hessian(&energy, &curve, &space)?;
    checks.push(Check::at_most("hessian_symmetry", hess.asymmetry(), 1e-7));

    let lu = constrained_gradient(&energy, &curve, &space, KktMethod::DenseLu)?;
    let schur = constrained_gradient(&energy, &curve, &space, KktMethod::Schur)?;
    checks.push(Check::at_most(
        "kkt_paths_agree",
        lu.gradient.sub(&schur.gradient).max_abs() / lu.gradient.max_abs(),
        1e-8,
    ));
    let system = ConstraintSystem::new(&curve);
    checks.push(Check::at_most(
        "gradient_constraint_residual",
        system.residual(&lu.gradient) / lu.gradient.max_abs().max(1.0),
        1e-10,
    ));

    Ok(VerifyReport {
        options: options.clone(),
        checks,
    })
}
