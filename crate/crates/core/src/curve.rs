//! Discrete closed curves on the uniform grid of ℝ/ℤ.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::field::{DisplacementField, Field, MAX_DIM};
use crate::spectral::{Multiplier, SpectralGrid};

/// Speeds below `REGULARITY_FLOOR × mean speed` are treated as degenerate.
pub const REGULARITY_FLOOR: f64 = 1e-8;

/// Node pairs (and chords) closer than `SEPARATION_FLOOR × length` count as self-intersections.
pub const SEPARATION_FLOOR: f64 = 1e-6;

/// A closed curve sampled at x_i = i/N with its spectral derivative γ′(x_i).
#[derive(Clone, Debug)]
pub struct DiscreteCurve {
    nodes: Field,
    deriv: Field,
    speed: Vec<f64>,
    grid: Arc<SpectralGrid>,
}

impl DiscreteCurve {
    /// Builds a curve from node positions; the derivative is computed spectrally.
    pub fn from_nodes(nodes: Field) -> Result<Self> {
        if nodes.dim() < 2 {
            return Err(Error::config(format!(
                "ambient dimension must be at least 2, got {}",
                nodes.dim()
            )));
        }
        if nodes.dim() > MAX_DIM {
            return Err(Error::config(format!(
                "ambient dimension {} exceeds the supported maximum {MAX_DIM}",
                nodes.dim()
            )));
        }
        if !nodes.is_finite() {
            return Err(Error::parameter("curve has non-finite node coordinates"));
        }
        let grid = SpectralGrid::new(nodes.n_nodes())?;
        let deriv = nodes.map_spectral(&grid, Multiplier::Derivative);
        let speed: Vec<f64> = (0..nodes.n_nodes())
            .map(|i| {
                (0..nodes.dim())
                    .map(|a| deriv.get(i, a).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        let mean = speed.iter().sum::<f64>() / speed.len() as f64;
        for (i, &v) in speed.iter().enumerate() {
            if !(v > REGULARITY_FLOOR * mean) {
                return Err(Error::DegenerateCurve { node: i, speed: v });
            }
        }
        Ok(DiscreteCurve {
            nodes,
            deriv,
            speed,
            grid,
        })
    }

    /// Samples `f` at the grid parameters.
    pub fn from_fn(n_nodes: usize, dim: usize, f: impl FnMut(f64) -> Vec<f64>) -> Result<Self> {
        Self::from_nodes(Field::from_fn(n_nodes, dim, f))
    }

    /// Round circle of the given radius centred at the origin, in the first two coordinates.
    pub fn circle(n_nodes: usize, dim: usize, radius: f64) -> Result<Self> {
        Self::from_fn(n_nodes, dim, |x| {
            let mut p = vec![0.0; dim];
            p[0] = radius * (2.0 * PI * x).cos();
            p[1] = radius * (2.0 * PI * x).sin();
            p
        })
    }

    /// Unit-length, unit-speed circle with γ(0) = 0.
    pub fn unit_circle(n_nodes: usize, dim: usize) -> Result<Self> {
        let r = 1.0 / (2.0 * PI);
        Self::from_fn(n_nodes, dim, |x| {
            let mut p = vec![0.0; dim];
            p[0] = r * ((2.0 * PI * x).cos() - 1.0);
            p[1] = r * (2.0 * PI * x).sin();
            p
        })
    }

    /// Ellipse with semi-axes (a, b), centred at the origin.
    pub fn ellipse(n_nodes: usize, dim: usize, a: f64, b: f64) -> Result<Self> {
        Self::from_fn(n_nodes, dim, |x| {
            let mut p = vec![0.0; dim];
            p[0] = a * (2.0 * PI * x).cos();
            p[1] = b * (2.0 * PI * x).sin();
            p
        })
    }

    /// (p, q) torus knot with tube radius `aspect` relative to the core radius 1.
    pub fn torus_knot(n_nodes: usize, p: u32, q: u32, aspect: f64) -> Result<Self> {
        if !(aspect > 0.0 && aspect < 1.0) {
            return Err(Error::config(format!("torus aspect must lie in (0,1), got {aspect}")));
        }
        let (p, q) = (p as f64, q as f64);
        Self::from_fn(n_nodes, 3, |x| {
            let t = 2.0 * PI * x;
            let r = 1.0 + aspect * (q * t).cos();
            vec![r * (p * t).cos(), r * (p * t).sin(), aspect * (q * t).sin()]
        })
    }

    /// Unit circle with a seeded band-limited radial perturbation over Fourier modes
    /// `modes.0..=modes.1` of relative amplitude `amplitude`.
    pub fn perturbed_circle(
        n_nodes: usize,
        dim: usize,
        modes: (usize, usize),
        amplitude: f64,
        seed: u64,
    ) -> Result<Self> {
        if modes.0 == 0 || modes.0 > modes.1 || modes.1 >= n_nodes / 2 {
            return Err(Error::config(format!(
                "perturbation modes {:?} must satisfy 1 ≤ lo ≤ hi < N/2",
                modes
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let count = modes.1 - modes.0 + 1;
        let coeffs: Vec<(f64, f64)> = (0..count)
            .map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        // Out-of-plane wobble for n ≥ 3 keeps the curve generic.
        let lift: Vec<(f64, f64)> = (0..count)
            .map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let norm = (count as f64).sqrt();
        Self::from_fn(n_nodes, dim, |x| {
            let t = 2.0 * PI * x;
            let mut radial = 0.0;
            let mut normal = 0.0;
            for (idx, m) in (modes.0..=modes.1).enumerate() {
                let m = m as f64;
                radial += coeffs[idx].0 * (m * t).cos() + coeffs[idx].1 * (m * t).sin();
                normal += lift[idx].0 * (m * t).cos() + lift[idx].1 * (m * t).sin();
            }
            let r = 1.0 + amplitude * radial / norm;
            let mut p = vec![0.0; dim];
            p[0] = r * t.cos();
            p[1] = r * t.sin();
            if dim >= 3 {
                p[2] = amplitude * normal / norm;
            }
            p
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.n_nodes()
    }

    pub fn dim(&self) -> usize {
        self.nodes.dim()
    }

    pub fn nodes(&self) -> &Field {
        &self.nodes
    }

    pub fn deriv(&self) -> &Field {
        &self.deriv
    }

    /// |γ′(x_i)|.
    pub fn speed(&self) -> &[f64] {
        &self.speed
    }

    pub fn grid(&self) -> &Arc<SpectralGrid> {
        &self.grid
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        self.nodes.point(i)
    }

    /// Unit tangent D_γγ(x_i).
    pub fn unit_tangent(&self, i: usize) -> Vec<f64> {
        (0..self.dim())
            .map(|a| self.deriv.get(i, a) / self.speed[i])
            .collect()
    }

    /// ∫|γ′| by the trapezoid rule, which is spectrally accurate on the periodic grid.
    pub fn length(&self) -> f64 {
        self.speed.iter().sum::<f64>() / self.n_nodes() as f64
    }

    /// Sum of the polyline segment lengths.
    pub fn polyline_length(&self) -> f64 {
        self.segment_lengths().iter().sum()
    }

    fn segment_lengths(&self) -> Vec<f64> {
        let n = self.n_nodes();
        (0..n).map(|i| self.node_distance(i, (i + 1) % n)).collect()
    }

    #[inline]
    pub fn node_distance(&self, i: usize, j: usize) -> f64 {
        (0..self.dim())
            .map(|a| (self.nodes.get(j, a) - self.nodes.get(i, a)).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// The displacement field h = γ.
    pub fn as_displacement(&self) -> DisplacementField {
        DisplacementField::from_parts(self.nodes.clone(), self.deriv.clone())
    }

    /// Applies a pointwise map to every node (rigid motions, scalings, ...).
    pub fn map_points(&self, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Result<Self> {
        let pts: Vec<Vec<f64>> = (0..self.n_nodes()).map(|i| f(&self.point(i))).collect();
        Self::from_nodes(Field::from_points(&pts)?)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::from_nodes(self.nodes.scaled(factor))
    }

    /// Adds a displacement to the node positions.
    pub fn displaced(&self, factor: f64, h: &Field) -> Result<Self> {
        self.nodes.check_shape(h)?;
        Self::from_nodes(self.nodes.add_scaled(factor, h))
    }

    /// D_γh(x_i) = h′(x_i)/|γ′(x_i)| at every node.
    pub fn arc_derivative(&self, field: &DisplacementField) -> Result<Field> {
        self.nodes.check_shape(field.values())?;
        let mut out = field.deriv().clone();
        for a in 0..self.dim() {
            for (v, s) in out.component_mut(a).iter_mut().zip(&self.speed) {
                *v /= s;
            }
        }
        Ok(out)
    }

    /// L_γh(x_i, x_j) = (h_j − h_i) − D_γh(x_i)⟨D_γγ(x_i), γ_j − γ_i⟩.
    pub fn chord_defect(&self, field: &DisplacementField, i: usize, j: usize) -> Vec<f64> {
        let dim = self.dim();
        let speed = self.speed[i];
        let along: f64 = (0..dim)
            .map(|a| self.deriv.get(i, a) / speed * (self.nodes.get(j, a) - self.nodes.get(i, a)))
            .sum();
        (0..dim)
            .map(|a| {
                let dh = field.values().get(j, a) - field.values().get(i, a);
                dh - field.deriv().get(i, a) / speed * along
            })
            .collect()
    }

    /// Radius of the circle through γ_i and γ_j tangent to γ′(x_i); `+∞` when the chord is tangential.
    pub fn tangent_point_radius(&self, i: usize, j: usize) -> Result<f64> {
        let chord = self.node_distance(i, j);
        if i == j || !(chord > 0.0) {
            return Err(Error::SelfIntersection { i, j, distance: chord });
        }
        let dim = self.dim();
        let speed = self.speed[i];
        let along: f64 = (0..dim)
            .map(|a| self.deriv.get(i, a) / speed * (self.nodes.get(j, a) - self.nodes.get(i, a)))
            .sum();
        let normal_sq: f64 = (0..dim)
            .map(|a| {
                let d = self.nodes.get(j, a) - self.nodes.get(i, a);
                (d - self.deriv.get(i, a) / speed * along).powi(2)
            })
            .sum();
        let normal = normal_sq.sqrt();
        if normal <= f64::EPSILON * chord {
            return Ok(f64::INFINITY);
        }
        Ok(chord * chord / (2.0 * normal))
    }

    fn cyclic_gap(&self, i: usize, j: usize) -> usize {
        let n = self.n_nodes();
        let d = i.abs_diff(j);
        d.min(n - d)
    }

    /// Fails if two nodes at cyclic gap ≥ 2 are closer than the separation floor.
    pub fn check_injective(&self) -> Result<()> {
        let n = self.n_nodes();
        let floor = SEPARATION_FLOOR * self.length();
        for i in 0..n {
            for j in i + 2..n {
                if self.cyclic_gap(i, j) < 2 {
                    continue;
                }
                let d = self.node_distance(i, j);
                if !(d > floor) {
                    return Err(Error::SelfIntersection { i, j, distance: d });
                }
            }
        }
        Ok(())
    }

    /// Gromov distortion of the polyline: max over pairs at cyclic gap ≥ 2 of
    /// (shorter polyline arc) / chord.
    pub fn distortion(&self) -> Result<f64> {
        let n = self.n_nodes();
        let seg = self.segment_lengths();
        let mut prefix = vec![0.0; n + 1];
        for i in 0..n {
            prefix[i + 1] = prefix[i] + seg[i];
        }
        let total = prefix[n];
        let floor = SEPARATION_FLOOR * total;
        let mut worst = 1.0_f64;
        for i in 0..n {
            for j in i + 2..n {
                if self.cyclic_gap(i, j) < 2 {
                    continue;
                }
                let chord = self.node_distance(i, j);
                if !(chord > floor) {
                    return Err(Error::SelfIntersection { i, j, distance: chord });
                }
                let forward = prefix[j] - prefix[i];
                let arc = forward.min(total - forward);
                worst = worst.max(arc / chord);
            }
        }
        Ok(worst)
    }

    /// Minimum distance between polyline segments that share no vertex.
    pub fn min_separation(&self) -> f64 {
        let n = self.n_nodes();
        let dim = self.dim();
        let mut best = f64::INFINITY;
        let mut p0 = [0.0; MAX_DIM];
        let mut p1 = [0.0; MAX_DIM];
        let mut q0 = [0.0; MAX_DIM];
        let mut q1 = [0.0; MAX_DIM];
        for i in 0..n {
            self.nodes.load(i, &mut p0);
            self.nodes.load((i + 1) % n, &mut p1);
            for j in i + 2..n {
                if (j + 1) % n == i {
                    continue;
                }
                self.nodes.load(j, &mut q0);
                self.nodes.load((j + 1) % n, &mut q1);
                best = best.min(segment_distance(&p0[..dim], &p1[..dim], &q0[..dim], &q1[..dim]));
            }
        }
        best
    }

    /// Arclength ∫_{x}^{x+w} |γ′| of the trigonometric interpolant of the speed.
    pub fn arclength_between(&self, x: f64, w: f64) -> f64 {
        let coeffs = self.grid.coefficients(&self.speed);
        speed_primitive(&self.grid, &coeffs, x + w) - speed_primitive(&self.grid, &coeffs, x)
    }

    /// Reparametrizes by arclength, rescales to unit length and translates γ(0) to the origin.
    ///
    /// Nodes are placed at equal arclength of the trigonometric interpolant and the
    /// construction is repeated until the spectral speed is constant.
    pub fn retract_to_arclength(&self) -> Result<DiscreteCurve> {
        self.check_injective()?;
        let mut current = self.clone();
        for _ in 0..8 {
            current = current.reparametrize_once()?;
            let dev = current
                .speed
                .iter()
                .fold(0.0_f64, |m, s| m.max((s - 1.0).abs()));
            if dev < 1e-13 {
                break;
            }
        }
        Ok(current)
    }

    /// Largest deviation of the spectral speed from one.
    pub fn speed_deviation(&self) -> f64 {
        self.speed.iter().fold(0.0_f64, |m, s| m.max((s - 1.0).abs()))
    }

    fn reparametrize_once(&self) -> Result<DiscreteCurve> {
        let n = self.n_nodes();
        let grid = &self.grid;
        let speed_coeffs = grid.coefficients(&self.speed);
        let length = speed_coeffs[0].re;
        let mut params = Vec::with_capacity(n);
        for m in 0..n {
            let target = length * m as f64 / n as f64;
            let mut x = m as f64 / n as f64;
            for _ in 0..50 {
                let residual = speed_primitive(grid, &speed_coeffs, x) - target;
                let slope = grid.evaluate(&speed_coeffs, x);
                let step = residual / slope;
                x -= step;
                if step.abs() < 1e-15 {
                    break;
                }
            }
            params.push(x);
        }
        let comps: Vec<Vec<Complex64>> = (0..self.dim())
            .map(|a| grid.coefficients(self.nodes.component(a)))
            .collect();
        let base: Vec<f64> = comps.iter().map(|c| grid.evaluate(c, params[0])).collect();
        let new_components: Vec<Vec<f64>> = comps
            .iter()
            .zip(&base)
            .map(|(c, b)| {
                params
                    .iter()
                    .map(|&x| (grid.evaluate(c, x) - b) / length)
                    .collect()
            })
            .collect();
        DiscreteCurve::from_nodes(Field::from_components(new_components)?)
    }

    /// Short content hash of the node coordinates.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.n_nodes() as u64).to_le_bytes());
        hasher.update((self.dim() as u64).to_le_bytes());
        for v in self.nodes.as_slice() {
            hasher.update(v.to_le_bytes());
        }
        hasher
            .finalize()
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Writes the snapshot CSV: header `x,gamma_1,...,gamma_n`, one node per row.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["x".to_string()];
        header.extend((1..=self.dim()).map(|a| format!("gamma_{a}")));
        w.write_record(&header)?;
        let n = self.n_nodes();
        for i in 0..n {
            let mut row = vec![format!("{:.17e}", i as f64 / n as f64)];
            row.extend((0..self.dim()).map(|a| format!("{:.17e}", self.nodes.get(i, a))));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Reads a snapshot CSV, validating the grid size, the dimension and the parameter column.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        if headers.len() < 3 || &headers[0] != "x" {
            return Err(Error::config(
                "curve CSV must have a header `x,gamma_1,...,gamma_n` with n ≥ 2",
            ));
        }
        let dim = headers.len() - 1;
        let mut params = Vec::new();
        let mut points = Vec::new();
        for (row, record) in r.records().enumerate() {
            let record = record?;
            if record.len() != dim + 1 {
                return Err(Error::dimension(format!(
                    "row {row} has {} columns, expected {}",
                    record.len(),
                    dim + 1
                )));
            }
            let values: Vec<f64> = record
                .iter()
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::config(format!("row {row}: cannot parse `{s}`: {e}")))
                })
                .collect::<Result<_>>()?;
            params.push(values[0]);
            points.push(values[1..].to_vec());
        }
        let n = points.len();
        SpectralGrid::new(n)?;
        for (i, &x) in params.iter().enumerate() {
            if (x - i as f64 / n as f64).abs() > 1e-9 {
                return Err(Error::config(format!(
                    "row {i}: parameter {x} is not on the uniform grid i/N"
                )));
            }
        }
        Self::from_nodes(Field::from_points(&points)?)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

/// Antiderivative of the trigonometric interpolant with coefficients `c`, vanishing at 0.
fn speed_primitive(grid: &SpectralGrid, c: &[Complex64], x: f64) -> f64 {
    let n = grid.len();
    let half = n / 2;
    let base = Complex64::from_polar(1.0, 2.0 * PI * x);
    let mut phase = base;
    let mut acc = c[0].re * x;
    for k in 1..half {
        let denom = Complex64::new(0.0, 2.0 * PI * k as f64);
        acc += 2.0 * (c[k] * (phase - 1.0) / denom).re;
        phase *= base;
    }
    acc + c[half].re * (PI * n as f64 * x).sin() / (PI * n as f64)
}

/// Euclidean distance between segments [p0,p1] and [q0,q1] in any dimension.
pub(crate) fn segment_distance(p0: &[f64], p1: &[f64], q0: &[f64], q1: &[f64]) -> f64 {
    let dot = |a: &dyn Fn(usize) -> f64, b: &dyn Fn(usize) -> f64| -> f64 {
        (0..p0.len()).map(|k| a(k) * b(k)).sum()
    };
    let d1 = |k: usize| p1[k] - p0[k];
    let d2 = |k: usize| q1[k] - q0[k];
    let r = |k: usize| p0[k] - q0[k];
    let a = dot(&d1, &d1);
    let e = dot(&d2, &d2);
    let f = dot(&d2, &r);
    let (mut s, mut t);
    if a <= f64::EPSILON && e <= f64::EPSILON {
        return dot(&r, &r).sqrt();
    }
    if a <= f64::EPSILON {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = dot(&d1, &r);
        if e <= f64::EPSILON {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = dot(&d1, &d2);
            let denom = a * e - b * b;
            s = if denom > 0.0 {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            t = (b * s + f) / e;
            if t < 0.0 {
                t = 0.0;
                s = (-c / a).clamp(0.0, 1.0);
            } else if t > 1.0 {
                t = 1.0;
                s = ((b - c) / a).clamp(0.0, 1.0);
            }
        }
    }
    (0..p0.len())
        .map(|k| {
            let pk = p0[k] + s * (p1[k] - p0[k]);
            let qk = q0[k] + t * (q1[k] - q0[k]);
            (pk - qk).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}
