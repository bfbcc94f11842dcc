//! Synthetic CFD-like snapshot generation.
//!
//! A passive tracer `c` is transported on a regular 2D grid by a prescribed
//! velocity field:
//!
//! ```text
//! dc/dt + div(u c) = kappa * lap(c) + F(t) delta_src - lambda c
//! F(t) = A (1 + sin(2 pi t / T)) / 2
//! ```
//!
//! Advection is first-order upwind in flux form, diffusion is second-order
//! central, time stepping is explicit Euler. Each saved row holds the tracer
//! followed by the two velocity components, one column per grid node.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::container::{Container, NamedArray};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VelocityMode {
    /// Constant velocity `u0 * (cos a, sin a)`.
    Uniform,
    /// Solid-body rotation about the domain centre, speed `u0` at distance
    /// half the shorter side.
    Rotating,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Periodic,
    ZeroGradient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InitialTracer {
    Zero,
    Constant { value: f64 },
    /// Sum of Gaussian blobs at seeded random positions.
    RandomBlobs {
        count: usize,
        amplitude: f64,
        width_cells: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub grid_nx: usize,
    pub grid_ny: usize,
    pub dx: f64,
    pub dy: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub kappa: f64,
    pub velocity_mode: VelocityMode,
    pub u0: f64,
    /// Direction of the uniform velocity in radians.
    pub velocity_angle: f64,
    /// Relative amplitude of the sinusoidal modulation of the velocity field.
    pub velocity_modulation: f64,
    pub source_center: (usize, usize),
    pub source_amplitude: f64,
    pub source_period: f64,
    /// First-order removal rate (1/s).
    pub decay_rate: f64,
    pub boundary: Boundary,
    pub initial: InitialTracer,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            grid_nx: 32,
            grid_ny: 32,
            dx: 1.0,
            dy: 1.0,
            dt: 0.5,
            n_steps: 600,
            kappa: 0.05,
            velocity_mode: VelocityMode::Rotating,
            u0: 0.5,
            velocity_angle: PI / 6.0,
            velocity_modulation: 0.25,
            source_center: (10, 16),
            source_amplitude: 1.0,
            source_period: 30.0,
            decay_rate: 0.05,
            boundary: Boundary::Periodic,
            initial: InitialTracer::RandomBlobs {
                count: 3,
                amplitude: 1.0,
                width_cells: 3.0,
            },
            seed: 42,
        }
    }
}

impl GeneratorConfig {
    pub fn nodes(&self) -> usize {
        self.grid_nx * self.grid_ny
    }

    fn modulation(&self, t: f64) -> f64 {
        1.0 + self.velocity_modulation * (2.0 * PI * t / self.source_period).sin()
    }

    pub fn source_rate(&self, t: f64) -> f64 {
        self.source_amplitude * (1.0 + (2.0 * PI * t / self.source_period).sin()) / 2.0
    }

    /// Unmodulated velocity at cell centre `(i, j)`.
    fn base_velocity(&self, i: usize, j: usize) -> (f64, f64) {
        match self.velocity_mode {
            VelocityMode::Uniform => (
                self.u0 * self.velocity_angle.cos(),
                self.u0 * self.velocity_angle.sin(),
            ),
            VelocityMode::Rotating => {
                let lx = self.grid_nx as f64 * self.dx;
                let ly = self.grid_ny as f64 * self.dy;
                let radius = 0.5 * lx.min(ly);
                let omega = self.u0 / radius;
                let x = (i as f64 + 0.5) * self.dx - 0.5 * lx;
                let y = (j as f64 + 0.5) * self.dy - 0.5 * ly;
                (-omega * y, omega * x)
            }
        }
    }

    /// Largest |u| and |v| over the grid and the modulation cycle.
    fn max_speeds(&self) -> (f64, f64) {
        let peak = 1.0 + self.velocity_modulation.abs();
        let mut umax: f64 = 0.0;
        let mut vmax: f64 = 0.0;
        for j in 0..self.grid_ny {
            for i in 0..self.grid_nx {
                let (u, v) = self.base_velocity(i, j);
                umax = umax.max(u.abs() * peak);
                vmax = vmax.max(v.abs() * peak);
            }
        }
        (umax, vmax)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_nx < 2 || self.grid_ny < 2 || self.n_steps < 2 {
            return Err(Error::InvalidConfig(format!(
                "grid and step counts must be >= 2 (nx={}, ny={}, n_steps={})",
                self.grid_nx, self.grid_ny, self.n_steps
            )));
        }
        let positive = [
            ("dx", self.dx),
            ("dy", self.dy),
            ("dt", self.dt),
            ("source_period", self.source_period),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        let nonneg = [
            ("kappa", self.kappa),
            ("source_amplitude", self.source_amplitude),
            ("decay_rate", self.decay_rate),
            ("u0", self.u0.abs()),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be >= 0, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.velocity_modulation.abs()) {
            return Err(Error::InvalidConfig(format!(
                "velocity_modulation must lie in (-1, 1), got {}",
                self.velocity_modulation
            )));
        }
        let (sx, sy) = self.source_center;
        if sx >= self.grid_nx || sy >= self.grid_ny {
            return Err(Error::InvalidConfig(format!(
                "source_center ({sx}, {sy}) outside {}x{} grid",
                self.grid_nx, self.grid_ny
            )));
        }
        if let InitialTracer::Constant { value } = self.initial {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "initial tracer must be finite and >= 0, got {value}"
                )));
            }
        }

        let h = self.dx.min(self.dy);
        let (umax, vmax) = self.max_speeds();
        let speed = umax.hypot(vmax);
        if speed > 0.0 && self.dt > h / speed {
            return Err(Error::StabilityViolation(format!(
                "advective CFL: dt={} > min(dx,dy)/max|u| = {}",
                self.dt,
                h / speed
            )));
        }
        if self.kappa > 0.0 && self.dt > h * h / (4.0 * self.kappa) {
            return Err(Error::StabilityViolation(format!(
                "diffusive bound: dt={} > min(dx,dy)^2/(4 kappa) = {}",
                self.dt,
                h * h / (4.0 * self.kappa)
            )));
        }
        // Positivity of the combined explicit update (diagonal coefficient >= 0).
        let courant = self.dt * (umax / self.dx + vmax / self.dy)
            + 2.0 * self.kappa * self.dt * (1.0 / (self.dx * self.dx) + 1.0 / (self.dy * self.dy))
            + self.decay_rate * self.dt;
        if courant > 1.0 {
            return Err(Error::StabilityViolation(format!(
                "combined explicit update coefficient {courant} exceeds 1"
            )));
        }
        Ok(())
    }
}

/// Time-by-state matrix: one row per saved step, fields concatenated along
/// the columns in `field_names` order.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMatrix {
    data: Matrix,
    field_names: Vec<String>,
    nodes_per_field: usize,
}

impl SnapshotMatrix {
    pub fn new(data: Matrix, field_names: Vec<String>) -> Result<Self> {
        let (n, m) = data.shape();
        if field_names.is_empty() || m % field_names.len() != 0 {
            return Err(Error::ShapeMismatch(format!(
                "{m} columns cannot be split across {} fields",
                field_names.len()
            )));
        }
        if n < 2 || m < 1 {
            return Err(Error::InvalidConfig(format!(
                "snapshot matrix needs n >= 2 and m >= 1, got {n}x{m}"
            )));
        }
        if !data.is_finite() {
            return Err(Error::NonFiniteInput("snapshot matrix has NaN/Inf".into()));
        }
        if n >= m {
            warn!("snapshot matrix has n={n} >= m={m}; PCA rank is limited by m");
        }
        let nodes_per_field = m / field_names.len();
        Ok(Self {
            data,
            field_names,
            nodes_per_field,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], field_names: Vec<String>) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?, field_names)
    }

    pub fn data(&self) -> &Matrix {
        &self.data
    }

    pub fn n(&self) -> usize {
        self.data.rows()
    }

    pub fn m(&self) -> usize {
        self.data.cols()
    }

    pub fn field_names(&self) -> &[String] {
        &self.field_names
    }

    pub fn nodes_per_field(&self) -> usize {
        self.nodes_per_field
    }

    /// Label of column `j` as `field_name:node_index`.
    pub fn column_label(&self, j: usize) -> String {
        format!(
            "{}:{}",
            self.field_names[j / self.nodes_per_field],
            j % self.nodes_per_field
        )
    }

    /// Columns belonging to one field, as an n x nodes matrix.
    pub fn field(&self, name: &str) -> Result<SnapshotMatrix> {
        let k = self
            .field_names
            .iter()
            .position(|f| f == name)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown field {name:?}")))?;
        let p = self.nodes_per_field;
        let mut out = Matrix::zeros(self.n(), p);
        for t in 0..self.n() {
            out.row_mut(t)
                .copy_from_slice(&self.data.row(t)[k * p..(k + 1) * p]);
        }
        Ok(SnapshotMatrix {
            data: out,
            field_names: vec![name.to_string()],
            nodes_per_field: p,
        })
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new();
        c.push(NamedArray::matrix("snapshots", &self.data));
        c
    }

    pub fn from_container(c: &Container, field_names: Vec<String>) -> Result<Self> {
        Self::new(c.get("snapshots")?.to_matrix()?, field_names)
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        let header: Vec<String> = (0..self.m()).map(|j| self.column_label(j)).collect();
        writeln!(w, "{}", header.join(","))?;
        let mut line = String::new();
        for t in 0..self.n() {
            line.clear();
            for (j, v) in self.data.row(t).iter().enumerate() {
                if j > 0 {
                    line.push(',');
                }
                write!(line, "{v}").expect("write to String");
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(f)
    }
}

pub const TRACER: &str = "tracer";
pub const VEL_X: &str = "vel_x";
pub const VEL_Y: &str = "vel_y";

pub fn default_field_names() -> Vec<String> {
    vec![TRACER.into(), VEL_X.into(), VEL_Y.into()]
}

/// Concatenates per-node field arrays into one snapshot row.
pub fn vectorise(fields: &[&[f64]]) -> Result<Vec<f64>> {
    let nodes = fields.first().map_or(0, |f| f.len());
    if let Some((k, f)) = fields.iter().enumerate().find(|(_, f)| f.len() != nodes) {
        return Err(Error::ShapeMismatch(format!(
            "field {k} has {} nodes, expected {nodes}",
            f.len()
        )));
    }
    Ok(fields.concat())
}

/// Splits a snapshot row back into `n_fields` per-node arrays.
pub fn devectorise(row: &[f64], n_fields: usize) -> Result<Vec<Vec<f64>>> {
    if n_fields == 0 || !row.len().is_multiple_of(n_fields) {
        return Err(Error::ShapeMismatch(format!(
            "row of length {} cannot be split into {n_fields} fields",
            row.len()
        )));
    }
    Ok(row
        .chunks(row.len() / n_fields)
        .map(<[f64]>::to_vec)
        .collect())
}

/// Runs the solver and returns `n_steps` snapshots (row 0 is the initial state).
pub fn generate(config: &GeneratorConfig) -> Result<SnapshotMatrix> {
    config.validate()?;
    let mut solver = Solver::new(config);
    let nodes = config.nodes();
    let mut data = Matrix::zeros(config.n_steps, 3 * nodes);
    for step in 0..config.n_steps {
        let t = step as f64 * config.dt;
        solver.fill_velocity(t);
        let row = data.row_mut(step);
        row[..nodes].copy_from_slice(&solver.tracer);
        row[nodes..2 * nodes].copy_from_slice(&solver.u);
        row[2 * nodes..].copy_from_slice(&solver.v);
        if step + 1 < config.n_steps {
            solver.step(t);
        }
    }
    SnapshotMatrix::new(data, default_field_names())
}

/// Explicit finite-volume stepper. Exposed so that per-step cost can be timed
/// without matrix assembly.
pub struct Solver<'a> {
    config: &'a GeneratorConfig,
    base_u: Vec<f64>,
    base_v: Vec<f64>,
    pub tracer: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    next: Vec<f64>,
}

impl<'a> Solver<'a> {
    pub fn new(config: &'a GeneratorConfig) -> Self {
        let (nx, ny) = (config.grid_nx, config.grid_ny);
        let mut base_u = vec![0.0; nx * ny];
        let mut base_v = vec![0.0; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let (u, v) = config.base_velocity(i, j);
                base_u[j * nx + i] = u;
                base_v[j * nx + i] = v;
            }
        }
        Self {
            config,
            tracer: initial_tracer(config),
            u: base_u.clone(),
            v: base_v.clone(),
            base_u,
            base_v,
            next: vec![0.0; nx * ny],
        }
    }

    pub fn fill_velocity(&mut self, t: f64) {
        let a = self.config.modulation(t);
        for (dst, b) in self.u.iter_mut().zip(&self.base_u) {
            *dst = a * b;
        }
        for (dst, b) in self.v.iter_mut().zip(&self.base_v) {
            *dst = a * b;
        }
    }

    /// Advances the tracer from `t` to `t + dt` using the velocity at `t`.
    pub fn step(&mut self, t: f64) {
        let cfg = self.config;
        let (nx, ny) = (cfg.grid_nx, cfg.grid_ny);
        let periodic = cfg.boundary == Boundary::Periodic;
        let c = &self.tracer;
        let (u, v) = (&self.u, &self.v);
        let rx = cfg.dt / cfg.dx;
        let ry = cfg.dt / cfg.dy;
        let kx = cfg.kappa * cfg.dt / (cfg.dx * cfg.dx);
        let ky = cfg.kappa * cfg.dt / (cfg.dy * cfg.dy);

        // Face (i+1/2, j) flux along x; the face beyond the last cell is either
        // wrapped or an outflow/inflow face with a zero-gradient ghost.
        let flux = |ca: f64, cb: f64, vel: f64| vel.max(0.0) * ca + vel.min(0.0) * cb;

        for j in 0..ny {
            for i in 0..nx {
                let k = j * nx + i;
                let ck = c[k];
                let (ie, iw) = (
                    if i + 1 < nx { Some(i + 1) } else if periodic { Some(0) } else { None },
                    if i > 0 { Some(i - 1) } else if periodic { Some(nx - 1) } else { None },
                );
                let (jn, js) = (
                    if j + 1 < ny { Some(j + 1) } else if periodic { Some(0) } else { None },
                    if j > 0 { Some(j - 1) } else if periodic { Some(ny - 1) } else { None },
                );

                let ce = ie.map_or(ck, |ii| c[j * nx + ii]);
                let cw = iw.map_or(ck, |ii| c[j * nx + ii]);
                let cn = jn.map_or(ck, |jj| c[jj * nx + i]);
                let cs = js.map_or(ck, |jj| c[jj * nx + i]);

                let ue = ie.map_or(u[k], |ii| 0.5 * (u[k] + u[j * nx + ii]));
                let uw = iw.map_or(u[k], |ii| 0.5 * (u[k] + u[j * nx + ii]));
                let vn = jn.map_or(v[k], |jj| 0.5 * (v[k] + v[jj * nx + i]));
                let vs = js.map_or(v[k], |jj| 0.5 * (v[k] + v[jj * nx + i]));

                let adv = rx * (flux(ck, ce, ue) - flux(cw, ck, uw))
                    + ry * (flux(ck, cn, vn) - flux(cs, ck, vs));
                let diff = kx * (ce - 2.0 * ck + cw) + ky * (cn - 2.0 * ck + cs);
                self.next[k] = ck - adv + diff - cfg.dt * cfg.decay_rate * ck;
            }
        }
        let (sx, sy) = cfg.source_center;
        self.next[sy * nx + sx] += cfg.dt * cfg.source_rate(t);
        std::mem::swap(&mut self.tracer, &mut self.next);
    }
}

fn initial_tracer(cfg: &GeneratorConfig) -> Vec<f64> {
    let (nx, ny) = (cfg.grid_nx, cfg.grid_ny);
    match cfg.initial {
        InitialTracer::Zero => vec![0.0; nx * ny],
        InitialTracer::Constant { value } => vec![value; nx * ny],
        InitialTracer::RandomBlobs {
            count,
            amplitude,
            width_cells,
        } => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let blobs: Vec<(f64, f64, f64)> = (0..count)
                .map(|_| {
                    (
                        rng.gen_range(0.0..nx as f64),
                        rng.gen_range(0.0..ny as f64),
                        amplitude.abs() * rng.gen_range(0.5..1.0),
                    )
                })
                .collect();
            let w2 = 2.0 * width_cells * width_cells;
            let mut c = vec![0.0; nx * ny];
            for j in 0..ny {
                for i in 0..nx {
                    c[j * nx + i] = blobs
                        .iter()
                        .map(|&(bx, by, a)| {
                            let ddx = periodic_dist(i as f64, bx, nx as f64);
                            let ddy = periodic_dist(j as f64, by, ny as f64);
                            a * (-(ddx * ddx + ddy * ddy) / w2).exp()
                        })
                        .sum();
                }
            }
            c
        }
    }
}

fn periodic_dist(a: f64, b: f64, len: f64) -> f64 {
    let d = (a - b).abs();
    d.min(len - d)
}

/// Per-column affine map onto `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub lo: f64,
    pub hi: f64,
}

impl MinMaxScaler {
    pub fn fit(data: &Matrix, lo: f64, hi: f64) -> Result<Self> {
        if data.rows() == 0 || data.cols() == 0 {
            return Err(Error::EmptyInput("cannot fit a scaler on no data".into()));
        }
        if !(lo < hi && lo.is_finite() && hi.is_finite()) {
            return Err(Error::InvalidConfig(format!("scaler range [{lo}, {hi}] is empty")));
        }
        let mut min = data.row(0).to_vec();
        let mut max = min.clone();
        for t in 1..data.rows() {
            for (j, &x) in data.row(t).iter().enumerate() {
                min[j] = min[j].min(x);
                max[j] = max[j].max(x);
            }
        }
        Ok(Self { min, max, lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    fn check(&self, cols: usize) -> Result<()> {
        if cols != self.dim() {
            return Err(Error::ShapeMismatch(format!(
                "scaler fitted on {} columns, got {cols}",
                self.dim()
            )));
        }
        Ok(())
    }

    pub fn scale_row(&self, row: &mut [f64]) {
        let mid = 0.5 * (self.lo + self.hi);
        for ((x, &a), &b) in row.iter_mut().zip(&self.min).zip(&self.max) {
            *x = if b > a {
                self.lo + (*x - a) / (b - a) * (self.hi - self.lo)
            } else {
                mid
            };
        }
    }

    pub fn invert_row(&self, row: &mut [f64]) {
        for ((x, &a), &b) in row.iter_mut().zip(&self.min).zip(&self.max) {
            *x = if b > a {
                a + (*x - self.lo) / (self.hi - self.lo) * (b - a)
            } else {
                a
            };
        }
    }

    pub fn scale(&self, data: &Matrix) -> Result<Matrix> {
        self.check(data.cols())?;
        let mut out = data.clone();
        for t in 0..out.rows() {
            self.scale_row(out.row_mut(t));
        }
        Ok(out)
    }

    pub fn invert(&self, data: &Matrix) -> Result<Matrix> {
        self.check(data.cols())?;
        let mut out = data.clone();
        for t in 0..out.rows() {
            self.invert_row(out.row_mut(t));
        }
        Ok(out)
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new();
        c.push(NamedArray::vector("scaler_min", self.min.clone()));
        c.push(NamedArray::vector("scaler_max", self.max.clone()));
        c.push(NamedArray::vector("scaler_range", vec![self.lo, self.hi]));
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let range = &c.get("scaler_range")?.data;
        if range.len() != 2 {
            return Err(Error::Format("scaler_range must hold 2 values".into()));
        }
        let min = c.get("scaler_min")?.data.clone();
        let max = c.get("scaler_max")?.data.clone();
        if min.len() != max.len() {
            return Err(Error::Format("scaler min/max lengths differ".into()));
        }
        Ok(Self {
            min,
            max,
            lo: range[0],
            hi: range[1],
        })
    }
}
