//! Transition kernels, stationary randomized policies and costs.
//!
//! A [`TransitionKernel`] stores one probability vector over state cells for
//! every (state cell, action cell) pair. A [`StationaryPolicy`] stores one
//! probability vector over action cells per state cell. Composing the two with
//! [`apply_policy`] gives the state-to-state kernel of the controlled chain.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::measure::{stable_sum, tv_weights, Grid, GridMeasure};

/// Rows must sum to one within this tolerance.
pub const ROW_TOL: f64 = 1e-10;

fn check_rows(rows: &[f64], width: usize) -> Result<()> {
    for (r, row) in rows.chunks_exact(width).enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { index: r * width + j });
            }
            if v < 0.0 {
                return Err(Error::NegativeWeight { index: r * width + j, value: v });
            }
        }
        let sum = stable_sum(row.iter().copied());
        if (sum - 1.0).abs() > ROW_TOL {
            return Err(Error::RowNotStochastic { row: r, sum });
        }
    }
    Ok(())
}

/// `T(dy | x, u)` on a state grid and an action grid.
#[derive(Debug, Clone)]
pub struct TransitionKernel {
    state_grid: Arc<Grid>,
    action_grid: Arc<Grid>,
    rows: Vec<f64>,
    density_reference: Option<GridMeasure>,
    majorant: Option<GridMeasure>,
}

impl TransitionKernel {
    /// `rows` is laid out as `[(x * n_actions + u) * n_states + y]`.
    pub fn new(state_grid: Arc<Grid>, action_grid: Arc<Grid>, rows: Vec<f64>) -> Result<Self> {
        let kernel = Self::from_raw_unchecked(state_grid, action_grid, rows)?;
        check_rows(&kernel.rows, kernel.n_states())?;
        Ok(kernel)
    }

    /// Only checks the array shape. Used for import and diagnostics; see
    /// [`validate_stochasticity`].
    pub fn from_raw_unchecked(state_grid: Arc<Grid>, action_grid: Arc<Grid>, rows: Vec<f64>) -> Result<Self> {
        let nx = state_grid.len();
        let expected = nx * action_grid.len() * nx;
        if rows.len() != expected {
            return Err(Error::DimensionMismatch { expected, got: rows.len() });
        }
        Ok(TransitionKernel { state_grid, action_grid, rows, density_reference: None, majorant: None })
    }

    /// Builds a kernel from `f(x, u) -> row`.
    pub fn from_fn<F>(state_grid: Arc<Grid>, action_grid: Arc<Grid>, mut f: F) -> Result<Self>
    where
        F: FnMut(usize, usize) -> Vec<f64>,
    {
        let (nx, nu) = (state_grid.len(), action_grid.len());
        let mut rows = Vec::with_capacity(nx * nu * nx);
        for x in 0..nx {
            for u in 0..nu {
                let row = f(x, u);
                if row.len() != nx {
                    return Err(Error::DimensionMismatch { expected: nx, got: row.len() });
                }
                rows.extend(row);
            }
        }
        Self::new(state_grid, action_grid, rows)
    }

    /// Attaches a reference measure `psi`; densities are then `row / psi` cellwise.
    pub fn with_density_reference(mut self, psi: GridMeasure) -> Result<Self> {
        if !psi.grid().same_as(&self.state_grid) {
            return Err(Error::GridMismatch("density reference must live on the state grid"));
        }
        let nx = self.n_states();
        for row in self.rows.chunks_exact(nx) {
            for (y, (&p, &w)) in row.iter().zip(psi.weights()).enumerate() {
                if w == 0.0 && p > 0.0 {
                    return Err(Error::AbsoluteContinuityViolation { cell: y, mass: p });
                }
            }
        }
        self.density_reference = Some(psi);
        Ok(self)
    }

    /// Attaches a majorizing measure. Fails if some row exceeds it anywhere.
    pub fn with_majorant(mut self, nu: GridMeasure) -> Result<Self> {
        if !nu.grid().same_as(&self.state_grid) {
            return Err(Error::GridMismatch("majorant must live on the state grid"));
        }
        if !dominates(nu.weights(), &self.rows) {
            return Err(Error::InvalidParameter("majorant does not dominate every row".into()));
        }
        self.majorant = Some(nu);
        Ok(self)
    }

    /// Attaches the smallest majorant: the cellwise maximum over all rows.
    pub fn with_envelope_majorant(self) -> Result<Self> {
        let nx = self.n_states();
        let mut env = vec![0.0f64; nx];
        for row in self.rows.chunks_exact(nx) {
            for (e, &p) in env.iter_mut().zip(row) {
                *e = e.max(p);
            }
        }
        let nu = GridMeasure::new(self.state_grid.clone(), env)?;
        self.with_majorant(nu)
    }

    pub fn state_grid(&self) -> &Arc<Grid> {
        &self.state_grid
    }

    pub fn action_grid(&self) -> &Arc<Grid> {
        &self.action_grid
    }

    pub fn n_states(&self) -> usize {
        self.state_grid.len()
    }

    pub fn n_actions(&self) -> usize {
        self.action_grid.len()
    }

    pub fn rows(&self) -> &[f64] {
        &self.rows
    }

    pub fn row(&self, x: usize, u: usize) -> &[f64] {
        let nx = self.n_states();
        let start = (x * self.n_actions() + u) * nx;
        &self.rows[start..start + nx]
    }

    pub fn density_reference(&self) -> Option<&GridMeasure> {
        self.density_reference.as_ref()
    }

    pub fn has_density(&self) -> bool {
        self.density_reference.is_some()
    }

    /// `f_{x,u}(y)` with respect to the density reference.
    pub fn density(&self, x: usize, u: usize, y: usize) -> Option<f64> {
        let psi = self.density_reference.as_ref()?;
        let w = psi.weights()[y];
        Some(if w > 0.0 { self.row(x, u)[y] / w } else { 0.0 })
    }

    pub fn majorant(&self) -> Option<&GridMeasure> {
        self.majorant.as_ref()
    }

    /// Density of the majorant with respect to the density reference.
    pub fn majorant_density(&self) -> Option<Vec<f64>> {
        let psi = self.density_reference.as_ref()?;
        let nu = self.majorant.as_ref()?;
        Some(
            nu.weights()
                .iter()
                .zip(psi.weights())
                .map(|(&n, &p)| if p > 0.0 { n / p } else { 0.0 })
                .collect(),
        )
    }
}

fn dominates(envelope: &[f64], rows: &[f64]) -> bool {
    rows.chunks_exact(envelope.len())
        .all(|row| row.iter().zip(envelope).all(|(p, e)| p <= e))
}

/// Row-stochastic state-to-state kernel, e.g. `T^gamma`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateKernel {
    grid: Arc<Grid>,
    rows: Vec<f64>,
}

impl StateKernel {
    pub fn new(grid: Arc<Grid>, rows: Vec<f64>) -> Result<Self> {
        let k = Self::from_raw_unchecked(grid, rows)?;
        check_rows(&k.rows, k.len())?;
        Ok(k)
    }

    pub fn from_raw_unchecked(grid: Arc<Grid>, rows: Vec<f64>) -> Result<Self> {
        let n = grid.len();
        if rows.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, got: rows.len() });
        }
        Ok(StateKernel { grid, rows })
    }

    /// Finite-state kernel from a square matrix given row by row.
    pub fn from_matrix(matrix: &[Vec<f64>]) -> Result<Self> {
        let grid = Arc::new(Grid::finite(matrix.len())?);
        Self::new(grid, matrix.iter().flatten().copied().collect())
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn rows(&self) -> &[f64] {
        &self.rows
    }

    pub fn row(&self, x: usize) -> &[f64] {
        let n = self.len();
        &self.rows[x * n..(x + 1) * n]
    }

    /// `mu T` for a weight vector `mu`.
    pub fn push_forward(&self, mu: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut out = vec![0.0; n];
        for (x, &m) in mu.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            for (o, &p) in out.iter_mut().zip(self.row(x)) {
                *o += m * p;
            }
        }
        out
    }
}

/// `gamma(du | x)`: one probability vector over action cells per state cell.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryPolicy {
    state_grid: Arc<Grid>,
    action_grid: Arc<Grid>,
    rows: Vec<f64>,
    deterministic: bool,
}

impl StationaryPolicy {
    pub fn new(state_grid: Arc<Grid>, action_grid: Arc<Grid>, rows: Vec<f64>) -> Result<Self> {
        let p = Self::from_raw_unchecked(state_grid, action_grid, rows)?;
        check_rows(&p.rows, p.n_actions())?;
        Ok(p)
    }

    pub fn from_raw_unchecked(state_grid: Arc<Grid>, action_grid: Arc<Grid>, rows: Vec<f64>) -> Result<Self> {
        let (nx, nu) = (state_grid.len(), action_grid.len());
        if rows.len() != nx * nu {
            return Err(Error::DimensionMismatch { expected: nx * nu, got: rows.len() });
        }
        let deterministic = rows
            .chunks_exact(nu)
            .all(|r| r.iter().filter(|&&p| p != 0.0).count() == 1 && r.iter().any(|&p| p == 1.0));
        Ok(StationaryPolicy { state_grid, action_grid, rows, deterministic })
    }

    /// Point-mass policy `x -> actions[x]`.
    pub fn deterministic(state_grid: Arc<Grid>, action_grid: Arc<Grid>, actions: &[usize]) -> Result<Self> {
        let (nx, nu) = (state_grid.len(), action_grid.len());
        if actions.len() != nx {
            return Err(Error::DimensionMismatch { expected: nx, got: actions.len() });
        }
        let mut rows = vec![0.0; nx * nu];
        for (x, &a) in actions.iter().enumerate() {
            if a >= nu {
                return Err(Error::InvalidParameter(format!("action {a} out of range")));
            }
            rows[x * nu + a] = 1.0;
        }
        Self::new(state_grid, action_grid, rows)
    }

    pub fn uniform(state_grid: Arc<Grid>, action_grid: Arc<Grid>) -> Self {
        let (nx, nu) = (state_grid.len(), action_grid.len());
        let rows = vec![1.0 / nu as f64; nx * nu];
        StationaryPolicy { state_grid, action_grid, rows, deterministic: nu == 1 }
    }

    /// Builds a policy from `f(x) -> row over actions`.
    pub fn from_fn<F>(state_grid: Arc<Grid>, action_grid: Arc<Grid>, mut f: F) -> Result<Self>
    where
        F: FnMut(usize) -> Vec<f64>,
    {
        let nu = action_grid.len();
        let mut rows = Vec::with_capacity(state_grid.len() * nu);
        for x in 0..state_grid.len() {
            let r = f(x);
            if r.len() != nu {
                return Err(Error::DimensionMismatch { expected: nu, got: r.len() });
            }
            rows.extend(r);
        }
        Self::new(state_grid, action_grid, rows)
    }

    pub fn state_grid(&self) -> &Arc<Grid> {
        &self.state_grid
    }

    pub fn action_grid(&self) -> &Arc<Grid> {
        &self.action_grid
    }

    pub fn n_states(&self) -> usize {
        self.state_grid.len()
    }

    pub fn n_actions(&self) -> usize {
        self.action_grid.len()
    }

    pub fn rows(&self) -> &[f64] {
        &self.rows
    }

    pub fn row(&self, x: usize) -> &[f64] {
        let nu = self.n_actions();
        &self.rows[x * nu..(x + 1) * nu]
    }

    pub fn is_deterministic(&self) -> bool {
        self.deterministic
    }

    /// For deterministic policies, the chosen action at every state.
    pub fn actions(&self) -> Option<Vec<usize>> {
        if !self.deterministic {
            return None;
        }
        Some(
            self.rows
                .chunks_exact(self.n_actions())
                .map(|r| r.iter().position(|&p| p == 1.0).unwrap_or(0))
                .collect(),
        )
    }

    pub fn same_grids(&self, other: &StationaryPolicy) -> bool {
        self.state_grid.same_as(&other.state_grid) && self.action_grid.same_as(&other.action_grid)
    }

    /// Lifts the policy to `fine`, a refinement of its state grid: every fine
    /// cell copies the row of its parent cell.
    pub fn lift_to(&self, fine: &Arc<Grid>) -> Result<StationaryPolicy> {
        let coarse = &self.state_grid;
        let factor = fine.cells_per_axis() / coarse.cells_per_axis();
        if factor == 0
            || factor * coarse.cells_per_axis() != fine.cells_per_axis()
            || fine.lower() != coarse.lower()
            || fine.upper() != coarse.upper()
        {
            return Err(Error::GridMismatch("target grid is not a refinement of the state grid"));
        }
        let nu = self.n_actions();
        let mut rows = Vec::with_capacity(fine.len() * nu);
        for cell in 0..fine.len() {
            rows.extend_from_slice(self.row(coarse.parent_of(fine, cell)));
        }
        Ok(StationaryPolicy {
            state_grid: fine.clone(),
            action_grid: self.action_grid.clone(),
            rows,
            deterministic: self.deterministic,
        })
    }
}

/// Cost `c(x, u)` on the (state cell, action cell) pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct CostFunction {
    state_grid: Arc<Grid>,
    action_grid: Arc<Grid>,
    values: Vec<f64>,
    bound: f64,
}

impl CostFunction {
    pub fn new(state_grid: Arc<Grid>, action_grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        let expected = state_grid.len() * action_grid.len();
        if values.len() != expected {
            return Err(Error::DimensionMismatch { expected, got: values.len() });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index: i });
        }
        let bound = values.iter().fold(0.0f64, |b, v| b.max(v.abs()));
        Ok(CostFunction { state_grid, action_grid, values, bound })
    }

    /// Evaluates `c` at (state center, action center) pairs.
    pub fn from_fn<F>(state_grid: Arc<Grid>, action_grid: Arc<Grid>, c: F) -> Result<Self>
    where
        F: Fn(&[f64], &[f64]) -> f64,
    {
        let mut values = Vec::with_capacity(state_grid.len() * action_grid.len());
        for x in state_grid.centers() {
            for u in action_grid.centers() {
                values.push(c(x, u));
            }
        }
        Self::new(state_grid, action_grid, values)
    }

    pub fn constant(state_grid: Arc<Grid>, action_grid: Arc<Grid>, value: f64) -> Result<Self> {
        let n = state_grid.len() * action_grid.len();
        Self::new(state_grid, action_grid, vec![value; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, x: usize, u: usize) -> f64 {
        self.values[x * self.action_grid.len() + u]
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn state_grid(&self) -> &Arc<Grid> {
        &self.state_grid
    }

    pub fn action_grid(&self) -> &Arc<Grid> {
        &self.action_grid
    }
}

type Drift = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;
type DensityFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Density of the additive noise `w_n`, zero outside a declared support box.
#[derive(Clone)]
pub struct NoiseDensity {
    label: String,
    density: DensityFn,
    support: Vec<(f64, f64)>,
}

impl fmt::Debug for NoiseDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NoiseDensity")
            .field("label", &self.label)
            .field("support", &self.support)
            .finish()
    }
}

impl NoiseDensity {
    pub fn new<F>(label: impl Into<String>, support: Vec<(f64, f64)>, density: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        NoiseDensity { label: label.into(), density: Arc::new(density), support }
    }

    /// Uniform density on a box.
    pub fn uniform(support: Vec<(f64, f64)>) -> Self {
        let vol: f64 = support.iter().map(|(lo, hi)| hi - lo).product();
        let sup = support.clone();
        Self::new("uniform", support, move |w| {
            if inside(&sup, w) {
                1.0 / vol
            } else {
                0.0
            }
        })
    }

    /// Isotropic Gaussian with standard deviation `sigma`, truncated to
    /// `[-cutoff * sigma, cutoff * sigma]^dim` and renormalized.
    pub fn truncated_gaussian(sigma: f64, cutoff: f64, dim: usize) -> Self {
        let half = cutoff * sigma;
        let support = vec![(-half, half); dim];
        let axis_mass = sigma * (2.0 * std::f64::consts::PI).sqrt() * libm::erf(cutoff / std::f64::consts::SQRT_2);
        let norm = axis_mass.powi(dim as i32);
        let sup = support.clone();
        Self::new(format!("truncated_gaussian(sigma={sigma}, cutoff={cutoff})"), support, move |w| {
            if inside(&sup, w) {
                let r2: f64 = w.iter().map(|v| v * v).sum();
                (-r2 / (2.0 * sigma * sigma)).exp() / norm
            } else {
                0.0
            }
        })
    }

    pub fn eval(&self, w: &[f64]) -> f64 {
        (self.density)(w)
    }

    pub fn support(&self) -> &[(f64, f64)] {
        &self.support
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Midpoint-rule integral over the support.
    pub fn total_mass(&self) -> f64 {
        let per_axis = match self.support.len() {
            0 | 1 => 4096,
            2 => 1024,
            3 => 128,
            _ => 16,
        };
        let grid = match Grid::new(&self.support, per_axis) {
            Ok(g) => g,
            Err(_) => return f64::NAN,
        };
        let vol = grid.cell_volume();
        stable_sum(grid.centers().map(|w| self.eval(w) * vol))
    }
}

fn inside(support: &[(f64, f64)], w: &[f64]) -> bool {
    support.iter().zip(w).all(|(&(lo, hi), &v)| v >= lo && v <= hi)
}

/// `x_{n+1} = F(x_n, u_n) + w_n` on a state box with an action box.
#[derive(Clone)]
pub struct AdditiveNoiseModel {
    drift: Drift,
    noise: NoiseDensity,
    state_box: Vec<(f64, f64)>,
    action_box: Vec<(f64, f64)>,
    bounded_drift: bool,
}

impl fmt::Debug for AdditiveNoiseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AdditiveNoiseModel")
            .field("noise", &self.noise)
            .field("state_box", &self.state_box)
            .field("action_box", &self.action_box)
            .field("bounded_drift", &self.bounded_drift)
            .finish()
    }
}

/// Noise densities must integrate to one within this tolerance.
pub const NOISE_MASS_TOL: f64 = 1e-6;

impl AdditiveNoiseModel {
    /// `bounded_drift` declares `sup |F| < inf`, which makes the model
    /// majorizable; kernels built from it then carry the envelope majorant.
    pub fn new<F>(
        drift: F,
        noise: NoiseDensity,
        state_box: Vec<(f64, f64)>,
        action_box: Vec<(f64, f64)>,
        bounded_drift: bool,
    ) -> Result<Self>
    where
        F: Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        if noise.support().len() != state_box.len() {
            return Err(Error::DimensionMismatch { expected: state_box.len(), got: noise.support().len() });
        }
        let mass = noise.total_mass();
        if !((mass - 1.0).abs() <= NOISE_MASS_TOL) {
            return Err(Error::InvalidParameter(format!(
                "noise density integrates to {mass}, not 1"
            )));
        }
        Ok(AdditiveNoiseModel { drift: Arc::new(drift), noise, state_box, action_box, bounded_drift })
    }

    pub fn drift(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        (self.drift)(x, u)
    }

    pub fn noise(&self) -> &NoiseDensity {
        &self.noise
    }

    pub fn state_box(&self) -> &[(f64, f64)] {
        &self.state_box
    }

    pub fn action_box(&self) -> &[(f64, f64)] {
        &self.action_box
    }

    pub fn bounded_drift(&self) -> bool {
        self.bounded_drift
    }
}

/// Discretizes an additive-noise model on the given grids.
///
/// The noise density is evaluated at `y - F(x, u)` for the centers `y` of the
/// state grid extended beyond the box; every extended cell is folded onto the
/// nearest in-box cell, then the row is normalized. Densities are attached
/// w.r.t. `reference`, and the envelope majorant when the drift is bounded.
pub fn kernel_from_model(
    model: &AdditiveNoiseModel,
    state_grid: &Arc<Grid>,
    action_grid: &Arc<Grid>,
    reference: &GridMeasure,
) -> Result<TransitionKernel> {
    if state_grid.bounds() != model.state_box || action_grid.bounds() != model.action_box {
        return Err(Error::GridMismatch("grids do not cover the model boxes"));
    }
    let dim = state_grid.dim();
    let n = state_grid.cells_per_axis();
    let widths = state_grid.widths().to_vec();
    let lower = state_grid.lower().to_vec();
    let support = model.noise.support().to_vec();
    let (nx, nu) = (state_grid.len(), action_grid.len());
    let mut rows = vec![0.0f64; nx * nu * nx];
    let mut y = vec![0.0f64; dim];
    let mut w = vec![0.0f64; dim];
    let mut clamped = vec![0usize; dim];
    for x in 0..nx {
        let xc = state_grid.center(x);
        for u in 0..nu {
            let drift = model.drift(xc, action_grid.center(u));
            if drift.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: drift.len() });
            }
            if let Some(i) = drift.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { index: i });
            }
            // extended cell index range per axis whose centers can meet the support
            let ranges: Vec<(i64, i64)> = (0..dim)
                .map(|a| {
                    let lo = ((drift[a] + support[a].0 - lower[a]) / widths[a] - 0.5).floor() as i64 - 1;
                    let hi = ((drift[a] + support[a].1 - lower[a]) / widths[a] - 0.5).ceil() as i64 + 1;
                    (lo, hi)
                })
                .collect();
            let row = &mut rows[(x * nu + u) * nx..(x * nu + u + 1) * nx];
            let mut k: Vec<i64> = ranges.iter().map(|r| r.0).collect();
            'outer: loop {
                for a in 0..dim {
                    y[a] = lower[a] + (k[a] as f64 + 0.5) * widths[a];
                    w[a] = y[a] - drift[a];
                    clamped[a] = k[a].clamp(0, n as i64 - 1) as usize;
                }
                let v = model.noise.eval(&w);
                if v > 0.0 {
                    row[state_grid.flat_index(&clamped)] += v;
                }
                for a in (0..dim).rev() {
                    k[a] += 1;
                    if k[a] <= ranges[a].1 {
                        continue 'outer;
                    }
                    k[a] = ranges[a].0;
                }
                break;
            }
            let total = stable_sum(row.iter().copied());
            if total <= 0.0 {
                return Err(Error::ZeroRow { state: x, action: u });
            }
            for p in row.iter_mut() {
                *p /= total;
            }
        }
    }
    let kernel = TransitionKernel::new(state_grid.clone(), action_grid.clone(), rows)?
        .with_density_reference(reference.clone())?;
    if model.bounded_drift {
        kernel.with_envelope_majorant()
    } else {
        Ok(kernel)
    }
}

/// `T^gamma(dy | x) = sum_u gamma(u | x) T(dy | x, u)`.
pub fn apply_policy(kernel: &TransitionKernel, gamma: &StationaryPolicy) -> Result<StateKernel> {
    if !kernel.state_grid.same_as(&gamma.state_grid) || !kernel.action_grid.same_as(&gamma.action_grid) {
        return Err(Error::GridMismatch("policy and kernel grids differ"));
    }
    let (nx, nu) = (kernel.n_states(), kernel.n_actions());
    let mut rows = vec![0.0f64; nx * nx];
    for x in 0..nx {
        let out = &mut rows[x * nx..(x + 1) * nx];
        for u in 0..nu {
            let p = gamma.row(x)[u];
            if p == 0.0 {
                continue;
            }
            for (o, &t) in out.iter_mut().zip(kernel.row(x, u)) {
                *o += p * t;
            }
        }
    }
    StateKernel::from_raw_unchecked(kernel.state_grid.clone(), rows)
}

/// Rowwise `(1 - alpha) gamma + alpha gamma_prime`.
pub fn mix_policies(gamma: &StationaryPolicy, gamma_prime: &StationaryPolicy, alpha: f64) -> Result<StationaryPolicy> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!("mixing weight {alpha} outside [0, 1]")));
    }
    if !gamma.same_grids(gamma_prime) {
        return Err(Error::GridMismatch("policies live on different grids"));
    }
    let rows = gamma
        .rows
        .iter()
        .zip(&gamma_prime.rows)
        .map(|(&a, &b)| (1.0 - alpha) * a + alpha * b)
        .collect();
    StationaryPolicy::from_raw_unchecked(gamma.state_grid.clone(), gamma.action_grid.clone(), rows)
}

/// Outcome of [`validate_h2`].
#[derive(Debug, Clone, PartialEq)]
pub struct H2Report {
    /// A stored majorant dominates every row.
    pub majorized: bool,
    /// Largest TV distance between rows at adjacent action cells (same state).
    pub action_modulus: f64,
    /// Largest TV distance between rows at adjacent state cells (same action).
    pub state_modulus: f64,
}

fn adjacent_pairs(grid: &Grid) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for cell in 0..grid.len() {
        let multi = grid.multi_index(cell);
        for a in 0..grid.dim() {
            if multi[a] + 1 < grid.cells_per_axis() {
                let mut next = multi.clone();
                next[a] += 1;
                pairs.push((cell, grid.flat_index(&next)));
            }
        }
    }
    pairs
}

/// Checks majorization and reports discrete continuity moduli of the kernel.
pub fn validate_h2(kernel: &TransitionKernel) -> H2Report {
    let majorized = kernel
        .majorant
        .as_ref()
        .is_some_and(|nu| dominates(nu.weights(), &kernel.rows));
    let mut action_modulus = 0.0f64;
    let action_pairs = adjacent_pairs(&kernel.action_grid);
    for x in 0..kernel.n_states() {
        for &(a, b) in &action_pairs {
            action_modulus = action_modulus.max(tv_weights(kernel.row(x, a), kernel.row(x, b)));
        }
    }
    let mut state_modulus = 0.0f64;
    let state_pairs = adjacent_pairs(&kernel.state_grid);
    for u in 0..kernel.n_actions() {
        for &(a, b) in &state_pairs {
            state_modulus = state_modulus.max(tv_weights(kernel.row(a, u), kernel.row(b, u)));
        }
    }
    H2Report { majorized, action_modulus, state_modulus }
}

/// One offending row found by [`validate_stochasticity`].
#[derive(Debug, Clone, PartialEq)]
pub enum RowViolation {
    /// `defect` is `sum - 1`.
    SumDefect { row: usize, defect: f64 },
    Negative { row: usize, column: usize, value: f64 },
    NonFinite { row: usize, column: usize },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StochasticityReport {
    pub violations: Vec<RowViolation>,
}

impl StochasticityReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Anything stored as a flat array of probability rows.
pub trait RowStochastic {
    fn row_width(&self) -> usize;
    fn flat_rows(&self) -> &[f64];
}

impl RowStochastic for TransitionKernel {
    fn row_width(&self) -> usize {
        self.n_states()
    }
    fn flat_rows(&self) -> &[f64] {
        &self.rows
    }
}

impl RowStochastic for StationaryPolicy {
    fn row_width(&self) -> usize {
        self.n_actions()
    }
    fn flat_rows(&self) -> &[f64] {
        &self.rows
    }
}

impl RowStochastic for StateKernel {
    fn row_width(&self) -> usize {
        self.len()
    }
    fn flat_rows(&self) -> &[f64] {
        &self.rows
    }
}

/// Lists rows with negative or non-finite entries or with sums off by more than [`ROW_TOL`].
pub fn validate_stochasticity<T: RowStochastic + ?Sized>(object: &T) -> StochasticityReport {
    let width = object.row_width();
    let mut violations = Vec::new();
    for (r, row) in object.flat_rows().chunks_exact(width).enumerate() {
        for (c, &v) in row.iter().enumerate() {
            if !v.is_finite() {
                violations.push(RowViolation::NonFinite { row: r, column: c });
            } else if v < 0.0 {
                violations.push(RowViolation::Negative { row: r, column: c, value: v });
            }
        }
        let defect = stable_sum(row.iter().copied()) - 1.0;
        if defect.is_finite() && defect.abs() > ROW_TOL {
            violations.push(RowViolation::SumDefect { row: r, defect });
        }
    }
    StochasticityReport { violations }
}
