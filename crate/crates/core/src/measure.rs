//! Uniform grids, finite measures on them, and densities.
//!
//! Every measure in the crate is a dense weight vector over the cells of a
//! [`Grid`]. Pointwise functions (densities, integrands) are evaluated at cell
//! centers, so integration is the midpoint rule.

use std::sync::Arc;

use crate::error::{Error, Result};

/// Hard cap on the number of cells in a grid.
pub const MAX_CELLS: usize = 10_000_000;

/// A probability vector may deviate from unit mass by this much.
pub const PROBABILITY_TOL: f64 = 1e-12;

/// Larger defects than this are rejected instead of renormalized.
pub const RENORMALIZE_TOL: f64 = 1e-9;

/// Whether a grid discretizes a continuous box or indexes a finite set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    Box,
    /// Points `0..n` with unit cells; used for finite state and action sets.
    Finite,
}

/// Uniform partition of a box in `R^d` into `cells_per_axis^d` cells.
///
/// Cells are indexed lexicographically with the first axis varying slowest.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    kind: GridKind,
    lower: Vec<f64>,
    upper: Vec<f64>,
    cells_per_axis: usize,
    widths: Vec<f64>,
    centers: Vec<f64>,
    len: usize,
}

impl Grid {
    /// Builds a uniform grid on `bounds` with `cells_per_axis` cells along every axis.
    pub fn new(bounds: &[(f64, f64)], cells_per_axis: usize) -> Result<Grid> {
        Self::with_kind(GridKind::Box, bounds, cells_per_axis)
    }

    /// The finite set `{0, 1, ..., n-1}` as a one-dimensional grid of unit cells.
    pub fn finite(n: usize) -> Result<Grid> {
        Self::with_kind(GridKind::Finite, &[(-0.5, n as f64 - 0.5)], n)
    }

    fn with_kind(kind: GridKind, bounds: &[(f64, f64)], cells_per_axis: usize) -> Result<Grid> {
        if bounds.is_empty() {
            return Err(Error::InvalidGrid("zero-dimensional box".into()));
        }
        if cells_per_axis == 0 {
            return Err(Error::InvalidGrid("zero cells per axis".into()));
        }
        for &(lo, hi) in bounds {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidGrid("non-finite bounds".into()));
            }
            if hi <= lo {
                return Err(Error::InvalidGrid(format!("empty axis [{lo}, {hi}]")));
            }
        }
        let dim = bounds.len();
        let len = (0..dim).try_fold(1usize, |acc, _| acc.checked_mul(cells_per_axis));
        let len = match len {
            Some(n) if n <= MAX_CELLS => n,
            Some(n) => return Err(Error::TooManyCells { cells: n, cap: MAX_CELLS }),
            None => return Err(Error::TooManyCells { cells: usize::MAX, cap: MAX_CELLS }),
        };
        let lower: Vec<f64> = bounds.iter().map(|b| b.0).collect();
        let upper: Vec<f64> = bounds.iter().map(|b| b.1).collect();
        let widths: Vec<f64> = bounds
            .iter()
            .map(|&(lo, hi)| (hi - lo) / cells_per_axis as f64)
            .collect();
        let mut centers = Vec::with_capacity(len * dim);
        let mut multi = vec![0usize; dim];
        for _ in 0..len {
            for a in 0..dim {
                centers.push(lower[a] + (multi[a] as f64 + 0.5) * widths[a]);
            }
            for a in (0..dim).rev() {
                multi[a] += 1;
                if multi[a] < cells_per_axis {
                    break;
                }
                multi[a] = 0;
            }
        }
        Ok(Grid { kind, lower, upper, cells_per_axis, widths, centers, len })
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Number of cells.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn cells_per_axis(&self) -> usize {
        self.cells_per_axis
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn bounds(&self) -> Vec<(f64, f64)> {
        self.lower.iter().copied().zip(self.upper.iter().copied()).collect()
    }

    /// Cell width along each axis.
    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    pub fn cell_volume(&self) -> f64 {
        self.widths.iter().product()
    }

    pub fn center(&self, cell: usize) -> &[f64] {
        let d = self.dim();
        &self.centers[cell * d..(cell + 1) * d]
    }

    pub fn centers(&self) -> impl Iterator<Item = &[f64]> {
        self.centers.chunks_exact(self.dim())
    }

    /// Per-axis indices of a flat cell index.
    pub fn multi_index(&self, mut cell: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for a in (0..self.dim()).rev() {
            out[a] = cell % self.cells_per_axis;
            cell /= self.cells_per_axis;
        }
        out
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi.iter().fold(0, |acc, &i| acc * self.cells_per_axis + i)
    }

    /// Index of the cell whose center is nearest to `point`, ties going to the
    /// lower index. Points outside the box saturate to boundary cells.
    pub fn nearest_cell(&self, point: &[f64]) -> Result<usize> {
        if point.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: point.len() });
        }
        let mut multi = Vec::with_capacity(self.dim());
        for (a, &p) in point.iter().enumerate() {
            if !p.is_finite() {
                return Err(Error::NonFinite { index: a });
            }
            // nearest integer to s with ties rounded down
            let s = (p - self.lower[a]) / self.widths[a] - 0.5;
            let i = (s - 0.5).ceil().max(0.0) as usize;
            multi.push(i.min(self.cells_per_axis - 1));
        }
        Ok(self.flat_index(&multi))
    }

    /// The grid obtained by splitting every cell into `factor` pieces per axis.
    pub fn refine(&self, factor: usize) -> Result<Grid> {
        if factor == 0 {
            return Err(Error::InvalidParameter("refinement factor must be at least 1".into()));
        }
        let cells = self
            .cells_per_axis
            .checked_mul(factor)
            .ok_or(Error::TooManyCells { cells: usize::MAX, cap: MAX_CELLS })?;
        Grid::new(&self.bounds(), cells)
    }

    /// Index of the coarse cell containing `fine_cell` of `self.refine(factor)`.
    pub fn parent_of(&self, fine: &Grid, fine_cell: usize) -> usize {
        let factor = fine.cells_per_axis / self.cells_per_axis;
        let multi: Vec<usize> = fine.multi_index(fine_cell).into_iter().map(|i| i / factor).collect();
        self.flat_index(&multi)
    }

    /// Same bounds, resolution and kind.
    pub fn same_as(&self, other: &Grid) -> bool {
        std::ptr::eq(self, other)
            || (self.kind == other.kind
                && self.cells_per_axis == other.cells_per_axis
                && self.lower == other.lower
                && self.upper == other.upper)
    }
}

/// Builds a uniform grid; `build_grid(&[(0.0, 1.0)], 2)` has centers 0.25 and 0.75.
pub fn build_grid(bounds: &[(f64, f64)], cells_per_axis: usize) -> Result<Grid> {
    Grid::new(bounds, cells_per_axis)
}

/// Sum in a fixed order with Neumaier compensation.
pub fn stable_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Nonnegative finite measure on the cells of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMeasure {
    grid: Arc<Grid>,
    weights: Vec<f64>,
    total_mass: f64,
}

impl GridMeasure {
    pub fn new(grid: Arc<Grid>, weights: Vec<f64>) -> Result<GridMeasure> {
        if weights.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), got: weights.len() });
        }
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() {
                return Err(Error::NonFinite { index: i });
            }
            if w < 0.0 {
                return Err(Error::NegativeWeight { index: i, value: w });
            }
        }
        let total_mass = stable_sum(weights.iter().copied());
        Ok(GridMeasure { grid, weights, total_mass })
    }

    /// A probability measure. Defects up to [`RENORMALIZE_TOL`] are renormalized away.
    pub fn probability(grid: Arc<Grid>, weights: Vec<f64>) -> Result<GridMeasure> {
        let m = GridMeasure::new(grid, weights)?;
        if (m.total_mass - 1.0).abs() > RENORMALIZE_TOL {
            return Err(Error::NotNormalized { sum: m.total_mass });
        }
        m.normalized()
    }

    pub fn uniform(grid: Arc<Grid>) -> GridMeasure {
        let n = grid.len();
        let w = 1.0 / n as f64;
        let weights = vec![w; n];
        let total_mass = stable_sum(weights.iter().copied());
        GridMeasure { grid, weights, total_mass }
    }

    /// Lebesgue measure restricted to the grid box (counting measure on finite grids).
    pub fn lebesgue(grid: Arc<Grid>) -> GridMeasure {
        let v = grid.cell_volume();
        let weights = vec![v; grid.len()];
        let total_mass = stable_sum(weights.iter().copied());
        GridMeasure { grid, weights, total_mass }
    }

    pub fn point_mass(grid: Arc<Grid>, cell: usize) -> Result<GridMeasure> {
        if cell >= grid.len() {
            return Err(Error::InvalidParameter(format!("cell {cell} out of range")));
        }
        let mut weights = vec![0.0; grid.len()];
        weights[cell] = 1.0;
        Ok(GridMeasure { grid, weights, total_mass: 1.0 })
    }

    /// Rescales to unit mass.
    pub fn normalized(&self) -> Result<GridMeasure> {
        if self.total_mass <= 0.0 {
            return Err(Error::InvalidParameter("cannot normalize a zero measure".into()));
        }
        let weights: Vec<f64> = self.weights.iter().map(|w| w / self.total_mass).collect();
        let total_mass = stable_sum(weights.iter().copied());
        Ok(GridMeasure { grid: self.grid.clone(), weights, total_mass })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn grid_arc(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn is_probability(&self) -> bool {
        (self.total_mass - 1.0).abs() <= PROBABILITY_TOL
    }

    /// True when every cell carries positive weight.
    pub fn has_full_support(&self) -> bool {
        self.weights.iter().all(|&w| w > 0.0)
    }

    fn check_same_grid(&self, other: &GridMeasure) -> Result<()> {
        if self.grid.same_as(&other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch("measures live on different grids"))
        }
    }
}

/// Density with respect to some reference measure on the same grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl GridDensity {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<GridDensity> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), got: values.len() });
        }
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { index: i });
            }
            if v < 0.0 {
                return Err(Error::NegativeDensity { cell: i, value: v });
            }
        }
        Ok(GridDensity { grid, values })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The measure `values[i] * reference.weights[i]`.
    pub fn to_measure(&self, reference: &GridMeasure) -> Result<GridMeasure> {
        if !self.grid.same_as(reference.grid()) {
            return Err(Error::GridMismatch("density and reference live on different grids"));
        }
        let weights = self
            .values
            .iter()
            .zip(reference.weights())
            .map(|(f, w)| f * w)
            .collect();
        GridMeasure::new(reference.grid_arc().clone(), weights)
    }
}

/// The measure with density `f` (evaluated at cell centers) w.r.t. `reference`.
pub fn measure_from_density<F>(f: F, grid: &Arc<Grid>, reference: &GridMeasure) -> Result<GridMeasure>
where
    F: Fn(&[f64]) -> f64,
{
    if !grid.same_as(reference.grid()) {
        return Err(Error::GridMismatch("reference measure lives on another grid"));
    }
    let mut weights = Vec::with_capacity(grid.len());
    for (i, (x, w)) in grid.centers().zip(reference.weights()).enumerate() {
        let v = f(x);
        if !v.is_finite() {
            return Err(Error::NonFinite { index: i });
        }
        if v < 0.0 {
            return Err(Error::NegativeDensity { cell: i, value: v });
        }
        weights.push(v * w);
    }
    GridMeasure::new(grid.clone(), weights)
}

/// Half the L1 distance between the weight vectors.
pub fn tv_distance(mu: &GridMeasure, nu: &GridMeasure) -> Result<f64> {
    mu.check_same_grid(nu)?;
    Ok(tv_weights(mu.weights(), nu.weights()))
}

pub(crate) fn tv_weights(a: &[f64], b: &[f64]) -> f64 {
    0.5 * stable_sum(a.iter().zip(b).map(|(x, y)| (x - y).abs()))
}

/// Cellwise ratio `d eta / d kappa`; zero where both measures vanish.
pub fn rn_derivative(eta: &GridMeasure, kappa: &GridMeasure) -> Result<GridDensity> {
    eta.check_same_grid(kappa)?;
    let mut values = Vec::with_capacity(eta.weights.len());
    for (cell, (&e, &k)) in eta.weights.iter().zip(&kappa.weights).enumerate() {
        if k > 0.0 {
            values.push(e / k);
        } else if e > 0.0 {
            return Err(Error::AbsoluteContinuityViolation { cell, mass: e });
        } else {
            values.push(0.0);
        }
    }
    GridDensity::new(kappa.grid.clone(), values)
}

/// `sum_i f(center_i) * mu.weights[i]`.
pub fn integrate<F>(mu: &GridMeasure, f: F) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut terms = Vec::with_capacity(mu.weights.len());
    for (i, (x, w)) in mu.grid.centers().zip(&mu.weights).enumerate() {
        let v = f(x);
        if !v.is_finite() {
            return Err(Error::NonFinite { index: i });
        }
        terms.push(v * w);
    }
    Ok(stable_sum(terms))
}
