//! Scalar additive-noise benchmark: `x' = a x + b u + w` on `[-1, 1]`, actions
//! in `[-1, 1]`, `w` a truncated Gaussian, boundary mass folded onto the box.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::Result;
use crate::kernel::{kernel_from_model, AdditiveNoiseModel, CostFunction, NoiseDensity, StationaryPolicy, TransitionKernel};
use crate::measure::{measure_from_density, Grid, GridMeasure};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchmarkSpec {
    pub state_gain: f64,
    pub action_gain: f64,
    pub sigma: f64,
    /// Noise support is `[-cutoff * sigma, cutoff * sigma]`.
    pub cutoff: f64,
    pub bounded_drift: bool,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        BenchmarkSpec { state_gain: 0.5, action_gain: 0.5, sigma: 0.3, cutoff: 3.0, bounded_drift: true }
    }
}

pub const UNIT_BOX: (f64, f64) = (-1.0, 1.0);

impl BenchmarkSpec {
    pub fn model(&self) -> Result<AdditiveNoiseModel> {
        let (a, b) = (self.state_gain, self.action_gain);
        AdditiveNoiseModel::new(
            move |x: &[f64], u: &[f64]| vec![a * x[0] + b * u[0]],
            NoiseDensity::truncated_gaussian(self.sigma, self.cutoff, 1),
            vec![UNIT_BOX],
            vec![UNIT_BOX],
            self.bounded_drift,
        )
    }

    pub fn grids(&self, n_states: usize, n_actions: usize) -> Result<(Arc<Grid>, Arc<Grid>)> {
        Ok((Arc::new(Grid::new(&[UNIT_BOX], n_states)?), Arc::new(Grid::new(&[UNIT_BOX], n_actions)?)))
    }

    /// Discretized kernel with densities w.r.t. Lebesgue measure on the state grid.
    pub fn kernel(&self, n_states: usize, n_actions: usize) -> Result<TransitionKernel> {
        let (sg, ag) = self.grids(n_states, n_actions)?;
        let lambda = GridMeasure::lebesgue(sg.clone());
        kernel_from_model(&self.model()?, &sg, &ag, &lambda)
    }
}

/// `c(x, u) = x^2 + 0.5 u^2`.
pub fn quadratic_cost(state_grid: &Arc<Grid>, action_grid: &Arc<Grid>) -> Result<CostFunction> {
    CostFunction::from_fn(state_grid.clone(), action_grid.clone(), |x, u| x[0] * x[0] + 0.5 * u[0] * u[0])
}

/// Randomized rounding of the target action `target(x)` onto the two action
/// cells whose centers bracket it; targets beyond the outer centers take the
/// outer cell.
pub fn rounding_policy<F>(state_grid: &Arc<Grid>, action_grid: &Arc<Grid>, target: F) -> Result<StationaryPolicy>
where
    F: Fn(f64) -> f64,
{
    let centers: Vec<f64> = action_grid.centers().map(|c| c[0]).collect();
    let nu = centers.len();
    StationaryPolicy::from_fn(state_grid.clone(), action_grid.clone(), |x| {
        let t = target(state_grid.center(x)[0]);
        let mut row = vec![0.0; nu];
        if t <= centers[0] {
            row[0] = 1.0;
        } else if t >= centers[nu - 1] {
            row[nu - 1] = 1.0;
        } else {
            let j = centers.partition_point(|&c| c <= t) - 1;
            let lambda = (t - centers[j]) / (centers[j + 1] - centers[j]);
            row[j] = 1.0 - lambda;
            if lambda > 0.0 {
                row[j + 1] = lambda;
            }
        }
        row
    })
}

/// The fixed reference policy: randomized rounding of `u = -0.8 x`.
pub fn reference_policy(state_grid: &Arc<Grid>, action_grid: &Arc<Grid>) -> Result<StationaryPolicy> {
    rounding_policy(state_grid, action_grid, |x| -0.8 * x)
}

/// Input measure with Lebesgue density proportional to `1 + amplitude cos(pi x)`.
pub fn cosine_psi(grid: &Arc<Grid>, amplitude: f64) -> Result<GridMeasure> {
    let lambda = GridMeasure::lebesgue(grid.clone());
    measure_from_density(|x: &[f64]| 1.0 + amplitude * (PI * x[0]).cos(), grid, &lambda)?.normalized()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::validate_h2;
    use approx::assert_abs_diff_eq;

    #[test]
    fn rounding_interpolates_between_centers() {
        let sg = Arc::new(Grid::new(&[UNIT_BOX], 4).unwrap());
        let ag = Arc::new(Grid::new(&[UNIT_BOX], 4).unwrap());
        // centers -0.75 -0.25 0.25 0.75; x = -0.25 targets 0.2
        let g = reference_policy(&sg, &ag).unwrap();
        assert_abs_diff_eq!(g.row(1)[1], 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(g.row(1)[2], 0.9, epsilon = 1e-12);
        // x = -0.75 targets 0.6
        assert_abs_diff_eq!(g.row(0)[3], 0.7, epsilon = 1e-12);
        let clipped = rounding_policy(&sg, &ag, |_| 5.0).unwrap();
        assert_eq!(clipped.row(2), &[0.0, 0.0, 0.0, 1.0]);
        let exact = rounding_policy(&sg, &ag, |_| -0.25).unwrap();
        assert_eq!(exact.row(0), &[0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn benchmark_satisfies_h2() {
        let k = BenchmarkSpec::default().kernel(32, 8).unwrap();
        let report = validate_h2(&k);
        assert!(report.majorized);
        let psi = cosine_psi(k.state_grid(), 0.5).unwrap();
        assert!(psi.has_full_support());
        assert_abs_diff_eq!(psi.total_mass(), 1.0, epsilon = 1e-12);
    }
}
