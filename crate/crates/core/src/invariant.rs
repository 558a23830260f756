//! Invariant measures of `T^gamma`, occupation measures and average costs.

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use rand::Rng;

use crate::error::{Error, Result};
use crate::kernel::{apply_policy, CostFunction, StateKernel, StationaryPolicy, TransitionKernel};
use crate::measure::{stable_sum, tv_distance, tv_weights, GridDensity, GridMeasure};
use crate::rng::{substream, Stream};
use crate::topology::{borkar_semimetric, young_distance, TestFamily};

/// TV residual target of the finite solver.
pub const FINITE_TOL: f64 = 1e-10;
/// TV residual target of density iteration.
pub const DENSITY_TOL: f64 = 1e-8;
pub const MAX_ITER: usize = 100_000;
/// Occupation measures with a larger invariance residual are rejected.
pub const OCCUPATION_TOL: f64 = 1e-6;
/// Numerical slack tolerated above the majorant density before failing.
pub const MAJORANT_SLACK: f64 = 1e-8;

const STALL_WINDOW: usize = 16;
const STALL_PROGRESS: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Uniqueness {
    Unique,
    Reducible,
    Undecided,
}

/// Cellwise comparison of density iterates with the majorant density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MajorantCheck {
    /// Iterates compared (`k >= 1`).
    pub iterates: usize,
    /// Iterate cells strictly above the majorant density.
    pub violations: usize,
    /// `min_k min_y (nu(y) - h_k(y))`; negative if any cell exceeded.
    pub min_margin: f64,
}

impl MajorantCheck {
    fn new() -> Self {
        MajorantCheck { iterates: 0, violations: 0, min_margin: f64::INFINITY }
    }

    /// Folds another solve's record into this one.
    pub fn merge(&mut self, other: &MajorantCheck) {
        self.iterates += other.iterates;
        self.violations += other.violations;
        self.min_margin = self.min_margin.min(other.min_margin);
    }

    pub fn empty() -> Self {
        Self::new()
    }

    pub fn holds(&self) -> bool {
        self.violations == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveDiagnostics {
    pub iterations: usize,
    /// `||pi T - pi||_TV` of the returned measure.
    pub residual: f64,
    pub uniqueness: Uniqueness,
    /// Averaging of successive iterates was switched on after a stall.
    pub damped: bool,
    pub majorant: Option<MajorantCheck>,
}

/// Closed communicating classes of the support digraph of `t`.
pub fn closed_classes(t: &StateKernel) -> Vec<Vec<usize>> {
    let n = t.len();
    let mut graph = DiGraph::<(), ()>::with_capacity(n, 0);
    let nodes: Vec<_> = (0..n).map(|_| graph.add_node(())).collect();
    for x in 0..n {
        for (y, &p) in t.row(x).iter().enumerate() {
            if p > 0.0 {
                graph.add_edge(nodes[x], nodes[y], ());
            }
        }
    }
    let sccs = tarjan_scc(&graph);
    let mut component = vec![0usize; n];
    for (c, scc) in sccs.iter().enumerate() {
        for v in scc {
            component[v.index()] = c;
        }
    }
    let mut closed: Vec<Vec<usize>> = sccs
        .iter()
        .enumerate()
        .filter(|(c, scc)| {
            scc.iter().all(|v| {
                let x = v.index();
                t.row(x).iter().enumerate().all(|(y, &p)| p == 0.0 || component[y] == *c)
            })
        })
        .map(|(_, scc)| {
            let mut cells: Vec<usize> = scc.iter().map(|v| v.index()).collect();
            cells.sort_unstable();
            cells
        })
        .collect();
    closed.sort();
    closed
}

fn certify(t: &StateKernel) -> Result<Uniqueness> {
    match closed_classes(t).len() {
        1 => Ok(Uniqueness::Unique),
        0 => Ok(Uniqueness::Undecided),
        k => Err(Error::NonUniqueInvariant { closed_classes: k }),
    }
}

struct Iteration {
    weights: Vec<f64>,
    iterations: usize,
    damped: bool,
}

/// Power iteration `w <- w T` from `start`; `visit` sees every iterate `k >= 1`.
///
/// Stops once the TV step falls below `tol * (1 - rho)`, with `rho` the
/// observed contraction ratio. If the step stalls for [`STALL_WINDOW`]
/// iterations the update becomes `w <- (w + w T) / 2`.
fn power_iterate<V>(t: &StateKernel, start: Vec<f64>, tol: f64, max_iter: usize, mut visit: V) -> Result<Iteration>
where
    V: FnMut(usize, &[f64]) -> Result<()>,
{
    let mut w = start;
    let mut damped = false;
    let mut prev_step = f64::INFINITY;
    let mut best = f64::INFINITY;
    let mut since_best = 0usize;
    for k in 1..=max_iter {
        let mut next = t.push_forward(&w);
        if damped {
            for (n, &o) in next.iter_mut().zip(&w) {
                *n = 0.5 * (*n + o);
            }
        }
        visit(k, &next)?;
        let step = tv_weights(&next, &w);
        w = next;
        let rho = if prev_step.is_finite() && prev_step > 0.0 { (step / prev_step).min(1.0) } else { 0.0 };
        let gap = (1.0 - rho).clamp(1e-3, 1.0);
        if step == 0.0 || step <= tol * gap {
            return Ok(Iteration { weights: w, iterations: k, damped });
        }
        prev_step = step;
        if step < best * (1.0 - STALL_PROGRESS) {
            best = step;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= STALL_WINDOW {
                if damped && step <= tol {
                    // rounding floor reached
                    return Ok(Iteration { weights: w, iterations: k, damped });
                }
                damped = true;
                best = step;
                since_best = 0;
                prev_step = f64::INFINITY;
            }
        }
    }
    Err(Error::NoConvergence { iterations: max_iter, residual: prev_step })
}

fn normalize(w: &mut [f64]) {
    let s = stable_sum(w.iter().copied());
    w.iter_mut().for_each(|v| *v /= s);
}

/// Invariant probability of a row-stochastic state kernel, by power iteration
/// from the uniform distribution.
pub fn invariant_measure_finite(t: &StateKernel, tol: f64, max_iter: usize) -> Result<(GridMeasure, SolveDiagnostics)> {
    let uniqueness = certify(t)?;
    let n = t.len();
    let it = power_iterate(t, vec![1.0 / n as f64; n], tol, max_iter, |_, _| Ok(()))?;
    let mut w = it.weights;
    normalize(&mut w);
    let residual = tv_weights(&t.push_forward(&w), &w);
    let pi = GridMeasure::new(t.grid().clone(), w)?;
    Ok((
        pi,
        SolveDiagnostics { iterations: it.iterations, residual, uniqueness, damped: it.damped, majorant: None },
    ))
}

/// Density form of the invariant measure:
/// `h_{k+1}(y) = sum_x h_k(x) psi(x) sum_u gamma(u|x) f_{x,u}(y)`, `h_0 = 1 / psi(X)`,
/// with `f` the kernel densities w.r.t. the kernel's reference `psi`.
///
/// When the kernel carries a majorant every iterate is compared with its
/// density; an excess above [`MAJORANT_SLACK`] is an error, smaller ones are
/// counted in the diagnostics.
pub fn invariant_density_iterate(
    kernel: &TransitionKernel,
    gamma: &StationaryPolicy,
    tol: f64,
    max_iter: usize,
) -> Result<(GridDensity, SolveDiagnostics)> {
    let psi = kernel.density_reference().ok_or(Error::MissingDensity)?.clone();
    let t = apply_policy(kernel, gamma)?;
    let uniqueness = certify(&t)?;
    let nu = kernel.majorant_density();
    let mut check = MajorantCheck::new();
    let psi_w = psi.weights();
    let mass = psi.total_mass();
    let start: Vec<f64> = psi_w.iter().map(|p| p / mass).collect();
    let it = power_iterate(&t, start, tol, max_iter, |k, w| {
        let Some(nu) = &nu else { return Ok(()) };
        check.iterates += 1;
        for (y, (&wy, &py)) in w.iter().zip(psi_w).enumerate() {
            if py == 0.0 {
                continue;
            }
            let h = wy / py;
            let margin = nu[y] - h;
            check.min_margin = check.min_margin.min(margin);
            if margin < 0.0 {
                check.violations += 1;
                if -margin > MAJORANT_SLACK {
                    return Err(Error::MajorantViolation { iteration: k, cell: y, excess: -margin });
                }
            }
        }
        Ok(())
    })?;
    let mut w = it.weights;
    normalize(&mut w);
    let residual = tv_weights(&t.push_forward(&w), &w);
    let values = w.iter().zip(psi_w).map(|(&v, &p)| if p > 0.0 { v / p } else { 0.0 }).collect();
    let density = GridDensity::new(psi.grid_arc().clone(), values)?;
    Ok((
        density,
        SolveDiagnostics {
            iterations: it.iterations,
            residual,
            uniqueness,
            damped: it.damped,
            majorant: nu.map(|_| check),
        },
    ))
}

/// Invariant probability of `T^gamma`: density iteration when the kernel has
/// densities, the finite solver otherwise.
pub fn solve_invariant(kernel: &TransitionKernel, gamma: &StationaryPolicy) -> Result<(GridMeasure, SolveDiagnostics)> {
    if let Some(psi) = kernel.density_reference() {
        let (h, diag) = invariant_density_iterate(kernel, gamma, DENSITY_TOL, MAX_ITER)?;
        Ok((h.to_measure(psi)?.normalized()?, diag))
    } else {
        invariant_measure_finite(&apply_policy(kernel, gamma)?, FINITE_TOL, MAX_ITER)
    }
}

/// Joint state-action measure `pi(dx) gamma(du|x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupationMeasure {
    /// Weights indexed `x * n_actions + u`.
    pub joint: Vec<f64>,
    pub marginal: GridMeasure,
    pub disintegration: StationaryPolicy,
    /// `sup_B |mu(B x U) - mu T(B)|`.
    pub residual: f64,
}

impl OccupationMeasure {
    pub fn weight(&self, x: usize, u: usize) -> f64 {
        self.joint[x * self.disintegration.n_actions() + u]
    }
}

pub fn occupation_measure(
    pi: &GridMeasure,
    gamma: &StationaryPolicy,
    kernel: &TransitionKernel,
) -> Result<OccupationMeasure> {
    if !pi.grid().same_as(gamma.state_grid()) {
        return Err(Error::GridMismatch("measure and policy grids differ"));
    }
    let t = apply_policy(kernel, gamma)?;
    let next = t.push_forward(pi.weights());
    let (mut up, mut down) = (Vec::new(), Vec::new());
    for (a, b) in pi.weights().iter().zip(&next) {
        let d = a - b;
        if d > 0.0 {
            up.push(d);
        } else {
            down.push(-d);
        }
    }
    let residual = stable_sum(up).max(stable_sum(down));
    if residual > OCCUPATION_TOL {
        return Err(Error::InvarianceViolation { residual, tolerance: OCCUPATION_TOL });
    }
    let nu = gamma.n_actions();
    let joint = pi
        .weights()
        .iter()
        .enumerate()
        .flat_map(|(x, &p)| gamma.row(x).iter().map(move |&g| p * g))
        .collect::<Vec<_>>();
    debug_assert_eq!(joint.len(), pi.weights().len() * nu);
    Ok(OccupationMeasure { joint, marginal: pi.clone(), disintegration: gamma.clone(), residual })
}

/// `<mu, c>`.
pub fn average_cost_exact(mu: &OccupationMeasure, c: &CostFunction) -> Result<f64> {
    if !c.state_grid().same_as(mu.disintegration.state_grid()) || !c.action_grid().same_as(mu.disintegration.action_grid()) {
        return Err(Error::GridMismatch("cost and occupation measure grids differ"));
    }
    Ok(stable_sum(mu.joint.iter().zip(c.values()).map(|(m, v)| m * v)))
}

/// Average cost of `gamma` from its invariant measure.
pub fn policy_cost(kernel: &TransitionKernel, gamma: &StationaryPolicy, c: &CostFunction) -> Result<(f64, SolveDiagnostics)> {
    let (pi, diag) = solve_invariant(kernel, gamma)?;
    let mu = occupation_measure(&pi, gamma, kernel)?;
    Ok((average_cost_exact(&mu, c)?, diag))
}

pub const MC_BATCHES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McOptions {
    pub horizon: u64,
    pub burn_in: u64,
    pub seed: u64,
    /// Index of the [`Stream::Mc`] sub-stream.
    pub stream: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    /// Batch-means standard error over [`MC_BATCHES`] batches.
    pub standard_error: f64,
}

fn cumulative(rows: &[f64], width: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows.len());
    for row in rows.chunks_exact(width) {
        let mut acc = 0.0;
        for &p in row {
            acc += p;
            out.push(acc);
        }
    }
    out
}

/// Inverse-CDF draw from one cumulative row; never lands on a zero-mass entry.
fn draw(cdf: &[f64], v: f64) -> usize {
    let total = *cdf.last().unwrap();
    let target = v * total;
    let i = cdf.partition_point(|&c| c <= target);
    let mut i = i.min(cdf.len() - 1);
    while i > 0 && cdf[i] == cdf[i - 1] {
        i -= 1;
    }
    i
}

/// Simulated time average of `c(x_t, u_t)` over `t in (burn_in, T]`.
///
/// The initial state is drawn uniformly; the generator is ChaCha8 on the
/// `(seed, Mc, stream)` sub-stream, so equal options give identical output.
pub fn average_cost_mc(
    kernel: &TransitionKernel,
    gamma: &StationaryPolicy,
    c: &CostFunction,
    opts: McOptions,
) -> Result<McEstimate> {
    if opts.horizon <= opts.burn_in || opts.horizon - opts.burn_in < MC_BATCHES as u64 {
        return Err(Error::InvalidParameter(format!(
            "horizon {} must exceed burn-in {} by at least {MC_BATCHES} steps",
            opts.horizon, opts.burn_in
        )));
    }
    if !kernel.state_grid().same_as(gamma.state_grid()) || !kernel.action_grid().same_as(gamma.action_grid()) {
        return Err(Error::GridMismatch("policy and kernel grids differ"));
    }
    if !c.state_grid().same_as(gamma.state_grid()) || !c.action_grid().same_as(gamma.action_grid()) {
        return Err(Error::GridMismatch("cost and policy grids differ"));
    }
    let (nx, nu) = (kernel.n_states(), kernel.n_actions());
    let policy_cdf = cumulative(gamma.rows(), nu);
    let kernel_cdf = cumulative(kernel.rows(), nx);
    let mut rng = substream(opts.seed, Stream::Mc, opts.stream);
    let mut x = rng.random_range(0..nx);
    let n = (opts.horizon - opts.burn_in) as usize;
    let mut samples = Vec::with_capacity(n);
    for t in 1..=opts.horizon {
        let u = draw(&policy_cdf[x * nu..(x + 1) * nu], rng.random::<f64>());
        if t > opts.burn_in {
            samples.push(c.value(x, u));
        }
        let row = (x * nu + u) * nx;
        x = draw(&kernel_cdf[row..row + nx], rng.random::<f64>());
    }
    let estimate = stable_sum(samples.iter().copied()) / n as f64;
    let means: Vec<f64> = (0..MC_BATCHES)
        .map(|b| {
            let (lo, hi) = (b * n / MC_BATCHES, (b + 1) * n / MC_BATCHES);
            stable_sum(samples[lo..hi].iter().copied()) / (hi - lo) as f64
        })
        .collect();
    let grand = stable_sum(means.iter().copied()) / MC_BATCHES as f64;
    let var = stable_sum(means.iter().map(|m| (m - grand) * (m - grand))) / (MC_BATCHES - 1) as f64;
    Ok(McEstimate { estimate, standard_error: (var / MC_BATCHES as f64).sqrt() })
}

/// One member of a policy sequence against its limit.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuityRow {
    pub n: usize,
    pub young_distance: f64,
    pub borkar_distance: f64,
    pub tv_invariant: f64,
    /// `J(gamma_n)` when a cost was supplied.
    pub cost: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuityTolerances {
    pub young: f64,
    pub tv: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuityTable {
    pub rows: Vec<ContinuityRow>,
    pub limit_cost: Option<f64>,
    /// Both columns below tolerance at the last row.
    pub pass: bool,
    pub majorant: Option<MajorantCheck>,
}

impl ContinuityTable {
    pub const CSV_HEADER: &'static str = "n,young_distance,borkar_distance,tv_invariant,cost";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let cost = r.cost.map(|c| c.to_string()).unwrap_or_default();
            s.push_str(&format!("{},{},{},{},{}\n", r.n, r.young_distance, r.borkar_distance, r.tv_invariant, cost));
        }
        s
    }
}

/// Pairs `d_psi(gamma_n, gamma)` with `TV(pi_{gamma_n}, pi_gamma)` along a sequence.
pub fn continuity_experiment(
    kernel: &TransitionKernel,
    sequence: &[(usize, StationaryPolicy)],
    limit: &StationaryPolicy,
    psi: &GridMeasure,
    family: &TestFamily,
    cost: Option<&CostFunction>,
    tol: ContinuityTolerances,
) -> Result<ContinuityTable> {
    let mut majorant: Option<MajorantCheck> = None;
    let mut record = |d: &SolveDiagnostics| {
        if let Some(m) = &d.majorant {
            majorant.get_or_insert_with(MajorantCheck::new).merge(m);
        }
    };
    let (pi_limit, diag) = solve_invariant(kernel, limit)?;
    record(&diag);
    let limit_cost = match cost {
        Some(c) => Some(average_cost_exact(&occupation_measure(&pi_limit, limit, kernel)?, c)?),
        None => None,
    };
    let mut rows = Vec::with_capacity(sequence.len());
    for (index, (n, gamma)) in sequence.iter().enumerate() {
        let wrap = |e: Error| Error::SequenceMember { index, source: Box::new(e) };
        let (pi, diag) = solve_invariant(kernel, gamma).map_err(wrap)?;
        record(&diag);
        let cost = match cost {
            Some(c) => Some(
                occupation_measure(&pi, gamma, kernel)
                    .and_then(|mu| average_cost_exact(&mu, c))
                    .map_err(wrap)?,
            ),
            None => None,
        };
        rows.push(ContinuityRow {
            n: *n,
            young_distance: young_distance(gamma, limit, psi, family).map_err(wrap)?.value,
            borkar_distance: borkar_semimetric(gamma, limit, family).map_err(wrap)?.value,
            tv_invariant: tv_distance(&pi, &pi_limit).map_err(wrap)?,
            cost,
        });
    }
    let pass = rows.last().is_some_and(|r| r.young_distance < tol.young && r.tv_invariant < tol.tv);
    Ok(ContinuityTable { rows, limit_cost, pass, majorant })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{kernel_from_model, mix_policies, AdditiveNoiseModel, NoiseDensity};
    use crate::measure::Grid;
    use std::sync::Arc;
    use crate::topology::default_test_family;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn finite_grid(n: usize) -> Result<Arc<Grid>> {
        Ok(Arc::new(Grid::finite(n)?))
    }

    fn two_state() -> StateKernel {
        StateKernel::from_matrix(&[vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap()
    }

    /// The 2-state chain with two actions that both follow the same rows.
    fn two_state_controlled() -> TransitionKernel {
        let sg = finite_grid(2).unwrap();
        let ag = finite_grid(2).unwrap();
        let rows = [[0.9, 0.1], [0.2, 0.8]];
        TransitionKernel::from_fn(sg, ag, |x, _| rows[x].to_vec()).unwrap()
    }

    /// Direct solve of `pi (T - I) = 0`, `sum pi = 1`.
    fn linear_solve(t: &StateKernel) -> Vec<f64> {
        let n = t.len();
        let mut a = nalgebra::DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] = t.row(j)[i] - if i == j { 1.0 } else { 0.0 };
            }
        }
        for j in 0..n {
            a[(n - 1, j)] = 1.0;
        }
        let mut b = nalgebra::DVector::<f64>::zeros(n);
        b[n - 1] = 1.0;
        a.lu().solve(&b).unwrap().iter().copied().collect()
    }

    #[test]
    fn finite_examples() {
        let t = StateKernel::from_matrix(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let (pi, d) = invariant_measure_finite(&t, FINITE_TOL, MAX_ITER).unwrap();
        assert_eq!(pi.weights(), &[0.5, 0.5]);
        assert_eq!(d.uniqueness, Uniqueness::Unique);

        let (pi, d) = invariant_measure_finite(&two_state(), FINITE_TOL, MAX_ITER).unwrap();
        assert_abs_diff_eq!(pi.weights()[0], 2.0 / 3.0, epsilon = 1e-10);
        assert_abs_diff_eq!(pi.weights()[1], 1.0 / 3.0, epsilon = 1e-10);
        assert!(d.residual <= FINITE_TOL);
        assert!(!d.damped);

        let id = StateKernel::from_matrix(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(
            invariant_measure_finite(&id, FINITE_TOL, MAX_ITER),
            Err(Error::NonUniqueInvariant { closed_classes: 2 })
        );
    }

    #[test]
    fn transient_states_are_not_closed() {
        let t = StateKernel::from_matrix(&[vec![0.5, 0.5, 0.0], vec![0.0, 0.0, 1.0], vec![0.0, 1.0, 0.0]]).unwrap();
        assert_eq!(closed_classes(&t), vec![vec![1, 2]]);
    }

    #[test]
    fn periodic_chain_switches_to_damping() {
        let t = StateKernel::from_matrix(&[vec![0.0, 1.0, 0.0], vec![0.5, 0.0, 0.5], vec![0.0, 1.0, 0.0]]).unwrap();
        let (pi, d) = invariant_measure_finite(&t, FINITE_TOL, MAX_ITER).unwrap();
        assert!(d.damped);
        let expected = [0.25, 0.5, 0.25];
        for (a, b) in pi.weights().iter().zip(expected) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn iteration_budget_is_enforced() {
        let t = StateKernel::from_matrix(&[vec![0.999, 0.001], vec![0.001, 0.999]]).unwrap();
        let skewed = StateKernel::from_matrix(&[vec![0.9999, 0.0001], vec![0.0002, 0.9998]]).unwrap();
        assert!(invariant_measure_finite(&t, FINITE_TOL, 3).is_ok()); // uniform start is already invariant
        assert!(matches!(
            invariant_measure_finite(&skewed, FINITE_TOL, 10),
            Err(Error::NoConvergence { iterations: 10, .. })
        ));
    }

    fn benchmark_kernel(n: usize, sigma: f64) -> TransitionKernel {
        let model = AdditiveNoiseModel::new(
            |x: &[f64], u: &[f64]| vec![0.5 * x[0] + 0.5 * u[0]],
            NoiseDensity::truncated_gaussian(sigma, 3.0, 1),
            vec![(-1.0, 1.0)],
            vec![(-1.0, 1.0)],
            true,
        )
        .unwrap();
        let sg = Arc::new(Grid::new(&[(-1.0, 1.0)], n).unwrap());
        let ag = Arc::new(Grid::new(&[(-1.0, 1.0)], 8).unwrap());
        let lambda = GridMeasure::lebesgue(sg.clone());
        kernel_from_model(&model, &sg, &ag, &lambda).unwrap()
    }

    #[test]
    fn density_iteration_matches_finite_solver() {
        let k = benchmark_kernel(64, 0.3);
        let gamma = StationaryPolicy::uniform(k.state_grid().clone(), k.action_grid().clone());
        let (h, d) = invariant_density_iterate(&k, &gamma, DENSITY_TOL, MAX_ITER).unwrap();
        let m = d.majorant.unwrap();
        assert!(m.iterates >= 1 && m.holds());
        let via_density = h.to_measure(k.density_reference().unwrap()).unwrap().normalized().unwrap();
        let (pi, _) = invariant_measure_finite(&apply_policy(&k, &gamma).unwrap(), FINITE_TOL, MAX_ITER).unwrap();
        assert!(tv_distance(&via_density, &pi).unwrap() <= 1e-8);
        // one more step moves it by at most the tolerance
        let t = apply_policy(&k, &gamma).unwrap();
        assert!(tv_weights(&t.push_forward(via_density.weights()), via_density.weights()) <= DENSITY_TOL);
    }

    #[test]
    fn state_independent_density_converges_in_one_step() {
        let sg = finite_grid(3).unwrap();
        let ag = finite_grid(2).unwrap();
        let f = vec![0.2, 0.3, 0.5];
        let k = TransitionKernel::from_fn(sg.clone(), ag.clone(), |_, _| f.clone())
            .unwrap()
            .with_density_reference(GridMeasure::new(sg.clone(), vec![1.0; 3]).unwrap())
            .unwrap();
        let gamma = StationaryPolicy::uniform(sg, ag);
        let (h, d) = invariant_density_iterate(&k, &gamma, DENSITY_TOL, MAX_ITER).unwrap();
        assert!(d.iterations <= 2);
        for (a, b) in h.values().iter().zip(&f) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-15);
        }
    }

    #[test]
    fn density_iteration_needs_densities() {
        let k = two_state_controlled();
        let gamma = StationaryPolicy::uniform(k.state_grid().clone(), k.action_grid().clone());
        assert_eq!(invariant_density_iterate(&k, &gamma, DENSITY_TOL, 10).unwrap_err(), Error::MissingDensity);
    }

    #[test]
    fn occupation_examples() {
        let k = two_state_controlled();
        let gamma = StationaryPolicy::uniform(k.state_grid().clone(), k.action_grid().clone());
        let (pi, _) = solve_invariant(&k, &gamma).unwrap();
        let mu = occupation_measure(&pi, &gamma, &k).unwrap();
        let expected = [1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0];
        for (a, b) in mu.joint.iter().zip(expected) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-10);
        }
        assert!(mu.residual <= 1e-8);

        let c1 = CostFunction::constant(k.state_grid().clone(), k.action_grid().clone(), 1.0).unwrap();
        let c0 = CostFunction::constant(k.state_grid().clone(), k.action_grid().clone(), 0.0).unwrap();
        let cx = CostFunction::from_fn(k.state_grid().clone(), k.action_grid().clone(), |x, _| x[0]).unwrap();
        assert_abs_diff_eq!(average_cost_exact(&mu, &c1).unwrap(), 1.0, epsilon = 1e-12);
        assert_eq!(average_cost_exact(&mu, &c0).unwrap(), 0.0);
        assert_abs_diff_eq!(average_cost_exact(&mu, &cx).unwrap(), 1.0 / 3.0, epsilon = 1e-10);

        let wrong = GridMeasure::point_mass(k.state_grid().clone(), 0).unwrap();
        assert!(matches!(occupation_measure(&wrong, &gamma, &k), Err(Error::InvarianceViolation { .. })));
    }

    #[test]
    fn absorbing_point_mass_occupation() {
        let sg = finite_grid(2).unwrap();
        let ag = finite_grid(2).unwrap();
        let k = TransitionKernel::from_fn(sg.clone(), ag.clone(), |_, u| if u == 0 { vec![1.0, 0.0] } else { vec![0.0, 1.0] }).unwrap();
        let gamma = StationaryPolicy::deterministic(sg.clone(), ag, &[0, 0]).unwrap();
        let pi = GridMeasure::point_mass(sg, 0).unwrap();
        let mu = occupation_measure(&pi, &gamma, &k).unwrap();
        assert_eq!(mu.joint, vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn mc_examples() {
        let k = two_state_controlled();
        let (sg, ag) = (k.state_grid().clone(), k.action_grid().clone());
        let gamma = StationaryPolicy::uniform(sg.clone(), ag.clone());
        let opts = McOptions { horizon: 1_000_000, burn_in: 1000, seed: 11, stream: 0 };
        let c1 = CostFunction::constant(sg.clone(), ag.clone(), 1.0).unwrap();
        let one = average_cost_mc(&k, &gamma, &c1, opts).unwrap();
        assert_eq!(one, McEstimate { estimate: 1.0, standard_error: 0.0 });
        let cx = CostFunction::from_fn(sg, ag, |x, _| x[0]).unwrap();
        let a = average_cost_mc(&k, &gamma, &cx, opts).unwrap();
        let b = average_cost_mc(&k, &gamma, &cx, opts).unwrap();
        assert_eq!(a.estimate.to_bits(), b.estimate.to_bits());
        assert!((a.estimate - 1.0 / 3.0).abs() <= 3.0 * a.standard_error, "{a:?}");
        assert!(average_cost_mc(&k, &gamma, &cx, McOptions { horizon: 10, burn_in: 10, seed: 0, stream: 0 }).is_err());
    }

    #[test]
    fn draw_skips_zero_mass_entries() {
        let cdf = cumulative(&[0.5, 0.0, 0.5, 0.0], 4);
        assert_eq!(draw(&cdf, 0.0), 0);
        assert_eq!(draw(&cdf, 0.49), 0);
        assert_eq!(draw(&cdf, 0.5), 2);
        assert_eq!(draw(&cdf, 0.999999), 2);
    }

    fn two_state_mdp() -> (TransitionKernel, StationaryPolicy, StationaryPolicy) {
        let sg = finite_grid(2).unwrap();
        let ag = finite_grid(2).unwrap();
        let k = TransitionKernel::from_fn(sg.clone(), ag.clone(), |x, u| match (x, u) {
            (0, 0) => vec![0.9, 0.1],
            (0, _) => vec![0.3, 0.7],
            (_, 0) => vec![0.2, 0.8],
            _ => vec![0.6, 0.4],
        })
        .unwrap();
        let g = StationaryPolicy::deterministic(sg.clone(), ag.clone(), &[0, 0]).unwrap();
        let g2 = StationaryPolicy::deterministic(sg, ag, &[1, 1]).unwrap();
        (k, g, g2)
    }

    #[test]
    fn continuity_examples() {
        let (k, g, g2) = two_state_mdp();
        let psi = GridMeasure::uniform(k.state_grid().clone());
        let fam = default_test_family(k.state_grid(), k.action_grid(), 64).unwrap();
        let tol = ContinuityTolerances { young: 1e-3, tv: 1e-2 };
        let constant: Vec<_> = (1..=4).map(|n| (n, g.clone())).collect();
        let table = continuity_experiment(&k, &constant, &g, &psi, &fam, None, tol).unwrap();
        assert!(table.rows.iter().all(|r| r.young_distance == 0.0 && r.tv_invariant == 0.0));
        assert!(table.pass);

        let seq: Vec<_> = (1..=10).map(|i| 1usize << i).map(|n| (n, mix_policies(&g, &g2, 1.0 / n as f64).unwrap())).collect();
        let table = continuity_experiment(&k, &seq, &g, &psi, &fam, None, tol).unwrap();
        // closed form: the chain under the mixture has p01 = 0.1 + 0.6 a, p10 = 0.2 + 0.4 a
        let pi0 = |a: f64| (0.2 + 0.4 * a) / (0.3 + 1.0 * a);
        for (row, (n, _)) in table.rows.iter().zip(&seq) {
            let expected = (pi0(1.0 / *n as f64) - pi0(0.0)).abs();
            assert_abs_diff_eq!(row.tv_invariant, expected, epsilon = 1e-9);
        }
        assert!(table.rows.windows(2).all(|w| w[1].young_distance < w[0].young_distance));
        assert!(table.rows.windows(2).all(|w| w[1].tv_invariant < w[0].tv_invariant));
        assert!(table.pass);
        assert!(table.to_csv().starts_with("n,young_distance,borkar_distance,tv_invariant,cost\n2,"));
    }

    #[test]
    fn continuity_reports_offending_member() {
        let sg = finite_grid(2).unwrap();
        let ag = finite_grid(2).unwrap();
        let k = TransitionKernel::from_fn(sg.clone(), ag.clone(), |x, u| {
            if u == 0 {
                vec![0.5, 0.5]
            } else {
                let mut r = vec![0.0, 0.0];
                r[x] = 1.0;
                r
            }
        })
        .unwrap();
        let good = StationaryPolicy::deterministic(sg.clone(), ag.clone(), &[0, 0]).unwrap();
        let stuck = StationaryPolicy::deterministic(sg.clone(), ag.clone(), &[1, 1]).unwrap();
        let psi = GridMeasure::uniform(sg.clone());
        let fam = default_test_family(&sg, &ag, 8).unwrap();
        let tol = ContinuityTolerances { young: 1e-3, tv: 1e-2 };
        let err = continuity_experiment(&k, &[(1, good.clone()), (2, stuck)], &good, &psi, &fam, None, tol).unwrap_err();
        match err {
            Error::SequenceMember { index, source } => {
                assert_eq!(index, 1);
                assert_eq!(*source, Error::NonUniqueInvariant { closed_classes: 2 });
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    fn random_kernel(n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(prop::collection::vec(0.01f64..1.0, n), n).prop_map(|mut m| {
            for r in &mut m {
                let s: f64 = r.iter().sum();
                r.iter_mut().for_each(|p| *p /= s);
            }
            m
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn power_iteration_matches_linear_solve(m in (2usize..=16).prop_flat_map(random_kernel)) {
            let t = StateKernel::from_matrix(&m).unwrap();
            let (pi, d) = invariant_measure_finite(&t, FINITE_TOL, MAX_ITER).unwrap();
            prop_assert!(d.residual <= FINITE_TOL);
            let direct = linear_solve(&t);
            prop_assert!(tv_weights(pi.weights(), &direct) <= 1e-10);
        }

        #[test]
        fn occupation_identity_on_singletons(m in (2usize..=8).prop_flat_map(random_kernel)) {
            let n = m.len();
            let sg = finite_grid(n).unwrap();
            let ag = finite_grid(1).unwrap();
            let k = TransitionKernel::from_fn(sg.clone(), ag.clone(), |x, _| m[x].clone()).unwrap();
            let gamma = StationaryPolicy::uniform(sg, ag);
            let (pi, _) = solve_invariant(&k, &gamma).unwrap();
            let mu = occupation_measure(&pi, &gamma, &k).unwrap();
            let t = apply_policy(&k, &gamma).unwrap();
            let next = t.push_forward(&mu.joint);
            for y in 0..n {
                prop_assert!((mu.joint[y] - next[y]).abs() <= 1e-8);
            }
        }
    }
}
