//! Uniform nearest-neighbor quantizers and the policy transformations built on
//! them: quantization, mollification and derandomization.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::invariant::{average_cost_exact, occupation_measure, solve_invariant, MajorantCheck, SolveDiagnostics};
use crate::kernel::{CostFunction, StationaryPolicy, TransitionKernel};
use crate::measure::{stable_sum, tv_distance, Grid, GridMeasure};
use crate::topology::{young_distance, TestFamily};

/// Codebook of `ceil(m * side)` sub-box midpoints per axis, and the
/// nearest-codepoint map of the grid cells (ties to the lowest index).
#[derive(Debug, Clone, PartialEq)]
pub struct Quantizer {
    grid: Arc<Grid>,
    resolution: usize,
    axes: Vec<Vec<f64>>,
    codebook: Vec<Vec<f64>>,
    assignment: Vec<usize>,
    representatives: Vec<Option<usize>>,
}

/// Distances closer than this, relative to `1 + |t|`, count as ties.
const TIE_RTOL: f64 = 1e-12;

fn nearest_on_axis(points: &[f64], t: f64) -> usize {
    let tie = TIE_RTOL * (1.0 + t.abs());
    let mut best = 0;
    let mut best_d = (t - points[0]).abs();
    for (i, &p) in points.iter().enumerate().skip(1) {
        let d = (t - p).abs();
        if d < best_d - tie {
            best = i;
            best_d = d;
        }
        if p > t {
            break;
        }
    }
    best
}

impl Quantizer {
    pub fn new(grid: Arc<Grid>, resolution: usize) -> Result<Quantizer> {
        if resolution == 0 {
            return Err(Error::InvalidParameter("quantizer resolution must be at least 1".into()));
        }
        let axes: Vec<Vec<f64>> = grid
            .bounds()
            .iter()
            .map(|&(lo, hi)| {
                let side = hi - lo;
                // guard against m * side landing a hair above an integer
                let k = ((resolution as f64 * side) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
                let h = side / k as f64;
                (0..k).map(|i| lo + (i as f64 + 0.5) * h).collect()
            })
            .collect();
        let mut codebook = Vec::new();
        let mut multi = vec![0usize; axes.len()];
        'outer: loop {
            codebook.push(multi.iter().zip(&axes).map(|(&i, a)| a[i]).collect::<Vec<f64>>());
            for a in (0..axes.len()).rev() {
                multi[a] += 1;
                if multi[a] < axes[a].len() {
                    continue 'outer;
                }
                multi[a] = 0;
            }
            break;
        }
        let mut q = Quantizer {
            grid: grid.clone(),
            resolution,
            axes,
            codebook,
            assignment: Vec::new(),
            representatives: Vec::new(),
        };
        q.assignment = grid.centers().map(|c| q.quantize_point(c)).collect();
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); q.codebook.len()];
        for (cell, &i) in q.assignment.iter().enumerate() {
            members[i].push(cell);
        }
        let mut reps = Vec::with_capacity(q.codebook.len());
        for (i, cells) in members.iter().enumerate() {
            if cells.is_empty() {
                reps.push(None);
                continue;
            }
            let z = &q.codebook[i];
            let containing = grid.nearest_cell(z).map_err(|_| Error::CodepointLookup { codepoint: i })?;
            let rep = if q.assignment[containing] == i {
                containing
            } else {
                // the cell holding z belongs to a neighbouring set; use the closest member
                let d2 = |c: usize| -> f64 { grid.center(c).iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum() };
                let mut best = cells[0];
                for &c in &cells[1..] {
                    if d2(c) < d2(best) {
                        best = c;
                    }
                }
                best
            };
            reps.push(Some(rep));
        }
        q.representatives = reps;
        Ok(q)
    }

    /// Index of the nearest codepoint; coordinates are separable, so the
    /// nearest point is found axis by axis and ties fall to the lower index.
    pub fn quantize_point(&self, z: &[f64]) -> usize {
        let mut index = 0;
        for (a, points) in self.axes.iter().enumerate() {
            index = index * points.len() + nearest_on_axis(points, z[a]);
        }
        index
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn codebook(&self) -> &[Vec<f64>] {
        &self.codebook
    }

    pub fn len(&self) -> usize {
        self.codebook.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codebook.is_empty()
    }

    /// Codepoint index of every grid cell.
    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// The sets `S_i`: cells mapped to codepoint `i`, in cell order.
    pub fn partition(&self) -> Vec<Vec<usize>> {
        let mut sets = vec![Vec::new(); self.codebook.len()];
        for (cell, &i) in self.assignment.iter().enumerate() {
            sets[i].push(cell);
        }
        sets
    }

    /// Cell whose row stands for codepoint `i`: the cell containing `z_i`,
    /// or the member of `S_i` nearest to `z_i` when that cell lies in another set.
    pub fn representative(&self, i: usize) -> Option<usize> {
        self.representatives[i]
    }

    /// Per-axis codepoint spacing.
    pub fn spacing(&self) -> Vec<f64> {
        self.grid
            .bounds()
            .iter()
            .zip(&self.axes)
            .map(|((lo, hi), a)| (hi - lo) / a.len() as f64)
            .collect()
    }
}

pub fn state_quantizer(grid: &Arc<Grid>, m: usize) -> Result<Quantizer> {
    Quantizer::new(grid.clone(), m)
}

pub fn action_quantizer(grid: &Arc<Grid>, m: usize) -> Result<Quantizer> {
    Quantizer::new(grid.clone(), m)
}

/// A policy constant on every state bin with action mass on codepoint cells.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedPolicy {
    pub policy: StationaryPolicy,
    /// State bin of every state cell.
    pub bins: Vec<usize>,
}

impl QuantizedPolicy {
    /// Cells of each nonempty bin, in cell order.
    pub fn bin_cells(&self) -> Vec<Vec<usize>> {
        let n = self.bins.iter().max().map_or(0, |b| b + 1);
        let mut sets = vec![Vec::new(); n];
        for (cell, &b) in self.bins.iter().enumerate() {
            sets[b].push(cell);
        }
        sets.retain(|s| !s.is_empty());
        sets
    }
}

/// Every cell of `S_i` gets the row of `gamma` at the representative cell of
/// `z_i`, with each action cell's mass moved to its codepoint's cell.
pub fn quantize_policy(gamma: &StationaryPolicy, qm: &Quantizer, qa: &Quantizer) -> Result<QuantizedPolicy> {
    if !qm.grid.same_as(gamma.state_grid()) || !qa.grid.same_as(gamma.action_grid()) {
        return Err(Error::GridMismatch("quantizers are built on other grids"));
    }
    let nu = gamma.n_actions();
    let action_target: Vec<usize> = qa
        .assignment
        .iter()
        .map(|&j| qa.representative(j).ok_or(Error::CodepointLookup { codepoint: j }))
        .collect::<Result<_>>()?;
    let mut bin_rows: Vec<Option<Vec<f64>>> = vec![None; qm.len()];
    for (i, slot) in bin_rows.iter_mut().enumerate() {
        let Some(rep) = qm.representative(i) else { continue };
        let mut row = vec![0.0; nu];
        for (u, &p) in gamma.row(rep).iter().enumerate() {
            row[action_target[u]] += p;
        }
        *slot = Some(row);
    }
    let mut rows = Vec::with_capacity(gamma.rows().len());
    for &i in qm.assignment() {
        rows.extend_from_slice(bin_rows[i].as_ref().ok_or(Error::CodepointLookup { codepoint: i })?);
    }
    let policy = StationaryPolicy::new(gamma.state_grid().clone(), gamma.action_grid().clone(), rows)?;
    Ok(QuantizedPolicy { policy, bins: qm.assignment().to_vec() })
}

/// Row at `x` becomes the average of all rows weighted by
/// `exp(-|x - x'|^2 / (2 sigma^2))`; `sigma = 0` returns `gamma`.
pub fn mollify_policy(gamma: &StationaryPolicy, sigma: f64) -> Result<StationaryPolicy> {
    if !(sigma >= 0.0) {
        return Err(Error::InvalidParameter(format!("mollifier width {sigma} must be nonnegative")));
    }
    if sigma == 0.0 {
        return Ok(gamma.clone());
    }
    let grid = gamma.state_grid();
    let (nx, nu) = (gamma.n_states(), gamma.n_actions());
    let inv = 1.0 / (2.0 * sigma * sigma);
    let mut rows = vec![0.0; nx * nu];
    let mut weights = vec![0.0; nx];
    for x in 0..nx {
        let cx = grid.center(x);
        for (y, w) in weights.iter_mut().enumerate() {
            let d2: f64 = cx.iter().zip(grid.center(y)).map(|(a, b)| (a - b) * (a - b)).sum();
            *w = (-d2 * inv).exp();
        }
        let total = stable_sum(weights.iter().copied());
        let out = &mut rows[x * nu..(x + 1) * nu];
        for (u, o) in out.iter_mut().enumerate() {
            *o = stable_sum(weights.iter().enumerate().map(|(y, w)| w * gamma.row(y)[u])) / total;
        }
    }
    StationaryPolicy::new(grid.clone(), gamma.action_grid().clone(), rows)
}

/// Largest-remainder apportionment of `cells` among `probs`; ties go to the lower index.
fn apportion(probs: &[f64], cells: usize) -> Vec<usize> {
    let quotas: Vec<f64> = probs.iter().map(|p| p * cells as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (quotas[a] - quotas[a].floor(), quotas[b] - quotas[b].floor());
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().take(cells.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Deterministic policy on the `r`-fold refined grid: the cells of every bin
/// are split, in cell order, into contiguous groups with cell counts
/// proportional to the bin's action probabilities (largest remainder), and
/// each group takes the point mass on its action.
///
/// Count proportions equal mass proportions for any input measure with
/// constant density inside each refined bin.
pub fn derandomize(qp: &QuantizedPolicy, r: usize) -> Result<StationaryPolicy> {
    if r == 0 {
        return Err(Error::InvalidParameter("refinement factor must be at least 1".into()));
    }
    let coarse = qp.policy.state_grid();
    let fine = Arc::new(coarse.refine(r)?);
    let nu = qp.policy.n_actions();
    let fine_bins: Vec<usize> = (0..fine.len()).map(|c| qp.bins[coarse.parent_of(&fine, c)]).collect();
    let n_bins = qp.bins.iter().max().map_or(0, |b| b + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_bins];
    let mut bin_row: Vec<Option<usize>> = vec![None; n_bins];
    for (cell, &b) in fine_bins.iter().enumerate() {
        members[b].push(cell);
        bin_row[b].get_or_insert(coarse.parent_of(&fine, cell));
    }
    let mut actions = vec![0usize; fine.len()];
    for (b, cells) in members.iter().enumerate() {
        let Some(parent) = bin_row[b] else { continue };
        let row = qp.policy.row(parent);
        let support: Vec<usize> = (0..nu).filter(|&u| row[u] > 0.0).collect();
        if cells.len() < support.len() {
            return Err(Error::InsufficientCells { bin: b, cells: cells.len(), actions: support.len() });
        }
        let probs: Vec<f64> = support.iter().map(|&u| row[u]).collect();
        let counts = apportion(&probs, cells.len());
        let mut next = cells.iter();
        for (&u, &k) in support.iter().zip(&counts) {
            for &cell in next.by_ref().take(k) {
                actions[cell] = u;
            }
        }
    }
    StationaryPolicy::deterministic(fine, qp.policy.action_grid().clone(), &actions)
}

/// Lifts a quantized policy to the `r`-fold refined grid, bins included.
pub fn lift_quantized(qp: &QuantizedPolicy, r: usize) -> Result<QuantizedPolicy> {
    let coarse = qp.policy.state_grid();
    let fine = Arc::new(coarse.refine(r)?);
    let policy = qp.policy.lift_to(&fine)?;
    let bins = (0..fine.len()).map(|c| qp.bins[coarse.parent_of(&fine, c)]).collect();
    Ok(QuantizedPolicy { policy, bins })
}

/// Every value at most `(1 + slack)` times its predecessor, or below `floor`.
pub fn non_increasing_with_slack(values: &[f64], slack: f64, floor: f64) -> bool {
    values.windows(2).all(|w| w[1] <= (1.0 + slack) * w[0] || w[1] <= floor)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub m: usize,
    pub big_m: usize,
    pub young_distance: f64,
    pub tv_invariant: f64,
    pub cost_gap: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepCriteria {
    /// Allowed relative increase between rungs.
    pub slack: f64,
    /// Values below this count as converged when checking monotonicity.
    pub floor: f64,
    /// Young distance bound at the last rung.
    pub young_tol: f64,
    /// `cost_gap / |J_ref|` bound at the last rung.
    pub relative_cost_tol: f64,
}

impl Default for SweepCriteria {
    fn default() -> Self {
        SweepCriteria { slack: 0.1, floor: 1e-12, young_tol: 1e-3, relative_cost_tol: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub reference_cost: f64,
    pub majorant: Option<MajorantCheck>,
}

impl SweepTable {
    pub const CSV_HEADER: &'static str = "m,M,young_dist,tv_invariant,cost_gap";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!("{},{},{},{},{}\n", r.m, r.big_m, r.young_distance, r.tv_invariant, r.cost_gap));
        }
        s
    }

    pub fn relative_cost_gap(&self) -> Option<f64> {
        self.rows.last().map(|r| r.cost_gap / self.reference_cost.abs())
    }

    /// Monotone columns with slack, and tolerances met at the last rung.
    pub fn verdict(&self, criteria: &SweepCriteria) -> bool {
        let column = |f: fn(&SweepRow) -> f64| -> Vec<f64> { self.rows.iter().map(f).collect() };
        let monotone = [column(|r| r.young_distance), column(|r| r.tv_invariant), column(|r| r.cost_gap)]
            .iter()
            .all(|c| non_increasing_with_slack(c, criteria.slack, criteria.floor));
        let last = match self.rows.last() {
            Some(r) => r,
            None => return false,
        };
        let relative = if self.reference_cost == 0.0 { last.cost_gap } else { last.cost_gap / self.reference_cost.abs() };
        monotone && last.young_distance < criteria.young_tol && relative < criteria.relative_cost_tol
    }
}

fn merge_majorant(acc: &mut Option<MajorantCheck>, diag: &SolveDiagnostics) {
    if let Some(m) = &diag.majorant {
        acc.get_or_insert_with(MajorantCheck::empty).merge(m);
    }
}

/// Quantizes `gamma_ref` at every `(m, M)` rung and compares it with the
/// reference: Young distance at `psi`, TV of invariant measures, cost gap.
pub fn quantization_sweep(
    kernel: &TransitionKernel,
    gamma_ref: &StationaryPolicy,
    cost: &CostFunction,
    ladder: &[(usize, usize)],
    psi: &GridMeasure,
    family: &TestFamily,
) -> Result<SweepTable> {
    let mut majorant = None;
    let (pi_ref, diag) = solve_invariant(kernel, gamma_ref)?;
    merge_majorant(&mut majorant, &diag);
    let reference_cost = average_cost_exact(&occupation_measure(&pi_ref, gamma_ref, kernel)?, cost)?;
    let mut rows = Vec::with_capacity(ladder.len());
    for &(m, big_m) in ladder {
        let qm = state_quantizer(kernel.state_grid(), m)?;
        let qa = action_quantizer(kernel.action_grid(), big_m)?;
        let qp = quantize_policy(gamma_ref, &qm, &qa)?;
        let (pi, diag) = solve_invariant(kernel, &qp.policy)?;
        merge_majorant(&mut majorant, &diag);
        let j = average_cost_exact(&occupation_measure(&pi, &qp.policy, kernel)?, cost)?;
        rows.push(SweepRow {
            m,
            big_m,
            young_distance: young_distance(&qp.policy, gamma_ref, psi, family)?.value,
            tv_invariant: tv_distance(&pi, &pi_ref)?,
            cost_gap: (j - reference_cost).abs(),
            cost: j,
        });
    }
    Ok(SweepTable { rows, reference_cost, majorant })
}

/// Best deterministic policy among those constant on the bins of `qm` with
/// values in the codebook cells of `qa`, by exhaustive search. Ties go to the
/// first policy in lexicographic bin order.
pub fn best_quantized_deterministic(
    kernel: &TransitionKernel,
    qm: &Quantizer,
    qa: &Quantizer,
    cost: &CostFunction,
    max_candidates: usize,
) -> Result<(QuantizedPolicy, f64)> {
    let bins: Vec<usize> = (0..qm.len()).filter(|&i| qm.representative(i).is_some()).collect();
    let actions: Vec<usize> = (0..qa.len()).filter_map(|j| qa.representative(j)).collect();
    let total = (actions.len() as f64).powi(bins.len() as i32);
    if total > max_candidates as f64 {
        return Err(Error::InvalidParameter(format!("{total} candidate policies exceed the cap of {max_candidates}")));
    }
    let mut choice = vec![0usize; bins.len()];
    let mut bin_index = vec![0usize; qm.len()];
    for (k, &b) in bins.iter().enumerate() {
        bin_index[b] = k;
    }
    let mut best: Option<(Vec<usize>, f64)> = None;
    loop {
        let per_cell: Vec<usize> = qm.assignment().iter().map(|&b| actions[choice[bin_index[b]]]).collect();
        let gamma = StationaryPolicy::deterministic(kernel.state_grid().clone(), kernel.action_grid().clone(), &per_cell)?;
        // reducible candidates are skipped
        if let Ok((pi, _)) = solve_invariant(kernel, &gamma) {
            let j = average_cost_exact(&occupation_measure(&pi, &gamma, kernel)?, cost)?;
            if best.as_ref().is_none_or(|(_, b)| j < *b) {
                best = Some((per_cell, j));
            }
        }
        let mut k = bins.len();
        loop {
            if k == 0 {
                let (cells, j) = best.ok_or_else(|| Error::InvalidParameter("no candidate has a unique invariant measure".into()))?;
                let policy = StationaryPolicy::deterministic(kernel.state_grid().clone(), kernel.action_grid().clone(), &cells)?;
                return Ok((QuantizedPolicy { policy, bins: qm.assignment().to_vec() }, j));
            }
            k -= 1;
            choice[k] += 1;
            if choice[k] < actions.len() {
                break;
            }
            choice[k] = 0;
        }
    }
}
