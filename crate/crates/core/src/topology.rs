//! Computable distances between stationary policies.
//!
//! Young convergence at an input measure `psi` is weak convergence of the joint
//! measures `psi(dx) gamma_n(du|x)`. Against a countable measure-determining
//! family `{g_m}` it is metrized by
//!
//! ```text
//! d(g1, g2) = sum_m 2^-m  D_m / (1 + D_m),   D_m = | <psi (g1 - g2), g_m> |
//! ```
//!
//! The Borkar (weak*) topology tests the same signed product measures against
//! `f_k(x) lambda(dx)` for integrable `f_k` instead of a fixed input measure;
//! [`borkar_semimetric`] sums the analogous double series over `(k, m)`.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::kernel::StationaryPolicy;
use crate::measure::{rn_derivative, stable_sum, Grid, GridKind, GridMeasure};

/// Default number of terms kept from each test family.
pub const DEFAULT_DEPTH: usize = 64;

/// Which `g_m` enumeration a family uses.
#[derive(Debug, Clone, PartialEq)]
pub enum GFamilyKind {
    /// `prod_j cos(pi k_j t_j)` over coordinates rescaled to `[0, 1]`,
    /// multi-indices `k` in order of total degree, then lexicographic.
    Cosine(Vec<Vec<u32>>),
    /// Indicators of (state cell, action cell) pairs in lexicographic order.
    CellPairs,
    /// Caller-supplied values.
    Custom,
}

/// Truncated test families `{g_m}` on state-action pairs and `{f_k}` on states.
#[derive(Debug, Clone)]
pub struct TestFamily {
    state_grid: Arc<Grid>,
    action_grid: Arc<Grid>,
    kind: GFamilyKind,
    g_values: Vec<Vec<f64>>,
    g_bound: f64,
    g_exhaustive: bool,
    f_values: Vec<Vec<f64>>,
    f_l1_norms: Vec<f64>,
    f_exhaustive: bool,
}

fn degree_ordered_indices(dim: usize, count: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::with_capacity(count);
    let mut degree = 0u32;
    while out.len() < count {
        // all k with |k| = degree, lexicographic
        let mut k = vec![0u32; dim];
        k[dim - 1] = degree;
        let mut level = Vec::new();
        fn rec(pos: usize, remaining: u32, k: &mut Vec<u32>, level: &mut Vec<Vec<u32>>) {
            if pos == k.len() - 1 {
                k[pos] = remaining;
                level.push(k.clone());
                return;
            }
            for v in 0..=remaining {
                k[pos] = v;
                rec(pos + 1, remaining - v, k, level);
            }
        }
        rec(0, degree, &mut k, &mut level);
        for idx in level {
            if out.len() == count {
                break;
            }
            out.push(idx);
        }
        degree += 1;
    }
    out
}

/// Cells of the dyadic sub-boxes of a grid: level `l` splits every axis into
/// `2^l` index ranges. Stops after the first level made of single cells.
fn dyadic_boxes(grid: &Grid, count: usize) -> (Vec<Vec<usize>>, bool) {
    let n = grid.cells_per_axis();
    let dim = grid.dim();
    let mut boxes = Vec::new();
    let mut level = 0u32;
    loop {
        let pieces = 1usize << level;
        let ranges: Vec<(usize, usize)> = (0..pieces)
            .map(|j| (j * n / pieces, (j + 1) * n / pieces))
            .filter(|(a, b)| b > a)
            .collect();
        let mut choice = vec![0usize; dim];
        'boxes: loop {
            if boxes.len() == count {
                return (boxes, false);
            }
            let mut cells = Vec::new();
            let mut multi = vec![0usize; dim];
            collect_box(grid, &ranges, &choice, 0, &mut multi, &mut cells);
            boxes.push(cells);
            for a in (0..dim).rev() {
                choice[a] += 1;
                if choice[a] < ranges.len() {
                    continue 'boxes;
                }
                choice[a] = 0;
            }
            break;
        }
        if pieces >= n {
            return (boxes, true);
        }
        level += 1;
    }
}

fn collect_box(
    grid: &Grid,
    ranges: &[(usize, usize)],
    choice: &[usize],
    axis: usize,
    multi: &mut Vec<usize>,
    out: &mut Vec<usize>,
) {
    if axis == multi.len() {
        out.push(grid.flat_index(multi));
        return;
    }
    let (a, b) = ranges[choice[axis]];
    for i in a..b {
        multi[axis] = i;
        collect_box(grid, ranges, choice, axis + 1, multi, out);
    }
}

impl TestFamily {
    /// Cosine tensor family on boxes, cell-pair indicators when both grids are
    /// finite; `f_k` are L1-normalized indicators of dyadic sub-boxes of the
    /// state grid. Each family is truncated at `depth` terms.
    pub fn default_for(state_grid: &Arc<Grid>, action_grid: &Arc<Grid>, depth: usize) -> Result<TestFamily> {
        if depth == 0 {
            return Err(Error::InvalidParameter("family depth must be at least 1".into()));
        }
        let (nx, nu) = (state_grid.len(), action_grid.len());
        let both_finite = state_grid.kind() == GridKind::Finite && action_grid.kind() == GridKind::Finite;
        let (kind, g_values, g_exhaustive) = if both_finite {
            let count = depth.min(nx * nu);
            let g: Vec<Vec<f64>> = (0..count)
                .map(|m| {
                    let mut v = vec![0.0; nx * nu];
                    v[m] = 1.0;
                    v
                })
                .collect();
            (GFamilyKind::CellPairs, g, count == nx * nu)
        } else {
            let dim = state_grid.dim() + action_grid.dim();
            let indices = degree_ordered_indices(dim, depth);
            let scaled = |grid: &Grid, cell: usize| -> Vec<f64> {
                grid.center(cell)
                    .iter()
                    .zip(grid.lower().iter().zip(grid.upper()))
                    .map(|(c, (lo, hi))| (c - lo) / (hi - lo))
                    .collect()
            };
            let xs: Vec<Vec<f64>> = (0..nx).map(|x| scaled(state_grid, x)).collect();
            let us: Vec<Vec<f64>> = (0..nu).map(|u| scaled(action_grid, u)).collect();
            let g = indices
                .iter()
                .map(|k| {
                    let mut v = Vec::with_capacity(nx * nu);
                    for x in &xs {
                        for u in &us {
                            let val: f64 = x
                                .iter()
                                .chain(u.iter())
                                .zip(k)
                                .map(|(t, &kj)| (PI * kj as f64 * t).cos())
                                .product();
                            v.push(val);
                        }
                    }
                    v
                })
                .collect();
            (GFamilyKind::Cosine(indices), g, false)
        };
        let lebesgue = GridMeasure::lebesgue(state_grid.clone());
        let (boxes, f_exhaustive) = dyadic_boxes(state_grid, depth);
        let mut f_values = Vec::with_capacity(boxes.len());
        for cells in &boxes {
            let vol = stable_sum(cells.iter().map(|&c| lebesgue.weights()[c]));
            let mut f = vec![0.0; nx];
            for &c in cells {
                f[c] = 1.0 / vol;
            }
            f_values.push(f);
        }
        let mut family = TestFamily::custom(state_grid.clone(), action_grid.clone(), g_values, f_values)?;
        family.kind = kind;
        family.g_exhaustive = g_exhaustive;
        family.f_exhaustive = f_exhaustive;
        Ok(family)
    }

    /// A family from explicit values: `g_values[m][x * n_actions + u]` and `f_values[k][x]`.
    pub fn custom(
        state_grid: Arc<Grid>,
        action_grid: Arc<Grid>,
        g_values: Vec<Vec<f64>>,
        f_values: Vec<Vec<f64>>,
    ) -> Result<TestFamily> {
        let (nx, nu) = (state_grid.len(), action_grid.len());
        if g_values.is_empty() {
            return Err(Error::InvalidParameter("empty g family".into()));
        }
        let mut g_bound = 0.0f64;
        for g in &g_values {
            if g.len() != nx * nu {
                return Err(Error::DimensionMismatch { expected: nx * nu, got: g.len() });
            }
            if let Some(i) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { index: i });
            }
            g_bound = g.iter().fold(g_bound, |b, v| b.max(v.abs()));
        }
        let lebesgue = GridMeasure::lebesgue(state_grid.clone());
        let mut f_l1_norms = Vec::with_capacity(f_values.len());
        for f in &f_values {
            if f.len() != nx {
                return Err(Error::DimensionMismatch { expected: nx, got: f.len() });
            }
            let norm = stable_sum(f.iter().zip(lebesgue.weights()).map(|(v, w)| v.abs() * w));
            if !(norm.is_finite() && norm > 0.0) {
                return Err(Error::InvalidParameter("test function with zero or infinite L1 norm".into()));
            }
            f_l1_norms.push(norm);
        }
        Ok(TestFamily {
            state_grid,
            action_grid,
            kind: GFamilyKind::Custom,
            g_values,
            g_bound,
            g_exhaustive: false,
            f_values,
            f_l1_norms,
            f_exhaustive: false,
        })
    }

    pub fn kind(&self) -> &GFamilyKind {
        &self.kind
    }

    pub fn g_len(&self) -> usize {
        self.g_values.len()
    }

    pub fn f_len(&self) -> usize {
        self.f_values.len()
    }

    pub fn g_values(&self, m: usize) -> &[f64] {
        &self.g_values[m]
    }

    pub fn f_values(&self, k: usize) -> &[f64] {
        &self.f_values[k]
    }

    pub fn f_l1_norms(&self) -> &[f64] {
        &self.f_l1_norms
    }

    /// `M = sup_m ||g_m||_inf`.
    pub fn g_bound(&self) -> f64 {
        self.g_bound
    }

    /// Terms used from the longer of the two families.
    pub fn truncation_depth(&self) -> usize {
        self.g_len().max(self.f_len())
    }

    /// Mass of the omitted `2^-m` weights in the Young series.
    pub fn young_tail(&self) -> f64 {
        if self.g_exhaustive {
            0.0
        } else {
            0.5f64.powi(self.g_len() as i32)
        }
    }

    /// Mass of the omitted `2^-(k+m)` weights in the Borkar double series.
    pub fn borkar_tail(&self) -> f64 {
        let kept_g = if self.g_exhaustive { 1.0 } else { 1.0 - 0.5f64.powi(self.g_len() as i32) };
        let kept_f = if self.f_exhaustive { 1.0 } else { 1.0 - 0.5f64.powi(self.f_len() as i32) };
        1.0 - kept_g * kept_f
    }

    fn check_policy(&self, gamma: &StationaryPolicy) -> Result<()> {
        if gamma.state_grid().same_as(&self.state_grid) && gamma.action_grid().same_as(&self.action_grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch("policy grids differ from the test family grids"))
        }
    }
}

/// `default_test_family(state_grid, action_grid, depth)`.
pub fn default_test_family(state_grid: &Arc<Grid>, action_grid: &Arc<Grid>, depth: usize) -> Result<TestFamily> {
    TestFamily::default_for(state_grid, action_grid, depth)
}

/// A truncated series distance with its terms.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyDistanceReport {
    pub value: f64,
    /// Weighted capped contributions `2^-m D_m / (1 + D_m)`, in series order.
    pub per_term: Vec<f64>,
    /// The raw gaps `D_m` (or `D_{k,m}`, `k` slowest) before weighting.
    pub gaps: Vec<f64>,
    /// Upper bound on the omitted part of the series.
    pub truncation_bound: f64,
}

fn capped(weight: f64, gap: f64) -> f64 {
    weight * gap / (1.0 + gap)
}

/// `h_m(x) = sum_u (g1 - g2)(u|x) g_m(x, u)` for every term `m`.
fn action_integrals(gamma1: &StationaryPolicy, gamma2: &StationaryPolicy, family: &TestFamily) -> Vec<Vec<f64>> {
    let (nx, nu) = (gamma1.n_states(), gamma1.n_actions());
    let diff: Vec<f64> = gamma1.rows().iter().zip(gamma2.rows()).map(|(a, b)| a - b).collect();
    family
        .g_values
        .iter()
        .map(|g| {
            (0..nx)
                .map(|x| {
                    let d = &diff[x * nu..(x + 1) * nu];
                    let gx = &g[x * nu..(x + 1) * nu];
                    stable_sum(d.iter().zip(gx).map(|(a, b)| a * b))
                })
                .collect()
        })
        .collect()
}

/// Young-topology distance at input `psi`.
pub fn young_distance(
    gamma1: &StationaryPolicy,
    gamma2: &StationaryPolicy,
    psi: &GridMeasure,
    family: &TestFamily,
) -> Result<PolicyDistanceReport> {
    family.check_policy(gamma1)?;
    family.check_policy(gamma2)?;
    if !psi.grid().same_as(&family.state_grid) {
        return Err(Error::GridMismatch("input measure lives on another grid"));
    }
    let h = action_integrals(gamma1, gamma2, family);
    let mut gaps = Vec::with_capacity(h.len());
    let mut per_term = Vec::with_capacity(h.len());
    let mut weight = 1.0;
    for hm in &h {
        weight *= 0.5;
        let gap = stable_sum(hm.iter().zip(psi.weights()).map(|(a, w)| a * w)).abs();
        gaps.push(gap);
        per_term.push(capped(weight, gap));
    }
    let value = per_term.iter().sum();
    Ok(PolicyDistanceReport { value, per_term, gaps, truncation_bound: family.young_tail() })
}

/// Borkar-topology semimetric: the double series over `f_k` and `g_m` with
/// `D_{k,m} = |int f_k(x) h_m(x) lambda(dx)| / ||f_k||_1`.
pub fn borkar_semimetric(
    gamma1: &StationaryPolicy,
    gamma2: &StationaryPolicy,
    family: &TestFamily,
) -> Result<PolicyDistanceReport> {
    family.check_policy(gamma1)?;
    family.check_policy(gamma2)?;
    if family.f_values.is_empty() {
        return Err(Error::InvalidParameter("empty f family".into()));
    }
    let lambda = GridMeasure::lebesgue(family.state_grid.clone());
    let h = action_integrals(gamma1, gamma2, family);
    let mut gaps = Vec::with_capacity(family.f_len() * h.len());
    let mut per_term = Vec::with_capacity(gaps.capacity());
    let mut wk = 1.0;
    for (f, norm) in family.f_values.iter().zip(&family.f_l1_norms) {
        wk *= 0.5;
        let fl: Vec<f64> = f.iter().zip(lambda.weights()).map(|(a, b)| a * b).collect();
        let mut wm = 1.0;
        for hm in &h {
            wm *= 0.5;
            let gap = stable_sum(fl.iter().zip(hm).map(|(a, b)| a * b)).abs() / norm;
            gaps.push(gap);
            per_term.push(capped(wk * wm, gap));
        }
    }
    let value = per_term.iter().sum();
    Ok(PolicyDistanceReport { value, per_term, gaps, truncation_bound: family.borkar_tail() })
}

/// `|int psi(dx) int (gamma1 - gamma2)(du|x) g(x, u)|` for a single integrand
/// that only needs to be continuous in the action.
pub fn ws_gap<G>(gamma1: &StationaryPolicy, gamma2: &StationaryPolicy, psi: &GridMeasure, g: G) -> Result<f64>
where
    G: Fn(&[f64], &[f64]) -> f64,
{
    if !gamma1.same_grids(gamma2) || !psi.grid().same_as(gamma1.state_grid()) {
        return Err(Error::GridMismatch("policies and input measure must share grids"));
    }
    let sg = gamma1.state_grid();
    let ag = gamma1.action_grid();
    let mut terms = Vec::with_capacity(sg.len());
    for x in 0..sg.len() {
        let xc = sg.center(x);
        let inner = stable_sum((0..ag.len()).map(|u| {
            let d = gamma1.row(x)[u] - gamma2.row(x)[u];
            if d == 0.0 {
                0.0
            } else {
                d * g(xc, ag.center(u))
            }
        }));
        terms.push(psi.weights()[x] * inner);
    }
    Ok(stable_sum(terms).abs())
}

/// Paired Young distances of a sequence to a limit at two input measures.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferReport {
    pub d_kappa: Vec<f64>,
    pub d_eta: Vec<f64>,
    /// `d_kappa` ends below `tol` while `d_eta` does not.
    pub violation: bool,
}

/// Young convergence at `kappa` should carry over to any `eta << kappa`.
pub fn transfer_check(
    sequence: &[StationaryPolicy],
    limit: &StationaryPolicy,
    kappa: &GridMeasure,
    eta: &GridMeasure,
    family: &TestFamily,
    tol: f64,
) -> Result<TransferReport> {
    rn_derivative(eta, kappa)?;
    let mut d_kappa = Vec::with_capacity(sequence.len());
    let mut d_eta = Vec::with_capacity(sequence.len());
    for gamma in sequence {
        d_kappa.push(young_distance(gamma, limit, kappa, family)?.value);
        d_eta.push(young_distance(gamma, limit, eta, family)?.value);
    }
    let violation = matches!((d_kappa.last(), d_eta.last()), (Some(&k), Some(&e)) if k < tol && e >= tol);
    Ok(TransferReport { d_kappa, d_eta, violation })
}

/// Conditions under which Young convergence at `psi` and Borkar convergence coincide.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EquivalencePrecondition {
    /// `psi` is absolutely continuous w.r.t. Lebesgue measure on the grid.
    pub absolutely_continuous: bool,
    pub finite: bool,
    /// `d psi / d lambda > 0` on every cell.
    pub positive_density: bool,
}

impl EquivalencePrecondition {
    pub fn check(psi: &GridMeasure) -> EquivalencePrecondition {
        let lambda = GridMeasure::lebesgue(psi.grid_arc().clone());
        let absolutely_continuous = rn_derivative(psi, &lambda).is_ok();
        EquivalencePrecondition {
            absolutely_continuous,
            finite: psi.total_mass().is_finite(),
            positive_density: absolutely_continuous && psi.has_full_support(),
        }
    }

    /// Young at `psi` implies Borkar.
    pub fn young_implies_borkar(&self) -> bool {
        self.absolutely_continuous && self.positive_density
    }

    /// Borkar implies Young at `psi`.
    pub fn borkar_implies_young(&self) -> bool {
        self.absolutely_continuous && self.finite
    }

    pub fn equivalent(&self) -> bool {
        self.young_implies_borkar() && self.borkar_implies_young()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::mix_policies;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn finite(n: usize) -> Arc<Grid> {
        Arc::new(Grid::finite(n).unwrap())
    }

    fn two_point() -> (StationaryPolicy, StationaryPolicy, GridMeasure, TestFamily) {
        let (sg, ag) = (finite(2), finite(2));
        let g1 = StationaryPolicy::deterministic(sg.clone(), ag.clone(), &[0, 1]).unwrap();
        let g2 = StationaryPolicy::deterministic(sg.clone(), ag.clone(), &[1, 0]).unwrap();
        let psi = GridMeasure::uniform(sg.clone());
        let fam = default_test_family(&sg, &ag, 4).unwrap();
        (g1, g2, psi, fam)
    }

    #[test]
    fn indicator_family_enumeration() {
        let (_, _, _, fam) = two_point();
        assert_eq!(fam.kind(), &GFamilyKind::CellPairs);
        assert_eq!(fam.g_len(), 4);
        for m in 0..4 {
            let mut e = vec![0.0; 4];
            e[m] = 1.0;
            assert_eq!(fam.g_values(m), &e[..]);
        }
        assert_eq!(fam.young_tail(), 0.0);
    }

    #[test]
    fn depth_one_is_the_constant() {
        let sg = Arc::new(Grid::new(&[(0.0, 1.0)], 8).unwrap());
        let ag = Arc::new(Grid::new(&[(0.0, 1.0)], 3).unwrap());
        let fam = default_test_family(&sg, &ag, 1).unwrap();
        assert!(fam.g_values(0).iter().all(|&v| v == 1.0));
        // first f is the whole box with unit L1 norm
        assert!(fam.f_values(0).iter().all(|&v| v == 1.0));
        assert_abs_diff_eq!(fam.f_l1_norms()[0], 1.0, epsilon = 1e-15);
        let a = StationaryPolicy::deterministic(sg.clone(), ag.clone(), &[0; 8]).unwrap();
        let b = StationaryPolicy::deterministic(sg.clone(), ag.clone(), &[2; 8]).unwrap();
        let d = young_distance(&a, &b, &GridMeasure::uniform(sg), &fam).unwrap();
        assert!(d.value < 1e-15);
    }

    #[test]
    fn cosine_indices_in_degree_order() {
        let idx = degree_ordered_indices(2, 6);
        assert_eq!(idx, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![0, 2], vec![1, 1], vec![2, 0]]);
    }

    #[test]
    fn dyadic_boxes_cover_levels() {
        let g = Grid::new(&[(0.0, 1.0)], 4).unwrap();
        let (boxes, done) = dyadic_boxes(&g, 100);
        assert!(done);
        assert_eq!(boxes, vec![vec![0, 1, 2, 3], vec![0, 1], vec![2, 3], vec![0], vec![1], vec![2], vec![3]]);
        let g2 = Grid::new(&[(0.0, 1.0), (0.0, 1.0)], 2).unwrap();
        let (boxes, _) = dyadic_boxes(&g2, 100);
        assert_eq!(boxes.len(), 5);
        assert_eq!(boxes[2], vec![1]);
    }

    #[test]
    fn two_point_young_distance() {
        let (g1, g2, psi, fam) = two_point();
        assert_eq!(young_distance(&g1, &g1, &psi, &fam).unwrap().value, 0.0);
        let d = young_distance(&g1, &g2, &psi, &fam).unwrap();
        assert_eq!(d.gaps, vec![0.5; 4]);
        assert_abs_diff_eq!(d.value, 5.0 / 16.0, epsilon = 1e-15);
    }

    /// Brute force from the definition: enumerate joint measures as maps and
    /// sum every (k, m) term of the Borkar series.
    fn borkar_by_enumeration(g1: &StationaryPolicy, g2: &StationaryPolicy, fam: &TestFamily) -> f64 {
        let mut total = 0.0;
        for k in 0..fam.f_len() {
            let f = fam.f_values(k);
            let norm: f64 = f.iter().map(|v| v.abs()).sum();
            for m in 0..fam.g_len() {
                let g = fam.g_values(m);
                let mut signed = 0.0;
                for x in 0..2 {
                    for u in 0..2 {
                        signed += f[x] * (g1.row(x)[u] - g2.row(x)[u]) * g[x * 2 + u];
                    }
                }
                let d = signed.abs() / norm;
                total += 0.5f64.powi((k + m + 2) as i32) * d / (1.0 + d);
            }
        }
        total
    }

    #[test]
    fn two_point_borkar_semimetric() {
        let (g1, g2, psi, fam) = two_point();
        assert_eq!(borkar_semimetric(&g1, &g1, &fam).unwrap().value, 0.0);
        let d = borkar_semimetric(&g1, &g2, &fam).unwrap();
        assert_eq!(fam.f_len(), 3);
        // first f is uniform on both points: its row of gaps equals the Young gaps at uniform input
        let young = young_distance(&g1, &g2, &psi, &fam).unwrap();
        assert_eq!(&d.gaps[..4], &young.gaps[..]);
        let oracle = borkar_by_enumeration(&g1, &g2, &fam);
        assert_abs_diff_eq!(d.value, oracle, epsilon = 1e-15);
        assert_abs_diff_eq!(d.value, 67.0 / 256.0, epsilon = 1e-15);
        assert_eq!(d.truncation_bound, 0.0);
    }

    #[test]
    fn psi_null_disagreement_is_invisible() {
        let (sg, ag) = (finite(2), finite(2));
        let a = StationaryPolicy::deterministic(sg.clone(), ag.clone(), &[0, 0]).unwrap();
        let b = StationaryPolicy::deterministic(sg.clone(), ag.clone(), &[0, 1]).unwrap();
        let psi = GridMeasure::point_mass(sg.clone(), 0).unwrap();
        let fam = default_test_family(&sg, &ag, 4).unwrap();
        assert_eq!(young_distance(&a, &b, &psi, &fam).unwrap().value, 0.0);
    }

    #[test]
    fn borkar_single_cell_difference_is_small() {
        let sg = Arc::new(Grid::new(&[(0.0, 1.0)], 256).unwrap());
        let ag = Arc::new(Grid::new(&[(0.0, 1.0)], 4).unwrap());
        let fam = default_test_family(&sg, &ag, 16).unwrap();
        let a = StationaryPolicy::deterministic(sg.clone(), ag.clone(), &[0; 256]).unwrap();
        let mut acts = vec![0; 256];
        acts[100] = 3;
        let b = StationaryPolicy::deterministic(sg.clone(), ag.clone(), &acts).unwrap();
        let d = borkar_semimetric(&a, &b, &fam).unwrap();
        let w = sg.cell_volume();
        let bound: f64 = (0..fam.f_len())
            .map(|k| 0.5f64.powi(k as i32 + 1) * 2.0 * fam.g_bound() * w / fam.f_l1_norms()[k]
                * fam.f_values(k).iter().cloned().fold(0.0, f64::max))
            .sum();
        assert!(d.value > 0.0);
        assert!(d.value <= bound, "{} > {}", d.value, bound);
    }

    #[test]
    fn ws_gap_examples() {
        let (g1, g2, psi, _) = two_point();
        assert_eq!(ws_gap(&g1, &g2, &psi, |_, _| 1.0).unwrap(), 0.0);
        let gap = ws_gap(&g1, &g2, &psi, |x, u| if x[0] == 0.0 && u[0] == 0.0 { 1.0 } else { 0.0 }).unwrap();
        assert_eq!(gap, 0.5);
        // locality: with the policies equal off A, only A contributes its action-mean gap
        let (sg, ag) = (finite(3), Arc::new(Grid::new(&[(0.0, 1.0)], 2).unwrap()));
        let a = StationaryPolicy::from_fn(sg.clone(), ag.clone(), |x| if x == 1 { vec![1.0, 0.0] } else { vec![0.5, 0.5] }).unwrap();
        let b = StationaryPolicy::uniform(sg.clone(), ag.clone());
        let psi = GridMeasure::uniform(sg);
        let gap = ws_gap(&a, &b, &psi, |x, u| if x[0] == 1.0 { u[0] } else { 0.0 }).unwrap();
        let mean_gap = (1.0 * 0.25) - (0.5 * 0.25 + 0.5 * 0.75);
        assert_abs_diff_eq!(gap, (mean_gap / 3.0f64).abs(), epsilon = 1e-15);
    }

    #[test]
    fn transfer_examples() {
        let (sg, ag) = (finite(3), finite(2));
        let gamma = StationaryPolicy::deterministic(sg.clone(), ag.clone(), &[0, 1, 0]).unwrap();
        let other = StationaryPolicy::deterministic(sg.clone(), ag.clone(), &[1, 1, 1]).unwrap();
        let fam = default_test_family(&sg, &ag, 64).unwrap();
        let seq: Vec<_> = [1, 2, 4, 8, 16, 1024]
            .iter()
            .map(|&n| mix_policies(&gamma, &other, 1.0 / n as f64).unwrap())
            .collect();
        let kappa = GridMeasure::uniform(sg.clone());
        let same = transfer_check(&seq, &gamma, &kappa, &kappa, &fam, 1e-2).unwrap();
        assert_eq!(same.d_kappa, same.d_eta);
        let eta = GridMeasure::probability(sg.clone(), vec![0.7, 0.0, 0.3]).unwrap();
        let r = transfer_check(&seq, &gamma, &kappa, &eta, &fam, 1e-2).unwrap();
        assert!(!r.violation);
        assert!(r.d_kappa.windows(2).all(|w| w[1] < w[0]));
        assert!(r.d_eta.windows(2).all(|w| w[1] < w[0]));
        let kappa0 = GridMeasure::probability(sg.clone(), vec![0.5, 0.5, 0.0]).unwrap();
        assert!(matches!(
            transfer_check(&seq, &gamma, &kappa0, &eta, &fam, 1e-2),
            Err(Error::AbsoluteContinuityViolation { cell: 2, .. })
        ));
    }

    #[test]
    fn precondition_flags() {
        let sg = Arc::new(Grid::new(&[(0.0, 1.0)], 4).unwrap());
        let full = GridMeasure::uniform(sg.clone());
        assert!(EquivalencePrecondition::check(&full).equivalent());
        let holed = GridMeasure::probability(sg, vec![0.5, 0.0, 0.25, 0.25]).unwrap();
        let p = EquivalencePrecondition::check(&holed);
        assert!(!p.positive_density);
        assert!(p.borkar_implies_young());
        assert!(!p.young_implies_borkar());
    }

    fn random_policy(nx: usize, nu: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, nx * nu).prop_map(move |mut v| {
            for r in v.chunks_mut(nu) {
                r[0] += 1e-3;
                let s: f64 = r.iter().sum();
                r.iter_mut().for_each(|p| *p /= s);
            }
            v
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn truncation_is_monotone(a in random_policy(16, 4), b in random_policy(16, 4)) {
            let sg = Arc::new(Grid::new(&[(0.0, 1.0)], 16).unwrap());
            let ag = Arc::new(Grid::new(&[(-1.0, 1.0)], 4).unwrap());
            let a = StationaryPolicy::new(sg.clone(), ag.clone(), a).unwrap();
            let b = StationaryPolicy::new(sg.clone(), ag.clone(), b).unwrap();
            let psi = GridMeasure::uniform(sg.clone());
            let mut prev: Option<PolicyDistanceReport> = None;
            for depth in [1usize, 2, 4, 8, 16, 32] {
                let fam = default_test_family(&sg, &ag, depth).unwrap();
                let d = young_distance(&a, &b, &psi, &fam).unwrap();
                prop_assert!((d.value - d.per_term.iter().sum::<f64>()).abs() < 1e-15);
                if let Some(p) = prev {
                    prop_assert!(d.value >= p.value);
                    prop_assert!(d.value - p.value <= p.truncation_bound + 1e-15);
                    prop_assert!(d.truncation_bound < p.truncation_bound);
                }
                prev = Some(d);
            }
        }

        #[test]
        fn affinity_decay_per_term(a in random_policy(5, 3), b in random_policy(5, 3), alpha in 0.0f64..=1.0) {
            let (sg, ag) = (finite(5), finite(3));
            let a = StationaryPolicy::new(sg.clone(), ag.clone(), a).unwrap();
            let b = StationaryPolicy::new(sg.clone(), ag.clone(), b).unwrap();
            let fam = default_test_family(&sg, &ag, 64).unwrap();
            let psi = GridMeasure::uniform(sg);
            let mixed = mix_policies(&a, &b, alpha).unwrap();
            let base = young_distance(&b, &a, &psi, &fam).unwrap();
            let d = young_distance(&mixed, &a, &psi, &fam).unwrap();
            for (x, y) in d.gaps.iter().zip(&base.gaps) {
                prop_assert!((x - alpha * y).abs() <= 1e-12);
            }
        }
    }
}
