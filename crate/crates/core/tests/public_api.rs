use std::sync::Arc;

use proptest::prelude::*;

use relaxctl_core::benchmark::{quadratic_cost, reference_policy, BenchmarkSpec};
use relaxctl_core::invariant::{
    average_cost_exact, average_cost_mc, invariant_measure_finite, occupation_measure, policy_cost, solve_invariant,
    McOptions, Uniqueness, FINITE_TOL, MAX_ITER,
};
use relaxctl_core::kernel::{apply_policy, mix_policies, CostFunction, StateKernel, StationaryPolicy, TransitionKernel};
use relaxctl_core::measure::{Grid, GridMeasure};
use relaxctl_core::quantize::{action_quantizer, derandomize, quantize_policy, state_quantizer};
use relaxctl_core::textio::{export_cost, export_kernel, export_policy, import_cost, import_kernel, import_policy};
use relaxctl_core::topology::{default_test_family, young_distance};
use relaxctl_core::Error;

fn normalize(rows: &mut [f64], width: usize) {
    for r in rows.chunks_mut(width) {
        let s: f64 = r.iter().sum();
        r.iter_mut().for_each(|p| *p /= s);
    }
}

fn stochastic_rows(n_rows: usize, width: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, n_rows * width).prop_map(move |mut v| {
        normalize(&mut v, width);
        v
    })
}

fn finite_mdp() -> impl Strategy<Value = (TransitionKernel, StationaryPolicy)> {
    (2usize..8, 1usize..4).prop_flat_map(|(nx, nu)| {
        (stochastic_rows(nx * nu, nx), stochastic_rows(nx, nu)).prop_map(move |(k, g)| {
            let sg = Arc::new(Grid::finite(nx).unwrap());
            let ag = Arc::new(Grid::finite(nu).unwrap());
            (
                TransitionKernel::new(sg.clone(), ag.clone(), k).unwrap(),
                StationaryPolicy::new(sg, ag, g).unwrap(),
            )
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn invariant_measure_is_fixed_by_the_chain((kernel, gamma) in finite_mdp()) {
        let (pi, diag) = solve_invariant(&kernel, &gamma).unwrap();
        prop_assert_eq!(diag.uniqueness, Uniqueness::Unique);
        let next = apply_policy(&kernel, &gamma).unwrap().push_forward(pi.weights());
        let tv: f64 = 0.5 * next.iter().zip(pi.weights()).map(|(a, b)| (a - b).abs()).sum::<f64>();
        prop_assert!(tv <= FINITE_TOL);
        prop_assert!((pi.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn occupation_measure_disintegrates((kernel, gamma) in finite_mdp()) {
        let (pi, _) = solve_invariant(&kernel, &gamma).unwrap();
        let mu = occupation_measure(&pi, &gamma, &kernel).unwrap();
        let nu = gamma.n_actions();
        for x in 0..gamma.n_states() {
            let marginal: f64 = (0..nu).map(|u| mu.weight(x, u)).sum();
            prop_assert!((marginal - pi.weights()[x]).abs() < 1e-15);
        }
        let ones = CostFunction::constant(kernel.state_grid().clone(), kernel.action_grid().clone(), 1.0).unwrap();
        prop_assert!((average_cost_exact(&mu, &ones).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn export_import_is_exact((kernel, gamma) in finite_mdp(), scale in -10.0f64..10.0) {
        let back = import_kernel(&export_kernel(&kernel)).unwrap();
        prop_assert_eq!(back.rows(), kernel.rows());
        prop_assert_eq!(import_policy(&export_policy(&gamma)).unwrap(), gamma.clone());
        let c = CostFunction::from_fn(kernel.state_grid().clone(), kernel.action_grid().clone(), |x, u| scale * x[0] / 3.0 + u[0]).unwrap();
        let back = import_cost(&export_cost(&c)).unwrap();
        prop_assert_eq!(back.values(), c.values());
    }

    #[test]
    fn quantizer_maps_to_a_nearest_codepoint(cells in 1usize..64, m in 1usize..40) {
        let grid = Arc::new(Grid::new(&[(-1.0, 1.0)], cells).unwrap());
        let q = state_quantizer(&grid, m).unwrap();
        for (cell, &i) in q.assignment().iter().enumerate() {
            let z = grid.center(cell)[0];
            let d = |j: usize| (q.codebook()[j][0] - z).abs();
            let best = (0..q.len()).map(d).fold(f64::INFINITY, f64::min);
            let tie = 1e-12 * (1.0 + z.abs());
            prop_assert!(d(i) <= best + tie);
            prop_assert!((0..i).all(|j| d(j) > best + 1e-14));
            prop_assert!(best < 1.0 / m as f64);
        }
        let total: usize = q.partition().iter().map(Vec::len).sum();
        prop_assert_eq!(total, grid.len());
    }

    #[test]
    fn mixing_is_affine_in_young_gaps(alpha in 0.0f64..=1.0, rows in stochastic_rows(8, 2)) {
        let sg = Arc::new(Grid::new(&[(-1.0, 1.0)], 8).unwrap());
        let ag = Arc::new(Grid::new(&[(-1.0, 1.0)], 2).unwrap());
        let a = StationaryPolicy::new(sg.clone(), ag.clone(), rows).unwrap();
        let b = reference_policy(&sg, &ag).unwrap();
        let fam = default_test_family(&sg, &ag, 32).unwrap();
        let psi = GridMeasure::uniform(sg.clone());
        let full = young_distance(&a, &b, &psi, &fam).unwrap();
        let part = young_distance(&mix_policies(&b, &a, alpha).unwrap(), &b, &psi, &fam).unwrap();
        for (g, f) in part.gaps.iter().zip(&full.gaps) {
            prop_assert!((g - alpha * f).abs() <= 1e-12);
        }
    }
}

#[test]
fn two_state_chain() {
    let sg = Arc::new(Grid::finite(2).unwrap());
    let t = StateKernel::new(sg, vec![0.9, 0.1, 0.2, 0.8]).unwrap();
    let (pi, diag) = invariant_measure_finite(&t, FINITE_TOL, MAX_ITER).unwrap();
    assert!((pi.weights()[0] - 2.0 / 3.0).abs() < 1e-10);
    assert!((pi.weights()[1] - 1.0 / 3.0).abs() < 1e-10);
    assert_eq!(diag.uniqueness, Uniqueness::Unique);
}

#[test]
fn reducible_chain_is_rejected() {
    let sg = Arc::new(Grid::finite(3).unwrap());
    let t = StateKernel::new(sg, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.5, 0.0, 0.5]).unwrap();
    assert!(matches!(
        invariant_measure_finite(&t, FINITE_TOL, MAX_ITER),
        Err(Error::NonUniqueInvariant { closed_classes: 2 })
    ));
}

#[test]
fn simulation_is_seed_deterministic() {
    let kernel = BenchmarkSpec::default().kernel(32, 4).unwrap();
    let (sg, ag) = (kernel.state_grid().clone(), kernel.action_grid().clone());
    let gamma = reference_policy(&sg, &ag).unwrap();
    let cost = quadratic_cost(&sg, &ag).unwrap();
    let opts = McOptions { horizon: 20_000, burn_in: 100, seed: 9, stream: 0 };
    let a = average_cost_mc(&kernel, &gamma, &cost, opts).unwrap();
    let b = average_cost_mc(&kernel, &gamma, &cost, opts).unwrap();
    assert_eq!(a, b);
    let c = average_cost_mc(&kernel, &gamma, &cost, McOptions { stream: 1, ..opts }).unwrap();
    assert_ne!(a.estimate, c.estimate);
    let (exact, _) = policy_cost(&kernel, &gamma, &cost).unwrap();
    assert!((a.estimate - exact).abs() < 5.0 * a.standard_error);
}

#[test]
fn derandomized_policy_keeps_bin_support() {
    let (sg, ag) = BenchmarkSpec::default().grids(16, 8).unwrap();
    let gamma = reference_policy(&sg, &ag).unwrap();
    let qp = quantize_policy(&gamma, &state_quantizer(&sg, 4).unwrap(), &action_quantizer(&ag, 4).unwrap()).unwrap();
    let det = derandomize(&qp, 4).unwrap();
    assert!(det.is_deterministic());
    assert_eq!(det.n_states(), 64);
    let actions = det.actions().unwrap();
    for (cell, &u) in actions.iter().enumerate() {
        assert!(qp.policy.row(cell / 4)[u] > 0.0);
    }
    // with r = 1 and one cell per quantizer bin, splitting fails
    let fine = quantize_policy(&gamma, &state_quantizer(&sg, 8).unwrap(), &action_quantizer(&ag, 4).unwrap()).unwrap();
    if fine.policy.rows().chunks(8).any(|r| r.iter().filter(|&&p| p > 0.0).count() > 1) {
        assert!(matches!(derandomize(&fine, 1), Err(Error::InsufficientCells { .. })));
    }
}

#[test]
fn density_iteration_respects_the_majorant() {
    let kernel = BenchmarkSpec::default().kernel(64, 8).unwrap();
    let gamma = StationaryPolicy::uniform(kernel.state_grid().clone(), kernel.action_grid().clone());
    let (_, diag) = solve_invariant(&kernel, &gamma).unwrap();
    let m = diag.majorant.expect("benchmark kernel carries a majorant");
    assert!(m.iterates > 0);
    assert_eq!(m.violations, 0);
    assert!(m.min_margin >= 0.0);
}
