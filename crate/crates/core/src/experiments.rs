//! Experiment suites shared by the command-line front end and the acceptance tests.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::benchmark::{quadratic_cost, reference_policy, rounding_policy, BenchmarkSpec};
use crate::error::{Error, Result};
use crate::invariant::{
    average_cost_exact, average_cost_mc, closed_classes, continuity_experiment, occupation_measure, solve_invariant,
    ContinuityTable, ContinuityTolerances, MajorantCheck, McOptions, SolveDiagnostics,
};
use crate::kernel::{apply_policy, mix_policies, validate_h2, CostFunction, H2Report, StationaryPolicy, TransitionKernel};
use crate::measure::{Grid, GridMeasure};
use crate::quantize::{
    action_quantizer, derandomize, lift_quantized, quantization_sweep, quantize_policy, state_quantizer,
    SweepCriteria, SweepTable,
};
use crate::rng::{substream, Stream};
use crate::topology::{borkar_semimetric, default_test_family, young_distance, EquivalencePrecondition, TestFamily};

fn merge_majorant(acc: &mut Option<MajorantCheck>, diag: &SolveDiagnostics) {
    if let Some(m) = &diag.majorant {
        acc.get_or_insert_with(MajorantCheck::empty).merge(m);
    }
}

/// Policy rounding `a + b x + c sin(pi x)` onto the action grid, mixed with
/// the uniform policy at a random weight below 0.3.
pub fn random_smooth_policy(rng: &mut ChaCha8Rng, state_grid: &Arc<Grid>, action_grid: &Arc<Grid>) -> Result<StationaryPolicy> {
    let a = rng.random_range(-0.5..0.5);
    let b = rng.random_range(-1.0..1.0);
    let c = rng.random_range(-0.5..0.5);
    let eps = rng.random_range(0.0..0.3);
    let rounded = rounding_policy(state_grid, action_grid, |x| a + b * x + c * (PI * x).sin())?;
    mix_policies(&rounded, &StationaryPolicy::uniform(state_grid.clone(), action_grid.clone()), eps)
}

/// Policy with every row drawn from `U(0.05, 1)` entries, normalized.
pub fn random_positive_policy(rng: &mut ChaCha8Rng, state_grid: &Arc<Grid>, action_grid: &Arc<Grid>) -> Result<StationaryPolicy> {
    StationaryPolicy::from_fn(state_grid.clone(), action_grid.clone(), |_| {
        let mut row: Vec<f64> = (0..action_grid.len()).map(|_| rng.random_range(0.05..1.0)).collect();
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= s);
        row
    })
}

/// Finite MDP whose kernel entries are zero with probability `zero_prob`
/// and `U(0,1)^2` otherwise; rows are normalized.
pub fn random_finite_mdp(rng: &mut ChaCha8Rng, n_states: usize, n_actions: usize, zero_prob: f64) -> Result<TransitionKernel> {
    let sg = Arc::new(Grid::finite(n_states)?);
    let ag = Arc::new(Grid::finite(n_actions)?);
    TransitionKernel::from_fn(sg, ag, |_, _| {
        let mut row: Vec<f64> = (0..n_states)
            .map(|_| if rng.random::<f64>() < zero_prob { 0.0 } else { rng.random::<f64>().powi(2) })
            .collect();
        if row.iter().all(|&p| p == 0.0) {
            let y = rng.random_range(0..n_states);
            row[y] = 1.0;
        }
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= s);
        row
    })
}

// ---------------------------------------------------------------- topology

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SequenceKind {
    /// `gamma_n = mix(gamma, gamma', n^-2)` with limit `gamma`.
    Converging,
    /// `gamma'` at even `n`, `gamma''` at odd `n`, tested against `gamma'`.
    Alternating,
    /// `gamma_n = gamma`.
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopologyRow {
    pub n: usize,
    pub young_value: f64,
    pub borkar_value: f64,
    pub tail_bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceOutcome {
    pub index: usize,
    pub kind: SequenceKind,
    pub rows: Vec<TopologyRow>,
    /// Largest value over the tail window.
    pub young_tail: f64,
    pub borkar_tail: f64,
    pub young_converged: bool,
    pub borkar_converged: bool,
    /// Verdicts agree (or, with the precondition unmet, Borkar implies Young).
    pub consistent: bool,
}

impl SequenceOutcome {
    pub const CSV_HEADER: &'static str = "n,young_value,borkar_value,tail_bound";

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for r in &self.rows {
            s.push_str(&format!("{},{},{},{}\n", r.n, r.young_value, r.borkar_value, r.tail_bound));
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct TopologySuite {
    pub state_grid: Arc<Grid>,
    pub action_grid: Arc<Grid>,
    pub psi: GridMeasure,
    pub depth: usize,
    pub seed: u64,
    pub converging: usize,
    pub alternating: usize,
    pub constant: usize,
    /// Tail values below this count as converged.
    pub threshold: f64,
    pub max_n: usize,
    pub tail_window: usize,
}

impl TopologySuite {
    /// 128 x 16 benchmark grids, depth 64, 10 + 10 sequences, threshold 1e-6 at n = 1024.
    pub fn benchmark(psi_amplitude: f64, seed: u64) -> Result<TopologySuite> {
        let (sg, ag) = BenchmarkSpec::default().grids(128, 16)?;
        let psi = crate::benchmark::cosine_psi(&sg, psi_amplitude)?;
        Ok(TopologySuite {
            state_grid: sg,
            action_grid: ag,
            psi,
            depth: crate::topology::DEFAULT_DEPTH,
            seed,
            converging: 10,
            alternating: 10,
            constant: 0,
            threshold: 1e-6,
            max_n: 1024,
            tail_window: 4,
        })
    }

    /// Dyadic `n` up to `max_n` plus the tail window.
    pub fn sample_points(&self) -> Vec<usize> {
        let mut ns: Vec<usize> = std::iter::successors(Some(1usize), |n| Some(n * 2)).take_while(|&n| n <= self.max_n).collect();
        ns.extend(self.max_n + 1 - self.tail_window.min(self.max_n)..=self.max_n);
        ns.sort_unstable();
        ns.dedup();
        ns
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopologySuiteReport {
    pub precondition: EquivalencePrecondition,
    pub outcomes: Vec<SequenceOutcome>,
    pub pass: bool,
}

fn run_sequence<F>(
    suite: &TopologySuite,
    family: &TestFamily,
    index: usize,
    kind: SequenceKind,
    limit: &StationaryPolicy,
    member: F,
    precondition: &EquivalencePrecondition,
) -> Result<SequenceOutcome>
where
    F: Fn(usize) -> Result<StationaryPolicy>,
{
    let tail_start = suite.max_n + 1 - suite.tail_window.min(suite.max_n);
    let mut rows = Vec::new();
    let (mut young_tail, mut borkar_tail) = (0.0f64, 0.0f64);
    for n in suite.sample_points() {
        let gamma = member(n)?;
        let y = young_distance(&gamma, limit, &suite.psi, family)?;
        let b = borkar_semimetric(&gamma, limit, family)?;
        if n >= tail_start {
            young_tail = young_tail.max(y.value);
            borkar_tail = borkar_tail.max(b.value);
        }
        rows.push(TopologyRow {
            n,
            young_value: y.value,
            borkar_value: b.value,
            tail_bound: y.truncation_bound.max(b.truncation_bound),
        });
    }
    let young_converged = young_tail < suite.threshold;
    let borkar_converged = borkar_tail < suite.threshold;
    let consistent = if precondition.equivalent() {
        young_converged == borkar_converged
    } else {
        !borkar_converged || young_converged || !precondition.borkar_implies_young()
    };
    Ok(SequenceOutcome { index, kind, rows, young_tail, borkar_tail, young_converged, borkar_converged, consistent })
}

/// Young and Borkar verdicts on seeded policy sequences.
pub fn run_topology_suite(suite: &TopologySuite) -> Result<TopologySuiteReport> {
    let family = default_test_family(&suite.state_grid, &suite.action_grid, suite.depth)?;
    let precondition = EquivalencePrecondition::check(&suite.psi);
    let (sg, ag) = (&suite.state_grid, &suite.action_grid);
    let mut outcomes = Vec::new();
    let mut index = 0;
    let next_rng = |i: usize| substream(suite.seed, Stream::PolicyGen, i as u32);
    for _ in 0..suite.converging {
        let mut rng = next_rng(index);
        let gamma = random_smooth_policy(&mut rng, sg, ag)?;
        let other = random_smooth_policy(&mut rng, sg, ag)?;
        let member = |n: usize| mix_policies(&gamma, &other, 1.0 / (n as f64 * n as f64));
        outcomes.push(run_sequence(suite, &family, index, SequenceKind::Converging, &gamma, member, &precondition)?);
        index += 1;
    }
    for _ in 0..suite.alternating {
        let mut rng = next_rng(index);
        let even = random_smooth_policy(&mut rng, sg, ag)?;
        let odd = random_smooth_policy(&mut rng, sg, ag)?;
        let member = |n: usize| Ok(if n % 2 == 0 { even.clone() } else { odd.clone() });
        outcomes.push(run_sequence(suite, &family, index, SequenceKind::Alternating, &even, member, &precondition)?);
        index += 1;
    }
    for _ in 0..suite.constant {
        let mut rng = next_rng(index);
        let gamma = random_smooth_policy(&mut rng, sg, ag)?;
        let member = |_: usize| Ok(gamma.clone());
        outcomes.push(run_sequence(suite, &family, index, SequenceKind::Constant, &gamma, member, &precondition)?);
        index += 1;
    }
    let pass = outcomes.iter().all(|o| o.consistent);
    Ok(TopologySuiteReport { precondition, outcomes, pass })
}

// -------------------------------------------------------------- continuity

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuitySuite {
    pub seed: u64,
    pub mdps: usize,
    pub max_states: usize,
    pub max_actions: usize,
    pub zero_prob: f64,
    pub depth: usize,
    /// `n = 2^k` for `k` in `1..=max_exponent`.
    pub max_exponent: u32,
    pub tolerances: ContinuityTolerances,
    pub slack: f64,
}

impl Default for ContinuitySuite {
    fn default() -> Self {
        ContinuitySuite {
            seed: 0,
            mdps: 50,
            max_states: 10,
            max_actions: 10,
            zero_prob: 0.2,
            depth: crate::topology::DEFAULT_DEPTH,
            max_exponent: 10,
            tolerances: ContinuityTolerances { young: 1e-3, tv: 1e-2 },
            slack: 0.1,
        }
    }
}

/// A drawn MDP with its two policies.
#[derive(Debug, Clone)]
pub struct MdpInstance {
    pub draw: usize,
    pub kernel: TransitionKernel,
    pub gamma: StationaryPolicy,
    pub gamma_prime: StationaryPolicy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MdpOutcome {
    pub draw: usize,
    pub n_states: usize,
    pub n_actions: usize,
    pub table: ContinuityTable,
    pub tv_monotone: bool,
    /// `young <= tol.young` implies `tv <= tol.tv` on every row.
    pub implication: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuitySuiteReport {
    pub outcomes: Vec<MdpOutcome>,
    /// Draw index and reason for every excluded draw.
    pub excluded: Vec<(usize, String)>,
    pub pass: bool,
}

impl ContinuitySuite {
    /// Ergodic draws in order; reducible draws are skipped and reported.
    pub fn instances(&self) -> Result<(Vec<MdpInstance>, Vec<(usize, String)>)> {
        let mut out = Vec::with_capacity(self.mdps);
        let mut excluded = Vec::new();
        let mut draw = 0usize;
        while out.len() < self.mdps {
            if draw >= 100 * self.mdps.max(1) {
                return Err(Error::InvalidParameter("too many reducible draws".into()));
            }
            let mut rng = substream(self.seed, Stream::ModelGen, draw as u32);
            let nx = rng.random_range(2..=self.max_states.max(2));
            let nu = rng.random_range(2..=self.max_actions.max(2));
            let kernel = random_finite_mdp(&mut rng, nx, nu, self.zero_prob)?;
            let mut prng = substream(self.seed, Stream::PolicyGen, draw as u32);
            let gamma = random_positive_policy(&mut prng, kernel.state_grid(), kernel.action_grid())?;
            let gamma_prime = random_positive_policy(&mut prng, kernel.state_grid(), kernel.action_grid())?;
            // positive policies share the support digraph of the uniform policy
            let uniform = StationaryPolicy::uniform(kernel.state_grid().clone(), kernel.action_grid().clone());
            let classes = closed_classes(&apply_policy(&kernel, &uniform)?).len();
            if classes == 1 {
                out.push(MdpInstance { draw, kernel, gamma, gamma_prime });
            } else {
                excluded.push((draw, format!("{classes} closed communicating classes")));
            }
            draw += 1;
        }
        Ok((out, excluded))
    }

    pub fn sequence(&self, inst: &MdpInstance) -> Result<Vec<(usize, StationaryPolicy)>> {
        (1..=self.max_exponent)
            .map(|k| {
                let n = 1usize << k;
                Ok((n, mix_policies(&inst.gamma, &inst.gamma_prime, 1.0 / n as f64)?))
            })
            .collect()
    }

    pub fn run(&self) -> Result<ContinuitySuiteReport> {
        let (instances, excluded) = self.instances()?;
        let mut outcomes = Vec::with_capacity(instances.len());
        for inst in &instances {
            let sg = inst.kernel.state_grid();
            let ag = inst.kernel.action_grid();
            let psi = GridMeasure::uniform(sg.clone());
            let family = default_test_family(sg, ag, self.depth)?;
            let seq = self.sequence(inst)?;
            let table = continuity_experiment(&inst.kernel, &seq, &inst.gamma, &psi, &family, None, self.tolerances)?;
            let tv: Vec<f64> = table.rows.iter().map(|r| r.tv_invariant).collect();
            let tv_monotone = crate::quantize::non_increasing_with_slack(&tv, self.slack, 0.0);
            let implication = table
                .rows
                .iter()
                .all(|r| r.young_distance > self.tolerances.young || r.tv_invariant <= self.tolerances.tv);
            let pass = table.pass && tv_monotone && implication;
            outcomes.push(MdpOutcome {
                draw: inst.draw,
                n_states: sg.len(),
                n_actions: ag.len(),
                table,
                tv_monotone,
                implication,
                pass,
            });
        }
        let pass = outcomes.iter().all(|o| o.pass);
        Ok(ContinuitySuiteReport { outcomes, excluded, pass })
    }
}

// ------------------------------------------------------------ quantization

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizationSuite {
    pub spec: BenchmarkSpec,
    pub fine_states: usize,
    pub n_actions: usize,
    pub ladder: Vec<(usize, usize)>,
    pub depth: usize,
    pub criteria: SweepCriteria,
}

/// `m` in {4, 8, 16, 32, 64} paired with `M` in {2, 4, 8, 16}; the last `M` repeats.
pub const DEFAULT_LADDER: [(usize, usize); 5] = [(4, 2), (8, 4), (16, 8), (32, 16), (64, 16)];

impl Default for QuantizationSuite {
    fn default() -> Self {
        QuantizationSuite {
            spec: BenchmarkSpec::default(),
            fine_states: 1024,
            n_actions: 16,
            ladder: DEFAULT_LADDER.to_vec(),
            depth: crate::topology::DEFAULT_DEPTH,
            criteria: SweepCriteria::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizationReport {
    pub h2: H2Report,
    pub table: SweepTable,
    pub pass: bool,
}

impl QuantizationSuite {
    pub fn run(&self) -> Result<QuantizationReport> {
        let kernel = self.spec.kernel(self.fine_states, self.n_actions)?;
        let h2 = validate_h2(&kernel);
        let (sg, ag) = (kernel.state_grid().clone(), kernel.action_grid().clone());
        let gamma_ref = reference_policy(&sg, &ag)?;
        let cost = quadratic_cost(&sg, &ag)?;
        let psi = GridMeasure::uniform(sg.clone());
        let family = default_test_family(&sg, &ag, self.depth)?;
        let table = quantization_sweep(&kernel, &gamma_ref, &cost, &self.ladder, &psi, &family)?;
        let pass = h2.majorized && table.verdict(&self.criteria);
        Ok(QuantizationReport { h2, table, pass })
    }
}

// --------------------------------------------------------- derandomization

#[derive(Debug, Clone, PartialEq)]
pub struct DerandomizationSuite {
    pub spec: BenchmarkSpec,
    pub base_states: usize,
    pub n_actions: usize,
    pub m: usize,
    pub big_m: usize,
    pub refinements: Vec<usize>,
    pub depth: usize,
    /// Policy on the base grid to quantize; the reference policy when `None`.
    pub policy: Option<StationaryPolicy>,
    /// Bound on `|J(derandomized) - J(quantized)| / |J(quantized)|` at the last refinement.
    pub cost_tol: f64,
}

impl Default for DerandomizationSuite {
    fn default() -> Self {
        DerandomizationSuite {
            spec: BenchmarkSpec::default(),
            base_states: 128,
            n_actions: 16,
            m: 32,
            big_m: 8,
            refinements: vec![1, 2, 4, 8],
            depth: crate::topology::DEFAULT_DEPTH,
            policy: None,
            cost_tol: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DerandomizationRow {
    Done {
        r: usize,
        young_distance: f64,
        cost_derandomized: f64,
        cost_quantized: f64,
        relative_cost_gap: f64,
    },
    Failed {
        r: usize,
        note: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DerandomizationReport {
    pub rows: Vec<DerandomizationRow>,
    pub majorant: Option<MajorantCheck>,
    pub young_decreasing: bool,
    pub pass: bool,
}

impl DerandomizationReport {
    pub const CSV_HEADER: &'static str = "r,young_distance,cost_derandomized,cost_quantized,relative_cost_gap,note";

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for row in &self.rows {
            match row {
                DerandomizationRow::Done { r, young_distance, cost_derandomized, cost_quantized, relative_cost_gap } => {
                    s.push_str(&format!("{r},{young_distance},{cost_derandomized},{cost_quantized},{relative_cost_gap},\n"))
                }
                DerandomizationRow::Failed { r, note } => s.push_str(&format!("{r},,,,,{}\n", note.replace(',', ";"))),
            }
        }
        s
    }
}

impl DerandomizationSuite {
    pub fn run(&self) -> Result<DerandomizationReport> {
        let (sg, ag) = self.spec.grids(self.base_states, self.n_actions)?;
        let gamma_ref = match &self.policy {
            Some(p) if p.state_grid().same_as(&sg) && p.action_grid().same_as(&ag) => p.clone(),
            Some(_) => return Err(Error::GridMismatch("policy grids differ from the base grids")),
            None => reference_policy(&sg, &ag)?,
        };
        let qp = quantize_policy(&gamma_ref, &state_quantizer(&sg, self.m)?, &action_quantizer(&ag, self.big_m)?)?;
        let mut rows = Vec::with_capacity(self.refinements.len());
        let mut majorant = None;
        for &r in &self.refinements {
            let det = match derandomize(&qp, r) {
                Ok(d) => d,
                Err(e @ Error::InsufficientCells { .. }) => {
                    rows.push(DerandomizationRow::Failed { r, note: e.to_string() });
                    continue;
                }
                Err(e) => return Err(e),
            };
            let lifted = lift_quantized(&qp, r)?;
            let kernel = self.spec.kernel(self.base_states * r, self.n_actions)?;
            let fine = kernel.state_grid().clone();
            let family = default_test_family(&fine, &ag, self.depth)?;
            let psi = GridMeasure::uniform(fine.clone());
            let young = young_distance(&det, &lifted.policy, &psi, &family)?.value;
            let cost = quadratic_cost(&fine, &ag)?;
            let mut evaluate = |gamma: &StationaryPolicy| -> Result<f64> {
                let (pi, diag) = solve_invariant(&kernel, gamma)?;
                merge_majorant(&mut majorant, &diag);
                average_cost_exact(&occupation_measure(&pi, gamma, &kernel)?, &cost)
            };
            let cost_derandomized = evaluate(&det)?;
            let cost_quantized = evaluate(&lifted.policy)?;
            rows.push(DerandomizationRow::Done {
                r,
                young_distance: young,
                cost_derandomized,
                cost_quantized,
                relative_cost_gap: (cost_derandomized - cost_quantized).abs() / cost_quantized.abs(),
            });
        }
        let young: Vec<f64> = rows
            .iter()
            .filter_map(|r| match r {
                DerandomizationRow::Done { young_distance, .. } => Some(*young_distance),
                DerandomizationRow::Failed { .. } => None,
            })
            .collect();
        let all_done = young.len() == rows.len();
        let young_decreasing = all_done && young.windows(2).all(|w| w[1] < w[0]);
        let final_ok = matches!(rows.last(), Some(DerandomizationRow::Done { relative_cost_gap, .. }) if *relative_cost_gap < self.cost_tol);
        let pass = young_decreasing && final_ok;
        Ok(DerandomizationReport { rows, majorant, young_decreasing, pass })
    }
}

// --------------------------------------------------------------- MC checks

/// A (model, policy, cost) triple for simulation checks.
#[derive(Debug, Clone)]
pub struct McCase {
    pub label: String,
    pub kernel: TransitionKernel,
    pub policy: StationaryPolicy,
    pub cost: CostFunction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McCheck {
    pub label: String,
    pub seed: u64,
    pub exact: f64,
    pub estimate: f64,
    pub standard_error: f64,
    /// `|estimate - exact| <= 3 standard errors`.
    pub within: bool,
}

/// The 2-state example under the uniform policy, and the 128 x 16 benchmark
/// under the reference and uniform policies.
pub fn benchmark_mc_cases() -> Result<Vec<McCase>> {
    let sg = Arc::new(Grid::finite(2)?);
    let ag = Arc::new(Grid::finite(2)?);
    let rows = [[0.9, 0.1], [0.2, 0.8]];
    let two = TransitionKernel::from_fn(sg.clone(), ag.clone(), |x, _| rows[x].to_vec())?;
    let mut cases = vec![McCase {
        label: "two-state/uniform".into(),
        kernel: two,
        policy: StationaryPolicy::uniform(sg.clone(), ag.clone()),
        cost: CostFunction::from_fn(sg, ag, |x, _| x[0])?,
    }];
    let kernel = BenchmarkSpec::default().kernel(128, 16)?;
    let (sg, ag) = (kernel.state_grid().clone(), kernel.action_grid().clone());
    let cost = quadratic_cost(&sg, &ag)?;
    cases.push(McCase {
        label: "benchmark/reference".into(),
        kernel: kernel.clone(),
        policy: reference_policy(&sg, &ag)?,
        cost: cost.clone(),
    });
    cases.push(McCase {
        label: "benchmark/uniform".into(),
        kernel,
        policy: StationaryPolicy::uniform(sg, ag),
        cost,
    });
    Ok(cases)
}

/// Exact average cost against simulation for every case and seed.
pub fn mc_consistency(cases: &[McCase], seeds: &[u64], horizon: u64, burn_in: u64) -> Result<Vec<McCheck>> {
    let mut out = Vec::new();
    for (i, case) in cases.iter().enumerate() {
        let (pi, _) = solve_invariant(&case.kernel, &case.policy)?;
        let exact = average_cost_exact(&occupation_measure(&pi, &case.policy, &case.kernel)?, &case.cost)?;
        for &seed in seeds {
            let opts = McOptions { horizon, burn_in, seed, stream: i as u32 };
            let est = average_cost_mc(&case.kernel, &case.policy, &case.cost, opts)?;
            out.push(McCheck {
                label: case.label.clone(),
                seed,
                exact,
                estimate: est.estimate,
                standard_error: est.standard_error,
                within: (est.estimate - exact).abs() <= 3.0 * est.standard_error,
            });
        }
    }
    Ok(out)
}
