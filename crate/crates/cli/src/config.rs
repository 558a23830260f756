//! JSON experiment configuration and the objects it describes.
//!
//! Every optional field has a default, and the resolved configuration
//! (defaults filled in, command-line overrides applied) is echoed into the run
//! report so the run can be repeated bit for bit.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use relaxctl_core::benchmark::{cosine_psi, quadratic_cost, rounding_policy, BenchmarkSpec};
use relaxctl_core::kernel::{CostFunction, StationaryPolicy, TransitionKernel};
use relaxctl_core::measure::{Grid, GridKind, GridMeasure};
use relaxctl_core::textio::{import_cost, import_kernel, import_policy};
use relaxctl_core::topology::DEFAULT_DEPTH;

use crate::error::CliError;

pub const SCHEMA: &str = "relaxctl-config/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema: String,
    /// Required here or on the command line.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default = "default_depth")]
    pub depth: usize,
    pub model: ModelSpec,
    #[serde(default)]
    pub psi: PsiSpec,
    #[serde(default)]
    pub policy: PolicySpec,
    #[serde(default)]
    pub cost: CostSpec,
    #[serde(default)]
    pub sequence: SequenceSpec,
    #[serde(default)]
    pub invariant: InvariantSection,
    #[serde(default)]
    pub topology: TopologySection,
    #[serde(default)]
    pub continuity: ContinuitySection,
    #[serde(default)]
    pub quantize: QuantizeSection,
}

fn default_depth() -> usize {
    DEFAULT_DEPTH
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// Scalar `x' = a x + b u + w` on `[-1, 1]` with truncated Gaussian `w`.
    AdditiveNoise {
        #[serde(default = "half")]
        state_gain: f64,
        #[serde(default = "half")]
        action_gain: f64,
        #[serde(default = "default_sigma")]
        sigma: f64,
        #[serde(default = "default_cutoff")]
        cutoff: f64,
        #[serde(default = "yes")]
        bounded_drift: bool,
        state_cells: usize,
        action_cells: usize,
    },
    KernelFile {
        path: PathBuf,
    },
}

fn half() -> f64 {
    0.5
}
fn default_sigma() -> f64 {
    0.3
}
fn default_cutoff() -> f64 {
    3.0
}
fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PsiSpec {
    #[default]
    Uniform,
    /// Density proportional to `1 + amplitude cos(pi x)`.
    CosineBump { amplitude: f64 },
    /// Cell weights, normalized on load.
    Weights { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicySpec {
    #[default]
    Uniform,
    File { path: PathBuf },
    /// Randomized rounding of `u = gain * x`.
    LinearFeedback { gain: f64 },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CostSpec {
    /// `x^2 + 0.5 u^2`.
    #[default]
    Quadratic,
    Constant { value: f64 },
    File { path: PathBuf },
    /// `c(x, u) = x`, the first state coordinate.
    StateCoordinate,
}

/// Sequence converging to the configured policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SequenceSpec {
    /// `gamma_n = mix(policy, toward, n^-power)` for `n = 2^k`, `k = 1..=max_exponent`.
    Mixture {
        toward: PolicySpec,
        #[serde(default = "default_exponent")]
        max_exponent: u32,
        #[serde(default = "one")]
        power: f64,
    },
    Files {
        members: Vec<SequenceFile>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceFile {
    pub n: usize,
    pub path: PathBuf,
}

impl Default for SequenceSpec {
    fn default() -> Self {
        SequenceSpec::Mixture { toward: PolicySpec::Uniform, max_exponent: default_exponent(), power: 1.0 }
    }
}

fn default_exponent() -> u32 {
    10
}
fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InvariantSection {
    /// Simulation horizon for the Monte Carlo cross-check; 0 skips it.
    pub mc_horizon: u64,
    pub mc_burn_in: u64,
    pub mc_runs: u32,
}

impl Default for InvariantSection {
    fn default() -> Self {
        InvariantSection { mc_horizon: 0, mc_burn_in: 1000, mc_runs: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologySection {
    pub converging: usize,
    pub alternating: usize,
    pub constant: usize,
    pub threshold: f64,
    pub max_n: usize,
    pub tail_window: usize,
}

impl Default for TopologySection {
    fn default() -> Self {
        TopologySection { converging: 10, alternating: 10, constant: 0, threshold: 1e-6, max_n: 1024, tail_window: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContinuitySection {
    /// Random finite MDPs; 0 runs only the configured model.
    pub mdps: usize,
    pub max_states: usize,
    pub max_actions: usize,
    pub zero_prob: f64,
    pub max_exponent: u32,
    pub young_tol: f64,
    pub tv_tol: f64,
    pub slack: f64,
}

impl Default for ContinuitySection {
    fn default() -> Self {
        ContinuitySection {
            mdps: 50,
            max_states: 10,
            max_actions: 10,
            zero_prob: 0.2,
            max_exponent: 10,
            young_tol: 1e-3,
            tv_tol: 1e-2,
            slack: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantizeSection {
    /// `(m, M)` rungs.
    pub ladder: Vec<(usize, usize)>,
    pub slack: f64,
    pub floor: f64,
    pub young_tol: f64,
    pub relative_cost_tol: f64,
    /// Derandomization runs on a coarser base grid with `base_states` cells.
    pub base_states: usize,
    pub m: usize,
    pub big_m: usize,
    pub refinements: Vec<usize>,
    pub derandomized_cost_tol: f64,
}

impl Default for QuantizeSection {
    fn default() -> Self {
        QuantizeSection {
            ladder: relaxctl_core::experiments::DEFAULT_LADDER.to_vec(),
            slack: 0.1,
            floor: 1e-12,
            young_tol: 1e-3,
            relative_cost_tol: 0.05,
            base_states: 128,
            m: 32,
            big_m: 8,
            refinements: vec![1, 2, 4, 8],
            derandomized_cost_tol: 0.02,
        }
    }
}

/// Command-line overrides.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub depth: Option<usize>,
    pub output: Option<PathBuf>,
}

fn config_err(message: impl Into<String>) -> CliError {
    CliError::Config(message.into())
}

fn read_file(base: &Path, path: &Path) -> Result<String, CliError> {
    let full = base.join(path);
    std::fs::read_to_string(&full).map_err(|e| config_err(format!("cannot read {}: {e}", full.display())))
}

/// A loaded configuration with every referenced file read and validated.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: Config,
    pub seed: u64,
    pub output: PathBuf,
    pub kernel: TransitionKernel,
    pub benchmark: Option<BenchmarkSpec>,
    pub psi: GridMeasure,
    pub policy: StationaryPolicy,
    pub cost: CostFunction,
    pub sequence: Vec<(usize, StationaryPolicy)>,
}

impl Experiment {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Experiment, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        let mut config: Config = serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        if let Some(seed) = overrides.seed {
            config.seed = Some(seed);
        }
        if let Some(depth) = overrides.depth {
            config.depth = depth;
        }
        if let Some(out) = &overrides.output {
            config.output = Some(out.clone());
        }
        let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let base = std::fs::canonicalize(parent).map_err(|e| config_err(format!("{}: {e}", parent.display())))?;
        Self::from_config(config, &base)
    }

    /// Relative paths are rewritten against `base` so the echoed config runs from anywhere.
    pub fn from_config(mut config: Config, base: &Path) -> Result<Experiment, CliError> {
        resolve_paths(&mut config, base);
        if config.schema != SCHEMA {
            return Err(config_err(format!("unsupported schema {:?}, expected {SCHEMA:?}", config.schema)));
        }
        let seed = config.seed.ok_or_else(|| config_err("no seed given in the config or with --seed"))?;
        let output = config.output.clone().ok_or_else(|| config_err("no output directory given in the config or with --out"))?;
        if config.depth == 0 {
            return Err(config_err("depth must be positive"));
        }
        let (kernel, benchmark) = build_model(&config.model, base)?;
        let (sg, ag) = (kernel.state_grid().clone(), kernel.action_grid().clone());
        let psi = build_psi(&config.psi, &sg)?;
        let policy = build_policy(&config.policy, &sg, &ag, base)?;
        let cost = build_cost(&config.cost, &sg, &ag, base)?;
        let sequence = build_sequence(&config.sequence, &policy, &sg, &ag, base)?;
        validate_sections(&config)?;
        Ok(Experiment { config, seed, output, kernel, benchmark, psi, policy, cost, sequence })
    }
}

fn resolve_paths(config: &mut Config, base: &Path) {
    let fix = |p: &mut PathBuf| *p = base.join(&*p);
    let fix_policy = |spec: &mut PolicySpec| {
        if let PolicySpec::File { path } = spec {
            *path = base.join(&*path);
        }
    };
    if let ModelSpec::KernelFile { path } = &mut config.model {
        fix(path);
    }
    fix_policy(&mut config.policy);
    if let CostSpec::File { path } = &mut config.cost {
        fix(path);
    }
    match &mut config.sequence {
        SequenceSpec::Mixture { toward, .. } => fix_policy(toward),
        SequenceSpec::Files { members } => members.iter_mut().for_each(|m| fix(&mut m.path)),
    }
}

fn build_model(spec: &ModelSpec, base: &Path) -> Result<(TransitionKernel, Option<BenchmarkSpec>), CliError> {
    match spec {
        ModelSpec::AdditiveNoise { state_gain, action_gain, sigma, cutoff, bounded_drift, state_cells, action_cells } => {
            if *state_cells == 0 || *action_cells == 0 {
                return Err(config_err("grid resolutions must be positive"));
            }
            let bench = BenchmarkSpec {
                state_gain: *state_gain,
                action_gain: *action_gain,
                sigma: *sigma,
                cutoff: *cutoff,
                bounded_drift: *bounded_drift,
            };
            let kernel = bench.kernel(*state_cells, *action_cells).map_err(|e| config_err(format!("model: {e}")))?;
            Ok((kernel, Some(bench)))
        }
        ModelSpec::KernelFile { path } => {
            let kernel = import_kernel(&read_file(base, path)?).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
            Ok((kernel, None))
        }
    }
}

fn build_psi(spec: &PsiSpec, sg: &Arc<Grid>) -> Result<GridMeasure, CliError> {
    let psi = match spec {
        PsiSpec::Uniform => Ok(GridMeasure::uniform(sg.clone())),
        PsiSpec::CosineBump { amplitude } => {
            if sg.kind() != GridKind::Box || sg.dim() != 1 {
                return Err(config_err("psi cosine_bump needs a one-dimensional box model"));
            }
            if !(0.0..=1.0).contains(amplitude) {
                return Err(config_err("psi cosine_bump amplitude must lie in [0, 1]"));
            }
            cosine_psi(sg, *amplitude)
        }
        PsiSpec::Weights { values } => {
            if values.len() != sg.len() {
                return Err(config_err(format!("psi has {} weights for {} state cells", values.len(), sg.len())));
            }
            GridMeasure::new(sg.clone(), values.clone()).and_then(|m| m.normalized())
        }
    };
    psi.map_err(|e| config_err(format!("psi: {e}")))
}

pub fn build_policy(spec: &PolicySpec, sg: &Arc<Grid>, ag: &Arc<Grid>, base: &Path) -> Result<StationaryPolicy, CliError> {
    match spec {
        PolicySpec::Uniform => Ok(StationaryPolicy::uniform(sg.clone(), ag.clone())),
        PolicySpec::File { path } => {
            let gamma = import_policy(&read_file(base, path)?).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
            if !gamma.state_grid().same_as(sg) || !gamma.action_grid().same_as(ag) {
                return Err(config_err(format!("{}: policy grids differ from the model grids", path.display())));
            }
            Ok(gamma)
        }
        PolicySpec::LinearFeedback { gain } => {
            if sg.kind() != GridKind::Box || sg.dim() != 1 || ag.dim() != 1 {
                return Err(config_err("linear_feedback needs one-dimensional box grids"));
            }
            let gain = *gain;
            rounding_policy(sg, ag, move |x| gain * x).map_err(|e| config_err(format!("policy: {e}")))
        }
    }
}

fn build_cost(spec: &CostSpec, sg: &Arc<Grid>, ag: &Arc<Grid>, base: &Path) -> Result<CostFunction, CliError> {
    let cost = match spec {
        CostSpec::Quadratic => quadratic_cost(sg, ag),
        CostSpec::Constant { value } => CostFunction::from_fn(sg.clone(), ag.clone(), |_, _| *value),
        CostSpec::StateCoordinate => CostFunction::from_fn(sg.clone(), ag.clone(), |x, _| x[0]),
        CostSpec::File { path } => {
            let c = import_cost(&read_file(base, path)?).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
            if !c.state_grid().same_as(sg) || !c.action_grid().same_as(ag) {
                return Err(config_err(format!("{}: cost grids differ from the model grids", path.display())));
            }
            return Ok(c);
        }
    };
    cost.map_err(|e| config_err(format!("cost: {e}")))
}

fn build_sequence(
    spec: &SequenceSpec,
    limit: &StationaryPolicy,
    sg: &Arc<Grid>,
    ag: &Arc<Grid>,
    base: &Path,
) -> Result<Vec<(usize, StationaryPolicy)>, CliError> {
    match spec {
        SequenceSpec::Mixture { toward, max_exponent, power } => {
            if *max_exponent == 0 || *max_exponent > 30 {
                return Err(config_err("sequence max_exponent must lie in 1..=30"));
            }
            if !(*power > 0.0) {
                return Err(config_err("sequence power must be positive"));
            }
            let other = build_policy(toward, sg, ag, base)?;
            (1..=*max_exponent)
                .map(|k| {
                    let n = 1usize << k;
                    let alpha = (n as f64).powf(-power);
                    relaxctl_core::kernel::mix_policies(limit, &other, alpha)
                        .map(|g| (n, g))
                        .map_err(|e| config_err(format!("sequence: {e}")))
                })
                .collect()
        }
        SequenceSpec::Files { members } => {
            if members.is_empty() {
                return Err(config_err("sequence files list is empty"));
            }
            members
                .iter()
                .map(|m| build_policy(&PolicySpec::File { path: m.path.clone() }, sg, ag, base).map(|g| (m.n, g)))
                .collect()
        }
    }
}

fn validate_sections(config: &Config) -> Result<(), CliError> {
    let t = &config.topology;
    if t.max_n == 0 || t.tail_window == 0 || t.tail_window > t.max_n {
        return Err(config_err("topology needs max_n >= tail_window >= 1"));
    }
    if !(t.threshold > 0.0) {
        return Err(config_err("topology threshold must be positive"));
    }
    let c = &config.continuity;
    if c.max_exponent == 0 || c.max_exponent > 30 {
        return Err(config_err("continuity max_exponent must lie in 1..=30"));
    }
    if !(0.0..1.0).contains(&c.zero_prob) {
        return Err(config_err("continuity zero_prob must lie in [0, 1)"));
    }
    if c.max_states < 2 || c.max_actions < 2 {
        return Err(config_err("continuity max_states and max_actions must be at least 2"));
    }
    let q = &config.quantize;
    if q.ladder.iter().any(|&(m, mm)| m == 0 || mm == 0) {
        return Err(config_err("quantize ladder resolutions must be positive"));
    }
    if q.base_states == 0 || q.m == 0 || q.big_m == 0 || q.refinements.iter().any(|&r| r == 0) {
        return Err(config_err("quantize derandomization resolutions must be positive"));
    }
    let i = &config.invariant;
    if i.mc_horizon > 0 && (i.mc_runs == 0 || i.mc_horizon <= i.mc_burn_in) {
        return Err(config_err("invariant mc_horizon must exceed mc_burn_in with at least one run"));
    }
    Ok(())
}
