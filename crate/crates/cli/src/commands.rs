use std::fmt::Write as _;
use std::time::Instant;

use relaxctl_core::benchmark::BenchmarkSpec;
use relaxctl_core::experiments::{run_topology_suite, ContinuitySuite, DerandomizationSuite, TopologySuite};
use relaxctl_core::invariant::{
    average_cost_exact, average_cost_mc, continuity_experiment, occupation_measure, solve_invariant, ContinuityTolerances,
    McOptions, MajorantCheck, Uniqueness, OCCUPATION_TOL,
};
use relaxctl_core::kernel::validate_h2;
use relaxctl_core::quantize::{non_increasing_with_slack, quantization_sweep, state_quantizer, SweepCriteria};
use relaxctl_core::textio::export_codebook;
use relaxctl_core::topology::{borkar_semimetric, default_test_family, young_distance};

use crate::config::{build_policy, Experiment, PolicySpec};
use crate::error::CliError;
use crate::report::RunReport;

fn echo(exp: &Experiment) -> String {
    serde_json::to_string_pretty(&exp.config).expect("config serializes")
}

fn majorant_verdict(report: &mut RunReport, check: Option<MajorantCheck>) {
    if let Some(m) = check {
        report.verdict(
            "majorant",
            m.iterates > 0 && m.holds(),
            format!("{} iterates, {} cells above the majorant, min margin {:e}", m.iterates, m.violations, m.min_margin),
        );
    }
}

/// Invariant measure and occupation measure of the configured policy.
pub fn cmd_invariant(exp: &Experiment) -> Result<RunReport, CliError> {
    let mut report = RunReport::new("invariant", echo(exp));
    let start = Instant::now();
    let (pi, diag) = solve_invariant(&exp.kernel, &exp.policy)?;
    let mu = occupation_measure(&pi, &exp.policy, &exp.kernel)?;
    let cost = average_cost_exact(&mu, &exp.cost)?;
    report.timings.push(("solve".into(), start.elapsed()));

    let sg = exp.kernel.state_grid();
    let mut csv = String::from("cell,x,pi\n");
    for (i, w) in pi.weights().iter().enumerate() {
        writeln!(csv, "{i},{},{w}", sg.center(i)[0]).unwrap();
    }
    report.artifact("invariant.csv", csv);
    let nu = exp.kernel.n_actions();
    let mut csv = String::from("cell,action,mu\n");
    for (k, w) in mu.joint.iter().enumerate() {
        writeln!(csv, "{},{},{w}", k / nu, k % nu).unwrap();
    }
    report.artifact("occupation.csv", csv);

    if sg.len() <= 16 {
        let shown: Vec<String> = pi.weights().iter().map(|w| format!("{w:.12}")).collect();
        report.note(format!("pi = ({})", shown.join(", ")));
    }
    report.note(format!("J = {cost}"));
    report.note(format!(
        "iterations {}, damped {}",
        diag.iterations, diag.damped
    ));
    report.verdict(
        "invariance",
        diag.uniqueness == Uniqueness::Unique && mu.residual <= OCCUPATION_TOL,
        format!("uniqueness {:?}, residual {:e}", diag.uniqueness, mu.residual),
    );
    majorant_verdict(&mut report, diag.majorant);

    let sec = &exp.config.invariant;
    if sec.mc_horizon > 0 {
        let start = Instant::now();
        let mut csv = String::from("run,estimate,standard_error,exact\n");
        let mut worst = 0.0f64;
        let mut all_within = true;
        for run in 0..sec.mc_runs {
            let opts = McOptions { horizon: sec.mc_horizon, burn_in: sec.mc_burn_in, seed: exp.seed, stream: run };
            let est = average_cost_mc(&exp.kernel, &exp.policy, &exp.cost, opts)?;
            let diff = (est.estimate - cost).abs();
            all_within &= diff <= 3.0 * est.standard_error + 1e-12 * cost.abs().max(1.0);
            if est.standard_error > 0.0 {
                worst = worst.max(diff / est.standard_error);
            }
            writeln!(csv, "{run},{},{},{cost}", est.estimate, est.standard_error).unwrap();
        }
        report.artifact("mc.csv", csv);
        report.verdict("monte carlo", all_within, format!("{} runs, worst deviation {worst:.2} standard errors", sec.mc_runs));
        report.timings.push(("monte carlo".into(), start.elapsed()));
    }
    Ok(report)
}

/// Young and Borkar verdicts on generated sequences, then on the configured one.
pub fn cmd_topology(exp: &Experiment) -> Result<RunReport, CliError> {
    let mut report = RunReport::new("topology", echo(exp));
    let sec = &exp.config.topology;
    let (sg, ag) = (exp.kernel.state_grid(), exp.kernel.action_grid());
    let suite = TopologySuite {
        state_grid: sg.clone(),
        action_grid: ag.clone(),
        psi: exp.psi.clone(),
        depth: exp.config.depth,
        seed: exp.seed,
        converging: sec.converging,
        alternating: sec.alternating,
        constant: sec.constant,
        threshold: sec.threshold,
        max_n: sec.max_n,
        tail_window: sec.tail_window,
    };
    let start = Instant::now();
    let result = run_topology_suite(&suite)?;
    report.timings.push(("suite".into(), start.elapsed()));
    let pre = result.precondition;
    if pre.equivalent() {
        report.note("precondition: psi has a positive density; checking verdict agreement");
    } else {
        report.note(format!(
            "precondition unmet (absolutely continuous {}, finite {}, positive everywhere {}); checking Borkar => Young only",
            pre.absolutely_continuous, pre.finite, pre.positive_density
        ));
    }
    let mut summary = String::from("sequence,kind,young_tail,borkar_tail,young_converged,borkar_converged,consistent\n");
    for o in &result.outcomes {
        writeln!(
            summary,
            "{},{:?},{},{},{},{},{}",
            o.index, o.kind, o.young_tail, o.borkar_tail, o.young_converged, o.borkar_converged, o.consistent
        )
        .unwrap();
        report.artifact(format!("topology_seq{:02}.csv", o.index), o.to_csv());
    }
    report.artifact("topology_summary.csv", summary);
    let consistent = result.outcomes.iter().filter(|o| o.consistent).count();
    report.verdict(
        "topology suite",
        result.pass,
        format!("{consistent}/{} sequences consistent", result.outcomes.len()),
    );

    let start = Instant::now();
    let family = default_test_family(sg, ag, exp.config.depth)?;
    let mut csv = String::from("n,young_value,borkar_value\n");
    let (mut young, mut borkar) = (Vec::new(), Vec::new());
    for (n, gamma) in &exp.sequence {
        let y = young_distance(gamma, &exp.policy, &exp.psi, &family)?.value;
        let b = borkar_semimetric(gamma, &exp.policy, &family)?.value;
        writeln!(csv, "{n},{y},{b}").unwrap();
        young.push(y);
        borkar.push(b);
    }
    report.artifact("topology_configured.csv", csv);
    report.timings.push(("configured sequence".into(), start.elapsed()));
    let decreasing = non_increasing_with_slack(&young, 0.0, 0.0) && non_increasing_with_slack(&borkar, 0.0, 0.0);
    let (y_last, b_last) = (*young.last().unwrap(), *borkar.last().unwrap());
    let agree = (y_last < sec.threshold) == (b_last < sec.threshold) || !pre.equivalent();
    report.verdict(
        "configured sequence",
        decreasing && agree,
        format!("both columns non-increasing {decreasing}, last values young {y_last:e} borkar {b_last:e}"),
    );
    Ok(report)
}

/// Random finite MDP suite plus the configured model and sequence.
pub fn cmd_continuity(exp: &Experiment) -> Result<RunReport, CliError> {
    let mut report = RunReport::new("continuity", echo(exp));
    let sec = &exp.config.continuity;
    let tolerances = ContinuityTolerances { young: sec.young_tol, tv: sec.tv_tol };
    if sec.mdps > 0 {
        let suite = ContinuitySuite {
            seed: exp.seed,
            mdps: sec.mdps,
            max_states: sec.max_states,
            max_actions: sec.max_actions,
            zero_prob: sec.zero_prob,
            depth: exp.config.depth,
            max_exponent: sec.max_exponent,
            tolerances,
            slack: sec.slack,
        };
        let start = Instant::now();
        let result = suite.run()?;
        report.timings.push(("random mdps".into(), start.elapsed()));
        let mut csv = String::from("draw,n_states,n_actions,young_last,tv_last,tv_monotone,implication,pass\n");
        for o in &result.outcomes {
            let last = o.table.rows.last().expect("non-empty sequence");
            writeln!(
                csv,
                "{},{},{},{},{},{},{},{}",
                o.draw, o.n_states, o.n_actions, last.young_distance, last.tv_invariant, o.tv_monotone, o.implication, o.pass
            )
            .unwrap();
        }
        report.artifact("continuity_mdps.csv", csv);
        let mut csv = String::from("draw,reason\n");
        for (draw, reason) in &result.excluded {
            writeln!(csv, "{draw},{reason}").unwrap();
            report.note(format!("draw {draw} excluded: {reason}"));
        }
        report.artifact("continuity_excluded.csv", csv);
        let total = result.outcomes.len();
        let continuous = result.outcomes.iter().filter(|o| o.table.pass && o.tv_monotone).count();
        report.verdict(
            "random mdps",
            continuous == total,
            format!(
                "{continuous}/{total} reach the tolerances at the last n with tv non-increasing, {} reducible draws excluded",
                result.excluded.len()
            ),
        );
        let implication = result.outcomes.iter().filter(|o| o.implication).count();
        report.verdict(
            "young-to-tv implication",
            implication == total,
            format!("young <= {:e} implies tv <= {:e} on every row for {implication}/{total} mdps", sec.young_tol, sec.tv_tol),
        );
    }

    let start = Instant::now();
    let (sg, ag) = (exp.kernel.state_grid(), exp.kernel.action_grid());
    let family = default_test_family(sg, ag, exp.config.depth)?;
    let table = continuity_experiment(&exp.kernel, &exp.sequence, &exp.policy, &exp.psi, &family, Some(&exp.cost), tolerances)?;
    report.timings.push(("configured model".into(), start.elapsed()));
    report.artifact("continuity_model.csv", table.to_csv());
    let tv: Vec<f64> = table.rows.iter().map(|r| r.tv_invariant).collect();
    let monotone = non_increasing_with_slack(&tv, sec.slack, 0.0);
    let last = table.rows.last().expect("non-empty sequence");
    report.verdict(
        "configured model",
        table.pass && monotone,
        format!(
            "at n = {}: young {:e}, tv {:e}; tv non-increasing {monotone}",
            last.n, last.young_distance, last.tv_invariant
        ),
    );
    majorant_verdict(&mut report, table.majorant);
    Ok(report)
}

/// Quantization sweep on the configured model, then the derandomization ladder.
pub fn cmd_quantize(exp: &Experiment) -> Result<RunReport, CliError> {
    let mut report = RunReport::new("quantize", echo(exp));
    let bench: BenchmarkSpec =
        exp.benchmark.ok_or_else(|| CliError::Config("quantize needs an additive_noise model".into()))?;
    let sec = &exp.config.quantize;
    let (sg, ag) = (exp.kernel.state_grid(), exp.kernel.action_grid());

    let h2 = validate_h2(&exp.kernel);
    report.verdict(
        "h2",
        h2.majorized,
        format!("action modulus {:e}, state modulus {:e}", h2.action_modulus, h2.state_modulus),
    );

    let start = Instant::now();
    let family = default_test_family(sg, ag, exp.config.depth)?;
    let table = quantization_sweep(&exp.kernel, &exp.policy, &exp.cost, &sec.ladder, &exp.psi, &family)?;
    report.timings.push(("sweep".into(), start.elapsed()));
    report.artifact("quantization_sweep.csv", table.to_csv());
    if let Some(&(m, _)) = sec.ladder.last() {
        report.artifact("codebook.txt", export_codebook(&state_quantizer(sg, m)?));
    }
    let criteria = SweepCriteria {
        slack: sec.slack,
        floor: sec.floor,
        young_tol: sec.young_tol,
        relative_cost_tol: sec.relative_cost_tol,
    };
    let relative = table.relative_cost_gap().map(|g| format!("{g:e}")).unwrap_or_else(|| "n/a".into());
    report.verdict(
        "quantization sweep",
        table.verdict(&criteria),
        format!("reference cost {}, relative gap at the last rung {relative}", table.reference_cost),
    );
    let mut majorant = table.majorant;

    let base_policy = match &exp.config.policy {
        PolicySpec::File { .. } => None,
        spec => {
            let (bsg, bag) = bench.grids(sec.base_states, ag.len())?;
            Some(build_policy(spec, &bsg, &bag, std::path::Path::new("."))?)
        }
    };
    match base_policy {
        None => report.note("derandomization skipped: a policy file fixes the grid, so no refinement ladder exists"),
        Some(policy) => {
            let suite = DerandomizationSuite {
                spec: bench,
                base_states: sec.base_states,
                n_actions: ag.len(),
                m: sec.m,
                big_m: sec.big_m,
                refinements: sec.refinements.clone(),
                depth: exp.config.depth,
                policy: Some(policy),
                cost_tol: sec.derandomized_cost_tol,
            };
            let start = Instant::now();
            let result = suite.run()?;
            report.timings.push(("derandomization".into(), start.elapsed()));
            report.artifact("derandomization.csv", result.to_csv());
            if let Some(m) = &result.majorant {
                majorant.get_or_insert_with(MajorantCheck::empty).merge(m);
            }
            report.verdict(
                "derandomization",
                result.pass,
                format!("young distance strictly decreasing {}", result.young_decreasing),
            );
        }
    }
    majorant_verdict(&mut report, majorant);
    Ok(report)
}
