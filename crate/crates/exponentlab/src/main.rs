//! Command-line front end: loads a scenario, runs the requested computation
//! through the library, and emits a report (JSON on stdout, aligned text on
//! stderr, optional per-table CSV files). The CLI adds no numerics of its
//! own; every cell in a report is a library-call result.

use clap::{Args, Parser, Subcommand};
use exponentlab::agent_opt::{choose_expert, optimize_agent_policy, SelectionReport};
use exponentlab::expert_opt::{
    default_guesses, optimize_expert_alternating, ExpertProblem, ExpertSolution,
};
use exponentlab::fenchel::Tolerances;
use exponentlab::mgf::ModelView;
use exponentlab::report::{Cell, Report, Table};
use exponentlab::scenario::{parse_scenario, Policy, Scenario};
use exponentlab::simulate::{
    simulate_agent0, simulate_expert, Agent0SimReport, ExpertSimReport, SimConfig, SimExpert,
    SlopeEstimate,
};
use exponentlab::study::{run_reference_study, selection_table, StudyOptions};
use std::path::PathBuf;
use std::process::ExitCode;

/// Scenario used when `--scenario` is omitted: the bundled three-hypothesis,
/// two-source Gaussian reference configuration.
const BUNDLED_SCENARIO: &str = include_str!("../scenarios/reference.json");

const EXIT_OK: u8 = 0;
const EXIT_INPUT: u8 = 2;
const EXIT_STRICT: u8 = 3;
const EXIT_REPRODUCTION: u8 = 4;

#[derive(Parser)]
#[command(
    name = "exponentlab",
    about = "Loss exponents, optimal policies, and expert selection for multihypothesis social learning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonOpts {
    /// Scenario JSON file (defaults to the bundled reference scenario).
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Directory for per-table CSV output.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Newton/gradient convergence tolerance.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Per-(hypothesis, decision) probability exponents and the loss
    /// exponent I_k for one expert or all of them.
    Exponents {
        #[command(flatten)]
        common: CommonOpts,
        /// Expert id or "all".
        #[arg(long, default_value = "all")]
        expert: String,
        /// Comma-separated policy weights (defaults to the uniform policy).
        #[arg(long)]
        policy: Option<String>,
    },
    /// Optimal policies: a single expert, agent 0 following an expert, or
    /// the full expert-selection comparison.
    Optimize {
        #[command(flatten)]
        common: CommonOpts,
        /// "select", "expert", or "agent0".
        target: String,
        /// Expert id (required for targets "expert" and "agent0").
        #[arg(long)]
        expert: Option<usize>,
        /// Exit with code 3 when any optimization fails to converge.
        #[arg(long)]
        strict: bool,
    },
    /// Monte Carlo cross-validation of the analytic exponents.
    Simulate {
        #[command(flatten)]
        common: CommonOpts,
        /// Simulation config JSON {"n_grid": [...], "trials": N, "seed": N}
        /// (defaults to a small built-in grid).
        #[arg(long)]
        sim: Option<PathBuf>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Regenerates the full reference study: selection table, 0-1 variant,
    /// delta sweep with trap check, region boundaries, and ranking audit.
    ReferenceStudy {
        #[command(flatten)]
        common: CommonOpts,
        /// Simplex grid step for the exhaustive-search oracle.
        #[arg(long)]
        grid_step: Option<f64>,
    },
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("EXPONENTLAB_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err((code, msg)) => {
            // Single-line machine-readable error record.
            println!(
                "{}",
                serde_json::json!({ "schema": 1, "error": msg, "exit": code })
            );
            ExitCode::from(code)
        }
    }
}

type CmdError = (u8, String);

fn input_err<E: std::fmt::Display>(e: E) -> CmdError {
    (EXIT_INPUT, e.to_string())
}

fn load(common: &CommonOpts) -> Result<(Scenario, String), CmdError> {
    let text = match &common.scenario {
        Some(path) => std::fs::read_to_string(path)
            .map_err(|e| input_err(format!("cannot read {}: {e}", path.display())))?,
        None => BUNDLED_SCENARIO.to_string(),
    };
    let scenario = parse_scenario(&text).map_err(input_err)?;
    Ok((scenario, text))
}

fn tolerances(common: &CommonOpts) -> Tolerances {
    let mut tol = Tolerances::default();
    if let Some(t) = common.tol {
        tol.newton_residual = t;
    }
    tol
}

fn emit(report: &Report, common: &CommonOpts) -> Result<(), CmdError> {
    println!("{}", report.to_json());
    eprint!("{}", report.to_text());
    if let Some(dir) = &common.csv {
        report
            .write_csv(dir)
            .map_err(|e| input_err(format!("cannot write CSV to {}: {e}", dir.display())))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<u8, CmdError> {
    match cli.command {
        Command::Exponents { common, expert, policy } => {
            cmd_exponents(&common, &expert, policy.as_deref())
        }
        Command::Optimize { common, target, expert, strict } => {
            cmd_optimize(&common, &target, expert, strict)
        }
        Command::Simulate { common, sim, seed } => cmd_simulate(&common, sim.as_deref(), seed),
        Command::ReferenceStudy { common, grid_step } => cmd_reference_study(&common, grid_step),
    }
}

fn parse_policy(text: &str, dim: usize) -> Result<Policy, CmdError> {
    let weights: Vec<f64> = text
        .split(',')
        .map(|w| w.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| input_err(format!("bad --policy: {e}")))?;
    if weights.len() != dim {
        return Err(input_err(format!(
            "--policy has {} weights, expert observes {dim} sources",
            weights.len()
        )));
    }
    Policy::new(weights).map_err(input_err)
}

fn select_experts(scenario: &Scenario, sel: &str) -> Result<Vec<usize>, CmdError> {
    if sel == "all" {
        return Ok(scenario.experts.iter().map(|e| e.id).collect());
    }
    let id: usize = sel
        .parse()
        .map_err(|_| input_err(format!("--expert must be an id or \"all\", got {sel:?}")))?;
    scenario
        .expert(id)
        .map(|_| vec![id])
        .ok_or_else(|| input_err(format!("no expert with id {id}")))
}

fn cmd_exponents(
    common: &CommonOpts,
    expert_sel: &str,
    policy: Option<&str>,
) -> Result<u8, CmdError> {
    let (scenario, text) = load(common)?;
    let tol = tolerances(common);
    let ids = select_experts(&scenario, expert_sel)?;
    let mut report = Report::new("exponents", Some(&text));

    let mut summary = Table::new("exponent summary", &["expert", "policy", "I_k"]);
    for id in ids {
        let expert = scenario.expert(id).ok_or_else(|| input_err(format!("no expert with id {id}")))?;
        let prob = ExpertProblem::new(&scenario, expert).map_err(input_err)?;
        let g = prob.num_sources();
        let x = match policy {
            Some(p) => parse_policy(p, g)?,
            None => Policy::barycenter(g),
        };
        let matrix = prob.exponent_matrix(x.weights(), &tol);
        let mut t = Table::new(
            &format!("expert {id} exponents"),
            &["hypothesis", "decision", "rate", "probability exponent", "term"],
        );
        let mut best = f64::INFINITY;
        for (m, row) in matrix.iter().enumerate() {
            for (d, e) in row.iter().enumerate() {
                let c = prob.loss.rate(m, d);
                let term = if c.is_finite() { e.value + c } else { f64::INFINITY };
                best = best.min(term);
                t.push(vec![m.into(), d.into(), c.into(), e.value.into(), term.into()]);
            }
        }
        report.tables.push(t);
        summary.push(vec![id.into(), fmt_policy(x.weights()).into(), best.into()]);
        if policy.is_none() {
            report
                .diagnostics
                .push(format!("expert {id}: no --policy given, used the uniform policy"));
        }
    }
    report.tables.push(summary);
    emit(&report, common)?;
    Ok(EXIT_OK)
}

fn fmt_policy(w: &[f64]) -> String {
    w.iter()
        .map(|v| format!("{v:.4}"))
        .collect::<Vec<_>>()
        .join(", ")
}

fn trace_table(name: &str, sol: &ExpertSolution) -> Table {
    let mut t = Table::new(name, &["iteration", "x_1", "x_2", "I_k"]);
    for p in &sol.trace {
        let mut row: Vec<Cell> = vec![p.iteration.into()];
        row.extend(p.policy.iter().map(|&w| Cell::from(w)));
        row.push(p.exponent.into());
        t.push(row);
    }
    t
}

fn cmd_optimize(
    common: &CommonOpts,
    target: &str,
    expert_id: Option<usize>,
    strict: bool,
) -> Result<u8, CmdError> {
    let (scenario, text) = load(common)?;
    let tol = tolerances(common);
    let converged;

    let report = match target {
        "select" => {
            let sel: SelectionReport = choose_expert(&scenario, &tol).map_err(input_err)?;
            converged = sel.per_expert.iter().all(|e| e.converged);
            let mut report = Report::new("optimize select", Some(&text));
            report.tables.push(selection_table(&sel));
            report
                .diagnostics
                .push(format!("chosen expert: {}", sel.chosen));
            report
        }
        "expert" => {
            let id = expert_id.ok_or_else(|| input_err("--expert is required for target \"expert\""))?;
            let expert = scenario.expert(id).ok_or_else(|| input_err(format!("no expert with id {id}")))?;
            let prob = ExpertProblem::new(&scenario, expert).map_err(input_err)?;
            let guesses = default_guesses(prob.num_sources());
            let sol = optimize_expert_alternating(&prob, &guesses, &tol).map_err(input_err)?;
            converged = sol.converged;
            let mut report = Report::new(&format!("optimize expert {id}"), Some(&text));
            let mut t = Table::new(
                "expert optimum",
                &["expert", "policy", "I_k", "iterations", "converged"],
            );
            t.push(vec![
                id.into(),
                fmt_policy(sol.policy.weights()).into(),
                sol.exponent.into(),
                sol.iterations.into(),
                sol.converged.into(),
            ]);
            report.tables.push(t);
            report.tables.push(trace_table("winning trace", &sol));
            report
        }
        "agent0" => {
            let id = expert_id.ok_or_else(|| input_err("--expert is required for target \"agent0\""))?;
            let expert = scenario.expert(id).ok_or_else(|| input_err(format!("no expert with id {id}")))?;
            let prob = ExpertProblem::new(&scenario, expert).map_err(input_err)?;
            let eguesses = default_guesses(prob.num_sources());
            let esol = optimize_expert_alternating(&prob, &eguesses, &tol).map_err(input_err)?;
            let view0 = ModelView::new(&scenario, &scenario.agent0.sources);
            let guesses = default_guesses(view0.num_sources());
            let asol = optimize_agent_policy(
                &view0,
                &scenario.agent0.loss,
                expert.id,
                expert.q,
                &esol.prob_exponents,
                &guesses,
                &tol,
            )
            .map_err(input_err)?;
            converged = esol.converged && asol.converged;
            let mut report = Report::new(&format!("optimize agent0 {id}"), Some(&text));
            let mut t = Table::new(
                "agent0 optimum",
                &["expert followed", "x0", "E_0", "agent iterations", "converged"],
            );
            t.push(vec![
                id.into(),
                fmt_policy(asol.policy.weights()).into(),
                asol.exponent.value.into(),
                asol.iterations.into(),
                asol.converged.into(),
            ]);
            report.tables.push(t);
            let mut t = Table::new("inner terms", &["i", "j", "s", "value"]);
            for term in &asol.exponent.terms {
                t.push(vec![
                    term.i.into(),
                    term.j.into(),
                    term.s.into(),
                    term.value.into(),
                ]);
            }
            report.tables.push(t);
            report
        }
        other => {
            return Err(input_err(format!(
                "unknown optimize target {other:?} (expected select, expert, or agent0)"
            )))
        }
    };

    let mut report = report;
    if !converged {
        report
            .diagnostics
            .push("warning: at least one optimization run did not converge".to_string());
    }
    emit(&report, common)?;
    if strict && !converged {
        return Ok(EXIT_STRICT);
    }
    Ok(EXIT_OK)
}

fn slope_table(name: &str, est: &SlopeEstimate, analytic: f64, trials: u64) -> Table {
    let mut t = Table::new(name, &["n", "log value", "empirical slope", "analytic slope"]);
    let slope_cell = |s: &Option<f64>| -> Cell {
        match s {
            Some(v) => (*v).into(),
            None => Cell::Text("n/a".into()),
        }
    };
    for p in &est.points {
        let v: Cell = if p.censored {
            // No event observed: the log frequency is only bounded above.
            Cell::Text(format!("<= {}", exponentlab::report::fmt_sig(-(trials as f64).ln(), 6)))
        } else {
            p.log_value.into()
        };
        t.push(vec![p.n.into(), v, slope_cell(&est.slope), analytic.into()]);
    }
    t
}

fn cmd_simulate(
    common: &CommonOpts,
    sim: Option<&std::path::Path>,
    seed: Option<u64>,
) -> Result<u8, CmdError> {
    let (scenario, text) = load(common)?;
    let tol = tolerances(common);
    let mut config = match sim {
        Some(path) => {
            let body = std::fs::read_to_string(path)
                .map_err(|e| input_err(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str::<SimConfig>(&body).map_err(input_err)?
        }
        // Small n keeps the rare error events observable at this trial count
        // (log-frequency floor ~ -11.5), so slopes fit the exponent rather
        // than the censoring bound.
        None => SimConfig::new((1..=8).map(|i| i * 10).collect(), 100_000, 7).map_err(input_err)?,
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    config.validate().map_err(input_err)?;

    let mut report = Report::new("simulate", Some(&text));
    let sel = choose_expert(&scenario, &tol).map_err(input_err)?;

    for choice in &sel.per_expert {
        let expert = scenario.expert(choice.expert).ok_or_else(|| input_err("unknown expert id"))?;
        let view = ModelView::new(&scenario, &expert.sources);
        let x = Policy::new(choice.expert_policy.clone()).map_err(input_err)?;
        let sim_rep: ExpertSimReport =
            simulate_expert(&view, &expert.loss, &scenario.priors, &x, &config)
                .map_err(input_err)?;
        report.tables.push(slope_table(
            &format!("expert {} loss slope", expert.id),
            &sim_rep.loss_slope,
            -choice.expert_exponent,
            config.trials,
        ));
    }

    // Agent 0 following the chosen expert at the jointly optimal policies.
    let chosen = sel
        .per_expert
        .iter()
        .find(|e| e.expert == sel.chosen)
        .ok_or_else(|| input_err("selection produced no experts"))?;
    let expert = scenario.expert(sel.chosen).ok_or_else(|| input_err("unknown expert id"))?;
    let prob = ExpertProblem::new(&scenario, expert).map_err(input_err)?;
    let x_k = Policy::new(chosen.expert_policy.clone()).map_err(input_err)?;
    let probs: Vec<Vec<f64>> = prob
        .exponent_matrix(x_k.weights(), &tol)
        .iter()
        .map(|row| row.iter().map(|r| r.value).collect())
        .collect();
    let view_k = ModelView::new(&scenario, &expert.sources);
    let sim_expert = SimExpert {
        view: &view_k,
        loss: &expert.loss,
        policy: &x_k,
        q: expert.q,
        probs,
    };
    let view0 = ModelView::new(&scenario, &scenario.agent0.sources);
    let x0 = Policy::new(chosen.agent_policy.clone()).map_err(input_err)?;
    let a0: Agent0SimReport = simulate_agent0(
        &view0,
        &scenario.agent0.loss,
        &scenario.priors,
        &x0,
        Some(&sim_expert),
        &config,
    )
    .map_err(input_err)?;
    report.tables.push(slope_table(
        &format!("agent0 loss slope following expert {}", sel.chosen),
        &a0.loss_slope,
        -chosen.value,
        config.trials,
    ));
    report.diagnostics.push(format!(
        "agent0 fallback fraction: {:.6}",
        a0.fallback_fraction
    ));
    report
        .diagnostics
        .push(format!("seed {}, trials {}", config.seed, config.trials));

    emit(&report, common)?;
    Ok(EXIT_OK)
}

fn cmd_reference_study(common: &CommonOpts, grid_step: Option<f64>) -> Result<u8, CmdError> {
    let mut opts = StudyOptions::default();
    if let Some(step) = grid_step {
        opts.grid_step = step;
    }
    opts.tol = tolerances(common);
    let outcome = run_reference_study(&opts).map_err(|e| (EXIT_REPRODUCTION, e.to_string()))?;
    emit(&outcome.report, common)?;
    if !outcome.failures.is_empty() {
        return Ok(EXIT_REPRODUCTION);
    }
    Ok(EXIT_OK)
}
