//! Agent-0 loss exponents, policy optimization, and expert selection.
//!
//! Agent 0 observes its own sources under policy `x_0` and the final
//! decision of one (or more) experts. Its loss exponent is
//! `E_0(k, x_0) = min_{i<j, d} max_{s in [0,1]} { (1-s)(q_k P_i(d) + c_0(i))
//! + s (q_k P_j(d) + c_0(j)) - Lambda_ij(s, x_0) }`, where `P_m(d)` is the
//! expert's probability exponent matrix at its optimal policy. Setting
//! `q_k = 0` removes the expert; zeroing `c_0` gives the Bayesian (0-1 loss)
//! exponent `E_{0,B}`. The best expert maximizes `max_{x_0} E_0(k, x_0)`.

use crate::expert_opt::{
    default_guesses, optimize_expert_alternating, ExpertOptError, ExpertProblem, TracePoint,
    MAX_ALTERNATING_ITERS, POLICY_TOL,
};
use crate::fenchel::{golden_max, Tolerances};
use crate::linprog::{maximize_free, Constraint, LpOutcome};
use crate::mgf::ModelView;
use crate::scenario::{LossSpec, Policy, Scenario};
use rayon::prelude::*;

/// Cap on expert decision-tuple enumeration in the multi-expert exponent.
pub const TUPLE_CAP: usize = 1_000_000;

#[derive(Debug, thiserror::Error)]
pub enum AgentOptError {
    #[error(transparent)]
    Expert(#[from] ExpertOptError),
    #[error(transparent)]
    Scenario(#[from] crate::scenario::ScenarioError),
    #[error("agent policy LP returned no optimum (solver bug)")]
    PolicyLp,
    #[error("policy optimization needs at least one initial guess")]
    NoGuesses,
    #[error("multi-expert fusion needs a nonempty expert subset")]
    EmptySubset,
    #[error("decision-tuple enumeration needs {needed} tuples, above the cap of {cap}")]
    TupleCap { needed: f64, cap: usize },
    #[error("expert loss must be in Assumption-4 form (square, infinite diagonal)")]
    NotAssumption4,
    #[error("expert must have fewer decisions ({decisions}) than hypotheses ({hypotheses})")]
    DecisionSpaceNotSmaller { decisions: usize, hypotheses: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExponentFlavor {
    General,
    Bayesian01,
    NoExpert,
    MultiExpert,
}

/// One inner maximization of the agent-0 exponent: hypothesis pair (i, j),
/// the expert decision tuple it conditions on (empty without experts), the
/// maximum value, and the maximizing s.
#[derive(Debug, Clone)]
pub struct InnerTerm {
    pub i: usize,
    pub j: usize,
    pub decisions: Vec<usize>,
    pub value: f64,
    pub s: f64,
}

/// Agent-0 exponent at a fixed policy.
#[derive(Debug, Clone)]
pub struct AgentExponent {
    /// Expert id (0 = no expert; multi-expert lists ids in `experts`).
    pub expert: usize,
    pub x0: Vec<f64>,
    pub value: f64,
    pub terms: Vec<InnerTerm>,
    pub flavor: ExponentFlavor,
}

/// Probability-exponent matrix of one expert (M rows, d_k columns).
pub type ProbMatrix = Vec<Vec<f64>>;

/// Maximize `(1-s) a_i + s a_j - lambda(s)` over `s in [0, 1]`; concave
/// because `lambda` is convex. Endpoints are probed explicitly since the
/// maximizer may sit on the boundary.
fn inner_max(a_i: f64, a_j: f64, lambda: impl Fn(f64) -> f64, tol: &Tolerances) -> (f64, f64) {
    let obj = |s: f64| (1.0 - s) * a_i + s * a_j - lambda(s);
    let (mut s_best, mut v_best) = golden_max(&obj, 0.0, 1.0, tol.golden);
    for s in [0.0, 1.0] {
        let v = obj(s);
        if v > v_best {
            s_best = s;
            v_best = v;
        }
    }
    (s_best, v_best)
}

fn exponent_core(
    view0: &ModelView,
    c0: &LossSpec,
    expert: usize,
    experts: &[(f64, &ProbMatrix)],
    x0: &[f64],
    tol: &Tolerances,
    flavor: ExponentFlavor,
) -> Result<AgentExponent, AgentOptError> {
    let m = view0.num_hypotheses();
    let widths: Vec<usize> = experts.iter().map(|(_, p)| p[0].len()).collect();
    let tuples_f: f64 = widths.iter().map(|&w| w as f64).product();
    if tuples_f > TUPLE_CAP as f64 {
        return Err(AgentOptError::TupleCap {
            needed: tuples_f,
            cap: TUPLE_CAP,
        });
    }
    let tuples = tuples_f.max(1.0) as usize;
    let mut terms = Vec::new();
    let mut value = f64::INFINITY;
    for i in 0..m {
        for j in (i + 1)..m {
            for code in 0..tuples {
                let mut decisions = Vec::with_capacity(widths.len());
                let mut rem = code;
                for &w in &widths {
                    decisions.push(rem % w);
                    rem /= w;
                }
                let mut a_i = c0.off_diagonal_rate(i);
                let mut a_j = c0.off_diagonal_rate(j);
                for (e, &(q, probs)) in experts.iter().enumerate() {
                    a_i += q * probs[i][decisions[e]];
                    a_j += q * probs[j][decisions[e]];
                }
                // Superexponentially rare expert decisions never bind.
                if !a_i.is_finite() || !a_j.is_finite() {
                    continue;
                }
                let (s, v) = inner_max(a_i, a_j, |s| view0.lambda(i, j, s, x0), tol);
                value = value.min(v);
                terms.push(InnerTerm {
                    i,
                    j,
                    decisions,
                    value: v,
                    s,
                });
            }
        }
    }
    Ok(AgentExponent {
        expert,
        x0: x0.to_vec(),
        value,
        terms,
        flavor,
    })
}

/// `E_0(k, x_0)` for expert `k` with observation ratio `q` and probability
/// exponents `probs` (computed at the expert's own optimal policy).
pub fn agent_exponent(
    view0: &ModelView,
    c0: &LossSpec,
    k: usize,
    q: f64,
    probs: &ProbMatrix,
    x0: &[f64],
    tol: &Tolerances,
) -> AgentExponent {
    exponent_core(view0, c0, k, &[(q, probs)], x0, tol, ExponentFlavor::General)
        .expect("single expert cannot exceed the tuple cap")
}

/// `E_0(0, x_0)`: agent 0 alone (the `q = 0` reduction).
pub fn agent_exponent_no_expert(
    view0: &ModelView,
    c0: &LossSpec,
    x0: &[f64],
    tol: &Tolerances,
) -> AgentExponent {
    exponent_core(view0, c0, 0, &[], x0, tol, ExponentFlavor::NoExpert)
        .expect("no tuples to enumerate")
}

/// Bayesian exponent `E_{0,B}(k, x_0)`: the general exponent with the 0-1
/// loss (`c_0` identically zero off the diagonal). `probs = None` gives the
/// no-expert baseline `E_{0,B}(0, x_0)`, the smallest pairwise Chernoff
/// information.
pub fn agent_exponent_01(
    view0: &ModelView,
    k: usize,
    q: f64,
    probs: Option<&ProbMatrix>,
    x0: &[f64],
    tol: &Tolerances,
) -> AgentExponent {
    let zero = LossSpec::zero_one(view0.num_hypotheses());
    let experts: Vec<(f64, &ProbMatrix)> = probs.map(|p| (q, p)).into_iter().collect();
    exponent_core(view0, &zero, k, &experts, x0, tol, ExponentFlavor::Bayesian01)
        .expect("single expert cannot exceed the tuple cap")
}

/// Multi-expert fusion: agent 0 follows every expert in `experts`
/// (entries are `(id, q_k, probability exponents)`), enumerating joint
/// decision tuples.
pub fn agent_exponent_multi(
    view0: &ModelView,
    c0: &LossSpec,
    experts: &[(usize, f64, &ProbMatrix)],
    x0: &[f64],
    tol: &Tolerances,
) -> Result<AgentExponent, AgentOptError> {
    if experts.is_empty() {
        return Err(AgentOptError::EmptySubset);
    }
    let pairs: Vec<(f64, &ProbMatrix)> = experts.iter().map(|&(_, q, p)| (q, p)).collect();
    let mut out = exponent_core(
        view0,
        c0,
        experts[0].0,
        &pairs,
        x0,
        tol,
        ExponentFlavor::MultiExpert,
    )?;
    if experts.len() == 1 {
        out.flavor = ExponentFlavor::General;
    }
    Ok(out)
}

/// Loss-augmented log-MGF
/// `oLambda_ij(s, x_0, c_0) = Lambda_ij(s, x_0) - (1-s) c_0(i) - s c_0(j)`.
pub fn loss_augmented_lambda(
    view0: &ModelView,
    i: usize,
    j: usize,
    x0: &[f64],
    c0: &LossSpec,
    s: f64,
) -> f64 {
    view0.lambda(i, j, s, x0) - (1.0 - s) * c0.off_diagonal_rate(i) - s * c0.off_diagonal_rate(j)
}

/// Hypothesis-loss neutrality: true iff `min_s oLambda_ij` agrees across all
/// unordered pairs within `tol_flag`. Returns the flag and the per-pair
/// minima as `(i, j, min value)`.
pub fn is_hypothesis_loss_neutral(
    view0: &ModelView,
    c0: &LossSpec,
    x0: &[f64],
    tol_flag: f64,
    tol: &Tolerances,
) -> (bool, Vec<(usize, usize, f64)>) {
    let m = view0.num_hypotheses();
    let mut minima = Vec::new();
    for i in 0..m {
        for j in (i + 1)..m {
            let (_, neg_min) = inner_max(
                0.0,
                0.0,
                |s| loss_augmented_lambda(view0, i, j, x0, c0, s),
                tol,
            );
            minima.push((i, j, -neg_min));
        }
    }
    let lo = minima.iter().map(|t| t.2).fold(f64::INFINITY, f64::min);
    let hi = minima.iter().map(|t| t.2).fold(f64::NEG_INFINITY, f64::max);
    (hi - lo <= tol_flag, minima)
}

/// Result of an agent-0 policy optimization.
#[derive(Debug, Clone)]
pub struct AgentSolution {
    pub policy: Policy,
    pub exponent: AgentExponent,
    pub trace: Vec<TracePoint>,
    pub initial_guesses: Vec<Vec<f64>>,
    pub converged: bool,
    /// Total LP iterations summed over all initial guesses.
    pub iterations: usize,
}

struct AgentRun {
    x: Vec<f64>,
    exponent: AgentExponent,
    trace: Vec<TracePoint>,
    iterations: usize,
    converged: bool,
}

fn agent_policy_lp(
    view0: &ModelView,
    exponent: &AgentExponent,
    c0: &LossSpec,
    experts: &[(f64, &ProbMatrix)],
) -> Result<Option<Vec<f64>>, AgentOptError> {
    let g = view0.num_sources();
    let mut cons = Vec::new();
    for term in &exponent.terms {
        let (i, j, s) = (term.i, term.j, term.s);
        let mut a_i = c0.off_diagonal_rate(i);
        let mut a_j = c0.off_diagonal_rate(j);
        for (e, &(q, probs)) in experts.iter().enumerate() {
            a_i += q * probs[i][term.decisions[e]];
            a_j += q * probs[j][term.decisions[e]];
        }
        let mut coeffs = vec![1.0];
        for src in 0..g {
            coeffs.push(view0.lambda_source(src, i, j, s));
        }
        cons.push(Constraint::le(coeffs, (1.0 - s) * a_i + s * a_j));
    }
    if cons.is_empty() {
        return Ok(None);
    }
    let mut simplex = vec![0.0];
    simplex.extend(vec![1.0; g]);
    cons.push(Constraint::eq(simplex, 1.0));
    for src in 0..g {
        let mut e = vec![0.0; g + 1];
        e[src + 1] = 1.0;
        cons.push(Constraint::ge(e, 0.0));
    }
    let mut obj = vec![0.0; g + 1];
    obj[0] = 1.0;
    match maximize_free(&obj, &cons) {
        LpOutcome::Optimal { x, .. } => {
            let mut w: Vec<f64> = x[1..].iter().map(|&v| v.max(0.0)).collect();
            let sum: f64 = w.iter().sum();
            for v in &mut w {
                *v /= sum;
            }
            Ok(Some(w))
        }
        _ => Err(AgentOptError::PolicyLp),
    }
}

fn run_agent_guess(
    view0: &ModelView,
    c0: &LossSpec,
    k: usize,
    experts: &[(f64, &ProbMatrix)],
    guess: &[f64],
    tol: &Tolerances,
    flavor: ExponentFlavor,
) -> Result<AgentRun, AgentOptError> {
    let mut x = guess.to_vec();
    let mut exponent = exponent_core(view0, c0, k, experts, &x, tol, flavor)?;
    let mut trace = vec![TracePoint {
        iteration: 0,
        policy: x.clone(),
        exponent: exponent.value,
    }];
    let mut iterations = 0;
    let mut converged = false;
    for l in 1..=MAX_ALTERNATING_ITERS {
        let Some(x_new) = agent_policy_lp(view0, &exponent, c0, experts)? else {
            break;
        };
        iterations = l;
        let step = crate::linalg::norm_inf(&crate::linalg::sub(&x_new, &x));
        x = x_new;
        exponent = exponent_core(view0, c0, k, experts, &x, tol, flavor)?;
        trace.push(TracePoint {
            iteration: l,
            policy: x.clone(),
            exponent: exponent.value,
        });
        if step <= POLICY_TOL {
            converged = true;
            break;
        }
    }
    Ok(AgentRun {
        x,
        exponent,
        trace,
        iterations,
        converged,
    })
}

fn optimize_core(
    view0: &ModelView,
    c0: &LossSpec,
    k: usize,
    experts: &[(f64, &ProbMatrix)],
    guesses: &[Policy],
    tol: &Tolerances,
    flavor: ExponentFlavor,
) -> Result<AgentSolution, AgentOptError> {
    if guesses.is_empty() {
        return Err(AgentOptError::NoGuesses);
    }
    let runs: Vec<Result<AgentRun, AgentOptError>> = guesses
        .par_iter()
        .map(|guess| run_agent_guess(view0, c0, k, experts, guess.weights(), tol, flavor))
        .collect();
    let runs: Vec<AgentRun> = runs.into_iter().collect::<Result<_, _>>()?;
    let total_iterations: usize = runs.iter().map(|r| r.iterations).sum();
    let any_converged = runs.iter().any(|r| r.converged);
    let best = runs
        .into_iter()
        .filter(|r| r.converged == any_converged)
        .reduce(|a, b| if b.exponent.value > a.exponent.value { b } else { a })
        .expect("at least one run");
    Ok(AgentSolution {
        policy: Policy::new(best.x)?,
        exponent: best.exponent,
        trace: best.trace,
        initial_guesses: guesses.iter().map(|p| p.weights().to_vec()).collect(),
        converged: any_converged,
        iterations: total_iterations,
    })
}

/// Alternating optimization of the agent-0 policy for expert `k`: a
/// golden-section s-step per (i, j, d) followed by an LP over the policy
/// simplex, multistarted from `guesses`.
pub fn optimize_agent_policy(
    view0: &ModelView,
    c0: &LossSpec,
    k: usize,
    q: f64,
    probs: &ProbMatrix,
    guesses: &[Policy],
    tol: &Tolerances,
) -> Result<AgentSolution, AgentOptError> {
    optimize_core(view0, c0, k, &[(q, probs)], guesses, tol, ExponentFlavor::General)
}

/// Optimize the no-expert baseline policy (`q = 0` reduction).
pub fn optimize_agent_policy_no_expert(
    view0: &ModelView,
    c0: &LossSpec,
    guesses: &[Policy],
    tol: &Tolerances,
) -> Result<AgentSolution, AgentOptError> {
    optimize_core(view0, c0, 0, &[], guesses, tol, ExponentFlavor::NoExpert)
}

/// Per-expert row of the selection report, with the audit columns used by
/// the optimality-chain check.
#[derive(Debug, Clone)]
pub struct ExpertChoice {
    pub expert: usize,
    pub expert_policy: Vec<f64>,
    /// Expert loss exponent I_k at its optimal policy.
    pub expert_exponent: f64,
    pub agent_policy: Vec<f64>,
    /// E_0(k, x_0*).
    pub value: f64,
    /// E_{0,B}(k, x_0*).
    pub bayes_value: f64,
    /// E_0(0, x_0*): agent 0 alone at the same policy.
    pub no_expert_value: f64,
    /// E_{0,B}(0, x_0*).
    pub no_expert_bayes: f64,
    pub expert_iterations: usize,
    pub agent_iterations: usize,
    pub converged: bool,
}

/// Expert selection: per-expert optimized exponents, the argmax expert, and
/// the no-expert baseline.
#[derive(Debug, Clone)]
pub struct SelectionReport {
    pub per_expert: Vec<ExpertChoice>,
    /// Id of the chosen expert (smallest id on ties).
    pub chosen: usize,
    pub baseline_policy: Vec<f64>,
    /// max_{x_0} E_0(0, x_0).
    pub baseline_value: f64,
    /// E_{0,B}(0, .) at the baseline policy.
    pub baseline_bayes: f64,
}

impl SelectionReport {
    /// Smallest slack of the optimality-chain inequalities
    /// `E_0(k) >= E_{0,B}(k)` and `E_0(k) >= E_0(0) >= E_{0,B}(0)`,
    /// each evaluated at the expert's optimized policy.
    pub fn min_audit_slack(&self) -> f64 {
        let mut slack = self.baseline_value - self.baseline_bayes;
        for e in &self.per_expert {
            slack = slack
                .min(e.value - e.bayes_value)
                .min(e.value - e.no_expert_value)
                .min(e.no_expert_value - e.no_expert_bayes);
        }
        slack
    }
}

/// Full selection pipeline: optimize every expert's policy, then agent 0's
/// policy per expert, and pick the expert maximizing `E_0(k, x_0*)`.
pub fn choose_expert(scenario: &Scenario, tol: &Tolerances) -> Result<SelectionReport, AgentOptError> {
    let view0 = ModelView::new(scenario, &scenario.agent0.sources);
    let c0 = &scenario.agent0.loss;
    let agent_guesses = default_guesses(view0.num_sources());
    let mut per_expert = Vec::new();
    for expert in &scenario.experts {
        let prob = ExpertProblem::new(scenario, expert)?;
        let eguesses = default_guesses(prob.num_sources());
        let esol = optimize_expert_alternating(&prob, &eguesses, tol)?;
        let asol = optimize_agent_policy(
            &view0,
            c0,
            expert.id,
            expert.q,
            &esol.prob_exponents,
            &agent_guesses,
            tol,
        )?;
        let x0 = asol.policy.weights().to_vec();
        let bayes = agent_exponent_01(&view0, expert.id, expert.q, Some(&esol.prob_exponents), &x0, tol);
        let no_expert = agent_exponent_no_expert(&view0, c0, &x0, tol);
        let no_expert_bayes = agent_exponent_01(&view0, 0, 0.0, None, &x0, tol);
        per_expert.push(ExpertChoice {
            expert: expert.id,
            expert_policy: esol.policy.weights().to_vec(),
            expert_exponent: esol.exponent,
            agent_policy: x0,
            value: asol.exponent.value,
            bayes_value: bayes.value,
            no_expert_value: no_expert.value,
            no_expert_bayes: no_expert_bayes.value,
            expert_iterations: esol.iterations,
            agent_iterations: asol.iterations,
            converged: esol.converged && asol.converged,
        });
    }
    let baseline = optimize_agent_policy_no_expert(&view0, c0, &agent_guesses, tol)?;
    let baseline_policy = baseline.policy.weights().to_vec();
    let baseline_bayes = agent_exponent_01(&view0, 0, 0.0, None, &baseline_policy, tol);
    let chosen = per_expert
        .iter()
        .reduce(|a, b| if b.value > a.value { b } else { a })
        .map(|e| e.expert)
        .unwrap_or(0);
    Ok(SelectionReport {
        per_expert,
        chosen,
        baseline_policy,
        baseline_value: baseline.exponent.value,
        baseline_bayes: baseline_bayes.value,
    })
}

/// Expert selection at a fixed agent-0 policy: expert policies are still
/// optimized, but `E_0(k, x_0)` is evaluated at the given `x_0` for every
/// expert instead of being maximized. This is how the reference study's
/// 0-1-loss variant is tabulated.
pub fn choose_expert_at(
    scenario: &Scenario,
    x0: &[f64],
    tol: &Tolerances,
) -> Result<SelectionReport, AgentOptError> {
    let view0 = ModelView::new(scenario, &scenario.agent0.sources);
    let c0 = &scenario.agent0.loss;
    let mut per_expert = Vec::new();
    for expert in &scenario.experts {
        let prob = ExpertProblem::new(scenario, expert)?;
        let eguesses = default_guesses(prob.num_sources());
        let esol = optimize_expert_alternating(&prob, &eguesses, tol)?;
        let value = agent_exponent(&view0, c0, expert.id, expert.q, &esol.prob_exponents, x0, tol);
        let bayes = agent_exponent_01(&view0, expert.id, expert.q, Some(&esol.prob_exponents), x0, tol);
        let no_expert = agent_exponent_no_expert(&view0, c0, x0, tol);
        let no_expert_bayes = agent_exponent_01(&view0, 0, 0.0, None, x0, tol);
        per_expert.push(ExpertChoice {
            expert: expert.id,
            expert_policy: esol.policy.weights().to_vec(),
            expert_exponent: esol.exponent,
            agent_policy: x0.to_vec(),
            value: value.value,
            bayes_value: bayes.value,
            no_expert_value: no_expert.value,
            no_expert_bayes: no_expert_bayes.value,
            expert_iterations: esol.iterations,
            agent_iterations: 0,
            converged: esol.converged,
        });
    }
    let no_expert = agent_exponent_no_expert(&view0, c0, x0, tol);
    let no_expert_bayes = agent_exponent_01(&view0, 0, 0.0, None, x0, tol);
    let chosen = per_expert
        .iter()
        .reduce(|a, b| if b.value > a.value { b } else { a })
        .map(|e| e.expert)
        .unwrap_or(0);
    Ok(SelectionReport {
        per_expert,
        chosen,
        baseline_policy: x0.to_vec(),
        baseline_value: no_expert.value,
        baseline_bayes: no_expert_bayes.value,
    })
}

/// Outcome of the reduced-decision-space identity check: with `d_k < M` and
/// a hypothesis-loss-neutral `(x_0, c_0)`, following the expert adds nothing
/// and `E_0(k, x_0)` collapses to the no-expert exponent `E_0(0, x_0)`.
#[derive(Debug, Clone)]
pub struct ReducedDecisionIdentity {
    pub lhs: f64,
    pub rhs: f64,
    pub equal: bool,
    pub neutral: bool,
    /// Spread of the per-pair augmented-MGF minima (0 when exactly neutral).
    pub neutrality_spread: f64,
}

pub fn check_reduced_decision_identity(
    view0: &ModelView,
    c0: &LossSpec,
    k: usize,
    q: f64,
    expert_loss: &LossSpec,
    probs: &ProbMatrix,
    x0: &[f64],
    tol: &Tolerances,
) -> Result<ReducedDecisionIdentity, AgentOptError> {
    let m = view0.num_hypotheses();
    if expert_loss.num_decisions() >= m {
        return Err(AgentOptError::DecisionSpaceNotSmaller {
            decisions: expert_loss.num_decisions(),
            hypotheses: m,
        });
    }
    let (neutral, minima) = is_hypothesis_loss_neutral(view0, c0, x0, 1e-6, tol);
    let lo = minima.iter().map(|t| t.2).fold(f64::INFINITY, f64::min);
    let hi = minima.iter().map(|t| t.2).fold(f64::NEG_INFINITY, f64::max);
    let lhs = agent_exponent(view0, c0, k, q, probs, x0, tol).value;
    let rhs = agent_exponent_no_expert(view0, c0, x0, tol).value;
    Ok(ReducedDecisionIdentity {
        lhs,
        rhs,
        equal: (lhs - rhs).abs() <= 1e-6,
        neutral,
        neutrality_spread: hi - lo,
    })
}

/// Scalar-transform agent-0 exponent for Assumption-4 experts:
/// `min over ordered pairs (i, j) of max_s { s q Lambda*_{ji}(c_k(i) -
/// c_k(j), x_k) - oLambda_ij(s, x_0, c_0) }`.
///
/// The formula substitutes `Lambda*_{ji}(c_k(i) - c_k(j), x_k)` for the
/// region infimum `inf over A_k(i) of Phi*_j`; that identity requires the
/// face-minimizer premise of the scalar region path (in particular, the
/// expert's mean LLR under each hypothesis m must classify as m). `premises`
/// returns the per-term flags; the value is only trustworthy when the flag
/// of every binding term is true. The reference study's expert 2 at its
/// optimal single-source policy is a concrete failure case: it never
/// asymptotically decides hypothesis 2, and the scalar value diverges from
/// the general exponent.
pub fn agent_exponent_assumption4(
    view0: &ModelView,
    c0: &LossSpec,
    k: usize,
    q: f64,
    expert_loss: &LossSpec,
    view_k: &ModelView,
    x_k: &[f64],
    x0: &[f64],
    tol: &Tolerances,
) -> Result<(AgentExponent, Vec<bool>), AgentOptError> {
    if !expert_loss.is_assumption4_form() || expert_loss.num_hypotheses() != view0.num_hypotheses()
    {
        return Err(AgentOptError::NotAssumption4);
    }
    let m = view0.num_hypotheses();
    let mut terms = Vec::new();
    let mut premises = Vec::new();
    let mut value = f64::INFINITY;
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            let (rate, _, premise) =
                crate::regions::dual_path_infimum(view_k, j, i, expert_loss, x_k, tol);
            if !rate.is_finite() {
                continue;
            }
            let a_i = c0.off_diagonal_rate(i);
            let a_j = q * rate + c0.off_diagonal_rate(j);
            let (s, v) = inner_max(a_i, a_j, |s| view0.lambda(i, j, s, x0), tol);
            value = value.min(v);
            terms.push(InnerTerm {
                i,
                j,
                decisions: vec![i],
                value: v,
                s,
            });
            premises.push(premise);
        }
    }
    Ok((
        AgentExponent {
            expert: k,
            x0: x0.to_vec(),
            value,
            terms,
            flavor: ExponentFlavor::General,
        },
        premises,
    ))
}
