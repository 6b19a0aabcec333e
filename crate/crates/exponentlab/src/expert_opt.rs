//! Expert loss exponent `I_k(x)` and policy optimization.
//!
//! `I_k(x) = min_{m,d} { inf_{z in A_k(d)} Phi*_m(z, x) + c_k(m, d) }` is the
//! decay exponent of expert k's expected loss under policy x. The optimal
//! policy is found by an alternating procedure that linearizes each region
//! infimum at its current minimizer and re-solves a small LP over the policy
//! simplex, cross-checked by an exhaustive simplex-grid oracle.

use crate::fenchel::Tolerances;
use crate::linalg::{dot, norm_inf, sub};
use crate::linprog::{maximize_free, Constraint, LpOutcome};
use crate::mgf::ModelView;
use crate::regions::{build_regions, inf_rate_over_region, RegionError, RegionInfimum, RegionSet};
use crate::scenario::{Expert, LossSpec, Policy, Scenario};
use rayon::prelude::*;

/// Cap on the argmax-sequence enumeration when building decision regions.
pub const DEFAULT_ENUMERATION_CAP: usize = 1_000_000;

/// Policy-iteration stopping tolerance (infinity norm of the update).
pub const POLICY_TOL: f64 = 1e-6;

/// Iteration cap per initial guess of the alternating procedure.
pub const MAX_ALTERNATING_ITERS: usize = 100;

#[derive(Debug, thiserror::Error)]
pub enum ExpertOptError {
    #[error(transparent)]
    Region(#[from] RegionError),
    #[error("alternating optimization needs at least one initial guess")]
    NoGuesses,
    #[error("initial guess has {got} components, expected {expected}")]
    GuessDimension { got: usize, expected: usize },
    #[error("grid search supports at most 4 sources, got {0}")]
    GridDimension(usize),
    #[error("grid step must lie in (0, 0.5], got {0}")]
    BadStep(f64),
    #[error("policy LP returned no optimum (solver bug)")]
    PolicyLp,
    #[error(transparent)]
    Scenario(#[from] crate::scenario::ScenarioError),
}

/// An expert's model view, loss, and precomputed decision regions.
pub struct ExpertProblem {
    pub view: ModelView,
    pub loss: LossSpec,
    pub regions: RegionSet,
}

impl ExpertProblem {
    pub fn new(scenario: &Scenario, expert: &Expert) -> Result<Self, ExpertOptError> {
        Self::from_parts(ModelView::new(scenario, &expert.sources), expert.loss.clone())
    }

    pub fn from_parts(view: ModelView, loss: LossSpec) -> Result<Self, ExpertOptError> {
        let regions = build_regions(&loss, DEFAULT_ENUMERATION_CAP)?;
        Ok(ExpertProblem {
            view,
            loss,
            regions,
        })
    }

    pub fn num_sources(&self) -> usize {
        self.view.num_sources()
    }

    /// All M x d_k region infima of `Phi*_m` over `A_k(d)` at policy `x`.
    pub fn exponent_matrix(&self, x: &[f64], tol: &Tolerances) -> Vec<Vec<RegionInfimum>> {
        (0..self.loss.num_hypotheses())
            .map(|m| {
                (0..self.loss.num_decisions())
                    .map(|d| inf_rate_over_region(&self.view, m, x, &self.loss, d, &self.regions, tol))
                    .collect()
            })
            .collect()
    }

    fn exponent_of(&self, matrix: &[Vec<RegionInfimum>]) -> f64 {
        let mut best = f64::INFINITY;
        for (m, row) in matrix.iter().enumerate() {
            for (d, entry) in row.iter().enumerate() {
                let c = self.loss.rate(m, d);
                if c.is_finite() {
                    best = best.min(entry.value + c);
                }
            }
        }
        best
    }

    /// Loss exponent `I_k(x)` and the matrix of probability exponents.
    pub fn expert_exponent(&self, x: &[f64], tol: &Tolerances) -> (f64, Vec<Vec<f64>>) {
        let matrix = self.exponent_matrix(x, tol);
        let value = self.exponent_of(&matrix);
        let probs = matrix
            .iter()
            .map(|row| row.iter().map(|e| e.value).collect())
            .collect();
        (value, probs)
    }

    /// One policy-improvement LP: maximize r over (r, x) subject to
    /// `r <= <t_{m,d}, z_{m,d}> - sum_g x[g] xi_m(g, t_{m,d}) + c(m, d)`
    /// for every finite, reachable (m, d), with x on the simplex.
    fn policy_lp(&self, matrix: &[Vec<RegionInfimum>]) -> Result<Option<Vec<f64>>, ExpertOptError> {
        let g = self.num_sources();
        let mut cons = Vec::new();
        for (m, row) in matrix.iter().enumerate() {
            for (d, entry) in row.iter().enumerate() {
                let c = self.loss.rate(m, d);
                if !c.is_finite() || !entry.value.is_finite() {
                    continue;
                }
                let mut coeffs = vec![1.0];
                for s in 0..g {
                    coeffs.push(self.view.xi(s, m, &entry.tilt));
                }
                let rhs = dot(&entry.tilt, &entry.minimizer) + c;
                cons.push(Constraint::le(coeffs, rhs));
            }
        }
        if cons.is_empty() {
            return Ok(None);
        }
        let mut simplex = vec![0.0];
        simplex.extend(vec![1.0; g]);
        cons.push(Constraint::eq(simplex, 1.0));
        for s in 0..g {
            let mut e = vec![0.0; g + 1];
            e[s + 1] = 1.0;
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
            _ => Err(ExpertOptError::PolicyLp),
        }
    }
}

/// One point of an alternating-optimization trace.
#[derive(Debug, Clone)]
pub struct TracePoint {
    pub iteration: usize,
    pub policy: Vec<f64>,
    pub exponent: f64,
}

/// Result of an expert policy optimization.
#[derive(Debug, Clone)]
pub struct ExpertSolution {
    pub policy: Policy,
    pub exponent: f64,
    /// Probability exponents `inf_{A(d)} Phi*_m` at the returned policy.
    pub prob_exponents: Vec<Vec<f64>>,
    /// Iterates of the winning run (empty for the grid oracle).
    pub trace: Vec<TracePoint>,
    pub initial_guesses: Vec<Vec<f64>>,
    pub converged: bool,
    /// Total LP iterations summed over all initial guesses (grid: number of
    /// grid evaluations).
    pub iterations: usize,
}

/// All simplex vertices plus the barycenter.
pub fn default_guesses(num_sources: usize) -> Vec<Policy> {
    let mut guesses: Vec<Policy> = (0..num_sources)
        .map(|g| Policy::vertex(num_sources, g))
        .collect();
    if num_sources > 1 {
        guesses.push(Policy::barycenter(num_sources));
    }
    guesses
}

struct Run {
    policy: Vec<f64>,
    exponent: f64,
    probs: Vec<Vec<f64>>,
    trace: Vec<TracePoint>,
    iterations: usize,
    converged: bool,
}

fn run_one_guess(
    prob: &ExpertProblem,
    guess: &[f64],
    tol: &Tolerances,
) -> Result<Run, ExpertOptError> {
    let mut x = guess.to_vec();
    let mut matrix = prob.exponent_matrix(&x, tol);
    let mut exponent = prob.exponent_of(&matrix);
    let mut trace = vec![TracePoint {
        iteration: 0,
        policy: x.clone(),
        exponent,
    }];
    let mut iterations = 0;
    let mut converged = false;
    for l in 1..=MAX_ALTERNATING_ITERS {
        let Some(x_new) = prob.policy_lp(&matrix)? else {
            break;
        };
        iterations = l;
        let step = norm_inf(&sub(&x_new, &x));
        x = x_new;
        matrix = prob.exponent_matrix(&x, tol);
        exponent = prob.exponent_of(&matrix);
        trace.push(TracePoint {
            iteration: l,
            policy: x.clone(),
            exponent,
        });
        if step <= POLICY_TOL {
            converged = true;
            break;
        }
    }
    let probs = matrix
        .iter()
        .map(|row| row.iter().map(|e| e.value).collect())
        .collect();
    Ok(Run {
        policy: x,
        exponent,
        probs,
        trace,
        iterations,
        converged,
    })
}

/// Alternating optimization of the expert policy from a set of initial
/// guesses; returns the best exponent among converged runs (or the best
/// iterate flagged non-converged when no run converges).
pub fn optimize_expert_alternating(
    prob: &ExpertProblem,
    guesses: &[Policy],
    tol: &Tolerances,
) -> Result<ExpertSolution, ExpertOptError> {
    if guesses.is_empty() {
        return Err(ExpertOptError::NoGuesses);
    }
    let g = prob.num_sources();
    for guess in guesses {
        if guess.dim() != g {
            return Err(ExpertOptError::GuessDimension {
                got: guess.dim(),
                expected: g,
            });
        }
    }
    let runs: Vec<Result<Run, ExpertOptError>> = guesses
        .par_iter()
        .map(|guess| run_one_guess(prob, guess.weights(), tol))
        .collect();
    let runs: Vec<Run> = runs.into_iter().collect::<Result<_, _>>()?;
    let total_iterations: usize = runs.iter().map(|r| r.iterations).sum();
    let any_converged = runs.iter().any(|r| r.converged);
    let best = runs
        .into_iter()
        .filter(|r| r.converged == any_converged)
        .reduce(|a, b| if b.exponent > a.exponent { b } else { a })
        .expect("at least one run");
    Ok(ExpertSolution {
        policy: Policy::new(best.policy).expect("LP output renormalized onto the simplex"),
        exponent: best.exponent,
        prob_exponents: best.probs,
        trace: best.trace,
        initial_guesses: guesses.iter().map(|p| p.weights().to_vec()).collect(),
        converged: any_converged,
        iterations: total_iterations,
    })
}

fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for mut rest in compositions(total - first, parts - 1) {
            let mut c = Vec::with_capacity(parts);
            c.push(first);
            c.append(&mut rest);
            out.push(c);
        }
    }
    out
}

/// Exhaustive simplex-grid search with spacing `step`; the ground-truth
/// oracle for the alternating procedure.
pub fn optimize_expert_grid(
    prob: &ExpertProblem,
    step: f64,
    tol: &Tolerances,
) -> Result<ExpertSolution, ExpertOptError> {
    let g = prob.num_sources();
    if g > 4 {
        return Err(ExpertOptError::GridDimension(g));
    }
    if !(step > 0.0 && step <= 0.5) {
        return Err(ExpertOptError::BadStep(step));
    }
    let n = (1.0 / step).round().max(1.0) as usize;
    let points: Vec<Vec<f64>> = compositions(n, g)
        .into_iter()
        .map(|c| c.iter().map(|&k| k as f64 / n as f64).collect())
        .collect();
    let evals: Vec<(usize, f64)> = points
        .par_iter()
        .enumerate()
        .map(|(i, x)| (i, prob.expert_exponent(x, tol).0))
        .collect();
    let (best_idx, best_val) = evals
        .into_iter()
        .reduce(|a, b| if b.1 > a.1 { b } else { a })
        .expect("grid is nonempty");
    let x = points[best_idx].clone();
    let (_, probs) = prob.expert_exponent(&x, tol);
    Ok(ExpertSolution {
        policy: Policy::new(x)?,
        exponent: best_val,
        prob_exponents: probs,
        trace: Vec::new(),
        initial_guesses: Vec::new(),
        converged: true,
        iterations: points.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::{reference_scenario, C0Variant};
    use crate::scenario::SourceModel;

    fn table_problem(idx: usize) -> ExpertProblem {
        let scenario = reference_scenario(0.9, 4.0, C0Variant::C3);
        ExpertProblem::new(&scenario, &scenario.experts[idx]).unwrap()
    }

    #[test]
    fn identical_distributions_give_zero_exponent() {
        let tol = Tolerances::default();
        let view = ModelView::from_sources(
            vec![SourceModel::Gaussian {
                means: vec![0.3, 0.3],
                variance: 1.0,
            }],
            2,
        );
        let prob = ExpertProblem::from_parts(view, LossSpec::zero_one(2)).unwrap();
        let (value, _) = prob.expert_exponent(&[1.0], &tol);
        assert!(value.abs() < 1e-12, "{value}");
    }

    #[test]
    fn binary_gaussian_exponent_is_chernoff_information() {
        let tol = Tolerances::default();
        let view = ModelView::from_sources(
            vec![SourceModel::Gaussian {
                means: vec![0.0, 1.0],
                variance: 1.0,
            }],
            2,
        );
        let prob = ExpertProblem::from_parts(view, LossSpec::zero_one(2)).unwrap();
        let (value, probs) = prob.expert_exponent(&[1.0], &tol);
        assert!((value - 0.125).abs() < 1e-8, "{value}");
        // Both error-probability exponents equal 1/8 by symmetry.
        assert!((probs[0][1] - 0.125).abs() < 1e-8);
        assert!((probs[1][0] - 0.125).abs() < 1e-8);
    }

    /// Balanced policy on the 0-1 loss expert: the binding terms are the
    /// adjacent-hypothesis pairs with kappa = 2 (0.9 + 1)^2 / (4 sigma^2)
    /// summed over both sources, giving I = kappa / 4 = 0.0565625.
    #[test]
    fn balanced_policy_exponent_matches_closed_form() {
        let tol = Tolerances::default();
        let prob = table_problem(0);
        let (value, _) = prob.expert_exponent(&[0.5, 0.5], &tol);
        assert!((value - 0.0565625).abs() < 1e-7, "{value}");
    }

    #[test]
    fn alternating_reproduces_reference_policies() {
        let tol = Tolerances::default();
        let guesses = vec![
            Policy::new(vec![0.0, 1.0]).unwrap(),
            Policy::new(vec![0.3, 0.7]).unwrap(),
        ];
        let expected = [[0.5, 0.5], [1.0, 0.0], [0.5, 0.5]];
        for idx in 0..3 {
            let prob = table_problem(idx);
            let sol = optimize_expert_alternating(&prob, &guesses, &tol).unwrap();
            assert!(sol.converged, "expert {} did not converge", idx + 1);
            assert!(
                sol.iterations <= 30,
                "expert {}: {} iterations",
                idx + 1,
                sol.iterations
            );
            for (got, want) in sol.policy.weights().iter().zip(&expected[idx]) {
                assert!(
                    (got - want).abs() < 1e-3,
                    "expert {}: policy {:?}, expected {:?}",
                    idx + 1,
                    sol.policy.weights(),
                    expected[idx]
                );
            }
        }
    }

    #[test]
    fn grid_oracle_agrees_with_alternating() {
        let tol = Tolerances::default();
        let guesses = vec![
            Policy::new(vec![0.0, 1.0]).unwrap(),
            Policy::new(vec![0.3, 0.7]).unwrap(),
        ];
        for idx in [0, 1] {
            let prob = table_problem(idx);
            let grid = optimize_expert_grid(&prob, 0.05, &tol).unwrap();
            let alt = optimize_expert_alternating(&prob, &guesses, &tol).unwrap();
            assert!(
                alt.exponent <= grid.exponent + 1e-6,
                "expert {}: alternating {} exceeds grid {}",
                idx + 1,
                alt.exponent,
                grid.exponent
            );
            for (a, g) in alt.policy.weights().iter().zip(grid.policy.weights()) {
                assert!((a - g).abs() <= 0.05 + 1e-9, "expert {}", idx + 1);
            }
        }
        // The 0-1 loss expert's optimum sits on the grid, so the oracle
        // value equals the closed-form balanced exponent exactly.
        let grid = optimize_expert_grid(&table_problem(0), 0.05, &tol).unwrap();
        assert!((grid.exponent - 0.0565625).abs() < 1e-7, "{}", grid.exponent);
    }

    #[test]
    fn single_source_grid_returns_the_vertex() {
        let tol = Tolerances::default();
        let view = ModelView::from_sources(
            vec![SourceModel::Gaussian {
                means: vec![0.0, 1.0],
                variance: 1.0,
            }],
            2,
        );
        let prob = ExpertProblem::from_parts(view, LossSpec::zero_one(2)).unwrap();
        let sol = optimize_expert_grid(&prob, 0.25, &tol).unwrap();
        assert_eq!(sol.policy.weights(), &[1.0]);
        assert!((sol.exponent - 0.125).abs() < 1e-8);
    }

    #[test]
    fn guess_validation() {
        let tol = Tolerances::default();
        let prob = table_problem(0);
        assert!(matches!(
            optimize_expert_alternating(&prob, &[], &tol),
            Err(ExpertOptError::NoGuesses)
        ));
        let bad = vec![Policy::new(vec![1.0]).unwrap()];
        assert!(matches!(
            optimize_expert_alternating(&prob, &bad, &tol),
            Err(ExpertOptError::GuessDimension { .. })
        ));
    }
}
