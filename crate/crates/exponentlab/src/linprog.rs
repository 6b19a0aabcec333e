//! Dense two-phase tableau simplex for the small linear programs that show
//! up in the alternating policy optimizations and in polyhedron geometry
//! (feasibility, Chebyshev centers, redundancy checks).
//!
//! Problems here have at most a few dozen variables and constraints, so a
//! textbook dense tableau with Bland's anti-cycling rule is plenty.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub rel: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn le(coeffs: Vec<f64>, rhs: f64) -> Self {
        Constraint { coeffs, rel: Relation::Le, rhs }
    }
    pub fn ge(coeffs: Vec<f64>, rhs: f64) -> Self {
        Constraint { coeffs, rel: Relation::Ge, rhs }
    }
    pub fn eq(coeffs: Vec<f64>, rhs: f64) -> Self {
        Constraint { coeffs, rel: Relation::Eq, rhs }
    }
}

#[derive(Debug, Clone)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

const EPS: f64 = 1e-9;

/// Minimum magnitude for a ratio-test pivot element. Near-duplicate
/// constraint rows cancel to roundoff-scale entries (~1e-9 after a few
/// pivots); accepting one as a pivot divides the row by noise and destroys
/// the tableau, so the floor sits well above that scale. Problem data here
/// is O(1), so genuine pivots are far larger.
const PIVOT_EPS: f64 = 1e-7;

struct Tableau {
    /// Rows of [A | b], kept in canonical form w.r.t. the basis.
    rows: Vec<Vec<f64>>,
    /// Reduced-cost row with the negated objective value in the last slot.
    cost: Vec<f64>,
    basis: Vec<usize>,
    ncols: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
            }
        }
        let f = self.cost[c];
        if f != 0.0 {
            for (v, pv) in self.cost.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
        }
        self.basis[r] = c;
    }

    /// Reduce the cost row against the current basis.
    fn price_out(&mut self) {
        for (r, &bv) in self.basis.clone().iter().enumerate() {
            let f = self.cost[bv];
            if f != 0.0 {
                let row = self.rows[r].clone();
                for (v, pv) in self.cost.iter_mut().zip(&row) {
                    *v -= f * pv;
                }
            }
        }
    }

    /// Minimize with Bland's rule over the allowed columns. Returns false on
    /// an unbounded ray.
    fn run(&mut self, allowed: &[bool]) -> bool {
        loop {
            // Bland: first allowed column with negative reduced cost.
            let entering = (0..self.ncols)
                .find(|&j| allowed[j] && self.cost[j] < -EPS);
            let Some(c) = entering else { return true };
            let mut leave: Option<usize> = None;
            let mut best = f64::INFINITY;
            for r in 0..self.rows.len() {
                let a = self.rows[r][c];
                if a > PIVOT_EPS {
                    // Basic values can drift a hair negative; clamp so the
                    // ratio test never goes negative on noise.
                    let ratio = self.rows[r][self.ncols].max(0.0) / a;
                    let Some(keep) = leave else {
                        best = ratio;
                        leave = Some(r);
                        continue;
                    };
                    let tie = 1e-12 * (1.0 + best.abs());
                    if ratio < best - tie {
                        best = ratio;
                        leave = Some(r);
                    } else if ratio < best + tie {
                        // Tie: prefer the larger pivot element for stability,
                        // then the smaller basis index (Bland).
                        let ak = self.rows[keep][c];
                        if a > 10.0 * ak || (a > 0.1 * ak && self.basis[r] < self.basis[keep]) {
                            best = best.min(ratio);
                            leave = Some(r);
                        }
                    }
                }
            }
            match leave {
                Some(r) => self.pivot(r, c),
                None => return false,
            }
        }
    }
}

/// Maximize `objective . x` subject to the constraints, with `x >= 0`.
pub fn maximize(objective: &[f64], constraints: &[Constraint]) -> LpOutcome {
    let n = objective.len();
    let m = constraints.len();

    // Normalize to nonnegative right-hand sides.
    let mut norm: Vec<(Vec<f64>, Relation, f64)> = Vec::with_capacity(m);
    for c in constraints {
        assert_eq!(c.coeffs.len(), n);
        if c.rhs < 0.0 {
            let coeffs: Vec<f64> = c.coeffs.iter().map(|v| -v).collect();
            let rel = match c.rel {
                Relation::Le => Relation::Ge,
                Relation::Ge => Relation::Le,
                Relation::Eq => Relation::Eq,
            };
            norm.push((coeffs, rel, -c.rhs));
        } else {
            norm.push((c.coeffs.clone(), c.rel, c.rhs));
        }
    }

    let num_slack = norm
        .iter()
        .filter(|(_, rel, _)| *rel != Relation::Eq)
        .count();
    let num_art = norm
        .iter()
        .filter(|(_, rel, _)| *rel != Relation::Le)
        .count();
    let ncols = n + num_slack + num_art;

    let mut rows = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let mut art_cols = Vec::new();
    let mut s = n;
    let mut a_col = n + num_slack;
    for (coeffs, rel, rhs) in &norm {
        let mut row = vec![0.0; ncols + 1];
        row[..n].copy_from_slice(coeffs);
        row[ncols] = *rhs;
        match rel {
            Relation::Le => {
                row[s] = 1.0;
                basis.push(s);
                s += 1;
            }
            Relation::Ge => {
                row[s] = -1.0;
                s += 1;
                row[a_col] = 1.0;
                basis.push(a_col);
                art_cols.push(a_col);
                a_col += 1;
            }
            Relation::Eq => {
                row[a_col] = 1.0;
                basis.push(a_col);
                art_cols.push(a_col);
                a_col += 1;
            }
        }
        rows.push(row);
    }

    let mut t = Tableau {
        rows,
        cost: vec![0.0; ncols + 1],
        basis,
        ncols,
    };

    // Phase 1: minimize the sum of artificials.
    if !art_cols.is_empty() {
        for &j in &art_cols {
            t.cost[j] = 1.0;
        }
        t.price_out();
        let allowed = vec![true; ncols];
        if !t.run(&allowed) {
            return LpOutcome::Infeasible; // cannot happen: phase 1 is bounded
        }
        if -t.cost[ncols] > 1e-7 {
            return LpOutcome::Infeasible;
        }
        // Drive any residual artificial out of the basis.
        let is_art = |j: usize| art_cols.contains(&j);
        for r in 0..t.rows.len() {
            if is_art(t.basis[r]) {
                if let Some(c) = (0..n + num_slack).find(|&j| t.rows[r][j].abs() > PIVOT_EPS) {
                    t.pivot(r, c);
                }
                // A fully zero row is a redundant constraint; the artificial
                // stays basic at value zero, which is harmless.
            }
        }
    }

    // Phase 2: minimize -objective, artificials barred.
    t.cost = vec![0.0; ncols + 1];
    for j in 0..n {
        t.cost[j] = -objective[j];
    }
    t.price_out();
    let mut allowed = vec![true; ncols];
    for &j in &art_cols {
        allowed[j] = false;
    }
    if !t.run(&allowed) {
        return LpOutcome::Unbounded;
    }

    let mut x = vec![0.0; n];
    for (r, &bv) in t.basis.iter().enumerate() {
        if bv < n {
            x[bv] = t.rows[r][t.ncols];
        }
    }
    let value = t.cost[ncols];
    LpOutcome::Optimal { x, value }
}

/// Maximize over sign-free variables by splitting each `x_j` into
/// `x_j^+ - x_j^-`. Constraint and objective coefficients refer to the
/// original free variables.
pub fn maximize_free(objective: &[f64], constraints: &[Constraint]) -> LpOutcome {
    let n = objective.len();
    let split = |v: &[f64]| -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * n);
        for &c in v {
            out.push(c);
            out.push(-c);
        }
        out
    };
    let obj2 = split(objective);
    let cons2: Vec<Constraint> = constraints
        .iter()
        .map(|c| Constraint {
            coeffs: split(&c.coeffs),
            rel: c.rel,
            rhs: c.rhs,
        })
        .collect();
    match maximize(&obj2, &cons2) {
        LpOutcome::Optimal { x, value } => {
            let merged: Vec<f64> = (0..n).map(|j| x[2 * j] - x[2 * j + 1]).collect();
            LpOutcome::Optimal { x: merged, value }
        }
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_opt(out: &LpOutcome, want_val: f64, want_x: &[f64]) {
        match out {
            LpOutcome::Optimal { x, value } => {
                assert!((value - want_val).abs() < 1e-8, "value {value} != {want_val}");
                for (a, b) in x.iter().zip(want_x) {
                    assert!((a - b).abs() < 1e-8, "{x:?} != {want_x:?}");
                }
            }
            other => panic!("expected optimal, got {other:?}"),
        }
    }

    #[test]
    fn simple_max() {
        // max 3x + 2y s.t. x + y <= 4, x + 3y <= 6
        let out = maximize(
            &[3.0, 2.0],
            &[
                Constraint::le(vec![1.0, 1.0], 4.0),
                Constraint::le(vec![1.0, 3.0], 6.0),
            ],
        );
        assert_opt(&out, 12.0, &[4.0, 0.0]);
    }

    #[test]
    fn equality_and_ge_rows() {
        // max x + y s.t. x + y = 3, x >= 1, y <= 5
        let out = maximize(
            &[1.0, 1.0],
            &[
                Constraint::eq(vec![1.0, 1.0], 3.0),
                Constraint::ge(vec![1.0, 0.0], 1.0),
                Constraint::le(vec![0.0, 1.0], 5.0),
            ],
        );
        match out {
            LpOutcome::Optimal { value, .. } => assert!((value - 3.0).abs() < 1e-8),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn detects_infeasible() {
        let out = maximize(
            &[1.0],
            &[
                Constraint::ge(vec![1.0], 5.0),
                Constraint::le(vec![1.0], 2.0),
            ],
        );
        assert!(matches!(out, LpOutcome::Infeasible));
    }

    #[test]
    fn detects_unbounded() {
        let out = maximize(&[1.0, 0.0], &[Constraint::ge(vec![1.0, 1.0], 1.0)]);
        assert!(matches!(out, LpOutcome::Unbounded));
    }

    #[test]
    fn free_variables() {
        // max -x s.t. x >= -3 (so optimum x = -3)
        let out = maximize_free(&[-1.0], &[Constraint::ge(vec![1.0], -3.0)]);
        assert_opt(&out, 3.0, &[-3.0]);
    }

    #[test]
    fn free_chebyshev_style() {
        // Largest ball in the triangle x >= 0, y >= 0, x + y <= 1:
        // max d s.t. -x + d <= 0, -y + d <= 0, x + y + sqrt(2) d <= 1.
        let r2 = std::f64::consts::SQRT_2;
        let out = maximize_free(
            &[0.0, 0.0, 1.0],
            &[
                Constraint::le(vec![-1.0, 0.0, 1.0], 0.0),
                Constraint::le(vec![0.0, -1.0, 1.0], 0.0),
                Constraint::le(vec![1.0, 1.0, r2], 1.0),
            ],
        );
        let want = 1.0 / (2.0 + r2);
        match out {
            LpOutcome::Optimal { value, x } => {
                assert!((value - want).abs() < 1e-9);
                assert!((x[0] - want).abs() < 1e-9 && (x[1] - want).abs() < 1e-9);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn degenerate_redundant_rows() {
        // Redundant equalities must not break phase 1 cleanup.
        let out = maximize(
            &[1.0, 1.0],
            &[
                Constraint::eq(vec![1.0, 1.0], 2.0),
                Constraint::eq(vec![2.0, 2.0], 4.0),
                Constraint::le(vec![1.0, 0.0], 1.5),
            ],
        );
        match out {
            LpOutcome::Optimal { value, .. } => assert!((value - 2.0).abs() < 1e-8),
            other => panic!("{other:?}"),
        }
    }
}
