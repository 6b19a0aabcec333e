//! Decision functionals and asymptotic decision regions.
//!
//! An expert observing LLR statistics `z` declares the decision minimizing
//! the finite-n functional `g_k`; as the observation count grows this
//! converges uniformly to `f_k`, whose strict sublevel sets
//! `A_k(d) = { z : f_k(z0, d) < 0 }` are the asymptotic decision regions.
//! Each region decomposes into a finite union of halfspace-intersection
//! polyhedra indexed by argmax sequences, which lets us minimize the rate
//! function `Phi*_m` over a region polyhedron-by-polyhedron.

use crate::fenchel::{hessian_range, phi_star, Tolerances};
use crate::linalg::{dot, log_sum_exp, norm2, null_space, sub, Mat};
use crate::linprog::{maximize_free, Constraint, LpOutcome};
use crate::mgf::ModelView;
use crate::scenario::LossSpec;

#[derive(Debug, thiserror::Error)]
pub enum RegionError {
    #[error("decision space must have at least two decisions")]
    DegenerateDecisionSpace,
    #[error("region enumeration needs {needed} sequences, above the cap of {cap}")]
    EnumerationCap { needed: f64, cap: usize },
}

/// Asymptotic expected-loss functional
/// `f~_k(z0, d) = max_m { z0[m] - c_k(m, d) }`, with `z0[0] = 0` and
/// infinite-rate terms dropping out of the max.
pub fn f_tilde(loss: &LossSpec, z0: &[f64], d: usize) -> f64 {
    debug_assert_eq!(z0[0], 0.0);
    (0..loss.num_hypotheses())
        .map(|m| {
            let c = loss.rate(m, d);
            if c.is_finite() {
                z0[m] - c
            } else {
                f64::NEG_INFINITY
            }
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Centered functional `f_k(z0, d) = f~_k(z0, d) - min_{d' != d} f~_k(z0, d')`;
/// the region `A_k(d)` is `{ f_k < 0 }`.
pub fn f(loss: &LossSpec, z0: &[f64], d: usize) -> f64 {
    let own = f_tilde(loss, z0, d);
    let rival = (0..loss.num_decisions())
        .filter(|&dd| dd != d)
        .map(|dd| f_tilde(loss, z0, dd))
        .fold(f64::INFINITY, f64::min);
    if own == f64::NEG_INFINITY && rival == f64::NEG_INFINITY {
        return 0.0;
    }
    own - rival
}

/// Finite-n expected-loss functional
/// `g~_k(z0, d, n) = (1/n) log sum_m pi_m exp(log C(m,d) + n z0[m])`.
/// Loss values are passed in the log domain (`-inf` for an exactly-zero
/// loss) so that rates like `c = 0.2` stay representable at `n = 10^4`.
pub fn g_tilde(log_loss: &[Vec<f64>], priors: &[f64], z0: &[f64], d: usize, n: f64) -> f64 {
    let terms: Vec<f64> = (0..priors.len())
        .map(|m| priors[m].ln() + log_loss[m][d] + n * z0[m])
        .collect();
    log_sum_exp(&terms) / n
}

/// Centered finite-n functional, the analogue of [`f`].
pub fn g(log_loss: &[Vec<f64>], priors: &[f64], z0: &[f64], d: usize, n: f64) -> f64 {
    let own = g_tilde(log_loss, priors, z0, d, n);
    let rival = (0..log_loss[0].len())
        .filter(|&dd| dd != d)
        .map(|dd| g_tilde(log_loss, priors, z0, dd, n))
        .fold(f64::INFINITY, f64::min);
    if own == f64::NEG_INFINITY && rival == f64::NEG_INFINITY {
        return 0.0;
    }
    own - rival
}

/// One constraint `coeffs . z >= rhs` in R^{M-1}.
#[derive(Debug, Clone, PartialEq)]
pub struct Halfspace {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
}

/// Intersection of halfspaces arising from one argmax sequence.
#[derive(Debug, Clone)]
pub struct Polyhedron {
    /// The argmax sequence (m_p) that generated this cell.
    pub sequence: Vec<usize>,
    pub halfspaces: Vec<Halfspace>,
    /// A strictly interior point (Chebyshev center of the boxed cell).
    pub interior_point: Vec<f64>,
}

impl Polyhedron {
    pub fn contains(&self, z: &[f64], tol: f64) -> bool {
        self.halfspaces
            .iter()
            .all(|h| dot(&h.coeffs, z) >= h.rhs - tol)
    }
}

/// Decomposition of every decision region of one expert.
#[derive(Debug, Clone)]
pub struct RegionSet {
    /// Dimension M - 1 of the LLR space.
    pub dim: usize,
    /// `per_decision[d]` lists the polyhedra whose union is `A_k(d)`.
    pub per_decision: Vec<Vec<Polyhedron>>,
}

enum HalfspaceKind {
    WholeSpace,
    Empty,
    Proper(Halfspace),
}

/// Halfspace `B(i, p, j, q) = { z0[i] - z0[j] >= c(i,p) - c(j,q) }` with the
/// extended-real conventions: an infinite `c(i,p)` alone makes the halfspace
/// empty, an infinite `c(j,q)` alone (or both infinite) makes it the whole
/// space.
fn halfspace(loss: &LossSpec, dim: usize, i: usize, p: usize, j: usize, q: usize) -> HalfspaceKind {
    let ci = loss.rate(i, p);
    let cj = loss.rate(j, q);
    if cj == f64::INFINITY {
        return HalfspaceKind::WholeSpace;
    }
    if ci == f64::INFINITY {
        return HalfspaceKind::Empty;
    }
    let mut coeffs = vec![0.0; dim];
    if i > 0 {
        coeffs[i - 1] += 1.0;
    }
    if j > 0 {
        coeffs[j - 1] -= 1.0;
    }
    let rhs = ci - cj;
    if coeffs.iter().all(|&c| c == 0.0) {
        if rhs > 1e-15 {
            HalfspaceKind::Empty
        } else {
            HalfspaceKind::WholeSpace
        }
    } else {
        HalfspaceKind::Proper(Halfspace { coeffs, rhs })
    }
}

/// Chebyshev center of the halfspace intersection inside the box
/// `|z_j| <= box_r`. Returns `(center, radius)`.
fn chebyshev_center(halfspaces: &[Halfspace], dim: usize, box_r: f64) -> Option<(Vec<f64>, f64)> {
    // Variables (z, delta); maximize delta subject to
    // a.z - |a| delta >= rhs for each halfspace, the box, and delta <= 1.
    let mut cons = Vec::new();
    for h in halfspaces {
        let mut row = h.coeffs.clone();
        row.push(-norm2(&h.coeffs));
        cons.push(Constraint::ge(row, h.rhs));
    }
    for j in 0..dim {
        let mut lo = vec![0.0; dim + 1];
        lo[j] = 1.0;
        lo[dim] = -1.0;
        cons.push(Constraint::ge(lo, -box_r));
        let mut hi = vec![0.0; dim + 1];
        hi[j] = -1.0;
        hi[dim] = -1.0;
        cons.push(Constraint::ge(hi, -box_r));
    }
    let mut cap = vec![0.0; dim + 1];
    cap[dim] = 1.0;
    cons.push(Constraint::le(cap, 1.0));
    let mut obj = vec![0.0; dim + 1];
    obj[dim] = 1.0;
    match maximize_free(&obj, &cons) {
        LpOutcome::Optimal { x, value } => Some((x[..dim].to_vec(), value)),
        _ => None,
    }
}

/// Drop halfspaces implied by the rest (checked by LP inside a box).
fn remove_redundant(halfspaces: &mut Vec<Halfspace>, dim: usize, box_r: f64) {
    let mut l = 0;
    while l < halfspaces.len() {
        if halfspaces.len() == 1 {
            break;
        }
        let target = halfspaces[l].clone();
        let mut cons: Vec<Constraint> = halfspaces
            .iter()
            .enumerate()
            .filter(|&(idx, _)| idx != l)
            .map(|(_, h)| Constraint::ge(h.coeffs.clone(), h.rhs))
            .collect();
        for j in 0..dim {
            let mut e = vec![0.0; dim];
            e[j] = 1.0;
            cons.push(Constraint::le(e.clone(), box_r));
            e[j] = -1.0;
            cons.push(Constraint::le(e, box_r));
        }
        // Minimize a.z over the others; redundant if the minimum stays >= rhs.
        let neg: Vec<f64> = target.coeffs.iter().map(|c| -c).collect();
        let redundant = match maximize_free(&neg, &cons) {
            LpOutcome::Optimal { value, .. } => -value >= target.rhs - 1e-9,
            _ => false,
        };
        if redundant {
            halfspaces.remove(l);
        } else {
            l += 1;
        }
    }
}

fn canonical_key(halfspaces: &[Halfspace]) -> Vec<(Vec<i64>, i64)> {
    let mut key: Vec<(Vec<i64>, i64)> = halfspaces
        .iter()
        .map(|h| {
            // Normalize scale so identical constraints compare equal.
            let s = crate::linalg::norm_inf(&h.coeffs).max(1e-300);
            (
                h.coeffs.iter().map(|c| (c / s * 1e9).round() as i64).collect(),
                (h.rhs / s * 1e9).round() as i64,
            )
        })
        .collect();
    key.sort();
    key.dedup();
    key
}

/// Enumerate the polyhedral decomposition of every decision region.
pub fn build_regions(loss: &LossSpec, enumeration_cap: usize) -> Result<RegionSet, RegionError> {
    let m = loss.num_hypotheses();
    let dk = loss.num_decisions();
    if dk < 2 {
        return Err(RegionError::DegenerateDecisionSpace);
    }
    let needed = (m as f64).powi(dk as i32);
    if needed > enumeration_cap as f64 {
        return Err(RegionError::EnumerationCap {
            needed,
            cap: enumeration_cap,
        });
    }
    let dim = m - 1;
    let max_rate = loss
        .rows()
        .iter()
        .flatten()
        .cloned()
        .filter(|c| c.is_finite())
        .fold(0.0_f64, |a, b| a.max(b.abs()));
    let box_r = 1e3 + 10.0 * max_rate;

    let mut per_decision: Vec<Vec<Polyhedron>> = vec![Vec::new(); dk];
    let mut keys: Vec<Vec<Vec<(Vec<i64>, i64)>>> = vec![Vec::new(); dk];

    let total = (needed as usize).max(1);
    'seq: for code in 0..total {
        // Decode the sequence (m_p) from the mixed-radix counter.
        let mut seq = Vec::with_capacity(dk);
        let mut rem = code;
        for _ in 0..dk {
            seq.push(rem % m);
            rem /= m;
        }
        // Within-decision argmax constraints are shared across target d.
        let mut shared = Vec::new();
        for (p, &mp) in seq.iter().enumerate() {
            for i in 0..m {
                if i == mp {
                    continue;
                }
                match halfspace(loss, dim, mp, p, i, p) {
                    HalfspaceKind::Empty => continue 'seq,
                    HalfspaceKind::WholeSpace => {}
                    HalfspaceKind::Proper(h) => shared.push(h),
                }
            }
        }
        'dec: for d in 0..dk {
            let mut hs = shared.clone();
            for (p, &mp) in seq.iter().enumerate() {
                if p == d {
                    continue;
                }
                match halfspace(loss, dim, mp, p, seq[d], d) {
                    HalfspaceKind::Empty => continue 'dec,
                    HalfspaceKind::WholeSpace => {}
                    HalfspaceKind::Proper(h) => hs.push(h),
                }
            }
            // Same normal appearing twice keeps only the tightest rhs.
            hs.sort_by(|a, b| {
                a.coeffs
                    .partial_cmp(&b.coeffs)
                    .unwrap()
                    .then(b.rhs.partial_cmp(&a.rhs).unwrap())
            });
            hs.dedup_by(|next, prev| next.coeffs == prev.coeffs);

            let Some((center, radius)) = chebyshev_center(&hs, dim, box_r) else {
                continue;
            };
            if radius <= 1e-9 {
                continue;
            }
            remove_redundant(&mut hs, dim, box_r);
            let key = canonical_key(&hs);
            if keys[d].contains(&key) {
                continue;
            }
            keys[d].push(key);
            per_decision[d].push(Polyhedron {
                sequence: seq.clone(),
                halfspaces: hs,
                interior_point: center,
            });
        }
    }

    // Drop polyhedra contained in a sibling (key is a superset of the
    // sibling's key, so the constraint set is at least as tight).
    for d in 0..dk {
        let cells = &mut per_decision[d];
        let cell_keys: Vec<_> = cells.iter().map(|p| canonical_key(&p.halfspaces)).collect();
        let mut keep = vec![true; cells.len()];
        for a in 0..cells.len() {
            for b in 0..cells.len() {
                if a == b || !keep[a] {
                    continue;
                }
                if keep[b]
                    && cell_keys[a].len() > cell_keys[b].len()
                    && cell_keys[b].iter().all(|k| cell_keys[a].contains(k))
                {
                    keep[a] = false;
                }
            }
        }
        let mut idx = 0;
        cells.retain(|_| {
            idx += 1;
            keep[idx - 1]
        });
    }

    Ok(RegionSet { dim, per_decision })
}

/// Scalar-transform path for Assumption-4 losses: the candidate value
/// `Lambda*_{ji}(c(i) - c(j), x)` for `inf over A(i) of Phi*_j`, together
/// with the face minimizer it implies and whether the identity's premise
/// holds. The identity is exact iff the mean LLR under `j` classifies
/// correctly and the face minimizer satisfies the remaining constraints of
/// `A(i)` (equivalently, lies in the region's closure). When the mean
/// classifies correctly but the face minimizer escapes `A(i)`, the value is
/// a strict lower bound (halfspace relaxation); when the mean itself
/// misclassifies, the scalar value can land on either side of the region
/// infimum and carries no guarantee.
pub fn dual_path_infimum(
    view: &ModelView,
    j: usize,
    i: usize,
    loss: &LossSpec,
    x: &[f64],
    tol: &Tolerances,
) -> (f64, Vec<f64>, bool) {
    debug_assert!(loss.is_assumption4_form());
    let dim = view.dim();
    let rhs = loss.off_diagonal_rate(i) - loss.off_diagonal_rate(j);
    let (value, s_star) = crate::fenchel::lambda_star(view, j, i, rhs, x, tol);
    // The pairwise statistic z0[i] - z0[j] has z-space coefficients a.
    let mut a = vec![0.0; dim];
    if i > 0 {
        a[i - 1] += 1.0;
    }
    if j > 0 {
        a[j - 1] -= 1.0;
    }
    let t_star: Vec<f64> = a.iter().map(|ai| ai * s_star).collect();
    let z_star = view.phi_grad(j, &t_star, x);
    let mut z0_star = vec![0.0];
    z0_star.extend_from_slice(&z_star);
    let mut z0_mean = vec![0.0];
    z0_mean.extend(view.mean_llr(j, x));
    let premise = value.is_finite()
        && f(loss, &z0_mean, j) < -1e-12
        && f(loss, &z0_star, i) <= 1e-9;
    (value, z_star, premise)
}

/// Dual certificate for a halfspace-constrained rate minimum: maximizes the
/// concave scalar dual `q(lambda) = lambda * rhs - phi_m(lambda * a, x)` of
/// `inf over {a.z >= rhs} of Phi*_m(z, x)`. Returns the certificate tilt
/// `lambda* a` when the dual value matches `primal` (the minimum found over
/// the full polyhedron), i.e. when the single active facet tells the whole
/// story. The certificate equals the unique Fenchel maximizer whenever the
/// tilt problem is nondegenerate; when the policy makes it degenerate (a
/// rank-deficient mixture), it canonically resolves the maximizer along the
/// facet normal.
fn halfspace_dual_tilt(
    view: &ModelView,
    m: usize,
    x: &[f64],
    a: &[f64],
    rhs: f64,
    primal: f64,
    lambda0: f64,
) -> Option<Vec<f64>> {
    let q = |lam: f64| -> f64 {
        let t: Vec<f64> = a.iter().map(|ai| ai * lam).collect();
        lam * rhs - view.phi(m, &t, x)
    };
    let mut lam = lambda0.max(0.0);
    if !q(lam).is_finite() {
        lam = 0.0;
    }
    for _ in 0..100 {
        let t: Vec<f64> = a.iter().map(|ai| ai * lam).collect();
        let slope = rhs - dot(a, &view.phi_grad(m, &t, x));
        if slope.abs() <= 1e-10 * (1.0 + rhs.abs()) {
            break;
        }
        let hess = view.phi_hess(m, &t, x);
        let curv: f64 = (0..a.len())
            .map(|r| a[r] * (0..a.len()).map(|c| hess[(r, c)] * a[c]).sum::<f64>())
            .sum();
        let mut step = if curv > 1e-14 { slope / curv } else { slope.signum() };
        // Backtrack onto the concave dual (and away from +infinity values).
        let base = q(lam);
        for _ in 0..60 {
            let cand = (lam + step).max(0.0);
            let qv = q(cand);
            if qv.is_finite() && qv >= base {
                lam = cand;
                break;
            }
            step *= 0.5;
        }
        if lam == 0.0 && slope < 0.0 {
            break;
        }
    }
    let value = q(lam);
    if (value - primal).abs() <= 1e-7 * (1.0 + primal.abs()) {
        Some(a.iter().map(|ai| ai * lam).collect())
    } else {
        None
    }
}

/// Result of minimizing `Phi*_m` over one decision region.
#[derive(Debug, Clone)]
pub struct RegionInfimum {
    pub value: f64,
    /// Argmin in LLR space (meaningful when the value is finite).
    pub minimizer: Vec<f64>,
    /// Tilt vector at the argmin, i.e. the gradient of `Phi*_m` there.
    pub tilt: Vec<f64>,
    pub converged: bool,
}

/// Dykstra's cyclic projection onto an intersection of halfspaces
/// `a_l . u >= b_l`.
fn dykstra_project(u0: &[f64], cons: &[(Vec<f64>, f64)], tol: f64) -> Vec<f64> {
    if cons.is_empty() {
        return u0.to_vec();
    }
    let mut x = u0.to_vec();
    let mut corrections = vec![vec![0.0; u0.len()]; cons.len()];
    for _sweep in 0..5000 {
        let mut shift = 0.0_f64;
        for (l, (a, b)) in cons.iter().enumerate() {
            let y: Vec<f64> = x.iter().zip(&corrections[l]).map(|(xi, pi)| xi + pi).collect();
            let viol = b - dot(a, &y);
            let xn = if viol > 0.0 {
                let scale = viol / dot(a, a);
                y.iter().zip(a).map(|(yi, ai)| yi + scale * ai).collect()
            } else {
                y.clone()
            };
            for k in 0..x.len() {
                corrections[l][k] = y[k] - xn[k];
                shift = shift.max((xn[k] - x[k]).abs());
                x[k] = xn[k];
            }
        }
        if shift <= tol {
            break;
        }
    }
    x
}

struct ReducedObjective<'a> {
    view: &'a ModelView,
    m: usize,
    x: &'a [f64],
    basis: &'a Mat,
    z_mean: &'a [f64],
    tol: &'a Tolerances,
}

impl ReducedObjective<'_> {
    fn z_of(&self, u: &[f64]) -> Vec<f64> {
        let mut z = self.basis.matvec(u);
        for (zi, mi) in z.iter_mut().zip(self.z_mean) {
            *zi += mi;
        }
        z
    }

    /// Value and full-space tilt at `u`; the reduced gradient is `B^T t`.
    fn eval(&self, u: &[f64], warm: Option<&[f64]>) -> (f64, Vec<f64>) {
        let z = self.z_of(u);
        let r = phi_star(self.view, self.m, &z, self.x, warm, self.tol);
        (r.value, r.maximizer)
    }

    fn grad(&self, tilt: &[f64]) -> Vec<f64> {
        self.basis.tmatvec(tilt)
    }

    /// Reduced Hessian of Phi* at the tilt: inverse of `B^T hess(phi) B`.
    fn hess(&self, tilt: &[f64]) -> Option<Mat> {
        let hp = self.basis.congruence(&self.view.phi_hess(self.m, tilt, self.x));
        let k = hp.rows;
        let mut inv = Mat::zeros(k, k);
        for j in 0..k {
            let mut e = vec![0.0; k];
            e[j] = 1.0;
            let col = crate::linalg::cholesky_solve(&hp, &e, 1e-12)?;
            for i in 0..k {
                inv[(i, j)] = col[i];
            }
        }
        Some(inv)
    }
}

/// Minimize `Phi*_m(., x)` over the closure of the decision region
/// `A_k(d)`, exploiting its polyhedral decomposition.
pub fn inf_rate_over_region(
    view: &ModelView,
    m: usize,
    x: &[f64],
    loss: &LossSpec,
    d: usize,
    regions: &RegionSet,
    tol: &Tolerances,
) -> RegionInfimum {
    let dim = view.dim();
    let z_mean = view.mean_llr(m, x);
    let mut z0 = vec![0.0];
    z0.extend_from_slice(&z_mean);

    // Shortcut: the mean LLR already lies strictly inside the region.
    if f(loss, &z0, d) < -1e-12 {
        return RegionInfimum {
            value: 0.0,
            minimizer: z_mean,
            tilt: vec![0.0; dim],
            converged: true,
        };
    }

    let basis = hessian_range(view, m, x, tol);
    let k = basis.cols;
    let mut best = RegionInfimum {
        value: f64::INFINITY,
        minimizer: z_mean.clone(),
        tilt: vec![0.0; dim],
        converged: true,
    };

    for poly in &regions.per_decision[d] {
        let r = minimize_over_polyhedron(view, m, x, &basis, &z_mean, poly, k, tol);
        if r.value < best.value {
            best = r;
        }
    }
    best.value = best.value.max(0.0);
    best
}

fn minimize_over_polyhedron(
    view: &ModelView,
    m: usize,
    x: &[f64],
    basis: &Mat,
    z_mean: &[f64],
    poly: &Polyhedron,
    k: usize,
    tol: &Tolerances,
) -> RegionInfimum {
    let dim = view.dim();
    let infinite = RegionInfimum {
        value: f64::INFINITY,
        minimizer: z_mean.to_vec(),
        tilt: vec![0.0; dim],
        converged: true,
    };

    // Reduce constraints to the reachable subspace: a.(z~ + B u) >= rhs.
    let mut cons: Vec<(Vec<f64>, f64)> = Vec::new();
    for h in &poly.halfspaces {
        let g = basis.tmatvec(&h.coeffs);
        let b = h.rhs - dot(&h.coeffs, z_mean);
        let scale = 1.0 + norm2(&h.coeffs) * (1.0 + norm2(z_mean));
        if norm2(&g) < 1e-10 * scale {
            if b > 1e-9 * scale {
                return infinite; // subspace misses this polyhedron entirely
            }
            continue;
        }
        cons.push((g, b));
    }

    let obj = ReducedObjective {
        view,
        m,
        x,
        basis,
        z_mean,
        tol,
    };

    if k == 0 || cons.is_empty() {
        // Whole subspace is feasible: the minimum 0 sits at the mean LLR.
        let feasible = cons.iter().all(|(_, b)| *b <= 1e-9);
        return if feasible && k == 0 && !cons.is_empty() {
            infinite
        } else {
            RegionInfimum {
                value: 0.0,
                minimizer: z_mean.to_vec(),
                tilt: vec![0.0; dim],
                converged: true,
            }
        };
    }

    // Start candidates: projection of the mean LLR (u = 0) and the
    // Chebyshev center of the reduced polyhedron.
    let mut starts: Vec<Vec<f64>> = vec![dykstra_project(&vec![0.0; k], &cons, 1e-10)];
    let hs: Vec<Halfspace> = cons
        .iter()
        .map(|(a, b)| Halfspace {
            coeffs: a.clone(),
            rhs: *b,
        })
        .collect();
    let max_b = cons.iter().map(|(_, b)| b.abs()).fold(0.0_f64, f64::max);
    // The minimizer sits within a few constraint-offsets of u = 0 (where the
    // rate is 0), so a tight box keeps the Chebyshev start out of regions
    // where the rate blows up (finite-support sources).
    if let Some((center, radius)) = chebyshev_center(&hs, k, 10.0 + 10.0 * max_b) {
        if radius > -1e-9 {
            starts.push(center);
        } else {
            return infinite; // reduced polyhedron is empty
        }
    }

    let mut best_val = f64::INFINITY;
    let mut best_u = vec![0.0; k];
    let mut best_tilt = vec![0.0; dim];
    let mut converged = false;

    for start in starts {
        let mut u = start;
        // A start with infinite rate (outside the reachable convex hull for
        // finite sources) is walked back toward u = 0 where the rate is 0.
        let (mut val, mut tilt) = obj.eval(&u, None);
        if !val.is_finite() {
            let mut lo = 0.0_f64;
            let mut hi = 1.0_f64;
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                let cand: Vec<f64> = u.iter().map(|ui| ui * mid).collect();
                let feasible = cons.iter().all(|(a, b)| dot(a, &cand) >= b - 1e-9);
                let (v, _) = obj.eval(&cand, None);
                if v.is_finite() {
                    if feasible {
                        lo = mid;
                        break;
                    }
                    hi = mid;
                } else {
                    hi = mid;
                }
            }
            let cand: Vec<f64> = u.iter().map(|ui| ui * lo).collect();
            let feasible = cons.iter().all(|(a, b)| dot(a, &cand) >= b - 1e-9);
            if !feasible {
                continue;
            }
            u = cand;
            let e = obj.eval(&u, None);
            val = e.0;
            tilt = e.1;
            if !val.is_finite() {
                continue;
            }
        }

        // Projected gradient descent with backtracking.
        let mut alpha = 1.0;
        for _ in 0..400 {
            let grad = obj.grad(&tilt);
            let mut moved = false;
            for _ in 0..40 {
                let cand_raw: Vec<f64> = u.iter().zip(&grad).map(|(ui, gi)| ui - alpha * gi).collect();
                let cand = dykstra_project(&cand_raw, &cons, 1e-11);
                let (cv, ct) = obj.eval(&cand, Some(&tilt));
                let dist2: f64 = cand.iter().zip(&u).map(|(a, b)| (a - b) * (a - b)).sum();
                if cv.is_finite() && cv <= val - 0.25 * dist2 / alpha.max(1e-12) {
                    u = cand;
                    val = cv;
                    tilt = ct;
                    alpha = (alpha * 1.5).min(1e3);
                    moved = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !moved {
                break;
            }
            let grad_new = obj.grad(&tilt);
            let proj_step = dykstra_project(
                &u.iter().zip(&grad_new).map(|(ui, gi)| ui - gi).collect::<Vec<_>>(),
                &cons,
                1e-11,
            );
            let stat = norm2(&sub(&proj_step, &u));
            if stat < 1e-9 * (1.0 + norm2(&u)) {
                break;
            }
        }

        // Active-set Newton polish with multiplier verification.
        let mut dropped: Vec<usize> = Vec::new();
        for _outer in 0..4 {
            let active: Vec<usize> = cons
                .iter()
                .enumerate()
                .filter(|(l, (a, b))| {
                    !dropped.contains(l) && dot(a, &u) - b <= 1e-7 * (1.0 + b.abs())
                })
                .map(|(l, _)| l)
                .collect();
            let rows: Vec<Vec<f64>> = active.iter().map(|&l| cons[l].0.clone()).collect();
            let nsp = null_space(&rows, k, 1e-10);
            let mut stalled = false;
            for _ in 0..40 {
                let grad = obj.grad(&tilt);
                if nsp.cols == 0 {
                    break;
                }
                let gn = nsp.tmatvec(&grad);
                if norm2(&gn) <= 1e-12 * (1.0 + norm2(&grad)) {
                    break;
                }
                let step_w = match obj.hess(&tilt) {
                    Some(hf) => {
                        let hn = nsp.congruence(&hf);
                        crate::linalg::cholesky_solve(&hn, &gn, 1e-12).unwrap_or(gn.clone())
                    }
                    None => gn.clone(),
                };
                let du = nsp.matvec(&step_w);
                let mut beta = 1.0;
                let mut ok = false;
                for _ in 0..50 {
                    let cand: Vec<f64> = u.iter().zip(&du).map(|(ui, s)| ui - beta * s).collect();
                    let feasible = cons.iter().all(|(a, b)| dot(a, &cand) >= b - 1e-10 * (1.0 + b.abs()));
                    if feasible {
                        let (cv, ct) = obj.eval(&cand, Some(&tilt));
                        if cv.is_finite() && cv <= val + 1e-14 {
                            u = cand;
                            val = cv;
                            tilt = ct;
                            ok = true;
                            break;
                        }
                    }
                    beta *= 0.5;
                }
                if !ok {
                    stalled = true;
                    break;
                }
            }
            // KKT multipliers: grad = sum lambda_l a_l, lambda >= 0.
            let grad = obj.grad(&tilt);
            if active.is_empty() {
                converged = norm2(&grad) <= 1e-8 * (1.0 + val.abs());
                break;
            }
            let na = active.len();
            let mut ata = Mat::zeros(na, na);
            let mut atg = vec![0.0; na];
            for (r, &lr) in active.iter().enumerate() {
                for (c, &lc) in active.iter().enumerate() {
                    ata[(r, c)] = dot(&cons[lr].0, &cons[lc].0);
                }
                ata[(r, r)] += 1e-12;
                atg[r] = dot(&cons[lr].0, &grad);
            }
            let lambda = crate::linalg::cholesky_solve(&ata, &atg, 1e-14).unwrap_or(vec![0.0; na]);
            let (worst_idx, worst) = lambda
                .iter()
                .enumerate()
                .fold((0, f64::INFINITY), |acc, (i, &l)| if l < acc.1 { (i, l) } else { acc });
            if worst >= -1e-7 * (1.0 + norm2(&grad)) {
                converged = !stalled;
                break;
            }
            dropped.push(active[worst_idx]);
        }

        if val < best_val {
            best_val = val;
            best_u = u;
            best_tilt = tilt;
        }
    }

    if !best_val.is_finite() {
        return infinite;
    }
    let mut minimizer = basis.matvec(&best_u);
    for (zi, mi) in minimizer.iter_mut().zip(z_mean) {
        *zi += mi;
    }
    // Report the dual-certificate tilt when the minimizer sits on exactly one
    // facet. The ascent tilt above lives in the reachable subspace, which is
    // one valid maximizer among many when the mixture is rank-deficient; the
    // facet-normal certificate is the canonical choice and matches downstream
    // sensitivity use (it prices the constraint that actually binds).
    let mut tilt = best_tilt;
    if best_val > 1e-12 {
        let active: Vec<&Halfspace> = poly
            .halfspaces
            .iter()
            .filter(|h| {
                (dot(&h.coeffs, &minimizer) - h.rhs).abs()
                    <= 1e-7 * (1.0 + h.rhs.abs() + norm2(&minimizer))
            })
            .collect();
        if let [h] = active.as_slice() {
            let lambda0 = dot(&tilt, &h.coeffs) / dot(&h.coeffs, &h.coeffs);
            if let Some(cert) =
                halfspace_dual_tilt(view, m, x, &h.coeffs, h.rhs, best_val, lambda0)
            {
                tilt = cert;
            }
        }
    }
    RegionInfimum {
        value: best_val,
        minimizer,
        tilt,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::SourceModel;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn zero_one3() -> LossSpec {
        LossSpec::zero_one(3)
    }

    #[test]
    fn f_tilde_examples() {
        let free = LossSpec::new(vec![vec![0.0; 2]; 3]).unwrap();
        assert!((f_tilde(&free, &[0.0, 0.3, -0.2], 0) - 0.3).abs() < 1e-15);
        let zo = zero_one3();
        assert!((f_tilde(&zo, &[0.0, 0.5, 0.2], 1) - 0.2).abs() < 1e-15);
        let c2 = LossSpec::from_row_rates(&[0.0, 0.0, 0.2]).unwrap();
        assert!((f_tilde(&c2, &[0.0, 0.0, 0.0], 0) - 0.0).abs() < 1e-15);
    }

    #[test]
    fn f_strict_max_rule() {
        let zo = zero_one3();
        let z0 = [0.0, 0.5, 0.2];
        assert!(f(&zo, &z0, 1) < 0.0);
        assert!(f(&zo, &z0, 0) >= 0.0);
        assert!(f(&zo, &z0, 2) >= 0.0);
        // Boundary point is claimed by nobody.
        let tie = [0.0, 0.0, 0.0];
        for d in 0..3 {
            assert!(f(&zo, &tie, d).abs() < 1e-15);
        }
    }

    #[test]
    fn at_most_one_region_claims_each_point() {
        let zo = zero_one3();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let z0 = [0.0, rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let wins = (0..3).filter(|&d| f(&zo, &z0, d) < 0.0).count();
            assert!(wins <= 1);
        }
    }

    #[test]
    fn g_single_term_exact() {
        // One hypothesis forces a single-term log-sum-exp.
        let log_loss = vec![vec![-0.7, -0.1]];
        let priors = [1.0];
        let z0 = [0.0];
        let n = 50.0;
        let got = g_tilde(&log_loss, &priors, &z0, 1, n);
        assert!((got - (-0.1 / n)).abs() < 1e-15);
    }

    #[test]
    fn g_converges_to_f_with_lemma_bound() {
        let c = LossSpec::from_row_rates(&[0.0, 0.05, 0.2]).unwrap();
        let priors = [0.5, 0.3, 0.2];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut sup_gap = vec![0.0_f64; 3];
        for (idx, &n) in [1e2, 1e3, 1e4].iter().enumerate() {
            let log_loss: Vec<Vec<f64>> = c
                .rows()
                .iter()
                .map(|row| row.iter().map(|&r| -n * r).collect())
                .collect();
            for _ in 0..1000 {
                let z0 = [0.0, rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
                for d in 0..3 {
                    let gap = (g(&log_loss, &priors, &z0, d, n) - f(&c, &z0, d)).abs();
                    let bound = ((3.0_f64).ln() + priors.iter().map(|p| -p.ln()).fold(0.0, f64::max)) / n;
                    assert!(gap <= bound + 1e-9, "n={n} gap={gap} bound={bound}");
                    sup_gap[idx] = sup_gap[idx].max(gap);
                }
            }
        }
        assert!(sup_gap[0] > sup_gap[1] && sup_gap[1] > sup_gap[2]);
    }

    #[test]
    fn zero_one_regions_match_strict_max() {
        let regions = build_regions(&zero_one3(), 1_000_000).unwrap();
        // A(0) = {z1 < 0, z2 < 0}, A(1) = {z1 > 0, z1 > z2}, A(2) = {z2 > 0, z2 > z1}
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let z = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let z0 = [0.0, z[0], z[1]];
            for d in 0..3 {
                let in_region = f(&zero_one3(), &z0, d) < -1e-9;
                let in_poly = regions.per_decision[d].iter().any(|p| p.contains(&z, -1e-9));
                if in_region {
                    assert!(
                        regions.per_decision[d].iter().any(|p| p.contains(&z, 1e-9)),
                        "z={z:?} d={d} missing"
                    );
                }
                if in_poly {
                    assert!(f(&zero_one3(), &z0, d) < 1e-9, "z={z:?} d={d} spurious");
                }
            }
        }
    }

    #[test]
    fn decomposition_complete_for_assumption4_losses() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for c in [
            LossSpec::from_row_rates(&[0.0, 0.0, 0.2]).unwrap(),
            LossSpec::from_row_rates(&[0.0, 0.05, 0.0]).unwrap(),
            LossSpec::from_row_rates(&[0.1, 0.3, 0.05]).unwrap(),
        ] {
            let regions = build_regions(&c, 1_000_000).unwrap();
            for _ in 0..10_000 {
                let z = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
                let z0 = [0.0, z[0], z[1]];
                for d in 0..3 {
                    if f(&c, &z0, d) < -1e-9 {
                        assert!(regions.per_decision[d].iter().any(|p| p.contains(&z, 1e-9)));
                    }
                    if regions.per_decision[d].iter().any(|p| p.contains(&z, -1e-9)) {
                        assert!(f(&c, &z0, d) < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn single_decision_rejected() {
        let loss = LossSpec::new(vec![vec![0.0], vec![0.1], vec![0.2]]).unwrap();
        assert!(matches!(
            build_regions(&loss, 1_000_000),
            Err(RegionError::DegenerateDecisionSpace)
        ));
    }

    /// An expert that only reports whether H = 0 or H in {1, 2} never
    /// separates the merged pair: region membership is symmetric in
    /// (z1, z2).
    #[test]
    fn merged_hypotheses_stay_merged() {
        let loss = LossSpec::new(vec![
            vec![f64::INFINITY, 0.0],
            vec![0.0, f64::INFINITY],
            vec![0.0, f64::INFINITY],
        ])
        .unwrap();
        let regions = build_regions(&loss, 1_000_000).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..2000 {
            let z = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let swapped = [z[1], z[0]];
            for d in 0..2 {
                let a = regions.per_decision[d].iter().any(|p| p.contains(&z, 1e-9));
                let b = regions.per_decision[d]
                    .iter()
                    .any(|p| p.contains(&swapped, 1e-9));
                assert_eq!(a, b, "z={z:?} d={d}");
            }
        }
    }

    fn binary_view() -> ModelView {
        ModelView::from_sources(
            vec![SourceModel::Gaussian {
                means: vec![0.0, 1.0],
                variance: 1.0,
            }],
            2,
        )
    }

    #[test]
    fn binary_gaussian_region_infimum_is_chernoff() {
        let tol = Tolerances::default();
        let view = binary_view();
        let loss = LossSpec::zero_one(2);
        let regions = build_regions(&loss, 1_000_000).unwrap();
        let x = vec![1.0];
        let r = inf_rate_over_region(&view, 0, &x, &loss, 1, &regions, &tol);
        assert!(r.converged);
        assert!((r.value - 0.125).abs() < 1e-8, "{}", r.value);
        assert!(r.minimizer[0].abs() < 1e-6);
        // Correct decision has rate zero via the membership shortcut.
        let r0 = inf_rate_over_region(&view, 0, &x, &loss, 0, &regions, &tol);
        assert_eq!(r0.value, 0.0);
    }

    fn trio_view() -> ModelView {
        ModelView::from_sources(
            vec![
                SourceModel::Gaussian {
                    means: vec![-1.0, 0.9, 1.0],
                    variance: 4.0,
                },
                SourceModel::Gaussian {
                    means: vec![-1.0, -0.9, 1.0],
                    variance: 4.0,
                },
            ],
            3,
        )
    }

    /// Strongest oracle: for an Assumption-4 expert, the polyhedral
    /// minimization must agree with the scalar-transform identity
    /// inf over A(i) of Phi*_j = Lambda*_ji(c(i) - c(j)) whenever the
    /// identity's face-minimizer premise holds, and must dominate the
    /// scalar value (a halfspace relaxation) in every case.
    #[test]
    fn dual_path_identity_on_assumption4() {
        let tol = Tolerances::default();
        let view = trio_view();
        for rates in [[0.0, 0.0, 0.0], [0.0, 0.0, 0.2], [0.0, 0.05, 0.0]] {
            let loss = LossSpec::from_row_rates(&rates).unwrap();
            let regions = build_regions(&loss, 1_000_000).unwrap();
            let x = vec![0.5, 0.5];
            let mut premise_count = 0;
            for i in 0..3 {
                for j in 0..3 {
                    if i == j {
                        continue;
                    }
                    let poly_path =
                        inf_rate_over_region(&view, j, &x, &loss, i, &regions, &tol).value;
                    let (dual, _, premise) = dual_path_infimum(&view, j, i, &loss, &x, &tol);
                    assert!(
                        poly_path >= dual - 1e-6,
                        "rates={rates:?} (i={i}, j={j}): {poly_path} < {dual}"
                    );
                    if premise {
                        premise_count += 1;
                        assert!(
                            (poly_path - dual).abs() < 1e-6,
                            "rates={rates:?} (i={i}, j={j}): {poly_path} vs {dual}"
                        );
                    }
                }
            }
            assert!(premise_count >= 4, "rates={rates:?}: only {premise_count} pairs testable");
        }
    }

    /// Rank-deficient policy (single source) still satisfies the identity:
    /// the subspace reduction must find the constrained minimum on the line.
    #[test]
    fn dual_path_identity_single_source_policy() {
        let tol = Tolerances::default();
        let view = trio_view();
        let loss = LossSpec::zero_one(3);
        let regions = build_regions(&loss, 1_000_000).unwrap();
        let x = vec![1.0, 0.0];
        let mut premise_count = 0;
        for i in 0..3 {
            for j in 0..3 {
                if i == j {
                    continue;
                }
                let poly_path = inf_rate_over_region(&view, j, &x, &loss, i, &regions, &tol).value;
                let (dual, _, premise) = dual_path_infimum(&view, j, i, &loss, &x, &tol);
                assert!(poly_path >= dual - 1e-6, "(i={i}, j={j}): {poly_path} < {dual}");
                if premise {
                    premise_count += 1;
                    assert!(
                        (poly_path - dual).abs() < 1e-6,
                        "(i={i}, j={j}): {poly_path} vs {dual}"
                    );
                }
            }
        }
        assert!(premise_count >= 2, "only {premise_count} pairs testable");
    }

    #[test]
    fn infimum_nonnegative_and_zero_iff_member() {
        let tol = Tolerances::default();
        let view = trio_view();
        let loss = LossSpec::from_row_rates(&[0.0, 0.05, 0.0]).unwrap();
        let regions = build_regions(&loss, 1_000_000).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let a: f64 = rng.gen_range(0.05..0.95);
            let x = vec![a, 1.0 - a];
            for m in 0..3 {
                let mut z0 = vec![0.0];
                z0.extend(view.mean_llr(m, &x));
                for d in 0..3 {
                    let r = inf_rate_over_region(&view, m, &x, &loss, d, &regions, &tol);
                    assert!(r.value >= 0.0);
                    if f(&loss, &z0, d) < -1e-9 {
                        assert_eq!(r.value, 0.0);
                    } else if f(&loss, &z0, d) > 1e-6 {
                        assert!(r.value > 1e-10, "m={m} d={d} x={x:?}");
                    }
                }
            }
        }
    }

    /// Finite-support sources exercise the attainability fallbacks.
    #[test]
    fn finite_source_region_infimum_matches_dual_path() {
        let tol = Tolerances::default();
        let view = ModelView::from_sources(
            vec![
                SourceModel::Finite {
                    rows: vec![vec![0.7, 0.2, 0.1], vec![0.2, 0.5, 0.3], vec![0.1, 0.3, 0.6]],
                },
                SourceModel::Finite {
                    rows: vec![vec![0.5, 0.25, 0.25], vec![0.25, 0.5, 0.25], vec![0.3, 0.3, 0.4]],
                },
            ],
            3,
        );
        let loss = LossSpec::zero_one(3);
        let regions = build_regions(&loss, 1_000_000).unwrap();
        let x = vec![0.5, 0.5];
        let mut premise_count = 0;
        for i in 0..3 {
            for j in 0..3 {
                if i == j {
                    continue;
                }
                let poly_path = inf_rate_over_region(&view, j, &x, &loss, i, &regions, &tol).value;
                let (dual, _, premise) = dual_path_infimum(&view, j, i, &loss, &x, &tol);
                assert!(poly_path >= dual - 1e-6, "(i={i}, j={j}): {poly_path} < {dual}");
                if premise {
                    premise_count += 1;
                    assert!(
                        (poly_path - dual).abs() < 1e-6,
                        "(i={i}, j={j}): {poly_path} vs {dual}"
                    );
                }
            }
        }
        assert!(premise_count >= 2, "only {premise_count} pairs testable");
    }
}
