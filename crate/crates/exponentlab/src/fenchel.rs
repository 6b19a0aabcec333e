//! Fenchel-Legendre transforms of the log-MGFs in [`crate::mgf`].
//!
//! `phi_star` computes the (M-1)-dimensional rate function
//! `Phi*_m(z, x) = sup_t { <t, z> - phi_m(t, x) }` with a damped Newton
//! method. Because a policy `x` may put all weight on a single source whose
//! LLR vector spans only a strict subspace, the Hessian can be singular; we
//! therefore restrict the maximization to the range of the Hessian, which for
//! the supported source families does not depend on the tilt. Points `z`
//! whose offset from the mean LLR leaves that range have an infinite rate.
//!
//! `lambda_star` and `chernoff_info` are the scalar analogues for the
//! pairwise statistic `Lambda_ij(s, x)`.

use crate::linalg::{dot, norm2, orthonormal_basis, sub, sym_eig, Mat};
use crate::mgf::ModelView;

/// Numerical tolerances shared by the optimization routines.
#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    /// Gradient residual for Newton convergence (relative to 1 + |z|).
    pub newton_residual: f64,
    /// Iteration cap for Newton loops.
    pub newton_max_iter: usize,
    /// Norm of the tilt beyond which the supremum is treated as attained
    /// only in the limit.
    pub divergence_norm: f64,
    /// Interval width for golden-section searches.
    pub golden: f64,
    /// Relative eigenvalue cutoff for the Hessian range.
    pub range_cutoff: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            newton_residual: 1e-9,
            newton_max_iter: 200,
            divergence_norm: 1e6,
            golden: 1e-10,
            range_cutoff: 1e-10,
        }
    }
}

/// Outcome of a transform evaluation.
#[derive(Debug, Clone)]
pub struct TransformResult {
    /// The supremum value; `f64::INFINITY` when `z` is unreachable.
    pub value: f64,
    /// Maximizing tilt `t` (full-dimensional), zero when unbounded.
    pub maximizer: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Final gradient residual inside the reduced subspace.
    pub gradient_residual: f64,
    /// True when the rate is `+inf` because `z` leaves the reachable affine
    /// subspace, or the iterates diverged with unbounded objective.
    pub unbounded: bool,
}

impl TransformResult {
    fn infinite(dim: usize) -> Self {
        TransformResult {
            value: f64::INFINITY,
            maximizer: vec![0.0; dim],
            converged: true,
            iterations: 0,
            gradient_residual: 0.0,
            unbounded: true,
        }
    }
}

/// Orthonormal basis (columns) of the range of `phi_m`'s Hessian at `t = 0`.
/// The range is tilt-independent for Gaussian and finite sources, so this
/// fixes the reduced coordinate system for the whole maximization.
pub fn hessian_range(view: &ModelView, m: usize, x: &[f64], tol: &Tolerances) -> Mat {
    let d = view.dim();
    let h = view.phi_hess(m, &vec![0.0; d], x);
    let (vals, vecs) = sym_eig(&h);
    let max_val = vals.iter().cloned().fold(0.0_f64, f64::max);
    let cutoff = tol.range_cutoff * max_val.max(1e-300);
    let keep: Vec<Vec<f64>> = (0..d)
        .filter(|&j| vals[j] > cutoff)
        .map(|j| vecs.col(j))
        .collect();
    if keep.is_empty() {
        return Mat::zeros(d, 0);
    }
    orthonormal_basis(&keep, 1e-12)
}

/// `Phi*_m(z, x)` with an optional warm-start tilt.
pub fn phi_star(
    view: &ModelView,
    m: usize,
    z: &[f64],
    x: &[f64],
    warm_start: Option<&[f64]>,
    tol: &Tolerances,
) -> TransformResult {
    let d = view.dim();
    let basis = hessian_range(view, m, x, tol);
    let k = basis.cols;

    // Reachability: z - z~_m must lie in the Hessian range.
    let z_mean = view.mean_llr(m, x);
    let offset = sub(z, &z_mean);
    let proj = basis.matvec(&basis.tmatvec(&offset));
    let resid = norm2(&sub(&offset, &proj));
    let scale = 1.0 + norm2(&offset) + norm2(&z_mean);
    if resid > 1e-8 * scale {
        return TransformResult::infinite(d);
    }
    if k == 0 {
        // Deterministic LLR: the rate is 0 at the single reachable point.
        return TransformResult {
            value: 0.0,
            maximizer: vec![0.0; d],
            converged: true,
            iterations: 0,
            gradient_residual: 0.0,
            unbounded: false,
        };
    }

    // Reduced problem: maximize psi(u) = <u, B^T z> - phi_m(B u, x).
    let zeta = basis.tmatvec(z);
    let objective = |u: &[f64]| -> f64 {
        let t = basis.matvec(u);
        dot(u, &zeta) - view.phi(m, &t, x)
    };
    let mut u = match warm_start {
        Some(t0) => basis.tmatvec(t0),
        None => vec![0.0; k],
    };
    let mut value = objective(&u);
    // The supremum includes t = 0 with value 0; a warm start that scores
    // worse than that would only slow the ascent down.
    if !value.is_finite() || value < 0.0 {
        u = vec![0.0; k];
        value = 0.0;
    }
    let res_scale = 1.0 + norm2(&zeta);
    let mut residual = f64::INFINITY;
    let mut iterations = 0;

    for iter in 0..tol.newton_max_iter {
        iterations = iter + 1;
        let t = basis.matvec(&u);
        let grad_full = view.phi_grad(m, &t, x);
        let grad: Vec<f64> = (0..k)
            .map(|a| zeta[a] - dot(&basis.col(a), &grad_full))
            .collect();
        residual = norm2(&grad);
        if residual <= tol.newton_residual * res_scale {
            return TransformResult {
                value,
                maximizer: t,
                converged: true,
                iterations,
                gradient_residual: residual,
                unbounded: false,
            };
        }
        let hess = basis.congruence(&view.phi_hess(m, &t, x));
        let step = crate::linalg::cholesky_solve(&hess, &grad, 1e-13)
            .unwrap_or_else(|| grad.clone());
        // Backtracking line search on the concave objective.
        let mut alpha = 1.0;
        let slope = dot(&grad, &step);
        let mut accepted = false;
        for _ in 0..60 {
            let cand: Vec<f64> = u.iter().zip(&step).map(|(ui, si)| ui + alpha * si).collect();
            let cand_val = objective(&cand);
            if cand_val >= value + 1e-4 * alpha * slope {
                u = cand;
                value = cand_val;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
        if norm2(&u) > tol.divergence_norm {
            // Either z sits on the boundary of the reachable set (finite
            // limit, supremum not attained) or outside it (value diverges).
            let unbounded = value > tol.divergence_norm;
            return TransformResult {
                value: if unbounded { f64::INFINITY } else { value },
                maximizer: basis.matvec(&u),
                converged: false,
                iterations,
                gradient_residual: residual,
                unbounded,
            };
        }
    }
    TransformResult {
        value,
        maximizer: basis.matvec(&u),
        converged: residual <= tol.newton_residual * res_scale,
        iterations,
        gradient_residual: residual,
        unbounded: false,
    }
}

/// Scalar transform `Lambda*_ij(z, x) = sup_s { s z - Lambda_ij(s, x) }`
/// over all real `s`. Returns `(value, maximizer)`.
pub fn lambda_star(
    view: &ModelView,
    i: usize,
    j: usize,
    z: f64,
    x: &[f64],
    tol: &Tolerances,
) -> (f64, f64) {
    // Closed form when every weighted source is Gaussian:
    // Lambda = s(s-1) kappa, so s* = (z/kappa + 1)/2.
    if let Some(kappa) = view.gaussian_kappa(i, j, x) {
        if kappa > 0.0 {
            let s = 0.5 * (z / kappa + 1.0);
            let v = (z + kappa) * (z + kappa) / (4.0 * kappa);
            return (v, s);
        }
        // Identical means: Lambda = 0, so the sup is infinite unless z = 0.
        return if z == 0.0 { (0.0, 0.0) } else { (f64::INFINITY, 0.0) };
    }

    // General case: Lambda' is increasing; bracket the root of
    // Lambda'(s) = z and bisect, then polish with Newton.
    let (mut lo, mut hi) = (-1.0, 2.0);
    for _ in 0..80 {
        if view.lambda_prime(i, j, lo, x) <= z {
            break;
        }
        lo = lo * 2.0 - 1.0;
        if lo < -tol.divergence_norm {
            return (f64::INFINITY, lo);
        }
    }
    for _ in 0..80 {
        if view.lambda_prime(i, j, hi, x) >= z {
            break;
        }
        hi = hi * 2.0 + 1.0;
        if hi > tol.divergence_norm {
            return (f64::INFINITY, hi);
        }
    }
    let mut s = 0.5 * (lo + hi);
    for _ in 0..200 {
        let g = view.lambda_prime(i, j, s, x) - z;
        if g.abs() < 1e-13 * (1.0 + z.abs()) {
            break;
        }
        if g > 0.0 {
            hi = s;
        } else {
            lo = s;
        }
        let h = view.lambda_second(i, j, s, x);
        let newton = if h > 1e-300 { s - g / h } else { f64::NAN };
        s = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo < 1e-15 * (1.0 + s.abs()) {
            break;
        }
    }
    (s * z - view.lambda(i, j, s, x), s)
}

/// Maximize a concave function on `[lo, hi]` by golden-section search.
/// Returns `(argmax, max)`.
pub fn golden_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64, width_tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > width_tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    (mid, f(mid))
}

/// Chernoff information of the pair `(i, j)` under policy `x`:
/// `-min_{s in [0,1]} Lambda_ij(s, x)`. Returns `(value, minimizing s)`.
pub fn chernoff_info(view: &ModelView, i: usize, j: usize, x: &[f64], tol: &Tolerances) -> (f64, f64) {
    let (s, v) = golden_max(|s| -view.lambda(i, j, s, x), 0.0, 1.0, tol.golden);
    (v, s)
}
