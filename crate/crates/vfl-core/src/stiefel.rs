//! First-order minimization over matrices with orthonormal columns,
//! `{R : R^T R = I}`.
//!
//! The solver is plain gradient descent in the canonical metric: the
//! Euclidean gradient `G` is bent onto the tangent space as
//! `G - R G^T R`, a backtracking line search picks the step, and a thin
//! QR factorization retracts the trial point back onto the manifold.
//! Objectives are supplied as closures together with their Euclidean
//! gradients; [`max_grad_relative_error`] checks the pair against
//! central finite differences.

use nalgebra::DMatrix;

use rand_chacha::ChaCha12Rng;

use crate::par;

/// Armijo sufficient-decrease constant.
const ARMIJO_C: f64 = 1e-4;
/// Step halvings tolerated before a line search gives up.
const MAX_HALVINGS: usize = 60;

/// A differentiable objective over the manifold.
pub struct StiefelProblem<F, G>
where
    F: Fn(&DMatrix<f64>) -> f64,
    G: Fn(&DMatrix<f64>) -> DMatrix<f64>,
{
    pub rows: usize,
    pub cols: usize,
    pub objective: F,
    pub euclidean_grad: G,
    /// Stop once the Riemannian gradient norm falls below this.
    pub tolerance: f64,
    pub max_iters: usize,
}

/// Outcome of a solver run.
#[derive(Debug, Clone)]
pub struct StiefelResult {
    pub r: DMatrix<f64>,
    pub objective: f64,
    /// Accepted descent steps.
    pub iterations: usize,
    /// Riemannian gradient norm at the final point.
    pub grad_norm: f64,
    /// True when a line search exhausted its halvings.
    pub stalled: bool,
    /// Objective after every accepted step, starting with the initial value.
    pub objective_trace: Vec<f64>,
}

/// Tangent-space form of a Euclidean gradient: `G - R G^T R`.
pub fn riemannian_grad(r: &DMatrix<f64>, euclidean: &DMatrix<f64>) -> DMatrix<f64> {
    euclidean - r * euclidean.transpose() * r
}

/// Move from `r` along `-step` and restore feasibility: the orthonormal
/// factor of the thin QR of `r - step`, sign-fixed so the triangular
/// factor has a positive diagonal.
pub fn retract(r: &DMatrix<f64>, step: &DMatrix<f64>) -> DMatrix<f64> {
    qr_orthonormal_factor(r - step)
}

fn qr_orthonormal_factor(m: DMatrix<f64>) -> DMatrix<f64> {
    let cols = m.ncols();
    let qr = m.qr();
    let mut q = qr.q();
    let rfac = qr.r();
    for j in 0..cols {
        if rfac[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// A random feasible point: the orthonormal factor of a Gaussian matrix.
pub fn random_stiefel(rows: usize, cols: usize, rng: &mut ChaCha12Rng) -> DMatrix<f64> {
    loop {
        let g = DMatrix::from_fn(rows, cols, |_, _| {
            rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, rng)
        });
        if crate::linalg::numerical_rank(&g) == cols {
            return qr_orthonormal_factor(g);
        }
    }
}

/// `I`, `-I`, jittered copies of both, and `n_random` seeded random
/// feasible starts.
///
/// `I` and `-I` are stationary for every objective whose Euclidean
/// gradient is symmetric there (the tangent projection kills symmetric
/// directions), so the jittered copies keep those corners reachable by
/// descent.
pub fn default_starts(rows: usize, cols: usize, n_random: usize, seed: u64) -> Vec<DMatrix<f64>> {
    let mut rng = rand::SeedableRng::seed_from_u64(seed);
    let eye = DMatrix::<f64>::identity(rows, cols);
    let mut starts = vec![eye.clone(), -eye.clone()];
    for base in [eye.clone(), -eye] {
        let raw = DMatrix::from_fn(rows, cols, |_, _| {
            rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, &mut rng)
        });
        let tangent = riemannian_grad(&base, &raw);
        let norm = tangent.norm().max(1e-12);
        starts.push(retract(&base, &(tangent * (0.1 / norm))));
    }
    starts.extend((0..n_random).map(|_| random_stiefel(rows, cols, &mut rng)));
    starts
}

impl<F, G> StiefelProblem<F, G>
where
    F: Fn(&DMatrix<f64>) -> f64,
    G: Fn(&DMatrix<f64>) -> DMatrix<f64>,
{
    /// Gradient descent with backtracking from the feasible start `r0`.
    ///
    /// The objective never increases across accepted steps. When a line
    /// search fails after its halvings the current point is returned
    /// with `stalled` set.
    pub fn minimize(&self, r0: &DMatrix<f64>) -> StiefelResult {
        assert_eq!((r0.nrows(), r0.ncols()), (self.rows, self.cols));
        let mut r = r0.clone();
        let mut value = (self.objective)(&r);
        let mut trace = vec![value];
        let mut grad_norm = f64::INFINITY;
        let mut iterations = 0;
        let mut stalled = false;

        for _ in 0..self.max_iters {
            let direction = riemannian_grad(&r, &(self.euclidean_grad)(&r));
            grad_norm = direction.norm();
            if grad_norm <= self.tolerance {
                break;
            }
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..MAX_HALVINGS {
                let candidate = retract(&r, &(&direction * t));
                let candidate_value = (self.objective)(&candidate);
                if candidate_value <= value - ARMIJO_C * t * grad_norm * grad_norm {
                    r = candidate;
                    value = candidate_value;
                    trace.push(value);
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                stalled = true;
                break;
            }
            iterations += 1;
        }

        StiefelResult {
            r,
            objective: value,
            iterations,
            grad_norm,
            stalled,
            objective_trace: trace,
        }
    }
}

impl<F, G> StiefelProblem<F, G>
where
    F: Fn(&DMatrix<f64>) -> f64 + Sync,
    G: Fn(&DMatrix<f64>) -> DMatrix<f64> + Sync,
{
    /// Run [`Self::minimize`] from every start and keep the best final
    /// objective. Starts run concurrently; the tie-break is the first
    /// start in the list, so the result is deterministic.
    pub fn minimize_multistart(&self, starts: &[DMatrix<f64>]) -> StiefelResult {
        assert!(!starts.is_empty());
        let results = par::map(starts, |r0| self.minimize(r0));
        results
            .into_iter()
            .reduce(|best, next| if next.objective < best.objective { next } else { best })
            .expect("at least one start")
    }
}

/// Closed-form minimizer of `Tr(R K0 A⁺A)` over the manifold: with
/// `U S V^T` the SVD of `A⁺A K0`, the minimum is `-sum(S)` at
/// `R = -U V^T`.
pub fn svd_closed_form_ls(a: &DMatrix<f64>, k0: &DMatrix<f64>) -> DMatrix<f64> {
    let proj = crate::linalg::row_space_projector(a);
    let svd = (proj * k0).svd(true, true);
    let u = svd.u.expect("svd with u");
    let v_t = svd.v_t.expect("svd with v_t");
    -u * v_t
}

/// Largest relative disagreement between the supplied Euclidean gradient
/// and central finite differences at `r`.
pub fn max_grad_relative_error<F, G>(problem: &StiefelProblem<F, G>, r: &DMatrix<f64>) -> f64
where
    F: Fn(&DMatrix<f64>) -> f64,
    G: Fn(&DMatrix<f64>) -> DMatrix<f64>,
{
    let h = 1e-6;
    let analytic = (problem.euclidean_grad)(r);
    let mut fd = DMatrix::<f64>::zeros(r.nrows(), r.ncols());
    for i in 0..r.nrows() {
        for j in 0..r.ncols() {
            let mut plus = r.clone();
            plus[(i, j)] += h;
            let mut minus = r.clone();
            minus[(i, j)] -= h;
            fd[(i, j)] = ((problem.objective)(&plus) - (problem.objective)(&minus)) / (2.0 * h);
        }
    }
    (&fd - &analytic).norm() / analytic.norm().max(1e-12)
}

/// Feasibility residual `||R^T R - I||_F`.
pub fn feasibility_error(r: &DMatrix<f64>) -> f64 {
    let cols = r.ncols();
    (r.transpose() * r - DMatrix::<f64>::identity(cols, cols)).norm()
}
