//! Sparse positive-definite covariance estimation by ADMM.
//!
//! Solves
//!
//! ```text
//! minimize   ½‖Σ − B‖²_F + λ Σ_{k≠l} |Σ_kl|
//! subject to Σ ⪰ δ I
//! ```
//!
//! by splitting `Σ = Θ`: the Σ-step is an eigenvalue-floor projection, the
//! Θ-step soft-thresholds the off-diagonal entries, and the multiplier Λ is
//! kept unscaled. The penalty ρ adapts by residual balancing (μ = 10, τ = 2).
//!
//! Before iterating, the soft-thresholded input is checked: when it already
//! satisfies `S_λ(B) ≻ δ I` it is the exact solution and is returned as is.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{Eigen, SymMatrix};

/// Off-diagonal entries of Θ with magnitude at or below this count as zero.
pub const ZERO_TOL: f64 = 1e-12;

const RHO_BALANCE: f64 = 10.0;
const RHO_FACTOR: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmmSettings {
    pub lambda: f64,
    /// Eigenvalue floor. `None` picks [`default_delta`] from the input.
    pub delta: Option<f64>,
    pub rho0: f64,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub max_iters: usize,
    /// Return `S_λ(B)` directly when it already clears the floor. Turning
    /// this off forces ADMM iterations (used to cross-check the shortcut).
    #[serde(default = "enabled")]
    pub fast_path: bool,
}

fn enabled() -> bool {
    true
}

impl Default for AdmmSettings {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            delta: None,
            rho0: 0.1,
            eps_abs: 1e-8,
            eps_rel: 1e-8,
            max_iters: 10_000,
            fast_path: true,
        }
    }
}

impl AdmmSettings {
    pub fn with_lambda(lambda: f64) -> Self {
        Self {
            lambda,
            ..Self::default()
        }
    }

    pub fn lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn delta(mut self, delta: f64) -> Self {
        self.delta = Some(delta);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(what.to_string()));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be finite and >= 0");
        }
        if let Some(d) = self.delta {
            if !(d > 0.0 && d.is_finite()) {
                return bad("delta must be finite and > 0");
            }
        }
        if !(self.rho0 > 0.0 && self.rho0.is_finite()) {
            return bad("rho0 must be > 0");
        }
        if !(self.eps_abs > 0.0) || !(self.eps_rel > 0.0) {
            return bad("eps_abs and eps_rel must be > 0");
        }
        if self.max_iters == 0 {
            return bad("max_iters must be >= 1");
        }
        Ok(())
    }

    pub fn resolve_delta(&self, b: &SymMatrix) -> f64 {
        self.delta.unwrap_or_else(|| default_delta(b))
    }
}

/// Scale-relative floor `1e-4 · max(max_k B_kk, 1)`.
pub fn default_delta(b: &SymMatrix) -> f64 {
    1e-4 * b.max_diagonal().max(1.0)
}

#[derive(Debug, Clone)]
pub struct AdmmResult {
    /// The Σ iterate: satisfies the eigenvalue floor.
    pub solution: SymMatrix,
    /// The Θ iterate: carries exact zeros and defines the support.
    pub sparse: SymMatrix,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub used_fast_path: bool,
    pub min_eigenvalue: f64,
    pub lambda: f64,
    pub delta: f64,
    pub final_rho: f64,
    /// Final multiplier Λ (zero on the fast path).
    pub multiplier: SymMatrix,
}

/// Iterates carried from one solve to the next along a λ path.
#[derive(Debug, Clone)]
pub struct WarmStart {
    pub theta: SymMatrix,
    pub multiplier: SymMatrix,
    pub rho: f64,
}

impl AdmmResult {
    /// Starting point for a nearby λ; `None` after the fast path, where a
    /// cold start is already exact-or-better.
    pub fn warm_start(&self) -> Option<WarmStart> {
        (!self.used_fast_path).then(|| WarmStart {
            theta: self.sparse.clone(),
            multiplier: self.multiplier.clone(),
            rho: self.final_rho,
        })
    }

    /// Off-diagonal upper-triangle pairs that are nonzero in Θ.
    pub fn support(&self) -> Vec<(usize, usize)> {
        let p = self.sparse.dim();
        let mut out = Vec::new();
        for i in 0..p {
            for j in (i + 1)..p {
                if self.sparse.get(i, j).abs() > ZERO_TOL {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn nonzero_offdiag(&self) -> usize {
        self.support().len()
    }
}

/// `sign(a)·max(|a| − t, 0)` on every off-diagonal entry; the diagonal is
/// left untouched.
pub fn soft_threshold_offdiag(a: &SymMatrix, t: f64) -> SymMatrix {
    assert!(t >= 0.0, "threshold must be nonnegative");
    let p = a.dim();
    let mut m = a.as_matrix().clone();
    if t == 0.0 {
        return a.clone();
    }
    for j in 0..p {
        for i in 0..p {
            if i != j {
                let v = m[(i, j)];
                m[(i, j)] = v.signum() * (v.abs() - t).max(0.0);
            }
        }
    }
    SymMatrix::symmetrize(m)
}

/// Nearest matrix (in Frobenius norm) with all eigenvalues ≥ `delta`.
pub fn psd_floor_projection(a: &SymMatrix, delta: f64) -> Result<SymMatrix> {
    Ok(project_with_eigen(a, delta)?.0)
}

fn project_with_eigen(a: &SymMatrix, delta: f64) -> Result<(SymMatrix, f64)> {
    let eig = Eigen::new(a)?;
    let floor_min = eig.min().max(delta);
    if eig.min() >= delta {
        return Ok((a.clone(), floor_min));
    }
    Ok((eig.reconstruct(|v| v.max(delta)), floor_min))
}

/// `½‖Σ − B‖²_F + λ|Σ|₁` with the ℓ₁ norm over off-diagonal entries.
pub fn objective(b: &SymMatrix, sigma: &SymMatrix, lambda: f64) -> f64 {
    0.5 * (sigma - b).frobenius_norm().powi(2) + lambda * sigma.offdiag_l1()
}

pub fn solve(b: &SymMatrix, settings: &AdmmSettings) -> Result<AdmmResult> {
    solve_warm(b, settings, None)
}

/// [`solve_warm`] for callers that only score the fit (cross-validation,
/// simulation). A run that reaches `max_iters` yields its last iterate,
/// which still satisfies Σ ⪰ δI; the flag is `false` in that case.
pub fn solve_scored(b: &SymMatrix, settings: &AdmmSettings, warm: Option<&WarmStart>) -> Result<(AdmmResult, bool)> {
    match solve_warm(b, settings, warm) {
        Ok(fit) => Ok((fit, true)),
        Err(Error::MaxItersExceeded { last, .. }) => Ok((*last, false)),
        Err(e) => Err(e),
    }
}

/// [`solve`] started from the iterates of a previous solve (same `B`
/// dimension); used when sweeping λ. The optimum does not depend on the
/// starting point, only the iteration count does.
pub fn solve_warm(b: &SymMatrix, settings: &AdmmSettings, warm: Option<&WarmStart>) -> Result<AdmmResult> {
    settings.validate()?;
    let p = b.dim();
    let lambda = settings.lambda;
    let delta = settings.resolve_delta(b);

    let thresholded = soft_threshold_offdiag(b, lambda);
    if settings.fast_path && thresholded.is_pd_shifted(delta) {
        let min_eigenvalue = thresholded.min_eigenvalue()?;
        return Ok(AdmmResult {
            sparse: thresholded.clone(),
            solution: thresholded,
            iterations: 0,
            primal_residual: 0.0,
            dual_residual: 0.0,
            used_fast_path: true,
            min_eigenvalue,
            lambda,
            delta,
            final_rho: settings.rho0,
            multiplier: SymMatrix::zeros(p),
        });
    }

    let bm = b.as_matrix();
    let (mut theta, mut multiplier, mut rho) = match warm {
        Some(w) if w.theta.dim() == p && w.multiplier.dim() == p && w.rho > 0.0 => (
            w.theta.as_matrix().clone(),
            w.multiplier.as_matrix().clone(),
            w.rho,
        ),
        _ => (thresholded.into_inner(), DMatrix::<f64>::zeros(p, p), settings.rho0),
    };
    let mut sigma = theta.clone();
    let mut min_eigenvalue = f64::NAN;
    let mut primal = f64::INFINITY;
    let mut dual = f64::INFINITY;

    for iter in 1..=settings.max_iters {
        // Σ-step: argmin over Σ ⪰ δI of ½‖Σ−B‖² + ⟨Λ,Σ−Θ⟩ + ρ/2‖Σ−Θ‖².
        let target = (bm + &theta * rho - &multiplier) / (1.0 + rho);
        let (projected, lam_min) = project_with_eigen(&SymMatrix::symmetrize(target), delta)?;
        sigma = projected.into_inner();
        min_eigenvalue = lam_min;

        // Θ-step: off-diagonal soft-thresholding at λ/ρ.
        let theta_prev = std::mem::replace(
            &mut theta,
            soft_threshold_offdiag(
                &SymMatrix::symmetrize(&sigma + &multiplier / rho),
                lambda / rho,
            )
            .into_inner(),
        );

        let gap = &sigma - &theta;
        multiplier += &gap * rho;

        primal = gap.norm();
        dual = rho * (&theta - &theta_prev).norm();
        let eps_pri = p as f64 * settings.eps_abs + settings.eps_rel * sigma.norm().max(theta.norm());
        let eps_dual = p as f64 * settings.eps_abs + settings.eps_rel * multiplier.norm();

        if primal <= eps_pri && dual <= eps_dual {
            return Ok(AdmmResult {
                solution: SymMatrix::symmetrize(sigma),
                sparse: SymMatrix::symmetrize(theta),
                iterations: iter,
                primal_residual: primal,
                dual_residual: dual,
                used_fast_path: false,
                min_eigenvalue,
                lambda,
                delta,
                final_rho: rho,
                multiplier: SymMatrix::symmetrize(multiplier),
            });
        }

        // Residual balancing; Λ is unscaled so it needs no rescaling.
        if primal > RHO_BALANCE * dual {
            rho *= RHO_FACTOR;
        } else if dual > RHO_BALANCE * primal {
            rho /= RHO_FACTOR;
        }
    }

    let last = AdmmResult {
        solution: SymMatrix::symmetrize(sigma),
        sparse: SymMatrix::symmetrize(theta),
        iterations: settings.max_iters,
        primal_residual: primal,
        dual_residual: dual,
        used_fast_path: false,
        min_eigenvalue,
        lambda,
        delta,
        final_rho: rho,
        multiplier: SymMatrix::symmetrize(multiplier),
    };
    Err(Error::MaxItersExceeded {
        iterations: settings.max_iters,
        primal_residual: primal,
        dual_residual: dual,
        last: Box::new(last),
    })
}

/// Distance from first-order optimality for the constrained problem.
///
/// Finds the subgradient `G ∈ λ∂|Σ|₁` and multiplier `M ⪰ 0` supported on the
/// eigenspace where `Σ` sits at the floor δ that make `Σ − B + G − M`
/// smallest in Frobenius norm, and returns that norm. Zero certifies
/// optimality.
///
/// Off-diagonal entries within `1e-7·max(1, max|B|)` of zero are treated as
/// zeros, and eigenvalues within `1e-7·max(1, ‖Σ‖₂)` of δ as active, so that
/// ADMM's Σ iterate (which carries residual noise of roughly that size) can
/// be certified. When the floor is active the minimization is done by block
/// coordinate descent; the value returned is then an upper bound on the
/// exact minimum.
pub fn kkt_residual(b: &SymMatrix, solution: &SymMatrix, lambda: f64, delta: f64) -> f64 {
    let p = b.dim();
    assert_eq!(solution.dim(), p, "dimension mismatch");
    let zero_tol = 1e-7 * b.as_matrix().amax().max(1.0);
    let base = solution.as_matrix() - b.as_matrix();

    // Sign-fixed entries contribute a constant, zero entries get the box.
    let free = |i: usize, j: usize| i != j && solution.get(i, j).abs() <= zero_tol;
    let subgradient = |target: &DMatrix<f64>| {
        DMatrix::from_fn(p, p, |i, j| {
            if i == j {
                0.0
            } else if free(i, j) {
                target[(i, j)].clamp(-lambda, lambda)
            } else {
                lambda * solution.get(i, j).signum()
            }
        })
    };

    let eig = match Eigen::new(solution) {
        Ok(e) => e,
        Err(_) => return f64::INFINITY,
    };
    let act_tol = 1e-7 * eig.max().abs().max(1.0);
    let active: Vec<usize> = (0..p).filter(|&k| eig.values[k] <= delta + act_tol).collect();

    let mut g = subgradient(&(-&base));
    if active.is_empty() {
        return (&base + &g).norm();
    }

    let basis = eig.vectors.select_columns(&active);
    let mut best = f64::INFINITY;
    for _ in 0..20_000 {
        let c = &base + &g;
        let w = basis.tr_mul(&c) * &basis;
        let w = SymMatrix::symmetrize(w);
        let w_psd = match Eigen::new(&w) {
            Ok(e) => e.reconstruct(|v| v.max(0.0)),
            Err(_) => return f64::INFINITY,
        };
        let m = &basis * w_psd.as_matrix() * basis.transpose();
        g = subgradient(&(&m - &base));
        let r = (&base + &g - &m).norm();
        // Stop once a sweep no longer improves the residual.
        let stalled = r >= best * (1.0 - 1e-12);
        best = best.min(r);
        if stalled || best == 0.0 {
            break;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soft_threshold_entries() {
        let a = SymMatrix::from_rows(&[
            vec![2.0, 0.8, -0.3],
            vec![0.8, 1.0, 0.0],
            vec![-0.3, 0.0, 1.0],
        ])
        .unwrap();
        let s = soft_threshold_offdiag(&a, 0.5);
        assert!((s.get(0, 1) - 0.3).abs() < 1e-15);
        assert_eq!(s.get(0, 2), 0.0);
        assert_eq!(s.get(0, 0), 2.0);
        assert_eq!(soft_threshold_offdiag(&a, 0.0), a);
        assert_eq!(soft_threshold_offdiag(&a, 10.0).get(0, 0), 2.0);
    }

    #[test]
    fn projection_clamps_diagonal() {
        let a = SymMatrix::from_diagonal(&[2.0, -1.0]);
        let pr = psd_floor_projection(&a, 0.1).unwrap();
        assert!((pr.get(0, 0) - 2.0).abs() < 1e-14);
        assert!((pr.get(1, 1) - 0.1).abs() < 1e-14);
        assert!(pr.get(0, 1).abs() < 1e-14);
    }

    #[test]
    fn projection_fixed_point() {
        let a = SymMatrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap();
        assert_eq!(psd_floor_projection(&a, 0.01).unwrap(), a);
    }

    #[test]
    fn identity_takes_fast_path() {
        let r = solve(&SymMatrix::identity(4), &AdmmSettings::with_lambda(0.5).delta(0.01)).unwrap();
        assert!(r.used_fast_path);
        assert_eq!(r.solution, SymMatrix::identity(4));
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn settings_validation() {
        assert!(AdmmSettings::with_lambda(-1.0).validate().is_err());
        assert!(AdmmSettings::default().delta(0.0).validate().is_err());
        let mut s = AdmmSettings::default();
        s.max_iters = 0;
        assert!(s.validate().is_err());
        assert!(AdmmSettings::default().validate().is_ok());
    }

    #[test]
    fn default_delta_scales_with_diagonal() {
        assert_eq!(default_delta(&SymMatrix::from_diagonal(&[0.5, 0.2])), 1e-4);
        assert_eq!(default_delta(&SymMatrix::from_diagonal(&[50.0, 2.0])), 5e-3);
    }

    #[test]
    fn max_iters_keeps_last_iterate() {
        let b = SymMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        let mut s = AdmmSettings::with_lambda(0.1).delta(0.01);
        s.max_iters = 1;
        match solve(&b, &s) {
            Err(Error::MaxItersExceeded { iterations, last, .. }) => {
                assert_eq!(iterations, 1);
                assert_eq!(last.solution.dim(), 2);
            }
            other => panic!("expected MaxItersExceeded, got {other:?}"),
        }
    }

    #[test]
    fn scored_solve_returns_capped_iterate() {
        let b = SymMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        let mut s = AdmmSettings::with_lambda(0.1).delta(0.01);
        assert!(solve_scored(&b, &s, None).unwrap().1);
        s.max_iters = 1;
        let (fit, converged) = solve_scored(&b, &s, None).unwrap();
        assert!(!converged);
        assert_eq!(fit.iterations, 1);
        assert!(fit.min_eigenvalue >= 0.01 - 1e-12);
    }

    #[test]
    fn kkt_zero_at_fast_path() {
        let b = SymMatrix::from_rows(&[vec![2.0, 0.3], vec![0.3, 1.0]]).unwrap();
        let r = solve(&b, &AdmmSettings::with_lambda(0.1).delta(0.01)).unwrap();
        assert!(r.used_fast_path);
        assert!(kkt_residual(&b, &r.solution, 0.1, 0.01) <= 1e-12);
    }
}
