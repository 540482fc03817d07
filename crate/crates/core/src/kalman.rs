//! LTI process models and steady-state Kalman filter covariances.
//!
//! Each monitored process is a discrete LTI system `x' = A x + w`,
//! `y = C x + v` whose sensor runs a local Kalman filter. The filter's error
//! covariance converges to the fixed point `p_bar` of the Riccati map
//! `g = g_tilde ∘ h`, where
//!
//! ```text
//! h(X) = A X Aᵀ + W
//! g_tilde(X) = X − X Cᵀ [C X Cᵀ + V]⁻¹ C X
//! ```
//!
//! The remote estimator's covariance after `t` consecutive losses is
//! `h^t(p_bar)`; the reward function only ever needs the traces of these
//! powers, which are precomputed into [`SteadyState::trace_table`].

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Eigenvalue tolerance for the PSD/PD checks on hand-entered covariances.
pub const TOL_PSD: f64 = 1e-9;
/// Default fixed-point tolerance for the Riccati solve.
pub const DEFAULT_RICCATI_TOL: f64 = 1e-10;
/// Default iteration cap for the Riccati solve.
pub const DEFAULT_RICCATI_MAX_ITER: usize = 1_000_000;

/// One process/sensor pair: state map `A`, observation map `C`, process noise
/// covariance `W` (PSD) and measurement noise covariance `V` (PD).
#[derive(Debug, Clone)]
pub struct LtiSystem {
    a: DMatrix<f64>,
    c: DMatrix<f64>,
    w: DMatrix<f64>,
    v: DMatrix<f64>,
}

impl LtiSystem {
    /// Validates dimensions, symmetry and definiteness, and the spectral-norm
    /// requirement `‖A‖ ≥ 1`. Pass `allow_stable = true` to waive the latter
    /// for experimentation with stable processes.
    pub fn new(
        a: DMatrix<f64>,
        c: DMatrix<f64>,
        w: DMatrix<f64>,
        v: DMatrix<f64>,
        allow_stable: bool,
    ) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::Validation("A must be square and nonempty".into()));
        }
        let m = c.nrows();
        if m == 0 || c.ncols() != n {
            return Err(Error::Validation(format!(
                "C must be m x {n} with m > 0, got {} x {}",
                c.nrows(),
                c.ncols()
            )));
        }
        if w.nrows() != n || w.ncols() != n {
            return Err(Error::Validation(format!("W must be {n} x {n}")));
        }
        if v.nrows() != m || v.ncols() != m {
            return Err(Error::Validation(format!("V must be {m} x {m}")));
        }
        for (name, mat) in [("A", &a), ("C", &c), ("W", &w), ("V", &v)] {
            if mat.iter().any(|x| !x.is_finite()) {
                return Err(Error::Validation(format!("{name} contains non-finite entries")));
            }
        }
        check_symmetric("W", &w)?;
        check_symmetric("V", &v)?;
        if min_symmetric_eigenvalue(&w) < -TOL_PSD {
            return Err(Error::Validation(
                "W must be positive semidefinite".into(),
            ));
        }
        if min_symmetric_eigenvalue(&v) <= TOL_PSD {
            return Err(Error::Validation("V must be positive definite".into()));
        }
        let norm_a = spectral_norm(&a, 1e-12);
        if norm_a < 1.0 && !allow_stable {
            return Err(Error::Validation(format!(
                "spectral norm of A is {norm_a:.6} < 1; pass --allow-stable to override"
            )));
        }
        Ok(Self { a, c, w, v })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    /// `h(X) = A X Aᵀ + W`, symmetrized.
    pub fn riccati_h(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        symmetrize(&(&self.a * x * self.a.transpose() + &self.w))
    }

    /// `g_tilde(X) = X − X Cᵀ [C X Cᵀ + V]⁻¹ C X`, symmetrized.
    ///
    /// Fails if the innovation covariance `C X Cᵀ + V` is not invertible,
    /// which signals a non-PD `V` or a numerically singular input.
    pub fn riccati_g_tilde(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let s = &self.c * x * self.c.transpose() + &self.v;
        let s_inv = s.clone().try_inverse().ok_or_else(|| {
            Error::Validation("innovation covariance C X Cᵀ + V is singular".into())
        })?;
        let xct = x * self.c.transpose();
        Ok(symmetrize(&(x - &xct * s_inv * xct.transpose())))
    }

    /// Evaluates both Riccati maps at `x`: returns `(h(x), g(x))` with
    /// `g = g_tilde ∘ h`.
    pub fn riccati_maps(&self, x: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let hx = self.riccati_h(x);
        let gx = self.riccati_g_tilde(&hx)?;
        Ok((hx, gx))
    }
}

/// Steady-state filter covariance and the trace table `Tr(h^t(p_bar))` for
/// `t = 0..=horizon`.
#[derive(Debug, Clone)]
pub struct SteadyState {
    p_bar: DMatrix<f64>,
    trace_table: Vec<f64>,
}

impl SteadyState {
    pub fn p_bar(&self) -> &DMatrix<f64> {
        &self.p_bar
    }

    /// `trace_table()[t] = Tr(h^t(p_bar))`.
    pub fn trace_table(&self) -> &[f64] {
        &self.trace_table
    }

    pub fn trace(&self, t: usize) -> f64 {
        self.trace_table[t]
    }
}

/// Solves `g(X) = X` by fixed-point iteration from `X₀ = W` and fills the
/// trace table up to `horizon` (callers pass `L + 1` so that every
/// `Tr(h^{τ+1}(p_bar))` with `τ ≤ L` is covered).
pub fn steady_state(
    sys: &LtiSystem,
    tol_riccati: f64,
    max_iter: usize,
    horizon: usize,
) -> Result<SteadyState> {
    if tol_riccati <= 0.0 {
        return Err(Error::Validation("tol_riccati must be positive".into()));
    }
    let mut x = sys.w.clone();
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let next = sys.riccati_g_tilde(&sys.riccati_h(&x))?;
        residual = max_abs_diff(&next, &x);
        x = next;
        if residual < tol_riccati {
            let trace_table = build_trace_table(sys, &x, horizon);
            if spectral_norm(&sys.a, 1e-12) >= 1.0 {
                for t in 1..trace_table.len() {
                    if trace_table[t] + 1e-9 < trace_table[t - 1] {
                        return Err(Error::Validation(format!(
                            "trace table decreased at step {t} despite ‖A‖ ≥ 1"
                        )));
                    }
                }
            }
            return Ok(SteadyState {
                p_bar: x,
                trace_table,
            });
        }
    }
    Err(Error::FixedPointDivergence { max_iter, residual })
}

fn build_trace_table(sys: &LtiSystem, p_bar: &DMatrix<f64>, horizon: usize) -> Vec<f64> {
    let mut table = Vec::with_capacity(horizon + 1);
    let mut x = p_bar.clone();
    table.push(x.trace());
    for _ in 0..horizon {
        x = sys.riccati_h(&x);
        table.push(x.trace());
    }
    table
}

/// Largest singular value of `a` by power iteration on `AᵀA`.
pub fn spectral_norm(a: &DMatrix<f64>, tol: f64) -> f64 {
    let n = a.ncols();
    let ata = a.transpose() * a;
    let mut v = nalgebra::DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut eig = 0.0_f64;
    for _ in 0..10_000 {
        let w = &ata * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = w / norm;
        let new_eig = (&ata * &next).dot(&next);
        let done = (new_eig - eig).abs() <= tol * new_eig.abs().max(1.0);
        v = next;
        eig = new_eig;
        if done {
            break;
        }
    }
    eig.max(0.0).sqrt()
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn check_symmetric(name: &str, m: &DMatrix<f64>) -> Result<()> {
    let asym = max_abs_diff(m, &m.transpose());
    if asym > 1e-9 {
        return Err(Error::Validation(format!(
            "{name} is not symmetric (max asymmetry {asym:.3e})"
        )));
    }
    Ok(())
}

fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = symmetrize(m);
    sym.symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub(crate) fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
