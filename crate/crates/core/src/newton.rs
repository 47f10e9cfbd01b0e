//! Newton iteration with a truncated-SVD pseudoinverse step, for square or
//! rank-deficient systems whose roots form manifolds (tori of amplitudes).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const DEFAULT_RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonSettings {
    pub tol: f64,
    pub max_iter: usize,
    /// Relative singular-value cutoff for the pseudoinverse.
    pub rank_tol: f64,
    /// Central-difference step for the Jacobian.
    pub fd_step: f64,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 60,
            rank_tol: DEFAULT_RANK_TOL,
            fd_step: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOutcome {
    pub x: DVector<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// Moore–Penrose pseudoinverse with singular values below `rank_tol·σ_max`
/// treated as zero.
pub fn pseudo_inverse(m: &DMatrix<f64>, rank_tol: f64) -> DMatrix<f64> {
    if m.is_empty() {
        return DMatrix::zeros(m.ncols(), m.nrows());
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let cutoff = rank_tol * smax;
    let u = svd.u.as_ref().expect("requested U");
    let vt = svd.v_t.as_ref().expect("requested V^T");
    let mut out = DMatrix::zeros(m.ncols(), m.nrows());
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            out += (vt.row(i).transpose() / s) * u.column(i).transpose();
        }
    }
    out
}

/// Number of singular values above `rank_tol·σ_max`.
pub fn numerical_rank(m: &DMatrix<f64>, rank_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.singular_values();
    let cutoff = rank_tol * sv.max();
    sv.iter().filter(|&&s| s > cutoff && s > 0.0).count()
}

/// Central-difference Jacobian of `f` at `x`.
pub fn fd_jacobian<F>(f: &F, x: &DVector<f64>, h: f64) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = x.len();
    let mut cols = Vec::with_capacity(n);
    for i in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        cols.push((f(&xp) - f(&xm)) / (2.0 * h));
    }
    let m = cols.first().map_or(0, |c| c.len());
    DMatrix::from_fn(m, n, |r, c| cols[c][r])
}

/// Iterates `x ← x − J⁺F(x)` until `‖F(x)‖ ≤ tol`. A step that increases the
/// residual is halved (up to 20 times) before being accepted.
pub fn newton_roots<F>(f: F, x0: &DVector<f64>, settings: &NewtonSettings) -> Result<NewtonOutcome>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let mut x = x0.clone();
    let mut fx = f(&x);
    let mut residual = fx.norm();
    for it in 0..settings.max_iter {
        if residual <= settings.tol {
            return Ok(NewtonOutcome { x, residual, iterations: it });
        }
        let jac = fd_jacobian(&f, &x, settings.fd_step);
        let step = pseudo_inverse(&jac, settings.rank_tol) * &fx;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..20 {
            let trial = &x - &step * lambda;
            let ft = f(&trial);
            let rt = ft.norm();
            if rt.is_finite() && rt < residual {
                x = trial;
                fx = ft;
                residual = rt;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if residual <= settings.tol {
        return Ok(NewtonOutcome {
            x,
            residual,
            iterations: settings.max_iter,
        });
    }
    Err(Error::NewtonNonConvergence {
        iterations: settings.max_iter,
        residual,
    })
}
