//! Small dense helpers shared by the analysis modules. Row vectors are stored
//! as `DVector` and multiplied from the left with `tr_mul`.

use nalgebra::{DMatrix, DVector, LU, Dyn};

use crate::error::{Error, Result};

/// Numerical tolerances. `eq` is used for single-solve residuals, `rec` for
/// residuals of chained recursions; both are relative to matrix norms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub eq: f64,
    pub rec: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { eq: 1e-10, rec: 1e-8 }
    }
}

impl Tolerances {
    /// Defaults overridden by `PERTURBMC_TOL_EQ` / `PERTURBMC_TOL_REC`.
    pub fn from_env() -> Result<Self> {
        let mut t = Tolerances::default();
        for (var, slot) in [("PERTURBMC_TOL_EQ", &mut t.eq), ("PERTURBMC_TOL_REC", &mut t.rec)] {
            if let Ok(s) = std::env::var(var) {
                let v: f64 = s
                    .trim()
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("{var}={s} is not a number")))?;
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::InvalidArgument(format!("{var} must be positive")));
                }
                *slot = v;
            }
        }
        Ok(t)
    }
}

/// Entries above this are edges of the transition digraphs.
pub const EDGE_TOL: f64 = 1e-12;
/// Entries in (EDGE_TOL, WARN_TOL) trigger a cancellation warning.
pub const WARN_TOL: f64 = 1e-8;

pub fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn vec_inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// ‖M‖∞·‖M⁻¹‖∞, or infinity when M cannot be inverted.
pub fn cond_estimate(m: &DMatrix<f64>) -> f64 {
    match m.clone().try_inverse() {
        Some(inv) => inf_norm(m) * inf_norm(&inv),
        None => f64::INFINITY,
    }
}

/// Smallest |U_ii| of an LU factorization.
pub fn min_pivot(lu: &LU<f64, Dyn, Dyn>) -> f64 {
    let u = lu.u();
    (0..u.nrows().min(u.ncols()))
        .map(|i| u[(i, i)].abs())
        .fold(f64::INFINITY, f64::min)
}

/// Solve `m x = b` by partial-pivoting LU.
pub fn lu_solve(m: &DMatrix<f64>, b: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    let lu = m.clone().lu();
    let singular = || Error::Singular { context: context.to_string(), cond: cond_estimate(m) };
    if min_pivot(&lu) == 0.0 {
        return Err(singular());
    }
    let x = lu.solve(b).ok_or_else(singular)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(singular());
    }
    Ok(x)
}

/// Dimension of the null space of `m`, counting singular values below
/// `rel_tol · σ_max`.
pub fn nullity(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return m.ncols();
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let rank = if smax == 0.0 { 0 } else { sv.iter().filter(|&&s| s > rel_tol * smax).count() };
    m.ncols() - rank
}

/// The probability row vector x with x·m = 0 for a Q-matrix-like `m` whose
/// left null space is one-dimensional.
pub fn left_null_probability(m: &DMatrix<f64>, what: &'static str) -> Result<DVector<f64>> {
    let n = m.nrows();
    if n == 0 {
        return Err(Error::Dimension(format!("{what} is empty")));
    }
    let k = nullity(&m.transpose(), 1e-9);
    if k != 1 {
        return Err(Error::NullityNotOne { what, nullity: k });
    }
    // mᵀ with its last equation replaced by the normalization row.
    let mut aug = m.transpose();
    for j in 0..n {
        aug[(n - 1, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let lu = aug.clone().lu();
    let direct = if min_pivot(&lu) > 1e-13 * inf_norm(&aug) { lu.solve(&rhs) } else { None };
    let x = match direct {
        Some(x) if x.iter().all(|v| v.is_finite()) => x,
        _ => {
            let mut full = DMatrix::zeros(n + 1, n);
            full.view_mut((0, 0), (n, n)).copy_from(&m.transpose());
            for j in 0..n {
                full[(n, j)] = 1.0;
            }
            let mut b = DVector::zeros(n + 1);
            b[n] = 1.0;
            full.svd(true, true)
                .solve(&b, 1e-14)
                .map_err(|e| Error::Singular { context: format!("{what}: {e}"), cond: f64::INFINITY })?
        }
    };
    Ok(x)
}

/// Stationary vector of an irreducible generator by GTH state reduction.
/// Only off-diagonal entries are read and no subtractions occur, so small
/// probabilities keep full relative accuracy. Returns None when a reduction
/// step finds no exit (the chain is reducible).
pub fn gth_stationary(q: &DMatrix<f64>) -> Option<DVector<f64>> {
    let n = q.nrows();
    if n == 1 {
        return Some(DVector::from_element(1, 1.0));
    }
    let mut a = q.clone();
    for k in (1..n).rev() {
        let s: f64 = (0..k).map(|j| a[(k, j)]).sum();
        if !(s > 0.0) {
            return None;
        }
        for i in 0..k {
            a[(i, k)] /= s;
        }
        for i in 0..k {
            let aik = a[(i, k)];
            if aik == 0.0 {
                continue;
            }
            for j in 0..k {
                if i != j {
                    a[(i, j)] += aik * a[(k, j)];
                }
            }
        }
    }
    let mut pi = DVector::zeros(n);
    pi[0] = 1.0;
    for k in 1..n {
        pi[k] = (0..k).map(|i| pi[i] * a[(i, k)]).sum();
    }
    let total = pi.sum();
    Some(pi / total)
}

/// Least-squares solution of [Qᵀ; 𝟙ᵀ] π = [0; 1].
pub fn lstsq_stationary(q: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = q.nrows();
    let mut full = DMatrix::zeros(n + 1, n);
    full.view_mut((0, 0), (n, n)).copy_from(&q.transpose());
    for j in 0..n {
        full[(n, j)] = 1.0;
    }
    let mut b = DVector::zeros(n + 1);
    b[n] = 1.0;
    full.svd(true, true)
        .solve(&b, 0.0)
        .map_err(|e| Error::Singular { context: format!("least-squares stationary: {e}"), cond: f64::INFINITY })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gth_two_state() {
        let q = DMatrix::from_row_slice(2, 2, &[-2.0, 2.0, 3.0, -3.0]);
        let pi = gth_stationary(&q).unwrap();
        assert!((pi[0] - 0.6).abs() < 1e-15 && (pi[1] - 0.4).abs() < 1e-15);
        let ls = lstsq_stationary(&q).unwrap();
        assert!((ls - pi).amax() < 1e-14);
    }

    #[test]
    fn gth_without_exit_is_none() {
        let q = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 0.0, 0.0]);
        assert!(gth_stationary(&q).is_none());
        // Absorbing state listed first: the reduction still finds the answer.
        let q = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, -1.0]);
        assert_eq!(gth_stationary(&q).unwrap().as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn null_vector_and_nullity() {
        let q = DMatrix::from_row_slice(3, 3, &[-1.0, 1.0, 0.0, 0.0, -2.0, 2.0, 3.0, 0.0, -3.0]);
        let x = left_null_probability(&q, "q").unwrap();
        assert!((q.tr_mul(&x)).amax() < 1e-14);
        assert!((x.sum() - 1.0).abs() < 1e-14);
        let z = DMatrix::<f64>::zeros(2, 2);
        assert!(matches!(left_null_probability(&z, "z"), Err(Error::NullityNotOne { nullity: 2, .. })));
    }

    #[test]
    fn env_tolerances() {
        let t = Tolerances::default();
        assert_eq!(t.eq, 1e-10);
        assert_eq!(t.rec, 1e-8);
    }
}
