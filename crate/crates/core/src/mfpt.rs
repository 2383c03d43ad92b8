//! Mean first passage times: exact solves, leading Laurent terms, return
//! times and birth–death sums.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::generator::{block_decompose, classify_states, PerturbedGenerator};
use crate::linalg::{cond_estimate, inf_norm, vec_inf_norm};
use crate::pole_order::{pole_orders, stationary_order_of};
use crate::stationary_expansion::{higher_order, reduced_generator};

/// Relative residual bound for the passage-time solve.
pub const MFPT_TOL: f64 = 1e-9;

fn split_target(n: usize, target: &[usize]) -> Result<(Vec<bool>, Vec<usize>)> {
    let mut in_b = vec![false; n];
    for &b in target {
        if b >= n {
            return Err(Error::InvalidArgument(format!("target state {b} out of range")));
        }
        in_b[b] = true;
    }
    let rest: Vec<usize> = (0..n).filter(|&i| !in_b[i]).collect();
    if rest.len() == n || rest.is_empty() {
        return Err(Error::InvalidArgument("target set must be nonempty and proper".into()));
    }
    Ok((in_b, rest))
}

/// h_x(ε) = E_x[τ_B] for every state; zero on B.
///
/// States outside B are censored one at a time from the embedded jump chain,
/// carrying the expected time spent in censored states along; back
/// substitution then only adds nonnegative terms, so small exit
/// probabilities do not cost relative accuracy.
pub fn mfpt_exact(gen: &PerturbedGenerator, eps: f64, target: &[usize]) -> Result<DVector<f64>> {
    let n = gen.n;
    let (in_b, rest) = split_target(n, target)?;
    let q = gen.q_at(eps);
    let mut p = DMatrix::zeros(n, n);
    let mut m = vec![0.0; n];
    for &i in &rest {
        let qi: f64 = (0..n).filter(|&j| j != i).map(|j| q[(i, j)].max(0.0)).sum();
        if !(qi > 0.0) {
            return Err(Error::Singular { context: format!("state {i} has no exit at eps = {eps}"), cond: f64::INFINITY });
        }
        for j in (0..n).filter(|&j| j != i) {
            p[(i, j)] = q[(i, j)].max(0.0) / qi;
        }
        m[i] = 1.0 / qi;
    }
    let mut alive = vec![true; n];
    let mut exit = vec![0.0; n];
    for &k in &rest {
        let s: f64 = (0..n).filter(|&j| j != k && alive[j]).map(|j| p[(k, j)]).sum();
        if !(s > 0.0) {
            return Err(Error::DisconnectedFromB { state: k });
        }
        exit[k] = s;
        alive[k] = false;
        for &i in rest.iter().filter(|&&i| alive[i]) {
            let w = p[(i, k)];
            if w == 0.0 {
                continue;
            }
            let f = w / s;
            for j in (0..n).filter(|&j| j != i && j != k && alive[j]) {
                p[(i, j)] += f * p[(k, j)];
            }
            m[i] += f * m[k];
        }
    }
    let mut h = DVector::zeros(n);
    for (pos, &k) in rest.iter().enumerate().rev() {
        let later: f64 = rest[pos + 1..].iter().map(|&j| p[(k, j)] * h[j]).sum();
        h[k] = (m[k] + later) / exit[k];
    }
    let res = (0..n)
        .filter(|&i| !in_b[i])
        .map(|i| (rest.iter().map(|&j| q[(i, j)] * h[j]).sum::<f64>() + 1.0).abs())
        .fold(0.0, f64::max);
    let qb = DMatrix::from_fn(rest.len(), rest.len(), |i, j| q[(rest[i], rest[j])]);
    let scale = inf_norm(&qb) * vec_inf_norm(&h).max(1.0);
    if !h.iter().all(|v| v.is_finite()) || rest.iter().any(|&i| !(h[i] > 0.0)) || !(res <= MFPT_TOL * scale) {
        return Err(Error::Singular { context: format!("passage times at eps = {eps}"), cond: cond_estimate(&qb) });
    }
    Ok(h)
}

/// Partial-pivoting LU solve of Q^{Bᶜ}(ε)h = −𝟙, kept as a cross-check.
pub fn mfpt_lu(gen: &PerturbedGenerator, eps: f64, target: &[usize]) -> Result<DVector<f64>> {
    let (_, rest) = split_target(gen.n, target)?;
    let q = gen.q_at(eps);
    let k = rest.len();
    let qb = DMatrix::from_fn(k, k, |i, j| q[(rest[i], rest[j])]);
    let h = crate::linalg::lu_solve(&qb, &DMatrix::from_element(k, 1, -1.0), "passage times")?;
    let mut full = DVector::zeros(gen.n);
    for (i, &x) in rest.iter().enumerate() {
        full[x] = h[(i, 0)];
    }
    Ok(full)
}

#[derive(Debug, Clone, Serialize)]
pub struct MfptExpansion {
    pub source: usize,
    pub target: usize,
    /// Pole order k_y + 1 (0 when source equals target).
    pub order: i64,
    pub coefficient: f64,
    pub d_yy: f64,
    pub d_xy: f64,
    pub k_y: i64,
    pub pi_y_ky: f64,
    /// Order reported by the condensation algorithm.
    pub algorithm_order: Option<i64>,
    pub zero_coefficient: bool,
    pub warnings: Vec<String>,
}

/// Leading term of h_{x,y}(ε) for absorbing x, y:
/// (D_yy − D_xy)/π_y^{(k_y)} · ε^{−(k_y+1)}.
pub fn mfpt_leading(gen: &PerturbedGenerator, x: usize, y: usize) -> Result<MfptExpansion> {
    let class = classify_states(gen)?;
    let blocks = block_decompose(gen, &class)?;
    let pos = |s: usize| {
        blocks.absorbing.iter().position(|&a| a == s).ok_or_else(|| {
            Error::InvalidArgument(format!("state {:?} is not absorbing under Q(0)", gen.labels[s]))
        })
    };
    let (ix, iy) = (pos(x)?, pos(y)?);
    if x == y {
        return Ok(MfptExpansion {
            source: x,
            target: y,
            order: 0,
            coefficient: 0.0,
            d_yy: 0.0,
            d_xy: 0.0,
            k_y: 0,
            pi_y_ky: 0.0,
            algorithm_order: None,
            zero_coefficient: false,
            warnings: vec![],
        });
    }
    let reduced = reduced_generator(&blocks)?;
    let k_y = stationary_order_of(gen, y)?;
    let exp = higher_order(&blocks, &reduced, k_y as usize)?;
    let pi_y_ky = exp.coefficients[k_y as usize][y];
    let d = &reduced.deviation;
    let (d_yy, d_xy) = (d[(iy, iy)], d[(ix, iy)]);
    let num = d_yy - d_xy;
    let zero_coefficient = num.abs() <= 1e-10 * inf_norm(d).max(1.0);
    let mut warnings = Vec::new();
    if zero_coefficient {
        warnings.push(format!("D_yy - D_xy = {num:e} vanishes; the pole order may be lower"));
    }
    let order = k_y + 1;
    let algorithm_order = pole_orders(gen, &[y])?.order(x);
    if algorithm_order != Some(order) {
        warnings.push(format!(
            "pole order from condensation {:?} differs from k_y + 1 = {order}",
            algorithm_order
        ));
    }
    Ok(MfptExpansion {
        source: x,
        target: y,
        order,
        coefficient: num / pi_y_ky,
        d_yy,
        d_xy,
        k_y,
        pi_y_ky,
        algorithm_order,
        zero_coefficient,
        warnings,
    })
}

/// E_x[ζ_x] = 1/q_x + Σ_y (Q_xy/q_x) h_{y,x}.
pub fn mean_return_time(gen: &PerturbedGenerator, eps: f64, x: usize) -> Result<f64> {
    let q = gen.q_at(eps);
    let qx = -q[(x, x)];
    if !(qx > 0.0) {
        return Err(Error::InvalidArgument(format!("state {x} has no exit at eps = {eps}")));
    }
    let h = mfpt_exact(gen, eps, &[x])?;
    let tail: f64 = (0..gen.n).filter(|&y| y != x).map(|y| q[(x, y)] / qx * h[y]).sum();
    Ok(1.0 / qx + tail)
}

/// Passage times of a birth–death chain on {0, …, u} with birth rates
/// λ_0..λ_{u−1} and death rates γ_1..γ_u. Returns (h_{u→0}, h_{0→u}).
/// Both sums are accumulated from positive terms only.
pub fn birth_death_mfpt(lambda: &[f64], gamma: &[f64]) -> Result<(f64, f64)> {
    let u = lambda.len();
    if u == 0 || gamma.len() != u {
        return Err(Error::InvalidArgument("need equally long, nonempty rate vectors".into()));
    }
    if lambda.iter().chain(gamma).any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidArgument("birth and death rates must be positive".into()));
    }
    // gamma[i - 1] is γ_i.
    let g = |i: usize| gamma[i - 1];
    // Downward step i → i−1 takes τ_i = (1 + λ_i τ_{i+1})/γ_i, τ_u = 1/γ_u.
    let mut down = 0.0;
    let mut tau = 1.0 / g(u);
    down += tau;
    for i in (1..u).rev() {
        tau = (1.0 + lambda[i] * tau) / g(i);
        down += tau;
    }
    // Upward step i → i+1 takes σ_i = (1 + γ_i σ_{i−1})/λ_i, σ_0 = 1/λ_0.
    let mut up = 0.0;
    let mut sigma = 1.0 / lambda[0];
    up += sigma;
    for i in 1..u {
        sigma = (1.0 + g(i) * sigma) / lambda[i];
        up += sigma;
    }
    Ok((down, up))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_state_holding_time() {
        let q1 = DMatrix::from_row_slice(2, 2, &[-4.0, 4.0, 1.0, -1.0]);
        let g = PerturbedGenerator::from_matrices(DMatrix::zeros(2, 2), q1).unwrap();
        let h = mfpt_exact(&g, 0.5, &[1]).unwrap();
        assert!((h[0] - 0.5).abs() < 1e-15);
        assert_eq!(h[1], 0.0);
        let ret = mean_return_time(&g, 1.0, 0).unwrap();
        assert!((ret - (0.25 + 1.0)).abs() < 1e-14);
    }

    #[test]
    fn birth_death_small() {
        let (d, u) = birth_death_mfpt(&[2.0], &[3.0]).unwrap();
        assert!((u - 0.5).abs() < 1e-15 && (d - 1.0 / 3.0).abs() < 1e-15);
        let (_, u) = birth_death_mfpt(&[1.5, 1.5], &[1.5, 1.5]).unwrap();
        assert!((u - 2.0).abs() < 1e-15);
        assert!(birth_death_mfpt(&[1.0, 0.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn bad_targets() {
        let q1 = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]);
        let g = PerturbedGenerator::from_matrices(DMatrix::zeros(2, 2), q1).unwrap();
        assert!(mfpt_exact(&g, 1.0, &[]).is_err());
        assert!(mfpt_exact(&g, 1.0, &[0, 1]).is_err());
    }

    #[test]
    fn reduction_matches_lu() {
        let q1 = DMatrix::from_row_slice(
            4,
            4,
            &[-3.0, 1.0, 2.0, 0.0, 1.0, -2.0, 0.5, 0.5, 0.0, 4.0, -5.0, 1.0, 1.0, 1.0, 1.0, -3.0],
        );
        let g = PerturbedGenerator::from_matrices(DMatrix::zeros(4, 4), q1).unwrap();
        for t in [vec![3], vec![0, 2]] {
            let a = mfpt_exact(&g, 1.0, &t).unwrap();
            let b = mfpt_lu(&g, 1.0, &t).unwrap();
            assert!((a - b).amax() < 1e-13);
        }
    }
}
