//! Power series of the stationary distribution in ε.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::generator::{Blocks, PerturbedGenerator};
use crate::graph::tarjan_scc;
use crate::linalg::{gth_stationary, inf_norm, left_null_probability, lstsq_stationary, lu_solve, cond_estimate, vec_inf_norm, Tolerances, EDGE_TOL};

#[derive(Debug, Clone)]
pub struct ReducedGenerator {
    pub q_a: DMatrix<f64>,
    pub alpha: DVector<f64>,
    /// Deviation matrix (−Q_A + 𝟙α)⁻¹ − 𝟙α.
    pub deviation: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct StationaryExpansion {
    pub order: usize,
    /// π⁽ᵏ⁾ in the original state order.
    pub coefficients: Vec<DVector<f64>>,
    /// ‖π⁽ᵏ⁾Q0 + π⁽ᵏ⁻¹⁾Q1‖∞ for k ≥ 1 (entry 0 is ‖π⁽⁰⁾Q0‖∞).
    pub residuals: Vec<f64>,
}

impl StationaryExpansion {
    /// Truncated series Σ_{k≤K} εᵏπ⁽ᵏ⁾.
    pub fn evaluate(&self, eps: f64) -> DVector<f64> {
        let mut out = DVector::zeros(self.coefficients[0].len());
        let mut p = 1.0;
        for c in &self.coefficients {
            out += c * p;
            p *= eps;
        }
        out
    }

    pub fn evaluate_to(&self, eps: f64, k: usize) -> DVector<f64> {
        let mut out = DVector::zeros(self.coefficients[0].len());
        let mut p = 1.0;
        for c in self.coefficients.iter().take(k + 1) {
            out += c * p;
            p *= eps;
        }
        out
    }
}

/// Q_A = A1 + S1(−T0)⁻¹R0.
pub fn reduced_matrix(blocks: &Blocks) -> DMatrix<f64> {
    &blocks.a1 + &blocks.s1 * blocks.neg_t0_solve(&blocks.r0)
}

fn row_times(v: &DVector<f64>, m: &DMatrix<f64>) -> DVector<f64> {
    m.tr_mul(v)
}

pub fn reduced_generator(blocks: &Blocks) -> Result<ReducedGenerator> {
    reduced_generator_tol(blocks, &Tolerances::default())
}

pub fn reduced_generator_tol(blocks: &Blocks, tol: &Tolerances) -> Result<ReducedGenerator> {
    let q_a = reduced_matrix(blocks);
    let alpha = left_null_probability(&q_a, "Q_A^T")?;
    let res = vec_inf_norm(&row_times(&alpha, &q_a));
    let scale = inf_norm(&q_a).max(f64::MIN_POSITIVE);
    if res > tol.eq * scale {
        return Err(Error::Inconsistent { context: "alpha Q_A = 0".into(), residual: res });
    }
    let n = q_a.nrows();
    let one_alpha = DMatrix::from_fn(n, n, |_, j| alpha[j]);
    let z = lu_solve(&(&one_alpha - &q_a), &DMatrix::identity(n, n), "deviation matrix")?;
    let deviation = z - one_alpha;
    Ok(ReducedGenerator { q_a, alpha, deviation })
}

/// M = R1 + T1(−T0)⁻¹R0.
fn m_matrix(blocks: &Blocks) -> DMatrix<f64> {
    &blocks.r1 + &blocks.t1 * blocks.neg_t0_solve(&blocks.r0)
}

pub fn higher_order(blocks: &Blocks, reduced: &ReducedGenerator, k_max: usize) -> Result<StationaryExpansion> {
    higher_order_tol(blocks, reduced, k_max, &Tolerances::default())
}

pub fn higher_order_tol(
    blocks: &Blocks,
    reduced: &ReducedGenerator,
    k_max: usize,
    tol: &Tolerances,
) -> Result<StationaryExpansion> {
    let (na, nt) = (blocks.n_a(), blocks.n_t());
    let m = m_matrix(blocks);
    let one_alpha = DMatrix::from_fn(nt, na, |_, j| reduced.alpha[j]);
    let md = &m * &reduced.deviation - one_alpha;
    let (q0, q1) = blocks.reassemble();
    let (n0, n1) = (inf_norm(&q0), inf_norm(&q1));

    let mut alphas = vec![reduced.alpha.clone()];
    let mut betas = vec![DVector::zeros(nt)];
    let mut coefficients = vec![blocks.to_original(&alphas[0], &betas[0])];
    let mut residuals = vec![vec_inf_norm(&row_times(&coefficients[0], &q0))];
    for k in 1..=k_max {
        let rhs = row_times(&alphas[k - 1], &blocks.s1) + row_times(&betas[k - 1], &blocks.t1);
        let beta = blocks.row_neg_t0_solve(&rhs);
        let alpha = row_times(&beta, &md);
        let pi = blocks.to_original(&alpha, &beta);
        let r = row_times(&pi, &q0) + row_times(&coefficients[k - 1], &q1);
        let res = vec_inf_norm(&r);
        let scale = (n0 * vec_inf_norm(&pi) + n1 * vec_inf_norm(&coefficients[k - 1])).max(f64::MIN_POSITIVE);
        if !(res <= tol.rec * scale) {
            return Err(Error::Inconsistent { context: format!("order {k} recursion"), residual: res });
        }
        alphas.push(alpha);
        betas.push(beta);
        coefficients.push(pi);
        residuals.push(res);
    }
    Ok(StationaryExpansion { order: k_max, coefficients, residuals })
}

/// (π⁽⁰⁾, π⁽¹⁾) in the original state order.
pub fn zeroth_and_first_order(blocks: &Blocks, reduced: &ReducedGenerator) -> Result<(DVector<f64>, DVector<f64>)> {
    let mut e = higher_order(blocks, reduced, 1)?;
    let p1 = e.coefficients.pop().unwrap();
    let p0 = e.coefficients.pop().unwrap();
    Ok((p0, p1))
}

/// Result of the transient-side characterization.
#[derive(Debug, Clone)]
pub struct QtRoute {
    pub q_t: DMatrix<f64>,
    pub nu: DVector<f64>,
    pub alpha: DVector<f64>,
    /// β⁽¹⁾ = cν on the transient block.
    pub beta1: DVector<f64>,
}

/// True when all absorbing states share one communicating class of Q̃.
pub fn absorbing_in_one_class(blocks: &Blocks) -> bool {
    let qt = blocks.q_tilde();
    let n = qt.nrows();
    let adj: Vec<Vec<usize>> =
        (0..n).map(|i| (0..n).filter(|&j| j != i && qt[(i, j)] > EDGE_TOL).collect()).collect();
    let comps = tarjan_scc(&adj);
    let na = blocks.n_a();
    comps.iter().any(|c| (0..na).all(|k| c.contains(&k)))
}

/// α through Q_T = T0 + R0(−A1)⁻¹S1; refuses to run when the absorbing
/// states are not in one class of Q̃.
pub fn zeroth_via_qt(blocks: &Blocks) -> Result<QtRoute> {
    if !absorbing_in_one_class(blocks) {
        return Err(Error::AssumptionViolation {
            number: 3,
            detail: "absorbing states lie in different communicating classes of Q~".into(),
        });
    }
    zeroth_via_qt_unchecked(blocks)
}

pub fn zeroth_via_qt_unchecked(blocks: &Blocks) -> Result<QtRoute> {
    let neg_a1 = -&blocks.a1;
    let lu = neg_a1.clone().lu();
    if !(crate::linalg::min_pivot(&lu) > 1e-12 * inf_norm(&blocks.a1)) {
        return Err(Error::A1Singular);
    }
    let a1_s1 = lu.solve(&blocks.s1).ok_or(Error::A1Singular)?;
    let q_t = &blocks.t0 + &blocks.r0 * a1_s1;
    let nu = left_null_probability(&q_t, "Q_T^T")?;
    // νR0(−A1)⁻¹ as the solution of (−A1)ᵀ w = R0ᵀν.
    let w = neg_a1
        .transpose()
        .lu()
        .solve(&row_times(&nu, &blocks.r0))
        .ok_or(Error::A1Singular)?;
    let c = 1.0 / w.sum();
    Ok(QtRoute { q_t, alpha: w * c, beta1: nu.clone() * c, nu })
}

#[derive(Debug, Clone)]
pub struct PartialBalance {
    /// Transient states, original indices.
    pub states: Vec<usize>,
    pub residuals: Vec<f64>,
    pub max: f64,
}

/// |π_x Σ_{y∈𝒜} Q_xy − Σ_{y∈𝒜} π_y Q_yx| for every transient x.
pub fn partial_balance_check(gen: &PerturbedGenerator, blocks: &Blocks, eps: f64) -> Result<PartialBalance> {
    let pi = stationary_exact(gen, eps)?;
    let q = gen.q_at(eps);
    let states = blocks.transient.clone();
    let residuals: Vec<f64> = states
        .iter()
        .map(|&x| {
            let out: f64 = blocks.absorbing.iter().map(|&y| q[(x, y)]).sum::<f64>() * pi[x];
            let inflow: f64 = blocks.absorbing.iter().map(|&y| pi[y] * q[(y, x)]).sum();
            (out - inflow).abs()
        })
        .collect();
    let max = residuals.iter().cloned().fold(0.0, f64::max);
    Ok(PartialBalance { states, residuals, max })
}

pub fn stationary_exact(gen: &PerturbedGenerator, eps: f64) -> Result<DVector<f64>> {
    stationary_exact_tol(gen, eps, &Tolerances::default())
}

/// Stationary vector of Q(ε) by GTH reduction, residual-checked.
pub fn stationary_exact_tol(gen: &PerturbedGenerator, eps: f64, tol: &Tolerances) -> Result<DVector<f64>> {
    let q = gen.q_at(eps);
    let pi = gth_stationary(&q).ok_or_else(|| Error::Singular {
        context: format!("stationary distribution at eps = {eps} (reducible generator)"),
        cond: f64::INFINITY,
    })?;
    let res = vec_inf_norm(&row_times(&pi, &q));
    if !(res <= tol.eq * inf_norm(&q)) {
        return Err(Error::Singular { context: format!("stationary distribution at eps = {eps}"), cond: cond_estimate(&q) });
    }
    Ok(pi)
}

/// Least-squares cross-check of `stationary_exact`.
pub fn stationary_lstsq(gen: &PerturbedGenerator, eps: f64) -> Result<DVector<f64>> {
    lstsq_stationary(&gen.q_at(eps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{block_decompose, classify_states};

    fn three_state() -> PerturbedGenerator {
        // 0 and 2 absorbing at ε = 0, 1 transient.
        let q0 = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 1.0, -3.0, 2.0, 0.0, 0.0, 0.0]);
        let q1 = DMatrix::from_row_slice(3, 3, &[-1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 2.0, -2.0]);
        PerturbedGenerator::from_matrices(q0, q1).unwrap()
    }

    #[test]
    fn symmetric_two_state_alpha() {
        let q = DMatrix::from_row_slice(2, 2, &[-3.0, 3.0, 3.0, -3.0]);
        let a = left_null_probability(&q, "test").unwrap();
        assert!((a[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn three_state_expansion() {
        let g = three_state();
        let c = classify_states(&g).unwrap();
        let b = block_decompose(&g, &c).unwrap();
        let red = reduced_generator(&b).unwrap();
        // Q_A = [[-2/3, 2/3], [2/3, -2/3]].
        assert!((red.q_a[(0, 1)] - 2.0 / 3.0).abs() < 1e-14);
        assert!((red.q_a[(1, 0)] - 2.0 / 3.0).abs() < 1e-14);
        assert!((red.alpha[0] - 0.5).abs() < 1e-14);
        let e = higher_order(&b, &red, 3).unwrap();
        for k in 1..=3 {
            assert!(e.coefficients[k].sum().abs() < 1e-12);
        }
        let eps = 1e-3;
        let exact = stationary_exact(&g, eps).unwrap();
        let approx = e.evaluate(eps);
        assert!(vec_inf_norm(&(exact - approx)) < 1e-10);
        let qt = zeroth_via_qt(&b).unwrap();
        assert!((qt.alpha[0] - 0.5).abs() < 1e-14);
        let (_, p1) = zeroth_and_first_order(&b, &red).unwrap();
        assert!((qt.beta1[0] - p1[1]).abs() < 1e-14);
    }

    #[test]
    fn two_state_exact() {
        let q1 = DMatrix::from_row_slice(2, 2, &[-2.0, 2.0, 5.0, -5.0]);
        let g = PerturbedGenerator::from_matrices(DMatrix::zeros(2, 2), q1).unwrap();
        let pi = stationary_exact(&g, 1.0).unwrap();
        assert!((pi[0] - 5.0 / 7.0).abs() < 1e-15);
        let ls = stationary_lstsq(&g, 1.0).unwrap();
        assert!((ls[1] - 2.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn partial_balance_detects_cycle() {
        // Transient 1 feeds transient 2 only, so its inflow from the absorbing
        // states is not matched by any direct outflow to them.
        let q0 = DMatrix::from_row_slice(
            4,
            4,
            &[0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 1.0, 0.0, -2.0, 1.0, 0.0, 0.0, 0.0, 0.0],
        );
        let q1 = DMatrix::from_row_slice(
            4,
            4,
            &[-1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, -1.0],
        );
        let g = PerturbedGenerator::from_matrices(q0, q1).unwrap();
        let c = classify_states(&g).unwrap();
        let b = block_decompose(&g, &c).unwrap();
        let pb = partial_balance_check(&g, &b, 0.1).unwrap();
        assert!(pb.max > 1e-3);
    }
}
