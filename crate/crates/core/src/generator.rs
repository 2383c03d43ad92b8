//! The perturbed generator Q(ε) = Q0 + εQ1, classification of the states of
//! Q0, the absorbing-first block decomposition and the structural checks.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector, Dyn, LU};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{can_reach, condensation, is_strongly_connected, tarjan_scc};
use crate::linalg::{inf_norm, min_pivot, nullity, EDGE_TOL, WARN_TOL};
use crate::scrn_model::{fire, mass_action, ReactionNetwork, StateSpace};

/// ε at which irreducibility of Q(ε) is sampled (ε₀/2 with ε₀ = 1).
pub const IRREDUCIBILITY_SAMPLE_EPS: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct PerturbedGenerator {
    pub n: usize,
    pub q0: DMatrix<f64>,
    pub q1: DMatrix<f64>,
    /// State coordinates used for reporting and for transition vectors.
    pub labels: Vec<Vec<i64>>,
    label_index: HashMap<Vec<i64>, usize>,
    pub warnings: Vec<String>,
}

impl PerturbedGenerator {
    /// Generic constructor; states are labelled by their index.
    pub fn from_matrices(q0: DMatrix<f64>, q1: DMatrix<f64>) -> Result<Self> {
        let labels = (0..q0.nrows()).map(|i| vec![i as i64]).collect();
        Self::with_labels(q0, q1, labels)
    }

    pub fn with_labels(q0: DMatrix<f64>, q1: DMatrix<f64>, labels: Vec<Vec<i64>>) -> Result<Self> {
        let n = q0.nrows();
        if q0.ncols() != n || q1.nrows() != n || q1.ncols() != n || labels.len() != n {
            return Err(Error::Dimension(format!(
                "Q0 {}x{}, Q1 {}x{}, {} labels",
                q0.nrows(),
                q0.ncols(),
                q1.nrows(),
                q1.ncols(),
                labels.len()
            )));
        }
        if n == 0 {
            return Err(Error::Dimension("empty generator".into()));
        }
        for (name, m) in [("Q0", &q0), ("Q1", &q1)] {
            for i in 0..n {
                let row = m.row(i);
                let scale = row.iter().fold(1.0f64, |a, v| a.max(v.abs()));
                if row.sum().abs() > 1e-12 * scale {
                    return Err(Error::InvalidArgument(format!("{name} row {i} sums to {:e}", row.sum())));
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                if q0[(i, j)] < 0.0 {
                    return Err(Error::InvalidArgument(format!("Q0[{i},{j}] is negative")));
                }
                if q0[(i, j)] + q1[(i, j)] < 0.0 {
                    return Err(Error::InvalidArgument(format!("Q0+Q1 has a negative rate at [{i},{j}]")));
                }
            }
        }
        let mut label_index = HashMap::with_capacity(n);
        for (i, l) in labels.iter().enumerate() {
            if label_index.insert(l.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate state label {l:?}")));
            }
        }
        let mut warnings = Vec::new();
        for (name, m) in [("Q0", &q0), ("Q1", &q1)] {
            for i in 0..n {
                for j in 0..n {
                    let v = m[(i, j)];
                    if i != j && v > EDGE_TOL && v < WARN_TOL {
                        warnings.push(format!(
                            "{name}[{i},{j}] = {v:e} is close to the structural-zero threshold"
                        ));
                    }
                }
            }
        }
        Ok(PerturbedGenerator { n, q0, q1, labels, label_index, warnings })
    }

    pub fn q_at(&self, eps: f64) -> DMatrix<f64> {
        &self.q0 + &self.q1 * eps
    }

    pub fn rate(&self, x: usize, y: usize, eps: f64) -> f64 {
        self.q0[(x, y)] + eps * self.q1[(x, y)]
    }

    /// q_x(ε) = −Q_xx(ε).
    pub fn exit_rate(&self, x: usize, eps: f64) -> f64 {
        -self.rate(x, x, eps)
    }

    pub fn index_of_label(&self, label: &[i64]) -> Option<usize> {
        self.label_index.get(label).copied()
    }

    /// Distinct nonzero label differences y − x over all edges of Q0 or Q1.
    pub fn transition_vectors(&self) -> Vec<Vec<i64>> {
        let mut set = std::collections::BTreeSet::new();
        for x in 0..self.n {
            for y in 0..self.n {
                if x != y && (self.q0[(x, y)] > EDGE_TOL || self.q1[(x, y)] > EDGE_TOL) {
                    set.insert(self.labels[y].iter().zip(&self.labels[x]).map(|(a, b)| a - b).collect::<Vec<_>>());
                }
            }
        }
        set.into_iter().collect()
    }

    /// Rate of the jump x → x + v at ε (zero if x + v is not a state).
    pub fn transition_rate(&self, x: usize, v: &[i64], eps: f64) -> f64 {
        let target: Vec<i64> = self.labels[x].iter().zip(v).map(|(a, b)| a + b).collect();
        match self.index_of_label(&target) {
            Some(y) if y != x => self.rate(x, y, eps),
            _ => 0.0,
        }
    }

    fn adjacency_of(&self, m: &DMatrix<f64>) -> Vec<Vec<usize>> {
        (0..self.n)
            .map(|i| (0..self.n).filter(|&j| j != i && m[(i, j)] > EDGE_TOL).collect())
            .collect()
    }

    /// Positive-entry digraph of Q0.
    pub fn adjacency0(&self) -> Vec<Vec<usize>> {
        self.adjacency_of(&self.q0)
    }

    /// Positive-entry digraph of Q(ε).
    pub fn adjacency_at(&self, eps: f64) -> Vec<Vec<usize>> {
        self.adjacency_of(&self.q_at(eps))
    }
}

/// Q0 from ε-free propensities and Q1 from the coefficients of ε.
pub fn assemble_generator(net: &ReactionNetwork, space: &StateSpace) -> Result<PerturbedGenerator> {
    let n = space.len();
    let mut q0 = DMatrix::zeros(n, n);
    let mut q1 = DMatrix::zeros(n, n);
    for (i, x) in space.states.iter().enumerate() {
        for r in &net.reactions {
            let Some(y) = fire(r, x) else { continue };
            let Some(j) = space.index_of(&y) else { continue };
            let v = mass_action(r, x);
            if v < 0.0 || !v.is_finite() {
                return Err(Error::InvalidNetwork(format!("propensity {v} at state {x:?}")));
            }
            if r.eps {
                q1[(i, j)] += v;
            } else {
                q0[(i, j)] += v;
            }
        }
    }
    for m in [&mut q0, &mut q1] {
        for i in 0..n {
            let s: f64 = (0..n).filter(|&j| j != i).map(|j| m[(i, j)]).sum();
            m[(i, i)] = -s;
        }
    }
    PerturbedGenerator::with_labels(q0, q1, space.labels())
}

#[derive(Debug, Clone, Serialize)]
pub struct CommunicatingClass {
    pub states: Vec<usize>,
    pub recurrent: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Classification {
    pub absorbing: Vec<usize>,
    pub transient: Vec<usize>,
    pub classes: Vec<CommunicatingClass>,
}

/// Split the states into absorbing states and transient states of Q0.
pub fn classify_states(gen: &PerturbedGenerator) -> Result<Classification> {
    let adj = gen.adjacency0();
    let (comps, _, leaves) = condensation(&adj);
    let mut classes: Vec<CommunicatingClass> = comps
        .iter()
        .zip(&leaves)
        .map(|(c, &leaves)| CommunicatingClass { states: c.clone(), recurrent: !leaves })
        .collect();
    classes.sort_by_key(|c| c.states[0]);
    let mut absorbing = Vec::new();
    for c in classes.iter().filter(|c| c.recurrent) {
        if c.states.len() > 1 {
            return Err(Error::AssumptionViolation {
                number: 1,
                detail: format!("recurrent class {:?} of Q(0) is not a single absorbing state", label_list(gen, &c.states)),
            });
        }
        absorbing.push(c.states[0]);
    }
    absorbing.sort_unstable();
    let mut is_abs = vec![false; gen.n];
    for &a in &absorbing {
        is_abs[a] = true;
    }
    let transient: Vec<usize> = (0..gen.n).filter(|&i| !is_abs[i]).collect();
    if transient.is_empty() {
        return Err(Error::AssumptionViolation { number: 1, detail: "Q(0) has no transient states".into() });
    }
    let reach = can_reach(&adj, &absorbing);
    if let Some(&x) = transient.iter().find(|&&x| !reach[x]) {
        return Err(Error::AssumptionViolation {
            number: 1,
            detail: format!("state {:?} cannot reach an absorbing state under Q(0)", gen.labels[x]),
        });
    }
    Ok(Classification { absorbing, transient, classes })
}

fn label_list(gen: &PerturbedGenerator, idx: &[usize]) -> Vec<Vec<i64>> {
    idx.iter().map(|&i| gen.labels[i].clone()).collect()
}

/// Blocks of Q0 and Q1 after moving the absorbing states first.
#[derive(Debug, Clone)]
pub struct Blocks {
    /// Original indices: absorbing states, then transient states.
    pub order: Vec<usize>,
    pub absorbing: Vec<usize>,
    pub transient: Vec<usize>,
    pub a1: DMatrix<f64>,
    pub s1: DMatrix<f64>,
    pub r0: DMatrix<f64>,
    pub r1: DMatrix<f64>,
    pub t0: DMatrix<f64>,
    pub t1: DMatrix<f64>,
    lu_neg_t0: LU<f64, Dyn, Dyn>,
    lu_neg_t0_tr: LU<f64, Dyn, Dyn>,
}

impl Blocks {
    pub fn n_a(&self) -> usize {
        self.absorbing.len()
    }

    pub fn n_t(&self) -> usize {
        self.transient.len()
    }

    /// (−T0)⁻¹ b.
    pub fn neg_t0_solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.lu_neg_t0.solve(b).expect("T0 was checked invertible")
    }

    /// v (−T0)⁻¹ for a row vector v.
    pub fn row_neg_t0_solve(&self, v: &DVector<f64>) -> DVector<f64> {
        self.lu_neg_t0_tr.solve(v).expect("T0 was checked invertible")
    }

    /// Q̃ = [[A1, S1], [R0, T0]] in block order.
    pub fn q_tilde(&self) -> DMatrix<f64> {
        let (na, nt) = (self.n_a(), self.n_t());
        let mut q = DMatrix::zeros(na + nt, na + nt);
        q.view_mut((0, 0), (na, na)).copy_from(&self.a1);
        q.view_mut((0, na), (na, nt)).copy_from(&self.s1);
        q.view_mut((na, 0), (nt, na)).copy_from(&self.r0);
        q.view_mut((na, na), (nt, nt)).copy_from(&self.t0);
        q
    }

    /// Rebuild (Q0, Q1) in the original state order.
    pub fn reassemble(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let (na, nt) = (self.n_a(), self.n_t());
        let n = na + nt;
        let mut p0 = DMatrix::zeros(n, n);
        p0.view_mut((na, 0), (nt, na)).copy_from(&self.r0);
        p0.view_mut((na, na), (nt, nt)).copy_from(&self.t0);
        let mut p1 = DMatrix::zeros(n, n);
        p1.view_mut((0, 0), (na, na)).copy_from(&self.a1);
        p1.view_mut((0, na), (na, nt)).copy_from(&self.s1);
        p1.view_mut((na, 0), (nt, na)).copy_from(&self.r1);
        p1.view_mut((na, na), (nt, nt)).copy_from(&self.t1);
        let mut q0 = DMatrix::zeros(n, n);
        let mut q1 = DMatrix::zeros(n, n);
        for (bi, &i) in self.order.iter().enumerate() {
            for (bj, &j) in self.order.iter().enumerate() {
                q0[(i, j)] = p0[(bi, bj)];
                q1[(i, j)] = p1[(bi, bj)];
            }
        }
        (q0, q1)
    }

    /// Full-length vector in original order from its 𝒜 and 𝒯 parts.
    pub fn to_original(&self, a_part: &DVector<f64>, t_part: &DVector<f64>) -> DVector<f64> {
        let mut v = DVector::zeros(self.order.len());
        for (k, &i) in self.absorbing.iter().enumerate() {
            v[i] = a_part[k];
        }
        for (k, &i) in self.transient.iter().enumerate() {
            v[i] = t_part[k];
        }
        v
    }

    /// Split a full-length vector into its 𝒜 and 𝒯 parts.
    pub fn split(&self, v: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        (
            DVector::from_iterator(self.n_a(), self.absorbing.iter().map(|&i| v[i])),
            DVector::from_iterator(self.n_t(), self.transient.iter().map(|&i| v[i])),
        )
    }
}

fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

pub fn block_decompose(gen: &PerturbedGenerator, class: &Classification) -> Result<Blocks> {
    let a = &class.absorbing;
    let t = &class.transient;
    let t0 = submatrix(&gen.q0, t, t);
    let neg = -&t0;
    let lu = neg.clone().lu();
    let pivot = min_pivot(&lu);
    if !(pivot > 1e-12 * inf_norm(&t0)) {
        return Err(Error::SingularT0 { pivot });
    }
    let lu_tr = neg.transpose().lu();
    let mut order = a.clone();
    order.extend_from_slice(t);
    Ok(Blocks {
        order,
        absorbing: a.clone(),
        transient: t.clone(),
        a1: submatrix(&gen.q1, a, a),
        s1: submatrix(&gen.q1, a, t),
        r0: submatrix(&gen.q0, t, a),
        r1: submatrix(&gen.q1, t, a),
        t0,
        t1: submatrix(&gen.q1, t, t),
        lu_neg_t0: lu,
        lu_neg_t0_tr: lu_tr,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct AssumptionCheck {
    pub holds: bool,
    pub witness: String,
}

impl AssumptionCheck {
    fn new(holds: bool, witness: impl Into<String>) -> Self {
        AssumptionCheck { holds, witness: witness.into() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    /// Q(0): singleton absorbing recurrent classes, nonempty transient set.
    pub a1: AssumptionCheck,
    /// nullity(Q_𝒜ᵀ) = 1.
    pub a2: AssumptionCheck,
    /// 𝒜 lies in one communicating class of Q̃.
    pub a3: AssumptionCheck,
    /// Q̃ irreducible.
    pub a4: AssumptionCheck,
    /// Linear perturbation.
    pub a5: AssumptionCheck,
    /// Q(ε) irreducible at the sample ε.
    pub irreducible: AssumptionCheck,
    pub n_absorbing: usize,
    pub n_transient: usize,
}

impl AssumptionReport {
    pub fn summary(&self) -> BTreeMap<&'static str, bool> {
        BTreeMap::from([
            ("assumption1", self.a1.holds),
            ("assumption2", self.a2.holds),
            ("assumption3", self.a3.holds),
            ("assumption4", self.a4.holds),
            ("assumption5", self.a5.holds),
            ("irreducible", self.irreducible.holds),
        ])
    }
}

pub fn verify_assumptions(gen: &PerturbedGenerator) -> AssumptionReport {
    let irr = is_strongly_connected(&gen.adjacency_at(IRREDUCIBILITY_SAMPLE_EPS));
    let irreducible = AssumptionCheck::new(
        irr,
        format!("positive digraph of Q({IRREDUCIBILITY_SAMPLE_EPS}) {}strongly connected", if irr { "" } else { "not " }),
    );
    let a5 = AssumptionCheck::new(true, "Q(ε) = Q0 + εQ1 by construction");
    let skipped = || AssumptionCheck::new(false, "not checked: assumption 1 fails");
    let class = match classify_states(gen) {
        Ok(c) => c,
        Err(e) => {
            return AssumptionReport {
                a1: AssumptionCheck::new(false, e.to_string()),
                a2: skipped(),
                a3: skipped(),
                a4: skipped(),
                a5,
                irreducible,
                n_absorbing: 0,
                n_transient: 0,
            }
        }
    };
    let a1 = AssumptionCheck::new(
        true,
        format!("{} absorbing, {} transient states", class.absorbing.len(), class.transient.len()),
    );
    let blocks = match block_decompose(gen, &class) {
        Ok(b) => b,
        Err(e) => {
            return AssumptionReport {
                a1: AssumptionCheck::new(false, e.to_string()),
                a2: skipped(),
                a3: skipped(),
                a4: skipped(),
                a5,
                irreducible,
                n_absorbing: class.absorbing.len(),
                n_transient: class.transient.len(),
            }
        }
    };
    let qt = blocks.q_tilde();
    let adj: Vec<Vec<usize>> = (0..qt.nrows())
        .map(|i| (0..qt.ncols()).filter(|&j| j != i && qt[(i, j)] > EDGE_TOL).collect())
        .collect();
    let comps = tarjan_scc(&adj);
    let na = blocks.n_a();
    let a4_holds = comps.len() == 1;
    let a4 = AssumptionCheck::new(
        a4_holds,
        if a4_holds {
            "Q̃ has a single communicating class".to_string()
        } else {
            format!("Q̃ has {} communicating classes", comps.len())
        },
    );
    let mut comp_of = vec![0; qt.nrows()];
    for (c, comp) in comps.iter().enumerate() {
        for &v in comp {
            comp_of[v] = c;
        }
    }
    let a3_holds = (0..na).all(|k| comp_of[k] == comp_of[0]);
    let a3_witness = {
        let mut groups: BTreeMap<usize, Vec<Vec<i64>>> = BTreeMap::new();
        for k in 0..na {
            groups.entry(comp_of[k]).or_default().push(gen.labels[blocks.order[k]].clone());
        }
        let g: Vec<_> = groups.into_values().collect();
        format!("absorbing states grouped by Q̃ class: {g:?}")
    };
    let a3 = AssumptionCheck::new(a3_holds, a3_witness);
    let q_a = crate::stationary_expansion::reduced_matrix(&blocks);
    let k = nullity(&q_a.transpose(), 1e-9);
    let a2 = AssumptionCheck::new(k == 1, format!("nullity of Q_A^T = {k}"));
    AssumptionReport {
        a1,
        a2,
        a3,
        a4,
        a5,
        irreducible,
        n_absorbing: class.absorbing.len(),
        n_transient: class.transient.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_absorbing_is_a1_violation() {
        let g = PerturbedGenerator::from_matrices(
            DMatrix::zeros(2, 2),
            DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]),
        )
        .unwrap();
        assert!(matches!(classify_states(&g), Err(Error::AssumptionViolation { number: 1, .. })));
        let rep = verify_assumptions(&g);
        assert!(!rep.a1.holds);
        assert!(rep.irreducible.holds);
    }

    #[test]
    fn recurrent_pair_is_a1_violation() {
        let q0 = DMatrix::from_row_slice(3, 3, &[-1.0, 1.0, 0.0, 1.0, -1.0, 0.0, 1.0, 0.0, -1.0]);
        let g = PerturbedGenerator::from_matrices(q0, DMatrix::zeros(3, 3)).unwrap();
        assert!(matches!(classify_states(&g), Err(Error::AssumptionViolation { number: 1, .. })));
    }

    #[test]
    fn rejects_bad_generators() {
        let q0 = DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, 0.0, 0.0]);
        assert!(PerturbedGenerator::from_matrices(q0, DMatrix::zeros(2, 2)).is_err());
        let q0 = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 0.0, 0.0]);
        assert!(PerturbedGenerator::from_matrices(q0, DMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn warns_on_tiny_entries() {
        let q0 = DMatrix::from_row_slice(2, 2, &[-1e-10, 1e-10, 0.0, 0.0]);
        let q1 = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, -1.0]);
        let g = PerturbedGenerator::from_matrices(q0, q1).unwrap();
        assert_eq!(g.warnings.len(), 1);
    }
}
