//! Hypothesis checks for the cone-order comparison of two chains sharing a
//! state space, monotone target sets, and parameter sweeps.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::generator::PerturbedGenerator;
use crate::mfpt::mfpt_exact;
use crate::stationary_expansion::stationary_exact;

/// Relative slack allowed in the rate inequalities.
const RATE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConeSpec {
    /// Integer matrix A, one row per face.
    pub a: Vec<Vec<i64>>,
    /// Optional groups of transition vectors whose rates are compared as sums.
    pub groups: Option<Vec<Vec<Vec<i64>>>>,
}

impl ConeSpec {
    pub fn new(a: Vec<Vec<i64>>) -> Result<Self> {
        let d = a.first().map(|r| r.len()).unwrap_or(0);
        if a.is_empty() || d == 0 || a.iter().any(|r| r.len() != d) {
            return Err(Error::Dimension("cone matrix must be a nonempty rectangle".into()));
        }
        if a.iter().any(|r| r.iter().all(|&v| v == 0)) {
            return Err(Error::InvalidArgument("cone matrix has a zero row".into()));
        }
        Ok(ConeSpec { a, groups: None })
    }

    pub fn with_groups(mut self, groups: Vec<Vec<Vec<i64>>>) -> Result<Self> {
        let d = self.dim();
        if groups.iter().flatten().any(|v| v.len() != d) {
            return Err(Error::Dimension("group vector has the wrong length".into()));
        }
        self.groups = Some(groups);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.a[0].len()
    }

    fn row_dot(&self, i: usize, v: &[i64]) -> i64 {
        self.a[i].iter().zip(v).map(|(a, b)| a * b).sum()
    }

    fn apply(&self, v: &[i64]) -> Vec<i64> {
        (0..self.a.len()).map(|i| self.row_dot(i, v)).collect()
    }

    /// x ≼_A y.
    pub fn precedes(&self, x: &[i64], y: &[i64]) -> bool {
        let diff: Vec<i64> = y.iter().zip(x).map(|(a, b)| a - b).collect();
        self.apply(&diff).iter().all(|&v| v >= 0)
    }
}

/// The 2D cone [[1,0],[0,−1]].
pub fn cone_2d() -> ConeSpec {
    ConeSpec::new(vec![vec![1, 0], vec![0, -1]]).unwrap()
}

/// The 3D cone on (DR12, DA, DR1).
pub fn cone_3d() -> ConeSpec {
    ConeSpec::new(vec![vec![1, 0, 0], vec![0, -1, 0], vec![1, 0, 1]]).unwrap()
}

/// The 4D cone on (DR12, DA, DR1, DR2) with the rate grouping used with the
/// approximated model.
pub fn cone_4d_grouped() -> ConeSpec {
    let f_r121 = vec![1, 0, -1, 0];
    let f_r122 = vec![1, 0, 0, -1];
    let f_a = vec![0, 1, 0, 0];
    let f_r1 = vec![0, 0, 1, 0];
    let f_r2 = vec![0, 0, 0, 1];
    let neg = |v: &Vec<i64>| v.iter().map(|x| -x).collect::<Vec<i64>>();
    let groups = vec![
        vec![f_r2.clone(), f_r121.clone()],
        vec![neg(&f_r2), neg(&f_r121)],
        vec![f_r1.clone(), f_r122.clone()],
        vec![neg(&f_r1), neg(&f_r122)],
        vec![f_a.clone()],
        vec![neg(&f_a)],
    ];
    ConeSpec::new(vec![vec![0, -1, 0, 0], vec![1, 0, 1, 0], vec![1, 0, 0, 1], vec![1, 0, 1, 1]])
        .unwrap()
        .with_groups(groups)
        .unwrap()
}

/// Built-in cone by model name ("2d", "3d", "4d").
pub fn builtin_cone(name: &str) -> Result<ConeSpec> {
    match name {
        "2d" => Ok(cone_2d()),
        "3d" => Ok(cone_3d()),
        "4d" => Ok(cone_4d_grouped()),
        _ => Err(Error::InvalidArgument(format!("no built-in cone '{name}'"))),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionIViolation {
    pub vector: Vec<i64>,
    pub image: Vec<i64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionIIViolation {
    pub x: Vec<i64>,
    pub y: Vec<i64>,
    pub face: usize,
    /// Transition vectors whose (summed) rates were compared.
    pub vectors: Vec<Vec<i64>>,
    /// −1: breve rate at y must not exceed rate at x; +1: the reverse.
    pub sign: i64,
    pub eps: f64,
    pub breve_rate: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub condition_i: bool,
    pub condition_i_violations: Vec<ConditionIViolation>,
    pub condition_ii: bool,
    pub condition_ii_violations: Vec<ConditionIIViolation>,
    pub pairs_checked: usize,
    pub grouped: bool,
}

impl ComparisonReport {
    pub fn holds(&self) -> bool {
        self.condition_i && self.condition_ii
    }
}

/// Cap on the number of violations kept in a report.
pub const MAX_VIOLATIONS: usize = 200;

/// Check conditions (i) and (ii) for the pair (gen, gen_breve). Rates are
/// affine in ε, so the inequalities are checked at ε = 0 and ε = 1, which
/// covers the whole interval.
pub fn check_comparison(gen: &PerturbedGenerator, breve: &PerturbedGenerator, cone: &ConeSpec) -> Result<ComparisonReport> {
    if gen.labels != breve.labels {
        return Err(Error::Dimension("generators do not share a state space".into()));
    }
    let d = cone.dim();
    if gen.labels.iter().any(|l| l.len() != d) {
        return Err(Error::Dimension(format!("cone acts on dimension {d}, states have {}", gen.labels[0].len())));
    }
    let mut vectors = gen.transition_vectors();
    for v in breve.transition_vectors() {
        if !vectors.contains(&v) {
            vectors.push(v);
        }
    }
    vectors.sort();
    let condition_i_violations: Vec<ConditionIViolation> = vectors
        .iter()
        .map(|v| ConditionIViolation { vector: v.clone(), image: cone.apply(v) })
        .filter(|c| c.image.iter().any(|x| x.abs() > 1))
        .collect();

    // Grouping: each listed group, plus singletons for the remaining vectors.
    let mut groups: Vec<Vec<Vec<i64>>> = cone.groups.clone().unwrap_or_default();
    for v in &vectors {
        if !groups.iter().flatten().any(|g| g == v) {
            groups.push(vec![v.clone()]);
        }
    }
    let m = cone.a.len();
    let n = gen.n;
    let labels = &gen.labels;
    let per_x: Vec<(usize, Vec<ConditionIIViolation>)> = (0..n)
        .into_par_iter()
        .map(|x| {
            let mut out = Vec::new();
            let mut pairs = 0;
            for y in 0..n {
                let diff: Vec<i64> = labels[y].iter().zip(&labels[x]).map(|(a, b)| a - b).collect();
                let img = cone.apply(&diff);
                if img.iter().any(|&v| v < 0) {
                    continue;
                }
                for i in (0..m).filter(|&i| img[i] == 0) {
                    pairs += 1;
                    for g in &groups {
                        for sign in [-1i64, 1] {
                            let members: Vec<&Vec<i64>> =
                                g.iter().filter(|v| cone.row_dot(i, v).signum() == sign).collect();
                            if members.is_empty() {
                                continue;
                            }
                            for eps in [0.0, 1.0] {
                                let r: f64 = members.iter().map(|v| gen.transition_rate(x, v, eps)).sum();
                                let rb: f64 = members.iter().map(|v| breve.transition_rate(y, v, eps)).sum();
                                let slack = RATE_TOL * r.abs().max(rb.abs());
                                let bad = if sign < 0 { rb > r + slack } else { rb < r - slack };
                                if bad {
                                    out.push(ConditionIIViolation {
                                        x: labels[x].clone(),
                                        y: labels[y].clone(),
                                        face: i,
                                        vectors: members.iter().map(|v| (*v).clone()).collect(),
                                        sign,
                                        eps,
                                        breve_rate: rb,
                                        rate: r,
                                    });
                                }
                            }
                        }
                    }
                }
            }
            (pairs, out)
        })
        .collect();
    let pairs_checked = per_x.iter().map(|p| p.0).sum();
    let total_violations: usize = per_x.iter().map(|p| p.1.len()).sum();
    let condition_ii_violations: Vec<ConditionIIViolation> =
        per_x.into_iter().flat_map(|p| p.1).take(MAX_VIOLATIONS).collect();
    Ok(ComparisonReport {
        condition_i: condition_i_violations.is_empty(),
        condition_i_violations,
        condition_ii: total_violations == 0,
        condition_ii_violations,
        pairs_checked,
        grouped: cone.groups.is_some(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SetMonotonicity {
    Increasing,
    Decreasing,
    Both,
    Neither,
}

/// Classify Γ (indices into `labels`) under ≼_A by exhaustive pairwise checks.
pub fn increasing_set_check(cone: &ConeSpec, labels: &[Vec<i64>], gamma: &[usize]) -> SetMonotonicity {
    let mut in_g = vec![false; labels.len()];
    for &g in gamma {
        in_g[g] = true;
    }
    let mut inc = true;
    let mut dec = true;
    for &x in gamma {
        for (y, ly) in labels.iter().enumerate() {
            if in_g[y] {
                continue;
            }
            if cone.precedes(&labels[x], ly) {
                inc = false;
            }
            if cone.precedes(ly, &labels[x]) {
                dec = false;
            }
        }
    }
    match (inc, dec) {
        (true, true) => SetMonotonicity::Both,
        (true, false) => SetMonotonicity::Increasing,
        (false, true) => SetMonotonicity::Decreasing,
        _ => SetMonotonicity::Neither,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Quantity {
    /// Passage time from a to r.
    HAr,
    /// Passage time from r to a.
    HRa,
    PiA,
    PiR,
}

impl Quantity {
    pub fn name(self) -> &'static str {
        match self {
            Quantity::HAr => "h_ar",
            Quantity::HRa => "h_ra",
            Quantity::PiA => "pi_a",
            Quantity::PiR => "pi_r",
        }
    }

    pub const ALL: [Quantity; 4] = [Quantity::HAr, Quantity::HRa, Quantity::PiA, Quantity::PiR];
}

impl std::str::FromStr for Quantity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "h_ar" => Ok(Quantity::HAr),
            "h_ra" => Ok(Quantity::HRa),
            "pi_a" => Ok(Quantity::PiA),
            "pi_r" => Ok(Quantity::PiR),
            _ => Err(Error::InvalidArgument(format!("unknown quantity '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Monotonicity {
    Constant,
    NonDecreasing,
    NonIncreasing,
    Neither,
}

impl Monotonicity {
    pub fn is_non_decreasing(self) -> bool {
        matches!(self, Monotonicity::Constant | Monotonicity::NonDecreasing)
    }

    pub fn is_non_increasing(self) -> bool {
        matches!(self, Monotonicity::Constant | Monotonicity::NonIncreasing)
    }
}

/// Verdict with relative tolerance `tol` on consecutive differences.
pub fn monotonicity(values: &[f64], tol: f64) -> Monotonicity {
    let mut up = true;
    let mut down = true;
    for w in values.windows(2) {
        let slack = tol * w[0].abs().max(w[1].abs());
        if w[1] < w[0] - slack {
            up = false;
        }
        if w[1] > w[0] + slack {
            down = false;
        }
    }
    match (up, down) {
        (true, true) => Monotonicity::Constant,
        (true, false) => Monotonicity::NonDecreasing,
        (false, true) => Monotonicity::NonIncreasing,
        _ => Monotonicity::Neither,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub quantity: Quantity,
    pub eps: f64,
    pub parameter_values: Vec<f64>,
    pub values: Vec<f64>,
    pub verdict: Monotonicity,
}

/// Evaluate one quantity of the chain at ε.
pub fn evaluate_quantity(gen: &PerturbedGenerator, a: usize, r: usize, eps: f64, q: Quantity) -> Result<f64> {
    Ok(match q {
        Quantity::HAr => mfpt_exact(gen, eps, &[r])?[a],
        Quantity::HRa => mfpt_exact(gen, eps, &[a])?[r],
        Quantity::PiA => stationary_exact(gen, eps)?[a],
        Quantity::PiR => stationary_exact(gen, eps)?[r],
    })
}

/// `build(v)` returns the generator and the (a, r) indices at parameter value v.
pub fn monotone_sweep<F>(build: F, values: &[f64], eps: f64, quantity: Quantity) -> Result<SweepResult>
where
    F: Fn(f64) -> Result<(PerturbedGenerator, usize, usize)> + Sync,
{
    if values.is_empty() {
        return Err(Error::InvalidArgument("empty parameter grid".into()));
    }
    if values.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument("sweep values must be strictly increasing".into()));
    }
    let out: Vec<f64> = values
        .par_iter()
        .map(|&v| {
            let (g, a, r) = build(v)?;
            evaluate_quantity(&g, a, r, eps, quantity)
        })
        .collect::<Result<_>>()?;
    Ok(SweepResult {
        quantity,
        eps,
        parameter_values: values.to_vec(),
        verdict: monotonicity(&out, 1e-9),
        values: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monotonicity_verdicts() {
        assert_eq!(monotonicity(&[1.0], 1e-9), Monotonicity::Constant);
        assert_eq!(monotonicity(&[1.0, 2.0, 2.0], 1e-9), Monotonicity::NonDecreasing);
        assert_eq!(monotonicity(&[3.0, 2.0], 1e-9), Monotonicity::NonIncreasing);
        assert_eq!(monotonicity(&[1.0, 2.0, 1.0], 1e-9), Monotonicity::Neither);
    }

    #[test]
    fn cone_rejects_zero_row() {
        assert!(ConeSpec::new(vec![vec![0, 0]]).is_err());
        assert!(ConeSpec::new(vec![]).is_err());
    }

    #[test]
    fn whole_space_is_both() {
        let labels = vec![vec![0, 0], vec![1, 0], vec![0, 1]];
        assert_eq!(increasing_set_check(&cone_2d(), &labels, &[0, 1, 2]), SetMonotonicity::Both);
    }
}
