use perturbmc::comparison::{
    check_comparison, cone_2d, cone_3d, cone_4d_grouped, increasing_set_check, monotonicity, Monotonicity,
    SetMonotonicity,
};
use perturbmc::{build_chromatin_model, ChromatinModel, ChromatinParams, ModelKind};

fn build(kind: ModelKind, d: u32, f: impl FnOnce(&mut ChromatinParams)) -> ChromatinModel {
    let mut p = ChromatinParams::new(kind, d);
    f(&mut p);
    build_chromatin_model(&p).unwrap()
}

#[test]
fn two_d_holds_for_larger_mu() {
    for (hi, lo) in [(1.5, 1.0), (3.0, 0.5), (1.0, 1.0)] {
        let g = build(ModelKind::TwoD, 4, |p| p.mu = hi);
        let b = build(ModelKind::TwoD, 4, |p| p.mu = lo);
        let rep = check_comparison(&g.generator, &b.generator, &cone_2d()).unwrap();
        assert!(rep.holds(), "mu {hi} vs {lo}: {rep:?}");
        assert!(rep.pairs_checked > 0);
    }
}

#[test]
fn two_d_fails_when_mu_is_smaller() {
    let g = build(ModelKind::TwoD, 3, |p| p.mu = 0.5);
    let b = build(ModelKind::TwoD, 3, |p| p.mu = 2.0);
    let rep = check_comparison(&g.generator, &b.generator, &cone_2d()).unwrap();
    assert!(!rep.holds());
    assert!(!rep.condition_ii && !rep.condition_ii_violations.is_empty());
}

#[test]
fn three_d_holds_for_larger_mu_prime() {
    let g = build(ModelKind::ThreeD, 3, |p| p.mu_prime = 2.5);
    let b = build(ModelKind::ThreeD, 3, |p| p.mu_prime = 0.8);
    assert!(check_comparison(&g.generator, &b.generator, &cone_3d()).unwrap().holds());
}

#[test]
fn four_d_grouped_needs_zero_kw1_kw2() {
    let set = |p: &mut ChromatinParams, kw: f64, mup: f64| {
        p.approx_4d = true;
        p.k_w1 = kw;
        p.k_w2 = kw;
        p.mu_prime = mup;
    };
    let g = build(ModelKind::FourD, 2, |p| set(p, 0.0, 2.0));
    let b = build(ModelKind::FourD, 2, |p| set(p, 0.0, 1.0));
    assert!(check_comparison(&g.generator, &b.generator, &cone_4d_grouped()).unwrap().holds());

    let g = build(ModelKind::FourD, 2, |p| set(p, 1.0, 2.0));
    let b = build(ModelKind::FourD, 2, |p| set(p, 1.0, 1.0));
    let rep = check_comparison(&g.generator, &b.generator, &cone_4d_grouped()).unwrap();
    assert!(!rep.holds());
}

#[test]
fn extreme_states_are_monotone_sets() {
    let m = build(ModelKind::TwoD, 4, |_| {});
    let labels = &m.generator.labels;
    let cone = cone_2d();
    assert_eq!(increasing_set_check(&cone, labels, &[m.r]), SetMonotonicity::Increasing);
    assert_eq!(increasing_set_check(&cone, labels, &[m.a]), SetMonotonicity::Decreasing);
    let all: Vec<usize> = (0..labels.len()).collect();
    assert_eq!(increasing_set_check(&cone, labels, &all), SetMonotonicity::Both);
}

#[test]
fn cone_order_basics() {
    let c = cone_2d();
    // More DR and less DA is higher.
    assert!(c.precedes(&[0, 2], &[1, 1]));
    assert!(!c.precedes(&[1, 1], &[0, 2]));
    assert!(c.precedes(&[1, 1], &[1, 1]));
}

#[test]
fn monotonicity_verdicts() {
    assert_eq!(monotonicity(&[1.0, 2.0, 2.0, 3.0], 1e-12), Monotonicity::NonDecreasing);
    assert_eq!(monotonicity(&[3.0, 2.0, 1.0], 1e-12), Monotonicity::NonIncreasing);
    assert_eq!(monotonicity(&[1.0, 3.0, 2.0], 1e-12), Monotonicity::Neither);
    assert_eq!(monotonicity(&[1.0, 1.0], 1e-12), Monotonicity::Constant);
}
