//! Orders of the poles of mean first passage times by graph condensation,
//! and the orders of the stationary probabilities derived from them.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::generator::PerturbedGenerator;
use crate::graph::{can_reach, tarjan_scc};
use crate::linalg::EDGE_TOL;

/// Directed edge (x, y) with the ε-order of Q_xy.
pub type OrderEdge = (usize, usize, i64);

/// k_xy = 0 when Q0_xy > 0, 1 when only Q1_xy > 0; absent edges are omitted.
pub fn edge_orders(gen: &PerturbedGenerator) -> Vec<OrderEdge> {
    let mut out = Vec::new();
    for x in 0..gen.n {
        for y in 0..gen.n {
            if x == y {
                continue;
            }
            if gen.q0[(x, y)] > EDGE_TOL {
                out.push((x, y, 0));
            } else if gen.q1[(x, y)] > EDGE_TOL {
                out.push((x, y, 1));
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct PoleOrderResult {
    pub target: Vec<usize>,
    /// p(x) for x outside the target; None on the target.
    pub orders: Vec<Option<i64>>,
    /// Condensation snapshots, one record per line.
    pub trace: Vec<String>,
    /// Number of Step 3 condensations performed.
    pub condensations: usize,
    /// p values in the order nodes were fixed in Step 4.
    pub fixed_sequence: Vec<i64>,
}

impl PoleOrderResult {
    pub fn order(&self, x: usize) -> Option<i64> {
        self.orders.get(x).copied().flatten()
    }
}

pub fn pole_orders(gen: &PerturbedGenerator, target: &[usize]) -> Result<PoleOrderResult> {
    pole_orders_graph(gen.n, &edge_orders(gen), target)
}

struct OrderGraph {
    alive: Vec<bool>,
    p: Vec<i64>,
    members: Vec<Vec<usize>>,
    out: Vec<BTreeMap<usize, i64>>,
    inc: Vec<BTreeSet<usize>>,
}

impl OrderGraph {
    fn add_node(&mut self, p: i64, members: Vec<usize>) -> usize {
        self.alive.push(true);
        self.p.push(p);
        self.members.push(members);
        self.out.push(BTreeMap::new());
        self.inc.push(BTreeSet::new());
        self.alive.len() - 1
    }

    fn set_edge(&mut self, u: usize, v: usize, k: i64) {
        self.out[u].insert(v, k);
        self.inc[v].insert(u);
    }

    fn remove_node(&mut self, u: usize) {
        self.alive[u] = false;
        for v in std::mem::take(&mut self.out[u]).into_keys() {
            self.inc[v].remove(&u);
        }
        for w in std::mem::take(&mut self.inc[u]) {
            self.out[w].remove(&u);
        }
    }

    fn min_member(&self, u: usize) -> usize {
        self.members[u].iter().copied().min().unwrap_or(usize::MAX)
    }

    fn snapshot(&self, tag: &str, a: usize, trace: &mut Vec<String>) {
        for u in (0..self.alive.len()).filter(|&u| self.alive[u]) {
            let name = if u == a { "a".to_string() } else { format!("n{u}") };
            let p = if u == a { "-".to_string() } else { self.p[u].to_string() };
            trace.push(format!("{tag} node {name} p={p} S={:?}", self.members[u]));
            for (&v, &k) in &self.out[u] {
                let vn = if v == a { "a".to_string() } else { format!("n{v}") };
                trace.push(format!("{tag} edge {name} -> {vn} K={k}"));
            }
        }
    }
}

/// Pole orders on an explicit weighted digraph over states 0..n.
pub fn pole_orders_graph(n: usize, edges: &[OrderEdge], target: &[usize]) -> Result<PoleOrderResult> {
    let mut in_b = vec![false; n];
    for &b in target {
        if b >= n {
            return Err(Error::InvalidArgument(format!("target state {b} out of range")));
        }
        in_b[b] = true;
    }
    let nb = in_b.iter().filter(|&&v| v).count();
    if nb == 0 || nb == n {
        return Err(Error::InvalidArgument("target set must be nonempty and proper".into()));
    }
    if let Some(e) = edges.iter().find(|e| e.2 < 0 || e.0 == e.1 || e.0 >= n || e.1 >= n) {
        return Err(Error::InvalidArgument(format!("bad order edge {e:?}")));
    }
    let mut adj = vec![Vec::new(); n];
    for &(x, y, _) in edges {
        adj[x].push(y);
    }
    let targets: Vec<usize> = (0..n).filter(|&i| in_b[i]).collect();
    let reach = can_reach(&adj, &targets);
    if let Some(x) = (0..n).find(|&x| !reach[x]) {
        return Err(Error::DisconnectedFromB { state: x });
    }

    let mut trace = Vec::new();
    // Step 1: sojourn orders and one-step transition orders.
    let mut p0 = vec![i64::MAX; n];
    for &(x, _, k) in edges {
        p0[x] = p0[x].min(k);
    }
    let mut g = OrderGraph { alive: vec![], p: vec![], members: vec![], out: vec![], inc: vec![] };
    for x in 0..n {
        if !in_b[x] {
            g.add_node(p0[x], vec![x]);
        } else {
            // Placeholder keeping node ids equal to state ids.
            g.add_node(0, vec![]);
            g.alive[x] = false;
        }
    }
    // Step 2: merge the target into a sink a.
    let a = g.add_node(0, targets.clone());
    for &(x, y, k) in edges {
        if in_b[x] {
            continue;
        }
        let kk = k - p0[x];
        let dst = if in_b[y] { a } else { y };
        let cur = g.out[x].get(&dst).copied();
        if cur.map_or(true, |c| kk < c) {
            g.set_edge(x, dst, kk);
        }
    }
    g.snapshot("step2", a, &mut trace);

    // Step 3: condense r-connected sets, rescanning after each condensation.
    let mut condensations = 0;
    loop {
        let live: Vec<usize> = (0..g.alive.len()).filter(|&u| g.alive[u] && u != a).collect();
        let mut pos = vec![usize::MAX; g.alive.len()];
        for (i, &u) in live.iter().enumerate() {
            pos[u] = i;
        }
        let radj: Vec<Vec<usize>> = live
            .iter()
            .map(|&u| {
                g.out[u]
                    .iter()
                    .filter(|(&v, &k)| k == 0 && v != a && pos[v] != usize::MAX)
                    .map(|(&v, _)| pos[v])
                    .collect()
            })
            .collect();
        let comps = tarjan_scc(&radj);
        let best = comps
            .iter()
            .filter(|c| c.len() > 1)
            .map(|c| c.iter().map(|&i| live[i]).collect::<Vec<usize>>())
            .min_by_key(|c| (std::cmp::Reverse(c.len()), c.iter().map(|&u| g.min_member(u)).min().unwrap()));
        let Some(cset) = best else { break };
        let in_c: BTreeSet<usize> = cset.iter().copied().collect();
        let mut exit_min = i64::MAX;
        let mut out_min: BTreeMap<usize, i64> = BTreeMap::new();
        let mut in_min: BTreeMap<usize, i64> = BTreeMap::new();
        for &u in &cset {
            for (&v, &k) in &g.out[u] {
                if !in_c.contains(&v) {
                    exit_min = exit_min.min(k);
                    let e = out_min.entry(v).or_insert(k);
                    *e = (*e).min(k);
                }
            }
            for &w in &g.inc[u] {
                if !in_c.contains(&w) {
                    let k = g.out[w][&u];
                    let e = in_min.entry(w).or_insert(k);
                    *e = (*e).min(k);
                }
            }
        }
        if exit_min == i64::MAX {
            return Err(Error::DisconnectedFromB { state: g.min_member(cset[0]) });
        }
        let pmax = cset.iter().map(|&u| g.p[u]).max().unwrap();
        let mut members: Vec<usize> = cset.iter().flat_map(|&u| g.members[u].clone()).collect();
        members.sort_unstable();
        for &u in &cset {
            g.remove_node(u);
        }
        let c = g.add_node(pmax + exit_min, members);
        for (w, k) in out_min {
            g.set_edge(c, w, k - exit_min);
        }
        for (w, k) in in_min {
            g.set_edge(w, c, k);
        }
        condensations += 1;
        trace.push(format!(
            "step3 condense {:?} -> n{c} p={} exit={exit_min}",
            g.members[c],
            g.p[c]
        ));
        g.snapshot(&format!("step3.{condensations}"), a, &mut trace);
    }

    // Step 4: fix nodes in decreasing order of p.
    let mut orders = vec![None; n];
    let mut fixed_sequence = Vec::new();
    loop {
        let vstar = (0..g.alive.len())
            .filter(|&u| g.alive[u] && u != a)
            .min_by_key(|&u| (std::cmp::Reverse(g.p[u]), g.min_member(u)));
        let Some(v) = vstar else { break };
        let pv = g.p[v];
        for &x in &g.members[v] {
            orders[x] = Some(pv);
        }
        fixed_sequence.push(pv);
        trace.push(format!("step4 fix n{v} p={pv} S={:?}", g.members[v]));
        let preds: Vec<usize> = g.inc[v].iter().copied().collect();
        for u in preds {
            let k = g.out[u][&v];
            g.p[u] = g.p[u].max(pv - k);
        }
        g.remove_node(v);
    }
    Ok(PoleOrderResult { target: targets, orders, trace, condensations, fixed_sequence })
}

/// Pole orders toward every singleton target {y}, computed in parallel.
/// Entry y holds the orders of h_{x,y} for all x.
pub fn pole_orders_all_singletons(gen: &PerturbedGenerator) -> Result<Vec<PoleOrderResult>> {
    let edges = edge_orders(gen);
    (0..gen.n).into_par_iter().map(|y| pole_orders_graph(gen.n, &edges, &[y])).collect()
}

/// k_x = max{p_x(y) − k_xy : (x, y) ∈ E0; 0}, where p_x(y) is the pole order
/// of the passage time from y to {x}.
pub fn stationary_orders(gen: &PerturbedGenerator, toward: &[PoleOrderResult]) -> Vec<i64> {
    let edges = edge_orders(gen);
    let mut k = vec![0i64; gen.n];
    for &(x, y, kxy) in &edges {
        if let Some(p) = toward[x].order(y) {
            k[x] = k[x].max(p - kxy);
        }
    }
    k
}

/// k_y for a single state, from the pole orders toward {y}.
pub fn stationary_order_of(gen: &PerturbedGenerator, y: usize) -> Result<i64> {
    let edges = edge_orders(gen);
    let toward = pole_orders_graph(gen.n, &edges, &[y])?;
    Ok(edges
        .iter()
        .filter(|e| e.0 == y)
        .filter_map(|&(_, z, k)| toward.order(z).map(|p| p - k))
        .fold(0, i64::max))
}

/// Stationary orders of all states.
pub fn stationary_orders_all(gen: &PerturbedGenerator) -> Result<Vec<i64>> {
    let toward = pole_orders_all_singletons(gen)?;
    Ok(stationary_orders(gen, &toward))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn birth_death_chain() {
        // 0 ->(ε) 1 <->(1) 2 <->(1) 3, 3 ->(ε) 2, 1 -> 0 at order 0.
        let e = vec![(0, 1, 1), (1, 0, 0), (1, 2, 0), (2, 1, 0), (2, 3, 0), (3, 2, 1)];
        let r = pole_orders_graph(4, &e, &[3]).unwrap();
        assert_eq!(r.orders, vec![Some(1), Some(1), Some(1), None]);
        assert_eq!(r.condensations, 1);
    }

    #[test]
    fn disconnected() {
        let e = vec![(0, 1, 0), (1, 0, 0)];
        assert!(matches!(pole_orders_graph(3, &e, &[2]), Err(Error::DisconnectedFromB { .. })));
    }

    #[test]
    fn rejects_bad_targets() {
        let e = vec![(0, 1, 0), (1, 0, 0)];
        assert!(pole_orders_graph(2, &e, &[]).is_err());
        assert!(pole_orders_graph(2, &e, &[0, 1]).is_err());
    }

    #[test]
    fn general_integer_orders() {
        // Single path with order-3 first step.
        let e = vec![(0, 1, 3), (1, 0, 0), (1, 2, 0)];
        let r = pole_orders_graph(3, &e, &[2]).unwrap();
        assert_eq!(r.order(0), Some(3));
        // From 1 the walk falls back to 0 with probability 1/2 each time.
        assert_eq!(r.order(1), Some(3));
    }
}
