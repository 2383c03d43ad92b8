//! Directed-graph utilities over adjacency lists.

/// Strongly connected components (iterative Tarjan). Components come out in
/// reverse topological order of the condensation: a component is emitted
/// only after every component it can reach.
pub fn tarjan_scc(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let n = adj.len();
    const UNSEEN: usize = usize::MAX;
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comps = Vec::new();
    let mut next = 0usize;
    let mut call: Vec<(usize, usize)> = Vec::new();

    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        call.push((root, 0));
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            if *pos < adj[v].len() {
                let w = adj[v][*pos];
                *pos += 1;
                if index[w] == UNSEEN {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().unwrap();
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    comp.sort_unstable();
                    comps.push(comp);
                }
            }
        }
    }
    comps
}

/// Component id per node plus a flag per component telling whether it has an
/// edge leaving it (i.e. it is not closed).
pub fn condensation(adj: &[Vec<usize>]) -> (Vec<Vec<usize>>, Vec<usize>, Vec<bool>) {
    let comps = tarjan_scc(adj);
    let mut id = vec![0; adj.len()];
    for (c, comp) in comps.iter().enumerate() {
        for &v in comp {
            id[v] = c;
        }
    }
    let mut leaves = vec![false; comps.len()];
    for (v, out) in adj.iter().enumerate() {
        if out.iter().any(|&w| id[w] != id[v]) {
            leaves[id[v]] = true;
        }
    }
    (comps, id, leaves)
}

pub fn is_strongly_connected(adj: &[Vec<usize>]) -> bool {
    adj.is_empty() || tarjan_scc(adj).len() == 1
}

/// Nodes from which some node of `targets` is reachable.
pub fn can_reach(adj: &[Vec<usize>], targets: &[usize]) -> Vec<bool> {
    let n = adj.len();
    let mut rev = vec![Vec::new(); n];
    for (v, out) in adj.iter().enumerate() {
        for &w in out {
            rev[w].push(v);
        }
    }
    let mut seen = vec![false; n];
    let mut todo: Vec<usize> = targets.to_vec();
    for &t in targets {
        seen[t] = true;
    }
    while let Some(v) = todo.pop() {
        for &u in &rev[v] {
            if !seen[u] {
                seen[u] = true;
                todo.push(u);
            }
        }
    }
    seen
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scc_simple() {
        // 0 <-> 1 -> 2 <-> 3, 4 alone
        let adj = vec![vec![1], vec![0, 2], vec![3], vec![2], vec![]];
        let mut comps = tarjan_scc(&adj);
        comps.sort();
        assert_eq!(comps, vec![vec![0, 1], vec![2, 3], vec![4]]);
        let (comps, id, leaves) = condensation(&adj);
        assert!(leaves[id[0]]);
        assert!(!leaves[id[2]]);
        assert_eq!(comps.len(), 3);
    }

    #[test]
    fn reach() {
        let adj = vec![vec![1], vec![], vec![1]];
        assert_eq!(can_reach(&adj, &[1]), vec![true, true, true]);
        assert_eq!(can_reach(&adj, &[0]), vec![true, false, false]);
    }

    #[test]
    fn deep_chain_no_overflow() {
        let n = 200_000;
        let adj: Vec<Vec<usize>> = (0..n).map(|i| vec![(i + 1) % n]).collect();
        assert!(is_strongly_connected(&adj));
    }
}
