use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{PreferenceOutcome, SystemId, SystemPair};

/// Upper bound on the number of cycles listed in an [`OrderGraph`].
pub const MAX_LISTED_CYCLES: usize = 256;

/// `from` is significantly preferred over `to`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OrderEdge {
    pub from: SystemId,
    pub to: SystemId,
}

/// Significant preferences between systems. Usually a partial order; real
/// verdicts need not be transitive, so cycles are detected and listed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderGraph {
    pub cycle_flag: bool,
    /// Simple cycles, each starting at its smallest system id. At most
    /// [`MAX_LISTED_CYCLES`] are listed.
    pub cycles: Vec<Vec<SystemId>>,
    pub edges: Vec<OrderEdge>,
    pub nodes: Vec<SystemId>,
}

impl OrderGraph {
    pub fn prefers(&self, a: &SystemId, b: &SystemId) -> bool {
        self.edges.iter().any(|e| &e.from == a && &e.to == b)
    }
}

/// Build the preference graph from per-pair verdicts (oriented from
/// `pair.first`). DRAW verdicts add no edge. A pair listed twice must agree
/// with itself.
pub fn compute_partial_order(systems: &[SystemId], verdicts: &[(SystemPair, PreferenceOutcome)]) -> Result<OrderGraph> {
    let mut nodes: BTreeSet<SystemId> = systems.iter().cloned().collect();
    let mut seen: BTreeMap<(SystemId, SystemId), PreferenceOutcome> = BTreeMap::new();
    let mut edges = BTreeSet::new();
    for (pair, verdict) in verdicts {
        if pair.first == pair.second {
            return Err(Error::invalid(format!("pair {pair} compares a system with itself")));
        }
        let (key, oriented) = if pair.first < pair.second {
            ((pair.first.clone(), pair.second.clone()), *verdict)
        } else {
            ((pair.second.clone(), pair.first.clone()), verdict.flipped())
        };
        if let Some(prev) = seen.insert(key, oriented) {
            if prev != oriented {
                return Err(Error::invalid(format!("conflicting verdicts for {pair}")));
            }
        }
        nodes.insert(pair.first.clone());
        nodes.insert(pair.second.clone());
        let edge = match verdict {
            PreferenceOutcome::Win => Some((pair.first.clone(), pair.second.clone())),
            PreferenceOutcome::Loss => Some((pair.second.clone(), pair.first.clone())),
            PreferenceOutcome::Draw => None,
        };
        if let Some((from, to)) = edge {
            edges.insert(OrderEdge { from, to });
        }
    }

    let nodes: Vec<SystemId> = nodes.into_iter().collect();
    let edges: Vec<OrderEdge> = edges.into_iter().collect();
    let cycles = simple_cycles(&nodes, &edges, MAX_LISTED_CYCLES);
    Ok(OrderGraph {
        cycle_flag: !cycles.is_empty(),
        cycles,
        edges,
        nodes,
    })
}

/// Enumerate simple cycles by depth-first search from each node, only
/// visiting nodes larger than the start so each cycle is found once.
fn simple_cycles(nodes: &[SystemId], edges: &[OrderEdge], limit: usize) -> Vec<Vec<SystemId>> {
    let index: BTreeMap<&SystemId, usize> = nodes.iter().enumerate().map(|(i, n)| (n, i)).collect();
    let mut adj = vec![Vec::new(); nodes.len()];
    for e in edges {
        adj[index[&e.from]].push(index[&e.to]);
    }

    let mut out = Vec::new();
    for start in 0..nodes.len() {
        let mut path = vec![start];
        let mut on_path = vec![false; nodes.len()];
        on_path[start] = true;
        // Stack of (node, next neighbour position).
        let mut stack = vec![(start, 0usize)];
        while let Some((v, pos)) = stack.last_mut() {
            if out.len() >= limit {
                return out;
            }
            if *pos >= adj[*v].len() {
                on_path[*v] = false;
                path.pop();
                stack.pop();
                continue;
            }
            let w = adj[*v][*pos];
            *pos += 1;
            if w == start {
                out.push(path.iter().map(|&i| nodes[i].clone()).collect());
            } else if w > start && !on_path[w] {
                on_path[w] = true;
                path.push(w);
                stack.push((w, 0));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use PreferenceOutcome::{Draw, Loss, Win};

    fn p(a: &str, b: &str) -> SystemPair {
        SystemPair::new(a, b).unwrap()
    }

    fn ids(names: &[&str]) -> Vec<SystemId> {
        names.iter().map(|n| SystemId::from(*n)).collect()
    }

    #[test]
    fn all_draws_no_edges() {
        let g = compute_partial_order(&ids(&["a", "b", "c"]), &[(p("a", "b"), Draw), (p("b", "c"), Draw)]).unwrap();
        assert!(g.edges.is_empty() && !g.cycle_flag);
        assert_eq!(g.nodes.len(), 3);
    }

    #[test]
    fn transitive_chain() {
        let g = compute_partial_order(&[], &[(p("a", "b"), Win), (p("c", "b"), Loss), (p("a", "c"), Win)]).unwrap();
        assert_eq!(g.edges.len(), 3);
        assert!(g.prefers(&"a".into(), &"b".into()) && g.prefers(&"b".into(), &"c".into()));
        assert!(!g.cycle_flag && g.cycles.is_empty());
    }

    #[test]
    fn three_cycle_listed() {
        let g = compute_partial_order(&[], &[(p("a", "b"), Win), (p("b", "c"), Win), (p("c", "a"), Win)]).unwrap();
        assert!(g.cycle_flag);
        assert_eq!(g.cycles, vec![ids(&["a", "b", "c"])]);
    }

    #[test]
    fn duplicates() {
        assert!(compute_partial_order(&[], &[(p("a", "b"), Win), (p("b", "a"), Loss)]).is_ok());
        assert!(compute_partial_order(&[], &[(p("a", "b"), Win), (p("b", "a"), Win)]).is_err());
        assert!(compute_partial_order(&[], &[(p("a", "b"), Win), (p("a", "b"), Draw)]).is_err());
    }

    #[test]
    fn cycle_count_is_capped() {
        // Tournament on 12 nodes where i beats i+1..i+5 (mod 12): many cycles.
        let names: Vec<String> = (0..12).map(|i| format!("s{i:02}")).collect();
        let mut v = Vec::new();
        for i in 0..12 {
            for d in 1..=5 {
                let j = (i + d) % 12;
                v.push((p(&names[i], &names[j]), Win));
            }
        }
        let g = compute_partial_order(&[], &v).unwrap();
        assert!(g.cycle_flag);
        assert_eq!(g.cycles.len(), MAX_LISTED_CYCLES);
    }
}
