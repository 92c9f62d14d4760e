//! Directed-graph metrics over the off-diagonal structure of a transfer
//! matrix: degree distributions, density, and diameter/radius.
//!
//! Real transfer graphs are rarely strongly connected, so eccentricities are
//! computed on the largest strongly connected component (ties broken towards
//! the component containing the smallest node id). Density and degrees use
//! the full node set.

use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq)]
pub struct GraphMetrics {
    pub n_nodes: usize,
    /// Distinct directed edges (self-loops are not edges here).
    pub n_edges: u64,
    pub avg_degree: Option<f64>,
    /// n_edges / (k(k-1)) over the full node set.
    pub density: Option<f64>,
    pub largest_scc: usize,
    /// Longest shortest path within the largest strongly connected
    /// component; `None` when the graph has fewer than two nodes.
    pub diameter: Option<i64>,
    /// Smallest eccentricity within the same component.
    pub radius: Option<i64>,
    /// In-degree -> number of nodes.
    pub in_degree_hist: BTreeMap<u64, u64>,
    pub out_degree_hist: BTreeMap<u64, u64>,
}

struct Digraph {
    n: usize,
    adj: Vec<Vec<u32>>,
    radj: Vec<Vec<u32>>,
}

impl Digraph {
    fn new(n: usize, edges: &[(u32, u32)]) -> Digraph {
        let mut adj = vec![Vec::new(); n];
        let mut radj = vec![Vec::new(); n];
        for &(u, v) in edges {
            debug_assert!((u as usize) < n && (v as usize) < n && u != v);
            adj[u as usize].push(v);
            radj[v as usize].push(u);
        }
        for list in adj.iter_mut().chain(radj.iter_mut()) {
            list.sort_unstable();
            list.dedup();
        }
        Digraph { n, adj, radj }
    }
}

/// Kosaraju with explicit stacks; recursion would overflow on long chains.
fn strongly_connected_components(g: &Digraph) -> Vec<Vec<u32>> {
    let mut order: Vec<u32> = Vec::with_capacity(g.n);
    let mut seen = vec![false; g.n];
    let mut stack: Vec<(u32, usize)> = Vec::new();
    for start in 0..g.n as u32 {
        if seen[start as usize] {
            continue;
        }
        seen[start as usize] = true;
        stack.push((start, 0));
        while let Some(&mut (v, ref mut i)) = stack.last_mut() {
            if let Some(&w) = g.adj[v as usize].get(*i) {
                *i += 1;
                if !seen[w as usize] {
                    seen[w as usize] = true;
                    stack.push((w, 0));
                }
            } else {
                order.push(v);
                stack.pop();
            }
        }
    }

    let mut comp = vec![usize::MAX; g.n];
    let mut comps: Vec<Vec<u32>> = Vec::new();
    let mut work: Vec<u32> = Vec::new();
    for &root in order.iter().rev() {
        if comp[root as usize] != usize::MAX {
            continue;
        }
        let id = comps.len();
        comp[root as usize] = id;
        work.push(root);
        let mut members = Vec::new();
        while let Some(v) = work.pop() {
            members.push(v);
            for &w in &g.radj[v as usize] {
                if comp[w as usize] == usize::MAX {
                    comp[w as usize] = id;
                    work.push(w);
                }
            }
        }
        members.sort_unstable();
        comps.push(members);
    }
    comps
}

/// Diameter and radius of the subgraph induced by `members` (which must be
/// strongly connected), by BFS from every member.
fn eccentricity_range(g: &Digraph, members: &[u32]) -> (i64, i64) {
    let mut local = vec![u32::MAX; g.n];
    for (i, &v) in members.iter().enumerate() {
        local[v as usize] = i as u32;
    }
    let m = members.len();
    let sub: Vec<Vec<u32>> = members
        .iter()
        .map(|&v| {
            g.adj[v as usize]
                .iter()
                .filter_map(|&w| (local[w as usize] != u32::MAX).then(|| local[w as usize]))
                .collect()
        })
        .collect();

    let mut diameter = 0i64;
    let mut radius = i64::MAX;
    let mut dist = vec![u32::MAX; m];
    let mut queue = std::collections::VecDeque::new();
    for src in 0..m {
        dist.iter_mut().for_each(|d| *d = u32::MAX);
        dist[src] = 0;
        queue.clear();
        queue.push_back(src as u32);
        let mut ecc = 0u32;
        while let Some(v) = queue.pop_front() {
            let d = dist[v as usize];
            ecc = ecc.max(d);
            for &w in &sub[v as usize] {
                if dist[w as usize] == u32::MAX {
                    dist[w as usize] = d + 1;
                    queue.push_back(w);
                }
            }
        }
        debug_assert!(dist.iter().all(|&d| d != u32::MAX), "component not strongly connected");
        diameter = diameter.max(ecc as i64);
        radius = radius.min(ecc as i64);
    }
    (diameter, radius)
}

pub fn compute_metrics(n: usize, edges: &[(u32, u32)]) -> GraphMetrics {
    let g = Digraph::new(n, edges);
    let n_edges: u64 = g.adj.iter().map(|l| l.len() as u64).sum();

    let mut in_deg: BTreeMap<u64, u64> = BTreeMap::new();
    let mut out_deg: BTreeMap<u64, u64> = BTreeMap::new();
    for v in 0..n {
        *out_deg.entry(g.adj[v].len() as u64).or_insert(0) += 1;
        *in_deg.entry(g.radj[v].len() as u64).or_insert(0) += 1;
    }

    let (largest_scc, diameter, radius) = if n == 0 {
        (0, None, None)
    } else {
        let comps = strongly_connected_components(&g);
        let best = comps
            .iter()
            .max_by_key(|c| (c.len(), std::cmp::Reverse(c[0])))
            .expect("n > 0 yields at least one component");
        if n < 2 {
            (best.len(), None, None)
        } else {
            let (d, r) = eccentricity_range(&g, best);
            (best.len(), Some(d), Some(r))
        }
    };

    GraphMetrics {
        n_nodes: n,
        n_edges,
        avg_degree: if n > 0 { Some(n_edges as f64 / n as f64) } else { None },
        density: if n > 1 { Some(n_edges as f64 / (n as f64 * (n as f64 - 1.0))) } else { None },
        largest_scc,
        diameter,
        radius,
        in_degree_hist: in_deg,
        out_degree_hist: out_deg,
    }
}
