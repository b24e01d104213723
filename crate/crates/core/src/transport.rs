//! Balanced transportation problem via successive shortest paths.
//!
//! Masses are quantized to integers that sum to [`SCALE`] on each side, then
//! routed source -> supply i -> demand j -> sink with Dijkstra on reduced
//! costs. The graph is complete bipartite, so Dijkstra uses the O(V^2)
//! array form.

use crate::error::{Error, Result};

/// Integer units per unit of mass (1e-12 resolution).
pub const SCALE: i64 = 1_000_000_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct TransportSolution {
    /// `flow[i][j]` mass moved from supply i to demand j.
    pub flow: Vec<Vec<f64>>,
    pub cost: f64,
}

/// Rounds `weights` (sum ~1) to non-negative integers summing to exactly
/// `SCALE`, by largest remainder.
pub fn quantize(weights: &[f64]) -> Result<Vec<i64>> {
    let total: f64 = weights.iter().sum();
    if weights.is_empty() || !(total > 0.0) || weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::Argument("masses must be non-negative with positive sum".into()));
    }
    let scaled: Vec<f64> = weights.iter().map(|w| w / total * SCALE as f64).collect();
    let mut q: Vec<i64> = scaled.iter().map(|s| s.floor() as i64).collect();
    let mut short = SCALE - q.iter().sum::<i64>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = scaled[a] - scaled[a].floor();
        let rb = scaled[b] - scaled[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    // float rounding can leave `short` outside [0, n); cycle until balanced
    let mut k = 0;
    while short != 0 {
        let i = order[k % order.len()];
        if short > 0 {
            q[i] += 1;
            short -= 1;
        } else if q[i] > 0 {
            q[i] -= 1;
            short += 1;
        }
        k += 1;
    }
    Ok(q)
}

struct Edge {
    to: usize,
    cap: i64,
    cost: f64,
}

struct Graph {
    edges: Vec<Edge>,
    adj: Vec<Vec<usize>>,
}

impl Graph {
    fn new(n: usize) -> Self {
        Self {
            edges: Vec::new(),
            adj: vec![Vec::new(); n],
        }
    }

    fn add(&mut self, from: usize, to: usize, cap: i64, cost: f64) -> usize {
        let id = self.edges.len();
        self.edges.push(Edge { to, cap, cost });
        self.edges.push(Edge {
            to: from,
            cap: 0,
            cost: -cost,
        });
        self.adj[from].push(id);
        self.adj[to].push(id + 1);
        id
    }
}

/// Minimum-cost plan moving `supply` onto `demand` under `cost[i][j]`.
pub fn solve(supply: &[f64], demand: &[f64], cost: &[Vec<f64>]) -> Result<TransportSolution> {
    let (m, n) = (supply.len(), demand.len());
    if cost.len() != m || cost.iter().any(|row| row.len() != n) {
        return Err(Error::Argument("cost matrix shape does not match marginals".into()));
    }
    if cost.iter().flatten().any(|c| !c.is_finite() || *c < 0.0) {
        return Err(Error::Argument("costs must be finite and non-negative".into()));
    }
    let a = quantize(supply)?;
    let b = quantize(demand)?;

    let source = m + n;
    let sink = source + 1;
    let nodes = sink + 1;
    let mut g = Graph::new(nodes);
    for (i, &ai) in a.iter().enumerate() {
        g.add(source, i, ai, 0.0);
    }
    let mut arc = vec![vec![0usize; n]; m];
    for i in 0..m {
        for j in 0..n {
            arc[i][j] = g.add(i, m + j, SCALE, cost[i][j]);
        }
    }
    for (j, &bj) in b.iter().enumerate() {
        g.add(m + j, sink, bj, 0.0);
    }

    let mut potential = vec![0.0f64; nodes];
    let mut remaining = SCALE;
    let mut dist = vec![f64::INFINITY; nodes];
    let mut prev_edge = vec![usize::MAX; nodes];
    let mut done = vec![false; nodes];
    while remaining > 0 {
        dist.iter_mut().for_each(|d| *d = f64::INFINITY);
        prev_edge.iter_mut().for_each(|p| *p = usize::MAX);
        done.iter_mut().for_each(|d| *d = false);
        dist[source] = 0.0;
        loop {
            let mut u = usize::MAX;
            for v in 0..nodes {
                if !done[v] && dist[v].is_finite() && (u == usize::MAX || dist[v] < dist[u]) {
                    u = v;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            for &e in &g.adj[u] {
                let edge = &g.edges[e];
                if edge.cap <= 0 || done[edge.to] {
                    continue;
                }
                // reduced costs are >= 0 up to rounding
                let reduced = (edge.cost + potential[u] - potential[edge.to]).max(0.0);
                let nd = dist[u] + reduced;
                if nd < dist[edge.to] {
                    dist[edge.to] = nd;
                    prev_edge[edge.to] = e;
                }
            }
        }
        if !dist[sink].is_finite() {
            return Err(Error::Argument("transport network has no augmenting path".into()));
        }
        for v in 0..nodes {
            if dist[v].is_finite() {
                potential[v] += dist[v];
            }
        }
        let mut push = remaining;
        let mut v = sink;
        while v != source {
            let e = prev_edge[v];
            push = push.min(g.edges[e].cap);
            v = g.edges[e ^ 1].to;
        }
        let mut v = sink;
        while v != source {
            let e = prev_edge[v];
            g.edges[e].cap -= push;
            g.edges[e ^ 1].cap += push;
            v = g.edges[e ^ 1].to;
        }
        remaining -= push;
    }

    let mut flow = vec![vec![0.0; n]; m];
    let mut total = 0.0;
    for i in 0..m {
        for j in 0..n {
            let units = g.edges[arc[i][j] ^ 1].cap;
            if units > 0 {
                let f = units as f64 / SCALE as f64;
                flow[i][j] = f;
                total += f * cost[i][j];
            }
        }
    }
    Ok(TransportSolution { flow, cost: total })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantize_sums_exactly() {
        let q = quantize(&[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]).unwrap();
        assert_eq!(q.iter().sum::<i64>(), SCALE);
        assert!(q.iter().all(|x| (x - SCALE / 3).abs() <= 1));
        assert!(quantize(&[]).is_err());
        assert!(quantize(&[0.0, 0.0]).is_err());
        assert!(quantize(&[-0.5, 1.5]).is_err());
    }

    #[test]
    fn forced_single_cell() {
        let s = solve(&[1.0], &[1.0], &[vec![2.5]]).unwrap();
        assert_eq!(s.flow, vec![vec![1.0]]);
        assert_eq!(s.cost, 2.5);
    }

    #[test]
    fn prefers_cheap_diagonal() {
        let cost = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let s = solve(&[0.5, 0.5], &[0.5, 0.5], &cost).unwrap();
        assert_eq!(s.cost, 0.0);
        assert_eq!(s.flow[0][0], 0.5);
    }

    #[test]
    fn needs_rerouting() {
        // greedy would fill (0,0) first; optimum sends 0 -> 1 and 1 -> 0
        let cost = vec![vec![1.0, 2.0], vec![1.0, 10.0]];
        let s = solve(&[0.5, 0.5], &[0.5, 0.5], &cost).unwrap();
        assert!((s.cost - 1.5).abs() < 1e-12);
        assert!((s.flow[1][0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn shape_errors() {
        assert!(solve(&[1.0], &[1.0], &[vec![1.0, 2.0]]).is_err());
        assert!(solve(&[1.0], &[1.0], &[vec![f64::NAN]]).is_err());
    }
}
