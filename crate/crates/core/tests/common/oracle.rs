//! Brute-force transport oracle and random WMD instances.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use stance::embeddings::{EmbeddingTable, NBowDistribution};

/// Min cost over all basic feasible solutions. Each basis is a spanning
/// tree of the bipartite row/column graph (m + n - 1 cells); its flows are
/// forced by peeling leaves.
pub fn brute_force(a: &[f64], b: &[f64], cost: &[Vec<f64>]) -> f64 {
    let (m, n) = (a.len(), b.len());
    let cells: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let need = m + n - 1;
    let mut best = f64::INFINITY;
    let mut pick = Vec::with_capacity(need);
    fn choose(
        start: usize,
        need: usize,
        cells: &[(usize, usize)],
        pick: &mut Vec<(usize, usize)>,
        visit: &mut dyn FnMut(&[(usize, usize)]),
    ) {
        if pick.len() == need {
            visit(pick);
            return;
        }
        for k in start..cells.len() {
            if cells.len() - k < need - pick.len() {
                break;
            }
            pick.push(cells[k]);
            choose(k + 1, need, cells, pick, visit);
            pick.pop();
        }
    }
    let mut visit = |basis: &[(usize, usize)]| {
        if let Some(flow) = peel(a, b, basis) {
            let c: f64 = basis.iter().zip(&flow).map(|(&(i, j), f)| f * cost[i][j]).sum();
            best = best.min(c);
        }
    };
    choose(0, need, &cells, &mut pick, &mut visit);
    best
}

fn peel(a: &[f64], b: &[f64], basis: &[(usize, usize)]) -> Option<Vec<f64>> {
    let m = a.len();
    let mut supply: Vec<f64> = a.iter().chain(b).copied().collect();
    let mut live = vec![true; basis.len()];
    let mut flow = vec![0.0; basis.len()];
    for _ in 0..basis.len() {
        let mut degree = vec![0usize; supply.len()];
        for (k, &(i, j)) in basis.iter().enumerate() {
            if live[k] {
                degree[i] += 1;
                degree[m + j] += 1;
            }
        }
        // a live cell with a leaf endpoint; none means the basis has a cycle
        let (k, leaf, other) = basis.iter().enumerate().find_map(|(k, &(i, j))| {
            if !live[k] {
                None
            } else if degree[i] == 1 {
                Some((k, i, m + j))
            } else if degree[m + j] == 1 {
                Some((k, m + j, i))
            } else {
                None
            }
        })?;
        flow[k] = supply[leaf];
        supply[other] -= supply[leaf];
        supply[leaf] = 0.0;
        live[k] = false;
    }
    let balanced = supply.iter().all(|s| s.abs() < 1e-9);
    let feasible = flow.iter().all(|f| *f >= -1e-12);
    (balanced && feasible).then_some(flow)
}

fn random_weights(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|r| r / s).collect()
}

/// Random table with `m + n` terms in `dim` dimensions and the two
/// distributions over its first m and last n terms.
pub fn instance(
    rng: &mut ChaCha8Rng,
    m: usize,
    n: usize,
    dim: usize,
) -> (EmbeddingTable, NBowDistribution, NBowDistribution) {
    let mut table = EmbeddingTable::new(dim);
    let names: Vec<String> = (0..m + n).map(|k| format!("w{k}")).collect();
    for name in &names {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        table.insert(name.clone(), &v).unwrap();
    }
    let src = NBowDistribution::new(names[..m].to_vec(), random_weights(rng, m)).unwrap();
    let dst = NBowDistribution::new(names[m..].to_vec(), random_weights(rng, n)).unwrap();
    (table, src, dst)
}

pub fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

pub fn cost(table: &EmbeddingTable, a: &NBowDistribution, b: &NBowDistribution) -> Vec<Vec<f64>> {
    a.terms()
        .iter()
        .map(|s| {
            b.terms()
                .iter()
                .map(|t| euclid(table.get(s).unwrap(), table.get(t).unwrap()))
                .collect()
        })
        .collect()
}
