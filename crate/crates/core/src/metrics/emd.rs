//! Earth mover's distance between two maps viewed as mass distributions.
//!
//! Both maps are block-averaged onto a coarse grid, normalized to unit mass,
//! and the minimum-cost transport with Euclidean ground distance between
//! cell centers is solved exactly by successive shortest augmenting paths
//! with node potentials on the bipartite supply/demand graph. Mass common to
//! both distributions is left in place first; with a metric ground distance
//! this never changes the optimum and it keeps the graph small.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use crate::error::{Error, Result};

use super::SaliencyMap;

/// Largest number of grid cells per map the solver accepts.
pub const MAX_CELLS: usize = 1024;

const MASS_EPS: f64 = 1e-14;

/// EMD between `pred` and `gt` after downsampling both by `grid_downsample`.
pub fn emd(pred: &SaliencyMap, gt: &SaliencyMap, grid_downsample: usize) -> Result<f64> {
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(Error::ShapeMismatch(format!(
            "emd: {}x{} vs {}x{}",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height()
        )));
    }
    let p = pred.downsample(grid_downsample)?;
    let q = gt.downsample(grid_downsample)?;
    let cells = p.width() * p.height();
    if cells > MAX_CELLS {
        return Err(Error::InvalidArgument(format!(
            "emd: {cells} cells after downsampling exceeds the guard of {MAX_CELLS}"
        )));
    }
    let pv = normalize(p.values(), "emd")?;
    let qv = normalize(q.values(), "emd")?;

    // Transport only the residual mass.
    let width = p.width();
    let mut supplies = Vec::new(); // (cell, mass)
    let mut demands = Vec::new();
    for i in 0..cells {
        let common = pv[i].min(qv[i]);
        let s = pv[i] - common;
        let d = qv[i] - common;
        if s > 0.0 {
            supplies.push((i, s));
        }
        if d > 0.0 {
            demands.push((i, d));
        }
    }
    if supplies.is_empty() || demands.is_empty() {
        return Ok(0.0);
    }
    let dist = |a: usize, b: usize| -> f64 {
        let (ax, ay) = ((a % width) as f64, (a / width) as f64);
        let (bx, by) = ((b % width) as f64, (b / width) as f64);
        ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt()
    };
    min_cost_transport(&supplies, &demands, dist)
}

fn normalize(values: &[f64], what: &str) -> Result<Vec<f64>> {
    if values.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "{what}: negative mass in map"
        )));
    }
    let s: f64 = values.iter().sum();
    if s <= 0.0 {
        return Err(Error::DegenerateInput(format!(
            "{what}: map has zero total mass"
        )));
    }
    Ok(values.iter().map(|&v| v / s).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum NodeRef {
    Supply(usize),
    Demand(usize),
}

#[derive(Debug)]
struct HeapItem {
    dist: f64,
    node: NodeRef,
}

impl PartialEq for HeapItem {
    fn eq(&self, other: &Self) -> bool {
        self.dist == other.dist
    }
}
impl Eq for HeapItem {}
impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap by distance.
        other.dist.total_cmp(&self.dist)
    }
}
impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Exact bipartite transport via successive shortest paths with potentials.
fn min_cost_transport(
    supplies: &[(usize, f64)],
    demands: &[(usize, f64)],
    cell_dist: impl Fn(usize, usize) -> f64,
) -> Result<f64> {
    let ns = supplies.len();
    let nd = demands.len();
    let cost = |i: usize, j: usize| cell_dist(supplies[i].0, demands[j].0);

    let mut remaining_s: Vec<f64> = supplies.iter().map(|&(_, m)| m).collect();
    let mut remaining_d: Vec<f64> = demands.iter().map(|&(_, m)| m).collect();
    // flow[j] maps supply index -> shipped mass into demand j.
    let mut flow: Vec<HashMap<usize, f64>> = vec![HashMap::new(); nd];
    let mut pi_s = vec![0.0f64; ns];
    let mut pi_d = vec![0.0f64; nd];
    let mut pi_t = 0.0f64;

    let max_rounds = 16 * (ns + nd) + 64;
    for _round in 0..max_rounds {
        let total_left: f64 = remaining_s.iter().sum();
        if total_left <= MASS_EPS {
            break;
        }

        // Dijkstra over reduced costs from the implicit source.
        let mut dist_s = vec![f64::INFINITY; ns];
        let mut dist_d = vec![f64::INFINITY; nd];
        let mut prev_s: Vec<Option<usize>> = vec![None; ns]; // demand that reached this supply
        let mut prev_d: Vec<Option<usize>> = vec![None; nd]; // supply that reached this demand
        let mut done_s = vec![false; ns];
        let mut done_d = vec![false; nd];
        let mut heap = BinaryHeap::new();
        for i in 0..ns {
            if remaining_s[i] > 0.0 {
                dist_s[i] = -pi_s[i];
                heap.push(HeapItem {
                    dist: dist_s[i],
                    node: NodeRef::Supply(i),
                });
            }
        }
        while let Some(HeapItem { dist, node }) = heap.pop() {
            match node {
                NodeRef::Supply(i) => {
                    if done_s[i] || dist > dist_s[i] {
                        continue;
                    }
                    done_s[i] = true;
                    for j in 0..nd {
                        if done_d[j] {
                            continue;
                        }
                        let rc = cost(i, j) + pi_s[i] - pi_d[j];
                        let cand = dist + rc;
                        if cand < dist_d[j] {
                            dist_d[j] = cand;
                            prev_d[j] = Some(i);
                            heap.push(HeapItem {
                                dist: cand,
                                node: NodeRef::Demand(j),
                            });
                        }
                    }
                }
                NodeRef::Demand(j) => {
                    if done_d[j] || dist > dist_d[j] {
                        continue;
                    }
                    done_d[j] = true;
                    for (&i, &f) in &flow[j] {
                        if f <= 0.0 || done_s[i] {
                            continue;
                        }
                        let rc = -cost(i, j) + pi_d[j] - pi_s[i];
                        let cand = dist + rc;
                        if cand < dist_s[i] {
                            dist_s[i] = cand;
                            prev_s[i] = Some(j);
                            heap.push(HeapItem {
                                dist: cand,
                                node: NodeRef::Supply(i),
                            });
                        }
                    }
                }
            }
        }

        // Cheapest open demand terminates the path.
        let mut best: Option<(usize, f64)> = None;
        for j in 0..nd {
            if remaining_d[j] > 0.0 && dist_d[j].is_finite() {
                let through = dist_d[j] + (pi_d[j] - pi_t);
                if best.map_or(true, |(_, b)| through < b) {
                    best = Some((j, through));
                }
            }
        }
        let Some((target, dist_t)) = best else {
            // Numerical dust can leave unmatched remainders below tolerance.
            if total_left <= 1e-9 {
                break;
            }
            return Err(Error::Graph(format!(
                "emd: no augmenting path with {total_left:.3e} mass left"
            )));
        };

        // Recover the alternating path back to the source supply.
        let mut path_supplies = Vec::new();
        let mut path_demands = Vec::new();
        let mut j = target;
        loop {
            path_demands.push(j);
            let i = prev_d[j].expect("demand reached from a supply");
            path_supplies.push(i);
            match prev_s[i] {
                Some(back_j) => j = back_j,
                None => break,
            }
        }
        // path_supplies/path_demands run from the sink back to the source.
        let source = *path_supplies.last().unwrap();
        let mut delta = remaining_s[source].min(remaining_d[target]);
        for k in 0..path_supplies.len() - 1 {
            // Reverse arc from demand path_demands[k+1] into supply path_supplies[k].
            let f = flow[path_demands[k + 1]][&path_supplies[k]];
            delta = delta.min(f);
        }
        debug_assert!(delta > 0.0);

        for k in 0..path_supplies.len() {
            let (i, j) = (path_supplies[k], path_demands[k]);
            *flow[j].entry(i).or_insert(0.0) += delta;
            if k + 1 < path_supplies.len() {
                let back = flow[path_demands[k + 1]]
                    .get_mut(&path_supplies[k])
                    .unwrap();
                *back -= delta;
                if *back <= 0.0 {
                    flow[path_demands[k + 1]].remove(&path_supplies[k]);
                }
            }
        }
        remaining_s[source] -= delta;
        remaining_d[target] -= delta;

        // Johnson potential update keeps reduced costs nonnegative.
        for i in 0..ns {
            pi_s[i] += dist_s[i].min(dist_t);
        }
        for j in 0..nd {
            pi_d[j] += dist_d[j].min(dist_t);
        }
        pi_t += dist_t;
    }

    let total_left: f64 = remaining_s.iter().sum();
    if total_left > 1e-9 {
        return Err(Error::Graph(format!(
            "emd: solver did not converge, {total_left:.3e} mass left"
        )));
    }

    let mut total = 0.0;
    for (j, per_supply) in flow.iter().enumerate() {
        for (&i, &f) in per_supply {
            total += f * cost(i, j);
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(w: usize, h: usize, v: Vec<f64>) -> SaliencyMap {
        SaliencyMap::new(w, h, v).unwrap()
    }

    #[test]
    fn identical_maps_are_zero() {
        let m = map(4, 4, (1..=16).map(|i| i as f64).collect());
        assert!(emd(&m, &m, 1).unwrap().abs() < 1e-12);
        assert!(emd(&m, &m, 2).unwrap().abs() < 1e-12);
    }

    #[test]
    fn single_cell_shift_costs_the_distance() {
        // All mass at cell (0,0) vs all mass at cell (3,0) on a 4x1 grid.
        let a = map(4, 1, vec![1.0, 0.0, 0.0, 0.0]);
        let b = map(4, 1, vec![0.0, 0.0, 0.0, 1.0]);
        let v = emd(&a, &b, 1).unwrap();
        assert!((v - 3.0).abs() < 1e-12);
    }

    #[test]
    fn diagonal_shift_is_euclidean() {
        let mut av = vec![0.0; 16];
        let mut bv = vec![0.0; 16];
        av[0] = 2.0; // (0,0)
        bv[3 * 4 + 3] = 5.0; // (3,3); scale differs, normalization absorbs it
        let v = emd(&map(4, 4, av), &map(4, 4, bv), 1).unwrap();
        assert!((v - (18.0f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn split_mass_weighted_average() {
        // Half the mass moves distance 1, half distance 2.
        let a = map(3, 1, vec![1.0, 0.0, 0.0]);
        let b = map(3, 1, vec![0.0, 0.5, 0.5]);
        let v = emd(&a, &b, 1).unwrap();
        assert!((v - 1.5).abs() < 1e-12);
    }

    #[test]
    fn symmetric_in_its_arguments() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            let av: Vec<f64> = (0..9).map(|_| rng.gen_range(0.0..1.0)).collect();
            let bv: Vec<f64> = (0..9).map(|_| rng.gen_range(0.0..1.0)).collect();
            let a = map(3, 3, av);
            let b = map(3, 3, bv);
            let ab = emd(&a, &b, 1).unwrap();
            let ba = emd(&b, &a, 1).unwrap();
            assert!((ab - ba).abs() < 1e-9, "{ab} vs {ba}");
        }
    }

    #[test]
    fn rescaling_either_map_changes_nothing() {
        let a = map(3, 3, (1..=9).map(|i| i as f64 * 0.1).collect());
        let b = map(3, 3, (1..=9).rev().map(|i| i as f64 * 0.1).collect());
        let base = emd(&a, &b, 1).unwrap();
        let a5 = a.map(|v| 5.0 * v).unwrap();
        let b03 = b.map(|v| 0.3 * v).unwrap();
        assert!((emd(&a5, &b, 1).unwrap() - base).abs() < 1e-9);
        assert!((emd(&a, &b03, 1).unwrap() - base).abs() < 1e-9);
    }

    #[test]
    fn triangle_inequality_on_random_triples() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        for _ in 0..15 {
            let mk = |rng: &mut rand_chacha::ChaCha8Rng| {
                let v: Vec<f64> = (0..9).map(|_| rng.gen_range(0.01..1.0)).collect();
                map(3, 3, v)
            };
            let a = mk(&mut rng);
            let b = mk(&mut rng);
            let c = mk(&mut rng);
            let ab = emd(&a, &b, 1).unwrap();
            let bc = emd(&b, &c, 1).unwrap();
            let ac = emd(&a, &c, 1).unwrap();
            assert!(ac <= ab + bc + 1e-9, "{ac} > {ab} + {bc}");
        }
    }

    #[test]
    fn cell_guard_enforced() {
        let m = map(64, 64, vec![1.0; 4096]);
        assert!(emd(&m, &m, 1).is_err());
        assert!(emd(&m, &m, 2).is_ok());
    }

    #[test]
    fn zero_mass_map_rejected() {
        let a = map(2, 2, vec![0.0; 4]);
        let b = map(2, 2, vec![1.0; 4]);
        assert!(emd(&a, &b, 1).is_err());
    }

    #[test]
    fn downsampling_pools_before_transport() {
        // 4x4 with mass in opposite corners; factor 2 pools to 2x2 first.
        let mut av = vec![0.0; 16];
        let mut bv = vec![0.0; 16];
        av[0] = 1.0;
        bv[15] = 1.0;
        let v = emd(&map(4, 4, av), &map(4, 4, bv), 2).unwrap();
        assert!((v - 2.0f64.sqrt()).abs() < 1e-12);
    }
}
