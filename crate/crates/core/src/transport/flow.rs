//! Exact balanced transport by successive shortest paths.
//!
//! The network has a super source feeding every supply node, a super sink
//! fed by every demand node, uncapacitated supply→demand arcs and residual
//! reverse arcs. Dijkstra runs on reduced costs with node potentials, so
//! every augmentation follows a cheapest path and the final flow is optimal.
//!
//! When enabled, pairs whose cost equals the matrix maximum are not given
//! direct arcs. They are served by a single hub node instead: `supply → hub`
//! at the maximum cost and `hub → demand` at zero. Any path through the hub
//! costs exactly the maximum, which is never cheaper than a direct arc, so
//! the optimum is unchanged while saturated pairs (the common case for a
//! clipped ground distance) cost one arc per node instead of one per pair.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use crate::numeric::neumaier_sum;

/// Residual amounts at or below this are treated as exhausted.
const MASS_EPSILON: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolverOptions {
    /// Route maximum-cost pairs through a shared hub node.
    pub saturation_hub: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { saturation_hub: true }
    }
}

/// Optimal flows between supply index `i` and demand index `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportSolution {
    pub flows: Vec<(usize, usize, f64)>,
    pub cost: f64,
}

#[derive(Clone, Copy, PartialEq)]
struct HeapEntry {
    dist: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance, then on node index
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Network<'a> {
    ns: usize,
    nt: usize,
    cost: &'a [f64],
    level: f64,
    use_hub: bool,
    direct: Vec<bool>,
    supply: Vec<f64>,
    demand: Vec<f64>,
    flow: Vec<f64>,
    hub_in: Vec<f64>,
    hub_out: Vec<f64>,
}

// node layout: 0 = source, 1..=ns supplies, then nt demands, hub, sink
impl Network<'_> {
    fn source(&self) -> usize {
        0
    }
    fn supply_node(&self, i: usize) -> usize {
        1 + i
    }
    fn demand_node(&self, j: usize) -> usize {
        1 + self.ns + j
    }
    fn hub(&self) -> usize {
        1 + self.ns + self.nt
    }
    fn sink(&self) -> usize {
        2 + self.ns + self.nt
    }
    fn node_count(&self) -> usize {
        3 + self.ns + self.nt
    }

    /// Calls `visit(v, cost)` for every residual arc leaving `u`.
    fn for_each_arc(&self, u: usize, mut visit: impl FnMut(usize, f64)) {
        let (ns, nt) = (self.ns, self.nt);
        if u == self.source() {
            for i in 0..ns {
                if self.supply[i] > 0.0 {
                    visit(self.supply_node(i), 0.0);
                }
            }
        } else if u <= ns {
            let i = u - 1;
            let row = &self.cost[i * nt..(i + 1) * nt];
            for (j, &c) in row.iter().enumerate() {
                if self.direct[i * nt + j] {
                    visit(self.demand_node(j), c);
                }
            }
            if self.use_hub {
                visit(self.hub(), self.level);
            }
        } else if u <= ns + nt {
            let j = u - 1 - ns;
            for i in 0..ns {
                if self.flow[i * nt + j] > 0.0 {
                    visit(self.supply_node(i), -self.cost[i * nt + j]);
                }
            }
            if self.hub_out[j] > 0.0 {
                visit(self.hub(), 0.0);
            }
            if self.demand[j] > 0.0 {
                visit(self.sink(), 0.0);
            }
        } else if u == self.hub() {
            for j in 0..nt {
                visit(self.demand_node(j), 0.0);
            }
            for i in 0..ns {
                if self.hub_in[i] > 0.0 {
                    visit(self.supply_node(i), -self.level);
                }
            }
        }
    }

    /// Residual capacity of arc `u → v`.
    fn capacity(&self, u: usize, v: usize) -> f64 {
        let (ns, nt) = (self.ns, self.nt);
        let hub = self.hub();
        if u == self.source() {
            self.supply[v - 1]
        } else if v == self.sink() {
            self.demand[u - 1 - ns]
        } else if u <= ns {
            f64::INFINITY
        } else if u == hub {
            if v <= ns {
                self.hub_in[v - 1]
            } else {
                f64::INFINITY
            }
        } else {
            let j = u - 1 - ns;
            if v == hub {
                self.hub_out[j]
            } else {
                self.flow[(v - 1) * nt + j]
            }
        }
    }

    fn push(&mut self, u: usize, v: usize, amount: f64) {
        let (ns, nt) = (self.ns, self.nt);
        let hub = self.hub();
        let settle = |x: &mut f64, delta: f64| {
            *x += delta;
            if *x <= MASS_EPSILON {
                *x = 0.0;
            }
        };
        if u == self.source() {
            settle(&mut self.supply[v - 1], -amount);
        } else if v == self.sink() {
            settle(&mut self.demand[u - 1 - ns], -amount);
        } else if u <= ns {
            let i = u - 1;
            if v == hub {
                settle(&mut self.hub_in[i], amount);
            } else {
                settle(&mut self.flow[i * nt + (v - 1 - ns)], amount);
            }
        } else if u == hub {
            if v <= ns {
                settle(&mut self.hub_in[v - 1], -amount);
            } else {
                settle(&mut self.hub_out[v - 1 - ns], amount);
            }
        } else {
            let j = u - 1 - ns;
            if v == hub {
                settle(&mut self.hub_out[j], -amount);
            } else {
                settle(&mut self.flow[(v - 1) * nt + j], -amount);
            }
        }
    }
}

/// Solves `min Σ cost_ij x_ij` subject to row sums `supply` and column sums
/// `demand`, with `cost` row-major `supply.len() × demand.len()`.
///
/// Supplies and demands are expected to have equal totals; with a tiny
/// imbalance the solver stops once either side is exhausted.
pub fn min_cost_transport(supply: &[f64], demand: &[f64], cost: &[f64], options: SolverOptions) -> TransportSolution {
    let (ns, nt) = (supply.len(), demand.len());
    assert_eq!(cost.len(), ns * nt, "cost matrix shape");
    if ns == 0 || nt == 0 {
        return TransportSolution {
            flows: Vec::new(),
            cost: 0.0,
        };
    }

    let level = cost.iter().copied().fold(0.0, f64::max);
    let use_hub = options.saturation_hub && ns * nt > 1;
    let direct = cost.iter().map(|&c| !use_hub || c < level).collect();
    let mut net = Network {
        ns,
        nt,
        cost,
        level,
        use_hub,
        direct,
        supply: supply.iter().map(|&s| if s > MASS_EPSILON { s } else { 0.0 }).collect(),
        demand: demand.iter().map(|&d| if d > MASS_EPSILON { d } else { 0.0 }).collect(),
        flow: vec![0.0; ns * nt],
        hub_in: vec![0.0; ns],
        hub_out: vec![0.0; nt],
    };

    let n = net.node_count();
    let mut potential = vec![0.0f64; n];
    let mut dist = vec![f64::INFINITY; n];
    let mut prev = vec![usize::MAX; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();

    while net.supply.iter().any(|&s| s > 0.0) && net.demand.iter().any(|&d| d > 0.0) {
        dist.fill(f64::INFINITY);
        prev.fill(usize::MAX);
        done.fill(false);
        heap.clear();
        let (source, sink) = (net.source(), net.sink());
        dist[source] = 0.0;
        heap.push(HeapEntry {
            dist: 0.0,
            node: source,
        });

        while let Some(HeapEntry { dist: d, node: u }) = heap.pop() {
            if done[u] {
                continue;
            }
            done[u] = true;
            if u == sink {
                break;
            }
            let pu = potential[u];
            net.for_each_arc(u, |v, c| {
                if done[v] {
                    return;
                }
                let reduced = (c + pu - potential[v]).max(0.0);
                let nd = d + reduced;
                if nd < dist[v] {
                    dist[v] = nd;
                    prev[v] = u;
                    heap.push(HeapEntry { dist: nd, node: v });
                }
            });
        }

        if !done[sink] {
            break;
        }
        let sink_dist = dist[sink];
        for (p, d) in potential.iter_mut().zip(&dist) {
            *p += d.min(sink_dist);
        }

        let mut amount = f64::INFINITY;
        let mut v = sink;
        while v != source {
            let u = prev[v];
            amount = amount.min(net.capacity(u, v));
            v = u;
        }
        if amount.is_nan() || amount <= 0.0 {
            break;
        }
        let mut v = sink;
        while v != source {
            let u = prev[v];
            net.push(u, v, amount);
            v = u;
        }
    }

    let mut flows: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for i in 0..ns {
        for j in 0..nt {
            let f = net.flow[i * nt + j];
            if f > 0.0 {
                flows.insert((i, j), f);
            }
        }
    }
    // any pairing of hub inflow with hub outflow is optimal
    let mut outs: Vec<(usize, f64)> = net
        .hub_out
        .iter()
        .enumerate()
        .filter(|(_, f)| **f > 0.0)
        .map(|(j, f)| (j, *f))
        .collect();
    let mut cursor = 0;
    for (i, &inflow) in net.hub_in.iter().enumerate() {
        let mut left = inflow;
        while left > MASS_EPSILON && cursor < outs.len() {
            let (j, avail) = &mut outs[cursor];
            let moved = left.min(*avail);
            *flows.entry((i, *j)).or_default() += moved;
            left -= moved;
            *avail -= moved;
            if *avail <= MASS_EPSILON {
                cursor += 1;
            }
        }
    }

    let flows: Vec<(usize, usize, f64)> = flows.into_iter().map(|((i, j), f)| (i, j, f)).collect();
    let cost = neumaier_sum(flows.iter().map(|&(i, j, f)| f * cost[i * nt + j]));
    TransportSolution { flows, cost }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn marginals(sol: &TransportSolution, ns: usize, nt: usize) -> (Vec<f64>, Vec<f64>) {
        let mut rows = vec![0.0; ns];
        let mut cols = vec![0.0; nt];
        for &(i, j, f) in &sol.flows {
            rows[i] += f;
            cols[j] += f;
        }
        (rows, cols)
    }

    /// Exhaustive optimum for a 2-demand instance: fill the cheaper side in
    /// order of cost advantage.
    fn two_column_optimum(supply: &[f64], demand: [f64; 2], cost: &[f64]) -> f64 {
        let mut order: Vec<usize> = (0..supply.len()).collect();
        order.sort_by(|&a, &b| (cost[2 * a] - cost[2 * a + 1]).total_cmp(&(cost[2 * b] - cost[2 * b + 1])));
        let mut left = demand[0];
        let mut total = 0.0;
        for i in order {
            let to_first = supply[i].min(left);
            left -= to_first;
            total += to_first * cost[2 * i] + (supply[i] - to_first) * cost[2 * i + 1];
        }
        total
    }

    #[test]
    fn single_cell() {
        let sol = min_cost_transport(&[1.0], &[1.0], &[0.3], SolverOptions::default());
        assert_eq!(sol.flows, vec![(0, 0, 1.0)]);
        assert_eq!(sol.cost, 0.3);
    }

    #[test]
    fn prefers_cheap_diagonal() {
        let cost = [0.0, 1.0, 1.0, 0.0];
        let sol = min_cost_transport(&[0.5, 0.5], &[0.5, 0.5], &cost, SolverOptions::default());
        assert_eq!(sol.cost, 0.0);
        assert_eq!(sol.flows, vec![(0, 0, 0.5), (1, 1, 0.5)]);
    }

    #[test]
    fn needs_rerouting() {
        // greedy would ship 0→0 first; optimum ships 0→1 and 1→0
        let cost = [0.1, 0.2, 0.15, 1.0];
        let sol = min_cost_transport(&[0.5, 0.5], &[0.5, 0.5], &cost, SolverOptions::default());
        assert!((sol.cost - 0.5 * (0.2 + 0.15)).abs() < 1e-15);
    }

    #[test]
    fn matches_two_column_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let ns = rng.gen_range(1..10);
            let raw: Vec<f64> = (0..ns).map(|_| rng.gen_range(0.01..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let supply: Vec<f64> = raw.iter().map(|x| x / total).collect();
            let d0 = rng.gen_range(0.05..0.95);
            let demand = [d0, 1.0 - d0];
            let cost: Vec<f64> = (0..2 * ns)
                .map(|_| {
                    if rng.gen_bool(0.3) {
                        1.0
                    } else {
                        rng.gen_range(0.0..1.0)
                    }
                })
                .collect();
            let expected = two_column_optimum(&supply, demand, &cost);
            for hub in [true, false] {
                let sol = min_cost_transport(&supply, &demand, &cost, SolverOptions { saturation_hub: hub });
                assert!((sol.cost - expected).abs() < 1e-12, "{} vs {expected}", sol.cost);
                let (rows, cols) = marginals(&sol, ns, 2);
                for (r, s) in rows.iter().zip(&supply) {
                    assert!((r - s).abs() < 1e-12);
                }
                for (c, d) in cols.iter().zip(&demand) {
                    assert!((c - d).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn hub_and_direct_agree_on_saturated_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..100 {
            let ns = rng.gen_range(1..15);
            let nt = rng.gen_range(1..15);
            let norm = |v: Vec<f64>| {
                let t: f64 = v.iter().sum();
                v.into_iter().map(|x| x / t).collect::<Vec<_>>()
            };
            let supply = norm((0..ns).map(|_| rng.gen_range(0.01..1.0)).collect());
            let demand = norm((0..nt).map(|_| rng.gen_range(0.01..1.0)).collect());
            let cost: Vec<f64> = (0..ns * nt)
                .map(|_| {
                    if rng.gen_bool(0.6) {
                        1.0
                    } else {
                        rng.gen_range(0.0..1.0)
                    }
                })
                .collect();
            let a = min_cost_transport(&supply, &demand, &cost, SolverOptions { saturation_hub: true });
            let b = min_cost_transport(&supply, &demand, &cost, SolverOptions { saturation_hub: false });
            assert!((a.cost - b.cost).abs() < 1e-12);
            let (rows, cols) = marginals(&a, ns, nt);
            assert!(rows.iter().zip(&supply).all(|(r, s)| (r - s).abs() < 1e-12));
            assert!(cols.iter().zip(&demand).all(|(c, d)| (c - d).abs() < 1e-12));
        }
    }

    #[test]
    fn empty_sides() {
        let sol = min_cost_transport(&[], &[1.0], &[], SolverOptions::default());
        assert!(sol.flows.is_empty());
        assert_eq!(sol.cost, 0.0);
    }
}
