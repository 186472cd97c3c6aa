//! Exact optimal transport between two small discrete distributions.
//!
//! Solved as a min-cost flow on the bipartite supply/demand graph with
//! successive shortest paths (Bellman-Ford on the residual graph, since
//! reverse arcs carry negative cost). Supports are tiny here, so the
//! O(n^3) per augmentation cost is irrelevant.

const FLOW_EPS: f64 = 1e-15;

struct Arc {
    to: usize,
    cap: f64,
    cost: f64,
}

struct Graph {
    arcs: Vec<Arc>,
    adj: Vec<Vec<usize>>,
}

impl Graph {
    fn new(nodes: usize) -> Self {
        Self {
            arcs: Vec::new(),
            adj: vec![Vec::new(); nodes],
        }
    }

    fn add(&mut self, from: usize, to: usize, cap: f64, cost: f64) {
        self.adj[from].push(self.arcs.len());
        self.arcs.push(Arc { to, cap, cost });
        self.adj[to].push(self.arcs.len());
        self.arcs.push(Arc {
            to: from,
            cap: 0.0,
            cost: -cost,
        });
    }
}

/// Minimum of `sum_ij plan_ij cost_ij` over couplings of `supply` and `demand`.
///
/// Both inputs must be nonnegative with equal total mass; `cost` is `n x m`.
/// Returns the optimal cost and the plan.
pub fn optimal_transport(
    supply: &[f64],
    demand: &[f64],
    cost: &[Vec<f64>],
) -> (f64, Vec<Vec<f64>>) {
    let n = supply.len();
    let m = demand.len();
    let source = n + m;
    let sink = source + 1;
    let mut g = Graph::new(n + m + 2);
    for (i, &s) in supply.iter().enumerate() {
        g.add(source, i, s, 0.0);
    }
    for (j, &d) in demand.iter().enumerate() {
        g.add(n + j, sink, d, 0.0);
    }
    let first_inner = g.arcs.len();
    for i in 0..n {
        for j in 0..m {
            g.add(i, n + j, f64::INFINITY, cost[i][j]);
        }
    }

    let nodes = n + m + 2;
    // Each augmentation saturates a source/sink arc or cancels a reverse arc;
    // the bound is generous for the sizes used here.
    for _ in 0..(4 * nodes * nodes + 16) {
        let mut dist = vec![f64::INFINITY; nodes];
        let mut via = vec![usize::MAX; nodes];
        dist[source] = 0.0;
        for _ in 0..nodes {
            let mut changed = false;
            for u in 0..nodes {
                if dist[u] == f64::INFINITY {
                    continue;
                }
                for &e in &g.adj[u] {
                    let arc = &g.arcs[e];
                    if arc.cap > FLOW_EPS && dist[u] + arc.cost < dist[arc.to] - 1e-15 {
                        dist[arc.to] = dist[u] + arc.cost;
                        via[arc.to] = e;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        if dist[sink] == f64::INFINITY {
            break;
        }
        let mut push = f64::INFINITY;
        let mut v = sink;
        while v != source {
            let e = via[v];
            push = push.min(g.arcs[e].cap);
            v = g.arcs[e ^ 1].to;
        }
        if push <= FLOW_EPS {
            break;
        }
        let mut v = sink;
        while v != source {
            let e = via[v];
            g.arcs[e].cap -= push;
            g.arcs[e ^ 1].cap += push;
            v = g.arcs[e ^ 1].to;
        }
    }

    let mut plan = vec![vec![0.0; m]; n];
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..m {
            let e = first_inner + 2 * (i * m + j);
            let flow = g.arcs[e ^ 1].cap;
            plan[i][j] = flow;
            total += flow * cost[i][j];
        }
    }
    (total, plan)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_marginals_cost_nothing() {
        let c = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let (v, _) = optimal_transport(&[0.3, 0.7], &[0.3, 0.7], &c);
        assert!(v.abs() < 1e-15);
    }

    #[test]
    fn unit_move() {
        let c = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let (v, plan) = optimal_transport(&[1.0, 0.0], &[0.0, 1.0], &c);
        assert!((v - 1.0).abs() < 1e-15);
        assert!((plan[0][1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn plan_has_requested_marginals() {
        let c = vec![
            vec![0.0, 2.0, 5.0],
            vec![2.0, 0.0, 3.0],
            vec![5.0, 3.0, 0.0],
        ];
        let s = [0.5, 0.2, 0.3];
        let d = [0.1, 0.1, 0.8];
        let (v, plan) = optimal_transport(&s, &d, &c);
        for i in 0..3 {
            let row: f64 = plan[i].iter().sum();
            assert!((row - s[i]).abs() < 1e-12);
            let col: f64 = (0..3).map(|k| plan[k][i]).sum();
            assert!((col - d[i]).abs() < 1e-12);
        }
        // dual potential (0, 2, 5) certifies 2.3 as optimal
        assert!((v - 2.3).abs() < 1e-12);
    }
}
