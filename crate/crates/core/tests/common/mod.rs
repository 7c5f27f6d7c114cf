//! Independent reference implementations used by the integration and acceptance tests.
#![allow(dead_code)]

/// Exact optimal transport cost `min sum pi_ij |x_i - y_j|^alpha` by
/// successive shortest paths on the residual network (Bellman-Ford, so the
/// negative reverse edges are fine). Returns the `1/alpha` power.
pub fn transport_oracle(xs: &[f64], a: &[f64], ys: &[f64], b: &[f64], alpha: f64) -> f64 {
    let (n, m) = (xs.len(), ys.len());
    let source = n + m;
    let sink = n + m + 1;
    let mut net = Network::new(n + m + 2);
    for (i, &w) in a.iter().enumerate() {
        net.add_edge(source, i, w, 0.0);
    }
    for (j, &w) in b.iter().enumerate() {
        net.add_edge(n + j, sink, w, 0.0);
    }
    for (i, &x) in xs.iter().enumerate() {
        for (j, &y) in ys.iter().enumerate() {
            net.add_edge(i, n + j, f64::INFINITY, (x - y).abs().powf(alpha));
        }
    }
    net.min_cost_flow(source, sink).powf(1.0 / alpha)
}

struct Edge {
    to: usize,
    cap: f64,
    cost: f64,
}

struct Network {
    edges: Vec<Edge>,
    adj: Vec<Vec<usize>>,
}

/// Residual capacities below this are treated as exhausted.
const CAP_EPS: f64 = 1e-15;

impl Network {
    fn new(nodes: usize) -> Self {
        Network { edges: Vec::new(), adj: vec![Vec::new(); nodes] }
    }

    fn add_edge(&mut self, from: usize, to: usize, cap: f64, cost: f64) {
        self.adj[from].push(self.edges.len());
        self.edges.push(Edge { to, cap, cost });
        self.adj[to].push(self.edges.len());
        self.edges.push(Edge { to: from, cap: 0.0, cost: -cost });
    }

    fn min_cost_flow(&mut self, s: usize, t: usize) -> f64 {
        let nodes = self.adj.len();
        let mut total = 0.0;
        loop {
            let mut dist = vec![f64::INFINITY; nodes];
            let mut via = vec![usize::MAX; nodes];
            dist[s] = 0.0;
            for _ in 0..nodes {
                let mut changed = false;
                for u in 0..nodes {
                    if dist[u] == f64::INFINITY {
                        continue;
                    }
                    for &e in &self.adj[u] {
                        let edge = &self.edges[e];
                        // The slack keeps round-off from creating phantom negative cycles.
                        let slack = 1e-12 * (1.0 + dist[edge.to].abs().min(1e300));
                        if edge.cap > CAP_EPS && dist[u] + edge.cost < dist[edge.to] - slack {
                            dist[edge.to] = dist[u] + edge.cost;
                            via[edge.to] = e;
                            changed = true;
                        }
                    }
                }
                if !changed {
                    break;
                }
            }
            if dist[t] == f64::INFINITY {
                return total;
            }
            let mut push = f64::INFINITY;
            let mut v = t;
            let mut steps = 0;
            while v != s {
                steps += 1;
                assert!(steps <= nodes, "residual path does not reach the source");
                let e = via[v];
                push = push.min(self.edges[e].cap);
                v = self.edges[e ^ 1].to;
            }
            let mut v = t;
            while v != s {
                let e = via[v];
                self.edges[e].cap -= push;
                self.edges[e ^ 1].cap += push;
                total += push * self.edges[e].cost;
                v = self.edges[e ^ 1].to;
            }
        }
    }
}

/// Positive-part mean of the zero-truncated Poisson, `m / (1 - e^-m)`.
pub fn truncated_poisson_mean(m: f64) -> f64 {
    m / -(-m).exp_m1()
}

/// Root of `truncated_poisson_mean(m) = x` by plain bisection.
pub fn bisect_truncated_poisson(x: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, x);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= 0.0 || truncated_poisson_mean(mid) < x {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

