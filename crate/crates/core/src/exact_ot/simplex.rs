//! Network simplex on the dense bipartite transportation graph.
//!
//! The basis is a spanning tree over `n` source and `m` target nodes with
//! exactly `n + m - 1` basic cells. Entering arcs are selected by a
//! deterministic block search over the cost tableau (most negative reduced
//! cost within the active block, earliest arc in scan order on ties);
//! leaving arcs take the smallest flow on the cycle with lowest (i, j) on
//! ties. Dual potentials come from the final tree with the first source
//! potential pinned to zero.
//!
//! Degeneracy (rampant for uniform marginals with near-tie costs) is
//! broken by a deterministic index-graded perturbation of the marginals of
//! about 1e-16 per atom. The induced value shift is below 1e-9 even at
//! 512 atoms, an order under every tolerance consumed downstream.

use super::{
    check_cost_shape, CostMatrix, DiscreteMeasure, DualPotentials, ExactSolution, OtError, Result,
    TransportPlan,
};
use crate::tensor::Array;

const PERTURBATION: f64 = 1e-16;

/// Solve one transportation instance exactly. Returns the optimal value,
/// an optimal coupling, dual potentials (admissible, strong duality holds)
/// and the number of simplex pivots performed.
pub fn exact_solve(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    costs: &CostMatrix,
) -> Result<ExactSolution> {
    check_cost_shape(costs, mu, nu)?;
    let mut state = Tableau::new(mu.weights(), nu.weights(), costs);
    let pivots = state.optimize()?;

    let (n, m) = (mu.len(), nu.len());
    let mut value = 0.0;
    for i in 0..n {
        for j in 0..m {
            value += state.flow[i * m + j] * costs.get(i, j);
        }
    }
    let (u, v) = state.potentials();
    let duals = DualPotentials::tagged(u, v, costs, 1e-9);
    let plan =
        TransportPlan::new(Array::matrix(n, m, state.flow.clone()).expect("sized correctly"));
    Ok(ExactSolution {
        value,
        plan,
        duals,
        pivots,
    })
}

struct Tableau<'a> {
    n: usize,
    m: usize,
    costs: &'a CostMatrix,
    flow: Vec<f64>,
    basic: Vec<bool>,
    /// adjacency of the basis tree: cols basic in row i / rows basic in col j
    row_adj: Vec<Vec<usize>>,
    col_adj: Vec<Vec<usize>>,
    u: Vec<f64>,
    v: Vec<f64>,
    /// optimality tolerance on reduced costs, scaled to the cost range
    tol: f64,
    /// rotating scan position for the block pivot rule
    next_arc: usize,
    block: usize,
    // scratch buffers for the pivot loop
    seen: Vec<bool>,
    stack: Vec<usize>,
    parent: Vec<usize>,
}

const NO_PARENT: usize = usize::MAX;

impl<'a> Tableau<'a> {
    fn new(a: &[f64], b: &[f64], costs: &'a CostMatrix) -> Self {
        let (n, m) = (a.len(), b.len());
        let scale = costs
            .entries()
            .data()
            .iter()
            .fold(1.0f64, |acc, &c| acc.max(c.abs()));

        // Index-graded perturbation, balanced across the two sides.
        let a_pert: Vec<f64> = a
            .iter()
            .enumerate()
            .map(|(i, &w)| w + PERTURBATION * (i + 1) as f64)
            .collect();
        let extra: f64 = PERTURBATION * (n * (n + 1) / 2) as f64;
        let delta_b = extra / ((m * (m + 1) / 2) as f64);
        let b_pert: Vec<f64> = b
            .iter()
            .enumerate()
            .map(|(j, &w)| w + delta_b * (j + 1) as f64)
            .collect();

        let mut t = Tableau {
            n,
            m,
            costs,
            flow: vec![0.0; n * m],
            basic: vec![false; n * m],
            row_adj: vec![Vec::new(); n],
            col_adj: vec![Vec::new(); m],
            u: vec![0.0; n],
            v: vec![0.0; m],
            tol: 1e-11 * scale,
            next_arc: 0,
            block: ((n * m) as f64).sqrt().ceil() as usize,
            seen: vec![false; n + m],
            stack: Vec::with_capacity(n + m),
            parent: vec![NO_PARENT; n + m],
        };
        t.least_cost_init(&a_pert, &b_pert);
        t
    }

    /// Initial basic feasible solution: greedy least-cost assignment. Each
    /// assignment exhausts exactly one marginal, so the positive cells form
    /// a forest; zero-flow cells taken in the same cost order then complete
    /// it to a spanning tree with n + m - 1 basic cells.
    fn least_cost_init(&mut self, a: &[f64], b: &[f64]) {
        let (n, m) = (self.n, self.m);
        let mut order: Vec<u32> = (0..(n * m) as u32).collect();
        let costs = self.costs.entries().data();
        order.sort_by(|&x, &y| {
            costs[x as usize]
                .partial_cmp(&costs[y as usize])
                .expect("costs are finite")
                .then(x.cmp(&y))
        });

        let mut a_rem = a.to_vec();
        let mut b_rem = b.to_vec();
        let mut row_active = vec![true; n];
        let mut col_active = vec![true; m];
        let mut assigned: Vec<(usize, usize, f64)> = Vec::with_capacity(n + m);
        for &arc in &order {
            let (i, j) = (arc as usize / m, arc as usize % m);
            if !row_active[i] || !col_active[j] {
                continue;
            }
            let x = a_rem[i].min(b_rem[j]).max(0.0);
            a_rem[i] -= x;
            b_rem[j] -= x;
            // Exhaust exactly one side; the last cell closes both but only
            // the row is marked so the forest property is preserved.
            if a_rem[i] <= b_rem[j] {
                row_active[i] = false;
            } else {
                col_active[j] = false;
            }
            assigned.push((i, j, x));
        }

        // Union-find over the n + m nodes to complete the forest.
        let mut parent: Vec<usize> = (0..n + m).collect();
        fn find(parent: &mut [usize], x: usize) -> usize {
            let mut root = x;
            while parent[root] != root {
                root = parent[root];
            }
            let mut cur = x;
            while parent[cur] != root {
                let next = parent[cur];
                parent[cur] = root;
                cur = next;
            }
            root
        }
        let mut components = n + m;
        for &(i, j, x) in &assigned {
            let (ri, rj) = (find(&mut parent, i), find(&mut parent, n + j));
            // Every assignment exhausted one endpoint, so a cell can never
            // close a cycle among assigned cells.
            assert!(ri != rj, "greedy assignment produced a cycle");
            parent[ri] = rj;
            components -= 1;
            self.insert_basic(i, j, x);
        }
        if components > 1 {
            for &arc in &order {
                if components == 1 {
                    break;
                }
                let (i, j) = (arc as usize / m, arc as usize % m);
                if self.basic[i * m + j] {
                    continue;
                }
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, n + j));
                if ri != rj {
                    parent[ri] = rj;
                    components -= 1;
                    self.insert_basic(i, j, 0.0);
                }
            }
        }
    }

    fn insert_basic(&mut self, i: usize, j: usize, x: f64) {
        self.flow[i * self.m + j] = x;
        self.basic[i * self.m + j] = true;
        self.row_adj[i].push(j);
        self.col_adj[j].push(i);
    }

    fn remove_basic(&mut self, i: usize, j: usize) {
        self.flow[i * self.m + j] = 0.0;
        self.basic[i * self.m + j] = false;
        self.row_adj[i].retain(|&c| c != j);
        self.col_adj[j].retain(|&r| r != i);
    }

    /// Solve u_i + v_j = C_ij over the basis tree, rooted at row 0 with
    /// u_0 = 0. The tree makes the solution unique.
    fn recompute_potentials(&mut self) {
        // Node encoding: 0..n rows, n..n+m cols.
        self.seen.fill(false);
        self.stack.clear();
        self.stack.push(0);
        self.seen[0] = true;
        self.u[0] = 0.0;
        while let Some(node) = self.stack.pop() {
            if node < self.n {
                let i = node;
                for &j in &self.row_adj[i] {
                    if !self.seen[self.n + j] {
                        self.seen[self.n + j] = true;
                        self.v[j] = self.costs.get(i, j) - self.u[i];
                        self.stack.push(self.n + j);
                    }
                }
            } else {
                let j = node - self.n;
                for &i in &self.col_adj[j] {
                    if !self.seen[i] {
                        self.seen[i] = true;
                        self.u[i] = self.costs.get(i, j) - self.v[j];
                        self.stack.push(i);
                    }
                }
            }
        }
    }

    fn potentials(&mut self) -> (Vec<f64>, Vec<f64>) {
        self.recompute_potentials();
        (self.u.clone(), self.v.clone())
    }

    /// Block pivot rule: scan arcs cyclically from the last position; once
    /// a block containing an improving arc has been swept, return the most
    /// negative arc seen in it. A full wrap with no improving arc proves
    /// optimality.
    fn find_entering(&mut self) -> Option<(usize, usize)> {
        let total = self.n * self.m;
        let costs = self.costs.entries().data();
        let mut best = -self.tol;
        let mut best_arc: Option<usize> = None;
        let mut scanned = 0usize;
        let mut arc = self.next_arc;
        while scanned < total {
            if !self.basic[arc] {
                let (i, j) = (arc / self.m, arc % self.m);
                let reduced = costs[arc] - self.u[i] - self.v[j];
                if reduced < best {
                    best = reduced;
                    best_arc = Some(arc);
                }
            }
            scanned += 1;
            arc += 1;
            if arc == total {
                arc = 0;
            }
            if scanned.is_multiple_of(self.block) && best_arc.is_some() {
                break;
            }
        }
        self.next_arc = arc;
        best_arc.map(|a| (a / self.m, a % self.m))
    }

    /// The unique tree path between the endpoints of the entering arc,
    /// returned as the cell cycle starting at (ei, ej).
    fn find_cycle(&mut self, ei: usize, ej: usize) -> Vec<(usize, usize)> {
        self.seen.fill(false);
        self.parent.fill(NO_PARENT);
        self.stack.clear();
        let start = ei;
        let goal = self.n + ej;
        self.seen[start] = true;
        self.stack.push(start);
        while let Some(node) = self.stack.pop() {
            if node == goal {
                break;
            }
            if node < self.n {
                for &j in &self.row_adj[node] {
                    let next = self.n + j;
                    if !self.seen[next] {
                        self.seen[next] = true;
                        self.parent[next] = node;
                        self.stack.push(next);
                    }
                }
            } else {
                for &i in &self.col_adj[node - self.n] {
                    if !self.seen[i] {
                        self.seen[i] = true;
                        self.parent[i] = node;
                        self.stack.push(i);
                    }
                }
            }
        }
        // Walk back from the column endpoint, collecting the tree cells.
        let mut cells = vec![(ei, ej)];
        let mut node = goal;
        while self.parent[node] != NO_PARENT {
            let prev = self.parent[node];
            let cell = if node < self.n {
                (node, prev - self.n)
            } else {
                (prev, node - self.n)
            };
            cells.push(cell);
            node = prev;
        }
        cells
    }

    fn optimize(&mut self) -> Result<usize> {
        let max_pivots = 10_000 + 8 * self.n * self.m;
        let mut pivots = 0;
        self.recompute_potentials();
        while let Some((ei, ej)) = self.find_entering() {
            pivots += 1;
            if pivots > max_pivots {
                return Err(OtError::NonConvergence { pivots });
            }
            let cycle = self.find_cycle(ei, ej);
            // Cells alternate +θ, -θ around the cycle, entering first. The
            // leaving cell is the smallest flow among -θ cells, lowest
            // (i, j) on exact ties.
            let mut theta = f64::INFINITY;
            let mut leaving: Option<(usize, usize)> = None;
            for (k, &(i, j)) in cycle.iter().enumerate() {
                if k % 2 == 1 {
                    let f = self.flow[i * self.m + j];
                    let better = match leaving {
                        None => true,
                        Some(cur) => f < theta || (f == theta && (i, j) < cur),
                    };
                    if better {
                        theta = f;
                        leaving = Some((i, j));
                    }
                }
            }
            let (li, lj) = leaving.expect("odd cycle cells exist");
            let theta = theta.max(0.0);
            for (k, &(i, j)) in cycle.iter().enumerate() {
                if k == 0 {
                    continue;
                }
                let f = &mut self.flow[i * self.m + j];
                if k % 2 == 1 {
                    *f = (*f - theta).max(0.0);
                } else {
                    *f += theta;
                }
            }
            self.remove_basic(li, lj);
            self.insert_basic(ei, ej, theta);
            self.recompute_potentials();
        }
        Ok(pivots)
    }
}
