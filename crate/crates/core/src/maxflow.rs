//! Exact minimization of submodular pseudo-boolean energies by s-t min-cut.
//!
//! The max-flow engine grows search trees from both terminals and reuses
//! them across augmentations (Boykov-Kolmogorov), which is fast on the
//! sparse lattice graphs produced by clique energies.

use std::collections::VecDeque;

use crate::energy::QpbEnergy;
use crate::error::{Error, Result};
use crate::grid::GridLabeling;

const NONE: usize = usize::MAX;
const TERMINAL: usize = usize::MAX - 1;
const ORPHAN: usize = usize::MAX - 2;

#[derive(Debug, Clone)]
struct Arc {
    head: usize,
    r_cap: f64,
    cap: f64,
}

/// Directed capacitated graph over `n` nodes plus implicit source and sink.
/// Arcs are stored in sister pairs: arc `2k` and `2k + 1` run in opposite
/// directions between the same two nodes.
#[derive(Debug, Clone)]
pub struct FlowNetwork {
    arcs: Vec<Arc>,
    out: Vec<Vec<usize>>,
    /// Residual terminal capacity: positive toward the source, negative toward the sink.
    tr_cap: Vec<f64>,
    tr_cap0: Vec<f64>,
    parent: Vec<usize>,
    is_sink: Vec<bool>,
    ts: Vec<u64>,
    dist: Vec<u64>,
    active: VecDeque<usize>,
    in_active: Vec<bool>,
    orphans: VecDeque<usize>,
    time: u64,
    flow: f64,
    solved: bool,
}

impl FlowNetwork {
    pub fn new(num_nodes: usize) -> Self {
        FlowNetwork {
            arcs: Vec::new(),
            out: vec![Vec::new(); num_nodes],
            tr_cap: vec![0.0; num_nodes],
            tr_cap0: vec![0.0; num_nodes],
            parent: vec![NONE; num_nodes],
            is_sink: vec![false; num_nodes],
            ts: vec![0; num_nodes],
            dist: vec![0; num_nodes],
            active: VecDeque::new(),
            in_active: vec![false; num_nodes],
            orphans: VecDeque::new(),
            time: 0,
            flow: 0.0,
            solved: false,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.out.len()
    }

    /// Adds capacities `source -> p` and `p -> sink`. Only their difference
    /// enters the graph; the common part is pushed straight into the flow.
    pub fn add_terminal(&mut self, p: usize, source_cap: f64, sink_cap: f64) {
        debug_assert!(source_cap >= 0.0 && sink_cap >= 0.0);
        self.flow += source_cap.min(sink_cap);
        self.tr_cap[p] += source_cap - sink_cap;
        self.tr_cap0[p] = self.tr_cap[p];
    }

    /// Adds arc `p -> q` with capacity `cap` and `q -> p` with `rev_cap`.
    pub fn add_edge(&mut self, p: usize, q: usize, cap: f64, rev_cap: f64) {
        debug_assert!(p != q && cap >= 0.0 && rev_cap >= 0.0);
        let a = self.arcs.len();
        self.arcs.push(Arc {
            head: q,
            r_cap: cap,
            cap,
        });
        self.arcs.push(Arc {
            head: p,
            r_cap: rev_cap,
            cap: rev_cap,
        });
        self.out[p].push(a);
        self.out[q].push(a + 1);
    }

    /// Runs max-flow to completion and returns the flow value.
    pub fn max_flow(&mut self) -> f64 {
        if self.solved {
            return self.flow;
        }
        self.init_trees();
        let mut current: Option<usize> = None;
        while let Some(i) = current.take().or_else(|| self.next_active()) {
            let meeting = self.grow(i);
            self.time += 1;
            if let Some(a) = meeting {
                // keep expanding from i after the augmentation
                current = Some(i);
                self.augment(a);
                self.adopt_orphans();
                if self.parent[i] == NONE {
                    current = None;
                }
            }
        }
        self.solved = true;
        self.flow
    }

    fn init_trees(&mut self) {
        for i in 0..self.num_nodes() {
            if self.tr_cap[i] > 0.0 {
                self.is_sink[i] = false;
                self.parent[i] = TERMINAL;
                self.set_active(i);
                self.dist[i] = 1;
            } else if self.tr_cap[i] < 0.0 {
                self.is_sink[i] = true;
                self.parent[i] = TERMINAL;
                self.set_active(i);
                self.dist[i] = 1;
            } else {
                self.parent[i] = NONE;
            }
            self.ts[i] = 0;
        }
    }

    fn set_active(&mut self, i: usize) {
        if !self.in_active[i] {
            self.in_active[i] = true;
            self.active.push_back(i);
        }
    }

    fn next_active(&mut self) -> Option<usize> {
        while let Some(i) = self.active.pop_front() {
            self.in_active[i] = false;
            if self.parent[i] != NONE {
                return Some(i);
            }
        }
        None
    }

    /// Expands the tree of `i` by one layer. Returns an arc that joins the
    /// source tree to the sink tree, oriented source side to sink side.
    fn grow(&mut self, i: usize) -> Option<usize> {
        let sink_side = self.is_sink[i];
        for k in 0..self.out[i].len() {
            let a = self.out[i][k];
            let residual = if sink_side {
                self.arcs[a ^ 1].r_cap
            } else {
                self.arcs[a].r_cap
            };
            if residual <= 0.0 {
                continue;
            }
            let j = self.arcs[a].head;
            if self.parent[j] == NONE {
                self.is_sink[j] = sink_side;
                self.parent[j] = a ^ 1;
                self.ts[j] = self.ts[i];
                self.dist[j] = self.dist[i] + 1;
                self.set_active(j);
            } else if self.is_sink[j] != sink_side {
                return Some(if sink_side { a ^ 1 } else { a });
            } else if self.ts[j] <= self.ts[i] && self.dist[j] > self.dist[i] {
                // shorter path to the terminal through i
                self.parent[j] = a ^ 1;
                self.ts[j] = self.ts[i];
                self.dist[j] = self.dist[i] + 1;
            }
        }
        None
    }

    fn augment(&mut self, middle: usize) {
        let mut bottleneck = self.arcs[middle].r_cap;

        let mut i = self.arcs[middle ^ 1].head;
        loop {
            let a = self.parent[i];
            if a == TERMINAL {
                break;
            }
            bottleneck = bottleneck.min(self.arcs[a ^ 1].r_cap);
            i = self.arcs[a].head;
        }
        bottleneck = bottleneck.min(self.tr_cap[i]);

        let mut i = self.arcs[middle].head;
        loop {
            let a = self.parent[i];
            if a == TERMINAL {
                break;
            }
            bottleneck = bottleneck.min(self.arcs[a].r_cap);
            i = self.arcs[a].head;
        }
        bottleneck = bottleneck.min(-self.tr_cap[i]);

        self.arcs[middle ^ 1].r_cap += bottleneck;
        self.arcs[middle].r_cap -= bottleneck;

        let mut i = self.arcs[middle ^ 1].head;
        loop {
            let a = self.parent[i];
            if a == TERMINAL {
                break;
            }
            self.arcs[a].r_cap += bottleneck;
            self.arcs[a ^ 1].r_cap -= bottleneck;
            if self.arcs[a ^ 1].r_cap <= 0.0 {
                self.arcs[a ^ 1].r_cap = 0.0;
                self.make_orphan(i);
            }
            i = self.arcs[a].head;
        }
        self.tr_cap[i] -= bottleneck;
        if self.tr_cap[i] <= 0.0 {
            self.tr_cap[i] = 0.0;
            self.make_orphan(i);
        }

        let mut i = self.arcs[middle].head;
        loop {
            let a = self.parent[i];
            if a == TERMINAL {
                break;
            }
            self.arcs[a ^ 1].r_cap += bottleneck;
            self.arcs[a].r_cap -= bottleneck;
            if self.arcs[a].r_cap <= 0.0 {
                self.arcs[a].r_cap = 0.0;
                self.make_orphan(i);
            }
            i = self.arcs[a].head;
        }
        self.tr_cap[i] += bottleneck;
        if self.tr_cap[i] >= 0.0 {
            self.tr_cap[i] = 0.0;
            self.make_orphan(i);
        }

        self.flow += bottleneck;
    }

    fn make_orphan(&mut self, i: usize) {
        self.parent[i] = ORPHAN;
        self.orphans.push_front(i);
    }

    fn adopt_orphans(&mut self) {
        while let Some(i) = self.orphans.pop_front() {
            self.adopt(i);
        }
    }

    fn adopt(&mut self, i: usize) {
        let sink_side = self.is_sink[i];
        let mut best = NONE;
        let mut best_dist = u64::MAX;

        for k in 0..self.out[i].len() {
            let a0 = self.out[i][k];
            let residual = if sink_side {
                self.arcs[a0].r_cap
            } else {
                self.arcs[a0 ^ 1].r_cap
            };
            if residual <= 0.0 {
                continue;
            }
            let j0 = self.arcs[a0].head;
            if self.parent[j0] == NONE || self.is_sink[j0] != sink_side {
                continue;
            }
            // does j0 still reach the terminal?
            let mut j = j0;
            let mut d: u64 = 0;
            let valid = loop {
                if self.ts[j] == self.time {
                    d += self.dist[j];
                    break true;
                }
                let a = self.parent[j];
                d += 1;
                if a == TERMINAL {
                    self.ts[j] = self.time;
                    self.dist[j] = 1;
                    break true;
                }
                if a == ORPHAN {
                    break false;
                }
                j = self.arcs[a].head;
            };
            if valid {
                if d < best_dist {
                    best = a0;
                    best_dist = d;
                }
                let mut j = j0;
                while self.ts[j] != self.time {
                    self.ts[j] = self.time;
                    self.dist[j] = d;
                    d -= 1;
                    j = self.arcs[self.parent[j]].head;
                }
            }
        }

        if best != NONE {
            self.parent[i] = best;
            self.ts[i] = self.time;
            self.dist[i] = best_dist + 1;
            return;
        }

        // no valid parent: i becomes free and its children become orphans
        self.parent[i] = NONE;
        for k in 0..self.out[i].len() {
            let a0 = self.out[i][k];
            let j = self.arcs[a0].head;
            let pj = self.parent[j];
            if pj == NONE || self.is_sink[j] != sink_side {
                continue;
            }
            let residual = if sink_side {
                self.arcs[a0].r_cap
            } else {
                self.arcs[a0 ^ 1].r_cap
            };
            if residual > 0.0 {
                self.set_active(j);
            }
            if pj != TERMINAL && pj != ORPHAN && self.arcs[pj].head == i {
                self.parent[j] = ORPHAN;
                self.orphans.push_back(j);
            }
        }
    }

    /// Nodes reachable from the source in the residual graph after
    /// `max_flow`: the smallest source set among all minimum cuts.
    pub fn source_set(&self) -> Vec<bool> {
        let n = self.num_nodes();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::new();
        for (i, seen_i) in seen.iter_mut().enumerate() {
            if self.tr_cap[i] > 0.0 {
                *seen_i = true;
                queue.push_back(i);
            }
        }
        while let Some(i) = queue.pop_front() {
            for &a in &self.out[i] {
                let j = self.arcs[a].head;
                if !seen[j] && self.arcs[a].r_cap > 0.0 {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen
    }

    /// Net inflow minus outflow at `p`, terminals included. Zero at every
    /// node of a valid flow.
    pub fn imbalance(&self, p: usize) -> f64 {
        let from_terminals = self.tr_cap0[p] - self.tr_cap[p];
        let out: f64 = self.out[p]
            .iter()
            .map(|&a| self.arcs[a].cap - self.arcs[a].r_cap)
            .sum();
        from_terminals - out
    }

    pub fn residuals_non_negative(&self) -> bool {
        self.arcs.iter().all(|a| a.r_cap >= 0.0)
            && self.tr_cap0.iter().zip(&self.tr_cap).all(|(c0, c)| {
                if *c0 >= 0.0 {
                    *c >= 0.0
                } else {
                    *c <= 0.0
                }
            })
    }

    /// True when no source-to-sink path remains in the residual graph.
    pub fn is_saturated(&self) -> bool {
        let s = self.source_set();
        !(0..self.num_nodes()).any(|i| s[i] && self.tr_cap[i] < 0.0)
    }
}

/// Reduction of a submodular QPB to a flow network. Label 1 is the source
/// side: `a x_p` becomes a terminal arc and `b x_p x_q` (with `b <= 0`)
/// becomes `b x_p + (-b) x_p (1 - x_q)`, an arc `p -> q` of capacity `-b`.
pub fn build_network(qpb: &QpbEnergy) -> Result<FlowNetwork> {
    if let Some(t) = qpb.supermodular_pairs().next() {
        return Err(Error::Supermodular(t.p, t.q, t.coeff));
    }
    let n = qpb.num_vars();
    let mut linear = qpb.linear().to_vec();
    let mut net = FlowNetwork::new(n);
    for t in qpb.pairs() {
        linear[t.p] += t.coeff;
        net.add_edge(t.p, t.q, -t.coeff, 0.0);
    }
    for (p, &a) in linear.iter().enumerate() {
        if a > 0.0 {
            net.add_terminal(p, 0.0, a);
        } else if a < 0.0 {
            net.add_terminal(p, -a, 0.0);
        }
    }
    Ok(net)
}

/// Global minimum of a submodular energy. Fails on any positive pair
/// coefficient.
pub fn minimize_submodular(qpb: &QpbEnergy) -> Result<(GridLabeling, f64)> {
    let mut net = build_network(qpb)?;
    net.max_flow();
    let labels: Vec<u8> = net.source_set().into_iter().map(|s| s as u8).collect();
    let labeling = GridLabeling::new(qpb.width(), qpb.height(), labels)?;
    let energy = qpb.evaluate(&labeling)?;
    Ok((labeling, energy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::QpbBuilder;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_min(qpb: &QpbEnergy) -> f64 {
        let n = qpb.num_vars();
        let mut best = f64::INFINITY;
        let mut x = vec![0u8; n];
        for mask in 0u64..(1 << n) {
            for (i, xi) in x.iter_mut().enumerate() {
                *xi = ((mask >> i) & 1) as u8;
            }
            best = best.min(qpb.evaluate_labels(&x));
        }
        best
    }

    #[test]
    fn two_pixel_example() {
        let mut b = QpbBuilder::new(2, 1);
        b.add_linear(0, 1.0).unwrap();
        b.add_linear(1, 1.0).unwrap();
        b.add_pair(0, 1, -3.0).unwrap();
        let qpb = b.build().unwrap();
        let (x, e) = minimize_submodular(&qpb).unwrap();
        assert_eq!(x.labels(), &[1, 1]);
        assert_eq!(e, -1.0);
    }

    #[test]
    fn unary_only_gives_argmin() {
        let mut b = QpbBuilder::new(4, 1);
        for (p, a) in [0.5, -0.25, 0.0, -2.0].into_iter().enumerate() {
            b.add_linear(p, a).unwrap();
        }
        let (x, e) = minimize_submodular(&b.build().unwrap()).unwrap();
        assert_eq!(x.labels(), &[0, 1, 0, 1]);
        assert_eq!(e, -2.25);
    }

    #[test]
    fn rejects_supermodular() {
        let mut b = QpbBuilder::new(2, 1);
        b.add_pair(0, 1, 0.5).unwrap();
        assert!(matches!(
            minimize_submodular(&b.build().unwrap()),
            Err(Error::Supermodular(0, 1, _))
        ));
    }

    #[test]
    fn random_instances_match_brute_force_and_conserve_flow() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n = rng.gen_range(1..=10);
            let mut b = QpbBuilder::new(n, 1);
            b.add_constant(rng.gen_range(-2.0..2.0));
            for p in 0..n {
                b.add_linear(p, rng.gen_range(-3.0..3.0)).unwrap();
            }
            for _ in 0..rng.gen_range(0..3 * n) {
                let p = rng.gen_range(0..n);
                let q = rng.gen_range(0..n);
                if p != q {
                    b.add_pair(p, q, -rng.gen_range(0.0..3.0)).unwrap();
                }
            }
            let qpb = b.build().unwrap();
            let (_, e) = minimize_submodular(&qpb).unwrap();
            let best = brute_min(&qpb);
            assert!(
                (e - best).abs() <= 1e-9 * best.abs().max(1.0),
                "{e} vs {best}"
            );

            let mut net = build_network(&qpb).unwrap();
            net.max_flow();
            assert!(net.residuals_non_negative());
            assert!(net.is_saturated());
            for p in 0..n {
                assert!(net.imbalance(p).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut b = QpbBuilder::new(6, 6);
        for p in 0..36 {
            b.add_linear(p, rng.gen_range(-1.0..1.0)).unwrap();
            if p % 6 < 5 {
                b.add_pair(p, p + 1, -0.5).unwrap();
            }
            if p < 30 {
                b.add_pair(p, p + 6, -0.5).unwrap();
            }
        }
        let qpb = b.build().unwrap();
        let first = minimize_submodular(&qpb).unwrap();
        for _ in 0..5 {
            assert_eq!(minimize_submodular(&qpb).unwrap().0, first.0);
        }
    }
}
