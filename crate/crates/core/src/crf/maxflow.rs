//! Max-flow / min-cut. [`Graph`] is a Boykov-Kolmogorov solver with terminal
//! capacities folded into each node; [`max_flow`] wraps it for explicit s-t
//! networks and [`max_flow_edmonds_karp`] is the BFS reference.

use std::collections::VecDeque;

use crate::error::{Error, Result};

const NONE: usize = usize::MAX;
const TERMINAL: usize = usize::MAX - 1;
const ORPHAN: usize = usize::MAX - 2;

#[derive(Clone, Copy, PartialEq, Eq)]
enum Tree {
    Source,
    Sink,
}

#[derive(Clone)]
struct Node {
    first: usize,
    /// Arc to the parent (its head is the parent), or one of the sentinels.
    parent: usize,
    tree: Tree,
    active: bool,
    ts: u64,
    dist: u64,
    /// Residual source capacity if positive, residual sink capacity if negative.
    tr_cap: f64,
}

#[derive(Clone)]
struct Arc {
    head: usize,
    next: usize,
    cap: f64,
}

/// Arcs are stored in pairs; `a ^ 1` is the reverse of `a`.
#[derive(Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    arcs: Vec<Arc>,
    flow: f64,
    active: VecDeque<usize>,
    orphans: VecDeque<usize>,
    time: u64,
}

impl Graph {
    pub fn new(nodes: usize) -> Self {
        let mut g = Graph::default();
        g.nodes = vec![
            Node {
                first: NONE,
                parent: NONE,
                tree: Tree::Source,
                active: false,
                ts: 0,
                dist: 0,
                tr_cap: 0.0,
            };
            nodes
        ];
        g
    }

    pub fn with_edges(nodes: usize, edges: usize) -> Self {
        let mut g = Self::new(nodes);
        g.arcs.reserve(2 * edges);
        g
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Adds capacity `source` on s->i and `sink` on i->t.
    pub fn add_tedge(&mut self, i: usize, source: f64, sink: f64) {
        debug_assert!(source >= 0.0 && sink >= 0.0);
        let n = &mut self.nodes[i];
        let (mut src, mut snk) = (source, sink);
        if n.tr_cap > 0.0 {
            src += n.tr_cap;
        } else {
            snk -= n.tr_cap;
        }
        self.flow += src.min(snk);
        n.tr_cap = src - snk;
    }

    /// Adds arcs i->j with capacity `cap` and j->i with capacity `rev`.
    pub fn add_edge(&mut self, i: usize, j: usize, cap: f64, rev: f64) {
        debug_assert!(cap >= 0.0 && rev >= 0.0 && i != j);
        let a = self.arcs.len();
        self.arcs.push(Arc {
            head: j,
            next: self.nodes[i].first,
            cap,
        });
        self.arcs.push(Arc {
            head: i,
            next: self.nodes[j].first,
            cap: rev,
        });
        self.nodes[i].first = a;
        self.nodes[j].first = a + 1;
    }

    fn set_active(&mut self, i: usize) {
        if !self.nodes[i].active {
            self.nodes[i].active = true;
            self.active.push_back(i);
        }
    }

    fn next_active(&mut self) -> Option<usize> {
        while let Some(i) = self.active.pop_front() {
            self.nodes[i].active = false;
            if self.nodes[i].parent != NONE {
                return Some(i);
            }
        }
        None
    }

    /// Runs to completion and returns the total flow.
    pub fn maxflow(&mut self) -> f64 {
        for i in 0..self.nodes.len() {
            let n = &mut self.nodes[i];
            n.ts = 0;
            n.dist = 1;
            if n.tr_cap > 0.0 {
                n.tree = Tree::Source;
                n.parent = TERMINAL;
                self.set_active(i);
            } else if n.tr_cap < 0.0 {
                n.tree = Tree::Sink;
                n.parent = TERMINAL;
                self.set_active(i);
            } else {
                n.parent = NONE;
            }
        }
        let mut current: Option<usize> = None;
        loop {
            let i = match current.filter(|&i| self.nodes[i].parent != NONE) {
                Some(i) => i,
                None => match self.next_active() {
                    Some(i) => i,
                    None => break,
                },
            };
            current = None;
            match self.grow(i) {
                Some(bridge) => {
                    // keep expanding from the same node after augmenting
                    current = Some(i);
                    self.time += 1;
                    self.augment(bridge);
                    self.adopt();
                }
                None => {}
            }
        }
        self.flow
    }

    /// Grows the tree of `i` by one layer. Returns a source-to-sink arc if the
    /// trees touch.
    fn grow(&mut self, i: usize) -> Option<usize> {
        let tree = self.nodes[i].tree;
        let mut a = self.nodes[i].first;
        while a != NONE {
            let cap = match tree {
                Tree::Source => self.arcs[a].cap,
                Tree::Sink => self.arcs[a ^ 1].cap,
            };
            if cap > 0.0 {
                let j = self.arcs[a].head;
                if self.nodes[j].parent == NONE {
                    let (ts, dist) = (self.nodes[i].ts, self.nodes[i].dist);
                    let nj = &mut self.nodes[j];
                    nj.tree = tree;
                    nj.parent = a ^ 1;
                    nj.ts = ts;
                    nj.dist = dist + 1;
                    self.set_active(j);
                } else if self.nodes[j].tree != tree {
                    return Some(if tree == Tree::Source { a } else { a ^ 1 });
                } else if self.nodes[j].ts <= self.nodes[i].ts
                    && self.nodes[j].dist > self.nodes[i].dist
                {
                    // shorter path to the root through i
                    let (ts, dist) = (self.nodes[i].ts, self.nodes[i].dist);
                    let nj = &mut self.nodes[j];
                    nj.parent = a ^ 1;
                    nj.ts = ts;
                    nj.dist = dist + 1;
                }
            }
            a = self.arcs[a].next;
        }
        None
    }

    fn orphan(&mut self, i: usize) {
        self.nodes[i].parent = ORPHAN;
        self.orphans.push_front(i);
    }

    /// Pushes the bottleneck along source-root -> bridge -> sink-root.
    fn augment(&mut self, bridge: usize) {
        let mut bottleneck = self.arcs[bridge].cap;
        let mut i = self.arcs[bridge ^ 1].head;
        loop {
            let a = self.nodes[i].parent;
            if a == TERMINAL {
                break;
            }
            bottleneck = bottleneck.min(self.arcs[a ^ 1].cap);
            i = self.arcs[a].head;
        }
        bottleneck = bottleneck.min(self.nodes[i].tr_cap);
        let mut i = self.arcs[bridge].head;
        loop {
            let a = self.nodes[i].parent;
            if a == TERMINAL {
                break;
            }
            bottleneck = bottleneck.min(self.arcs[a].cap);
            i = self.arcs[a].head;
        }
        bottleneck = bottleneck.min(-self.nodes[i].tr_cap);

        self.arcs[bridge ^ 1].cap += bottleneck;
        self.arcs[bridge].cap -= bottleneck;
        let mut i = self.arcs[bridge ^ 1].head;
        loop {
            let a = self.nodes[i].parent;
            if a == TERMINAL {
                break;
            }
            self.arcs[a].cap += bottleneck;
            self.arcs[a ^ 1].cap -= bottleneck;
            let next = self.arcs[a].head;
            if self.arcs[a ^ 1].cap <= 0.0 {
                self.orphan(i);
            }
            i = next;
        }
        self.nodes[i].tr_cap -= bottleneck;
        if self.nodes[i].tr_cap <= 0.0 {
            self.orphan(i);
        }
        let mut i = self.arcs[bridge].head;
        loop {
            let a = self.nodes[i].parent;
            if a == TERMINAL {
                break;
            }
            self.arcs[a ^ 1].cap += bottleneck;
            self.arcs[a].cap -= bottleneck;
            let next = self.arcs[a].head;
            if self.arcs[a].cap <= 0.0 {
                self.orphan(i);
            }
            i = next;
        }
        self.nodes[i].tr_cap += bottleneck;
        if self.nodes[i].tr_cap >= 0.0 {
            self.orphan(i);
        }
        self.flow += bottleneck;
    }

    /// Distance from `j` to its terminal, or `None` if the path hits an orphan.
    fn origin_distance(&mut self, mut j: usize) -> Option<u64> {
        let mut d = 0u64;
        loop {
            if self.nodes[j].ts == self.time {
                d += self.nodes[j].dist;
                break;
            }
            let a = self.nodes[j].parent;
            d += 1;
            if a == TERMINAL {
                self.nodes[j].ts = self.time;
                self.nodes[j].dist = 1;
                break;
            }
            if a == ORPHAN {
                return None;
            }
            j = self.arcs[a].head;
        }
        Some(d)
    }

    fn adopt(&mut self) {
        while let Some(i) = self.orphans.pop_front() {
            let tree = self.nodes[i].tree;
            let mut best: Option<(usize, u64)> = None;
            let mut a = self.nodes[i].first;
            while a != NONE {
                let cap = match tree {
                    Tree::Source => self.arcs[a ^ 1].cap,
                    Tree::Sink => self.arcs[a].cap,
                };
                let j = self.arcs[a].head;
                if cap > 0.0 && self.nodes[j].tree == tree && self.nodes[j].parent != NONE {
                    if let Some(mut d) = self.origin_distance(j) {
                        if best.is_none_or(|(_, bd)| d < bd) {
                            best = Some((a, d));
                        }
                        // stamp the path so later searches stop early
                        let mut k = j;
                        while self.nodes[k].ts != self.time {
                            self.nodes[k].ts = self.time;
                            self.nodes[k].dist = d;
                            d = d.saturating_sub(1);
                            k = self.arcs[self.nodes[k].parent].head;
                        }
                    }
                }
                a = self.arcs[a].next;
            }
            match best {
                Some((a, d)) => {
                    let n = &mut self.nodes[i];
                    n.parent = a;
                    n.ts = self.time;
                    n.dist = d + 1;
                }
                None => {
                    let mut a = self.nodes[i].first;
                    while a != NONE {
                        let j = self.arcs[a].head;
                        if self.nodes[j].tree == tree && self.nodes[j].parent != NONE {
                            let cap = match tree {
                                Tree::Source => self.arcs[a ^ 1].cap,
                                Tree::Sink => self.arcs[a].cap,
                            };
                            if cap > 0.0 {
                                self.set_active(j);
                            }
                            let pj = self.nodes[j].parent;
                            if pj != TERMINAL && pj != ORPHAN && self.arcs[pj].head == i {
                                self.nodes[j].parent = ORPHAN;
                                self.orphans.push_back(j);
                            }
                        }
                        a = self.arcs[a].next;
                    }
                    self.nodes[i].parent = NONE;
                }
            }
        }
    }

    /// After [`Graph::maxflow`]: true if `i` ends on the sink side of the cut.
    /// Nodes that neither tree claimed stay on the source side.
    pub fn is_sink_side(&self, i: usize) -> bool {
        let n = &self.nodes[i];
        n.parent != NONE && n.tree == Tree::Sink
    }
}

/// Directed network with explicit source and sink nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowNetwork {
    nodes: usize,
    source: usize,
    sink: usize,
    arcs: Vec<(usize, usize, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MinCut {
    pub flow: f64,
    /// `true` for nodes on the source side of the cut.
    pub source_side: Vec<bool>,
}

impl FlowNetwork {
    pub fn new(nodes: usize, source: usize, sink: usize) -> Result<Self> {
        if source == sink || source >= nodes || sink >= nodes {
            return Err(Error::param("source and sink must be distinct nodes"));
        }
        Ok(FlowNetwork {
            nodes,
            source,
            sink,
            arcs: Vec::new(),
        })
    }

    pub fn add_arc(&mut self, from: usize, to: usize, capacity: f64) -> Result<()> {
        if from >= self.nodes || to >= self.nodes {
            return Err(Error::param("arc endpoint out of range"));
        }
        if !(capacity >= 0.0 && capacity.is_finite()) {
            return Err(Error::param("arc capacity must be finite and >= 0"));
        }
        self.arcs.push((from, to, capacity));
        Ok(())
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn source(&self) -> usize {
        self.source
    }

    pub fn sink(&self) -> usize {
        self.sink
    }

    pub fn arcs(&self) -> &[(usize, usize, f64)] {
        &self.arcs
    }

    /// Total capacity of arcs leaving the source side.
    pub fn cut_capacity(&self, source_side: &[bool]) -> f64 {
        self.arcs
            .iter()
            .filter(|(u, v, _)| source_side[*u] && !source_side[*v])
            .map(|(_, _, c)| c)
            .sum()
    }
}

/// Boykov-Kolmogorov max-flow on an explicit network.
pub fn max_flow(net: &FlowNetwork) -> MinCut {
    let (s, t) = (net.source, net.sink);
    let mut g = Graph::new(net.nodes);
    let mut direct = 0.0;
    for &(u, v, c) in &net.arcs {
        if u == v || u == t || v == s {
            continue;
        }
        match (u == s, v == t) {
            (true, true) => direct += c,
            (true, false) => g.add_tedge(v, c, 0.0),
            (false, true) => g.add_tedge(u, 0.0, c),
            (false, false) => g.add_edge(u, v, c, 0.0),
        }
    }
    let flow = g.maxflow() + direct;
    let source_side = (0..net.nodes)
        .map(|i| i == s || (i != t && !g.is_sink_side(i)))
        .collect();
    MinCut { flow, source_side }
}

/// Shortest-augmenting-path reference solver.
pub fn max_flow_edmonds_karp(net: &FlowNetwork) -> MinCut {
    let n = net.nodes;
    let mut cap = vec![0.0; n * n];
    for &(u, v, c) in &net.arcs {
        if u != v {
            cap[u * n + v] += c;
        }
    }
    let (s, t) = (net.source, net.sink);
    let mut flow = 0.0;
    loop {
        let mut prev = vec![NONE; n];
        prev[s] = s;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for v in 0..n {
                if prev[v] == NONE && cap[u * n + v] > 0.0 {
                    prev[v] = u;
                    queue.push_back(v);
                }
            }
        }
        if prev[t] == NONE {
            let source_side = prev.iter().map(|&p| p != NONE).collect();
            return MinCut { flow, source_side };
        }
        let mut b = f64::INFINITY;
        let mut v = t;
        while v != s {
            let u = prev[v];
            b = b.min(cap[u * n + v]);
            v = u;
        }
        let mut v = t;
        while v != s {
            let u = prev[v];
            cap[u * n + v] -= b;
            cap[v * n + u] += b;
            v = u;
        }
        flow += b;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_arc() {
        let mut net = FlowNetwork::new(2, 0, 1).unwrap();
        net.add_arc(0, 1, 5.0).unwrap();
        assert_eq!(max_flow(&net).flow, 5.0);
        assert_eq!(max_flow_edmonds_karp(&net).flow, 5.0);
    }

    #[test]
    fn diamond() {
        let mut net = FlowNetwork::new(4, 0, 3).unwrap();
        for (u, v, c) in [(0, 1, 3.0), (1, 3, 3.0), (0, 2, 4.0), (2, 3, 4.0)] {
            net.add_arc(u, v, c).unwrap();
        }
        let cut = max_flow(&net);
        assert_eq!(cut.flow, 7.0);
        assert_eq!(net.cut_capacity(&cut.source_side), 7.0);
    }

    #[test]
    fn flow_through_reverse_residuals() {
        // classic example where the first augmenting path must be partly undone
        let mut net = FlowNetwork::new(4, 0, 3).unwrap();
        for (u, v, c) in [
            (0, 1, 1.0),
            (0, 2, 1.0),
            (1, 2, 1.0),
            (1, 3, 1.0),
            (2, 3, 1.0),
        ] {
            net.add_arc(u, v, c).unwrap();
        }
        assert_eq!(max_flow(&net).flow, 2.0);
    }

    #[test]
    fn same_source_and_sink_rejected() {
        assert!(FlowNetwork::new(3, 1, 1).is_err());
    }
}
