//! The IAC graph: precoding vectors of MACs 2..K as vertices, alignment
//! equations as receiver-labelled edges. Parallel edges are allowed; two
//! parallel edges form a loop of length two.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{IacError, Result};
use crate::model::SystemConfig;
use crate::planner::{AlignmentPlan, StreamId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IacEdge {
    /// Vector aligned at `receiver`.
    pub aligned: StreamId,
    /// Basis vector it is aligned onto.
    pub onto: StreamId,
    pub receiver: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IacGraph {
    vertices: Vec<StreamId>,
    index: BTreeMap<StreamId, usize>,
    edges: Vec<IacEdge>,
}

impl IacGraph {
    /// Graph over an explicit vertex list. Every edge endpoint must be listed.
    pub fn from_parts(vertices: Vec<StreamId>, edges: Vec<IacEdge>) -> Result<Self> {
        let index: BTreeMap<StreamId, usize> = vertices.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        for e in &edges {
            for end in [e.aligned, e.onto] {
                if !index.contains_key(&end) {
                    return Err(IacError::UnknownVertex(end));
                }
            }
        }
        Ok(Self { vertices, index, edges })
    }

    pub fn vertices(&self) -> &[StreamId] {
        &self.vertices
    }

    pub fn edges(&self) -> &[IacEdge] {
        &self.edges
    }

    pub fn vertex_index(&self, id: StreamId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    /// Neighbour lists `(neighbour, edge index)`, sorted.
    fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for (e, edge) in self.edges.iter().enumerate() {
            let a = self.index[&edge.aligned];
            let b = self.index[&edge.onto];
            adj[a].push((b, e));
            adj[b].push((a, e));
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    /// Graphviz rendering; vertices are labelled `k.j.l`, edges by receiver.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("graph iac {\n");
        for v in &self.vertices {
            let _ = writeln!(out, "  \"{v}\";");
        }
        for e in &self.edges {
            let _ = writeln!(out, "  \"{}\" -- \"{}\" [label=\"{}\"];", e.aligned, e.onto, e.receiver);
        }
        out.push_str("}\n");
        out
    }
}

/// One vertex per stream of MACs 2..K and one edge per pairing in the plan.
pub fn build_graph(config: &SystemConfig, plan: &AlignmentPlan) -> IacGraph {
    let vertices: Vec<StreamId> = StreamId::all(config).filter(|s| s.mac >= 2).collect();
    let edges = plan
        .receivers
        .iter()
        .flat_map(|rx| {
            rx.pairings.iter().map(move |p| IacEdge {
                aligned: p.aligned,
                onto: p.onto,
                receiver: rx.receiver,
            })
        })
        .collect();
    IacGraph::from_parts(vertices, edges).expect("plan only references streams of MACs 2..K")
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Component {
    pub id: usize,
    /// Vertex indices, ascending.
    pub vertices: Vec<usize>,
    /// Edge indices, ascending.
    pub edges: Vec<usize>,
}

impl Component {
    /// |E_q| - |P_q| + 1
    pub fn cycles(&self) -> usize {
        (self.edges.len() + 1).saturating_sub(self.vertices.len())
    }

    pub fn summary(&self) -> ComponentSummary {
        ComponentSummary {
            id: self.id,
            vertex_count: self.vertices.len(),
            edge_count: self.edges.len(),
            cycles: self.cycles(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentSummary {
    pub id: usize,
    pub vertex_count: usize,
    pub edge_count: usize,
    pub cycles: usize,
}

/// Connected components, numbered by their smallest vertex.
pub fn components(graph: &IacGraph) -> Vec<Component> {
    let adj = graph.adjacency();
    let n = graph.vertices.len();
    let mut label = vec![usize::MAX; n];
    let mut out = Vec::new();
    for start in 0..n {
        if label[start] != usize::MAX {
            continue;
        }
        let id = out.len();
        let mut verts = Vec::new();
        let mut edges = Vec::new();
        let mut queue = VecDeque::from([start]);
        label[start] = id;
        while let Some(u) = queue.pop_front() {
            verts.push(u);
            for &(w, e) in &adj[u] {
                if u <= w {
                    edges.push(e);
                }
                if label[w] == usize::MAX {
                    label[w] = id;
                    queue.push_back(w);
                }
            }
        }
        verts.sort_unstable();
        edges.sort_unstable();
        edges.dedup();
        out.push(Component {
            id,
            vertices: verts,
            edges,
        });
    }
    out
}

/// Every component holds at most one loop.
pub fn check_proposition1(graph: &IacGraph) -> bool {
    components(graph).iter().all(|c| c.cycles() <= 1)
}

/// Union-find over a fixed vertex set that only accepts edges keeping the
/// graph a pseudoforest.
#[derive(Clone, Debug)]
pub struct PseudoforestState {
    index: BTreeMap<StreamId, usize>,
    parent: Vec<usize>,
    has_cycle: Vec<bool>,
    edges: usize,
}

impl PseudoforestState {
    pub fn new(vertices: &[StreamId]) -> Self {
        Self {
            index: vertices.iter().enumerate().map(|(i, &v)| (v, i)).collect(),
            parent: (0..vertices.len()).collect(),
            has_cycle: vec![false; vertices.len()],
            edges: 0,
        }
    }

    fn find(&self, mut x: usize) -> usize {
        while self.parent[x] != x {
            x = self.parent[x];
        }
        x
    }

    fn lookup(&self, v: StreamId) -> Result<usize> {
        self.index.get(&v).copied().ok_or(IacError::UnknownVertex(v))
    }

    /// Component root of `v` and whether that component already has its loop.
    pub fn component_of(&self, v: StreamId) -> Result<(usize, bool)> {
        let r = self.find(self.lookup(v)?);
        Ok((r, self.has_cycle[r]))
    }

    /// Whether adding `u -- v` would keep the pseudoforest property.
    pub fn would_accept(&self, u: StreamId, v: StreamId) -> Result<bool> {
        let (a, ca) = self.component_of(u)?;
        let (b, cb) = self.component_of(v)?;
        Ok(if a == b { !ca } else { !(ca && cb) })
    }

    /// Adds the edge if the result is still a pseudoforest; returns whether it was added.
    pub fn try_add_edge(&mut self, u: StreamId, v: StreamId, _label: usize) -> Result<bool> {
        let a = self.find(self.lookup(u)?);
        let b = self.find(self.lookup(v)?);
        if a == b {
            if self.has_cycle[a] {
                return Ok(false);
            }
            self.has_cycle[a] = true;
        } else {
            if self.has_cycle[a] && self.has_cycle[b] {
                return Ok(false);
            }
            let (small, big) = if a < b { (b, a) } else { (a, b) };
            self.parent[small] = big;
            self.has_cycle[big] |= self.has_cycle[small];
        }
        self.edges += 1;
        Ok(true)
    }

    pub fn edge_count(&self) -> usize {
        self.edges
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraversalStep {
    pub from: StreamId,
    pub to: StreamId,
    pub receiver: usize,
    pub edge: usize,
}

/// Solve order for one component: the loop (closing back at `seed`) when
/// present, then tree edges outward from the already-solved vertices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Traversal {
    pub seed: StreamId,
    pub cycle: Vec<TraversalStep>,
    pub tree: Vec<TraversalStep>,
}

pub fn traversal_order(component: &Component, graph: &IacGraph) -> Result<Traversal> {
    let cycles = component.cycles();
    if cycles > 1 {
        return Err(IacError::MoreThanOneLoop {
            component: component.id,
            cycles,
        });
    }
    let adj = graph.adjacency();
    let step = |from: usize, to: usize, e: usize| TraversalStep {
        from: graph.vertices[from],
        to: graph.vertices[to],
        receiver: graph.edges[e].receiver,
        edge: e,
    };

    let root = component.vertices[0];
    let mut cycle_vertices: Vec<usize> = Vec::new();
    let mut cycle_edges: Vec<usize> = Vec::new();
    if cycles == 1 {
        let (cv, ce) = find_cycle(&adj, root).expect("unicyclic component has a loop");
        cycle_vertices = cv;
        cycle_edges = ce;
    }

    let mut on_tree = vec![false; graph.vertices.len()];
    let mut cycle = Vec::new();
    let seed = if cycle_vertices.is_empty() {
        on_tree[root] = true;
        root
    } else {
        let l = cycle_vertices.len();
        for i in 0..l {
            let from = cycle_vertices[i];
            let to = cycle_vertices[(i + 1) % l];
            cycle.push(step(from, to, cycle_edges[i]));
            on_tree[from] = true;
        }
        cycle_vertices[0]
    };

    let mut used_edge = vec![false; graph.edges.len()];
    for &e in &cycle_edges {
        used_edge[e] = true;
    }
    let mut tree = Vec::new();
    let mut queue: VecDeque<usize> = if cycle_vertices.is_empty() {
        VecDeque::from([root])
    } else {
        cycle_vertices.iter().copied().collect()
    };
    while let Some(u) = queue.pop_front() {
        for &(w, e) in &adj[u] {
            if used_edge[e] || on_tree[w] {
                continue;
            }
            used_edge[e] = true;
            on_tree[w] = true;
            tree.push(step(u, w, e));
            queue.push_back(w);
        }
    }
    Ok(Traversal {
        seed: graph.vertices[seed],
        cycle,
        tree,
    })
}

/// Iterative DFS from `root`; the first back edge closes the loop. Returns the
/// loop's vertices starting at its smallest vertex, plus the edge leaving each.
fn find_cycle(adj: &[Vec<(usize, usize)>], root: usize) -> Option<(Vec<usize>, Vec<usize>)> {
    let n = adj.len();
    let mut depth = vec![usize::MAX; n];
    // (vertex, edge used to reach it, next neighbour position)
    let mut stack: Vec<(usize, usize, usize)> = vec![(root, usize::MAX, 0)];
    depth[root] = 0;
    while let Some(&mut (u, via, ref mut pos)) = stack.last_mut() {
        if *pos == adj[u].len() {
            depth[u] = usize::MAX - 1; // finished
            stack.pop();
            continue;
        }
        let (w, e) = adj[u][*pos];
        *pos += 1;
        if e == via {
            continue;
        }
        if depth[w] == usize::MAX {
            depth[w] = stack.len();
            stack.push((w, e, 0));
        } else if depth[w] < usize::MAX - 1 {
            // back edge to an ancestor on the current path
            let start = depth[w];
            let mut verts: Vec<usize> = stack[start..].iter().map(|f| f.0).collect();
            let mut edges: Vec<usize> = stack[start + 1..].iter().map(|f| f.1).collect();
            edges.push(e);
            // rotate so the smallest vertex comes first, then orient toward
            // its smaller (neighbour, edge) choice
            let l = verts.len();
            let pivot = (0..l).min_by_key(|&i| verts[i]).unwrap();
            verts.rotate_left(pivot);
            edges.rotate_left(pivot);
            let forward = (verts[1 % l], edges[0]);
            let backward = (verts[l - 1], edges[l - 1]);
            if l > 1 && backward < forward {
                verts[1..].reverse();
                edges.reverse();
            }
            return Some((verts, edges));
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(mac: usize, user: usize, stream: usize) -> StreamId {
        StreamId { mac, user, stream }
    }

    fn verts(n: usize) -> Vec<StreamId> {
        (1..=n).map(|j| s(2, j, 1)).collect()
    }

    fn e(a: usize, b: usize, receiver: usize) -> IacEdge {
        IacEdge {
            aligned: s(2, a, 1),
            onto: s(2, b, 1),
            receiver,
        }
    }

    #[test]
    fn component_examples() {
        let g = IacGraph::from_parts(verts(4), vec![e(1, 2, 1), e(3, 4, 1)]).unwrap();
        let cs: Vec<ComponentSummary> = components(&g).iter().map(Component::summary).collect();
        assert_eq!(cs.len(), 2);
        assert!(cs
            .iter()
            .all(|c| c.vertex_count == 2 && c.edge_count == 1 && c.cycles == 0));

        let tri = IacGraph::from_parts(verts(3), vec![e(1, 2, 1), e(2, 3, 1), e(3, 1, 1)]).unwrap();
        let cs = components(&tri);
        assert_eq!(cs.len(), 1);
        assert_eq!(cs[0].cycles(), 1);

        let par = IacGraph::from_parts(verts(2), vec![e(1, 2, 1), e(1, 2, 2)]).unwrap();
        let cs = components(&par);
        assert_eq!(cs[0].summary().edge_count, 2);
        assert_eq!(cs[0].cycles(), 1);
    }

    #[test]
    fn unknown_vertex_rejected() {
        assert!(matches!(
            IacGraph::from_parts(verts(2), vec![e(1, 3, 1)]),
            Err(IacError::UnknownVertex(_))
        ));
        let mut st = PseudoforestState::new(&verts(2));
        assert!(st.try_add_edge(s(2, 1, 1), s(9, 9, 9), 1).is_err());
    }

    #[test]
    fn pseudoforest_examples() {
        let dense = IacGraph::from_parts(
            verts(3),
            vec![e(1, 2, 1), e(2, 3, 1), e(3, 1, 1), e(1, 2, 2), e(2, 3, 2)],
        )
        .unwrap();
        assert_eq!(components(&dense)[0].cycles(), 3);
        assert!(!check_proposition1(&dense));
        let forest = IacGraph::from_parts(verts(4), vec![e(1, 2, 1), e(1, 3, 1)]).unwrap();
        assert!(check_proposition1(&forest));
    }

    #[test]
    fn incremental_state_examples() {
        let mut st = PseudoforestState::new(&verts(4));
        assert!(st.try_add_edge(s(2, 1, 1), s(2, 2, 1), 1).unwrap());
        // intra-component edge in an unflagged component
        assert!(st.try_add_edge(s(2, 2, 1), s(2, 1, 1), 2).unwrap());
        assert!(st.component_of(s(2, 1, 1)).unwrap().1);
        // flagged component refuses another loop
        assert!(!st.try_add_edge(s(2, 1, 1), s(2, 2, 1), 3).unwrap());
        // merging flagged with unflagged is fine and stays flagged
        assert!(st.try_add_edge(s(2, 3, 1), s(2, 1, 1), 1).unwrap());
        assert!(st.component_of(s(2, 3, 1)).unwrap().1);
        assert_eq!(st.edge_count(), 3);
        // two flagged components cannot merge
        let mut st2 = PseudoforestState::new(&verts(4));
        st2.try_add_edge(s(2, 1, 1), s(2, 2, 1), 1).unwrap();
        st2.try_add_edge(s(2, 1, 1), s(2, 2, 1), 2).unwrap();
        st2.try_add_edge(s(2, 3, 1), s(2, 4, 1), 1).unwrap();
        st2.try_add_edge(s(2, 3, 1), s(2, 4, 1), 2).unwrap();
        assert!(!st2.try_add_edge(s(2, 1, 1), s(2, 3, 1), 1).unwrap());
    }

    #[test]
    fn traversal_examples() {
        let tri = IacGraph::from_parts(verts(3), vec![e(1, 2, 1), e(2, 3, 1), e(3, 1, 1)]).unwrap();
        let t = traversal_order(&components(&tri)[0], &tri).unwrap();
        assert_eq!(t.cycle.len(), 3);
        assert!(t.tree.is_empty());
        assert_eq!(t.seed, s(2, 1, 1));
        assert_eq!(t.cycle[0].from, t.seed);
        assert_eq!(t.cycle[2].to, t.seed);

        let star = IacGraph::from_parts(verts(5), vec![e(2, 1, 1), e(3, 1, 1), e(4, 1, 1), e(5, 1, 1)]).unwrap();
        let t = traversal_order(&components(&star)[0], &star).unwrap();
        assert_eq!(t.seed, s(2, 1, 1));
        assert!(t.cycle.is_empty());
        assert_eq!(t.tree.len(), 4);
        assert!(t.tree.iter().all(|st| st.from == s(2, 1, 1)));

        let pendant = IacGraph::from_parts(verts(3), vec![e(1, 2, 1), e(1, 2, 2), e(3, 2, 1)]).unwrap();
        let t = traversal_order(&components(&pendant)[0], &pendant).unwrap();
        assert_eq!(t.cycle.len(), 2);
        assert_eq!(t.tree.len(), 1);
        assert_eq!(t.tree[0].to, s(2, 3, 1));
        assert_ne!(t.cycle[0].edge, t.cycle[1].edge);
    }

    #[test]
    fn traversal_rejects_two_loops() {
        let g = IacGraph::from_parts(verts(2), vec![e(1, 2, 1), e(1, 2, 2), e(1, 2, 3)]).unwrap();
        assert!(matches!(
            traversal_order(&components(&g)[0], &g),
            Err(IacError::MoreThanOneLoop { cycles: 2, .. })
        ));
    }

    #[test]
    fn dot_export_labels() {
        let g = IacGraph::from_parts(verts(2), vec![e(1, 2, 1)]).unwrap();
        let dot = g.to_dot();
        assert!(dot.contains("\"2.1.1\" -- \"2.2.1\" [label=\"1\"]"));
    }
}
