use crate::sparse::CscMatrix;
use crate::{Error, Real, Result};

/// Edge of the unconstrained-variable graph, read off one row of `A_f`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Edge {
    /// Row of `A_f` the edge came from.
    pub row: usize,
    /// Column holding `+1`.
    pub plus: usize,
    /// Column holding `−1`.
    pub minus: usize,
}

/// Graph whose nodes are the unconstrained rows of X and whose edges are the
/// incidence rows of `A_f`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UnconstrainedGraph {
    node_count: usize,
    edges: Vec<Edge>,
    components: Vec<Vec<usize>>,
    component_of: Vec<usize>,
}

impl UnconstrainedGraph {
    /// Reads `A_f` as a directed incidence matrix.
    ///
    /// Zero rows are skipped. Any other row must hold exactly one `+1` and one
    /// `−1`; otherwise `NonIncidence` names the offending row.
    pub fn detect<T: Real>(a_f: &CscMatrix<T>) -> Result<Self> {
        let rows = a_f.transpose();
        let mut edges = Vec::new();
        for r in 0..rows.ncols() {
            let (cols, vals) = rows.col(r);
            match cols.len() {
                0 => continue,
                2 => {
                    let (a, b) = (vals[0], vals[1]);
                    let one = T::one();
                    if a == one && b == -one {
                        edges.push(Edge {
                            row: r,
                            plus: cols[0],
                            minus: cols[1],
                        });
                    } else if a == -one && b == one {
                        edges.push(Edge {
                            row: r,
                            plus: cols[1],
                            minus: cols[0],
                        });
                    } else {
                        return Err(Error::NonIncidence { row: r });
                    }
                }
                _ => return Err(Error::NonIncidence { row: r }),
            }
        }
        Ok(Self::from_edges(a_f.ncols(), edges))
    }

    pub fn from_edges(node_count: usize, edges: Vec<Edge>) -> Self {
        let mut uf = UnionFind::new(node_count);
        for e in &edges {
            uf.union(e.plus, e.minus);
        }
        // components numbered by their smallest node
        let mut label = vec![usize::MAX; node_count];
        let mut components: Vec<Vec<usize>> = Vec::new();
        let mut component_of = vec![0; node_count];
        for (v, slot) in component_of.iter_mut().enumerate() {
            let root = uf.find(v);
            if label[root] == usize::MAX {
                label[root] = components.len();
                components.push(Vec::new());
            }
            *slot = label[root];
            components[label[root]].push(v);
        }
        Self {
            node_count,
            edges,
            components,
            component_of,
        }
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Connected components, each sorted ascending, ordered by smallest node.
    pub fn components(&self) -> &[Vec<usize>] {
        &self.components
    }

    pub fn component_of(&self, node: usize) -> usize {
        self.component_of[node]
    }

    pub fn is_connected(&self) -> bool {
        self.components.len() <= 1
    }
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut v: usize) -> usize {
        while self.parent[v] != v {
            self.parent[v] = self.parent[self.parent[v]];
            v = self.parent[v];
        }
        v
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}
