//! Undirected communication graphs.

use std::collections::{BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A connected, simple, undirected graph on nodes `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphRepr", into = "GraphRepr")]
pub struct Graph {
    n_nodes: usize,
    /// Sorted neighbor lists.
    adjacency: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds and validates a graph. Fails on self-loops, duplicate edges,
    /// out-of-range endpoints and disconnected topologies.
    pub fn new(n_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let g = Self::unchecked(n_nodes, edges)?;
        if !g.is_connected() {
            return Err(Error::Disconnected);
        }
        Ok(g)
    }

    /// Like [`Graph::new`] but skips the connectivity check.
    pub fn unchecked(n_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n_nodes == 0 {
            return Err(Error::InvalidGraph("graph needs at least one node".into()));
        }
        let mut seen = BTreeSet::new();
        let mut adjacency = vec![Vec::new(); n_nodes];
        for &(i, j) in edges {
            for node in [i, j] {
                if node >= n_nodes {
                    return Err(Error::NodeOutOfRange { node, n_nodes });
                }
            }
            if i == j {
                return Err(Error::InvalidGraph(format!("self-loop at node {i}")));
            }
            if !seen.insert((i.min(j), i.max(j))) {
                return Err(Error::InvalidGraph(format!("duplicate edge ({i}, {j})")));
            }
            adjacency[i].push(j);
            adjacency[j].push(i);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(Graph { n_nodes, adjacency })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_edges(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Edges as `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(i, ns)| ns.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
            .collect()
    }

    pub fn neighbors(&self, i: usize) -> Result<&[usize]> {
        self.adjacency
            .get(i)
            .map(Vec::as_slice)
            .ok_or(Error::NodeOutOfRange {
                node: i,
                n_nodes: self.n_nodes,
            })
    }

    pub fn degree(&self, i: usize) -> Result<usize> {
        self.neighbors(i).map(<[usize]>::len)
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency
            .get(i)
            .is_some_and(|ns| ns.binary_search(&j).is_ok())
    }

    /// Breadth-first reachability from node 0.
    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n_nodes];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = queue.pop_front() {
            for &j in &self.adjacency[i] {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
        }
        count == self.n_nodes
    }

    /// Random "small-world" graph: a Hamiltonian cycle through a uniformly
    /// random permutation of the nodes, plus `m_edges - n` further edges drawn
    /// uniformly without replacement from the remaining pairs.
    pub fn small_world<R: Rng + ?Sized>(n: usize, m_edges: usize, rng: &mut R) -> Result<Self> {
        if n < 3 || m_edges < n || m_edges > n * (n - 1) / 2 {
            return Err(Error::InfeasibleEdgeCount {
                nodes: n,
                edges: m_edges,
            });
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
        for k in 0..n {
            let (a, b) = (order[k], order[(k + 1) % n]);
            edges.insert((a.min(b), a.max(b)));
        }
        // Rejection sampling over unordered pairs.
        while edges.len() < m_edges {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if a != b {
                edges.insert((a.min(b), a.max(b)));
            }
        }
        let edges: Vec<_> = edges.into_iter().collect();
        Graph::new(n, &edges)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphRepr {
    n: usize,
    edges: Vec<[usize; 2]>,
}

impl TryFrom<GraphRepr> for Graph {
    type Error = Error;

    fn try_from(r: GraphRepr) -> Result<Self> {
        let edges: Vec<_> = r.edges.iter().map(|e| (e[0], e[1])).collect();
        Graph::new(r.n, &edges)
    }
}

impl From<Graph> for GraphRepr {
    fn from(g: Graph) -> Self {
        GraphRepr {
            n: g.n_nodes,
            edges: g.edges().into_iter().map(|(i, j)| [i, j]).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn triangle() -> Graph {
        Graph::new(3, &[(0, 1), (1, 2), (0, 2)]).unwrap()
    }

    fn path3() -> Graph {
        Graph::new(3, &[(0, 1), (1, 2)]).unwrap()
    }

    #[test]
    fn neighbor_queries() {
        assert_eq!(triangle().neighbors(0).unwrap(), &[1, 2]);
        assert_eq!(path3().neighbors(1).unwrap(), &[0, 2]);
        assert_eq!(path3().neighbors(0).unwrap(), &[1]);
        assert_eq!(path3().degree(0).unwrap(), 1);
        assert!(matches!(path3().neighbors(3), Err(Error::NodeOutOfRange { node: 3, n_nodes: 3 })));
        assert!(path3().degree(7).is_err());
    }

    #[test]
    fn degrees() {
        let cycle: Vec<_> = (0..10).map(|i| (i, (i + 1) % 10)).collect();
        let g = Graph::new(10, &cycle).unwrap();
        assert!((0..10).all(|i| g.degree(i).unwrap() == 2));
        let star = Graph::new(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]).unwrap();
        assert_eq!(star.degree(0).unwrap(), 4);
    }

    #[test]
    fn benchmark_sized_small_world() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = Graph::small_world(10, 15, &mut rng).unwrap();
        assert_eq!(g.n_nodes(), 10);
        assert_eq!(g.n_edges(), 15);
        assert!(g.is_connected());
        let degree_sum: usize = (0..10).map(|i| g.degree(i).unwrap()).sum();
        assert_eq!(degree_sum, 30);
    }

    #[test]
    fn small_world_degenerate_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(Graph::small_world(3, 3, &mut rng).unwrap(), triangle());
        let g = Graph::small_world(5, 5, &mut rng).unwrap();
        assert!((0..5).all(|i| g.degree(i).unwrap() == 2));
        assert!(Graph::small_world(2, 2, &mut rng).is_err());
        assert!(Graph::small_world(5, 4, &mut rng).is_err());
        assert!(Graph::small_world(5, 11, &mut rng).is_err());
        assert_eq!(Graph::small_world(5, 10, &mut rng).unwrap().n_edges(), 10);
    }

    #[test]
    fn connectivity() {
        assert!(!Graph::unchecked(4, &[(0, 1), (2, 3)]).unwrap().is_connected());
        assert!(matches!(Graph::new(4, &[(0, 1), (2, 3)]), Err(Error::Disconnected)));
        assert!(Graph::new(1, &[]).unwrap().is_connected());
    }

    #[test]
    fn malformed_edges() {
        assert!(Graph::new(3, &[(0, 0), (1, 2)]).is_err());
        assert!(Graph::new(3, &[(0, 1), (1, 0), (1, 2)]).is_err());
        assert!(Graph::new(3, &[(0, 3)]).is_err());
        assert!(Graph::new(0, &[]).is_err());
    }

    #[test]
    fn json_layout() {
        let g: Graph = serde_json::from_str(r#"{"n":3,"edges":[[1,2],[0,1]]}"#).unwrap();
        assert_eq!(g, path3());
        assert_eq!(serde_json::to_string(&g).unwrap(), r#"{"n":3,"edges":[[0,1],[1,2]]}"#);
        assert!(serde_json::from_str::<Graph>(r#"{"n":4,"edges":[[0,1],[2,3]]}"#).is_err());
    }

    proptest! {
        #[test]
        fn small_world_invariants(seed in any::<u64>(), n in 3usize..15, extra in 0usize..20) {
            let m = (n + extra).min(n * (n - 1) / 2);
            let g = Graph::small_world(n, m, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            prop_assert!(g.is_connected());
            prop_assert_eq!(g.n_edges(), m);
            let again = Graph::small_world(n, m, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            prop_assert_eq!(&g, &again);
            for i in 0..n {
                for &j in g.neighbors(i).unwrap() {
                    prop_assert!(g.neighbors(j).unwrap().contains(&i));
                    prop_assert!(j != i);
                }
            }
        }
    }
}
