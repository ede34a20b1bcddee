//! Synchronous message passing over a communication graph.
//!
//! A round has two phases separated by a barrier. First every node publishes
//! one vector (its current dual iterate); the harness snapshots all of them.
//! Then every node computes its update from its own state plus the snapshot
//! values of its neighbors, in parallel. A node never sees another node's
//! state, only the published vectors of its neighbors, and never a value
//! produced in the current round.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Everything a node receives in one round: its own published value and its
/// neighbors' values, in ascending neighbor id order.
pub struct Inbox<'a> {
    node: usize,
    own: &'a DVector<f64>,
    neighbors: Vec<(usize, &'a DVector<f64>)>,
}

impl<'a> Inbox<'a> {
    pub fn node(&self) -> usize {
        self.node
    }

    pub fn own(&self) -> &'a DVector<f64> {
        self.own
    }

    pub fn degree(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self) -> impl Iterator<Item = (usize, &'a DVector<f64>)> + '_ {
        self.neighbors.iter().copied()
    }

    /// `Σ_j (y_i - y_j)`, accumulated in ascending neighbor order.
    pub fn difference_sum(&self) -> DVector<f64> {
        let mut acc = DVector::zeros(self.own.len());
        for (_, yj) in &self.neighbors {
            acc += self.own - *yj;
        }
        acc
    }

    /// `Σ_j (y_i + y_j)`, accumulated in ascending neighbor order.
    pub fn pair_sum(&self) -> DVector<f64> {
        let mut acc = DVector::zeros(self.own.len());
        for (_, yj) in &self.neighbors {
            acc += self.own + *yj;
        }
        acc
    }
}

/// Barrier-synchronized rounds over a fixed graph.
#[derive(Debug, Clone, Copy)]
pub struct SyncNetwork<'g> {
    graph: &'g Graph,
}

impl<'g> SyncNetwork<'g> {
    pub fn new(graph: &'g Graph) -> Self {
        SyncNetwork { graph }
    }

    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    /// Runs one round. `published[i]` is node `i`'s message; `nodes[i]` is the
    /// private state handed to `compute` for node `i` only. Results come back
    /// in node order. On failure the error of the lowest-numbered failing node
    /// is returned, tagged with that node's id.
    pub fn round<S, T, F>(&self, published: &[DVector<f64>], nodes: &mut [S], compute: F) -> Result<Vec<T>>
    where
        S: Send,
        T: Send,
        F: Fn(&mut S, &Inbox<'_>) -> Result<T> + Sync,
    {
        let n = self.graph.n_nodes();
        if published.len() != n || nodes.len() != n {
            return Err(Error::DimensionMismatch {
                context: "network round",
                expected: n,
                found: published.len().min(nodes.len()),
            });
        }
        let graph = self.graph;
        let results: Vec<Result<T>> = nodes
            .par_iter_mut()
            .enumerate()
            .map(|(i, state)| {
                let inbox = Inbox {
                    node: i,
                    own: &published[i],
                    neighbors: graph.neighbors(i)?.iter().map(|&j| (j, &published[j])).collect(),
                };
                compute(state, &inbox).map_err(|e| e.at_agent(i))
            })
            .collect();
        results.into_iter().collect()
    }
}

/// Runs `f` on a dedicated pool with `workers` threads, or on the global pool
/// when `workers` is `None`.
pub fn with_workers<R, F>(workers: Option<usize>, f: F) -> Result<R>
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    match workers {
        None => Ok(f()),
        Some(0) => Err(Error::InvalidConfig("worker count must be positive".into())),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| Error::InvalidConfig(format!("cannot build worker pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}
