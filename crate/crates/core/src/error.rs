use thiserror::Error;

/// Errors raised while validating problem data or running a solver.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid cone: {0}")]
    InvalidCone(String),

    #[error("invalid objective: {0}")]
    InvalidObjective(String),

    #[error("quadratic term is not positive semidefinite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("communication graph is not connected; every agent must be reachable from every other agent")]
    Disconnected,

    #[error("node {node} out of range for a graph with {n_nodes} nodes")]
    NodeOutOfRange { node: usize, n_nodes: usize },

    #[error("cannot place {edges} edges on {nodes} nodes (need nodes >= 3 and nodes <= edges <= nodes*(nodes-1)/2)")]
    InfeasibleEdgeCount { nodes: usize, edges: usize },

    #[error("inner solver did not converge after {iterations} iterations (residual {residual:e})")]
    InnerNotConverged { iterations: usize, residual: f64 },

    #[error("agent {agent}: {source}")]
    Agent {
        agent: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("reference solver failed: {0}")]
    Reference(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at_agent(self, agent: usize) -> Self {
        match self {
            e @ Error::Agent { .. } => e,
            e => Error::Agent {
                agent,
                source: Box::new(e),
            },
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        })
    }
}
