//! Decentralized consensus ADMM for `minimize Σ_i ψ_i(y)` over a connected graph.
//!
//! Two round types are provided, both driven by per-node oracles:
//!
//! * [`prox_round`]: each node minimizes its whole `ψ_i` plus the consensus
//!   penalty;
//! * [`split_round`]: `ψ_i = φ_i + θ_i` is split and the two parts are handled by
//!   separate y- and z-steps coupled through a multiplier `s_i`.
//!
//! Edge variables and their multipliers are eliminated; the only state per
//! node is `y_i`, the aggregated multiplier `p_i` and, for the split form,
//! `s_i` and `z_i`. With `p_i⁰ = 0` the multipliers always sum to zero.

use nalgebra::DVector;

use crate::error::{check_dim, Error, Result};
use crate::graph::Graph;
use crate::network::{Inbox, SyncNetwork};

/// Relative tolerance of the per-round `Σ_i p_i = 0` check.
pub const P_SUM_TOL: f64 = 1e-10;

/// State of one node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeVars {
    pub y: DVector<f64>,
    pub p: DVector<f64>,
    pub s: DVector<f64>,
    pub z: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusState {
    pub nodes: Vec<NodeVars>,
    pub k: usize,
}

impl ConsensusState {
    /// All-zero start in `R^m` for `n` nodes.
    pub fn zeros(n: usize, m: usize) -> Self {
        Self::with_initial(vec![DVector::zeros(m); n], vec![DVector::zeros(m); n], vec![DVector::zeros(m); n])
            .expect("consistent zero initial values")
    }

    /// Caller-chosen `y⁰, z⁰, s⁰`; `p⁰` is always zero.
    pub fn with_initial(y0: Vec<DVector<f64>>, z0: Vec<DVector<f64>>, s0: Vec<DVector<f64>>) -> Result<Self> {
        check_dim("initial z", y0.len(), z0.len())?;
        check_dim("initial s", y0.len(), s0.len())?;
        let m = y0.first().map_or(0, DVector::len);
        let nodes = y0
            .into_iter()
            .zip(z0)
            .zip(s0)
            .map(|((y, z), s)| {
                check_dim("initial y", m, y.len())?;
                check_dim("initial z", m, z.len())?;
                check_dim("initial s", m, s.len())?;
                Ok(NodeVars {
                    p: DVector::zeros(m),
                    y,
                    s,
                    z,
                })
            })
            .collect::<Result<_>>()?;
        Ok(ConsensusState { nodes, k: 0 })
    }

    pub fn dim(&self) -> usize {
        self.nodes.first().map_or(0, |n| n.y.len())
    }

    /// `(1/N) Σ_i y_i`.
    pub fn mean_y(&self) -> DVector<f64> {
        mean(self.nodes.iter().map(|n| &n.y), self.dim())
    }

    /// `max_i ‖y_i - ȳ‖`.
    pub fn consensus_violation(&self) -> f64 {
        let ybar = self.mean_y();
        self.nodes.iter().map(|n| (&n.y - &ybar).norm()).fold(0.0, f64::max)
    }

    pub fn p_sum(&self) -> DVector<f64> {
        self.nodes.iter().fold(DVector::zeros(self.dim()), |acc, n| acc + &n.p)
    }
}

pub(crate) fn mean<'a>(vs: impl Iterator<Item = &'a DVector<f64>>, m: usize) -> DVector<f64> {
    let mut acc = DVector::zeros(m);
    let mut count = 0usize;
    for v in vs {
        acc += v;
        count += 1;
    }
    if count > 0 {
        acc /= count as f64;
    }
    acc
}

/// Errors unless `‖Σ p_i‖ <= tol·(1 + max_i ‖p_i‖)`.
pub fn check_p_sum<'a>(ps: impl Iterator<Item = &'a DVector<f64>>, m: usize) -> Result<()> {
    let mut sum = DVector::zeros(m);
    let mut scale = 0.0f64;
    for p in ps {
        sum += p;
        scale = scale.max(p.norm());
    }
    let err = sum.norm();
    if err <= P_SUM_TOL * (1.0 + scale) {
        Ok(())
    } else {
        Err(Error::Invariant(format!(
            "multipliers do not sum to zero: ‖Σp‖ = {err:e} with max ‖p_i‖ = {scale:e}"
        )))
    }
}

/// Data handed to the y-step of [`prox_round`].
pub struct ProxInput<'a> {
    /// `p_i^{k+1}`.
    pub p: &'a DVector<f64>,
    /// `y_i^k`.
    pub y: &'a DVector<f64>,
    /// `Σ_{j∈N_i} (y_i^k + y_j^k)`.
    pub neighbor_sum: &'a DVector<f64>,
    pub degree: usize,
    pub rho: f64,
}

impl ProxInput<'_> {
    /// The y-step objective equals `ψ(y) + (weight/2)‖y - center‖²` up to a
    /// constant, with `weight = 2ρd` and `center = (ρ·neighbor_sum - p)/weight`.
    /// Undefined for isolated nodes.
    pub fn weight(&self) -> f64 {
        2.0 * self.rho * self.degree as f64
    }

    pub fn center(&self) -> DVector<f64> {
        (self.neighbor_sum * self.rho - self.p) / self.weight()
    }
}

/// Data handed to the y-step of [`split_round`].
pub struct SplitInput<'a> {
    /// `p_i^{k+1}`.
    pub p: &'a DVector<f64>,
    /// `s_i^{k+1}`.
    pub s: &'a DVector<f64>,
    /// `z_i^k`.
    pub z: &'a DVector<f64>,
    pub y: &'a DVector<f64>,
    pub neighbor_sum: &'a DVector<f64>,
    pub degree: usize,
    pub sigma: f64,
    pub rho: f64,
}

impl SplitInput<'_> {
    /// `σ + 2ρd`.
    pub fn weight(&self) -> f64 {
        self.sigma + 2.0 * self.rho * self.degree as f64
    }

    /// `σz + ρ·neighbor_sum - (p + s)`; the y-step objective is
    /// `φ(y) + (weight/2)‖y - r/weight‖²` up to a constant.
    pub fn r(&self) -> DVector<f64> {
        self.z * self.sigma + self.neighbor_sum * self.rho - (self.p + self.s)
    }
}

/// Per-node y-step oracle for [`prox_round`]: returns
/// `argmin_y ψ_i(y) + <y, p> + ρ Σ_j ‖y - (y_i + y_j)/2‖²`.
pub trait ProxOracle: Send {
    fn y_step(&mut self, input: &ProxInput<'_>) -> Result<DVector<f64>>;
}

impl<F> ProxOracle for F
where
    F: FnMut(&ProxInput<'_>) -> Result<DVector<f64>> + Send,
{
    fn y_step(&mut self, input: &ProxInput<'_>) -> Result<DVector<f64>> {
        self(input)
    }
}

/// Per-node oracles for [`split_round`].
pub trait SplitOracle: Send {
    /// `argmin_y φ_i(y) + <y, p + s> + (σ/2)‖y - z‖² + ρ Σ_j ‖y - (y_i + y_j)/2‖²`.
    fn y_step(&mut self, input: &SplitInput<'_>) -> Result<DVector<f64>>;

    /// `argmin_z θ_i(z) - <z, s> + (σ/2)‖z - y‖²`, i.e. the prox of `θ_i/σ`
    /// at `y + s/σ`.
    fn z_step(&mut self, s: &DVector<f64>, y: &DVector<f64>, sigma: f64) -> Result<DVector<f64>>;
}

fn check_params(state: &ConsensusState, graph: &Graph, rho: f64) -> Result<()> {
    check_dim("consensus nodes", graph.n_nodes(), state.nodes.len())?;
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::InvalidConfig(format!("rho must be positive, got {rho}")));
    }
    Ok(())
}

fn publish(state: &ConsensusState) -> Vec<DVector<f64>> {
    state.nodes.iter().map(|n| n.y.clone()).collect()
}

/// One synchronous round of single-function consensus ADMM:
/// exchange `y^k`, then per node `p ← p + ρΣ(y_i - y_j)` and the y-step.
pub fn prox_round<O: ProxOracle>(
    state: &mut ConsensusState,
    graph: &Graph,
    rho: f64,
    oracles: &mut [O],
) -> Result<()> {
    check_params(state, graph, rho)?;
    check_dim("oracles", graph.n_nodes(), oracles.len())?;
    let published = publish(state);
    let mut work: Vec<_> = state.nodes.iter_mut().zip(oracles.iter_mut()).collect();
    SyncNetwork::new(graph).round(&published, &mut work, |(vars, oracle), inbox: &Inbox<'_>| {
        vars.p.axpy(rho, &inbox.difference_sum(), 1.0);
        let neighbor_sum = inbox.pair_sum();
        let y = oracle.y_step(&ProxInput {
            p: &vars.p,
            y: inbox.own(),
            neighbor_sum: &neighbor_sum,
            degree: inbox.degree(),
            rho,
        })?;
        check_dim("oracle y", vars.y.len(), y.len())?;
        vars.y = y;
        Ok(())
    })?;
    state.k += 1;
    check_p_sum(state.nodes.iter().map(|n| &n.p), state.dim())
}

/// One synchronous round of split consensus ADMM, updating `p, s, y, z` in
/// that order with only `k`-iterate neighbor data.
pub fn split_round<O: SplitOracle>(
    state: &mut ConsensusState,
    graph: &Graph,
    sigma: f64,
    rho: f64,
    oracles: &mut [O],
) -> Result<()> {
    check_params(state, graph, rho)?;
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidConfig(format!("sigma must be positive, got {sigma}")));
    }
    check_dim("oracles", graph.n_nodes(), oracles.len())?;
    let published = publish(state);
    let mut work: Vec<_> = state.nodes.iter_mut().zip(oracles.iter_mut()).collect();
    SyncNetwork::new(graph).round(&published, &mut work, |(vars, oracle), inbox: &Inbox<'_>| {
        vars.p.axpy(rho, &inbox.difference_sum(), 1.0);
        vars.s += (&vars.y - &vars.z) * sigma;
        let neighbor_sum = inbox.pair_sum();
        let y = oracle.y_step(&SplitInput {
            p: &vars.p,
            s: &vars.s,
            z: &vars.z,
            y: inbox.own(),
            neighbor_sum: &neighbor_sum,
            degree: inbox.degree(),
            sigma,
            rho,
        })?;
        check_dim("oracle y", vars.y.len(), y.len())?;
        let z = oracle.z_step(&vars.s, &y, sigma)?;
        check_dim("oracle z", vars.z.len(), z.len())?;
        vars.y = y;
        vars.z = z;
        Ok(())
    })?;
    state.k += 1;
    check_p_sum(state.nodes.iter().map(|n| &n.p), state.dim())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cones::ConeSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type BoxedOracle = Box<dyn FnMut(&ProxInput<'_>) -> Result<DVector<f64>> + Send>;

    /// ψ(y) = ½‖y - c‖².
    fn mean_oracle(c: DVector<f64>) -> impl FnMut(&ProxInput<'_>) -> Result<DVector<f64>> + Send {
        move |inp: &ProxInput<'_>| {
            Ok((&c - inp.p + inp.neighbor_sum * inp.rho) / (1.0 + inp.weight()))
        }
    }

    /// φ(y) = ½‖y - c‖², θ = indicator of a cone (or zero when `cone` is None).
    struct MeanSplitOracle {
        c: DVector<f64>,
        cone: Option<ConeSpec>,
    }

    impl SplitOracle for MeanSplitOracle {
        fn y_step(&mut self, inp: &SplitInput<'_>) -> Result<DVector<f64>> {
            Ok((&self.c + inp.r()) / (1.0 + inp.weight()))
        }

        fn z_step(&mut self, s: &DVector<f64>, y: &DVector<f64>, sigma: f64) -> Result<DVector<f64>> {
            let v = y + s / sigma;
            match &self.cone {
                Some(k) => k.project(&v),
                None => Ok(v),
            }
        }
    }

    fn random_data(seed: u64, n: usize, m: usize) -> Vec<DVector<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| DVector::from_fn(m, |_, _| rng.random_range(-5.0..5.0)))
            .collect()
    }

    fn test_graph() -> Graph {
        Graph::small_world(8, 11, &mut ChaCha8Rng::seed_from_u64(3)).unwrap()
    }

    #[test]
    fn prox_engine_reaches_the_mean() {
        let g = test_graph();
        let cs = random_data(1, 8, 3);
        let target = mean(cs.iter(), 3);
        let mut oracles: Vec<_> = cs.iter().cloned().map(mean_oracle).collect();
        let mut state = ConsensusState::zeros(8, 3);
        for _ in 0..500 {
            prox_round(&mut state, &g, 1.0, &mut oracles).unwrap();
        }
        for n in &state.nodes {
            assert!((&n.y - &target).norm() <= 1e-6);
        }
        assert!(state.consensus_violation() < 1e-5);
        assert_eq!(state.k, 500);
    }

    #[test]
    fn single_node_takes_one_step() {
        let g = Graph::new(1, &[]).unwrap();
        let c = DVector::from_vec(vec![1.0, -2.0]);
        let mut oracles = vec![mean_oracle(c.clone())];
        let mut state = ConsensusState::zeros(1, 2);
        prox_round(&mut state, &g, 1.0, &mut oracles).unwrap();
        assert_eq!(state.nodes[0].y, c);
    }

    #[test]
    fn indicator_pins_the_consensus_value() {
        let g = Graph::new(2, &[(0, 1)]).unwrap();
        let a = DVector::from_vec(vec![0.5, 1.5]);
        let b = DVector::from_vec(vec![-3.0, 2.0]);
        let a_clone = a.clone();
        let pinned = move |_: &ProxInput<'_>| Ok(a_clone.clone());
        let quad = mean_oracle(b);
        let mut oracles: Vec<BoxedOracle> = vec![Box::new(pinned), Box::new(quad)];
        let mut state = ConsensusState::zeros(2, 2);
        for _ in 0..300 {
            prox_round(&mut state, &g, 1.0, &mut oracles).unwrap();
        }
        for n in &state.nodes {
            assert!((&n.y - &a).norm() < 1e-8);
        }
    }

    #[test]
    fn split_engine_agrees_with_prox_engine() {
        let g = test_graph();
        let cs = random_data(2, 8, 2);
        let target = mean(cs.iter(), 2);
        let mut oracles: Vec<_> = cs.iter().map(|c| MeanSplitOracle { c: c.clone(), cone: None }).collect();
        let mut state = ConsensusState::zeros(8, 2);
        for _ in 0..1000 {
            split_round(&mut state, &g, 1.0, 1.0, &mut oracles).unwrap();
        }
        for n in &state.nodes {
            assert!((&n.y - &target).norm() <= 1e-6);
        }
    }

    #[test]
    fn a2_with_cone_indicator_matches_constrained_minimizer() {
        // minimize Σ ½‖y - c_i‖² over y in the nonpositive orthant (the polar
        // of R^2_+): the minimizer is min(mean, 0) componentwise. Check against
        // a brute-force grid as well.
        let g = Graph::new(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let cs = [
            DVector::from_vec(vec![1.0, -2.0]),
            DVector::from_vec(vec![3.0, -1.0]),
            DVector::from_vec(vec![-1.0, 0.5]),
            DVector::from_vec(vec![0.5, -0.5]),
        ];
        let nonpos = ConeSpec::nonneg(2).unwrap();
        let mut oracles: Vec<_> = cs
            .iter()
            .map(|c| MeanSplitOracle {
                c: c.clone(),
                cone: None,
            })
            .collect();
        struct Polarized(MeanSplitOracle, ConeSpec);
        impl SplitOracle for Polarized {
            fn y_step(&mut self, inp: &SplitInput<'_>) -> Result<DVector<f64>> {
                self.0.y_step(inp)
            }
            fn z_step(&mut self, s: &DVector<f64>, y: &DVector<f64>, sigma: f64) -> Result<DVector<f64>> {
                self.1.project_polar(&(y + s / sigma))
            }
        }
        let mut oracles: Vec<_> = oracles.drain(..).map(|o| Polarized(o, nonpos.clone())).collect();
        let mut state = ConsensusState::zeros(4, 2);
        for _ in 0..3000 {
            split_round(&mut state, &g, 1.0, 1.0, &mut oracles).unwrap();
        }
        let obj = |y: [f64; 2]| {
            cs.iter()
                .map(|c| 0.5 * ((y[0] - c[0]).powi(2) + (y[1] - c[1]).powi(2)))
                .sum::<f64>()
        };
        let mut best = ([0.0, 0.0], f64::INFINITY);
        for i in 0..=400 {
            for j in 0..=400 {
                let y = [-4.0 + 0.01 * i as f64, -4.0 + 0.01 * j as f64];
                if y[0] <= 0.0 && y[1] <= 0.0 && obj(y) < best.1 {
                    best = (y, obj(y));
                }
            }
        }
        let expected = [0.0, -0.75];
        assert!((best.0[0] - expected[0]).abs() <= 0.01 && (best.0[1] - expected[1]).abs() <= 0.01);
        for n in &state.nodes {
            assert!((n.y[0] - expected[0]).abs() < 1e-6, "{}", n.y);
            assert!((n.y[1] - expected[1]).abs() < 1e-6, "{}", n.y);
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let g = test_graph();
        let cs = random_data(5, 8, 3);
        let run = || {
            let mut oracles: Vec<_> = cs.iter().map(|c| MeanSplitOracle { c: c.clone(), cone: None }).collect();
            let mut state = ConsensusState::zeros(8, 3);
            for _ in 0..50 {
                split_round(&mut state, &g, 0.7, 1.3, &mut oracles).unwrap();
            }
            state
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn multipliers_sum_to_zero_every_round() {
        let g = test_graph();
        let cs = random_data(6, 8, 4);
        let mut oracles: Vec<_> = cs.iter().cloned().map(mean_oracle).collect();
        let mut state = ConsensusState::zeros(8, 4);
        for _ in 0..200 {
            prox_round(&mut state, &g, 2.5, &mut oracles).unwrap();
            let scale = state.nodes.iter().map(|n| n.p.norm()).fold(0.0, f64::max);
            assert!(state.p_sum().norm() <= 1e-10 * (1.0 + scale));
        }
    }

    #[test]
    fn rounds_are_permutation_equivariant() {
        let n = 6;
        let edges = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (0, 3)];
        let perm = [3, 5, 0, 1, 4, 2];
        let g = Graph::new(n, &edges).unwrap();
        let pg = Graph::new(n, &edges.map(|(i, j)| (perm[i], perm[j]))).unwrap();
        let cs = random_data(7, n, 2);
        let mut pcs = vec![DVector::zeros(2); n];
        for i in 0..n {
            pcs[perm[i]] = cs[i].clone();
        }
        let mut o1: Vec<_> = cs.iter().cloned().map(mean_oracle).collect();
        let mut o2: Vec<_> = pcs.iter().cloned().map(mean_oracle).collect();
        let mut s1 = ConsensusState::zeros(n, 2);
        let mut s2 = ConsensusState::zeros(n, 2);
        for _ in 0..40 {
            prox_round(&mut s1, &g, 1.0, &mut o1).unwrap();
            prox_round(&mut s2, &pg, 1.0, &mut o2).unwrap();
        }
        // Neighbor sums are accumulated in ascending id order, which the
        // relabeling changes, so agreement is up to rounding.
        for (i, &pi) in perm.iter().enumerate() {
            assert!((&s1.nodes[i].y - &s2.nodes[pi].y).amax() <= 1e-12);
            assert!((&s1.nodes[i].p - &s2.nodes[pi].p).amax() <= 1e-12);
        }

        let mut a: Vec<_> = cs.iter().map(|c| MeanSplitOracle { c: c.clone(), cone: None }).collect();
        let mut b: Vec<_> = pcs.iter().map(|c| MeanSplitOracle { c: c.clone(), cone: None }).collect();
        let mut s1 = ConsensusState::zeros(n, 2);
        let mut s2 = ConsensusState::zeros(n, 2);
        for _ in 0..40 {
            split_round(&mut s1, &g, 0.5, 1.0, &mut a).unwrap();
            split_round(&mut s2, &pg, 0.5, 1.0, &mut b).unwrap();
        }
        for (i, &pi) in perm.iter().enumerate() {
            assert!((&s1.nodes[i].y - &s2.nodes[pi].y).amax() <= 1e-12);
            assert!((&s1.nodes[i].z - &s2.nodes[pi].z).amax() <= 1e-12);
        }
    }

    #[test]
    fn oracle_failure_names_the_node() {
        let g = Graph::new(2, &[(0, 1)]).unwrap();
        let mut oracles: Vec<BoxedOracle> = vec![
            Box::new(|_: &ProxInput<'_>| Ok(DVector::zeros(1))),
            Box::new(|_: &ProxInput<'_>| Err(Error::InvalidConfig("boom".into()))),
        ];
        let mut state = ConsensusState::zeros(2, 1);
        let err = prox_round(&mut state, &g, 1.0, &mut oracles).unwrap_err();
        assert!(matches!(err, Error::Agent { agent: 1, .. }));
        assert!(prox_round(&mut state, &g, 0.0, &mut oracles).is_err());
    }
}
