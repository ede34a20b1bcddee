//! Dual consensus ADMM for cone-coupled separable problems
//!
//! ```text
//! minimize Σ_i f_i(x_i)   subject to   Σ_i (A_i x_i - b_i) ∈ K
//! ```
//!
//! over a connected network, one agent per block. Agents agree on the dual
//! vector `y` and only ever exchange their current `y_i` with neighbors.
//!
//! * [`Algorithm::Aggregate`] keeps the cone inside each agent's inner problem
//!   (joint minimization over `(x_i, t_i)` with `t_i ∈ K`).
//! * [`Algorithm::Decomposed`] moves the cone to a separate polar projection
//!   (`z_i`), leaving an unconstrained regularized inner problem.
//!
//! A primal certificate is recovered as `w = Σ t_i` (aggregate) or
//! `w = Σ s_i` (decomposed).

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cones::{ConeSpec, ConvexCone};
use crate::consensus::{check_p_sum, mean};
use crate::error::{check_dim, Error, Result};
use crate::graph::Graph;
use crate::network::{with_workers, Inbox, SyncNetwork};
use crate::objectives::{matrix_to_rows, LocalObjective};
use crate::subproblem::{InnerConfig, InnerSolution, InnerSolver};

/// Private data of one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub objective: LocalObjective,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl Agent {
    pub fn new(objective: LocalObjective, a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        objective.check_dim(a.ncols())?;
        check_dim("agent b", a.nrows(), b.len())?;
        Ok(Agent { objective, a, b })
    }

    pub fn n_vars(&self) -> usize {
        self.a.ncols()
    }
}

/// A validated instance: agents, coupling cone and communication graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProblemRepr", into = "ProblemRepr")]
pub struct CoupledProblem {
    agents: Vec<Agent>,
    cone: ConeSpec,
    graph: Graph,
}

impl CoupledProblem {
    pub fn new(agents: Vec<Agent>, cone: ConeSpec, graph: Graph) -> Result<Self> {
        cone.validate()?;
        if agents.is_empty() {
            return Err(Error::InvalidInstance("at least one agent is required".into()));
        }
        check_dim("graph nodes vs agents", agents.len(), graph.n_nodes())?;
        if !graph.is_connected() {
            return Err(Error::Disconnected);
        }
        let m = cone.dim();
        for (i, agent) in agents.iter().enumerate() {
            check_dim("coupling rows", m, agent.a.nrows()).map_err(|e| e.at_agent(i))?;
            check_dim("agent b", m, agent.b.len()).map_err(|e| e.at_agent(i))?;
            agent.objective.check_dim(agent.a.ncols()).map_err(|e| e.at_agent(i))?;
        }
        Ok(CoupledProblem { agents, cone, graph })
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn cone(&self) -> &ConeSpec {
        &self.cone
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    /// Dimension `m` of the coupling constraint.
    pub fn dim(&self) -> usize {
        self.cone.dim()
    }

    /// `Σ_i (A_i x_i - b_i)`.
    pub fn coupling_sum(&self, xs: &[DVector<f64>]) -> Result<DVector<f64>> {
        check_dim("primal blocks", self.agents.len(), xs.len())?;
        let mut sum = DVector::zeros(self.dim());
        for (agent, x) in self.agents.iter().zip(xs) {
            check_dim("primal block", agent.n_vars(), x.len())?;
            sum.gemv(1.0, &agent.a, x, 1.0);
            sum -= &agent.b;
        }
        Ok(sum)
    }

    /// `Σ_i f_i(x_i)`; `+∞` if some block is outside an indicator's domain.
    pub fn objective_value(&self, xs: &[DVector<f64>]) -> Result<f64> {
        check_dim("primal blocks", self.agents.len(), xs.len())?;
        self.agents
            .iter()
            .zip(xs)
            .map(|(agent, x)| agent.objective.eval(x))
            .sum()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemRepr {
    graph: Graph,
    cone: ConeSpec,
    agents: Vec<AgentRepr>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentRepr {
    objective: LocalObjective,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
}

impl TryFrom<ProblemRepr> for CoupledProblem {
    type Error = Error;

    fn try_from(r: ProblemRepr) -> Result<Self> {
        let agents = r
            .agents
            .into_iter()
            .enumerate()
            .map(|(i, a)| {
                let ncols = a.a.first().map_or(0, Vec::len);
                if let Some(bad) = a.a.iter().position(|row| row.len() != ncols) {
                    return Err(Error::InvalidInstance(format!(
                        "agent {i}: row {bad} of A has length {}, expected {ncols}",
                        a.a[bad].len()
                    )));
                }
                let m = DMatrix::from_fn(a.a.len(), ncols, |r, c| a.a[r][c]);
                Agent::new(a.objective, m, DVector::from_vec(a.b)).map_err(|e| e.at_agent(i))
            })
            .collect::<Result<_>>()?;
        CoupledProblem::new(agents, r.cone, r.graph)
    }
}

impl From<CoupledProblem> for ProblemRepr {
    fn from(p: CoupledProblem) -> Self {
        ProblemRepr {
            graph: p.graph,
            cone: p.cone,
            agents: p
                .agents
                .into_iter()
                .map(|a| AgentRepr {
                    a: matrix_to_rows(&a.a),
                    b: a.b.as_slice().to_vec(),
                    objective: a.objective,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Aggregate,
    Decomposed,
}

impl Algorithm {
    pub const ALL: [Algorithm; 2] = [Algorithm::Aggregate, Algorithm::Decomposed];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Aggregate => "aggregate",
            Algorithm::Decomposed => "decomposed",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "aggregate" => Ok(Algorithm::Aggregate),
            "decomposed" => Ok(Algorithm::Decomposed),
            other => Err(Error::InvalidConfig(format!(
                "unknown algorithm {other:?} (expected aggregate or decomposed)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    pub rho: f64,
    /// Used by the decomposed variant only.
    pub sigma: f64,
    pub max_iter: usize,
    /// Relative tolerance on every optimality residual; `0` disables early
    /// termination.
    pub tol: f64,
    pub inner: InnerConfig,
    /// Extra attempts for a failed inner solve, each with ten times the
    /// iteration budget of the previous one, continuing from where it stopped.
    pub inner_retries: usize,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            algorithm: Algorithm::Aggregate,
            rho: 1.0,
            sigma: 1.0,
            max_iter: 1000,
            tol: 1e-6,
            inner: InnerConfig::default(),
            inner_retries: 2,
            workers: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::InvalidConfig(format!("rho must be positive, got {}", self.rho)));
        }
        if self.algorithm == Algorithm::Decomposed && !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.tol >= 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidConfig(format!("tolerance must be nonnegative, got {}", self.tol)));
        }
        if self.inner.tol.is_nan() || self.inner.tol <= 0.0 || self.inner.max_iter == 0 {
            return Err(Error::InvalidConfig(
                "inner tolerance must be positive and the inner iteration budget nonzero".into(),
            ));
        }
        if self.workers == Some(0) {
            return Err(Error::InvalidConfig("worker count must be positive".into()));
        }
        Ok(())
    }
}

/// Inner-solver policy for one round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerPolicy {
    pub config: InnerConfig,
    pub retries: usize,
}

impl From<&SolverConfig> for InnerPolicy {
    fn from(c: &SolverConfig) -> Self {
        InnerPolicy {
            config: c.inner,
            retries: c.inner_retries,
        }
    }
}

impl Default for InnerPolicy {
    fn default() -> Self {
        InnerPolicy {
            config: InnerConfig::default(),
            retries: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum VariantState {
    Aggregate { t: DVector<f64> },
    Decomposed { s: DVector<f64>, z: DVector<f64> },
}

/// Everything one agent keeps between rounds.
#[derive(Debug, Clone)]
pub struct AgentRunState {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub p: DVector<f64>,
    /// Shift of the last inner problem.
    pub r: DVector<f64>,
    pub variant: VariantState,
    /// Inner iterations spent in the last round, retries included.
    pub inner_iterations: usize,
    solver: Option<InnerSolver>,
}

impl AgentRunState {
    /// All-zero start.
    pub fn new(agent: &Agent, m: usize, algorithm: Algorithm) -> Self {
        let variant = match algorithm {
            Algorithm::Aggregate => VariantState::Aggregate { t: DVector::zeros(m) },
            Algorithm::Decomposed => VariantState::Decomposed {
                s: DVector::zeros(m),
                z: DVector::zeros(m),
            },
        };
        AgentRunState {
            x: DVector::zeros(agent.n_vars()),
            y: DVector::zeros(m),
            p: DVector::zeros(m),
            r: DVector::zeros(m),
            variant,
            inner_iterations: 0,
            solver: None,
        }
    }

    pub fn algorithm(&self) -> Algorithm {
        match self.variant {
            VariantState::Aggregate { .. } => Algorithm::Aggregate,
            VariantState::Decomposed { .. } => Algorithm::Decomposed,
        }
    }

    /// The agent's contribution to `w`: `t_i` or `s_i`.
    pub fn w_part(&self) -> &DVector<f64> {
        match &self.variant {
            VariantState::Aggregate { t } => t,
            VariantState::Decomposed { s, .. } => s,
        }
    }

    fn solver(&mut self, agent: &Agent, gamma: f64, inner: InnerConfig) -> Result<&mut InnerSolver> {
        let stale = self.solver.as_ref().is_none_or(|s| s.gamma() != gamma);
        if stale {
            let mut solver = InnerSolver::new(&agent.objective, &agent.a, gamma, inner)?;
            solver.set_warm_start(self.x.clone())?;
            self.solver = Some(solver);
        }
        Ok(self.solver.as_mut().expect("solver initialized above"))
    }
}

/// Zero initial states for every agent.
pub fn initial_states(problem: &CoupledProblem, algorithm: Algorithm) -> Vec<AgentRunState> {
    problem
        .agents
        .iter()
        .map(|a| AgentRunState::new(a, problem.dim(), algorithm))
        .collect()
}

fn solve_with_retries(
    solver: &mut InnerSolver,
    policy: InnerPolicy,
    mut solve: impl FnMut(&mut InnerSolver) -> Result<InnerSolution>,
) -> Result<(InnerSolution, usize)> {
    let mut cfg = policy.config;
    let mut spent = 0usize;
    for attempt in 0..=policy.retries {
        solver.set_config(cfg);
        let result = solve(solver);
        match result {
            Err(Error::InnerNotConverged { iterations, .. }) if attempt < policy.retries => {
                spent += iterations;
                cfg.max_iter = cfg.max_iter.saturating_mul(10);
            }
            other => {
                solver.set_config(policy.config);
                return other.map(|sol| {
                    let total = spent + sol.inner_iterations;
                    (sol, total)
                });
            }
        }
    }
    unreachable!("the last attempt always returns")
}

fn check_states(problem: &CoupledProblem, states: &[AgentRunState], algorithm: Algorithm) -> Result<()> {
    check_dim("agent states", problem.n_agents(), states.len())?;
    if let Some(i) = states.iter().position(|s| s.algorithm() != algorithm) {
        return Err(Error::InvalidConfig(format!(
            "agent {i} holds {} state but a {algorithm} round was requested",
            states[i].algorithm()
        )));
    }
    Ok(())
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")))
    }
}

/// Runs `compute` for every agent on its own data and state only.
fn agent_round(
    problem: &CoupledProblem,
    states: &mut [AgentRunState],
    compute: impl Fn(&Agent, &mut AgentRunState, &Inbox<'_>) -> Result<()> + Sync,
) -> Result<()> {
    let published: Vec<_> = states.iter().map(|s| s.y.clone()).collect();
    let mut work: Vec<(&Agent, &mut AgentRunState)> = problem.agents.iter().zip(states.iter_mut()).collect();
    SyncNetwork::new(&problem.graph).round(&published, &mut work, |(agent, state), inbox| {
        compute(agent, state, inbox)
    })?;
    check_p_sum(states.iter().map(|s| &s.p), problem.dim())
}

/// One round of the aggregate variant. Per agent, with `d` its degree:
///
/// ```text
/// p ← p + ρ Σ_j (y_i - y_j)
/// r ← ρ Σ_j (y_i + y_j) - (b + p)
/// (x, t) ← argmin f(x) + I_K(t) + ‖Ax + r - t‖² / (4ρd)
/// y ← Π_{K°}(Ax + r) / (2ρd)  =  (Ax + r - t) / (2ρd)
/// ```
pub fn aggregate_round(
    problem: &CoupledProblem,
    states: &mut [AgentRunState],
    rho: f64,
    inner: InnerPolicy,
) -> Result<()> {
    check_positive("rho", rho)?;
    check_states(problem, states, Algorithm::Aggregate)?;
    if problem.n_agents() < 2 {
        return Err(Error::InvalidConfig(
            "the aggregate variant needs at least two agents (every agent must have a neighbor)".into(),
        ));
    }
    let cone = &problem.cone;
    agent_round(problem, states, |agent, state, inbox| {
        state.p.axpy(rho, &inbox.difference_sum(), 1.0);
        let mut r = inbox.pair_sum() * rho;
        r -= &agent.b;
        r -= &state.p;
        let gamma = 2.0 * rho * inbox.degree() as f64;
        let solver = state.solver(agent, gamma, inner.config)?;
        let (sol, spent) = solve_with_retries(solver, inner, |s| s.solve_aggregate(&r, cone))?;
        let t = sol.t.expect("aggregate solve returns t");
        let mut y = &agent.a * &sol.x + &r;
        y -= &t;
        y /= gamma;
        state.x = sol.x;
        state.y = y;
        state.r = r;
        state.variant = VariantState::Aggregate { t };
        state.inner_iterations = spent;
        Ok(())
    })
}

/// One round of the decomposed variant, in the order `p, s, r, x, y, z`:
///
/// ```text
/// p ← p + ρ Σ_j (y_i - y_j)
/// s ← s + σ (y - z)
/// r ← σ z + ρ Σ_j (y_i + y_j) - (b + p + s)
/// x ← argmin f(x) + ‖Ax + r‖² / (2(σ + 2ρd))
/// y ← (Ax + r) / (σ + 2ρd)
/// z ← Π_{K°}(y + s/σ)
/// ```
pub fn decomposed_round(
    problem: &CoupledProblem,
    states: &mut [AgentRunState],
    sigma: f64,
    rho: f64,
    inner: InnerPolicy,
) -> Result<()> {
    check_positive("rho", rho)?;
    check_positive("sigma", sigma)?;
    check_states(problem, states, Algorithm::Decomposed)?;
    let cone = &problem.cone;
    agent_round(problem, states, |agent, state, inbox| {
        state.p.axpy(rho, &inbox.difference_sum(), 1.0);
        let VariantState::Decomposed { s, z } = &mut state.variant else {
            unreachable!("variant checked before the round");
        };
        s.axpy(sigma, &(&state.y - &*z), 1.0);
        let mut r = &*z * sigma + inbox.pair_sum() * rho;
        r -= &agent.b;
        r -= &state.p;
        r -= &*s;
        let (s, z_old) = (s.clone(), z.clone());
        let gamma = sigma + 2.0 * rho * inbox.degree() as f64;
        let solver = state.solver(agent, gamma, inner.config)?;
        let (sol, spent) = solve_with_retries(solver, inner, |sv| sv.solve_decomposed(&r))?;
        let y = (&agent.a * &sol.x + &r) / gamma;
        let mut z = z_old;
        let probe = &y + &s / sigma;
        cone.project_polar_into(probe.as_slice(), z.as_mut_slice());
        state.x = sol.x;
        state.y = y;
        state.r = r;
        state.variant = VariantState::Decomposed { s, z };
        state.inner_iterations = spent;
        Ok(())
    })
}

/// Stacked `x = (x_i)` and the cone certificate `w`.
pub fn primal_recover(states: &[AgentRunState]) -> (DVector<f64>, DVector<f64>) {
    let x: Vec<f64> = states.iter().flat_map(|s| s.x.iter().copied()).collect();
    let m = states.first().map_or(0, |s| s.y.len());
    let w = states.iter().fold(DVector::zeros(m), |acc, s| acc + s.w_part());
    (DVector::from_vec(x), w)
}

/// First-order optimality residuals of the recovered primal-dual pair, each
/// with the scale it is compared against.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Residuals {
    /// `‖x_i - prox_{f_i}(x_i - A_iᵀ y_i)‖` per agent.
    pub stationarity: Vec<f64>,
    /// `dist_K(w)`.
    pub cone_membership: f64,
    /// `|⟨ȳ, w⟩| + dist_{K°}(ȳ)`.
    pub complementarity: f64,
    /// `‖Σ (A_i x_i - b_i) - w‖`.
    pub coupling: f64,
    /// `max_i ‖y_i - ȳ‖`.
    pub consensus: f64,
    pub scales: ResidualScales,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualScales {
    /// `1 + max(‖x_i‖, ‖A_iᵀ y_i‖)`.
    pub stationarity: Vec<f64>,
    /// `1 + ‖w‖`.
    pub cone_membership: f64,
    /// `(1 + ‖ȳ‖)(1 + ‖w‖)`.
    pub complementarity: f64,
    /// `1 + max(‖w‖, Σ‖b_i‖, Σ‖A_i x_i‖)`.
    pub coupling: f64,
    /// `1 + ‖ȳ‖`.
    pub consensus: f64,
}

impl Residuals {
    pub fn max_stationarity(&self) -> f64 {
        self.stationarity.iter().copied().fold(0.0, f64::max)
    }

    /// Largest residual-to-scale ratio.
    pub fn worst_ratio(&self) -> f64 {
        let s = &self.scales;
        let stationarity = self
            .stationarity
            .iter()
            .zip(&s.stationarity)
            .map(|(r, sc)| r / sc)
            .fold(0.0, f64::max);
        [
            stationarity,
            self.cone_membership / s.cone_membership,
            self.complementarity / s.complementarity,
            self.coupling / s.coupling,
            self.consensus / s.consensus,
        ]
        .into_iter()
        .fold(0.0, |acc, v| if v.is_nan() { f64::INFINITY } else { acc.max(v) })
    }

    /// Every residual is at most `tol` times its scale.
    pub fn satisfied(&self, tol: f64) -> bool {
        self.worst_ratio() <= tol
    }
}

pub fn optimality_residuals(problem: &CoupledProblem, states: &[AgentRunState]) -> Result<Residuals> {
    check_dim("agent states", problem.n_agents(), states.len())?;
    let m = problem.dim();
    let (_, w) = primal_recover(states);
    check_dim("certificate", m, w.len())?;
    let ybar = mean(states.iter().map(|s| &s.y), m);

    let mut stationarity = Vec::with_capacity(states.len());
    let mut stationarity_scale = Vec::with_capacity(states.len());
    let mut sum = DVector::zeros(m);
    let (mut b_norms, mut ax_norms) = (0.0, 0.0);
    for (agent, state) in problem.agents.iter().zip(states) {
        let aty = agent.a.tr_mul(&state.y);
        let fixed = agent.objective.prox(&(&state.x - &aty), 1.0)?;
        stationarity.push((&state.x - fixed).norm());
        stationarity_scale.push(1.0 + state.x.norm().max(aty.norm()));
        let ax = &agent.a * &state.x;
        ax_norms += ax.norm();
        b_norms += agent.b.norm();
        sum += ax - &agent.b;
    }

    let w_norm = w.norm();
    let ybar_norm = ybar.norm();
    Ok(Residuals {
        stationarity,
        cone_membership: problem.cone.dist(&w)?,
        complementarity: ybar.dot(&w).abs() + problem.cone.polar_dist(&ybar)?,
        coupling: (sum - &w).norm(),
        consensus: states.iter().map(|s| (&s.y - &ybar).norm()).fold(0.0, f64::max),
        scales: ResidualScales {
            stationarity: stationarity_scale,
            cone_membership: 1.0 + w_norm,
            complementarity: (1.0 + ybar_norm) * (1.0 + w_norm),
            coupling: 1.0 + w_norm.max(b_norms).max(ax_norms),
            consensus: 1.0 + ybar_norm,
        },
    })
}

/// One line of the iterate log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub objective: f64,
    pub stationarity: f64,
    pub cone_membership: f64,
    pub complementarity: f64,
    pub coupling: f64,
    pub consensus: f64,
    /// Largest residual-to-scale ratio.
    pub worst_ratio: f64,
    /// Inner iterations summed over agents.
    pub inner_iterations: usize,
}

impl IterationRecord {
    fn new(iter: usize, problem: &CoupledProblem, states: &[AgentRunState], res: &Residuals) -> Result<Self> {
        let xs: Vec<_> = states.iter().map(|s| s.x.clone()).collect();
        Ok(IterationRecord {
            iter,
            objective: problem.objective_value(&xs)?,
            stationarity: res.max_stationarity(),
            cone_membership: res.cone_membership,
            complementarity: res.complementarity,
            coupling: res.coupling,
            consensus: res.consensus,
            worst_ratio: res.worst_ratio(),
            inner_iterations: states.iter().map(|s| s.inner_iterations).sum(),
        })
    }
}

#[derive(Debug)]
pub enum Termination {
    /// All residuals met the tolerance.
    Converged,
    /// Iteration budget exhausted first.
    MaxIter,
    /// A round failed; the log and states stop at the last completed round.
    Failed(Error),
}

#[derive(Debug)]
pub struct RunReport {
    pub termination: Termination,
    /// Completed rounds.
    pub iterations: usize,
    /// Entry `k` describes the state after `k` rounds, starting at `0`.
    pub log: Vec<IterationRecord>,
    pub states: Vec<AgentRunState>,
    pub residuals: Residuals,
}

impl RunReport {
    pub fn converged(&self) -> bool {
        matches!(self.termination, Termination::Converged)
    }

    pub fn primal(&self) -> (DVector<f64>, DVector<f64>) {
        primal_recover(&self.states)
    }

    pub fn xs(&self) -> Vec<DVector<f64>> {
        self.states.iter().map(|s| s.x.clone()).collect()
    }
}

/// Read-only view handed to the per-iteration callback.
pub struct IterationView<'a> {
    pub iter: usize,
    pub states: &'a [AgentRunState],
    pub residuals: &'a Residuals,
    pub record: &'a IterationRecord,
}

/// Runs one round of the configured variant.
pub fn round(problem: &CoupledProblem, states: &mut [AgentRunState], config: &SolverConfig) -> Result<()> {
    match config.algorithm {
        Algorithm::Aggregate => aggregate_round(problem, states, config.rho, config.into()),
        Algorithm::Decomposed => decomposed_round(problem, states, config.sigma, config.rho, config.into()),
    }
}

/// Runs from the zero state until every residual is within `config.tol` of
/// its scale or `config.max_iter` rounds are done. `callback` sees the state
/// after every round, including the initial one.
pub fn run(
    problem: &CoupledProblem,
    config: &SolverConfig,
    mut callback: impl FnMut(&IterationView<'_>) + Send,
) -> Result<RunReport> {
    config.validate()?;
    if config.algorithm == Algorithm::Aggregate && problem.n_agents() < 2 {
        return Err(Error::InvalidConfig(
            "the aggregate variant needs at least two agents (every agent must have a neighbor)".into(),
        ));
    }
    with_workers(config.workers, || {
        let mut states = initial_states(problem, config.algorithm);
        let mut log = Vec::with_capacity(config.max_iter.min(1 << 16) + 1);
        let mut residuals = optimality_residuals(problem, &states)?;
        let record = IterationRecord::new(0, problem, &states, &residuals)?;
        callback(&IterationView {
            iter: 0,
            states: &states,
            residuals: &residuals,
            record: &record,
        });
        log.push(record);

        let mut termination = Termination::MaxIter;
        let mut k = 0;
        while k < config.max_iter {
            if config.tol > 0.0 && k > 0 && residuals.satisfied(config.tol) {
                termination = Termination::Converged;
                break;
            }
            let mut next = states.clone();
            if let Err(e) = round(problem, &mut next, config) {
                termination = Termination::Failed(e);
                break;
            }
            states = next;
            k += 1;
            residuals = optimality_residuals(problem, &states)?;
            let record = IterationRecord::new(k, problem, &states, &residuals)?;
            callback(&IterationView {
                iter: k,
                states: &states,
                residuals: &residuals,
                record: &record,
            });
            log.push(record);
        }
        if matches!(termination, Termination::MaxIter) && config.tol > 0.0 && k > 0 && residuals.satisfied(config.tol) {
            termination = Termination::Converged;
        }
        Ok(RunReport {
            termination,
            iterations: k,
            log,
            states,
            residuals,
        })
    })?
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn pair_graph() -> Graph {
        Graph::new(2, &[(0, 1)]).unwrap()
    }

    /// Two agents, f_i = ½‖x - c_i‖², A_i = I, equality coupling x_1 + x_2 = b_1 + b_2.
    fn equality_pair() -> CoupledProblem {
        let quad = |c: [f64; 2]| {
            LocalObjective::quadratic(DMatrix::identity(2, 2), -v(&c), 0.0).unwrap()
        };
        CoupledProblem::new(
            vec![
                Agent::new(quad([1.0, 2.0]), DMatrix::identity(2, 2), v(&[1.0, 0.0])).unwrap(),
                Agent::new(quad([-1.0, 3.0]), DMatrix::identity(2, 2), v(&[0.5, 1.0])).unwrap(),
            ],
            ConeSpec::zero(2).unwrap(),
            pair_graph(),
        )
        .unwrap()
    }

    fn tight(alg: Algorithm) -> SolverConfig {
        SolverConfig {
            algorithm: alg,
            max_iter: 5000,
            tol: 1e-9,
            inner: InnerConfig {
                tol: 1e-12,
                max_iter: 2000,
            },
            ..SolverConfig::default()
        }
    }

    #[test]
    fn equality_pair_matches_kkt() {
        // KKT: x_i - c_i + λ = 0, x_1 + x_2 = b  ⇒  λ = (c_1 + c_2 - b)/2.
        let c1 = v(&[1.0, 2.0]);
        let c2 = v(&[-1.0, 3.0]);
        let b = v(&[1.5, 1.0]);
        let lambda = (&c1 + &c2 - &b) / 2.0;
        let x1 = &c1 - &lambda;
        let x2 = &c2 - &lambda;
        for alg in Algorithm::ALL {
            let report = run(&equality_pair(), &tight(alg), |_| {}).unwrap();
            assert!(report.converged(), "{alg}: {:?}", report.termination);
            assert!((&report.states[0].x - &x1).amax() < 1e-6, "{alg}");
            assert!((&report.states[1].x - &x2).amax() < 1e-6, "{alg}");
        }
    }

    #[test]
    fn aggregate_identity_holds_exactly() {
        let mut p = equality_pair();
        p.cone = ConeSpec::second_order(2).unwrap();
        let mut states = initial_states(&p, Algorithm::Aggregate);
        for _ in 0..20 {
            aggregate_round(&p, &mut states, 0.7, InnerPolicy::default()).unwrap();
            for (agent, s) in p.agents().iter().zip(&states) {
                let VariantState::Aggregate { t } = &s.variant else { panic!() };
                let gamma = 2.0 * 0.7;
                let expected = (&agent.a * &s.x + &s.r - t) / gamma;
                assert_eq!(s.y, expected);
                assert!(p.cone().contains(t, 1e-12).unwrap());
            }
        }
    }

    #[test]
    fn zero_cone_reduces_to_plain_least_squares_update() {
        let p = equality_pair();
        let mut states = initial_states(&p, Algorithm::Aggregate);
        let policy = InnerPolicy {
            config: InnerConfig {
                tol: 1e-13,
                max_iter: 5000,
            },
            retries: 0,
        };
        for _ in 0..10 {
            let before = states.clone();
            aggregate_round(&p, &mut states, 1.0, policy).unwrap();
            for (i, (agent, s)) in p.agents().iter().zip(&states).enumerate() {
                let j = 1 - i;
                let pnew = &before[i].p + (&before[i].y - &before[j].y);
                let r = (&before[i].y + &before[j].y) - (&agent.b + &pnew);
                // argmin ½‖x - c‖² + ‖x + r‖²/4 = (2c - r)/3 with c = -q.
                let LocalObjective::Quadratic(q) = &agent.objective else { panic!() };
                let x = (-q.q() * 2.0 - &r) / 3.0;
                let y = (&x + &r) / 2.0;
                assert!((&s.x - &x).amax() <= 1e-12);
                assert!((&s.y - &y).amax() <= 1e-12);
            }
        }
    }

    #[test]
    fn decomposed_z_step_on_orthant() {
        let mut p = equality_pair();
        p.cone = ConeSpec::nonneg(2).unwrap();
        let mut states = initial_states(&p, Algorithm::Decomposed);
        for _ in 0..5 {
            decomposed_round(&p, &mut states, 0.5, 1.0, InnerPolicy::default()).unwrap();
            for s in &states {
                let VariantState::Decomposed { s: mult, z } = &s.variant else { panic!() };
                let expected = (&s.y + mult / 0.5).map(|v| v.min(0.0));
                assert_eq!(z, &expected);
            }
        }
    }

    #[test]
    fn primal_recovery_sums_parts() {
        let p = equality_pair();
        let mut states = initial_states(&p, Algorithm::Aggregate);
        assert_eq!(primal_recover(&states).1, v(&[0.0, 0.0]));
        states[0].variant = VariantState::Aggregate { t: v(&[1.0, 0.0]) };
        states[1].variant = VariantState::Aggregate { t: v(&[0.0, 2.0]) };
        assert_eq!(primal_recover(&states).1, v(&[1.0, 2.0]));
        assert_eq!(primal_recover(&states).0.len(), 4);
    }

    #[test]
    fn zero_state_coupling_residual_is_sum_of_b() {
        let p = equality_pair();
        let res = optimality_residuals(&p, &initial_states(&p, Algorithm::Decomposed)).unwrap();
        assert!((res.coupling - v(&[1.5, 1.0]).norm()).abs() < 1e-15);
        assert_eq!(res.consensus, 0.0);
    }

    #[test]
    fn hand_built_optimum_of_scalar_lp() {
        // minimize x subject to x - 0.25 ∈ R_+: x* = 0.25, y* = -1, w = 0.
        let f = LocalObjective::quadratic(DMatrix::zeros(1, 1), v(&[1.0]), 0.0).unwrap();
        let p = CoupledProblem::new(
            vec![Agent::new(f, DMatrix::identity(1, 1), v(&[0.25])).unwrap()],
            ConeSpec::nonneg(1).unwrap(),
            Graph::new(1, &[]).unwrap(),
        )
        .unwrap();
        let mut states = initial_states(&p, Algorithm::Decomposed);
        states[0].x = v(&[0.25]);
        states[0].y = v(&[-1.0]);
        states[0].variant = VariantState::Decomposed {
            s: v(&[0.0]),
            z: v(&[-1.0]),
        };
        let res = optimality_residuals(&p, &states).unwrap();
        assert!(res.max_stationarity() <= 1e-10);
        assert!(res.cone_membership <= 1e-10);
        assert!(res.complementarity <= 1e-10);
        assert!(res.coupling <= 1e-10);
        assert!(res.consensus <= 1e-10);
    }

    #[test]
    fn zero_iterations_report_initial_residuals() {
        let cfg = SolverConfig {
            max_iter: 0,
            ..SolverConfig::default()
        };
        let report = run(&equality_pair(), &cfg, |_| {}).unwrap();
        assert!(matches!(report.termination, Termination::MaxIter));
        assert_eq!(report.log.len(), 1);
        assert_eq!(report.iterations, 0);
    }

    #[test]
    fn run_log_is_aligned_with_iterations() {
        let cfg = SolverConfig {
            max_iter: 25,
            tol: 0.0,
            ..SolverConfig::default()
        };
        let mut seen = Vec::new();
        let report = run(&equality_pair(), &cfg, |view| seen.push(view.iter)).unwrap();
        assert_eq!(report.log.len(), 26);
        assert_eq!(seen, (0..=25).collect::<Vec<_>>());
        assert!(report.log.iter().enumerate().all(|(k, r)| r.iter == k));
    }

    #[test]
    fn config_and_problem_validation() {
        for bad in [
            SolverConfig {
                rho: 0.0,
                ..SolverConfig::default()
            },
            SolverConfig {
                algorithm: Algorithm::Decomposed,
                sigma: -1.0,
                ..SolverConfig::default()
            },
            SolverConfig {
                workers: Some(0),
                ..SolverConfig::default()
            },
        ] {
            assert!(run(&equality_pair(), &bad, |_| {}).is_err());
        }
        let agent = Agent::new(LocalObjective::zero(2), DMatrix::identity(2, 2), v(&[0.0, 0.0])).unwrap();
        assert!(CoupledProblem::new(vec![agent.clone()], ConeSpec::zero(3).unwrap(), Graph::new(1, &[]).unwrap()).is_err());
        assert!(CoupledProblem::new(vec![agent.clone()], ConeSpec::zero(2).unwrap(), pair_graph()).is_err());
        let single = CoupledProblem::new(vec![agent], ConeSpec::zero(2).unwrap(), Graph::new(1, &[]).unwrap()).unwrap();
        assert!(run(&single, &SolverConfig::default(), |_| {}).is_err());
        let dec = SolverConfig {
            algorithm: Algorithm::Decomposed,
            ..SolverConfig::default()
        };
        assert!(run(&single, &dec, |_| {}).is_ok());
        assert!("bogus".parse::<Algorithm>().is_err());
        assert_eq!("decomposed".parse::<Algorithm>().unwrap(), Algorithm::Decomposed);
    }

    #[test]
    fn json_round_trip() {
        let p = equality_pair();
        let text = p.to_json().unwrap();
        assert_eq!(CoupledProblem::from_json(&text).unwrap(), p);
        let disconnected = text.replace(r#""edges": [
      [
        0,
        1
      ]
    ]"#, r#""edges": []"#);
        assert_ne!(disconnected, text);
        let err = CoupledProblem::from_json(&disconnected).unwrap_err().to_string();
        assert!(err.contains("not connected"), "{err}");
    }

    #[test]
    fn inner_failure_names_the_agent() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 1.0]);
        let agent = Agent::new(LocalObjective::l1(0.1).unwrap(), a, v(&[1.0, -1.0])).unwrap();
        let p = CoupledProblem::new(vec![agent.clone(), agent], ConeSpec::zero(2).unwrap(), pair_graph()).unwrap();
        let mut states = initial_states(&p, Algorithm::Decomposed);
        let policy = InnerPolicy {
            config: InnerConfig {
                tol: 1e-300,
                max_iter: 1,
            },
            retries: 0,
        };
        // Any nonzero shift needs more than one step at this tolerance.
        let err = decomposed_round(&p, &mut states, 1.0, 1.0, policy).unwrap_err();
        assert!(matches!(err, Error::Agent { .. }), "{err}");
    }
}
