//! Basis pursuit denoising benchmark.
//!
//! ```text
//! minimize ‖u‖₁   subject to   ‖Ru - r‖₂ <= ε
//! ```
//!
//! with the columns of `R` split evenly among agents. Agent `i` owns
//! `x_i = (u_i, v_i)` and the cone constraint
//! `Σ_i (R_i u_i - r/N, v_i) ∈ {(z, τ) : ‖z‖ <= τ}`, with `v_i` pinned to `ε/N`.

use std::fs;
use std::io::Write as _;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::cones::ConeSpec;
use crate::consensus::mean;
use crate::dual::{self, Agent, AgentRunState, Algorithm, CoupledProblem, SolverConfig, Termination};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::network::with_workers;
use crate::objectives::LocalObjective;
use crate::subproblem::{spectral_norm_sq, InnerConfig};

pub const CSV_HEADER: &str = "iter,relSubopt,infeas,solDist,consViol";

/// Probability that the noise norm stays below `ε`.
pub const NOISE_CONFIDENCE: f64 = 0.95;

/// Variance of each noise entry per unit of `κ`.
pub const NOISE_VARIANCE_PER_KAPPA: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BpdParams {
    /// Rows of `R`.
    pub p: usize,
    /// Columns of `R`.
    pub q: usize,
    /// Nonzeros of the planted signal.
    pub kappa: usize,
    pub n_agents: usize,
    pub n_edges: usize,
}

impl Default for BpdParams {
    fn default() -> Self {
        BpdParams {
            p: 20,
            q: 120,
            kappa: 20,
            n_agents: 10,
            n_edges: 15,
        }
    }
}

impl BpdParams {
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.q == 0 {
            return Err(Error::InvalidInstance("p and q must be positive".into()));
        }
        if self.n_agents == 0 || !self.q.is_multiple_of(self.n_agents) {
            return Err(Error::InvalidInstance(format!(
                "q = {} must be divisible by the number of agents {}",
                self.q, self.n_agents
            )));
        }
        if self.kappa > self.q {
            return Err(Error::InvalidInstance(format!(
                "kappa = {} exceeds q = {}",
                self.kappa, self.q
            )));
        }
        if self.kappa == 0 {
            return Err(Error::InvalidInstance(
                "kappa = 0 gives zero noise and ε = 0; ε must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn block_len(&self) -> usize {
        self.q / self.n_agents
    }

    /// Standard deviation of each noise entry.
    pub fn noise_std(&self) -> f64 {
        (self.kappa as f64 * NOISE_VARIANCE_PER_KAPPA).sqrt()
    }

    /// `ε` with `P(‖η‖ <= ε) = 0.95`: `‖η‖²/var ~ χ²_p`.
    pub fn epsilon(&self) -> f64 {
        let var = self.kappa as f64 * NOISE_VARIANCE_PER_KAPPA;
        (var * chi_square_quantile(self.p, NOISE_CONFIDENCE)).sqrt()
    }
}

/// `x` with `P(X <= x) = prob` for `X ~ χ²_k`.
pub fn chi_square_quantile(dof: usize, prob: f64) -> f64 {
    assert!(prob > 0.0 && prob < 1.0, "probability must lie in (0, 1)");
    ChiSquared::new(dof as f64)
        .expect("chi-square needs at least one degree of freedom")
        .inverse_cdf(prob)
}

/// One generated instance together with its lazily computed reference solution.
#[derive(Debug)]
pub struct BpdInstance {
    pub params: BpdParams,
    pub seed: u64,
    /// The `p × q` sensing matrix.
    pub matrix: DMatrix<f64>,
    pub r: DVector<f64>,
    pub epsilon: f64,
    pub u_true: DVector<f64>,
    pub blocks: Vec<Range<usize>>,
    pub graph: Graph,
    reference: OnceLock<Reference>,
}

impl BpdInstance {
    /// Builds an instance from explicit data; the graph must have one node per block.
    pub fn from_parts(
        matrix: DMatrix<f64>,
        r: DVector<f64>,
        epsilon: f64,
        n_agents: usize,
        graph: Graph,
    ) -> Result<Self> {
        let (p, q) = matrix.shape();
        if r.len() != p {
            return Err(Error::DimensionMismatch {
                context: "measurement vector",
                expected: p,
                found: r.len(),
            });
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidInstance(format!("ε must be positive, got {epsilon}")));
        }
        if n_agents == 0 || !q.is_multiple_of(n_agents) || graph.n_nodes() != n_agents {
            return Err(Error::InvalidInstance(format!(
                "{q} columns cannot be split evenly over {n_agents} agents on a {}-node graph",
                graph.n_nodes()
            )));
        }
        let len = q / n_agents;
        Ok(BpdInstance {
            params: BpdParams {
                p,
                q,
                kappa: 0,
                n_agents,
                n_edges: graph.n_edges(),
            },
            seed: 0,
            matrix,
            r,
            epsilon,
            u_true: DVector::zeros(q),
            blocks: (0..n_agents).map(|i| i * len..(i + 1) * len).collect(),
            graph,
            reference: OnceLock::new(),
        })
    }

    /// `‖u‖₁`.
    pub fn objective(u: &DVector<f64>) -> f64 {
        u.lp_norm(1)
    }

    /// `max(‖Ru - r‖ - ε, 0)`.
    pub fn infeasibility(&self, u: &DVector<f64>) -> f64 {
        ((&self.matrix * u - &self.r).norm() - self.epsilon).max(0.0)
    }
}

/// Draws an instance. Data and graph use independent streams of the same seed.
///
/// `R` entries are standard normal; `u_true` has `κ` nonzeros at uniformly
/// chosen positions with standard normal values; `r = R u_true + η` with
/// `η_j ~ N(0, κ·1e-4)`.
pub fn generate(params: &BpdParams, seed: u64) -> Result<BpdInstance> {
    params.validate()?;
    let mut data_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut graph_rng = data_rng.clone();
    graph_rng.set_stream(1);

    let BpdParams { p, q, kappa, .. } = *params;
    let matrix = DMatrix::from_fn(p, q, |_, _| data_rng.sample::<f64, _>(StandardNormal));
    let mut u_true = DVector::zeros(q);
    for j in rand::seq::index::sample(&mut data_rng, q, kappa) {
        u_true[j] = data_rng.sample::<f64, _>(StandardNormal);
    }
    let noise = Normal::new(0.0, params.noise_std())
        .map_err(|e| Error::InvalidInstance(format!("noise distribution: {e}")))?;
    let eta = DVector::from_fn(p, |_, _| noise.sample(&mut data_rng));
    let r = &matrix * &u_true + eta;

    let graph = Graph::small_world(params.n_agents, params.n_edges, &mut graph_rng)?;
    let len = params.block_len();
    Ok(BpdInstance {
        params: *params,
        seed,
        matrix,
        r,
        epsilon: params.epsilon(),
        u_true,
        blocks: (0..params.n_agents).map(|i| i * len..(i + 1) * len).collect(),
        graph,
        reference: OnceLock::new(),
    })
}

/// The cone-coupled form solved by the dual algorithms.
pub fn reformulate(inst: &BpdInstance) -> Result<CoupledProblem> {
    let n = inst.blocks.len();
    let p = inst.matrix.nrows();
    let share = inst.epsilon / n as f64;
    let agents = inst
        .blocks
        .iter()
        .map(|block| {
            let len = block.len();
            let mut a = DMatrix::zeros(p + 1, len + 1);
            a.view_mut((0, 0), (p, len))
                .copy_from(&inst.matrix.columns(block.start, len));
            a[(p, len)] = 1.0;
            let mut b = DVector::zeros(p + 1);
            b.rows_mut(0, p).copy_from(&(&inst.r / n as f64));
            let objective = LocalObjective::separable_sum(vec![
                (LocalObjective::l1(1.0)?, 0..len),
                (LocalObjective::indicator_point(DVector::from_element(1, share)), len..len + 1),
            ])?;
            Agent::new(objective, a, b)
        })
        .collect::<Result<_>>()?;
    CoupledProblem::new(agents, ConeSpec::second_order(p + 1)?, inst.graph.clone())
}

/// Centralized high-accuracy solution.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub u: DVector<f64>,
    pub objective: f64,
    /// Multiplier of the norm constraint (`0` when inactive).
    pub multiplier: f64,
}

/// Tolerance used by [`reference`].
pub const REFERENCE_TOL: f64 = 1e-10;

/// Cached [`reference_solution`] at [`REFERENCE_TOL`].
pub fn reference(inst: &BpdInstance) -> Result<&Reference> {
    if let Some(r) = inst.reference.get() {
        return Ok(r);
    }
    let sol = reference_solution(inst, REFERENCE_TOL)?;
    Ok(inst.reference.get_or_init(|| sol))
}

/// Solves the problem centrally with a primal-dual splitting method, then
/// polishes on the detected support: with support `S`, signs `s` and
/// multiplier `μ`, stationarity reads `u_S = (R_Sᵀ R_S)⁻¹ (R_Sᵀ r - s/μ)` and
/// `μ` is fixed by `‖R_S u_S - r‖ = ε`. The polished point is returned once
/// it satisfies the optimality conditions to `tol`.
pub fn reference_solution(inst: &BpdInstance, tol: f64) -> Result<Reference> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidConfig(format!("tolerance must be positive, got {tol}")));
    }
    let (rm, r, eps) = (&inst.matrix, &inst.r, inst.epsilon);
    let q = rm.ncols();
    if r.norm() <= eps {
        return Ok(Reference {
            u: DVector::zeros(q),
            objective: 0.0,
            multiplier: 0.0,
        });
    }

    let norm = spectral_norm_sq(rm).sqrt();
    let tau = 0.99 / norm;
    let sigma = 0.99 / norm;
    let mut u = DVector::zeros(q);
    let mut v = DVector::zeros(rm.nrows());
    const MAX_ITER: usize = 500_000;
    const POLISH_EVERY: usize = 500;
    let mut last_err = f64::INFINITY;
    for k in 1..=MAX_ITER {
        let u_old = u.clone();
        let step = &u - rm.tr_mul(&v) * tau;
        u = step.map(|x| x.signum() * (x.abs() - tau).max(0.0));
        let ubar = &u * 2.0 - &u_old;
        // prox of σ g*, g = indicator of the ε-ball around r, via Moreau.
        let w = &v + rm * ubar * sigma;
        let center = &w / sigma;
        let off = &center - r;
        let off_norm = off.norm();
        let proj = if off_norm <= eps { center.clone() } else { r + off * (eps / off_norm) };
        v = w - proj * sigma;

        if k % POLISH_EVERY == 0 {
            let mu_hint = v.norm() / eps;
            match polish(rm, r, eps, &u, mu_hint, tol) {
                Ok(sol) => return Ok(sol),
                Err(e) => last_err = e,
            }
        }
    }
    Err(Error::Reference(format!(
        "no certified solution after {MAX_ITER} iterations (best optimality error {last_err:e})"
    )))
}

/// Returns the polished point or its optimality error.
fn polish(
    rm: &DMatrix<f64>,
    r: &DVector<f64>,
    eps: f64,
    u: &DVector<f64>,
    mu_hint: f64,
    tol: f64,
) -> std::result::Result<Reference, f64> {
    let scale = u.amax().max(1e-300);
    let support: Vec<usize> = (0..u.len()).filter(|&j| u[j].abs() > 1e-6 * scale).collect();
    if support.is_empty() || support.len() > rm.nrows() || mu_hint.is_nan() || mu_hint <= 0.0 {
        return Err(f64::INFINITY);
    }
    let signs = DVector::from_iterator(support.len(), support.iter().map(|&j| u[j].signum()));
    let rs = rm.select_columns(support.iter());
    let chol = (rs.transpose() * &rs).cholesky().ok_or(f64::INFINITY)?;
    let rtr = rs.tr_mul(r);
    let solve = |mu: f64| chol.solve(&(&rtr - &signs / mu));
    let gap = |mu: f64| (&rs * solve(mu) - r).norm() - eps;

    // The residual norm decreases in μ; bracket the root around the hint.
    let (mut lo, mut hi) = (mu_hint, mu_hint);
    let mut guard = 0;
    while gap(lo) < 0.0 {
        lo /= 2.0;
        guard += 1;
        if guard > 200 {
            return Err(f64::INFINITY);
        }
    }
    while gap(hi) > 0.0 {
        hi *= 2.0;
        guard += 1;
        if guard > 400 {
            return Err(f64::INFINITY);
        }
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if gap(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    let mu = 0.5 * (lo + hi);
    let us = solve(mu);
    let mut full = DVector::zeros(u.len());
    for (k, &j) in support.iter().enumerate() {
        full[j] = us[k];
    }

    let resid = rm * &full - r;
    let grad = rm.tr_mul(&resid) * mu;
    let mut err = (resid.norm() - eps).abs() / (1.0 + eps);
    for j in 0..u.len() {
        let e = match support.binary_search(&j) {
            Ok(k) => {
                if full[j].signum() != signs[k] {
                    f64::INFINITY
                } else {
                    (grad[j] + signs[k]).abs()
                }
            }
            Err(_) => (grad[j].abs() - 1.0).max(0.0),
        };
        err = err.max(e);
    }
    if err <= tol {
        Ok(Reference {
            objective: full.lp_norm(1),
            u: full,
            multiplier: mu,
        })
    } else {
        Err(err)
    }
}

/// One row of the benchmark CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricsRow {
    pub iter: usize,
    /// `|‖u‖₁ - ‖u*‖₁| / ‖u*‖₁`, or the absolute gap when `u* = 0`.
    pub rel_subopt: f64,
    /// `max(‖Ru - r‖ - ε, 0)`.
    pub infeas: f64,
    /// `‖u - u*‖`.
    pub sol_dist: f64,
    /// `max_i ‖y_i - ȳ‖`.
    pub cons_viol: f64,
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{:.16e},{:.16e},{:.16e},{:.16e}",
            self.iter, self.rel_subopt, self.infeas, self.sol_dist, self.cons_viol
        )
    }
}

/// Stacks the `u_i` parts of the agents' variables (the pinned `v_i` are dropped).
pub fn assemble_u(inst: &BpdInstance, xs: &[&DVector<f64>]) -> Result<DVector<f64>> {
    if xs.len() != inst.blocks.len() {
        return Err(Error::DimensionMismatch {
            context: "agent iterates",
            expected: inst.blocks.len(),
            found: xs.len(),
        });
    }
    let mut u = DVector::zeros(inst.matrix.ncols());
    for (block, x) in inst.blocks.iter().zip(xs) {
        if x.len() != block.len() + 1 {
            return Err(Error::DimensionMismatch {
                context: "agent iterate",
                expected: block.len() + 1,
                found: x.len(),
            });
        }
        u.rows_mut(block.start, block.len()).copy_from(&x.rows(0, block.len()));
    }
    Ok(u)
}

pub fn metrics(
    inst: &BpdInstance,
    reference: &Reference,
    iter: usize,
    xs: &[&DVector<f64>],
    ys: &[&DVector<f64>],
) -> Result<MetricsRow> {
    let u = assemble_u(inst, xs)?;
    let m = ys.first().map_or(0, |y| y.len());
    let ybar = mean(ys.iter().copied(), m);
    let gap = (BpdInstance::objective(&u) - reference.objective).abs();
    Ok(MetricsRow {
        iter,
        rel_subopt: if reference.objective > 0.0 { gap / reference.objective } else { gap },
        infeas: inst.infeasibility(&u),
        sol_dist: (&u - &reference.u).norm(),
        cons_viol: ys.iter().map(|y| (*y - &ybar).norm()).fold(0.0, f64::max),
    })
}

fn state_metrics(inst: &BpdInstance, reference: &Reference, iter: usize, states: &[AgentRunState]) -> Result<MetricsRow> {
    let xs: Vec<_> = states.iter().map(|s| &s.x).collect();
    let ys: Vec<_> = states.iter().map(|s| &s.y).collect();
    metrics(inst, reference, iter, &xs, &ys)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub params: BpdParams,
    /// Seeds `0..seeds`.
    pub seeds: u64,
    pub algorithms: Vec<Algorithm>,
    pub rho: f64,
    pub sigma: f64,
    pub iters: usize,
    pub inner: InnerConfig,
    pub inner_retries: usize,
    pub workers: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            params: BpdParams::default(),
            seeds: 10,
            algorithms: Algorithm::ALL.to_vec(),
            rho: 1.0,
            sigma: 1.0,
            iters: 2000,
            inner: InnerConfig::default(),
            inner_retries: 2,
            workers: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.seeds == 0 {
            return Err(Error::InvalidConfig("at least one seed is required".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::InvalidConfig("at least one algorithm is required".into()));
        }
        for alg in &self.algorithms {
            self.solver_config(*alg).validate()?;
        }
        Ok(())
    }

    pub fn solver_config(&self, algorithm: Algorithm) -> SolverConfig {
        SolverConfig {
            algorithm,
            rho: self.rho,
            sigma: self.sigma,
            max_iter: self.iters,
            tol: 0.0,
            inner: self.inner,
            inner_retries: self.inner_retries,
            workers: None,
        }
    }
}

/// Metrics of one (seed, algorithm) run, one row per iteration `1..=iters`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub seed: u64,
    pub algorithm: Algorithm,
    pub reference_objective: f64,
    pub rows: Vec<MetricsRow>,
}

impl RunMetrics {
    pub fn last(&self) -> Option<&MetricsRow> {
        self.rows.last()
    }

    /// Row for iteration `k` (1-based).
    pub fn at(&self, k: usize) -> Option<&MetricsRow> {
        k.checked_sub(1).and_then(|i| self.rows.get(i))
    }
}

/// Runs one algorithm on one instance for `iters` rounds.
pub fn run_instance(inst: &BpdInstance, config: &ExperimentConfig, algorithm: Algorithm) -> Result<RunMetrics> {
    let reference = reference(inst)?;
    let problem = reformulate(inst)?;
    let solver = config.solver_config(algorithm);
    let mut rows = Vec::with_capacity(config.iters);
    let mut metric_err = None;
    let report = dual::run(&problem, &solver, |view| {
        if view.iter == 0 || metric_err.is_some() {
            return;
        }
        match state_metrics(inst, reference, view.iter, view.states) {
            Ok(row) => rows.push(row),
            Err(e) => metric_err = Some(e),
        }
    })?;
    if let Some(e) = metric_err {
        return Err(e);
    }
    if let Termination::Failed(e) = report.termination {
        return Err(Error::InvalidInstance(format!(
            "seed {} with the {algorithm} algorithm failed after {} rounds: {e}",
            inst.seed, report.iterations
        )));
    }
    Ok(RunMetrics {
        seed: inst.seed,
        algorithm,
        reference_objective: reference.objective,
        rows,
    })
}

/// Column-wise mean over runs of equal length.
pub fn mean_rows(runs: &[&RunMetrics]) -> Vec<MetricsRow> {
    let Some(first) = runs.first() else {
        return Vec::new();
    };
    let n = runs.len() as f64;
    (0..first.rows.len())
        .map(|k| {
            let mut row = MetricsRow {
                iter: first.rows[k].iter,
                rel_subopt: 0.0,
                infeas: 0.0,
                sol_dist: 0.0,
                cons_viol: 0.0,
            };
            for run in runs {
                let r = &run.rows[k];
                row.rel_subopt += r.rel_subopt;
                row.infeas += r.infeas;
                row.sol_dist += r.sol_dist;
                row.cons_viol += r.cons_viol;
            }
            row.rel_subopt /= n;
            row.infeas /= n;
            row.sol_dist /= n;
            row.cons_viol /= n;
            row
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub runs: Vec<RunMetrics>,
    pub means: Vec<(Algorithm, Vec<MetricsRow>)>,
}

impl ExperimentResult {
    pub fn runs_for(&self, algorithm: Algorithm) -> impl Iterator<Item = &RunMetrics> {
        self.runs.iter().filter(move |r| r.algorithm == algorithm)
    }

    pub fn mean_for(&self, algorithm: Algorithm) -> Option<&[MetricsRow]> {
        self.means.iter().find(|(a, _)| *a == algorithm).map(|(_, rows)| rows.as_slice())
    }
}

/// Runs every (seed, algorithm) pair and averages per algorithm.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    with_workers(config.workers, || {
        let instances: Vec<BpdInstance> = (0..config.seeds)
            .into_par_iter()
            .map(|seed| {
                let inst = generate(&config.params, seed)?;
                reference(&inst)?;
                Ok(inst)
            })
            .collect::<Result<_>>()?;
        let jobs: Vec<(usize, Algorithm)> = (0..instances.len())
            .flat_map(|i| config.algorithms.iter().map(move |&a| (i, a)))
            .collect();
        let runs: Vec<RunMetrics> = jobs
            .par_iter()
            .map(|&(i, alg)| run_instance(&instances[i], config, alg))
            .collect::<Result<_>>()?;
        let means = config
            .algorithms
            .iter()
            .map(|&alg| {
                let of_alg: Vec<_> = runs.iter().filter(|r| r.algorithm == alg).collect();
                (alg, mean_rows(&of_alg))
            })
            .collect();
        Ok(ExperimentResult { runs, means })
    })?
}

pub fn run_file_name(algorithm: Algorithm, seed: u64) -> String {
    format!("{algorithm}_seed{seed}.csv")
}

pub fn mean_file_name(algorithm: Algorithm) -> String {
    format!("mean_{algorithm}.csv")
}

pub fn write_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut out = String::with_capacity(96 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.to_csv());
        out.push('\n');
    }
    let mut file = fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

/// Writes one file per run and one mean file per algorithm into `dir`.
pub fn write_experiment(result: &ExperimentResult, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for run in &result.runs {
        let path = dir.join(run_file_name(run.algorithm, run.seed));
        write_csv(&path, &run.rows)?;
        written.push(path);
    }
    for (alg, rows) in &result.means {
        let path = dir.join(mean_file_name(*alg));
        write_csv(&path, rows)?;
        written.push(path);
    }
    Ok(written)
}

/// Run metadata recorded next to the CSVs.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentMetadata {
    pub config: ExperimentConfig,
    pub epsilon: f64,
    pub reference_objectives: Vec<(u64, f64)>,
    pub csv_header: &'static str,
}

impl ExperimentMetadata {
    pub fn new(config: &ExperimentConfig, result: &ExperimentResult) -> Self {
        let mut reference_objectives: Vec<_> = result
            .runs
            .iter()
            .map(|r| (r.seed, r.reference_objective))
            .collect();
        reference_objectives.dedup_by_key(|(s, _)| *s);
        ExperimentMetadata {
            config: config.clone(),
            epsilon: config.params.epsilon(),
            reference_objectives,
            csv_header: CSV_HEADER,
        }
    }
}
