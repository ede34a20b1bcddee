//! Per-agent inner minimizations.
//!
//! Both dual algorithms ask every agent, once per round, for a minimizer of
//!
//! ```text
//! decomposed:  f(x) + ‖Ex + s‖² / (2γ)
//! aggregate:   f(x) + I_K(t) + ‖Ex + s - t‖² / (2γ)
//! ```
//!
//! Minimizing the aggregate problem over `t` in closed form gives
//! `t = Π_K(Ex + s)` and leaves `f(x) + ‖Π_{K°}(Ex + s)‖² / (2γ)`, a prox-friendly
//! term plus a smooth term whose gradient is `Eᵀ Π_{K°}(Ex + s) / γ` with
//! Lipschitz constant `‖E‖²/γ`. The decomposed problem is the same thing with
//! `K = {0}`. Both are solved by a monotone accelerated proximal gradient
//! method (FISTA with a descent safeguard and momentum restart), warm-started
//! from the previous round's `x`.
//!
//! Convergence is certified with the fixed-point residual
//! `‖x - prox_{τf}(x - τ∇h(x))‖`, `τ = γ/‖E‖²`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cones::{ConvexCone, Polar};
use crate::error::{check_dim, Error, Result};
use crate::objectives::{LocalObjective, PreparedProx};

/// Inner solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InnerConfig {
    /// Fixed-point residual at which an inner solve is accepted.
    pub tol: f64,
    /// Iteration budget per solve.
    pub max_iter: usize,
}

impl Default for InnerConfig {
    fn default() -> Self {
        InnerConfig {
            tol: 1e-8,
            max_iter: 500,
        }
    }
}

/// One inner minimization instance. `cone` present means the aggregate form.
#[derive(Clone, Copy)]
pub struct InnerProblem<'a> {
    pub objective: &'a LocalObjective,
    pub e: &'a DMatrix<f64>,
    pub shift: &'a DVector<f64>,
    pub gamma: f64,
    pub cone: Option<&'a dyn ConvexCone>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerSolution {
    pub x: DVector<f64>,
    /// `Π_K(Ex + s)` for the aggregate form.
    pub t: Option<DVector<f64>>,
    pub inner_iterations: usize,
    pub residual: f64,
    /// Inner objective value at `(x, t)`.
    pub objective: f64,
}

/// Reusable inner solver for a fixed `(f, E, γ)`.
///
/// Holds the prepared prox for the fixed step, the step itself, scratch
/// buffers and the warm-start point. One instance per agent.
#[derive(Debug, Clone)]
pub struct InnerSolver {
    objective: LocalObjective,
    e: DMatrix<f64>,
    gamma: f64,
    step: f64,
    prox: PreparedProx,
    warm: DVector<f64>,
    cfg: InnerConfig,
}

impl InnerSolver {
    pub fn new(objective: &LocalObjective, e: &DMatrix<f64>, gamma: f64, cfg: InnerConfig) -> Result<Self> {
        objective.check_dim(e.ncols())?;
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "inner penalty parameter must be positive, got {gamma}"
            )));
        }
        if cfg.tol.is_nan() || cfg.tol <= 0.0 || cfg.max_iter == 0 {
            return Err(Error::InvalidConfig(
                "inner tolerance must be positive and the iteration budget nonzero".into(),
            ));
        }
        let norm_sq = spectral_norm_sq(e);
        let step = if norm_sq > 0.0 { gamma / norm_sq } else { 1.0 };
        Ok(InnerSolver {
            objective: objective.clone(),
            e: e.clone(),
            gamma,
            step,
            prox: PreparedProx::new(objective, step)?,
            warm: DVector::zeros(e.ncols()),
            cfg,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn config(&self) -> InnerConfig {
        self.cfg
    }

    pub fn set_config(&mut self, cfg: InnerConfig) {
        self.cfg = cfg;
    }

    /// Current warm-start point (the last returned `x`).
    pub fn warm_start(&self) -> &DVector<f64> {
        &self.warm
    }

    pub fn set_warm_start(&mut self, x: DVector<f64>) -> Result<()> {
        check_dim("warm start", self.e.ncols(), x.len())?;
        self.warm = x;
        Ok(())
    }

    /// Minimizes `f(x) + ‖Ex + s‖²/(2γ)`.
    pub fn solve_decomposed(&mut self, shift: &DVector<f64>) -> Result<InnerSolution> {
        self.solve(shift, &FullSpace, None)
    }

    /// Minimizes `f(x) + I_K(t) + ‖Ex + s - t‖²/(2γ)` jointly over `(x, t)`.
    pub fn solve_aggregate(&mut self, shift: &DVector<f64>, cone: &dyn ConvexCone) -> Result<InnerSolution> {
        check_dim("inner cone", self.e.nrows(), cone.dim())?;
        let mut sol = self.solve(shift, cone, None)?;
        let mut v = &self.e * &sol.x + shift;
        let mut t = DVector::zeros(v.len());
        cone.project_into(v.as_slice(), t.as_mut_slice());
        v -= &t;
        sol.objective = self.objective.eval_slice(sol.x.as_slice()) + v.norm_squared() / (2.0 * self.gamma);
        sol.t = Some(t);
        Ok(sol)
    }

    /// Proximal map of `d(y) = g*(-Eᵀy) + I_C(y)` at `z` with this solver's `γ`,
    /// computed as `Π_C(E x* + γz) / γ` from a primal solve with `t ∈ C°`.
    pub fn prox_dual(&mut self, cone: &dyn ConvexCone, z: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("dual prox argument", self.e.nrows(), z.len())?;
        let shift = z * self.gamma;
        let sol = self.solve_aggregate(&shift, &Polar(cone))?;
        let v = &self.e * &sol.x + shift;
        let mut out = DVector::zeros(v.len());
        cone.project_into(v.as_slice(), out.as_mut_slice());
        Ok(out / self.gamma)
    }

    /// Same as [`solve_aggregate`](Self::solve_aggregate) but reports the
    /// accepted objective value after every iteration.
    pub fn solve_aggregate_traced(
        &mut self,
        shift: &DVector<f64>,
        cone: &dyn ConvexCone,
        trace: &mut dyn FnMut(f64),
    ) -> Result<InnerSolution> {
        check_dim("inner cone", self.e.nrows(), cone.dim())?;
        self.solve(shift, cone, Some(trace))
    }

    fn solve(
        &mut self,
        shift: &DVector<f64>,
        cone: &dyn ConvexCone,
        mut trace: Option<&mut dyn FnMut(f64)>,
    ) -> Result<InnerSolution> {
        check_dim("inner shift", self.e.nrows(), shift.len())?;
        let mut ws = Workspace::new(self.e.nrows(), self.e.ncols());
        let tol = self.cfg.tol;

        // First step from the warm start makes the iterate feasible for f.
        let mut x = self.warm.clone();
        let mut z = DVector::zeros(x.len());
        self.forward_backward(&x, shift, cone, &mut ws, &mut z);
        std::mem::swap(&mut x, &mut z);
        let mut fx = self.value(&x, shift, cone, &mut ws);
        if let Some(tr) = trace.as_mut() {
            tr(fx);
        }

        let mut y = x.clone();
        let mut x_prev = x.clone();
        let mut momentum = 1.0f64;
        let mut residual = f64::INFINITY;
        let mut check = DVector::zeros(x.len());

        for iter in 1..=self.cfg.max_iter {
            self.forward_backward(&y, shift, cone, &mut ws, &mut z);
            let gap = (&z - &y).norm();
            let fz = self.value(&z, shift, cone, &mut ws);
            let next_momentum = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());

            x_prev.copy_from(&x);
            // A forward-backward step taken from x itself never increases the
            // objective in exact arithmetic; accepting it anyway avoids stalling
            // on rounding noise near the minimizer.
            let plain_step = momentum == 1.0;
            if fz <= fx || plain_step {
                x.copy_from(&z);
                fx = fz;
                // y = x + (t/t')(z - x) + ((t-1)/t')(x - x_prev); with x = z the
                // first term vanishes.
                y.copy_from(&x);
                y.axpy((momentum - 1.0) / next_momentum, &x, 1.0);
                y.axpy(-(momentum - 1.0) / next_momentum, &x_prev, 1.0);
                momentum = next_momentum;
            } else {
                // Rejected step: keep x and restart momentum from it.
                y.copy_from(&x);
                momentum = 1.0;
            }
            if let Some(tr) = trace.as_mut() {
                tr(fx);
            }

            if gap <= tol || fz > fx || plain_step {
                self.forward_backward(&x, shift, cone, &mut ws, &mut check);
                residual = (&check - &x).norm();
                if residual <= tol {
                    self.warm.copy_from(&x);
                    return Ok(InnerSolution {
                        x,
                        t: None,
                        inner_iterations: iter,
                        residual,
                        objective: fx,
                    });
                }
            }
        }
        self.warm.copy_from(&x);
        if !residual.is_finite() || residual > tol {
            self.forward_backward(&x, shift, cone, &mut ws, &mut check);
            residual = (&check - &x).norm();
        }
        if residual <= tol {
            return Ok(InnerSolution {
                x,
                t: None,
                inner_iterations: self.cfg.max_iter,
                residual,
                objective: fx,
            });
        }
        Err(Error::InnerNotConverged {
            iterations: self.cfg.max_iter,
            residual,
        })
    }

    /// `out = prox_{τf}(x - τ∇h(x))`.
    fn forward_backward(
        &self,
        x: &DVector<f64>,
        shift: &DVector<f64>,
        cone: &dyn ConvexCone,
        ws: &mut Workspace,
        out: &mut DVector<f64>,
    ) {
        ws.ex.copy_from(shift);
        ws.ex.gemv(1.0, &self.e, x, 1.0);
        cone.project_polar_into(ws.ex.as_slice(), ws.pol.as_mut_slice());
        ws.grad.copy_from(x);
        ws.grad.gemv_tr(-self.step / self.gamma, &self.e, &ws.pol, 1.0);
        self.prox.apply(ws.grad.as_slice(), out.as_mut_slice());
    }

    fn value(&self, x: &DVector<f64>, shift: &DVector<f64>, cone: &dyn ConvexCone, ws: &mut Workspace) -> f64 {
        ws.ex.copy_from(shift);
        ws.ex.gemv(1.0, &self.e, x, 1.0);
        cone.project_polar_into(ws.ex.as_slice(), ws.pol.as_mut_slice());
        self.objective.eval_slice(x.as_slice()) + ws.pol.norm_squared() / (2.0 * self.gamma)
    }
}

struct Workspace {
    ex: DVector<f64>,
    pol: DVector<f64>,
    grad: DVector<f64>,
}

impl Workspace {
    fn new(m: usize, n: usize) -> Self {
        Workspace {
            ex: DVector::zeros(m),
            pol: DVector::zeros(m),
            grad: DVector::zeros(n),
        }
    }
}

/// `R^m` as a cone: the polar is `{0}`, so `dist²` to it is the plain squared norm.
struct FullSpace;

impl ConvexCone for FullSpace {
    fn dim(&self) -> usize {
        usize::MAX
    }

    fn project_into(&self, v: &[f64], out: &mut [f64]) {
        out.copy_from_slice(v);
    }

    fn project_polar_into(&self, v: &[f64], out: &mut [f64]) {
        out.copy_from_slice(v);
    }
}

/// Squared spectral norm `‖E‖₂²`.
pub(crate) fn spectral_norm_sq(e: &DMatrix<f64>) -> f64 {
    if e.is_empty() {
        return 0.0;
    }
    let gram = e.transpose() * e;
    gram.symmetric_eigenvalues().max().max(0.0)
}

fn check_problem(p: &InnerProblem<'_>) -> Result<()> {
    check_dim("inner shift", p.e.nrows(), p.shift.len())
}

/// Solves the decomposed inner problem from a zero initial point.
pub fn solve_decomposed_inner(p: &InnerProblem<'_>, cfg: InnerConfig) -> Result<InnerSolution> {
    check_problem(p)?;
    if p.cone.is_some() {
        return Err(Error::InvalidConfig("decomposed inner problem takes no cone".into()));
    }
    InnerSolver::new(p.objective, p.e, p.gamma, cfg)?.solve_decomposed(p.shift)
}

/// Solves the aggregate inner problem from a zero initial point.
pub fn solve_aggregate_inner(p: &InnerProblem<'_>, cfg: InnerConfig) -> Result<InnerSolution> {
    check_problem(p)?;
    let cone = p
        .cone
        .ok_or_else(|| Error::InvalidConfig("aggregate inner problem needs a cone".into()))?;
    InnerSolver::new(p.objective, p.e, p.gamma, cfg)?.solve_aggregate(p.shift, cone)
}

/// `prox_d^γ(z)` for `d(y) = g*(-Eᵀy) + I_C(y)`, without evaluating `g*`.
pub fn prox_dual_via_primal(
    g: &LocalObjective,
    e: &DMatrix<f64>,
    cone: &dyn ConvexCone,
    z: &DVector<f64>,
    gamma: f64,
    cfg: InnerConfig,
) -> Result<DVector<f64>> {
    check_dim("dual prox cone", e.nrows(), cone.dim())?;
    InnerSolver::new(g, e, gamma, cfg)?.prox_dual(cone, z)
}
