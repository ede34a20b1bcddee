//! Per-agent convex objectives and their proximal operators.
//!
//! All supported objectives have closed-form proximal maps, so the solvers
//! never need the convex conjugate. The prox convention here is
//!
//! ```text
//! prox(v, λ) = argmin_y { f(y) + ‖y - v‖² / (2λ) }.
//! ```

use std::ops::Range;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Relative tolerance for indicator membership in [`LocalObjective::eval`].
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// Eigenvalue tolerance of the positive-semidefinite check on quadratic terms.
pub const PSD_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ObjectiveRepr", into = "ObjectiveRepr")]
pub enum LocalObjective {
    /// `weight·‖x‖₁`; dimension taken from the argument.
    L1 { weight: f64 },
    /// `½xᵀPx + qᵀx + c`.
    Quadratic(Quadratic),
    /// Indicator of a single point.
    IndicatorPoint { point: DVector<f64> },
    /// Indicator of `{ x : lo <= x <= hi }`.
    IndicatorBox { lo: DVector<f64>, hi: DVector<f64> },
    /// Sum of objectives acting on consecutive coordinate blocks.
    SeparableSum(Vec<Block>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    p: DMatrix<f64>,
    q: DVector<f64>,
    c: f64,
}

impl Quadratic {
    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }
    pub fn q(&self) -> &DVector<f64> {
        &self.q
    }
    pub fn c(&self) -> f64 {
        self.c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub objective: LocalObjective,
    pub range: Range<usize>,
}

impl LocalObjective {
    pub fn l1(weight: f64) -> Result<Self> {
        if !(weight.is_finite() && weight >= 0.0) {
            return Err(Error::InvalidObjective(format!(
                "l1 weight must be finite and nonnegative, got {weight}"
            )));
        }
        Ok(LocalObjective::L1 { weight })
    }

    /// Builds `½xᵀPx + qᵀx + c`, symmetrizing `P` and rejecting indefinite matrices.
    pub fn quadratic(p: DMatrix<f64>, q: DVector<f64>, c: f64) -> Result<Self> {
        let n = q.len();
        if p.nrows() != n || p.ncols() != n {
            return Err(Error::InvalidObjective(format!(
                "quadratic term is {}x{} but linear term has length {n}",
                p.nrows(),
                p.ncols()
            )));
        }
        if !(p.iter().chain(q.iter()).all(|x| x.is_finite()) && c.is_finite()) {
            return Err(Error::InvalidObjective("non-finite quadratic data".into()));
        }
        let scale = 1.0 + p.amax();
        if (&p - p.transpose()).amax() > 1e-10 * scale {
            return Err(Error::InvalidObjective("quadratic term is not symmetric".into()));
        }
        let p = (&p + p.transpose()) * 0.5;
        if n > 0 {
            let min_eig = p.clone().symmetric_eigenvalues().min();
            if min_eig < -PSD_TOL * scale {
                return Err(Error::NotPsd {
                    min_eigenvalue: min_eig,
                });
            }
        }
        Ok(LocalObjective::Quadratic(Quadratic { p, q, c }))
    }

    /// The zero function on `R^n`.
    pub fn zero(n: usize) -> Self {
        LocalObjective::Quadratic(Quadratic {
            p: DMatrix::zeros(n, n),
            q: DVector::zeros(n),
            c: 0.0,
        })
    }

    pub fn indicator_point(point: DVector<f64>) -> Self {
        LocalObjective::IndicatorPoint { point }
    }

    pub fn indicator_box(lo: DVector<f64>, hi: DVector<f64>) -> Result<Self> {
        check_dim("box bounds", lo.len(), hi.len())?;
        if lo.iter().zip(hi.iter()).any(|(l, h)| l.partial_cmp(h).is_none_or(|o| o.is_gt())) {
            return Err(Error::InvalidObjective("box requires lo <= hi".into()));
        }
        Ok(LocalObjective::IndicatorBox { lo, hi })
    }

    /// Sum of objectives on consecutive blocks; the blocks must tile `0..n`.
    pub fn separable_sum(parts: Vec<(LocalObjective, Range<usize>)>) -> Result<Self> {
        let mut next = 0;
        for (obj, range) in &parts {
            if range.start != next || range.end < range.start {
                return Err(Error::InvalidObjective(format!(
                    "separable blocks must tile consecutive ranges; expected a block starting at {next}, got {range:?}"
                )));
            }
            if let Some(d) = obj.dim() {
                check_dim("separable block", range.len(), d)?;
            }
            next = range.end;
        }
        Ok(LocalObjective::SeparableSum(
            parts
                .into_iter()
                .map(|(objective, range)| Block { objective, range })
                .collect(),
        ))
    }

    /// Fixed dimension of the objective, if it has one.
    pub fn dim(&self) -> Option<usize> {
        match self {
            LocalObjective::L1 { .. } => None,
            LocalObjective::Quadratic(qd) => Some(qd.q.len()),
            LocalObjective::IndicatorPoint { point } => Some(point.len()),
            LocalObjective::IndicatorBox { lo, .. } => Some(lo.len()),
            LocalObjective::SeparableSum(blocks) => Some(blocks.last().map_or(0, |b| b.range.end)),
        }
    }

    /// Errors unless the objective can act on vectors of length `n`.
    pub fn check_dim(&self, n: usize) -> Result<()> {
        match self.dim() {
            Some(d) => check_dim("objective", d, n),
            None => Ok(()),
        }
    }

    /// Objective value; `+∞` outside an indicator's domain.
    pub fn eval(&self, v: &DVector<f64>) -> Result<f64> {
        self.check_dim(v.len())?;
        Ok(self.eval_slice(v.as_slice()))
    }

    pub(crate) fn eval_slice(&self, v: &[f64]) -> f64 {
        match self {
            LocalObjective::L1 { weight } => weight * v.iter().map(|x| x.abs()).sum::<f64>(),
            LocalObjective::Quadratic(Quadratic { p, q, c }) => {
                let x = DVector::from_column_slice(v);
                0.5 * x.dot(&(p * &x)) + q.dot(&x) + c
            }
            LocalObjective::IndicatorPoint { point } => {
                let dist = v
                    .iter()
                    .zip(point.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                indicator(dist, v)
            }
            LocalObjective::IndicatorBox { lo, hi } => {
                let dist = v
                    .iter()
                    .zip(lo.iter().zip(hi.iter()))
                    .map(|(x, (l, h))| {
                        let d = (l - x).max(x - h).max(0.0);
                        d * d
                    })
                    .sum::<f64>()
                    .sqrt();
                indicator(dist, v)
            }
            LocalObjective::SeparableSum(blocks) => blocks
                .iter()
                .map(|b| b.objective.eval_slice(&v[b.range.clone()]))
                .sum(),
        }
    }

    /// `argmin_y { f(y) + ‖y - v‖²/(2λ) }`.
    pub fn prox(&self, v: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
        self.check_dim(v.len())?;
        check_lambda(lambda)?;
        let prepared = PreparedProx::new(self, lambda)?;
        let mut out = DVector::zeros(v.len());
        prepared.apply(v.as_slice(), out.as_mut_slice());
        Ok(out)
    }
}

fn indicator(dist: f64, v: &[f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if dist <= MEMBERSHIP_TOL * (1.0 + norm) {
        0.0
    } else {
        f64::INFINITY
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "prox parameter must be positive and finite, got {lambda}"
        )))
    }
}

/// A proximal map with the step `λ` fixed and any factorization precomputed.
#[derive(Debug, Clone)]
pub struct PreparedProx {
    lambda: f64,
    node: PreparedNode,
}

#[derive(Debug, Clone)]
enum PreparedNode {
    SoftThreshold(f64),
    Linear {
        factor: Cholesky<f64, Dyn>,
        shift: DVector<f64>,
    },
    Point(DVector<f64>),
    Clamp(DVector<f64>, DVector<f64>),
    Blocks(Vec<(PreparedNode, Range<usize>)>),
}

impl PreparedProx {
    pub fn new(obj: &LocalObjective, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(PreparedProx {
            lambda,
            node: PreparedNode::build(obj, lambda)?,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Writes `prox(v, λ)` into `out`.
    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        self.node.apply(v, out);
    }
}

impl PreparedNode {
    fn build(obj: &LocalObjective, lambda: f64) -> Result<Self> {
        Ok(match obj {
            LocalObjective::L1 { weight } => PreparedNode::SoftThreshold(weight * lambda),
            LocalObjective::Quadratic(Quadratic { p, q, .. }) => {
                // (I + λP) y = v - λq
                let n = q.len();
                let m = DMatrix::identity(n, n) + p * lambda;
                let factor = Cholesky::new(m).ok_or(Error::NotPsd {
                    min_eigenvalue: f64::NAN,
                })?;
                PreparedNode::Linear {
                    factor,
                    shift: q * lambda,
                }
            }
            LocalObjective::IndicatorPoint { point } => PreparedNode::Point(point.clone()),
            LocalObjective::IndicatorBox { lo, hi } => PreparedNode::Clamp(lo.clone(), hi.clone()),
            LocalObjective::SeparableSum(blocks) => PreparedNode::Blocks(
                blocks
                    .iter()
                    .map(|b| Ok((PreparedNode::build(&b.objective, lambda)?, b.range.clone())))
                    .collect::<Result<_>>()?,
            ),
        })
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        match self {
            PreparedNode::SoftThreshold(k) => {
                for (o, x) in out.iter_mut().zip(v) {
                    *o = x.signum() * (x.abs() - k).max(0.0);
                }
            }
            PreparedNode::Linear { factor, shift } => {
                let rhs = DVector::from_column_slice(v) - shift;
                out.copy_from_slice(factor.solve(&rhs).as_slice());
            }
            PreparedNode::Point(p) => out.copy_from_slice(p.as_slice()),
            PreparedNode::Clamp(lo, hi) => {
                for ((o, x), (l, h)) in out.iter_mut().zip(v).zip(lo.iter().zip(hi.iter())) {
                    *o = x.clamp(*l, *h);
                }
            }
            PreparedNode::Blocks(blocks) => {
                for (node, r) in blocks {
                    node.apply(&v[r.clone()], &mut out[r.clone()]);
                }
            }
        }
    }
}

/// Holds the most recently prepared prox so repeated calls with the same `λ`
/// reuse the factorization. Owned per agent, so it needs no locking.
#[derive(Debug, Clone, Default)]
pub struct ProxCache {
    slot: Option<PreparedProx>,
}

impl ProxCache {
    pub fn get(&mut self, obj: &LocalObjective, lambda: f64) -> Result<&PreparedProx> {
        let stale = self
            .slot
            .as_ref()
            .is_none_or(|p| p.lambda.to_bits() != lambda.to_bits());
        if stale {
            self.slot = Some(PreparedProx::new(obj, lambda)?);
        }
        Ok(self.slot.as_ref().expect("slot populated above"))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum ObjectiveRepr {
    L1 {
        weight: f64,
    },
    Quadratic {
        #[serde(rename = "P")]
        p: Vec<Vec<f64>>,
        q: Vec<f64>,
        #[serde(default)]
        c: f64,
    },
    IndicatorPoint {
        point: Vec<f64>,
    },
    IndicatorBox {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    SeparableSum {
        parts: Vec<BlockRepr>,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlockRepr {
    objective: LocalObjective,
    start: usize,
    len: usize,
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>], ncols: usize, what: &str) -> Result<DMatrix<f64>> {
    if let Some(bad) = rows.iter().position(|r| r.len() != ncols) {
        return Err(Error::InvalidObjective(format!(
            "{what}: row {bad} has length {}, expected {ncols}",
            rows[bad].len()
        )));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub(crate) fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl TryFrom<ObjectiveRepr> for LocalObjective {
    type Error = Error;

    fn try_from(repr: ObjectiveRepr) -> Result<Self> {
        match repr {
            ObjectiveRepr::L1 { weight } => LocalObjective::l1(weight),
            ObjectiveRepr::Quadratic { p, q, c } => {
                let p = matrix_from_rows(&p, q.len(), "quadratic P")?;
                LocalObjective::quadratic(p, DVector::from_vec(q), c)
            }
            ObjectiveRepr::IndicatorPoint { point } => {
                Ok(LocalObjective::indicator_point(DVector::from_vec(point)))
            }
            ObjectiveRepr::IndicatorBox { lo, hi } => {
                LocalObjective::indicator_box(DVector::from_vec(lo), DVector::from_vec(hi))
            }
            ObjectiveRepr::SeparableSum { parts } => LocalObjective::separable_sum(
                parts
                    .into_iter()
                    .map(|b| (b.objective, b.start..b.start + b.len))
                    .collect(),
            ),
        }
    }
}

impl From<LocalObjective> for ObjectiveRepr {
    fn from(obj: LocalObjective) -> Self {
        match obj {
            LocalObjective::L1 { weight } => ObjectiveRepr::L1 { weight },
            LocalObjective::Quadratic(Quadratic { p, q, c }) => ObjectiveRepr::Quadratic {
                p: matrix_to_rows(&p),
                q: q.as_slice().to_vec(),
                c,
            },
            LocalObjective::IndicatorPoint { point } => ObjectiveRepr::IndicatorPoint {
                point: point.as_slice().to_vec(),
            },
            LocalObjective::IndicatorBox { lo, hi } => ObjectiveRepr::IndicatorBox {
                lo: lo.as_slice().to_vec(),
                hi: hi.as_slice().to_vec(),
            },
            LocalObjective::SeparableSum(blocks) => ObjectiveRepr::SeparableSum {
                parts: blocks
                    .into_iter()
                    .map(|b| BlockRepr {
                        start: b.range.start,
                        len: b.range.len(),
                        objective: b.objective,
                    })
                    .collect(),
            },
        }
    }
}
