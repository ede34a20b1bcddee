//! Instance generators and independent oracles shared by the integration tests.
#![allow(dead_code)]

use dcadmm::dual::{Agent, CoupledProblem};
use dcadmm::{ConeSpec, Graph, LocalObjective};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeKind {
    Zero,
    Nonneg,
    SecondOrder,
}

impl ConeKind {
    pub const ALL: [ConeKind; 3] = [ConeKind::Zero, ConeKind::Nonneg, ConeKind::SecondOrder];

    pub fn spec(self, m: usize) -> ConeSpec {
        match self {
            ConeKind::Zero => ConeSpec::zero(m),
            ConeKind::Nonneg => ConeSpec::nonneg(m),
            ConeKind::SecondOrder => ConeSpec::second_order(m),
        }
        .unwrap()
    }

    /// Projection onto the polar cone, written out from the definitions.
    pub fn project_polar(self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            ConeKind::Zero => v.clone(),
            ConeKind::Nonneg => v.map(|x| x.min(0.0)),
            // The second-order cone is self-dual, so its polar is its negative.
            ConeKind::SecondOrder => -soc_projection(&(-v)),
        }
    }
}

/// Projection onto `{(z, t) : ‖z‖ <= t}` via the spectral decomposition
/// `v = λ₁ u₁ + λ₂ u₂` with `λ = t ∓ ‖z‖`, clipping the eigenvalues at zero.
pub fn soc_projection(v: &DVector<f64>) -> DVector<f64> {
    let n = v.len();
    let t = v[n - 1];
    let z = v.rows(0, n - 1).into_owned();
    let nz = z.norm();
    let dir = if nz > 0.0 { &z / nz } else { DVector::zeros(n - 1) };
    let (l1, l2) = (t - nz, t + nz);
    let mut out = DVector::zeros(n);
    for (lambda, sign) in [(l1, -1.0), (l2, 1.0)] {
        let lambda: f64 = lambda.max(0.0);
        for i in 0..n - 1 {
            out[i] += 0.5 * lambda * sign * dir[i];
        }
        out[n - 1] += 0.5 * lambda;
    }
    out
}

/// Quadratic agent data `(P, q, A, b)`.
#[derive(Debug, Clone)]
pub struct QuadAgent {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct QuadInstance {
    pub agents: Vec<QuadAgent>,
    pub kind: ConeKind,
    pub m: usize,
    pub graph: Graph,
}

impl QuadInstance {
    pub fn problem(&self) -> CoupledProblem {
        let agents = self
            .agents
            .iter()
            .map(|ag| {
                let f = LocalObjective::quadratic(ag.p.clone(), ag.q.clone(), 0.0).unwrap();
                Agent::new(f, ag.a.clone(), ag.b.clone()).unwrap()
            })
            .collect();
        CoupledProblem::new(agents, self.kind.spec(self.m), self.graph.clone()).unwrap()
    }

    /// Largest Frobenius norm among all problem data.
    pub fn data_scale(&self) -> f64 {
        self.agents
            .iter()
            .flat_map(|ag| [ag.p.norm(), ag.q.norm(), ag.a.norm(), ag.b.norm()])
            .fold(0.0, f64::max)
    }
}

pub fn random_graph(rng: &mut ChaCha8Rng, n: usize) -> Graph {
    match n {
        1 => Graph::new(1, &[]).unwrap(),
        2 => Graph::new(2, &[(0, 1)]).unwrap(),
        _ => {
            let max = n * (n - 1) / 2;
            let m = rng.random_range(n..=max);
            Graph::small_world(n, m, rng).unwrap()
        }
    }
}

/// `N ∈ 2..=4` agents with `n_i ∈ 1..=3`, `m ∈ 1..=4`, `Σ n_i >= m`, and
/// strongly convex quadratics `P_i = B Bᵀ + I/2`.
pub fn random_quad_instance(rng: &mut ChaCha8Rng, kind: ConeKind) -> QuadInstance {
    let n_agents = rng.random_range(2..=4);
    let m = rng.random_range(1..=4);
    let dims: Vec<usize> = loop {
        let d: Vec<usize> = (0..n_agents).map(|_| rng.random_range(1..=3)).collect();
        if d.iter().sum::<usize>() >= m {
            break d;
        }
    };
    let agents = dims
        .iter()
        .map(|&n| {
            let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            QuadAgent {
                p: &b * b.transpose() + DMatrix::identity(n, n) * 0.5,
                q: DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)),
                a: DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0)),
                b: DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0)),
            }
        })
        .collect();
    QuadInstance {
        agents,
        kind,
        m,
        graph: random_graph(rng, n_agents),
    }
}

/// Centralized solution of
/// `min Σ ½xᵢᵀPᵢxᵢ + qᵢᵀxᵢ  s.t.  Σ(Aᵢxᵢ - bᵢ) ∈ K`
/// through its dual: minimize `h(y) = Σ ½(qᵢ + Aᵢᵀy)ᵀPᵢ⁻¹(qᵢ + Aᵢᵀy) + ⟨y, Σbᵢ⟩`
/// over `y ∈ K°` with accelerated projected gradient, then
/// `xᵢ = -Pᵢ⁻¹(qᵢ + Aᵢᵀy)`. The zero cone is solved directly from the KKT system.
pub fn centralized_quadratic(inst: &QuadInstance) -> Vec<DVector<f64>> {
    let m = inst.m;
    let pinv: Vec<DMatrix<f64>> = inst.agents.iter().map(|a| a.p.clone().try_inverse().unwrap()).collect();
    let bsum = inst.agents.iter().fold(DVector::zeros(m), |acc, a| acc + &a.b);
    let primal = |y: &DVector<f64>| -> Vec<DVector<f64>> {
        inst.agents
            .iter()
            .zip(&pinv)
            .map(|(a, pi)| -(pi * (&a.q + a.a.tr_mul(y))))
            .collect()
    };
    // Hessian of h and its constant part.
    let h = inst
        .agents
        .iter()
        .zip(&pinv)
        .fold(DMatrix::zeros(m, m), |acc, (a, pi)| acc + &a.a * pi * a.a.transpose());
    let c = inst
        .agents
        .iter()
        .zip(&pinv)
        .fold(bsum.clone(), |acc, (a, pi)| acc + &a.a * (pi * &a.q));
    if inst.kind == ConeKind::Zero {
        let y = h.clone().lu().solve(&(-&c)).expect("nonsingular dual Hessian");
        return primal(&y);
    }
    let lip = h.symmetric_eigenvalues().max();
    let mut y = DVector::zeros(m);
    let mut z = y.clone();
    let mut t = 1.0f64;
    for _ in 0..2_000_000 {
        let grad = &h * &z + &c;
        let next = inst.kind.project_polar(&(&z - grad / lip));
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = &next + (&next - &y) * ((t - 1.0) / t_next);
        let step = (&next - &y).norm();
        y = next;
        t = t_next;
        // Gradient mapping at y.
        let g = &h * &y + &c;
        let gm = (&y - inst.kind.project_polar(&(&y - &g / lip))).norm() * lip;
        if gm <= 1e-13 && step <= 1e-14 {
            break;
        }
    }
    primal(&y)
}
