//! Fast self-check of the numerical building blocks on random data.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cones::{ConeSpec, ConvexCone};
use crate::dual::{self, Agent, Algorithm, CoupledProblem, InnerPolicy};
use crate::graph::Graph;
use crate::objectives::LocalObjective;
use crate::subproblem::{prox_dual_via_primal, InnerConfig};

/// Deliberate defects for exercising the checks themselves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fault {
    #[default]
    None,
    /// Polar projections return the negated result.
    PolarSignFlip,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    /// Largest observed error.
    pub error: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub checks: Vec<CheckOutcome>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

struct Faulty<'a> {
    cone: &'a ConeSpec,
    fault: Fault,
}

impl ConvexCone for Faulty<'_> {
    fn dim(&self) -> usize {
        self.cone.dim()
    }

    fn project_into(&self, v: &[f64], out: &mut [f64]) {
        self.cone.project_into(v, out);
    }

    fn project_polar_into(&self, v: &[f64], out: &mut [f64]) {
        self.cone.project_polar_into(v, out);
        if self.fault == Fault::PolarSignFlip {
            out.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-scale..scale))
}

fn cone_zoo() -> Vec<ConeSpec> {
    let ok = |c: crate::error::Result<ConeSpec>| c.expect("valid cone");
    vec![
        ok(ConeSpec::zero(3)),
        ok(ConeSpec::nonneg(4)),
        ok(ConeSpec::second_order(2)),
        ok(ConeSpec::second_order(5)),
        ok(ConeSpec::product(vec![
            ok(ConeSpec::nonneg(2)),
            ok(ConeSpec::second_order(3)),
            ok(ConeSpec::zero(1)),
        ])),
    ]
}

fn project(cone: &dyn ConvexCone, v: &DVector<f64>, polar: bool) -> DVector<f64> {
    let mut out = DVector::zeros(v.len());
    if polar {
        cone.project_polar_into(v.as_slice(), out.as_mut_slice());
    } else {
        cone.project_into(v.as_slice(), out.as_mut_slice());
    }
    out
}

fn moreau_check(rng: &mut ChaCha8Rng, fault: Fault) -> CheckOutcome {
    let tol = 1e-12;
    let mut err = 0.0f64;
    for cone in cone_zoo() {
        let faulty = Faulty { cone: &cone, fault };
        for _ in 0..200 {
            let v = random_vec(rng, cone.dim(), 10.0);
            let a = project(&faulty, &v, false);
            let b = project(&faulty, &v, true);
            let scale = 1.0 + v.norm();
            err = err.max((&a + &b - &v).norm() / scale);
            err = err.max(a.dot(&b).abs() / (scale * scale));
            // Projections are idempotent.
            err = err.max((project(&faulty, &a, false) - &a).norm() / scale);
            err = err.max((project(&faulty, &b, true) - &b).norm() / scale);
        }
    }
    CheckOutcome {
        name: "moreau decomposition and idempotence",
        passed: err <= tol,
        error: err,
        tolerance: tol,
    }
}

fn multiplier_sum_check(rng: &mut ChaCha8Rng) -> CheckOutcome {
    let n = rng.random_range(3..=6);
    let m = 3;
    let graph = Graph::small_world(n, n, rng).expect("valid cycle");
    let agents = (0..n)
        .map(|_| {
            let c = random_vec(rng, 2, 2.0);
            let obj = LocalObjective::quadratic(DMatrix::identity(2, 2), -c, 0.0).expect("psd");
            let a = DMatrix::from_fn(m, 2, |_, _| rng.random_range(-1.0..1.0));
            Agent::new(obj, a, random_vec(rng, m, 1.0)).expect("consistent agent")
        })
        .collect();
    let problem = CoupledProblem::new(agents, ConeSpec::second_order(m).expect("cone"), graph).expect("problem");
    let mut err = 0.0f64;
    let mut failed = false;
    for alg in Algorithm::ALL {
        let mut states = dual::initial_states(&problem, alg);
        for _ in 0..30 {
            let step = match alg {
                Algorithm::Aggregate => dual::aggregate_round(&problem, &mut states, 1.0, InnerPolicy::default()),
                Algorithm::Decomposed => {
                    dual::decomposed_round(&problem, &mut states, 1.0, 1.0, InnerPolicy::default())
                }
            };
            if step.is_err() {
                failed = true;
                break;
            }
            let sum = states.iter().fold(DVector::zeros(m), |acc, s| acc + &s.p);
            let scale = 1.0 + states.iter().map(|s| s.p.norm()).fold(0.0, f64::max);
            err = err.max(sum.norm() / scale);
        }
    }
    let tol = 1e-10;
    CheckOutcome {
        name: "multipliers sum to zero",
        passed: !failed && err <= tol,
        error: if failed { f64::INFINITY } else { err },
        tolerance: tol,
    }
}

/// `argmin_{y ∈ C} ½(Eᵀy + q)ᵀ P⁻¹ (Eᵀy + q) + (γ/2)‖y - z‖²` by projected
/// gradient, for `g(x) = ½xᵀPx + qᵀx`.
fn direct_dual_prox(
    p: &DMatrix<f64>,
    q: &DVector<f64>,
    e: &DMatrix<f64>,
    cone: &dyn ConvexCone,
    z: &DVector<f64>,
    gamma: f64,
) -> DVector<f64> {
    let pinv = p.clone().try_inverse().expect("positive definite");
    let h = e * &pinv * e.transpose();
    let lip = h.symmetric_eigenvalues().max() + gamma;
    let mut y = project(cone, z, false);
    for _ in 0..20_000 {
        let grad = e * (&pinv * (e.tr_mul(&y) + q)) + (&y - z) * gamma;
        let next = project(cone, &(&y - grad / lip), false);
        let done = (&next - &y).norm() <= 1e-15 * (1.0 + y.norm());
        y = next;
        if done {
            break;
        }
    }
    y
}

fn dual_prox_check(rng: &mut ChaCha8Rng, fault: Fault) -> CheckOutcome {
    let tol = 1e-6;
    let mut err = 0.0f64;
    let cones = cone_zoo();
    for k in 0..10 {
        let cone = &cones[k % cones.len()];
        let m = cone.dim();
        let n = rng.random_range(1..=4);
        let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let p = &b * b.transpose() + DMatrix::identity(n, n) * 0.5;
        let q = random_vec(rng, n, 1.0);
        let g = LocalObjective::quadratic(p.clone(), q.clone(), 0.0).expect("psd");
        let e = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
        let z = random_vec(rng, m, 2.0);
        let gamma = rng.random_range(0.5..3.0);
        let faulty = Faulty { cone, fault };
        let cfg = InnerConfig {
            tol: 1e-12,
            max_iter: 20_000,
        };
        let via_primal = match prox_dual_via_primal(&g, &e, &faulty, &z, gamma, cfg) {
            Ok(y) => y,
            Err(_) => {
                err = f64::INFINITY;
                continue;
            }
        };
        let direct = direct_dual_prox(&p, &q, &e, cone, &z, gamma);
        err = err.max((via_primal - direct).amax());
    }
    CheckOutcome {
        name: "dual prox through the primal problem",
        passed: err <= tol,
        error: err,
        tolerance: tol,
    }
}

/// Runs every check once with randomness drawn from `seed`.
pub fn run_checks(seed: u64, fault: Fault) -> VerifyReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let checks = vec![
        moreau_check(&mut rng, fault),
        multiplier_sum_check(&mut rng),
        dual_prox_check(&mut rng, fault),
    ];
    VerifyReport { seed, checks }
}

/// Independent sweeps with seeds `0..sweeps`.
pub fn seed_sweep(sweeps: u64, fault: Fault) -> Vec<VerifyReport> {
    (0..sweeps).map(|s| run_checks(s, fault)).collect()
}
