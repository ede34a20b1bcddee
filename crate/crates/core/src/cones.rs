//! Closed convex cones and their exact Euclidean projections.
//!
//! Every cone supports projection onto itself and onto its polar
//! `K° = { y | <x, y> <= 0 for all x in K }`. The polar projection is always
//! obtained through the Moreau decomposition `Π_{K°}(v) = v - Π_K(v)`, so the
//! two projections split any vector into orthogonal parts.
//!
//! Second-order cones use the `(z, t)` convention with the scalar last:
//! `{ (z, t) ∈ R^{d-1} × R : ‖z‖₂ <= t }`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Something we can project onto exactly, together with its polar.
///
/// Implemented by [`ConeSpec`] and by the [`Polar`] view of a cone, which
/// lets the subproblem solvers work with `K` and `K°` through one interface.
pub trait ConvexCone: Sync {
    fn dim(&self) -> usize;

    /// Writes `Π(v)` into `out`. Slices must both have length `dim()`.
    fn project_into(&self, v: &[f64], out: &mut [f64]);

    /// Writes the projection onto the polar cone into `out`.
    fn project_polar_into(&self, v: &[f64], out: &mut [f64]) {
        self.project_into(v, out);
        for (o, x) in out.iter_mut().zip(v) {
            *o = x - *o;
        }
    }
}

/// Symbolic description of a cone `K ⊆ R^dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ConeRepr", into = "ConeRepr")]
pub enum ConeSpec {
    /// `{0} ⊂ R^dim`.
    Zero(usize),
    /// `R^dim_+`.
    NonnegOrthant(usize),
    /// Second-order cone in `R^dim`, scalar component last.
    SecondOrder(usize),
    /// Cartesian product, projected blockwise.
    Product(ProductCone),
}

/// Cartesian product of cones with precomputed block offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductCone {
    parts: Vec<ConeSpec>,
    offsets: Vec<usize>,
    dim: usize,
}

impl ProductCone {
    pub fn parts(&self) -> &[ConeSpec] {
        &self.parts
    }

    /// Start offset of each part inside the ambient vector.
    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    fn blocks(&self) -> impl Iterator<Item = (&ConeSpec, std::ops::Range<usize>)> {
        self.parts
            .iter()
            .zip(&self.offsets)
            .map(|(c, &o)| (c, o..o + c.dim()))
    }
}

impl ConeSpec {
    pub fn zero(dim: usize) -> Result<Self> {
        leaf_dim(dim).map(ConeSpec::Zero)
    }

    pub fn nonneg(dim: usize) -> Result<Self> {
        leaf_dim(dim).map(ConeSpec::NonnegOrthant)
    }

    pub fn second_order(dim: usize) -> Result<Self> {
        leaf_dim(dim).map(ConeSpec::SecondOrder)
    }

    pub fn product(parts: Vec<ConeSpec>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::InvalidCone("product cone needs at least one part".into()));
        }
        for part in &parts {
            part.validate()?;
        }
        let mut offsets = Vec::with_capacity(parts.len());
        let mut dim = 0;
        for part in &parts {
            offsets.push(dim);
            dim += part.dim();
        }
        Ok(ConeSpec::Product(ProductCone {
            parts,
            offsets,
            dim,
        }))
    }

    /// Checks the leaf-dimension invariant. Constructors already enforce it;
    /// this catches hand-built enum values.
    pub fn validate(&self) -> Result<()> {
        match self {
            ConeSpec::Zero(d) | ConeSpec::NonnegOrthant(d) | ConeSpec::SecondOrder(d) => {
                leaf_dim(*d).map(|_| ())
            }
            ConeSpec::Product(p) => p.parts.iter().try_for_each(ConeSpec::validate),
        }
    }

    /// Total ambient dimension.
    pub fn dim(&self) -> usize {
        match self {
            ConeSpec::Zero(d) | ConeSpec::NonnegOrthant(d) | ConeSpec::SecondOrder(d) => *d,
            ConeSpec::Product(p) => p.dim,
        }
    }

    pub fn polar(&self) -> Polar<'_, ConeSpec> {
        Polar(self)
    }

    /// `Π_K(v)`.
    pub fn project(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("cone projection", self.dim(), v.len())?;
        let mut out = DVector::zeros(v.len());
        self.project_into(v.as_slice(), out.as_mut_slice());
        Ok(out)
    }

    /// `Π_{K°}(v) = v - Π_K(v)`.
    pub fn project_polar(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("polar cone projection", self.dim(), v.len())?;
        let mut out = DVector::zeros(v.len());
        self.project_polar_into(v.as_slice(), out.as_mut_slice());
        Ok(out)
    }

    /// Euclidean distance from `v` to `K`.
    pub fn dist(&self, v: &DVector<f64>) -> Result<f64> {
        Ok(self.project_polar(v)?.norm())
    }

    /// Euclidean distance from `v` to `K°`.
    pub fn polar_dist(&self, v: &DVector<f64>) -> Result<f64> {
        Ok(self.project(v)?.norm())
    }

    /// Membership with the additive-plus-relative tolerance `tol·(1+‖v‖)`.
    pub fn contains(&self, v: &DVector<f64>, tol: f64) -> Result<bool> {
        Ok(self.dist(v)? <= tol * (1.0 + v.norm()))
    }

    /// Polar-cone membership with the same tolerance convention.
    pub fn polar_contains(&self, v: &DVector<f64>, tol: f64) -> Result<bool> {
        Ok(self.polar_dist(v)? <= tol * (1.0 + v.norm()))
    }
}

impl ConvexCone for ConeSpec {
    fn dim(&self) -> usize {
        ConeSpec::dim(self)
    }

    fn project_into(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.dim());
        debug_assert_eq!(out.len(), self.dim());
        match self {
            ConeSpec::Zero(_) => out.fill(0.0),
            ConeSpec::NonnegOrthant(_) => {
                for (o, x) in out.iter_mut().zip(v) {
                    *o = x.max(0.0);
                }
            }
            ConeSpec::SecondOrder(_) => project_soc(v, out),
            ConeSpec::Product(p) => {
                for (cone, range) in p.blocks() {
                    cone.project_into(&v[range.clone()], &mut out[range]);
                }
            }
        }
    }
}

/// Closed-form projection onto `{ (z, t) : ‖z‖ <= t }`.
///
/// Three regimes: inside the cone (identity), inside the polar `‖z‖ <= -t`
/// (origin, which also covers the boundary `‖z‖ = -t`), and otherwise the
/// point `α·(z, ‖z‖)` with `α = (‖z‖ + t) / (2‖z‖)`.
fn project_soc(v: &[f64], out: &mut [f64]) {
    let (z, t) = v.split_at(v.len() - 1);
    let t = t[0];
    let nz = z.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nz <= t {
        out.copy_from_slice(v);
    } else if nz <= -t {
        out.fill(0.0);
    } else {
        let alpha = (nz + t) / (2.0 * nz);
        let (oz, ot) = out.split_at_mut(z.len());
        for (o, x) in oz.iter_mut().zip(z) {
            *o = alpha * x;
        }
        ot[0] = alpha * nz;
    }
}

/// The polar cone `K°` of a cone, viewed as a cone in its own right.
///
/// Projections swap: `Π_{K°}` is the primary projection and, by bipolarity
/// of closed convex cones, `Π_K` is the polar one.
#[derive(Debug, Clone, Copy)]
pub struct Polar<'a, K: ConvexCone + ?Sized>(pub &'a K);

impl<K: ConvexCone + ?Sized> ConvexCone for Polar<'_, K> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn project_into(&self, v: &[f64], out: &mut [f64]) {
        self.0.project_polar_into(v, out);
    }

    fn project_polar_into(&self, v: &[f64], out: &mut [f64]) {
        self.0.project_into(v, out);
    }
}

fn leaf_dim(dim: usize) -> Result<usize> {
    if dim == 0 {
        Err(Error::InvalidCone("cone dimension must be at least 1".into()))
    } else {
        Ok(dim)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum ConeRepr {
    Zero { dim: usize },
    Nonneg { dim: usize },
    Soc { dim: usize },
    Product { parts: Vec<ConeSpec> },
}

impl TryFrom<ConeRepr> for ConeSpec {
    type Error = Error;

    fn try_from(repr: ConeRepr) -> Result<Self> {
        match repr {
            ConeRepr::Zero { dim } => ConeSpec::zero(dim),
            ConeRepr::Nonneg { dim } => ConeSpec::nonneg(dim),
            ConeRepr::Soc { dim } => ConeSpec::second_order(dim),
            ConeRepr::Product { parts } => ConeSpec::product(parts),
        }
    }
}

impl From<ConeSpec> for ConeRepr {
    fn from(cone: ConeSpec) -> Self {
        match cone {
            ConeSpec::Zero(dim) => ConeRepr::Zero { dim },
            ConeSpec::NonnegOrthant(dim) => ConeRepr::Nonneg { dim },
            ConeSpec::SecondOrder(dim) => ConeRepr::Soc { dim },
            ConeSpec::Product(p) => ConeRepr::Product { parts: p.parts },
        }
    }
}
