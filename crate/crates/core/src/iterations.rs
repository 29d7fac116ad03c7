//! Operators on ℝᵈ, the iterative schemes built from them, and the residual
//! families used to measure approximate fixed points.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moduli::{inv_succ, ApproximationFamily};
use crate::nat::Nat;

pub type Point = DVector<f64>;

pub fn point(v: &[f64]) -> Point {
    DVector::from_column_slice(v)
}

fn one() -> f64 {
    1.0
}

/// `W(x, y, λ) = (1−λ)x + λy`.
pub fn convex(x: &Point, y: &Point, lambda: f64) -> Point {
    x * (1.0 - lambda) + y * lambda
}

// Sequences

/// A closed-form real sequence `(a_n)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SeqSpec {
    Constant { value: f64 },
    /// `a + c/(n+1)`
    AffineInv { a: f64, c: f64 },
    /// Listed values, then `tail` forever.
    Table { values: Vec<f64>, tail: f64 },
}

impl SeqSpec {
    pub fn constant(value: f64) -> Self {
        SeqSpec::Constant { value }
    }

    pub fn at(&self, n: u64) -> f64 {
        match self {
            SeqSpec::Constant { value } => *value,
            SeqSpec::AffineInv { a, c } => a + c / (n as f64 + 1.0),
            SeqSpec::Table { values, tail } => usize::try_from(n)
                .ok()
                .and_then(|i| values.get(i))
                .copied()
                .unwrap_or(*tail),
        }
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self {
            SeqSpec::Constant { value } => Some(*value),
            SeqSpec::AffineInv { a, c } if *c == 0.0 => Some(*a),
            SeqSpec::Table { values, tail } if values.iter().all(|v| v == tail) => Some(*tail),
            _ => None,
        }
    }

    /// Values that can be extreme over all indices, with whether each is
    /// attained (the limit of a strictly monotone tail is not).
    fn extremes(&self) -> Vec<(f64, bool)> {
        match self {
            SeqSpec::Constant { value } => vec![(*value, true)],
            SeqSpec::AffineInv { a, c } => vec![(a + c, true), (*a, *c == 0.0)],
            SeqSpec::Table { values, tail } => values.iter().map(|v| (*v, true)).chain([(*tail, true)]).collect(),
        }
    }

    /// Checks that every term lies in the interval `lo..hi` with the given
    /// openness at each end.
    pub fn check_range(&self, field: &str, lo: f64, lo_open: bool, hi: f64, hi_open: bool) -> Result<()> {
        for (v, attained) in self.extremes() {
            let below = v < lo || (attained && lo_open && v == lo);
            let above = v > hi || (attained && hi_open && v == hi);
            if !v.is_finite() || below || above {
                let l = if lo_open { '(' } else { '[' };
                let r = if hi_open { ')' } else { ']' };
                return Err(Error::range(field, format!("term {v} outside {l}{lo}, {hi}{r}")));
            }
        }
        Ok(())
    }

    /// Candidates for the extreme terms among indices `0..=k`.
    pub fn extreme_values_upto(&self, k: &Nat) -> Vec<f64> {
        let kk = u64::try_from(k).unwrap_or(u64::MAX);
        match self {
            SeqSpec::Constant { value } => vec![*value],
            SeqSpec::AffineInv { .. } => vec![self.at(0), self.at(kk)],
            SeqSpec::Table { values, tail } => {
                let upto = usize::try_from(kk).map_or(values.len(), |i| (i + 1).min(values.len()));
                let mut out = values[..upto].to_vec();
                if kk as usize >= values.len() {
                    out.push(*tail);
                }
                out
            }
        }
    }

    pub fn max_upto(&self, k: &Nat) -> f64 {
        self.extreme_values_upto(k).into_iter().fold(f64::NEG_INFINITY, f64::max)
    }
}

// Domains

/// The convex set `C` an operator acts on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Domain {
    Ball {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Vec<f64>>,
        radius: f64,
    },
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl Domain {
    pub fn ball(radius: f64) -> Self {
        Domain::Ball { center: None, radius }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Domain::Ball { center, radius } => {
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::range("domain/radius", "must be > 0"));
                }
                if center.as_ref().is_some_and(|c| c.len() != dim) {
                    return Err(Error::range("domain/center", format!("expected {dim} coordinates")));
                }
            }
            Domain::Box { lo, hi } => {
                if lo.len() != dim || hi.len() != dim {
                    return Err(Error::range("domain", format!("box bounds need {dim} coordinates")));
                }
                // Also rejects NaN corners.
                if lo.iter().zip(hi).any(|(l, h)| l.partial_cmp(h).is_none_or(|o| o.is_gt())) {
                    return Err(Error::range("domain/lo", "lower corner exceeds upper corner"));
                }
            }
        }
        Ok(())
    }

    fn center(&self, dim: usize) -> Point {
        match self {
            Domain::Ball { center, .. } => center.as_deref().map_or_else(|| Point::zeros(dim), point),
            Domain::Box { lo, hi } => point(&lo.iter().zip(hi).map(|(l, h)| (l + h) / 2.0).collect::<Vec<_>>()),
        }
    }

    pub fn contains(&self, p: &Point, tau: f64) -> bool {
        match self {
            Domain::Ball { radius, .. } => (p - self.center(p.len())).norm() <= radius + tau,
            Domain::Box { lo, hi } => p
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(x, (l, h))| *x >= l - tau && *x <= h + tau),
        }
    }

    pub fn diameter(&self) -> f64 {
        match self {
            Domain::Ball { radius, .. } => 2.0 * radius,
            Domain::Box { lo, hi } => lo.iter().zip(hi).map(|(l, h)| (h - l).powi(2)).sum::<f64>().sqrt(),
        }
    }

    pub fn sample(&self, dim: usize, rng: &mut impl Rng) -> Point {
        match self {
            Domain::Ball { radius, .. } => {
                let dir = Point::from_fn(dim, |_, _| StandardNormal.sample(rng));
                let norm = dir.norm().max(f64::MIN_POSITIVE);
                let rho = radius * rng.random::<f64>().powf(1.0 / dim as f64);
                self.center(dim) + dir * (rho / norm)
            }
            Domain::Box { lo, hi } => Point::from_fn(dim, |i, _| {
                if lo[i] == hi[i] {
                    lo[i]
                } else {
                    rng.random_range(lo[i]..=hi[i])
                }
            }),
        }
    }

    /// Center and axis-extreme points, always included in validation samples.
    fn special_points(&self, dim: usize) -> Vec<Point> {
        let c = self.center(dim);
        let mut out = vec![c.clone()];
        for i in 0..dim {
            let (a, b) = match self {
                Domain::Ball { radius, .. } => (c[i] - radius, c[i] + radius),
                Domain::Box { lo, hi } => (lo[i], hi[i]),
            };
            for v in [a, b] {
                let mut p = c.clone();
                p[i] = v;
                out.push(p);
            }
        }
        out
    }
}

// Operators

/// Declarative description of a map `T: ℝᵈ → ℝᵈ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Operator {
    /// `x ↦ a·x + c`
    Scale {
        a: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        c: Option<Vec<f64>>,
    },
    /// `x ↦ A·x + c`, `A` given by rows.
    Affine { a: Vec<Vec<f64>>, c: Vec<f64> },
    ProjectBox { lo: Vec<f64>, hi: Vec<f64> },
    ProjectBall {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Vec<f64>>,
        radius: f64,
    },
    /// Resolvent of `∇f` for `f(x) = ½xᵀQx + cᵀx`: `(I+γQ)⁻¹(x − γc)`.
    Prox {
        q: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        c: Option<Vec<f64>>,
        gamma: f64,
    },
    /// `T = (N − κ·Id)/(1 − κ)` for a nonexpansive `N`.
    SpcFromNonexpansive { inner: Box<Operator>, kappa: f64 },
    /// `x ↦ −scale·x`
    Reflection {
        #[serde(default = "one")]
        scale: f64,
    },
    /// Piecewise-linear map on ℝ through `knots`, with pointwise overrides
    /// `exact` for maps with isolated jumps.
    Table1d {
        knots: Vec<[f64; 2]>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        exact: Vec<[f64; 2]>,
    },
}

/// Strictly convex quadratic data `f(x) = ½xᵀQx + cᵀx` with `Q` symmetric
/// positive semidefinite.
#[derive(Clone, Debug, PartialEq)]
pub struct Quadratic {
    pub q: DMatrix<f64>,
    pub c: Point,
}

impl Quadratic {
    pub fn new(q: DMatrix<f64>, c: Point) -> Result<Self> {
        let d = q.nrows();
        if q.ncols() != d || c.len() != d {
            return Err(Error::range("operator/q", "Q must be square and match c"));
        }
        if (&q - q.transpose()).abs().max() > 1e-12 {
            return Err(Error::range("operator/q", "Q must be symmetric"));
        }
        let min_eig = SymmetricEigen::new(q.clone()).eigenvalues.min();
        if min_eig < -1e-12 {
            return Err(Error::range("operator/q", format!("Q must be positive semidefinite, eigenvalue {min_eig}")));
        }
        Ok(Quadratic { q, c })
    }

    /// `J_γ x = (I + γQ)⁻¹(x − γc)`.
    pub fn resolvent(&self, gamma: f64, x: &Point) -> Result<Point> {
        let d = x.len();
        let m = DMatrix::identity(d, d) + &self.q * gamma;
        m.lu()
            .solve(&(x - &self.c * gamma))
            .ok_or_else(|| Error::Singular(format!("I + {gamma}·Q is singular")))
    }
}

/// An operator with dimensions checked and matrices factorized.
#[derive(Clone, Debug)]
pub enum Map {
    Affine { a: DMatrix<f64>, c: Point },
    ProjectBox { lo: Point, hi: Point },
    ProjectBall { center: Point, radius: f64 },
    Resolvent { inv: DMatrix<f64>, shift: Point, quad: Quadratic, gamma: f64 },
    Spc { inner: Box<Map>, kappa: f64 },
    Table1d { knots: Vec<(f64, f64)>, exact: Vec<(f64, f64)> },
}

fn matrix(rows: &[Vec<f64>], dim: usize, field: &str) -> Result<DMatrix<f64>> {
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        return Err(Error::range(field, format!("expected a {dim}x{dim} matrix")));
    }
    Ok(DMatrix::from_fn(dim, dim, |i, j| rows[i][j]))
}

fn vector(v: &[f64], dim: usize, field: &str) -> Result<Point> {
    if v.len() != dim {
        return Err(Error::range(field, format!("expected {dim} coordinates, got {}", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::range(field, "coordinates must be finite"));
    }
    Ok(point(v))
}

/// Points closer than this to an override abscissa take the override value.
const EXACT_MATCH: f64 = 1e-12;

impl Operator {
    pub fn compile(&self, dim: usize) -> Result<Map> {
        Ok(match self {
            Operator::Scale { a, c } => Map::Affine {
                a: DMatrix::identity(dim, dim) * *a,
                c: match c {
                    Some(c) => vector(c, dim, "operator/c")?,
                    None => Point::zeros(dim),
                },
            },
            Operator::Affine { a, c } => Map::Affine {
                a: matrix(a, dim, "operator/a")?,
                c: vector(c, dim, "operator/c")?,
            },
            Operator::Reflection { scale } => Map::Affine {
                a: DMatrix::identity(dim, dim) * -*scale,
                c: Point::zeros(dim),
            },
            Operator::ProjectBox { lo, hi } => {
                let (lo, hi) = (vector(lo, dim, "operator/lo")?, vector(hi, dim, "operator/hi")?);
                if lo.iter().zip(hi.iter()).any(|(l, h)| l > h) {
                    return Err(Error::range("operator/lo", "lower corner exceeds upper corner"));
                }
                Map::ProjectBox { lo, hi }
            }
            Operator::ProjectBall { center, radius } => {
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::range("operator/radius", "must be > 0"));
                }
                Map::ProjectBall {
                    center: match center {
                        Some(c) => vector(c, dim, "operator/center")?,
                        None => Point::zeros(dim),
                    },
                    radius: *radius,
                }
            }
            Operator::Prox { gamma, .. } => {
                if !(gamma.is_finite() && *gamma > 0.0) {
                    return Err(Error::range("operator/gamma", "must be > 0"));
                }
                let quad = self.quadratic(dim)?.expect("prox has quadratic data");
                let inv = (DMatrix::identity(dim, dim) + &quad.q * *gamma)
                    .try_inverse()
                    .ok_or_else(|| Error::Singular("I + γQ".into()))?;
                Map::Resolvent {
                    inv,
                    shift: &quad.c * *gamma,
                    quad,
                    gamma: *gamma,
                }
            }
            Operator::SpcFromNonexpansive { inner, kappa } => {
                if !(0.0..1.0).contains(kappa) {
                    return Err(Error::range("operator/kappa", "must lie in [0, 1)"));
                }
                Map::Spc {
                    inner: Box::new(inner.compile(dim)?),
                    kappa: *kappa,
                }
            }
            Operator::Table1d { knots, exact } => {
                if dim != 1 {
                    return Err(Error::range("operator", "table_1d maps need dim = 1"));
                }
                if knots.is_empty() {
                    return Err(Error::range("operator/knots", "need at least one knot"));
                }
                let mut k: Vec<(f64, f64)> = knots.iter().map(|[x, y]| (*x, *y)).collect();
                k.sort_by(|a, b| a.0.total_cmp(&b.0));
                if k.windows(2).any(|w| w[0].0 == w[1].0) || k.iter().any(|(x, y)| !(x.is_finite() && y.is_finite())) {
                    return Err(Error::range("operator/knots", "abscissae must be finite and distinct"));
                }
                Map::Table1d {
                    knots: k,
                    exact: exact.iter().map(|[x, y]| (*x, *y)).collect(),
                }
            }
        })
    }

    /// Quadratic data of a prox operator.
    pub fn quadratic(&self, dim: usize) -> Result<Option<Quadratic>> {
        match self {
            Operator::Prox { q, c, .. } => {
                let c = match c {
                    Some(c) => vector(c, dim, "operator/c")?,
                    None => Point::zeros(dim),
                };
                Ok(Some(Quadratic::new(matrix(q, dim, "operator/q")?, c)?))
            }
            _ => Ok(None),
        }
    }

    /// Abscissae where a table map is discontinuous or bends.
    fn special_points(&self) -> Vec<Point> {
        match self {
            Operator::Table1d { knots, exact } => knots.iter().chain(exact).map(|[x, _]| point(&[*x])).collect(),
            Operator::SpcFromNonexpansive { inner, .. } => inner.special_points(),
            _ => Vec::new(),
        }
    }
}

impl Map {
    pub fn apply(&self, x: &Point) -> Point {
        match self {
            Map::Affine { a, c } => a * x + c,
            Map::ProjectBox { lo, hi } => x.zip_zip_map(lo, hi, |v, l, h| v.clamp(l, h)),
            Map::ProjectBall { center, radius } => {
                let d = x - center;
                let n = d.norm();
                if n <= *radius {
                    x.clone()
                } else {
                    center + d * (radius / n)
                }
            }
            Map::Resolvent { inv, shift, .. } => inv * (x - shift),
            Map::Spc { inner, kappa } => (inner.apply(x) - x * *kappa) / (1.0 - kappa),
            Map::Table1d { knots, exact } => {
                let v = x[0];
                if let Some((_, y)) = exact.iter().find(|(e, _)| (v - e).abs() <= EXACT_MATCH) {
                    return point(&[*y]);
                }
                point(&[interpolate(knots, v)])
            }
        }
    }

    /// `T^n x`.
    pub fn apply_n(&self, x: &Point, n: u64) -> Point {
        let mut y = x.clone();
        for _ in 0..n {
            y = self.apply(&y);
        }
        y
    }

    /// `‖x − Tx‖`.
    pub fn residual(&self, x: &Point) -> f64 {
        (x - self.apply(x)).norm()
    }
}

fn interpolate(knots: &[(f64, f64)], v: f64) -> f64 {
    let first = knots[0];
    let last = knots[knots.len() - 1];
    if v <= first.0 {
        return first.1;
    }
    if v >= last.0 {
        return last.1;
    }
    let i = knots.partition_point(|(x, _)| *x <= v);
    let (x0, y0) = knots[i - 1];
    let (x1, y1) = knots[i];
    y0 + (y1 - y0) * (v - x0) / (x1 - x0)
}

// Properties

/// Properties an operator may declare; each is validated by sampling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "property", rename_all = "snake_case", deny_unknown_fields)]
pub enum Property {
    Nonexpansive,
    FirmlyNonexpansive { lambda: f64 },
    StrictPseudoContraction { kappa: f64 },
    ConditionE { mu: f64 },
    AsymptoticallyNonexpansive { k_seq: SeqSpec },
}

/// Iterates checked by the asymptotic-nonexpansiveness validator.
pub const ASYM_POWERS: u64 = 50;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PropertyViolation {
    pub property: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
}

impl std::fmt::Display for PropertyViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} fails at x = {:?}, y = {:?}: {} > {}",
            self.property, self.x, self.y, self.lhs, self.rhs
        )
    }
}

impl Property {
    pub fn name(&self) -> &'static str {
        match self {
            Property::Nonexpansive => "nonexpansive",
            Property::FirmlyNonexpansive { .. } => "firmly_nonexpansive",
            Property::StrictPseudoContraction { .. } => "strict_pseudo_contraction",
            Property::ConditionE { .. } => "condition_e",
            Property::AsymptoticallyNonexpansive { .. } => "asymptotically_nonexpansive",
        }
    }

    pub fn validate_params(&self) -> Result<()> {
        match self {
            Property::FirmlyNonexpansive { lambda } if !(*lambda > 0.0 && *lambda < 1.0) => {
                Err(Error::range("properties/lambda", "must lie in (0, 1)"))
            }
            Property::StrictPseudoContraction { kappa } if !(0.0..1.0).contains(kappa) => {
                Err(Error::range("properties/kappa", "must lie in [0, 1)"))
            }
            Property::ConditionE { mu } if !(mu.is_finite() && *mu >= 1.0) => {
                Err(Error::range("properties/mu", "must be >= 1"))
            }
            Property::AsymptoticallyNonexpansive { k_seq } => {
                k_seq.check_range("properties/k_seq", 0.0, false, f64::INFINITY, true)
            }
            _ => Ok(()),
        }
    }

    /// `(lhs, rhs)` of the defining inequality at `(x, y)`, or `None` when it
    /// holds within `tau`.
    fn check_pair(&self, t: &Map, x: &Point, y: &Point, tau: f64) -> Option<(f64, f64)> {
        let (tx, ty) = (t.apply(x), t.apply(y));
        let dxy = (x - y).norm();
        let fail = |lhs: f64, rhs: f64| (lhs > rhs + tau).then_some((lhs, rhs));
        match self {
            Property::Nonexpansive => fail((&tx - &ty).norm(), dxy),
            Property::FirmlyNonexpansive { lambda } => {
                let mid = (convex(x, &tx, *lambda) - convex(y, &ty, *lambda)).norm();
                fail((&tx - &ty).norm(), mid).or_else(|| fail(mid, dxy))
            }
            Property::StrictPseudoContraction { kappa } => {
                let lhs = (&tx - &ty).norm_squared();
                let rhs = dxy * dxy + kappa * ((x - &tx) - (y - &ty)).norm_squared();
                fail(lhs, rhs)
            }
            Property::ConditionE { mu } => fail((x - &ty).norm(), mu * (&tx - x).norm() + dxy),
            Property::AsymptoticallyNonexpansive { k_seq } => {
                let (mut a, mut b) = (x.clone(), y.clone());
                for n in 1..=ASYM_POWERS {
                    a = t.apply(&a);
                    b = t.apply(&b);
                    if let Some(v) = fail((&a - &b).norm(), (1.0 + k_seq.at(n)) * dxy) {
                        return Some(v);
                    }
                }
                None
            }
        }
    }
}

/// Checks every declared property and `T(C) ⊆ C` on `pairs` sampled pairs
/// plus all pairs of distinguished points.
pub fn validate_operator(
    op: &Operator,
    t: &Map,
    domain: &Domain,
    props: &[Property],
    dim: usize,
    pairs: usize,
    seed: u64,
    tau: f64,
) -> std::result::Result<(), PropertyViolation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut special = domain.special_points(dim);
    special.extend(op.special_points().into_iter().filter(|p| p.len() == dim && domain.contains(p, 0.0)));
    let mut samples: Vec<(Point, Point)> = Vec::with_capacity(pairs + special.len().pow(2));
    for a in &special {
        for b in &special {
            samples.push((a.clone(), b.clone()));
        }
    }
    for i in 0..pairs {
        let x = domain.sample(dim, &mut rng);
        let y = if i % 4 == 0 && !special.is_empty() {
            special[i / 4 % special.len()].clone()
        } else {
            domain.sample(dim, &mut rng)
        };
        samples.push((x, y));
    }
    for (x, y) in &samples {
        let tx = t.apply(x);
        if !domain.contains(&tx, tau) {
            return Err(PropertyViolation {
                property: "self_map".into(),
                x: x.iter().copied().collect(),
                y: tx.iter().copied().collect(),
                lhs: f64::NAN,
                rhs: f64::NAN,
            });
        }
        for p in props {
            if let Some((lhs, rhs)) = p.check_pair(t, x, y, tau) {
                return Err(PropertyViolation {
                    property: p.name().into(),
                    x: x.iter().copied().collect(),
                    y: y.iter().copied().collect(),
                    lhs,
                    rhs,
                });
            }
        }
    }
    Ok(())
}

// Trajectories

#[derive(Clone, Debug, PartialEq)]
pub enum Step {
    /// `x_{n+1} = T x_n`
    Picard,
    /// `x_{n+1} = (1−λ_n)x_n + λ_n T x_n`
    Mann { lambda: SeqSpec },
    /// `x_{n+1} = (1−λ_n)x_n + λ_n T((1−s_n)x_n + s_n T x_n)`
    Ishikawa { lambda: SeqSpec, s: SeqSpec },
    /// `x_{n+1} = J_{γ_n} x_n`
    Ppa { gamma: SeqSpec },
    /// `x_{n+1} = (1−λ_n)x_n + λ_n Tⁿ x_n`
    MannAsym { lambda: SeqSpec },
    /// Mann step plus the error `scale·2^{−n}·e_1`.
    PerturbedMann { lambda: SeqSpec, scale: f64 },
}

/// A lazily extended sequence `(x_n)` with its computed prefix cached.
#[derive(Clone, Debug)]
pub struct Trajectory {
    map: Map,
    quad: Option<Quadratic>,
    step: Step,
    points: Vec<Point>,
}

impl Trajectory {
    pub fn new(map: Map, step: Step, x0: Point) -> Result<Self> {
        let quad = match (&step, &map) {
            (Step::Ppa { .. }, Map::Resolvent { quad, .. }) => Some(quad.clone()),
            (Step::Ppa { .. }, _) => return Err(Error::Config("the proximal point algorithm needs a prox operator".into())),
            _ => None,
        };
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::range("x0", "coordinates must be finite"));
        }
        Ok(Trajectory {
            map,
            quad,
            step,
            points: vec![x0],
        })
    }

    pub fn picard(map: Map, x0: Point) -> Result<Self> {
        Trajectory::new(map, Step::Picard, x0)
    }

    pub fn mann(map: Map, x0: Point, lambda: SeqSpec) -> Result<Self> {
        Trajectory::new(map, Step::Mann { lambda }, x0)
    }

    pub fn ishikawa(map: Map, x0: Point, lambda: SeqSpec, s: SeqSpec) -> Result<Self> {
        Trajectory::new(map, Step::Ishikawa { lambda, s }, x0)
    }

    pub fn ppa(quad: Quadratic, x0: Point, gamma: SeqSpec) -> Result<Self> {
        let d = x0.len();
        let map = Map::Resolvent {
            inv: DMatrix::identity(d, d),
            shift: Point::zeros(d),
            quad,
            gamma: 1.0,
        };
        let mut t = Trajectory::new(map, Step::Ppa { gamma }, x0)?;
        if let Map::Resolvent { quad, .. } = &t.map {
            t.map = Map::Resolvent {
                inv: (DMatrix::identity(d, d) + &quad.q)
                    .try_inverse()
                    .ok_or_else(|| Error::Singular("I + Q".into()))?,
                shift: quad.c.clone(),
                quad: quad.clone(),
                gamma: 1.0,
            };
        }
        Ok(t)
    }

    pub fn map(&self) -> &Map {
        &self.map
    }

    pub fn step(&self) -> &Step {
        &self.step
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn in_unit(v: f64, name: &str, n: usize) -> Result<f64> {
        if (0.0..=1.0).contains(&v) {
            Ok(v)
        } else {
            Err(Error::range(format!("{name}[{n}]"), format!("{v} outside [0, 1]")))
        }
    }

    fn next(&self, n: usize, x: &Point) -> Result<Point> {
        let t = &self.map;
        Ok(match &self.step {
            Step::Picard => t.apply(x),
            Step::Mann { lambda } => convex(x, &t.apply(x), Self::in_unit(lambda.at(n as u64), "lambda", n)?),
            Step::Ishikawa { lambda, s } => {
                let l = Self::in_unit(lambda.at(n as u64), "lambda", n)?;
                let s = Self::in_unit(s.at(n as u64), "s", n)?;
                let inner = convex(x, &t.apply(x), s);
                convex(x, &t.apply(&inner), l)
            }
            Step::Ppa { gamma } => {
                let g = gamma.at(n as u64);
                if !(g > 0.0 && g.is_finite()) {
                    return Err(Error::range(format!("gamma[{n}]"), format!("{g} must be > 0")));
                }
                self.quad.as_ref().expect("checked at construction").resolvent(g, x)?
            }
            Step::MannAsym { lambda } => convex(x, &t.apply_n(x, n as u64), Self::in_unit(lambda.at(n as u64), "lambda", n)?),
            Step::PerturbedMann { lambda, scale } => {
                let mut y = convex(x, &t.apply(x), Self::in_unit(lambda.at(n as u64), "lambda", n)?);
                y[0] += scale * 0.5f64.powi(n.min(2000) as i32);
                y
            }
        })
    }

    /// Extends the cache through index `n`.
    pub fn ensure(&mut self, n: usize) -> Result<()> {
        while self.points.len() <= n {
            let i = self.points.len() - 1;
            let nx = self.next(i, &self.points[i])?;
            if nx.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain(format!("iterate {} is not finite", i + 1)));
            }
            self.points.push(nx);
        }
        Ok(())
    }

    pub fn point(&mut self, n: usize) -> Result<&Point> {
        self.ensure(n)?;
        Ok(&self.points[n])
    }

    /// `x_0, …, x_n`.
    pub fn prefix(&mut self, n: usize) -> Result<&[Point]> {
        self.ensure(n)?;
        Ok(&self.points[..=n])
    }

    /// `u_n = (x_n − x_{n+1})/γ_n` of the proximal point algorithm.
    pub fn u(&mut self, n: usize) -> Result<Point> {
        let g = match &self.step {
            Step::Ppa { gamma } => gamma.at(n as u64),
            _ => return Err(Error::Config("u_n is defined for the proximal point algorithm only".into())),
        };
        self.ensure(n + 1)?;
        Ok((&self.points[n] - &self.points[n + 1]) / g)
    }

    /// `ε_n` of a perturbed scheme, zero otherwise.
    pub fn error_term(&self, n: u64) -> f64 {
        match &self.step {
            Step::PerturbedMann { scale, .. } => scale * 0.5f64.powi(n.min(2000) as i32),
            _ => 0.0,
        }
    }

    /// `Σ_{i=n}^{n+m−1} ε_i`.
    pub fn error_sum(&self, n: u64, m: u64) -> f64 {
        match &self.step {
            Step::PerturbedMann { scale, .. } => {
                scale * (0.5f64.powi(n.min(2000) as i32) - 0.5f64.powi((n + m).min(2000) as i32)) * 2.0
            }
            _ => 0.0,
        }
    }
}

// Residual families

/// The approximation families of the shipped schemes.
#[derive(Clone, Debug)]
pub enum Family {
    /// `residual(p, k) = ‖p − Tp‖`
    FixedPoint(Map),
    /// `residual(p, k) = max_{i≤k} ‖p − J_{γ_i} p‖`
    Ppa { quad: Quadratic, gamma: SeqSpec },
}

impl ApproximationFamily for Family {
    fn residual(&self, p: &Point, k: &Nat) -> f64 {
        match self {
            Family::FixedPoint(t) => t.residual(p),
            // ‖p − J_γ p‖ is nondecreasing in γ, so the extreme step sizes
            // up to index k decide the maximum.
            Family::Ppa { quad, gamma } => gamma
                .extreme_values_upto(k)
                .into_iter()
                .map(|g| quad.resolvent(g, p).map_or(f64::INFINITY, |j| (p - j).norm()))
                .fold(0.0, f64::max),
        }
    }
}

/// The family `AF_k` matching a trajectory's scheme.
pub fn residual_family(traj: &Trajectory) -> Family {
    match (traj.step(), traj.map()) {
        (Step::Ppa { gamma }, Map::Resolvent { quad, .. }) => Family::Ppa {
            quad: quad.clone(),
            gamma: gamma.clone(),
        },
        (_, map) => Family::FixedPoint(map.clone()),
    }
}

/// Writes `n,x_0..x_{d-1},residual_k0` rows for `n = 0..=steps`.
pub fn write_csv(traj: &mut Trajectory, steps: usize, family: &Family, k0: &Nat, path: &Path) -> Result<()> {
    traj.ensure(steps)?;
    let mut w = csv::Writer::from_path(path)?;
    let d = traj.dim();
    let mut header = vec!["n".to_string()];
    header.extend((0..d).map(|i| format!("x_{i}")));
    header.push("residual_k0".into());
    w.write_record(&header)?;
    for (n, p) in traj.prefix(steps)?.iter().enumerate() {
        let mut row = vec![n.to_string()];
        row.extend(p.iter().map(|v| v.to_string()));
        row.push(family.residual(p, k0).to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Whether `p` lies in `AF_k` of `family` within `tau`.
pub fn in_family(family: &Family, p: &Point, k: &Nat, tau: f64) -> bool {
    family.residual(p, k) <= inv_succ(k) + tau
}

/// Writes pretty JSON followed by a newline.
pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nat::nat;

    fn p1(v: f64) -> Point {
        point(&[v])
    }

    fn half() -> Map {
        Operator::Scale { a: 0.5, c: None }.compile(1).unwrap()
    }

    #[test]
    fn picard_examples() {
        let mut t = Trajectory::picard(half(), p1(1.0)).unwrap();
        assert_eq!(t.point(3).unwrap()[0], 0.125);
        let proj = Operator::ProjectBox { lo: vec![0.0], hi: vec![1.0] }.compile(1).unwrap();
        let mut t = Trajectory::picard(proj, p1(2.0)).unwrap();
        assert_eq!(t.prefix(3).unwrap().iter().map(|p| p[0]).collect::<Vec<_>>(), vec![2.0, 1.0, 1.0, 1.0]);
        let prox = Operator::Prox { q: vec![vec![1.0]], c: None, gamma: 1.0 }.compile(1).unwrap();
        let mut t = Trajectory::picard(prox, p1(1.0)).unwrap();
        for n in 0..20 {
            assert_eq!(t.point(n).unwrap()[0], 0.5f64.powi(n as i32));
        }
    }

    #[test]
    fn mann_examples() {
        let mut a = Trajectory::mann(half(), p1(1.0), SeqSpec::constant(1.0)).unwrap();
        let mut b = Trajectory::picard(half(), p1(1.0)).unwrap();
        assert_eq!(a.prefix(10).unwrap(), b.prefix(10).unwrap());
        let mut c = Trajectory::mann(half(), p1(1.0), SeqSpec::constant(0.0)).unwrap();
        assert!(c.prefix(10).unwrap().iter().all(|p| p[0] == 1.0));
        let neg = Operator::Reflection { scale: 1.0 }.compile(1).unwrap();
        let mut d = Trajectory::mann(neg, p1(1.0), SeqSpec::constant(0.5)).unwrap();
        assert_eq!(d.prefix(5).unwrap().iter().map(|p| p[0]).collect::<Vec<_>>(), vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let mut bad = Trajectory::mann(half(), p1(1.0), SeqSpec::constant(1.5)).unwrap();
        assert!(bad.point(1).is_err());
    }

    #[test]
    fn ishikawa_examples() {
        let mut t = Trajectory::ishikawa(half(), p1(1.0), SeqSpec::constant(0.5), SeqSpec::constant(0.5)).unwrap();
        assert_eq!(t.point(1).unwrap()[0], 0.6875);
        let mut a = Trajectory::ishikawa(half(), p1(1.0), SeqSpec::constant(0.3), SeqSpec::constant(0.0)).unwrap();
        let mut b = Trajectory::mann(half(), p1(1.0), SeqSpec::constant(0.3)).unwrap();
        assert_eq!(a.prefix(10).unwrap(), b.prefix(10).unwrap());
    }

    #[test]
    fn ppa_examples() {
        let q = Quadratic::new(DMatrix::identity(2, 2), Point::zeros(2)).unwrap();
        let mut t = Trajectory::ppa(q.clone(), point(&[1.0, 0.0]), SeqSpec::constant(1.0)).unwrap();
        for n in 0..10 {
            assert_eq!(t.point(n).unwrap()[0], 0.5f64.powi(n as i32));
            assert_eq!(t.point(n).unwrap()[1], 0.0);
            let u = t.u(n).unwrap();
            assert_eq!(u.norm(), 0.5f64.powi(n as i32 + 1));
        }
        let zero = Quadratic::new(DMatrix::zeros(2, 2), point(&[1.0, -1.0])).unwrap();
        let mut t = Trajectory::ppa(zero, point(&[0.0, 0.0]), SeqSpec::constant(0.5)).unwrap();
        assert_eq!(t.point(2).unwrap(), &point(&[-1.0, 1.0]));
        let fam = Family::Ppa { quad: q, gamma: SeqSpec::constant(1.0) };
        for k in [0, 5, 1000] {
            assert_eq!(fam.residual(&point(&[0.6, 0.8]), &nat(k)), 0.5);
        }
        assert!(Quadratic::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]), Point::zeros(2)).is_err());
    }

    #[test]
    fn fixed_point_family_membership() {
        let fam = Family::FixedPoint(half());
        let p = p1(0.1);
        assert!((fam.residual(&p, &nat(0)) - 0.05).abs() < 1e-15);
        assert!(in_family(&fam, &p, &nat(19), 0.0));
        assert!(!in_family(&fam, &p, &nat(20), 0.0));
        assert!(in_family(&fam, &p1(0.0), &nat(1 << 40), 0.0));
    }

    #[test]
    fn seq_ranges() {
        assert!(SeqSpec::constant(0.5).check_range("l", 0.25, true, 1.0, true).is_ok());
        assert!(SeqSpec::constant(0.25).check_range("l", 0.25, true, 1.0, true).is_err());
        let s = SeqSpec::AffineInv { a: 0.25, c: 0.5 };
        assert!(s.check_range("l", 0.25, true, 1.0, true).is_ok());
        assert!(s.check_range("l", 0.3, true, 1.0, true).is_err());
        let t = SeqSpec::Table { values: vec![0.9, 0.1], tail: 0.5 };
        assert_eq!(t.max_upto(&nat(0)), 0.9);
        assert_eq!(t.extreme_values_upto(&nat(5)), vec![0.9, 0.1, 0.5]);
        assert_eq!(s.max_upto(&nat(1000)), 0.75);
    }

    fn validate(op: &Operator, dom: &Domain, props: &[Property], dim: usize) -> std::result::Result<(), PropertyViolation> {
        let m = op.compile(dim).unwrap();
        validate_operator(op, &m, dom, props, dim, 2000, 7, 1e-9)
    }

    #[test]
    fn validators_accept_true_properties() {
        let prox = Operator::Prox { q: vec![vec![1.0, 0.0], vec![0.0, 1.0]], c: None, gamma: 1.0 };
        let props = [Property::Nonexpansive, Property::FirmlyNonexpansive { lambda: 0.5 }];
        assert!(validate(&prox, &Domain::ball(1.0), &props, 2).is_ok());

        let spc = Operator::SpcFromNonexpansive {
            inner: Box::new(Operator::ProjectBall { center: None, radius: 0.5 }),
            kappa: 0.25,
        };
        assert!(validate(&spc, &Domain::ball(1.0), &[Property::StrictPseudoContraction { kappa: 0.25 }], 2).is_ok());

        let jump = Operator::Table1d { knots: vec![[0.0, 0.0], [3.0, 0.0]], exact: vec![[3.0, 1.0]] };
        let dom = Domain::Box { lo: vec![0.0], hi: vec![3.0] };
        assert!(validate(&jump, &dom, &[Property::ConditionE { mu: 3.0 }], 1).is_ok());
        // The jump at 3 is not nonexpansive, and the validator sees it.
        assert!(validate(&jump, &dom, &[Property::Nonexpansive], 1).is_err());

        let asym = [Property::AsymptoticallyNonexpansive { k_seq: SeqSpec::constant(0.0) }];
        assert!(validate(&Operator::Scale { a: 0.5, c: None }, &Domain::ball(1.0), &asym, 1).is_ok());
    }

    #[test]
    fn validators_reject_false_properties() {
        let expand = Operator::Scale { a: 1.5, c: None };
        let r = validate(&expand, &Domain::ball(10.0), &[Property::Nonexpansive], 1);
        assert_eq!(r.unwrap_err().property, "nonexpansive");
        let escape = Operator::Scale { a: 1.0, c: Some(vec![5.0]) };
        assert_eq!(validate(&escape, &Domain::ball(1.0), &[], 1).unwrap_err().property, "self_map");
        let refl = Operator::Reflection { scale: 1.0 };
        assert!(validate(&refl, &Domain::ball(1.0), &[Property::FirmlyNonexpansive { lambda: 0.5 }], 1).is_err());
    }

    #[test]
    fn spc_construction_passes_its_validator_for_random_kappa() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let kappa: f64 = rng.random_range(0.0..0.95);
            let op = Operator::SpcFromNonexpansive {
                inner: Box::new(Operator::Affine {
                    a: vec![vec![0.0, -1.0], vec![1.0, 0.0]],
                    c: vec![0.0, 0.0],
                }),
                kappa,
            };
            let m = op.compile(2).unwrap();
            let dom = Domain::ball(1.0);
            let prop = Property::StrictPseudoContraction { kappa };
            for _ in 0..500 {
                let (x, y) = (dom.sample(2, &mut rng), dom.sample(2, &mut rng));
                assert!(prop.check_pair(&m, &x, &y, 1e-9).is_none());
            }
        }
    }

    #[test]
    fn perturbed_errors_sum_geometrically() {
        let t = Trajectory::new(half(), Step::PerturbedMann { lambda: SeqSpec::constant(0.5), scale: 1.0 }, p1(1.0)).unwrap();
        assert_eq!(t.error_term(3), 0.125);
        assert!((t.error_sum(1, 3) - (0.5 + 0.25 + 0.125)).abs() < 1e-15);
    }

    #[test]
    fn csv_export_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let fam = Family::FixedPoint(half());
        let mut bytes = Vec::new();
        for name in ["a.csv", "b.csv"] {
            let path = dir.path().join(name);
            let mut t = Trajectory::picard(half(), p1(1.0)).unwrap();
            write_csv(&mut t, 4, &fam, &nat(0), &path).unwrap();
            bytes.push(std::fs::read(&path).unwrap());
        }
        assert_eq!(bytes[0], bytes[1]);
        let text = String::from_utf8(bytes.pop().unwrap()).unwrap();
        let xs: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
        assert_eq!(xs, vec!["1", "0.5", "0.25", "0.125", "0.0625"]);
        assert!(text.starts_with("n,x_0,residual_k0\n"));
    }
}
