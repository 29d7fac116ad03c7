//! Closed-form moduli `ℕ → ℕ`.
//!
//! A [`Modulus`] is an expression tree rather than a closure so that it can
//! be evaluated at arguments far beyond machine range and serialized
//! verbatim into scenario files.

use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nat::{self, ceil_log2, ceil_ratio, ceil_sqrt, dec, ratio_nat, ratio_of, Budget, Nat, Real};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModExpr {
    Const {
        #[serde(with = "dec")]
        c: Nat,
    },
    Identity,
    /// `a·n + b`
    Affine {
        #[serde(with = "dec")]
        a: Nat,
        #[serde(with = "dec")]
        b: Nat,
    },
    /// `Σ coeffs[i]·nⁱ`
    Polynomial {
        #[serde(with = "dec::vec")]
        coeffs: Vec<Nat>,
    },
    /// `⌈c·(n+1)^p⌉`
    CeilPow { c: Real, p: u32 },
    /// `⌈(num/den)·(n+1)^p⌉`, for constants derived exactly from real parameters.
    RatioPow {
        #[serde(with = "dec")]
        num: Nat,
        #[serde(with = "dec")]
        den: Nat,
        p: u32,
    },
    /// Explicit values for `n < values.len()`, then `tail(n)` if present.
    Table {
        #[serde(with = "dec::vec")]
        values: Vec<Nat>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tail: Option<Box<ModExpr>>,
    },
    Compose {
        outer: Box<ModExpr>,
        inner: Box<ModExpr>,
    },
    Max { terms: Vec<ModExpr> },
    Sum { terms: Vec<ModExpr> },
    Product { terms: Vec<ModExpr> },
    /// `left(n) ∸ right(n)`
    Monus {
        left: Box<ModExpr>,
        right: Box<ModExpr>,
    },
    /// `⌈c·inner(n)⌉`
    Scale { c: Real, inner: Box<ModExpr> },
    CeilSqrt,
    CeilLog2,
    /// II-modulus of a ball of radius `b` in ℝ^dim: `⌈2(k+1)√dim·b⌉^dim`.
    Ball { dim: u32, b: Real },
    /// II-modulus of the convex hull of a set with II-modulus `gamma`
    /// contained in a ball of radius `b`.
    ConvexHull { gamma: Box<ModExpr>, b: Real },
    /// `f^M(n) = max{f(i) | i ≤ n}`, scanned explicitly only up to `cap`.
    Majorant {
        inner: Box<ModExpr>,
        #[serde(with = "dec")]
        cap: Nat,
    },
}

impl ModExpr {
    pub fn constant(c: u64) -> Self {
        ModExpr::Const { c: nat::nat(c) }
    }

    pub fn affine(a: u64, b: u64) -> Self {
        ModExpr::Affine {
            a: nat::nat(a),
            b: nat::nat(b),
        }
    }

    /// `⌈q·(n+1)^p⌉` for a nonnegative rational `q`.
    pub fn ratio_pow(q: &num_rational::BigRational, p: u32) -> Self {
        ModExpr::RatioPow {
            num: q.numer().to_biguint().expect("nonnegative"),
            den: q.denom().to_biguint().expect("positive"),
            p,
        }
    }

    pub fn table(values: &[u64], tail: Option<ModExpr>) -> Self {
        ModExpr::Table {
            values: values.iter().map(|&v| nat::nat(v)).collect(),
            tail: tail.map(Box::new),
        }
    }

    pub fn compose(outer: ModExpr, inner: ModExpr) -> Self {
        ModExpr::Compose {
            outer: Box::new(outer),
            inner: Box::new(inner),
        }
    }

    fn validate(&self, path: &str) -> Result<()> {
        let real = |field: &str, v: Real, strict: bool| -> Result<()> {
            let ok = v.is_finite() && if strict { v > 0.0 } else { v >= 0.0 };
            if ok {
                Ok(())
            } else {
                let want = if strict { "> 0" } else { ">= 0" };
                Err(Error::range(format!("{path}/{field}"), format!("{v} must be finite and {want}")))
            }
        };
        match self {
            ModExpr::CeilPow { c, .. } => real("c", *c, false),
            ModExpr::Scale { c, inner } => {
                real("c", *c, false)?;
                inner.validate(&format!("{path}/inner"))
            }
            ModExpr::Ball { dim, b } => {
                if *dim == 0 {
                    return Err(Error::range(format!("{path}/dim"), "dimension must be at least 1"));
                }
                real("b", *b, true)
            }
            ModExpr::ConvexHull { gamma, b } => {
                real("b", *b, true)?;
                gamma.validate(&format!("{path}/gamma"))
            }
            ModExpr::RatioPow { den, .. } if den.is_zero() => {
                Err(Error::range(format!("{path}/den"), "denominator must be positive"))
            }
            ModExpr::Table { tail: Some(t), .. } => t.validate(&format!("{path}/tail")),
            ModExpr::Compose { outer, inner } => {
                outer.validate(&format!("{path}/outer"))?;
                inner.validate(&format!("{path}/inner"))
            }
            ModExpr::Monus { left, right } => {
                left.validate(&format!("{path}/left"))?;
                right.validate(&format!("{path}/right"))
            }
            ModExpr::Max { terms } | ModExpr::Sum { terms } | ModExpr::Product { terms } => terms
                .iter()
                .enumerate()
                .try_for_each(|(i, t)| t.validate(&format!("{path}/terms/{i}"))),
            ModExpr::Majorant { inner, .. } => inner.validate(&format!("{path}/inner")),
            _ => Ok(()),
        }
    }

    /// Monotonicity that follows from the shape of the expression alone.
    pub fn structurally_monotone(&self) -> bool {
        match self {
            ModExpr::Const { .. }
            | ModExpr::Identity
            | ModExpr::Affine { .. }
            | ModExpr::Polynomial { .. }
            | ModExpr::CeilPow { .. }
            | ModExpr::RatioPow { .. }
            | ModExpr::CeilSqrt
            | ModExpr::CeilLog2
            | ModExpr::Ball { .. }
            | ModExpr::Majorant { .. } => true,
            ModExpr::ConvexHull { gamma, .. } => gamma.structurally_monotone(),
            ModExpr::Table { values, tail } => {
                if values.windows(2).any(|w| w[0] > w[1]) {
                    return false;
                }
                match (tail, values.last()) {
                    (None, _) => true,
                    (Some(t), None) => t.structurally_monotone(),
                    (Some(t), Some(last)) => {
                        t.structurally_monotone()
                            && t.eval(&nat::nat(values.len() as u64), &Budget::default())
                                .is_ok_and(|v| &v >= last)
                    }
                }
            }
            ModExpr::Compose { outer, inner } => outer.structurally_monotone() && inner.structurally_monotone(),
            ModExpr::Max { terms } | ModExpr::Sum { terms } | ModExpr::Product { terms } => {
                terms.iter().all(ModExpr::structurally_monotone)
            }
            ModExpr::Monus { left, right } => {
                left.structurally_monotone() && matches!(**right, ModExpr::Const { .. })
            }
            ModExpr::Scale { inner, .. } => inner.structurally_monotone(),
        }
    }

    pub fn eval(&self, n: &Nat, bud: &Budget) -> Result<Nat> {
        let v = match self {
            ModExpr::Const { c } => c.clone(),
            ModExpr::Identity => n.clone(),
            ModExpr::Affine { a, b } => a * n + b,
            ModExpr::Polynomial { coeffs } => {
                let mut acc = Nat::zero();
                for c in coeffs.iter().rev() {
                    acc = bud.check(acc * n + c)?;
                }
                acc
            }
            ModExpr::CeilPow { c, p } => {
                let base = bud.pow(&(n + 1u32), &nat::nat(u64::from(*p)))?;
                ceil_ratio(&(ratio_of(*c)? * ratio_nat(&base)))?
            }
            ModExpr::RatioPow { num, den, p } => {
                let base = bud.pow(&(n + 1u32), &nat::nat(u64::from(*p)))?;
                ceil_ratio(&num_rational::BigRational::new((num * base).into(), den.clone().into()))?
            }
            ModExpr::Table { values, tail } => match n.to_usize().and_then(|i| values.get(i)) {
                Some(v) => v.clone(),
                None => match tail {
                    Some(t) => t.eval(n, bud)?,
                    None => {
                        return Err(Error::Domain(format!(
                            "table of length {} evaluated at {n} without a tail",
                            values.len()
                        )))
                    }
                },
            },
            ModExpr::Compose { outer, inner } => outer.eval(&inner.eval(n, bud)?, bud)?,
            ModExpr::Max { terms } => {
                let mut best = Nat::zero();
                for t in terms {
                    best = best.max(t.eval(n, bud)?);
                }
                best
            }
            ModExpr::Sum { terms } => {
                let mut acc = Nat::zero();
                for t in terms {
                    acc += t.eval(n, bud)?;
                }
                acc
            }
            ModExpr::Product { terms } => {
                let mut acc = Nat::one();
                for t in terms {
                    acc = bud.check(acc * t.eval(n, bud)?)?;
                }
                acc
            }
            ModExpr::Monus { left, right } => nat::monus(&left.eval(n, bud)?, &right.eval(n, bud)?),
            ModExpr::Scale { c, inner } => ceil_ratio(&(ratio_of(*c)? * ratio_nat(&inner.eval(n, bud)?)))?,
            ModExpr::CeilSqrt => ceil_sqrt(n),
            ModExpr::CeilLog2 => ceil_log2(n),
            ModExpr::Ball { dim, b } => ball_modulus(*dim, *b, n, bud)?,
            ModExpr::ConvexHull { gamma, b } => hull_modulus(gamma, *b, n, bud)?,
            ModExpr::Majorant { inner, cap } => majorant_eval(inner, n, cap, bud)?,
        };
        bud.check(v)
    }
}

/// `⌈2(k+1)√d·b⌉^d`, with the inner ceiling taken as `⌈√⌈4(k+1)²·d·b²⌉⌉`.
fn ball_modulus(dim: u32, b: Real, k: &Nat, bud: &Budget) -> Result<Nat> {
    let k1 = k + 1u32;
    let b = ratio_of(b)?;
    let sq = ratio_nat(&(Nat::from(4u32) * &k1 * &k1 * dim)) * &b * &b;
    let side = nat::ceil_sqrt_ratio(&sq)?;
    bud.pow(&side, &nat::nat(u64::from(dim)))
}

fn hull_modulus(gamma: &ModExpr, b: Real, k: &Nat, bud: &Budget) -> Result<Nat> {
    let g = gamma.eval(&(k * 4u32 + 3u32), bud)?;
    if g.is_zero() {
        return Err(Error::Domain(format!("convex hull needs gamma(4k+3) >= 1, got 0 at k = {k}")));
    }
    let n1 = g; // n + 1
    let k1 = k + 1u32;
    // m + 1 = ⌈2(k+1)(n+1)(b + 1/(4k+4))⌉
    let inner = ratio_of(b)? + num_rational::BigRational::new(1.into(), (&k1 * 4u32).into());
    let m1 = ceil_ratio(&(ratio_nat(&(Nat::from(2u32) * &k1 * &n1)) * inner))?;
    if m1.is_zero() {
        return Err(Error::Domain("convex hull grid size is zero".into()));
    }
    let side = ceil_sqrt(&(Nat::from(4u32) * &m1 * &m1 * &n1));
    bud.pow(&side, &n1)
}

fn majorant_eval(inner: &ModExpr, n: &Nat, cap: &Nat, bud: &Budget) -> Result<Nat> {
    if inner.structurally_monotone() {
        return inner.eval(n, bud);
    }
    if let ModExpr::Table { values, tail } = inner {
        if tail.as_ref().is_none_or(|t| t.structurally_monotone()) {
            return match n.to_usize() {
                Some(i) if i < values.len() => Ok(values[..=i].iter().max().cloned().unwrap_or_default()),
                // A monotone tail attains its maximum on [len, n] at n.
                _ => {
                    let head = values.iter().max().cloned().unwrap_or_default();
                    Ok(head.max(inner.eval(n, bud)?))
                }
            };
        }
    }
    if n > cap {
        return Err(Error::Domain(format!(
            "majorant of a non-monotone function requested at {n}, beyond its cap {cap}"
        )));
    }
    let top = nat::to_u64(n, "majorant scan length")?;
    let mut best = Nat::zero();
    for i in 0..=top {
        bud.tick()?;
        best = best.max(inner.eval(&nat::nat(i), bud)?);
    }
    Ok(best)
}

/// A modulus together with its monotonicity certificate.
///
/// A declared `monotone: true` that does not follow structurally is
/// spot-checked by sampling when the modulus is built or parsed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModulus", into = "RawModulus")]
pub struct Modulus {
    expr: ModExpr,
    monotone: bool,
}

#[derive(Serialize, Deserialize)]
struct RawModulus {
    #[serde(flatten)]
    expr: ModExpr,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    monotone: Option<bool>,
}

impl TryFrom<RawModulus> for Modulus {
    type Error = Error;

    fn try_from(raw: RawModulus) -> Result<Self> {
        Modulus::with_claim(raw.expr, raw.monotone)
    }
}

impl From<Modulus> for RawModulus {
    fn from(m: Modulus) -> Self {
        RawModulus {
            expr: m.expr,
            monotone: Some(m.monotone),
        }
    }
}

/// Arguments used to spot-check a declared monotonicity claim.
fn sample_points() -> impl Iterator<Item = u64> {
    (0..=256u64).chain((9..40).map(|e| 1u64 << e))
}

impl Modulus {
    /// Builds a modulus whose monotonicity is inferred from its shape.
    pub fn new(expr: ModExpr) -> Self {
        let monotone = expr.structurally_monotone();
        Modulus { expr, monotone }
    }

    /// Builds a modulus honouring an explicit monotonicity claim.
    pub fn with_claim(expr: ModExpr, claim: Option<bool>) -> Result<Self> {
        expr.validate("")?;
        let structural = expr.structurally_monotone();
        let monotone = match claim {
            None => structural,
            Some(false) => false,
            Some(true) if structural => true,
            Some(true) => {
                let bud = Budget::default();
                let mut prev: Option<Nat> = None;
                for i in sample_points() {
                    let v = match expr.eval(&nat::nat(i), &bud) {
                        Ok(v) => v,
                        // Sampling stops where the function stops being defined.
                        Err(Error::Domain(_)) | Err(Error::CapExceeded { .. }) => break,
                        Err(e) => return Err(e),
                    };
                    if prev.as_ref().is_some_and(|p| p > &v) {
                        return Err(Error::range(
                            "monotone",
                            format!("declared monotone but decreases before n = {i}"),
                        ));
                    }
                    prev = Some(v);
                }
                true
            }
        };
        Ok(Modulus { expr, monotone })
    }

    pub fn constant(c: u64) -> Self {
        Modulus::new(ModExpr::constant(c))
    }

    pub fn identity() -> Self {
        Modulus::new(ModExpr::Identity)
    }

    pub fn affine(a: u64, b: u64) -> Self {
        Modulus::new(ModExpr::affine(a, b))
    }

    pub fn affine_nat(a: Nat, b: Nat) -> Self {
        Modulus::new(ModExpr::Affine { a, b })
    }

    pub fn table(values: &[u64], tail: Option<ModExpr>) -> Self {
        Modulus::new(ModExpr::table(values, tail))
    }

    pub fn expr(&self) -> &ModExpr {
        &self.expr
    }

    pub fn is_monotone(&self) -> bool {
        self.monotone
    }

    pub fn eval(&self, n: &Nat, bud: &Budget) -> Result<Nat> {
        self.expr.eval(n, bud)
    }

    /// Evaluation at a machine-sized argument with a default budget.
    pub fn at(&self, n: u64) -> Result<Nat> {
        self.eval(&nat::nat(n), &Budget::default())
    }

    /// `f^M(n)`. Exact for monotone moduli and tables with monotone tails;
    /// otherwise an explicit scan limited by the budget's scan cap.
    pub fn eval_majorant(&self, n: &Nat, bud: &Budget) -> Result<Nat> {
        if self.monotone {
            return self.eval(n, bud);
        }
        majorant_eval(&self.expr, n, &nat::nat(bud.scan_cap), bud)
    }
}

/// `f^M`, returning `m` itself when it is already monotone.
pub fn majorant(m: &Modulus, cap: &Nat) -> Modulus {
    if m.monotone {
        return m.clone();
    }
    Modulus {
        expr: ModExpr::Majorant {
            inner: Box::new(m.expr.clone()),
            cap: cap.clone(),
        },
        monotone: true,
    }
}

/// A bound `Φ̂(k, n) = k_part(k) + n_part(n)` for the liminf property.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LiminfBound {
    pub k_part: Modulus,
    pub n_part: Modulus,
}

impl LiminfBound {
    pub fn eval(&self, k: &Nat, n: &Nat, bud: &Budget) -> Result<Nat> {
        bud.check(self.k_part.eval(k, bud)? + self.n_part.eval(n, bud)?)
    }

    pub fn is_monotone(&self) -> bool {
        self.k_part.is_monotone() && self.n_part.is_monotone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nat::nat;

    fn at(m: &Modulus, n: u64) -> u64 {
        m.at(n).unwrap().to_u64().unwrap()
    }

    #[test]
    fn majorant_of_monotone_is_identity() {
        let m = Modulus::affine(2, 1);
        assert_eq!(majorant(&m, &nat(10)), m);
    }

    #[test]
    fn majorant_of_tables() {
        let t = Modulus::table(&[3, 1, 5], None);
        assert!(!t.is_monotone());
        let m = majorant(&t, &nat(2));
        assert_eq!((0..3).map(|i| at(&m, i)).collect::<Vec<_>>(), vec![3, 3, 5]);
        let t = Modulus::table(&[0, 2, 1, 4], None);
        let m = majorant(&t, &nat(3));
        assert_eq!((0..4).map(|i| at(&m, i)).collect::<Vec<_>>(), vec![0, 2, 2, 4]);
        assert!(matches!(m.at(4), Err(Error::Domain(_))));
    }

    #[test]
    fn scanned_majorant_stops_at_cap() {
        let e = ModExpr::Monus {
            left: Box::new(ModExpr::constant(10)),
            right: Box::new(ModExpr::Identity),
        };
        let m = Modulus::new(e);
        assert!(!m.is_monotone());
        let mm = majorant(&m, &nat(20));
        assert_eq!(at(&mm, 15), 10);
        assert!(matches!(mm.at(21), Err(Error::Domain(_))));
    }

    #[test]
    fn table_without_tail_rejects_out_of_range() {
        let t = Modulus::table(&[1, 2], None);
        assert!(matches!(t.at(2), Err(Error::Domain(_))));
        let t = Modulus::table(&[1, 2], Some(ModExpr::affine(1, 0)));
        assert_eq!(at(&t, 7), 7);
        assert!(t.is_monotone());
    }

    #[test]
    fn closed_forms() {
        assert_eq!(at(&Modulus::new(ModExpr::CeilPow { c: 0.5, p: 2 }), 2), 5);
        assert_eq!(
            at(&Modulus::new(ModExpr::Polynomial { coeffs: vec![nat(1), nat(0), nat(3)] }), 2),
            13
        );
        let q = num_rational::BigRational::new(7.into(), 2.into());
        assert_eq!(at(&Modulus::new(ModExpr::ratio_pow(&q, 2)), 1), 14);
        assert_eq!(at(&Modulus::new(ModExpr::ratio_pow(&q, 0)), 5), 4);
        assert_eq!(at(&Modulus::new(ModExpr::Ball { dim: 1, b: 1.0 }), 0), 2);
        assert_eq!(at(&Modulus::new(ModExpr::Ball { dim: 2, b: 1.0 }), 0), 9);
        let hull = ModExpr::ConvexHull {
            gamma: Box::new(ModExpr::constant(1)),
            b: 1.0,
        };
        assert_eq!(at(&Modulus::new(hull), 0), 6);
    }

    #[test]
    fn declared_monotone_is_spot_checked() {
        let bad = ModExpr::table(&[2, 1], Some(ModExpr::affine(1, 0)));
        assert!(Modulus::with_claim(bad, Some(true)).is_err());
        let ok: Modulus = serde_json::from_str(r#"{"kind":"affine","a":2,"b":"1","monotone":true}"#).unwrap();
        assert_eq!(at(&ok, 3), 7);
    }

    #[test]
    fn json_round_trip() {
        let m = Modulus::new(ModExpr::Max {
            terms: vec![
                ModExpr::affine(4, 3),
                ModExpr::compose(ModExpr::Scale { c: 2.5, inner: Box::new(ModExpr::Identity) }, ModExpr::affine(4, 3)),
            ],
        });
        let s = serde_json::to_string(&m).unwrap();
        let back: Modulus = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn negative_reals_are_rejected() {
        let r: std::result::Result<Modulus, _> = serde_json::from_str(r#"{"kind":"ball","dim":2,"b":-1}"#);
        assert!(r.is_err());
    }
}
