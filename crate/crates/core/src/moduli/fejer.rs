use num_traits::Zero;
use serde::{Deserialize, Serialize};

use super::expr::{majorant, ModExpr, Modulus};
use crate::error::{Error, Result};
use crate::nat::{self, ceil_ratio, dec, monus, ratio_nat, ratio_of, Budget, Nat, Real};

/// Which argument of `χ(n, m, r)` a unary family reads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arg {
    N,
    M,
    R,
}

/// A modulus `χ(n, m, r)` of uniform (G,H)-Fejér monotonicity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FejerModulus {
    /// `coef·m·(r+1)`; coef 1 for Picard and Mann, 2 for Ishikawa.
    Window {
        #[serde(with = "dec")]
        coef: Nat,
    },
    /// `n + m`
    SumNm,
    /// `m(2n+m+5)(r+1)⌈b⌉` for Mann iterates of a strict pseudo-contraction.
    Spc { b: Real },
    /// `⌈μ·m·(1−1/L)·(r+1)⌉` for maps satisfying condition (E_μ).
    CondE { mu: Real, l: u64 },
    /// `m(n+m+K)⌈e^K⌉(r+1)` for asymptotically nonexpansive maps.
    AsymNe { k_sum: u64 },
    /// `max{n+m−1, m(r+1)}` for the proximal point algorithm.
    Ppa,
    Const {
        #[serde(with = "dec")]
        c: Nat,
    },
    Unary { arg: Arg, f: Modulus },
    /// `max{c, inner(n,m,r)}`
    MaxConst {
        #[serde(with = "dec")]
        c: Nat,
        inner: Box<FejerModulus>,
    },
}

/// `⌈e^K⌉`. `e^K` is never an integer for `K ≥ 1`, and for the admissible
/// range of `K` the double-precision value is far enough from the next
/// integer that its ceiling is exact.
pub fn ceil_exp(k: u64) -> Nat {
    if k == 0 {
        return nat::nat(1);
    }
    nat::nat((k as f64).exp().ceil() as u64)
}

/// Largest `K` accepted for asymptotically nonexpansive schemes.
pub const MAX_K_SUM: u64 = 40;

impl FejerModulus {
    pub fn window(coef: u64) -> Self {
        FejerModulus::Window { coef: nat::nat(coef) }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            FejerModulus::Spc { b } if !(b.is_finite() && *b > 0.0) => Err(Error::range("chi/b", "must be > 0")),
            FejerModulus::CondE { mu, l } => {
                if !(mu.is_finite() && *mu >= 1.0) {
                    return Err(Error::range("chi/mu", "must be >= 1"));
                }
                if *l < 1 {
                    return Err(Error::range("chi/l", "must be >= 1"));
                }
                Ok(())
            }
            FejerModulus::AsymNe { k_sum } if *k_sum > MAX_K_SUM => {
                Err(Error::range("chi/k_sum", format!("must be <= {MAX_K_SUM}")))
            }
            FejerModulus::MaxConst { inner, .. } => inner.validate(),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, n: &Nat, m: &Nat, r: &Nat, bud: &Budget) -> Result<Nat> {
        let r1 = r + 1u32;
        let v = match self {
            FejerModulus::Window { coef } => coef * m * &r1,
            FejerModulus::SumNm => n + m,
            FejerModulus::Spc { b } => {
                let cb = ceil_ratio(&ratio_of(*b)?)?;
                m * (n * 2u32 + m + 5u32) * &r1 * cb
            }
            FejerModulus::CondE { mu, l } => {
                let frac = num_rational::BigRational::new(Nat::from(l - 1).into(), Nat::from(*l).into());
                ceil_ratio(&(ratio_of(*mu)? * frac * ratio_nat(&(m * &r1))))?
            }
            FejerModulus::AsymNe { k_sum } => m * (n + m + *k_sum) * ceil_exp(*k_sum) * &r1,
            FejerModulus::Ppa => monus(&(n + m), &nat::nat(1)).max(m * &r1),
            FejerModulus::Const { c } => c.clone(),
            FejerModulus::Unary { arg, f } => f.eval(
                match arg {
                    Arg::N => n,
                    Arg::M => m,
                    Arg::R => r,
                },
                bud,
            )?,
            FejerModulus::MaxConst { c, inner } => c.clone().max(inner.eval(n, m, r, bud)?),
        };
        bud.check(v)
    }

    /// Nondecreasing in each argument.
    pub fn is_monotone(&self) -> bool {
        match self {
            FejerModulus::Unary { f, .. } => f.is_monotone(),
            FejerModulus::MaxConst { inner, .. } => inner.is_monotone(),
            _ => true,
        }
    }

    /// `χ^M`. Built-in families are monotone already; unary families are
    /// replaced by the majorant of their underlying modulus.
    pub fn majorized(&self, cap: &Nat) -> FejerModulus {
        match self {
            FejerModulus::Unary { arg, f } => FejerModulus::Unary {
                arg: *arg,
                f: majorant(f, cap),
            },
            FejerModulus::MaxConst { c, inner } => FejerModulus::MaxConst {
                c: c.clone(),
                inner: Box::new(inner.majorized(cap)),
            },
            other => other.clone(),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, FejerModulus::Const { c } if c.is_zero())
    }
}

impl From<ModExpr> for FejerModulus {
    /// A modulus of `r` alone.
    fn from(e: ModExpr) -> Self {
        FejerModulus::Unary {
            arg: Arg::R,
            f: Modulus::new(e),
        }
    }
}
