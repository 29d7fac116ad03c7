//! Moduli of total boundedness, (G,H)-moduli, uniform-closedness moduli and
//! approximation families.

mod expr;
mod fejer;

pub use expr::{majorant, LiminfBound, ModExpr, Modulus};
pub use fejer::{ceil_exp, Arg, FejerModulus, MAX_K_SUM};

use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iterations::Point;
use crate::nat::{self, Budget, Nat, Real};

/// Default additive slack for float comparisons against exact thresholds.
pub const TAU: f64 = 1e-9;

/// `1/(k+1)` as a double; zero once `k` leaves the double range.
pub fn inv_succ(k: &Nat) -> f64 {
    match k.to_f64() {
        Some(v) if v.is_finite() => 1.0 / (v + 1.0),
        _ => 0.0,
    }
}

/// A nested family `AF_k` given by a residual: `p ∈ AF_k ⇔ residual(p,k) ≤ 1/(k+1)`.
pub trait ApproximationFamily {
    fn residual(&self, p: &Point, k: &Nat) -> f64;

    fn contains(&self, p: &Point, k: &Nat, tau: f64) -> bool {
        self.residual(p, k) <= inv_succ(k) + tau
    }
}

/// The transformation pair of (G,H)-Fejér monotonicity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "pair", rename_all = "snake_case")]
pub enum GhPair {
    Identity,
    /// `G(a) = H(a) = a²`
    Square,
    /// `G(a) = a`, `H(a) = a/e^K`
    AsymNe { k_sum: u64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct GhModuli {
    pub pair: GhPair,
    pub alpha_g: Modulus,
    pub beta_h: Modulus,
}

impl GhModuli {
    pub fn of(pair: GhPair) -> Self {
        let (alpha_g, beta_h) = match pair {
            GhPair::Identity => (Modulus::identity(), Modulus::identity()),
            GhPair::Square => (
                Modulus::new(ModExpr::CeilSqrt),
                // (k+1)² − 1; `k²` alone does not give `a ≤ 1/(k+1)` from
                // `a² ≤ 1/(β_H(k)+1)`.
                Modulus::new(ModExpr::Polynomial {
                    coeffs: vec![Nat::zero(), nat::nat(2), nat::nat(1)],
                }),
            ),
            GhPair::AsymNe { k_sum } => {
                let c = ceil_exp(k_sum);
                (Modulus::identity(), Modulus::affine_nat(c.clone(), c))
            }
        };
        GhModuli { pair, alpha_g, beta_h }
    }

    pub fn identity() -> Self {
        GhModuli::of(GhPair::Identity)
    }

    pub fn g(&self, a: f64) -> f64 {
        match self.pair {
            GhPair::Square => a * a,
            _ => a,
        }
    }

    pub fn h(&self, a: f64) -> f64 {
        match self.pair {
            GhPair::Identity => a,
            GhPair::Square => a * a,
            GhPair::AsymNe { k_sum } => a / (k_sum as f64).exp(),
        }
    }

    /// Majorized copy, used by the selfmajorizing form of the rates.
    pub fn majorized(&self, cap: &Nat) -> Self {
        GhModuli {
            pair: self.pair,
            alpha_g: majorant(&self.alpha_g, cap),
            beta_h: majorant(&self.beta_h, cap),
        }
    }

    /// Checks `a ≤ 1/(α_G(k)+1) → G(a) ≤ 1/(k+1)` and
    /// `H(a) ≤ 1/(β_H(k)+1) → a ≤ 1/(k+1)` on `grid` values of `a ∈ [0, 2b]`
    /// for every `k ≤ k_max`. Returns the first failing `(k, a)`.
    pub fn check_contracts(&self, b: f64, k_max: u64, grid: usize, tau: f64) -> Result<Option<(u64, f64)>> {
        let bud = Budget::default();
        for k in 0..=k_max {
            let kk = nat::nat(k);
            let ia = inv_succ(&self.alpha_g.eval(&kk, &bud)?);
            let ib = inv_succ(&self.beta_h.eval(&kk, &bud)?);
            let ik = inv_succ(&kk);
            for i in 0..=grid {
                let a = 2.0 * b * i as f64 / grid as f64;
                let alpha_ok = a > ia || self.g(a) <= ik + tau;
                let beta_ok = self.h(a) > ib || a <= ik + tau;
                if !(alpha_ok && beta_ok) {
                    return Ok(Some((k, a)));
                }
            }
        }
        Ok(None)
    }
}

/// Moduli `(δ_F, ω_F)` of uniform closedness.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClosednessModuli {
    pub delta_f: Modulus,
    pub omega_f: Modulus,
}

/// `δ_F(k) = 2k+1`, `ω_F(k) = max{4k+3, ω_T(4k+3)}` for the fixed-point set
/// of a uniformly continuous `T` with modulus `ω_T`.
pub fn uniform_closedness_from_continuity(omega_t: &Modulus) -> ClosednessModuli {
    let omega = ModExpr::Max {
        terms: vec![
            ModExpr::affine(4, 3),
            ModExpr::compose(omega_t.expr().clone(), ModExpr::affine(4, 3)),
        ],
    };
    ClosednessModuli {
        delta_f: Modulus::affine(2, 1),
        omega_f: Modulus::with_claim(omega, omega_t.is_monotone().then_some(true))
            .unwrap_or_else(|_| Modulus::new(ModExpr::affine(4, 3))),
    }
}

/// I-modulus to II-modulus: `γ(k) = α(2k+1) + 1`.
pub fn modulus_i_to_ii(alpha: &Modulus) -> Modulus {
    let e = ModExpr::Sum {
        terms: vec![
            ModExpr::compose(alpha.expr().clone(), ModExpr::affine(2, 1)),
            ModExpr::constant(1),
        ],
    };
    Modulus::with_claim(e, Some(alpha.is_monotone())).expect("composition of valid moduli")
}

/// II-modulus to I-modulus: `α(k) = γ(k) ∸ 1`. Rejects `γ` that vanish on
/// the sampled range `k ≤ 100`.
pub fn modulus_ii_to_i(gamma: &Modulus) -> Result<Modulus> {
    let bud = Budget::default();
    for k in 0..=100u64 {
        match gamma.eval(&nat::nat(k), &bud) {
            Ok(v) if v.is_zero() => {
                return Err(Error::Domain(format!("II-modulus must be at least 1, gamma({k}) = 0")))
            }
            Ok(_) | Err(Error::CapExceeded { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    let e = ModExpr::Monus {
        left: Box::new(gamma.expr().clone()),
        right: Box::new(ModExpr::constant(1)),
    };
    Modulus::with_claim(e, Some(gamma.is_monotone()))
}

/// `γ(k) = k+1` for the unit interval.
pub fn tb_modulus_interval() -> Modulus {
    Modulus::affine(1, 1)
}

/// `γ(k) = ⌈2(k+1)√n·b⌉^n` for the ball of radius `b` in ℝⁿ.
pub fn tb_modulus_ball(n: u32, b: Real) -> Result<Modulus> {
    Modulus::with_claim(ModExpr::Ball { dim: n, b }, None)
}

/// II-modulus of the convex hull of a set with II-modulus `gamma` inside a
/// ball of radius `b`.
pub fn tb_modulus_convex_hull(gamma: &Modulus, b: Real) -> Result<Modulus> {
    let e = ModExpr::ConvexHull {
        gamma: Box::new(gamma.expr().clone()),
        b,
    };
    Modulus::with_claim(e, Some(gamma.is_monotone()))
}

/// The closure of a set shares its II-modulus.
pub fn tb_modulus_closure(gamma: &Modulus) -> Modulus {
    gamma.clone()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiameterWitness {
    /// Least constructed index with `d(x_N, y_N) < N`.
    pub n: u64,
    pub distance: f64,
    /// The constructed indices `n_0, n_1, …` up to and including `N`.
    pub indices: Vec<u64>,
}

/// Runs the recursion `n_0 = 0`,
/// `n_{k+1} = ⌈max_{i,j≤k}{n_k, d(x_{n_i},y_{n_j}), d(x_{n_i},x_{n_j}), d(y_{n_i},y_{n_j})} + 3⌉`
/// and returns the first `n_k` with `d(x_{n_k}, y_{n_k}) < n_k`, which is
/// guaranteed to occur no later than `n_{γ(0)}`.
pub fn diameter_witness(
    mut x: impl FnMut(u64) -> Result<Point>,
    mut y: impl FnMut(u64) -> Result<Point>,
    gamma: &Modulus,
    cap: u64,
) -> Result<DiameterWitness> {
    let rounds = nat::to_u64(&gamma.at(0)?, "gamma(0)")?;
    let mut idx: Vec<u64> = vec![0];
    let mut xs: Vec<Point> = vec![x(0)?];
    let mut ys: Vec<Point> = vec![y(0)?];
    for k in 0..=rounds as usize {
        let d = (&xs[k] - &ys[k]).norm();
        if d < idx[k] as f64 {
            return Ok(DiameterWitness {
                n: idx[k],
                distance: d,
                indices: idx,
            });
        }
        if k as u64 == rounds {
            break;
        }
        let mut top = idx[k] as f64;
        for i in 0..=k {
            for j in 0..=k {
                top = top
                    .max((&xs[i] - &ys[j]).norm())
                    .max((&xs[i] - &xs[j]).norm())
                    .max((&ys[i] - &ys[j]).norm());
            }
        }
        let next = (top + 3.0).ceil();
        if !next.is_finite() || next > cap as f64 {
            return Err(Error::Domain(format!(
                "diameter recursion reached {next} beyond cap {cap}"
            )));
        }
        let next = next as u64;
        idx.push(next);
        xs.push(x(next)?);
        ys.push(y(next)?);
    }
    Err(Error::Domain(format!(
        "no index below n_gamma(0) = {} has d(x_N, y_N) < N; gamma is not a valid modulus here",
        idx.last().copied().unwrap_or(0)
    )))
}
