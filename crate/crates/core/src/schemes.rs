//! Moduli and specialized rates for the concrete iterations: Picard for
//! (firmly) nonexpansive maps, Ishikawa, Mann for strict pseudo-contractions,
//! for condition-(E) maps and for asymptotically nonexpansive maps, and the
//! proximal point algorithm.

use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iterations::SeqSpec;
use crate::moduli::{
    majorant, uniform_closedness_from_continuity, ClosednessModuli, FejerModulus, GhModuli, GhPair,
    ModExpr, Modulus, MAX_K_SUM,
};
use crate::nat::{self, ceil_ratio, monus, ratio_nat, ratio_of, Budget, Nat, Real};
use crate::rates::{iterate, Certificate, Theorem};

/// Modulus of uniform convexity. Only the CAT(0) instance is supported:
/// `η(r, ε) = ε²/8`, `η̃(r, ε) = ε/8`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Eta {
    #[default]
    Cat0,
}

/// Numeric parameters of a scheme. Which ones are required depends on the
/// scheme; see the scenario loader.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Real>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Real>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<Real>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Real>,
    #[serde(default, rename = "L", skip_serializing_if = "Option::is_none")]
    pub l: Option<u64>,
    #[serde(default, rename = "N0", skip_serializing_if = "Option::is_none")]
    pub n0: Option<u64>,
    #[serde(default, rename = "K", skip_serializing_if = "Option::is_none")]
    pub k_sum: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Modulus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_seq: Option<SeqSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_seq: Option<SeqSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_seq: Option<SeqSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<Eta>,
}

fn positive(x: Real, field: &str) -> Result<BigRational> {
    if !(x.is_finite() && x > 0.0) {
        return Err(Error::range(field, format!("{x} must be > 0")));
    }
    ratio_of(x)
}

fn monotone(m: &Modulus, what: &str) -> Result<()> {
    if m.is_monotone() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} must be monotone")))
    }
}

fn ratio_modulus(q: &BigRational, p: u32) -> Modulus {
    Modulus::new(ModExpr::ratio_pow(q, p))
}

/// `f ∘ inner`, monotone when both are.
fn compose(f: &Modulus, inner: ModExpr) -> Result<Modulus> {
    Modulus::with_claim(ModExpr::compose(f.expr().clone(), inner), Some(f.is_monotone()))
}

/// `δ_F(k) = 2k+1`, `ω_F(k) = 4k+3`, valid for the fixed points of a
/// nonexpansive map and for the zeros of a maximal monotone operator.
pub fn standard_closedness() -> ClosednessModuli {
    ClosednessModuli {
        delta_f: Modulus::affine(2, 1),
        omega_f: Modulus::affine(4, 3),
    }
}

// Picard iteration of nonexpansive maps

/// `Σ`: `P = γ(4k+3)`, `Σ_0(n+1) = Φ((4k+4)·g^M(Σ_0(n)))`.
pub fn picard_ne_sigma(k: &Nat, g: &Modulus, phi: &Modulus, gamma: &Modulus, bud: &Budget) -> Result<Certificate> {
    monotone(phi, "phi")?;
    let p = gamma.eval(&(k * 4u32 + 3u32), bud)?;
    let c = k * 4u32 + 4u32;
    let (iterates, bound) = iterate(&p, bud, |x| phi.eval(&(&c * g.eval_majorant(x, bud)?), bud))?;
    Ok(Certificate {
        theorem: Theorem::Sigma,
        bound,
        p: Some(p),
        iterates,
        k0: None,
    })
}

/// `Σ̃`: `P = γ(8k+7)`, `Σ̃_0(n+1) = Φ(max{2k+1, (8k+8)·g^M(Σ̃_0(n))})`.
pub fn picard_ne_sigma_tilde(
    k: &Nat,
    g: &Modulus,
    phi: &Modulus,
    gamma: &Modulus,
    bud: &Budget,
) -> Result<Certificate> {
    monotone(phi, "phi")?;
    let p = gamma.eval(&(k * 8u32 + 7u32), bud)?;
    let floor = k * 2u32 + 1u32;
    let c = k * 8u32 + 8u32;
    let (iterates, bound) = iterate(&p, bud, |x| {
        phi.eval(&floor.clone().max(&c * g.eval_majorant(x, bud)?), bud)
    })?;
    Ok(Certificate {
        theorem: Theorem::SigmaTilde,
        bound,
        p: Some(p),
        iterates,
        k0: Some(k * 2u32 + 1u32),
    })
}

/// `Θ`: with `f = (Φ⁺⁺)^M` and `K = f(k)`,
/// `Θ_0(n+1) = f((g^M(Θ_0(n)+K)+K)(4k+4))`, result `Θ_0(γ^M(4k+3)) + K`.
pub fn picard_ne_theta(
    k: &Nat,
    g: &Modulus,
    phi_pp: &Modulus,
    gamma: &Modulus,
    bud: &Budget,
) -> Result<Certificate> {
    let cap = nat::nat(bud.scan_cap);
    let f = majorant(phi_pp, &cap);
    let kk = f.eval(k, bud)?;
    let p = majorant(gamma, &cap).eval(&(k * 4u32 + 3u32), bud)?;
    let c = k * 4u32 + 4u32;
    let (iterates, x) = iterate(&p, bud, |x| {
        f.eval(&((g.eval_majorant(&(x + &kk), bud)? + &kk) * &c), bud)
    })
    .map_err(|e| e.shift_lower_bound(&kk))?;
    Ok(Certificate {
        theorem: Theorem::Theta,
        bound: bud.check(x + &kk)?,
        p: Some(p),
        iterates,
        k0: None,
    })
}

// Picard iteration of firmly nonexpansive maps

fn check_open_unit(lambda: Real, field: &str) -> Result<BigRational> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::range(field, format!("{lambda} must lie in (0, 1)")));
    }
    ratio_of(lambda)
}

/// `c = ⌈8(b+1)²/(λ(1−λ))⌉`.
pub fn fne_constant(b: Real, lambda: Real) -> Result<Nat> {
    let b1 = positive(b, "b")? + BigRational::one();
    let l = check_open_unit(lambda, "lambda")?;
    let denom = &l * (BigRational::one() - &l);
    ceil_ratio(&(BigRational::from_integer(8.into()) * &b1 * &b1 / denom))
}

/// Rate of asymptotic regularity `Φ⁺⁺(k) = c(k+1)²` of the Picard iteration
/// of a λ-firmly nonexpansive map.
pub fn fne_phi_pp(b: Real, lambda: Real) -> Result<Modulus> {
    let c = fne_constant(b, lambda)?;
    Ok(Modulus::new(ModExpr::Polynomial {
        coeffs: vec![c.clone(), &c * 2u32, c],
    }))
}

/// `Θ` specialized to `Φ⁺⁺(j) = c(j+1)²`:
/// `Θ_0(n+1) = c((g^M(Θ_0(n)+K)+K)(4k+4) + 1)²` with `K = c(k+1)²`, result
/// `Θ_0(γ^M(4k+3)) + K`.
pub fn theta_fne(k: &Nat, g: &Modulus, gamma: &Modulus, b: Real, lambda: Real, bud: &Budget) -> Result<Certificate> {
    let c = fne_constant(b, lambda)?;
    let k1 = k + 1u32;
    let kk = bud.check(&c * &k1 * &k1)?;
    let p = majorant(gamma, &nat::nat(bud.scan_cap)).eval(&(k * 4u32 + 3u32), bud)?;
    let w = &k1 * 4u32;
    let (iterates, x) = iterate(&p, bud, |x| {
        let arg = (g.eval_majorant(&(x + &kk), bud)? + &kk) * &w + 1u32;
        bud.check(&c * &arg * &arg)
    })
    .map_err(|e| e.shift_lower_bound(&kk))?;
    Ok(Certificate {
        theorem: Theorem::ThetaFne,
        bound: bud.check(x + &kk)?,
        p: Some(p),
        iterates,
        k0: None,
    })
}

// Ishikawa iteration

/// Rate of divergence `θ(n) = n⌈1/(λ(1−λ))⌉` of `Σ λ(1−λ)` for constant `λ`.
pub fn divergence_rate_constant(lambda: Real) -> Result<Modulus> {
    let l = check_open_unit(lambda, "lambda")?;
    let c = ceil_ratio(&(BigRational::one() / (&l * (BigRational::one() - &l))))?;
    Ok(Modulus::affine_nat(c, Nat::zero()))
}

/// `Φ(k) = θ(4(k+1)²L²⌈b(b+1)⌉ + N0)` as a modulus of `k`.
pub fn ishikawa_phi(b: Real, l: u64, n0: u64, theta: &Modulus) -> Result<Modulus> {
    let br = positive(b, "b")?;
    if l < 1 {
        return Err(Error::range("L", "must be >= 1"));
    }
    monotone(theta, "theta")?;
    let cb = ceil_ratio(&(&br * (&br + BigRational::one())))?;
    let c = Nat::from(4u32) * l * l * cb;
    let inner = ModExpr::Polynomial {
        coeffs: vec![&c + n0, &c * 2u32, c],
    };
    compose(theta, inner)
}

pub fn ishikawa_apfp_bound(k: &Nat, b: Real, l: u64, n0: u64, theta: &Modulus, bud: &Budget) -> Result<Nat> {
    ishikawa_phi(b, l, n0, theta)?.eval(k, bud)
}

/// `χ(n,m,r) = 2m(r+1)` for the Ishikawa iteration.
pub fn ishikawa_chi() -> FejerModulus {
    FejerModulus::window(2)
}

// Mann iteration of strict pseudo-contractions

#[derive(Clone, Debug, PartialEq)]
pub struct SpcModuli {
    pub chi: FejerModulus,
    pub gh: GhModuli,
    pub closed: ClosednessModuli,
    pub phi_pp: Modulus,
}

/// Moduli of the Mann iteration of a κ-strict pseudo-contraction with
/// `b ≥ diam C`. The rate `Φ⁺⁺` is `⌈b²/((λ−κ)(1−λ))⌉(k+1)²` for constant
/// `λ`, otherwise `θ(⌈b²⌉(k+1)²)`.
pub fn spc_moduli(b: Real, kappa: Real, lambda: Option<Real>, theta: Option<&Modulus>) -> Result<SpcModuli> {
    let br = positive(b, "b")?;
    if !(0.0..1.0).contains(&kappa) {
        return Err(Error::range("kappa", format!("{kappa} must lie in [0, 1)")));
    }
    let kr = ratio_of(kappa)?;
    let b2 = &br * &br;
    let phi_pp = match (lambda, theta) {
        (_, Some(theta)) => {
            monotone(theta, "theta")?;
            compose(theta, ModExpr::ratio_pow(&BigRational::from_integer(ceil_ratio(&b2)?.into()), 2))?
        }
        (Some(l), None) => {
            if !(l > kappa && l < 1.0) {
                return Err(Error::range("lambda", format!("{l} must lie in (kappa, 1)")));
            }
            let lr = ratio_of(l)?;
            let c = ceil_ratio(&(&b2 / ((&lr - &kr) * (BigRational::one() - &lr))))?;
            ratio_modulus(&BigRational::from_integer(c.into()), 2)
        }
        (None, None) => return Err(Error::Config("spc rate needs a constant lambda or theta".into())),
    };
    // T is L-Lipschitz with L = (1+κ)/(1−κ), so ω_T(k) = ⌈L⌉(k+1).
    let lip = ceil_ratio(&((BigRational::one() + &kr) / (BigRational::one() - &kr)))?;
    let omega_t = Modulus::affine_nat(lip.clone(), lip);
    Ok(SpcModuli {
        chi: FejerModulus::Spc { b },
        gh: GhModuli::of(GhPair::Square),
        closed: uniform_closedness_from_continuity(&omega_t),
        phi_pp,
    })
}

// Mann iteration of condition-(E) maps

/// `M(k) = ⌈3(b+1)/θ_k⌉ = ⌈384(k+1)²L²(b+1)²⌉` for the CAT(0) modulus
/// `η̃(r, ε) = ε/8`, where `θ_k = η̃(b+1, 1/(4(k+1)(b+1)))/(4(k+1)L²)`.
pub fn cond_e_iterations(l: u64, b: Real) -> Result<Modulus> {
    let b1 = positive(b, "b")? + BigRational::one();
    if l < 2 {
        return Err(Error::range("L", "must be >= 2"));
    }
    let q = BigRational::from_integer((384u64 * l * l).into()) * &b1 * &b1;
    Ok(ratio_modulus(&q, 2))
}

/// `Φ⁺(k, g) = h^{M(k)}(0)` with `h(n) = g(n) + n + 1`.
pub fn cond_e_phi_plus(k: &Nat, g: &Modulus, l: u64, b: Real, bud: &Budget) -> Result<Nat> {
    let m = nat::to_u64(&cond_e_iterations(l, b)?.eval(k, bud)?, "iteration count")?;
    let mut x = Nat::zero();
    for _ in 0..m {
        bud.tick().map_err(|e| e.with_lower_bound(&x))?;
        let next = g.eval(&x, bud).map_err(|e| e.with_lower_bound(&x))? + &x + 1u32;
        x = bud.check(next).map_err(|e| e.with_lower_bound(&x))?;
    }
    Ok(x)
}

/// `χ(n,m,r) = ⌈μm(1−1/L)(r+1)⌉`, `δ_F(k) = ⌈2μ(k+1)⌉ − 1`, `ω_F(k) = 4k+3`.
pub fn cond_e_moduli(mu: Real, l: u64) -> Result<(FejerModulus, ClosednessModuli)> {
    let chi = FejerModulus::CondE { mu, l };
    chi.validate()?;
    let two_mu = ratio_of(mu)? * BigRational::from_integer(2.into());
    let delta = ModExpr::Monus {
        left: Box::new(ModExpr::ratio_pow(&two_mu, 1)),
        right: Box::new(ModExpr::constant(1)),
    };
    Ok((
        chi,
        ClosednessModuli {
            delta_f: Modulus::new(delta),
            omega_f: Modulus::affine(4, 3),
        },
    ))
}

// Mann iteration of asymptotically nonexpansive maps

/// `χ(n,m,r) = m(n+m+K)⌈e^K⌉(r+1)`, `G = id`, `H(a) = a/e^K`, and the
/// closedness moduli `δ_F(k) = 2k+1`, `ω_F(k) = (1+K)(4k+4)`.
pub fn asymptotically_ne_moduli(k_sum: u64) -> Result<(FejerModulus, GhModuli, ClosednessModuli)> {
    if k_sum > MAX_K_SUM {
        return Err(Error::range("K", format!("must be <= {MAX_K_SUM}")));
    }
    let c = 4 * (1 + k_sum);
    Ok((
        FejerModulus::AsymNe { k_sum },
        GhModuli::of(GhPair::AsymNe { k_sum }),
        ClosednessModuli {
            delta_f: Modulus::affine(2, 1),
            omega_f: Modulus::affine(c, c),
        },
    ))
}

// Proximal point algorithm

/// Number of leading terms of a non-constant step-size sequence for which
/// the PPA bound uses the exact running maximum `m_k`.
pub const PPA_EXACT_PREFIX: u64 = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct PpaModuli {
    pub chi: FejerModulus,
    pub closed: ClosednessModuli,
    pub phi: Modulus,
}

/// `Δ(k, L, b) = ⌈b²(k+1)²⌉ + L − 1`, a modulus of liminf for `‖x_n − x_{n+1}‖`.
pub fn ppa_delta(k: &Nat, l: &Nat, b: Real, bud: &Budget) -> Result<Nat> {
    let b2 = positive(b, "b")?.pow(2);
    let a = ratio_modulus(&b2, 2).eval(k, bud)?;
    Ok(monus(&(a + l), &Nat::one()))
}

/// `β(k) = θ(⌈b²(k+1)²⌉)`, a rate of convergence of `u_n → 0`.
pub fn ppa_beta(k: &Nat, theta: &Modulus, b: Real, bud: &Budget) -> Result<Nat> {
    let b2 = positive(b, "b")?.pow(2);
    theta.eval(&ratio_modulus(&b2, 2).eval(k, bud)?, bud)
}

/// `M_k = ⌈(k+1)(2+m_k)⌉ − 1` with `m_k = max_{i≤k} γ_i`.
pub fn ppa_m(k: &Nat, gamma_seq: &SeqSpec) -> Result<Nat> {
    let mk = ratio_of(gamma_seq.max_upto(k))?;
    let v = ceil_ratio(&(ratio_nat(&(k + 1u32)) * (BigRational::from_integer(2.into()) + mk)))?;
    Ok(monus(&v, &Nat::one()))
}

/// `Φ(k) = θ(A)·A − 1` with `A = ⌈b²(M_k+1)²⌉`.
pub fn ppa_phi(k: &Nat, gamma_seq: &SeqSpec, theta: &Modulus, b: Real, bud: &Budget) -> Result<Nat> {
    let b2 = positive(b, "b")?.pow(2);
    let m1 = ppa_m(k, gamma_seq)? + 1u32;
    let a = ceil_ratio(&(b2 * ratio_nat(&(&m1 * &m1))))?;
    let v = bud.check(theta.eval(&a, bud)? * &a)?;
    Ok(monus(&v, &Nat::one()))
}

fn seq_sup(s: &SeqSpec) -> Real {
    match s {
        SeqSpec::Constant { value } => *value,
        SeqSpec::AffineInv { a, c } => a + c.max(0.0),
        SeqSpec::Table { values, tail } => values.iter().copied().fold(*tail, f64::max),
    }
}

/// `Φ` as a modulus of `k`. For a non-constant sequence the first
/// [`PPA_EXACT_PREFIX`] values use the exact `m_k`; beyond that `m_k` is
/// replaced by `sup γ_n`, which only enlarges the bound.
pub fn ppa_phi_modulus(gamma_seq: &SeqSpec, theta: &Modulus, b: Real) -> Result<Modulus> {
    monotone(theta, "theta")?;
    let b2 = positive(b, "b")?.pow(2);
    let sup = ratio_of(seq_sup(gamma_seq))?;
    let m_k = ModExpr::Monus {
        left: Box::new(ModExpr::ratio_pow(&(BigRational::from_integer(2.into()) + sup), 1)),
        right: Box::new(ModExpr::constant(1)),
    };
    let a = ModExpr::compose(ModExpr::ratio_pow(&b2, 2), m_k);
    let phi = ModExpr::Monus {
        left: Box::new(ModExpr::Product {
            terms: vec![ModExpr::compose(theta.expr().clone(), a.clone()), a],
        }),
        right: Box::new(ModExpr::constant(1)),
    };
    if gamma_seq.as_constant().is_some() {
        return Modulus::with_claim(phi, Some(true));
    }
    let bud = Budget::default();
    let values = (0..PPA_EXACT_PREFIX)
        .map(|k| ppa_phi(&nat::nat(k), gamma_seq, theta, b, &bud))
        .collect::<Result<Vec<_>>>()?;
    Modulus::with_claim(
        ModExpr::Table {
            values,
            tail: Some(Box::new(phi)),
        },
        Some(true),
    )
}

/// `χ(n,m,r) = max{n+m−1, m(r+1)}`, `δ_F(k) = 2k+1`, `ω_F(k) = 4k+3`, and
/// the approximate F-point bound `Φ`.
pub fn ppa_moduli(gamma_seq: &SeqSpec, theta: &Modulus, b: Real) -> Result<PpaModuli> {
    gamma_seq.check_range("gamma_seq", 0.0, true, f64::INFINITY, true)?;
    Ok(PpaModuli {
        chi: FejerModulus::Ppa,
        closed: standard_closedness(),
        phi: ppa_phi_modulus(gamma_seq, theta, b)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moduli::tb_modulus_interval;
    use crate::nat::nat;
    use crate::rates::{omega_tilde, psi, psi_plus, psi_tilde, RateInputs, RateModuli};

    fn b() -> Budget {
        Budget::default()
    }

    #[test]
    fn sigma_examples() {
        let c = picard_ne_sigma(&nat(0), &Modulus::affine(1, 1), &Modulus::identity(), &tb_modulus_interval(), &b())
            .unwrap();
        assert_eq!(c.p, Some(nat(4)));
        assert_eq!(c.iterates, vec![nat(0), nat(4), nat(20), nat(84), nat(340)]);
        assert_eq!(c.bound, nat(340));
        let phi = Modulus::affine(1, 7);
        let c = picard_ne_sigma(&nat(2), &Modulus::constant(0), &phi, &tb_modulus_interval(), &b()).unwrap();
        assert_eq!(c.bound, nat(7));
    }

    #[test]
    fn sigma_tilde_examples() {
        let c =
            picard_ne_sigma_tilde(&nat(0), &Modulus::constant(0), &Modulus::identity(), &tb_modulus_interval(), &b())
                .unwrap();
        assert_eq!(c.bound, nat(1));
        let c =
            picard_ne_sigma_tilde(&nat(0), &Modulus::affine(1, 1), &Modulus::identity(), &tb_modulus_interval(), &b())
                .unwrap();
        assert_eq!(c.p, Some(nat(8)));
        assert_eq!(&c.iterates[..4], &[nat(0), nat(8), nat(72), nat(584)]);
        assert_eq!(c.iterates.len(), 9);
    }

    #[test]
    fn theta_examples() {
        let t = |g: Modulus| {
            picard_ne_theta(&nat(0), &g, &Modulus::identity(), &tb_modulus_interval(), &b())
                .unwrap()
                .bound
        };
        assert_eq!(t(Modulus::constant(0)), nat(0));
        assert_eq!(t(Modulus::constant(1)), nat(4));
    }

    #[test]
    fn fne_constants() {
        assert_eq!(fne_constant(1.0, 0.5).unwrap(), nat(128));
        assert_eq!(fne_phi_pp(1.0, 0.5).unwrap().at(1).unwrap(), nat(512));
        let c = theta_fne(&nat(0), &Modulus::constant(0), &tb_modulus_interval(), 1.0, 0.5, &b()).unwrap();
        assert_eq!(c.iterates[1], nat(128 * 513 * 513));
        assert!(fne_constant(1.0, 1.0).is_err());
    }

    #[test]
    fn cross_path_equalities() {
        let gamma = tb_modulus_interval();
        let closed = ClosednessModuli {
            delta_f: Modulus::affine(2, 1),
            omega_f: Modulus::affine(4, 3),
        };
        for k in 0..3 {
            for g in [Modulus::constant(0), Modulus::constant(2), Modulus::affine(1, 1)] {
                for phi in [Modulus::identity(), Modulus::affine(2, 3)] {
                    let m = RateModuli::new(phi.clone(), FejerModulus::window(1), GhModuli::identity(), gamma.clone());
                    let input = RateInputs { k: nat(k), g: g.clone(), moduli: m.clone() };
                    let s = picard_ne_sigma(&nat(k), &g, &phi, &gamma, &b()).unwrap();
                    assert_eq!(s.bound, psi(&input, &b()).unwrap().bound);
                    let input = RateInputs { moduli: m.with_closed(closed.clone()), ..input };
                    let st = picard_ne_sigma_tilde(&nat(k), &g, &phi, &gamma, &b()).unwrap();
                    assert_eq!(st.bound, psi_tilde(&input, &b()).unwrap().bound);
                }
                let pp = Modulus::affine(1, 1);
                let th = picard_ne_theta(&nat(k), &g, &pp, &gamma, &b()).unwrap();
                let m = RateModuli::new(pp.clone(), FejerModulus::window(1), GhModuli::identity(), gamma.clone());
                let via = omega_tilde(&nat(k), &g, &psi_plus(&m, &nat(1000)), &pp, &b()).unwrap();
                assert_eq!(th.bound, via);
            }
        }
        let g = Modulus::constant(0);
        let fne = theta_fne(&nat(0), &g, &gamma, 1.0, 0.5, &b()).unwrap();
        let pp = fne_phi_pp(1.0, 0.5).unwrap();
        assert_eq!(fne.bound, picard_ne_theta(&nat(0), &g, &pp, &gamma, &b()).unwrap().bound);
    }

    #[test]
    fn ishikawa_values() {
        assert_eq!(ishikawa_apfp_bound(&nat(0), 1.0, 1, 0, &Modulus::identity(), &b()).unwrap(), nat(8));
        let theta = divergence_rate_constant(0.5).unwrap();
        assert_eq!(theta.at(3).unwrap(), nat(12));
        for k in 0..5u64 {
            let v = ishikawa_apfp_bound(&nat(k), 1.5, 2, 3, &theta, &b()).unwrap();
            // ⌈1.5·2.5⌉ = 4
            assert_eq!(v, nat(4 * (4 * (k + 1) * (k + 1) * 4 * 4 + 3)));
        }
        let chi = ishikawa_chi().eval(&nat(1), &nat(2), &nat(3), &b()).unwrap();
        assert_eq!(chi, nat(16));
    }

    #[test]
    fn spc_values() {
        let m = spc_moduli(1.0, 0.0, Some(0.5), None).unwrap();
        assert_eq!(m.chi.eval(&nat(0), &nat(1), &nat(0), &b()).unwrap(), nat(6));
        assert_eq!(m.phi_pp.at(0).unwrap(), nat(4));
        assert_eq!(m.gh.alpha_g.at(4).unwrap(), nat(2));
        let m = spc_moduli(2.0, 0.25, Some(0.5), None).unwrap();
        assert_eq!(m.phi_pp.at(0).unwrap(), nat(32));
        assert_eq!(m.phi_pp.at(2).unwrap(), nat(288));
        // L = 5/3, ⌈L⌉ = 2, so ω_F(0) = max{3, 2·4} = 8.
        assert_eq!(m.closed.omega_f.at(0).unwrap(), nat(8));
        assert!(spc_moduli(1.0, 0.5, Some(0.4), None).is_err());
        let general = spc_moduli(1.5, 0.25, None, Some(&Modulus::affine(3, 0))).unwrap();
        assert_eq!(general.phi_pp.at(0).unwrap(), nat(9));
    }

    #[test]
    fn cond_e_values() {
        assert_eq!(cond_e_iterations(2, 1.0).unwrap().at(0).unwrap(), nat(6144));
        assert_eq!(cond_e_phi_plus(&nat(0), &Modulus::constant(0), 2, 1.0, &b()).unwrap(), nat(6144));
        // h(n) = 2n + 1 doubles: h^M(0) = 2^M − 1.
        let tiny = Budget::new(1_000_000, 256);
        match cond_e_phi_plus(&nat(0), &Modulus::identity(), 2, 1.0, &tiny) {
            Err(Error::CapExceeded { lower_bound: Some(lb), .. }) => assert!(lb >= nat(1 << 40)),
            other => panic!("expected a cap error, got {other:?}"),
        }
        let (chi, closed) = cond_e_moduli(3.0, 2).unwrap();
        assert_eq!(chi.eval(&nat(0), &nat(2), &nat(0), &b()).unwrap(), nat(3));
        assert_eq!(closed.delta_f.at(0).unwrap(), nat(5));
        assert_eq!(closed.delta_f.at(2).unwrap(), nat(17));
    }

    #[test]
    fn asymptotic_values() {
        let (chi, gh, closed) = asymptotically_ne_moduli(0).unwrap();
        assert_eq!(chi.eval(&nat(2), &nat(3), &nat(1), &b()).unwrap(), nat(30));
        assert_eq!(gh.beta_h.at(4).unwrap(), nat(5));
        assert_eq!(closed.omega_f.at(0).unwrap(), nat(4));
        let (_, gh, _) = asymptotically_ne_moduli(2).unwrap();
        assert_eq!(gh.beta_h.at(4).unwrap(), nat(40));
        assert!(asymptotically_ne_moduli(MAX_K_SUM + 1).is_err());
    }

    #[test]
    fn ppa_values() {
        let one = SeqSpec::constant(1.0);
        let id = Modulus::identity();
        assert_eq!(ppa_delta(&nat(1), &nat(0), 2.0, &b()).unwrap(), nat(15));
        assert_eq!(ppa_phi(&nat(0), &one, &id, 1.0, &b()).unwrap(), nat(80));
        let m = ppa_moduli(&one, &id, 1.0).unwrap();
        assert_eq!(m.phi.at(0).unwrap(), nat(80));
        assert_eq!(m.chi.eval(&nat(2), &nat(3), &nat(1), &b()).unwrap(), nat(6));
        for k in 0..=10u64 {
            let mk = ppa_m(&nat(k), &one).unwrap();
            let phi = m.phi.at(k).unwrap();
            assert_eq!(phi, ppa_phi(&nat(k), &one, &id, 1.0, &b()).unwrap());
            assert!(phi >= ppa_delta(&mk, &nat(0), 1.0, &b()).unwrap());
        }
        let varying = SeqSpec::Table {
            values: vec![0.5, 2.0, 1.0],
            tail: 1.0,
        };
        let m = ppa_phi_modulus(&varying, &id, 1.0).unwrap();
        assert!(m.is_monotone());
        // m_0 = 0.5: M_0 = ⌈2.5⌉ − 1 = 2, A = 9.
        assert_eq!(m.at(0).unwrap(), nat(80));
        for k in 0..100 {
            assert!(m.at(k + 1).unwrap() >= m.at(k).unwrap());
            assert!(m.at(k).unwrap() >= ppa_phi(&nat(k), &varying, &id, 1.0, &b()).unwrap());
        }
        assert!(ppa_moduli(&SeqSpec::constant(0.0), &id, 1.0).is_err());
    }
}
