//! Generic rates of metastability for uniformly (G,H)-Fejér monotone
//! sequences, computed over exact naturals.
//!
//! Counter functions and metastability functionals are small combinator
//! terms ([`Counter`], [`Functional`]) so that the selfmajorizing
//! compositions `Ω` and `Ω̃` can be evaluated without closures.

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moduli::{majorant, ClosednessModuli, FejerModulus, GhModuli, LiminfBound, Modulus};
use crate::nat::{self, ceil_div, dec, monus, Budget, Nat};

/// Iterates beyond this count are not recorded in a certificate.
pub const ITERATE_LOG_LIMIT: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Theorem {
    Psi,
    PsiTilde,
    PsiHat,
    PsiPlus,
    Omega,
    OmegaTilde,
    Sigma,
    SigmaTilde,
    Theta,
    ThetaFne,
}

impl Theorem {
    pub fn as_str(self) -> &'static str {
        match self {
            Theorem::Psi => "psi",
            Theorem::PsiTilde => "psi_tilde",
            Theorem::PsiHat => "psi_hat",
            Theorem::PsiPlus => "psi_plus",
            Theorem::Omega => "omega",
            Theorem::OmegaTilde => "omega_tilde",
            Theorem::Sigma => "sigma",
            Theorem::SigmaTilde => "sigma_tilde",
            Theorem::Theta => "theta",
            Theorem::ThetaFne => "theta_fne",
        }
    }
}

/// A bound `N` with the intermediate values that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub theorem: Theorem,
    #[serde(with = "dec")]
    pub bound: Nat,
    #[serde(rename = "P", with = "dec::opt", default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Nat>,
    /// `Ψ_0(0), Ψ_0(1), …`; stops early once the recursion reaches a fixed
    /// point, after which every later iterate is equal.
    #[serde(with = "dec::vec", default)]
    pub iterates: Vec<Nat>,
    #[serde(with = "dec::opt", default, skip_serializing_if = "Option::is_none")]
    pub k0: Option<Nat>,
}

/// An approximate F-point bound `Φ`.
#[derive(Clone, Debug, PartialEq)]
pub enum ApfpBound {
    Modulus(Modulus),
    /// `Φ(k) = Φ⁺(k, 0)` for a metastable approximate F-point bound `Φ⁺`.
    AtZero(Box<Functional>),
}

impl ApfpBound {
    pub fn eval(&self, k: &Nat, bud: &Budget) -> Result<Nat> {
        match self {
            ApfpBound::Modulus(m) => m.eval(k, bud),
            ApfpBound::AtZero(f) => f.eval(k, &Counter::Zero, bud),
        }
    }

    fn is_monotone(&self) -> bool {
        match self {
            ApfpBound::Modulus(m) => m.is_monotone(),
            ApfpBound::AtZero(_) => true,
        }
    }
}

/// Everything a rate depends on besides `k` and `g`.
#[derive(Clone, Debug, PartialEq)]
pub struct RateModuli {
    pub phi: ApfpBound,
    pub chi: FejerModulus,
    pub gh: GhModuli,
    pub gamma: Modulus,
    pub closed: Option<ClosednessModuli>,
    pub xi: Option<Modulus>,
}

impl RateModuli {
    pub fn new(phi: Modulus, chi: FejerModulus, gh: GhModuli, gamma: Modulus) -> Self {
        RateModuli {
            phi: ApfpBound::Modulus(phi),
            chi,
            gh,
            gamma,
            closed: None,
            xi: None,
        }
    }

    pub fn with_closed(mut self, closed: ClosednessModuli) -> Self {
        self.closed = Some(closed);
        self
    }

    pub fn with_xi(mut self, xi: Modulus) -> Self {
        self.xi = Some(xi);
        self
    }

    /// `(χ^M, α_G^M, β_H^M, γ^M)`; `Φ` is monotone by assumption.
    pub fn majorized(&self, cap: &Nat) -> RateModuli {
        RateModuli {
            phi: self.phi.clone(),
            chi: self.chi.majorized(cap),
            gh: self.gh.majorized(cap),
            gamma: majorant(&self.gamma, cap),
            closed: self.closed.clone(),
            xi: self.xi.as_ref().map(|x| majorant(x, cap)),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateInputs {
    pub k: Nat,
    pub g: Modulus,
    pub moduli: RateModuli,
}

/// Counter functions `ℕ → ℕ` built from a base `g`.
#[derive(Clone, Copy, Debug)]
pub enum Counter<'a> {
    Zero,
    Base(&'a Modulus),
    /// `g*(n) = n + g^M(n)`
    Star(&'a Counter<'a>),
    /// `g̃_l(m) = g*(max{l, m})`
    Tilde { l: &'a Nat, inner: &'a Counter<'a> },
    /// `g_l(n) = g^M(n+l) + l`
    Shifted { l: &'a Nat, inner: &'a Counter<'a> },
    /// `h_{k,g,δ}(n) = g*(max{n, δ(k, g̃_n)})`
    H {
        k: &'a Nat,
        g: &'a Counter<'a>,
        delta: &'a Functional,
    },
}

impl Counter<'_> {
    pub fn eval(&self, n: &Nat, bud: &Budget) -> Result<Nat> {
        bud.tick()?;
        let v = match self {
            Counter::Zero => Nat::zero(),
            Counter::Base(m) => m.eval(n, bud)?,
            Counter::Star(c) => n + c.eval_majorant(n, bud)?,
            Counter::Tilde { l, inner } => {
                let a = (*l).max(n);
                a + inner.eval_majorant(a, bud)?
            }
            Counter::Shifted { l, inner } => inner.eval_majorant(&(n + *l), bud)? + *l,
            Counter::H { k, g, delta } => {
                let t = Counter::Tilde { l: n, inner: g };
                let d = delta.eval(k, &t, bud)?;
                let a = d.max(n.clone());
                let gm = g.eval_majorant(&a, bud)?;
                a + gm
            }
        };
        bud.check(v)
    }

    pub fn eval_majorant(&self, n: &Nat, bud: &Budget) -> Result<Nat> {
        match self {
            Counter::Base(m) => {
                bud.tick()?;
                m.eval_majorant(n, bud)
            }
            _ => self.eval(n, bud),
        }
    }

    pub fn is_monotone(&self) -> bool {
        match self {
            Counter::Base(m) => m.is_monotone(),
            _ => true,
        }
    }
}

/// Selfmajorizing metastability functionals `(k, h) ↦ ℕ`.
#[derive(Clone, Debug, PartialEq)]
pub enum Functional {
    Zero,
    Const(Nat),
    /// `(k, h) ↦ h(0)`
    ApplyAtZero,
    /// `(k, h) ↦ f(k)`
    OfK(Modulus),
    /// `Ψ⁺(k, h)` over the stored, already majorized moduli.
    PsiPlus(Box<RateModuli>),
    /// `(k, h) ↦` the `M(k)`-fold iterate at 0 of `n ↦ h(n) + n + 1`.
    IterateSucc(Modulus),
}

impl Functional {
    pub fn eval(&self, k: &Nat, h: &Counter<'_>, bud: &Budget) -> Result<Nat> {
        match self {
            Functional::Zero => Ok(Nat::zero()),
            Functional::Const(c) => Ok(c.clone()),
            Functional::ApplyAtZero => h.eval(&Nat::zero(), bud),
            Functional::OfK(m) => m.eval(k, bud),
            Functional::PsiPlus(m) => Ok(psi_core(k, h, m, bud)?.1),
            Functional::IterateSucc(m) => {
                let steps = nat::to_u64(&m.eval(k, bud)?, "iteration count")?;
                let mut x = Nat::zero();
                for _ in 0..steps {
                    let next = h.eval(&x, bud).map_err(|e| e.with_lower_bound(&x))? + &x + 1u32;
                    x = bud.check(next).map_err(|e| e.with_lower_bound(&x))?;
                }
                Ok(x)
            }
        }
    }
}

/// Iterates `x ↦ step(x)` from 0 for `p` rounds, stopping early at a fixed
/// point. On a cap error the last completed iterate becomes its lower bound.
pub(crate) fn iterate(p: &Nat, bud: &Budget, mut step: impl FnMut(&Nat) -> Result<Nat>) -> Result<(Vec<Nat>, Nat)> {
    let mut x = Nat::zero();
    let mut log = vec![x.clone()];
    let mut i = Nat::zero();
    while &i < p {
        let next = bud
            .tick()
            .and_then(|_| step(&x))
            .map_err(|e| e.with_lower_bound(&x))?;
        i += 1u32;
        if next == x {
            break;
        }
        if next < x {
            return Err(Error::Config(format!(
                "recursion decreased from {x} to {next}; some input is not monotone"
            )));
        }
        x = next;
        if log.len() < ITERATE_LOG_LIMIT {
            log.push(x.clone());
        }
    }
    Ok((log, x))
}

/// `χ^M_g(n, r) = max{χ(i, g(i), r) | i ≤ n}`.
fn chi_mg(chi: &FejerModulus, g: &Counter<'_>, n: &Nat, r: &Nat, bud: &Budget) -> Result<Nat> {
    if g.is_monotone() && chi.is_monotone() {
        return chi.eval(n, &g.eval(n, bud)?, r, bud);
    }
    if n > &nat::nat(bud.scan_cap) {
        return Err(Error::Domain(format!(
            "chi_g^M at {n} needs a scan beyond the cap {} for a non-monotone input",
            bud.scan_cap
        )));
    }
    let top = nat::to_u64(n, "scan")?;
    let mut best = Nat::zero();
    for i in 0..=top {
        let i = nat::nat(i);
        best = best.max(chi.eval(&i, &g.eval(&i, bud)?, r, bud)?);
    }
    Ok(best)
}

/// Core of `Ψ`: returns the certificate pieces `(P, bound, iterates)`.
fn psi_core(k: &Nat, g: &Counter<'_>, m: &RateModuli, bud: &Budget) -> Result<(Nat, Nat, Vec<Nat>)> {
    if !m.phi.is_monotone() {
        return Err(Error::Config("the approximate F-point bound phi must be monotone".into()));
    }
    let r = m.gh.beta_h.eval(&(k * 2u32 + 1u32), bud)? * 2u32 + 1u32;
    let p = m.gamma.eval(&m.gh.alpha_g.eval(&r, bud)?, bud)?;
    let (log, bound) = iterate(&p, bud, |x| m.phi.eval(&chi_mg(&m.chi, g, x, &r, bud)?, bud))?;
    Ok((p, bound, log))
}

/// `Ψ(k, g, Φ, χ, α_G, β_H, γ)`.
pub fn psi(input: &RateInputs, bud: &Budget) -> Result<Certificate> {
    let g = Counter::Base(&input.g);
    let (p, bound, iterates) = psi_core(&input.k, &g, &input.moduli, bud)?;
    Ok(Certificate {
        theorem: Theorem::Psi,
        bound,
        p: Some(p),
        iterates,
        k0: None,
    })
}

/// `k_0 = max{k, ⌈(ω_F(k) − 1)/2⌉}`.
pub fn k0(k: &Nat, closed: &ClosednessModuli, bud: &Budget) -> Result<Nat> {
    let w = closed.omega_f.eval(k, bud)?;
    Ok(k.clone().max(ceil_div(&monus(&w, &nat::nat(1)), &nat::nat(2))))
}

/// `Ψ̃`: `Ψ` at `k_0` with `χ_{k,δ_F} = max{δ_F(k), χ}`, so that every
/// index of the returned window also lies in `AF_k`.
pub fn psi_tilde(input: &RateInputs, bud: &Budget) -> Result<Certificate> {
    let closed = input
        .moduli
        .closed
        .as_ref()
        .ok_or_else(|| Error::Config("psi_tilde needs closedness moduli (delta_F, omega_F)".into()))?;
    let k = &input.k;
    let k0 = k0(k, closed, bud)?;
    let mut m = input.moduli.clone();
    m.chi = FejerModulus::MaxConst {
        c: closed.delta_f.eval(k, bud)?,
        inner: Box::new(m.chi),
    };
    let g = Counter::Base(&input.g);
    let (p, bound, iterates) = psi_core(&k0, &g, &m, bud)?;
    Ok(Certificate {
        theorem: Theorem::PsiTilde,
        bound,
        p: Some(p),
        iterates,
        k0: Some(k0),
    })
}

/// `Ψ̂` for quasi-Fejér monotone sequences with liminf bound `Φ̂` and Cauchy
/// modulus `ξ` of the error sum.
pub fn psi_hat(input: &RateInputs, phi_hat: &LiminfBound, bud: &Budget) -> Result<Certificate> {
    let m = &input.moduli;
    let xi = m
        .xi
        .as_ref()
        .ok_or_else(|| Error::Config("psi_hat needs a Cauchy modulus xi of the error sum".into()))?;
    if !phi_hat.is_monotone() {
        return Err(Error::Config("the liminf bound phi_hat must be monotone in both arguments".into()));
    }
    let k = &input.k;
    let r = m.gh.beta_h.eval(&(k * 2u32 + 1u32), bud)? * 4u32 + 3u32;
    let p = m.gamma.eval(&m.gh.alpha_g.eval(&r, bud)?, bud)? + 1u32;
    let start = xi.eval(&r, bud)?;
    let g = Counter::Base(&input.g);
    let (iterates, bound) = iterate(&p, bud, |x| phi_hat.eval(&chi_mg(&m.chi, &g, x, &r, bud)?, &start, bud))?;
    Ok(Certificate {
        theorem: Theorem::PsiHat,
        bound,
        p: Some(p),
        iterates,
        k0: None,
    })
}

/// `Ψ⁺(k, g) = Ψ(k, g, Φ, χ^M, α_G^M, β_H^M, γ^M)` as a functional.
pub fn psi_plus(moduli: &RateModuli, cap: &Nat) -> Functional {
    Functional::PsiPlus(Box::new(moduli.majorized(cap)))
}

/// `Ω_{k,g}(δ, θ) = max{δ(k, h_{k,g,θ}), θ(k, g̃_{δ(k, h_{k,g,θ})})}`.
pub fn omega(k: &Nat, g: &Modulus, delta: &Functional, theta: &Functional, bud: &Budget) -> Result<Nat> {
    let base = Counter::Base(g);
    let h = Counter::H {
        k,
        g: &base,
        delta: theta,
    };
    let d = delta.eval(k, &h, bud)?;
    let t = Counter::Tilde { l: &d, inner: &base };
    let th = theta.eval(k, &t, bud).map_err(|e| e.with_lower_bound(&d))?;
    Ok(d.max(th))
}

/// `Ω̃_{k,g}(δ, f) = δ(k, g_{f(k)}) + f(k)` with `f = (Φ⁺⁺)^M`.
pub fn omega_tilde(k: &Nat, g: &Modulus, delta: &Functional, phi_pp: &Modulus, bud: &Budget) -> Result<Nat> {
    let f = majorant(phi_pp, &nat::nat(bud.scan_cap));
    let kk = f.eval(k, bud)?;
    let base = Counter::Base(g);
    let shifted = Counter::Shifted { l: &kk, inner: &base };
    let d = delta.eval(k, &shifted, bud).map_err(|e| e.shift_lower_bound(&kk))?;
    bud.check(d + kk)
}

/// Convenience for certificates of `Ω`/`Ω̃` compositions.
pub fn composite_certificate(theorem: Theorem, bound: Nat) -> Certificate {
    Certificate {
        theorem,
        bound,
        p: None,
        iterates: Vec::new(),
        k0: None,
    }
}

/// Rendering of a bound for logs: exact below 10^30, otherwise scientific
/// notation truncated to four significant digits.
pub fn human(n: &Nat) -> String {
    let s = n.to_str_radix(10);
    if s.len() <= 30 {
        return s;
    }
    format!("{}.{}e{}", &s[..1], &s[1..4], s.len() - 1)
}
