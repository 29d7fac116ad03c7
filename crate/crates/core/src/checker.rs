//! Empirical checks of certificates and moduli against trajectories.
//!
//! Every check is falsification-oriented: a verdict of `verified` means no
//! counterexample was found within budget, never a proof.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iterations::{Family, Point, Trajectory};
use crate::moduli::{inv_succ, ApproximationFamily, ClosednessModuli, FejerModulus, GhModuli, Modulus};
use crate::nat::{self, dec, Budget, Nat};

/// Largest trajectory index any check will materialize.
pub const INDEX_LIMIT: u64 = 2_000_000;

/// Ranges for the `(n, m, r)` triples sampled by the Fejér check.
pub const FEJER_N_MAX: u64 = 40;
pub const FEJER_M_MAX: u64 = 10;
pub const FEJER_R_MAX: u64 = 5;

/// A metastability witness: every pair in `[N, N+g(N)]` is within `1/(k+1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    #[serde(rename = "N")]
    pub n: u64,
    pub window_end: u64,
    pub max_gap: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_window_residual: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Verified,
    /// No witness up to the search cap, and the bound lies beyond it.
    WitnessFoundBeyondCapNone,
    ModulusViolation,
    PropertyViolation,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Verified => 0,
            Status::WitnessFoundBeyondCapNone => 4,
            Status::ModulusViolation | Status::PropertyViolation => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Status::Verified => "verified",
            Status::WitnessFoundBeyondCapNone => "witness_found_beyond_cap_none",
            Status::ModulusViolation => "modulus_violation",
            Status::PropertyViolation => "property_violation",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub check: String,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub status: Status,
    #[serde(with = "dec::opt", default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<Nat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    pub trials: u64,
    pub violations: Vec<Violation>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub details: Vec<String>,
}

impl Verdict {
    pub fn new(status: Status) -> Self {
        Verdict {
            status,
            bound: None,
            witness: None,
            trials: 0,
            violations: Vec::new(),
            details: Vec::new(),
        }
    }

    pub fn verified() -> Self {
        Verdict::new(Status::Verified)
    }

    pub fn violation(status: Status, check: &str, detail: impl Into<String>) -> Self {
        let mut v = Verdict::new(status);
        v.violations.push(Violation {
            check: check.into(),
            detail: detail.into(),
        });
        v
    }

    pub fn is_verified(&self) -> bool {
        self.status == Status::Verified
    }

    /// Folds a sub-check into this verdict; the worse status wins.
    pub fn absorb(&mut self, other: Verdict, label: &str) {
        let silent = other.status != Status::Verified && other.violations.is_empty();
        self.status = self.status.max(other.status);
        self.trials += other.trials;
        self.violations.extend(other.violations);
        self.details.extend(other.details.into_iter().map(|d| format!("{label}: {d}")));
        if silent {
            self.details.push(format!("{label}: {}", other.status.as_str()));
        }
    }
}

fn index(n: &Nat, what: &str) -> Result<u64> {
    let v = nat::to_u64(n, what)?;
    if v > INDEX_LIMIT {
        return Err(Error::CapExceeded {
            what: format!("{what} {v} beyond the trajectory limit {INDEX_LIMIT}"),
            lower_bound: None,
        });
    }
    Ok(v)
}

fn dist(a: &Point, b: &Point) -> f64 {
    (a - b).norm()
}

/// Largest pairwise distance in `pts`, or `None` as soon as one exceeds `eps`.
fn window_gap(pts: &[Point], eps: f64) -> Option<f64> {
    let first = &pts[0];
    if pts.iter().any(|p| dist(first, p) > eps) {
        return None;
    }
    if pts[0].len() == 1 {
        let (lo, hi) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), p| (l.min(p[0]), h.max(p[0])));
        return (hi - lo <= eps).then_some(hi - lo);
    }
    let mut gap: f64 = 0.0;
    for (i, a) in pts.iter().enumerate() {
        for b in &pts[i + 1..] {
            let d = dist(a, b);
            if d > eps {
                return None;
            }
            gap = gap.max(d);
        }
    }
    Some(gap)
}

/// Lazily computed `residual(x_n, k)` for a fixed `k`.
struct Residuals<'a> {
    family: &'a Family,
    k: &'a Nat,
    values: Vec<f64>,
}

impl<'a> Residuals<'a> {
    fn new(family: &'a Family, k: &'a Nat) -> Self {
        Residuals {
            family,
            k,
            values: Vec::new(),
        }
    }

    fn max_over(&mut self, traj: &mut Trajectory, from: u64, to: u64) -> Result<f64> {
        let pts = traj.prefix(to as usize)?;
        while self.values.len() <= to as usize {
            let i = self.values.len();
            self.values.push(self.family.residual(&pts[i], self.k));
        }
        Ok(self.values[from as usize..=to as usize].iter().copied().fold(0.0, f64::max))
    }
}

/// Least `N ≤ limit` whose window `[N, N+g(N)]` has all pairwise distances
/// at most `1/(k+1) + τ` and, if `membership` is given, lies in `AF_k`.
pub fn find_witness(
    traj: &mut Trajectory,
    k: &Nat,
    g: &Modulus,
    limit: u64,
    membership: Option<&Family>,
    tau: f64,
    bud: &Budget,
) -> Result<Option<Witness>> {
    let eps = inv_succ(k) + tau;
    let mut res = membership.map(|f| Residuals::new(f, k));
    for n in 0..=limit {
        let end = index(&(g.eval(&nat::nat(n), bud)? + n), "window end")?;
        traj.ensure(end as usize)?;
        let Some(gap) = window_gap(&traj.prefix(end as usize)?[n as usize..], eps) else {
            continue;
        };
        let max_res = match res.as_mut() {
            Some(r) => {
                let m = r.max_over(traj, n, end)?;
                if m > eps {
                    continue;
                }
                Some(m)
            }
            None => None,
        };
        return Ok(Some(Witness {
            n,
            window_end: end,
            max_gap: gap,
            max_window_residual: max_res,
        }));
    }
    Ok(None)
}

/// Least `N ≤ limit` with `x_m ∈ AF_k` for every `m ∈ [N, N+g(N)]`.
pub fn find_regular_window(
    traj: &mut Trajectory,
    family: &Family,
    k: &Nat,
    g: &Modulus,
    limit: u64,
    tau: f64,
    bud: &Budget,
) -> Result<Option<Witness>> {
    let eps = inv_succ(k) + tau;
    let mut res = Residuals::new(family, k);
    for n in 0..=limit {
        let end = index(&(g.eval(&nat::nat(n), bud)? + n), "window end")?;
        let m = res.max_over(traj, n, end)?;
        if m <= eps {
            return Ok(Some(Witness {
                n,
                window_end: end,
                max_gap: f64::NAN,
                max_window_residual: Some(m),
            }));
        }
    }
    Ok(None)
}

/// A certified bound: exact, or only known from below when its evaluation
/// hit a cap.
#[derive(Clone, Debug, PartialEq)]
pub enum BoundValue {
    Exact(Nat),
    AtLeast(Nat),
}

impl BoundValue {
    pub fn value(&self) -> &Nat {
        match self {
            BoundValue::Exact(n) | BoundValue::AtLeast(n) => n,
        }
    }
}

/// Searches for a witness up to `min(bound, cap)`. A witness there is below
/// the bound a fortiori; none is a refutation only if the whole range up to
/// an exact bound was searched.
pub fn verify_certificate(
    traj: &mut Trajectory,
    k: &Nat,
    g: &Modulus,
    bound: &BoundValue,
    cap: u64,
    membership: Option<&Family>,
    tau: f64,
    bud: &Budget,
) -> Result<Verdict> {
    let b = bound.value();
    let limit = if b <= &nat::nat(cap) { nat::to_u64(b, "bound")? } else { cap };
    let w = find_witness(traj, k, g, limit, membership, tau, bud)?;
    let mut v = match (&w, bound) {
        (Some(_), _) => Verdict::verified(),
        (None, BoundValue::Exact(b)) if b <= &nat::nat(cap) => Verdict::violation(
            Status::ModulusViolation,
            "metastability",
            format!("no N <= {b} has a window of gap <= 1/(k+1)"),
        ),
        (None, _) => {
            let mut v = Verdict::new(Status::WitnessFoundBeyondCapNone);
            v.details.push(format!("no witness up to the search cap {cap}"));
            v
        }
    };
    if let BoundValue::AtLeast(lb) = bound {
        v.details.push(format!("bound exceeds the evaluation cap; it is at least {lb}"));
    }
    v.bound = Some(b.clone());
    v.witness = w;
    v.trials = 1;
    Ok(v)
}

/// Samples a point of `AF_k` near `center` by rejection, shrinking the
/// search radius on repeated misses.
pub fn sample_af(family: &Family, k: &Nat, center: &Point, rng: &mut impl Rng) -> Option<Point> {
    let target = inv_succ(k);
    for attempt in 0..48 {
        let radius = 2.0 * target * 0.5f64.powi(attempt / 4) * rng.random::<f64>();
        let dir = Point::from_fn(center.len(), |_, _| StandardNormal.sample(rng));
        let norm = dir.norm();
        let p = if norm > 0.0 { center + dir * (radius / norm) } else { center.clone() };
        if family.residual(&p, k) <= target {
            return Some(p);
        }
    }
    None
}

/// Samples `(n, m, r)` and `p ∈ AF_{χ(n,m,r)}` and checks
/// `H(d(x_{n+l}, p)) < G(d(x_n, p)) + 1/(r+1)` for all `l ≤ m`.
pub fn check_fejer_modulus(
    traj: &mut Trajectory,
    chi: &FejerModulus,
    gh: &GhModuli,
    family: &Family,
    center: &Point,
    trials: u64,
    seed: u64,
    tau: f64,
    bud: &Budget,
) -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts = traj.prefix((FEJER_N_MAX + FEJER_M_MAX) as usize)?.to_vec();
    let mut v = Verdict::verified();
    let mut misses = 0u64;
    for _ in 0..trials {
        let (n, m, r) = (
            rng.random_range(0..=FEJER_N_MAX),
            rng.random_range(0..=FEJER_M_MAX),
            rng.random_range(0..=FEJER_R_MAX),
        );
        let kk = chi.eval(&nat::nat(n), &nat::nat(m), &nat::nat(r), bud)?;
        let Some(p) = sample_af(family, &kk, center, &mut rng) else {
            misses += 1;
            continue;
        };
        v.trials += 1;
        let base = gh.g(dist(&pts[n as usize], &p)) + 1.0 / (r as f64 + 1.0) + tau;
        for l in 0..=m {
            let lhs = gh.h(dist(&pts[(n + l) as usize], &p));
            // Quasi-Fejér sequences may exceed the bound by the error sum.
            let rhs = base + traj.error_sum(n, l);
            if lhs >= rhs {
                v.status = Status::ModulusViolation;
                v.violations.push(Violation {
                    check: "fejer_modulus".into(),
                    detail: format!(
                        "n = {n}, m = {m}, r = {r}, l = {l}, chi = {kk}, p = {:?}: H(d(x_(n+l), p)) = {lhs} >= {rhs}",
                        p.as_slice()
                    ),
                });
                return Ok(v);
            }
        }
    }
    if v.trials == 0 {
        v.status = Status::WitnessFoundBeyondCapNone;
        v.details.push("the sampler never reached the required approximation sets".into());
    } else if misses > 0 {
        v.details.push(format!("{misses} samples missed their approximation set"));
    }
    Ok(v)
}

/// Samples `q ∈ AF_{δ_F(k)}` and `p` within `1/(ω_F(k)+1)` of `q` and checks
/// `p ∈ AF_k`.
pub fn check_uniform_closedness(
    family: &Family,
    closed: &ClosednessModuli,
    center: &Point,
    trials: u64,
    seed: u64,
    tau: f64,
    bud: &Budget,
) -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = Verdict::verified();
    for _ in 0..trials {
        let k = nat::nat(rng.random_range(0..=5u64));
        let d = closed.delta_f.eval(&k, bud)?;
        let w = closed.omega_f.eval(&k, bud)?;
        let Some(q) = sample_af(family, &d, center, &mut rng) else {
            continue;
        };
        v.trials += 1;
        let dir = Point::from_fn(center.len(), |_, _| StandardNormal.sample(&mut rng));
        let norm = dir.norm();
        let step = inv_succ(&w) * rng.random::<f64>();
        let p = if norm > 0.0 { &q + dir * (step / norm) } else { q.clone() };
        let r = family.residual(&p, &k);
        if r > inv_succ(&k) + tau {
            v.status = Status::ModulusViolation;
            v.violations.push(Violation {
                check: "uniform_closedness".into(),
                detail: format!("k = {k}, q = {:?}, p = {:?}: residual {r}", q.as_slice(), p.as_slice()),
            });
            return Ok(v);
        }
    }
    if v.trials == 0 {
        v.status = Status::WitnessFoundBeyondCapNone;
        v.details.push("the sampler never reached AF_delta".into());
    }
    Ok(v)
}

/// Rate form: `x_n ∈ AF_k` for every `n ∈ [rate, rate + window]`.
pub fn check_asymptotic_regularity(
    traj: &mut Trajectory,
    family: &Family,
    rate: &Nat,
    k: &Nat,
    window: u64,
    tau: f64,
) -> Result<Verdict> {
    let start = match index(rate, "rate") {
        Ok(s) => s,
        Err(e) if e.is_cap() => {
            let mut v = Verdict::new(Status::WitnessFoundBeyondCapNone);
            v.bound = Some(rate.clone());
            v.details.push(e.to_string());
            return Ok(v);
        }
        Err(e) => return Err(e),
    };
    let eps = inv_succ(k) + tau;
    let pts = traj.prefix((start + window) as usize)?;
    let mut v = Verdict::verified();
    v.bound = Some(rate.clone());
    for (i, p) in pts[start as usize..].iter().enumerate() {
        v.trials += 1;
        let r = family.residual(p, k);
        if r > eps {
            v.status = Status::ModulusViolation;
            v.violations.push(Violation {
                check: "asymptotic_regularity".into(),
                detail: format!("k = {k}, n = {}: residual {r} > 1/(k+1)", start + i as u64),
            });
            break;
        }
    }
    Ok(v)
}

/// Metastable form: some `N ≤ min(bound, cap)` has its whole window in `AF_k`.
pub fn check_metastable_regularity(
    traj: &mut Trajectory,
    family: &Family,
    bound: &BoundValue,
    k: &Nat,
    g: &Modulus,
    cap: u64,
    tau: f64,
    bud: &Budget,
) -> Result<Verdict> {
    let b = bound.value();
    let limit = if b <= &nat::nat(cap) { nat::to_u64(b, "bound")? } else { cap };
    let w = find_regular_window(traj, family, k, g, limit, tau, bud)?;
    let mut v = match (&w, bound) {
        (Some(_), _) => Verdict::verified(),
        (None, BoundValue::Exact(b)) if b <= &nat::nat(cap) => Verdict::violation(
            Status::ModulusViolation,
            "metastable_regularity",
            format!("no N <= {b} has its window inside AF_{k}"),
        ),
        (None, _) => Verdict::new(Status::WitnessFoundBeyondCapNone),
    };
    v.bound = Some(b.clone());
    v.witness = w;
    v.trials = 1;
    Ok(v)
}

/// `‖u_n‖ ≤ 1/(k+1)` for every `n ∈ [from, from + window]`.
pub fn check_u_rate(traj: &mut Trajectory, k: &Nat, from: &Nat, window: u64, tau: f64) -> Result<Verdict> {
    let start = index(from, "rate")?;
    let eps = inv_succ(k) + tau;
    let mut v = Verdict::verified();
    v.bound = Some(from.clone());
    for n in start..=start + window {
        v.trials += 1;
        let u = traj.u(n as usize)?.norm();
        if u > eps {
            v.status = Status::ModulusViolation;
            v.violations.push(Violation {
                check: "u_rate".into(),
                detail: format!("k = {k}, n = {n}: |u_n| = {u}"),
            });
            break;
        }
    }
    Ok(v)
}

/// Least `n ∈ [from, to]` with `‖x_n − x_{n+1}‖ ≤ 1/(k+1) + τ`.
pub fn find_small_step(traj: &mut Trajectory, k: &Nat, from: u64, to: &Nat, tau: f64) -> Result<Option<u64>> {
    let to = index(to, "liminf bound")?;
    let eps = inv_succ(k) + tau;
    traj.ensure(to as usize + 1)?;
    let pts = traj.prefix(to as usize + 1)?;
    Ok((from..=to).find(|&n| dist(&pts[n as usize], &pts[n as usize + 1]) <= eps))
}

/// Least `n ≤ limit` with `x_n ∈ AF_k`.
pub fn find_member(traj: &mut Trajectory, family: &Family, k: &Nat, limit: &Nat, tau: f64) -> Result<Option<u64>> {
    let limit = index(limit, "approximate F-point bound")?;
    let eps = inv_succ(k) + tau;
    for n in 0..=limit {
        if family.residual(traj.point(n as usize)?, k) <= eps {
            return Ok(Some(n));
        }
    }
    Ok(None)
}

/// The closest pair among `pts` as `(i, j, distance)`.
pub fn closest_pair(pts: &[Point]) -> Option<(usize, usize, f64)> {
    let mut best: Option<(usize, usize, f64)> = None;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let d = dist(&pts[i], &pts[j]);
            if best.is_none_or(|(_, _, b)| d < b) {
                best = Some((i, j, d));
            }
        }
    }
    best
}

/// Whether some pair among `pts` lies within `1/(k+1) + τ`.
pub fn pigeonhole_holds(pts: &[Point], k: &Nat, tau: f64) -> bool {
    let eps = inv_succ(k) + tau;
    let first_hit = |i: usize| pts[i + 1..].iter().any(|q| dist(&pts[i], q) <= eps);
    (0..pts.len().saturating_sub(1)).any(first_hit)
}
