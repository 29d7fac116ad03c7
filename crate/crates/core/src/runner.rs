//! Scenario-level commands: compute a certificate, simulate a trajectory,
//! verify a certificate empirically, and run a directory of scenarios.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checker::{
    check_asymptotic_regularity, check_fejer_modulus, check_uniform_closedness, verify_certificate, BoundValue,
    Status, Verdict, Violation, Witness,
};
use crate::error::{Error, Result};
use crate::iterations::{
    point, residual_family, validate_operator, write_csv, write_json, Domain, Point, Step, Trajectory,
};
use crate::moduli::{
    tb_modulus_ball, ApproximationFamily, ClosednessModuli, FejerModulus, GhModuli, ModExpr, Modulus,
};
use crate::nat::{self, dec, Budget, Nat};
use crate::rates::{
    composite_certificate, omega, omega_tilde, psi, psi_hat, psi_plus, psi_tilde, Certificate, Functional,
    RateInputs, RateModuli, Theorem,
};
use crate::scenario::{load_scenario, Scenario, Scheme};
use crate::schemes;

/// Index of the iterate used as the limit when no fixed point is given.
pub const LIMIT_ESTIMATE_INDEX: usize = 5000;

/// Everything a scheme contributes besides the trajectory.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub theorem: Theorem,
    pub chi: FejerModulus,
    pub gh: GhModuli,
    pub gamma: Modulus,
    pub closed: Option<ClosednessModuli>,
    /// Approximate F-point bound.
    pub phi: Option<Modulus>,
    /// Rate of asymptotic regularity, when the scheme has one.
    pub phi_pp: Option<Modulus>,
}

impl Resolved {
    /// Whether the certificate also promises `x_i ∈ AF_k` on the window.
    pub fn promises_membership(&self) -> bool {
        !matches!(self.theorem, Theorem::Psi | Theorem::Sigma | Theorem::PsiHat)
    }
}

/// The II-modulus of the smallest centered ball containing `domain`.
fn domain_gamma(dim: usize, domain: &Domain) -> Result<Modulus> {
    let r = match domain {
        Domain::Ball { radius, .. } => *radius,
        Domain::Box { lo, hi } => lo.iter().zip(hi).map(|(l, h)| (h - l).powi(2)).sum::<f64>().sqrt() / 2.0,
    };
    tb_modulus_ball(dim as u32, r)
}

fn param<T: Copy>(v: Option<T>, name: &str) -> Result<T> {
    v.ok_or_else(|| Error::Config(format!("missing `params.{name}`")))
}

/// Rate of divergence from `params.theta`, or the constant-λ default.
fn divergence_rate(sc: &Scenario) -> Result<Modulus> {
    if let Some(t) = &sc.params.theta {
        return Ok(t.clone());
    }
    let lam = sc.lambda_seq().and_then(|s| s.as_constant());
    schemes::divergence_rate_constant(param(lam, "lambda")?)
}

/// `θ(n) = ⌈n/γ²⌉` diverges for `Σ γ_n²` with constant `γ_n = γ`.
fn ppa_theta(sc: &Scenario) -> Result<Modulus> {
    if let Some(t) = &sc.params.theta {
        return Ok(t.clone());
    }
    let gamma = sc.params.gamma_seq.as_ref().and_then(|s| s.as_constant());
    let g = param(gamma, "gamma_seq")?;
    if g == 1.0 {
        return Ok(Modulus::identity());
    }
    Modulus::with_claim(
        ModExpr::Scale {
            c: 1.0 / (g * g),
            inner: Box::new(ModExpr::Identity),
        },
        None,
    )
}

/// Resolves the scheme's moduli, applying scenario overrides.
pub fn resolve(sc: &Scenario) -> Result<Resolved> {
    sc.require_moduli()?;
    let p = &sc.params;
    let m = &sc.moduli;
    let gamma = match (&m.gamma, &sc.domain) {
        (Some(g), _) => g.clone(),
        (None, Some(d)) => domain_gamma(sc.dim, d)?,
        (None, None) => unreachable!("checked by require_moduli"),
    };
    let id = GhModuli::identity();
    let std = Some(schemes::standard_closedness());
    let (chi, gh, closed, phi, phi_pp) = match sc.scheme {
        Scheme::Generic => (
            FejerModulus::SumNm,
            id,
            m.closed.clone(),
            m.phi.clone(),
            m.phi_pp.clone(),
        ),
        Scheme::PicardNe => (FejerModulus::window(1), id, std, m.phi.clone(), m.phi_pp.clone()),
        Scheme::PicardFne => {
            let pp = schemes::fne_phi_pp(param(p.b, "b")?, param(p.lambda, "lambda")?)?;
            (FejerModulus::window(1), id, std, Some(pp.clone()), Some(pp))
        }
        Scheme::Ishikawa => {
            let phi = schemes::ishikawa_phi(param(p.b, "b")?, param(p.l, "L")?, p.n0.unwrap_or(0), &divergence_rate(sc)?)?;
            (schemes::ishikawa_chi(), id, std, Some(phi), None)
        }
        Scheme::MannSpc => {
            let lam = sc.lambda_seq().and_then(|s| s.as_constant());
            let s = schemes::spc_moduli(param(p.b, "b")?, param(p.kappa, "kappa")?, lam, p.theta.as_ref())?;
            (s.chi, s.gh, Some(s.closed), Some(s.phi_pp.clone()), Some(s.phi_pp))
        }
        Scheme::CondE => {
            let (chi, closed) = schemes::cond_e_moduli(param(p.mu, "mu")?, param(p.l, "L")?)?;
            let phi = schemes::cond_e_iterations(param(p.l, "L")?, param(p.b, "b")?)?;
            (chi, id, Some(closed), Some(phi), None)
        }
        Scheme::MannAsym => {
            let (chi, gh, closed) = schemes::asymptotically_ne_moduli(param(p.k_sum, "K")?)?;
            (chi, gh, Some(closed), m.phi.clone(), None)
        }
        Scheme::Ppa => {
            let gs = p.gamma_seq.as_ref().ok_or_else(|| Error::Config("missing `params.gamma_seq`".into()))?;
            let pm = schemes::ppa_moduli(gs, &ppa_theta(sc)?, param(p.b, "b")?)?;
            (pm.chi, id, Some(pm.closed), Some(pm.phi), None)
        }
        Scheme::Quasi => (FejerModulus::window(1), id, std, None, None),
    };
    let chi = m.chi.clone().unwrap_or(chi);
    chi.validate()?;
    Ok(Resolved {
        theorem: sc.theorem(),
        chi,
        gh: m.gh.map(GhModuli::of).unwrap_or(gh),
        gamma,
        closed: m.closed.clone().or(closed),
        phi: m.phi.clone().or(phi),
        phi_pp: m.phi_pp.clone().or(phi_pp),
    })
}

fn need<'a>(v: &'a Option<Modulus>, what: &str) -> Result<&'a Modulus> {
    v.as_ref().ok_or_else(|| Error::Config(format!("the certificate needs {what}")))
}

/// Computes the scenario's certificate at `(k, g)`.
pub fn certificate(sc: &Scenario, res: &Resolved, k: &Nat, g: &Modulus, bud: &Budget) -> Result<Certificate> {
    let p = &sc.params;
    let rate_moduli = |phi: &Modulus| {
        let m = RateModuli::new(phi.clone(), res.chi.clone(), res.gh.clone(), res.gamma.clone());
        match &res.closed {
            Some(c) => m.with_closed(c.clone()),
            None => m,
        }
    };
    let input = |phi: &Modulus| RateInputs {
        k: k.clone(),
        g: g.clone(),
        moduli: rate_moduli(phi),
    };
    let cap = nat::nat(bud.scan_cap);
    match res.theorem {
        Theorem::Psi => psi(&input(need(&res.phi, "an approximate F-point bound phi")?), bud),
        Theorem::PsiTilde => psi_tilde(&input(need(&res.phi, "an approximate F-point bound phi")?), bud),
        Theorem::Sigma => schemes::picard_ne_sigma(k, g, need(&res.phi, "phi")?, &res.gamma, bud),
        Theorem::SigmaTilde => schemes::picard_ne_sigma_tilde(k, g, need(&res.phi, "phi")?, &res.gamma, bud),
        Theorem::Theta => schemes::picard_ne_theta(k, g, need(&res.phi_pp, "phi_pp")?, &res.gamma, bud),
        Theorem::ThetaFne => schemes::theta_fne(k, g, &res.gamma, param(p.b, "b")?, param(p.lambda, "lambda")?, bud),
        Theorem::OmegaTilde => {
            let pp = need(&res.phi_pp, "a rate of asymptotic regularity phi_pp")?;
            let delta = psi_plus(&rate_moduli(pp), &cap);
            Ok(composite_certificate(Theorem::OmegaTilde, omega_tilde(k, g, &delta, pp, bud)?))
        }
        Theorem::Omega => {
            let delta = psi_plus(&rate_moduli(need(&res.phi, "phi")?), &cap);
            let iterations = schemes::cond_e_iterations(param(p.l, "L")?, param(p.b, "b")?)?;
            let theta = Functional::IterateSucc(iterations);
            Ok(composite_certificate(Theorem::Omega, omega(k, g, &delta, &theta, bud)?))
        }
        Theorem::PsiHat => {
            let xi = sc.moduli.xi.clone().ok_or_else(|| Error::Config("missing `moduli.xi`".into()))?;
            let phi_hat = sc
                .moduli
                .phi_hat
                .as_ref()
                .ok_or_else(|| Error::Config("missing `moduli.phi_hat`".into()))?;
            let m = RateModuli::new(Modulus::identity(), res.chi.clone(), res.gh.clone(), res.gamma.clone()).with_xi(xi);
            psi_hat(
                &RateInputs {
                    k: k.clone(),
                    g: g.clone(),
                    moduli: m,
                },
                phi_hat,
                bud,
            )
        }
        Theorem::PsiPlus => Err(Error::Config("psi_plus is a functional, not a certificate".into())),
    }
}

/// The scenario's certificate as a bound for the checker: exact, or known
/// from below when its evaluation hit a cap.
pub fn bound_value(sc: &Scenario, res: &Resolved, k: &Nat, g: &Modulus) -> Result<(BoundValue, Option<Certificate>)> {
    match certificate(sc, res, k, g, &sc.budget()) {
        Ok(c) => Ok((BoundValue::Exact(c.bound.clone()), Some(c))),
        Err(Error::CapExceeded {
            lower_bound: Some(lb), ..
        }) => Ok((BoundValue::AtLeast(lb), None)),
        Err(e) => Err(e),
    }
}

/// A fresh trajectory of the scenario's iteration.
pub fn build_trajectory(sc: &Scenario) -> Result<Trajectory> {
    let x0 = point(&sc.x0);
    if sc.scheme == Scheme::Ppa {
        let quad = sc
            .operator
            .quadratic(sc.dim)?
            .ok_or_else(|| Error::Config("scheme ppa needs a prox operator".into()))?;
        let gamma = sc.params.gamma_seq.clone().ok_or_else(|| Error::Config("missing `params.gamma_seq`".into()))?;
        return Trajectory::ppa(quad, x0, gamma);
    }
    let map = sc.operator.compile(sc.dim)?;
    let lam = sc.lambda_seq();
    let need_lambda = || lam.clone().ok_or_else(|| Error::Config("missing `params.lambda`".into()));
    let step = match sc.scheme {
        Scheme::Generic | Scheme::PicardNe | Scheme::PicardFne => match &lam {
            Some(l) => Step::Mann { lambda: l.clone() },
            None => Step::Picard,
        },
        Scheme::Ishikawa => Step::Ishikawa {
            lambda: need_lambda()?,
            s: sc.params.s_seq.clone().ok_or_else(|| Error::Config("missing `params.s_seq`".into()))?,
        },
        Scheme::MannSpc | Scheme::CondE => Step::Mann { lambda: need_lambda()? },
        Scheme::MannAsym => Step::MannAsym { lambda: need_lambda()? },
        Scheme::Quasi => Step::PerturbedMann {
            lambda: need_lambda()?,
            scale: sc.perturbation.unwrap_or(1.0),
        },
        Scheme::Ppa => unreachable!(),
    };
    Trajectory::new(map, step, x0)
}

/// The known fixed point, or a far iterate standing in for the limit.
pub fn limit_point(sc: &Scenario, traj: &mut Trajectory) -> Result<Point> {
    match &sc.fixed_point {
        Some(p) => Ok(point(p)),
        None => Ok(traj.point(LIMIT_ESTIMATE_INDEX)?.clone()),
    }
}

/// Runs the declared-property validators; a failure is a property violation.
pub fn check_properties(sc: &Scenario) -> Result<Verdict> {
    let mut v = Verdict::verified();
    let Some(domain) = &sc.domain else {
        return Ok(v);
    };
    let map = sc.operator.compile(sc.dim)?;
    let c = &sc.checker;
    v.trials = c.pairs as u64;
    if let Err(e) = validate_operator(&sc.operator, &map, domain, &sc.properties, sc.dim, c.pairs, c.seed, c.tau) {
        v.status = Status::PropertyViolation;
        v.violations.push(Violation {
            check: format!("property:{}", e.property),
            detail: e.to_string(),
        });
    }
    Ok(v)
}

/// `‖x_n − p‖ ≤ b` along the first `upto` iterates.
pub fn check_b_bound(sc: &Scenario, traj: &mut Trajectory, p: &Point, upto: usize) -> Result<Verdict> {
    let mut v = Verdict::verified();
    let Some(b) = sc.params.b else {
        return Ok(v);
    };
    for (n, x) in traj.prefix(upto)?.iter().enumerate() {
        v.trials += 1;
        let d = (x - p).norm();
        if d > b + sc.checker.tau {
            v.status = Status::PropertyViolation;
            v.violations.push(Violation {
                check: "b_bound".into(),
                detail: format!("|x_{n} - p| = {d} exceeds b = {b}"),
            });
            break;
        }
    }
    Ok(v)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub scenario: String,
    pub scheme: Scheme,
    pub theorem: Theorem,
    pub k: u64,
    #[serde(flatten)]
    pub verdict: Verdict,
}

impl VerifyReport {
    pub fn exit_code(&self) -> i32 {
        self.verdict.status.exit_code()
    }
}

/// Certificate check plus every applicable modulus and property check.
pub fn cmd_verify(sc: &Scenario) -> Result<VerifyReport> {
    let res = resolve(sc)?;
    let k = nat::nat(sc.k);
    let c = &sc.checker;
    let bud = sc.budget();

    let mut out = Verdict::verified();
    out.absorb(check_properties(sc)?, "properties");
    // The bounds are only claimed for operators with the declared properties.
    if !out.is_verified() {
        return Ok(VerifyReport {
            scenario: sc.name.clone(),
            scheme: sc.scheme,
            theorem: res.theorem,
            k: sc.k,
            verdict: out,
        });
    }

    let mut traj = build_trajectory(sc)?;
    let family = residual_family(&traj);
    let center = limit_point(sc, &mut traj)?;
    let r = family.residual(&center, &Nat::from(0u32));
    if r > 1e-6 {
        out.details.push(format!("the limit point has residual {r}; sampling near it may miss AF_k"));
    }
    out.absorb(check_b_bound(sc, &mut traj, &center, 2000)?, "b_bound");

    if c.trials > 0 {
        let v = check_fejer_modulus(&mut traj, &res.chi, &res.gh, &family, &center, c.trials, c.seed, c.tau, &bud)?;
        out.absorb(v, "fejer_modulus");
        if let Some(closed) = &res.closed {
            let v = check_uniform_closedness(&family, closed, &center, c.trials, c.seed, c.tau, &bud)?;
            out.absorb(v, "uniform_closedness");
        }
    }

    let (bound, _) = bound_value(sc, &res, &k, &sc.g)?;
    let membership = res.promises_membership().then_some(&family);
    let main = verify_certificate(&mut traj, &k, &sc.g, &bound, sc.caps.search, membership, c.tau, &bud)?;
    let (b, w) = (main.bound.clone(), main.witness.clone());
    out.absorb(main, "certificate");

    if let Some(pp) = &res.phi_pp {
        let rate = pp.eval(&k, &bud)?;
        let v = check_asymptotic_regularity(&mut traj, &family, &rate, &k, c.window, c.tau)?;
        out.absorb(v, "asymptotic_regularity");
    }
    out.bound = b;
    out.witness = w;
    Ok(VerifyReport {
        scenario: sc.name.clone(),
        scheme: sc.scheme,
        theorem: res.theorem,
        k: sc.k,
        verdict: out,
    })
}

/// The certificate at the scenario's own `(k, g)`.
pub fn cmd_rate(sc: &Scenario) -> Result<Certificate> {
    let res = resolve(sc)?;
    certificate(sc, &res, &nat::nat(sc.k), &sc.g, &sc.budget())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationSidecar {
    pub generator: String,
    pub scenario: Scenario,
    pub steps: u64,
    pub k0: u64,
    pub csv: String,
}

/// Writes `<name>.csv` and the provenance sidecar `<name>.json` into `out`.
pub fn cmd_simulate(sc: &Scenario, steps: u64, out: &Path) -> Result<(PathBuf, PathBuf)> {
    let usteps = usize::try_from(steps).ok().filter(|&s| s as u64 <= crate::checker::INDEX_LIMIT);
    let usteps = usteps.ok_or_else(|| Error::range("steps", format!("must be <= {}", crate::checker::INDEX_LIMIT)))?;
    std::fs::create_dir_all(out)?;
    let name = if sc.name.is_empty() { "trajectory" } else { &sc.name };
    let csv = out.join(format!("{name}.csv"));
    let json = out.join(format!("{name}.json"));
    let mut traj = build_trajectory(sc)?;
    let family = residual_family(&traj);
    write_csv(&mut traj, usteps, &family, &nat::nat(sc.k), &csv)?;
    let sidecar = SimulationSidecar {
        generator: format!("metastab {}", env!("CARGO_PKG_VERSION")),
        scenario: sc.clone(),
        steps,
        k0: sc.k,
        csv: format!("{name}.csv"),
    };
    write_json(&json, &sidecar)?;
    Ok((csv, json))
}

/// Overrides applied to every scenario of a run.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub cap: Option<u64>,
    pub tau: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, sc: &mut Scenario) {
        if let Some(c) = self.cap {
            sc.caps.search = c;
        }
        if let Some(t) = self.tau {
            sc.checker.tau = t;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteRow {
    pub scenario: String,
    pub file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theorem: Option<Theorem>,
    #[serde(with = "dec::opt", default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<Nat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    /// A verdict status, or `error` when the scenario could not be run.
    pub status: String,
    pub exit_code: i32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub rows: Vec<SuiteRow>,
}

impl SuiteReport {
    pub fn all_verified(&self) -> bool {
        self.rows.iter().all(|r| r.exit_code == 0)
    }

    /// The worst exit code over all rows.
    pub fn exit_code(&self) -> i32 {
        self.rows.iter().map(|r| r.exit_code).max().unwrap_or(0)
    }
}

/// Exit code for an error that stopped a command.
pub fn error_exit_code(e: &Error) -> i32 {
    if e.is_cap() {
        2
    } else {
        1
    }
}

/// Scenario files of `dir`, sorted; `adversarial/` is included on request.
pub fn scenario_files(dir: &Path, include_adversarial: bool) -> Result<Vec<PathBuf>> {
    let list = |d: &Path| -> Result<Vec<PathBuf>> {
        let mut v: Vec<PathBuf> = std::fs::read_dir(d)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "json"))
            .collect();
        v.sort();
        Ok(v)
    };
    let mut files = list(dir)?;
    let adv = dir.join("adversarial");
    if include_adversarial && adv.is_dir() {
        files.extend(list(&adv)?);
    }
    if files.is_empty() {
        return Err(Error::Config(format!("no scenarios in {}", dir.display())));
    }
    Ok(files)
}

fn suite_row(path: &Path, ov: &Overrides) -> SuiteRow {
    let file = path.display().to_string();
    let run = || -> Result<VerifyReport> {
        let mut sc = load_scenario(path)?;
        ov.apply(&mut sc);
        cmd_verify(&sc)
    };
    match run() {
        Ok(r) => SuiteRow {
            scenario: r.scenario.clone(),
            file,
            theorem: Some(r.theorem),
            bound: r.verdict.bound.clone(),
            witness: r.verdict.witness.clone(),
            status: r.verdict.status.as_str().into(),
            exit_code: r.exit_code(),
            error: None,
        },
        Err(e) => SuiteRow {
            scenario: path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
            file,
            theorem: None,
            bound: None,
            witness: None,
            status: "error".into(),
            exit_code: error_exit_code(&e),
            error: Some(e.to_string()),
        },
    }
}

/// Verifies every scenario in parallel and writes `summary.json` and
/// `summary.csv` into `out`.
pub fn cmd_suite(dir: &Path, include_adversarial: bool, out: &Path, ov: &Overrides) -> Result<SuiteReport> {
    let files = scenario_files(dir, include_adversarial)?;
    let rows: Vec<SuiteRow> = files.par_iter().map(|p| suite_row(p, ov)).collect();
    let report = SuiteReport { rows };
    std::fs::create_dir_all(out)?;
    write_json(&out.join("summary.json"), &report)?;
    let mut w = csv::Writer::from_path(out.join("summary.csv"))?;
    w.write_record(["scenario", "theorem", "bound", "bound_digits", "witness", "status"])?;
    for r in &report.rows {
        w.write_record([
            r.scenario.clone(),
            r.theorem.map(|t| t.as_str().to_string()).unwrap_or_default(),
            r.bound.as_ref().map(crate::rates::human).unwrap_or_default(),
            r.bound.as_ref().map(|b| b.to_string().len().to_string()).unwrap_or_default(),
            r.witness.as_ref().map(|w| w.n.to_string()).unwrap_or_default(),
            r.status.clone(),
        ])?;
    }
    w.flush()?;
    Ok(report)
}
