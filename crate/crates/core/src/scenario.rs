//! Declarative scenario files: a scheme, its operator and parameters, and
//! the `(k, g)` pair shared by the rate calculators and the checker.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iterations::{Domain, Operator, Property, SeqSpec};
use crate::moduli::{ClosednessModuli, FejerModulus, GhPair, LiminfBound, Modulus, TAU};
use crate::nat::Budget;
use crate::rates::Theorem;
use crate::schemes::SchemeParams;

/// Largest supported dimension.
pub const MAX_DIM: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Any sequence, with every modulus supplied by the scenario.
    Generic,
    PicardNe,
    PicardFne,
    Ishikawa,
    MannSpc,
    #[serde(rename = "cond_E")]
    CondE,
    MannAsym,
    Ppa,
    /// Mann iteration with summable errors `ε_n = scale·2^{−n}`.
    Quasi,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Generic => "generic",
            Scheme::PicardNe => "picard_ne",
            Scheme::PicardFne => "picard_fne",
            Scheme::Ishikawa => "ishikawa",
            Scheme::MannSpc => "mann_spc",
            Scheme::CondE => "cond_E",
            Scheme::MannAsym => "mann_asym",
            Scheme::Ppa => "ppa",
            Scheme::Quasi => "quasi",
        }
    }

    /// The certificate used when the scenario does not name one.
    pub fn default_theorem(self) -> Theorem {
        match self {
            Scheme::Generic => Theorem::Psi,
            Scheme::PicardNe => Theorem::Sigma,
            Scheme::PicardFne => Theorem::ThetaFne,
            Scheme::MannSpc => Theorem::OmegaTilde,
            Scheme::Quasi => Theorem::PsiHat,
            Scheme::Ishikawa | Scheme::CondE | Scheme::MannAsym | Scheme::Ppa => Theorem::PsiTilde,
        }
    }

    fn theorems(self) -> &'static [Theorem] {
        use Theorem::*;
        match self {
            Scheme::Generic => &[Psi, PsiTilde],
            Scheme::PicardNe => &[Sigma, SigmaTilde, Theta],
            Scheme::PicardFne => &[ThetaFne, Theta],
            Scheme::MannSpc => &[OmegaTilde, PsiTilde],
            Scheme::CondE => &[PsiTilde, Omega],
            Scheme::Ishikawa | Scheme::MannAsym | Scheme::Ppa => &[PsiTilde],
            Scheme::Quasi => &[PsiHat],
        }
    }
}

/// Moduli supplied directly by the scenario. Schemes with built-in moduli
/// use these as overrides.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModuliSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<Modulus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi_pp: Option<Modulus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chi: Option<FejerModulus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gh: Option<GhPair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Modulus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closed: Option<ClosednessModuli>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<Modulus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi_hat: Option<LiminfBound>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Caps {
    /// Largest `N` the witness search tries.
    #[serde(default = "Caps::default_search")]
    pub search: u64,
    /// Recursion-internal evaluations allowed for one bound.
    #[serde(default = "Caps::default_steps")]
    pub steps: u64,
    /// Largest intermediate natural, in bits.
    #[serde(default = "Caps::default_bits")]
    pub bits: u64,
    /// Largest argument scanned when majorizing a non-monotone modulus.
    #[serde(default = "Caps::default_scan")]
    pub scan: u64,
}

impl Caps {
    fn default_search() -> u64 {
        10_000
    }
    fn default_steps() -> u64 {
        1_000_000
    }
    fn default_bits() -> u64 {
        1 << 16
    }
    fn default_scan() -> u64 {
        100_000
    }

    pub fn budget(&self) -> Budget {
        Budget::new(self.steps, self.bits).with_scan_cap(self.scan)
    }
}

impl Default for Caps {
    fn default() -> Self {
        Caps {
            search: Caps::default_search(),
            steps: Caps::default_steps(),
            bits: Caps::default_bits(),
            scan: Caps::default_scan(),
        }
    }
}

/// Budgets of the sampling checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckerSpec {
    #[serde(default = "CheckerSpec::default_trials")]
    pub trials: u64,
    /// Sampled pairs for operator property validation.
    #[serde(default = "CheckerSpec::default_pairs")]
    pub pairs: usize,
    #[serde(default)]
    pub seed: u64,
    /// Length of the index window checked after a rate of asymptotic regularity.
    #[serde(default = "CheckerSpec::default_window")]
    pub window: u64,
    #[serde(default = "CheckerSpec::default_tau")]
    pub tau: f64,
    /// Steps written by `simulate` when none are given on the command line.
    #[serde(default = "CheckerSpec::default_steps")]
    pub steps: u64,
}

impl CheckerSpec {
    fn default_trials() -> u64 {
        1000
    }
    fn default_pairs() -> usize {
        1000
    }
    fn default_window() -> u64 {
        100
    }
    fn default_tau() -> f64 {
        TAU
    }
    fn default_steps() -> u64 {
        200
    }
}

impl Default for CheckerSpec {
    fn default() -> Self {
        CheckerSpec {
            trials: CheckerSpec::default_trials(),
            pairs: CheckerSpec::default_pairs(),
            seed: 0,
            window: CheckerSpec::default_window(),
            tau: CheckerSpec::default_tau(),
            steps: CheckerSpec::default_steps(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub scheme: Scheme,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<Theorem>,
    pub dim: usize,
    pub operator: Operator,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub properties: Vec<Property>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Domain>,
    pub x0: Vec<f64>,
    #[serde(default)]
    pub params: SchemeParams,
    #[serde(default)]
    pub moduli: ModuliSpec,
    pub k: u64,
    pub g: Modulus,
    /// A known fixed point or zero; estimated from a far iterate otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_point: Option<Vec<f64>>,
    /// `scale` in the error terms `ε_n = scale·2^{−n}` of the quasi scheme.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<f64>,
    #[serde(default)]
    pub caps: Caps,
    #[serde(default)]
    pub checker: CheckerSpec,
    /// Output directory for `simulate`, relative to the working directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

/// Parses and validates a scenario. Errors carry JSON-pointer paths.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let sc: Scenario = serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
        path: pointer(&e.path().to_string()),
        msg: e.inner().to_string(),
    })?;
    sc.validate()?;
    Ok(sc)
}

/// Parses a scenario after replacing its `g` by the JSON text `g`, so that
/// an override goes through the same parser and checks as the file.
pub fn parse_scenario_with_g(text: &str, g: &str) -> Result<Scenario> {
    let parse = |t: &str, at: &str| -> Result<serde_json::Value> {
        serde_json::from_str(t).map_err(|e| Error::Parse {
            path: at.into(),
            msg: e.to_string(),
        })
    };
    let mut doc = parse(text, "")?;
    let obj = doc.as_object_mut().ok_or_else(|| Error::Parse {
        path: String::new(),
        msg: "a scenario must be a JSON object".into(),
    })?;
    obj.insert("g".into(), parse(g, "/g")?);
    parse_scenario(&doc.to_string())
}

/// Reads a scenario file; an empty name defaults to the file stem.
pub fn load_scenario(path: &std::path::Path) -> Result<Scenario> {
    load_scenario_with(path, None)
}

pub fn load_scenario_with(path: &std::path::Path, g: Option<&str>) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    let mut sc = match g {
        Some(g) => parse_scenario_with_g(&text, g)?,
        None => parse_scenario(&text)?,
    };
    if sc.name.is_empty() {
        sc.name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    }
    Ok(sc)
}

/// Canonical pretty JSON.
pub fn print_scenario(sc: &Scenario) -> String {
    serde_json::to_string_pretty(sc).expect("scenarios always serialize")
}

/// `a.b[2].c` → `/a/b/2/c`.
fn pointer(path: &str) -> String {
    if path == "." || path.is_empty() {
        return String::new();
    }
    let mut out = String::new();
    for seg in path.split('.') {
        for part in seg.split('[') {
            let part = part.trim_end_matches(']');
            if !part.is_empty() {
                out.push('/');
                out.push_str(&part.replace('~', "~0").replace('/', "~1"));
            }
        }
    }
    out
}

fn require<'a, T>(v: &'a Option<T>, field: &str, scheme: Scheme) -> Result<&'a T> {
    v.as_ref()
        .ok_or_else(|| Error::Config(format!("scheme {} needs `{field}`", scheme.as_str())))
}

fn in_range(v: Option<f64>, field: &str, ok: impl Fn(f64) -> bool, what: &str) -> Result<()> {
    match v {
        Some(x) if !(x.is_finite() && ok(x)) => Err(Error::range(field, format!("{x} must {what}"))),
        _ => Ok(()),
    }
}

/// Largest term with index at least `n0`.
fn sup_from(s: &SeqSpec, n0: u64) -> f64 {
    match s {
        SeqSpec::Constant { value } => *value,
        SeqSpec::AffineInv { a, c } => a + c.max(0.0) / (n0 as f64 + 1.0),
        SeqSpec::Table { values, tail } => values
            .iter()
            .skip(usize::try_from(n0).unwrap_or(usize::MAX))
            .copied()
            .fold(*tail, f64::max),
    }
}

impl Scenario {
    pub fn theorem(&self) -> Theorem {
        self.certificate.unwrap_or(self.scheme.default_theorem())
    }

    /// `λ_n`, from `lambda_seq` or the constant `lambda`.
    pub fn lambda_seq(&self) -> Option<SeqSpec> {
        self.params
            .lambda_seq
            .clone()
            .or_else(|| self.params.lambda.map(SeqSpec::constant))
    }

    pub fn budget(&self) -> Budget {
        self.caps.budget()
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        let scheme = self.scheme;
        if self.dim == 0 || self.dim > MAX_DIM {
            return Err(Error::range("/dim", format!("must lie in 1..={MAX_DIM}")));
        }
        if self.x0.len() != self.dim {
            return Err(Error::range("/x0", format!("has {} coordinates, expected {}", self.x0.len(), self.dim)));
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::range("/x0", "coordinates must be finite"));
        }
        if let Some(fp) = &self.fixed_point {
            if fp.len() != self.dim || fp.iter().any(|v| !v.is_finite()) {
                return Err(Error::range("/fixed_point", format!("must be {} finite coordinates", self.dim)));
            }
        }
        self.operator.compile(self.dim).map_err(|e| prefix(e, "/operator"))?;
        if let Some(d) = &self.domain {
            d.validate(self.dim).map_err(|e| prefix(e, "/domain"))?;
        }
        if !self.properties.is_empty() && self.domain.is_none() {
            return Err(Error::Config("declared properties are validated on `domain`, which is missing".into()));
        }
        for (i, prop) in self.properties.iter().enumerate() {
            prop.validate_params().map_err(|e| match e {
                Error::Range { field, msg } => Error::range(field.replacen("properties", &format!("/properties/{i}"), 1), msg),
                other => other,
            })?;
        }
        if !self.theorem_allowed() {
            return Err(Error::Config(format!(
                "certificate {} is not available for scheme {}",
                self.theorem().as_str(),
                scheme.as_str()
            )));
        }
        if !(self.checker.tau.is_finite() && self.checker.tau >= 0.0) {
            return Err(Error::range("/checker/tau", "must be >= 0"));
        }
        if self.caps.search > crate::checker::INDEX_LIMIT {
            return Err(Error::range("/caps/search", format!("must be <= {}", crate::checker::INDEX_LIMIT)));
        }

        in_range(p.b, "/params/b", |x| x > 0.0, "be > 0")?;
        in_range(p.lambda, "/params/lambda", |x| x > 0.0 && x < 1.0, "lie in (0, 1)")?;
        in_range(p.kappa, "/params/kappa", |x| (0.0..1.0).contains(&x), "lie in [0, 1)")?;
        in_range(p.mu, "/params/mu", |x| x >= 1.0, "be >= 1")?;
        if let Some(s) = &p.lambda_seq {
            s.check_range("/params/lambda_seq", 0.0, false, 1.0, false)?;
        }
        if let Some(s) = &p.s_seq {
            s.check_range("/params/s_seq", 0.0, false, 1.0, false)?;
        }
        if let Some(s) = &p.gamma_seq {
            s.check_range("/params/gamma_seq", 0.0, true, f64::INFINITY, true)?;
        }
        if let Some(x) = self.perturbation {
            if !(x.is_finite() && x >= 0.0) {
                return Err(Error::range("/perturbation", "must be >= 0"));
            }
        }
        let theta_or_constant = |what: &str| -> Result<()> {
            let constant = self.lambda_seq().and_then(|s| s.as_constant()).is_some();
            if p.theta.is_none() && !constant {
                return Err(Error::Config(format!(
                    "scheme {} with non-constant lambda needs `params.theta` ({what})",
                    scheme.as_str()
                )));
            }
            Ok(())
        };

        match scheme {
            Scheme::Generic | Scheme::PicardNe => {}
            Scheme::PicardFne => {
                require(&p.b, "params.b", scheme)?;
                require(&p.lambda, "params.lambda", scheme)?;
            }
            Scheme::Ishikawa => {
                require(&p.b, "params.b", scheme)?;
                let l = *require(&p.l, "params.L", scheme)?;
                if l < 1 {
                    return Err(Error::range("/params/L", "must be >= 1"));
                }
                let lam = require(&p.lambda_seq, "params.lambda_seq", scheme)
                    .cloned()
                    .or_else(|e| p.lambda.map(SeqSpec::constant).ok_or(e))?;
                lam.check_range("/params/lambda_seq", 0.0, false, 1.0, false)?;
                let s = require(&p.s_seq, "params.s_seq", scheme)?;
                let n0 = p.n0.unwrap_or(0);
                let top = sup_from(s, n0);
                if top > 1.0 - 1.0 / l as f64 {
                    return Err(Error::range(
                        "/params/s_seq",
                        format!("s_n reaches {top} for n >= N0 = {n0}, above 1 - 1/L"),
                    ));
                }
                theta_or_constant("a rate of divergence of sum lambda_n(1 - lambda_n)")?;
            }
            Scheme::MannSpc => {
                require(&p.b, "params.b", scheme)?;
                let kappa = *require(&p.kappa, "params.kappa", scheme)?;
                let lam = self
                    .lambda_seq()
                    .ok_or_else(|| Error::Config("scheme mann_spc needs `params.lambda` or `params.lambda_seq`".into()))?;
                lam.check_range("/params/lambda_seq", kappa, true, 1.0, true)?;
                theta_or_constant("a rate of divergence of sum (lambda_n - kappa)(1 - lambda_n)")?;
            }
            Scheme::CondE => {
                require(&p.b, "params.b", scheme)?;
                require(&p.mu, "params.mu", scheme)?;
                let l = *require(&p.l, "params.L", scheme)?;
                if l < 2 {
                    return Err(Error::range("/params/L", "must be >= 2"));
                }
                let lam = self
                    .lambda_seq()
                    .ok_or_else(|| Error::Config("scheme cond_E needs `params.lambda` or `params.lambda_seq`".into()))?;
                let inv = 1.0 / l as f64;
                lam.check_range("/params/lambda_seq", inv, false, 1.0 - inv, false)?;
            }
            Scheme::MannAsym => {
                require(&p.k_sum, "params.K", scheme)?;
                if self.lambda_seq().is_none() {
                    return Err(Error::Config("scheme mann_asym needs `params.lambda` or `params.lambda_seq`".into()));
                }
            }
            Scheme::Ppa => {
                require(&p.b, "params.b", scheme)?;
                let gamma = require(&p.gamma_seq, "params.gamma_seq", scheme)?;
                if p.theta.is_none() && gamma.as_constant().is_none() {
                    return Err(Error::Config(
                        "scheme ppa with non-constant gamma_seq needs `params.theta`".into(),
                    ));
                }
                if self.operator.quadratic(self.dim)?.is_none() {
                    return Err(Error::Config("scheme ppa needs a prox operator".into()));
                }
            }
            Scheme::Quasi => {
                if self.lambda_seq().is_none() {
                    return Err(Error::Config("scheme quasi needs `params.lambda` or `params.lambda_seq`".into()));
                }
            }
        }
        Ok(())
    }

    /// Checks that every modulus the certificate needs is available. Parsing
    /// accepts incomplete scenarios so that `simulate` can run them.
    pub fn require_moduli(&self) -> Result<()> {
        let scheme = self.scheme;
        let m = &self.moduli;
        match scheme {
            Scheme::Generic => {
                require(&m.phi, "moduli.phi", scheme)?;
                require(&m.chi, "moduli.chi", scheme)?;
                if self.theorem() == Theorem::PsiTilde {
                    require(&m.closed, "moduli.closed", scheme)?;
                }
            }
            Scheme::PicardNe if self.theorem() == Theorem::Theta => drop(require(&m.phi_pp, "moduli.phi_pp", scheme)?),
            Scheme::PicardNe | Scheme::MannAsym => drop(require(&m.phi, "moduli.phi", scheme)?),
            Scheme::Quasi => {
                require(&m.phi_hat, "moduli.phi_hat", scheme)?;
                require(&m.xi, "moduli.xi", scheme)?;
            }
            _ => {}
        }
        if m.gamma.is_none() && self.domain.is_none() {
            return Err(Error::Config(format!(
                "scheme {} needs `moduli.gamma` or a bounded `domain`",
                scheme.as_str()
            )));
        }
        Ok(())
    }

    fn theorem_allowed(&self) -> bool {
        self.scheme.theorems().contains(&self.theorem())
    }
}

fn prefix(e: Error, at: &str) -> Error {
    match e {
        Error::Range { field, msg } if field.starts_with(&at[1..]) => Error::range(format!("/{field}"), msg),
        Error::Range { field, msg } if !field.starts_with('/') => Error::range(format!("{at}/{field}"), msg),
        other => other,
    }
}
