//! Acceptance run: one pass/fail line per criterion, nonzero exit on any
//! failure. Built with `harness = false` so the lines appear in order.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use metastab::checker::{
    check_asymptotic_regularity, check_fejer_modulus, check_u_rate, check_uniform_closedness, find_member,
    find_small_step, pigeonhole_holds, Status,
};
use metastab::iterations::{
    point, residual_family, validate_operator, Domain, Operator, Point, Property, SeqSpec, Trajectory,
};
use metastab::moduli::{
    modulus_i_to_ii, modulus_ii_to_i, tb_modulus_ball, tb_modulus_convex_hull, tb_modulus_interval, FejerModulus,
    GhModuli, ModExpr, Modulus,
};
use metastab::rates::{omega_tilde, psi, psi_plus, psi_tilde, RateInputs, RateModuli};
use metastab::runner::{build_trajectory, cmd_verify, limit_point, resolve};
use metastab::scenario::{load_scenario, Scenario};
use metastab::schemes::{
    fne_phi_pp, picard_ne_sigma, picard_ne_sigma_tilde, picard_ne_theta, ppa_beta, ppa_delta, ppa_phi,
    spc_moduli, standard_closedness, theta_fne,
};
use metastab::{Budget, Nat};
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Float slack for every residual and distance comparison.
const TAU: f64 = 1e-9;
/// Iterates checked past each rate.
const WINDOW: u64 = 100;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome, Duration);

fn nat(v: u64) -> Nat {
    Nat::from(v)
}

fn shipped_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn shipped() -> Vec<Scenario> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(shipped_dir())
        .expect("scenario directory")
        .map(|e| e.expect("dir entry").path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    paths.iter().map(|p| load_scenario(p).expect("shipped scenario parses")).collect()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Closed form of the generic bound with `γ(k) = k+1`, `χ(n,m,r) = n+m`,
/// `Φ = id`, `G = H = id`: `g̃^{4(k+1)}(0)` with `g̃(n) = n + g(n)`.
fn closed_form() -> Outcome {
    let bud = Budget::default();
    let gs = [Modulus::affine(1, 1), Modulus::affine(2, 0), Modulus::constant(3)];
    let mut cases = 0;
    for g in &gs {
        for k in 0..=5u64 {
            let m = RateModuli::new(Modulus::identity(), FejerModulus::SumNm, GhModuli::identity(), tb_modulus_interval());
            let cert = psi(&RateInputs { k: nat(k), g: g.clone(), moduli: m }, &bud).map_err(err)?;
            let mut x = nat(0);
            for _ in 0..4 * (k + 1) {
                x = &x + g.eval(&x, &bud).map_err(err)?;
            }
            ensure(cert.bound == x, || format!("k = {k}, g = {g:?}: {} != {x}", cert.bound))?;
            cases += 1;
        }
    }
    Ok(format!("{cases} cases equal"))
}

/// Residuals stay below `1/(k+1)` on `[rate, rate + WINDOW]`.
fn rate_window(traj: &mut Trajectory, rate: &Modulus, expected: impl Fn(u64) -> u64) -> Outcome {
    let bud = Budget::default();
    let family = residual_family(traj);
    for k in 0..=10u64 {
        let r = rate.eval(&nat(k), &bud).map_err(err)?;
        ensure(r == nat(expected(k)), || format!("k = {k}: rate {r}, expected {}", expected(k)))?;
        let v = check_asymptotic_regularity(traj, &family, &r, &nat(k), WINDOW, TAU).map_err(err)?;
        ensure(v.status == Status::Verified, || format!("k = {k}: {:?}", v.violations))?;
    }
    Ok(format!("k = 0..10, rate(10) = {}", expected(10)))
}

fn fne_rate() -> Outcome {
    let op = Operator::Prox { q: vec![vec![1.0, 0.0], vec![0.0, 1.0]], c: None, gamma: 1.0 };
    let t = op.compile(2).map_err(err)?;
    let props = [Property::FirmlyNonexpansive { lambda: 0.5 }];
    validate_operator(&op, &t, &Domain::ball(1.0), &props, 2, 1000, 0, TAU).map_err(err)?;
    let mut traj = Trajectory::picard(t, point(&[0.6, 0.8])).map_err(err)?;
    // ⌈8(b+1)²/(λ(1−λ))⌉ = 288 for b = 2, λ = 1/2.
    rate_window(&mut traj, &fne_phi_pp(2.0, 0.5).map_err(err)?, |k| 288 * (k + 1) * (k + 1))
}

fn spc_rate() -> Outcome {
    let inner = Operator::ProjectBall { center: None, radius: 0.5 };
    let op = Operator::SpcFromNonexpansive { inner: Box::new(inner), kappa: 0.25 };
    let t = op.compile(2).map_err(err)?;
    let props = [Property::StrictPseudoContraction { kappa: 0.25 }];
    validate_operator(&op, &t, &Domain::ball(1.0), &props, 2, 1000, 0, TAU).map_err(err)?;
    let mut traj = Trajectory::mann(t, point(&[0.6, 0.8]), SeqSpec::constant(0.5)).map_err(err)?;
    // ⌈b²/((λ−κ)(1−λ))⌉ = 32 for b = 2, κ = 1/4, λ = 1/2.
    let m = spc_moduli(2.0, 0.25, Some(0.5), None).map_err(err)?;
    rate_window(&mut traj, &m.phi_pp, |k| 32 * (k + 1) * (k + 1))
}

fn ppa() -> Outcome {
    let bud = Budget::default();
    let gamma = SeqSpec::constant(1.0);
    let op = Operator::Prox { q: vec![vec![1.0, 0.0], vec![0.0, 1.0]], c: None, gamma: 1.0 };
    let quad = op.quadratic(2).map_err(err)?.ok_or("prox has a quadratic")?;
    let mut traj = Trajectory::ppa(quad, point(&[0.6, 0.8]), gamma.clone()).map_err(err)?;
    let family = residual_family(&traj);
    let theta = Modulus::identity();
    for k in 0..=10u64 {
        let k1 = k + 1;
        let beta = ppa_beta(&nat(k), &theta, 1.0, &bud).map_err(err)?;
        ensure(beta == nat(k1 * k1), || format!("beta({k}) = {beta}"))?;
        let v = check_u_rate(&mut traj, &nat(k), &beta, WINDOW, TAU).map_err(err)?;
        ensure(v.status == Status::Verified, || format!("(a) k = {k}: {:?}", v.violations))?;
        for l in [0u64, 5] {
            let delta = ppa_delta(&nat(k), &nat(l), 1.0, &bud).map_err(err)?;
            ensure(delta == nat(k1 * k1 + l - 1), || format!("Delta({k}, {l}) = {delta}"))?;
            let n = find_small_step(&mut traj, &nat(k), l, &delta, TAU).map_err(err)?;
            ensure(n.is_some_and(|n| n >= l), || format!("(b) k = {k}, L = {l}: no small step"))?;
        }
    }
    for k in 0..=5u64 {
        // M_k = 3k+2, so Φ = ((3k+3)²)² − 1.
        let a = (3 * k + 3) * (3 * k + 3);
        let phi = ppa_phi(&nat(k), &gamma, &theta, 1.0, &bud).map_err(err)?;
        ensure(phi == nat(a * a - 1), || format!("Phi({k}) = {phi}"))?;
        let n = find_member(&mut traj, &family, &nat(k), &phi, TAU).map_err(err)?;
        ensure(n.is_some(), || format!("(c) k = {k}: no member below {phi}"))?;
    }
    Ok("(a) k <= 10, (b) k <= 10 with L in {0, 5}, (c) k <= 5".into())
}

fn soundness() -> Outcome {
    let mut runs = 0;
    for base in shipped() {
        for k in 0..=2u64 {
            for g in [Modulus::constant(1), Modulus::affine(1, 1)] {
                let mut sc = base.clone();
                sc.k = k;
                sc.g = g.clone();
                // The sampling suites run separately below.
                sc.checker.trials = 0;
                let r = cmd_verify(&sc).map_err(err)?;
                let v = &r.verdict;
                ensure(v.status == Status::Verified, || format!("{} k = {k} g = {g:?}: {v:?}", sc.name))?;
                let n = v.witness.as_ref().ok_or_else(|| format!("{}: no witness", sc.name))?.n;
                let b = v.bound.as_ref().ok_or_else(|| format!("{}: no bound", sc.name))?;
                ensure(&nat(n) <= b, || format!("{}: witness {n} above bound {b}", sc.name))?;
                runs += 1;
            }
        }
    }
    Ok(format!("{runs} scenario runs verified"))
}

fn sample_hull(vertices: &[Point], rng: &mut ChaCha8Rng) -> Point {
    let w: Vec<f64> = vertices.iter().map(|_| -rng.random::<f64>().max(f64::MIN_POSITIVE).ln()).collect();
    let total: f64 = w.iter().sum();
    vertices.iter().zip(&w).fold(Point::zeros(vertices[0].len()), |acc, (v, wi)| acc + v * (wi / total))
}

/// Among γ(k)+1 random points of the set, some pair is within 1/(k+1).
fn pigeonhole_suite(
    gamma: &Modulus,
    trials: u64,
    rng: &mut ChaCha8Rng,
    mut draw: impl FnMut(&mut ChaCha8Rng) -> Point,
) -> Result<(), String> {
    let bud = Budget::default();
    for t in 0..trials {
        let k = t % 6;
        let size = gamma.eval(&nat(k), &bud).map_err(err)?.to_usize().ok_or("gamma too large")? + 1;
        let pts: Vec<Point> = (0..size).map(|_| draw(rng)).collect();
        ensure(pigeonhole_holds(&pts, &nat(k), TAU), || format!("k = {k}: {size} points, no close pair"))?;
    }
    Ok(())
}

fn pigeonhole() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let unit = Domain::Box { lo: vec![0.0], hi: vec![1.0] };
    pigeonhole_suite(&tb_modulus_interval(), 1000, &mut rng, |r| unit.sample(1, r))?;
    // Evenly spaced grids are the extremal configurations of the interval.
    for k in 0..=5u64 {
        let grid: Vec<Point> = (0..=k + 1).map(|i| point(&[i as f64 / (k + 1) as f64])).collect();
        ensure(pigeonhole_holds(&grid, &nat(k), TAU), || format!("grid k = {k}"))?;
    }
    for (dim, b) in [(1u32, 1.0), (2, 0.5), (2, 1.0), (3, 0.5)] {
        let ball = Domain::ball(b);
        let gamma = tb_modulus_ball(dim, b).map_err(err)?;
        pigeonhole_suite(&gamma, 1000, &mut rng, |r| ball.sample(dim as usize, r))?;
    }
    // Hull of a two-point set, whose II-modulus is the constant 1.
    let ends = [point(&[-0.5, 0.3]), point(&[0.5, -0.3])];
    let gamma = tb_modulus_convex_hull(&Modulus::constant(1), 1.0).map_err(err)?;
    pigeonhole_suite(&gamma, 1000, &mut rng, |r| sample_hull(&ends, r))
}

fn dist(p: &Point, q: &Point) -> f64 {
    (p - q).norm()
}

/// `masks[i]`: the points within `eps` of point `i`, itself included.
fn neighbourhoods(pts: &[Point], eps: f64) -> Vec<u32> {
    pts.iter()
        .map(|p| (0..pts.len()).filter(|&j| dist(p, &pts[j]) <= eps).fold(0, |m, j| m | 1 << j))
        .collect()
}

fn members(s: u32, n: usize) -> impl Iterator<Item = usize> {
    (0..n).filter(move |i| s & (1 << i) != 0)
}

/// Size of the largest subset with all pairwise distances above `eps`.
fn max_separated(pts: &[Point], eps: f64) -> u64 {
    let n = pts.len();
    let near = neighbourhoods(pts, eps);
    (0u32..1 << n)
        .filter(|&s| members(s, n).all(|i| near[i] & s == 1 << i))
        .map(|s| s.count_ones() as u64)
        .max()
        .unwrap_or(0)
}

/// Size of the smallest subset within `eps` of every point.
fn min_net(pts: &[Point], eps: f64) -> u64 {
    let n = pts.len();
    let near = neighbourhoods(pts, eps);
    let full = (1u32 << n) - 1;
    (1u32..1 << n)
        .filter(|&s| members(s, n).fold(0, |m, i| m | near[i]) == full)
        .map(|s| s.count_ones() as u64)
        .min()
        .unwrap_or(n as u64)
}

/// Both conversions checked against brute-force scans of random point sets.
fn conversions() -> Result<(), String> {
    let bud = Budget::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    const KS: u64 = 12;
    for space in 0..100 {
        let n = rng.random_range(2..=12usize);
        let dim = rng.random_range(1..=3usize);
        let pts: Vec<Point> = (0..n).map(|_| Point::from_fn(dim, |_, _| rng.random::<f64>())).collect();
        let eps = |k: u64| 1.0 / (k + 1) as f64;
        let sep: Vec<u64> = (0..KS).map(|k| max_separated(&pts, eps(k))).collect();
        let net: Vec<u64> = (0..KS).map(|k| min_net(&pts, eps(k) + TAU)).collect();
        let tail = Some(ModExpr::constant(n as u64));
        // The tightest moduli of this space, extended by the trivial ones.
        let alpha = Modulus::table(&net.iter().map(|v| v - 1).collect::<Vec<_>>(), Some(ModExpr::constant(n as u64 - 1)));
        let gamma = Modulus::table(&sep, tail);
        let gamma_from_alpha = modulus_i_to_ii(&alpha);
        let alpha_from_gamma = modulus_ii_to_i(&gamma).map_err(err)?;
        for k in 0..6u64 {
            let g = gamma_from_alpha.eval(&nat(k), &bud).map_err(err)?;
            ensure(nat(sep[k as usize]) <= g, || {
                format!("space {space}: {} separated points but gamma({k}) = {g}", sep[k as usize])
            })?;
            let a = alpha_from_gamma.eval(&nat(k), &bud).map_err(err)?;
            ensure(nat(net[k as usize]) <= a + 1u32, || format!("space {space}: no net of size alpha({k})+1"))?;
        }
    }
    Ok(())
}

/// Fejér moduli of every shipped scheme, and closedness moduli where the
/// scheme has them.
fn sampling_suites() -> Result<(u64, u64), String> {
    let (mut fejer, mut closed) = (0, 0);
    for sc in shipped() {
        let res = resolve(&sc).map_err(err)?;
        let bud = sc.budget();
        let mut traj = build_trajectory(&sc).map_err(err)?;
        let family = residual_family(&traj);
        let center = limit_point(&sc, &mut traj).map_err(err)?;
        let v = check_fejer_modulus(&mut traj, &res.chi, &res.gh, &family, &center, 1000, 7, TAU, &bud).map_err(err)?;
        ensure(v.status == Status::Verified, || format!("{} chi: {:?}", sc.name, v.violations))?;
        fejer += v.trials;
        if let Some(c) = &res.closed {
            let v = check_uniform_closedness(&family, c, &center, 1000, 7, TAU, &bud).map_err(err)?;
            ensure(v.status == Status::Verified, || format!("{} closedness: {:?}", sc.name, v.violations))?;
            closed += v.trials;
        }
    }
    Ok((fejer, closed))
}

fn modulus_suites() -> Outcome {
    pigeonhole().map_err(|e| format!("(a) {e}"))?;
    conversions().map_err(|e| format!("(b) {e}"))?;
    let (f, c) = sampling_suites()?;
    Ok(format!("(a) pigeonhole, (b) 100 spaces, (c) {f} Fejer trials, (d) {c} closedness trials"))
}

fn random_modulus(rng: &mut ChaCha8Rng, a_lo: u64) -> Modulus {
    if rng.random_bool(0.3) {
        Modulus::constant(rng.random_range(0..=3))
    } else {
        Modulus::affine(rng.random_range(a_lo..=2), rng.random_range(0..=3))
    }
}

fn cross_path() -> Outcome {
    let bud = Budget::new(1_000_000, 1 << 20);
    let cap = nat(1000);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let closed = standard_closedness();
    const CASES: usize = 25;
    for case in 0..CASES {
        let k = nat(rng.random_range(0..=2));
        let g = random_modulus(&mut rng, 0);
        let phi = Modulus::affine(rng.random_range(1..=2), rng.random_range(0..=3));
        let gamma = Modulus::affine(1, rng.random_range(1..=2));
        let m = RateModuli::new(phi.clone(), FejerModulus::window(1), GhModuli::identity(), gamma.clone());
        let input = RateInputs { k: k.clone(), g: g.clone(), moduli: m.clone() };
        let ctx = || format!("case {case}: k = {k}, g = {g:?}, phi = {phi:?}, gamma = {gamma:?}");

        let sigma = picard_ne_sigma(&k, &g, &phi, &gamma, &bud).map_err(err)?;
        ensure(sigma.bound == psi(&input, &bud).map_err(err)?.bound, || format!("Sigma, {}", ctx()))?;

        let tilde_in = RateInputs { moduli: m.with_closed(closed.clone()), ..input };
        let st = picard_ne_sigma_tilde(&k, &g, &phi, &gamma, &bud).map_err(err)?;
        ensure(st.bound == psi_tilde(&tilde_in, &bud).map_err(err)?.bound, || format!("Sigma~, {}", ctx()))?;

        let theta = picard_ne_theta(&k, &g, &phi, &gamma, &bud).map_err(err)?;
        let pm = RateModuli::new(phi.clone(), FejerModulus::window(1), GhModuli::identity(), gamma.clone());
        let via = omega_tilde(&k, &g, &psi_plus(&pm, &cap), &phi, &bud).map_err(err)?;
        ensure(theta.bound == via, || format!("Theta, {}", ctx()))?;

        let (b, lam) = ([0.5, 1.0, 2.0][case % 3], [0.25, 0.5, 0.75][case % 3]);
        let small_k = nat(rng.random_range(0..=1));
        let fne = theta_fne(&small_k, &g, &gamma, b, lam, &bud).map_err(err)?;
        let pp = fne_phi_pp(b, lam).map_err(err)?;
        let general = picard_ne_theta(&small_k, &g, &pp, &gamma, &bud).map_err(err)?;
        let fm = RateModuli::new(pp.clone(), FejerModulus::window(1), GhModuli::identity(), gamma.clone());
        let via = omega_tilde(&small_k, &g, &psi_plus(&fm, &cap), &pp, &bud).map_err(err)?;
        ensure(fne.bound == general.bound && fne.bound == via, || format!("Theta_fne, b = {b}, lambda = {lam}, {}", ctx()))?;
    }
    Ok(format!("{CASES} random inputs for each of four paths"))
}

fn main() {
    let criteria: [Criterion; 7] = [
        ("closed-form agreement", closed_form, Duration::from_secs(1)),
        ("firmly nonexpansive rate", fne_rate, Duration::from_secs(5)),
        ("strict pseudo-contraction rate", spc_rate, Duration::from_secs(5)),
        ("proximal point certificates", ppa, Duration::from_secs(5)),
        ("metastability soundness", soundness, Duration::from_secs(30)),
        ("modulus property suites", modulus_suites, Duration::from_secs(30)),
        ("cross-path equality", cross_path, Duration::from_secs(30)),
    ];
    let mut failed = 0;
    for (i, (name, run, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let took = start.elapsed();
        let (status, detail) = match outcome {
            Ok(d) if took <= *limit => ("PASS", d),
            Ok(d) => ("FAIL", format!("{d}; took longer than {limit:?}")),
            Err(e) => ("FAIL", e),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!("criterion {}: {status} {name} ({:.2}s) {detail}", i + 1, took.as_secs_f64());
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
