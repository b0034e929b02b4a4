//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use postcon_core::consistency::{
    default_k_max, draw_z_pairs, fit_curve, inconsistency_ratio, pointwise_data, pushforward_reduction_check,
    run_contraction_conjugate, stability_sweep, ConjugateExperiment,
};
use postcon_core::forward::{recover_coefficient_1d, solve_elliptic_1d};
use postcon_core::numerics::{batch_means_se, rng_stream};
use postcon_core::posterior::{
    conjugate_posterior_diagonal, pcn_sample, DistanceSample, ImportanceSample, PcnConfig, SmallNoiseLikelihood,
};
use postcon_core::priors::{small_ball_mc, BasisScaling, GammaLaw, GaussianPrior, LatentPrior, UniformPrior};
use postcon_core::rates::{
    figure1_table, rate_gaussian_case, rate_general_optimize, rate_large_data, rate_opt_closed,
    uniform_prior_branches, uniform_prior_rho, RateCertificate, SixthConstraint,
};
use postcon_core::{GridFunction, ScaleSpec};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn within_budget(o: Outcome, elapsed: Duration, budget: Option<Duration>) -> Outcome {
    match budget {
        Some(b) if elapsed > b => outcome(false, format!("{} (over the {:?} budget)", o.detail, b)),
        _ => o,
    }
}

type Criterion = (&'static str, fn() -> Outcome, Option<u64>);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("gaussian-case rates vs closed forms", figure1, Some(60)),
        ("rate certificate replay", certificate_replay, None),
        ("elliptic solver second order", solver_order, Some(10)),
        ("coefficient recovery round trip", recovery_round_trip, None),
        ("conjugate oracle equivalence", conjugate_equivalence, None),
        ("contraction and fitted rate", contraction, Some(600)),
        ("uniform small-ball dominance", small_ball_dominance, Some(120)),
        ("inconsistency example", inconsistency, Some(60)),
        ("stability reduction", stability_reduction, None),
        ("rate formula identities", rate_identities, None),
    ];
    let mut failed = 0;
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = run();
        let elapsed = start.elapsed();
        let o = within_budget(o, elapsed, budget.map(Duration::from_secs));
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {}: {} [{:.1}s] {}",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            name,
            elapsed.as_secs_f64(),
            o.detail
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}

fn figure1() -> Outcome {
    let ts = [2.5, 3.0, 4.0, 6.0];
    let rows = match figure1_table(1.0, &ts, SixthConstraint::Theorem) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for row in &rows {
        let want = (row.t - 2.0) / (2.0 * row.t - 3.0);
        worst = worst.max((row.kappa_cor - want).abs());
        ok &= (row.kappa_cor - want).abs() <= 1e-3;
        ok &= rate_opt_closed(row.t, 1.0).unwrap() == 0.5;
        let gap = row.kappa_opt - row.kappa_cor;
        ok &= (gap - 0.5 / (2.0 * row.t - 3.0)).abs() <= 1e-3;
        ok &= row.ordered();
    }
    ok &= rows.windows(2).all(|w| w[1].kappa_cor > w[0].kappa_cor);
    outcome(ok, format!("max |kappa_cor - (t-2)/(2t-3)| = {worst:.2e}"))
}

/// Independent evaluation of the eight rate inequalities.
fn replay_independently(c: &RateCertificate) -> bool {
    let (k, l, rho, e) = (c.kappa, c.problem.lambda, c.problem.rho, c.problem.e);
    let (p, eta, th) = (c.witness.p, c.witness.eta, c.witness.theta);
    let q = p / (p - 1.0);
    if (q - c.witness.q).abs() > 1e-9 * q || p < 1.0 || eta < 0.0 || th < 0.0 || k <= 0.0 {
        return false;
    }
    let sixth_lhs = match c.problem.form {
        SixthConstraint::Theorem => (eta * p / q - 0.5) / (2.0 - l * p),
        SixthConstraint::Corollary => (eta * p / q - 0.5) * l * p,
    };
    let pairs = [
        (0.5 + eta * p / q - k * l * p, 1.0 - 2.0 * k),
        (0.5 - eta + (1.0 - l) * q * th, 1.0 - 2.0 * k),
        (rho * k, e * th),
        (rho * k, 1.0 - 2.0 * k),
        (l * p, 2.0),
        (sixth_lhs, -k),
        ((1.0 - l) * q, e),
        (
            (0.5 - eta) * (1.0 + 1.0 / (e - (1.0 - l) * q)),
            (1.0 - 2.0 * k).max(th * e),
        ),
    ];
    pairs.iter().all(|(lhs, rhs)| rhs - lhs > 1e-9)
}

fn certificate_replay() -> Outcome {
    let general = [(0.2, 0.5, 2.0), (0.4, 1.0, 2.0), (0.6, 2.0, 1.5), (0.8, 0.3, 3.0), (0.9, 1.0, 1.0), (0.5, 4.0, 2.0)];
    let mut certs = Vec::new();
    for (l, rho, e) in general {
        match rate_general_optimize(l, rho, e, SixthConstraint::Theorem) {
            Ok(c) => certs.push(c),
            Err(err) => return outcome(false, format!("({l}, {rho}, {e}): {err}")),
        }
    }
    for (t, r) in [(2.5, 1.0), (3.0, 1.0), (4.0, 2.0), (6.0, 1.0)] {
        match rate_gaussian_case(t, r, SixthConstraint::Theorem) {
            Ok(c) => certs.push(c),
            Err(err) => return outcome(false, format!("gaussian t={t} r={r}: {err}")),
        }
    }
    let good = certs.iter().filter(|c| c.is_valid() && replay_independently(c)).count();
    outcome(good == certs.len(), format!("{good}/{} certificates replay", certs.len()))
}

fn solver_order() -> Outcome {
    use std::f64::consts::PI;
    let err = |m: usize| {
        let a = GridFunction::from_fn(m, |x| 1.0 + x).unwrap();
        let f = GridFunction::from_fn(m, |x| -PI * (PI * x).cos() + (1.0 + x) * PI * PI * (PI * x).sin()).unwrap();
        let exact = GridFunction::from_fn(m, |x| (PI * x).sin()).unwrap();
        solve_elliptic_1d(&a, &f).unwrap().sub(&exact).unwrap().sup_norm()
    };
    let ratio = err(256) / err(512);
    outcome((3.5..=4.5).contains(&ratio), format!("error ratio 256/512 = {ratio:.3}"))
}

fn recovery_round_trip() -> Outcome {
    let m = 2048;
    let f = GridFunction::constant(m, 1.0).unwrap();
    let mut coefficients = vec![GridFunction::from_fn(m, |x| 1.0 + x).unwrap()];
    let prior = UniformPrior::new(
        GammaLaw::power(0.5, 2.0, 16).unwrap(),
        0.5,
        BasisScaling::UnitHolder,
        GridFunction::constant(m, 1.0).unwrap(),
        Some(0.1),
    )
    .unwrap();
    let mut rng = rng_stream(41, 0);
    coefficients.extend((0..10).map(|_| prior.sample(&mut rng)));
    let mut worst: f64 = 0.0;
    for a in &coefficients {
        let p = solve_elliptic_1d(a, &f).unwrap();
        match recover_coefficient_1d(&p, &f, 0.05) {
            Ok(rec) => worst = worst.max(rec.coefficient.sub(a).unwrap().sup_norm()),
            Err(e) => return outcome(false, e.to_string()),
        }
    }
    outcome(worst <= 1e-3, format!("worst sup error over 11 coefficients = {worst:.2e}"))
}

fn conjugate_equivalence() -> Outcome {
    let (t, r, n, trunc) = (3.0, 1.0, 100u64, 20usize);
    let prior = GaussianPrior::new(t, trunc).unwrap();
    let scale = ScaleSpec::power(r, trunc).unwrap();
    let mut rng = rng_stream(51, 0);
    let truth = prior.sample(&mut rng);
    let xi = scale.sample_noise(trunc, &mut rng).unwrap();
    let y = &truth + &((1.0 / (n as f64).sqrt()) * &xi);
    let post = conjugate_posterior_diagonal(t, r, &y, n).unwrap();
    // precision form of the same posterior
    for (j, (m, v)) in post.mean.iter().zip(&post.variance).enumerate() {
        let k = (j + 1) as f64;
        let prec = k.powf(2.0 * t) + n as f64 * k.powf(2.0 * r);
        let mean = n as f64 * k.powf(2.0 * r) * y.coeffs()[j] / prec;
        if (v - 1.0 / prec).abs() > 1e-12 * v || (m - mean).abs() > 1e-12 * mean.abs().max(1e-300) {
            return outcome(false, format!("conjugate formula mismatch at mode {}", j + 1));
        }
    }
    let lik = SmallNoiseLikelihood::new(&y, n, &scale).unwrap();
    let cfg = PcnConfig::new(0.2, 200_000, 20_000).unwrap();
    let chain = pcn_sample(&prior, |a| lik.eval(a), cfg, &mut rng_stream(51, 1)).unwrap();
    let mut matched = 0;
    for j in 0..trunc {
        let xs: Vec<f64> = chain.states.iter().map(|s| s.coeffs()[j]).collect();
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        let se = batch_means_se(&xs, 50);
        if (m - post.mean[j]).abs() <= 3.0 * se {
            matched += 1;
        }
    }
    let dist = |a: &postcon_core::SpectralField| (a - &truth).norm_t(1.0, &scale).unwrap();
    let exact = DistanceSample::conjugate(&post, dist, 100_000, &mut rng_stream(51, 2)).unwrap();
    let is = ImportanceSample::draw(&prior, |a| lik.eval(a), dist, 400_000, 52).unwrap();
    let mut radii_ok = 0;
    for level in [0.1, 0.3, 0.5, 0.7, 0.9] {
        let radius = exact.quantile_radius(level);
        let (a, b) = (exact.ball_mass(radius), is.ball_mass(radius));
        if (a.mass - b.mass).abs() <= 3.0 * a.stderr.hypot(b.stderr) {
            radii_ok += 1;
        }
    }
    outcome(
        matched >= 19 && radii_ok == 5,
        format!(
            "pCN means {matched}/20 within 3 SE (acceptance {:.2}); IS vs conjugate MC {radii_ok}/5 radii (ESS {:.0})",
            chain.acceptance_rate,
            is.ess()
        ),
    )
}

fn conjugate_cfg(t: f64, seed: u64) -> ConjugateExperiment {
    ConjugateExperiment {
        t,
        r: 1.0,
        trunc: 256,
        n_grid: vec![10, 100, 1000, 10_000],
        eps: 0.5,
        level: 0.9,
        posterior_samples: 2000,
        replicates: 1,
        seed,
    }
}

fn contraction() -> Outcome {
    let mut monotone = 0;
    let cfg = ConjugateExperiment { replicates: 40, ..conjugate_cfg(3.0, 600) };
    let curve = match run_contraction_conjugate(&cfg) {
        Ok(c) => c,
        Err(e) => return outcome(false, e.to_string()),
    };
    for rep in 0..40 {
        let sub = postcon_core::consistency::ContractionCurve {
            rows: curve.rows.iter().filter(|r| r.replicate == rep).cloned().collect(),
            ..curve.clone()
        };
        if sub.mass_nondecreasing(3.0) {
            monotone += 1;
        }
    }
    let main_fit = fit_curve(&curve).map_or(f64::NAN, |f| f.kappa_hat);
    let mut ok = monotone >= 38 && (0.2333..=0.6).contains(&main_fit);
    let mut others = Vec::new();
    for t in [2.5, 4.0] {
        let cfg = ConjugateExperiment { replicates: 5, ..conjugate_cfg(t, 700) };
        let k = run_contraction_conjugate(&cfg).and_then(|c| fit_curve(&c)).map_or(f64::NAN, |f| f.kappa_hat);
        let cor = (t - 2.0) / (2.0 * t - 3.0);
        ok &= k >= cor - 0.1 && k <= 0.6;
        others.push(format!("t={t}: {k:.3} in [{:.3}, 0.6]", cor - 0.1));
    }
    outcome(
        ok,
        format!("{monotone}/40 seeds monotone; kappa_hat(t=3) = {main_fit:.3}; {}", others.join("; ")),
    )
}

fn small_ball_dominance() -> Outcome {
    let m = 64;
    let gammas: Vec<f64> = (1..=32).map(|i| 1.0 / (i * i) as f64).collect();
    let prior = UniformPrior::new(
        GammaLaw::explicit(gammas).unwrap(),
        0.5,
        BasisScaling::UnitHolder,
        GridFunction::constant(m, 0.0).unwrap(),
        None,
    )
    .unwrap();
    let truth_z = prior.sample_z(&mut rng_stream(71, 0));
    let eps = [0.5, 0.3, 0.2, 0.1];
    let est = small_ball_mc(
        |rng| {
            let z = prior.sample_z(rng);
            let d: Vec<f64> = z.iter().zip(&truth_z).map(|(a, b)| a - b).collect();
            prior.deviation(&d).holder_norm(0.5).unwrap()
        },
        &eps,
        1_000_000,
        72,
    )
    .unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for e in &est {
        let bound = prior.small_ball_lower(0.75, e.eps, &truth_z).unwrap();
        let upper = (e.estimate + 3.0 * e.stderr).ln();
        ok &= bound <= upper;
        parts.push(format!("eps {}: {bound:.1} <= {upper:.2}", e.eps));
    }
    outcome(ok, parts.join("; "))
}

fn inconsistency() -> Outcome {
    let ns = [100u64, 400, 1000];
    let zero: Vec<f64> = ns.iter().map(|&n| inconsistency_ratio(n, 0.5, default_k_max(n), None).unwrap()).collect();
    let mut ok = zero.iter().zip(ns).all(|(v, n)| *v <= -0.5 * (n as f64).sqrt());
    ok &= zero.windows(2).all(|w| w[1] < w[0]);
    let mut worst_count = 100;
    for &n in &ns {
        let held = (0..100u64)
            .filter(|&seed| {
                let mut rng = rng_stream(800 + seed, n);
                inconsistency_ratio(n, 0.5, default_k_max(n), Some(&mut rng)).unwrap() <= -0.5 * (n as f64).sqrt()
            })
            .count();
        worst_count = worst_count.min(held);
    }
    ok &= worst_count >= 95;
    outcome(
        ok,
        format!(
            "zero-noise log-ratios {:.1}, {:.1}, {:.1}; noisy bound held in at least {worst_count}/100 seeds",
            zero[0], zero[1], zero[2]
        ),
    )
}

fn stability_reduction() -> Outcome {
    let m = 512;
    let prior = UniformPrior::new(
        GammaLaw::power(0.5, 2.0, 16).unwrap(),
        0.5,
        BasisScaling::UnitHolder,
        GridFunction::constant(m, 1.0).unwrap(),
        Some(0.1),
    )
    .unwrap();
    let f = GridFunction::constant(m, 1.0).unwrap();
    let truths: Vec<Vec<f64>> = draw_z_pairs(&prior, 10, 90).into_iter().map(|p| p.0).collect();
    // corpus: every truth paired with fresh prior draws
    let mut pairs = draw_z_pairs(&prior, 40, 91);
    for (i, z) in truths.iter().enumerate() {
        pairs[i].0 = z.clone();
        pairs[10 + i].1 = z.clone();
    }
    let sweep = stability_sweep(&prior, &pairs, &f, 0.5).unwrap();
    let (sigma, eps) = (0.05, 0.1);
    let mut held = 0;
    let mut min_slack = f64::INFINITY;
    for (i, z) in truths.iter().enumerate() {
        let p = solve_elliptic_1d(&prior.field(z), &f).unwrap();
        let (x, y) = pointwise_data(&p, 1000, sigma, &mut rng_stream(92, i as u64));
        let chk =
            pushforward_reduction_check(&prior, z, &x, &y, sigma, &f, eps, Some(sweep.inverse_max), 20_000, 93 + i as u64)
                .unwrap();
        min_slack = min_slack.min(chk.slack);
        if chk.holds {
            held += 1;
        }
    }
    outcome(
        held == 10,
        format!("{held}/10 instances; M-hat {:.3}; smallest slack {min_slack:.4}", sweep.inverse_max),
    )
}

fn rate_identities() -> Outcome {
    let mut worst: f64 = 0.0;
    for i in 0..5 {
        for j in 0..5 {
            let beta = 0.1 + 0.225 * i as f64;
            let rho = 0.1 * 3f64.powi(j);
            let r = rate_large_data(beta, rho).unwrap();
            worst = worst.max((r.theorem_branches.1 - r.proof_branches.1).abs());
        }
    }
    let mut worst_ub: f64 = 0.0;
    for nu in [0.1, 0.25, 0.5, 0.75, 0.9] {
        let b = uniform_prior_branches(4.0, nu, 1.0, 1.0).unwrap();
        worst_ub = worst_ub.max((b.small_ball - 1.0 / (2.0 + uniform_prior_rho(nu).unwrap())).abs());
    }
    outcome(
        worst <= 1e-12 && worst_ub <= 1e-12,
        format!("large-data branch gap {worst:.1e}; uniform small-ball branch gap {worst_ub:.1e}"),
    )
}
