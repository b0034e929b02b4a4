//! Monte Carlo experiment commands.

use std::path::Path;

use postcon_core::consistency::{
    draw_z_pairs, fit_curve, inconsistency_ratio, min_k_max, pointwise_data, pushforward_reduction_check,
    run_contraction_conjugate, run_contraction_pointwise, stability_sweep, ConjugateExperiment, ContractionCurve,
    PointwiseExperiment, PointwiseForward, RateFit,
};
use postcon_core::forward::solve_elliptic_1d;
use postcon_core::numerics::rng_stream;
use postcon_core::posterior::PcnConfig;
use postcon_core::priors::{small_ball_mc, BasisScaling, LatentPrior, PriorConfig, PriorSpec};
use postcon_core::rates::{rate_opt_closed, rate_small_ball_closed};
use postcon_core::GridFunction;
use serde::{Deserialize, Serialize};

use crate::output::{load_config, to_toml, Artifacts, CliError};
use crate::plot::{Plot, Series, Style};
use crate::{ContractArgs, EllipticArgs, InconsistencyArgs, SmallBallArgs, Status};

fn curve_csv(curve: &ContractionCurve) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    curve.write_csv(&mut buf)?;
    Ok(buf)
}

/// Per-`n` geometric mean of the quantile radii.
fn mean_radii(curve: &ContractionCurve) -> Vec<(f64, f64)> {
    let mut ns: Vec<u64> = curve.rows.iter().map(|r| r.n).collect();
    ns.dedup();
    ns.iter()
        .map(|n| {
            let logs: Vec<f64> = curve.rows.iter().filter(|r| r.n == *n).map(|r| r.radius.ln()).collect();
            (*n as f64, (logs.iter().sum::<f64>() / logs.len() as f64).exp())
        })
        .collect()
}

fn radius_plot(title: String, curve: &ContractionCurve, fit: Option<&RateFit>) -> Plot {
    let points = mean_radii(curve);
    let mut series = vec![Series::new(format!("radius (mass {})", curve.level), points.clone(), Style::Points)];
    if let (Some(f), Some(first), Some(last)) = (fit, points.first(), points.last()) {
        let line = |n: f64| (n, (f.intercept - f.kappa_hat * n.ln()).exp());
        series.push(Series::new(format!("fit kappa = {:.3}", f.kappa_hat), vec![line(first.0), line(last.0)], Style::Line));
    }
    Plot { title, x_label: "n".into(), y_label: "posterior radius".into(), log_x: true, log_y: true, series }
}

fn fit_csv(fit: &RateFit, lower: f64, upper: f64) -> String {
    format!(
        "kappa_hat,intercept,residual,n_min,n_max,sandwich_lower,sandwich_upper\n{},{},{},{},{},{},{}\n",
        fit.kappa_hat, fit.intercept, fit.residual, fit.n_min, fit.n_max, lower, upper
    )
}

fn require(cond: bool, msg: &str) -> Result<(), CliError> {
    if cond {
        Ok(())
    } else {
        Err(CliError::Config(msg.into()))
    }
}

// ---------------------------------------------------------------- contract

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractFile {
    preset: Option<String>,
    t: Option<f64>,
    r: Option<f64>,
    trunc: Option<usize>,
    n_grid: Option<Vec<u64>>,
    eps: Option<f64>,
    level: Option<f64>,
    samples: Option<usize>,
    replicates: Option<usize>,
}

#[derive(Debug, Serialize)]
struct ContractSettings {
    t: f64,
    r: f64,
    trunc: usize,
    n_grid: Vec<u64>,
    eps: f64,
    level: f64,
    samples: usize,
    replicates: usize,
    seed: u64,
}

pub const CONTRACT_PRESETS: [(&str, f64); 3] = [("conjugate-t2.5", 2.5), ("conjugate-t3", 3.0), ("conjugate-t4", 4.0)];

pub fn run_contract(args: &ContractArgs, out: &Path) -> Result<Status, CliError> {
    let file: ContractFile = load_config(args.config.as_deref())?;
    let preset = args.preset.clone().or(file.preset);
    let preset_t = match preset.as_deref() {
        None => 3.0,
        Some(name) => CONTRACT_PRESETS
            .iter()
            .find(|p| p.0 == name)
            .map(|p| p.1)
            .ok_or_else(|| CliError::Config(format!("unknown preset '{name}'")))?,
    };
    let s = ContractSettings {
        t: args.t.or(file.t).unwrap_or(preset_t),
        r: args.r.or(file.r).unwrap_or(1.0),
        trunc: args.trunc.or(file.trunc).unwrap_or(256),
        n_grid: args.n_grid.clone().or(file.n_grid).unwrap_or_else(|| vec![10, 100, 1000, 10_000]),
        eps: args.eps.or(file.eps).unwrap_or(0.5),
        level: args.level.or(file.level).unwrap_or(0.9),
        samples: args.samples.or(file.samples).unwrap_or(2000),
        replicates: args.replicates.or(file.replicates).unwrap_or(1),
        seed: args.seed,
    };
    require(s.replicates >= 1, "replicates must be at least 1")?;
    let exp = ConjugateExperiment {
        t: s.t,
        r: s.r,
        trunc: s.trunc,
        n_grid: s.n_grid.clone(),
        eps: s.eps,
        level: s.level,
        posterior_samples: s.samples,
        replicates: s.replicates,
        seed: s.seed,
    };
    let curve = run_contraction_conjugate(&exp)?;
    let seeds: Vec<u64> = (0..s.replicates).map(|i| postcon_core::consistency::replicate_seed(s.seed, i)).collect();
    let art = Artifacts::new(out, "contract", &to_toml(&s)?, &seeds)?;
    art.write_csv("contract.csv", &curve_csv(&curve)?)?;

    let fit = fit_curve(&curve).ok();
    let lower = rate_small_ball_closed(s.t, s.r).map_or(0.0, |k| k - 0.1);
    let upper = rate_opt_closed(s.t, s.r).map_or(f64::INFINITY, |k| k + 0.1);
    if let Some(f) = &fit {
        art.write_csv("contract-fit.csv", fit_csv(f, lower, upper).as_bytes())?;
    }
    let title = format!("Conjugate contraction, t = {}, r = {}", s.t, s.r);
    art.write_svg("contract.svg", &radius_plot(title, &curve, fit.as_ref()).to_svg())?;

    let monotone = curve.mass_nondecreasing(3.0);
    let in_sandwich = fit.as_ref().is_none_or(|f| f.kappa_hat >= lower && f.kappa_hat <= upper);
    match &fit {
        Some(f) => println!("kappa_hat = {:.4} (sandwich [{lower:.4}, {upper:.4}])", f.kappa_hat),
        None => println!("kappa_hat not fitted (fewer than 4 usable n values)"),
    }
    Ok(summarize(
        monotone && in_sandwich,
        curve.any_unreliable(),
        &format!("mass nondecreasing: {monotone}; kappa_hat in sandwich: {in_sandwich}"),
        art.hash(),
    ))
}

fn summarize(pass: bool, unreliable: bool, detail: &str, hash: &str) -> Status {
    let status = if unreliable {
        Status::Inconclusive
    } else if pass {
        Status::Pass
    } else {
        Status::Violation
    };
    let word = match status {
        Status::Pass => "PASS",
        Status::Violation => "FAIL",
        Status::Inconclusive => "INCONCLUSIVE",
    };
    println!("{word}: {detail} (config {hash})");
    status
}

// ---------------------------------------------------------------- elliptic

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EllipticFile {
    prior: Option<PriorConfig>,
    mesh: Option<usize>,
    forward: Option<String>,
    n_grid: Option<Vec<u64>>,
    sigma: Option<f64>,
    eps: Option<f64>,
    level: Option<f64>,
    samples: Option<usize>,
    pcn_beta: Option<f64>,
    pcn_steps: Option<usize>,
    pcn_burn_in: Option<usize>,
    stability_pairs: Option<usize>,
    reduction_samples: Option<usize>,
}

#[derive(Debug, Serialize)]
struct EllipticSettings {
    mesh: usize,
    forward: String,
    n_grid: Vec<u64>,
    sigma: f64,
    eps: f64,
    level: f64,
    samples: usize,
    pcn_beta: f64,
    pcn_steps: usize,
    pcn_burn_in: usize,
    stability_pairs: usize,
    reduction_samples: usize,
    seed: u64,
    prior: PriorConfig,
}

fn default_uniform_prior() -> PriorConfig {
    PriorConfig {
        kind: "uniform".into(),
        t: None,
        gammas: None,
        gamma_decay: Some(2.0),
        gamma_scale: Some(0.5),
        beta: Some(0.5),
        basis: BasisScaling::UnitHolder,
        mean: Some(1.0),
        a_min: Some(0.1),
        trunc: Some(16),
    }
}

pub fn run_elliptic(args: &EllipticArgs, out: &Path) -> Result<Status, CliError> {
    let file: EllipticFile = load_config(args.config.as_deref())?;
    let s = EllipticSettings {
        mesh: args.mesh.or(file.mesh).unwrap_or(128),
        forward: args.forward.clone().or(file.forward).unwrap_or_else(|| "elliptic".into()),
        n_grid: args.n_grid.clone().or(file.n_grid).unwrap_or_else(|| vec![10, 100, 1000, 10_000]),
        sigma: args.sigma.or(file.sigma).unwrap_or(0.01),
        eps: args.eps.or(file.eps).unwrap_or(0.1),
        level: args.level.or(file.level).unwrap_or(0.9),
        samples: args.samples.or(file.samples).unwrap_or(20_000),
        pcn_beta: file.pcn_beta.unwrap_or(0.3),
        pcn_steps: file.pcn_steps.unwrap_or(20_000),
        pcn_burn_in: file.pcn_burn_in.unwrap_or(2_000),
        stability_pairs: file.stability_pairs.unwrap_or(20),
        reduction_samples: file.reduction_samples.unwrap_or(20_000),
        seed: args.seed,
        prior: file.prior.unwrap_or_else(default_uniform_prior),
    };
    let forward = match s.forward.as_str() {
        "elliptic" => PointwiseForward::Elliptic { source: GridFunction::constant(s.mesh, 1.0)? },
        "identity" => PointwiseForward::Identity,
        other => return Err(CliError::Config(format!("forward must be 'elliptic' or 'identity', got '{other}'"))),
    };
    let PriorSpec::Uniform(prior) = PriorSpec::from_config(&s.prior, s.mesh)? else {
        return Err(CliError::Config("the elliptic experiment needs a uniform prior".into()));
    };
    let truth_z = prior.sample_z(&mut rng_stream(s.seed, 0));
    let exp = PointwiseExperiment {
        prior: prior.clone(),
        truth_z: truth_z.clone(),
        forward: forward.clone(),
        n_grid: s.n_grid.clone(),
        sigma: s.sigma,
        eps: s.eps,
        level: s.level,
        n_samples: s.samples,
        pcn: PcnConfig::new(s.pcn_beta, s.pcn_steps, s.pcn_burn_in)?,
        seed: s.seed,
    };
    let curve = run_contraction_pointwise(&exp)?;
    let art = Artifacts::new(out, "elliptic", &to_toml(&s)?, &[s.seed])?;
    art.write_csv("elliptic.csv", &curve_csv(&curve)?)?;
    let fit = fit_curve(&curve).ok();
    if let Some(f) = &fit {
        art.write_csv("elliptic-fit.csv", fit_csv(f, f64::NAN, f64::NAN).as_bytes())?;
        println!("kappa_hat = {:.4}", f.kappa_hat);
    }
    let title = format!("{} contraction in sup norm", curve.kind);
    art.write_svg("elliptic.svg", &radius_plot(title, &curve, fit.as_ref()).to_svg())?;

    let monotone = curve.mass_nondecreasing(3.0);
    let mut reduction_ok = true;
    let mut detail = format!("mass nondecreasing: {monotone}");
    if let PointwiseForward::Elliptic { source } = &forward {
        let mut pairs = draw_z_pairs(&prior, s.stability_pairs.max(1), s.seed.wrapping_add(1));
        pairs[0].0 = truth_z.clone();
        let sweep = stability_sweep(&prior, &pairs, source, prior.beta())?;
        let mut csv = String::from("pair,forward_ratio,inverse_ratio\n");
        for (i, (f, inv)) in sweep.forward.iter().zip(&sweep.inverse).enumerate() {
            csv.push_str(&format!("{i},{f},{inv}\n"));
        }
        art.write_csv("elliptic-stability.csv", csv.as_bytes())?;

        let n = *s.n_grid.last().unwrap();
        let p_truth = solve_elliptic_1d(&prior.field(&truth_z), source)?;
        let (x, y) = pointwise_data(&p_truth, n, s.sigma, &mut rng_stream(s.seed, 1 + s.n_grid.len() as u64));
        let chk = pushforward_reduction_check(
            &prior,
            &truth_z,
            &x,
            &y,
            s.sigma,
            source,
            s.eps,
            Some(sweep.inverse_max),
            s.reduction_samples,
            s.seed.wrapping_add(2),
        )?;
        art.write_csv(
            "elliptic-reduction.csv",
            format!(
                "n,eps,lhs,lhs_stderr,rhs,rhs_stderr,m,slack,holds\n{n},{},{},{},{},{},{},{},{}\n",
                s.eps, chk.lhs.mass, chk.lhs.stderr, chk.rhs.mass, chk.rhs.stderr, chk.m, chk.slack, chk.holds as u8
            )
            .as_bytes(),
        )?;
        reduction_ok = chk.holds;
        detail.push_str(&format!("; reduction holds: {} (slack {:.4}, M {:.3})", chk.holds, chk.slack, chk.m));
    }
    Ok(summarize(monotone && reduction_ok, curve.any_unreliable(), &detail, art.hash()))
}

// ----------------------------------------------------------- inconsistency

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InconsistencyFile {
    n_grid: Option<Vec<u64>>,
    theta: Option<f64>,
    zero_noise: Option<bool>,
    seeds: Option<usize>,
    k_max_extra: Option<u64>,
}

#[derive(Debug, Serialize)]
struct InconsistencySettings {
    n_grid: Vec<u64>,
    theta: f64,
    zero_noise: bool,
    seeds: usize,
    k_max_extra: u64,
    seed: Option<u64>,
}

pub fn run_inconsistency(args: &InconsistencyArgs, out: &Path) -> Result<Status, CliError> {
    let file: InconsistencyFile = load_config(args.config.as_deref())?;
    let zero_noise = args.zero_noise || file.zero_noise.unwrap_or(false);
    let s = InconsistencySettings {
        n_grid: args.n_grid.clone().or(file.n_grid).unwrap_or_else(|| vec![100, 400, 1000]),
        theta: args.theta.or(file.theta).unwrap_or(0.5),
        zero_noise,
        seeds: if zero_noise { 0 } else { args.seeds.or(file.seeds).unwrap_or(100) },
        k_max_extra: args.k_max_extra.or(file.k_max_extra).unwrap_or(50),
        seed: args.seed,
    };
    require(!s.n_grid.is_empty(), "empty n grid")?;
    require(s.n_grid.windows(2).all(|w| w[1] > w[0]), "n grid must be strictly increasing")?;
    require(s.k_max_extra >= 10, "k_max_extra must be at least 10")?;
    let base = match (zero_noise, s.seed) {
        (true, _) => 0,
        (false, Some(seed)) => seed,
        (false, None) => return Err(CliError::Config("--seed is required unless --zero-noise is set".into())),
    };
    require(zero_noise || s.seeds >= 1, "need at least one noise seed")?;
    let seeds: Vec<u64> = (0..s.seeds as u64).map(|i| base + i).collect();

    let mut csv = String::from("n,seed,k_max,log_ratio,bound,holds,log_tail_bound\n");
    let mut per_n = Vec::new();
    let mut ok = true;
    for &n in &s.n_grid {
        let k_max = min_k_max(n) - 10 + s.k_max_extra;
        let bound = -0.5 * (n as f64).sqrt();
        let tail = -((k_max * k_max) as f64);
        let values: Vec<(Option<u64>, f64)> = if zero_noise {
            vec![(None, inconsistency_ratio(n, s.theta, k_max, None)?)]
        } else {
            seeds
                .iter()
                .map(|&sd| Ok((Some(sd), inconsistency_ratio(n, s.theta, k_max, Some(&mut rng_stream(sd, n)))?)))
                .collect::<Result<_, CliError>>()?
        };
        let held = values.iter().filter(|v| v.1 <= bound).count();
        for (sd, v) in &values {
            let sd = sd.map_or(String::new(), |x| x.to_string());
            csv.push_str(&format!("{n},{sd},{k_max},{v},{bound},{},{tail}\n", (*v <= bound) as u8));
        }
        let mut sorted: Vec<f64> = values.iter().map(|v| v.1).collect();
        sorted.sort_by(f64::total_cmp);
        let median = sorted[sorted.len() / 2];
        let frac = held as f64 / values.len() as f64;
        ok &= if zero_noise { held == values.len() } else { frac >= 0.95 };
        println!("n = {n:>6}: log-ratio {median:>10.3} (median), bound {bound:>8.3}, held {held}/{}", values.len());
        per_n.push((n as f64, median, -bound));
    }
    if zero_noise {
        let decreasing = per_n.windows(2).all(|w| w[1].1 < w[0].1);
        ok &= decreasing;
    }
    let art = Artifacts::new(out, "inconsistency", &to_toml(&s)?, &seeds)?;
    art.write_csv("inconsistency.csv", csv.as_bytes())?;
    let plot = Plot {
        title: "Posterior odds of the wrong set".into(),
        x_label: "n".into(),
        y_label: "-log ratio".into(),
        log_x: true,
        log_y: true,
        series: vec![
            Series::new("-log ratio (median)", per_n.iter().map(|p| (p.0, -p.1)).collect(), Style::Points),
            Series::new("0.5 sqrt(n)", per_n.iter().map(|p| (p.0, p.2)).collect(), Style::Dashed),
        ],
    };
    art.write_svg("inconsistency.svg", &plot.to_svg())?;
    let detail = if zero_noise {
        "zero-noise log-ratios below -0.5 sqrt(n) and strictly decreasing".to_string()
    } else {
        "bound -0.5 sqrt(n) held in at least 95% of seeds at every n".to_string()
    };
    Ok(summarize(ok, false, &detail, art.hash()))
}

// --------------------------------------------------------------- smallball

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmallBallFile {
    prior: Option<PriorConfig>,
    mesh: Option<usize>,
    eps: Option<Vec<f64>>,
    samples: Option<usize>,
    nu: Option<f64>,
}

#[derive(Debug, Serialize)]
struct SmallBallSettings {
    mesh: usize,
    eps: Vec<f64>,
    samples: usize,
    nu: Option<f64>,
    seed: u64,
    prior: PriorConfig,
}

pub fn run_smallball(args: &SmallBallArgs, out: &Path) -> Result<Status, CliError> {
    let file: SmallBallFile = load_config(args.config.as_deref())?;
    let s = SmallBallSettings {
        mesh: args.mesh.or(file.mesh).unwrap_or(64),
        eps: args.eps.clone().or(file.eps).unwrap_or_else(|| vec![0.5, 0.3, 0.2, 0.1]),
        samples: args.samples.or(file.samples).unwrap_or(100_000),
        nu: args.nu.or(file.nu),
        seed: args.seed,
        prior: file.prior.unwrap_or_else(|| PriorConfig {
            gamma_decay: Some(2.0),
            gamma_scale: Some(1.0),
            a_min: None,
            mean: Some(0.0),
            trunc: Some(32),
            ..default_uniform_prior()
        }),
    };
    require(!s.eps.is_empty(), "empty eps grid")?;
    let mut eps = s.eps.clone();
    eps.sort_by(|a, b| b.total_cmp(a));
    let spec = PriorSpec::from_config(&s.prior, s.mesh)?;
    let (estimates, bounds): (Vec<_>, Vec<Option<f64>>) = match &spec {
        PriorSpec::Uniform(prior) => {
            let truth_z = prior.sample_z(&mut rng_stream(s.seed, u64::MAX));
            let est = small_ball_mc(
                |rng| {
                    let z = prior.sample_z(rng);
                    let d: Vec<f64> = z.iter().zip(&truth_z).map(|(a, b)| a - b).collect();
                    prior.deviation(&d).holder_norm(prior.beta()).unwrap_or(f64::INFINITY)
                },
                &eps,
                s.samples,
                s.seed,
            )?;
            let nu = s.nu.unwrap_or(0.5 * (prior.gammas().nu_star() + 1.0));
            let bounds = eps
                .iter()
                .map(|e| prior.small_ball_lower(nu, *e, &truth_z).map(Some))
                .collect::<Result<_, _>>()?;
            (est, bounds)
        }
        PriorSpec::Gaussian(prior) => {
            let est = small_ball_mc(|rng| prior.sample(rng).norm_0(), &eps, s.samples, s.seed)?;
            (est, vec![None; eps.len()])
        }
    };
    let mut csv = String::from("eps,estimate,stderr,analytic_bound,n_samples,seed\n");
    let mut ok = true;
    for (e, b) in estimates.iter().zip(&bounds) {
        let b_str = b.map_or(String::new(), |v| v.to_string());
        csv.push_str(&format!("{},{},{},{b_str},{},{}\n", e.eps, e.estimate, e.stderr, e.n_samples, s.seed));
        if let Some(b) = b {
            ok &= *b <= (e.estimate + 3.0 * e.stderr).ln();
        }
        println!("eps {:>8}: estimate {:.4e} +- {:.1e}, analytic log bound {b_str}", e.eps, e.estimate, e.stderr);
    }
    ok &= estimates.windows(2).all(|w| w[1].estimate <= w[0].estimate);
    let art = Artifacts::new(out, "smallball", &to_toml(&s)?, &[s.seed])?;
    art.write_csv("smallball.csv", csv.as_bytes())?;
    let plot = Plot {
        title: "Small-ball probabilities".into(),
        x_label: "eps".into(),
        y_label: "-log probability".into(),
        log_x: true,
        log_y: true,
        series: vec![
            Series::new(
                "Monte Carlo",
                estimates.iter().filter(|e| !e.no_hits).map(|e| (e.eps, -e.estimate.ln())).collect(),
                Style::Points,
            ),
            Series::new(
                "analytic bound",
                estimates.iter().zip(&bounds).filter_map(|(e, b)| b.map(|b| (e.eps, -b))).collect(),
                Style::Line,
            ),
        ],
    };
    art.write_svg("smallball.svg", &plot.to_svg())?;
    let unreliable = estimates.iter().any(|e| e.no_hits);
    Ok(summarize(ok, unreliable, "analytic bound below MC estimate + 3 SE; estimates monotone in eps", art.hash()))
}
