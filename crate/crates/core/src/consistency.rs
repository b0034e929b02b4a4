//! End-to-end contraction experiments, rate fits, the stability reduction
//! check and the two-atom inconsistency example.

use std::io::Write;

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{require, Error, Result};
use crate::forward::{inverse_stability_ratio, forward_stability_ratio, solve_elliptic_1d};
use crate::grid::GridFunction;
use crate::numerics::{fit_line, log_sum_exp, rng_stream, Rng};
use crate::posterior::{
    conjugate_posterior_diagonal, log_density_pointwise, pcn_sample, BallMassEstimate, DistanceSample,
    ImportanceSample, MassMethod, PcnConfig, SmallNoiseLikelihood,
};
use crate::priors::{GaussianPrior, LatentPrior, UniformPrior};
use crate::spectral::{ScaleSpec, SpectralField};

/// One `(n, replicate)` entry of a contraction curve.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractionRow {
    pub n: u64,
    pub replicate: usize,
    pub seed: u64,
    pub eps: f64,
    pub mass: BallMassEstimate,
    /// Smallest radius carrying posterior mass `level`.
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionCurve {
    pub kind: String,
    pub level: f64,
    pub rows: Vec<ContractionRow>,
}

impl ContractionCurve {
    /// True when the ball mass never drops by more than `k` combined
    /// standard errors from one `n` to the next, per replicate.
    pub fn mass_nondecreasing(&self, k: f64) -> bool {
        let reps: std::collections::BTreeSet<usize> = self.rows.iter().map(|r| r.replicate).collect();
        reps.into_iter().all(|rep| {
            let rows: Vec<&ContractionRow> = self.rows.iter().filter(|r| r.replicate == rep).collect();
            rows.windows(2).all(|w| {
                let se = w[0].mass.stderr.hypot(w[1].mass.stderr);
                w[1].mass.mass >= w[0].mass.mass - k * se
            })
        })
    }

    pub fn any_unreliable(&self) -> bool {
        self.rows.iter().any(|r| r.mass.unreliable)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "n,replicate,seed,eps,mass,stderr,ess,method,unreliable,radius")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                r.n,
                r.replicate,
                r.seed,
                r.eps,
                r.mass.mass,
                r.mass.stderr,
                r.mass.ess,
                r.mass.method.tag(),
                r.mass.unreliable as u8,
                r.radius
            )?;
        }
        Ok(())
    }
}

/// Posterior approximated either by weighted prior draws or by a chain.
#[derive(Debug, Clone)]
pub enum PosteriorSample {
    Weighted(ImportanceSample),
    Unweighted(DistanceSample),
}

impl PosteriorSample {
    pub fn ball_mass(&self, radius: f64) -> BallMassEstimate {
        match self {
            PosteriorSample::Weighted(s) => s.ball_mass(radius),
            PosteriorSample::Unweighted(s) => s.ball_mass(radius),
        }
    }

    pub fn quantile_radius(&self, level: f64) -> f64 {
        match self {
            PosteriorSample::Weighted(s) => s.quantile_radius(level),
            PosteriorSample::Unweighted(s) => s.quantile_radius(level),
        }
    }
}

/// Importance sampling with the prior as proposal; pCN when the ESS is
/// below the reliability threshold.
pub fn sample_posterior<P, L, D>(
    prior: &P,
    log_likelihood: L,
    distance: D,
    n_samples: usize,
    pcn: PcnConfig,
    seed: u64,
) -> Result<PosteriorSample>
where
    P: LatentPrior,
    L: Fn(&P::Sample) -> f64 + Sync,
    D: Fn(&P::Sample) -> f64 + Sync,
{
    let is = ImportanceSample::draw(prior, &log_likelihood, &distance, n_samples, seed)?;
    if is.ess() >= crate::posterior::MIN_ESS {
        return Ok(PosteriorSample::Weighted(is));
    }
    let mut rng = rng_stream(seed, u64::MAX);
    let chain = pcn_sample(prior, &log_likelihood, pcn, &mut rng)?;
    let d = chain.states.iter().map(&distance).collect();
    Ok(PosteriorSample::Unweighted(DistanceSample::new(d, MassMethod::Mcmc)?))
}

/// Gaussian prior `μ_j = j^{-t}`, noise `λ_j = j^{-r}`, small-noise data,
/// balls in `‖·‖₁`, masses from exact conjugate posterior draws.
#[derive(Debug, Clone, PartialEq)]
pub struct ConjugateExperiment {
    pub t: f64,
    pub r: f64,
    pub trunc: usize,
    pub n_grid: Vec<u64>,
    pub eps: f64,
    pub level: f64,
    pub posterior_samples: usize,
    pub replicates: usize,
    pub seed: u64,
}

fn check_grid(n_grid: &[u64]) -> Result<()> {
    require(!n_grid.is_empty(), || "empty n grid".into())?;
    require(n_grid[0] >= 1 && n_grid.windows(2).all(|w| w[1] > w[0]), || {
        "n grid must be positive and strictly increasing".into()
    })
}

/// Seed of replicate `rep` under base seed `seed`.
pub fn replicate_seed(seed: u64, rep: usize) -> u64 {
    seed.wrapping_add(rep as u64)
}

pub fn run_contraction_conjugate(cfg: &ConjugateExperiment) -> Result<ContractionCurve> {
    check_grid(&cfg.n_grid)?;
    require(cfg.level > 0.0 && cfg.level < 1.0, || "quantile level must lie in (0, 1)".into())?;
    let prior = GaussianPrior::new(cfg.t, cfg.trunc)?;
    let scale = ScaleSpec::power(cfg.r, cfg.trunc)?;
    let mut rows = Vec::new();
    for rep in 0..cfg.replicates.max(1) {
        let seed = replicate_seed(cfg.seed, rep);
        let truth = prior.sample(&mut rng_stream(seed, 0));
        for (i, &n) in cfg.n_grid.iter().enumerate() {
            let mut rng = rng_stream(seed, 1 + i as u64);
            let xi = scale.sample_noise(cfg.trunc, &mut rng)?;
            let y = &truth + &((1.0 / (n as f64).sqrt()) * &xi);
            let post = conjugate_posterior_diagonal(cfg.t, cfg.r, &y, n)?;
            let sample = DistanceSample::conjugate(
                &post,
                |a| (a - &truth).norm_t(1.0, &scale).unwrap_or(f64::INFINITY),
                cfg.posterior_samples,
                &mut rng,
            )?;
            rows.push(ContractionRow {
                n,
                replicate: rep,
                seed,
                eps: cfg.eps,
                mass: sample.ball_mass(cfg.eps),
                radius: sample.quantile_radius(cfg.level),
            });
        }
    }
    Ok(ContractionCurve { kind: format!("conjugate t={} r={}", cfg.t, cfg.r), level: cfg.level, rows })
}

/// Small-noise experiment for any prior on spectral fields (including a
/// point mass), with importance sampling and pCN fallback.
#[allow(clippy::too_many_arguments)]
pub fn run_contraction_small_noise<P>(
    prior: &P,
    truth: &SpectralField,
    scale: &ScaleSpec,
    n_grid: &[u64],
    eps: f64,
    level: f64,
    n_samples: usize,
    pcn: PcnConfig,
    seed: u64,
) -> Result<ContractionCurve>
where
    P: LatentPrior<Sample = SpectralField>,
{
    check_grid(n_grid)?;
    let trunc = truth.trunc();
    let mut rows = Vec::new();
    for (i, &n) in n_grid.iter().enumerate() {
        let mut rng = rng_stream(seed, 1 + i as u64);
        let xi = scale.sample_noise(trunc, &mut rng)?;
        let y = truth + &((1.0 / (n as f64).sqrt()) * &xi);
        let lik = SmallNoiseLikelihood::new(&y, n, scale)?;
        let post = sample_posterior(
            prior,
            |a| lik.eval(a),
            |a| (a - truth).norm_t(1.0, scale).unwrap_or(f64::INFINITY),
            n_samples,
            pcn,
            seed.wrapping_add(1000 + i as u64),
        )?;
        rows.push(ContractionRow {
            n,
            replicate: 0,
            seed,
            eps,
            mass: post.ball_mass(eps),
            radius: post.quantile_radius(level),
        });
    }
    Ok(ContractionCurve { kind: "small-noise".into(), level, rows })
}

/// Forward map observed pointwise.
#[derive(Debug, Clone)]
pub enum PointwiseForward {
    /// Regression: observe the coefficient itself.
    Identity,
    /// Observe the pressure `p(·; a)` for source `f`.
    Elliptic { source: GridFunction },
}

impl PointwiseForward {
    pub fn apply(&self, a: &GridFunction) -> Result<GridFunction> {
        match self {
            PointwiseForward::Identity => Ok(a.clone()),
            PointwiseForward::Elliptic { source } => solve_elliptic_1d(a, source),
        }
    }
}

/// Large-data experiment: equidistant design `x_i = i/(n+1)`, Gaussian
/// noise `σ`, uniform prior, balls in `L∞` on the coefficient.
#[derive(Debug, Clone)]
pub struct PointwiseExperiment {
    pub prior: UniformPrior,
    pub truth_z: Vec<f64>,
    pub forward: PointwiseForward,
    pub n_grid: Vec<u64>,
    pub sigma: f64,
    pub eps: f64,
    pub level: f64,
    pub n_samples: usize,
    pub pcn: PcnConfig,
    pub seed: u64,
}

/// Equidistant design and noisy observations of `G(a†)`.
pub fn pointwise_data(g_truth: &GridFunction, n: u64, sigma: f64, rng: &mut Rng) -> (Vec<f64>, Vec<f64>) {
    let x: Vec<f64> = (1..=n).map(|i| i as f64 / (n as f64 + 1.0)).collect();
    let y = x
        .iter()
        .map(|&xi| {
            let z: f64 = rng.sample(StandardNormal);
            g_truth.eval(xi) + sigma * z
        })
        .collect();
    (x, y)
}

pub fn run_contraction_pointwise(cfg: &PointwiseExperiment) -> Result<ContractionCurve> {
    check_grid(&cfg.n_grid)?;
    require(cfg.sigma > 0.0, || "noise level must be positive".into())?;
    require(cfg.truth_z.len() == cfg.prior.trunc(), || "truth has the wrong number of coefficients".into())?;
    let truth = cfg.prior.field(&cfg.truth_z);
    let g_truth = cfg.forward.apply(&truth)?;
    let mut rows = Vec::new();
    for (i, &n) in cfg.n_grid.iter().enumerate() {
        let (x, y) = pointwise_data(&g_truth, n, cfg.sigma, &mut rng_stream(cfg.seed, 1 + i as u64));
        let post = sample_posterior(
            &cfg.prior,
            |a| match cfg.forward.apply(a) {
                Ok(g) => log_density_pointwise(&g, &x, &y, cfg.sigma).unwrap_or(f64::NEG_INFINITY),
                Err(_) => f64::NEG_INFINITY,
            },
            |a| a.sub(&truth).map_or(f64::INFINITY, |d| d.sup_norm()),
            cfg.n_samples,
            cfg.pcn,
            cfg.seed.wrapping_add(1000 + i as u64),
        )?;
        rows.push(ContractionRow {
            n,
            replicate: 0,
            seed: cfg.seed,
            eps: cfg.eps,
            mass: post.ball_mass(cfg.eps),
            radius: post.quantile_radius(cfg.level),
        });
    }
    let kind = match cfg.forward {
        PointwiseForward::Identity => "large-data regression",
        PointwiseForward::Elliptic { .. } => "elliptic",
    };
    Ok(ContractionCurve { kind: kind.into(), level: cfg.level, rows })
}

/// Least-squares rate `ε_n ≈ C n^{-κ̂}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub kappa_hat: f64,
    pub intercept: f64,
    pub residual: f64,
    pub n_min: u64,
    pub n_max: u64,
}

pub fn fit_rate(ns: &[u64], radii: &[f64]) -> Result<RateFit> {
    require(ns.len() == radii.len(), || "n and radius lists differ in length".into())?;
    let pts: Vec<(f64, f64)> = ns
        .iter()
        .zip(radii)
        .filter(|(_, r)| **r > 0.0 && r.is_finite())
        .map(|(n, r)| ((*n as f64).ln(), r.ln()))
        .collect();
    require(pts.len() >= 4, || format!("{} usable points, need at least 4", pts.len()))?;
    let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let line = fit_line(&x, &y);
    Ok(RateFit {
        kappa_hat: -line.slope,
        intercept: line.intercept,
        residual: line.residual,
        n_min: *ns.iter().min().unwrap(),
        n_max: *ns.iter().max().unwrap(),
    })
}

/// Rate fit over the per-`n` mean log-radius of a curve.
pub fn fit_curve(curve: &ContractionCurve) -> Result<RateFit> {
    let mut ns: Vec<u64> = curve.rows.iter().map(|r| r.n).collect();
    ns.sort_unstable();
    ns.dedup();
    let radii: Vec<f64> = ns
        .iter()
        .map(|n| {
            let logs: Vec<f64> = curve.rows.iter().filter(|r| r.n == *n).map(|r| r.radius.ln()).collect();
            (logs.iter().sum::<f64>() / logs.len() as f64).exp()
        })
        .collect();
    fit_rate(&ns, &radii)
}

/// Rate in `‖·‖_r` implied by a rate in `‖·‖₁` and a bound in `‖·‖_s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormLift {
    /// Interpolation exponent `λ = (s − r)/(s − 1)`.
    pub lambda: f64,
    pub rate: f64,
}

pub fn stronger_norm_lift(kappa: f64, s: f64, r: f64) -> Result<NormLift> {
    require(s > 1.0, || format!("s = {s} must exceed 1"))?;
    require((1.0..=s).contains(&r), || format!("target index r = {r} outside [1, {s}]"))?;
    let lambda = (s - r) / (s - 1.0);
    Ok(NormLift { lambda, rate: kappa * lambda })
}

/// Inverse and forward stability ratios over pairs of prior draws.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilitySweep {
    pub forward: Vec<f64>,
    pub inverse: Vec<f64>,
    pub forward_max: f64,
    pub inverse_max: f64,
}

pub fn draw_z_pairs(prior: &UniformPrior, count: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut rng = rng_stream(seed, 0);
    (0..count).map(|_| (prior.sample_z(&mut rng), prior.sample_z(&mut rng))).collect()
}

pub fn stability_sweep(
    prior: &UniformPrior,
    pairs: &[(Vec<f64>, Vec<f64>)],
    source: &GridFunction,
    alpha: f64,
) -> Result<StabilitySweep> {
    require(!pairs.is_empty(), || "empty stability corpus".into())?;
    let mut forward = Vec::with_capacity(pairs.len());
    let mut inverse = Vec::with_capacity(pairs.len());
    for (z1, z2) in pairs {
        let a1 = prior.field(z1);
        let a2 = prior.field(z2);
        forward.push(forward_stability_ratio(&a1, &a2, source, alpha)?);
        inverse.push(inverse_stability_ratio(&a1, &a2, source)?);
    }
    let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    Ok(StabilitySweep { forward_max: max(&forward), inverse_max: max(&inverse), forward, inverse })
}

/// Masses of the coefficient ball and of the pressure ball of radius
/// `eps/M` under the same posterior sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReductionCheck {
    pub lhs: BallMassEstimate,
    pub rhs: BallMassEstimate,
    /// Stability constant used for the pressure radius.
    pub m: f64,
    pub slack: f64,
    pub holds: bool,
}

/// `μ^y(B_ε^{L∞}(a†)) ≥ μ^y(B_{ε/M}^{C²}(p†))` with `M = M̂·‖a†‖_{C¹}`,
/// where `M̂` is the corpus maximum of the inverse stability ratio.
#[allow(clippy::too_many_arguments)]
pub fn pushforward_reduction_check(
    prior: &UniformPrior,
    truth_z: &[f64],
    x: &[f64],
    y: &[f64],
    sigma: f64,
    source: &GridFunction,
    eps: f64,
    m_hat: Option<f64>,
    n_samples: usize,
    seed: u64,
) -> Result<ReductionCheck> {
    let m_hat = m_hat.ok_or_else(|| Error::Precondition("run a stability sweep to obtain M-hat first".into()))?;
    require(m_hat > 0.0 && m_hat.is_finite(), || "stability constant must be positive".into())?;
    require(eps >= 0.0, || "radius must be nonnegative".into())?;
    let truth = prior.field(truth_z);
    let p_truth = solve_elliptic_1d(&truth, source)?;
    let m = m_hat * truth.holder_norm(1.0)?;
    const CHUNK: usize = 1 << 10;
    let parts: Vec<Result<Vec<(f64, f64, f64)>>> = (0..n_samples.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut rng = rng_stream(seed, c as u64);
            (0..CHUNK.min(n_samples - c * CHUNK))
                .map(|_| {
                    let a = prior.sample(&mut rng);
                    let p = solve_elliptic_1d(&a, source)?;
                    let ll = log_density_pointwise(&p, x, y, sigma)?;
                    Ok((ll, a.sub(&truth)?.sup_norm(), p.sub(&p_truth)?.c2_norm()))
                })
                .collect()
        })
        .collect();
    let mut draws = Vec::with_capacity(n_samples);
    for part in parts {
        draws.extend(part?);
    }
    let log_w: Vec<f64> = draws.iter().map(|d| d.0).collect();
    let coef = ImportanceSample::from_log_weights(log_w.clone(), draws.iter().map(|d| d.1).collect())?;
    let pres = ImportanceSample::from_log_weights(log_w, draws.iter().map(|d| d.2).collect())?;
    let lhs = coef.ball_mass(eps);
    let rhs = pres.ball_mass(eps / m);
    let slack = lhs.mass - rhs.mass;
    Ok(ReductionCheck {
        lhs,
        rhs,
        m,
        slack,
        holds: slack >= -3.0 * lhs.stderr.hypot(rhs.stderr),
    })
}

/// Prior atoms `k ≤ k_max` must reach past `√n`.
pub fn min_k_max(n: u64) -> u64 {
    (n as f64).sqrt().ceil() as u64 + 10
}

/// Default truncation `⌈√n⌉ + 50`.
pub fn default_k_max(n: u64) -> u64 {
    (n as f64).sqrt().ceil() as u64 + 50
}

/// `log μ^y(A) − log μ^y(A^c)` for the two-atom-family prior on `R²`
/// with truth `(0, 0)`, `n` observations of the first coordinate and
/// `⌊n^θ⌋` of the second. `noise = None` sets every noise draw to zero.
pub fn inconsistency_ratio(n: u64, theta: f64, k_max: u64, noise: Option<&mut Rng>) -> Result<f64> {
    require(n >= 1, || "n must be at least 1".into())?;
    require(theta > 0.0 && theta < 1.0, || format!("theta = {theta} outside (0, 1)"))?;
    require(k_max >= min_k_max(n), || {
        format!("k_max = {k_max} must be at least ceil(sqrt(n)) + 10 = {}", min_k_max(n))
    })?;
    let m = (n as f64).powf(theta).floor() as u64;
    let (xi, xi_t): (Vec<f64>, Vec<f64>) = match noise {
        Some(rng) => (
            (0..n).map(|_| rng.sample(StandardNormal)).collect(),
            (0..m).map(|_| rng.sample(StandardNormal)).collect(),
        ),
        None => (vec![0.0; n as usize], vec![0.0; m as usize]),
    };
    // Σ_j (u − ξ_j)² = n u² − 2u Σξ + Σξ²
    let (s1, q1) = (xi.iter().sum::<f64>(), xi.iter().map(|v| v * v).sum::<f64>());
    let (s2, q2) = (xi_t.iter().sum::<f64>(), xi_t.iter().map(|v| v * v).sum::<f64>());
    let nf = n as f64;
    let mf = m as f64;
    let sq1 = |u: f64| nf * u * u - 2.0 * u * s1 + q1;
    let sq2 = |v: f64| mf * v * v - 2.0 * v * s2 + q2;
    let ks = 1..=k_max;
    let num: Vec<f64> = ks
        .clone()
        .map(|k| {
            let k = k as f64;
            -0.5 * sq1(1.0 / k.sqrt()) - 0.5 * sq2(0.0) - 2.0 * k * k
        })
        .collect();
    let den: Vec<f64> = ks
        .map(|k| {
            let k = k as f64;
            -0.5 * sq1(0.5 / k.sqrt()) - 0.5 * sq2(1.0) - k * k
        })
        .collect();
    Ok(log_sum_exp(&num) - log_sum_exp(&den))
}
