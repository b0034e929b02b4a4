//! Posterior log-densities relative to the prior, the conjugate diagonal
//! posterior, pCN and importance-sampling ball-mass estimators.

use std::io::Write;

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{require, Error, Result};
use crate::grid::GridFunction;
use crate::numerics::{batch_means_se, rng_stream, Rng};
use crate::priors::LatentPrior;
use crate::spectral::{ScaleSpec, SpectralField};

/// `−(n/2)‖a‖₁² + n⟨a, y⟩₁`.
pub fn log_density_small_noise(a: &SpectralField, y: &SpectralField, n: u64, scale: &ScaleSpec) -> Result<f64> {
    require(a.trunc() == y.trunc(), || {
        format!("truncations {} and {} differ", a.trunc(), y.trunc())
    })?;
    let n = n as f64;
    Ok(-0.5 * n * a.norm_sq_t(1.0, scale)? + n * a.inner_t(y, 1.0, scale)?)
}

/// The same density written around the truth:
/// `−(n/2)‖a − a†‖₁² + √n⟨a − a†, ξ⟩₁`.
pub fn log_density_shifted(
    a: &SpectralField,
    truth: &SpectralField,
    xi: &SpectralField,
    n: u64,
    scale: &ScaleSpec,
) -> Result<f64> {
    require(a.trunc() == truth.trunc() && a.trunc() == xi.trunc(), || "truncations differ".into())?;
    let d = a - truth;
    let n = n as f64;
    Ok(-0.5 * n * d.norm_sq_t(1.0, scale)? + n.sqrt() * d.inner_t(xi, 1.0, scale)?)
}

/// Small-noise log-likelihood with the Cameron-Martin weights `λ_k^{-2}`
/// precomputed, for use inside samplers.
#[derive(Debug, Clone)]
pub struct SmallNoiseLikelihood {
    weights: Vec<f64>,
    y: Vec<f64>,
    n: f64,
}

impl SmallNoiseLikelihood {
    pub fn new(y: &SpectralField, n: u64, scale: &ScaleSpec) -> Result<Self> {
        require(y.trunc() <= scale.available(), || "data longer than the eigenvalue list".into())?;
        require(n >= 1, || "n must be at least 1".into())?;
        Ok(Self {
            weights: (1..=y.trunc()).map(|k| scale.eigenvalue(k).powi(-2)).collect(),
            y: y.coeffs().to_vec(),
            n: n as f64,
        })
    }

    pub fn eval(&self, a: &SpectralField) -> f64 {
        let mut acc = 0.0;
        for ((w, yk), ak) in self.weights.iter().zip(&self.y).zip(a.coeffs()) {
            acc += w * ak * (yk - 0.5 * ak);
        }
        self.n * acc
    }
}

/// `−Σ (g(x_i) − y_i)²/(2σ²)` with `g` linearly interpolated.
pub fn log_density_pointwise(g: &GridFunction, x: &[f64], y: &[f64], sigma: f64) -> Result<f64> {
    require(x.len() == y.len(), || "design and data lengths differ".into())?;
    if x.is_empty() {
        return Ok(0.0);
    }
    require(sigma > 0.0, || format!("noise level sigma = {sigma} must be positive"))?;
    let ss: f64 = x.iter().zip(y).map(|(xi, yi)| (g.eval(*xi) - yi).powi(2)).sum();
    Ok(-ss / (2.0 * sigma * sigma))
}

/// Per-mode Gaussian posterior for prior `μ_j = j^{-t}` and noise `λ_j = j^{-r}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConjugatePosterior {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

pub fn conjugate_posterior_diagonal(t: f64, r: f64, y: &SpectralField, n: u64) -> Result<ConjugatePosterior> {
    require(n >= 1, || "n must be at least 1".into())?;
    let n = n as f64;
    let (mut mean, mut variance) = (Vec::with_capacity(y.trunc()), Vec::with_capacity(y.trunc()));
    for (i, yj) in y.coeffs().iter().enumerate() {
        let j = (i + 1) as f64;
        let mu2 = j.powf(-2.0 * t);
        let noise = j.powf(-2.0 * r) / n;
        mean.push(yj * mu2 / (mu2 + noise));
        variance.push(mu2 * noise / (mu2 + noise));
    }
    Ok(ConjugatePosterior { mean, variance })
}

impl ConjugatePosterior {
    pub fn sample(&self, rng: &mut Rng) -> SpectralField {
        SpectralField::from_vec_unchecked(
            self.mean
                .iter()
                .zip(&self.variance)
                .map(|(m, v)| {
                    let z: f64 = rng.sample(StandardNormal);
                    m + v.sqrt() * z
                })
                .collect(),
        )
    }
}

/// Which estimator produced a ball mass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MassMethod {
    Importance,
    Mcmc,
    ConjugateMc,
}

impl MassMethod {
    pub fn tag(self) -> &'static str {
        match self {
            MassMethod::Importance => "importance",
            MassMethod::Mcmc => "mcmc",
            MassMethod::ConjugateMc => "conjugate-mc",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallMassEstimate {
    pub mass: f64,
    pub stderr: f64,
    pub ess: f64,
    pub method: MassMethod,
    /// Set when the estimate should not be trusted (low ESS, poor mixing).
    pub unreliable: bool,
}

/// ESS below which importance sampling is flagged.
pub const MIN_ESS: f64 = 50.0;

/// Self-normalized importance sample with the prior as proposal, reduced
/// to (distance to the center, weight) pairs.
#[derive(Debug, Clone)]
pub struct ImportanceSample {
    distances: Vec<f64>,
    /// Normalized weights.
    weights: Vec<f64>,
    ess: f64,
    log_normalizer: f64,
}

const IS_CHUNK: usize = 1 << 12;

impl ImportanceSample {
    /// Draw `n_samples` prior samples, weight them by `exp(log_density)`
    /// (max-stabilized) and record their distance to the ball center.
    pub fn draw<P, L, D>(prior: &P, log_density: L, distance: D, n_samples: usize, seed: u64) -> Result<Self>
    where
        P: LatentPrior,
        L: Fn(&P::Sample) -> f64 + Sync,
        D: Fn(&P::Sample) -> f64 + Sync,
    {
        require(n_samples >= 1000, || format!("n_samples = {n_samples} below 1000"))?;
        let chunks = n_samples.div_ceil(IS_CHUNK);
        let parts: Vec<Vec<(f64, f64)>> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut rng = rng_stream(seed, c as u64);
                let len = IS_CHUNK.min(n_samples - c * IS_CHUNK);
                (0..len)
                    .map(|_| {
                        let a = prior.sample(&mut rng);
                        (log_density(&a), distance(&a))
                    })
                    .collect()
            })
            .collect();
        let pairs: Vec<(f64, f64)> = parts.into_iter().flatten().collect();
        Self::from_log_weights(
            pairs.iter().map(|p| p.0).collect(),
            pairs.iter().map(|p| p.1).collect(),
        )
    }

    pub fn from_log_weights(log_w: Vec<f64>, distances: Vec<f64>) -> Result<Self> {
        require(log_w.len() == distances.len() && !log_w.is_empty(), || "empty importance sample".into())?;
        let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::NonFinite("importance log-weights"));
        }
        let raw: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
        let sum: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / sum).collect();
        let ess = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let log_normalizer = max + (sum / log_w.len() as f64).ln();
        Ok(Self { distances, weights, ess, log_normalizer })
    }

    pub fn ess(&self) -> f64 {
        self.ess
    }

    /// `log((1/N) Σ exp(log_density_i))`, an estimate of `log E_prior[exp(·)]`.
    pub fn log_normalizer(&self) -> f64 {
        self.log_normalizer
    }

    /// Delta-method standard error of [`Self::log_normalizer`].
    pub fn log_normalizer_se(&self) -> f64 {
        (1.0 / self.ess - 1.0 / self.weights.len() as f64).max(0.0).sqrt()
    }

    pub fn ball_mass(&self, radius: f64) -> BallMassEstimate {
        let (mut inside, mut outside) = (0.0, 0.0);
        for (d, w) in self.distances.iter().zip(&self.weights) {
            if *d <= radius {
                inside += w;
            } else {
                outside += w;
            }
        }
        let mass = inside / (inside + outside);
        // delta method for a ratio estimator
        let var: f64 = self
            .distances
            .iter()
            .zip(&self.weights)
            .map(|(d, w)| {
                let ind = if *d <= radius { 1.0 } else { 0.0 };
                w * w * (ind - mass) * (ind - mass)
            })
            .sum();
        BallMassEstimate {
            mass,
            stderr: var.sqrt(),
            ess: self.ess,
            method: MassMethod::Importance,
            unreliable: self.ess < MIN_ESS,
        }
    }

    pub fn quantile_radius(&self, level: f64) -> f64 {
        let max = self.distances.iter().copied().fold(0.0, f64::max);
        quantile_by_bisection(|r| self.ball_mass(r).mass, level, max)
    }
}

/// Number of bisection steps for posterior radius quantiles.
pub const QUANTILE_STEPS: usize = 12;

/// Smallest radius (to bisection resolution) whose mass reaches `level`,
/// searched on `[0, upper]`. Returns the upper end of the final bracket.
pub fn quantile_by_bisection(mass: impl Fn(f64) -> f64, level: f64, upper: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, upper);
    for _ in 0..QUANTILE_STEPS {
        let mid = 0.5 * (lo + hi);
        if mass(mid) >= level {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Unweighted sample of distances (exact posterior draws or a chain).
#[derive(Debug, Clone)]
pub struct DistanceSample {
    distances: Vec<f64>,
    method: MassMethod,
}

impl DistanceSample {
    pub fn new(distances: Vec<f64>, method: MassMethod) -> Result<Self> {
        require(!distances.is_empty(), || "empty sample".into())?;
        Ok(Self { distances, method })
    }

    /// Exact draws from the conjugate posterior.
    pub fn conjugate(post: &ConjugatePosterior, distance: impl Fn(&SpectralField) -> f64, n_samples: usize, rng: &mut Rng) -> Result<Self> {
        require(n_samples >= 1000, || format!("n_samples = {n_samples} below 1000"))?;
        let d = (0..n_samples).map(|_| distance(&post.sample(rng))).collect();
        Self::new(d, MassMethod::ConjugateMc)
    }

    pub fn ball_mass(&self, radius: f64) -> BallMassEstimate {
        let n = self.distances.len() as f64;
        let ind: Vec<f64> = self.distances.iter().map(|d| if *d <= radius { 1.0 } else { 0.0 }).collect();
        let mass = ind.iter().sum::<f64>() / n;
        let (stderr, ess) = match self.method {
            MassMethod::Mcmc => {
                let se = batch_means_se(&ind, 25);
                let var = mass * (1.0 - mass);
                let ess = if se > 0.0 { var / (se * se) } else { n };
                (if se.is_finite() { se } else { 0.0 }, ess.min(n))
            }
            _ => ((mass * (1.0 - mass) / n).sqrt(), n),
        };
        BallMassEstimate {
            mass,
            stderr,
            ess,
            method: self.method,
            unreliable: ess < MIN_ESS,
        }
    }

    pub fn quantile_radius(&self, level: f64) -> f64 {
        let max = self.distances.iter().copied().fold(0.0, f64::max);
        quantile_by_bisection(|r| self.ball_mass(r).mass, level, max)
    }
}

/// pCN settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcnConfig {
    pub beta: f64,
    pub n_steps: usize,
    pub burn_in: usize,
    /// Tune `β` during burn-in towards 20-40% acceptance.
    pub adapt: bool,
    /// Keep every `thin`-th post-burn-in state.
    pub thin: usize,
}

impl PcnConfig {
    pub fn new(beta: f64, n_steps: usize, burn_in: usize) -> Result<Self> {
        require(beta > 0.0 && beta <= 1.0, || format!("pCN beta = {beta} outside (0, 1]"))?;
        require(n_steps >= 1, || "need at least one step".into())?;
        Ok(Self { beta, n_steps, burn_in, adapt: true, thin: 1 })
    }
}

/// Output of a pCN run.
#[derive(Debug, Clone)]
pub struct PcnChain<S> {
    /// Post-burn-in states (thinned).
    pub states: Vec<S>,
    pub log_likelihood: Vec<f64>,
    pub accepted: Vec<bool>,
    /// Acceptance rate after burn-in.
    pub acceptance_rate: f64,
    /// `β` used after burn-in.
    pub beta: f64,
    /// Acceptance fell below 1% after burn-in.
    pub low_acceptance: bool,
}

const ADAPT_WINDOW: usize = 100;

/// Preconditioned Crank-Nicolson on the latent standard normal coordinates
/// of `prior`; the chain leaves `exp(log_likelihood)·prior` invariant.
pub fn pcn_sample<P, L>(prior: &P, log_likelihood: L, cfg: PcnConfig, rng: &mut Rng) -> Result<PcnChain<P::Sample>>
where
    P: LatentPrior,
    L: Fn(&P::Sample) -> f64,
{
    require(cfg.beta > 0.0 && cfg.beta <= 1.0, || format!("pCN beta = {} outside (0, 1]", cfg.beta))?;
    require(cfg.thin >= 1, || "thinning must be at least 1".into())?;
    let dim = prior.latent_dim();
    let mut u: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let mut state = prior.map_latent(&u);
    let mut ll = log_likelihood(&state);
    if !ll.is_finite() {
        return Err(Error::NonFinite("initial log-likelihood"));
    }
    let mut beta = cfg.beta;
    let mut window_acc = 0usize;
    let mut chain = PcnChain {
        states: Vec::new(),
        log_likelihood: Vec::new(),
        accepted: Vec::new(),
        acceptance_rate: 0.0,
        beta,
        low_acceptance: false,
    };
    let mut post_acc = 0usize;
    let total = cfg.burn_in + cfg.n_steps;
    let mut proposal = vec![0.0; dim];
    for step in 0..total {
        let keep = (1.0 - beta * beta).sqrt();
        for (p, ui) in proposal.iter_mut().zip(&u) {
            let w: f64 = rng.sample(StandardNormal);
            *p = keep * ui + beta * w;
        }
        let cand = prior.map_latent(&proposal);
        let cand_ll = log_likelihood(&cand);
        let log_alpha = cand_ll - ll;
        let accept = cand_ll.is_finite() && (log_alpha >= 0.0 || rng.random::<f64>().ln() < log_alpha);
        if accept {
            std::mem::swap(&mut u, &mut proposal);
            state = cand;
            ll = cand_ll;
        }
        if step < cfg.burn_in {
            window_acc += accept as usize;
            if cfg.adapt && (step + 1) % ADAPT_WINDOW == 0 {
                let rate = window_acc as f64 / ADAPT_WINDOW as f64;
                if rate < 0.2 {
                    beta *= 0.5;
                } else if rate > 0.4 {
                    beta = (2.0 * beta).min(1.0);
                }
                window_acc = 0;
            }
        } else {
            post_acc += accept as usize;
            let idx = step - cfg.burn_in;
            if idx.is_multiple_of(cfg.thin) {
                chain.states.push(state.clone());
                chain.log_likelihood.push(ll);
                chain.accepted.push(accept);
            }
        }
    }
    chain.acceptance_rate = post_acc as f64 / cfg.n_steps as f64;
    chain.beta = beta;
    chain.low_acceptance = chain.acceptance_rate < 0.01;
    Ok(chain)
}

impl PcnChain<SpectralField> {
    /// CSV rows `step,c1..cN,log_likelihood,accepted`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let modes = self.states.first().map_or(0, |s| s.trunc());
        let header: Vec<String> = (1..=modes).map(|k| format!("c{k}")).collect();
        writeln!(w, "step,{},log_likelihood,accepted", header.join(","))?;
        for (i, s) in self.states.iter().enumerate() {
            let coeffs: Vec<String> = s.coeffs().iter().map(|c| c.to_string()).collect();
            writeln!(w, "{i},{},{},{}", coeffs.join(","), self.log_likelihood[i], self.accepted[i] as u8)?;
        }
        Ok(())
    }
}

/// Ball mass by importance sampling, falling back to pCN when the ESS is
/// below [`MIN_ESS`].
#[allow(clippy::too_many_arguments)]
pub fn ball_mass_auto<P, L, D>(
    prior: &P,
    log_density: L,
    distance: D,
    radius: f64,
    n_samples: usize,
    pcn: PcnConfig,
    seed: u64,
) -> Result<BallMassEstimate>
where
    P: LatentPrior,
    L: Fn(&P::Sample) -> f64 + Sync,
    D: Fn(&P::Sample) -> f64 + Sync,
{
    let is = ImportanceSample::draw(prior, &log_density, &distance, n_samples, seed)?;
    let est = is.ball_mass(radius);
    if !est.unreliable {
        return Ok(est);
    }
    let mut rng = rng_stream(seed, u64::MAX);
    let chain = pcn_sample(prior, &log_density, pcn, &mut rng)?;
    let d: Vec<f64> = chain.states.iter().map(&distance).collect();
    let mut est = DistanceSample::new(d, MassMethod::Mcmc)?.ball_mass(radius);
    est.unreliable |= chain.low_acceptance;
    Ok(est)
}

/// `log E[exp(−(n/2)‖a − a†‖₁² + √n⟨a − a†, ξ⟩₁)]` under the Gaussian prior
/// `μ_j = j^{-t}` in closed form (mode by mode).
pub fn gaussian_log_normalizer(
    t: f64,
    truth: &SpectralField,
    xi: &SpectralField,
    n: u64,
    scale: &ScaleSpec,
) -> Result<f64> {
    require(truth.trunc() == xi.trunc(), || "truncations differ".into())?;
    let n = n as f64;
    let mut total = 0.0;
    for (i, (c, x)) in truth.coeffs().iter().zip(xi.coeffs()).enumerate() {
        let j = i + 1;
        let s2 = (j as f64).powf(-2.0 * t);
        let w = scale.eigenvalue(j).powi(-2);
        let a = 0.5 * n * w;
        let b = n.sqrt() * w * x;
        // b_j = a_j − c ~ N(−c, s²): E exp(−A b² + B b)
        let m = -c;
        let denom = 1.0 + 2.0 * a * s2;
        total += -0.5 * denom.ln() + (-a * m * m + b * m + 0.5 * b * b * s2) / denom;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::mean;
    use crate::priors::{GaussianPrior, PointMass};

    fn power_scale(trunc: usize) -> ScaleSpec {
        ScaleSpec::power(1.0, trunc).unwrap()
    }

    #[test]
    fn small_noise_density_cases() {
        let scale = power_scale(4);
        let y = SpectralField::new(vec![1.0, -2.0, 0.5, 0.1]).unwrap();
        assert_eq!(log_density_small_noise(&SpectralField::zeros(4), &y, 5, &scale).unwrap(), 0.0);
        let half = 0.5 * y.norm_sq_t(1.0, &scale).unwrap();
        assert!((log_density_small_noise(&y, &y, 1, &scale).unwrap() - half).abs() < 1e-12);
        assert!(log_density_small_noise(&SpectralField::zeros(3), &y, 1, &scale).is_err());
    }

    #[test]
    fn small_noise_density_brute_force() {
        let scale = power_scale(10);
        let mut rng = rng_stream(2, 0);
        let a: Vec<f64> = (0..10).map(|_| rng.sample(StandardNormal)).collect();
        let y: Vec<f64> = (0..10).map(|_| rng.sample(StandardNormal)).collect();
        let brute: f64 = (0..10)
            .map(|k| {
                let l = 1.0 / (k as f64 + 1.0);
                l.powi(-2) * (-3.5 * a[k] * a[k] + 7.0 * a[k] * y[k])
            })
            .sum();
        let af = SpectralField::new(a).unwrap();
        let yf = SpectralField::new(y).unwrap();
        let got = log_density_small_noise(&af, &yf, 7, &scale).unwrap();
        assert!((got - brute).abs() < 1e-12 * brute.abs().max(1.0));
        let lik = SmallNoiseLikelihood::new(&yf, 7, &scale).unwrap();
        assert!((lik.eval(&af) - got).abs() < 1e-12 * got.abs().max(1.0));
    }

    #[test]
    fn shifted_form_differs_by_a_constant() {
        let scale = power_scale(12);
        let prior = GaussianPrior::new(3.0, 12).unwrap();
        let mut rng = rng_stream(3, 0);
        let truth = prior.sample(&mut rng);
        let xi = scale.sample_noise(12, &mut rng).unwrap();
        let n = 50;
        let y = &truth + &((1.0 / (n as f64).sqrt()) * &xi);
        let diffs: Vec<f64> = (0..100)
            .map(|_| {
                let a = prior.sample(&mut rng);
                log_density_small_noise(&a, &y, n, &scale).unwrap()
                    - log_density_shifted(&a, &truth, &xi, n, &scale).unwrap()
            })
            .collect();
        for d in &diffs {
            assert!((d - diffs[0]).abs() < 1e-10, "{d} vs {}", diffs[0]);
        }
    }

    #[test]
    fn pointwise_density_cases() {
        let g = GridFunction::from_fn(8, |x| x).unwrap();
        assert_eq!(log_density_pointwise(&g, &[], &[], 1.0).unwrap(), 0.0);
        assert_eq!(log_density_pointwise(&g, &[0.25], &[0.25], 1.0).unwrap(), 0.0);
        let x = [0.25, 0.5, 0.75];
        let y = [0.25 - 1.0, 0.5 + 2.0, 0.75 - 0.5];
        assert!((log_density_pointwise(&g, &x, &y, 1.0).unwrap() + 2.625).abs() < 1e-12);
        assert!(log_density_pointwise(&g, &x, &y, 0.0).is_err());
    }

    #[test]
    fn conjugate_one_mode_against_quadrature() {
        let y = SpectralField::new(vec![1.0]).unwrap();
        let post = conjugate_posterior_diagonal(2.0, 1.0, &y, 4).unwrap();
        assert!((post.mean[0] - 0.8).abs() < 1e-15);
        assert!((post.variance[0] - 0.2).abs() < 1e-15);
        // prior N(0,1), likelihood exp(−(n/2)(a − y)²) with n = 4
        let h = 1e-3;
        let (mut z, mut m1, mut m2) = (0.0, 0.0, 0.0);
        for i in -10_000..=10_000 {
            let a = i as f64 * h;
            let w = (-0.5 * a * a - 2.0 * (a - 1.0) * (a - 1.0)).exp();
            z += w;
            m1 += w * a;
            m2 += w * a * a;
        }
        let mean = m1 / z;
        assert!((mean - 0.8).abs() < 1e-9);
        assert!((m2 / z - mean * mean - 0.2).abs() < 1e-9);

        let big = conjugate_posterior_diagonal(2.0, 1.0, &y, 1_000_000_000).unwrap();
        assert!((big.mean[0] - 1.0).abs() < 1e-8 && big.variance[0] < 1e-8);
        let flat = conjugate_posterior_diagonal(40.0, 1.0, &SpectralField::new(vec![1.0, 1.0]).unwrap(), 4).unwrap();
        assert!(flat.mean[1] < 1e-20);
    }

    #[test]
    fn pcn_prior_invariance() {
        let prior = GaussianPrior::new(1.0, 4).unwrap();
        let mut rng = rng_stream(4, 0);
        let cfg = PcnConfig { beta: 0.5, n_steps: 40_000, burn_in: 1000, adapt: false, thin: 1 };
        let chain = pcn_sample(&prior, |_| 0.0, cfg, &mut rng).unwrap();
        assert_eq!(chain.acceptance_rate, 1.0);
        for k in 0..4 {
            let xs: Vec<f64> = chain.states.iter().map(|s| s.coeffs()[k] * s.coeffs()[k]).collect();
            let want = ((k + 1) as f64).powi(-2);
            let se = batch_means_se(&xs, 40);
            assert!((mean(&xs) - want).abs() < 4.0 * se, "k={k}: {} vs {want} (se {se})", mean(&xs));
        }
        assert!(PcnConfig::new(0.0, 10, 0).is_err());
        assert!(PcnConfig::new(1.5, 10, 0).is_err());
    }

    #[test]
    fn pcn_matches_conjugate_means() {
        let modes = 8;
        let scale = power_scale(modes);
        let prior = GaussianPrior::new(3.0, modes).unwrap();
        let mut rng = rng_stream(5, 0);
        let truth = prior.sample(&mut rng);
        let n = 100;
        let xi = scale.sample_noise(modes, &mut rng).unwrap();
        let y = &truth + &((1.0 / (n as f64).sqrt()) * &xi);
        let lik = SmallNoiseLikelihood::new(&y, n, &scale).unwrap();
        let cfg = PcnConfig { beta: 0.2, n_steps: 100_000, burn_in: 5_000, adapt: true, thin: 1 };
        let chain = pcn_sample(&prior, |a| lik.eval(a), cfg, &mut rng).unwrap();
        assert!((0.1..0.6).contains(&chain.acceptance_rate), "{}", chain.acceptance_rate);
        let post = conjugate_posterior_diagonal(3.0, 1.0, &y, n).unwrap();
        let mut ok = 0;
        for k in 0..modes {
            let xs: Vec<f64> = chain.states.iter().map(|s| s.coeffs()[k]).collect();
            let se = batch_means_se(&xs, 50);
            if (mean(&xs) - post.mean[k]).abs() < 3.0 * se {
                ok += 1;
            }
        }
        assert!(ok >= modes - 1, "{ok}/{modes}");
    }

    #[test]
    fn independence_sampler_acceptance_matches_weights() {
        let modes = 3;
        let scale = power_scale(modes);
        let prior = GaussianPrior::new(2.0, modes).unwrap();
        let y = SpectralField::new(vec![0.5, 0.1, 0.0]).unwrap();
        let lik = SmallNoiseLikelihood::new(&y, 2, &scale).unwrap();
        let cfg = PcnConfig { beta: 1.0, n_steps: 100_000, burn_in: 1000, adapt: false, thin: 1 };
        let chain = pcn_sample(&prior, |a| lik.eval(a), cfg, &mut rng_stream(6, 0)).unwrap();
        // E[min(1, w(x')/w(x))] with x from the posterior and x' from the prior
        let mut rng = rng_stream(6, 1);
        let lw: Vec<f64> = (0..3000).map(|_| lik.eval(&prior.sample(&mut rng))).collect();
        let is = ImportanceSample::from_log_weights(lw.clone(), vec![0.0; lw.len()]).unwrap();
        let mut predicted = 0.0;
        for (i, wi) in is.weights.iter().enumerate() {
            let inner: f64 = lw.iter().map(|lj| (lj - lw[i]).exp().min(1.0)).sum::<f64>() / lw.len() as f64;
            predicted += wi * inner;
        }
        assert!((chain.acceptance_rate - predicted).abs() < 0.03, "{} vs {predicted}", chain.acceptance_rate);
    }

    #[test]
    fn importance_ball_masses() {
        let prior = GaussianPrior::new(2.0, 5).unwrap();
        let dist = |a: &SpectralField| a.norm_0();
        // zero log-density: posterior = prior
        let is = ImportanceSample::draw(&prior, |_| 0.0, dist, 20_000, 7).unwrap();
        let direct = DistanceSample::new(
            {
                let mut rng = rng_stream(8, 0);
                (0..20_000).map(|_| dist(&prior.sample(&mut rng))).collect()
            },
            MassMethod::ConjugateMc,
        )
        .unwrap();
        let (a, b) = (is.ball_mass(0.8), direct.ball_mass(0.8));
        assert!((a.mass - b.mass).abs() < 3.0 * (a.stderr.hypot(b.stderr)));
        assert_eq!(is.ball_mass(f64::INFINITY).mass, 1.0);
        assert!((is.ess() - 20_000.0).abs() < 1e-6);
        assert!(ImportanceSample::draw(&prior, |_| 0.0, dist, 10, 7).is_err());
    }

    #[test]
    fn point_mass_ball_is_full() {
        let atom = SpectralField::new(vec![1.0, 2.0]).unwrap();
        let prior = PointMass(atom.clone());
        let is = ImportanceSample::draw(&prior, |_| -3.0, |a: &SpectralField| (a - &atom).norm_0(), 1000, 1).unwrap();
        assert_eq!(is.ball_mass(0.0).mass, 1.0);
    }

    #[test]
    fn normalizer_matches_closed_form() {
        let modes = 6;
        let scale = power_scale(modes);
        let prior = GaussianPrior::new(3.0, modes).unwrap();
        let mut rng = rng_stream(9, 0);
        let truth = prior.sample(&mut rng);
        let xi = scale.sample_noise(modes, &mut rng).unwrap();
        for n in [10u64, 100, 1000, 10_000] {
            let exact = gaussian_log_normalizer(3.0, &truth, &xi, n, &scale).unwrap();
            assert!(exact.is_finite() && exact > -50.0 && exact < 50.0, "n={n}: {exact}");
            if n <= 100 {
                let is = ImportanceSample::draw(
                    &prior,
                    |a| log_density_shifted(a, &truth, &xi, n, &scale).unwrap(),
                    |_| 0.0,
                    200_000,
                    10 + n,
                )
                .unwrap();
                let tol = 4.0 * is.log_normalizer_se();
                assert!((is.log_normalizer() - exact).abs() < tol, "n={n}: {} vs {exact} (tol {tol})", is.log_normalizer());
            }
        }
    }

    #[test]
    fn quantiles_by_bisection() {
        let s = DistanceSample::new((1..=1000).map(|i| i as f64 / 1000.0).collect(), MassMethod::ConjugateMc).unwrap();
        let r = s.quantile_radius(0.9);
        assert!((s.ball_mass(r).mass - 0.9).abs() <= 0.02);
        assert!(s.ball_mass(r).mass >= 0.9);
    }

    #[test]
    fn chain_csv_has_one_row_per_state() {
        let prior = GaussianPrior::new(1.0, 2).unwrap();
        let cfg = PcnConfig { beta: 0.5, n_steps: 10, burn_in: 0, adapt: false, thin: 1 };
        let chain = pcn_sample(&prior, |_| 0.0, cfg, &mut rng_stream(1, 0)).unwrap();
        let mut buf = Vec::new();
        chain.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 11);
        assert!(text.starts_with("step,c1,c2,log_likelihood,accepted"));
    }
}
