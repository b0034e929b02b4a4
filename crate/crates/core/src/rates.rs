//! Theoretical contraction-rate calculators.
//!
//! The general small-noise rate is the value of a small nonlinear program in
//! `(κ, p, η, θ)`; [`rate_general_optimize`] solves it and returns a
//! [`RateCertificate`] whose witness can be replayed against the eight
//! constraints.

use serde::Serialize;

use crate::error::{require, Error, Result};

/// Strict slack every certified constraint must exceed.
pub const STRICT_SLACK: f64 = 1e-9;

/// `λ = (s − 1 − σ0)/(s − 1)`.
pub fn lambda_from_s(s: f64, sigma0: f64) -> Result<f64> {
    require(s > 1.0 + sigma0, || format!("s = {s} must exceed 1 + sigma0 = {}", 1.0 + sigma0))?;
    Ok((s - 1.0 - sigma0) / (s - 1.0))
}

/// Rate for priors bounded in `‖·‖_s`: `min{1/(2(2 − λ)), 1/(2 + ρ)}`.
pub fn rate_no_tail(s: f64, sigma0: f64, rho: f64) -> Result<f64> {
    require(rho > 0.0, || format!("small-ball exponent rho = {rho} must be positive"))?;
    let lambda = lambda_from_s(s, sigma0)?;
    Ok((1.0 / (2.0 * (2.0 - lambda))).min(1.0 / (2.0 + rho)))
}

/// Tail-exponent condition for consistency: `e > −1 + 2√2·√(1 − λ)` when
/// `λ ≤ ½`, else `e > 2 − 2λ`.
pub fn consistency_condition(lambda: f64, e: f64) -> bool {
    if lambda <= 0.5 {
        e > -1.0 + 2.0 * 2f64.sqrt() * (1.0 - lambda).sqrt()
    } else {
        e > 2.0 - 2.0 * lambda
    }
}

/// Which version of the sixth constraint to impose.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SixthConstraint {
    /// `(η p/q − ½)/(2 − λp) < −κ`.
    #[default]
    Theorem,
    /// `(η p/q − ½)·λp < −κ`.
    Corollary,
}

/// Inputs of the program besides the decision variables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateProblem {
    pub lambda: f64,
    pub rho: f64,
    pub e: f64,
    pub form: SixthConstraint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Witness {
    pub p: f64,
    pub q: f64,
    pub eta: f64,
    pub theta: f64,
    /// Regularity index when `λ` was derived from it.
    pub s: Option<f64>,
}

/// A certified rate with its feasibility witness.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateCertificate {
    pub kappa: f64,
    /// Smallest `κ` the search found infeasible (the supremum lies between).
    pub kappa_upper: f64,
    pub witness: Witness,
    pub problem: RateProblem,
    /// Residuals of the eight constraints, each `> 0` when satisfied.
    pub slacks: [f64; 8],
    pub tag: String,
}

impl RateCertificate {
    /// Re-evaluate the eight constraints at the stored witness.
    pub fn replay(&self) -> [f64; 8] {
        constraint_slacks(self.kappa, &self.problem, self.witness.p, self.witness.eta, self.witness.theta)
    }

    pub fn is_valid(&self) -> bool {
        self.kappa > 0.0 && self.replay().iter().all(|s| *s > STRICT_SLACK)
    }
}

/// Residuals `rhs − lhs` of the eight constraints at `(κ, p, η, θ)`.
pub fn constraint_slacks(kappa: f64, pr: &RateProblem, p: f64, eta: f64, theta: f64) -> [f64; 8] {
    let RateProblem { lambda, rho, e, form } = *pr;
    let q = p / (p - 1.0);
    let pq = p / q;
    let one_m = 1.0 - 2.0 * kappa;
    let sixth = match form {
        SixthConstraint::Theorem => -kappa - (eta * pq - 0.5) / (2.0 - lambda * p),
        SixthConstraint::Corollary => -kappa - (eta * pq - 0.5) * lambda * p,
    };
    let e_gap = e - (1.0 - lambda) * q;
    [
        one_m - (0.5 + eta * pq - kappa * lambda * p),
        one_m - (0.5 - eta + (1.0 - lambda) * q * theta),
        e * theta - rho * kappa,
        one_m - rho * kappa,
        2.0 - lambda * p,
        sixth,
        e_gap,
        one_m.max(theta * e) - (0.5 - eta) * (1.0 + 1.0 / e_gap),
    ]
}

const P_GRID: usize = 400;
const P_MAX: f64 = 50.0;
const KAPPA_STEPS: usize = 40;
const NUDGE: f64 = 1e-7;

/// Best `(η, θ)` for fixed `(κ, p)`: `η` as large as constraints 1 and 6
/// allow, then `θ` as large as constraint 2 allows (constraints 3 and 8
/// only improve with `θ`). Returns the witness and its smallest slack.
fn best_at(kappa: f64, pr: &RateProblem, p: f64) -> Option<(f64, f64, f64)> {
    let q = p / (p - 1.0);
    let pm1 = p - 1.0;
    if 2.0 - pr.lambda * p <= 0.0 || pr.e - (1.0 - pr.lambda) * q <= 0.0 {
        return None;
    }
    let mut eta_max = (0.5 - 2.0 * kappa + kappa * pr.lambda * p) / pm1;
    if pr.form == SixthConstraint::Corollary {
        eta_max = eta_max.min((0.5 - kappa / (pr.lambda * p)) / pm1);
    }
    let eta = (eta_max - NUDGE).max(0.0);
    let theta = ((0.5 - 2.0 * kappa + eta) / ((1.0 - pr.lambda) * q) - NUDGE).max(0.0);
    let slacks = constraint_slacks(kappa, pr, p, eta, theta);
    let worst = slacks.iter().copied().fold(f64::INFINITY, f64::min);
    Some((eta, theta, worst))
}

/// Feasible witness at `κ`, if the `p` search finds one.
fn feasible(kappa: f64, pr: &RateProblem) -> Option<(f64, f64, f64)> {
    let p_hi = P_MAX.min(2.0 / pr.lambda);
    let (lo, hi) = ((1.0 + 1e-3f64).ln(), p_hi.ln());
    let mut best: Option<(f64, f64)> = None;
    for i in 0..P_GRID {
        let p = (lo + (hi - lo) * i as f64 / (P_GRID - 1) as f64).exp();
        if let Some((eta, theta, worst)) = best_at(kappa, pr, p) {
            if worst > STRICT_SLACK {
                return Some((p, eta, theta));
            }
            if best.is_none_or(|b| worst > b.1) {
                best = Some((p, worst));
            }
        }
    }
    // golden-section refinement of the most promising p
    let (p0, _) = best?;
    let step = (hi - lo) / (P_GRID - 1) as f64;
    let (mut a, mut b) = ((p0.ln() - step).max(lo), (p0.ln() + step).min(hi));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let score = |lp: f64| best_at(kappa, pr, lp.exp()).map_or(f64::NEG_INFINITY, |w| w.2);
    for _ in 0..60 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if score(c) > score(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let p = (0.5 * (a + b)).exp();
    let (eta, theta, worst) = best_at(kappa, pr, p)?;
    (worst > STRICT_SLACK).then_some((p, eta, theta))
}

/// Maximize `κ` over the eight-constraint program at fixed `λ`.
pub fn rate_general_optimize(lambda: f64, rho: f64, e: f64, form: SixthConstraint) -> Result<RateCertificate> {
    require(lambda > 0.0 && lambda < 1.0, || format!("lambda = {lambda} outside (0, 1)"))?;
    require(rho > 0.0, || format!("rho = {rho} must be positive"))?;
    require(e > 0.0, || format!("tail exponent e = {e} must be positive"))?;
    let pr = RateProblem { lambda, rho, e, form };
    let floor = 1e-4;
    let Some(mut wit) = feasible(floor, &pr) else {
        return Err(Error::NoRate(format!("infeasible at kappa = {floor} (lambda {lambda}, rho {rho}, e {e})")));
    };
    let (mut lo, mut hi) = (floor, 1.0 / (2.0 + rho) - STRICT_SLACK);
    for _ in 0..KAPPA_STEPS {
        let mid = 0.5 * (lo + hi);
        match feasible(mid, &pr) {
            Some(w) => {
                lo = mid;
                wit = w;
            }
            None => hi = mid,
        }
    }
    let (p, eta, theta) = wit;
    Ok(RateCertificate {
        kappa: lo,
        kappa_upper: hi,
        witness: Witness { p, q: p / (p - 1.0), eta, theta, s: None },
        problem: pr,
        slacks: constraint_slacks(lo, &pr, p, eta, theta),
        tag: "general".into(),
    })
}

/// Points of the open interval `(lo, hi)`: a uniform grid plus points
/// approaching `hi` geometrically, where the supremum is attained.
fn open_interval_points(lo: f64, hi: f64) -> Vec<f64> {
    let w = hi - lo;
    let mut pts: Vec<f64> = (1..100).map(|i| lo + w * i as f64 / 100.0).collect();
    pts.extend((2..=9).map(|j| hi - w * 10f64.powi(-j)));
    pts
}

/// Optimize the general program also over `s ∈ (lo, hi)`.
pub fn rate_over_s(s_lo: f64, s_hi: f64, sigma0: f64, rho: f64, e: f64, form: SixthConstraint) -> Result<RateCertificate> {
    require(s_lo >= 1.0 + sigma0 && s_hi > s_lo, || format!("empty regularity interval ({s_lo}, {s_hi})"))?;
    let mut best: Option<RateCertificate> = None;
    for s in open_interval_points(s_lo, s_hi) {
        let lambda = lambda_from_s(s, sigma0)?;
        match rate_general_optimize(lambda, rho, e, form) {
            Ok(mut cert) => {
                if best.as_ref().is_none_or(|b| cert.kappa > b.kappa) {
                    cert.witness.s = Some(s);
                    best = Some(cert);
                }
            }
            Err(Error::NoRate(_)) => {}
            Err(other) => return Err(other),
        }
    }
    best.ok_or_else(|| Error::NoRate("no s in the interval admits a positive rate".into()))
}

/// Gaussian prior `μ_j = j^{-t}`, noise `λ_j = j^{-r}`: `e = 2`,
/// `ρ = 1/(t − r − 1)`, `σ0 = 1/(2r)`, `s ∈ (1 + 1/(2r), (t − ½)/r)`.
pub fn rate_gaussian_case(t: f64, r: f64, form: SixthConstraint) -> Result<RateCertificate> {
    require(r > 0.0, || format!("noise decay r = {r} must be positive"))?;
    require(t > r + 1.0, || format!("t = {t} must exceed r + 1 = {} for a positive small-ball exponent", r + 1.0))?;
    let sigma0 = 1.0 / (2.0 * r);
    let (lo, hi) = (1.0 + sigma0, (t - 0.5) / r);
    require(hi > lo, || format!("empty s interval ({lo}, {hi})"))?;
    let rho = crate::priors::gaussian_small_ball_exponent(t, r)?;
    let mut cert = rate_over_s(lo, hi, sigma0, rho, 2.0, form)?;
    cert.tag = format!("gaussian t={t} r={r}");
    Ok(cert)
}

/// Minimax rate `(t − r − ½)/(2(t − r) − 1)`.
pub fn rate_opt_closed(t: f64, r: f64) -> Result<f64> {
    let den = 2.0 * (t - r) - 1.0;
    require(den > 0.0, || format!("t = {t} must exceed r + 1/2"))?;
    Ok((t - r - 0.5) / den)
}

/// `(t − r − 1)/(2(t − r) − 1)`.
pub fn rate_small_ball_closed(t: f64, r: f64) -> Result<f64> {
    require(t > r + 1.0, || format!("t = {t} must exceed r + 1"))?;
    Ok((t - r - 1.0) / (2.0 * (t - r) - 1.0))
}

/// Both readings of the large-data rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LargeDataRates {
    /// `min{1/(2(2 + 1/β)), 2β/((2β + 1)(2 + ρ))}`
    pub theorem: f64,
    /// `min{1/(3(1 + 1/(2β))), 1/((1 + 1/(2β))(2 + ρ))}`
    pub proof: f64,
    pub theorem_branches: (f64, f64),
    pub proof_branches: (f64, f64),
}

pub fn rate_large_data(beta: f64, rho: f64) -> Result<LargeDataRates> {
    require(beta > 0.0 && beta <= 1.0, || format!("beta = {beta} outside (0, 1]"))?;
    require(rho > 0.0, || format!("rho = {rho} must be positive"))?;
    let tb = (1.0 / (2.0 * (2.0 + 1.0 / beta)), 2.0 * beta / ((2.0 * beta + 1.0) * (2.0 + rho)));
    let w = 1.0 + 1.0 / (2.0 * beta);
    let pb = (1.0 / (3.0 * w), 1.0 / (w * (2.0 + rho)));
    Ok(LargeDataRates {
        theorem: tb.0.min(tb.1),
        proof: pb.0.min(pb.1),
        theorem_branches: tb,
        proof_branches: pb,
    })
}

fn elliptic_prefactor(alpha: f64, d: f64, r: f64) -> Result<f64> {
    require(alpha > 1.0, || format!("alpha = {alpha} must exceed 1"))?;
    require(r > 0.0, || format!("r = {r} must be positive"))?;
    require(alpha > r + d / 2.0 - 2.0, || format!("alpha = {alpha} must exceed r + d/2 - 2 = {}", r + d / 2.0 - 2.0))?;
    Ok((alpha / (alpha + 2.0 + d / 2.0 - r)).min(1.0))
}

/// Elliptic rate `(α/(α + 2 + d/2 − r) ∧ 1)(1/(2 + ρ) ∧ α/(2(α + 1 + d/(2r))))`.
pub fn rate_elliptic(alpha: f64, d: f64, r: f64, rho: f64) -> Result<f64> {
    let pre = elliptic_prefactor(alpha, d, r)?;
    require(rho > 0.0, || format!("rho = {rho} must be positive"))?;
    Ok(pre * (1.0 / (2.0 + rho)).min(alpha / (2.0 * (alpha + 1.0 + d / (2.0 * r)))))
}

/// Small-ball exponent of the uniform prior at summability index `ν`:
/// `1/(1/ν − 1)`.
pub fn uniform_prior_rho(nu: f64) -> Result<f64> {
    require(nu > 0.0 && nu < 1.0, || format!("nu = {nu} outside (0, 1)"))?;
    Ok(1.0 / (1.0 / nu - 1.0))
}

/// Factors of the uniform-prior elliptic rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UniformPriorBranches {
    /// `α/(α + 2 + d/2 − r) ∧ 1`
    pub prefactor: f64,
    /// `(1 − ν)/(2 − ν)`
    pub small_ball: f64,
    /// `(α − r + 2)/(2α + d − 2r + 4)`
    pub approximation: f64,
}

pub fn uniform_prior_branches(alpha: f64, nu: f64, d: f64, r: f64) -> Result<UniformPriorBranches> {
    require(nu > 0.0 && nu < 1.0, || format!("nu = {nu} outside (0, 1)"))?;
    Ok(UniformPriorBranches {
        prefactor: elliptic_prefactor(alpha, d, r)?,
        small_ball: (1.0 - nu) / (2.0 - nu),
        approximation: (alpha - r + 2.0) / (2.0 * alpha + d - 2.0 * r + 4.0),
    })
}

/// Uniform-prior elliptic rate
/// `(α/(α + 2 + d/2 − r) ∧ 1)((1 − ν)/(2 − ν) ∧ (α − r + 2)/(2α + d − 2r + 4))`.
pub fn rate_uniform_prior(alpha: f64, nu: f64, d: f64, r: f64) -> Result<f64> {
    let b = uniform_prior_branches(alpha, nu, d, r)?;
    Ok(b.prefactor * b.small_ball.min(b.approximation))
}

/// Optimized, minimax and small-ball rates at one prior smoothness `t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Figure1Row {
    pub t: f64,
    pub kappa_cor: f64,
    /// Same optimization with the alternative sixth constraint.
    pub kappa_cor_alt: f64,
    pub kappa_opt: f64,
    pub kappa_smallball: f64,
}

impl Figure1Row {
    /// `κ_cor ≤ κ_smallball + 1e-3 ≤ κ_opt`.
    pub fn ordered(&self) -> bool {
        self.kappa_cor <= self.kappa_smallball + 1e-3 && self.kappa_smallball + 1e-3 <= self.kappa_opt
    }
}

pub fn figure1_table(r: f64, ts: &[f64], form: SixthConstraint) -> Result<Vec<Figure1Row>> {
    require(!ts.is_empty(), || "empty t grid".into())?;
    let alt = match form {
        SixthConstraint::Theorem => SixthConstraint::Corollary,
        SixthConstraint::Corollary => SixthConstraint::Theorem,
    };
    ts.iter()
        .map(|&t| {
            Ok(Figure1Row {
                t,
                kappa_cor: rate_gaussian_case(t, r, form)?.kappa,
                kappa_cor_alt: rate_gaussian_case(t, r, alt)?.kappa,
                kappa_opt: rate_opt_closed(t, r)?,
                kappa_smallball: rate_small_ball_closed(t, r)?,
            })
        })
        .collect()
}
