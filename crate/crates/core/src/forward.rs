//! The 1D elliptic forward map `a ↦ p(·; a)` for `−(a p′)′ = f`, `p(0) = p(1) = 0`,
//! its inversion from a known pressure, observation operators and empirical
//! stability constants.

use std::f64::consts::{PI, SQRT_2};

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{require, Error, Result};
use crate::grid::GridFunction;
use crate::numerics::Rng;
use crate::spectral::{ScaleSpec, SpectralField};

/// Solve `−(a p′)′ = f` with homogeneous Dirichlet conditions by conservative
/// finite differences with harmonic-mean face coefficients.
pub fn solve_elliptic_1d(a: &GridFunction, f: &GridFunction) -> Result<GridFunction> {
    a.same_mesh(f)?;
    if a.values().iter().any(|v| *v <= 0.0) {
        return Err(Error::Precondition(format!(
            "diffusion coefficient must be positive (min {})",
            a.min()
        )));
    }
    let m = a.m();
    let h2 = a.h() * a.h();
    let av = a.values();
    let faces: Vec<f64> = av.windows(2).map(|w| 2.0 * w[0] * w[1] / (w[0] + w[1])).collect();

    // Thomas algorithm on the interior unknowns p_1..p_{m-1}.
    let n = m - 1;
    let mut diag: Vec<f64> = (1..m).map(|i| faces[i - 1] + faces[i]).collect();
    let mut rhs: Vec<f64> = (1..m).map(|i| h2 * f.values()[i]).collect();
    for k in 1..n {
        let lower = -faces[k];
        let w = lower / diag[k - 1];
        diag[k] -= w * (-faces[k]);
        rhs[k] -= w * rhs[k - 1];
    }
    let mut p = vec![0.0; m + 1];
    for k in (0..n).rev() {
        let upper = if k + 1 < n { -faces[k + 1] * p[k + 2] } else { 0.0 };
        if diag[k] == 0.0 {
            return Err(Error::Inconsistent("singular tridiagonal system".into()));
        }
        p[k + 1] = (rhs[k] - upper) / diag[k];
    }
    GridFunction::new(p)
}

/// Coefficient recovered from a pressure field.
#[derive(Debug, Clone)]
pub struct Recovery {
    pub coefficient: GridFunction,
    /// Location of the interior flux zero.
    pub x_star: f64,
    /// True when some recovered value fell below the guard.
    pub below_guard: bool,
    /// True when `|p′|` is below 1e-12 somewhere away from `x*`.
    pub ill_conditioned: bool,
}

/// Half-width (in nodes) of the window around `x*` that uses the local
/// polynomial quotient instead of the face-flux formula.
const RECOVERY_WINDOW: usize = 3;
/// Half-width of the least-squares fit stencil around `x*`.
const FIT_HALF_WIDTH: usize = 4;

/// Recover `a` from `p` and `f` using `a p′ = ∫_x^{x*} f`, where `x*` is the
/// unique interior zero of the flux.
pub fn recover_coefficient_1d(
    p: &GridFunction,
    f: &GridFunction,
    a_min_guard: f64,
) -> Result<Recovery> {
    p.same_mesh(f)?;
    if f.values().iter().any(|v| *v <= 0.0) {
        return Err(Error::Precondition(format!(
            "source must be positive (min {})",
            f.min()
        )));
    }
    let m = p.m();
    let h = p.h();
    let pv = p.values();
    let fv = f.values();
    let dp: Vec<f64> = pv.windows(2).map(|w| w[1] - w[0]).collect();

    let change = flux_sign_change(&dp)?;
    // node between the last rising and first falling face
    let centre = change + 1;

    // Discrete antiderivative of f on faces: G_{i+1/2} = h Σ_{j=1}^{i} f_j.
    let mut g_face = vec![0.0; m];
    for i in 1..m {
        g_face[i] = g_face[i - 1] + h * fv[i];
    }
    let g_at = |x: f64| -> f64 {
        // piecewise linear through (x_{i+1/2}, G_{i+1/2}), extended linearly
        let s = x / h - 0.5;
        let i = (s.floor().max(0.0) as usize).min(m - 2);
        let w = s - i as f64;
        (1.0 - w) * g_face[i] + w * g_face[i + 1]
    };

    let fit = LocalFit::new(p, centre, FIT_HALF_WIDTH)?;
    let x_star = fit.x_star;
    let c = g_at(x_star);

    let mut face_a = vec![f64::NAN; m];
    let mut ill_conditioned = false;
    for i in 0..m {
        if dp[i] != 0.0 {
            face_a[i] = h * (c - g_face[i]) / dp[i];
        }
    }

    let lo = centre.saturating_sub(RECOVERY_WINDOW);
    let hi = (centre + RECOVERY_WINDOW).min(m);
    let f_star = f.eval(x_star);
    let mut values = vec![0.0; m + 1];
    for (i, v) in values.iter_mut().enumerate() {
        if (lo..=hi).contains(&i) {
            let x = p.x(i);
            let q = if (x - x_star).abs() < 1e-9 * h {
                f_star
            } else {
                (g_at(x) - c) / (x - x_star)
            };
            *v = -q / fit.derivative_quotient(x);
        } else if i == 0 {
            *v = 1.5 * face_a[0] - 0.5 * face_a[1];
        } else if i == m {
            *v = 1.5 * face_a[m - 1] - 0.5 * face_a[m - 2];
        } else {
            *v = 0.5 * (face_a[i - 1] + face_a[i]);
        }
    }
    for i in 0..m {
        if (i + 1 < lo || i > hi) && (dp[i] / h).abs() < 1e-12 {
            ill_conditioned = true;
        }
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegeneratePressure(
            "vanishing pressure increments away from the flux zero".into(),
        ));
    }
    let coefficient = GridFunction::new(values)?;
    let below_guard = coefficient.min() < a_min_guard;
    Ok(Recovery {
        coefficient,
        x_star,
        below_guard,
        ill_conditioned,
    })
}

/// Index of the last rising face before the single rise-to-fall transition.
fn flux_sign_change(dp: &[f64]) -> Result<usize> {
    let signed: Vec<(usize, f64)> = dp
        .iter()
        .enumerate()
        .filter(|(_, d)| **d != 0.0)
        .map(|(i, d)| (i, d.signum()))
        .collect();
    let changes: Vec<usize> = signed
        .windows(2)
        .filter(|w| w[0].1 != w[1].1)
        .map(|w| w[0].0)
        .collect();
    match changes.as_slice() {
        [] => Err(Error::DegeneratePressure(
            "pressure gradient never changes sign".into(),
        )),
        [i] => {
            if dp[*i] > 0.0 {
                Ok(*i)
            } else {
                Err(Error::DegeneratePressure(
                    "pressure has an interior minimum instead of a maximum".into(),
                ))
            }
        }
        many => Err(Error::DegeneratePressure(format!(
            "pressure gradient changes sign {} times",
            many.len()
        ))),
    }
}

/// Least-squares quartic through the nodes around the pressure maximum,
/// in the scaled variable `ξ = (x − x_c)/h`.
struct LocalFit {
    xc: f64,
    h: f64,
    /// p′(ξ) = d1 + 2 d2 ξ + 3 d3 ξ² + 4 d4 ξ³ (per unit ξ)
    coef: [f64; 5],
    xi_star: f64,
    x_star: f64,
}

impl LocalFit {
    fn new(p: &GridFunction, centre: usize, half: usize) -> Result<Self> {
        let m = p.m();
        let lo = centre.saturating_sub(half);
        let hi = (centre + half).min(m);
        let h = p.h();
        let xc = p.x(centre);
        // normal equations for a degree-4 polynomial
        let mut ata = [[0.0f64; 5]; 5];
        let mut atb = [0.0f64; 5];
        for i in lo..=hi {
            let xi = (i as f64) - centre as f64;
            let mut pw = [1.0f64; 5];
            for k in 1..5 {
                pw[k] = pw[k - 1] * xi;
            }
            for r in 0..5 {
                atb[r] += pw[r] * p.values()[i];
                for c in 0..5 {
                    ata[r][c] += pw[r] * pw[c];
                }
            }
        }
        let coef = solve_small(ata, atb)
            .ok_or_else(|| Error::DegeneratePressure("local fit is singular".into()))?;
        let dp = |xi: f64| coef[1] + 2.0 * coef[2] * xi + 3.0 * coef[3] * xi * xi + 4.0 * coef[4] * xi * xi * xi;
        let (mut a, mut b) = (-1.0, 1.0);
        if dp(a) <= 0.0 || dp(b) >= 0.0 {
            return Err(Error::DegeneratePressure(
                "local fit has no flux zero next to the sign change".into(),
            ));
        }
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if dp(mid) > 0.0 {
                a = mid;
            } else {
                b = mid;
            }
        }
        let xi_star = 0.5 * (a + b);
        Ok(Self {
            xc,
            h,
            coef,
            xi_star,
            x_star: xc + xi_star * h,
        })
    }

    /// `p′(x)/(x − x*)` in physical units, by synthetic division of the cubic.
    fn derivative_quotient(&self, x: f64) -> f64 {
        let xi = (x - self.xc) / self.h;
        // p′(ξ) coefficients, highest degree first: 4c4, 3c3, 2c2, c1
        let d = [4.0 * self.coef[4], 3.0 * self.coef[3], 2.0 * self.coef[2], self.coef[1]];
        let b0 = d[0];
        let b1 = d[1] + self.xi_star * b0;
        let b2 = d[2] + self.xi_star * b1;
        let quotient = (b0 * xi + b1) * xi + b2;
        // dp/dx = (dp/dξ)/h and x − x* = h(ξ − ξ*)
        quotient / (self.h * self.h)
    }
}

fn solve_small<const N: usize>(mut a: [[f64; N]; N], mut b: [f64; N]) -> Option<[f64; N]> {
    for col in 0..N {
        let piv = (col..N).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..N {
            let w = a[row][col] / a[col][col];
            for k in col..N {
                a[row][k] -= w * a[col][k];
            }
            b[row] -= w * b[col];
        }
    }
    let mut x = [0.0; N];
    for row in (0..N).rev() {
        let s: f64 = (row + 1..N).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// `‖p₁ − p₂‖_{C²} / ‖a₁ − a₂‖_{C^α}` on the grid; 0 when both vanish.
pub fn forward_stability_ratio(
    a1: &GridFunction,
    a2: &GridFunction,
    f: &GridFunction,
    alpha: f64,
) -> Result<f64> {
    a1.same_mesh(a2)?;
    let p1 = solve_elliptic_1d(a1, f)?;
    let p2 = solve_elliptic_1d(a2, f)?;
    let num = p1.sub(&p2)?.c2_norm();
    let den = a1.sub(a2)?.holder_norm(alpha)?;
    if den == 0.0 {
        if num == 0.0 {
            return Ok(0.0);
        }
        return Err(Error::Inconsistent(
            "identical coefficients produced different pressures".into(),
        ));
    }
    Ok(num / den)
}

/// `‖a₁ − a₂‖_∞ / (‖a₁‖_{C¹} ‖p₁ − p₂‖_{C²})`; 0 for identical coefficients.
pub fn inverse_stability_ratio(
    a1: &GridFunction,
    a2: &GridFunction,
    f: &GridFunction,
) -> Result<f64> {
    a1.same_mesh(a2)?;
    let da = a1.sub(a2)?.sup_norm();
    if da == 0.0 {
        return Ok(0.0);
    }
    let p1 = solve_elliptic_1d(a1, f)?;
    let p2 = solve_elliptic_1d(a2, f)?;
    let dp = p1.sub(&p2)?.c2_norm();
    if dp == 0.0 {
        return Err(Error::Inconsistent(
            "distinct coefficients produced identical pressures".into(),
        ));
    }
    Ok(da / (a1.holder_norm(1.0)? * dp))
}

/// How data are generated from a pressure field.
#[derive(Debug, Clone, PartialEq)]
pub enum ObservationModel {
    /// `y = p + n^{-1/2} ξ` in the spectral representation, `ξ ~ N(0, Γ)`.
    SmallNoise { n: u64, scale: ScaleSpec },
    /// `y_i = p(x_i) + σ ζ_i`.
    Pointwise { design: Vec<f64>, sigma: f64 },
}

impl ObservationModel {
    pub fn small_noise(n: u64, scale: ScaleSpec) -> Result<Self> {
        require(n >= 1, || "noise level index n must be at least 1".into())?;
        Ok(Self::SmallNoise { n, scale })
    }

    pub fn pointwise(design: Vec<f64>, sigma: f64) -> Result<Self> {
        require(!design.is_empty(), || "empty observation design".into())?;
        require(design.iter().all(|x| *x > 0.0 && *x < 1.0), || {
            "design points must lie strictly inside (0, 1)".into()
        })?;
        require(sigma >= 0.0 && sigma.is_finite(), || {
            format!("noise level must be nonnegative, got {sigma}")
        })?;
        Ok(Self::Pointwise { design, sigma })
    }

    /// Equidistant design `x_i = i/(n+1)`.
    pub fn equidistant(n: usize, sigma: f64) -> Result<Self> {
        let design = (1..=n).map(|i| i as f64 / (n as f64 + 1.0)).collect();
        Self::pointwise(design, sigma)
    }
}

/// Observed data.
#[derive(Debug, Clone, PartialEq)]
pub enum Observation {
    Spectral(SpectralField),
    Pointwise { x: Vec<f64>, y: Vec<f64> },
}

/// Coefficients of a grid function against `√2 sin(kπx)`, `k = 1..=trunc`,
/// by the trapezoid rule.
pub fn sine_coefficients(g: &GridFunction, trunc: usize) -> SpectralField {
    let h = g.h();
    let coeffs = (1..=trunc)
        .map(|k| {
            let w = k as f64 * PI;
            let interior: f64 = g
                .values()
                .iter()
                .enumerate()
                .map(|(i, v)| v * (w * g.x(i)).sin())
                .sum();
            SQRT_2 * h * interior
        })
        .collect();
    SpectralField::from_vec_unchecked(coeffs)
}

/// Generate data from `p` under `model`.
pub fn observe(p: &GridFunction, model: &ObservationModel, rng: &mut Rng) -> Result<Observation> {
    match model {
        ObservationModel::SmallNoise { n, scale } => {
            let signal = sine_coefficients(p, scale.trunc());
            let noise = scale.sample_noise(scale.trunc(), rng)?;
            let scaled = (1.0 / (*n as f64).sqrt()) * &noise;
            Ok(Observation::Spectral(&signal + &scaled))
        }
        ObservationModel::Pointwise { design, sigma } => {
            require(!design.is_empty(), || "empty observation design".into())?;
            let y = design
                .iter()
                .map(|&x| {
                    let z: f64 = rng.sample(StandardNormal);
                    p.eval(x) + sigma * z
                })
                .collect();
            Ok(Observation::Pointwise {
                x: design.clone(),
                y,
            })
        }
    }
}

/// Which design condition to test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignMode {
    /// Every interval of length `1/(Kn)` contains a design point.
    Choi,
    /// `F_n(b) − F_n(a) ≥ K(b − a)` on dyadic pairs.
    Empirical { level: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignViolation {
    pub a: f64,
    pub b: f64,
    /// Required minus achieved (length or empirical mass).
    pub deficit: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignReport {
    pub passes: bool,
    /// Worst violations first, at most ten.
    pub violations: Vec<DesignViolation>,
}

pub fn design_check(points: &[f64], k: f64, mode: DesignMode) -> Result<DesignReport> {
    require(!points.is_empty(), || "empty design".into())?;
    require(points.iter().all(|x| *x > 0.0 && *x < 1.0), || {
        "design points must lie in (0, 1)".into()
    })?;
    require(k > 0.0, || "K must be positive".into())?;
    let n = points.len() as f64;
    let mut sorted = points.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut violations = Vec::new();
    match mode {
        DesignMode::Choi => {
            let len = 1.0 / (k * n);
            // open end intervals (ε, x_1) and (x_n, 1 − ε) may approach the gap
            if sorted[0] > len {
                violations.push(DesignViolation { a: 0.0, b: sorted[0], deficit: sorted[0] - len });
            }
            let last = *sorted.last().unwrap();
            if 1.0 - last > len {
                violations.push(DesignViolation { a: last, b: 1.0, deficit: 1.0 - last - len });
            }
            for w in sorted.windows(2) {
                let gap = w[1] - w[0];
                if gap >= len {
                    violations.push(DesignViolation { a: w[0], b: w[1], deficit: gap - len });
                }
            }
        }
        DesignMode::Empirical { level } => {
            let cells = 1usize << level;
            let count_upto = |b: f64| sorted.partition_point(|x| *x <= b) as f64;
            for j in 0..cells {
                for l in j + 1..=cells {
                    let a = j as f64 / cells as f64;
                    let b = l as f64 / cells as f64;
                    let mass = (count_upto(b) - count_upto(a)) / n;
                    let need = k * (b - a);
                    if mass < need {
                        violations.push(DesignViolation { a, b, deficit: need - mass });
                    }
                }
            }
        }
    }
    violations.sort_by(|x, y| y.deficit.total_cmp(&x.deficit));
    let passes = violations.is_empty();
    violations.truncate(10);
    Ok(DesignReport { passes, violations })
}
