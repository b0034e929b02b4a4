//! Hilbert-scale arithmetic over a fixed eigenbasis.
//!
//! A covariance operator `Γ` with eigenpairs `(λ_k², φ_k)` generates the
//! norms `‖u‖_t = ‖Γ^{-t/2} u‖ = (Σ_k λ_k^{-2t} u_k²)^{1/2}`. Fields are stored
//! as coefficient vectors against `φ_k`; `t = 1` is the Cameron–Martin norm.
//!
//! This follows the convention `‖u‖_t = ‖Γ^{-t/2}u‖`, which differs by a
//! factor of two in the index from the scale `‖Γ^{-t}u‖` used in part of the
//! inverse-problems literature.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{require, Error, Result};
use crate::numerics::{fit_line, Rng};

/// Default truncation level for infinite series.
pub const DEFAULT_TRUNC: usize = 256;

/// Eigenvalue law `k ↦ λ_k` (1-based `k`).
#[derive(Debug, Clone, PartialEq)]
pub enum EigenLaw {
    /// `λ_k = k^{-r}`.
    Power { r: f64 },
    /// Dirichlet Laplacian on a `d`-dimensional domain raised to `-r`:
    /// `λ_k = (πk)^{-r}` in 1D, `k^{-r/d}` otherwise.
    DirichletLaplacian { r: f64, d: usize },
    /// Explicit positive, nonincreasing list.
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaleSpec {
    law: EigenLaw,
    trunc: usize,
}

/// Flat, serializable form of [`ScaleSpec`] used in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleConfig {
    pub law: String,
    #[serde(default)]
    pub r: Option<f64>,
    #[serde(default)]
    pub d: Option<usize>,
    #[serde(default)]
    pub eigenvalues: Option<Vec<f64>>,
    #[serde(default)]
    pub trunc: Option<usize>,
}

/// Estimated trace-class threshold `σ0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sigma0 {
    pub sigma0: f64,
    /// Goodness of the tail fit; 1 for closed forms.
    pub r_squared: f64,
    pub closed_form: bool,
}

impl ScaleSpec {
    pub fn new(law: EigenLaw, trunc: usize) -> Result<Self> {
        require(trunc >= 1, || "truncation must be at least 1".into())?;
        match &law {
            EigenLaw::Power { r } => require(r.is_finite() && *r > 0.0, || {
                format!("power law needs r > 0, got {r}")
            })?,
            EigenLaw::DirichletLaplacian { r, d } => {
                require(r.is_finite() && *r > 0.0, || {
                    format!("dirichlet_laplacian needs r > 0, got {r}")
                })?;
                require(*d >= 1, || "dirichlet_laplacian needs d >= 1".into())?;
            }
            EigenLaw::Explicit(v) => {
                require(!v.is_empty(), || "explicit eigenvalue list is empty".into())?;
                require(v.iter().all(|x| x.is_finite() && *x > 0.0), || {
                    "explicit eigenvalues must be finite and positive".into()
                })?;
                require(v.windows(2).all(|w| w[1] <= w[0]), || {
                    "explicit eigenvalues must be nonincreasing".into()
                })?;
                require(trunc <= v.len(), || {
                    format!("truncation {trunc} exceeds {} explicit eigenvalues", v.len())
                })?;
            }
        }
        Ok(Self { law, trunc })
    }

    pub fn power(r: f64, trunc: usize) -> Result<Self> {
        Self::new(EigenLaw::Power { r }, trunc)
    }

    pub fn dirichlet_laplacian(r: f64, d: usize, trunc: usize) -> Result<Self> {
        Self::new(EigenLaw::DirichletLaplacian { r, d }, trunc)
    }

    pub fn explicit(eigenvalues: Vec<f64>) -> Result<Self> {
        let n = eigenvalues.len();
        Self::new(EigenLaw::Explicit(eigenvalues), n)
    }

    pub fn from_config(cfg: &ScaleConfig) -> Result<Self> {
        let trunc = cfg.trunc.unwrap_or(DEFAULT_TRUNC);
        let need_r = || {
            cfg.r
                .ok_or_else(|| Error::Precondition(format!("law '{}' needs r", cfg.law)))
        };
        match cfg.law.as_str() {
            "power" => Self::power(need_r()?, trunc),
            "dirichlet_laplacian" => Self::dirichlet_laplacian(need_r()?, cfg.d.unwrap_or(1), trunc),
            "explicit" => {
                let ev = cfg.eigenvalues.clone().ok_or_else(|| {
                    Error::Precondition("law 'explicit' needs eigenvalues".into())
                })?;
                let t = cfg.trunc.unwrap_or(ev.len());
                Self::new(EigenLaw::Explicit(ev), t)
            }
            other => Err(Error::Precondition(format!("unknown eigenvalue law '{other}'"))),
        }
    }

    pub fn to_config(&self) -> ScaleConfig {
        let (law, r, d, eigenvalues) = match &self.law {
            EigenLaw::Power { r } => ("power", Some(*r), None, None),
            EigenLaw::DirichletLaplacian { r, d } => ("dirichlet_laplacian", Some(*r), Some(*d), None),
            EigenLaw::Explicit(v) => ("explicit", None, None, Some(v.clone())),
        };
        ScaleConfig {
            law: law.into(),
            r,
            d,
            eigenvalues,
            trunc: Some(self.trunc),
        }
    }

    pub fn law(&self) -> &EigenLaw {
        &self.law
    }

    pub fn trunc(&self) -> usize {
        self.trunc
    }

    /// Same law at another truncation.
    pub fn with_trunc(&self, trunc: usize) -> Result<Self> {
        Self::new(self.law.clone(), trunc)
    }

    /// Number of eigenvalues that can be evaluated (unbounded for laws).
    pub fn available(&self) -> usize {
        match &self.law {
            EigenLaw::Explicit(v) => v.len(),
            _ => usize::MAX,
        }
    }

    /// `λ_k`, 1-based.
    pub fn eigenvalue(&self, k: usize) -> f64 {
        debug_assert!(k >= 1);
        let kf = k as f64;
        match &self.law {
            EigenLaw::Power { r } => kf.powf(-r),
            EigenLaw::DirichletLaplacian { r, d } => {
                if *d == 1 {
                    (PI * kf).powf(-r)
                } else {
                    kf.powf(-r / *d as f64)
                }
            }
            EigenLaw::Explicit(v) => v[k - 1],
        }
    }

    /// `λ_1, …, λ_N` at the working truncation.
    pub fn eigenvalues(&self) -> Vec<f64> {
        (1..=self.trunc).map(|k| self.eigenvalue(k)).collect()
    }

    /// Critical exponent `σ0` such that `Σ_k λ_k^{2σ} < ∞` iff `σ > σ0`.
    ///
    /// Closed form for the two laws; explicit lists are extrapolated from the
    /// last half of the list and refused when the tail fit has
    /// `R² < min_r_squared`.
    pub fn trace_sigma0(&self, min_r_squared: f64) -> Result<Sigma0> {
        match &self.law {
            EigenLaw::Power { r } => Ok(Sigma0 {
                sigma0: 1.0 / (2.0 * r),
                r_squared: 1.0,
                closed_form: true,
            }),
            EigenLaw::DirichletLaplacian { r, d } => Ok(Sigma0 {
                sigma0: *d as f64 / (2.0 * r),
                r_squared: 1.0,
                closed_form: true,
            }),
            EigenLaw::Explicit(v) => explicit_sigma0(v, min_r_squared),
        }
    }

    /// Draw `Σ_k λ_k ζ_k φ_k` with `ζ_k` i.i.d. standard normal.
    pub fn sample_noise(&self, trunc: usize, rng: &mut Rng) -> Result<SpectralField> {
        require(trunc >= 1, || "noise truncation must be at least 1".into())?;
        require(trunc <= self.available(), || {
            format!("truncation {trunc} exceeds available eigenvalues")
        })?;
        let coeffs = (1..=trunc)
            .map(|k| {
                let z: f64 = rng.sample(StandardNormal);
                self.eigenvalue(k) * z
            })
            .collect();
        Ok(SpectralField { coeffs })
    }
}

fn explicit_sigma0(v: &[f64], min_r_squared: f64) -> Result<Sigma0> {
    if v.len() < 8 {
        return Err(Error::Extrapolation(format!(
            "{} eigenvalues given, need at least 8 to fit a tail",
            v.len()
        )));
    }
    let start = v.len() / 2;
    let ks: Vec<f64> = (start + 1..=v.len()).map(|k| k as f64).collect();
    let logs: Vec<f64> = v[start..].iter().map(|x| x.ln()).collect();
    let log_k: Vec<f64> = ks.iter().map(|k| k.ln()).collect();

    let algebraic = fit_line(&log_k, &logs);
    let geometric = fit_line(&ks, &logs);

    if geometric.slope < 0.0
        && geometric.r_squared >= min_r_squared
        && geometric.r_squared > algebraic.r_squared
    {
        // exponential decay: trace class for every positive power
        return Ok(Sigma0 {
            sigma0: 0.0,
            r_squared: geometric.r_squared,
            closed_form: false,
        });
    }
    if algebraic.r_squared < min_r_squared {
        return Err(Error::Extrapolation(format!(
            "log-log tail fit R² = {:.4} below {min_r_squared}",
            algebraic.r_squared
        )));
    }
    let decay = -algebraic.slope;
    if decay <= 0.0 {
        return Err(Error::Extrapolation(
            "eigenvalues do not decay in the tail".into(),
        ));
    }
    Ok(Sigma0 {
        sigma0: 1.0 / (2.0 * decay),
        r_squared: algebraic.r_squared,
        closed_form: false,
    })
}

/// Coefficient sequence of a function against the fixed eigenbasis.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    coeffs: Vec<f64>,
}

impl SpectralField {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("spectral coefficients"));
        }
        Ok(Self { coeffs })
    }

    pub fn zeros(trunc: usize) -> Self {
        Self {
            coeffs: vec![0.0; trunc],
        }
    }

    /// Single basis mode `k` (1-based) with unit coefficient.
    pub fn mode(k: usize, trunc: usize) -> Self {
        let mut f = Self::zeros(trunc);
        f.coeffs[k - 1] = 1.0;
        f
    }

    pub(crate) fn from_vec_unchecked(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn trunc(&self) -> usize {
        self.coeffs.len()
    }

    fn check_scale(&self, scale: &ScaleSpec) -> Result<()> {
        require(self.trunc() <= scale.available(), || {
            format!(
                "field truncation {} exceeds available eigenvalues {}",
                self.trunc(),
                scale.available()
            )
        })
    }

    /// `‖x‖_t² = Σ_k λ_k^{-2t} x_k²`.
    pub fn norm_sq_t(&self, t: f64, scale: &ScaleSpec) -> Result<f64> {
        self.check_scale(scale)?;
        Ok(self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, x)| scale.eigenvalue(i + 1).powf(-2.0 * t) * x * x)
            .sum())
    }

    pub fn norm_t(&self, t: f64, scale: &ScaleSpec) -> Result<f64> {
        self.norm_sq_t(t, scale).map(f64::sqrt)
    }

    /// Euclidean norm of the coefficients.
    pub fn norm_0(&self) -> f64 {
        self.coeffs.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// `⟨x, y⟩_t = Σ_k λ_k^{-2t} x_k y_k`.
    pub fn inner_t(&self, other: &SpectralField, t: f64, scale: &ScaleSpec) -> Result<f64> {
        if self.trunc() != other.trunc() {
            return Err(Error::Mismatch(format!(
                "truncations {} and {}",
                self.trunc(),
                other.trunc()
            )));
        }
        self.check_scale(scale)?;
        Ok(self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .enumerate()
            .map(|(i, (x, y))| scale.eigenvalue(i + 1).powf(-2.0 * t) * x * y)
            .sum())
    }

    /// Interpolation defect `‖x‖_q^{(s-r)/(s-q)} ‖x‖_s^{(r-q)/(s-q)} − ‖x‖_r`,
    /// nonnegative for every field when `q < r < s`.
    pub fn interpolation_gap(&self, q: f64, r: f64, s: f64, scale: &ScaleSpec) -> Result<f64> {
        require(q < r && r < s, || {
            format!("interpolation needs q < r < s, got ({q}, {r}, {s})")
        })?;
        let nq = self.norm_t(q, scale)?;
        let nr = self.norm_t(r, scale)?;
        let ns = self.norm_t(s, scale)?;
        let theta = (s - r) / (s - q);
        Ok(nq.powf(theta) * ns.powf(1.0 - theta) - nr)
    }
}

impl Add for &SpectralField {
    type Output = SpectralField;
    fn add(self, rhs: &SpectralField) -> SpectralField {
        assert_eq!(self.trunc(), rhs.trunc(), "truncation mismatch");
        SpectralField {
            coeffs: self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &SpectralField {
    type Output = SpectralField;
    fn sub(self, rhs: &SpectralField) -> SpectralField {
        assert_eq!(self.trunc(), rhs.trunc(), "truncation mismatch");
        SpectralField {
            coeffs: self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul<&SpectralField> for f64 {
    type Output = SpectralField;
    fn mul(self, rhs: &SpectralField) -> SpectralField {
        SpectralField {
            coeffs: rhs.coeffs.iter().map(|a| self * a).collect(),
        }
    }
}
