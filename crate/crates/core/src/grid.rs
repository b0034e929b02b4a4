//! Functions sampled on a uniform mesh of `[0, 1]` and their discrete norms.

use std::io::{BufRead, Write};

use rand::Rng as _;

use crate::error::{require, Error, Result};
use crate::numerics::rng_stream;

/// Above this many nodes the Hölder seminorm switches from all pairs to a
/// fixed-seed subsample.
pub const HOLDER_ALL_PAIRS_MAX_NODES: usize = 4096;
const HOLDER_SAMPLED_PAIRS: usize = 10_000;

/// Values on the nodes `x_i = i/m`, `i = 0..=m`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        require(values.len() >= 5, || {
            format!("mesh needs m >= 4 (got {} nodes)", values.len())
        })?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("grid values"));
        }
        Ok(Self { values })
    }

    /// Sample `f` on a mesh with `m` cells.
    pub fn from_fn(m: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let h = 1.0 / m as f64;
        Self::new((0..=m).map(|i| f(i as f64 * h)).collect())
    }

    pub fn constant(m: usize, c: f64) -> Result<Self> {
        Self::from_fn(m, |_| c)
    }

    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Number of cells.
    pub fn m(&self) -> usize {
        self.values.len() - 1
    }

    pub fn h(&self) -> f64 {
        1.0 / self.m() as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.h()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn same_mesh(&self, other: &GridFunction) -> Result<()> {
        if self.values.len() != other.values.len() {
            return Err(Error::Mismatch(format!(
                "meshes with {} and {} cells",
                self.m(),
                other.m()
            )));
        }
        Ok(())
    }

    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction> {
        self.same_mesh(other)?;
        Ok(Self {
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        Self {
            values: self.values.iter().map(|v| f(*v)).collect(),
        }
    }

    /// Piecewise-linear interpolation at `x ∈ [0, 1]`.
    pub fn eval(&self, x: f64) -> f64 {
        let m = self.m();
        let s = (x.clamp(0.0, 1.0) * m as f64).min(m as f64);
        let i = (s.floor() as usize).min(m - 1);
        let w = s - i as f64;
        (1.0 - w) * self.values[i] + w * self.values[i + 1]
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// First derivative: centered inside, second-order one-sided at the ends.
    pub fn derivative(&self) -> GridFunction {
        let g = &self.values;
        let n = g.len();
        let h = self.h();
        let mut d = vec![0.0; n];
        d[0] = (-3.0 * g[0] + 4.0 * g[1] - g[2]) / (2.0 * h);
        d[n - 1] = (3.0 * g[n - 1] - 4.0 * g[n - 2] + g[n - 3]) / (2.0 * h);
        for i in 1..n - 1 {
            d[i] = (g[i + 1] - g[i - 1]) / (2.0 * h);
        }
        Self { values: d }
    }

    /// Second derivative: centered inside, second-order one-sided at the ends.
    pub fn second_derivative(&self) -> GridFunction {
        let g = &self.values;
        let n = g.len();
        let h2 = self.h() * self.h();
        let mut d = vec![0.0; n];
        d[0] = (2.0 * g[0] - 5.0 * g[1] + 4.0 * g[2] - g[3]) / h2;
        d[n - 1] = (2.0 * g[n - 1] - 5.0 * g[n - 2] + 4.0 * g[n - 3] - g[n - 4]) / h2;
        for i in 1..n - 1 {
            d[i] = (g[i + 1] - 2.0 * g[i] + g[i - 1]) / h2;
        }
        Self { values: d }
    }

    /// Discrete Hölder seminorm `max |g_i − g_j| / |x_i − x_j|^β`.
    pub fn holder_seminorm(&self, beta: f64) -> f64 {
        let g = &self.values;
        let n = g.len();
        let h = self.h();
        if n <= HOLDER_ALL_PAIRS_MAX_NODES {
            let mut best = 0.0f64;
            for s in 1..n {
                let w = (s as f64 * h).powf(-beta);
                let mut local = 0.0f64;
                for i in 0..n - s {
                    local = local.max((g[i + s] - g[i]).abs());
                }
                best = best.max(local * w);
            }
            best
        } else {
            let w1 = h.powf(-beta);
            let mut best = g.windows(2).fold(0.0f64, |acc, p| acc.max((p[1] - p[0]).abs() * w1));
            let mut rng = rng_stream(0x5eed_401d, n as u64);
            for _ in 0..HOLDER_SAMPLED_PAIRS {
                let i = rng.random_range(0..n);
                let j = rng.random_range(0..n);
                if i != j {
                    let dist = (i as f64 - j as f64).abs() * h;
                    best = best.max((g[i] - g[j]).abs() / dist.powf(beta));
                }
            }
            best
        }
    }

    /// Discrete `C^α` norm. Integer `α = k` gives `Σ_{j≤k} ‖D^j g‖_∞`;
    /// otherwise `α = k + β` adds the `β`-Hölder seminorm of `D^k g`.
    /// Supports `0 ≤ α ≤ 3`.
    pub fn holder_norm(&self, alpha: f64) -> Result<f64> {
        require((0.0..=3.0).contains(&alpha), || {
            format!("Hölder index {alpha} outside [0, 3]")
        })?;
        let k = alpha.floor() as usize;
        let beta = alpha - k as f64;
        let mut total = self.sup_norm();
        let mut current = self.clone();
        for _ in 0..k {
            current = current.derivative();
            total += current.sup_norm();
        }
        if beta > 1e-12 {
            total += current.holder_seminorm(beta);
        }
        Ok(total)
    }

    /// Discrete `C²` norm `‖g‖_∞ + ‖g′‖_∞ + ‖g″‖_∞` with the second
    /// derivative taken directly from second differences.
    pub fn c2_norm(&self) -> f64 {
        self.sup_norm() + self.derivative().sup_norm() + self.second_derivative().sup_norm()
    }

    /// Write `x,value` rows with a header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,value")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{},{}", self.x(i), v)?;
        }
        Ok(())
    }

    /// Read `x,value` rows; the x column must be the uniform mesh.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut xs = Vec::new();
        let mut vs = Vec::new();
        for line in r.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("x,") {
                continue;
            }
            let mut parts = line.split(',');
            let parse = |s: Option<&str>| -> Result<f64> {
                s.and_then(|t| t.trim().parse::<f64>().ok())
                    .ok_or_else(|| Error::Io(format!("malformed grid row '{line}'")))
            };
            xs.push(parse(parts.next())?);
            vs.push(parse(parts.next())?);
        }
        let g = Self::new(vs)?;
        let h = g.h();
        for (i, x) in xs.iter().enumerate() {
            if (x - i as f64 * h).abs() > 1e-9 {
                return Err(Error::Mismatch(format!("row {i}: x = {x} is not on the uniform mesh")));
            }
        }
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_tiny_mesh() {
        assert!(GridFunction::new(vec![0.0; 4]).is_err());
        assert!(GridFunction::new(vec![0.0, 1.0, f64::INFINITY, 0.0, 0.0]).is_err());
    }

    #[test]
    fn derivatives_exact_on_quadratics() {
        let g = GridFunction::from_fn(16, |x| 3.0 * x * x - x + 2.0).unwrap();
        for (i, d) in g.derivative().values().iter().enumerate() {
            assert!((d - (6.0 * g.x(i) - 1.0)).abs() < 1e-11);
        }
        for d in g.second_derivative().values() {
            assert!((d - 6.0).abs() < 1e-9);
        }
    }

    #[test]
    fn holder_of_linear_function() {
        // [x]_β on [0,1] is max_δ δ^{1-β} = 1
        let g = GridFunction::from_fn(64, |x| x).unwrap();
        assert!((g.holder_seminorm(0.5) - 1.0).abs() < 1e-12);
        assert!((g.holder_norm(0.5).unwrap() - 2.0).abs() < 1e-12);
        assert!((g.holder_norm(1.0).unwrap() - 2.0).abs() < 1e-12);
        assert!((g.holder_norm(0.0).unwrap() - 1.0).abs() < 1e-12);
        assert!(g.holder_norm(3.5).is_err());
    }

    #[test]
    fn sampled_seminorm_is_a_lower_bound() {
        let m = 5000;
        let g = GridFunction::from_fn(m, |x| (7.0 * x).sin()).unwrap();
        let s = g.holder_seminorm(0.7);
        // neighbouring pairs alone give ≈ 7 h^{0.3}; the sup is at most 7
        assert!(s > 0.0 && s <= 7.0 + 1e-9);
        assert_eq!(s, g.holder_seminorm(0.7));
    }

    #[test]
    fn interpolation_and_csv() {
        let g = GridFunction::from_fn(8, |x| 2.0 * x).unwrap();
        assert!((g.eval(0.3) - 0.6).abs() < 1e-14);
        assert_eq!(g.eval(1.0), 2.0);
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let back = GridFunction::read_csv(&buf[..]).unwrap();
        assert_eq!(back.m(), 8);
        for (a, b) in back.values().iter().zip(g.values()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(GridFunction::read_csv(&b"x,value\n0,1\n0.3,2\n0.5,1\n0.75,1\n1,0\n"[..]).is_err());
    }
}
