//! Scalar objectives on `[-1, 1]` with Rademacher noise, used by the lower-bound constructions.

use super::{sgn, Constants, Problem};
use crate::rng::{rademacher, StreamRng};

/// `F(x) = |x| + x^2/2` with oracle `sgn(x) + x + 3 eps`.
#[derive(Debug, Clone, Copy, Default)]
pub struct AbsQuadratic;

/// `F(x) = x^2/2` with oracle `x + eps`.
#[derive(Debug, Clone, Copy, Default)]
pub struct PureQuadratic;

pub fn abs_quadratic_problem() -> AbsQuadratic {
    AbsQuadratic
}

pub fn pure_quadratic_problem() -> PureQuadratic {
    PureQuadratic
}

impl AbsQuadratic {
    pub const NOISE: f64 = 3.0;

    /// Oracle value for a given noise sign.
    #[inline]
    pub fn oracle_with_noise(x: f64, eps: f64) -> f64 {
        sgn(x) + x + Self::NOISE * eps
    }
}

impl PureQuadratic {
    #[inline]
    pub fn oracle_with_noise(x: f64, eps: f64) -> f64 {
        x + eps
    }
}

#[inline]
fn clamp_unit(x: &mut [f64]) {
    x[0] = x[0].clamp(-1.0, 1.0);
}

impl Problem for AbsQuadratic {
    fn describe(&self) -> String {
        "absquad".into()
    }
    fn dim(&self) -> usize {
        1
    }
    fn objective(&self, x: &[f64]) -> f64 {
        x[0].abs() + 0.5 * x[0] * x[0]
    }
    fn subgradient(&self, x: &[f64], out: &mut [f64]) {
        out[0] = sgn(x[0]) + x[0];
    }
    fn stochastic_subgradient(&self, x: &[f64], rng: &mut StreamRng, out: &mut [f64]) {
        out[0] = Self::oracle_with_noise(x[0], rademacher(rng));
    }
    fn project(&self, x: &mut [f64]) {
        clamp_unit(x)
    }
    fn constants(&self) -> Constants {
        Constants {
            lipschitz: 5.0,
            diameter: 2.0,
            strong_convexity: 1.0,
            f_star: Some(0.0),
        }
    }
    fn default_start(&self) -> Vec<f64> {
        vec![1.0]
    }
}

impl Problem for PureQuadratic {
    fn describe(&self) -> String {
        "quad".into()
    }
    fn dim(&self) -> usize {
        1
    }
    fn objective(&self, x: &[f64]) -> f64 {
        0.5 * x[0] * x[0]
    }
    fn subgradient(&self, x: &[f64], out: &mut [f64]) {
        out[0] = x[0];
    }
    fn stochastic_subgradient(&self, x: &[f64], rng: &mut StreamRng, out: &mut [f64]) {
        out[0] = Self::oracle_with_noise(x[0], rademacher(rng));
    }
    fn project(&self, x: &mut [f64]) {
        clamp_unit(x)
    }
    fn constants(&self) -> Constants {
        Constants {
            lipschitz: 2.0,
            diameter: 2.0,
            strong_convexity: 1.0,
            f_star: Some(0.0),
        }
    }
    fn default_start(&self) -> Vec<f64> {
        vec![1.0]
    }
}

/// Normalizes a `G`-Lipschitz, `mu`-strongly convex problem to Lipschitz
/// constant 5 and modulus `lambda / mu`:
/// `F0(x) = (25 mu / G^2) F(s x)` with `s = G / (5 mu)`, oracle `(5/G) g(s x)`.
///
/// SGD on `F0` from `x/s` with steps `mu alpha_t` visits exactly the points
/// `x_t / s` of SGD on `F` with steps `alpha_t`.
#[derive(Debug, Clone)]
pub struct Rescaled<P> {
    inner: P,
    g: f64,
    mu: f64,
}

impl<P: Problem> Rescaled<P> {
    /// Uses the inner problem's own `G` and modulus.
    pub fn new(inner: P) -> Self {
        let c = inner.constants();
        Self::with_constants(inner, c.lipschitz, c.strong_convexity)
    }

    pub fn with_constants(inner: P, g: f64, mu: f64) -> Self {
        assert!(g > 0.0 && mu > 0.0, "rescaling needs positive G and mu");
        Self { inner, g, mu }
    }

    /// Inner point corresponding to `x`: `s x`.
    pub fn to_inner(&self, x: &[f64]) -> Vec<f64> {
        let s = self.scale();
        x.iter().map(|v| v * s).collect()
    }

    pub fn from_inner(&self, x: &[f64]) -> Vec<f64> {
        let s = self.scale();
        x.iter().map(|v| v / s).collect()
    }

    pub fn scale(&self) -> f64 {
        self.g / (5.0 * self.mu)
    }

    fn value_factor(&self) -> f64 {
        25.0 * self.mu / (self.g * self.g)
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }
}

impl<P: Problem> Problem for Rescaled<P> {
    fn describe(&self) -> String {
        format!("rescaled(g={},mu={},{})", self.g, self.mu, self.inner.describe())
    }
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn objective(&self, x: &[f64]) -> f64 {
        self.value_factor() * self.inner.objective(&self.to_inner(x))
    }
    fn subgradient(&self, x: &[f64], out: &mut [f64]) {
        self.inner.subgradient(&self.to_inner(x), out);
        let c = 5.0 / self.g;
        out.iter_mut().for_each(|v| *v *= c);
    }
    fn stochastic_subgradient(&self, x: &[f64], rng: &mut StreamRng, out: &mut [f64]) {
        self.inner.stochastic_subgradient(&self.to_inner(x), rng, out);
        let c = 5.0 / self.g;
        out.iter_mut().for_each(|v| *v *= c);
    }
    fn project(&self, x: &mut [f64]) {
        // Isotropic scaling maps the projection onto W to the projection onto W / s.
        let mut y = self.to_inner(x);
        self.inner.project(&mut y);
        let s = self.scale();
        x.iter_mut().zip(&y).for_each(|(xi, yi)| *xi = yi / s);
    }
    fn constants(&self) -> Constants {
        let c = self.inner.constants();
        Constants {
            lipschitz: 5.0 * c.lipschitz / self.g,
            diameter: c.diameter / self.scale(),
            strong_convexity: c.strong_convexity / self.mu,
            f_star: c.f_star.map(|f| f * self.value_factor()),
        }
    }
    fn default_start(&self) -> Vec<f64> {
        self.from_inner(&self.inner.default_start())
    }
    fn is_deterministic(&self) -> bool {
        self.inner.is_deterministic()
    }
    fn radius(&self) -> f64 {
        self.inner.radius() / self.scale()
    }
}
