//! Convex test problems with exact objectives, subgradient oracles and projections.

mod lasso;
mod reference;
mod scalar;
mod svm;

pub use lasso::{gen_lasso, Lasso, LassoData};
pub use reference::{reference_optimum, reference_optimum_from};
pub use scalar::{abs_quadratic_problem, pure_quadratic_problem, AbsQuadratic, PureQuadratic, Rescaled};
pub use svm::{gen_svm, Svm, SvmData};

use crate::rng::StreamRng;

/// Problem constants: Lipschitz bound `G`, diameter `D`, strong convexity
/// modulus (0 when not strongly convex) and the optimum value when known.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constants {
    pub lipschitz: f64,
    pub diameter: f64,
    pub strong_convexity: f64,
    pub f_star: Option<f64>,
}

/// A convex objective over a closed convex set `W`.
///
/// `stochastic_subgradient` must return vectors of norm at most
/// `constants().lipschitz` for every point of `W`, with mean equal to the
/// value written by `subgradient`.
pub trait Problem: Send + Sync {
    /// Short parameter string, used in CSV headers and config hashes.
    fn describe(&self) -> String;

    fn dim(&self) -> usize;

    fn objective(&self, x: &[f64]) -> f64;

    /// Deterministic subgradient (the mean of the stochastic oracle).
    fn subgradient(&self, x: &[f64], out: &mut [f64]);

    fn stochastic_subgradient(&self, x: &[f64], rng: &mut StreamRng, out: &mut [f64]);

    /// Euclidean projection onto `W`, in place.
    fn project(&self, x: &mut [f64]);

    fn constants(&self) -> Constants;

    /// Start point used when none is given.
    fn default_start(&self) -> Vec<f64>;

    /// True when the stochastic oracle ignores the random stream.
    fn is_deterministic(&self) -> bool {
        false
    }

    /// Radius of the feasible ball centred at the origin.
    fn radius(&self) -> f64 {
        self.constants().diameter / 2.0
    }
}

impl<P: Problem + ?Sized> Problem for Box<P> {
    fn describe(&self) -> String {
        (**self).describe()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn objective(&self, x: &[f64]) -> f64 {
        (**self).objective(x)
    }
    fn subgradient(&self, x: &[f64], out: &mut [f64]) {
        (**self).subgradient(x, out)
    }
    fn stochastic_subgradient(&self, x: &[f64], rng: &mut StreamRng, out: &mut [f64]) {
        (**self).stochastic_subgradient(x, rng, out)
    }
    fn project(&self, x: &mut [f64]) {
        (**self).project(x)
    }
    fn constants(&self) -> Constants {
        (**self).constants()
    }
    fn default_start(&self) -> Vec<f64> {
        (**self).default_start()
    }
    fn is_deterministic(&self) -> bool {
        (**self).is_deterministic()
    }
    fn radius(&self) -> f64 {
        (**self).radius()
    }
}

/// Full-batch variant of a problem: the oracle returns the deterministic subgradient.
#[derive(Debug, Clone)]
pub struct Deterministic<P>(pub P);

impl<P: Problem> Problem for Deterministic<P> {
    fn describe(&self) -> String {
        format!("deterministic({})", self.0.describe())
    }
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn objective(&self, x: &[f64]) -> f64 {
        self.0.objective(x)
    }
    fn subgradient(&self, x: &[f64], out: &mut [f64]) {
        self.0.subgradient(x, out)
    }
    fn stochastic_subgradient(&self, x: &[f64], _rng: &mut StreamRng, out: &mut [f64]) {
        self.0.subgradient(x, out)
    }
    fn project(&self, x: &mut [f64]) {
        self.0.project(x)
    }
    fn constants(&self) -> Constants {
        self.0.constants()
    }
    fn default_start(&self) -> Vec<f64> {
        self.0.default_start()
    }
    fn is_deterministic(&self) -> bool {
        true
    }
    fn radius(&self) -> f64 {
        self.0.radius()
    }
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Sign with `sgn(0) = 0`.
#[inline]
pub(crate) fn sgn(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Projection onto the centred ball of radius `r`.
pub fn project_l2_ball(x: &[f64], r: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    project_l2_ball_in_place(&mut y, r);
    y
}

pub fn project_l2_ball_in_place(x: &mut [f64], r: f64) {
    let n = norm(x);
    if n > r {
        let s = r / n;
        x.iter_mut().for_each(|v| *v *= s);
    }
}
