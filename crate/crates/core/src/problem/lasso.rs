use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::{dot, norm, project_l2_ball_in_place, sgn, Constants, Problem};
use crate::error::{Error, Result};
use crate::rng::{data_stream, StreamRng};

/// Synthetic sparse regression data: `b = A x_true + z`.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoData {
    pub n: usize,
    pub d: usize,
    /// Row-major `n x d`.
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub x_true: Vec<f64>,
    pub sigma: f64,
    pub reg: f64,
}

impl LassoData {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.a[i * self.d..(i + 1) * self.d]
    }
}

/// `F(x) = (1/n) sum (<a_i, x> - b_i)^2 + reg ||x||_1` over an l2 ball.
///
/// The oracle is full-batch.
#[derive(Debug, Clone)]
pub struct Lasso {
    data: LassoData,
    radius: f64,
    lipschitz: f64,
    sampled_lipschitz: f64,
    seed: Option<u64>,
}

impl Lasso {
    /// Uses `radius = 10 ||x_true||` (or 10 when `x_true = 0`).
    pub fn new(data: LassoData) -> Result<Self> {
        let r = 10.0 * norm(&data.x_true);
        Self::with_radius(data, if r > 0.0 { r } else { 10.0 })
    }

    pub fn with_radius(data: LassoData, radius: f64) -> Result<Self> {
        if data.n == 0 || data.d == 0 || data.a.len() != data.n * data.d || data.b.len() != data.n {
            return Err(Error::InvalidDimensions(format!(
                "n={} d={} |A|={} |b|={}",
                data.n,
                data.d,
                data.a.len(),
                data.b.len()
            )));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::NonPositive { name: "radius", value: radius });
        }
        if !(data.reg > 0.0) {
            return Err(Error::NonPositive { name: "reg", value: data.reg });
        }
        let lipschitz = analytic_lipschitz(&data, radius);
        let mut lasso = Self {
            data,
            radius,
            lipschitz,
            sampled_lipschitz: 0.0,
            seed: None,
        };
        lasso.sampled_lipschitz = lasso.sample_lipschitz(512, 0);
        Ok(lasso)
    }

    pub fn data(&self) -> &LassoData {
        &self.data
    }

    /// Largest subgradient norm seen at random points of `W` (a lower estimate of `G`).
    pub fn sampled_lipschitz(&self) -> f64 {
        self.sampled_lipschitz
    }

    fn sample_lipschitz(&self, count: usize, seed: u64) -> f64 {
        let mut rng = data_stream(seed);
        let d = self.data.d;
        let mut g = vec![0.0; d];
        let mut best = 0.0_f64;
        for _ in 0..count {
            let mut x: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let n = norm(&x);
            let r = self.radius * rng.random::<f64>().powf(1.0 / d as f64);
            x.iter_mut().for_each(|v| *v *= r / n);
            self.subgradient(&x, &mut g);
            best = best.max(norm(&g));
        }
        best
    }

    fn residuals(&self, x: &[f64]) -> impl Iterator<Item = f64> + '_ {
        let x = x.to_vec();
        (0..self.data.n).map(move |i| dot(self.data.row(i), &x) - self.data.b[i])
    }
}

/// `(2/n) ||A||_F (||A||_F R + ||b||) + reg sqrt(d)`, a guaranteed upper bound
/// on every subgradient norm over the ball of radius `R`.
fn analytic_lipschitz(data: &LassoData, radius: f64) -> f64 {
    let fro = norm(&data.a);
    2.0 / data.n as f64 * fro * (fro * radius + norm(&data.b)) + data.reg * (data.d as f64).sqrt()
}

/// Draws `A` with i.i.d. standard normal entries, `x_true` with `s` entries of
/// random sign at uniformly chosen coordinates, and `b = A x_true + N(0, sigma^2)`.
pub fn gen_lasso(d: usize, s: usize, n: usize, sigma: f64, reg: f64, seed: u64) -> Result<Lasso> {
    if d == 0 || n == 0 {
        return Err(Error::InvalidDimensions(format!("d={d} n={n}")));
    }
    if s == 0 || s > d {
        return Err(Error::InvalidSparsity { s, d });
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "sigma",
            reason: format!("must be nonnegative, got {sigma}"),
        });
    }
    if !(reg > 0.0) {
        return Err(Error::NonPositive { name: "reg", value: reg });
    }
    let mut rng = data_stream(seed);
    let mut x_true = vec![0.0; d];
    for j in sample(&mut rng, d, s) {
        x_true[j] = if rng.random::<bool>() { 1.0 } else { -1.0 };
    }
    let a: Vec<f64> = (0..n * d).map(|_| rng.sample(StandardNormal)).collect();
    let noise = Normal::new(0.0, sigma).expect("sigma checked above");
    let b: Vec<f64> = (0..n)
        .map(|i| dot(&a[i * d..(i + 1) * d], &x_true) + noise.sample(&mut rng))
        .collect();
    let data = LassoData {
        n,
        d,
        a,
        b,
        x_true,
        sigma,
        reg,
    };
    let mut lasso = Lasso::new(data)?;
    lasso.seed = Some(seed);
    Ok(lasso)
}

impl Problem for Lasso {
    fn describe(&self) -> String {
        let seed = self.seed.map(|s| format!(",seed={s}")).unwrap_or_default();
        format!(
            "lasso:d={},s={},n={},sigma={},reg={},radius={}{}",
            self.data.d,
            self.data.x_true.iter().filter(|v| **v != 0.0).count(),
            self.data.n,
            self.data.sigma,
            self.data.reg,
            self.radius,
            seed
        )
    }

    fn dim(&self) -> usize {
        self.data.d
    }

    fn objective(&self, x: &[f64]) -> f64 {
        let sq: f64 = self.residuals(x).map(|r| r * r).sum();
        sq / self.data.n as f64 + self.data.reg * x.iter().map(|v| v.abs()).sum::<f64>()
    }

    fn subgradient(&self, x: &[f64], out: &mut [f64]) {
        let d = self.data.d;
        let scale = 2.0 / self.data.n as f64;
        out.iter_mut().zip(x).for_each(|(o, xi)| *o = self.data.reg * sgn(*xi));
        for i in 0..self.data.n {
            let row = self.data.row(i);
            let r = (dot(row, x) - self.data.b[i]) * scale;
            for j in 0..d {
                out[j] += r * row[j];
            }
        }
    }

    fn stochastic_subgradient(&self, x: &[f64], _rng: &mut StreamRng, out: &mut [f64]) {
        self.subgradient(x, out)
    }

    fn project(&self, x: &mut [f64]) {
        project_l2_ball_in_place(x, self.radius)
    }

    fn constants(&self) -> Constants {
        Constants {
            lipschitz: self.lipschitz,
            diameter: 2.0 * self.radius,
            strong_convexity: 0.0,
            f_star: None,
        }
    }

    fn default_start(&self) -> Vec<f64> {
        vec![0.0; self.data.d]
    }

    fn is_deterministic(&self) -> bool {
        true
    }

    fn radius(&self) -> f64 {
        self.radius
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_for_seed;
    use approx::assert_relative_eq;

    #[test]
    fn paper_configuration_builds() {
        let p = gen_lasso(100, 60, 80, 0.1, 0.2, 3).unwrap();
        assert_eq!(p.dim(), 100);
        assert_eq!(p.data().x_true.iter().filter(|v| **v != 0.0).count(), 60);
        assert!(p.data().x_true.iter().all(|v| [-1.0, 0.0, 1.0].contains(v)));
        assert_relative_eq!(p.radius(), 10.0 * 60f64.sqrt(), max_relative = 1e-12);
        assert!(p.sampled_lipschitz() <= p.constants().lipschitz);
    }

    #[test]
    fn invalid_inputs() {
        assert!(matches!(gen_lasso(5, 6, 3, 0.1, 0.1, 0), Err(Error::InvalidSparsity { .. })));
        assert!(matches!(gen_lasso(5, 0, 3, 0.1, 0.1, 0), Err(Error::InvalidSparsity { .. })));
        assert!(matches!(gen_lasso(0, 0, 3, 0.1, 0.1, 0), Err(Error::InvalidDimensions(_))));
        assert!(matches!(gen_lasso(5, 2, 0, 0.1, 0.1, 0), Err(Error::InvalidDimensions(_))));
    }

    #[test]
    fn generation_is_seeded() {
        let a = gen_lasso(10, 3, 7, 0.5, 0.1, 11).unwrap();
        let b = gen_lasso(10, 3, 7, 0.5, 0.1, 11).unwrap();
        let c = gen_lasso(10, 3, 7, 0.5, 0.1, 12).unwrap();
        assert_eq!(a.data(), b.data());
        assert_ne!(a.data(), c.data());
    }

    #[test]
    fn zero_residual_at_truth() {
        let a = 1.7;
        let x_true = -1.0;
        let data = LassoData {
            n: 1,
            d: 1,
            a: vec![a],
            b: vec![a * x_true],
            x_true: vec![x_true],
            sigma: 0.0,
            reg: 1.0,
        };
        let p = Lasso::new(data).unwrap();
        assert_eq!(p.objective(&[x_true]), 1.0 * x_true.abs());
    }

    #[test]
    fn subgradient_at_origin_ignores_l1_term() {
        let p = gen_lasso(6, 2, 4, 0.1, 0.3, 5).unwrap();
        let mut g = vec![0.0; 6];
        p.subgradient(&[0.0; 6], &mut g);
        let data = p.data();
        for (j, gj) in g.iter().enumerate() {
            let want: f64 = (0..4).map(|i| 2.0 / 4.0 * (-data.b[i]) * data.row(i)[j]).sum();
            assert_relative_eq!(*gj, want, max_relative = 1e-12, epsilon = 1e-14);
        }
        let mut h = vec![0.0; 6];
        p.stochastic_subgradient(&[0.0; 6], &mut stream_for_seed(1), &mut h);
        assert_eq!(g, h);
    }

    #[test]
    fn subgradient_matches_finite_differences_away_from_kinks() {
        let p = gen_lasso(4, 2, 9, 0.2, 0.5, 8).unwrap();
        let x = [0.3, -0.7, 1.1, 0.05];
        let mut g = vec![0.0; 4];
        p.subgradient(&x, &mut g);
        let h = 1e-6;
        for j in 0..4 {
            let mut xp = x;
            let mut xm = x;
            xp[j] += h;
            xm[j] -= h;
            let fd = (p.objective(&xp) - p.objective(&xm)) / (2.0 * h);
            assert_relative_eq!(g[j], fd, max_relative = 1e-6, epsilon = 1e-7);
        }
    }
}
