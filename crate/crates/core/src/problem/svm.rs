use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{dot, norm, project_l2_ball_in_place, Constants, Problem};
use crate::error::{Error, Result};
use crate::rng::{data_stream, StreamRng};

/// Linear classification data with labels `b_i = sgn(a_i(1) + z_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmData {
    pub n: usize,
    pub d: usize,
    /// Row-major `n x d`.
    pub a: Vec<f64>,
    /// Labels in {-1, +1}.
    pub b: Vec<f64>,
    pub sigma: f64,
    pub eta: f64,
    pub reg: f64,
}

impl SvmData {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.a[i * self.d..(i + 1) * self.d]
    }
}

/// `F(x) = (1/n) sum max(0, 1 - b_i <a_i, x>) + (reg/2) ||x||^2` over an l2 ball.
///
/// The stochastic oracle picks one sample uniformly at random.
#[derive(Debug, Clone)]
pub struct Svm {
    data: SvmData,
    radius: f64,
    lipschitz: f64,
    seed: Option<u64>,
}

pub const DEFAULT_SVM_RADIUS: f64 = 10.0;

impl Svm {
    pub fn new(data: SvmData) -> Result<Self> {
        Self::with_radius(data, DEFAULT_SVM_RADIUS)
    }

    pub fn with_radius(data: SvmData, radius: f64) -> Result<Self> {
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
        let max_row = (0..data.n).map(|i| norm(data.row(i))).fold(0.0, f64::max);
        let lipschitz = max_row + data.reg * radius;
        Ok(Self {
            data,
            radius,
            lipschitz,
            seed: None,
        })
    }

    pub fn data(&self) -> &SvmData {
        &self.data
    }

    /// Subgradient of the hinge term of sample `i` plus `reg x`, added to `out`.
    #[inline]
    fn add_sample_subgradient(&self, i: usize, x: &[f64], weight: f64, out: &mut [f64]) {
        let row = self.data.row(i);
        let bi = self.data.b[i];
        if 1.0 - bi * dot(row, x) > 0.0 {
            let c = -bi * weight;
            out.iter_mut().zip(row).for_each(|(o, a)| *o += c * a);
        }
    }
}

pub fn gen_svm(d: usize, n: usize, sigma: f64, eta: f64, reg: f64, seed: u64) -> Result<Svm> {
    gen_svm_with_radius(d, n, sigma, eta, reg, DEFAULT_SVM_RADIUS, seed)
}

pub fn gen_svm_with_radius(
    d: usize,
    n: usize,
    sigma: f64,
    eta: f64,
    reg: f64,
    radius: f64,
    seed: u64,
) -> Result<Svm> {
    if d == 0 || n == 0 {
        return Err(Error::InvalidDimensions(format!("d={d} n={n}")));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::NonPositive { name: "sigma", value: sigma });
    }
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "eta",
            reason: format!("must be nonnegative, got {eta}"),
        });
    }
    let mut rng = data_stream(seed);
    let feat = Normal::new(0.0, sigma).expect("sigma checked above");
    let noise = Normal::new(0.0, eta).expect("eta checked above");
    let mut a = Vec::with_capacity(n * d);
    let mut b = Vec::with_capacity(n);
    for _ in 0..n {
        let start = a.len();
        a.extend((0..d).map(|_| feat.sample(&mut rng)));
        let z = noise.sample(&mut rng);
        // A zero argument has probability zero; it is labelled +1.
        b.push(if a[start] + z >= 0.0 { 1.0 } else { -1.0 });
    }
    let data = SvmData {
        n,
        d,
        a,
        b,
        sigma,
        eta,
        reg,
    };
    let mut svm = Svm::with_radius(data, radius)?;
    svm.seed = Some(seed);
    Ok(svm)
}

impl Problem for Svm {
    fn describe(&self) -> String {
        let seed = self.seed.map(|s| format!(",seed={s}")).unwrap_or_default();
        format!(
            "svm:d={},n={},sigma={},eta={},reg={},radius={}{}",
            self.data.d, self.data.n, self.data.sigma, self.data.eta, self.data.reg, self.radius, seed
        )
    }

    fn dim(&self) -> usize {
        self.data.d
    }

    fn objective(&self, x: &[f64]) -> f64 {
        let hinge: f64 = (0..self.data.n)
            .map(|i| (1.0 - self.data.b[i] * dot(self.data.row(i), x)).max(0.0))
            .sum();
        hinge / self.data.n as f64 + 0.5 * self.data.reg * dot(x, x)
    }

    fn subgradient(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().zip(x).for_each(|(o, xi)| *o = self.data.reg * xi);
        let w = 1.0 / self.data.n as f64;
        for i in 0..self.data.n {
            self.add_sample_subgradient(i, x, w, out);
        }
    }

    fn stochastic_subgradient(&self, x: &[f64], rng: &mut StreamRng, out: &mut [f64]) {
        let i = rng.random_range(0..self.data.n);
        out.iter_mut().zip(x).for_each(|(o, xi)| *o = self.data.reg * xi);
        self.add_sample_subgradient(i, x, 1.0, out);
    }

    fn project(&self, x: &mut [f64]) {
        project_l2_ball_in_place(x, self.radius)
    }

    fn constants(&self) -> Constants {
        Constants {
            lipschitz: self.lipschitz,
            diameter: 2.0 * self.radius,
            strong_convexity: self.data.reg,
            f_star: None,
        }
    }

    fn default_start(&self) -> Vec<f64> {
        vec![0.0; self.data.d]
    }

    fn radius(&self) -> f64 {
        self.radius
    }
}
