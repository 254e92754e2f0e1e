//! Seeded Monte-Carlo ensembles with thread-count-independent reduction.
//!
//! Seeds `seed0 .. seed0 + n` are split by a fixed binary tree over the seed
//! range; each leaf of at most [`LEAF_SIZE`] seeds is accumulated in seed
//! order and siblings are merged left to right. The tree shape depends only
//! on `n`, so results are bitwise identical for any number of threads.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::problem::Problem;
use crate::sgd::{run_sgd, RunConfig};

pub const LEAF_SIZE: u64 = 8;

/// Per-coordinate count, mean and centred sum of squares.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub n: u64,
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
}

impl Moments {
    pub fn empty(len: usize) -> Self {
        Self {
            n: 0,
            mean: vec![0.0; len],
            m2: vec![0.0; len],
        }
    }

    pub fn push(&mut self, x: &[f64]) {
        if self.n == 0 && self.mean.is_empty() {
            self.mean = vec![0.0; x.len()];
            self.m2 = vec![0.0; x.len()];
        }
        assert_eq!(x.len(), self.mean.len(), "sample length changed within an ensemble");
        self.n += 1;
        let w = 1.0 / self.n as f64;
        for ((m, s), v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let d = v - *m;
            *m += d * w;
            *s += d * (v - *m);
        }
    }

    /// Pairwise combination of two disjoint samples.
    pub fn merge(self, other: Self) -> Self {
        if self.n == 0 {
            return other;
        }
        if other.n == 0 {
            return self;
        }
        assert_eq!(self.mean.len(), other.mean.len(), "sample length changed within an ensemble");
        let n = self.n + other.n;
        let (na, nb) = (self.n as f64, other.n as f64);
        let frac = nb / n as f64;
        let cross = na * nb / n as f64;
        let mut mean = self.mean;
        let mut m2 = self.m2;
        for i in 0..mean.len() {
            let d = other.mean[i] - mean[i];
            mean[i] += d * frac;
            m2[i] += other.m2[i] + d * d * cross;
        }
        Self { n, mean, m2 }
    }

    /// Unbiased sample variance; 0 for fewer than two samples.
    pub fn variance(&self) -> Vec<f64> {
        if self.n < 2 {
            return vec![0.0; self.mean.len()];
        }
        let d = (self.n - 1) as f64;
        self.m2.iter().map(|s| (s / d).max(0.0)).collect()
    }

    /// Standard error of the mean; 0 for a single sample.
    pub fn stderr(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.variance().into_iter().map(|v| (v / n).sqrt()).collect()
    }
}

/// Evaluates `f(seed)` for each seed in order, in parallel. The first error
/// in seed order is returned, tagged with its seed.
pub fn map_seeds<R, F>(seed0: u64, n_seeds: u64, f: F) -> Result<Vec<R>>
where
    R: Send,
    F: Fn(u64) -> Result<R> + Sync,
{
    let results: Vec<Result<R>> = (0..n_seeds).into_par_iter().map(|j| f(seed0 + j)).collect();
    results
        .into_iter()
        .enumerate()
        .map(|(j, r)| r.map_err(|e| tag_seed(seed0 + j as u64, e)))
        .collect()
}

fn tag_seed(seed: u64, e: Error) -> Error {
    match e {
        Error::SeedFailed { .. } => e,
        other => Error::SeedFailed {
            seed,
            source: Box::new(other),
        },
    }
}

/// Moments of the vectors `f(seed)` over `seed0 .. seed0 + n_seeds`.
pub fn aggregate_seeds<F>(seed0: u64, n_seeds: u64, f: F) -> Result<Moments>
where
    F: Fn(u64) -> Result<Vec<f64>> + Sync,
{
    fn go<F>(lo: u64, hi: u64, f: &F) -> Result<Moments>
    where
        F: Fn(u64) -> Result<Vec<f64>> + Sync,
    {
        if hi - lo <= LEAF_SIZE {
            let mut m = Moments::empty(0);
            for s in lo..hi {
                let v = f(s).map_err(|e| tag_seed(s, e))?;
                m.push(&v);
            }
            return Ok(m);
        }
        let mid = lo + (hi - lo) / 2;
        let (a, b) = rayon::join(|| go(lo, mid, f), || go(mid, hi, f));
        Ok(a?.merge(b?))
    }
    if n_seeds == 0 {
        return Err(Error::InvalidParameter {
            name: "n_seeds",
            reason: "must be at least 1".into(),
        });
    }
    go(seed0, seed0 + n_seeds, &f)
}

/// Across-seed suboptimality statistics `F(x_t) - f_star`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSummary {
    pub n_seeds: u64,
    pub f_star: f64,
    pub mean_subopt: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl EnsembleSummary {
    pub fn from_moments(m: Moments, f_star: f64) -> Self {
        let stderr = m.stderr();
        Self {
            n_seeds: m.n,
            f_star,
            mean_subopt: m.mean,
            stderr,
        }
    }

    pub fn final_subopt(&self) -> f64 {
        *self.mean_subopt.last().expect("summary is never empty")
    }

    pub fn final_stderr(&self) -> f64 {
        *self.stderr.last().expect("summary is never empty")
    }

    /// Writes `t,mean_subopt,stderr,n_seeds`. Under a final-only record the
    /// single row is labelled with `horizon`.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W, horizon: usize) -> Result<()> {
        writeln!(out, "t,mean_subopt,stderr,n_seeds")?;
        let offset = horizon + 1 - self.mean_subopt.len();
        for (i, (m, s)) in self.mean_subopt.iter().zip(&self.stderr).enumerate() {
            writeln!(out, "{},{m:e},{s:e},{}", i + offset, self.n_seeds)?;
        }
        Ok(())
    }
}

/// Runs `base` under seeds `seed0 .. seed0 + n_seeds` and summarizes the
/// recorded objective values minus `f_star` (the problem's own optimum when `None`).
pub fn run_ensemble<P: Problem + ?Sized>(
    problem: &P,
    base: &RunConfig<'_>,
    n_seeds: u64,
    seed0: u64,
    f_star: Option<f64>,
) -> Result<EnsembleSummary> {
    let f_star = f_star.or(problem.constants().f_star).ok_or(Error::InvalidParameter {
        name: "f_star",
        reason: "problem has no known optimum; pass one explicitly".into(),
    })?;
    let m = aggregate_seeds(seed0, n_seeds, |seed| {
        let tr = run_sgd(problem, &base.with_seed(seed))?;
        Ok(tr.objective_values.iter().map(|v| v - f_star).collect())
    })?;
    Ok(EnsembleSummary::from_moments(m, f_star))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{abs_quadratic_problem, gen_lasso};
    use crate::schedule::{strong_schedule, weak_schedule};
    use crate::sgd::RecordMode;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn single_seed_matches_run() {
        let p = abs_quadratic_problem();
        let s = strong_schedule(50, 1.0).unwrap();
        let base = RunConfig::new(&s, 0);
        let e = run_ensemble(&p, &base, 1, 12, None).unwrap();
        let tr = run_sgd(&p, &base.with_seed(12)).unwrap();
        assert_eq!(e.mean_subopt, tr.objective_values);
        assert!(e.stderr.iter().all(|s| *s == 0.0));
    }

    #[test]
    fn deterministic_problem_has_zero_stderr() {
        let p = gen_lasso(8, 3, 6, 0.1, 0.2, 1).unwrap();
        let s = weak_schedule(40, 1.0).unwrap();
        let e = run_ensemble(&p, &RunConfig::new(&s, 0), 11, 0, Some(0.0)).unwrap();
        assert!(e.stderr.iter().all(|s| *s == 0.0));
    }

    #[test]
    fn independent_of_thread_count() {
        let p = abs_quadratic_problem();
        let s = strong_schedule(300, 1.0).unwrap();
        let base = RunConfig::new(&s, 0);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_ensemble(&p, &base, 37, 5, None).unwrap())
        };
        let one = run(1);
        assert_eq!(one, run(4));
        assert_eq!(one, run(3));
    }

    #[test]
    fn errors_carry_seed() {
        let err = aggregate_seeds(10, 20, |s| {
            if s == 23 {
                Err(Error::EmptyReport)
            } else {
                Ok(vec![1.0])
            }
        })
        .unwrap_err();
        assert!(matches!(err, Error::SeedFailed { seed: 23, .. }));
        let err = map_seeds(0, 5, |s| if s >= 2 { Err(Error::EmptyReport) } else { Ok(s) }).unwrap_err();
        assert!(matches!(err, Error::SeedFailed { seed: 2, .. }));
        assert_eq!(map_seeds(3, 4, Ok).unwrap(), vec![3, 4, 5, 6]);
    }

    #[test]
    fn suboptimality_is_nonnegative_up_to_noise() {
        let p = abs_quadratic_problem();
        let s = strong_schedule(256, 1.0).unwrap();
        let base = RunConfig::new(&s, 0).with_record(RecordMode::ObjectivesOnly);
        let e = run_ensemble(&p, &base, 64, 0, None).unwrap();
        for (m, s) in e.mean_subopt.iter().zip(&e.stderr) {
            assert!(*m >= -3.0 * s);
        }
    }

    proptest! {
        #[test]
        fn tree_moments_match_two_pass(xs in proptest::collection::vec(-1e3f64..1e3, 1..80)) {
            let n = xs.len() as u64;
            let m = aggregate_seeds(0, n, |s| Ok(vec![xs[s as usize]])).unwrap();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = if n > 1 {
                xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
            } else {
                0.0
            };
            prop_assert_eq!(m.n, n);
            assert_relative_eq!(m.mean[0], mean, epsilon = 1e-9, max_relative = 1e-12);
            assert_relative_eq!(m.variance()[0], var, epsilon = 1e-7, max_relative = 1e-9);
        }
    }
}
