//! Log-log slope fits of last-iterate suboptimality against the horizon.

use std::io::Write;

use rand::Rng;

use crate::ensemble::map_seeds;
use crate::error::{Error, Result};
use crate::problem::{reference_optimum, Problem};
use crate::rng::data_stream;
use crate::schedule::Family;
use crate::sgd::{run_sgd, RecordMode, RunConfig};

use super::config::ScheduleSpec;

/// Points with mean below this many standard errors are dropped from fits.
pub const NOISE_FLOOR: f64 = 5.0;
pub const BOOTSTRAP_RESAMPLES: usize = 2000;

/// Least-squares `(slope, intercept)` of `ln y` against `ln x`.
pub fn fit_power_law(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch {
            expected: xs.len(),
            got: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::InvalidParameter {
            name: "points",
            reason: "need at least two points to fit a slope".into(),
        });
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidParameter {
            name: "points",
            reason: "log-log fit needs positive values".into(),
        });
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter {
            name: "points",
            reason: "all x values coincide".into(),
        });
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Explicit last-iterate bound for the modified schedules:
/// `15 G D / sqrt(T)` (weak) and `130 G^2 / (lambda T)` (strong).
pub fn theory_bound<P: Problem + ?Sized>(problem: &P, family: Family, horizon: usize) -> Option<f64> {
    let c = problem.constants();
    let t = horizon as f64;
    match family {
        Family::WeakModified => Some(15.0 * c.lipschitz * c.diameter / t.sqrt()),
        Family::StrongModified if c.strong_convexity > 0.0 => {
            Some(130.0 * c.lipschitz * c.lipschitz / (c.strong_convexity * t))
        }
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub schedule: String,
    pub f_star: f64,
    pub horizons: Vec<usize>,
    pub subopt: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Whether each horizon entered the fit.
    pub used: Vec<bool>,
    pub slope: f64,
    pub intercept: f64,
    /// Percentile bootstrap interval (2.5%, 97.5%) over seeds.
    pub slope_ci: (f64, f64),
    pub bound: Option<Vec<f64>>,
    pub max_bound_ratio: Option<f64>,
    /// Per-horizon, per-seed final suboptimality.
    pub samples: Vec<Vec<f64>>,
}

impl RateFit {
    pub fn bound_holds(&self) -> Option<bool> {
        self.max_bound_ratio.map(|r| r <= 1.0)
    }

    /// Writes `T,mean_subopt,stderr,bound,ratio,used` after a comment with the fit.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "# lastiter {} schedule={} f_star={:e} slope={:.6} slope_ci=[{:.6},{:.6}]",
            env!("CARGO_PKG_VERSION"),
            self.schedule,
            self.f_star,
            self.slope,
            self.slope_ci.0,
            self.slope_ci.1
        )?;
        writeln!(out, "T,mean_subopt,stderr,bound,ratio,used")?;
        for (j, t) in self.horizons.iter().enumerate() {
            let (b, r) = match &self.bound {
                Some(b) => (format!("{:e}", b[j]), format!("{:e}", self.subopt[j] / b[j])),
                None => (String::new(), String::new()),
            };
            writeln!(out, "{t},{:e},{:e},{b},{r},{}", self.subopt[j], self.stderr[j], self.used[j])?;
        }
        Ok(())
    }
}

fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Runs `n_seeds` last-iterate runs per horizon and fits the decay exponent.
///
/// `f_star` defaults to the problem's known optimum, else to a full-batch
/// reference run with ten times the largest horizon.
pub fn fit_rate<P: Problem + ?Sized>(
    problem: &P,
    schedule: &ScheduleSpec,
    grid: &[usize],
    n_seeds: u64,
    seed0: u64,
    f_star: Option<f64>,
) -> Result<RateFit> {
    if grid.len() < 4 || grid.iter().any(|t| *t < 4) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter {
            name: "T_grid",
            reason: "need at least four strictly increasing horizons, each >= 4".into(),
        });
    }
    let max_t = *grid.last().expect("checked");
    let f_star = match f_star.or(problem.constants().f_star) {
        Some(f) => f,
        None => reference_optimum(problem, 10 * max_t)?,
    };
    let mut samples = Vec::with_capacity(grid.len());
    let (mut subopt, mut stderr, mut used) = (Vec::new(), Vec::new(), Vec::new());
    for &t in grid {
        let sched = schedule.build(problem, t)?;
        let base = RunConfig::new(&sched, seed0).with_record(RecordMode::FinalOnly);
        let finals = map_seeds(seed0, n_seeds, |seed| {
            Ok(run_sgd(problem, &base.with_seed(seed))?.final_objective() - f_star)
        })?;
        let (m, se) = mean_stderr(&finals);
        if m <= 0.0 {
            return Err(Error::NonPositiveSuboptimality { horizon: t, value: m });
        }
        subopt.push(m);
        stderr.push(se);
        used.push(m >= NOISE_FLOOR * se);
        samples.push(finals);
    }
    let pick = |v: &[f64]| -> Vec<f64> { v.iter().zip(&used).filter(|(_, u)| **u).map(|(x, _)| *x).collect() };
    let xs: Vec<f64> = pick(&grid.iter().map(|t| *t as f64).collect::<Vec<_>>());
    let (slope, intercept) = fit_power_law(&xs, &pick(&subopt))?;
    let slope_ci = bootstrap_slope(&xs, &samples, &used, seed0)?;
    let bound: Option<Vec<f64>> = grid
        .iter()
        .map(|&t| theory_bound(problem, schedule.family, t))
        .collect();
    let max_bound_ratio = bound
        .as_ref()
        .map(|b| subopt.iter().zip(b).map(|(s, b)| s / b).fold(f64::MIN, f64::max));
    Ok(RateFit {
        schedule: schedule.to_string(),
        f_star,
        horizons: grid.to_vec(),
        subopt,
        stderr,
        used,
        slope,
        intercept,
        slope_ci,
        bound,
        max_bound_ratio,
        samples,
    })
}

fn bootstrap_slope(xs: &[f64], samples: &[Vec<f64>], used: &[bool], seed: u64) -> Result<(f64, f64)> {
    let mut rng = data_stream(seed ^ 0x0b00_75a7);
    let kept: Vec<&Vec<f64>> = samples.iter().zip(used).filter(|(_, u)| **u).map(|(s, _)| s).collect();
    let mut slopes = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    let mut ys = vec![0.0; kept.len()];
    for _ in 0..BOOTSTRAP_RESAMPLES {
        for (y, s) in ys.iter_mut().zip(&kept) {
            let n = s.len();
            *y = (0..n).map(|_| s[rng.random_range(0..n)]).sum::<f64>() / n as f64;
        }
        if let Ok((slope, _)) = fit_power_law(xs, &ys) {
            slopes.push(slope);
        }
    }
    if slopes.is_empty() {
        return Err(Error::InvalidParameter {
            name: "bootstrap",
            reason: "no resample produced a valid fit".into(),
        });
    }
    slopes.sort_by(f64::total_cmp);
    let q = |p: f64| slopes[((slopes.len() - 1) as f64 * p).round() as usize];
    Ok((q(0.025), q(0.975)))
}

/// `(T, a/b, stderr)` per horizon; the stderr uses the delta method and
/// ignores the positive correlation of paired seeds, which overstates it.
pub fn ratio_profile(a: &RateFit, b: &RateFit) -> Result<Vec<(usize, f64, f64)>> {
    if a.horizons != b.horizons {
        return Err(Error::InvalidParameter {
            name: "T_grid",
            reason: "fits were run on different grids".into(),
        });
    }
    Ok((0..a.horizons.len())
        .map(|j| {
            let r = a.subopt[j] / b.subopt[j];
            let rel = ((a.stderr[j] / a.subopt[j]).powi(2) + (b.stderr[j] / b.subopt[j]).powi(2)).sqrt();
            (a.horizons[j], r, r * rel)
        })
        .collect())
}

/// Smallest `r_{j+1} - r_j + z sqrt(se_j^2 + se_{j+1}^2)` over neighbours;
/// nonnegative when the profile is nondecreasing within `z` standard errors.
pub fn nondecreasing_margin(profile: &[(usize, f64, f64)], z: f64) -> f64 {
    profile
        .windows(2)
        .map(|w| w[1].1 - w[0].1 + z * (w[0].2.powi(2) + w[1].2.powi(2)).sqrt())
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{abs_quadratic_problem, pure_quadratic_problem};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn exact_power_law() {
        let xs: Vec<f64> = (4..12).map(|j| (1u64 << j) as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|t| 3.7 / t).collect();
        let (s, c) = fit_power_law(&xs, &ys).unwrap();
        assert!((s + 1.0).abs() < 1e-6);
        assert_relative_eq!(c.exp(), 3.7, max_relative = 1e-9);
        assert!(fit_power_law(&xs[..1], &ys[..1]).is_err());
        assert!(fit_power_law(&[1.0, 2.0], &[1.0, 0.0]).is_err());
    }

    proptest! {
        #[test]
        fn recovers_any_exponent(p in -3.0f64..3.0, c in 0.01f64..100.0) {
            let xs: Vec<f64> = (1..9).map(|j| (j * 37) as f64).collect();
            let ys: Vec<f64> = xs.iter().map(|x| c * x.powf(p)).collect();
            let (s, _) = fit_power_law(&xs, &ys).unwrap();
            prop_assert!((s - p).abs() < 1e-9);
        }
    }

    #[test]
    fn bounds() {
        let p = abs_quadratic_problem();
        assert_eq!(theory_bound(&p, Family::WeakModified, 100), Some(15.0));
        assert_eq!(theory_bound(&p, Family::StrongModified, 10), Some(325.0));
        assert_eq!(theory_bound(&p, Family::Harmonic, 10), None);
    }

    #[test]
    fn quadratic_strong_rate() {
        let p = pure_quadratic_problem();
        let spec = ScheduleSpec::new(Family::StrongModified);
        let grid: Vec<usize> = (8..=12).map(|j| 1 << j).collect();
        let f = fit_rate(&p, &spec, &grid, 400, 0, None).unwrap();
        assert!(f.used.iter().all(|u| *u));
        assert!((-1.2..=-0.8).contains(&f.slope), "{}", f.slope);
        assert!(f.slope_ci.0 <= f.slope && f.slope <= f.slope_ci.1);
        assert!(f.bound_holds().unwrap());
        let h = fit_rate(&p, &ScheduleSpec::new(Family::Harmonic), &grid, 400, 0, None).unwrap();
        assert!(h.bound.is_none());
        assert_eq!(ratio_profile(&h, &f).unwrap().len(), grid.len());
    }

    #[test]
    fn grid_validation() {
        let p = pure_quadratic_problem();
        let s = ScheduleSpec::new(Family::StrongModified);
        assert!(fit_rate(&p, &s, &[8, 16, 32], 4, 0, None).is_err());
        assert!(fit_rate(&p, &s, &[8, 16, 16, 32], 4, 0, None).is_err());
        assert!(fit_rate(&p, &s, &[2, 16, 24, 32], 4, 0, None).is_err());
    }

    #[test]
    fn margin_of_profiles() {
        let up = [(1, 1.0, 0.0), (2, 2.0, 0.0), (4, 3.0, 0.0)];
        assert_eq!(nondecreasing_margin(&up, 3.0), 1.0);
        let dip = [(1, 2.0, 0.1), (2, 1.9, 0.1)];
        assert!(nondecreasing_margin(&dip, 3.0) > 0.0);
        assert!(nondecreasing_margin(&dip, 0.0) < 0.0);
    }
}
