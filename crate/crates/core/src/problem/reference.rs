use super::Problem;
use crate::error::{Error, Result};
use crate::schedule::{build_schedule, Family, ScheduleParams, StepSchedule, MIN_HORIZON};

/// Best objective value seen by full-batch projected subgradient descent from
/// the problem's default start.
pub fn reference_optimum<P: Problem + ?Sized>(problem: &P, budget: usize) -> Result<f64> {
    reference_optimum_from(problem, budget, &problem.default_start())
}

/// As [`reference_optimum`], from an explicit start point.
///
/// Strongly convex problems use the strong modified schedule; others use the
/// weak modified schedule with `C = D / G`. Budgets below 4 fall back to the
/// corresponding unmodified base schedule.
pub fn reference_optimum_from<P: Problem + ?Sized>(problem: &P, budget: usize, start: &[f64]) -> Result<f64> {
    if budget == 0 {
        return Err(Error::InvalidParameter {
            name: "budget",
            reason: "must be at least 1".into(),
        });
    }
    if start.len() != problem.dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.dim(),
            got: start.len(),
        });
    }
    let sched = reference_schedule(problem, budget)?;
    let mut x = start.to_vec();
    problem.project(&mut x);
    let mut g = vec![0.0; x.len()];
    let mut best = problem.objective(&x);
    for t in 1..budget {
        problem.subgradient(&x, &mut g);
        let a = sched.alpha(t);
        x.iter_mut().zip(&g).for_each(|(xi, gi)| *xi -= a * gi);
        problem.project(&mut x);
        best = best.min(problem.objective(&x));
    }
    Ok(best)
}

fn reference_schedule<P: Problem + ?Sized>(problem: &P, budget: usize) -> Result<StepSchedule> {
    let c = problem.constants();
    let (family, params) = if c.strong_convexity > 0.0 {
        (Family::StrongModified, ScheduleParams::lambda(c.strong_convexity))
    } else {
        (Family::WeakModified, ScheduleParams::scale(c.diameter / c.lipschitz))
    };
    let family = if budget >= MIN_HORIZON {
        family
    } else if family == Family::StrongModified {
        Family::Harmonic
    } else {
        Family::Constant
    };
    build_schedule(family, budget, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{abs_quadratic_problem, pure_quadratic_problem, Lasso, LassoData};

    #[test]
    fn optimal_start_gives_zero() {
        let q = pure_quadratic_problem();
        for budget in [1, 2, 3, 4, 50] {
            assert_eq!(reference_optimum_from(&q, budget, &[0.0]).unwrap(), 0.0);
        }
    }

    #[test]
    fn abs_quadratic_long_run() {
        let v = reference_optimum(&abs_quadratic_problem(), 100_000).unwrap();
        assert!((0.0..=1e-3).contains(&v), "{v}");
    }

    #[test]
    fn rejects_zero_budget_and_bad_start() {
        let q = pure_quadratic_problem();
        assert!(reference_optimum(&q, 0).is_err());
        assert!(matches!(
            reference_optimum_from(&q, 5, &[0.0, 0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    fn soft_threshold_optimum(a: &[f64], b: &[f64], reg: f64) -> f64 {
        let n = a.len() as f64;
        let s: f64 = a.iter().map(|v| v * v).sum::<f64>() / n;
        let c: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / n;
        c.signum() * (c.abs() - reg / 2.0).max(0.0) / s
    }

    #[test]
    fn one_dimensional_lasso_matches_soft_threshold() {
        let cases: [(&[f64], &[f64], f64); 3] = [
            (&[1.0, 2.0, -0.5], &[0.8, 2.3, -0.1], 0.3),
            (&[1.5], &[-2.0], 1.0),
            (&[0.3, -0.4], &[0.05, 0.02], 0.5), // optimum at 0
        ];
        for (a, b, reg) in cases {
            let data = LassoData {
                n: a.len(),
                d: 1,
                a: a.to_vec(),
                b: b.to_vec(),
                x_true: vec![1.0],
                sigma: 0.0,
                reg,
            };
            let p = Lasso::new(data).unwrap();
            let x_star = soft_threshold_optimum(a, b, reg);
            let f_star = p.objective(&[x_star]);
            let got = reference_optimum(&p, 100_000).unwrap();
            assert!(got >= f_star - 1e-12);
            assert!(got - f_star <= 1e-6, "got {got}, closed form {f_star}");
        }
    }
}
