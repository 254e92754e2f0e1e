//! Multi-method experiments with paired seeds and CSV reports.

use std::io::Write;

use crate::ensemble::aggregate_seeds;
use crate::error::Result;
use crate::problem::Problem;
use crate::schedule::StepSchedule;
use crate::sgd::{run_sgd_observe, suffix_window_start, RunConfig, RunningMean};

use super::config::{Averaging, ExperimentSpec, MethodSpec};

/// Across-seed curve of one method on the report grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodCurve {
    pub label: String,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl MethodCurve {
    pub fn final_mean(&self) -> f64 {
        *self.mean.last().expect("grid is never empty")
    }
}

/// `final(a) - final(b)` over paired seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedDifference {
    pub a: usize,
    pub b: usize,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub spec: ExperimentSpec,
    pub config_hash: String,
    pub grid: Vec<usize>,
    pub n_seeds: u64,
    pub curves: Vec<MethodCurve>,
    /// Every pair `a < b` of methods.
    pub differences: Vec<PairedDifference>,
}

impl ExperimentReport {
    pub fn difference(&self, a: usize, b: usize) -> Option<PairedDifference> {
        self.differences.iter().find_map(|d| {
            if (d.a, d.b) == (a, b) {
                Some(d.clone())
            } else if (d.a, d.b) == (b, a) {
                Some(PairedDifference {
                    a,
                    b,
                    mean: -d.mean,
                    stderr: d.stderr,
                })
            } else {
                None
            }
        })
    }

    /// Comment header (tool version, config hash, full spec), then
    /// `method,t,mean_objective,stderr,n_seeds`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# lastiter {} config_hash={}", env!("CARGO_PKG_VERSION"), self.config_hash)?;
        for line in self.spec.canonical().lines() {
            writeln!(out, "# {line}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["method", "t", "mean_objective", "stderr", "n_seeds"])?;
        for c in &self.curves {
            for (j, t) in self.grid.iter().enumerate() {
                w.write_record([
                    c.label.clone(),
                    t.to_string(),
                    format!("{:e}", c.mean[j]),
                    format!("{:e}", c.stderr[j]),
                    self.n_seeds.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Objective values of one method on `grid` for one seed.
pub fn method_curve<P: Problem + ?Sized>(
    problem: &P,
    method: &MethodSpec,
    schedule: &StepSchedule,
    grid: &[usize],
    seed: u64,
) -> Result<Vec<f64>> {
    let horizon = schedule.len();
    let avg_from = match method.averaging {
        Averaging::Last => usize::MAX,
        Averaging::Running => 1,
        Averaging::SuffixQuarter => suffix_window_start(horizon, 0.25)?,
    };
    let mut mean = RunningMean::new(problem.dim());
    let mut out = Vec::with_capacity(grid.len());
    let mut next = 0;
    run_sgd_observe(problem, &RunConfig::new(schedule, seed), |t, x| {
        if t >= avg_from {
            mean.push(x);
        }
        if next < grid.len() && grid[next] == t {
            out.push(if t >= avg_from {
                problem.objective(mean.mean())
            } else {
                problem.objective(x)
            });
            next += 1;
        }
    })?;
    Ok(out)
}

/// Runs every method under seeds `seed0 .. seed0 + n_seeds`. All methods see
/// the same oracle stream for a given seed.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    let problem = spec.problem.build()?;
    run_experiment_on(&*problem, spec)
}

/// As [`run_experiment`] on an already built problem.
pub fn run_experiment_on<P: Problem + ?Sized>(problem: &P, spec: &ExperimentSpec) -> Result<ExperimentReport> {
    let schedules: Vec<StepSchedule> = spec
        .methods
        .iter()
        .map(|m| m.schedule.build(problem, spec.horizon))
        .collect::<Result<_>>()?;
    let grid = spec.grid();
    let n_methods = spec.methods.len();
    let g = grid.len();
    let pairs: Vec<(usize, usize)> = (0..n_methods)
        .flat_map(|a| (a + 1..n_methods).map(move |b| (a, b)))
        .collect();
    let m = aggregate_seeds(spec.seed0, spec.n_seeds, |seed| {
        let mut v = Vec::with_capacity(n_methods * g + pairs.len());
        for (method, sched) in spec.methods.iter().zip(&schedules) {
            v.extend(method_curve(problem, method, sched, &grid, seed)?);
        }
        for &(a, b) in &pairs {
            v.push(v[a * g + g - 1] - v[b * g + g - 1]);
        }
        Ok(v)
    })?;
    let se = m.stderr();
    let curves = spec
        .methods
        .iter()
        .enumerate()
        .map(|(i, method)| MethodCurve {
            label: method.to_string(),
            mean: m.mean[i * g..(i + 1) * g].to_vec(),
            stderr: se[i * g..(i + 1) * g].to_vec(),
        })
        .collect();
    let differences = pairs
        .iter()
        .enumerate()
        .map(|(j, &(a, b))| PairedDifference {
            a,
            b,
            mean: m.mean[n_methods * g + j],
            stderr: se[n_methods * g + j],
        })
        .collect();
    Ok(ExperimentReport {
        spec: spec.clone(),
        config_hash: spec.config_hash(),
        grid,
        n_seeds: m.n,
        curves,
        differences,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::gen_svm;
    use crate::sgd::{run_sgd, running_average, suffix_average};

    fn small_svm() -> ExperimentSpec {
        let mut spec = ExperimentSpec::paper_svm();
        spec.problem = "svm:d=5,n=40,seed=2".parse().unwrap();
        spec.horizon = 200;
        spec.n_seeds = 6;
        spec.stride = 50;
        spec
    }

    #[test]
    fn curves_match_single_runs() {
        let spec = small_svm();
        let r = run_experiment(&spec).unwrap();
        let p = gen_svm(5, 40, 5.0, 1.0, 0.1, 2).unwrap();
        let mut last = [0.0; 3];
        for seed in 0..6 {
            for (i, m) in spec.methods.iter().enumerate() {
                let s = m.schedule.build(&p, 200).unwrap();
                let tr = run_sgd(&p, &RunConfig::new(&s, seed).with_record(crate::sgd::RecordMode::FullIterates)).unwrap();
                last[i] += match m.averaging {
                    Averaging::Last => tr.final_objective(),
                    Averaging::Running => *running_average(&p, &tr).unwrap().last().unwrap(),
                    Averaging::SuffixQuarter => suffix_average(&p, &tr, 0.25).unwrap().1,
                } / 6.0;
            }
        }
        for (curve, want) in r.curves.iter().zip(last) {
            approx::assert_relative_eq!(curve.final_mean(), want, max_relative = 1e-10);
        }
        let d = r.difference(0, 1).unwrap();
        approx::assert_relative_eq!(d.mean, last[0] - last[1], max_relative = 1e-8, epsilon = 1e-12);
        assert_eq!(r.difference(1, 0).unwrap().mean, -d.mean);
    }

    #[test]
    fn single_seed_deterministic_lasso_has_zero_stderr() {
        let mut spec = ExperimentSpec::paper_lasso();
        spec.problem = "lasso:d=10,s=4,n=8".parse().unwrap();
        spec.horizon = 256;
        spec.stride = 16;
        let r = run_experiment(&spec).unwrap();
        assert_eq!(r.curves.len(), 3);
        assert!(r.curves.iter().all(|c| c.stderr.iter().all(|s| *s == 0.0)));
    }

    #[test]
    fn report_header_reproduces_rows() {
        let spec = small_svm();
        let r = run_experiment(&spec).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# lastiter "));
        assert!(text.contains(&format!("config_hash={}", spec.config_hash())));
        assert!(text.contains("method,t,mean_objective,stderr,n_seeds"));
        let again = ExperimentSpec::from_report_header(&text).unwrap();
        assert_eq!(again, spec);
        let mut buf2 = Vec::new();
        run_experiment(&again).unwrap().write_csv(&mut buf2).unwrap();
        assert_eq!(text, String::from_utf8(buf2).unwrap());
    }

    #[test]
    fn methods_are_paired() {
        // Two copies of the same method see the same draws, so their difference is exactly zero.
        let mut spec = small_svm();
        spec.methods = vec![spec.methods[0], spec.methods[0]];
        let r = run_experiment(&spec).unwrap();
        let d = r.difference(0, 1).unwrap();
        assert_eq!((d.mean, d.stderr), (0.0, 0.0));
        assert_eq!(r.curves[0].mean, r.curves[1].mean);
    }
}
