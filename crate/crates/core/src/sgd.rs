//! Projected stochastic subgradient descent and iterate averaging.

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::problem::Problem;
use crate::rng::stream_for_seed;
use crate::schedule::{hex16, StepSchedule};

/// What a run keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RecordMode {
    /// `F(x_t)` for every `t`.
    #[default]
    ObjectivesOnly,
    /// `F(x_t)` and `x_t` for every `t`.
    FullIterates,
    /// Only `F(x_T)`; skips the per-step objective evaluations.
    FinalOnly,
}

/// One run: horizon `T = schedule.len()`, start point, seed and record mode.
#[derive(Debug, Clone, Copy)]
pub struct RunConfig<'a> {
    pub schedule: &'a StepSchedule,
    /// `None` uses the problem's default start.
    pub start: Option<&'a [f64]>,
    pub seed: u64,
    pub record: RecordMode,
}

impl<'a> RunConfig<'a> {
    pub fn new(schedule: &'a StepSchedule, seed: u64) -> Self {
        Self {
            schedule,
            start: None,
            seed,
            record: RecordMode::ObjectivesOnly,
        }
    }

    pub fn with_start(mut self, start: &'a [f64]) -> Self {
        self.start = Some(start);
        self
    }

    pub fn with_record(mut self, record: RecordMode) -> Self {
        self.record = record;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn horizon(&self) -> usize {
        self.schedule.len()
    }
}

/// Output of [`run_sgd`].
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub config_hash: String,
    pub seed: u64,
    pub horizon: usize,
    pub dim: usize,
    pub record: RecordMode,
    /// `F(x_1), ..., F(x_T)`, or just `F(x_T)` under [`RecordMode::FinalOnly`].
    pub objective_values: Vec<f64>,
    /// Row-major `T x dim` when recorded.
    pub iterates: Option<Vec<f64>>,
    pub final_point: Vec<f64>,
}

impl Trace {
    /// `F(x_t)`, 1-indexed.
    pub fn objective(&self, t: usize) -> Result<f64> {
        if t == 0 || t > self.horizon {
            return Err(Error::OutOfRange(format!("t={t} outside 1..={}", self.horizon)));
        }
        match self.record {
            RecordMode::FinalOnly if t != self.horizon => Err(Error::ObjectiveNotRecorded(t)),
            RecordMode::FinalOnly => Ok(self.objective_values[0]),
            _ => Ok(self.objective_values[t - 1]),
        }
    }

    pub fn final_objective(&self) -> f64 {
        *self.objective_values.last().expect("trace is never empty")
    }

    /// `x_t`, 1-indexed.
    pub fn iterate(&self, t: usize) -> Result<&[f64]> {
        let it = self.iterates.as_ref().ok_or(Error::IteratesNotRecorded)?;
        if t == 0 || t > self.horizon {
            return Err(Error::OutOfRange(format!("t={t} outside 1..={}", self.horizon)));
        }
        Ok(&it[(t - 1) * self.dim..t * self.dim])
    }

    /// All objective values, failing unless every step was recorded.
    pub fn objectives(&self) -> Result<&[f64]> {
        match self.record {
            RecordMode::FinalOnly if self.horizon > 1 => Err(Error::ObjectiveNotRecorded(1)),
            _ => Ok(&self.objective_values),
        }
    }
}

/// Hash of everything that determines a run's output.
pub fn config_hash<P: Problem + ?Sized>(problem: &P, schedule: &StepSchedule, start: &[f64], seed: u64) -> String {
    let mut h = Sha256::new();
    h.update(problem.describe().as_bytes());
    h.update([0]);
    h.update(schedule.fingerprint().as_bytes());
    for v in start {
        h.update(v.to_bits().to_le_bytes());
    }
    h.update(seed.to_le_bytes());
    hex16(&h.finalize())
}

fn resolve_start<P: Problem + ?Sized>(problem: &P, config: &RunConfig<'_>) -> Result<Vec<f64>> {
    let mut x = match config.start {
        Some(s) => s.to_vec(),
        None => problem.default_start(),
    };
    if x.len() != problem.dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.dim(),
            got: x.len(),
        });
    }
    problem.project(&mut x);
    Ok(x)
}

/// Runs the recursion `x_{t+1} = P_W(x_t - alpha_t g_t(x_t))` for `t < T` and
/// calls `observe(t, x_t)` for every `t = 1..=T`. Returns `x_T`.
///
/// The start point is projected onto `W` first. `alpha_T` is never used.
pub fn run_sgd_observe<P, O>(problem: &P, config: &RunConfig<'_>, mut observe: O) -> Result<Vec<f64>>
where
    P: Problem + ?Sized,
    O: FnMut(usize, &[f64]),
{
    let horizon = config.horizon();
    if horizon == 0 {
        return Err(Error::InvalidParameter {
            name: "T",
            reason: "empty schedule".into(),
        });
    }
    let mut x = resolve_start(problem, config)?;
    let mut g = vec![0.0; x.len()];
    let mut rng = stream_for_seed(config.seed);
    let alpha = config.schedule.values();
    observe(1, &x);
    for t in 1..horizon {
        problem.stochastic_subgradient(&x, &mut rng, &mut g);
        let a = alpha[t - 1];
        x.iter_mut().zip(&g).for_each(|(xi, gi)| *xi -= a * gi);
        problem.project(&mut x);
        observe(t + 1, &x);
    }
    Ok(x)
}

pub fn run_sgd<P: Problem + ?Sized>(problem: &P, config: &RunConfig<'_>) -> Result<Trace> {
    let start = resolve_start(problem, config)?;
    let horizon = config.horizon();
    let dim = problem.dim();
    let mut objective_values = Vec::with_capacity(match config.record {
        RecordMode::FinalOnly => 1,
        _ => horizon,
    });
    let mut iterates = match config.record {
        RecordMode::FullIterates => Some(Vec::with_capacity(horizon * dim)),
        _ => None,
    };
    let final_point = run_sgd_observe(problem, config, |_, x| {
        if config.record != RecordMode::FinalOnly {
            objective_values.push(problem.objective(x));
        }
        if let Some(it) = iterates.as_mut() {
            it.extend_from_slice(x);
        }
    })?;
    if config.record == RecordMode::FinalOnly {
        objective_values.push(problem.objective(&final_point));
    }
    Ok(Trace {
        config_hash: config_hash(problem, config.schedule, &start, config.seed),
        seed: config.seed,
        horizon,
        dim,
        record: config.record,
        objective_values,
        iterates,
        final_point,
    })
}

/// First index of the suffix window `(ceil((1 - fraction) T), T]`.
pub fn suffix_window_start(horizon: usize, fraction: f64) -> Result<usize> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidFraction(fraction));
    }
    let lo = ((1.0 - fraction) * horizon as f64).ceil() as usize;
    if lo >= horizon {
        return Err(Error::InvalidFraction(fraction));
    }
    Ok(lo + 1)
}

/// Mean of `x_t` over the suffix window and `F` at that mean.
pub fn suffix_average<P: Problem + ?Sized>(problem: &P, trace: &Trace, fraction: f64) -> Result<(Vec<f64>, f64)> {
    let its = trace.iterates.as_ref().ok_or(Error::IteratesNotRecorded)?;
    let first = suffix_window_start(trace.horizon, fraction)?;
    let d = trace.dim;
    let mut mean = vec![0.0; d];
    for t in first..=trace.horizon {
        let x = &its[(t - 1) * d..t * d];
        mean.iter_mut().zip(x).for_each(|(m, v)| *m += v);
    }
    let n = (trace.horizon - first + 1) as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    let value = problem.objective(&mean);
    Ok((mean, value))
}

/// `F((x_1 + ... + x_t) / t)` for every `t`.
pub fn running_average<P: Problem + ?Sized>(problem: &P, trace: &Trace) -> Result<Vec<f64>> {
    let its = trace.iterates.as_ref().ok_or(Error::IteratesNotRecorded)?;
    let mut acc = RunningMean::new(trace.dim);
    Ok(its
        .chunks_exact(trace.dim)
        .map(|x| {
            acc.push(x);
            problem.objective(acc.mean())
        })
        .collect())
}

/// Incremental mean of points.
#[derive(Debug, Clone)]
pub struct RunningMean {
    count: usize,
    mean: Vec<f64>,
}

impl RunningMean {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; dim],
        }
    }

    pub fn push(&mut self, x: &[f64]) {
        self.count += 1;
        let w = 1.0 / self.count as f64;
        self.mean.iter_mut().zip(x).for_each(|(m, v)| *m += (v - *m) * w);
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn count(&self) -> usize {
        self.count
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{abs_quadratic_problem, gen_svm, pure_quadratic_problem, Deterministic};
    use crate::rng::{rademacher, stream_for_seed};
    use crate::schedule::{strong_schedule, weak_schedule};

    fn custom(alpha: &[f64]) -> StepSchedule {
        StepSchedule::custom(alpha.to_vec()).unwrap()
    }

    #[test]
    fn geometric_contraction() {
        let q = Deterministic(pure_quadratic_problem());
        let s = custom(&[0.5; 4]);
        let cfg = RunConfig::new(&s, 0).with_record(RecordMode::FullIterates);
        let tr = run_sgd(&q, &cfg).unwrap();
        assert_eq!(tr.iterates.as_deref().unwrap(), &[1.0, 0.5, 0.25, 0.125]);
        assert_eq!(tr.objective_values, vec![0.5, 0.125, 0.03125, 0.0078125]);
    }

    #[test]
    fn zero_steps_do_not_move() {
        let p = gen_svm(4, 10, 1.0, 1.0, 0.1, 0).unwrap();
        let start = [0.5, -0.5, 1.0, 0.0];
        let s = custom(&[0.0; 20]);
        let cfg = RunConfig::new(&s, 3).with_start(&start).with_record(RecordMode::FullIterates);
        let tr = run_sgd(&p, &cfg).unwrap();
        for t in 1..=20 {
            assert_eq!(tr.iterate(t).unwrap(), &start);
        }
    }

    #[test]
    fn single_step_from_kink() {
        let p = abs_quadratic_problem();
        let alpha = 0.2;
        let s = custom(&[alpha, alpha]);
        for seed in 0..16 {
            let eps = rademacher(&mut stream_for_seed(seed));
            let cfg = RunConfig::new(&s, seed).with_start(&[0.0]).with_record(RecordMode::FullIterates);
            let tr = run_sgd(&p, &cfg).unwrap();
            let want = (-alpha * 3.0 * eps).clamp(-1.0, 1.0);
            assert_eq!(tr.iterate(2).unwrap()[0], want);
            if eps > 0.0 {
                assert_eq!(want, (-3.0 * alpha).max(-1.0));
            }
        }
    }

    #[test]
    fn exactly_t_minus_one_oracle_calls_with_exact_steps() {
        let p = abs_quadratic_problem();
        let s = strong_schedule(64, 1.0).unwrap();
        let cfg = RunConfig::new(&s, 9).with_record(RecordMode::FullIterates);
        let tr = run_sgd(&p, &cfg).unwrap();
        // Independent replay of the recursion with the same stream.
        let mut rng = stream_for_seed(9);
        let mut x = 1.0_f64;
        for t in 1..64 {
            assert_eq!(tr.iterate(t).unwrap()[0], x);
            let g = x.signum() * (x != 0.0) as i32 as f64 + x + 3.0 * rademacher(&mut rng);
            x = (x - s.alpha(t) * g).clamp(-1.0, 1.0);
        }
        assert_eq!(tr.iterate(64).unwrap()[0], x);
        assert_eq!(tr.objective_values.len(), 64);
    }

    #[test]
    fn runs_are_bitwise_reproducible_and_feasible() {
        let p = gen_svm(5, 30, 5.0, 1.0, 0.1, 2).unwrap();
        let s = strong_schedule(500, 0.1).unwrap();
        let cfg = RunConfig::new(&s, 17).with_record(RecordMode::FullIterates);
        let a = run_sgd(&p, &cfg).unwrap();
        let b = run_sgd(&p, &cfg).unwrap();
        assert_eq!(a, b);
        for t in 1..=500 {
            assert!(crate::problem::norm(a.iterate(t).unwrap()) <= p.radius() + 1e-9);
        }
        let c = run_sgd(&p, &cfg.with_seed(18)).unwrap();
        assert_ne!(a.config_hash, c.config_hash);
    }

    #[test]
    fn final_only_matches_full_record() {
        let p = abs_quadratic_problem();
        let s = weak_schedule(100, 0.4).unwrap();
        let full = run_sgd(&p, &RunConfig::new(&s, 4)).unwrap();
        let fin = run_sgd(&p, &RunConfig::new(&s, 4).with_record(RecordMode::FinalOnly)).unwrap();
        assert_eq!(full.final_objective(), fin.final_objective());
        assert_eq!(fin.objective(100).unwrap(), full.objective(100).unwrap());
        assert!(matches!(fin.objective(50), Err(Error::ObjectiveNotRecorded(50))));
    }

    #[test]
    fn dimension_mismatch() {
        let s = custom(&[0.1; 4]);
        let cfg = RunConfig::new(&s, 0).with_start(&[0.0, 0.0]);
        assert!(matches!(
            run_sgd(&abs_quadratic_problem(), &cfg),
            Err(Error::DimensionMismatch { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn start_is_projected() {
        let s = custom(&[0.0; 2]);
        let cfg = RunConfig::new(&s, 0).with_start(&[3.0]).with_record(RecordMode::FullIterates);
        let tr = run_sgd(&pure_quadratic_problem(), &cfg).unwrap();
        assert_eq!(tr.iterate(1).unwrap(), &[1.0]);
    }

    #[test]
    fn averages() {
        let q = Deterministic(pure_quadratic_problem());
        let s = custom(&[0.0; 8]);
        let cfg = RunConfig::new(&s, 0).with_start(&[0.5]).with_record(RecordMode::FullIterates);
        let tr = run_sgd(&q, &cfg).unwrap();
        assert_eq!(suffix_average(&q, &tr, 1.0).unwrap().0, vec![0.5]);
        assert_eq!(running_average(&q, &tr).unwrap(), vec![0.125; 8]);

        let p = abs_quadratic_problem();
        let s = strong_schedule(40, 1.0).unwrap();
        let tr = run_sgd(&p, &RunConfig::new(&s, 1).with_record(RecordMode::FullIterates)).unwrap();
        // Window {T} only.
        let (m, v) = suffix_average(&p, &tr, 0.03).unwrap();
        assert_eq!(m, tr.final_point);
        assert_eq!(v, tr.final_objective());
        // Jensen on the window and on every prefix.
        let (_, v) = suffix_average(&p, &tr, 0.25).unwrap();
        let first = suffix_window_start(40, 0.25).unwrap();
        assert_eq!(first, 31);
        let mean_f: f64 = tr.objective_values[first - 1..].iter().sum::<f64>() / 10.0;
        assert!(v <= mean_f + 1e-15);
        let ra = running_average(&p, &tr).unwrap();
        assert_eq!(ra[0], tr.objective_values[0]);
        let mut sum = 0.0;
        for (t, r) in ra.iter().enumerate() {
            sum += tr.objective_values[t];
            assert!(*r <= sum / (t + 1) as f64 + 1e-12);
        }
    }

    #[test]
    fn averaging_errors() {
        let p = abs_quadratic_problem();
        let s = custom(&[0.1; 8]);
        let tr = run_sgd(&p, &RunConfig::new(&s, 0)).unwrap();
        assert!(matches!(suffix_average(&p, &tr, 0.5), Err(Error::IteratesNotRecorded)));
        assert!(matches!(running_average(&p, &tr), Err(Error::IteratesNotRecorded)));
        assert!(matches!(suffix_window_start(8, 0.0), Err(Error::InvalidFraction(_))));
        assert!(matches!(suffix_window_start(8, 1.5), Err(Error::InvalidFraction(_))));
    }
}
