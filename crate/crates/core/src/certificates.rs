//! Proof-level quantities of the last-iterate analysis and numerical checks of
//! the inequalities they satisfy.

use std::io::Write;

use rand::Rng;

use crate::ensemble::{aggregate_seeds, map_seeds, Moments};
use crate::error::{Error, Result};
use crate::problem::Problem;
use crate::rng::data_stream;
use crate::schedule::{
    build_schedule, compute_breakpoints, estimate_decay_constant, standard_schedule, strong_schedule,
    weak_schedule, Breakpoints, Family, StepSchedule,
};
use crate::sgd::{run_sgd_observe, RunConfig};

/// Slack, in standard errors, granted to every Monte-Carlo inequality.
pub const STDERR_SLACK: f64 = 3.0;

/// Backward weights on `t0..=t1`: `L_{t1} = 1/(e r)`, `L_{t-1} = L_t + L_t^2`, `r = t1 - t0 + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleWeights {
    pub t0: usize,
    pub t1: usize,
    values: Vec<f64>,
}

impl MartingaleWeights {
    pub fn r(&self) -> usize {
        self.t1 - self.t0 + 1
    }

    /// `L_t` for `t0 <= t <= t1`.
    pub fn get(&self, t: usize) -> f64 {
        assert!((self.t0..=self.t1).contains(&t), "t={t} outside [{}, {}]", self.t0, self.t1);
        self.values[t - self.t0]
    }

    /// Values indexed from `t0`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

pub fn compute_l(t0: usize, t1: usize) -> Result<MartingaleWeights> {
    if t0 >= t1 {
        return Err(Error::EmptyRange { t0, t1 });
    }
    let r = t1 - t0 + 1;
    let mut values = vec![0.0; r];
    let mut l = 1.0 / (std::f64::consts::E * r as f64);
    for v in values.iter_mut().rev() {
        *v = l;
        l += l * l;
    }
    Ok(MartingaleWeights { t0, t1, values })
}

/// Forward sequence `lambda_0 = 1/(r e gamma)`, `lambda_{i+1} = lambda_i + gamma lambda_i^2`
/// for `i = 0..=steps`.
pub fn lambda_growth(gamma: f64, r: usize, steps: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(steps + 1);
    let mut l = 1.0 / (r as f64 * std::f64::consts::E * gamma);
    out.push(l);
    for _ in 0..steps {
        l += gamma * l * l;
        out.push(l);
    }
    out
}

/// Largest `lambda_i / ((1 + 1/r)^i lambda_0)` over `i <= r` (at most 1 when the growth bound holds).
pub fn lambda_growth_ratio(gamma: f64, r: usize) -> f64 {
    let seq = lambda_growth(gamma, r, r);
    let log_step = (1.0 / r as f64).ln_1p();
    let l0 = seq[0].ln();
    seq.iter()
        .enumerate()
        .map(|(i, l)| (l.ln() - l0 - i as f64 * log_step).exp())
        .fold(0.0, f64::max)
}

/// Probability distribution on `start, start + 1, ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    pub start: usize,
    pub probs: Vec<f64>,
}

impl Distribution {
    pub fn new(start: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::SupportMismatch("empty distribution".into()));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::SupportMismatch("negative or non-finite mass".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::SupportMismatch(format!("total mass {total}")));
        }
        Ok(Self { start, probs })
    }

    pub fn uniform(start: usize, end: usize) -> Self {
        let n = end - start + 1;
        Self {
            start,
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn point_mass(t: usize) -> Self {
        Self {
            start: t,
            probs: vec![1.0],
        }
    }

    /// Last index of the support range.
    pub fn end(&self) -> usize {
        self.start + self.probs.len() - 1
    }

    pub fn get(&self, t: usize) -> f64 {
        if t < self.start || t > self.end() {
            0.0
        } else {
            self.probs[t - self.start]
        }
    }
}

/// The distribution that moves goodness from phase `i` to phase `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferDistribution {
    pub i: usize,
    /// First support index: `T_i + 1`, or `ceil(T/4)` for `i = 0`.
    pub start: usize,
    /// `T_{i+1}`; the mass is zero after it.
    pub phase_end: usize,
    /// `T_{i+2}`.
    pub end: usize,
    /// `kappa(start), ..., kappa(end)`.
    pub kappa: Vec<f64>,
    /// `Gamma(t) = sum_{s=t+1}^{end} alpha_s L_s` for `t = start - 1 ..= phase_end`.
    gamma: Vec<f64>,
    pub q: Distribution,
}

impl TransferDistribution {
    pub fn get(&self, t: usize) -> f64 {
        if t < self.start || t > self.end {
            0.0
        } else {
            self.kappa[t - self.start]
        }
    }

    /// `Gamma(t)` for `start - 1 <= t <= phase_end`.
    pub fn gamma(&self, t: usize) -> f64 {
        self.gamma[t + 1 - self.start]
    }

    pub fn total_mass(&self) -> f64 {
        self.kappa.iter().sum()
    }

    /// Largest `|sigma(t) - Gamma(T_{i+1}) / Gamma(t) * sum_{s <= t} q(s)|` over the phase,
    /// where `sigma` is the running sum of `kappa`.
    pub fn sigma_identity_residual(&self) -> f64 {
        let g_end = self.gamma(self.phase_end);
        let (mut sigma, mut qsum, mut worst) = (0.0, 0.0, 0.0_f64);
        for t in self.start..=self.phase_end {
            sigma += self.get(t);
            qsum += self.q.get(t);
            worst = worst.max((sigma - g_end / self.gamma(t) * qsum).abs());
        }
        worst
    }

    pub fn as_distribution(&self) -> Distribution {
        Distribution {
            start: self.start,
            probs: self.kappa.clone(),
        }
    }
}

/// First index of the transfer window for phase `i`.
pub fn transfer_start(bp: &Breakpoints, i: usize) -> usize {
    if i == 0 {
        bp.quarter()
    } else {
        bp.point(i) + 1
    }
}

/// Builds `kappa` from `q` for phase `i <= k - 1`, with weights `L` over
/// `transfer_start(i) ..= T_{i+2}`.
pub fn compute_kappa(q: &Distribution, i: usize, bp: &Breakpoints, sched: &StepSchedule) -> Result<TransferDistribution> {
    let k = bp.k();
    if k == 0 || i > k - 1 {
        return Err(Error::PhaseOutOfRange {
            i,
            max: k.saturating_sub(1),
        });
    }
    if sched.len() != bp.horizon() {
        return Err(Error::LengthMismatch {
            expected: bp.horizon(),
            got: sched.len(),
        });
    }
    let start = transfer_start(bp, i);
    let phase_end = bp.point(i + 1);
    let end = bp.point(i + 2);
    if q.start < start || q.end() > phase_end {
        return Err(Error::SupportMismatch(format!(
            "q on [{}, {}] is not inside [{start}, {phase_end}]",
            q.start,
            q.end()
        )));
    }
    let weights = compute_l(start, end)?;
    let al = |t: usize| sched.alpha(t) * weights.get(t);
    // gamma[j] = Gamma(start - 1 + j); Gamma(t) = Gamma(t + 1) + alpha_{t+1} L_{t+1}.
    let mut tail = 0.0;
    for t in (phase_end + 1)..=end {
        tail += al(t);
    }
    let n = phase_end - start + 2;
    let mut gamma = vec![0.0; n];
    gamma[n - 1] = tail;
    for j in (0..n - 1).rev() {
        gamma[j] = gamma[j + 1] + al(start + j);
    }
    let g = |t: usize| gamma[t + 1 - start];
    let g_end = g(phase_end);
    let mut kappa = vec![0.0; end - start + 1];
    let mut sigma = 0.0;
    for t in start..=phase_end {
        let mut v = g_end / g(t) * q.get(t);
        if t > start {
            v += al(t) * sigma / g(t);
        }
        kappa[t - start] = v;
        sigma += v;
    }
    Ok(TransferDistribution {
        i,
        start,
        phase_end,
        end,
        kappa,
        gamma,
        q: q.clone(),
    })
}

/// `A(l, t1) = sum_{t=l}^{t1} L_t [2 alpha_t (F_t - F_l) - alpha_t^2 G^2]`, summed directly.
///
/// `objectives[t - 1] = F(x_t)`.
pub fn compute_a(objectives: &[f64], sched: &StepSchedule, weights: &MartingaleWeights, l: usize, g: f64) -> Result<f64> {
    check_window(objectives, sched, weights)?;
    if l < weights.t0 || l > weights.t1 {
        return Err(Error::OutOfRange(format!("l={l} outside [{}, {}]", weights.t0, weights.t1)));
    }
    let fl = objectives[l - 1];
    Ok((l..=weights.t1)
        .map(|t| {
            let a = sched.alpha(t);
            weights.get(t) * (2.0 * a * (objectives[t - 1] - fl) - a * a * g * g)
        })
        .sum())
}

/// `A*(t0, t1)`: as [`compute_a`] from `t0`, relative to `f_star`.
pub fn compute_a_star(
    objectives: &[f64],
    sched: &StepSchedule,
    weights: &MartingaleWeights,
    f_star: f64,
    g: f64,
) -> Result<f64> {
    check_window(objectives, sched, weights)?;
    Ok((weights.t0..=weights.t1)
        .map(|t| {
            let a = sched.alpha(t);
            weights.get(t) * (2.0 * a * (objectives[t - 1] - f_star) - a * a * g * g)
        })
        .sum())
}

fn check_window(objectives: &[f64], sched: &StepSchedule, weights: &MartingaleWeights) -> Result<()> {
    if weights.t1 > objectives.len() || weights.t1 > sched.len() || weights.t0 == 0 {
        return Err(Error::OutOfRange(format!(
            "window [{}, {}] exceeds recorded horizon {}",
            weights.t0,
            weights.t1,
            objectives.len().min(sched.len())
        )));
    }
    Ok(())
}

/// All `A(l, t1)` for `l` in the weight window, via suffix sums.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationStats {
    pub t0: usize,
    /// `A(l, t1)` for `l = t0..=t1`.
    pub a: Vec<f64>,
    pub a_star: Option<f64>,
}

impl DeviationStats {
    pub fn compute(
        objectives: &[f64],
        sched: &StepSchedule,
        weights: &MartingaleWeights,
        g: f64,
        f_star: Option<f64>,
    ) -> Result<Self> {
        check_window(objectives, sched, weights)?;
        let (t0, t1) = (weights.t0, weights.t1);
        let mut a = vec![0.0; t1 - t0 + 1];
        // A(l) = S1(l) - F_l S2(l) with
        // S1(l) = sum_{t>=l} L_t (2 alpha_t F_t - alpha_t^2 G^2), S2(l) = sum_{t>=l} 2 alpha_t L_t.
        let (mut s1, mut s2) = (0.0, 0.0);
        for t in (t0..=t1).rev() {
            let (al, lt, f) = (sched.alpha(t), weights.get(t), objectives[t - 1]);
            s1 += lt * (2.0 * al * f - al * al * g * g);
            s2 += 2.0 * al * lt;
            a[t - t0] = s1 - f * s2;
        }
        let a_star = f_star.map(|fs| s1 - fs * s2);
        Ok(Self { t0, a, a_star })
    }

    pub fn get(&self, l: usize) -> f64 {
        self.a[l - self.t0]
    }

    /// `(p.A)(t0, t1) = sum_l p(l) A(l, t1)`.
    pub fn p_dot_a(&self, p: &Distribution) -> Result<f64> {
        let t1 = self.t0 + self.a.len() - 1;
        if p.start < self.t0 || p.end() > t1 {
            return Err(Error::SupportMismatch(format!(
                "p on [{}, {}] is not inside [{}, {t1}]",
                p.start,
                p.end(),
                self.t0
            )));
        }
        Ok(p.probs.iter().enumerate().map(|(j, w)| w * self.get(p.start + j)).sum())
    }
}

/// `exp(-eta / (8 alpha_{t0}^2 G^2))`.
pub fn tail_bound(eta: f64, alpha_t0: f64, g: f64) -> f64 {
    (-eta / (8.0 * alpha_t0 * alpha_t0 * g * g)).exp()
}

/// `tau_0 .. tau_{k+1}`: argmins of the mean curve over each phase, ties to
/// the smallest `t`. `tau_0` ranges over `[ceil(T/4), T_1]`; `tau_{k+1} = T`.
///
/// `mean[t - 1]` estimates `E F(x_t)` (any constant shift gives the same argmins).
pub fn compute_tau(mean: &[f64], bp: &Breakpoints) -> Result<Vec<usize>> {
    if mean.len() != bp.horizon() {
        return Err(Error::LengthMismatch {
            expected: bp.horizon(),
            got: mean.len(),
        });
    }
    let argmin = |lo: usize, hi: usize| {
        let mut best = lo;
        for t in lo..=hi {
            if mean[t - 1] < mean[best - 1] {
                best = t;
            }
        }
        best
    };
    let k = bp.k();
    let mut tau = Vec::with_capacity(k + 2);
    tau.push(argmin(bp.quarter(), bp.point(1)));
    for i in 1..=k {
        tau.push(argmin(bp.point(i) + 1, bp.point(i + 1)));
    }
    tau.push(bp.horizon());
    Ok(tau)
}

/// Right-hand side of the expected transfer inequality between `tau_i` and `tau_{i+1}`.
pub fn transfer_bound(i: usize, g: f64, gamma_last: f64, beta: f64) -> f64 {
    let base = 5.0 * g * g * gamma_last;
    if i == 0 {
        base / beta.powi(4)
    } else {
        base / (beta * beta) * (-(i as f64)).exp2()
    }
}

/// One numerical check.
#[derive(Debug, Clone, PartialEq)]
pub struct CertificateEntry {
    pub check: String,
    /// `key=value` pairs separated by `;`.
    pub params: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs`; nonnegative iff the check passes.
    pub margin: f64,
    pub pass: bool,
}

impl CertificateEntry {
    /// Passes when `lhs <= rhs`.
    pub fn le(check: impl Into<String>, params: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        let margin = rhs - lhs;
        Self {
            check: check.into(),
            params: params.into(),
            lhs,
            rhs,
            margin,
            pass: lhs <= rhs,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CertificateReport {
    pub entries: Vec<CertificateEntry>,
}

impl CertificateReport {
    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn extend(&mut self, other: CertificateReport) {
        self.entries.extend(other.entries);
    }

    /// Writes `check,params,lhs,rhs,margin,pass`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["check", "params", "lhs", "rhs", "margin", "pass"])?;
        for e in &self.entries {
            w.write_record([
                e.check.clone(),
                e.params.clone(),
                format!("{:e}", e.lhs),
                format!("{:e}", e.rhs),
                format!("{:e}", e.margin),
                e.pass.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

impl From<Vec<CertificateEntry>> for CertificateReport {
    fn from(entries: Vec<CertificateEntry>) -> Self {
        Self { entries }
    }
}

/// Expected look-ahead inequality
/// `sum_{t=t0}^{t1} 2 alpha_t E[F(x_t) - F(x_{t0})] <= sum_{t=t0}^{t1} G^2 alpha_t^2`.
///
/// The left side is a per-seed sum averaged across seeds; the check allows
/// [`STDERR_SLACK`] standard errors. Deterministic problems run one seed and
/// get no slack.
pub fn check_lookahead<P: Problem + ?Sized>(
    problem: &P,
    sched: &StepSchedule,
    t0: usize,
    t1: usize,
    n_seeds: u64,
    seed0: u64,
) -> Result<CertificateEntry> {
    let horizon = sched.len();
    if !(1 < t0 && t0 < t1 && t1 <= horizon) {
        return Err(Error::OutOfRange(format!("need 1 < t0 < t1 <= T, got t0={t0}, t1={t1}, T={horizon}")));
    }
    let g = problem.constants().lipschitz;
    let rhs: f64 = (t0..=t1).map(|t| g * g * sched.alpha(t).powi(2)).sum();
    let deterministic = problem.is_deterministic();
    let n_seeds = if deterministic { 1 } else { n_seeds };
    let base = RunConfig::new(sched, seed0);
    let m = aggregate_seeds(seed0, n_seeds, |seed| {
        let mut f_t0 = 0.0;
        let mut acc = 0.0;
        run_sgd_observe(problem, &base.with_seed(seed), |t, x| {
            if t == t0 {
                f_t0 = problem.objective(x);
            } else if t > t0 && t <= t1 {
                acc += 2.0 * sched.alpha(t) * (problem.objective(x) - f_t0);
            }
        })?;
        Ok(vec![acc])
    })?;
    let slack = if deterministic { 0.0 } else { STDERR_SLACK * m.stderr()[0] };
    let params = format!(
        "problem={};schedule={};T={horizon};t0={t0};t1={t1};seeds={n_seeds};slack={slack:e}",
        problem.describe(),
        sched.family()
    );
    Ok(CertificateEntry::le("lookahead", params, m.mean[0], rhs + slack))
}

/// Empirical tail of `(p.A)(t0, t1)` against `exp(-eta / (8 alpha_{t0}^2 G^2))`
/// for `eta = c * 8 alpha_{t0}^2 G^2`, `c` in `multiples`. The allowance is
/// [`STDERR_SLACK`] binomial standard errors evaluated at the bound.
#[allow(clippy::too_many_arguments)]
pub fn check_tail<P: Problem + ?Sized>(
    problem: &P,
    sched: &StepSchedule,
    t0: usize,
    t1: usize,
    p: &Distribution,
    p_label: &str,
    multiples: &[f64],
    n_seeds: u64,
    seed0: u64,
) -> Result<Vec<CertificateEntry>> {
    let horizon = sched.len();
    if !(1 < t0 && t0 < t1 && t1 <= horizon) {
        return Err(Error::OutOfRange(format!("need 1 < t0 < t1 <= T, got t0={t0}, t1={t1}, T={horizon}")));
    }
    let g = problem.constants().lipschitz;
    let weights = compute_l(t0, t1)?;
    let base = RunConfig::new(sched, seed0);
    let samples = map_seeds(seed0, n_seeds, |seed| {
        let mut objs = vec![0.0; t1];
        run_sgd_observe(problem, &base.with_seed(seed), |t, x| {
            if t >= t0 && t <= t1 {
                objs[t - 1] = problem.objective(x);
            }
        })?;
        DeviationStats::compute(&objs, sched, &weights, g, None)?.p_dot_a(p)
    })?;
    let scale = 8.0 * sched.alpha(t0).powi(2) * g * g;
    let n = samples.len() as f64;
    Ok(multiples
        .iter()
        .map(|&c| {
            let eta = c * scale;
            let freq = samples.iter().filter(|v| **v > eta).count() as f64 / n;
            let bound = tail_bound(eta, sched.alpha(t0), g);
            let se = (bound * (1.0 - bound) / n).sqrt();
            let params = format!(
                "problem={};schedule={};T={horizon};t0={t0};t1={t1};p={p_label};eta={eta:e};seeds={n_seeds}",
                problem.describe(),
                sched.family()
            );
            CertificateEntry::le("tail", params, freq, bound + STDERR_SLACK * se)
        })
        .collect())
}

/// Expected good-point transfer between consecutive `tau_i`.
///
/// `tau` is estimated from seeds `seed0 .. seed0 + n`; the differences
/// `F(x_{tau_{i+1}}) - F(x_{tau_i})` are then averaged over the fresh seeds
/// `seed0 + n .. seed0 + 2n`, so selection and testing never share noise.
pub fn check_transfer<P: Problem + ?Sized>(
    problem: &P,
    base_gamma: &StepSchedule,
    n_seeds: u64,
    seed0: u64,
) -> Result<Vec<CertificateEntry>> {
    let horizon = base_gamma.len();
    let bp = compute_breakpoints(horizon)?;
    let sched = crate::schedule::modify_schedule(base_gamma, horizon)?;
    let decay = estimate_decay_constant(base_gamma.values());
    let gamma_last = base_gamma.alpha(horizon);
    let g = problem.constants().lipschitz;
    let base = RunConfig::new(&sched, seed0);
    let curve = |seed: u64| -> Result<Vec<f64>> {
        let mut v = Vec::with_capacity(horizon);
        run_sgd_observe(problem, &base.with_seed(seed), |_, x| v.push(problem.objective(x)))?;
        Ok(v)
    };
    let means: Moments = aggregate_seeds(seed0, n_seeds, curve)?;
    let tau = compute_tau(&means.mean, &bp)?;
    let diffs = aggregate_seeds(seed0 + n_seeds, n_seeds, |seed| {
        let c = curve(seed)?;
        Ok(tau.windows(2).map(|w| c[w[1] - 1] - c[w[0] - 1]).collect())
    })?;
    let se = diffs.stderr();
    Ok((0..tau.len() - 1)
        .map(|i| {
            let rhs = transfer_bound(i, g, gamma_last, decay.beta);
            let params = format!(
                "problem={};base={};T={horizon};i={i};tau_i={};tau_next={};beta={};seeds={n_seeds}",
                problem.describe(),
                base_gamma.family(),
                tau[i],
                tau[i + 1],
                decay.beta
            );
            CertificateEntry::le("transfer", params, diffs.mean[i], rhs + STDERR_SLACK * se[i])
        })
        .collect())
}

/// Breakpoint invariants for every `T` in `4..=dense_max` and `T = 2^j`, `j <= dyadic_max_pow`.
pub fn breakpoint_suite(dense_max: usize, dyadic_max_pow: u32) -> Result<CertificateReport> {
    let mut horizons: Vec<usize> = (4..=dense_max).collect();
    horizons.extend((2..=dyadic_max_pow).map(|j| 1usize << j).filter(|t| *t > dense_max));
    let (mut monotone_bad, mut last_bad, mut worst_division) = (0usize, 0usize, i64::MIN);
    for &t in &horizons {
        let bp = compute_breakpoints(t)?;
        let pts = bp.points();
        monotone_bad += pts.windows(2).filter(|w| w[1] <= w[0]).count() + (pts[0] != 0) as usize;
        last_bad += (bp.point(bp.k()) != t - 1 || bp.point(bp.k() + 1) != t) as usize;
        for i in 0..bp.k() {
            let lhs = (pts[i + 1] - pts[i]) as i64;
            let rhs = 4 * (pts[i + 2] - pts[i + 1]) as i64;
            worst_division = worst_division.max(lhs - rhs);
        }
    }
    let params = format!("T=4..{dense_max}+2^j<=2^{dyadic_max_pow};count={}", horizons.len());
    Ok(vec![
        CertificateEntry::le("breakpoints.monotone", params.clone(), monotone_bad as f64, 0.0),
        CertificateEntry::le("breakpoints.endpoints", params.clone(), last_bad as f64, 0.0),
        CertificateEntry::le("breakpoints.division_length", params, worst_division as f64, 0.0),
    ]
    .into())
}

/// `L` bounds for each `r` and the growth bound for each `(Gamma, r)`.
pub fn weight_suite(rs: &[usize], gammas: &[f64]) -> Result<CertificateReport> {
    let mut entries = Vec::new();
    for &r in rs {
        let w = compute_l(1, r)?;
        let max = w.values().iter().cloned().fold(f64::MIN, f64::max);
        let min = w.values().iter().cloned().fold(f64::MAX, f64::min);
        let lower = 1.0 / (std::f64::consts::E * r as f64);
        entries.push(CertificateEntry::le("weights.upper", format!("r={r}"), max, 1.0 / r as f64));
        entries.push(CertificateEntry::le("weights.lower", format!("r={r}"), lower, min));
        for &gamma in gammas {
            entries.push(CertificateEntry::le(
                "weights.lambda_growth",
                format!("r={r};Gamma={gamma}"),
                lambda_growth_ratio(gamma, r),
                1.0 + 1e-12,
            ));
        }
    }
    Ok(entries.into())
}

/// Mass, sign, support and partial-sum checks of `kappa` over random
/// `(T, i, q, schedule)` draws.
pub fn kappa_suite(n_configs: usize, max_horizon: usize, seed: u64) -> Result<CertificateReport> {
    let mut rng = data_stream(seed);
    let (mut mass, mut neg, mut beyond, mut sigma) = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
    for _ in 0..n_configs {
        let horizon = rng.random_range(8..=max_horizon.max(8));
        let bp = compute_breakpoints(horizon)?;
        let i = rng.random_range(0..bp.k());
        let sched = if rng.random::<bool>() {
            weak_schedule(horizon, rng.random_range(0.1..10.0))?
        } else {
            strong_schedule(horizon, rng.random_range(0.05..5.0))?
        };
        let lo = transfer_start(&bp, i);
        let hi = bp.point(i + 1);
        let q = random_distribution(&mut rng, lo, hi);
        let kd = compute_kappa(&q, i, &bp, &sched)?;
        mass = mass.max((kd.total_mass() - 1.0).abs());
        neg = neg.max(-kd.kappa.iter().cloned().fold(0.0, f64::min));
        beyond = beyond.max(
            ((kd.phase_end + 1)..=kd.end)
                .map(|t| kd.get(t).abs())
                .fold(0.0, f64::max),
        );
        sigma = sigma.max(kd.sigma_identity_residual());
    }
    let params = format!("configs={n_configs};T<={max_horizon};seed={seed}");
    Ok(vec![
        CertificateEntry::le("kappa.mass", params.clone(), mass, 1e-9),
        CertificateEntry::le("kappa.nonnegative", params.clone(), neg, 0.0),
        CertificateEntry::le("kappa.beyond_phase", params.clone(), beyond, 0.0),
        CertificateEntry::le("kappa.sigma_identity", params, sigma, 1e-9),
    ]
    .into())
}

/// Random probability vector on `lo..=hi`: uniform, a point mass, or
/// normalized exponential weights on a random subset.
pub fn random_distribution<R: Rng>(rng: &mut R, lo: usize, hi: usize) -> Distribution {
    let n = hi - lo + 1;
    match rng.random_range(0..3) {
        0 => Distribution::uniform(lo, hi),
        1 => Distribution::point_mass(rng.random_range(lo..=hi)),
        _ => {
            let mut w: Vec<f64> = (0..n)
                .map(|_| if rng.random::<f64>() < 0.5 { -rng.random::<f64>().ln() } else { 0.0 })
                .collect();
            if w.iter().all(|v| *v == 0.0) {
                w[rng.random_range(0..n)] = 1.0;
            }
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= s);
            Distribution { start: lo, probs: w }
        }
    }
}

/// Standard horizon-`T` base schedule for `family` with scale/modulus taken from `problem`.
pub fn base_schedule_for<P: Problem + ?Sized>(problem: &P, family: Family, horizon: usize) -> Result<StepSchedule> {
    let c = problem.constants();
    let params = match family {
        Family::Harmonic | Family::StrongModified => crate::schedule::ScheduleParams::lambda(c.strong_convexity),
        _ => crate::schedule::ScheduleParams::scale(c.diameter / c.lipschitz),
    };
    match family {
        Family::StrongModified => standard_schedule(Family::Harmonic, horizon, params),
        Family::WeakModified => standard_schedule(Family::Constant, horizon, params),
        _ => build_schedule(family, horizon, params),
    }
}
