//! Lower-bound constructions for infinite-horizon step sequences: the exact
//! second-moment recursion on `x^2/2`, the drift simulation on `|x| + x^2/2`,
//! dyadic-interval block events and finite-level diagnostics of a sequence.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::ensemble::{aggregate_seeds, map_seeds};
use crate::error::{Error, Result};
use crate::problem::{abs_quadratic_problem, Problem};
use crate::rng::{splitmix64, stream_for_seed};
use crate::schedule::StepSchedule;
use crate::sgd::{run_sgd_observe, RunConfig};

/// `E z_t^2` for SGD on `x^2/2` over `[-1, 1]` with Rademacher noise from `z_1 = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareRecursion {
    /// First `t` after which every used step is below 1.
    pub t0: usize,
    /// `E z_t^2` for `t = 1..=T`.
    pub values: Vec<f64>,
}

impl SquareRecursion {
    /// `1/(t - T0 + 1)` for `t >= T0`.
    pub fn lower_bound(&self, t: usize) -> Option<f64> {
        (t >= self.t0).then(|| 1.0 / (t - self.t0 + 1) as f64)
    }
}

/// Runs `E z_{t+1}^2 = (1 - gamma_t)^2 E z_t^2 + gamma_t^2` from `E z_{T0}^2 = 1`,
/// where `T0` is the smallest `t` with `gamma_s < 1` for `t <= s < T`.
/// Before `T0` the iterate sits on `{-1, 1}`, so those entries are 1.
///
/// `gamma[t - 1] = gamma_t`; only `gamma_1 .. gamma_{T-1}` are used.
pub fn expected_square_recursion(gamma: &[f64], horizon: usize) -> Result<SquareRecursion> {
    if horizon == 0 {
        return Err(Error::InvalidParameter {
            name: "T",
            reason: "must be at least 1".into(),
        });
    }
    let used = horizon - 1;
    if gamma.len() < used {
        return Err(Error::LengthMismatch {
            expected: used,
            got: gamma.len(),
        });
    }
    if let Some(idx) = gamma[..used].iter().position(|g| !(*g > 0.0 && g.is_finite())) {
        return Err(Error::NonPositiveStep { t: idx + 1 });
    }
    let t0 = gamma[..used].iter().rposition(|g| *g >= 1.0).map_or(1, |idx| idx + 2);
    let mut values = vec![1.0; horizon];
    for t in t0..horizon {
        let g = gamma[t - 1];
        values[t] = (1.0 - g).powi(2) * values[t - 1] + g * g;
    }
    Ok(SquareRecursion { t0, values })
}

/// Across-seed statistics of SGD on `|x| + x^2/2` from `x_1 = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftEstimate {
    pub n_seeds: u64,
    pub mean_abs: Vec<f64>,
    pub stderr_abs: Vec<f64>,
    pub mean_subopt: Vec<f64>,
    pub stderr_subopt: Vec<f64>,
}

impl DriftEstimate {
    /// Smallest `mean|x_{t+1}| + 3 stderr - min(1, gamma_t)/2` over `t < T`
    /// (nonnegative when the drift bound holds at every step).
    pub fn worst_margin(&self, gamma: &[f64]) -> (usize, f64) {
        let mut worst = (0, f64::INFINITY);
        for t in 1..self.mean_abs.len() {
            let m = self.mean_abs[t] + 3.0 * self.stderr_abs[t] - 0.5 * gamma[t - 1].min(1.0);
            if m < worst.1 {
                worst = (t, m);
            }
        }
        worst
    }
}

pub fn simulate_drift(gamma: &[f64], horizon: usize, n_seeds: u64, seed0: u64) -> Result<DriftEstimate> {
    if horizon == 0 || gamma.len() < horizon {
        return Err(Error::LengthMismatch {
            expected: horizon.max(1),
            got: gamma.len(),
        });
    }
    let sched = StepSchedule::custom(gamma[..horizon].to_vec())?;
    let p = abs_quadratic_problem();
    let base = RunConfig::new(&sched, seed0).with_start(&[1.0]);
    let m = aggregate_seeds(seed0, n_seeds, |seed| {
        let mut v = vec![0.0; 2 * horizon];
        run_sgd_observe(&p, &base.with_seed(seed), |t, x| {
            v[t - 1] = x[0].abs();
            v[horizon + t - 1] = p.objective(x);
        })?;
        Ok(v)
    })?;
    let se = m.stderr();
    Ok(DriftEstimate {
        n_seeds,
        mean_abs: m.mean[..horizon].to_vec(),
        stderr_abs: se[..horizon].to_vec(),
        mean_subopt: m.mean[horizon..].to_vec(),
        stderr_subopt: se[horizon..].to_vec(),
    })
}

/// Dyadic level `I_k = {2^k, ..., 2^{k+1} - 1}` with run length `tau_k` and
/// its `2^k / tau_k` consecutive blocks of that length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DyadicLevel {
    pub k: usize,
    pub tau: usize,
}

impl DyadicLevel {
    /// Requires `k >= 2` (below that `tau_k` is not an integer).
    pub fn new(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::LevelTooSmall(k));
        }
        Ok(Self { k, tau: run_length(k) })
    }

    pub fn start(&self) -> u64 {
        1 << self.k
    }

    pub fn end(&self) -> u64 {
        (1 << (self.k + 1)) - 1
    }

    pub fn len(&self) -> u64 {
        1 << self.k
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn num_blocks(&self) -> u64 {
        self.len() / self.tau as u64
    }

    /// Block `j` (1-indexed) as an inclusive index range.
    pub fn block(&self, j: u64) -> (u64, u64) {
        let lo = self.start() + (j - 1) * self.tau as u64;
        (lo, lo + self.tau as u64 - 1)
    }

    /// `P(no block is all +1) = (1 - 2^{-tau})^{blocks}` for i.i.d. fair signs.
    pub fn complement_probability(&self) -> f64 {
        (self.num_blocks() as f64 * (-(-(self.tau as f64)).exp2()).ln_1p()).exp()
    }
}

/// `tau_k = 2^{floor(log2(k/2))}`.
pub fn run_length(k: usize) -> usize {
    assert!(k >= 2, "run length needs k >= 2");
    1 << (k.ilog2() - 1)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntervalPartition {
    pub max_level: usize,
    /// Levels `2..=K`.
    pub levels: Vec<DyadicLevel>,
}

pub fn interval_partition(max_level: usize) -> Result<IntervalPartition> {
    if max_level < 4 {
        return Err(Error::LevelTooSmall(max_level));
    }
    let levels = (2..=max_level).map(DyadicLevel::new).collect::<Result<_>>()?;
    Ok(IntervalPartition { max_level, levels })
}

/// Monte-Carlo estimate of `P(A_k^c)` with a Wilson interval at `z = 3`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventEstimate {
    pub k: usize,
    pub tau: usize,
    pub n_trials: u64,
    pub complement_count: u64,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub oracle: f64,
}

impl EventEstimate {
    pub fn oracle_in_ci(&self) -> bool {
        self.ci_lo <= self.oracle && self.oracle <= self.ci_hi
    }
}

/// Wilson score interval for `successes / n` at `z` standard deviations.
pub fn wilson_interval(successes: u64, n: u64, z: f64) -> (f64, f64) {
    let n_f = n as f64;
    let p = successes as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let centre = (p + z2 / (2.0 * n_f)) / denom;
    let half = z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

const TRIALS_PER_STREAM: u64 = 256;

/// Number of trials, out of `n_trials`, in which none of the `len / tau`
/// aligned blocks of `len` fair random bits is all ones.
///
/// `len` and `tau` must be powers of two with `tau <= 64`.
pub fn count_block_event_misses(len: u64, tau: usize, n_trials: u64, seed: u64) -> Result<u64> {
    if !len.is_power_of_two() || !tau.is_power_of_two() || tau > 64 || tau as u64 > len {
        return Err(Error::InvalidParameter {
            name: "tau",
            reason: format!("need power-of-two tau <= min(64, len), got tau={tau}, len={len}"),
        });
    }
    let words = len.div_ceil(64);
    let valid = if len >= 64 { u64::MAX } else { (1u64 << len) - 1 };
    let block_starts = aligned_mask(tau);
    let streams = n_trials.div_ceil(TRIALS_PER_STREAM);
    let counts = map_seeds(0, streams, |s| {
        let mut rng = stream_for_seed(splitmix64(seed).wrapping_add(s));
        let trials = TRIALS_PER_STREAM.min(n_trials - s * TRIALS_PER_STREAM);
        let mut misses = 0u64;
        for _ in 0..trials {
            let mut hit = false;
            for _ in 0..words {
                let w: u64 = rng.random::<u64>() & valid;
                if all_ones_runs(w, tau) & block_starts != 0 {
                    hit = true;
                    break;
                }
            }
            misses += (!hit) as u64;
        }
        Ok(misses)
    })?;
    Ok(counts.into_iter().sum())
}

/// Bit `i` set iff bits `i .. i + tau` of `w` are all set (for power-of-two `tau`).
fn all_ones_runs(mut w: u64, tau: usize) -> u64 {
    let mut span = 1;
    while span < tau {
        w &= w >> span;
        span *= 2;
    }
    w
}

/// Bits at positions that are multiples of `tau`.
fn aligned_mask(tau: usize) -> u64 {
    (0..64).step_by(tau).fold(0u64, |m, i| m | (1 << i))
}

pub fn estimate_event_ak(k: usize, n_trials: u64, seed: u64) -> Result<EventEstimate> {
    let level = DyadicLevel::new(k)?;
    if k < 4 {
        return Err(Error::LevelTooSmall(k));
    }
    let misses = count_block_event_misses(level.len(), level.tau, n_trials, seed ^ ((k as u64) << 48))?;
    let (ci_lo, ci_hi) = wilson_interval(misses, n_trials, 3.0);
    Ok(EventEstimate {
        k,
        tau: level.tau,
        n_trials,
        complement_count: misses,
        p_hat: misses as f64 / n_trials as f64,
        ci_lo,
        ci_hi,
        oracle: level.complement_probability(),
    })
}

/// Scale-free decay summary: `P(A_k^c) 2^{k/2} / k` per level.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    /// `(k, p_hat 2^{k/2} / k, ci_hi 2^{k/2} / k)`.
    pub ratios: Vec<(usize, f64, f64)>,
    /// Largest point ratio and its level.
    pub constant: f64,
    pub argmax: usize,
    /// The upper confidence ratios of the upper half of the levels never exceed `constant`.
    pub bounded: bool,
}

pub fn fit_decay_constant(estimates: &[EventEstimate]) -> Result<DecayFit> {
    if estimates.is_empty() {
        return Err(Error::EmptyReport);
    }
    let ratios: Vec<(usize, f64, f64)> = estimates
        .iter()
        .map(|e| {
            let s = (e.k as f64 / 2.0).exp2() / e.k as f64;
            (e.k, e.p_hat * s, e.ci_hi * s)
        })
        .collect();
    let (argmax, constant) = ratios
        .iter()
        .fold((ratios[0].0, f64::MIN), |acc, r| if r.1 > acc.1 { (r.0, r.1) } else { acc });
    let half = ratios.len() / 2;
    let bounded = ratios[half..].iter().all(|r| r.2 <= constant);
    Ok(DecayFit {
        ratios,
        constant,
        argmax,
        bounded,
    })
}

/// An infinite-horizon step sequence `gamma_1, gamma_2, ...`.
#[derive(Debug, Clone, PartialEq)]
pub enum StepSequence {
    /// `c / t`.
    Harmonic { c: f64 },
    /// `c t^{-p}`.
    Power { c: f64, p: f64 },
    /// `ratio^t`.
    Geometric { ratio: f64 },
    /// `1 / (t ln(t + 1))`.
    HarmonicLog,
    Constant { c: f64 },
    /// Explicit values; undefined past the end.
    Table(Vec<f64>),
}

impl StepSequence {
    /// `ln gamma_t`, or `None` past the end of a table.
    pub fn ln_gamma(&self, t: u64) -> Option<f64> {
        let tf = t as f64;
        Some(match self {
            Self::Harmonic { c } => c.ln() - tf.ln(),
            Self::Power { c, p } => c.ln() - p * tf.ln(),
            Self::Geometric { ratio } => tf * ratio.ln(),
            Self::HarmonicLog => -tf.ln() - tf.ln_1p().ln(),
            Self::Constant { c } => c.ln(),
            Self::Table(v) => v.get(t as usize - 1)?.ln(),
        })
    }

    pub fn gamma(&self, t: u64) -> Option<f64> {
        self.ln_gamma(t).map(f64::exp)
    }

    /// `gamma_1 .. gamma_n`.
    pub fn take(&self, n: usize) -> Result<Vec<f64>> {
        (1..=n as u64)
            .map(|t| self.gamma(t).ok_or(Error::InsufficientHorizon(t)))
            .collect()
    }
}

impl fmt::Display for StepSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Harmonic { c } => write!(f, "harmonic:c={c}"),
            Self::Power { c, p } => write!(f, "power:c={c},p={p}"),
            Self::Geometric { ratio } => write!(f, "geometric:ratio={ratio}"),
            Self::HarmonicLog => write!(f, "harmonic_log"),
            Self::Constant { c } => write!(f, "constant:c={c}"),
            Self::Table(v) => write!(f, "table:len={}", v.len()),
        }
    }
}

impl FromStr for StepSequence {
    type Err = Error;

    /// `harmonic[:c=..]`, `power:p=..[,c=..]`, `geometric[:ratio=..]`,
    /// `harmonic_log`, `constant:c=..`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut c = 1.0;
        let mut p = None;
        let mut ratio = 0.5;
        for kv in rest.split(',').filter(|kv| !kv.is_empty()) {
            let (key, value) = kv.split_once('=').ok_or_else(|| Error::InvalidParameter {
                name: "sequence",
                reason: format!("expected key=value, got `{kv}`"),
            })?;
            let v: f64 = value.trim().parse().map_err(|_| Error::InvalidParameter {
                name: "sequence",
                reason: format!("bad number `{value}`"),
            })?;
            match key.trim() {
                "c" => c = v,
                "p" => p = Some(v),
                "ratio" => ratio = v,
                other => {
                    return Err(Error::InvalidParameter {
                        name: "sequence",
                        reason: format!("unknown key `{other}`"),
                    })
                }
            }
        }
        if !(c > 0.0) || !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::InvalidParameter {
                name: "sequence",
                reason: "need c > 0 and 0 < ratio < 1".into(),
            });
        }
        match name.trim() {
            "harmonic" => Ok(Self::Harmonic { c }),
            "power" => Ok(Self::Power {
                c,
                p: p.ok_or(Error::InvalidParameter {
                    name: "sequence",
                    reason: "power needs p".into(),
                })?,
            }),
            "geometric" => Ok(Self::Geometric { ratio }),
            "harmonic_log" => Ok(Self::HarmonicLog),
            "constant" => Ok(Self::Constant { c }),
            other => Err(Error::UnknownFamily(other.to_string())),
        }
    }
}

/// Finite-level thresholds for classifying a sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    /// Ceiling on `eta_k` for the almost-sure condition.
    pub c0: f64,
    /// Floor on `lambda_k` for the almost-sure condition.
    pub d0: f64,
    /// Number of trailing level steps a growth trend must span.
    pub window: usize,
    /// Minimum total growth factor across the window.
    pub min_growth: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            c0: 10.0,
            d0: 0.1,
            window: 5,
            min_growth: 1.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FlagKind {
    /// `t gamma_t` grows without bound.
    SuperHarmonic,
    /// `max(eta_k, 1/lambda_k)` grows without bound.
    BadInExpectation,
    /// A tail level has bounded `eta_k` and `lambda_k` bounded away from 0.
    BadAlmostSurely,
}

impl FlagKind {
    pub fn tag(self) -> &'static str {
        match self {
            Self::SuperHarmonic => "super_harmonic",
            Self::BadInExpectation => "bad_in_expectation",
            Self::BadAlmostSurely => "bad_almost_surely",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Flag {
    pub kind: FlagKind,
    pub witnesses: Vec<usize>,
}

/// Per-level values, kept in log form because geometric sequences underflow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelDiagnostics {
    pub k: usize,
    /// `ln(2^k sum gamma^2 / (sum gamma)^2)`.
    pub ln_eta: f64,
    /// `ln sum_{t in I_k} gamma_t`.
    pub ln_lambda: f64,
    /// `ln max_{t in I_k} t gamma_t`.
    pub ln_max_t_gamma: f64,
}

impl LevelDiagnostics {
    pub fn eta(&self) -> f64 {
        self.ln_eta.exp()
    }

    pub fn lambda(&self) -> f64 {
        self.ln_lambda.exp()
    }

    /// `ln max(eta_k, 1/lambda_k)`.
    pub fn ln_badness(&self) -> f64 {
        self.ln_eta.max(-self.ln_lambda)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleDiagnostics {
    pub max_level: usize,
    pub thresholds: Thresholds,
    /// Levels `0..=K`.
    pub levels: Vec<LevelDiagnostics>,
    pub flags: Vec<Flag>,
}

impl ScheduleDiagnostics {
    pub fn has(&self, kind: FlagKind) -> bool {
        self.flags.iter().any(|f| f.kind == kind)
    }

    pub fn witnesses(&self, kind: FlagKind) -> &[usize] {
        self.flags
            .iter()
            .find(|f| f.kind == kind)
            .map_or(&[], |f| f.witnesses.as_slice())
    }

    /// Flags witnessed at level `k`, joined by `|`.
    pub fn level_flags(&self, k: usize) -> String {
        self.flags
            .iter()
            .filter(|f| f.witnesses.contains(&k))
            .map(|f| f.kind.tag())
            .collect::<Vec<_>>()
            .join("|")
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Computes `eta_k`, `lambda_k` and `max t gamma_t` on `I_0 .. I_K` and raises:
///
/// * super-harmonic, when `max t gamma_t` rises strictly over the last
///   `window` level steps by a total factor of at least `min_growth`;
/// * bad in expectation, when `max(eta_k, 1/lambda_k)` does the same;
/// * bad almost surely, when some level `k >= K/2` has `eta_k <= c0` and `lambda_k >= d0`.
pub fn schedule_trichotomy(seq: &StepSequence, max_level: usize, th: Thresholds) -> Result<ScheduleDiagnostics> {
    if max_level < th.window || th.window == 0 {
        return Err(Error::InvalidParameter {
            name: "K",
            reason: format!("need K >= window >= 1, got K={max_level}, window={}", th.window),
        });
    }
    let last = (1u64 << (max_level + 1)) - 1;
    if seq.ln_gamma(last).is_none() {
        return Err(Error::InsufficientHorizon(last));
    }
    let mut levels = Vec::with_capacity(max_level + 1);
    for k in 0..=max_level {
        let lo = 1u64 << k;
        let ln_g: Vec<(u64, f64)> = (lo..2 * lo).map(|t| (t, seq.ln_gamma(t).expect("checked above"))).collect();
        let ln_s1 = log_sum_exp(ln_g.iter().map(|(_, g)| *g));
        let ln_s2 = log_sum_exp(ln_g.iter().map(|(_, g)| 2.0 * g));
        let ln_max = ln_g
            .iter()
            .map(|(t, g)| (*t as f64).ln() + g)
            .fold(f64::NEG_INFINITY, f64::max);
        levels.push(LevelDiagnostics {
            k,
            ln_eta: k as f64 * std::f64::consts::LN_2 + ln_s2 - 2.0 * ln_s1,
            ln_lambda: ln_s1,
            ln_max_t_gamma: ln_max,
        });
    }
    let trailing: Vec<usize> = (max_level - th.window..=max_level).collect();
    let grows = |f: &dyn Fn(&LevelDiagnostics) -> f64| {
        let v: Vec<f64> = trailing.iter().map(|&k| f(&levels[k])).collect();
        v.windows(2).all(|w| w[1] > w[0]) && v[v.len() - 1] - v[0] >= th.min_growth.ln()
    };
    let mut flags = Vec::new();
    if grows(&|l| l.ln_max_t_gamma) {
        flags.push(Flag {
            kind: FlagKind::SuperHarmonic,
            witnesses: trailing.clone(),
        });
    }
    if grows(&|l| l.ln_badness()) {
        flags.push(Flag {
            kind: FlagKind::BadInExpectation,
            witnesses: trailing.clone(),
        });
    }
    let tail: Vec<usize> = (max_level.div_ceil(2)..=max_level)
        .filter(|&k| levels[k].ln_eta <= th.c0.ln() && levels[k].ln_lambda >= th.d0.ln())
        .collect();
    if !tail.is_empty() {
        flags.push(Flag {
            kind: FlagKind::BadAlmostSurely,
            witnesses: tail,
        });
    }
    Ok(ScheduleDiagnostics {
        max_level,
        thresholds: th,
        levels,
        flags,
    })
}
