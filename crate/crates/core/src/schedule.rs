//! Breakpoints and step-size schedules.
//!
//! The horizon `T` is split into phases `(T_i, T_{i+1}]` with
//! `T_i = T - ceil(T / 2^i)` for `0 <= i <= k` and `T_{k+1} = T`, where `k` is
//! the smallest `i` with `T / 2^i <= 1`. A modified schedule multiplies a base
//! schedule by `2^{-i}` on phase `i`.
//!
//! Iterations are 1-indexed everywhere in this module.

use std::fmt;
use std::io::Write;
use std::ops::RangeInclusive;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Smallest horizon for which the modified schedules are defined.
pub const MIN_HORIZON: usize = 4;

/// Phase boundaries `T_0 < T_1 < ... < T_{k+1}` for a horizon `T`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Breakpoints {
    horizon: usize,
    k: usize,
    points: Vec<usize>,
}

impl Breakpoints {
    pub fn new(horizon: usize) -> Result<Self> {
        compute_breakpoints(horizon)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Index of the last breakpoint below `T`: `T_k = T - 1`.
    pub fn k(&self) -> usize {
        self.k
    }

    /// `T_0, ..., T_{k+1}`.
    pub fn points(&self) -> &[usize] {
        &self.points
    }

    /// `T_i` for `0 <= i <= k + 1`.
    pub fn point(&self, i: usize) -> usize {
        self.points[i]
    }

    /// Number of phases, `k + 1`.
    pub fn num_phases(&self) -> usize {
        self.k + 1
    }

    /// Iterations belonging to phase `i`, i.e. `T_i + 1 ..= T_{i+1}`.
    pub fn phase_range(&self, i: usize) -> RangeInclusive<usize> {
        self.points[i] + 1..=self.points[i + 1]
    }

    /// Phase `i` with `T_i < t <= T_{i+1}`.
    pub fn phase_of(&self, t: usize) -> usize {
        assert!(
            (1..=self.horizon).contains(&t),
            "iteration {t} outside 1..={}",
            self.horizon
        );
        // First index with points[idx] >= t, minus one.
        self.points.partition_point(|&p| p < t) - 1
    }

    /// `ceil(T / 4)`, the first index of the averaging window used by phase 0.
    pub fn quarter(&self) -> usize {
        self.horizon.div_ceil(4)
    }
}

/// Computes the breakpoints for horizon `T >= 4`.
pub fn compute_breakpoints(horizon: usize) -> Result<Breakpoints> {
    if horizon < MIN_HORIZON {
        return Err(Error::HorizonTooSmall(horizon));
    }
    // k = min { i : T <= 2^i }
    let k = horizon.next_power_of_two().trailing_zeros() as usize;
    let mut points = Vec::with_capacity(k + 2);
    for i in 0..=k {
        let tail = horizon.div_ceil(1usize << i);
        points.push(horizon - tail);
    }
    points.push(horizon);
    Ok(Breakpoints { horizon, k, points })
}

/// Which construction produced a schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    /// `C / sqrt(T)` for every t.
    Constant,
    /// `C / sqrt(t)`.
    InvSqrtT,
    /// `1 / (lambda t)`.
    Harmonic,
    /// Modified constant schedule.
    WeakModified,
    /// Modified harmonic schedule.
    StrongModified,
    Custom,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::Constant,
        Family::InvSqrtT,
        Family::Harmonic,
        Family::WeakModified,
        Family::StrongModified,
        Family::Custom,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Family::Constant => "constant",
            Family::InvSqrtT => "inv_sqrt_t",
            Family::Harmonic => "harmonic",
            Family::WeakModified => "weak_modified",
            Family::StrongModified => "strong_modified",
            Family::Custom => "custom",
        }
    }

    pub fn is_modified(self) -> bool {
        matches!(self, Family::WeakModified | Family::StrongModified)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|fam| fam.tag() == s)
            .ok_or_else(|| Error::UnknownFamily(s.to_string()))
    }
}

/// Family parameters: the scale `C` and/or the strong-convexity modulus.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ScheduleParams {
    pub scale: Option<f64>,
    pub lambda: Option<f64>,
}

impl ScheduleParams {
    pub fn scale(c: f64) -> Self {
        Self {
            scale: Some(c),
            lambda: None,
        }
    }

    pub fn lambda(lambda: f64) -> Self {
        Self {
            scale: None,
            lambda: Some(lambda),
        }
    }

    fn require_scale(&self) -> Result<f64> {
        let c = self.scale.ok_or(Error::InvalidParameter {
            name: "C",
            reason: "missing".into(),
        })?;
        positive("C", c)
    }

    fn require_lambda(&self) -> Result<f64> {
        let l = self.lambda.ok_or(Error::InvalidParameter {
            name: "lambda",
            reason: "missing".into(),
        })?;
        positive("lambda", l)
    }
}

fn positive(name: &'static str, value: f64) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonPositive { name, value })
    }
}

/// A materialized step-size sequence `alpha_1, ..., alpha_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSchedule {
    family: Family,
    params: ScheduleParams,
    alpha: Vec<f64>,
    breakpoints: Option<Breakpoints>,
}

impl StepSchedule {
    /// Wraps arbitrary step sizes. Entries must be finite and nonnegative.
    pub fn custom(alpha: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::InvalidParameter {
                name: "alpha",
                reason: "empty schedule".into(),
            });
        }
        if let Some(t) = alpha.iter().position(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(Error::InvalidParameter {
                name: "alpha",
                reason: format!("entry at t={} is {}", t + 1, alpha[t]),
            });
        }
        Ok(Self {
            family: Family::Custom,
            params: ScheduleParams::default(),
            alpha,
            breakpoints: None,
        })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn params(&self) -> ScheduleParams {
        self.params
    }

    /// Horizon `T`.
    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    /// `alpha_t`, 1-indexed.
    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t - 1]
    }

    /// All entries; index 0 holds `alpha_1`.
    pub fn values(&self) -> &[f64] {
        &self.alpha
    }

    /// Breakpoints of a modified schedule.
    pub fn breakpoints(&self) -> Option<&Breakpoints> {
        self.breakpoints.as_ref()
    }

    /// Phase of iteration `t`, or `None` when the schedule is not phase-structured.
    pub fn phase(&self, t: usize) -> Option<usize> {
        self.breakpoints.as_ref().map(|bp| bp.phase_of(t))
    }

    pub fn is_nonincreasing(&self) -> bool {
        self.alpha.windows(2).all(|w| w[1] <= w[0])
    }

    /// Stable hex fingerprint of the family tag and the exact step values.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.family.tag().as_bytes());
        for a in &self.alpha {
            h.update(a.to_bits().to_le_bytes());
        }
        hex16(&h.finalize())
    }

    /// Writes `t,alpha,phase`; phase is -1 for schedules without breakpoints.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,alpha,phase")?;
        for (idx, a) in self.alpha.iter().enumerate() {
            let t = idx + 1;
            let phase = self.phase(t).map_or(-1, |p| p as i64);
            writeln!(out, "{t},{a:e},{phase}")?;
        }
        Ok(())
    }
}

pub(crate) fn hex16(bytes: &[u8]) -> String {
    bytes[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Baseline schedules: `constant` (C/sqrt T), `inv_sqrt_t` (C/sqrt t) and
/// `harmonic` (1/(lambda t)).
pub fn standard_schedule(family: Family, horizon: usize, params: ScheduleParams) -> Result<StepSchedule> {
    if horizon == 0 {
        return Err(Error::InvalidParameter {
            name: "T",
            reason: "horizon must be at least 1".into(),
        });
    }
    let alpha: Vec<f64> = match family {
        Family::Constant => {
            let c = params.require_scale()?;
            let a = c / (horizon as f64).sqrt();
            vec![a; horizon]
        }
        Family::InvSqrtT => {
            let c = params.require_scale()?;
            (1..=horizon).map(|t| c / (t as f64).sqrt()).collect()
        }
        Family::Harmonic => {
            let l = params.require_lambda()?;
            (1..=horizon).map(|t| 1.0 / (l * t as f64)).collect()
        }
        other => return Err(Error::UnknownFamily(other.tag().to_string())),
    };
    Ok(StepSchedule {
        family,
        params,
        alpha,
        breakpoints: None,
    })
}

/// Multiplies `gamma` by `2^{-i}` on each phase of horizon `T`.
///
/// `gamma` must be nonincreasing and cover at least `T` iterations.
pub fn modify_schedule(gamma: &StepSchedule, horizon: usize) -> Result<StepSchedule> {
    let bp = compute_breakpoints(horizon)?;
    if gamma.len() < horizon {
        return Err(Error::LengthMismatch {
            expected: horizon,
            got: gamma.len(),
        });
    }
    let base = &gamma.alpha[..horizon];
    if let Some(idx) = base.windows(2).position(|w| w[1] > w[0]) {
        return Err(Error::NotDecreasing { t: idx + 1 });
    }
    let mut alpha = Vec::with_capacity(horizon);
    for i in 0..bp.num_phases() {
        let factor = (-(i as f64)).exp2();
        alpha.extend(bp.phase_range(i).map(|t| base[t - 1] * factor));
    }
    let family = match gamma.family {
        Family::Constant => Family::WeakModified,
        Family::Harmonic => Family::StrongModified,
        _ => Family::Custom,
    };
    Ok(StepSchedule {
        family,
        params: gamma.params,
        alpha,
        breakpoints: Some(bp),
    })
}

/// `alpha_t = C 2^{-i} / sqrt(T)` on phase `i`.
pub fn weak_schedule(horizon: usize, scale: f64) -> Result<StepSchedule> {
    if horizon < MIN_HORIZON {
        return Err(Error::HorizonTooSmall(horizon));
    }
    let base = standard_schedule(Family::Constant, horizon, ScheduleParams::scale(scale))?;
    modify_schedule(&base, horizon)
}

/// `alpha_t = 2^{-i} / (lambda t)` on phase `i`.
pub fn strong_schedule(horizon: usize, lambda: f64) -> Result<StepSchedule> {
    if horizon < MIN_HORIZON {
        return Err(Error::HorizonTooSmall(horizon));
    }
    let base = standard_schedule(Family::Harmonic, horizon, ScheduleParams::lambda(lambda))?;
    modify_schedule(&base, horizon)
}

/// Builds any named family. `custom` cannot be built from parameters alone.
pub fn build_schedule(family: Family, horizon: usize, params: ScheduleParams) -> Result<StepSchedule> {
    match family {
        Family::WeakModified => weak_schedule(horizon, params.require_scale()?),
        Family::StrongModified => strong_schedule(horizon, params.require_lambda()?),
        Family::Custom => Err(Error::UnknownFamily(
            "custom (needs explicit step values)".into(),
        )),
        _ => standard_schedule(family, horizon, params),
    }
}

/// Decay diagnostics of a base schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayProfile {
    /// `min gamma_{2t} / gamma_t` over `2t <= T`, clamped to `(0, 1]`.
    pub beta: f64,
    pub is_decreasing: bool,
}

pub fn estimate_decay_constant(gamma: &[f64]) -> DecayProfile {
    let horizon = gamma.len();
    let mut beta = 1.0_f64;
    for t in 1..=horizon / 2 {
        let ratio = gamma[2 * t - 1] / gamma[t - 1];
        if ratio < beta {
            beta = ratio;
        }
    }
    if beta.is_nan() || beta <= 0.0 {
        beta = f64::MIN_POSITIVE;
    }
    DecayProfile {
        beta,
        is_decreasing: gamma.windows(2).all(|w| w[1] <= w[0]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Breakpoints straight from the definition using floating point ceil.
    fn oracle_points(horizon: usize) -> (usize, Vec<usize>) {
        let tf = horizon as f64;
        let mut k = 0;
        while tf * (-(k as f64)).exp2() > 1.0 {
            k += 1;
        }
        let mut pts: Vec<usize> = (0..=k)
            .map(|i| horizon - (tf * (-(i as f64)).exp2()).ceil() as usize)
            .collect();
        pts.push(horizon);
        (k, pts)
    }

    #[test]
    fn breakpoint_examples() {
        let bp = compute_breakpoints(4).unwrap();
        assert_eq!((bp.k(), bp.points()), (2, &[0, 2, 3, 4][..]));
        let bp = compute_breakpoints(8).unwrap();
        assert_eq!((bp.k(), bp.points()), (3, &[0, 4, 6, 7, 8][..]));
        let bp = compute_breakpoints(10).unwrap();
        assert_eq!((bp.k(), bp.points()), (4, &[0, 5, 7, 8, 9, 10][..]));
    }

    #[test]
    fn breakpoints_match_float_definition() {
        for horizon in 4..2000 {
            let bp = compute_breakpoints(horizon).unwrap();
            let (k, pts) = oracle_points(horizon);
            assert_eq!(bp.k(), k, "T={horizon}");
            assert_eq!(bp.points(), &pts[..], "T={horizon}");
        }
    }

    #[test]
    fn small_horizon_rejected() {
        for horizon in 0..4 {
            assert!(matches!(
                compute_breakpoints(horizon),
                Err(Error::HorizonTooSmall(h)) if h == horizon
            ));
            assert!(weak_schedule(horizon, 1.0).is_err());
            assert!(strong_schedule(horizon, 1.0).is_err());
        }
    }

    #[test]
    fn phase_lookup_is_half_open() {
        let bp = compute_breakpoints(10).unwrap();
        // points [0,5,7,8,9,10]
        let phases: Vec<usize> = (1..=10).map(|t| bp.phase_of(t)).collect();
        assert_eq!(phases, vec![0, 0, 0, 0, 0, 1, 1, 2, 3, 4]);
    }

    #[test]
    fn weak_examples() {
        let s = weak_schedule(8, 2.0).unwrap();
        for t in 1..=4 {
            assert_relative_eq!(s.alpha(t), 2.0 / 8f64.sqrt(), max_relative = 1e-15);
        }
        assert_relative_eq!(s.alpha(8), 2.0 * 0.125 / 8f64.sqrt(), max_relative = 1e-15);
        assert_relative_eq!(s.alpha(8), 0.0884, epsilon = 1e-4);
        let s = weak_schedule(4, 1.0).unwrap();
        assert_eq!(s.values(), &[0.5, 0.5, 0.25, 0.125]);
        assert_eq!(s.family(), Family::WeakModified);
    }

    #[test]
    fn strong_examples() {
        let s = strong_schedule(4, 1.0).unwrap();
        assert_relative_eq!(s.alpha(1), 1.0);
        assert_relative_eq!(s.alpha(2), 0.5);
        assert_relative_eq!(s.alpha(3), 0.5 / 3.0, max_relative = 1e-15);
        assert_relative_eq!(s.alpha(4), 0.0625);
        let s = strong_schedule(8, 2.0).unwrap();
        assert_relative_eq!(s.alpha(5), 0.05, max_relative = 1e-15);
    }

    #[test]
    fn modify_matches_closed_forms_entrywise() {
        for horizon in [4, 5, 17, 100, 1023, 1024] {
            let base = standard_schedule(Family::Harmonic, horizon, ScheduleParams::lambda(0.3)).unwrap();
            let m = modify_schedule(&base, horizon).unwrap();
            let bp = compute_breakpoints(horizon).unwrap();
            for t in 1..=horizon {
                let i = bp.phase_of(t) as i32;
                let direct = 2f64.powi(-i) / (0.3 * t as f64);
                assert_eq!(m.alpha(t), direct, "T={horizon} t={t}");
            }
            assert_eq!(m, strong_schedule(horizon, 0.3).unwrap());
        }
    }

    #[test]
    fn modify_ones() {
        let g = StepSchedule::custom(vec![1.0; 4]).unwrap();
        let m = modify_schedule(&g, 4).unwrap();
        assert_eq!(m.values(), &[1.0, 1.0, 0.5, 0.25]);
        assert_eq!(m.family(), Family::Custom);
        assert_eq!(m.phase(3), Some(1));
    }

    #[test]
    fn modify_rejects_increasing_base() {
        let g = StepSchedule::custom(vec![1.0, 1.0, 2.0, 1.0]).unwrap();
        assert!(matches!(modify_schedule(&g, 4), Err(Error::NotDecreasing { t: 2 })));
        let short = StepSchedule::custom(vec![1.0; 3]).unwrap();
        assert!(matches!(modify_schedule(&short, 4), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn standard_examples() {
        let h = standard_schedule(Family::Harmonic, 3, ScheduleParams::lambda(1.0)).unwrap();
        assert_relative_eq!(h.values()[2], 1.0 / 3.0);
        assert_eq!(&h.values()[..2], &[1.0, 0.5]);
        let c = standard_schedule(Family::Constant, 3, ScheduleParams::scale(3.0)).unwrap();
        for a in c.values() {
            assert_relative_eq!(*a, 3f64.sqrt(), max_relative = 1e-15);
        }
        let s = standard_schedule(Family::InvSqrtT, 4, ScheduleParams::scale(1.0)).unwrap();
        let want = [1.0, 1.0 / 2f64.sqrt(), 1.0 / 3f64.sqrt(), 0.5];
        for (a, w) in s.values().iter().zip(want) {
            assert_relative_eq!(*a, w, max_relative = 1e-15);
        }
        assert!(matches!(
            standard_schedule(Family::WeakModified, 4, ScheduleParams::scale(1.0)),
            Err(Error::UnknownFamily(_))
        ));
        assert!("cosine".parse::<Family>().is_err());
    }

    #[test]
    fn nonpositive_params_rejected() {
        assert!(matches!(weak_schedule(8, 0.0), Err(Error::NonPositive { name: "C", .. })));
        assert!(matches!(
            strong_schedule(8, -1.0),
            Err(Error::NonPositive { name: "lambda", .. })
        ));
    }

    #[test]
    fn decay_constants() {
        let c = estimate_decay_constant(&[0.3; 16]);
        assert_eq!(c.beta, 1.0);
        assert!(c.is_decreasing);
        let h: Vec<f64> = (1..=64).map(|t| 1.0 / t as f64).collect();
        assert_relative_eq!(estimate_decay_constant(&h).beta, 0.5, max_relative = 1e-15);
        let s: Vec<f64> = (1..=64).map(|t| 1.0 / (t as f64).sqrt()).collect();
        assert_relative_eq!(estimate_decay_constant(&s).beta, 0.5f64.sqrt(), max_relative = 1e-12);
        let up = estimate_decay_constant(&[1.0, 2.0, 3.0]);
        assert!(!up.is_decreasing);
        assert_eq!(up.beta, 1.0);
    }

    #[test]
    fn last_entry_bounds() {
        for horizon in [4usize, 7, 64, 1000, 4097] {
            let c = 1.7;
            let w = weak_schedule(horizon, c).unwrap();
            assert!(w.alpha(horizon) <= 2.0 * c / (horizon as f64).powf(1.5));
            let lambda = 0.4;
            let s = strong_schedule(horizon, lambda).unwrap();
            assert!(s.alpha(horizon) <= 4.0 / (lambda * (horizon as f64).powi(2)));
        }
    }

    #[test]
    fn csv_dump_has_phase_column() {
        let mut buf = Vec::new();
        weak_schedule(4, 1.0).unwrap().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,alpha,phase");
        assert_eq!(lines.len(), 5);
        assert!(lines[4].ends_with(",2"));
        let mut buf = Vec::new();
        standard_schedule(Family::Harmonic, 3, ScheduleParams::lambda(1.0))
            .unwrap()
            .write_csv(&mut buf)
            .unwrap();
        assert!(String::from_utf8(buf).unwrap().lines().nth(1).unwrap().ends_with(",-1"));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn breakpoint_invariants(horizon in 4usize..200_000) {
                let bp = compute_breakpoints(horizon).unwrap();
                let p = bp.points();
                prop_assert_eq!(p[0], 0);
                prop_assert_eq!(p[bp.k()], horizon - 1);
                prop_assert_eq!(p[bp.k() + 1], horizon);
                prop_assert!(p.windows(2).all(|w| w[0] < w[1]));
                for i in 0..bp.k() {
                    prop_assert!(4 * (p[i + 2] - p[i + 1]) >= p[i + 1] - p[i]);
                }
            }

            #[test]
            fn modify_is_phasewise_scaling(
                horizon in 4usize..600,
                levels in proptest::collection::vec(0.01f64..10.0, 1..8),
            ) {
                // Piecewise-constant nonincreasing base.
                let mut lv = levels.clone();
                lv.sort_by(|a, b| b.partial_cmp(a).unwrap());
                let base: Vec<f64> = (0..horizon).map(|j| lv[j * lv.len() / horizon]).collect();
                let g = StepSchedule::custom(base.clone()).unwrap();
                let m = modify_schedule(&g, horizon).unwrap();
                let bp = m.breakpoints().unwrap();
                for t in 1..=horizon {
                    let i = bp.phase_of(t) as i32;
                    prop_assert_eq!(m.alpha(t), base[t - 1] * 2f64.powi(-i));
                }
                prop_assert!(m.is_nonincreasing());
            }
        }
    }
}
