//! Text specs for problems, schedules, methods and whole experiments.
//!
//! Problems and schedules use `name:key=value,...`; methods append
//! `@last`, `@suffix_quarter` or `@running`. An experiment is a flat file of
//! `key = value` lines where `method` may repeat and `#` starts a comment.

use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::problem::{abs_quadratic_problem, gen_lasso, gen_svm, pure_quadratic_problem, Problem};
use crate::schedule::{build_schedule, Family, ScheduleParams, StepSchedule};

fn bad(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

/// Splits `a=1,b=2` into pairs.
fn key_values(rest: &str, what: &'static str) -> Result<Vec<(String, String)>> {
    rest.split(',')
        .filter(|kv| !kv.trim().is_empty())
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| bad(what, format!("expected key=value, got `{kv}`")))
        })
        .collect()
}

fn num<T: FromStr>(key: &str, v: &str, what: &'static str) -> Result<T> {
    v.parse().map_err(|_| bad(what, format!("bad value `{v}` for `{key}`")))
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSpec {
    Lasso {
        d: usize,
        s: usize,
        n: usize,
        sigma: f64,
        reg: f64,
        seed: u64,
    },
    Svm {
        d: usize,
        n: usize,
        sigma: f64,
        eta: f64,
        reg: f64,
        seed: u64,
    },
    AbsQuad,
    Quad,
}

impl ProblemSpec {
    /// Lasso setup of the reference experiment.
    pub fn paper_lasso() -> Self {
        Self::Lasso {
            d: 100,
            s: 60,
            n: 80,
            sigma: 0.1,
            reg: 0.2,
            seed: 0,
        }
    }

    /// SVM setup of the reference experiment.
    pub fn paper_svm() -> Self {
        Self::Svm {
            d: 30,
            n: 500,
            sigma: 5.0,
            eta: 1.0,
            reg: 0.1,
            seed: 0,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Lasso { .. } => "lasso",
            Self::Svm { .. } => "svm",
            Self::AbsQuad => "absquad",
            Self::Quad => "quad",
        }
    }

    pub fn build(&self) -> Result<Box<dyn Problem>> {
        Ok(match *self {
            Self::Lasso { d, s, n, sigma, reg, seed } => Box::new(gen_lasso(d, s, n, sigma, reg, seed)?),
            Self::Svm {
                d,
                n,
                sigma,
                eta,
                reg,
                seed,
            } => Box::new(gen_svm(d, n, sigma, eta, reg, seed)?),
            Self::AbsQuad => Box::new(abs_quadratic_problem()),
            Self::Quad => Box::new(pure_quadratic_problem()),
        })
    }
}

impl fmt::Display for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Lasso { d, s, n, sigma, reg, seed } => {
                write!(f, "lasso:d={d},s={s},n={n},sigma={sigma},reg={reg},seed={seed}")
            }
            Self::Svm {
                d,
                n,
                sigma,
                eta,
                reg,
                seed,
            } => write!(f, "svm:d={d},n={n},sigma={sigma},eta={eta},reg={reg},seed={seed}"),
            Self::AbsQuad => f.write_str("absquad"),
            Self::Quad => f.write_str("quad"),
        }
    }
}

impl FromStr for ProblemSpec {
    type Err = Error;

    /// Missing keys take the reference-experiment values.
    fn from_str(s: &str) -> Result<Self> {
        let (name, rest) = s.trim().split_once(':').unwrap_or((s.trim(), ""));
        let kvs = key_values(rest, "problem")?;
        let mut spec = match name {
            "lasso" => Self::paper_lasso(),
            "svm" => Self::paper_svm(),
            "absquad" => Self::AbsQuad,
            "quad" => Self::Quad,
            other => return Err(bad("problem", format!("unknown kind `{other}`"))),
        };
        for (k, v) in &kvs {
            let what = "problem";
            match (&mut spec, k.as_str()) {
                (Self::Lasso { d, .. } | Self::Svm { d, .. }, "d") => *d = num(k, v, what)?,
                (Self::Lasso { n, .. } | Self::Svm { n, .. }, "n") => *n = num(k, v, what)?,
                (Self::Lasso { sigma, .. } | Self::Svm { sigma, .. }, "sigma") => *sigma = num(k, v, what)?,
                (Self::Lasso { reg, .. } | Self::Svm { reg, .. }, "reg") => *reg = num(k, v, what)?,
                (Self::Lasso { seed, .. } | Self::Svm { seed, .. }, "seed") => *seed = num(k, v, what)?,
                (Self::Lasso { s, .. }, "s") => *s = num(k, v, what)?,
                (Self::Svm { eta, .. }, "eta") => *eta = num(k, v, what)?,
                _ => return Err(bad("problem", format!("unknown key `{k}` for {name}"))),
            }
        }
        Ok(spec)
    }
}

/// A schedule family with optional explicit parameters. Missing parameters
/// are taken from the problem: `C = D/G` and the strong-convexity modulus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleSpec {
    pub family: Family,
    pub scale: Option<f64>,
    pub lambda: Option<f64>,
}

impl ScheduleSpec {
    pub fn new(family: Family) -> Self {
        Self {
            family,
            scale: None,
            lambda: None,
        }
    }

    pub fn with_scale(mut self, c: f64) -> Self {
        self.scale = Some(c);
        self
    }

    pub fn with_lambda(mut self, l: f64) -> Self {
        self.lambda = Some(l);
        self
    }

    pub fn params_for<P: Problem + ?Sized>(&self, problem: &P) -> ScheduleParams {
        let c = problem.constants();
        ScheduleParams {
            scale: Some(self.scale.unwrap_or(c.diameter / c.lipschitz)),
            lambda: Some(self.lambda.unwrap_or(c.strong_convexity)),
        }
    }

    pub fn build<P: Problem + ?Sized>(&self, problem: &P, horizon: usize) -> Result<StepSchedule> {
        build_schedule(self.family, horizon, self.params_for(problem))
    }
}

impl fmt::Display for ScheduleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.family.tag())?;
        let mut parts = Vec::new();
        if let Some(c) = self.scale {
            parts.push(format!("C={c}"));
        }
        if let Some(l) = self.lambda {
            parts.push(format!("lambda={l}"));
        }
        if !parts.is_empty() {
            write!(f, ":{}", parts.join(","))?;
        }
        Ok(())
    }
}

impl FromStr for ScheduleSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, rest) = s.trim().split_once(':').unwrap_or((s.trim(), ""));
        let family: Family = name.trim().parse()?;
        if family == Family::Custom {
            return Err(Error::UnknownFamily("custom (needs explicit step values)".into()));
        }
        let mut spec = Self::new(family);
        for (k, v) in key_values(rest, "schedule")? {
            match k.as_str() {
                "C" | "c" | "scale" => spec.scale = Some(num(&k, &v, "schedule")?),
                "lambda" => spec.lambda = Some(num(&k, &v, "schedule")?),
                _ => return Err(bad("schedule", format!("unknown key `{k}`"))),
            }
        }
        Ok(spec)
    }
}

/// What is evaluated at iteration `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Averaging {
    /// `F(x_t)`.
    Last,
    /// `F` of the mean of `x_s .. x_t` with `s` the start of the last quarter
    /// of the horizon; equal to `F(x_t)` before `s`.
    SuffixQuarter,
    /// `F` of the mean of `x_1 .. x_t`.
    Running,
}

impl Averaging {
    pub fn tag(self) -> &'static str {
        match self {
            Self::Last => "last",
            Self::SuffixQuarter => "suffix_quarter",
            Self::Running => "running",
        }
    }
}

impl FromStr for Averaging {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "last" => Ok(Self::Last),
            "suffix_quarter" => Ok(Self::SuffixQuarter),
            "running" => Ok(Self::Running),
            other => Err(bad("averaging", format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodSpec {
    pub schedule: ScheduleSpec,
    pub averaging: Averaging,
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.schedule, self.averaging.tag())
    }
}

impl FromStr for MethodSpec {
    type Err = Error;

    /// `family[:params][@mode]`; the mode defaults to `last`.
    fn from_str(s: &str) -> Result<Self> {
        let (sched, mode) = s.trim().rsplit_once('@').unwrap_or((s.trim(), "last"));
        Ok(Self {
            schedule: sched.parse()?,
            averaging: mode.parse()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub problem: ProblemSpec,
    pub methods: Vec<MethodSpec>,
    pub horizon: usize,
    pub n_seeds: u64,
    pub seed0: u64,
    /// Report every `stride`-th iteration (plus `t = 1` and `t = T`).
    pub stride: usize,
    pub out: Option<String>,
}

impl ExperimentSpec {
    /// Lasso curves: standard and modified last iterates and the running average.
    pub fn paper_lasso() -> Self {
        let c = 4.0;
        let std = ScheduleSpec::new(Family::Constant).with_scale(c);
        let modified = ScheduleSpec::new(Family::WeakModified).with_scale(c);
        Self {
            problem: ProblemSpec::paper_lasso(),
            methods: vec![
                MethodSpec { schedule: std, averaging: Averaging::Last },
                MethodSpec { schedule: modified, averaging: Averaging::Last },
                MethodSpec { schedule: std, averaging: Averaging::Running },
            ],
            horizon: 1 << 19,
            n_seeds: 1,
            seed0: 0,
            stride: 1 << 10,
            out: None,
        }
    }

    /// SVM curves: harmonic and modified last iterates and the last-quarter average.
    pub fn paper_svm() -> Self {
        let std = ScheduleSpec::new(Family::Harmonic).with_lambda(0.1);
        let modified = ScheduleSpec::new(Family::StrongModified).with_lambda(0.1);
        Self {
            problem: ProblemSpec::paper_svm(),
            methods: vec![
                MethodSpec { schedule: std, averaging: Averaging::Last },
                MethodSpec { schedule: modified, averaging: Averaging::Last },
                MethodSpec { schedule: std, averaging: Averaging::SuffixQuarter },
            ],
            horizon: 1 << 17,
            n_seeds: 100,
            seed0: 0,
            stride: 1 << 8,
            out: None,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut problem = None;
        let mut methods = Vec::new();
        let mut horizon = None;
        let mut n_seeds = 1;
        let mut seed0 = 0;
        let mut stride = 1;
        let mut out = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let err = |msg: String| Error::Config { line, msg };
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{content}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let int = |v: &str| v.parse::<u64>().map_err(|_| err(format!("`{key}` needs an integer, got `{v}`")));
            match key {
                "problem" => problem = Some(value.parse().map_err(|e: Error| err(e.to_string()))?),
                "method" => methods.push(value.parse().map_err(|e: Error| err(e.to_string()))?),
                "T" => horizon = Some(int(value)? as usize),
                "n_seeds" => n_seeds = int(value)?,
                "seed0" | "seed" => seed0 = int(value)?,
                "stride" => stride = int(value)? as usize,
                "out" => out = Some(value.to_string()),
                other => return Err(err(format!("unknown key `{other}`"))),
            }
        }
        let last = text.lines().count().max(1);
        let missing = |what: &str| Error::Config {
            line: last,
            msg: format!("missing `{what}`"),
        };
        let spec = Self {
            problem: problem.ok_or_else(|| missing("problem"))?,
            methods,
            horizon: horizon.ok_or_else(|| missing("T"))?,
            n_seeds,
            seed0,
            stride,
            out,
        };
        if spec.methods.is_empty() {
            return Err(missing("method"));
        }
        if spec.n_seeds == 0 || spec.stride == 0 || spec.horizon == 0 {
            return Err(Error::Config {
                line: last,
                msg: "T, n_seeds and stride must be positive".into(),
            });
        }
        Ok(spec)
    }

    /// Canonical text without the output path; identifies the data.
    pub fn canonical(&self) -> String {
        let mut s = format!("problem = {}\n", self.problem);
        for m in &self.methods {
            s += &format!("method = {m}\n");
        }
        s += &format!(
            "T = {}\nn_seeds = {}\nseed0 = {}\nstride = {}\n",
            self.horizon, self.n_seeds, self.seed0, self.stride
        );
        s
    }

    pub fn config_hash(&self) -> String {
        crate::schedule::hex16(&Sha256::digest(self.canonical().as_bytes()))
    }

    /// Report iterations: `1`, every multiple of `stride`, and `T`.
    pub fn grid(&self) -> Vec<usize> {
        let mut g = vec![1];
        g.extend((1..=self.horizon / self.stride).map(|j| j * self.stride).filter(|t| *t > 1));
        if *g.last().expect("nonempty") != self.horizon {
            g.push(self.horizon);
        }
        g
    }

    /// Recovers the spec from the `# ` comment header written with a report.
    pub fn from_report_header(text: &str) -> Result<Self> {
        let body: String = text
            .lines()
            .take_while(|l| l.starts_with('#'))
            .skip(1)
            .map(|l| format!("{}\n", l.trim_start_matches('#').trim()))
            .collect();
        Self::parse(&body)
    }
}

impl fmt::Display for ExperimentSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())?;
        if let Some(o) = &self.out {
            writeln!(f, "out = {o}")?;
        }
        Ok(())
    }
}
