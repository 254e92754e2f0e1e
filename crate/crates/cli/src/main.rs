use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use lastiter::certificates::{
    base_schedule_for, breakpoint_suite, check_lookahead, check_tail, check_transfer, kappa_suite, weight_suite,
    CertificateReport, Distribution,
};
use lastiter::ensemble::run_ensemble;
use lastiter::harness::{
    emit_figure, fit_rate, nondecreasing_margin, ratio_profile, read_series, run_experiment, ExperimentSpec,
    FigureOptions, ProblemSpec, ScheduleSpec,
};
use lastiter::lower_bound::{
    estimate_event_ak, expected_square_recursion, schedule_trichotomy, simulate_drift, StepSequence, Thresholds,
};
use lastiter::problem::{gen_lasso, gen_svm, reference_optimum, Problem};
use lastiter::schedule::{build_schedule, Family, ScheduleParams};
use lastiter::sgd::{run_sgd, RunConfig};

#[derive(Parser)]
#[command(name = "lastiter", version, about = "Last-iterate optimal step sizes for projected SGD")]
struct Cli {
    /// Base seed (data seed for `problem gen`, first run seed elsewhere).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Experiment config file (flat `key = value`); command-line flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Step-size schedules.
    #[command(subcommand)]
    Schedule(ScheduleCmd),
    /// Synthetic problem instances.
    #[command(subcommand)]
    Problem(ProblemCmd),
    /// One run (trace) or a seeded ensemble.
    Run(RunArgs),
    /// Paired multi-method experiment.
    Experiment(ExperimentArgs),
    /// Fit the decay exponent of last-iterate suboptimality.
    Ratefit(RatefitArgs),
    /// Numerical certificates.
    Certify(CertifyArgs),
    /// Lower-bound constructions.
    #[command(subcommand)]
    Lowerbound(LowerboundCmd),
    /// Render a report CSV as SVG.
    Figure(FigureArgs),
}

#[derive(Subcommand)]
enum ScheduleCmd {
    /// Writes `t,alpha,phase`.
    Dump {
        #[arg(long)]
        family: Family,
        #[arg(long = "T")]
        horizon: usize,
        #[arg(long = "C")]
        scale: Option<f64>,
        #[arg(long)]
        lambda: Option<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Lasso,
    Svm,
    Absquad,
    Quad,
}

#[derive(Subcommand)]
enum ProblemCmd {
    /// Writes a JSON header comment, the data matrix rows, then the labels row.
    Gen {
        #[arg(long)]
        kind: Kind,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        s: Option<usize>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        reg: Option<f64>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Problem spec (e.g. `svm:d=30,n=500`) or a file written by `problem gen`.
    #[arg(long)]
    problem: String,
    /// Schedule spec (e.g. `strong_modified:lambda=0.1`).
    #[arg(long)]
    schedule: String,
    #[arg(long = "T")]
    horizon: usize,
    #[arg(long, default_value_t = 1)]
    n_seeds: u64,
    /// Optimum value; defaults to the known value or a full-batch reference run.
    #[arg(long)]
    f_star: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Lasso,
    Svm,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Start from a reference setup instead of a config file.
    #[arg(long)]
    paper: Option<Preset>,
    #[arg(long = "T")]
    horizon: Option<usize>,
    #[arg(long)]
    n_seeds: Option<u64>,
    #[arg(long)]
    stride: Option<usize>,
}

#[derive(Args)]
struct RatefitArgs {
    #[arg(long, default_value = "absquad")]
    problem: String,
    #[arg(long, default_value = "strong_modified")]
    schedule: String,
    /// Also fit this schedule and report the baseline/schedule ratio per horizon.
    #[arg(long)]
    baseline: Option<String>,
    /// Horizons `2^lo .. 2^hi`, as `lo:hi`.
    #[arg(long, default_value = "10:16")]
    grid: String,
    #[arg(long, default_value_t = 2000)]
    n_seeds: u64,
    /// Fail unless the bootstrap slope interval meets `[lo, hi]`, as `lo:hi`.
    #[arg(long, allow_hyphen_values = true)]
    expect_slope: Option<String>,
    /// Fail unless every mean stays below the explicit bound.
    #[arg(long)]
    require_bound: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Breakpoints,
    Weights,
    Kappa,
    Lookahead,
    Tail,
    Transfer,
}

#[derive(Args)]
struct CertifyArgs {
    #[arg(long)]
    suite: Suite,
    #[arg(long, default_value = "absquad")]
    problem: String,
    /// Horizon for the stochastic checks; largest horizon for `kappa`.
    #[arg(long = "T", default_value_t = 4096)]
    horizon: usize,
    #[arg(long)]
    n_seeds: Option<u64>,
    /// Number of random configurations for `kappa`.
    #[arg(long, default_value_t = 1000)]
    configs: usize,
}

#[derive(Subcommand)]
enum LowerboundCmd {
    /// Writes `t,expected_sq,lower_bound`.
    Recursion {
        #[arg(long, default_value = "harmonic")]
        sequence: StepSequence,
        #[arg(long = "T", default_value_t = 10_000)]
        horizon: usize,
    },
    /// Writes `t,mean_abs,half_min_1_gamma`.
    Drift {
        #[arg(long, default_value = "constant:c=1")]
        sequence: StepSequence,
        #[arg(long = "T", default_value_t = 1000)]
        horizon: usize,
        #[arg(long, default_value_t = 1000)]
        n_seeds: u64,
    },
    /// Writes `k,p_akc_hat,ci_lo,ci_hi,oracle`.
    Events {
        #[arg(long, default_value_t = 4)]
        k_min: usize,
        #[arg(long, default_value_t = 12)]
        k_max: usize,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
    },
    /// Writes `k,eta,lambda,flags`.
    Trichotomy {
        #[arg(long, default_value = "harmonic")]
        sequence: StepSequence,
        #[arg(long = "K", default_value_t = 20)]
        max_level: usize,
        #[arg(long, default_value_t = 10.0)]
        c0: f64,
        #[arg(long, default_value_t = 0.1)]
        d0: f64,
        #[arg(long, default_value_t = 5)]
        window: usize,
        #[arg(long, default_value_t = 1.1)]
        min_growth: f64,
    },
}

#[derive(Args)]
struct FigureArgs {
    /// Report CSV.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    log_y: bool,
    #[arg(long, default_value = "")]
    title: String,
}

fn sink(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// A spec string, or a file from `problem gen` whose header records the spec.
fn load_problem(arg: &str) -> Result<ProblemSpec> {
    let path = Path::new(arg);
    if path.is_file() {
        let text = std::fs::read_to_string(path)?;
        let header = text.lines().next().unwrap_or("");
        let json: serde_json::Value = serde_json::from_str(header.trim_start_matches('#').trim())
            .with_context(|| format!("{} has no JSON header", path.display()))?;
        let spec = json["spec"].as_str().context("header lacks a `spec` field")?;
        return Ok(spec.parse()?);
    }
    Ok(arg.parse()?)
}

fn parse_pair(s: &str) -> Result<(f64, f64)> {
    let (a, b) = s.split_once(':').context("expected `lo:hi`")?;
    Ok((a.trim().parse()?, b.trim().parse()?))
}

fn f_star_for(problem: &dyn Problem, explicit: Option<f64>, horizon: usize) -> Result<f64> {
    Ok(match explicit.or(problem.constants().f_star) {
        Some(f) => f,
        None => reference_optimum(problem, (10 * horizon).min(200_000))?,
    })
}

fn certify(args: &CertifyArgs, seed: u64) -> Result<CertificateReport> {
    let problem = load_problem(&args.problem)?.build()?;
    let t = args.horizon;
    let family = if problem.constants().strong_convexity > 0.0 {
        Family::StrongModified
    } else {
        Family::WeakModified
    };
    Ok(match args.suite {
        Suite::Breakpoints => breakpoint_suite(4096, 20)?,
        Suite::Weights => weight_suite(&[2, 10, 1_000, 100_000, 1_000_000], &[0.01, 0.1, 1.0, 10.0, 100.0])?,
        Suite::Kappa => kappa_suite(args.configs, t, seed)?,
        Suite::Lookahead => {
            let s = ScheduleSpec::new(family).build(&*problem, t)?;
            vec![check_lookahead(&*problem, &s, t / 2, t, args.n_seeds.unwrap_or(2000), seed)?].into()
        }
        Suite::Tail => {
            let s = ScheduleSpec::new(family).build(&*problem, t)?;
            let (t0, t1) = (t / 2, t);
            let mut r = CertificateReport::default();
            for (label, dist) in [
                ("uniform", Distribution::uniform(t0, t1)),
                ("last", Distribution::point_mass(t1)),
                ("first", Distribution::point_mass(t0)),
            ] {
                let n = args.n_seeds.unwrap_or(10_000);
                let multiples = [0.25, 0.5, 1.0, 2.0, 4.0, 8.0];
                r.extend(check_tail(&*problem, &s, t0, t1, &dist, label, &multiples, n, seed)?.into());
            }
            r
        }
        Suite::Transfer => {
            let base = base_schedule_for(&*problem, family, t)?;
            check_transfer(&*problem, &base, args.n_seeds.unwrap_or(2000), seed)?.into()
        }
    })
}

fn run(cli: Cli) -> Result<bool> {
    let out = cli.out.as_deref();
    match cli.command {
        Command::Schedule(ScheduleCmd::Dump {
            family,
            horizon,
            scale,
            lambda,
        }) => {
            let s = build_schedule(family, horizon, ScheduleParams { scale, lambda })?;
            s.write_csv(sink(out)?)?;
            Ok(true)
        }
        Command::Problem(ProblemCmd::Gen {
            kind,
            d,
            s,
            n,
            sigma,
            eta,
            reg,
        }) => {
            let mut keys: Vec<String> = [("d", d.map(|v| v as f64)), ("s", s.map(|v| v as f64)), ("n", n.map(|v| v as f64))]
                .into_iter()
                .chain([("sigma", sigma), ("eta", eta), ("reg", reg)])
                .filter_map(|(k, v)| v.map(|v| format!("{k}={v}")))
                .collect();
            let name = match kind {
                Kind::Lasso => "lasso",
                Kind::Svm => "svm",
                Kind::Absquad => "absquad",
                Kind::Quad => "quad",
            };
            if matches!(kind, Kind::Lasso | Kind::Svm) {
                keys.push(format!("seed={}", cli.seed));
            }
            let spec: ProblemSpec = format!("{name}:{}", keys.join(",")).parse()?;
            let (header, rows, labels) = match spec {
                ProblemSpec::Lasso { d, s, n, sigma, reg, seed } => {
                    let p = gen_lasso(d, s, n, sigma, reg, seed)?;
                    let data = p.data();
                    let json = serde_json::json!({"kind": "lasso", "d": d, "s": s, "n": n, "sigma": sigma, "reg": reg, "seed": seed, "spec": spec.to_string()});
                    (json, data.a.chunks(d).map(<[f64]>::to_vec).collect::<Vec<_>>(), data.b.clone())
                }
                ProblemSpec::Svm {
                    d,
                    n,
                    sigma,
                    eta,
                    reg,
                    seed,
                } => {
                    let p = gen_svm(d, n, sigma, eta, reg, seed)?;
                    let data = p.data();
                    let json = serde_json::json!({"kind": "svm", "d": d, "n": n, "sigma": sigma, "eta": eta, "reg": reg, "seed": seed, "spec": spec.to_string()});
                    (json, data.a.chunks(d).map(<[f64]>::to_vec).collect(), data.b.clone())
                }
                _ => (
                    serde_json::json!({"kind": spec.kind(), "spec": spec.to_string()}),
                    Vec::new(),
                    Vec::new(),
                ),
            };
            let mut w = sink(out)?;
            writeln!(w, "# {header}")?;
            let join = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(",");
            for r in &rows {
                writeln!(w, "{}", join(r))?;
            }
            if !labels.is_empty() {
                writeln!(w, "{}", join(&labels))?;
            }
            w.flush()?;
            Ok(true)
        }
        Command::Run(args) => {
            let problem = load_problem(&args.problem)?.build()?;
            let sched: ScheduleSpec = args.schedule.parse()?;
            let sched = sched.build(&*problem, args.horizon)?;
            let f_star = f_star_for(&*problem, args.f_star, args.horizon)?;
            let mut w = sink(out)?;
            if args.n_seeds <= 1 {
                let tr = run_sgd(&*problem, &RunConfig::new(&sched, cli.seed))?;
                writeln!(w, "# lastiter {} config_hash={}", env!("CARGO_PKG_VERSION"), tr.config_hash)?;
                writeln!(w, "t,objective,subopt")?;
                for (i, v) in tr.objective_values.iter().enumerate() {
                    writeln!(w, "{},{v:e},{:e}", i + 1, v - f_star)?;
                }
            } else {
                let e = run_ensemble(&*problem, &RunConfig::new(&sched, cli.seed), args.n_seeds, cli.seed, Some(f_star))?;
                e.write_csv(&mut w, args.horizon)?;
            }
            w.flush()?;
            Ok(true)
        }
        Command::Experiment(args) => {
            let mut spec = match (&cli.config, args.paper) {
                (Some(path), _) => ExperimentSpec::parse(
                    &std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?,
                )
                .with_context(|| format!("in {}", path.display()))?,
                (None, Some(Preset::Lasso)) => ExperimentSpec::paper_lasso(),
                (None, Some(Preset::Svm)) => ExperimentSpec::paper_svm(),
                (None, None) => bail!("experiment needs --config <path> or --paper {{lasso|svm}}"),
            };
            if let Some(t) = args.horizon {
                spec.horizon = t;
            }
            if let Some(n) = args.n_seeds {
                spec.n_seeds = n;
            }
            if let Some(s) = args.stride {
                spec.stride = s;
            }
            if cli.seed != 0 {
                spec.seed0 = cli.seed;
            }
            if let Some(o) = &cli.out {
                spec.out = Some(o.display().to_string());
            }
            let report = run_experiment(&spec)?;
            let mut w = sink(spec.out.as_deref().map(Path::new))?;
            report.write_csv(&mut w)?;
            w.flush()?;
            for d in &report.differences {
                eprintln!(
                    "final {} minus {}: {:.4e} (paired stderr {:.2e})",
                    report.curves[d.a].label, report.curves[d.b].label, d.mean, d.stderr
                );
            }
            Ok(true)
        }
        Command::Ratefit(args) => {
            let problem = load_problem(&args.problem)?.build()?;
            let (lo, hi) = parse_pair(&args.grid)?;
            let grid: Vec<usize> = (lo as u32..=hi as u32).map(|j| 1usize << j).collect();
            let sched: ScheduleSpec = args.schedule.parse()?;
            let fit = fit_rate(&*problem, &sched, &grid, args.n_seeds, cli.seed, None)?;
            let mut w = sink(out)?;
            fit.write_csv(&mut w)?;
            let mut ok = true;
            if let Some(b) = &args.baseline {
                let base = fit_rate(&*problem, &b.parse()?, &grid, args.n_seeds, cli.seed, Some(fit.f_star))?;
                let profile = ratio_profile(&base, &fit)?;
                writeln!(w, "# baseline {} slope={:.6}", base.schedule, base.slope)?;
                writeln!(w, "# T,ratio,ratio_stderr")?;
                for (t, r, se) in &profile {
                    writeln!(w, "# {t},{r:e},{se:e}")?;
                }
                let margin = nondecreasing_margin(&profile, 3.0);
                eprintln!("ratio profile nondecreasing within 3 stderr: {}", margin >= 0.0);
            }
            if let Some(e) = &args.expect_slope {
                let (a, b) = parse_pair(e)?;
                let hit = fit.slope_ci.1 >= a && fit.slope_ci.0 <= b;
                eprintln!(
                    "slope {:.4} CI [{:.4}, {:.4}] vs [{a}, {b}]: {}",
                    fit.slope,
                    fit.slope_ci.0,
                    fit.slope_ci.1,
                    if hit { "pass" } else { "fail" }
                );
                ok &= hit;
            }
            if args.require_bound {
                let held = fit.bound_holds().context("schedule has no explicit bound")?;
                eprintln!("explicit bound: max ratio {:.3e}", fit.max_bound_ratio.unwrap_or(f64::NAN));
                ok &= held;
            }
            w.flush()?;
            Ok(ok)
        }
        Command::Certify(args) => {
            let report = certify(&args, cli.seed)?;
            let mut w = sink(out)?;
            report.write_csv(&mut w)?;
            w.flush()?;
            Ok(report.all_pass())
        }
        Command::Lowerbound(cmd) => lowerbound(cmd, cli.seed, out),
        Command::Figure(args) => {
            let text = std::fs::read_to_string(&args.input)
                .with_context(|| format!("cannot read {}", args.input.display()))?;
            let series = read_series(&text)?;
            let svg = emit_figure(
                &series,
                &FigureOptions {
                    title: args.title,
                    log_y: args.log_y,
                    ..Default::default()
                },
            )?;
            let mut w = sink(out)?;
            w.write_all(svg.as_bytes())?;
            w.flush()?;
            Ok(true)
        }
    }
}

fn lowerbound(cmd: LowerboundCmd, seed: u64, out: Option<&Path>) -> Result<bool> {
    let mut w = sink(out)?;
    let ok = match cmd {
        LowerboundCmd::Recursion { sequence, horizon } => {
            let g = sequence.take(horizon)?;
            let r = expected_square_recursion(&g, horizon)?;
            writeln!(w, "t,expected_sq,lower_bound")?;
            let mut ok = true;
            for t in 1..=horizon {
                let v = r.values[t - 1];
                match r.lower_bound(t) {
                    Some(b) => {
                        ok &= v >= b * (1.0 - 1e-12);
                        writeln!(w, "{t},{v:e},{b:e}")?;
                    }
                    None => writeln!(w, "{t},{v:e},")?,
                }
            }
            ok
        }
        LowerboundCmd::Drift {
            sequence,
            horizon,
            n_seeds,
        } => {
            let g = sequence.take(horizon)?;
            let e = simulate_drift(&g, horizon, n_seeds, seed)?;
            writeln!(w, "t,mean_abs,half_min_1_gamma")?;
            writeln!(w, "1,{:e},", e.mean_abs[0])?;
            for t in 2..=horizon {
                writeln!(w, "{t},{:e},{:e}", e.mean_abs[t - 1], 0.5 * g[t - 2].min(1.0))?;
            }
            e.worst_margin(&g).1 >= 0.0
        }
        LowerboundCmd::Events { k_min, k_max, trials } => {
            writeln!(w, "k,p_akc_hat,ci_lo,ci_hi,oracle")?;
            let mut ok = true;
            for k in k_min..=k_max {
                let e = estimate_event_ak(k, trials, seed)?;
                ok &= e.oracle_in_ci();
                writeln!(w, "{k},{:e},{:e},{:e},{:e}", e.p_hat, e.ci_lo, e.ci_hi, e.oracle)?;
            }
            ok
        }
        LowerboundCmd::Trichotomy {
            sequence,
            max_level,
            c0,
            d0,
            window,
            min_growth,
        } => {
            let th = Thresholds {
                c0,
                d0,
                window,
                min_growth,
            };
            let d = schedule_trichotomy(&sequence, max_level, th)?;
            writeln!(w, "k,eta,lambda,flags")?;
            for l in &d.levels {
                writeln!(w, "{},{:e},{:e},{}", l.k, l.eta(), l.lambda(), d.level_flags(l.k))?;
            }
            for f in &d.flags {
                eprintln!("{}: levels {:?}", f.kind.tag(), f.witnesses);
            }
            !d.flags.is_empty()
        }
    };
    w.flush()?;
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("checks failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
