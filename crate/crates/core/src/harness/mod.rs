//! Experiment configuration, paired multi-method runs, rate fits and figures.

pub mod config;
pub mod experiment;
pub mod figure;
pub mod ratefit;

pub use config::{Averaging, ExperimentSpec, MethodSpec, ProblemSpec, ScheduleSpec};
pub use experiment::{method_curve, run_experiment, run_experiment_on, ExperimentReport, MethodCurve, PairedDifference};
pub use figure::{emit_figure, read_series, FigureOptions, Series};
pub use ratefit::{fit_power_law, fit_rate, nondecreasing_margin, ratio_profile, theory_bound, RateFit};
