//! `mtensor`: runs the worked toy problem, the three benchmark experiments and
//! the self-test suite.
//!
//! Every experiment subcommand accepts `--config FILE` (a JSON object) and any
//! number of `--set key=value` overrides; dedicated flags are applied last and
//! win. Keys are the experiment config fields, and unknown keys are rejected
//! with the list of valid ones. Output goes to `--out` (or `$MTENSOR_OUT`,
//! default `out`) as `<experiment>.json` plus trajectory CSVs.
//!
//! Exit status: 0 success, 1 golden or self-test mismatch, 2 usage error,
//! 3 numerical failure, 4 I/O failure.

mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mtensor::ali::AliMode;
use mtensor::experiments::{
    self, ErrorBand, ExperimentReport, KuramotoConfig, LorenzConfig, RosenbrockConfig,
};
use mtensor::features::ScaleMode;
use mtensor::io;
use mtensor::regression::Regularizer;
use mtensor::Error;

use config::Layers;

/// A problem with the command line or config; reported before any output is written.
#[derive(Debug)]
pub struct UsageError(pub String);

enum Failure {
    Usage(String),
    Mismatch(String),
    Run(Error),
}

impl From<UsageError> for Failure {
    fn from(e: UsageError) -> Self {
        Failure::Usage(e.0)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Argument(msg) => Failure::Usage(msg),
            other => Failure::Run(other),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "mtensor",
    version,
    about = "Factorized tensor regression experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Two-variable quadratic with three samples, checked against known values.
    Toy,
    /// Generalized Rosenbrock regression.
    Rosenbrock(RosenbrockArgs),
    /// Lorenz system identification and rollout.
    Lorenz(LorenzArgs),
    /// Kuramoto oscillator identification and rollout.
    Kuramoto(KuramotoArgs),
    /// Randomized comparison against the dense reference code.
    Selftest(SelftestArgs),
}

#[derive(Clone, Copy, ValueEnum, Default)]
enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Args)]
struct Common {
    /// Output directory.
    #[arg(long, env = "MTENSOR_OUT", default_value = "out")]
    out: PathBuf,
    /// JSON file with config fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Config override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Summary printed to stdout.
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

#[derive(Args)]
struct RosenbrockArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    alpha: Option<usize>,
    #[arg(long)]
    degree: Option<usize>,
    /// ls | tikhonov:λ | spectral:r | spectral:tau=τ | ali:ε[:optimal]
    #[arg(long)]
    reg: Option<String>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long)]
    scale_mode: Option<String>,
}

#[derive(Args)]
struct LorenzArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    train_steps: Option<usize>,
    #[arg(long)]
    rollout_steps: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    ali_mode: Option<String>,
    #[arg(long)]
    random_ics: Option<usize>,
    /// Write every k-th trajectory row.
    #[arg(long, default_value_t = 10)]
    csv_stride: usize,
}

#[derive(Args)]
struct KuramotoArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    train_steps: Option<usize>,
    #[arg(long)]
    rollout_steps: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long)]
    ali_mode: Option<String>,
    /// Write every k-th trajectory row.
    #[arg(long, default_value_t = 10)]
    csv_stride: usize,
}

#[derive(Args)]
struct SelftestArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random instances per group.
    #[arg(long, default_value_t = 200)]
    instances: usize,
}

fn parsed<T: std::str::FromStr<Err = Error>>(s: Option<&str>) -> Result<Option<T>, UsageError> {
    s.map(|s| s.parse().map_err(|e: Error| UsageError(e.to_string())))
        .transpose()
}

fn layers<T: serde::Serialize>(defaults: &T, c: &Common) -> Result<Layers, UsageError> {
    let mut l = Layers::new(serde_json::to_value(defaults).map_err(|e| UsageError(e.to_string()))?);
    l.file(c.config.as_deref())?;
    l.overrides(&c.set)?;
    l.flag("seed", c.seed)?;
    Ok(l)
}

fn fmt_row(v: impl IntoIterator<Item = f64>) -> String {
    v.into_iter()
        .map(|x| format!("{x:9.4}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn toy() -> Result<(), Failure> {
    let r = experiments::run_toy()?;
    println!("unfolding:");
    for row in r.unfolding.rows() {
        println!("  {}", fmt_row(row.iter().copied()));
    }
    println!("gram:");
    for row in r.gram.rows() {
        println!("  {}", fmt_row(row.iter().copied()));
    }
    println!("z: {}", fmt_row(r.z.iter().copied()));
    println!("coefficients:");
    for row in r.coefficients.rows() {
        println!("  {}", fmt_row(row.iter().copied()));
    }
    println!("dense: {}", fmt_row(r.dense_coefficients.iter().copied()));
    if r.pass() {
        println!("all golden values match");
        return Ok(());
    }
    let mut table = format!(
        "{:<22} {:>10} {:>10} {:>10}\n",
        "check", "expected", "got", "diff"
    );
    for c in r.checks.iter().filter(|c| !c.pass) {
        if c.expected.len() != c.got.len() {
            let _ = writeln!(
                table,
                "{:<22} length {} vs {}",
                c.name,
                c.expected.len(),
                c.got.len()
            );
            continue;
        }
        for (e, g) in c.expected.iter().zip(&c.got) {
            if (e - g).abs() > c.tolerance {
                let _ = writeln!(table, "{:<22} {e:>10.4} {g:>10.4} {:>10.2e}", c.name, g - e);
            }
        }
    }
    Err(Failure::Mismatch(table))
}

fn print_report(report: &ExperimentReport, format: Format) -> Result<(), Failure> {
    match format {
        Format::Json => {
            let text = serde_json::to_string_pretty(report).map_err(|e| Failure::Run(e.into()))?;
            println!("{text}");
        }
        Format::Csv => {
            println!("experiment,m,m_tilde,train_rel_l2,test_rel_l2,construct_seconds,infer_seconds_per_sample");
            println!(
                "{},{},{},{},{},{},{}",
                report.experiment,
                report.model.m,
                report
                    .model
                    .m_tilde
                    .map(|v| v.to_string())
                    .unwrap_or_default(),
                report.errors.train_rel_l2,
                report
                    .errors
                    .test_rel_l2
                    .map(|v| v.to_string())
                    .unwrap_or_default(),
                report.timings.construct_seconds,
                report.timings.infer_seconds_per_sample,
            );
        }
    }
    Ok(())
}

fn rosenbrock(a: &RosenbrockArgs) -> Result<(), Failure> {
    let mut l = layers(&RosenbrockConfig::default(), &a.common)?;
    l.flag("n", a.n)?;
    l.flag("alpha", a.alpha)?;
    l.flag("degree", a.degree)?;
    l.flag("repeats", a.repeats)?;
    l.flag("scale", a.scale)?;
    l.flag("regularizer", parsed::<Regularizer>(a.reg.as_deref())?)?;
    l.flag("scale_mode", parsed::<ScaleMode>(a.scale_mode.as_deref())?)?;
    let cfg: RosenbrockConfig = l.finish()?;
    cfg.validate()?;
    let report = experiments::run_rosenbrock(&cfg)?;
    io::write_report(&a.common.out.join("rosenbrock.json"), &report)?;
    print_report(&report, a.common.format)
}

fn write_trajectories(
    out: &Path,
    prefix: &str,
    trajs: &[(String, mtensor::dynamics::Trajectory)],
    stride: usize,
) -> Result<(), Failure> {
    for (name, t) in trajs {
        io::write_trajectory_csv(&out.join(format!("{prefix}_{name}.csv")), t, stride)?;
    }
    Ok(())
}

fn lorenz(a: &LorenzArgs) -> Result<(), Failure> {
    let mut l = layers(&LorenzConfig::default(), &a.common)?;
    l.flag("train_steps", a.train_steps)?;
    l.flag("rollout_steps", a.rollout_steps)?;
    l.flag("dt", a.dt)?;
    l.flag("random_ics", a.random_ics)?;
    l.flag("ali_mode", parsed::<AliMode>(a.ali_mode.as_deref())?)?;
    let cfg: LorenzConfig = l.finish()?;
    cfg.validate()?;
    if a.csv_stride == 0 {
        return Err(Failure::Usage("csv-stride must be at least 1".into()));
    }
    let run = experiments::run_lorenz(&cfg)?;
    let out = &a.common.out;
    io::write_report(&out.join("lorenz.json"), &run.report)?;
    write_trajectories(out, "lorenz", &run.trajectories, a.csv_stride)?;
    print_report(&run.report, a.common.format)
}

fn band_csv(ls: &ErrorBand, ali: Option<&ErrorBand>) -> String {
    let mut s = String::from("step,ls_min,ls_mean,ls_max");
    if ali.is_some() {
        s.push_str(",ali_min,ali_mean,ali_max");
    }
    s.push('\n');
    for i in 0..ls.step.len() {
        let _ = write!(
            s,
            "{},{},{},{}",
            ls.step[i], ls.min[i], ls.mean[i], ls.max[i]
        );
        if let Some(b) = ali {
            match b.step.get(i) {
                Some(_) => {
                    let _ = write!(s, ",{},{},{}", b.min[i], b.mean[i], b.max[i]);
                }
                None => s.push_str(",,,"),
            }
        }
        s.push('\n');
    }
    s
}

fn kuramoto(a: &KuramotoArgs) -> Result<(), Failure> {
    let mut l = layers(&KuramotoConfig::default(), &a.common)?;
    l.flag("n", a.n)?;
    l.flag("repeats", a.repeats)?;
    l.flag("train_steps", a.train_steps)?;
    l.flag("rollout_steps", a.rollout_steps)?;
    l.flag("dt", a.dt)?;
    l.flag("scale", a.scale)?;
    l.flag("ali_mode", parsed::<AliMode>(a.ali_mode.as_deref())?)?;
    let cfg: KuramotoConfig = l.finish()?;
    cfg.validate()?;
    if a.csv_stride == 0 {
        return Err(Failure::Usage("csv-stride must be at least 1".into()));
    }
    let run = experiments::run_kuramoto(&cfg)?;
    let out = &a.common.out;
    io::write_report(&out.join("kuramoto.json"), &run.report)?;
    write_trajectories(out, "kuramoto", &run.trajectories, a.csv_stride)?;
    std::fs::write(
        out.join("kuramoto_error_band.csv"),
        band_csv(&run.ls_band, run.ali_band.as_ref()),
    )
    .map_err(|e| Failure::Run(e.into()))?;
    print_report(&run.report, a.common.format)
}

fn selftest(a: &SelftestArgs) -> Result<(), Failure> {
    if a.instances == 0 {
        return Err(Failure::Usage("instances must be at least 1".into()));
    }
    let rep = mtensor::selftest::run(a.seed, a.instances)?;
    let mut failed = Vec::new();
    for g in &rep.groups {
        let status = if g.pass() { "pass" } else { "FAIL" };
        println!(
            "{:<22} {status}  {}/{}",
            g.name,
            g.passed,
            g.passed + g.failures.len()
        );
        for f in &g.failures {
            failed.push(format!("{}: {f}", g.name));
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Mismatch(failed.join("\n")))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Toy => toy(),
        Command::Rosenbrock(a) => rosenbrock(a),
        Command::Lorenz(a) => lorenz(a),
        Command::Kuramoto(a) => kuramoto(a),
        Command::Selftest(a) => selftest(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Mismatch(table)) => {
            eprintln!("mismatch:\n{table}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) if e.is_numerical() => {
            eprintln!("numerical failure: {e}");
            ExitCode::from(3)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(4)
        }
    }
}
