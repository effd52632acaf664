//! Command-line layer: argument types and the five subcommands. The binary
//! only parses arguments and maps [`CliError`] to an exit code.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::warn;
use rayon::prelude::*;

use crate::dynamics::linear::C64;
use crate::dynamics::models::{box_system, BoxSystem, GrazingParams, MsdParams};
use crate::dynamics::simulate::{
    grazing_scenario, integrate_linear, msd_scenario, run_batch, Trajectory,
};
use crate::error::Error;
use crate::indicators::{run_pipeline, write_indicator_csv, Ac1Config, DetrendConfig, DetrendMode};
use crate::preprocess::{design_butterworth_lowpass, PreprocessConfig};
use crate::resilience::{
    critical_gain, critical_gain_bisection, disk_margin, eigenvalues, grazing_brs, is_stable,
    lower_gain_bound, max_real_part, msd_brs, msd_sensitivity,
};
use crate::series::{ac1_histogram, fmt_float, load_csv, read_table, MultiChannelRecord, Table};
use crate::stats::{compare_groups, write_report_csv, GroupComparison, SampleGroup};

/// Exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub msg: String,
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            msg: msg.into(),
        }
    }

    /// Single-line diagnostic `code=<n> msg=<text>`.
    pub fn line(&self) -> String {
        format!(
            "code={} msg={}",
            self.code,
            self.msg.replace(['\n', '\r'], " ")
        )
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.line())
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            _ if e.is_numeric() => EXIT_NUMERIC,
            Error::Config(_) | Error::Design(_) => EXIT_USAGE,
            _ => EXIT_DATA,
        };
        Self {
            code,
            msg: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e).into()
    }
}

pub type CliResult<T = ()> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "csdwatch",
    version,
    about = "Critical-slowing-down indicators and resilience oracles"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute AC1/variance indicators from a telemetry CSV.
    Monitor(MonitorArgs),
    /// Run seeded stochastic simulations or step responses.
    Simulate(SimulateArgs),
    /// Stability, disk margin and reachable-set reports.
    Analyze(AnalyzeArgs),
    /// Rank-based comparison of two groups of indicator medians.
    Stats(StatsArgs),
    /// Recompute a group comparison over a grid of window sizes.
    Sweep(SweepArgs),
}

/// Preprocessing and indicator window flags shared by monitor and sweep.
#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    /// Low-pass cutoff (Hz); omit to skip filtering.
    #[arg(long)]
    pub lowpass_hz: Option<f64>,
    #[arg(long, default_value_t = 4)]
    pub filter_order: usize,
    #[arg(long, default_value_t = 1)]
    pub decimate: usize,
    #[arg(long, default_value = "trailing")]
    pub detrend_mode: DetrendMode,
    /// Emit every n-th window.
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
}

impl PipelineArgs {
    fn preprocess(&self) -> PreprocessConfig {
        PreprocessConfig {
            lowpass_hz: self.lowpass_hz,
            filter_order: self.filter_order,
            decimate: self.decimate,
        }
    }

    fn detrend(&self, window: usize) -> DetrendConfig {
        DetrendConfig {
            window,
            mode: self.detrend_mode,
        }
    }

    fn validate(&self) -> CliResult {
        if self.decimate == 0 {
            return Err(CliError::usage("--decimate must be >= 1"));
        }
        if self.stride == 0 {
            return Err(CliError::usage("--stride must be >= 1"));
        }
        Ok(())
    }

    /// Validates the filter against the rate of the loaded data.
    fn validate_filter(&self, rate: f64) -> CliResult {
        if let Some(fc) = self.lowpass_hz {
            design_butterworth_lowpass(self.filter_order, fc, rate)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Args)]
pub struct MonitorArgs {
    /// Input CSV with a `t` column.
    pub input: PathBuf,
    /// Channels to analyze (default: all).
    #[arg(long, value_delimiter = ',')]
    pub channels: Vec<String>,
    #[arg(long, default_value_t = 3)]
    pub ma_window: usize,
    #[arg(long, default_value_t = 300)]
    pub ac1_window: usize,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Concatenate all channels into one histogram.
    #[arg(long)]
    pub pool: bool,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SystemKind {
    Msd,
    Grazing,
    Box1,
    Box2,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    pub system: SystemKind,
    #[arg(long, value_delimiter = ',', default_value = "0.5,1.0,1.5,3.0")]
    pub gains: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1.00,1.50,1.75,2.00")]
    pub c: Vec<f64>,
    /// Runs per parameter value (default 100 for msd, 50 for grazing).
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// Horizon in model time units.
    #[arg(long = "T", visible_alias = "days")]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Box loop variant: nominal|actuated (box1), nominal|delay|sensor|combined (box2).
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AnalyzeKind {
    Msd,
    Grazing,
    Box,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    pub system: AnalyzeKind,
    #[arg(long, value_delimiter = ',', default_value = "0.5,1.0,1.5,3.0")]
    pub gains: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1.00,1.50,1.75,2.00")]
    pub c: Vec<f64>,
    /// Report only the stability boundaries of the MSD gain.
    #[arg(long)]
    pub find_critical_gain: bool,
    /// MSD reachable-set horizon (s).
    #[arg(long, default_value_t = 12.0)]
    pub horizon: f64,
    /// Grazing reachable-set horizons (days).
    #[arg(long, value_delimiter = ',', default_value = "10,25,50")]
    pub horizons: Vec<f64>,
    /// Write every reachable-set grid to this CSV.
    #[arg(long)]
    pub brs_dump: Option<PathBuf>,
    /// Report path (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct StatsArgs {
    /// Group A table (e.g. medians.csv from monitor).
    #[arg(long)]
    pub a: Option<PathBuf>,
    /// Group B table, the reference.
    #[arg(long)]
    pub b: Option<PathBuf>,
    /// Only "greater" (A stochastically larger than B) is supported.
    #[arg(long, default_value = "greater")]
    pub alternative: String,
    #[arg(long, default_value = "median_ac1")]
    pub column: String,
    /// Labelled table for manifest mode.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// `comparison,group_a,group_b` manifest of label filters.
    #[arg(long)]
    pub comparisons: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    /// `file,group` manifest; paths are relative to the manifest.
    pub manifest: PathBuf,
    #[arg(long)]
    pub group_a: String,
    #[arg(long)]
    pub group_b: String,
    /// `lo:hi[:step]`, a single value, or a comma list.
    #[arg(long, default_value = "3:25:2")]
    pub ma: String,
    #[arg(long, default_value = "50:1500:50")]
    pub ac1: String,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli, stdout: &mut dyn Write) -> CliResult {
    match cli.command {
        Command::Monitor(a) => cmd_monitor(&a, stdout),
        Command::Simulate(a) => cmd_simulate(&a, stdout),
        Command::Analyze(a) => cmd_analyze(&a, stdout),
        Command::Stats(a) => cmd_stats(&a, stdout),
        Command::Sweep(a) => cmd_sweep(&a, stdout),
    }
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| {
        CliError::from(Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        )))
    })?))
}

fn open(path: &Path) -> CliResult<File> {
    File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
        .into()
    })
}

/// Runs `body` against `--out` or the given stdout.
fn with_output(
    out: &Option<PathBuf>,
    stdout: &mut dyn Write,
    body: impl FnOnce(&mut dyn Write) -> CliResult,
) -> CliResult {
    match out {
        Some(p) => {
            let mut w = create(p)?;
            body(&mut w)?;
            w.flush()?;
            Ok(())
        }
        None => body(stdout),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NaN".into(), fmt_float)
}

pub fn cmd_monitor(args: &MonitorArgs, stdout: &mut dyn Write) -> CliResult {
    args.pipeline.validate()?;
    let detrend = args.pipeline.detrend(args.ma_window);
    detrend.validate()?;
    let ac1 = Ac1Config {
        window: args.ac1_window,
        stride: args.pipeline.stride,
    };
    ac1.validate()?;
    let names: Vec<&str> = args.channels.iter().map(String::as_str).collect();
    let record = load_csv(open(&args.input)?, &names)?;
    args.pipeline
        .validate_filter(record.sample_rate_hz().unwrap_or(f64::NAN))?;
    let results = run_pipeline(&record, &args.pipeline.preprocess(), &detrend, &ac1)?;

    fs::create_dir_all(&args.out_dir)?;
    let mut w = create(&args.out_dir.join("indicators.csv"))?;
    write_indicator_csv(&mut w, &results)?;
    w.flush()?;

    let mut w = create(&args.out_dir.join("histogram.csv"))?;
    writeln!(w, "channel,bin_lo,bin_hi,density")?;
    let mut groups: Vec<(String, Vec<f64>)> = Vec::new();
    if args.pool {
        groups.push((
            "pooled".into(),
            results.values().flat_map(|c| c.ac1.defined()).collect(),
        ));
    } else {
        for (name, c) in &results {
            groups.push((name.clone(), c.ac1.defined_values()));
        }
    }
    for (name, vals) in &groups {
        let h = ac1_histogram(vals)?;
        for (d, e) in h.densities.iter().zip(h.bin_edges.windows(2)) {
            writeln!(w, "{name},{},{},{d}", e[0], e[1])?;
        }
    }
    w.flush()?;

    let mut w = create(&args.out_dir.join("medians.csv"))?;
    writeln!(w, "channel,median_ac1,defined,undefined")?;
    for (name, c) in &results {
        writeln!(
            w,
            "{name},{},{},{}",
            c.median_ac1,
            c.ac1.defined_count(),
            c.ac1.undefined_count()
        )?;
    }
    if args.pool {
        let pooled = &groups[0].1;
        let m = crate::stats::median(pooled).ok_or(Error::NoDefinedValues)?;
        writeln!(w, "pooled,{m},{},0", pooled.len())?;
    }
    w.flush()?;
    writeln!(
        stdout,
        "wrote indicators for {} channel(s) to {}",
        results.len(),
        args.out_dir.display()
    )?;
    Ok(())
}

fn box_variant(system: SystemKind, variant: Option<&str>) -> CliResult<BoxSystem> {
    let v = variant.unwrap_or("nominal");
    let which = match (system, v) {
        (SystemKind::Box1, "nominal") => BoxSystem::Box1Nominal,
        (SystemKind::Box1, "actuated") => BoxSystem::Box1Actuated,
        (SystemKind::Box2, "nominal") => BoxSystem::Box2Nominal,
        (SystemKind::Box2, "delay") => BoxSystem::Box2DelayOnly,
        (SystemKind::Box2, "sensor") => BoxSystem::Box2SensorOnly,
        (SystemKind::Box2, "combined") => BoxSystem::Box2Combined,
        _ => {
            return Err(CliError::usage(format!(
                "unknown variant '{v}' for this system"
            )))
        }
    };
    Ok(which)
}

/// Unit step response of a closed-loop box system, as a `t,y` trajectory.
pub fn box_step_response(which: BoxSystem, dt: f64, t_end: f64) -> crate::Result<Trajectory> {
    let ss = box_system(which)?;
    let x0 = vec![0.0; ss.order()];
    let tr = integrate_linear(&ss, &x0, &[1.0], dt, t_end)?;
    let d = ss.d[(0, 0)];
    let states = tr
        .states
        .iter()
        .map(|x| vec![(0..x.len()).map(|j| ss.c[(0, j)] * x[j]).sum::<f64>() + d])
        .collect();
    Ok(Trajectory {
        labels: vec!["y".into()],
        states,
        ..tr
    })
}

fn write_trajectory(path: &Path, tr: &Trajectory) -> CliResult {
    let mut w = create(path)?;
    tr.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Parameter rendering used in file names (`0.5`, `1`, `1.75`).
fn param_tag(v: f64) -> String {
    format!("{v}")
}

pub fn cmd_simulate(args: &SimulateArgs, stdout: &mut dyn Write) -> CliResult {
    fs::create_dir_all(&args.out_dir)?;
    if matches!(args.system, SystemKind::Box1 | SystemKind::Box2) {
        let which = box_variant(args.system, args.variant.as_deref())?;
        let tr = box_step_response(which, args.dt.unwrap_or(0.01), args.t_end.unwrap_or(30.0))?;
        let name = format!("{}_step.csv", which.name());
        write_trajectory(&args.out_dir.join(&name), &tr)?;
        writeln!(
            stdout,
            "{name}: {}",
            if tr.diverged() { "diverged" } else { "bounded" }
        )?;
        return Ok(());
    }
    if args.variant.is_some() {
        return Err(CliError::usage("--variant applies to box1/box2 only"));
    }
    let seed = args
        .seed
        .ok_or_else(|| CliError::usage("--seed is required for stochastic simulations"))?;
    let (label, params, runs, dt, t_end) = match args.system {
        SystemKind::Msd => (
            "K",
            &args.gains,
            args.runs.unwrap_or(100),
            args.dt.unwrap_or(0.1),
            args.t_end.unwrap_or(50.0),
        ),
        _ => (
            "c",
            &args.c,
            args.runs.unwrap_or(50),
            args.dt.unwrap_or(1.0),
            args.t_end.unwrap_or(1500.0),
        ),
    };
    if runs == 0 || params.is_empty() {
        return Err(CliError::usage(
            "need at least one run and one parameter value",
        ));
    }
    let prefix = if args.system == SystemKind::Msd {
        "msd"
    } else {
        "grazing"
    };
    // validate everything before simulating
    let mut scenarios = Vec::new();
    for &v in params {
        let s = if args.system == SystemKind::Msd {
            msd_scenario(
                &MsdParams::reference(v),
                args.sigma.unwrap_or(0.25),
                dt,
                t_end,
                seed,
            )?
        } else {
            let mut p = GrazingParams::reference(v);
            p.sigma = args.sigma.unwrap_or(p.sigma);
            grazing_scenario(&p, dt, t_end, seed)?
        };
        crate::dynamics::simulate::step_count(dt, t_end)?;
        scenarios.push((v, s));
    }

    let mut summary = create(&args.out_dir.join("summary.csv"))?;
    writeln!(
        summary,
        "system,parameter,run,seed,file,diverged,diverged_at_t"
    )?;
    let (mut ok, mut total) = (0usize, 0usize);
    for (v, s) in &scenarios {
        let batch = run_batch(s, runs, seed)?;
        for (i, tr) in batch.iter().enumerate() {
            let name = format!("{prefix}_{label}{}_run{i:03}_seed{seed}.csv", param_tag(*v));
            write_trajectory(&args.out_dir.join(&name), tr)?;
            let at = tr
                .diverged_at
                .map(|k| tr.time_at(k).to_string())
                .unwrap_or_default();
            writeln!(
                summary,
                "{prefix},{v},{i},{},{name},{},{at}",
                seed.wrapping_add(i as u64),
                u8::from(tr.diverged())
            )?;
            total += 1;
            ok += usize::from(!tr.diverged());
        }
    }
    summary.flush()?;
    writeln!(stdout, "{ok}/{total} runs completed without divergence")?;
    if ok == 0 {
        return Err(CliError {
            code: EXIT_NUMERIC,
            msg: "every run diverged".into(),
        });
    }
    Ok(())
}

fn fmt_eigs(ev: &[C64]) -> String {
    let mut ev = ev.to_vec();
    ev.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    ev.iter()
        .map(|l| format!("{:.6}{:+.6}i", l.re, l.im))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Stability boundaries of the reference MSD gain: `(upper, lower)`.
pub fn msd_gain_bounds() -> crate::Result<(f64, f64)> {
    let p = MsdParams::reference(0.0);
    Ok((critical_gain(&p)?, lower_gain_bound(&p)?))
}

pub fn cmd_analyze(args: &AnalyzeArgs, stdout: &mut dyn Write) -> CliResult {
    let mut dump = match &args.brs_dump {
        Some(p) => Some(create(p)?),
        None => None,
    };
    let report = match args.system {
        AnalyzeKind::Msd if args.find_critical_gain => {
            let p = MsdParams::reference(0.0);
            let (hi, lo) = msd_gain_bounds()?;
            let bis = critical_gain_bisection(&p, 1e-10)?;
            format!("critical_gain,critical_gain_bisection,lower_gain_bound\n{hi},{bis},{lo}\n")
        }
        AnalyzeKind::Msd => {
            if !(args.horizon > 0.0) {
                return Err(CliError::usage("--horizon must be > 0"));
            }
            let params: Vec<MsdParams> = args
                .gains
                .iter()
                .map(|&k| MsdParams::reference(k))
                .collect();
            for p in &params {
                p.validate()?;
            }
            let mut s = String::from("K,stable,max_real_eig,eigenvalues,disk_margin,dm_peak_frequency,brs_members,brs_horizon\n");
            for (i, p) in params.iter().enumerate() {
                let ss = crate::dynamics::models::msd_closed_loop(p)?;
                let dm = disk_margin(&msd_sensitivity(p)?)?;
                let brs = msd_brs(p, args.horizon)?;
                if let Some(w) = dump.as_mut() {
                    brs.write_csv(w, i == 0)?;
                }
                s += &format!(
                    "{},{},{},{},{},{},{},{}\n",
                    p.k_gain,
                    u8::from(is_stable(&ss)),
                    max_real_part(&ss.a)?,
                    fmt_eigs(&eigenvalues(&ss.a)?),
                    dm.dm,
                    dm.peak_frequency,
                    brs.member_count(),
                    args.horizon
                );
            }
            s
        }
        AnalyzeKind::Grazing => {
            let params: Vec<GrazingParams> = args
                .c
                .iter()
                .map(|&c| GrazingParams::reference(c))
                .collect();
            for p in &params {
                p.validate()?;
            }
            let mut s =
                String::from("c,high_equilibrium,drift_slope,past_fold,horizon,brs_members\n");
            let mut first = true;
            for p in &params {
                let eq = p.high_equilibrium();
                let slope = eq.map(|v| p.drift_slope(v));
                for g in grazing_brs(p, &args.horizons)? {
                    if let Some(w) = dump.as_mut() {
                        g.write_csv(w, first)?;
                        first = false;
                    }
                    s += &format!(
                        "{},{},{},{},{},{}\n",
                        p.c,
                        fmt_opt(eq),
                        fmt_opt(slope),
                        u8::from(g.past_fold),
                        g.horizon,
                        g.member_count()
                    );
                }
            }
            s
        }
        AnalyzeKind::Box => {
            let mut s = String::from("system,stable,max_real_eig,eigenvalues\n");
            for which in BoxSystem::ALL {
                let ss = box_system(which)?;
                s += &format!(
                    "{},{},{},{}\n",
                    which.name(),
                    u8::from(is_stable(&ss)),
                    max_real_part(&ss.a)?,
                    fmt_eigs(&eigenvalues(&ss.a)?)
                );
            }
            s
        }
    };
    if let Some(mut w) = dump {
        w.flush()?;
    }
    with_output(&args.out, stdout, |w| Ok(w.write_all(report.as_bytes())?))
}

/// `key=value;key=value` where a value may list alternatives `a|b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelFilter(pub Vec<(String, Vec<String>)>);

impl std::str::FromStr for LabelFilter {
    type Err = Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        let mut terms = Vec::new();
        for term in s.split(';').map(str::trim).filter(|t| !t.is_empty()) {
            let (k, v) = term
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("filter term '{term}' is not key=value")))?;
            terms.push((
                k.trim().to_string(),
                v.split('|').map(|x| x.trim().to_string()).collect(),
            ));
        }
        Ok(Self(terms))
    }
}

impl LabelFilter {
    /// Values of `value_col` over the rows matching every term.
    pub fn select(&self, table: &Table, value_col: &str) -> crate::Result<Vec<f64>> {
        let cols: Vec<(usize, &Vec<String>)> = self
            .0
            .iter()
            .map(|(k, vs)| Ok((table.column_index(k)?, vs)))
            .collect::<crate::Result<_>>()?;
        let vi = table.column_index(value_col)?;
        let values = table.numeric_column(vi)?;
        Ok(table
            .rows
            .iter()
            .zip(values)
            .filter(|(row, _)| cols.iter().all(|(c, vs)| vs.iter().any(|v| *v == row[*c])))
            .map(|(_, v)| v)
            .collect())
    }
}

fn read_numeric_column(path: &Path, column: &str) -> CliResult<Vec<f64>> {
    let t = read_table(open(path)?)?;
    Ok(t.numeric_column(t.column_index(column)?)?)
}

/// Runs every comparison of a `comparison,group_a,group_b` manifest.
pub fn run_comparisons(
    table: &Table,
    manifest: &Table,
    value_col: &str,
) -> crate::Result<Vec<(String, GroupComparison)>> {
    let name = manifest.column_index("comparison")?;
    let ga = manifest.column_index("group_a")?;
    let gb = manifest.column_index("group_b")?;
    manifest
        .rows
        .iter()
        .map(|row| {
            let fa: LabelFilter = row[ga].parse()?;
            let fb: LabelFilter = row[gb].parse()?;
            let a = SampleGroup::new(row[ga].clone(), fa.select(table, value_col)?)?;
            let b = SampleGroup::new(row[gb].clone(), fb.select(table, value_col)?)?;
            Ok((row[name].clone(), compare_groups(&a, &b)?))
        })
        .collect()
}

pub fn cmd_stats(args: &StatsArgs, stdout: &mut dyn Write) -> CliResult {
    if args.alternative != "greater" {
        return Err(CliError::usage(format!(
            "unsupported alternative '{}': only 'greater' is available",
            args.alternative
        )));
    }
    let rows = match (&args.a, &args.b, &args.table, &args.comparisons) {
        (Some(a), Some(b), None, None) => {
            let ga = SampleGroup::new(
                a.display().to_string(),
                read_numeric_column(a, &args.column)?,
            )?;
            let gb = SampleGroup::new(
                b.display().to_string(),
                read_numeric_column(b, &args.column)?,
            )?;
            vec![("a_vs_b".to_string(), compare_groups(&ga, &gb)?)]
        }
        (None, None, Some(t), Some(m)) => {
            let table = read_table(open(t)?)?;
            let manifest = read_table(open(m)?)?;
            run_comparisons(&table, &manifest, &args.column)?
        }
        _ => {
            return Err(CliError::usage(
                "use either --a and --b, or --table and --comparisons",
            ))
        }
    };
    with_output(&args.out, stdout, |w| Ok(write_report_csv(w, &rows)?))
}

/// Parses `lo:hi[:step]`, a single value, or a comma list.
pub fn parse_range(text: &str) -> crate::Result<Vec<usize>> {
    let bad = || Error::Config(format!("invalid range '{text}'"));
    let num = |s: &str| s.trim().parse::<usize>().map_err(|_| bad());
    if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        let (lo, hi, step) = match parts.as_slice() {
            [lo, hi] => (num(lo)?, num(hi)?, 1),
            [lo, hi, st] => (num(lo)?, num(hi)?, num(st)?),
            _ => return Err(bad()),
        };
        if step == 0 || lo > hi {
            return Err(bad());
        }
        let mut v: Vec<usize> = (lo..=hi).step_by(step).collect();
        if *v.last().unwrap() != hi {
            v.push(hi);
        }
        Ok(v)
    } else {
        text.split(',').map(num).collect()
    }
}

/// One cell of a window sweep; `p_value`/`ps` are `None` when the cell
/// failed.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub ma_window: usize,
    pub ac1_window: usize,
    pub p_value: Option<f64>,
    pub ps: Option<f64>,
    pub n_a: usize,
    pub n_b: usize,
    pub status: String,
}

/// Per-channel median AC1 of every record, pooled by group, for each
/// (MA window, AC1 window) pair.
pub fn sweep_grid(
    data: &[(String, MultiChannelRecord)],
    group_a: &str,
    group_b: &str,
    ma: &[usize],
    ac1: &[usize],
    pipeline: &PipelineArgs,
) -> Vec<SweepCell> {
    let cells: Vec<(usize, usize)> = ma
        .iter()
        .flat_map(|&m| ac1.iter().map(move |&w| (m, w)))
        .collect();
    cells
        .par_iter()
        .map(|&(m, w)| {
            let run = || -> crate::Result<GroupComparison> {
                let detrend = pipeline.detrend(m);
                let cfg = Ac1Config {
                    window: w,
                    stride: pipeline.stride,
                };
                let (mut a, mut b) = (Vec::new(), Vec::new());
                for (g, rec) in data {
                    let target = if g == group_a {
                        &mut a
                    } else if g == group_b {
                        &mut b
                    } else {
                        continue;
                    };
                    let res = run_pipeline(rec, &pipeline.preprocess(), &detrend, &cfg)?;
                    target.extend(res.values().map(|c| c.median_ac1));
                }
                compare_groups(
                    &SampleGroup::new(group_a, a)?,
                    &SampleGroup::new(group_b, b)?,
                )
            };
            match run() {
                Ok(c) => SweepCell {
                    ma_window: m,
                    ac1_window: w,
                    p_value: Some(c.p_value),
                    ps: Some(c.ps),
                    n_a: c.n_a,
                    n_b: c.n_b,
                    status: "ok".into(),
                },
                Err(e) => {
                    warn!("sweep cell ma={m} ac1={w} failed: {e}");
                    SweepCell {
                        ma_window: m,
                        ac1_window: w,
                        p_value: None,
                        ps: None,
                        n_a: 0,
                        n_b: 0,
                        status: e.to_string().replace(',', ";"),
                    }
                }
            }
        })
        .collect()
}

pub fn write_sweep_csv(out: &mut dyn Write, cells: &[SweepCell]) -> std::io::Result<()> {
    writeln!(out, "ma_window,ac1_window,p_value,ps,n_a,n_b,status")?;
    for c in cells {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            c.ma_window,
            c.ac1_window,
            fmt_opt(c.p_value),
            fmt_opt(c.ps),
            c.n_a,
            c.n_b,
            c.status
        )?;
    }
    Ok(())
}

/// Reads a `file,group` manifest and loads every listed record.
pub fn load_manifest(path: &Path) -> CliResult<Vec<(String, MultiChannelRecord)>> {
    let t = read_table(open(path)?)?;
    let fi = t.column_index("file")?;
    let gi = t.column_index("group")?;
    let base = path.parent().unwrap_or(Path::new("."));
    t.rows
        .iter()
        .map(|row| {
            let rec = load_csv(open(&base.join(&row[fi]))?, &[])?;
            Ok((row[gi].clone(), rec))
        })
        .collect()
}

pub fn cmd_sweep(args: &SweepArgs, stdout: &mut dyn Write) -> CliResult {
    args.pipeline.validate()?;
    let ma = parse_range(&args.ma)?;
    let ac1 = parse_range(&args.ac1)?;
    for &m in &ma {
        args.pipeline.detrend(m).validate()?;
    }
    for &w in &ac1 {
        Ac1Config::new(w).validate()?;
    }
    let data = load_manifest(&args.manifest)?;
    for g in [&args.group_a, &args.group_b] {
        if !data.iter().any(|(x, _)| x == g) {
            return Err(Error::Config(format!("group '{g}' not in manifest")).into());
        }
    }
    if let Some((_, rec)) = data.first() {
        args.pipeline
            .validate_filter(rec.sample_rate_hz().unwrap_or(f64::NAN))?;
    }
    let cells = sweep_grid(
        &data,
        &args.group_a,
        &args.group_b,
        &ma,
        &ac1,
        &args.pipeline,
    );
    with_output(&args.out, stdout, |w| Ok(write_sweep_csv(w, &cells)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::read_table;

    fn table(text: &str) -> Table {
        read_table(text.as_bytes()).unwrap()
    }

    #[test]
    fn ranges() {
        assert_eq!(parse_range("3:9:3").unwrap(), vec![3, 6, 9]);
        assert_eq!(parse_range("3:10:3").unwrap(), vec![3, 6, 9, 10]);
        assert_eq!(parse_range("5").unwrap(), vec![5]);
        assert_eq!(parse_range("5,7").unwrap(), vec![5, 7]);
        assert!(parse_range("9:3").is_err());
        assert!(parse_range("3:9:0").is_err());
        assert!(parse_range("a:b").is_err());
    }

    #[test]
    fn label_filters() {
        let t = table("damage,end,v\n0,none,1\n10,aft,2\n10,front,3\n15,aft,4\n");
        let f: LabelFilter = "damage=10|15;end=aft".parse().unwrap();
        assert_eq!(f.select(&t, "v").unwrap(), vec![2.0, 4.0]);
        let all: LabelFilter = "".parse().unwrap();
        assert_eq!(all.select(&t, "v").unwrap().len(), 4);
        assert!("damage".parse::<LabelFilter>().is_err());
        let f: LabelFilter = "side=left".parse().unwrap();
        assert!(matches!(f.select(&t, "v"), Err(Error::MissingColumn(_))));
    }

    #[test]
    fn error_codes() {
        assert_eq!(CliError::from(Error::Config("x".into())).code, EXIT_USAGE);
        assert_eq!(
            CliError::from(Error::MissingColumn("x".into())).code,
            EXIT_DATA
        );
        let e = CliError::from(Error::DegenerateVariance {
            a: "A".into(),
            b: "B".into(),
        });
        assert_eq!(e.code, EXIT_NUMERIC);
        assert!(e.line().starts_with("code=4 msg="));
        assert!(!CliError::usage("a\nb").line().contains('\n'));
    }

    #[test]
    fn gain_bounds() {
        let (hi, lo) = msd_gain_bounds().unwrap();
        assert!((hi - 4.59).abs() < 1e-9);
        assert_eq!(lo, -0.8);
    }

    #[test]
    fn box_step_responses() {
        let tr = box_step_response(BoxSystem::Box1Nominal, 0.01, 30.0).unwrap();
        assert!((tr.last()[0] - 1.0).abs() < 0.02);
        let tr = box_step_response(BoxSystem::Box1Actuated, 0.01, 30.0).unwrap();
        assert!(tr.component(0).iter().any(|y| y.abs() > 3.0));
    }
}
