//! Command-line frontend.
//!
//! Every subcommand writes `<out>/<experiment>.csv`, an
//! `<experiment>.manifest.json` next to it, and with `--plot` an
//! `<experiment>.svg`. Exit codes: 0 on success, 1 when a non-empty result
//! set has no `ok` row or a run fails, 2 on usage errors.

pub mod output;
pub mod plot;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::json;

use crate::diagnostics::mfe_constants;
use crate::error::{Error, Result};
use crate::experiments::{
    self, first_crossing, uniform_grid, Quantity, RowStatus, SweepConfig, SweepRow, DEFAULT_ELL,
};
use crate::filters::method_by_name;
use output::{fmt_f64, Manifest, Table};
use plot::{render_svg, PlotSeries, PlotSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

const DEFAULT_METHODS: &str = "A,B,C,D,E,G,IMEX";
const DEFAULT_GRID: &str = "0:4.5:900";

#[derive(Debug, Parser)]
#[command(name = "oscibench", version, about = "Trigonometric integrators for highly oscillatory systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Maximum deviation of ωI or H across a grid of hω/π.
    Sweep(Flags),
    /// log2 ratio of total-energy deviations at h and 2h, equal hω.
    Convergence(Flags),
    /// Stiff energies I_j(t), I(t) and H(t) along one run.
    Exchange(Flags),
    /// Slow-component error against the reference, over a grid of h.
    GlobalError(Flags),
    /// Consistency constants of a method at (h, ω).
    Constants(Flags),
    /// Runs a method for a number of steps and reports its status.
    Step(Flags),
}

/// Flags shared by all subcommands. Unset flags fall back to the config
/// file, then to the subcommand's default.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct Flags {
    /// Comma-separated method names (case-insensitive); REFERENCE where supported.
    #[arg(long, visible_alias = "methods")]
    #[serde(alias = "methods")]
    method: Option<String>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    omega: Option<f64>,
    /// Final time.
    #[arg(long = "T")]
    #[serde(rename = "T")]
    t_end: Option<f64>,
    /// `lo:hi:n`; n points in (lo, hi], or from lo to hi with --log.
    #[arg(long)]
    grid: Option<String>,
    /// Geometric instead of uniform grid (global-error).
    #[arg(long)]
    #[serde(default)]
    log: bool,
    /// omega_I or total_H.
    #[arg(long)]
    quantity: Option<String>,
    #[arg(long)]
    stride: Option<usize>,
    /// Number of steps (step).
    #[arg(long)]
    steps: Option<usize>,
    /// Number of stiff springs in the chain.
    #[arg(long)]
    ell: Option<usize>,
    /// Output directory.
    #[arg(long, env = "OSCIBENCH_OUT")]
    out: Option<PathBuf>,
    /// Also render an SVG plot.
    #[arg(long)]
    #[serde(default)]
    plot: bool,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Long runs (T = 1000 for sweeps).
    #[arg(long)]
    #[serde(default)]
    full_scale: bool,
    /// JSON file with the same keys as the flags.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

impl Flags {
    // Flags win over the config file.
    fn merge(self, file: Flags) -> Flags {
        Flags {
            method: self.method.or(file.method),
            h: self.h.or(file.h),
            omega: self.omega.or(file.omega),
            t_end: self.t_end.or(file.t_end),
            grid: self.grid.or(file.grid),
            log: self.log || file.log,
            quantity: self.quantity.or(file.quantity),
            stride: self.stride.or(file.stride),
            steps: self.steps.or(file.steps),
            ell: self.ell.or(file.ell),
            out: self.out.or(file.out),
            plot: self.plot || file.plot,
            workers: self.workers.or(file.workers),
            full_scale: self.full_scale || file.full_scale,
            config: self.config,
        }
    }

    fn methods(&self, default: &str) -> Result<Vec<String>> {
        let list = self.method.as_deref().unwrap_or(default);
        let names: Vec<String> = list
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect();
        if names.is_empty() {
            return Err(usage("--method", "no method given"));
        }
        for n in &names {
            if !n.eq_ignore_ascii_case(experiments::REFERENCE) {
                method_by_name(n)?;
            }
        }
        Ok(names)
    }

    fn single_method(&self, default: &str) -> Result<String> {
        let mut m = self.methods(default)?;
        if m.len() != 1 {
            return Err(usage("--method", "expects exactly one method"));
        }
        Ok(m.remove(0))
    }

    fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("."))
    }
}

fn usage(flag: &str, msg: &str) -> Error {
    Error::InvalidArgument(format!("{flag}: {msg}"))
}

fn positive(flag: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(usage(flag, "must be positive"))
    }
}

/// Parses `lo:hi:n`.
pub fn parse_grid_spec(spec: &str) -> Result<(f64, f64, usize)> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || usage("--grid", &format!("expected lo:hi:n, got {spec:?}"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if n == 0 || !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(bad());
    }
    Ok((lo, hi, n))
}

/// `n` geometrically spaced points from `lo` to `hi` inclusive.
pub fn geometric_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo) || n == 0 {
        return Err(usage("--grid", "log grid needs 0 < lo < hi"));
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    let r = (hi / lo).ln() / (n - 1) as f64;
    Ok((0..n).map(|k| lo * (r * k as f64).exp()).collect())
}

fn grid(flags: &Flags, default: &str) -> Result<Vec<f64>> {
    let (lo, hi, n) = parse_grid_spec(flags.grid.as_deref().unwrap_or(default))?;
    if flags.log {
        geometric_grid(lo, hi, n)
    } else {
        uniform_grid(lo, hi, n).map_err(|e| usage("--grid", &e.to_string()))
    }
}

fn load_config(path: &Path) -> Result<Flags> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage("--config", &format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| usage("--config", &format!("{}: {e}", path.display())))
}

/// What a subcommand produced.
struct Report {
    experiment: &'static str,
    table: Table,
    statuses: Vec<RowStatus>,
    plot: Option<(Vec<PlotSeries>, PlotSpec)>,
    parameters: serde_json::Value,
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::InvalidArgument(_)
        | Error::UnknownMethod(_)
        | Error::NotTrigonometric(_)
        | Error::Dimension { .. } => EXIT_USAGE,
        _ => EXIT_FAILED,
    }
}

fn execute(command: Command) -> Result<i32> {
    let start = Instant::now();
    let (flags, build): (Flags, fn(&Flags) -> Result<Report>) = match command {
        Command::Sweep(f) => (f, cmd_sweep),
        Command::Convergence(f) => (f, cmd_convergence),
        Command::Exchange(f) => (f, cmd_exchange),
        Command::GlobalError(f) => (f, cmd_global_error),
        Command::Constants(f) => (f, cmd_constants),
        Command::Step(f) => (f, cmd_step),
    };
    let flags = match &flags.config {
        Some(path) => {
            let file = load_config(path)?;
            flags.merge(file)
        }
        None => flags,
    };
    let report = build(&flags)?;
    write_report(&report, &flags.out_dir(), flags.plot, start.elapsed().as_secs_f64())?;

    let ok = report.statuses.iter().filter(|s| **s == RowStatus::Ok).count();
    if !report.statuses.is_empty() && ok == 0 {
        eprintln!("no run finished with status ok");
        return Ok(EXIT_FAILED);
    }
    Ok(EXIT_OK)
}

fn write_report(report: &Report, dir: &Path, with_plot: bool, wall: f64) -> Result<()> {
    let csv_path = dir.join(format!("{}.csv", report.experiment));
    report.table.write(&csv_path)?;
    let mut outputs = vec![csv_path.display().to_string()];
    if with_plot {
        if let Some((series, spec)) = &report.plot {
            let svg_path = dir.join(format!("{}.svg", report.experiment));
            output::write_text(&svg_path, &render_svg(series, spec))?;
            outputs.push(svg_path.display().to_string());
        }
    }
    let mut statuses = BTreeMap::new();
    for s in &report.statuses {
        *statuses.entry(s.to_string()).or_insert(0) += 1;
    }
    let manifest = Manifest {
        experiment: report.experiment.to_string(),
        version: env!("CARGO_PKG_VERSION"),
        parameters: report.parameters.clone(),
        created_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        wall_seconds: wall,
        rows: report.table.rows.len(),
        statuses,
        outputs: outputs.clone(),
    };
    manifest.write(&dir.join(format!("{}.manifest.json", report.experiment)))?;
    for o in outputs {
        println!("wrote {o}");
    }
    Ok(())
}

fn sweep_plot(rows: &[SweepRow], title: &str, y_label: &str, y_log: bool) -> (Vec<PlotSeries>, PlotSpec) {
    let mut by_method: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows {
        by_method
            .entry(&r.method)
            .or_default()
            .push((r.h_omega_over_pi, r.value.unwrap_or(f64::NAN)));
    }
    let series = by_method
        .into_iter()
        .map(|(m, points)| PlotSeries { label: m.to_string(), points })
        .collect();
    let spec = PlotSpec {
        title: title.to_string(),
        x_label: "h omega / pi".into(),
        y_label: y_label.into(),
        y_log,
        ..Default::default()
    };
    (series, spec)
}

fn cmd_sweep(f: &Flags) -> Result<Report> {
    let quantity = Quantity::parse(f.quantity.as_deref().unwrap_or("omega_I"))?;
    let default_t = if f.full_scale { 1000.0 } else { 200.0 };
    let cfg = SweepConfig {
        methods: f.methods(DEFAULT_METHODS)?,
        h: positive("--h", f.h.unwrap_or(0.02))?,
        grid: grid(f, DEFAULT_GRID)?,
        t_end: positive("--T", f.t_end.unwrap_or(default_t))?,
        quantity,
        ell: f.ell.unwrap_or(DEFAULT_ELL),
        workers: f.workers.unwrap_or(0),
    };
    let rows = experiments::resonance_sweep(&cfg)?;
    let parameters = json!({
        "methods": cfg.methods, "h": cfg.h, "grid_points": cfg.grid.len(),
        "T": cfg.t_end, "quantity": quantity.as_str(), "ell": cfg.ell,
    });
    Ok(Report {
        experiment: "sweep",
        table: output::sweep_table(&rows),
        statuses: rows.iter().map(|r| r.status).collect(),
        plot: Some(sweep_plot(&rows, "maximum deviation", quantity.as_str(), true)),
        parameters,
    })
}

fn cmd_convergence(f: &Flags) -> Result<Report> {
    let methods = f.methods(DEFAULT_METHODS)?;
    let h = positive("--h", f.h.unwrap_or(0.02))?;
    let default_t = if f.full_scale { 1000.0 } else { 200.0 };
    let t_end = positive("--T", f.t_end.unwrap_or(default_t))?;
    let ell = f.ell.unwrap_or(DEFAULT_ELL);
    let grid = grid(f, DEFAULT_GRID)?;
    let rows = experiments::convergence_ratio(&methods, h, 2.0 * h, &grid, t_end, ell, f.workers.unwrap_or(0))?;
    let parameters = json!({
        "methods": methods, "h_fine": h, "h_coarse": 2.0 * h,
        "grid_points": grid.len(), "T": t_end, "ell": ell,
    });
    Ok(Report {
        experiment: "convergence",
        table: output::sweep_table(&rows),
        statuses: rows.iter().map(|r| r.status).collect(),
        plot: Some(sweep_plot(&rows, "log2 ratio of energy deviations", "log2 ratio", false)),
        parameters,
    })
}

fn cmd_exchange(f: &Flags) -> Result<Report> {
    let method = f.single_method("IMEX")?;
    let omega = positive("--omega", f.omega.unwrap_or(50.0))?;
    let h = positive("--h", f.h.unwrap_or(0.1))?;
    let t_end = positive("--T", f.t_end.unwrap_or(200.0))?;
    let stride = f.stride.unwrap_or(1);
    let ell = f.ell.unwrap_or(DEFAULT_ELL);
    let series = experiments::exchange_series(&method, omega, h, t_end, stride, ell)?;
    match first_crossing(&series.rows, 0) {
        Some(t) => println!("{}: I2 > I1 first at t = {t}", series.method),
        None => println!("{}: I2 never exceeds I1 up to T = {t_end}", series.method),
    }
    let mut plot_series: Vec<PlotSeries> = (0..ell)
        .map(|j| PlotSeries {
            label: format!("I{}", j + 1),
            points: series.rows.iter().map(|r| (r.t, r.stiff[j])).collect(),
        })
        .collect();
    plot_series.push(PlotSeries {
        label: "I".into(),
        points: series.rows.iter().map(|r| (r.t, r.stiff_total)).collect(),
    });
    plot_series.push(PlotSeries {
        label: "H".into(),
        points: series.rows.iter().map(|r| (r.t, r.h_total)).collect(),
    });
    let spec = PlotSpec {
        title: format!("{} energy exchange", series.method),
        x_label: "t".into(),
        y_label: "energy".into(),
        ..Default::default()
    };
    Ok(Report {
        experiment: "exchange",
        table: output::series_table(&series.rows, ell),
        statuses: vec![series.status],
        plot: Some((plot_series, spec)),
        parameters: json!({
            "method": series.method, "omega": omega, "h": h, "T": t_end,
            "stride": stride, "ell": ell, "status": series.status.as_str(),
        }),
    })
}

fn cmd_global_error(f: &Flags) -> Result<Report> {
    let methods = f.methods("A,B,C,D,E,G,SV,IMEX")?;
    let omega = positive("--omega", f.omega.unwrap_or(1000.0))?;
    let t_end = positive("--T", f.t_end.unwrap_or(1.0))?;
    let ell = f.ell.unwrap_or(DEFAULT_ELL);
    let mut flags = f.clone();
    if flags.grid.is_none() {
        flags.grid = Some("2e-4:5e-2:60".into());
        flags.log = true;
    }
    let hs = grid(&flags, "")?;
    let rows = experiments::global_error_study(&methods, omega, &hs, t_end, ell, f.workers.unwrap_or(0))?;
    let mut by_method: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for r in &rows {
        by_method.entry(&r.method).or_default().push((r.h, r.err_x0.unwrap_or(f64::NAN)));
    }
    let series = by_method
        .into_iter()
        .map(|(m, points)| PlotSeries { label: m.to_string(), points })
        .collect();
    let spec = PlotSpec {
        title: format!("slow position error, omega = {omega}"),
        x_label: "h".into(),
        y_label: "error".into(),
        x_log: true,
        y_log: true,
        ..Default::default()
    };
    Ok(Report {
        experiment: "global_error",
        table: output::global_error_table(&rows),
        statuses: rows.iter().map(|r| r.status).collect(),
        plot: Some((series, spec)),
        parameters: json!({
            "methods": methods, "omega": omega, "h_grid": hs, "T": t_end, "ell": ell,
        }),
    })
}

fn cmd_constants(f: &Flags) -> Result<Report> {
    let methods = f.methods("IMEX")?;
    let h = positive("--h", f.h.unwrap_or(0.1))?;
    let omega = positive("--omega", f.omega.unwrap_or(50.0))?;
    let mut table = Table::new(&[
        "method", "h", "omega", "h_omega_over_pi", "alpha", "beta", "gamma", "rho", "rho_tilde", "status",
    ]);
    let mut statuses = Vec::new();
    let x = h * omega / std::f64::consts::PI;
    for name in &methods {
        let spec = method_by_name(name)?;
        let row = match mfe_constants(&spec, h, omega) {
            Ok(c) if !c.resonant => {
                println!(
                    "{}: alpha = {} beta = {} gamma = {}",
                    spec.name, c.alpha, c.beta, c.gamma
                );
                statuses.push(RowStatus::Ok);
                [c.alpha, c.beta, c.gamma, c.rho, c.rho_tilde]
                    .map(|v| if v.is_finite() { fmt_f64(v) } else { String::new() })
                    .to_vec()
                    .into_iter()
                    .chain([RowStatus::Ok.to_string()])
                    .collect::<Vec<_>>()
            }
            Ok(_) | Err(Error::Domain { .. }) | Err(Error::NotTrigonometric(_)) => {
                println!("{}: no constants at h omega / pi = {x}", spec.name);
                statuses.push(RowStatus::DomainError);
                let mut r = vec![String::new(); 5];
                r.push(RowStatus::DomainError.to_string());
                r
            }
            Err(e) => return Err(e),
        };
        let mut rec = vec![spec.name.clone(), fmt_f64(h), fmt_f64(omega), fmt_f64(x)];
        rec.extend(row);
        table.push(rec);
    }
    Ok(Report {
        experiment: "constants",
        table,
        statuses,
        plot: None,
        parameters: json!({ "methods": methods, "h": h, "omega": omega }),
    })
}

fn cmd_step(f: &Flags) -> Result<Report> {
    let method = f.single_method("IMEX")?;
    let h = positive("--h", f.h.unwrap_or(0.1))?;
    let omega = positive("--omega", f.omega.unwrap_or(50.0))?;
    let steps = f.steps.unwrap_or(1000);
    if steps == 0 {
        return Err(usage("--steps", "must be at least 1"));
    }
    let ell = f.ell.unwrap_or(DEFAULT_ELL);
    let t_end = steps as f64 * h;
    let (value, status) =
        experiments::method_deviation(&method, ell, h, omega, t_end, Quantity::TotalH)?;
    let row = SweepRow {
        method: method.to_ascii_uppercase(),
        h,
        omega,
        h_omega_over_pi: h * omega / std::f64::consts::PI,
        value,
        status,
    };
    println!("{}: {status}", row.method);
    Ok(Report {
        experiment: "step",
        table: output::sweep_table(std::slice::from_ref(&row)),
        statuses: vec![status],
        plot: None,
        parameters: json!({
            "method": row.method, "h": h, "omega": omega, "steps": steps, "ell": ell,
            "value": "maximum deviation of H",
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_spec_parsing() {
        assert_eq!(parse_grid_spec("0:4.5:900").unwrap(), (0.0, 4.5, 900));
        assert!(parse_grid_spec("0:4.5").is_err());
        assert!(parse_grid_spec("1:0:3").is_err());
        assert!(parse_grid_spec("0:1:0").is_err());
    }

    #[test]
    fn geometric_grid_hits_both_ends() {
        let g = geometric_grid(1e-3, 1e-1, 3).unwrap();
        assert_eq!(g[0], 1e-3);
        assert!((g[1] - 1e-2).abs() < 1e-15);
        assert!((g[2] - 1e-1).abs() < 1e-15);
    }

    #[test]
    fn flags_override_config() {
        let cli = Flags { h: Some(0.5), ..Default::default() };
        let file: Flags = serde_json::from_str(r#"{"h": 0.1, "omega": 7.0, "T": 3.0, "full-scale": true}"#).unwrap();
        let m = cli.merge(file);
        assert_eq!(m.h, Some(0.5));
        assert_eq!(m.omega, Some(7.0));
        assert_eq!(m.t_end, Some(3.0));
        assert!(m.full_scale);
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        assert!(serde_json::from_str::<Flags>(r#"{"omgea": 1.0}"#).is_err());
    }

    #[test]
    fn usage_errors_exit_with_two() {
        assert_eq!(run(["oscibench", "sweep", "--grid", "nonsense"]), EXIT_USAGE);
        assert_eq!(run(["oscibench", "constants", "--method", "XYZ"]), EXIT_USAGE);
        assert_eq!(run(["oscibench", "frobnicate"]), EXIT_USAGE);
    }
}
