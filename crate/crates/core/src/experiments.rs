//! Experiment harness on the Fermi–Pasta–Ulam chain: resonance sweeps,
//! energy-conservation order, slow energy exchange, global error in the slow
//! components, and a validated high-accuracy reference integrator.
//!
//! Grid points are independent and run on a rayon pool; rows are sorted
//! before they are returned, so results do not depend on the worker count.

use std::f64::consts::PI;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{averaged_system_sampled, DEFAULT_DT_AVG};
use crate::error::{Error, Result};
use crate::filters::{method_by_name, sinc, MethodSpec};
use crate::integrator::{make_context, verlet_in_place, Propagator};
use crate::systems::{fpu_initial_state, fpu_system, FpuParams, OscillatorySystem, State};

/// Pseudo-method name selecting the reference integrator in sweeps and
/// exchange series.
pub const REFERENCE: &str = "REFERENCE";
/// A run whose state exceeds this magnitude is recorded as diverged.
pub const DIVERGENCE_BOUND: f64 = 1e8;
/// Number of stiff springs in the benchmark chain.
pub const DEFAULT_ELL: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    Diverged,
    DomainError,
}

impl RowStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RowStatus::Ok => "ok",
            RowStatus::Diverged => "diverged",
            RowStatus::DomainError => "domain_error",
        }
    }
}

impl fmt::Display for RowStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One grid point of a sweep; `value` is `Some` exactly when `status` is ok.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: String,
    pub h: f64,
    pub omega: f64,
    pub h_omega_over_pi: f64,
    pub value: Option<f64>,
    pub status: RowStatus,
}

impl SweepRow {
    fn new(method: &str, h: f64, omega: f64, x: f64, outcome: Outcome) -> Self {
        let (value, status) = outcome.split();
        SweepRow {
            method: method.to_string(),
            h,
            omega,
            h_omega_over_pi: x,
            value,
            status,
        }
    }
}

/// One sample of an energy-exchange series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub t: f64,
    /// `I_1, …, I_ℓ`.
    pub stiff: Vec<f64>,
    pub stiff_total: f64,
    pub h_total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub method: String,
    pub rows: Vec<SeriesRow>,
    /// `Diverged` when the run stopped early; `rows` then ends at the last
    /// finite sample.
    pub status: RowStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalErrorRow {
    pub method: String,
    pub h: f64,
    pub omega: f64,
    /// Time at which the error is measured: the first step with `t ≥ T`.
    pub t: f64,
    pub err_x0: Option<f64>,
    pub err_y0: Option<f64>,
    pub status: RowStatus,
}

/// Scalar observed along a sweep run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    /// `ω·I`.
    OmegaI,
    /// `H`.
    TotalH,
}

impl Quantity {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "omega_I" | "omega_i" => Ok(Quantity::OmegaI),
            "total_H" | "total_h" => Ok(Quantity::TotalH),
            other => Err(Error::InvalidArgument(format!(
                "unknown quantity {other:?} (expected omega_I or total_H)"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Quantity::OmegaI => "omega_I",
            Quantity::TotalH => "total_H",
        }
    }

    fn eval<S: OscillatorySystem + ?Sized>(&self, system: &S, s: &State) -> f64 {
        let d0 = system.d_slow();
        let w = system.omega();
        let stiff: f64 = s.q[d0..]
            .iter()
            .zip(&s.p[d0..])
            .map(|(q, p)| 0.5 * p * p + 0.5 * w * w * q * q)
            .sum();
        match self {
            Quantity::OmegaI => w * stiff,
            Quantity::TotalH => system.hamiltonian(&s.q, &s.p),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Outcome {
    Value(f64),
    Diverged,
    Domain,
}

impl Outcome {
    fn split(self) -> (Option<f64>, RowStatus) {
        match self {
            Outcome::Value(v) if v.is_finite() => (Some(v), RowStatus::Ok),
            Outcome::Value(_) | Outcome::Diverged => (None, RowStatus::Diverged),
            Outcome::Domain => (None, RowStatus::DomainError),
        }
    }
}

fn classify(err: &Error) -> Outcome {
    match err {
        Error::Domain { .. } => Outcome::Domain,
        _ => Outcome::Diverged,
    }
}

/// Uniform grid `lo + k(hi − lo)/n`, `k = 1..=n` (the left end is excluded).
pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if n == 0 || !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "grid needs lo < hi and n >= 1, got {lo}:{hi}:{n}"
        )));
    }
    Ok((1..=n).map(|k| lo + k as f64 * (hi - lo) / n as f64).collect())
}

/// Number of steps of size `h` covering `[0, t_end]`; `t_end` must be a whole
/// multiple of `h` up to rounding.
pub fn steps_for(t_end: f64, h: f64) -> Result<usize> {
    let n = (t_end / h).round();
    if !(h > 0.0 && t_end > 0.0) || (n * h - t_end).abs() > 1e-9 * t_end {
        return Err(Error::InvalidArgument(format!(
            "T = {t_end} is not a multiple of h = {h}"
        )));
    }
    Ok(n as usize)
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if workers > 0 {
        builder = builder.num_threads(workers);
    }
    builder
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))
}

fn resolve_methods(names: &[String]) -> Result<Vec<Option<MethodSpec>>> {
    names
        .iter()
        .map(|n| {
            if n.trim().eq_ignore_ascii_case(REFERENCE) {
                Ok(None)
            } else {
                method_by_name(n).map(Some)
            }
        })
        .collect()
}

fn display_name(spec: &Option<MethodSpec>) -> &str {
    spec.as_ref().map_or(REFERENCE, |m| m.name.as_str())
}

fn fpu(ell: usize, omega: f64) -> Result<(impl OscillatorySystem, State)> {
    let params = FpuParams::new(ell, omega)?;
    Ok((fpu_system(params), fpu_initial_state(params)))
}

/// Runs `spec` on the FPU chain for `n_steps`, calling `observe` on every
/// state including the initial one. Stops with `Diverged` on a non-finite
/// state or once the state exceeds [`DIVERGENCE_BOUND`].
fn observed_run<S: OscillatorySystem + ?Sized>(
    spec: &MethodSpec,
    system: &S,
    s0: &State,
    h: f64,
    n_steps: usize,
    mut observe: impl FnMut(&State),
) -> Outcome {
    let ctx = match make_context(spec, system, h) {
        Ok(ctx) => ctx,
        Err(e) => return classify(&e),
    };
    let mut s = s0.clone();
    observe(&s);
    let mut prop = Propagator::new(&ctx, s0.t, true);
    for _ in 0..n_steps {
        if let Err(e) = prop.advance(&mut s) {
            return classify(&e);
        }
        if s.max_abs() > DIVERGENCE_BOUND {
            return Outcome::Diverged;
        }
        observe(&s);
    }
    Outcome::Value(0.0)
}

/// Maximum deviation of `quantity` from its initial value over `[0, t_end]`,
/// sampled every step. `spec = None` uses the reference integrator.
fn deviation_point(
    spec: &Option<MethodSpec>,
    ell: usize,
    h: f64,
    omega: f64,
    t_end: f64,
    quantity: Quantity,
) -> Outcome {
    let (system, s0) = match fpu(ell, omega) {
        Ok(v) => v,
        Err(e) => return classify(&e),
    };
    let mut first = None;
    let mut largest = 0.0_f64;
    let mut observe = |s: &State| {
        let v = quantity.eval(&system, s);
        let v0 = *first.get_or_insert(v);
        largest = largest.max((v - v0).abs());
    };
    let outcome = match spec {
        Some(spec) => match steps_for(t_end, h) {
            Ok(n) => observed_run(spec, &system, &s0, h, n, &mut observe),
            Err(e) => return classify(&e),
        },
        None => {
            return match reference_deviation(ell, omega, t_end, quantity) {
                Ok(v) => Outcome::Value(v),
                Err(e) => classify(&e),
            }
        }
    };
    match outcome {
        Outcome::Value(_) => Outcome::Value(largest),
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    /// Registry names, plus [`REFERENCE`].
    pub methods: Vec<String>,
    pub h: f64,
    /// Values of `hω/π`.
    pub grid: Vec<f64>,
    pub t_end: f64,
    pub quantity: Quantity,
    pub ell: usize,
    /// Worker threads; 0 lets rayon decide.
    pub workers: usize,
}

fn sort_rows(rows: &mut [SweepRow]) {
    rows.sort_by(|a, b| {
        a.method
            .cmp(&b.method)
            .then(a.h_omega_over_pi.total_cmp(&b.h_omega_over_pi))
            .then(a.h.total_cmp(&b.h))
    });
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(Error::InvalidArgument("grid values must be positive".into()));
    }
    Ok(())
}

/// Maximum deviation of `ωI` or `H` over `[0, T]` at each `hω/π` of the grid
/// (`ω = πx/h`), for each method.
pub fn resonance_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    check_grid(&cfg.grid)?;
    steps_for(cfg.t_end, cfg.h)?;
    let methods = resolve_methods(&cfg.methods)?;
    let tasks: Vec<(usize, f64)> = (0..methods.len())
        .flat_map(|m| cfg.grid.iter().map(move |&x| (m, x)))
        .collect();
    let mut rows: Vec<SweepRow> = pool(cfg.workers)?.install(|| {
        tasks
            .par_iter()
            .map(|&(m, x)| {
                let spec = &methods[m];
                let omega = PI * x / cfg.h;
                let outcome = deviation_point(spec, cfg.ell, cfg.h, omega, cfg.t_end, cfg.quantity);
                SweepRow::new(display_name(spec), cfg.h, omega, x, outcome)
            })
            .collect()
    });
    sort_rows(&mut rows);
    Ok(rows)
}

/// `log₂(dev(h_coarse)/dev(h_fine))` of the total-energy deviation at equal
/// `hω` for both step sizes (so `ω` halves when `h` doubles). Rows carry the
/// fine step size and its `ω`.
pub fn convergence_ratio(
    methods: &[String],
    h_fine: f64,
    h_coarse: f64,
    grid: &[f64],
    t_end: f64,
    ell: usize,
    workers: usize,
) -> Result<Vec<SweepRow>> {
    check_grid(grid)?;
    steps_for(t_end, h_fine)?;
    steps_for(t_end, h_coarse)?;
    let specs = resolve_methods(methods)?;
    let tasks: Vec<(usize, f64)> = (0..specs.len())
        .flat_map(|m| grid.iter().map(move |&x| (m, x)))
        .collect();
    let mut rows: Vec<SweepRow> = pool(workers)?.install(|| {
        tasks
            .par_iter()
            .map(|&(m, x)| {
                let spec = &specs[m];
                let fine = deviation_point(spec, ell, h_fine, PI * x / h_fine, t_end, Quantity::TotalH);
                let coarse =
                    deviation_point(spec, ell, h_coarse, PI * x / h_coarse, t_end, Quantity::TotalH);
                let outcome = match (fine, coarse) {
                    (Outcome::Domain, _) | (_, Outcome::Domain) => Outcome::Domain,
                    (Outcome::Value(a), Outcome::Value(b)) => log2_ratio(b, a),
                    _ => Outcome::Diverged,
                };
                SweepRow::new(display_name(spec), h_fine, PI * x / h_fine, x, outcome)
            })
            .collect()
    });
    sort_rows(&mut rows);
    Ok(rows)
}

// log₂(num/den); equal values give 0, a zero denominator has no ratio.
fn log2_ratio(num: f64, den: f64) -> Outcome {
    if num == den {
        Outcome::Value(0.0)
    } else if num > 0.0 && den > 0.0 {
        Outcome::Value((num / den).log2())
    } else {
        Outcome::Diverged
    }
}

fn series_row<S: OscillatorySystem + ?Sized>(system: &S, s: &State) -> SeriesRow {
    let d0 = system.d_slow();
    let w = system.omega();
    let stiff: Vec<f64> = s.q[d0..]
        .iter()
        .zip(&s.p[d0..])
        .map(|(q, p)| 0.5 * p * p + 0.5 * w * w * q * q)
        .collect();
    SeriesRow {
        t: s.t,
        stiff_total: stiff.iter().sum(),
        stiff,
        h_total: system.hamiltonian(&s.q, &s.p),
    }
}

/// Stiff energies and total energy sampled every `stride` steps of size `h`
/// up to the first step with `t ≥ T`. For [`REFERENCE`] the reference
/// integrator is sampled every `stride·h` on `[0, T]`, which must then be a
/// multiple of `stride·h`.
pub fn exchange_series(
    method: &str,
    omega: f64,
    h: f64,
    t_end: f64,
    stride: usize,
    ell: usize,
) -> Result<Series> {
    if stride == 0 {
        return Err(Error::InvalidArgument("stride must be at least 1".into()));
    }
    if !(h > 0.0 && t_end > 0.0) {
        return Err(Error::InvalidArgument("h and T must be positive".into()));
    }
    let n_steps = (t_end / h - 1e-9).ceil() as usize;
    let spec = resolve_methods(&[method.to_string()])?.remove(0);
    let (system, s0) = fpu(ell, omega)?;
    let mut rows = Vec::new();
    let outcome = match &spec {
        Some(spec) => {
            let mut k = 0usize;
            observed_run(spec, &system, &s0, h, n_steps, |s| {
                if k.is_multiple_of(stride) {
                    rows.push(series_row(&system, s));
                }
                k += 1;
            })
        }
        None => {
            let samples = reference_solution(
                &system,
                &s0,
                t_end,
                stride as f64 * h,
                &ReferenceOptions::default(),
            )?;
            rows = samples.samples.iter().map(|s| series_row(&system, s)).collect();
            Outcome::Value(0.0)
        }
    };
    let status = match outcome {
        Outcome::Value(_) => RowStatus::Ok,
        Outcome::Diverged => RowStatus::Diverged,
        Outcome::Domain => RowStatus::DomainError,
    };
    Ok(Series {
        method: display_name(&spec).to_string(),
        rows,
        status,
    })
}

/// First sample time at which `I_{j+1} > I_j` (energy has moved past the
/// `j`-th oscillator), if any. `j` is zero-based.
pub fn first_crossing(rows: &[SeriesRow], j: usize) -> Option<f64> {
    rows.iter()
        .find(|r| r.stiff.len() > j + 1 && r.stiff[j + 1] > r.stiff[j])
        .map(|r| r.t)
}

/// Crossing time `I₂ > I₁` predicted by the averaged system, sampled every
/// `sample_dt`.
pub fn averaged_crossing(ell: usize, omega: f64, t_end: f64, sample_dt: f64) -> Result<Option<f64>> {
    let (system, s0) = fpu(ell, omega)?;
    let stride = ((sample_dt / DEFAULT_DT_AVG).round() as usize).max(1);
    let path = averaged_system_sampled(&system, &s0, t_end, DEFAULT_DT_AVG, stride)?;
    Ok(path
        .iter()
        .find(|a| {
            let e = a.predicted_stiff(omega);
            e.len() > 1 && e[1] > e[0]
        })
        .map(|a| a.t))
}

/// Error in the slow position and momentum at the first step with `t ≥ T`,
/// against the reference integrator. `SV` is run as velocity Verlet so that
/// step sizes beyond its stability limit show up as divergence.
pub fn global_error_study(
    methods: &[String],
    omega: f64,
    h_grid: &[f64],
    t_end: f64,
    ell: usize,
    workers: usize,
) -> Result<Vec<GlobalErrorRow>> {
    if h_grid.iter().any(|h| !(h.is_finite() && *h > 0.0)) || !(t_end > 0.0) {
        return Err(Error::InvalidArgument("step sizes and T must be positive".into()));
    }
    let specs: Vec<MethodSpec> = methods.iter().map(|m| method_by_name(m)).collect::<Result<_>>()?;
    let (system, s0) = fpu(ell, omega)?;
    let d0 = system.d_slow();
    let pool = pool(workers)?;

    // One reference per step size, shared by all methods.
    let references: Vec<Result<(usize, State)>> = pool.install(|| {
        h_grid
            .par_iter()
            .map(|&h| {
                let n = (t_end / h - 1e-9).ceil() as usize;
                let t_star = n as f64 * h;
                let run = reference_solution(&system, &s0, t_star, t_star, &ReferenceOptions::default())?;
                Ok((n, run.samples.last().cloned().expect("reference has samples")))
            })
            .collect()
    });
    let references: Vec<(usize, State)> = references.into_iter().collect::<Result<_>>()?;

    let tasks: Vec<(usize, usize)> = (0..specs.len())
        .flat_map(|m| (0..h_grid.len()).map(move |k| (m, k)))
        .collect();
    let mut rows: Vec<GlobalErrorRow> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(m, k)| {
                let spec = &specs[m];
                let h = h_grid[k];
                let (n, reference) = &references[k];
                let outcome = if spec.name == "SV" {
                    verlet_final(&system, &s0, h, *n)
                } else {
                    let mut last = None;
                    match observed_run(spec, &system, &s0, h, *n, |s| last = Some(s.clone())) {
                        Outcome::Value(_) => last.ok_or(Outcome::Diverged),
                        other => Err(other),
                    }
                };
                let (err_x0, err_y0, status) = match outcome {
                    Ok(s) => {
                        let dist = |a: &[f64], b: &[f64]| {
                            a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
                        };
                        (
                            Some(dist(&s.q[..d0], &reference.q[..d0])),
                            Some(dist(&s.p[..d0], &reference.p[..d0])),
                            RowStatus::Ok,
                        )
                    }
                    Err(o) => (None, None, o.split().1),
                };
                GlobalErrorRow {
                    method: spec.name.clone(),
                    h,
                    omega,
                    t: reference.t,
                    err_x0,
                    err_y0,
                    status,
                }
            })
            .collect()
    });
    rows.sort_by(|a, b| a.method.cmp(&b.method).then(a.h.total_cmp(&b.h)));
    Ok(rows)
}

fn verlet_final<S: OscillatorySystem + ?Sized>(
    system: &S,
    s0: &State,
    h: f64,
    n: usize,
) -> std::result::Result<State, Outcome> {
    let mut s = s0.clone();
    let mut f = vec![0.0; s.dim()];
    for k in 0..n {
        verlet_in_place(system, h, &mut s, &mut f, k > 0);
        if !s.is_finite() || s.max_abs() > DIVERGENCE_BOUND {
            return Err(Outcome::Diverged);
        }
    }
    s.t = n as f64 * h;
    Ok(s)
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

// ---------------------------------------------------------------------------
// Reference integrator

/// Settings of the reference integrator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceOptions {
    /// Upper bound on `h_ref·ω`.
    pub h_omega_max: f64,
    /// Richardson tolerance on the slow components, relative to their size.
    pub rel_tol: f64,
    /// How many times the step may be halved after the first check fails.
    pub max_refinements: usize,
    /// Refuse runs whose estimated cost exceeds this many force evaluations.
    pub max_force_evals: f64,
}

impl Default for ReferenceOptions {
    fn default() -> Self {
        ReferenceOptions {
            h_omega_max: 0.05,
            rel_tol: 1e-7,
            max_refinements: 3,
            max_force_evals: 2e9,
        }
    }
}

/// Sampled reference states at `t = k·sample_dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceRun {
    pub h_ref: f64,
    pub samples: Vec<State>,
    /// Richardson defect between `h_ref` and `2h_ref`.
    pub richardson_defect: f64,
}

/// Sub-step weights of the sixth-order triple-jump composition.
pub fn composition_weights() -> [f64; 9] {
    let jump = |order: i32| {
        let c = 2f64.powf(1.0 / (order as f64 + 1.0));
        let outer = 1.0 / (2.0 - c);
        (outer, -c * outer)
    };
    let (a1, a2) = jump(2);
    let (b1, b2) = jump(4);
    let inner = |b: f64| [b * a1, b * a2, b * a1];
    let mut w = [0.0; 9];
    w[..3].copy_from_slice(&inner(b1));
    w[3..6].copy_from_slice(&inner(b2));
    w[6..].copy_from_slice(&inner(b1));
    w
}

const STAGES: usize = 9;

struct SplittingStep {
    // Per sub-step: (kick weight before it, cos, drift, kick factor, slow drift).
    rot: Vec<(f64, f64, f64, f64)>,
    half_kicks: Vec<f64>,
}

impl SplittingStep {
    // Strang splitting (half kick, exact linear flow, half kick) composed by
    // the triple jump; adjacent half kicks are merged.
    fn new(h: f64, omega: f64) -> Self {
        let w = composition_weights();
        let rot = w
            .iter()
            .map(|c| {
                let dt = c * h;
                let xi = dt * omega;
                (xi.cos(), dt * sinc(xi), -omega * xi.sin(), dt)
            })
            .collect();
        let mut half_kicks = Vec::with_capacity(STAGES + 1);
        half_kicks.push(0.5 * w[0] * h);
        for k in 1..STAGES {
            half_kicks.push(0.5 * (w[k - 1] + w[k]) * h);
        }
        half_kicks.push(0.5 * w[STAGES - 1] * h);
        SplittingStep { rot, half_kicks }
    }

    // `g` holds the force at `s.q` on entry and at the new position on exit.
    fn apply<S: OscillatorySystem + ?Sized>(&self, system: &S, s: &mut State, g: &mut [f64]) {
        let d0 = system.d_slow();
        for k in 0..STAGES {
            let kick = self.half_kicks[k];
            for (p, gi) in s.p.iter_mut().zip(g.iter()) {
                *p += kick * gi;
            }
            let (c, drift, kick_q, dt) = self.rot[k];
            for i in 0..d0 {
                s.q[i] += dt * s.p[i];
            }
            for i in d0..s.q.len() {
                let (q, p) = (s.q[i], s.p[i]);
                s.q[i] = c * q + drift * p;
                s.p[i] = kick_q * q + c * p;
            }
            system.force(&s.q, g);
        }
        let kick = self.half_kicks[STAGES];
        for (p, gi) in s.p.iter_mut().zip(g.iter()) {
            *p += kick * gi;
        }
    }
}

/// Runs the reference integrator with a fixed step `h_ref` (which must divide
/// `sample_dt`), calling `observer` on every fine step and returning the
/// states at `t = k·sample_dt`.
pub fn reference_run<S: OscillatorySystem + ?Sized>(
    system: &S,
    s0: &State,
    h_ref: f64,
    t_end: f64,
    sample_dt: f64,
    mut observer: impl FnMut(&State),
) -> Result<Vec<State>> {
    system.check_state(s0)?;
    let per_sample = steps_for(sample_dt, h_ref)?;
    let n_samples = steps_for(t_end, sample_dt)?;
    let step = SplittingStep::new(h_ref, system.omega());
    let mut s = s0.clone();
    let mut g = system.force_vec(&s.q);
    let mut samples = Vec::with_capacity(n_samples + 1);
    samples.push(s.clone());
    observer(&s);
    let mut n = 0usize;
    for _ in 0..n_samples {
        for _ in 0..per_sample {
            step.apply(system, &mut s, &mut g);
            n += 1;
            s.t = s0.t + n as f64 * h_ref;
            if !s.is_finite() {
                return Err(Error::NonFiniteState { step: n });
            }
            observer(&s);
        }
        samples.push(s.clone());
    }
    Ok(samples)
}

fn slow_defect(d0: usize, a: &[State], b: &[State]) -> f64 {
    let scale = a
        .iter()
        .flat_map(|s| s.q[..d0].iter().chain(&s.p[..d0]))
        .fold(0.0_f64, |m, v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| {
            let dq = x.q[..d0].iter().zip(&y.q[..d0]).map(|(u, v)| (u - v).abs());
            let dp = x.p[..d0].iter().zip(&y.p[..d0]).map(|(u, v)| (u - v).abs());
            dq.chain(dp).collect::<Vec<_>>()
        })
        .fold(0.0_f64, f64::max)
        / scale
}

fn initial_reference_step(omega: f64, sample_dt: f64, opts: &ReferenceOptions) -> f64 {
    let h_max = if omega > 0.0 { opts.h_omega_max / omega } else { sample_dt };
    let per_sample = (sample_dt / h_max - 1e-9).ceil().max(1.0);
    sample_dt / per_sample
}

fn validate<S: OscillatorySystem + ?Sized>(
    system: &S,
    s0: &State,
    t_end: f64,
    sample_dt: f64,
    opts: &ReferenceOptions,
) -> Result<ReferenceRun> {
    if !(t_end > 0.0 && sample_dt > 0.0) {
        return Err(Error::InvalidArgument("reference needs T > 0 and a positive sampling interval".into()));
    }
    steps_for(t_end, sample_dt)?;
    let mut h = initial_reference_step(system.omega(), sample_dt, opts);
    // Coarse + fine run, then one more fine run per refinement.
    let worst = t_end / h * STAGES as f64 * (1.0 + 2.0 + 4.0 * opts.max_refinements as f64);
    let first = t_end / h * STAGES as f64 * 3.0;
    if first > opts.max_force_evals {
        return Err(Error::ReferenceNotConverged(format!(
            "estimated cost {first:.2e} force evaluations (up to {worst:.2e} with refinement) exceeds the limit of {:.2e}; h_ref = {h:.3e}, T = {t_end}",
            opts.max_force_evals
        )));
    }
    let d0 = system.d_slow();
    let mut coarse = reference_run(system, s0, h, t_end, sample_dt, |_| {})?;
    let mut defect = f64::INFINITY;
    for _ in 0..=opts.max_refinements {
        let fine = reference_run(system, s0, h / 2.0, t_end, sample_dt, |_| {})?;
        defect = slow_defect(d0, &coarse, &fine);
        h /= 2.0;
        if defect <= opts.rel_tol {
            return Ok(ReferenceRun {
                h_ref: h,
                samples: fine,
                richardson_defect: defect,
            });
        }
        coarse = fine;
    }
    Err(Error::ReferenceNotConverged(format!(
        "Richardson defect {defect:.3e} above {:.1e} after {} refinements (h_ref = {h:.3e})",
        opts.rel_tol, opts.max_refinements
    )))
}

/// Validated reference solution sampled at `t = k·sample_dt` on `[0, T]`.
///
/// The integrator is a sixth-order composition of the Strang splitting into
/// the exact linear flow and half kicks with `g`, with `h_ref·ω ≤ 0.05` and
/// `h_ref` dividing `sample_dt`. Halving `h_ref` must change the sampled slow
/// components by at most `rel_tol` relative to their magnitude; the step is
/// halved up to `max_refinements` times before giving up.
pub fn reference_solution<S: OscillatorySystem + ?Sized>(
    system: &S,
    s0: &State,
    t_end: f64,
    sample_dt: f64,
    opts: &ReferenceOptions,
) -> Result<ReferenceRun> {
    validate(system, s0, t_end, sample_dt, opts)
}

/// The validated step size of [`reference_solution`], for callers that
/// observe every fine step through [`reference_run`].
pub fn validated_reference_step<S: OscillatorySystem + ?Sized>(
    system: &S,
    s0: &State,
    t_end: f64,
    sample_dt: f64,
    opts: &ReferenceOptions,
) -> Result<f64> {
    validate(system, s0, t_end, sample_dt, opts).map(|r| r.h_ref)
}

/// Beyond this time the FPU slow dynamics has amplified rounding-level
/// differences past any pointwise tolerance (perturbations grow roughly
/// thirteenfold per 50 time units at `ω = 50`).
pub const PREDICTABILITY_HORIZON: f64 = 50.0;
/// Relative agreement required of a deviation statistic between `h_ref` and
/// `h_ref/2` when the run is longer than [`PREDICTABILITY_HORIZON`].
pub const STATISTIC_TOL: f64 = 0.25;

fn reference_statistic<S: OscillatorySystem + ?Sized>(
    system: &S,
    s0: &State,
    h_ref: f64,
    t_end: f64,
    quantity: Quantity,
) -> Result<f64> {
    let mut first = None;
    let mut largest = 0.0_f64;
    reference_run(system, s0, h_ref, t_end, t_end, |s| {
        let v = quantity.eval(system, s);
        let v0 = *first.get_or_insert(v);
        largest = largest.max((v - v0).abs());
    })?;
    Ok(largest)
}

/// Maximum deviation of `quantity` along a reference run on the FPU chain,
/// observed at every fine step.
///
/// The step is validated pointwise (Richardson) on `[0, min(T, 50)]`. For
/// longer runs, where no pointwise reference exists, the statistic itself must
/// agree to within 25% between `h_ref` and `h_ref/2`; the finer value is
/// returned.
pub fn reference_deviation(ell: usize, omega: f64, t_end: f64, quantity: Quantity) -> Result<f64> {
    let (system, s0) = fpu(ell, omega)?;
    let window = if t_end > PREDICTABILITY_HORIZON {
        PREDICTABILITY_HORIZON
    } else {
        t_end
    };
    let sample_dt = window / window.ceil().max(1.0);
    let h_ref = validated_reference_step(&system, &s0, window, sample_dt, &ReferenceOptions::default())?;
    // h_ref divides sample_dt; make it divide t_end as well.
    let h_ref = t_end / (t_end / h_ref - 1e-9).ceil();
    let value = reference_statistic(&system, &s0, h_ref, t_end, quantity)?;
    if t_end <= PREDICTABILITY_HORIZON {
        return Ok(value);
    }
    let finer = reference_statistic(&system, &s0, h_ref / 2.0, t_end, quantity)?;
    if (finer - value).abs() > STATISTIC_TOL * finer.abs() {
        return Err(Error::ReferenceNotConverged(format!(
            "deviation statistic changes from {value:.4} to {finer:.4} when halving h_ref = {h_ref:.3e}"
        )));
    }
    Ok(finer)
}

/// Deviation of `quantity` for one method at one `(h, ω)`; `None` when the run
/// diverged or `ω̃` does not exist.
pub fn method_deviation(
    method: &str,
    ell: usize,
    h: f64,
    omega: f64,
    t_end: f64,
    quantity: Quantity,
) -> Result<(Option<f64>, RowStatus)> {
    let spec = resolve_methods(&[method.to_string()])?.remove(0);
    Ok(deviation_point(&spec, ell, h, omega, t_end, quantity).split())
}
