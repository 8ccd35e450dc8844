//! Acceptance suite: one test per criterion, each printing a single
//! `criterion N ... PASS|FAIL` line before asserting.
//!
//! Run with `cargo test --release -p oscibench --test acceptance -- --nocapture`
//! to see the lines as they finish.

mod common;

use std::collections::HashMap;
use std::f64::consts::PI;
use std::time::{Duration, Instant};

use oscibench::cli::output::{read_sweep_csv, sweep_table};
use oscibench::diagnostics::{energies, energy_identities_check, mfe_constants};
use oscibench::experiments::{
    averaged_crossing, convergence_ratio, exchange_series, first_crossing, global_error_study,
    loglog_slope, method_deviation, reference_deviation, resonance_sweep, uniform_grid, Quantity,
    RowStatus, SweepConfig, SweepRow, REFERENCE,
};
use oscibench::filters::{method_by_name, sinc};
use oscibench::integrator::{
    imex_direct_step, integrate, make_context, step_one, stormer_verlet_step, symplecticity_defect,
    symplecticity_defect_of, IntegrateOptions, FD_EPS,
};
use oscibench::systems::{fpu_initial_state, fpu_system, FpuChain, FpuParams, FreeOscillator, State};
use oscibench::Error;
use rand::Rng;

const ELL: usize = 3;

// Criterion 1.
const CONSTANTS_TOL: f64 = 1e-12;
const CONSTANTS_VIOLATION: f64 = 1e-3;
// Criterion 2.
const IDENTITY_TOL: f64 = 1e-11;
// Criterion 3.
const CROSS_FORM_TOL: f64 = 1e-12;
// Criterion 4.
const SYMPLECTIC_TOL: f64 = 1e-6;
const NON_SYMPLECTIC_MIN: f64 = 1e-3;
const SYMMETRY_TOL: f64 = 1e-10;
// Criterion 5.
const ROTATION_TOL: f64 = 1e-12;
const LINEAR_ENERGY_TOL: f64 = 1e-11;
// Criterion 6.
const SECOND_ORDER: (f64, f64) = (1.6, 2.4);
const FIRST_ORDER: (f64, f64) = (0.6, 1.4);
// Criterion 7.
const SPIKE_FACTOR: f64 = 10.0;
const MEDIAN_FACTOR: f64 = 3.0;
const NEAR_INTEGER: f64 = 0.1;
const REFERENCE_BRACKET: (f64, f64) = (2.0, 8.0);
// Criterion 8.
const CROSSING_TOL: f64 = 0.10;
const LATE_FACTOR: f64 = 1.5;
const AVERAGED_TOL: f64 = 0.20;
// Criterion 9.
const SLOPE: (f64, f64) = (1.7, 2.3);
const ERROR_SPIKE_FACTOR: f64 = 10.0;
// Criterion 10.
const FACTOR_TOL: f64 = 0.5;
const UNIT_RATIO_TOL: f64 = 0.3;

fn verdict(n: usize, title: &str, pass: bool, elapsed: Duration, detail: &str) {
    println!(
        "criterion {n:>2} {title:<40} {} ({:.1} s) {detail}",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    assert!(pass, "criterion {n} failed: {detail}");
}

fn fpu(omega: f64) -> (FpuChain, State) {
    let params = FpuParams::new(ELL, omega).unwrap();
    (fpu_system(params), fpu_initial_state(params))
}

fn within(v: f64, (lo, hi): (f64, f64)) -> bool {
    (lo..=hi).contains(&v)
}

#[test]
fn criterion_01_imex_is_the_consistent_method() {
    let start = Instant::now();
    let h = 0.1;
    let imex = method_by_name("IMEX").unwrap();
    let mut worst = 0.0_f64;
    for x in [0.1, 0.5, 1.0, PI, 5.0, 10.0] {
        let c = mfe_constants(&imex, h, x / h).unwrap();
        for v in [c.alpha, c.beta, c.gamma] {
            worst = worst.max((v - 1.0).abs());
        }
    }
    let mut others = Vec::new();
    let mut all_violate = true;
    for name in ["A", "B", "C", "D", "E", "G", "SV"] {
        let c = mfe_constants(&method_by_name(name).unwrap(), h, 1.0 / h).unwrap();
        let violation = [c.alpha, c.beta, c.gamma]
            .iter()
            .map(|v| (v - 1.0).abs())
            .fold(0.0, f64::max);
        all_violate &= violation >= CONSTANTS_VIOLATION;
        others.push(format!("{name}:{violation:.3}"));
    }
    let elapsed = start.elapsed();
    let pass = worst <= CONSTANTS_TOL && all_violate && elapsed < Duration::from_secs(1);
    verdict(
        1,
        "consistency constants",
        pass,
        elapsed,
        &format!("IMEX max |c-1| = {worst:.1e}; others at h*omega=1: {}", others.join(" ")),
    );
}

#[test]
fn criterion_02_energy_identities() {
    let start = Instant::now();
    let omega = 50.0;
    let h = 0.1;
    let (sys, _) = fpu(omega);
    let imex = method_by_name("IMEX").unwrap();
    let mut rng = common::rng(1);
    let mut worst = 0.0_f64;
    for _ in 0..1000 {
        let q: Vec<f64> = (0..2 * ELL)
            .map(|i| rng.random_range(-1.0..1.0) / if i < ELL { 1.0 } else { omega })
            .collect();
        let p: Vec<f64> = (0..2 * ELL).map(|_| rng.random_range(-1.5..1.5)).collect();
        let s = State::new(q, p, 0.0);
        let e = energies(&sys, &imex, h, &s);
        let (dh, dj) = energy_identities_check(&sys, &imex, h, &s);
        worst = worst.max(dh.max(dj) / e.h_total.abs());
    }
    let elapsed = start.elapsed();
    let pass = worst <= IDENTITY_TOL && elapsed < Duration::from_secs(1);
    verdict(2, "energy identities", pass, elapsed, &format!("max defect/|H| = {worst:.1e}"));
}

#[test]
fn criterion_03_cross_form_equivalence() {
    let start = Instant::now();
    let omega = 50.0;
    let (sys, s0) = fpu(omega);

    // (a) Direct linearly implicit IMEX step from consecutive one-step
    // positions, along 10⁴ steps.
    let h = 0.1;
    let ctx = make_context(&method_by_name("IMEX").unwrap(), &sys, h).unwrap();
    let traj = integrate(&ctx, &s0, 10_000, IntegrateOptions::default(), |_, _| {}).unwrap();
    let mut imex_dev = 0.0_f64;
    for n in 1..10_000 {
        let next = imex_direct_step(&sys, h, &traj.states[n - 1].q, &traj.states[n].q).unwrap();
        let reference = &traj.states[n + 1].q;
        imex_dev = imex_dev.max(common::max_abs_diff(&next, reference) / common::max_abs(reference));
    }

    // (b) SV one-step positions against velocity Verlet, step by step along a
    // Verlet trajectory, with the one-step momentum p/cos(hω̃/2) on the fast
    // block.
    let sv = method_by_name("SV").unwrap();
    let mut sv_dev = 0.0_f64;
    for x in [0.25, 0.5, 1.0, 1.5, 1.9, 1.99] {
        let h = x / omega;
        let ctx = make_context(&sv, &sys, h).unwrap();
        let scale = (0.5 * h * ctx.omega_tilde()).cos();
        let mut verlet = s0.clone();
        for _ in 0..1000 {
            let mut trig = verlet.clone();
            for p in &mut trig.p[ELL..] {
                *p /= scale;
            }
            let trig = step_one(&ctx, &trig).unwrap();
            verlet = common::verlet(&sys, h, &verlet);
            let oracle = &verlet.q;
            sv_dev = sv_dev.max(common::max_abs_diff(&trig.q, oracle) / common::max_abs(oracle));
        }
    }

    // (c) Method B against half kick, exact linear flow, half kick.
    let h = 0.03;
    let ctx = make_context(&method_by_name("B").unwrap(), &sys, h).unwrap();
    let traj = integrate(&ctx, &s0, 10_000, IntegrateOptions::default(), |_, _| {}).unwrap();
    let mut b_dev = 0.0_f64;
    for n in 0..10_000 {
        let oracle = common::kick_flow_kick(&sys, h, &traj.states[n]);
        let ours = &traj.states[n + 1];
        let scale = common::max_abs(&oracle.q).max(common::max_abs(&oracle.p));
        let d = common::max_abs_diff(&ours.q, &oracle.q).max(common::max_abs_diff(&ours.p, &oracle.p));
        b_dev = b_dev.max(d / scale);
    }

    let elapsed = start.elapsed();
    let pass = imex_dev <= CROSS_FORM_TOL
        && sv_dev <= CROSS_FORM_TOL
        && b_dev <= CROSS_FORM_TOL
        && elapsed < Duration::from_secs(5);
    verdict(
        3,
        "cross-form equivalence",
        pass,
        elapsed,
        &format!("IMEX {imex_dev:.1e}, SV {sv_dev:.1e}, B {b_dev:.1e} (relative)"),
    );
}

#[test]
fn criterion_04_symplecticity_and_symmetry() {
    let start = Instant::now();
    let omega = 50.0;
    let h = 1.5 / omega;
    let (sys, _) = fpu(omega);
    let mut rng = common::rng(4);
    let states: Vec<State> = (0..20).map(|_| common::random_state(&mut rng, 2 * ELL, 1.0)).collect();

    let mut symplectic_worst = 0.0_f64;
    for name in ["B", "C", "IMEX"] {
        let ctx = make_context(&method_by_name(name).unwrap(), &sys, h).unwrap();
        for s in &states {
            symplectic_worst = symplectic_worst.max(symplecticity_defect(&ctx, s, FD_EPS).unwrap());
        }
    }
    // SV is symplectic in the velocity-Verlet variables.
    for s in &states {
        let d = symplecticity_defect_of(|x| stormer_verlet_step(&sys, h, x), s, FD_EPS).unwrap();
        symplectic_worst = symplectic_worst.max(d);
    }
    let mut non_symplectic_least = f64::INFINITY;
    for name in ["A", "E", "G"] {
        let ctx = make_context(&method_by_name(name).unwrap(), &sys, h).unwrap();
        for s in &states {
            non_symplectic_least = non_symplectic_least.min(symplecticity_defect(&ctx, s, FD_EPS).unwrap());
        }
    }
    let mut symmetry_worst = 0.0_f64;
    for name in ["A", "B", "C", "D", "E", "G", "SV", "IMEX"] {
        let m = method_by_name(name).unwrap();
        let fwd = make_context(&m, &sys, h).unwrap();
        let bwd = make_context(&m, &sys, -h).unwrap();
        for s in &states {
            let back = step_one(&bwd, &step_one(&fwd, s).unwrap()).unwrap();
            symmetry_worst = symmetry_worst
                .max(common::max_abs_diff(&back.q, &s.q))
                .max(common::max_abs_diff(&back.p, &s.p));
        }
    }
    let elapsed = start.elapsed();
    let pass = symplectic_worst <= SYMPLECTIC_TOL
        && non_symplectic_least >= NON_SYMPLECTIC_MIN
        && symmetry_worst <= SYMMETRY_TOL
        && elapsed < Duration::from_secs(5);
    verdict(
        4,
        "symplecticity and symmetry",
        pass,
        elapsed,
        &format!(
            "B/C/IMEX/SV max {symplectic_worst:.1e}; A/E/G min {non_symplectic_least:.1e}; symmetry {symmetry_worst:.1e}"
        ),
    );
}

#[test]
fn criterion_05_exactness_and_stability() {
    let start = Instant::now();
    let omega = 50.0;
    let free = FreeOscillator { d_slow: 1, d_fast: 3, omega };
    let s0 = State::new(vec![0.7, 0.02, -0.01, 0.005], vec![-0.3, 1.0, 0.5, -0.25], 0.0);

    let mut rotation_worst = 0.0_f64;
    for x in [0.3, 1.5, 3.0] {
        let h = x / omega;
        let n = 1000;
        let t = n as f64 * h;
        let (c, sn) = ((omega * t).cos(), (omega * t).sin());
        for name in ["A", "B", "C", "D", "E", "G"] {
            let ctx = make_context(&method_by_name(name).unwrap(), &free, h).unwrap();
            let traj = integrate(&ctx, &s0, n, IntegrateOptions { stride: n, ..Default::default() }, |_, _| {}).unwrap();
            let s = traj.states.last().unwrap();
            rotation_worst = rotation_worst.max((s.q[0] - (s0.q[0] + t * s0.p[0])).abs());
            for i in 1..4 {
                let q = c * s0.q[i] + sn / omega * s0.p[i];
                let p = -omega * sn * s0.q[i] + c * s0.p[i];
                rotation_worst = rotation_worst.max((s.q[i] - q).abs()).max((s.p[i] - p).abs());
            }
        }
    }

    let h = 0.1;
    let ctx = make_context(&method_by_name("IMEX").unwrap(), &free, h).unwrap();
    let energy = |s: &State| {
        0.5 * s.p.iter().map(|v| v * v).sum::<f64>()
            + 0.5 * omega * omega * s.q[1..].iter().map(|v| v * v).sum::<f64>()
    };
    let e0 = energy(&s0);
    let mut energy_worst = 0.0_f64;
    integrate(&ctx, &s0, 10_000, IntegrateOptions::default(), |_, s| {
        energy_worst = energy_worst.max((energy(s) - e0).abs() / e0);
    })
    .unwrap();

    let (sys, fpu0) = fpu(omega);
    let h = 2.001 / omega;
    let mut s = fpu0;
    let mut blew_up = None;
    for n in 1..=10_000 {
        match stormer_verlet_step(&sys, h, &s) {
            Ok(next) => s = next,
            Err(Error::NonFiniteState { .. }) => {
                blew_up = Some(n);
                break;
            }
            Err(e) => panic!("unexpected error {e}"),
        }
    }

    let elapsed = start.elapsed();
    let pass = rotation_worst <= ROTATION_TOL
        && energy_worst <= LINEAR_ENERGY_TOL
        && blew_up.is_some()
        && elapsed < Duration::from_secs(5);
    verdict(
        5,
        "exactness and stability baselines",
        pass,
        elapsed,
        &format!(
            "rotation error {rotation_worst:.1e}; IMEX linear energy drift {energy_worst:.1e}; SV at h*omega=2.001 non-finite after {blew_up:?} steps"
        ),
    );
}

#[test]
fn criterion_06_energy_conservation_order() {
    let start = Instant::now();
    // Evenly spread, at least 0.3 away from every integer.
    let grid = [0.3, 0.4, 0.5, 0.6, 0.7, 1.3, 1.4, 1.5, 1.6, 1.7];
    let methods: Vec<String> = ["A", "B", "C", "D", "E", "G", "IMEX"].iter().map(|s| s.to_string()).collect();
    let rows = convergence_ratio(&methods, 0.02, 0.04, &grid, 200.0, ELL, 0).unwrap();
    let mut pass = true;
    let mut summary = Vec::new();
    for name in &methods {
        let band = if ["A", "D", "IMEX"].contains(&name.as_str()) { SECOND_ORDER } else { FIRST_ORDER };
        let values: Vec<f64> = rows
            .iter()
            .filter(|r| &r.method == name)
            .map(|r| r.value.unwrap_or(f64::NAN))
            .collect();
        let ok = values.len() == grid.len() && values.iter().all(|v| within(*v, band));
        pass &= ok;
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        summary.push(format!("{name}:[{lo:.2},{hi:.2}]{}", if ok { "" } else { "!" }));
    }
    verdict(6, "energy-conservation order", pass, start.elapsed(), &summary.join(" "));
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[test]
fn criterion_07_resonance_behaviour() {
    let start = Instant::now();
    let h = 0.02;
    let t_end = 200.0;
    let value = |method: &str, x: f64| {
        let (v, status) = method_deviation(method, ELL, h, PI * x / h, t_end, Quantity::OmegaI).unwrap();
        (v.unwrap_or(f64::INFINITY), status)
    };
    let (b_res, b_status) = value("B", 1.0);
    let (b_off, _) = value("B", 0.8);
    let b_ok = b_res >= SPIKE_FACTOR * b_off;

    let cfg = SweepConfig {
        methods: vec!["G".into(), "IMEX".into()],
        h,
        grid: uniform_grid(0.0, 4.5, 300).unwrap(),
        t_end,
        quantity: Quantity::OmegaI,
        ell: ELL,
        workers: 0,
    };
    let rows = resonance_sweep(&cfg).unwrap();
    let mut quiet = Vec::new();
    let mut quiet_ok = true;
    for name in ["G", "IMEX"] {
        let mine: Vec<&SweepRow> = rows.iter().filter(|r| r.method == name).collect();
        let all_ok = mine.iter().all(|r| r.status == RowStatus::Ok);
        let med = median(mine.iter().filter_map(|r| r.value).collect());
        let (worst_x, worst) = mine
            .iter()
            .filter(|r| {
                let x = r.h_omega_over_pi;
                x >= 0.5 && (x - x.round()).abs() <= NEAR_INTEGER
            })
            .map(|r| (r.h_omega_over_pi, r.value.unwrap_or(f64::INFINITY) / med))
            .fold((0.0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
        let ok = all_ok && worst <= MEDIAN_FACTOR;
        quiet_ok &= ok;
        quiet.push(format!("{name} max/median near integers {worst:.2} at x={worst_x:.3}"));
    }

    let reference = reference_deviation(ELL, 50.0, 1000.0, Quantity::OmegaI);
    let reference_ok = matches!(reference, Ok(v) if within(v, REFERENCE_BRACKET));

    let pass = b_ok && quiet_ok && reference_ok;
    verdict(
        7,
        "resonance behaviour",
        pass,
        start.elapsed(),
        &format!(
            "B {b_res:.3e} ({b_status}) at x=1.00 vs {b_off:.3} at 0.80; {}; reference omega*I deviation on [0,1000] {:?}",
            quiet.join("; "),
            reference.map(|v| (v * 1000.0).round() / 1000.0)
        ),
    );
}

#[test]
fn criterion_08_slow_exchange() {
    let start = Instant::now();
    let omega = 50.0;
    let t_end = 200.0;
    let reference = exchange_series(REFERENCE, omega, 0.01, t_end, 1, ELL).unwrap();
    let t_ref = first_crossing(&reference.rows, 0).expect("reference crosses");
    let crossing = |method: &str, h: f64| {
        let s = exchange_series(method, omega, h, t_end, 1, ELL).unwrap();
        first_crossing(&s.rows, 0)
    };
    let close = |t: Option<f64>| t.is_some_and(|t| (t - t_ref).abs() <= CROSSING_TOL * t_ref);
    let late = |t: Option<f64>| t.is_none_or(|t| t >= LATE_FACTOR * t_ref);

    let mut detail = vec![format!("reference {t_ref:.2}")];
    let mut pass = true;
    for name in ["B", "D", "IMEX"] {
        let t = crossing(name, 0.03);
        pass &= close(t);
        detail.push(format!("h=0.03 {name} {t:.2?}"));
    }
    for name in ["A", "B", "C", "D", "E", "G", "IMEX"] {
        let t = crossing(name, 0.1);
        let ok = match name {
            "B" | "IMEX" => close(t),
            "C" | "E" | "G" => late(t) && !close(t),
            _ => !close(t),
        };
        pass &= ok;
        detail.push(format!("h=0.1 {name} {t:.2?}"));
    }

    // Large-frequency case: IMEX against the averaged system.
    let big = 1e4;
    let horizon = 4e4;
    let imex = exchange_series("IMEX", big, 0.1, horizon, 1, ELL).unwrap();
    let t_imex = first_crossing(&imex.rows, 0);
    let t_avg = averaged_crossing(ELL, big, horizon, 1.0).unwrap();
    let avg_ok = match (t_imex, t_avg) {
        (Some(a), Some(b)) => (a - b).abs() <= AVERAGED_TOL * b,
        _ => false,
    };
    pass &= avg_ok;
    detail.push(format!("omega=1e4: IMEX {t_imex:.0?} vs averaged {t_avg:.0?}"));
    verdict(8, "slow energy exchange", pass, start.elapsed(), &detail.join(", "));
}

#[test]
fn criterion_09_global_error() {
    let start = Instant::now();
    let omega = 1000.0;
    let t_end = 1.0;
    let (lo, hi) = (2e-4, 5e-2);
    let resonant_h: Vec<f64> = (1..)
        .map(|k| 2.0 * PI * k as f64 / omega)
        .take_while(|h| h * 1.05 <= hi)
        .collect();
    let n_slope = 30;
    let slope_grid: Vec<f64> = (0..n_slope)
        .map(|k| lo * (hi / lo).powf(k as f64 / (n_slope - 1) as f64))
        .filter(|h| resonant_h.iter().all(|r| (h / r - 1.0).abs() > 0.05))
        .collect();
    let mut grid = slope_grid.clone();
    for r in &resonant_h {
        grid.extend([*r, 1.05 * r]);
    }
    let sv_below = 1.996e-3;
    let sv_above = 2.1e-3;
    grid.extend([sv_below, sv_above]);
    let methods: Vec<String> = ["A", "B", "E", "IMEX", "SV"].iter().map(|s| s.to_string()).collect();
    let rows = global_error_study(&methods, omega, &grid, t_end, ELL, 0).unwrap();
    let table: HashMap<(String, u64), (Option<f64>, RowStatus)> = rows
        .iter()
        .map(|r| ((r.method.clone(), r.h.to_bits()), (r.err_x0, r.status)))
        .collect();
    let get = |m: &str, h: f64| table[&(m.to_string(), h.to_bits())];

    let points: Vec<(f64, f64)> = slope_grid
        .iter()
        .filter_map(|&h| get("IMEX", h).0.map(|e| (h, e)))
        .collect();
    let slope = loglog_slope(&points).unwrap_or(f64::NAN);
    let slope_ok = points.len() == slope_grid.len() && within(slope, SLOPE);

    let mut spikes_ok = true;
    let mut spikes = Vec::new();
    for m in ["A", "B", "E"] {
        let ratios: Vec<f64> = resonant_h
            .iter()
            .map(|&h| match (get(m, h), get(m, 1.05 * h)) {
                ((Some(a), _), (Some(b), _)) => a / b,
                ((None, _), _) => f64::INFINITY,
                _ => 0.0,
            })
            .collect();
        spikes_ok &= ratios.iter().all(|r| *r >= ERROR_SPIKE_FACTOR);
        let list: Vec<String> = ratios.iter().map(|r| format!("{r:.1}")).collect();
        spikes.push(format!("{m}[{}]", list.join(",")));
    }

    let sv_ok = get("SV", sv_above).1 == RowStatus::Diverged && get("SV", sv_below).1 == RowStatus::Ok;
    let pass = slope_ok && spikes_ok && sv_ok;
    verdict(
        9,
        "global error",
        pass,
        start.elapsed(),
        &format!(
            "IMEX slope {slope:.3} over {} h; spike ratios at h*omega=2*pi*k, k=1..{}: {}; SV {} at h={sv_below}, {} at h={sv_above}",
            points.len(),
            resonant_h.len(),
            spikes.join(" "),
            get("SV", sv_below).1,
            get("SV", sv_above).1
        ),
    );
}

#[test]
fn criterion_10_deviation_factors() {
    let start = Instant::now();
    let h = 0.02;
    let x = 0.5;
    let omega = PI * x / h;
    let t_end = 200.0;
    let xi = h * omega;
    let reference = reference_deviation(ELL, omega, t_end, Quantity::OmegaI).unwrap();
    let ratio = |m: &str| {
        let (v, _) = method_deviation(m, ELL, h, omega, t_end, Quantity::OmegaI).unwrap();
        v.map_or(f64::NAN, |v| v / reference)
    };
    let cos_sq = (xi / 2.0).cos().powi(2);
    let g_factor = sinc(xi / 2.0) * (xi / 2.0).cos().powi(3);
    let mut pass = true;
    let mut detail = vec![format!("reference {reference:.3}")];
    for (m, expect) in [("C", cos_sq), ("E", cos_sq), ("G", g_factor)] {
        let r = ratio(m);
        pass &= (r / expect - 1.0).abs() <= FACTOR_TOL;
        detail.push(format!("{m} {r:.3} (expected {expect:.3})"));
    }
    for m in ["A", "D", "IMEX"] {
        let r = ratio(m);
        pass &= (r - 1.0).abs() <= UNIT_RATIO_TOL;
        detail.push(format!("{m} {r:.3}"));
    }
    verdict(10, "deviation magnitude factors", pass, start.elapsed(), &detail.join(", "));
}

#[test]
fn criterion_11_infrastructure() {
    let start = Instant::now();
    let mut rng = common::rng(11);
    let statuses = [RowStatus::Ok, RowStatus::Diverged, RowStatus::DomainError];
    let rows: Vec<SweepRow> = (0..500)
        .map(|k| {
            let status = statuses[rng.random_range(0..3)];
            SweepRow {
                method: ["A", "IMEX", "SV"][k % 3].to_string(),
                h: rng.random_range(1e-6..1.0),
                omega: rng.random_range(0.0..1e6),
                h_omega_over_pi: rng.random_range(0.0..4.5),
                value: (status == RowStatus::Ok).then(|| f64::from_bits(rng.random::<u64>() >> 2)),
                status,
            }
        })
        .collect();
    let round_trip = read_sweep_csv(&sweep_table(&rows).to_csv_string().unwrap()).unwrap() == rows;

    let csv_for = |workers: usize| {
        let cfg = SweepConfig {
            methods: vec!["A".into(), "SV".into(), "IMEX".into(), REFERENCE.into()],
            h: 0.05,
            grid: uniform_grid(0.0, 4.5, 24).unwrap(),
            t_end: 10.0,
            quantity: Quantity::TotalH,
            ell: ELL,
            workers,
        };
        sweep_table(&resonance_sweep(&cfg).unwrap()).to_csv_string().unwrap()
    };
    let deterministic = csv_for(1) == csv_for(4) && csv_for(4) == csv_for(0);

    let (sys, s0) = fpu(50.0);
    let mut fsal_identical = true;
    for name in ["A", "B", "C", "D", "E", "G", "SV", "IMEX"] {
        let ctx = make_context(&method_by_name(name).unwrap(), &sys, 0.03).unwrap();
        let run = |fsal| {
            integrate(&ctx, &s0, 2000, IntegrateOptions { fsal, ..Default::default() }, |_, _| {})
                .unwrap()
                .states
        };
        fsal_identical &= run(true) == run(false);
    }
    let elapsed = start.elapsed();
    let pass = round_trip && deterministic && fsal_identical && elapsed < Duration::from_secs(10);
    verdict(
        11,
        "infrastructure properties",
        pass,
        elapsed,
        &format!("round-trip {round_trip}, worker-independent {deterministic}, FSAL bit-identical {fsal_identical}"),
    );
}
