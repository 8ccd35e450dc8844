//! Time-stepping kernels.
//!
//! The central scheme is the symmetric one-step (modified) trigonometric
//! method
//!
//! ```text
//! p⁺      = p_n + ½h Ψ₁ g(Φq_n)
//! q_{n+1} = cos(hΩ̃) q_n + hΩ⁻¹Ω̃ sinc(hΩ̃) p⁺
//! p⁻      = −Ω sin(hΩ̃) q_n + cos(hΩ̃) p⁺
//! p_{n+1} = p⁻ + ½h Ψ₁ g(Φq_{n+1})
//! ```
//!
//! whose positions satisfy `q_{n+1} − 2cos(hΩ̃)q_n + q_{n−1} = h²Ψ g(Φq_n)`.
//! All matrices are diagonal with one value per block, so every update is a
//! componentwise scalar operation.
//!
//! Baselines: velocity Verlet, the implicit midpoint rule (damped Newton),
//! and the IMEX method in its direct, linearly implicit two-step form.

use nalgebra::{DMatrix, DVector};

use crate::diagnostics::{energies, EnergyReport};
use crate::error::{Error, Result};
use crate::filters::{BlockScalars, MethodKind, MethodSpec};
use crate::systems::{OscillatorySystem, State};

/// Momentum recovery refuses when `|sinc(hω̃)|` is at or below this value.
pub const RECOVERY_SINC_THRESHOLD: f64 = 1e-8;
/// Default Newton tolerance for the implicit midpoint rule.
pub const MIDPOINT_TOL: f64 = 1e-12;
pub const MIDPOINT_MAX_ITER: usize = 25;
/// Default finite-difference step for Jacobian checks.
pub const FD_EPS: f64 = 1e-6;

/// Per-block scalars of one method at one step size, evaluated once.
#[derive(Debug, Clone)]
pub struct StepperContext<'a, S: OscillatorySystem + ?Sized> {
    pub spec: MethodSpec,
    pub system: &'a S,
    pub h: f64,
    pub slow: BlockScalars,
    pub fast: BlockScalars,
}

impl<S: OscillatorySystem + ?Sized> StepperContext<'_, S> {
    #[inline]
    fn block(&self, i: usize) -> &BlockScalars {
        if i < self.system.d_slow() {
            &self.slow
        } else {
            &self.fast
        }
    }

    pub fn omega_tilde(&self) -> f64 {
        self.fast.omega_tilde
    }
}

/// Precomputes the block scalars of `spec` for `system` at step `h`.
///
/// `h` may be negative (backward stepping); it must be finite and nonzero.
pub fn make_context<'a, S: OscillatorySystem + ?Sized>(
    spec: &MethodSpec,
    system: &'a S,
    h: f64,
) -> Result<StepperContext<'a, S>> {
    let fast = BlockScalars::new(spec, h, system.omega())?;
    Ok(StepperContext {
        spec: spec.clone(),
        system,
        h,
        slow: BlockScalars::slow(h),
        fast,
    })
}

/// One-step trigonometric stepper with optional FSAL force caching.
///
/// With caching, the force evaluated in the closing half-kick is reused as
/// the opening half-kick of the next step, so each step costs one force
/// evaluation. The cache is keyed on the state it was computed for; stepping a
/// different state recomputes.
pub struct TrigStepper<'c, 'a, S: OscillatorySystem + ?Sized> {
    ctx: &'c StepperContext<'a, S>,
    fsal: bool,
    filtered: Vec<f64>,
    force: Vec<f64>,
    cached_for: Option<Vec<f64>>,
    evaluations: usize,
}

impl<'c, 'a, S: OscillatorySystem + ?Sized> TrigStepper<'c, 'a, S> {
    pub fn new(ctx: &'c StepperContext<'a, S>, fsal: bool) -> Self {
        let d = ctx.system.dim();
        TrigStepper {
            ctx,
            fsal,
            filtered: vec![0.0; d],
            force: vec![0.0; d],
            cached_for: None,
            evaluations: 0,
        }
    }

    /// Number of force evaluations so far.
    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    // force ← g(Φq)
    fn eval_force(&mut self, q: &[f64]) {
        let ctx = self.ctx;
        for (i, (f, x)) in self.filtered.iter_mut().zip(q).enumerate() {
            *f = ctx.block(i).phi * x;
        }
        ctx.system.force(&self.filtered, &mut self.force);
        self.evaluations += 1;
    }

    fn half_kick(&self, p: &mut [f64]) {
        let ctx = self.ctx;
        let half_h = 0.5 * ctx.h;
        for (i, (pi, gi)) in p.iter_mut().zip(&self.force).enumerate() {
            *pi += half_h * ctx.block(i).psi1 * gi;
        }
    }

    /// Advances `s` in place by one step; `s.t` is incremented by `h`.
    pub fn advance(&mut self, s: &mut State) {
        let reuse = self.fsal && self.cached_for.as_deref() == Some(&s.q[..]);
        if !reuse {
            self.eval_force(&s.q);
        }
        self.half_kick(&mut s.p);
        let ctx = self.ctx;
        for i in 0..s.q.len() {
            let b = ctx.block(i);
            let (q, p) = (s.q[i], s.p[i]);
            s.q[i] = b.cos * q + b.drift() * p;
            s.p[i] = b.kick() * q + b.cos * p;
        }
        self.eval_force(&s.q);
        self.half_kick(&mut s.p);
        s.t += ctx.h;
        if self.fsal {
            match &mut self.cached_for {
                Some(c) => c.copy_from_slice(&s.q),
                None => self.cached_for = Some(s.q.clone()),
            }
        }
    }
}

fn ensure_finite(s: &State, step: usize) -> Result<()> {
    if s.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteState { step })
    }
}

/// One step of the (modified) trigonometric method without force caching.
pub fn step_one<S: OscillatorySystem + ?Sized>(
    ctx: &StepperContext<'_, S>,
    s: &State,
) -> Result<State> {
    ctx.system.check_state(s)?;
    let mut next = s.clone();
    TrigStepper::new(ctx, false).advance(&mut next);
    ensure_finite(&next, 1)?;
    Ok(next)
}

/// Two-step form: `q_{n+1} = 2cos(hΩ̃)q_n − q_{n−1} + h²Ψ g(Φq_n)`.
pub fn step_two_term<S: OscillatorySystem + ?Sized>(
    ctx: &StepperContext<'_, S>,
    q_prev: &[f64],
    q_curr: &[f64],
) -> Result<Vec<f64>> {
    let d = ctx.system.dim();
    for len in [q_prev.len(), q_curr.len()] {
        if len != d {
            return Err(Error::Dimension { expected: d, got: len });
        }
    }
    let filtered: Vec<f64> = (0..d).map(|i| ctx.block(i).phi * q_curr[i]).collect();
    let g = ctx.system.force_vec(&filtered);
    let h2 = ctx.h * ctx.h;
    let next: Vec<f64> = (0..d)
        .map(|i| {
            let b = ctx.block(i);
            2.0 * b.cos * q_curr[i] - q_prev[i] + h2 * b.two_step_psi() * g[i]
        })
        .collect();
    if next.iter().all(|v| v.is_finite()) {
        Ok(next)
    } else {
        Err(Error::NonFiniteState { step: 1 })
    }
}

/// Recovers `p_n` from `Ω⁻¹Ω̃ sinc(hΩ̃) p_n = (q_{n+1} − q_{n−1})/(2h)`.
pub fn recover_momentum<S: OscillatorySystem + ?Sized>(
    ctx: &StepperContext<'_, S>,
    q_prev: &[f64],
    q_next: &[f64],
) -> Result<Vec<f64>> {
    if ctx.fast.sinc.abs() <= RECOVERY_SINC_THRESHOLD && ctx.system.d_fast() > 0 {
        return Err(Error::NearResonance {
            sinc: ctx.fast.sinc,
        });
    }
    let d = ctx.system.dim();
    if q_prev.len() != d || q_next.len() != d {
        return Err(Error::Dimension {
            expected: d,
            got: q_prev.len().min(q_next.len()),
        });
    }
    Ok((0..d)
        .map(|i| {
            let b = ctx.block(i);
            (q_next[i] - q_prev[i]) / (2.0 * ctx.h) / (b.ratio * b.sinc)
        })
        .collect())
}

/// IMEX in its direct form
/// `(q_{n+1} − 2q_n + q_{n−1}) + (½hΩ)²(q_{n+1} + 2q_n + q_{n−1}) = h²g(q_n)`,
/// solved componentwise since `Ω` is diagonal.
pub fn imex_direct_step<S: OscillatorySystem + ?Sized>(
    system: &S,
    h: f64,
    q_prev: &[f64],
    q_curr: &[f64],
) -> Result<Vec<f64>> {
    let d = system.dim();
    for len in [q_prev.len(), q_curr.len()] {
        if len != d {
            return Err(Error::Dimension { expected: d, got: len });
        }
    }
    let g = system.force_vec(q_curr);
    let a_fast = (0.5 * h * system.omega()).powi(2);
    let h2 = h * h;
    let next: Vec<f64> = (0..d)
        .map(|i| {
            let a = if i < system.d_slow() { 0.0 } else { a_fast };
            let rhs = 2.0 * q_curr[i] - q_prev[i] - a * (2.0 * q_curr[i] + q_prev[i]) + h2 * g[i];
            rhs / (1.0 + a)
        })
        .collect();
    if next.iter().all(|v| v.is_finite()) {
        Ok(next)
    } else {
        Err(Error::NonFiniteState { step: 1 })
    }
}

// −Ω²q + g(q), written into `out`.
fn full_force<S: OscillatorySystem + ?Sized>(system: &S, q: &[f64], out: &mut [f64]) {
    system.force(q, out);
    let w2 = system.omega() * system.omega();
    for (o, x) in out[system.d_slow()..].iter_mut().zip(&q[system.d_slow()..]) {
        *o -= w2 * x;
    }
}

/// Velocity Verlet (kick–drift–kick) for the full force `−Ω²q + g(q)`.
pub fn stormer_verlet_step<S: OscillatorySystem + ?Sized>(
    system: &S,
    h: f64,
    s: &State,
) -> Result<State> {
    system.check_state(s)?;
    let mut next = s.clone();
    let mut f = vec![0.0; s.dim()];
    verlet_in_place(system, h, &mut next, &mut f, false);
    ensure_finite(&next, 1)?;
    Ok(next)
}

// `f` holds the full force at `s.q` when `f_valid`; on return it holds the
// force at the new position.
pub(crate) fn verlet_in_place<S: OscillatorySystem + ?Sized>(
    system: &S,
    h: f64,
    s: &mut State,
    f: &mut [f64],
    f_valid: bool,
) {
    if !f_valid {
        full_force(system, &s.q, f);
    }
    let half_h = 0.5 * h;
    for ((q, p), fi) in s.q.iter_mut().zip(s.p.iter_mut()).zip(f.iter()) {
        *p += half_h * fi;
        *q += h * *p;
    }
    full_force(system, &s.q, f);
    for (p, fi) in s.p.iter_mut().zip(f.iter()) {
        *p += half_h * fi;
    }
    s.t += h;
}

/// Result of one implicit midpoint step.
#[derive(Debug, Clone, PartialEq)]
pub struct MidpointStep {
    pub state: State,
    /// Newton updates performed.
    pub iterations: usize,
}

/// Implicit midpoint rule. The midpoint `m = (q_n + q_{n+1})/2` solves
/// `m = q_n + ½hp_n + ¼h²F(m)` with `F(q) = −Ω²q + g(q)`; this is done by
/// damped Newton with a finite-difference Jacobian of `g`.
pub fn implicit_midpoint_step<S: OscillatorySystem + ?Sized>(
    system: &S,
    h: f64,
    s: &State,
    tol: f64,
    max_iter: usize,
) -> Result<MidpointStep> {
    system.check_state(s)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let d = s.dim();
    let c = 0.25 * h * h;
    let anchor: Vec<f64> = (0..d).map(|i| s.q[i] + 0.5 * h * s.p[i]).collect();
    let mut f = vec![0.0; d];
    let residual = |m: &[f64], f: &mut [f64]| -> Vec<f64> {
        full_force(system, m, f);
        (0..d).map(|i| m[i] - anchor[i] - c * f[i]).collect()
    };
    let norm = |v: &[f64]| v.iter().fold(0.0_f64, |a, x| a.max(x.abs()));

    let mut m = anchor.clone();
    let mut r = residual(&m, &mut f);
    let mut iterations = 0;
    while norm(&r) > tol * (1.0 + norm(&m)) {
        if iterations == max_iter || !norm(&r).is_finite() {
            return Err(Error::NoConvergence { max_iter });
        }
        let jac = midpoint_jacobian(system, &m, c);
        let Some(delta) = jac.lu().solve(&DVector::from_column_slice(&r)) else {
            return Err(Error::NoConvergence { max_iter });
        };
        // Backtracking on the residual norm.
        let r_norm = norm(&r);
        let mut lambda = 1.0;
        loop {
            let trial: Vec<f64> = (0..d).map(|i| m[i] - lambda * delta[i]).collect();
            let r_trial = residual(&trial, &mut f);
            if norm(&r_trial) < r_norm || lambda < 1e-4 {
                m = trial;
                r = r_trial;
                break;
            }
            lambda *= 0.5;
        }
        iterations += 1;
    }
    full_force(system, &m, &mut f);
    let q: Vec<f64> = (0..d).map(|i| 2.0 * m[i] - s.q[i]).collect();
    let p: Vec<f64> = (0..d).map(|i| s.p[i] + h * f[i]).collect();
    let state = State::new(q, p, s.t + h);
    ensure_finite(&state, 1)?;
    Ok(MidpointStep { state, iterations })
}

// I − c(−Ω² + Dg(m)), with Dg by central differences.
fn midpoint_jacobian<S: OscillatorySystem + ?Sized>(system: &S, m: &[f64], c: f64) -> DMatrix<f64> {
    let d = m.len();
    let w2 = system.omega() * system.omega();
    let mut jac = DMatrix::<f64>::identity(d, d);
    let mut x = m.to_vec();
    let (mut gp, mut gm) = (vec![0.0; d], vec![0.0; d]);
    for k in 0..d {
        let delta = 1e-6 * (1.0 + m[k].abs());
        x[k] = m[k] + delta;
        system.force(&x, &mut gp);
        x[k] = m[k] - delta;
        system.force(&x, &mut gm);
        x[k] = m[k];
        for i in 0..d {
            jac[(i, k)] -= c * (gp[i] - gm[i]) / (2.0 * delta);
        }
        if k >= system.d_slow() {
            jac[(k, k)] += c * w2;
        }
    }
    jac
}

/// `‖MᵀΣM − Σ‖_∞` for the Jacobian `M` of `map` at `s`, by central differences.
pub fn symplecticity_defect_of(
    map: impl Fn(&State) -> Result<State>,
    s: &State,
    fd_eps: f64,
) -> Result<f64> {
    let d = s.dim();
    let n = 2 * d;
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        let shifted = |sign: f64| {
            let mut x = s.clone();
            if k < d {
                x.q[k] += sign * fd_eps;
            } else {
                x.p[k - d] += sign * fd_eps;
            }
            map(&x)
        };
        let (plus, minus) = (shifted(1.0)?, shifted(-1.0)?);
        for i in 0..d {
            jac[(i, k)] = (plus.q[i] - minus.q[i]) / (2.0 * fd_eps);
            jac[(d + i, k)] = (plus.p[i] - minus.p[i]) / (2.0 * fd_eps);
        }
    }
    let mut sigma = DMatrix::<f64>::zeros(n, n);
    for i in 0..d {
        sigma[(i, d + i)] = 1.0;
        sigma[(d + i, i)] = -1.0;
    }
    let defect = jac.transpose() * &sigma * &jac - &sigma;
    Ok(defect
        .row_iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max))
}

/// Symplecticity defect of [`step_one`] for `ctx`.
pub fn symplecticity_defect<S: OscillatorySystem + ?Sized>(
    ctx: &StepperContext<'_, S>,
    s: &State,
    fd_eps: f64,
) -> Result<f64> {
    symplecticity_defect_of(|x| step_one(ctx, x), s, fd_eps)
}

/// Sampled states of a run; `energies` is filled when requested.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub states: Vec<State>,
    pub energies: Vec<EnergyReport>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IntegrateOptions {
    pub stride: usize,
    pub fsal: bool,
    pub record_energies: bool,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions {
            stride: 1,
            fsal: true,
            record_energies: false,
        }
    }
}

/// Steps any registry method (trigonometric or the MIDPOINT baseline) one
/// step at a time. Times are `t₀ + n·h`, not accumulated sums.
pub struct Propagator<'c, 'a, S: OscillatorySystem + ?Sized> {
    ctx: &'c StepperContext<'a, S>,
    trig: TrigStepper<'c, 'a, S>,
    t0: f64,
    steps: usize,
}

impl<'c, 'a, S: OscillatorySystem + ?Sized> Propagator<'c, 'a, S> {
    pub fn new(ctx: &'c StepperContext<'a, S>, t0: f64, fsal: bool) -> Self {
        Propagator {
            ctx,
            trig: TrigStepper::new(ctx, fsal),
            t0,
            steps: 0,
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn advance(&mut self, s: &mut State) -> Result<()> {
        match self.ctx.spec.kind {
            MethodKind::Trigonometric => self.trig.advance(s),
            MethodKind::ImplicitMidpoint => {
                let next = implicit_midpoint_step(
                    self.ctx.system,
                    self.ctx.h,
                    s,
                    MIDPOINT_TOL,
                    MIDPOINT_MAX_ITER,
                )?;
                *s = next.state;
            }
        }
        self.steps += 1;
        s.t = self.t0 + self.steps as f64 * self.ctx.h;
        ensure_finite(s, self.steps)
    }
}

/// Integrates `n_steps` steps from `s0`, sampling (and calling `observer`)
/// at step 0 and every `stride` steps.
pub fn integrate<S: OscillatorySystem + ?Sized>(
    ctx: &StepperContext<'_, S>,
    s0: &State,
    n_steps: usize,
    options: IntegrateOptions,
    mut observer: impl FnMut(usize, &State),
) -> Result<Trajectory> {
    if options.stride == 0 {
        return Err(Error::InvalidArgument("stride must be at least 1".into()));
    }
    ctx.system.check_state(s0)?;
    let mut traj = Trajectory::default();
    let mut record = |n: usize, s: &State, traj: &mut Trajectory| {
        observer(n, s);
        if options.record_energies {
            traj.energies.push(energies(ctx.system, &ctx.spec, ctx.h, s));
        }
        traj.states.push(s.clone());
    };
    let mut s = s0.clone();
    record(0, &s, &mut traj);
    let mut prop = Propagator::new(ctx, s0.t, options.fsal);
    for n in 1..=n_steps {
        prop.advance(&mut s)?;
        if n % options.stride == 0 {
            record(n, &s, &mut traj);
        }
    }
    Ok(traj)
}
