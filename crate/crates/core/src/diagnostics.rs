//! Energies, consistency constants, the energy identities for methods with a
//! modified frequency, the averaged (principal modulated Fourier) system and
//! the predicted size of oscillatory-energy deviations.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::filters::{sinc, BlockScalars, MethodSpec};
use crate::systems::{OscillatorySystem, State};

/// `|sinc(hω̃)|` below this marks a resonant point in [`MfeConstants`].
pub const RESONANCE_SINC: f64 = 1e-12;
/// Finite-difference step for derivatives of the force.
pub const FORCE_FD_STEP: f64 = 1e-5;
/// Default RK4 step of the averaged system.
pub const DEFAULT_DT_AVG: f64 = 0.05;

/// Energies computed with `ω̃` in place of `ω` and `p̃ = (ω̃/ω)p` on the fast
/// block.
#[derive(Debug, Clone, PartialEq)]
pub struct ModifiedEnergies {
    pub ratio: f64,
    pub h_total: f64,
    pub stiff_total: f64,
    pub oscillatory: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    /// Total energy `H`.
    pub h_total: f64,
    /// `I_j = ½p_{1,j}² + ½ω²q_{1,j}²`.
    pub stiff: Vec<f64>,
    /// `I = Σ I_j`.
    pub stiff_total: f64,
    /// `q₁ᵀg₁(q)`.
    pub coupling: f64,
    /// `J = I − q₁ᵀg₁(q)`.
    pub oscillatory: f64,
    /// Present when the method's frequency map is not the identity.
    pub modified: Option<ModifiedEnergies>,
}

/// Energies of `s`. The modified quantities are omitted for identity
/// frequency maps and when `ω̃(h, ω)` does not exist.
pub fn energies<S: OscillatorySystem + ?Sized>(
    system: &S,
    spec: &MethodSpec,
    h: f64,
    s: &State,
) -> EnergyReport {
    let d0 = system.d_slow();
    let w = system.omega();
    let stiff: Vec<f64> = s.q[d0..]
        .iter()
        .zip(&s.p[d0..])
        .map(|(q, p)| 0.5 * p * p + 0.5 * w * w * q * q)
        .collect();
    let stiff_total: f64 = stiff.iter().sum();
    let g = system.force_vec(&s.q);
    let coupling: f64 = s.q[d0..].iter().zip(&g[d0..]).map(|(q, g)| q * g).sum();
    let potential = system.potential(&s.q);
    let slow_kinetic: f64 = 0.5 * s.p[..d0].iter().map(|v| v * v).sum::<f64>();
    let h_total = slow_kinetic + stiff_total + potential;

    let modified = if spec.freq.is_identity() || w == 0.0 {
        None
    } else {
        spec.freq.apply(h, w).map(|wt| {
            let ratio = wt / w;
            let stiff_mod = ratio * ratio * stiff_total;
            ModifiedEnergies {
                ratio,
                h_total: slow_kinetic + stiff_mod + potential,
                stiff_total: stiff_mod,
                oscillatory: stiff_mod - coupling,
            }
        })
    };
    EnergyReport {
        h_total,
        stiff,
        stiff_total,
        coupling,
        oscillatory: stiff_total - coupling,
        modified,
    }
}

/// Absolute defects of the identities
/// `H = [H̃ − ρ̃c] − ρ̃J` and `J = (ω²/ω̃²)[J̃ − ρ̃c]`, `c = q₁ᵀg₁(q)`, `ρ̃ = ω̃²/ω² − 1`.
///
/// For identity frequency maps `ρ̃ = 0` and they read `H = H̃`, `J = J̃`.
pub fn energy_identities_check<S: OscillatorySystem + ?Sized>(
    system: &S,
    spec: &MethodSpec,
    h: f64,
    s: &State,
) -> (f64, f64) {
    let e = energies(system, spec, h, s);
    let (ratio, h_mod, j_mod) = match &e.modified {
        Some(m) => (m.ratio, m.h_total, m.oscillatory),
        None => (1.0, e.h_total, e.oscillatory),
    };
    let rho_t = ratio * ratio - 1.0;
    let h_rhs = (h_mod - rho_t * e.coupling) - rho_t * e.oscillatory;
    let j_rhs = (j_mod - rho_t * e.coupling) / (ratio * ratio);
    ((e.h_total - h_rhs).abs(), (e.oscillatory - j_rhs).abs())
}

/// Modulated Fourier consistency constants of a method at `(h, ω)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MfeConstants {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// `ψ(hω̃)/sinc²(½hω̃) − 1`.
    pub rho: f64,
    /// `ω̃²/ω² − 1`.
    pub rho_tilde: f64,
    pub gamma_over_phi: f64,
    /// `|sinc(hω̃)| < 1e−12`; `alpha` is then infinite or meaningless.
    pub resonant: bool,
}

/// `α = ωψφ/(ω̃ sinc(ξ))`, `β = φ²`, `γ = ω²ψφ/(ω̃² sinc²(ξ/2))` at `ξ = hω̃`.
pub fn mfe_constants(spec: &MethodSpec, h: f64, omega: f64) -> Result<MfeConstants> {
    if !spec.is_trigonometric() {
        return Err(Error::NotTrigonometric(spec.name.clone()));
    }
    let b = BlockScalars::new(spec, h, omega)?;
    let half = sinc(0.5 * b.xi());
    let r = b.ratio;
    let resonant = b.sinc.abs() < RESONANCE_SINC;
    let mut alpha = b.psi * b.phi / (r * b.sinc);
    if !alpha.is_finite() {
        alpha = f64::INFINITY.copysign(b.psi * b.phi * b.sinc);
    }
    Ok(MfeConstants {
        alpha,
        beta: b.phi * b.phi,
        gamma: b.psi * b.phi / (r * r * half * half),
        rho: b.psi / (half * half) - 1.0,
        rho_tilde: r * r - 1.0,
        // Written without dividing by φ, which vanishes for C and G at ξ = π.
        gamma_over_phi: b.psi / (r * r * half * half),
        resonant,
    })
}

/// `max_k |series_k − series_0|`.
pub fn max_deviation(series: &[f64]) -> Result<f64> {
    let first = *series
        .first()
        .ok_or_else(|| Error::InvalidArgument("max_deviation of an empty series".into()))?;
    Ok(series.iter().fold(0.0_f64, |m, v| m.max((v - first).abs())))
}

/// One sample of the averaged system: slow position and velocity and the
/// complex amplitude `z` of the `e^{iωt}` mode.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedState {
    pub t: f64,
    pub y0: Vec<f64>,
    pub y0dot: Vec<f64>,
    pub z1: Vec<Complex64>,
}

impl AveragedState {
    /// Predicted stiff energies `I_j = 2ω²|z_j|²`.
    pub fn predicted_stiff(&self, omega: f64) -> Vec<f64> {
        self.z1.iter().map(|z| 2.0 * omega * omega * z.norm_sqr()).collect()
    }
}

// Evaluates g at (y0, x1).
fn force_at<S: OscillatorySystem + ?Sized>(system: &S, y0: &[f64], x1: &[f64]) -> Vec<f64> {
    let mut q = Vec::with_capacity(system.dim());
    q.extend_from_slice(y0);
    q.extend_from_slice(x1);
    system.force_vec(&q)
}

/// `∂g₁/∂x₁(y₀, 0)` by central differences.
pub fn fast_force_jacobian<S: OscillatorySystem + ?Sized>(system: &S, y0: &[f64]) -> DMatrix<f64> {
    let (d0, d1) = (system.d_slow(), system.d_fast());
    let mut jac = DMatrix::zeros(d1, d1);
    let mut x1 = vec![0.0; d1];
    for k in 0..d1 {
        x1[k] = FORCE_FD_STEP;
        let gp = force_at(system, y0, &x1);
        x1[k] = -FORCE_FD_STEP;
        let gm = force_at(system, y0, &x1);
        x1[k] = 0.0;
        for i in 0..d1 {
            jac[(i, k)] = (gp[d0 + i] - gm[d0 + i]) / (2.0 * FORCE_FD_STEP);
        }
    }
    jac
}

// ∂²g₀/∂x₁²(y₀, 0)[v, v] along v, by a second central difference in the
// normalized direction.
fn slow_curvature<S: OscillatorySystem + ?Sized>(system: &S, y0: &[f64], v: &[f64]) -> Vec<f64> {
    let d0 = system.d_slow();
    let n2: f64 = v.iter().map(|x| x * x).sum();
    if n2 == 0.0 {
        return vec![0.0; d0];
    }
    let n = n2.sqrt();
    let dir = |sign: f64| -> Vec<f64> { v.iter().map(|x| sign * FORCE_FD_STEP * x / n).collect() };
    let gp = force_at(system, y0, &dir(1.0));
    let gm = force_at(system, y0, &dir(-1.0));
    let g0 = force_at(system, y0, &vec![0.0; v.len()]);
    (0..d0)
        .map(|i| (gp[i] - 2.0 * g0[i] + gm[i]) / (FORCE_FD_STEP * FORCE_FD_STEP) * n2)
        .collect()
}

// Right-hand side on the packed real state [y0, y0dot, Re z, Im z].
fn averaged_rhs<S: OscillatorySystem + ?Sized>(system: &S, x: &[f64]) -> Vec<f64> {
    let (d0, d1) = (system.d_slow(), system.d_fast());
    let w = system.omega();
    let y0 = &x[..d0];
    let v0 = &x[d0..2 * d0];
    let a = &x[2 * d0..2 * d0 + d1];
    let b = &x[2 * d0 + d1..];

    let g_slow_only = force_at(system, y0, &vec![0.0; d1]);
    let x1_mean: Vec<f64> = g_slow_only[d0..].iter().map(|g| g / (w * w)).collect();
    let mean_force = force_at(system, y0, &x1_mean);
    let ca = slow_curvature(system, y0, a);
    let cb = slow_curvature(system, y0, b);

    let jac = fast_force_jacobian(system, y0);
    let av = nalgebra::DVector::from_column_slice(a);
    let bv = nalgebra::DVector::from_column_slice(b);
    let ga = &jac * av;
    let gb = &jac * bv;

    let mut out = Vec::with_capacity(x.len());
    out.extend_from_slice(v0);
    out.extend((0..d0).map(|i| mean_force[i] + ca[i] + cb[i]));
    // 2iω ż = G z  ⇒  ȧ = Gb/(2ω), ḃ = −Ga/(2ω)
    out.extend(gb.iter().map(|v| v / (2.0 * w)));
    out.extend(ga.iter().map(|v| -v / (2.0 * w)));
    out
}

fn unpack(system: &(impl OscillatorySystem + ?Sized), t: f64, x: &[f64]) -> AveragedState {
    let (d0, d1) = (system.d_slow(), system.d_fast());
    AveragedState {
        t,
        y0: x[..d0].to_vec(),
        y0dot: x[d0..2 * d0].to_vec(),
        z1: (0..d1)
            .map(|j| Complex64::new(x[2 * d0 + j], x[2 * d0 + d1 + j]))
            .collect(),
    }
}

/// Integrates the averaged system
///
/// ```text
/// ÿ₀ = g₀(y₀, ω⁻²g₁(y₀,0)) + ∂²g₀/∂x₁²(y₀,0)(z, z̄),   2iω ż = ∂g₁/∂x₁(y₀,0) z
/// ```
///
/// with classical RK4 from `y₀ = q₀`, `ẏ₀ = p₀`, `z = ½(q₁ − ip₁/ω)`, keeping
/// every `stride`-th sample. The step is `dt_avg`, shortened slightly if
/// needed so that a whole number of steps ends at `t_end`.
pub fn averaged_system_sampled<S: OscillatorySystem + ?Sized>(
    system: &S,
    s0: &State,
    t_end: f64,
    dt_avg: f64,
    stride: usize,
) -> Result<Vec<AveragedState>> {
    system.check_state(s0)?;
    if !(dt_avg > 0.0 && t_end >= dt_avg && t_end.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "averaged system needs 0 < dt_avg <= T, got dt_avg = {dt_avg}, T = {t_end}"
        )));
    }
    if stride == 0 {
        return Err(Error::InvalidArgument("stride must be at least 1".into()));
    }
    let w = system.omega();
    if !(w > 0.0) {
        return Err(Error::InvalidArgument("averaged system needs omega > 0".into()));
    }
    let d0 = system.d_slow();
    let n_steps = (t_end / dt_avg - 1e-9).ceil() as usize;
    let dt = t_end / n_steps as f64;

    let mut x: Vec<f64> = Vec::with_capacity(2 * s0.dim());
    x.extend_from_slice(&s0.q[..d0]);
    x.extend_from_slice(&s0.p[..d0]);
    x.extend(s0.q[d0..].iter().map(|q| 0.5 * q));
    x.extend(s0.p[d0..].iter().map(|p| -0.5 * p / w));

    let mut out = vec![unpack(system, s0.t, &x)];
    let axpy = |x: &[f64], k: &[f64], c: f64| -> Vec<f64> {
        x.iter().zip(k).map(|(a, b)| a + c * b).collect()
    };
    for n in 1..=n_steps {
        let k1 = averaged_rhs(system, &x);
        let k2 = averaged_rhs(system, &axpy(&x, &k1, 0.5 * dt));
        let k3 = averaged_rhs(system, &axpy(&x, &k2, 0.5 * dt));
        let k4 = averaged_rhs(system, &axpy(&x, &k3, dt));
        for i in 0..x.len() {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteState { step: n });
        }
        if n % stride == 0 || n == n_steps {
            out.push(unpack(system, s0.t + n as f64 * dt, &x));
        }
    }
    Ok(out)
}

/// [`averaged_system_sampled`] keeping every step.
pub fn averaged_system_solve<S: OscillatorySystem + ?Sized>(
    system: &S,
    s0: &State,
    t_end: f64,
    dt_avg: f64,
) -> Result<Vec<AveragedState>> {
    averaged_system_sampled(system, s0, t_end, dt_avg, 1)
}

/// Predicted envelope of `|I − 𝓘|`:
/// `max_t √(𝓘/2)·ω⁻¹·‖∂g₁/∂x₁(y₀(t),0)‖₂·(γ/φ)`.
///
/// `invariant` is the value of `I` at the initial state. With `spec = None`
/// the factor `γ/φ` is 1 (exact solution).
pub fn deviation_scale<S: OscillatorySystem + ?Sized>(
    system: &S,
    spec: Option<&MethodSpec>,
    h: f64,
    y0_path: &[Vec<f64>],
    invariant: f64,
) -> Result<f64> {
    let factor = match spec {
        Some(spec) => mfe_constants(spec, h, system.omega())?.gamma_over_phi.abs(),
        None => 1.0,
    };
    let prefactor = (invariant.max(0.0) / 2.0).sqrt() / system.omega();
    let mut largest = 0.0_f64;
    for y0 in y0_path {
        if y0.len() != system.d_slow() {
            return Err(Error::Dimension {
                expected: system.d_slow(),
                got: y0.len(),
            });
        }
        let jac = fast_force_jacobian(system, y0);
        let norm = jac.singular_values().max();
        largest = largest.max(norm);
    }
    Ok(prefactor * largest * factor)
}
