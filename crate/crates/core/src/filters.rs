//! Filter functions, modified-frequency maps and the built-in method registry.
//!
//! A (modified) trigonometric integrator is determined by three even filter
//! functions of `ξ = hω̃` and a map `(h, ω) ↦ ω̃`:
//!
//! * `ψ` multiplies the force in the two-step recurrence
//!   `q_{n+1} − 2cos(hΩ̃)q_n + q_{n−1} = h²Ψ g(Φq_n)`,
//! * `φ` filters the position at which the force is evaluated,
//! * `ψ₁` multiplies the force in the half-kicks of the one-step form; it is
//!   tied to `ψ` by `ψ(ξ) = (ω̃/ω)·sinc(ξ)·ψ₁(ξ)`.
//!
//! `ψ₁` is stored in closed form instead of being computed as a quotient, so
//! that genuine singularities (methods A and D at `ξ = π`) show up as large
//! values rather than as `0/0`.

use std::fmt;

use crate::error::{Error, Result};

/// Below this magnitude `sinc` switches to its Taylor polynomial.
pub const SINC_TAYLOR_THRESHOLD: f64 = 1e-4;

/// `sin(x)/x`, with the removable singularity at zero filled in.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < SINC_TAYLOR_THRESHOLD {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// An even, real-valued scalar filter `ξ ↦ f(ξ)` with `f(0) = 1`.
#[derive(Clone, Copy)]
pub struct FilterFunction {
    formula: &'static str,
    eval: fn(f64) -> f64,
}

impl FilterFunction {
    pub const fn new(formula: &'static str, eval: fn(f64) -> f64) -> Self {
        FilterFunction { formula, eval }
    }

    #[inline]
    pub fn eval(&self, xi: f64) -> f64 {
        (self.eval)(xi)
    }

    /// Human-readable closed form, e.g. `"sinc(ξ)^2"`.
    pub fn formula(&self) -> &'static str {
        self.formula
    }
}

impl fmt::Debug for FilterFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FilterFunction({})", self.formula)
    }
}

/// The relation defining the modified frequency `ω̃` from `(h, ω)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrequencyMap {
    /// `ω̃ = ω` (standard trigonometric integrators).
    Identity,
    /// `sin(hω̃/2) = hω/2`; Störmer/Verlet. Solvable only for `|h|ω ≤ 2`.
    HalfAngleSine,
    /// `tan(hω̃/2) = hω/2`; the IMEX method. Solvable for every `(h, ω)`.
    HalfAngleTangent,
}

impl FrequencyMap {
    /// Whether `ω̃(h, ω)` exists (principal branch).
    pub fn in_domain(&self, h: f64, omega: f64) -> bool {
        if !(h.is_finite() && omega.is_finite()) || h == 0.0 || omega < 0.0 {
            return false;
        }
        match self {
            FrequencyMap::HalfAngleSine => 0.5 * (h * omega).abs() <= 1.0,
            FrequencyMap::Identity | FrequencyMap::HalfAngleTangent => true,
        }
    }

    /// Evaluates `ω̃`, or `None` outside the domain. Even in `h`.
    pub fn apply(&self, h: f64, omega: f64) -> Option<f64> {
        if !self.in_domain(h, omega) {
            return None;
        }
        if omega == 0.0 {
            return Some(0.0);
        }
        let half = 0.5 * h * omega;
        Some(match self {
            FrequencyMap::Identity => omega,
            FrequencyMap::HalfAngleSine => 2.0 * half.asin() / h,
            FrequencyMap::HalfAngleTangent => 2.0 * half.atan() / h,
        })
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, FrequencyMap::Identity)
    }
}

/// How a [`MethodSpec`] is stepped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodKind {
    /// One-step (modified) trigonometric scheme driven by the filters.
    Trigonometric,
    /// Marker dispatched to the nonlinear implicit midpoint baseline.
    ImplicitMidpoint,
}

/// A named integrator: filters `ψ, φ, ψ₁` plus a modified-frequency map.
#[derive(Debug, Clone)]
pub struct MethodSpec {
    pub name: String,
    pub psi: FilterFunction,
    pub phi: FilterFunction,
    pub psi1: FilterFunction,
    pub freq: FrequencyMap,
    /// Whether the underlying method is symplectic. For `SV` this holds for the
    /// velocity-Verlet momentum, not for the momentum of the one-step form.
    pub symplectic: bool,
    pub kind: MethodKind,
}

impl MethodSpec {
    pub fn is_trigonometric(&self) -> bool {
        self.kind == MethodKind::Trigonometric
    }
}

fn one(_: f64) -> f64 {
    1.0
}

fn sinc_sq(x: f64) -> f64 {
    let s = sinc(x);
    s * s
}

fn sinc_cubed(x: f64) -> f64 {
    let s = sinc(x);
    s * s * s
}

fn sinc_sq_half(x: f64) -> f64 {
    let s = sinc(0.5 * x);
    s * s
}

// tan(ξ/2)/(ξ/2), written so that ξ = 0 needs no special case.
fn tan_half_over_half(x: f64) -> f64 {
    sinc(0.5 * x) / (0.5 * x).cos()
}

fn corrected_sinc_phi(x: f64) -> f64 {
    let s = (0.5 * x).sin();
    sinc(x) * (1.0 + s * s / 3.0)
}

fn cos_sq_half(x: f64) -> f64 {
    let c = (0.5 * x).cos();
    c * c
}

fn sec_half(x: f64) -> f64 {
    1.0 / (0.5 * x).cos()
}

const ONE: FilterFunction = FilterFunction::new("1", one);
const SINC: FilterFunction = FilterFunction::new("sinc(ξ)", sinc);
const SINC_SQ: FilterFunction = FilterFunction::new("sinc(ξ)^2", sinc_sq);
const SINC_CUBED: FilterFunction = FilterFunction::new("sinc(ξ)^3", sinc_cubed);
const SINC_SQ_HALF: FilterFunction = FilterFunction::new("sinc(ξ/2)^2", sinc_sq_half);
const TAN_HALF: FilterFunction = FilterFunction::new("tan(ξ/2)/(ξ/2)", tan_half_over_half);
const HL_PHI: FilterFunction =
    FilterFunction::new("sinc(ξ)(1 + sin(ξ/2)^2/3)", corrected_sinc_phi);
const COS_SQ_HALF: FilterFunction = FilterFunction::new("cos(ξ/2)^2", cos_sq_half);
const SEC_HALF: FilterFunction = FilterFunction::new("1/cos(ξ/2)", sec_half);

fn trig(
    name: &str,
    psi: FilterFunction,
    phi: FilterFunction,
    psi1: FilterFunction,
    freq: FrequencyMap,
    symplectic: bool,
) -> MethodSpec {
    MethodSpec {
        name: name.to_string(),
        psi,
        phi,
        psi1,
        freq,
        symplectic,
        kind: MethodKind::Trigonometric,
    }
}

/// Stable CLI-facing method identifiers, in registry order.
pub const METHOD_NAMES: [&str; 9] = ["A", "B", "C", "D", "E", "G", "SV", "IMEX", "MIDPOINT"];

/// The nine built-in methods: A–E and G (standard trigonometric), SV, IMEX and
/// the MIDPOINT baseline marker.
pub fn builtin_methods() -> Vec<MethodSpec> {
    use FrequencyMap::*;
    vec![
        trig("A", SINC_SQ_HALF, ONE, TAN_HALF, Identity, false),
        trig("B", SINC, ONE, ONE, Identity, true),
        trig("C", SINC_SQ, SINC, SINC, Identity, true),
        trig("D", SINC_SQ_HALF, HL_PHI, TAN_HALF, Identity, false),
        trig("E", SINC_SQ, ONE, SINC, Identity, false),
        trig("G", SINC_CUBED, SINC, SINC_SQ, Identity, false),
        // ψ = 1 gives the Störmer/Verlet positions; with sin(ξ/2) = hω/2 the
        // factor (ω̃/ω)sinc(ξ) equals cos(ξ/2), hence ψ₁ = sec(ξ/2).
        trig("SV", ONE, ONE, SEC_HALF, HalfAngleSine, true),
        trig("IMEX", COS_SQ_HALF, ONE, ONE, HalfAngleTangent, true),
        MethodSpec {
            name: "MIDPOINT".to_string(),
            psi: ONE,
            phi: ONE,
            psi1: ONE,
            freq: Identity,
            symplectic: true,
            kind: MethodKind::ImplicitMidpoint,
        },
    ]
}

/// Case-insensitive registry lookup.
pub fn method_by_name(name: &str) -> Result<MethodSpec> {
    builtin_methods()
        .into_iter()
        .find(|m| m.name.eq_ignore_ascii_case(name.trim()))
        .ok_or_else(|| Error::UnknownMethod(name.to_string()))
}

/// `ω̃` for `spec` at `(h, ω)`.
pub fn modified_frequency(spec: &MethodSpec, h: f64, omega: f64) -> Result<f64> {
    spec.freq.apply(h, omega).ok_or_else(|| Error::Domain {
        method: spec.name.clone(),
        h,
        omega,
        reason: if h == 0.0 || !h.is_finite() {
            "step size must be finite and nonzero"
        } else {
            "sin(h*omega_tilde/2) = h*omega/2 has no solution"
        },
    })
}

/// Filter and rotation scalars of one frequency block, evaluated at `ξ = hω̃`.
///
/// The slow block (`ω = 0`) uses the limits `ω̃/ω → 1`, `sinc(0) = 1` and
/// unit filters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockScalars {
    pub h: f64,
    pub omega: f64,
    pub omega_tilde: f64,
    /// `ω̃/ω`, or 1 on the slow block.
    pub ratio: f64,
    pub cos: f64,
    pub sin: f64,
    pub sinc: f64,
    pub psi: f64,
    pub phi: f64,
    pub psi1: f64,
}

impl BlockScalars {
    pub fn slow(h: f64) -> Self {
        BlockScalars {
            h,
            omega: 0.0,
            omega_tilde: 0.0,
            ratio: 1.0,
            cos: 1.0,
            sin: 0.0,
            sinc: 1.0,
            psi: 1.0,
            phi: 1.0,
            psi1: 1.0,
        }
    }

    /// Evaluates all scalars for `spec`; fails outside the frequency map's
    /// domain or when a filter is not finite at `hω̃`.
    pub fn new(spec: &MethodSpec, h: f64, omega: f64) -> Result<Self> {
        let omega_tilde = modified_frequency(spec, h, omega)?;
        if omega == 0.0 {
            return Ok(Self::slow(h));
        }
        let xi = h * omega_tilde;
        let scalars = BlockScalars {
            h,
            omega,
            omega_tilde,
            ratio: omega_tilde / omega,
            cos: xi.cos(),
            sin: xi.sin(),
            sinc: sinc(xi),
            psi: spec.psi.eval(xi),
            phi: spec.phi.eval(xi),
            psi1: spec.psi1.eval(xi),
        };
        let values = [scalars.psi, scalars.phi, scalars.psi1, scalars.ratio];
        if values.iter().all(|v| v.is_finite()) {
            Ok(scalars)
        } else {
            Err(Error::Domain {
                method: spec.name.clone(),
                h,
                omega,
                reason: "filter value is not finite at h*omega_tilde",
            })
        }
    }

    /// `ξ = hω̃`.
    pub fn xi(&self) -> f64 {
        self.h * self.omega_tilde
    }

    /// Position coefficient of the momentum in the rotation, `h(ω̃/ω)sinc(hω̃)`.
    pub fn drift(&self) -> f64 {
        self.h * self.ratio * self.sinc
    }

    /// Momentum coefficient of the position in the rotation, `−ω sin(hω̃)`.
    pub fn kick(&self) -> f64 {
        -self.omega * self.sin
    }

    /// Two-step force factor `Ψ = (ω̃/ω)sinc(hω̃)ψ₁(hω̃)`.
    pub fn two_step_psi(&self) -> f64 {
        self.ratio * self.sinc * self.psi1
    }
}
