//! Highly oscillatory systems `q̈ + Ω²q = g(q)` with `Ω = diag(0, ωI)`, and the
//! Fermi–Pasta–Ulam chain in the coordinates that put it into this form.

use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{Error, Result};

/// Phase-space point. Positions and momenta are laid out as
/// `(slow block, fast block)`.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub t: f64,
}

impl State {
    pub fn new(q: Vec<f64>, p: Vec<f64>, t: f64) -> Self {
        State { q, p, t }
    }

    pub fn zeros(dim: usize) -> Self {
        State::new(vec![0.0; dim], vec![0.0; dim], 0.0)
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    /// True when every entry is finite and `‖q‖² + ‖p‖²` does not overflow.
    pub fn is_finite(&self) -> bool {
        let norm_sq: f64 = self.q.iter().chain(&self.p).map(|v| v * v).sum();
        norm_sq.is_finite()
    }

    pub fn max_abs(&self) -> f64 {
        self.q
            .iter()
            .chain(&self.p)
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// A system `q̈ + Ω²q = g(q)`, `g = −∇U`, where `Ω` acts with frequency
/// [`omega`](Self::omega) on the last [`d_fast`](Self::d_fast) coordinates.
pub trait OscillatorySystem: Sync {
    fn d_slow(&self) -> usize;
    fn d_fast(&self) -> usize;
    fn omega(&self) -> f64;

    /// Writes `g(q)` into `out`.
    fn force(&self, q: &[f64], out: &mut [f64]);

    fn potential(&self, q: &[f64]) -> f64;

    fn dim(&self) -> usize {
        self.d_slow() + self.d_fast()
    }

    fn force_vec(&self, q: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.force(q, &mut g);
        g
    }

    /// `H = ½‖p‖² + ½‖Ωq‖² + U(q)`.
    fn hamiltonian(&self, q: &[f64], p: &[f64]) -> f64 {
        let w = self.omega();
        let kinetic: f64 = p.iter().map(|v| v * v).sum::<f64>();
        let stiff: f64 = q[self.d_slow()..].iter().map(|v| v * v).sum::<f64>();
        0.5 * kinetic + 0.5 * w * w * stiff + self.potential(q)
    }

    fn check_state(&self, s: &State) -> Result<()> {
        for len in [s.q.len(), s.p.len()] {
            if len != self.dim() {
                return Err(Error::Dimension {
                    expected: self.dim(),
                    got: len,
                });
            }
        }
        Ok(())
    }
}

impl<S: OscillatorySystem + ?Sized> OscillatorySystem for &S {
    fn d_slow(&self) -> usize {
        (**self).d_slow()
    }
    fn d_fast(&self) -> usize {
        (**self).d_fast()
    }
    fn omega(&self) -> f64 {
        (**self).omega()
    }
    fn force(&self, q: &[f64], out: &mut [f64]) {
        (**self).force(q, out)
    }
    fn potential(&self, q: &[f64]) -> f64 {
        (**self).potential(q)
    }
}

/// Harmonic oscillators with no nonlinear force (`g ≡ 0`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreeOscillator {
    pub d_slow: usize,
    pub d_fast: usize,
    pub omega: f64,
}

impl OscillatorySystem for FreeOscillator {
    fn d_slow(&self) -> usize {
        self.d_slow
    }
    fn d_fast(&self) -> usize {
        self.d_fast
    }
    fn omega(&self) -> f64 {
        self.omega
    }
    fn force(&self, _q: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn potential(&self, _q: &[f64]) -> f64 {
        0.0
    }
}

type ForceFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;
type PotentialFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// A system assembled from user-supplied force and potential callables.
pub struct CustomSystem {
    d_slow: usize,
    d_fast: usize,
    omega: f64,
    force: Box<ForceFn>,
    potential: Box<PotentialFn>,
}

impl CustomSystem {
    pub fn new(
        d_slow: usize,
        d_fast: usize,
        omega: f64,
        force: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        potential: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        CustomSystem {
            d_slow,
            d_fast,
            omega,
            force: Box::new(force),
            potential: Box::new(potential),
        }
    }
}

impl OscillatorySystem for CustomSystem {
    fn d_slow(&self) -> usize {
        self.d_slow
    }
    fn d_fast(&self) -> usize {
        self.d_fast
    }
    fn omega(&self) -> f64 {
        self.omega
    }
    fn force(&self, q: &[f64], out: &mut [f64]) {
        (self.force)(q, out)
    }
    fn potential(&self, q: &[f64]) -> f64 {
        (self.potential)(q)
    }
}

/// Parameters of the FPU chain: `ell` stiff springs of frequency `omega`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FpuParams {
    pub ell: usize,
    pub omega: f64,
}

impl FpuParams {
    pub fn new(ell: usize, omega: f64) -> Result<Self> {
        if ell == 0 {
            return Err(Error::InvalidArgument("FPU chain needs ell >= 1".into()));
        }
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "FPU frequency must be positive, got {omega}"
            )));
        }
        Ok(FpuParams { ell, omega })
    }
}

/// FPU chain of `2ℓ` unit masses in transformed coordinates
/// `x = (x_{0,1..ℓ}, x_{1,1..ℓ})`: stiff linear springs act on `x₁`, the weak
/// quartic springs give
/// `U = ¼[(x_{0,1} − x_{1,1})⁴ + Σ(x_{0,i+1} − x_{1,i+1} − x_{0,i} − x_{1,i})⁴ + (x_{0,ℓ} + x_{1,ℓ})⁴]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FpuChain {
    params: FpuParams,
}

impl FpuChain {
    pub fn params(&self) -> FpuParams {
        self.params
    }

    pub fn ell(&self) -> usize {
        self.params.ell
    }

    // Elongations s_0..s_ℓ of the ℓ+1 soft springs (fixed walls at both ends).
    fn elongations(&self, q: &[f64], s: &mut [f64]) {
        let l = self.params.ell;
        let (x0, x1) = q.split_at(l);
        s[0] = x0[0] - x1[0];
        for i in 1..l {
            s[i] = x0[i] - x1[i] - x0[i - 1] - x1[i - 1];
        }
        s[l] = x0[l - 1] + x1[l - 1];
    }
}

/// The FPU benchmark system.
pub fn fpu_system(params: FpuParams) -> FpuChain {
    FpuChain { params }
}

impl OscillatorySystem for FpuChain {
    fn d_slow(&self) -> usize {
        self.params.ell
    }
    fn d_fast(&self) -> usize {
        self.params.ell
    }
    fn omega(&self) -> f64 {
        self.params.omega
    }

    fn force(&self, q: &[f64], out: &mut [f64]) {
        let l = self.params.ell;
        let mut buf = [0.0; 16];
        let mut heap;
        let s: &mut [f64] = if l < 16 {
            &mut buf[..=l]
        } else {
            heap = vec![0.0; l + 1];
            &mut heap
        };
        self.elongations(q, s);
        for v in s.iter_mut() {
            *v = *v * *v * *v;
        }
        // ∂s_{i-1}/∂x_{0,i} = +1, ∂s_{i-1}/∂x_{1,i} = −1;
        // ∂s_i/∂x_{0,i} = ∂s_i/∂x_{1,i} = −1 for i < ℓ and +1 for i = ℓ.
        for i in 0..l {
            let right = if i + 1 == l { s[i + 1] } else { -s[i + 1] };
            out[i] = -(s[i] + right);
            out[l + i] = -(-s[i] + right);
        }
    }

    fn potential(&self, q: &[f64]) -> f64 {
        let l = self.params.ell;
        let mut s = vec![0.0; l + 1];
        self.elongations(q, &mut s);
        0.25 * s.iter().map(|v| v.powi(4)).sum::<f64>()
    }
}

/// The standard initial state: `x_{0,1} = 1`, `y_{0,1} = 1`, `x_{1,1} = 1/ω`,
/// `y_{1,1} = 1`, everything else zero. Gives `I₁ = 1`, `I₂ = … = 0`.
pub fn fpu_initial_state(params: FpuParams) -> State {
    let l = params.ell;
    let mut s = State::zeros(2 * l);
    s.q[0] = 1.0;
    s.p[0] = 1.0;
    s.q[l] = 1.0 / params.omega;
    s.p[l] = 1.0;
    s
}

fn to_block_coordinates(v: &[f64]) -> Vec<f64> {
    let l = v.len() / 2;
    let mut out = vec![0.0; v.len()];
    for i in 0..l {
        let (odd, even) = (v[2 * i], v[2 * i + 1]);
        out[i] = (even + odd) * FRAC_1_SQRT_2;
        out[l + i] = (even - odd) * FRAC_1_SQRT_2;
    }
    out
}

fn to_mass_coordinates(x: &[f64]) -> Vec<f64> {
    let l = x.len() / 2;
    let mut out = vec![0.0; x.len()];
    for i in 0..l {
        out[2 * i] = (x[i] - x[l + i]) * FRAC_1_SQRT_2;
        out[2 * i + 1] = (x[i] + x[l + i]) * FRAC_1_SQRT_2;
    }
    out
}

fn check_even_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if !a.len().is_multiple_of(2) || a.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "FPU coordinates need an even, nonzero length, got {}",
            a.len()
        )));
    }
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(())
}

/// Mass displacements/momenta `(q₁..q_{2ℓ}, p₁..p_{2ℓ})` to `(x, y)`.
pub fn fpu_transform(q_masses: &[f64], p_masses: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    check_even_pair(q_masses, p_masses)?;
    Ok((to_block_coordinates(q_masses), to_block_coordinates(p_masses)))
}

/// Inverse of [`fpu_transform`].
pub fn fpu_untransform(x: &[f64], y: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    check_even_pair(x, y)?;
    Ok((to_mass_coordinates(x), to_mass_coordinates(y)))
}

/// FPU Hamiltonian in mass coordinates, with fixed walls `q₀ = q_{2ℓ+1} = 0`.
pub fn fpu_mass_hamiltonian(q: &[f64], p: &[f64], omega: f64) -> f64 {
    let l = q.len() / 2;
    let kinetic = 0.5 * p.iter().map(|v| v * v).sum::<f64>();
    let stiff = 0.25
        * omega
        * omega
        * (0..l)
            .map(|i| (q[2 * i + 1] - q[2 * i]).powi(2))
            .sum::<f64>();
    // Soft springs connect q_{2i} to q_{2i+1} (1-based) for i = 0..ℓ.
    let at = |k: usize| if k == 0 || k == 2 * l + 1 { 0.0 } else { q[k - 1] };
    let soft = (0..=l)
        .map(|i| (at(2 * i + 1) - at(2 * i)).powi(4))
        .sum::<f64>();
    kinetic + stiff + soft
}
