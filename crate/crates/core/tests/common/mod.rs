#![allow(dead_code)]

// Oracles written independently of the library: filters by formula, the FPU
// chain in mass coordinates, velocity Verlet and the exact-flow splitting.

use oscibench::systems::{OscillatorySystem, State};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x.sin() / x
    }
}

/// `(ψ, φ, ψ₁)` at `ξ` from the closed-form definitions.
pub fn filters(name: &str, xi: f64) -> (f64, f64, f64) {
    let s = sinc(xi);
    let sh = sinc(xi / 2.0);
    let ch = (xi / 2.0).cos();
    match name {
        "A" => (sh * sh, 1.0, (xi / 2.0).tan() / (xi / 2.0)),
        "B" => (s, 1.0, 1.0),
        "C" => (s * s, s, s),
        "D" => (
            sh * sh,
            s * (1.0 + (xi / 2.0).sin().powi(2) / 3.0),
            (xi / 2.0).tan() / (xi / 2.0),
        ),
        "E" => (s * s, 1.0, s),
        "G" => (s * s * s, s, s * s),
        "IMEX" => (ch * ch, 1.0, 1.0),
        _ => panic!("no oracle for {name}"),
    }
}

/// `ω̃` of the IMEX method: `tan(hω̃/2) = hω/2`.
pub fn imex_omega_tilde(h: f64, omega: f64) -> f64 {
    2.0 * (h * omega / 2.0).atan() / h
}

/// FPU potential in mass coordinates `q₁..q_{2ℓ}` with walls at both ends.
pub fn fpu_mass_potential(q: &[f64], omega: f64) -> f64 {
    let n = q.len();
    let at = |i: usize| if i == 0 || i == n + 1 { 0.0 } else { q[i - 1] };
    let mut v = 0.0;
    for i in 1..=n / 2 {
        v += 0.25 * omega * omega * (at(2 * i) - at(2 * i - 1)).powi(2);
    }
    for i in 0..=n / 2 {
        v += (at(2 * i + 1) - at(2 * i)).powi(4);
    }
    v
}

pub fn random_state(rng: &mut impl Rng, dim: usize, scale: f64) -> State {
    let q = (0..dim).map(|_| rng.random_range(-scale..scale)).collect();
    let p = (0..dim).map(|_| rng.random_range(-scale..scale)).collect();
    State::new(q, p, 0.0)
}

fn full_force<S: OscillatorySystem>(sys: &S, q: &[f64]) -> Vec<f64> {
    let mut f = sys.force_vec(q);
    let w = sys.omega();
    for i in sys.d_slow()..sys.dim() {
        f[i] -= w * w * q[i];
    }
    f
}

/// Plain velocity Verlet on `−Ω²q + g(q)`.
pub fn verlet<S: OscillatorySystem>(sys: &S, h: f64, s: &State) -> State {
    let f0 = full_force(sys, &s.q);
    let p_half: Vec<f64> = s.p.iter().zip(&f0).map(|(p, f)| p + 0.5 * h * f).collect();
    let q: Vec<f64> = s.q.iter().zip(&p_half).map(|(q, p)| q + h * p).collect();
    let f1 = full_force(sys, &q);
    let p = p_half.iter().zip(&f1).map(|(p, f)| p + 0.5 * h * f).collect();
    State::new(q, p, s.t + h)
}

/// Half kick with `g`, exact harmonic flow over `h`, half kick with `g`.
pub fn kick_flow_kick<S: OscillatorySystem>(sys: &S, h: f64, s: &State) -> State {
    let w = sys.omega();
    let d0 = sys.d_slow();
    let g0 = sys.force_vec(&s.q);
    let mut p: Vec<f64> = s.p.iter().zip(&g0).map(|(p, g)| p + 0.5 * h * g).collect();
    let mut q = s.q.clone();
    for i in 0..sys.dim() {
        if i < d0 {
            q[i] += h * p[i];
        } else {
            let (c, sn) = ((h * w).cos(), (h * w).sin());
            let (qi, pi) = (q[i], p[i]);
            q[i] = c * qi + sn / w * pi;
            p[i] = -w * sn * qi + c * pi;
        }
    }
    let g1 = sys.force_vec(&q);
    for (pi, g) in p.iter_mut().zip(&g1) {
        *pi += 0.5 * h * g;
    }
    State::new(q, p, s.t + h)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().map(|x| x.abs()).fold(0.0, f64::max)
}
