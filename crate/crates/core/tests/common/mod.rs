//! Hand-written oracles shared by the integration suites.
#![allow(dead_code)]

use num_complex::Complex64;

pub const ALPHA: f64 = 0.146;

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

/// Amplitudes at D0 and D1 of the modulator-free device with 50/50
/// splitters, written out path by path. Symmetric splitter: transmission
/// `s = 1/√2`, reflection `i s`.
pub fn scalar_device(blocked: bool, t_att: f64, phi_inner: f64, phi_outer: f64) -> (Complex64, Complex64) {
    scalar_device_split(blocked, t_att, phi_inner, phi_inner, phi_outer)
}

/// As [`scalar_device`] with separate phases on the two inner passes.
pub fn scalar_device_split(blocked: bool, t_att: f64, phi_b1: f64, phi_b2: f64, phi_outer: f64) -> (Complex64, Complex64) {
    let s = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let i = Complex64::i();
    let e = |phi: f64| Complex64::from_polar(1.0, phi);

    let input = s;
    let c = i * s * t_att * e(phi_outer);
    let a1 = if blocked { Complex64::new(0.0, 0.0) } else { s * input };
    let b1 = i * s * input * e(phi_b1);
    let m = s * a1 + i * s * b1;
    let a2 = if blocked { Complex64::new(0.0, 0.0) } else { s * m };
    let b2 = i * s * m * e(phi_b2);
    let out = s * a2 + i * s * b2;
    let d1 = i * s * a2 + s * b2;
    let d0 = i * s * out + s * c;
    (d0, d1)
}

/// Binomial upper tail `P(X >= k)` for `X ~ Bin(n, p)`, summed in log space.
pub fn binomial_tail(n: u64, p: f64, k: u64) -> f64 {
    let ln_choose = |n: u64, r: u64| -> f64 {
        (1..=r).map(|j| ((n - r + j) as f64).ln() - (j as f64).ln()).sum()
    };
    (k..=n)
        .map(|j| (ln_choose(n, j) + j as f64 * p.ln() + (n - j) as f64 * (1.0 - p).ln()).exp())
        .sum()
}

/// `(P(D0), P(D1))` of the bare device for one bit, with the inner passes
/// and the outer arm each either coherent or phase-randomized. The average
/// over random phases is a plain Riemann sum, exact for these trigonometric
/// polynomials.
pub fn dephased_oracle(blocked: bool, inner_random: bool, outer_random: bool) -> (f64, f64) {
    const N: usize = 16;
    let grid = |random: bool, base: f64| -> Vec<f64> {
        if random {
            (0..N).map(|k| base + std::f64::consts::TAU * k as f64 / N as f64).collect()
        } else {
            vec![base]
        }
    };
    let (inner, outer) = (0.0, std::f64::consts::PI);
    let (mut p0, mut p1, mut n) = (0.0, 0.0, 0.0);
    for &a in &grid(inner_random, inner) {
        for &b in &grid(inner_random, inner) {
            for &o in &grid(outer_random, outer) {
                let (d0, d1) = scalar_device_split(blocked, 0.25, a, b, o);
                p0 += d0.norm_sqr();
                p1 += d1.norm_sqr();
                n += 1.0;
            }
        }
    }
    (p0 / n, p1 / n)
}
