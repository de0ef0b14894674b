//! Special functions that the standard crates do not cover: the Riemann zeta
//! function and its derivative on the real axis `s > 1`, the sine integral,
//! and Gauss-Legendre rules.

use num_complex::Complex64;
use std::f64::consts::PI;

pub use statrs::function::gamma::ln_gamma;

// B_{2k} for k = 1..=10.
const BERNOULLI_2K: [f64; 10] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
    43867.0 / 798.0,
    -174611.0 / 330.0,
];

const EM_CUTOFF: usize = 20;

/// Riemann zeta and its derivative at real `s > 1` via Euler-Maclaurin.
pub fn zeta_and_derivative(s: f64) -> (f64, f64) {
    assert!(s > 1.0, "zeta_and_derivative needs s > 1");
    let n = EM_CUTOFF as f64;
    let ln_n = n.ln();
    let mut z = 0.0;
    let mut dz = 0.0;
    for k in 1..EM_CUTOFF {
        let kf = k as f64;
        let t = kf.powf(-s);
        z += t;
        dz -= kf.ln() * t;
    }
    let n1s = n.powf(1.0 - s);
    z += n1s / (s - 1.0);
    dz += -n1s * ln_n / (s - 1.0) - n1s / ((s - 1.0) * (s - 1.0));
    let ns = n.powf(-s);
    z += 0.5 * ns;
    dz -= 0.5 * ln_n * ns;

    // Correction terms B_{2k}/(2k)! * s(s+1)...(s+2k-2) * N^{-s-2k+1}.
    let mut fact = 1.0; // (2k)!
    for (idx, &b) in BERNOULLI_2K.iter().enumerate() {
        let k = idx + 1;
        fact *= ((2 * k - 1) * (2 * k)) as f64;
        let mut poly = 1.0;
        let mut dlog_poly = 0.0;
        for j in 0..(2 * k - 1) {
            poly *= s + j as f64;
            dlog_poly += 1.0 / (s + j as f64);
        }
        let pw = n.powf(-s - (2 * k) as f64 + 1.0);
        let term = b / fact * poly * pw;
        z += term;
        dz += term * (dlog_poly - ln_n);
    }
    (z, dz)
}

/// Sine integral `Si(x) = int_0^x sin(t)/t dt`.
pub fn sine_integral(x: f64) -> f64 {
    let t = x.abs();
    let value = if t == 0.0 {
        0.0
    } else if t <= 2.0 {
        // Alternating Taylor series; |t| <= 2 keeps cancellation harmless.
        let mut sum = 0.0;
        let mut power = t; // t^{2k+1}/(2k+1)!
        let mut k = 0usize;
        loop {
            let term = power / (2 * k + 1) as f64;
            let signed = if k % 2 == 0 { term } else { -term };
            sum += signed;
            if term < 1e-17 * sum.abs() {
                break;
            }
            k += 1;
            power *= t * t / ((2 * k) * (2 * k + 1)) as f64;
        }
        sum
    } else {
        // Continued fraction for E1(it), modified Lentz.
        let fpmin = 1e-300;
        let mut b = Complex64::new(1.0, t);
        let mut c = Complex64::new(1.0 / fpmin, 0.0);
        let mut d = b.inv();
        let mut h = d;
        for i in 2..200 {
            let a = -(((i - 1) * (i - 1)) as f64);
            b += 2.0;
            d = (d * a + b).inv();
            c = b + c.inv() * a;
            let del = c * d;
            h *= del;
            if (del.re - 1.0).abs() + del.im.abs() < 1e-16 {
                break;
            }
        }
        h *= Complex64::new(t.cos(), -t.sin());
        PI / 2.0 + h.im
    };
    value.copysign(x)
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite Gauss-Legendre integral of `f` over `[a, b]` with `panels` panels.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize, order: usize) -> f64 {
    let (nodes, weights) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for k in 0..panels {
        let lo = a + k as f64 * h;
        let mid = lo + 0.5 * h;
        let mut s = 0.0;
        for (x, w) in nodes.iter().zip(&weights) {
            s += w * f(mid + 0.5 * h * x);
        }
        total += 0.5 * h * s;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeta_known_values() {
        let (z2, dz2) = zeta_and_derivative(2.0);
        assert!((z2 - PI * PI / 6.0).abs() < 1e-14);
        assert!((dz2 - (-0.937_548_254_315_843_8)).abs() < 1e-13);
        let (z4, _) = zeta_and_derivative(4.0);
        assert!((z4 - PI.powi(4) / 90.0).abs() < 1e-14);
        // Near the pole: zeta(1 + e) ~ 1/e + gamma.
        let e = 1e-4;
        let (z, _) = zeta_and_derivative(1.0 + e);
        assert!((z - (1.0 / e + 0.577_215_664_901_532_9)).abs() < 1e-3);
    }

    #[test]
    fn zeta_derivative_matches_finite_difference() {
        for &s in &[1.2, 1.6, 2.4, 3.0] {
            let h = 1e-5;
            let fd = (zeta_and_derivative(s + h).0 - zeta_and_derivative(s - h).0) / (2.0 * h);
            let (_, d) = zeta_and_derivative(s);
            assert!((fd - d).abs() < 1e-7 * d.abs().max(1.0), "s = {s}");
        }
    }

    #[test]
    fn sine_integral_against_quadrature() {
        for &x in &[0.3, 1.0, 1.99, 2.01, 5.0, 12.5, 40.0, -3.0] {
            let q = integrate(|t| if t == 0.0 { 1.0 } else { t.sin() / t }, 0.0, x, 200, 10);
            assert!((sine_integral(x) - q).abs() < 1e-13, "x = {x}");
        }
        assert!((sine_integral(1e6) - PI / 2.0).abs() < 1e-5);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert!((s - 2.0 / 15.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }
}
