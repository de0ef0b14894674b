//! Per-prime local factors
//!
//! `Mtilde_p(z) = int_0^1 psi_z(S_p(theta)) dtheta`, with
//! `S_p(theta) = sum_m Lambda_F(p^m) p^{-m sigma} e^{2 pi i m theta}` and
//! `psi_z(w) = exp(i Re(z conj w))`.
//!
//! Two evaluators: the trapezoid rule (spectrally accurate on this periodic,
//! entire integrand) and the second-order expansion `1 - mu_p` with an
//! explicit remainder bound, valid when `|z| sum|c_m|` is small.

use crate::error::{check_sigma, Error, Result};
use crate::lfunc::LFunctionSpec;
use crate::primes::is_prime;
use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::{E, PI};

/// Expansion requires `|z| * sum_m |c_m| <= SMALLNESS_THRESHOLD`.
pub const SMALLNESS_THRESHOLD: f64 = 0.1;

/// Constant `C` of the expansion remainder `C (|x|+|y|)^3 A^3`.
///
/// For real `phi`, `|e^{i phi} - 1 - i phi + phi^2/2| <= |phi|^3/6`; the
/// factor `e` leaves room for the complex-argument version of the same bound.
pub const EXPANSION_REMAINDER_CONSTANT: f64 = E / 6.0;

const EPS: f64 = f64::EPSILON;

/// Truncated prime-power series `c_m = Lambda_F(p^m) / p^{m sigma}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalSeries {
    pub p: u64,
    pub sigma: f64,
    pub g: usize,
    pub m_max: usize,
    /// `coeffs[m - 1] = c_m` for `m = 1..=m_max`.
    pub coeffs: Vec<Complex64>,
    /// Bound on `sum_{m > m_max} |c_m|`.
    pub tail_bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocalFactorValue {
    pub value: Complex64,
    pub abs_error: f64,
}

impl LocalFactorValue {
    pub const ONE: Self = Self {
        value: Complex64 { re: 1.0, im: 0.0 },
        abs_error: 0.0,
    };
}

impl LocalSeries {
    /// The series with every coefficient negated (the orientation of `F'/F`).
    pub fn negated(&self) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| -c).collect(),
            ..self.clone()
        }
    }

    /// `sum_{m <= m_max} |c_m|`.
    pub fn abs_sum(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).sum()
    }

    /// Bound on `sum_m |c_m|` over the untruncated series.
    pub fn abs_sum_full(&self) -> f64 {
        self.abs_sum() + self.tail_bound
    }

    /// `sum_{m <= m_max} |c_m|^2`.
    pub fn sq_sum(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Bound on `sum_{m > m_max} |c_m|^2`.
    pub fn sq_tail_bound(&self) -> f64 {
        let pf = self.p as f64;
        let a = self.g as f64 * pf.ln();
        let r2 = pf.powf(-2.0 * self.sigma);
        a * a * r2.powi(self.m_max as i32 + 1) / (1.0 - r2)
    }

    /// `S_p(theta)` for the truncated series.
    pub fn eval(&self, theta: f64) -> Complex64 {
        let w = Complex64::from_polar(1.0, 2.0 * PI * theta);
        // Horner in w
        let mut acc = Complex64::new(0.0, 0.0);
        for c in self.coeffs.iter().rev() {
            acc = (acc + c) * w;
        }
        acc
    }

    /// `S_p(k / q)` for `k = 0..q`.
    pub fn samples(&self, q: usize) -> Vec<Complex64> {
        (0..q).map(|k| self.eval(k as f64 / q as f64)).collect()
    }

    /// `W(h) = sum_m |c_m| e^{2 pi m h}`, the bound of `|S_p|` on the strip `|Im theta| <= h`.
    fn strip_sup(&self, h: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c.norm() * (2.0 * PI * (i + 1) as f64 * h).exp())
            .sum()
    }
}

/// Builds the series at prime `p` with the smallest `m_max >= 1` whose
/// geometric tail bound `g log p p^{-(m_max+1) sigma} / (1 - p^{-sigma})` is
/// at most `tol`.
pub fn local_series(spec: &LFunctionSpec, p: u64, sigma: f64, tol: f64) -> Result<LocalSeries> {
    check_sigma(sigma)?;
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidArgument(format!("tol must be positive, got {tol}")));
    }
    if !is_prime(p) {
        return Err(Error::InvalidArgument(format!("{p} is not prime")));
    }
    let pf = p as f64;
    let log_p = pf.ln();
    let g = spec.g();
    let r = pf.powf(-sigma);
    let scale = g as f64 * log_p / (1.0 - r);
    let tail = |m: usize| scale * r.powi(m as i32 + 1);
    let mut m_max = 1usize;
    while tail(m_max) > tol {
        m_max += 1;
    }
    let roots = spec.local_roots(p)?;
    let mut powers = roots.clone();
    let mut coeffs = Vec::with_capacity(m_max);
    let mut rm = 1.0;
    for _ in 0..m_max {
        rm *= r;
        let s: Complex64 = powers.iter().sum();
        coeffs.push(s * (log_p * rm));
        for (pw, a) in powers.iter_mut().zip(&roots) {
            *pw *= a;
        }
    }
    Ok(LocalSeries {
        p,
        sigma,
        g,
        m_max,
        coeffs,
        tail_bound: tail(m_max),
    })
}

/// `(1/Q) sum_k psi_z(S(theta_k))` from precomputed samples.
pub fn trapezoid(samples: &[Complex64], z: Complex64) -> Complex64 {
    fn pairwise(xs: &[Complex64], z: Complex64) -> Complex64 {
        if xs.len() <= 32 {
            xs.iter().map(|s| Complex64::from_polar(1.0, z.re * s.re + z.im * s.im)).sum()
        } else {
            let mid = xs.len() / 2;
            pairwise(&xs[..mid], z) + pairwise(&xs[mid..], z)
        }
    }
    pairwise(samples, z) / samples.len() as f64
}

fn rounding_allowance(series: &LocalSeries, z: Complex64, q: usize) -> f64 {
    EPS * (4.0 + (q as f64).log2() + 2.0 * z.norm() * series.abs_sum())
}

/// Trapezoid rule with `quad_points` and `2 quad_points` nodes; returns the
/// finer value with the doubling difference, the series truncation
/// `|z| tail_bound` and a rounding allowance as `abs_error`.
pub fn local_factor_quadrature(
    series: &LocalSeries,
    z: Complex64,
    quad_points: usize,
) -> Result<LocalFactorValue> {
    let required = 4 * series.m_max;
    if quad_points < required {
        return Err(Error::QuadratureTooCoarse {
            points: quad_points,
            required,
        });
    }
    if z == Complex64::new(0.0, 0.0) {
        return Ok(LocalFactorValue::ONE);
    }
    let coarse = trapezoid(&series.samples(quad_points), z);
    let fine = trapezoid(&series.samples(2 * quad_points), z);
    Ok(LocalFactorValue {
        value: fine,
        abs_error: (fine - coarse).norm()
            + z.norm() * series.tail_bound
            + rounding_allowance(series, z, 2 * quad_points),
    })
}

/// Doubles the node count from `4 m_max` (next power of two) until the
/// doubling difference is below `tol` or at the rounding level.
pub fn local_factor_adaptive(series: &LocalSeries, z: Complex64, tol: f64) -> LocalFactorValue {
    let mut q = (4 * series.m_max).next_power_of_two();
    loop {
        let v = local_factor_quadrature(series, z, q).expect("q >= 4 m_max");
        let rounding = rounding_allowance(series, z, 2 * q);
        let doubling = v.abs_error - z.norm() * series.tail_bound - rounding;
        if doubling <= tol || doubling <= rounding || q >= 1 << 22 {
            return v;
        }
        q *= 2;
    }
}

/// `mu_p = (x^2 + y^2)/4 * sum_{m <= m_max} |c_m|^2`.
pub fn mu_p(series: &LocalSeries, z: Complex64) -> f64 {
    z.norm_sqr() / 4.0 * series.sq_sum()
}

/// Bound on the part of `mu_p` from `m > m_max`.
pub fn mu_p_tail(series: &LocalSeries, z: Complex64) -> f64 {
    z.norm_sqr() / 4.0 * series.sq_tail_bound()
}

/// `|z| * sum_m |c_m|`, the quantity gated by [`SMALLNESS_THRESHOLD`].
pub fn smallness(series: &LocalSeries, z: Complex64) -> f64 {
    z.norm() * series.abs_sum_full()
}

/// Remainder bound `(e/6) (|x|+|y|)^3 A^3` with `A` bounding `sum_m |c_m|`.
pub fn expansion_remainder(series: &LocalSeries, z: Complex64) -> f64 {
    let s = z.re.abs() + z.im.abs();
    EXPANSION_REMAINDER_CONSTANT * (s * series.abs_sum_full()).powi(3)
}

/// `1 - mu_p` with a certified remainder.
pub fn local_factor_expansion(series: &LocalSeries, z: Complex64) -> Result<LocalFactorValue> {
    let small = smallness(series, z);
    if small > SMALLNESS_THRESHOLD {
        return Err(Error::ExpansionInapplicable {
            smallness: small,
            threshold: SMALLNESS_THRESHOLD,
        });
    }
    if z == Complex64::new(0.0, 0.0) {
        return Ok(LocalFactorValue::ONE);
    }
    let mu = mu_p(series, z);
    Ok(LocalFactorValue {
        value: Complex64::new(1.0 - mu, 0.0),
        abs_error: expansion_remainder(series, z) + mu_p_tail(series, z) + 4.0 * EPS,
    })
}

/// Bound on `sum_{p > P} (log p)^2 p^{-2 sigma}`.
///
/// Maximum of the integral-comparison shape `2 P^{1-2s} log P / (2s-1)` and
/// the partial-summation bound from `theta(x) < 1.01624 x`:
/// `1.01624 P^{1-2s} (log P + log P/(2s-1) + 1/(2s-1)^2)`.
pub fn prime_square_tail(sigma: f64, p: f64) -> f64 {
    let d = 2.0 * sigma - 1.0;
    let lp = p.ln();
    let base = p.powf(1.0 - 2.0 * sigma);
    let shape = 2.0 * base * lp / d;
    let explicit = 1.01624 * base * (lp + lp / d + 1.0 / (d * d));
    shape.max(explicit)
}

/// Smallest `P` accepted by [`tail_log_bound`].
pub const TAIL_MIN_P: u64 = 8;

/// `B >= |log prod_{p > P} Mtilde_p(z)|` for all `|x| + |y| <= z_max`.
///
/// Each factor is `1 + w_p` with `|w_p| <= mu_p + R_p <= 0.003`, hence
/// `|log(1 + w_p)| <= 1.0031 |w_p|`, and
/// `|w_p| <= s^2 (g log p)^2 p^{-2 sigma} (k1/4 + 0.0453 k2)`.
pub fn tail_log_bound(spec: &LFunctionSpec, sigma: f64, z_max: f64, p: u64) -> Result<f64> {
    check_sigma(sigma)?;
    if !(z_max >= 0.0) {
        return Err(Error::InvalidArgument(format!("z_max must be >= 0, got {z_max}")));
    }
    if z_max == 0.0 {
        return Ok(0.0);
    }
    if p < TAIL_MIN_P {
        return Err(Error::InvalidArgument(format!(
            "tail bound needs P >= {TAIL_MIN_P}, got {p}"
        )));
    }
    let pf = p as f64;
    let g = spec.g() as f64;
    let r = pf.powf(-sigma);
    let a = g * pf.ln() * r / (1.0 - r);
    let small = z_max * a;
    if small > SMALLNESS_THRESHOLD {
        return Err(Error::ExpansionInapplicable {
            smallness: small,
            threshold: SMALLNESS_THRESHOLD,
        });
    }
    let k1 = 1.0 / (1.0 - r * r);
    let k2 = 1.0 / ((1.0 - r) * (1.0 - r));
    // 0.0453 >= (e/6) * SMALLNESS_THRESHOLD
    let c = 1.0031 * (0.25 * k1 + 0.0453 * k2);
    Ok(c * z_max * z_max * g * g * prime_square_tail(sigma, pf))
}

/// Trapezoid node count from the analytic-strip bound: for `|z| <= z_abs`,
/// the error is at most `2 e^{z_abs W(h)} r/(1 - r)` with `r = e^{-2 pi Q h}`.
/// Returns the smallest `Q >= min_points` bringing this below `tol`, and the
/// bound achieved. The bound holds for every `Q >= 1`.
pub fn strip_quadrature_points(
    series: &LocalSeries,
    z_abs: f64,
    tol: f64,
    min_points: usize,
) -> (usize, f64) {
    let hs: Vec<f64> = (0..80).map(|j| 1e-3 * 1.15f64.powi(j)).collect();
    let ws: Vec<f64> = hs.iter().map(|&h| z_abs * series.strip_sup(h)).collect();
    let log_bound = |q: usize| -> f64 {
        hs.iter()
            .zip(&ws)
            .map(|(&h, &w)| {
                let x = 2.0 * PI * q as f64 * h;
                std::f64::consts::LN_2 + w - x - (-(-x).exp_m1()).ln()
            })
            .fold(f64::INFINITY, f64::min)
    };
    let log_tol = tol.ln();
    let lo_q = min_points.max(1);
    if log_bound(lo_q) <= log_tol {
        return (lo_q, log_bound(lo_q).exp());
    }
    let mut hi = lo_q;
    while log_bound(hi) > log_tol {
        hi *= 2;
        if hi > 1 << 24 {
            return (hi, log_bound(hi).exp());
        }
    }
    let mut lo = hi / 2;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if log_bound(mid) <= log_tol {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    (hi, log_bound(hi).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::integrate;
    use std::f64::consts::LN_2;

    fn zeta() -> LFunctionSpec {
        LFunctionSpec::zeta()
    }

    #[test]
    fn m_max_examples() {
        let s = local_series(&zeta(), 2, 1.0, 1e-12).unwrap();
        // first m with log2 2^{-(m+1)} / (1/2) <= 1e-12, found independently
        let mut expected = 1;
        while LN_2 * 0.5f64.powi(expected + 1) / 0.5 > 1e-12 {
            expected += 1;
        }
        assert_eq!(s.m_max, expected as usize);
        assert_eq!(s.m_max, 40);
        for (i, c) in s.coeffs.iter().enumerate() {
            let m = (i + 1) as i32;
            assert!((c.re - LN_2 * 0.5f64.powi(m)).abs() < 1e-16);
            assert_eq!(c.im, 0.0);
        }
        assert!(s.tail_bound <= 1e-12);

        let big = local_series(&zeta(), 1_000_003, 1.0, 1e-12).unwrap();
        assert!(big.m_max <= 2);
        let one = local_series(&zeta(), 7, 0.9, f64::INFINITY).unwrap();
        assert_eq!(one.m_max, 1);
        assert!(local_series(&zeta(), 2, 0.5, 1e-12).is_err());
        assert!(local_series(&zeta(), 4, 1.0, 1e-12).is_err());
    }

    #[test]
    fn coefficient_bounds() {
        let spec = LFunctionSpec::delta();
        for p in [2u64, 3, 97, 997] {
            let s = local_series(&spec, p, 0.7, 1e-14).unwrap();
            for (i, c) in s.coeffs.iter().enumerate() {
                let bound = 2.0 * (p as f64).ln() * (p as f64).powf(-0.7 * (i + 1) as f64);
                assert!(c.norm() <= bound * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn quadrature_at_zero_is_one() {
        let s = local_series(&zeta(), 3, 0.8, 1e-14).unwrap();
        let v = local_factor_quadrature(&s, Complex64::new(0.0, 0.0), 4 * s.m_max).unwrap();
        assert_eq!(v.value, Complex64::new(1.0, 0.0));
        assert_eq!(v.abs_error, 0.0);
        assert!(matches!(
            local_factor_quadrature(&s, Complex64::new(1.0, 0.0), 4 * s.m_max - 1),
            Err(Error::QuadratureTooCoarse { .. })
        ));
    }

    #[test]
    fn quadrature_small_z_example() {
        let s = local_series(&zeta(), 2, 1.0, 1e-14).unwrap();
        let z = Complex64::new(0.1, 0.0);
        let v = local_factor_quadrature(&s, z, 4 * s.m_max).unwrap();
        // Gauss-Legendre oracle on the real and imaginary parts
        let phase = |t: f64| {
            let w = s.eval(t);
            z.re * w.re + z.im * w.im
        };
        let re = integrate(|t| phase(t).cos(), 0.0, 1.0, 64, 20);
        let im = integrate(|t| phase(t).sin(), 0.0, 1.0, 64, 20);
        assert!((v.value - Complex64::new(re, im)).norm() < 1e-10);
        let mu = 0.0025 * LN_2 * LN_2 / 3.0;
        assert!((mu - 0.000_400).abs() < 1e-6);
        assert!((v.value.re - 0.999_600).abs() < 1e-6);
        assert!((v.value.re - (1.0 - mu)).abs() < 1e-6);
    }

    #[test]
    fn symmetries_for_real_coefficients() {
        let s = local_series(&zeta(), 3, 1.0, 1e-14).unwrap();
        let q = 4 * s.m_max;
        let at = |x: f64, y: f64| local_factor_quadrature(&s, Complex64::new(x, y), q).unwrap();
        let a = at(2.0, 1.5);
        // theta -> 1 - theta conjugates S, so reflecting y leaves the factor unchanged
        let b = at(2.0, -1.5);
        assert!((a.value - b.value).norm() <= a.abs_error + b.abs_error);
        // psi_{-z} = conj psi_z for every spec
        let c = at(-2.0, -1.5);
        assert!((a.value - c.value.conj()).norm() <= a.abs_error + c.abs_error);
        // the factor is genuinely complex, so the reflection is not a conjugation
        assert!(a.value.im.abs() > 1e-3);
    }

    #[test]
    fn mu_examples() {
        let s = local_series(&zeta(), 2, 1.0, 1e-14).unwrap();
        assert_eq!(mu_p(&s, Complex64::new(0.0, 0.0)), 0.0);
        let expected = LN_2 * LN_2 / 3.0;
        assert!((expected - 0.160_151).abs() < 1e-6);
        assert!((mu_p(&s, Complex64::new(2.0, 0.0)) - expected).abs() < 1e-14);
        assert!((mu_p(&s, Complex64::new(0.0, 2.0)) - expected).abs() < 1e-14);
    }

    #[test]
    fn expansion_examples() {
        let s = local_series(&zeta(), 1_000_003, 1.0, 1e-14).unwrap();
        let z = Complex64::new(1.0, 1.0);
        let e = local_factor_expansion(&s, z).unwrap();
        let q = local_factor_quadrature(&s, z, 64).unwrap();
        assert!((e.value.re - (1.0 - mu_p(&s, z))).abs() == 0.0);
        assert!((q.value - e.value).norm() <= e.abs_error + q.abs_error);

        let zero = local_factor_expansion(&s, Complex64::new(0.0, 0.0)).unwrap();
        assert_eq!(zero, LocalFactorValue::ONE);

        let s2 = local_series(&zeta(), 2, 0.6, 1e-14).unwrap();
        assert!(matches!(
            local_factor_expansion(&s2, Complex64::new(30.0, 0.0)),
            Err(Error::ExpansionInapplicable { .. })
        ));
    }

    #[test]
    fn tail_bound_examples() {
        assert_eq!(tail_log_bound(&zeta(), 1.0, 0.0, 2).unwrap(), 0.0);
        let b = tail_log_bound(&zeta(), 1.0, 20.0, 10_000).unwrap();
        assert!(b.is_finite() && b > 0.0);
        // direct product over the next decade of primes
        let table = crate::primes::PrimeTable::new(100_000);
        let primes: Vec<u64> = table.primes().iter().copied().filter(|&p| p > 10_000).collect();
        for z in [
            Complex64::new(20.0, 0.0),
            Complex64::new(10.0, 10.0),
            Complex64::new(0.0, -20.0),
            Complex64::new(-7.0, 13.0),
        ] {
            let mut log_sum = Complex64::new(0.0, 0.0);
            for &p in &primes {
                let s = local_series(&zeta(), p, 1.0, 1e-16).unwrap();
                let v = local_factor_quadrature(&s, z, 16).unwrap();
                log_sum += v.value.ln();
            }
            assert!(log_sum.norm() <= b, "|log| = {} > {b}", log_sum.norm());
        }
        // divergence as sigma -> 1/2
        let b1 = tail_log_bound(&zeta(), 0.55, 1.0, 10_000).unwrap();
        let b2 = tail_log_bound(&zeta(), 0.505, 1.0, 10_000).unwrap();
        let b3 = tail_log_bound(&zeta(), 0.5005, 1.0, 10_000).unwrap();
        assert!(b2 > 5.0 * b1 && b3 > 5.0 * b2);
        assert!(tail_log_bound(&zeta(), 0.8, 80.0, 10_000).is_err());
    }

    #[test]
    fn strip_points_meet_their_bound() {
        for (p, sigma, z) in [(2u64, 0.8, 57.0), (3, 1.0, 30.0), (101, 1.2, 57.0), (9973, 1.0, 57.0)] {
            let s = local_series(&zeta(), p, sigma, 1e-16).unwrap().negated();
            let (q, bound) = strip_quadrature_points(&s, z, 1e-14, 1);
            assert!(bound <= 1e-14);
            let zc = Complex64::from_polar(z, 0.7);
            let a = trapezoid(&s.samples(q), zc);
            let b = trapezoid(&s.samples(4 * q), zc);
            assert!((a - b).norm() <= bound + 1e-14, "p = {p}");
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn modulus_and_doubling(p_idx in 0usize..40, sigma in 0.6f64..1.6,
                                    x in -20.0f64..20.0, y in -20.0f64..20.0) {
                let p = crate::primes::PrimeTable::new(200).primes()[p_idx];
                let s = local_series(&LFunctionSpec::zeta(), p, sigma, 1e-14).unwrap();
                let z = Complex64::new(x, y);
                let v = local_factor_adaptive(&s, z, 1e-12);
                prop_assert!(v.value.norm() <= 1.0 + v.abs_error);
                let q = (4 * s.m_max).next_power_of_two().max(256);
                let a = local_factor_quadrature(&s, z, q).unwrap();
                let b = local_factor_quadrature(&s, z, 2 * q).unwrap();
                prop_assert!((a.value - b.value).norm() <= a.abs_error + b.abs_error);
            }
        }
    }
}
