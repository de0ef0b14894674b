//! Test functions on the plane with their transforms.
//!
//! 1D transform: `fhat(xi) = int f(u) e^{i xi u} du / sqrt(2pi)`.
//! Plane transform: `Phihat(w) = int Phi(z) psi_w(z) dx dy / 2pi`, which for
//! products is the product of the 1D transforms.
//!
//! The band-limited box is `F_{a,b} = 1_[a,b] * k_omega` with
//! `k_omega(t) = (omega / 2pi) K(omega t / 2pi)`, whose transform is the
//! triangle `max(0, 1 - |xi| / omega)`.

use crate::special::{integrate, sine_integral};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// `K(x) = (sin(pi x) / (pi x))^2`.
pub fn fejer_kernel(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        let t = PI * x;
        return 1.0 - t * t / 3.0;
    }
    let s = (PI * x).sin() / (PI * x);
    s * s
}

/// `int_{-inf}^v K`.
pub fn fejer_cdf(v: f64) -> f64 {
    if v == 0.0 {
        return 0.5;
    }
    let s = (PI * v).sin();
    0.5 - s * s / (PI * PI * v) + sine_integral(2.0 * PI * v) / PI
}

/// `(2 / omega^2) int_0^omega (omega - u) cos(2 pi x u) du`, by Gauss-Legendre.
pub fn kernel_average_identity(omega: f64, x: f64) -> f64 {
    let panels = ((omega * x.abs() * 4.0).ceil() as usize).max(4);
    let integral = integrate(|u| (omega - u) * (2.0 * PI * x * u).cos(), 0.0, omega, panels, 20);
    2.0 / (omega * omega) * integral
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestFunction1d {
    /// `exp(-x^2 / (2 s^2))`.
    Gaussian { s: f64 },
    BoxFejer { a: f64, b: f64, omega: f64 },
    Zero,
}

/// Band-limited approximation to `1_[a,b]`.
pub fn box_fejer_1d(a: f64, b: f64, omega: f64) -> TestFunction1d {
    assert!(a < b && omega > 0.0, "box_fejer_1d needs a < b and omega > 0");
    TestFunction1d::BoxFejer { a, b, omega }
}

pub fn gaussian_1d(s: f64) -> TestFunction1d {
    assert!(s > 0.0, "gaussian width must be positive");
    TestFunction1d::Gaussian { s }
}

/// `1hat_[a,b](xi) = (e^{i xi b} - e^{i xi a}) / (i xi sqrt(2pi))`.
pub fn indicator_transform(a: f64, b: f64, xi: f64) -> Complex64 {
    let root = (2.0 * PI).sqrt();
    if xi.abs() * (b - a).max(a.abs()).max(b.abs()) < 1e-6 {
        // second-order series around xi = 0
        let m1 = (b * b - a * a) / 2.0;
        let m2 = (b * b * b - a * a * a) / 3.0;
        return Complex64::new(b - a - xi * xi * m2 / 2.0, xi * m1) / root;
    }
    let num = Complex64::from_polar(1.0, xi * b) - Complex64::from_polar(1.0, xi * a);
    num / (Complex64::new(0.0, xi) * root)
}

impl TestFunction1d {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Self::Gaussian { s } => (-x * x / (2.0 * s * s)).exp(),
            Self::BoxFejer { a, b, omega } => {
                let w = omega / (2.0 * PI);
                fejer_cdf(w * (x - a)) - fejer_cdf(w * (x - b))
            }
            Self::Zero => 0.0,
        }
    }

    pub fn transform(&self, xi: f64) -> Complex64 {
        match *self {
            Self::Gaussian { s } => Complex64::new(s * (-s * s * xi * xi / 2.0).exp(), 0.0),
            Self::BoxFejer { a, b, omega } => {
                let tri = 1.0 - xi.abs() / omega;
                if tri <= 0.0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    indicator_transform(a, b, xi) * tri
                }
            }
            Self::Zero => Complex64::new(0.0, 0.0),
        }
    }

    /// Radius outside which the transform vanishes, when band-limited.
    pub fn support_radius(&self) -> Option<f64> {
        match *self {
            Self::BoxFejer { omega, .. } => Some(omega),
            Self::Zero => Some(0.0),
            Self::Gaussian { .. } => None,
        }
    }

    /// Half-width of a transform window holding all but `~1e-16` of its mass.
    pub fn transform_window(&self) -> f64 {
        match *self {
            Self::Gaussian { s } => 9.0 / s,
            Self::BoxFejer { omega, .. } => omega,
            Self::Zero => 0.0,
        }
    }

    /// `int fhat(xi) e^{-i x xi} dxi / sqrt(2pi)` by Gauss-Legendre.
    pub fn inverse_transform(&self, x: f64) -> f64 {
        let r = self.transform_window();
        if r == 0.0 {
            return 0.0;
        }
        let spread = match *self {
            Self::BoxFejer { a, b, .. } => a.abs().max(b.abs()),
            _ => 0.0,
        };
        let panels = (((x.abs() + spread) * r / 2.0).ceil() as usize).max(8);
        let f = |xi: f64| (self.transform(xi) * Complex64::from_polar(1.0, -x * xi)).re;
        // split at the kink of the triangle
        (integrate(f, -r, 0.0, panels, 24) + integrate(f, 0.0, r, panels, 24)) / (2.0 * PI).sqrt()
    }

    /// Smallest `C` with `|F - 1_[a,b]| <= C (K(w(x-a)) + K(w(x-b)))`, `w = omega / 2pi`,
    /// over `samples` equispaced points within `reach / w` of the interval.
    pub fn envelope_constant(&self, samples: usize, reach: f64) -> Option<f64> {
        let Self::BoxFejer { a, b, omega } = *self else {
            return None;
        };
        let w = omega / (2.0 * PI);
        let lo = a - reach / w;
        let hi = b + reach / w;
        let mut c: f64 = 0.0;
        for i in 0..samples {
            let x = lo + (hi - lo) * (i as f64 + 0.5) / samples as f64;
            let ind = if (a..=b).contains(&x) { 1.0 } else { 0.0 };
            let env = fejer_kernel(w * (x - a)) + fejer_kernel(w * (x - b));
            c = c.max((self.eval(x) - ind).abs() / env);
        }
        Some(c)
    }
}

/// `Phi(z) = fx(Re z) fy(Im z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestFunction {
    pub fx: TestFunction1d,
    pub fy: TestFunction1d,
}

pub fn product_phi(fx: TestFunction1d, fy: TestFunction1d) -> TestFunction {
    TestFunction { fx, fy }
}

impl TestFunction {
    /// `exp(-|z|^2 / (2 s^2))`.
    pub fn gaussian(s: f64) -> Self {
        product_phi(gaussian_1d(s), gaussian_1d(s))
    }

    /// Band-limited approximation to the indicator of `[a,b] x [c,d]`.
    pub fn box_fejer(a: f64, b: f64, c: f64, d: f64, omega: f64) -> Self {
        product_phi(box_fejer_1d(a, b, omega), box_fejer_1d(c, d, omega))
    }

    pub fn zero() -> Self {
        product_phi(TestFunction1d::Zero, TestFunction1d::Zero)
    }

    pub fn eval(&self, z: Complex64) -> f64 {
        self.fx.eval(z.re) * self.fy.eval(z.im)
    }

    /// `Phihat(w) = fxhat(Re w) fyhat(Im w)`.
    pub fn transform(&self, w: Complex64) -> Complex64 {
        self.fx.transform(w.re) * self.fy.transform(w.im)
    }

    /// Half-width of the box outside which `Phihat` vanishes, when band-limited.
    pub fn support_radius(&self) -> Option<f64> {
        match (self.fx.support_radius(), self.fy.support_radius()) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (Some(0.0), None) | (None, Some(0.0)) => Some(0.0),
            _ => None,
        }
    }

    /// Half-width of a box holding the numerically relevant part of `Phihat`.
    pub fn transform_window(&self) -> f64 {
        self.fx.transform_window().max(self.fy.transform_window())
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.fx, TestFunction1d::Zero) || matches!(self.fy, TestFunction1d::Zero)
    }
}
