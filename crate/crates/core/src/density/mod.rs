//! The characteristic function `Mtilde_sigma(z) = prod_p Mtilde_{sigma,p}(z)`
//! of the limiting value distribution of `F'/F(sigma + it)`, its inversion to
//! the density `M_sigma`, and integrals of the density.
//!
//! Lattice: `u_j = (j - n/2) du` with `du = 2 z_max / n`, so `j = n/2` is the
//! origin. The density lives on the dual lattice `x_k = (k - n/2) dx`,
//! `dx = pi / z_max`, with half-width `w_max = pi n / (2 z_max)`. Samples are
//! row-major with rows indexed by the imaginary coordinate.
//!
//! Local factors are evaluated on the negated prime-power series, the
//! orientation in which `F'/F = -sum Lambda_F(n) n^{-s}`.

pub mod io;

use crate::error::{check_sigma, Error, Result};
use crate::lfunc::LFunctionSpec;
use crate::localfactor::{
    local_series, strip_quadrature_points, tail_log_bound, LocalFactorValue, LocalSeries,
    EXPANSION_REMAINDER_CONSTANT, SMALLNESS_THRESHOLD,
};
use crate::primes::PrimeTable;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Maximum `|Mtilde|` tolerated on the outer ring of the lattice.
pub const DEFAULT_BOUNDARY_THRESHOLD: f64 = 1e-8;

const EPS: f64 = f64::EPSILON;

fn default_factor_tol() -> f64 {
    1e-14
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub sigma: f64,
    /// Half-width of the box in the `z`-plane.
    pub z_max: f64,
    /// Points per axis; a power of two, at least 8.
    pub n: usize,
    pub p_max: u64,
    /// Per-factor error target of the quadrature.
    #[serde(default = "default_factor_tol")]
    pub factor_tol: f64,
    /// A prime uses the expansion when its certified remainder is below this.
    #[serde(default = "default_factor_tol")]
    pub expansion_tol: f64,
    /// Fail when the certificate for `p > p_max` exceeds this.
    #[serde(default)]
    pub tail_tol: Option<f64>,
}

impl GridConfig {
    pub fn new(sigma: f64, z_max: f64, n: usize, p_max: u64) -> Self {
        Self {
            sigma,
            z_max,
            n,
            p_max,
            factor_tol: default_factor_tol(),
            expansion_tol: default_factor_tol(),
            tail_tol: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_sigma(self.sigma)?;
        if !(self.z_max > 0.0 && self.z_max.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "z_max must be positive, got {}",
                self.z_max
            )));
        }
        if self.n < 8 || !self.n.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "grid size must be a power of two >= 8, got {}",
                self.n
            )));
        }
        if self.p_max < 2 {
            return Err(Error::InvalidArgument("p_max must be at least 2".into()));
        }
        if !(self.factor_tol > 0.0) || !(self.expansion_tol > 0.0) {
            return Err(Error::InvalidArgument("tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GridDiagnostics {
    pub primes_quadrature: usize,
    pub primes_expansion: usize,
    pub max_quad_points: usize,
    pub total_quad_points: usize,
    /// Sum of per-factor error bounds.
    pub factor_error_sum: f64,
}

#[derive(Debug, Clone)]
pub struct CharacteristicGrid {
    pub label: String,
    pub sigma: f64,
    pub z_max: f64,
    pub n: usize,
    pub p_max: u64,
    pub values: Vec<Complex64>,
    /// Bound on `|log prod_{p > p_max}|` over the box; infinite when unavailable.
    pub tail_cert: f64,
    /// Pointwise bound against the exact product over `p <= p_max`.
    pub abs_error: f64,
    pub real_coefficients: bool,
    pub diagnostics: GridDiagnostics,
}

enum FactorPlan {
    Expansion { sq_sum: f64 },
    Quadrature { samples: Vec<Complex64> },
}

struct PlannedFactor {
    plan: FactorPlan,
    error: f64,
}

/// Chooses the evaluator for one prime on the region `|z| <= z_abs`,
/// `|x| + |y| <= s_max`.
fn plan_factor(
    series: &LocalSeries,
    z_abs: f64,
    s_max: f64,
    factor_tol: f64,
    expansion_tol: f64,
) -> PlannedFactor {
    let a = series.abs_sum_full();
    if z_abs * a <= SMALLNESS_THRESHOLD {
        let remainder = EXPANSION_REMAINDER_CONSTANT * (s_max * a).powi(3)
            + z_abs * z_abs / 4.0 * series.sq_tail_bound()
            + 4.0 * EPS;
        if remainder <= expansion_tol {
            return PlannedFactor {
                plan: FactorPlan::Expansion {
                    sq_sum: series.sq_sum(),
                },
                error: remainder,
            };
        }
    }
    let (q, bound) = strip_quadrature_points(series, z_abs, factor_tol / 2.0, 2);
    let rounding = EPS * (4.0 + (q as f64).log2() + 2.0 * z_abs * series.abs_sum());
    PlannedFactor {
        plan: FactorPlan::Quadrature {
            samples: series.samples(q),
        },
        error: bound + z_abs * series.tail_bound + rounding,
    }
}

fn series_tol(factor_tol: f64, z_abs: f64) -> f64 {
    if z_abs > 0.0 {
        factor_tol / (2.0 * z_abs)
    } else {
        f64::INFINITY
    }
}

/// `Mtilde_sigma(z)` restricted to `p <= p_max`, with a pointwise certificate.
pub fn euler_product(
    spec: &LFunctionSpec,
    sigma: f64,
    z: Complex64,
    p_max: u64,
    factor_tol: f64,
) -> Result<LocalFactorValue> {
    check_sigma(sigma)?;
    let z_abs = z.norm();
    if z_abs == 0.0 {
        return Ok(LocalFactorValue::ONE);
    }
    let s = z.re.abs() + z.im.abs();
    let table = PrimeTable::new(p_max);
    let mut value = Complex64::new(1.0, 0.0);
    let mut err = 0.0;
    for &p in table.primes() {
        let series = local_series(spec, p, sigma, series_tol(factor_tol, z_abs))?.negated();
        let planned = plan_factor(&series, z_abs, s, factor_tol, factor_tol);
        let factor = match planned.plan {
            FactorPlan::Expansion { sq_sum } => Complex64::new(1.0 - z.norm_sqr() / 4.0 * sq_sum, 0.0),
            FactorPlan::Quadrature { samples } => crate::localfactor::trapezoid(&samples, z),
        };
        value *= factor;
        err += planned.error;
    }
    Ok(LocalFactorValue {
        value,
        abs_error: err.exp_m1(),
    })
}

/// Required `p_max` for a tail certificate below `tol`, by doubling.
fn required_p_max(spec: &LFunctionSpec, sigma: f64, s_max: f64, tol: f64, from: u64) -> u64 {
    let mut p = from.max(crate::localfactor::TAIL_MIN_P);
    for _ in 0..64 {
        if let Ok(b) = tail_log_bound(spec, sigma, s_max, p) {
            if b <= tol {
                return p;
            }
        }
        p = p.saturating_mul(2);
    }
    u64::MAX
}

/// Samples `prod_{p <= p_max} Mtilde_{sigma,p}` on the lattice.
pub fn characteristic_grid(spec: &LFunctionSpec, cfg: &GridConfig) -> Result<CharacteristicGrid> {
    cfg.validate()?;
    let n = cfg.n;
    let half = n / 2;
    let du = 2.0 * cfg.z_max / n as f64;
    let coords: Vec<f64> = (0..n).map(|j| (j as f64 - half as f64) * du).collect();
    let z_abs = cfg.z_max * std::f64::consts::SQRT_2;
    let s_max = 2.0 * cfg.z_max;

    let tail_cert = match tail_log_bound(spec, cfg.sigma, s_max, cfg.p_max) {
        Ok(b) => b,
        Err(Error::ExpansionInapplicable { .. }) => f64::INFINITY,
        Err(e) => return Err(e),
    };
    if let Some(tol) = cfg.tail_tol {
        if !(tail_cert <= tol) {
            return Err(Error::TailTooLarge {
                tail_cert,
                tol,
                required_p_max: required_p_max(spec, cfg.sigma, s_max, tol, cfg.p_max),
            });
        }
    }

    let table = PrimeTable::new(cfg.p_max);
    let mut values = vec![Complex64::new(1.0, 0.0); n * n];
    let mut diag = GridDiagnostics::default();
    let tol = series_tol(cfg.factor_tol, z_abs);

    for &p in table.primes() {
        let series = local_series(spec, p, cfg.sigma, tol)?.negated();
        let planned = plan_factor(&series, z_abs, s_max, cfg.factor_tol, cfg.expansion_tol);
        diag.factor_error_sum += planned.error;
        match planned.plan {
            FactorPlan::Expansion { sq_sum } => {
                diag.primes_expansion += 1;
                apply_expansion(&mut values, &coords, sq_sum);
            }
            FactorPlan::Quadrature { samples } => {
                diag.primes_quadrature += 1;
                diag.max_quad_points = diag.max_quad_points.max(samples.len());
                diag.total_quad_points += samples.len();
                apply_quadrature(&mut values, &coords, &samples);
            }
        }
    }

    // Mtilde(-w) = conj Mtilde(w): rows below the axis from rows above it.
    for r in half + 1..n {
        for c in 1..n {
            values[r * n + c] = values[(n - r) * n + (n - c)].conj();
        }
    }

    Ok(CharacteristicGrid {
        label: spec.name().to_string(),
        sigma: cfg.sigma,
        z_max: cfg.z_max,
        n,
        p_max: cfg.p_max,
        values,
        tail_cert,
        abs_error: diag.factor_error_sum.exp_m1(),
        real_coefficients: spec.has_real_coefficients(),
        diagnostics: diag,
    })
}

// Rows 0..=n/2 in full and column 0 of the remaining rows.
fn for_each_needed_row<F>(values: &mut [Complex64], n: usize, f: F)
where
    F: Fn(usize, &mut [Complex64]) + Sync,
{
    values
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(r, row)| {
            if r <= n / 2 {
                f(r, row);
            } else {
                f(r, &mut row[..1]);
            }
        });
}

fn apply_expansion(values: &mut [Complex64], coords: &[f64], sq_sum: f64) {
    let n = coords.len();
    for_each_needed_row(values, n, |r, row| {
        let v = coords[r];
        for (c, slot) in row.iter_mut().enumerate() {
            let u = coords[c];
            *slot *= 1.0 - (u * u + v * v) / 4.0 * sq_sum;
        }
    });
}

// factor(r, c) = (1/Q) sum_k exp(i v_r b_k) exp(i u_c a_k), S(theta_k) = a_k + i b_k
fn apply_quadrature(values: &mut [Complex64], coords: &[f64], samples: &[Complex64]) {
    let n = coords.len();
    let q = samples.len();
    let mut ex_re = vec![0.0; q * n];
    let mut ex_im = vec![0.0; q * n];
    for (k, s) in samples.iter().enumerate() {
        for (c, &u) in coords.iter().enumerate() {
            let (sn, cs) = (u * s.re).sin_cos();
            ex_re[k * n + c] = cs;
            ex_im[k * n + c] = sn;
        }
    }
    let inv_q = 1.0 / q as f64;
    for_each_needed_row(values, n, |r, row| {
        let width = row.len();
        let v = coords[r];
        let mut acc_re = vec![0.0; width];
        let mut acc_im = vec![0.0; width];
        for (k, s) in samples.iter().enumerate() {
            let (yi, yr) = (v * s.im).sin_cos();
            let xr = &ex_re[k * n..k * n + width];
            let xi = &ex_im[k * n..k * n + width];
            for c in 0..width {
                acc_re[c] += yr * xr[c] - yi * xi[c];
                acc_im[c] += yr * xi[c] + yi * xr[c];
            }
        }
        for (c, slot) in row.iter_mut().enumerate() {
            *slot *= Complex64::new(acc_re[c] * inv_q, acc_im[c] * inv_q);
        }
    });
}

impl CharacteristicGrid {
    /// Samples an arbitrary function on the lattice (control cases).
    pub fn from_fn<F>(label: &str, sigma: f64, z_max: f64, n: usize, f: F) -> Result<Self>
    where
        F: Fn(f64, f64) -> Complex64 + Sync,
    {
        GridConfig::new(sigma.max(0.6), z_max, n, 2).validate()?;
        let du = 2.0 * z_max / n as f64;
        let half = n as f64 / 2.0;
        let values = (0..n * n)
            .into_par_iter()
            .map(|idx| {
                let (r, c) = (idx / n, idx % n);
                f((c as f64 - half) * du, (r as f64 - half) * du)
            })
            .collect();
        Ok(Self {
            label: label.to_string(),
            sigma,
            z_max,
            n,
            p_max: 0,
            values,
            tail_cert: 0.0,
            abs_error: 0.0,
            real_coefficients: true,
            diagnostics: GridDiagnostics::default(),
        })
    }

    pub fn du(&self) -> f64 {
        2.0 * self.z_max / self.n as f64
    }

    pub fn coord(&self, j: usize) -> f64 {
        (j as f64 - (self.n / 2) as f64) * self.du()
    }

    /// Sample at row `r` (imaginary part) and column `c` (real part).
    pub fn at(&self, r: usize, c: usize) -> Complex64 {
        self.values[r * self.n + c]
    }

    pub fn center(&self) -> Complex64 {
        self.at(self.n / 2, self.n / 2)
    }

    /// Lattice indices of the point nearest `z`, if inside the box.
    pub fn index_of(&self, z: Complex64) -> Option<(usize, usize)> {
        let idx = |t: f64| {
            let j = (t / self.du()).round() + (self.n / 2) as f64;
            (j >= 0.0 && j < self.n as f64).then_some(j as usize)
        };
        Some((idx(z.im)?, idx(z.re)?))
    }

    /// Total certificate against the untruncated product:
    /// `abs_error + expm1(tail_cert)`.
    pub fn total_error(&self) -> f64 {
        self.abs_error + self.tail_cert.exp_m1()
    }

    /// Largest `|value|` on the outer ring of the lattice.
    pub fn boundary_max(&self) -> f64 {
        let n = self.n;
        let mut m: f64 = 0.0;
        for i in 0..n {
            for (r, c) in [(0, i), (n - 1, i), (i, 0), (i, n - 1)] {
                m = m.max(self.at(r, c).norm());
            }
        }
        m
    }

    /// `max |Mtilde(u, 0) - conj Mtilde(-u, 0)|` along the real axis.
    pub fn hermitian_residual(&self) -> f64 {
        let (n, h) = (self.n, self.n / 2);
        (1..n)
            .map(|c| (self.at(h, c) - self.at(h, n - c).conj()).norm())
            .fold(0.0, f64::max)
    }

    /// `max |Mtilde(x + iy) - Mtilde(x - iy)|` over the lattice; vanishes for
    /// real coefficients.
    pub fn reflection_residual(&self) -> f64 {
        let n = self.n;
        let mut m: f64 = 0.0;
        for r in 1..n {
            for c in 0..n {
                m = m.max((self.at(r, c) - self.at(n - r, c)).norm());
            }
        }
        m
    }

    /// `sum f(z) Mtilde(z) du dv / 2pi` over the lattice.
    pub fn integrate<F>(&self, f: F) -> Complex64
    where
        F: Fn(f64, f64) -> Complex64,
    {
        let cell = self.du() * self.du() / (2.0 * PI);
        let mut total = Complex64::new(0.0, 0.0);
        for r in 0..self.n {
            let v = self.coord(r);
            let mut row = Complex64::new(0.0, 0.0);
            for c in 0..self.n {
                row += f(self.coord(c), v) * self.at(r, c);
            }
            total += row;
        }
        total * cell
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DensityDiagnostics {
    /// `sum values * cell_measure`.
    pub mass: f64,
    pub eps_mass: f64,
    pub min_value: f64,
    pub max_value: f64,
    /// Largest imaginary part discarded after the inverse transform.
    pub imag_residual: f64,
    pub boundary_max: f64,
}

#[derive(Debug, Clone)]
pub struct DensityGrid {
    pub label: String,
    pub sigma: f64,
    /// Half-width of the density lattice.
    pub w_max: f64,
    pub n: usize,
    pub dx: f64,
    pub values: Vec<f64>,
    /// `dx dy / 2pi`.
    pub cell_measure: f64,
    pub p_max: u64,
    pub source_abs_error: f64,
    pub tail_cert: f64,
    pub diagnostics: DensityDiagnostics,
}

/// Closed axis-parallel rectangle `[x0, x1] x [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self { x0, x1, y0, y1 }
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0).max(0.0) * (self.y1 - self.y0).max(0.0)
    }

    pub fn reflect_y(&self) -> Self {
        Self::new(self.x0, self.x1, -self.y1, -self.y0)
    }

    pub fn contains(&self, z: Complex64) -> bool {
        z.re >= self.x0 && z.re <= self.x1 && z.im >= self.y0 && z.im <= self.y1
    }

    pub fn is_valid(&self) -> bool {
        self.x0 <= self.x1 && self.y0 <= self.y1 && [self.x0, self.x1, self.y0, self.y1].iter().all(|v| v.is_finite())
    }
}

/// Inverse transform with the default boundary threshold.
pub fn invert_to_density(grid: &CharacteristicGrid) -> Result<DensityGrid> {
    invert_to_density_with(grid, DEFAULT_BOUNDARY_THRESHOLD)
}

/// `M(z) = int Mtilde(w) psi_{-z}(w) |dw|` on the dual lattice:
/// `M_lk = (-1)^{k+l} (du dv / 2pi) DFT[(-1)^{i+j} Mtilde_ij]_lk` (needs `4 | n`).
pub fn invert_to_density_with(grid: &CharacteristicGrid, threshold: f64) -> Result<DensityGrid> {
    let n = grid.n;
    let boundary_max = grid.boundary_max();
    if !(boundary_max <= threshold) {
        return Err(Error::BoundaryDecay {
            max_boundary: boundary_max,
            threshold,
        });
    }
    let sign = |k: usize| if k % 2 == 0 { 1.0 } else { -1.0 };
    let mut buf: Vec<Complex64> = grid
        .values
        .iter()
        .enumerate()
        .map(|(idx, v)| v * sign(idx / n + idx % n))
        .collect();
    fft2_forward(&mut buf, n);

    let du = grid.du();
    let scale = du * du / (2.0 * PI);
    let dx = PI / grid.z_max;
    let cell_measure = dx * dx / (2.0 * PI);
    let mut values = Vec::with_capacity(n * n);
    let mut imag_residual: f64 = 0.0;
    for (idx, v) in buf.iter().enumerate() {
        let m = v * (scale * sign(idx / n + idx % n));
        imag_residual = imag_residual.max(m.im.abs());
        values.push(m.re);
    }
    let mass = pairwise_sum(&values) * cell_measure;
    let min_value = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max_value = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(DensityGrid {
        label: grid.label.clone(),
        sigma: grid.sigma,
        w_max: dx * n as f64 / 2.0,
        n,
        dx,
        values,
        cell_measure,
        p_max: grid.p_max,
        source_abs_error: grid.abs_error,
        tail_cert: grid.tail_cert,
        diagnostics: DensityDiagnostics {
            mass,
            eps_mass: grid.abs_error + 1e-10,
            min_value,
            max_value,
            imag_residual,
            boundary_max,
        },
    })
}

fn fft2_forward(buf: &mut [Complex64], n: usize) {
    let fft = FftPlanner::new().plan_fft_forward(n);
    fft.process(buf);
    transpose(buf, n);
    fft.process(buf);
    transpose(buf, n);
}

fn transpose(buf: &mut [Complex64], n: usize) {
    for r in 0..n {
        for c in r + 1..n {
            buf.swap(r * n + c, c * n + r);
        }
    }
}

/// Fixed-order pairwise summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        xs.iter().sum()
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

impl DensityGrid {
    pub fn coord(&self, k: usize) -> f64 {
        (k as f64 - (self.n / 2) as f64) * self.dx
    }

    /// First and last lattice coordinate per axis.
    pub fn extent(&self) -> (f64, f64) {
        (self.coord(0), self.coord(self.n - 1))
    }

    pub fn at(&self, l: usize, k: usize) -> f64 {
        self.values[l * self.n + k]
    }

    pub fn full_rect(&self) -> Rect {
        let (lo, hi) = self.extent();
        Rect::new(lo, hi, lo, hi)
    }

    fn check_extent(&self, r: &Rect) -> Result<()> {
        let (lo, hi) = self.extent();
        let slack = 1e-9 * self.dx;
        if !r.is_valid()
            || r.x0 < lo - slack
            || r.y0 < lo - slack
            || r.x1 > hi + slack
            || r.y1 > hi + slack
        {
            return Err(Error::ExtentViolation {
                x0: r.x0,
                x1: r.x1,
                y0: r.y0,
                y1: r.y1,
                extent: (lo, hi),
            });
        }
        Ok(())
    }

    // Integrals of the piecewise-linear hat functions over [a, b].
    fn axis_weights(&self, a: f64, b: f64) -> Vec<(usize, f64)> {
        let (lo, _) = self.extent();
        let n = self.n;
        let mut out: Vec<(usize, f64)> = Vec::new();
        if b <= a {
            return out;
        }
        let first = (((a - lo) / self.dx).floor().max(0.0) as usize).min(n - 2);
        let last = (((b - lo) / self.dx).ceil().max(1.0) as usize).min(n - 1);
        let mut push = |k: usize, w: f64| {
            if let Some(entry) = out.last_mut().filter(|e| e.0 == k) {
                entry.1 += w;
            } else {
                out.push((k, w));
            }
        };
        for k in first..last {
            let xk = self.coord(k);
            let t0 = ((a - xk) / self.dx).clamp(0.0, 1.0);
            let t1 = ((b - xk) / self.dx).clamp(0.0, 1.0);
            if t1 <= t0 {
                continue;
            }
            let left = (t1 - t1 * t1 / 2.0) - (t0 - t0 * t0 / 2.0);
            let right = (t1 * t1 - t0 * t0) / 2.0;
            push(k, left * self.dx);
            push(k + 1, right * self.dx);
        }
        out
    }

    /// `int_R M |dz|` for the bilinear interpolant of `max(M, 0)`.
    pub fn rectangle_mass(&self, r: &Rect) -> Result<f64> {
        self.check_extent(r)?;
        let wx = self.axis_weights(r.x0, r.x1);
        let wy = self.axis_weights(r.y0, r.y1);
        let mut total = 0.0;
        for &(l, a) in &wy {
            let mut row = 0.0;
            for &(k, b) in &wx {
                row += b * self.at(l, k).max(0.0);
            }
            total += a * row;
        }
        Ok(total / (2.0 * PI))
    }

    /// `m(x_k) = sum_l M(x_k + i y_l) dy / sqrt(2pi)`, a density for `|dx| = dx / sqrt(2pi)`.
    pub fn marginal_x(&self) -> Vec<f64> {
        let w = self.dx / (2.0 * PI).sqrt();
        (0..self.n)
            .map(|k| {
                let col: Vec<f64> = (0..self.n).map(|l| self.at(l, k)).collect();
                pairwise_sum(&col) * w
            })
            .collect()
    }

    /// `sum f(z) M(z) cell_measure` over the lattice.
    pub fn integrate<F>(&self, f: F) -> f64
    where
        F: Fn(f64, f64) -> f64,
    {
        let mut rows = Vec::with_capacity(self.n);
        for l in 0..self.n {
            let y = self.coord(l);
            let terms: Vec<f64> = (0..self.n).map(|k| f(self.coord(k), y) * self.at(l, k)).collect();
            rows.push(pairwise_sum(&terms));
        }
        pairwise_sum(&rows) * self.cell_measure
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Fitted `c` in `log|Mtilde(x, 0)| ~ alpha - c x^{1/sigma} (log x)^{1/sigma - 1}`.
    pub c: f64,
    pub alpha: f64,
    /// Root-mean-square residual of that fit.
    pub rms_residual: f64,
    /// Slope of `log(-log|Mtilde|)` against `log x`.
    pub free_exponent: f64,
    pub points: usize,
    pub k_fit: f64,
}

/// Least-squares decay fit along the positive real axis for `x >= k_fit`.
/// Samples within ten times `abs_error` of zero are dropped.
pub fn decay_diagnostic(grid: &CharacteristicGrid, k_fit: f64) -> Result<DecayFit> {
    if !(k_fit > 1.0) {
        return Err(Error::InvalidArgument("k_fit must exceed 1".into()));
    }
    let h = grid.n / 2;
    let inv = 1.0 / grid.sigma;
    let mut pts = Vec::new();
    for c in h..grid.n {
        let x = grid.coord(c);
        let m = grid.at(h, c).norm();
        if x >= k_fit && m > 10.0 * grid.abs_error && m > 0.0 {
            pts.push((x, m.ln()));
        }
    }
    if pts.len() < 8 {
        return Err(Error::TooFewFitPoints(pts.len()));
    }
    let shape: Vec<(f64, f64)> = pts
        .iter()
        .map(|&(x, y)| (-(x.powf(inv) * x.ln().powf(inv - 1.0)), y))
        .collect();
    let (slope, alpha, rms) = linear_fit(&shape);

    let loglog: Vec<(f64, f64)> = pts
        .iter()
        .filter(|p| p.1 < 0.0)
        .map(|&(x, y)| (x.ln(), (-y).ln()))
        .collect();
    let free_exponent = if loglog.len() >= 2 {
        linear_fit(&loglog).0
    } else {
        f64::NAN
    };
    Ok(DecayFit {
        c: slope,
        alpha,
        rms_residual: rms,
        free_exponent,
        points: pts.len(),
        k_fit,
    })
}

/// Ordinary least squares `y = slope x + intercept`; returns the RMS residual too.
pub(crate) fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = pts
        .iter()
        .map(|p| (p.1 - slope * p.0 - intercept).powi(2))
        .sum();
    (slope, intercept, (rss / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_grid(z_max: f64, n: usize) -> CharacteristicGrid {
        CharacteristicGrid::from_fn("gaussian", 1.0, z_max, n, |u, v| {
            Complex64::new((-(u * u + v * v) / 2.0).exp(), 0.0)
        })
        .unwrap()
    }

    #[test]
    fn gaussian_self_duality() {
        let d = invert_to_density(&gaussian_grid(20.0, 256)).unwrap();
        let mut err: f64 = 0.0;
        for l in 0..d.n {
            for k in 0..d.n {
                let (x, y) = (d.coord(k), d.coord(l));
                err = err.max((d.at(l, k) - (-(x * x + y * y) / 2.0).exp()).abs());
            }
        }
        assert!(err <= 1e-6, "max error {err}");
        assert!((d.diagnostics.mass - 1.0).abs() <= d.diagnostics.eps_mass);
        assert!(d.diagnostics.imag_residual <= 1e-10);
    }

    #[test]
    fn rectangle_masses() {
        let d = invert_to_density(&gaussian_grid(20.0, 256)).unwrap();
        let full = d.rectangle_mass(&d.full_rect()).unwrap();
        assert!((full - 1.0).abs() < 1e-9);
        assert_eq!(d.rectangle_mass(&Rect::new(0.3, 0.3, -1.0, 1.0)).unwrap(), 0.0);
        // the unit Gaussian has |dz|-mass erf(a/sqrt2)^2 on [-a, a]^2
        let a: f64 = 1.3;
        let expected = statrs::function::erf::erf(a / 2f64.sqrt()).powi(2);
        let m = d.rectangle_mass(&Rect::new(-a, a, -a, a)).unwrap();
        assert!((m - expected).abs() < 2e-3, "{m} vs {expected}");
        let r = Rect::new(0.2, 1.7, 0.1, 0.9);
        let a = d.rectangle_mass(&r).unwrap();
        let b = d.rectangle_mass(&r.reflect_y()).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert!(matches!(
            d.rectangle_mass(&Rect::new(0.0, 100.0, 0.0, 1.0)),
            Err(Error::ExtentViolation { .. })
        ));
    }

    #[test]
    fn marginal_integrates_to_mass() {
        let d = invert_to_density(&gaussian_grid(20.0, 128)).unwrap();
        let m = d.marginal_x();
        let total = pairwise_sum(&m) * d.dx / (2.0 * PI).sqrt();
        assert!((total - d.diagnostics.mass).abs() < 1e-12);
        // m(x) = exp(-x^2/2) for the unit Gaussian
        let k = d.n / 2 + 3;
        assert!((m[k] - (-d.coord(k).powi(2) / 2.0).exp()).abs() < 1e-9);
    }

    #[test]
    fn boundary_check_rejects_slow_decay() {
        let g = CharacteristicGrid::from_fn("slow", 1.0, 4.0, 32, |u, v| {
            Complex64::new((-(u * u + v * v) / 8.0).exp(), 0.0)
        })
        .unwrap();
        assert!(matches!(invert_to_density(&g), Err(Error::BoundaryDecay { .. })));
    }

    #[test]
    fn gaussian_decay_fit_is_quadratic() {
        let fit = decay_diagnostic(&gaussian_grid(20.0, 256), 2.0).unwrap();
        assert!((fit.free_exponent - 2.0).abs() < 1e-6);
        assert!(fit.rms_residual > 0.0);
        assert!(matches!(
            decay_diagnostic(&gaussian_grid(20.0, 16), 15.0),
            Err(Error::TooFewFitPoints(_))
        ));
    }

    #[test]
    fn small_zeta_grid() {
        let spec = LFunctionSpec::zeta();
        let cfg = GridConfig::new(1.2, 16.0, 64, 200);
        let g = characteristic_grid(&spec, &cfg).unwrap();
        assert!((g.center() - 1.0).norm() <= g.abs_error);
        assert!(g.abs_error < 1e-11);
        for v in &g.values {
            assert!(v.norm() <= 1.0 + g.abs_error);
        }
        // spot check against the single-point product
        for (r, c) in [(40usize, 33usize), (20, 50), (32, 0), (63, 0), (50, 10)] {
            let z = Complex64::new(g.coord(c), g.coord(r));
            let p = euler_product(&spec, 1.2, z, 200, 1e-14).unwrap();
            assert!((p.value - g.at(r, c)).norm() <= p.abs_error + g.abs_error, "({r}, {c})");
        }
        assert!(g.hermitian_residual() <= 2.0 * g.abs_error);
        assert!(g.reflection_residual() <= 2.0 * g.abs_error);
    }

    #[test]
    fn tail_tolerance_reports_required_p_max() {
        let spec = LFunctionSpec::zeta();
        let mut cfg = GridConfig::new(1.0, 10.0, 16, 100);
        cfg.tail_tol = Some(1e-3);
        match characteristic_grid(&spec, &cfg) {
            Err(Error::TailTooLarge { required_p_max, .. }) => {
                assert!(required_p_max > 100);
                let b = tail_log_bound(&spec, 1.0, 20.0, required_p_max).unwrap();
                assert!(b <= 1e-3);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        let spec = LFunctionSpec::zeta();
        assert!(characteristic_grid(&spec, &GridConfig::new(0.5, 10.0, 64, 100)).is_err());
        assert!(characteristic_grid(&spec, &GridConfig::new(1.0, 10.0, 48, 100)).is_err());
    }
}
