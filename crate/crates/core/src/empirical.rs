//! Empirical value clouds: time samples of an approximant along `sigma + it`,
//! and the random Euler product model with independent uniform phases.
//!
//! Random model generator: ChaCha8 (`rand_chacha`), key from the seed, stream
//! `p` per prime; the phase of sample `i` at prime `p` is the `i`-th `u64` of
//! that stream, mapped to `[0, 1)` by its top 53 bits. Draws are therefore
//! independent of iteration order and thread count.

use crate::approximant::{Approximant, ApproximantConfig};
use crate::density::io::csv_number;
use crate::density::{pairwise_sum, Rect};
use crate::error::{check_sigma, Error, Result};
use crate::lfunc::LFunctionSpec;
use crate::localfactor::{local_series, LocalSeries};
use crate::primes::PrimeTable;
use num_complex::Complex64;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Samples per work item of the random model.
const BLOCK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    TLine,
    RandomModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudParams {
    pub spec: String,
    pub sigma: f64,
    pub x: f64,
    /// Time horizon (t-line only).
    pub t: Option<f64>,
    pub count: usize,
    /// Generator seed (random model only).
    pub seed: Option<u64>,
    /// Bound on `|exact - computed|` for every point.
    pub truncation_bound: f64,
}

#[derive(Debug, Clone)]
pub struct SampleCloud {
    pub points: Vec<Complex64>,
    pub source: Source,
    pub params: CloudParams,
}

impl SampleCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `t_j` for t-line clouds, the sample index otherwise.
    pub fn abscissa(&self, j: usize) -> f64 {
        match (self.source, self.params.t) {
            (Source::TLine, Some(t)) => (j as f64 + 0.5) * t / self.points.len() as f64,
            _ => j as f64,
        }
    }

    /// CSV `t_or_index,re,im`.
    pub fn write_csv<W: Write>(&self, w: &mut W, digest: Option<&str>) -> Result<()> {
        if let Some(d) = digest {
            writeln!(w, "# config_digest={d}")?;
        }
        writeln!(w, "t_or_index,re,im")?;
        for (j, p) in self.points.iter().enumerate() {
            writeln!(w, "{},{},{}", csv_number(self.abscissa(j)), csv_number(p.re), csv_number(p.im))?;
        }
        Ok(())
    }
}

/// Approximant values at the midpoints `t_j = (j + 1/2) T / num_samples`.
pub fn sample_t_line(
    spec: &LFunctionSpec,
    config: &ApproximantConfig,
    t: f64,
    num_samples: usize,
) -> Result<SampleCloud> {
    if num_samples < 1000 {
        return Err(Error::InvalidArgument(format!(
            "need at least 1000 samples, got {num_samples}"
        )));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!("T must be positive, got {t}")));
    }
    let approx = Approximant::new(spec, config.clone())?;
    let dt = t / num_samples as f64;
    let points = approx.evaluate_progression(0.5 * dt, dt, num_samples);
    Ok(SampleCloud {
        points,
        source: Source::TLine,
        params: CloudParams {
            spec: spec.name().to_string(),
            sigma: config.sigma,
            x: config.x,
            t: Some(t),
            count: num_samples,
            seed: None,
            truncation_bound: approx.tail_bound,
        },
    })
}

/// Uniform `[0, 1)` from the top 53 bits.
fn unit(u: u64) -> f64 {
    (u >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Phases `theta_{p,i}` for `i in start..start + len`.
pub fn model_phases(seed: u64, p: u64, start: usize, len: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(p);
    rng.set_word_pos(2 * start as u128);
    (0..len).map(|_| unit(rng.next_u64())).collect()
}

/// `-sum_{p <= X^2} sum_m Lambda_F(p^m) p^{-m sigma} e^{2 pi i m theta_p}` per sample.
/// Inner sums are truncated so the total tail over all primes is below `1e-12`.
pub fn sample_random_model(
    spec: &LFunctionSpec,
    sigma: f64,
    x: f64,
    count: usize,
    seed: u64,
) -> Result<SampleCloud> {
    check_sigma(sigma)?;
    if !(x > 1.0 && x.is_finite()) {
        return Err(Error::InvalidArgument(format!("X must exceed 1, got {x}")));
    }
    let limit = (x * x).floor() as u64;
    let table = PrimeTable::new(limit);
    let per_prime = 1e-12 / table.primes().len().max(1) as f64;
    let series: Vec<LocalSeries> = table
        .primes()
        .iter()
        .map(|&p| local_series(spec, p, sigma, per_prime).map(|s| s.negated()))
        .collect::<Result<_>>()?;
    let truncation_bound = series.iter().map(|s| s.tail_bound).sum();

    let blocks = count.div_ceil(BLOCK);
    let parts: Vec<Vec<Complex64>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let start = b * BLOCK;
            let len = BLOCK.min(count - start);
            let mut acc = vec![Complex64::new(0.0, 0.0); len];
            for s in &series {
                let phases = model_phases(seed, s.p, start, len);
                for (a, th) in acc.iter_mut().zip(phases) {
                    *a += s.eval(th);
                }
            }
            acc
        })
        .collect();
    Ok(SampleCloud {
        points: parts.concat(),
        source: Source::RandomModel,
        params: CloudParams {
            spec: spec.name().to_string(),
            sigma,
            x,
            t: None,
            count,
            seed: Some(seed),
            truncation_bound,
        },
    })
}

/// `psi_z(w) = exp(i Re(z conj w))`.
pub fn psi(z: Complex64, w: Complex64) -> Complex64 {
    Complex64::from_polar(1.0, z.re * w.re + z.im * w.im)
}

/// Mean of `psi_z` over the cloud, summed pairwise in index order.
pub fn empirical_char(cloud: &SampleCloud, z: Complex64) -> Result<Complex64> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let vals: Vec<Complex64> = cloud.points.par_iter().map(|&w| psi(z, w)).collect();
    let re: Vec<f64> = vals.iter().map(|v| v.re).collect();
    let im: Vec<f64> = vals.iter().map(|v| v.im).collect();
    let n = cloud.len() as f64;
    Ok(Complex64::new(pairwise_sum(&re) / n, pairwise_sum(&im) / n))
}

/// Standard error of a unimodular sample mean: `sqrt((1 - |mean|^2) / N)`.
pub fn mc_std_error(mean: Complex64, count: usize) -> f64 {
    ((1.0 - mean.norm_sqr()).max(0.0) / count as f64).sqrt()
}

/// Mean of `f` over the cloud, pairwise in index order.
pub fn cloud_average<F>(cloud: &SampleCloud, f: F) -> Result<f64>
where
    F: Fn(Complex64) -> f64 + Sync,
{
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let vals: Vec<f64> = cloud.points.par_iter().map(|&w| f(w)).collect();
    Ok(pairwise_sum(&vals) / cloud.len() as f64)
}

/// Fraction of points in the closed rectangle.
pub fn rectangle_frequency(cloud: &SampleCloud, r: &Rect) -> Result<f64> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let hits = cloud.points.iter().filter(|&&w| r.contains(w)).count();
    Ok(hits as f64 / cloud.len() as f64)
}

/// `sqrt(f (1 - f) / N)`.
pub fn binomial_error(freq: f64, count: usize) -> f64 {
    (freq * (1.0 - freq) / count as f64).sqrt()
}

/// Rectangular-bin histogram; masses are over the points that fall inside
/// the binned range and sum to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram2D {
    pub x_edges: Vec<f64>,
    pub y_edges: Vec<f64>,
    /// Row-major in `y`: `masses[iy * nx + ix]`.
    pub masses: Vec<f64>,
    pub inside: usize,
    pub total: usize,
}

impl Histogram2D {
    pub fn new(cloud: &SampleCloud, range: &Rect, nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 || !range.is_valid() || range.area() <= 0.0 {
            return Err(Error::InvalidArgument("histogram needs bins and a nonempty range".into()));
        }
        let edges = |lo: f64, hi: f64, k: usize| -> Vec<f64> {
            (0..=k).map(|i| lo + (hi - lo) * i as f64 / k as f64).collect()
        };
        let x_edges = edges(range.x0, range.x1, nx);
        let y_edges = edges(range.y0, range.y1, ny);
        let bin = |v: f64, lo: f64, hi: f64, k: usize| -> usize {
            (((v - lo) / (hi - lo) * k as f64).floor() as usize).min(k - 1)
        };
        let mut counts = vec![0usize; nx * ny];
        let mut inside = 0;
        for &w in &cloud.points {
            if range.contains(w) {
                let ix = bin(w.re, range.x0, range.x1, nx);
                let iy = bin(w.im, range.y0, range.y1, ny);
                counts[iy * nx + ix] += 1;
                inside += 1;
            }
        }
        if inside == 0 {
            return Err(Error::EmptyCloud);
        }
        let masses = counts.iter().map(|&c| c as f64 / inside as f64).collect();
        Ok(Self {
            x_edges,
            y_edges,
            masses,
            inside,
            total: cloud.len(),
        })
    }

    pub fn nx(&self) -> usize {
        self.x_edges.len() - 1
    }

    pub fn ny(&self) -> usize {
        self.y_edges.len() - 1
    }

    /// CSV `x_lo,x_hi,y_lo,y_hi,mass`.
    pub fn write_csv<W: Write>(&self, w: &mut W, digest: Option<&str>) -> Result<()> {
        if let Some(d) = digest {
            writeln!(w, "# config_digest={d}")?;
        }
        writeln!(w, "x_lo,x_hi,y_lo,y_hi,mass")?;
        let nx = self.nx();
        for iy in 0..self.ny() {
            for ix in 0..nx {
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    csv_number(self.x_edges[ix]),
                    csv_number(self.x_edges[ix + 1]),
                    csv_number(self.y_edges[iy]),
                    csv_number(self.y_edges[iy + 1]),
                    csv_number(self.masses[iy * nx + ix])
                )?;
            }
        }
        Ok(())
    }
}

/// `int_0^T n^{-it} dt / T` bound used by the t-line mean oracle: `2 / (T log n)`.
pub fn oscillation_bound(t: f64, n: f64) -> f64 {
    2.0 / (t * n.ln())
}

/// Midpoint-rule error estimate of a t-line rectangle frequency: boundary
/// crossings between consecutive samples, over the sample count.
pub fn midpoint_error_estimate(cloud: &SampleCloud, r: &Rect) -> Result<f64> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let crossings = cloud
        .points
        .windows(2)
        .filter(|w| r.contains(w[0]) != r.contains(w[1]))
        .count();
    Ok(crossings as f64 / cloud.len() as f64)
}
