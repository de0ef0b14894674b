//! Mean-value and rectangle-discrepancy experiments, and the oracle self-test.
//!
//! Reports serialize to JSON with a `schema_version`; everything except the
//! `runtime` block is a deterministic function of the config.

use crate::approximant::{error_budget, schedule_log, ApproximantConfig, ErrorBudget, Variant};
use crate::density::io::csv_number;
use crate::density::{
    characteristic_grid, euler_product, invert_to_density, CharacteristicGrid, DensityGrid,
    GridConfig, Rect,
};
use crate::empirical::{
    binomial_error, cloud_average, empirical_char, mc_std_error, rectangle_frequency,
    sample_random_model, sample_t_line, SampleCloud,
};
use crate::error::{check_sigma, Error, Result};
use crate::lfunc::LFunctionSpec;
use crate::localfactor::{
    local_factor_adaptive, local_factor_expansion, local_series, smallness, tail_log_bound,
    SMALLNESS_THRESHOLD,
};
use crate::special::integrate;
use crate::testfn::{TestFunction, TestFunction1d};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::f64::consts::PI;
use std::io::Write;
use std::time::Instant;

pub const SCHEMA_VERSION: u32 = 1;

fn default_x() -> f64 {
    100.0
}

fn default_z_max() -> f64 {
    40.0
}

fn default_n() -> usize {
    512
}

fn default_model_samples() -> usize {
    1_000_000
}

fn default_t_samples() -> usize {
    200_000
}

fn default_variant() -> Variant {
    Variant::F
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSettings {
    #[serde(default = "default_z_max")]
    pub z_max: f64,
    #[serde(default = "default_n")]
    pub n: usize,
    /// Defaults to `floor(X^2)`.
    #[serde(default)]
    pub p_max: Option<u64>,
}

impl Default for GridSettings {
    fn default() -> Self {
        Self {
            z_max: default_z_max(),
            n: default_n(),
            p_max: None,
        }
    }
}

/// Inputs of the parameter schedule, used for the error-budget echo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleInput {
    pub theta: f64,
    pub delta: f64,
    pub t: f64,
    #[serde(default)]
    pub class2: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TLineSettings {
    pub t: f64,
    #[serde(default = "default_t_samples")]
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanValueSettings {
    pub phi: TestFunction,
    #[serde(default = "default_model_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
    /// Optional second left side from a t-line cloud.
    #[serde(default)]
    pub t_line: Option<TLineSettings>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscrepancySettings {
    pub rectangles: Vec<Rect>,
    pub ladder: Vec<f64>,
    #[serde(default = "default_t_samples")]
    pub samples: usize,
    #[serde(default = "default_variant")]
    pub variant: Variant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub lfunction: String,
    pub sigma: f64,
    #[serde(default = "default_x")]
    pub x: f64,
    #[serde(default)]
    pub grid: GridSettings,
    #[serde(default)]
    pub schedule: Option<ScheduleInput>,
    #[serde(default)]
    pub mean_value: Option<MeanValueSettings>,
    #[serde(default)]
    pub discrepancy: Option<DiscrepancySettings>,
    #[serde(default)]
    pub output_dir: Option<String>,
}

impl ExperimentConfig {
    pub fn new(lfunction: &str, sigma: f64) -> Self {
        Self {
            lfunction: lfunction.to_string(),
            sigma,
            x: default_x(),
            grid: GridSettings::default(),
            schedule: None,
            mean_value: None,
            discrepancy: None,
            output_dir: None,
        }
    }

    pub fn p_max(&self) -> u64 {
        self.grid.p_max.unwrap_or((self.x * self.x).floor() as u64)
    }

    pub fn grid_config(&self) -> GridConfig {
        GridConfig::new(self.sigma, self.grid.z_max, self.grid.n, self.p_max())
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex(&Sha256::digest(&bytes))
    }

    pub fn digest_bytes(&self) -> [u8; 32] {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).into()
    }

    pub fn spec(&self) -> Result<LFunctionSpec> {
        LFunctionSpec::from_name(&self.lfunction)
    }

    /// Consistency checks that need no heavy computation.
    pub fn validate(&self) -> Result<LFunctionSpec> {
        let spec = self.spec()?;
        check_sigma(self.sigma)?;
        if !(self.x > 1.0 && self.x.is_finite()) {
            return Err(Error::InvalidArgument(format!("x must exceed 1, got {}", self.x)));
        }
        self.grid_config().validate()?;
        if let Some(limit) = spec.coverage() {
            let need = self.p_max().max((self.x * self.x).floor() as u64);
            if need > limit {
                return Err(Error::Coverage {
                    limit,
                    requested: need,
                });
            }
        }
        if let Some(s) = &self.schedule {
            schedule_log(s.theta, s.delta, positive_log(s.t)?)?;
        }
        if let Some(m) = &self.mean_value {
            if m.samples == 0 {
                return Err(Error::InvalidArgument("mean_value.samples must be positive".into()));
            }
            if let Some(t) = &m.t_line {
                check_t_line(t.t, t.samples)?;
            }
        }
        if let Some(d) = &self.discrepancy {
            if d.rectangles.is_empty() {
                return Err(Error::InvalidArgument("discrepancy needs rectangles".into()));
            }
            if let Some(r) = d.rectangles.iter().find(|r| !r.is_valid()) {
                return Err(Error::InvalidArgument(format!("invalid rectangle {r:?}")));
            }
            if d.ladder.is_empty() {
                return Err(Error::InvalidArgument("discrepancy needs a T ladder".into()));
            }
            for &t in &d.ladder {
                check_t_line(t, d.samples)?;
            }
        }
        Ok(spec)
    }
}

fn check_t_line(t: f64, samples: usize) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!("T must be positive, got {t}")));
    }
    if samples < 1000 {
        return Err(Error::InvalidArgument(format!("t-line needs >= 1000 samples, got {samples}")));
    }
    Ok(())
}

fn positive_log(t: f64) -> Result<f64> {
    if !(t > 1.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!("T must exceed 1, got {t}")));
    }
    Ok(t.ln())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Hex SHA-256.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// Hex SHA-256 of the canonical JSON encoding of `value`.
pub fn json_digest<T: Serialize>(value: &T) -> String {
    sha256_hex(&serde_json::to_vec(value).expect("value serializes"))
}

/// Grid provenance and certificates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub sigma: f64,
    pub z_max: f64,
    pub n: usize,
    pub p_max: u64,
    pub abs_error: f64,
    /// `None` when no finite tail bound is available.
    pub tail_cert: Option<f64>,
    pub mass: f64,
    pub eps_mass: f64,
    pub min_density: f64,
    pub boundary_max: f64,
    pub density_half_width: f64,
}

impl GridSummary {
    pub fn new(g: &CharacteristicGrid, d: &DensityGrid) -> Self {
        Self {
            sigma: g.sigma,
            z_max: g.z_max,
            n: g.n,
            p_max: g.p_max,
            abs_error: g.abs_error,
            tail_cert: g.tail_cert.is_finite().then_some(g.tail_cert),
            mass: d.diagnostics.mass,
            eps_mass: d.diagnostics.eps_mass,
            min_density: d.diagnostics.min_value,
            boundary_max: g.boundary_max(),
            density_half_width: d.w_max,
        }
    }
}

/// The two error shapes of the mean-value estimate for this `Phi`:
/// `exp(-(log T)^{2 theta / 3} / 4) int_Omega |Phihat|` and `int_{C \ Omega} |Phihat|`,
/// `Omega = [-(log T)^delta, (log T)^delta]^2`. Implied constants are 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanValueBudget {
    pub log_t: f64,
    pub omega_half_width: f64,
    pub decay: f64,
    pub inside_l1: f64,
    pub outside_l1: f64,
    pub total: f64,
}

/// `int_{-h}^{h} |fhat|` and `int_{|xi| > h} |fhat|`.
fn abs_transform_split(f: &TestFunction1d, h: f64) -> (f64, f64) {
    let g = |xi: f64| f.transform(xi).norm();
    match *f {
        TestFunction1d::Zero => (0.0, 0.0),
        TestFunction1d::Gaussian { s } => {
            let root = (2.0 * PI).sqrt();
            let arg = s * h / 2f64.sqrt();
            (
                root * statrs::function::erf::erf(arg),
                root * statrs::function::erf::erfc(arg),
            )
        }
        TestFunction1d::BoxFejer { a, b, omega } => {
            let panels = |len: f64| ((len * (a.abs().max(b.abs()) + 1.0)).ceil() as usize).max(8);
            let full = 2.0 * integrate(g, 0.0, omega, panels(omega), 24);
            let hh = h.min(omega);
            let inside = 2.0 * integrate(g, 0.0, hh, panels(hh), 24);
            (inside, (full - inside).max(0.0))
        }
    }
}

pub fn mean_value_budget(phi: &TestFunction, theta: f64, delta: f64, log_t: f64) -> MeanValueBudget {
    let h = log_t.powf(delta);
    let (ix, ox) = abs_transform_split(&phi.fx, h);
    let (iy, oy) = abs_transform_split(&phi.fy, h);
    let inside = ix * iy / (2.0 * PI);
    // complement of the box: outside in x, or inside in x and outside in y
    let outside = (ox * (iy + oy) + ix * oy) / (2.0 * PI);
    let decay = (-0.25 * log_t.powf(2.0 * theta / 3.0)).exp();
    MeanValueBudget {
        log_t,
        omega_half_width: h,
        decay,
        inside_l1: inside,
        outside_l1: outside,
        total: decay * inside + outside,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetEcho {
    pub schedule: ScheduleInput,
    pub mean_value: Option<MeanValueBudget>,
    /// Four-term shape budget; absent with a reason when its hypotheses fail.
    pub terms: Option<ErrorBudget>,
    pub terms_unavailable: Option<String>,
}

fn budget_echo(spec: &LFunctionSpec, cfg: &ExperimentConfig, phi: Option<&TestFunction>) -> Result<Option<BudgetEcho>> {
    let Some(s) = &cfg.schedule else {
        return Ok(None);
    };
    let log_t = positive_log(s.t)?;
    let params = schedule_log(s.theta, s.delta, log_t)?;
    let z_abs = phi.map_or(params.omega_half_width, |p| p.transform_window().min(params.omega_half_width));
    let (terms, terms_unavailable) = match error_budget(spec, &params, cfg.sigma, z_abs, s.class2) {
        Ok(b) => (Some(b), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(Some(BudgetEcho {
        schedule: s.clone(),
        mean_value: phi.map(|p| mean_value_budget(p, s.theta, s.delta, log_t)),
        terms,
        terms_unavailable,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanValueResult {
    /// Random-model cloud average of `Phi`.
    pub lhs: f64,
    pub lhs_mc_error: f64,
    /// `sum Phi M cell` on the density lattice.
    pub rhs: f64,
    /// `sum Phihat(w) Mtilde(-w) cell` on the characteristic lattice.
    pub parseval_rhs: f64,
    pub parseval_imag: f64,
    /// `lhs - rhs`.
    pub difference: f64,
    pub grid_certificate: f64,
    pub lhs_tolerance: f64,
    pub lhs_within: bool,
    pub rhs_vs_parseval: f64,
    pub parseval_within: bool,
    pub lhs_t_line: Option<f64>,
    pub t_line_minus_rhs: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RectRow {
    pub rect: Rect,
    pub frequency: f64,
    pub mass: f64,
    /// `frequency - mass`.
    pub difference: f64,
    pub nu2: f64,
    /// `|difference| / (nu2 + 1)`.
    pub normalized: f64,
    pub binomial_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderStep {
    pub t: f64,
    pub samples: usize,
    pub rows: Vec<RectRow>,
    pub max_normalized: f64,
    pub mean_normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyResult {
    pub variant: Variant,
    pub ladder: Vec<LadderStep>,
    pub non_increasing: bool,
    /// `|1 - mass of the full window| + eps_mass`.
    pub leakage_certificate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeInfo {
    pub elapsed_seconds: f64,
    pub threads: usize,
    pub version: String,
}

impl RuntimeInfo {
    fn since(start: Instant) -> Self {
        Self {
            elapsed_seconds: start.elapsed().as_secs_f64(),
            threads: rayon::current_num_threads(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    MeanValue,
    Discrepancy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub kind: ExperimentKind,
    pub config: ExperimentConfig,
    pub config_digest: String,
    pub grid: GridSummary,
    pub budget: Option<BudgetEcho>,
    pub mean_value: Option<MeanValueResult>,
    pub discrepancy: Option<DiscrepancyResult>,
    pub runtime: Option<RuntimeInfo>,
}

impl ExperimentReport {
    /// Pretty JSON without the runtime block.
    pub fn payload_json(&self) -> String {
        let mut copy = self.clone();
        copy.runtime = None;
        serde_json::to_string_pretty(&copy).expect("report serializes")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Whether every oracle comparison in the report holds.
    pub fn passed(&self) -> bool {
        let mv = self
            .mean_value
            .as_ref()
            .is_none_or(|m| m.lhs_within && m.parseval_within);
        let leak = self.discrepancy.as_ref().is_none_or(|d| d.leakage_certificate.is_finite());
        mv && leak
    }

    /// CSV `t,x0,x1,y0,y1,frequency,mass,difference,nu2,normalized`.
    pub fn write_rectangles_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "# config_digest={}", self.config_digest)?;
        writeln!(w, "t,x0,x1,y0,y1,frequency,mass,difference,nu2,normalized")?;
        for step in self.discrepancy.iter().flat_map(|d| &d.ladder) {
            for r in &step.rows {
                let cols = [
                    step.t, r.rect.x0, r.rect.x1, r.rect.y0, r.rect.y1, r.frequency, r.mass, r.difference, r.nu2,
                    r.normalized,
                ];
                let line: Vec<String> = cols.iter().map(|&v| csv_number(v)).collect();
                writeln!(w, "{}", line.join(","))?;
            }
        }
        Ok(())
    }

    /// CSV `t,max_normalized,mean_normalized`.
    pub fn write_ladder_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "# config_digest={}", self.config_digest)?;
        writeln!(w, "t,max_normalized,mean_normalized")?;
        for step in self.discrepancy.iter().flat_map(|d| &d.ladder) {
            writeln!(
                w,
                "{},{},{}",
                csv_number(step.t),
                csv_number(step.max_normalized),
                csv_number(step.mean_normalized)
            )?;
        }
        Ok(())
    }
}

/// Characteristic grid and its density.
pub fn build_density(spec: &LFunctionSpec, cfg: &ExperimentConfig) -> Result<(CharacteristicGrid, DensityGrid)> {
    let grid = characteristic_grid(spec, &cfg.grid_config())?;
    let density = invert_to_density(&grid)?;
    Ok((grid, density))
}

/// `sum Phihat(w) Mtilde(-w) cell` over the characteristic lattice.
pub fn parseval_integral(grid: &CharacteristicGrid, phi: &TestFunction) -> Complex64 {
    // Mtilde(-w) = conj Mtilde(w)
    let n = grid.n;
    let cell = grid.du() * grid.du() / (2.0 * PI);
    let rows: Vec<Complex64> = (0..n)
        .map(|r| {
            let v = grid.coord(r);
            (0..n)
                .map(|c| phi.transform(Complex64::new(grid.coord(c), v)) * grid.at(r, c).conj())
                .sum()
        })
        .collect();
    let re: Vec<f64> = rows.iter().map(|z| z.re).collect();
    let im: Vec<f64> = rows.iter().map(|z| z.im).collect();
    Complex64::new(crate::density::pairwise_sum(&re), crate::density::pairwise_sum(&im)) * cell
}

/// `sup_{|x| <= w} sum_{m != 0} |f(x + m P)|`, the lattice periodization of one factor.
fn alias_sum(f: &TestFunction1d, w: f64, period: f64, xs: &[f64]) -> f64 {
    const TERMS: i64 = 2000;
    let tail = match *f {
        TestFunction1d::Zero => return 0.0,
        // |F(x)| <= (b - a) / (pi^2 omega' d^2) at distance d from [a, b]
        TestFunction1d::BoxFejer { a, b, omega } => {
            let d = (TERMS as f64 - 1.0) * period - w - a.abs().max(b.abs());
            2.0 * (b - a) / (PI * PI * omega / (2.0 * PI) * d * period)
        }
        TestFunction1d::Gaussian { .. } => 0.0,
    };
    let mut worst: f64 = 0.0;
    for &x in xs {
        let mut acc = 0.0;
        for m in 1..=TERMS {
            let shift = m as f64 * period;
            acc += f.eval(x + shift).abs() + f.eval(x - shift).abs();
        }
        worst = worst.max(acc);
    }
    worst + tail
}

/// Bound on `|density-side - transform-side|` and on the error of the density side:
/// `abs_error sum |Phihat| cell + sup|Phi| (|1 - mass| + eps_mass)` plus the
/// periodization of `Phi` over the density lattice period.
pub fn grid_certificate(grid: &CharacteristicGrid, density: &DensityGrid, phi: &TestFunction) -> f64 {
    let cell = grid.du() * grid.du() / (2.0 * PI);
    let mut l1 = 0.0;
    for r in 0..grid.n {
        for c in 0..grid.n {
            l1 += phi.transform(Complex64::new(grid.coord(c), grid.coord(r))).norm();
        }
    }
    let xs: Vec<f64> = (0..density.n).map(|k| density.coord(k)).collect();
    let sup_axis = |f: &TestFunction1d| xs.iter().map(|&x| f.eval(x).abs()).fold(0.0, f64::max);
    let (sx, sy) = (sup_axis(&phi.fx), sup_axis(&phi.fy));
    let period = density.n as f64 * density.dx;
    let ax = alias_sum(&phi.fx, density.w_max, period, &xs);
    let ay = alias_sum(&phi.fy, density.w_max, period, &xs);
    let alias = ax * (sy + ay) + sx * ay;
    let d = &density.diagnostics;
    grid.abs_error * l1 * cell + sx * sy * ((1.0 - d.mass).abs() + d.eps_mass) + alias
}

fn mean_value_from(
    spec: &LFunctionSpec,
    cfg: &ExperimentConfig,
    settings: &MeanValueSettings,
    grid: &CharacteristicGrid,
    density: &DensityGrid,
) -> Result<MeanValueResult> {
    let phi = settings.phi;
    let cloud = sample_random_model(spec, cfg.sigma, cfg.x, settings.samples, settings.seed)?;
    let lhs = cloud_average(&cloud, |w| phi.eval(w))?;
    let second = cloud_average(&cloud, |w| phi.eval(w).powi(2))?;
    let lhs_mc_error = ((second - lhs * lhs).max(0.0) / cloud.len() as f64).sqrt();
    let rhs = density.integrate(|x, y| phi.eval(Complex64::new(x, y)));
    let parseval = parseval_integral(grid, &phi);
    let cert = grid_certificate(grid, density, &phi);
    let lhs_tolerance = 3.0 * lhs_mc_error + cert;
    let (lhs_t_line, t_line_minus_rhs) = match &settings.t_line {
        Some(t) => {
            let c = sample_t_line(spec, &ApproximantConfig::new(cfg.x, Variant::F, cfg.sigma), t.t, t.samples)?;
            let v = cloud_average(&c, |w| phi.eval(w))?;
            (Some(v), Some(v - rhs))
        }
        None => (None, None),
    };
    Ok(MeanValueResult {
        lhs,
        lhs_mc_error,
        rhs,
        parseval_rhs: parseval.re,
        parseval_imag: parseval.im,
        difference: lhs - rhs,
        grid_certificate: cert,
        lhs_tolerance,
        lhs_within: (lhs - rhs).abs() <= lhs_tolerance,
        rhs_vs_parseval: (rhs - parseval.re).abs(),
        parseval_within: (rhs - parseval.re).abs() <= 2.0 * cert,
        lhs_t_line,
        t_line_minus_rhs,
    })
}

/// Mean value of `Phi`: cloud average against the density and Parseval integrals.
pub fn run_mean_value(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let start = Instant::now();
    let spec = cfg.validate()?;
    let settings = cfg
        .mean_value
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("config has no mean_value section".into()))?;
    let (grid, density) = build_density(&spec, cfg)?;
    let result = mean_value_from(&spec, cfg, settings, &grid, &density)?;
    Ok(ExperimentReport {
        schema_version: SCHEMA_VERSION,
        kind: ExperimentKind::MeanValue,
        config: cfg.clone(),
        config_digest: cfg.digest(),
        grid: GridSummary::new(&grid, &density),
        budget: budget_echo(&spec, cfg, Some(&settings.phi))?,
        mean_value: Some(result),
        discrepancy: None,
        runtime: Some(RuntimeInfo::since(start)),
    })
}

/// Per-rectangle comparison of one cloud against the density.
pub fn discrepancy_step(cloud: &SampleCloud, density: &DensityGrid, rects: &[Rect]) -> Result<LadderStep> {
    let rows = rects
        .iter()
        .map(|r| {
            let mass = density.rectangle_mass(r)?;
            let frequency = rectangle_frequency(cloud, r)?;
            let difference = frequency - mass;
            let nu2 = r.area();
            Ok(RectRow {
                rect: *r,
                frequency,
                mass,
                difference,
                nu2,
                normalized: difference.abs() / (nu2 + 1.0),
                binomial_error: binomial_error(frequency, cloud.len()),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let max_normalized = rows.iter().map(|r| r.normalized).fold(0.0, f64::max);
    let mean_normalized = rows.iter().map(|r| r.normalized).sum::<f64>() / rows.len() as f64;
    Ok(LadderStep {
        t: cloud.params.t.unwrap_or(f64::NAN),
        samples: cloud.len(),
        rows,
        max_normalized,
        mean_normalized,
    })
}

/// Rectangle discrepancy of t-line clouds over the T ladder.
pub fn run_discrepancy(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let start = Instant::now();
    let spec = cfg.validate()?;
    let settings = cfg
        .discrepancy
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("config has no discrepancy section".into()))?;
    let (grid, density) = build_density(&spec, cfg)?;
    // extent check before any sampling
    for r in &settings.rectangles {
        density.rectangle_mass(r)?;
    }
    let approx = ApproximantConfig::new(cfg.x, settings.variant, cfg.sigma);
    let mut ladder = Vec::new();
    for &t in &settings.ladder {
        let cloud = sample_t_line(&spec, &approx, t, settings.samples)?;
        ladder.push(discrepancy_step(&cloud, &density, &settings.rectangles)?);
    }
    let non_increasing = ladder.windows(2).all(|w| w[1].max_normalized <= w[0].max_normalized);
    let full = density.rectangle_mass(&density.full_rect())?;
    Ok(ExperimentReport {
        schema_version: SCHEMA_VERSION,
        kind: ExperimentKind::Discrepancy,
        config: cfg.clone(),
        config_digest: cfg.digest(),
        grid: GridSummary::new(&grid, &density),
        budget: budget_echo(&spec, cfg, None)?,
        mean_value: None,
        discrepancy: Some(DiscrepancyResult {
            variant: settings.variant,
            ladder,
            non_increasing,
            leakage_certificate: (1.0 - full).abs() + density.diagnostics.eps_mass,
        }),
        runtime: Some(RuntimeInfo::since(start)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    /// Negates the density before the normalization check.
    NegateDensity,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SelftestOptions {
    pub quick: bool,
    pub fault: Option<Fault>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub measured: f64,
    pub allowed: f64,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &str, measured: f64, allowed: f64, detail: String) -> Self {
        Self {
            name: name.to_string(),
            measured,
            allowed,
            passed: measured <= allowed,
            detail,
        }
    }

    fn failed(name: &str, e: &Error) -> Self {
        Self {
            name: name.to_string(),
            measured: f64::NAN,
            allowed: f64::NAN,
            passed: false,
            detail: format!("error: {e}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelftestReport {
    pub schema_version: u32,
    pub options: SelftestOptions,
    pub checks: Vec<CheckResult>,
    pub passed: bool,
    pub runtime: Option<RuntimeInfo>,
}

fn guard(name: &str, f: impl FnOnce() -> Result<CheckResult>) -> CheckResult {
    f().unwrap_or_else(|e| CheckResult::failed(name, &e))
}

fn check_self_duality() -> Result<CheckResult> {
    let grid = CharacteristicGrid::from_fn("gaussian", 1.0, 20.0, 256, |u, v| {
        Complex64::new((-(u * u + v * v) / 2.0).exp(), 0.0)
    })?;
    let d = invert_to_density(&grid)?;
    let mut worst: f64 = 0.0;
    for l in 0..d.n {
        for k in 0..d.n {
            let (x, y) = (d.coord(k), d.coord(l));
            worst = worst.max((d.at(l, k) - (-(x * x + y * y) / 2.0).exp()).abs());
        }
    }
    Ok(CheckResult::new("gaussian_self_duality", worst, 1e-6, "256^2 grid, z_max = 20".into()))
}

fn check_normalization(grid: &CharacteristicGrid, fault: Option<Fault>) -> Result<Vec<CheckResult>> {
    let mut d = invert_to_density(grid)?;
    if fault == Some(Fault::NegateDensity) {
        for v in &mut d.values {
            *v = -*v;
        }
        d.diagnostics.mass = -d.diagnostics.mass;
    }
    let mass = d.values.iter().sum::<f64>() * d.cell_measure;
    let detail = format!("zeta sigma = {}, n = {}, p_max = {}", grid.sigma, grid.n, grid.p_max);
    Ok(vec![
        CheckResult::new("normalization_mass", (mass - 1.0).abs(), 1e-3, detail.clone()),
        CheckResult::new(
            "normalization_origin",
            (grid.center() - 1.0).norm(),
            grid.abs_error.max(f64::EPSILON),
            detail.clone(),
        ),
        CheckResult::new("density_imag_residual", d.diagnostics.imag_residual, 1e-10, detail.clone()),
        CheckResult::new("density_nonnegative", (-d.values.iter().cloned().fold(f64::INFINITY, f64::min)).max(0.0), 1e-4, detail),
    ])
}

fn check_mc_identity(quick: bool) -> Result<CheckResult> {
    let zeta = LFunctionSpec::zeta();
    let (x, count) = if quick { (10.0, 100_000) } else { (100.0, 1_000_000) };
    let p_max = (x * x) as u64;
    let cloud = sample_random_model(&zeta, 1.0, x, count, 1)?;
    let mut worst: f64 = 0.0;
    for i in -2..=2 {
        for j in -2..=2 {
            let z = Complex64::new(1.5 * i as f64, 1.5 * j as f64);
            let emp = empirical_char(&cloud, z)?;
            let exact = euler_product(&zeta, 1.0, z, p_max, 1e-14)?;
            let allowed = 3.0 * mc_std_error(emp, count) + exact.abs_error + z.norm() * cloud.params.truncation_bound;
            worst = worst.max((emp - exact.value).norm() / allowed.max(f64::MIN_POSITIVE));
        }
    }
    Ok(CheckResult::new(
        "random_model_identity",
        worst,
        1.0,
        format!("max |emp - product| / (3 MC + certificates) over 25 points, X = {x}, N = {count}"),
    ))
}

fn check_expansion_agreement() -> Result<CheckResult> {
    let zeta = LFunctionSpec::zeta();
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for &p in &[1009u64, 2003, 5003, 10007] {
        for &sigma in &[0.8, 1.0, 1.5] {
            let s = local_series(&zeta, p, sigma, 1e-16)?;
            for &(x, y) in &[(0.5, 0.3), (-2.0, 1.0), (3.0, -4.0)] {
                let z = Complex64::new(x, y);
                if smallness(&s, z) > SMALLNESS_THRESHOLD {
                    continue;
                }
                let quad = local_factor_adaptive(&s, z, 1e-15);
                let exp = local_factor_expansion(&s, z)?;
                let allowed = exp.abs_error;
                worst = worst.max((quad.value - exp.value).norm() / allowed);
                cases += 1;
            }
        }
    }
    Ok(CheckResult::new(
        "expansion_agreement",
        worst,
        1.0,
        format!("max |quadrature - (1 - mu_p)| / certificate over {cases} cases"),
    ))
}

fn check_parseval(grid: &CharacteristicGrid) -> Result<Vec<CheckResult>> {
    let d = invert_to_density(grid)?;
    let mut out = Vec::new();
    for (name, phi) in [
        ("parseval_gaussian", TestFunction::gaussian(1.0)),
        ("parseval_box", TestFunction::box_fejer(-1.0, 0.5, -0.5, 1.0, 8.0)),
    ] {
        let rhs = d.integrate(|x, y| phi.eval(Complex64::new(x, y)));
        let pars = parseval_integral(grid, &phi);
        let cert = grid_certificate(grid, &d, &phi);
        out.push(CheckResult::new(
            name,
            (rhs - pars.re).abs() + pars.im.abs(),
            2.0 * cert,
            format!("density side {rhs}, transform side {}", pars.re),
        ));
    }
    Ok(out)
}

fn check_reduced_pmax(quick: bool) -> Result<Vec<CheckResult>> {
    let zeta = LFunctionSpec::zeta();
    let sigma = 1.2;
    let p_max = if quick { 2000 } else { 10_000 };
    let reduced = p_max / 10;
    let make = |p| characteristic_grid(&zeta, &GridConfig::new(sigma, 5.0, 64, p));
    let full = make(p_max)?;
    let small = make(reduced)?;
    let s_max = 2.0 * full.z_max;
    let tc_full = tail_log_bound(&zeta, sigma, s_max, p_max)?;
    let tc_small = tail_log_bound(&zeta, sigma, s_max, reduced)?;
    let mut worst: f64 = 0.0;
    for (a, b) in small.values.iter().zip(&full.values) {
        // |prod_{p > reduced}| differs from 1 by at most expm1(tc_small) on the box
        let allowed = a.norm() * tc_small.exp_m1() + small.abs_error + full.abs_error;
        worst = worst.max((a - b).norm() / allowed);
    }
    Ok(vec![
        CheckResult::new(
            "tail_cert_grows",
            tc_full,
            tc_small,
            format!("tail_cert {tc_full:.3e} at p_max = {p_max}, {tc_small:.3e} at {reduced}"),
        ),
        CheckResult::new(
            "reduced_pmax_within_certificate",
            worst,
            1.0,
            "max |grid(p_max/10) - grid(p_max)| / enlarged certificate".into(),
        ),
    ])
}

/// Runs the cross-module oracle suite. Failures are report entries.
pub fn run_selftest(opts: &SelftestOptions) -> SelftestReport {
    let start = Instant::now();
    let mut checks = vec![guard("gaussian_self_duality", check_self_duality)];
    let zeta = LFunctionSpec::zeta();
    let (n, p_max) = if opts.quick { (256, 1000) } else { (512, 10_000) };
    match characteristic_grid(&zeta, &GridConfig::new(1.0, 40.0, n, p_max)) {
        Ok(grid) => {
            match check_normalization(&grid, opts.fault) {
                Ok(v) => checks.extend(v),
                Err(e) => checks.push(CheckResult::failed("normalization", &e)),
            }
            match check_parseval(&grid) {
                Ok(v) => checks.extend(v),
                Err(e) => checks.push(CheckResult::failed("parseval", &e)),
            }
        }
        Err(e) => checks.push(CheckResult::failed("characteristic_grid", &e)),
    }
    checks.push(guard("random_model_identity", || check_mc_identity(opts.quick)));
    checks.push(guard("expansion_agreement", check_expansion_agreement));
    match check_reduced_pmax(opts.quick) {
        Ok(v) => checks.extend(v),
        Err(e) => checks.push(CheckResult::failed("reduced_pmax", &e)),
    }
    let passed = checks.iter().all(|c| c.passed);
    SelftestReport {
        schema_version: SCHEMA_VERSION,
        options: opts.clone(),
        checks,
        passed,
        runtime: Some(RuntimeInfo::since(start)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new("zeta", 1.2);
        cfg.x = 10.0;
        cfg.grid = GridSettings {
            z_max: 40.0,
            n: 128,
            p_max: None,
        };
        cfg
    }

    #[test]
    fn config_json_is_strict() {
        let text = r#"{"lfunction": "zeta", "sigma": 1.0, "bogus": 1}"#;
        assert!(serde_json::from_str::<ExperimentConfig>(text).is_err());
        let cfg: ExperimentConfig = serde_json::from_str(r#"{"lfunction": "zeta", "sigma": 1.0}"#).unwrap();
        assert_eq!(cfg.p_max(), 10_000);
        assert_eq!(cfg.digest().len(), 64);
        assert_eq!(cfg.digest(), cfg.clone().digest());
        let mut other = cfg.clone();
        other.sigma = 1.1;
        assert_ne!(cfg.digest(), other.digest());
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let mut cfg = small_config();
        cfg.sigma = 0.4;
        assert!(matches!(cfg.validate(), Err(Error::SigmaOutOfRange(_))));
        let mut cfg = small_config();
        cfg.schedule = Some(ScheduleInput { theta: 0.1, delta: 0.3, t: 1e6, class2: false });
        assert!(matches!(cfg.validate(), Err(Error::ScheduleHypothesis(_))));
        let mut cfg = small_config();
        cfg.lfunction = "delta".into();
        cfg.x = 200.0;
        assert!(matches!(cfg.validate(), Err(Error::Coverage { .. })));
    }

    #[test]
    fn zero_phi_gives_zero_sides() {
        let mut cfg = small_config();
        cfg.mean_value = Some(MeanValueSettings {
            phi: TestFunction::zero(),
            samples: 2000,
            seed: 0,
            t_line: None,
        });
        let r = run_mean_value(&cfg).unwrap();
        let m = r.mean_value.unwrap();
        assert_eq!((m.lhs, m.rhs, m.parseval_rhs, m.difference), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn gaussian_mean_value_small() {
        let mut cfg = small_config();
        cfg.schedule = Some(ScheduleInput { theta: 0.1, delta: 0.1, t: 1e8, class2: false });
        cfg.mean_value = Some(MeanValueSettings {
            phi: TestFunction::gaussian(1.0),
            samples: 200_000,
            seed: 3,
            t_line: None,
        });
        let r = run_mean_value(&cfg).unwrap();
        let m = r.mean_value.as_ref().unwrap();
        assert!(m.lhs_within, "{m:?}");
        assert!(m.parseval_within, "{m:?}");
        assert_eq!(m.difference, m.lhs - m.rhs);
        assert!(r.budget.as_ref().unwrap().mean_value.is_some());
        assert!(r.passed());
        let again = run_mean_value(&cfg).unwrap();
        assert_eq!(again.payload_json(), r.payload_json());
        assert!(!r.payload_json().contains("elapsed_seconds"));
        assert!(r.to_json().contains("elapsed_seconds"));
    }

    #[test]
    fn budget_shape_decreases_over_ladder() {
        let phi = TestFunction::gaussian(1.0);
        let b: Vec<MeanValueBudget> = [1e4f64, 1e8, 1e16, 1e32]
            .iter()
            .map(|t| mean_value_budget(&phi, 0.1, 0.1, t.ln()))
            .collect();
        for w in b.windows(2) {
            assert!(w[1].decay < w[0].decay);
            assert!(w[1].outside_l1 <= w[0].outside_l1);
        }
        // whole-plane integral of |Phihat| for the unit gaussian is 1
        assert!((b[0].inside_l1 + b[0].outside_l1 - 1.0).abs() < 1e-12);
        let boxed = TestFunction::box_fejer(0.0, 1.0, 0.0, 1.0, 2.0);
        let bb = mean_value_budget(&boxed, 0.1, 0.1, 2000.0);
        assert_eq!(bb.outside_l1, 0.0);
    }

    #[test]
    fn discrepancy_whole_window_and_extent() {
        let mut cfg = small_config();
        cfg.discrepancy = Some(DiscrepancySettings {
            rectangles: vec![Rect::new(-1.0, 1.0, -1.0, 1.0)],
            ladder: vec![1e3],
            samples: 5000,
            variant: Variant::F,
        });
        let r = run_discrepancy(&cfg).unwrap();
        let d = r.discrepancy.as_ref().unwrap();
        assert_eq!(d.ladder.len(), 1);
        assert!(d.leakage_certificate < 1e-3);

        let mut bad = cfg.clone();
        bad.discrepancy.as_mut().unwrap().rectangles = vec![Rect::new(-100.0, 1.0, 0.0, 1.0)];
        assert!(matches!(run_discrepancy(&bad), Err(Error::ExtentViolation { .. })));
    }

    #[test]
    fn selftest_quick_passes_and_fault_fails() {
        let ok = run_selftest(&SelftestOptions { quick: true, fault: None });
        for c in &ok.checks {
            assert!(c.passed, "{c:?}");
        }
        let bad = run_selftest(&SelftestOptions { quick: true, fault: Some(Fault::NegateDensity) });
        assert!(!bad.passed);
        let failing: Vec<&str> = bad.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        assert!(failing.contains(&"normalization_mass"), "{failing:?}");
    }
}
