//! L-functions with a polynomial Euler product of degree `g`:
//! `F(s) = prod_p prod_j (1 - alpha_j(p) p^{-s})^{-1}`.
//!
//! A spec knows its local roots `alpha_j(p)`, from which the generalized von
//! Mangoldt function `Lambda_F(p^m) = (sum_j alpha_j(p)^m) log p` and the
//! prime coefficients `a_F(p) = sum_j alpha_j(p)` follow.
//!
//! Built-in families are selected by name: `zeta`, `dirichlet:q=<q>,index=<i>`,
//! `delta` (optionally `delta:coverage=<N>`), and `table:<path>` for a custom
//! root table in the text format described at [`LFunctionSpec::from_table_str`].

mod dirichlet;
mod tau;

pub use dirichlet::DirichletCharacter;
pub use tau::tau_table;

use crate::error::{Error, Result};
use crate::primes::{is_prime, prime_power, PrimeTable};
use num_complex::Complex64;
use serde::Serialize;
use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

/// Default tau coverage for the weight-12 cusp form.
pub const DELTA_DEFAULT_COVERAGE: u64 = 10_000;

/// Metadata for the out-of-scope axioms; documentation only.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Metadata {
    pub degree: Option<f64>,
    /// Constant `b` of the weak zero-density estimate.
    pub b: Option<f64>,
    /// Constants `c`, `A` of the zero-density estimate (class II).
    pub c: Option<f64>,
    pub a: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct LFunctionSpec {
    inner: Arc<SpecInner>,
}

#[derive(Debug)]
struct SpecInner {
    name: String,
    g: usize,
    family: Family,
    kappa_expected: Option<f64>,
    metadata: Metadata,
}

#[derive(Debug)]
enum Family {
    Zeta,
    Dirichlet(DirichletCharacter),
    Delta {
        coverage: u64,
        tau: OnceLock<Vec<i128>>,
    },
    Table(BTreeMap<u64, Vec<Complex64>>),
}

impl LFunctionSpec {
    pub fn zeta() -> Self {
        Self::build(
            "zeta".into(),
            1,
            Family::Zeta,
            Some(1.0),
            Metadata {
                degree: Some(1.0),
                b: Some(16.0),
                ..Default::default()
            },
        )
    }

    /// `L(s, chi)` for the primitive character `index` mod `q`.
    pub fn dirichlet(q: u64, index: u64) -> Result<Self> {
        let chi = DirichletCharacter::new(q, index)?;
        if !chi.is_primitive() {
            return Err(Error::InvalidArgument(format!(
                "character {index} mod {q} is not primitive"
            )));
        }
        Ok(Self::build(
            format!("dirichlet:q={q},index={index}"),
            1,
            Family::Dirichlet(chi),
            Some(1.0),
            Metadata {
                degree: Some(1.0),
                b: Some(16.0),
                ..Default::default()
            },
        ))
    }

    /// L-function of the level-1 weight-12 cusp form, unitary normalization.
    pub fn delta() -> Self {
        Self::delta_with_coverage(DELTA_DEFAULT_COVERAGE)
    }

    pub fn delta_with_coverage(coverage: u64) -> Self {
        let name = if coverage == DELTA_DEFAULT_COVERAGE {
            "delta".to_string()
        } else {
            format!("delta:coverage={coverage}")
        };
        Self::build(
            name,
            2,
            Family::Delta {
                coverage,
                tau: OnceLock::new(),
            },
            Some(1.0),
            Metadata {
                degree: Some(2.0),
                b: Some(20.0),
                ..Default::default()
            },
        )
    }

    /// Parses a root table.
    ///
    /// ```text
    /// # comment
    /// name my-form
    /// g 2
    /// kappa 1.0
    /// b 20
    /// # p  re(alpha_1) im(alpha_1)  ...  re(alpha_g) im(alpha_g)
    /// 2  0.5 0.8660254  0.5 -0.8660254
    /// ```
    ///
    /// Directives (`name`, `g`, `kappa`, `degree`, `b`, `c`, `A`) must precede
    /// the data rows. `g` defaults to the column count of the first row.
    pub fn from_table_str(text: &str) -> Result<Self> {
        let mut name = "table".to_string();
        let mut g: Option<usize> = None;
        let mut kappa = None;
        let mut metadata = Metadata::default();
        let mut rows = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let head = fields.next().unwrap_or_default();
            let parse_f = |s: Option<&str>| -> Result<f64> {
                s.ok_or_else(|| Error::Parse {
                    line: line_no,
                    msg: "missing value".into(),
                })?
                .parse::<f64>()
                .map_err(|e| Error::Parse {
                    line: line_no,
                    msg: e.to_string(),
                })
            };
            match head {
                "name" => name = fields.collect::<Vec<_>>().join(" "),
                "g" => {
                    let v = parse_f(fields.next())?;
                    if v < 1.0 || v.fract() != 0.0 {
                        return Err(Error::Parse {
                            line: line_no,
                            msg: "g must be a positive integer".into(),
                        });
                    }
                    g = Some(v as usize);
                }
                "kappa" => kappa = Some(parse_f(fields.next())?),
                "degree" => metadata.degree = Some(parse_f(fields.next())?),
                "b" => metadata.b = Some(parse_f(fields.next())?),
                "c" => metadata.c = Some(parse_f(fields.next())?),
                "A" => metadata.a = Some(parse_f(fields.next())?),
                _ => {
                    let p: u64 = head.parse().map_err(|_| Error::Parse {
                        line: line_no,
                        msg: format!("unknown directive or bad prime '{head}'"),
                    })?;
                    if !is_prime(p) {
                        return Err(Error::Parse {
                            line: line_no,
                            msg: format!("{p} is not prime"),
                        });
                    }
                    let values = fields.map(|f| parse_f(Some(f))).collect::<Result<Vec<_>>>()?;
                    if values.len() % 2 != 0 || values.is_empty() {
                        return Err(Error::Parse {
                            line: line_no,
                            msg: "expected pairs of (re, im)".into(),
                        });
                    }
                    let roots: Vec<Complex64> = values
                        .chunks(2)
                        .map(|c| Complex64::new(c[0], c[1]))
                        .collect();
                    let g_val = *g.get_or_insert(roots.len());
                    if roots.len() != g_val {
                        return Err(Error::Parse {
                            line: line_no,
                            msg: format!("expected {g_val} roots, found {}", roots.len()),
                        });
                    }
                    rows.insert(p, roots);
                }
            }
        }
        let g = g.ok_or(Error::Parse {
            line: 0,
            msg: "empty table".into(),
        })?;
        Ok(Self::build(name, g, Family::Table(rows), kappa, metadata))
    }

    /// Resolves a spec name (see module docs).
    pub fn from_name(name: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("unknown L-function '{name}'"));
        let (family, args) = name.split_once(':').unwrap_or((name, ""));
        let kv = |key: &str| -> Option<u64> {
            args.split(',').find_map(|part| {
                let (k, v) = part.split_once('=')?;
                (k.trim() == key).then(|| v.trim().parse().ok()).flatten()
            })
        };
        match family.trim() {
            "zeta" if args.is_empty() => Ok(Self::zeta()),
            "dirichlet" => Self::dirichlet(kv("q").ok_or_else(bad)?, kv("index").ok_or_else(bad)?),
            "delta" if args.is_empty() => Ok(Self::delta()),
            "delta" => Ok(Self::delta_with_coverage(kv("coverage").ok_or_else(bad)?)),
            "table" => {
                let text = std::fs::read_to_string(args)?;
                Self::from_table_str(&text)
            }
            _ => Err(bad()),
        }
    }

    fn build(
        name: String,
        g: usize,
        family: Family,
        kappa_expected: Option<f64>,
        metadata: Metadata,
    ) -> Self {
        Self {
            inner: Arc::new(SpecInner {
                name,
                g,
                family,
                kappa_expected,
                metadata,
            }),
        }
    }

    pub fn name(&self) -> &str {
        &self.inner.name
    }

    /// Euler factor degree.
    pub fn g(&self) -> usize {
        self.inner.g
    }

    pub fn kappa_expected(&self) -> Option<f64> {
        self.inner.kappa_expected
    }

    pub fn metadata(&self) -> &Metadata {
        &self.inner.metadata
    }

    /// Largest prime with known roots; `None` when unbounded.
    pub fn coverage(&self) -> Option<u64> {
        match &self.inner.family {
            Family::Zeta | Family::Dirichlet(_) => None,
            Family::Delta { coverage, .. } => Some(*coverage),
            Family::Table(rows) => rows.keys().next_back().copied(),
        }
    }

    /// True when every `Lambda_F(n)` is real.
    pub fn has_real_coefficients(&self) -> bool {
        match &self.inner.family {
            Family::Zeta | Family::Delta { .. } => true,
            Family::Dirichlet(chi) => chi.is_real(),
            Family::Table(rows) => rows.values().all(|roots| {
                // real power sums need the roots closed under conjugation
                let mut im: Vec<f64> = roots.iter().map(|r| r.im).collect();
                im.sort_by(f64::total_cmp);
                let mut neg: Vec<f64> = roots.iter().map(|r| -r.im).collect();
                neg.sort_by(f64::total_cmp);
                im == neg
            }),
        }
    }

    /// The `g` local roots at prime `p`; ramified primes carry zeros.
    pub fn local_roots(&self, p: u64) -> Result<Vec<Complex64>> {
        match &self.inner.family {
            Family::Zeta => Ok(vec![Complex64::new(1.0, 0.0)]),
            Family::Dirichlet(chi) => Ok(vec![chi.value(p)]),
            Family::Delta { coverage, tau } => {
                if p > *coverage {
                    return Err(Error::RootsUnavailable {
                        p,
                        coverage: *coverage,
                    });
                }
                let table = tau.get_or_init(|| tau_table(*coverage as usize));
                let a = table[p as usize] as f64 / (p as f64).powf(5.5);
                // z^2 - a z + 1 = 0; |a| <= 2 by Deligne, so the roots are unimodular.
                let disc = (4.0 - a * a).max(0.0).sqrt();
                Ok(vec![
                    Complex64::new(a / 2.0, disc / 2.0),
                    Complex64::new(a / 2.0, -disc / 2.0),
                ])
            }
            Family::Table(rows) => rows.get(&p).cloned().ok_or(Error::RootsUnavailable {
                p,
                coverage: self.coverage().unwrap_or(0),
            }),
        }
    }

    /// `sum_j alpha_j(p)^m`.
    pub fn power_sum(&self, p: u64, m: u32) -> Result<Complex64> {
        Ok(self.local_roots(p)?.iter().map(|a| a.powu(m)).sum())
    }
}

/// `Lambda_F(n)`: `(sum_j alpha_j(p)^m) log p` for `n = p^m`, else 0.
pub fn lambda_f(spec: &LFunctionSpec, n: u64) -> Result<Complex64> {
    match prime_power(n) {
        Some((p, m)) => Ok(spec.power_sum(p, m)? * (p as f64).ln()),
        None => Ok(Complex64::new(0.0, 0.0)),
    }
}

/// `a_F(p) = sum_j alpha_j(p)`.
pub fn coefficient_a(spec: &LFunctionSpec, p: u64) -> Result<Complex64> {
    if !is_prime(p) {
        return Err(Error::InvalidArgument(format!("{p} is not prime")));
    }
    spec.power_sum(p, 1)
}

/// Empirical prime mean square `(1/pi(x)) sum_{p <= x} |a_F(p)|^2`.
pub fn estimate_kappa(spec: &LFunctionSpec, x: u64) -> Result<f64> {
    if x < 2 {
        return Err(Error::InvalidArgument("estimate_kappa needs x >= 2".into()));
    }
    if let Some(cov) = spec.coverage() {
        if x > cov {
            return Err(Error::Coverage {
                limit: cov,
                requested: x,
            });
        }
    }
    let table = PrimeTable::new(x);
    let primes = table.primes();
    let mut sum = 0.0;
    for &p in primes {
        sum += coefficient_a(spec, p)?.norm_sqr();
    }
    Ok(sum / primes.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ViolationKind {
    /// Wrong number of roots.
    RootCount { found: usize },
    /// `|alpha_j(p)| > 1`.
    RootTooLarge { j: usize, modulus: f64 },
    Unavailable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub p: u64,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub spec: String,
    pub pmax: u64,
    pub primes_checked: usize,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

// Slack for roots that are unimodular up to rounding.
const ROOT_BOUND_SLACK: f64 = 1e-12;

/// Checks the root-count and `|alpha_j(p)| <= 1` invariants for `p <= pmax`.
pub fn validate_spec(spec: &LFunctionSpec, pmax: u64) -> ValidationReport {
    let table = PrimeTable::new(pmax);
    let mut violations = Vec::new();
    for &p in table.primes() {
        match spec.local_roots(p) {
            Ok(roots) => {
                if roots.len() != spec.g() {
                    violations.push(Violation {
                        p,
                        kind: ViolationKind::RootCount { found: roots.len() },
                    });
                }
                for (j, r) in roots.iter().enumerate() {
                    if r.norm() > 1.0 + ROOT_BOUND_SLACK {
                        violations.push(Violation {
                            p,
                            kind: ViolationKind::RootTooLarge {
                                j,
                                modulus: r.norm(),
                            },
                        });
                    }
                }
            }
            Err(_) => violations.push(Violation {
                p,
                kind: ViolationKind::Unavailable,
            }),
        }
    }
    ValidationReport {
        spec: spec.name().to_string(),
        pmax,
        primes_checked: table.primes().len(),
        violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    fn von_mangoldt_brute(n: u64) -> f64 {
        // n = p^m iff n has exactly one distinct prime divisor
        let divisors: Vec<u64> = (2..=n).filter(|&d| n % d == 0 && is_prime(d)).collect();
        if divisors.len() == 1 {
            (divisors[0] as f64).ln()
        } else {
            0.0
        }
    }

    #[test]
    fn lambda_examples() {
        let zeta = LFunctionSpec::zeta();
        assert!((lambda_f(&zeta, 8).unwrap().re - LN_2).abs() < 1e-15);
        assert_eq!(lambda_f(&zeta, 6).unwrap(), Complex64::new(0.0, 0.0));
        assert_eq!(lambda_f(&zeta, 1).unwrap(), Complex64::new(0.0, 0.0));

        let chi4 = LFunctionSpec::dirichlet(4, 1).unwrap();
        let v = lambda_f(&chi4, 9).unwrap();
        assert!((v.re - 3f64.ln()).abs() < 1e-15 && v.im == 0.0);

        let delta = LFunctionSpec::delta();
        let a2 = -24.0 / 2f64.powf(5.5);
        assert!((a2 - (-0.530_330)).abs() < 1e-6);
        let v = lambda_f(&delta, 2).unwrap();
        assert!((v.re - a2 * LN_2).abs() < 1e-14);
        assert!((v.re - (-0.367_596_803_800_705)).abs() < 1e-12);
        assert!((v.re - (-0.367_601)).abs() < 1e-5);
        assert!(v.im.abs() < 1e-15);
    }

    #[test]
    fn zeta_lambda_is_von_mangoldt() {
        let zeta = LFunctionSpec::zeta();
        for n in 1..=10_000u64 {
            let v = lambda_f(&zeta, n).unwrap();
            assert_eq!(v.im, 0.0);
            assert!((v.re - von_mangoldt_brute(n.min(2000))).abs() < 1e-12 || n > 2000);
        }
        // full range against a factorization oracle that avoids the library
        for n in 2000..=10_000u64 {
            let mut distinct = Vec::new();
            let mut r = n;
            let mut d = 2;
            while d * d <= r {
                if r % d == 0 {
                    distinct.push(d);
                    while r % d == 0 {
                        r /= d;
                    }
                }
                d += 1;
            }
            if r > 1 {
                distinct.push(r);
            }
            let expected = if distinct.len() == 1 {
                (distinct[0] as f64).ln()
            } else {
                0.0
            };
            assert_eq!(lambda_f(&zeta, n).unwrap().re, expected, "n = {n}");
        }
    }

    #[test]
    fn lambda_bounded_by_g_log_p() {
        for spec in [
            LFunctionSpec::zeta(),
            LFunctionSpec::dirichlet(5, 1).unwrap(),
            LFunctionSpec::delta(),
        ] {
            for n in 2..3000u64 {
                if let Some((p, _)) = prime_power(n) {
                    let bound = spec.g() as f64 * (p as f64).ln();
                    assert!(lambda_f(&spec, n).unwrap().norm() <= bound + 1e-12);
                }
            }
        }
    }

    #[test]
    fn degree_one_power_consistency() {
        let spec = LFunctionSpec::dirichlet(5, 1).unwrap();
        for p in [2u64, 3, 7, 11, 13] {
            let alpha = spec.local_roots(p).unwrap()[0];
            for m in 1..6u32 {
                let expected = alpha.powu(m) * (p as f64).ln();
                assert_eq!(lambda_f(&spec, p.pow(m)).unwrap(), expected);
            }
        }
    }

    #[test]
    fn coefficients() {
        let zeta = LFunctionSpec::zeta();
        assert_eq!(coefficient_a(&zeta, 97).unwrap(), Complex64::new(1.0, 0.0));
        let chi4 = LFunctionSpec::dirichlet(4, 1).unwrap();
        assert_eq!(coefficient_a(&chi4, 3).unwrap(), Complex64::new(-1.0, 0.0));
        assert_eq!(coefficient_a(&chi4, 2).unwrap(), Complex64::new(0.0, 0.0));
        assert!(coefficient_a(&chi4, 9).is_err());
    }

    #[test]
    fn kappa_estimates() {
        assert_eq!(estimate_kappa(&LFunctionSpec::zeta(), 1000).unwrap(), 1.0);
        for x in [2u64, 17, 500] {
            assert_eq!(estimate_kappa(&LFunctionSpec::zeta(), x).unwrap(), 1.0);
        }
        let chi4 = LFunctionSpec::dirichlet(4, 1).unwrap();
        let k = estimate_kappa(&chi4, 1000).unwrap();
        assert!((k - 167.0 / 168.0).abs() < 1e-15);
        let kd = estimate_kappa(&LFunctionSpec::delta(), 10_000).unwrap();
        assert!((kd - 1.0).abs() < 0.1, "kappa(delta) = {kd}");
        assert!(estimate_kappa(&LFunctionSpec::delta(), 20_000).is_err());
    }

    #[test]
    fn validation() {
        for spec in [
            LFunctionSpec::zeta(),
            LFunctionSpec::dirichlet(4, 1).unwrap(),
            LFunctionSpec::delta(),
        ] {
            assert!(validate_spec(&spec, 10_000).is_clean(), "{}", spec.name());
        }
        let bad = LFunctionSpec::from_table_str("g 1\n2 1.5 0\n3 1 0\n5 -1 0\n7 0 1\n").unwrap();
        let report = validate_spec(&bad, 10);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].p, 2);
        assert!(matches!(
            report.violations[0].kind,
            ViolationKind::RootTooLarge { j: 0, .. }
        ));
        // beyond the table coverage the roots are unavailable
        assert!(!validate_spec(&bad, 11).is_clean());
    }

    #[test]
    fn names_resolve() {
        assert_eq!(LFunctionSpec::from_name("zeta").unwrap().g(), 1);
        let d = LFunctionSpec::from_name("dirichlet:q=4,index=1").unwrap();
        assert_eq!(d.name(), "dirichlet:q=4,index=1");
        assert!(d.has_real_coefficients());
        assert!(!LFunctionSpec::from_name("dirichlet:q=5,index=1")
            .unwrap()
            .has_real_coefficients());
        assert_eq!(LFunctionSpec::from_name("delta").unwrap().g(), 2);
        assert!(LFunctionSpec::from_name("dirichlet:q=4,index=0").is_err());
        assert!(LFunctionSpec::from_name("nope").is_err());
    }

    #[test]
    fn table_parse_errors_carry_lines() {
        let err = LFunctionSpec::from_table_str("g 2\n2 1 0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = LFunctionSpec::from_table_str("4 1 0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }
}
