//! Dirichlet characters built from the structure of `(Z/qZ)^*`.
//!
//! The unit group is a product of cyclic factors: one per odd prime power
//! `p^e` (generated by a primitive root), plus `<-1>` for `4 | q` and `<5>`
//! for `8 | q`. A character is fixed by an exponent per generator; the
//! character index enumerates those exponents in mixed radix, generators
//! ordered by ascending prime with `-1` before `5`.

use crate::error::{Error, Result};
use crate::primes::factorize;
use num_complex::Complex64;
use std::f64::consts::PI;

#[derive(Debug, Clone)]
pub struct DirichletCharacter {
    modulus: u64,
    index: u64,
    values: Vec<Complex64>,
    real: bool,
    primitive: bool,
}

struct Generator {
    order: u64,
    // discrete log of each residue mod the full modulus; None when not a unit
    logs: Vec<Option<u64>>,
    // exponent k for which the component is primitive iff `primitive(k)`
    kind: ComponentKind,
}

#[derive(Clone, Copy)]
enum ComponentKind {
    OddPrimePower { p: u64, e: u32 },
    MinusOne { e: u32 },
    Five,
}

impl DirichletCharacter {
    pub fn new(modulus: u64, index: u64) -> Result<Self> {
        if modulus == 0 {
            return Err(Error::InvalidArgument("modulus must be positive".into()));
        }
        if modulus > 1_000_000 {
            return Err(Error::InvalidArgument(format!(
                "modulus {modulus} too large for tabulated characters"
            )));
        }
        let gens = generators(modulus);
        let group_order: u64 = gens.iter().map(|g| g.order).product();
        if index >= group_order {
            return Err(Error::InvalidArgument(format!(
                "character index {index} out of range 0..{group_order} for modulus {modulus}"
            )));
        }

        let mut exps = Vec::with_capacity(gens.len());
        let mut rest = index;
        for g in &gens {
            exps.push(rest % g.order);
            rest /= g.order;
        }

        let primitive = gens.iter().zip(&exps).all(|(g, &k)| match g.kind {
            ComponentKind::OddPrimePower { p, e } => {
                if e == 1 {
                    k != 0
                } else {
                    k % p != 0
                }
            }
            ComponentKind::MinusOne { e } => e >= 3 || k == 1,
            ComponentKind::Five => k % 2 == 1,
        }) && !(modulus % 4 == 2);

        let lcm = gens.iter().fold(1u64, |acc, g| lcm(acc, g.order));
        let q = modulus as usize;
        let mut values = vec![Complex64::new(0.0, 0.0); q];
        for (n, slot) in values.iter_mut().enumerate() {
            if gcd(n as u64, modulus) != 1 {
                continue;
            }
            let mut num = 0u64;
            for (g, &k) in gens.iter().zip(&exps) {
                let l = g.logs[n].expect("unit has a discrete log");
                num = (num + k * l % g.order * (lcm / g.order)) % lcm;
            }
            *slot = unit_root(num, lcm);
        }
        // q = 1: the single residue class is a unit.
        if modulus == 1 {
            values[0] = Complex64::new(1.0, 0.0);
        }
        let real = values.iter().all(|v| v.im == 0.0);
        Ok(Self {
            modulus,
            index,
            values,
            real,
            primitive: primitive || modulus == 1,
        })
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn is_primitive(&self) -> bool {
        self.primitive
    }

    pub fn is_real(&self) -> bool {
        self.real
    }

    pub fn value(&self, n: u64) -> Complex64 {
        self.values[(n % self.modulus) as usize]
    }
}

/// `exp(2 pi i num/den)`, exact at the quarter turns.
fn unit_root(num: u64, den: u64) -> Complex64 {
    let g = gcd(num, den);
    let (num, den) = (num / g, den / g);
    match (num, den) {
        (0, _) => Complex64::new(1.0, 0.0),
        (1, 2) => Complex64::new(-1.0, 0.0),
        (1, 4) => Complex64::new(0.0, 1.0),
        (3, 4) => Complex64::new(0.0, -1.0),
        _ => Complex64::from_polar(1.0, 2.0 * PI * num as f64 / den as f64),
    }
}

fn generators(modulus: u64) -> Vec<Generator> {
    let q = modulus as usize;
    let mut out = Vec::new();
    for (p, e) in factorize(modulus) {
        let pe = p.pow(e);
        if p == 2 {
            if e < 2 {
                continue;
            }
            // n = (-1)^a 5^b mod 2^e
            let five_order = if e >= 3 { 1u64 << (e - 2) } else { 1 };
            let mut log_a = vec![None; pe as usize];
            let mut log_b = vec![None; pe as usize];
            for a in 0..2u64 {
                let mut x = if a == 0 { 1 } else { pe - 1 };
                for b in 0..five_order {
                    log_a[x as usize] = Some(a);
                    log_b[x as usize] = Some(b);
                    x = x * 5 % pe;
                }
            }
            out.push(Generator {
                order: 2,
                logs: lift(&log_a, pe, q),
                kind: ComponentKind::MinusOne { e },
            });
            if e >= 3 {
                out.push(Generator {
                    order: five_order,
                    logs: lift(&log_b, pe, q),
                    kind: ComponentKind::Five,
                });
            }
        } else {
            let phi = pe / p * (p - 1);
            let g = primitive_root_prime_power(p, e);
            let mut logs = vec![None; pe as usize];
            let mut x = 1u64;
            for k in 0..phi {
                logs[x as usize] = Some(k);
                x = x * g % pe;
            }
            out.push(Generator {
                order: phi,
                logs: lift(&logs, pe, q),
                kind: ComponentKind::OddPrimePower { p, e },
            });
        }
    }
    out
}

fn lift(local: &[Option<u64>], m: u64, q: usize) -> Vec<Option<u64>> {
    (0..q).map(|n| local[(n as u64 % m) as usize]).collect()
}

fn primitive_root_prime_power(p: u64, e: u32) -> u64 {
    let phi = p - 1;
    let factors: Vec<u64> = factorize(phi).into_iter().map(|(f, _)| f).collect();
    let g = (2..p)
        .find(|&g| factors.iter().all(|&f| pow_mod(g, phi / f, p) != 1))
        .unwrap_or(1);
    if e >= 2 && pow_mod(g, p - 1, p * p) == 1 {
        g + p
    } else {
        g
    }
}

fn pow_mod(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut r = 1 % m;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            r = r * b % m;
        }
        b = b * b % m;
        e >>= 1;
    }
    r
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: u64, b: u64) -> u64 {
    a / gcd(a, b) * b
}
