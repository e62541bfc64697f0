//! Towers of finite fields `F_{q^m}`, `q = p^f`, with compatible generators.
//!
//! Each level is `F_p[x]/(modulus)` where `modulus` is the lexicographically
//! smallest monic irreducible polynomial of the right degree (coefficients
//! compared from the constant term up). Elements are stored as discrete logs
//! with respect to a per-level generator `g_m`; the generators are chosen so
//! that `g_m = N_{n/m}(g_n)` whenever `m | n`, which makes the embedding
//! `F_{q^m} -> F_{q^n}` act on discrete logs as multiplication by
//! `(q^n-1)/(q^m-1)`, and norms act as reduction mod `q^m-1`.

use crate::error::{Error, Result};
use crate::Complex;
use std::f64::consts::TAU;

/// Default per-level table cap (number of field elements).
pub const DEFAULT_TABLE_CAP: u64 = 1 << 26;

/// A field element: `code == 0` is zero, otherwise `code - 1` is the
/// discrete log at `level`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Fe {
    level: u8,
    code: u32,
}

impl Fe {
    pub fn level(self) -> usize {
        self.level as usize
    }
    pub fn is_zero(self) -> bool {
        self.code == 0
    }
    /// Raw code: 0 for zero, `dlog + 1` otherwise.
    pub fn code(self) -> u32 {
        self.code
    }
}

struct Level {
    deg: usize,
    order: u64,
    units: u64,
    modulus: Vec<u64>,
    /// dlog -> packed polynomial representative
    antilog: Vec<u32>,
    /// packed polynomial representative -> dlog (entry for 0 unused)
    log: Vec<u32>,
    /// dlog of the class of x, when deg > 1
    x_dlog: Option<u64>,
    /// absolute trace of g^t, for t < units
    tr: Vec<u8>,
    /// prime factors of `units`
    unit_factors: Vec<u64>,
}

pub struct FieldTower {
    p: u64,
    f: usize,
    q: u64,
    max_deg: usize,
    levels: Vec<Option<Level>>,
    zeta_p: Vec<Complex>,
}

fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2u64;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

fn prime_factors(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut d = 2u64;
    while d * d <= n {
        if n % d == 0 {
            out.push(d);
            while n % d == 0 {
                n /= d;
            }
        }
        d += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

fn mulmod(a: u64, b: u64, n: u64) -> u64 {
    ((a as u128 * b as u128) % n as u128) as u64
}

// ---- dense polynomial arithmetic over F_p (little-endian coefficients) ----

fn poly_trim(a: &mut Vec<u64>) {
    while a.last() == Some(&0) {
        a.pop();
    }
}

fn poly_mul(a: &[u64], b: &[u64], p: u64) -> Vec<u64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0u64; a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0 {
            continue;
        }
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] = (out[i + j] + ai * bj) % p;
        }
    }
    poly_trim(&mut out);
    out
}

/// Remainder of `a` modulo the monic polynomial `m`.
fn poly_rem(a: &[u64], m: &[u64], p: u64) -> Vec<u64> {
    let mut r = a.to_vec();
    poly_trim(&mut r);
    let dm = m.len() - 1;
    while r.len() > dm {
        let lead = *r.last().unwrap();
        let shift = r.len() - 1 - dm;
        if lead != 0 {
            for i in 0..=dm {
                let idx = shift + i;
                r[idx] = (r[idx] + (p - m[i] % p) % p * lead) % p;
            }
        }
        r.pop();
        poly_trim(&mut r);
    }
    r
}

fn poly_mulmod(a: &[u64], b: &[u64], m: &[u64], p: u64) -> Vec<u64> {
    poly_rem(&poly_mul(a, b, p), m, p)
}

fn poly_powmod(a: &[u64], mut e: u128, m: &[u64], p: u64) -> Vec<u64> {
    let mut base = poly_rem(a, m, p);
    let mut acc = vec![1u64];
    while e > 0 {
        if e & 1 == 1 {
            acc = poly_mulmod(&acc, &base, m, p);
        }
        base = poly_mulmod(&base, &base, m, p);
        e >>= 1;
    }
    acc
}

fn poly_gcd(a: &[u64], b: &[u64], p: u64) -> Vec<u64> {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    poly_trim(&mut a);
    poly_trim(&mut b);
    while !b.is_empty() {
        // make b monic for poly_rem
        let lead = *b.last().unwrap();
        if lead != 1 {
            let inv = mod_inverse(lead, p);
            for c in b.iter_mut() {
                *c = *c * inv % p;
            }
        }
        let r = poly_rem(&a, &b, p);
        a = b;
        b = r;
    }
    a
}

fn mod_inverse(a: u64, p: u64) -> u64 {
    // p is prime
    let mut result = 1u64;
    let mut base = a % p;
    let mut e = p - 2;
    while e > 0 {
        if e & 1 == 1 {
            result = result * base % p;
        }
        base = base * base % p;
        e >>= 1;
    }
    result
}

/// Deterministic irreducibility test for a monic polynomial of degree n.
fn poly_irreducible(m: &[u64], p: u64) -> bool {
    let n = m.len() - 1;
    if n == 0 {
        return false;
    }
    if n == 1 {
        return true;
    }
    if m[0] == 0 {
        return false;
    }
    let x = vec![0u64, 1];
    // x^{p^n} == x (mod m)
    let mut xp = x.clone();
    for _ in 0..n {
        xp = poly_powmod(&xp, p as u128, m, p);
    }
    if xp != x {
        return false;
    }
    // gcd(x^{p^{n/r}} - x, m) == 1 for each prime r | n
    for r in prime_factors(n as u64) {
        let k = n / r as usize;
        let mut xk = x.clone();
        for _ in 0..k {
            xk = poly_powmod(&xk, p as u128, m, p);
        }
        // xk - x
        let mut d = xk;
        while d.len() < 2 {
            d.push(0);
        }
        d[1] = (d[1] + p - 1) % p;
        poly_trim(&mut d);
        let g = poly_gcd(m, &d, p);
        if g.len() != 1 {
            return false;
        }
    }
    true
}

fn pack(coeffs: &[u64], p: u64, deg: usize) -> u32 {
    let mut v = 0u64;
    for i in (0..deg).rev() {
        v = v * p + coeffs.get(i).copied().unwrap_or(0);
    }
    v as u32
}

fn unpack(mut v: u64, p: u64, deg: usize) -> Vec<u64> {
    let mut out = vec![0u64; deg];
    for slot in out.iter_mut() {
        *slot = v % p;
        v /= p;
    }
    out
}

/// Iterate coefficient tuples `(c_0, ..., c_{deg-1})` in lexicographic order
/// compared from the constant term up.
fn lex_tuples(p: u64, deg: usize) -> impl Iterator<Item = Vec<u64>> {
    let total = (p as u128).pow(deg as u32);
    (0..total).map(move |r| {
        let mut c = vec![0u64; deg];
        let mut r = r;
        for i in (0..deg).rev() {
            c[i] = (r % p as u128) as u64;
            r /= p as u128;
        }
        c
    })
}

/// Smallest monic irreducible polynomial of the given degree, coefficients
/// compared lexicographically from the constant term up.
fn smallest_irreducible(p: u64, deg: usize) -> Vec<u64> {
    for mut c in lex_tuples(p, deg) {
        c.push(1); // monic
        if poly_irreducible(&c, p) {
            return c;
        }
    }
    unreachable!("irreducible polynomials of every degree exist")
}

/// Newton's identities: Tr(x^j) for j < deg from the modulus coefficients.
fn trace_basis_from_modulus(modulus: &[u64], p: u64) -> Vec<u64> {
    let deg = modulus.len() - 1;
    // f(X) = X^D + a_{D-1} X^{D-1} + ... + a_0, e_i = (-1)^i a_{D-i}
    let mut e = vec![0u64; deg + 1];
    e[0] = 1;
    for i in 1..=deg {
        let a = modulus[deg - i] % p;
        e[i] = if i % 2 == 0 { a } else { (p - a) % p };
    }
    // p_k = e_1 p_{k-1} - e_2 p_{k-2} + ... + (-1)^{k-1} k e_k
    let mut ps = vec![0u64; deg];
    ps[0] = (deg as u64) % p;
    for k in 1..deg {
        let mut acc: u64 = 0;
        for i in 1..k {
            let term = e[i] * ps[k - i] % p;
            acc = if i % 2 == 1 {
                (acc + term) % p
            } else {
                (acc + p - term) % p
            };
        }
        let ke = (k as u64 % p) * e[k] % p;
        acc = if k % 2 == 1 {
            (acc + ke) % p
        } else {
            (acc + p - ke) % p
        };
        ps[k] = acc;
    }
    ps
}

impl FieldTower {
    pub fn build(p: u64, f: usize, max_deg: usize) -> Result<FieldTower> {
        Self::build_with_cap(p, f, max_deg, DEFAULT_TABLE_CAP)
    }

    pub fn build_with_cap(p: u64, f: usize, max_deg: usize, cap: u64) -> Result<FieldTower> {
        let levels: Vec<usize> = (1..=max_deg).collect();
        Self::build_levels_with_cap(p, f, &levels, cap)
    }

    /// Build only the given levels (plus every divisor of each, which the
    /// compatible-generator scheme needs).
    pub fn build_levels(p: u64, f: usize, wanted: &[usize]) -> Result<FieldTower> {
        Self::build_levels_with_cap(p, f, wanted, DEFAULT_TABLE_CAP)
    }

    pub fn build_levels_with_cap(
        p: u64,
        f: usize,
        wanted: &[usize],
        cap: u64,
    ) -> Result<FieldTower> {
        if !is_prime(p) {
            return Err(Error::NotPrime(p));
        }
        assert!(f >= 1 && !wanted.is_empty());
        let max_deg = *wanted.iter().max().unwrap();
        let mut need = vec![false; max_deg + 1];
        for &m in wanted {
            assert!(m >= 1);
            for d in 1..=m {
                if m % d == 0 {
                    need[d] = true;
                }
            }
        }
        for m in 1..=max_deg {
            if !need[m] {
                continue;
            }
            match (p as u128).checked_pow((f * m) as u32) {
                Some(n) if n <= cap as u128 => {}
                other => {
                    return Err(Error::CapExceeded {
                        level: m,
                        needed: other.unwrap_or(u128::MAX),
                        cap,
                    })
                }
            }
        }
        let q = p.pow(f as u32);
        let zeta_p = (0..p)
            .map(|j| Complex::from_polar(1.0, TAU * j as f64 / p as f64))
            .collect();
        let mut tower = FieldTower {
            p,
            f,
            q,
            max_deg,
            levels: Vec::with_capacity(max_deg),
            zeta_p,
        };
        for m in 1..=max_deg {
            if need[m] {
                let level = tower.build_level(m)?;
                tower.levels.push(Some(level));
            } else {
                tower.levels.push(None);
            }
        }
        Ok(tower)
    }

    fn level(&self, m: usize) -> &Level {
        self.levels
            .get(m - 1)
            .and_then(|l| l.as_ref())
            .unwrap_or_else(|| panic!("tower level {m} was not built"))
    }

    /// True when the tower materialized this level.
    pub fn has_level(&self, m: usize) -> bool {
        m >= 1 && m <= self.levels.len() && self.levels[m - 1].is_some()
    }

    fn build_level(&self, m: usize) -> Result<Level> {
        let p = self.p;
        let deg = self.f * m;
        let order = p.pow(deg as u32);
        let units = order - 1;
        let modulus = smallest_irreducible(p, deg);
        let unit_factors = prime_factors(units);

        let is_primitive = |c: &[u64]| -> bool {
            for &r in &unit_factors {
                let e = (units / r) as u128;
                if poly_powmod(c, e, &modulus, p) == vec![1] {
                    return false;
                }
            }
            true
        };
        // Provisional generator: prefer the class of x (multiplication by it
        // is a shift), otherwise the first primitive element in lex order.
        let xclass = vec![0u64, 1];
        let h = if deg > 1 && is_primitive(&xclass) {
            xclass
        } else {
            let mut provisional = None;
            for c in lex_tuples(p, deg) {
                if c.iter().all(|&x| x == 0) {
                    continue;
                }
                if is_primitive(&c) {
                    provisional = Some(c);
                    break;
                }
            }
            provisional.expect("every finite field has a primitive element")
        };

        // Tables with respect to the provisional generator.
        let mut antilog = vec![0u32; units as usize];
        let mut log = vec![0u32; order as usize];
        {
            let shift_by_x = h == vec![0u64, 1];
            let neg_mod: Vec<u64> = modulus.iter().map(|&mj| (p - mj % p) % p).collect();
            let mut cur = vec![0u64; deg];
            cur[0] = 1;
            let mut hfull = vec![0u64; deg];
            for (i, &c) in h.iter().enumerate() {
                hfull[i] = c;
            }
            let mut tmp = vec![0u64; 2 * deg];
            for t in 0..units {
                let packed = pack(&cur, p, deg);
                antilog[t as usize] = packed;
                log[packed as usize] = t as u32;
                if t + 1 == units {
                    break;
                }
                if shift_by_x {
                    // cur <- x * cur mod modulus: shift plus one reduction row
                    let lead = cur[deg - 1];
                    for i in (1..deg).rev() {
                        cur[i] = cur[i - 1];
                    }
                    cur[0] = 0;
                    if lead != 0 {
                        for (i, &nm) in neg_mod.iter().enumerate().take(deg) {
                            if nm != 0 {
                                cur[i] = (cur[i] + nm * lead) % p;
                            }
                        }
                    }
                } else {
                    for v in tmp.iter_mut() {
                        *v = 0;
                    }
                    for (i, &a) in cur.iter().enumerate() {
                        if a == 0 {
                            continue;
                        }
                        for (j, &b) in hfull.iter().enumerate() {
                            if b != 0 {
                                tmp[i + j] += a * b;
                            }
                        }
                    }
                    for i in (deg..2 * deg).rev() {
                        let lead = tmp[i] % p;
                        if lead != 0 {
                            for (j, &nm) in neg_mod.iter().enumerate().take(deg) {
                                let idx = i - deg + j;
                                tmp[idx] += nm * lead;
                            }
                        }
                        tmp[i] = 0;
                    }
                    for (c, &v) in cur.iter_mut().zip(&tmp[..deg]) {
                        *c = v % p;
                    }
                }
            }
        }

        // Root sets of minpoly(g_d) for proper divisors d of m, as dlogs
        // with respect to the provisional generator.
        let mut conditions: Vec<(u64, std::collections::HashSet<u64>)> = Vec::new();
        for d in 1..m {
            if m % d != 0 {
                continue;
            }
            let nd = self.level(d).units;
            let minpoly = self.minpoly_coeffs_over_prime(self.generator(d));
            let step = units / nd;
            let mut roots = std::collections::HashSet::new();
            for i in 0..nd {
                let t = i * step;
                // evaluate minpoly at g^t by Horner in dlog arithmetic
                if self.eval_fp_poly_at(&minpoly, t, &antilog, &log, units, deg, &modulus) {
                    roots.insert(t);
                }
            }
            conditions.push((nd, roots));
        }

        // Canonical generator: first in lex order that is primitive and
        // norm-compatible with every lower level.
        let mut chosen = None;
        'search: for c in lex_tuples(p, deg) {
            if c.iter().all(|&x| x == 0) {
                continue;
            }
            let t = log[pack(&c, p, deg) as usize] as u64;
            if units > 1 && num_integer::gcd(t, units) != 1 {
                continue;
            }
            for (nd, roots) in &conditions {
                let img = mulmod(t, units / nd, units);
                if !roots.contains(&img) {
                    continue 'search;
                }
            }
            chosen = Some(t);
            break;
        }
        let s = chosen.expect("compatible generators exist (Conway-style existence)");

        // Rebase tables so that dlogs are taken with respect to g = h^s.
        if s != 0 && s != 1 {
            let mut new_antilog = vec![0u32; units as usize];
            let mut idx = 0u64;
            for (t, slot) in new_antilog.iter_mut().enumerate() {
                let _ = t;
                *slot = antilog[idx as usize];
                idx += s;
                if idx >= units {
                    idx -= units;
                }
            }
            antilog = new_antilog;
            for (t, &packed) in antilog.iter().enumerate() {
                log[packed as usize] = t as u32;
            }
        }

        let x_dlog = if deg > 1 {
            Some(log[pack(&[0, 1], p, deg) as usize] as u64)
        } else {
            None
        };

        let trace_basis = trace_basis_from_modulus(&modulus, p);
        let tr = antilog
            .iter()
            .map(|&packed| {
                let mut v = packed as u64;
                let mut acc = 0u64;
                for tb in trace_basis.iter() {
                    acc = (acc + (v % p) * tb) % p;
                    v /= p;
                }
                acc as u8
            })
            .collect();

        Ok(Level {
            deg,
            order,
            units,
            modulus,
            antilog,
            log,
            x_dlog,
            tr,
            unit_factors,
        })
    }

    /// True iff `poly` (coefficients in F_p) vanishes at `g^t`.
    #[allow(clippy::too_many_arguments)]
    fn eval_fp_poly_at(
        &self,
        poly: &[u64],
        t: u64,
        antilog: &[u32],
        log: &[u32],
        units: u64,
        deg: usize,
        modulus: &[u64],
    ) -> bool {
        let p = self.p;
        // Horner: acc = acc * g^t + c_i, in packed representation
        let mut acc: Vec<u64> = Vec::new();
        let gt = unpack(antilog[t as usize] as u64, p, deg);
        let _ = (log, units);
        for &ci in poly.iter().rev() {
            acc = poly_mulmod(&acc, &gt, modulus, p);
            if ci != 0 {
                if acc.is_empty() {
                    acc = vec![ci];
                } else {
                    acc[0] = (acc[0] + ci) % p;
                }
            }
            poly_trim(&mut acc);
        }
        acc.is_empty()
    }

    /// Coefficients over F_p of the minimal polynomial of `x` over the prime
    /// field, as plain integers mod p.
    fn minpoly_coeffs_over_prime(&self, x: Fe) -> Vec<u64> {
        let p = self.p;
        let lv = self.level(x.level());
        // orbit of x under the p-power Frobenius
        let mut orbit = vec![x];
        let mut cur = self.pow_raw(x, p);
        while cur != x {
            orbit.push(cur);
            cur = self.pow_raw(cur, p);
        }
        // product of (X - root), coefficients as field elements
        let mut coeffs = vec![self.one(x.level())];
        for &r in &orbit {
            let neg_r = self.neg(r);
            let mut next = vec![self.zero(x.level()); coeffs.len() + 1];
            for (i, &c) in coeffs.iter().enumerate() {
                next[i + 1] = self.add(next[i + 1], c);
                next[i] = self.add(next[i], self.mul(c, neg_r));
            }
            coeffs = next;
        }
        coeffs
            .iter()
            .map(|&c| {
                if c.is_zero() {
                    0
                } else {
                    let packed = lv.antilog[self.dlog(c).unwrap() as usize] as u64;
                    debug_assert!(packed < p, "minpoly coefficient not in prime field");
                    packed
                }
            })
            .collect()
    }

    // ---- basic accessors ----

    pub fn p(&self) -> u64 {
        self.p
    }
    pub fn f(&self) -> usize {
        self.f
    }
    pub fn q(&self) -> u64 {
        self.q
    }
    pub fn max_deg(&self) -> usize {
        self.max_deg
    }
    /// q^m
    pub fn order(&self, m: usize) -> u64 {
        self.level(m).order
    }
    /// q^m - 1
    pub fn units(&self, m: usize) -> u64 {
        self.level(m).units
    }
    pub fn modulus(&self, m: usize) -> &[u64] {
        &self.level(m).modulus
    }

    pub fn zero(&self, m: usize) -> Fe {
        Fe {
            level: m as u8,
            code: 0,
        }
    }
    pub fn one(&self, m: usize) -> Fe {
        self.from_dlog(m, 0)
    }
    pub fn generator(&self, m: usize) -> Fe {
        self.from_dlog(m, 1 % self.units(m))
    }
    pub fn from_dlog(&self, m: usize, t: u64) -> Fe {
        Fe {
            level: m as u8,
            code: (t % self.units(m)) as u32 + 1,
        }
    }
    pub fn dlog(&self, x: Fe) -> Option<u64> {
        if x.is_zero() {
            None
        } else {
            Some(x.code as u64 - 1)
        }
    }
    /// All elements of `F_{q^m}`, zero first, then `g^0, g^1, ...`.
    pub fn elements(&self, m: usize) -> impl Iterator<Item = Fe> + '_ {
        let units = self.units(m);
        (0..=units).map(move |c| Fe {
            level: m as u8,
            code: c as u32,
        })
    }

    // ---- arithmetic ----

    pub fn mul(&self, x: Fe, y: Fe) -> Fe {
        debug_assert_eq!(x.level, y.level);
        if x.is_zero() || y.is_zero() {
            return self.zero(x.level());
        }
        let n = self.units(x.level());
        let t = (x.code as u64 - 1) + (y.code as u64 - 1);
        let t = if t >= n { t - n } else { t };
        Fe {
            level: x.level,
            code: t as u32 + 1,
        }
    }

    pub fn inv(&self, x: Fe) -> Fe {
        assert!(!x.is_zero(), "inverse of zero");
        let n = self.units(x.level());
        let t = (n - (x.code as u64 - 1)) % n;
        Fe {
            level: x.level,
            code: t as u32 + 1,
        }
    }

    pub fn div(&self, x: Fe, y: Fe) -> Fe {
        self.mul(x, self.inv(y))
    }

    /// x^e for a plain unsigned exponent.
    pub fn pow_raw(&self, x: Fe, e: u64) -> Fe {
        if x.is_zero() {
            return x;
        }
        let n = self.units(x.level());
        self.from_dlog(x.level(), mulmod(self.dlog(x).unwrap(), e % n, n))
    }

    pub fn pow(&self, x: Fe, e: i64) -> Fe {
        if e >= 0 {
            self.pow_raw(x, e as u64)
        } else {
            self.pow_raw(self.inv(x), (-e) as u64)
        }
    }

    pub fn add(&self, x: Fe, y: Fe) -> Fe {
        debug_assert_eq!(x.level, y.level);
        if x.is_zero() {
            return y;
        }
        if y.is_zero() {
            return x;
        }
        let lv = self.level(x.level());
        let a = lv.antilog[x.code as usize - 1] as u64;
        let b = lv.antilog[y.code as usize - 1] as u64;
        let packed = if self.p == 2 {
            a ^ b
        } else {
            let mut out = 0u64;
            let mut mult = 1u64;
            let (mut a, mut b) = (a, b);
            for _ in 0..lv.deg {
                let s = (a % self.p + b % self.p) % self.p;
                out += s * mult;
                mult *= self.p;
                a /= self.p;
                b /= self.p;
            }
            out
        };
        if packed == 0 {
            return self.zero(x.level());
        }
        Fe {
            level: x.level,
            code: lv.log[packed as usize] + 1,
        }
    }

    pub fn neg(&self, x: Fe) -> Fe {
        if x.is_zero() || self.p == 2 {
            return x;
        }
        let n = self.units(x.level());
        // -1 has dlog n/2
        self.mul(x, self.from_dlog(x.level(), n / 2))
    }

    pub fn sub(&self, x: Fe, y: Fe) -> Fe {
        self.add(x, self.neg(y))
    }

    pub fn minus_one(&self, m: usize) -> Fe {
        self.neg(self.one(m))
    }

    /// Lift of a prime-field constant `c` into level m.
    pub fn from_scalar(&self, m: usize, c: u64) -> Fe {
        let c = c % self.p;
        if c == 0 {
            return self.zero(m);
        }
        let lv = self.level(m);
        Fe {
            level: m as u8,
            code: lv.log[c as usize] + 1,
        }
    }

    // ---- tower structure ----

    /// Embedding `F_{q^m} -> F_{q^n}` for `m | n`.
    pub fn embed(&self, x: Fe, n: usize) -> Fe {
        let m = x.level();
        if m == n {
            return x;
        }
        assert_eq!(n % m, 0, "embed requires m | n");
        if x.is_zero() {
            return self.zero(n);
        }
        let scale = self.units(n) / self.units(m);
        self.from_dlog(n, mulmod(self.dlog(x).unwrap(), scale, self.units(n)))
    }

    /// Inverse of `embed` when `x` lies in the subfield of level `m`.
    pub fn try_descend(&self, x: Fe, m: usize) -> Option<Fe> {
        let n = x.level();
        if n == m {
            return Some(x);
        }
        if n % m != 0 {
            return None;
        }
        if x.is_zero() {
            return Some(self.zero(m));
        }
        let scale = self.units(n) / self.units(m);
        let t = self.dlog(x).unwrap();
        if t % scale == 0 {
            Some(self.from_dlog(m, t / scale))
        } else {
            None
        }
    }

    /// `x^{q^j}` (the level-m Frobenius orbit map for j mod m).
    pub fn frobenius(&self, x: Fe, j: i64) -> Fe {
        if x.is_zero() {
            return x;
        }
        let m = x.level();
        let n = self.units(m);
        let jm = j.rem_euclid(m as i64) as u32;
        let mut e = 1u64;
        for _ in 0..jm {
            e = mulmod(e, self.q % n.max(1), n.max(1));
        }
        if n == 0 {
            return x;
        }
        self.from_dlog(m, mulmod(self.dlog(x).unwrap(), e, n))
    }

    /// Norm from the level of `x` down to level `m` (`m` must divide it).
    pub fn norm(&self, x: Fe, m: usize) -> Result<Fe> {
        let n = x.level();
        if n % m != 0 {
            return Err(Error::NotDivisor { m, n });
        }
        if x.is_zero() {
            return Ok(self.zero(m));
        }
        // with compatible generators: dlog_m(N(x)) = dlog_n(x) mod (q^m - 1)
        Ok(self.from_dlog(m, self.dlog(x).unwrap() % self.units(m)))
    }

    /// Trace from the level of `x` down to level `m` (`m` must divide it).
    pub fn trace(&self, x: Fe, m: usize) -> Result<Fe> {
        let n = x.level();
        if n % m != 0 {
            return Err(Error::NotDivisor { m, n });
        }
        let mut acc = self.zero(n);
        let mut cur = x;
        for _ in 0..n / m {
            acc = self.add(acc, cur);
            cur = self.frobenius(cur, m as i64);
        }
        Ok(self
            .try_descend(acc, m)
            .expect("trace lands in the subfield"))
    }

    /// Absolute trace to the prime field, as an integer in `0..p`.
    pub fn abs_trace(&self, x: Fe) -> u64 {
        if x.is_zero() {
            return 0;
        }
        self.level(x.level()).tr[x.code as usize - 1] as u64
    }

    /// Canonical additive character `psi_m(x) = zeta_p^{Tr_{F_{q^m}/F_p}(x)}`.
    pub fn psi(&self, x: Fe) -> Complex {
        if x.is_zero() {
            return Complex::new(1.0, 0.0);
        }
        self.zeta_p[self.level(x.level()).tr[x.code as usize - 1] as usize]
    }

    /// `psi` by discrete log, avoiding the element wrapper in hot loops.
    pub fn psi_dlog(&self, m: usize, t: u64) -> Complex {
        self.zeta_p[self.level(m).tr[t as usize] as usize]
    }

    /// Multiplicative order of x.
    pub fn elt_order(&self, x: Fe) -> u64 {
        let n = self.units(x.level());
        n / num_integer::gcd(n, self.dlog(x).expect("order of zero"))
    }

    /// Degree of x: the size of its Frobenius orbit over F_q.
    pub fn elt_degree(&self, x: Fe) -> usize {
        let m = x.level();
        if x.is_zero() {
            return 1;
        }
        for d in 1..=m {
            if m % d == 0 && self.frobenius(x, d as i64) == x {
                return d;
            }
        }
        m
    }

    /// Prime factors of `q^m - 1`.
    pub fn unit_factors(&self, m: usize) -> &[u64] {
        &self.level(m).unit_factors
    }

    /// Packed base-p digit representation of `x` (the polynomial coefficients).
    pub fn packed(&self, x: Fe) -> u64 {
        if x.is_zero() {
            0
        } else {
            self.level(x.level()).antilog[x.code as usize - 1] as u64
        }
    }

    pub fn from_packed(&self, m: usize, packed: u64) -> Fe {
        if packed == 0 {
            return self.zero(m);
        }
        Fe {
            level: m as u8,
            code: self.level(m).log[packed as usize] + 1,
        }
    }

    /// The class of the polynomial variable x at level m (None when deg = 1).
    pub fn var_class(&self, m: usize) -> Option<Fe> {
        self.level(m).x_dlog.map(|t| self.from_dlog(m, t))
    }

    /// Minimal polynomial of `x` over `F_q`, returned as level-1 coefficients
    /// (constant term first, monic).
    pub fn minpoly_over_base(&self, x: Fe) -> Vec<Fe> {
        let m = x.level();
        let d = self.elt_degree(x);
        let mut coeffs = vec![self.one(m)];
        let mut r = x;
        for _ in 0..d {
            let neg_r = self.neg(r);
            let mut next = vec![self.zero(m); coeffs.len() + 1];
            for (i, &c) in coeffs.iter().enumerate() {
                next[i + 1] = self.add(next[i + 1], c);
                next[i] = self.add(next[i], self.mul(c, neg_r));
            }
            coeffs = next;
            r = self.frobenius(r, 1);
        }
        coeffs
            .iter()
            .map(|&c| self.try_descend(c, 1).expect("minpoly over F_q"))
            .collect()
    }

    /// JSON description: moduli, generators and embedding data per level.
    pub fn info_json(&self) -> serde_json::Value {
        use serde_json::json;
        let levels: Vec<_> = (1..=self.max_deg)
            .map(|m| {
                let lv = self.level(m);
                let emb: Vec<_> = (1..=self.max_deg)
                    .filter(|&n| n % m == 0 && n != m && self.has_level(n))
                    .map(|n| {
                        let root = lv
                            .x_dlog
                            .map(|t| mulmod(t, self.units(n) / lv.units, self.units(n)));
                        json!({
                            "target_level": n,
                            "generator_image_dlog": self.units(n) / lv.units,
                            "modulus_root_dlog": root,
                        })
                    })
                    .collect();
                json!({
                    "level": m,
                    "order": lv.order,
                    "modulus": lv.modulus,
                    "generator_packed": lv.antilog[if lv.units > 1 {1} else {0}],
                    "embeddings": emb,
                })
            })
            .collect();
        json!({
            "p": self.p,
            "f": self.f,
            "q": self.q,
            "max_deg": self.max_deg,
            "levels": levels,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn build_small_towers() {
        // orders forced
        let t = FieldTower::build(2, 1, 4).unwrap();
        assert_eq!(
            (1..=4).map(|m| t.order(m)).collect::<Vec<_>>(),
            vec![2, 4, 8, 16]
        );
        let t = FieldTower::build(3, 1, 2).unwrap();
        assert_eq!(t.elt_order(t.generator(2)), 8);
        let t = FieldTower::build(2, 2, 2).unwrap();
        assert_eq!(t.q(), 4);
        assert_eq!(t.order(1), 4);
        assert_eq!(t.order(2), 16);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            FieldTower::build(4, 1, 2),
            Err(Error::NotPrime(4))
        ));
        assert!(matches!(
            FieldTower::build_with_cap(2, 1, 30, 1 << 20),
            Err(Error::CapExceeded { .. })
        ));
    }

    #[test]
    fn known_moduli_and_generators() {
        let t = FieldTower::build(3, 1, 2).unwrap();
        // x^2 + 1 is the lex-smallest irreducible over F_3, and 1 + x the
        // compatible generator (norm to F_3 equals 2, the generator there).
        assert_eq!(t.modulus(2), &[1, 0, 1]);
        assert_eq!(t.packed(t.generator(1)), 2); // g_1 = 2
        assert_eq!(t.packed(t.generator(2)), 3 + 1); // g_2 = 1 + x packed
        let n = t.norm(t.generator(2), 1).unwrap();
        assert_eq!(n, t.generator(1));
    }

    #[test]
    fn norm_and_trace_against_definitions() {
        for (p, f, maxd) in [(2u64, 1usize, 4usize), (3, 1, 3), (2, 2, 2), (5, 1, 2)] {
            let t = FieldTower::build(p, f, maxd).unwrap();
            for n in 1..=maxd {
                for m in (1..=n).filter(|m| n % m == 0) {
                    for x in t.elements(n) {
                        // norm = product of conjugates
                        let mut prod = t.one(n);
                        let mut sum = t.zero(n);
                        let mut cur = x;
                        for _ in 0..n / m {
                            prod = t.mul(prod, cur);
                            sum = t.add(sum, cur);
                            cur = t.frobenius(cur, m as i64);
                        }
                        if x.is_zero() {
                            prod = t.zero(n);
                        }
                        assert_eq!(t.embed(t.norm(x, m).unwrap(), n), prod);
                        assert_eq!(t.embed(t.trace(x, m).unwrap(), n), sum);
                    }
                }
            }
        }
    }

    #[test]
    fn trace_example_q2() {
        // Tr_{2/1}(g_2) = g_2 + g_2^2 = 1 over F_4
        let t = FieldTower::build(2, 1, 2).unwrap();
        let g = t.generator(2);
        assert_eq!(t.trace(g, 1).unwrap(), t.one(1));
        assert_eq!(t.trace(t.zero(2), 1).unwrap(), t.zero(1));
    }

    #[test]
    fn norm_example_q3() {
        let t = FieldTower::build(3, 1, 2).unwrap();
        let g2 = t.generator(2);
        // N_{2/1}(g_2) = g_2^4 viewed in F_3, and equals g_1
        assert_eq!(t.norm(g2, 1).unwrap(), t.generator(1));
        assert_eq!(t.embed(t.generator(1), 2), t.pow_raw(g2, 4));
    }

    #[test]
    fn embedding_triangles_commute() {
        let t = FieldTower::build(2, 1, 6).unwrap();
        for l in 1..=6usize {
            for n in (1..=l).filter(|n| l % n == 0) {
                for m in (1..=n).filter(|m| n % m == 0) {
                    for x in t.elements(m) {
                        assert_eq!(t.embed(t.embed(x, n), l), t.embed(x, l));
                    }
                }
            }
        }
    }

    #[test]
    fn norm_surjective_trace_linear() {
        for (p, f) in [(2u64, 1usize), (3, 1), (2, 2)] {
            let t = FieldTower::build(p, f, 3).unwrap();
            for m in 1..=3usize {
                // norm onto F_q^x is surjective
                let mut hit = std::collections::HashSet::new();
                for x in t.elements(m).skip(1) {
                    hit.insert(t.norm(x, 1).unwrap());
                }
                assert_eq!(hit.len() as u64, t.units(1));
                // trace is F_q-linear and surjective
                let mut tr_img = std::collections::HashSet::new();
                for x in t.elements(m) {
                    tr_img.insert(t.trace(x, 1).unwrap());
                    for c in t.elements(1) {
                        let cx = t.mul(t.embed(c, m), x);
                        assert_eq!(
                            t.trace(cx, 1).unwrap(),
                            t.mul(c, t.trace(x, 1).unwrap())
                        );
                    }
                }
                assert_eq!(tr_img.len() as u64, t.order(1));
            }
        }
    }

    #[test]
    fn frobenius_basics() {
        let t = FieldTower::build(2, 1, 3).unwrap();
        let g = t.generator(2);
        assert_eq!(t.frobenius(g, 0), g);
        assert_eq!(t.frobenius(g, 1), t.pow_raw(g, 2));
        assert_eq!(t.frobenius(g, 2), g);
        for x in t.elements(3) {
            assert_eq!(t.frobenius(x, 3), x);
        }
    }

    #[test]
    fn abs_trace_matches_frobenius_sum() {
        for (p, f) in [(2u64, 1usize), (3, 1), (2, 2), (5, 1)] {
            let t = FieldTower::build(p, f, 2).unwrap();
            for m in 1..=2usize {
                for x in t.elements(m) {
                    // absolute trace by summing p-power conjugates
                    let mut sum = t.zero(m);
                    let mut cur = x;
                    for _ in 0..(f * m) {
                        sum = t.add(sum, cur);
                        cur = t.pow_raw(cur, p);
                    }
                    let expect = t.packed(sum) % p;
                    assert_eq!(t.abs_trace(x), expect, "p={p} m={m} x={x:?}");
                }
            }
        }
    }

    #[test]
    fn psi_is_additive_and_nontrivial() {
        let t = FieldTower::build(3, 1, 2).unwrap();
        for m in 1..=2usize {
            let mut total = Complex::new(0.0, 0.0);
            for x in t.elements(m) {
                total += t.psi(x);
                for y in t.elements(m) {
                    let lhs = t.psi(t.add(x, y));
                    let rhs = t.psi(x) * t.psi(y);
                    assert!((lhs - rhs).norm() < 1e-12);
                }
            }
            assert!(total.norm() < 1e-9, "psi must be nontrivial");
        }
    }

    #[test]
    fn minpoly_over_base() {
        let t = FieldTower::build(2, 1, 2).unwrap();
        let g = t.generator(2);
        let mp = t.minpoly_over_base(g);
        // x^2 + x + 1
        assert_eq!(mp.len(), 3);
        assert_eq!(mp[0], t.one(1));
        assert_eq!(mp[1], t.one(1));
        assert_eq!(mp[2], t.one(1));
    }
}
