//! Exotic Gauss sums, exotic Kloosterman sums, and the L-polynomials
//! attached to Kloosterman families.
//!
//! Every sum has at least two computation paths:
//!
//! - a defining enumeration over units of the tensor algebra (budgeted), and
//! - a spectral path through classical Gauss sums: the whole Gauss-sum
//!   spectrum of a level is one FFT, exotic Gauss sums are products of
//!   table entries, and Kloosterman values at every `xi` at once are an
//!   inverse FFT of that spectrum.
//!
//! The spectral path is what makes the larger L-polynomial grids feasible;
//! the enumeration path is the reference and is used whenever the fiber is
//! small.

use crate::chars::{gauss_table, unit_group_inverse_dft, zeta, MultChar};
use crate::error::{Error, Result};
use crate::etale::{EtaleAlgebra, TensorCtx};
use crate::fields::{Fe, FieldTower};
use crate::Complex;
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

/// `alpha = alpha_1 x ... x alpha_s` on `F_λ^x`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CompositeChar {
    pub lambda: EtaleAlgebra,
    pub alphas: Vec<MultChar>,
}

impl CompositeChar {
    pub fn new(lambda: EtaleAlgebra, alphas: Vec<MultChar>) -> CompositeChar {
        assert_eq!(lambda.parts.len(), alphas.len());
        for (k, a) in lambda.parts.iter().zip(&alphas) {
            assert_eq!(*k, a.level, "character level must match partition part");
        }
        CompositeChar { lambda, alphas }
    }

    pub fn total(&self) -> usize {
        self.lambda.total()
    }

    pub fn inverse(&self, tower: &FieldTower) -> CompositeChar {
        CompositeChar {
            lambda: self.lambda.clone(),
            alphas: self.alphas.iter().map(|a| a.inverse(tower)).collect(),
        }
    }

    pub fn all_regular(&self, tower: &FieldTower) -> bool {
        self.alphas.iter().all(|a| a.is_regular(tower))
    }
}

/// Sign `(-1)^e` as a real scalar.
pub fn sign(e: usize) -> f64 {
    if e % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// The normalized L-polynomial `L*(T) = prod_j (1 - w*_j T)` of a
/// Kloosterman family over `F_{q^a}`.
#[derive(Debug, Clone)]
pub struct LPolynomial {
    pub base: usize,
    pub k: usize,
    /// c_0..c_k with c_0 = 1
    pub coeffs: Vec<Complex>,
    /// the normalized roots `w*_j` (|w*| = 1 under purity)
    pub roots: Vec<Complex>,
}

impl LPolynomial {
    /// Unnormalized roots `w_j = q^{a(k-1)/2} w*_j`.
    pub fn raw_roots(&self, q: u64) -> Vec<Complex> {
        let scale = (q as f64).powf(self.base as f64 * (self.k as f64 - 1.0) / 2.0);
        self.roots.iter().map(|w| w * scale).collect()
    }
}

pub struct SumCtx<'a> {
    pub tower: &'a FieldTower,
    pub budget: u64,
    /// fibers at most this large are enumerated directly
    pub direct_threshold: u64,
    gauss: Mutex<HashMap<usize, Arc<Vec<Complex>>>>,
    kl_all: Mutex<HashMap<(CompositeChar, usize), Arc<Vec<Complex>>>>,
    lpoly: Mutex<HashMap<(CompositeChar, usize, u64), Arc<LPolynomial>>>,
}

impl<'a> SumCtx<'a> {
    pub fn new(tower: &'a FieldTower) -> SumCtx<'a> {
        SumCtx {
            tower,
            budget: 100_000_000,
            direct_threshold: 1 << 20,
            gauss: Mutex::new(HashMap::new()),
            kl_all: Mutex::new(HashMap::new()),
            lpoly: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_budget(tower: &'a FieldTower, budget: u64) -> SumCtx<'a> {
        let mut ctx = SumCtx::new(tower);
        ctx.budget = budget;
        ctx
    }

    /// Cached per-level table of all classical Gauss sums.
    pub fn gauss_spectrum(&self, level: usize) -> Arc<Vec<Complex>> {
        let mut cache = self.gauss.lock().unwrap();
        cache
            .entry(level)
            .or_insert_with(|| Arc::new(gauss_table(self.tower, level)))
            .clone()
    }

    // ---- exotic Gauss sums ----

    /// Defining sum over the units of `F_k ⊗ F_m`, with sign `(-1)^{k+m+km}`.
    pub fn exotic_gauss(&self, alpha: MultChar, m: usize, chi: MultChar) -> Result<Complex> {
        let k = alpha.level;
        assert_eq!(chi.level, m);
        let ctx = TensorCtx::new(self.tower, EtaleAlgebra::new(vec![k]), m)?;
        let mut acc = Complex::new(0.0, 0.0);
        for z in ctx.units(self.budget)? {
            let n1 = ctx.norm1(&z)[0];
            let n2 = ctx.norm2(&z);
            acc += alpha.eval(self.tower, n1)? * chi.eval(self.tower, n2)? * ctx.psi_of(&z);
        }
        Ok(acc * sign(k + m + k * m))
    }

    /// Product formula: `prod_{j<gcd(k,m)} tau(alpha∘N · chi^{q^j}∘N, psi_l)`.
    pub fn exotic_gauss_product(
        &self,
        alpha: MultChar,
        m: usize,
        chi: MultChar,
    ) -> Result<Complex> {
        let k = alpha.level;
        assert_eq!(chi.level, m);
        let l = num_integer::lcm(k, m);
        let d = num_integer::gcd(k, m);
        if l > self.tower.max_deg() {
            return Err(Error::Invalid(format!(
                "lcm({k},{m}) = {l} exceeds tower depth"
            )));
        }
        let table = self.gauss_spectrum(l);
        let nl = self.tower.units(l) as u128;
        let nk = self.tower.units(k) as u128;
        let nm = self.tower.units(m) as u128;
        let a_lift = alpha.index as u128 * (nl / nk);
        let c_lift = chi.index as u128 * (nl / nm);
        let q = self.tower.q() as u128;
        let mut out = Complex::new(1.0, 0.0);
        let mut qj = 1u128;
        for _ in 0..d {
            let idx = (a_lift + c_lift * qj % nl) % nl;
            out *= table[idx as usize];
            qj = qj * q % nl;
        }
        Ok(out)
    }

    /// `tau_{λ,m}(alpha, chi, psi) = prod_i tau_{k_i,m}(alpha_i, chi, psi)`.
    pub fn composite_exotic_gauss(
        &self,
        alpha: &CompositeChar,
        m: usize,
        chi: MultChar,
    ) -> Result<Complex> {
        let mut out = Complex::new(1.0, 0.0);
        for a in &alpha.alphas {
            out *= self.exotic_gauss_product(*a, m, chi)?;
        }
        Ok(out)
    }

    /// The composite sum computed as a single enumeration over units of
    /// `F_λ ⊗ F_m`, with sign `(-1)^{k+sm+mk}`. Reference path.
    pub fn composite_exotic_gauss_direct(
        &self,
        alpha: &CompositeChar,
        m: usize,
        chi: MultChar,
    ) -> Result<Complex> {
        let ctx = TensorCtx::new(self.tower, alpha.lambda.clone(), m)?;
        let k = alpha.total();
        let s = alpha.lambda.num_parts();
        let mut acc = Complex::new(0.0, 0.0);
        for z in ctx.units(self.budget)? {
            let n1 = ctx.norm1(&z);
            let mut v = chi.eval(self.tower, ctx.norm2(&z))? * ctx.psi_of(&z);
            for (a, x) in alpha.alphas.iter().zip(&n1) {
                v *= a.eval(self.tower, *x)?;
            }
            acc += v;
        }
        Ok(acc * sign(k + s * m + m * k))
    }

    /// Histogram of `(dlog N1, dlog N2, abs trace)` over the units of
    /// `F_k ⊗ F_m`; evaluating an `(alpha, chi)` pair afterwards is a small
    /// weighted sum. Used when scanning all characters of a level at once.
    pub fn exotic_gauss_histogram(&self, k: usize, m: usize) -> Result<PairHistogram> {
        let t = self.tower;
        let l = num_integer::lcm(k, m);
        let d = num_integer::gcd(k, m);
        if l > t.max_deg() {
            return Err(Error::Invalid(format!("lcm({k},{m}) exceeds tower depth")));
        }
        let nl = t.units(l);
        let nk = t.units(k);
        let nm = t.units(m);
        let total = (nl as u128).pow(d as u32);
        if total > self.budget as u128 {
            return Err(Error::BudgetExceeded {
                needed: total,
                budget: self.budget,
            });
        }
        let p = t.p() as usize;
        let tr_code: Vec<u8> = t.elements(l).map(|x| t.abs_trace(x) as u8).collect();
        let q = t.q() as u128;
        let qmod: Vec<u64> = {
            let mut v = Vec::with_capacity(d);
            let mut cur = 1u128;
            for _ in 0..d {
                v.push(cur as u64);
                cur = cur * q % nl as u128;
            }
            v
        };
        let mut h = vec![0u64; nk as usize * nm as usize * p];
        // odometer over (t_0,...,t_{d-1}) with incrementally maintained
        // suffix sums: when coordinate j resets, recompute from the top
        let mut idx = vec![0u64; d];
        loop {
            let mut sum = t.zero(l);
            let mut n1: u64 = 0;
            let mut n2l: u128 = 0;
            for (j, &tj) in idx.iter().enumerate() {
                sum = t.add(sum, t.from_dlog(l, tj));
                n1 += tj;
                n2l += tj as u128 * qmod[j] as u128 % nl as u128;
            }
            let n1 = n1 % nk;
            let n2 = (n2l % nl as u128 % nm as u128) as u64;
            let cell =
                (n1 as usize * nm as usize + n2 as usize) * p + tr_code[sum.code() as usize] as usize;
            h[cell] += 1;
            let mut j = 0;
            loop {
                if j == d {
                    return Ok(PairHistogram {
                        k,
                        m,
                        nk,
                        nm,
                        p: p as u64,
                        counts: h,
                        sign: sign(k + m + k * m),
                    });
                }
                idx[j] += 1;
                if idx[j] < nl {
                    break;
                }
                idx[j] = 0;
                j += 1;
            }
        }
    }

    // ---- exotic Kloosterman sums ----

    /// `Kl_{m,F_a}(alpha, psi, xi) = Kl_{am}(alpha, psi, xi)`; `xi` must be a
    /// nonzero element of level `a*m`.
    pub fn kloosterman(&self, alpha: &CompositeChar, a: usize, m: usize, xi: Fe) -> Result<Complex> {
        let n = a * m;
        if xi.is_zero() {
            return Err(Error::Invalid("Kloosterman sum at xi = 0".into()));
        }
        if xi.level() != n {
            return Err(Error::LevelMismatch {
                expected: n,
                got: xi.level(),
            });
        }
        let ctx = TensorCtx::new(self.tower, alpha.lambda.clone(), n)?;
        let fiber = ctx.units_count() / self.tower.units(n) as u128;
        if fiber <= self.direct_threshold as u128 {
            self.kloosterman_direct(alpha, n, xi)
        } else {
            let all = self.kloosterman_all(alpha, n)?;
            Ok(all[self.tower.dlog(xi).unwrap() as usize])
        }
    }

    /// Defining enumeration over the fiber `N^{(2)} = xi` at level `n`.
    pub fn kloosterman_direct(&self, alpha: &CompositeChar, n: usize, xi: Fe) -> Result<Complex> {
        let ctx = TensorCtx::new(self.tower, alpha.lambda.clone(), n)?;
        let mut acc = Complex::new(0.0, 0.0);
        for z in ctx.unit_fiber(xi, self.budget)? {
            let n1 = ctx.norm1(&z);
            let mut v = ctx.psi_of(&z);
            for (a, x) in alpha.alphas.iter().zip(&n1) {
                v *= a.eval(self.tower, *x)?;
            }
            acc += v;
        }
        Ok(acc)
    }

    /// All values `Kl_n(alpha, psi, g^t)` at once through the Gauss-sum
    /// spectrum: the dual-group transform of `Kl_n(alpha, psi, ·)` is
    /// `(-1)^{k+sn+nk} tau_{λ,n}(alpha, ·, psi)`.
    pub fn kloosterman_all(&self, alpha: &CompositeChar, n: usize) -> Result<Arc<Vec<Complex>>> {
        let key = (alpha.clone(), n);
        if let Some(hit) = self.kl_all.lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let t = self.tower;
        let nn = t.units(n);
        let q = t.q() as u128;
        let total_sign = {
            let k = alpha.total();
            let s = alpha.lambda.num_parts();
            sign(k + s * n + n * k)
        };
        let mut spec = vec![Complex::new(total_sign, 0.0); nn as usize];
        for ai in &alpha.alphas {
            let k = ai.level;
            let l = num_integer::lcm(k, n);
            let d = num_integer::gcd(k, n);
            if l > t.max_deg() {
                return Err(Error::Invalid(format!(
                    "component level lcm({k},{n}) exceeds tower depth"
                )));
            }
            let table = self.gauss_spectrum(l);
            let nl = t.units(l) as u128;
            let a_lift = ai.index as u128 * (nl / t.units(k) as u128);
            let scale_m = nl / nn as u128;
            let mut qr: Vec<u128> = Vec::with_capacity(d);
            let mut cur = 1u128;
            for _ in 0..d {
                qr.push(cur);
                cur = cur * q % nl;
            }
            for (j, slot) in spec.iter_mut().enumerate() {
                let c_lift = j as u128 * scale_m;
                let mut v = Complex::new(1.0, 0.0);
                for &r in &qr {
                    let idx = (a_lift + c_lift * r % nl) % nl;
                    v *= table[idx as usize];
                }
                *slot *= v;
            }
        }
        let out = Arc::new(unit_group_inverse_dft(&spec));
        self.kl_all.lock().unwrap().insert(key, out.clone());
        Ok(out)
    }

    pub fn kloosterman_normalized(
        &self,
        alpha: &CompositeChar,
        a: usize,
        m: usize,
        xi: Fe,
    ) -> Result<Complex> {
        let k = alpha.total();
        let scale = (self.tower.q() as f64).powf(-((k as f64 - 1.0) * (a * m) as f64) / 2.0);
        Ok(self.kloosterman(alpha, a, m, xi)? * scale)
    }

    // ---- L-polynomials ----

    /// Power sums of the normalized roots: `P_r = (-1)^{k-1} Kl*_{r,F_a}`.
    pub fn normalized_power_sums(
        &self,
        alpha: &CompositeChar,
        a: usize,
        xi: Fe,
        upto: usize,
    ) -> Result<Vec<Complex>> {
        let k = alpha.total();
        let mut ps = Vec::with_capacity(upto);
        for r in 1..=upto {
            let xin = self.tower.embed(xi, a * r);
            let v = self.kloosterman_normalized(alpha, a, r, xin)?;
            ps.push(v * sign(k - 1));
        }
        Ok(ps)
    }

    /// Series coefficients `e_0..e_upto` of `L*(T)` (Newton's identities from
    /// the normalized power sums). Coefficients beyond degree `k` vanish for
    /// honest Kloosterman families; callers assert that, the constructor does
    /// not.
    pub fn lpoly_series(
        &self,
        alpha: &CompositeChar,
        a: usize,
        xi: Fe,
        upto: usize,
    ) -> Result<Vec<Complex>> {
        assert_eq!(xi.level(), a);
        let ps = self.normalized_power_sums(alpha, a, xi, upto)?;
        let mut e = vec![Complex::new(1.0, 0.0)];
        for j in 1..=upto {
            let mut acc = Complex::new(0.0, 0.0);
            for i in 1..=j {
                let term = e[j - i] * ps[i - 1];
                acc += if i % 2 == 1 { term } else { -term };
            }
            e.push(acc / j as f64);
        }
        Ok(e)
    }

    /// The degree-`k` normalized L-polynomial and its roots.
    pub fn lpolynomial(&self, alpha: &CompositeChar, a: usize, xi: Fe) -> Result<Arc<LPolynomial>> {
        assert_eq!(xi.level(), a, "xi lives at the base level");
        let key = (alpha.clone(), a, self.tower.dlog(xi).unwrap());
        if let Some(hit) = self.lpoly.lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let k = alpha.total();
        let e = self.lpoly_series(alpha, a, xi, k)?;
        // L*(T) = sum_j (-1)^j e_j T^j; the monic polynomial with the
        // normalized roots as zeros is sum_j (-1)^{k-j} e_{k-j} T^j
        let coeffs: Vec<Complex> = (0..=k)
            .map(|j| e[j] * if j % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let mcoef: Vec<Complex> = (0..=k)
            .map(|j| e[k - j] * if (k - j) % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let roots = durand_kerner(&mcoef);
        let lp = Arc::new(LPolynomial {
            base: a,
            k,
            coeffs,
            roots,
        });
        self.lpoly.lock().unwrap().insert(key, lp.clone());
        Ok(lp)
    }
}

/// Histogram over `(dlog N1, dlog N2, abs trace)`; see
/// [`SumCtx::exotic_gauss_histogram`].
pub struct PairHistogram {
    pub k: usize,
    pub m: usize,
    nk: u64,
    nm: u64,
    p: u64,
    counts: Vec<u64>,
    sign: f64,
}

impl PairHistogram {
    /// The defining exotic Gauss sum for one `(alpha, chi)` pair.
    pub fn eval(&self, alpha_idx: u64, chi_idx: u64) -> Complex {
        let p = self.p as usize;
        let za: Vec<Complex> = (0..self.nk)
            .map(|t| zeta(self.nk, (alpha_idx as u128 * t as u128 % self.nk as u128) as i64))
            .collect();
        let zc: Vec<Complex> = (0..self.nm)
            .map(|t| zeta(self.nm, (chi_idx as u128 * t as u128 % self.nm as u128) as i64))
            .collect();
        let zp: Vec<Complex> = (0..self.p).map(|j| zeta(self.p, j as i64)).collect();
        let mut acc = Complex::new(0.0, 0.0);
        for n1 in 0..self.nk as usize {
            for n2 in 0..self.nm as usize {
                let base = (n1 * self.nm as usize + n2) * p;
                let mut cell = Complex::new(0.0, 0.0);
                let mut any = false;
                for (tr, zval) in zp.iter().enumerate() {
                    let cnt = self.counts[base + tr];
                    if cnt != 0 {
                        cell += zval * cnt as f64;
                        any = true;
                    }
                }
                if any {
                    acc += za[n1] * zc[n2] * cell;
                }
            }
        }
        acc * self.sign
    }
}

/// Durand-Kerner root finding for a monic polynomial given by coefficients
/// `c_0..c_n` (c_n = 1).
pub fn durand_kerner(coeffs: &[Complex]) -> Vec<Complex> {
    let n = coeffs.len() - 1;
    if n == 0 {
        return Vec::new();
    }
    let eval = |z: Complex| {
        let mut acc = Complex::new(0.0, 0.0);
        for &c in coeffs.iter().rev() {
            acc = acc * z + c;
        }
        acc
    };
    let seed = Complex::new(0.4, 0.9);
    let mut roots: Vec<Complex> = (0..n).map(|i| seed.powu(i as u32 + 1)).collect();
    for _ in 0..1000 {
        let mut max_step = 0.0f64;
        for i in 0..n {
            let mut denom = Complex::new(1.0, 0.0);
            for j in 0..n {
                if i != j {
                    denom *= roots[i] - roots[j];
                }
            }
            if denom.norm() < 1e-300 {
                continue;
            }
            let step = eval(roots[i]) / denom;
            roots[i] -= step;
            max_step = max_step.max(step.norm());
        }
        if max_step < 1e-13 {
            break;
        }
    }
    roots
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::FieldTower;

    fn comp(tower: &FieldTower, parts: &[usize], idx: &[u64]) -> CompositeChar {
        CompositeChar::new(
            EtaleAlgebra::new(parts.to_vec()),
            parts
                .iter()
                .zip(idx)
                .map(|(&k, &j)| MultChar::new(tower, k, j))
                .collect(),
        )
    }

    #[test]
    fn exotic_gauss_collapses_at_k_m_one() {
        let t = FieldTower::build(3, 1, 2).unwrap();
        let ctx = SumCtx::new(&t);
        for a in 0..2 {
            for c in 0..2 {
                let alpha = MultChar::new(&t, 1, a);
                let chi = MultChar::new(&t, 1, c);
                let lhs = ctx.exotic_gauss(alpha, 1, chi).unwrap();
                let rhs = alpha.mul(&chi, &t).gauss_sum(&t);
                assert!((lhs - rhs).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn exotic_gauss_twisted_case() {
        // k=2, m=1: tau_{k,1}(alpha, chi) = tau(alpha * chi∘N, psi_2)
        let t = FieldTower::build(3, 1, 2).unwrap();
        let ctx = SumCtx::new(&t);
        for a in 0..8 {
            for c in 0..2 {
                let alpha = MultChar::new(&t, 2, a);
                let chi = MultChar::new(&t, 1, c);
                let lhs = ctx.exotic_gauss(alpha, 1, chi).unwrap();
                let rhs = alpha.mul(&chi.inflate(&t, 2).unwrap(), &t).gauss_sum(&t);
                assert!((lhs - rhs).norm() < 1e-10, "a={a} c={c}");
            }
        }
    }

    #[test]
    fn defining_sum_equals_product_formula() {
        for q in [2u64, 3] {
            let t = FieldTower::build(q, 1, 6).unwrap();
            let ctx = SumCtx::new(&t);
            for (k, m) in [(1usize, 2usize), (2, 2), (2, 3), (3, 2), (2, 4)] {
                if num_integer::lcm(k, m) > 6 {
                    continue;
                }
                for a in 0..t.units(k).min(6) {
                    for c in 0..t.units(m).min(6) {
                        let alpha = MultChar::new(&t, k, a);
                        let chi = MultChar::new(&t, m, c);
                        let lhs = ctx.exotic_gauss(alpha, m, chi).unwrap();
                        let rhs = ctx.exotic_gauss_product(alpha, m, chi).unwrap();
                        assert!(
                            (lhs - rhs).norm() < 1e-6,
                            "q={q} k={k} m={m} a={a} c={c}: {lhs} vs {rhs}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn histogram_matches_direct() {
        let t = FieldTower::build(3, 1, 6).unwrap();
        let ctx = SumCtx::new(&t);
        for (k, m) in [(2usize, 2usize), (2, 3)] {
            let h = ctx.exotic_gauss_histogram(k, m).unwrap();
            for a in 0..t.units(k).min(5) {
                for c in 0..t.units(m).min(5) {
                    let lhs = h.eval(a, c);
                    let rhs = ctx
                        .exotic_gauss(MultChar::new(&t, k, a), m, MultChar::new(&t, m, c))
                        .unwrap();
                    assert!((lhs - rhs).norm() < 1e-8, "k={k} m={m} a={a} c={c}");
                }
            }
        }
    }

    #[test]
    fn composite_product_equals_direct_sum() {
        let t = FieldTower::build(2, 1, 6).unwrap();
        let ctx = SumCtx::new(&t);
        // λ=(2,1), m=1, q=2
        let alpha = comp(&t, &[2, 1], &[1, 0]);
        let chi = MultChar::trivial(1);
        let lhs = ctx.composite_exotic_gauss(&alpha, 1, chi).unwrap();
        let rhs = ctx.composite_exotic_gauss_direct(&alpha, 1, chi).unwrap();
        assert!((lhs - rhs).norm() < 1e-8);
        // λ=(2), m=2, trivial characters
        let alpha = comp(&t, &[2], &[0]);
        let chi = MultChar::trivial(2);
        let lhs = ctx.composite_exotic_gauss(&alpha, 2, chi).unwrap();
        let rhs = ctx.composite_exotic_gauss_direct(&alpha, 2, chi).unwrap();
        assert!((lhs - rhs).norm() < 1e-8);
        // λ=(1,1), m=1, q=3 with a quadratic component
        let t3 = FieldTower::build(3, 1, 3).unwrap();
        let ctx3 = SumCtx::new(&t3);
        let alpha = comp(&t3, &[1, 1], &[1, 0]);
        let chi = MultChar::trivial(1);
        let lhs = ctx3.composite_exotic_gauss(&alpha, 1, chi).unwrap();
        let quad = MultChar::new(&t3, 1, 1).gauss_sum(&t3);
        let triv = MultChar::trivial(1).gauss_sum(&t3);
        assert!((lhs - quad * triv).norm() < 1e-10);
        let rhs = ctx3.composite_exotic_gauss_direct(&alpha, 1, chi).unwrap();
        assert!((lhs - rhs).norm() < 1e-10);
    }

    #[test]
    fn hasse_davenport_exotic() {
        // tau_{k,m}^b = tau_{bk,m}(alpha∘N, chi) = tau_{k,bm}(alpha, chi∘N)
        for q in [2u64, 3] {
            let t = FieldTower::build(q, 1, 6).unwrap();
            let ctx = SumCtx::new(&t);
            for (k, m, b) in [
                (1usize, 1usize, 2usize),
                (1, 2, 2),
                (2, 1, 2),
                (2, 3, 2),
                (1, 1, 3),
            ] {
                if num_integer::lcm(b * k, m).max(num_integer::lcm(k, b * m)) > 6 {
                    continue;
                }
                for a in 0..t.units(k).min(4) {
                    for c in 0..t.units(m).min(4) {
                        let alpha = MultChar::new(&t, k, a);
                        let chi = MultChar::new(&t, m, c);
                        let base = ctx.exotic_gauss_product(alpha, m, chi).unwrap();
                        let lhs = base.powu(b as u32);
                        let rhs1 = ctx
                            .exotic_gauss_product(alpha.inflate(&t, b * k).unwrap(), m, chi)
                            .unwrap();
                        let rhs2 = ctx
                            .exotic_gauss_product(alpha, b * m, chi.inflate(&t, b * m).unwrap())
                            .unwrap();
                        assert!((lhs - rhs1).norm() < 1e-6, "q={q} k={k} m={m} b={b}");
                        assert!((lhs - rhs2).norm() < 1e-6, "q={q} k={k} m={m} b={b}");
                    }
                }
            }
        }
    }

    #[test]
    fn kloosterman_rank_one_collapse() {
        let t = FieldTower::build(3, 1, 3).unwrap();
        let ctx = SumCtx::new(&t);
        for m in 1..=3usize {
            for j in 0..2u64 {
                let alpha = comp(&t, &[1], &[j]);
                for xi in t.elements(m).skip(1) {
                    let lhs = ctx.kloosterman(&alpha, 1, m, xi).unwrap();
                    let rhs = MultChar::new(&t, 1, j)
                        .eval(&t, t.norm(xi, 1).unwrap())
                        .unwrap()
                        * t.psi(xi);
                    assert!((lhs - rhs).norm() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn kloosterman_twisted_pair() {
        // λ=(1,1): Kl_m = sum over x1 x2 = xi of psi(x1 + x2), trivial twists
        let t = FieldTower::build(2, 1, 2).unwrap();
        let ctx = SumCtx::new(&t);
        let alpha = comp(&t, &[1, 1], &[0, 0]);
        // q=2, m=1, xi=1: single term psi(1+1) = psi(0) = 1
        let v = ctx.kloosterman(&alpha, 1, 1, t.one(1)).unwrap();
        assert!((v - Complex::new(1.0, 0.0)).norm() < 1e-12);
        // explicit convolution oracle at m=2
        for xi in t.elements(2).skip(1) {
            let direct = ctx.kloosterman(&alpha, 1, 2, xi).unwrap();
            let mut oracle = Complex::new(0.0, 0.0);
            for x1 in t.elements(2).skip(1) {
                let x2 = t.div(xi, x1);
                oracle += t.psi(t.add(x1, x2));
            }
            assert!((direct - oracle).norm() < 1e-10);
        }
    }

    #[test]
    fn kloosterman_normalized_example() {
        // λ=(1,1), q=3, a=1, m=1, xi=1: Kl* = 3^{-1/2} sum_{xy=1} psi(x+y)
        let t = FieldTower::build(3, 1, 2).unwrap();
        let ctx = SumCtx::new(&t);
        let alpha = comp(&t, &[1, 1], &[0, 0]);
        let v = ctx.kloosterman_normalized(&alpha, 1, 1, t.one(1)).unwrap();
        let mut direct = Complex::new(0.0, 0.0);
        for x in t.elements(1).skip(1) {
            direct += t.psi(t.add(x, t.inv(x)));
        }
        direct /= 3f64.sqrt();
        assert!((v - direct).norm() < 1e-12);
    }

    #[test]
    fn fourier_path_matches_direct() {
        for q in [2u64, 3] {
            let t = FieldTower::build(q, 1, 6).unwrap();
            let ctx = SumCtx::new(&t);
            for (parts, idx) in [
                (vec![1usize, 1], vec![0u64, 0]),
                (vec![2], vec![1]),
                (vec![2, 1], vec![1, 0]),
                (vec![3], vec![1]),
            ] {
                let alpha = comp(&t, &parts, &idx);
                for n in 1..=2usize {
                    let all = ctx.kloosterman_all(&alpha, n).unwrap();
                    for xi in t.elements(n).skip(1) {
                        let direct = ctx.kloosterman_direct(&alpha, n, xi).unwrap();
                        let viafft = all[t.dlog(xi).unwrap() as usize];
                        assert!(
                            (direct - viafft).norm() < 1e-8,
                            "q={q} parts={parts:?} n={n}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn gauss_kloosterman_transform() {
        // tau_{λ,m}(alpha,chi) = (-1)^{k+sm+mk} sum_xi Kl_m(alpha,psi,xi) chi(xi)
        let t = FieldTower::build(3, 1, 6).unwrap();
        let ctx = SumCtx::new(&t);
        let alpha = comp(&t, &[2, 1], &[1, 0]);
        let k = 3;
        let s = 2;
        for m in 1..=2usize {
            let all = ctx.kloosterman_all(&alpha, m).unwrap();
            for c in 0..t.units(m) {
                let chi = MultChar::new(&t, m, c);
                let mut rhs = Complex::new(0.0, 0.0);
                for xi in t.elements(m).skip(1) {
                    rhs += all[t.dlog(xi).unwrap() as usize] * chi.eval(&t, xi).unwrap();
                }
                rhs *= sign(k + s * m + m * k);
                let lhs = ctx.composite_exotic_gauss(&alpha, m, chi).unwrap();
                assert!((lhs - rhs).norm() < 1e-6, "m={m} c={c}");
            }
        }
    }

    #[test]
    fn kloosterman_constant_on_frobenius_orbits() {
        let t = FieldTower::build(2, 1, 6).unwrap();
        let ctx = SumCtx::new(&t);
        let alpha = comp(&t, &[2], &[1]);
        for n in [2usize, 3] {
            for xi in t.elements(n).skip(1) {
                let v = ctx.kloosterman(&alpha, 1, n, xi).unwrap();
                let vq = ctx.kloosterman(&alpha, 1, n, t.frobenius(xi, 1)).unwrap();
                assert!((v - vq).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn base_change_matches_level_am() {
        use crate::etale::BaseChangeCtx;
        let t = FieldTower::build(2, 1, 6).unwrap();
        let ctx = SumCtx::new(&t);
        for (parts, idx, a, m) in [
            (vec![2usize], vec![1u64], 2usize, 1usize),
            (vec![2], vec![1], 2, 2),
            (vec![1, 1], vec![0, 0], 2, 2),
            (vec![3], vec![2], 2, 1),
            (vec![2], vec![1], 3, 2),
        ] {
            let alpha = comp(&t, &parts, &idx);
            let bc = BaseChangeCtx::new(&t, &alpha.lambda, a, m).unwrap();
            let am = a * m;
            let mut per_xi: std::collections::HashMap<u64, Complex> =
                std::collections::HashMap::new();
            for z in bc.units(1 << 24).unwrap() {
                let xi = bc.norm2(&z);
                let n1 = bc.norm1_composed(&z);
                let mut v = bc.psi_of(&z);
                for (aa, x) in alpha.alphas.iter().zip(&n1) {
                    v *= aa.eval(&t, *x).unwrap();
                }
                *per_xi
                    .entry(t.dlog(xi).unwrap())
                    .or_insert(Complex::new(0.0, 0.0)) += v;
            }
            for xi in t.elements(am).skip(1) {
                let lhs = per_xi
                    .get(&t.dlog(xi).unwrap())
                    .copied()
                    .unwrap_or(Complex::new(0.0, 0.0));
                let rhs = ctx.kloosterman(&alpha, a, m, xi).unwrap();
                assert!(
                    (lhs - rhs).norm() < 1e-8,
                    "parts={parts:?} a={a} m={m} xi={:?}",
                    t.dlog(xi)
                );
            }
        }
    }

    #[test]
    fn lpolynomial_rank_one() {
        let t = FieldTower::build(3, 1, 4).unwrap();
        let ctx = SumCtx::new(&t);
        for j in 0..2u64 {
            let alpha = comp(&t, &[1], &[j]);
            for xi in t.elements(1).skip(1) {
                let lp = ctx.lpolynomial(&alpha, 1, xi).unwrap();
                assert_eq!(lp.k, 1);
                let expect = MultChar::new(&t, 1, j).eval(&t, xi).unwrap() * t.psi(xi);
                assert!((lp.roots[0] - expect).norm() < 1e-9);
                assert!(((-lp.coeffs[1]) - expect).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn lpolynomial_classical_kloosterman() {
        // λ=(1,1), trivial characters, q=3, xi=1: pure weight-1 family
        let t = FieldTower::build(3, 1, 6).unwrap();
        let ctx = SumCtx::new(&t);
        let alpha = comp(&t, &[1, 1], &[0, 0]);
        let lp = ctx.lpolynomial(&alpha, 1, t.one(1)).unwrap();
        assert_eq!(lp.k, 2);
        for w in &lp.roots {
            assert!((w.norm() - 1.0).abs() < 1e-4, "purity: |w| = {}", w.norm());
        }
        // power sums reproduce normalized sums up to m = k+2
        let ps = ctx.normalized_power_sums(&alpha, 1, t.one(1), 4).unwrap();
        for (m, p) in ps.iter().enumerate() {
            let from_roots: Complex = lp.roots.iter().map(|w| w.powu(m as u32 + 1)).sum();
            assert!((from_roots - p).norm() < 1e-6, "m={}", m + 1);
        }
    }

    #[test]
    fn lpolynomial_series_truncates() {
        // λ=(2), q=2, a=1: coefficients k+1..k+3 of the series vanish
        let t = FieldTower::build(2, 1, 10).unwrap();
        let ctx = SumCtx::new(&t);
        let alpha = comp(&t, &[2], &[1]);
        let e = ctx.lpoly_series(&alpha, 1, t.one(1), 5).unwrap();
        assert!(e[3].norm() < 1e-6, "e_3 = {}", e[3]);
        assert!(e[4].norm() < 1e-6);
        assert!(e[5].norm() < 1e-6);
    }

    #[test]
    fn durand_kerner_simple() {
        // (T-1)(T-2i)(T+3) = T^3 + (2 - 2i) T^2 + (-3 - 4i) T + 6i
        let coeffs = vec![
            Complex::new(0.0, 6.0),
            Complex::new(-3.0, -4.0),
            Complex::new(2.0, -2.0),
            Complex::new(1.0, 0.0),
        ];
        let mut roots = durand_kerner(&coeffs);
        roots.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap());
        assert!((roots[0] - Complex::new(-3.0, 0.0)).norm() < 1e-9);
        assert!((roots[1] - Complex::new(0.0, 2.0)).norm() < 1e-9);
        assert!((roots[2] - Complex::new(1.0, 0.0)).norm() < 1e-9);
    }
}
