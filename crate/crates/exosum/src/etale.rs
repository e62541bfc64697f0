//! Etale algebras `F_λ = ∏ F_{k_i}` and their tensor products with `F_m`.
//!
//! `F_{k} ⊗_F F_m` is identified with `F_l^d` (`l = lcm(k,m)`,
//! `d = gcd(k,m)`); under that identification the two norm maps and the trace
//! have closed coordinate formulas, which is what all the exponential sums
//! iterate over. The [`oracle`] submodule recomputes the same maps as
//! determinants and traces of multiplication operators on the tensor algebra
//! built from structure constants; it is the slow reference path used by
//! tests.

use crate::error::{Error, Result};
use crate::fields::{Fe, FieldTower};
use crate::Complex;

/// `F_λ = ∏_i F_{k_i}` for a partition `λ = (k_1,...,k_s)` of `k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EtaleAlgebra {
    pub parts: Vec<usize>,
}

impl EtaleAlgebra {
    pub fn new(mut parts: Vec<usize>) -> EtaleAlgebra {
        assert!(!parts.is_empty() && parts.iter().all(|&k| k > 0));
        parts.sort_unstable_by(|a, b| b.cmp(a));
        EtaleAlgebra { parts }
    }

    /// Total degree `k = Σ k_i`.
    pub fn total(&self) -> usize {
        self.parts.iter().sum()
    }

    pub fn num_parts(&self) -> usize {
        self.parts.len()
    }

    /// Parse a partition spec `k1+k2+...`.
    pub fn parse(s: &str) -> Result<EtaleAlgebra> {
        let parts: Result<Vec<usize>> = s
            .split('+')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Parse(format!("bad partition spec `{s}`")))
            })
            .collect();
        let parts = parts?;
        if parts.is_empty() || parts.contains(&0) {
            return Err(Error::Parse(format!("bad partition spec `{s}`")));
        }
        Ok(EtaleAlgebra::new(parts))
    }
}

/// One tensor component `F_{k} ⊗ F_m ≅ F_l^d`.
#[derive(Debug, Clone, Copy)]
pub struct Comp {
    pub k: usize,
    pub l: usize,
    pub d: usize,
}

/// Context for `F_λ ⊗ F_m`.
pub struct TensorCtx<'a> {
    pub tower: &'a FieldTower,
    pub lambda: EtaleAlgebra,
    pub m: usize,
    pub comps: Vec<Comp>,
}

/// An element of `F_λ ⊗ F_m` in `F_l^d` coordinates, one vector per part.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorElement {
    pub comps: Vec<Vec<Fe>>,
}

impl TensorElement {
    pub fn is_unit(&self) -> bool {
        self.comps
            .iter()
            .all(|c| c.iter().all(|z| !z.is_zero()))
    }
}

impl<'a> TensorCtx<'a> {
    pub fn new(tower: &'a FieldTower, lambda: EtaleAlgebra, m: usize) -> Result<TensorCtx<'a>> {
        let comps: Vec<Comp> = lambda
            .parts
            .iter()
            .map(|&k| Comp {
                k,
                l: num_integer::lcm(k, m),
                d: num_integer::gcd(k, m),
            })
            .collect();
        for c in &comps {
            if c.l > tower.max_deg() {
                return Err(Error::Invalid(format!(
                    "component level lcm({},{}) = {} exceeds tower depth {}",
                    c.k,
                    m,
                    c.l,
                    tower.max_deg()
                )));
            }
        }
        Ok(TensorCtx {
            tower,
            lambda,
            m,
            comps,
        })
    }

    /// `N^{(1)}: F_λ ⊗ F_m -> F_λ`, one field element of level `k_i` per part.
    pub fn norm1(&self, z: &TensorElement) -> Vec<Fe> {
        let t = self.tower;
        self.comps
            .iter()
            .zip(&z.comps)
            .map(|(c, zs)| {
                let mut prod = t.one(c.l);
                for &zj in zs {
                    if zj.is_zero() {
                        return t.zero(c.k);
                    }
                    prod = t.mul(prod, zj);
                }
                t.norm(prod, c.k).unwrap()
            })
            .collect()
    }

    /// `N^{(2)}: F_λ ⊗ F_m -> F_m`.
    pub fn norm2(&self, z: &TensorElement) -> Fe {
        let t = self.tower;
        let mut out = t.one(self.m);
        for (c, zs) in self.comps.iter().zip(&z.comps) {
            let mut prod = t.one(c.l);
            for (j, &zj) in zs.iter().enumerate() {
                if zj.is_zero() {
                    return t.zero(self.m);
                }
                prod = t.mul(prod, t.frobenius(zj, j as i64));
            }
            out = t.mul(out, t.norm(prod, self.m).unwrap());
        }
        out
    }

    /// Trace to the base field `F = F_q` (level 1).
    pub fn tensor_trace(&self, z: &TensorElement) -> Fe {
        let t = self.tower;
        let mut out = t.zero(1);
        for (c, zs) in self.comps.iter().zip(&z.comps) {
            let mut sum = t.zero(c.l);
            for &zj in zs {
                sum = t.add(sum, zj);
            }
            out = t.add(out, t.trace(sum, 1).unwrap());
        }
        out
    }

    /// `psi(trace z)` evaluated without materializing the trace.
    pub fn psi_of(&self, z: &TensorElement) -> Complex {
        let t = self.tower;
        let mut out = Complex::new(1.0, 0.0);
        for (c, zs) in self.comps.iter().zip(&z.comps) {
            let mut sum = t.zero(c.l);
            for &zj in zs {
                sum = t.add(sum, zj);
            }
            out *= t.psi(sum);
        }
        out
    }

    /// Number of units `∏ (q^{l_i} - 1)^{d_i}`.
    pub fn units_count(&self) -> u128 {
        self.comps
            .iter()
            .map(|c| (self.tower.units(c.l) as u128).pow(c.d as u32))
            .product()
    }

    /// Iterate every unit exactly once, within the given budget.
    pub fn units(&self, budget: u64) -> Result<impl Iterator<Item = TensorElement> + '_> {
        let count = self.units_count();
        if count > budget as u128 {
            return Err(Error::BudgetExceeded {
                needed: count,
                budget,
            });
        }
        let shape: Vec<(usize, usize)> = self.comps.iter().map(|c| (c.l, c.d)).collect();
        Ok(UnitsIter::new(self.tower, shape).map(move |flat| self.reshape(flat)))
    }

    fn reshape(&self, flat: Vec<Fe>) -> TensorElement {
        let mut comps = Vec::with_capacity(self.comps.len());
        let mut it = flat.into_iter();
        for c in &self.comps {
            comps.push((&mut it).take(c.d).collect());
        }
        TensorElement { comps }
    }

    /// Iterate units with `norm2 = xi`, within the given budget.
    pub fn unit_fiber(
        &self,
        xi: Fe,
        budget: u64,
    ) -> Result<impl Iterator<Item = TensorElement> + '_> {
        assert_eq!(xi.level(), self.m);
        assert!(!xi.is_zero());
        let nm = self.tower.units(self.m);
        let count = self.units_count() / nm as u128;
        if count > budget as u128 {
            return Err(Error::BudgetExceeded {
                needed: count,
                budget,
            });
        }
        // free coordinates: everything except the first coordinate of the
        // first part, which is solved from the norm constraint
        let mut shape: Vec<(usize, usize)> = Vec::new();
        let c0 = self.comps[0];
        if c0.d > 1 {
            shape.push((c0.l, c0.d - 1));
        }
        for c in &self.comps[1..] {
            shape.push((c.l, c.d));
        }
        let n0 = self.tower.units(c0.l);
        let fiber_size = n0 / nm;
        let xi_dlog = self.tower.dlog(xi).unwrap();
        Ok(UnitsIter::new(self.tower, shape).flat_map(move |free| {
            let t = self.tower;
            // contribution of the free coordinates to norm2
            let mut rest = t.one(self.m);
            let mut pos = 0usize;
            let mut parts: Vec<Vec<Fe>> = Vec::with_capacity(self.comps.len());
            {
                // first part, coordinates 1..d
                let mut prod = t.one(c0.l);
                let mut part0 = vec![t.zero(c0.l)];
                for j in 1..c0.d {
                    let zj = free[pos];
                    pos += 1;
                    part0.push(zj);
                    prod = t.mul(prod, t.frobenius(zj, j as i64));
                }
                rest = t.mul(rest, t.norm(prod, self.m).unwrap());
                parts.push(part0);
            }
            for c in &self.comps[1..] {
                let mut prod = t.one(c.l);
                let mut part = Vec::with_capacity(c.d);
                for j in 0..c.d {
                    let zj = free[pos];
                    pos += 1;
                    part.push(zj);
                    prod = t.mul(prod, t.frobenius(zj, j as i64));
                }
                rest = t.mul(rest, t.norm(prod, self.m).unwrap());
                parts.push(part);
            }
            // solve: norm(z00) * rest = xi
            let target = t.div(t.from_dlog(self.m, xi_dlog), rest);
            let base = t.dlog(target).unwrap();
            (0..fiber_size).map(move |i| {
                let mut parts = parts.clone();
                parts[0][0] = t.from_dlog(c0.l, base + i * nm);
                TensorElement { comps: parts }
            })
        }))
    }
}

/// Odometer over tuples of nonzero field elements with a given shape.
struct UnitsIter<'a> {
    tower: &'a FieldTower,
    level: Vec<usize>,
    dlogs: Vec<u64>,
    done: bool,
}

impl<'a> UnitsIter<'a> {
    fn new(tower: &'a FieldTower, shape: Vec<(usize, usize)>) -> UnitsIter<'a> {
        let mut level = Vec::new();
        for (l, d) in shape {
            level.extend(std::iter::repeat(l).take(d));
        }
        let dlogs = vec![0u64; level.len()];
        UnitsIter {
            tower,
            level,
            dlogs,
            done: false,
        }
    }
}

impl<'a> Iterator for UnitsIter<'a> {
    type Item = Vec<Fe>;
    fn next(&mut self) -> Option<Vec<Fe>> {
        if self.done {
            return None;
        }
        let out: Vec<Fe> = self
            .level
            .iter()
            .zip(&self.dlogs)
            .map(|(&l, &t)| self.tower.from_dlog(l, t))
            .collect();
        // advance
        let mut i = 0;
        loop {
            if i == self.level.len() {
                self.done = true;
                break;
            }
            self.dlogs[i] += 1;
            if self.dlogs[i] < self.tower.units(self.level[i]) {
                break;
            }
            self.dlogs[i] = 0;
            i += 1;
        }
        Some(out)
    }
}

/// Base-changed tensor `(F_λ ⊗ F_a) ⊗_{F_a} F_{am}`, coordinatized relative
/// to the base field `F_{q^a}`. Used to check that the base-field variants of
/// the exponential sums agree with the level-`am` formulas.
pub struct BaseChangeCtx<'a> {
    pub tower: &'a FieldTower,
    pub a: usize,
    pub m: usize,
    /// one entry per (part, inner factor): (source level k_i, inner field
    /// level l' = lcm(k_i,a), outer field level L, outer multiplicity D)
    pub comps: Vec<(usize, usize, usize, usize)>,
    part_sizes: Vec<usize>,
}

impl<'a> BaseChangeCtx<'a> {
    pub fn new(
        tower: &'a FieldTower,
        lambda: &EtaleAlgebra,
        a: usize,
        m: usize,
    ) -> Result<BaseChangeCtx<'a>> {
        let mut comps = Vec::new();
        let mut part_sizes = Vec::new();
        for &k in &lambda.parts {
            let dp = num_integer::gcd(k, a);
            let lp = num_integer::lcm(k, a);
            part_sizes.push(dp);
            for _ in 0..dp {
                let rel = lp / a;
                let big_l = a * num_integer::lcm(rel, m);
                let big_d = num_integer::gcd(rel, m);
                if big_l > tower.max_deg() {
                    return Err(Error::Invalid(format!(
                        "base-change level {big_l} exceeds tower depth"
                    )));
                }
                comps.push((k, lp, big_l, big_d));
            }
        }
        Ok(BaseChangeCtx {
            tower,
            a,
            m,
            comps,
            part_sizes,
        })
    }

    pub fn units_count(&self) -> u128 {
        self.comps
            .iter()
            .map(|&(_, _, l, d)| (self.tower.units(l) as u128).pow(d as u32))
            .product()
    }

    /// Iterate all units; each item is one coordinate vector per `comps` row.
    pub fn units(&self, budget: u64) -> Result<impl Iterator<Item = Vec<Vec<Fe>>> + '_> {
        let count = self.units_count();
        if count > budget as u128 {
            return Err(Error::BudgetExceeded {
                needed: count,
                budget,
            });
        }
        let shape: Vec<(usize, usize)> = self.comps.iter().map(|&(_, _, l, d)| (l, d)).collect();
        Ok(UnitsIter::new(self.tower, shape).map(move |flat| {
            let mut out = Vec::with_capacity(self.comps.len());
            let mut it = flat.into_iter();
            for &(_, _, _, d) in &self.comps {
                out.push((&mut it).take(d).collect());
            }
            out
        }))
    }

    /// `N^{(2)}` relative to `F_{q^a}`: lands in `F_{q^{am}}`.
    pub fn norm2(&self, z: &[Vec<Fe>]) -> Fe {
        let t = self.tower;
        let am = self.a * self.m;
        let mut out = t.one(am);
        for (&(_, _, l, _), zs) in self.comps.iter().zip(z) {
            let mut prod = t.one(l);
            for (j, &zj) in zs.iter().enumerate() {
                // twist by powers of the q^a-Frobenius
                prod = t.mul(prod, t.frobenius(zj, (j * self.a) as i64));
            }
            out = t.mul(out, t.norm(prod, am).unwrap());
        }
        out
    }

    /// Composite first norm: outer `N^{(1)}` to `F_λ ⊗ F_a`, then the inner
    /// `N^{(1)}` down to `F_λ`. Returns one element of level `k_i` per part.
    ///
    /// The inner factor `j` of a part carries the `F_a`-structure twisted by
    /// `Frob^{-j}`, so its outer norm must be untwisted by the same power
    /// before the inner norm multiplies the factors together.
    pub fn norm1_composed(&self, z: &[Vec<Fe>]) -> Vec<Fe> {
        let t = self.tower;
        let mut out = Vec::new();
        let mut row = 0usize;
        for &dp in &self.part_sizes {
            let (k, lp, _, _) = self.comps[row];
            let mut inner_prod = t.one(lp);
            for j in 0..dp {
                let (_, _, l, _) = self.comps[row];
                let mut prod = t.one(l);
                for &zj in &z[row] {
                    prod = t.mul(prod, zj);
                }
                let factor_norm = t.norm(prod, lp).unwrap();
                inner_prod = t.mul(inner_prod, t.frobenius(factor_norm, -(j as i64)));
                row += 1;
            }
            out.push(t.norm(inner_prod, k).unwrap());
        }
        out
    }

    /// `psi_a(tr_{/F_a} z)`, which equals the absolute `psi` of the
    /// per-component sums.
    pub fn psi_of(&self, z: &[Vec<Fe>]) -> Complex {
        let t = self.tower;
        let mut out = Complex::new(1.0, 0.0);
        for (&(_, _, l, _), zs) in self.comps.iter().zip(z) {
            let mut sum = t.zero(l);
            for &zj in zs {
                sum = t.add(sum, zj);
            }
            out *= t.psi(sum);
        }
        out
    }
}

pub mod oracle {
    //! Multiplication-operator reference implementations of the tensor
    //! norms and trace, for prime `q` towers. Slow; test use only.

    use super::*;

    /// `F_{q^n} ⊗_F F_{q^m}` by structure constants in the basis
    /// `x_n^i ⊗ x_m^j` (power bases of the defining variables).
    pub struct TensorOracle<'a> {
        pub tower: &'a FieldTower,
        pub n: usize,
        pub m: usize,
        /// structure constants of F_{q^n}: x^i * x^j in digit coordinates
        sa: Vec<Vec<Vec<u64>>>,
        sb: Vec<Vec<Vec<u64>>>,
    }

    /// An element as coordinates `c[i][j]` over `e_i ⊗ f_j`, entries mod p.
    pub type TCoords = Vec<Vec<u64>>;

    fn field_struct(tower: &FieldTower, n: usize) -> Vec<Vec<Vec<u64>>> {
        assert_eq!(tower.f(), 1, "oracle requires prime q");
        let p = tower.p();
        let x = tower
            .var_class(n)
            .unwrap_or_else(|| tower.from_packed(n, 1 % tower.order(n)));
        let mut table = vec![vec![vec![0u64; n]; n]; n];
        for i in 0..n {
            for j in 0..n {
                let prod = tower.mul(tower.pow_raw(x, i as u64), tower.pow_raw(x, j as u64));
                let mut packed = tower.packed(prod);
                for t in 0..n {
                    table[i][j][t] = packed % p;
                    packed /= p;
                }
            }
        }
        table
    }

    impl<'a> TensorOracle<'a> {
        pub fn new(tower: &'a FieldTower, n: usize, m: usize) -> TensorOracle<'a> {
            TensorOracle {
                tower,
                n,
                m,
                sa: field_struct(tower, n),
                sb: field_struct(tower, m),
            }
        }

        pub fn zero(&self) -> TCoords {
            vec![vec![0u64; self.m]; self.n]
        }

        /// Determinant of multiplication by `z` as an `F_{q^n}`-linear map.
        pub fn norm_left(&self, z: &TCoords) -> Fe {
            let t = self.tower;
            let p = t.p();
            // matrix over F_{q^n} in the F_{q^n}-basis {1 ⊗ f_j}
            let mut mat = vec![vec![t.zero(self.n); self.m]; self.m];
            for (j, col) in mat.iter_mut().enumerate() {
                for tt in 0..self.m {
                    let mut coords = vec![0u64; self.n];
                    for i in 0..self.n {
                        for l in 0..self.m {
                            coords[i] =
                                (coords[i] + z[i][l] * self.sb[l][j][tt]) % p;
                        }
                    }
                    let mut packed = 0u64;
                    for i in (0..self.n).rev() {
                        packed = packed * p + coords[i];
                    }
                    col[tt] = t.from_packed(self.n, packed);
                }
            }
            det(t, mat)
        }

        /// Determinant of multiplication by `z` as an `F_{q^m}`-linear map.
        pub fn norm_right(&self, z: &TCoords) -> Fe {
            let t = self.tower;
            let p = t.p();
            let mut mat = vec![vec![t.zero(self.m); self.n]; self.n];
            for (i2, col) in mat.iter_mut().enumerate() {
                for tt in 0..self.n {
                    let mut coords = vec![0u64; self.m];
                    for l in 0..self.m {
                        for i in 0..self.n {
                            coords[l] =
                                (coords[l] + z[i][l] * self.sa[i][i2][tt]) % p;
                        }
                    }
                    let mut packed = 0u64;
                    for l in (0..self.m).rev() {
                        packed = packed * p + coords[l];
                    }
                    col[tt] = t.from_packed(self.m, packed);
                }
            }
            det(t, mat)
        }

        /// Trace of multiplication by `z` as an `F`-linear map, in `0..p`.
        pub fn trace_full(&self, z: &TCoords) -> u64 {
            let p = self.tower.p();
            let mut acc = 0u64;
            for a in 0..self.n {
                for b in 0..self.m {
                    for i in 0..self.n {
                        for l in 0..self.m {
                            acc = (acc + z[i][l] * self.sa[i][a][a] % p * self.sb[l][b][b]) % p;
                        }
                    }
                }
            }
            acc
        }

        /// The standard isomorphism onto `F_l^d` coordinates.
        pub fn to_coords(&self, z: &TCoords) -> Vec<Fe> {
            let t = self.tower;
            let l = num_integer::lcm(self.n, self.m);
            let d = num_integer::gcd(self.n, self.m);
            let xa = t
                .var_class(self.n)
                .unwrap_or_else(|| t.from_packed(self.n, 1 % t.order(self.n)));
            let xb = t
                .var_class(self.m)
                .unwrap_or_else(|| t.from_packed(self.m, 1 % t.order(self.m)));
            (0..d)
                .map(|slot| {
                    let mut acc = t.zero(l);
                    for i in 0..self.n {
                        for j in 0..self.m {
                            if z[i][j] == 0 {
                                continue;
                            }
                            // x_m^{1/q^slot}, computed inside F_{q^m}
                            let tw = t.frobenius(xb, -(slot as i64));
                            let term = t.mul(
                                t.embed(t.pow_raw(xa, i as u64), l),
                                t.embed(t.pow_raw(tw, j as u64), l),
                            );
                            let term = t.mul(term, t.embed(t.from_scalar(1, z[i][j]), l));
                            acc = t.add(acc, term);
                        }
                    }
                    acc
                })
                .collect()
        }

        /// All elements (not only units), as coordinate arrays.
        pub fn elements(&self) -> impl Iterator<Item = TCoords> + '_ {
            let p = self.tower.p();
            let total = (p as u128).pow((self.n * self.m) as u32);
            (0..total).map(move |mut v| {
                let mut z = self.zero();
                for i in 0..self.n {
                    for j in 0..self.m {
                        z[i][j] = (v % p as u128) as u64;
                        v /= p as u128;
                    }
                }
                z
            })
        }
    }

    fn det(t: &FieldTower, mut mat: Vec<Vec<Fe>>) -> Fe {
        let n = mat.len();
        let level = if n > 0 { mat[0][0].level() } else { 1 };
        let mut acc = t.one(level);
        for col in 0..n {
            let pivot = (col..n).find(|&r| !mat[r][col].is_zero());
            let Some(pr) = pivot else {
                return t.zero(level);
            };
            if pr != col {
                mat.swap(pr, col);
                acc = t.neg(acc);
            }
            let pv = mat[col][col];
            acc = t.mul(acc, pv);
            let inv = t.inv(pv);
            for r in col + 1..n {
                if mat[r][col].is_zero() {
                    continue;
                }
                let factor = t.mul(mat[r][col], inv);
                for c in col..n {
                    let sub = t.mul(factor, mat[col][c]);
                    mat[r][c] = t.sub(mat[r][c], sub);
                }
            }
        }
        acc
    }
}
