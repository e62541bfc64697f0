//! Class functions of `GL_n(F_q)` and the character theory built on
//! Macdonald's characteristic maps: Green parameters, irreducible and Speh
//! characters, parabolic induction, Bessel and Bessel-Speh values, Kondo
//! scalars, epsilon and Ginzburg-Kaplan gamma factors.
//!
//! The pipeline for an irreducible character is: expand the Schur function of
//! each parameter block in power sums, push the power-sum generators from the
//! character side to the element side of the characteristic map, multiply
//! out, convert per-orbit power sums to the `P̃` basis, and read off the
//! coefficient of each conjugacy-class indicator.

use crate::chars::MultChar;
use crate::error::{Error, Result};
use crate::expsums::{sign, CompositeChar, SumCtx};
use crate::fields::{Fe, FieldTower};
use crate::glq::{
    gl_order, group_iter, identity, mat_inverse, mat_mul, mat_trace, ClassData, ConjClassLabel,
    MatrixGL,
};
use crate::partitions::Partition;
use crate::symfunc::{self, q_to_f64, qi, Basis, Q};
use num_traits::Zero;
use crate::Complex;
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

/// A class function on `GL_n(F_q)`, stored as one value per label in
/// `ClassData::labels` order.
#[derive(Debug, Clone)]
pub struct ClassFunction {
    pub n: usize,
    pub values: Vec<Complex>,
}

impl ClassFunction {
    pub fn zero(cd: &ClassData) -> ClassFunction {
        ClassFunction {
            n: cd.n,
            values: vec![Complex::new(0.0, 0.0); cd.num_classes()],
        }
    }
}

/// An element of the degree-`n` piece of Macdonald's ring: coefficients over
/// the class-indicator images `∏ P̃_{μ_j}^{[ξ_j]}(X; q^{a_j})`.
#[derive(Debug, Clone)]
pub struct LambdaFElement {
    pub n: usize,
    pub coeffs: HashMap<ConjClassLabel, Complex>,
}

/// A Green parameter: finitely many (cuspidal) regular character orbits,
/// each with a partition. Stored as sorted `(level, orbit-min index,
/// partition)` triples.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GreenParameter(pub Vec<(usize, u64, Partition)>);

impl GreenParameter {
    pub fn new(mut blocks: Vec<(usize, u64, Partition)>) -> GreenParameter {
        blocks.retain(|(_, _, mu)| !mu.is_empty());
        blocks.sort();
        GreenParameter(blocks)
    }

    /// `‖φ‖ = Σ (deg orbit)·|partition|`.
    pub fn size(&self) -> usize {
        self.0.iter().map(|(a, _, mu)| a * mu.size()).sum()
    }

    /// Contragredient: replace each character orbit by its inverse orbit.
    pub fn dual(&self, tower: &FieldTower) -> GreenParameter {
        GreenParameter::new(
            self.0
                .iter()
                .map(|(a, u, mu)| {
                    let inv = MultChar::new(tower, *a, tower.units(*a) - u).orbit_min(tower);
                    (*a, inv, mu.clone())
                })
                .collect(),
        )
    }

    /// Cuspidal support with multiplicity: `|μ|` copies of each orbit.
    pub fn cuspidal_support(&self) -> Vec<(usize, u64)> {
        let mut out = Vec::new();
        for (a, u, mu) in &self.0 {
            for _ in 0..mu.size() {
                out.push((*a, *u));
            }
        }
        out
    }

    /// Generic iff every partition is a single row.
    pub fn is_generic(&self) -> bool {
        self.0.iter().all(|(_, _, mu)| mu.len() <= 1)
    }

    /// The unique generic parameter with the cuspidal support of `alpha`
    /// (multiplicities become single-row partitions).
    pub fn generic_from(alpha: &CompositeChar, tower: &FieldTower) -> GreenParameter {
        let mut mult: HashMap<(usize, u64), usize> = HashMap::new();
        for a in &alpha.alphas {
            *mult.entry((a.level, a.orbit_min(tower))).or_insert(0) += 1;
        }
        GreenParameter::new(
            mult.into_iter()
                .map(|((lvl, u), m)| (lvl, u, Partition::new(vec![m])))
                .collect(),
        )
    }

    /// The Speh parameter: each multiplicity-`m` orbit gets `(m^c)`.
    pub fn speh_from(alpha: &CompositeChar, c: usize, tower: &FieldTower) -> GreenParameter {
        let mut mult: HashMap<(usize, u64), usize> = HashMap::new();
        for a in &alpha.alphas {
            *mult.entry((a.level, a.orbit_min(tower))).or_insert(0) += 1;
        }
        GreenParameter::new(
            mult.into_iter()
                .map(|((lvl, u), m)| (lvl, u, Partition::new(vec![m; c])))
                .collect(),
        )
    }
}

/// Everything needed to compute with characters for one tower.
pub struct ReprCtx<'a> {
    pub tower: &'a FieldTower,
    pub sums: SumCtx<'a>,
    classes: Mutex<HashMap<usize, Arc<ClassData<'a>>>>,
    tables: Mutex<HashMap<usize, Arc<CharTable>>>,
    irr: Mutex<HashMap<GreenParameter, Arc<ClassFunction>>>,
    kondo_hist: Mutex<HashMap<(usize, usize), Arc<KondoHistogram>>>,
}

pub struct CharTable {
    pub n: usize,
    pub params: Vec<GreenParameter>,
    pub chars: Vec<Arc<ClassFunction>>,
    pub dims: Vec<u64>,
}

impl<'a> ReprCtx<'a> {
    pub fn new(tower: &'a FieldTower) -> ReprCtx<'a> {
        ReprCtx {
            tower,
            sums: SumCtx::new(tower),
            classes: Mutex::new(HashMap::new()),
            tables: Mutex::new(HashMap::new()),
            irr: Mutex::new(HashMap::new()),
            kondo_hist: Mutex::new(HashMap::new()),
        }
    }

    pub fn classes(&self, n: usize) -> Arc<ClassData<'a>> {
        let mut cache = self.classes.lock().unwrap();
        cache
            .entry(n)
            .or_insert_with(|| Arc::new(ClassData::new(self.tower, n)))
            .clone()
    }

    // ---- character orbits and parameters ----

    /// Regular character orbits at a level, as minimal indices.
    pub fn regular_char_orbits(&self, a: usize) -> Vec<u64> {
        let n = self.tower.units(a);
        let mut out = Vec::new();
        for j in 0..n {
            let chi = MultChar::new(self.tower, a, j);
            if chi.degree(self.tower) == a && chi.orbit_min(self.tower) == j {
                out.push(j);
            }
        }
        out
    }

    /// All Green parameters of size `n`.
    pub fn enumerate_parameters(&self, n: usize) -> Vec<GreenParameter> {
        let mut all_orbits: Vec<(usize, u64)> = Vec::new();
        for a in 1..=n {
            for j in self.regular_char_orbits(a) {
                all_orbits.push((a, j));
            }
        }
        fn rec(
            remaining: usize,
            pos: usize,
            all: &[(usize, u64)],
            cur: &mut Vec<(usize, u64, Partition)>,
            out: &mut Vec<GreenParameter>,
        ) {
            if remaining == 0 {
                out.push(GreenParameter::new(cur.clone()));
                return;
            }
            if pos == all.len() {
                return;
            }
            rec(remaining, pos + 1, all, cur, out);
            let (a, j) = all[pos];
            if a <= remaining {
                for b in 1..=remaining / a {
                    for mu in Partition::all(b) {
                        cur.push((a, j, mu));
                        rec(remaining - a * b, pos + 1, all, cur, out);
                        cur.pop();
                    }
                }
            }
        }
        let mut out = Vec::new();
        rec(n, 0, &all_orbits, &mut Vec::new(), &mut out);
        out.sort();
        out
    }

    // ---- characteristic-map transitions on power-sum generators ----

    /// `p_r^{[θ]} -> (-1)^{ra-1} Σ_ξ α(N(ξ)) p_{ra/deg ξ}^{[ξ]}`, grouped by
    /// element orbit; `θ` is the orbit of the level-`a` character `χ_u`.
    pub fn p_char_to_elements(
        &self,
        a: usize,
        u: u64,
        r: usize,
    ) -> Vec<((usize, u64), usize, Complex)> {
        let t = self.tower;
        let ra = r * a;
        let na = t.units(a);
        let alpha = MultChar::new(t, a, u);
        let mut buckets: HashMap<(usize, u64), Complex> = HashMap::new();
        for xi in t.elements(ra).skip(1) {
            let e = t.elt_degree(xi);
            let down = t.try_descend(xi, e).unwrap();
            let key = (e, crate::glq::orbit_min(t, e, t.dlog(down).unwrap()));
            // α(N_{ra/a}(ξ))
            let val = alpha.eval_dlog(t, t.dlog(xi).unwrap() % na);
            *buckets.entry(key).or_insert(Complex::new(0.0, 0.0)) += val;
        }
        let s = sign(ra + 1);
        buckets
            .into_iter()
            .map(|((e, umin), c)| ((e, umin), ra / e, c * s))
            .collect()
    }

    /// Inverse direction: `p_r^{[ξ]} -> (-1)^{re-1}/(q^{re}-1) Σ_β β^{-1}(ξ)
    /// p_{re/deg β}^{[β]}`, grouped by character orbit `(deg, min index)`.
    pub fn p_elem_to_chars(
        &self,
        e: usize,
        u: u64,
        r: usize,
    ) -> Vec<((usize, u64), usize, Complex)> {
        let t = self.tower;
        let re = r * e;
        let nre = t.units(re);
        let xi = t.embed(t.from_dlog(e, u), re);
        let xdl = t.dlog(xi).unwrap();
        let mut buckets: HashMap<(usize, u64), Complex> = HashMap::new();
        for j in 0..nre {
            let beta = MultChar::new(t, re, j);
            let d = beta.degree(t);
            let down = beta.try_deflate(t, d).unwrap();
            let key = (d, down.orbit_min(t));
            let val = beta.inverse(t).eval_dlog(t, xdl);
            *buckets.entry(key).or_insert(Complex::new(0.0, 0.0)) += val;
        }
        let f = sign(re + 1) / (nre as f64);
        buckets
            .into_iter()
            .map(|((d, jmin), c)| ((d, jmin), re / d, c * f))
            .collect()
    }

    // ---- irreducible characters via Green's formula ----

    /// The character of the irreducible representation with Green parameter
    /// `phi`, as a class function on `GL_n(F_q)` with `n = ‖phi‖`.
    pub fn irreducible_character(&self, phi: &GreenParameter) -> Result<Arc<ClassFunction>> {
        if let Some(hit) = self.irr.lock().unwrap().get(phi) {
            return Ok(hit.clone());
        }
        let n = phi.size();
        let cd = self.classes(n);
        for (a, u, _) in &phi.0 {
            let chi = MultChar::new(self.tower, *a, *u);
            if !chi.is_regular(self.tower) {
                return Err(Error::NotRegular {
                    level: *a,
                    index: *u,
                });
            }
        }
        // terms: per-orbit power partitions (as sorted vec) with coefficients
        type Term = Vec<((usize, u64), Vec<usize>)>;
        let mut terms: HashMap<Term, Complex> = HashMap::new();
        terms.insert(Vec::new(), Complex::new(1.0, 0.0));
        for (a, u, mu) in &phi.0 {
            let d = mu.size();
            let index = symfunc::partition_index(d, d);
            let s_in_p = symfunc::transition(d, d, &Basis::Schur, &Basis::PowerSum);
            let pos = index.iter().position(|l| l == mu).unwrap();
            // block element: Σ_ρ c_ρ ∏_i (mapped p_{ρ_i}^{[θ]})
            let mut block: HashMap<Term, Complex> = HashMap::new();
            for (row, rho) in index.iter().enumerate() {
                let c = &s_in_p[pos][row];
                if c.is_zero() {
                    continue;
                }
                let mut partial: HashMap<Term, Complex> = HashMap::new();
                partial.insert(Vec::new(), Complex::new(q_to_f64(c), 0.0));
                for &r in rho.parts() {
                    let mapped = self.p_char_to_elements(*a, *u, r);
                    let mut next: HashMap<Term, Complex> = HashMap::new();
                    for (term, coeff) in &partial {
                        for ((orb, power), pw, val) in
                            mapped.iter().map(|(o, p, v)| ((*o, *p), *p, *v))
                        {
                            let _ = power;
                            let mut t2 = term.clone();
                            if let Some(slot) = t2.iter_mut().find(|(o, _)| *o == orb) {
                                slot.1.push(pw);
                                slot.1.sort_unstable_by(|x, y| y.cmp(x));
                            } else {
                                t2.push((orb, vec![pw]));
                                t2.sort();
                            }
                            *next.entry(t2).or_insert(Complex::new(0.0, 0.0)) += coeff * val;
                        }
                    }
                    partial = next;
                }
                for (t2, v) in partial {
                    *block.entry(t2).or_insert(Complex::new(0.0, 0.0)) += v;
                }
            }
            // multiply into the accumulated terms
            let mut next: HashMap<Term, Complex> = HashMap::new();
            for (t1, c1) in &terms {
                for (t2, c2) in &block {
                    let mut merged = t1.clone();
                    for (orb, powers) in t2 {
                        if let Some(slot) = merged.iter_mut().find(|(o, _)| o == orb) {
                            slot.1.extend_from_slice(powers);
                            slot.1.sort_unstable_by(|x, y| y.cmp(x));
                        } else {
                            merged.push((*orb, powers.clone()));
                        }
                    }
                    merged.sort();
                    *next.entry(merged).or_insert(Complex::new(0.0, 0.0)) += c1 * c2;
                }
            }
            terms = next;
        }
        // per-orbit conversion p_ρ -> P̃ basis and read-off per label
        let mut values: HashMap<ConjClassLabel, Complex> = HashMap::new();
        for (term, coeff) in &terms {
            // distribute over per-orbit P̃ expansions
            let mut partial: Vec<(Vec<(usize, u64, Partition)>, Complex)> =
                vec![(Vec::new(), *coeff)];
            for ((e, umin), powers) in term {
                let rho = Partition::new(powers.clone());
                let d = rho.size();
                let index = symfunc::partition_index(d, d);
                let tq = qi(self.tower.q().pow(*e as u32) as i64);
                let p_in_pt =
                    symfunc::transition(d, d, &Basis::PowerSum, &Basis::PTilde(tq));
                let rpos = index.iter().position(|l| l == &rho).unwrap();
                let mut next = Vec::new();
                for (blocks, c) in &partial {
                    for (row, mu) in index.iter().enumerate() {
                        let cc = &p_in_pt[rpos][row];
                        if cc.is_zero() {
                            continue;
                        }
                        let mut b2 = blocks.clone();
                        b2.push((*e, *umin, mu.clone()));
                        next.push((b2, c * q_to_f64(cc)));
                    }
                }
                partial = next;
            }
            for (blocks, c) in partial {
                let label = ConjClassLabel::new(blocks);
                *values.entry(label).or_insert(Complex::new(0.0, 0.0)) += c;
            }
        }
        let mut out = ClassFunction::zero(&cd);
        for (label, v) in values {
            let idx = *cd
                .index
                .get(&label)
                .unwrap_or_else(|| panic!("label {label} outside GL_{n}"));
            out.values[idx] = v;
        }
        let out = Arc::new(out);
        self.irr.lock().unwrap().insert(phi.clone(), out.clone());
        Ok(out)
    }

    /// Identity-class index and dimension of a character.
    pub fn dim_of(&self, f: &ClassFunction) -> Complex {
        let cd = self.classes(f.n);
        let id_label = ConjClassLabel::new(vec![(1, 0, Partition::new(vec![1; f.n]))]);
        f.values[cd.index[&id_label]]
    }

    /// Dimension by the principal-specialization formula
    /// `dim = Φ_c(q) ∏_j s_{μ_j}(q^{-c_j}, q^{-2c_j}, ...)`.
    pub fn dim_formula(&self, phi: &GreenParameter) -> Q {
        let q = self.tower.q();
        let c = phi.size();
        let mut out = Q::from_integer(num_bigint::BigInt::from(1));
        for j in 1..=c {
            out *= qi(q.pow(j as u32) as i64) - qi(1);
        }
        for (a, _, mu) in &phi.0 {
            let t = qi(1) / qi(q.pow(*a as u32) as i64);
            out *= symfunc::schur_principal_specialization(mu, &t);
        }
        out
    }

    /// The full character table of `GL_n(F_q)`.
    pub fn char_table(&self, n: usize) -> Arc<CharTable> {
        if let Some(hit) = self.tables.lock().unwrap().get(&n) {
            return hit.clone();
        }
        let params = self.enumerate_parameters(n);
        let chars: Vec<Arc<ClassFunction>> = params
            .iter()
            .map(|p| self.irreducible_character(p).expect("regular parameters"))
            .collect();
        let dims: Vec<u64> = chars
            .iter()
            .map(|c| {
                let d = self.dim_of(c);
                let r = d.re.round();
                assert!(
                    (d.re - r).abs() < 1e-6 && d.im.abs() < 1e-6 && r > 0.0,
                    "dimension must be a positive integer, got {d}"
                );
                r as u64
            })
            .collect();
        let out = Arc::new(CharTable {
            n,
            params,
            chars,
            dims,
        });
        self.tables.lock().unwrap().insert(n, out.clone());
        out
    }

    // ---- inner products and the characteristic map ----

    /// `<f, g> = |G|^{-1} Σ_C |C| f(C) conj(g(C))`.
    pub fn class_inner(&self, f: &ClassFunction, g: &ClassFunction) -> Complex {
        assert_eq!(f.n, g.n);
        let cd = self.classes(f.n);
        let order = gl_order(self.tower.q(), f.n) as f64;
        let mut acc = Complex::new(0.0, 0.0);
        for i in 0..cd.num_classes() {
            acc += f.values[i] * g.values[i].conj() * (cd.sizes[i] as f64);
        }
        acc / order
    }

    /// The characteristic map: coefficients over class-indicator images.
    pub fn charmap(&self, f: &ClassFunction) -> LambdaFElement {
        let cd = self.classes(f.n);
        LambdaFElement {
            n: f.n,
            coeffs: cd
                .labels
                .iter()
                .cloned()
                .zip(f.values.iter().copied())
                .filter(|(_, v)| v.norm() > 0.0)
                .collect(),
        }
    }

    pub fn charmap_inverse(&self, el: &LambdaFElement) -> ClassFunction {
        let cd = self.classes(el.n);
        let mut out = ClassFunction::zero(&cd);
        for (label, v) in &el.coeffs {
            out.values[cd.index[label]] += v;
        }
        out
    }

    /// Inner product on the symmetric-function side, per-orbit power-sum
    /// weights `z_ρ ∏ (q^{deg·ρ_i} - 1)^{-1}`.
    pub fn lambda_inner(&self, u: &LambdaFElement, v: &LambdaFElement) -> Complex {
        if u.n != v.n {
            return Complex::new(0.0, 0.0);
        }
        let mut acc = Complex::new(0.0, 0.0);
        for (l1, c1) in &u.coeffs {
            for (l2, c2) in &v.coeffs {
                acc += c1 * c2.conj() * self.label_pair_inner(l1, l2);
            }
        }
        acc
    }

    /// `<∏ P̃_{μ}, ∏ P̃_{ν}>` with the weighted power-sum pairing per orbit.
    fn label_pair_inner(&self, l1: &ConjClassLabel, l2: &ConjClassLabel) -> f64 {
        // orbit sets must match with equal degrees
        if l1.0.len() != l2.0.len() {
            return 0.0;
        }
        let mut acc = 1.0f64;
        for ((a1, u1, mu), (a2, u2, nu)) in l1.0.iter().zip(&l2.0) {
            if a1 != a2 || u1 != u2 || mu.size() != nu.size() {
                return 0.0;
            }
            let d = mu.size();
            let index = symfunc::partition_index(d, d);
            let tq = qi(self.tower.q().pow(*a1 as u32) as i64);
            let cols = symfunc::transition(d, d, &Basis::PTilde(tq), &Basis::PowerSum);
            let p1 = index.iter().position(|l| l == mu).unwrap();
            let p2 = index.iter().position(|l| l == nu).unwrap();
            let mut val = Q::from_integer(num_bigint::BigInt::from(0));
            for (row, rho) in index.iter().enumerate() {
                if cols[p1][row].is_zero() || cols[p2][row].is_zero() {
                    continue;
                }
                let mut w = qi(rho.z() as i64);
                for &ri in rho.parts() {
                    w /= qi(self.tower.q().pow((*a1 * ri) as u32) as i64) - qi(1);
                }
                val += &cols[p1][row] * &cols[p2][row] * w;
            }
            acc *= q_to_f64(&val);
        }
        acc
    }

    // ---- parabolic induction ----

    /// `f1 ∘ f2` through the characteristic map (products of `P̃` bases).
    pub fn parabolic_induce(&self, f1: &ClassFunction, f2: &ClassFunction) -> ClassFunction {
        let n = f1.n + f2.n;
        let cd = self.classes(n);
        let e1 = self.charmap(f1);
        let e2 = self.charmap(f2);
        let mut out: HashMap<ConjClassLabel, Complex> = HashMap::new();
        for (l1, c1) in &e1.coeffs {
            for (l2, c2) in &e2.coeffs {
                // multiply per-orbit P̃ blocks
                let mut partial: Vec<(Vec<(usize, u64, Partition)>, Complex)> =
                    vec![(Vec::new(), c1 * c2)];
                let mut merged: Vec<(usize, u64, Vec<&Partition>)> = Vec::new();
                for (a, u, mu) in l1.0.iter().chain(&l2.0) {
                    if let Some(slot) = merged.iter_mut().find(|(x, y, _)| x == a && y == u) {
                        slot.2.push(mu);
                    } else {
                        merged.push((*a, *u, vec![mu]));
                    }
                }
                for (a, u, mus) in merged {
                    if mus.len() == 1 {
                        for (blocks, _) in partial.iter_mut() {
                            blocks.push((a, u, mus[0].clone()));
                        }
                        continue;
                    }
                    let tq = qi(self.tower.q().pow(a as u32) as i64);
                    let prods =
                        symfunc::product_in_basis(mus[0], mus[1], &Basis::PTilde(tq.clone()));
                    let mut next = Vec::new();
                    for (blocks, c) in &partial {
                        for (kappa, qc) in prods.iter() {
                            let mut b2 = blocks.clone();
                            b2.push((a, u, kappa.clone()));
                            next.push((b2, c * q_to_f64(qc)));
                        }
                    }
                    partial = next;
                }
                for (blocks, c) in partial {
                    let label = ConjClassLabel::new(blocks);
                    *out.entry(label).or_insert(Complex::new(0.0, 0.0)) += c;
                }
            }
        }
        let mut cf = ClassFunction::zero(&cd);
        for (label, v) in out {
            cf.values[cd.index[&label]] += v;
        }
        cf
    }

    /// Double-coset definition of `f1 ∘ f2`; reference path, budgeted.
    pub fn parabolic_induce_brute(
        &self,
        f1: &ClassFunction,
        f2: &ClassFunction,
        budget: u64,
    ) -> Result<ClassFunction> {
        let t = self.tower;
        let n1 = f1.n;
        let n2 = f2.n;
        let n = n1 + n2;
        let cd = self.classes(n);
        let cd1 = self.classes(n1);
        let cd2 = self.classes(n2);
        let p_order = gl_order(t.q(), n1)
            * gl_order(t.q(), n2)
            * (t.q() as u128).pow((n1 * n2) as u32);
        let mut out = ClassFunction::zero(&cd);
        for (idx, label) in cd.labels.iter().enumerate() {
            let g = cd.representative(label);
            let mut acc = Complex::new(0.0, 0.0);
            for x in group_iter(t, n, 1, budget)? {
                let xi = mat_inverse(t, &x).unwrap();
                let y = mat_mul(t, &mat_mul(t, &x, &g), &xi);
                // block upper-triangular?
                let mut ok = true;
                'outer: for i in n1..n {
                    for j in 0..n1 {
                        if !y.at(i, j).is_zero() {
                            ok = false;
                            break 'outer;
                        }
                    }
                }
                if !ok {
                    continue;
                }
                let h1 = MatrixGL {
                    level: 1,
                    n: n1,
                    a: (0..n1)
                        .flat_map(|i| (0..n1).map(move |j| (i, j)))
                        .map(|(i, j)| y.at(i, j))
                        .collect(),
                };
                let h2 = MatrixGL {
                    level: 1,
                    n: n2,
                    a: (0..n2)
                        .flat_map(|i| (0..n2).map(move |j| (i, j)))
                        .map(|(i, j)| y.at(n1 + i, n1 + j))
                        .collect(),
                };
                let v1 = f1.values[cd1.index[&cd1.identify(&h1)?]];
                let v2 = f2.values[cd2.index[&cd2.identify(&h2)?]];
                acc += v1 * v2;
            }
            out.values[idx] = acc / p_order as f64;
        }
        Ok(out)
    }

    // ---- Speh characters ----

    /// The Jordan-block-supported class function `χ_{(km)}` attached to a
    /// regular character orbit at level `k`.
    pub fn jordan_supported(&self, alpha: MultChar, m: usize) -> ClassFunction {
        let t = self.tower;
        let k = alpha.level;
        let km = k * m;
        let cd = self.classes(km);
        let mut out = ClassFunction::zero(&cd);
        for (idx, label) in cd.labels.iter().enumerate() {
            if label.0.len() != 1 {
                continue;
            }
            let (a, u, mu) = &label.0[0];
            debug_assert_eq!(a * mu.size(), km);
            // (-1)^{ℓ(μ)-1} ∏_{j<ℓ(μ)} (q^{aj}-1) Σ_i α(N_{km/k}(ξ^{q^i}))
            let mut factor = sign(mu.len() + 1);
            for j in 1..mu.len() {
                factor *= (t.q().pow((*a * j) as u32) - 1) as f64;
            }
            let mut csum = Complex::new(0.0, 0.0);
            let xi = t.embed(t.from_dlog(*a, *u), km);
            for i in 0..*a {
                let conj = t.frobenius(xi, i as i64);
                let nk = t.norm(conj, k).unwrap();
                csum += alpha.eval(t, nk).unwrap();
            }
            out.values[idx] = csum * factor;
        }
        out
    }

    /// `trace Speh(τ,c)` for cuspidal `τ` (regular character orbit at level
    /// k), via the Jordan-supported expansion
    /// `(-1)^{(k-1)c} Σ_{λ⊢c} χ_{kλ}/z_λ`.
    pub fn speh_character_cuspidal(&self, alpha: MultChar, c: usize) -> Result<ClassFunction> {
        if !alpha.is_regular(self.tower) {
            return Err(Error::NotRegular {
                level: alpha.level,
                index: alpha.index,
            });
        }
        let k = alpha.level;
        let cd = self.classes(k * c);
        let mut total = ClassFunction::zero(&cd);
        for lam in Partition::all(c) {
            let mut cur: Option<ClassFunction> = None;
            for &part in lam.parts() {
                let piece = self.jordan_supported(alpha, part);
                cur = Some(match cur {
                    None => piece,
                    Some(prev) => self.parabolic_induce(&prev, &piece),
                });
            }
            let cur = cur.unwrap();
            let w = 1.0 / lam.z() as f64;
            for (o, v) in total.values.iter_mut().zip(&cur.values) {
                *o += v * w;
            }
        }
        let s = sign((k + 1) * c);
        for v in total.values.iter_mut() {
            *v *= s;
        }
        Ok(total)
    }

    /// `trace Speh(τ,c)` for any generic `τ` given by its cuspidal support,
    /// through the Green-parameter pipeline.
    pub fn speh_character(&self, alpha: &CompositeChar, c: usize) -> Result<Arc<ClassFunction>> {
        let phi = GreenParameter::speh_from(alpha, c, self.tower);
        self.irreducible_character(&phi)
    }

    // ---- Bessel and Bessel-Speh values ----

    /// `ψ_{k,c}` evaluated on an element of `U_{(c^k)}`.
    pub fn psi_kc(&self, u: &MatrixGL, k: usize, c: usize) -> Complex {
        let t = self.tower;
        let mut tr = t.zero(1);
        for b in 0..k - 1 {
            for r in 0..c {
                tr = t.add(tr, u.at(b * c + r, (b + 1) * c + r));
            }
        }
        t.psi(tr)
    }

    /// Enumerate `U_{(c^k)}(F_q)` (all strictly-upper block entries free).
    fn block_unipotent_iter(&self, k: usize, c: usize) -> impl Iterator<Item = MatrixGL> + '_ {
        let t = self.tower;
        let n = k * c;
        let free: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|&(i, j)| j / c > i / c)
            .collect();
        let per = t.order(1) as u128;
        let total = per.pow(free.len() as u32);
        (0..total).map(move |code| {
            let mut m = identity(t, 1, n);
            let mut cc = code;
            for &(i, j) in &free {
                let v = (cc % per) as u64;
                cc /= per;
                let fe = if v == 0 {
                    t.zero(1)
                } else {
                    t.from_dlog(1, v - 1)
                };
                m.set(i, j, fe);
            }
            m
        })
    }

    /// Bessel function of a generic irreducible `π` of `GL_n(F_q)` at `g`:
    /// the `ψ^{-1}`-average of `trace π(ug)` over the full unipotent group.
    pub fn bessel(&self, phi: &GreenParameter, g: &MatrixGL) -> Result<Complex> {
        if !phi.is_generic() {
            return Err(Error::NotGeneric);
        }
        let n = phi.size();
        assert_eq!(g.n, n);
        let chi = self.irreducible_character(phi)?;
        let cd = self.classes(n);
        let t = self.tower;
        let mut acc = Complex::new(0.0, 0.0);
        let mut count = 0u64;
        for u in self.block_unipotent_iter(n, 1) {
            let ug = mat_mul(t, &u, g);
            let v = chi.values[cd.index[&cd.identify(&ug)?]];
            acc += self.psi_kc(&u, n, 1).conj() * v;
            count += 1;
        }
        Ok(acc / count as f64)
    }

    /// Special Bessel-Speh values `B_τ(h)` on every class of `GL_c(F_q)`,
    /// for generic `τ` with cuspidal support `alpha` (all components
    /// regular). Uses the `ψ_{k,c}`-average of the Speh character at the
    /// antidiagonal block matrix; `k = 1` is the closed form
    /// `τ(det h) ψ(tr h^{-1})`.
    pub fn bessel_speh_values(&self, alpha: &CompositeChar, c: usize) -> Result<ClassFunction> {
        let t = self.tower;
        let k = alpha.total();
        let cd = self.classes(c);
        if k == 1 {
            let tau = alpha.alphas[0];
            let mut out = ClassFunction::zero(&cd);
            for (idx, label) in cd.labels.iter().enumerate() {
                let h = cd.representative(label);
                let hinv = mat_inverse(t, &h)?;
                let det = crate::glq::mat_det(t, &h);
                out.values[idx] = tau.eval(t, det)? * t.psi(mat_trace(t, &hinv));
            }
            return Ok(out);
        }
        let speh = self.speh_character(alpha, c)?;
        let cdk = self.classes(k * c);
        let n = k * c;
        let mut out = ClassFunction::zero(&cd);
        for (idx, label) in cd.labels.iter().enumerate() {
            let h = cd.representative(label);
            // g0 = antidiagonal block matrix: I_{(k-1)c} upper-right, h lower-left
            let mut g0 = MatrixGL {
                level: 1,
                n,
                a: vec![t.zero(1); n * n],
            };
            for i in 0..(k - 1) * c {
                g0.set(i, c + i, t.one(1));
            }
            for i in 0..c {
                for j in 0..c {
                    g0.set((k - 1) * c + i, j, h.at(i, j));
                }
            }
            let mut acc = Complex::new(0.0, 0.0);
            let mut count = 0u64;
            for u in self.block_unipotent_iter(k, c) {
                let ug = mat_mul(t, &u, &g0);
                let v = speh.values[cdk.index[&cdk.identify(&ug)?]];
                acc += self.psi_kc(&u, k, c).conj() * v;
                count += 1;
            }
            out.values[idx] = acc / count as f64;
        }
        Ok(out)
    }

    /// Normalized values `B*_τ = q^{(k-1)c^2/2} B_τ`.
    pub fn bessel_speh_values_normalized(
        &self,
        alpha: &CompositeChar,
        c: usize,
    ) -> Result<ClassFunction> {
        let mut out = self.bessel_speh_values(alpha, c)?;
        let k = alpha.total();
        let scale = (self.tower.q() as f64).powf((k as f64 - 1.0) * (c * c) as f64 / 2.0);
        for v in out.values.iter_mut() {
            *v *= scale;
        }
        Ok(out)
    }

    // ---- Kondo scalars ----

    /// Histogram of `(Shintani class, dlog det, abs trace)` over
    /// `GL_c(F_{q^k})`; one pass serves every `(π, χ)` pair.
    pub fn kondo_histogram(&self, c: usize, k: usize, budget: u64) -> Result<Arc<KondoHistogram>> {
        if let Some(hit) = self.kondo_hist.lock().unwrap().get(&(c, k)) {
            return Ok(hit.clone());
        }
        let t = self.tower;
        let cd = self.classes(c);
        let nk = t.units(k);
        let p = t.p() as usize;
        let mut counts = vec![0u64; cd.num_classes() * nk as usize * p];
        for x in group_iter(t, c, k, budget)? {
            let label = cd.shintani_norm_class(&x)?;
            let li = cd.index[&label];
            let det = crate::glq::mat_det(t, &x);
            let dd = t.dlog(det).unwrap() as usize;
            let tr = t.abs_trace(mat_trace(t, &x)) as usize;
            counts[(li * nk as usize + dd) * p + tr] += 1;
        }
        let out = Arc::new(KondoHistogram {
            c,
            k,
            nk,
            p: p as u64,
            counts,
        });
        self.kondo_hist
            .lock()
            .unwrap()
            .insert((c, k), out.clone());
        Ok(out)
    }

    /// Brute-force Kondo scalar: `G(π, χ, ψ) = (dim π)^{-1} q^{-kc²/2}
    /// Σ_{x ∈ GL_c(F_{q^k})} trace π([N(x)]) χ(det x) ψ_k(tr x)`.
    pub fn kondo_scalar_brute(
        &self,
        phi: &GreenParameter,
        chi: MultChar,
        budget: u64,
    ) -> Result<Complex> {
        let c = phi.size();
        let k = chi.level;
        let hist = self.kondo_histogram(c, k, budget)?;
        let pi = self.irreducible_character(phi)?;
        let dim = self.dim_of(&pi);
        let t = self.tower;
        let p = hist.p as usize;
        let nk = hist.nk;
        let zp: Vec<Complex> = (0..p as u64)
            .map(|j| crate::chars::zeta(t.p(), j as i64))
            .collect();
        let mut acc = Complex::new(0.0, 0.0);
        for (li, tv) in pi.values.iter().enumerate() {
            if tv.norm() == 0.0 {
                continue;
            }
            for dd in 0..nk {
                let cv = chi.eval_dlog(t, dd);
                for tr in 0..p {
                    let cnt = hist.counts[(li * nk as usize + dd as usize) * p + tr];
                    if cnt != 0 {
                        acc += tv * cv * zp[tr] * cnt as f64;
                    }
                }
            }
        }
        let scale = (t.q() as f64).powf(-((k * c * c) as f64) / 2.0);
        Ok(acc * scale / dim)
    }

    /// Closed form for one twist level (`G = (-1)^c q^{-kc/2}
    /// ∏_j tau_{c_j,k}(β_j, χ, ψ)` over the cuspidal support of `π`).
    pub fn kondo_scalar_closed(&self, phi: &GreenParameter, chi: MultChar) -> Result<Complex> {
        let c = phi.size();
        let k = chi.level;
        let mut out = Complex::new(sign(c), 0.0)
            * (self.tower.q() as f64).powf(-((k * c) as f64) / 2.0);
        for (a, u, _) in phi
            .cuspidal_support()
            .iter()
            .map(|(a, u)| (*a, *u, ()))
        {
            let beta = MultChar::new(self.tower, a, u);
            out *= self.sums.exotic_gauss_product(beta, k, chi)?;
        }
        Ok(out)
    }

    /// The composite scalar `G(π, α, ψ) = ∏_i G(π, α_i, ψ)`; closed form of
    /// every factor.
    pub fn kondo_scalar_composite(
        &self,
        phi: &GreenParameter,
        alpha: &CompositeChar,
    ) -> Result<Complex> {
        let mut out = Complex::new(1.0, 0.0);
        for a in &alpha.alphas {
            out *= self.kondo_scalar_closed(phi, *a)?;
        }
        Ok(out)
    }

    // ---- epsilon and gamma factors ----

    /// Tensor `ε_0(π × τ, ψ)`: product over the cuspidal supports; the
    /// cuspidal pair factor is `(-1)^{kc} q^{-kc/2} tau_{c,k}(β^{-1}, α^{-1})`.
    pub fn epsilon0(&self, phi_pi: &GreenParameter, alpha_tau: &CompositeChar) -> Result<Complex> {
        let t = self.tower;
        let mut out = Complex::new(1.0, 0.0);
        for (ci, ui) in phi_pi.cuspidal_support() {
            let beta_inv = MultChar::new(t, ci, ui).inverse(t);
            for aj in &alpha_tau.alphas {
                let kj = aj.level;
                out *= Complex::new(sign(kj * ci), 0.0)
                    * (t.q() as f64).powf(-((kj * ci) as f64) / 2.0)
                    * self
                        .sums
                        .exotic_gauss_product(beta_inv, kj, aj.inverse(t))?;
            }
        }
        Ok(out)
    }

    /// Central character value `ω_π(x)` for `x ∈ F_q^x`.
    pub fn central_char(&self, phi: &GreenParameter, x: Fe) -> Result<Complex> {
        let c = phi.size();
        let cd = self.classes(c);
        let pi = self.irreducible_character(phi)?;
        let label = ConjClassLabel::new(vec![(
            1,
            self.tower.dlog(x).unwrap(),
            Partition::new(vec![1; c]),
        )]);
        Ok(pi.values[cd.index[&label]] / self.dim_of(&pi))
    }

    /// Ginzburg-Kaplan gamma factor `Γ(π × τ, ψ) = ω_π(-1)^{k-1} Γ̃` with
    /// `Γ̃ dim π = q^{(k-2)c²/2} Σ_h B_τ(h) trace π(h)`.
    pub fn gamma_gk(&self, phi_pi: &GreenParameter, alpha_tau: &CompositeChar) -> Result<Complex> {
        let t = self.tower;
        let c = phi_pi.size();
        let k = alpha_tau.total();
        let b = self.bessel_speh_values(alpha_tau, c)?;
        let pi = self.irreducible_character(phi_pi)?;
        let cd = self.classes(c);
        let mut acc = Complex::new(0.0, 0.0);
        for i in 0..cd.num_classes() {
            acc += b.values[i] * pi.values[i] * (cd.sizes[i] as f64);
        }
        let scale = (t.q() as f64).powf((k as f64 - 2.0) * (c * c) as f64 / 2.0);
        let gamma_tilde = acc * scale / self.dim_of(&pi);
        let omega = self.central_char(phi_pi, t.minus_one(1))?;
        Ok(omega.powu(((k - 1) % 2) as u32) * gamma_tilde)
    }

    /// Cuspidal support of the Shintani lift of the cuspidal representation
    /// attached to a regular level-`c` character orbit, lifted to
    /// `GL_c(F_{q^k})`: `gcd(c,k)` Frobenius^k-orbits at level `lcm(c,k)`.
    pub fn shintani_lift_cuspidal_support(
        &self,
        beta: MultChar,
        k: usize,
    ) -> Result<Vec<(usize, u64)>> {
        let t = self.tower;
        if !beta.is_regular(t) {
            return Err(Error::NotRegular {
                level: beta.level,
                index: beta.index,
            });
        }
        let c = beta.level;
        let l = num_integer::lcm(c, k);
        if l > t.max_deg() {
            return Err(Error::Invalid(format!("lcm({c},{k}) exceeds tower depth")));
        }
        let d = num_integer::gcd(c, k);
        let nl = t.units(l);
        let qk = {
            // q^k mod (q^l - 1)
            let mut v = 1u128;
            for _ in 0..k {
                v = v * t.q() as u128 % nl as u128;
            }
            v as u64
        };
        let mut out = Vec::new();
        for i in 0..d {
            let lifted = MultChar::new(t, c, beta.index)
                .inflate(t, l)?
                .index;
            // β^{q^i} ∘ N: index scales by q^i
            let mut idx = lifted as u128;
            for _ in 0..i {
                idx = idx * t.q() as u128 % nl as u128;
            }
            // canonical representative of the Frob^k orbit
            let mut best = idx as u64;
            let mut cur = idx as u64;
            let mut size = 1usize;
            loop {
                cur = (cur as u128 * qk as u128 % nl as u128) as u64;
                if cur == idx as u64 {
                    break;
                }
                best = best.min(cur);
                size += 1;
            }
            debug_assert_eq!(size, l / k, "Frob^k orbit size");
            out.push((l, best));
        }
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    /// The generic-sum transform `F_{τ,c,ψ}(h)`: a weighted sum of Bessel
    /// values over all generic irreducibles of `GL_c(F_q)`.
    pub fn f_transform(
        &self,
        alpha_tau: &CompositeChar,
        c: usize,
        h: &MatrixGL,
    ) -> Result<Complex> {
        let t = self.tower;
        let k = alpha_tau.total();
        let table = self.char_table(c);
        let u_order = (t.q() as u128).pow((c * (c - 1) / 2) as u32);
        let index = gl_order(t.q(), c) / u_order;
        let mut acc = Complex::new(0.0, 0.0);
        for (i, phi) in table.params.iter().enumerate() {
            if !phi.is_generic() {
                continue;
            }
            let eps = self.epsilon0(&phi.dual(t), alpha_tau)?;
            let omega = self.central_char(phi, t.minus_one(1))?;
            let j = self.bessel(phi, h)?;
            acc += (table.dims[i] as f64) * omega.powu(((k - 1) % 2) as u32) * eps * j;
        }
        let scale = (t.q() as f64).powf(-(c as f64) * (k as f64 - c as f64 - 1.0) / 2.0);
        Ok(acc * scale / index as f64)
    }
}

pub struct KondoHistogram {
    pub c: usize,
    pub k: usize,
    nk: u64,
    p: u64,
    counts: Vec<u64>,
}
