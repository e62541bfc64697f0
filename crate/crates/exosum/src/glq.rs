//! `GL_n(F_{q^m})`: dense matrices over the field tower, conjugacy-class
//! labels, class identification via nullity sequences, class sizes, and the
//! Shintani norm map.

use crate::error::{Error, Result};
use crate::fields::{Fe, FieldTower};
use crate::partitions::Partition;
use std::collections::HashMap;

/// Dense row-major `n x n` matrix with entries at one tower level.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MatrixGL {
    pub level: usize,
    pub n: usize,
    pub a: Vec<Fe>,
}

impl MatrixGL {
    pub fn at(&self, i: usize, j: usize) -> Fe {
        self.a[i * self.n + j]
    }
    pub fn set(&mut self, i: usize, j: usize, v: Fe) {
        self.a[i * self.n + j] = v;
    }
}

pub fn identity(tower: &FieldTower, level: usize, n: usize) -> MatrixGL {
    let mut a = vec![tower.zero(level); n * n];
    for i in 0..n {
        a[i * n + i] = tower.one(level);
    }
    MatrixGL { level, n, a }
}

pub fn mat_mul(tower: &FieldTower, x: &MatrixGL, y: &MatrixGL) -> MatrixGL {
    assert_eq!(x.level, y.level);
    assert_eq!(x.n, y.n);
    let n = x.n;
    let mut a = vec![tower.zero(x.level); n * n];
    for i in 0..n {
        for k in 0..n {
            let xik = x.a[i * n + k];
            if xik.is_zero() {
                continue;
            }
            for j in 0..n {
                let y_kj = y.a[k * n + j];
                if !y_kj.is_zero() {
                    a[i * n + j] = tower.add(a[i * n + j], tower.mul(xik, y_kj));
                }
            }
        }
    }
    MatrixGL {
        level: x.level,
        n,
        a,
    }
}

/// Entrywise `x -> x^{q^j}`.
pub fn mat_frobenius(tower: &FieldTower, x: &MatrixGL, j: i64) -> MatrixGL {
    MatrixGL {
        level: x.level,
        n: x.n,
        a: x.a.iter().map(|&v| tower.frobenius(v, j)).collect(),
    }
}

pub fn mat_det(tower: &FieldTower, x: &MatrixGL) -> Fe {
    let n = x.n;
    let mut m = x.a.clone();
    let mut acc = tower.one(x.level);
    for col in 0..n {
        let pivot = (col..n).find(|&r| !m[r * n + col].is_zero());
        let Some(pr) = pivot else {
            return tower.zero(x.level);
        };
        if pr != col {
            for j in 0..n {
                m.swap(pr * n + j, col * n + j);
            }
            acc = tower.neg(acc);
        }
        let pv = m[col * n + col];
        acc = tower.mul(acc, pv);
        let inv = tower.inv(pv);
        for r in col + 1..n {
            let f = m[r * n + col];
            if f.is_zero() {
                continue;
            }
            let f = tower.mul(f, inv);
            for j in col..n {
                let sub = tower.mul(f, m[col * n + j]);
                m[r * n + j] = tower.sub(m[r * n + j], sub);
            }
        }
    }
    acc
}

pub fn mat_inverse(tower: &FieldTower, x: &MatrixGL) -> Result<MatrixGL> {
    let n = x.n;
    let lvl = x.level;
    let mut m = x.a.clone();
    let mut inv = identity(tower, lvl, n).a;
    for col in 0..n {
        let pivot = (col..n).find(|&r| !m[r * n + col].is_zero());
        let Some(pr) = pivot else {
            return Err(Error::Singular);
        };
        if pr != col {
            for j in 0..n {
                m.swap(pr * n + j, col * n + j);
                inv.swap(pr * n + j, col * n + j);
            }
        }
        let pv_inv = tower.inv(m[col * n + col]);
        for j in 0..n {
            m[col * n + j] = tower.mul(m[col * n + j], pv_inv);
            inv[col * n + j] = tower.mul(inv[col * n + j], pv_inv);
        }
        for r in 0..n {
            if r != col && !m[r * n + col].is_zero() {
                let f = m[r * n + col];
                for j in 0..n {
                    let s1 = tower.mul(f, m[col * n + j]);
                    m[r * n + j] = tower.sub(m[r * n + j], s1);
                    let s2 = tower.mul(f, inv[col * n + j]);
                    inv[r * n + j] = tower.sub(inv[r * n + j], s2);
                }
            }
        }
    }
    Ok(MatrixGL { level: lvl, n, a: inv })
}

pub fn mat_rank(tower: &FieldTower, x: &MatrixGL) -> usize {
    let n = x.n;
    let mut m = x.a.clone();
    let mut rank = 0;
    let mut row = 0;
    for col in 0..n {
        let pivot = (row..n).find(|&r| !m[r * n + col].is_zero());
        let Some(pr) = pivot else { continue };
        if pr != row {
            for j in 0..n {
                m.swap(pr * n + j, row * n + j);
            }
        }
        let inv = tower.inv(m[row * n + col]);
        for r in row + 1..n {
            let f = m[r * n + col];
            if f.is_zero() {
                continue;
            }
            let f = tower.mul(f, inv);
            for j in col..n {
                let sub = tower.mul(f, m[row * n + j]);
                m[r * n + j] = tower.sub(m[r * n + j], sub);
            }
        }
        rank += 1;
        row += 1;
        if row == n {
            break;
        }
    }
    rank
}

pub fn mat_trace(tower: &FieldTower, x: &MatrixGL) -> Fe {
    let mut acc = tower.zero(x.level);
    for i in 0..x.n {
        acc = tower.add(acc, x.at(i, i));
    }
    acc
}

/// Characteristic polynomial coefficients `c_0..c_n` (monic, `c_n = 1`),
/// via sums of principal minors.
pub fn charpoly(tower: &FieldTower, x: &MatrixGL) -> Vec<Fe> {
    let n = x.n;
    let lvl = x.level;
    let mut coeffs = vec![tower.zero(lvl); n + 1];
    coeffs[n] = tower.one(lvl);
    // e_j = sum of principal j x j minors; c_{n-j} = (-1)^j e_j
    for j in 1..=n {
        let mut e = tower.zero(lvl);
        let mut subset: Vec<usize> = (0..j).collect();
        loop {
            let sub = MatrixGL {
                level: lvl,
                n: j,
                a: subset
                    .iter()
                    .flat_map(|&r| subset.iter().map(move |&c| x.at(r, c)))
                    .collect(),
            };
            e = tower.add(e, mat_det(tower, &sub));
            // next combination
            let mut i = j;
            loop {
                if i == 0 {
                    subset.clear();
                    break;
                }
                i -= 1;
                if subset[i] < n - (j - i) {
                    subset[i] += 1;
                    for k in i + 1..j {
                        subset[k] = subset[k - 1] + 1;
                    }
                    break;
                }
                if i == 0 {
                    subset.clear();
                    break;
                }
            }
            if subset.is_empty() {
                break;
            }
        }
        coeffs[n - j] = if j % 2 == 0 { e } else { tower.neg(e) };
    }
    coeffs
}

/// A conjugacy-class label: sorted `(degree, orbit-min dlog, partition)`
/// triples with distinct orbits and `Σ deg·|μ| = n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConjClassLabel(pub Vec<(usize, u64, Partition)>);

impl std::fmt::Display for ConjClassLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (i, (a, j, mu)) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ";")?;
            }
            let parts: Vec<String> = mu.parts().iter().map(|p| p.to_string()).collect();
            write!(f, "{a}:{j}:[{}]", parts.join(","))?;
        }
        Ok(())
    }
}

impl ConjClassLabel {
    pub fn new(mut blocks: Vec<(usize, u64, Partition)>) -> ConjClassLabel {
        blocks.sort();
        ConjClassLabel(blocks)
    }

    pub fn total(&self) -> usize {
        self.0.iter().map(|(a, _, mu)| a * mu.size()).sum()
    }

    /// Parse `a:j:[m1,m2];a:j:[...]`.
    pub fn parse(tower: &FieldTower, s: &str) -> Result<ConjClassLabel> {
        let mut blocks = Vec::new();
        for part in s.split(';') {
            let bits: Vec<&str> = part.splitn(3, ':').collect();
            if bits.len() != 3 {
                return Err(Error::Parse(format!("bad class spec `{s}`")));
            }
            let a: usize = bits[0]
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad degree in `{s}`")))?;
            let j: u64 = bits[1]
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad orbit index in `{s}`")))?;
            let mu = Partition::parse(bits[2])?;
            if a == 0 || a > tower.max_deg() || mu.is_empty() {
                return Err(Error::Parse(format!("bad class spec `{s}`")));
            }
            // canonicalize and validate the orbit label
            let xi = tower.from_dlog(a, j);
            if tower.elt_degree(xi) != a {
                return Err(Error::Invalid(format!(
                    "element {j} at level {a} has degree {} != {a}",
                    tower.elt_degree(xi)
                )));
            }
            let jmin = orbit_min(tower, a, j);
            blocks.push((a, jmin, mu));
        }
        let label = ConjClassLabel::new(blocks);
        let orbits: std::collections::HashSet<_> =
            label.0.iter().map(|(a, j, _)| (*a, *j)).collect();
        if orbits.len() != label.0.len() {
            return Err(Error::Invalid("repeated orbit in class spec".into()));
        }
        Ok(label)
    }
}

/// Canonical (minimal) dlog in the Frobenius orbit of `g_a^t`.
pub fn orbit_min(tower: &FieldTower, a: usize, t: u64) -> u64 {
    let n = tower.units(a);
    let q = tower.q() % n.max(1);
    let mut best = t % n.max(1);
    let mut cur = best;
    loop {
        cur = ((cur as u128 * q as u128) % n.max(1) as u128) as u64;
        if cur == t % n.max(1) {
            break;
        }
        best = best.min(cur);
    }
    best
}

/// Orbit representatives (min dlogs) of elements of degree exactly `a`.
pub fn orbits_of_degree(tower: &FieldTower, a: usize) -> Vec<u64> {
    let n = tower.units(a);
    let mut out = Vec::new();
    for t in 0..n {
        let xi = tower.from_dlog(a, t);
        if tower.elt_degree(xi) == a && orbit_min(tower, a, t) == t {
            out.push(t);
        }
    }
    out
}

/// `|GL_n(F_Q)| = ∏_{j<n} (Q^n - Q^j)`.
pub fn gl_order(big_q: u64, n: usize) -> u128 {
    let qn = (big_q as u128).pow(n as u32);
    (0..n).map(|j| qn - (big_q as u128).pow(j as u32)).product()
}

/// Centralizer order of the class in `GL_n(F_q)`.
pub fn centralizer_order(q: u64, label: &ConjClassLabel) -> u128 {
    let mut out = 1u128;
    for (a, _, mu) in &label.0 {
        let big_q = (q as u128).pow(*a as u32);
        let tr = mu.transpose();
        let sum_sq: usize = tr.parts().iter().map(|&p| p * p).sum();
        let mut val = big_q.pow(sum_sq as u32);
        let mut denom_exp = 0usize;
        let max = mu.parts().first().copied().unwrap_or(0);
        for i in 1..=max {
            let m = mu.multiplicity(i);
            for j in 1..=m {
                val *= big_q.pow(j as u32) - 1;
                denom_exp += j;
            }
        }
        out *= val / big_q.pow(denom_exp as u32);
    }
    out
}

/// Conjugacy-class bookkeeping for one `GL_n(F_q)`.
pub struct ClassData<'a> {
    pub tower: &'a FieldTower,
    pub n: usize,
    pub labels: Vec<ConjClassLabel>,
    pub sizes: Vec<u128>,
    pub index: HashMap<ConjClassLabel, usize>,
    /// factorization of every monic degree-n polynomial over F_q with
    /// nonzero constant term, keyed by coefficient codes `c_0..c_{n-1}`
    factor_table: HashMap<Vec<u32>, Vec<(usize, u64, usize)>>,
    /// orbit reps per degree
    pub orbits: Vec<Vec<u64>>,
}

impl<'a> ClassData<'a> {
    pub fn new(tower: &'a FieldTower, n: usize) -> ClassData<'a> {
        assert!(n >= 1 && n <= 6, "class machinery is sized for n <= 6");
        assert!(tower.max_deg() >= n);
        let orbits: Vec<Vec<u64>> = (0..=n)
            .map(|a| if a == 0 { Vec::new() } else { orbits_of_degree(tower, a) })
            .collect();
        // labels
        let mut labels = Vec::new();
        let mut all_orbits: Vec<(usize, u64)> = Vec::new();
        for a in 1..=n {
            for &j in &orbits[a] {
                all_orbits.push((a, j));
            }
        }
        fn rec(
            remaining: usize,
            pos: usize,
            all: &[(usize, u64)],
            cur: &mut Vec<(usize, u64, Partition)>,
            out: &mut Vec<ConjClassLabel>,
        ) {
            if remaining == 0 {
                out.push(ConjClassLabel::new(cur.clone()));
                return;
            }
            if pos == all.len() {
                return;
            }
            // skip this orbit
            rec(remaining, pos + 1, all, cur, out);
            // use it with some partition
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
        rec(n, 0, &all_orbits, &mut Vec::new(), &mut labels);
        labels.sort();
        let sizes: Vec<u128> = labels
            .iter()
            .map(|l| gl_order(tower.q(), n) / centralizer_order(tower.q(), l))
            .collect();
        let index = labels
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, l)| (l, i))
            .collect();
        // factor table for monic degree-n polynomials with c_0 != 0
        let mut factor_table = HashMap::new();
        let q = tower.q();
        let total = (q as u128).pow(n as u32);
        for code in 0..total {
            let mut c = code;
            let coeffs: Vec<Fe> = (0..n)
                .map(|_| {
                    let v = (c % q as u128) as u64;
                    c /= q as u128;
                    // value v indexes the elements iterator: 0 -> zero, else g^{v-1}
                    if v == 0 {
                        tower.zero(1)
                    } else {
                        tower.from_dlog(1, v - 1)
                    }
                })
                .collect();
            if coeffs[0].is_zero() {
                continue;
            }
            let key: Vec<u32> = coeffs.iter().map(|x| x.code()).collect();
            let factors = factor_monic(tower, &coeffs, &orbits);
            factor_table.insert(key, factors);
        }
        ClassData {
            tower,
            n,
            labels,
            sizes,
            index,
            factor_table,
            orbits,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn class_size(&self, label: &ConjClassLabel) -> u128 {
        self.sizes[self.index[label]]
    }

    /// The generalized Jordan representative of a label.
    pub fn representative(&self, label: &ConjClassLabel) -> MatrixGL {
        let t = self.tower;
        let n = self.n;
        let mut m = vec![vec![t.zero(1); n]; n];
        let mut off = 0usize;
        for (a, j, mu) in &label.0 {
            let xi = t.from_dlog(*a, *j);
            let mp = t.minpoly_over_base(xi);
            // companion matrix of the minimal polynomial
            let mut comp = vec![vec![t.zero(1); *a]; *a];
            for r in 1..*a {
                comp[r][r - 1] = t.one(1);
            }
            for r in 0..*a {
                comp[r][*a - 1] = t.neg(mp[r]);
            }
            for &part in mu.parts() {
                // J_(part)(h_xi): companion blocks with identity superdiagonal
                for b in 0..part {
                    for r in 0..*a {
                        for c in 0..*a {
                            m[off + b * a + r][off + b * a + c] = comp[r][c];
                        }
                        if b + 1 < part {
                            m[off + b * a + r][off + (b + 1) * a + r] = t.one(1);
                        }
                    }
                }
                off += a * part;
            }
        }
        MatrixGL {
            level: 1,
            n,
            a: m.into_iter().flatten().collect(),
        }
    }

    /// Identify the `GL_n(F_q)`-class of a matrix over `F_{q^m}` whose
    /// characteristic polynomial is F_q-rational.
    pub fn identify(&self, x: &MatrixGL) -> Result<ConjClassLabel> {
        assert_eq!(x.n, self.n);
        let t = self.tower;
        let cp = charpoly(t, x);
        let mut key = Vec::with_capacity(self.n);
        for c in &cp[..self.n] {
            let down = t.try_descend(*c, 1).ok_or(Error::NotRational)?;
            key.push(down.code());
        }
        let factors = self
            .factor_table
            .get(&key)
            .ok_or(Error::Singular)?
            .clone();
        let mut blocks = Vec::with_capacity(factors.len());
        for (a, j, mult) in factors {
            let mu = if mult == 1 {
                Partition::new(vec![1])
            } else {
                // nullity sequence of f(A)^i over the matrix's own level
                let xi = t.from_dlog(a, j);
                let mp = t.minpoly_over_base(xi);
                let fa = eval_poly_at_matrix(t, &mp, x);
                let mut powers = fa.clone();
                let mut prev_null = 0usize;
                let mut parts_count = Vec::new();
                loop {
                    let null = x.n - mat_rank(t, &powers);
                    let parts_ge = (null - prev_null) / a;
                    if parts_ge == 0 {
                        break;
                    }
                    parts_count.push(parts_ge);
                    if null == a * mult {
                        break;
                    }
                    prev_null = null;
                    powers = mat_mul(t, &powers, &fa);
                }
                // parts_count[i] = number of parts >= i+1: transpose
                Partition::new(
                    (0..parts_count.len())
                        .map(|i| parts_count[i])
                        .collect::<Vec<_>>(),
                )
                .transpose()
            };
            blocks.push((a, j, mu));
        }
        Ok(ConjClassLabel::new(blocks))
    }

    /// Class of the Shintani norm `N(h) = Frob^{k-1}(h) ... Frob(h) h` of a
    /// matrix over `F_{q^k}`.
    pub fn shintani_norm_class(&self, h: &MatrixGL) -> Result<ConjClassLabel> {
        let t = self.tower;
        let k = h.level;
        let mut prod = h.clone();
        let mut cur = h.clone();
        for _ in 1..k {
            cur = mat_frobenius(t, &cur, 1);
            prod = mat_mul(t, &cur, &prod);
        }
        self.identify(&prod)
    }
}

/// Evaluate a monic polynomial with level-1 coefficients at a matrix over a
/// possibly larger level.
pub fn eval_poly_at_matrix(tower: &FieldTower, coeffs: &[Fe], x: &MatrixGL) -> MatrixGL {
    let n = x.n;
    let lvl = x.level;
    let mut acc = MatrixGL {
        level: lvl,
        n,
        a: vec![tower.zero(lvl); n * n],
    };
    for c in coeffs.iter().rev() {
        acc = mat_mul(tower, &acc, x);
        if !c.is_zero() {
            let ce = tower.embed(*c, lvl);
            for i in 0..n {
                acc.a[i * n + i] = tower.add(acc.a[i * n + i], ce);
            }
        }
    }
    acc
}

/// Factor a monic polynomial over F_q (coefficients `c_0..c_{n-1}`, implicit
/// leading 1) into `(degree, orbit-min, multiplicity)` triples by scanning
/// orbit representatives.
fn factor_monic(
    tower: &FieldTower,
    coeffs: &[Fe],
    orbits: &[Vec<u64>],
) -> Vec<(usize, u64, usize)> {
    let n = coeffs.len();
    let mut rem: Vec<Fe> = coeffs.to_vec();
    rem.push(tower.one(1));
    let mut out = Vec::new();
    for a in 1..=n {
        if a >= orbits.len() {
            break;
        }
        for &j in &orbits[a] {
            if rem.len() - 1 < a {
                break;
            }
            let xi = tower.from_dlog(a, j);
            // evaluate rem at xi
            let mut val = tower.zero(a);
            for c in rem.iter().rev() {
                val = tower.mul(val, xi);
                val = tower.add(val, tower.embed(*c, a));
            }
            if !val.is_zero() {
                continue;
            }
            let mp = tower.minpoly_over_base(xi);
            let mut mult = 0usize;
            loop {
                match poly_divide(tower, &rem, &mp) {
                    Some(quot) => {
                        mult += 1;
                        rem = quot;
                    }
                    None => break,
                }
            }
            out.push((a, j, mult));
        }
    }
    debug_assert_eq!(rem.len(), 1, "polynomial fully factored");
    out
}

/// Exact division of monic polynomials over level 1; None if not divisible.
fn poly_divide(tower: &FieldTower, num: &[Fe], den: &[Fe]) -> Option<Vec<Fe>> {
    if den.len() > num.len() {
        return None;
    }
    let mut rem = num.to_vec();
    let dd = den.len() - 1;
    let mut quot = vec![tower.zero(1); num.len() - dd];
    while rem.len() > dd {
        let lead = *rem.last().unwrap();
        let pos = rem.len() - 1 - dd;
        quot[pos] = lead;
        if !lead.is_zero() {
            for i in 0..=dd {
                let sub = tower.mul(lead, den[i]);
                rem[pos + i] = tower.sub(rem[pos + i], sub);
            }
        }
        rem.pop();
    }
    if rem.iter().all(|x| x.is_zero()) {
        Some(quot)
    } else {
        None
    }
}

/// Iterate all of `GL_n(F_{q^m})` (budgeted).
pub fn group_iter<'a>(
    tower: &'a FieldTower,
    n: usize,
    level: usize,
    budget: u64,
) -> Result<impl Iterator<Item = MatrixGL> + 'a> {
    let order = gl_order(tower.order(level), n);
    if order > budget as u128 {
        return Err(Error::BudgetExceeded {
            needed: order,
            budget,
        });
    }
    let per = tower.order(level) as u128;
    let total = per.pow((n * n) as u32);
    Ok((0..total).filter_map(move |code| {
        let mut c = code;
        let a: Vec<Fe> = (0..n * n)
            .map(|_| {
                let v = (c % per) as u32;
                c /= per;
                if v == 0 {
                    tower.zero(level)
                } else {
                    tower.from_dlog(level, v as u64 - 1)
                }
            })
            .collect();
        let m = MatrixGL { level, n, a };
        if mat_det(tower, &m).is_zero() {
            None
        } else {
            Some(m)
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn group_orders() {
        assert_eq!(gl_order(2, 2), 6);
        assert_eq!(gl_order(4, 2), 180);
        assert_eq!(gl_order(2, 3), 168);
        assert_eq!(gl_order(3, 2), 48);
        let t = FieldTower::build(2, 1, 2).unwrap();
        assert_eq!(group_iter(&t, 2, 1, 1 << 20).unwrap().count(), 6);
        assert_eq!(group_iter(&t, 2, 2, 1 << 20).unwrap().count(), 180);
        assert!(matches!(
            group_iter(&t, 2, 2, 10),
            Err(Error::BudgetExceeded { needed: 180, .. })
        ));
    }

    #[test]
    fn class_counts() {
        let t2 = FieldTower::build(2, 1, 3).unwrap();
        assert_eq!(ClassData::new(&t2, 1).num_classes(), 1);
        assert_eq!(ClassData::new(&t2, 2).num_classes(), 3);
        let t3 = FieldTower::build(3, 1, 3).unwrap();
        assert_eq!(ClassData::new(&t3, 2).num_classes(), 8);
    }

    #[test]
    fn class_equation() {
        for (p, n) in [(2u64, 2usize), (2, 3), (3, 2), (3, 3)] {
            let t = FieldTower::build(p, 1, n.max(2)).unwrap();
            let cd = ClassData::new(&t, n);
            let total: u128 = cd.sizes.iter().sum();
            assert_eq!(total, gl_order(p, n), "class equation p={p} n={n}");
        }
    }

    #[test]
    fn brute_force_class_partition() {
        // every element of GL_2(F_2) and GL_2(F_3) identifies to a label, class
        // sizes match the counts, and representatives identify to themselves
        for p in [2u64, 3] {
            let t = FieldTower::build(p, 1, 2).unwrap();
            let cd = ClassData::new(&t, 2);
            let mut counts = vec![0u128; cd.num_classes()];
            for g in group_iter(&t, 2, 1, 1 << 20).unwrap() {
                let label = cd.identify(&g).unwrap();
                counts[cd.index[&label]] += 1;
            }
            assert_eq!(counts, cd.sizes, "p={p}");
            for label in &cd.labels {
                let rep = cd.representative(label);
                assert_eq!(cd.identify(&rep).unwrap(), *label);
            }
        }
    }

    #[test]
    fn identify_examples() {
        let t = FieldTower::build(2, 1, 2).unwrap();
        let cd = ClassData::new(&t, 2);
        // identity -> ([1], (1,1))
        let id = identity(&t, 1, 2);
        let label = cd.identify(&id).unwrap();
        assert_eq!(
            label,
            ConjClassLabel::new(vec![(1, 0, Partition::new(vec![1, 1]))])
        );
        // Jordan block J_(2)(1)
        let mut j = identity(&t, 1, 2);
        j.set(0, 1, t.one(1));
        let label = cd.identify(&j).unwrap();
        assert_eq!(
            label,
            ConjClassLabel::new(vec![(1, 0, Partition::new(vec![2]))])
        );
        // companion matrix of x^2+x+1 -> elliptic orbit
        let mut c = MatrixGL {
            level: 1,
            n: 2,
            a: vec![t.zero(1); 4],
        };
        c.set(1, 0, t.one(1));
        c.set(0, 1, t.one(1));
        c.set(1, 1, t.one(1));
        let label = cd.identify(&c).unwrap();
        assert_eq!(label.0[0].0, 2, "degree-2 orbit");
        assert_eq!(label.0[0].2, Partition::new(vec![1]));
    }

    #[test]
    fn conjugation_invariance() {
        let t = FieldTower::build(3, 1, 2).unwrap();
        let cd = ClassData::new(&t, 2);
        let gs: Vec<MatrixGL> = group_iter(&t, 2, 1, 1 << 20).unwrap().take(100).collect();
        for label in &cd.labels {
            let rep = cd.representative(label);
            for g in &gs {
                let gi = mat_inverse(&t, g).unwrap();
                let conj = mat_mul(&t, &mat_mul(&t, g, &rep), &gi);
                assert_eq!(cd.identify(&conj).unwrap(), *label);
            }
        }
    }

    #[test]
    fn nullity_vs_multiplicity_bigger() {
        // GL_4(F_2): random-ish types with repeated factors identify correctly
        let t = FieldTower::build(2, 1, 4).unwrap();
        let cd = ClassData::new(&t, 4);
        for label in &cd.labels {
            let rep = cd.representative(label);
            assert_eq!(cd.identify(&rep).unwrap(), *label, "label {label}");
        }
        let total: u128 = cd.sizes.iter().sum();
        assert_eq!(total, gl_order(2, 4));
    }

    #[test]
    fn shintani_scalar_case() {
        // c=1: the norm map reduces to x -> x^{(q^k-1)/(q-1)}
        let t = FieldTower::build(3, 1, 3).unwrap();
        let cd = ClassData::new(&t, 1);
        for k in 1..=3usize {
            for x in t.elements(k).skip(1) {
                let m = MatrixGL {
                    level: k,
                    n: 1,
                    a: vec![x],
                };
                let label = cd.shintani_norm_class(&m).unwrap();
                let expect = t.norm(x, 1).unwrap();
                assert_eq!(
                    label,
                    ConjClassLabel::new(vec![(
                        1,
                        t.dlog(expect).unwrap(),
                        Partition::new(vec![1])
                    )])
                );
            }
        }
    }

    #[test]
    fn shintani_fibers_partition_group() {
        // q=2, k=2, c=2: fibers over the 3 classes of GL_2(F_2) sum to 180,
        // every class is hit (norm-map bijectivity consequence)
        let t = FieldTower::build(2, 1, 2).unwrap();
        let cd = ClassData::new(&t, 2);
        let mut counts = vec![0u64; cd.num_classes()];
        for h in group_iter(&t, 2, 2, 1 << 20).unwrap() {
            let label = cd.shintani_norm_class(&h).unwrap();
            counts[cd.index[&label]] += 1;
        }
        assert_eq!(counts.iter().sum::<u64>(), 180);
        assert!(counts.iter().all(|&c| c > 0));
    }

    #[test]
    fn shintani_twisted_conjugacy_invariance() {
        // label(N(g h Frob(g)^{-1})) = label(N(h))
        let t = FieldTower::build(2, 1, 2).unwrap();
        let cd = ClassData::new(&t, 2);
        let hs: Vec<MatrixGL> = group_iter(&t, 2, 2, 1 << 20).unwrap().take(30).collect();
        let gs: Vec<MatrixGL> = group_iter(&t, 2, 2, 1 << 20)
            .unwrap()
            .skip(50)
            .take(20)
            .collect();
        for h in &hs {
            let base = cd.shintani_norm_class(h).unwrap();
            for g in &gs {
                let gf = mat_frobenius(&t, g, 1);
                let gfi = mat_inverse(&t, &gf).unwrap();
                let twisted = mat_mul(&t, &mat_mul(&t, g, h), &gfi);
                assert_eq!(cd.shintani_norm_class(&twisted).unwrap(), base);
            }
        }
    }

    #[test]
    fn norm_image_counts() {
        // number of labels hit by the Shintani norm equals the number of
        // classes of GL_c(F_q), for small (c, k, q)
        for (p, c, k) in [(2u64, 1usize, 2usize), (2, 1, 3), (2, 2, 2), (3, 1, 2), (3, 2, 2)] {
            let t = FieldTower::build(p, 1, (c * k).max(c).max(k)).unwrap();
            let cd = ClassData::new(&t, c);
            let mut hit = std::collections::HashSet::new();
            for h in group_iter(&t, c, k, 1 << 22).unwrap() {
                hit.insert(cd.shintani_norm_class(&h).unwrap());
            }
            assert_eq!(hit.len(), cd.num_classes(), "p={p} c={c} k={k}");
        }
    }

    #[test]
    fn label_parse_and_display() {
        let t = FieldTower::build(2, 1, 2).unwrap();
        let l = ConjClassLabel::parse(&t, "1:0:[2];2:1:[1]").unwrap();
        assert_eq!(l.total(), 4);
        let shown = format!("{l}");
        let re = ConjClassLabel::parse(&t, &shown).unwrap();
        assert_eq!(l, re);
        assert!(ConjClassLabel::parse(&t, "1:0:[2];1:0:[1]").is_err());
        // degree mismatch: dlog 0 at level 2 is the identity, degree 1
        assert!(ConjClassLabel::parse(&t, "2:0:[1]").is_err());
    }
}
