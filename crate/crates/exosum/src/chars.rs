//! Multiplicative and additive characters of the field tower, Frobenius
//! orbits, inflation along norms, and classical Gauss sums.

use crate::error::{Error, Result};
use crate::fields::{Fe, FieldTower};
use crate::Complex;
use std::f64::consts::TAU;

/// `zeta_n^e` with the exponent reduced mod n first (avoids phase drift).
pub fn zeta(n: u64, e: i64) -> Complex {
    let e = e.rem_euclid(n as i64) as u64;
    Complex::from_polar(1.0, TAU * e as f64 / n as f64)
}

fn zeta_u(n: u64, e: u64) -> Complex {
    Complex::from_polar(1.0, TAU * (e % n) as f64 / n as f64)
}

/// A multiplicative character of `F_{q^m}^x`: `chi(g_m^t) = zeta_{q^m-1}^{jt}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultChar {
    pub level: usize,
    pub index: u64,
}

impl MultChar {
    pub fn new(tower: &FieldTower, level: usize, index: u64) -> MultChar {
        MultChar {
            level,
            index: index % tower.units(level),
        }
    }

    pub fn trivial(level: usize) -> MultChar {
        MultChar { level, index: 0 }
    }

    pub fn is_trivial(&self) -> bool {
        self.index == 0
    }

    pub fn eval(&self, tower: &FieldTower, x: Fe) -> Result<Complex> {
        if x.is_zero() {
            return Err(Error::CharAtZero);
        }
        if x.level() != self.level {
            return Err(Error::LevelMismatch {
                expected: self.level,
                got: x.level(),
            });
        }
        Ok(self.eval_dlog(tower, tower.dlog(x).unwrap()))
    }

    /// Value at `g_m^t`.
    pub fn eval_dlog(&self, tower: &FieldTower, t: u64) -> Complex {
        let n = tower.units(self.level);
        zeta_u(n, (self.index as u128 * t as u128 % n as u128) as u64)
    }

    pub fn inverse(&self, tower: &FieldTower) -> MultChar {
        let n = tower.units(self.level);
        MultChar {
            level: self.level,
            index: (n - self.index) % n,
        }
    }

    pub fn mul(&self, other: &MultChar, tower: &FieldTower) -> MultChar {
        assert_eq!(self.level, other.level);
        let n = tower.units(self.level);
        MultChar {
            level: self.level,
            index: (self.index + other.index) % n,
        }
    }

    /// Smallest `d | m` such that the character factors through `N_{m/d}`.
    pub fn degree(&self, tower: &FieldTower) -> usize {
        let m = self.level;
        let n = tower.units(m);
        for d in 1..=m {
            if m % d == 0 {
                let qd = tower.units(d);
                if (qd as u128 * self.index as u128) % n as u128 == 0 {
                    return d;
                }
            }
        }
        m
    }

    pub fn is_regular(&self, tower: &FieldTower) -> bool {
        self.degree(tower) == self.level
    }

    /// The set `{chi^{q^i}}`, as sorted indices.
    pub fn frobenius_orbit(&self, tower: &FieldTower) -> Vec<u64> {
        let n = tower.units(self.level);
        let q = tower.q() % n.max(1);
        let mut out = vec![self.index];
        let mut cur = self.index;
        loop {
            cur = (cur as u128 * q as u128 % n as u128) as u64;
            if cur == self.index {
                break;
            }
            out.push(cur);
        }
        out.sort_unstable();
        out
    }

    /// Canonical orbit representative: the minimal index in the orbit.
    pub fn orbit_min(&self, tower: &FieldTower) -> u64 {
        *self.frobenius_orbit(tower).iter().min().unwrap()
    }

    /// `chi ∘ N_{target/m}` at level `target`.
    pub fn inflate(&self, tower: &FieldTower, target: usize) -> Result<MultChar> {
        if target % self.level != 0 || target > tower.max_deg() {
            return Err(Error::NotDivisor {
                m: self.level,
                n: target,
            });
        }
        let scale = tower.units(target) / tower.units(self.level);
        Ok(MultChar {
            level: target,
            index: (self.index as u128 * scale as u128 % tower.units(target) as u128) as u64,
        })
    }

    /// Inverse of `inflate`: the level-`d` character with `chi = chi' ∘ N`,
    /// when the degree allows it.
    pub fn try_deflate(&self, tower: &FieldTower, d: usize) -> Option<MultChar> {
        if self.level % d != 0 || self.degree(tower) > d {
            return None;
        }
        let scale = tower.units(self.level) / tower.units(d);
        if self.index % scale != 0 {
            return None;
        }
        Some(MultChar {
            level: d,
            index: self.index / scale,
        })
    }

    /// Gauss sum `tau(chi, psi_m) = -sum_x chi(x) psi_m(x)` by direct summation.
    pub fn gauss_sum(&self, tower: &FieldTower) -> Complex {
        let m = self.level;
        let n = tower.units(m);
        let mut acc = Complex::new(0.0, 0.0);
        for t in 0..n {
            acc += self.eval_dlog(tower, t) * tower.psi_dlog(m, t);
        }
        -acc
    }
}

/// The canonical additive character at a level, `psi_m = psi ∘ Tr`.
#[derive(Debug, Clone, Copy)]
pub struct AddChar {
    pub level: usize,
}

impl AddChar {
    pub fn eval(&self, tower: &FieldTower, x: Fe) -> Complex {
        assert_eq!(x.level(), self.level);
        tower.psi(x)
    }
}

/// All Gauss sums at a level at once: `table[j] = tau(chi_j, psi_m)`.
///
/// This is a length-`q^m-1` DFT of the additive character table, so the whole
/// spectrum costs `O(N log N)`.
pub fn gauss_table(tower: &FieldTower, m: usize) -> Vec<Complex> {
    let n = tower.units(m) as usize;
    // tau(chi_j) = -sum_t psi[t] zeta_N^{jt} = -conj(FFT(conj(psi))[j])
    let mut buf: Vec<Complex> = (0..n as u64)
        .map(|t| tower.psi_dlog(m, t).conj())
        .collect();
    let mut planner = rustfft::FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    fft.process(&mut buf);
    buf.into_iter().map(|v| -v.conj()).collect()
}

/// Inverse transform over the unit group: given `spec[j] = sum_xi f(xi)
/// chi_j(xi)`, recover `f` on all of `F_{q^m}^x` (indexed by dlog).
pub fn unit_group_inverse_dft(spec: &[Complex]) -> Vec<Complex> {
    let n = spec.len();
    // f(g^t) = (1/N) sum_j spec[j] zeta^{-jt} = (1/N) FFT_forward(spec)[t]
    let mut buf = spec.to_vec();
    let mut planner = rustfft::FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    fft.process(&mut buf);
    let scale = 1.0 / n as f64;
    buf.into_iter().map(|v| v * scale).collect()
}

/// Parse a character spec `m:j`.
pub fn parse_char_spec(tower: &FieldTower, s: &str) -> Result<MultChar> {
    let (m, j) = s
        .split_once(':')
        .ok_or_else(|| Error::Parse(format!("bad character spec `{s}`, expected m:j")))?;
    let m: usize = m
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("bad level in `{s}`")))?;
    let j: u64 = j
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("bad index in `{s}`")))?;
    if m == 0 || m > tower.max_deg() {
        return Err(Error::Invalid(format!("level {m} outside tower")));
    }
    Ok(MultChar::new(tower, m, j))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::FieldTower;

    #[test]
    fn eval_examples() {
        let t = FieldTower::build(3, 1, 2).unwrap();
        let triv = MultChar::trivial(1);
        for x in t.elements(1).skip(1) {
            assert!((triv.eval(&t, x).unwrap() - Complex::new(1.0, 0.0)).norm() < 1e-12);
        }
        // quadratic character of F_3 at the generator 2
        let quad = MultChar::new(&t, 1, 1);
        let g = t.generator(1);
        assert!((quad.eval(&t, g).unwrap() - Complex::new(-1.0, 0.0)).norm() < 1e-12);
        assert!(quad.eval(&t, t.zero(1)).is_err());
        // chi(g_m) = zeta^j
        let chi = MultChar::new(&t, 2, 3);
        assert!((chi.eval(&t, t.generator(2)).unwrap() - zeta(8, 3)).norm() < 1e-12);
    }

    #[test]
    fn homomorphism_property() {
        let t = FieldTower::build(2, 1, 3).unwrap();
        let chi = MultChar::new(&t, 3, 2);
        for x in t.elements(3).skip(1) {
            for y in t.elements(3).skip(1) {
                let lhs = chi.eval(&t, t.mul(x, y)).unwrap();
                let rhs = chi.eval(&t, x).unwrap() * chi.eval(&t, y).unwrap();
                assert!((lhs - rhs).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn orbits_and_degrees() {
        let t = FieldTower::build(2, 1, 2).unwrap();
        assert_eq!(MultChar::new(&t, 2, 0).frobenius_orbit(&t), vec![0]);
        assert_eq!(MultChar::new(&t, 2, 0).degree(&t), 1);
        let chi = MultChar::new(&t, 2, 1);
        assert_eq!(chi.frobenius_orbit(&t), vec![1, 2]);
        assert_eq!(chi.degree(&t), 2);
        assert!(chi.is_regular(&t));
    }

    #[test]
    fn inflate_matches_norm_composition() {
        let t = FieldTower::build(3, 1, 4).unwrap();
        for m in [1usize, 2] {
            for target in (m..=4).filter(|n| n % m == 0) {
                for j in 0..t.units(m) {
                    let chi = MultChar::new(&t, m, j);
                    let infl = chi.inflate(&t, target).unwrap();
                    for x in t.elements(target).skip(1) {
                        let lhs = infl.eval(&t, x).unwrap();
                        let rhs = chi.eval(&t, t.norm(x, m).unwrap()).unwrap();
                        assert!((lhs - rhs).norm() < 1e-10);
                    }
                    let back = infl.try_deflate(&t, m).unwrap();
                    assert_eq!(back.index, chi.index);
                }
            }
        }
        // q=3, 1 -> 2: j=1 becomes the order-2 character j=4 of F_9^x
        let chi = MultChar::new(&t, 1, 1);
        assert_eq!(chi.inflate(&t, 2).unwrap().index, 4);
    }

    #[test]
    fn gauss_sum_values() {
        let t = FieldTower::build(3, 1, 2).unwrap();
        // trivial character: tau = 1
        let tau = MultChar::trivial(1).gauss_sum(&t);
        assert!((tau - Complex::new(1.0, 0.0)).norm() < 1e-12);
        // quadratic character of F_3: tau = -(zeta_3 - zeta_3^2), |tau| = sqrt(3)
        let quad = MultChar::new(&t, 1, 1).gauss_sum(&t);
        let expect = -(zeta(3, 1) - zeta(3, 2));
        assert!((quad - expect).norm() < 1e-12);
        assert!((quad.norm() - 3f64.sqrt()).abs() < 1e-12);
        // q=2, m=2, j=1: |tau| = 2
        let t2 = FieldTower::build(2, 1, 2).unwrap();
        let tau = MultChar::new(&t2, 2, 1).gauss_sum(&t2);
        assert!((tau.norm() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn gauss_sum_constant_on_orbit_and_modulus() {
        for (p, f) in [(2u64, 1usize), (3, 1), (2, 2)] {
            let t = FieldTower::build(p, f, 3).unwrap();
            for m in 1..=3usize {
                for j in 0..t.units(m) {
                    let chi = MultChar::new(&t, m, j);
                    let tau = chi.gauss_sum(&t);
                    let expect_mod = if j == 0 {
                        1.0
                    } else {
                        (t.q() as f64).powf(m as f64 / 2.0)
                    };
                    assert!(
                        (tau.norm() - expect_mod).abs() < 1e-9,
                        "q={} m={m} j={j}",
                        t.q()
                    );
                    for jo in chi.frobenius_orbit(&t) {
                        let tau2 = MultChar::new(&t, m, jo).gauss_sum(&t);
                        assert!((tau - tau2).norm() < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn hasse_davenport_classical() {
        for (p, f) in [(2u64, 1usize), (3, 1)] {
            let t = FieldTower::build(p, f, 6).unwrap();
            for m in 1..=3usize {
                for b in 1..=2usize {
                    for j in 0..t.units(m) {
                        let chi = MultChar::new(&t, m, j);
                        let lhs = chi.gauss_sum(&t).powu(b as u32);
                        let rhs = chi.inflate(&t, b * m).unwrap().gauss_sum(&t);
                        assert!((lhs - rhs).norm() < 1e-8, "q={} m={m} b={b} j={j}", t.q());
                    }
                }
            }
        }
    }

    #[test]
    fn gauss_table_matches_direct() {
        let t = FieldTower::build(3, 1, 3).unwrap();
        for m in 1..=3usize {
            let table = gauss_table(&t, m);
            for j in 0..t.units(m) {
                let direct = MultChar::new(&t, m, j).gauss_sum(&t);
                assert!((table[j as usize] - direct).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn unit_inverse_dft_roundtrip() {
        let t = FieldTower::build(3, 1, 2).unwrap();
        let n = t.units(2);
        // f(xi) = psi(xi) as a test function
        let f: Vec<Complex> = (0..n).map(|u| t.psi_dlog(2, u)).collect();
        let spec: Vec<Complex> = (0..n)
            .map(|j| {
                let chi = MultChar::new(&t, 2, j);
                (0..n).map(|u| f[u as usize] * chi.eval_dlog(&t, u)).sum()
            })
            .collect();
        let back = unit_group_inverse_dft(&spec);
        for u in 0..n as usize {
            assert!((back[u] - f[u]).norm() < 1e-9);
        }
    }
}
