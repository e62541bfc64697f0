//! Integer partitions and the small combinatorics that rides on them.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// A partition: weakly decreasing positive parts.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Partition(Vec<usize>);

impl std::fmt::Debug for Partition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self}")
    }
}

impl std::fmt::Display for Partition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[")?;
        for (i, p) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{p}")?;
        }
        write!(f, "]")
    }
}

impl Partition {
    pub fn new(mut parts: Vec<usize>) -> Partition {
        parts.retain(|&p| p > 0);
        parts.sort_unstable_by(|a, b| b.cmp(a));
        Partition(parts)
    }

    pub fn empty() -> Partition {
        Partition(Vec::new())
    }

    pub fn parts(&self) -> &[usize] {
        &self.0
    }

    pub fn size(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Number of times `i` appears.
    pub fn multiplicity(&self, i: usize) -> usize {
        self.0.iter().filter(|&&p| p == i).count()
    }

    /// `n(λ) = Σ (j-1) λ_j`.
    pub fn n_value(&self) -> usize {
        self.0.iter().enumerate().map(|(j, &p)| j * p).sum()
    }

    /// `z_λ = ∏_j m_j! j^{m_j}`.
    pub fn z(&self) -> u64 {
        let mut z = 1u64;
        let max = self.0.first().copied().unwrap_or(0);
        for j in 1..=max {
            let m = self.multiplicity(j) as u64;
            let mut fact = 1u64;
            for i in 1..=m {
                fact *= i;
            }
            z *= fact * (j as u64).pow(m as u32);
        }
        z
    }

    pub fn transpose(&self) -> Partition {
        if self.0.is_empty() {
            return Partition::empty();
        }
        let max = self.0[0];
        let parts = (1..=max)
            .map(|j| self.0.iter().filter(|&&p| p >= j).count())
            .collect();
        Partition(parts)
    }

    /// All partitions of `n`, in descending lexicographic order.
    pub fn all(n: usize) -> Vec<Partition> {
        fn rec(n: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<Partition>) {
            if n == 0 {
                out.push(Partition(cur.clone()));
                return;
            }
            for p in (1..=max.min(n)).rev() {
                cur.push(p);
                rec(n - p, p, cur, out);
                cur.pop();
            }
        }
        if n == 0 {
            return vec![Partition::empty()];
        }
        let mut out = Vec::new();
        rec(n, n, &mut Vec::new(), &mut out);
        out
    }

    /// Partitions of `n` with at most `len` parts.
    pub fn all_bounded(n: usize, len: usize) -> Vec<Partition> {
        Partition::all(n)
            .into_iter()
            .filter(|p| p.len() <= len)
            .collect()
    }

    /// `kλ = (k λ_1, ..., k λ_r)`.
    pub fn scale(&self, k: usize) -> Partition {
        Partition(self.0.iter().map(|&p| p * k).collect())
    }

    /// Hook lengths of all cells.
    pub fn hooks(&self) -> Vec<usize> {
        let tr = self.transpose();
        let mut out = Vec::new();
        for (i, &row) in self.0.iter().enumerate() {
            for j in 0..row {
                out.push(row - j + tr.0[j] - i - 1);
            }
        }
        out
    }

    /// Parse a bracketed part list like `[3,1,1]` (or `[]`).
    pub fn parse(s: &str) -> Result<Partition> {
        let t = s.trim();
        let inner = t
            .strip_prefix('[')
            .and_then(|t| t.strip_suffix(']'))
            .ok_or_else(|| Error::Parse(format!("bad partition `{s}`")))?;
        if inner.trim().is_empty() {
            return Ok(Partition::empty());
        }
        let parts: Result<Vec<usize>> = inner
            .split(',')
            .map(|x| {
                x.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Parse(format!("bad partition `{s}`")))
            })
            .collect();
        let parts = parts?;
        if parts.contains(&0) {
            return Err(Error::Parse(format!("bad partition `{s}`: zero part")));
        }
        Ok(Partition::new(parts))
    }
}

/// Weak compositions of `n` of exactly `len` parts (parts may be zero),
/// lexicographic order.
pub fn weak_compositions(n: usize, len: usize) -> Vec<Vec<usize>> {
    fn rec(n: usize, len: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if len == 1 {
            cur.push(n);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for first in 0..=n {
            cur.push(first);
            rec(n - first, len - 1, cur, out);
            cur.pop();
        }
    }
    if len == 0 {
        return if n == 0 { vec![vec![]] } else { vec![] };
    }
    let mut out = Vec::new();
    rec(n, len, &mut Vec::new(), &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basics() {
        let p = Partition::new(vec![1, 3, 2]);
        assert_eq!(p.parts(), &[3, 2, 1]);
        assert_eq!(p.size(), 6);
        assert_eq!(p.len(), 3);
        assert_eq!(p.n_value(), 2 + 2);
        assert_eq!(Partition::new(vec![2, 2]).z(), 8);
        assert_eq!(Partition::new(vec![2]).z(), 2);
        assert_eq!(Partition::new(vec![1, 1, 1]).z(), 6);
    }

    #[test]
    fn transpose_involution() {
        for n in 0..=7 {
            for p in Partition::all(n) {
                assert_eq!(p.transpose().transpose(), p);
                assert_eq!(p.transpose().size(), p.size());
            }
        }
        assert_eq!(
            Partition::new(vec![3, 1]).transpose(),
            Partition::new(vec![2, 1, 1])
        );
    }

    #[test]
    fn counts() {
        assert_eq!(Partition::all(0).len(), 1);
        assert_eq!(Partition::all(4).len(), 5);
        assert_eq!(Partition::all(6).len(), 11);
        assert_eq!(
            weak_compositions(2, 2),
            vec![vec![0, 2], vec![1, 1], vec![2, 0]]
        );
        assert_eq!(weak_compositions(3, 3).len(), 10);
    }

    #[test]
    fn parse_roundtrip() {
        for s in ["[3,1,1]", "[]", "[2]"] {
            let p = Partition::parse(s).unwrap();
            assert_eq!(format!("{p}"), s);
        }
        assert!(Partition::parse("3,1").is_err());
        assert!(Partition::parse("[0]").is_err());
    }
}
