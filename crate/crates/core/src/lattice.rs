//! Integer lattice boxes with row-major (lexicographic) linear indexing.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// A lattice site in `Z^d`. `Vec`'s `Ord` is the lexicographic order.
pub type Site = Vec<i64>;

/// Half-open lattice box `[lo, hi)` in `Z^d`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatticeBox {
    lo: Vec<i64>,
    hi: Vec<i64>,
}

impl LatticeBox {
    pub fn new(lo: Vec<i64>, hi: Vec<i64>) -> Result<Self> {
        if lo.is_empty() {
            return Err(invalid("window", "dimension must be at least 1"));
        }
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        if lo.iter().zip(&hi).any(|(a, b)| b < a) {
            return Err(invalid("window", format!("hi {hi:?} below lo {lo:?}")));
        }
        Ok(LatticeBox { lo, hi })
    }

    /// The box `[-m, m]^d`, i.e. `B^(m)`.
    pub fn centered(dim: usize, m: i64) -> Self {
        LatticeBox {
            lo: vec![-m; dim],
            hi: vec![m + 1; dim],
        }
    }

    /// `[0, n)` in one dimension.
    pub fn segment(n: i64) -> Self {
        LatticeBox {
            lo: vec![0],
            hi: vec![n],
        }
    }

    pub fn lo(&self) -> &[i64] {
        &self.lo
    }

    pub fn hi(&self) -> &[i64] {
        &self.hi
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn extent(&self, axis: usize) -> usize {
        (self.hi[axis] - self.lo[axis]) as usize
    }

    pub fn shape(&self) -> Vec<usize> {
        (0..self.dim()).map(|l| self.extent(l)).collect()
    }

    pub fn len(&self) -> usize {
        self.shape().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major strides; the last axis varies fastest.
    pub fn strides(&self) -> Vec<usize> {
        let shape = self.shape();
        let mut strides = vec![1usize; shape.len()];
        for l in (0..shape.len().saturating_sub(1)).rev() {
            strides[l] = strides[l + 1] * shape[l + 1];
        }
        strides
    }

    pub fn contains(&self, site: &[i64]) -> bool {
        site.len() == self.dim()
            && site
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (a, b))| a <= v && v < b)
    }

    pub fn contains_box(&self, other: &LatticeBox) -> bool {
        other.is_empty()
            || (other.dim() == self.dim()
                && (0..self.dim())
                    .all(|l| self.lo[l] <= other.lo[l] && other.hi[l] <= self.hi[l]))
    }

    pub fn index_of(&self, site: &[i64]) -> Option<usize> {
        if !self.contains(site) {
            return None;
        }
        let mut idx = 0usize;
        for l in 0..self.dim() {
            idx = idx * self.extent(l) + (site[l] - self.lo[l]) as usize;
        }
        Some(idx)
    }

    pub fn site_at(&self, mut idx: usize) -> Site {
        let d = self.dim();
        let mut site = vec![0i64; d];
        for l in (0..d).rev() {
            let e = self.extent(l);
            site[l] = self.lo[l] + (idx % e) as i64;
            idx /= e;
        }
        site
    }

    /// Sites in lexicographic order.
    pub fn sites(&self) -> BoxSites<'_> {
        BoxSites {
            bx: self,
            next: if self.is_empty() {
                None
            } else {
                Some(self.lo.clone())
            },
        }
    }

    /// Grows the box by `pad[l]` sites on both sides of every axis.
    pub fn expand(&self, pad: &[i64]) -> LatticeBox {
        LatticeBox {
            lo: self.lo.iter().zip(pad).map(|(a, p)| a - p).collect(),
            hi: self.hi.iter().zip(pad).map(|(b, p)| b + p).collect(),
        }
    }

    pub fn expand_uniform(&self, pad: i64) -> LatticeBox {
        self.expand(&vec![pad; self.dim()])
    }

    pub fn translate(&self, shift: &[i64]) -> LatticeBox {
        LatticeBox {
            lo: self.lo.iter().zip(shift).map(|(a, s)| a + s).collect(),
            hi: self.hi.iter().zip(shift).map(|(b, s)| b + s).collect(),
        }
    }

    /// Linear-index offset of `offset` inside this box (may be negative).
    pub fn linear_offset(&self, offset: &[i64]) -> isize {
        self.strides()
            .iter()
            .zip(offset)
            .map(|(&s, &o)| s as isize * o as isize)
            .sum()
    }
}

/// Lexicographic iterator over the sites of a [`LatticeBox`].
pub struct BoxSites<'a> {
    bx: &'a LatticeBox,
    next: Option<Site>,
}

impl Iterator for BoxSites<'_> {
    type Item = Site;

    fn next(&mut self) -> Option<Site> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        let mut l = succ.len();
        loop {
            if l == 0 {
                break;
            }
            l -= 1;
            succ[l] += 1;
            if succ[l] < self.bx.hi[l] {
                self.next = Some(succ);
                break;
            }
            succ[l] = self.bx.lo[l];
        }
        Some(current)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_round_trips_in_lexicographic_order() {
        let b = LatticeBox::new(vec![-1, 2], vec![2, 5]).unwrap();
        assert_eq!(b.len(), 9);
        let sites: Vec<Site> = b.sites().collect();
        assert_eq!(sites.len(), 9);
        for (i, s) in sites.iter().enumerate() {
            assert_eq!(b.index_of(s), Some(i));
            assert_eq!(&b.site_at(i), s);
        }
        let mut sorted = sites.clone();
        sorted.sort();
        assert_eq!(sorted, sites);
    }

    #[test]
    fn linear_offset_matches_index_difference() {
        let b = LatticeBox::new(vec![0, 0, 0], vec![3, 4, 5]).unwrap();
        let v = [1, 2, 3];
        let o = [1, -1, 1];
        let w = [2, 1, 4];
        let diff = b.index_of(&w).unwrap() as isize - b.index_of(&v).unwrap() as isize;
        assert_eq!(b.linear_offset(&o), diff);
    }

    #[test]
    fn rejects_inverted_and_mismatched_bounds() {
        assert!(LatticeBox::new(vec![0], vec![-1]).is_err());
        assert!(LatticeBox::new(vec![0, 0], vec![1]).is_err());
        assert!(LatticeBox::new(vec![], vec![]).is_err());
    }

    #[test]
    fn centered_box_has_odd_side() {
        let b = LatticeBox::centered(2, 2);
        assert_eq!(b.len(), 25);
        assert!(b.contains(&[-2, 2]));
        assert!(!b.contains(&[3, 0]));
    }
}
