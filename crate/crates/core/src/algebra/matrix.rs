use crate::error::{Error, Result};
use crate::par::{self, Execution};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Zero};

use super::quad::QuadNum;
use super::rational::Rational;

/// Dense row-major matrix over a single field Q(√m).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuadMatrix {
    rows: usize,
    cols: usize,
    m: u64,
    data: Vec<QuadNum>,
}

impl QuadMatrix {
    pub fn zeros(rows: usize, cols: usize, m: u64) -> Self {
        Self { rows, cols, m, data: vec![QuadNum::zero(m); rows * cols] }
    }

    pub fn identity(n: usize, m: u64) -> Self {
        let mut out = Self::zeros(n, n, m);
        for i in 0..n {
            out.data[i * n + i] = QuadNum::one(m);
        }
        out
    }

    pub fn from_fn(rows: usize, cols: usize, m: u64, f: impl Fn(usize, usize) -> QuadNum) -> Self {
        let data = (0..rows * cols).map(|x| f(x / cols, x % cols)).collect();
        Self { rows, cols, m, data }
    }

    pub fn from_rows(rows: Vec<Vec<QuadNum>>, m: u64) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Structural("ragged matrix rows".into()));
        }
        if rows.iter().flatten().any(|x| x.m() != m) {
            return Err(Error::Structural(format!("entry outside Q(√{m})")));
        }
        Ok(Self { rows: r, cols: c, m, data: rows.into_iter().flatten().collect() })
    }

    /// Integer matrix embedded in Q(√m).
    pub fn from_ints(rows: usize, cols: usize, m: u64, f: impl Fn(usize, usize) -> i64) -> Self {
        Self::from_fn(rows, cols, m, |i, j| QuadNum::from_int(f(i, j), m))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn radicand(&self) -> u64 {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> &QuadNum {
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: QuadNum) {
        assert_eq!(v.m(), self.m);
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[QuadNum] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn entries(&self) -> impl Iterator<Item = ((usize, usize), &QuadNum)> {
        self.data.iter().enumerate().map(|(x, v)| ((x / self.cols, x % self.cols), v))
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, self.m, |i, j| self.get(j, i).clone())
    }

    pub fn map(&self, f: impl Fn(&QuadNum) -> QuadNum) -> Self {
        Self { rows: self.rows, cols: self.cols, m: self.m, data: self.data.iter().map(f).collect() }
    }

    pub fn scale(&self, s: &QuadNum) -> Self {
        self.map(|x| x * s)
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            m: self.m,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.map(|x| -x))
    }

    pub fn mul(&self, other: &Self) -> Self {
        self.mul_with(other, Execution::Sequential)
    }

    /// Product with rows computed on the chosen executor. Zero entries are skipped.
    pub fn mul_with(&self, other: &Self, exec: Execution) -> Self {
        assert_eq!(self.cols, other.rows, "dimension mismatch");
        assert_eq!(self.m, other.m, "radicand mismatch");
        let rows: Vec<Vec<QuadNum>> = par::map_range(exec, self.rows, |i| {
            let mut out = vec![QuadNum::zero(self.m); other.cols];
            for (l, a) in self.row(i).iter().enumerate() {
                if a.is_zero() {
                    continue;
                }
                for (j, b) in other.row(l).iter().enumerate() {
                    if !b.is_zero() {
                        out[j] = &out[j] + &(a * b);
                    }
                }
            }
            out
        });
        Self { rows: self.rows, cols: other.cols, m: self.m, data: rows.into_iter().flatten().collect() }
    }

    /// First entry (row-major) where `self` differs from the identity.
    pub fn identity_violation(&self) -> Option<(usize, usize)> {
        if self.rows != self.cols {
            return Some((0, 0));
        }
        self.entries().find_map(|((i, j), v)| {
            let ok = if i == j { *v == QuadNum::one(self.m) } else { v.is_zero() };
            (!ok).then_some((i, j))
        })
    }

    pub fn is_identity(&self) -> bool {
        self.identity_violation().is_none()
    }

    /// `Y·Yᵀ` computed exactly; entry `(i, j)` is the dot product of rows `i` and `j`.
    pub fn gram_rows(&self, exec: Execution) -> Self {
        let n = self.rows;
        let rows: Vec<Vec<QuadNum>> = par::map_range(exec, n, |i| {
            (0..n)
                .map(|j| {
                    self.row(i).iter().zip(self.row(j)).fold(QuadNum::zero(self.m), |acc, (a, b)| {
                        if a.is_zero() || b.is_zero() {
                            acc
                        } else {
                            &acc + &(a * b)
                        }
                    })
                })
                .collect()
        });
        Self { rows: n, cols: n, m: self.m, data: rows.into_iter().flatten().collect() }
    }

    /// Exact check of `Y·Yᵀ = I` and `Yᵀ·Y = I`; returns the first violation.
    ///
    /// Entries are brought to a common denominator `L`, so each dot product is
    /// a pair of integer sums compared against `(L², 0)` or `(0, 0)`.
    pub fn orthogonality_violation(&self, exec: Execution) -> Option<(usize, usize)> {
        if self.rows != self.cols {
            return Some((0, 0));
        }
        let l = self.data.iter().fold(BigInt::one(), |acc, v| acc.lcm(v.a().denom()).lcm(v.b().denom()));
        let scaled = |r: &Rational| r.numer() * (&l / r.denom());
        let ints: Vec<(BigInt, BigInt)> = self.data.iter().map(|v| (scaled(v.a()), scaled(v.b()))).collect();
        let m = BigInt::from(self.m);
        let l2 = &l * &l;
        let n = self.rows;
        let first = |cols: bool| -> Option<(usize, usize)> {
            let at = |r: usize, c: usize| if cols { c * n + r } else { r * n + c };
            par::map_range(exec, n, |i| {
                (i..n).find(|&j| {
                    let (mut ra, mut rb) = (BigInt::zero(), BigInt::zero());
                    for c in 0..n {
                        let (a1, b1) = &ints[at(i, c)];
                        let (a2, b2) = &ints[at(j, c)];
                        ra += a1 * a2 + &m * b1 * b2;
                        rb += a1 * b2 + b1 * a2;
                    }
                    let want = if i == j { &l2 } else { &BigInt::ZERO };
                    ra != *want || !rb.is_zero()
                })
                .map(|j| (i, j))
            })
            .into_iter()
            .flatten()
            .next()
        };
        first(false).or_else(|| first(true))
    }

    /// Inverse by exact Gauss–Jordan elimination.
    pub fn inverse(&self) -> Result<Self> {
        if self.rows != self.cols {
            return Err(Error::Structural("inverse of a non-square matrix".into()));
        }
        let n = self.rows;
        let mut a = self.clone();
        let mut inv = Self::identity(n, self.m);
        for col in 0..n {
            let pivot = (col..n)
                .find(|&r| !a.get(r, col).is_zero())
                .ok_or_else(|| Error::arithmetic("singular matrix"))?;
            if pivot != col {
                a.swap_rows(pivot, col);
                inv.swap_rows(pivot, col);
            }
            let p_inv = a.get(col, col).inv()?;
            a.scale_row(col, &p_inv);
            inv.scale_row(col, &p_inv);
            for r in 0..n {
                if r != col && !a.get(r, col).is_zero() {
                    let f = a.get(r, col).clone();
                    a.axpy_row(r, col, &f);
                    inv.axpy_row(r, col, &f);
                }
            }
        }
        Ok(inv)
    }

    fn swap_rows(&mut self, r1: usize, r2: usize) {
        for j in 0..self.cols {
            self.data.swap(r1 * self.cols + j, r2 * self.cols + j);
        }
    }

    fn scale_row(&mut self, r: usize, s: &QuadNum) {
        for j in 0..self.cols {
            let v = self.get(r, j) * s;
            self.data[r * self.cols + j] = v;
        }
    }

    /// row[r] -= f · row[src]
    fn axpy_row(&mut self, r: usize, src: usize, f: &QuadNum) {
        for j in 0..self.cols {
            let v = self.get(r, j) - &(f * self.get(src, j));
            self.data[r * self.cols + j] = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::rational::frac;

    #[test]
    fn inverse_over_quadratic_field() {
        // [[1 + 1/√8, 1/√8], [1/√8, 1 − 1/√8]]
        let m = 8;
        let r = QuadNum::new(frac(0, 1), frac(1, 8), m).unwrap(); // √8/8
        let one = QuadNum::one(m);
        let a = QuadMatrix::from_rows(vec![vec![&one + &r, r.clone()], vec![r.clone(), &one - &r]], m).unwrap();
        let inv = a.inverse().unwrap();
        assert!(a.mul(&inv).is_identity());
        assert!(inv.mul(&a).is_identity());
    }

    #[test]
    fn singular_is_arithmetic_error() {
        let a = QuadMatrix::from_ints(2, 2, 2, |_, _| 1);
        assert!(matches!(a.inverse(), Err(Error::Arithmetic(_))));
    }

    #[test]
    fn orthogonality_check_locates_violation() {
        let h = QuadMatrix::from_ints(2, 2, 2, |i, j| if i == 1 && j == 1 { -1 } else { 1 });
        let s = QuadNum::new(frac(0, 1), frac(1, 2), 2).unwrap(); // 1/√2
        assert!(h.scale(&s).orthogonality_violation(Execution::Parallel).is_none());
        assert_eq!(h.orthogonality_violation(Execution::Sequential), Some((0, 0)));
    }
}
