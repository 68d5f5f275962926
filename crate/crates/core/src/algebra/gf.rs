//! Finite fields GF(p^e) of odd characteristic.
//!
//! Elements are identified by their rank: the coefficient vector
//! `c_0 + c_1 x + ... + c_{e-1} x^{e-1}` read as the base-p integer
//! `Σ c_i p^i`. Rank order is the canonical enumeration order used by the
//! design generator; ranks `0..p` are the prime subfield.

use std::sync::Arc;

use crate::error::{Error, Result};

/// Largest field the crate will build tables for.
pub const DEFAULT_FIELD_BUDGET: u64 = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GfElem(pub u32);

impl GfElem {
    pub fn rank(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug)]
pub struct GfField {
    p: u32,
    e: u32,
    size: u32,
    /// Monic modulus, low degree first, length e + 1.
    modulus: Vec<u32>,
    exp: Vec<u32>,
    log: Vec<u32>,
}

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

/// Splits `q` as `p^e` with `p` prime.
pub fn prime_power(q: u64) -> Option<(u64, u32)> {
    if q < 2 {
        return None;
    }
    let mut p = 2;
    while p * p <= q && q % p != 0 {
        p += 1;
    }
    if q % p != 0 {
        p = q;
    }
    let (mut rest, mut e) = (q, 0);
    while rest % p == 0 {
        rest /= p;
        e += 1;
    }
    (rest == 1).then_some((p, e))
}

pub fn is_odd_prime_power(q: u64) -> bool {
    matches!(prime_power(q), Some((p, _)) if p % 2 == 1)
}

/// Builds GF(p^e) from the lexicographically smallest monic irreducible of degree `e`.
pub fn gf_make(p: u64, e: u32) -> Result<Arc<GfField>> {
    if !is_prime(p) || p == 2 {
        return Err(Error::domain(format!("characteristic {p} is not an odd prime")));
    }
    if e == 0 {
        return Err(Error::domain("extension degree must be at least 1"));
    }
    let size = p
        .checked_pow(e)
        .filter(|&s| s <= DEFAULT_FIELD_BUDGET)
        .ok_or_else(|| Error::Resource(format!("GF({p}^{e}) exceeds the field size budget")))?;
    let p = p as u32;
    let modulus = smallest_irreducible(p, e as usize);
    let mut field = GfField { p, e, size: size as u32, modulus, exp: Vec::new(), log: Vec::new() };
    field.build_log_tables()?;
    Ok(Arc::new(field))
}

/// Builds GF(q) for an odd prime power `q`.
pub fn gf_of_order(q: u64) -> Result<Arc<GfField>> {
    match prime_power(q) {
        Some((p, e)) if p % 2 == 1 => gf_make(p, e),
        _ => Err(Error::domain(format!("{q} is not an odd prime power"))),
    }
}

impl GfField {
    pub fn characteristic(&self) -> u32 {
        self.p
    }

    pub fn degree(&self) -> u32 {
        self.e
    }

    pub fn size(&self) -> usize {
        self.size as usize
    }

    pub fn modulus(&self) -> &[u32] {
        &self.modulus
    }

    pub fn zero(&self) -> GfElem {
        GfElem(0)
    }

    pub fn one(&self) -> GfElem {
        GfElem(1)
    }

    /// The element of the given rank.
    pub fn element(&self, rank: usize) -> GfElem {
        assert!(rank < self.size(), "rank {rank} outside GF({})", self.size);
        GfElem(rank as u32)
    }

    pub fn elements(&self) -> impl Iterator<Item = GfElem> {
        (0..self.size).map(GfElem)
    }

    pub fn coeffs(&self, x: GfElem) -> Vec<u32> {
        let mut v = x.0;
        (0..self.e)
            .map(|_| {
                let c = v % self.p;
                v /= self.p;
                c
            })
            .collect()
    }

    fn from_coeffs(&self, c: &[u32]) -> GfElem {
        GfElem(c.iter().rev().fold(0, |acc, &d| acc * self.p + d))
    }

    pub fn add(&self, x: GfElem, y: GfElem) -> GfElem {
        if self.e == 1 {
            return GfElem((x.0 + y.0) % self.p);
        }
        let (mut a, mut b, mut out, mut place) = (x.0, y.0, 0, 1);
        for _ in 0..self.e {
            out += ((a % self.p + b % self.p) % self.p) * place;
            a /= self.p;
            b /= self.p;
            place *= self.p;
        }
        GfElem(out)
    }

    pub fn neg(&self, x: GfElem) -> GfElem {
        let (mut a, mut out, mut place) = (x.0, 0, 1);
        for _ in 0..self.e {
            out += ((self.p - a % self.p) % self.p) * place;
            a /= self.p;
            place *= self.p;
        }
        GfElem(out)
    }

    pub fn sub(&self, x: GfElem, y: GfElem) -> GfElem {
        self.add(x, self.neg(y))
    }

    pub fn mul(&self, x: GfElem, y: GfElem) -> GfElem {
        if x.0 == 0 || y.0 == 0 {
            return GfElem(0);
        }
        let n = self.size - 1;
        let l = (self.log[x.0 as usize] + self.log[y.0 as usize]) % n;
        GfElem(self.exp[l as usize])
    }

    pub fn inv(&self, x: GfElem) -> Result<GfElem> {
        if x.0 == 0 {
            return Err(Error::arithmetic("zero has no inverse in GF(q)"));
        }
        let n = self.size - 1;
        let l = (n - self.log[x.0 as usize]) % n;
        Ok(GfElem(self.exp[l as usize]))
    }

    pub fn pow(&self, x: GfElem, k: u64) -> GfElem {
        if k == 0 {
            return self.one();
        }
        if x.0 == 0 {
            return x;
        }
        let n = (self.size - 1) as u64;
        GfElem(self.exp[((self.log[x.0 as usize] as u64 * (k % n)) % n) as usize])
    }

    /// Quadratic character: 1 for non-zero squares, −1 for non-squares, 0 at zero.
    pub fn chi(&self, x: GfElem) -> i8 {
        if x.0 == 0 {
            0
        } else if self.log[x.0 as usize] % 2 == 0 {
            1
        } else {
            -1
        }
    }

    /// Schoolbook product modulo the field polynomial; only used to build tables.
    fn mul_slow(&self, x: GfElem, y: GfElem) -> GfElem {
        let prod = poly_mul(&self.coeffs(x), &self.coeffs(y), self.p);
        let r = poly_rem(&prod, &self.modulus, self.p);
        let mut c = r;
        c.resize(self.e as usize, 0);
        self.from_coeffs(&c)
    }

    fn build_log_tables(&mut self) -> Result<()> {
        let n = self.size - 1;
        for cand in 1..self.size {
            let g = GfElem(cand);
            let mut exp = Vec::with_capacity(n as usize);
            let mut cur = self.one();
            let mut primitive = true;
            for i in 0..n {
                if i > 0 && cur == self.one() {
                    primitive = false;
                    break;
                }
                exp.push(cur.0);
                cur = self.mul_slow(cur, g);
            }
            if primitive && cur == self.one() {
                let mut log = vec![0u32; self.size as usize];
                for (i, &v) in exp.iter().enumerate() {
                    log[v as usize] = i as u32;
                }
                self.exp = exp;
                self.log = log;
                return Ok(());
            }
        }
        Err(Error::arithmetic("no primitive element found; modulus is not irreducible"))
    }
}

fn trim(mut a: Vec<u32>) -> Vec<u32> {
    while a.last() == Some(&0) {
        a.pop();
    }
    a
}

fn poly_mul(a: &[u32], b: &[u32], p: u32) -> Vec<u32> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0u64; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] = (out[i + j] + x as u64 * y as u64) % p as u64;
        }
    }
    trim(out.into_iter().map(|v| v as u32).collect())
}

fn inv_mod_p(a: u32, p: u32) -> u32 {
    // p is prime, so a^(p−2) is the inverse.
    let (mut base, mut e, mut acc) = (a as u64 % p as u64, p as u64 - 2, 1u64);
    while e > 0 {
        if e & 1 == 1 {
            acc = acc * base % p as u64;
        }
        base = base * base % p as u64;
        e >>= 1;
    }
    acc as u32
}

fn poly_rem(a: &[u32], m: &[u32], p: u32) -> Vec<u32> {
    let mut r = trim(a.to_vec());
    let m = trim(m.to_vec());
    let lead_inv = inv_mod_p(*m.last().expect("non-zero modulus"), p) as u64;
    while r.len() >= m.len() {
        let shift = r.len() - m.len();
        let f = (*r.last().unwrap() as u64 * lead_inv) % p as u64;
        for (i, &c) in m.iter().enumerate() {
            let sub = f * c as u64 % p as u64;
            r[shift + i] = ((r[shift + i] as u64 + p as u64 - sub) % p as u64) as u32;
        }
        r = trim(r);
    }
    r
}

fn poly_gcd(a: &[u32], b: &[u32], p: u32) -> Vec<u32> {
    let (mut a, mut b) = (trim(a.to_vec()), trim(b.to_vec()));
    while !b.is_empty() {
        let r = poly_rem(&a, &b, p);
        a = b;
        b = r;
    }
    a
}

fn poly_sub(a: &[u32], b: &[u32], p: u32) -> Vec<u32> {
    let n = a.len().max(b.len());
    let out = (0..n)
        .map(|i| {
            let x = *a.get(i).unwrap_or(&0);
            let y = *b.get(i).unwrap_or(&0);
            (x + p - y) % p
        })
        .collect();
    trim(out)
}

/// `base^(p^i) mod m` by repeated p-th powering.
fn frobenius_power(m: &[u32], p: u32, i: usize) -> Vec<u32> {
    let mut cur = vec![0, 1];
    for _ in 0..i {
        let mut acc = vec![1];
        let mut base = cur.clone();
        let mut e = p;
        while e > 0 {
            if e & 1 == 1 {
                acc = poly_rem(&poly_mul(&acc, &base, p), m, p);
            }
            base = poly_rem(&poly_mul(&base, &base, p), m, p);
            e >>= 1;
        }
        cur = acc;
    }
    cur
}

pub(crate) fn is_irreducible(f: &[u32], p: u32) -> bool {
    let f = trim(f.to_vec());
    let e = f.len() - 1;
    if e == 1 {
        return true;
    }
    let has_root = (0..p).any(|x| {
        let v = f.iter().rev().fold(0u64, |acc, &c| (acc * x as u64 + c as u64) % p as u64);
        v == 0
    });
    if has_root {
        return false;
    }
    if e <= 3 {
        return true;
    }
    // Degree ≥ 4: no factor of degree i ≤ e/2 ⇔ gcd(f, x^(p^i) − x) = 1 for all such i.
    (1..=e / 2).all(|i| {
        let xi = frobenius_power(&f, p, i);
        let g = poly_gcd(&f, &poly_sub(&xi, &[0, 1], p), p);
        g.len() == 1
    })
}

fn smallest_irreducible(p: u32, e: usize) -> Vec<u32> {
    let count = (p as u64).pow(e as u32);
    for low in 0..count {
        let mut c = Vec::with_capacity(e + 1);
        let mut v = low;
        for _ in 0..e {
            c.push((v % p as u64) as u32);
            v /= p as u64;
        }
        c.push(1);
        if is_irreducible(&c, p) {
            return c;
        }
    }
    unreachable!("irreducible polynomials of every degree exist")
}
