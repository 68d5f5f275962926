//! Real Hadamard matrices: Sylvester, Paley I/II and Kronecker products.
//!
//! All constructors return matrices normalized so the first row and first
//! column are all `+1`, and every result is checked with [`is_hadamard`]
//! before it is handed out.

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::algebra::gf::{gf_of_order, prime_power};
use crate::error::{Error, Result};
use crate::par::{self, Execution};

/// Default cap on matrix orders.
pub const DEFAULT_ORDER_BUDGET: usize = 4096;

static ORDER_BUDGET: AtomicUsize = AtomicUsize::new(0);

/// Current order cap. Read once from `ARMUB_SIZE_BUDGET`, else [`DEFAULT_ORDER_BUDGET`].
pub fn order_budget() -> usize {
    match ORDER_BUDGET.load(Ordering::Relaxed) {
        0 => {
            let b = std::env::var("ARMUB_SIZE_BUDGET")
                .ok()
                .and_then(|v| v.trim().parse::<usize>().ok())
                .filter(|&b| b > 0)
                .unwrap_or(DEFAULT_ORDER_BUDGET);
            ORDER_BUDGET.store(b, Ordering::Relaxed);
            b
        }
        b => b,
    }
}

pub fn set_order_budget(budget: usize) {
    ORDER_BUDGET.store(budget.max(1), Ordering::Relaxed);
}

fn check_budget(order: usize) -> Result<()> {
    let b = order_budget();
    if order > b {
        return Err(Error::Resource(format!("order {order} exceeds the size budget {b}")));
    }
    Ok(())
}

/// Square matrix with entries in {+1, −1}.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignMatrix {
    order: usize,
    entries: Vec<i8>,
    verified: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HadamardJson {
    pub order: usize,
    pub rows: Vec<Vec<i8>>,
}

impl SignMatrix {
    pub fn from_fn(order: usize, f: impl Fn(usize, usize) -> i8) -> Self {
        let entries = (0..order * order).map(|x| f(x / order, x % order)).collect();
        Self { order, entries, verified: false }
    }

    pub fn from_rows(rows: &[Vec<i8>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Structural("sign matrix must be square".into()));
        }
        if let Some(v) = rows.iter().flatten().find(|&&v| v != 1 && v != -1) {
            return Err(Error::domain(format!("entry {v} is not ±1")));
        }
        Ok(Self { order: n, entries: rows.concat(), verified: false })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn get(&self, i: usize, j: usize) -> i8 {
        self.entries[i * self.order + j]
    }

    pub fn row(&self, i: usize) -> &[i8] {
        &self.entries[i * self.order..(i + 1) * self.order]
    }

    pub fn to_rows(&self) -> Vec<Vec<i8>> {
        (0..self.order).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn is_verified(&self) -> bool {
        self.verified
    }

    /// Runs [`is_hadamard`] and sets the verified flag, or fails with the located violation.
    pub fn verified(mut self) -> Result<Self> {
        let check = is_hadamard(&self);
        match check.violation {
            None => {
                self.verified = true;
                Ok(self)
            }
            Some(v) => Err(Error::Certification(format!("not Hadamard: {v}"))),
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.order, |i, j| self.get(j, i))
    }

    /// Negates rows and then columns so that the first row and column are all `+1`.
    pub fn normalized(&self) -> Self {
        let n = self.order;
        let rs: Vec<i8> = (0..n).map(|i| self.get(i, 0)).collect();
        let cs: Vec<i8> = (0..n).map(|j| self.get(0, j) * rs[0]).collect();
        Self { order: n, entries: (0..n * n).map(|x| self.entries[x] * rs[x / n] * cs[x % n]).collect(), verified: self.verified }
    }

    pub fn is_normalized(&self) -> bool {
        (0..self.order).all(|i| self.get(i, 0) == 1 && self.get(0, i) == 1)
    }

    pub fn to_json(&self) -> HadamardJson {
        HadamardJson { order: self.order, rows: self.to_rows() }
    }

    /// Parses and re-verifies; a non-Hadamard payload is a parse error.
    pub fn from_json(j: &HadamardJson) -> Result<Self> {
        let m = Self::from_rows(&j.rows).map_err(|e| Error::Parse(e.to_string()))?;
        if m.order != j.order {
            return Err(Error::Parse(format!("declared order {} but {} rows", j.order, m.order)));
        }
        m.verified().map_err(|e| Error::Parse(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Violation {
    pub row: usize,
    pub col: usize,
    pub value: i64,
    pub expected: i64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(H·Hᵀ)[{},{}] = {} (expected {})", self.row, self.col, self.value, self.expected)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HadamardCheck {
    pub order: usize,
    /// First row-major entry of `H·Hᵀ − order·I` that is non-zero.
    pub violation: Option<Violation>,
}

impl HadamardCheck {
    pub fn ok(&self) -> bool {
        self.violation.is_none()
    }
}

/// Exact check of `H·Hᵀ = order·I` over the integers.
pub fn is_hadamard(m: &SignMatrix) -> HadamardCheck {
    is_hadamard_with(m, Execution::default())
}

pub fn is_hadamard_with(m: &SignMatrix, exec: Execution) -> HadamardCheck {
    let n = m.order;
    let words = n.div_ceil(64);
    // bit set where the entry is −1; ⟨r_i, r_j⟩ = n − 2·popcount(r_i xor r_j)
    let packed: Vec<Vec<u64>> = (0..n)
        .map(|i| {
            let mut w = vec![0u64; words];
            for (j, &v) in m.row(i).iter().enumerate() {
                if v < 0 {
                    w[j / 64] |= 1 << (j % 64);
                }
            }
            w
        })
        .collect();
    let per_row = par::map_range(exec, n, |i| {
        (0..n).find_map(|j| {
            let diff: u32 = packed[i].iter().zip(&packed[j]).map(|(a, b)| (a ^ b).count_ones()).sum();
            let value = n as i64 - 2 * diff as i64;
            let expected = if i == j { n as i64 } else { 0 };
            (value != expected).then_some(Violation { row: i, col: j, value, expected })
        })
    });
    HadamardCheck { order: n, violation: per_row.into_iter().flatten().next() }
}

/// Order `2^doublings` matrix from repeated `H ↦ H ⊗ [[1,1],[1,−1]]`.
pub fn sylvester(doublings: u32) -> Result<SignMatrix> {
    let order = 1usize
        .checked_shl(doublings)
        .filter(|&o| o.trailing_zeros() == doublings)
        .ok_or_else(|| Error::Resource(format!("2^{doublings} overflows")))?;
    check_budget(order)?;
    // H[i][j] = (−1)^popcount(i & j)
    SignMatrix::from_fn(order, |i, j| if (i & j).count_ones() % 2 == 0 { 1 } else { -1 }).verified()
}

/// Paley type I (order q+1, q ≡ 3 mod 4) or type II (order 2(q+1), q ≡ 1 mod 4).
pub fn paley(q: u64) -> Result<SignMatrix> {
    let field = gf_of_order(q)?;
    let q = q as usize;
    let order = if q % 4 == 3 { q + 1 } else { 2 * (q + 1) };
    check_budget(order)?;
    let elems: Vec<_> = field.elements().collect();
    // chi(a_j − a_i) by rank
    let chi = |i: usize, j: usize| field.chi(field.sub(elems[j], elems[i]));
    // Conference-style core: c(0,0)=0, c(0,j)=1, c(i,0)=±1, c(i,j)=Q.
    let first_col: i8 = if q % 4 == 3 { -1 } else { 1 };
    let c = |i: usize, j: usize| -> i8 {
        match (i, j) {
            (0, 0) => 0,
            (0, _) => 1,
            (_, 0) => first_col,
            _ => chi(i - 1, j - 1),
        }
    };
    let h = if q % 4 == 3 {
        SignMatrix::from_fn(order, |i, j| if i == j { 1 } else { c(i, j) })
    } else {
        const B: [[i8; 2]; 2] = [[1, 1], [1, -1]];
        const A: [[i8; 2]; 2] = [[1, -1], [-1, -1]];
        SignMatrix::from_fn(order, |i, j| {
            let (bi, bj, ii, jj) = (i / 2, j / 2, i % 2, j % 2);
            if bi == bj {
                B[ii][jj]
            } else {
                c(bi, bj) * A[ii][jj]
            }
        })
    };
    h.normalized().verified()
}

pub fn kronecker(h1: &SignMatrix, h2: &SignMatrix) -> Result<SignMatrix> {
    let order = h1
        .order
        .checked_mul(h2.order)
        .ok_or_else(|| Error::Resource("Kronecker order overflows".into()))?;
    check_budget(order)?;
    let n2 = h2.order;
    SignMatrix::from_fn(order, |i, j| h1.get(i / n2, j / n2) * h2.get(i % n2, j % n2)).verified()
}

/// One factor of a Kronecker recipe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    Sylvester { doublings: u32 },
    PaleyI { q: u64 },
    PaleyII { q: u64 },
}

impl Generator {
    pub fn order(self) -> usize {
        match self {
            Generator::Sylvester { doublings } => 1 << doublings,
            Generator::PaleyI { q } => q as usize + 1,
            Generator::PaleyII { q } => 2 * (q as usize + 1),
        }
    }

    pub fn build(self) -> Result<SignMatrix> {
        match self {
            Generator::Sylvester { doublings } => sylvester(doublings),
            Generator::PaleyI { q } | Generator::PaleyII { q } => paley(q),
        }
    }

    /// The first generator producing `order` directly, in preference order.
    fn direct(order: usize) -> Option<Self> {
        if order.is_power_of_two() {
            return Some(Generator::Sylvester { doublings: order.trailing_zeros() });
        }
        let odd_pp = |q: usize| matches!(prime_power(q as u64), Some((p, _)) if p % 2 == 1);
        if order >= 4 && (order - 1) % 4 == 3 && odd_pp(order - 1) {
            return Some(Generator::PaleyI { q: order as u64 - 1 });
        }
        if order % 2 == 0 && order >= 4 && (order / 2 - 1) % 4 == 1 && odd_pp(order / 2 - 1) {
            return Some(Generator::PaleyII { q: order as u64 / 2 - 1 });
        }
        None
    }
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Generator::Sylvester { doublings } => write!(f, "sylvester({doublings})"),
            Generator::PaleyI { q } => write!(f, "paley-i({q})"),
            Generator::PaleyII { q } => write!(f, "paley-ii({q})"),
        }
    }
}

pub fn recipe_string(recipe: &[Generator]) -> String {
    recipe.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ⊗ ")
}

fn check_legal_order(order: usize) -> Result<()> {
    if order == 0 || (order > 2 && order % 4 != 0) {
        return Err(Error::domain(format!("no real Hadamard matrix of order {order} exists")));
    }
    Ok(())
}

/// Kronecker recipe for `order` with the fewest factors.
///
/// Ties go to the smallest leading divisor; a direct generator is preferred
/// as Sylvester, then Paley I, then Paley II.
pub fn plan_hadamard(order: usize) -> Result<Vec<Generator>> {
    check_legal_order(order)?;
    check_budget(order)?;
    let mut memo = HashMap::new();
    let mut attempted = Vec::new();
    plan_rec(order, &mut memo, &mut attempted)
        .ok_or(Error::NotConstructible { order, attempted })
}

fn plan_rec(order: usize, memo: &mut HashMap<usize, Option<Vec<Generator>>>, attempted: &mut Vec<usize>) -> Option<Vec<Generator>> {
    if let Some(hit) = memo.get(&order) {
        return hit.clone();
    }
    if !attempted.contains(&order) {
        attempted.push(order);
    }
    let mut best = Generator::direct(order).map(|g| vec![g]);
    if best.is_none() {
        for a in 2..order {
            if order % a != 0 || check_legal_order(a).is_err() || check_legal_order(order / a).is_err() {
                continue;
            }
            let (Some(x), Some(y)) = (plan_rec(a, memo, attempted), plan_rec(order / a, memo, attempted)) else {
                continue;
            };
            if best.as_ref().map_or(true, |b| x.len() + y.len() < b.len()) {
                best = Some([x, y].concat());
            }
        }
    }
    memo.insert(order, best.clone());
    best
}

/// Builds a verified, normalized Hadamard matrix of the requested order.
pub fn find_hadamard(order: usize) -> Result<SignMatrix> {
    let recipe = plan_hadamard(order)?;
    build_recipe(&recipe)
}

pub fn build_recipe(recipe: &[Generator]) -> Result<SignMatrix> {
    let mut acc = sylvester(0)?;
    for g in recipe {
        acc = kronecker(&acc, &g.build()?)?;
    }
    Ok(acc)
}
