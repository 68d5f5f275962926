//! ε-Hadamard matrices of order `k = 4n − t` from a Hadamard matrix of order `4n`.
//!
//! Rows and columns of `H` are split so that `H = [[U, V], [W, D]]` with `U`
//! of size `t×t`. With `α = √(4n)`:
//!
//! ```text
//! Y1 = (1/α)·(D − W(αI + U)⁻¹V)
//! Y2 = (1/α)·(D + W(αI − U)⁻¹V)
//! ```
//!
//! are orthogonal of order `4n − t`. `(αI ± U)⁻¹` is computed either by
//! elimination ([`schur_reduce`]) or as a polynomial in `U` when `U`
//! satisfies a known low-degree relation ([`closed_form`]).

use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::algebra::quad::{QuadJson, QuadNum};
use crate::algebra::rational::{frac, int};
use crate::algebra::QuadMatrix;
use crate::error::{Error, Result};
use crate::hadamard::SignMatrix;
use crate::par::{self, Execution};

/// Default cap on the number of block splits a search may evaluate.
pub const DEFAULT_SPLIT_CAP: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    Y1,
    Y2,
}

impl Variant {
    /// Sign `σ` in `αI + σU`.
    pub fn sigma(self) -> i64 {
        match self {
            Variant::Y1 => 1,
            Variant::Y2 => -1,
        }
    }

    /// Sign in front of the `W(…)V` term.
    fn outer(self) -> i64 {
        -self.sigma()
    }

    pub fn both() -> [Variant; 2] {
        [Variant::Y2, Variant::Y1]
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Y1 => "Y1",
            Variant::Y2 => "Y2",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchScope {
    #[default]
    CornerOnly,
    RowColPermutations,
    PermutationsAndNegations,
}

impl std::str::FromStr for SearchScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "corner-only" | "corner" => Ok(SearchScope::CornerOnly),
            "row-col-permutations" | "permutations" => Ok(SearchScope::RowColPermutations),
            "permutations-and-negations" | "negations" => Ok(SearchScope::PermutationsAndNegations),
            _ => Err(Error::domain(format!("unknown search scope {s:?}"))),
        }
    }
}

impl fmt::Display for SearchScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SearchScope::CornerOnly => "corner-only",
            SearchScope::RowColPermutations => "row-col-permutations",
            SearchScope::PermutationsAndNegations => "permutations-and-negations",
        })
    }
}

/// `√(4n)` and the radicand of the field that holds it.
pub fn alpha(four_n: u64) -> QuadNum {
    QuadNum::sqrt_of(four_n)
}

fn inv_alpha(four_n: u64) -> QuadNum {
    alpha(four_n).scale(&frac(1, four_n as i64))
}

fn field_of(four_n: u64) -> u64 {
    QuadNum::field_radicand_for(four_n)
}

fn q_int(v: i64, m: u64) -> QuadNum {
    QuadNum::from_int(v, m)
}

/// Row and column selection defining `U`, with optional sign toggles on the
/// selected rows and columns. The source matrix is never copied.
#[derive(Debug, Clone)]
pub struct BlockSplit {
    source: Arc<SignMatrix>,
    t: usize,
    rows: Vec<usize>,
    cols: Vec<usize>,
    row_signs: Vec<i8>,
    col_signs: Vec<i8>,
    rest_rows: Vec<usize>,
    rest_cols: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitJson {
    pub source_order: usize,
    pub t: usize,
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub row_signs: Vec<i8>,
    pub col_signs: Vec<i8>,
}

fn complement(n: usize, picked: &[usize]) -> Vec<usize> {
    (0..n).filter(|i| !picked.contains(i)).collect()
}

impl BlockSplit {
    pub fn new(source: Arc<SignMatrix>, rows: Vec<usize>, cols: Vec<usize>) -> Result<Self> {
        let t = rows.len();
        Self::with_signs(source, rows, cols, vec![1; t], vec![1; t])
    }

    pub fn with_signs(
        source: Arc<SignMatrix>,
        rows: Vec<usize>,
        cols: Vec<usize>,
        row_signs: Vec<i8>,
        col_signs: Vec<i8>,
    ) -> Result<Self> {
        if !source.is_verified() {
            return Err(Error::domain("source matrix is not a verified Hadamard matrix"));
        }
        let n = source.order();
        let t = rows.len();
        if !(1..=3).contains(&t) {
            return Err(Error::domain(format!("t = {t} is outside {{1, 2, 3}}")));
        }
        if cols.len() != t || row_signs.len() != t || col_signs.len() != t {
            return Err(Error::Structural("row/column selections and signs must all have length t".into()));
        }
        for sel in [&rows, &cols] {
            if sel.windows(2).any(|w| w[0] >= w[1]) || sel.iter().any(|&i| i >= n) {
                return Err(Error::Structural(format!("index set {sel:?} is not strictly increasing within 0..{n}")));
            }
        }
        if row_signs.iter().chain(&col_signs).any(|&s| s != 1 && s != -1) {
            return Err(Error::Structural("signs must be ±1".into()));
        }
        if t >= n {
            return Err(Error::domain(format!("t = {t} leaves nothing of an order-{n} matrix")));
        }
        let rest_rows = complement(n, &rows);
        let rest_cols = complement(n, &cols);
        Ok(Self { source, t, rows, cols, row_signs, col_signs, rest_rows, rest_cols })
    }

    /// Rebuilds a recorded split over `source`.
    pub fn from_json(source: Arc<SignMatrix>, j: &SplitJson) -> Result<Self> {
        if j.source_order != source.order() || j.rows.len() != j.t {
            return Err(Error::Parse(format!("split recorded for order {} does not fit order {}", j.source_order, source.order())));
        }
        Self::with_signs(source, j.rows.clone(), j.cols.clone(), j.row_signs.clone(), j.col_signs.clone())
    }

    /// `U` is the leading `t×t` block.
    pub fn corner(source: Arc<SignMatrix>, t: usize) -> Result<Self> {
        Self::new(source, (0..t).collect(), (0..t).collect())
    }

    pub fn source(&self) -> &Arc<SignMatrix> {
        &self.source
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn four_n(&self) -> u64 {
        self.source.order() as u64
    }

    pub fn k(&self) -> usize {
        self.source.order() - self.t
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn cols(&self) -> &[usize] {
        &self.cols
    }

    pub fn u_entry(&self, p: usize, q: usize) -> i64 {
        (self.source.get(self.rows[p], self.cols[q]) * self.row_signs[p] * self.col_signs[q]) as i64
    }

    pub fn v_entry(&self, p: usize, c: usize) -> i64 {
        (self.source.get(self.rows[p], self.rest_cols[c]) * self.row_signs[p]) as i64
    }

    pub fn w_entry(&self, r: usize, q: usize) -> i64 {
        (self.source.get(self.rest_rows[r], self.cols[q]) * self.col_signs[q]) as i64
    }

    pub fn d_entry(&self, r: usize, c: usize) -> i64 {
        self.source.get(self.rest_rows[r], self.rest_cols[c]) as i64
    }

    pub fn u(&self) -> Vec<Vec<i8>> {
        (0..self.t).map(|p| (0..self.t).map(|q| self.u_entry(p, q) as i8).collect()).collect()
    }

    pub fn to_json(&self) -> SplitJson {
        SplitJson {
            source_order: self.source.order(),
            t: self.t,
            rows: self.rows.clone(),
            cols: self.cols.clone(),
            row_signs: self.row_signs.clone(),
            col_signs: self.col_signs.clone(),
        }
    }

    /// Lexicographic key: index sets first, then signs with `+1` before `−1`.
    fn key(&self) -> (Vec<usize>, Vec<usize>, Vec<bool>, Vec<bool>) {
        (
            self.rows.clone(),
            self.cols.clone(),
            self.row_signs.iter().map(|&s| s < 0).collect(),
            self.col_signs.iter().map(|&s| s < 0).collect(),
        )
    }

    fn check_t(&self) -> Result<()> {
        let t = self.t as u64;
        if t * t >= self.four_n() {
            return Err(Error::domain(format!("t = {t} is not below √{}", self.four_n())));
        }
        Ok(())
    }
}

/// Relation satisfied by `U`:
/// `U² = κI + γU` for `t ≤ 2`, `U³ = κI + γU + ϑU²` for `t = 3`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UClass {
    pub t: usize,
    pub kappa: i64,
    pub gamma: i64,
    pub theta: i64,
    /// The variant singled out as closest to Hadamard, where one is named.
    pub preferred: Option<Variant>,
    pub label: String,
}

impl UClass {
    pub fn relation(&self) -> String {
        let lin = |c: i64, x: &str| match c {
            0 => String::new(),
            1 => format!(" + {x}"),
            -1 => format!(" − {x}"),
            c if c < 0 => format!(" − {}{x}", -c),
            c => format!(" + {c}{x}"),
        };
        if self.t == 3 {
            format!("U³ = {}I{}{}", self.kappa, lin(self.gamma, "U"), lin(self.theta, "U²"))
        } else {
            format!("U² = {}I{}", self.kappa, lin(self.gamma, "U"))
        }
    }

    /// Checks the relation on `u` by direct integer arithmetic.
    pub fn holds_for(&self, u: &[Vec<i8>]) -> bool {
        let t = u.len();
        if t != self.t {
            return false;
        }
        let um = int_mat(u);
        let u2 = int_mul(&um, &um);
        let id = int_identity(t);
        let (lhs, rhs) = if t == 3 {
            (int_mul(&u2, &um), int_lin(&[(self.kappa, &id), (self.gamma, &um), (self.theta, &u2)]))
        } else {
            (u2, int_lin(&[(self.kappa, &id), (self.gamma, &um)]))
        };
        lhs == rhs
    }
}

type IntMat = Vec<Vec<i64>>;

fn int_mat(u: &[Vec<i8>]) -> IntMat {
    u.iter().map(|r| r.iter().map(|&v| v as i64).collect()).collect()
}

fn int_identity(t: usize) -> IntMat {
    (0..t).map(|i| (0..t).map(|j| (i == j) as i64).collect()).collect()
}

fn int_mul(a: &IntMat, b: &IntMat) -> IntMat {
    let inner = b.len();
    a.iter()
        .map(|row| (0..b[0].len()).map(|j| (0..inner).map(|l| row[l] * b[l][j]).sum()).collect())
        .collect()
}

fn int_lin(terms: &[(i64, &IntMat)]) -> IntMat {
    let (r, c) = (terms[0].1.len(), terms[0].1[0].len());
    (0..r).map(|i| (0..c).map(|j| terms.iter().map(|(s, m)| s * m[i][j]).sum()).collect()).collect()
}

/// U with `U³ = −U² + 4U + 4I`; Y1 is the closer variant.
pub const T3_CLASS_A: [[[i8; 3]; 3]; 12] = [
    [[1, 1, 1], [1, -1, 1], [1, 1, -1]],
    [[-1, 1, 1], [1, 1, 1], [1, 1, -1]],
    [[-1, 1, 1], [1, -1, 1], [1, 1, 1]],
    [[-1, -1, 1], [-1, 1, -1], [1, -1, -1]],
    [[1, -1, 1], [-1, -1, -1], [1, -1, -1]],
    [[-1, -1, 1], [-1, -1, -1], [1, -1, 1]],
    [[1, 1, -1], [1, -1, -1], [-1, -1, -1]],
    [[-1, 1, -1], [1, -1, -1], [-1, -1, 1]],
    [[-1, 1, -1], [1, 1, -1], [-1, -1, -1]],
    [[-1, -1, -1], [-1, -1, 1], [-1, 1, 1]],
    [[-1, -1, -1], [-1, 1, 1], [-1, 1, -1]],
    [[1, -1, -1], [-1, -1, 1], [-1, 1, -1]],
];

/// U with `U³ = U² + 4U − 4I`; Y2 is the closer variant.
pub const T3_CLASS_B: [[[i8; 3]; 3]; 8] = [
    [[1, -1, 1], [-1, 1, 1], [1, 1, -1]],
    [[1, 1, 1], [1, 1, -1], [1, -1, -1]],
    [[1, 1, -1], [1, 1, 1], [-1, 1, -1]],
    [[1, -1, -1], [-1, 1, -1], [-1, -1, -1]],
    [[1, -1, 1], [-1, -1, 1], [1, 1, 1]],
    [[1, 1, 1], [1, -1, -1], [1, -1, 1]],
    [[1, 1, -1], [1, -1, 1], [-1, 1, 1]],
    [[1, -1, -1], [-1, -1, -1], [-1, -1, 1]],
];

/// `U² = 2U − 2I`; Y2 is the closer variant.
pub const T2_CLASS_A: [[[i8; 2]; 2]; 2] = [[[1, -1], [1, 1]], [[1, 1], [-1, 1]]];

/// `U² = −2U − 2I`; Y1 is the closer variant.
pub const T2_CLASS_B: [[[i8; 2]; 2]; 2] = [[[-1, -1], [1, -1]], [[-1, 1], [-1, -1]]];

fn rows_of<const T: usize>(u: &[[i8; T]; T]) -> Vec<Vec<i8>> {
    u.iter().map(|r| r.to_vec()).collect()
}

/// Every `U` with a listed closed form, grouped as (t, relation label, members).
pub fn listed_classes() -> Vec<(usize, &'static str, Vec<Vec<Vec<i8>>>)> {
    vec![
        (2, "U² = 2U − 2I", T2_CLASS_A.iter().map(rows_of).collect()),
        (2, "U² = −2U − 2I", T2_CLASS_B.iter().map(rows_of).collect()),
        (3, "U³ = −U² + 4U + 4I", T3_CLASS_A.iter().map(rows_of).collect()),
        (3, "U³ = U² + 4U − 4I", T3_CLASS_B.iter().map(rows_of).collect()),
    ]
}

/// Relation and preferred variant for `u`, or `None` when no closed form is listed.
///
/// Every `t ≤ 2` sign matrix satisfies Cayley–Hamilton with `γ = tr U`,
/// `κ = −det U`. For `t = 3` only the twenty listed matrices are classified.
pub fn classify_u(u: &[Vec<i8>]) -> Result<Option<UClass>> {
    let t = u.len();
    if !(1..=3).contains(&t) {
        return Err(Error::domain(format!("t = {t} is outside {{1, 2, 3}}")));
    }
    if u.iter().any(|r| r.len() != t) || u.iter().flatten().any(|&v| v != 1 && v != -1) {
        return Err(Error::domain("U must be a square ±1 matrix"));
    }
    let class = match t {
        1 => {
            let s = u[0][0] as i64;
            // U = [s]: Y1 = (1/α)(D − WV/(α+s)) is the closer one when s = +1.
            let preferred = Some(if s == 1 { Variant::Y1 } else { Variant::Y2 });
            UClass { t, kappa: 0, gamma: s, theta: 0, preferred, label: format!("U = [{s}]") }
        }
        2 => {
            let tr = (u[0][0] + u[1][1]) as i64;
            let det = (u[0][0] * u[1][1] - u[0][1] * u[1][0]) as i64;
            let (kappa, gamma) = (-det, tr);
            let preferred = match (kappa, gamma) {
                (-2, 2) if T2_CLASS_A.iter().any(|m| rows_of(m) == u) => Some(Variant::Y2),
                (-2, -2) if T2_CLASS_B.iter().any(|m| rows_of(m) == u) => Some(Variant::Y1),
                _ => None,
            };
            let mut c = UClass { t, kappa, gamma, theta: 0, preferred, label: String::new() };
            c.label = c.relation();
            c
        }
        _ => {
            let (kappa, gamma, theta, preferred) = if T3_CLASS_A.iter().any(|m| rows_of(m) == u) {
                (4, 4, -1, Variant::Y1)
            } else if T3_CLASS_B.iter().any(|m| rows_of(m) == u) {
                (-4, 4, 1, Variant::Y2)
            } else {
                return Ok(None);
            };
            let mut c = UClass { t, kappa, gamma, theta, preferred: Some(preferred), label: String::new() };
            c.label = c.relation();
            c
        }
    };
    if !class.holds_for(u) {
        return Err(Error::Certification(format!("{} fails for {u:?}", class.relation())));
    }
    Ok(Some(class))
}

/// Coefficients `c_j` and denominator with `(αI + σU)⁻¹ = Σ c_j U^j / den`.
///
/// Substituting `X = σU` turns the relation of `U` into one for `X`, whose
/// inverse follows from
/// `(αI + X)((α+γ)I − X) = (α² + γα − κ)I` and
/// `(αI + X)((α(α+ϑ) − γ)I − (α+ϑ)X + X²) = (α³ + ϑα² − γα + κ)I`.
pub fn inverse_polynomial(class: &UClass, four_n: u64, variant: Variant) -> Result<(Vec<QuadNum>, QuadNum)> {
    let m = field_of(four_n);
    let a = alpha(four_n);
    let s = variant.sigma();
    let qi = |v: i64| q_int(v, m);
    let (p, den) = match class.t {
        // U = γ·I
        1 => (vec![qi(1)], &a + &qi(s * class.gamma)),
        2 => {
            let (kappa, gamma) = (class.kappa, s * class.gamma);
            let den = &(&a.square() + &(&a * &qi(gamma))) - &qi(kappa);
            (vec![&a + &qi(gamma), qi(-1)], den)
        }
        3 => {
            let (kappa, gamma, theta) = (s * class.kappa, class.gamma, s * class.theta);
            let a_th = &a + &qi(theta);
            let den = &(&(&a.pow(3) + &(&qi(theta) * &a.square())) - &(&qi(gamma) * &a)) + &qi(kappa);
            (vec![&(&a * &a_th) - &qi(gamma), -&a_th, qi(1)], den)
        }
        t => return Err(Error::domain(format!("t = {t} is outside {{1, 2, 3}}"))),
    };
    if den.is_zero() {
        return Err(Error::arithmetic(format!("vanishing denominator for {} ({variant})", class.relation())));
    }
    // back from powers of X = σU to powers of U
    let p = p.into_iter().enumerate().map(|(j, c)| if s < 0 && j % 2 == 1 { -c } else { c }).collect();
    Ok((p, den))
}

/// Exact `ε = max |√k·|Y_ij| − 1|`, attained at `location`.
///
/// Stored as the extremal magnitude `x` and which side of `1/√k` it lies on:
/// `ε = √k·x − 1` above, `ε = 1 − √k·x` below.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Epsilon {
    pub k: u64,
    pub side: Side,
    pub x: QuadNum,
    pub location: (usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Above,
    Below,
}

/// Compares `√k·x` with `r` for `x ≥ 0`.
pub fn cmp_sqrt_k_times(k: u64, x: &QuadNum, r: &QuadNum) -> Ordering {
    if r.is_negative() {
        return Ordering::Greater;
    }
    x.square().scale(&int(k as i64)).cmp_value(&r.square())
}

fn eps_cmp(k: u64, a: (Side, &QuadNum), b: (Side, &QuadNum)) -> Ordering {
    match (a.0, b.0) {
        (Side::Above, Side::Above) => a.1.cmp_value(b.1),
        (Side::Below, Side::Below) => b.1.cmp_value(a.1),
        // √k·x_a − 1 vs 1 − √k·x_b  ⇔  √k·(x_a + x_b) vs 2
        (Side::Above, Side::Below) => cmp_sqrt_k_times(k, &(a.1 + b.1), &QuadNum::from_int(2, a.1.m())),
        (Side::Below, Side::Above) => eps_cmp(k, b, a).reverse(),
    }
}

fn side_for(k: u64, max: &QuadNum, min: &QuadNum) -> Side {
    match cmp_sqrt_k_times(k, &(max + min), &QuadNum::from_int(2, max.m())) {
        Ordering::Less => Side::Below,
        _ => Side::Above,
    }
}

impl Epsilon {
    /// The upper deviation `√k·max|Y_ij| − 1` alone.
    pub fn upper(k: u64, max: QuadNum, location: (usize, usize)) -> Self {
        Epsilon { k, side: Side::Above, x: max, location }
    }

    pub fn cmp_eps(&self, other: &Epsilon) -> Ordering {
        assert_eq!(self.k, other.k, "ε of different orders");
        eps_cmp(self.k, (self.side, &self.x), (other.side, &other.x))
    }

    /// Exact comparison of ε with `c ∈ Q(√m)`.
    pub fn cmp_value(&self, c: &QuadNum) -> Ordering {
        let one = QuadNum::one(c.m());
        match self.side {
            Side::Above => cmp_sqrt_k_times(self.k, &self.x, &(&one + c)),
            Side::Below => cmp_sqrt_k_times(self.k, &self.x, &(&one - c)).reverse(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.cmp_value(&QuadNum::zero(self.x.m())) == Ordering::Equal
    }

    pub fn to_f64(&self) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let v = (self.k as f64).sqrt() * self.x.to_f64();
        match self.side {
            Side::Above => v - 1.0,
            Side::Below => 1.0 - v,
        }
    }

    pub fn expression(&self) -> String {
        match self.side {
            Side::Above => format!("√{}·({}) − 1", self.k, self.x),
            Side::Below => format!("1 − √{}·({})", self.k, self.x),
        }
    }

    pub fn to_json(&self) -> EpsilonJson {
        EpsilonJson {
            exact: EpsilonExact {
                side: self.side,
                k: self.k,
                x: self.x.to_json(),
                location: [self.location.0, self.location.1],
                expr: self.expression(),
            },
            float: round15(self.to_f64()),
        }
    }
}

impl fmt::Display for Epsilon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ≈ {:.6}", self.expression(), self.to_f64())
    }
}

/// Rounds to 15 significant digits for reports.
pub fn round15(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{v:.14e}").parse().unwrap_or(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonExact {
    pub side: Side,
    pub k: u64,
    pub x: QuadJson,
    pub location: [usize; 2],
    pub expr: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonJson {
    pub exact: EpsilonExact,
    pub float: f64,
}

/// Extremal magnitudes of `y` with their first row-major locations.
pub fn magnitude_extremes(y: &QuadMatrix) -> ((QuadNum, (usize, usize)), (QuadNum, (usize, usize))) {
    let mut it = y.entries().map(|(ij, v)| (v.abs(), ij));
    let first = it.next().expect("empty matrix");
    let (mut max, mut min) = (first.clone(), first);
    for (v, ij) in it {
        if v.cmp_value(&max.0) == Ordering::Greater {
            max = (v.clone(), ij);
        }
        if v.cmp_value(&min.0) == Ordering::Less {
            min = (v, ij);
        }
    }
    (max, min)
}

/// ε of an orthogonal matrix, located.
pub fn epsilon_of(y: &QuadMatrix) -> Epsilon {
    let k = y.rows() as u64;
    let ((max, at_max), (min, at_min)) = magnitude_extremes(y);
    match side_for(k, &max, &min) {
        Side::Above => Epsilon { k, side: Side::Above, x: max, location: at_max },
        Side::Below => Epsilon { k, side: Side::Below, x: min, location: at_min },
    }
}

/// Closed interval that every `|Y_ij|` must lie in when `t < √(4n)`:
/// `[(1/α)(1 − t/(α − t)), 1/(α − t)]`.
pub fn entry_window(four_n: u64, t: usize) -> Result<(QuadNum, QuadNum)> {
    let m = field_of(four_n);
    let a = alpha(four_n);
    let tq = q_int(t as i64, m);
    let gap = &a - &tq;
    if !gap.is_positive() {
        return Err(Error::domain(format!("t = {t} is not below √{four_n}")));
    }
    let hi = gap.inv()?;
    let lo = &(&QuadNum::one(m) - &(&tq * &hi)) * &inv_alpha(four_n);
    Ok((lo, hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// `Y = H/√k` with no reduction.
    Direct,
    ClosedForm,
    Elimination,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub method: Method,
    pub variant: Option<Variant>,
    pub split: Option<SplitJson>,
    pub uclass: Option<UClass>,
    pub source_recipe: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceJson {
    pub method: Method,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub variant: Option<Variant>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub split: Option<SplitJson>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub uclass: Option<UClass>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub source_recipe: Option<String>,
}

/// Orthogonal matrix of order `k` with exact entries in `Q(√(4n))` and its ε.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpsHadamard {
    pub k: usize,
    pub four_n: u64,
    pub t: usize,
    pub y: Arc<QuadMatrix>,
    pub epsilon: Epsilon,
    pub epsilon_upper: Epsilon,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsHadamardJson {
    pub k: usize,
    /// The order `4n`; entries are `a + b·√m`.
    pub m: u64,
    pub t: usize,
    pub entries: Vec<Vec<QuadJson>>,
    pub epsilon: EpsilonJson,
    pub epsilon_upper: EpsilonJson,
    pub provenance: ProvenanceJson,
}

impl EpsHadamard {
    fn certify(y: QuadMatrix, four_n: u64, t: usize, provenance: Provenance, exec: Execution) -> Result<Self> {
        if let Some((i, j)) = y.orthogonality_violation(exec) {
            return Err(Error::Certification(format!("reduced matrix is not orthogonal at ({i},{j})")));
        }
        Ok(Self::unchecked(y, four_n, t, provenance))
    }

    fn unchecked(y: QuadMatrix, four_n: u64, t: usize, provenance: Provenance) -> Self {
        let k = y.rows();
        let epsilon = epsilon_of(&y);
        let ((max, at), _) = magnitude_extremes(&y);
        let epsilon_upper = Epsilon::upper(k as u64, max, at);
        Self { k, four_n, t, y: Arc::new(y), epsilon, epsilon_upper, provenance }
    }

    /// `Y = H/√k` for a Hadamard matrix of order `k` (so `t = 0`, `ε = 0`).
    pub fn from_hadamard(h: &SignMatrix) -> Result<Self> {
        if !h.is_verified() {
            return Err(Error::domain("source matrix is not a verified Hadamard matrix"));
        }
        let k = h.order() as u64;
        let m = field_of(k);
        let s = inv_alpha(k);
        let y = QuadMatrix::from_fn(h.order(), h.order(), m, |i, j| if h.get(i, j) > 0 { s.clone() } else { -&s });
        let prov = Provenance { method: Method::Direct, variant: None, split: None, uclass: None, source_recipe: None };
        Self::certify(y, k, 0, prov, Execution::default())
    }

    pub fn radicand(&self) -> u64 {
        self.y.radicand()
    }

    pub fn get(&self, i: usize, j: usize) -> &QuadNum {
        self.y.get(i, j)
    }

    /// Entries outside the window of [`entry_window`], row-major.
    pub fn window_violations(&self) -> Result<Vec<(usize, usize)>> {
        let (lo, hi) = entry_window(self.four_n, self.t)?;
        Ok(self
            .y
            .entries()
            .filter(|(_, v)| {
                let a = v.abs();
                a.cmp_value(&lo) == Ordering::Less || a.cmp_value(&hi) == Ordering::Greater
            })
            .map(|(ij, _)| ij)
            .collect())
    }

    pub fn with_source_recipe(mut self, recipe: String) -> Self {
        self.provenance.source_recipe = Some(recipe);
        self
    }

    pub fn to_json(&self) -> EpsHadamardJson {
        EpsHadamardJson {
            k: self.k,
            m: self.four_n,
            t: self.t,
            entries: (0..self.k).map(|i| self.y.row(i).iter().map(QuadNum::to_json).collect()).collect(),
            epsilon: self.epsilon.to_json(),
            epsilon_upper: self.epsilon_upper.to_json(),
            provenance: ProvenanceJson {
                method: self.provenance.method,
                variant: self.provenance.variant,
                split: self.provenance.split.clone(),
                uclass: self.provenance.uclass.clone(),
                source_recipe: self.provenance.source_recipe.clone(),
            },
        }
    }

    /// Parses entries exactly and recomputes ε. Orthogonality is not checked
    /// here; see [`EpsHadamard::orthogonality_violation`].
    pub fn from_json(j: &EpsHadamardJson) -> Result<Self> {
        let m = field_of(j.m);
        if j.entries.len() != j.k || j.entries.iter().any(|r| r.len() != j.k) || j.k == 0 {
            return Err(Error::Parse(format!("expected a {0}×{0} entry array", j.k)));
        }
        if j.k as u64 + j.t as u64 != j.m {
            return Err(Error::Parse(format!("k + t = {} but m = {}", j.k + j.t, j.m)));
        }
        let rows = j
            .entries
            .iter()
            .map(|r| r.iter().map(|e| QuadNum::from_json(e, m)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::Parse(e.to_string()))?;
        let y = QuadMatrix::from_rows(rows, m).map_err(|e| Error::Parse(e.to_string()))?;
        let p = &j.provenance;
        let prov = Provenance {
            method: p.method,
            variant: p.variant,
            split: p.split.clone(),
            uclass: p.uclass.clone(),
            source_recipe: p.source_recipe.clone(),
        };
        Ok(Self::unchecked(y, j.m, j.t, prov))
    }

    pub fn orthogonality_violation(&self, exec: Execution) -> Option<(usize, usize)> {
        self.y.orthogonality_violation(exec)
    }
}

/// Assembles `Y_rc = (D_rc + Σ_q W_rq·Z_qc)/α` where `Z` is `t×k` over `Q(√m)`.
fn assemble_from_z(split: &BlockSplit, z: &[Vec<QuadNum>], exec: Execution) -> QuadMatrix {
    let four_n = split.four_n();
    let m = field_of(four_n);
    let ia = inv_alpha(four_n);
    let k = split.k();
    let rows = par::map_range(exec, k, |r| {
        (0..k)
            .map(|c| {
                let mut acc = q_int(split.d_entry(r, c), m);
                for (q, zq) in z.iter().enumerate() {
                    acc = if split.w_entry(r, q) > 0 { &acc + &zq[c] } else { &acc - &zq[c] };
                }
                &acc * &ia
            })
            .collect::<Vec<_>>()
    });
    QuadMatrix::from_rows(rows, m).expect("uniform field")
}

/// `(αI + σU)⁻¹` by exact elimination.
fn inverse_by_elimination(split: &BlockSplit, variant: Variant) -> Result<QuadMatrix> {
    let four_n = split.four_n();
    let m = field_of(four_n);
    let a = alpha(four_n);
    let t = split.t;
    let s = variant.sigma();
    let mat = QuadMatrix::from_fn(t, t, m, |p, q| {
        let u = q_int(s * split.u_entry(p, q), m);
        if p == q {
            &a + &u
        } else {
            u
        }
    });
    mat.inverse()
}

/// General reduction through exact Gaussian elimination of the `t×t` system.
pub fn schur_reduce(split: &BlockSplit, variant: Variant) -> Result<EpsHadamard> {
    schur_reduce_with(split, variant, Execution::default())
}

pub fn schur_reduce_with(split: &BlockSplit, variant: Variant, exec: Execution) -> Result<EpsHadamard> {
    split.check_t()?;
    let kinv = inverse_by_elimination(split, variant)?;
    let outer = variant.outer();
    let m = kinv.radicand();
    // Z = outer·K·V
    let z: Vec<Vec<QuadNum>> = (0..split.t)
        .map(|q| {
            (0..split.k())
                .map(|c| {
                    let mut acc = QuadNum::zero(m);
                    for p in 0..split.t {
                        let sign = outer * split.v_entry(p, c);
                        acc = if sign > 0 { &acc + kinv.get(q, p) } else { &acc - kinv.get(q, p) };
                    }
                    acc
                })
                .collect()
        })
        .collect();
    let y = assemble_from_z(split, &z, exec);
    let uclass = classify_u(&split.u()).ok().flatten();
    let prov = Provenance {
        method: Method::Elimination,
        variant: Some(variant),
        split: Some(split.to_json()),
        uclass,
        source_recipe: None,
    };
    EpsHadamard::certify(y, split.four_n(), split.t, prov, exec)
}

/// Coefficients `c_j` with `Y = (1/α)(D + c₀·WV + c₁·WUV + c₂·WU²V)`.
pub fn closed_form_coefficients(class: &UClass, four_n: u64, variant: Variant) -> Result<Vec<QuadNum>> {
    let (p, den) = inverse_polynomial(class, four_n, variant)?;
    let scale = den.inv()?;
    let outer = q_int(variant.outer(), scale.m());
    Ok(p.iter().map(|c| &(c * &scale) * &outer).collect())
}

/// Reduction through the explicit polynomial-in-`U` expression for a classified `U`.
pub fn closed_form(split: &BlockSplit, uclass: &UClass, variant: Variant) -> Result<EpsHadamard> {
    closed_form_with(split, uclass, variant, Execution::default())
}

pub fn closed_form_with(split: &BlockSplit, uclass: &UClass, variant: Variant, exec: Execution) -> Result<EpsHadamard> {
    split.check_t()?;
    let u = split.u();
    if !uclass.holds_for(&u) {
        return Err(Error::domain(format!("U = {u:?} does not satisfy {}", uclass.relation())));
    }
    let coeffs = closed_form_coefficients(uclass, split.four_n(), variant)?;
    let four_n = split.four_n();
    let m = field_of(four_n);
    let ia = inv_alpha(four_n);
    let (t, k) = (split.t, split.k());
    // U^j V as integer matrices, then W U^j V
    let um: IntMat = int_mat(&u);
    let mut ujv: Vec<IntMat> = vec![(0..t).map(|p| (0..k).map(|c| split.v_entry(p, c)).collect()).collect()];
    for _ in 1..coeffs.len() {
        let next = int_mul(&um, ujv.last().unwrap());
        ujv.push(next);
    }
    let w: IntMat = (0..k).map(|r| (0..t).map(|q| split.w_entry(r, q)).collect()).collect();
    let wujv: Vec<IntMat> = ujv.iter().map(|x| int_mul(&w, x)).collect();
    let rows = par::map_range(exec, k, |r| {
        (0..k)
            .map(|c| {
                let mut acc = q_int(split.d_entry(r, c), m);
                for (cj, x) in coeffs.iter().zip(&wujv) {
                    if x[r][c] != 0 {
                        acc = &acc + &cj.scale(&int(x[r][c]));
                    }
                }
                &acc * &ia
            })
            .collect::<Vec<_>>()
    });
    let y = QuadMatrix::from_rows(rows, m)?;
    let prov = Provenance {
        method: Method::ClosedForm,
        variant: Some(variant),
        split: Some(split.to_json()),
        uclass: Some(uclass.clone()),
        source_recipe: None,
    };
    EpsHadamard::certify(y, four_n, t, prov, exec)
}

/// Closed form when `U` is classified, elimination otherwise.
pub fn reduce(split: &BlockSplit, variant: Variant, exec: Execution) -> Result<EpsHadamard> {
    match classify_u(&split.u())? {
        Some(class) => closed_form_with(split, &class, variant, exec),
        None => schur_reduce_with(split, variant, exec),
    }
}

/// Extremal `|Y_ij|` of a candidate without materializing `Y`.
///
/// `W(αI+σU)⁻¹V` only depends on the sign patterns of a row of `W` and a
/// column of `V`, so at most `2·4^t` distinct entry values occur.
fn candidate_extremes(split: &BlockSplit, variant: Variant) -> Result<(QuadNum, QuadNum)> {
    let kinv = inverse_by_elimination(split, variant)?;
    let m = kinv.radicand();
    let (t, k) = (split.t, split.k());
    let npat = 1usize << t;
    let sign = |pat: usize, i: usize| if pat >> i & 1 == 1 { -1 } else { 1 };
    // table[w][v] = outer·Σ_q w_q Σ_p K_qp v_p
    let kv: Vec<Vec<QuadNum>> = (0..npat)
        .map(|v| {
            (0..t)
                .map(|q| (0..t).fold(QuadNum::zero(m), |acc, p| if sign(v, p) > 0 { &acc + kinv.get(q, p) } else { &acc - kinv.get(q, p) }))
                .collect()
        })
        .collect();
    let outer = variant.outer();
    let table: Vec<Vec<QuadNum>> = (0..npat)
        .map(|w| {
            (0..npat)
                .map(|v| {
                    (0..t).fold(QuadNum::zero(m), |acc, q| {
                        if sign(w, q) * outer > 0 {
                            &acc + &kv[v][q]
                        } else {
                            &acc - &kv[v][q]
                        }
                    })
                })
                .collect()
        })
        .collect();
    let pat = |f: &dyn Fn(usize) -> i64| (0..t).fold(0usize, |acc, i| acc | (((f(i) < 0) as usize) << i));
    let wpat: Vec<usize> = (0..k).map(|r| pat(&|q| split.w_entry(r, q))).collect();
    let vpat: Vec<usize> = (0..k).map(|c| pat(&|p| split.v_entry(p, c))).collect();
    let mut seen = vec![false; npat * npat * 2];
    for r in 0..k {
        for c in 0..k {
            let d = (split.d_entry(r, c) < 0) as usize;
            seen[(wpat[r] * npat + vpat[c]) * 2 + d] = true;
        }
    }
    let ia = inv_alpha(split.four_n());
    let mut extremes: Option<(QuadNum, QuadNum)> = None;
    for (idx, _) in seen.iter().enumerate().filter(|(_, &s)| s) {
        let (w, v, d) = (idx / 2 / npat, idx / 2 % npat, idx % 2);
        let val = (&table[w][v] + &q_int(if d == 1 { -1 } else { 1 }, m)).abs();
        extremes = Some(match extremes {
            None => (val.clone(), val),
            Some((mx, mn)) => {
                let mx = if val.cmp_value(&mx) == Ordering::Greater { val.clone() } else { mx };
                let mn = if val.cmp_value(&mn) == Ordering::Less { val } else { mn };
                (mx, mn)
            }
        });
    }
    let (mx, mn) = extremes.expect("non-empty reduction");
    Ok((&mx * &ia, &mn * &ia))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReductionOptions {
    pub scope: SearchScope,
    pub cap: usize,
    pub exec: Execution,
}

impl Default for ReductionOptions {
    fn default() -> Self {
        Self { scope: SearchScope::CornerOnly, cap: DEFAULT_SPLIT_CAP, exec: Execution::default() }
    }
}

/// A failed search, with the best result found before the failure if any.
#[derive(Debug)]
pub struct ReductionError {
    pub error: Error,
    pub partial: Option<Box<EpsHadamard>>,
    pub evaluated: usize,
}

impl fmt::Display for ReductionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} after {} splits", self.error, self.evaluated)?;
        if let Some(p) = &self.partial {
            write!(f, " (best so far ε = {})", p.epsilon)?;
        }
        Ok(())
    }
}

impl std::error::Error for ReductionError {}

impl From<Error> for ReductionError {
    fn from(error: Error) -> Self {
        Self { error, partial: None, evaluated: 0 }
    }
}

impl From<ReductionError> for Error {
    fn from(e: ReductionError) -> Self {
        e.error
    }
}

fn binomial(n: usize, r: usize) -> u128 {
    (0..r).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

fn combinations(n: usize, r: usize) -> impl Iterator<Item = Vec<usize>> {
    let mut cur: Option<Vec<usize>> = (r <= n).then(|| (0..r).collect());
    std::iter::from_fn(move || {
        let out = cur.clone()?;
        let mut next = out.clone();
        let mut i = r;
        cur = loop {
            if i == 0 {
                break None;
            }
            i -= 1;
            if next[i] < n - r + i {
                next[i] += 1;
                for j in i + 1..r {
                    next[j] = next[j - 1] + 1;
                }
                break Some(next);
            }
        };
        Some(out)
    })
}

/// Splits within `scope` in tie-break order, plus the total count.
fn enumerate_splits(h: &Arc<SignMatrix>, t: usize, scope: SearchScope, cap: usize) -> Result<(Vec<BlockSplit>, u128)> {
    let n = h.order();
    // position i of (row signs ++ col signs) is bit 2t−1−i, so counting up
    // walks the signs in lexicographic order with +1 first
    let signs = |bits: usize| -> (Vec<i8>, Vec<i8>) {
        let s = |i: usize| if bits >> (2 * t - 1 - i) & 1 == 1 { -1 } else { 1 };
        ((0..t).map(s).collect(), (t..2 * t).map(s).collect())
    };
    let (sets, nsigns) = match scope {
        SearchScope::CornerOnly => return Ok((vec![BlockSplit::corner(h.clone(), t)?], 1)),
        SearchScope::RowColPermutations => (binomial(n, t), 1usize),
        SearchScope::PermutationsAndNegations => (binomial(n, t), 1usize << (2 * t)),
    };
    let total = sets * sets * nsigns as u128;
    let mut out = Vec::new();
    'outer: for rows in combinations(n, t) {
        for cols in combinations(n, t) {
            for bits in 0..nsigns {
                if out.len() >= cap {
                    break 'outer;
                }
                let (rs, cs) = signs(bits);
                out.push(BlockSplit::with_signs(h.clone(), rows.clone(), cols.clone(), rs, cs)?);
            }
        }
    }
    Ok((out, total))
}

/// The least-ε reduction within `scope`.
///
/// Both variants of every split are compared exactly. Ties go to the
/// lexicographically smallest split and then to `Y2`. The winner is rebuilt
/// through [`reduce`] and certified orthogonal.
pub fn best_reduction(h: &SignMatrix, t: usize, opts: ReductionOptions) -> Result<EpsHadamard, ReductionError> {
    best_reduction_shared(&Arc::new(h.clone()), t, opts)
}

pub fn best_reduction_shared(h: &Arc<SignMatrix>, t: usize, opts: ReductionOptions) -> Result<EpsHadamard, ReductionError> {
    if !(1..=3).contains(&t) {
        return Err(Error::domain(format!("t = {t} is outside {{1, 2, 3}}")).into());
    }
    if (t * t) as u64 >= h.order() as u64 {
        return Err(Error::domain(format!("t = {t} is not below √{}", h.order())).into());
    }
    let (splits, total) = enumerate_splits(h, t, opts.scope, opts.cap)?;
    let k = (h.order() - t) as u64;
    type Best = Option<(usize, Variant, Side, QuadNum)>;
    let better = |a: &Best, b: &Best| -> bool {
        // true if b beats a
        match (a, b) {
            (_, None) => false,
            (None, Some(_)) => true,
            (Some((ia, va, sa, xa)), Some((ib, vb, sb, xb))) => match eps_cmp(k, (*sb, xb), (*sa, xa)) {
                Ordering::Less => true,
                Ordering::Greater => false,
                Ordering::Equal => (ib, *vb == Variant::Y1) < (ia, *va == Variant::Y1),
            },
        }
    };
    let candidates: Vec<Result<Best>> = par::map_range(opts.exec, splits.len(), |i| {
        let mut best: Best = None;
        for v in Variant::both() {
            let (mx, mn) = candidate_extremes(&splits[i], v)?;
            let side = side_for(k, &mx, &mn);
            let x = if side == Side::Above { mx } else { mn };
            let cand = Some((i, v, side, x));
            if better(&best, &cand) {
                best = cand;
            }
        }
        Ok(best)
    });
    let mut best: Best = None;
    for c in candidates {
        let c = c?;
        if better(&best, &c) {
            best = c;
        }
    }
    let (i, variant, _, _) = best.ok_or_else(|| Error::domain("no candidate splits"))?;
    // sanity: order within equal ε follows the split key
    debug_assert!(splits.windows(2).all(|w| w[0].key() < w[1].key()));
    let winner = reduce(&splits[i], variant, opts.exec)?;
    if (splits.len() as u128) < total {
        return Err(ReductionError {
            error: Error::Resource(format!(
                "{} scope has {total} splits, above the cap of {}",
                opts.scope, opts.cap
            )),
            partial: Some(Box::new(winner)),
            evaluated: splits.len(),
        });
    }
    Ok(winner)
}

/// Finds a split whose `U` (after sign toggles) equals `target`.
pub fn place_u(h: &Arc<SignMatrix>, target: &[Vec<i8>]) -> Option<BlockSplit> {
    let t = target.len();
    let n = h.order();
    for rows in combinations(n, t) {
        for cols in combinations(n, t) {
            // choose row signs from the first column, then column signs are forced
            for rbits in 0..1usize << t {
                let rs: Vec<i8> = (0..t).map(|p| if rbits >> p & 1 == 1 { -1 } else { 1 }).collect();
                let cs: Vec<i8> = (0..t).map(|q| h.get(rows[0], cols[q]) * rs[0] * target[0][q]).collect();
                let ok = (0..t).all(|p| (0..t).all(|q| h.get(rows[p], cols[q]) * rs[p] * cs[q] == target[p][q]));
                if ok {
                    return BlockSplit::with_signs(h.clone(), rows, cols, rs, cs).ok();
                }
            }
        }
    }
    None
}

#[derive(Debug, Clone)]
pub struct SeriesResidual {
    pub partial_sum: QuadMatrix,
    /// `max_ij |S_N − (I ± Û)⁻¹|`, exact.
    pub residual: QuadNum,
    /// Entrywise tail bound `(1/t)(t·a)^{N+1}/(1 − t·a)` with `a = max|Û_ij|`.
    pub bound: QuadNum,
    pub within_bound: bool,
}

/// Truncated Neumann series `Σ_{r≤N} (∓Û)^r` for `(I ± Û)⁻¹`, against the exact inverse.
pub fn series_inverse_check(u_hat: &QuadMatrix, terms: usize, sign: i8) -> Result<SeriesResidual> {
    let t = u_hat.rows();
    let m = u_hat.radicand();
    let one = QuadNum::one(m);
    let signed = if sign >= 0 { u_hat.clone() } else { u_hat.map(|x| -x) };
    let exact = QuadMatrix::identity(t, m).add(&signed).inverse()?;
    let step = signed.map(|x| -x);
    let mut power = QuadMatrix::identity(t, m);
    let mut sum = power.clone();
    for _ in 0..terms {
        power = power.mul(&step);
        sum = sum.add(&power);
    }
    let residual = sum
        .sub(&exact)
        .entries()
        .map(|(_, v)| v.abs())
        .fold(QuadNum::zero(m), |acc, v| if v.cmp_value(&acc) == Ordering::Greater { v } else { acc });
    let a = u_hat.entries().map(|(_, v)| v.abs()).fold(QuadNum::zero(m), |acc, v| if v.cmp_value(&acc) == Ordering::Greater { v } else { acc });
    let ta = a.scale(&int(t as i64));
    let gap = &one - &ta;
    if !gap.is_positive() {
        return Err(Error::domain("series does not converge: t·max|Û| ≥ 1"));
    }
    let bound = (&ta.pow(terms as u32 + 1) * &gap.inv()?).scale(&frac(1, t as i64));
    let within_bound = residual.cmp_value(&bound) != Ordering::Greater;
    Ok(SeriesResidual { partial_sum: sum, residual, bound, within_bound })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hadamard::{find_hadamard, sylvester};

    fn h(order: usize) -> Arc<SignMatrix> {
        Arc::new(find_hadamard(order).unwrap())
    }

    fn q(n: i64, d: i64, m: u64) -> QuadNum {
        QuadNum::rational(frac(n, d), m)
    }

    #[test]
    fn h4_t1_reduction() {
        let h4 = Arc::new(sylvester(2).unwrap());
        let split = BlockSplit::corner(h4.clone(), 1).unwrap();
        let y1 = schur_reduce(&split, Variant::Y1).unwrap();
        let expect = [[-2, 1, -2], [1, -2, -2], [-2, -2, 1]];
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(y1.get(i, j), &q(expect[i][j], 3, 1), "({i},{j})");
            }
        }
        let y2 = schur_reduce(&split, Variant::Y2).unwrap();
        assert_eq!(y1.epsilon.cmp_eps(&y2.epsilon), Ordering::Less);
        // two-sided ε = 1 − √3/3; upper deviation 2/√3 − 1
        assert_eq!(y1.epsilon.side, Side::Below);
        assert_eq!(y1.epsilon.x, q(1, 3, 1));
        assert!((y1.epsilon.to_f64() - (1.0 - 3f64.sqrt() / 3.0)).abs() < 1e-12);
        assert!((y1.epsilon_upper.to_f64() - (2.0 / 3f64.sqrt() - 1.0)).abs() < 1e-12);
        let best = best_reduction(&h4, 1, ReductionOptions::default()).unwrap();
        assert_eq!(best.y, y1.y);
    }

    #[test]
    fn t1_closed_form_matches_explicit_formula() {
        for order in [8, 12, 16, 20] {
            let hh = h(order);
            let split = BlockSplit::corner(hh.clone(), 1).unwrap();
            let class = classify_u(&split.u()).unwrap().unwrap();
            let a = alpha(order as u64);
            let m = a.m();
            // (1/α)(D − WV/(α+1)) evaluated directly
            let c = (&a + &QuadNum::one(m)).inv().unwrap();
            let ia = a.inv().unwrap();
            let y = closed_form(&split, &class, Variant::Y1).unwrap();
            for r in 0..split.k() {
                for cc in 0..split.k() {
                    let wv = split.w_entry(r, 0) * split.v_entry(0, cc);
                    let e = &(&QuadNum::from_int(split.d_entry(r, cc), m) - &c.scale(&int(wv))) * &ia;
                    assert_eq!(y.get(r, cc), &e);
                }
            }
            assert_eq!(schur_reduce(&split, Variant::Y1).unwrap().y, y.y);
        }
    }

    #[test]
    fn classify_examples() {
        let c = classify_u(&[vec![1, -1], vec![1, 1]]).unwrap().unwrap();
        assert_eq!((c.kappa, c.gamma, c.preferred), (-2, 2, Some(Variant::Y2)));
        let c = classify_u(&[vec![-1, -1], vec![1, -1]]).unwrap().unwrap();
        assert_eq!((c.kappa, c.gamma, c.preferred), (-2, -2, Some(Variant::Y1)));
        let c = classify_u(&[vec![1, 1], vec![1, 1]]).unwrap().unwrap();
        assert_eq!((c.kappa, c.gamma, c.preferred), (0, 2, None));
        assert!(classify_u(&vec![vec![1i8; 4]; 4]).is_err());
        assert!(classify_u(&[vec![1, 1, 1], vec![1, 1, 1], vec![1, 1, 1]]).unwrap().is_none());
        for (_, _, members) in listed_classes() {
            for u in members {
                assert!(classify_u(&u).unwrap().is_some(), "{u:?}");
            }
        }
    }

    /// Cayley–Hamilton oracle over all 2×2 sign matrices.
    #[test]
    fn t2_relation_from_trace_and_determinant() {
        for bits in 0..16 {
            let e = |i: usize| if bits >> i & 1 == 1 { -1i8 } else { 1 };
            let u = vec![vec![e(0), e(1)], vec![e(2), e(3)]];
            let c = classify_u(&u).unwrap().unwrap();
            let u2 = [
                [u[0][0] * u[0][0] + u[0][1] * u[1][0], u[0][0] * u[0][1] + u[0][1] * u[1][1]],
                [u[1][0] * u[0][0] + u[1][1] * u[1][0], u[1][0] * u[0][1] + u[1][1] * u[1][1]],
            ];
            for i in 0..2 {
                for j in 0..2 {
                    let rhs = c.kappa * (i == j) as i64 + c.gamma * u[i][j] as i64;
                    assert_eq!(u2[i][j] as i64, rhs);
                }
            }
        }
    }

    #[test]
    fn listed_t3_classes_satisfy_relations() {
        for u in T3_CLASS_A {
            let c = classify_u(&rows_of(&u)).unwrap().unwrap();
            assert_eq!((c.theta, c.gamma, c.kappa), (-1, 4, 4));
        }
        for u in T3_CLASS_B {
            let c = classify_u(&rows_of(&u)).unwrap().unwrap();
            assert_eq!((c.theta, c.gamma, c.kappa), (1, 4, -4));
        }
    }

    /// Closed-form coefficients for t=2 and t=3 typed in independently.
    #[test]
    fn closed_form_coefficients_match_listed_values() {
        for four_n in [8u64, 12, 16, 20, 32] {
            let a = alpha(four_n);
            let m = a.m();
            let n4 = QuadNum::from_int(four_n as i64, m);
            let qi = |v: i64| QuadNum::from_int(v, m);
            let div = |x: QuadNum, y: &QuadNum| x.checked_div(y).unwrap();
            let ca = classify_u(&rows_of(&T2_CLASS_A[0])).unwrap().unwrap();
            let cb = classify_u(&rows_of(&T2_CLASS_B[0])).unwrap().unwrap();
            let plus = &(&n4 + &(&a * &qi(2))) + &qi(2); // 4n + 2α + 2
            let minus = &(&n4 - &(&a * &qi(2))) + &qi(2); // 4n − 2α + 2
            let expect = [
                (&ca, Variant::Y1, vec![div(-(&a + &qi(2)), &plus), div(qi(1), &plus)]),
                (&ca, Variant::Y2, vec![div(&a - &qi(2), &minus), div(qi(1), &minus)]),
                (&cb, Variant::Y1, vec![div(-(&a - &qi(2)), &minus), div(qi(1), &minus)]),
                (&cb, Variant::Y2, vec![div(&a + &qi(2), &plus), div(qi(1), &plus)]),
            ];
            for (c, v, e) in expect {
                assert_eq!(closed_form_coefficients(c, four_n, v).unwrap(), e, "4n={four_n} {v}");
            }
            if four_n < 12 {
                continue;
            }
            let ea = classify_u(&rows_of(&T3_CLASS_A[0])).unwrap().unwrap();
            let eb = classify_u(&rows_of(&T3_CLASS_B[0])).unwrap().unwrap();
            let big_e = &(&(&(&n4 * &a) - &n4) - &(&qi(4) * &a)) + &qi(4); // 4nα − 4n − 4α + 4
            let big_f = &(&(&(&n4 * &a) + &n4) - &(&qi(4) * &a)) - &qi(4); // 4nα + 4n − 4α − 4
            let expect = [
                (&ea, Variant::Y1, vec![div(-(&(&n4 - &a) - &qi(4)), &big_e), div(&a - &qi(1), &big_e), div(qi(-1), &big_e)]),
                (&ea, Variant::Y2, vec![div(&(&n4 + &a) - &qi(4), &big_f), div(&a + &qi(1), &big_f), div(qi(1), &big_f)]),
                (&eb, Variant::Y1, vec![div(-(&(&n4 + &a) - &qi(4)), &big_f), div(&a + &qi(1), &big_f), div(qi(-1), &big_f)]),
                (&eb, Variant::Y2, vec![div(&(&n4 - &a) - &qi(4), &big_e), div(&a - &qi(1), &big_e), div(qi(1), &big_e)]),
            ];
            for (c, v, e) in expect {
                assert_eq!(closed_form_coefficients(c, four_n, v).unwrap(), e, "4n={four_n} t=3 {v}");
            }
        }
    }

    #[test]
    fn t2_closed_form_on_h8() {
        let h8 = Arc::new(sylvester(3).unwrap());
        let target = rows_of(&T2_CLASS_A[0]);
        let split = place_u(&h8, &target).unwrap();
        assert_eq!(split.u(), target);
        let class = classify_u(&target).unwrap().unwrap();
        let y2 = closed_form(&split, &class, Variant::Y2).unwrap();
        assert!(y2.orthogonality_violation(Execution::Sequential).is_none());
        assert_eq!(schur_reduce(&split, Variant::Y2).unwrap().y, y2.y);
    }

    #[test]
    fn t3_first_listed_on_h16_prefers_y1() {
        let h16 = h(16);
        let target = rows_of(&T3_CLASS_A[0]);
        let split = place_u(&h16, &target).unwrap();
        let class = classify_u(&target).unwrap().unwrap();
        let y1 = closed_form(&split, &class, Variant::Y1).unwrap();
        let y2 = closed_form(&split, &class, Variant::Y2).unwrap();
        assert_eq!(y1.epsilon.cmp_eps(&y2.epsilon), Ordering::Less);
        assert_eq!(y1.epsilon_upper.cmp_eps(&y2.epsilon_upper), Ordering::Less);
    }

    #[test]
    fn domain_errors() {
        let h4 = h(4);
        let split = BlockSplit::corner(h4.clone(), 2).unwrap();
        assert!(matches!(schur_reduce(&split, Variant::Y1), Err(Error::Domain(_))));
        assert!(matches!(best_reduction(&h4, 2, ReductionOptions::default()), Err(ReductionError { error: Error::Domain(_), .. })));
        assert!(BlockSplit::new(h4.clone(), vec![1, 0], vec![0, 1]).is_err());
        let unverified = Arc::new(SignMatrix::from_rows(&[vec![1, 1], vec![1, 1]]).unwrap());
        assert!(BlockSplit::corner(unverified, 1).is_err());
        let c = classify_u(&[vec![1, -1], vec![1, 1]]).unwrap().unwrap();
        let wrong = BlockSplit::corner(h(8), 2).unwrap();
        assert!(matches!(closed_form(&wrong, &c, Variant::Y1), Err(Error::Domain(_))));
    }

    #[test]
    fn entry_window_holds() {
        for (order, t) in [(4, 1), (8, 2), (12, 3), (16, 3), (20, 2)] {
            let y = best_reduction(&h(order), t, ReductionOptions::default()).unwrap();
            assert!(y.window_violations().unwrap().is_empty(), "order {order} t {t}");
        }
        // window for 4n=4, t=1 is [0, 1] with α = 2
        let (lo, hi) = entry_window(4, 1).unwrap();
        assert_eq!((lo, hi), (q(0, 1, 1), q(1, 1, 1)));
    }

    #[test]
    fn pattern_evaluation_agrees_with_materialized() {
        let hh = h(12);
        for t in 1..=3 {
            let (splits, _) = enumerate_splits(&hh, t, SearchScope::PermutationsAndNegations, 300).unwrap();
            for s in splits.iter().step_by(7) {
                for v in Variant::both() {
                    let (mx, mn) = candidate_extremes(s, v).unwrap();
                    let y = schur_reduce(s, v).unwrap();
                    let ((ymx, _), (ymn, _)) = magnitude_extremes(&y.y);
                    assert_eq!((mx, mn), (ymx, ymn));
                }
            }
        }
    }

    #[test]
    fn search_scopes_and_cap() {
        let h8 = h(8);
        let corner = best_reduction(&h8, 1, ReductionOptions::default()).unwrap();
        let wide = best_reduction(&h8, 1, ReductionOptions { scope: SearchScope::RowColPermutations, ..Default::default() }).unwrap();
        assert_ne!(wide.epsilon.cmp_eps(&corner.epsilon), Ordering::Greater);
        let capped = best_reduction(&h8, 2, ReductionOptions { scope: SearchScope::PermutationsAndNegations, cap: 10, ..Default::default() });
        match capped {
            Err(ReductionError { error: Error::Resource(_), partial: Some(p), evaluated: 10 }) => {
                assert!(p.orthogonality_violation(Execution::Sequential).is_none())
            }
            other => panic!("unexpected {other:?}"),
        }
        let seq = best_reduction(&h8, 2, ReductionOptions { scope: SearchScope::RowColPermutations, exec: Execution::Sequential, ..Default::default() }).unwrap();
        let par = best_reduction(&h8, 2, ReductionOptions { scope: SearchScope::RowColPermutations, exec: Execution::Parallel, ..Default::default() }).unwrap();
        assert_eq!(seq, par);
    }

    /// Exhaustive search over H_8 with t=2: the smallest reachable upper deviation.
    #[test]
    fn h8_t2_exhaustive_minimum() {
        let h8 = h(8);
        let (splits, total) = enumerate_splits(&h8, 2, SearchScope::PermutationsAndNegations, usize::MAX).unwrap();
        assert_eq!(total, 28 * 28 * 16);
        let best = splits
            .iter()
            .flat_map(|s| Variant::both().map(|v| candidate_extremes(s, v).unwrap().0))
            .reduce(|a, b| if b.cmp_value(&a) == Ordering::Less { b } else { a })
            .unwrap();
        let upper = (6f64).sqrt() * best.to_f64() - 1.0;
        assert!((upper - 0.28955).abs() < 1e-4, "{upper}");
    }

    #[test]
    fn t2_paired_classes_are_symmetric() {
        let h16 = h(16);
        let sa = place_u(&h16, &rows_of(&T2_CLASS_A[0])).unwrap();
        let sb = place_u(&h16, &rows_of(&T2_CLASS_B[0])).unwrap();
        let a2 = reduce(&sa, Variant::Y2, Execution::default()).unwrap();
        let b1 = reduce(&sb, Variant::Y1, Execution::default()).unwrap();
        assert_eq!(a2.epsilon.cmp_eps(&b1.epsilon), Ordering::Equal);
    }

    #[test]
    fn series_check() {
        let m = 1;
        let u_hat = QuadMatrix::from_fn(1, 1, m, |_, _| q(1, 4, m));
        let r = series_inverse_check(&u_hat, 10, 1).unwrap();
        assert!(r.within_bound);
        assert_ne!(r.residual.cmp_value(&q(1, 1 << 20, m)), Ordering::Greater);
        // (I + Û)⁻¹ − I = −1/5 when nothing but the identity is kept
        let r0 = series_inverse_check(&u_hat, 0, 1).unwrap();
        assert_eq!(r0.residual, q(1, 5, m));
        // first-order terms carry opposite signs for the two variants
        let p1 = series_inverse_check(&u_hat, 1, 1).unwrap().partial_sum;
        let m1 = series_inverse_check(&u_hat, 1, -1).unwrap().partial_sum;
        assert_eq!(p1.get(0, 0), &q(3, 4, m));
        assert_eq!(m1.get(0, 0), &q(5, 4, m));
        // t = 3 over Q(√48)
        let four_n = 48u64;
        let ia = inv_alpha(four_n);
        let u = rows_of(&T3_CLASS_A[0]);
        let u_hat = QuadMatrix::from_fn(3, 3, four_n, |i, j| ia.scale(&int(u[i][j] as i64)));
        for terms in [0, 1, 4, 9] {
            assert!(series_inverse_check(&u_hat, terms, 1).unwrap().within_bound);
            assert!(series_inverse_check(&u_hat, terms, -1).unwrap().within_bound);
        }
    }

    #[test]
    fn json_round_trip() {
        let y = best_reduction(&h(12), 2, ReductionOptions::default()).unwrap();
        let s = serde_json::to_string(&y.to_json()).unwrap();
        let back = EpsHadamard::from_json(&serde_json::from_str(&s).unwrap()).unwrap();
        assert_eq!(back, y);
        assert_eq!(serde_json::to_string(&back.to_json()).unwrap(), s);
    }

    #[test]
    fn direct_hadamard_has_zero_epsilon() {
        let y = EpsHadamard::from_hadamard(&sylvester(1).unwrap()).unwrap();
        assert!(y.epsilon.is_zero());
        assert_eq!(y.t, 0);
        assert!(y.window_violations().unwrap().is_empty());
    }
}
