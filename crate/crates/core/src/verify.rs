//! Cross-basis statistics (Δ, β), the bound ledger, and classification.
//!
//! Two vectors from different bases overlap only where their blocks meet.
//! With μ = 1 that is a single point `p`, sitting at position `j` of one
//! block and `j'` of the other, so `|⟨u, v⟩| = |Y_ij|·|Y_i'j'|`. The
//! exhaustive mode therefore counts, over all class pairs, how often each
//! position pair `(j, j')` is realized and combines those counts with the
//! per-column magnitude histograms of `Y`. Block pairs meeting in more than
//! one point are summed exactly.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::quad::{QuadJson, QuadNum};
use crate::algebra::rational::{frac, int, Rational};
use crate::armub::BasisSet;
use crate::epsh::{alpha, cmp_sqrt_k_times, entry_window, round15, EpsHadamard, Epsilon, EpsilonJson};
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::rbd::ceil_sqrt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StatsMode {
    /// Every cross pair of every pair of bases.
    Exhaustive,
    /// Uniformly drawn cross pairs of vectors.
    Sampled { pairs: u64, seed: u64 },
    /// Every cross pair within `count` drawn pairs of bases.
    BasisPairs { count: usize, seed: u64 },
}

impl std::str::FromStr for StatsMode {
    type Err = Error;

    /// `exhaustive`, `sampled:N` or `basis-pairs:N` (alias `pairs:N`); the seed is set separately.
    fn from_str(s: &str) -> Result<Self> {
        let (head, tail) = s.split_once(':').unwrap_or((s, ""));
        let count = || tail.parse::<u64>().map_err(|_| Error::domain(format!("bad count in mode {s:?}")));
        match head {
            "exhaustive" if tail.is_empty() => Ok(StatsMode::Exhaustive),
            "sampled" => Ok(StatsMode::Sampled { pairs: count()?, seed: 0 }),
            "basis-pairs" | "pairs" => Ok(StatsMode::BasisPairs { count: count()? as usize, seed: 0 }),
            _ => Err(Error::domain(format!("unknown verification mode {s:?}"))),
        }
    }
}

impl StatsMode {
    pub fn with_seed(self, seed: u64) -> Self {
        match self {
            StatsMode::Exhaustive => StatsMode::Exhaustive,
            StatsMode::Sampled { pairs, .. } => StatsMode::Sampled { pairs, seed },
            StatsMode::BasisPairs { count, .. } => StatsMode::BasisPairs { count, seed },
        }
    }

    pub fn is_exhaustive(self) -> bool {
        self == StatsMode::Exhaustive
    }
}

/// `√r · x` with `x ∈ Q(√m)`, `x ≥ 0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScaledSurd {
    pub r: u64,
    pub x: QuadNum,
}

impl ScaledSurd {
    pub fn to_f64(&self) -> f64 {
        (self.r as f64).sqrt() * self.x.to_f64()
    }

    /// Exact comparison with a rational.
    pub fn cmp_rational(&self, c: &Rational) -> Ordering {
        cmp_sqrt_k_times(self.r, &self.x, &QuadNum::rational(c.clone(), self.x.m()))
    }

    pub fn expression(&self) -> String {
        format!("√{}·({})", self.r, self.x)
    }
}

impl fmt::Display for ScaledSurd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ≈ {:.6}", self.expression(), self.to_f64())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeltaValue {
    /// A distinct `|⟨u, v⟩|`.
    pub value: QuadNum,
    pub count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    #[serde(rename = "MUB")]
    Mub,
    #[serde(rename = "APMUB")]
    Apmub,
    #[serde(rename = "beta-ARMUB")]
    BetaArmub,
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Classification::Mub => "MUB",
            Classification::Apmub => "APMUB",
            Classification::BetaArmub => "β-ARMUB",
        })
    }
}

/// A classification plus whether it rests on every cross pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub class: Classification,
    /// False when only part of the cross pairs were seen; the class then only
    /// describes the observed values.
    pub exhaustive: bool,
}

#[derive(Debug, Clone)]
pub struct UnbiasednessReport {
    pub d: usize,
    pub s: usize,
    pub k: usize,
    pub t: usize,
    pub four_n: u64,
    pub mu: usize,
    pub epsilon: Epsilon,
    pub epsilon_upper: Epsilon,
    /// Ascending.
    pub delta_values: Vec<DeltaValue>,
    pub beta: ScaledSurd,
    /// `√d·μ·max|Y_ij|²`, which is `(1+ε)²√d/k` when ε is the upper deviation.
    pub structural_beta_bound: ScaledSurd,
    pub pairs_checked: u64,
    pub basis_pairs_checked: usize,
    pub mode: StatsMode,
    pub verdict: Verdict,
}

impl UnbiasednessReport {
    pub fn ceil_sqrt_d(&self) -> usize {
        ceil_sqrt(self.d)
    }

    /// `(1+ε)²√d/k` as a float.
    pub fn bound_beta_f64(&self) -> f64 {
        (1.0 + self.epsilon.to_f64()).powi(2) * (self.d as f64).sqrt() / self.k as f64
    }

    pub fn to_json(&self) -> ReportJson {
        ReportJson {
            d: self.d,
            s: self.s,
            k: self.k,
            t: self.t,
            four_n: self.four_n,
            mu: self.mu,
            ceil_sqrt_d: self.ceil_sqrt_d(),
            epsilon: self.epsilon.to_json(),
            epsilon_upper: self.epsilon_upper.to_json(),
            delta_values: self
                .delta_values
                .iter()
                .map(|v| DeltaJson { value: v.value.to_json(), float: round15(v.value.to_f64()), count: v.count })
                .collect(),
            beta: SurdJson { r: self.beta.r, x: self.beta.x.to_json(), float: round15(self.beta.to_f64()) },
            bound_beta: round15(self.bound_beta_f64()),
            structural_beta_bound: SurdJson {
                r: self.structural_beta_bound.r,
                x: self.structural_beta_bound.x.to_json(),
                float: round15(self.structural_beta_bound.to_f64()),
            },
            pairs_checked: self.pairs_checked,
            basis_pairs_checked: self.basis_pairs_checked,
            mode: self.mode,
            classification: self.verdict,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("field,value\n");
        let mut row = |k: &str, v: String| out.push_str(&format!("{k},{v}\n"));
        row("d", self.d.to_string());
        row("k", self.k.to_string());
        row("s", self.s.to_string());
        row("t", self.t.to_string());
        row("four_n", self.four_n.to_string());
        row("mu", self.mu.to_string());
        row("ceil_sqrt_d", self.ceil_sqrt_d().to_string());
        row("epsilon", round15(self.epsilon.to_f64()).to_string());
        row("epsilon_upper", round15(self.epsilon_upper.to_f64()).to_string());
        row("beta", round15(self.beta.to_f64()).to_string());
        row("bound_beta", round15(self.bound_beta_f64()).to_string());
        row("delta_count", self.delta_values.len().to_string());
        row("pairs_checked", self.pairs_checked.to_string());
        row("classification", self.verdict.class.to_string());
        row("exhaustive", self.verdict.exhaustive.to_string());
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaJson {
    pub value: QuadJson,
    pub float: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurdJson {
    pub r: u64,
    pub x: QuadJson,
    pub float: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportJson {
    pub d: usize,
    pub s: usize,
    pub k: usize,
    pub t: usize,
    pub four_n: u64,
    pub mu: usize,
    pub ceil_sqrt_d: usize,
    pub epsilon: EpsilonJson,
    pub epsilon_upper: EpsilonJson,
    pub delta_values: Vec<DeltaJson>,
    pub beta: SurdJson,
    pub bound_beta: f64,
    pub structural_beta_bound: SurdJson,
    pub pairs_checked: u64,
    pub basis_pairs_checked: usize,
    pub mode: StatsMode,
    pub classification: Verdict,
}

/// Distinct magnitudes of `Y` and, per column, how many rows carry each.
struct MagnitudeTable {
    values: Vec<QuadNum>,
    /// `col_hist[j][id]`
    col_hist: Vec<Vec<u64>>,
    /// `id_of[i][j]`
    id_of: Vec<Vec<usize>>,
}

impl MagnitudeTable {
    fn new(y: &EpsHadamard) -> Self {
        let k = y.k;
        let mut ids: HashMap<QuadNum, usize> = HashMap::new();
        let mut values = Vec::new();
        let mut id_of = vec![vec![0; k]; k];
        for i in 0..k {
            for j in 0..k {
                let a = y.get(i, j).abs();
                let next = values.len();
                let id = *ids.entry(a.clone()).or_insert(next);
                if id == next {
                    values.push(a);
                }
                id_of[i][j] = id;
            }
        }
        let mut col_hist = vec![vec![0u64; values.len()]; k];
        for row in &id_of {
            for (j, &id) in row.iter().enumerate() {
                col_hist[j][id] += 1;
            }
        }
        Self { values, col_hist, id_of }
    }
}

/// Per-class `(block, position)` of every point.
fn positions(bs: &BasisSet) -> Vec<Vec<(u32, u32)>> {
    bs.rbd
        .classes
        .iter()
        .map(|class| {
            let mut at = vec![(u32::MAX, u32::MAX); bs.d];
            for (b, block) in class.iter().enumerate() {
                for (j, &p) in block.iter().enumerate() {
                    at[p] = (b as u32, j as u32);
                }
            }
            at
        })
        .collect()
}

#[derive(Clone)]
struct Accumulator {
    /// `pos[j·k + j']`: points realized at positions `(j, j')` by single-point meetings.
    pos: Vec<u64>,
    /// Magnitudes from block pairs meeting in several points.
    extra: HashMap<QuadNum, u64>,
    pairs: u64,
}

impl Accumulator {
    fn new(k: usize) -> Self {
        Self { pos: vec![0; k * k], extra: HashMap::new(), pairs: 0 }
    }

    fn merge(mut self, other: Self) -> Self {
        for (a, b) in self.pos.iter_mut().zip(other.pos) {
            *a += b;
        }
        for (v, c) in other.extra {
            *self.extra.entry(v).or_default() += c;
        }
        self.pairs += other.pairs;
        self
    }
}

fn class_pair_into(bs: &BasisSet, at: &[Vec<(u32, u32)>], a: usize, b: usize, acc: &mut Accumulator) {
    let (k, s) = (bs.k, bs.s);
    let nblocks = bs.rbd.classes[b].len();
    let mut meets = vec![0u32; bs.rbd.classes[a].len() * nblocks];
    for p in 0..bs.d {
        let (x, y) = (at[a][p].0 as usize, at[b][p].0 as usize);
        meets[x * nblocks + y] += 1;
    }
    let _ = s;
    let mut multi: HashMap<(usize, usize), Vec<(usize, usize)>> = HashMap::new();
    for p in 0..bs.d {
        let ((x, j), (y, j2)) = (at[a][p], at[b][p]);
        if meets[x as usize * nblocks + y as usize] == 1 {
            acc.pos[j as usize * k + j2 as usize] += 1;
        } else {
            multi.entry((x as usize, y as usize)).or_default().push((j as usize, j2 as usize));
        }
    }
    let m = bs.radicand();
    for shared in multi.values() {
        for i in 0..k {
            for i2 in 0..k {
                let v = shared.iter().fold(QuadNum::zero(m), |acc, &(j, j2)| &acc + &(bs.y.get(i, j) * bs.y.get(i2, j2)));
                *acc.extra.entry(v.abs()).or_default() += 1;
            }
        }
    }
    acc.pairs += (bs.d as u64) * (bs.d as u64);
}

fn draw_class_pairs(s: usize, count: usize, seed: u64) -> Vec<(usize, usize)> {
    let all: Vec<(usize, usize)> = (0..s).flat_map(|a| (a + 1..s).map(move |b| (a, b))).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, all.len(), count.min(all.len())).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| all[i]).collect()
}

fn finish(bs: &BasisSet, values: HashMap<QuadNum, u64>, pairs: u64, basis_pairs: usize, mode: StatsMode) -> UnbiasednessReport {
    let m = bs.radicand();
    let mut delta: Vec<DeltaValue> = values.into_iter().filter(|(_, c)| *c > 0).map(|(value, count)| DeltaValue { value, count }).collect();
    delta.sort_by(|a, b| a.value.cmp_value(&b.value));
    let max = delta.last().map_or(QuadNum::zero(m), |v| v.value.clone());
    let ymax = bs.y.epsilon_upper.x.clone();
    let mu = bs.rbd.mu.max(1);
    let structural = ScaledSurd { r: bs.d as u64, x: ymax.square().scale(&int(mu as i64)) };
    let beta = ScaledSurd { r: bs.d as u64, x: max };
    let mut report = UnbiasednessReport {
        d: bs.d,
        s: bs.s,
        k: bs.k,
        t: bs.y.t,
        four_n: bs.y.four_n,
        mu: bs.rbd.mu,
        epsilon: bs.y.epsilon.clone(),
        epsilon_upper: bs.y.epsilon_upper.clone(),
        delta_values: delta,
        beta,
        structural_beta_bound: structural,
        pairs_checked: pairs,
        basis_pairs_checked: basis_pairs,
        mode,
        verdict: Verdict { class: Classification::BetaArmub, exhaustive: mode.is_exhaustive() },
    };
    report.verdict = classify(&report);
    report
}

/// Δ, β and classification of a basis set.
pub fn cross_stats(bs: &BasisSet, mode: StatsMode) -> Result<UnbiasednessReport> {
    cross_stats_with(bs, mode, Execution::default())
}

pub fn cross_stats_with(bs: &BasisSet, mode: StatsMode, exec: Execution) -> Result<UnbiasednessReport> {
    if bs.s < 2 {
        return Err(Error::domain("need at least two bases"));
    }
    match mode {
        StatsMode::Sampled { pairs: 0, .. } | StatsMode::BasisPairs { count: 0, .. } => {
            return Err(Error::domain("sampled verification needs at least one pair"))
        }
        StatsMode::Sampled { pairs, seed } => return Ok(sampled(bs, pairs, seed, exec)),
        _ => {}
    }
    let class_pairs: Vec<(usize, usize)> = match mode {
        StatsMode::BasisPairs { count, seed } => draw_class_pairs(bs.s, count, seed),
        _ => (0..bs.s).flat_map(|a| (a + 1..bs.s).map(move |b| (a, b))).collect(),
    };
    let at = positions(bs);
    let k = bs.k;
    let acc = par::fold_range(
        exec,
        class_pairs.len(),
        || Accumulator::new(k),
        |acc, i| class_pair_into(bs, &at, class_pairs[i].0, class_pairs[i].1, acc),
        Accumulator::merge,
    );
    let table = MagnitudeTable::new(&bs.y);
    let nv = table.values.len();
    // exact products of distinct magnitudes, merged when equal
    let mut values: HashMap<QuadNum, u64> = acc.extra;
    let mut prod_counts = vec![0u64; nv * nv];
    for j in 0..k {
        for j2 in 0..k {
            let c = acc.pos[j * k + j2];
            if c == 0 {
                continue;
            }
            for (a, &ha) in table.col_hist[j].iter().enumerate().filter(|(_, &h)| h > 0) {
                for (b, &hb) in table.col_hist[j2].iter().enumerate().filter(|(_, &h)| h > 0) {
                    prod_counts[a * nv + b] += c * ha * hb;
                }
            }
        }
    }
    let mut nonzero = values.iter().filter(|(v, _)| !v.is_zero()).map(|(_, c)| *c).sum::<u64>();
    values.retain(|v, _| !v.is_zero());
    for a in 0..nv {
        for b in 0..nv {
            let c = prod_counts[a * nv + b];
            if c > 0 {
                let v = &table.values[a] * &table.values[b];
                if !v.is_zero() {
                    nonzero += c;
                    *values.entry(v).or_default() += c;
                }
            }
        }
    }
    let zero = acc.pairs - nonzero;
    if zero > 0 {
        values.insert(QuadNum::zero(bs.radicand()), zero);
    }
    Ok(finish(bs, values, acc.pairs, class_pairs.len(), mode))
}

const SAMPLE_CHUNK: u64 = 4096;

fn sampled(bs: &BasisSet, pairs: u64, seed: u64, exec: Execution) -> UnbiasednessReport {
    let at = positions(bs);
    let table = MagnitudeTable::new(&bs.y);
    let (d, k, s) = (bs.d, bs.k, bs.s);
    let chunks = pairs.div_ceil(SAMPLE_CHUNK) as usize;
    // one RNG stream per chunk so the draw does not depend on scheduling
    let counts = par::fold_range(
        exec,
        chunks,
        HashMap::<(usize, usize), u64>::new,
        |acc, c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let n = SAMPLE_CHUNK.min(pairs - c as u64 * SAMPLE_CHUNK);
            for _ in 0..n {
                let a = rng.gen_range(0..s);
                let mut b = rng.gen_range(0..s - 1);
                if b >= a {
                    b += 1;
                }
                let (u, v) = (rng.gen_range(0..d), rng.gen_range(0..d));
                let (x, i) = (u / k, u % k);
                let (y, i2) = (v / k, v % k);
                let shared: Vec<(usize, usize)> = bs.rbd.classes[a][x]
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| at[b][p].0 as usize == y)
                    .map(|(j, &p)| (j, at[b][p].1 as usize))
                    .collect();
                let key = match shared.as_slice() {
                    [] => (usize::MAX, 0),
                    [(j, j2)] => (table.id_of[i][*j], table.id_of[i2][*j2]),
                    // several shared points: keyed by the vector pair, summed below
                    _ => (usize::MAX - 1, u * d + v + (a * s + b) * d * d),
                };
                *acc.entry(key).or_default() += 1;
            }
        },
        |mut a, b| {
            for (key, c) in b {
                *a.entry(key).or_default() += c;
            }
            a
        },
    );
    let m = bs.radicand();
    let mut values: HashMap<QuadNum, u64> = HashMap::new();
    for ((x, y), c) in counts {
        let v = if x == usize::MAX {
            QuadNum::zero(m)
        } else if x == usize::MAX - 1 {
            let (pair, rest) = (y / (d * d), y % (d * d));
            let (a, b) = (pair / s, pair % s);
            let (u, v) = (rest / d, rest % d);
            let vu = bs.bases[a].vector_at(u).expect("in range");
            let vv = bs.bases[b].vector_at(v).expect("in range");
            vu.dot(&vv).abs()
        } else {
            &table.values[x] * &table.values[y]
        };
        *values.entry(v).or_default() += c;
    }
    finish(bs, values, pairs, 0, StatsMode::Sampled { pairs, seed })
}

/// MUB iff Δ = {1/√d}; APMUB iff Δ = {0, β/√d} with β ≤ 2; otherwise β-ARMUB.
pub fn classify(report: &UnbiasednessReport) -> Verdict {
    let d = report.d as u64;
    let exhaustive = report.mode.is_exhaustive();
    let vals = &report.delta_values;
    let class = match vals.as_slice() {
        [only] if only.value.square().scale(&int(d as i64)) == QuadNum::one(only.value.m()) => Classification::Mub,
        [zero, top] if zero.value.is_zero() && report.beta.cmp_rational(&int(2)) != Ordering::Greater => {
            debug_assert_eq!(top.value, report.beta.x);
            Classification::Apmub
        }
        _ => Classification::BetaArmub,
    };
    Verdict { class, exhaustive }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LineVerdict {
    Pass,
    Fail,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerLine {
    pub check: String,
    pub lhs: String,
    pub rhs: String,
    pub verdict: LineVerdict,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Ledger {
    pub lines: Vec<LedgerLine>,
}

impl Ledger {
    pub fn push(&mut self, check: &str, lhs: String, rhs: String, verdict: LineVerdict, detail: Option<String>) {
        self.lines.push(LedgerLine { check: check.into(), lhs, rhs, verdict, detail });
    }

    fn pass_if(&mut self, check: &str, lhs: String, rhs: String, ok: bool, detail: Option<String>) {
        self.push(check, lhs, rhs, if ok { LineVerdict::Pass } else { LineVerdict::Fail }, detail);
    }

    /// No line failed.
    pub fn all_pass(&self) -> bool {
        self.lines.iter().all(|l| l.verdict != LineVerdict::Fail)
    }

    pub fn line(&self, check: &str) -> Option<&LedgerLine> {
        self.lines.iter().find(|l| l.check == check)
    }

    pub fn failures(&self) -> impl Iterator<Item = &LedgerLine> {
        self.lines.iter().filter(|l| l.verdict == LineVerdict::Fail)
    }
}

pub const CHECK_ORTHOGONAL: &str = "Y·Yᵀ = I";
pub const CHECK_WINDOW: &str = "entry window";
pub const CHECK_RHO: &str = "ε ≤ ρ_t/√n";
pub const CHECK_EPS_BELOW_ONE: &str = "ε < 1";
pub const CHECK_BETA_CHAIN: &str = "β ≤ (1+ε)²√d/k";
pub const CHECK_BETA_TWO: &str = "β < 2";
pub const CHECK_BASIS_COUNT: &str = "s ≥ ⌈√d⌉";
pub const CHECK_MU: &str = "μ = 1";
pub const CHECK_BETA_DEF: &str = "β = √d·max Δ";

/// `ρ_t` with `ε ≤ ρ_t/√n` expected.
pub fn rho(t: usize) -> Option<Rational> {
    match t {
        1 => Some(frac(1, 2)),
        2 => Some(int(2)),
        3 => Some(int(4)),
        _ => None,
    }
}

/// `ρ_t/√n = 2ρ_t/√(4n)` inside `Q(√(4n))`.
pub fn rho_bound(t: usize, four_n: u64) -> Option<QuadNum> {
    let r = rho(t)?;
    let a = alpha(four_n);
    Some(a.inv().ok()?.scale(&(r * int(2))))
}

/// Exact inequalities for one constructed set, every line with both sides.
pub fn check_bounds(report: &UnbiasednessReport, y: &EpsHadamard) -> Ledger {
    check_bounds_with(report, y, Execution::default())
}

pub fn check_bounds_with(report: &UnbiasednessReport, y: &EpsHadamard, exec: Execution) -> Ledger {
    let mut l = Ledger::default();
    let (t, four_n) = (report.t, report.four_n);
    let eps = &report.epsilon;
    let eps_lhs = format!("{} ≈ {:.6}", eps.expression(), eps.to_f64());

    let orth = y.orthogonality_violation(exec);
    l.pass_if(CHECK_ORTHOGONAL, "Y·Yᵀ".into(), "I".into(), orth.is_none(), orth.map(|(i, j)| format!("first violation at ({i},{j})")));

    let same = eps.cmp_eps(&y.epsilon) == Ordering::Equal;
    l.pass_if("ε recomputed", eps_lhs.clone(), y.epsilon.to_string(), same, None);

    if t == 0 {
        l.push(CHECK_WINDOW, "|Y_ij|".into(), "1/√k".into(), if eps.is_zero() { LineVerdict::Pass } else { LineVerdict::Fail }, None);
    } else {
        match (entry_window(four_n, t), y.window_violations()) {
            (Ok((lo, hi)), Ok(v)) => {
                let rhs = format!("[{:.6}, {:.6}]", lo.to_f64(), hi.to_f64());
                let detail = v.first().map(|(i, j)| format!("{} violations, first at ({i},{j})", v.len()));
                l.pass_if(CHECK_WINDOW, "|Y_ij|".into(), rhs, v.is_empty(), detail);
            }
            _ => l.push(CHECK_WINDOW, "|Y_ij|".into(), "t ≥ √(4n)".into(), LineVerdict::NotApplicable, None),
        }
    }

    match rho_bound(t, four_n) {
        Some(c) if t < 3 || four_n >= 16 => {
            let ok = eps.cmp_value(&c) != Ordering::Greater;
            l.pass_if(CHECK_RHO, eps_lhs.clone(), format!("{:.6}", c.to_f64()), ok, None);
        }
        Some(c) => l.push(CHECK_RHO, eps_lhs.clone(), format!("{:.6}", c.to_f64()), LineVerdict::NotApplicable, Some("stated for n ≥ 4".into())),
        None => l.push(CHECK_RHO, eps_lhs.clone(), "-".into(), LineVerdict::NotApplicable, Some("no reduction".into())),
    }

    // hypothesis t < √n, i.e. 4t² < 4n
    if t >= 1 && ((4 * t * t) as u64) < four_n {
        let ok = eps.cmp_value(&QuadNum::one(eps.x.m())) == Ordering::Less;
        l.pass_if(CHECK_EPS_BELOW_ONE, eps_lhs, "1".into(), ok, None);
    } else {
        l.push(CHECK_EPS_BELOW_ONE, eps_lhs, "1".into(), LineVerdict::NotApplicable, Some("needs t < √n".into()));
    }

    // β = √d·P ≤ √d·μ·M² = μ(1+ε_up)²√d/k ≤ μ(1+ε)²√d/k
    let within = report.beta.x.cmp_value(&report.structural_beta_bound.x) != Ordering::Greater;
    let up_le = report.epsilon_upper.cmp_eps(eps) != Ordering::Greater;
    l.pass_if(
        CHECK_BETA_CHAIN,
        report.beta.to_string(),
        format!("{:.6}", report.bound_beta_f64() * report.mu.max(1) as f64),
        within && up_le,
        Some(format!("via √d·μ·max|Y|² = {}", report.structural_beta_bound)),
    );

    // claimed for s and k within a factor 2 of each other
    if report.s <= 2 * report.k && report.k <= 2 * report.s {
        let below_two = report.beta.cmp_rational(&int(2)) == Ordering::Less;
        l.pass_if(CHECK_BETA_TWO, report.beta.to_string(), "2".into(), below_two, (!report.verdict.exhaustive).then(|| "sampled lower bound".into()));
    } else {
        l.push(CHECK_BETA_TWO, report.beta.to_string(), "2".into(), LineVerdict::NotApplicable, Some("s and k not within a factor 2".into()));
    }

    let csd = report.ceil_sqrt_d();
    if report.s > report.k {
        l.pass_if(CHECK_BASIS_COUNT, report.s.to_string(), csd.to_string(), report.s >= csd, None);
    } else {
        l.push(CHECK_BASIS_COUNT, report.s.to_string(), csd.to_string(), LineVerdict::NotApplicable, Some("needs s > k".into()));
    }

    l.pass_if(CHECK_MU, report.mu.to_string(), "1".into(), report.mu == 1, None);

    let top = report.delta_values.last().map(|v| v.value.clone());
    l.pass_if(
        CHECK_BETA_DEF,
        report.beta.to_string(),
        "√d·max Δ".into(),
        top.as_ref() == Some(&report.beta.x) && report.beta.r == report.d as u64,
        None,
    );
    l
}

/// Least-squares slope `λ` of `log(β − 1) ≈ c − λ·log d`; reported, never asserted.
pub fn exponent_fit(points: &[(usize, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points.iter().filter(|(_, b)| *b > 1.0).map(|&(d, b)| ((d as f64).ln(), (b - 1.0).ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / n, sy / n);
    let (num, den) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + (x - mx) * (y - my), b + (x - mx) * (x - mx)));
    (den > 0.0).then(|| -num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::armub::assemble;
    use crate::epsh::{best_reduction, ReductionOptions};
    use crate::hadamard::{find_hadamard, sylvester};
    use crate::rbd::{build_affine_rbd, Rbd};

    fn d4_design() -> BasisSet {
        let rbd = Rbd::from_classes(vec![vec![vec![0, 1], vec![2, 3]], vec![vec![0, 2], vec![1, 3]], vec![vec![0, 3], vec![1, 2]]]).unwrap();
        assemble(&rbd, &EpsHadamard::from_hadamard(&sylvester(1).unwrap()).unwrap()).unwrap()
    }

    /// Dense Gram oracle: every cross pair summed over all d coordinates.
    fn dense_delta(bs: &BasisSet) -> Vec<(QuadNum, u64)> {
        let m = bs.radicand();
        let dense: Vec<_> = bs.bases.iter().map(|b| b.dense()).collect();
        let mut counts: HashMap<QuadNum, u64> = HashMap::new();
        for a in 0..bs.s {
            for b in a + 1..bs.s {
                for u in 0..bs.d {
                    for v in 0..bs.d {
                        let ip = (0..bs.d).fold(QuadNum::zero(m), |acc, p| &acc + &(&dense[a][p][u] * &dense[b][p][v]));
                        *counts.entry(ip.abs()).or_default() += 1;
                    }
                }
            }
        }
        let mut out: Vec<_> = counts.into_iter().collect();
        out.sort_by(|x, y| x.0.cmp_value(&y.0));
        out
    }

    fn as_pairs(r: &UnbiasednessReport) -> Vec<(QuadNum, u64)> {
        r.delta_values.iter().map(|v| (v.value.clone(), v.count)).collect()
    }

    #[test]
    fn d4_design_is_mub() {
        let bs = d4_design();
        let r = cross_stats(&bs, StatsMode::Exhaustive).unwrap();
        assert_eq!(r.delta_values.len(), 1);
        assert_eq!(r.delta_values[0].value, QuadNum::rational(frac(1, 2), 2));
        assert_eq!(r.verdict, Verdict { class: Classification::Mub, exhaustive: true });
        assert_eq!(r.beta.cmp_rational(&int(1)), Ordering::Equal);
        assert_eq!(as_pairs(&r), dense_delta(&bs));
    }

    #[test]
    fn d6_is_apmub() {
        let y = EpsHadamard::from_hadamard(&sylvester(1).unwrap()).unwrap();
        let bs = assemble(&build_affine_rbd(2, 3).unwrap(), &y).unwrap();
        let r = cross_stats(&bs, StatsMode::Exhaustive).unwrap();
        assert_eq!(as_pairs(&r), dense_delta(&bs));
        assert_eq!(r.verdict.class, Classification::Apmub);
        // β = √6/2
        assert_eq!(r.beta.x, QuadNum::rational(frac(1, 2), 2));
        assert!((r.beta.to_f64() - 6f64.sqrt() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn generic_sets_are_beta_armub_and_match_dense() {
        for (order, k, s) in [(4usize, 3usize, 5usize), (8, 7, 9), (8, 6, 7)] {
            let y = best_reduction(&find_hadamard(order).unwrap(), order - k, ReductionOptions::default()).unwrap();
            let bs = assemble(&build_affine_rbd(k, s).unwrap(), &y).unwrap();
            let r = cross_stats(&bs, StatsMode::Exhaustive).unwrap();
            assert_eq!(as_pairs(&r), dense_delta(&bs), "k={k} s={s}");
            assert_eq!(r.verdict.class, Classification::BetaArmub);
            let ledger = check_bounds(&r, &y);
            let failed: Vec<&str> = ledger.failures().map(|l| l.check.as_str()).collect();
            // t = 2 at this size leaves β above 2
            let expected: &[&str] = if order - k == 1 { &[] } else { &[CHECK_BETA_TWO] };
            assert_eq!(failed, expected, "{ledger:#?}");
        }
    }

    #[test]
    fn sampled_is_subset_of_exhaustive() {
        let y = best_reduction(&find_hadamard(8).unwrap(), 2, ReductionOptions::default()).unwrap();
        let bs = assemble(&build_affine_rbd(6, 7).unwrap(), &y).unwrap();
        let full = cross_stats(&bs, StatsMode::Exhaustive).unwrap();
        for exec in [Execution::Sequential, Execution::Parallel] {
            let s = cross_stats_with(&bs, StatsMode::Sampled { pairs: 20_000, seed: 3 }, exec).unwrap();
            assert_eq!(s.pairs_checked, 20_000);
            assert!(!s.verdict.exhaustive);
            assert_ne!(s.beta.x.cmp_value(&full.beta.x), Ordering::Greater);
            for v in &s.delta_values {
                assert!(full.delta_values.iter().any(|f| f.value == v.value));
            }
        }
        let a = cross_stats_with(&bs, StatsMode::Sampled { pairs: 10_000, seed: 9 }, Execution::Sequential).unwrap();
        let b = cross_stats_with(&bs, StatsMode::Sampled { pairs: 10_000, seed: 9 }, Execution::Parallel).unwrap();
        assert_eq!(as_pairs(&a), as_pairs(&b));
        let bp = cross_stats(&bs, StatsMode::BasisPairs { count: 5, seed: 1 }).unwrap();
        assert_eq!(bp.basis_pairs_checked, 5);
        assert_eq!(bp.pairs_checked, 5 * 42 * 42);
        assert!(cross_stats(&bs, StatsMode::Sampled { pairs: 0, seed: 0 }).is_err());
    }

    #[test]
    fn execution_modes_agree() {
        let y = best_reduction(&find_hadamard(12).unwrap(), 3, ReductionOptions::default()).unwrap();
        let bs = assemble(&build_affine_rbd(9, 11).unwrap(), &y).unwrap();
        let a = cross_stats_with(&bs, StatsMode::Exhaustive, Execution::Sequential).unwrap();
        let b = cross_stats_with(&bs, StatsMode::Exhaustive, Execution::Parallel).unwrap();
        assert_eq!(as_pairs(&a), as_pairs(&b));
    }

    #[test]
    fn multi_point_meetings_are_summed() {
        // μ = 2: classes 0 and 1 share both blocks
        let rbd = Rbd::from_classes(vec![vec![vec![0, 1], vec![2, 3]], vec![vec![0, 1], vec![2, 3]], vec![vec![0, 3], vec![1, 2]]]).unwrap();
        assert_eq!(rbd.mu, 2);
        let bs = assemble(&rbd, &EpsHadamard::from_hadamard(&sylvester(1).unwrap()).unwrap()).unwrap();
        let r = cross_stats(&bs, StatsMode::Exhaustive).unwrap();
        assert_eq!(as_pairs(&r), dense_delta(&bs));
        assert_eq!(r.beta.cmp_rational(&int(2)), Ordering::Equal);
    }

    #[test]
    fn inflated_entry_fails_window() {
        let y = best_reduction(&sylvester(2).unwrap(), 1, ReductionOptions::default()).unwrap();
        let bs = assemble(&build_affine_rbd(3, 5).unwrap(), &y).unwrap();
        let r = cross_stats(&bs, StatsMode::Exhaustive).unwrap();
        assert!(check_bounds(&r, &y).all_pass());
        let mut bad = (*y.y).clone();
        bad.set(1, 2, QuadNum::from_int(2, 1));
        let mut forged = y.clone();
        forged.y = std::sync::Arc::new(bad);
        let l = check_bounds(&r, &forged);
        let w = l.line(CHECK_WINDOW).unwrap();
        assert_eq!(w.verdict, LineVerdict::Fail);
        assert!(w.detail.as_ref().unwrap().contains("(1,2)"));
        assert_eq!(l.line(CHECK_ORTHOGONAL).unwrap().verdict, LineVerdict::Fail);
    }

    #[test]
    fn t3_gating_at_n4() {
        let y = best_reduction(&find_hadamard(16).unwrap(), 3, ReductionOptions::default()).unwrap();
        let bs = assemble(&build_affine_rbd(13, 13).unwrap(), &y).unwrap();
        let r = cross_stats(&bs, StatsMode::Exhaustive).unwrap();
        let l = check_bounds(&r, &y);
        assert_eq!(l.line(CHECK_RHO).unwrap().verdict, LineVerdict::Pass);
        assert_eq!(l.line(CHECK_EPS_BELOW_ONE).unwrap().verdict, LineVerdict::NotApplicable);
        assert_eq!(l.line(CHECK_BASIS_COUNT).unwrap().verdict, LineVerdict::NotApplicable);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("exhaustive".parse::<StatsMode>().unwrap(), StatsMode::Exhaustive);
        assert_eq!("sampled:1000000".parse::<StatsMode>().unwrap(), StatsMode::Sampled { pairs: 1_000_000, seed: 0 });
        assert_eq!("basis-pairs:10".parse::<StatsMode>().unwrap().with_seed(4), StatsMode::BasisPairs { count: 10, seed: 4 });
        assert!("sampled".parse::<StatsMode>().is_err());
    }

    #[test]
    fn fit_recovers_slope() {
        let pts: Vec<(usize, f64)> = [100usize, 1000, 10000].iter().map(|&d| (d, 1.0 + 3.0 * (d as f64).powf(-0.25))).collect();
        assert!((exponent_fit(&pts).unwrap() - 0.25).abs() < 1e-9);
    }
}
