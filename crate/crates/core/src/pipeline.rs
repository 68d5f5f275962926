//! End-to-end runs and re-verification of persisted artifacts.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::algebra::gf::prime_power;
use crate::armub::{assemble_shared, assemble_unchecked, BasisSet, BasisSetJson, OrthonormalityEvidence};
use crate::epsh::{best_reduction_shared, reduce, BlockSplit, EpsHadamard, EpsHadamardJson, Method, ReductionOptions, SearchScope, DEFAULT_SPLIT_CAP};
use crate::error::{Error, Result};
use crate::hadamard::{build_recipe, is_hadamard_with, order_budget, plan_hadamard, recipe_string, HadamardJson, SignMatrix};
use crate::par::Execution;
use crate::rbd::{build_affine_rbd, verify_rbd_with, Coverage, Rbd, RbdCertificate, RbdCheckOptions, RbdJson};
use crate::verify::{check_bounds_with, cross_stats_with, Ledger, LineVerdict, ReportJson, StatsMode, UnbiasednessReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Config,
    Hadamard,
    Epsh,
    Rbd,
    Assemble,
    Stats,
    Ledger,
}

impl Stage {
    /// Process exit code for a failure in this stage; configuration
    /// failures use the code of the underlying error instead.
    pub fn exit_code(self) -> Option<i32> {
        match self {
            Stage::Config => None,
            Stage::Hadamard => Some(20),
            Stage::Epsh => Some(21),
            Stage::Rbd => Some(22),
            Stage::Assemble => Some(23),
            Stage::Stats => Some(24),
            Stage::Ledger => Some(25),
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Config => "config",
            Stage::Hadamard => "hadamard",
            Stage::Epsh => "epsh",
            Stage::Rbd => "rbd",
            Stage::Assemble => "assemble",
            Stage::Stats => "stats",
            Stage::Ledger => "ledger",
        })
    }
}

#[derive(Debug)]
pub struct StageError {
    pub stage: Stage,
    pub error: Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.stage, self.error)
    }
}

impl std::error::Error for StageError {}

fn at(stage: Stage) -> impl FnOnce(Error) -> StageError {
    move |error| StageError { stage, error }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PipelineConfig {
    pub k: usize,
    pub s: usize,
    /// `0` uses a Hadamard matrix of order `k` directly.
    pub t: usize,
    pub scope: SearchScope,
    pub cap: usize,
    pub mode: StatsMode,
    pub exec: Execution,
}

impl PipelineConfig {
    pub fn new(k: usize, s: usize, t: usize) -> Self {
        Self { k, s, t, scope: SearchScope::CornerOnly, cap: DEFAULT_SPLIT_CAP, mode: StatsMode::Exhaustive, exec: Execution::default() }
    }

    pub fn four_n(&self) -> usize {
        self.k + self.t
    }

    pub fn d(&self) -> usize {
        self.k * self.s
    }

    pub fn validate(&self) -> Result<()> {
        let (k, s, t) = (self.k, self.s, self.t);
        if k == 0 {
            return Err(Error::domain("k must be positive"));
        }
        if t > 3 {
            return Err(Error::domain(format!("t = {t} is outside {{0, 1, 2, 3}}")));
        }
        let order = self.four_n();
        if t == 0 {
            if !(k <= 2 || k % 4 == 0) {
                return Err(Error::domain(format!("no Hadamard matrix of order k = {k}")));
            }
        } else {
            if order % 4 != 0 {
                return Err(Error::domain(format!("k + t = {order} is not a multiple of 4")));
            }
            if t * t >= order {
                return Err(Error::domain(format!("t = {t} is not below √{order}")));
            }
        }
        if order > order_budget() {
            return Err(Error::Resource(format!("order {order} exceeds the size budget {}", order_budget())));
        }
        if s % 2 == 0 || prime_power(s as u64).is_none() {
            return Err(Error::domain(format!("s = {s} is not an odd prime power")));
        }
        if k > s {
            return Err(Error::domain(format!("block size k = {k} exceeds s = {s}")));
        }
        match self.mode {
            StatsMode::Sampled { pairs: 0, .. } | StatsMode::BasisPairs { count: 0, .. } => {
                Err(Error::domain("sampled verification needs at least one pair"))
            }
            _ => Ok(()),
        }
    }
}

pub struct PipelineOutput {
    pub config: PipelineConfig,
    pub recipe: String,
    pub hadamard: Arc<SignMatrix>,
    pub y: Arc<EpsHadamard>,
    pub rbd: Arc<Rbd>,
    pub rbd_certificate: RbdCertificate,
    pub basis: BasisSet,
    pub report: UnbiasednessReport,
    pub ledger: Ledger,
}

/// Top-level summary of a run, written next to the artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub d: usize,
    pub k: usize,
    pub s: usize,
    pub t: usize,
    pub four_n: usize,
    pub recipe: String,
    pub scope: String,
    pub cap: usize,
    pub orthonormality: OrthonormalityEvidence,
    pub rbd: RbdCertificate,
    pub report: ReportJson,
    pub ledger: Ledger,
    pub passed: bool,
}

impl PipelineOutput {
    pub fn certificate(&self) -> Certificate {
        let c = &self.config;
        Certificate {
            d: c.d(),
            k: c.k,
            s: c.s,
            t: c.t,
            four_n: c.four_n(),
            recipe: self.recipe.clone(),
            scope: c.scope.to_string(),
            cap: c.cap,
            orthonormality: self.basis.evidence(),
            rbd: self.rbd_certificate.clone(),
            report: self.report.to_json(),
            ledger: self.ledger.clone(),
            passed: self.ledger.all_pass(),
        }
    }
}

/// Hadamard → ε-Hadamard → design → bases → statistics → ledger.
pub fn run(config: PipelineConfig) -> Result<PipelineOutput, StageError> {
    config.validate().map_err(at(Stage::Config))?;
    let exec = config.exec;
    let order = config.four_n();

    let plan = plan_hadamard(order).map_err(at(Stage::Hadamard))?;
    let recipe = recipe_string(&plan);
    let hadamard = Arc::new(build_recipe(&plan).map_err(at(Stage::Hadamard))?);

    let y = if config.t == 0 {
        EpsHadamard::from_hadamard(&hadamard)
    } else {
        let opts = ReductionOptions { scope: config.scope, cap: config.cap, exec };
        best_reduction_shared(&hadamard, config.t, opts).map_err(Error::from)
    }
    .map_err(at(Stage::Epsh))?
    .with_source_recipe(recipe.clone());
    let y = Arc::new(y);

    let rbd = Arc::new(build_affine_rbd(config.k, config.s).map_err(at(Stage::Rbd))?);
    let rbd_certificate = verify_rbd_with(&rbd, RbdCheckOptions { exec, ..Default::default() });
    if !rbd_certificate.ok() {
        return Err(StageError { stage: Stage::Rbd, error: Error::Certification(format!("design check failed: {:?}", rbd_certificate.violations.first())) });
    }

    let basis = assemble_shared(rbd.clone(), y.clone(), exec).map_err(at(Stage::Assemble))?;
    let report = cross_stats_with(&basis, config.mode, exec).map_err(at(Stage::Stats))?;
    let ledger = check_bounds_with(&report, &y, exec);
    Ok(PipelineOutput { config, recipe, hadamard, y, rbd, rbd_certificate, basis, report, ledger })
}

/// Persisted artifacts of one run; only the ε-Hadamard matrix and the design are required.
#[derive(Debug, Clone, Default)]
pub struct Bundle {
    pub hadamard: Option<HadamardJson>,
    pub epsh: Option<EpsHadamardJson>,
    pub rbd: Option<RbdJson>,
    pub basis: Option<BasisSetJson>,
    pub report: Option<ReportJson>,
    pub certificate: Option<Certificate>,
}

pub const CHECK_SOURCE: &str = "source Hadamard";
pub const CHECK_DERIVATION: &str = "Y derives from source";
pub const CHECK_DESIGN: &str = "design";
pub const CHECK_BASES: &str = "bases orthonormal";
pub const CHECK_BASIS_EXPORT: &str = "basis export";
pub const CHECK_REPORT: &str = "report reproduces";
pub const CHECK_CERTIFICATE: &str = "certificate consistent";

fn first_diff(a: &serde_json::Value, b: &serde_json::Value, path: &str) -> Option<String> {
    use serde_json::Value;
    match (a, b) {
        (Value::Object(x), Value::Object(y)) => {
            for (key, v) in x {
                let p = format!("{path}.{key}");
                match y.get(key) {
                    Some(w) => {
                        if let Some(d) = first_diff(v, w, &p) {
                            return Some(d);
                        }
                    }
                    None => return Some(p),
                }
            }
            y.keys().find(|key| !x.contains_key(*key)).map(|key| format!("{path}.{key}"))
        }
        (Value::Array(x), Value::Array(y)) if x.len() == y.len() => {
            x.iter().zip(y).enumerate().find_map(|(i, (v, w))| first_diff(v, w, &format!("{path}[{i}]")))
        }
        _ => (a != b).then(|| path.to_string()),
    }
}

fn json_diff<T: Serialize>(stored: &T, fresh: &T) -> Option<String> {
    let a = serde_json::to_value(stored).expect("serializable");
    let b = serde_json::to_value(fresh).expect("serializable");
    first_diff(&a, &b, "$")
}

/// Re-runs every certification on persisted artifacts.
///
/// Unparseable artifacts are errors; failed checks are ledger lines. The
/// statistics are recomputed in the mode recorded in the report (exhaustive
/// when there is none).
pub fn reverify(bundle: &Bundle, exec: Execution) -> Result<(Ledger, Option<UnbiasednessReport>)> {
    let mut l = Ledger::default();
    let yj = bundle.epsh.as_ref().ok_or_else(|| Error::Parse("missing ε-Hadamard artifact".into()))?;
    let rj = bundle.rbd.as_ref().ok_or_else(|| Error::Parse("missing design artifact".into()))?;
    let y = Arc::new(EpsHadamard::from_json(yj)?);
    let rbd = Arc::new(Rbd::from_json(rj)?);

    if let Some(hj) = &bundle.hadamard {
        let raw = SignMatrix::from_rows(&hj.rows).map_err(|e| Error::Parse(e.to_string()))?;
        let check = is_hadamard_with(&raw, exec);
        let detail = check.violation.map(|v| v.to_string());
        l.push(CHECK_SOURCE, format!("H·Hᵀ (order {})", raw.order()), format!("{}·I", raw.order()), verdict(check.ok() && raw.order() == hj.order), detail);
        if check.ok() {
            let h = Arc::new(raw.verified()?);
            let rebuilt = match (y.provenance.method, &y.provenance.split, y.provenance.variant) {
                (Method::Direct, _, _) => Some(EpsHadamard::from_hadamard(&h)),
                (_, Some(sj), Some(v)) => Some(BlockSplit::from_json(h.clone(), sj).and_then(|sp| reduce(&sp, v, exec))),
                _ => None,
            };
            match rebuilt {
                Some(Ok(r)) => {
                    let loc = r.y.entries().find(|((i, j), v)| y.y.get(*i, *j) != *v).map(|(ij, _)| ij);
                    let same = r.k == y.k && loc.is_none();
                    l.push(CHECK_DERIVATION, "stored Y".into(), "recomputed Y".into(), verdict(same), loc.map(|(i, j)| format!("first mismatch at ({i},{j})")));
                }
                Some(Err(e)) => l.push(CHECK_DERIVATION, "stored Y".into(), "recomputed Y".into(), LineVerdict::Fail, Some(e.to_string())),
                None => l.push(CHECK_DERIVATION, "stored Y".into(), "-".into(), LineVerdict::NotApplicable, Some("no recorded split".into())),
            }
        }
    }

    let cert = verify_rbd_with(&rbd, RbdCheckOptions { coverage: Coverage::Exhaustive, exec, mu_limit: 1 });
    l.push(
        CHECK_DESIGN,
        format!("μ = {}", cert.mu),
        "partition, sorted, μ = 1".into(),
        verdict(cert.ok()),
        cert.violations.first().map(|v| format!("{v:?}")),
    );
    if !cert.structure_ok() || y.k != rbd.k {
        if y.k != rbd.k {
            l.push(CHECK_BASES, format!("k = {}", y.k), format!("block size {}", rbd.k), LineVerdict::Fail, None);
        }
        return Ok((l, None));
    }

    let basis = assemble_unchecked(rbd, y.clone())?;
    let why = basis.orthonormality_violation(exec);
    l.push(CHECK_BASES, format!("{} bases of R^{}", basis.s, basis.d), format!("{:?}", basis.evidence()).to_lowercase(), verdict(why.is_none()), why);

    if let Some(bj) = &bundle.basis {
        let fresh = basis.to_json(bj.bases.is_some());
        let diff = json_diff(bj, &fresh);
        l.push(CHECK_BASIS_EXPORT, "stored".into(), "recomputed".into(), verdict(diff.is_none()), diff.map(|p| format!("differs at {p}")));
    }

    let mode = bundle.report.as_ref().map_or(StatsMode::Exhaustive, |r| r.mode);
    let report = cross_stats_with(&basis, mode, exec)?;
    if let Some(stored) = &bundle.report {
        let diff = json_diff(stored, &report.to_json());
        l.push(CHECK_REPORT, "stored report".into(), "recomputed".into(), verdict(diff.is_none()), diff.map(|p| format!("differs at {p}")));
    }
    let bounds = check_bounds_with(&report, &y, exec);
    if let Some(c) = &bundle.certificate {
        let diff = json_diff(&c.report, &report.to_json())
            .map(|p| format!("report {p}"))
            .or_else(|| json_diff(&c.ledger, &bounds).map(|p| format!("ledger {p}")))
            .or_else(|| (c.passed != bounds.all_pass()).then(|| "passed flag".into()));
        l.push(CHECK_CERTIFICATE, "stored certificate".into(), "recomputed".into(), verdict(diff.is_none()), diff.map(|p| format!("differs at {p}")));
    }
    l.lines.extend(bounds.lines);
    Ok((l, Some(report)))
}

fn verdict(ok: bool) -> LineVerdict {
    if ok {
        LineVerdict::Pass
    } else {
        LineVerdict::Fail
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::quad::QuadNum;
    use crate::verify::{Classification, CHECK_ORTHOGONAL};

    fn bundle_of(out: &PipelineOutput) -> Bundle {
        Bundle {
            hadamard: Some(out.hadamard.to_json()),
            epsh: Some(out.y.to_json()),
            rbd: Some(out.rbd.to_json()),
            basis: Some(out.basis.to_json(true)),
            report: Some(out.report.to_json()),
            certificate: Some(out.certificate()),
        }
    }

    #[test]
    fn validation() {
        assert!(PipelineConfig::new(3, 5, 1).validate().is_ok());
        assert!(PipelineConfig::new(2, 3, 0).validate().is_ok());
        for (k, s, t) in [(2, 3, 2), (3, 4, 1), (3, 15, 1), (4, 5, 1), (6, 5, 2), (5, 5, 0), (3, 5, 4)] {
            assert!(matches!(PipelineConfig::new(k, s, t).validate(), Err(Error::Domain(_))), "{k} {s} {t}");
        }
    }

    #[test]
    fn small_run_passes_and_reverifies() {
        let out = run(PipelineConfig::new(3, 5, 1)).unwrap();
        assert_eq!(out.basis.s, 5);
        assert_eq!(out.basis.d, 15);
        assert!(out.ledger.all_pass(), "{:#?}", out.ledger);
        assert!(out.certificate().passed);
        let (l, r) = reverify(&bundle_of(&out), Execution::default()).unwrap();
        assert!(l.all_pass(), "{l:#?}");
        assert_eq!(r.unwrap().verdict.class, Classification::BetaArmub);
    }

    #[test]
    fn d6_direct_is_apmub() {
        let out = run(PipelineConfig::new(2, 3, 0)).unwrap();
        assert_eq!(out.report.verdict.class, Classification::Apmub);
    }

    #[test]
    fn tampered_entry_is_located() {
        let out = run(PipelineConfig::new(3, 5, 1)).unwrap();
        let mut b = bundle_of(&out);
        let m = out.y.radicand();
        b.epsh.as_mut().unwrap().entries[2][1] = QuadNum::from_int(1, m).to_json();
        let (l, _) = reverify(&b, Execution::default()).unwrap();
        assert!(!l.all_pass());
        let d = l.line(CHECK_DERIVATION).unwrap();
        assert_eq!(d.verdict, LineVerdict::Fail);
        assert!(d.detail.as_ref().unwrap().contains("(2,1)"));
        assert_eq!(l.line(CHECK_ORTHOGONAL).unwrap().verdict, LineVerdict::Fail);
    }

    #[test]
    fn stage_tags() {
        let e = run(PipelineConfig::new(3, 15, 1)).map(|_| ()).unwrap_err();
        assert_eq!(e.stage, Stage::Config);
        let mut c = PipelineConfig::new(15, 17, 1);
        c.scope = SearchScope::RowColPermutations;
        c.cap = 10;
        let e = run(c).map(|_| ()).unwrap_err();
        assert_eq!(e.stage, Stage::Epsh);
        assert!(matches!(e.error, Error::Resource(_)));
    }
}
