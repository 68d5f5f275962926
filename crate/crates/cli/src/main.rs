//! `armub`: build, certify and re-check ε-Hadamard matrices and ARMUBs.
//!
//! Exit codes: 0 ok, 2 usage, 3 domain, 4 not constructible, 5 arithmetic,
//! 6 resource, 7 check failed, 8 I/O or parse. `armub` run failures use
//! 20 + stage (hadamard, epsh, rbd, assemble, stats, ledger).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use armub_core::epsh::{best_reduction_shared, EpsHadamard, ReductionOptions, SearchScope, DEFAULT_SPLIT_CAP};
use armub_core::hadamard::{find_hadamard, is_hadamard, plan_hadamard, recipe_string, HadamardJson, SignMatrix};
use armub_core::par::configure_threads;
use armub_core::pipeline::{reverify, run, Bundle, Certificate, PipelineConfig, PipelineOutput, Stage};
use armub_core::rbd::{build_affine_rbd, verify_rbd_with, RbdCheckOptions};
use armub_core::verify::{Ledger, LineVerdict, StatsMode};
use armub_core::{Error, Execution};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

const OK: u8 = 0;
const CHECK_FAILED: u8 = 7;
const IO: u8 = 8;

/// Bases with at most this many stored entries are exported with triplets.
const TRIPLET_LIMIT: usize = 2_000_000;

#[derive(Parser)]
#[command(name = "armub", version, about = "Exact ε-Hadamard matrices and approximate real MUBs")]
struct Cli {
    /// Worker threads; 1 runs sequentially.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build a Hadamard matrix of the given order.
    Hadamard {
        order_pos: Option<usize>,
        #[arg(long)]
        order: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reduce a Hadamard matrix of order 4n by t to an ε-Hadamard matrix.
    Epsh {
        order_pos: Option<usize>,
        t_pos: Option<usize>,
        #[arg(long)]
        order: Option<usize>,
        #[arg(long)]
        t: Option<usize>,
        #[command(flatten)]
        search: Search,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build and certify the affine design with s classes of blocks of size k.
    Rbd {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        s: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full pipeline; writes every artifact and a certificate into --out.
    Armub {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        s: usize,
        /// 0 uses a Hadamard matrix of order k directly.
        #[arg(long)]
        t: usize,
        #[command(flatten)]
        search: Search,
        /// exhaustive, sampled:N or pairs:N
        #[arg(long, default_value = "exhaustive")]
        mode: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run every certification on persisted artifacts.
    Verify {
        /// A run directory or individual artifact files.
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        /// Write the recomputed ledger here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the ledger stored in a certificate.
    Ledger {
        /// certificate.json or the run directory holding it.
        path: PathBuf,
    },
}

#[derive(Args)]
struct Search {
    /// corner-only, row-col-permutations or permutations-and-negations
    #[arg(long, default_value = "corner-only")]
    scope: String,
    #[arg(long, default_value_t = DEFAULT_SPLIT_CAP)]
    cap: usize,
}

impl Search {
    fn options(&self, exec: Execution) -> Result<ReductionOptions, Error> {
        Ok(ReductionOptions { scope: self.scope.parse::<SearchScope>()?, cap: self.cap, exec })
    }
}

fn code_of(e: &Error) -> u8 {
    match e {
        Error::Domain(_) | Error::Structural(_) => 3,
        Error::NotConstructible { .. } => 4,
        Error::Arithmetic(_) => 5,
        Error::Resource(_) => 6,
        Error::Certification(_) => CHECK_FAILED,
        Error::Parse(_) => IO,
    }
}

/// An error ready to report: message plus exit code.
struct Fail(String, u8);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let code = code_of(&e);
        Fail(e.to_string(), code)
    }
}

fn io_fail(path: &Path, e: impl std::fmt::Display) -> Fail {
    Fail(format!("{}: {e}", path.display()), IO)
}

fn either(pos: Option<usize>, flag: Option<usize>, name: &str) -> Result<usize, Fail> {
    match (pos, flag) {
        (Some(a), Some(b)) if a != b => Err(Fail(format!("{name} given twice with different values"), 2)),
        (Some(a), _) | (None, Some(a)) => Ok(a),
        (None, None) => Err(Fail(format!("missing {name}"), 2)),
    }
}

fn to_json_string<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

/// Writes through a temporary file in the same directory, then renames.
fn write_atomic(path: &Path, contents: &str) -> Result<(), Fail> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| io_fail(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_fail(dir, e))?;
    tmp.write_all(contents.as_bytes()).map_err(|e| io_fail(path, e))?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file().set_permissions(fs::Permissions::from_mode(0o644)).map_err(|e| io_fail(path, e))?;
    }
    tmp.persist(path).map_err(|e| io_fail(path, e.error))?;
    Ok(())
}

fn emit<T: Serialize>(v: &T, out: Option<&Path>) -> Result<(), Fail> {
    match out {
        Some(p) => write_atomic(p, &to_json_string(v)),
        None => {
            print!("{}", to_json_string(v));
            Ok(())
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Fail> {
    let text = fs::read_to_string(path).map_err(|e| io_fail(path, e))?;
    serde_json::from_str(&text).map_err(|e| io_fail(path, e))
}

fn print_ledger(l: &Ledger) {
    for line in &l.lines {
        let tag = match line.verdict {
            LineVerdict::Pass => "PASS",
            LineVerdict::Fail => "FAIL",
            LineVerdict::NotApplicable => "N/A ",
        };
        print!("{tag}  {}: {} vs {}", line.check, line.lhs, line.rhs);
        match &line.detail {
            Some(d) => println!("  ({d})"),
            None => println!(),
        }
    }
}

fn ledger_code(l: &Ledger) -> u8 {
    if l.all_pass() {
        OK
    } else {
        CHECK_FAILED
    }
}

fn cmd_hadamard(order: usize, out: Option<&Path>) -> Result<u8, Fail> {
    let recipe = recipe_string(&plan_hadamard(order).map_err(|e| {
        if let Error::NotConstructible { attempted, .. } = &e {
            eprintln!("attempted factorizations: {attempted:?}");
        }
        Fail::from(e)
    })?);
    let h = find_hadamard(order)?;
    emit(&h.to_json(), out)?;
    eprintln!("order {order}: {recipe}");
    Ok(OK)
}

fn cmd_epsh(order: usize, t: usize, search: &Search, exec: Execution, out: Option<&Path>) -> Result<u8, Fail> {
    let plan = plan_hadamard(order)?;
    let h = std::sync::Arc::new(find_hadamard(order)?);
    let y = match best_reduction_shared(&h, t, search.options(exec)?) {
        Ok(y) => y,
        Err(e) => {
            if let Some(p) = &e.partial {
                eprintln!("best before the cap: ε = {}", p.epsilon);
            }
            return Err(e.error.into());
        }
    }
    .with_source_recipe(recipe_string(&plan));
    summarize_epsh(&y);
    if let Some(p) = out {
        write_atomic(p, &to_json_string(&y.to_json()))?;
    }
    Ok(OK)
}

fn summarize_epsh(y: &EpsHadamard) {
    let p = &y.provenance;
    println!("k = {}  (4n = {}, t = {})", y.k, y.four_n, y.t);
    println!("ε = {}", y.epsilon);
    println!("upper deviation = {}", y.epsilon_upper);
    let variant = p.variant.map_or("-".to_string(), |v| v.to_string());
    let class = p.uclass.as_ref().map_or("unclassified".to_string(), |c| c.label.clone());
    println!("variant {variant}, {class}, method {:?}", p.method);
}

fn cmd_rbd(k: usize, s: usize, exec: Execution, out: Option<&Path>) -> Result<u8, Fail> {
    let r = build_affine_rbd(k, s)?;
    let cert = verify_rbd_with(&r, RbdCheckOptions { exec, ..Default::default() });
    println!("d = {}, {} classes of {} blocks of size {}, μ = {}, ⌈√d⌉ = {}", r.d, r.num_classes(), s, k, cert.mu, cert.ceil_sqrt_d);
    if let Some(p) = out {
        write_atomic(p, &to_json_string(&r.to_json()))?;
    }
    Ok(if cert.ok() { OK } else { CHECK_FAILED })
}

const FILES: [&str; 6] = ["hadamard.json", "epsh.json", "rbd.json", "bases.json", "report.json", "certificate.json"];

fn write_bundle(o: &PipelineOutput, dir: &Path) -> Result<(), Fail> {
    let with_triplets = o.basis.d * o.basis.k * o.basis.s <= TRIPLET_LIMIT;
    let cert = o.certificate();
    write_atomic(&dir.join(FILES[0]), &to_json_string(&o.hadamard.to_json()))?;
    write_atomic(&dir.join(FILES[1]), &to_json_string(&o.y.to_json()))?;
    write_atomic(&dir.join(FILES[2]), &to_json_string(&o.rbd.to_json()))?;
    write_atomic(&dir.join(FILES[3]), &to_json_string(&o.basis.to_json(with_triplets)))?;
    write_atomic(&dir.join(FILES[4]), &to_json_string(&o.report.to_json()))?;
    write_atomic(&dir.join("report.csv"), &o.report.to_csv())?;
    write_atomic(&dir.join("ledger.json"), &to_json_string(&o.ledger))?;
    write_atomic(&dir.join(FILES[5]), &to_json_string(&cert))
}

fn cmd_armub(config: PipelineConfig, out: Option<&Path>) -> Result<u8, Fail> {
    let o = run(config).map_err(|e| {
        let code = e.stage.exit_code().map_or_else(|| code_of(&e.error), |c| c as u8);
        Fail(e.to_string(), code)
    })?;
    let r = &o.report;
    println!("d = {} = {}·{}, t = {}, 4n = {}, Hadamard {}", r.d, r.k, r.s, r.t, r.four_n, o.recipe);
    println!("ε = {}", r.epsilon);
    println!("β = {}  (bound (1+ε)²√d/k ≈ {:.6})", r.beta, r.bound_beta_f64());
    let evidence = if r.verdict.exhaustive { "exhaustive" } else { "sampled, lower bound" };
    println!(
        "{}  ({evidence}; {} distinct values over {} pairs)",
        r.verdict.class,
        r.delta_values.len(),
        r.pairs_checked
    );
    print_ledger(&o.ledger);
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(format!("armub-k{}-s{}-t{}", r.k, r.s, r.t)));
    write_bundle(&o, &dir).map_err(|Fail(m, _)| Fail(format!("[{}] {m}", Stage::Ledger), Stage::Ledger.exit_code().unwrap() as u8))?;
    println!("artifacts in {}", dir.display());
    Ok(ledger_code(&o.ledger))
}

fn load_bundle(paths: &[PathBuf]) -> Result<Bundle, Fail> {
    let files: Vec<PathBuf> = if paths.len() == 1 && paths[0].is_dir() {
        FILES.iter().map(|f| paths[0].join(f)).filter(|p| p.exists()).collect()
    } else {
        paths.to_vec()
    };
    let mut b = Bundle::default();
    for p in &files {
        let v: serde_json::Value = read_json(p)?;
        let has = |key: &str| v.get(key).is_some();
        let parse = |e: serde_json::Error| io_fail(p, e);
        if has("ledger") && has("report") {
            b.certificate = Some(serde_json::from_value::<Certificate>(v).map_err(parse)?);
        } else if has("entries") {
            b.epsh = Some(serde_json::from_value(v).map_err(parse)?);
        } else if has("classes") {
            b.rbd = Some(serde_json::from_value(v).map_err(parse)?);
        } else if has("rows") {
            b.hadamard = Some(serde_json::from_value::<HadamardJson>(v).map_err(parse)?);
        } else if has("values") {
            b.basis = Some(serde_json::from_value(v).map_err(parse)?);
        } else if has("delta_values") {
            b.report = Some(serde_json::from_value(v).map_err(parse)?);
        } else {
            return Err(io_fail(p, "not a recognized artifact"));
        }
    }
    Ok(b)
}

fn cmd_verify(paths: &[PathBuf], exec: Execution, out: Option<&Path>) -> Result<u8, Fail> {
    let bundle = load_bundle(paths)?;
    if let (Some(h), None) = (&bundle.hadamard, &bundle.epsh) {
        // a lone Hadamard matrix
        let m = SignMatrix::from_rows(&h.rows).map_err(|e| Fail(e.to_string(), IO))?;
        let check = is_hadamard(&m);
        return match check.violation {
            None => {
                println!("PASS  Hadamard of order {}", m.order());
                Ok(OK)
            }
            Some(v) => {
                println!("FAIL  Hadamard of order {}: {v}", m.order());
                Ok(CHECK_FAILED)
            }
        };
    }
    let (ledger, report) = reverify(&bundle, exec)?;
    print_ledger(&ledger);
    if let Some(r) = report {
        let evidence = if r.verdict.exhaustive { "exhaustive" } else { "sampled, lower bound" };
        println!("classification: {} ({evidence}), β = {}", r.verdict.class, r.beta);
    }
    if let Some(p) = out {
        write_atomic(p, &to_json_string(&ledger))?;
    }
    Ok(ledger_code(&ledger))
}

fn cmd_ledger(path: &Path) -> Result<u8, Fail> {
    let file = if path.is_dir() { path.join("certificate.json") } else { path.to_path_buf() };
    let cert: Certificate = read_json(&file)?;
    print_ledger(&cert.ledger);
    Ok(if cert.passed && cert.ledger.all_pass() { OK } else { CHECK_FAILED })
}

fn dispatch(cli: Cli) -> Result<u8, Fail> {
    let exec = cli.threads.map_or(Execution::default(), configure_threads);
    match cli.cmd {
        Cmd::Hadamard { order_pos, order, out } => cmd_hadamard(either(order_pos, order, "order")?, out.as_deref()),
        Cmd::Epsh { order_pos, t_pos, order, t, search, out } => {
            cmd_epsh(either(order_pos, order, "order")?, either(t_pos, t, "t")?, &search, exec, out.as_deref())
        }
        Cmd::Rbd { k, s, out } => cmd_rbd(k, s, exec, out.as_deref()),
        Cmd::Armub { k, s, t, search, mode, seed, out } => {
            let mut config = PipelineConfig::new(k, s, t);
            config.scope = search.scope.parse()?;
            config.cap = search.cap;
            config.mode = mode.parse::<StatsMode>()?.with_seed(seed);
            config.exec = exec;
            cmd_armub(config, out.as_deref())
        }
        Cmd::Verify { paths, out } => cmd_verify(&paths, exec, out.as_deref()),
        Cmd::Ledger { path } => cmd_ledger(&path),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Fail(msg, code)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
