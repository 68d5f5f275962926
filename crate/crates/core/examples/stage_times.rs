//! Prints wall time per pipeline stage for one configuration.

use std::sync::Arc;
use std::time::Instant;

use armub_core::armub::assemble_shared;
use armub_core::epsh::{best_reduction_shared, ReductionOptions};
use armub_core::hadamard::find_hadamard;
use armub_core::rbd::{build_affine_rbd, verify_rbd_with, RbdCheckOptions};
use armub_core::verify::{check_bounds, cross_stats, StatsMode};

fn main() {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().expect("integer")).collect();
    let (k, s, t) = match args.as_slice() {
        [k, s, t] => (*k, *s, *t),
        _ => (79, 81, 1),
    };
    let clock = Instant::now();
    let lap = |what: &str| println!("{what:>10}: {:>8.2?}", clock.elapsed());
    let h = Arc::new(find_hadamard(k + t).unwrap());
    lap("hadamard");
    let y = Arc::new(best_reduction_shared(&h, t, ReductionOptions::default()).unwrap());
    lap("epsh");
    let rbd = Arc::new(build_affine_rbd(k, s).unwrap());
    lap("rbd");
    let cert = verify_rbd_with(&rbd, RbdCheckOptions::default());
    assert!(cert.ok());
    lap("rbd check");
    let bs = assemble_shared(rbd, y.clone(), Default::default()).unwrap();
    lap("assemble");
    let r = cross_stats(&bs, StatsMode::Exhaustive).unwrap();
    lap("stats");
    let l = check_bounds(&r, &y);
    lap("ledger");
    println!("β = {}, ledger passes: {}", r.beta, l.all_pass());
}
