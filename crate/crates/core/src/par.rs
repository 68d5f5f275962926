//! Data-parallel helpers with a sequential fallback.
//!
//! Every heavy loop in the crate goes through these functions so that the
//! same code runs on rayon when the `parallel` feature is enabled and on a
//! plain iterator otherwise. Results are always returned in input order,
//! so reductions built on top of them are deterministic.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// True when work will actually be spread over the rayon pool.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Sizes the global pool; `1` or a build without `parallel` means sequential.
/// Returns the execution mode to use. Only the first call can size the pool.
pub fn configure_threads(threads: usize) -> Execution {
    if threads == 1 || !cfg!(feature = "parallel") {
        return Execution::Sequential;
    }
    #[cfg(feature = "parallel")]
    {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    Execution::Parallel
}

/// Maps `f` over `0..len`, preserving order.
pub fn map_range<R, F>(exec: Execution, len: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..len).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..len).map(f).collect()
}

/// Maps `f` over a slice, preserving order.
pub fn map_slice<T, R, F>(exec: Execution, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

/// Folds `0..len` into per-chunk accumulators and merges them.
///
/// `merge` must be associative; chunks are merged in index order so the
/// outcome does not depend on scheduling.
pub fn fold_range<A, Init, Step, Merge>(
    exec: Execution,
    len: usize,
    init: Init,
    step: Step,
    merge: Merge,
) -> A
where
    A: Send,
    Init: Fn() -> A + Sync + Send,
    Step: Fn(&mut A, usize) + Sync + Send,
    Merge: Fn(A, A) -> A + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() && len > 1 {
        use rayon::prelude::*;
        let chunk = len.div_ceil(rayon::current_num_threads() * 4).max(1);
        let parts: Vec<A> = (0..len.div_ceil(chunk))
            .into_par_iter()
            .map(|c| {
                let mut acc = init();
                for i in c * chunk..((c + 1) * chunk).min(len) {
                    step(&mut acc, i);
                }
                acc
            })
            .collect();
        return parts.into_iter().fold(init(), &merge);
    }
    let _ = (exec, &merge);
    let mut acc = init();
    for i in 0..len {
        step(&mut acc, i);
    }
    acc
}
