//! Independent-job execution. Results always come back in job order, so
//! callers see identical output whichever strategy ran.

use std::env;

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "COMBOLAB_THREADS";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    Sequential,
    /// Falls back to sequential when built without the `parallel` feature.
    Parallel,
}

impl Strategy {
    /// `Parallel` unless the feature is off or `COMBOLAB_THREADS=1`.
    pub fn from_env() -> Strategy {
        if cfg!(feature = "parallel") && thread_cap() != Some(1) {
            Strategy::Parallel
        } else {
            Strategy::Sequential
        }
    }
}

/// Parsed `COMBOLAB_THREADS`; unset, empty, zero or garbage means no cap.
pub fn thread_cap() -> Option<usize> {
    env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&n| n > 0)
}

/// Runs `job(0..n)` under [`Strategy::from_env`].
pub fn run_jobs<T, F>(n: usize, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    run_jobs_with(Strategy::from_env(), n, job)
}

pub fn run_jobs_with<T, F>(strategy: Strategy, n: usize, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match strategy {
        Strategy::Sequential => (0..n).map(job).collect(),
        Strategy::Parallel => parallel(n, job),
    }
}

#[cfg(feature = "parallel")]
fn parallel<T, F>(n: usize, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    if n <= 1 {
        return (0..n).map(job).collect();
    }
    let run = || (0..n).into_par_iter().map(&job).collect();
    match thread_cap() {
        None => run(),
        Some(cap) => match rayon::ThreadPoolBuilder::new().num_threads(cap).build() {
            Ok(pool) => pool.install(run),
            Err(_) => (0..n).map(&job).collect(),
        },
    }
}

#[cfg(not(feature = "parallel"))]
fn parallel<T, F>(n: usize, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(job).collect()
}
