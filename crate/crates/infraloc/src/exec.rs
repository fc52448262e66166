//! Thread-pool backed grid evaluation.

use infraloc_core::mi::{GridExecutor, MiEvaluation, MiObjective, MiWorkspace, Theta};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Environment variable consulted when `--threads` is not given.
pub const THREADS_ENV: &str = "INFRALOC_THREADS";

/// `--threads`, then [`THREADS_ENV`], then the available parallelism.
pub fn resolve_threads(flag: Option<usize>) -> Result<usize> {
    let n = match flag {
        Some(n) => n,
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => v.trim().parse().map_err(|_| {
                Error::Invalid(format!("{THREADS_ENV}={v} is not a positive integer"))
            })?,
            Err(_) => std::thread::available_parallelism().map_or(1, |n| n.get()),
        },
    };
    if n == 0 {
        return Err(Error::Invalid("thread count must be positive".into()));
    }
    Ok(n)
}

/// Evaluates grid cells on a private rayon pool. Results keep cell order, so
/// the argmax matches [`infraloc_core::mi::Sequential`] exactly.
pub struct RayonExecutor {
    pool: rayon::ThreadPool,
}

impl RayonExecutor {
    pub fn new(threads: usize) -> Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Invalid(e.to_string()))?;
        Ok(Self { pool })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }

    /// Runs `f` inside the pool.
    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        self.pool.install(f)
    }
}

impl GridExecutor for RayonExecutor {
    fn evaluate(&self, objective: &MiObjective<'_>, cells: &[Theta]) -> Vec<MiEvaluation> {
        self.pool.install(|| {
            cells
                .par_iter()
                .map_init(MiWorkspace::new, |ws, t| objective.evaluate(t, ws))
                .collect()
        })
    }
}
