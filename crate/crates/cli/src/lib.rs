//! Experiment runner for the sandpile and activated-random-walk engines.

pub mod checks;
pub mod config;
pub mod experiments;
pub mod table;

pub use config::{ExperimentConfig, Overrides};
pub use table::Table;

/// Runs `f` on a dedicated pool of `threads` workers, or on the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> anyhow::Result<T> {
    match threads {
        Some(n) => Ok(rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build()?.install(f)),
        None => Ok(f()),
    }
}
