//! Configured experiment runs and their reports.

pub mod config;
pub mod plot;
pub mod report;
pub mod run;

pub use config::{CheckId, ExperimentConfig};
pub use plot::emit_plot_data;
pub use report::{ExperimentReport, Outcome, Summary, Table};
pub use run::run_experiment;

/// Process exit code for a finished run.
pub fn exit_code(report: &ExperimentReport) -> i32 {
    if report.passed() {
        0
    } else {
        1
    }
}

/// Environment variable capping the worker threads.
pub const THREADS_VAR: &str = "LOCALSIEVE_THREADS";

/// Sizes the global worker pool from [`THREADS_VAR`] when it is set.
/// Results do not depend on the thread count.
pub fn init_threads_from_env() -> crate::Result<Option<usize>> {
    let Ok(v) = std::env::var(THREADS_VAR) else {
        return Ok(None);
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| crate::Error::Parse(format!("{THREADS_VAR} must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| crate::Error::InvalidArgument(e.to_string()))?;
    Ok(Some(n))
}

/// Runs `cfg` on a private pool of `threads` workers.
pub fn run_with_threads(cfg: &ExperimentConfig, threads: usize) -> crate::Result<ExperimentReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| crate::Error::InvalidArgument(e.to_string()))?;
    pool.install(|| run_experiment(cfg))
}

/// CSV bytes of every table, in report order.
pub fn csv_bytes(report: &ExperimentReport) -> crate::Result<Vec<Vec<u8>>> {
    report.tables.iter().map(Table::to_csv).collect()
}
