use crate::CliError;

/// Caps the worker count of parallel jobs.
pub const THREADS_ENV: &str = "DISTILL_LAB_THREADS";

/// A pool sized by [`THREADS_ENV`] when set, otherwise by rayon's default.
pub fn thread_pool() -> anyhow::Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(raw) = std::env::var(THREADS_ENV) {
        let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            CliError::Config(format!(
                "{THREADS_ENV} must be a positive integer, got {raw:?}"
            ))
        })?;
        builder = builder.num_threads(n);
    }
    Ok(builder.build()?)
}
