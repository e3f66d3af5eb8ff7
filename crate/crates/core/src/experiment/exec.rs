use serde::{Deserialize, Serialize};

/// How independent work units (paths) are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Sequential,
    /// Rayon thread pool; falls back to sequential without the `parallel` feature.
    #[default]
    Parallel,
}

/// `(0..count).map(f)` collected in index order under either schedule, so
/// results never depend on the worker count.
pub fn map_indexed<T, F>(count: usize, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..count).into_par_iter().map(f).collect()
        }
        _ => (0..count).map(f).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedules_agree() {
        let f = |i: usize| (i as f64).sqrt().sin();
        let a = map_indexed(100, Execution::Sequential, f);
        let b = map_indexed(100, Execution::Parallel, f);
        assert_eq!(a, b);
    }
}
