//! Execution policy for the data-parallel loops (Monte Carlo trials,
//! quadrature nodes, Gaussian-determinant batches).
//!
//! Every loop is written as an indexed map whose per-index work is a pure
//! function of the index, followed by an in-order reduction. Results are
//! therefore identical for [`Execution::Sequential`], [`Execution::Parallel`]
//! and any rayon thread count.

/// How indexed maps are executed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Uses the current rayon pool when the `parallel` feature is enabled,
    /// otherwise falls back to sequential execution.
    #[default]
    Parallel,
}

impl Execution {
    /// Evaluates `f(0..n)` and returns the results in index order.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            Execution::Sequential => (0..n).map(f).collect(),
            Execution::Parallel => par_map(n, f),
        }
    }

    /// True when this policy actually runs on the rayon pool.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

#[cfg(feature = "parallel")]
fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order() {
        let seq = Execution::Sequential.map(1000, |i| i * i);
        let par = Execution::Parallel.map(1000, |i| i * i);
        assert_eq!(seq, par);
        assert_eq!(seq[31], 961);
    }
}
