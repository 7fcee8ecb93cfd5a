//! Execution strategy for the embarrassingly parallel loops: CV folds,
//! simulation replications and score projection.
//!
//! With the `parallel` feature disabled every strategy runs sequentially.
//! Results are always collected in index order, so output never depends on
//! the strategy or on the number of worker threads.

/// How independent work items are scheduled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// Evaluates `f(0..len)` and returns the results in index order.
    pub fn map<T, F>(self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                (0..len).into_par_iter().map(f).collect()
            }
            _ => (0..len).map(f).collect(),
        }
    }

    /// Fallible variant of [`Exec::map`]. The error with the lowest index wins.
    pub fn try_map<T, E, F>(self, len: usize, f: F) -> Result<Vec<T>, E>
    where
        T: Send,
        E: Send,
        F: Fn(usize) -> Result<T, E> + Sync + Send,
    {
        self.map(len, f).into_iter().collect()
    }
}
