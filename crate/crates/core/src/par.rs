//! Batch-loop helpers with a rayon backend and a sequential fallback.
//!
//! Every data-parallel loop in the crate (opening scoring, click-log replay,
//! seed sweeps, per-user metric evaluation) goes through [`map`] or
//! [`sum`]. With the `parallel` feature disabled, [`Mode::Parallel`]
//! silently degrades to sequential iteration.

/// How a batch loop is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Sequential,
    Parallel,
}

impl Default for Mode {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Mode::Parallel
        } else {
            Mode::Sequential
        }
    }
}

impl Mode {
    /// True when this mode will actually fan out over the rayon pool.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Mode::Parallel
    }
}

/// Order-preserving map over a slice.
pub fn map<T, R, F>(mode: Mode, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = mode;
    items.iter().map(f).collect()
}

/// Order-preserving map over an index range.
pub fn map_range<R, F>(mode: Mode, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = mode;
    (0..n).map(f).collect()
}

/// Integer sum over a slice. Integer addition keeps the result independent
/// of the reduction order.
pub fn sum<T, F>(mode: Mode, items: &[T], f: F) -> u64
where
    T: Sync,
    F: Fn(&T) -> u64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().map(f).sum();
    }
    let _ = mode;
    items.iter().map(f).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let xs: Vec<u64> = (0..1000).collect();
        let a = map(Mode::Sequential, &xs, |x| x * 3);
        let b = map(Mode::Parallel, &xs, |x| x * 3);
        assert_eq!(a, b);
        assert_eq!(sum(Mode::Sequential, &xs, |x| *x), sum(Mode::Parallel, &xs, |x| *x));
        assert_eq!(map_range(Mode::Parallel, 5, |i| i), vec![0, 1, 2, 3, 4]);
    }
}
