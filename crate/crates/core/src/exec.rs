//! Execution strategy for the data-parallel loops.
//!
//! Every parallel path has a sequential twin that produces bit-identical
//! output: work items are addressed by index and results are written back by
//! index, never in completion order. Without the `parallel` feature,
//! [`Execution::Parallel`] silently runs sequentially.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// True when this build can actually fan out across threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    /// `(0..len).map(f)` collected in index order.
    pub fn map_indexed<T, F>(self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return (0..len).into_par_iter().map(f).collect();
        }
        (0..len).map(f).collect()
    }

    /// Calls `f(i, &mut out[i])` for every slot of `out`.
    pub fn fill<T, F>(self, out: &mut [T], f: F)
    where
        T: Send,
        F: Fn(usize, &mut T) + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            out.par_iter_mut()
                .enumerate()
                .for_each(|(i, slot)| f(i, slot));
            return;
        }
        out.iter_mut().enumerate().for_each(|(i, slot)| f(i, slot));
    }

    /// Calls `f(i, pair)` for consecutive pairs `out[2i], out[2i+1]`.
    pub fn fill_pairs<T, F>(self, out: &mut [T], f: F)
    where
        T: Send,
        F: Fn(usize, &mut [T]) + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            out.par_chunks_mut(2)
                .enumerate()
                .for_each(|(i, pair)| f(i, pair));
            return;
        }
        out.chunks_mut(2)
            .enumerate()
            .for_each(|(i, pair)| f(i, pair));
    }
}

/// Runs `op` inside a dedicated thread pool of `threads` workers.
///
/// Used to check that results do not depend on the degree of parallelism.
#[cfg(feature = "parallel")]
pub fn with_threads<R: Send>(threads: usize, op: impl FnOnce() -> R + Send) -> R {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .expect("thread pool construction")
        .install(op)
}

#[cfg(not(feature = "parallel"))]
pub fn with_threads<R: Send>(_threads: usize, op: impl FnOnce() -> R + Send) -> R {
    op()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_indexed_preserves_order() {
        let seq = Execution::Sequential.map_indexed(1000, |i| i * i);
        let par = Execution::Parallel.map_indexed(1000, |i| i * i);
        assert_eq!(seq, par);
        assert_eq!(seq[31], 961);
    }

    #[test]
    fn fill_pairs_visits_every_pair() {
        let mut out = vec![0usize; 10];
        Execution::Parallel.fill_pairs(&mut out, |i, pair| {
            pair[0] = 2 * i;
            pair[1] = 2 * i + 1;
        });
        assert_eq!(out, (0..10).collect::<Vec<_>>());
    }
}
