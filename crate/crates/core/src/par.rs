//! Index-parallel helpers.
//!
//! Every helper maps an index range to a vector of independent results. No
//! value is reduced across indices, so output is bitwise identical whether
//! the `parallel` feature is on or off and whatever the thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Returns `[f(0), f(1), ..., f(n - 1)]`.
#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

/// Returns `[f(0), f(1), ..., f(n - 1)]`.
#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Maps a slice element-wise, keeping order.
pub fn map_slice<S, T, F>(items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    map_indexed(items.len(), |i| f(&items[i]))
}

/// Whether this build runs the helpers on a thread pool.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_order() {
        let out = map_indexed(1000, |i| i * 2);
        assert!(out.iter().enumerate().all(|(i, &v)| v == i * 2));
        assert!(map_indexed(0, |i| i).is_empty());
    }
}
