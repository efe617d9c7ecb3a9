//! Order-preserving parallel map. Falls back to a sequential loop without `std`.

use alloc::vec::Vec;

#[cfg(feature = "std")]
pub fn map_range<R, F>(n: usize, parallel: bool, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    use rayon::prelude::*;
    if parallel {
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}

#[cfg(not(feature = "std"))]
pub fn map_range<R, F>(n: usize, _parallel: bool, f: F) -> Vec<R>
where
    F: Fn(usize) -> R,
{
    (0..n).map(f).collect()
}
