//! Order-preserving map over independent work items.
//!
//! Every per-sample forward/backward pass builds its own tape, so samples in
//! a batch can be processed concurrently. Results always come back in input
//! order and are reduced sequentially by the caller, so sums do not depend
//! on the thread count.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parallelism {
    Sequential,
    /// Rayon's global pool. Falls back to sequential when the crate is built
    /// without the `parallel` feature.
    #[default]
    Rayon,
}

impl Parallelism {
    /// Whether `Rayon` actually runs on a thread pool in this build.
    pub const fn rayon_available() -> bool {
        cfg!(feature = "parallel")
    }
}

pub fn map_ordered<T, R, F>(items: &[T], mode: Parallelism, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    match mode {
        #[cfg(feature = "parallel")]
        Parallelism::Rayon => {
            use rayon::prelude::*;
            items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect()
        }
        _ => items.iter().enumerate().map(|(i, t)| f(i, t)).collect(),
    }
}
