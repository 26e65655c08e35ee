//! Replica fan-out.
//!
//! With the `parallel` feature, [`Execution::Parallel`] distributes replicas
//! over the rayon pool; without it the same call runs sequentially. Results
//! always come back in replica order, so downstream reductions are
//! independent of the schedule.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// Whether this build can actually run replicas concurrently.
    pub fn is_parallel_available() -> bool {
        cfg!(feature = "parallel")
    }
}

pub fn map_replicas<T, F>(exec: Execution, count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => (0..count).into_par_iter().map(f).collect(),
        _ => (0..count).map(f).collect(),
    }
}

pub fn try_map_replicas<T, F>(exec: Execution, count: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => (0..count).into_par_iter().map(f).collect(),
        _ => (0..count).map(f).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_schedule_independent() {
        let seq = map_replicas(Execution::Sequential, 1000, |i| i * i);
        let par = map_replicas(Execution::Parallel, 1000, |i| i * i);
        assert_eq!(seq, par);
    }

    #[test]
    fn errors_propagate() {
        let r = try_map_replicas(Execution::Parallel, 10, |i| {
            if i == 7 {
                Err(crate::Error::Parse("boom".into()))
            } else {
                Ok(i)
            }
        });
        assert!(r.is_err());
    }
}
