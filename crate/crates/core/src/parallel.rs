//! Trial-level data parallelism.
//!
//! With the `parallel` feature, [`Execution::Parallel`] fans independent work
//! items out over the rayon pool; without it every request runs sequentially.
//! Results are always returned in index order, so output never depends on
//! the execution mode.

use std::str::FromStr;

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Parallel,
    Sequential,
}

impl Execution {
    /// Whether work will actually be spread over threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

impl FromStr for Execution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "parallel" => Ok(Execution::Parallel),
            "sequential" => Ok(Execution::Sequential),
            other => Err(Error::Config(format!("unknown execution mode {other:?}"))),
        }
    }
}

/// `(0..n).map(f)` collected in order, possibly in parallel.
pub fn map_indexed<T, F>(n: usize, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec == Execution::Parallel {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let par = map_indexed(100, Execution::Parallel, |i| i * i);
        let seq = map_indexed(100, Execution::Sequential, |i| i * i);
        assert_eq!(par, seq);
        assert_eq!(par[7], 49);
    }

    #[test]
    fn parses_modes() {
        assert_eq!("sequential".parse::<Execution>().unwrap(), Execution::Sequential);
        assert!("threads".parse::<Execution>().is_err());
    }
}
