//! Execution mode for independent feasibility checks.

/// How batches of independent checks are run. `Parallel` needs the
/// `parallel` feature; without it every mode runs sequentially.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ExecMode {
    #[cfg_attr(feature = "parallel", default)]
    Parallel,
    #[cfg_attr(not(feature = "parallel"), default)]
    Sequential,
}

/// Maps `f` over `items`, keeping input order in the output.
pub(crate) fn map<T, R, F>(mode: ExecMode, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match mode {
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_modes_preserve_order() {
        let items: Vec<u64> = (0..100).collect();
        let seq = map(ExecMode::Sequential, &items, |x| x * x);
        let par = map(ExecMode::Parallel, &items, |x| x * x);
        assert_eq!(seq, par);
        assert_eq!(seq[7], 49);
    }
}
