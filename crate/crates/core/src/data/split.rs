use std::ops::Range;

use crate::error::{Error, Result};

/// Contiguous index blocks of `n` items in `k` folds. The first `n % k` folds
/// hold one extra item.
pub fn fold_ranges(n: usize, k: usize) -> Result<Vec<Range<usize>>> {
    if k < 2 || k > n {
        return Err(Error::config(format!("fold count {k} must lie in [2, {n}]")));
    }
    let (base, extra) = (n / k, n % k);
    let mut start = 0;
    Ok((0..k)
        .map(|f| {
            let len = base + usize::from(f < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect())
}

/// Sorts names and cuts them into `k` contiguous folds.
pub fn kfold_split<S: AsRef<str> + Clone>(names: &[S], k: usize) -> Result<Vec<Vec<S>>> {
    let mut sorted = names.to_vec();
    sorted.sort_by(|a, b| a.as_ref().cmp(b.as_ref()));
    Ok(fold_ranges(sorted.len(), k)?.into_iter().map(|r| sorted[r].to_vec()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sizes(n: usize, k: usize) -> Vec<usize> {
        fold_ranges(n, k).unwrap().iter().map(|r| r.len()).collect()
    }

    #[test]
    fn even_split() {
        let names: Vec<String> = (0..8).map(|i| format!("{i:02}")).collect();
        let folds = kfold_split(&names, 4).unwrap();
        assert_eq!(folds.iter().map(Vec::len).collect::<Vec<_>>(), [2, 2, 2, 2]);
        assert_eq!(folds[0], ["00", "01"]);
    }

    #[test]
    fn uneven_split_front_loads() {
        assert_eq!(sizes(5, 4), [2, 1, 1, 1]);
    }

    #[test]
    fn leave_one_out_limit() {
        assert_eq!(sizes(6, 6), [1; 6]);
    }

    #[test]
    fn sorts_before_splitting() {
        let folds = kfold_split(&["c", "a", "d", "b"], 2).unwrap();
        assert_eq!(folds, [vec!["a", "b"], vec!["c", "d"]]);
    }

    #[test]
    fn out_of_range_k() {
        assert!(fold_ranges(5, 1).is_err());
        assert!(fold_ranges(5, 6).is_err());
    }

    proptest! {
        #[test]
        fn folds_partition_the_input(n in 2usize..=200, k_seed in any::<usize>()) {
            let k = 2 + k_seed % (n - 1);
            let ranges = fold_ranges(n, k).unwrap();
            prop_assert_eq!(ranges.len(), k);
            prop_assert_eq!(ranges[0].start, 0);
            prop_assert_eq!(ranges[k - 1].end, n);
            for w in ranges.windows(2) {
                prop_assert_eq!(w[0].end, w[1].start);
            }
            let lens: Vec<usize> = ranges.iter().map(|r| r.len()).collect();
            prop_assert!(lens.iter().max().unwrap() - lens.iter().min().unwrap() <= 1);
        }
    }
}
