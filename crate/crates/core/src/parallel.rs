//! Order-preserving parallel map over replica indices.
//!
//! Results come back in index order, so any reduction over them is
//! independent of scheduling.

#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Split `total` items into fixed-size batches `(batch_index, start, len)`.
pub fn batches(total: usize, size: usize) -> Vec<(usize, usize, usize)> {
    let size = size.max(1);
    (0..total.div_ceil(size))
        .map(|b| {
            let start = b * size;
            (b, start, size.min(total - start))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    #[test]
    fn batches_cover_range() {
        let b = super::batches(10, 4);
        assert_eq!(b, vec![(0, 0, 4), (1, 4, 4), (2, 8, 2)]);
        assert!(super::batches(0, 4).is_empty());
        assert_eq!(super::map_indexed(5, |i| i * i), vec![0, 1, 4, 9, 16]);
    }
}
