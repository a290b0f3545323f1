//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature the maps below run on the rayon pool; without
//! it they run in a plain loop. Results are always returned in index order, and
//! reductions use fixed chunk boundaries, so output is bit-identical across
//! both builds and any thread count.

/// Rows per partial sum in [`chunked_sum`].
pub const CHUNK: usize = 512;

/// Evaluate `f(0..count)` and collect the results in index order.
pub fn map_indexed<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..count).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..count).map(f).collect()
    }
}

/// Evaluate `f` for every index in `0..len`, splitting the work into
/// fixed-size chunks.
pub fn map_chunked<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    let chunks = len.div_ceil(CHUNK);
    if chunks <= 1 {
        return (0..len).map(f).collect();
    }
    map_indexed(chunks, |c| {
        (c * CHUNK..((c + 1) * CHUNK).min(len))
            .map(&f)
            .collect::<Vec<T>>()
    })
    .into_iter()
    .flatten()
    .collect()
}

/// Sum `part(range)` over fixed-size chunks of `0..len`, combining the
/// partial results left to right.
pub fn chunked_sum<T, F, A>(len: usize, zero: T, part: F, add: A) -> T
where
    T: Send + Clone,
    F: Fn(std::ops::Range<usize>) -> T + Sync + Send,
    A: Fn(T, T) -> T,
{
    let chunks = len.div_ceil(CHUNK);
    if chunks <= 1 {
        return if len == 0 { zero } else { part(0..len) };
    }
    let partials = map_indexed(chunks, |c| part(c * CHUNK..((c + 1) * CHUNK).min(len)));
    partials.into_iter().fold(zero, add)
}

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order() {
        let v = map_indexed(1000, |i| i * 2);
        assert!(v.iter().enumerate().all(|(i, &x)| x == 2 * i));
    }

    #[test]
    fn chunked_sum_is_sequential_fold_of_chunks() {
        let xs: Vec<f64> = (0..2000).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let total = chunked_sum(xs.len(), 0.0, |r| xs[r].iter().sum::<f64>(), |a, b| a + b);
        let mut expected = 0.0;
        for c in xs.chunks(CHUNK) {
            expected += c.iter().sum::<f64>();
        }
        assert_eq!(total.to_bits(), expected.to_bits());
    }

    #[test]
    fn empty_sum_is_zero() {
        assert_eq!(chunked_sum(0, 0.0, |_| 1.0, |a, b| a + b), 0.0);
    }
}
