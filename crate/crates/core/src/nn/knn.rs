//! Exact k-nearest-neighbor queries in feature space.
//!
//! EdgeConv rebuilds its neighbor graph from the current features at every
//! layer, so this runs in the inner loop. Distances for a block of query
//! rows are formed at once via |a-b|^2 = |a|^2 + |b|^2 - 2ab using a
//! matrix product; blocking keeps the distance buffer small at large N.
//! Ties break by ascending index, making the graph deterministic.

use ndarray::{s, Array1, Array2, Axis};

use super::autograd::Real;

const BLOCK: usize = 512;

/// Flat row-major neighbor list: entry `i*k + m` is the m-th nearest
/// neighbor of row i (self excluded). Panics if `k >= n`; callers are
/// expected to validate first.
pub fn knn_indices<F: Real>(x: &Array2<F>, k: usize) -> Vec<u32> {
    let n = x.nrows();
    assert!(k < n, "k = {k} needs at least k+1 = {} rows, got {n}", k + 1);

    let sq_norms: Array1<F> = x
        .rows()
        .into_iter()
        .map(|r| r.fold(F::zero(), |a, &v| a + v * v))
        .collect();

    let mut out = vec![0u32; n * k];
    let mut scratch: Vec<(F, u32)> = Vec::with_capacity(n);

    for start in (0..n).step_by(BLOCK) {
        let end = (start + BLOCK).min(n);
        let block = x.slice(s![start..end, ..]);
        // (end-start) x n inner products in one product.
        let prods = block.dot(&x.t());

        for (bi, i) in (start..end).enumerate() {
            scratch.clear();
            let row = prods.index_axis(Axis(0), bi);
            for j in 0..n {
                if j == i {
                    continue;
                }
                let two = F::one() + F::one();
                let d = sq_norms[i] + sq_norms[j] - two * row[j];
                scratch.push((d, j as u32));
            }
            let cmp = |a: &(F, u32), b: &(F, u32)| {
                a.0.partial_cmp(&b.0)
                    .expect("finite distances")
                    .then(a.1.cmp(&b.1))
            };
            scratch.select_nth_unstable_by(k - 1, cmp);
            scratch[..k].sort_unstable_by(cmp);
            for (m, &(_, j)) in scratch[..k].iter().enumerate() {
                out[i * k + m] = j;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn line_of_points() {
        // Points at x = 0, 1, 2, 10: nearest sets are unambiguous.
        let x = array![[0.0f64], [1.0], [2.0], [10.0]];
        let idx = knn_indices(&x, 2);
        assert_eq!(&idx[0..2], &[1, 2]); // neighbors of 0
        assert_eq!(&idx[2..4], &[0, 2]); // neighbors of 1
        assert_eq!(&idx[4..6], &[1, 0]); // neighbors of 2: 1 then 0
        assert_eq!(&idx[6..8], &[2, 1]); // neighbors of 10
    }

    #[test]
    fn ties_resolve_to_lower_index() {
        // Three coincident points: everyone picks the other two by index.
        let x = array![[1.0f64, 1.0], [1.0, 1.0], [1.0, 1.0]];
        let idx = knn_indices(&x, 2);
        assert_eq!(&idx[0..2], &[1, 2]);
        assert_eq!(&idx[2..4], &[0, 2]);
        assert_eq!(&idx[4..6], &[0, 1]);
    }

    #[test]
    fn matches_naive_search_on_random_input() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = 700; // spans two blocks
        let d = 5;
        let x = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0f64..1.0));
        let k = 7;
        let fast = knn_indices(&x, k);

        for i in 0..n {
            let mut dist: Vec<(f64, u32)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let d2: f64 = (0..d).map(|c| (x[[i, c]] - x[[j, c]]).powi(2)).sum();
                    (d2, j as u32)
                })
                .collect();
            dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let expected: Vec<u32> = dist[..k].iter().map(|&(_, j)| j).collect();
            assert_eq!(&fast[i * k..(i + 1) * k], &expected[..], "row {i}");
        }
    }
}
