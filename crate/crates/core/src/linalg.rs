//! Dense vector kernels with worker-count independent reductions.
//!
//! Dot products split the input into fixed-size blocks, sum each block
//! sequentially, then combine the block sums pairwise. The block layout does
//! not depend on the thread pool, so results are bitwise reproducible.

use rayon::prelude::*;

const BLOCK: usize = 4096;

fn pairwise(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    while v.len() > 1 {
        let next: Vec<f64> = v.chunks(2).map(|c| c.iter().sum()).collect();
        v = next;
    }
    v[0]
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "dot product of vectors with different lengths");
    let partial: Vec<f64> = a
        .par_chunks(BLOCK)
        .zip(b.par_chunks(BLOCK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum())
        .collect();
    pairwise(partial)
}

pub fn sum(a: &[f64]) -> f64 {
    let partial: Vec<f64> = a.par_chunks(BLOCK).map(|x| x.iter().sum()).collect();
    pairwise(partial)
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y ← y + α x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    assert_eq!(x.len(), y.len());
    y.par_iter_mut()
        .zip(x.par_iter())
        .for_each(|(yi, xi)| *yi += alpha * xi);
}

/// `a − b`
pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    assert_eq!(a.len(), b.len());
    a.par_iter().zip(b.par_iter()).map(|(x, y)| x - y).collect()
}

pub fn scale(alpha: f64, x: &[f64]) -> Vec<f64> {
    x.par_iter().map(|v| alpha * v).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_matches_naive_on_small_input() {
        let a = [1.0, 2.0, 3.0];
        let b = [4.0, -5.0, 6.0];
        assert_eq!(dot(&a, &b), 12.0);
        assert_eq!(dot(&[], &[]), 0.0);
    }

    #[test]
    fn dot_is_thread_count_independent() {
        let a: Vec<f64> = (0..50_000u64)
            .map(|i| ((i * 7919) % 1000) as f64 * 1e-3 + 1e-9 * i as f64)
            .collect();
        let b: Vec<f64> = (0..50_000u64).map(|i| ((i * 104_729) % 977) as f64 * 0.37).collect();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let d1 = one.install(|| dot(&a, &b));
        let d4 = four.install(|| dot(&a, &b));
        assert_eq!(d1.to_bits(), d4.to_bits());
    }

    #[test]
    fn axpy_and_norm() {
        let mut y = vec![1.0, 1.0];
        axpy(2.0, &[3.0, 4.0], &mut y);
        assert_eq!(y, vec![7.0, 9.0]);
        assert_eq!(norm2(&[3.0, 4.0]), 5.0);
    }
}
