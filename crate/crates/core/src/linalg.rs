//! Dense Cholesky factorization and triangular solves for small symmetric
//! positive-definite systems.

use alloc::vec;
use alloc::vec::Vec;

/// Packed offset of `L[i][j]` (`j <= i`) in row-major lower-triangular storage.
#[inline]
pub fn packed_index(i: usize, j: usize) -> usize {
    i * (i + 1) / 2 + j
}

/// Lower Cholesky factor of the row-major `n × n` matrix `a`, packed.
/// Returns `None` when a pivot is not strictly positive.
pub fn cholesky_packed(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0f64; n * (n + 1) / 2];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            let (ri, rj) = (packed_index(i, 0), packed_index(j, 0));
            for k in 0..j {
                s -= l[ri + k] * l[rj + k];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[ri + i] = num_traits::Float::sqrt(s);
            } else {
                l[ri + j] = s / l[rj + j];
            }
        }
    }
    Some(l)
}

/// Solves `L y = b` in place for packed lower-triangular `L`.
pub fn forward_substitute_packed(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let row = packed_index(i, 0);
        let mut s = b[i];
        for k in 0..i {
            s -= l[row + k] * b[k];
        }
        b[i] = s / l[row + i];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factor_reconstructs() {
        let a = [4.0, 2.0, 0.4, 2.0, 5.0, 1.0, 0.4, 1.0, 3.0];
        let l = cholesky_packed(&a, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for k in 0..=i.min(j) {
                    s += l[packed_index(i, k)] * l[packed_index(j, k)];
                }
                assert!((s - a[i * 3 + j]).abs() < 1e-12);
            }
        }
        let mut b = [1.0, 2.0, 3.0];
        forward_substitute_packed(&l, 3, &mut b);
        // L y = rhs
        assert!((l[0] * b[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_indefinite() {
        assert!(cholesky_packed(&[1.0, 2.0, 2.0, 1.0], 2).is_none());
        assert!(cholesky_packed(&[0.0], 1).is_none());
    }
}
