//! Small dense least-squares kernels.
//!
//! Designs are passed column-major (`&[Vec<f64>]`, one vector per feature)
//! because that is how feature columns are produced.

/// Relative pivot below which a column is treated as linearly dependent.
pub const PIVOT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub intercept: f64,
    /// Dropped columns carry a zero coefficient.
    pub coefficients: Vec<f64>,
    pub rank: usize,
    /// Indices of columns found linearly dependent on the intercept and the
    /// columns kept before them.
    pub dependent: Vec<usize>,
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Least squares with intercept via column-pivoted Householder QR.
///
/// Columns and target are centered (which absorbs the intercept) and each
/// column is scaled to unit norm before factorization, so the pivot test is
/// scale free. Rank-deficient designs are solved on the maximal independent
/// subset found by pivoting.
pub fn least_squares(columns: &[Vec<f64>], y: &[f64]) -> LeastSquares {
    let n = y.len();
    let p = columns.len();
    debug_assert!(columns.iter().all(|c| c.len() == n));

    let y_mean = mean(y);
    let means: Vec<f64> = columns.iter().map(|c| mean(c)).collect();

    let mut a: Vec<Vec<f64>> = columns
        .iter()
        .zip(&means)
        .map(|(c, &m)| c.iter().map(|v| v - m).collect())
        .collect();
    let mut scales = vec![0.0; p];
    for (col, s) in a.iter_mut().zip(scales.iter_mut()) {
        *s = norm(col);
        if *s > 0.0 {
            col.iter_mut().for_each(|v| *v /= *s);
        }
    }
    let mut rhs: Vec<f64> = y.iter().map(|v| v - y_mean).collect();

    // perm[k] = original column sitting at position k
    let mut perm: Vec<usize> = (0..p).collect();
    let mut rank = 0;
    let mut first_pivot = 0.0f64;
    let mut diag = Vec::with_capacity(p);

    for k in 0..p.min(n) {
        let (best, best_norm) = (k..p)
            .map(|j| (j, norm(&a[j][k..])))
            .fold((k, -1.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        if k == 0 {
            first_pivot = best_norm;
        }
        if best_norm <= PIVOT_TOLERANCE * first_pivot.max(f64::MIN_POSITIVE) || best_norm == 0.0 {
            break;
        }
        a.swap(k, best);
        perm.swap(k, best);

        // Householder reflector zeroing a[k][k+1..]
        let alpha = if a[k][k] > 0.0 { -best_norm } else { best_norm };
        let mut v: Vec<f64> = a[k][k..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            for col in a.iter_mut().skip(k + 1) {
                apply_reflector(&v, vnorm2, &mut col[k..]);
            }
            apply_reflector(&v, vnorm2, &mut rhs[k..]);
        }
        a[k][k] = alpha;
        for x in a[k][k + 1..].iter_mut() {
            *x = 0.0;
        }
        diag.push(alpha);
        rank += 1;
    }

    // Back substitution on the leading rank×rank triangle.
    let mut b = vec![0.0; rank];
    for i in (0..rank).rev() {
        let mut s = rhs[i];
        for j in i + 1..rank {
            s -= a[j][i] * b[j];
        }
        b[i] = s / diag[i];
    }

    let mut coefficients = vec![0.0; p];
    for (pos, &orig) in perm.iter().take(rank).enumerate() {
        coefficients[orig] = if scales[orig] > 0.0 { b[pos] / scales[orig] } else { 0.0 };
    }
    let mut dependent: Vec<usize> = perm[rank..].to_vec();
    dependent.sort_unstable();

    let intercept = y_mean - coefficients.iter().zip(&means).map(|(c, m)| c * m).sum::<f64>();
    LeastSquares { intercept, coefficients, rank, dependent }
}

fn apply_reflector(v: &[f64], vnorm2: f64, x: &mut [f64]) {
    let dot: f64 = v.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
    let f = 2.0 * dot / vnorm2;
    for (xi, vi) in x.iter_mut().zip(v) {
        *xi -= f * vi;
    }
}

/// Inverse of a symmetric positive definite matrix by Cholesky.
///
/// Returns `None` when a pivot falls below `PIVOT_TOLERANCE` relative to the
/// largest diagonal entry, i.e. the matrix is numerically singular.
pub fn spd_inverse(m: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let p = m.len();
    let max_diag = (0..p).map(|i| m[i][i]).fold(0.0f64, f64::max);
    let mut l = vec![vec![0.0; p]; p];
    for i in 0..p {
        for j in 0..=i {
            let s: f64 = m[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            if i == j {
                if s <= PIVOT_TOLERANCE * PIVOT_TOLERANCE * max_diag {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    // inv(L), lower triangular
    let mut li = vec![vec![0.0; p]; p];
    for i in 0..p {
        li[i][i] = 1.0 / l[i][i];
        for j in 0..i {
            let s: f64 = (j..i).map(|k| l[i][k] * li[k][j]).sum();
            li[i][j] = -s / l[i][i];
        }
    }
    // inv(M) = inv(L)^T inv(L)
    let mut inv = vec![vec![0.0; p]; p];
    for i in 0..p {
        for j in 0..=i {
            let s: f64 = (i..p).map(|k| li[k][i] * li[k][j]).sum();
            inv[i][j] = s;
            inv[j][i] = s;
        }
    }
    Some(inv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let x = vec![vec![1.0, 2.0, 3.0, 4.0, 5.0]];
        let y: Vec<f64> = x[0].iter().map(|v| 3.0 + 2.0 * v).collect();
        let fit = least_squares(&x, &y);
        assert!((fit.intercept - 3.0).abs() < 1e-12);
        assert!((fit.coefficients[0] - 2.0).abs() < 1e-12);
        assert_eq!(fit.rank, 1);
    }

    #[test]
    fn duplicate_column_is_dependent() {
        let c = vec![1.0, 4.0, 2.0, 8.0, 5.0];
        let x = vec![c.clone(), vec![0.5, 0.1, 0.9, 0.3, 0.2], c.clone()];
        let y = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let fit = least_squares(&x, &y);
        assert_eq!(fit.rank, 2);
        assert_eq!(fit.dependent.len(), 1);
    }

    #[test]
    fn constant_column_is_dependent_on_intercept() {
        let x = vec![vec![7.0; 4], vec![1.0, 2.0, 3.0, 5.0]];
        let y = vec![2.0, 4.0, 6.0, 10.0];
        let fit = least_squares(&x, &y);
        assert_eq!(fit.dependent, vec![0]);
        assert!((fit.coefficients[1] - 2.0).abs() < 1e-12);
        assert!(fit.intercept.abs() < 1e-12);
    }

    #[test]
    fn spd_inverse_of_known_matrix() {
        let m = vec![vec![4.0, 2.0], vec![2.0, 3.0]];
        let inv = spd_inverse(&m).unwrap();
        // det = 8
        let expect = [[3.0 / 8.0, -2.0 / 8.0], [-2.0 / 8.0, 4.0 / 8.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((inv[i][j] - expect[i][j]).abs() < 1e-14);
            }
        }
        assert!(spd_inverse(&[vec![1.0, 1.0], vec![1.0, 1.0]]).is_none());
    }
}
