//! Dense symmetric eigensolver (cyclic Jacobi).

/// Row-major dense matrix as nested vectors.
pub type Matrix = Vec<Vec<f64>>;

pub const JACOBI_TOLERANCE: f64 = 1e-10;
const MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    /// Eigenvalues in descending order.
    pub values: Vec<f64>,
    /// `vectors[i]` is the unit eigenvector for `values[i]`.
    pub vectors: Vec<Vec<f64>>,
    pub sweeps: usize,
}

fn off_diagonal_norm(a: &Matrix) -> f64 {
    let n = a.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[i][j] * a[i][j];
            }
        }
    }
    s.sqrt()
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Sweeps stop once the off-diagonal Frobenius norm falls below
/// `tol · max(1, ‖A‖_F)`.
///
/// Eigenvector signs are fixed so that the largest-magnitude component is
/// positive.
pub fn jacobi_eigen(matrix: &Matrix, tol: f64) -> SymmetricEigen {
    let n = matrix.len();
    let mut a = matrix.clone();
    let mut v: Matrix = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let scale = a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt().max(1.0);

    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS && off_diagonal_norm(&a) > tol * scale {
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].total_cmp(&a[i][i]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vectors = order
        .iter()
        .map(|&i| {
            let mut col: Vec<f64> = v.iter().map(|row| row[i]).collect();
            let pivot = col
                .iter()
                .copied()
                .fold(0.0_f64, |m, x| if x.abs() > m.abs() { x } else { m });
            if pivot < 0.0 {
                col.iter_mut().for_each(|x| *x = -*x);
            }
            col
        })
        .collect();
    SymmetricEigen {
        values,
        vectors,
        sweeps,
    }
}
