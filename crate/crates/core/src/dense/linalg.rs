//! Thin SVD and symmetric eigendecomposition, backed by nalgebra.

use nalgebra::DMatrix;

use super::DenseMatrix;
use crate::error::{Error, Result};

fn to_na(a: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(a.rows(), a.cols(), a.as_slice())
}

fn from_na(m: &DMatrix<f64>) -> DenseMatrix {
    DenseMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Truncated singular value decomposition.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    /// rows × k, orthonormal columns
    pub left: DenseMatrix,
    /// non-increasing, length k
    pub values: Vec<f64>,
    /// cols × k, orthonormal columns
    pub right: DenseMatrix,
}

impl ThinSvd {
    pub fn reconstruct(&self) -> DenseMatrix {
        let scaled = self.left.scale_cols(&self.values).expect("shapes agree");
        scaled.matmul_nt(&self.right).expect("shapes agree")
    }
}

/// Top-`k` singular triplets of `a`.
pub fn thin_svd(a: &DenseMatrix, k: usize) -> Result<ThinSvd> {
    let full = a.rows().min(a.cols());
    if k == 0 || k > full {
        return Err(Error::InvalidInput(format!(
            "requested {k} singular triplets from a {}x{} matrix",
            a.rows(),
            a.cols()
        )));
    }
    let svd = to_na(a)
        .try_svd(true, true, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numeric("SVD did not converge".into()))?;
    let u = svd.u.expect("requested");
    let vt = svd.v_t.expect("requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&x, &y| svd.singular_values[y].total_cmp(&svd.singular_values[x]));
    order.truncate(k);
    let values = order.iter().map(|&i| svd.singular_values[i]).collect();
    let left = DenseMatrix::from_fn(a.rows(), k, |i, j| u[(i, order[j])]);
    let right = DenseMatrix::from_fn(a.cols(), k, |i, j| vt[(order[j], i)]);
    Ok(ThinSvd {
        left,
        values,
        right,
    })
}

/// Eigenpairs of a symmetric matrix, eigenvalues ascending; eigenvectors are
/// the columns of the returned matrix.
pub fn symmetric_eigen(a: &DenseMatrix) -> Result<(Vec<f64>, DenseMatrix)> {
    if a.rows() != a.cols() {
        return Err(Error::dims("square matrix", format!("{}x{}", a.rows(), a.cols())));
    }
    let sym = to_na(a);
    let sym = (&sym + sym.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::try_new(sym, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numeric("symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = from_na(&eig.eigenvectors);
    Ok((values, vecs.select_columns(&order)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::RngStream;

    #[test]
    fn diagonal_and_rank_one() {
        let d = DenseMatrix::from_rows(&[vec![3.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let s = thin_svd(&d, 1).unwrap();
        assert!((s.values[0] - 3.0).abs() < 1e-14);

        let u = [1.0, 2.0, 2.0];
        let v = [3.0, 4.0];
        let a = DenseMatrix::from_fn(3, 2, |i, j| u[i] * v[j]);
        let s = thin_svd(&a, 1).unwrap();
        assert!((s.values[0] - 15.0).abs() < 1e-12);
        assert!(thin_svd(&a, 3).is_err());
        assert!(thin_svd(&a, 0).is_err());
    }

    #[test]
    fn full_rank_reconstruction_and_orthonormality() {
        let mut rng = RngStream::new(5);
        let a = DenseMatrix::from_fn(5, 5, |_, _| rng.normal());
        let s = thin_svd(&a, 5).unwrap();
        assert!(s.reconstruct().sub(&a).unwrap().frobenius() < 1e-10);
        for w in s.values.windows(2) {
            assert!(w[0] >= w[1]);
        }
        let utu = s.left.matmul_tn(&s.left).unwrap();
        let vtv = s.right.matmul_tn(&s.right).unwrap();
        assert!(utu.max_abs_diff(&DenseMatrix::identity(5)).unwrap() < 1e-10);
        assert!(vtv.max_abs_diff(&DenseMatrix::identity(5)).unwrap() < 1e-10);
    }

    #[test]
    fn truncation_error_bounded_by_next_singular_value() {
        let mut rng = RngStream::new(9);
        let a = DenseMatrix::from_fn(7, 6, |_, _| rng.normal());
        let all = thin_svd(&a, 6).unwrap();
        let top = thin_svd(&a, 3).unwrap();
        let err = top.reconstruct().sub(&a).unwrap().frobenius();
        assert!(err <= all.values[3] * 6f64.sqrt() + 1e-12);
    }

    #[test]
    fn eigen_ascending() {
        let a = DenseMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let (vals, vecs) = symmetric_eigen(&a).unwrap();
        assert!((vals[0] - 1.0).abs() < 1e-12 && (vals[1] - 3.0).abs() < 1e-12);
        assert!((vecs[(0, 0)] + vecs[(1, 0)]).abs() < 1e-12);
    }
}
