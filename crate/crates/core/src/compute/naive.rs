use crate::element::Element;
use crate::error::Result;
use crate::model::{validate_problem, MatrixView, MatrixViewMut, Problem};

/// Literal three-loop GEMM, the correctness oracle.
///
/// Each element is evaluated as `acc = beta * c; acc += (alpha * a[i][p]) * b[p][j]`
/// for ascending `p`, the same order the packed path uses.
pub fn naive_gemm<T: Element>(
    p: &Problem<T>,
    a: &MatrixView<'_, T>,
    b: &MatrixView<'_, T>,
    c: &mut MatrixViewMut<'_, T>,
) -> Result<()> {
    validate_problem(p, a, b, &c.as_view())?;
    for i in 0..p.m {
        for j in 0..p.n {
            let mut acc = p.beta * c.get(i, j);
            for q in 0..p.k {
                acc = acc + (p.alpha * a.get(i, q)) * b.get(q, j);
            }
            c.set(i, j, acc);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Matrix, StorageOrder};

    #[test]
    fn scalar_fma() {
        let p = Problem::new(1, 1, 1, 1.0f64, 1.0).unwrap();
        let a = Matrix::filled(1, 1, StorageOrder::RowMajor, 2.0);
        let b = Matrix::filled(1, 1, StorageOrder::RowMajor, 3.0);
        let mut c = Matrix::filled(1, 1, StorageOrder::RowMajor, 5.0);
        naive_gemm(&p, &a.view(), &b.view(), &mut c.view_mut()).unwrap();
        assert_eq!(c.get(0, 0), 11.0);
    }

    #[test]
    fn identity_copies_b() {
        let p = Problem::new(3, 2, 3, 1.0f32, 0.0).unwrap();
        let a = Matrix::from_fn(3, 3, StorageOrder::ColMajor, |i, j| if i == j { 1.0 } else { 0.0 });
        let b = Matrix::from_fn(3, 2, StorageOrder::RowMajor, |i, j| (i * 2 + j) as f32 + 0.5);
        let mut c = Matrix::filled(3, 2, StorageOrder::RowMajor, 7.0);
        naive_gemm(&p, &a.view(), &b.view(), &mut c.view_mut()).unwrap();
        assert_eq!(c, b);
    }

    #[test]
    fn hand_computed_3x3() {
        // A = [[1,2,3],[4,5,6],[7,8,9]], B = [[1,0,2],[0,1,0],[3,1,1]], C = I
        // alpha = 2, beta = -1:
        // AB = [[10,5,5],[22,11,14],[34,17,23]]; 2AB - I
        let p = Problem::new(3, 3, 3, 2.0f64, -1.0).unwrap();
        let a = Matrix::from_fn(3, 3, StorageOrder::RowMajor, |i, j| (i * 3 + j + 1) as f64);
        let bv = [[1.0, 0.0, 2.0], [0.0, 1.0, 0.0], [3.0, 1.0, 1.0]];
        let b = Matrix::from_fn(3, 3, StorageOrder::RowMajor, |i, j| bv[i][j]);
        let mut c = Matrix::from_fn(3, 3, StorageOrder::ColMajor, |i, j| if i == j { 1.0 } else { 0.0 });
        naive_gemm(&p, &a.view(), &b.view(), &mut c.view_mut()).unwrap();
        let expected = [[19.0, 10.0, 10.0], [44.0, 21.0, 28.0], [68.0, 34.0, 45.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(c.get(i, j), expected[i][j]);
            }
        }
    }

    #[test]
    fn rejects_mismatched_views() {
        let p = Problem::new(2, 2, 2, 1.0f64, 0.0).unwrap();
        let a = Matrix::filled(2, 3, StorageOrder::RowMajor, 1.0);
        let b = Matrix::filled(2, 2, StorageOrder::RowMajor, 1.0);
        let mut c = Matrix::filled(2, 2, StorageOrder::RowMajor, 1.0);
        assert!(naive_gemm(&p, &a.view(), &b.view(), &mut c.view_mut()).is_err());
    }
}
