use nalgebra::{DMatrix, DVector};

/// A linear map `R^ncols -> R^nrows` that can also apply its transpose.
pub trait LinearOperator {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    fn apply(&self, x: &DVector<f64>) -> DVector<f64>;
    fn apply_transpose(&self, y: &DVector<f64>) -> DVector<f64>;

    fn apply_mat(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.nrows(), x.ncols());
        for (j, col) in x.column_iter().enumerate() {
            out.set_column(j, &self.apply(&col.into_owned()));
        }
        out
    }

    fn apply_transpose_mat(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.ncols(), y.ncols());
        for (j, col) in y.column_iter().enumerate() {
            out.set_column(j, &self.apply_transpose(&col.into_owned()));
        }
        out
    }
}

impl LinearOperator for DMatrix<f64> {
    fn nrows(&self) -> usize {
        self.nrows()
    }
    fn ncols(&self) -> usize {
        self.ncols()
    }
    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        self * x
    }
    fn apply_transpose(&self, y: &DVector<f64>) -> DVector<f64> {
        self.tr_mul(y)
    }
    fn apply_mat(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self * x
    }
    fn apply_transpose_mat(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        self.tr_mul(y)
    }
}
