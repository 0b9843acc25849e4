use crate::error::{Error, Result};
use crate::model::AcquisitionTimeline;

/// Sampled exponential `exp(-alpha * t_l)` at the frame mid-times.
pub fn exp_basis(alpha: f64, timeline: &AcquisitionTimeline) -> Result<Vec<f64>> {
    if alpha.is_nan() || alpha < 0.0 {
        return Err(Error::Domain(format!(
            "exponential rate must be >= 0, got {alpha}"
        )));
    }
    Ok(timeline
        .mid_times()
        .iter()
        .map(|t| (-alpha * t).exp())
        .collect())
}

/// `t_l^power * exp(-alpha * t_l)`, the kernel of the `power`-th derivative
/// of [`exp_basis`] with respect to `alpha` (up to the sign `(-1)^power`).
pub fn exp_basis_moment(alpha: f64, power: i32, timeline: &AcquisitionTimeline) -> Vec<f64> {
    timeline
        .mid_times()
        .iter()
        .map(|t| t.powi(power) * (-alpha * t).exp())
        .collect()
}

/// Causal discrete convolution, i.e. a lower-triangular Toeplitz matrix whose
/// first column is the kernel. Applied matrix-free.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvOperator {
    kernel: Vec<f64>,
}

impl ConvOperator {
    pub fn new(kernel: Vec<f64>) -> Result<Self> {
        if kernel.is_empty() {
            return Err(Error::Domain("convolution kernel must be non-empty".into()));
        }
        Ok(Self { kernel })
    }

    pub fn identity(len: usize) -> Self {
        let mut kernel = vec![0.0; len.max(1)];
        kernel[0] = 1.0;
        Self { kernel }
    }

    pub fn len(&self) -> usize {
        self.kernel.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernel.is_empty()
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    /// `(op x)_l = sum_{j <= l} kernel[l - j] x_j`
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x.len())?;
        let mut out = vec![0.0; x.len()];
        self.apply_into(x, &mut out);
        Ok(out)
    }

    /// Transpose (adjoint): `(op^T y)_j = sum_{l >= j} kernel[l - j] y_l`
    pub fn apply_transpose(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check(y.len())?;
        let mut out = vec![0.0; y.len()];
        self.apply_transpose_into(y, &mut out);
        Ok(out)
    }

    pub(crate) fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        for (l, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for j in 0..=l {
                acc += self.kernel[l - j] * x[j];
            }
            *o = acc;
        }
    }

    pub(crate) fn apply_transpose_into(&self, y: &[f64], out: &mut [f64]) {
        let n = y.len();
        for (j, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for l in j..n {
                acc += self.kernel[l - j] * y[l];
            }
            *o = acc;
        }
    }

    pub fn to_dense(&self) -> ndarray::Array2<f64> {
        crate::linalg::dense_causal_toeplitz(&self.kernel)
    }

    fn check(&self, len: usize) -> Result<()> {
        if len != self.kernel.len() {
            return Err(Error::dim("convolution input", self.kernel.len(), len));
        }
        Ok(())
    }
}

/// Free-function constructor mirroring [`ConvOperator::new`].
pub fn conv_operator(kernel: Vec<f64>) -> Result<ConvOperator> {
    ConvOperator::new(kernel)
}
