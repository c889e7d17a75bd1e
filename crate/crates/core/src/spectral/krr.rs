//! Dense kernel ridge regression, used as a small-scale reference solution.

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;

use crate::error::{Error, Result};

const RESIDUAL_TOL: f64 = 1e-8;

/// Exact minimizer of `(1/n) Σ ℓ₂(y_i, f(x_i)) + μ‖f‖²` over the RKHS of
/// `kernel`, i.e. `f(x) = Σ α_i k(x_i, x)` with `α = (K + nμI)⁻¹ y`.
pub struct KrrOracle<K> {
    train: Vec<Vec<f64>>,
    alpha: Vec<f64>,
    kernel: K,
}

impl<K> KrrOracle<K>
where
    K: Fn(&[f64], &[f64]) -> f64,
{
    pub fn fit(x: &Array2<f64>, y: &[f64], kernel: K, mu: f64) -> Result<Self> {
        let n = x.nrows();
        if n == 0 || y.len() != n {
            return Err(Error::arg(format!("{n} rows but {} targets", y.len())));
        }
        if !(mu > 0.0) {
            return Err(Error::arg(format!("ridge parameter must be > 0, got {mu}")));
        }
        let rows: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
        let mut gram = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let k = kernel(&rows[i], &rows[j]);
                gram[(i, j)] = k;
                gram[(j, i)] = k;
            }
        }
        for i in 0..n {
            gram[(i, i)] += n as f64 * mu;
        }
        let alpha = solve_spd(gram, DVector::from_column_slice(y))?;
        Ok(KrrOracle {
            train: rows,
            alpha: alpha.as_slice().to_vec(),
            kernel,
        })
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn predict_one(&self, x: &[f64]) -> f64 {
        self.train
            .iter()
            .zip(&self.alpha)
            .map(|(row, a)| a * (self.kernel)(row, x))
            .sum()
    }

    pub fn predict(&self, x: &Array2<f64>) -> Vec<f64> {
        x.rows()
            .into_iter()
            .map(|r| self.predict_one(&r.to_vec()))
            .collect()
    }
}

/// Minimizer of `(1/n)‖y − Zβ‖² + μ‖β‖²` for an explicit `n × s` feature
/// matrix. Solves in whichever of the primal (`s × s`) or dual (`n × n`)
/// spaces is smaller.
pub fn feature_ridge(z: &Array2<f64>, y: &[f64], mu: f64) -> Result<Vec<f64>> {
    let (n, s) = z.dim();
    if n == 0 || y.len() != n {
        return Err(Error::arg(format!("{n} rows but {} targets", y.len())));
    }
    if !(mu > 0.0) {
        return Err(Error::arg(format!("ridge parameter must be > 0, got {mu}")));
    }
    let zm = DMatrix::from_row_iterator(n, s, z.iter().copied());
    let yv = DVector::from_column_slice(y);
    let shift = n as f64 * mu;
    let beta = if s <= n {
        let mut a = zm.tr_mul(&zm);
        for i in 0..s {
            a[(i, i)] += shift;
        }
        solve_spd(a, zm.tr_mul(&yv))?
    } else {
        let mut a = &zm * zm.transpose();
        for i in 0..n {
            a[(i, i)] += shift;
        }
        zm.tr_mul(&solve_spd(a, yv)?)
    };
    Ok(beta.as_slice().to_vec())
}

fn solve_spd(a: DMatrix<f64>, b: DVector<f64>) -> Result<DVector<f64>> {
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("system matrix is not positive definite".into()))?;
    let x = chol.solve(&b);
    let resid = (&a * &x - &b).norm();
    let scale = b.norm().max(f64::MIN_POSITIVE);
    if !resid.is_finite() || (b.norm() > 0.0 && resid / scale > RESIDUAL_TOL) {
        return Err(Error::Numerical(format!(
            "linear solve residual {:.3e} exceeds tolerance",
            resid / scale
        )));
    }
    Ok(x)
}
