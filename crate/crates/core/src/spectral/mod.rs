//! Random Fourier features for the Gaussian ARD kernel.
//!
//! The ARD kernel `k_λ(x, y) = h(λ ∘ (x − y))` is a data scaling of the
//! unit-relevance kernel `h`. Its spectral density is the unit density with
//! `λ_j` acting as a per-coordinate scale, so a single frozen draw of
//! frequencies for `h` approximates `k_λ` for every `λ` through
//! `z(λ ∘ x)ᵀ z(λ ∘ y)`. Training therefore never resamples the feature map.

mod krr;

pub use krr::{feature_ridge, KrrOracle};

use std::f64::consts::TAU;

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng;

/// Draws frequency vectors from the spectral density of a unit-relevance,
/// shift-invariant kernel.
pub trait SpectralSampler {
    /// Stable name recorded alongside sampled features.
    fn id(&self) -> &'static str;

    /// Fills `out` (length `p`) with one frequency vector.
    fn sample_frequency<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]);
}

/// Spectral density of `exp(−½‖δ‖²)`: the standard `p`-variate normal.
#[derive(Debug, Clone, Copy, Default)]
pub struct GaussianSpectral;

impl SpectralSampler for GaussianSpectral {
    fn id(&self) -> &'static str {
        "gaussian"
    }

    fn sample_frequency<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for w in out.iter_mut() {
            *w = rng.sample(StandardNormal);
        }
    }
}

/// Frozen randomness of a feature map: `s` frequency rows of dimension `p`
/// and one phase per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierFeatures {
    omega: Array2<f64>,
    phases: Array1<f64>,
}

impl FourierFeatures {
    /// Builds a feature map from explicit frequencies (`s × p`) and phases.
    pub fn new(omega: Array2<f64>, phases: Array1<f64>) -> Result<Self> {
        let (s, p) = omega.dim();
        if s == 0 || p == 0 {
            return Err(Error::arg(format!(
                "feature map needs s >= 1 and p >= 1, got s={s}, p={p}"
            )));
        }
        if phases.len() != s {
            return Err(Error::arg(format!(
                "{} phases for {s} frequency rows",
                phases.len()
            )));
        }
        if let Some(b) = phases.iter().find(|b| !(0.0..TAU).contains(*b)) {
            return Err(Error::arg(format!("phase {b} outside [0, 2π)")));
        }
        if omega.iter().any(|w| !w.is_finite()) {
            return Err(Error::arg("non-finite frequency"));
        }
        // Row-major storage is relied on by the hot loops.
        let omega = omega.as_standard_layout().into_owned();
        Ok(FourierFeatures { omega, phases })
    }

    /// Number of random features `s`.
    pub fn num_features(&self) -> usize {
        self.omega.nrows()
    }

    /// Input dimension `p`.
    pub fn dim(&self) -> usize {
        self.omega.ncols()
    }

    pub fn omega(&self) -> &Array2<f64> {
        &self.omega
    }

    pub fn phases(&self) -> &Array1<f64> {
        &self.phases
    }

    pub(crate) fn omega_row(&self, k: usize) -> &[f64] {
        let p = self.dim();
        &self.omega.as_slice().expect("standard layout")[k * p..(k + 1) * p]
    }

    /// `√(2/s)`, the common scale of every feature.
    pub(crate) fn amplitude(&self) -> f64 {
        (2.0 / self.num_features() as f64).sqrt()
    }

    /// Arguments `ω_kᵀ x + b_k` of every feature, written into `out`.
    pub(crate) fn project_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim());
        debug_assert_eq!(out.len(), self.num_features());
        for (k, (o, b)) in out.iter_mut().zip(self.phases.iter()).enumerate() {
            let row = self.omega_row(k);
            let dot: f64 = row.iter().zip(x).map(|(w, xi)| w * xi).sum();
            *o = dot + b;
        }
    }

    fn check_dim(&self, len: usize, what: &str) -> Result<()> {
        if len != self.dim() {
            return Err(Error::arg(format!(
                "{what} has dimension {len}, feature map expects {}",
                self.dim()
            )));
        }
        Ok(())
    }
}

/// Per-feature kernel weights `λ`. Signs carry no meaning.
#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceVector(Vec<f64>);

impl RelevanceVector {
    pub fn new(lambda: Vec<f64>) -> Result<Self> {
        if lambda.iter().any(|l| !l.is_finite()) {
            return Err(Error::arg("relevances must be finite"));
        }
        Ok(RelevanceVector(lambda))
    }

    /// The unit-relevance vector, under which `k_λ` is the unweighted kernel.
    pub fn ones(p: usize) -> Self {
        RelevanceVector(vec![1.0; p])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// `|λ| / max|λ|`, in `[0, 1]`. An all-zero vector maps to all zeros.
    pub fn scaled_importance(&self) -> Vec<f64> {
        let max = self.0.iter().fold(0.0_f64, |m, l| m.max(l.abs()));
        if max == 0.0 {
            return vec![0.0; self.0.len()];
        }
        self.0.iter().map(|l| l.abs() / max).collect()
    }

    /// `λ ∘ x`.
    pub(crate) fn scale_into(&self, x: &[f64], out: &mut [f64]) {
        for ((o, l), xi) in out.iter_mut().zip(&self.0).zip(x) {
            *o = l * xi;
        }
    }
}

/// Samples `s` Gaussian-kernel features for inputs of dimension `p`.
pub fn sample_features(p: usize, s: usize, seed: u64) -> Result<FourierFeatures> {
    sample_features_with(&GaussianSpectral, p, s, seed)
}

/// Samples `s` features from an arbitrary spectral density. Frequencies are
/// drawn row by row, then phases uniformly on `[0, 2π)`, all from one seeded
/// stream.
pub fn sample_features_with<S: SpectralSampler>(
    sampler: &S,
    p: usize,
    s: usize,
    seed: u64,
) -> Result<FourierFeatures> {
    if p == 0 || s == 0 {
        return Err(Error::arg(format!(
            "sample_features needs p >= 1 and s >= 1, got p={p}, s={s}"
        )));
    }
    let mut rng = rng::stream(seed, rng::STREAM_FEATURES);
    let mut omega = Array2::zeros((s, p));
    for mut row in omega.rows_mut() {
        sampler.sample_frequency(
            &mut rng,
            row.as_slice_mut().expect("rows of a fresh array are contiguous"),
        );
    }
    let phases = Array1::from_iter((0..s).map(|_| {
        let b = rng.random::<f64>() * TAU;
        if b >= TAU {
            0.0
        } else {
            b
        }
    }));
    FourierFeatures::new(omega, phases)
}

/// The feature map `z(x) = √(2/s) · (cos(ω_kᵀ x + b_k))_k`.
pub fn rff_map(x: &[f64], ff: &FourierFeatures) -> Result<Vec<f64>> {
    ff.check_dim(x.len(), "input")?;
    let mut z = vec![0.0; ff.num_features()];
    ff.project_into(x, &mut z);
    let amp = ff.amplitude();
    for v in z.iter_mut() {
        *v = amp * v.cos();
    }
    Ok(z)
}

/// Monte-Carlo ARD kernel `z(λ ∘ x)ᵀ z(λ ∘ y)`.
pub fn approx_kernel(
    x: &[f64],
    y: &[f64],
    lambda: &RelevanceVector,
    ff: &FourierFeatures,
) -> Result<f64> {
    ff.check_dim(x.len(), "x")?;
    ff.check_dim(y.len(), "y")?;
    ff.check_dim(lambda.len(), "relevance vector")?;
    let mut xs = vec![0.0; x.len()];
    let mut ys = vec![0.0; y.len()];
    lambda.scale_into(x, &mut xs);
    lambda.scale_into(y, &mut ys);
    let zx = rff_map(&xs, ff)?;
    let zy = rff_map(&ys, ff)?;
    Ok(zx.iter().zip(&zy).map(|(a, b)| a * b).sum())
}

/// Exact Gaussian ARD kernel `exp(−½ Σ_j λ_j² (x_j − y_j)²)`.
pub fn ard_gaussian_kernel(x: &[f64], y: &[f64], lambda: &RelevanceVector) -> Result<f64> {
    if x.len() != y.len() || x.len() != lambda.len() {
        return Err(Error::arg(format!(
            "dimension mismatch: x={}, y={}, λ={}",
            x.len(),
            y.len(),
            lambda.len()
        )));
    }
    let q: f64 = x
        .iter()
        .zip(y)
        .zip(lambda.as_slice())
        .map(|((a, b), l)| {
            let d = l * (a - b);
            d * d
        })
        .sum();
    Ok((-0.5 * q).exp())
}

/// Rows `λ ∘ ω_k`: samples from the spectral density of `k_λ`.
pub fn scaled_frequency_sample(ff: &FourierFeatures, lambda: &RelevanceVector) -> Result<Array2<f64>> {
    ff.check_dim(lambda.len(), "relevance vector")?;
    let lam = ArrayView1::from(lambda.as_slice());
    Ok(ff.omega() * &lam)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};

    fn single(omega: Array2<f64>, phases: Array1<f64>) -> FourierFeatures {
        FourierFeatures::new(omega, phases).unwrap()
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = sample_features(3, 5, 7).unwrap();
        let b = sample_features(3, 5, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample_features(3, 5, 8).unwrap());
    }

    #[test]
    fn sampling_rejects_empty_dimensions() {
        assert!(matches!(sample_features(0, 5, 1), Err(Error::Argument(_))));
        assert!(matches!(sample_features(3, 0, 1), Err(Error::Argument(_))));
    }

    #[test]
    fn sampled_frequencies_are_standard_normal() {
        let ff = sample_features(2, 100_000, 1).unwrap();
        for col in ff.omega().columns() {
            let n = col.len() as f64;
            let mean = col.sum() / n;
            let var = col.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / (n - 1.0);
            assert!(mean.abs() < 0.02, "mean {mean}");
            assert!((var - 1.0).abs() < 0.02, "var {var}");
        }
        assert!(ff.phases().iter().all(|b| (0.0..TAU).contains(b)));
    }

    #[test]
    fn feature_map_closed_forms() {
        let ff = single(array![[0.0, 0.0]], array![0.0]);
        let z = rff_map(&[3.0, -1.0], &ff).unwrap();
        assert_abs_diff_eq!(z[0], SQRT_2, epsilon = 1e-15);

        let ff = single(array![[0.0, 0.0]], array![FRAC_PI_2]);
        let z = rff_map(&[12.5, 4.0], &ff).unwrap();
        assert_abs_diff_eq!(z[0], 0.0, epsilon = 1e-15);

        let ff = single(array![[1.0], [0.0]], array![0.0, 0.0]);
        let z = rff_map(&[PI], &ff).unwrap();
        assert_abs_diff_eq!(z[0], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(z[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn feature_map_rejects_wrong_dimension() {
        let ff = sample_features(3, 4, 0).unwrap();
        assert!(rff_map(&[1.0, 2.0], &ff).is_err());
        assert!(approx_kernel(&[1.0; 3], &[1.0; 2], &RelevanceVector::ones(3), &ff).is_err());
    }

    #[test]
    fn feature_map_norm_bound() {
        let ff = sample_features(4, 50, 3).unwrap();
        let bound = (2.0 / 50.0_f64).sqrt();
        let z = rff_map(&[0.3, -2.0, 1.0, 5.0], &ff).unwrap();
        assert!(z.iter().all(|v| v.abs() <= bound + 1e-15));
        assert!(z.iter().map(|v| v * v).sum::<f64>() <= 2.0 + 1e-12);
    }

    #[test]
    fn zero_relevance_ignores_inputs() {
        let ff = sample_features(2, 16, 5).unwrap();
        let zero = RelevanceVector::new(vec![0.0, 0.0]).unwrap();
        let a = approx_kernel(&[1.0, 2.0], &[-3.0, 0.5], &zero, &ff).unwrap();
        let b = approx_kernel(&[9.0, -9.0], &[0.0, 0.0], &zero, &ff).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn approx_kernel_is_unbiased_on_a_fixed_pair() {
        let lambda = RelevanceVector::ones(2);
        let draws: Vec<f64> = (0..200)
            .map(|seed| {
                let ff = sample_features(2, 64, seed).unwrap();
                approx_kernel(&[0.0, 0.0], &[1.0, 1.0], &lambda, &ff).unwrap()
            })
            .collect();
        let (mean, se) = mean_and_se(&draws);
        assert!((mean - (-1.0_f64).exp()).abs() <= 3.0 * se, "{mean} ± {se}");
    }

    #[test]
    fn approx_kernel_diagonal_averages_to_one() {
        let x = [0.7, -1.2, 2.0];
        let lambda = RelevanceVector::new(vec![0.5, 1.5, -1.0]).unwrap();
        let draws: Vec<f64> = (0..200)
            .map(|seed| {
                let ff = sample_features(3, 64, 1000 + seed).unwrap();
                approx_kernel(&x, &x, &lambda, &ff).unwrap()
            })
            .collect();
        let (mean, se) = mean_and_se(&draws);
        assert!((mean - 1.0).abs() <= 3.0 * se, "{mean} ± {se}");
    }

    fn mean_and_se(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt())
    }

    #[test]
    fn exact_kernel_values() {
        let l = RelevanceVector::new(vec![1.0, 1.0]).unwrap();
        assert_eq!(ard_gaussian_kernel(&[0.4, 2.0], &[0.4, 2.0], &l).unwrap(), 1.0);
        let zero = RelevanceVector::new(vec![0.0, 0.0]).unwrap();
        assert_eq!(ard_gaussian_kernel(&[0.0, 5.0], &[3.0, -1.0], &zero).unwrap(), 1.0);
        assert_abs_diff_eq!(
            ard_gaussian_kernel(&[0.0, 0.0], &[1.0, 1.0], &l).unwrap(),
            0.367_879_441_171_442_3,
            epsilon = 1e-15
        );
        assert!(ard_gaussian_kernel(&[0.0], &[0.0, 1.0], &l).is_err());
    }

    #[test]
    fn scaled_frequencies() {
        let ff = sample_features(2, 10, 4).unwrap();
        let same = scaled_frequency_sample(&ff, &RelevanceVector::ones(2)).unwrap();
        assert_eq!(&same, ff.omega());

        let a = scaled_frequency_sample(&ff, &RelevanceVector::new(vec![2.0, 0.5]).unwrap()).unwrap();
        let b = scaled_frequency_sample(&ff, &RelevanceVector::new(vec![-2.0, 0.5]).unwrap()).unwrap();
        for k in 0..10 {
            assert_eq!(a[[k, 0]], 2.0 * ff.omega()[[k, 0]]);
            assert_eq!(a[[k, 0]], -b[[k, 0]]);
            assert_eq!(a[[k, 1]], b[[k, 1]]);
        }
    }

    #[test]
    fn importance_scaling() {
        let l = RelevanceVector::new(vec![-2.0, 1.0, 0.0]).unwrap();
        assert_eq!(l.scaled_importance(), vec![1.0, 0.5, 0.0]);
        let z = RelevanceVector::new(vec![0.0; 4]).unwrap();
        assert_eq!(z.scaled_importance(), vec![0.0; 4]);
        assert!(RelevanceVector::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn constructor_validates_phases() {
        assert!(FourierFeatures::new(array![[1.0]], array![TAU]).is_err());
        assert!(FourierFeatures::new(array![[1.0]], array![-0.1]).is_err());
        assert!(FourierFeatures::new(array![[1.0], [2.0]], array![0.1]).is_err());
    }
}
