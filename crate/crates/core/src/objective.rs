//! Losses, the regularized training objective and its block gradients.
//!
//! The objective over a sample `{(x_i, y_i)}` is
//! `(1/n) Σ ℓ(y_i, βᵀ z(λ ∘ x_i)) + μ‖β‖²`. Gradients cover only the data
//! term `H(β, λ)`; the ridge term is handled by [`prox_l2`].

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::spectral::{FourierFeatures, RelevanceVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    /// `(y − score)²` on real targets.
    SquaredError,
    /// Logistic cross-entropy on `{0, 1}` targets; scores are logits.
    BinaryCrossEntropy,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::SquaredError => "squared",
            LossKind::BinaryCrossEntropy => "cross-entropy",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "squared" => Some(LossKind::SquaredError),
            "cross-entropy" => Some(LossKind::BinaryCrossEntropy),
            _ => None,
        }
    }

    pub fn check_target(self, y: f64) -> Result<()> {
        match self {
            LossKind::SquaredError if !y.is_finite() => {
                Err(Error::arg(format!("regression target {y} is not finite")))
            }
            LossKind::BinaryCrossEntropy if y != 0.0 && y != 1.0 => Err(Error::arg(format!(
                "cross-entropy target must be 0 or 1, got {y}"
            ))),
            _ => Ok(()),
        }
    }

    pub(crate) fn check_targets(self, y: &[f64]) -> Result<()> {
        y.iter().try_for_each(|&t| self.check_target(t))
    }

    /// Loss at a target already known to be valid.
    #[inline]
    pub(crate) fn value_unchecked(self, y: f64, score: f64) -> f64 {
        match self {
            LossKind::SquaredError => {
                let r = y - score;
                r * r
            }
            LossKind::BinaryCrossEntropy => {
                y * softplus(-score) + (1.0 - y) * softplus(score)
            }
        }
    }

    /// `∂ℓ/∂score`.
    #[inline]
    pub(crate) fn derivative(self, y: f64, score: f64) -> f64 {
        match self {
            LossKind::SquaredError => 2.0 * (score - y),
            LossKind::BinaryCrossEntropy => sigmoid(score) - y,
        }
    }
}

/// `ln(1 + eᵗ)` without overflow.
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// Logistic function, evaluated on the branch that cannot overflow.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

pub fn loss_value(kind: LossKind, y: f64, score: f64) -> Result<f64> {
    kind.check_target(y)?;
    Ok(kind.value_unchecked(y, score))
}

/// Learnable parameters plus the ridge weight.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveParams {
    pub beta: Vec<f64>,
    pub lambda: RelevanceVector,
    pub mu: f64,
}

impl ObjectiveParams {
    fn check(&self, x: &Array2<f64>, y: &[f64], ff: &FourierFeatures) -> Result<()> {
        let (n, p) = x.dim();
        if n == 0 {
            return Err(Error::arg("objective needs at least one row"));
        }
        if y.len() != n {
            return Err(Error::arg(format!("{n} rows but {} targets", y.len())));
        }
        if p != ff.dim() || self.lambda.len() != p {
            return Err(Error::arg(format!(
                "input dimension {p}, relevances {}, feature map {}",
                self.lambda.len(),
                ff.dim()
            )));
        }
        if self.beta.len() != ff.num_features() {
            return Err(Error::arg(format!(
                "{} coefficients for {} features",
                self.beta.len(),
                ff.num_features()
            )));
        }
        if !(self.mu >= 0.0) || !self.mu.is_finite() {
            return Err(Error::arg(format!("regularization must be >= 0, got {}", self.mu)));
        }
        Ok(())
    }
}

/// Unregularized mean loss `H(β, λ)`.
pub fn data_loss(
    x: &Array2<f64>,
    y: &[f64],
    params: &ObjectiveParams,
    ff: &FourierFeatures,
    kind: LossKind,
) -> Result<f64> {
    params.check(x, y, ff)?;
    kind.check_targets(y)?;
    let x = x.as_standard_layout();
    let all: Vec<usize> = (0..x.nrows()).collect();
    let mut block = FeatureBlock::default();
    block.fill(x.view(), &all, &params.lambda, ff);
    Ok(block.mean_loss(&params.beta, y, &all, kind, ff.amplitude()))
}

/// `H(β, λ) + μ‖β‖²`.
pub fn objective_value(
    x: &Array2<f64>,
    y: &[f64],
    params: &ObjectiveParams,
    ff: &FourierFeatures,
    kind: LossKind,
) -> Result<f64> {
    let h = data_loss(x, y, params, ff, kind)?;
    Ok(h + params.mu * params.beta.iter().map(|b| b * b).sum::<f64>())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub beta: Vec<f64>,
    pub lambda: Vec<f64>,
}

/// Gradients of `H` with respect to `β` and `λ`, both at the given point.
pub fn gradients(
    x: &Array2<f64>,
    y: &[f64],
    params: &ObjectiveParams,
    ff: &FourierFeatures,
    kind: LossKind,
) -> Result<Gradients> {
    params.check(x, y, ff)?;
    kind.check_targets(y)?;
    let x = x.as_standard_layout();
    let all: Vec<usize> = (0..x.nrows()).collect();
    let mut block = FeatureBlock::default();
    block.fill(x.view(), &all, &params.lambda, ff);
    let amp = ff.amplitude();
    let derivs = block.derivatives(&params.beta, y, &all, kind, amp);
    let mut beta = vec![0.0; ff.num_features()];
    let mut lambda = vec![0.0; ff.dim()];
    block.grad_beta(&derivs, amp, &mut beta);
    block.grad_lambda(x.view(), &all, &params.beta, &derivs, ff, &mut lambda);
    Ok(Gradients { beta, lambda })
}

/// Proximal map of `u ↦ μ‖u‖²` with step `eta`: `v / (1 + 2ημ)`.
pub fn prox_l2(v: &[f64], eta: f64, mu: f64) -> Result<Vec<f64>> {
    if !(eta > 0.0) {
        return Err(Error::arg(format!("prox step must be > 0, got {eta}")));
    }
    if !(mu >= 0.0) {
        return Err(Error::arg(format!("regularization must be >= 0, got {mu}")));
    }
    Ok(v.iter().map(|&x| shrink(x, eta, mu)).collect())
}

/// One coordinate of [`prox_l2`].
#[inline]
pub(crate) fn shrink(v: f64, step: f64, mu: f64) -> f64 {
    v / (1.0 + 2.0 * step * mu)
}

/// Cosines and sines of `ω_kᵀ(λ ∘ x_i) + b_k` for a set of rows, kept so the
/// `β` and `λ` gradients of one minibatch share a single projection.
#[derive(Debug, Default)]
pub(crate) struct FeatureBlock {
    rows: usize,
    s: usize,
    cos: Vec<f64>,
    sin: Vec<f64>,
    scaled: Vec<f64>,
}

impl FeatureBlock {
    pub(crate) fn fill(
        &mut self,
        x: ArrayView2<'_, f64>,
        idx: &[usize],
        lambda: &RelevanceVector,
        ff: &FourierFeatures,
    ) {
        let s = ff.num_features();
        let p = ff.dim();
        self.rows = idx.len();
        self.s = s;
        self.cos.resize(idx.len() * s, 0.0);
        self.sin.resize(idx.len() * s, 0.0);
        self.scaled.resize(p, 0.0);
        for (r, &i) in idx.iter().enumerate() {
            let row = x.row(i);
            let row = row.as_slice().expect("standard layout");
            lambda.scale_into(row, &mut self.scaled);
            let cos = &mut self.cos[r * s..(r + 1) * s];
            ff.project_into(&self.scaled, cos);
            let sin = &mut self.sin[r * s..(r + 1) * s];
            for (c, sn) in cos.iter_mut().zip(sin.iter_mut()) {
                let (a, b) = c.sin_cos();
                *sn = a;
                *c = b;
            }
        }
    }

    fn cos_row(&self, r: usize) -> &[f64] {
        &self.cos[r * self.s..(r + 1) * self.s]
    }

    fn sin_row(&self, r: usize) -> &[f64] {
        &self.sin[r * self.s..(r + 1) * self.s]
    }

    pub(crate) fn score(&self, r: usize, beta: &[f64], amp: f64) -> f64 {
        amp * self
            .cos_row(r)
            .iter()
            .zip(beta)
            .map(|(c, b)| c * b)
            .sum::<f64>()
    }

    pub(crate) fn mean_loss(
        &self,
        beta: &[f64],
        y: &[f64],
        idx: &[usize],
        kind: LossKind,
        amp: f64,
    ) -> f64 {
        let total: f64 = idx
            .iter()
            .enumerate()
            .map(|(r, &i)| kind.value_unchecked(y[i], self.score(r, beta, amp)))
            .sum();
        total / self.rows as f64
    }

    pub(crate) fn derivatives(
        &self,
        beta: &[f64],
        y: &[f64],
        idx: &[usize],
        kind: LossKind,
        amp: f64,
    ) -> Vec<f64> {
        idx.iter()
            .enumerate()
            .map(|(r, &i)| kind.derivative(y[i], self.score(r, beta, amp)))
            .collect()
    }

    /// `(1/B) Σ_i ℓ′_i z(λ ∘ x_i)`, written into `out`.
    pub(crate) fn grad_beta(&self, derivs: &[f64], amp: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|g| *g = 0.0);
        for (r, d) in derivs.iter().enumerate() {
            let w = d * amp;
            for (g, c) in out.iter_mut().zip(self.cos_row(r)) {
                *g += w * c;
            }
        }
        let inv = 1.0 / self.rows as f64;
        out.iter_mut().for_each(|g| *g *= inv);
    }

    /// `(1/B) Σ_i ℓ′_i · (−√(2/s)) · x_ij · Σ_k β_k sin(·)_ik ω_kj`.
    pub(crate) fn grad_lambda(
        &self,
        x: ArrayView2<'_, f64>,
        idx: &[usize],
        beta: &[f64],
        derivs: &[f64],
        ff: &FourierFeatures,
        out: &mut [f64],
    ) {
        let p = ff.dim();
        let amp = ff.amplitude();
        let mut t = vec![0.0; p];
        out.iter_mut().for_each(|g| *g = 0.0);
        for (r, (&i, d)) in idx.iter().zip(derivs).enumerate() {
            t.iter_mut().for_each(|v| *v = 0.0);
            for (k, (b, sn)) in beta.iter().zip(self.sin_row(r)).enumerate() {
                let c = b * sn;
                if c == 0.0 {
                    continue;
                }
                for (tj, w) in t.iter_mut().zip(ff.omega_row(k)) {
                    *tj += c * w;
                }
            }
            let row = x.row(i);
            let w = -d * amp;
            for ((g, tj), xj) in out.iter_mut().zip(&t).zip(row.iter()) {
                *g += w * tj * xj;
            }
        }
        let inv = 1.0 / self.rows as f64;
        out.iter_mut().for_each(|g| *g *= inv);
    }
}
