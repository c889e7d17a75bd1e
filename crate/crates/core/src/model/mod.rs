//! The user-facing estimator.
//!
//! A [`Model`] bundles the frozen feature map, learned `β` and `λ`, and the
//! training-split standardization statistics, so it predicts directly on
//! raw-unit inputs.

mod format;

pub use format::{FORMAT_VERSION, MAGIC};

use std::path::Path;

use ndarray::Array2;

use crate::data::{standardize_apply, standardize_fit, Dataset, StandardizationStats};
use crate::error::{Error, Result};
use crate::objective::{sigmoid, LossKind};
use crate::optimizer::{self, History, Parameters, Sample, TrainConfig};
use crate::rng::RNG_ID;
use crate::spectral::{sample_features, FourierFeatures, RelevanceVector};

/// Training settings stored with a model for reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfigEcho {
    pub eta: f64,
    pub mu: f64,
    pub patience: u64,
    pub max_epochs: u64,
    pub batch_size: u64,
    pub val_fraction: f64,
    pub seed: u64,
}

impl From<&TrainConfig> for ConfigEcho {
    fn from(c: &TrainConfig) -> Self {
        ConfigEcho {
            eta: c.eta,
            mu: c.mu,
            patience: c.patience as u64,
            max_epochs: c.max_epochs as u64,
            batch_size: c.batch_size as u64,
            val_fraction: c.val_fraction,
            seed: c.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    features: FourierFeatures,
    beta: Vec<f64>,
    lambda: RelevanceVector,
    loss: LossKind,
    stats: StandardizationStats,
    rng_id: String,
    config: ConfigEcho,
    feature_names: Option<Vec<String>>,
}

/// A fitted model with its training history.
#[derive(Debug, Clone)]
pub struct Fitted {
    pub model: Model,
    pub history: History,
}

impl Model {
    /// Assembles a model from parts, checking that all dimensions agree.
    pub fn from_parts(
        features: FourierFeatures,
        beta: Vec<f64>,
        lambda: RelevanceVector,
        loss: LossKind,
        stats: StandardizationStats,
        config: ConfigEcho,
        feature_names: Option<Vec<String>>,
    ) -> Result<Self> {
        let (s, p) = (features.num_features(), features.dim());
        if beta.len() != s {
            return Err(Error::arg(format!("{} coefficients for {s} features", beta.len())));
        }
        if lambda.len() != p || stats.mean.len() != p || stats.std.len() != p {
            return Err(Error::arg(format!(
                "relevances ({}), means ({}) and scales ({}) must all have length {p}",
                lambda.len(),
                stats.mean.len(),
                stats.std.len()
            )));
        }
        if stats.std.iter().any(|v| !(*v > 0.0) || !v.is_finite())
            || stats.mean.iter().any(|v| !v.is_finite())
            || beta.iter().any(|v| !v.is_finite())
        {
            return Err(Error::arg("model parameters must be finite with positive scales"));
        }
        if let Some(names) = &feature_names {
            if names.len() != p {
                return Err(Error::arg(format!("{} feature names for {p} features", names.len())));
            }
        }
        Ok(Model {
            features,
            beta,
            lambda,
            loss,
            stats,
            rng_id: RNG_ID.to_string(),
            config,
            feature_names,
        })
    }

    /// Splits off `config.val_fraction` for early stopping, standardizes with
    /// the training part, samples features and trains.
    pub fn fit(data: &Dataset, config: &TrainConfig, loss: LossKind) -> Result<Fitted> {
        config.validate()?;
        if data.n() < 2 {
            return Err(Error::Data(format!("need at least 2 rows to fit, got {}", data.n())));
        }
        let (tr, val) = optimizer::split_indices(data.n(), config.val_fraction, config.seed)?;
        Self::fit_with_validation(&data.subset(&tr), &data.subset(&val), config, loss)
    }

    /// Trains on `train`, using `val` only for early stopping.
    pub fn fit_with_validation(
        train: &Dataset,
        val: &Dataset,
        config: &TrainConfig,
        loss: LossKind,
    ) -> Result<Fitted> {
        config.validate()?;
        if train.p() != val.p() {
            return Err(Error::arg(format!(
                "train has {} features, validation {}",
                train.p(),
                val.p()
            )));
        }
        if train.p() == 0 {
            return Err(Error::Data("dataset has no feature columns".into()));
        }
        loss.check_targets(&train.y).map_err(|e| Error::Data(e.to_string()))?;
        loss.check_targets(&val.y).map_err(|e| Error::Data(e.to_string()))?;
        let stats = if train.n() == 1 {
            // A single row is a constant column everywhere: center, scale 1.
            StandardizationStats {
                mean: train.x.row(0).to_vec(),
                std: vec![1.0; train.p()],
            }
        } else {
            standardize_fit(&train.x)?
        };
        let tr = Sample::new(standardize_apply(&train.x, &stats)?, train.y.clone())?;
        let va = Sample::new(standardize_apply(&val.x, &stats)?, val.y.clone())?;
        let s = config.num_features.resolve(tr.len())?;
        let ff = sample_features(train.p(), s, config.seed)?;
        let out = optimizer::train(&tr, &va, ff, loss, config, None)?;
        let Parameters { beta, lambda } = out.params;
        let model = Model::from_parts(
            out.features,
            beta,
            lambda,
            loss,
            stats,
            config.into(),
            train.feature_names.clone(),
        )?;
        Ok(Fitted {
            model,
            history: out.history,
        })
    }

    pub fn features(&self) -> &FourierFeatures {
        &self.features
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn lambda(&self) -> &RelevanceVector {
        &self.lambda
    }

    pub fn loss(&self) -> LossKind {
        self.loss
    }

    pub fn stats(&self) -> &StandardizationStats {
        &self.stats
    }

    pub fn rng_id(&self) -> &str {
        &self.rng_id
    }

    pub fn config(&self) -> &ConfigEcho {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.features.dim()
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    /// Raw scores `βᵀ z(λ ∘ x̃)` on standardized inputs; logits for
    /// classification models.
    pub fn predict(&self, x: &Array2<f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.dim() {
            return Err(Error::arg(format!(
                "input has {} features, model expects {}",
                x.ncols(),
                self.dim()
            )));
        }
        let ff = &self.features;
        let amp = ff.amplitude();
        let mut scaled = vec![0.0; ff.dim()];
        let mut proj = vec![0.0; ff.num_features()];
        let mut out = Vec::with_capacity(x.nrows());
        for row in x.rows() {
            for ((o, v), (m, s)) in scaled
                .iter_mut()
                .zip(row.iter())
                .zip(self.stats.mean.iter().zip(&self.stats.std))
            {
                *o = (v - m) / s;
            }
            for (o, l) in scaled.iter_mut().zip(self.lambda.as_slice()) {
                *o *= l;
            }
            ff.project_into(&scaled, &mut proj);
            let dot: f64 = proj.iter().zip(&self.beta).map(|(u, b)| u.cos() * b).sum();
            out.push(amp * dot);
        }
        Ok(out)
    }

    /// `σ(score)` for models trained with cross-entropy.
    pub fn predict_proba(&self, x: &Array2<f64>) -> Result<Vec<f64>> {
        if self.loss != LossKind::BinaryCrossEntropy {
            return Err(Error::Usage(
                "probabilities are only defined for cross-entropy models".into(),
            ));
        }
        Ok(self.predict(x)?.into_iter().map(sigmoid).collect())
    }

    /// `|λ| / max|λ|` per feature.
    pub fn relevances(&self) -> Vec<f64> {
        self.lambda.scaled_importance()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        format::encode(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        format::decode(bytes)
    }
}
