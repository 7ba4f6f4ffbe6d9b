//! Mini-batch SGD with momentum, per-epoch validation and best-epoch selection.
//!
//! A run is a pure function of its inputs: the shuffle order of epoch `e`
//! comes from `SeededRng::derive(config.seed, e)`.
//!
//! `TrainLog` serialises as
//! `{"metric": "qwk", "selected_epoch": 12, "epochs": [{"epoch": 0, "train_loss": 1.2, "val_metric": 0.41}, ...]}`
//! where `val_metric` is `null` when the metric is undefined for that epoch.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::losses::{
    corn_class_probs, corn_cumulative_probs, corn_rank, loss_dispatch, regression_label,
    regression_prediction, LossSpec,
};
use crate::metrics::{accuracy, confusion, mae, qwk};
use crate::model::{Gradients, Head, MlpModel};
use crate::numerics::{argmax, Matrix, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMetric {
    #[default]
    Qwk,
    Mae,
    Accuracy,
}

impl SelectionMetric {
    fn better(self, candidate: f64, incumbent: f64) -> bool {
        match self {
            SelectionMetric::Mae => candidate < incumbent,
            SelectionMetric::Qwk | SelectionMetric::Accuracy => candidate > incumbent,
        }
    }

    pub fn compute(self, y_true: &[usize], y_pred: &[usize], num_classes: usize) -> Option<f64> {
        match self {
            SelectionMetric::Qwk => qwk(&confusion(y_true, y_pred, num_classes).ok()?).ok(),
            SelectionMetric::Accuracy => {
                accuracy(&confusion(y_true, y_pred, num_classes).ok()?).ok()
            }
            SelectionMetric::Mae => mae(y_true, y_pred).ok(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
    pub selection_metric: SelectionMetric,
    /// Stop after this many epochs without a validation improvement.
    pub patience: Option<usize>,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 64,
            learning_rate: 0.05,
            momentum: 0.9,
            seed: 0,
            selection_metric: SelectionMetric::Qwk,
            patience: None,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        // Zero is accepted so a run can be checked for leaving parameters untouched.
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config(format!(
                "learning_rate must be non-negative, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_metric: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub metric: SelectionMetric,
    pub selected_epoch: usize,
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn best_val_metric(&self) -> Option<f64> {
        self.epochs.get(self.selected_epoch)?.val_metric
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn check_compatible(model: &MlpModel, spec: &LossSpec) -> Result<()> {
    spec.validate()?;
    let head = model.head();
    if head.kind() != spec.head() {
        return Err(Error::Config(format!(
            "{} needs a {:?} head but the model has {:?}",
            spec.kind,
            spec.head(),
            head.kind()
        )));
    }
    if let Some(k) = head.num_classes() {
        if k != spec.num_classes {
            return Err(Error::Config(format!(
                "model head has {k} classes, loss expects {}",
                spec.num_classes
            )));
        }
    }
    Ok(())
}

/// Trains `model` and returns the parameters of the best validation epoch
/// (ties go to the earliest). With an empty validation set the last epoch is
/// kept.
pub fn train(
    model: MlpModel,
    spec: &LossSpec,
    train_set: &Dataset,
    val_set: &Dataset,
    config: &TrainConfig,
) -> Result<(MlpModel, TrainLog)> {
    config.validate()?;
    check_compatible(&model, spec)?;
    if train_set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if train_set.input_dim() != model.config().input_dim {
        return Err(Error::Shape(format!(
            "dataset has {} features, model expects {}",
            train_set.input_dim(),
            model.config().input_dim
        )));
    }

    let mut model = model;
    let mut velocity = Gradients::zeros_like(&model);
    let mut grads = Gradients::zeros_like(&model);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut records = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, f64, MlpModel)> = None;
    let features = train_set.features();
    let labels = train_set.labels();

    for epoch in 0..config.epochs {
        if config.shuffle {
            order.sort_unstable();
            SeededRng::derive(config.seed, epoch as u64).shuffle(&mut order);
        }
        let mut epoch_loss = 0.0;
        for (batch, chunk) in order.chunks(config.batch_size).enumerate() {
            grads.clear();
            let mut batch_loss = 0.0;
            for &i in chunk {
                // Finite but huge parameters can still overflow the outputs.
                let overflow = |e| match e {
                    Error::InvalidInput(_) => Error::Divergence {
                        epoch,
                        batch,
                        value: f64::NAN,
                    },
                    e => e,
                };
                let pass = model.forward(features.row(i)).map_err(overflow)?;
                let r = loss_dispatch(spec, pass.head_output(), labels[i]).map_err(overflow)?;
                if !r.value.is_finite() {
                    return Err(Error::Divergence {
                        epoch,
                        batch,
                        value: r.value,
                    });
                }
                batch_loss += r.value;
                model.backward_accumulate(&pass, &r.grad, &mut grads)?;
            }
            epoch_loss += batch_loss;
            let scale = -config.learning_rate / chunk.len() as f64;
            velocity.decay_and_add(config.momentum, &grads, scale);
            model.apply_update(&velocity, 1.0);
            if !model.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch,
                    value: batch_loss / chunk.len() as f64,
                });
            }
        }

        let val_metric = if val_set.is_empty() {
            None
        } else {
            let pred = predict(&model, val_set.features(), spec)?;
            config
                .selection_metric
                .compute(val_set.labels(), &pred.labels, spec.num_classes)
        };
        records.push(EpochRecord {
            epoch,
            train_loss: epoch_loss / train_set.len() as f64,
            val_metric,
        });

        let improved = match (&best, val_metric) {
            (None, _) => true,
            (Some((_, incumbent, _)), Some(v)) => {
                incumbent.is_nan() || config.selection_metric.better(v, *incumbent)
            }
            (Some(_), None) => val_set.is_empty(),
        };
        if improved {
            best = Some((epoch, val_metric.unwrap_or(f64::NAN), model.clone()));
        }
        if let (Some(patience), Some((best_epoch, _, _))) = (config.patience, &best) {
            if epoch - best_epoch >= patience {
                break;
            }
        }
    }

    let (selected_epoch, _, best_model) = best.expect("at least one epoch ran");
    Ok((
        best_model,
        TrainLog {
            metric: config.selection_metric,
            selected_epoch,
            epochs: records,
        },
    ))
}

/// Labels and scores for every row of `features`.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub labels: Vec<usize>,
    /// Softmax: class probabilities. CORN: chained `P(label > k)`. Regression:
    /// the scaled prediction `sigmoid(raw) · (K - 1)`.
    pub scores: Vec<Vec<f64>>,
    /// Per-class probabilities for one-vs-rest ROC; absent for regression.
    pub class_probs: Option<Vec<Vec<f64>>>,
}

pub fn predict(model: &MlpModel, features: &Matrix, spec: &LossSpec) -> Result<Prediction> {
    check_compatible(model, spec)?;
    let k = spec.num_classes;
    let n = features.rows();
    let mut labels = Vec::with_capacity(n);
    let mut scores = Vec::with_capacity(n);
    let mut class_probs = Vec::with_capacity(n);
    for row in features.iter_rows() {
        let pass = model.forward(row)?;
        let out = pass.head_output();
        match model.head() {
            Head::Softmax { .. } => {
                labels.push(argmax(out));
                scores.push(out.to_vec());
                class_probs.push(out.to_vec());
            }
            Head::Corn { .. } => {
                labels.push(corn_rank(out));
                scores.push(corn_cumulative_probs(out));
                class_probs.push(corn_class_probs(out));
            }
            Head::Regression => {
                labels.push(regression_label(out[0], k));
                scores.push(vec![regression_prediction(out[0], k)]);
            }
        }
    }
    let class_probs = match model.head() {
        Head::Regression => None,
        _ => Some(class_probs),
    };
    Ok(Prediction {
        labels,
        scores,
        class_probs,
    })
}

/// Last hidden-layer activations, one row per input row.
pub fn extract_features(model: &MlpModel, features: &Matrix) -> Result<Matrix> {
    let dim = model.penultimate_dim();
    let mut data = Vec::with_capacity(features.rows() * dim);
    for row in features.iter_rows() {
        data.extend_from_slice(model.forward(row)?.penultimate());
    }
    Matrix::new(features.rows(), dim, data)
}
