//! Ordinal and categorical losses with analytic gradients.
//!
//! Losses on the softmax head (CE, CDW-CE, CDW-CE with margin, CO2, HO2) take
//! the predicted probabilities and return the gradient with respect to those
//! probabilities; the model chains it through the softmax Jacobian. CORN takes
//! the `K - 1` task logits and the regression loss takes the single raw output,
//! and both return gradients with respect to those pre-activation values.
//!
//! Probabilities are clamped to `[EPS_CLAMP, 1 - EPS_CLAMP]` inside the log
//! terms only. Where a clamp is active the reported gradient is the derivative
//! of the clamped expression, which is zero.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{log1m_clamped, sigmoid, softplus, EPS_CLAMP};

pub use crate::numerics::ProbVector;

/// Which output layout a loss consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    /// `K` class probabilities.
    Softmax,
    /// `K - 1` conditional task logits.
    Corn,
    /// One raw scalar, squashed to `[0, K - 1]`.
    Regression,
}

impl HeadKind {
    pub fn output_len(self, num_classes: usize) -> usize {
        match self {
            HeadKind::Softmax => num_classes,
            HeadKind::Corn => num_classes - 1,
            HeadKind::Regression => 1,
        }
    }
}

/// A loss together with its hyperparameters. Each variant carries only the
/// hyperparameters it uses; configuration files naming any other field are
/// rejected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", from = "RawLossKind")]
pub enum LossKind {
    Ce,
    CdwCe { alpha: f64 },
    CdwCeMargin { alpha: f64, margin: f64 },
    Co2 { lambda: f64, delta: f64 },
    Ho2 { lambda: f64, delta: f64 },
    Corn,
    MseReg,
}

// Unit variants of an internally tagged enum accept any extra field, so
// parsing goes through empty struct variants instead.
#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum RawLossKind {
    Ce {},
    CdwCe {
        alpha: f64,
    },
    CdwCeMargin {
        alpha: f64,
        margin: f64,
    },
    Co2 {
        #[serde(default = "default_lambda")]
        lambda: f64,
        #[serde(default = "default_delta")]
        delta: f64,
    },
    Ho2 {
        #[serde(default = "default_lambda")]
        lambda: f64,
        #[serde(default = "default_delta")]
        delta: f64,
    },
    Corn {},
    MseReg {},
}

fn default_lambda() -> f64 {
    LossKind::DEFAULT_LAMBDA
}

fn default_delta() -> f64 {
    LossKind::DEFAULT_DELTA
}

impl From<RawLossKind> for LossKind {
    fn from(raw: RawLossKind) -> Self {
        match raw {
            RawLossKind::Ce {} => LossKind::Ce,
            RawLossKind::CdwCe { alpha } => LossKind::CdwCe { alpha },
            RawLossKind::CdwCeMargin { alpha, margin } => LossKind::CdwCeMargin { alpha, margin },
            RawLossKind::Co2 { lambda, delta } => LossKind::Co2 { lambda, delta },
            RawLossKind::Ho2 { lambda, delta } => LossKind::Ho2 { lambda, delta },
            RawLossKind::Corn {} => LossKind::Corn,
            RawLossKind::MseReg {} => LossKind::MseReg,
        }
    }
}

impl LossKind {
    /// Unimodality strength used when a config names CO2/HO2 without values.
    pub const DEFAULT_LAMBDA: f64 = 1.0;
    pub const DEFAULT_DELTA: f64 = 0.05;
    pub const MAX_MARGIN: f64 = 0.5;

    pub fn co2_default() -> Self {
        LossKind::Co2 {
            lambda: Self::DEFAULT_LAMBDA,
            delta: Self::DEFAULT_DELTA,
        }
    }

    pub fn ho2_default() -> Self {
        LossKind::Ho2 {
            lambda: Self::DEFAULT_LAMBDA,
            delta: Self::DEFAULT_DELTA,
        }
    }

    pub fn head(&self) -> HeadKind {
        match self {
            LossKind::Corn => HeadKind::Corn,
            LossKind::MseReg => HeadKind::Regression,
            _ => HeadKind::Softmax,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LossKind::Ce | LossKind::Corn | LossKind::MseReg => Ok(()),
            LossKind::CdwCe { alpha } => check_alpha(alpha),
            LossKind::CdwCeMargin { alpha, margin } => {
                check_alpha(alpha)?;
                if !(0.0..=Self::MAX_MARGIN).contains(&margin) {
                    return Err(Error::Hyperparameter(format!(
                        "margin must lie in [0, {}], got {margin}",
                        Self::MAX_MARGIN
                    )));
                }
                Ok(())
            }
            LossKind::Co2 { lambda, delta } | LossKind::Ho2 { lambda, delta } => {
                check_unimodal_params(lambda, delta)
            }
        }
    }

    /// File-name friendly identifier, e.g. `cdw_ce_a5`.
    pub fn slug(&self) -> String {
        match *self {
            LossKind::Ce => "ce".into(),
            LossKind::CdwCe { alpha } => format!("cdw_ce_a{}", num_slug(alpha)),
            LossKind::CdwCeMargin { alpha, margin } => {
                format!("cdw_ce_a{}_m{}", num_slug(alpha), num_slug(margin))
            }
            LossKind::Co2 { .. } => "co2".into(),
            LossKind::Ho2 { .. } => "ho2".into(),
            LossKind::Corn => "corn".into(),
            LossKind::MseReg => "mse".into(),
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            LossKind::Ce => write!(f, "CE"),
            LossKind::CdwCe { alpha } => write!(f, "CDW-CE (α={alpha})"),
            LossKind::CdwCeMargin { alpha, margin } => {
                write!(f, "CDW-CE (α={alpha}, m={margin})")
            }
            LossKind::Co2 { .. } => write!(f, "CO2"),
            LossKind::Ho2 { .. } => write!(f, "HO2"),
            LossKind::Corn => write!(f, "CORN"),
            LossKind::MseReg => write!(f, "MSE"),
        }
    }
}

fn num_slug(x: f64) -> String {
    format!("{x}").replace('.', "p").replace('-', "neg")
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::Hyperparameter(format!(
            "alpha must be a positive finite number, got {alpha}"
        )));
    }
    Ok(())
}

fn check_unimodal_params(lambda: f64, delta: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::Hyperparameter(format!(
            "lambda must be non-negative, got {lambda}"
        )));
    }
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(Error::Hyperparameter(format!(
            "delta must be non-negative, got {delta}"
        )));
    }
    Ok(())
}

/// A loss bound to a class count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    pub num_classes: usize,
}

impl LossSpec {
    pub fn new(kind: LossKind, num_classes: usize) -> Result<Self> {
        let spec = Self { kind, num_classes };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config(format!(
                "need at least 2 classes, got {}",
                self.num_classes
            )));
        }
        self.kind.validate()
    }

    pub fn head(&self) -> HeadKind {
        self.kind.head()
    }

    pub fn output_len(&self) -> usize {
        self.head().output_len(self.num_classes)
    }
}

/// Loss value and its gradient with respect to the loss input.
#[derive(Debug, Clone, PartialEq)]
pub struct LossResult {
    pub value: f64,
    pub grad: Vec<f64>,
}

fn check_probs(y_hat: &[f64]) -> Result<()> {
    if y_hat.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 class probabilities, got {}",
            y_hat.len()
        )));
    }
    if let Some(p) = y_hat
        .iter()
        .find(|p| !(p.is_finite() && (0.0..=1.0).contains(*p)))
    {
        return Err(Error::InvalidInput(format!(
            "probability {p} outside [0, 1]"
        )));
    }
    Ok(())
}

fn check_class(c: usize, k: usize) -> Result<()> {
    if c >= k {
        return Err(Error::Index { index: c, len: k });
    }
    Ok(())
}

/// Cross-entropy `-ln ŷ_c`.
pub fn ce_loss(y_hat: &[f64], c: usize) -> Result<LossResult> {
    check_probs(y_hat)?;
    check_class(c, y_hat.len())?;
    Ok(ce_unchecked(y_hat, c))
}

fn ce_unchecked(y_hat: &[f64], c: usize) -> LossResult {
    let p = y_hat[c];
    let mut grad = vec![0.0; y_hat.len()];
    let value = if p >= EPS_CLAMP {
        grad[c] = -1.0 / p;
        -p.ln()
    } else {
        -EPS_CLAMP.ln()
    };
    LossResult {
        value: value.max(0.0),
        grad,
    }
}

/// `|i - c|^alpha`, zero on the true class.
pub fn class_distance_weight(i: usize, c: usize, alpha: f64) -> f64 {
    (i.abs_diff(c) as f64).powf(alpha)
}

/// Shared body of CDW-CE with and without margin, so that `m = 0` follows
/// exactly the same arithmetic as the plain loss.
fn distance_weighted(y_hat: &[f64], c: usize, alpha: f64, margin: f64) -> LossResult {
    let mut value = 0.0;
    let mut grad = vec![0.0; y_hat.len()];
    for (i, &p) in y_hat.iter().enumerate() {
        if i == c {
            continue;
        }
        let w = class_distance_weight(i, c, alpha);
        let shifted = p + margin;
        value -= w * log1m_clamped(shifted);
        if shifted < 1.0 - EPS_CLAMP {
            grad[i] = w / (1.0 - shifted);
        }
    }
    LossResult { value, grad }
}

/// Class distance weighted cross-entropy
/// `-Σ_i ln(1 - ŷ_i) · |i - c|^alpha`.
pub fn cdw_ce_loss(y_hat: &[f64], c: usize, alpha: f64) -> Result<LossResult> {
    check_probs(y_hat)?;
    check_class(c, y_hat.len())?;
    check_alpha(alpha)?;
    Ok(distance_weighted(y_hat, c, alpha, 0.0))
}

/// Gradient of [`cdw_ce_loss`] with respect to the probabilities:
/// `|i - c|^alpha / (1 - ŷ_i)`.
pub fn cdw_ce_grad(y_hat: &[f64], c: usize, alpha: f64) -> Result<Vec<f64>> {
    Ok(cdw_ce_loss(y_hat, c, alpha)?.grad)
}

/// CDW-CE with an additive margin on every off-class probability,
/// `-Σ_i ln(1 - min(ŷ_i + m, 1 - ε)) · |i - c|^alpha`.
pub fn cdw_ce_margin_loss(y_hat: &[f64], c: usize, alpha: f64, margin: f64) -> Result<LossResult> {
    check_probs(y_hat)?;
    check_class(c, y_hat.len())?;
    check_alpha(alpha)?;
    if !(0.0..1.0).contains(&margin) {
        return Err(Error::Hyperparameter(format!(
            "margin must lie in [0, 1), got {margin}"
        )));
    }
    Ok(distance_weighted(y_hat, c, alpha, margin))
}

/// Hinge penalty on adjacent pairs that break unimodality around `c`.
///
/// Below the true class every step should rise (`ŷ_k + δ ≤ ŷ_{k+1}`), from
/// the true class upward every step should fall (`ŷ_{k+1} + δ ≤ ŷ_k`). Pairs
/// that would reference class `K` do not exist and are skipped.
fn unimodal_penalty(y_hat: &[f64], c: usize, lambda: f64, delta: f64, grad: &mut [f64]) -> f64 {
    let mut penalty = 0.0;
    for k in 0..y_hat.len() - 1 {
        // (lower, upper): the member expected to be smaller, and the larger one.
        let (lower, upper) = if k < c { (k, k + 1) } else { (k + 1, k) };
        let arg = delta + y_hat[lower] - y_hat[upper];
        if arg > 0.0 {
            penalty += lambda * arg;
            grad[lower] += lambda;
            grad[upper] -= lambda;
        }
    }
    penalty
}

/// Hinge arguments `δ + ŷ_lower - ŷ_upper` for each adjacent pair, in the
/// order the penalty visits them. Exposed for kink detection in tests.
pub fn unimodal_hinge_args(y_hat: &[f64], c: usize, delta: f64) -> Vec<(usize, usize, f64)> {
    (0..y_hat.len().saturating_sub(1))
        .map(|k| {
            let (lower, upper) = if k < c { (k, k + 1) } else { (k + 1, k) };
            (lower, upper, delta + y_hat[lower] - y_hat[upper])
        })
        .collect()
}

/// Cross-entropy plus unimodality penalty.
pub fn co2_loss(y_hat: &[f64], c: usize, lambda: f64, delta: f64) -> Result<LossResult> {
    check_probs(y_hat)?;
    check_class(c, y_hat.len())?;
    check_unimodal_params(lambda, delta)?;
    let mut out = ce_unchecked(y_hat, c);
    out.value += unimodal_penalty(y_hat, c, lambda, delta, &mut out.grad);
    Ok(out)
}

/// Entropy of the prediction plus unimodality penalty.
pub fn ho2_loss(y_hat: &[f64], c: usize, lambda: f64, delta: f64) -> Result<LossResult> {
    check_probs(y_hat)?;
    check_class(c, y_hat.len())?;
    check_unimodal_params(lambda, delta)?;
    let mut grad = vec![0.0; y_hat.len()];
    let mut entropy = 0.0;
    for (g, &p) in grad.iter_mut().zip(y_hat) {
        if p >= EPS_CLAMP {
            entropy -= p * p.ln();
            *g = -(p.ln() + 1.0);
        } else {
            entropy -= p * EPS_CLAMP.ln();
            *g = -EPS_CLAMP.ln();
        }
    }
    let value = entropy.max(0.0) + unimodal_penalty(y_hat, c, lambda, delta, &mut grad);
    Ok(LossResult { value, grad })
}

/// CORN conditional binary tasks.
///
/// Task `k` asks "is the label greater than `k`?" and is trained only on
/// samples whose label exceeds `k - 1`, so a sample of class `c` contributes
/// to tasks `0..=min(c, K - 2)`. The per-sample loss is the mean binary
/// cross-entropy over those tasks.
pub fn corn_loss(logits: &[f64], c: usize) -> Result<LossResult> {
    if logits.is_empty() {
        return Err(Error::Shape("CORN needs at least one task logit".into()));
    }
    if let Some(l) = logits.iter().find(|l| !l.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite logit {l}")));
    }
    let k = logits.len() + 1;
    check_class(c, k)?;
    let tasks = c.min(k - 2) + 1;
    let scale = 1.0 / tasks as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; logits.len()];
    for (task, &l) in logits.iter().enumerate().take(tasks) {
        let target = if c > task { 1.0 } else { 0.0 };
        value += softplus(l) - target * l;
        grad[task] = (sigmoid(l) - target) * scale;
    }
    Ok(LossResult {
        value: (value * scale).max(0.0),
        grad,
    })
}

/// `P(label > k)` for each task, as the running product of task sigmoids.
pub fn corn_cumulative_probs(logits: &[f64]) -> Vec<f64> {
    let mut running = 1.0;
    logits
        .iter()
        .map(|&l| {
            running *= sigmoid(l);
            running
        })
        .collect()
}

/// Per-class probabilities implied by the chained CORN tasks.
pub fn corn_class_probs(logits: &[f64]) -> Vec<f64> {
    let cumulative = corn_cumulative_probs(logits);
    let mut probs = Vec::with_capacity(logits.len() + 1);
    let mut prev = 1.0;
    for &p in &cumulative {
        probs.push((prev - p).max(0.0));
        prev = p;
    }
    probs.push(prev);
    probs
}

/// Predicted rank: number of chained probabilities above 0.5. Because the
/// chain is non-increasing this equals the first task whose chain drops to
/// 0.5 or below.
pub fn corn_rank(logits: &[f64]) -> usize {
    corn_cumulative_probs(logits)
        .iter()
        .filter(|&&p| p > 0.5)
        .count()
}

/// `sigmoid(raw) · (K - 1)`.
pub fn regression_prediction(raw: f64, num_classes: usize) -> f64 {
    sigmoid(raw) * (num_classes - 1) as f64
}

/// Nearest class to the scaled regression output, halves rounding up.
pub fn regression_label(raw: f64, num_classes: usize) -> usize {
    let p = regression_prediction(raw, num_classes);
    ((p + 0.5).floor().max(0.0) as usize).min(num_classes - 1)
}

/// Squared error between the sigmoid-scaled output and the class index.
pub fn mse_reg_loss(raw: f64, c: usize, num_classes: usize) -> Result<LossResult> {
    if num_classes < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 classes, got {num_classes}"
        )));
    }
    if !raw.is_finite() {
        return Err(Error::InvalidInput(format!("non-finite output {raw}")));
    }
    check_class(c, num_classes)?;
    let s = sigmoid(raw);
    let scale = (num_classes - 1) as f64;
    let residual = s * scale - c as f64;
    Ok(LossResult {
        value: residual * residual,
        grad: vec![2.0 * residual * scale * s * (1.0 - s)],
    })
}

/// Routes one sample's model output to the loss named by `spec`.
pub fn loss_dispatch(spec: &LossSpec, output: &[f64], c: usize) -> Result<LossResult> {
    spec.validate()?;
    let expected = spec.output_len();
    if output.len() != expected {
        return Err(Error::Config(format!(
            "{} expects a {:?} head with {expected} outputs, got {}",
            spec.kind,
            spec.head(),
            output.len()
        )));
    }
    match spec.kind {
        LossKind::Ce => ce_loss(output, c),
        LossKind::CdwCe { alpha } => cdw_ce_loss(output, c, alpha),
        LossKind::CdwCeMargin { alpha, margin } => cdw_ce_margin_loss(output, c, alpha, margin),
        LossKind::Co2 { lambda, delta } => co2_loss(output, c, lambda, delta),
        LossKind::Ho2 { lambda, delta } => ho2_loss(output, c, lambda, delta),
        LossKind::Corn => corn_loss(output, c),
        LossKind::MseReg => mse_reg_loss(output[0], c, spec.num_classes),
    }
}

/// Mean loss over a batch; each per-sample gradient is scaled by `1 / n`.
pub fn batch_loss(spec: &LossSpec, outputs: &[Vec<f64>], labels: &[usize]) -> Result<(f64, Vec<Vec<f64>>)> {
    if outputs.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} outputs but {} labels",
            outputs.len(),
            labels.len()
        )));
    }
    if outputs.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    let n = outputs.len() as f64;
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(outputs.len());
    for (out, &c) in outputs.iter().zip(labels) {
        let r = loss_dispatch(spec, out, c)?;
        total += r.value;
        grads.push(r.grad.into_iter().map(|g| g / n).collect());
    }
    Ok((total / n, grads))
}
