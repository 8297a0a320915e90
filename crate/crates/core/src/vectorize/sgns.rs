//! Skip-gram negative-sampling objective.
//!
//! For a center vector `v`, a positive context vector `u⁺` and negative
//! vectors `u⁻ₖ`:
//!
//! ```text
//! L = −ln σ(u⁺·v) − Σₖ ln σ(−u⁻ₖ·v)
//! ∂L/∂v   = (σ(u⁺·v) − 1)·u⁺ + Σₖ σ(u⁻ₖ·v)·u⁻ₖ
//! ∂L/∂u⁺  = (σ(u⁺·v) − 1)·v
//! ∂L/∂u⁻ₖ = σ(u⁻ₖ·v)·v
//! ```
//!
//! [`sgns_target`] is the per-target kernel used by both the pure
//! [`sgns_step`] and the in-place training loops.

use num_traits::Float;

use super::{Result, VectorizeError};

/// `ln σ(x)`, stable for large |x|.
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn dot<T: Float>(a: &[T], b: &[T]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x * y).to_f64().unwrap_or(f64::NAN))
        .sum()
}

/// Applies one target term of the objective without touching the target.
///
/// Adds `lr·(label − σ(u·v))·u` into `center_grad` and returns this term's
/// loss together with the scalar coefficient `lr·(label − σ(u·v))`.
pub(crate) fn sgns_accumulate<T: Float>(
    center: &[T],
    target: &[T],
    positive: bool,
    lr: T,
    center_grad: &mut [T],
) -> (f64, T) {
    let score = dot(center, target);
    let label = if positive { 1.0 } else { 0.0 };
    let loss = if positive {
        -log_sigmoid(score)
    } else {
        -log_sigmoid(-score)
    };
    let g = lr * T::from(label - sigmoid(score)).expect("finite coefficient");
    for (acc, &u) in center_grad.iter_mut().zip(target) {
        *acc = *acc + g * u;
    }
    (loss, g)
}

/// [`sgns_accumulate`] followed by the target update `u += g·v`. The
/// caller adds `center_grad` to the center vector after all targets are
/// processed.
pub(crate) fn sgns_target<T: Float>(
    center: &[T],
    target: &mut [T],
    positive: bool,
    lr: T,
    center_grad: &mut [T],
) -> f64 {
    let (loss, g) = sgns_accumulate(center, target, positive, lr, center_grad);
    for (u, &v) in target.iter_mut().zip(center) {
        *u = *u + g * v;
    }
    loss
}

/// Result of one gradient step.
#[derive(Debug, Clone, PartialEq)]
pub struct SgnsUpdate<T> {
    /// Loss evaluated before the update.
    pub loss: f64,
    pub center: Vec<T>,
    pub context: Vec<T>,
    pub negatives: Vec<Vec<T>>,
}

/// Loss and analytic gradients at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct SgnsGradients {
    pub loss: f64,
    pub center: Vec<f64>,
    pub context: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
}

fn validate<T: Float>(center: &[T], context: &[T], negatives: &[&[T]]) -> Result<()> {
    let d = center.len();
    if d == 0 {
        return Err(VectorizeError::InvalidConfig("vector dimension must be ≥ 1".into()));
    }
    for v in std::iter::once(context).chain(negatives.iter().copied()) {
        if v.len() != d {
            return Err(VectorizeError::DimensionMismatch {
                expected: d,
                found: v.len(),
            });
        }
    }
    let all_finite = std::iter::once(center)
        .chain(std::iter::once(context))
        .chain(negatives.iter().copied())
        .all(|v| v.iter().all(|x| x.is_finite()));
    if !all_finite {
        return Err(VectorizeError::NonFinite);
    }
    Ok(())
}

/// One SGD step on the negative-sampling loss. Returns the loss at the
/// input point and the updated vectors.
pub fn sgns_step<T: Float>(
    center: &[T],
    context: &[T],
    negatives: &[&[T]],
    lr: T,
) -> Result<SgnsUpdate<T>> {
    validate(center, context, negatives)?;
    if !lr.is_finite() || lr <= T::zero() {
        return Err(VectorizeError::InvalidConfig("learning rate must be positive".into()));
    }
    let mut center_grad = vec![T::zero(); center.len()];
    let mut context_out = context.to_vec();
    let mut loss = sgns_target(center, &mut context_out, true, lr, &mut center_grad);
    let mut negatives_out = Vec::with_capacity(negatives.len());
    for neg in negatives {
        let mut n = neg.to_vec();
        loss += sgns_target(center, &mut n, false, lr, &mut center_grad);
        negatives_out.push(n);
    }
    let center_out = center
        .iter()
        .zip(&center_grad)
        .map(|(&v, &g)| v + g)
        .collect();
    Ok(SgnsUpdate {
        loss,
        center: center_out,
        context: context_out,
        negatives: negatives_out,
    })
}

pub fn sgns_loss(center: &[f64], context: &[f64], negatives: &[&[f64]]) -> Result<f64> {
    Ok(sgns_gradients(center, context, negatives)?.loss)
}

pub fn sgns_gradients(center: &[f64], context: &[f64], negatives: &[&[f64]]) -> Result<SgnsGradients> {
    validate(center, context, negatives)?;
    let d = center.len();
    let pos = dot(center, context);
    let mut loss = -log_sigmoid(pos);
    let g_pos = sigmoid(pos) - 1.0;
    let mut d_center: Vec<f64> = context.iter().map(|&u| g_pos * u).collect();
    let d_context = center.iter().map(|&v| g_pos * v).collect();
    let mut d_negatives = Vec::with_capacity(negatives.len());
    for neg in negatives {
        let s = dot(center, neg);
        loss -= log_sigmoid(-s);
        let g = sigmoid(s);
        for k in 0..d {
            d_center[k] += g * neg[k];
        }
        d_negatives.push(center.iter().map(|&v| g * v).collect());
    }
    Ok(SgnsGradients {
        loss,
        center: d_center,
        context: d_context,
        negatives: d_negatives,
    })
}
