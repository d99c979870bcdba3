//! SFT negative log-likelihood and the KTO reward, reference point, value and
//! loss over per-token log-probabilities.
//!
//! Sequence log-probabilities are sums of token log-probabilities. The
//! reference point is a batch statistic and is treated as a constant when
//! differentiating.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AlignmentError {
    #[error("log-probability sequence is empty")]
    EmptySequence,
    #[error("batch is empty")]
    EmptyBatch,
    #[error("policy has {policy} tokens but reference has {reference}")]
    LengthMismatch { policy: usize, reference: usize },
    #[error("log-probability {value} at position {index} is not a finite value <= 0")]
    InvalidLogProb { index: usize, value: f64 },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

fn check_logprobs(seq: &[f64]) -> Result<(), AlignmentError> {
    if seq.is_empty() {
        return Err(AlignmentError::EmptySequence);
    }
    match seq.iter().position(|v| !(v.is_finite() && *v <= 0.0)) {
        Some(index) => Err(AlignmentError::InvalidLogProb { index, value: seq[index] }),
        None => Ok(()),
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

/// Negated sum of token log-probabilities for one completion.
pub fn sft_nll(token_logprobs: &[f64]) -> Result<f64, AlignmentError> {
    check_logprobs(token_logprobs)?;
    Ok(-token_logprobs.iter().sum::<f64>())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCompletion {
    pub policy_logprobs: Vec<f64>,
    pub ref_logprobs: Vec<f64>,
    pub desirable: bool,
}

impl ScoredCompletion {
    pub fn new(policy_logprobs: Vec<f64>, ref_logprobs: Vec<f64>, desirable: bool) -> Result<Self, AlignmentError> {
        let c = ScoredCompletion { policy_logprobs, ref_logprobs, desirable };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), AlignmentError> {
        check_logprobs(&self.policy_logprobs)?;
        check_logprobs(&self.ref_logprobs)?;
        if self.policy_logprobs.len() != self.ref_logprobs.len() {
            return Err(AlignmentError::LengthMismatch {
                policy: self.policy_logprobs.len(),
                reference: self.ref_logprobs.len(),
            });
        }
        Ok(())
    }

    /// Sequence-level log-ratio log π*(v|u) − log π_ref(v|u).
    pub fn log_ratio(&self) -> f64 {
        self.policy_logprobs.iter().sum::<f64>() - self.ref_logprobs.iter().sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZRefMode {
    /// Estimated from the batch being scored.
    Batch,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KtoParams {
    pub beta: f64,
    pub lambda_d: f64,
    pub lambda_u: f64,
    pub z_ref: ZRefMode,
}

impl Default for KtoParams {
    fn default() -> Self {
        KtoParams { beta: 0.1, lambda_d: 1.0, lambda_u: 1.0, z_ref: ZRefMode::Batch }
    }
}

impl KtoParams {
    pub fn validate(&self) -> Result<(), AlignmentError> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(AlignmentError::InvalidParams(format!("beta must be >= 0, got {}", self.beta)));
        }
        for (name, w) in [("lambda_d", self.lambda_d), ("lambda_u", self.lambda_u)] {
            if !(w > 0.0 && w.is_finite()) {
                return Err(AlignmentError::InvalidParams(format!("{name} must be > 0, got {w}")));
            }
        }
        if let ZRefMode::Fixed(z) = self.z_ref {
            if !z.is_finite() {
                return Err(AlignmentError::InvalidParams(format!("z_ref must be finite, got {z}")));
            }
        }
        Ok(())
    }

    pub fn weight(&self, desirable: bool) -> f64 {
        if desirable {
            self.lambda_d
        } else {
            self.lambda_u
        }
    }
}

/// r = β · log-ratio.
pub fn kto_reward(c: &ScoredCompletion, p: &KtoParams) -> f64 {
    p.beta * c.log_ratio()
}

/// σ(r − z_ref) for desirable completions, σ(z_ref − r) otherwise.
pub fn kto_value(c: &ScoredCompletion, z_ref: f64, p: &KtoParams) -> f64 {
    sigmoid(signed_margin(c, z_ref, p))
}

fn signed_margin(c: &ScoredCompletion, z_ref: f64, p: &KtoParams) -> f64 {
    let x = kto_reward(c, p) - z_ref;
    if c.desirable {
        x
    } else {
        -x
    }
}

/// max(0, β · mean log-ratio) over completions answering mismatched
/// instructions.
pub fn kto_reference_point(batch: &[ScoredCompletion], p: &KtoParams) -> Result<f64, AlignmentError> {
    if batch.is_empty() {
        return Err(AlignmentError::EmptyBatch);
    }
    let mean = batch.iter().map(ScoredCompletion::log_ratio).sum::<f64>() / batch.len() as f64;
    Ok((p.beta * mean).max(0.0))
}

fn resolve_z(batch: &[ScoredCompletion], p: &KtoParams) -> Result<f64, AlignmentError> {
    match p.z_ref {
        ZRefMode::Batch => kto_reference_point(batch, p),
        ZRefMode::Fixed(z) => Ok(z),
    }
}

fn check_batch(batch: &[ScoredCompletion], p: &KtoParams) -> Result<(), AlignmentError> {
    p.validate()?;
    if batch.is_empty() {
        return Err(AlignmentError::EmptyBatch);
    }
    batch.iter().try_for_each(ScoredCompletion::validate)
}

/// Mean of w · (1 − value) over the batch.
pub fn kto_loss(batch: &[ScoredCompletion], p: &KtoParams) -> Result<f64, AlignmentError> {
    Ok(kto_breakdown(batch, p)?.loss)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KtoBreakdown {
    pub z_ref: f64,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub loss: f64,
}

/// Per-completion rewards and values together with the batch loss.
pub fn kto_breakdown(batch: &[ScoredCompletion], p: &KtoParams) -> Result<KtoBreakdown, AlignmentError> {
    check_batch(batch, p)?;
    let z_ref = resolve_z(batch, p)?;
    let rewards: Vec<f64> = batch.iter().map(|c| kto_reward(c, p)).collect();
    let values: Vec<f64> = batch.iter().map(|c| kto_value(c, z_ref, p)).collect();
    let loss =
        batch.iter().zip(&values).map(|(c, v)| p.weight(c.desirable) * (1.0 - v)).sum::<f64>() / batch.len() as f64;
    Ok(KtoBreakdown { z_ref, rewards, values, loss })
}

/// Derivative of the loss with respect to every policy token log-probability,
/// holding z_ref fixed. Every token of a completion shares the same
/// derivative since the reward depends only on the sequence sum.
pub fn kto_loss_gradient(batch: &[ScoredCompletion], p: &KtoParams) -> Result<Vec<Vec<f64>>, AlignmentError> {
    check_batch(batch, p)?;
    let z_ref = resolve_z(batch, p)?;
    let n = batch.len() as f64;
    Ok(batch
        .iter()
        .map(|c| {
            let x = signed_margin(c, z_ref, p);
            let s = if c.desirable { 1.0 } else { -1.0 };
            let sig = sigmoid(x);
            let g = -p.weight(c.desirable) * s * p.beta * sig * (1.0 - sig) / n;
            vec![g; c.policy_logprobs.len()]
        })
        .collect())
}

/// One line of a preference batch file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceRecord {
    pub id: String,
    pub policy_logprobs: Vec<f64>,
    pub ref_logprobs: Vec<f64>,
    pub desirable: bool,
}

impl PreferenceRecord {
    pub fn scored(&self) -> Result<ScoredCompletion, AlignmentError> {
        ScoredCompletion::new(self.policy_logprobs.clone(), self.ref_logprobs.clone(), self.desirable)
    }
}
