//! An attention encoder-decoder with a copy mechanism, at desk scale and in
//! double precision.
//!
//! The encoder is a pair of stacked LSTMs read left-to-right and
//! right-to-left; `h_i` concatenates the two top-layer states. The decoder
//! is a stacked LSTM started from the left-to-right encoder's final states.
//! At each step it produces a generation distribution from its state and an
//! attention context, and a second attention context `o_t` used in the
//! token representation `γ(y_t) = [e(y_t), o_t]`. A bullet's antecedent is
//! scored against every preceding head token `y_k` as
//!
//! ```text
//! w_c·FFNN_c(γ_t) + w_p·FFNN_p(γ_k) + w_a·FFNN_a([γ_t, γ_k, γ_t ∘ γ_k])
//! ```
//!
//! with the dummy antecedent fixed at score 0. Gradients come from a small
//! reverse-mode tape and are checked against central differences.

mod model;
mod params;
mod synth;
mod tape;
mod train;

#[cfg(test)]
mod tests;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linear::{LinToken, LinearizedRepr, BULLET_ASCII};

pub use model::{
    copy_scores, decode_step, encode, forced_assignments, gamma, greedy_decode, initial_state, sequence_nll,
    sequence_nll_grad, CopyScores, Decoded, DecoderState, DecoderStep, KernelResolver,
};
pub use params::{read_checkpoint, write_checkpoint, ModelParams, Tensor};
pub use synth::{synth_dataset, Splits, SynthConfig, SynthDataset, SynthExample};
pub use tape::Grads;
pub use train::{grad_check, train, Adam, EpochLog, GradCheck, MuSchedule, TrainConfig, TrainOutcome};

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("token id {id} out of range for a vocabulary of {size}")]
    TokenOutOfRange { id: usize, size: usize },
    #[error("empty source sentence")]
    EmptySource,
    #[error("assignment at step {step} points to {antecedent}, which is not a preceding head token")]
    BadAssignment { step: usize, antecedent: usize },
    #[error("example has {tokens} target tokens but {assignments} assignments")]
    ShapeMismatch { tokens: usize, assignments: usize },
    #[error("finite-difference step must be positive")]
    ZeroStep,
    #[error("loss is not finite")]
    NonFinite,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub src_vocab: usize,
    pub tgt_vocab: usize,
    pub emb_dim: usize,
    /// LSTM state size, shared by both encoder directions and the decoder.
    pub hidden_dim: usize,
    /// Hidden width of every two-layer feed-forward network.
    pub ffnn_dim: usize,
    pub layers: usize,
    /// Copy-loss weight.
    pub mu: f64,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(src_vocab: usize, tgt_vocab: usize, dim: usize, layers: usize, seed: u64) -> Self {
        ModelConfig { src_vocab, tgt_vocab, emb_dim: dim, hidden_dim: dim, ffnn_dim: dim, layers, mu: 1.0, seed }
    }

    pub fn check(&self) -> Result<(), KernelError> {
        let dims = [
            ("src_vocab", self.src_vocab),
            ("tgt_vocab", self.tgt_vocab),
            ("emb_dim", self.emb_dim),
            ("hidden_dim", self.hidden_dim),
            ("ffnn_dim", self.ffnn_dim),
            ("layers", self.layers),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(KernelError::Config(format!("{name} must be at least 1")));
        }
        if !self.mu.is_finite() || self.mu < 0.0 {
            return Err(KernelError::Config("mu must be finite and nonnegative".into()));
        }
        Ok(())
    }
}

/// Token inventory. Ids 0, 1 and 2 are the start, end and unknown symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    heads: Vec<bool>,
    bullet: Option<usize>,
}

impl Vocab {
    pub const BOS: usize = 0;
    pub const EOS: usize = 1;
    pub const UNK: usize = 2;
    const RESERVED: [&'static str; 3] = ["<s>", "</s>", "<unk>"];

    /// Reserved symbols followed by the distinct `tokens` in sorted order.
    pub fn build<S: Into<String>>(tokens: impl IntoIterator<Item = S>) -> Vocab {
        let mut rest: Vec<String> = tokens.into_iter().map(Into::into).collect();
        rest.sort();
        rest.dedup();
        rest.retain(|t| !Self::RESERVED.contains(&t.as_str()));
        let all = Self::RESERVED.iter().map(|s| s.to_string()).chain(rest).collect();
        Self::from_tokens(all)
    }

    /// Uses `tokens` as stored, e.g. from a checkpoint.
    pub fn from_tokens(tokens: Vec<String>) -> Vocab {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        let heads = tokens.iter().map(|t| LinToken::parse(t).is_ok_and(|l| l.is_head_word())).collect();
        let bullet = tokens.iter().position(|t| t == BULLET_ASCII);
        Vocab { tokens, index, heads, bullet }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(Self::UNK)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    /// Whether the token is a head-marked word.
    pub fn is_head(&self, id: usize) -> bool {
        self.heads.get(id).copied().unwrap_or(false)
    }

    pub fn bullet(&self) -> Option<usize> {
        self.bullet
    }

    /// Target ids of a linearized sequence; bullets use the ASCII alias.
    pub fn encode_target(&self, l: &LinearizedRepr) -> Vec<usize> {
        l.tokens().iter().map(|t| self.id(&t.render(false))).collect()
    }
}

/// `X`, `Y` and `A` of one sentence as vocabulary ids. `heads[t]` marks
/// head tokens of `Y`, the only copy candidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub x: Vec<usize>,
    pub y: Vec<usize>,
    pub a: Vec<Option<usize>>,
    pub heads: Vec<bool>,
}

impl TrainingExample {
    /// Builds an example from source tokens and a linearized target.
    /// Each bullet's antecedent is moved to the head word of the span that
    /// holds it, since copying is trained over head tokens only.
    pub fn from_linearized(source: &[String], target: &LinearizedRepr, src: &Vocab, tgt: &Vocab) -> TrainingExample {
        let x = source.iter().map(|s| src.id(s)).collect();
        let y = tgt.encode_target(target);
        let heads = target.tokens().iter().map(LinToken::is_head_word).collect();
        let a = head_assignments(target);
        TrainingExample { x, y, a, heads }
    }

    pub fn check(&self, config: &ModelConfig) -> Result<(), KernelError> {
        if self.x.is_empty() {
            return Err(KernelError::EmptySource);
        }
        if self.a.len() != self.y.len() || self.heads.len() != self.y.len() {
            return Err(KernelError::ShapeMismatch { tokens: self.y.len(), assignments: self.a.len() });
        }
        for &id in &self.x {
            if id >= config.src_vocab {
                return Err(KernelError::TokenOutOfRange { id, size: config.src_vocab });
            }
        }
        for &id in &self.y {
            if id >= config.tgt_vocab {
                return Err(KernelError::TokenOutOfRange { id, size: config.tgt_vocab });
            }
        }
        for (t, a) in self.a.iter().enumerate() {
            if let Some(k) = *a {
                if k >= t || !self.heads[k] {
                    return Err(KernelError::BadAssignment { step: t, antecedent: k });
                }
            }
        }
        Ok(())
    }
}

/// Gold assignments with each antecedent replaced by the head word of its
/// span. A link whose head does not precede the bullet is dropped.
pub fn head_assignments(l: &LinearizedRepr) -> Vec<Option<usize>> {
    let s = l.structure();
    let tokens = l.tokens();
    l.assignments()
        .iter()
        .enumerate()
        .map(|(t, a)| {
            let a = (*a)?;
            let head = match s.owner[a].and_then(|span| s.head_position(tokens, span)) {
                Some(h) if tokens[h].is_head_word() => h,
                _ => a,
            };
            (head < t && tokens[head].is_head_word()).then_some(head)
        })
        .collect()
}
