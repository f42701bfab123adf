use super::params::{Ffnn, Lstm, ModelParams};
use super::tape::{Grads, Tape, Var};
use super::{KernelError, TrainingExample, Vocab};
use crate::coref::{CorefResolver, Resolution};
use crate::linear::{LinToken, LinearizedRepr};

/// Encoder output on a tape.
struct Encoded {
    h: Vec<Var>,
    alpha_keys: Vec<Var>,
    beta_keys: Vec<Var>,
    /// Final `(h, c)` of each left-to-right layer.
    init: Vec<(Var, Var)>,
}

struct Step {
    state: Vec<(Var, Var)>,
    s: Var,
    c_ctx: Var,
    alpha: Var,
    beta: Var,
    o: Var,
    logits: Var,
}

fn lstm_step(tape: &mut Tape, lstm: Lstm, hidden: usize, x: Var, (h, c): (Var, Var)) -> (Var, Var) {
    let xin = tape.concat(&[x, h]);
    let gates = tape.affine(lstm.w, Some(lstm.b), xin);
    let gate = |tape: &mut Tape, k: usize| tape.slice(gates, k * hidden, hidden);
    let (i, f, g, o) = (gate(tape, 0), gate(tape, 1), gate(tape, 2), gate(tape, 3));
    let (i, f, g, o) = (tape.sigmoid(i), tape.sigmoid(f), tape.tanh(g), tape.sigmoid(o));
    let keep = tape.mul(f, c);
    let write = tape.mul(i, g);
    let c_next = tape.add(keep, write);
    let squashed = tape.tanh(c_next);
    (tape.mul(o, squashed), c_next)
}

/// Runs a stacked LSTM over `inputs`; returns top-layer outputs and the
/// final state of each layer.
fn run_stack(tape: &mut Tape, layers: &[Lstm], hidden: usize, inputs: &[Var]) -> (Vec<Var>, Vec<(Var, Var)>) {
    let mut seq = inputs.to_vec();
    let mut finals = Vec::with_capacity(layers.len());
    for &lstm in layers {
        let zero = tape.input(vec![0.0; hidden]);
        let mut state = (zero, zero);
        let mut out = Vec::with_capacity(seq.len());
        for &x in &seq {
            state = lstm_step(tape, lstm, hidden, x, state);
            out.push(state.0);
        }
        finals.push(state);
        seq = out;
    }
    (seq, finals)
}

fn check_ids(ids: &[usize], size: usize) -> Result<(), KernelError> {
    match ids.iter().find(|&&id| id >= size) {
        Some(&id) => Err(KernelError::TokenOutOfRange { id, size }),
        None => Ok(()),
    }
}

fn encode_tape(tape: &mut Tape, params: &ModelParams, x: &[usize]) -> Result<Encoded, KernelError> {
    if x.is_empty() {
        return Err(KernelError::EmptySource);
    }
    let cfg = params.config();
    check_ids(x, cfg.src_vocab)?;
    let idx = params.index();
    let h = cfg.hidden_dim;
    let emb: Vec<Var> = x.iter().map(|&id| tape.embed(idx.src_emb, id)).collect();
    let (fwd, init) = run_stack(tape, &idx.enc_fwd, h, &emb);
    let reversed: Vec<Var> = emb.iter().rev().copied().collect();
    let (mut bwd, _) = run_stack(tape, &idx.enc_bwd, h, &reversed);
    bwd.reverse();
    let states: Vec<Var> = fwd.iter().zip(&bwd).map(|(&f, &b)| tape.concat(&[f, b])).collect();
    Ok(attach_keys(tape, params, states, init))
}

fn attach_keys(tape: &mut Tape, params: &ModelParams, h: Vec<Var>, init: Vec<(Var, Var)>) -> Encoded {
    let idx = params.index();
    let alpha_keys = h.iter().map(|&hi| tape.affine(idx.w_alpha, Some(idx.b_alpha), hi)).collect();
    let beta_keys = h.iter().map(|&hi| tape.affine(idx.w_beta, None, hi)).collect();
    Encoded { h, alpha_keys, beta_keys, init }
}

fn decode_tape(
    tape: &mut Tape,
    params: &ModelParams,
    enc: &Encoded,
    prev: usize,
    state: &[(Var, Var)],
) -> Result<Step, KernelError> {
    let cfg = params.config();
    check_ids(&[prev], cfg.tgt_vocab)?;
    let idx = params.index();
    let mut x = tape.embed(idx.tgt_emb, prev);
    let mut next = Vec::with_capacity(state.len());
    for (&lstm, &st) in idx.dec.iter().zip(state) {
        let st = lstm_step(tape, lstm, cfg.hidden_dim, x, st);
        next.push(st);
        x = st.0;
    }
    let s = x;
    let a_scores = tape.scores(s, &enc.alpha_keys);
    let alpha = tape.softmax(a_scores);
    let c_ctx = tape.weighted_sum(alpha, &enc.h);
    let g_in = tape.concat(&[s, c_ctx]);
    let logits = ffnn(tape, idx.ffnn_g, g_in);
    let b_scores = tape.scores(s, &enc.beta_keys);
    let beta = tape.softmax(b_scores);
    let o = tape.weighted_sum(beta, &enc.h);
    Ok(Step { state: next, s, c_ctx, alpha, beta, o, logits })
}

/// Two layers: tanh hidden, linear output.
fn ffnn(tape: &mut Tape, f: Ffnn, x: Var) -> Var {
    let a = tape.affine(f.w1, Some(f.b1), x);
    let hidden = tape.tanh(a);
    tape.affine(f.w2, Some(f.b2), hidden)
}

fn gamma_tape(tape: &mut Tape, params: &ModelParams, y: usize, o: Var) -> Var {
    let e = tape.embed(params.index().tgt_emb, y);
    tape.concat(&[e, o])
}

fn unary_score(tape: &mut Tape, f: Ffnn, w: usize, gamma: Var) -> Var {
    let hidden = ffnn(tape, f, gamma);
    tape.affine(w, None, hidden)
}

fn pair_score(tape: &mut Tape, params: &ModelParams, gamma_t: Var, gamma_k: Var) -> Var {
    let idx = params.index();
    let prod = tape.mul(gamma_t, gamma_k);
    let input = tape.concat(&[gamma_t, gamma_k, prod]);
    unary_score(tape, idx.ffnn_a, idx.w_a, input)
}

/// Copy logits over `[ε, candidates...]` with ε fixed at 0. `s_p` holds the
/// cached source scores of the candidates.
fn copy_logits(tape: &mut Tape, params: &ModelParams, gamma_t: Var, candidates: &[(Var, Var)]) -> Var {
    let idx = params.index();
    let s_c = unary_score(tape, idx.ffnn_c, idx.w_c, gamma_t);
    let mut scores = vec![tape.input(vec![0.0])];
    for &(gamma_k, s_p) in candidates {
        let s_a = pair_score(tape, params, gamma_t, gamma_k);
        scores.push(tape.sum(&[s_c, s_p, s_a]));
    }
    tape.stack(&scores)
}

/// Negative log-likelihood of one example on a fresh tape; returns the loss
/// node. An end-of-sequence step follows the last target token.
fn nll_tape(tape: &mut Tape, params: &ModelParams, ex: &TrainingExample, mu: f64) -> Result<Var, KernelError> {
    ex.check(params.config())?;
    let idx = params.index();
    let enc = encode_tape(tape, params, &ex.x)?;
    let mut state = enc.init.clone();
    let mut prev = Vocab::BOS;
    let mut terms = Vec::with_capacity(ex.y.len() + 2);
    // (γ_k, s_p(γ_k)) for each preceding head token.
    let mut heads: Vec<(usize, Var, Var)> = Vec::new();
    for t in 0..=ex.y.len() {
        let step = decode_tape(tape, params, &enc, prev, &state)?;
        let target = ex.y.get(t).copied().unwrap_or(Vocab::EOS);
        terms.push(tape.neg_log_softmax(step.logits, target));
        if t == ex.y.len() {
            break;
        }
        if mu != 0.0 && (ex.heads[t] || ex.a[t].is_some()) {
            let gamma_t = gamma_tape(tape, params, ex.y[t], step.o);
            if let Some(k) = ex.a[t] {
                let pick = heads.iter().position(|&(p, _, _)| p == k).expect("checked antecedent");
                let cands: Vec<(Var, Var)> = heads.iter().map(|&(_, g, s)| (g, s)).collect();
                let logits = copy_logits(tape, params, gamma_t, &cands);
                let nll = tape.neg_log_softmax(logits, pick + 1);
                terms.push(tape.scale(nll, mu));
            }
            if ex.heads[t] {
                let s_p = unary_score(tape, idx.ffnn_p, idx.w_p, gamma_t);
                heads.push((t, gamma_t, s_p));
            }
        }
        state = step.state;
        prev = ex.y[t];
    }
    Ok(tape.sum(&terms))
}

/// `-[Σ_t log P_g(y_t) + μ · log P_c(a_t) · 1{a_t ≠ ε}]` for one example,
/// including the end-of-sequence step.
pub fn sequence_nll(ex: &TrainingExample, params: &ModelParams, mu: f64) -> Result<f64, KernelError> {
    let mut tape = Tape::new(params);
    let loss = nll_tape(&mut tape, params, ex, mu)?;
    let value = tape.scalar(loss);
    if value.is_finite() {
        Ok(value)
    } else {
        Err(KernelError::NonFinite)
    }
}

/// Loss and its gradient with respect to every parameter.
pub fn sequence_nll_grad(ex: &TrainingExample, params: &ModelParams, mu: f64) -> Result<(f64, Grads), KernelError> {
    let mut tape = Tape::new(params);
    let loss = nll_tape(&mut tape, params, ex, mu)?;
    let value = tape.scalar(loss);
    if !value.is_finite() {
        return Err(KernelError::NonFinite);
    }
    let mut grads = Grads::zeros_like(params);
    tape.backward(loss, &mut grads);
    Ok((value, grads))
}

/// Encoder states `h_i = [left-to-right; right-to-left]`.
pub fn encode(x: &[usize], params: &ModelParams) -> Result<Vec<Vec<f64>>, KernelError> {
    let mut tape = Tape::new(params);
    let enc = encode_tape(&mut tape, params, x)?;
    Ok(enc.h.iter().map(|&v| tape.value(v).to_vec()).collect())
}

/// Per-layer `(h, c)` of the decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState {
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
}

/// The decoder's starting state: the final left-to-right encoder states.
pub fn initial_state(x: &[usize], params: &ModelParams) -> Result<DecoderState, KernelError> {
    let mut tape = Tape::new(params);
    let enc = encode_tape(&mut tape, params, x)?;
    Ok(DecoderState {
        layers: enc.init.iter().map(|&(h, c)| (tape.value(h).to_vec(), tape.value(c).to_vec())).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderStep {
    pub state: DecoderState,
    pub s_t: Vec<f64>,
    pub c_t: Vec<f64>,
    pub o_t: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub p_g: Vec<f64>,
}

/// One decoder step from `prev` given encoder states `h`.
pub fn decode_step(
    prev: usize,
    state: &DecoderState,
    h: &[Vec<f64>],
    params: &ModelParams,
) -> Result<DecoderStep, KernelError> {
    let cfg = params.config();
    if h.is_empty() {
        return Err(KernelError::EmptySource);
    }
    let shape_err = || KernelError::Config("decoder state or encoder states have the wrong shape".into());
    if state.layers.len() != cfg.layers
        || state.layers.iter().any(|(a, b)| a.len() != cfg.hidden_dim || b.len() != cfg.hidden_dim)
        || h.iter().any(|v| v.len() != 2 * cfg.hidden_dim)
    {
        return Err(shape_err());
    }
    let mut tape = Tape::new(params);
    let hs: Vec<Var> = h.iter().map(|v| tape.input(v.clone())).collect();
    let init: Vec<(Var, Var)> =
        state.layers.iter().map(|(a, b)| (tape.input(a.clone()), tape.input(b.clone()))).collect();
    let enc = attach_keys(&mut tape, params, hs, init.clone());
    let step = decode_tape(&mut tape, params, &enc, prev, &init)?;
    let value = |v: Var| tape.value(v).to_vec();
    Ok(DecoderStep {
        state: DecoderState { layers: step.state.iter().map(|&(a, b)| (value(a), value(b))).collect() },
        s_t: value(step.s),
        c_t: value(step.c_ctx),
        o_t: value(step.o),
        alpha: value(step.alpha),
        beta: value(step.beta),
        p_g: super::tape::softmax(&value(step.logits)),
    })
}

/// `γ(y) = [e(y), o_t]`.
pub fn gamma(y: usize, o_t: &[f64], params: &ModelParams) -> Result<Vec<f64>, KernelError> {
    check_ids(&[y], params.config().tgt_vocab)?;
    let mut tape = Tape::new(params);
    let o = tape.input(o_t.to_vec());
    let g = gamma_tape(&mut tape, params, y, o);
    Ok(tape.value(g).to_vec())
}

/// Copy scores of `γ_t` against preceding representations.
#[derive(Debug, Clone, PartialEq)]
pub struct CopyScores {
    pub s_c: f64,
    pub s_p: Vec<f64>,
    pub s_a: Vec<f64>,
    /// `[ε, candidates...]`; ε is always 0.
    pub scores: Vec<f64>,
    pub p_c: Vec<f64>,
}

pub fn copy_scores(gamma_t: &[f64], preceding: &[Vec<f64>], params: &ModelParams) -> Result<CopyScores, KernelError> {
    let cfg = params.config();
    let dim = cfg.emb_dim + 2 * cfg.hidden_dim;
    if gamma_t.len() != dim || preceding.iter().any(|g| g.len() != dim) {
        return Err(KernelError::Config(format!("token representations must have length {dim}")));
    }
    let idx = params.index();
    let mut tape = Tape::new(params);
    let gt = tape.input(gamma_t.to_vec());
    let s_c = unary_score(&mut tape, idx.ffnn_c, idx.w_c, gt);
    let mut s_p = Vec::new();
    let mut s_a = Vec::new();
    let mut scores = vec![0.0];
    for g in preceding {
        let gk = tape.input(g.clone());
        let p = unary_score(&mut tape, idx.ffnn_p, idx.w_p, gk);
        let a = pair_score(&mut tape, params, gt, gk);
        s_p.push(tape.scalar(p));
        s_a.push(tape.scalar(a));
        scores.push(tape.scalar(s_c) + tape.scalar(p) + tape.scalar(a));
    }
    let p_c = super::tape::softmax(&scores);
    Ok(CopyScores { s_c: tape.scalar(s_c), s_p, s_a, scores, p_c })
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

/// Output of greedy decoding.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub y: Vec<usize>,
    pub a: Vec<Option<usize>>,
    /// Largest `|Σ P - 1|` seen over every generation and copy
    /// distribution.
    pub max_norm_error: f64,
}

/// Greedy decoding: emit the most likely token; when it is the bullet, copy
/// from the highest-scoring preceding head token (never ε). Stops at the end
/// symbol or after `max_len` tokens.
pub fn greedy_decode(
    x: &[usize],
    params: &ModelParams,
    target: &Vocab,
    max_len: usize,
) -> Result<Decoded, KernelError> {
    let mut out = Decoded { y: Vec::new(), a: Vec::new(), max_norm_error: 0.0 };
    if max_len == 0 {
        return Ok(out);
    }
    let idx = params.index();
    let mut tape = Tape::new(params);
    let enc = encode_tape(&mut tape, params, x)?;
    let mut state = enc.init.clone();
    let mut prev = Vocab::BOS;
    let mut heads: Vec<(usize, Var, Var)> = Vec::new();
    while out.y.len() < max_len {
        let step = decode_tape(&mut tape, params, &enc, prev, &state)?;
        let p_g = super::tape::softmax(tape.value(step.logits));
        out.max_norm_error = out.max_norm_error.max((p_g.iter().sum::<f64>() - 1.0).abs());
        let y = argmax(&p_g);
        if y == Vocab::EOS {
            break;
        }
        let t = out.y.len();
        let is_bullet = target.bullet() == Some(y);
        let mut a = None;
        if is_bullet || target.is_head(y) {
            let gamma_t = gamma_tape(&mut tape, params, y, step.o);
            if is_bullet && !heads.is_empty() {
                let cands: Vec<(Var, Var)> = heads.iter().map(|&(_, g, s)| (g, s)).collect();
                let logits = copy_logits(&mut tape, params, gamma_t, &cands);
                let p_c = super::tape::softmax(tape.value(logits));
                out.max_norm_error = out.max_norm_error.max((p_c.iter().sum::<f64>() - 1.0).abs());
                a = Some(heads[argmax(&p_c[1..])].0);
            }
            if target.is_head(y) {
                let s_p = unary_score(&mut tape, idx.ffnn_p, idx.w_p, gamma_t);
                heads.push((t, gamma_t, s_p));
            }
        }
        out.y.push(y);
        out.a.push(a);
        state = step.state;
        prev = y;
    }
    Ok(out)
}

/// Forced decoding: tokens fixed to `y`, and each bullet assigned its
/// highest-scoring preceding head token. Bullets with no candidate stay ε.
pub fn forced_assignments(
    x: &[usize],
    y: &[usize],
    heads_mask: &[bool],
    bullet: usize,
    params: &ModelParams,
) -> Result<Vec<Option<usize>>, KernelError> {
    check_ids(y, params.config().tgt_vocab)?;
    let idx = params.index();
    let mut tape = Tape::new(params);
    let enc = encode_tape(&mut tape, params, x)?;
    let mut state = enc.init.clone();
    let mut prev = Vocab::BOS;
    let mut heads: Vec<(usize, Var, Var)> = Vec::new();
    let mut out = vec![None; y.len()];
    let last_needed = y.iter().rposition(|&id| id == bullet);
    let Some(last) = last_needed else { return Ok(out) };
    for t in 0..=last {
        let step = decode_tape(&mut tape, params, &enc, prev, &state)?;
        let is_bullet = y[t] == bullet;
        if is_bullet || heads_mask[t] {
            let gamma_t = gamma_tape(&mut tape, params, y[t], step.o);
            if is_bullet && !heads.is_empty() {
                let cands: Vec<(Var, Var)> = heads.iter().map(|&(_, g, s)| (g, s)).collect();
                let logits = copy_logits(&mut tape, params, gamma_t, &cands);
                out[t] = Some(heads[argmax(&tape.value(logits)[1..])].0);
            }
            if heads_mask[t] {
                let s_p = unary_score(&mut tape, idx.ffnn_p, idx.w_p, gamma_t);
                heads.push((t, gamma_t, s_p));
            }
        }
        state = step.state;
        prev = y[t];
    }
    Ok(out)
}

/// Forced-decoding resolver backed by a trained model. `sources[i]` is the
/// source sentence of the `i`-th gold sequence.
pub struct KernelResolver<'a> {
    pub params: &'a ModelParams,
    pub source_vocab: &'a Vocab,
    pub target_vocab: &'a Vocab,
    pub sources: &'a [Vec<String>],
}

impl CorefResolver for KernelResolver<'_> {
    fn resolve(&self, gold: &LinearizedRepr, index: usize) -> Resolution {
        let x: Vec<usize> = self.sources[index].iter().map(|s| self.source_vocab.id(s)).collect();
        let y = self.target_vocab.encode_target(gold);
        let heads: Vec<bool> = gold.tokens().iter().map(LinToken::is_head_word).collect();
        let bullet = self.target_vocab.bullet().unwrap_or(usize::MAX);
        let assignments =
            forced_assignments(&x, &y, &heads, bullet, self.params).unwrap_or_else(|_| vec![None; gold.len()]);
        let flagged = gold.bullet_positions().into_iter().filter(|&b| assignments[b].is_none()).collect();
        Resolution { assignments, flagged }
    }
}
