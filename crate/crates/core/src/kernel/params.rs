use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{KernelError, ModelConfig, Vocab};

/// A named row-major matrix; vectors have one column.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Lstm {
    /// `4H x (input + H)`; gate order input, forget, cell, output.
    pub w: usize,
    pub b: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Ffnn {
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
}

/// Tensor positions, derived from the config alone.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Index {
    pub src_emb: usize,
    pub tgt_emb: usize,
    pub enc_fwd: Vec<Lstm>,
    pub enc_bwd: Vec<Lstm>,
    pub dec: Vec<Lstm>,
    pub w_alpha: usize,
    pub b_alpha: usize,
    pub w_beta: usize,
    pub ffnn_g: Ffnn,
    pub ffnn_c: Ffnn,
    pub ffnn_p: Ffnn,
    pub ffnn_a: Ffnn,
    pub w_c: usize,
    pub w_p: usize,
    pub w_a: usize,
}

struct Builder {
    shapes: Vec<(String, usize, usize)>,
}

impl Builder {
    fn add(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> usize {
        self.shapes.push((name.into(), rows, cols));
        self.shapes.len() - 1
    }

    fn lstm(&mut self, name: &str, input: usize, hidden: usize) -> Lstm {
        Lstm {
            w: self.add(format!("{name}.w"), 4 * hidden, input + hidden),
            b: self.add(format!("{name}.b"), 4 * hidden, 1),
        }
    }

    fn ffnn(&mut self, name: &str, input: usize, hidden: usize, output: usize) -> Ffnn {
        Ffnn {
            w1: self.add(format!("{name}.w1"), hidden, input),
            b1: self.add(format!("{name}.b1"), hidden, 1),
            w2: self.add(format!("{name}.w2"), output, hidden),
            b2: self.add(format!("{name}.b2"), output, 1),
        }
    }
}

fn layout(c: &ModelConfig) -> (Index, Vec<(String, usize, usize)>) {
    let (e, h, f) = (c.emb_dim, c.hidden_dim, c.ffnn_dim);
    let gamma = e + 2 * h;
    let mut b = Builder { shapes: Vec::new() };
    let src_emb = b.add("src_emb", c.src_vocab, e);
    let tgt_emb = b.add("tgt_emb", c.tgt_vocab, e);
    let stack = |b: &mut Builder, name: &str| -> Vec<Lstm> {
        (0..c.layers).map(|l| b.lstm(&format!("{name}.{l}"), if l == 0 { e } else { h }, h)).collect()
    };
    let enc_fwd = stack(&mut b, "enc_fwd");
    let enc_bwd = stack(&mut b, "enc_bwd");
    let dec = stack(&mut b, "dec");
    let w_alpha = b.add("w_alpha", h, 2 * h);
    let b_alpha = b.add("b_alpha", h, 1);
    let w_beta = b.add("w_beta", h, 2 * h);
    let ffnn_g = b.ffnn("ffnn_g", 3 * h, f, c.tgt_vocab);
    let ffnn_c = b.ffnn("ffnn_c", gamma, f, f);
    let ffnn_p = b.ffnn("ffnn_p", gamma, f, f);
    let ffnn_a = b.ffnn("ffnn_a", 3 * gamma, f, f);
    let w_c = b.add("w_c", 1, f);
    let w_p = b.add("w_p", 1, f);
    let w_a = b.add("w_a", 1, f);
    let index = Index {
        src_emb,
        tgt_emb,
        enc_fwd,
        enc_bwd,
        dec,
        w_alpha,
        b_alpha,
        w_beta,
        ffnn_g,
        ffnn_c,
        ffnn_p,
        ffnn_a,
        w_c,
        w_p,
        w_a,
    };
    (index, b.shapes)
}

/// Every weight of the encoder-decoder, in a fixed tensor order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    config: ModelConfig,
    index: Index,
    tensors: Vec<Tensor>,
}

impl ModelParams {
    /// All-zero parameters.
    pub fn zeros(config: &ModelConfig) -> Result<ModelParams, KernelError> {
        config.check()?;
        let (index, shapes) = layout(config);
        let tensors = shapes
            .into_iter()
            .map(|(name, rows, cols)| Tensor { name, rows, cols, data: vec![0.0; rows * cols] })
            .collect();
        Ok(ModelParams { config: config.clone(), index, tensors })
    }

    /// Uniform `±1/sqrt(fan_in)` weights from `config.seed`; LSTM forget
    /// gates start with bias 1 and `W_β` at zero, so copy attention starts
    /// uniform.
    pub fn init(config: &ModelConfig) -> Result<ModelParams, KernelError> {
        let mut params = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        for t in &mut params.tensors {
            let bound = if t.cols == 1 { 0.1 } else { 1.0 / (t.cols as f64).sqrt() };
            for x in &mut t.data {
                *x = rng.gen_range(-bound..bound);
            }
        }
        let h = config.hidden_dim;
        let lstms: Vec<Lstm> =
            params.index.enc_fwd.iter().chain(&params.index.enc_bwd).chain(&params.index.dec).copied().collect();
        for lstm in lstms {
            params.tensors[lstm.b].data[h..2 * h].iter_mut().for_each(|x| *x = 1.0);
        }
        params.tensors[params.index.w_beta].data.iter_mut().for_each(|x| *x = 0.0);
        Ok(params)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub(crate) fn index(&self) -> &Index {
        &self.index
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().flat_map(|t| &t.data).all(|x| x.is_finite())
    }
}

const MAGIC: &[u8; 8] = b"XLSEMCKP";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    source_vocab: Vec<String>,
    target_vocab: Vec<String>,
}

/// Writes a checkpoint:
///
/// ```text
/// magic "XLSEMCKP" | version u32 | header length u32 | header JSON
/// | tensor count u32 | per tensor: name length u32, name, rows u32, cols u32, rows*cols f64
/// ```
///
/// All integers and floats are little-endian. The JSON header holds the
/// model config and both vocabularies.
pub fn write_checkpoint<W: Write>(
    mut w: W,
    params: &ModelParams,
    source: &Vocab,
    target: &Vocab,
) -> Result<(), KernelError> {
    let header = Header {
        model: params.config.clone(),
        source_vocab: source.tokens().to_vec(),
        target_vocab: target.tokens().to_vec(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| KernelError::Checkpoint(e.to_string()))?;
    let u32_of = |n: usize| u32::try_from(n).map_err(|_| KernelError::Checkpoint("size exceeds u32".into()));
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&u32_of(json.len())?.to_le_bytes())?;
    w.write_all(&json)?;
    w.write_all(&u32_of(params.tensors.len())?.to_le_bytes())?;
    for t in &params.tensors {
        w.write_all(&u32_of(t.name.len())?.to_le_bytes())?;
        w.write_all(t.name.as_bytes())?;
        w.write_all(&u32_of(t.rows)?.to_le_bytes())?;
        w.write_all(&u32_of(t.cols)?.to_le_bytes())?;
        for x in &t.data {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<usize, KernelError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf) as usize)
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(ModelParams, Vocab, Vocab), KernelError> {
    let bad = |m: String| KernelError::Checkpoint(m);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(bad("not a checkpoint".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION as usize {
        return Err(bad(format!("unsupported version {version}")));
    }
    let mut json = vec![0u8; read_u32(&mut r)?];
    r.read_exact(&mut json)?;
    let header: Header = serde_json::from_slice(&json).map_err(|e| bad(e.to_string()))?;
    let mut params = ModelParams::zeros(&header.model)?;
    let count = read_u32(&mut r)?;
    if count != params.tensors.len() {
        return Err(bad(format!("expected {} tensors, found {count}", params.tensors.len())));
    }
    for t in &mut params.tensors {
        let mut name = vec![0u8; read_u32(&mut r)?];
        r.read_exact(&mut name)?;
        let (rows, cols) = (read_u32(&mut r)?, read_u32(&mut r)?);
        if name != t.name.as_bytes() || rows != t.rows || cols != t.cols {
            return Err(bad(format!("tensor `{}` does not match the config", String::from_utf8_lossy(&name))));
        }
        for x in &mut t.data {
            let mut buf = [0u8; 8];
            r.read_exact(&mut buf)?;
            *x = f64::from_le_bytes(buf);
        }
    }
    Ok((params, Vocab::from_tokens(header.source_vocab), Vocab::from_tokens(header.target_vocab)))
}
