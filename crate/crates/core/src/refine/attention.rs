use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{EmbeddingSource, FrameEmbedding, RefineError, Result};

const MAGIC: &[u8; 4] = b"ICLR";
const FORMAT_VERSION: u32 = 1;

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = logits.clone();
    for mut row in out.row_iter_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.iter_mut().for_each(|v| *v = (*v - max).exp());
        let sum: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= sum);
    }
    out
}

/// `softmax(Q Kᵀ / √d_k) V`, also returning the attention weights.
pub fn attention_weights(q: &DMatrix<f64>, k: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if q.ncols() != k.ncols() {
        return Err(RefineError::DimensionMismatch(format!("Q has {} columns, K has {}", q.ncols(), k.ncols())));
    }
    if k.nrows() != v.nrows() {
        return Err(RefineError::DimensionMismatch(format!("K has {} rows, V has {}", k.nrows(), v.nrows())));
    }
    if q.nrows() == 0 || k.nrows() == 0 {
        return Err(RefineError::DimensionMismatch("attention needs at least one query and one key".into()));
    }
    let scale = 1.0 / (q.ncols() as f64).sqrt();
    let weights = softmax_rows(&((q * k.transpose()) * scale));
    let out = &weights * v;
    Ok((out, weights))
}

pub fn attention_head(q: &DMatrix<f64>, k: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    attention_weights(q, k, v).map(|(out, _)| out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionBlock {
    pub num_heads: usize,
    pub d_model: usize,
    pub d_k: usize,
    /// Per head, `d_model × d_k`.
    pub w_q: Vec<DMatrix<f64>>,
    pub w_k: Vec<DMatrix<f64>>,
    pub w_v: Vec<DMatrix<f64>>,
    /// `(num_heads · d_k) × d_model`.
    pub w_o: DMatrix<f64>,
    /// `None` for blocks loaded from disk.
    pub seed: Option<u64>,
}

impl AttentionBlock {
    /// Gaussian weights scaled by `1/√d_model`, drawn in the order
    /// `W_Q, W_K, W_V` per head, then `W_O`.
    pub fn seeded(num_heads: usize, d_model: usize, seed: u64) -> Result<Self> {
        let d_k = check_shape(num_heads, d_model)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (d_model as f64).sqrt();
        let mut draw = |r: usize, c: usize| {
            DMatrix::from_fn(r, c, |_, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * scale
            })
        };
        let (mut w_q, mut w_k, mut w_v) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..num_heads {
            w_q.push(draw(d_model, d_k));
            w_k.push(draw(d_model, d_k));
            w_v.push(draw(d_model, d_k));
        }
        let w_o = draw(num_heads * d_k, d_model);
        Ok(Self { num_heads, d_model, d_k, w_q, w_k, w_v, w_o, seed: Some(seed) })
    }

    pub fn validate(&self) -> Result<()> {
        let d_k = check_shape(self.num_heads, self.d_model)?;
        let bad = |what: &str| Err(RefineError::InvalidBlock(what.to_string()));
        if d_k != self.d_k {
            return bad("d_k must equal d_model / num_heads");
        }
        for list in [&self.w_q, &self.w_k, &self.w_v] {
            if list.len() != self.num_heads || list.iter().any(|w| w.shape() != (self.d_model, d_k)) {
                return bad("per-head projections must be d_model × d_k");
            }
        }
        if self.w_o.shape() != (self.num_heads * d_k, self.d_model) {
            return bad("output projection must be (h·d_k) × d_model");
        }
        let all = self.w_q.iter().chain(&self.w_k).chain(&self.w_v).chain(std::iter::once(&self.w_o));
        if all.flat_map(|m| m.iter()).any(|v| !v.is_finite()) {
            return bad("weights must be finite");
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        for v in [FORMAT_VERSION, self.num_heads as u32, self.d_model as u32, self.d_k as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let mut put = |m: &DMatrix<f64>| {
            for r in 0..m.nrows() {
                for c in 0..m.ncols() {
                    out.extend_from_slice(&m[(r, c)].to_le_bytes());
                }
            }
        };
        for i in 0..self.num_heads {
            put(&self.w_q[i]);
            put(&self.w_k[i]);
            put(&self.w_v[i]);
        }
        put(&self.w_o);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |why: &str| RefineError::CorruptBlockFile(why.to_string());
        if bytes.len() < 20 || &bytes[..4] != MAGIC {
            return Err(corrupt("missing ICLR header"));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4-byte slice")) as usize;
        if word(0) != FORMAT_VERSION as usize {
            return Err(corrupt(&format!("unsupported version {}", word(0))));
        }
        let (h, d_model, d_k) = (word(1), word(2), word(3));
        if h == 0 || d_model == 0 || h * d_k != d_model {
            return Err(corrupt(&format!("inconsistent shape h={h} d_model={d_model} d_k={d_k}")));
        }
        let expected = 20 + 8 * (3 * h * d_model * d_k + h * d_k * d_model);
        if bytes.len() != expected {
            return Err(corrupt(&format!("expected {expected} bytes, found {}", bytes.len())));
        }
        let mut offset = 20;
        let mut take = |r: usize, c: usize| {
            let m = DMatrix::from_fn(r, c, |i, j| {
                let at = offset + 8 * (i * c + j);
                f64::from_le_bytes(bytes[at..at + 8].try_into().expect("8-byte slice"))
            });
            offset += 8 * r * c;
            m
        };
        let (mut w_q, mut w_k, mut w_v) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..h {
            w_q.push(take(d_model, d_k));
            w_k.push(take(d_model, d_k));
            w_v.push(take(d_model, d_k));
        }
        let w_o = take(h * d_k, d_model);
        let block = Self { num_heads: h, d_model, d_k, w_q, w_k, w_v, w_o, seed: None };
        block.validate().map_err(|e| corrupt(&e.to_string()))?;
        Ok(block)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp-write");
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(&self.to_bytes())?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

fn check_shape(num_heads: usize, d_model: usize) -> Result<usize> {
    if num_heads == 0 || d_model == 0 || d_model % num_heads != 0 {
        return Err(RefineError::InvalidBlock(format!("d_model {d_model} is not divisible into {num_heads} heads")));
    }
    Ok(d_model / num_heads)
}

/// Intermediate values of one forward pass, kept for backpropagation.
pub(crate) struct Forward {
    pub q: Vec<DMatrix<f64>>,
    pub k: Vec<DMatrix<f64>>,
    pub v: Vec<DMatrix<f64>>,
    pub weights: Vec<DMatrix<f64>>,
    pub concat: DMatrix<f64>,
    pub output: DMatrix<f64>,
}

pub(crate) fn forward(xs: &DMatrix<f64>, xl: &DMatrix<f64>, block: &AttentionBlock) -> Result<Forward> {
    if xs.ncols() != block.d_model || xl.ncols() != block.d_model {
        return Err(RefineError::DimensionMismatch(format!(
            "embeddings have {} and {} columns, block expects d_model = {}",
            xs.ncols(),
            xl.ncols(),
            block.d_model
        )));
    }
    let n = xs.nrows();
    let mut fw = Forward {
        q: Vec::new(),
        k: Vec::new(),
        v: Vec::new(),
        weights: Vec::new(),
        concat: DMatrix::zeros(n, block.num_heads * block.d_k),
        output: DMatrix::zeros(0, 0),
    };
    for i in 0..block.num_heads {
        let q = xs * &block.w_q[i];
        let k = xl * &block.w_k[i];
        let v = xl * &block.w_v[i];
        let (head, weights) = attention_weights(&q, &k, &v)?;
        fw.concat.columns_mut(i * block.d_k, block.d_k).copy_from(&head);
        fw.q.push(q);
        fw.k.push(k);
        fw.v.push(v);
        fw.weights.push(weights);
    }
    fw.output = xs + &fw.concat * &block.w_o;
    Ok(fw)
}

/// Queries from `xs_emb`, keys and values from `xl_emb`, heads concatenated,
/// projected by `W_O` and added to `xs_emb`.
pub fn multi_head_refine(xs_emb: &FrameEmbedding, xl_emb: &FrameEmbedding, block: &AttentionBlock) -> Result<FrameEmbedding> {
    let fw = forward(&xs_emb.vectors, &xl_emb.vectors, block)?;
    Ok(FrameEmbedding { vectors: fw.output, source: EmbeddingSource::FromXs, ..xs_emb.clone() })
}
