use nalgebra::DMatrix;

use super::attention::{forward, AttentionBlock};
use super::{EmbeddingSource, Embedder, RefineError, Result};
use crate::audio::Waveform;
use crate::sbl::{suppress, IirFilter, SuppressConfig};

/// One training instance: queries, keys/values and the target embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub query: DMatrix<f64>,
    pub context: DMatrix<f64>,
    pub target: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockGradient {
    pub w_q: Vec<DMatrix<f64>>,
    pub w_k: Vec<DMatrix<f64>>,
    pub w_v: Vec<DMatrix<f64>>,
    pub w_o: DMatrix<f64>,
}

impl BlockGradient {
    fn zeros(block: &AttentionBlock) -> Self {
        Self {
            w_q: block.w_q.iter().map(|m| m.map(|_| 0.0)).collect(),
            w_k: block.w_k.iter().map(|m| m.map(|_| 0.0)).collect(),
            w_v: block.w_v.iter().map(|m| m.map(|_| 0.0)).collect(),
            w_o: block.w_o.map(|_| 0.0),
        }
    }

    fn tensors_mut(&mut self) -> impl Iterator<Item = &mut DMatrix<f64>> {
        self.w_q.iter_mut().chain(self.w_k.iter_mut()).chain(self.w_v.iter_mut()).chain(std::iter::once(&mut self.w_o))
    }

    fn tensors(&self) -> impl Iterator<Item = &DMatrix<f64>> {
        self.w_q.iter().chain(self.w_k.iter()).chain(self.w_v.iter()).chain(std::iter::once(&self.w_o))
    }
}

fn block_tensors_mut(block: &mut AttentionBlock) -> impl Iterator<Item = &mut DMatrix<f64>> {
    block.w_q.iter_mut().chain(block.w_k.iter_mut()).chain(block.w_v.iter_mut()).chain(std::iter::once(&mut block.w_o))
}

/// Mean squared error over every element of every example.
pub fn loss(block: &AttentionBlock, examples: &[TrainingExample]) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for ex in examples {
        let fw = forward(&ex.query, &ex.context, block)?;
        sum += (&fw.output - &ex.target).norm_squared();
        count += ex.target.len();
    }
    Ok(sum / count.max(1) as f64)
}

/// Loss and its analytic gradient with respect to every block weight.
pub fn loss_and_gradient(block: &AttentionBlock, examples: &[TrainingExample]) -> Result<(f64, BlockGradient)> {
    if examples.is_empty() {
        return Err(RefineError::EmptyTrainingSet);
    }
    let total: usize = examples.iter().map(|e| e.target.len()).sum();
    let mut grad = BlockGradient::zeros(block);
    let mut sum = 0.0;
    let scale = 1.0 / (block.d_k as f64).sqrt();
    for ex in examples {
        if ex.target.shape() != (ex.query.nrows(), block.d_model) {
            return Err(RefineError::DimensionMismatch(format!(
                "target is {:?}, expected ({}, {})",
                ex.target.shape(),
                ex.query.nrows(),
                block.d_model
            )));
        }
        let fw = forward(&ex.query, &ex.context, block)?;
        let residual = &fw.output - &ex.target;
        sum += residual.norm_squared();
        let d_out = residual * (2.0 / total as f64);
        grad.w_o += fw.concat.transpose() * &d_out;
        let d_concat = &d_out * block.w_o.transpose();
        for i in 0..block.num_heads {
            let d_head = d_concat.columns(i * block.d_k, block.d_k).into_owned();
            let a = &fw.weights[i];
            let d_a = &d_head * fw.v[i].transpose();
            let d_v = a.transpose() * &d_head;
            let mut d_s = a.component_mul(&d_a);
            for r in 0..d_s.nrows() {
                let dot: f64 = d_s.row(r).sum();
                for c in 0..d_s.ncols() {
                    d_s[(r, c)] -= a[(r, c)] * dot;
                }
            }
            let d_q = &d_s * &fw.k[i] * scale;
            let d_k = d_s.transpose() * &fw.q[i] * scale;
            grad.w_q[i] += ex.query.transpose() * d_q;
            grad.w_k[i] += ex.context.transpose() * d_k;
            grad.w_v[i] += ex.context.transpose() * d_v;
        }
    }
    Ok((sum / total as f64, grad))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingSettings {
    pub steps: usize,
    pub learning_rate: f64,
}

impl Default for TrainingSettings {
    fn default() -> Self {
        Self { steps: 200, learning_rate: 1e-2 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingReport {
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// Adam updates on a private copy of `block`.
pub fn train_on_examples(
    block: &AttentionBlock,
    examples: &[TrainingExample],
    settings: TrainingSettings,
) -> Result<(AttentionBlock, TrainingReport)> {
    if examples.is_empty() {
        return Err(RefineError::EmptyTrainingSet);
    }
    block.validate()?;
    let initial_loss = loss(block, examples)?;
    let mut current = block.clone();
    let (beta1, beta2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
    let mut m = BlockGradient::zeros(block);
    let mut v = BlockGradient::zeros(block);
    for step in 1..=settings.steps {
        let (_, g) = loss_and_gradient(&current, examples)?;
        let (c1, c2) = (1.0 - beta1.powi(step as i32), 1.0 - beta2.powi(step as i32));
        for (((w, g), m), v) in block_tensors_mut(&mut current).zip(g.tensors()).zip(m.tensors_mut()).zip(v.tensors_mut()) {
            for idx in 0..w.len() {
                m[idx] = beta1 * m[idx] + (1.0 - beta1) * g[idx];
                v[idx] = beta2 * v[idx] + (1.0 - beta2) * g[idx] * g[idx];
                w[idx] -= settings.learning_rate * (m[idx] / c1) / ((v[idx] / c2).sqrt() + eps);
            }
        }
    }
    let final_loss = loss(&current, examples)?;
    Ok((current, TrainingReport { initial_loss, final_loss }))
}

/// Trains on `(noisy, clean)` pairs: queries embed the noisy signal, keys
/// and values embed its suppressed version, targets embed the clean signal.
pub fn train_refiner(
    pairs: &[(Waveform, Waveform)],
    block: &AttentionBlock,
    settings: TrainingSettings,
    embedder: &Embedder,
    suppression: &SuppressConfig,
    filter: &IirFilter,
) -> Result<(AttentionBlock, TrainingReport)> {
    if pairs.is_empty() {
        return Err(RefineError::EmptyTrainingSet);
    }
    let mut examples = Vec::with_capacity(pairs.len());
    for (noisy, clean) in pairs {
        if noisy.len() != clean.len() || noisy.sample_rate != clean.sample_rate {
            return Err(RefineError::GeometryMismatch("noisy and clean training signals differ in shape".into()));
        }
        let suppressed = suppress(noisy, suppression, filter).map_err(|e| RefineError::Suppression(e.to_string()))?;
        examples.push(TrainingExample {
            query: embedder.embed(noisy, EmbeddingSource::FromXs)?.vectors,
            context: embedder.embed(&suppressed, EmbeddingSource::FromXl)?.vectors,
            target: embedder.embed(clean, EmbeddingSource::FromXs)?.vectors,
        });
    }
    train_on_examples(block, &examples, settings)
}
