//! Symmetric InfoNCE over cosine similarities and contrastive pretraining of
//! a location encoder against paired context vectors.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::coord::GeoCoord;
use super::encoder::LocationEncoder;
use crate::error::{Error, Result};
use crate::nncore::{adam_step, dot, AdamConfig, OptimizerState, Parameterized, Tensor2};
use crate::scalar::Scalar;

const NORM_FLOOR: f64 = 1e-12;

fn normalize_rows<F: Scalar>(m: &Tensor2<F>) -> (Tensor2<F>, Vec<F>) {
    let mut out = m.clone();
    let mut norms = Vec::with_capacity(m.rows());
    for i in 0..m.rows() {
        let n = dot(m.row(i), m.row(i)).sqrt().max(F::of(NORM_FLOOR));
        out.row_mut(i).iter_mut().for_each(|v| *v /= n);
        norms.push(n);
    }
    (out, norms)
}

/// Backpropagates through `a = x/|x|` row-wise.
fn normalize_backward<F: Scalar>(unit: &Tensor2<F>, norms: &[F], d_unit: &Tensor2<F>) -> Tensor2<F> {
    let mut dx = Tensor2::zeros(unit.rows(), unit.cols());
    for i in 0..unit.rows() {
        let proj = dot(unit.row(i), d_unit.row(i));
        for k in 0..unit.cols() {
            dx[(i, k)] = (d_unit[(i, k)] - unit[(i, k)] * proj) / norms[i];
        }
    }
    dx
}

/// Symmetric cross-entropy over the logits `cos(loc_i, ctx_j)/temperature`
/// with matching rows as positives. Returns the loss and its gradients with
/// respect to both (unnormalized) inputs.
pub fn infonce_loss<F: Scalar>(
    loc_embs: &Tensor2<F>,
    ctx_embs: &Tensor2<F>,
    temperature: F,
) -> Result<(F, Tensor2<F>, Tensor2<F>)> {
    let n = loc_embs.rows();
    if n < 2 {
        return Err(Error::InvalidParameter(format!("InfoNCE needs at least 2 pairs, got {n}")));
    }
    if loc_embs.shape() != ctx_embs.shape() {
        return Err(Error::dim(
            "infonce_loss",
            format!("{}x{}", loc_embs.rows(), loc_embs.cols()),
            format!("{}x{}", ctx_embs.rows(), ctx_embs.cols()),
        ));
    }
    if !(temperature > F::zero()) {
        return Err(Error::InvalidParameter(format!("temperature must be > 0, got {temperature}")));
    }
    let (a, a_norm) = normalize_rows(loc_embs);
    let (b, b_norm) = normalize_rows(ctx_embs);
    let mut logits = Tensor2::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            logits[(i, j)] = dot(a.row(i), b.row(j)) / temperature;
        }
    }
    // row softmax (location -> context) and column softmax (context -> location)
    let mut p_row = Tensor2::zeros(n, n);
    let mut p_col = Tensor2::zeros(n, n);
    let mut loss = F::zero();
    for i in 0..n {
        let max = (0..n).map(|j| logits[(i, j)]).fold(F::neg_infinity(), F::max);
        let z: F = (0..n).map(|j| (logits[(i, j)] - max).exp()).sum();
        for j in 0..n {
            p_row[(i, j)] = (logits[(i, j)] - max).exp() / z;
        }
        loss += -(logits[(i, i)] - max - z.ln());
    }
    for j in 0..n {
        let max = (0..n).map(|i| logits[(i, j)]).fold(F::neg_infinity(), F::max);
        let z: F = (0..n).map(|i| (logits[(i, j)] - max).exp()).sum();
        for i in 0..n {
            p_col[(i, j)] = (logits[(i, j)] - max).exp() / z;
        }
        loss += -(logits[(j, j)] - max - z.ln());
    }
    let nf = F::of(n as f64);
    loss /= F::two() * nf;

    // dL/dlogits
    let scale = F::one() / (F::two() * nf);
    let mut d_logits = Tensor2::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let eye = if i == j { F::one() } else { F::zero() };
            d_logits[(i, j)] = scale * (p_row[(i, j)] + p_col[(i, j)] - eye - eye);
        }
    }
    let d = a.cols();
    let mut da = Tensor2::zeros(n, d);
    let mut db = Tensor2::zeros(n, d);
    for i in 0..n {
        for j in 0..n {
            let g = d_logits[(i, j)] / temperature;
            for k in 0..d {
                da[(i, k)] += g * b[(j, k)];
                db[(j, k)] += g * a[(i, k)];
            }
        }
    }
    Ok((
        loss,
        normalize_backward(&a, &a_norm, &da),
        normalize_backward(&b, &b_norm, &db),
    ))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub temperature: f64,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            epochs: 200,
            batch_size: 256,
            learning_rate: 1e-3,
            temperature: 0.07,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PretrainReport {
    /// Full-data InfoNCE before the first update.
    pub initial_loss: f64,
    /// Full-data InfoNCE after the last update.
    pub final_loss: f64,
    /// Mean minibatch loss per epoch.
    pub epoch_losses: Vec<f64>,
}

/// InfoNCE of the encoder on all pairs at once.
pub fn contrastive_loss<F: Scalar>(
    coords: &[GeoCoord],
    context: &Tensor2<F>,
    enc: &LocationEncoder<F>,
    temperature: f64,
) -> Result<f64> {
    let embs = enc.encode_all(coords)?;
    Ok(infonce_loss(&embs, context, F::of(temperature))?.0.f64())
}

/// Splits a shuffled index list into batches of at least two.
fn batches(order: &[usize], batch_size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(batch_size.max(2)).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() < 2) {
        out.pop();
        let n = out.len();
        let start = (n - 1) * batch_size.max(2);
        out[n - 1] = &order[start..];
    }
    out
}

/// Trains `enc` with Adam on InfoNCE against `context` (one row per
/// coordinate, same width as the embedding) and freezes it afterwards.
pub fn pretrain_contrastive<F: Scalar>(
    coords: &[GeoCoord],
    context: &Tensor2<F>,
    enc: &mut LocationEncoder<F>,
    cfg: &PretrainConfig,
) -> Result<PretrainReport> {
    if coords.len() != context.rows() {
        return Err(Error::dim("pretrain_contrastive pairs", coords.len(), context.rows()));
    }
    if context.cols() != enc.embedding_dim() {
        return Err(Error::dim("pretrain_contrastive context width", enc.embedding_dim(), context.cols()));
    }
    if coords.len() < 2 {
        return Err(Error::InvalidParameter("pretraining needs at least 2 pairs".into()));
    }
    if enc.frozen {
        return Err(Error::InvalidParameter("encoder is frozen".into()));
    }
    let temperature = F::of(cfg.temperature);
    let initial_loss = contrastive_loss(coords, context, enc, cfg.temperature)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = OptimizerState::for_params(&enc.param_slices(), AdamConfig::default());
    let mut order: Vec<usize> = (0..coords.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let d = enc.embedding_dim();

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut count = 0usize;
        for batch in batches(&order, cfg.batch_size) {
            let mut caches = Vec::with_capacity(batch.len());
            let mut embs = Tensor2::zeros(batch.len(), d);
            let mut ctx = Tensor2::zeros(batch.len(), d);
            for (r, &i) in batch.iter().enumerate() {
                let (e, cache) = enc.forward_cached(&coords[i])?;
                embs.row_mut(r).copy_from_slice(&e);
                ctx.row_mut(r).copy_from_slice(context.row(i));
                caches.push(cache);
            }
            let (loss, d_embs, _) = infonce_loss(&embs, &ctx, temperature)?;
            let mut grads = enc.zeroed();
            for (r, cache) in caches.iter().enumerate() {
                enc.backward(cache, d_embs.row(r), &mut grads);
            }
            let g = grads.param_slices();
            adam_step(&mut enc.param_slices_mut(), &g, &mut state, cfg.learning_rate)?;
            total += loss.f64();
            count += 1;
        }
        epoch_losses.push(total / count.max(1) as f64);
    }
    let final_loss = contrastive_loss(coords, context, enc, cfg.temperature)?;
    enc.freeze();
    Ok(PretrainReport {
        initial_loss,
        final_loss,
        epoch_losses,
    })
}

/// Fraction of rows whose most cosine-similar context row is their own pair.
pub fn top1_retrieval<F: Scalar>(loc_embs: &Tensor2<F>, ctx_embs: &Tensor2<F>) -> f64 {
    let (a, _) = normalize_rows(loc_embs);
    let (b, _) = normalize_rows(ctx_embs);
    let n = a.rows();
    let hits = (0..n)
        .filter(|&i| {
            let mut best = 0;
            let mut best_sim = F::neg_infinity();
            for j in 0..n {
                let s = dot(a.row(i), b.row(j));
                if s > best_sim {
                    best_sim = s;
                    best = j;
                }
            }
            best == i
        })
        .count();
    hits as f64 / n.max(1) as f64
}
