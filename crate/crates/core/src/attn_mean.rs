//! Dual LSTM autoencoder over embedded trajectories.
//!
//! One encoder/decoder pair is used twice per batch. The reconstruction
//! path encodes every trajectory with global-attention pooling of the
//! hidden states and decodes it back against an MSE loss. The consensus
//! path averages the batch encodings, decodes the mean into an
//! intermediate trajectory, re-encodes it, and pulls every encoding toward
//! the result with a cosine-distance loss. Both paths read the same
//! parameter storage, so each optimizer step applies their summed
//! gradients at once.
//!
//! Group neighbors come from [`crate::strpack`]; batches are always drawn
//! from a single group so the consensus is formed over trajectories that
//! are already close in `(t, x, y)`.
//!
//! Training is a deterministic single-threaded job under a fixed seed.
//! Independent runs (seeds, ablations) can execute in parallel; finished
//! [`ModelParams`] are immutable and safe to share.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::embed::VecSeq;
use crate::strpack::GroupAssignment;
use crate::tensor::adam::{clip_global_norm, AdamConfig, AdamState};
use crate::tensor::checkpoint::{self, CheckpointError};
use crate::tensor::lstm::{self, LstmParams, LstmVars};
use crate::tensor::{Tape, Tensor, TensorError, Var};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("trajectory {0}: empty sequence")]
    EmptySequence(String),
    #[error("trajectory {id}: vector dim {got}, model dim {expected}")]
    DimMismatch { id: String, expected: usize, got: usize },
    #[error("bad training config: {0}")]
    BadConfig(String),
    #[error("numeric failure at epoch {epoch}, batch {batch}: {source}")]
    Numeric { epoch: usize, batch: usize, source: TensorError },
    #[error("checkpoint is missing entry {0}")]
    MissingEntry(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Shared encoder/decoder parameters plus the global attention vector.
///
/// The hidden size equals the embedding dimension so an encoding can seed
/// the decoder hidden state and hidden states can be read out as vectors
/// directly, without projection matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub encoder: LstmParams,
    pub decoder: LstmParams,
    pub attention: Tensor,
    pub dim: usize,
}

impl ModelParams {
    /// Fan-in uniform LSTM weights, `N(0, 0.1)` attention vector.
    pub fn init(dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = LstmParams::init(dim, dim, &mut rng);
        let decoder = LstmParams::init(dim, dim, &mut rng);
        let normal = Normal::new(0.0, 0.1).expect("valid sigma");
        let attention =
            Tensor::col((0..dim).map(|_| normal.sample(&mut rng)).collect());
        ModelParams { encoder, decoder, attention, dim }
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        checkpoint::save_named(
            path,
            &[
                ("encoder.w_ih", &self.encoder.w_ih),
                ("encoder.w_hh", &self.encoder.w_hh),
                ("encoder.b", &self.encoder.b),
                ("decoder.w_ih", &self.decoder.w_ih),
                ("decoder.w_hh", &self.decoder.w_hh),
                ("decoder.b", &self.decoder.b),
                ("attention", &self.attention),
            ],
        )?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let entries = checkpoint::load_named(path)?;
        let take = |name: &str| -> Result<Tensor, ModelError> {
            entries
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t.clone())
                .ok_or_else(|| ModelError::MissingEntry(name.to_string()))
        };
        let w_ih = take("encoder.w_ih")?;
        let hidden = w_ih.rows() / 4;
        let dim = w_ih.cols();
        let encoder = LstmParams { w_ih, w_hh: take("encoder.w_hh")?, b: take("encoder.b")?, input: dim, hidden };
        let decoder = LstmParams {
            w_ih: take("decoder.w_ih")?,
            w_hh: take("decoder.w_hh")?,
            b: take("decoder.b")?,
            input: dim,
            hidden,
        };
        Ok(ModelParams { encoder, decoder, attention: take("attention")?, dim })
    }
}

/// Fixed-length trajectory representation from the attention pooling.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoding {
    pub id: String,
    pub vector: Vec<f64>,
}

/// Training knobs. `positional_encoding` is consumed upstream when the
/// vector sequences are built; it lives here so one config describes a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub capacity: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub lambda_sim: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub grad_clip: f64,
    pub seed: u64,
    pub similarity_path: bool,
    pub positional_encoding: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            capacity: 64,
            batch_size: 8,
            epochs: 20,
            lambda_sim: 1.0,
            lr: 0.001,
            weight_decay: 1e-5,
            grad_clip: 5.0,
            seed: 0,
            similarity_path: true,
            positional_encoding: true,
        }
    }
}

/// Per-epoch mean batch losses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub l_rec: f64,
    pub l_sim: f64,
}

impl EpochStats {
    pub fn total(&self, lambda_sim: f64) -> f64 {
        self.l_rec + lambda_sim * self.l_sim
    }
}

struct PackedBatch {
    ids: Vec<String>,
    lens: Vec<usize>,
    max_len: usize,
    dim: usize,
    /// One `[B x d]` tensor per step; padded rows are zero.
    steps: Vec<Tensor>,
    /// `mask[t][i]`: step `t` is a real sample of trajectory `i`.
    mask: Vec<Vec<bool>>,
}

fn pack_batch(seqs: &[&VecSeq], dim: usize) -> Result<PackedBatch, ModelError> {
    if seqs.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let b = seqs.len();
    let mut lens = Vec::with_capacity(b);
    for s in seqs {
        if s.is_empty() {
            return Err(ModelError::EmptySequence(s.id.clone()));
        }
        for v in &s.vectors {
            if v.len() != dim {
                return Err(ModelError::DimMismatch { id: s.id.clone(), expected: dim, got: v.len() });
            }
        }
        lens.push(s.len());
    }
    let max_len = *lens.iter().max().unwrap();
    let mut steps = Vec::with_capacity(max_len);
    let mut mask = Vec::with_capacity(max_len);
    for t in 0..max_len {
        let mut data = vec![0.0; b * dim];
        let mut m = vec![false; b];
        for (i, s) in seqs.iter().enumerate() {
            if t < s.len() {
                data[i * dim..(i + 1) * dim].copy_from_slice(&s.vectors[t]);
                m[i] = true;
            }
        }
        steps.push(Tensor::from_vec(b, dim, data));
        mask.push(m);
    }
    Ok(PackedBatch {
        ids: seqs.iter().map(|s| s.id.clone()).collect(),
        lens,
        max_len,
        dim,
        steps,
        mask,
    })
}

/// Decoder staging exploits the autoregressive identity: from step 2 on,
/// the input equals the previous hidden state, so the pre-activation is a
/// single product with `W_ih + W_hh`. Step 1 sees a zero input and uses
/// `W_hh` alone.
#[derive(Clone, Copy)]
struct DecoderVars {
    w_hh_t: Var,
    w_sum_t: Var,
    b: Var,
}

fn stage_decoder(tape: &mut Tape, params: &LstmParams, needs_grad: bool) -> Result<DecoderVars, ModelError> {
    let mut sum = params.w_ih.clone();
    for (s, &h) in sum.data_mut().iter_mut().zip(params.w_hh.data()) {
        *s += h;
    }
    Ok(DecoderVars {
        w_hh_t: tape.leaf(params.w_hh.transposed(), needs_grad)?,
        w_sum_t: tape.leaf(sum.transposed(), needs_grad)?,
        b: tape.leaf(params.b.clone(), needs_grad)?,
    })
}

/// Decoder gradients in parameter layout `(d w_ih, d w_hh, d b)`.
///
/// The fused leaf's gradient flows to both weight matrices; the step-1 leaf
/// adds to `w_hh` only.
fn decoder_grads(tape: &Tape, vars: &DecoderVars, params: &LstmParams) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let transposed_grad = |v: Var| -> Option<Vec<f64>> {
        let t = tape.value(v);
        let g = tape.grad(v)?;
        Some(Tensor::from_vec(t.rows(), t.cols(), g.to_vec()).transposed().data().to_vec())
    };
    let g_sum = transposed_grad(vars.w_sum_t);
    let g_hh1 = transposed_grad(vars.w_hh_t);
    let zeros = || vec![0.0; params.w_ih.len()];
    let d_ih = g_sum.clone().unwrap_or_else(zeros);
    let mut d_hh = g_hh1.unwrap_or_else(zeros);
    if let Some(gs) = g_sum {
        for (a, b) in d_hh.iter_mut().zip(gs) {
            *a += b;
        }
    }
    let d_b = tape.grad(vars.b).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; params.b.len()]);
    (d_ih, d_hh, d_b)
}

#[derive(Clone, Copy)]
struct ModelVars {
    enc: LstmVars,
    dec: DecoderVars,
    attention: Var,
}

fn stage_model(tape: &mut Tape, params: &ModelParams, needs_grad: bool) -> Result<ModelVars, ModelError> {
    Ok(ModelVars {
        enc: lstm::stage(tape, &params.encoder, needs_grad)?,
        dec: stage_decoder(tape, &params.decoder, needs_grad)?,
        attention: tape.leaf(params.attention.clone(), needs_grad)?,
    })
}

/// Attention-pooled encoding of a batch of step inputs.
///
/// Returns the `[B x h]` encodings and the `[B x T]` attention weights.
/// The softmax runs over valid steps only; padded steps get weight zero.
fn encode_on_tape(
    tape: &mut Tape,
    mv: &ModelVars,
    xs: &[Var],
    mask: &[Vec<bool>],
    batch: usize,
    hidden: usize,
) -> Result<(Var, Var), ModelError> {
    let mut h = tape.zeros(batch, hidden)?;
    let mut c = tape.zeros(batch, hidden)?;
    let mut hiddens = Vec::with_capacity(xs.len());
    let mut scores = Vec::with_capacity(xs.len());
    for &x in xs {
        let (nh, nc) = lstm::lstm_step(tape, &mv.enc, x, h, c, hidden)?;
        h = nh;
        c = nc;
        hiddens.push(h);
        scores.push(tape.matmul(h, mv.attention)?);
    }
    let score_mat = tape.concat_cols(&scores)?;
    // mask is stored step-major; the score matrix is trajectory-major.
    let mut attn_mask = vec![false; batch * xs.len()];
    for (t, m) in mask.iter().enumerate() {
        for (i, &ok) in m.iter().enumerate() {
            attn_mask[i * xs.len() + t] = ok;
        }
    }
    let weights = tape.masked_softmax_rows(score_mat, &attn_mask)?;
    let mut pooled: Option<Var> = None;
    for (t, &ht) in hiddens.iter().enumerate() {
        let alpha_t = tape.slice_cols(weights, t, t + 1)?;
        let term = tape.row_scale(ht, alpha_t)?;
        pooled = Some(match pooled {
            None => term,
            Some(acc) => tape.add(acc, term)?,
        });
    }
    Ok((pooled.expect("non-empty sequence"), weights))
}

/// Roll the decoder out for `len` steps from `init` as the hidden state.
///
/// The first input is a zero vector and each later input is the previous
/// output; outputs are the hidden states themselves. Because output and
/// hidden state coincide, each step needs one weight product (see
/// [`DecoderVars`]).
fn decode_on_tape(
    tape: &mut Tape,
    mv: &ModelVars,
    init: Var,
    len: usize,
    batch: usize,
    dim: usize,
) -> Result<Vec<Var>, ModelError> {
    let mut h = init;
    let mut c = tape.zeros(batch, dim)?;
    let mut outs = Vec::with_capacity(len);
    for t in 0..len {
        let w = if t == 0 { mv.dec.w_hh_t } else { mv.dec.w_sum_t };
        let hw = tape.matmul(h, w)?;
        let pre = tape.add_row(hw, mv.dec.b)?;
        let (nh, nc) = lstm::lstm_step_from_pre(tape, pre, c, dim)?;
        h = nh;
        c = nc;
        outs.push(h);
    }
    Ok(outs)
}

struct ForwardVars {
    l_rec: Var,
    l_sim: Option<Var>,
    total: Var,
    encodings: Var,
}

fn forward_on_tape(
    tape: &mut Tape,
    mv: &ModelVars,
    batch: &PackedBatch,
    lambda_sim: f64,
    similarity_path: bool,
) -> Result<ForwardVars, ModelError> {
    let b = batch.ids.len();
    let d = batch.dim;
    let xs: Vec<Var> = batch
        .steps
        .iter()
        .map(|s| tape.constant(s.clone()))
        .collect::<Result<_, _>>()?;

    let (encodings, _) = encode_on_tape(tape, mv, &xs, &batch.mask, b, d)?;
    let decoded = decode_on_tape(tape, mv, encodings, batch.max_len, b, d)?;

    // Reconstruction: sum over trajectories of their per-step-mean MSE.
    // Folding the mask and the 1/(len*d) average into per-row weights keeps
    // this one op per step.
    let mut l_rec: Option<Var> = None;
    for (t, &out) in decoded.iter().enumerate() {
        let weights: Vec<f64> = batch.mask[t]
            .iter()
            .zip(&batch.lens)
            .map(|(&ok, &len)| if ok { 1.0 / (len * d) as f64 } else { 0.0 })
            .collect();
        let term = tape.weighted_sq_err_sum(out, &batch.steps[t], &weights)?;
        l_rec = Some(match l_rec {
            None => term,
            Some(acc) => tape.add(acc, term)?,
        });
    }
    let l_rec = l_rec.expect("at least one step");

    if !similarity_path {
        return Ok(ForwardVars { l_rec, l_sim: None, total: l_rec, encodings });
    }

    // Consensus: decode the mean encoding, re-encode it, and measure the
    // mean cosine distance from every batch encoding to the result.
    let mean_enc = tape.mean_rows(encodings)?;
    let mid = decode_on_tape(tape, mv, mean_enc, batch.max_len, 1, d)?;
    let mid_mask = vec![vec![true]; mid.len()];
    let (re_encoded, _) = encode_on_tape(tape, mv, &mid, &mid_mask, 1, d)?;
    let l_sim = tape.mean_cosine_distance_rows(encodings, re_encoded)?;
    let scaled = tape.scale(l_sim, lambda_sim)?;
    let total = tape.add(l_rec, scaled)?;
    Ok(ForwardVars { l_rec, l_sim: Some(l_sim), total, encodings })
}

/// Run one batch without training: `(l_rec, l_sim, encodings)`.
///
/// `l_sim` is zero when the similarity path is disabled. With a batch of
/// one, the consensus input is that single encoding and `l_sim` measures
/// how well decode-then-encode preserves it.
pub fn forward_batch(
    seqs: &[&VecSeq],
    params: &ModelParams,
    cfg: &TrainConfig,
) -> Result<(f64, f64, Vec<Encoding>), ModelError> {
    let batch = pack_batch(seqs, params.dim)?;
    let mut tape = Tape::new();
    let mv = stage_model(&mut tape, params, false)?;
    let fwd = forward_on_tape(&mut tape, &mv, &batch, cfg.lambda_sim, cfg.similarity_path)?;
    let encodings = extract_encodings(&tape, fwd.encodings, &batch);
    let l_sim = fwd.l_sim.map_or(0.0, |v| tape.value(v).item());
    Ok((tape.value(fwd.l_rec).item(), l_sim, encodings))
}

fn extract_encodings(tape: &Tape, var: Var, batch: &PackedBatch) -> Vec<Encoding> {
    let t = tape.value(var);
    batch
        .ids
        .iter()
        .enumerate()
        .map(|(i, id)| Encoding { id: id.clone(), vector: t.row_slice(i).to_vec() })
        .collect()
}

/// Attention-pooled encoding of one trajectory (inference only).
pub fn encode(seq: &VecSeq, params: &ModelParams) -> Result<Encoding, ModelError> {
    Ok(encode_with_attention(seq, params)?.0)
}

/// As [`encode`], also returning the per-step attention weights.
pub fn encode_with_attention(
    seq: &VecSeq,
    params: &ModelParams,
) -> Result<(Encoding, Vec<f64>), ModelError> {
    let batch = pack_batch(&[seq], params.dim)?;
    let mut tape = Tape::new();
    let mv = stage_model(&mut tape, params, false)?;
    let xs: Vec<Var> = batch
        .steps
        .iter()
        .map(|s| tape.constant(s.clone()))
        .collect::<Result<_, _>>()?;
    let (enc, weights) = encode_on_tape(&mut tape, &mv, &xs, &batch.mask, 1, params.dim)?;
    let encoding = Encoding { id: seq.id.clone(), vector: tape.value(enc).data().to_vec() };
    Ok((encoding, tape.value(weights).data().to_vec()))
}

/// Decoder rollout from a raw encoding vector (inference only).
pub fn decode(init: &[f64], len: usize, params: &ModelParams) -> Result<Vec<Vec<f64>>, ModelError> {
    assert!(len >= 1, "decode needs a positive length");
    if init.len() != params.dim {
        return Err(ModelError::DimMismatch {
            id: "<init>".into(),
            expected: params.dim,
            got: init.len(),
        });
    }
    let mut tape = Tape::new();
    let mv = stage_model(&mut tape, params, false)?;
    let init = tape.constant(Tensor::row(init.to_vec()))?;
    let outs = decode_on_tape(&mut tape, &mv, init, len, 1, params.dim)?;
    Ok(outs.into_iter().map(|v| tape.value(v).data().to_vec()).collect())
}

/// Encode every trajectory, in input order.
pub fn encode_all(seqs: &[VecSeq], params: &ModelParams) -> Result<Vec<Encoding>, ModelError> {
    // Chunks keep the batched matmuls busy; padding inside a chunk does not
    // change any per-trajectory result because attention masks padded steps.
    const CHUNK: usize = 16;
    let mut out = Vec::with_capacity(seqs.len());
    for chunk in seqs.chunks(CHUNK) {
        let refs: Vec<&VecSeq> = chunk.iter().collect();
        let batch = pack_batch(&refs, params.dim)?;
        let mut tape = Tape::new();
        let mv = stage_model(&mut tape, params, false)?;
        let xs: Vec<Var> = batch
            .steps
            .iter()
            .map(|s| tape.constant(s.clone()))
            .collect::<Result<_, _>>()?;
        let (enc, _) = encode_on_tape(&mut tape, &mv, &xs, &batch.mask, refs.len(), params.dim)?;
        out.extend(extract_encodings(&tape, enc, &batch));
    }
    Ok(out)
}

/// Train on the packed groups and return the parameters plus per-epoch
/// mean losses. Deterministic for a fixed seed: group order, batch
/// composition and the optimizer walk are all fixed by the inputs.
pub fn train(
    groups: &GroupAssignment,
    vec_seqs: &[VecSeq],
    cfg: &TrainConfig,
) -> Result<(ModelParams, Vec<EpochStats>), ModelError> {
    if cfg.batch_size == 0 || cfg.batch_size > cfg.capacity {
        return Err(ModelError::BadConfig(format!(
            "batch size {} must be in 1..={}",
            cfg.batch_size, cfg.capacity
        )));
    }
    if cfg.lambda_sim < 0.0 {
        return Err(ModelError::BadConfig("lambda_sim must be >= 0".into()));
    }
    let dim = vec_seqs
        .first()
        .and_then(|s| s.vectors.first())
        .map(|v| v.len())
        .ok_or(ModelError::EmptyBatch)?;

    let mut params = ModelParams::init(dim, cfg.seed);
    let mut adam = AdamState::new(
        AdamConfig::new(cfg.lr, cfg.weight_decay),
        &[
            params.encoder.w_ih.len(),
            params.encoder.w_hh.len(),
            params.encoder.b.len(),
            params.decoder.w_ih.len(),
            params.decoder.w_hh.len(),
            params.decoder.b.len(),
            params.attention.len(),
        ],
    );

    // Length-sorted members cut padding waste; batch mates remain members
    // of the same spatial group either way.
    let mut batches: Vec<Vec<usize>> = Vec::new();
    for group in &groups.groups {
        if group.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        let mut members = group.clone();
        members.sort_by_key(|&i| (vec_seqs[i].len(), i));
        for chunk in members.chunks(cfg.batch_size) {
            batches.push(chunk.to_vec());
        }
    }

    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let mut rec_sum = 0.0;
        let mut sim_sum = 0.0;
        for (batch_idx, members) in batches.iter().enumerate() {
            let seqs: Vec<&VecSeq> = members.iter().map(|&i| &vec_seqs[i]).collect();
            let wrap = |source: TensorError| ModelError::Numeric {
                epoch,
                batch: batch_idx,
                source,
            };
            let batch = pack_batch(&seqs, dim)?;
            let mut tape = Tape::new();
            let with_context = |e: ModelError| match e {
                ModelError::Tensor(t) => wrap(t),
                other => other,
            };
            let mv = stage_model(&mut tape, &params, true).map_err(with_context)?;
            let fwd = forward_on_tape(&mut tape, &mv, &batch, cfg.lambda_sim, cfg.similarity_path)
                .map_err(with_context)?;
            rec_sum += tape.value(fwd.l_rec).item();
            sim_sum += fwd.l_sim.map_or(0.0, |v| tape.value(v).item());
            tape.backward(fwd.total).map_err(wrap)?;

            let (e_ih, e_hh, e_b) =
                lstm::weight_grads(&tape, &mv.enc).expect("encoder visited by backward");
            let (d_ih, d_hh, d_b) = decoder_grads(&tape, &mv.dec, &params.decoder);
            let a_g = tape
                .grad(mv.attention)
                .expect("attention visited by backward")
                .to_vec();
            let mut grads: Vec<Vec<f64>> = vec![e_ih, e_hh, e_b, d_ih, d_hh, d_b, a_g];
            if cfg.grad_clip > 0.0 {
                clip_global_norm(&mut grads, cfg.grad_clip);
            }
            let grad_refs: Vec<&[f64]> = grads.iter().map(Vec::as_slice).collect();
            adam.step(
                &mut [
                    &mut params.encoder.w_ih,
                    &mut params.encoder.w_hh,
                    &mut params.encoder.b,
                    &mut params.decoder.w_ih,
                    &mut params.decoder.w_hh,
                    &mut params.decoder.b,
                    &mut params.attention,
                ],
                &grad_refs,
            );
        }
        let n = batches.len() as f64;
        history.push(EpochStats { epoch, l_rec: rec_sum / n, l_sim: sim_sum / n });
    }
    Ok((params, history))
}

/// `epoch,l_rec,l_sim` CSV.
pub fn write_loss_history_csv(path: &Path, history: &[EpochStats]) -> Result<(), ModelError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "epoch,l_rec,l_sim")?;
    for s in history {
        writeln!(w, "{},{},{}", s.epoch, s.l_rec, s.l_sim)?;
    }
    w.flush()?;
    Ok(())
}

/// `traj_id,v0,...,v{d-1}` CSV.
pub fn write_encodings_csv(path: &Path, encodings: &[Encoding]) -> Result<(), ModelError> {
    let mut w = BufWriter::new(File::create(path)?);
    for e in encodings {
        write!(w, "{}", e.id)?;
        for v in &e.vector {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_encodings_csv(path: &Path) -> Result<Vec<Encoding>, ModelError> {
    let r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let id = fields.next().unwrap_or_default().to_string();
        let vector: Vec<f64> = fields.map(|f| f.parse().unwrap_or(f64::NAN)).collect();
        out.push(Encoding { id, vector });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::gradcheck::{central_diff, max_rel_error};
    use crate::tensor::lstm::lstm_step_vec;

    fn vseq(id: &str, vectors: Vec<Vec<f64>>) -> VecSeq {
        let timestamps = (0..vectors.len() as i64).collect();
        VecSeq { id: id.to_string(), vectors, timestamps }
    }

    fn arb_vec(dim: usize, seed: u64) -> Vec<f64> {
        let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15) | 1;
        (0..dim)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect()
    }

    #[test]
    fn length_one_sequence_attention_is_one() {
        let dim = 5;
        let params = ModelParams::init(dim, 1);
        let seq = vseq("a", vec![arb_vec(dim, 3)]);
        let (enc, weights) = encode_with_attention(&seq, &params).unwrap();
        assert_eq!(weights, vec![1.0]);
        // H equals the single hidden state.
        let (h1, _) = lstm_step_vec(&params.encoder, &seq.vectors[0], &vec![0.0; dim], &vec![0.0; dim]).unwrap();
        for (a, b) in enc.vector.iter().zip(&h1) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn equal_hidden_states_give_uniform_attention() {
        // Constant input, zero recurrent weights and a forget gate pinned
        // shut make every step's hidden state identical.
        let dim = 4;
        let mut params = ModelParams::init(dim, 2);
        params.encoder.w_hh = Tensor::zeros(4 * dim, dim);
        let mut b = Tensor::zeros(1, 4 * dim);
        for j in dim..2 * dim {
            b.set(0, j, -40.0);
        }
        params.encoder.b = b;
        let x = arb_vec(dim, 7);
        let seq = vseq("a", vec![x.clone(), x.clone(), x.clone(), x]);
        let (enc, weights) = encode_with_attention(&seq, &params).unwrap();
        for &w in &weights {
            assert!((w - 0.25).abs() < 1e-12, "weights {weights:?}");
        }
        let (h1, _) = lstm_step_vec(&params.encoder, &seq.vectors[0], &vec![0.0; dim], &vec![0.0; dim]).unwrap();
        for (a, b) in enc.vector.iter().zip(&h1) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn attention_weights_sum_to_one_and_pool_in_hull() {
        let dim = 6;
        let params = ModelParams::init(dim, 3);
        let seq = vseq("a", (0..9).map(|k| arb_vec(dim, 100 + k)).collect());
        let (enc, weights) = encode_with_attention(&seq, &params).unwrap();
        let sum: f64 = weights.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(weights.iter().all(|&w| w > 0.0));
        // Componentwise box bound of the convex hull of the hidden states.
        let mut h = vec![0.0; dim];
        let mut c = vec![0.0; dim];
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for x in &seq.vectors {
            let (nh, nc) = lstm_step_vec(&params.encoder, x, &h, &c).unwrap();
            h = nh;
            c = nc;
            for j in 0..dim {
                lo[j] = lo[j].min(h[j]);
                hi[j] = hi[j].max(h[j]);
            }
        }
        for j in 0..dim {
            assert!(enc.vector[j] >= lo[j] - 1e-12 && enc.vector[j] <= hi[j] + 1e-12);
        }
    }

    #[test]
    fn empty_sequence_is_an_error() {
        let params = ModelParams::init(4, 1);
        let seq = vseq("a", vec![]);
        assert!(matches!(encode(&seq, &params), Err(ModelError::EmptySequence(_))));
    }

    #[test]
    fn decode_zero_params_zero_init_stays_zero() {
        let dim = 3;
        let params = ModelParams {
            encoder: LstmParams::zeros(dim, dim),
            decoder: LstmParams::zeros(dim, dim),
            attention: Tensor::col(vec![0.0; dim]),
            dim,
        };
        let outs = decode(&[0.0; 3], 4, &params).unwrap();
        assert_eq!(outs.len(), 4);
        assert!(outs.iter().all(|v| v.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn decode_length_contract_holds() {
        let params = ModelParams::init(4, 9);
        for len in [1usize, 2, 7] {
            assert_eq!(decode(&arb_vec(4, 5), len, &params).unwrap().len(), len);
        }
    }

    #[test]
    fn reconstruction_gradient_wrt_init_matches_finite_differences() {
        let dim = 4;
        let len = 3;
        let params = ModelParams::init(dim, 11);
        let target = Tensor::from_vec(len, dim, arb_vec(dim * len, 17));

        let loss_of = |init: &[f64], with_grad: bool| -> (f64, Option<Vec<f64>>) {
            let mut tape = Tape::new();
            let mv = stage_model(&mut tape, &params, false).unwrap();
            let init_var = tape.leaf(Tensor::row(init.to_vec()), with_grad).unwrap();
            let outs = decode_on_tape(&mut tape, &mv, init_var, len, 1, dim).unwrap();
            let stacked = tape.concat_cols(&outs).unwrap();
            // Rows of the target, flattened to one row to compare.
            let flat = Tensor::row(target.data().to_vec());
            let loss = tape.mse_steps(stacked, &flat, &[true]).unwrap();
            let v = tape.value(loss).item();
            if with_grad {
                tape.backward(loss).unwrap();
                (v, Some(tape.grad(init_var).unwrap().to_vec()))
            } else {
                (v, None)
            }
        };

        let init = arb_vec(dim, 23);
        let (_, analytic) = loss_of(&init, true);
        let numeric = central_diff(&mut |v| loss_of(v, false).0, &init, 1e-6);
        let err = max_rel_error(&analytic.unwrap(), &numeric);
        assert!(err < 1e-4, "rel error {err}");
    }

    fn tiny_corpus(dim: usize, n: usize) -> Vec<VecSeq> {
        (0..n)
            .map(|i| {
                let len = 3 + (i % 3);
                vseq(
                    &format!("t{i}"),
                    (0..len).map(|k| arb_vec(dim, (i * 31 + k) as u64)).collect(),
                )
            })
            .collect()
    }

    fn one_group(n: usize) -> GroupAssignment {
        GroupAssignment { groups: vec![(0..n).collect()], capacity: 64 }
    }

    #[test]
    fn batch_of_one_runs_the_consensus_on_itself() {
        let dim = 4;
        let params = ModelParams::init(dim, 5);
        let seqs = tiny_corpus(dim, 1);
        let refs: Vec<&VecSeq> = seqs.iter().collect();
        let (l_rec, l_sim, encs) = forward_batch(&refs, &params, &TrainConfig::default()).unwrap();
        assert_eq!(encs.len(), 1);
        assert!(l_rec.is_finite() && l_sim.is_finite() && l_sim >= 0.0);
    }

    #[test]
    fn lambda_zero_matches_similarity_off_exactly() {
        let seqs = tiny_corpus(5, 6);
        let groups = one_group(6);
        let on = TrainConfig {
            epochs: 3,
            lambda_sim: 0.0,
            similarity_path: true,
            seed: 7,
            ..Default::default()
        };
        let off = TrainConfig { similarity_path: false, ..on };
        let (p_on, h_on) = train(&groups, &seqs, &on).unwrap();
        let (p_off, h_off) = train(&groups, &seqs, &off).unwrap();
        assert_eq!(p_on, p_off, "zero-weight similarity path must not move parameters");
        for (a, b) in h_on.iter().zip(&h_off) {
            assert_eq!(a.l_rec, b.l_rec);
        }
        assert!(h_off.iter().all(|s| s.l_sim == 0.0));
    }

    #[test]
    fn similarity_path_contributes_gradient_to_shared_encoder() {
        let dim = 5;
        let params = ModelParams::init(dim, 13);
        let seqs = tiny_corpus(dim, 4);
        let refs: Vec<&VecSeq> = seqs.iter().collect();
        let batch = pack_batch(&refs, dim).unwrap();

        let encoder_grad = |similarity: bool| -> Vec<f64> {
            let mut tape = Tape::new();
            let mv = stage_model(&mut tape, &params, true).unwrap();
            let fwd = forward_on_tape(&mut tape, &mv, &batch, 1.0, similarity).unwrap();
            tape.backward(fwd.total).unwrap();
            tape.grad(mv.enc.w_ih_t).unwrap().to_vec()
        };
        let with = encoder_grad(true);
        let without = encoder_grad(false);
        assert_ne!(with, without, "both paths must reach the single encoder copy");
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let seqs = tiny_corpus(4, 3);
        let cfg = TrainConfig { epochs: 0, seed: 21, ..Default::default() };
        let (params, history) = train(&one_group(3), &seqs, &cfg).unwrap();
        assert!(history.is_empty());
        assert_eq!(params, ModelParams::init(4, 21));
    }

    #[test]
    fn duplicated_batch_drives_similarity_loss_down() {
        let dim = 6;
        let base = vseq("a", (0..4).map(|k| arb_vec(dim, 900 + k)).collect());
        let seqs: Vec<VecSeq> = (0..4)
            .map(|i| VecSeq { id: format!("a{i}"), ..base.clone() })
            .collect();
        let cfg = TrainConfig { epochs: 80, lr: 0.01, weight_decay: 0.0, seed: 3, ..Default::default() };
        let (params, history) = train(&one_group(4), &seqs, &cfg).unwrap();
        let refs: Vec<&VecSeq> = seqs.iter().collect();
        let (_, l_sim, _) = forward_batch(&refs, &params, &cfg).unwrap();
        assert!(
            l_sim < 0.05,
            "identical trajectories should agree with their consensus, l_sim={l_sim}, history end {:?}",
            history.last()
        );
        assert!(l_sim < history[0].l_sim);
    }

    #[test]
    fn numeric_blowup_reports_epoch_and_batch() {
        let seqs = tiny_corpus(4, 4);
        let cfg = TrainConfig { epochs: 8, lr: 1e120, grad_clip: 0.0, seed: 1, ..Default::default() };
        match train(&one_group(4), &seqs, &cfg) {
            Err(ModelError::Numeric { epoch, .. }) => assert!(epoch >= 1),
            other => panic!("expected a numeric failure, got {other:?}"),
        }
    }

    #[test]
    fn encode_all_is_deterministic_and_order_preserving() {
        let dim = 5;
        let params = ModelParams::init(dim, 2);
        let seqs = tiny_corpus(dim, 7);
        let a = encode_all(&seqs, &params).unwrap();
        let b = encode_all(&seqs, &params).unwrap();
        assert_eq!(a, b);
        let mut rev: Vec<VecSeq> = seqs.clone();
        rev.reverse();
        let c = encode_all(&rev, &params).unwrap();
        for (i, e) in c.iter().enumerate() {
            assert_eq!(e, &a[seqs.len() - 1 - i]);
        }
        // Chunked batching must not change results vs one-at-a-time.
        for (i, s) in seqs.iter().enumerate() {
            let single = encode(s, &params).unwrap();
            for (x, y) in single.vector.iter().zip(&a[i].vector) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn checkpoint_round_trip_preserves_params() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        let params = ModelParams::init(6, 77);
        params.save(&path).unwrap();
        assert_eq!(ModelParams::load(&path).unwrap(), params);
    }

    #[test]
    fn loss_history_and_encoding_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let hist = vec![
            EpochStats { epoch: 1, l_rec: 0.5, l_sim: 0.25 },
            EpochStats { epoch: 2, l_rec: 0.375, l_sim: 0.125 },
        ];
        let hpath = dir.path().join("loss.csv");
        write_loss_history_csv(&hpath, &hist).unwrap();
        let text = std::fs::read_to_string(&hpath).unwrap();
        assert!(text.starts_with("epoch,l_rec,l_sim\n1,0.5,0.25\n"));

        let encs = vec![Encoding { id: "a".into(), vector: vec![1.5, -2.25, 0.0] }];
        let epath = dir.path().join("enc.csv");
        write_encodings_csv(&epath, &encs).unwrap();
        assert_eq!(read_encodings_csv(&epath).unwrap(), encs);
    }
}
