//! Cell-token embeddings and sinusoidal time encodings.
//!
//! Cell vectors are pre-trained with skip-gram and negative sampling over
//! trajectory token sequences (consecutive visited cells form the context)
//! and then frozen; temporal information is injected by adding a sinusoidal
//! encoding of each point's timestamp to its cell vector.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geo::{Timestamp, TokenSeq};

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("empty corpus: no token sequences to train on")]
    EmptyCorpus,
    #[error("need at least 2 cells, got {0}")]
    TooFewCells(usize),
    #[error("cell id {cell} out of range for table with {n_cells} cells")]
    CellOutOfRange { cell: usize, n_cells: usize },
    #[error("dimension mismatch: table dim {table}, encoder dim {encoder}")]
    DimMismatch { table: usize, encoder: usize },
    #[error("{path}: not an embedding table file (bad magic)")]
    BadMagic { path: String },
    #[error("{path}: unsupported embedding table version {found}")]
    BadVersion { path: String, found: u32 },
    #[error("{path}: truncated embedding table")]
    Truncated { path: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Learned cell vectors, one row per grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    n_cells: usize,
    dim: usize,
    data: Vec<f64>,
}

const TABLE_MAGIC: &[u8; 4] = b"CELB";
const TABLE_VERSION: u32 = 1;

impl EmbeddingTable {
    pub fn zeros(n_cells: usize, dim: usize) -> Self {
        EmbeddingTable { n_cells, dim, data: vec![0.0; n_cells * dim] }
    }

    pub fn from_rows(n_cells: usize, dim: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n_cells * dim);
        EmbeddingTable { n_cells, dim, data }
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, cell: usize) -> &[f64] {
        &self.data[cell * self.dim..(cell + 1) * self.dim]
    }

    fn row_mut(&mut self, cell: usize) -> &mut [f64] {
        &mut self.data[cell * self.dim..(cell + 1) * self.dim]
    }

    /// Binary layout: `magic "CELB" | version u32 | n_cells u32 | dim u32`
    /// followed by row-major little-endian `f64`.
    pub fn save(&self, path: &Path) -> Result<(), EmbedError> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(TABLE_MAGIC)?;
        w.write_all(&TABLE_VERSION.to_le_bytes())?;
        w.write_all(&(self.n_cells as u32).to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, EmbedError> {
        let display = path.display().to_string();
        let mut r = BufReader::new(File::open(path)?);
        let truncated = || EmbedError::Truncated { path: display.clone() };
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| truncated())?;
        if &magic != TABLE_MAGIC {
            return Err(EmbedError::BadMagic { path: display });
        }
        let mut buf = [0u8; 4];
        let mut read_u32 = |r: &mut BufReader<File>| -> Result<u32, EmbedError> {
            r.read_exact(&mut buf).map_err(|_| truncated())?;
            Ok(u32::from_le_bytes(buf))
        };
        let version = read_u32(&mut r)?;
        if version != TABLE_VERSION {
            return Err(EmbedError::BadVersion { path: display, found: version });
        }
        let n_cells = read_u32(&mut r)? as usize;
        let dim = read_u32(&mut r)? as usize;
        let mut data = vec![0.0f64; n_cells * dim];
        let mut f64buf = [0u8; 8];
        for v in &mut data {
            r.read_exact(&mut f64buf).map_err(|_| truncated())?;
            *v = f64::from_le_bytes(f64buf);
        }
        Ok(EmbeddingTable { n_cells, dim, data })
    }

    /// Human-readable export: `cell_id,v0,...`.
    pub fn export_csv(&self, path: &Path) -> Result<(), EmbedError> {
        let mut w = BufWriter::new(File::create(path)?);
        for cell in 0..self.n_cells {
            write!(w, "{cell}")?;
            for v in self.row(cell) {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Skip-gram training knobs. The window/negative-sample defaults are
/// conventional; nothing in the pipeline is sensitive to their exact
/// values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkipGramConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        SkipGramConfig { dim: 256, window: 5, negatives: 5, epochs: 5, lr: 0.025, seed: 0 }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Negative-sampling loss of one (center, context, negatives) triple:
/// `-log s(c.x) - sum_k log s(-c.n_k)`.
pub fn sgns_loss(center: &[f64], context: &[f64], negatives: &[&[f64]]) -> f64 {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut loss = -sigmoid(dot(center, context)).max(1e-300).ln();
    for neg in negatives {
        loss -= sigmoid(-dot(center, neg)).max(1e-300).ln();
    }
    loss
}

/// Analytic gradients of [`sgns_loss`] w.r.t. the center, the context and
/// each negative vector.
pub fn sgns_grads(
    center: &[f64],
    context: &[f64],
    negatives: &[&[f64]],
) -> (Vec<f64>, Vec<f64>, Vec<Vec<f64>>) {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut g_center = vec![0.0; center.len()];
    // d/dz of -log s(z) is s(z) - 1; for a negative with label 0 it is s(z).
    let g_pos = sigmoid(dot(center, context)) - 1.0;
    let g_context: Vec<f64> = center.iter().map(|&c| g_pos * c).collect();
    for (g, &x) in g_center.iter_mut().zip(context) {
        *g += g_pos * x;
    }
    let mut g_negs = Vec::with_capacity(negatives.len());
    for neg in negatives {
        let g_neg = sigmoid(dot(center, neg));
        g_negs.push(center.iter().map(|&c| g_neg * c).collect());
        for (g, &x) in g_center.iter_mut().zip(*neg) {
            *g += g_neg * x;
        }
    }
    (g_center, g_context, g_negs)
}

/// Skip-gram with negative sampling over token sequences; returns the
/// trained table and the per-epoch mean pair loss.
///
/// Negatives are drawn from the unigram cell distribution raised to 0.75.
/// Everything is driven by one seeded generator, so equal inputs and seed
/// reproduce the table exactly.
pub fn train_skipgram_with_history(
    token_seqs: &[TokenSeq],
    n_cells: usize,
    cfg: &SkipGramConfig,
) -> Result<(EmbeddingTable, Vec<f64>), EmbedError> {
    if token_seqs.iter().all(|s| s.tokens.is_empty()) {
        return Err(EmbedError::EmptyCorpus);
    }
    if n_cells < 2 {
        return Err(EmbedError::TooFewCells(n_cells));
    }
    assert!(cfg.window >= 1 && cfg.negatives >= 1, "window and negatives must be >= 1");
    for seq in token_seqs {
        for &(cell, _) in &seq.tokens {
            if cell >= n_cells {
                return Err(EmbedError::CellOutOfRange { cell, n_cells });
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init_bound = 0.5 / cfg.dim as f64;
    let mut table = EmbeddingTable::from_rows(
        n_cells,
        cfg.dim,
        (0..n_cells * cfg.dim).map(|_| rng.random_range(-init_bound..init_bound)).collect(),
    );
    let mut context_table = EmbeddingTable::zeros(n_cells, cfg.dim);

    // Cumulative unigram^0.75 distribution for negative sampling.
    let mut counts = vec![0u64; n_cells];
    for seq in token_seqs {
        for &(cell, _) in &seq.tokens {
            counts[cell] += 1;
        }
    }
    let mut cumulative = Vec::with_capacity(n_cells);
    let mut acc = 0.0;
    for &c in &counts {
        acc += (c as f64).powf(0.75);
        cumulative.push(acc);
    }
    let total = acc;
    let draw_negative = |rng: &mut ChaCha8Rng| -> usize {
        let r = rng.random_range(0.0..total);
        cumulative.partition_point(|&c| c <= r).min(n_cells - 1)
    };

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut g_center = vec![0.0; cfg.dim];
    for _epoch in 0..cfg.epochs {
        let mut loss_sum = 0.0;
        let mut pairs = 0u64;
        for seq in token_seqs {
            for (i, &(center, _)) in seq.tokens.iter().enumerate() {
                let lo = i.saturating_sub(cfg.window);
                let hi = (i + cfg.window + 1).min(seq.tokens.len());
                for j in lo..hi {
                    if j == i {
                        continue;
                    }
                    let context = seq.tokens[j].0;
                    let mut negs = Vec::with_capacity(cfg.negatives);
                    for _ in 0..cfg.negatives {
                        let n = draw_negative(&mut rng);
                        if n != context {
                            negs.push(n);
                        }
                    }
                    // One SGD step on the triple, mirroring sgns_grads.
                    g_center.iter_mut().for_each(|v| *v = 0.0);
                    let mut loss = 0.0;
                    {
                        let c = table.row(center);
                        let ctx = context_table.row(context);
                        let z: f64 = c.iter().zip(ctx).map(|(a, b)| a * b).sum();
                        loss -= sigmoid(z).max(1e-300).ln();
                        let g = sigmoid(z) - 1.0;
                        for (gc, &x) in g_center.iter_mut().zip(ctx) {
                            *gc += g * x;
                        }
                        let c_copy: Vec<f64> = c.to_vec();
                        let ctx_mut = context_table.row_mut(context);
                        for (w, &x) in ctx_mut.iter_mut().zip(&c_copy) {
                            *w -= cfg.lr * g * x;
                        }
                    }
                    for &n in &negs {
                        let c: Vec<f64> = table.row(center).to_vec();
                        let nv = context_table.row(n);
                        let z: f64 = c.iter().zip(nv).map(|(a, b)| a * b).sum();
                        loss -= sigmoid(-z).max(1e-300).ln();
                        let g = sigmoid(z);
                        for (gc, &x) in g_center.iter_mut().zip(nv) {
                            *gc += g * x;
                        }
                        let n_mut = context_table.row_mut(n);
                        for (w, &x) in n_mut.iter_mut().zip(&c) {
                            *w -= cfg.lr * g * x;
                        }
                    }
                    let c_mut = table.row_mut(center);
                    for (w, &g) in c_mut.iter_mut().zip(&g_center) {
                        *w -= cfg.lr * g;
                    }
                    loss_sum += loss;
                    pairs += 1;
                }
            }
        }
        history.push(if pairs == 0 { 0.0 } else { loss_sum / pairs as f64 });
    }
    Ok((table, history))
}

/// As [`train_skipgram_with_history`], discarding the loss history.
pub fn train_skipgram(
    token_seqs: &[TokenSeq],
    n_cells: usize,
    cfg: &SkipGramConfig,
) -> Result<EmbeddingTable, EmbedError> {
    train_skipgram_with_history(token_seqs, n_cells, cfg).map(|(t, _)| t)
}

/// Sinusoidal encoding of a timestamp: component `2p` is
/// `sin(t / 10000^(2p/d))` and component `2p+1` is the matching cosine.
pub fn positional_encoding(t: Timestamp, dim: usize) -> Vec<f64> {
    assert!(dim % 2 == 0, "positional encoding needs an even dimension");
    assert!(t >= 0, "timestamps are non-negative");
    let mut out = Vec::with_capacity(dim);
    let tf = t as f64;
    for p in 0..dim / 2 {
        let angle = tf / 10000f64.powf(2.0 * p as f64 / dim as f64);
        out.push(angle.sin());
        out.push(angle.cos());
    }
    out
}

/// Maps raw dataset timestamps onto encoding positions. The smallest
/// observed timestamp becomes position zero so corpora recorded at
/// different epochs produce the same encodings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosEncoder {
    pub dim: usize,
    pub t_min: Timestamp,
    pub t_max: Timestamp,
}

impl PosEncoder {
    pub fn fit(token_seqs: &[TokenSeq], dim: usize) -> Self {
        assert!(dim % 2 == 0, "positional encoding needs an even dimension");
        let mut t_min = Timestamp::MAX;
        let mut t_max = Timestamp::MIN;
        for seq in token_seqs {
            for &(_, t) in &seq.tokens {
                t_min = t_min.min(t);
                t_max = t_max.max(t);
            }
        }
        if t_min > t_max {
            (t_min, t_max) = (0, 0);
        }
        PosEncoder { dim, t_min, t_max }
    }

    pub fn encode(&self, t: Timestamp) -> Vec<f64> {
        positional_encoding(t - self.t_min, self.dim)
    }
}

/// A trajectory as the model consumes it: one vector per point.
#[derive(Debug, Clone, PartialEq)]
pub struct VecSeq {
    pub id: String,
    pub vectors: Vec<Vec<f64>>,
    pub timestamps: Vec<Timestamp>,
}

impl VecSeq {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

/// Cell vector plus time encoding per point; pass `None` to skip the time
/// encoding (the ablation configuration).
pub fn embed_trajectory(
    tok: &TokenSeq,
    table: &EmbeddingTable,
    pe: Option<&PosEncoder>,
) -> Result<VecSeq, EmbedError> {
    if let Some(pe) = pe {
        if pe.dim != table.dim {
            return Err(EmbedError::DimMismatch { table: table.dim, encoder: pe.dim });
        }
    }
    let mut vectors = Vec::with_capacity(tok.tokens.len());
    let mut timestamps = Vec::with_capacity(tok.tokens.len());
    for &(cell, t) in &tok.tokens {
        if cell >= table.n_cells {
            return Err(EmbedError::CellOutOfRange { cell, n_cells: table.n_cells });
        }
        let mut v = table.row(cell).to_vec();
        if let Some(pe) = pe {
            for (a, b) in v.iter_mut().zip(pe.encode(t)) {
                *a += b;
            }
        }
        vectors.push(v);
        timestamps.push(t);
    }
    Ok(VecSeq { id: tok.id.clone(), vectors, timestamps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::gradcheck::{central_diff, max_rel_error};
    use proptest::prelude::*;

    fn seq(id: &str, cells: &[usize]) -> TokenSeq {
        TokenSeq {
            id: id.to_string(),
            tokens: cells.iter().enumerate().map(|(i, &c)| (c, i as Timestamp)).collect(),
        }
    }

    #[test]
    fn pe_at_time_zero_is_alternating_zero_one() {
        let v = positional_encoding(0, 8);
        assert_eq!(v, vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn pe_first_component_is_sin_of_t() {
        let v = positional_encoding(1, 16);
        assert!((v[0] - 1f64.sin()).abs() < 1e-12);
        assert!((v[0] - 0.8414709848078965).abs() < 1e-12);
    }

    #[test]
    fn pe_injective_over_integer_positions() {
        // Pairwise-distinct encodings over the observed integer range,
        // checked via the exact bit patterns of the first component pair.
        let dim = 256;
        let mut seen = std::collections::HashSet::new();
        for t in 0..=10_000i64 {
            let v = positional_encoding(t, dim);
            assert!(seen.insert((v[0].to_bits(), v[1].to_bits())), "collision at t={t}");
        }
    }

    #[test]
    fn encoder_rebases_to_smallest_timestamp() {
        let seqs = [TokenSeq { id: "a".into(), tokens: vec![(0, 500), (1, 520)] }];
        let pe = PosEncoder::fit(&seqs, 8);
        assert_eq!((pe.t_min, pe.t_max), (500, 520));
        assert_eq!(pe.encode(500), positional_encoding(0, 8));
    }

    #[test]
    fn embedding_with_zero_table_is_pure_positional() {
        let table = EmbeddingTable::zeros(4, 8);
        let tok = seq("a", &[0, 3, 1]);
        let pe = PosEncoder::fit(std::slice::from_ref(&tok), 8);
        let out = embed_trajectory(&tok, &table, Some(&pe)).unwrap();
        for (v, &t) in out.vectors.iter().zip(&out.timestamps) {
            assert_eq!(v, &pe.encode(t));
        }
    }

    #[test]
    fn embedding_at_time_zero_adds_the_zero_one_pattern() {
        let mut table = EmbeddingTable::zeros(2, 4);
        table.row_mut(1).copy_from_slice(&[0.5, 0.5, 0.5, 0.5]);
        let tok = TokenSeq { id: "a".into(), tokens: vec![(1, 0)] };
        let pe = PosEncoder { dim: 4, t_min: 0, t_max: 0 };
        let out = embed_trajectory(&tok, &table, Some(&pe)).unwrap();
        assert_eq!(out.vectors[0], vec![0.5, 1.5, 0.5, 1.5]);
    }

    #[test]
    fn embedding_matches_scalar_sum_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dim = 6;
        let table = EmbeddingTable::from_rows(
            5,
            dim,
            (0..5 * dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
        );
        let tok = TokenSeq { id: "a".into(), tokens: vec![(2, 3), (0, 9), (4, 21)] };
        let pe = PosEncoder { dim, t_min: 3, t_max: 21 };
        let out = embed_trajectory(&tok, &table, Some(&pe)).unwrap();
        for (k, &(cell, t)) in tok.tokens.iter().enumerate() {
            let enc = positional_encoding(t - 3, dim);
            for j in 0..dim {
                let want = table.row(cell)[j] + enc[j];
                assert!((out.vectors[k][j] - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn embedding_dim_mismatch_is_an_error() {
        let table = EmbeddingTable::zeros(2, 4);
        let pe = PosEncoder { dim: 8, t_min: 0, t_max: 0 };
        let tok = seq("a", &[0]);
        assert!(matches!(
            embed_trajectory(&tok, &table, Some(&pe)),
            Err(EmbedError::DimMismatch { .. })
        ));
    }

    #[test]
    fn embedding_is_linear_in_the_table() {
        let dim = 4;
        let table = EmbeddingTable::from_rows(2, dim, vec![0.1, 0.2, 0.3, 0.4, -1.0, 0.5, 2.0, 0.25]);
        let alpha = 3.0;
        let scaled = EmbeddingTable::from_rows(
            2,
            dim,
            table.data.iter().map(|v| v * alpha).collect(),
        );
        let tok = seq("a", &[1, 0, 1]);
        let pe = PosEncoder::fit(std::slice::from_ref(&tok), dim);
        let base = embed_trajectory(&tok, &table, Some(&pe)).unwrap();
        let big = embed_trajectory(&tok, &scaled, Some(&pe)).unwrap();
        for ((b, s), &t) in base.vectors.iter().zip(&big.vectors).zip(&base.timestamps) {
            let enc = pe.encode(t);
            for j in 0..dim {
                let want = alpha * (b[j] - enc[j]) + enc[j];
                assert!((s[j] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sgns_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let dim = 7;
        let mut mk = |_| -> Vec<f64> { (0..dim).map(|_| rng.random_range(-0.8..0.8)).collect() };
        let center = mk(0);
        let context = mk(1);
        let negs: Vec<Vec<f64>> = (0..3).map(mk).collect();
        let neg_refs: Vec<&[f64]> = negs.iter().map(|v| v.as_slice()).collect();

        let (g_c, g_ctx, g_negs) = sgns_grads(&center, &context, &neg_refs);

        let num_c = central_diff(
            &mut |v| sgns_loss(v, &context, &neg_refs),
            &center,
            1e-6,
        );
        assert!(max_rel_error(&g_c, &num_c) < 1e-4);

        let num_ctx = central_diff(&mut |v| sgns_loss(&center, v, &neg_refs), &context, 1e-6);
        assert!(max_rel_error(&g_ctx, &num_ctx) < 1e-4);

        for (k, g_n) in g_negs.iter().enumerate() {
            let num_n = central_diff(
                &mut |v| {
                    let mut swapped: Vec<&[f64]> = neg_refs.clone();
                    swapped[k] = v;
                    sgns_loss(&center, &context, &swapped)
                },
                &negs[k],
                1e-6,
            );
            assert!(max_rel_error(g_n, &num_n) < 1e-4, "negative {k}");
        }
    }

    #[test]
    fn single_repeated_token_stays_near_initialization() {
        let seqs = vec![seq("a", &[1; 30])];
        let cfg = SkipGramConfig { dim: 8, epochs: 2, ..Default::default() };
        let init_bound = 0.5 / 8.0;
        let table = train_skipgram(&seqs, 3, &cfg).unwrap();
        // Co-occurring pairs all involve the same cell; the only drift comes
        // from negative samples, which is bounded by a few lr-sized steps.
        for &v in table.row(0).iter().chain(table.row(2)) {
            assert!(v.abs() <= init_bound, "untouched rows keep their init");
        }
    }

    #[test]
    fn adjacent_cells_end_up_more_similar_than_strangers() {
        // Cells 0 and 1 always co-occur; cell 2 never appears with them.
        let mut seqs = Vec::new();
        for k in 0..30 {
            seqs.push(seq(&format!("p{k}"), &[0, 1, 0, 1, 0, 1]));
            seqs.push(seq(&format!("q{k}"), &[2, 3, 2, 3, 2, 3]));
        }
        let cfg = SkipGramConfig { dim: 16, window: 2, epochs: 8, seed: 42, ..Default::default() };
        let table = train_skipgram(&seqs, 4, &cfg).unwrap();
        let cos = |a: &[f64], b: &[f64]| {
            1.0 - crate::tensor::cosine_distance(a, b).unwrap()
        };
        let near = cos(table.row(0), table.row(1));
        let far = cos(table.row(0), table.row(2));
        assert!(near > far, "cos(0,1)={near} should exceed cos(0,2)={far}");
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let cfg = SkipGramConfig::default();
        assert!(matches!(train_skipgram(&[], 4, &cfg), Err(EmbedError::EmptyCorpus)));
    }

    #[test]
    fn loss_is_nonincreasing_within_tolerance() {
        let mut seqs = Vec::new();
        for k in 0..20 {
            let shift = k % 3;
            let cells: Vec<usize> = (0..12).map(|i| (i + shift) % 6).collect();
            seqs.push(seq(&format!("t{k}"), &cells));
        }
        let cfg = SkipGramConfig { dim: 12, epochs: 6, seed: 7, ..Default::default() };
        let (_, history) = train_skipgram_with_history(&seqs, 6, &cfg).unwrap();
        for pair in history.windows(2) {
            assert!(
                pair[1] <= pair[0] * 1.05,
                "epoch loss rose more than 5%: {} -> {}",
                pair[0],
                pair[1]
            );
        }
        assert!(history.last().unwrap() < history.first().unwrap());
    }

    #[test]
    fn training_is_deterministic_under_a_seed() {
        let seqs = vec![seq("a", &[0, 1, 2, 1, 0]), seq("b", &[2, 3, 2, 3])];
        let cfg = SkipGramConfig { dim: 8, epochs: 3, seed: 123, ..Default::default() };
        let a = train_skipgram(&seqs, 4, &cfg).unwrap();
        let b = train_skipgram(&seqs, 4, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn table_binary_round_trip_and_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("table.bin");
        let table = EmbeddingTable::from_rows(3, 2, vec![0.5, -1.0, 2.25, 1e-12, 3.0, -0.0]);
        table.save(&path).unwrap();
        assert_eq!(EmbeddingTable::load(&path).unwrap(), table);
        std::fs::write(&path, b"garbage!").unwrap();
        assert!(matches!(EmbeddingTable::load(&path), Err(EmbedError::BadMagic { .. })));
    }

    proptest! {
        #[test]
        fn pe_components_stay_in_unit_range(t in 0i64..10_000_000, half in 1usize..64) {
            let v = positional_encoding(t, half * 2);
            prop_assert!(v.iter().all(|&x| (-1.0..=1.0).contains(&x)));
        }
    }
}
