//! Discovery of traveling companions from raw `(t, x, y)` trajectories.
//!
//! The pipeline learns a fixed-length encoding for every trajectory with a
//! dual LSTM autoencoder (global-attention pooling plus a mean consensus
//! path), then clusters the encodings with DBSCAN. Co-movement pattern
//! miners (convoys and closed swarms) and clustering-quality metrics are
//! included for comparison experiments.
//!
//! Module map:
//! - [`geo`]: trajectory data model, CSV ingestion, grid tokenization,
//!   time-uniform interpolation
//! - [`embed`]: skip-gram cell embeddings and sinusoidal time encodings
//! - [`strpack`]: Sort-Tile-Recursive packing of trajectories into
//!   fixed-capacity neighbor groups
//! - [`tensor`]: dense tensors with reverse-mode autodiff, LSTM cell, Adam
//! - [`attn_mean`]: the dual autoencoder model and its training loop
//! - [`cluster`]: DBSCAN, the epsilon sweep and evaluation metrics
//! - [`baselines`]: convoy and closed-swarm miners over snapshots
//! - [`synth`]: planted-companion corpus generator with ground truth

pub mod attn_mean;
pub mod baselines;
pub mod cluster;
pub mod embed;
pub mod geo;
pub mod strpack;
pub mod synth;
pub mod tensor;
