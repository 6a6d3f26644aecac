//! Rough training-throughput probe: one epoch over a synthetic batch mix
//! at production dimensions.

use std::time::Instant;

use companions_core::attn_mean::{train, TrainConfig};
use companions_core::embed::VecSeq;
use companions_core::strpack::GroupAssignment;

fn main() {
    let dim = 256;
    let n = 64;
    let mut state = 12345u64;
    let mut rnd = move || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    };
    let seqs: Vec<VecSeq> = (0..n)
        .map(|i| {
            let len = 20 + (i * 17) % 101;
            VecSeq {
                id: format!("t{i}"),
                vectors: (0..len).map(|_| (0..dim).map(|_| rnd() * 0.1).collect()).collect(),
                timestamps: (0..len as i64).collect(),
            }
        })
        .collect();
    let groups = GroupAssignment { groups: vec![(0..n).collect()], capacity: 64 };
    let cfg = TrainConfig { epochs: 1, seed: 0, ..Default::default() };
    let t0 = Instant::now();
    let (_, hist) = train(&groups, &seqs, &cfg).unwrap();
    let dt = t0.elapsed();
    let total_steps: usize = seqs.iter().map(|s| s.len()).sum();
    println!(
        "{n} trajectories ({total_steps} points), 1 epoch in {:.2}s -> {:.1}s per 200-traj epoch; losses {:?}",
        dt.as_secs_f64(),
        dt.as_secs_f64() * 200.0 / n as f64,
        hist
    );
}
