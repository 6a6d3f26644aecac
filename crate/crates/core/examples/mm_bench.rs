//! Matmul kernel throughput probe via the tape ops.

use std::time::Instant;

use companions_core::tensor::{Tape, Tensor};

fn bench(name: &str, mut f: impl FnMut(), flops_per_call: f64, reps: usize) {
    let t0 = Instant::now();
    for _ in 0..reps {
        f();
    }
    let dt = t0.elapsed().as_secs_f64();
    println!("{name}: {:.2} GFLOP/s ({:.1} us/call)", flops_per_call * reps as f64 / dt / 1e9, dt / reps as f64 * 1e6);
}

fn main() {
    let b = 8;
    let d = 256;
    let h4 = 1024;
    let x = Tensor::from_vec(b, d, (0..b * d).map(|i| (i as f64 * 0.37).sin()).collect());
    let w = Tensor::from_vec(h4, d, (0..h4 * d).map(|i| (i as f64 * 0.11).cos()).collect());
    let wt = Tensor::from_vec(d, h4, (0..h4 * d).map(|i| (i as f64 * 0.11).cos()).collect());
    let flops = 2.0 * (b * d * h4) as f64;

    bench(
        "matmul_nt [8x256]*[1024x256]^T",
        || {
            let mut tape = Tape::new();
            let xv = tape.constant(x.clone()).unwrap();
            let wv = tape.constant(w.clone()).unwrap();
            let _ = tape.matmul_nt(xv, wv).unwrap();
        },
        flops,
        2000,
    );
    bench(
        "matmul    [8x256]*[256x1024]",
        || {
            let mut tape = Tape::new();
            let xv = tape.constant(x.clone()).unwrap();
            let wv = tape.constant(wt.clone()).unwrap();
            let _ = tape.matmul(xv, wv).unwrap();
        },
        flops,
        2000,
    );
    // Staging cost: leaf clones of the parameter tensors.
    bench(
        "leaf clone of [1024x256]",
        || {
            let mut tape = Tape::new();
            let _ = tape.leaf(w.clone(), true).unwrap();
        },
        (h4 * d) as f64,
        2000,
    );
    // Transcendental throughput.
    let big = Tensor::from_vec(b, h4, (0..b * h4).map(|i| (i as f64 * 0.01).sin()).collect());
    bench(
        "sigmoid [8x1024]",
        || {
            let mut tape = Tape::new();
            let v = tape.constant(big.clone()).unwrap();
            let _ = tape.sigmoid(v).unwrap();
        },
        (b * h4) as f64,
        2000,
    );
}
