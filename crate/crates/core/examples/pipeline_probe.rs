//! End-to-end probe on the synthetic corpora: trains the model and its
//! ablations, then reports best-epsilon ARI and weighted entropy numbers.
//!
//! Usage: pipeline_probe [default|clones] [epochs] [seed...]

use std::time::Instant;

use companions_core::attn_mean::{encode_all, train, TrainConfig};
use companions_core::cluster::{
    adjusted_rand_index, assign_gate_labels, dbscan, labels_as_partition, Metric,
};
use companions_core::embed::{embed_trajectory, train_skipgram, PosEncoder, SkipGramConfig};
use companions_core::geo::{build_grid, tokenize};
use companions_core::strpack::{str_pack, summarize};
use companions_core::synth::{generate, SynthConfig};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let corpus_kind = args.first().map(String::as_str).unwrap_or("default");
    let epochs: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let lambda: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let seeds: Vec<u64> = if args.len() > 3 {
        args[3..].iter().map(|s| s.parse().unwrap()).collect()
    } else {
        vec![1]
    };

    let synth_cfg = match corpus_kind {
        "clones" => SynthConfig::time_shifted_clones(1234),
        _ => SynthConfig::desk_default(1234),
    };
    let out = generate(&synth_cfg);
    eprintln!("corpus: {} trajectories", out.trajectories.len());

    let grid = build_grid(&out.trajectories, 5.0).unwrap();
    eprintln!("grid: {}x{} = {} cells", grid.n_cols, grid.n_rows, grid.n_cells());
    let tokens: Vec<_> = out.trajectories.iter().map(|tr| tokenize(tr, &grid).unwrap()).collect();

    let t0 = Instant::now();
    let sg = SkipGramConfig { dim: 256, epochs: 3, seed: 7, ..Default::default() };
    let table = train_skipgram(&tokens, grid.n_cells(), &sg).unwrap();
    eprintln!("skip-gram in {:.1}s", t0.elapsed().as_secs_f64());
    let pe = PosEncoder::fit(&tokens, 256);

    let points: Vec<_> = out
        .trajectories
        .iter()
        .enumerate()
        .map(|(i, tr)| summarize(tr, i))
        .collect();
    let groups = str_pack(&points, 64, true);
    eprintln!("groups: {:?}", groups.groups.iter().map(Vec::len).collect::<Vec<_>>());

    let truth: Vec<usize> = {
        let mut ids: Vec<&String> =
            out.trajectories.iter().map(|tr| &out.truth.group_of[&tr.id]).collect();
        let mut map = std::collections::BTreeMap::new();
        let mut next = 0usize;
        ids.iter_mut()
            .map(|g| {
                *map.entry(g.clone()).or_insert_with(|| {
                    let v = next;
                    next += 1;
                    v
                })
            })
            .collect()
    };
    let gate_labels = assign_gate_labels(&out.trajectories, &out.gates);

    for &seed in &seeds {
        for (label, pe_on, sim_on) in
            [("attn-mean", true, true), ("lstm-ae", true, false), ("attn-mean-nope", false, true)]
        {
            if corpus_kind == "clones" && label == "lstm-ae" {
                continue;
            }
            if corpus_kind != "clones" && label == "attn-mean-nope" {
                continue;
            }
            let vec_seqs: Vec<_> = tokens
                .iter()
                .map(|t| embed_trajectory(t, &table, pe_on.then_some(&pe)).unwrap())
                .collect();
            let cfg = TrainConfig {
                epochs,
                seed,
                similarity_path: sim_on,
                positional_encoding: pe_on,
                ..Default::default()
            };
            let t0 = Instant::now();
            let (params, hist) = train(&groups, &vec_seqs, &cfg).unwrap();
            let train_s = t0.elapsed().as_secs_f64();
            let encs = encode_all(&vec_seqs, &params).unwrap();
            let vectors: Vec<Vec<f64>> = encs.iter().map(|e| e.vector.clone()).collect();

            let mut best_ari = f64::NEG_INFINITY;
            let mut best_eps = 0.0;
            let mut best_wae = f64::INFINITY;
            let mut best_wae_eps = 0.0;
            for i in 0..=2000 {
                let eps = i as f64 * 1e-4;
                let labels = dbscan(&vectors, eps, 2, Metric::Cosine);
                let part = labels_as_partition(&labels);
                let ari = adjusted_rand_index(&truth, &part);
                if ari > best_ari {
                    best_ari = ari;
                    best_eps = eps;
                }
                let kept = companions_core::cluster::kept_clusters(&labels);
                let coverage: usize = kept.iter().map(Vec::len).sum();
                if coverage * 2 >= vectors.len() {
                    if let Some(w) =
                        companions_core::cluster::weighted_avg_entropy(&labels, &gate_labels)
                            .unwrap()
                    {
                        if w < best_wae {
                            best_wae = w;
                            best_wae_eps = eps;
                        }
                    }
                }
            }
            println!(
                "{label} seed={seed}: train {train_s:.0}s, ep1 total {:.4}, ep{} total {:.4}, best ARI {best_ari:.3} @eps {best_eps:.4}, best WAE(cov>=50%) {best_wae:.4} @eps {best_wae_eps:.4}",
                hist.first().map(|s| s.total(cfg.lambda_sim)).unwrap_or(f64::NAN),
                hist.len(),
                hist.last().map(|s| s.total(cfg.lambda_sim)).unwrap_or(f64::NAN),
            );
        }
    }
}
