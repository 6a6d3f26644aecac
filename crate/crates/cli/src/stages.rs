//! Pipeline stage implementations behind the subcommands.
//!
//! Every stage reads its declared inputs, writes versioned artifacts into
//! one run-directory subfolder and records a manifest there. Reruns with
//! identical config and inputs reproduce identical bytes.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use companions_core::attn_mean::{
    self, encode_all, train, write_encodings_csv, write_loss_history_csv, Encoding, ModelParams,
};
use companions_core::baselines::{
    build_snapshots, companion_report, mine_convoys, mine_swarms, write_patterns_csv,
};
use companions_core::cluster::{
    adjusted_rand_index, assign_gate_labels, dbscan, labels_as_partition, read_gates_csv,
    sweep_len, weighted_avg_entropy, write_sweep_csv, MetricReport,
};
use companions_core::embed::{
    embed_trajectory, train_skipgram_with_history, EmbeddingTable, PosEncoder, VecSeq,
};
use companions_core::geo::{
    build_grid, load_trajectories, tokenize, Grid, TokenSeq, Trajectory,
};
use companions_core::strpack::{str_pack, summarize, write_groups_csv, GroupAssignment};
use companions_core::synth::{self, read_ground_truth_csv};

use crate::config::RunConfig;
use crate::manifest::Manifest;
use crate::svg::{line_chart, Series};

/// Error classes surfaced as `error[<class>]: ...` with distinct exit
/// codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    MissingArtifact,
    Runtime,
}

pub struct StageError {
    pub class: ErrorClass,
    pub source: anyhow::Error,
}

pub type StageResult<T = ()> = std::result::Result<T, StageError>;

fn runtime<T>(r: Result<T>) -> StageResult<T> {
    r.map_err(|source| StageError { class: ErrorClass::Runtime, source })
}

fn require(path: &Path, produced_by: &str) -> StageResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(StageError {
            class: ErrorClass::MissingArtifact,
            source: anyhow::anyhow!(
                "{} is missing (run `companions {produced_by}` first)",
                path.display()
            ),
        })
    }
}

fn stage_dir(cfg: &RunConfig, name: &str) -> Result<PathBuf> {
    let dir = cfg.run_dir.join(name);
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("cannot create stage directory {}", dir.display()))?;
    Ok(dir)
}

// Artifact locations within a run directory.
fn grid_path(cfg: &RunConfig) -> PathBuf {
    cfg.run_dir.join("ingest/grid.csv")
}
fn tokens_path(cfg: &RunConfig) -> PathBuf {
    cfg.run_dir.join("ingest/tokens.csv")
}
fn table_path(cfg: &RunConfig) -> PathBuf {
    cfg.run_dir.join("embeddings/table.bin")
}
fn groups_path(cfg: &RunConfig) -> PathBuf {
    cfg.run_dir.join("groups/groups.csv")
}
fn checkpoint_path(cfg: &RunConfig) -> PathBuf {
    cfg.run_dir.join("model/checkpoint.bin")
}
fn encodings_path(cfg: &RunConfig) -> PathBuf {
    cfg.run_dir.join("encodings/encodings.csv")
}
fn sweep_path(cfg: &RunConfig) -> PathBuf {
    cfg.run_dir.join("sweep/sweep.csv")
}

pub fn synth(cfg: &RunConfig) -> StageResult {
    runtime((|| {
        let synth_cfg = cfg.synth_config()?;
        let out = synth::generate(&synth_cfg);
        let dir = &cfg.synth_out;
        synth::write_corpus(dir, &out)?;
        let consistency = synth::gate_consistency(&out);
        if consistency < 1.0 {
            log::warn!("{:.1}% of final points land nearest a foreign gate", 100.0 * (1.0 - consistency));
        }
        let mut m = Manifest::new("synth", &cfg.canonical());
        for name in ["corpus.csv", "ground_truth.csv", "gates.csv"] {
            m.output(name, &dir.join(name))?;
        }
        m.write(dir)?;
        log::info!(
            "synth: {} trajectories, {} gates -> {}",
            out.trajectories.len(),
            out.gates.len(),
            dir.display()
        );
        Ok(())
    })())
}

fn write_grid_csv(path: &Path, grid: &Grid) -> Result<()> {
    std::fs::write(
        path,
        format!(
            "origin_x,origin_y,cell_len,n_cols,n_rows\n{},{},{},{},{}\n",
            grid.origin_x, grid.origin_y, grid.cell_len, grid.n_cols, grid.n_rows
        ),
    )?;
    Ok(())
}

fn read_grid_csv(path: &Path) -> Result<Grid> {
    let text = std::fs::read_to_string(path)?;
    let line = text.lines().nth(1).context("grid.csv has no data row")?;
    let f: Vec<&str> = line.split(',').collect();
    if f.len() != 5 {
        bail!("grid.csv: expected 5 fields");
    }
    Ok(Grid {
        origin_x: f[0].parse()?,
        origin_y: f[1].parse()?,
        cell_len: f[2].parse()?,
        n_cols: f[3].parse()?,
        n_rows: f[4].parse()?,
    })
}

fn write_tokens_csv(path: &Path, tokens: &[TokenSeq]) -> Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "traj_id,t,cell_id")?;
    for seq in tokens {
        for &(cell, t) in &seq.tokens {
            writeln!(w, "{},{},{}", seq.id, t, cell)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_tokens_csv(path: &Path) -> Result<Vec<TokenSeq>> {
    use std::io::BufRead;
    let r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut seqs: Vec<TokenSeq> = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || (idx == 0 && trimmed == "traj_id,t,cell_id") {
            continue;
        }
        let f: Vec<&str> = trimmed.split(',').collect();
        if f.len() != 3 {
            bail!("{}:{}: expected 3 fields", path.display(), idx + 1);
        }
        let t: i64 = f[1].parse()?;
        let cell: usize = f[2].parse()?;
        match seqs.last_mut() {
            Some(last) if last.id == f[0] => last.tokens.push((cell, t)),
            _ => seqs.push(TokenSeq { id: f[0].to_string(), tokens: vec![(cell, t)] }),
        }
    }
    Ok(seqs)
}

pub fn ingest(cfg: &RunConfig) -> StageResult {
    require(&cfg.corpus, "synth (or point `corpus` at your data)")?;
    runtime((|| {
        let trajectories = load_trajectories(&cfg.corpus)?;
        let grid = build_grid(&trajectories, cfg.cell_len)?;
        let tokens: Vec<TokenSeq> = trajectories
            .iter()
            .map(|tr| tokenize(tr, &grid))
            .collect::<std::result::Result<_, _>>()?;
        let dir = stage_dir(cfg, "ingest")?;
        write_grid_csv(&dir.join("grid.csv"), &grid)?;
        write_tokens_csv(&dir.join("tokens.csv"), &tokens)?;
        let mut m = Manifest::new("ingest", &cfg.canonical());
        m.input("corpus.csv", &cfg.corpus)?;
        m.output("grid.csv", &dir.join("grid.csv"))?;
        m.output("tokens.csv", &dir.join("tokens.csv"))?;
        m.write(&dir)?;
        log::info!(
            "ingest: {} trajectories onto a {}x{} grid ({} cells)",
            trajectories.len(),
            grid.n_cols,
            grid.n_rows,
            grid.n_cells()
        );
        Ok(())
    })())
}

pub fn pretrain(cfg: &RunConfig) -> StageResult {
    require(&tokens_path(cfg), "ingest")?;
    require(&grid_path(cfg), "ingest")?;
    runtime((|| {
        let tokens = read_tokens_csv(&tokens_path(cfg))?;
        let grid = read_grid_csv(&grid_path(cfg))?;
        let (table, history) =
            train_skipgram_with_history(&tokens, grid.n_cells(), &cfg.skipgram_config())?;
        let dir = stage_dir(cfg, "embeddings")?;
        table.save(&dir.join("table.bin"))?;
        table.export_csv(&dir.join("table.csv"))?;
        let mut m = Manifest::new("pretrain", &cfg.canonical());
        m.input("tokens.csv", &tokens_path(cfg))?;
        m.input("grid.csv", &grid_path(cfg))?;
        m.output("table.bin", &dir.join("table.bin"))?;
        m.output("table.csv", &dir.join("table.csv"))?;
        m.write(&dir)?;
        log::info!(
            "pretrain: {} cells x {} dims; epoch losses {:?}",
            table.n_cells(),
            table.dim(),
            history
        );
        Ok(())
    })())
}

pub fn pack(cfg: &RunConfig) -> StageResult {
    require(&cfg.corpus, "synth (or point `corpus` at your data)")?;
    runtime((|| {
        let trajectories = load_trajectories(&cfg.corpus)?;
        let points: Vec<_> = trajectories
            .iter()
            .enumerate()
            .map(|(i, tr)| summarize(tr, i))
            .collect();
        let assignment = str_pack(&points, cfg.group_capacity, cfg.str_normalize);
        let ids: Vec<String> = trajectories.iter().map(|t| t.id.clone()).collect();
        let dir = stage_dir(cfg, "groups")?;
        write_groups_csv(&dir.join("groups.csv"), &assignment, &ids)?;
        let mut m = Manifest::new("pack", &cfg.canonical());
        m.input("corpus.csv", &cfg.corpus)?;
        m.output("groups.csv", &dir.join("groups.csv"))?;
        m.write(&dir)?;
        log::info!("pack: {} groups of capacity {}", assignment.n_groups(), cfg.group_capacity);
        Ok(())
    })())
}

fn read_groups_csv(path: &Path, ids: &[String]) -> Result<GroupAssignment> {
    use std::io::BufRead;
    let index_of: std::collections::BTreeMap<&str, usize> =
        ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || (idx == 0 && trimmed == "traj_id,group_id") {
            continue;
        }
        let (id, gid) = trimmed
            .split_once(',')
            .with_context(|| format!("{}:{}: expected traj_id,group_id", path.display(), idx + 1))?;
        let gid: usize = gid.parse()?;
        let &ti = index_of
            .get(id)
            .with_context(|| format!("{}: unknown trajectory id {id:?}", path.display()))?;
        if groups.len() <= gid {
            groups.resize_with(gid + 1, Vec::new);
        }
        groups[gid].push(ti);
    }
    Ok(GroupAssignment { groups, capacity: usize::MAX })
}

/// Token sequences to model inputs under the current config.
fn build_vec_seqs(cfg: &RunConfig, tokens: &[TokenSeq], table: &EmbeddingTable) -> Result<Vec<VecSeq>> {
    let pe = PosEncoder::fit(tokens, cfg.d_cell);
    let pe_ref = cfg.positional_encoding.then_some(&pe);
    Ok(tokens
        .iter()
        .map(|t| embed_trajectory(t, table, pe_ref))
        .collect::<std::result::Result<_, _>>()?)
}

pub fn train_stage(cfg: &RunConfig) -> StageResult {
    require(&tokens_path(cfg), "ingest")?;
    require(&table_path(cfg), "pretrain")?;
    require(&groups_path(cfg), "pack")?;
    runtime((|| {
        let tokens = read_tokens_csv(&tokens_path(cfg))?;
        let table = EmbeddingTable::load(&table_path(cfg))?;
        let ids: Vec<String> = tokens.iter().map(|t| t.id.clone()).collect();
        let mut groups = read_groups_csv(&groups_path(cfg), &ids)?;
        groups.capacity = cfg.group_capacity;
        let vec_seqs = build_vec_seqs(cfg, &tokens, &table)?;
        let (params, history) = train(&groups, &vec_seqs, &cfg.train_config())?;
        let dir = stage_dir(cfg, "model")?;
        params.save(&dir.join("checkpoint.bin"))?;
        write_loss_history_csv(&dir.join("loss_history.csv"), &history)?;
        let mut m = Manifest::new("train", &cfg.canonical());
        m.input("tokens.csv", &tokens_path(cfg))?;
        m.input("table.bin", &table_path(cfg))?;
        m.input("groups.csv", &groups_path(cfg))?;
        m.output("checkpoint.bin", &dir.join("checkpoint.bin"))?;
        m.output("loss_history.csv", &dir.join("loss_history.csv"))?;
        m.write(&dir)?;
        if let (Some(first), Some(last)) = (history.first(), history.last()) {
            log::info!(
                "train: epoch 1 l_rec {:.5} l_sim {:.5} -> epoch {} l_rec {:.5} l_sim {:.5}",
                first.l_rec,
                first.l_sim,
                last.epoch,
                last.l_rec,
                last.l_sim
            );
        }
        Ok(())
    })())
}

pub fn encode(cfg: &RunConfig) -> StageResult {
    require(&tokens_path(cfg), "ingest")?;
    require(&table_path(cfg), "pretrain")?;
    require(&checkpoint_path(cfg), "train")?;
    runtime((|| {
        let tokens = read_tokens_csv(&tokens_path(cfg))?;
        let table = EmbeddingTable::load(&table_path(cfg))?;
        let params = ModelParams::load(&checkpoint_path(cfg))?;
        let vec_seqs = build_vec_seqs(cfg, &tokens, &table)?;
        let encodings = encode_all(&vec_seqs, &params)?;
        let dir = stage_dir(cfg, "encodings")?;
        write_encodings_csv(&dir.join("encodings.csv"), &encodings)?;
        let mut m = Manifest::new("encode", &cfg.canonical());
        m.input("tokens.csv", &tokens_path(cfg))?;
        m.input("table.bin", &table_path(cfg))?;
        m.input("checkpoint.bin", &checkpoint_path(cfg))?;
        m.output("encodings.csv", &dir.join("encodings.csv"))?;
        m.write(&dir)?;
        log::info!("encode: {} encodings of dim {}", encodings.len(), params.dim);
        Ok(())
    })())
}

pub fn sweep(cfg: &RunConfig) -> StageResult {
    require(&encodings_path(cfg), "encode")?;
    require(&cfg.corpus, "synth")?;
    require(&cfg.gates, "synth")?;
    runtime((|| {
        let encodings = attn_mean::read_encodings_csv(&encodings_path(cfg))?;
        let trajectories = load_trajectories(&cfg.corpus)?;
        let gates = read_gates_csv(&cfg.gates)?;
        let ordered = order_trajectories_like(&encodings, &trajectories)?;
        let gate_labels = assign_gate_labels(&ordered, &gates);
        let vectors: Vec<Vec<f64>> = encodings.iter().map(|e| e.vector.clone()).collect();
        let reports = companions_core::cluster::epsilon_sweep(
            &vectors,
            cfg.eps_from,
            cfg.eps_to,
            cfg.eps_step,
            cfg.min_pts,
            cfg.cluster_metric,
            &gate_labels,
        )?;
        let dir = stage_dir(cfg, "sweep")?;
        write_sweep_csv(&dir.join("sweep.csv"), &reports)?;
        let mut m = Manifest::new("sweep", &cfg.canonical());
        m.input("encodings.csv", &encodings_path(cfg))?;
        m.input("corpus.csv", &cfg.corpus)?;
        m.input("gates.csv", &cfg.gates)?;
        m.output("sweep.csv", &dir.join("sweep.csv"))?;
        m.write(&dir)?;
        log::info!(
            "sweep: {} rows over eps {}..{} step {}",
            reports.len(),
            cfg.eps_from,
            cfg.eps_to,
            cfg.eps_step
        );
        Ok(())
    })())
}

fn order_trajectories_like(
    encodings: &[Encoding],
    trajectories: &[Trajectory],
) -> Result<Vec<Trajectory>> {
    let by_id: std::collections::BTreeMap<&str, &Trajectory> =
        trajectories.iter().map(|t| (t.id.as_str(), t)).collect();
    encodings
        .iter()
        .map(|e| {
            by_id
                .get(e.id.as_str())
                .map(|&t| t.clone())
                .with_context(|| format!("corpus has no trajectory {:?}", e.id))
        })
        .collect()
}

pub fn baseline(cfg: &RunConfig, kind: &str) -> StageResult {
    require(&cfg.corpus, "synth")?;
    runtime((|| {
        let trajectories = load_trajectories(&cfg.corpus)?;
        let all_ids: Vec<String> = trajectories.iter().map(|t| t.id.clone()).collect();
        let snapshots = build_snapshots(&trajectories, cfg.interp_step)?;
        let (k, m, e) = (cfg.pattern_k, cfg.pattern_m, cfg.pattern_e);
        let dir = stage_dir(cfg, &format!("baselines/{kind}"))?;
        let (patterns_members, n_patterns): (Vec<Vec<String>>, usize) = match kind {
            "convoy" => {
                let convoys = mine_convoys(&snapshots, k, m, e);
                write_patterns_csv(&dir.join("patterns.csv"), &convoys, &[])?;
                let members = convoys.iter().map(|c| c.objects.clone()).collect::<Vec<_>>();
                let n = convoys.len();
                (members, n)
            }
            "swarm" => {
                let swarms = mine_swarms(&snapshots, k, m, e);
                write_patterns_csv(&dir.join("patterns.csv"), &[], &swarms)?;
                let members = swarms.iter().map(|s| s.objects.clone()).collect::<Vec<_>>();
                let n = swarms.len();
                (members, n)
            }
            other => bail!("unknown baseline kind {other:?}"),
        };
        let report = companion_report(&patterns_members, &all_ids);
        std::fs::write(
            dir.join("summary.csv"),
            format!(
                "algorithm,k,m,e,n_clusters,n_single_trajectories\n{kind},{k},{m},{e},{},{}\n",
                report.n_clusters, report.n_single_trajectories
            ),
        )?;
        let mut man = Manifest::new(&format!("baseline-{kind}"), &cfg.canonical());
        man.input("corpus.csv", &cfg.corpus)?;
        man.output("patterns.csv", &dir.join("patterns.csv"))?;
        man.output("summary.csv", &dir.join("summary.csv"))?;
        man.write(&dir)?;
        log::info!(
            "baseline-{kind}: {n_patterns} patterns, {} singles",
            report.n_single_trajectories
        );
        Ok(())
    })())
}

/// Per-run data the report joins together.
struct RunView {
    label: String,
    reports: Vec<MetricReport>,
    encodings: Vec<Encoding>,
}

fn load_run_view(label: &str, run_dir: &Path) -> StageResult<RunView> {
    let sweep = run_dir.join("sweep/sweep.csv");
    let encodings = run_dir.join("encodings/encodings.csv");
    require(&sweep, "sweep")?;
    require(&encodings, "encode")?;
    runtime((|| {
        Ok(RunView {
            label: label.to_string(),
            reports: read_sweep_csv(&sweep)?,
            encodings: attn_mean::read_encodings_csv(&encodings)?,
        })
    })())
}

fn read_sweep_csv(path: &Path) -> Result<Vec<MetricReport>> {
    use std::io::BufRead;
    let r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || idx == 0 {
            continue;
        }
        let f: Vec<&str> = trimmed.split(',').collect();
        if f.len() != 6 {
            bail!("{}:{}: expected 6 fields", path.display(), idx + 1);
        }
        let opt = |s: &str| -> Result<Option<f64>> {
            if s == "NA" {
                Ok(None)
            } else {
                Ok(Some(s.parse()?))
            }
        };
        out.push(MetricReport {
            eps: f[0].parse()?,
            n_clusters: f[1].parse()?,
            n_unclustered: f[2].parse()?,
            davies_bouldin: opt(f[3])?,
            silhouette: opt(f[4])?,
            weighted_avg_entropy: opt(f[5])?,
        });
    }
    Ok(out)
}

/// Pairwise precision/recall of companionship between two partitions.
fn pair_precision_recall(truth: &[usize], predicted: &[usize]) -> (f64, f64) {
    let n = truth.len();
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for i in 0..n {
        for j in i + 1..n {
            let together_true = truth[i] == truth[j];
            let together_pred = predicted[i] == predicted[j];
            match (together_true, together_pred) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                (false, false) => {}
            }
        }
    }
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    (precision, recall)
}

/// Joint report over the primary run and any comparison runs: companionship
/// quality against ground truth per epsilon, summary rows at each run's
/// best epsilon, and the three metric curves as SVG charts.
pub fn report(cfg: &RunConfig, compare: &[(String, PathBuf)]) -> StageResult {
    require(&cfg.ground_truth, "synth")?;
    let mut views = vec![load_run_view("primary", &cfg.run_dir)?];
    for (label, dir) in compare {
        views.push(load_run_view(label, dir)?);
    }
    runtime((|| {
        let truth = read_ground_truth_csv(&cfg.ground_truth)?;
        let dir = stage_dir(cfg, "report")?;

        let mut summary = String::from(
            "run,best_ari_eps,ari,precision,recall,n_clusters,n_unclustered,best_wae_eps,wae\n",
        );
        let mut ari_curves = String::from("run,eps,ari\n");
        for view in &views {
            let truth_part: Vec<usize> = {
                let mut map = std::collections::BTreeMap::new();
                let mut next = 0usize;
                view.encodings
                    .iter()
                    .map(|e| {
                        let group = truth
                            .group_of
                            .get(&e.id)
                            .with_context(|| format!("no ground truth for {:?}", e.id))?;
                        Ok(*map.entry(group.clone()).or_insert_with(|| {
                            let v = next;
                            next += 1;
                            v
                        }))
                    })
                    .collect::<Result<_>>()?
            };
            let vectors: Vec<Vec<f64>> =
                view.encodings.iter().map(|e| e.vector.clone()).collect();
            let mut best: Option<(f64, f64, f64, f64, usize, usize)> = None;
            for row in &view.reports {
                let labels = dbscan(&vectors, row.eps, cfg.min_pts, cfg.cluster_metric);
                let part = labels_as_partition(&labels);
                let ari = adjusted_rand_index(&truth_part, &part);
                ari_curves.push_str(&format!("{},{},{ari}\n", view.label, row.eps));
                let (precision, recall) = pair_precision_recall(&truth_part, &part);
                if best.is_none() || ari > best.unwrap().1 {
                    best = Some((row.eps, ari, precision, recall, row.n_clusters, row.n_unclustered));
                }
            }
            let (eps, ari, precision, recall, n_clusters, n_unclustered) =
                best.context("empty sweep")?;
            let best_wae = best_wae_row(&view.reports, &vectors, cfg);
            let (wae_eps, wae) = best_wae
                .map(|(e, w)| (format!("{e}"), format!("{w}")))
                .unwrap_or(("NA".into(), "NA".into()));
            summary.push_str(&format!(
                "{},{eps},{ari},{precision},{recall},{n_clusters},{n_unclustered},{wae_eps},{wae}\n",
                view.label
            ));
        }
        std::fs::write(dir.join("summary.csv"), &summary)?;
        std::fs::write(dir.join("ari_curve.csv"), &ari_curves)?;

        for (file, title, pick) in [
            ("dbi.svg", "Davies-Bouldin index", 0usize),
            ("silhouette.svg", "Silhouette coefficient", 1),
            ("wae.svg", "Weighted average entropy", 2),
        ] {
            let series: Vec<Series> = views
                .iter()
                .map(|v| Series {
                    label: v.label.clone(),
                    points: v
                        .reports
                        .iter()
                        .map(|r| {
                            let y = match pick {
                                0 => r.davies_bouldin,
                                1 => r.silhouette,
                                _ => r.weighted_avg_entropy,
                            };
                            (r.eps, y)
                        })
                        .collect(),
                })
                .collect();
            std::fs::write(dir.join(file), line_chart(title, "epsilon", title, &series))?;
        }

        let mut m = Manifest::new("report", &cfg.canonical());
        m.input("ground_truth.csv", &cfg.ground_truth)?;
        for view in &views {
            m.input(&format!("{}:sweep.csv", view.label), &sweep_for(&views, view, cfg, compare))?;
        }
        for file in ["summary.csv", "ari_curve.csv", "dbi.svg", "silhouette.svg", "wae.svg"] {
            m.output(file, &dir.join(file))?;
        }
        m.write(&dir)?;
        log::info!("report: {} run(s) -> {}", views.len(), dir.display());
        Ok(())
    })())
}

fn sweep_for(
    _views: &[RunView],
    view: &RunView,
    cfg: &RunConfig,
    compare: &[(String, PathBuf)],
) -> PathBuf {
    if view.label == "primary" {
        sweep_path(cfg)
    } else {
        compare
            .iter()
            .find(|(l, _)| *l == view.label)
            .map(|(_, d)| d.join("sweep/sweep.csv"))
            .unwrap_or_else(|| sweep_path(cfg))
    }
}

/// Best (lowest) weighted entropy among sweep rows where at least half of
/// the trajectories are clustered: the operating point a practitioner
/// would report.
fn best_wae_row(
    reports: &[MetricReport],
    vectors: &[Vec<f64>],
    _cfg: &RunConfig,
) -> Option<(f64, f64)> {
    let n = vectors.len();
    reports
        .iter()
        .filter(|r| (n - r.n_unclustered) * 2 >= n)
        .filter_map(|r| r.weighted_avg_entropy.map(|w| (r.eps, w)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.total_cmp(&b.0)))
}

/// Recompute the weighted-entropy curve for arbitrary encodings (used by
/// tests and the acceptance suite rather than a subcommand).
pub fn wae_at_best_coverage(
    vectors: &[Vec<f64>],
    gate_labels: &[String],
    cfg: &RunConfig,
) -> Result<Option<(f64, f64)>> {
    let rows = sweep_len(cfg.eps_from, cfg.eps_to, cfg.eps_step);
    let n = vectors.len();
    let mut best: Option<(f64, f64)> = None;
    for i in 0..rows {
        let eps = cfg.eps_from + i as f64 * cfg.eps_step;
        let labels = dbscan(vectors, eps, cfg.min_pts, cfg.cluster_metric);
        let kept = companions_core::cluster::kept_clusters(&labels);
        let coverage: usize = kept.iter().map(Vec::len).sum();
        if coverage * 2 < n {
            continue;
        }
        if let Some(w) = weighted_avg_entropy(&labels, gate_labels)? {
            if best.is_none() || w < best.unwrap().1 {
                best = Some((eps, w));
            }
        }
    }
    Ok(best)
}
