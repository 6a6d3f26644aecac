//! DBSCAN over trajectory encodings, the epsilon sweep and the clustering
//! quality metrics.
//!
//! Clustering distance defaults to cosine, matching the geometry the
//! similarity loss trains. The internal validation metrics (Davies-Bouldin
//! and silhouette) follow their textbook Euclidean definitions; the sweep
//! therefore evaluates them on L2-normalized encodings. Clusters of size
//! one count as unclustered trajectories and are discarded before any
//! metric.
//!
//! Everything here is a pure function over immutable inputs; sweep rows
//! can be computed concurrently if a caller wants to.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::geo::Trajectory;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("need one gate label per point: {labels} labels for {points} points")]
    MissingGateLabel { labels: usize, points: usize },
    #[error("{path}: line {line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Per-point cluster id; `None` is noise.
pub type Labels = Vec<Option<usize>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Cosine,
    Euclidean,
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn distance(metric: Metric, a: &[f64], b: &[f64]) -> f64 {
    match metric {
        Metric::Euclidean => euclidean(a, b),
        // Zero-norm encodings are kept at maximal distance from everything
        // rather than erroring: the sweep must stay total over whatever the
        // model produced.
        Metric::Cosine => crate::tensor::cosine_distance(a, b).unwrap_or(2.0),
    }
}

/// Dense symmetric pairwise distances.
struct DistMatrix {
    n: usize,
    d: Vec<f64>,
}

impl DistMatrix {
    fn build(points: &[Vec<f64>], metric: Metric) -> Self {
        let n = points.len();
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = distance(metric, &points[i], &points[j]);
                d[i * n + j] = v;
                d[j * n + i] = v;
            }
        }
        DistMatrix { n, d }
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }
}

fn dbscan_from_matrix(dist: &DistMatrix, eps: f64, min_pts: usize) -> Labels {
    let n = dist.n;
    let neighbors = |p: usize| -> Vec<usize> {
        (0..n).filter(|&q| dist.get(p, q) <= eps).collect()
    };
    let mut labels: Labels = vec![None; n];
    let mut visited = vec![false; n];
    let mut cid = 0;
    for p in 0..n {
        if visited[p] {
            continue;
        }
        visited[p] = true;
        let seed = neighbors(p);
        if seed.len() < min_pts {
            continue; // noise for now; a later cluster may claim it as border
        }
        labels[p] = Some(cid);
        let mut enqueued = vec![false; n];
        let mut queue = seed;
        for &q in &queue {
            enqueued[q] = true;
        }
        let mut i = 0;
        while i < queue.len() {
            let q = queue[i];
            i += 1;
            if labels[q].is_none() {
                labels[q] = Some(cid);
            }
            if !visited[q] {
                visited[q] = true;
                let nq = neighbors(q);
                if nq.len() >= min_pts {
                    for r in nq {
                        if !enqueued[r] {
                            enqueued[r] = true;
                            queue.push(r);
                        }
                    }
                }
            }
        }
        cid += 1;
    }
    labels
}

/// Density-based clustering. A point is core when at least `min_pts` points
/// (itself included) lie within `eps` inclusive; clusters are the
/// density-connected components of core points plus their border points.
/// Border points reachable from several clusters go to the cluster
/// discovered first under index-order iteration, so the labeling is
/// deterministic. Cluster ids are contiguous from zero.
pub fn dbscan(points: &[Vec<f64>], eps: f64, min_pts: usize, metric: Metric) -> Labels {
    assert!(eps >= 0.0, "eps must be non-negative");
    assert!(min_pts >= 1, "min_pts must be at least 1");
    if points.is_empty() {
        return Vec::new();
    }
    dbscan_from_matrix(&DistMatrix::build(points, metric), eps, min_pts)
}

/// Clusters with at least two members, as index lists relabeled in first
/// appearance order.
pub fn kept_clusters(labels: &Labels) -> Vec<Vec<usize>> {
    let mut by_id: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        if let Some(c) = l {
            by_id.entry(*c).or_default().push(i);
        }
    }
    by_id.into_values().filter(|m| m.len() >= 2).collect()
}

fn centroid(points: &[Vec<f64>], members: &[usize]) -> Vec<f64> {
    let dim = points[members[0]].len();
    let mut c = vec![0.0; dim];
    for &m in members {
        for (s, v) in c.iter_mut().zip(&points[m]) {
            *s += v / members.len() as f64;
        }
    }
    c
}

/// Davies-Bouldin index over clusters of size >= 2, Euclidean. `None` when
/// fewer than two clusters survive the size filter.
pub fn davies_bouldin(points: &[Vec<f64>], labels: &Labels) -> Option<f64> {
    let clusters = kept_clusters(labels);
    if clusters.len() < 2 {
        return None;
    }
    let centroids: Vec<Vec<f64>> = clusters.iter().map(|m| centroid(points, m)).collect();
    let scatter: Vec<f64> = clusters
        .iter()
        .zip(&centroids)
        .map(|(members, c)| {
            members.iter().map(|&m| euclidean(&points[m], c)).sum::<f64>() / members.len() as f64
        })
        .collect();
    let k = clusters.len();
    let mut total = 0.0;
    for i in 0..k {
        let mut worst = 0.0f64;
        for j in 0..k {
            if i != j {
                let r = (scatter[i] + scatter[j]) / euclidean(&centroids[i], &centroids[j]);
                worst = worst.max(r);
            }
        }
        total += worst;
    }
    Some(total / k as f64)
}

fn silhouette_from_matrix(dist: &DistMatrix, labels: &Labels) -> Option<f64> {
    let clusters = kept_clusters(labels);
    if clusters.len() < 2 {
        return None;
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (ci, members) in clusters.iter().enumerate() {
        for &p in members {
            let a = members
                .iter()
                .filter(|&&q| q != p)
                .map(|&q| dist.get(p, q))
                .sum::<f64>()
                / (members.len() - 1) as f64;
            let b = clusters
                .iter()
                .enumerate()
                .filter(|(cj, _)| *cj != ci)
                .map(|(_, other)| {
                    other.iter().map(|&q| dist.get(p, q)).sum::<f64>() / other.len() as f64
                })
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            if denom > 0.0 {
                total += (b - a) / denom;
            }
            count += 1;
        }
    }
    Some(total / count as f64)
}

/// Mean silhouette over points in clusters of size >= 2, Euclidean. `None`
/// when fewer than two clusters survive.
pub fn silhouette(points: &[Vec<f64>], labels: &Labels) -> Option<f64> {
    silhouette_from_matrix(&DistMatrix::build(points, Metric::Euclidean), labels)
}

/// Cluster-size-weighted Shannon entropy (base 2) of gate labels over
/// clusters of size >= 2. `None` when no cluster survives.
pub fn weighted_avg_entropy(
    labels: &Labels,
    gate_labels: &[String],
) -> Result<Option<f64>, ClusterError> {
    if gate_labels.len() != labels.len() {
        return Err(ClusterError::MissingGateLabel {
            labels: gate_labels.len(),
            points: labels.len(),
        });
    }
    let clusters = kept_clusters(labels);
    if clusters.is_empty() {
        return Ok(None);
    }
    let kept_total: usize = clusters.iter().map(Vec::len).sum();
    let mut wae = 0.0;
    for members in &clusters {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for &m in members {
            *counts.entry(gate_labels[m].as_str()).or_default() += 1;
        }
        let n = members.len() as f64;
        let entropy: f64 = counts
            .values()
            .map(|&c| {
                let p = c as f64 / n;
                -p * p.log2()
            })
            .sum();
        wae += (members.len() as f64 / kept_total as f64) * entropy;
    }
    Ok(Some(wae))
}

/// A labeled destination point.
#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    pub name: String,
    pub x: f64,
    pub y: f64,
}

/// Nearest gate (Euclidean) to each trajectory's final point; ties break by
/// gate list order.
pub fn assign_gate_labels(trajectories: &[Trajectory], gates: &[Gate]) -> Vec<String> {
    assert!(!gates.is_empty(), "need at least one gate");
    trajectories
        .iter()
        .map(|tr| {
            let last = tr.last();
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (i, g) in gates.iter().enumerate() {
                let d = ((g.x - last.x).powi(2) + (g.y - last.y).powi(2)).sqrt();
                if d < best_d {
                    best_d = d;
                    best = i;
                }
            }
            gates[best].name.clone()
        })
        .collect()
}

pub fn write_gates_csv(path: &Path, gates: &[Gate]) -> Result<(), ClusterError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "gate_name,x,y")?;
    for g in gates {
        writeln!(w, "{},{},{}", g.name, g.x, g.y)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_gates_csv(path: &Path) -> Result<Vec<Gate>, ClusterError> {
    let display = path.display().to_string();
    let r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || (idx == 0 && trimmed == "gate_name,x,y") {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        let parse = |msg: String| ClusterError::Parse { path: display.clone(), line: idx + 1, msg };
        if fields.len() != 3 {
            return Err(parse(format!("expected 3 fields, got {}", fields.len())));
        }
        let x: f64 = fields[1].trim().parse().map_err(|e| parse(format!("bad x: {e}")))?;
        let y: f64 = fields[2].trim().parse().map_err(|e| parse(format!("bad y: {e}")))?;
        out.push(Gate { name: fields[0].trim().to_string(), x, y });
    }
    Ok(out)
}

/// One epsilon sweep row. `None` metrics mean "undefined at this epsilon"
/// and are exported as `NA`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub eps: f64,
    pub n_clusters: usize,
    pub n_unclustered: usize,
    pub davies_bouldin: Option<f64>,
    pub silhouette: Option<f64>,
    pub weighted_avg_entropy: Option<f64>,
}

fn l2_normalized(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    points
        .iter()
        .map(|p| {
            let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                p.iter().map(|v| v / norm).collect()
            } else {
                p.clone()
            }
        })
        .collect()
}

/// Number of grid points of an inclusive sweep from `from` to `to`.
pub fn sweep_len(from: f64, to: f64, step: f64) -> usize {
    assert!(step > 0.0, "sweep step must be positive");
    ((to - from) / step + 1e-9).floor() as usize + 1
}

/// Cluster the encodings at every epsilon on the grid and report metrics
/// per row. Pairwise distances are computed once and shared by all rows.
pub fn epsilon_sweep(
    encodings: &[Vec<f64>],
    from: f64,
    to: f64,
    step: f64,
    min_pts: usize,
    metric: Metric,
    gate_labels: &[String],
) -> Result<Vec<MetricReport>, ClusterError> {
    let rows = sweep_len(from, to, step);
    let cluster_dist = DistMatrix::build(encodings, metric);
    let normalized = l2_normalized(encodings);
    let eval_dist = DistMatrix::build(&normalized, Metric::Euclidean);
    let mut out = Vec::with_capacity(rows);
    for i in 0..rows {
        let eps = from + i as f64 * step;
        let labels = dbscan_from_matrix(&cluster_dist, eps, min_pts);
        let clusters = kept_clusters(&labels);
        let kept_total: usize = clusters.iter().map(Vec::len).sum();
        out.push(MetricReport {
            eps,
            n_clusters: clusters.len(),
            n_unclustered: encodings.len() - kept_total,
            davies_bouldin: davies_bouldin(&normalized, &labels),
            silhouette: silhouette_from_matrix(&eval_dist, &labels),
            weighted_avg_entropy: weighted_avg_entropy(&labels, gate_labels)?,
        });
    }
    Ok(out)
}

fn fmt_metric(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v}"),
        None => "NA".to_string(),
    }
}

fn fmt_eps(eps: f64) -> String {
    let s = format!("{eps:.10}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() {
        "0".to_string()
    } else {
        s.to_string()
    }
}

/// `eps,n_clusters,n_noise,dbi,silhouette,wae` with `NA` for undefined.
pub fn write_sweep_csv(path: &Path, reports: &[MetricReport]) -> Result<(), ClusterError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "eps,n_clusters,n_noise,dbi,silhouette,wae")?;
    for r in reports {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            fmt_eps(r.eps),
            r.n_clusters,
            r.n_unclustered,
            fmt_metric(r.davies_bouldin),
            fmt_metric(r.silhouette),
            fmt_metric(r.weighted_avg_entropy),
        )?;
    }
    w.flush()?;
    Ok(())
}

/// DBSCAN labels as a total partition: noise points become singleton
/// clusters so partition metrics stay well-defined.
pub fn labels_as_partition(labels: &Labels) -> Vec<usize> {
    let mut next = labels.iter().flatten().copied().max().map_or(0, |m| m + 1);
    labels
        .iter()
        .map(|l| match l {
            Some(c) => *c,
            None => {
                let id = next;
                next += 1;
                id
            }
        })
        .collect()
}

/// Adjusted Rand index between two partitions given as per-point cluster
/// ids.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "partitions must cover the same points");
    let n = a.len();
    if n < 2 {
        return 1.0;
    }
    let choose2 = |x: usize| (x * x.saturating_sub(1)) as f64 / 2.0;
    let mut joint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut count_a: BTreeMap<usize, usize> = BTreeMap::new();
    let mut count_b: BTreeMap<usize, usize> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1;
        *count_a.entry(x).or_default() += 1;
        *count_b.entry(y).or_default() += 1;
    }
    let sum_joint: f64 = joint.values().map(|&c| choose2(c)).sum();
    let sum_a: f64 = count_a.values().map(|&c| choose2(c)).sum();
    let sum_b: f64 = count_b.values().map(|&c| choose2(c)).sum();
    let expected = sum_a * sum_b / choose2(n);
    let max_index = 0.5 * (sum_a + sum_b);
    let denom = max_index - expected;
    if denom == 0.0 {
        return 1.0;
    }
    (sum_joint - expected) / denom
}
