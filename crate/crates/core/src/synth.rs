//! Planted-companion trajectory generator with known ground truth.
//!
//! Companion groups share one waypoint path that ends at a gate; members
//! get independent Gaussian positional jitter and a small start-time
//! offset. Loners walk their own paths. The clone variant plants sets of
//! groups that share a path trunk but branch to adjacent gates and travel
//! hours apart, which separates methods that use time from methods that
//! only see shape.
//!
//! All timestamps land on a 10-second lattice so the pattern-mining
//! baselines can snapshot the corpus without phase mismatches. Equal seeds
//! reproduce byte-identical output files.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::cluster::Gate;
use crate::geo::{GeoError, RawPoint, Timestamp, Trajectory};

/// Sampling lattice (seconds) shared with the interpolation default.
pub const TIME_LATTICE: Timestamp = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloneConfig {
    /// Number of shared-shape sets.
    pub sets: usize,
    /// Clone groups per set, each branching to its own gate.
    pub groups_per_set: usize,
    /// Start-time gap between clone groups of one set, seconds.
    pub gap: Timestamp,
    /// Trailing points that diverge from the shared trunk.
    pub branch_points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub n_groups: usize,
    pub group_size: (usize, usize),
    pub n_loners: usize,
    /// Walkable area in meters; gates sit on the top edge.
    pub area: (f64, f64),
    pub n_gates: usize,
    /// Walking speed range, m/s.
    pub speed: (f64, f64),
    /// Per-point positional noise, meters.
    pub jitter_sigma: f64,
    /// Member start-time offsets, seconds (snapped to the lattice).
    pub time_offset: (Timestamp, Timestamp),
    pub points_per_traj: (usize, usize),
    /// Corpus time span, seconds.
    pub time_span: Timestamp,
    /// Per-trajectory sampling period range, whole seconds.
    pub sample_dt: (Timestamp, Timestamp),
    pub clones: Option<CloneConfig>,
    pub seed: u64,
}

impl SynthConfig {
    /// Desk-scale default: ~200 trajectories in minutes of compute.
    pub fn desk_default(seed: u64) -> Self {
        SynthConfig {
            n_groups: 40,
            group_size: (2, 4),
            n_loners: 80,
            area: (400.0, 300.0),
            n_gates: 6,
            speed: (0.8, 1.8),
            jitter_sigma: 1.0,
            time_offset: (0, 30),
            points_per_traj: (20, 120),
            time_span: 4 * 3600,
            sample_dt: (2, 6),
            clones: None,
            seed,
        }
    }

    /// Shape clones hours apart: groups in one set share a path trunk and
    /// branch to adjacent gates, so shape alone cannot tell them apart.
    pub fn time_shifted_clones(seed: u64) -> Self {
        SynthConfig {
            n_groups: 0,
            group_size: (2, 4),
            n_loners: 12,
            area: (400.0, 300.0),
            n_gates: 8,
            speed: (1.0, 1.6),
            jitter_sigma: 1.0,
            time_offset: (0, 30),
            points_per_traj: (30, 70),
            time_span: 12 * 3600,
            sample_dt: (2, 4),
            clones: Some(CloneConfig { sets: 12, groups_per_set: 2, gap: 2 * 3600, branch_points: 3 }),
            seed,
        }
    }
}

/// Planted companion-group id and gate per trajectory. Loners carry unique
/// group ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth {
    pub group_of: BTreeMap<String, String>,
    pub gate_of: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub trajectories: Vec<Trajectory>,
    pub truth: GroundTruth,
    pub gates: Vec<Gate>,
}

fn lattice_snap(t: Timestamp) -> Timestamp {
    (t / TIME_LATTICE) * TIME_LATTICE
}

struct Generator<'a> {
    cfg: &'a SynthConfig,
    rng: ChaCha8Rng,
    jitter: Option<Normal<f64>>,
    gates: Vec<Gate>,
    out: SynthOutput,
    next_traj: usize,
}

impl<'a> Generator<'a> {
    fn new(cfg: &'a SynthConfig) -> Self {
        let gates: Vec<Gate> = (0..cfg.n_gates)
            .map(|i| Gate {
                name: format!("G{i}"),
                x: (i as f64 + 0.5) * cfg.area.0 / cfg.n_gates as f64,
                y: cfg.area.1,
            })
            .collect();
        let jitter = if cfg.jitter_sigma > 0.0 {
            Some(Normal::new(0.0, cfg.jitter_sigma).expect("positive sigma"))
        } else {
            None
        };
        Generator {
            cfg,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            jitter,
            gates: gates.clone(),
            out: SynthOutput { trajectories: Vec::new(), truth: GroundTruth::default(), gates },
            next_traj: 0,
        }
    }

    /// Walk backward from `end` with a wandering heading, reflecting at the
    /// area borders. Returned positions run forward in time and end at
    /// `end`.
    fn walk_to(&mut self, end: (f64, f64), n: usize, step_len: f64) -> Vec<(f64, f64)> {
        let (w, h) = self.cfg.area;
        let margin = 1.0;
        let turn = Normal::new(0.0, 0.3).expect("positive sigma");
        // Head back into the area, away from the top edge.
        let mut heading = -std::f64::consts::FRAC_PI_2 + self.rng.random_range(-0.7..0.7);
        let mut positions = vec![(0.0, 0.0); n];
        positions[n - 1] = end;
        for j in (0..n - 1).rev() {
            heading += turn.sample(&mut self.rng);
            let (px, py) = positions[j + 1];
            let mut nx = px + step_len * heading.cos();
            let mut ny = py + step_len * heading.sin();
            if nx < margin || nx > w - margin {
                heading = std::f64::consts::PI - heading;
                nx = nx.clamp(margin, w - margin);
            }
            if ny < margin || ny > h - margin {
                heading = -heading;
                ny = ny.clamp(margin, h - margin);
            }
            positions[j] = (nx, ny);
        }
        positions
    }

    fn emit_member(
        &mut self,
        base: &[(f64, f64)],
        start: Timestamp,
        dt: Timestamp,
        group_id: &str,
        gate: &str,
    ) {
        let (off_lo, off_hi) = self.cfg.time_offset;
        let offset = if off_hi > off_lo {
            lattice_snap(self.rng.random_range(off_lo..=off_hi))
        } else {
            lattice_snap(off_lo)
        };
        let id = format!("tr{:04}", self.next_traj);
        self.next_traj += 1;
        let points = base
            .iter()
            .enumerate()
            .map(|(j, &(x, y))| {
                let (jx, jy) = match &self.jitter {
                    Some(n) => (n.sample(&mut self.rng), n.sample(&mut self.rng)),
                    None => (0.0, 0.0),
                };
                RawPoint { t: start + offset + j as Timestamp * dt, x: x + jx, y: y + jy }
            })
            .collect();
        self.out.trajectories.push(Trajectory { id: id.clone(), points });
        self.out.truth.group_of.insert(id.clone(), group_id.to_string());
        self.out.truth.gate_of.insert(id, gate.to_string());
    }

    fn draw_start(&mut self, duration: Timestamp) -> Timestamp {
        let latest = (self.cfg.time_span - duration - self.cfg.time_offset.1).max(0);
        lattice_snap(self.rng.random_range(0..=latest))
    }

    fn plain_group(&mut self, group_id: &str, members: usize) {
        let gate_idx = self.rng.random_range(0..self.gates.len());
        let (g_x, g_y, g_name) = {
            let g = &self.gates[gate_idx];
            (g.x, g.y, g.name.clone())
        };
        let n = self.rng.random_range(self.cfg.points_per_traj.0..=self.cfg.points_per_traj.1);
        let dt = self.rng.random_range(self.cfg.sample_dt.0..=self.cfg.sample_dt.1);
        let speed = self.rng.random_range(self.cfg.speed.0..self.cfg.speed.1);
        let base = self.walk_to((g_x, g_y), n, speed * dt as f64);
        let duration = (n as Timestamp - 1) * dt;
        let start = self.draw_start(duration);
        for _ in 0..members {
            self.emit_member(&base, start, dt, group_id, &g_name);
        }
    }

    fn clone_set(&mut self, set_idx: usize, clones: &CloneConfig) {
        let c = clones.groups_per_set;
        let gate_base = self.rng.random_range(0..=self.gates.len() - c);
        let n = self.rng.random_range(self.cfg.points_per_traj.0..=self.cfg.points_per_traj.1);
        let branch = clones.branch_points.min(n - 2);
        let dt = self.rng.random_range(self.cfg.sample_dt.0..=self.cfg.sample_dt.1);
        let speed = self.rng.random_range(self.cfg.speed.0..self.cfg.speed.1);
        // Shared trunk ends at a merge point below the span of used gates.
        let gx_lo = self.gates[gate_base].x;
        let gx_hi = self.gates[gate_base + c - 1].x;
        let merge = (
            (gx_lo + gx_hi) / 2.0,
            self.cfg.area.1 - (branch as f64 * speed * dt as f64).max(10.0),
        );
        let trunk = self.walk_to(merge, n - branch, speed * dt as f64);
        let duration = (n as Timestamp - 1) * dt;
        let span_needed = duration + (c as Timestamp - 1) * clones.gap;
        let latest = (self.cfg.time_span - span_needed - self.cfg.time_offset.1).max(0);
        let set_start = lattice_snap(self.rng.random_range(0..=latest));
        let group_sizes: Vec<usize> = (0..c)
            .map(|_| self.rng.random_range(self.cfg.group_size.0..=self.cfg.group_size.1))
            .collect();
        for (ci, &members) in group_sizes.iter().enumerate() {
            let (g_x, g_y, g_name) = {
                let g = &self.gates[gate_base + ci];
                (g.x, g.y, g.name.clone())
            };
            let mut path = trunk.clone();
            for b in 1..=branch {
                let f = b as f64 / branch as f64;
                path.push((merge.0 + f * (g_x - merge.0), merge.1 + f * (g_y - merge.1)));
            }
            let start = set_start + ci as Timestamp * clones.gap;
            let group_id = format!("s{set_idx:02}c{ci}");
            for _ in 0..members {
                self.emit_member(&path, start, dt, &group_id, &g_name);
            }
        }
    }

    fn run(mut self) -> SynthOutput {
        let clones = self.cfg.clones;
        match clones {
            Some(c) => {
                for set in 0..c.sets {
                    self.clone_set(set, &c);
                }
            }
            None => {
                for g in 0..self.cfg.n_groups {
                    let members =
                        self.rng.random_range(self.cfg.group_size.0..=self.cfg.group_size.1);
                    self.plain_group(&format!("g{g:03}"), members);
                }
            }
        }
        for l in 0..self.cfg.n_loners {
            self.plain_group(&format!("solo{l:03}"), 1);
        }
        self.out.trajectories.sort_by(|a, b| a.id.cmp(&b.id));
        self.out
    }
}

/// Generate a corpus; deterministic for a fixed config.
pub fn generate(cfg: &SynthConfig) -> SynthOutput {
    assert!(cfg.n_gates >= 1, "need at least one gate");
    assert!(cfg.points_per_traj.0 >= 2, "trajectories need at least 2 points");
    assert!(cfg.points_per_traj.0 <= cfg.points_per_traj.1, "empty point-count range");
    assert!(cfg.group_size.0 >= 1 && cfg.group_size.0 <= cfg.group_size.1, "empty size range");
    assert!(cfg.speed.0 > 0.0 && cfg.speed.0 < cfg.speed.1, "bad speed range");
    assert!(cfg.sample_dt.0 >= 1 && cfg.sample_dt.0 <= cfg.sample_dt.1, "bad dt range");
    assert!(cfg.jitter_sigma >= 0.0, "jitter must be non-negative");
    if let Some(c) = &cfg.clones {
        assert!(c.groups_per_set >= 1 && c.groups_per_set <= cfg.n_gates, "clone gates exhausted");
    }
    Generator::new(cfg).run()
}

/// Fraction of trajectories whose nearest gate at the final point matches
/// the planted gate; 1.0 whenever jitter is small against gate spacing.
pub fn gate_consistency(out: &SynthOutput) -> f64 {
    let assigned = crate::cluster::assign_gate_labels(&out.trajectories, &out.gates);
    let matches = out
        .trajectories
        .iter()
        .zip(&assigned)
        .filter(|(tr, got)| out.truth.gate_of[&tr.id] == **got)
        .count();
    matches as f64 / out.trajectories.len().max(1) as f64
}

/// Write `corpus.csv`, `ground_truth.csv` and `gates.csv` into `dir`.
pub fn write_corpus(dir: &Path, out: &SynthOutput) -> Result<(), GeoError> {
    std::fs::create_dir_all(dir)?;
    crate::geo::write_trajectories_csv(&dir.join("corpus.csv"), &out.trajectories)?;
    let mut w = BufWriter::new(File::create(dir.join("ground_truth.csv"))?);
    writeln!(w, "traj_id,group_id,gate")?;
    for tr in &out.trajectories {
        writeln!(w, "{},{},{}", tr.id, out.truth.group_of[&tr.id], out.truth.gate_of[&tr.id])?;
    }
    w.flush()?;
    crate::cluster::write_gates_csv(&dir.join("gates.csv"), &out.gates)
        .map_err(|e| match e {
            crate::cluster::ClusterError::Io(io) => GeoError::Io(io),
            other => GeoError::Parse { path: "gates.csv".into(), line: 0, msg: other.to_string() },
        })?;
    Ok(())
}

pub fn read_ground_truth_csv(path: &Path) -> Result<GroundTruth, GeoError> {
    let display = path.display().to_string();
    let r = BufReader::new(File::open(path)?);
    let mut truth = GroundTruth::default();
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || (idx == 0 && trimmed == "traj_id,group_id,gate") {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 3 {
            return Err(GeoError::Parse {
                path: display,
                line: idx + 1,
                msg: format!("expected 3 fields, got {}", fields.len()),
            });
        }
        truth.group_of.insert(fields[0].to_string(), fields[1].to_string());
        truth.gate_of.insert(fields[0].to_string(), fields[2].to_string());
    }
    Ok(truth)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(seed: u64) -> SynthConfig {
        SynthConfig {
            n_groups: 4,
            group_size: (2, 3),
            n_loners: 5,
            points_per_traj: (20, 30),
            time_span: 1800,
            ..SynthConfig::desk_default(seed)
        }
    }

    #[test]
    fn zero_jitter_zero_offset_members_are_identical() {
        let cfg = SynthConfig { jitter_sigma: 0.0, time_offset: (0, 0), ..tiny(5) };
        let out = generate(&cfg);
        let mut by_group: BTreeMap<&str, Vec<&Trajectory>> = BTreeMap::new();
        for tr in &out.trajectories {
            by_group.entry(out.truth.group_of[&tr.id].as_str()).or_default().push(tr);
        }
        let mut checked = 0;
        for (_, members) in by_group.iter().filter(|(_, m)| m.len() > 1) {
            for m in &members[1..] {
                assert_eq!(m.points, members[0].points);
                checked += 1;
            }
        }
        assert!(checked > 0, "expected at least one multi-member group");
    }

    #[test]
    fn no_groups_means_all_singleton_ground_truth() {
        let cfg = SynthConfig { n_groups: 0, ..tiny(6) };
        let out = generate(&cfg);
        assert_eq!(out.trajectories.len(), 5);
        let groups: std::collections::BTreeSet<&String> = out.truth.group_of.values().collect();
        assert_eq!(groups.len(), 5, "every loner gets its own group id");
    }

    #[test]
    fn point_counts_stay_in_configured_range() {
        let out = generate(&SynthConfig::desk_default(3));
        assert!(!out.trajectories.is_empty());
        for tr in &out.trajectories {
            assert!(
                (20..=120).contains(&tr.len()),
                "{} has {} points",
                tr.id,
                tr.len()
            );
            for w in tr.points.windows(2) {
                assert!(w[1].t > w[0].t, "timestamps strictly increasing");
            }
            assert!(tr.first().t >= 0);
        }
    }

    #[test]
    fn generation_is_deterministic_and_seed_sensitive() {
        let a = generate(&tiny(7));
        let b = generate(&tiny(7));
        assert_eq!(a, b);
        let c = generate(&tiny(8));
        assert_ne!(a.trajectories, c.trajectories);
    }

    #[test]
    fn final_points_land_nearest_their_gate() {
        let out = generate(&SynthConfig::desk_default(11));
        assert_eq!(gate_consistency(&out), 1.0);
        let clones = generate(&SynthConfig::time_shifted_clones(11));
        assert_eq!(gate_consistency(&clones), 1.0);
    }

    #[test]
    fn clone_sets_share_trunks_and_split_gates() {
        let cfg = SynthConfig::time_shifted_clones(2);
        let clones = cfg.clones.unwrap();
        let out = generate(&cfg);
        // Group s00c0 vs s00c1: same point count, hours apart, different
        // gates, identical trunk shape up to jitter.
        let member = |gid: &str| {
            out.trajectories
                .iter()
                .find(|tr| out.truth.group_of[&tr.id] == gid)
                .unwrap_or_else(|| panic!("no member of {gid}"))
        };
        let a = member("s00c0");
        let b = member("s00c1");
        assert_eq!(a.len(), b.len());
        assert_ne!(out.truth.gate_of[&a.id], out.truth.gate_of[&b.id]);
        let dt_gap = b.first().t - a.first().t;
        assert!(
            (dt_gap - clones.gap).abs() <= 30,
            "clone groups should start about one gap apart, got {dt_gap}"
        );
        // Shared trunk: positions before the branch agree up to jitter.
        let trunk_len = a.len() - clones.branch_points;
        for j in 0..trunk_len {
            let dx = a.points[j].x - b.points[j].x;
            let dy = a.points[j].y - b.points[j].y;
            let d = (dx * dx + dy * dy).sqrt();
            assert!(d < 8.0 * cfg.jitter_sigma.max(0.1), "trunk diverges at {j}: {d}");
        }
    }

    #[test]
    fn corpus_files_are_byte_deterministic() {
        let dir1 = tempfile::tempdir().unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        let out = generate(&tiny(9));
        write_corpus(dir1.path(), &out).unwrap();
        write_corpus(dir2.path(), &generate(&tiny(9))).unwrap();
        for name in ["corpus.csv", "ground_truth.csv", "gates.csv"] {
            let a = std::fs::read(dir1.path().join(name)).unwrap();
            let b = std::fs::read(dir2.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs across identical runs");
        }
        // Ground truth round-trips.
        let truth = read_ground_truth_csv(&dir1.path().join("ground_truth.csv")).unwrap();
        assert_eq!(truth, out.truth);
    }
}
