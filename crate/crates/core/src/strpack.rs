//! Sort-Tile-Recursive packing of trajectories into fixed-capacity
//! neighbor groups in `(t, x, y)` space.
//!
//! Each trajectory is reduced to its centroid and the centroids are tiled
//! dimension by dimension (time first, then x, then y) into groups of at
//! most `capacity` members. Only the leaf-packing step of STR is needed
//! here; no tree is built.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::geo::{GeoError, Trajectory};

/// A trajectory reduced to one packable point: the per-trajectory mean of
/// `(t, x, y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajPoint3D {
    pub traj_index: usize,
    pub t_center: f64,
    pub x_center: f64,
    pub y_center: f64,
}

/// Result of a packing run: `groups` partition the input indices and every
/// group holds at most `capacity` members. In packing order all groups are
/// full except possibly the last one.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupAssignment {
    pub groups: Vec<Vec<usize>>,
    pub capacity: usize,
}

impl GroupAssignment {
    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    /// Group id per trajectory index, for export.
    pub fn group_of(&self, n: usize) -> Vec<usize> {
        let mut out = vec![usize::MAX; n];
        for (gid, members) in self.groups.iter().enumerate() {
            for &m in members {
                out[m] = gid;
            }
        }
        out
    }
}

/// Centroid summary of a trajectory.
pub fn summarize(trajectory: &Trajectory, index: usize) -> TrajPoint3D {
    assert!(!trajectory.points.is_empty(), "cannot summarize an empty trajectory");
    let n = trajectory.points.len() as f64;
    let (mut st, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for p in &trajectory.points {
        st += p.t as f64;
        sx += p.x;
        sy += p.y;
    }
    TrajPoint3D { traj_index: index, t_center: st / n, x_center: sx / n, y_center: sy / n }
}

/// Smallest integer `s` with `s^dims >= leaves`.
fn slab_count(leaves: usize, dims: u32) -> usize {
    let mut s = (leaves as f64).powf(1.0 / dims as f64).ceil() as usize;
    s = s.max(1);
    while s > 1 && (s - 1).pow(dims) >= leaves {
        s -= 1;
    }
    while s.pow(dims) < leaves {
        s += 1;
    }
    s
}

fn pack_recursive(
    mut items: Vec<(usize, [f64; 3])>,
    dim: usize,
    capacity: usize,
    out: &mut Vec<Vec<usize>>,
) {
    let cmp_dim = |a: &(usize, [f64; 3]), b: &(usize, [f64; 3])| {
        a.1[dim].total_cmp(&b.1[dim]).then(a.0.cmp(&b.0))
    };
    items.sort_by(cmp_dim);
    if dim == 2 {
        for chunk in items.chunks(capacity) {
            out.push(chunk.iter().map(|&(i, _)| i).collect());
        }
        return;
    }
    let leaves = items.len().div_ceil(capacity);
    let dims_left = (3 - dim) as u32;
    let slabs = slab_count(leaves, dims_left);
    // Slab sizes are multiples of the capacity so every group except the
    // globally last one comes out full.
    let slab_points = leaves.div_ceil(slabs) * capacity;
    let mut rest = items;
    while !rest.is_empty() {
        let take = slab_points.min(rest.len());
        let tail = rest.split_off(take);
        pack_recursive(rest, dim + 1, capacity, out);
        rest = tail;
    }
}

/// Pack points into groups of at most `capacity` via 3-D STR tiling.
///
/// Sorting is per axis only, so the optional min-max normalization of each
/// axis to `[0, 1]` never changes the result; it is kept as an explicit
/// knob for the exported representative points. Ties on equal coordinates
/// break by trajectory index, which makes the assignment deterministic.
pub fn str_pack(points: &[TrajPoint3D], capacity: usize, normalize: bool) -> GroupAssignment {
    assert!(capacity >= 1, "capacity must be >= 1");
    assert!(!points.is_empty(), "str_pack needs at least one point");
    let mut coords: Vec<(usize, [f64; 3])> = points
        .iter()
        .map(|p| (p.traj_index, [p.t_center, p.x_center, p.y_center]))
        .collect();
    if normalize {
        for axis in 0..3 {
            let lo = coords.iter().map(|c| c.1[axis]).fold(f64::INFINITY, f64::min);
            let hi = coords.iter().map(|c| c.1[axis]).fold(f64::NEG_INFINITY, f64::max);
            let span = hi - lo;
            if span > 0.0 {
                for c in &mut coords {
                    c.1[axis] = (c.1[axis] - lo) / span;
                }
            }
        }
    }
    let mut groups = Vec::with_capacity(points.len().div_ceil(capacity));
    pack_recursive(coords, 0, capacity, &mut groups);
    GroupAssignment { groups, capacity }
}

/// Export a `traj_id,group_id` CSV.
pub fn write_groups_csv(
    path: &Path,
    assignment: &GroupAssignment,
    ids: &[String],
) -> Result<(), GeoError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "traj_id,group_id")?;
    for (gid, members) in assignment.groups.iter().enumerate() {
        for &m in members {
            writeln!(w, "{},{}", ids[m], gid)?;
        }
    }
    w.flush()?;
    Ok(())
}
