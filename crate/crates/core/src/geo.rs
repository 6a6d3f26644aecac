//! Trajectory data model and spatial preprocessing.
//!
//! Input trajectories are ordered `(t, x, y)` points in planar meters with
//! integer-second timestamps. This module loads and validates the CSV
//! format, builds the square-cell grid covering a dataset, snaps points to
//! cell tokens, and resamples trajectories onto a uniform time lattice.
//!
//! All types are plain values: once constructed they are never mutated and
//! are safe to share across threads.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

/// Seconds since the dataset epoch.
pub type Timestamp = i64;

#[derive(Debug, Error)]
pub enum GeoError {
    #[error("{path}: line {line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error("trajectory {id}: duplicate timestamp {t}")]
    DuplicateTimestamp { id: String, t: Timestamp },
    #[error("trajectory {id}: {msg}")]
    InvalidTrajectory { id: String, msg: String },
    #[error("no points in input")]
    EmptyInput,
    #[error("invalid cell length {0} (must be > 0 and finite)")]
    BadCellLen(f64),
    #[error("trajectory {id}: point {index} at ({x}, {y}) lies outside the grid extent")]
    OutOfGrid { id: String, index: usize, x: f64, y: f64 },
    #[error("interpolation step must be > 0, got {0}")]
    BadStep(Timestamp),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One timestamped location sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawPoint {
    pub t: Timestamp,
    pub x: f64,
    pub y: f64,
}

/// Ordered location samples of one moving object.
///
/// Invariants (enforced by [`load_trajectories`]): timestamps strictly
/// increasing, at least two points, finite coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub id: String,
    pub points: Vec<RawPoint>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first(&self) -> &RawPoint {
        &self.points[0]
    }

    pub fn last(&self) -> &RawPoint {
        &self.points[self.points.len() - 1]
    }

    /// Linear position at time `t`, or `None` outside the covered span.
    ///
    /// Exact sample timestamps return the sample itself, so snapping a
    /// trajectory to its own timestamps is lossless.
    pub fn position_at(&self, t: Timestamp) -> Option<(f64, f64)> {
        if self.points.is_empty() || t < self.first().t || t > self.last().t {
            return None;
        }
        // Index of the first point with timestamp >= t.
        let idx = self.points.partition_point(|p| p.t < t);
        let hi = &self.points[idx.min(self.points.len() - 1)];
        if hi.t == t {
            return Some((hi.x, hi.y));
        }
        let lo = &self.points[idx - 1];
        let frac = (t - lo.t) as f64 / (hi.t - lo.t) as f64;
        Some((lo.x + frac * (hi.x - lo.x), lo.y + frac * (hi.y - lo.y)))
    }
}

/// Axis-aligned square-cell grid covering a dataset's bounding box.
///
/// Cells are half-open `[low, high)` intervals on both axes so every in-grid
/// point maps to exactly one cell. The origin is the dataset's min corner
/// floored to a multiple of `cell_len`, which keeps cell ids stable when a
/// corpus is regenerated with the same extent.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub origin_x: f64,
    pub origin_y: f64,
    pub cell_len: f64,
    pub n_cols: usize,
    pub n_rows: usize,
}

impl Grid {
    pub fn n_cells(&self) -> usize {
        self.n_cols * self.n_rows
    }

    /// Column/row of a point, or `None` if it falls outside the extent.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let col = ((x - self.origin_x) / self.cell_len).floor();
        let row = ((y - self.origin_y) / self.cell_len).floor();
        if col < 0.0 || row < 0.0 {
            return None;
        }
        let (col, row) = (col as usize, row as usize);
        if col >= self.n_cols || row >= self.n_rows {
            return None;
        }
        Some((col, row))
    }

    pub fn cell_id(&self, col: usize, row: usize) -> usize {
        row * self.n_cols + col
    }

    /// Center coordinates of a cell id.
    pub fn cell_center(&self, cell_id: usize) -> (f64, f64) {
        let col = cell_id % self.n_cols;
        let row = cell_id / self.n_cols;
        (
            self.origin_x + (col as f64 + 0.5) * self.cell_len,
            self.origin_y + (row as f64 + 0.5) * self.cell_len,
        )
    }
}

/// A trajectory after grid snapping: `(cell_id, t)` per source point.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSeq {
    pub id: String,
    pub tokens: Vec<(usize, Timestamp)>,
}

impl TokenSeq {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

const CSV_HEADER: &str = "traj_id,t,x,y";

/// Load trajectories from `traj_id,t,x,y` CSV (header optional).
///
/// Rows need not be grouped by id; points are grouped and sorted by
/// timestamp here. Duplicate `(id, t)` rows and one-point trajectories are
/// rejected. Lengths outside the usual 20–120 sample range only log a
/// warning.
pub fn load_trajectories(path: &Path) -> Result<Vec<Trajectory>, GeoError> {
    let file = File::open(path)?;
    parse_trajectories(BufReader::new(file), &path.display().to_string())
}

fn parse_trajectories<R: BufRead>(reader: R, path: &str) -> Result<Vec<Trajectory>, GeoError> {
    let mut by_id: BTreeMap<String, Vec<RawPoint>> = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if idx == 0 && trimmed.trim_start_matches('\u{feff}') == CSV_HEADER {
            continue;
        }
        let lineno = idx + 1;
        let parse = |msg: String| GeoError::Parse { path: path.to_string(), line: lineno, msg };
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 4 {
            return Err(parse(format!("expected 4 fields, got {}", fields.len())));
        }
        let id = fields[0].trim();
        if id.is_empty() {
            return Err(parse("empty trajectory id".into()));
        }
        let t: Timestamp = fields[1]
            .trim()
            .parse()
            .map_err(|e| parse(format!("bad timestamp {:?}: {e}", fields[1])))?;
        if t < 0 {
            return Err(parse(format!("negative timestamp {t}")));
        }
        let x: f64 = fields[2]
            .trim()
            .parse()
            .map_err(|e| parse(format!("bad x {:?}: {e}", fields[2])))?;
        let y: f64 = fields[3]
            .trim()
            .parse()
            .map_err(|e| parse(format!("bad y {:?}: {e}", fields[3])))?;
        if !x.is_finite() || !y.is_finite() {
            return Err(parse(format!("non-finite coordinates ({x}, {y})")));
        }
        by_id.entry(id.to_string()).or_default().push(RawPoint { t, x, y });
    }

    let mut out = Vec::with_capacity(by_id.len());
    for (id, mut points) in by_id {
        points.sort_by_key(|p| p.t);
        for pair in points.windows(2) {
            if pair[0].t == pair[1].t {
                return Err(GeoError::DuplicateTimestamp { id, t: pair[0].t });
            }
        }
        if points.len() < 2 {
            return Err(GeoError::InvalidTrajectory {
                id,
                msg: format!("needs at least 2 points, got {}", points.len()),
            });
        }
        if points.len() < 20 || points.len() > 120 {
            log::warn!("trajectory {id} has {} points, outside the usual 20-120 range", points.len());
        }
        out.push(Trajectory { id, points });
    }
    Ok(out)
}

/// Write trajectories in the same CSV format accepted by [`load_trajectories`].
pub fn write_trajectories_csv(path: &Path, trajectories: &[Trajectory]) -> Result<(), GeoError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{CSV_HEADER}")?;
    for tr in trajectories {
        for p in &tr.points {
            writeln!(w, "{},{},{},{}", tr.id, p.t, p.x, p.y)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Build the square-cell grid covering every point of the input.
///
/// The origin is the min corner floored to a `cell_len` multiple and the
/// extent is the smallest cell count covering the max corner; a max corner
/// that lands exactly on a cell boundary gets one extra cell so the
/// half-open cell convention still covers it.
pub fn build_grid(trajectories: &[Trajectory], cell_len: f64) -> Result<Grid, GeoError> {
    if !(cell_len > 0.0) || !cell_len.is_finite() {
        return Err(GeoError::BadCellLen(cell_len));
    }
    let mut bounds: Option<(f64, f64, f64, f64)> = None;
    for tr in trajectories {
        for p in &tr.points {
            let b = bounds.get_or_insert((p.x, p.x, p.y, p.y));
            b.0 = b.0.min(p.x);
            b.1 = b.1.max(p.x);
            b.2 = b.2.min(p.y);
            b.3 = b.3.max(p.y);
        }
    }
    let (min_x, max_x, min_y, max_y) = bounds.ok_or(GeoError::EmptyInput)?;
    let origin_x = (min_x / cell_len).floor() * cell_len;
    let origin_y = (min_y / cell_len).floor() * cell_len;
    let extent = |origin: f64, max: f64| -> usize {
        let n = (((max - origin) / cell_len).ceil() as usize).max(1);
        // A max corner exactly on the boundary needs the next cell.
        if max >= origin + n as f64 * cell_len {
            n + 1
        } else {
            n
        }
    };
    Ok(Grid {
        origin_x,
        origin_y,
        cell_len,
        n_cols: extent(origin_x, max_x),
        n_rows: extent(origin_y, max_y),
    })
}

/// Snap every point of a trajectory to its grid cell token.
pub fn tokenize(trajectory: &Trajectory, grid: &Grid) -> Result<TokenSeq, GeoError> {
    let mut tokens = Vec::with_capacity(trajectory.points.len());
    for (index, p) in trajectory.points.iter().enumerate() {
        let (col, row) = grid.cell_of(p.x, p.y).ok_or(GeoError::OutOfGrid {
            id: trajectory.id.clone(),
            index,
            x: p.x,
            y: p.y,
        })?;
        tokens.push((grid.cell_id(col, row), p.t));
    }
    Ok(TokenSeq { id: trajectory.id.clone(), tokens })
}

/// Resample a trajectory at `t_first, t_first+step, ...` up to its last
/// timestamp, linearly interpolating coordinates.
///
/// Original points are not retained unless they land on the lattice. A step
/// larger than the covered span leaves a single point, which is reported as
/// a degenerate-output warning.
pub fn interpolate_uniform(trajectory: &Trajectory, step: Timestamp) -> Result<Trajectory, GeoError> {
    if step <= 0 {
        return Err(GeoError::BadStep(step));
    }
    if trajectory.points.len() < 2 {
        return Err(GeoError::InvalidTrajectory {
            id: trajectory.id.clone(),
            msg: "interpolation needs at least 2 points".into(),
        });
    }
    let t0 = trajectory.first().t;
    let t_last = trajectory.last().t;
    let mut points = Vec::new();
    let mut t = t0;
    while t <= t_last {
        let (x, y) = trajectory
            .position_at(t)
            .expect("lattice timestamp inside trajectory span");
        points.push(RawPoint { t, x, y });
        t += step;
    }
    if points.len() == 1 {
        log::warn!(
            "trajectory {}: step {step} exceeds covered span {}, degenerate 1-point output",
            trajectory.id,
            t_last - t0
        );
    }
    Ok(Trajectory { id: trajectory.id.clone(), points })
}
