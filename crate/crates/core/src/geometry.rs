//! Scattered node sets and nearest-neighbour stencils.
//!
//! Nodes come from a jittered lattice: pitch `h`, independent uniform jitter
//! of at most `h/4` per axis, and rejection of any point closer than `h/2` to
//! an already accepted one. On the unit square the four edges are seeded with
//! exactly spaced boundary nodes first.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::textio::fmt_real;
use crate::{Error, Execution, Result};

/// Jitter amplitude per axis, as a fraction of `h`.
const JITTER: f64 = 0.25;
/// Minimum accepted pairwise distance, as a fraction of `h`.
const SEPARATION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    /// The periodic unit torus `[0,1)^2`.
    Torus,
    /// The closed unit square `[0,1]^2` with boundary nodes on all edges.
    Square,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    PeriodicTorus,
    Euclidean,
}

impl Metric {
    /// Displacement `b - a`, using the minimal image on the torus.
    #[inline]
    pub fn displacement(self, a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
        let mut dx = b[0] - a[0];
        let mut dy = b[1] - a[1];
        if self == Metric::PeriodicTorus {
            dx -= dx.round();
            dy -= dy.round();
        }
        [dx, dy]
    }

    #[inline]
    pub fn distance(self, a: [f64; 2], b: [f64; 2]) -> f64 {
        let [dx, dy] = self.displacement(a, b);
        dx.hypot(dy)
    }
}

/// Quasi-uniform scattered nodes with their metric and boundary flags.
#[derive(Debug, Clone)]
pub struct NodeSet {
    points: Vec<[f64; 2]>,
    h: f64,
    metric: Metric,
    boundary: Vec<usize>,
    is_boundary: Vec<bool>,
}

impl NodeSet {
    /// Builds a node set from explicit points. Boundary indices must be
    /// empty for the torus metric.
    pub fn from_points(
        points: Vec<[f64; 2]>,
        h: f64,
        metric: Metric,
        boundary: Vec<usize>,
    ) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "spacing h = {h} must be positive"
            )));
        }
        if metric == Metric::PeriodicTorus && !boundary.is_empty() {
            return Err(Error::InvalidParameter(
                "torus node sets have no boundary".into(),
            ));
        }
        let mut is_boundary = vec![false; points.len()];
        for &b in &boundary {
            if b >= points.len() {
                return Err(Error::InvalidParameter(format!(
                    "boundary index {b} out of range"
                )));
            }
            is_boundary[b] = true;
        }
        let mut boundary = boundary;
        boundary.sort_unstable();
        boundary.dedup();
        Ok(NodeSet {
            points,
            h,
            metric,
            boundary,
            is_boundary,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn point(&self, i: usize) -> [f64; 2] {
        self.points[i]
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    /// Sorted indices of boundary nodes.
    pub fn boundary_ids(&self) -> &[usize] {
        &self.boundary
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        self.is_boundary[i]
    }

    pub fn displacement(&self, from: usize, to: usize) -> [f64; 2] {
        self.metric.displacement(self.points[from], self.points[to])
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        self.metric.distance(self.points[a], self.points[b])
    }

    /// Smallest pairwise distance, via the cell grid.
    pub fn min_separation(&self) -> f64 {
        let grid = CellGrid::new(self, self.h);
        let mut best = f64::INFINITY;
        for i in 0..self.len() {
            grid.for_each_in_ring_range(self.points[i], 0, 1, |j| {
                if j != i {
                    best = best.min(self.distance(i, j));
                }
            });
        }
        if best > self.h {
            // pairs further apart than one cell may hide the true minimum
            for i in 0..self.len() {
                for j in (i + 1)..self.len() {
                    best = best.min(self.distance(i, j));
                }
            }
        }
        best
    }

    /// Writes `x,y,boundary` CSV.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "x,y,boundary")?;
        for (i, p) in self.points.iter().enumerate() {
            writeln!(
                out,
                "{},{},{}",
                fmt_real(p[0]),
                fmt_real(p[1]),
                u8::from(self.is_boundary[i])
            )?;
        }
        Ok(())
    }

    /// Reads the CSV written by [`NodeSet::write_csv`]. Lines starting with
    /// `#` are skipped.
    pub fn read_csv<R: BufRead>(input: R, h: f64, metric: Metric) -> Result<Self> {
        let mut points = Vec::new();
        let mut boundary = Vec::new();
        let mut seen_header = false;
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !seen_header {
                if line != "x,y,boundary" {
                    return Err(Error::Parse {
                        line: lineno + 1,
                        msg: "expected header x,y,boundary".into(),
                    });
                }
                seen_header = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let parse = |s: &str| {
                s.trim().parse::<f64>().map_err(|e| Error::Parse {
                    line: lineno + 1,
                    msg: e.to_string(),
                })
            };
            if fields.len() != 3 {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: "expected 3 fields".into(),
                });
            }
            let idx = points.len();
            points.push([parse(fields[0])?, parse(fields[1])?]);
            match fields[2].trim() {
                "0" => {}
                "1" => boundary.push(idx),
                other => {
                    return Err(Error::Parse {
                        line: lineno + 1,
                        msg: format!("boundary flag {other:?}"),
                    })
                }
            }
        }
        NodeSet::from_points(points, h, metric, boundary)
    }
}

/// Generates a quasi-uniform node set with internodal distance `h`.
pub fn generate_nodes(h: f64, domain: Domain, seed: u64) -> Result<NodeSet> {
    if !(h > 0.0 && h < 0.5) {
        return Err(Error::InvalidParameter(format!(
            "spacing h = {h} must lie in (0, 0.5)"
        )));
    }
    let cells = (1.0 / h).round().max(1.0) as usize;
    let pitch = 1.0 / cells as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut jitter = || rng.gen_range(-JITTER * h..=JITTER * h);
    let floor = SEPARATION * h;

    match domain {
        Domain::Torus => {
            let mut acc = Acceptor::new(Metric::PeriodicTorus, h);
            for j in 0..cells {
                for i in 0..cells {
                    let x = wrap_unit(i as f64 * pitch + jitter());
                    let y = wrap_unit(j as f64 * pitch + jitter());
                    acc.offer([x, y], floor);
                }
            }
            NodeSet::from_points(acc.points, h, Metric::PeriodicTorus, Vec::new())
        }
        Domain::Square => {
            let mut acc = Acceptor::new(Metric::Euclidean, h);
            // boundary: counter-clockwise walk, corners once
            for i in 0..cells {
                acc.force([i as f64 * pitch, 0.0]);
            }
            for j in 0..cells {
                acc.force([1.0, j as f64 * pitch]);
            }
            for i in (1..=cells).rev() {
                acc.force([i as f64 * pitch, 1.0]);
            }
            for j in (1..=cells).rev() {
                acc.force([0.0, j as f64 * pitch]);
            }
            let n_boundary = acc.points.len();
            for j in 1..cells {
                for i in 1..cells {
                    let x = (i as f64 * pitch + jitter()).clamp(0.0, 1.0);
                    let y = (j as f64 * pitch + jitter()).clamp(0.0, 1.0);
                    acc.offer([x, y], floor);
                }
            }
            NodeSet::from_points(acc.points, h, Metric::Euclidean, (0..n_boundary).collect())
        }
    }
}

fn wrap_unit(x: f64) -> f64 {
    let w = x.rem_euclid(1.0);
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

/// Incremental point acceptance with a separation floor, backed by a hash
/// of cells of size `h`.
struct Acceptor {
    metric: Metric,
    cells: usize,
    buckets: Vec<Vec<usize>>,
    points: Vec<[f64; 2]>,
}

impl Acceptor {
    fn new(metric: Metric, h: f64) -> Self {
        let cells = ((1.0 / h).floor() as usize).max(1);
        Acceptor {
            metric,
            cells,
            buckets: vec![Vec::new(); cells * cells],
            points: Vec::new(),
        }
    }

    fn cell_of(&self, p: [f64; 2]) -> (usize, usize) {
        let c = |v: f64| ((v * self.cells as f64) as usize).min(self.cells - 1);
        (c(p[0]), c(p[1]))
    }

    fn force(&mut self, p: [f64; 2]) {
        let (cx, cy) = self.cell_of(p);
        self.buckets[cy * self.cells + cx].push(self.points.len());
        self.points.push(p);
    }

    fn offer(&mut self, p: [f64; 2], floor: f64) -> bool {
        let (cx, cy) = self.cell_of(p);
        let n = self.cells as isize;
        for dy in -1..=1isize {
            for dx in -1..=1isize {
                let (mut x, mut y) = (cx as isize + dx, cy as isize + dy);
                match self.metric {
                    Metric::PeriodicTorus => {
                        x = x.rem_euclid(n);
                        y = y.rem_euclid(n);
                    }
                    Metric::Euclidean => {
                        if x < 0 || y < 0 || x >= n || y >= n {
                            continue;
                        }
                    }
                }
                for &q in &self.buckets[(y * n + x) as usize] {
                    if self.metric.distance(p, self.points[q]) < floor {
                        return false;
                    }
                }
            }
        }
        self.force(p);
        true
    }
}

/// Per-node ordered neighbour lists, nearest first (the node itself leads).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StencilTable {
    n: usize,
    indices: Vec<usize>,
}

impl StencilTable {
    pub fn stencil_size(&self) -> usize {
        self.n
    }

    pub fn num_nodes(&self) -> usize {
        self.indices.len().checked_div(self.n).unwrap_or(0)
    }

    pub fn neighbours(&self, i: usize) -> &[usize] {
        &self.indices[i * self.n..(i + 1) * self.n]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> {
        self.indices.chunks(self.n)
    }
}

/// Uniform cell grid over the unit square used for neighbour queries.
struct CellGrid {
    metric: Metric,
    cells: usize,
    cell_size: f64,
    start: Vec<usize>,
    members: Vec<usize>,
}

impl CellGrid {
    fn new(nodes: &NodeSet, target: f64) -> Self {
        let cells = ((1.0 / target).floor() as usize).clamp(1, 4096);
        let cell_size = 1.0 / cells as f64;
        let cell_of = |p: [f64; 2]| {
            let c = |v: f64| ((v * cells as f64) as usize).min(cells - 1);
            c(p[1]) * cells + c(p[0])
        };
        let mut counts = vec![0usize; cells * cells + 1];
        for &p in nodes.points() {
            counts[cell_of(p) + 1] += 1;
        }
        for c in 1..counts.len() {
            counts[c] += counts[c - 1];
        }
        let start = counts.clone();
        let mut fill = counts;
        let mut members = vec![0; nodes.len()];
        for (i, &p) in nodes.points().iter().enumerate() {
            let c = cell_of(p);
            members[fill[c]] = i;
            fill[c] += 1;
        }
        CellGrid {
            metric: nodes.metric(),
            cells,
            cell_size,
            start,
            members,
        }
    }

    fn cell_coords(&self, p: [f64; 2]) -> (isize, isize) {
        let c = |v: f64| ((v * self.cells as f64) as isize).min(self.cells as isize - 1);
        (c(p[0]), c(p[1]))
    }

    /// Visits all nodes in cells whose Chebyshev cell distance from the cell
    /// of `p` lies in `lo..=hi`. Each cell is visited at most once.
    fn for_each_in_ring_range(&self, p: [f64; 2], lo: usize, hi: usize, mut f: impl FnMut(usize)) {
        let n = self.cells as isize;
        let (cx, cy) = self.cell_coords(p);
        let (lo, hi) = (lo as isize, hi as isize);
        let periodic = self.metric == Metric::PeriodicTorus;
        // on the torus, rings wider than the grid wrap onto themselves
        if periodic && 2 * hi + 1 >= n {
            if lo == 0 {
                self.members.iter().for_each(|&i| f(i));
            } else if 2 * (lo - 1) + 1 < n {
                // visit everything outside the inner (lo-1) block
                let inner = lo - 1;
                for y in 0..n {
                    for x in 0..n {
                        let ddx = wrapped_gap(x - cx, n);
                        let ddy = wrapped_gap(y - cy, n);
                        if ddx.max(ddy) > inner {
                            self.visit_cell(x, y, &mut f);
                        }
                    }
                }
            }
            return;
        }
        for dy in -hi..=hi {
            for dx in -hi..=hi {
                if dx.abs().max(dy.abs()) < lo {
                    continue;
                }
                let (mut x, mut y) = (cx + dx, cy + dy);
                if periodic {
                    x = x.rem_euclid(n);
                    y = y.rem_euclid(n);
                } else if x < 0 || y < 0 || x >= n || y >= n {
                    continue;
                }
                self.visit_cell(x, y, &mut f);
            }
        }
    }

    fn visit_cell(&self, x: isize, y: isize, f: &mut impl FnMut(usize)) {
        let c = (y * self.cells as isize + x) as usize;
        for &i in &self.members[self.start[c]..self.start[c + 1]] {
            f(i);
        }
    }

    /// Largest ring index that can still contain cells on this grid.
    fn max_ring(&self) -> usize {
        self.cells
    }
}

fn wrapped_gap(d: isize, n: isize) -> isize {
    let d = d.rem_euclid(n);
    d.min(n - d)
}

/// Finds the `n` metrically nearest nodes of every node, self first, ties
/// broken by ascending index.
pub fn find_stencils(nodes: &NodeSet, n: usize) -> Result<StencilTable> {
    find_stencils_with(nodes, n, Execution::default())
}

pub fn find_stencils_with(nodes: &NodeSet, n: usize, exec: Execution) -> Result<StencilTable> {
    if n == 0 {
        return Err(Error::InvalidParameter(
            "stencil size must be at least 1".into(),
        ));
    }
    if n > nodes.len() {
        return Err(Error::StencilTooLarge {
            n,
            nodes: nodes.len(),
        });
    }
    // aim for a handful of nodes per cell
    let density = nodes.len() as f64;
    let target = (4.0 / density).sqrt().max(1e-6);
    let grid = CellGrid::new(nodes, target);
    let rows = exec.map_range(nodes.len(), |i| nearest(nodes, &grid, i, n));
    Ok(StencilTable {
        n,
        indices: rows.concat(),
    })
}

fn nearest(nodes: &NodeSet, grid: &CellGrid, i: usize, n: usize) -> Vec<usize> {
    let p = nodes.point(i);
    let mut cand: Vec<(f64, usize)> = Vec::with_capacity(4 * n);
    let mut ring = 0;
    loop {
        grid.for_each_in_ring_range(p, ring, ring, |j| cand.push((nodes.distance(i, j), j)));
        // every node within ring * cell_size has been collected
        let covered = ring as f64 * grid.cell_size;
        let enough = cand.iter().filter(|c| c.0 <= covered).count() >= n;
        if enough || ring >= grid.max_ring() {
            break;
        }
        ring += 1;
    }
    cand.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    cand.dedup_by_key(|c| c.1);
    cand.truncate(n);
    cand.into_iter().map(|c| c.1).collect()
}
