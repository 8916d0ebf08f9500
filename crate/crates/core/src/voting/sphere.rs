//! Fibonacci lattice on the unit sphere with constant-time nearest-direction
//! lookup, and the orientation histogram built on it.

use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Real, Vec3};
use crate::spatial::KdTree;

/// Quasi-uniform set of unit directions.
///
/// Nearest-direction queries go through a cube map: every cell of every face
/// stores the lattice points that can be nearest to some direction inside
/// the cell, so a query only scans a handful of candidates.
#[derive(Debug)]
pub struct SphereLattice<T: Real> {
    directions: Vec<Vec3<T>>,
    resolution_deg: f64,
    cells_per_side: usize,
    cell_start: Vec<u32>,
    cell_items: Vec<u32>,
    neighbors: OnceLock<Vec<Vec<u32>>>,
}

impl<T: Real> SphereLattice<T> {
    /// Lattice whose mean spacing `sqrt(4π / N)` matches `resolution_deg`.
    pub fn with_resolution(resolution_deg: f64) -> Result<Self> {
        if !(resolution_deg > 0.0 && resolution_deg < 90.0) {
            return Err(Error::invalid(
                "orientation resolution",
                "must lie in (0, 90) degrees",
            ));
        }
        let res = resolution_deg.to_radians();
        let n = ((4.0 * std::f64::consts::PI) / (res * res)).round().max(12.0) as usize;
        Ok(Self::fibonacci(n, resolution_deg))
    }

    /// `n` points `z = 1 − (2i + 1)/n`, longitude `i` times the golden angle.
    pub fn fibonacci(n: usize, resolution_deg: f64) -> Self {
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        let dirs64: Vec<Vec3<f64>> = (0..n)
            .map(|i| {
                let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
                let r = (1.0 - z * z).max(0.0).sqrt();
                let phi = golden * i as f64;
                Vec3::new(r * phi.cos(), r * phi.sin(), z)
            })
            .collect();
        let spacing = (4.0 * std::f64::consts::PI / n as f64).sqrt();
        // cells about two thirds of a lattice spacing wide at the face center
        let side = ((3.0 / spacing).ceil() as usize).max(1);
        let (cell_start, cell_items) = build_cells(&dirs64, side);
        SphereLattice {
            directions: dirs64.iter().map(|d| d.map(lit::<T>)).collect(),
            resolution_deg,
            cells_per_side: side,
            cell_start,
            cell_items,
            neighbors: OnceLock::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn directions(&self) -> &[Vec3<T>] {
        &self.directions
    }

    pub fn resolution_deg(&self) -> f64 {
        self.resolution_deg
    }

    /// Index of the lattice direction closest to `v` (need not be unit);
    /// smallest index on ties.
    #[inline]
    pub fn nearest(&self, v: &Vec3<T>) -> usize {
        let cell = cube_cell(
            [to_f64(v.x), to_f64(v.y), to_f64(v.z)],
            self.cells_per_side,
        );
        let lo = self.cell_start[cell] as usize;
        let hi = self.cell_start[cell + 1] as usize;
        let mut best = self.cell_items[lo] as usize;
        let mut best_dot = self.directions[best].dot(v);
        for &item in &self.cell_items[lo + 1..hi] {
            let d = self.directions[item as usize].dot(v);
            if d > best_dot {
                best_dot = d;
                best = item as usize;
            }
        }
        best
    }

    /// Brute-force nearest, for verification.
    pub fn nearest_exhaustive(&self, v: &Vec3<T>) -> usize {
        let mut best = 0;
        let mut best_dot = self.directions[0].dot(v);
        for (i, d) in self.directions.iter().enumerate().skip(1) {
            let dot = d.dot(v);
            if dot > best_dot {
                best_dot = dot;
                best = i;
            }
        }
        best
    }

    /// Lattice points within 1.5 × resolution of each point (excluding
    /// itself), computed on first use.
    pub fn neighbors(&self) -> &[Vec<u32>] {
        self.neighbors.get_or_init(|| {
            let dirs64: Vec<Vec3<f64>> = self.directions.iter().map(|d| d.map(to_f64)).collect();
            let tree = KdTree::new(&dirs64);
            let angle = 1.5 * self.resolution_deg.to_radians();
            let chord = 2.0 * (angle / 2.0).sin();
            dirs64
                .iter()
                .enumerate()
                .map(|(i, d)| {
                    tree.within_radius(d, chord)
                        .into_iter()
                        .filter(|&j| j != i)
                        .map(|j| j as u32)
                        .collect()
                })
                .collect()
        })
    }
}

/// Face-major cell index: `face * side² + row * side + col`.
#[inline]
fn cube_cell(v: [f64; 3], side: usize) -> usize {
    let ax = if v[0].abs() >= v[1].abs() && v[0].abs() >= v[2].abs() {
        0
    } else if v[1].abs() >= v[2].abs() {
        1
    } else {
        2
    };
    let major = v[ax].abs();
    let face = 2 * ax + usize::from(v[ax] < 0.0);
    if !(major > 0.0) {
        return 0;
    }
    let a = v[(ax + 1) % 3] / major;
    let b = v[(ax + 2) % 3] / major;
    let to_cell = |s: f64| (((s + 1.0) * 0.5 * side as f64).floor().max(0.0) as usize).min(side - 1);
    face * side * side + to_cell(a) * side + to_cell(b)
}

fn cell_direction(face: usize, row: f64, col: f64, side: usize) -> Vec3<f64> {
    let ax = face / 2;
    let sign = if face % 2 == 0 { 1.0 } else { -1.0 };
    let mut v = Vec3::zeros();
    v[ax] = sign;
    v[(ax + 1) % 3] = row / side as f64 * 2.0 - 1.0;
    v[(ax + 2) % 3] = col / side as f64 * 2.0 - 1.0;
    v.normalize()
}

/// For a cell with center `c`, angular radius `r` and nearest lattice point
/// at angle `d` from `c`, the nearest lattice point of any query inside the
/// cell lies within `2r + d` of `c`.
fn build_cells(dirs: &[Vec3<f64>], side: usize) -> (Vec<u32>, Vec<u32>) {
    let tree = KdTree::new(dirs);
    let mut start = Vec::with_capacity(6 * side * side + 1);
    let mut items = Vec::new();
    start.push(0u32);
    for face in 0..6 {
        for row in 0..side {
            for col in 0..side {
                let (r, c) = (row as f64, col as f64);
                let center = cell_direction(face, r + 0.5, c + 0.5, side);
                let radius = [(r, c), (r + 1.0, c), (r, c + 1.0), (r + 1.0, c + 1.0)]
                    .iter()
                    .map(|&(a, b)| safe_angle(&center, &cell_direction(face, a, b, side)))
                    .fold(0.0f64, f64::max);
                let (nearest, _) = tree.nearest(&center).expect("non-empty lattice");
                let d = safe_angle(&center, &dirs[nearest]);
                let reach = (2.0 * radius + d + 1e-9).min(std::f64::consts::PI);
                let chord = 2.0 * (reach / 2.0).sin();
                let found = tree.within_radius(&center, chord);
                items.extend(found.into_iter().map(|i| i as u32));
                start.push(items.len() as u32);
            }
        }
    }
    (start, items)
}

fn safe_angle(a: &Vec3<f64>, b: &Vec3<f64>) -> f64 {
    a.dot(b).clamp(-1.0, 1.0).acos()
}

/// Vote counts per lattice direction.
#[derive(Debug, Clone)]
pub struct OrientationHistogram<T: Real> {
    pub lattice: Arc<SphereLattice<T>>,
    pub counts: Vec<u32>,
}

impl<T: Real> PartialEq for OrientationHistogram<T> {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.lattice, &other.lattice) && self.counts == other.counts
    }
}

impl<T: Real> OrientationHistogram<T> {
    pub fn new(lattice: Arc<SphereLattice<T>>) -> Self {
        let counts = vec![0; lattice.len()];
        OrientationHistogram { lattice, counts }
    }

    #[inline]
    pub fn add(&mut self, direction: &Vec3<T>) {
        let i = self.lattice.nearest(direction);
        self.counts[i] += 1;
    }

    pub fn merge(&mut self, other: &OrientationHistogram<T>) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += *b;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    /// Counts with every bin's neighbors (within one bin spacing) added in.
    pub fn cap_smoothed(&self) -> Vec<u32> {
        let neighbors = self.lattice.neighbors();
        self.counts
            .iter()
            .zip(neighbors)
            .map(|(&c, n)| c + n.iter().map(|&j| self.counts[j as usize]).sum::<u32>())
            .collect()
    }

    /// Peak bin (smallest index on ties) and its direction.
    pub fn argmax(&self, smoothed: bool) -> Option<(usize, Vec3<T>)> {
        let owned;
        let counts = if smoothed {
            owned = self.cap_smoothed();
            &owned
        } else {
            &self.counts
        };
        let mut best: Option<(usize, u32)> = None;
        for (i, &c) in counts.iter().enumerate() {
            if c > 0 && best.is_none_or(|(_, b)| c > b) {
                best = Some((i, c));
            }
        }
        best.map(|(i, _)| (i, self.lattice.directions()[i]))
    }
}
