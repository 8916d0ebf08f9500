//! Dense integer accumulator over an axis-aligned box of voxels.

use std::io::Write;

use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Real, Vec3};

#[derive(Debug, Clone, PartialEq)]
pub struct VoteGrid<T: Real> {
    pub origin: Vec3<T>,
    pub resolution: T,
    pub dims: [usize; 3],
    pub counts: Vec<u32>,
}

impl<T: Real> VoteGrid<T> {
    /// Grid covering `[lo, hi]` expanded by one voxel on every side.
    pub fn covering(lo: &Vec3<T>, hi: &Vec3<T>, resolution: T) -> Result<Self> {
        if resolution <= T::zero() {
            return Err(Error::invalid("grid resolution", "must be positive"));
        }
        let origin = lo - Vec3::repeat(resolution);
        let dims = std::array::from_fn(|a| {
            let span = (hi[a] + resolution - origin[a]) / resolution;
            span.floor().to_usize().unwrap_or(0) + 1
        });
        Ok(Self::with_dims(origin, resolution, dims))
    }

    pub fn with_dims(origin: Vec3<T>, resolution: T, dims: [usize; 3]) -> Self {
        VoteGrid {
            origin,
            resolution,
            dims,
            counts: vec![0; dims[0] * dims[1] * dims[2]],
        }
    }

    /// Empty grid with the same geometry.
    pub fn zeroed_like(&self) -> Self {
        Self::with_dims(self.origin, self.resolution, self.dims)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Flat index of the voxel containing `p`, row-major in `(x, y, z)`.
    #[inline]
    pub fn index_of(&self, p: &Vec3<T>) -> Option<usize> {
        let inv = T::one() / self.resolution;
        self.index_of_with(p, inv)
    }

    #[inline]
    pub(crate) fn index_of_with(&self, p: &Vec3<T>, inv_res: T) -> Option<usize> {
        let mut flat = 0usize;
        for a in 0..3 {
            let f = ((p[a] - self.origin[a]) * inv_res).floor();
            if !(f >= T::zero()) {
                return None;
            }
            let i = f.to_usize()?;
            if i >= self.dims[a] {
                return None;
            }
            flat = flat * self.dims[a] + i;
        }
        Some(flat)
    }

    pub fn coords(&self, flat: usize) -> [usize; 3] {
        let z = flat % self.dims[2];
        let y = (flat / self.dims[2]) % self.dims[1];
        let x = flat / (self.dims[2] * self.dims[1]);
        [x, y, z]
    }

    pub fn cell_center(&self, flat: usize) -> Vec3<T> {
        let c = self.coords(flat);
        Vec3::from_fn(|a, _| self.origin[a] + self.resolution * (lit::<T>(c[a] as f64) + lit(0.5)))
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    /// Highest cell; the smallest flat index wins ties. `None` if empty.
    pub fn argmax(&self) -> Option<(usize, u32)> {
        let mut best: Option<(usize, u32)> = None;
        for (i, &c) in self.counts.iter().enumerate() {
            if c > 0 && best.is_none_or(|(_, b)| c > b) {
                best = Some((i, c));
            }
        }
        best
    }

    pub fn add_assign(&mut self, other: &VoteGrid<T>) {
        debug_assert_eq!(self.dims, other.dims);
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += *b;
        }
    }

    /// Cells with count `>= threshold` that dominate their 26-neighborhood.
    /// On plateaus only the smallest flat index survives. Sorted by count
    /// descending, then index ascending.
    pub fn local_maxima(&self, threshold: u32) -> Vec<(usize, u32)> {
        let [dx, dy, dz] = self.dims;
        let mut out = Vec::new();
        for (flat, &c) in self.counts.iter().enumerate() {
            if c == 0 || c < threshold {
                continue;
            }
            let [x, y, z] = self.coords(flat);
            let mut is_max = true;
            'scan: for ox in -1i64..=1 {
                for oy in -1i64..=1 {
                    for oz in -1i64..=1 {
                        if ox == 0 && oy == 0 && oz == 0 {
                            continue;
                        }
                        let (nx, ny, nz) = (x as i64 + ox, y as i64 + oy, z as i64 + oz);
                        if nx < 0 || ny < 0 || nz < 0 || nx >= dx as i64 || ny >= dy as i64 || nz >= dz as i64 {
                            continue;
                        }
                        let n = (nx as usize * dy + ny as usize) * dz + nz as usize;
                        let nc = self.counts[n];
                        if nc > c || (nc == c && n < flat) {
                            is_max = false;
                            break 'scan;
                        }
                    }
                }
            }
            if is_max {
                out.push((flat, c));
            }
        }
        out.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        out
    }

    /// Debug dump: origin (3 × f64), resolution (f64), dims (3 × u64) and
    /// the flat counts (u32), all little-endian.
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        for a in 0..3 {
            out.write_all(&to_f64(self.origin[a]).to_le_bytes())?;
        }
        out.write_all(&to_f64(self.resolution).to_le_bytes())?;
        for d in self.dims {
            out.write_all(&(d as u64).to_le_bytes())?;
        }
        for c in &self.counts {
            out.write_all(&c.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary(bytes: &[u8]) -> Result<Self> {
        let bad = || Error::invalid("grid dump", "truncated");
        let f64_at = |o: usize| -> Result<f64> {
            Ok(f64::from_le_bytes(bytes.get(o..o + 8).ok_or_else(bad)?.try_into().unwrap()))
        };
        let origin = Vec3::new(lit(f64_at(0)?), lit(f64_at(8)?), lit(f64_at(16)?));
        let resolution = lit(f64_at(24)?);
        let mut dims = [0usize; 3];
        for (a, d) in dims.iter_mut().enumerate() {
            let o = 32 + 8 * a;
            *d = u64::from_le_bytes(bytes.get(o..o + 8).ok_or_else(bad)?.try_into().unwrap()) as usize;
        }
        let n = dims[0] * dims[1] * dims[2];
        let body = bytes.get(56..56 + 4 * n).ok_or_else(bad)?;
        let counts = body
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(VoteGrid {
            origin,
            resolution,
            dims,
            counts,
        })
    }
}
