//! Flat point storage and a uniform-grid spatial index.
//!
//! Points live in `[0, side]^d` and are stored as one flat `f64` buffer with
//! stride `d`. The grid buckets point indices by cell; range scans visit a
//! Chebyshev neighborhood, and the nearest-neighbor query expands rings until
//! no unscanned cell can hold a closer point. Queries compare exact squared
//! distances and break ties by smallest index, so results are identical to a
//! brute-force scan.

/// Volume of the unit ball in `d` dimensions.
pub fn unit_ball_volume(d: usize) -> f64 {
    let d = d as f64;
    std::f64::consts::PI.powf(d / 2.0) / libm::tgamma(d / 2.0 + 1.0)
}

/// Squared Euclidean distance between two points of dimension `d`.
#[inline]
pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Points of fixed dimension in one flat buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    dimension: usize,
    coords: Vec<f64>,
}

impl PointSet {
    pub fn with_capacity(dimension: usize, points: usize) -> Self {
        PointSet { dimension, coords: Vec::with_capacity(dimension * points) }
    }

    pub fn from_coords(dimension: usize, coords: Vec<f64>) -> Self {
        assert_eq!(coords.len() % dimension, 0);
        PointSet { dimension, coords }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dimension
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dimension..(i + 1) * self.dimension]
    }

    pub fn push(&mut self, point: &[f64]) {
        debug_assert_eq!(point.len(), self.dimension);
        self.coords.extend_from_slice(point);
    }

    pub fn set(&mut self, i: usize, point: &[f64]) {
        self.coords[i * self.dimension..(i + 1) * self.dimension].copy_from_slice(point);
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dimension)
    }
}

/// Uniform grid over `[0, side]^d` bucketing point indices by cell.
#[derive(Debug)]
pub struct GridIndex {
    dimension: usize,
    cells_per_axis: usize,
    cell_size: f64,
    /// `buckets[flat cell] =` point indices in that cell, in index order.
    buckets: Vec<Vec<u32>>,
}

impl GridIndex {
    /// Build with cells of size at least `min_cell` over `[0, side]^d`.
    pub fn build(points: &PointSet, side: f64, min_cell: f64) -> GridIndex {
        let dimension = points.dimension();
        assert!(dimension <= 8, "grid index supports up to 8 dimensions");
        let cells_per_axis = ((side / min_cell).floor() as usize).clamp(1, 1 << 20);
        let cell_size = side / cells_per_axis as f64;
        let mut buckets = vec![Vec::new(); cells_per_axis.pow(dimension as u32)];
        let mut grid = GridIndex { dimension, cells_per_axis, cell_size, buckets: Vec::new() };
        for (i, p) in points.iter().enumerate() {
            let cell = grid.flat_cell_of(p, cells_per_axis);
            buckets[cell].push(i as u32);
        }
        grid.buckets = buckets;
        grid
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    #[inline]
    fn axis_cell(&self, x: f64) -> usize {
        ((x / self.cell_size) as usize).min(self.cells_per_axis - 1)
    }

    fn flat_cell_of(&self, p: &[f64], cells_per_axis: usize) -> usize {
        p.iter().take(self.dimension).fold(0usize, |acc, &x| {
            acc * cells_per_axis + ((x / self.cell_size) as usize).min(cells_per_axis - 1)
        })
    }

    /// Visit point indices in all cells within Chebyshev distance `reach`
    /// cells of the cell containing `query`, in cell-major index order.
    pub fn for_neighborhood<F: FnMut(u32)>(&self, query: &[f64], reach: usize, mut f: F) {
        let mut lo = [0usize; 8];
        let mut hi = [0usize; 8];
        for axis in 0..self.dimension {
            let c = self.axis_cell(query[axis]);
            lo[axis] = c.saturating_sub(reach);
            hi[axis] = (c + reach).min(self.cells_per_axis - 1);
        }
        self.scan_box(&lo[..self.dimension], &hi[..self.dimension], &mut f);
    }

    fn scan_box<F: FnMut(u32)>(&self, lo: &[usize], hi: &[usize], f: &mut F) {
        let mut cursor = [0usize; 8];
        cursor[..lo.len()].copy_from_slice(lo);
        loop {
            let flat = cursor[..lo.len()].iter().fold(0usize, |acc, &c| {
                acc * self.cells_per_axis + c
            });
            for &idx in &self.buckets[flat] {
                f(idx);
            }
            // Odometer increment over the box.
            let mut axis = lo.len();
            loop {
                if axis == 0 {
                    return;
                }
                axis -= 1;
                if cursor[axis] < hi[axis] {
                    cursor[axis] += 1;
                    cursor[axis + 1..lo.len()].copy_from_slice(&lo[axis + 1..]);
                    break;
                }
            }
        }
    }

    /// Index of the nearest point to `query`, ties broken by smallest index.
    ///
    /// Returns `None` only for an empty point set. Identical to a brute-force
    /// scan: rings are expanded until the closest possible unscanned cell is
    /// strictly farther than the best squared distance found.
    pub fn nearest(&self, points: &PointSet, query: &[f64]) -> Option<usize> {
        if points.is_empty() {
            return None;
        }
        let mut best: Option<(f64, u32)> = None;
        let mut reach = 0usize;
        loop {
            // Scanning the full neighborhood (not just the new ring) keeps
            // the loop simple; buckets are small so rescans are cheap.
            self.for_neighborhood(query, reach, |idx| {
                let d2 = dist2(points.point(idx as usize), query);
                let better = match best {
                    None => true,
                    Some((bd, bi)) => d2 < bd || (d2 == bd && idx < bi),
                };
                if better {
                    best = Some((d2, idx));
                }
            });
            // A point in an unscanned cell is at least `reach * cell` away.
            let ring_floor = reach as f64 * self.cell_size;
            if let Some((bd, _)) = best {
                if bd < ring_floor * ring_floor {
                    break;
                }
            }
            if reach >= self.cells_per_axis {
                if best.is_some() {
                    break;
                }
                debug_assert!(false, "grid nearest: no points found in full scan");
                return None;
            }
            reach += 1;
        }
        best.map(|(_, idx)| idx as usize)
    }
}
