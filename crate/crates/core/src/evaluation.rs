//! Alignment metrics: directed nearest-neighbor RMSE, symmetric Chamfer
//! distance and per-point residuals.

use alloc::vec::Vec;

// Unused whenever std is linked in, which provides the inherent methods.
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::geometry::{Point3, RigidTransform};

/// Below this many reference points a linear scan is used.
pub const BRUTE_FORCE_LIMIT: usize = 500;

/// Residual threshold used for the reported inlier fraction.
pub const INLIER_RESIDUAL: f64 = 0.002;

/// Exact nearest-neighbor lookup over a fixed reference cloud.
///
/// Large clouds are bucketed into a uniform grid; the ring search stops only
/// once no unvisited cell can hold a closer point, so results (including the
/// returned squared distance) are identical to a linear scan.
pub struct NearestNeighbors<'a> {
    points: &'a [Point3],
    grid: Option<Grid>,
}

struct Grid {
    origin: Point3,
    cell: f64,
    dims: [i64; 3],
    /// `starts[c]..starts[c + 1]` indexes `members` for cell `c`.
    starts: Vec<usize>,
    members: Vec<usize>,
}

impl Grid {
    fn build(points: &[Point3]) -> Option<Grid> {
        let mut lo = points[0];
        let mut hi = points[0];
        for p in points {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let extent = (hi - lo).amax();
        if !(extent.is_finite() && extent > 0.0) {
            return None;
        }
        // Sized for surface-sampled clouds: about one point per cell on a sheet.
        let cell = extent / (points.len() as f64).sqrt();
        let dims = [0, 1, 2].map(|k| (((hi[k] - lo[k]) / cell).floor() as i64 + 1).max(1));
        let total = dims.iter().product::<i64>();
        if total > 8 * points.len() as i64 + 64 {
            return None;
        }
        let mut grid = Grid {
            origin: lo,
            cell,
            dims,
            starts: Vec::new(),
            members: Vec::new(),
        };
        let ids: Vec<usize> = points
            .iter()
            .map(|p| grid.flat(grid.coords(p)).expect("point inside its own bounding box"))
            .collect();
        let mut counts = alloc::vec![0usize; total as usize + 1];
        for &id in &ids {
            counts[id + 1] += 1;
        }
        for c in 1..counts.len() {
            counts[c] += counts[c - 1];
        }
        let mut fill = counts.clone();
        let mut members = alloc::vec![0usize; points.len()];
        for (i, &id) in ids.iter().enumerate() {
            members[fill[id]] = i;
            fill[id] += 1;
        }
        grid.starts = counts;
        grid.members = members;
        Some(grid)
    }

    fn coords(&self, p: &Point3) -> [i64; 3] {
        [0, 1, 2].map(|k| ((p[k] - self.origin[k]) / self.cell).floor() as i64)
    }

    fn flat(&self, c: [i64; 3]) -> Option<usize> {
        if (0..3).any(|k| c[k] < 0 || c[k] >= self.dims[k]) {
            return None;
        }
        Some(((c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]) as usize)
    }

    fn cell_members(&self, c: [i64; 3]) -> &[usize] {
        match self.flat(c) {
            Some(id) => &self.members[self.starts[id]..self.starts[id + 1]],
            None => &[],
        }
    }
}

impl<'a> NearestNeighbors<'a> {
    pub fn new(points: &'a [Point3]) -> Self {
        let grid = if points.len() >= BRUTE_FORCE_LIMIT {
            Grid::build(points)
        } else {
            None
        };
        Self { points, grid }
    }

    /// Index of and squared distance to the nearest reference point. Ties
    /// resolve to the lowest index.
    pub fn nearest(&self, q: &Point3) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let Some(grid) = &self.grid else {
            return self.scan(q, 0..self.points.len());
        };
        let center = grid.coords(q);
        if (0..3).any(|k| center[k] < -2 || center[k] > grid.dims[k] + 2) {
            return self.scan(q, 0..self.points.len());
        }
        let mut best: Option<(usize, f64)> = None;
        let reach = grid.dims.iter().copied().max().unwrap_or(1) + 2;
        for ring in 0..=reach {
            for dz in -ring..=ring {
                for dy in -ring..=ring {
                    for dx in -ring..=ring {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != ring {
                            continue;
                        }
                        let c = [center[0] + dx, center[1] + dy, center[2] + dz];
                        for &i in grid.cell_members(c) {
                            let d = (self.points[i] - q).norm_squared();
                            if best.is_none_or(|(bi, bd)| d < bd || (d == bd && i < bi)) {
                                best = Some((i, d));
                            }
                        }
                    }
                }
            }
            // Any cell beyond this ring is at least `ring` whole cells away.
            if let Some((_, bd)) = best {
                let bound = ring as f64 * grid.cell;
                if bd < bound * bound {
                    break;
                }
            }
        }
        best
    }

    fn scan(&self, q: &Point3, range: core::ops::Range<usize>) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for i in range {
            let d = (self.points[i] - q).norm_squared();
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        best
    }
}

/// For each point of `from`, the distance to its nearest neighbor in `to`.
pub fn nearest_distances(from: &[Point3], to: &[Point3]) -> Result<Vec<f64>> {
    if from.is_empty() || to.is_empty() {
        return Err(Error::EmptyInput("point cloud"));
    }
    let index = NearestNeighbors::new(to);
    Ok(from
        .iter()
        .map(|p| index.nearest(p).expect("non-empty").1.sqrt())
        .collect())
}

/// RMS over `a` of the distance to the nearest point of `b`.
pub fn directed_rmse(a: &[Point3], b: &[Point3]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput("point cloud"));
    }
    let index = NearestNeighbors::new(b);
    let sum: f64 = a.iter().map(|p| index.nearest(p).expect("non-empty").1).sum();
    Ok((sum / a.len() as f64).sqrt())
}

/// `½·RMSE(P_o, P_r) + ½·RMSE(P_r, P_o)`.
pub fn chamfer_distance(optical: &[Point3], radar: &[Point3]) -> Result<f64> {
    let forward = directed_rmse(optical, radar)?;
    let backward = directed_rmse(radar, optical)?;
    Ok(0.5 * forward + 0.5 * backward)
}

/// Radar points annotated with their distance to the aligned optical cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualCloud {
    pub points: Vec<Point3>,
    pub residuals: Vec<f64>,
}

/// Maps the optical cloud into the radar frame with `optical_to_radar` and
/// attaches each radar point's nearest-neighbor distance.
pub fn residual_export(
    optical: &[Point3],
    radar: &[Point3],
    optical_to_radar: &RigidTransform,
) -> Result<ResidualCloud> {
    let aligned: Vec<Point3> = optical.iter().map(|p| optical_to_radar.apply(p)).collect();
    let residuals = nearest_distances(radar, &aligned)?;
    Ok(ResidualCloud {
        points: radar.to_vec(),
        residuals,
    })
}

/// Metrics table for one aligned optical/radar pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentMetrics {
    pub chamfer: f64,
    pub rmse_optical_to_radar: f64,
    pub rmse_radar_to_optical: f64,
    /// Fraction of radar points within [`INLIER_RESIDUAL`] of the optical cloud.
    pub inlier_fraction: f64,
}

pub fn evaluate_alignment(
    optical: &[Point3],
    radar: &[Point3],
    optical_to_radar: &RigidTransform,
) -> Result<AlignmentMetrics> {
    let aligned: Vec<Point3> = optical.iter().map(|p| optical_to_radar.apply(p)).collect();
    let rmse_optical_to_radar = directed_rmse(&aligned, radar)?;
    let rmse_radar_to_optical = directed_rmse(radar, &aligned)?;
    let residuals = nearest_distances(radar, &aligned)?;
    let inliers = residuals.iter().filter(|r| **r < INLIER_RESIDUAL).count();
    Ok(AlignmentMetrics {
        chamfer: 0.5 * rmse_optical_to_radar + 0.5 * rmse_radar_to_optical,
        rmse_optical_to_radar,
        rmse_radar_to_optical,
        inlier_fraction: inliers as f64 / residuals.len() as f64,
    })
}
