//! Canonical top-left / top-right / bottom-left / bottom-right ordering of the
//! four corner centers, driven by the sensor's up and right vectors.

use crate::error::{Error, Result};
use crate::geometry::{Point3, Vector3};

/// Minimum separation (meters) between projections for a split to count as
/// unambiguous.
pub const ORDERING_TOLERANCE: f64 = 1e-3;

/// Up/right axes of a sensor frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Orientation {
    pub up: Vector3,
    pub right: Vector3,
}

impl Orientation {
    /// Pinhole camera convention: y points down, so up is `-y`.
    pub fn camera() -> Self {
        Self {
            up: Vector3::new(0.0, -1.0, 0.0),
            right: Vector3::new(1.0, 0.0, 0.0),
        }
    }
}

/// Returns `order` such that `centers[order[k]]` is the k-th canonical corner.
pub fn order_indices(centers: &[Point3; 4], up: &Vector3, right: &Vector3) -> Result<[usize; 4]> {
    let up_proj = centers.map(|c| c.coords.dot(up));
    let right_proj = centers.map(|c| c.coords.dot(right));

    let mut by_up = [0usize, 1, 2, 3];
    by_up.sort_by(|&a, &b| up_proj[b].total_cmp(&up_proj[a]).then(a.cmp(&b)));
    if up_proj[by_up[1]] - up_proj[by_up[2]] < ORDERING_TOLERANCE {
        return Err(Error::AmbiguousOrdering {
            tolerance: ORDERING_TOLERANCE,
        });
    }

    let split = |a: usize, b: usize| -> Result<(usize, usize)> {
        let gap = right_proj[a] - right_proj[b];
        if gap.abs() < ORDERING_TOLERANCE {
            return Err(Error::AmbiguousOrdering {
                tolerance: ORDERING_TOLERANCE,
            });
        }
        Ok(if gap < 0.0 { (a, b) } else { (b, a) })
    };
    let (top_left, top_right) = split(by_up[0], by_up[1])?;
    let (bottom_left, bottom_right) = split(by_up[2], by_up[3])?;
    Ok([top_left, top_right, bottom_left, bottom_right])
}

pub fn order_centers(centers: &[Point3; 4], up: &Vector3, right: &Vector3) -> Result<[Point3; 4]> {
    let order = order_indices(centers, up, right)?;
    Ok(order.map(|i| centers[i]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;

    fn up() -> Vector3 {
        Vector3::new(0.0, 1.0, 0.0)
    }

    fn right() -> Vector3 {
        Vector3::new(1.0, 0.0, 0.0)
    }

    fn unit_square() -> [Point3; 4] {
        [
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(1.0, 1.0, 0.0),
        ]
    }

    #[test]
    fn axis_aligned_square() {
        let ordered = order_centers(&unit_square(), &up(), &right()).unwrap();
        assert_eq!(
            ordered,
            [
                Point3::new(0.0, 1.0, 0.0),
                Point3::new(1.0, 1.0, 0.0),
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
            ]
        );
    }

    fn rotated_about_center(angle_deg: f64) -> ([Point3; 4], [Point3; 4]) {
        // Canonical layout (TL, TR, BL, BR) centered at the origin.
        let canon = [
            Point3::new(-0.5, 0.5, 0.0),
            Point3::new(0.5, 0.5, 0.0),
            Point3::new(-0.5, -0.5, 0.0),
            Point3::new(0.5, -0.5, 0.0),
        ];
        let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), angle_deg.to_radians());
        (canon, canon.map(|p| rot * p))
    }

    #[test]
    fn thirty_degree_roll_keeps_logical_order() {
        let (_, rotated) = rotated_about_center(30.0);
        let shuffled = [rotated[3], rotated[0], rotated[2], rotated[1]];
        assert_eq!(order_centers(&shuffled, &up(), &right()).unwrap(), rotated);
    }

    #[test]
    fn eighty_nine_degree_roll_orders_by_position() {
        // At +89° the corners sit at angles 224°, 134°, 314°, 44° (TL..BR).
        // Up projections (sin) rank TR, BR above TL, BL; right projections
        // (cos) put TR left of BR and TL left of BL.
        let (_, rotated) = rotated_about_center(89.0);
        let ordered = order_centers(&rotated, &up(), &right()).unwrap();
        assert_eq!(ordered, [rotated[1], rotated[3], rotated[0], rotated[2]]);
    }

    #[test]
    fn diagonal_roll_is_ambiguous() {
        let (_, rotated) = rotated_about_center(45.0);
        assert!(matches!(
            order_centers(&rotated, &up(), &right()),
            Err(Error::AmbiguousOrdering { .. })
        ));
    }

    #[test]
    fn every_permutation_gives_same_order() {
        let (_, rotated) = rotated_about_center(12.0);
        let expected = order_centers(&rotated, &up(), &right()).unwrap();
        let mut perm = [0usize, 1, 2, 3];
        // Heap's algorithm over all 24 permutations.
        fn heap(k: usize, perm: &mut [usize; 4], visit: &mut dyn FnMut(&[usize; 4])) {
            if k == 1 {
                visit(perm);
                return;
            }
            for i in 0..k {
                heap(k - 1, perm, visit);
                if k.is_multiple_of(2) {
                    perm.swap(i, k - 1);
                } else {
                    perm.swap(0, k - 1);
                }
            }
        }
        let mut count = 0;
        heap(4, &mut perm, &mut |p| {
            let input = p.map(|i| rotated[i]);
            assert_eq!(order_centers(&input, &up(), &right()).unwrap(), expected);
            count += 1;
        });
        assert_eq!(count, 24);
    }
}
