//! Physical layout of the multi-sphere calibration target.
//!
//! Target frame: origin at the center of the square of corner balls, x to the
//! right, y down, z pointing from the front of the target into the board.
//! Corner balls sit in the `z = 0` plane, the anchor ball sits on the board at
//! `z = board_offset`.

use alloc::format;
use nalgebra::Matrix4;

use crate::error::{Error, Result};
use crate::geometry::Point3;

/// Index of each corner in the canonical ordering.
pub const TOP_LEFT: usize = 0;
pub const TOP_RIGHT: usize = 1;
pub const BOTTOM_LEFT: usize = 2;
pub const BOTTOM_RIGHT: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetGeometry {
    edge_length: f64,
    pairwise: Matrix4<f64>,
    board_offset: f64,
    styrofoam_radius: f64,
    metal_ball_diameter: f64,
}

fn square_distances(edge: f64) -> Matrix4<f64> {
    let diag = edge * core::f64::consts::SQRT_2;
    // TL, TR, BL, BR: TL–BR and TR–BL are the diagonals.
    Matrix4::new(
        0.0, edge, edge, diag, //
        edge, 0.0, diag, edge, //
        edge, diag, 0.0, edge, //
        diag, edge, edge, 0.0,
    )
}

impl TargetGeometry {
    pub fn new(edge_length: f64, board_offset: f64, styrofoam_radius: f64, metal_ball_diameter: f64) -> Result<Self> {
        Self::with_pairwise(
            edge_length,
            square_distances(edge_length),
            board_offset,
            styrofoam_radius,
            metal_ball_diameter,
        )
    }

    /// Accepts an explicit distance matrix, which must agree with the square.
    pub fn with_pairwise(
        edge_length: f64,
        pairwise: Matrix4<f64>,
        board_offset: f64,
        styrofoam_radius: f64,
        metal_ball_diameter: f64,
    ) -> Result<Self> {
        for (name, v) in [
            ("edge_length", edge_length),
            ("board_offset", board_offset),
            ("styrofoam_radius", styrofoam_radius),
            ("metal_ball_diameter", metal_ball_diameter),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::validation(
                    "target geometry",
                    format!("{name} = {v} must be positive"),
                ));
            }
        }
        let expected = square_distances(edge_length);
        let dev = (pairwise - expected).amax();
        if !(dev <= 1e-9) {
            return Err(Error::validation(
                "target geometry",
                format!("pairwise distances deviate from a square of edge {edge_length} by {dev:e}"),
            ));
        }
        Ok(Self {
            edge_length,
            pairwise,
            board_offset,
            styrofoam_radius,
            metal_ball_diameter,
        })
    }

    pub fn edge_length(&self) -> f64 {
        self.edge_length
    }

    /// Expected distance between corners `i` and `j` (canonical indices).
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.pairwise[(i, j)]
    }

    pub fn pairwise(&self) -> &Matrix4<f64> {
        &self.pairwise
    }

    pub fn board_offset(&self) -> f64 {
        self.board_offset
    }

    pub fn styrofoam_radius(&self) -> f64 {
        self.styrofoam_radius
    }

    pub fn metal_ball_diameter(&self) -> f64 {
        self.metal_ball_diameter
    }

    /// Corner ball centers in the target frame, canonical order.
    pub fn corner_positions(&self) -> [Point3; 4] {
        let h = 0.5 * self.edge_length;
        [
            Point3::new(-h, -h, 0.0),
            Point3::new(h, -h, 0.0),
            Point3::new(-h, h, 0.0),
            Point3::new(h, h, 0.0),
        ]
    }

    /// Anchor ball center in the target frame.
    pub fn anchor_position(&self) -> Point3 {
        Point3::new(0.0, 0.0, self.board_offset)
    }
}

impl Default for TargetGeometry {
    /// 6 cm square of ⌀5 cm styrofoam spheres with ⌀2.5 mm steel balls; the
    /// board touches the spheres, so the anchor sits one sphere radius behind
    /// the corner plane.
    fn default() -> Self {
        Self::new(0.06, 0.025, 0.025, 0.0025).expect("default target geometry is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_distances_form_the_square() {
        let g = TargetGeometry::default();
        let corners = g.corner_positions();
        for i in 0..4 {
            for j in 0..4 {
                let d = (corners[i] - corners[j]).norm();
                assert!((d - g.distance(i, j)).abs() < 1e-15);
            }
        }
        assert!((g.distance(TOP_LEFT, BOTTOM_RIGHT) - 0.06 * 2.0f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rejects_inconsistent_distances() {
        let mut m = square_distances(0.06);
        m[(0, 1)] += 1e-6;
        assert!(TargetGeometry::with_pairwise(0.06, m, 0.025, 0.025, 0.0025).is_err());
        assert!(TargetGeometry::new(0.06, 0.0, 0.025, 0.0025).is_err());
        assert!(TargetGeometry::new(-0.06, 0.025, 0.025, 0.0025).is_err());
    }
}
