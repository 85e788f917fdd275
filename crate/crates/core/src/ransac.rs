//! Candidate replacement rule shared by every RANSAC-style search.

/// Inlier ratio and error of one hypothesis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub inlier_ratio: f64,
    pub error: f64,
}

/// Trades inlier maximization against error minimization through a single
/// inlier-ratio threshold.
///
/// A candidate whose inlier ratio exceeds the best by more than the threshold
/// always wins; one that falls short by more than the threshold never does;
/// inside the band the lower error wins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcceptanceRule {
    pub inlier_threshold: f64,
}

impl AcceptanceRule {
    pub fn new(inlier_threshold: f64) -> Self {
        Self { inlier_threshold }
    }

    pub fn prefers(&self, candidate: Score, best: Option<Score>) -> bool {
        let Some(best) = best else {
            return true;
        };
        let gain = candidate.inlier_ratio - best.inlier_ratio;
        if gain > self.inlier_threshold {
            true
        } else if gain < -self.inlier_threshold {
            false
        } else {
            candidate.error < best.error
        }
    }
}
