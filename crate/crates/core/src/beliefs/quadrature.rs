//! Gauss–Hermite rules rescaled to expectations under a standard normal.

use std::num::NonZeroUsize;

use gauss_quad::hermite::GaussHermite;

/// Nodes/weights such that `Σ w_i f(z_i) ≈ E[f(Z)]`, `Z ~ N(0, 1)`.
#[derive(Debug, Clone)]
pub struct StdNormalRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl StdNormalRule {
    pub const DEFAULT_NODES: usize = 64;

    pub fn new(nodes: usize) -> Self {
        let nodes = NonZeroUsize::new(nodes.max(1)).expect("at least one node");
        let rule = GaussHermite::new(nodes);
        let scale = std::f64::consts::PI.sqrt().recip();
        let (z, w): (Vec<f64>, Vec<f64>) = rule
            .iter()
            .map(|(x, w)| (x * std::f64::consts::SQRT_2, w * scale))
            .unzip();
        Self { nodes: z, weights: w }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `E[f(Z)]`.
    pub fn expect(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&z, &w)| w * f(z))
            .sum()
    }
}

impl Default for StdNormalRule {
    fn default() -> Self {
        Self::new(Self::DEFAULT_NODES)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_of_standard_normal() {
        let rule = StdNormalRule::default();
        assert!((rule.expect(|_| 1.0) - 1.0).abs() < 1e-13);
        assert!(rule.expect(|z| z).abs() < 1e-13);
        assert!((rule.expect(|z| z * z) - 1.0).abs() < 1e-12);
        assert!((rule.expect(|z| z.powi(4)) - 3.0).abs() < 1e-11);
    }
}
