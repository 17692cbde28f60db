//! Gauss–Hermite quadrature for integrals of the form ∫ e^{−x²} f(x) dx.

use crate::error::{Error, Result};

const PI_POW_MINUS_QUARTER: f64 = 0.751_125_544_464_942_5;

#[derive(Debug, Clone)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    /// Nodes and weights by Newton iteration on the orthonormal Hermite
    /// recurrence, which keeps the tail weights accurate in relative terms.
    pub fn new(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidParameter("quadrature order must be positive".into()));
        }
        let n = order;
        let nf = n as f64;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let mut z = 0.0_f64;
        for i in 0..n.div_ceil(2) {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.16667),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * nodes[0],
                3 => 1.91 * z - 0.91 * nodes[1],
                _ => 2.0 * z - nodes[i - 2],
            };
            let mut derivative = 0.0;
            let mut converged = false;
            for _ in 0..100 {
                let (mut p1, mut p2) = (PI_POW_MINUS_QUARTER, 0.0);
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
                }
                derivative = (2.0 * nf).sqrt() * p2;
                let previous = z;
                z = previous - p1 / derivative;
                if (z - previous).abs() <= 1e-15 * z.abs().max(1.0) {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(Error::InvalidParameter(format!("Gauss-Hermite nodes did not converge for order {n}")));
            }
            nodes[i] = z;
            nodes[n - 1 - i] = -z;
            weights[i] = 2.0 / (derivative * derivative);
            weights[n - 1 - i] = weights[i];
        }
        nodes.reverse();
        weights.reverse();
        Ok(Self { nodes, weights })
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// ∫ e^{−x²} f(x) dx.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    /// Pairs (x_i, w_i·e^{x_i²}) for integrating ∫ g(x) dx where g already
    /// contains its Gaussian decay.
    pub fn unweighted(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| (x, w * (x * x).exp()))
    }
}
