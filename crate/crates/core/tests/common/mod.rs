//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use std::num::NonZeroUsize;

use gauss_quad::hermite::GaussHermite;

pub fn norm_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

pub fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Prior on the scaled mean reward, written out independently of the
/// library's belief code.
#[derive(Debug, Clone)]
pub enum OraclePrior {
    Gaussian { mean: f64, sd: f64 },
    Atoms(Vec<(f64, f64)>),
}

/// Posterior `(mean, E[μ⁺])` and predictive components `(weight, mean, var)`
/// of `μ` at `(x, q)`.
pub fn posterior(prior: &OraclePrior, sigma: f64, x: f64, q: f64) -> (f64, f64, Vec<(f64, f64, f64)>) {
    let s2 = sigma * sigma;
    match prior {
        OraclePrior::Gaussian { mean, sd } => {
            let prec = 1.0 / (sd * sd) + q / s2;
            let m = (mean / (sd * sd) + x / s2) / prec;
            let v = 1.0 / prec;
            let s = v.sqrt();
            let plus = m * norm_cdf(m / s) + s * norm_pdf(m / s);
            (m, plus, vec![(1.0, m, v)])
        }
        OraclePrior::Atoms(atoms) => {
            let logs: Vec<f64> = atoms
                .iter()
                .map(|&(mu, p)| p.ln() + mu * x / s2 - q * mu * mu / (2.0 * s2))
                .collect();
            let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
            let total: f64 = w.iter().sum();
            let comps: Vec<(f64, f64, f64)> = atoms
                .iter()
                .zip(&w)
                .map(|(&(mu, _), &wi)| (wi / total, mu, 0.0))
                .collect();
            let m = comps.iter().map(|c| c.0 * c.1).sum();
            let plus = comps.iter().map(|c| c.0 * c.1.max(0.0)).sum();
            (m, plus, comps)
        }
    }
}

/// Exact backward induction for the `n`-period one-armed problem.
///
/// After `j` periods with `k` pulls the state is `(x, k/n)`. Each period
/// costs `μ⁺/n` when idle and `(μ⁺ − μ)/n` when pulling, and a pull moves
/// `x` by `Y/√n` with `Y ~ N(μ/√n, σ²)`. The predictive expectation uses
/// Gauss–Hermite nodes and linear interpolation on an `x` grid.
pub struct DpOracle {
    pub n: usize,
    pub sigma: f64,
    pub prior: OraclePrior,
    pub x_half: f64,
    pub nx: usize,
    pub nodes: usize,
}

impl DpOracle {
    pub fn new(n: usize, sigma: f64, prior: OraclePrior) -> Self {
        Self {
            n,
            sigma,
            prior,
            x_half: 6.0 * sigma,
            nx: 2401,
            nodes: 40,
        }
    }

    /// Ex-ante Bayes risk `V_0(0, 0)`.
    pub fn value(&self) -> f64 {
        let n = self.n;
        let nf = n as f64;
        let dx = 2.0 * self.x_half / (self.nx - 1) as f64;
        let xs: Vec<f64> = (0..self.nx).map(|i| -self.x_half + i as f64 * dx).collect();
        let rule = GaussHermite::new(NonZeroUsize::new(self.nodes).unwrap());
        let gh: Vec<(f64, f64)> = rule
            .iter()
            .map(|(z, w)| (z * std::f64::consts::SQRT_2, w / std::f64::consts::PI.sqrt()))
            .collect();
        let interp = |v: &[f64], x: f64| -> f64 {
            let u = ((x + self.x_half) / dx).clamp(0.0, (self.nx - 1) as f64);
            let i = (u.floor() as usize).min(self.nx - 2);
            let f = u - i as f64;
            v[i] * (1.0 - f) + v[i + 1] * f
        };

        let mut next: Vec<Vec<f64>> = vec![vec![0.0; self.nx]; n + 1];
        for j in (0..n).rev() {
            let mut cur = vec![vec![0.0; self.nx]; j + 1];
            for (k, row) in cur.iter_mut().enumerate() {
                let q = k as f64 / nf;
                for (i, &x) in xs.iter().enumerate() {
                    let (m, plus, comps) = posterior(&self.prior, self.sigma, x, q);
                    let idle = plus / nf + next[k][i];
                    let mut cont = 0.0;
                    for &(w, cm, cv) in &comps {
                        if w < 1e-300 {
                            continue;
                        }
                        let sd = (self.sigma * self.sigma / nf + cv / (nf * nf)).sqrt();
                        let mean = x + cm / nf;
                        let e: f64 = gh
                            .iter()
                            .map(|&(z, wz)| wz * interp(&next[k + 1], mean + sd * z))
                            .sum();
                        cont += w * e;
                    }
                    let pull = (plus - m) / nf + cont;
                    row[i] = idle.min(pull);
                }
            }
            next = cur;
        }
        interp(&next[0], 0.0)
    }
}

/// Relative gap `|a − b| / max(|b|, floor)`.
pub fn rel_gap(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / b.abs().max(floor)
}
