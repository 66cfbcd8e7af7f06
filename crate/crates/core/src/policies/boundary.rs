//! Stopping boundary `f(q, t)` of a one-armed optimal policy and a Hölder
//! diagnostic for the Thompson rule.

use std::io::Write;

use crate::beliefs::PriorSpec;
use crate::lattice::io::fmt_sig;
use crate::lattice::GridSpec;

use super::{ControlTable, PolicyError, Result};

/// `x_boundary[m·nq + j]` is the smallest grid `x` that pulls at `(q_j, t_m)`;
/// `-∞` when every node pulls and `+∞` when none does.
#[derive(Debug, Clone, PartialEq)]
pub struct StoppingBoundary {
    pub q: Vec<f64>,
    pub t: Vec<f64>,
    pub x_boundary: Vec<f64>,
}

impl StoppingBoundary {
    pub fn at(&self, m: usize, j: usize) -> f64 {
        self.x_boundary[m * self.q.len() + j]
    }

    /// Number of `(q, t)` cells where the control is constant in `x`.
    pub fn no_switch_count(&self) -> usize {
        self.x_boundary.iter().filter(|v| v.is_infinite()).count()
    }

    /// CSV with columns `q,t,x_boundary`.
    pub fn write_csv<W: Write>(&self, mut w: W, comment: Option<&str>) -> std::io::Result<()> {
        if let Some(c) = comment {
            writeln!(w, "# {c}")?;
        }
        writeln!(w, "q,t,x_boundary")?;
        for (m, &t) in self.t.iter().enumerate() {
            for (j, &q) in self.q.iter().enumerate() {
                writeln!(w, "{},{},{}", fmt_sig(q), fmt_sig(t), fmt_sig(self.at(m, j)))?;
            }
        }
        Ok(())
    }
}

pub fn extract_stopping_boundary(table: &ControlTable) -> Result<StoppingBoundary> {
    let grid = table.grid();
    if !table.is_binary() || grid.arms() != 1 {
        return Err(PolicyError::Unsupported(
            "stopping boundaries exist for one-armed tables".into(),
        ));
    }
    let xs = grid.x_axis(0).nodes();
    let nx = xs.len();
    let nq = grid.q_axis().n;
    let nt = grid.nt();
    let mut x_boundary = Vec::with_capacity(nt * nq);
    for m in 0..nt {
        for j in 0..nq {
            let row = j * nx;
            let first = (0..nx).find(|&i| table.pull(m, row + i));
            let all = first == Some(0) && (0..nx).all(|i| table.pull(m, row + i));
            x_boundary.push(match first {
                None => f64::INFINITY,
                Some(_) if all => f64::NEG_INFINITY,
                Some(i) => xs[i],
            });
        }
    }
    Ok(StoppingBoundary {
        q: grid.q_axis().nodes(),
        t: (0..nt).map(|m| grid.time(m)).collect(),
        x_boundary,
    })
}

/// Largest finite-difference slope `|Δπ|/‖Δs‖` of the Thompson rule between
/// neighbouring nodes in `x` and in `q`.
pub fn thompson_continuity_check(prior: &PriorSpec, sigma: f64, grid: &GridSpec) -> f64 {
    let xs = grid.x_axis(0).nodes();
    let qs = grid.q_axis().nodes();
    let (dx, dq) = (grid.x_axis(0).step(), grid.q_axis().step());
    let pi: Vec<Vec<f64>> = qs
        .iter()
        .map(|&q| xs.iter().map(|&x| prior.prob_nonnegative(sigma, x, q)).collect())
        .collect();
    let mut worst: f64 = 0.0;
    for j in 0..qs.len() {
        for i in 0..xs.len() {
            if i + 1 < xs.len() {
                worst = worst.max((pi[j][i + 1] - pi[j][i]).abs() / dx);
            }
            if j + 1 < qs.len() {
                worst = worst.max((pi[j + 1][i] - pi[j][i]).abs() / dq);
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sentinels_and_threshold() {
        let g = GridSpec::uniform(1.0, 5, 2, 3).unwrap();
        let mut t = ControlTable::binary(g);
        t.set_binary(0, &[true; 10]);
        t.set_binary(1, &[false; 10]);
        let mut p = [false; 10];
        p[3] = true;
        p[4] = true;
        p[9] = true;
        t.set_binary(2, &p);
        let b = extract_stopping_boundary(&t).unwrap();
        assert_eq!(b.at(0, 0), f64::NEG_INFINITY);
        assert_eq!(b.at(1, 1), f64::INFINITY);
        assert_eq!(b.at(2, 0), 1.25);
        assert_eq!(b.at(2, 1), 2.5);
        assert_eq!(b.no_switch_count(), 4);
    }

    #[test]
    fn continuity_of_degenerate_and_tight_priors() {
        let g = GridSpec::uniform(1.0, 21, 11, 10).unwrap();
        assert_eq!(thompson_continuity_check(&PriorSpec::degenerate(1.0), 1.0, &g), 0.0);
        let tight = PriorSpec::gaussian(0.3, 1e-9).unwrap();
        assert!(thompson_continuity_check(&tight, 1.0, &g) < 1e-12);
        let diffuse = PriorSpec::gaussian(0.0, 1.0).unwrap();
        let l = thompson_continuity_check(&diffuse, 1.0, &g);
        assert!(l.is_finite() && l > 0.0);
    }
}
