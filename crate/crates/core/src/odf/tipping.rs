use num_complex::Complex64 as C64;
use serde::Serialize;

use super::CouplingMatrix;
use crate::par;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TippingPoint {
    /// Tipping angle, rad.
    pub theta: f64,
    pub p_mean: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub per_ion: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TippingCurve {
    pub points: Vec<TippingPoint>,
}

impl TippingCurve {
    fn from_fn(n: usize, grid: &[f64], p: impl Fn(f64, usize) -> f64 + Sync) -> Self {
        let points = par::map_indices(grid.len(), |g| {
            let theta = grid[g];
            let per_ion: Vec<f64> = (0..n).map(|j| p(theta, j)).collect();
            let (mut lo, mut hi, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
            for &v in &per_ion {
                lo = lo.min(v);
                hi = hi.max(v);
                sum += v;
            }
            TippingPoint { theta, p_mean: sum / n.max(1) as f64, p_min: lo, p_max: hi, per_ion }
        });
        Self { points }
    }

    /// Largest `|P - 1/2|` of the ensemble mean over the grid.
    pub fn amplitude(&self) -> f64 {
        self.points.iter().map(|p| (p.p_mean - 0.5).abs()).fold(0.0, f64::max)
    }

    pub fn max_deviation(&self, other: &TippingCurve) -> f64 {
        self.points.iter().zip(&other.points).map(|(a, b)| (a.p_mean - b.p_mean).abs()).fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("theta_deg,p_up_mean,p_up_min,p_up_max\n");
        for p in &self.points {
            s.push_str(&format!("{:.6},{:.12},{:.12},{:.12}\n", p.theta.to_degrees(), p.p_mean, p.p_min, p.p_max));
        }
        s
    }
}

fn symmetric(theta: &CouplingMatrix, j: usize, k: usize) -> f64 {
    0.5 * (theta.real(j, k) + theta.real(k, j))
}

/// Spin-up probability after tipping by `theta`, evolving under the Ising
/// phases `theta` (rad) and reading out after a pi/2 pulse.
pub fn tipping_exact(theta: &CouplingMatrix, grid: &[f64]) -> TippingCurve {
    let n = theta.n;
    TippingCurve::from_fn(n, grid, |th, j| {
        let c = th.cos();
        let mut prod = C64::new(1.0, 0.0);
        for k in (0..n).filter(|&k| k != j) {
            let a = 4.0 * symmetric(theta, k, j);
            prod *= C64::new(a.cos(), a.sin() * c);
        }
        0.5 * (1.0 + prod.im * th.sin())
    })
}

/// Small-coupling limit of [`tipping_exact`]: each spin precesses in the mean
/// field of the others.
pub fn tipping_meanfield(theta: &CouplingMatrix, grid: &[f64]) -> TippingCurve {
    let n = theta.n;
    let field: Vec<f64> = (0..n).map(|j| (0..n).filter(|&k| k != j).map(|k| 4.0 * symmetric(theta, k, j)).sum()).collect();
    TippingCurve::from_fn(n, grid, |th, j| 0.5 * (1.0 + (field[j] * th.cos()).sin() * th.sin()))
}
