//! Truncated Newton (Newton-CG) local minimizer using the analytic Hessian.

use crate::error::Result;
use crate::trap::ScaledPotential;

#[derive(Clone, Debug, PartialEq)]
pub struct NcgOptions {
    /// Convergence threshold on the largest gradient component (scaled units).
    pub tol_grad: f64,
    pub max_iters: usize,
    /// Largest coordinate change allowed in one step (scaled units).
    pub max_step: f64,
}

impl Default for NcgOptions {
    fn default() -> Self {
        Self { tol_grad: 1e-9, max_iters: 500, max_step: 1.0 }
    }
}

#[derive(Clone, Debug)]
pub struct NcgOutcome {
    pub x: Vec<f64>,
    pub energy: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn matvec(h: &[f64], v: &[f64], out: &mut [f64]) {
    let m = v.len();
    for (i, o) in out.iter_mut().enumerate() {
        *o = dot(&h[i * m..(i + 1) * m], v);
    }
}

/// Approximately solves `H p = -g` by conjugate gradients, stopping early on
/// negative curvature. Returns `None` when the very first direction already
/// has non-positive curvature.
fn truncated_cg(h: &[f64], g: &[f64], tol: f64, max_iter: usize) -> Option<Vec<f64>> {
    let m = g.len();
    let mut p = vec![0.0; m];
    let mut r: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut d = r.clone();
    let mut hd = vec![0.0; m];
    let mut rr = dot(&r, &r);
    for it in 0..max_iter {
        if rr.sqrt() <= tol {
            break;
        }
        matvec(h, &d, &mut hd);
        let curv = dot(&d, &hd);
        if curv <= 1e-14 * dot(&d, &d) {
            if it == 0 {
                return None;
            }
            break;
        }
        let a = rr / curv;
        for i in 0..m {
            p[i] += a * d[i];
            r[i] -= a * hd[i];
        }
        let rr_new = dot(&r, &r);
        let b = rr_new / rr;
        rr = rr_new;
        for i in 0..m {
            d[i] = r[i] + b * d[i];
        }
    }
    Some(p)
}

/// Backtracking Armijo search along `p`. Returns the accepted point.
fn line_search(
    pot: &ScaledPotential,
    x: &[f64],
    f: f64,
    g: &[f64],
    p: &[f64],
) -> Option<(Vec<f64>, f64)> {
    let slope = dot(g, p);
    if slope >= 0.0 {
        return None;
    }
    // energy differences below this are rounding noise
    let noise = 64.0 * f64::EPSILON * f.abs().max(1.0);
    let mut a = 1.0;
    let mut trial = vec![0.0; x.len()];
    for _ in 0..60 {
        for i in 0..x.len() {
            trial[i] = x[i] + a * p[i];
        }
        if let Ok(ft) = pot.energy(&trial) {
            if ft <= f + 1e-4 * a * slope || (ft <= f + noise && -a * slope < noise) {
                return Some((trial, ft));
            }
        }
        a *= 0.5;
    }
    None
}

pub fn newton_cg(pot: &ScaledPotential, x0: &[f64], opts: &NcgOptions) -> Result<NcgOutcome> {
    let mut x = x0.to_vec();
    let mut f = pot.energy(&x)?;
    let mut g = pot.gradient(&x)?;
    let mut gn = max_abs(&g);
    let m = x.len();
    let mut iterations = 0;
    while gn >= opts.tol_grad && iterations < opts.max_iters {
        iterations += 1;
        let h = pot.hessian(&x)?;
        let g2 = dot(&g, &g).sqrt();
        let eta = 0.5_f64.min(g2.sqrt());
        let mut p = truncated_cg(&h, &g, eta * g2, 2 * m + 10).unwrap_or_else(|| g.iter().map(|v| -v).collect());
        let big = max_abs(&p);
        if big > opts.max_step {
            let s = opts.max_step / big;
            p.iter_mut().for_each(|v| *v *= s);
        }
        let step = line_search(pot, &x, f, &g, &p).or_else(|| {
            // fall back to steepest descent on a non-descent Newton direction
            let mut sd: Vec<f64> = g.iter().map(|v| -v).collect();
            let big = max_abs(&sd);
            if big > opts.max_step {
                let s = opts.max_step / big;
                sd.iter_mut().for_each(|v| *v *= s);
            }
            line_search(pot, &x, f, &g, &sd)
        });
        let Some((xn, fnew)) = step else { break };
        x = xn;
        f = fnew;
        pot.gradient_into(&x, &mut g)?;
        gn = max_abs(&g);
    }
    Ok(NcgOutcome { x, energy: f, grad_norm: gn, iterations, converged: gn < opts.tol_grad })
}
