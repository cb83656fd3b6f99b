//! Total potential energy, gradient and Hessian.
//!
//! The scaled energy is
//! `U/E0 = sum_j [z^2 + (b+d) x^2 + (b-d) y^2 + c (z^4 - 3 z^2 rho^2 + 3/8 rho^4)] + sum_{j<k} 1/r_jk`
//! with positions in units of `l0` and `c = beta C4 (l0/r_p0)^2`.

use crate::error::{Error, Result};
use crate::par::map_indices;
use crate::trap::{ScaledPotential, Trap};

/// Closest allowed approach of two ions, in units of l0.
pub const EPSILON_DIST: f64 = 1e-6;

impl ScaledPotential {
    fn external(&self, x: f64, y: f64, z: f64) -> f64 {
        let rho2 = x * x + y * y;
        let z2 = z * z;
        z2 + (self.beta + self.delta) * x * x
            + (self.beta - self.delta) * y * y
            + self.c4s * (z2 * z2 - 3.0 * z2 * rho2 + 0.375 * rho2 * rho2)
    }

    fn external_grad(&self, x: f64, y: f64, z: f64) -> [f64; 3] {
        let rho2 = x * x + y * y;
        let z2 = z * z;
        let c = self.c4s;
        [
            2.0 * (self.beta + self.delta) * x + c * x * (1.5 * rho2 - 6.0 * z2),
            2.0 * (self.beta - self.delta) * y + c * y * (1.5 * rho2 - 6.0 * z2),
            2.0 * z + c * z * (4.0 * z2 - 6.0 * rho2),
        ]
    }

    fn external_hess(&self, x: f64, y: f64, z: f64) -> [[f64; 3]; 3] {
        let c = self.c4s;
        let (x2, y2, z2) = (x * x, y * y, z * z);
        let xy = 3.0 * c * x * y;
        let xz = -12.0 * c * x * z;
        let yz = -12.0 * c * y * z;
        [
            [2.0 * (self.beta + self.delta) + c * (4.5 * x2 + 1.5 * y2 - 6.0 * z2), xy, xz],
            [xy, 2.0 * (self.beta - self.delta) + c * (1.5 * x2 + 4.5 * y2 - 6.0 * z2), yz],
            [xz, yz, 2.0 + c * (12.0 * z2 - 6.0 * (x2 + y2))],
        ]
    }

    fn check_len(x: &[f64]) -> Result<usize> {
        if x.len() % 3 != 0 {
            return Err(Error::Shape(format!("coordinate vector length {} is not a multiple of 3", x.len())));
        }
        Ok(x.len() / 3)
    }

    /// Scaled energy U/E0.
    pub fn energy(&self, x: &[f64]) -> Result<f64> {
        let n = Self::check_len(x)?;
        let rows = map_indices(n, |j| -> Result<f64> {
            let (xj, yj, zj) = (x[3 * j], x[3 * j + 1], x[3 * j + 2]);
            let mut s = 0.0;
            for k in j + 1..n {
                let dx = xj - x[3 * k];
                let dy = yj - x[3 * k + 1];
                let dz = zj - x[3 * k + 2];
                let r = (dx * dx + dy * dy + dz * dz).sqrt();
                if r < EPSILON_DIST {
                    return Err(Error::CoincidentIons { i: j, j: k, separation: r });
                }
                s += 1.0 / r;
            }
            Ok(s + self.external(xj, yj, zj))
        });
        let mut total = 0.0;
        for r in rows {
            total += r?;
        }
        Ok(total)
    }

    /// Gradient of the scaled energy, written into `out`.
    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let n = Self::check_len(x)?;
        if out.len() != x.len() {
            return Err(Error::Shape("gradient buffer has the wrong length".into()));
        }
        let rows = map_indices(n, |j| -> Result<[f64; 3]> {
            let (xj, yj, zj) = (x[3 * j], x[3 * j + 1], x[3 * j + 2]);
            let mut g = self.external_grad(xj, yj, zj);
            for k in 0..n {
                if k == j {
                    continue;
                }
                let dx = xj - x[3 * k];
                let dy = yj - x[3 * k + 1];
                let dz = zj - x[3 * k + 2];
                let r2 = dx * dx + dy * dy + dz * dz;
                let r = r2.sqrt();
                if r < EPSILON_DIST {
                    return Err(Error::CoincidentIons { i: j.min(k), j: j.max(k), separation: r });
                }
                let inv3 = 1.0 / (r2 * r);
                g[0] -= dx * inv3;
                g[1] -= dy * inv3;
                g[2] -= dz * inv3;
            }
            Ok(g)
        });
        for (j, g) in rows.into_iter().enumerate() {
            out[3 * j..3 * j + 3].copy_from_slice(&g?);
        }
        Ok(())
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut g = vec![0.0; x.len()];
        self.gradient_into(x, &mut g)?;
        Ok(g)
    }

    /// Dense Hessian of the scaled energy, row-major `3N x 3N`.
    pub fn hessian(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = Self::check_len(x)?;
        let m = 3 * n;
        let rows = map_indices(n, |j| -> Result<Vec<f64>> {
            // three full rows of the matrix belonging to ion j
            let mut block = vec![0.0; 3 * m];
            let (xj, yj, zj) = (x[3 * j], x[3 * j + 1], x[3 * j + 2]);
            let mut diag = self.external_hess(xj, yj, zj);
            for k in 0..n {
                if k == j {
                    continue;
                }
                let d = [xj - x[3 * k], yj - x[3 * k + 1], zj - x[3 * k + 2]];
                let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
                let r = r2.sqrt();
                if r < EPSILON_DIST {
                    return Err(Error::CoincidentIons { i: j.min(k), j: j.max(k), separation: r });
                }
                let inv3 = 1.0 / (r2 * r);
                let inv5 = inv3 / r2;
                for a in 0..3 {
                    for b in 0..3 {
                        // d^2 (1/r) / d a_j d b_k for j != k
                        let kron = if a == b { inv3 } else { 0.0 };
                        let c = kron - 3.0 * d[a] * d[b] * inv5;
                        block[a * m + 3 * k + b] = c;
                        diag[a][b] -= c;
                    }
                }
            }
            for a in 0..3 {
                for b in 0..3 {
                    block[a * m + 3 * j + b] = diag[a][b];
                }
            }
            Ok(block)
        });
        let mut h = Vec::with_capacity(m * m);
        for r in rows {
            h.extend_from_slice(&r?);
        }
        // enforce exact symmetry against rounding in the diagonal blocks
        for a in 0..m {
            for b in a + 1..m {
                let v = 0.5 * (h[a * m + b] + h[b * m + a]);
                h[a * m + b] = v;
                h[b * m + a] = v;
            }
        }
        Ok(h)
    }
}

fn to_scaled(positions_m: &[f64], trap: &Trap) -> Vec<f64> {
    let l0 = trap.derived.l0;
    positions_m.iter().map(|p| p / l0).collect()
}

/// Total potential energy in joules for positions in meters.
pub fn potential_energy(positions_m: &[f64], trap: &Trap) -> Result<f64> {
    Ok(trap.scaled().energy(&to_scaled(positions_m, trap))? * trap.derived.e0)
}

/// Gradient in newtons.
pub fn gradient(positions_m: &[f64], trap: &Trap) -> Result<Vec<f64>> {
    let s = trap.derived.e0 / trap.derived.l0;
    let g = trap.scaled().gradient(&to_scaled(positions_m, trap))?;
    Ok(g.into_iter().map(|v| v * s).collect())
}

/// Hessian in N/m, row-major.
pub fn hessian(positions_m: &[f64], trap: &Trap) -> Result<Vec<f64>> {
    let s = trap.derived.e0 / (trap.derived.l0 * trap.derived.l0);
    let h = trap.scaled().hessian(&to_scaled(positions_m, trap))?;
    Ok(h.into_iter().map(|v| v * s).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pot() -> ScaledPotential {
        ScaledPotential { beta: 0.3, delta: 0.02, c4s: 0.05 }
    }

    #[test]
    fn single_ion_at_origin() {
        assert_eq!(pot().energy(&[0.0, 0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(pot().gradient(&[0.0, 0.0, 0.0]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn harmonic_single_ion_hessian_is_diagonal() {
        let p = ScaledPotential { c4s: 0.0, ..pot() };
        let h = p.hessian(&[0.0; 3]).unwrap();
        let want = [2.0 * 0.32, 0.0, 0.0, 0.0, 2.0 * 0.28, 0.0, 0.0, 0.0, 2.0];
        for (a, b) in h.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn coincident_ions_error() {
        let x = [0.0, 0.0, 0.0, 0.0, 0.0, 1e-9];
        assert!(matches!(pot().energy(&x), Err(Error::CoincidentIons { i: 0, j: 1, .. })));
        assert!(matches!(pot().gradient(&x), Err(Error::CoincidentIons { .. })));
        assert!(matches!(pot().hessian(&x), Err(Error::CoincidentIons { .. })));
    }

    #[test]
    fn bad_length() {
        assert!(matches!(pot().energy(&[0.0; 4]), Err(Error::Shape(_))));
    }

    #[test]
    fn hessian_exactly_symmetric() {
        let x = [0.3, -0.2, 0.9, -1.1, 0.4, -0.3, 0.2, 1.3, 0.1];
        let h = pot().hessian(&x).unwrap();
        for a in 0..9 {
            for b in 0..9 {
                assert_eq!(h[a * 9 + b], h[b * 9 + a]);
            }
        }
    }
}
