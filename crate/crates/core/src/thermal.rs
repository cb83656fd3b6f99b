//! Thermal occupations, axial position spread and Lamb-Dicke parameters.

use crate::constants::{BOLTZMANN, HBAR};
use crate::error::{Error, Result};
use crate::modes::{Branch, ModeMetrics, ModeSet};
use crate::par;

#[derive(Clone, Debug, PartialEq)]
pub enum ThermalSpec {
    /// Every mode at one temperature, K.
    Temperature(f64),
    /// One mean occupation per mode.
    Occupations(Vec<f64>),
}

impl ThermalSpec {
    pub fn occupations(&self, modes: &ModeSet) -> Result<Vec<f64>> {
        match self {
            ThermalSpec::Temperature(t) => modes.modes.iter().map(|m| mode_occupation(*t, m.omega)).collect(),
            ThermalSpec::Occupations(n) => {
                if n.len() != modes.len() {
                    return Err(Error::Shape("one occupation per mode is required".into()));
                }
                if n.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                    return Err(Error::InvalidConfig("mode occupations must be finite and non-negative".into()));
                }
                Ok(n.clone())
            }
        }
    }
}

/// Bose-Einstein occupation of a mode at angular frequency `omega`.
pub fn mode_occupation(temperature: f64, omega: f64) -> Result<f64> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::InvalidConfig(format!("temperature {temperature} K must be positive")));
    }
    if !(omega > 0.0) {
        return Err(Error::InvalidConfig("mode frequency must be positive".into()));
    }
    let x = HBAR * omega / (BOLTZMANN * temperature);
    Ok(if x > 700.0 { 0.0 } else { 1.0 / x.exp_m1() })
}

/// `<z_j^2>` in m^2 for every ion, optionally restricted to one branch.
pub fn z_variance(modes: &ModeSet, metrics: &[ModeMetrics], spec: &ThermalSpec, branch: Option<Branch>) -> Result<Vec<f64>> {
    if metrics.len() != modes.len() {
        return Err(Error::Shape("one metrics entry per mode is required".into()));
    }
    let nbar = spec.occupations(modes)?;
    let used: Vec<usize> = (0..modes.len()).filter(|&n| branch.map_or(true, |b| modes.modes[n].branch == b)).collect();
    let weight: Vec<f64> = used.iter().map(|&n| metrics[n].c.powi(2) * (2.0 * nbar[n] + 1.0)).collect();
    Ok(par::map_indices(modes.n_ions, |j| used.iter().zip(&weight).map(|(&n, w)| w * modes.modes[n].z(j).norm_sqr()).sum()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct LambDicke {
    pub eta: Vec<f64>,
    /// m
    pub z_rms: Vec<f64>,
    pub max: f64,
    pub mean: f64,
}

impl LambDicke {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("ion_index,z_rms_nm,eta\n");
        for (j, (z, e)) in self.z_rms.iter().zip(&self.eta).enumerate() {
            s.push_str(&format!("{j},{:.6},{:.8}\n", z * 1e9, e));
        }
        s
    }
}

/// `eta_j = dk sqrt(<z_j^2>)` for a lattice with wavevector difference `delta_k` (1/m).
pub fn lamb_dicke(z_var: &[f64], delta_k: f64) -> LambDicke {
    let z_rms: Vec<f64> = z_var.iter().map(|v| v.sqrt()).collect();
    let eta: Vec<f64> = z_rms.iter().map(|z| delta_k * z).collect();
    let max = eta.iter().copied().fold(0.0, f64::max);
    let mean = if eta.is_empty() { 0.0 } else { eta.iter().sum::<f64>() / eta.len() as f64 };
    LambDicke { eta, z_rms, max, mean }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn occupation_limits() {
        assert_eq!(mode_occupation(1e-9, 1e8).unwrap(), 0.0);
        let hot = mode_occupation(1.0, 1e3).unwrap();
        let classical = BOLTZMANN / (HBAR * 1e3);
        assert!((hot / classical - 1.0).abs() < 1e-3);
        assert!(mode_occupation(0.0, 1.0).is_err());
        assert!(mode_occupation(1.0, -1.0).is_err());
    }

    #[test]
    fn lamb_dicke_vanishes_without_wavevector() {
        let l = lamb_dicke(&[1e-16, 4e-16], 0.0);
        assert_eq!(l.max, 0.0);
        let l = lamb_dicke(&[1e-16, 4e-16], 1e6);
        assert!((l.max - 0.02).abs() < 1e-15);
        assert!(l.to_csv().starts_with("ion_index,z_rms_nm,eta\n"));
    }
}
