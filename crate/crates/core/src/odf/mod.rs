//! Optical-dipole-force geometry and the effective spin models it induces.

mod exchange;
mod ising;
mod tipping;

pub use exchange::{dm_decomposition, exchange_couplings, ExchangeModel};
pub use ising::{
    ising_couplings, ising_decoupled, j_rel, multitone_ising, spin_motion_alpha, two_tone_couplings, Tone,
    TwoToneResult,
};
pub use tipping::{tipping_exact, tipping_meanfield, TippingCurve, TippingPoint};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::constants::TWO_PI;
use crate::crystal::{CrystalState, Layer};
use crate::error::{Error, Result};
use crate::modes::{Branch, ModeMetrics, ModeSet};

/// Smallest detuning accepted by the 1/delta closed forms, rad/s.
pub const DELTA_MIN: f64 = TWO_PI * 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SecondTone {
    /// N
    pub force: f64,
    /// rad/s
    pub mu_r: f64,
    /// Relative lattice phase, rad.
    pub phase: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdfConfig {
    /// Laser wavelength, m.
    pub wavelength: f64,
    /// Half-angle between the beams and the crystal plane, rad.
    pub theta: f64,
    /// Force amplitude F0, N.
    pub force: f64,
    /// Beat-note (difference) frequency, rad/s.
    pub mu_r: f64,
    pub second_tone: Option<SecondTone>,
    /// Transverse field Rabi frequency, rad/s.
    pub transverse_field: Option<f64>,
}

impl OdfConfig {
    pub fn new(wavelength: f64, theta: f64, force: f64, mu_r: f64) -> Result<Self> {
        if !(wavelength > 0.0 && wavelength.is_finite()) {
            return Err(Error::InvalidConfig("laser wavelength must be positive".into()));
        }
        if !(theta > 0.0 && theta < std::f64::consts::FRAC_PI_2) {
            return Err(Error::InvalidConfig(format!("theta_odf = {theta} rad is outside (0, pi/2)")));
        }
        if !(force >= 0.0 && force.is_finite()) {
            return Err(Error::InvalidConfig("force amplitude must be non-negative".into()));
        }
        if !mu_r.is_finite() {
            return Err(Error::InvalidConfig("mu_r must be finite".into()));
        }
        Ok(Self { wavelength, theta, force, mu_r, second_tone: None, transverse_field: None })
    }

    /// Wavevector difference along z, `2 k sin(theta)`.
    pub fn delta_k(&self) -> f64 {
        2.0 * (TWO_PI / self.wavelength) * self.theta.sin()
    }

    pub fn with_theta(&self, theta: f64) -> Result<Self> {
        let mut c = Self::new(self.wavelength, theta, self.force, self.mu_r)?;
        c.second_tone = self.second_tone;
        c.transverse_field = self.transverse_field;
        Ok(c)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseData {
    /// `phi_j = -dk z_j`, rad.
    pub phi: Vec<f64>,
    /// Mean interlayer phase in [0, 2 pi), when layer labels are known.
    pub interlayer: Option<f64>,
    pub delta_k: f64,
}

impl PhaseData {
    pub fn n_ions(&self) -> usize {
        self.phi.len()
    }

    /// `phi_j - phi_k`
    pub fn difference(&self, j: usize, k: usize) -> f64 {
        self.phi[j] - self.phi[k]
    }

    pub fn interlayer(&self) -> Result<f64> {
        self.interlayer.ok_or(Error::MissingLayers)
    }

    /// Histogram of pairwise differences wrapped to [-pi, pi), `bins` bins.
    pub fn difference_histogram(&self, bins: usize) -> Vec<usize> {
        let mut h = vec![0usize; bins.max(1)];
        let n = self.n_ions();
        for j in 0..n {
            for k in 0..n {
                if j == k {
                    continue;
                }
                let d = wrap_pi(self.difference(j, k));
                let b = (((d + std::f64::consts::PI) / TWO_PI) * h.len() as f64).floor() as usize;
                let last = h.len() - 1;
                h[b.min(last)] += 1;
            }
        }
        h
    }
}

/// Wraps an angle to [-pi, pi).
pub fn wrap_pi(x: f64) -> f64 {
    (x + std::f64::consts::PI).rem_euclid(TWO_PI) - std::f64::consts::PI
}

fn layer_heights(state: &CrystalState) -> Result<(f64, f64)> {
    let labels = state.layers()?;
    let mean = |which: Layer| -> Option<f64> {
        let zs: Vec<f64> = (0..state.n_ions()).filter(|&j| labels[j] == which).map(|j| state.z_m(j)).collect();
        (!zs.is_empty()).then(|| zs.iter().sum::<f64>() / zs.len() as f64)
    };
    match (mean(Layer::Upper), mean(Layer::Lower)) {
        (Some(u), Some(l)) => Ok((u, l)),
        _ => Err(Error::NotBilayer { clusters: 1 }),
    }
}

pub fn odf_phases(state: &CrystalState, odf: &OdfConfig) -> Result<PhaseData> {
    let dk = odf.delta_k();
    let phi = (0..state.n_ions()).map(|j| -dk * state.z_m(j)).collect();
    let interlayer = match state.layers {
        None => None,
        Some(_) => {
            let (zu, zl) = layer_heights(state)?;
            Some((-dk * (zu - zl)).rem_euclid(TWO_PI))
        }
    };
    Ok(PhaseData { phi, interlayer, delta_k: dk })
}

/// Interlayer phase as a function of beam angle for a labelled bilayer.
pub fn interlayer_phase(state: &CrystalState, odf: &OdfConfig, theta: f64) -> Result<f64> {
    let (zu, zl) = layer_heights(state)?;
    Ok((-odf.with_theta(theta)?.delta_k() * (zu - zl)).rem_euclid(TWO_PI))
}

/// Smallest beam angle in `window` (rad) giving the requested interlayer phase.
///
/// The phase winds monotonically with `sin(theta)`, so the admissible branches
/// `dk dz = c + 2 pi n` are enumerated and each is inverted in closed form.
pub fn solve_theta_for_phase(target: f64, state: &CrystalState, odf: &OdfConfig, window: (f64, f64)) -> Result<f64> {
    let (zu, zl) = layer_heights(state)?;
    let dz = zu - zl;
    if !(dz > 0.0) {
        return Err(Error::NotBilayer { clusters: 1 });
    }
    let (lo, hi) = window;
    if !(lo > 0.0 && hi > lo && hi < std::f64::consts::FRAC_PI_2) {
        return Err(Error::InvalidConfig("theta window must satisfy 0 < lo < hi < pi/2".into()));
    }
    // dk(theta) dz = (4 pi / lambda) sin(theta) dz must equal c + 2 pi n
    let scale = 2.0 * TWO_PI / odf.wavelength * dz;
    let c = (-target).rem_euclid(TWO_PI);
    let first = ((scale * lo.sin() - c) / TWO_PI).ceil().max(0.0) as u64;
    for n in first..first + 4 {
        let s = (c + TWO_PI * n as f64) / scale;
        if s > 1.0 {
            break;
        }
        let theta = s.asin();
        if theta < lo - 1e-15 {
            continue;
        }
        if theta > hi {
            break;
        }
        let resid = wrap_pi(interlayer_phase(state, odf, theta)? - target);
        if resid.abs() < 1e-9 {
            return Ok(theta);
        }
    }
    Err(Error::NoSolutionInWindow)
}

/// Which modes enter the coupling sums.
#[derive(Clone, Debug, PartialEq)]
pub enum ModeSelection {
    /// The axial branch only.
    Drumhead,
    /// All modes including the ExB branch, where the rotating-wave
    /// treatment of the drive is not reliable.
    IncludeExB,
    Only(Vec<usize>),
}

impl ModeSelection {
    pub fn resolve(&self, modes: &ModeSet) -> Result<Vec<usize>> {
        match self {
            ModeSelection::Drumhead => Ok(modes.branch_indices(Branch::Drumhead)),
            ModeSelection::IncludeExB => {
                log::warn!("including ExB modes: the rotating-wave approximation breaks down for them");
                let mut v = modes.branch_indices(Branch::ExB);
                v.extend(modes.branch_indices(Branch::Drumhead));
                Ok(v)
            }
            ModeSelection::Only(v) => {
                if let Some(&bad) = v.iter().find(|&&n| n >= modes.len()) {
                    return Err(Error::Shape(format!("mode index {bad} out of range")));
                }
                Ok(v.clone())
            }
        }
    }
}

/// Per-pair quantity `U e^{iD}` for mode `n`: `conj(u_j u_k^*) e^{i(phi_k - phi_j)}`
/// divided by `<u|u>`, so `U cos D` and `U sin D` are its real and imaginary parts.
pub(crate) fn pair_factor(modes: &ModeSet, n: usize, phases: &PhaseData, j: usize, k: usize) -> C64 {
    let m = &modes.modes[n];
    let uu: f64 = m.vector.iter().map(|c| c.norm_sqr()).sum();
    let w = m.z(j) * m.z(k).conj() / uu;
    w.conj() * C64::from_polar(1.0, phases.phi[k] - phases.phi[j])
}

pub(crate) fn check_inputs(modes: &ModeSet, metrics: &[ModeMetrics], phases: &PhaseData) -> Result<()> {
    if metrics.len() != modes.len() {
        return Err(Error::Shape("one metrics entry per mode is required".into()));
    }
    if phases.n_ions() != modes.n_ions {
        return Err(Error::Shape("phase data and modes describe different crystals".into()));
    }
    Ok(())
}

/// Dense `N x N` coupling coefficients with their provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingMatrix {
    pub n: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    pub meta: CouplingMeta,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CouplingMeta {
    pub kind: String,
    pub units: String,
    pub modes: Vec<usize>,
    /// rad/s
    pub detunings: Vec<f64>,
    /// s
    pub time: Option<f64>,
    pub note: Option<String>,
}

impl CouplingMatrix {
    pub fn zeros(n: usize, meta: CouplingMeta) -> Self {
        Self { n, re: vec![0.0; n * n], im: vec![0.0; n * n], meta }
    }

    pub fn from_real(n: usize, re: Vec<f64>, meta: CouplingMeta) -> Self {
        Self { n, im: vec![0.0; n * n], re, meta }
    }

    pub fn get(&self, j: usize, k: usize) -> C64 {
        C64::new(self.re[j * self.n + k], self.im[j * self.n + k])
    }

    pub fn real(&self, j: usize, k: usize) -> f64 {
        self.re[j * self.n + k]
    }

    pub fn is_real(&self) -> bool {
        self.im.iter().all(|&v| v == 0.0)
    }

    /// Entry-wise scaling, e.g. to turn phases into rates.
    pub fn scaled(&self, s: f64, kind: &str, units: &str) -> Self {
        let mut meta = self.meta.clone();
        meta.kind = kind.into();
        meta.units = units.into();
        Self {
            n: self.n,
            re: self.re.iter().map(|v| v * s).collect(),
            im: self.im.iter().map(|v| v * s).collect(),
            meta,
        }
    }

    /// Largest `|J_jk - conj(J_kj)|` relative to the largest entry.
    pub fn hermiticity_error(&self) -> f64 {
        let mut worst = 0.0_f64;
        let mut big = 0.0_f64;
        for j in 0..self.n {
            for k in 0..self.n {
                worst = worst.max((self.get(j, k) - self.get(k, j).conj()).norm());
                big = big.max(self.get(j, k).norm());
            }
        }
        if big == 0.0 {
            0.0
        } else {
            worst / big
        }
    }

    /// Entries with row ion in layer `a` and column ion in layer `b`.
    pub fn block(&self, labels: &[Layer], a: Layer, b: Layer) -> Vec<C64> {
        let mut out = Vec::new();
        for j in 0..self.n {
            for k in 0..self.n {
                if j != k && labels[j] == a && labels[k] == b {
                    out.push(self.get(j, k));
                }
            }
        }
        out
    }

    pub fn block_frobenius(&self, labels: &[Layer], a: Layer, b: Layer) -> f64 {
        self.block(labels, a, b).iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Symmetrized real part `(J_jk + J_kj) / 2`.
    pub fn symmetric_real(&self) -> Vec<f64> {
        let n = self.n;
        let mut s = vec![0.0; n * n];
        for j in 0..n {
            for k in 0..n {
                s[j * n + k] = 0.5 * (self.real(j, k) + self.real(k, j));
            }
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Out<'a> {
            meta: &'a CouplingMeta,
            real: Vec<&'a [f64]>,
            imag: Vec<&'a [f64]>,
        }
        let out = Out {
            meta: &self.meta,
            real: self.re.chunks(self.n.max(1)).collect(),
            imag: self.im.chunks(self.n.max(1)).collect(),
        };
        Ok(serde_json::to_string(&out)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct In {
            meta: CouplingMeta,
            real: Vec<Vec<f64>>,
            imag: Vec<Vec<f64>>,
        }
        let v: In = serde_json::from_str(text)?;
        let n = v.real.len();
        if v.imag.len() != n || v.real.iter().chain(&v.imag).any(|r| r.len() != n) {
            return Err(Error::Shape("coupling matrix must be square".into()));
        }
        Ok(Self {
            n,
            re: v.real.into_iter().flatten().collect(),
            im: v.imag.into_iter().flatten().collect(),
            meta: v.meta,
        })
    }

    /// Long-format CSV heatmap: `j,k,real,imag`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("j,k,real,imag\n");
        for j in 0..self.n {
            for k in 0..self.n {
                s.push_str(&format!("{j},{k},{:.9e},{:.9e}\n", self.real(j, k), self.im[j * self.n + k]));
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trap::{IonSpecies, Trap, TrapConfig};

    fn two_layer() -> CrystalState {
        let trap = Trap::new(TrapConfig::bilayer_base(4, 210e3, 0.0), IonSpecies::beryllium9()).unwrap();
        let l0 = trap.derived.l0;
        let h = 5.55e-6 / l0;
        let pos = vec![0.0, 0.0, h, 1.0, 0.0, h, 0.0, 0.0, -h, 1.0, 0.3, -h];
        CrystalState::from_scaled(trap, pos, None)
            .unwrap()
            .with_layers(vec![Layer::Upper, Layer::Upper, Layer::Lower, Layer::Lower])
            .unwrap()
    }

    fn odf(theta_deg: f64) -> OdfConfig {
        OdfConfig::new(313e-9, theta_deg.to_radians(), 1e-23, 1e7).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(OdfConfig::new(313e-9, 0.0, 1.0, 0.0).is_err());
        assert!(OdfConfig::new(313e-9, 1.6, 1.0, 0.0).is_err());
        assert!(OdfConfig::new(313e-9, 0.1, -1.0, 0.0).is_err());
        assert!(OdfConfig::new(0.0, 0.1, 1.0, 0.0).is_err());
    }

    #[test]
    fn coplanar_ions_share_a_phase() {
        let trap = Trap::new(TrapConfig::bilayer_base(3, 210e3, 0.0), IonSpecies::beryllium9()).unwrap();
        let s = CrystalState::from_scaled(trap, vec![0.0, 0.0, 0.1, 1.0, 0.0, 0.1, 0.0, 1.0, 0.1], None).unwrap();
        let p = odf_phases(&s, &odf(1.0)).unwrap();
        assert_eq!(p.interlayer, None);
        assert!(matches!(p.interlayer(), Err(Error::MissingLayers)));
        for j in 0..3 {
            for k in 0..3 {
                assert_eq!(p.difference(j, k), 0.0);
            }
        }
    }

    #[test]
    fn theta_round_trip() {
        let s = two_layer();
        let o = odf(1.0);
        let th0 = 0.93f64.to_radians();
        let target = interlayer_phase(&s, &o, th0).unwrap();
        let th = solve_theta_for_phase(target, &s, &o, (0.9f64.to_radians(), 1.5f64.to_radians())).unwrap();
        assert!((th - th0).abs() < 1e-12);
        let p = odf_phases(&s, &o.with_theta(th).unwrap()).unwrap();
        assert!(wrap_pi(p.interlayer().unwrap() - target).abs() < 1e-9);
    }

    #[test]
    fn no_solution_in_tiny_window() {
        let s = two_layer();
        let o = odf(1.0);
        let r = solve_theta_for_phase(0.0, &s, &o, (1.0f64.to_radians(), 1.0001f64.to_radians()));
        assert!(matches!(r, Err(Error::NoSolutionInWindow)));
    }

    #[test]
    fn coupling_json_round_trip() {
        let mut c = CouplingMatrix::zeros(2, CouplingMeta { kind: "test".into(), ..Default::default() });
        c.re[1] = 2.5;
        c.im[2] = -1.0;
        let back = CouplingMatrix::from_json(&c.to_json().unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
