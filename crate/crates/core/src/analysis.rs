//! Glue that turns a crystal plus a drive description into resolved inputs
//! for the spin-model calculations.

use serde::Serialize;

use crate::config::{CoupleModes, ModeTarget, OdfSpec};
use crate::constants::TWO_PI;
use crate::crystal::CrystalState;
use crate::error::{Error, Result};
use crate::modes::{identify_special_modes, mode_metrics, solve_modes, stiffness_matrix, ModeMetrics, ModeSet, SpecialModes, Stiffness};
use crate::odf::{interlayer_phase, odf_phases, solve_theta_for_phase, ModeSelection, OdfConfig, PhaseData};

/// Beam-angle search window used when a target interlayer phase is given, rad.
pub const THETA_WINDOW: (f64, f64) = (0.5 * std::f64::consts::PI / 180.0, 1.5 * std::f64::consts::PI / 180.0);

pub struct ModeAnalysis {
    pub stiffness: Stiffness,
    pub modes: ModeSet,
    pub metrics: Vec<ModeMetrics>,
    pub special: SpecialModes,
}

pub fn analyze_modes(state: &CrystalState) -> Result<ModeAnalysis> {
    let stiffness = stiffness_matrix(state)?;
    let modes = solve_modes(&stiffness, &state.trap)?;
    let metrics = mode_metrics(&modes, &stiffness);
    let special = identify_special_modes(&modes, state)?;
    Ok(ModeAnalysis { stiffness, modes, metrics, special })
}

impl ModeAnalysis {
    pub fn target_index(&self, target: ModeTarget) -> Result<usize> {
        match target {
            ModeTarget::CenterOfMass => Ok(self.special.center_of_mass),
            ModeTarget::Breathing => self.special.breathing(),
            ModeTarget::Index(n) if n < self.modes.len() => Ok(n),
            ModeTarget::Index(n) => Err(Error::InvalidConfig(format!("target mode {n} does not exist"))),
        }
    }
}

/// A drive tied to a particular crystal and mode set.
#[derive(Clone, Debug, Serialize)]
pub struct ResolvedDrive {
    pub odf: OdfConfig,
    /// rad
    pub theta: f64,
    /// Interlayer phase, rad, when the crystal has layer labels.
    pub phi: Option<f64>,
    /// Interaction time, s.
    pub tau: f64,
    pub target_mode: usize,
    /// Detuning of the first tone from its target mode, rad/s.
    pub detuning: f64,
    #[serde(skip)]
    pub phases: PhaseData,
    #[serde(skip)]
    pub selection: ModeSelection,
}

/// Fixes the beam angle, drive frequencies and interaction time. Without an
/// explicit time the first decoupling time `2 pi / |delta|` is used.
pub fn resolve_drive(spec: &OdfSpec, state: &CrystalState, analysis: &ModeAnalysis) -> Result<ResolvedDrive> {
    let target_mode = analysis.target_index(spec.target_mode.unwrap_or(ModeTarget::CenterOfMass))?;
    let omega0 = analysis.modes.modes[target_mode].omega;
    let omega1 = match spec.tone1 {
        Some(_) => analysis.modes.modes[analysis.special.breathing()?].omega,
        None => omega0,
    };
    // the angle only enters through dk, so a provisional config is enough to solve for it
    let provisional = spec.to_config(1f64.to_radians(), omega0, omega1)?;
    let theta = match (spec.theta, spec.phi_target) {
        (Some(t), _) => t,
        (None, Some(phi)) => solve_theta_for_phase(phi, state, &provisional, THETA_WINDOW)?,
        (None, None) => return Err(Error::InvalidConfig("give theta_odf_deg or phi_target_deg".into())),
    };
    let odf = spec.to_config(theta, omega0, omega1)?;
    let phases = odf_phases(state, &odf)?;
    let phi = match state.layers {
        Some(_) => Some(interlayer_phase(state, &odf, theta)?),
        None => None,
    };
    let detuning = odf.mu_r - omega0;
    let tau = match spec.tau {
        Some(t) => t,
        None if detuning != 0.0 => TWO_PI / detuning.abs(),
        None => return Err(Error::ResonantMode { index: target_mode, detuning }),
    };
    let selection = match spec.couple_modes {
        CoupleModes::Drumhead => ModeSelection::Drumhead,
        CoupleModes::Target => ModeSelection::Only(vec![target_mode]),
        CoupleModes::All => ModeSelection::IncludeExB,
    };
    Ok(ResolvedDrive { odf, theta, phi, tau, target_mode, detuning, phases, selection })
}

/// Histogram bin widths tied to the ODF lattice at a 1 degree beam angle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Binning {
    /// m, for display histograms.
    pub display: f64,
    /// m, ten times finer, for entropy.
    pub entropy: f64,
    /// m, minimum gap between layers.
    pub gap_min: f64,
}

impl Binning {
    pub fn for_wavelength(laser_wavelength: f64) -> Self {
        let period = crate::crystal::odf_lattice_period(laser_wavelength, 1f64.to_radians());
        Self { display: period / 20.0, entropy: period / 200.0, gap_min: period / 10.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EntropyStats {
    pub mean: f64,
    pub std: f64,
    pub values: Vec<f64>,
}

/// Entropy of the z distribution averaged over the kept runs of an ensemble.
pub fn ensemble_entropy(ensemble: &crate::basin::Ensemble, bin_width: f64) -> Result<EntropyStats> {
    let values = ensemble
        .kept()
        .iter()
        .map(|r| crate::crystal::z_histogram(&r.state, bin_width, 0.0).map(|h| crate::crystal::entropy(&h)))
        .collect::<Result<Vec<_>>>()?;
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    Ok(EntropyStats { mean, std, values })
}
