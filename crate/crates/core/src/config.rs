//! Flat `key = value` configuration files with `#` comments.
//!
//! Frequencies are written as ordinary frequencies in Hz and converted to
//! angular frequencies on load.

use std::collections::BTreeMap;
use std::path::Path;

use crate::basin::OptimizerConfig;
use crate::constants::TWO_PI;
use crate::error::{Error, Result};
use crate::odf::{OdfConfig, SecondTone};
use crate::trap::{IonSpecies, TrapConfig};

#[derive(Clone, Debug, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, (usize, String)>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .or_else(|| line.split_once(':'))
                .ok_or_else(|| Error::InvalidConfig(format!("line {}: expected key = value", lineno + 1)))?;
            let key = k.trim().to_ascii_lowercase();
            if key.is_empty() {
                return Err(Error::InvalidConfig(format!("line {}: empty key", lineno + 1)));
            }
            if entries.insert(key.clone(), (lineno + 1, v.trim().to_string())).is_some() {
                return Err(Error::InvalidConfig(format!("line {}: duplicate key '{key}'", lineno + 1)));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn insert(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), (0, value.to_string()));
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse::<f64>()
                .map(Some)
                .map_err(|_| Error::InvalidConfig(format!("line {line}: '{key}' is not a number: {v}"))),
        }
    }

    pub fn usize(&self, key: &str) -> Result<Option<usize>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse::<usize>()
                .map(Some)
                .map_err(|_| Error::InvalidConfig(format!("line {line}: '{key}' is not a count: {v}"))),
        }
    }

    pub fn u64(&self, key: &str) -> Result<Option<u64>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse::<u64>()
                .map(Some)
                .map_err(|_| Error::InvalidConfig(format!("line {line}: '{key}' is not an integer: {v}"))),
        }
    }

    pub fn require_f64(&self, key: &str) -> Result<f64> {
        self.f64(key)?
            .ok_or_else(|| Error::InvalidConfig(format!("missing required key '{key}'")))
    }

    /// Rejects keys outside `known`, which catches typos early.
    pub fn check_known(&self, known: &[&str]) -> Result<()> {
        let unknown: Vec<&str> = self.keys().filter(|k| !known.contains(k)).collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("unknown key(s): {}", unknown.join(", "))))
        }
    }
}

pub const TRAP_KEYS: &[&str] = &[
    "bz_tesla",
    "omega_z_hz",
    "axial_voltage",
    "omega_r_hz",
    "delta_wall",
    "c4",
    "n_ions",
    "species",
];

pub const OPTIMIZER_KEYS: &[&str] = &[
    "n_steps",
    "t_start",
    "alpha_x",
    "alpha_z",
    "adapt_alpha",
    "n_runs",
    "keep_lowest",
    "tol_grad",
    "max_ncg_iters",
    "seed",
];

pub const ODF_KEYS: &[&str] = &[
    "wavelength_nm",
    "theta_odf_deg",
    "phi_target_deg",
    "f0_newton",
    "mu_r_hz",
    "detuning_hz",
    "target_mode",
    "tau_us",
    "f1_newton",
    "mu_r1_hz",
    "detuning1_hz",
    "phase0_deg",
    "b0_hz",
    "temperature_k",
    "couple_modes",
];

pub fn species_from(kv: &KeyValues) -> Result<IonSpecies> {
    match kv.str("species") {
        None => Ok(IonSpecies::beryllium9()),
        Some(name) => IonSpecies::by_name(name),
    }
}

pub fn trap_from(kv: &KeyValues) -> Result<TrapConfig> {
    let species = species_from(kv)?;
    let bz = kv.require_f64("bz_tesla")?;
    let omega_r = TWO_PI * kv.require_f64("omega_r_hz")?;
    let delta_wall = kv.f64("delta_wall")?.unwrap_or(0.0);
    let c4 = kv.f64("c4")?.unwrap_or(0.0);
    let n_ions = kv
        .usize("n_ions")?
        .ok_or_else(|| Error::InvalidConfig("missing required key 'n_ions'".into()))?;
    match (kv.f64("omega_z_hz")?, kv.f64("axial_voltage")?) {
        (Some(fz), None) => Ok(TrapConfig {
            bz,
            omega_z: TWO_PI * fz,
            omega_r,
            delta_wall,
            c4,
            n_ions,
        }),
        (None, Some(vz)) => TrapConfig::from_axial_voltage(bz, vz, omega_r, delta_wall, c4, n_ions, &species),
        (Some(_), Some(_)) => Err(Error::InvalidConfig(
            "give either omega_z_hz or axial_voltage, not both".into(),
        )),
        (None, None) => Err(Error::InvalidConfig("missing required key 'omega_z_hz'".into())),
    }
}

pub fn optimizer_from(kv: &KeyValues) -> Result<OptimizerConfig> {
    let mut c = OptimizerConfig::default();
    if let Some(v) = kv.usize("n_steps")? {
        c.n_steps = v;
    }
    if let Some(v) = kv.f64("t_start")? {
        c.t_start = v;
    }
    if let Some(v) = kv.f64("alpha_x")? {
        c.alpha_x = v;
    }
    c.alpha_z = kv.f64("alpha_z")?;
    if let Some(v) = kv.str("adapt_alpha") {
        c.adapt_alpha = parse_bool(v)?;
    }
    if let Some(v) = kv.usize("n_runs")? {
        c.n_runs = v;
    }
    if let Some(v) = kv.usize("keep_lowest")? {
        c.keep_lowest = v;
    }
    if let Some(v) = kv.f64("tol_grad")? {
        c.tol_grad = v;
    }
    if let Some(v) = kv.usize("max_ncg_iters")? {
        c.max_ncg_iters = v;
    }
    if let Some(v) = kv.u64("seed")? {
        c.seed = v;
    }
    c.validate()?;
    Ok(c)
}

/// Reads the drive description. `mu_r_hz` is absolute; `detuning_hz` is
/// relative to the mode named by `target_mode` and is resolved later.
pub fn odf_from(kv: &KeyValues) -> Result<OdfSpec> {
    let wavelength = kv
        .f64("wavelength_nm")?
        .ok_or_else(|| Error::InvalidConfig("missing required key 'wavelength_nm' (313 is a common Be+ choice)".into()))?
        * 1e-9;
    let theta = kv.f64("theta_odf_deg")?.map(f64::to_radians);
    let phi_target = kv.f64("phi_target_deg")?.map(f64::to_radians);
    if theta.is_some() && phi_target.is_some() {
        return Err(Error::InvalidConfig("give either theta_odf_deg or phi_target_deg".into()));
    }
    let force = kv.f64("f0_newton")?.unwrap_or(0.0);
    let tone0 = drive_from(kv.f64("mu_r_hz")?, kv.f64("detuning_hz")?, "mu_r_hz", "detuning_hz")?;
    let tone1 = match kv.f64("f1_newton")? {
        None => None,
        Some(f1) => Some((
            f1,
            drive_from(kv.f64("mu_r1_hz")?, kv.f64("detuning1_hz")?, "mu_r1_hz", "detuning1_hz")?,
            kv.f64("phase0_deg")?.unwrap_or(0.0).to_radians(),
        )),
    };
    let target_mode = match kv.str("target_mode") {
        None => None,
        Some(s) => Some(ModeTarget::parse(s)?),
    };
    let couple_modes = match kv.str("couple_modes") {
        None => CoupleModes::Drumhead,
        Some(v) => CoupleModes::parse(v)?,
    };
    Ok(OdfSpec {
        wavelength,
        theta,
        phi_target,
        force,
        tone0,
        tone1,
        target_mode,
        tau: kv.f64("tau_us")?.map(|t| t * 1e-6),
        b0: kv.f64("b0_hz")?.map(|f| TWO_PI * f),
        temperature: kv.f64("temperature_k")?,
        couple_modes,
    })
}

fn drive_from(mu: Option<f64>, det: Option<f64>, kmu: &str, kdet: &str) -> Result<Drive> {
    match (mu, det) {
        (Some(m), None) => Ok(Drive::Absolute(TWO_PI * m)),
        (None, Some(d)) => Ok(Drive::Detuning(TWO_PI * d)),
        (None, None) => Err(Error::InvalidConfig(format!("give '{kmu}' or '{kdet}'"))),
        (Some(_), Some(_)) => Err(Error::InvalidConfig(format!("'{kmu}' and '{kdet}' are exclusive"))),
    }
}

fn parse_bool(v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(Error::InvalidConfig(format!("not a boolean: {v}"))),
    }
}

/// Drive frequency given either absolutely or as a detuning from a mode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Drive {
    Absolute(f64),
    Detuning(f64),
}

impl Drive {
    pub fn resolve(self, mode_omega: f64) -> f64 {
        match self {
            Drive::Absolute(mu) => mu,
            Drive::Detuning(d) => mode_omega + d,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModeTarget {
    CenterOfMass,
    Breathing,
    Index(usize),
}

impl ModeTarget {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cm" | "com" | "center_of_mass" => Ok(Self::CenterOfMass),
            "bre" | "breathing" => Ok(Self::Breathing),
            other => other
                .parse::<usize>()
                .map(Self::Index)
                .map_err(|_| Error::InvalidConfig(format!("target_mode must be cm, breathing or an index: {s}"))),
        }
    }
}

/// Which modes mediate the spin couplings.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoupleModes {
    /// The whole axial branch.
    Drumhead,
    /// Only the mode named by `target_mode`.
    Target,
    /// Every mode including the ExB branch.
    All,
}

impl CoupleModes {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "drumhead" => Ok(Self::Drumhead),
            "target" | "single" => Ok(Self::Target),
            "all" => Ok(Self::All),
            _ => Err(Error::InvalidConfig(format!("couple_modes must be drumhead, target or all: {s}"))),
        }
    }
}

/// Drive description before it is tied to a particular mode set.
#[derive(Clone, Debug, PartialEq)]
pub struct OdfSpec {
    pub wavelength: f64,
    pub theta: Option<f64>,
    pub phi_target: Option<f64>,
    pub force: f64,
    pub tone0: Drive,
    pub tone1: Option<(f64, Drive, f64)>,
    pub target_mode: Option<ModeTarget>,
    pub tau: Option<f64>,
    pub b0: Option<f64>,
    pub temperature: Option<f64>,
    pub couple_modes: CoupleModes,
}

impl OdfSpec {
    /// Fixes the drive frequencies once the reference mode frequencies are known.
    /// `omega0` is the frequency of the first tone's reference mode and `omega1`
    /// that of the second tone.
    pub fn to_config(&self, theta: f64, omega0: f64, omega1: f64) -> Result<OdfConfig> {
        let second = self.tone1.map(|(force, drive, phase)| SecondTone {
            force,
            mu_r: drive.resolve(omega1),
            phase,
        });
        OdfConfig::new(self.wavelength, theta, self.force, self.tone0.resolve(omega0))
            .map(|c| OdfConfig { second_tone: second, transverse_field: self.b0, ..c })
    }
}
