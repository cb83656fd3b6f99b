//! Trap parameters, derived frequencies and the dimensionless unit system.
//!
//! Internally lengths are measured in `l0`, energies in `E0` and times in
//! `1/omega_z`. SI values only appear at the API boundary.

use serde::{Deserialize, Serialize};

use crate::constants::{ATOMIC_MASS_UNIT, COULOMB_CONSTANT, ELEMENTARY_CHARGE, TWO_PI};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IonSpecies {
    pub name: String,
    /// kg
    pub mass: f64,
    /// C
    pub charge: f64,
}

impl IonSpecies {
    pub fn new(name: impl Into<String>, mass: f64, charge: f64) -> Result<Self> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::InvalidConfig(format!("ion mass must be positive, got {mass}")));
        }
        if !(charge > 0.0 && charge.is_finite()) {
            return Err(Error::InvalidConfig(format!("ion charge must be positive, got {charge}")));
        }
        Ok(Self { name: name.into(), mass, charge })
    }

    /// Singly ionized beryllium-9.
    pub fn beryllium9() -> Self {
        Self {
            name: "Be9+".to_string(),
            mass: 9.012_182 * ATOMIC_MASS_UNIT,
            charge: ELEMENTARY_CHARGE,
        }
    }

    /// Looks up a species by name. Only beryllium is built in.
    pub fn by_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "be9+" | "be9" | "be+" | "9be+" | "beryllium" => Ok(Self::beryllium9()),
            other => Err(Error::InvalidConfig(format!("unknown ion species '{other}'"))),
        }
    }
}

impl Default for IonSpecies {
    fn default() -> Self {
        Self::beryllium9()
    }
}

/// Physical trap settings. Frequencies are angular (rad/s).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrapConfig {
    /// Axial magnetic field, T.
    pub bz: f64,
    pub omega_z: f64,
    pub omega_r: f64,
    pub delta_wall: f64,
    pub c4: f64,
    pub n_ions: usize,
}

impl TrapConfig {
    /// Builds a config from ordinary frequencies in Hz.
    pub fn from_hz(bz: f64, fz: f64, fr: f64, delta_wall: f64, c4: f64, n_ions: usize) -> Self {
        Self {
            bz,
            omega_z: TWO_PI * fz,
            omega_r: TWO_PI * fr,
            delta_wall,
            c4,
            n_ions,
        }
    }

    /// Builds a config from the axial voltage amplitude (V/m^2), using
    /// omega_z = sqrt(2 e V_z / m).
    pub fn from_axial_voltage(
        bz: f64,
        vz: f64,
        omega_r: f64,
        delta_wall: f64,
        c4: f64,
        n_ions: usize,
        species: &IonSpecies,
    ) -> Result<Self> {
        if !(vz > 0.0) {
            return Err(Error::InvalidConfig(format!("axial voltage must be positive, got {vz}")));
        }
        let omega_z = (2.0 * species.charge * vz / species.mass).sqrt();
        Ok(Self { bz, omega_z, omega_r, delta_wall, c4, n_ions })
    }

    /// Base parameters of the two-layer study: 4.4588 T, 1.62 MHz axial,
    /// wall strength 0.00183.
    pub fn bilayer_base(n_ions: usize, fr_hz: f64, c4: f64) -> Self {
        Self::from_hz(4.4588, 1.62e6, fr_hz, 0.00183, c4, n_ions)
    }

    fn check(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(what.to_string()));
        if !(self.bz > 0.0 && self.bz.is_finite()) {
            return bad("bz must be positive");
        }
        if !(self.omega_z > 0.0 && self.omega_z.is_finite()) {
            return bad("omega_z must be positive");
        }
        if !(self.delta_wall >= 0.0 && self.delta_wall.is_finite()) {
            return bad("delta_wall must be non-negative");
        }
        if !self.c4.is_finite() {
            return bad("c4 must be finite");
        }
        if self.n_ions < 1 {
            return bad("n_ions must be at least 1");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    pub omega_c: f64,
    pub omega_c_prime: f64,
    pub omega_perp: f64,
    pub beta: f64,
    pub beta_c: f64,
    pub beta_ratio: f64,
    /// Wigner-Seitz radius, m.
    pub a0: f64,
    /// Plasma radius, m.
    pub r_p0: f64,
    /// Length scale, m.
    pub l0: f64,
    /// Energy scale, J.
    pub e0: f64,
}

pub fn derive_parameters(trap: &TrapConfig, species: &IonSpecies) -> Result<DerivedParams> {
    trap.check()?;
    let m = species.mass;
    let q = species.charge;
    let omega_c = q * trap.bz / m;
    if !(trap.omega_r > 0.0 && trap.omega_r < omega_c) {
        return Err(Error::RotationOutOfRange { omega_r: trap.omega_r, omega_c });
    }
    let wz2 = trap.omega_z * trap.omega_z;
    let beta = trap.omega_r * (omega_c - trap.omega_r) / wz2 - 0.5;
    let perp2 = trap.omega_r * (omega_c - trap.omega_r) - 0.5 * wz2;
    if perp2 <= 0.0 {
        return Err(Error::RadialUnconfined { beta });
    }
    // a positive quartic term still confines at large radius
    if trap.delta_wall >= beta && trap.c4 <= 0.0 {
        return Err(Error::WallTooStrong { delta: trap.delta_wall, beta });
    }
    let n = trap.n_ions as f64;
    let beta_c = 0.665 / n.sqrt();
    let kq2 = COULOMB_CONSTANT * q * q;
    let a0 = (kq2 / (m * perp2)).cbrt();
    let r_p0 = (3.0 * std::f64::consts::PI * n / 4.0).cbrt() * a0;
    let l0 = (2.0 * kq2 / (m * wz2)).cbrt();
    let e0 = 0.5 * m * l0 * l0 * wz2;
    Ok(DerivedParams {
        omega_c,
        omega_c_prime: omega_c - 2.0 * trap.omega_r,
        omega_perp: perp2.sqrt(),
        beta,
        beta_c,
        beta_ratio: beta / beta_c,
        a0,
        r_p0,
        l0,
        e0,
    })
}

/// Rotation frequency (rad/s, slow branch) that produces the given beta.
pub fn omega_r_for_beta(beta: f64, bz: f64, omega_z: f64, species: &IonSpecies) -> Result<f64> {
    let omega_c = species.charge * bz / species.mass;
    let disc = omega_c * omega_c - 4.0 * (beta + 0.5) * omega_z * omega_z;
    if beta <= 0.0 || disc < 0.0 {
        return Err(Error::InvalidConfig(format!("beta = {beta} is not reachable")));
    }
    Ok(0.5 * (omega_c - disc.sqrt()))
}

/// Converts the quartic electrode voltage `v4` (V) at electrode scale `d` (m)
/// into the dimensionless C4.
///
/// Obtained by matching the electrode multipole term e V4 / d^4 against
/// the quartic potential (1/2) m omega_z^2 beta C4 / r_p0^2. The proportionality
/// should be calibrated for a real electrode stack.
pub fn c4_from_electrode_voltage(v4: f64, d: f64, trap: &TrapConfig, species: &IonSpecies) -> Result<f64> {
    let (scale, _) = c4_scale(d, trap, species)?;
    Ok(v4 * scale)
}

/// Inverse of [`c4_from_electrode_voltage`].
pub fn electrode_voltage_from_c4(c4: f64, d: f64, trap: &TrapConfig, species: &IonSpecies) -> Result<f64> {
    let (scale, _) = c4_scale(d, trap, species)?;
    Ok(c4 / scale)
}

fn c4_scale(d: f64, trap: &TrapConfig, species: &IonSpecies) -> Result<(f64, DerivedParams)> {
    if !(d > 0.0) {
        return Err(Error::InvalidConfig(format!("electrode scale must be positive, got {d}")));
    }
    let p = derive_parameters(trap, species)?;
    if p.beta.abs() < 1e-12 {
        return Err(Error::BetaZero);
    }
    let scale = 2.0 * species.charge * p.r_p0 * p.r_p0
        / (species.mass * trap.omega_z * trap.omega_z * p.beta * d.powi(4));
    Ok((scale, p))
}

/// Potential coefficients in scaled units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaledPotential {
    pub beta: f64,
    pub delta: f64,
    /// beta C4 (l0 / r_p0)^2
    pub c4s: f64,
}

/// A validated trap together with its species and derived quantities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trap {
    pub config: TrapConfig,
    pub species: IonSpecies,
    pub derived: DerivedParams,
}

impl Trap {
    pub fn new(config: TrapConfig, species: IonSpecies) -> Result<Self> {
        let derived = derive_parameters(&config, &species)?;
        Ok(Self { config, species, derived })
    }

    pub fn n_ions(&self) -> usize {
        self.config.n_ions
    }

    pub fn scaled(&self) -> ScaledPotential {
        let d = &self.derived;
        let ratio = d.l0 / d.r_p0;
        ScaledPotential {
            beta: d.beta,
            delta: self.config.delta_wall,
            c4s: d.beta * self.config.c4 * ratio * ratio,
        }
    }

    /// Lorentz coupling omega_c' / omega_z in scaled time.
    pub fn gyro(&self) -> f64 {
        self.derived.omega_c_prime / self.config.omega_z
    }

    /// Same trap with a different ion number, re-deriving every scale.
    pub fn with_n_ions(&self, n: usize) -> Result<Self> {
        let mut config = self.config.clone();
        config.n_ions = n;
        Self::new(config, self.species.clone())
    }

    pub fn with_c4(&self, c4: f64) -> Result<Self> {
        let mut config = self.config.clone();
        config.c4 = c4;
        Self::new(config, self.species.clone())
    }

    pub fn with_omega_r(&self, omega_r: f64) -> Result<Self> {
        let mut config = self.config.clone();
        config.omega_r = omega_r;
        Self::new(config, self.species.clone())
    }
}
