//! CODATA 2018 constants in SI units.

pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
pub const COULOMB_CONSTANT: f64 = 8.987_551_792_3e9;
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;
pub const HBAR: f64 = 1.054_571_817e-34;
pub const BOLTZMANN: f64 = 1.380_649e-23;

pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;
