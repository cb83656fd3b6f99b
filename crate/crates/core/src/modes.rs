//! Linearized motion about an equilibrium: stiffness, normal modes,
//! per-mode metrics and quantization.
//!
//! Everything is solved in scaled units (length `l0`, time `1/omega_z`, unit
//! mass), where the equations of motion read `x'' = -K x + g G x'` with
//! `K = Hess(U/E0) / 2`, `g = omega_c' / omega_z` and `G` the in-plane
//! rotation generator. Eigenvectors `u` satisfy
//! `w^2 u - i w g G u - K u = 0`.

use faer::{Mat, Side};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::constants::{HBAR, TWO_PI};
use crate::crystal::{CrystalState, Layer};
use crate::error::{Error, Result};
use crate::trap::Trap;

/// Frequencies closer than this (relative) are treated as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-9;
/// Largest tolerated relative imaginary part of an eigenfrequency.
pub const TOL_STABILITY: f64 = 1e-6;

/// Stiffness matrix `K`, in units of `m omega_z^2`, row-major `3N x 3N`.
#[derive(Clone, Debug, PartialEq)]
pub struct Stiffness {
    pub n_ions: usize,
    pub data: Vec<f64>,
}

impl Stiffness {
    pub fn dim(&self) -> usize {
        3 * self.n_ions
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.data[a * self.dim() + b]
    }

    pub fn apply(&self, u: &[C64]) -> Vec<C64> {
        let m = self.dim();
        (0..m)
            .map(|a| {
                let row = &self.data[a * m..(a + 1) * m];
                row.iter().zip(u).map(|(k, v)| v * *k).sum()
            })
            .collect()
    }

    /// `<u|K|v>`
    pub fn form(&self, u: &[C64], v: &[C64]) -> C64 {
        inner(u, &self.apply(v))
    }

    /// Same matrix in N/m.
    pub fn to_si(&self, trap: &Trap) -> Vec<f64> {
        let s = trap.species.mass * trap.config.omega_z * trap.config.omega_z;
        self.data.iter().map(|v| v * s).collect()
    }
}

/// `<u|v>` with the standard Hermitian inner product.
pub fn inner(u: &[C64], v: &[C64]) -> C64 {
    u.iter().zip(v).map(|(a, b)| a.conj() * b).sum()
}

fn norm2(u: &[C64]) -> f64 {
    u.iter().map(|c| c.norm_sqr()).sum()
}

pub fn stiffness_matrix(state: &CrystalState) -> Result<Stiffness> {
    let mut data = state.trap.scaled().hessian(&state.positions)?;
    data.iter_mut().for_each(|v| *v *= 0.5);
    Ok(Stiffness { n_ions: state.n_ions(), data })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Branch {
    ExB,
    Drumhead,
    Cyclotron,
}

impl Branch {
    pub fn name(self) -> &'static str {
        match self {
            Branch::ExB => "ExB",
            Branch::Drumhead => "Drumhead",
            Branch::Cyclotron => "Cyclotron",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mode {
    /// rad/s
    pub omega: f64,
    /// Position part of the eigenvector, unit norm, ordered x1, y1, z1, ...
    pub vector: Vec<C64>,
    pub branch: Branch,
}

impl Mode {
    pub fn freq_hz(&self) -> f64 {
        self.omega / TWO_PI
    }

    /// Axial component on ion `j`.
    pub fn z(&self, j: usize) -> C64 {
        self.vector[3 * j + 2]
    }

    /// Velocity part `-i omega u`, in rad/s times the position part.
    pub fn velocity(&self) -> Vec<C64> {
        let f = C64::new(0.0, -self.omega);
        self.vector.iter().map(|u| u * f).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModeSet {
    /// Ascending in frequency, `3N` entries.
    pub modes: Vec<Mode>,
    pub n_ions: usize,
    /// rad/s
    pub omega_z: f64,
    /// rad/s
    pub omega_c_prime: f64,
    /// kg
    pub mass: f64,
    /// Consistency warnings from branch labeling.
    pub warnings: Vec<String>,
}

impl ModeSet {
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Frequency in units of omega_z.
    pub fn scaled_omega(&self, n: usize) -> f64 {
        self.modes[n].omega / self.omega_z
    }

    pub fn branch_indices(&self, b: Branch) -> Vec<usize> {
        (0..self.len()).filter(|&n| self.modes[n].branch == b).collect()
    }

    /// Largest normwise backward error of the quadratic eigen equation. Each
    /// residual is scaled by the sizes of the inertial, gyroscopic and
    /// stiffness terms so slow modes are not penalised for roundoff in `K u`.
    pub fn max_residual(&self, k: &Stiffness) -> f64 {
        let g = self.omega_c_prime / self.omega_z;
        (0..self.len())
            .map(|n| {
                let w = self.scaled_omega(n);
                let u = &self.modes[n].vector;
                let ku = k.apply(u);
                let mut r = 0.0;
                for j in 0..self.n_ions {
                    let (ux, uy) = (u[3 * j], u[3 * j + 1]);
                    let gu = [uy, -ux, C64::new(0.0, 0.0)];
                    for a in 0..3 {
                        let e = u[3 * j + a] * (w * w) - C64::new(0.0, w * g) * gu[a] - ku[3 * j + a];
                        r += e.norm_sqr();
                    }
                }
                let nu = norm2(u).sqrt();
                let nku = norm2(&ku).sqrt();
                r.sqrt() / ((w * w + w * g.abs()) * nu + nku)
            })
            .fold(0.0, f64::max)
    }

    /// Multiplies eigenvector `n` by a global phase.
    pub fn rotate_phase(&mut self, n: usize, chi: f64) {
        let p = C64::from_polar(1.0, chi);
        self.modes[n].vector.iter_mut().for_each(|v| *v *= p);
    }

    pub fn to_csv(&self, metrics: &[ModeMetrics]) -> String {
        let mut s = String::from("index,freq_hz,branch,f_z,R,I,l0_nm\n");
        for (n, (m, q)) in self.modes.iter().zip(metrics).enumerate() {
            s.push_str(&format!(
                "{},{:.6},{},{:.9},{:.9},{:.9},{:.9}\n",
                n,
                m.freq_hz(),
                m.branch.name(),
                q.f_z,
                q.r,
                q.i,
                q.l0 * 1e9
            ));
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModeFile {
            ordering: "x1,y1,z1,x2,...".into(),
            omega_z_hz: self.omega_z / TWO_PI,
            omega_c_prime_hz: self.omega_c_prime / TWO_PI,
            mass_kg: self.mass,
            modes: self
                .modes
                .iter()
                .enumerate()
                .map(|(index, m)| ModeEntry {
                    index,
                    freq_hz: m.freq_hz(),
                    branch: m.branch,
                    vector: m.vector.iter().map(|c| [c.re, c.im]).collect(),
                })
                .collect(),
        };
        Ok(serde_json::to_string(&file)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: ModeFile = serde_json::from_str(text)?;
        let n3 = f.modes.first().map_or(0, |m| m.vector.len());
        if n3 % 3 != 0 || f.modes.iter().any(|m| m.vector.len() != n3) {
            return Err(Error::Shape("ragged eigenvector archive".into()));
        }
        Ok(Self {
            modes: f
                .modes
                .into_iter()
                .map(|m| Mode {
                    omega: TWO_PI * m.freq_hz,
                    vector: m.vector.into_iter().map(|[re, im]| C64::new(re, im)).collect(),
                    branch: m.branch,
                })
                .collect(),
            n_ions: n3 / 3,
            omega_z: TWO_PI * f.omega_z_hz,
            omega_c_prime: TWO_PI * f.omega_c_prime_hz,
            mass: f.mass_kg,
            warnings: Vec::new(),
        })
    }
}

#[derive(Serialize, Deserialize)]
struct ModeEntry {
    index: usize,
    freq_hz: f64,
    branch: Branch,
    vector: Vec<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
struct ModeFile {
    ordering: String,
    omega_z_hz: f64,
    omega_c_prime_hz: f64,
    mass_kg: f64,
    modes: Vec<ModeEntry>,
}

/// Solves the gyroscopic eigenproblem for all `3N` positive frequencies.
///
/// For a positive semidefinite `K` the first-order system is brought to
/// Hermitian form with the energy-weighted variables `(K^{1/2} x, v)`, which
/// keeps eigenvalues exactly real. An indefinite `K` (gyroscopically
/// stabilized or unstable) goes through a general real eigensolver instead.
pub fn solve_modes(k: &Stiffness, trap: &Trap) -> Result<ModeSet> {
    let m = k.dim();
    if m != 3 * trap.n_ions() {
        return Err(Error::Shape(format!("stiffness of dimension {m} for {} ions", trap.n_ions())));
    }
    let g = trap.gyro();
    let kmat = Mat::<f64>::from_fn(m, m, |a, b| k.get(a, b));
    let evd = kmat
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Shape(format!("stiffness eigendecomposition failed: {e:?}")))?;
    let lam: Vec<f64> = (0..m).map(|i| evd.S()[i]).collect();
    let scale = lam.iter().fold(0.0_f64, |a, l| a.max(l.abs()));
    let raw = if lam[0] >= -1e-10 * scale {
        hermitian_route(&evd.U(), &lam, g)?
    } else {
        general_route(k, g)?
    };
    let mut pairs = raw;
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (i, (w, _)) in pairs.iter().enumerate() {
        if *w < 1e-7 {
            return Err(Error::ZeroFrequencyMode { index: i });
        }
    }
    let mut vecs: Vec<Vec<C64>> = pairs.iter().map(|p| p.1.clone()).collect();
    let omegas: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    fix_degenerate_clusters(&omegas, &mut vecs, k.n_ions);
    for v in &mut vecs {
        normalize_and_fix_phase(v);
    }
    let n = k.n_ions;
    let modes: Vec<Mode> = omegas
        .iter()
        .zip(vecs)
        .enumerate()
        .map(|(i, (w, v))| Mode {
            omega: w * trap.config.omega_z,
            vector: v,
            branch: match i / n {
                0 => Branch::ExB,
                1 => Branch::Drumhead,
                _ => Branch::Cyclotron,
            },
        })
        .collect();
    let mut set = ModeSet {
        modes,
        n_ions: n,
        omega_z: trap.config.omega_z,
        omega_c_prime: trap.derived.omega_c_prime,
        mass: trap.species.mass,
        warnings: Vec::new(),
    };
    set.warnings = branch_warnings(&set);
    for w in &set.warnings {
        log::warn!("{w}");
    }
    Ok(set)
}

type RawModes = Vec<(f64, Vec<C64>)>;

fn hermitian_route(v: &faer::MatRef<'_, f64>, lam: &[f64], g: f64) -> Result<RawModes> {
    let m = lam.len();
    let sq: Vec<f64> = lam.iter().map(|l| l.max(0.0).sqrt()).collect();
    // K^{1/2} = V diag(sqrt(lam)) V^T
    let vs = Mat::<f64>::from_fn(m, m, |a, i| v[(a, i)] * sq[i]);
    let khalf = &vs * v.transpose();
    let zero = C64::new(0.0, 0.0);
    // H = i S, S = [[0, K^1/2], [-K^1/2, g G]]
    let h = Mat::<C64>::from_fn(2 * m, 2 * m, |r, c| match (r < m, c < m) {
        (true, true) => zero,
        (true, false) => C64::new(0.0, khalf[(r, c - m)]),
        (false, true) => C64::new(0.0, -khalf[(r - m, c)]),
        (false, false) => {
            let (a, b) = (r - m, c - m);
            if a / 3 != b / 3 {
                return zero;
            }
            match (a % 3, b % 3) {
                (0, 1) => C64::new(0.0, g),
                (1, 0) => C64::new(0.0, -g),
                _ => zero,
            }
        }
    });
    let evd = h
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Shape(format!("mode eigendecomposition failed: {e:?}")))?;
    let u = evd.U();
    let mut out = Vec::with_capacity(m);
    for i in m..2 * m {
        let w = evd.S()[i].re;
        // position part from the velocity block: u = i v / w
        let vec: Vec<C64> = (0..m).map(|a| C64::new(0.0, 1.0) * u[(m + a, i)] / w.max(1e-300)).collect();
        out.push((w, vec));
    }
    Ok(out)
}

fn general_route(k: &Stiffness, g: f64) -> Result<RawModes> {
    let m = k.dim();
    // w' = A w with w = (x, v), A = [[0, I], [-K, g G]]
    let a = Mat::<f64>::from_fn(2 * m, 2 * m, |r, c| match (r < m, c < m) {
        (true, true) => 0.0,
        (true, false) => f64::from(r == c - m),
        (false, true) => -k.get(r - m, c),
        (false, false) => {
            let (p, q) = (r - m, c - m);
            if p / 3 != q / 3 {
                0.0
            } else {
                match (p % 3, q % 3) {
                    (0, 1) => g,
                    (1, 0) => -g,
                    _ => 0.0,
                }
            }
        }
    });
    let evd = a
        .eigen()
        .map_err(|e| Error::Shape(format!("mode eigendecomposition failed: {e:?}")))?;
    let mut out = Vec::with_capacity(m);
    let mut bad = 0usize;
    let mut worst = 0.0_f64;
    for i in 0..2 * m {
        let lam = evd.S()[i];
        // lambda = -i w
        let w = C64::new(0.0, 1.0) * lam;
        let ratio = w.im.abs() / w.norm().max(1e-300);
        if ratio > TOL_STABILITY {
            bad += 1;
            worst = worst.max(ratio);
            continue;
        }
        if w.re > 0.0 {
            out.push((w.re, (0..m).map(|r| evd.U()[(r, i)]).collect()));
        }
    }
    if bad > 0 {
        return Err(Error::UnstableEquilibrium { count: bad, max_ratio: worst });
    }
    if out.len() != m {
        return Err(Error::UnstableEquilibrium { count: 2 * m - 2 * out.len(), max_ratio: worst });
    }
    Ok(out)
}

/// Unit norm, with the largest component (first one on near ties) real positive.
fn normalize_and_fix_phase(v: &mut [C64]) {
    let n = norm2(v).sqrt();
    v.iter_mut().for_each(|c| *c /= n);
    let big = v.iter().fold(0.0_f64, |a, c| a.max(c.norm()));
    let pivot = v.iter().position(|c| c.norm() >= big * (1.0 - 1e-9)).unwrap_or(0);
    let p = v[pivot].conj() / v[pivot].norm();
    v.iter_mut().for_each(|c| *c *= p);
    v[pivot] = C64::new(v[pivot].re, 0.0);
}

/// Rotates each degenerate cluster onto eigenvectors of an angular-momentum
/// like Hermitian operator so chiral partners come out in a fixed basis.
fn fix_degenerate_clusters(omegas: &[f64], vecs: &mut [Vec<C64>], n_ions: usize) {
    let mut start = 0;
    while start < omegas.len() {
        let mut end = start + 1;
        while end < omegas.len() && (omegas[end] - omegas[start]).abs() <= DEGENERACY_TOL * omegas[start].abs() {
            end += 1;
        }
        if end - start > 1 {
            rotate_cluster(&mut vecs[start..end], n_ions);
        }
        start = end;
    }
}

fn angular_op(u: &[C64]) -> Vec<C64> {
    // (L u)_j = -i z x u_j : generator of in-plane rotations of the displacement
    let mut out = vec![C64::new(0.0, 0.0); u.len()];
    let mi = C64::new(0.0, -1.0);
    for j in 0..u.len() / 3 {
        out[3 * j] = mi * (-u[3 * j + 1]);
        out[3 * j + 1] = mi * u[3 * j];
    }
    out
}

fn rotate_cluster(vs: &mut [Vec<C64>], _n_ions: usize) {
    let d = vs.len();
    // orthonormalize (modified Gram-Schmidt)
    for a in 0..d {
        for b in 0..a {
            let p = inner(&vs[b], &vs[a]);
            let (head, tail) = vs.split_at_mut(a);
            for (x, y) in tail[0].iter_mut().zip(&head[b]) {
                *x -= p * y;
            }
        }
        let n = norm2(&vs[a]).sqrt();
        vs[a].iter_mut().for_each(|c| *c /= n);
    }
    let lv: Vec<Vec<C64>> = vs.iter().map(|v| angular_op(v)).collect();
    let m = Mat::<C64>::from_fn(d, d, |a, b| inner(&vs[a], &lv[b]));
    let Ok(evd) = m.self_adjoint_eigen(Side::Lower) else { return };
    let q = evd.U();
    let len = vs[0].len();
    let rotated: Vec<Vec<C64>> = (0..d)
        .map(|c| (0..len).map(|i| (0..d).map(|a| vs[a][i] * q[(a, c)]).sum()).collect())
        .collect();
    for (v, r) in vs.iter_mut().zip(rotated) {
        *v = r;
    }
}

fn branch_warnings(set: &ModeSet) -> Vec<String> {
    let n = set.n_ions;
    let mut w = Vec::new();
    let mut misfit = 0;
    for (i, m) in set.modes.iter().enumerate() {
        let fz = axial_fraction(&m.vector);
        let drum = i / n == 1;
        if drum != (fz > 0.5) {
            misfit += 1;
        }
    }
    if misfit > 0 {
        w.push(format!(
            "{misfit} mode(s) have an axial fraction inconsistent with their index-thirds branch label"
        ));
    }
    if n > 0 && set.len() == 3 * n {
        let top_drum = set.modes[2 * n - 1].omega;
        let low_cyc = set.modes[2 * n].omega;
        if set.omega_c_prime > 0.0 && top_drum > set.omega_c_prime {
            w.push("highest drumhead mode lies above the effective cyclotron frequency".into());
        }
        if low_cyc < set.omega_z {
            w.push("lowest cyclotron-branch mode lies below the axial frequency".into());
        }
    }
    w
}

fn axial_fraction(u: &[C64]) -> f64 {
    let z: f64 = u.iter().skip(2).step_by(3).map(|c| c.norm_sqr()).sum();
    z / norm2(u)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeMetrics {
    /// Axial share of the motion.
    pub f_z: f64,
    /// Potential to kinetic energy ratio.
    pub r: f64,
    /// Mode complexity, 0 for standing waves and 1 for circular motion.
    pub i: f64,
    /// Zero-point length, m.
    pub l0: f64,
    /// `l0 / sqrt(<u|u>)`, m.
    pub c: f64,
}

/// Complexity `(|<u|u>| - |<u|u*>|) / (|<u|u>| + |<u|u*>|)`.
pub fn complexity(u: &[C64]) -> f64 {
    let a = norm2(u);
    let b: C64 = u.iter().map(|c| c * c).sum();
    (a - b.norm()) / (a + b.norm())
}

pub fn mode_metrics(modes: &ModeSet, k: &Stiffness) -> Vec<ModeMetrics> {
    let hbar_over_m = HBAR / modes.mass;
    (0..modes.len())
        .map(|n| {
            let u = &modes.modes[n].vector;
            let w = modes.scaled_omega(n);
            let uu = norm2(u);
            let r = k.form(u, u).re / (w * w * uu);
            let (l0, c) = quantize(hbar_over_m, modes.modes[n].omega, r, uu);
            ModeMetrics { f_z: axial_fraction(u), r, i: complexity(u), l0, c }
        })
        .collect()
}

fn quantize(hbar_over_m: f64, omega: f64, r: f64, uu: f64) -> (f64, f64) {
    let l0 = (hbar_over_m / (omega * (1.0 + r))).sqrt();
    (l0, l0 / uu.sqrt())
}

/// Zero-point lengths `(l0n, c_n)` in meters.
pub fn quantize_modes(modes: &ModeSet, metrics: &[ModeMetrics], mass: f64) -> Vec<(f64, f64)> {
    modes
        .modes
        .iter()
        .zip(metrics)
        .map(|(m, q)| quantize(HBAR / mass, m.omega, q.r, norm2(&m.vector)))
        .collect()
}

/// Deviation from one of the canonical commutator sum for every ion and axis.
pub fn commutation_sum_check(modes: &ModeSet, k: &Stiffness) -> Vec<f64> {
    commutation_sum_excluding(modes, k, None)
}

/// As [`commutation_sum_check`], optionally leaving one mode out of the sum.
pub fn commutation_sum_excluding(modes: &ModeSet, k: &Stiffness, skip: Option<usize>) -> Vec<f64> {
    let m = k.dim();
    let mut sums = vec![0.0; m];
    for n in 0..modes.len() {
        if Some(n) == skip {
            continue;
        }
        let u = &modes.modes[n].vector;
        let w2 = modes.scaled_omega(n).powi(2);
        let conj: Vec<C64> = u.iter().map(|c| c.conj()).collect();
        let kc = k.apply(&conj);
        let denom = k.form(u, u).re + w2 * norm2(u);
        for a in 0..m {
            sums[a] += (w2 * u[a].norm_sqr() + (u[a] * kc[a]).re) / denom;
        }
    }
    sums.into_iter().map(|s| s - 1.0).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpecialModes {
    pub center_of_mass: usize,
    pub breathing: Option<usize>,
    pub top_drumhead: usize,
    /// Hz, distance of the c.m. mode to its nearest drumhead neighbour.
    pub cm_gap_hz: f64,
    /// Hz, distance of the breathing mode to its nearest drumhead neighbour.
    pub breathing_gap_hz: Option<f64>,
    /// Hz
    pub cm_to_breathing_hz: Option<f64>,
}

impl SpecialModes {
    pub fn breathing(&self) -> Result<usize> {
        self.breathing.ok_or(Error::NotBilayer { clusters: 1 })
    }
}

pub fn identify_special_modes(modes: &ModeSet, state: &CrystalState) -> Result<SpecialModes> {
    let drum = modes.branch_indices(Branch::Drumhead);
    if drum.is_empty() {
        return Err(Error::Shape("no drumhead modes".into()));
    }
    let overlap = |n: usize, w: &dyn Fn(usize) -> f64| -> f64 {
        let m = &modes.modes[n];
        (0..modes.n_ions).map(|j| m.z(j) * w(j)).sum::<C64>().norm()
    };
    let argmax = |w: &dyn Fn(usize) -> f64| -> usize {
        let mut best = drum[0];
        let mut bv = f64::NEG_INFINITY;
        for &n in &drum {
            let v = overlap(n, w);
            if v > bv {
                bv = v;
                best = n;
            }
        }
        best
    };
    let cm = argmax(&|_| 1.0);
    let gap = |n: usize| -> f64 {
        drum.iter()
            .filter(|&&o| o != n)
            .map(|&o| (modes.modes[o].omega - modes.modes[n].omega).abs())
            .fold(f64::INFINITY, f64::min)
            / TWO_PI
    };
    let breathing = match state.layers.as_deref() {
        Some(l) if l.contains(&Layer::Upper) && l.contains(&Layer::Lower) => Some(argmax(&|j| l[j].sign())),
        _ => None,
    };
    Ok(SpecialModes {
        center_of_mass: cm,
        breathing,
        top_drumhead: *drum.last().unwrap(),
        cm_gap_hz: gap(cm),
        breathing_gap_hz: breathing.map(gap),
        cm_to_breathing_hz: breathing.map(|b| (modes.modes[b].omega - modes.modes[cm].omega) / TWO_PI),
    })
}
