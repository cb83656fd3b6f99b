use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::{check_inputs, CouplingMatrix, CouplingMeta, ModeSelection, OdfConfig, PhaseData, DELTA_MIN};
use crate::constants::HBAR;
use crate::crystal::Layer;
use crate::error::{Error, Result};
use crate::modes::{ModeMetrics, ModeSet, SpecialModes};
use crate::par;

/// One ODF lattice: force amplitude, beat-note frequency and lattice phase.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tone {
    pub force: f64,
    pub mu_r: f64,
    pub phase: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlphaSet {
    pub modes: Vec<usize>,
    /// `alpha[m][j]` for the m-th selected mode.
    pub alpha: Vec<Vec<C64>>,
    /// False when some `|delta_n|` is not small against `mu_r + omega_n`.
    pub rwa_ok: bool,
}

fn detuning(modes: &ModeSet, n: usize, mu_r: f64) -> Result<f64> {
    let d = mu_r - modes.modes[n].omega;
    if d.abs() < DELTA_MIN {
        return Err(Error::ResonantMode { index: n, detuning: d });
    }
    Ok(d)
}

/// `a_nj = u_nj^z e^{i phi_j} / sqrt(<u|u>)`, so that `conj(a_j) a_k = U e^{iD}`.
fn weighted_z(modes: &ModeSet, n: usize, phases: &PhaseData) -> Vec<C64> {
    let m = &modes.modes[n];
    let uu: f64 = m.vector.iter().map(|c| c.norm_sqr()).sum();
    let s = uu.sqrt().recip();
    (0..modes.n_ions).map(|j| m.z(j) * C64::from_polar(s, phases.phi[j])).collect()
}

/// Spin-motion displacement amplitudes after time `t` (s).
pub fn spin_motion_alpha(
    modes: &ModeSet,
    metrics: &[ModeMetrics],
    phases: &PhaseData,
    odf: &OdfConfig,
    t: f64,
    selection: &ModeSelection,
) -> Result<AlphaSet> {
    check_inputs(modes, metrics, phases)?;
    let idx = selection.resolve(modes)?;
    let mut rwa_ok = true;
    let mut alpha = Vec::with_capacity(idx.len());
    for &n in &idx {
        let d = detuning(modes, n, odf.mu_r)?;
        if d.abs() > 0.1 * (odf.mu_r + modes.modes[n].omega).abs() {
            rwa_ok = false;
        }
        let u = &modes.modes[n].vector;
        let norm = u.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let pre = odf.force * metrics[n].l0 / (2.0 * HBAR * d * norm) * (C64::from_polar(1.0, -t * d) - 1.0);
        alpha.push((0..modes.n_ions).map(|j| pre * modes.modes[n].z(j).conj() * C64::from_polar(1.0, -phases.phi[j])).collect());
    }
    Ok(AlphaSet { modes: idx, alpha, rwa_ok })
}

fn meta(kind: &str, modes: &ModeSet, idx: &[usize], mu_r: f64, t: f64) -> CouplingMeta {
    CouplingMeta {
        kind: kind.into(),
        units: "rad".into(),
        modes: idx.to_vec(),
        detunings: idx.iter().map(|&n| mu_r - modes.modes[n].omega).collect(),
        time: Some(t),
        note: None,
    }
}

/// Assembles `sum_n [c_n Re(conj(a_j) a_k) + s_n Im(conj(a_j) a_k)]` with a zero diagonal.
fn assemble(n_ions: usize, weights: &[(Vec<C64>, f64, f64)]) -> Vec<f64> {
    let rows = par::map_indices(n_ions, |j| {
        let mut row = vec![0.0; n_ions];
        for (a, c, s) in weights {
            let aj = a[j].conj();
            for (k, out) in row.iter_mut().enumerate() {
                let p = aj * a[k];
                *out += c * p.re + s * p.im;
            }
        }
        row[j] = 0.0;
        row
    });
    rows.concat()
}

/// Ising phases `Theta_jk(t)` including the spin-motion transient.
pub fn ising_couplings(
    modes: &ModeSet,
    metrics: &[ModeMetrics],
    phases: &PhaseData,
    odf: &OdfConfig,
    t: f64,
    selection: &ModeSelection,
) -> Result<CouplingMatrix> {
    check_inputs(modes, metrics, phases)?;
    let idx = selection.resolve(modes)?;
    let mut w = Vec::with_capacity(idx.len());
    for &n in &idx {
        let d = detuning(modes, n, odf.mu_r)?;
        let amp = (odf.force * metrics[n].l0 / HBAR).powi(2) / (4.0 * d * d);
        let x = d * t;
        w.push((weighted_z(modes, n, phases), amp * (x - x.sin()), amp * (1.0 - x.cos())));
    }
    let re = assemble(modes.n_ions, &w);
    Ok(CouplingMatrix::from_real(modes.n_ions, re, meta("ising_theta", modes, &idx, odf.mu_r, t)))
}

/// Ising phases at a decoupling time, where the transient terms vanish.
pub fn ising_decoupled(
    modes: &ModeSet,
    metrics: &[ModeMetrics],
    phases: &PhaseData,
    odf: &OdfConfig,
    tau: f64,
    selection: &ModeSelection,
) -> Result<CouplingMatrix> {
    check_inputs(modes, metrics, phases)?;
    let idx = selection.resolve(modes)?;
    let mut w = Vec::with_capacity(idx.len());
    for &n in &idx {
        let d = detuning(modes, n, odf.mu_r)?;
        let amp = (odf.force * metrics[n].l0 / HBAR).powi(2) / (4.0 * d) * tau;
        w.push((weighted_z(modes, n, phases), amp, 0.0));
    }
    let re = assemble(modes.n_ions, &w);
    let mut m = CouplingMatrix::from_real(modes.n_ions, re, meta("ising_theta", modes, &idx, odf.mu_r, tau));
    m.meta.note = Some("decoupling-time closed form".into());
    Ok(m)
}

/// `(e^{i nu t} - 1) / (i nu)`, continuous through `nu = 0`.
fn phase_integral(nu: f64, t: f64) -> C64 {
    let x = nu * t;
    if x.abs() < 1e-3 {
        // t * sum (i x)^m / (m+1)!
        let ix = C64::new(0.0, x);
        let mut term = C64::new(1.0, 0.0);
        let mut sum = term;
        for m in 1..8 {
            term *= ix / (m as f64 + 1.0);
            sum += term;
        }
        sum * t
    } else {
        (C64::from_polar(1.0, x) - 1.0) / C64::new(0.0, nu)
    }
}

/// `int_0^t dt1 int_0^t1 dt2 exp(i (a t1 - b t2))` for `b != 0`.
fn double_integral(a: f64, b: f64, t: f64) -> C64 {
    (phase_integral(a, t) - phase_integral(a - b, t)) / C64::new(0.0, b)
}

/// Ising phases for any number of simultaneous lattices, from the exact
/// second-order Magnus term. Cross terms between tones are kept.
pub fn multitone_ising(
    modes: &ModeSet,
    metrics: &[ModeMetrics],
    phases: &PhaseData,
    tones: &[Tone],
    t: f64,
    selection: &ModeSelection,
) -> Result<CouplingMatrix> {
    check_inputs(modes, metrics, phases)?;
    if tones.is_empty() {
        return Err(Error::InvalidConfig("at least one ODF tone is required".into()));
    }
    let idx = selection.resolve(modes)?;
    let mut w = Vec::with_capacity(idx.len());
    for &n in &idx {
        let dets = tones.iter().map(|tn| detuning(modes, n, tn.mu_r)).collect::<Result<Vec<_>>>()?;
        let mut q = C64::new(0.0, 0.0);
        for (g, tg) in tones.iter().enumerate() {
            for (h, th) in tones.iter().enumerate() {
                let ph = C64::from_polar(tg.force * th.force, tg.phase - th.phase);
                q += ph * double_integral(dets[g], dets[h], t);
            }
        }
        let amp = (metrics[n].l0 / HBAR).powi(2) / 4.0;
        // Theta_jk = amp Im(P_jk q) with P_jk = conj(a_j) a_k
        w.push((weighted_z(modes, n, phases), amp * q.im, amp * q.re));
    }
    let re = assemble(modes.n_ions, &w);
    let mut m = CouplingMatrix::from_real(modes.n_ions, re, meta("ising_theta", modes, &idx, tones[0].mu_r, t));
    m.meta.note = Some(format!("{} tones, full Magnus", tones.len()));
    Ok(m)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TwoToneResult {
    /// Centre-of-mass plus breathing composition at the decoupling time, rad.
    pub theta: CouplingMatrix,
    /// Frobenius norm of everything the composition leaves out, relative to it.
    pub cross_term: f64,
}

/// Two-lattice Ising phases: tone 0 drives the centre-of-mass mode and the
/// second tone of `odf` drives the breathing mode with equal |detuning|.
pub fn two_tone_couplings(
    modes: &ModeSet,
    metrics: &[ModeMetrics],
    phases: &PhaseData,
    odf: &OdfConfig,
    special: &SpecialModes,
    tau: f64,
) -> Result<TwoToneResult> {
    check_inputs(modes, metrics, phases)?;
    let cm = special.center_of_mass;
    let bre = special.breathing()?;
    let second = odf.second_tone.ok_or_else(|| Error::InvalidConfig("two-tone drive needs a second tone".into()))?;
    let d0 = detuning(modes, cm, odf.mu_r)?;
    let d1 = detuning(modes, bre, second.mu_r)?;
    if (d0.abs() - d1.abs()).abs() > 1e-6 * d0.abs() {
        return Err(Error::DetuningMismatch { delta0: d0, delta1: d1 });
    }
    let az0 = weighted_z(modes, cm, phases);
    let az1 = weighted_z(modes, bre, phases);
    let c0 = (odf.force * metrics[cm].l0 / HBAR).powi(2) / (4.0 * d0) * tau;
    let c1 = (second.force * metrics[bre].l0 / HBAR).powi(2) / (4.0 * d1) * tau;
    let mut weights = vec![(az0, c0, 0.0)];
    if second.force != 0.0 {
        weights.push((az1, c1, 0.0));
    }
    let re = assemble(modes.n_ions, &weights);
    let mut theta = CouplingMatrix::from_real(
        modes.n_ions,
        re,
        CouplingMeta {
            kind: "ising_theta".into(),
            units: "rad".into(),
            modes: vec![cm, bre],
            detunings: vec![d0, d1],
            time: Some(tau),
            note: Some("two-tone composition".into()),
        },
    );
    let tones = [
        Tone { force: odf.force, mu_r: odf.mu_r, phase: 0.0 },
        Tone { force: second.force, mu_r: second.mu_r, phase: second.phase },
    ];
    let full = multitone_ising(modes, metrics, phases, &tones, tau, &ModeSelection::Only(vec![cm, bre]))?;
    let diff: f64 = full.re.iter().zip(&theta.re).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let base: f64 = theta.re.iter().map(|v| v * v).sum::<f64>().sqrt();
    let cross_term = if base > 0.0 { diff / base } else { 0.0 };
    if cross_term > 0.05 {
        theta.meta.note = Some(format!("two-tone composition; cross terms are {:.1}% of the result", 100.0 * cross_term));
    }
    Ok(TwoToneResult { theta, cross_term })
}

/// Ratio of the interlayer to the mean intralayer Frobenius norms.
/// Scaffold ions are left out.
pub fn j_rel(j: &CouplingMatrix, labels: &[Layer]) -> Result<f64> {
    if labels.len() != j.n {
        return Err(Error::Shape("one layer label per ion is required".into()));
    }
    let count = |l: Layer| labels.iter().filter(|&&x| x == l).count();
    if count(Layer::Upper) == 0 || count(Layer::Lower) == 0 {
        return Err(Error::NotBilayer { clusters: 1 });
    }
    let ud = j.block_frobenius(labels, Layer::Upper, Layer::Lower);
    let uu = j.block_frobenius(labels, Layer::Upper, Layer::Upper);
    let dd = j.block_frobenius(labels, Layer::Lower, Layer::Lower);
    Ok(2.0 * ud / (uu + dd))
}
